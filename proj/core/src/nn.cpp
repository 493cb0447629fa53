#include "diffaug/nn.hpp"

#include <cmath>

#include "diffaug/errors.hpp"
#include "diffaug/image_io.hpp"
#include "diffaug/ops.hpp"

namespace diffaug {

using namespace ops;

Tensor ParamSet::add(const std::string& name, const Shape& shape,
                     double stddev, Rng& rng) {
    if (!names_.insert(name).second) {
        throw ContractError("ParamSet: duplicate parameter '" + name + "'");
    }
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = stddev * rng.normal();
    Tensor t = Tensor::from(shape, std::move(data), true);
    entries_.emplace_back(name, t);
    return t;
}

Tensor ParamSet::add_const(const std::string& name, const Shape& shape,
                           double fill) {
    if (!names_.insert(name).second) {
        throw ContractError("ParamSet: duplicate parameter '" + name + "'");
    }
    Tensor t = Tensor::full(shape, fill, true);
    entries_.emplace_back(name, t);
    return t;
}

std::vector<Tensor> ParamSet::tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& [name, t] : entries_) out.push_back(t);
    return out;
}

size_t ParamSet::scalar_count() const {
    size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.size();
    return n;
}

void ParamSet::save(CheckpointWriter& w, const std::string& prefix) const {
    for (const auto& [name, t] : entries_) {
        w.add(prefix + name, t.shape(), t.value());
    }
}

void ParamSet::load(const Checkpoint& c, const std::string& prefix) {
    for (auto& [name, t] : entries_) {
        std::string key = prefix + name;
        if (!c.has(key)) {
            throw FormatError("checkpoint is missing array '" + key + "'");
        }
        if (c.shape(key) != t.shape()) {
            throw FormatError("checkpoint array '" + key +
                              "' has a different shape than the model");
        }
        t.value() = c.array(key);
        t.zero_grad();
    }
}

Linear::Linear(ParamSet& ps, const std::string& name, size_t in, size_t out,
               Rng& rng, double std_scale) {
    double stddev =
        std_scale * std::sqrt(2.0 / static_cast<double>(in + out));
    w = ps.add(name + ".w", {in, out}, stddev, rng);
    b = ps.add_const(name + ".b", {out}, 0.0);
}

Tensor Linear::forward(const Tensor& x) const {
    return add_bias_rows(matmul(x, w), b);
}

Conv2dLayer::Conv2dLayer(ParamSet& ps, const std::string& name, size_t in_ch,
                         size_t out_ch, size_t k, size_t stride_, size_t pad_,
                         Rng& rng, bool zero_init)
    : stride(stride_), pad(pad_) {
    double fan_in = static_cast<double>(in_ch * k * k);
    double stddev = zero_init ? 0.0 : std::sqrt(2.0 / fan_in);
    w = ps.add(name + ".w", {out_ch, in_ch, k, k}, stddev, rng);
    b = ps.add_const(name + ".b", {out_ch}, 0.0);
}

Tensor Conv2dLayer::forward(const Tensor& x) const {
    return conv2d(x, w, b, stride, pad);
}

GroupNormLayer::GroupNormLayer(ParamSet& ps, const std::string& name,
                               size_t channels, size_t groups_)
    : groups(groups_) {
    gamma = ps.add_const(name + ".gamma", {channels}, 1.0);
    beta = ps.add_const(name + ".beta", {channels}, 0.0);
}

Tensor GroupNormLayer::forward(const Tensor& x) const {
    return group_norm(x, gamma, beta, groups);
}

LayerNormLayer::LayerNormLayer(ParamSet& ps, const std::string& name,
                               size_t dim) {
    gamma = ps.add_const(name + ".gamma", {dim}, 1.0);
    beta = ps.add_const(name + ".beta", {dim}, 0.0);
}

Tensor LayerNormLayer::forward(const Tensor& x) const {
    return layer_norm(x, gamma, beta);
}

MultiHeadAttention::MultiHeadAttention(ParamSet& ps, const std::string& name,
                                       size_t dim_, size_t heads_, Rng& rng)
    : heads(heads_), dim(dim_) {
    if (heads == 0 || dim % heads != 0) {
        throw ContractError("MultiHeadAttention: dim " + std::to_string(dim) +
                            " not divisible by heads " +
                            std::to_string(heads));
    }
    wq = Linear(ps, name + ".wq", dim, dim, rng);
    wk = Linear(ps, name + ".wk", dim, dim, rng);
    wv = Linear(ps, name + ".wv", dim, dim, rng);
    wo = Linear(ps, name + ".wo", dim, dim, rng);
}

Tensor MultiHeadAttention::forward(const Tensor& x) const {
    return forward(x, x);
}

Tensor MultiHeadAttention::forward(const Tensor& q_in,
                                   const Tensor& kv_in) const {
    Tensor q = wq.forward(q_in);
    Tensor k = wk.forward(kv_in);
    Tensor v = wv.forward(kv_in);
    size_t dh = dim / heads;
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (size_t h = 0; h < heads; ++h) {
        Tensor qh = narrow_cols(q, h * dh, dh);
        Tensor kh = narrow_cols(k, h * dh, dh);
        Tensor vh = narrow_cols(v, h * dh, dh);
        outs.push_back(scaled_dot_attention(qh, kh, vh));
    }
    return wo.forward(heads == 1 ? outs[0] : concat_cols(outs));
}

TransformerBlock::TransformerBlock(ParamSet& ps, const std::string& name,
                                   size_t dim, size_t heads, size_t mlp_ratio,
                                   Rng& rng) {
    ln1 = LayerNormLayer(ps, name + ".ln1", dim);
    attn = MultiHeadAttention(ps, name + ".attn", dim, heads, rng);
    ln2 = LayerNormLayer(ps, name + ".ln2", dim);
    fc1 = Linear(ps, name + ".fc1", dim, dim * mlp_ratio, rng);
    fc2 = Linear(ps, name + ".fc2", dim * mlp_ratio, dim, rng);
}

Tensor TransformerBlock::forward(const Tensor& x) const {
    Tensor h = add(x, attn.forward(ln1.forward(x)));
    return add(h, fc2.forward(silu(fc1.forward(ln2.forward(h)))));
}

Tensor image_to_tensor(const Image& img) {
    return Tensor::from({1, 1, img.height, img.width}, img.pixels);
}

Image tensor_to_image(const Tensor& x) {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[0] != 1 || s[1] != 1) {
        throw ContractError("tensor_to_image: expected shape (1,1,h,w)");
    }
    Image img = make_image(s[2], s[3]);
    const std::vector<double>& v = x.value();
    for (size_t i = 0; i < v.size(); ++i) {
        img.pixels[i] = std::min(1.0, std::max(0.0, v[i]));
    }
    return img;
}

std::vector<double> sinusoidal_features(double t, size_t dim) {
    if (dim < 2 || dim % 2 != 0) {
        throw ContractError("sinusoidal_features: dim must be even and >= 2");
    }
    size_t half = dim / 2;
    std::vector<double> out(dim);
    for (size_t i = 0; i < half; ++i) {
        double w = std::pow(10000.0,
                            -static_cast<double>(i) / static_cast<double>(half));
        out[i] = std::sin(t * w);
        out[half + i] = std::cos(t * w);
    }
    return out;
}

}  // namespace diffaug
