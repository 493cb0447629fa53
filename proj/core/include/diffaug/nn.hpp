#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "diffaug/checkpoint.hpp"
#include "diffaug/rng.hpp"
#include "diffaug/tensor.hpp"

namespace diffaug {

// Ordered collection of named trainable tensors. Construction order defines
// both the optimizer parameter order and the checkpoint array order, so a
// model rebuilt from the same config maps one-to-one onto a saved state.
class ParamSet {
 public:
    // Gaussian init with the given stddev. Always consumes size(shape) draws
    // from rng (even for stddev 0) so the stream layout does not depend on
    // init choices. Duplicate names throw ContractError.
    Tensor add(const std::string& name, const Shape& shape, double stddev,
               Rng& rng);
    // Constant init, no rng draws (norm gains, biases).
    Tensor add_const(const std::string& name, const Shape& shape, double fill);

    const std::vector<std::pair<std::string, Tensor>>& entries() const {
        return entries_;
    }
    std::vector<Tensor> tensors() const;
    size_t scalar_count() const;

    // Writes every tensor as prefix+name. Loading requires exact name and
    // shape agreement and clears gradients.
    void save(CheckpointWriter& w, const std::string& prefix) const;
    void load(const Checkpoint& c, const std::string& prefix);

 private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::set<std::string> names_;
};

// y = x w + b with w (in,out). Xavier-scaled init; std_scale 0 gives a
// zero-initialized layer.
struct Linear {
    Tensor w, b;
    Linear() = default;
    Linear(ParamSet& ps, const std::string& name, size_t in, size_t out,
           Rng& rng, double std_scale = 1.0);
    Tensor forward(const Tensor& x) const;
};

// NCHW convolution layer, He init on the kernel.
struct Conv2dLayer {
    Tensor w, b;
    size_t stride = 1;
    size_t pad = 0;
    Conv2dLayer() = default;
    Conv2dLayer(ParamSet& ps, const std::string& name, size_t in_ch,
                size_t out_ch, size_t k, size_t stride, size_t pad, Rng& rng,
                bool zero_init = false);
    Tensor forward(const Tensor& x) const;
};

struct GroupNormLayer {
    Tensor gamma, beta;
    size_t groups = 1;
    GroupNormLayer() = default;
    GroupNormLayer(ParamSet& ps, const std::string& name, size_t channels,
                   size_t groups);
    Tensor forward(const Tensor& x) const;
};

struct LayerNormLayer {
    Tensor gamma, beta;
    LayerNormLayer() = default;
    LayerNormLayer(ParamSet& ps, const std::string& name, size_t dim);
    Tensor forward(const Tensor& x) const;
};

// Multi-head attention over token matrices. forward(x) is self-attention;
// forward(q_in, kv_in) attends q_in over kv_in (cross-attention, pooling).
// dim must be divisible by heads.
struct MultiHeadAttention {
    Linear wq, wk, wv, wo;
    size_t heads = 1;
    size_t dim = 0;
    MultiHeadAttention() = default;
    MultiHeadAttention(ParamSet& ps, const std::string& name, size_t dim,
                       size_t heads, Rng& rng);
    Tensor forward(const Tensor& x) const;
    Tensor forward(const Tensor& q_in, const Tensor& kv_in) const;
};

// Pre-norm residual transformer block: attention then an MLP with SiLU.
struct TransformerBlock {
    LayerNormLayer ln1, ln2;
    MultiHeadAttention attn;
    Linear fc1, fc2;
    TransformerBlock() = default;
    TransformerBlock(ParamSet& ps, const std::string& name, size_t dim,
                     size_t heads, size_t mlp_ratio, Rng& rng);
    Tensor forward(const Tensor& x) const;
};

// Sinusoidal position features: [sin(t w_0).. sin(t w_{h-1}),
// cos(t w_0).. cos(t w_{h-1})] with w_i = 10000^(-i/h), h = dim/2.
// dim must be even and >= 2.
std::vector<double> sinusoidal_features(double t, size_t dim);

struct Image;

// Image in [0,1] <-> NCHW tensor of shape (1,1,h,w). tensor_to_image
// clamps to [0,1] and requires that shape.
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& x);

}  // namespace diffaug
