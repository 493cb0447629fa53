#include "diffaug/optim.hpp"

#include <cmath>
#include <string>

#include "diffaug/errors.hpp"

namespace diffaug {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    if (params_.empty()) throw OptimizerError("AdamW: no parameters");
    if (cfg_.lr <= 0.0 || cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 ||
        cfg_.beta2 < 0.0 || cfg_.beta2 >= 1.0 || cfg_.eps <= 0.0 ||
        cfg_.weight_decay < 0.0) {
        throw OptimizerError("AdamW: invalid hyperparameters");
    }
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        if (!p.requires_grad()) {
            throw OptimizerError("AdamW: parameter does not require grad");
        }
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void AdamW::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& node = *params_[i].node_ptr();
        if (node.grad.size() != node.value.size()) {
            throw OptimizerError("AdamW: parameter " + std::to_string(i) +
                                 " has no gradient");
        }
        auto& m = m_[i];
        auto& v = v_[i];
        for (size_t j = 0; j < node.value.size(); ++j) {
            double g = node.grad[j];
            if (!std::isfinite(g)) {
                throw OptimizerError("AdamW: non-finite gradient");
            }
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            double& w = node.value[j];
            w -= cfg_.lr * cfg_.weight_decay * w;
            w -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

std::vector<double> AdamW::state_flat() const {
    std::vector<double> out;
    size_t total = 1;
    for (const auto& m : m_) total += 2 * m.size();
    out.reserve(total);
    out.push_back(static_cast<double>(t_));
    for (const auto& m : m_) out.insert(out.end(), m.begin(), m.end());
    for (const auto& v : v_) out.insert(out.end(), v.begin(), v.end());
    return out;
}

void AdamW::load_state_flat(const std::vector<double>& flat) {
    size_t total = 1;
    for (const auto& m : m_) total += 2 * m.size();
    if (flat.size() != total) {
        throw OptimizerError("AdamW: state size mismatch, expected " +
                             std::to_string(total) + " got " +
                             std::to_string(flat.size()));
    }
    t_ = static_cast<uint64_t>(flat[0]);
    size_t off = 1;
    for (auto& m : m_) {
        std::copy(flat.begin() + off, flat.begin() + off + m.size(),
                  m.begin());
        off += m.size();
    }
    for (auto& v : v_) {
        std::copy(flat.begin() + off, flat.begin() + off + v.size(),
                  v.begin());
        off += v.size();
    }
}

}  // namespace diffaug
