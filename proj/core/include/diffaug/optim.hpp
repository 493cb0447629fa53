#pragma once

#include <cstdint>
#include <vector>

#include "diffaug/tensor.hpp"

namespace diffaug {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// AdamW with decoupled weight decay: the decay term multiplies the parameter
// directly and never enters the moment estimates. Epsilon is added outside
// the square root of the bias-corrected second moment.
class AdamW {
   public:
    AdamW(std::vector<Tensor> params, AdamWConfig cfg);

    // Applies one update using the gradients currently stored on the
    // parameters. Throws OptimizerError if any parameter has no gradient.
    void step();
    void zero_grad();

    uint64_t steps() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }
    size_t param_count() const { return params_.size(); }

    // Flat state layout: [t, m_0..., m_1..., ..., v_0..., v_1..., ...].
    std::vector<double> state_flat() const;
    void load_state_flat(const std::vector<double>& flat);

   private:
    std::vector<Tensor> params_;
    AdamWConfig cfg_;
    uint64_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace diffaug
