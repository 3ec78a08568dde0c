#pragma once

#include <cstdint>
#include <vector>

#include "lipar/tensor.hpp"

namespace lipar::nn {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter set. step() consumes the
/// accumulated grads (missing grads count as zero) and clears them.
class AdamState {
public:
    AdamState(std::vector<Tensor> params, AdamConfig cfg = {});

    void step();

    int64_t step_count() const { return step_count_; }
    const AdamConfig& config() const { return cfg_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
    AdamConfig cfg_;
    int64_t step_count_ = 0;
};

/// Spec-shaped alias: applies one optimizer step to the bound parameters.
inline void adam_step(AdamState& state) { state.step(); }

} // namespace lipar::nn
