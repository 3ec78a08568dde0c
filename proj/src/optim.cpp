#include "lipar/optim.hpp"

#include <cmath>

namespace lipar::nn {

AdamState::AdamState(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    if (cfg_.lr <= 0.0) throw ConfigError("adam: learning rate must be positive");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
        v_.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
    }
}

void AdamState::step() {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = params_[pi];
        if (!p.has_grad()) continue; // no contribution this step
        auto g = p.impl()->grad.data();
        auto w = p.raw();
        auto* m = m_[pi].data();
        auto* v = v_[pi].data();
        const int64_t count = p.numel();
        for (int64_t i = 0; i < count; ++i) {
            const double gi = g[i];
            const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double m_hat = mi / bc1;
            const double v_hat = vi / bc2;
            w[i] = static_cast<float>(w[i] - cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps));
        }
        p.zero_grad();
    }
}

} // namespace lipar::nn
