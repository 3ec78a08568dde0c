#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>
#include <vector>

#include <doctest.h>

#include "lipar/can_data.hpp"
#include "lipar/ops.hpp"
#include "lipar/prng.hpp"
#include "lipar/tensor.hpp"

namespace lipar::test {

using nn::Shape;
using nn::Tensor;

inline Tensor random_tensor(Shape shape, Prng& rng, float lo = -1.0f, float hi = 1.0f,
                            bool requires_grad = false) {
    return Tensor::uniform(std::move(shape), lo, hi, rng, requires_grad);
}

/// Random tensor with |x| >= margin, for kink-free ReLU probing.
inline Tensor random_tensor_away_from_zero(Shape shape, Prng& rng, float margin) {
    Tensor t = Tensor::uniform(std::move(shape), -1.0f, 1.0f, rng, false);
    for (auto& v : t.data())
        if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
    return t;
}

/// Double-precision weighted sum of a tensor against fixed weights; the
/// finite-difference loss readout (the graph loss is the same contraction
/// built from ops).
inline double weighted_sum_f64(const Tensor& t, const std::vector<float>& weights) {
    double acc = 0.0;
    auto data = t.data();
    for (size_t i = 0; i < data.size(); ++i)
        acc += static_cast<double>(data[i]) * static_cast<double>(weights[i]);
    return acc;
}

struct FdResult {
    double max_rel_err = 0.0;
    int64_t checked = 0;
    std::string worst; // tensor/index of the worst element
};

/// Central finite differences against the recorded-graph gradients.
///
/// `forward` must rebuild the graph output from scratch on every call (same
/// dropout coordinates, same saved inputs). The loss is sum(out * w) with
/// fixed random weights; the FD side reads it in double.
inline FdResult check_gradients(std::vector<std::pair<std::string, Tensor>> inputs,
                                const std::function<Tensor()>& forward, Prng& rng,
                                double step = 1e-3) {
    Tensor probe = forward();
    std::vector<float> weights(static_cast<size_t>(probe.numel()));
    for (auto& w : weights) w = static_cast<float>(rng.next_real(-1.0, 1.0));
    Tensor weight_tensor = Tensor::from(probe.shape(), weights);

    for (auto& [name, t] : inputs) t.set_requires_grad(true);
    Tensor loss = nn::sum(nn::mul(forward(), weight_tensor));
    nn::backward(loss);

    FdResult result;
    for (auto& [name, t] : inputs) {
        REQUIRE(t.has_grad());
        const auto grads = t.grad();
        auto data = t.data();
        for (int64_t i = 0; i < t.numel(); ++i) {
            const float original = data[i];
            data[i] = static_cast<float>(original + step);
            const double up = weighted_sum_f64(forward(), weights);
            data[i] = static_cast<float>(original - step);
            const double down = weighted_sum_f64(forward(), weights);
            data[i] = original;
            const double fd = (up - down) / (2.0 * step);
            const double an = grads[static_cast<size_t>(i)];
            // Unit floor: below unit scale this is an absolute comparison.
            // The float32 forward puts the finite-difference noise floor near
            // 1e-4 at step 1e-3, so sub-unit gradients cannot be resolved to
            // a finer relative precision than that.
            const double denom = std::max({std::abs(fd), std::abs(an), 1.0});
            const double rel = std::abs(fd - an) / denom;
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst = name + "[" + std::to_string(i) + "] fd=" + std::to_string(fd) +
                               " an=" + std::to_string(an);
            }
            ++result.checked;
        }
        t.zero_grad();
        t.set_requires_grad(false);
    }
    return result;
}

/// Reference grouped convolution: runs each group as an independent g=1
/// conv2d over the matching channel slices and concatenates.
inline Tensor grouped_conv_reference(const Tensor& x, const Tensor& w, const Tensor* bias,
                                     int stride, int pad, int groups) {
    const int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wdt = x.dim(3);
    const int64_t co = w.dim(0), cig = ci / groups, cog = co / groups;
    const int64_t k = w.dim(2);
    std::vector<Tensor> outs;
    for (int64_t g = 0; g < groups; ++g) {
        std::vector<float> xs(static_cast<size_t>(n * cig * h * wdt));
        for (int64_t b = 0; b < n; ++b)
            for (int64_t c = 0; c < cig; ++c)
                for (int64_t i = 0; i < h * wdt; ++i)
                    xs[static_cast<size_t>(((b * cig + c) * h * wdt) + i)] =
                        x.data()[static_cast<size_t>(((b * ci + g * cig + c) * h * wdt) + i)];
        std::vector<float> ws(static_cast<size_t>(cog * cig * k * k));
        for (int64_t c = 0; c < cog * cig * k * k; ++c)
            ws[static_cast<size_t>(c)] =
                w.data()[static_cast<size_t>(g * cog * cig * k * k + c)];
        Tensor xg = Tensor::from({n, cig, h, wdt}, std::move(xs));
        Tensor wg = Tensor::from({cog, cig, k, k}, std::move(ws));
        Tensor bg;
        if (bias) {
            std::vector<float> bs(bias->data().begin() + g * cog,
                                  bias->data().begin() + (g + 1) * cog);
            bg = Tensor::from({cog}, std::move(bs));
        }
        outs.push_back(nn::conv2d(xg, wg, bias ? &bg : nullptr, stride, pad, 1));
    }
    return nn::concat_channels(outs);
}

/// Balanced synthetic windows across all five classes.
inline std::vector<can::Window> synthetic_window_mix(size_t per_class, uint64_t seed) {
    std::vector<can::Window> windows;
    uint64_t base = 0;
    for (int cls = 0; cls < can::kNumClasses; ++cls) {
        const auto kind = static_cast<can::TrafficLabel>(cls);
        const auto records =
            can::synthesize_traffic(kind, per_class * can::kWindowMessages, seed + 31 * cls);
        auto built = can::build_windows(records, base);
        base += records.size();
        windows.insert(windows.end(), built.begin(), built.end());
    }
    return windows;
}

/// Unique scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<uint64_t> counter{0};
        dir_ = std::filesystem::temp_directory_path() /
               ("lipar_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        std::filesystem::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(dir_, ec);
    }
    const std::filesystem::path& path() const { return dir_; }
    std::string file(const std::string& name) const { return (dir_ / name).string(); }

private:
    std::filesystem::path dir_;
};

} // namespace lipar::test
