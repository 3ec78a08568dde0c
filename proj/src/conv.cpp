#include "lipar/ops.hpp"

#include <string>

namespace lipar::nn {

namespace {

struct ConvDims {
    int64_t n, ci, h, w;
    int64_t co, cig, k;
    int64_t ho, wo;
    int stride, pad, groups;
    int64_t cog; // output channels per group
};

ConvDims check_conv(const Tensor& x, const Tensor& w, const Tensor* bias,
                    int stride, int pad, int groups) {
    if (x.rank() != 4)
        throw ShapeError("conv2d: input must be (N,C,H,W), got " + shape_str(x.shape()));
    if (w.rank() != 4)
        throw ShapeError("conv2d: weight must be (Co,Ci/g,K,K), got " + shape_str(w.shape()));
    if (w.dim(2) != w.dim(3))
        throw ShapeError("conv2d: kernel must be square, got " + shape_str(w.shape()));
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    if (pad < 0) throw ShapeError("conv2d: pad must be >= 0");
    if (groups < 1) throw ShapeError("conv2d: groups must be >= 1");

    ConvDims d;
    d.n = x.dim(0);
    d.ci = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.co = w.dim(0);
    d.cig = w.dim(1);
    d.k = w.dim(2);
    d.stride = stride;
    d.pad = pad;
    d.groups = groups;

    if (d.ci % groups != 0)
        throw ShapeError("conv2d: input channels " + std::to_string(d.ci) +
                         " not divisible by groups " + std::to_string(groups));
    if (d.co % groups != 0)
        throw ShapeError("conv2d: output channels " + std::to_string(d.co) +
                         " not divisible by groups " + std::to_string(groups));
    if (d.cig != d.ci / groups)
        throw ShapeError("conv2d: weight channel dim " + std::to_string(d.cig) +
                         " != Ci/g = " + std::to_string(d.ci / groups));
    if (d.k > d.h + 2 * pad)
        throw ShapeError("conv2d: kernel " + std::to_string(d.k) +
                         " exceeds padded input height " + std::to_string(d.h + 2 * pad));
    if (d.k > d.w + 2 * pad)
        throw ShapeError("conv2d: kernel " + std::to_string(d.k) +
                         " exceeds padded input width " + std::to_string(d.w + 2 * pad));
    if (bias) {
        if (bias->rank() != 1 || bias->dim(0) != d.co)
            throw ShapeError("conv2d: bias must be (Co), got " + shape_str(bias->shape()));
    }
    d.ho = (d.h + 2 * pad - d.k) / stride + 1;
    d.wo = (d.w + 2 * pad - d.k) / stride + 1;
    d.cog = d.co / groups;
    return d;
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias,
              int stride, int pad, int groups) {
    const ConvDims d = check_conv(x, w, bias, stride, pad, groups);

    std::vector<float> out(static_cast<size_t>(d.n * d.co * d.ho * d.wo));
    const float* xp = x.raw();
    const float* wp = w.raw();
    const float* bp = bias ? bias->raw() : nullptr;

    const int64_t x_sn = d.ci * d.h * d.w;
    const int64_t x_sc = d.h * d.w;
    const int64_t w_sc = d.cig * d.k * d.k;
    const int64_t o_sn = d.co * d.ho * d.wo;
    const int64_t o_sc = d.ho * d.wo;

#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < d.n; ++n) {
        for (int64_t co = 0; co < d.co; ++co) {
            const int64_t g = co / d.cog;
            const int64_t ci0 = g * d.cig;
            for (int64_t oy = 0; oy < d.ho; ++oy) {
                for (int64_t ox = 0; ox < d.wo; ++ox) {
                    double acc = bp ? static_cast<double>(bp[co]) : 0.0;
                    for (int64_t c = 0; c < d.cig; ++c) {
                        const float* xrow = xp + n * x_sn + (ci0 + c) * x_sc;
                        const float* wrow = wp + co * w_sc + c * d.k * d.k;
                        for (int64_t ky = 0; ky < d.k; ++ky) {
                            const int64_t iy = oy * d.stride + ky - d.pad;
                            if (iy < 0 || iy >= d.h) continue;
                            for (int64_t kx = 0; kx < d.k; ++kx) {
                                const int64_t ix = ox * d.stride + kx - d.pad;
                                if (ix < 0 || ix >= d.w) continue;
                                acc += static_cast<double>(xrow[iy * d.w + ix]) *
                                       static_cast<double>(wrow[ky * d.k + kx]);
                            }
                        }
                    }
                    out[static_cast<size_t>(n * o_sn + co * o_sc + oy * d.wo + ox)] =
                        static_cast<float>(acc);
                }
            }
        }
    }

    auto xi = x.impl();
    auto wi = w.impl();
    auto bi = bias ? bias->impl() : nullptr;

    return make_node(
        {d.n, d.co, d.ho, d.wo}, std::move(out), {xi, wi, bi},
        [xi, wi, bi, d, x_sn, x_sc, w_sc, o_sn, o_sc](const std::vector<float>& dy) {
            const float* xp = xi->data.data();
            const float* wp = wi->data.data();

            if (xi->needs_grad()) {
                xi->ensure_grad();
                float* dx = xi->grad.data();
#pragma omp parallel for schedule(static)
                for (int64_t n = 0; n < d.n; ++n) {
                    for (int64_t co = 0; co < d.co; ++co) {
                        const int64_t g = co / d.cog;
                        const int64_t ci0 = g * d.cig;
                        for (int64_t oy = 0; oy < d.ho; ++oy) {
                            for (int64_t ox = 0; ox < d.wo; ++ox) {
                                const double go = dy[static_cast<size_t>(
                                    n * o_sn + co * o_sc + oy * d.wo + ox)];
                                if (go == 0.0) continue;
                                for (int64_t c = 0; c < d.cig; ++c) {
                                    float* dxrow = dx + n * x_sn + (ci0 + c) * x_sc;
                                    const float* wrow = wp + co * w_sc + c * d.k * d.k;
                                    for (int64_t ky = 0; ky < d.k; ++ky) {
                                        const int64_t iy = oy * d.stride + ky - d.pad;
                                        if (iy < 0 || iy >= d.h) continue;
                                        for (int64_t kx = 0; kx < d.k; ++kx) {
                                            const int64_t ix = ox * d.stride + kx - d.pad;
                                            if (ix < 0 || ix >= d.w) continue;
                                            dxrow[iy * d.w + ix] += static_cast<float>(
                                                go * static_cast<double>(wrow[ky * d.k + kx]));
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }

            if (wi->needs_grad()) {
                wi->ensure_grad();
                float* dw = wi->grad.data();
#pragma omp parallel for schedule(static)
                for (int64_t co = 0; co < d.co; ++co) {
                    const int64_t g = co / d.cog;
                    const int64_t ci0 = g * d.cig;
                    for (int64_t c = 0; c < d.cig; ++c) {
                        for (int64_t ky = 0; ky < d.k; ++ky) {
                            for (int64_t kx = 0; kx < d.k; ++kx) {
                                double acc = 0.0;
                                for (int64_t n = 0; n < d.n; ++n) {
                                    const float* xrow = xp + n * x_sn + (ci0 + c) * x_sc;
                                    for (int64_t oy = 0; oy < d.ho; ++oy) {
                                        const int64_t iy = oy * d.stride + ky - d.pad;
                                        if (iy < 0 || iy >= d.h) continue;
                                        for (int64_t ox = 0; ox < d.wo; ++ox) {
                                            const int64_t ix = ox * d.stride + kx - d.pad;
                                            if (ix < 0 || ix >= d.w) continue;
                                            acc += static_cast<double>(dy[static_cast<size_t>(
                                                       n * o_sn + co * o_sc + oy * d.wo + ox)]) *
                                                   static_cast<double>(xrow[iy * d.w + ix]);
                                        }
                                    }
                                }
                                dw[co * w_sc + c * d.k * d.k + ky * d.k + kx] +=
                                    static_cast<float>(acc);
                            }
                        }
                    }
                }
            }

            if (bi && bi->needs_grad()) {
                bi->ensure_grad();
                float* db = bi->grad.data();
                for (int64_t co = 0; co < d.co; ++co) {
                    double acc = 0.0;
                    for (int64_t n = 0; n < d.n; ++n)
                        for (int64_t o = 0; o < o_sc; ++o)
                            acc += dy[static_cast<size_t>(n * o_sn + co * o_sc + o)];
                    db[co] += static_cast<float>(acc);
                }
            }
        });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor* bias,
                        int stride, int pad) {
    if (x.rank() != 4)
        throw ShapeError("depthwise_conv2d: input must be (N,C,H,W), got " + shape_str(x.shape()));
    const int64_t c = x.dim(1);
    if (w.rank() != 4 || w.dim(0) != c || w.dim(1) != 1)
        throw ShapeError("depthwise_conv2d: weight must be (C,1,K,K) with C = " +
                         std::to_string(c) + ", got " + shape_str(w.shape()));
    return conv2d(x, w, bias, stride, pad, static_cast<int>(c));
}

int receptive_field(std::span<const std::pair<int, int>> schedule) {
    if (schedule.empty()) throw ConfigError("receptive_field: empty schedule");
    int field = 1;
    for (auto it = schedule.rbegin(); it != schedule.rend(); ++it) {
        auto [ksize, stride] = *it;
        if (ksize < 1 || stride < 1)
            throw ConfigError("receptive_field: ksize and stride must be >= 1");
        field = (field - 1) * stride + ksize;
    }
    return field;
}

int64_t conv_param_count(int ksize, int64_t ci, int64_t co, int64_t groups) {
    if (groups < 1 || ci % groups != 0 || co % groups != 0)
        throw ConfigError("conv_param_count: groups must divide both channel counts");
    return static_cast<int64_t>(ksize) * ksize * ci * co / groups;
}

} // namespace lipar::nn
