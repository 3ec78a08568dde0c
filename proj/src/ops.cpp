#include "lipar/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace lipar::nn {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

} // namespace

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    Tensor& running_mean, Tensor& running_var,
                    bool training, double momentum, double eps) {
    if (x.rank() != 4)
        throw ShapeError("batch_norm2d: input must be (N,C,H,W), got " + shape_str(x.shape()));
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const Tensor* per_channel_params[] = {&gamma, &beta, &running_mean, &running_var};
    for (const Tensor* t : per_channel_params)
        if (t->rank() != 1 || t->dim(0) != c)
            throw ShapeError("batch_norm2d: per-channel parameter must have length " +
                             std::to_string(c));
    const int64_t per_channel = n * h * w;
    if (training && per_channel <= 1)
        throw ShapeError("batch_norm2d: train mode needs more than one value per channel");

    const float* xp = x.raw();
    const int64_t sn = c * h * w, sc = h * w;

    std::vector<double> mean(static_cast<size_t>(c)), var(static_cast<size_t>(c));
    if (training) {
        for (int64_t ch = 0; ch < c; ++ch) {
            double s = 0.0, s2 = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const float* row = xp + i * sn + ch * sc;
                for (int64_t j = 0; j < sc; ++j) {
                    const double v = row[j];
                    s += v;
                    s2 += v * v;
                }
            }
            const double m = s / static_cast<double>(per_channel);
            mean[ch] = m;
            var[ch] = std::max(0.0, s2 / static_cast<double>(per_channel) - m * m);
        }
        // Running stats use the unbiased variance.
        float* rm = running_mean.raw();
        float* rv = running_var.raw();
        const double unbias = static_cast<double>(per_channel) / static_cast<double>(per_channel - 1);
        for (int64_t ch = 0; ch < c; ++ch) {
            rm[ch] = static_cast<float>((1.0 - momentum) * rm[ch] + momentum * mean[ch]);
            rv[ch] = static_cast<float>((1.0 - momentum) * rv[ch] + momentum * var[ch] * unbias);
        }
    } else {
        for (int64_t ch = 0; ch < c; ++ch) {
            mean[ch] = running_mean.raw()[ch];
            var[ch] = running_var.raw()[ch];
        }
    }

    std::vector<double> inv_std(static_cast<size_t>(c));
    for (int64_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + eps);

    std::vector<float> out(x.data().begin(), x.data().end());
    const float* gp = gamma.raw();
    const float* bp = beta.raw();
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t ch = 0; ch < c; ++ch) {
            float* row = out.data() + i * sn + ch * sc;
            const double m = mean[ch], is = inv_std[ch], g = gp[ch], b = bp[ch];
            for (int64_t j = 0; j < sc; ++j)
                row[j] = static_cast<float>((row[j] - m) * is * g + b);
        }
    }

    auto xi = x.impl();
    auto gi = gamma.impl();
    auto bi = beta.impl();

    return make_node(
        x.shape(), std::move(out), {xi, gi, bi},
        [xi, gi, bi, mean, inv_std, training, n, c, sn, sc, per_channel](const std::vector<float>& dy) {
            const float* xp = xi->data.data();
            const float* gp = gi->data.data();
            // Per-channel reductions of dy and dy*xhat.
            std::vector<double> sum_dy(static_cast<size_t>(c), 0.0);
            std::vector<double> sum_dy_xhat(static_cast<size_t>(c), 0.0);
            for (int64_t i = 0; i < n; ++i) {
                for (int64_t ch = 0; ch < c; ++ch) {
                    const float* xrow = xp + i * sn + ch * sc;
                    const float* drow = dy.data() + i * sn + ch * sc;
                    double sd = 0.0, sdx = 0.0;
                    for (int64_t j = 0; j < sc; ++j) {
                        const double xhat = (xrow[j] - mean[ch]) * inv_std[ch];
                        sd += drow[j];
                        sdx += drow[j] * xhat;
                    }
                    sum_dy[ch] += sd;
                    sum_dy_xhat[ch] += sdx;
                }
            }
            if (gi->needs_grad()) {
                gi->ensure_grad();
                for (int64_t ch = 0; ch < c; ++ch)
                    gi->grad[ch] += static_cast<float>(sum_dy_xhat[ch]);
            }
            if (bi->needs_grad()) {
                bi->ensure_grad();
                for (int64_t ch = 0; ch < c; ++ch)
                    bi->grad[ch] += static_cast<float>(sum_dy[ch]);
            }
            if (xi->needs_grad()) {
                xi->ensure_grad();
                float* dx = xi->grad.data();
                const double inv_count = 1.0 / static_cast<double>(per_channel);
                for (int64_t i = 0; i < n; ++i) {
                    for (int64_t ch = 0; ch < c; ++ch) {
                        const float* xrow = xp + i * sn + ch * sc;
                        const float* drow = dy.data() + i * sn + ch * sc;
                        float* dxrow = dx + i * sn + ch * sc;
                        const double g_is = gp[ch] * inv_std[ch];
                        const double mdy = training ? sum_dy[ch] * inv_count : 0.0;
                        const double mdyx = training ? sum_dy_xhat[ch] * inv_count : 0.0;
                        for (int64_t j = 0; j < sc; ++j) {
                            const double xhat = (xrow[j] - mean[ch]) * inv_std[ch];
                            dxrow[j] += static_cast<float>(g_is * (drow[j] - mdy - xhat * mdyx));
                        }
                    }
                }
            }
        });
}

Tensor relu(const Tensor& x) {
    std::vector<float> out(x.data().begin(), x.data().end());
    for (auto& v : out) v = v > 0.0f ? v : 0.0f;
    auto xi = x.impl();
    return make_node(x.shape(), std::move(out), {xi}, [xi](const std::vector<float>& dy) {
        if (!xi->needs_grad()) return;
        xi->ensure_grad();
        const float* xp = xi->data.data();
        float* dx = xi->grad.data();
        for (size_t i = 0; i < dy.size(); ++i)
            if (xp[i] > 0.0f) dx[i] += dy[i];
    });
}

Tensor adaptive_avg_pool2d(const Tensor& x, int out_h, int out_w) {
    if (x.rank() != 4)
        throw ShapeError("adaptive_avg_pool2d: input must be (N,C,H,W), got " +
                         shape_str(x.shape()));
    if (out_h < 1 || out_w < 1)
        throw ShapeError("adaptive_avg_pool2d: output extents must be >= 1");
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (out_h > h || out_w > w)
        throw ShapeError("adaptive_avg_pool2d: output larger than input");

    auto bucket = [](int64_t i, int64_t in, int64_t out) {
        return std::pair<int64_t, int64_t>{i * in / out, (i + 1) * in / out};
    };

    const int64_t sn = c * h * w, sc = h * w;
    const int64_t osn = c * out_h * out_w, osc = static_cast<int64_t>(out_h) * out_w;
    std::vector<float> out(static_cast<size_t>(n * osn));
    const float* xp = x.raw();
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const float* xrow = xp + i * sn + ch * sc;
            float* orow = out.data() + i * osn + ch * osc;
            for (int64_t oy = 0; oy < out_h; ++oy) {
                auto [y0, y1] = bucket(oy, h, out_h);
                for (int64_t ox = 0; ox < out_w; ++ox) {
                    auto [x0, x1] = bucket(ox, w, out_w);
                    double acc = 0.0;
                    for (int64_t yy = y0; yy < y1; ++yy)
                        for (int64_t xx = x0; xx < x1; ++xx)
                            acc += xrow[yy * w + xx];
                    orow[oy * out_w + ox] =
                        static_cast<float>(acc / static_cast<double>((y1 - y0) * (x1 - x0)));
                }
            }
        }
    }

    auto xi = x.impl();
    return make_node(
        {n, c, out_h, out_w}, std::move(out), {xi},
        [xi, bucket, n, c, h, w, out_h, out_w, sn, sc, osn, osc](const std::vector<float>& dy) {
            if (!xi->needs_grad()) return;
            xi->ensure_grad();
            float* dx = xi->grad.data();
            for (int64_t i = 0; i < n; ++i) {
                for (int64_t ch = 0; ch < c; ++ch) {
                    float* dxrow = dx + i * sn + ch * sc;
                    const float* drow = dy.data() + i * osn + ch * osc;
                    for (int64_t oy = 0; oy < out_h; ++oy) {
                        auto [y0, y1] = bucket(oy, h, out_h);
                        for (int64_t ox = 0; ox < out_w; ++ox) {
                            auto [x0, x1] = bucket(ox, w, out_w);
                            const float share = drow[oy * out_w + ox] /
                                                static_cast<float>((y1 - y0) * (x1 - x0));
                            for (int64_t yy = y0; yy < y1; ++yy)
                                for (int64_t xx = x0; xx < x1; ++xx)
                                    dxrow[yy * w + xx] += share;
                        }
                    }
                }
            }
        });
}

Tensor dropout(const Tensor& x, double p, bool training, uint64_t seed, uint64_t salt) {
    if (p < 0.0 || p >= 1.0)
        throw ConfigError("dropout: p must be in [0, 1), got " + std::to_string(p));
    if (!training || p == 0.0) {
        // Identity, but still a graph node so gradients flow in train mode.
        std::vector<float> out(x.data().begin(), x.data().end());
        auto xi = x.impl();
        return make_node(x.shape(), std::move(out), {xi}, [xi](const std::vector<float>& dy) {
            if (!xi->needs_grad()) return;
            accumulate_grad(*xi, dy);
        });
    }
    const float keep_scale = static_cast<float>(1.0 / (1.0 - p));
    std::vector<float> mask(static_cast<size_t>(x.numel()));
    for (size_t i = 0; i < mask.size(); ++i)
        mask[i] = unit_at(seed, salt, i) >= p ? keep_scale : 0.0f;
    std::vector<float> out(static_cast<size_t>(x.numel()));
    const float* xp = x.raw();
    for (size_t i = 0; i < out.size(); ++i) out[i] = xp[i] * mask[i];

    auto xi = x.impl();
    return make_node(x.shape(), std::move(out), {xi},
                     [xi, mask = std::move(mask)](const std::vector<float>& dy) {
                         if (!xi->needs_grad()) return;
                         xi->ensure_grad();
                         float* dx = xi->grad.data();
                         for (size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * mask[i];
                     });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b) {
    if (x.rank() != 2)
        throw ShapeError("linear: input must be (N,F), got " + shape_str(x.shape()));
    if (w.rank() != 2)
        throw ShapeError("linear: weight must be (O,F), got " + shape_str(w.shape()));
    const int64_t n = x.dim(0), f = x.dim(1), o = w.dim(0);
    if (w.dim(1) != f)
        throw ShapeError("linear: weight feature dim " + std::to_string(w.dim(1)) +
                         " != input features " + std::to_string(f));
    if (b && (b->rank() != 1 || b->dim(0) != o))
        throw ShapeError("linear: bias must be (O)");

    std::vector<float> out(static_cast<size_t>(n * o));
    const float* xp = x.raw();
    const float* wp = w.raw();
    const float* bp = b ? b->raw() : nullptr;
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < o; ++j) {
            double acc = bp ? static_cast<double>(bp[j]) : 0.0;
            const float* xrow = xp + i * f;
            const float* wrow = wp + j * f;
            for (int64_t k = 0; k < f; ++k)
                acc += static_cast<double>(xrow[k]) * static_cast<double>(wrow[k]);
            out[static_cast<size_t>(i * o + j)] = static_cast<float>(acc);
        }
    }

    auto xi = x.impl();
    auto wi = w.impl();
    auto bi = b ? b->impl() : nullptr;
    return make_node(
        {n, o}, std::move(out), {xi, wi, bi},
        [xi, wi, bi, n, f, o](const std::vector<float>& dy) {
            const float* xp = xi->data.data();
            const float* wp = wi->data.data();
            if (xi->needs_grad()) {
                xi->ensure_grad();
                float* dx = xi->grad.data();
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t k = 0; k < f; ++k) {
                        double acc = 0.0;
                        for (int64_t j = 0; j < o; ++j)
                            acc += static_cast<double>(dy[static_cast<size_t>(i * o + j)]) *
                                   static_cast<double>(wp[j * f + k]);
                        dx[i * f + k] += static_cast<float>(acc);
                    }
            }
            if (wi->needs_grad()) {
                wi->ensure_grad();
                float* dw = wi->grad.data();
                for (int64_t j = 0; j < o; ++j)
                    for (int64_t k = 0; k < f; ++k) {
                        double acc = 0.0;
                        for (int64_t i = 0; i < n; ++i)
                            acc += static_cast<double>(dy[static_cast<size_t>(i * o + j)]) *
                                   static_cast<double>(xp[i * f + k]);
                        dw[j * f + k] += static_cast<float>(acc);
                    }
            }
            if (bi && bi->needs_grad()) {
                bi->ensure_grad();
                float* db = bi->grad.data();
                for (int64_t j = 0; j < o; ++j) {
                    double acc = 0.0;
                    for (int64_t i = 0; i < n; ++i)
                        acc += dy[static_cast<size_t>(i * o + j)];
                    db[j] += static_cast<float>(acc);
                }
            }
        });
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<float> out(static_cast<size_t>(a.numel()));
    const float* ap = a.raw();
    const float* bp = b.raw();
    for (size_t i = 0; i < out.size(); ++i) out[i] = ap[i] + bp[i];
    auto ai = a.impl();
    auto bi = b.impl();
    return make_node(a.shape(), std::move(out), {ai, bi}, [ai, bi](const std::vector<float>& dy) {
        if (ai->needs_grad()) accumulate_grad(*ai, dy);
        if (bi->needs_grad()) accumulate_grad(*bi, dy);
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<float> out(static_cast<size_t>(a.numel()));
    const float* ap = a.raw();
    const float* bp = b.raw();
    for (size_t i = 0; i < out.size(); ++i) out[i] = ap[i] * bp[i];
    auto ai = a.impl();
    auto bi = b.impl();
    return make_node(a.shape(), std::move(out), {ai, bi}, [ai, bi](const std::vector<float>& dy) {
        if (ai->needs_grad()) {
            ai->ensure_grad();
            const float* bp = bi->data.data();
            for (size_t i = 0; i < dy.size(); ++i) ai->grad[i] += dy[i] * bp[i];
        }
        if (bi->needs_grad()) {
            bi->ensure_grad();
            const float* ap = ai->data.data();
            for (size_t i = 0; i < dy.size(); ++i) bi->grad[i] += dy[i] * ap[i];
        }
    });
}

Tensor scale(const Tensor& a, float s) {
    std::vector<float> out(static_cast<size_t>(a.numel()));
    const float* ap = a.raw();
    for (size_t i = 0; i < out.size(); ++i) out[i] = ap[i] * s;
    auto ai = a.impl();
    return make_node(a.shape(), std::move(out), {ai}, [ai, s](const std::vector<float>& dy) {
        if (!ai->needs_grad()) return;
        ai->ensure_grad();
        for (size_t i = 0; i < dy.size(); ++i) ai->grad[i] += dy[i] * s;
    });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.data()) acc += v;
    auto ai = a.impl();
    return make_node({1}, {static_cast<float>(acc)}, {ai}, [ai](const std::vector<float>& dy) {
        if (!ai->needs_grad()) return;
        ai->ensure_grad();
        for (auto& g : ai->grad) g += dy[0];
    });
}

Tensor concat_channels(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const Tensor& first = parts[0];
    if (first.rank() != 4) throw ShapeError("concat_channels: inputs must be (N,C,H,W)");
    const int64_t n = first.dim(0), h = first.dim(2), w = first.dim(3);
    int64_t total_c = 0;
    for (const Tensor& t : parts) {
        if (t.rank() != 4 || t.dim(0) != n || t.dim(2) != h || t.dim(3) != w)
            throw ShapeError("concat_channels: incompatible input " + shape_str(t.shape()));
        total_c += t.dim(1);
    }
    const int64_t sc = h * w;
    std::vector<float> out(static_cast<size_t>(n * total_c * sc));
    std::vector<std::shared_ptr<TensorImpl>> impls;
    std::vector<int64_t> channels;
    impls.reserve(parts.size());
    for (const Tensor& t : parts) {
        impls.push_back(t.impl());
        channels.push_back(t.dim(1));
    }
    int64_t c_off = 0;
    for (size_t pi = 0; pi < impls.size(); ++pi) {
        const int64_t pc = channels[pi];
        const float* src = impls[pi]->data.data();
        for (int64_t i = 0; i < n; ++i)
            std::memcpy(out.data() + (i * total_c + c_off) * sc, src + i * pc * sc,
                        static_cast<size_t>(pc * sc) * sizeof(float));
        c_off += pc;
    }

    return make_node(
        {n, total_c, h, w}, std::move(out), impls,
        [impls, channels, n, total_c, sc](const std::vector<float>& dy) {
            int64_t c_off = 0;
            for (size_t pi = 0; pi < impls.size(); ++pi) {
                const int64_t pc = channels[pi];
                auto& impl = *impls[pi];
                if (impl.needs_grad()) {
                    impl.ensure_grad();
                    float* dst = impl.grad.data();
                    for (int64_t i = 0; i < n; ++i) {
                        const float* src = dy.data() + (i * total_c + c_off) * sc;
                        float* drow = dst + i * pc * sc;
                        for (int64_t j = 0; j < pc * sc; ++j) drow[j] += src[j];
                    }
                }
                c_off += pc;
            }
        });
}

Tensor select_step(const Tensor& x, int64_t t) {
    if (x.rank() != 3)
        throw ShapeError("select_step: input must be (T,N,F), got " + shape_str(x.shape()));
    const int64_t steps = x.dim(0), n = x.dim(1), f = x.dim(2);
    if (t < 0 || t >= steps)
        throw ShapeError("select_step: step " + std::to_string(t) + " out of range");
    const int64_t block = n * f;
    std::vector<float> out(x.data().begin() + t * block, x.data().begin() + (t + 1) * block);
    auto xi = x.impl();
    return make_node({n, f}, std::move(out), {xi}, [xi, t, block](const std::vector<float>& dy) {
        if (!xi->needs_grad()) return;
        xi->ensure_grad();
        float* dst = xi->grad.data() + t * block;
        for (int64_t j = 0; j < block; ++j) dst[j] += dy[static_cast<size_t>(j)];
    });
}

Tensor stack_first(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("stack_first: no inputs");
    const Shape& inner = parts[0].shape();
    const int64_t block = parts[0].numel();
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const Tensor& t : parts) {
        if (t.shape() != inner)
            throw ShapeError("stack_first: mismatched input " + shape_str(t.shape()));
        impls.push_back(t.impl());
    }
    Shape out_shape;
    out_shape.push_back(static_cast<int64_t>(parts.size()));
    out_shape.insert(out_shape.end(), inner.begin(), inner.end());
    std::vector<float> out(static_cast<size_t>(block * static_cast<int64_t>(parts.size())));
    for (size_t pi = 0; pi < impls.size(); ++pi)
        std::memcpy(out.data() + static_cast<int64_t>(pi) * block, impls[pi]->data.data(),
                    static_cast<size_t>(block) * sizeof(float));
    return make_node(std::move(out_shape), std::move(out), impls,
                     [impls, block](const std::vector<float>& dy) {
                         for (size_t pi = 0; pi < impls.size(); ++pi) {
                             auto& impl = *impls[pi];
                             if (!impl.needs_grad()) continue;
                             impl.ensure_grad();
                             const float* src = dy.data() + static_cast<int64_t>(pi) * block;
                             for (int64_t j = 0; j < block; ++j) impl.grad[j] += src[j];
                         }
                     });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2)
        throw ShapeError("softmax_cross_entropy: logits must be (N,C), got " +
                         shape_str(logits.shape()));
    const int64_t n = logits.dim(0), c = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != n)
        throw ShapeError("softmax_cross_entropy: expected " + std::to_string(n) + " labels, got " +
                         std::to_string(labels.size()));
    for (int64_t i = 0; i < n; ++i)
        if (labels[i] < 0 || labels[i] >= c)
            throw ShapeError("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                             " out of range [0," + std::to_string(c) + ") at row " +
                             std::to_string(i));

    const float* lp = logits.raw();
    // softmax probabilities, saved for the adjoint
    std::vector<float> probs(static_cast<size_t>(n * c));
    double loss_acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const float* row = lp + i * c;
        double mx = row[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double z = 0.0;
        for (int64_t j = 0; j < c; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
        const double log_z = std::log(z) + mx;
        for (int64_t j = 0; j < c; ++j)
            probs[static_cast<size_t>(i * c + j)] =
                static_cast<float>(std::exp(static_cast<double>(row[j]) - log_z));
        loss_acc += log_z - static_cast<double>(row[labels[i]]);
    }
    const double loss = loss_acc / static_cast<double>(n);

    auto li = logits.impl();
    std::vector<int> labels_copy(labels.begin(), labels.end());
    return make_node(
        {1}, {static_cast<float>(loss)}, {li},
        [li, probs = std::move(probs), labels = std::move(labels_copy), n, c](
            const std::vector<float>& dy) {
            if (!li->needs_grad()) return;
            li->ensure_grad();
            const float scale = dy[0] / static_cast<float>(n);
            float* dl = li->grad.data();
            for (int64_t i = 0; i < n; ++i) {
                const float* prow = probs.data() + i * c;
                float* drow = dl + i * c;
                for (int64_t j = 0; j < c; ++j) drow[j] += scale * prow[j];
                drow[labels[static_cast<size_t>(i)]] -= scale;
            }
        });
}

} // namespace lipar::nn
