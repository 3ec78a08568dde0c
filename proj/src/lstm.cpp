#include "lipar/ops.hpp"

#include <cmath>
#include <string>

namespace lipar::nn {

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Saved forward state for one layer's backward sweep.
struct LstmSaved {
    int64_t t_len, n, f, h;
    std::vector<float> gate_f, gate_i, gate_o, gate_c; // (T,N,H) each
    std::vector<float> cell;                           // (T+1,N,H); row 0 is the zero initial cell
    std::vector<float> tanh_cell;                      // (T,N,H)
    std::vector<float> hidden;                         // (T+1,N,H); row 0 is the zero initial hidden
};

/// One LSTM layer as a single graph node: input (T,N,F) -> outputs (T,N,H).
Tensor lstm_layer(const Tensor& x, const LstmLayerParams& p) {
    if (x.rank() != 3)
        throw ShapeError("lstm: input must be (T,N,F), got " + shape_str(x.shape()));
    const int64_t t_len = x.dim(0), n = x.dim(1), f = x.dim(2);
    if (p.w_input.rank() != 2 || p.w_hidden.rank() != 2 || p.bias.rank() != 1)
        throw ShapeError("lstm: bad parameter ranks");
    const int64_t h4 = p.w_input.dim(0);
    if (h4 % 4 != 0) throw ShapeError("lstm: gate matrix rows must be 4*H");
    const int64_t h = h4 / 4;
    if (h < 1) throw ShapeError("lstm: hidden size must be >= 1");
    if (t_len < 1) throw ShapeError("lstm: sequence length must be >= 1");
    if (p.w_input.dim(1) != f)
        throw ShapeError("lstm: w_input is " + shape_str(p.w_input.shape()) + " but input has " +
                         std::to_string(f) + " features");
    if (p.w_hidden.dim(0) != h4 || p.w_hidden.dim(1) != h)
        throw ShapeError("lstm: w_hidden must be (4H,H)");
    if (p.bias.dim(0) != h4) throw ShapeError("lstm: bias must be (4H)");

    auto saved = std::make_shared<LstmSaved>();
    saved->t_len = t_len;
    saved->n = n;
    saved->f = f;
    saved->h = h;
    const size_t tnh = static_cast<size_t>(t_len * n * h);
    saved->gate_f.resize(tnh);
    saved->gate_i.resize(tnh);
    saved->gate_o.resize(tnh);
    saved->gate_c.resize(tnh);
    saved->tanh_cell.resize(tnh);
    saved->cell.assign(static_cast<size_t>((t_len + 1) * n * h), 0.0f);
    saved->hidden.assign(static_cast<size_t>((t_len + 1) * n * h), 0.0f);

    const float* xp = x.raw();
    const float* wi = p.w_input.raw();
    const float* wh = p.w_hidden.raw();
    const float* bp = p.bias.raw();

    const int64_t nh = n * h;
    std::vector<double> z(static_cast<size_t>(4 * h));
    for (int64_t t = 0; t < t_len; ++t) {
        const float* xt = xp + t * n * f;
        const float* h_prev = saved->hidden.data() + t * nh;
        const float* c_prev = saved->cell.data() + t * nh;
        float* h_cur = saved->hidden.data() + (t + 1) * nh;
        float* c_cur = saved->cell.data() + (t + 1) * nh;
        for (int64_t b = 0; b < n; ++b) {
            for (int64_t g = 0; g < 4 * h; ++g) {
                double acc = bp[g];
                const float* wrow = wi + g * f;
                for (int64_t k = 0; k < f; ++k)
                    acc += static_cast<double>(wrow[k]) * static_cast<double>(xt[b * f + k]);
                const float* hrow = wh + g * h;
                for (int64_t k = 0; k < h; ++k)
                    acc += static_cast<double>(hrow[k]) * static_cast<double>(h_prev[b * h + k]);
                z[static_cast<size_t>(g)] = acc;
            }
            for (int64_t k = 0; k < h; ++k) {
                const double fg = sigmoid(z[static_cast<size_t>(k)]);
                const double ig = sigmoid(z[static_cast<size_t>(h + k)]);
                const double og = sigmoid(z[static_cast<size_t>(2 * h + k)]);
                const double cg = std::tanh(z[static_cast<size_t>(3 * h + k)]);
                const double c_new = fg * static_cast<double>(c_prev[b * h + k]) + ig * cg;
                const double tc = std::tanh(c_new);
                const size_t at = static_cast<size_t>(t * nh + b * h + k);
                saved->gate_f[at] = static_cast<float>(fg);
                saved->gate_i[at] = static_cast<float>(ig);
                saved->gate_o[at] = static_cast<float>(og);
                saved->gate_c[at] = static_cast<float>(cg);
                saved->tanh_cell[at] = static_cast<float>(tc);
                c_cur[b * h + k] = static_cast<float>(c_new);
                h_cur[b * h + k] = static_cast<float>(og * tc);
            }
        }
    }

    std::vector<float> outputs(saved->hidden.begin() + nh, saved->hidden.end());

    auto xi = x.impl();
    auto wii = p.w_input.impl();
    auto whi = p.w_hidden.impl();
    auto bii = p.bias.impl();

    return make_node(
        {t_len, n, h}, std::move(outputs), {xi, wii, whi, bii},
        [xi, wii, whi, bii, saved](const std::vector<float>& dy) {
            const int64_t t_len = saved->t_len, n = saved->n, f = saved->f, h = saved->h;
            const int64_t nh = n * h;
            const float* xp = xi->data.data();
            const float* wi = wii->data.data();
            const float* wh = whi->data.data();

            std::vector<double> d_wi(static_cast<size_t>(4 * h * f), 0.0);
            std::vector<double> d_wh(static_cast<size_t>(4 * h * h), 0.0);
            std::vector<double> d_b(static_cast<size_t>(4 * h), 0.0);
            std::vector<double> dh_next(static_cast<size_t>(nh), 0.0);
            std::vector<double> dc_next(static_cast<size_t>(nh), 0.0);
            std::vector<double> dz(static_cast<size_t>(4 * h));

            const bool want_dx = xi->needs_grad();
            if (want_dx) xi->ensure_grad();
            float* dxp = want_dx ? xi->grad.data() : nullptr;

            for (int64_t t = t_len - 1; t >= 0; --t) {
                const float* xt = xp + t * n * f;
                const float* h_prev = saved->hidden.data() + t * nh;
                const float* c_prev = saved->cell.data() + t * nh;
                for (int64_t b = 0; b < n; ++b) {
                    for (int64_t k = 0; k < h; ++k) {
                        const size_t at = static_cast<size_t>(t * nh + b * h + k);
                        const size_t bk = static_cast<size_t>(b * h + k);
                        const double fg = saved->gate_f[at];
                        const double ig = saved->gate_i[at];
                        const double og = saved->gate_o[at];
                        const double cg = saved->gate_c[at];
                        const double tc = saved->tanh_cell[at];

                        const double dh = static_cast<double>(dy[at]) + dh_next[bk];
                        const double d_og = dh * tc;
                        double dc = dc_next[bk] + dh * og * (1.0 - tc * tc);
                        const double d_fg = dc * static_cast<double>(c_prev[bk]);
                        const double d_ig = dc * cg;
                        const double d_cg = dc * ig;

                        dz[static_cast<size_t>(k)] = d_fg * fg * (1.0 - fg);
                        dz[static_cast<size_t>(h + k)] = d_ig * ig * (1.0 - ig);
                        dz[static_cast<size_t>(2 * h + k)] = d_og * og * (1.0 - og);
                        dz[static_cast<size_t>(3 * h + k)] = d_cg * (1.0 - cg * cg);

                        dc_next[bk] = dc * fg;
                    }
                    // Parameter and input adjoints for this (t, b) column.
                    for (int64_t g = 0; g < 4 * h; ++g) {
                        const double dzg = dz[static_cast<size_t>(g)];
                        if (dzg == 0.0) continue;
                        d_b[static_cast<size_t>(g)] += dzg;
                        double* wirow = d_wi.data() + g * f;
                        for (int64_t k = 0; k < f; ++k)
                            wirow[k] += dzg * static_cast<double>(xt[b * f + k]);
                        double* whrow = d_wh.data() + g * h;
                        for (int64_t k = 0; k < h; ++k)
                            whrow[k] += dzg * static_cast<double>(h_prev[b * h + k]);
                    }
                    for (int64_t k = 0; k < h; ++k) {
                        double acc = 0.0;
                        for (int64_t g = 0; g < 4 * h; ++g)
                            acc += dz[static_cast<size_t>(g)] * static_cast<double>(wh[g * h + k]);
                        dh_next[static_cast<size_t>(b * h + k)] = acc;
                    }
                    if (want_dx) {
                        for (int64_t k = 0; k < f; ++k) {
                            double acc = 0.0;
                            for (int64_t g = 0; g < 4 * h; ++g)
                                acc += dz[static_cast<size_t>(g)] *
                                       static_cast<double>(wi[g * f + k]);
                            dxp[t * n * f + b * f + k] += static_cast<float>(acc);
                        }
                    }
                }
            }

            if (wii->needs_grad()) {
                wii->ensure_grad();
                for (size_t i = 0; i < d_wi.size(); ++i)
                    wii->grad[i] += static_cast<float>(d_wi[i]);
            }
            if (whi->needs_grad()) {
                whi->ensure_grad();
                for (size_t i = 0; i < d_wh.size(); ++i)
                    whi->grad[i] += static_cast<float>(d_wh[i]);
            }
            if (bii->needs_grad()) {
                bii->ensure_grad();
                for (size_t i = 0; i < d_b.size(); ++i)
                    bii->grad[i] += static_cast<float>(d_b[i]);
            }
        });
}

} // namespace

LstmOut lstm_forward(const Tensor& x, std::span<const LstmLayerParams> layers) {
    if (layers.empty()) throw ShapeError("lstm_forward: need at least one layer");
    const int64_t hidden = layers.front().w_hidden.dim(1);
    for (const auto& layer : layers)
        if (layer.w_hidden.dim(1) != hidden)
            throw ShapeError("lstm_forward: all layers must share one hidden size");
    Tensor cur = x;
    std::vector<Tensor> finals;
    finals.reserve(layers.size());
    for (const auto& layer : layers) {
        cur = lstm_layer(cur, layer);
        finals.push_back(select_step(cur, cur.dim(0) - 1));
    }
    LstmOut out;
    out.outputs = cur;
    out.last_hidden = stack_first(finals);
    return out;
}

} // namespace lipar::nn
