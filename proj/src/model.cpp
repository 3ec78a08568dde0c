#include "lipar/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "lipar/prng.hpp"

namespace lipar::model {

using json = nlohmann::json;

const char* variant_name(Variant v) {
    return v == Variant::DwParNet ? "dw" : "st";
}

Variant variant_from_name(const std::string& name) {
    if (name == "dw" || name == "dwparnet") return Variant::DwParNet;
    if (name == "st" || name == "stparnet") return Variant::StParNet;
    throw ConfigError("unknown model variant '" + name + "' (expected dw|st)");
}

// ---------------------------------------------------------------------------
// Canonical architecture.
// ---------------------------------------------------------------------------

namespace {

Shape spatial_after(const Shape& in, const LayerSpec& layer) {
    // Per-sample shape inference; spatial shapes are (C,H,W).
    if (std::holds_alternative<PwConvSpec>(layer)) {
        const auto& s = std::get<PwConvSpec>(layer);
        return {s.out_channels, (in[1] - 1) / s.stride + 1, (in[2] - 1) / s.stride + 1};
    }
    if (std::holds_alternative<DwConvSpec>(layer)) {
        const auto& s = std::get<DwConvSpec>(layer);
        return {in[0], (in[1] + 2 - 3) / s.stride + 1, (in[2] + 2 - 3) / s.stride + 1};
    }
    if (std::holds_alternative<StdConvSpec>(layer)) {
        const auto& s = std::get<StdConvSpec>(layer);
        return {s.out_channels, (in[1] + 2 * s.pad - s.ksize) / s.stride + 1,
                (in[2] + 2 * s.pad - s.ksize) / s.stride + 1};
    }
    if (std::holds_alternative<PoolSpec>(layer)) {
        const auto& s = std::get<PoolSpec>(layer);
        return {in[0], s.out_h, s.out_w};
    }
    if (std::holds_alternative<DropoutSpec>(layer)) return in;
    if (std::holds_alternative<LinearSpec>(layer))
        return {std::get<LinearSpec>(layer).out_features};
    // LSTM: (T,F) -> final hidden (H)
    return {std::get<LstmSpec>(layer).hidden};
}

int64_t layer_output_elems(const Shape& in, const LayerSpec& layer) {
    // One entry per layer output; an LSTM stack counts each layer's full
    // (T,H) output sequence.
    if (std::holds_alternative<LstmSpec>(layer)) {
        const auto& s = std::get<LstmSpec>(layer);
        return static_cast<int64_t>(s.layers) * in[0] * s.hidden;
    }
    return nn::shape_numel(spatial_after(in, layer));
}

BranchSpec make_branch(std::string name, Shape input, std::vector<LayerSpec> layers) {
    BranchSpec spec;
    spec.name = std::move(name);
    spec.input_shape = std::move(input);
    spec.layers = std::move(layers);
    Shape cur = spec.input_shape;
    for (const auto& layer : spec.layers) cur = spatial_after(cur, layer);
    spec.output_shape = cur;
    return spec;
}

} // namespace

std::vector<BranchSpec> canonical_branches(Variant variant) {
    std::vector<BranchSpec> branches;
    // Three spatial branches at different granularities; every one ends in a
    // 2x2 multi-channel feature map so they can be fused on channels.
    branches.push_back(make_branch("branch1", {3, 9, 9},
                                   {PwConvSpec{64, 1}, DwConvSpec{1}, DwConvSpec{2},
                                    PoolSpec{2, 2}}));
    branches.push_back(make_branch("branch2", {3, 9, 9},
                                   {PwConvSpec{128, 1}, DwConvSpec{2}, PwConvSpec{256, 1},
                                    DwConvSpec{2}, PoolSpec{2, 2}}));
    branches.push_back(make_branch("branch3", {3, 9, 9},
                                   {PwConvSpec{32, 1}, DwConvSpec{1}, PwConvSpec{96, 1},
                                    DwConvSpec{2}, PwConvSpec{192, 1}, DwConvSpec{2},
                                    PoolSpec{2, 2}}));
    if (variant == Variant::StParNet) {
        branches.push_back(make_branch(kTemporalBranch, {27, 9},
                                       {LstmSpec{2, 32}, LinearSpec{can::kNumClasses}}));
    }
    // Fusion head over the 64+256+192 = 512 concatenated channels.
    branches.push_back(make_branch(kFusionHead, {512, 2, 2},
                                   {StdConvSpec{192, 3, 1, 1}, PoolSpec{1, 1}, DropoutSpec{0.5},
                                    LinearSpec{can::kNumClasses}}));
    return branches;
}

// ---------------------------------------------------------------------------
// Parameter table.
// ---------------------------------------------------------------------------

namespace {

struct ParamInfo {
    std::string name;
    Shape shape;
    bool trainable = true;
    enum class Init { ConvUniform, LstmUniform, Zero, One } init = Init::Zero;
    int64_t fan = 0; // fan_in for conv/linear, hidden size for LSTM
};

void collect_branch_params(const BranchSpec& branch, std::vector<ParamInfo>& out) {
    Shape cur = branch.input_shape;
    for (size_t i = 0; i < branch.layers.size(); ++i) {
        const std::string base = branch.name + "." + std::to_string(i);
        const LayerSpec& layer = branch.layers[i];
        if (std::holds_alternative<PwConvSpec>(layer) || std::holds_alternative<StdConvSpec>(layer)) {
            int out_ch, k;
            if (std::holds_alternative<PwConvSpec>(layer)) {
                out_ch = std::get<PwConvSpec>(layer).out_channels;
                k = 1;
            } else {
                out_ch = std::get<StdConvSpec>(layer).out_channels;
                k = std::get<StdConvSpec>(layer).ksize;
            }
            const int64_t in_ch = cur[0];
            const int64_t fan = in_ch * k * k;
            out.push_back({base + ".conv.weight", {out_ch, in_ch, k, k}, true,
                           ParamInfo::Init::ConvUniform, fan});
            out.push_back({base + ".conv.bias", {out_ch}, true, ParamInfo::Init::Zero, 0});
            out.push_back({base + ".bn.gamma", {out_ch}, true, ParamInfo::Init::One, 0});
            out.push_back({base + ".bn.beta", {out_ch}, true, ParamInfo::Init::Zero, 0});
            out.push_back({base + ".bn.running_mean", {out_ch}, false, ParamInfo::Init::Zero, 0});
            out.push_back({base + ".bn.running_var", {out_ch}, false, ParamInfo::Init::One, 0});
        } else if (std::holds_alternative<DwConvSpec>(layer)) {
            const int64_t ch = cur[0];
            out.push_back({base + ".conv.weight", {ch, 1, 3, 3}, true,
                           ParamInfo::Init::ConvUniform, 9});
            out.push_back({base + ".conv.bias", {ch}, true, ParamInfo::Init::Zero, 0});
        } else if (std::holds_alternative<LinearSpec>(layer)) {
            const int64_t in_f = nn::shape_numel(cur);
            const int64_t out_f = std::get<LinearSpec>(layer).out_features;
            out.push_back({base + ".fc.weight", {out_f, in_f}, true,
                           ParamInfo::Init::ConvUniform, in_f});
            out.push_back({base + ".fc.bias", {out_f}, true, ParamInfo::Init::Zero, 0});
        } else if (std::holds_alternative<LstmSpec>(layer)) {
            const auto& s = std::get<LstmSpec>(layer);
            int64_t in_f = cur[1]; // (T,F)
            for (int l = 0; l < s.layers; ++l) {
                const std::string lbase = base + ".lstm." + std::to_string(l);
                out.push_back({lbase + ".w_input", {4 * s.hidden, in_f}, true,
                               ParamInfo::Init::LstmUniform, s.hidden});
                out.push_back({lbase + ".w_hidden", {4 * s.hidden, s.hidden}, true,
                               ParamInfo::Init::LstmUniform, s.hidden});
                out.push_back({lbase + ".bias", {4 * s.hidden}, true, ParamInfo::Init::Zero, 0});
                in_f = s.hidden;
            }
        }
        cur = spatial_after(cur, layer);
    }
}

Tensor init_tensor(const ParamInfo& info, uint64_t model_seed) {
    Prng rng(mix64(model_seed, fnv1a64(info.name)));
    switch (info.init) {
        case ParamInfo::Init::ConvUniform: {
            const float a = static_cast<float>(std::sqrt(6.0 / static_cast<double>(info.fan)));
            return Tensor::uniform(info.shape, -a, a, rng, info.trainable);
        }
        case ParamInfo::Init::LstmUniform: {
            const float a = static_cast<float>(1.0 / std::sqrt(static_cast<double>(info.fan)));
            return Tensor::uniform(info.shape, -a, a, rng, info.trainable);
        }
        case ParamInfo::Init::Zero:
            return Tensor::zeros(info.shape, info.trainable);
        case ParamInfo::Init::One:
            return Tensor::full(info.shape, 1.0f, info.trainable);
    }
    throw Error("unreachable init kind");
}

} // namespace

ModelParams::ModelParams(Variant variant, uint64_t seed, std::vector<BranchSpec> branches)
    : variant_(variant), seed_(seed), branches_(std::move(branches)) {
    std::vector<ParamInfo> infos;
    for (const auto& branch : branches_) collect_branch_params(branch, infos);
    for (const auto& info : infos) {
        ParamEntry entry{init_tensor(info, seed_), info.trainable};
        auto [it, inserted] = entries_.emplace(info.name, std::move(entry));
        if (!inserted) throw Error("duplicate parameter name: " + info.name);
    }
}

const BranchSpec& ModelParams::branch(const std::string& name) const {
    for (const auto& b : branches_)
        if (b.name == name) return b;
    throw ConfigError("model has no branch '" + name + "'");
}

bool ModelParams::has_branch(const std::string& name) const {
    for (const auto& b : branches_)
        if (b.name == name) return true;
    return false;
}

Tensor& ModelParams::tensor(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("model has no tensor '" + name + "'");
    return it->second.tensor;
}

const Tensor& ModelParams::tensor(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("model has no tensor '" + name + "'");
    return it->second.tensor;
}

std::vector<Tensor> ModelParams::trainable(const std::string& prefix) const {
    std::vector<Tensor> out;
    for (const auto& [name, entry] : entries_)
        if (entry.trainable && name.rfind(prefix, 0) == 0) out.push_back(entry.tensor);
    return out;
}

int64_t ModelParams::parameter_count(const std::string& prefix) const {
    int64_t count = 0;
    for (const auto& [name, entry] : entries_)
        if (entry.trainable && name.rfind(prefix, 0) == 0) count += entry.tensor.numel();
    return count;
}

ModelParams ModelParams::clone() const {
    ModelParams copy;
    copy.variant_ = variant_;
    copy.seed_ = seed_;
    copy.branches_ = branches_;
    for (const auto& [name, entry] : entries_)
        copy.entries_.emplace(name, ParamEntry{entry.tensor.clone_detached(), entry.trainable});
    return copy;
}

ModelParams build_model(Variant variant, uint64_t seed) {
    return ModelParams(variant, seed, canonical_branches(variant));
}

ModelParams build_stparnet(uint64_t seed) { return build_model(Variant::StParNet, seed); }
ModelParams build_dwparnet(uint64_t seed) { return build_model(Variant::DwParNet, seed); }

// ---------------------------------------------------------------------------
// Forward passes.
// ---------------------------------------------------------------------------

namespace {

Tensor flatten2d(const Tensor& x) {
    if (x.rank() == 2) return x;
    const int64_t n = x.dim(0);
    const int64_t f = x.numel() / n;
    std::vector<float> data(x.data().begin(), x.data().end());
    auto xi = x.impl();
    return nn::make_node({n, f}, std::move(data), {xi}, [xi](const std::vector<float>& dy) {
        if (!xi->needs_grad()) return;
        nn::accumulate_grad(*xi, dy);
    });
}

Tensor run_layers(const ModelParams& params, const BranchSpec& branch, Tensor cur,
                  const ForwardCtx& ctx) {
    for (size_t i = 0; i < branch.layers.size(); ++i) {
        const std::string base = branch.name + "." + std::to_string(i);
        const LayerSpec& layer = branch.layers[i];
        if (std::holds_alternative<PwConvSpec>(layer) ||
            std::holds_alternative<StdConvSpec>(layer)) {
            int stride = 1, pad = 0;
            if (std::holds_alternative<PwConvSpec>(layer)) {
                stride = std::get<PwConvSpec>(layer).stride;
            } else {
                stride = std::get<StdConvSpec>(layer).stride;
                pad = std::get<StdConvSpec>(layer).pad;
            }
            const Tensor& w = params.tensor(base + ".conv.weight");
            const Tensor& b = params.tensor(base + ".conv.bias");
            cur = nn::conv2d(cur, w, &b, stride, pad, 1);
            // BN buffers are mutated in train mode; const_cast keeps the
            // public surface const for inference callers.
            auto& rm = const_cast<Tensor&>(params.tensor(base + ".bn.running_mean"));
            auto& rv = const_cast<Tensor&>(params.tensor(base + ".bn.running_var"));
            cur = nn::batch_norm2d(cur, params.tensor(base + ".bn.gamma"),
                                   params.tensor(base + ".bn.beta"), rm, rv, ctx.training);
            cur = nn::relu(cur);
        } else if (std::holds_alternative<DwConvSpec>(layer)) {
            const auto& s = std::get<DwConvSpec>(layer);
            cur = nn::depthwise_conv2d(cur, params.tensor(base + ".conv.weight"),
                                       &params.tensor(base + ".conv.bias"), s.stride, 1);
            cur = nn::relu(cur);
        } else if (std::holds_alternative<PoolSpec>(layer)) {
            const auto& s = std::get<PoolSpec>(layer);
            cur = nn::adaptive_avg_pool2d(cur, s.out_h, s.out_w);
        } else if (std::holds_alternative<DropoutSpec>(layer)) {
            const auto& s = std::get<DropoutSpec>(layer);
            cur = flatten2d(cur);
            cur = nn::dropout(cur, s.p, ctx.training, ctx.dropout_seed,
                              mix64(fnv1a64(base), ctx.step));
        } else if (std::holds_alternative<LinearSpec>(layer)) {
            cur = flatten2d(cur);
            cur = nn::linear(cur, params.tensor(base + ".fc.weight"),
                             &params.tensor(base + ".fc.bias"));
        } else if (std::holds_alternative<LstmSpec>(layer)) {
            const auto& s = std::get<LstmSpec>(layer);
            std::vector<nn::LstmLayerParams> lp;
            lp.reserve(static_cast<size_t>(s.layers));
            for (int l = 0; l < s.layers; ++l) {
                const std::string lbase = base + ".lstm." + std::to_string(l);
                lp.push_back({params.tensor(lbase + ".w_input"),
                              params.tensor(lbase + ".w_hidden"),
                              params.tensor(lbase + ".bias")});
            }
            auto out = nn::lstm_forward(cur, lp);
            cur = nn::select_step(out.outputs, out.outputs.dim(0) - 1);
        }
    }
    return cur;
}

void check_spatial_input(const Tensor& input) {
    if (input.rank() != 4 || input.dim(1) != 3 || input.dim(2) != 9 || input.dim(3) != 9)
        throw ShapeError("spatial branch expects (N,3,9,9), got " + nn::shape_str(input.shape()));
}

void check_sequence_input(const Tensor& input) {
    if (input.rank() != 3 || input.dim(0) != can::kWindowMessages ||
        input.dim(2) != can::kFeatureCount)
        throw ShapeError("temporal branch expects (27,N,9), got " + nn::shape_str(input.shape()));
}

} // namespace

Tensor branch_forward(const ModelParams& params, const std::string& branch_name,
                      const Tensor& input, const ForwardCtx& ctx) {
    const BranchSpec& spec = params.branch(branch_name);
    if (branch_name == kTemporalBranch) check_sequence_input(input);
    else if (branch_name != kFusionHead) check_spatial_input(input);
    return run_layers(params, spec, input, ctx);
}

Tensor fusion_forward(const ModelParams& params, const Tensor& concat_features,
                      const ForwardCtx& ctx) {
    const BranchSpec& spec = params.branch(kFusionHead);
    if (concat_features.rank() != 4 || concat_features.dim(1) != spec.input_shape[0])
        throw ShapeError("fusion head expects (N," + std::to_string(spec.input_shape[0]) +
                         ",2,2), got " + nn::shape_str(concat_features.shape()));
    return run_layers(params, spec, concat_features, ctx);
}

Tensor dwparnet_forward(const ModelParams& params, const Tensor& images, const ForwardCtx& ctx) {
    check_spatial_input(images);
    std::vector<Tensor> features;
    features.reserve(3);
    for (const char* name : kSpatialBranches)
        features.push_back(branch_forward(params, name, images, ctx));
    return fusion_forward(params, nn::concat_channels(features), ctx);
}

Tensor stparnet_forward(const ModelParams& params, const Tensor& images, const Tensor& sequences,
                        const ForwardCtx& ctx) {
    if (params.variant() != Variant::StParNet)
        throw ConfigError("stparnet_forward called on a model without the temporal branch");
    check_spatial_input(images);
    check_sequence_input(sequences);
    if (images.dim(0) != sequences.dim(1))
        throw ShapeError("batch mismatch between image view (" + std::to_string(images.dim(0)) +
                         ") and sequence view (" + std::to_string(sequences.dim(1)) + ")");
    Tensor spatial = dwparnet_forward(params, images, ctx);
    Tensor temporal = branch_forward(params, kTemporalBranch, sequences, ctx);
    return nn::scale(nn::add(spatial, temporal), 0.5f);
}

Tensor image_batch(std::span<const can::Window> windows) {
    if (windows.empty()) throw ShapeError("image_batch: no windows");
    const auto n = static_cast<int64_t>(windows.size());
    std::vector<float> data(static_cast<size_t>(n) * can::kWindowValues);
    for (int64_t i = 0; i < n; ++i)
        std::memcpy(data.data() + i * can::kWindowValues, windows[static_cast<size_t>(i)].image.data(),
                    can::kWindowValues * sizeof(float));
    return Tensor::from({n, 3, 9, 9}, std::move(data));
}

Tensor sequence_batch(std::span<const can::Window> windows) {
    if (windows.empty()) throw ShapeError("sequence_batch: no windows");
    const auto n = static_cast<int64_t>(windows.size());
    std::vector<float> data(static_cast<size_t>(n) * can::kWindowValues);
    // (T,N,F) layout: step-major for the recurrent loop.
    for (int t = 0; t < can::kWindowMessages; ++t)
        for (int64_t i = 0; i < n; ++i)
            std::memcpy(data.data() + (static_cast<int64_t>(t) * n + i) * can::kFeatureCount,
                        windows[static_cast<size_t>(i)].image.data() + t * can::kFeatureCount,
                        can::kFeatureCount * sizeof(float));
    return Tensor::from({can::kWindowMessages, n, can::kFeatureCount}, std::move(data));
}

// ---------------------------------------------------------------------------
// Size accounting.
// ---------------------------------------------------------------------------

namespace {

constexpr double kMb = 1024.0 * 1024.0;

} // namespace

const SizeRow& SizeReport::row(const std::string& name) const {
    for (const auto& r : rows)
        if (r.name == name) return r;
    throw ConfigError("size report has no row '" + name + "'");
}

SizeReport size_report(const ModelParams& params, int reference_batch) {
    if (reference_batch < 1) throw ConfigError("size_report: batch must be >= 1");
    SizeReport report;
    report.reference_batch = reference_batch;
    report.model.name = "model";
    for (const auto& branch : params.branches()) {
        SizeRow row;
        row.name = branch.name;
        row.param_count = params.parameter_count(branch.name + ".");
        Shape cur = branch.input_shape;
        for (const auto& layer : branch.layers) {
            row.activation_elems += layer_output_elems(cur, layer);
            cur = spatial_after(cur, layer);
        }
        row.param_mb = static_cast<double>(row.param_count) * 4.0 / kMb;
        row.fwd_bwd_mb = static_cast<double>(row.activation_elems) * 2.0 * 4.0 / kMb;
        row.total_mb = row.param_mb + row.fwd_bwd_mb;
        report.model.param_count += row.param_count;
        report.model.activation_elems += row.activation_elems;
        report.rows.push_back(std::move(row));
    }
    report.model.param_mb = static_cast<double>(report.model.param_count) * 4.0 / kMb;
    report.model.fwd_bwd_mb = static_cast<double>(report.model.activation_elems) * 2.0 * 4.0 / kMb;
    report.model.total_mb = report.model.param_mb + report.model.fwd_bwd_mb;
    return report;
}

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'L', 'I', 'P', 'C'};

json layer_to_json(const LayerSpec& layer) {
    if (std::holds_alternative<PwConvSpec>(layer)) {
        const auto& s = std::get<PwConvSpec>(layer);
        return {{"kind", "pw"}, {"out", s.out_channels}, {"stride", s.stride}};
    }
    if (std::holds_alternative<DwConvSpec>(layer)) {
        return {{"kind", "dw"}, {"stride", std::get<DwConvSpec>(layer).stride}};
    }
    if (std::holds_alternative<StdConvSpec>(layer)) {
        const auto& s = std::get<StdConvSpec>(layer);
        return {{"kind", "conv"}, {"out", s.out_channels}, {"ksize", s.ksize},
                {"stride", s.stride}, {"pad", s.pad}};
    }
    if (std::holds_alternative<PoolSpec>(layer)) {
        const auto& s = std::get<PoolSpec>(layer);
        return {{"kind", "pool"}, {"h", s.out_h}, {"w", s.out_w}};
    }
    if (std::holds_alternative<DropoutSpec>(layer)) {
        return {{"kind", "dropout"}, {"p", std::get<DropoutSpec>(layer).p}};
    }
    if (std::holds_alternative<LinearSpec>(layer)) {
        return {{"kind", "linear"}, {"out", std::get<LinearSpec>(layer).out_features}};
    }
    const auto& s = std::get<LstmSpec>(layer);
    return {{"kind", "lstm"}, {"layers", s.layers}, {"hidden", s.hidden}};
}

LayerSpec layer_from_json(const json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "pw") return PwConvSpec{j.at("out").get<int>(), j.at("stride").get<int>()};
    if (kind == "dw") return DwConvSpec{j.at("stride").get<int>()};
    if (kind == "conv")
        return StdConvSpec{j.at("out").get<int>(), j.at("ksize").get<int>(),
                           j.at("stride").get<int>(), j.at("pad").get<int>()};
    if (kind == "pool") return PoolSpec{j.at("h").get<int>(), j.at("w").get<int>()};
    if (kind == "dropout") return DropoutSpec{j.at("p").get<double>()};
    if (kind == "linear") return LinearSpec{j.at("out").get<int>()};
    if (kind == "lstm") return LstmSpec{j.at("layers").get<int>(), j.at("hidden").get<int>()};
    throw IoError("checkpoint: unknown layer kind '" + kind + "'");
}

} // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    json arch;
    arch["variant"] = variant_name(params.variant());
    arch["seed"] = params.seed();
    arch["branches"] = json::array();
    for (const auto& branch : params.branches()) {
        json b;
        b["name"] = branch.name;
        b["input"] = branch.input_shape;
        b["layers"] = json::array();
        for (const auto& layer : branch.layers) b["layers"].push_back(layer_to_json(layer));
        arch["branches"].push_back(std::move(b));
    }
    const std::string arch_str = arch.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    out.write(kCheckpointMagic, 4);
    const uint16_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const auto arch_len = static_cast<uint32_t>(arch_str.size());
    out.write(reinterpret_cast<const char*>(&arch_len), sizeof(arch_len));
    out.write(arch_str.data(), static_cast<std::streamsize>(arch_str.size()));
    const auto count = static_cast<uint32_t>(params.entries().size());
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& [name, entry] : params.entries()) {
        const auto name_len = static_cast<uint32_t>(name.size());
        out.write(reinterpret_cast<const char*>(&name_len), sizeof(name_len));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        const uint8_t trainable = entry.trainable ? 1 : 0;
        out.write(reinterpret_cast<const char*>(&trainable), sizeof(trainable));
        const auto ndim = static_cast<uint32_t>(entry.tensor.rank());
        out.write(reinterpret_cast<const char*>(&ndim), sizeof(ndim));
        for (int64_t d : entry.tensor.shape())
            out.write(reinterpret_cast<const char*>(&d), sizeof(d));
        out.write(reinterpret_cast<const char*>(entry.tensor.raw()),
                  static_cast<std::streamsize>(entry.tensor.numel() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw IoError("not a checkpoint (bad magic): " + path.string());
    uint16_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!in || version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    uint32_t arch_len = 0;
    in.read(reinterpret_cast<char*>(&arch_len), sizeof(arch_len));
    std::string arch_str(arch_len, '\0');
    in.read(arch_str.data(), arch_len);
    if (!in) throw IoError("checkpoint truncated in architecture block");

    json arch;
    try {
        arch = json::parse(arch_str);
    } catch (const json::exception& e) {
        throw IoError(std::string("checkpoint architecture block is invalid JSON: ") + e.what());
    }

    ModelParams params;
    params.variant_ = variant_from_name(arch.at("variant").get<std::string>());
    params.seed_ = arch.at("seed").get<uint64_t>();
    for (const auto& b : arch.at("branches")) {
        std::vector<LayerSpec> layers;
        for (const auto& lj : b.at("layers")) layers.push_back(layer_from_json(lj));
        params.branches_.push_back(make_branch(b.at("name").get<std::string>(),
                                               b.at("input").get<Shape>(), std::move(layers)));
    }

    uint32_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in) throw IoError("checkpoint truncated before tensor table");
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = 0;
        in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        uint8_t trainable = 0;
        in.read(reinterpret_cast<char*>(&trainable), sizeof(trainable));
        uint32_t ndim = 0;
        in.read(reinterpret_cast<char*>(&ndim), sizeof(ndim));
        if (!in || ndim > 8) throw IoError("checkpoint truncated or corrupt in tensor header");
        Shape shape(ndim);
        for (auto& d : shape) in.read(reinterpret_cast<char*>(&d), sizeof(d));
        const int64_t numel = nn::shape_numel(shape);
        if (!in || numel <= 0 || numel > (1LL << 30))
            throw IoError("checkpoint tensor '" + name + "' has corrupt shape");
        std::vector<float> data(static_cast<size_t>(numel));
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(float)));
        if (!in) throw IoError("checkpoint truncated in tensor '" + name + "'");
        Tensor t = Tensor::from(std::move(shape), std::move(data), trainable != 0);
        params.entries_.emplace(std::move(name), ParamEntry{std::move(t), trainable != 0});
    }

    // The tensor table must exactly match what the descriptor implies.
    std::vector<ParamInfo> expected;
    for (const auto& branch : params.branches_) collect_branch_params(branch, expected);
    if (expected.size() != params.entries_.size())
        throw IoError("checkpoint tensor count does not match its architecture descriptor");
    for (const auto& info : expected) {
        auto it = params.entries_.find(info.name);
        if (it == params.entries_.end())
            throw IoError("checkpoint is missing tensor '" + info.name + "'");
        if (it->second.tensor.shape() != info.shape)
            throw IoError("checkpoint tensor '" + info.name + "' has shape " +
                          nn::shape_str(it->second.tensor.shape()) + ", expected " +
                          nn::shape_str(info.shape));
    }
    return params;
}

} // namespace lipar::model
