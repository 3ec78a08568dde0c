#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lipar/can_data.hpp"
#include "lipar/ops.hpp"

namespace lipar::model {

using nn::Shape;
using nn::Tensor;

enum class Variant { DwParNet, StParNet };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// ---------------------------------------------------------------------------
// Architecture description. The same tables drive parameter creation, the
// forward pass, the size report, and the checkpoint descriptor.
// ---------------------------------------------------------------------------

/// 1x1 conv (+BN+ReLU) used where the channel count changes.
struct PwConvSpec {
    int out_channels;
    int stride = 1;
};
/// 3x3 depthwise conv (+ReLU); one kernel per channel.
struct DwConvSpec {
    int stride = 1;
};
/// Full 3x3 conv (+BN+ReLU); only the fusion head uses it.
struct StdConvSpec {
    int out_channels;
    int ksize = 3;
    int stride = 1;
    int pad = 1;
};
struct PoolSpec {
    int out_h;
    int out_w;
};
struct DropoutSpec {
    double p;
};
struct LinearSpec {
    int out_features;
};
struct LstmSpec {
    int layers;
    int hidden;
};

using LayerSpec =
    std::variant<PwConvSpec, DwConvSpec, StdConvSpec, PoolSpec, DropoutSpec, LinearSpec, LstmSpec>;

struct BranchSpec {
    std::string name;
    std::vector<LayerSpec> layers;
    Shape input_shape;  // per sample
    Shape output_shape; // per sample
};

inline constexpr const char* kSpatialBranches[] = {"branch1", "branch2", "branch3"};
inline constexpr const char* kTemporalBranch = "branch4";
inline constexpr const char* kFusionHead = "fusion";

/// The canonical STParNet branch tables (DWParNet omits branch4).
std::vector<BranchSpec> canonical_branches(Variant variant);

// ---------------------------------------------------------------------------
// Parameters.
// ---------------------------------------------------------------------------

struct ParamEntry {
    Tensor tensor;
    bool trainable = true;
};

class ModelParams {
public:
    ModelParams() = default;
    ModelParams(Variant variant, uint64_t seed, std::vector<BranchSpec> branches);

    Variant variant() const { return variant_; }
    uint64_t seed() const { return seed_; }
    const std::vector<BranchSpec>& branches() const { return branches_; }
    const BranchSpec& branch(const std::string& name) const;
    bool has_branch(const std::string& name) const;

    Tensor& tensor(const std::string& name);
    const Tensor& tensor(const std::string& name) const;
    const std::map<std::string, ParamEntry>& entries() const { return entries_; }

    /// Trainable tensors, optionally restricted to one branch prefix.
    std::vector<Tensor> trainable(const std::string& prefix = "") const;
    int64_t parameter_count(const std::string& prefix) const;

    ModelParams clone() const;

private:
    friend ModelParams load_checkpoint(const std::filesystem::path&);
    Variant variant_ = Variant::StParNet;
    uint64_t seed_ = 0;
    std::vector<BranchSpec> branches_;
    std::map<std::string, ParamEntry> entries_; // sorted -> deterministic files
};

/// Builds a freshly initialized model. Initialization is a pure function of
/// (seed, tensor name), so the spatial branches of a DWParNet and an STParNet
/// built from the same seed start identical.
ModelParams build_model(Variant variant, uint64_t seed);
ModelParams build_stparnet(uint64_t seed);
ModelParams build_dwparnet(uint64_t seed);

// ---------------------------------------------------------------------------
// Forward passes.
// ---------------------------------------------------------------------------

/// Per-call forward context. Training mode enables batch statistics and
/// dropout; (dropout_seed, step) make every dropout mask reproducible.
struct ForwardCtx {
    bool training = false;
    uint64_t dropout_seed = 0;
    uint64_t step = 0;
};

/// Runs one branch. Spatial branches take (N,3,9,9) and return (N,C,2,2);
/// branch4 takes (27,N,9) and returns logits (N,5).
Tensor branch_forward(const ModelParams& params, const std::string& branch, const Tensor& input,
                      const ForwardCtx& ctx);

/// Fusion head over the concatenated spatial features -> logits (N,5).
Tensor fusion_forward(const ModelParams& params, const Tensor& concat_features,
                      const ForwardCtx& ctx);

/// Three spatial branches + fusion head -> logits (N,5).
Tensor dwparnet_forward(const ModelParams& params, const Tensor& images, const ForwardCtx& ctx);

/// Mean of the spatial logits and the temporal logits -> logits (N,5).
Tensor stparnet_forward(const ModelParams& params, const Tensor& images, const Tensor& sequences,
                        const ForwardCtx& ctx);

/// Batch assembly from windows.
Tensor image_batch(std::span<const can::Window> windows);
Tensor sequence_batch(std::span<const can::Window> windows);

// ---------------------------------------------------------------------------
// Size accounting.
// ---------------------------------------------------------------------------

struct SizeRow {
    std::string name;
    int64_t param_count = 0;
    int64_t activation_elems = 0; // per sample, one entry per layer output
    double fwd_bwd_mb = 0.0;
    double param_mb = 0.0;
    double total_mb = 0.0;
};

struct SizeReport {
    int reference_batch = 32;
    std::vector<SizeRow> rows; // branches then fusion
    SizeRow model;             // grand totals
    const SizeRow& row(const std::string& name) const;
};

/// Table of per-branch and total sizes. Parameter bytes are 4 x trainable
/// element count; forward/backward bytes are 2 x 4 x the per-sample layer
/// output elements (shape inference runs at `reference_batch` and is
/// normalized per sample, so the report is batch-invariant). MB is 2^20 bytes.
SizeReport size_report(const ModelParams& params, int reference_batch = 32);

// ---------------------------------------------------------------------------
// Checkpoints: "LIPC" | u16 version | u32 json_len | architecture JSON |
// u32 tensor count | per tensor: name, trainable flag, shape, float32 data.
// ---------------------------------------------------------------------------

inline constexpr uint16_t kCheckpointVersion = 1;

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

} // namespace lipar::model
