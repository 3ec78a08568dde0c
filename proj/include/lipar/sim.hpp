#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lipar/allocator.hpp"
#include "lipar/can_data.hpp"
#include "lipar/model.hpp"
#include "lipar/trainer.hpp"

namespace lipar::sim {

/// Synthetic completion-time model: a task on a device takes
/// base_ms + per_mb_ms * branch_total_mb of virtual time. Defaults are zero,
/// which collapses every timestamp onto the dispatch instant.
struct DelayModel {
    double base_ms = 0.0;
    double per_mb_ms = 0.0;
    double preprocess_ms = 0.0; // central-module preprocessing, traced separately
};

struct Scenario {
    DelayModel delay;
    std::vector<std::string> failed_devices; // their tasks surface as timeouts
    double timeout_ms = 1000.0;
};

/// One branch task execution as observed in the trace. Timestamps are virtual
/// nanoseconds: a device starts a task at max(its previous completion, the
/// dispatch time) and finishes after the modeled delay, so per-device
/// intervals never overlap regardless of real thread interleaving.
struct TraceRow {
    int64_t window = 0;
    std::string branch;
    std::string device;
    int64_t dispatch_ns = 0;
    int64_t start_ns = 0;
    int64_t complete_ns = 0;
    bool timeout = false;
};

/// Per-window fusion outcome.
struct WindowRow {
    int64_t window = 0;
    int64_t preprocess_ns = 0; // spent at the central module before dispatch
    int64_t dispatch_ns = 0;
    int64_t fusion_ns = 0; // >= max branch completion for the window
    int predicted = -1;    // -1 when a branch timed out
    int truth = -1;
};

struct SimTrace {
    std::vector<TraceRow> tasks;
    std::vector<WindowRow> windows;
};

struct SimResult {
    SimTrace trace;
    train::EvalReport report;
    std::vector<int> predictions; // -1 where timed out
};

struct DetectionEvent {
    int64_t window_index = 0;
    can::TrafficLabel predicted = can::TrafficLabel::Normal;
    int64_t latency_ns = 0; // dispatch -> fusion
};

/// Distributed inference: a central module preprocesses each window,
/// dispatches the four branch tasks by message passing to their assigned
/// device workers, joins on all four results, then fuses and classifies.
/// Predictions are bit-identical to the monolithic stparnet_forward.
/// Requires a plan that assigns every branch; lists the missing ones otherwise.
SimResult run_simulation(const model::ModelParams& params, const alloc::AllocationPlan& plan,
                         std::span<const can::Window> windows,
                         const std::vector<alloc::DeviceProfile>& devices,
                         const Scenario& scenario = {});

/// Pull-based record source; nullopt ends the stream.
using RecordSource = std::function<std::optional<can::CanRecord>()>;

/// Buffers 27 records into a window, runs the distributed per-window path and
/// emits one event per completed window. A trailing partial window is
/// discarded with a notice.
std::vector<DetectionEvent> stream_detect(const model::ModelParams& params,
                                          const alloc::AllocationPlan& plan,
                                          const std::vector<alloc::DeviceProfile>& devices,
                                          RecordSource source, const Scenario& scenario = {},
                                          SimTrace* trace_out = nullptr);

void write_trace_csv(const std::filesystem::path& path, const SimTrace& trace);

} // namespace lipar::sim
