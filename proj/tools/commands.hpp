#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lipar/can_data.hpp"

namespace lipar::cli {

inline constexpr const char* kToolVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitDataError = 2;
inline constexpr int kExitRuntimeError = 3;

/// One input capture: label in {normal,dos,fuzzy,gear,rpm} plus a CSV path.
struct InputSpec {
    std::string label;
    std::string path;
};

/// label=count synthetic traffic request.
struct SyntheticSpec {
    std::string label;
    uint64_t count = 0;
};

struct PreprocessArgs {
    std::vector<InputSpec> inputs;
    std::vector<SyntheticSpec> synthetic;
    std::string label_mode = "flag"; // flag | fixed
    std::string data_dir;            // prefix tried for non-absolute inputs
    std::string out = "windows.lipw";
    uint64_t seed = 0;
    can::SplitRatios ratios;
};
int cmd_preprocess(const PreprocessArgs& args);

struct TrainArgs {
    std::string windows;
    std::string variant = "st";
    int epochs = 14;
    int batch = 32;
    double lr = 1e-4;
    std::optional<uint64_t> seed; // defaults to the windows-file seed
    can::SplitRatios ratios;
    std::string out_checkpoint = "model.lipc";
    std::string out_history = "history.json";
    bool quiet = false;
};
int cmd_train(const TrainArgs& args);

struct EvalArgs {
    std::string checkpoint;
    std::string windows;
    std::string split = "test"; // train | val | test | all
    can::SplitRatios ratios;
    std::optional<uint64_t> seed;
    std::string out = "eval.json";
    bool throughput = false;
};
int cmd_eval(const EvalArgs& args);

struct SizeArgs {
    std::string checkpoint;
    std::string out; // optional JSON dump
    int batch = 32;
};
int cmd_size(const SizeArgs& args);

struct AllocateArgs {
    std::string devices;   // devices JSON (required)
    std::string checkpoint; // branch profiles from the size report...
    std::string branches;   // ...or explicit overrides JSON
    int alpha = 1;
    int beta = 2;
    std::string out = "plan.json";
};
int cmd_allocate(const AllocateArgs& args);

struct SimulateArgs {
    std::string checkpoint;
    std::string plan;
    std::string devices;
    std::string windows; // windows file...
    std::vector<SyntheticSpec> synthetic; // ...or synthetic stream
    std::string scenario; // optional scenario JSON
    uint64_t limit = 0;   // 0 = all windows
    uint64_t seed = 0;
    std::string out_trace = "trace.csv";
    std::string out_report = "sim_report.json";
};
int cmd_simulate(const SimulateArgs& args);

struct ReportArgs {
    std::string history; // history.json from train
    std::string eval;    // eval.json from eval (optional)
    std::string out_dir = ".";
};
int cmd_report(const ReportArgs& args);

/// "0.7,0.2,0.1" -> ratios. Throws ConfigError on malformed input.
can::SplitRatios parse_ratios(const std::string& s);

} // namespace lipar::cli
