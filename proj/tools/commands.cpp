#include "commands.hpp"

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "lipar/allocator.hpp"
#include "lipar/model.hpp"
#include "lipar/prng.hpp"
#include "lipar/sim.hpp"
#include "lipar/trainer.hpp"

namespace lipar::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
    return buf;
}

/// Every artifact-producing run writes one manifest beside its primary output.
void write_manifest(const std::string& primary_output, const std::string& subcommand,
                    const json& config, const std::vector<std::string>& input_paths,
                    const std::vector<std::string>& output_paths) {
    json manifest;
    manifest["tool"] = "lipar";
    manifest["version"] = kToolVersion;
    manifest["subcommand"] = subcommand;
    manifest["timestamp_utc"] = timestamp_utc();
    manifest["config"] = config;
    manifest["inputs"] = json::array();
    for (const auto& path : input_paths) {
        json entry;
        entry["path"] = path;
        entry["bytes"] = static_cast<uint64_t>(fs::file_size(path));
        entry["fnv1a64"] = hex64(fnv1a64_file(path));
        manifest["inputs"].push_back(entry);
    }
    manifest["outputs"] = output_paths;
    const std::string path = primary_output + ".manifest.json";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << manifest.dump(2) << "\n";
}

json ratios_json(const can::SplitRatios& r) {
    return json{{"train", r.train}, {"validation", r.validation}, {"test", r.test}};
}

json eval_report_json(const train::EvalReport& report) {
    json j;
    j["count"] = report.count;
    j["accuracy"] = report.accuracy;
    j["auc_macro"] = report.auc_macro;
    json per_class;
    for (int cls = 0; cls < can::kNumClasses; ++cls) {
        const double v = report.per_class_accuracy[static_cast<size_t>(cls)];
        const char* name = can::label_name(static_cast<can::TrafficLabel>(cls));
        if (v < 0) per_class[name] = nullptr;
        else per_class[name] = v;
    }
    j["per_class_accuracy"] = per_class;
    j["confusion"] = report.confusion;
    j["items_per_second_train"] = report.items_per_second_train;
    j["items_per_second_infer"] = report.items_per_second_infer;
    j["warnings"] = report.warnings;
    return j;
}

void print_eval_report(const train::EvalReport& report) {
    std::printf("windows evaluated : %" PRId64 "\n", report.count);
    std::printf("accuracy          : %.6f\n", report.accuracy);
    std::printf("macro AUC         : %.6f\n", report.auc_macro);
    if (report.items_per_second_infer > 0)
        std::printf("infer items/s     : %.2f\n", report.items_per_second_infer);
    if (report.items_per_second_train > 0)
        std::printf("train items/s     : %.2f\n", report.items_per_second_train);
    std::printf("%-8s %10s   confusion (rows = truth)\n", "class", "accuracy");
    for (int cls = 0; cls < can::kNumClasses; ++cls) {
        const double v = report.per_class_accuracy[static_cast<size_t>(cls)];
        std::printf("%-8s %10s  ", can::label_name(static_cast<can::TrafficLabel>(cls)),
                    v < 0 ? "-" : std::to_string(v).substr(0, 8).c_str());
        for (int p = 0; p < can::kNumClasses; ++p)
            std::printf(" %8" PRId64, report.confusion[static_cast<size_t>(cls)][static_cast<size_t>(p)]);
        std::printf("\n");
    }
    for (const auto& w : report.warnings) std::printf("note: %s\n", w.c_str());
}

can::TrafficLabel require_label(const std::string& name) {
    return can::label_from_name(name);
}

fs::path resolve_input(const std::string& path, const std::string& data_dir) {
    fs::path p(path);
    if (fs::exists(p)) return p;
    if (!data_dir.empty() && p.is_relative()) {
        fs::path joined = fs::path(data_dir) / p;
        if (fs::exists(joined)) return joined;
    }
    throw IoError("input not found: " + path);
}

std::vector<can::Window> synthetic_windows(std::span<const SyntheticSpec> specs, uint64_t seed) {
    std::vector<can::Window> windows;
    uint64_t base_index = 0;
    for (const auto& spec : specs) {
        const auto kind = require_label(spec.label);
        const auto records = can::synthesize_traffic(kind, spec.count, seed);
        auto built = can::build_windows(records, base_index);
        base_index += records.size();
        windows.insert(windows.end(), built.begin(), built.end());
    }
    return windows;
}

std::vector<alloc::DeviceProfile> load_devices(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open devices config: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path + ": invalid JSON: " + e.what());
    }
    std::vector<alloc::DeviceProfile> devices;
    for (const auto& d : j.at("devices")) {
        alloc::DeviceProfile dev;
        dev.id = d.at("id").get<std::string>();
        dev.processor_idle = d.at("processor_idle").get<double>();
        dev.memory_idle = d.at("memory_idle").get<double>();
        dev.risk = d.at("risk").get<int>();
        dev.total_memory_mb = d.at("memory_mb").get<double>();
        devices.push_back(std::move(dev));
    }
    if (devices.empty()) throw ConfigError(path + ": no devices listed");
    return devices;
}

std::vector<alloc::BranchProfile> branches_from_checkpoint(const std::string& path) {
    const auto params = model::load_checkpoint(path);
    if (params.variant() != model::Variant::StParNet)
        throw ConfigError("allocation needs the four-branch model (variant st)");
    const auto report = model::size_report(params);
    std::vector<alloc::BranchProfile> branches;
    for (const char* name : {"branch1", "branch2", "branch3", "branch4"}) {
        const auto& row = report.row(name);
        branches.push_back(alloc::BranchProfile::make(name, row.fwd_bwd_mb, row.param_mb));
    }
    return branches;
}

std::vector<alloc::BranchProfile> load_branches(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open branch profiles: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path + ": invalid JSON: " + e.what());
    }
    std::vector<alloc::BranchProfile> branches;
    for (const auto& b : j.at("branches")) {
        std::optional<double> total;
        if (b.contains("total_mb")) total = b.at("total_mb").get<double>();
        branches.push_back(alloc::BranchProfile::make(b.at("id").get<std::string>(),
                                                      b.at("fwd_bwd_mb").get<double>(),
                                                      b.at("param_mb").get<double>(), total));
    }
    if (branches.empty()) throw ConfigError(path + ": no branches listed");
    return branches;
}

json plan_json(const alloc::AllocationPlan& plan) {
    json j;
    j["alpha"] = plan.alpha;
    j["beta"] = plan.beta;
    json assignments;
    for (const auto& a : plan.assignments) {
        assignments[a.branch_id] = {{"device", a.device_id},
                                    {"availability", a.availability},
                                    {"occupation", a.occupation}};
    }
    j["assignments"] = assignments;
    j["unassigned"] = plan.unassigned;
    j["scores"] = json::array();
    for (const auto& s : plan.scores) {
        j["scores"].push_back({{"device", s.device_id},
                               {"branch", s.branch_id},
                               {"availability", s.availability},
                               {"occupation", s.occupation},
                               {"memory_ratio", s.memory_ratio},
                               {"fits_memory", s.fits_memory},
                               {"eligible", s.eligible}});
    }
    return j;
}

alloc::AllocationPlan plan_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open plan: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path + ": invalid JSON: " + e.what());
    }
    alloc::AllocationPlan plan;
    plan.alpha = j.value("alpha", 1);
    plan.beta = j.value("beta", 2);
    for (const auto& [branch, a] : j.at("assignments").items()) {
        alloc::Assignment assignment;
        assignment.branch_id = branch;
        assignment.device_id = a.at("device").get<std::string>();
        assignment.availability = a.value("availability", 0.0);
        assignment.occupation = a.value("occupation", 0.0);
        plan.assignments.push_back(std::move(assignment));
    }
    if (j.contains("unassigned"))
        plan.unassigned = j.at("unassigned").get<std::vector<std::string>>();
    return plan;
}

sim::Scenario load_scenario(const std::string& path) {
    sim::Scenario scenario;
    if (path.empty()) return scenario;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scenario: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path + ": invalid JSON: " + e.what());
    }
    scenario.delay.base_ms = j.value("base_ms", 0.0);
    scenario.delay.per_mb_ms = j.value("per_mb_ms", 0.0);
    scenario.delay.preprocess_ms = j.value("preprocess_ms", 0.0);
    scenario.timeout_ms = j.value("timeout_ms", 1000.0);
    if (j.contains("failed_devices"))
        scenario.failed_devices = j.at("failed_devices").get<std::vector<std::string>>();
    return scenario;
}

/// Loads a windows file and returns the requested split subset.
std::vector<can::Window> select_split(const std::string& windows_path, const std::string& which,
                                      const can::SplitRatios& ratios,
                                      std::optional<uint64_t> seed_override) {
    const auto file = can::read_windows_file(windows_path);
    if (which == "all") return file.windows;
    const uint64_t seed = seed_override.value_or(file.seed);
    auto split = can::split_dataset(file.windows, ratios, seed);
    if (which == "train") return std::move(split.train);
    if (which == "val" || which == "validation") return std::move(split.validation);
    if (which == "test") return std::move(split.test);
    throw ConfigError("unknown split '" + which + "' (expected train|val|test|all)");
}

} // namespace

can::SplitRatios parse_ratios(const std::string& s) {
    can::SplitRatios out;
    double values[3];
    size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
        const size_t comma = i < 2 ? s.find(',', pos) : s.size();
        if (comma == std::string::npos) throw ConfigError("ratios must be train,val,test");
        try {
            values[i] = std::stod(s.substr(pos, comma - pos));
        } catch (const std::exception&) {
            throw ConfigError("malformed ratio in '" + s + "'");
        }
        pos = comma + 1;
    }
    out.train = values[0];
    out.validation = values[1];
    out.test = values[2];
    return out;
}

int cmd_preprocess(const PreprocessArgs& args) {
    if (args.inputs.empty() && args.synthetic.empty())
        throw ConfigError("preprocess: provide --input label=path or --synthetic label=count");
    const can::LabelMode mode =
        args.label_mode == "fixed" ? can::LabelMode::Fixed : can::LabelMode::FlagColumn;
    if (args.label_mode != "fixed" && args.label_mode != "flag")
        throw ConfigError("label-mode must be flag|fixed");

    can::WindowsFile file;
    file.seed = args.seed;
    std::vector<std::string> input_paths;
    uint64_t base_index = 0;
    for (const auto& input : args.inputs) {
        const auto label = require_label(input.label);
        const auto path = resolve_input(input.path, args.data_dir);
        input_paths.push_back(path.string());
        // A file labeled normal is all-normal regardless of mode.
        const auto records = can::parse_can_csv(
            path, label == can::TrafficLabel::Normal ? can::LabelMode::Fixed : mode, label);
        auto windows = can::build_windows(records, base_index);
        base_index += records.size();
        std::fprintf(stderr, "%s: %zu records -> %zu windows\n", path.c_str(), records.size(),
                     windows.size());
        file.windows.insert(file.windows.end(), windows.begin(), windows.end());
    }
    for (const auto& spec : args.synthetic) {
        const auto kind = require_label(spec.label);
        const auto records = can::synthesize_traffic(kind, spec.count, args.seed);
        auto windows = can::build_windows(records, base_index);
        base_index += records.size();
        file.windows.insert(file.windows.end(), windows.begin(), windows.end());
    }
    if (file.windows.empty()) throw ConfigError("preprocess: no windows produced");

    can::write_windows_file(args.out, file);
    std::printf("wrote %zu windows to %s (seed %" PRIu64 ")\n", file.windows.size(),
                args.out.c_str(), args.seed);

    json config;
    config["seed"] = args.seed;
    config["label_mode"] = args.label_mode;
    config["ratios"] = ratios_json(args.ratios);
    json inputs = json::array();
    for (const auto& i : args.inputs) inputs.push_back({{"label", i.label}, {"path", i.path}});
    for (const auto& s : args.synthetic)
        inputs.push_back({{"label", s.label}, {"synthetic_count", s.count}});
    config["inputs"] = inputs;
    write_manifest(args.out, "preprocess", config, input_paths, {args.out});
    return kExitOk;
}

int cmd_train(const TrainArgs& args) {
    const auto file = can::read_windows_file(args.windows);
    const uint64_t seed = args.seed.value_or(file.seed);
    auto split = can::split_dataset(file.windows, args.ratios, seed);

    train::TrainConfig config;
    config.lr = args.lr;
    config.batch = args.batch;
    config.epochs = args.epochs;
    config.seed = seed;
    config.variant = model::variant_from_name(args.variant);
    config.verbose = !args.quiet;

    auto result = train::train(split, config);
    model::save_checkpoint(result.params, args.out_checkpoint);

    json history;
    history["variant"] = args.variant;
    history["seed"] = seed;
    history["lr"] = args.lr;
    history["batch"] = args.batch;
    history["epochs"] = args.epochs;
    history["ratios"] = ratios_json(args.ratios);
    history["history"] = json::array();
    for (const auto& e : result.history) {
        history["history"].push_back({{"epoch", e.epoch},
                                      {"train_loss", e.train_loss},
                                      {"train_accuracy", e.train_accuracy},
                                      {"val_loss", e.val_loss},
                                      {"val_accuracy", e.val_accuracy},
                                      {"seconds", e.seconds}});
    }
    std::ofstream hist_out(args.out_history, std::ios::trunc);
    if (!hist_out) throw IoError("cannot write history: " + args.out_history);
    hist_out << history.dump(2) << "\n";
    hist_out.close();

    std::printf("trained %s for %d epochs on %zu windows; final val_acc %.4f\n", args.variant.c_str(),
                args.epochs, split.train.size(), result.history.back().val_accuracy);
    std::printf("checkpoint: %s\nhistory: %s\n", args.out_checkpoint.c_str(),
                args.out_history.c_str());

    json config_json;
    config_json["variant"] = args.variant;
    config_json["seed"] = seed;
    config_json["lr"] = args.lr;
    config_json["batch"] = args.batch;
    config_json["epochs"] = args.epochs;
    config_json["ratios"] = ratios_json(args.ratios);
    write_manifest(args.out_checkpoint, "train", config_json, {args.windows},
                   {args.out_checkpoint, args.out_history});
    return kExitOk;
}

int cmd_eval(const EvalArgs& args) {
    const auto params = model::load_checkpoint(args.checkpoint);
    auto windows = select_split(args.windows, args.split, args.ratios, args.seed);
    if (windows.empty()) throw ConfigError("eval: selected split is empty");

    auto report = train::evaluate(params, windows);
    if (args.throughput) {
        constexpr int kWarmup = 2, kReps = 5, kBatch = 32;
        const size_t needed = static_cast<size_t>((kWarmup + kReps) * kBatch);
        if (windows.size() >= needed) {
            report.items_per_second_infer = train::measure_throughput(
                params, windows, train::ThroughputMode::Infer, kWarmup, kReps, kBatch);
            report.items_per_second_train = train::measure_throughput(
                params, windows, train::ThroughputMode::Train, kWarmup, kReps, kBatch);
        } else {
            log_warn("eval: not enough windows for throughput measurement (need " +
                     std::to_string(needed) + ")");
        }
    }

    print_eval_report(report);
    std::ofstream out(args.out, std::ios::trunc);
    if (!out) throw IoError("cannot write eval report: " + args.out);
    out << eval_report_json(report).dump(2) << "\n";
    out.close();

    json config;
    config["split"] = args.split;
    config["ratios"] = ratios_json(args.ratios);
    config["throughput"] = args.throughput;
    write_manifest(args.out, "eval", config, {args.checkpoint, args.windows}, {args.out});
    return kExitOk;
}

int cmd_size(const SizeArgs& args) {
    const auto params = model::load_checkpoint(args.checkpoint);
    const auto report = model::size_report(params, args.batch);

    std::printf("%-10s %12s %14s %12s %12s\n", "branch", "params", "fwd/bwd (MB)", "params (MB)",
                "total (MB)");
    auto print_row = [](const model::SizeRow& row) {
        std::printf("%-10s %12" PRId64 " %14.2f %12.2f %12.2f\n", row.name.c_str(),
                    row.param_count, row.fwd_bwd_mb, row.param_mb, row.total_mb);
    };
    for (const auto& row : report.rows) print_row(row);
    print_row(report.model);

    if (!args.out.empty()) {
        json j;
        j["reference_batch"] = report.reference_batch;
        j["rows"] = json::array();
        auto row_json = [](const model::SizeRow& row) {
            return json{{"name", row.name},
                        {"param_count", row.param_count},
                        {"fwd_bwd_mb", row.fwd_bwd_mb},
                        {"param_mb", row.param_mb},
                        {"total_mb", row.total_mb}};
        };
        for (const auto& row : report.rows) j["rows"].push_back(row_json(row));
        j["model"] = row_json(report.model);
        std::ofstream out(args.out, std::ios::trunc);
        if (!out) throw IoError("cannot write size report: " + args.out);
        out << j.dump(2) << "\n";
        out.close();
        write_manifest(args.out, "size", json{{"reference_batch", args.batch}}, {args.checkpoint},
                       {args.out});
    }
    return kExitOk;
}

int cmd_allocate(const AllocateArgs& args) {
    if (args.devices.empty()) throw ConfigError("allocate: --devices is required");
    if (args.checkpoint.empty() == args.branches.empty())
        throw ConfigError("allocate: provide exactly one of --checkpoint or --branches");
    const auto devices = load_devices(args.devices);
    const auto branches = args.branches.empty() ? branches_from_checkpoint(args.checkpoint)
                                                : load_branches(args.branches);

    const auto plan = alloc::allocate(devices, branches, args.alpha, args.beta);

    std::printf("%-10s %10s %10s %10s %10s %6s\n", "branch", "device", "U", "O", "mem", "ok");
    for (const auto& s : plan.scores)
        std::printf("%-10s %10s %10.4f %10.4f %10.4f %6s\n", s.branch_id.c_str(),
                    s.device_id.c_str(), s.availability, s.occupation, s.memory_ratio,
                    s.eligible ? "yes" : "no");
    std::printf("assignments:\n");
    for (const auto& a : plan.assignments)
        std::printf("  %-10s -> %-10s (U=%.4f, O=%.4f)\n", a.branch_id.c_str(),
                    a.device_id.c_str(), a.availability, a.occupation);
    for (const auto& u : plan.unassigned) std::printf("  %-10s -> UNASSIGNED\n", u.c_str());

    std::ofstream out(args.out, std::ios::trunc);
    if (!out) throw IoError("cannot write plan: " + args.out);
    out << plan_json(plan).dump(2) << "\n";
    out.close();

    std::vector<std::string> inputs = {args.devices};
    if (!args.checkpoint.empty()) inputs.push_back(args.checkpoint);
    if (!args.branches.empty()) inputs.push_back(args.branches);
    write_manifest(args.out, "allocate", json{{"alpha", args.alpha}, {"beta", args.beta}}, inputs,
                   {args.out});
    return kExitOk;
}

int cmd_simulate(const SimulateArgs& args) {
    const auto params = model::load_checkpoint(args.checkpoint);
    const auto plan = plan_from_json_file(args.plan);
    const auto devices = load_devices(args.devices);
    const auto scenario = load_scenario(args.scenario);

    std::vector<can::Window> windows;
    if (!args.windows.empty()) {
        windows = can::read_windows_file(args.windows).windows;
    } else if (!args.synthetic.empty()) {
        windows = synthetic_windows(args.synthetic, args.seed);
    } else {
        throw ConfigError("simulate: provide --windows or --synthetic label=count");
    }
    if (args.limit > 0 && windows.size() > args.limit) windows.resize(args.limit);
    if (windows.empty()) throw ConfigError("simulate: no windows to process");

    const auto result = sim::run_simulation(params, plan, windows, devices, scenario);
    sim::write_trace_csv(args.out_trace, result.trace);

    std::printf("simulated %zu windows across %zu devices\n", windows.size(), devices.size());
    print_eval_report(result.report);
    if (!result.trace.windows.empty()) {
        double mean_latency = 0;
        for (const auto& w : result.trace.windows)
            mean_latency += static_cast<double>(w.fusion_ns - w.dispatch_ns);
        mean_latency /= static_cast<double>(result.trace.windows.size());
        std::printf("mean dispatch->fusion latency: %.0f ns (virtual)\n", mean_latency);
    }

    std::ofstream out(args.out_report, std::ios::trunc);
    if (!out) throw IoError("cannot write sim report: " + args.out_report);
    out << eval_report_json(result.report).dump(2) << "\n";
    out.close();

    json config;
    config["limit"] = args.limit;
    config["seed"] = args.seed;
    config["scenario"] = args.scenario.empty() ? "(defaults)" : args.scenario;
    std::vector<std::string> inputs = {args.checkpoint, args.plan, args.devices};
    if (!args.windows.empty()) inputs.push_back(args.windows);
    write_manifest(args.out_report, "simulate", config, inputs,
                   {args.out_report, args.out_trace});
    return kExitOk;
}

int cmd_report(const ReportArgs& args) {
    if (args.history.empty() && args.eval.empty())
        throw ConfigError("report: provide --history and/or --eval");
    fs::create_directories(args.out_dir);
    std::vector<std::string> inputs, outputs;
    std::string primary;

    if (!args.history.empty()) {
        std::ifstream in(args.history);
        if (!in) throw IoError("cannot open history: " + args.history);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ParseError(args.history + ": invalid JSON: " + e.what());
        }
        const std::string curves = (fs::path(args.out_dir) / "curves.csv").string();
        std::ofstream out(curves, std::ios::trunc);
        if (!out) throw IoError("cannot write " + curves);
        out << "epoch,train_loss,train_accuracy,val_loss,val_accuracy,seconds\n";
        std::printf("%5s %12s %10s %12s %10s\n", "epoch", "train_loss", "train_acc", "val_loss",
                    "val_acc");
        for (const auto& e : j.at("history")) {
            out << e.at("epoch").get<int>() << ',' << e.at("train_loss").get<double>() << ','
                << e.at("train_accuracy").get<double>() << ',' << e.at("val_loss").get<double>()
                << ',' << e.at("val_accuracy").get<double>() << ','
                << e.at("seconds").get<double>() << "\n";
            std::printf("%5d %12.5f %10.4f %12.5f %10.4f\n", e.at("epoch").get<int>(),
                        e.at("train_loss").get<double>(), e.at("train_accuracy").get<double>(),
                        e.at("val_loss").get<double>(), e.at("val_accuracy").get<double>());
        }
        inputs.push_back(args.history);
        outputs.push_back(curves);
        primary = curves;
    }

    if (!args.eval.empty()) {
        std::ifstream in(args.eval);
        if (!in) throw IoError("cannot open eval report: " + args.eval);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ParseError(args.eval + ": invalid JSON: " + e.what());
        }
        const std::string conf = (fs::path(args.out_dir) / "confusion.csv").string();
        std::ofstream out(conf, std::ios::trunc);
        if (!out) throw IoError("cannot write " + conf);
        out << "truth";
        for (int c = 0; c < can::kNumClasses; ++c)
            out << ',' << can::label_name(static_cast<can::TrafficLabel>(c));
        out << "\n";
        const auto& confusion = j.at("confusion");
        for (int r = 0; r < can::kNumClasses; ++r) {
            out << can::label_name(static_cast<can::TrafficLabel>(r));
            for (int c = 0; c < can::kNumClasses; ++c)
                out << ',' << confusion.at(static_cast<size_t>(r)).at(static_cast<size_t>(c)).get<int64_t>();
            out << "\n";
        }
        std::printf("accuracy %.6f, macro AUC %.6f over %" PRId64 " windows\n",
                    j.at("accuracy").get<double>(), j.at("auc_macro").get<double>(),
                    j.at("count").get<int64_t>());
        inputs.push_back(args.eval);
        outputs.push_back(conf);
        if (primary.empty()) primary = conf;
    }

    write_manifest(primary, "report", json::object(), inputs, outputs);
    return kExitOk;
}

} // namespace lipar::cli
