#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "lipar/errors.hpp"

namespace {

using namespace lipar;
using namespace lipar::cli;

std::vector<InputSpec> parse_inputs(const std::vector<std::string>& raw) {
    std::vector<InputSpec> out;
    for (const auto& item : raw) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--input expects label=path, got '" + item + "'");
        out.push_back({item.substr(0, eq), item.substr(eq + 1)});
    }
    return out;
}

std::vector<SyntheticSpec> parse_synthetic(const std::vector<std::string>& raw) {
    std::vector<SyntheticSpec> out;
    for (const auto& item : raw) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--synthetic expects label=count, got '" + item + "'");
        SyntheticSpec spec;
        spec.label = item.substr(0, eq);
        try {
            spec.count = std::stoull(item.substr(eq + 1));
        } catch (const std::exception&) {
            throw ConfigError("--synthetic count is not a number in '" + item + "'");
        }
        out.push_back(std::move(spec));
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"lipar: lightweight parallel in-vehicle intrusion detection"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read defaults from a TOML/INI config file");
    app.set_version_flag("--version", kToolVersion);

    std::string ratios_str = "0.7,0.2,0.1";
    std::string data_dir = std::getenv("LIPAR_DATA_DIR") ? std::getenv("LIPAR_DATA_DIR") : "";

    // preprocess
    auto* preprocess = app.add_subcommand("preprocess", "Parse CAN logs into a windows file");
    std::vector<std::string> raw_inputs, raw_synth;
    PreprocessArgs pre;
    preprocess->add_option("--input", raw_inputs, "label=path CSV capture (repeatable)");
    preprocess->add_option("--synthetic", raw_synth, "label=count synthetic traffic (repeatable)");
    preprocess->add_option("--label-mode", pre.label_mode, "flag|fixed row labeling")
        ->check(CLI::IsMember({"flag", "fixed"}));
    preprocess->add_option("--data-dir", data_dir, "directory tried for relative input paths");
    preprocess->add_option("--out", pre.out, "output windows file");
    preprocess->add_option("--seed", pre.seed, "seed recorded in the windows file");
    preprocess->add_option("--ratios", ratios_str, "train,val,test split ratios (manifest only)");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a model from a windows file");
    TrainArgs train_args;
    uint64_t train_seed = 0;
    bool train_seed_set = false;
    train_cmd->add_option("--windows", train_args.windows, "windows file")->required();
    train_cmd->add_option("--variant", train_args.variant, "dw|st")
        ->check(CLI::IsMember({"dw", "st"}));
    train_cmd->add_option("--epochs", train_args.epochs, "training epochs");
    train_cmd->add_option("--batch", train_args.batch, "batch size");
    train_cmd->add_option("--lr", train_args.lr, "learning rate");
    train_cmd->add_option("--seed", train_seed, "override the windows-file seed")
        ->each([&](const std::string&) { train_seed_set = true; });
    train_cmd->add_option("--ratios", ratios_str, "train,val,test split ratios");
    train_cmd->add_option("--out", train_args.out_checkpoint, "output checkpoint");
    train_cmd->add_option("--history", train_args.out_history, "output history JSON");
    train_cmd->add_flag("--quiet", train_args.quiet, "suppress per-epoch progress");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a windows file");
    EvalArgs eval_args;
    uint64_t eval_seed = 0;
    bool eval_seed_set = false;
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint")->required();
    eval_cmd->add_option("--windows", eval_args.windows, "windows file")->required();
    eval_cmd->add_option("--split", eval_args.split, "train|val|test|all")
        ->check(CLI::IsMember({"train", "val", "test", "all"}));
    eval_cmd->add_option("--ratios", ratios_str, "train,val,test split ratios");
    eval_cmd->add_option("--seed", eval_seed, "override the windows-file seed")
        ->each([&](const std::string&) { eval_seed_set = true; });
    eval_cmd->add_option("--out", eval_args.out, "output report JSON");
    eval_cmd->add_flag("--throughput", eval_args.throughput, "also measure items/s");

    // size
    auto* size_cmd = app.add_subcommand("size", "Print the per-branch size table");
    SizeArgs size_args;
    size_cmd->add_option("--checkpoint", size_args.checkpoint, "model checkpoint")->required();
    size_cmd->add_option("--out", size_args.out, "optional JSON output");
    size_cmd->add_option("--batch", size_args.batch, "reference batch size");

    // allocate
    auto* alloc_cmd = app.add_subcommand("allocate", "Assign branches to devices");
    AllocateArgs alloc_args;
    alloc_cmd->add_option("--devices", alloc_args.devices, "devices JSON")->required();
    alloc_cmd->add_option("--checkpoint", alloc_args.checkpoint, "branch sizes from checkpoint");
    alloc_cmd->add_option("--branches", alloc_args.branches, "branch sizes JSON override");
    alloc_cmd->add_option("--alpha", alloc_args.alpha, "risk/idle balance (positive integer)");
    alloc_cmd->add_option("--beta", alloc_args.beta, "memory/compute balance (positive integer)");
    alloc_cmd->add_option("--out", alloc_args.out, "output plan JSON");

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Run distributed inference on simulated ECUs");
    SimulateArgs sim_args;
    std::vector<std::string> sim_synth;
    sim_cmd->add_option("--checkpoint", sim_args.checkpoint, "model checkpoint")->required();
    sim_cmd->add_option("--plan", sim_args.plan, "allocation plan JSON")->required();
    sim_cmd->add_option("--devices", sim_args.devices, "devices JSON")->required();
    sim_cmd->add_option("--windows", sim_args.windows, "windows file");
    sim_cmd->add_option("--synthetic", sim_synth, "label=count synthetic stream (repeatable)");
    sim_cmd->add_option("--scenario", sim_args.scenario, "delay/failure scenario JSON");
    sim_cmd->add_option("--limit", sim_args.limit, "max windows to process (0 = all)");
    sim_cmd->add_option("--seed", sim_args.seed, "seed for synthetic traffic");
    sim_cmd->add_option("--trace", sim_args.out_trace, "output trace CSV");
    sim_cmd->add_option("--out", sim_args.out_report, "output report JSON");

    // report
    auto* report_cmd = app.add_subcommand("report", "Summaries and plot-ready CSVs");
    ReportArgs report_args;
    report_cmd->add_option("--history", report_args.history, "history JSON from train");
    report_cmd->add_option("--eval", report_args.eval, "eval report JSON");
    report_cmd->add_option("--out-dir", report_args.out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*preprocess) {
            pre.inputs = parse_inputs(raw_inputs);
            pre.synthetic = parse_synthetic(raw_synth);
            pre.ratios = parse_ratios(ratios_str);
            pre.data_dir = data_dir;
            return cmd_preprocess(pre);
        }
        if (*train_cmd) {
            train_args.ratios = parse_ratios(ratios_str);
            if (train_seed_set) train_args.seed = train_seed;
            return cmd_train(train_args);
        }
        if (*eval_cmd) {
            eval_args.ratios = parse_ratios(ratios_str);
            if (eval_seed_set) eval_args.seed = eval_seed;
            return cmd_eval(eval_args);
        }
        if (*size_cmd) return cmd_size(size_args);
        if (*alloc_cmd) return cmd_allocate(alloc_args);
        if (*sim_cmd) {
            sim_args.synthetic = parse_synthetic(sim_synth);
            return cmd_simulate(sim_args);
        }
        if (*report_cmd) return cmd_report(report_args);
    } catch (const ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDataError;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDataError;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDataError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntimeError;
    }
    return kExitUsage;
}
