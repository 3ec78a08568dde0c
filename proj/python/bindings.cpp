#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lipar/allocator.hpp"
#include "lipar/can_data.hpp"
#include "lipar/model.hpp"
#include "lipar/ops.hpp"
#include "lipar/sim.hpp"
#include "lipar/trainer.hpp"

namespace py = pybind11;
using namespace lipar;

namespace {

can::TrafficLabel label_arg(const std::string& name) { return can::label_from_name(name); }

py::array_t<float> windows_to_images(const std::vector<can::Window>& windows) {
    py::array_t<float> out({static_cast<py::ssize_t>(windows.size()), py::ssize_t(3),
                            py::ssize_t(9), py::ssize_t(9)});
    auto buf = out.mutable_unchecked<4>();
    for (size_t i = 0; i < windows.size(); ++i)
        for (int c = 0; c < 3; ++c)
            for (int r = 0; r < 9; ++r)
                for (int k = 0; k < 9; ++k)
                    buf(static_cast<py::ssize_t>(i), c, r, k) =
                        windows[i].image[static_cast<size_t>(c * 81 + r * 9 + k)];
    return out;
}

py::dict windows_to_dict(const std::vector<can::Window>& windows) {
    py::array_t<uint8_t> labels(static_cast<py::ssize_t>(windows.size()));
    py::array_t<uint64_t> sources(static_cast<py::ssize_t>(windows.size()));
    auto lb = labels.mutable_unchecked<1>();
    auto sb = sources.mutable_unchecked<1>();
    for (size_t i = 0; i < windows.size(); ++i) {
        lb(static_cast<py::ssize_t>(i)) = static_cast<uint8_t>(windows[i].label);
        sb(static_cast<py::ssize_t>(i)) = windows[i].source_index;
    }
    py::dict out;
    out["images"] = windows_to_images(windows);
    out["labels"] = labels;
    out["source_index"] = sources;
    return out;
}

std::vector<can::Window> windows_from_arrays(const py::array_t<float>& images,
                                             const py::array_t<uint8_t>& labels) {
    if (images.ndim() != 4 || images.shape(1) != 3 || images.shape(2) != 9 || images.shape(3) != 9)
        throw ShapeError("images must have shape (n, 3, 9, 9)");
    if (labels.ndim() != 1 || labels.shape(0) != images.shape(0))
        throw ShapeError("labels must have shape (n,)");
    auto ib = images.unchecked<4>();
    auto lb = labels.unchecked<1>();
    std::vector<can::Window> windows(static_cast<size_t>(images.shape(0)));
    for (py::ssize_t i = 0; i < images.shape(0); ++i) {
        auto& w = windows[static_cast<size_t>(i)];
        for (int c = 0; c < 3; ++c)
            for (int r = 0; r < 9; ++r)
                for (int k = 0; k < 9; ++k)
                    w.image[static_cast<size_t>(c * 81 + r * 9 + k)] = ib(i, c, r, k);
        if (lb(i) >= can::kNumClasses) throw ShapeError("label out of range");
        w.label = static_cast<can::TrafficLabel>(lb(i));
        w.source_index = static_cast<uint64_t>(i);
    }
    return windows;
}

py::dict eval_report_dict(const train::EvalReport& report) {
    py::dict out;
    out["count"] = report.count;
    out["accuracy"] = report.accuracy;
    out["auc_macro"] = report.auc_macro;
    py::list confusion;
    for (const auto& row : report.confusion) {
        py::list r;
        for (int64_t v : row) r.append(v);
        confusion.append(r);
    }
    out["confusion"] = confusion;
    py::dict per_class;
    for (int cls = 0; cls < can::kNumClasses; ++cls) {
        const double v = report.per_class_accuracy[static_cast<size_t>(cls)];
        per_class[can::label_name(static_cast<can::TrafficLabel>(cls))] =
            v < 0 ? py::object(py::none()) : py::object(py::float_(v));
    }
    out["per_class_accuracy"] = per_class;
    out["warnings"] = report.warnings;
    return out;
}

std::vector<alloc::DeviceProfile> devices_from_list(const py::list& items) {
    std::vector<alloc::DeviceProfile> devices;
    for (const auto& item : items) {
        const py::dict d = item.cast<py::dict>();
        alloc::DeviceProfile dev;
        dev.id = d["id"].cast<std::string>();
        dev.processor_idle = d["processor_idle"].cast<double>();
        dev.memory_idle = d["memory_idle"].cast<double>();
        dev.risk = d["risk"].cast<int>();
        dev.total_memory_mb = d.contains("memory_mb") ? d["memory_mb"].cast<double>() : 1.0;
        devices.push_back(std::move(dev));
    }
    return devices;
}

std::vector<alloc::BranchProfile> branches_from_list(const py::list& items) {
    std::vector<alloc::BranchProfile> branches;
    for (const auto& item : items) {
        const py::dict b = item.cast<py::dict>();
        std::optional<double> total;
        if (b.contains("total_mb")) total = b["total_mb"].cast<double>();
        branches.push_back(alloc::BranchProfile::make(b["id"].cast<std::string>(),
                                                      b["fwd_bwd_mb"].cast<double>(),
                                                      b["param_mb"].cast<double>(), total));
    }
    return branches;
}

py::dict plan_dict(const alloc::AllocationPlan& plan) {
    py::dict out;
    out["alpha"] = plan.alpha;
    out["beta"] = plan.beta;
    py::dict assignments;
    for (const auto& a : plan.assignments) {
        py::dict entry;
        entry["device"] = a.device_id;
        entry["availability"] = a.availability;
        entry["occupation"] = a.occupation;
        assignments[a.branch_id.c_str()] = entry;
    }
    out["assignments"] = assignments;
    out["unassigned"] = plan.unassigned;
    py::list scores;
    for (const auto& s : plan.scores) {
        py::dict entry;
        entry["device"] = s.device_id;
        entry["branch"] = s.branch_id;
        entry["availability"] = s.availability;
        entry["occupation"] = s.occupation;
        entry["memory_ratio"] = s.memory_ratio;
        entry["eligible"] = s.eligible;
        scores.append(entry);
    }
    out["scores"] = scores;
    return out;
}

alloc::AllocationPlan plan_from_dict(const py::dict& d) {
    alloc::AllocationPlan plan;
    plan.alpha = d.contains("alpha") ? d["alpha"].cast<int>() : 1;
    plan.beta = d.contains("beta") ? d["beta"].cast<int>() : 2;
    const py::dict assignments = d["assignments"].cast<py::dict>();
    for (const auto& [branch, value] : assignments) {
        alloc::Assignment a;
        a.branch_id = branch.cast<std::string>();
        a.device_id = value.cast<py::dict>()["device"].cast<std::string>();
        plan.assignments.push_back(std::move(a));
    }
    return plan;
}

/// Owning wrapper so Python holds a trained model plus its variant.
class PyModel {
public:
    explicit PyModel(model::ModelParams params) : params_(std::move(params)) {}

    static PyModel build(const std::string& variant, uint64_t seed) {
        return PyModel(model::build_model(model::variant_from_name(variant), seed));
    }

    std::string variant() const { return model::variant_name(params_.variant()); }
    uint64_t seed() const { return params_.seed(); }

    py::dict evaluate(const py::array_t<float>& images, const py::array_t<uint8_t>& labels) const {
        return eval_report_dict(train::evaluate(params_, windows_from_arrays(images, labels)));
    }

    py::array_t<int> predict(const py::array_t<float>& images) const {
        py::array_t<uint8_t> labels(images.shape(0));
        auto lb = labels.mutable_unchecked<1>();
        for (py::ssize_t i = 0; i < images.shape(0); ++i) lb(i) = 0;
        const auto predictions = train::predict(params_, windows_from_arrays(images, labels));
        py::array_t<int> out(static_cast<py::ssize_t>(predictions.size()));
        auto ob = out.mutable_unchecked<1>();
        for (size_t i = 0; i < predictions.size(); ++i)
            ob(static_cast<py::ssize_t>(i)) = predictions[i];
        return out;
    }

    py::dict size_report() const {
        const auto report = model::size_report(params_);
        py::dict out;
        py::list rows;
        auto row_dict = [](const model::SizeRow& row) {
            py::dict r;
            r["name"] = row.name;
            r["param_count"] = row.param_count;
            r["fwd_bwd_mb"] = row.fwd_bwd_mb;
            r["param_mb"] = row.param_mb;
            r["total_mb"] = row.total_mb;
            return r;
        };
        for (const auto& row : report.rows) rows.append(row_dict(row));
        out["rows"] = rows;
        out["model"] = row_dict(report.model);
        return out;
    }

    void save(const std::filesystem::path& path) const { model::save_checkpoint(params_, path); }

    static PyModel load(const std::filesystem::path& path) {
        return PyModel(model::load_checkpoint(path));
    }

    const model::ModelParams& params() const { return params_; }

private:
    model::ModelParams params_;
};

PyModel train_model(const py::array_t<float>& images, const py::array_t<uint8_t>& labels,
                    const std::string& variant, int epochs, int batch, double lr, uint64_t seed,
                    bool verbose) {
    const auto windows = windows_from_arrays(images, labels);
    const auto split = can::split_dataset(windows, {0.7, 0.2, 0.1}, seed);
    train::TrainConfig config;
    config.lr = lr;
    config.batch = batch;
    config.epochs = epochs;
    config.seed = seed;
    config.variant = model::variant_from_name(variant);
    config.verbose = verbose;
    return PyModel(train::train(split, config).params);
}

py::dict simulate(const PyModel& m, const py::array_t<float>& images,
                  const py::array_t<uint8_t>& labels, const py::list& devices,
                  const py::dict& plan) {
    const auto windows = windows_from_arrays(images, labels);
    const auto result = sim::run_simulation(m.params(), plan_from_dict(plan), windows,
                                            devices_from_list(devices));
    py::dict out;
    py::array_t<int> predictions(static_cast<py::ssize_t>(result.predictions.size()));
    auto pb = predictions.mutable_unchecked<1>();
    for (size_t i = 0; i < result.predictions.size(); ++i)
        pb(static_cast<py::ssize_t>(i)) = result.predictions[i];
    out["predictions"] = predictions;
    out["report"] = eval_report_dict(result.report);
    out["task_rows"] = static_cast<int64_t>(result.trace.tasks.size());
    return out;
}

} // namespace

PYBIND11_MODULE(_lipar, m) {
    m.doc() = "In-vehicle CAN intrusion detection: parallel lightweight model, "
              "resource-aware branch placement, ECU simulation.";
    m.attr("__version__") = "0.1.0";
    m.attr("LABELS") = py::make_tuple("normal", "dos", "fuzzy", "gear", "rpm");

    py::register_exception<ParseError>(m, "ParseError");
    py::register_exception<IoError>(m, "IoError");
    py::register_exception<ConfigError>(m, "ConfigError");

    // can-data
    m.def(
        "synthesize_traffic",
        [](const std::string& kind, size_t n, uint64_t seed) {
            const auto records = can::synthesize_traffic(label_arg(kind), n, seed);
            const auto windows = can::build_windows(records);
            return windows_to_dict(windows);
        },
        py::arg("kind"), py::arg("n"), py::arg("seed") = 0,
        "Synthesize n CAN records of one traffic class and window them");
    m.def(
        "parse_can_csv",
        [](const std::filesystem::path& path, const std::string& label,
           const std::string& label_mode) {
            const auto mode =
                label_mode == "fixed" ? can::LabelMode::Fixed : can::LabelMode::FlagColumn;
            const auto records = can::parse_can_csv(path, mode, label_arg(label));
            return windows_to_dict(can::build_windows(records));
        },
        py::arg("path"), py::arg("label"), py::arg("label_mode") = "flag",
        "Parse a Car-Hacking CSV capture and window it");
    m.def(
        "split_indices",
        [](const py::array_t<uint8_t>& labels, double train, double val, double test,
           uint64_t seed) {
            // windows carry their original position in source_index
            std::vector<can::Window> windows(static_cast<size_t>(labels.shape(0)));
            auto lb = labels.unchecked<1>();
            for (py::ssize_t i = 0; i < labels.shape(0); ++i) {
                windows[static_cast<size_t>(i)].label = static_cast<can::TrafficLabel>(lb(i));
                windows[static_cast<size_t>(i)].source_index = static_cast<uint64_t>(i);
            }
            const auto split = can::split_dataset(windows, {train, val, test}, seed);
            auto indices = [](const std::vector<can::Window>& part) {
                py::array_t<uint64_t> out(static_cast<py::ssize_t>(part.size()));
                auto ob = out.mutable_unchecked<1>();
                for (size_t i = 0; i < part.size(); ++i)
                    ob(static_cast<py::ssize_t>(i)) = part[i].source_index;
                return out;
            };
            py::dict out;
            out["train"] = indices(split.train);
            out["validation"] = indices(split.validation);
            out["test"] = indices(split.test);
            return out;
        },
        py::arg("labels"), py::arg("train") = 0.7, py::arg("val") = 0.2, py::arg("test") = 0.1,
        py::arg("seed") = 0, "Stratified split; returns index arrays per subset");

    // analytic network arithmetic
    m.def(
        "receptive_field",
        [](const std::vector<std::pair<int, int>>& schedule) {
            return nn::receptive_field(schedule);
        },
        py::arg("schedule"), "Receptive-field side for a [(ksize, stride), ...] stack");
    m.def("conv_param_count", &nn::conv_param_count, py::arg("ksize"), py::arg("ci"),
          py::arg("co"), py::arg("groups") = 1);

    // allocator
    m.def("idle_rate", &alloc::idle_rate, py::arg("processor_idle"), py::arg("memory_idle"));
    m.def("availability", &alloc::availability, py::arg("processor_idle"),
          py::arg("memory_idle"), py::arg("risk"), py::arg("alpha") = 1);
    m.def("occupation", &alloc::occupation, py::arg("calc_rate"), py::arg("memory_ratio"),
          py::arg("beta") = 2);
    m.def(
        "allocate",
        [](const py::list& devices, const py::list& branches, int alpha, int beta) {
            return plan_dict(
                alloc::allocate(devices_from_list(devices), branches_from_list(branches), alpha,
                                beta));
        },
        py::arg("devices"), py::arg("branches"), py::arg("alpha") = 1, py::arg("beta") = 2,
        "Greedy branch -> device assignment under the availability/occupation rule");

    // model + training + simulation
    py::class_<PyModel>(m, "Model")
        .def_static("build", &PyModel::build, py::arg("variant") = "st", py::arg("seed") = 0)
        .def_static("load", &PyModel::load, py::arg("path"))
        .def("save", &PyModel::save, py::arg("path"))
        .def_property_readonly("variant", &PyModel::variant)
        .def_property_readonly("seed", &PyModel::seed)
        .def("predict", &PyModel::predict, py::arg("images"))
        .def("evaluate", &PyModel::evaluate, py::arg("images"), py::arg("labels"))
        .def("size_report", &PyModel::size_report);

    m.def("train", &train_model, py::arg("images"), py::arg("labels"), py::arg("variant") = "st",
          py::arg("epochs") = 14, py::arg("batch") = 32, py::arg("lr") = 1e-4,
          py::arg("seed") = 0, py::arg("verbose") = false,
          "Train a model on windowed traffic (internally split 0.7/0.2/0.1)");
    m.def("simulate", &simulate, py::arg("model"), py::arg("images"), py::arg("labels"),
          py::arg("devices"), py::arg("plan"),
          "Distributed inference across simulated devices");
}
