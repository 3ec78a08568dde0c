#include "lipar/sim.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <thread>

#include "lipar/metrics.hpp"

namespace lipar::sim {

namespace {

using model::ForwardCtx;
using model::ModelParams;
using nn::Tensor;

constexpr double kMsToNs = 1e6;

struct TaskResult {
    Tensor output;
    int64_t start_ns = 0;
    int64_t complete_ns = 0;
    bool timeout = false;
};

struct Task {
    int64_t window = 0;
    std::string branch;
    double branch_mb = 0.0;
    Tensor input;
    int64_t dispatch_ns = 0;
    std::promise<TaskResult> promise;
};

/// One simulated device: a worker thread draining a FIFO mailbox, one task at
/// a time. Completion times live on a virtual clock derived from dispatch
/// times and the delay model, so traces are reproducible no matter how the
/// host schedules the threads.
class DeviceWorker {
public:
    DeviceWorker(const ModelParams& params, std::string device_id, DelayModel delay, bool failed,
                 double timeout_ms)
        : params_(params), id_(std::move(device_id)), delay_(delay), failed_(failed),
          timeout_ms_(timeout_ms), thread_([this] { loop(); }) {}

    ~DeviceWorker() { stop(); }

    void post(std::shared_ptr<Task> task) {
        {
            std::lock_guard lock(mu_);
            mailbox_.push_back(std::move(task));
        }
        cv_.notify_one();
    }

    void stop() {
        {
            std::lock_guard lock(mu_);
            if (stopping_) return;
            stopping_ = true;
        }
        cv_.notify_one();
        if (thread_.joinable()) thread_.join();
    }

    const std::string& id() const { return id_; }

private:
    void loop() {
        for (;;) {
            std::shared_ptr<Task> task;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [this] { return stopping_ || !mailbox_.empty(); });
                if (mailbox_.empty()) return; // stopping and drained
                task = std::move(mailbox_.front());
                mailbox_.pop_front();
            }
            TaskResult result;
            result.start_ns = std::max(free_at_ns_, task->dispatch_ns);
            if (failed_) {
                result.timeout = true;
                result.complete_ns =
                    result.start_ns + static_cast<int64_t>(timeout_ms_ * kMsToNs);
            } else {
                nn::NoGradGuard guard;
                ForwardCtx ctx; // eval mode
                result.output = model::branch_forward(params_, task->branch, task->input, ctx);
                const double work_ms = delay_.base_ms + delay_.per_mb_ms * task->branch_mb;
                result.complete_ns = result.start_ns + static_cast<int64_t>(work_ms * kMsToNs);
            }
            free_at_ns_ = result.complete_ns;
            task->promise.set_value(std::move(result));
        }
    }

    const ModelParams& params_;
    std::string id_;
    DelayModel delay_;
    bool failed_;
    double timeout_ms_;
    int64_t free_at_ns_ = 0; // virtual clock, owned by the worker thread

    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::shared_ptr<Task>> mailbox_;
    bool stopping_ = false;
    std::thread thread_;
};

constexpr const char* kAllBranches[] = {"branch1", "branch2", "branch3", "branch4"};

/// Shared engine behind run_simulation and stream_detect.
class Simulator {
public:
    Simulator(const ModelParams& params, const alloc::AllocationPlan& plan,
              const std::vector<alloc::DeviceProfile>& devices, const Scenario& scenario)
        : params_(params), scenario_(scenario) {
        if (params.variant() != model::Variant::StParNet)
            throw ConfigError("simulation requires the full four-branch model (variant st)");

        std::vector<std::string> missing;
        for (const char* branch : kAllBranches)
            if (!plan.find(branch)) missing.push_back(branch);
        if (!missing.empty()) {
            std::string msg = "run_simulation: unassigned:";
            for (const auto& b : missing) msg += " " + b;
            throw ConfigError(msg);
        }

        std::map<std::string, const alloc::DeviceProfile*> by_id;
        for (const auto& d : devices) by_id[d.id] = &d;

        const auto sizes = model::size_report(params);
        for (const char* branch : kAllBranches) {
            const auto* assignment = plan.find(branch);
            if (!by_id.count(assignment->device_id))
                throw ConfigError("plan assigns '" + std::string(branch) + "' to unknown device '" +
                                  assignment->device_id + "'");
            branch_mb_[branch] = sizes.row(branch).total_mb;
            device_of_[branch] = assignment->device_id;
            if (!workers_.count(assignment->device_id)) {
                const bool failed =
                    std::find(scenario.failed_devices.begin(), scenario.failed_devices.end(),
                              assignment->device_id) != scenario.failed_devices.end();
                workers_.emplace(assignment->device_id,
                                 std::make_unique<DeviceWorker>(params, assignment->device_id,
                                                                scenario.delay, failed,
                                                                scenario.timeout_ms));
            }
        }
    }

    /// Runs one window through dispatch -> 4-way join -> fusion. Returns the
    /// predicted class, or -1 if a branch timed out.
    int process_window(const can::Window& window, int64_t window_index, SimTrace& trace,
                       std::vector<double>* scores_out = nullptr) {
        const auto span = std::span<const can::Window>(&window, 1);
        Tensor image = model::image_batch(span);
        Tensor sequence = model::sequence_batch(span);

        WindowRow wrow;
        wrow.window = window_index;
        wrow.truth = static_cast<int>(window.label);
        wrow.preprocess_ns = static_cast<int64_t>(scenario_.delay.preprocess_ms * kMsToNs);
        cem_ns_ += wrow.preprocess_ns;
        wrow.dispatch_ns = cem_ns_;

        std::vector<std::pair<std::string, std::future<TaskResult>>> pending;
        for (const char* branch : kAllBranches) {
            auto task = std::make_shared<Task>();
            task->window = window_index;
            task->branch = branch;
            task->branch_mb = branch_mb_.at(branch);
            task->input = std::string(branch) == model::kTemporalBranch ? sequence : image;
            task->dispatch_ns = wrow.dispatch_ns;
            pending.emplace_back(branch, task->promise.get_future());
            workers_.at(device_of_.at(branch))->post(std::move(task));
        }

        // Barrier: fusion starts only after every branch result arrived.
        std::map<std::string, TaskResult> results;
        int64_t last_complete = wrow.dispatch_ns;
        bool timed_out = false;
        for (auto& [branch, future] : pending) {
            TaskResult r = future.get();
            last_complete = std::max(last_complete, r.complete_ns);
            timed_out = timed_out || r.timeout;
            trace.tasks.push_back({window_index, branch, device_of_.at(branch), wrow.dispatch_ns,
                                   r.start_ns, r.complete_ns, r.timeout});
            results.emplace(branch, std::move(r));
        }
        wrow.fusion_ns = last_complete;
        cem_ns_ = wrow.fusion_ns;

        int predicted = -1;
        if (!timed_out) {
            nn::NoGradGuard guard;
            ForwardCtx ctx;
            const Tensor features[] = {results.at("branch1").output,
                                       results.at("branch2").output,
                                       results.at("branch3").output};
            Tensor spatial_logits = model::fusion_forward(params_, nn::concat_channels(features), ctx);
            Tensor logits = nn::scale(nn::add(spatial_logits, results.at("branch4").output), 0.5f);
            const auto probs = metrics::softmax_rows(logits.data(), 1, can::kNumClasses);
            predicted = metrics::argmax_row(probs);
            if (scores_out) scores_out->insert(scores_out->end(), probs.begin(), probs.end());
        } else if (scores_out) {
            scores_out->insert(scores_out->end(), can::kNumClasses, 0.0);
        }
        wrow.predicted = predicted;
        trace.windows.push_back(wrow);
        return predicted;
    }

private:
    const ModelParams& params_;
    Scenario scenario_;
    std::map<std::string, std::unique_ptr<DeviceWorker>> workers_;
    std::map<std::string, std::string> device_of_;
    std::map<std::string, double> branch_mb_;
    int64_t cem_ns_ = 0;
};

} // namespace

SimResult run_simulation(const ModelParams& params, const alloc::AllocationPlan& plan,
                         std::span<const can::Window> windows,
                         const std::vector<alloc::DeviceProfile>& devices,
                         const Scenario& scenario) {
    Simulator simulator(params, plan, devices, scenario);
    SimResult result;
    std::vector<double> scores;
    scores.reserve(windows.size() * can::kNumClasses);
    for (size_t i = 0; i < windows.size(); ++i)
        result.predictions.push_back(
            simulator.process_window(windows[i], static_cast<int64_t>(i), result.trace, &scores));

    // Metrics over the completed windows.
    std::vector<int> truth, predicted;
    std::vector<double> kept_scores;
    int64_t timeouts = 0;
    for (size_t i = 0; i < windows.size(); ++i) {
        if (result.predictions[i] < 0) {
            ++timeouts;
            continue;
        }
        truth.push_back(static_cast<int>(windows[i].label));
        predicted.push_back(result.predictions[i]);
        kept_scores.insert(kept_scores.end(), scores.begin() + static_cast<long>(i) * can::kNumClasses,
                           scores.begin() + static_cast<long>(i + 1) * can::kNumClasses);
    }
    result.report.count = static_cast<int64_t>(truth.size());
    if (!truth.empty()) {
        result.report.confusion = metrics::confusion_matrix(truth, predicted);
        result.report.accuracy = metrics::accuracy_from_confusion(result.report.confusion);
        result.report.per_class_accuracy = metrics::per_class_accuracy(result.report.confusion);
        std::vector<int> excluded;
        try {
            result.report.auc_macro = metrics::macro_auc(kept_scores, truth, can::kNumClasses, &excluded);
        } catch (const ConfigError&) {
            result.report.auc_macro = 0.0;
            result.report.warnings.push_back("macro AUC undefined for this window set");
        }
        for (int cls : excluded)
            result.report.warnings.push_back(std::string("class '") +
                                             can::label_name(static_cast<can::TrafficLabel>(cls)) +
                                             "' absent; excluded from macro AUC");
    }
    if (timeouts > 0)
        result.report.warnings.push_back(std::to_string(timeouts) +
                                         " windows timed out on failed devices");
    return result;
}

std::vector<DetectionEvent> stream_detect(const ModelParams& params,
                                          const alloc::AllocationPlan& plan,
                                          const std::vector<alloc::DeviceProfile>& devices,
                                          RecordSource source, const Scenario& scenario,
                                          SimTrace* trace_out) {
    Simulator simulator(params, plan, devices, scenario);
    SimTrace local_trace;
    SimTrace& trace = trace_out ? *trace_out : local_trace;

    std::vector<DetectionEvent> events;
    std::vector<can::CanRecord> buffer;
    buffer.reserve(can::kWindowMessages);
    int64_t window_index = 0;
    uint64_t record_index = 0;
    while (auto rec = source()) {
        buffer.push_back(*rec);
        ++record_index;
        if (buffer.size() < can::kWindowMessages) continue;
        auto built = can::build_windows(buffer, record_index - can::kWindowMessages);
        buffer.clear();
        const can::Window& w = built.front();
        const int predicted = simulator.process_window(w, window_index, trace);
        const auto& wrow = trace.windows.back();
        if (predicted >= 0)
            events.push_back({window_index, static_cast<can::TrafficLabel>(predicted),
                              wrow.fusion_ns - wrow.dispatch_ns});
        ++window_index;
    }
    if (!buffer.empty())
        log_warn("stream_detect: discarded trailing partial window of " +
                 std::to_string(buffer.size()) + " records");
    return events;
}

void write_trace_csv(const std::filesystem::path& path, const SimTrace& trace) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write trace: " + path.string());
    out << "window,branch,dispatch_ns,complete_ns,device\n";
    for (const auto& row : trace.tasks)
        out << row.window << ',' << row.branch << ',' << row.dispatch_ns << ','
            << row.complete_ns << ',' << row.device << '\n';
    if (!out) throw IoError("failed writing trace: " + path.string());
}

} // namespace lipar::sim
