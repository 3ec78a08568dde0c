#include "lipar/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace lipar::alloc {

namespace {

void check_device(const DeviceProfile& d) {
    if (!(d.processor_idle > 0.0 && d.processor_idle <= 1.0))
        throw ConfigError("device '" + d.id + "': processor idle rate must be in (0,1]");
    if (!(d.memory_idle > 0.0 && d.memory_idle <= 1.0))
        throw ConfigError("device '" + d.id + "': memory idle rate must be in (0,1]");
    if (d.risk < 1) throw ConfigError("device '" + d.id + "': risk index must be >= 1");
    if (!(d.total_memory_mb > 0.0))
        throw ConfigError("device '" + d.id + "': total memory must be positive");
}

double round4(double v) {
    return std::round(v * 1e4) / 1e4;
}

} // namespace

BranchProfile BranchProfile::make(std::string id, double fwd_bwd_mb, double param_mb,
                                  std::optional<double> total) {
    BranchProfile b;
    b.id = std::move(id);
    b.fwd_bwd_mb = fwd_bwd_mb;
    b.param_mb = param_mb;
    b.total_mb = total.value_or(fwd_bwd_mb + param_mb);
    if (b.fwd_bwd_mb < 0 || b.param_mb < 0 || b.total_mb < 0)
        throw ConfigError("branch '" + b.id + "': sizes must be nonnegative");
    if (std::abs(b.total_mb - (b.fwd_bwd_mb + b.param_mb)) > 0.01 + 1e-9)
        throw ConfigError("branch '" + b.id + "': total size " + std::to_string(b.total_mb) +
                          " is not fwd_bwd + param within 0.01 MB");
    return b;
}

double idle_rate(double processor_idle, double memory_idle) {
    if (processor_idle + memory_idle <= 0.0)
        throw ConfigError("idle_rate: processor and memory idle rates sum to zero");
    return 2.0 * processor_idle * memory_idle / (processor_idle + memory_idle);
}

double availability(double processor_idle, double memory_idle, int risk, int alpha) {
    if (alpha < 1) throw ConfigError("availability: alpha must be a positive integer");
    if (risk < 1) throw ConfigError("availability: risk must be a positive integer");
    const double a2 = static_cast<double>(alpha) * alpha;
    const double pm = processor_idle * memory_idle;
    const double denom = a2 * (processor_idle + memory_idle) + 2.0 * pm * risk;
    if (denom == 0.0) throw ConfigError("availability: zero denominator");
    return 2.0 * (1.0 + a2) * pm / denom;
}

double calc_rate(const BranchProfile& branch) {
    if (branch.total_mb <= 0.0)
        throw ConfigError("calc_rate: branch '" + branch.id + "' has zero total size");
    return branch.fwd_bwd_mb / branch.total_mb;
}

double occupation(double calc_rate, double memory_ratio, int beta) {
    if (beta < 1) throw ConfigError("occupation: beta must be a positive integer");
    const double b2 = static_cast<double>(beta) * beta;
    const double denom = b2 * memory_ratio + calc_rate;
    if (denom == 0.0) throw ConfigError("occupation: zero denominator");
    return (1.0 + b2) * calc_rate * memory_ratio / denom;
}

double memory_ratio(const BranchProfile& branch, const DeviceProfile& device) {
    if (!(device.total_memory_mb > 0.0))
        throw ConfigError("memory_ratio: device '" + device.id + "' has no memory");
    return branch.total_mb / device.total_memory_mb;
}

const Assignment* AllocationPlan::find(const std::string& branch_id) const {
    for (const auto& a : assignments)
        if (a.branch_id == branch_id) return &a;
    return nullptr;
}

AllocationPlan allocate(const std::vector<DeviceProfile>& devices,
                        const std::vector<BranchProfile>& branches, int alpha, int beta) {
    if (devices.empty()) throw ConfigError("allocate: need at least one device");
    if (alpha < 1 || beta < 1)
        throw ConfigError("allocate: alpha and beta must be positive integers");
    for (const auto& d : devices) check_device(d);
    {
        std::set<std::string> ids;
        for (const auto& d : devices)
            if (!ids.insert(d.id).second)
                throw ConfigError("allocate: duplicate device id '" + d.id + "'");
        ids.clear();
        for (const auto& b : branches)
            if (!ids.insert(b.id).second)
                throw ConfigError("allocate: duplicate branch id '" + b.id + "'");
    }

    AllocationPlan plan;
    plan.alpha = alpha;
    plan.beta = beta;

    std::map<std::string, double> device_u;
    for (const auto& d : devices)
        device_u[d.id] = availability(d.processor_idle, d.memory_idle, d.risk, alpha);

    // Score every pair. Published size tables carry four decimals, so the
    // calculation rate is consumed at that precision.
    std::map<std::pair<std::string, std::string>, PairScore> pair_scores;
    for (const auto& b : branches) {
        const double c = round4(calc_rate(b));
        for (const auto& d : devices) {
            PairScore s;
            s.device_id = d.id;
            s.branch_id = b.id;
            s.availability = device_u[d.id];
            s.memory_ratio = memory_ratio(b, d);
            s.fits_memory = s.memory_ratio < 1.0;
            if (s.fits_memory) {
                s.occupation = occupation(c, s.memory_ratio, beta);
                s.eligible = s.availability >= s.occupation;
            }
            pair_scores[{d.id, b.id}] = s;
        }
    }

    // Device order: descending availability, ties on lower id.
    std::vector<const DeviceProfile*> device_order;
    for (const auto& d : devices) device_order.push_back(&d);
    std::sort(device_order.begin(), device_order.end(),
              [&](const DeviceProfile* a, const DeviceProfile* b) {
                  const double ua = device_u[a->id], ub = device_u[b->id];
                  if (ua != ub) return ua > ub;
                  return a->id < b->id;
              });

    // Branch order: descending best occupation (hardest to place first),
    // ties on lower id.
    std::vector<const BranchProfile*> branch_order;
    for (const auto& b : branches) branch_order.push_back(&b);
    auto best_occupation = [&](const BranchProfile& b) {
        double best = -1.0;
        for (const auto& d : devices) {
            const auto& s = pair_scores[{d.id, b.id}];
            if (s.fits_memory) best = std::max(best, s.occupation);
        }
        return best;
    };
    std::map<std::string, double> branch_o;
    for (const auto& b : branches) branch_o[b.id] = best_occupation(b);
    std::sort(branch_order.begin(), branch_order.end(),
              [&](const BranchProfile* a, const BranchProfile* b) {
                  if (branch_o[a->id] != branch_o[b->id]) return branch_o[a->id] > branch_o[b->id];
                  return a->id < b->id;
              });

    std::set<std::string> taken;
    for (const BranchProfile* b : branch_order) {
        const Assignment* made = nullptr;
        for (const DeviceProfile* d : device_order) {
            if (taken.count(d->id)) continue;
            const auto& s = pair_scores[{d->id, b->id}];
            if (!s.eligible) continue;
            taken.insert(d->id);
            plan.assignments.push_back({b->id, d->id, s.availability, s.occupation});
            made = &plan.assignments.back();
            break;
        }
        if (!made) plan.unassigned.push_back(b->id);
    }
    std::sort(plan.assignments.begin(), plan.assignments.end(),
              [](const Assignment& a, const Assignment& b) { return a.branch_id < b.branch_id; });
    std::sort(plan.unassigned.begin(), plan.unassigned.end());

    for (auto& [key, score] : pair_scores) plan.scores.push_back(score);
    return plan;
}

AllocationPlan reallocate(const AllocationPlan& prior, const std::vector<DeviceProfile>& devices,
                          const std::vector<BranchProfile>& branches, int alpha, int beta) {
    if (devices.empty()) throw ConfigError("reallocate: need at least one device");
    for (const auto& d : devices) check_device(d);

    std::map<std::string, const DeviceProfile*> device_by_id;
    for (const auto& d : devices) device_by_id[d.id] = &d;

    // Keep every assignment that is still eligible under the fresh telemetry.
    std::vector<Assignment> kept;
    std::vector<BranchProfile> to_place;
    std::set<std::string> kept_devices;
    for (const auto& b : branches) {
        const Assignment* prev = prior.find(b.id);
        bool keep = false;
        if (prev) {
            auto it = device_by_id.find(prev->device_id);
            if (it != device_by_id.end()) {
                const DeviceProfile& d = *it->second;
                const double u = availability(d.processor_idle, d.memory_idle, d.risk, alpha);
                const double m = memory_ratio(b, d);
                if (m < 1.0) {
                    const double o = occupation(std::round(calc_rate(b) * 1e4) / 1e4, m, beta);
                    if (u >= o) {
                        kept.push_back({b.id, d.id, u, o});
                        kept_devices.insert(d.id);
                        keep = true;
                    }
                }
            }
        }
        if (!keep) to_place.push_back(b);
    }

    std::vector<DeviceProfile> free_devices;
    for (const auto& d : devices)
        if (!kept_devices.count(d.id)) free_devices.push_back(d);

    AllocationPlan plan;
    plan.alpha = alpha;
    plan.beta = beta;
    if (!to_place.empty() && !free_devices.empty()) {
        AllocationPlan sub = allocate(free_devices, to_place, alpha, beta);
        plan.assignments = std::move(sub.assignments);
        plan.unassigned = std::move(sub.unassigned);
        plan.scores = std::move(sub.scores);
    } else {
        for (const auto& b : to_place) plan.unassigned.push_back(b.id);
    }
    plan.assignments.insert(plan.assignments.end(), kept.begin(), kept.end());
    std::sort(plan.assignments.begin(), plan.assignments.end(),
              [](const Assignment& a, const Assignment& b) { return a.branch_id < b.branch_id; });
    std::sort(plan.unassigned.begin(), plan.unassigned.end());
    return plan;
}

} // namespace lipar::alloc
