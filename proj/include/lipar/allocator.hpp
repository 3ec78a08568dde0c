#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lipar/errors.hpp"

namespace lipar::alloc {

/// Telemetry snapshot of one candidate compute device (an ECU).
struct DeviceProfile {
    std::string id;
    double processor_idle = 1.0; // in (0,1]
    double memory_idle = 1.0;    // in (0,1]
    int risk = 1;                // importance index, positive (typically <= 10)
    double total_memory_mb = 1.0;
};

/// Size profile of one branch network.
struct BranchProfile {
    std::string id;
    double fwd_bwd_mb = 0.0;
    double param_mb = 0.0;
    double total_mb = 0.0; // fwd_bwd + param up to +-0.01 rounding

    static BranchProfile make(std::string id, double fwd_bwd_mb, double param_mb,
                              std::optional<double> total = std::nullopt);
};

/// Harmonic mean of the processor and memory idle rates.
double idle_rate(double processor_idle, double memory_idle);

/// Risk-weighted availability index of a device:
/// U = 2(1+a^2) P M / (a^2 (P+M) + 2 P M R).
double availability(double processor_idle, double memory_idle, int risk, int alpha);

/// Fraction of a branch's footprint that is forward/backward activation work.
double calc_rate(const BranchProfile& branch);

/// Resource occupation index: O = (1+b^2) c m / (b^2 m + c).
double occupation(double calc_rate, double memory_ratio, int beta);

/// Branch footprint over device memory; must stay below 1 to fit.
double memory_ratio(const BranchProfile& branch, const DeviceProfile& device);

/// One evaluated (device, branch) pairing.
struct PairScore {
    std::string device_id;
    std::string branch_id;
    double availability = 0.0; // U_i
    double occupation = 0.0;   // O_ij
    double memory_ratio = 0.0; // m_ij
    bool fits_memory = false;  // m_ij < 1
    bool eligible = false;     // fits and U_i >= O_ij
};

struct Assignment {
    std::string branch_id;
    std::string device_id;
    double availability = 0.0;
    double occupation = 0.0;
};

struct AllocationPlan {
    int alpha = 1;
    int beta = 2;
    std::vector<Assignment> assignments;
    std::vector<std::string> unassigned;
    std::vector<PairScore> scores; // every considered (device, branch) pair

    const Assignment* find(const std::string& branch_id) const;
};

/// Greedy matching: branches in descending order of their best occupation
/// index, devices in descending availability; each branch takes the highest-
/// availability device that fits it (memory ratio < 1 and U >= O) and is
/// still free. Ties break on lower device id, then lower branch id.
/// Calculation rates enter the occupation formula quantized to 4 decimals,
/// the precision at which size tables are printed and compared.
AllocationPlan allocate(const std::vector<DeviceProfile>& devices,
                        const std::vector<BranchProfile>& branches, int alpha, int beta);

/// Re-evaluates a plan against fresh device telemetry. A branch stays on its
/// device while that pairing is still eligible; everything else is reassigned
/// over the freed devices, so stable hosts never churn.
AllocationPlan reallocate(const AllocationPlan& prior, const std::vector<DeviceProfile>& devices,
                          const std::vector<BranchProfile>& branches, int alpha, int beta);

} // namespace lipar::alloc
