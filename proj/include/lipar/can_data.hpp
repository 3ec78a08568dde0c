#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lipar/errors.hpp"

namespace lipar::can {

/// Traffic classes of the Car-Hacking captures. Ordinal order is the
/// tie-break order wherever a deterministic choice between attack labels
/// is needed.
enum class TrafficLabel : uint8_t {
    Normal = 0,
    Dos = 1,
    Fuzzy = 2,
    SpoofGear = 3,
    SpoofRpm = 4,
};

inline constexpr int kNumClasses = 5;
inline constexpr int kWindowMessages = 27; // 3 channels x 9 rows
inline constexpr int kFeatureCount = 9;    // ID + 8 payload bytes
inline constexpr int kWindowValues = kWindowMessages * kFeatureCount;
inline constexpr uint16_t kMaxCanId = 0x7FF; // standard 11-bit frames only

const char* label_name(TrafficLabel label);
TrafficLabel label_from_name(const std::string& name);

/// One parsed CAN message.
struct CanRecord {
    double timestamp = 0.0;
    uint16_t can_id = 0;
    uint8_t dlc = 0;
    std::array<uint8_t, 8> payload{}; // first dlc bytes valid, rest zero
    TrafficLabel label = TrafficLabel::Normal;
};

/// Nine features in [0,1]: normalized ID then the eight payload bytes
/// (absent bytes are zero).
using FeatureVector = std::array<float, kFeatureCount>;

FeatureVector normalize_record(const CanRecord& rec);

/// One training sample: 27 consecutive messages as a (3,9,9) image.
/// The (27,9) sequence view is the same buffer read row-major, so the two
/// views are bit-identical by construction.
struct Window {
    std::array<float, kWindowValues> image{};
    TrafficLabel label = TrafficLabel::Normal;
    uint64_t source_index = 0;

    std::span<const float> flat() const { return image; }
    /// Row r of the sequence view (r in [0,27)).
    std::span<const float, kFeatureCount> sequence_row(int r) const {
        return std::span<const float, kFeatureCount>(image.data() + r * kFeatureCount,
                                                     kFeatureCount);
    }
};

/// How parse_can_csv assigns labels.
/// FlagColumn: a trailing R/T field decides per row (T = injected message of
/// the file's attack type, R or absent = normal traffic).
/// Fixed: every row gets the file label.
enum class LabelMode { FlagColumn, Fixed };

/// Parses a Car-Hacking-format CSV: timestamp, hex ID, DLC, payload bytes
/// (either one space-separated field or DLC separate fields, auto-detected),
/// optional R/T flag. Throws ParseError with the offending line number.
std::vector<CanRecord> parse_can_csv(const std::filesystem::path& path, LabelMode mode,
                                     TrafficLabel file_label);

/// Parses a single CSV row (exposed for tests). line_no is for error messages.
CanRecord parse_can_row(const std::string& row, LabelMode mode, TrafficLabel file_label,
                        size_t line_no);

/// Groups records into non-overlapping runs of 27 in log order. The remainder
/// is dropped. A window is Normal iff all 27 records are Normal; otherwise it
/// takes the most frequent attack label (ties to the smaller ordinal).
/// base_index offsets the recorded source_index (for multi-file streams).
std::vector<Window> build_windows(std::span<const CanRecord> records, uint64_t base_index = 0);

TrafficLabel label_window(std::span<const CanRecord> records);

struct SplitRatios {
    double train = 0.7;
    double validation = 0.2;
    double test = 0.1;
};

struct DatasetSplit {
    std::vector<Window> train;
    std::vector<Window> validation;
    std::vector<Window> test;
    uint64_t seed = 0;
};

/// Stratified random split: within each class, windows are shuffled by a
/// seeded generator and partitioned per the ratios (each bucket within one
/// window of the exact proportion). Any present class with fewer than three
/// windows is an error.
DatasetSplit split_dataset(std::span<const Window> windows, SplitRatios ratios, uint64_t seed);

/// Deterministic synthetic traffic used as test and demo fixtures.
std::vector<CanRecord> synthesize_traffic(TrafficLabel kind, size_t n, uint64_t seed);

// ---------------------------------------------------------------------------
// Windows file: "LIPW" | u16 version | u64 count | u64 seed, then per window
// u8 label | u64 source_index | 243 little-endian float32.
// ---------------------------------------------------------------------------

inline constexpr uint16_t kWindowsFileVersion = 1;

struct WindowsFile {
    uint64_t seed = 0;
    std::vector<Window> windows;
};

void write_windows_file(const std::filesystem::path& path, const WindowsFile& file);
WindowsFile read_windows_file(const std::filesystem::path& path);

} // namespace lipar::can
