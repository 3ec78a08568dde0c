#include "lipar/can_data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "lipar/prng.hpp"

static_assert(std::endian::native == std::endian::little,
              "windows/checkpoint files assume a little-endian host");

namespace lipar::can {

const char* label_name(TrafficLabel label) {
    switch (label) {
        case TrafficLabel::Normal: return "normal";
        case TrafficLabel::Dos: return "dos";
        case TrafficLabel::Fuzzy: return "fuzzy";
        case TrafficLabel::SpoofGear: return "gear";
        case TrafficLabel::SpoofRpm: return "rpm";
    }
    return "?";
}

TrafficLabel label_from_name(const std::string& name) {
    for (int i = 0; i < kNumClasses; ++i) {
        auto label = static_cast<TrafficLabel>(i);
        if (name == label_name(label)) return label;
    }
    throw ConfigError("unknown traffic label '" + name +
                      "' (expected normal|dos|fuzzy|gear|rpm)");
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split_fields(std::string_view row) {
    std::vector<std::string_view> out;
    size_t start = 0;
    for (size_t i = 0; i <= row.size(); ++i) {
        if (i == row.size() || row[i] == ',') {
            out.push_back(trim(row.substr(start, i - start)));
            start = i + 1;
        }
    }
    while (!out.empty() && out.back().empty()) out.pop_back();
    return out;
}

[[noreturn]] void row_error(size_t line_no, const std::string& what) {
    throw ParseError("line " + std::to_string(line_no) + ": " + what);
}

uint64_t parse_hex(std::string_view s, size_t line_no, const char* what) {
    if (s.empty()) row_error(line_no, std::string(what) + " is empty");
    uint64_t value = 0;
    for (char ch : s) {
        int digit;
        if (ch >= '0' && ch <= '9') digit = ch - '0';
        else if (ch >= 'a' && ch <= 'f') digit = ch - 'a' + 10;
        else if (ch >= 'A' && ch <= 'F') digit = ch - 'A' + 10;
        else row_error(line_no, std::string("malformed hex in ") + what + ": '" + std::string(s) + "'");
        value = value * 16 + static_cast<uint64_t>(digit);
        if (value > 0xFFFFFFFFULL) row_error(line_no, std::string(what) + " out of range");
    }
    return value;
}

bool is_flag_field(std::string_view s) {
    return s.size() == 1 && (s[0] == 'R' || s[0] == 'T' || s[0] == 'r' || s[0] == 't');
}

} // namespace

CanRecord parse_can_row(const std::string& row, LabelMode mode, TrafficLabel file_label,
                        size_t line_no) {
    auto fields = split_fields(row);
    if (fields.size() < 3) row_error(line_no, "expected at least timestamp, ID, DLC");

    CanRecord rec;
    try {
        rec.timestamp = std::stod(std::string(fields[0]));
    } catch (const std::exception&) {
        row_error(line_no, "malformed timestamp '" + std::string(fields[0]) + "'");
    }

    const uint64_t id = parse_hex(fields[1], line_no, "CAN ID");
    if (id > kMaxCanId)
        row_error(line_no, "CAN ID 0x" + std::string(fields[1]) +
                               " exceeds the 11-bit standard-frame range");
    rec.can_id = static_cast<uint16_t>(id);

    int dlc = -1;
    {
        std::string_view s = fields[2];
        if (!s.empty() && s.find_first_not_of("0123456789") == std::string_view::npos)
            dlc = std::stoi(std::string(s));
    }
    if (dlc < 0 || dlc > 8) row_error(line_no, "DLC must be an integer in [0,8]");
    rec.dlc = static_cast<uint8_t>(dlc);

    // Payload: either one blob field with space-separated bytes, or dlc
    // separate fields. An optional trailing R/T flag follows either form.
    std::vector<std::string_view> bytes;
    size_t next = 3;
    if (next < fields.size() && fields[next].find(' ') != std::string_view::npos) {
        std::string_view blob = fields[next++];
        size_t start = 0;
        for (size_t i = 0; i <= blob.size(); ++i) {
            if (i == blob.size() || blob[i] == ' ') {
                auto piece = trim(blob.substr(start, i - start));
                if (!piece.empty()) bytes.push_back(piece);
                start = i + 1;
            }
        }
    } else {
        while (next < fields.size() && bytes.size() < rec.dlc) {
            if (is_flag_field(fields[next])) break;
            bytes.push_back(fields[next++]);
        }
    }

    std::string_view flag;
    if (next < fields.size()) {
        if (!is_flag_field(fields[next]))
            row_error(line_no, "unexpected trailing field '" + std::string(fields[next]) + "'");
        flag = fields[next++];
    }
    if (next != fields.size()) row_error(line_no, "too many fields");

    if (bytes.size() != rec.dlc)
        row_error(line_no, "DLC is " + std::to_string(rec.dlc) + " but row carries " +
                               std::to_string(bytes.size()) + " payload bytes");
    for (size_t i = 0; i < bytes.size(); ++i) {
        const uint64_t b = parse_hex(bytes[i], line_no, "payload byte");
        if (b > 0xFF) row_error(line_no, "payload byte out of range");
        rec.payload[i] = static_cast<uint8_t>(b);
    }

    if (mode == LabelMode::Fixed) {
        rec.label = file_label;
    } else {
        const bool injected = !flag.empty() && (flag[0] == 'T' || flag[0] == 't');
        rec.label = injected ? file_label : TrafficLabel::Normal;
    }
    return rec;
}

std::vector<CanRecord> parse_can_csv(const std::filesystem::path& path, LabelMode mode,
                                     TrafficLabel file_label) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open CAN log: " + path.string());
    std::vector<CanRecord> records;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            records.push_back(parse_can_row(line, mode, file_label, line_no));
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
    }
    return records;
}

FeatureVector normalize_record(const CanRecord& rec) {
    FeatureVector out{};
    out[0] = static_cast<float>(rec.can_id) / static_cast<float>(kMaxCanId);
    for (int k = 0; k < rec.dlc; ++k)
        out[1 + k] = static_cast<float>(rec.payload[static_cast<size_t>(k)]) / 255.0f;
    return out;
}

TrafficLabel label_window(std::span<const CanRecord> records) {
    std::array<int, kNumClasses> counts{};
    for (const auto& rec : records) counts[static_cast<size_t>(rec.label)]++;
    // Normal iff every message is normal; otherwise majority attack label,
    // ties to the smaller ordinal.
    int best = -1, best_count = 0;
    for (int i = 1; i < kNumClasses; ++i) {
        if (counts[static_cast<size_t>(i)] > best_count) {
            best = i;
            best_count = counts[static_cast<size_t>(i)];
        }
    }
    return best < 0 ? TrafficLabel::Normal : static_cast<TrafficLabel>(best);
}

std::vector<Window> build_windows(std::span<const CanRecord> records, uint64_t base_index) {
    const size_t full = records.size() / kWindowMessages;
    if (full == 0) {
        if (!records.empty())
            log_warn("build_windows: only " + std::to_string(records.size()) +
                     " records, need " + std::to_string(kWindowMessages) + "; no windows built");
        return {};
    }
    std::vector<Window> windows;
    windows.reserve(full);
    for (size_t wi = 0; wi < full; ++wi) {
        Window w;
        const size_t start = wi * kWindowMessages;
        for (int m = 0; m < kWindowMessages; ++m) {
            const FeatureVector fv = normalize_record(records[start + static_cast<size_t>(m)]);
            std::copy(fv.begin(), fv.end(), w.image.begin() + m * kFeatureCount);
        }
        w.label = label_window(records.subspan(start, kWindowMessages));
        w.source_index = base_index + start;
        windows.push_back(w);
    }
    const size_t rest = records.size() - full * kWindowMessages;
    if (rest > 0)
        log_warn("build_windows: dropped trailing " + std::to_string(rest) + " records");
    return windows;
}

DatasetSplit split_dataset(std::span<const Window> windows, SplitRatios ratios, uint64_t seed) {
    const double total = ratios.train + ratios.validation + ratios.test;
    if (ratios.train <= 0 || ratios.validation <= 0 || ratios.test <= 0 ||
        std::abs(total - 1.0) > 1e-9)
        throw ConfigError("split ratios must be positive and sum to 1");

    std::array<std::vector<size_t>, kNumClasses> by_class;
    for (size_t i = 0; i < windows.size(); ++i)
        by_class[static_cast<size_t>(windows[i].label)].push_back(i);

    DatasetSplit split;
    split.seed = seed;
    for (int cls = 0; cls < kNumClasses; ++cls) {
        auto& indices = by_class[static_cast<size_t>(cls)];
        if (indices.empty()) continue;
        if (indices.size() < 3)
            throw ConfigError(std::string("split_dataset: class '") +
                              label_name(static_cast<TrafficLabel>(cls)) + "' has only " +
                              std::to_string(indices.size()) + " windows (need >= 3)");
        Prng rng(mix64(seed, 0x59117A6EULL + static_cast<uint64_t>(cls)));
        deterministic_shuffle(indices, rng);
        const auto n = indices.size();
        auto n_train = static_cast<size_t>(std::llround(static_cast<double>(n) * ratios.train));
        auto n_val = static_cast<size_t>(std::llround(static_cast<double>(n) * ratios.validation));
        n_train = std::min(n_train, n - 2);
        n_val = std::min(n_val, n - n_train - 1);
        n_train = std::max<size_t>(n_train, 1);
        n_val = std::max<size_t>(n_val, 1);
        for (size_t i = 0; i < n; ++i) {
            const Window& w = windows[indices[i]];
            if (i < n_train) split.train.push_back(w);
            else if (i < n_train + n_val) split.validation.push_back(w);
            else split.test.push_back(w);
        }
    }
    return split;
}

std::vector<CanRecord> synthesize_traffic(TrafficLabel kind, size_t n, uint64_t seed) {
    // Benign palette; deliberately excludes the spoofed IDs below.
    static constexpr uint16_t kBenignIds[] = {0x545, 0x2B0, 0x5F0, 0x350, 0x130};
    static constexpr uint16_t kGearId = 0x43F;
    static constexpr uint16_t kRpmId = 0x316;

    Prng rng(mix64(seed, static_cast<uint64_t>(kind), 0x7A55ULL));
    std::vector<CanRecord> out;
    out.reserve(n);
    double ts = 0.0;
    for (size_t i = 0; i < n; ++i) {
        CanRecord rec;
        rec.timestamp = ts;
        ts += 0.0005;
        rec.dlc = 8;
        rec.label = kind;
        switch (kind) {
            case TrafficLabel::Dos:
                rec.can_id = 0x000;
                break; // payload stays zero
            case TrafficLabel::Fuzzy:
                rec.can_id = static_cast<uint16_t>(rng.next_below(kMaxCanId + 1));
                for (auto& b : rec.payload) b = static_cast<uint8_t>(rng.next_below(256));
                break;
            case TrafficLabel::SpoofGear:
            case TrafficLabel::SpoofRpm:
                rec.can_id = kind == TrafficLabel::SpoofGear ? kGearId : kRpmId;
                for (auto& b : rec.payload) b = static_cast<uint8_t>(rng.next_below(256));
                break;
            case TrafficLabel::Normal:
                rec.can_id = kBenignIds[i % std::size(kBenignIds)];
                for (auto& b : rec.payload) b = static_cast<uint8_t>(rng.next_below(256));
                break;
        }
        out.push_back(rec);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Windows file I/O.
// ---------------------------------------------------------------------------

namespace {

constexpr char kWindowsMagic[4] = {'L', 'I', 'P', 'W'};

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const char* what) {
    T value;
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw IoError(std::string("windows file truncated while reading ") + what);
    return value;
}

} // namespace

void write_windows_file(const std::filesystem::path& path, const WindowsFile& file) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write windows file: " + path.string());
    out.write(kWindowsMagic, 4);
    write_raw(out, kWindowsFileVersion);
    write_raw(out, static_cast<uint64_t>(file.windows.size()));
    write_raw(out, file.seed);
    for (const Window& w : file.windows) {
        write_raw(out, static_cast<uint8_t>(w.label));
        write_raw(out, w.source_index);
        out.write(reinterpret_cast<const char*>(w.image.data()),
                  static_cast<std::streamsize>(w.image.size() * sizeof(float)));
    }
    if (!out) throw IoError("failed writing windows file: " + path.string());
}

WindowsFile read_windows_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open windows file: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kWindowsMagic, 4) != 0)
        throw IoError("not a windows file (bad magic): " + path.string());
    const auto version = read_raw<uint16_t>(in, "version");
    if (version != kWindowsFileVersion)
        throw IoError("unsupported windows file version " + std::to_string(version));
    const auto count = read_raw<uint64_t>(in, "count");
    WindowsFile file;
    file.seed = read_raw<uint64_t>(in, "seed");
    file.windows.resize(count);
    for (auto& w : file.windows) {
        const auto raw_label = read_raw<uint8_t>(in, "label");
        if (raw_label >= kNumClasses)
            throw IoError("windows file carries invalid label " + std::to_string(raw_label));
        w.label = static_cast<TrafficLabel>(raw_label);
        w.source_index = read_raw<uint64_t>(in, "source_index");
        in.read(reinterpret_cast<char*>(w.image.data()),
                static_cast<std::streamsize>(w.image.size() * sizeof(float)));
        if (!in) throw IoError("windows file truncated mid-window: " + path.string());
    }
    return file;
}

} // namespace lipar::can
