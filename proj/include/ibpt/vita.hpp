#pragma once

#include <array>
#include <chrono>
#include <cstdio>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ibpt/codec.hpp"

namespace ibpt::vita {

enum class SubPhase : std::uint8_t { PickUp, MoveToken, PlaceToken };

inline constexpr std::array<SubPhase, 3> kSubPhases = {SubPhase::PickUp, SubPhase::MoveToken, SubPhase::PlaceToken};

using Timestamp = std::chrono::time_point<std::chrono::system_clock, std::chrono::milliseconds>;

Timestamp now_ms();

/// "2026-10-15T08:30:00.125Z"
std::string format_timestamp(Timestamp t);
std::optional<Timestamp> parse_timestamp(std::string_view text);

std::string_view to_string(SubPhase p) noexcept;
std::optional<SubPhase> parse_sub_phase(std::string_view text) noexcept;

/// Lifecycle telemetry for one sub-phase of one order on one production unit.
struct VitaRecord {
    std::uint64_t order_id = 0;
    std::string unit;
    GameMove move;
    SubPhase sub_phase = SubPhase::PickUp;
    Timestamp started_at{};
    Timestamp ended_at{};
    StatusCode status = StatusCode::Good;
    std::optional<double> deviation_mm;

    std::chrono::milliseconds duration() const { return ended_at - started_at; }

    friend bool operator==(const VitaRecord&, const VitaRecord&) = default;
};

Json encode(const VitaRecord& r);

enum class FsyncPolicy : std::uint8_t { Never, EveryRecord };

/// Append-only newline-delimited JSON file, one record per line.
/// I/O failures are reported through the server log and the return value,
/// never thrown.
class VitaLog {
public:
    VitaLog() = default;
    ~VitaLog();
    VitaLog(const VitaLog&) = delete;
    VitaLog& operator=(const VitaLog&) = delete;

    bool open(const std::string& path, FsyncPolicy policy = FsyncPolicy::Never);
    bool is_open() const;
    bool append(const VitaRecord& r);
    bool append(const std::vector<VitaRecord>& records);
    void flush();
    void close();
    std::uint64_t records_written() const;
    const std::string& path() const { return path_; }

private:
    bool write_line(const std::string& line);

    mutable std::mutex mutex_;
    std::FILE* file_ = nullptr;
    std::string path_;
    FsyncPolicy policy_ = FsyncPolicy::Never;
    std::uint64_t written_ = 0;
};

class LogFormatError : public std::runtime_error {
public:
    LogFormatError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Reads every record; throws LogFormatError naming the first bad line
/// (1-based), std::runtime_error if the file cannot be opened. Blank lines
/// are skipped.
std::vector<VitaRecord> read_log(const std::string& path);

struct PhaseStats {
    std::uint64_t count = 0;
    double mean_duration_ms = 0;
    std::int64_t max_duration_ms = 0;
    std::uint64_t deviation_samples = 0;
    double mean_deviation_mm = 0;
};

struct UnitStats {
    std::uint64_t records = 0;
    std::uint64_t failures = 0;  // records whose status is not GOOD
};

struct VitaStats {
    std::array<PhaseStats, 3> phases{};
    std::map<std::string, UnitStats> units;
    std::uint64_t total = 0;
};

VitaStats compute_stats(const std::vector<VitaRecord>& records);
std::string render_stats(const VitaStats& s);
Json encode(const VitaStats& s);

}  // namespace ibpt::vita

namespace ibpt {
template <> vita::VitaRecord decode<vita::VitaRecord>(const Json& j, const std::string& path);
}
