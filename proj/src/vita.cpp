#include "ibpt/vita.hpp"

#include <charconv>
#include <ctime>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <unistd.h>

namespace ibpt::vita {

Timestamp now_ms() {
    return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

std::string format_timestamp(Timestamp t) {
    auto ms = t.time_since_epoch().count();
    auto secs = static_cast<std::time_t>(ms >= 0 ? ms / 1000 : (ms - 999) / 1000);
    auto frac = static_cast<int>(ms - static_cast<std::int64_t>(secs) * 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                       tm.tm_hour, tm.tm_min, tm.tm_sec, frac);
}

std::optional<Timestamp> parse_timestamp(std::string_view text) {
    // Fixed layout: YYYY-MM-DDTHH:MM:SS.mmmZ
    if (text.size() != 24 || text[4] != '-' || text[7] != '-' || text[10] != 'T' || text[13] != ':' ||
        text[16] != ':' || text[19] != '.' || text[23] != 'Z')
        return std::nullopt;
    auto num = [&](std::size_t pos, std::size_t len, int& out) {
        auto [end, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
        return ec == std::errc() && end == text.data() + pos + len;
    };
    int year, mon, day, hour, min, sec, ms;
    if (!num(0, 4, year) || !num(5, 2, mon) || !num(8, 2, day) || !num(11, 2, hour) || !num(14, 2, min) ||
        !num(17, 2, sec) || !num(20, 3, ms))
        return std::nullopt;
    if (mon < 1 || mon > 12 || day < 1 || day > 31 || hour > 23 || min > 59 || sec > 60) return std::nullopt;
    std::tm tm{};
    tm.tm_year = year - 1900;
    tm.tm_mon = mon - 1;
    tm.tm_mday = day;
    tm.tm_hour = hour;
    tm.tm_min = min;
    tm.tm_sec = sec;
    auto secs = timegm(&tm);
    return Timestamp(std::chrono::milliseconds(static_cast<std::int64_t>(secs) * 1000 + ms));
}

std::string_view to_string(SubPhase p) noexcept {
    switch (p) {
        case SubPhase::PickUp: return "PickUp";
        case SubPhase::MoveToken: return "MoveToken";
        case SubPhase::PlaceToken: return "PlaceToken";
    }
    return "PickUp";
}

std::optional<SubPhase> parse_sub_phase(std::string_view text) noexcept {
    for (auto p : kSubPhases)
        if (to_string(p) == text) return p;
    return std::nullopt;
}

Json encode(const VitaRecord& r) {
    Json j = Json::object();
    j["order_id"] = r.order_id;
    j["unit"] = r.unit;
    j["move"] = ibpt::encode(r.move);
    j["sub_phase"] = std::string(to_string(r.sub_phase));
    j["started_at"] = format_timestamp(r.started_at);
    j["ended_at"] = format_timestamp(r.ended_at);
    j["status"] = ibpt::encode(r.status);
    if (r.deviation_mm) j["deviation_mm"] = *r.deviation_mm;
    return j;
}

VitaLog::~VitaLog() { close(); }

bool VitaLog::open(const std::string& path, FsyncPolicy policy) {
    std::lock_guard lock(mutex_);
    if (file_) std::fclose(file_);
    path_ = path;
    policy_ = policy;
    file_ = std::fopen(path.c_str(), "a");
    if (!file_) {
        spdlog::error("vita log: cannot open {}: {}", path, std::strerror(errno));
        return false;
    }
    return true;
}

bool VitaLog::is_open() const {
    std::lock_guard lock(mutex_);
    return file_ != nullptr;
}

bool VitaLog::write_line(const std::string& line) {
    if (!file_) return false;
    if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fputc('\n', file_) == EOF) {
        spdlog::error("vita log: write to {} failed: {}", path_, std::strerror(errno));
        return false;
    }
    ++written_;
    return true;
}

bool VitaLog::append(const VitaRecord& r) { return append(std::vector<VitaRecord>{r}); }

bool VitaLog::append(const std::vector<VitaRecord>& records) {
    std::lock_guard lock(mutex_);
    bool ok = true;
    for (const auto& r : records) ok = write_line(encode(r).dump()) && ok;
    if (!file_) return false;
    if (std::fflush(file_) != 0) {
        spdlog::error("vita log: flush of {} failed: {}", path_, std::strerror(errno));
        ok = false;
    }
    if (policy_ == FsyncPolicy::EveryRecord && ::fsync(::fileno(file_)) != 0) {
        spdlog::error("vita log: fsync of {} failed: {}", path_, std::strerror(errno));
        ok = false;
    }
    return ok;
}

void VitaLog::flush() {
    std::lock_guard lock(mutex_);
    if (!file_) return;
    std::fflush(file_);
    ::fsync(::fileno(file_));
}

void VitaLog::close() {
    std::lock_guard lock(mutex_);
    if (!file_) return;
    std::fflush(file_);
    ::fsync(::fileno(file_));
    std::fclose(file_);
    file_ = nullptr;
}

std::uint64_t VitaLog::records_written() const {
    std::lock_guard lock(mutex_);
    return written_;
}

std::vector<VitaRecord> read_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<VitaRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(decode_text<VitaRecord>(line));
        } catch (const DecodeError& e) {
            throw LogFormatError(n, e.what());
        }
    }
    return out;
}

VitaStats compute_stats(const std::vector<VitaRecord>& records) {
    VitaStats s;
    std::array<double, 3> duration_sum{};
    std::array<double, 3> deviation_sum{};
    for (const auto& r : records) {
        auto i = static_cast<std::size_t>(r.sub_phase);
        auto& p = s.phases[i];
        auto d = r.duration().count();
        ++p.count;
        duration_sum[i] += static_cast<double>(d);
        p.max_duration_ms = std::max(p.max_duration_ms, d);
        if (r.deviation_mm) {
            ++p.deviation_samples;
            deviation_sum[i] += *r.deviation_mm;
        }
        auto& u = s.units[r.unit];
        ++u.records;
        if (!is_good(r.status)) ++u.failures;
        ++s.total;
    }
    for (std::size_t i = 0; i < 3; ++i) {
        auto& p = s.phases[i];
        if (p.count) p.mean_duration_ms = duration_sum[i] / static_cast<double>(p.count);
        if (p.deviation_samples) p.mean_deviation_mm = deviation_sum[i] / static_cast<double>(p.deviation_samples);
    }
    return s;
}

std::string render_stats(const VitaStats& s) {
    std::ostringstream out;
    out << fmt::format("{:<12} {:>8} {:>14} {:>12} {:>18}\n", "sub_phase", "count", "mean_ms", "max_ms",
                       "mean_deviation_mm");
    for (auto phase : kSubPhases) {
        const auto& p = s.phases[static_cast<std::size_t>(phase)];
        out << fmt::format("{:<12} {:>8} {:>14.3f} {:>12} {:>18.4f}\n", to_string(phase), p.count,
                           p.mean_duration_ms, p.max_duration_ms, p.mean_deviation_mm);
    }
    out << "\n" << fmt::format("{:<20} {:>8} {:>9}\n", "unit", "records", "failures");
    for (const auto& [name, u] : s.units) out << fmt::format("{:<20} {:>8} {:>9}\n", name, u.records, u.failures);
    out << fmt::format("\ntotal records: {}\n", s.total);
    return out.str();
}

Json encode(const VitaStats& s) {
    Json phases = Json::object();
    for (auto phase : kSubPhases) {
        const auto& p = s.phases[static_cast<std::size_t>(phase)];
        phases[std::string(to_string(phase))] = Json{{"count", p.count},
                                                     {"mean_duration_ms", p.mean_duration_ms},
                                                     {"max_duration_ms", p.max_duration_ms},
                                                     {"deviation_samples", p.deviation_samples},
                                                     {"mean_deviation_mm", p.mean_deviation_mm}};
    }
    Json units = Json::object();
    for (const auto& [name, u] : s.units) units[name] = Json{{"records", u.records}, {"failures", u.failures}};
    return Json{{"phases", phases}, {"units", units}, {"total", s.total}};
}

}  // namespace ibpt::vita

namespace ibpt {

using namespace codec;

template <>
vita::VitaRecord decode<vita::VitaRecord>(const Json& j, const std::string& path) {
    require_object(j, path);
    reject_unknown(j,
                   {"order_id", "unit", "move", "sub_phase", "started_at", "ended_at", "status", "deviation_mm"},
                   path);
    vita::VitaRecord r;
    r.order_id = as_u64(member(j, "order_id", path), join(path, "order_id"));
    r.unit = as_string(member(j, "unit", path), join(path, "unit"));
    r.move = decode<GameMove>(member(j, "move", path), join(path, "move"));
    auto phase_text = as_string(member(j, "sub_phase", path), join(path, "sub_phase"));
    auto phase = vita::parse_sub_phase(phase_text);
    if (!phase) throw DecodeError(join(path, "sub_phase"), "unknown sub-phase '" + phase_text + "'");
    r.sub_phase = *phase;
    for (auto [name, slot] : {std::pair{"started_at", &r.started_at}, std::pair{"ended_at", &r.ended_at}}) {
        auto text = as_string(member(j, name, path), join(path, name));
        auto t = vita::parse_timestamp(text);
        if (!t) throw DecodeError(join(path, name), "bad timestamp '" + text + "'");
        *slot = *t;
    }
    if (r.ended_at < r.started_at) throw DecodeError(join(path, "ended_at"), "ends before it starts");
    r.status = decode<StatusCode>(member(j, "status", path), join(path, "status"));
    if (auto it = j.find("deviation_mm"); it != j.end()) {
        auto d = as_double(*it, join(path, "deviation_mm"));
        if (d < 0) throw DecodeError(join(path, "deviation_mm"), "negative deviation");
        r.deviation_mm = d;
    }
    return r;
}

}  // namespace ibpt
