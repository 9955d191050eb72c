#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "ibpt/vita.hpp"

using namespace ibpt;
using namespace ibpt::vita;
using namespace std::chrono_literals;

namespace {

std::string temp_path(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove(p);
    return p.string();
}

Timestamp at(std::int64_t ms) { return Timestamp(std::chrono::milliseconds(ms)); }

VitaRecord record(std::uint64_t order, std::string unit, SubPhase phase, std::int64_t start, std::int64_t dur,
                  StatusCode status = StatusCode::Good, std::optional<double> dev = std::nullopt) {
    return {order, std::move(unit), {GameField::Tray1, GameField::A1}, phase, at(start), at(start + dur), status, dev};
}

std::vector<std::string> lines_of(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

}  // namespace

TEST_CASE("timestamps are millisecond UTC text") {
    CHECK(format_timestamp(at(0)) == "1970-01-01T00:00:00.000Z");
    CHECK(format_timestamp(at(1'791'973'800'125)) == "2026-10-14T10:30:00.125Z");
    CHECK(parse_timestamp("2026-10-14T10:30:00.125Z") == at(1'791'973'800'125));
    std::mt19937_64 rng(3);
    for (int i = 0; i < 1000; ++i) {
        auto t = at(static_cast<std::int64_t>(rng() % 4'000'000'000'000ULL));
        CHECK(parse_timestamp(format_timestamp(t)) == t);
    }
    for (auto bad : {"", "2026-10-14 10:30:00.125Z", "2026-13-14T10:30:00.125Z", "2026-10-14T10:30:00.12Z",
                     "2026-10-14T10:30:00.125", "2026-1x-14T10:30:00.125Z"})
        CHECK(!parse_timestamp(bad));
}

TEST_CASE("records survive a write and read back") {
    const auto path = temp_path("ibpt_vita_roundtrip.ndjson");
    std::vector<VitaRecord> written;
    {
        VitaLog log;
        REQUIRE(log.open(path, FsyncPolicy::EveryRecord));
        for (std::uint64_t o = 1; o <= 5; ++o) {
            std::vector<VitaRecord> batch;
            for (auto phase : kSubPhases)
                batch.push_back(record(o, "u" + std::to_string(o % 2), phase, 1000 * o, 7 * o, StatusCode::Good,
                                       phase == SubPhase::PlaceToken ? std::optional<double>(0.25 * o) : std::nullopt));
            REQUIRE(log.append(batch));
            written.insert(written.end(), batch.begin(), batch.end());
        }
        REQUIRE(log.append(record(6, "u0", SubPhase::PickUp, 9000, 0, StatusCode::BadTimeout)));
        written.push_back(record(6, "u0", SubPhase::PickUp, 9000, 0, StatusCode::BadTimeout));
        CHECK(log.records_written() == written.size());
    }
    CHECK(read_log(path) == written);
    auto lines = lines_of(path);
    REQUIRE(lines.size() == written.size());
    auto first = Json::parse(lines.front());
    CHECK(first.at("sub_phase") == "PickUp");
    CHECK(first.at("status") == "GOOD");
    CHECK(first.at("move") == Json{{"from", "tray1"}, {"to", "a1"}});
    CHECK(!first.contains("deviation_mm"));
    CHECK(Json::parse(lines.back()).at("status") == "BAD_TIMEOUT");

    VitaLog again;
    REQUIRE(again.open(path));
    REQUIRE(again.append(written.front()));
    again.close();
    CHECK(read_log(path).size() == written.size() + 1);
}

TEST_CASE("a malformed line is reported by number") {
    const auto path = temp_path("ibpt_vita_bad.ndjson");
    {
        std::ofstream out(path);
        out << encode(record(1, "u", SubPhase::PickUp, 0, 5)).dump() << "\n\n";
        out << encode(record(1, "u", SubPhase::MoveToken, 5, 5)).dump() << "\n";
        out << "{\"order_id\": 1, \"unit\": \n";
    }
    try {
        read_log(path);
        FAIL("expected LogFormatError");
    } catch (const LogFormatError& e) {
        CHECK(e.line() == 4);
        CHECK(std::string(e.what()).rfind("line 4:", 0) == 0);
    }

    auto rewrite = [&](Json j) {
        std::ofstream(path) << j.dump() << "\n";
        try {
            read_log(path);
        } catch (const LogFormatError& e) {
            return e.line();
        }
        return std::size_t{0};
    };
    auto good = encode(record(1, "u", SubPhase::PickUp, 100, 5));
    CHECK(rewrite(good) == 0);
    for (auto [key, value] : {std::pair<const char*, Json>{"sub_phase", "Lift"},
                              {"status", "NOT_A_STATUS"},
                              {"started_at", "yesterday"},
                              {"ended_at", "1970-01-01T00:00:00.000Z"},
                              {"deviation_mm", -1.0},
                              {"order_id", -3},
                              {"extra", 1}}) {
        auto j = good;
        j[key] = value;
        CHECK_MESSAGE(rewrite(j) == 1, key);
    }
    auto j = good;
    j.erase("unit");
    CHECK(rewrite(j) == 1);
    CHECK_THROWS_AS(read_log("/nonexistent/vita.ndjson"), std::runtime_error);
}

TEST_CASE("an empty log gives empty statistics") {
    const auto path = temp_path("ibpt_vita_empty.ndjson");
    std::ofstream(path).close();
    auto records = read_log(path);
    CHECK(records.empty());
    auto s = compute_stats(records);
    CHECK(s.total == 0);
    CHECK(s.units.empty());
    for (const auto& p : s.phases) {
        CHECK(p.count == 0);
        CHECK(p.mean_duration_ms == 0);
    }
    auto text = render_stats(s);
    CHECK(text.find("total records: 0") != std::string::npos);
    CHECK(encode(s).at("total") == 0);
}

TEST_CASE("statistics match hand counts") {
    std::vector<VitaRecord> rs = {
        record(1, "a", SubPhase::PickUp, 0, 10),
        record(1, "a", SubPhase::MoveToken, 10, 30, StatusCode::Good, 0.5),
        record(1, "a", SubPhase::PlaceToken, 40, 20, StatusCode::Good, 1.5),
        record(1, "b", SubPhase::PickUp, 0, 4),
        record(1, "b", SubPhase::MoveToken, 4, 6),
        record(1, "b", SubPhase::PlaceToken, 10, 2, StatusCode::Good, 2.5),
        record(2, "b", SubPhase::PickUp, 50, 0, StatusCode::BadDeviceFailure),
    };
    auto s = compute_stats(rs);
    CHECK(s.total == 7);
    const auto& pick = s.phases[0];
    CHECK(pick.count == 3);
    CHECK(pick.mean_duration_ms == doctest::Approx(14.0 / 3));
    CHECK(pick.max_duration_ms == 10);
    CHECK(pick.deviation_samples == 0);
    const auto& move = s.phases[1];
    CHECK(move.count == 2);
    CHECK(move.mean_duration_ms == doctest::Approx(18.0));
    CHECK(move.max_duration_ms == 30);
    CHECK(move.mean_deviation_mm == doctest::Approx(0.5));
    const auto& place = s.phases[2];
    CHECK(place.mean_duration_ms == doctest::Approx(11.0));
    CHECK(place.deviation_samples == 2);
    CHECK(place.mean_deviation_mm == doctest::Approx(2.0));
    CHECK(s.units.at("a").records == 3);
    CHECK(s.units.at("a").failures == 0);
    CHECK(s.units.at("b").records == 4);
    CHECK(s.units.at("b").failures == 1);

    auto j = encode(s);
    CHECK(j.at("phases").at("MoveToken").at("count") == 2);
    CHECK(j.at("units").at("b").at("failures") == 1);
    auto text = render_stats(s);
    CHECK(text.find("PlaceToken") != std::string::npos);
    CHECK(text.find("total records: 7") != std::string::npos);
}

TEST_CASE("an unwritable log reports failure without throwing") {
    VitaLog log;
    CHECK(!log.open("/nonexistent/dir/vita.ndjson"));
    CHECK(!log.is_open());
    CHECK(!log.append(record(1, "u", SubPhase::PickUp, 0, 1)));
    CHECK_NOTHROW(log.flush());
    CHECK(log.records_written() == 0);
}
