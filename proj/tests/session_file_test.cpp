#include <gtest/gtest.h>

#include <boost/crc.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "slitlab/agent.hpp"
#include "slitlab/analytics.hpp"
#include "slitlab/session_file.hpp"

using namespace slitlab;

namespace {

Session agent_session(std::uint64_t seed, std::size_t n = 200, Screen screen = Screen::TwoSlit) {
    WorldConfig w;
    w.screen = screen;
    w.rng_seed = seed;
    w.mushroom_radius = 1.5;
    return run_agent({ModelSampler{params_for_screen(Geometry{}, screen)}, n, seed + 1}, w, {"tester", 30, "f"});
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::string join(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) out += l + '\n';
    return out;
}

Errc read_error(const std::string& text) {
    std::istringstream in(text);
    try {
        read_session_file(in);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "file was accepted";
    return Errc::contract_violation;
}

} // namespace

TEST(SessionFile, LayoutIsHeaderAttemptsSummary) {
    const auto s = agent_session(1, 5);
    const auto lines = lines_of(session_to_string(s));
    ASSERT_EQ(lines.size(), 7u);
    const auto header = json::parse(lines.front());
    EXPECT_EQ(header["type"], "header");
    EXPECT_EQ(header["format"], "slitlab-session");
    EXPECT_EQ(header["version"], 1);
    EXPECT_EQ(header["world"]["rng_seed"], 1u);
    EXPECT_EQ(header["subject"]["label"], "tester");
    for (std::size_t i = 1; i < 6; ++i) EXPECT_EQ(json::parse(lines[i])["type"], "attempt");
    const auto summary = json::parse(lines.back());
    EXPECT_EQ(summary["type"], "summary");
    EXPECT_EQ(summary["total"], 5);
}

TEST(SessionFile, ChecksumIsCrc32OfAttemptLines) {
    const auto lines = lines_of(session_to_string(agent_session(2, 10)));
    boost::crc_32_type crc;
    for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
        const std::string l = lines[i] + "\n";
        crc.process_bytes(l.data(), l.size());
    }
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", crc.checksum());
    EXPECT_EQ(json::parse(lines.back())["checksum"], buf);
}

TEST(SessionFile, RoundTripKeepsEverything) {
    const auto s = agent_session(3);
    std::istringstream in(session_to_string(s));
    const auto f = read_session_file(in);
    EXPECT_FALSE(f.recovered);
    EXPECT_EQ(f.session.id, s.id);
    EXPECT_EQ(f.session.subject, s.subject);
    EXPECT_EQ(f.session.world, s.world);
    EXPECT_EQ(f.summary, summarize(s.attempts));
    ASSERT_EQ(f.session.attempts.size(), s.attempts.size());
    for (std::size_t i = 0; i < s.attempts.size(); ++i) {
        EXPECT_EQ(f.session.attempts[i].outcome(), s.attempts[i].outcome());
        EXPECT_EQ(f.session.attempts[i].channel(), s.attempts[i].channel());
        EXPECT_EQ(f.session.attempts[i].input_log(), s.attempts[i].input_log());
    }
    EXPECT_EQ(build_histogram(f.session), build_histogram(s));
}

TEST(SessionFile, ReplayEqualsAgentRun) {
    for (auto screen : {Screen::TwoSlit, Screen::OneSlitCenter}) {
        const auto s = agent_session(4, 300, screen);
        const auto r = replay_string(session_to_string(s));
        EXPECT_EQ(r.attempts, s.attempts);
        EXPECT_EQ(build_histogram(r), build_histogram(s));
    }
}

TEST(SessionFile, TrajectoriesAreDownsampled) {
    const auto s = agent_session(5, 3);
    const auto text = session_to_string(s, {10});
    std::istringstream in(text);
    const auto f = read_session_file(in);
    const auto& full = s.attempts[0].trajectory();
    const auto& kept = f.session.attempts[0].trajectory();
    EXPECT_EQ(kept.front(), full.front());
    EXPECT_EQ(kept.back(), full.back());
    EXPECT_EQ(kept[1], full[10]);
    EXPECT_LE(kept.size(), full.size() / 10 + 2);
}

TEST(SessionFile, TamperedOutcomeIsSummaryMismatch) {
    auto lines = lines_of(session_to_string(agent_session(6, 50)));
    for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
        auto j = json::parse(lines[i]);
        if (j["outcome"] != "registered") continue;
        j["outcome"] = "blocked";
        j["channel"] = nullptr;
        j["excluded"] = true;
        lines[i] = j.dump();
        break;
    }
    EXPECT_EQ(read_error(join(lines)), Errc::summary_mismatch);
}

TEST(SessionFile, TamperedChannelIsChecksumFailure) {
    auto lines = lines_of(session_to_string(agent_session(7, 50)));
    auto j = json::parse(lines[1]);
    ASSERT_EQ(j["outcome"], "registered");
    j["channel"] = j["channel"].get<int>() == 1 ? 2 : 1;
    lines[1] = j.dump();
    EXPECT_EQ(read_error(join(lines)), Errc::checksum_failure);
}

TEST(SessionFile, WrongVersionIsVersionMismatch) {
    auto lines = lines_of(session_to_string(agent_session(8, 5)));
    auto h = json::parse(lines[0]);
    h["version"] = 2;
    lines[0] = h.dump();
    EXPECT_EQ(read_error(join(lines)), Errc::version_mismatch);
}

TEST(SessionFile, GarbageIsMalformed) {
    EXPECT_EQ(read_error(""), Errc::malformed_record);
    EXPECT_EQ(read_error("not json\n"), Errc::malformed_record);
    EXPECT_EQ(read_error("{\"type\":\"header\"}\n"), Errc::malformed_record);
    auto lines = lines_of(session_to_string(agent_session(9, 5)));
    lines.insert(lines.begin() + 2, "{\"type\":\"mystery\"}");
    EXPECT_EQ(read_error(join(lines)), Errc::malformed_record);
}

TEST(SessionFile, ContradictoryExcludedFlagIsMalformed) {
    auto lines = lines_of(session_to_string(agent_session(10, 20)));
    lines.pop_back(); // drop summary so only the record check can fire
    bool changed = false;
    for (std::size_t i = 1; i < lines.size() && !changed; ++i) {
        auto j = json::parse(lines[i]);
        if (j["excluded"].get<bool>()) continue;
        j["excluded"] = true;
        lines[i] = j.dump();
        changed = true;
    }
    ASSERT_TRUE(changed);
    EXPECT_EQ(read_error(join(lines)), Errc::malformed_record);
}

TEST(SessionFile, ReplayMismatchDetected) {
    auto lines = lines_of(session_to_string(agent_session(11, 20)));
    // Change the seed: the file still parses but the flights land elsewhere.
    auto h = json::parse(lines[0]);
    h["world"]["rng_seed"] = 999;
    h["world"]["mushroom_count"] = 400;
    lines[0] = h.dump();
    try {
        replay_string(join(lines));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::replay_mismatch);
    }
}

TEST(SessionFile, CrashRecoveryWithoutSummary) {
    const auto s = agent_session(12, 40);
    auto lines = lines_of(session_to_string(s));
    lines.pop_back();
    lines.resize(1 + 25);
    std::istringstream in(join(lines));
    const auto f = read_session_file(in);
    EXPECT_TRUE(f.recovered);
    EXPECT_EQ(f.session.attempts.size(), 25u);
    EXPECT_EQ(f.summary.total, 25u);
    const auto r = replay(f);
    EXPECT_EQ(r.attempts, std::vector<Attempt>(s.attempts.begin(), s.attempts.begin() + 25));
}

TEST(SessionFile, CrashRecoveryWithTornLastLine) {
    const auto s = agent_session(13, 10);
    auto lines = lines_of(session_to_string(s));
    lines.pop_back();
    lines.back() = lines.back().substr(0, lines.back().size() / 2);
    std::istringstream in(join(lines));
    const auto f = read_session_file(in);
    EXPECT_TRUE(f.recovered);
    EXPECT_EQ(f.session.attempts.size(), 9u);
}

TEST(SessionFile, WriterAppendsAndFlushesIncrementally) {
    const auto s = agent_session(14, 3);
    std::ostringstream os;
    SessionWriter w(os, s);
    EXPECT_EQ(lines_of(os.str()).size(), 1u);
    w.append(s.attempts[0]);
    EXPECT_EQ(lines_of(os.str()).size(), 2u);
    w.close();
    w.close();
    EXPECT_EQ(lines_of(os.str()).size(), 3u);
    EXPECT_THROW(w.append(s.attempts[1]), Error);
}

TEST(SessionFile, DisconnectedAttemptRoundTrips) {
    WorldConfig w;
    w.rng_seed = 15;
    Engine e(w);
    Session s;
    s.id = "d";
    s.world = w;
    s.attempts.push_back(e.run_attempt({{0, Steering::Right}, {7, Steering::None}}));
    e.begin_attempt();
    e.steer(Steering::Left);
    for (int i = 0; i < 12; ++i) e.step();
    e.steer(Steering::Right);
    s.attempts.push_back(e.abort_disconnected());
    const auto r = replay_string(session_to_string(s));
    EXPECT_EQ(r.attempts, s.attempts);
    EXPECT_TRUE(r.attempts[1].excluded());
}

TEST(SessionFile, ReplayFromDisk) {
    const auto s = agent_session(16, 30);
    const auto path = std::filesystem::temp_directory_path() / "slitlab_session_file_test.jsonl";
    {
        std::ofstream out(path);
        write_session(out, s);
    }
    EXPECT_EQ(replay_file(path).attempts, s.attempts);
    std::filesystem::remove(path);
    EXPECT_THROW(replay_file(path), Error);
}
