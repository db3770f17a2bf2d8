#pragma once

#include <boost/crc.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "slitlab/engine.hpp"
#include "slitlab/error.hpp"
#include "slitlab/json_io.hpp"
#include "slitlab/session.hpp"

// Session record files: one JSON object per line.
//
//   {"type":"header", "format":"slitlab-session", "version":1, ...}
//   {"type":"attempt", "seq":0, "outcome":"registered", "channel":32, ...}
//   ...
//   {"type":"summary", "registered":..., "checksum":"1a2b3c4d"}
//
// Lines are appended and flushed as attempts finish, so a file cut short
// still yields every complete attempt record. The checksum is CRC-32 over
// the attempt lines, each followed by '\n'.
namespace slitlab {

inline constexpr int session_format_version = 1;
inline constexpr const char* session_format_name = "slitlab-session";

struct SessionSummary {
    std::size_t registered = 0;
    std::size_t excluded = 0;
    std::size_t blocked = 0;
    std::size_t missed = 0;
    std::size_t total = 0;
    bool operator==(const SessionSummary&) const = default;
};

inline void count_outcome(SessionSummary& s, Phase outcome, bool excluded) {
    ++s.total;
    if (excluded) ++s.excluded;
    switch (outcome) {
    case Phase::Registered: ++s.registered; break;
    case Phase::Blocked: ++s.blocked; break;
    case Phase::Missed: ++s.missed; break;
    case Phase::InFlight: break;
    }
}

inline SessionSummary summarize(std::span<const Attempt> attempts) {
    SessionSummary s;
    for (const auto& a : attempts) count_outcome(s, a.outcome(), a.excluded());
    return s;
}

struct RecordOptions {
    std::size_t trajectory_stride = 0; // 0 leaves trajectories out
};

inline json header_record(const Session& s, const RecordOptions& opt = {}) {
    return json{{"type", "header"},
                {"format", session_format_name},
                {"version", session_format_version},
                {"session_id", s.id},
                {"created_at", s.created_at},
                {"subject", s.subject},
                {"screen", std::string(to_string(s.world.screen))},
                {"world", s.world},
                {"trajectory_stride", opt.trajectory_stride}};
}

inline json attempt_record(const Attempt& a, const RecordOptions& opt = {}) {
    json j{{"type", "attempt"},
           {"seq", a.seq()},
           {"outcome", std::string(to_string(a.outcome()))},
           {"channel", a.channel() ? json(*a.channel()) : json(nullptr)},
           {"touched_mushroom", a.touched_mushroom()},
           {"excluded", a.excluded()},
           {"disconnected", a.disconnected()},
           {"ticks", a.ticks()},
           {"inputs", to_json(a.input_log())},
           {"revealed", points_to_json(a.revealed())}};
    if (opt.trajectory_stride > 0) {
        std::vector<Point> sampled;
        const auto& t = a.trajectory();
        for (std::size_t i = 0; i < t.size(); i += opt.trajectory_stride) sampled.push_back(t[i]);
        if (!t.empty() && (t.size() - 1) % opt.trajectory_stride != 0) sampled.push_back(t.back());
        j["trajectory"] = points_to_json(sampled);
    }
    return j;
}

inline std::string crc_hex(std::uint32_t crc) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", crc);
    return buf;
}

/// Append-only writer. The header goes out on construction; every append
/// and close flushes.
class SessionWriter {
public:
    SessionWriter(std::ostream& out, const Session& session, RecordOptions opt = {}) : out_(&out), opt_(opt) {
        *out_ << header_record(session, opt_).dump() << '\n';
        out_->flush();
    }

    void append(const Attempt& a) {
        if (closed_) throw Error(Errc::contract_violation, "session file already closed");
        const std::string line = attempt_record(a, opt_).dump();
        crc_.process_bytes(line.data(), line.size());
        crc_.process_byte('\n');
        count_outcome(summary_, a.outcome(), a.excluded());
        *out_ << line << '\n';
        out_->flush();
    }

    void close() {
        if (closed_) return;
        json j{{"type", "summary"},
               {"registered", summary_.registered},
               {"excluded", summary_.excluded},
               {"blocked", summary_.blocked},
               {"missed", summary_.missed},
               {"total", summary_.total},
               {"checksum", crc_hex(crc_.checksum())}};
        *out_ << j.dump() << '\n';
        out_->flush();
        closed_ = true;
    }

    [[nodiscard]] const SessionSummary& summary() const noexcept { return summary_; }

private:
    std::ostream* out_;
    RecordOptions opt_;
    boost::crc_32_type crc_;
    SessionSummary summary_;
    bool closed_ = false;
};

inline void write_session(std::ostream& out, const Session& s, const RecordOptions& opt = {}) {
    SessionWriter w(out, s, opt);
    for (const auto& a : s.attempts) w.append(a);
    w.close();
}

inline std::string session_to_string(const Session& s, const RecordOptions& opt = {}) {
    std::ostringstream os;
    write_session(os, s, opt);
    return os.str();
}

/// Parsed file contents. `recovered` is set when the summary was missing
/// and the counts were recomputed.
struct SessionFile {
    Session session;
    SessionSummary summary;
    bool recovered = false;
};

namespace detail {

inline json parse_record(const std::string& line) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw Error(Errc::malformed_record, e.what());
    }
}

template <typename F>
auto record_field(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw Error(Errc::malformed_record, e.what());
    }
}

} // namespace detail

/// Parses and checks a record file: version, summary counts, checksum.
/// Attempts carry the recorded fields; trajectories only if stored.
inline SessionFile read_session_file(std::istream& in) {
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) lines.push_back(line);
    if (lines.empty()) throw Error(Errc::malformed_record, "empty session file");

    const json header = detail::parse_record(lines.front());
    SessionFile file;
    detail::record_field([&] {
        if (header.at("type") != "header" || header.at("format") != session_format_name)
            throw Error(Errc::malformed_record, "first record is not a session header");
        const int version = header.at("version").get<int>();
        if (version != session_format_version)
            throw Error(Errc::version_mismatch, "file version " + std::to_string(version) + ", expected " +
                                                    std::to_string(session_format_version));
        file.session.id = header.at("session_id").get<std::string>();
        file.session.created_at = header.value("created_at", "");
        file.session.subject = header.at("subject").get<SubjectMeta>();
        file.session.world = header.at("world").get<WorldConfig>();
        return 0;
    });

    std::vector<json> records;
    std::optional<json> summary;
    boost::crc_32_type crc;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        json rec;
        try {
            rec = json::parse(lines[i]);
        } catch (const json::exception& e) {
            // A torn final line is what a crash mid-write leaves behind.
            if (i + 1 == lines.size()) break;
            throw Error(Errc::malformed_record, e.what());
        }
        const auto type = rec.value("type", "");
        if (type == "attempt") {
            if (summary) throw Error(Errc::malformed_record, "attempt record after summary");
            crc.process_bytes(lines[i].data(), lines[i].size());
            crc.process_byte('\n');
            records.push_back(std::move(rec));
        } else if (type == "summary") {
            summary = std::move(rec);
        } else {
            throw Error(Errc::malformed_record, "unknown record type '" + type + "'");
        }
    }

    SessionSummary counted;
    for (const auto& r : records)
        detail::record_field([&] {
            count_outcome(counted, parse_phase(r.at("outcome").get<std::string>()), r.at("excluded").get<bool>());
            return 0;
        });

    if (summary) {
        detail::record_field([&] {
            const SessionSummary stated{summary->at("registered").get<std::size_t>(),
                                        summary->at("excluded").get<std::size_t>(),
                                        summary->at("blocked").get<std::size_t>(),
                                        summary->at("missed").get<std::size_t>(),
                                        summary->at("total").get<std::size_t>()};
            if (!(stated == counted)) throw Error(Errc::summary_mismatch, "summary counts differ from attempt records");
            if (summary->at("checksum").get<std::string>() != crc_hex(crc.checksum()))
                throw Error(Errc::checksum_failure, "attempt records do not match the stored checksum");
            return 0;
        });
    } else {
        file.recovered = true;
    }
    file.summary = counted;

    const int n_channels = file.session.world.geometry.n_channels;
    for (const auto& r : records) {
        Attempt::Data d;
        detail::record_field([&] {
            d.seq = r.at("seq").get<std::size_t>();
            d.screen = file.session.world.screen;
            d.outcome = parse_phase(r.at("outcome").get<std::string>());
            if (!r.at("channel").is_null()) d.channel = r.at("channel").get<int>();
            d.touched_mushroom = r.at("touched_mushroom").get<bool>();
            d.disconnected = r.value("disconnected", false);
            d.ticks = r.at("ticks").get<std::uint32_t>();
            d.input_log = input_log_from_json(r.at("inputs"));
            for (const auto& p : r.value("revealed", json::array())) d.revealed.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
            for (const auto& p : r.value("trajectory", json::array())) d.trajectory.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
            return 0;
        });
        Attempt a(std::move(d), n_channels);
        if (a.excluded() != r.at("excluded").get<bool>())
            throw Error(Errc::malformed_record, "excluded flag contradicts outcome of attempt " + std::to_string(a.seq()));
        file.session.attempts.push_back(std::move(a));
    }
    return file;
}

/// Rebuilds a session by re-flying every recorded input log from the header
/// seed. Throws Errc::replay_mismatch if any outcome differs from the record.
inline Session replay(const SessionFile& file) {
    Engine engine(set_warmup(file.session.world, false));
    Session out;
    out.id = file.session.id;
    out.subject = file.session.subject;
    out.world = engine.config();
    out.created_at = file.session.created_at;
    for (const auto& rec : file.session.attempts) {
        Attempt a = rec.disconnected() ? engine.run_disconnected(rec.input_log(), rec.ticks())
                                       : engine.run_attempt(rec.input_log());
        if (a.seq() != rec.seq() || a.outcome() != rec.outcome() || a.channel() != rec.channel() ||
            a.touched_mushroom() != rec.touched_mushroom() || a.ticks() != rec.ticks() ||
            a.revealed() != rec.revealed())
            throw Error(Errc::replay_mismatch, "attempt " + std::to_string(rec.seq()) + " replays differently");
        out.attempts.push_back(std::move(a));
    }
    return out;
}

inline Session replay(std::istream& in) { return replay(read_session_file(in)); }

inline Session replay_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::malformed_record, "cannot open " + path.string());
    return replay(in);
}

inline Session replay_string(const std::string& text) {
    std::istringstream in(text);
    return replay(in);
}

} // namespace slitlab
