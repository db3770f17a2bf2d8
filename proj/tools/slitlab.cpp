#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "slitlab/slitlab.hpp"
#include "slitlab/websocket_server.hpp"

using namespace slitlab;

namespace {

std::string read_text(const std::string& path) {
    if (path == "-") return {std::istreambuf_iterator<char>(std::cin), {}};
    std::ifstream in(path);
    if (!in) throw Error(Errc::invalid_parameter, "cannot open " + path);
    return {std::istreambuf_iterator<char>(in), {}};
}

/// Session files from paths; "-" reads stdin, which may hold several files back to back.
std::vector<SessionFile> load_sessions(const std::vector<std::string>& paths) {
    std::vector<SessionFile> out;
    for (const auto& path : paths) {
        std::istringstream all(read_text(path));
        std::string chunk;
        auto flush = [&] {
            if (chunk.empty()) return;
            std::istringstream in(chunk);
            out.push_back(read_session_file(in));
            chunk.clear();
        };
        for (std::string line; std::getline(all, line);) {
            if (line.find("\"type\":\"header\"") != std::string::npos) flush();
            chunk += line + '\n';
        }
        flush();
    }
    if (out.empty()) throw Error(Errc::insufficient_data, "no sessions in input");
    return out;
}

std::vector<Session> sessions_of(const std::vector<SessionFile>& files) {
    std::vector<Session> out;
    for (const auto& f : files) out.push_back(f.session);
    return out;
}

/// Output stream for -o; stdout when empty or "-".
class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty() && path != "-") {
            file_.open(path);
            if (!file_) throw Error(Errc::invalid_parameter, "cannot write " + path);
        }
    }
    std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

private:
    std::ofstream file_;
};

struct WorldFlags {
    std::optional<std::string> screen;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> mushrooms;
    std::optional<double> mushroom_radius, lateral_speed, vertical_speed;
    std::optional<double> t, w, lambda, d, D, s;

    void add(CLI::App* app) {
        app->add_option("--screen", screen, "two-slit | one-slit-left | one-slit-right | one-slit-center");
        app->add_option("--seed", seed, "World seed (mushroom field)");
        app->add_option("--mushrooms", mushrooms, "Number of hidden mushrooms");
        app->add_option("--mushroom-radius", mushroom_radius);
        app->add_option("--lateral-speed", lateral_speed, "Channels per tick while steering");
        app->add_option("--vertical-speed", vertical_speed, "Channels per tick upward");
        app->add_option("--t", t, "Screen thickness");
        app->add_option("--w", w, "Slit width");
        app->add_option("--lambda", lambda, "Wavelength");
        app->add_option("--d", d, "Slit separation");
        app->add_option("--D", D, "Screen to registration plane");
        app->add_option("--s", s, "Source to screen");
    }

    [[nodiscard]] WorldConfig apply(WorldConfig c) const {
        if (screen) c.screen = parse_screen(*screen);
        if (seed) c.rng_seed = *seed;
        if (mushrooms) c.mushroom_count = *mushrooms;
        if (mushroom_radius) c.mushroom_radius = *mushroom_radius;
        if (lateral_speed) c.lateral_speed = *lateral_speed;
        if (vertical_speed) c.vertical_speed = *vertical_speed;
        auto& g = c.geometry;
        if (t) g.thickness = *t;
        if (w) g.slit_width = *w;
        if (lambda) g.wavelength = *lambda;
        if (d) g.separation = *d;
        if (D) g.distance = *D;
        if (s) g.source_distance = *s;
        g = with_screen(g, c.screen);
        validate_world(c);
        return c;
    }
};

WorldConfig load_config(const std::string& path) {
    WorldConfig c;
    if (path.empty()) return c;
    try {
        const auto j = json::parse(read_text(path));
        c = j.contains("world") ? j["world"].get<WorldConfig>() : j.get<WorldConfig>();
    } catch (const json::exception& e) {
        throw Error(Errc::configuration, path + ": " + e.what());
    }
    return c;
}

std::vector<int> parse_channel_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(std::stoi(item));
    return out;
}

/// Per-session k-normalized mean, or the pooled histogram.
ChannelHistogram combined_histogram(const std::vector<Session>& sessions, bool pool, std::optional<double> k) {
    if (pool || sessions.size() == 1) {
        auto h = pooled_histogram(sessions);
        return k ? normalize(h, *k) : h;
    }
    const double kk = k.value_or(1000.0);
    ChannelHistogram mean;
    for (const auto& s : sessions) {
        const auto h = normalize(build_histogram(s), kk);
        if (mean.bins.empty()) {
            mean = h;
            continue;
        }
        for (std::size_t c = 0; c < h.bins.size(); ++c) mean.bins[c] += h.bins[c];
        mean.n_attempts_registered += h.n_attempts_registered;
    }
    for (auto& b : mean.bins) b /= static_cast<double>(sessions.size());
    return mean;
}

/// Channel histogram from a session file (normalized to k) or a `channel,value` CSV.
ChannelHistogram load_histogram(const std::string& path, double k) {
    const auto text = read_text(path);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        std::istringstream in(text);
        return normalize(build_histogram(read_session_file(in).session), k);
    }
    ChannelHistogram h;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (line.rfind("channel,", 0) != 0) throw Error(Errc::malformed_record, path + ": expected a channel,value header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw Error(Errc::malformed_record, path + ": bad row '" + line + "'");
        const int c = std::stoi(line.substr(0, comma));
        if (c != h.n_channels() + 1) throw Error(Errc::malformed_record, path + ": channels must run 1, 2, ...");
        h.bins.push_back(std::stod(line.substr(comma + 1)));
    }
    h.n_attempts_registered = 1;
    h.normalization = {Normalization::Mode::RatePerK, k};
    return h;
}

void print_summary(std::ostream& os, const SessionSummary& s) {
    os << "registered: " << s.registered << '\n'
       << "excluded: " << s.excluded << '\n'
       << "blocked: " << s.blocked << '\n'
       << "missed: " << s.missed << '\n'
       << "total: " << s.total << '\n';
}

WebSocketServer* active_server = nullptr;

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Steerable two-slit experiment: simulation, serving and analysis"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON file with world defaults")->check(CLI::ExistingFile);

    // serve
    auto* serve = app.add_subcommand("serve", "Host live sessions over WebSocket");
    WorldFlags serve_world;
    serve_world.add(serve);
    ServerOptions serve_opt;
    std::string data_dir;
    serve->add_option("--address", serve_opt.address, "Listen address")->capture_default_str();
    serve->add_option("--port", serve_opt.port, "Listen port")->capture_default_str();
    serve->add_option("--tick-rate", serve_opt.tick_rate, "Ticks per second")->capture_default_str();
    serve->add_option("--attempts", serve_opt.host.attempts, "Live attempts per session")->capture_default_str();
    serve->add_option("--data-dir", data_dir, "Session file directory (env SLITLAB_DATA_DIR)")->envname("SLITLAB_DATA_DIR");
    serve->add_flag("--live-histogram", serve_opt.host.live_histogram, "Send the histogram after every attempt");
    serve->add_option("--trajectory-stride", serve_opt.host.record.trajectory_stride, "Store every n-th trajectory point");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Run a synthetic subject and write its session file");
    WorldFlags sim_world;
    sim_world.add(simulate);
    std::string agent = "model-sampler", sim_out, replay_from;
    std::size_t sim_attempts = 100, stride = 0;
    std::optional<std::uint64_t> agent_seed;
    std::optional<double> sim_hd;
    simulate->add_option("--agent", agent, "Agent kind")
        ->check(CLI::IsMember({"model-sampler", "uniform", "ballistic", "replay"}))
        ->capture_default_str();
    simulate->add_option("--attempts", sim_attempts, "Number of attempts")->capture_default_str();
    simulate->add_option("--agent-seed", agent_seed, "Target sampling seed (default derived from --seed)");
    simulate->add_option("--hd", sim_hd, "Hidden source separation for one-slit screens (default 2 lambda)");
    simulate->add_option("--replay-from", replay_from, "Session file whose input logs the replay agent re-flies");
    simulate->add_option("--trajectory-stride", stride, "Store every n-th trajectory point");
    simulate->add_option("-o,--output", sim_out, "Output file (default stdout)");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Summarize session files");
    std::vector<std::string> analyze_files;
    bool analyze_pool = false;
    std::optional<double> analyze_k;
    analyze->add_option("files", analyze_files, "Session files, - for stdin")->required();
    analyze->add_flag("--pool", analyze_pool, "Pool attempts instead of averaging per-session rates");
    analyze->add_option("--normalize", analyze_k, "Rate per k registered attempts");

    // fit
    auto* fit = app.add_subcommand("fit", "Fit the interference model to session files");
    std::vector<std::string> fit_files;
    std::string free_params = "lambda", mask_list, fit_screen;
    bool mask_artifacts = false, fit_pool = false;
    FitBounds bounds;
    std::optional<double> fit_D, fit_d;
    double hd_ratio = 2.0;
    fit->add_option("files", fit_files, "Session files, - for stdin")->required();
    fit->add_option("--free", free_params, "lambda or lambda,D")->check(CLI::IsMember({"lambda", "lambda,D"}))->capture_default_str();
    fit->add_flag("--mask-artifacts", mask_artifacts, "Leave out flagged slit-aligned channels");
    fit->add_option("--mask", mask_list, "Comma-separated channels to leave out");
    fit->add_flag("--pool", fit_pool, "Pool attempts instead of averaging per-session rates");
    fit->add_option("--screen", fit_screen, "Model family (default: the sessions' screen)");
    fit->add_option("--D", fit_D, "Fixed D (default: from the session header)");
    fit->add_option("--d", fit_d, "Slit separation (default: from the session header)");
    fit->add_option("--hd-ratio", hd_ratio, "One-slit fits: hd = ratio * lambda")->capture_default_str();
    fit->add_option("--lambda-min", bounds.lambda_min)->capture_default_str();
    fit->add_option("--lambda-max", bounds.lambda_max)->capture_default_str();
    fit->add_option("--lambda-step", bounds.lambda_step)->capture_default_str();
    fit->add_option("--D-min", bounds.distance_min)->capture_default_str();
    fit->add_option("--D-max", bounds.distance_max)->capture_default_str();
    fit->add_option("--D-step", bounds.distance_step)->capture_default_str();

    // compose
    auto* compose = app.add_subcommand("compose", "Combine two one-slit results into a two-slit prediction");
    std::vector<std::string> compose_files;
    std::string mode = "coherent", compose_out;
    int shift = 7;
    double amplitude_factor = 0.5, compose_k = 1000.0;
    bool approx = false;
    double offset_c = 10.0;
    std::optional<double> compose_hd;
    Geometry compose_geo;
    compose->add_option("inputs", compose_files, "Left and right: session files or channel,value CSV")->expected(0, 2);
    compose->add_option("--mode", mode)->check(CLI::IsMember({"incoherent", "coherent"}))->capture_default_str();
    compose->add_option("--shift", shift)->capture_default_str();
    compose->add_option("--amplitude-factor", amplitude_factor)->capture_default_str();
    compose->add_option("--normalize", compose_k, "Rate per k for session inputs")->capture_default_str();
    compose->add_option("--lambda", compose_geo.wavelength)->capture_default_str();
    compose->add_option("--d", compose_geo.separation)->capture_default_str();
    compose->add_option("--D", compose_geo.distance)->capture_default_str();
    compose->add_flag("--approx", approx, "Use the one-slit model plus C instead of data");
    compose->add_option("--C", offset_c, "Offset added to the one-slit model with --approx")->capture_default_str();
    compose->add_option("--hd", compose_hd, "Hidden source separation with --approx (default 2 lambda)");
    compose->add_option("-o,--output", compose_out);

    // model
    auto* model = app.add_subcommand("model", "Print a model curve as channel,x,value CSV");
    int eq = 1;
    Geometry model_geo;
    std::optional<double> model_hd;
    double model_c = 0.0, model_scale = 1.0;
    std::string model_screen = "one-slit-center", model_out;
    model->add_option("--eq", eq, "1: two slits, 2: one slit")->check(CLI::IsMember({1, 2}))->capture_default_str();
    model->add_option("--lambda", model_geo.wavelength)->capture_default_str();
    model->add_option("--d", model_geo.separation)->capture_default_str();
    model->add_option("--D", model_geo.distance)->capture_default_str();
    model->add_option("--hd", model_hd, "Hidden source separation (default 2 lambda)");
    model->add_option("--C", model_c, "Baseline offset")->capture_default_str();
    model->add_option("--scale", model_scale, "Amplitude scale")->capture_default_str();
    model->add_option("--screen", model_screen, "Slit for --eq 2")
        ->check(CLI::IsMember({"one-slit-left", "one-slit-right", "one-slit-center"}))
        ->capture_default_str();
    model->add_option("-o,--output", model_out);

    // export
    auto* exp = app.add_subcommand("export", "Write histogram or ensemble statistics CSV");
    std::vector<std::string> export_files;
    std::string kind = "histogram", export_out;
    bool export_pool = false;
    std::optional<double> export_k;
    exp->add_option("files", export_files, "Session files, - for stdin")->required();
    exp->add_option("--kind", kind, "histogram (channel,value) or stats (channel,mean,sigma)")
        ->check(CLI::IsMember({"histogram", "stats"}))
        ->capture_default_str();
    exp->add_flag("--pool", export_pool);
    exp->add_option("--normalize", export_k, "Rate per k registered attempts");
    exp->add_option("-o,--output", export_out);

    // replay
    auto* rep = app.add_subcommand("replay", "Re-fly a session file and check every outcome");
    std::string replay_file_path;
    rep->add_option("file", replay_file_path, "Session file, - for stdin")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const WorldConfig base = load_config(config_path);

        if (*serve) {
            serve_opt.host.world = serve_world.apply(base);
            serve_opt.seed = serve_world.seed;
            serve_opt.data_dir = data_dir.empty() ? "data" : data_dir;
            WebSocketServer server(serve_opt);
            active_server = &server;
            std::signal(SIGINT, [](int) {
                if (active_server) active_server->stop();
            });
            std::signal(SIGTERM, [](int) {
                if (active_server) active_server->stop();
            });
            std::clog << "listening on ws://" << serve_opt.address << ':' << server.port() << ", sessions in "
                      << serve_opt.data_dir.string() << '\n';
            server.run();
            active_server = nullptr;
            return 0;
        }

        if (*simulate) {
            const auto world = sim_world.apply(base);
            AgentSpec spec;
            spec.attempts = sim_attempts;
            spec.rng_seed = agent_seed.value_or(derive_seed(world.rng_seed, 2));
            if (agent == "model-sampler") {
                auto p = params_for_screen(world.geometry, world.screen);
                if (sim_hd) p.hidden_separation = *sim_hd;
                spec.kind = ModelSampler{p};
            } else if (agent == "uniform") {
                spec.kind = UniformTargets{};
            } else if (agent == "ballistic") {
                spec.kind = Ballistic{};
            } else {
                if (replay_from.empty()) throw Error(Errc::configuration, "--agent replay needs --replay-from");
                Replay r;
                for (const auto& f : load_sessions({replay_from}))
                    for (const auto& a : f.session.attempts) r.logs.push_back(a.input_log());
                if (simulate->count("--attempts") == 0) spec.attempts = r.logs.size();
                if (r.logs.size() < spec.attempts) throw Error(Errc::configuration, "not enough recorded attempts to replay");
                r.logs.resize(spec.attempts);
                spec.kind = std::move(r);
            }
            const auto session = run_agent(spec, world);
            Output out(sim_out);
            write_session(out.stream(), session, {stride});
            return 0;
        }

        if (*analyze) {
            const auto files = load_sessions(analyze_files);
            const auto sessions = sessions_of(files);
            auto& os = std::cout;
            SessionSummary total;
            for (const auto& f : files) {
                os << "session: " << f.session.id << " (" << to_string(f.session.screen()) << ")"
                   << (f.recovered ? " recovered" : "") << '\n';
                const auto& s = f.summary;
                os << "  registered " << s.registered << ", excluded " << s.excluded << ", blocked " << s.blocked
                   << ", missed " << s.missed << ", total " << s.total << '\n';
                total.registered += s.registered;
                total.excluded += s.excluded;
                total.blocked += s.blocked;
                total.missed += s.missed;
                total.total += s.total;
            }
            os << "sessions: " << files.size() << '\n';
            print_summary(os, total);
            const auto h = combined_histogram(sessions, analyze_pool, analyze_k);
            os << "histogram: " << (analyze_pool || sessions.size() == 1 ? "pooled" : "per-session mean") << '\n';
            if (auto c = contrast(h)) os << "contrast: " << format_number(*c) << '\n';
            else os << "contrast: undefined\n";
            os << "artifact_channels:";
            for (int c : flag_artifact_channels(h, sessions.front().screen(), sessions.front().world.geometry)) os << ' ' << c;
            os << '\n';
            os << "minima_count: " << count_minima(h.bins) << '\n';
            if (sessions.size() >= 2) os << "mean_sigma: " << format_number(ensemble_stats(sessions, analyze_k.value_or(1000.0)).mean_sigma) << '\n';
            return 0;
        }

        if (*fit) {
            const auto files = load_sessions(fit_files);
            const auto sessions = sessions_of(files);
            const auto screen = fit_screen.empty() ? sessions.front().screen() : parse_screen(fit_screen);
            FitOptions opt;
            opt.free = free_params == "lambda" ? FreeParams::Lambda : FreeParams::LambdaAndDistance;
            opt.bounds = bounds;
            opt.geometry = sessions.front().world.geometry;
            if (fit_D) opt.geometry.distance = *fit_D;
            if (fit_d) opt.geometry.separation = *fit_d;
            opt.mask = parse_channel_list(mask_list);
            opt.mask_artifacts = mask_artifacts;
            opt.hd_ratio = hd_ratio;
            const auto h = combined_histogram(sessions, fit_pool, std::nullopt);
            const auto f = fit_interference(h, screen, opt);
            std::cout << format_fit_report(f);
            if (auto wl = classify_wave_like(h, fitted_curve(f, opt.geometry), screen, {}, opt.geometry))
                std::cout << "wave_like_score: " << format_number(wl->score) << '\n'
                          << "wave_like: " << (wl->wave_like ? "yes" : "no") << '\n';
            return 0;
        }

        if (*compose) {
            ChannelHistogram out;
            if (approx) {
                if (!compose_files.empty()) throw Error(Errc::configuration, "--approx takes no input files");
                auto p = one_slit_dip_params(compose_geo, Screen::OneSlitCenter, compose_hd);
                const auto c = compose_from_approximation(p, offset_c, shift, amplitude_factor, compose_k);
                out = mode == "coherent" ? c.coherent : c.incoherent;
            } else {
                if (compose_files.size() != 2) throw CLI::ValidationError("compose", "needs <left> <right> or --approx");
                const auto left = load_histogram(compose_files[0], compose_k);
                const auto right = load_histogram(compose_files[1], compose_k);
                out = mode == "coherent" ? compose_coherent(left, right, compose_geo, shift, amplitude_factor)
                                         : compose_incoherent(left, right, shift);
            }
            Output o(compose_out);
            write_histogram_csv(o.stream(), out.bins);
            return 0;
        }

        if (*model) {
            ModelParams p = eq == 1 ? two_slit_params(model_geo) : one_slit_dip_params(model_geo, parse_screen(model_screen), model_hd);
            p.baseline_offset = model_c;
            p.amplitude_scale = model_scale;
            Output o(model_out);
            write_model_csv(o.stream(), p);
            return 0;
        }

        if (*exp) {
            const auto sessions = sessions_of(load_sessions(export_files));
            Output o(export_out);
            if (kind == "stats") write_stats_csv(o.stream(), ensemble_stats(sessions, export_k.value_or(1000.0)));
            else write_histogram_csv(o.stream(), combined_histogram(sessions, export_pool, export_k).bins);
            return 0;
        }

        if (*rep) {
            const auto text = read_text(replay_file_path);
            std::istringstream in(text);
            const auto file = read_session_file(in);
            const auto session = replay(file);
            std::cout << "session: " << session.id << '\n'
                      << "replayed: " << session.attempts.size() << " attempts, all outcomes match\n";
            if (file.recovered) std::cout << "recovered: yes (no summary record)\n";
            print_summary(std::cout, summarize(session.attempts));
            return 0;
        }
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
