#include "mfcpn/cli.hpp"

#include "mfcpn/config.hpp"
#include "mfcpn/errors.hpp"
#include "mfcpn/lq.hpp"
#include "mfcpn/parallel.hpp"
#include "mfcpn/verify.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace mfcpn {

namespace {

constexpr const char* kVersion = MFCPN_VERSION;

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 0;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "Experiment config (JSON)")->required();
    sub->add_option("--out", c.out, "Output file (default: output.dir/<command>.<ext>)");
    sub->add_option("--seed", c.seed, "Override sim.seed");
    sub->add_option("--threads", c.threads, "Worker threads (0: hardware concurrency)");
}

std::string out_path(const Common& c, const ExperimentConfig& cfg, const std::string& stem, const std::string& ext) {
    if (!c.out.empty()) return c.out;
    return (std::filesystem::path(cfg.output.dir) / (stem + "." + ext)).string();
}

void write_file(const std::string& path, const std::string& body) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigurationError("cannot write " + path);
    f << body;
}

std::string csv_header(const ExperimentConfig& cfg, const std::string& command) {
    return std::string("# mfcpn ") + kVersion + " config_hash=" + cfg.hash() + " command=" + command + "\n";
}

nlohmann::json stamp(const ExperimentConfig& cfg, const std::string& command) {
    return {{"tool", std::string("mfcpn ") + kVersion}, {"config_hash", cfg.hash()}, {"command", command}};
}

int cmd_riccati(const Common& c, const ExperimentConfig& cfg, std::ostream& out) {
    const auto sol = solve_riccati(cfg.model, cfg.sim.mode, cfg.sim.riccati_steps);
    std::string path;
    if (cfg.output.format == "json" && c.out.empty()) {
        path = out_path(c, cfg, "riccati", "json");
    } else {
        path = out_path(c, cfg, "riccati", cfg.output.format);
    }
    if (cfg.output.format == "json") {
        auto j = stamp(cfg, "riccati");
        j["mode"] = to_string(sol.mode);
        j["t"] = sol.times;
        j["beta"] = sol.beta;
        j["eta"] = sol.eta;
        write_file(path, j.dump(2) + "\n");
    } else {
        std::string body = csv_header(cfg, "riccati") + "t,beta,eta\n";
        for (std::size_t k = 0; k < sol.times.size(); ++k) {
            body += fmt17(sol.times[k]) + "," + fmt17(sol.beta[k]) + "," + fmt17(sol.eta[k]) + "\n";
        }
        write_file(path, body);
    }
    out << "riccati: beta_0=" << fmt17(sol.beta.front()) << " eta_0=" << fmt17(sol.eta.front()) << " -> " << path
        << "\n";
    return 0;
}

int cmd_simulate(const Common& c, const ExperimentConfig& cfg, std::ostream& out) {
    const auto mc = cfg.mc();
    const auto sol = solve_riccati(cfg.model, mc.mode, mc.riccati_steps);
    const auto coeffs = make_lq_coefficients(cfg.model);
    const auto rule = lq_optimal_rule(sol);
    std::vector<ParticleCloud> clouds(mc.scenarios);
    parallel_for(mc.scenarios, [&](std::size_t s) {
        SimulationSpec spec;
        spec.n_particles = mc.particles;
        spec.n_steps = mc.n_steps(cfg.model.T);
        spec.mode = mc.mode;
        spec.seed = mc.seed;
        spec.scenario = s;
        spec.init = mc.init;
        spec.record = false;
        clouds[s] = simulate_strict(coeffs, rule, cfg.model.T, spec);
    });
    const std::string path = out_path(c, cfg, "simulate", cfg.output.format);
    if (cfg.output.format == "json") {
        auto j = stamp(cfg, "simulate");
        j["scenarios"] = nlohmann::json::array();
        for (const auto& cl : clouds) {
            nlohmann::json events = nlohmann::json::array();
            for (const auto& jr : cl.jumps) {
                events.push_back({{"node", jr.node}, {"mark", jr.mark}, {"pre_mean", jr.pre_mean[0]},
                                  {"post_mean", jr.post_mean[0]}});
            }
            j["scenarios"].push_back({{"scenario", cl.scenario},
                                      {"t", cl.grid.times},
                                      {"mean", cl.mean_path},
                                      {"events", events},
                                      {"cost", cl.conditional_cost()}});
        }
        write_file(path, j.dump(2) + "\n");
    } else {
        std::string body = csv_header(cfg, "simulate") + "scenario,node,t,event,mark,mean\n";
        for (const auto& cl : clouds) {
            for (std::size_t k = 0; k < cl.grid.nodes(); ++k) {
                const bool ev = cl.grid.is_event(k);
                const long long mark = ev ? static_cast<long long>(cl.grid.events[cl.grid.event[k]].mark) : -1;
                body += std::to_string(cl.scenario) + "," + std::to_string(k) + "," + fmt17(cl.grid.times[k]) + "," +
                        (ev ? "1" : "0") + "," + std::to_string(mark) + "," + fmt17(cl.mean_path[k]) + "\n";
            }
        }
        write_file(path, body);
    }
    out << "simulate: " << mc.scenarios << " scenarios x " << mc.particles << " particles -> " << path << "\n";
    return 0;
}

std::vector<Perturbation> default_perturbations() {
    using K = Perturbation::Kind;
    return {{K::gain, 0.5}, {K::gain, 1.5}, {K::offset, 0.5}, {K::offset, -0.5}};
}

int cmd_cost(const Common& c, const ExperimentConfig& cfg, std::ostream& out) {
    const auto mc = cfg.mc();
    const auto sol = solve_riccati(cfg.model, mc.mode, mc.riccati_steps);
    const auto coeffs = make_lq_coefficients(cfg.model);
    const std::size_t n = mc.n_steps(cfg.model.T);
    const auto base = scenario_costs(coeffs, lq_optimal_rule(sol), cfg.model.T, mc, n, n);
    const auto est = summarize_costs(base);
    const double m0 = mc.init.mean[0], s0 = mc.init.stddev[0];
    const double J0 = 0.5 * (sol.beta.front() * (m0 * m0 + s0 * s0) + sol.eta.front() * m0 * m0);
    auto j = stamp(cfg, "cost");
    j["cost"] = est.mean;
    j["std_error"] = est.std_error;
    j["value_closed_form"] = J0;
    j["per_scenario"] = base;
    j["perturbations"] = nlohmann::json::array();
    for (const auto& p : cfg.verify.perturbations) {
        const auto costs = scenario_costs(coeffs, perturbed_rule(sol, p), cfg.model.T, mc, n, n);
        std::vector<double> d(costs.size());
        for (std::size_t s = 0; s < d.size(); ++s) d[s] = costs[s] - base[s];
        const auto g = summarize_costs(d);
        j["perturbations"].push_back({{"perturbation", p.label()},
                                      {"cost", summarize_costs(costs).mean},
                                      {"gap", g.mean},
                                      {"paired_std_error", g.std_error}});
    }
    const std::string path = out_path(c, cfg, "cost", "json");
    write_file(path, j.dump(2) + "\n");
    out << "cost: " << fmt17(est.mean) << " +/- " << fmt17(est.std_error) << " (closed form " << fmt17(J0) << ") -> "
        << path << "\n";
    return 0;
}

int report(const CheckReport& r, const Common& c, const ExperimentConfig& cfg, const std::string& command,
           std::ostream& out) {
    CheckReport rr = r;
    rr.config_hash = cfg.hash();
    auto j = stamp(cfg, command);
    j["report"] = rr.to_json();
    const std::string path = out_path(c, cfg, "report_" + rr.name, "json");
    write_file(path, j.dump(2) + "\n");
    const char* verdict = rr.passed ? "PASS" : (rr.inconclusive ? "INCONCLUSIVE" : "FAIL");
    out << rr.name << ": " << verdict << " max_residual=" << fmt17(rr.max_residual)
        << " tolerance=" << fmt17(rr.tolerance) << " -> " << path << "\n";
    if (rr.passed || rr.inconclusive) return 0;
    return 1;
}

int cmd_chattering(const Common& c, const ExperimentConfig& cfg, std::ostream& out) {
    const auto mc = cfg.mc();
    const auto coeffs = make_lq_coefficients(cfg.model);
    const auto res = chattering_study(coeffs, cfg.verify.chattering_rule, cfg.model.T, cfg.verify.slabs, mc,
                                      cfg.verify.chattering_symmetric);
    const std::string path = out_path(c, cfg, "chattering", cfg.output.format);
    if (cfg.output.format == "json") {
        auto j = stamp(cfg, "chattering");
        j["relaxed_cost"] = res.relaxed_cost;
        j["relaxed_std_error"] = res.relaxed_std_error;
        j["slabs"] = res.slabs;
        j["gap"] = res.gaps;
        j["paired_std_error"] = res.std_errors;
        write_file(path, j.dump(2) + "\n");
    } else {
        std::string body = csv_header(cfg, "chattering");
        body += "# relaxed_cost=" + fmt17(res.relaxed_cost) + " relaxed_std_error=" + fmt17(res.relaxed_std_error) + "\n";
        body += "slabs,gap,paired_std_error\n";
        for (std::size_t i = 0; i < res.slabs.size(); ++i) {
            body += std::to_string(res.slabs[i]) + "," + fmt17(res.gaps[i]) + "," + fmt17(res.std_errors[i]) + "\n";
        }
        write_file(path, body);
    }
    const double first = std::abs(res.gaps.front()), last = std::abs(res.gaps.back());
    const bool pass = last < first && last < 5.0 * res.std_errors.back();
    out << "chattering: " << (pass ? "PASS" : "FAIL") << " gap(" << res.slabs.front() << ")=" << fmt17(res.gaps.front())
        << " gap(" << res.slabs.back() << ")=" << fmt17(res.gaps.back()) << " -> " << path << "\n";
    return pass ? 0 : 1;
}

int cmd_verify(const std::string& check, const Common& c, const ExperimentConfig& cfg, std::ostream& out) {
    const auto mc = cfg.mc();
    const auto& v = cfg.verify;
    if (check == "smp") {
        SmpOptions opt;
        opt.u_min = v.u_min;
        opt.u_max = v.u_max;
        opt.u_points = v.u_points;
        opt.samples = v.samples;
        opt.tolerance = v.smp_tolerance;
        opt.seed = mc.seed;
        return report(check_smp_simulated(cfg.model, mc, opt), c, cfg, "verify smp", out);
    }
    if (check == "bsde") {
        BsdeOptions opt;
        opt.tolerance = v.tolerance;
        return report(check_bsde_simulated(cfg.model, mc, opt), c, cfg, "verify bsde", out);
    }
    if (check == "hjb") {
        const auto sol = solve_riccati(cfg.model, NoiseMode::common, mc.riccati_steps);
        const auto samples = random_hjb_samples(cfg.model.T, v.hjb_measures, v.max_atoms, mc.seed);
        auto r = check_hjb(sol, samples, v.hjb_tolerance);
        r.seed = mc.seed;
        return report(r, c, cfg, "verify hjb", out);
    }
    if (check == "fp") {
        return report(check_fp(cfg.model, mc, TestFunctionDictionary::builtin(1)), c, cfg, "verify fp", out);
    }
    if (check == "optimality") {
        const auto perts = v.perturbations.empty() ? default_perturbations() : v.perturbations;
        return report(check_optimality(cfg.model, perts, mc), c, cfg, "verify optimality", out);
    }
    if (check == "noise") return report(compare_noise_modes(cfg.model, mc), c, cfg, "verify noise", out);
    if (check == "chattering") {
        return report(check_chattering(make_lq_coefficients(cfg.model), v.chattering_rule, cfg.model.T, v.slabs, mc,
                                       v.chattering_symmetric),
                      c, cfg, "verify chattering", out);
    }
    throw ConfigurationError("unknown check: " + check);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Mean-field control with Poissonian common noise: LQ experiments and cross-checks", "mfcpn"};
    app.set_version_flag("--version", std::string("mfcpn ") + kVersion);
    app.require_subcommand(1);

    Common common;
    std::string check;
    auto* riccati = app.add_subcommand("riccati", "Solve the Riccati system and write t, beta, eta");
    auto* simulate = app.add_subcommand("simulate", "Simulate scenarios under the optimal feedback; write mean paths");
    auto* cost = app.add_subcommand("cost", "Monte Carlo cost of the optimal feedback and configured perturbations");
    auto* chat = app.add_subcommand("chattering", "Chattering study of the configured two-atom relaxed rule");
    auto* verify = app.add_subcommand("verify", "Run one cross-check and write a JSON report");
    auto* noise = app.add_subcommand("compare-noise", "Compare common and idiosyncratic noise (same as verify noise)");
    for (auto* sub : {riccati, simulate, cost, chat, verify, noise}) add_common(sub, common);
    verify->add_option("check", check, "smp | bsde | hjb | fp | optimality | noise | chattering")
        ->required()
        ->check(CLI::IsMember({"smp", "bsde", "hjb", "fp", "optimality", "noise", "chattering"}));

    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.emplace_back("mfcpn");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& s : storage) argv.push_back(s.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion& e) {
        out << "mfcpn " << kVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (common.threads > 0) set_default_threads(common.threads);
        const auto cfg = load_config(common.config, common.seed);
        if (riccati->parsed()) return cmd_riccati(common, cfg, out);
        if (simulate->parsed()) return cmd_simulate(common, cfg, out);
        if (cost->parsed()) return cmd_cost(common, cfg, out);
        if (chat->parsed()) return cmd_chattering(common, cfg, out);
        if (verify->parsed()) return cmd_verify(check, common, cfg, out);
        if (noise->parsed()) return cmd_verify("noise", common, cfg, out);
    } catch (const ConfigurationError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IllPosedError& e) {
        err << "ill-posed: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}

}  // namespace mfcpn
