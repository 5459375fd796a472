#include "mfcpn/config.hpp"

#include "mfcpn/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace mfcpn {

namespace {

std::size_t line_at_offset(const std::string& text, std::size_t offset) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < text.size() && i < offset; ++i) {
        if (text[i] == '\n') ++line;
    }
    return line;
}

// First line that mentions "key" inside section "section"; 0 when not found.
std::size_t line_of_key(const std::string& text, const std::string& section, const std::string& key) {
    std::size_t from = 0;
    if (!section.empty()) {
        const auto s = text.find("\"" + section + "\"");
        if (s != std::string::npos) from = s;
    }
    const auto k = text.find("\"" + key + "\"", from);
    if (k == std::string::npos) return section.empty() ? 0 : line_of_key(text, "", section);
    return line_at_offset(text, k);
}

[[noreturn]] void fail(const std::string& text, const std::string& section, const std::string& key,
                       const std::string& what) {
    const std::size_t line = line_of_key(text, section, key.empty() ? section : key);
    const std::string where = section.empty() ? key : (key.empty() ? section : section + "." + key);
    throw ConfigurationError("line " + std::to_string(line == 0 ? 1 : line) + ": " + where + ": " + what);
}

class Section {
public:
    Section(const nlohmann::json& root, const std::string& name, const std::string& text,
            std::set<std::string> allowed)
        : name_(name), text_(text) {
        if (root.contains(name)) {
            obj_ = root.at(name);
            if (!obj_.is_object()) fail(text_, "", name, "must be an object");
            for (const auto& [k, v] : obj_.items()) {
                if (!allowed.count(k)) fail(text_, name_, k, "unknown key");
            }
        } else {
            obj_ = nlohmann::json::object();
        }
    }

    bool has(const std::string& key) const { return obj_.contains(key); }
    const nlohmann::json& raw(const std::string& key) const { return obj_.at(key); }

    double number(const std::string& key, double dflt, bool positive = false) const {
        if (!obj_.contains(key)) return dflt;
        const auto& v = obj_.at(key);
        if (!v.is_number()) fail(text_, name_, key, "must be a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(text_, name_, key, "must be finite");
        if (positive && !(d > 0.0)) fail(text_, name_, key, "must be positive");
        return d;
    }

    std::size_t count(const std::string& key, std::size_t dflt, std::size_t minimum = 1) const {
        if (!obj_.contains(key)) return dflt;
        const auto& v = obj_.at(key);
        if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(minimum)) {
            fail(text_, name_, key, "must be an integer >= " + std::to_string(minimum));
        }
        return v.get<std::size_t>();
    }

    std::string string(const std::string& key, const std::string& dflt) const {
        if (!obj_.contains(key)) return dflt;
        if (!obj_.at(key).is_string()) fail(text_, name_, key, "must be a string");
        return obj_.at(key).get<std::string>();
    }

    [[noreturn]] void error(const std::string& key, const std::string& what) const { fail(text_, name_, key, what); }

private:
    std::string name_;
    const std::string& text_;
    nlohmann::json obj_;
};

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(document.dump()); }

McConfig ExperimentConfig::mc() const {
    McConfig mc;
    mc.particles = sim.particles;
    mc.scenarios = sim.scenarios;
    mc.dt = sim.dt;
    mc.seed = sim.seed;
    mc.mode = sim.mode;
    mc.init = init;
    mc.riccati_steps = sim.riccati_steps;
    return mc;
}

ExperimentConfig parse_config(const std::string& text, std::optional<std::uint64_t> seed_override) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigurationError("line " + std::to_string(line_at_offset(text, e.byte == 0 ? 0 : e.byte - 1)) +
                                 ": malformed JSON: " + e.what());
    }
    if (!doc.is_object()) throw ConfigurationError("line 1: config must be a JSON object");
    const std::set<std::string> sections{"model", "jumps", "sim", "init", "verify", "output"};
    for (const auto& [k, v] : doc.items()) {
        if (!sections.count(k)) fail(text, "", k, "unknown section");
    }
    if (!doc.contains("model")) throw ConfigurationError("line 1: missing section \"model\"");

    ExperimentConfig cfg;

    const Section model(doc, "model", text, {"b1", "b2", "b3", "sigma", "c", "T"});
    model.number("b1", 0.0);
    model.number("b2", 0.0);
    model.number("b3", 0.0);
    model.number("sigma", 0.0);
    model.number("c", 1.0, true);
    model.number("T", 1.0, true);

    const Section jumps(doc, "jumps", text, {"marks"});
    if (jumps.has("marks")) {
        const auto& marks = jumps.raw("marks");
        if (!marks.is_array()) jumps.error("marks", "must be an array");
        for (const auto& m : marks) {
            if (!m.is_object() || !m.contains("lambda") || !m.contains("gamma")) {
                jumps.error("marks", "each mark needs \"lambda\" and \"gamma\"");
            }
            for (const auto& [k, v] : m.items()) {
                if (k != "z" && k != "lambda" && k != "gamma") jumps.error(k, "unknown key");
                if (!v.is_number()) jumps.error(k, "must be a number");
            }
            if (!(m.at("lambda").get<double>() > 0.0)) jumps.error("lambda", "must be positive");
        }
    }
    try {
        cfg.model = lq_params_from_json(doc);
    } catch (const Error& e) {
        fail(text, "model", "", e.what());
    }

    if (!doc.contains("sim")) throw ConfigurationError("line 1: missing section \"sim\"");
    const Section sim(doc, "sim", text, {"particles", "scenarios", "dt", "seed", "mode", "riccati_steps"});
    cfg.sim.particles = sim.count("particles", cfg.sim.particles, 2);
    cfg.sim.scenarios = sim.count("scenarios", cfg.sim.scenarios, 1);
    cfg.sim.dt = sim.number("dt", cfg.sim.dt, true);
    cfg.sim.riccati_steps = sim.count("riccati_steps", cfg.sim.riccati_steps, 16);
    try {
        cfg.sim.mode = parse_noise_mode(sim.string("mode", "common"));
    } catch (const Error&) {
        sim.error("mode", "must be \"common\" or \"idiosyncratic\"");
    }
    if (seed_override) {
        doc["sim"]["seed"] = *seed_override;
    } else if (!sim.has("seed")) {
        sim.error("seed", "required (there is no clock-based default)");
    } else if (!sim.raw("seed").is_number_unsigned()) {
        sim.error("seed", "must be a non-negative integer");
    }
    cfg.sim.seed = doc["sim"]["seed"].get<std::uint64_t>();
    if (cfg.sim.dt > cfg.model.T) sim.error("dt", "must not exceed T");

    const Section init(doc, "init", text, {"mean", "stddev"});
    cfg.init.mean = {init.number("mean", 0.0)};
    cfg.init.stddev = {init.number("stddev", 0.0)};
    if (cfg.init.stddev[0] < 0.0) init.error("stddev", "must be non-negative");

    const Section ver(doc, "verify", text,
                      {"tolerance", "hjb_tolerance", "smp_tolerance", "u_grid", "samples", "hjb_measures", "max_atoms",
                       "perturbations", "chattering"});
    auto& v = cfg.verify;
    v.tolerance = ver.number("tolerance", v.tolerance, true);
    v.hjb_tolerance = ver.number("hjb_tolerance", v.hjb_tolerance);
    if (v.hjb_tolerance < 0.0) ver.error("hjb_tolerance", "must be positive (or 0 for the default)");
    v.smp_tolerance = ver.number("smp_tolerance", v.smp_tolerance, true);
    v.samples = ver.count("samples", v.samples);
    v.hjb_measures = ver.count("hjb_measures", v.hjb_measures);
    v.max_atoms = ver.count("max_atoms", v.max_atoms);
    if (ver.has("u_grid")) {
        const Section ug(ver.raw("u_grid").is_object() ? nlohmann::json{{"u_grid", ver.raw("u_grid")}}
                                                       : nlohmann::json{{"u_grid", 0}},
                         "u_grid", text, {"min", "max", "points"});
        v.u_min = ug.number("min", v.u_min);
        v.u_max = ug.number("max", v.u_max);
        v.u_points = ug.count("points", v.u_points, 2);
        if (!(v.u_max > v.u_min)) ug.error("max", "must exceed min");
    }
    if (ver.has("perturbations")) {
        const auto& arr = ver.raw("perturbations");
        if (!arr.is_array()) ver.error("perturbations", "must be an array");
        for (const auto& p : arr) {
            try {
                v.perturbations.push_back(Perturbation::parse(p));
            } catch (const std::exception& e) {
                ver.error("perturbations", e.what());
            }
        }
    }
    if (ver.has("chattering")) {
        const Section ch(ver.raw("chattering").is_object() ? nlohmann::json{{"chattering", ver.raw("chattering")}}
                                                           : nlohmann::json{{"chattering", 0}},
                         "chattering", text, {"slabs", "atoms", "slope", "symmetric"});
        if (ch.has("slabs")) {
            v.slabs.clear();
            const auto& s = ch.raw("slabs");
            if (!s.is_array() || s.size() < 2) ch.error("slabs", "must list at least two slab counts");
            for (const auto& n : s) {
                if (!n.is_number_unsigned() || n.get<std::size_t>() == 0) ch.error("slabs", "must be positive integers");
                v.slabs.push_back(n.get<std::size_t>());
            }
        }
        if (ch.has("atoms")) {
            const auto& a = ch.raw("atoms");
            if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number()) {
                ch.error("atoms", "must be two numbers");
            }
            v.chattering_rule.a = a[0].get<double>();
            v.chattering_rule.b = a[1].get<double>();
        }
        v.chattering_rule.slope = ch.number("slope", v.chattering_rule.slope);
        if (std::abs(v.chattering_rule.slope) > 1.0) ch.error("slope", "must lie in [-1, 1]");
        if (ch.has("symmetric")) {
            if (!ch.raw("symmetric").is_boolean()) ch.error("symmetric", "must be true or false");
            v.chattering_symmetric = ch.raw("symmetric").get<bool>();
        }
    }

    const Section out(doc, "output", text, {"dir", "format"});
    cfg.output.dir = out.string("dir", cfg.output.dir);
    cfg.output.format = out.string("format", cfg.output.format);
    if (cfg.output.format != "csv" && cfg.output.format != "json") out.error("format", "must be \"csv\" or \"json\"");

    cfg.document = std::move(doc);
    return cfg;
}

ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), seed_override);
}

}  // namespace mfcpn
