#pragma once

// Experiment configuration (JSON) shared by the CLI, the acceptance runner
// and the Python bindings.

#include "mfcpn/coefficients.hpp"
#include "mfcpn/simulate.hpp"
#include "mfcpn/verify.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace mfcpn {

struct SimSection {
    std::size_t particles = 200;
    std::size_t scenarios = 16;
    double dt = 0.01;
    std::uint64_t seed = 0;
    NoiseMode mode = NoiseMode::common;
    std::size_t riccati_steps = 10000;
};

struct VerifySection {
    double tolerance = 1e-6;      // BSDE drift and jump identities
    double hjb_tolerance = 0.0;   // 0 means 1e-6 + 10 x Riccati midpoint residual
    double smp_tolerance = 1e-8;
    double u_min = -3.0;
    double u_max = 3.0;
    std::size_t u_points = 601;
    std::size_t samples = 200;       // SMP sample points
    std::size_t hjb_measures = 100;
    std::size_t max_atoms = 16;
    std::vector<Perturbation> perturbations;
    std::vector<std::size_t> slabs{2, 4, 8, 16, 32};
    TwoAtomRule chattering_rule;
    bool chattering_symmetric = false;
};

struct OutputSection {
    std::string dir = ".";
    std::string format = "csv";  // csv or json for tabular outputs
};

struct ExperimentConfig {
    LQParams model;
    SimSection sim;
    InitialLaw init;
    VerifySection verify;
    OutputSection output;
    /// Parsed document after overrides; the hash is taken over its canonical dump.
    nlohmann::json document;

    std::string hash() const;
    McConfig mc() const;
};

/// Parses config text. Malformed JSON and schema violations throw
/// ConfigurationError with a "line N:" prefix. `seed_override` replaces
/// sim.seed, which is otherwise required.
ExperimentConfig parse_config(const std::string& text, std::optional<std::uint64_t> seed_override = std::nullopt);
ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed_override = std::nullopt);

/// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace mfcpn
