// scenario.hpp - declarative run configuration: INI-style sections parsed into
// a validated Scenario, with line-anchored diagnostics.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fanodyn/models.hpp"
#include "fanodyn/spectral.hpp"
#include "fanodyn/types.hpp"

namespace fanodyn::cli {

struct Diagnostic {
    int line = 0;
    std::string key;
    std::string message;
    bool error = true;
};

enum class Task {
    U,
    V,
    Coefficients,
    Rho,
    BoundStates,
    Spectra,
    Occupation,
    Measure,
    ModelSpinZeroT,
    ModelPureDephasing,
    ModelMajorana,
};

std::string task_name(Task t);

struct Scenario {
    spectral::SystemSpec system;
    double unit = 1.0;
    Matrix initial_occupation;          // N x N
    std::string initial_state = "";     // fock:<n> | coherent:<re>[,<im>] | occupied | empty
    int boson_cutoff = 0;               // 0 = auto

    TimeGrid grid;
    int v_stride = 1;
    int quad_points = 24;
    double quad_tol = 1e-10;

    std::vector<Task> tasks;

    // measure configuration
    std::vector<double> measure_anchors;  // empty = 8 log-spaced defaults
    double measure_tau_max = 0.0;         // 0 = t_max / 5

    // spectra configuration
    int spectra_points = 800;
    std::optional<double> spectra_min, spectra_max;
    double spectra_ts = 0.0;  // 0 = t_max

    // model configuration
    double model_epsilon = 1.0;

    std::string output_directory = "";
    int output_precision = 0;  // 0 = shortest round-trip

    bool has_task(Task t) const;
};

struct ParseResult {
    std::optional<Scenario> scenario;
    std::vector<Diagnostic> diagnostics;  // errors and (non-strict) warnings

    bool ok() const { return scenario.has_value(); }
    std::vector<std::string> warnings() const;
};

// Strict mode turns unknown keys/sections into errors; otherwise they warn.
ParseResult parse_scenario(const std::string& text, bool strict = false);

// Applies "section.key = value" overrides (used by sweep) before validation.
ParseResult parse_scenario_with_overrides(const std::string& text,
                                          const std::vector<std::pair<std::string, std::string>>& overrides,
                                          bool strict = false);

} // namespace fanodyn::cli
