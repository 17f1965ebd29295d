#pragma once

#include <optional>
#include <string>
#include <vector>

#include "blockqueue/map_ph.hpp"
#include "blockqueue/simulator.hpp"

namespace blockqueue {

struct SolverOptions {
    double tolerance = 1e-12;
    int max_iter = 100000;
    int truncation_k = 0; // 0 = automatic doubling
    int confirm_cap = 100; // skip confirmation-time work above this block cap
};

// A parsed model configuration. Shorthand configs (lambda/mu1/mu2) expand to
// order-1 MAP/PH; full configs carry explicit matrices.
struct LoadedConfig {
    ModelSpec model;
    SolverOptions solver;
    SimConfig sim;
};

LoadedConfig load_model_config(const std::string& path);
LoadedConfig parse_model_config(const std::string& json_text);

struct SweepSpec {
    std::string parameter; // one of lambda, mu1, mu2, blockCap
    std::vector<double> grid;
    std::vector<int> block_caps; // outer loop; defaults to the base blockCap
    LoadedConfig base;
};

SweepSpec load_sweep_spec(const std::string& path);
SweepSpec parse_sweep_spec(const std::string& json_text);

// The base model with one parameter replaced: rates rescale the matching
// matrices, blockCap swaps the cap.
ModelSpec apply_parameter(const ModelSpec& base, const std::string& parameter, double value, int block_cap);

// Numeric CSV field with 12 significant digits; NaN prints as "nan".
std::string csv_number(double v);

} // namespace blockqueue
