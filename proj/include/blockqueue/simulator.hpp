#pragma once

#include <cstdint>
#include <vector>

#include "blockqueue/map_ph.hpp"

namespace blockqueue {

// Discrete-event simulation of the two-stage batch-service queue: exact MAP
// arrivals, PH generation and building stages alternating on one server, and
// uniform random selection of min(waiting, b) transactions into each block at
// the instant generation completes.
struct SimConfig {
    long horizon_events = 1000000; // per replication, counting every transition
    double warmup = 0.2;           // fraction of the event horizon
    int replications = 8;
    uint64_t seed = 1;
};

struct SelectionCell {
    long included = 0; // designated waiter ended up in the block
    long trials = 0;   // selection instants observed at this waiting count
};

struct SimEstimates {
    int replications = 0;
    long horizon_events = 0;
    uint64_t seed = 0;

    double mean_n1 = 0.0, se_n1 = 0.0; // time-average waiting-room count
    double mean_n2 = 0.0, se_n2 = 0.0; // time-average in-block count
    double mean_sojourn = 0.0, se_sojourn = 0.0;
    double var_sojourn = 0.0, se_var_sojourn = 0.0;
    long sojourn_count = 0;

    bool unstable_trend = false; // N1 time-average rose across all four windows

    long arrivals = 0, departures = 0, in_system_at_end = 0;
    int max_block = 0;

    // Tagged-inclusion frequency by waiting count at the selection instant.
    std::vector<SelectionCell> selection;

    // Arrival-conditional statistics (state observed just before arrival).
    double frac_seen_generation = 0.0;    // among arrivals finding the system nonempty
    double se_frac_seen_generation = 0.0;
    double mean_sojourn_seen_generation = 0.0, se_sojourn_seen_generation = 0.0;
    double mean_sojourn_seen_building = 0.0, se_sojourn_seen_building = 0.0;
    double mean_sojourn_seen_idle = 0.0, se_sojourn_seen_idle = 0.0;
};

// Steady-state estimates with standard errors across replications.
SimEstimates simulate(const ModelSpec& model, const SimConfig& cfg);

// Same engine with the arrival-conditional view emphasized; kept as its own
// entry point so confirmation-time experiments read naturally.
SimEstimates simulate_tagged(const ModelSpec& model, const SimConfig& cfg);

} // namespace blockqueue
