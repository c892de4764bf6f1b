#pragma once

// Experiment runner: resolves a spec into catalog/traces/policy/simulator,
// runs it and writes the report files.

#include <string>
#include <vector>

#include "spotsim/engine.hpp"
#include "spotsim/traces.hpp"

namespace spotsim {

struct ExperimentSpec {
    PolicyKind policy = PolicyKind::kProposed;
    int f = 1;
    double on_demand_pct = 0.0;  // 0..100 on the CLI, mapped to a fraction
    int max_groups = 4;
    BiddingStrategy bidding = BiddingStrategy::kTruthful;
    MarginMode margin_mode = MarginMode::kDynamic;
    std::uint64_t seed = 1;
    double duration = 0.0;
    double workload_scale = 1.0;

    std::string catalog_path;
    std::string prices_path;
    std::string workload_path;
    std::string out_dir;

    // Tunables beyond the main flags; settable through the config file.
    MarginPolicy margin_policy;  // mode is overridden by margin_mode
    double removal_interval = 1800.0;
    double replacement_hysteresis = 0.05;
    std::string on_demand_type = "c3.large";
    AppProfile profile;  // empty demand vector means "derive from defaults"
    SimParams sim;       // duration/seed/workload_scale are overridden above

    void validate_files() const;
};

Catalog load_catalog(const std::string& path);
void save_catalog(const Catalog& catalog, const std::string& path);

// Policy coercions applied, simulator assembled and run; reports plus a
// config echo land in spec.out_dir.
ExperimentResult run_experiment(const ExperimentSpec& spec);

// Builds the scaling config + params exactly as run_experiment would,
// without touching the filesystem. Used by tests driving the engine directly.
struct ResolvedExperiment {
    ScalingConfig config;
    SimParams params;
    AppProfile profile;
};
ResolvedExperiment resolve_experiment(const ExperimentSpec& spec, const Catalog& catalog);

struct SweepCell {
    ExperimentSpec spec;
    std::string label;
};

struct SweepRow {
    std::string label;
    bool failed = false;
    std::string error;
    Money total_cost;
    double availability = 0.0;
    long long timeouts = 0;
};

// Runs every cell (serially in-process, or one child process per cell when
// jobs > 1) and writes sweep.csv under out_dir.
std::vector<SweepRow> run_sweep(const std::vector<SweepCell>& cells, const std::string& out_dir,
                                int jobs = 1, const std::string& self_binary = "");

}  // namespace spotsim
