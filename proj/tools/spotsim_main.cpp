// Experiment runner CLI: single runs and benchmark sweeps over the bundled
// catalog, price and workload traces.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "spotsim/experiment.hpp"

namespace {

using namespace spotsim;

PolicyKind parse_policy(const std::string& name) {
    if (name == "proposed") return PolicyKind::kProposed;
    if (name == "on-demand-only") return PolicyKind::kOnDemandOnly;
    if (name == "one-spot-type") return PolicyKind::kOneSpotType;
    throw ConfigError("unknown policy '" + name + "'");
}

struct CliOptions {
    std::string policy = "proposed";
    int f = 1;
    double on_demand_pct = 0.0;
    int max_groups = 4;
    std::string bidding = "truthful";
    std::string margin = "dynamic";
    std::uint64_t seed = 1;
    double duration = 3600.0;
    double workload_scale = 1.0;
    std::string catalog, prices, workload, out;
    std::string config_file;
};

void add_common_flags(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option("--policy", opt.policy, "proposed | on-demand-only | one-spot-type");
    cmd->add_option("--f", opt.f, "fault-tolerant level");
    cmd->add_option("--on-demand-pct", opt.on_demand_pct, "minimum on-demand share, 0-100")
        ->check(CLI::Range(0.0, 100.0));
    cmd->add_option("--max-groups", opt.max_groups, "maximum number of spot groups");
    cmd->add_option("--bidding", opt.bidding, "truthful | on-demand");
    cmd->add_option("--margin", opt.margin, "static | dynamic");
    cmd->add_option("--seed", opt.seed, "random seed");
    cmd->add_option("--duration", opt.duration, "simulated seconds");
    cmd->add_option("--workload-scale", opt.workload_scale, "request-rate scale factor");
    cmd->add_option("--catalog", opt.catalog, "instance catalog csv")->required();
    cmd->add_option("--prices", opt.prices, "spot price trace csv")->required();
    cmd->add_option("--workload", opt.workload, "workload trace csv")->required();
    cmd->add_option("--out", opt.out, "output directory")->required();
    cmd->add_option("--config", opt.config_file, "json config file; flags override its values");
}

// Flags override config-file values, so the file is applied first.
void apply_config_file(const CLI::App* cmd, CliOptions& opt, ExperimentSpec& spec) {
    if (opt.config_file.empty()) return;
    std::ifstream in(opt.config_file);
    if (!in) throw ConfigError("cannot open config file '" + opt.config_file + "'");
    nlohmann::json j;
    in >> j;
    auto flag_given = [&](const std::string& name) { return cmd->count(name) > 0; };
    if (j.contains("policy") && !flag_given("--policy")) opt.policy = j["policy"];
    if (j.contains("f") && !flag_given("--f")) opt.f = j["f"];
    if (j.contains("on_demand_pct") && !flag_given("--on-demand-pct")) opt.on_demand_pct = j["on_demand_pct"];
    if (j.contains("max_groups") && !flag_given("--max-groups")) opt.max_groups = j["max_groups"];
    if (j.contains("bidding") && !flag_given("--bidding")) opt.bidding = j["bidding"];
    if (j.contains("margin") && !flag_given("--margin")) opt.margin = j["margin"];
    if (j.contains("seed") && !flag_given("--seed")) opt.seed = j["seed"];
    if (j.contains("duration") && !flag_given("--duration")) opt.duration = j["duration"];
    if (j.contains("workload_scale") && !flag_given("--workload-scale")) {
        opt.workload_scale = j["workload_scale"];
    }
    if (j.contains("margin_min")) spec.margin_policy.m_min = j["margin_min"];
    if (j.contains("margin_default")) spec.margin_policy.m_def = j["margin_default"];
    if (j.contains("f_max")) spec.margin_policy.f_max = j["f_max"];
    if (j.contains("removal_interval")) spec.removal_interval = j["removal_interval"];
    if (j.contains("replacement_hysteresis")) spec.replacement_hysteresis = j["replacement_hysteresis"];
    if (j.contains("on_demand_type")) spec.on_demand_type = j["on_demand_type"];
    if (j.contains("initial_on_demand")) spec.sim.initial_on_demand = j["initial_on_demand"];
    if (j.contains("billing_lead")) spec.sim.billing_lead = j["billing_lead"];
    if (j.contains("sample_interval")) spec.sim.sample_interval = j["sample_interval"];
    if (j.contains("request_timeout")) spec.sim.request_timeout = j["request_timeout"];
    if (j.contains("mean_request_length")) spec.profile.mean_request_length = j["mean_request_length"];
    if (j.contains("request_length_stddev")) spec.profile.request_length_stddev = j["request_length_stddev"];
    if (j.contains("demand_per_request")) {
        std::vector<double> d = j["demand_per_request"].get<std::vector<double>>();
        spec.profile.demand_per_request = ResourceVector(d);
    }
}

ExperimentSpec to_spec(const CLI::App* cmd, CliOptions& opt) {
    ExperimentSpec spec;
    apply_config_file(cmd, opt, spec);
    spec.policy = parse_policy(opt.policy);
    spec.f = opt.f;
    spec.on_demand_pct = opt.on_demand_pct;
    spec.max_groups = opt.max_groups;
    if (opt.bidding == "truthful") {
        spec.bidding = BiddingStrategy::kTruthful;
    } else if (opt.bidding == "on-demand") {
        spec.bidding = BiddingStrategy::kOnDemandPrice;
    } else {
        throw ConfigError("unknown bidding strategy '" + opt.bidding + "'");
    }
    if (opt.margin == "static") {
        spec.margin_mode = MarginMode::kStatic;
    } else if (opt.margin == "dynamic") {
        spec.margin_mode = MarginMode::kDynamic;
    } else {
        throw ConfigError("unknown margin mode '" + opt.margin + "'");
    }
    spec.seed = opt.seed;
    spec.duration = opt.duration;
    spec.workload_scale = opt.workload_scale;
    spec.catalog_path = opt.catalog;
    spec.prices_path = opt.prices;
    spec.workload_path = opt.workload;
    spec.out_dir = opt.out;
    return spec;
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spotsim: auto-scaling simulator for mixed on-demand/spot web clusters"};
    app.require_subcommand(1);

    CliOptions run_opt;
    CLI::App* run_cmd = app.add_subcommand("run", "run a single experiment");
    add_common_flags(run_cmd, run_opt);

    CliOptions sweep_opt;
    std::string policies = "proposed";
    std::string f_levels = "1";
    std::string od_pcts = "0";
    std::string biddings = "truthful";
    std::string margins = "dynamic";
    int jobs = 1;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "run a configuration sweep");
    add_common_flags(sweep_cmd, sweep_opt);
    sweep_cmd->add_option("--policies", policies, "comma list of policies");
    sweep_cmd->add_option("--f-levels", f_levels, "comma list of fault-tolerant levels");
    sweep_cmd->add_option("--on-demand-pcts", od_pcts, "comma list of on-demand percentages");
    sweep_cmd->add_option("--biddings", biddings, "comma list of bidding strategies");
    sweep_cmd->add_option("--margins", margins, "comma list of margin modes");
    sweep_cmd->add_option("--jobs", jobs, "parallel cell processes");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (run_cmd->parsed()) {
            ExperimentSpec spec = to_spec(run_cmd, run_opt);
            ExperimentResult result = run_experiment(spec);
            std::printf("total_cost=%s availability=%.6f timeouts=%lld arrivals=%lld completions=%lld\n",
                        result.total_cost().str().c_str(), result.availability(), result.timeouts,
                        result.arrivals, result.completions);
            return 0;
        }
        // sweep
        ExperimentSpec base = to_spec(sweep_cmd, sweep_opt);
        std::vector<spotsim::SweepCell> cells;
        for (const auto& policy : split_list(policies)) {
            for (const auto& f : split_list(f_levels)) {
                for (const auto& pct : split_list(od_pcts)) {
                    for (const auto& bidding : split_list(biddings)) {
                        for (const auto& margin : split_list(margins)) {
                            ExperimentSpec spec = base;
                            spec.policy = parse_policy(policy);
                            spec.f = std::stoi(f);
                            spec.on_demand_pct = std::stod(pct);
                            spec.bidding = bidding == "on-demand" ? BiddingStrategy::kOnDemandPrice
                                                                  : BiddingStrategy::kTruthful;
                            spec.margin_mode =
                                margin == "static" ? MarginMode::kStatic : MarginMode::kDynamic;
                            std::string label = policy + "_f" + f + "_od" + pct + "_" + bidding + "_" + margin;
                            spec.out_dir = base.out_dir + "/" + label;
                            cells.push_back({spec, label});
                        }
                    }
                }
            }
        }
        auto rows = run_sweep(cells, base.out_dir, jobs, argv[0]);
        bool any_failed = false;
        for (const auto& row : rows) {
            if (row.failed) {
                any_failed = true;
                std::printf("%-45s FAILED: %s\n", row.label.c_str(), row.error.c_str());
            } else {
                std::printf("%-45s cost=%s availability=%.6f timeouts=%lld\n", row.label.c_str(),
                            row.total_cost.str().c_str(), row.availability, row.timeouts);
            }
        }
        return any_failed ? 2 : 0;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 1;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
