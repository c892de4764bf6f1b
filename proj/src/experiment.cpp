#include "spotsim/experiment.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"

namespace spotsim {

namespace fs = std::filesystem;

void ExperimentSpec::validate_files() const {
    for (const auto* path : {&catalog_path, &prices_path, &workload_path}) {
        if (path->empty()) throw ConfigError("experiment: missing input file path");
        if (!fs::exists(*path)) throw ConfigError("experiment: file not found: " + *path);
    }
}

Catalog load_catalog(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("catalog: cannot open '" + path + "'");
    std::vector<InstanceType> types;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1 && line.rfind("name", 0) == 0) continue;
        std::vector<std::string> fields;
        std::string field;
        std::istringstream row(line);
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (fields.size() != 6) {
            throw ValidationError(path + ":" + std::to_string(line_no) + ": expected 6 fields, got " +
                                  std::to_string(fields.size()));
        }
        auto num = [&](const std::string& text) {
            try {
                std::size_t pos = 0;
                double v = std::stod(text, &pos);
                if (pos != text.size()) throw std::invalid_argument("trailing");
                return v;
            } catch (const std::exception&) {
                throw ValidationError(path + ":" + std::to_string(line_no) + ": bad number '" + text + "'");
            }
        };
        InstanceType t;
        t.name = fields[0];
        t.capacity = ResourceVector({num(fields[1]), num(fields[2]), num(fields[3]), num(fields[4])});
        t.on_demand_price = Money::parse(fields[5]).to_double();
        types.push_back(std::move(t));
    }
    return Catalog(std::move(types));
}

void save_catalog(const Catalog& catalog, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("catalog: cannot write '" + path + "'");
    out << "name,cpu_ecu,memory_gib,network_mbps,disk_mbps,on_demand_price\n";
    char buf[160];
    for (const auto& t : catalog.types()) {
        std::snprintf(buf, sizeof(buf), "%s,%g,%g,%g,%g,%s\n", t.name.c_str(), t.capacity[0], t.capacity[1],
                      t.capacity[2], t.capacity[3], Money::from_double(t.on_demand_price).str().c_str());
        out << buf;
    }
}

ResolvedExperiment resolve_experiment(const ExperimentSpec& spec, const Catalog& catalog) {
    ResolvedExperiment r;
    r.profile = spec.profile;
    if (r.profile.demand_per_request.dims() == 0) {
        // Default profile: CPU-bound requests; memory/network/disk sized so
        // compute stays the bottleneck.
        r.profile.demand_per_request =
            ResourceVector({r.profile.mean_request_length, 0.002, 0.4, 0.05});
    }

    r.config.f = spec.f;
    r.config.on_demand_share = spec.on_demand_pct / 100.0;
    r.config.max_groups = spec.max_groups;
    r.config.bidding_strategy = spec.bidding;
    r.config.margin_policy = spec.margin_policy;
    r.config.margin_policy.mode = spec.margin_mode;
    r.config.removal_interval = spec.removal_interval;
    r.config.replacement_hysteresis = spec.replacement_hysteresis;
    r.config.on_demand_type = spec.on_demand_type;

    r.params = spec.sim;
    r.params.duration = spec.duration;
    r.params.seed = spec.seed;
    r.params.workload_scale = spec.workload_scale;

    switch (spec.policy) {
        case PolicyKind::kProposed:
            break;
        case PolicyKind::kOnDemandOnly:
            // Always in On-Demand Mode with the traditional static margin.
            r.config.f = 0;
            r.config.max_groups = 1;
            r.config.margin_policy.mode = MarginMode::kStatic;
            break;
        case PolicyKind::kOneSpotType:
            // Single group, no fault tolerance, no margin headroom, and
            // replacement as soon as any cheaper group appears.
            r.config.f = 0;
            r.config.max_groups = 1;
            r.config.margin_policy.m_min = 0.0;
            r.config.margin_policy.m_def = 0.0;
            r.config.margin_policy.mode = MarginMode::kStatic;
            r.config.replacement_hysteresis = 0.0;
            break;
    }
    r.config.validate();
    catalog.at(r.config.on_demand_type);
    return r;
}

namespace {

const char* policy_name(PolicyKind policy) {
    switch (policy) {
        case PolicyKind::kProposed: return "proposed";
        case PolicyKind::kOnDemandOnly: return "on-demand-only";
        case PolicyKind::kOneSpotType: return "one-spot-type";
    }
    return "?";
}

void echo_config(const ExperimentSpec& spec, const ResolvedExperiment& r, const std::string& out_dir) {
    nlohmann::ordered_json j;
    j["policy"] = policy_name(spec.policy);
    j["f"] = r.config.f;
    j["on_demand_pct"] = spec.on_demand_pct;
    j["max_groups"] = r.config.max_groups;
    j["bidding"] = spec.bidding == BiddingStrategy::kTruthful ? "truthful" : "on-demand";
    j["margin"] = r.config.margin_policy.mode == MarginMode::kDynamic ? "dynamic" : "static";
    j["margin_min"] = r.config.margin_policy.m_min;
    j["margin_default"] = r.config.margin_policy.m_def;
    j["f_max"] = r.config.margin_policy.f_max;
    j["seed"] = spec.seed;
    j["duration"] = spec.duration;
    j["workload_scale"] = spec.workload_scale;
    j["removal_interval"] = r.config.removal_interval;
    j["replacement_hysteresis"] = r.config.replacement_hysteresis;
    j["on_demand_type"] = r.config.on_demand_type;
    j["initial_on_demand"] = r.params.initial_on_demand;
    j["billing_lead"] = r.params.billing_lead;
    j["sample_interval"] = r.params.sample_interval;
    j["request_timeout"] = r.params.request_timeout;
    j["profile"] = {{"demand_per_request",
                     std::vector<double>(r.profile.demand_per_request.components().begin(),
                                         r.profile.demand_per_request.components().end())},
                    {"mean_request_length", r.profile.mean_request_length},
                    {"request_length_stddev", r.profile.request_length_stddev}};
    j["catalog"] = spec.catalog_path;
    j["prices"] = spec.prices_path;
    j["workload"] = spec.workload_path;
    std::ofstream out(out_dir + "/config.json");
    out << j.dump(2) << "\n";
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec) {
    spec.validate_files();
    Catalog catalog = load_catalog(spec.catalog_path);
    PriceBook prices = load_price_traces(spec.prices_path, catalog);
    WorkloadTrace workload = load_workload(spec.workload_path);
    ResolvedExperiment r = resolve_experiment(spec, catalog);

    Simulator sim(catalog, r.profile, r.config, spec.policy, r.params, prices, workload);
    ExperimentResult result = sim.run();

    if (!spec.out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(spec.out_dir, ec);
        emit_report(result, spec.out_dir);
        echo_config(spec, r, spec.out_dir);
    }
    return result;
}

namespace {

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    out += "'";
    return out;
}

SweepRow read_cell_summary(const SweepCell& cell) {
    SweepRow row;
    row.label = cell.label;
    std::ifstream in(cell.spec.out_dir + "/summary.csv");
    if (!in) {
        row.failed = true;
        row.error = "missing summary.csv";
        return row;
    }
    std::string header, data;
    std::getline(in, header);
    std::getline(in, data);
    std::istringstream fields(data);
    std::string cost, avail, p50, p95, p99, timeouts;
    std::getline(fields, cost, ',');
    std::getline(fields, avail, ',');
    std::getline(fields, p50, ',');
    std::getline(fields, p95, ',');
    std::getline(fields, p99, ',');
    std::getline(fields, timeouts, ',');
    row.total_cost = Money::parse(cost);
    row.availability = std::stod(avail);
    row.timeouts = std::stoll(timeouts);
    return row;
}

}  // namespace

std::vector<SweepRow> run_sweep(const std::vector<SweepCell>& cells, const std::string& out_dir, int jobs,
                                const std::string& self_binary) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::vector<SweepRow> rows(cells.size());

    if (jobs > 1 && !self_binary.empty()) {
        // One child process per cell; results come back through the report
        // files, so parallel and serial execution are identical.
        std::size_t next = 0;
        std::vector<std::pair<pid_t, std::size_t>> running;
        auto spawn = [&](std::size_t i) {
            const ExperimentSpec& s = cells[i].spec;
            std::ostringstream cmd;
            cmd << shell_quote(self_binary) << " run"
                << " --policy " << policy_name(s.policy) << " --f " << s.f << " --on-demand-pct "
                << s.on_demand_pct << " --max-groups " << s.max_groups << " --bidding "
                << (s.bidding == BiddingStrategy::kTruthful ? "truthful" : "on-demand") << " --margin "
                << (s.margin_mode == MarginMode::kDynamic ? "dynamic" : "static") << " --seed " << s.seed
                << " --duration " << s.duration << " --workload-scale " << s.workload_scale << " --catalog "
                << shell_quote(s.catalog_path) << " --prices " << shell_quote(s.prices_path) << " --workload "
                << shell_quote(s.workload_path) << " --out " << shell_quote(s.out_dir);
            pid_t pid = fork();
            if (pid == 0) {
                execl("/bin/sh", "sh", "-c", cmd.str().c_str(), static_cast<char*>(nullptr));
                _exit(127);
            }
            running.emplace_back(pid, i);
        };
        while (next < cells.size() || !running.empty()) {
            while (next < cells.size() && static_cast<int>(running.size()) < jobs) spawn(next++);
            int status = 0;
            pid_t done = wait(&status);
            for (auto it = running.begin(); it != running.end(); ++it) {
                if (it->first == done) {
                    std::size_t i = it->second;
                    if (WIFEXITED(status) && WEXITSTATUS(status) == 0) {
                        rows[i] = read_cell_summary(cells[i]);
                    } else {
                        rows[i].label = cells[i].label;
                        rows[i].failed = true;
                        rows[i].error = "exit status " + std::to_string(WEXITSTATUS(status));
                    }
                    running.erase(it);
                    break;
                }
            }
        }
    } else {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            rows[i].label = cells[i].label;
            try {
                run_experiment(cells[i].spec);
                rows[i] = read_cell_summary(cells[i]);
            } catch (const std::exception& e) {
                rows[i].failed = true;
                rows[i].error = e.what();
            }
        }
    }

    std::ofstream out(out_dir + "/sweep.csv");
    out << "cell,status,total_cost,availability,timeouts\n";
    for (const auto& row : rows) {
        if (row.failed) {
            out << row.label << ",failed(" << row.error << "),,,\n";
        } else {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%s,ok,%s,%.6f,%lld\n", row.label.c_str(),
                          row.total_cost.str().c_str(), row.availability, row.timeouts);
            out << buf;
        }
    }
    return rows;
}

}  // namespace spotsim
