#pragma once

// Workload/price trace ingestion, metric accumulation and report emission.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spotsim/market.hpp"
#include "spotsim/resources.hpp"
#include "spotsim/vm.hpp"

namespace spotsim {

// Currency in exact micro-units; ledgers never accumulate floating-point
// drift. Reports render six decimals.
class Money {
public:
    Money() = default;
    static Money from_micros(std::int64_t micros) { return Money(micros); }
    // Parses a non-negative decimal literal with up to six fractional digits.
    static Money parse(const std::string& text);
    static Money from_double(double value);  // rounds to the nearest micro

    std::int64_t micros() const { return micros_; }
    double to_double() const { return static_cast<double>(micros_) / 1e6; }
    std::string str() const;

    Money& operator+=(Money other) {
        micros_ += other.micros_;
        return *this;
    }
    friend Money operator+(Money a, Money b) { return Money(a.micros_ + b.micros_); }
    friend Money operator*(Money a, std::int64_t k) { return Money(a.micros_ * k); }
    auto operator<=>(const Money&) const = default;

private:
    explicit Money(std::int64_t micros) : micros_(micros) {}
    std::int64_t micros_ = 0;
};

struct WorkloadSample {
    double timestamp = 0.0;
    long long request_count = 0;
};

// Request counts per fixed-length interval; arrivals are spread uniformly
// inside each interval at deterministic offsets.
struct WorkloadTrace {
    std::vector<WorkloadSample> samples;
    double interval = 1.0;

    void validate() const;
    double first_timestamp() const { return samples.front().timestamp; }
    double end_timestamp() const { return samples.back().timestamp + interval; }
    long long total_requests() const;
};

WorkloadTrace load_workload(const std::string& path);
void save_workload(const WorkloadTrace& trace, const std::string& path);

// Price traces keyed by instance type; every catalog type must be covered.
struct PriceBook {
    std::map<std::string, PriceTrace> traces;
    // Exact micro-unit prices parallel to each trace's samples.
    std::map<std::string, std::vector<Money>> micro_prices;

    const PriceTrace& trace_for(const std::string& type) const;
    Money micro_price_at(const std::string& type, double t) const;
};

PriceBook load_price_traces(const std::string& path, const Catalog& catalog);
void save_price_traces(const PriceBook& book, const std::string& path);

struct LedgerCharge {
    int hour_index = 0;  // hours since the instance's billing anchor
    Money price;
};

struct LedgerEntry {
    VmId instance_id = 0;
    std::string type_name;
    VmRole role = VmRole::kOnDemand;
    std::vector<LedgerCharge> charges;
    Money total;
};

struct ExperimentResult {
    double duration = 0.0;

    // Per-second series (index = floor(simulated second)).
    std::vector<double> response_time_sum;
    std::vector<std::uint32_t> completions_per_second;
    std::vector<std::uint32_t> timeouts_per_second;

    std::vector<LedgerEntry> cost_ledger;
    std::vector<std::string> decision_log;

    long long arrivals = 0;
    long long completions = 0;
    long long timeouts = 0;
    long long termination_induced_timeouts = 0;
    long long in_flight_at_end = 0;
    long long launch_rejections = 0;
    long long fault_semantics_warnings = 0;

    double shortfall_time = 0.0;  // simulated time with R above online capacity
    std::uint64_t event_hash = 0;

    // Response-time histogram, 1 ms bins covering [0, timeout]; the last bin
    // absorbs anything slower.
    std::vector<std::uint32_t> response_histogram;

    Money total_cost() const;
    double availability() const;
    double percentile(double p) const;  // from the histogram, bin upper edge
};

// Writes response_time.csv, cost.csv, summary.csv and decisions.log.
void emit_report(const ExperimentResult& result, const std::string& out_dir);

}  // namespace spotsim
