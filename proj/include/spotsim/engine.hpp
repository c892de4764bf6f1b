#pragma once

// Deterministic discrete-event engine: priority event queue, VM lifecycle
// with stochastic delays, processor-sharing request service with weighted
// round robin dispatch, hourly billing and the monitor wiring.

#include <cstdint>
#include <deque>
#include <optional>
#include <queue>
#include <random>
#include <vector>

#include "spotsim/market.hpp"
#include "spotsim/policy.hpp"
#include "spotsim/provision.hpp"
#include "spotsim/resources.hpp"
#include "spotsim/traces.hpp"
#include "spotsim/vm.hpp"

namespace spotsim {

enum class EventKind : std::uint8_t {
    kSpotTermination,
    kVmOnline,
    kVmOffline,
    kBillingBoundary,
    kPriceChange,
    kRemovalSweep,
    kUtilizationSample,
    kRequestArrival,
    kRequestDeparture,
};

// Lower classes pop first at equal fire times; correctness-critical failures
// come before housekeeping and request traffic.
std::uint8_t priority_class(EventKind kind);

struct SimEvent {
    double fire_time = 0.0;
    std::uint8_t klass = 0;
    EventKind kind = EventKind::kRequestArrival;
    std::uint64_t seq = 0;  // insertion order; last deterministic tie-break
    std::uint32_t subject = 0;
    std::uint32_t generation = 0;
};

class EventQueue {
public:
    void push(double fire_time, EventKind kind, std::uint32_t subject, std::uint32_t generation);
    bool empty() const { return heap_.empty(); }
    SimEvent pop();

private:
    struct Later {
        bool operator()(const SimEvent& a, const SimEvent& b) const {
            if (a.fire_time != b.fire_time) return a.fire_time > b.fire_time;
            if (a.klass != b.klass) return a.klass > b.klass;
            return a.seq > b.seq;
        }
    };
    std::priority_queue<SimEvent, std::vector<SimEvent>, Later> heap_;
    std::uint64_t next_seq_ = 0;
};

// Independent named random streams so draws stay aligned across runs no
// matter how events interleave elsewhere.
class SimRng {
public:
    explicit SimRng(std::uint64_t seed);

    double request_length(double mean, double stddev);
    double startup_delay(double mean, double stddev);
    double shutdown_delay(double mean, double stddev);
    double spot_request_delay(double mean, double stddev);

    // Gaussian truncated to positive values by re-drawing.
    static double positive_normal(std::mt19937_64& engine, double mean, double stddev);

private:
    std::mt19937_64 request_lengths_;
    std::mt19937_64 startup_delays_;
    std::mt19937_64 shutdown_delays_;
    std::mt19937_64 spot_request_delays_;
};

// Processor-sharing server for one instance: every in-flight request accrues
// service at rate capacity / n. Completion order follows the virtual-time
// targets; a request whose sojourn reaches the timeout is dropped.
class PsServer {
public:
    void init(double service_rate, double timeout);

    void advance(double t);
    // Returns the job slot; deadline is measured from first_arrival (requests
    // keep their original arrival clock across re-dispatch).
    std::uint32_t add_job(double t, double length, double first_arrival, bool redispatched);

    struct Due {
        enum class What { kNone, kCompletion, kTimeout } what = What::kNone;
        std::uint32_t slot = 0;
    };
    // The earliest job that completes or times out at or before t.
    Due due_at(double t);
    void finish_job(std::uint32_t slot);  // completion or timeout both retire the slot

    double next_event_time();  // +inf when idle
    int active_jobs() const { return active_; }

    struct JobInfo {
        double first_arrival;
        double length;
        bool redispatched;
    };
    double job_first_arrival(std::uint32_t slot) const { return jobs_[slot].first_arrival; }
    bool job_redispatched(std::uint32_t slot) const { return jobs_[slot].redispatched; }
    // Active jobs in arrival order, used when the instance goes offline.
    std::vector<JobInfo> drain_active();

private:
    struct Job {
        double target_v = 0.0;
        double first_arrival = 0.0;
        double deadline = 0.0;
        double length = 0.0;
        bool redispatched = false;
        bool done = true;
    };
    void skip_finished();

    double rate_ = 1.0;
    double timeout_ = 30.0;
    double virtual_time_ = 0.0;
    double last_update_ = 0.0;
    int active_ = 0;
    std::vector<Job> jobs_;
    std::vector<std::uint32_t> free_slots_;
    // Min-heaps keyed by completion virtual time and wall-clock deadline.
    std::vector<std::pair<double, std::uint32_t>> completion_heap_;
    std::vector<std::pair<double, std::uint32_t>> deadline_heap_;
};

enum class PolicyKind { kProposed, kOnDemandOnly, kOneSpotType };

struct SimParams {
    double duration = 0.0;
    std::uint64_t seed = 1;
    double workload_scale = 1.0;
    // Scale-down decisions fire this long before each billing hour mark, so
    // replacement spot instances (mean 650 s acquisition + boot) are online
    // before the paid hour runs out.
    double billing_lead = 900.0;
    double sample_interval = 10.0;
    double request_timeout = 30.0;
    int initial_on_demand = 5;
    // The initial instances were started at different times in the past;
    // their billing anchors are spread out so hour ends do not collide.
    double initial_anchor_stagger = 600.0;
    double od_boot_mean = 100.0, od_boot_sd = 20.0;
    double shutdown_mean = 100.0, shutdown_sd = 20.0;
    double spot_acquisition_mean = 550.0, spot_acquisition_sd = 50.0;
};

// One experiment run. Single-threaded and fully deterministic for a given
// (inputs, seed) pair.
class Simulator {
public:
    Simulator(const Catalog& catalog, const AppProfile& profile, const ScalingConfig& config,
              PolicyKind policy, const SimParams& params, const PriceBook& prices,
              const WorkloadTrace& workload);

    ExperimentResult run();

    // Test hook: launch an instance directly (used by scripted billing and
    // lifecycle scenarios). Returns the id, or nullopt when a spot bid is
    // rejected at request time.
    std::optional<VmId> launch_vm(const std::string& type_name, VmRole role, double bid_price);
    void schedule_user_termination(VmId id, double t);
    void disable_policy() { policy_enabled_ = false; }

    const Provision& provision() const { return provision_; }
    const VmStore& vm_store() const { return store_; }

private:
    // Event handlers.
    void on_price_change(std::uint32_t type_index);
    void on_spot_termination(VmId id);
    void on_vm_online(VmId id);
    void on_vm_offline(VmId id, TerminationCause cause);
    void on_billing_boundary(VmId id);
    void on_utilization_sample();
    void on_removal_sweep();
    void on_request_arrival();
    void on_request_departure(VmId id);

    // Policy wiring.
    PlannerContext planner_context() const;
    void ensure_safe(const char* trigger);
    void apply_plan(const ProvisionPlan& plan, const char* trigger);
    double current_cost_estimate() const;
    void dissolve_groups_to_orphans();
    void launch_spot_for_group(SpotGroup& group, int count);
    int planning_on_demand_count() const;
    void refresh_quotas();
    void check_fault_semantics_warning();
    std::string describe_provision() const;

    // VM / dispatch plumbing.
    void take_offline(VmId id, TerminationCause cause);
    void bill_instance(VmId id, double end_time, TerminationCause cause);
    void rebuild_serving_set();
    void dispatch(double t, double length, double first_arrival, bool redispatched);
    void schedule_departure(VmId id);
    void update_shortfall(double t);
    void record_pop(const SimEvent& ev);
    std::size_t second_index(double t) const;
    void bump_timeout_series(double t);
    double current_margin() const { return config_.margin_for(provision_.mode); }

    const Catalog& catalog_;
    AppProfile profile_;
    ScalingConfig config_;
    PolicyKind policy_;
    SimParams params_;
    const PriceBook& prices_;
    const WorkloadTrace& workload_;
    bool allow_spot_ = true;
    bool policy_enabled_ = true;

    EventQueue queue_;
    SimRng rng_;
    MarketState market_;
    VmStore store_;
    Provision provision_;
    std::vector<PsServer> servers_;
    std::vector<std::uint32_t> vm_generation_;         // lifecycle events
    std::vector<std::uint32_t> departure_generation_;  // request departure events
    std::vector<VmId> live_spots_;
    std::vector<std::string> type_names_;     // index -> name for price events
    std::vector<std::size_t> price_cursor_;   // next sample per type
    std::size_t bottleneck_dim_ = 0;

    // Dispatch: precomputed weighted-round-robin cycle over serving_.
    std::vector<VmId> serving_;  // online + draining instances, sorted by id
    std::vector<std::size_t> wrr_cycle_;
    std::size_t wrr_pos_ = 0;

    double now_ = 0.0;
    ResourceVector required_;  // current R estimate
    long long arrivals_in_window_ = 0;
    double last_sample_time_ = 0.0;

    // Workload cursor.
    std::size_t workload_index_ = 0;
    long long workload_sub_ = 0;
    long long scaled_count_ = 0;
    std::optional<double> next_arrival_time();

    // Shortfall accounting.
    double shortfall_segment_start_ = 0.0;
    bool in_shortfall_ = false;
    ResourceVector serving_nominal_;

    ExperimentResult result_;
};

}  // namespace spotsim
