#pragma once

// Decision logic: baseline cost, truthful bids, the scale-up search, hourly
// scale-down for on-demand and spot instances, and the periodic spot-group
// removal sweep.

#include <optional>
#include <string>
#include <vector>

#include "spotsim/market.hpp"
#include "spotsim/provision.hpp"
#include "spotsim/resources.hpp"

namespace spotsim {

struct PlanGroup {
    std::string type_name;
    int instance_count = 0;      // num(Q, type) under the plan's margin
    ResourceVector quota_share;  // Q
    double truthful_bid = 0.0;
    double bid_price = 0.0;      // per the active bidding strategy
};

struct ProvisionPlan {
    ProvisionMode mode = ProvisionMode::kOnDemand;
    int on_demand_count = 0;
    std::vector<PlanGroup> groups;  // sorted by type name
    double hourly_cost_estimate = 0.0;

    int total_instances() const;
    std::vector<std::string> group_types() const;
    std::string describe() const;
};

// Counts candidate-group evaluations; the search visits at most
// (N + 1) * S * |T| of them where N = num(R, vm_o).
struct PlannerStats {
    long long candidate_visits = 0;
};

// Immutable snapshot the planner works on. on_demand_count and current_groups
// describe the provision being extended (pending instances included, draining
// ones excluded).
struct PlannerContext {
    const Catalog* catalog = nullptr;
    const ScalingConfig* config = nullptr;
    const MarketState* market = nullptr;
    ResourceVector required;  // R
    int on_demand_count = 0;  // n_c
    std::vector<std::string> current_groups;  // g_c
    ProvisionMode mode = ProvisionMode::kOnDemand;
    bool allow_spot = true;  // false restricts the system to On-Demand Mode
};

// Hourly cost if the application were provisioned purely on-demand.
double on_demand_baseline_cost(const ResourceVector& required, const InstanceType& od_type, double margin);

// Per-instance bid at which the provision's total hourly cost equals the
// on-demand baseline when every market price sits at its truthful bid.
// Throws when the group needs no instances.
double truthful_bid(double baseline_cost, double on_demand_cost, int group_count, int instances_per_group);

double place_bid(const InstanceType& type, BiddingStrategy strategy, double truthful_bid_value);

// Strict total order on plans: estimate, then fewer instances, fewer groups,
// lexicographic group names, fewer on-demand.
bool plan_better(const ProvisionPlan& a, const ProvisionPlan& b);

// Cost estimator shared with the test oracles: on-demand cost plus, per group
// in name order, instance count times current market price.
double plan_cost_estimate(int on_demand_count, const InstanceType& od_type,
                          const std::vector<std::pair<std::string, int>>& group_counts,
                          const MarketState& market);

// Best provision for a fixed number of on-demand instances: retains current
// groups, adds the cheapest eligible new groups for each feasible group count.
std::optional<ProvisionPlan> find_provision_given_on_demand(int n, const PlannerContext& ctx,
                                                            PlannerStats* stats = nullptr);

// Scale-up search. Never reduces the on-demand count and never drops a
// current group; falls back to a pure on-demand provision when no spot
// candidate exists.
ProvisionPlan scale_up(const PlannerContext& ctx, PlannerStats* stats = nullptr);

struct HourEndOutcome {
    bool release = false;                // shut the instance down at its hour mark
    std::optional<ProvisionPlan> plan;   // provision to apply, if any change
};

// Decision when one on-demand instance's billing hour is about to end.
HourEndOutcome on_demand_hour_end(const PlannerContext& ctx, PlannerStats* stats = nullptr);

enum class SpotHourEndAction { kKeep, kShutdown, kShutdownAndReplace };

struct SpotHourEndDecision {
    SpotHourEndAction action = SpotHourEndAction::kKeep;
    int replacement_count = 0;  // instances of the host group's type
};

// Decision when a spot instance's billing hour is about to end: orphans shut
// down, native members stay only while their group needs them, foreign
// members are swapped for instances of the host group's type.
SpotHourEndDecision spot_hour_end(const VmInstance& vm, const Provision& provision, const VmStore& store,
                                  const Catalog& catalog, double margin);

struct SweepAction {
    enum class Kind { kRemoveOverpriced, kReplace } kind = Kind::kRemoveOverpriced;
    std::string group_type;
};

// Periodic inspection of chosen groups: groups whose market price exceeds
// their truthful bid are removed; groups undercut by an unchosen type beyond
// the hysteresis threshold are replaced. Members become orphans and a
// scale-up pass restores safety.
std::vector<SweepAction> group_removal_sweep(const Provision& provision, const PlannerContext& ctx,
                                             std::size_t bottleneck_dim);

}  // namespace spotsim
