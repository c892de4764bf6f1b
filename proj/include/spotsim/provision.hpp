#pragma once

// Provision state machine: spot groups with quotas, orphan queue, operating
// mode and the safety predicate every policy has to preserve.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spotsim/resources.hpp"
#include "spotsim/vm.hpp"

namespace spotsim {

enum class ProvisionMode { kSpot, kOnDemand };

enum class BiddingStrategy { kTruthful, kOnDemandPrice };

struct ScalingConfig {
    int f = 1;                      // fault-tolerant level
    double on_demand_share = 0.0;   // O, minimum fraction of R on on-demand
    int max_groups = 4;             // S
    BiddingStrategy bidding_strategy = BiddingStrategy::kTruthful;
    MarginPolicy margin_policy;
    double removal_interval = 1800.0;  // seconds between group-removal sweeps
    double replacement_hysteresis = 0.05;
    std::string on_demand_type;

    void validate() const;

    // Margin applied to capacity arithmetic in the given mode. On-demand mode
    // always plans with the default margin; spot mode follows the policy.
    double margin_for(ProvisionMode mode) const;
};

// Capacity provisioned under one spot type. Members may temporarily include
// foreign-type instances adopted from the orphan queue.
struct SpotGroup {
    std::string type_name;
    ResourceVector quota;
    double truthful_bid = 0.0;
    std::vector<VmId> members;

    bool has_member(VmId id) const;
    void remove_member(VmId id);
};

// The target allocation. Every live instance is tracked in exactly one of the
// on-demand pool, one group's member list, or the orphan queue.
struct Provision {
    ProvisionMode mode = ProvisionMode::kOnDemand;
    std::vector<VmId> on_demand_pool;
    std::vector<SpotGroup> spot_groups;  // kept sorted by type name
    std::vector<VmId> orphan_queue;

    SpotGroup* find_group(const std::string& type_name);
    const SpotGroup* find_group(const std::string& type_name) const;
    SpotGroup* group_of(VmId id);
    // Group hosting the instance, or nullptr if it is an orphan / on-demand.
    const SpotGroup* group_of(VmId id) const;
    bool in_orphan_queue(VmId id) const;
    void remove_from_orphan_queue(VmId id);
    void add_group_sorted(SpotGroup group);
    void erase_group(const std::string& type_name);
    std::vector<std::string> group_types() const;

    void check_invariants() const;
};

// Eq. for the per-group quota share: (R - r_o) / (s - f), component-wise.
// Negative components are clamped to zero (on-demand capacity already covers
// that dimension). Throws when s <= f.
ResourceVector quota(const ResourceVector& required, const ResourceVector& on_demand_capacity,
                     int group_count, int fault_level);

// Summed effective capacity of the group's live members (pending instances
// count: they were planned and will arrive).
ResourceVector group_capacity(const SpotGroup& group, const VmStore& store, const Catalog& catalog,
                              double margin);

ResourceVector on_demand_capacity(const Provision& provision, const VmStore& store, const Catalog& catalog,
                                  double margin);

// Spot-mode safety: the on-demand pool covers its floor and every group's
// member capacity covers its quota. A group exactly at quota is safe.
bool is_safe(const Provision& provision, const VmStore& store, const Catalog& catalog,
             const ResourceVector& required, const ScalingConfig& config, double margin);

// Total effective capacity left after terminating every instance whose own
// type is in killed_types (foreign members die with their type, not their
// host group) and discarding the killed groups entirely.
ResourceVector surviving_capacity(const Provision& provision, const VmStore& store, const Catalog& catalog,
                                  const std::set<std::string>& killed_types, double margin);

// Move an orphan (from the queue or foreign membership in another group) into
// target_group. Throws if the orphan is already a native member of a group or
// the target group is already quota-satisfied.
void adopt_orphan(Provision& provision, const VmStore& store, const Catalog& catalog, VmId orphan,
                  SpotGroup& target_group, double margin);

// Text snapshot for golden-file regression tests: mode, on-demand count,
// per-group type/quota/members, orphan queue.
std::string provision_snapshot(const Provision& provision, const VmStore& store);

}  // namespace spotsim
