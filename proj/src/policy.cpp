#include "spotsim/policy.hpp"

#include <algorithm>
#include <sstream>

namespace spotsim {

namespace {

std::vector<const InstanceType*> spot_types(const Catalog& catalog) {
    std::vector<const InstanceType*> out;
    for (const auto& t : catalog.types()) {
        if (t.is_spot_eligible) out.push_back(&t);
    }
    return out;
}

ProvisionPlan on_demand_fallback(const PlannerContext& ctx) {
    const InstanceType& od = ctx.catalog->at(ctx.config->on_demand_type);
    double margin = ctx.config->margin_for(ProvisionMode::kOnDemand);
    int n = std::max(ctx.on_demand_count, num_instances(ctx.required, od, margin));
    ProvisionPlan plan;
    plan.mode = ProvisionMode::kOnDemand;
    plan.on_demand_count = n;
    plan.hourly_cost_estimate = plan_cost_estimate(n, od, {}, *ctx.market);
    return plan;
}

}  // namespace

int ProvisionPlan::total_instances() const {
    int total = on_demand_count;
    for (const auto& g : groups) total += g.instance_count;
    return total;
}

std::vector<std::string> ProvisionPlan::group_types() const {
    std::vector<std::string> names;
    names.reserve(groups.size());
    for (const auto& g : groups) names.push_back(g.type_name);
    return names;
}

std::string ProvisionPlan::describe() const {
    std::ostringstream out;
    out << (mode == ProvisionMode::kSpot ? "spot" : "on-demand") << " od=" << on_demand_count;
    for (const auto& g : groups) {
        out << " " << g.type_name << "x" << g.instance_count << "@" << g.bid_price;
    }
    return out.str();
}

double on_demand_baseline_cost(const ResourceVector& required, const InstanceType& od_type, double margin) {
    return num_instances(required, od_type, margin) * od_type.on_demand_price;
}

double truthful_bid(double baseline_cost, double on_demand_cost, int group_count, int instances_per_group) {
    if (group_count < 1) throw std::invalid_argument("truthful_bid: group count must be >= 1");
    if (instances_per_group < 1) {
        throw std::invalid_argument("truthful_bid: group needs at least one instance");
    }
    return (baseline_cost - on_demand_cost) / (static_cast<double>(group_count) * instances_per_group);
}

double place_bid(const InstanceType& type, BiddingStrategy strategy, double truthful_bid_value) {
    if (truthful_bid_value <= 0.0) throw std::invalid_argument("place_bid: truthful bid must be positive");
    return strategy == BiddingStrategy::kTruthful ? truthful_bid_value : type.on_demand_price;
}

bool plan_better(const ProvisionPlan& a, const ProvisionPlan& b) {
    if (a.hourly_cost_estimate != b.hourly_cost_estimate) {
        return a.hourly_cost_estimate < b.hourly_cost_estimate;
    }
    if (a.total_instances() != b.total_instances()) return a.total_instances() < b.total_instances();
    if (a.groups.size() != b.groups.size()) return a.groups.size() < b.groups.size();
    auto an = a.group_types();
    auto bn = b.group_types();
    if (an != bn) return an < bn;
    return a.on_demand_count < b.on_demand_count;
}

double plan_cost_estimate(int on_demand_count, const InstanceType& od_type,
                          const std::vector<std::pair<std::string, int>>& group_counts,
                          const MarketState& market) {
    double cost = on_demand_count * od_type.on_demand_price;
    for (const auto& [type_name, count] : group_counts) {
        cost += count * market.current_price(type_name);
    }
    return cost;
}

std::optional<ProvisionPlan> find_provision_given_on_demand(int n, const PlannerContext& ctx,
                                                            PlannerStats* stats) {
    const Catalog& catalog = *ctx.catalog;
    const ScalingConfig& config = *ctx.config;
    const InstanceType& od = catalog.at(config.on_demand_type);
    const double margin_spot = config.margin_for(ProvisionMode::kSpot);
    const double margin_od = config.margin_for(ProvisionMode::kOnDemand);
    const double baseline = on_demand_baseline_cost(ctx.required, od, margin_od);

    const auto types = spot_types(catalog);
    const int min_groups = std::max(static_cast<int>(ctx.current_groups.size()), config.f + 1);
    const int max_groups = std::min(static_cast<int>(types.size()), config.max_groups);
    if (max_groups < min_groups) return std::nullopt;

    const ResourceVector r_o = effective_capacity(od, margin_spot).scaled(static_cast<double>(n));
    const double r_o_cost = n * od.on_demand_price;

    std::optional<ProvisionPlan> best;
    for (int s = min_groups; s <= max_groups; ++s) {
        const ResourceVector q = quota(ctx.required, r_o, s, config.f);
        if (q.is_zero()) continue;  // on-demand capacity already covers R

        ProvisionPlan plan;
        plan.mode = ProvisionMode::kSpot;
        plan.on_demand_count = n;
        bool feasible = true;
        for (const std::string& name : ctx.current_groups) {
            if (stats != nullptr) ++stats->candidate_visits;
            const InstanceType& t = catalog.at(name);
            int count = num_instances(q, t, margin_spot);
            if (count < 1) {  // quota negligibly small: no spot plan at this s
                feasible = false;
                break;
            }
            double tb = truthful_bid(baseline, r_o_cost, s, count);
            plan.groups.push_back({name, count, q, tb, place_bid(t, config.bidding_strategy, tb)});
        }
        if (!feasible) continue;

        struct Candidate {
            const InstanceType* type;
            int count;
            double tb;
            double added_cost;
        };
        std::vector<Candidate> eligible;
        for (const InstanceType* t : types) {
            bool chosen = std::find(ctx.current_groups.begin(), ctx.current_groups.end(), t->name) !=
                          ctx.current_groups.end();
            if (chosen) continue;
            if (stats != nullptr) ++stats->candidate_visits;
            int count = num_instances(q, *t, margin_spot);
            if (count < 1) continue;
            double tb = truthful_bid(baseline, r_o_cost, s, count);
            double mp = ctx.market->current_price(t->name);
            if (tb > mp) eligible.push_back({t, count, tb, count * mp});
        }

        const int k = s - static_cast<int>(ctx.current_groups.size());
        if (static_cast<int>(eligible.size()) < k) continue;
        std::sort(eligible.begin(), eligible.end(), [](const Candidate& a, const Candidate& b) {
            if (a.added_cost != b.added_cost) return a.added_cost < b.added_cost;
            if (a.count != b.count) return a.count < b.count;
            return a.type->name < b.type->name;
        });
        for (int i = 0; i < k; ++i) {
            const Candidate& c = eligible[i];
            plan.groups.push_back(
                {c.type->name, c.count, q, c.tb, place_bid(*c.type, config.bidding_strategy, c.tb)});
        }

        std::sort(plan.groups.begin(), plan.groups.end(),
                  [](const PlanGroup& a, const PlanGroup& b) { return a.type_name < b.type_name; });
        std::vector<std::pair<std::string, int>> counts;
        for (const auto& g : plan.groups) counts.emplace_back(g.type_name, g.instance_count);
        plan.hourly_cost_estimate = plan_cost_estimate(n, od, counts, *ctx.market);

        if (!best || plan_better(plan, *best)) best = plan;
    }
    return best;
}

ProvisionPlan scale_up(const PlannerContext& ctx, PlannerStats* stats) {
    const InstanceType& od = ctx.catalog->at(ctx.config->on_demand_type);
    if (ctx.allow_spot) {
        const double margin_spot = ctx.config->margin_for(ProvisionMode::kSpot);
        const ResourceVector od_floor = ctx.required.scaled(ctx.config->on_demand_share);
        const int min_n = std::max(ctx.on_demand_count, num_instances(od_floor, od, margin_spot));
        const int max_n = num_instances(ctx.required, od, margin_spot);

        std::optional<ProvisionPlan> best;
        for (int n = min_n; n <= max_n; ++n) {
            auto candidate = find_provision_given_on_demand(n, ctx, stats);
            if (candidate && (!best || plan_better(*candidate, *best))) best = candidate;
        }
        if (best) return *best;
    }
    return on_demand_fallback(ctx);
}

HourEndOutcome on_demand_hour_end(const PlannerContext& ctx, PlannerStats* stats) {
    const ScalingConfig& config = *ctx.config;
    const InstanceType& od = ctx.catalog->at(config.on_demand_type);
    const double margin_spot = config.margin_for(ProvisionMode::kSpot);
    const double margin_od = config.margin_for(ProvisionMode::kOnDemand);
    const int n_c = ctx.on_demand_count;

    const ResourceVector od_floor = ctx.required.scaled(config.on_demand_share);
    if (n_c <= num_instances(od_floor, od, margin_spot)) {
        return {};  // at the on-demand floor: the instance renews
    }

    std::optional<ProvisionPlan> p1;
    std::optional<ProvisionPlan> p2;
    if (ctx.allow_spot) {
        p1 = find_provision_given_on_demand(n_c, ctx, stats);
        PlannerContext without = ctx;
        without.on_demand_count = n_c - 1;
        p2 = find_provision_given_on_demand(n_c - 1, without, stats);
    }

    if (ctx.mode == ProvisionMode::kOnDemand) {
        if (p2) return {true, p2};  // switch to spot mode without this instance
        // Stay on-demand; release the instance only when it is redundant.
        bool release = n_c - 1 >= num_instances(ctx.required, od, margin_od);
        return {release, std::nullopt};
    }

    if (p1 && p2) {
        if (plan_better(*p2, *p1)) return {true, p2};
        return {false, p1};  // ties keep the instance
    }
    if (p1) return {false, p1};
    if (p2) return {true, p2};

    // Neither found: back to a pure on-demand provision.
    ProvisionPlan od_plan;
    od_plan.mode = ProvisionMode::kOnDemand;
    int n_target = num_instances(ctx.required, od, margin_od);
    bool release = n_c - 1 >= n_target;
    od_plan.on_demand_count = release ? n_c - 1 : n_c;
    od_plan.hourly_cost_estimate = plan_cost_estimate(od_plan.on_demand_count, od, {}, *ctx.market);
    return {release, od_plan};
}

SpotHourEndDecision spot_hour_end(const VmInstance& vm, const Provision& provision, const VmStore& store,
                                  const Catalog& catalog, double margin) {
    if (provision.in_orphan_queue(vm.id)) return {SpotHourEndAction::kShutdown, 0};
    const SpotGroup* host = provision.group_of(vm.id);
    if (host == nullptr) return {SpotHourEndAction::kShutdown, 0};

    ResourceVector without = group_capacity(*host, store, catalog, margin)
                                 .minus_clamped(effective_capacity(catalog.at(vm.type_name), margin));
    if (vm.type_name == host->type_name) {
        if (without.covers(host->quota)) return {SpotHourEndAction::kShutdown, 0};
        return {SpotHourEndAction::kKeep, 0};
    }
    // Foreign member: it always leaves at its hour end; launch enough native
    // instances to keep the group at quota.
    ResourceVector deficit = host->quota.minus_clamped(without);
    int count = num_instances(deficit, catalog.at(host->type_name), margin);
    return {SpotHourEndAction::kShutdownAndReplace, count};
}

std::vector<SweepAction> group_removal_sweep(const Provision& provision, const PlannerContext& ctx,
                                             std::size_t bottleneck_dim) {
    const Catalog& catalog = *ctx.catalog;
    const ScalingConfig& config = *ctx.config;
    const double margin = config.margin_for(ProvisionMode::kSpot);
    std::vector<SweepAction> actions;
    if (provision.mode != ProvisionMode::kSpot) return actions;

    // Cheapest unchosen per-capacity rate, used for the replacement check.
    auto per_capacity = [&](const InstanceType& t) {
        return ctx.market->current_price(t.name) / effective_capacity(t, margin)[bottleneck_dim];
    };
    const InstanceType* best_unchosen = nullptr;
    for (const auto& t : catalog.types()) {
        if (!t.is_spot_eligible) continue;
        if (provision.find_group(t.name) != nullptr) continue;
        if (best_unchosen == nullptr || per_capacity(t) < per_capacity(*best_unchosen)) best_unchosen = &t;
    }

    const InstanceType& od = catalog.at(config.on_demand_type);
    const double margin_od = config.margin_for(ProvisionMode::kOnDemand);
    const double baseline = on_demand_baseline_cost(ctx.required, od, margin_od);
    const int n = ctx.on_demand_count;
    const ResourceVector r_o = effective_capacity(od, margin).scaled(static_cast<double>(n));
    const double r_o_cost = n * od.on_demand_price;
    const int s = static_cast<int>(provision.spot_groups.size());

    for (const auto& g : provision.spot_groups) {
        double mp = ctx.market->current_price(g.type_name);
        if (mp > g.truthful_bid) {
            actions.push_back({SweepAction::Kind::kRemoveOverpriced, g.type_name});
            continue;
        }
        if (best_unchosen == nullptr || s <= config.f) continue;
        // Replace only when the candidate undercuts the incumbent beyond the
        // hysteresis threshold and could actually be acquired at its truthful bid.
        double incumbent_rate = per_capacity(catalog.at(g.type_name));
        double candidate_rate = per_capacity(*best_unchosen);
        if (candidate_rate >= incumbent_rate * (1.0 - config.replacement_hysteresis)) continue;
        ResourceVector q = quota(ctx.required, r_o, s, config.f);
        if (q.is_zero()) continue;
        int count = num_instances(q, *best_unchosen, margin);
        if (count < 1) continue;
        double tb = truthful_bid(baseline, r_o_cost, s, count);
        if (tb > ctx.market->current_price(best_unchosen->name)) {
            actions.push_back({SweepAction::Kind::kReplace, g.type_name});
        }
    }
    return actions;
}

}  // namespace spotsim
