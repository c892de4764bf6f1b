#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>

#include "spotsim/policy.hpp"

#include "planner_oracle.hpp"

using namespace spotsim;

namespace {

Catalog small_catalog() {
    return Catalog({
        {"a.small", ResourceVector{1.0}, 0.05, true},
        {"b.medium", ResourceVector{2.0}, 0.09, true},
        {"c.large", ResourceVector{4.0}, 0.16, true},
        {"d.xlarge", ResourceVector{8.0}, 0.30, true},
        {"od.type", ResourceVector{7.0}, 0.105, true},
    });
}

ScalingConfig make_config(int f, double share, int max_groups,
                          BiddingStrategy strategy = BiddingStrategy::kTruthful) {
    ScalingConfig config;
    config.f = f;
    config.on_demand_share = share;
    config.max_groups = max_groups;
    config.bidding_strategy = strategy;
    config.margin_policy = MarginPolicy{0.10, 0.25, 3, MarginMode::kStatic};
    config.on_demand_type = "od.type";
    return config;
}

MarketState make_market(const Catalog& catalog, const std::vector<double>& prices) {
    MarketState market;
    std::size_t i = 0;
    for (const auto& t : catalog.types()) market.set_price(t.name, prices[i++]);
    return market;
}


}  // namespace

TEST_CASE("baseline cost is the on-demand instance count times price") {
    Catalog catalog = small_catalog();
    const InstanceType& od = catalog.at("od.type");
    CHECK(on_demand_baseline_cost(ResourceVector{0.0}, od, 0.0) == doctest::Approx(0.0));
    // exactly 5 instances' effective capacity
    CHECK(on_demand_baseline_cost(ResourceVector{35.0}, od, 0.0) == doctest::Approx(0.525));
    // 5.1 instances' worth rounds up to 6
    CHECK(on_demand_baseline_cost(ResourceVector{35.7}, od, 0.0) == doctest::Approx(0.63));
}

TEST_CASE("truthful bid spreads the on-demand budget over spot instances") {
    CHECK(truthful_bid(1.0, 0.0, 2, 5) == doctest::Approx(0.10));
    CHECK(truthful_bid(1.0, 1.0, 2, 5) == doctest::Approx(0.0));
    CHECK_THROWS(truthful_bid(1.0, 0.0, 2, 0));

    // cost-bound identity: sum over groups of n_q * tb equals the spot budget
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> cost_dist(0.1, 10.0);
    for (int iter = 0; iter < 300; ++iter) {
        double c_o = cost_dist(rng);
        double r_o_cost = cost_dist(rng) * 0.05;
        int s = 1 + static_cast<int>(rng() % 6);
        double total = 0.0;
        for (int g = 0; g < s; ++g) {
            int n_q = 1 + static_cast<int>(rng() % 9);
            total += n_q * truthful_bid(c_o, r_o_cost, s, n_q);
        }
        CHECK(total == doctest::Approx(c_o - r_o_cost).epsilon(1e-9));
    }
}

TEST_CASE("place_bid follows the strategy") {
    Catalog catalog = small_catalog();
    CHECK(place_bid(catalog.at("a.small"), BiddingStrategy::kTruthful, 0.031) == doctest::Approx(0.031));
    CHECK(place_bid(catalog.at("od.type"), BiddingStrategy::kOnDemandPrice, 0.031) ==
          doctest::Approx(0.105));
    CHECK_THROWS(place_bid(catalog.at("a.small"), BiddingStrategy::kTruthful, 0.0));
}

TEST_CASE("find_provision_given_on_demand respects bounds and retention") {
    Catalog catalog = small_catalog();
    ScalingConfig config = make_config(1, 0.0, 2);
    MarketState market = make_market(catalog, {0.01, 0.018, 0.04, 0.08, 0.02});

    PlannerContext ctx;
    ctx.catalog = &catalog;
    ctx.config = &config;
    ctx.market = &market;
    ctx.required = ResourceVector{20.0};
    ctx.on_demand_count = 0;

    SUBCASE("infeasible when f + 1 exceeds the group budget") {
        config.f = 2;
        config.max_groups = 2;
        CHECK_FALSE(find_provision_given_on_demand(0, ctx).has_value());
    }

    SUBCASE("picks the cheapest eligible pair for an empty current set") {
        // prices low enough that every truthful bid beats the market
        market = make_market(catalog, {0.004, 0.008, 0.018, 0.04, 0.02});
        auto plan = find_provision_given_on_demand(0, ctx);
        REQUIRE(plan.has_value());
        CHECK(plan->groups.size() == 2);
        CHECK(plan->mode == ProvisionMode::kSpot);
        // each group must carry the full spot share at f=1, s=2
        for (const auto& g : plan->groups) {
            CHECK(g.quota_share[0] == doctest::Approx(20.0));
        }
        // the two cheapest by added cost: od.type (4 x 0.02), a.small (27 x 0.004)
        CHECK(plan->group_types() == std::vector<std::string>{"a.small", "od.type"});
    }

    SUBCASE("a current group is retained even when its market price is high") {
        market.set_price("d.xlarge", 10.0);  // far above any truthful bid
        ctx.current_groups = {"d.xlarge"};
        auto plan = find_provision_given_on_demand(0, ctx);
        REQUIRE(plan.has_value());
        auto names = plan->group_types();
        CHECK(std::find(names.begin(), names.end(), "d.xlarge") != names.end());
    }
}

TEST_CASE("scale_up falls back to on-demand when no spot group is biddable") {
    Catalog catalog = small_catalog();
    ScalingConfig config = make_config(1, 0.0, 3);
    // market prices far above every truthful bid
    MarketState market = make_market(catalog, {9.0, 9.0, 9.0, 9.0, 9.0});

    PlannerContext ctx;
    ctx.catalog = &catalog;
    ctx.config = &config;
    ctx.market = &market;
    ctx.required = ResourceVector{20.0};
    ctx.on_demand_count = 1;

    ProvisionPlan plan = scale_up(ctx);
    CHECK(plan.mode == ProvisionMode::kOnDemand);
    CHECK(plan.on_demand_count == num_instances(ResourceVector{20.0}, catalog.at("od.type"), 0.25));
    CHECK(plan.groups.empty());
}

TEST_CASE("scale_up is idempotent on its own fixed point") {
    Catalog catalog = small_catalog();
    ScalingConfig config = make_config(1, 0.0, 3);
    MarketState market = make_market(catalog, {0.012, 0.02, 0.045, 0.09, 0.025});

    PlannerContext ctx;
    ctx.catalog = &catalog;
    ctx.config = &config;
    ctx.market = &market;
    ctx.required = ResourceVector{18.0};
    ctx.on_demand_count = 0;

    ProvisionPlan first = scale_up(ctx);
    REQUIRE(first.mode == ProvisionMode::kSpot);
    ctx.current_groups = first.group_types();
    ctx.on_demand_count = first.on_demand_count;
    ctx.mode = ProvisionMode::kSpot;
    ProvisionPlan second = scale_up(ctx);
    CHECK(second.group_types() == first.group_types());
    CHECK(second.on_demand_count == first.on_demand_count);
    CHECK(second.hourly_cost_estimate == doctest::Approx(first.hourly_cost_estimate));
}

TEST_CASE("scale_up grows monotonically and matches the exhaustive oracle") {
    Catalog catalog = small_catalog();
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> price_dist(0.002, 0.4);
    std::uniform_real_distribution<double> r_dist(1.0, 60.0);

    for (int iter = 0; iter < 300; ++iter) {
        int f = static_cast<int>(rng() % 3);
        int max_groups = f + 1 + static_cast<int>(rng() % 3);
        double share = (iter % 4) * 0.15;
        ScalingConfig config = make_config(f, share, std::min(max_groups, 4));
        MarketState market = make_market(
            catalog, {price_dist(rng), price_dist(rng), price_dist(rng), price_dist(rng), price_dist(rng)});

        PlannerContext ctx;
        ctx.catalog = &catalog;
        ctx.config = &config;
        ctx.market = &market;
        ctx.required = ResourceVector{r_dist(rng)};
        ctx.on_demand_count = static_cast<int>(rng() % 3);
        ctx.mode = ProvisionMode::kSpot;
        std::vector<std::string> pool{"a.small", "b.medium", "c.large", "d.xlarge"};
        int current = static_cast<int>(rng() % std::min<std::size_t>(config.max_groups + 1, 3));
        for (int i = 0; i < current; ++i) ctx.current_groups.push_back(pool[i]);

        PlannerStats stats;
        ProvisionPlan plan = scale_up(ctx, &stats);
        ProvisionPlan expected = spotsim::testing::oracle_scale_up(ctx);

        CHECK(plan.hourly_cost_estimate == doctest::Approx(expected.hourly_cost_estimate).epsilon(1e-12));
        CHECK(plan.mode == expected.mode);
        CHECK(plan.on_demand_count == expected.on_demand_count);
        CHECK(plan.group_types() == expected.group_types());

        // monotone growth
        CHECK(plan.on_demand_count >= ctx.on_demand_count);
        auto names = plan.group_types();
        for (const auto& g : ctx.current_groups) {
            if (plan.mode == ProvisionMode::kSpot) {
                CHECK(std::find(names.begin(), names.end(), g) != names.end());
            }
        }

        // complexity guard: at most (N + 1) * S * |T| candidate evaluations
        const InstanceType& od = catalog.at("od.type");
        long long n_bound = num_instances(ctx.required, od, config.margin_for(ProvisionMode::kSpot)) + 1;
        CHECK(stats.candidate_visits <= n_bound * config.max_groups * 5);
    }
}

TEST_CASE("spot plans instantiated at num(Q, type) are safe by construction") {
    Catalog catalog = small_catalog();
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> price_dist(0.002, 0.05);
    std::uniform_real_distribution<double> r_dist(5.0, 50.0);
    for (int iter = 0; iter < 200; ++iter) {
        int f = static_cast<int>(rng() % 2);
        ScalingConfig config = make_config(f, 0.2, 3);
        MarketState market = make_market(
            catalog, {price_dist(rng), price_dist(rng), price_dist(rng), price_dist(rng), price_dist(rng)});
        PlannerContext ctx;
        ctx.catalog = &catalog;
        ctx.config = &config;
        ctx.market = &market;
        ctx.required = ResourceVector{r_dist(rng)};
        ctx.on_demand_count = 0;
        ProvisionPlan plan = scale_up(ctx);
        if (plan.mode != ProvisionMode::kSpot) continue;

        VmStore store;
        Provision p;
        p.mode = ProvisionMode::kSpot;
        for (const auto& g : plan.groups) {
            SpotGroup group{g.type_name, g.quota_share, g.truthful_bid, {}};
            for (int i = 0; i < g.instance_count; ++i) {
                VmInstance& vm = store.create();
                vm.type_name = g.type_name;
                vm.role = VmRole::kSpot;
                vm.state = VmState::kOnline;
                group.members.push_back(vm.id);
            }
            p.add_group_sorted(std::move(group));
        }
        for (int i = 0; i < plan.on_demand_count; ++i) {
            VmInstance& vm = store.create();
            vm.type_name = "od.type";
            vm.role = VmRole::kOnDemand;
            vm.state = VmState::kOnline;
            p.on_demand_pool.push_back(vm.id);
        }
        CHECK(is_safe(p, store, catalog, ctx.required, config, config.margin_for(ProvisionMode::kSpot)));
    }
}

TEST_CASE("on-demand hour end keeps the instance at the floor") {
    Catalog catalog = small_catalog();
    ScalingConfig config = make_config(1, 0.4, 3);
    MarketState market = make_market(catalog, {0.01, 0.018, 0.04, 0.08, 0.02});
    PlannerContext ctx;
    ctx.catalog = &catalog;
    ctx.config = &config;
    ctx.market = &market;
    ctx.required = ResourceVector{20.0};  // floor = num(8.0 / 5.95) = 2 on-demand
    ctx.on_demand_count = 2;
    ctx.mode = ProvisionMode::kSpot;
    HourEndOutcome outcome = on_demand_hour_end(ctx);
    CHECK_FALSE(outcome.release);
    CHECK_FALSE(outcome.plan.has_value());
}

TEST_CASE("on-demand hour end releases into spot mode when cheaper") {
    Catalog catalog = small_catalog();
    ScalingConfig config = make_config(1, 0.0, 3);
    MarketState market = make_market(catalog, {0.001, 0.002, 0.004, 0.008, 0.002});
    PlannerContext ctx;
    ctx.catalog = &catalog;
    ctx.config = &config;
    ctx.market = &market;
    ctx.required = ResourceVector{20.0};
    ctx.on_demand_count = 4;
    ctx.mode = ProvisionMode::kOnDemand;
    HourEndOutcome outcome = on_demand_hour_end(ctx);
    CHECK(outcome.release);
    REQUIRE(outcome.plan.has_value());
    CHECK(outcome.plan->mode == ProvisionMode::kSpot);
    CHECK(outcome.plan->on_demand_count == 3);
}

TEST_CASE("on-demand hour end stays on-demand when spot is infeasible") {
    Catalog catalog = small_catalog();
    ScalingConfig config = make_config(1, 0.0, 3);
    MarketState market = make_market(catalog, {9.0, 9.0, 9.0, 9.0, 9.0});
    PlannerContext ctx;
    ctx.catalog = &catalog;
    ctx.config = &config;
    ctx.market = &market;
    ctx.required = ResourceVector{20.0};  // needs 4 on-demand at margin 0.25
    ctx.mode = ProvisionMode::kOnDemand;

    ctx.on_demand_count = 5;  // redundant instance: released
    HourEndOutcome outcome = on_demand_hour_end(ctx);
    CHECK(outcome.release);
    CHECK_FALSE(outcome.plan.has_value());

    ctx.on_demand_count = 4;  // still needed: kept
    outcome = on_demand_hour_end(ctx);
    CHECK_FALSE(outcome.release);
}

TEST_CASE("spot mode hour end picks the cheaper of keep and release, ties keep") {
    Catalog catalog = small_catalog();
    ScalingConfig config = make_config(0, 0.0, 1);
    MarketState market = make_market(catalog, {0.01, 0.018, 0.04, 0.08, 0.02});
    PlannerContext ctx;
    ctx.catalog = &catalog;
    ctx.config = &config;
    ctx.market = &market;
    ctx.required = ResourceVector{20.0};
    ctx.mode = ProvisionMode::kSpot;
    ctx.current_groups = {"a.small"};
    ctx.on_demand_count = 2;
    HourEndOutcome outcome = on_demand_hour_end(ctx);
    // spot is far cheaper per unit: releasing the on-demand instance wins
    CHECK(outcome.release);
    REQUIRE(outcome.plan.has_value());
    CHECK(outcome.plan->on_demand_count == 1);
}

TEST_CASE("spot hour end: orphans retire, members follow quota") {
    Catalog catalog = small_catalog();
    ScalingConfig config = make_config(1, 0.0, 3);
    double margin = 0.0;
    VmStore store;

    Provision p;
    p.mode = ProvisionMode::kSpot;
    SpotGroup group{"a.small", ResourceVector{2.0}, 0.05, {}};
    for (int i = 0; i < 3; ++i) {
        VmInstance& vm = store.create();
        vm.type_name = "a.small";
        vm.role = VmRole::kSpot;
        vm.state = VmState::kOnline;
        group.members.push_back(vm.id);
    }
    p.add_group_sorted(group);

    // over quota by one: shutdown
    auto d = spot_hour_end(store[p.spot_groups[0].members[2]], p, store, catalog, margin);
    CHECK(d.action == SpotHourEndAction::kShutdown);

    // exactly at quota after one leaves: keep
    p.spot_groups[0].members.pop_back();
    d = spot_hour_end(store[p.spot_groups[0].members[1]], p, store, catalog, margin);
    CHECK(d.action == SpotHourEndAction::kKeep);

    // an orphan in the queue always retires at its hour end
    VmInstance& orphan = store.create();
    orphan.type_name = "b.medium";
    orphan.role = VmRole::kSpot;
    orphan.state = VmState::kOnline;
    p.orphan_queue.push_back(orphan.id);
    d = spot_hour_end(orphan, p, store, catalog, margin);
    CHECK(d.action == SpotHourEndAction::kShutdown);
}

TEST_CASE("spot hour end swaps a foreign member for native replacements") {
    Catalog catalog = small_catalog();
    double margin = 0.0;
    VmStore store;

    // a.small group with quota 4, two native members and one b.medium foreign
    // member standing in for two smalls
    Provision p;
    p.mode = ProvisionMode::kSpot;
    SpotGroup group{"a.small", ResourceVector{4.0}, 0.05, {}};
    for (int i = 0; i < 2; ++i) {
        VmInstance& vm = store.create();
        vm.type_name = "a.small";
        vm.role = VmRole::kSpot;
        vm.state = VmState::kOnline;
        group.members.push_back(vm.id);
    }
    VmInstance& foreign = store.create();
    foreign.type_name = "b.medium";
    foreign.role = VmRole::kSpot;
    foreign.state = VmState::kOnline;
    group.members.push_back(foreign.id);
    p.add_group_sorted(group);

    auto d = spot_hour_end(foreign, p, store, catalog, margin);
    CHECK(d.action == SpotHourEndAction::kShutdownAndReplace);
    CHECK(d.replacement_count == 2);
}

TEST_CASE("group removal sweep evicts overpriced groups and proposes replacements") {
    Catalog catalog = small_catalog();
    ScalingConfig config = make_config(0, 0.0, 2);
    config.replacement_hysteresis = 0.05;
    MarketState market = make_market(catalog, {0.01, 0.018, 0.04, 0.08, 0.02});

    VmStore store;
    Provision p;
    p.mode = ProvisionMode::kSpot;
    SpotGroup group{"b.medium", ResourceVector{10.0}, 0.03, {}};
    for (int i = 0; i < 5; ++i) {
        VmInstance& vm = store.create();
        vm.type_name = "b.medium";
        vm.role = VmRole::kSpot;
        vm.state = VmState::kOnline;
        group.members.push_back(vm.id);
    }
    p.add_group_sorted(group);

    PlannerContext ctx;
    ctx.catalog = &catalog;
    ctx.config = &config;
    ctx.market = &market;
    ctx.required = ResourceVector{10.0};
    ctx.on_demand_count = 0;
    ctx.mode = ProvisionMode::kSpot;
    ctx.current_groups = {"b.medium"};

    SUBCASE("no action while the group stays economical") {
        market.set_price("a.small", 0.0089);  // within 5% of b.medium per capacity
        market.set_price("c.large", 0.05);
        market.set_price("d.xlarge", 0.1);
        market.set_price("od.type", 0.2);
        auto actions = group_removal_sweep(p, ctx, 0);
        CHECK(actions.empty());
    }

    SUBCASE("market above the truthful bid forces removal") {
        market.set_price("b.medium", 0.05);  // tb = 0.03
        auto actions = group_removal_sweep(p, ctx, 0);
        REQUIRE(actions.size() == 1);
        CHECK(actions[0].kind == SweepAction::Kind::kRemoveOverpriced);
        CHECK(actions[0].group_type == "b.medium");
    }

    SUBCASE("a clearly cheaper unchosen type triggers replacement") {
        market.set_price("a.small", 0.004);  // half of b.medium per capacity
        auto actions = group_removal_sweep(p, ctx, 0);
        REQUIRE(actions.size() == 1);
        CHECK(actions[0].kind == SweepAction::Kind::kReplace);
        CHECK(actions[0].group_type == "b.medium");
    }
}
