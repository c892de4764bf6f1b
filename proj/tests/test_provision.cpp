#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "spotsim/provision.hpp"

using namespace spotsim;

namespace {

// Small catalog mirroring the size relations used in the figures:
// one m1.medium equals two m1.small, one on-demand type above both.
Catalog test_catalog() {
    return Catalog({
        {"m1.small", ResourceVector{1.0}, 0.044, true},
        {"m1.medium", ResourceVector{2.0}, 0.087, true},
        {"m3.large", ResourceVector{4.0}, 0.175, true},
        {"c3.large", ResourceVector{7.0}, 0.105, true},
    });
}

ScalingConfig test_config(int f, double share, int max_groups) {
    ScalingConfig config;
    config.f = f;
    config.on_demand_share = share;
    config.max_groups = max_groups;
    config.margin_policy = MarginPolicy{0.10, 0.25, 3, MarginMode::kStatic};
    config.on_demand_type = "c3.large";
    return config;
}

VmId add_instance(VmStore& store, const std::string& type, VmState state = VmState::kOnline) {
    VmInstance& vm = store.create();
    vm.type_name = type;
    vm.role = VmRole::kSpot;
    vm.bid_price = 1.0;
    vm.state = state;
    return vm.id;
}

// Builds a provision with `counts[i]` native members in group i.
Provision build_provision(VmStore& store, const std::vector<std::pair<std::string, int>>& groups,
                          const ResourceVector& quota_each, int on_demand = 0) {
    Provision p;
    p.mode = ProvisionMode::kSpot;
    for (const auto& [type, count] : groups) {
        SpotGroup g{type, quota_each, 1.0, {}};
        for (int i = 0; i < count; ++i) g.members.push_back(add_instance(store, type));
        p.add_group_sorted(std::move(g));
    }
    for (int i = 0; i < on_demand; ++i) {
        VmInstance& vm = store.create();
        vm.type_name = "c3.large";
        vm.role = VmRole::kOnDemand;
        vm.state = VmState::kOnline;
        p.on_demand_pool.push_back(vm.id);
    }
    return p;
}

}  // namespace

TEST_CASE("quota splits the spot share across non-redundant groups") {
    ResourceVector q = quota(ResourceVector{100.0}, ResourceVector{0.0}, 2, 1);
    CHECK(q[0] == doctest::Approx(100.0));  // two groups, each carries full demand

    q = quota(ResourceVector{100.0}, ResourceVector{20.0}, 4, 1);
    CHECK(q[0] == doctest::Approx(80.0 / 3.0));

    q = quota(ResourceVector{100.0}, ResourceVector{100.0}, 3, 0);
    CHECK(q[0] == doctest::Approx(0.0));

    CHECK_THROWS(quota(ResourceVector{100.0}, ResourceVector{0.0}, 1, 1));
    CHECK_THROWS(quota(ResourceVector{100.0}, ResourceVector{0.0}, 2, 2));
}

TEST_CASE("quota identity: Q * (s - f) + r_o = R") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(0.0, 50.0);
    for (int iter = 0; iter < 300; ++iter) {
        double r_o = dist(rng);
        double extra = dist(rng);
        double r = r_o + extra;
        int f = static_cast<int>(rng() % 4);
        int s = f + 1 + static_cast<int>(rng() % 5);
        ResourceVector q = quota(ResourceVector{r}, ResourceVector{r_o}, s, f);
        CHECK(q[0] * (s - f) + r_o == doctest::Approx(r).epsilon(1e-9));
    }
}

TEST_CASE("is_safe accepts groups exactly at quota and rejects deficits") {
    Catalog catalog = test_catalog();
    VmStore store;
    // Two m1.small groups of 4, quota = 4 * eff(m1.small, 0.25) each.
    double margin = 0.25;
    ResourceVector quota_each = effective_capacity(catalog.at("m1.small"), margin).scaled(4.0);
    Provision p = build_provision(store, {{"m1.small", 4}, {"m1.medium", 2}}, quota_each);
    ScalingConfig config = test_config(1, 0.0, 4);

    ResourceVector required{3.0};
    CHECK(is_safe(p, store, catalog, required, config, margin));

    // Drop one member: group below quota.
    p.spot_groups[1].members.pop_back();
    CHECK_FALSE(is_safe(p, store, catalog, required, config, margin));

    p.mode = ProvisionMode::kOnDemand;
    CHECK_THROWS(is_safe(p, store, catalog, required, config, margin));
}

TEST_CASE("is_safe requires the on-demand floor") {
    Catalog catalog = test_catalog();
    VmStore store;
    double margin = 0.25;
    ResourceVector quota_each{1.0};
    Provision p = build_provision(store, {{"m1.small", 2}, {"m1.medium", 1}}, quota_each, 1);
    ScalingConfig config = test_config(1, 0.4, 4);

    // R * O = 4, one on-demand (eff 5.25) covers num(4)=1 instance's worth.
    CHECK(is_safe(p, store, catalog, ResourceVector{10.0}, config, margin));
    // R * O = 8 requires two on-demand instances.
    CHECK_FALSE(is_safe(p, store, catalog, ResourceVector{20.0}, config, margin));
}

TEST_CASE("surviving capacity removes killed types wherever they live") {
    Catalog catalog = test_catalog();
    VmStore store;
    ResourceVector quota_each{2.0};
    Provision p = build_provision(store, {{"m1.small", 2}, {"m1.medium", 1}}, quota_each, 1);

    double margin = 0.0;
    ResourceVector all = surviving_capacity(p, store, catalog, {}, margin);
    CHECK(all[0] == doctest::Approx(2.0 + 2.0 + 7.0));

    ResourceVector no_small = surviving_capacity(p, store, catalog, {"m1.small"}, margin);
    CHECK(no_small[0] == doctest::Approx(2.0 + 7.0));

    // A foreign member dies with its own type even when hosted elsewhere.
    VmId foreign = add_instance(store, "m1.small");
    p.find_group("m1.medium")->members.push_back(foreign);
    ResourceVector foreign_killed = surviving_capacity(p, store, catalog, {"m1.small"}, margin);
    CHECK(foreign_killed[0] == doctest::Approx(2.0 + 7.0));
    // Killing the host group spares nothing of it, including the foreign member.
    ResourceVector host_killed = surviving_capacity(p, store, catalog, {"m1.medium"}, margin);
    CHECK(host_killed[0] == doctest::Approx(2.0 + 7.0));
}

TEST_CASE("safety algebra: any f-subset loss leaves R covered") {
    Catalog catalog = test_catalog();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> r_dist(5.0, 120.0);
    const std::vector<std::string> spot_types{"m1.small", "m1.medium", "m3.large"};

    for (int iter = 0; iter < 200; ++iter) {
        double margin = 0.25;
        int f = static_cast<int>(rng() % 3);
        int s = f + 1 + static_cast<int>(rng() % (3 - f));
        double share = (iter % 3) * 0.2;
        ResourceVector required{r_dist(rng)};
        ScalingConfig config = test_config(f, share, 6);

        VmStore store;
        const InstanceType& od = catalog.at("c3.large");
        int od_count = num_instances(required.scaled(share), od, margin);
        ResourceVector r_o = effective_capacity(od, margin).scaled(od_count);
        ResourceVector q = quota(required, r_o, s, f);

        Provision p;
        p.mode = ProvisionMode::kSpot;
        REQUIRE(s <= 3);  // three distinct spot types available
        for (int g = 0; g < s; ++g) {
            SpotGroup group{spot_types[g], q, 1.0, {}};
            int members = num_instances(q, catalog.at(spot_types[g]), margin);
            for (int m = 0; m < members; ++m) group.members.push_back(add_instance(store, spot_types[g]));
            p.add_group_sorted(std::move(group));
        }
        for (int i = 0; i < od_count; ++i) {
            VmInstance& vm = store.create();
            vm.type_name = "c3.large";
            vm.role = VmRole::kOnDemand;
            vm.state = VmState::kOnline;
            p.on_demand_pool.push_back(vm.id);
        }
        REQUIRE(is_safe(p, store, catalog, required, config, margin));

        // every subset of at most f group types can die
        for (int mask = 0; mask < (1 << s); ++mask) {
            if (__builtin_popcount(mask) > f) continue;
            std::set<std::string> killed;
            for (int g = 0; g < s; ++g) {
                if (mask & (1 << g)) killed.insert(spot_types[g]);
            }
            CHECK(surviving_capacity(p, store, catalog, killed, margin).covers(required));
        }
    }
}

TEST_CASE("orphan adoption moves capacity into deficient groups") {
    Catalog catalog = test_catalog();
    VmStore store;
    double margin = 0.0;
    // m1.small group needs 4 units, has 2 members: deficient by 2 small units.
    Provision p = build_provision(store, {{"m1.small", 2}}, ResourceVector{4.0});
    SpotGroup& group = p.spot_groups[0];

    VmId medium_orphan = add_instance(store, "m1.medium");
    p.orphan_queue.push_back(medium_orphan);

    adopt_orphan(p, store, catalog, medium_orphan, group, margin);
    CHECK(group.has_member(medium_orphan));
    CHECK(p.orphan_queue.empty());
    // one m1.medium substitutes two m1.small
    CHECK(group_capacity(group, store, catalog, margin).covers(group.quota));

    // adopting into a satisfied group is rejected
    VmId another = add_instance(store, "m1.medium");
    p.orphan_queue.push_back(another);
    CHECK_THROWS(adopt_orphan(p, store, catalog, another, group, margin));

    // a native member is not an orphan
    CHECK_THROWS(adopt_orphan(p, store, catalog, group.members[0], group, margin));
}

TEST_CASE("provision invariants and snapshot") {
    Catalog catalog = test_catalog();
    VmStore store;
    Provision p = build_provision(store, {{"m1.small", 1}}, ResourceVector{1.0}, 1);
    p.check_invariants();

    // the same instance in two places is rejected
    p.orphan_queue.push_back(p.spot_groups[0].members[0]);
    CHECK_THROWS(p.check_invariants());
    p.orphan_queue.clear();

    // on-demand mode must not carry groups
    Provision od;
    od.mode = ProvisionMode::kOnDemand;
    od.spot_groups.push_back({"m1.small", ResourceVector{1.0}, 1.0, {}});
    CHECK_THROWS(od.check_invariants());

    std::string snap = provision_snapshot(p, store);
    CHECK(snap.find("mode=spot") != std::string::npos);
    CHECK(snap.find("m1.small") != std::string::npos);
    CHECK(snap == provision_snapshot(p, store));  // deterministic
}

TEST_CASE("group capacity counts only planning states") {
    Catalog catalog = test_catalog();
    VmStore store;
    Provision p = build_provision(store, {{"m1.small", 2}}, ResourceVector{2.0});
    SpotGroup& g = p.spot_groups[0];
    CHECK(group_capacity(g, store, catalog, 0.0)[0] == doctest::Approx(2.0));

    // pending members count toward quota; draining and terminated do not
    g.members.push_back(add_instance(store, "m1.small", VmState::kRequested));
    CHECK(group_capacity(g, store, catalog, 0.0)[0] == doctest::Approx(3.0));
    store[g.members[0]].state = VmState::kDraining;
    CHECK(group_capacity(g, store, catalog, 0.0)[0] == doctest::Approx(2.0));
    store[g.members[1]].state = VmState::kTerminated;
    CHECK(group_capacity(g, store, catalog, 0.0)[0] == doctest::Approx(1.0));
}

TEST_CASE("provision snapshot golden file") {
    Catalog catalog = test_catalog();
    VmStore store;
    Provision p = build_provision(store, {{"m1.small", 2}}, ResourceVector{1.5}, 1);
    VmId orphan = add_instance(store, "m1.medium");
    p.orphan_queue.push_back(orphan);

    const std::string expected =
        "mode=spot\n"
        "on_demand_count=1\n"
        "group type=m1.small quota=[1.5] tb=1 members=m1.small#0@1,m1.small#1@1\n"
        "orphans=m1.medium#3\n";
    CHECK(provision_snapshot(p, store) == expected);
}
