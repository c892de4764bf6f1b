#include "spotsim/provision.hpp"

#include <algorithm>
#include <sstream>

namespace spotsim {

void ScalingConfig::validate() const {
    if (f < 0) throw ConfigError("scaling config: f must be >= 0");
    if (f > margin_policy.f_max) throw ConfigError("scaling config: f exceeds f_max");
    if (on_demand_share < 0.0 || on_demand_share > 1.0) {
        throw ConfigError("scaling config: on-demand share must be in [0, 1]");
    }
    if (max_groups < 1) throw ConfigError("scaling config: max_groups must be >= 1");
    if (f + 1 > max_groups) {
        throw ConfigError("scaling config: f + 1 <= max_groups required, no safe provision exists otherwise");
    }
    if (removal_interval <= 0.0) throw ConfigError("scaling config: removal interval must be positive");
    if (on_demand_type.empty()) throw ConfigError("scaling config: on-demand type not set");
    margin_policy.validate();
}

double ScalingConfig::margin_for(ProvisionMode mode) const {
    if (mode == ProvisionMode::kOnDemand) return margin_policy.m_def;
    return dynamic_margin(margin_policy, f);
}

bool SpotGroup::has_member(VmId id) const {
    return std::find(members.begin(), members.end(), id) != members.end();
}

void SpotGroup::remove_member(VmId id) {
    members.erase(std::remove(members.begin(), members.end(), id), members.end());
}

SpotGroup* Provision::find_group(const std::string& type_name) {
    for (auto& g : spot_groups) {
        if (g.type_name == type_name) return &g;
    }
    return nullptr;
}

const SpotGroup* Provision::find_group(const std::string& type_name) const {
    return const_cast<Provision*>(this)->find_group(type_name);
}

SpotGroup* Provision::group_of(VmId id) {
    for (auto& g : spot_groups) {
        if (g.has_member(id)) return &g;
    }
    return nullptr;
}

const SpotGroup* Provision::group_of(VmId id) const {
    return const_cast<Provision*>(this)->group_of(id);
}

bool Provision::in_orphan_queue(VmId id) const {
    return std::find(orphan_queue.begin(), orphan_queue.end(), id) != orphan_queue.end();
}

void Provision::remove_from_orphan_queue(VmId id) {
    orphan_queue.erase(std::remove(orphan_queue.begin(), orphan_queue.end(), id), orphan_queue.end());
}

void Provision::add_group_sorted(SpotGroup group) {
    if (find_group(group.type_name) != nullptr) {
        throw std::logic_error("provision: group type '" + group.type_name + "' already present");
    }
    auto pos = std::lower_bound(spot_groups.begin(), spot_groups.end(), group.type_name,
                                [](const SpotGroup& g, const std::string& name) { return g.type_name < name; });
    spot_groups.insert(pos, std::move(group));
}

void Provision::erase_group(const std::string& type_name) {
    spot_groups.erase(std::remove_if(spot_groups.begin(), spot_groups.end(),
                                     [&](const SpotGroup& g) { return g.type_name == type_name; }),
                      spot_groups.end());
}

std::vector<std::string> Provision::group_types() const {
    std::vector<std::string> names;
    names.reserve(spot_groups.size());
    for (const auto& g : spot_groups) names.push_back(g.type_name);
    return names;
}

void Provision::check_invariants() const {
    if (mode == ProvisionMode::kOnDemand && !spot_groups.empty()) {
        throw std::logic_error("provision: on-demand mode must not carry spot groups");
    }
    std::set<std::string> types;
    std::set<VmId> seen;
    auto note = [&](VmId id, const char* where) {
        if (!seen.insert(id).second) {
            throw std::logic_error(std::string("provision: instance tracked twice (") + where + ")");
        }
    };
    for (VmId id : on_demand_pool) note(id, "on-demand pool");
    for (const auto& g : spot_groups) {
        if (!types.insert(g.type_name).second) {
            throw std::logic_error("provision: duplicate group type '" + g.type_name + "'");
        }
        for (VmId id : g.members) note(id, "group");
    }
    for (VmId id : orphan_queue) note(id, "orphan queue");
}

ResourceVector quota(const ResourceVector& required, const ResourceVector& on_demand_capacity,
                     int group_count, int fault_level) {
    if (group_count <= fault_level) {
        throw std::invalid_argument("quota: group count must exceed the fault-tolerant level");
    }
    return required.minus_clamped(on_demand_capacity).scaled(1.0 / (group_count - fault_level));
}

ResourceVector group_capacity(const SpotGroup& group, const VmStore& store, const Catalog& catalog,
                              double margin) {
    ResourceVector total = ResourceVector::zeros(catalog.dims());
    for (VmId id : group.members) {
        const VmInstance& vm = store[id];
        if (!vm.counts_for_planning()) continue;
        total = total.plus(effective_capacity(catalog.at(vm.type_name), margin));
    }
    return total;
}

ResourceVector on_demand_capacity(const Provision& provision, const VmStore& store, const Catalog& catalog,
                                  double margin) {
    ResourceVector total = ResourceVector::zeros(catalog.dims());
    for (VmId id : provision.on_demand_pool) {
        const VmInstance& vm = store[id];
        if (!vm.counts_for_planning()) continue;
        total = total.plus(effective_capacity(catalog.at(vm.type_name), margin));
    }
    return total;
}

bool is_safe(const Provision& provision, const VmStore& store, const Catalog& catalog,
             const ResourceVector& required, const ScalingConfig& config, double margin) {
    if (provision.mode != ProvisionMode::kSpot) {
        throw std::logic_error("is_safe: defined for spot mode only; on-demand mode uses plain coverage");
    }
    const InstanceType& od_type = catalog.at(config.on_demand_type);
    ResourceVector od_floor = required.scaled(config.on_demand_share);
    int needed = num_instances(od_floor, od_type, margin);
    ResourceVector od_target = effective_capacity(od_type, margin).scaled(static_cast<double>(needed));
    if (!on_demand_capacity(provision, store, catalog, margin).covers(od_target)) return false;
    for (const auto& g : provision.spot_groups) {
        if (!group_capacity(g, store, catalog, margin).covers(g.quota)) return false;
    }
    return true;
}

ResourceVector surviving_capacity(const Provision& provision, const VmStore& store, const Catalog& catalog,
                                  const std::set<std::string>& killed_types, double margin) {
    ResourceVector total = on_demand_capacity(provision, store, catalog, margin);
    for (const auto& g : provision.spot_groups) {
        if (killed_types.count(g.type_name) != 0) continue;
        for (VmId id : g.members) {
            const VmInstance& vm = store[id];
            if (!vm.counts_for_planning()) continue;
            if (killed_types.count(vm.type_name) != 0) continue;
            total = total.plus(effective_capacity(catalog.at(vm.type_name), margin));
        }
    }
    return total;
}

void adopt_orphan(Provision& provision, const VmStore& store, const Catalog& catalog, VmId orphan,
                  SpotGroup& target_group, double margin) {
    const VmInstance& vm = store[orphan];
    SpotGroup* host = provision.group_of(orphan);
    if (host != nullptr && vm.type_name == host->type_name) {
        throw std::logic_error("adopt_orphan: instance is a native member of its group");
    }
    if (host == nullptr && !provision.in_orphan_queue(orphan)) {
        throw std::logic_error("adopt_orphan: instance is not an orphan");
    }
    if (group_capacity(target_group, store, catalog, margin).covers(target_group.quota)) {
        throw std::logic_error("adopt_orphan: target group quota already satisfied");
    }
    if (host != nullptr) {
        host->remove_member(orphan);
    } else {
        provision.remove_from_orphan_queue(orphan);
    }
    target_group.members.push_back(orphan);
}

std::string provision_snapshot(const Provision& provision, const VmStore& store) {
    std::ostringstream out;
    out << "mode=" << (provision.mode == ProvisionMode::kSpot ? "spot" : "on-demand") << "\n";
    out << "on_demand_count=" << provision.on_demand_pool.size() << "\n";
    for (const auto& g : provision.spot_groups) {
        out << "group type=" << g.type_name << " quota=[";
        for (std::size_t d = 0; d < g.quota.dims(); ++d) {
            if (d > 0) out << ",";
            out << g.quota[d];
        }
        out << "] tb=" << g.truthful_bid << " members=";
        for (std::size_t i = 0; i < g.members.size(); ++i) {
            const VmInstance& vm = store[g.members[i]];
            if (i > 0) out << ",";
            out << vm.type_name << "#" << vm.id << "@" << vm.bid_price;
        }
        out << "\n";
    }
    out << "orphans=";
    for (std::size_t i = 0; i < provision.orphan_queue.size(); ++i) {
        if (i > 0) out << ",";
        out << store[provision.orphan_queue[i]].type_name << "#" << provision.orphan_queue[i];
    }
    out << "\n";
    return out.str();
}

}  // namespace spotsim
