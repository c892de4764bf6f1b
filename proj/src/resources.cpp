#include "spotsim/resources.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace spotsim {

namespace {

void require_same_dims(const ResourceVector& a, const ResourceVector& b, const char* op) {
    if (a.dims() != b.dims()) {
        throw std::invalid_argument(std::string(op) + ": dimension mismatch (" +
                                    std::to_string(a.dims()) + " vs " + std::to_string(b.dims()) + ")");
    }
}

}  // namespace

ResourceVector::ResourceVector(std::vector<double> components) : components_(std::move(components)) {
    for (double c : components_) {
        if (c < 0.0 || !std::isfinite(c)) {
            throw std::invalid_argument("ResourceVector: components must be finite and non-negative");
        }
    }
}

ResourceVector::ResourceVector(std::initializer_list<double> components)
    : ResourceVector(std::vector<double>(components)) {}

ResourceVector ResourceVector::zeros(std::size_t dims) {
    return ResourceVector(std::vector<double>(dims, 0.0));
}

bool ResourceVector::is_zero() const {
    return std::all_of(components_.begin(), components_.end(), [](double c) { return c == 0.0; });
}

bool ResourceVector::covers(const ResourceVector& other) const {
    require_same_dims(*this, other, "covers");
    for (std::size_t d = 0; d < components_.size(); ++d) {
        // Tolerate accumulation noise: capacity that equals demand up to an
        // ulp-scale difference still counts as covering it.
        double slack = 1e-9 * std::max(1.0, std::abs(other.components_[d]));
        if (components_[d] < other.components_[d] - slack) return false;
    }
    return true;
}

ResourceVector ResourceVector::scaled(double factor) const {
    std::vector<double> out(components_);
    for (double& c : out) c *= factor;
    return ResourceVector(std::move(out));
}

ResourceVector ResourceVector::plus(const ResourceVector& other) const {
    require_same_dims(*this, other, "plus");
    std::vector<double> out(components_);
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += other.components_[d];
    return ResourceVector(std::move(out));
}

ResourceVector ResourceVector::minus_clamped(const ResourceVector& other) const {
    require_same_dims(*this, other, "minus_clamped");
    std::vector<double> out(components_);
    for (std::size_t d = 0; d < out.size(); ++d) out[d] = std::max(0.0, out[d] - other.components_[d]);
    return ResourceVector(std::move(out));
}

Catalog::Catalog(std::vector<InstanceType> types) : types_(std::move(types)) {
    std::set<std::string> names;
    for (const auto& t : types_) {
        if (t.name.empty()) throw ValidationError("catalog: empty type name");
        if (!names.insert(t.name).second) {
            throw ValidationError("catalog: duplicate type name '" + t.name + "'");
        }
        if (t.capacity.dims() == 0) throw ValidationError("catalog: type '" + t.name + "' has no capacity");
        for (std::size_t d = 0; d < t.capacity.dims(); ++d) {
            if (t.capacity[d] <= 0.0) {
                throw ValidationError("catalog: type '" + t.name + "' has non-positive capacity in dimension " +
                                      std::to_string(d));
            }
        }
        if (t.capacity.dims() != types_.front().capacity.dims()) {
            throw ValidationError("catalog: type '" + t.name + "' dimension count differs from the rest");
        }
        if (t.on_demand_price <= 0.0) {
            throw ValidationError("catalog: type '" + t.name + "' needs a positive on-demand price");
        }
    }
}

const InstanceType* Catalog::find(const std::string& name) const {
    for (const auto& t : types_) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

const InstanceType& Catalog::at(const std::string& name) const {
    const InstanceType* t = find(name);
    if (t == nullptr) throw ValidationError("catalog: unknown instance type '" + name + "'");
    return *t;
}

std::size_t Catalog::dims() const {
    return types_.empty() ? 0 : types_.front().capacity.dims();
}

void AppProfile::validate() const {
    bool any_positive = false;
    for (std::size_t d = 0; d < demand_per_request.dims(); ++d) {
        if (demand_per_request[d] > 0.0) any_positive = true;
    }
    if (!any_positive) throw ConfigError("profile: demand_per_request must be positive in at least one dimension");
    if (mean_request_length <= 0.0 || request_length_stddev < 0.0) {
        throw ConfigError("profile: request length parameters must be positive");
    }
}

void MarginPolicy::validate() const {
    if (m_min < 0.0 || m_min > m_def || m_def >= 1.0) {
        throw ConfigError("margin policy: require 0 <= m_min <= m_def < 1");
    }
    if (f_max < 1) throw ConfigError("margin policy: f_max must be >= 1");
}

ResourceVector effective_capacity(const InstanceType& type, double margin) {
    if (margin < 0.0 || margin >= 1.0) {
        throw std::invalid_argument("effective_capacity: margin must be in [0, 1)");
    }
    return type.capacity.scaled(1.0 - margin);
}

double dynamic_margin(const MarginPolicy& policy, int f) {
    policy.validate();
    if (f < 0 || f > policy.f_max) {
        throw ConfigError("dynamic_margin: fault-tolerant level outside [0, f_max]");
    }
    if (policy.mode == MarginMode::kStatic) return policy.m_def;
    return policy.m_min + (policy.m_def - policy.m_min) * static_cast<double>(f) / policy.f_max;
}

ResourceVector required_capacity(const AppProfile& profile, double request_rate) {
    if (request_rate < 0.0) throw std::invalid_argument("required_capacity: negative request rate");
    return profile.demand_per_request.scaled(request_rate);
}

int num_instances(const ResourceVector& demand, const InstanceType& type, double margin) {
    const ResourceVector eff = effective_capacity(type, margin);
    if (demand.dims() != eff.dims()) {
        throw std::invalid_argument("num_instances: demand dimensions do not match the catalog");
    }
    int n = 0;
    for (std::size_t d = 0; d < demand.dims(); ++d) {
        if (demand[d] <= 0.0) continue;
        // eff[d] > 0 is guaranteed by catalog validation and margin < 1.
        double exact = demand[d] / eff[d];
        int needed = static_cast<int>(std::ceil(exact - 1e-12));
        n = std::max(n, needed);
    }
    return n;
}

std::size_t bottleneck_dimension(const AppProfile& profile, const InstanceType& reference) {
    if (profile.demand_per_request.dims() != reference.capacity.dims()) {
        throw std::invalid_argument("bottleneck_dimension: profile/catalog dimension mismatch");
    }
    std::size_t best = 0;
    double best_ratio = -1.0;
    for (std::size_t d = 0; d < reference.capacity.dims(); ++d) {
        double ratio = profile.demand_per_request[d] / reference.capacity[d];
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best = d;
        }
    }
    return best;
}

std::vector<int> wrr_weights(const std::vector<std::pair<const InstanceType*, double>>& instances,
                             std::size_t bottleneck_dim) {
    if (instances.empty()) throw std::invalid_argument("wrr_weights: empty instance list");
    constexpr int kMaxWeight = 100;

    std::vector<double> caps;
    caps.reserve(instances.size());
    double min_cap = 0.0;
    for (const auto& [type, margin] : instances) {
        double c = effective_capacity(*type, margin)[bottleneck_dim];
        caps.push_back(c);
        min_cap = (caps.size() == 1) ? c : std::min(min_cap, c);
    }

    // Smallest multiplier k such that every cap/min_cap * k is an integer
    // within tolerance and no weight exceeds the cap of 100.
    for (int k = 1; k <= kMaxWeight; ++k) {
        bool ok = true;
        std::vector<int> weights(caps.size());
        for (std::size_t i = 0; i < caps.size(); ++i) {
            double scaled = caps[i] / min_cap * k;
            double rounded = std::round(scaled);
            if (std::abs(scaled - rounded) > 1e-6 || rounded > kMaxWeight || rounded < 1.0) {
                ok = false;
                break;
            }
            weights[i] = static_cast<int>(rounded);
        }
        if (ok) return weights;
    }

    // Irrational ratios: scale the largest capacity to 100 and round.
    double max_cap = *std::max_element(caps.begin(), caps.end());
    std::vector<int> weights(caps.size());
    for (std::size_t i = 0; i < caps.size(); ++i) {
        weights[i] = std::max(1, static_cast<int>(std::round(caps[i] / max_cap * kMaxWeight)));
    }
    return weights;
}

void WrrScheduler::reset(std::vector<int> weights) {
    weights_ = std::move(weights);
    current_.assign(weights_.size(), 0);
    total_ = 0;
    for (int w : weights_) total_ += w;
}

std::size_t WrrScheduler::pick() {
    if (weights_.empty()) throw std::logic_error("WrrScheduler: no instances");
    std::size_t best = 0;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        current_[i] += weights_[i];
        if (current_[i] > current_[best]) best = i;
    }
    current_[best] -= total_;
    return best;
}

}  // namespace spotsim
