#pragma once

// Capacity model: instance catalog, application resource profile and the
// effective-capacity arithmetic used by every scaling decision.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spotsim {

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A non-negative magnitude per resource dimension. The dimension count is
// fixed per experiment (catalog and profile must agree); unit tests often use
// one- or two-dimensional vectors.
class ResourceVector {
public:
    ResourceVector() = default;
    explicit ResourceVector(std::vector<double> components);
    ResourceVector(std::initializer_list<double> components);

    static ResourceVector zeros(std::size_t dims);

    std::size_t dims() const { return components_.size(); }
    double operator[](std::size_t d) const { return components_[d]; }
    double& operator[](std::size_t d) { return components_[d]; }
    std::span<const double> components() const { return components_; }

    bool is_zero() const;

    // True iff every component of *this >= the corresponding component of other.
    bool covers(const ResourceVector& other) const;

    ResourceVector scaled(double factor) const;
    ResourceVector plus(const ResourceVector& other) const;
    // Component-wise max(0, a - b).
    ResourceVector minus_clamped(const ResourceVector& other) const;

    bool operator==(const ResourceVector& other) const = default;

private:
    std::vector<double> components_;
};

// One catalog entry. Capacity is the nominal (unmargined) capacity vector.
struct InstanceType {
    std::string name;
    ResourceVector capacity;
    double on_demand_price = 0.0;  // currency per hour
    bool is_spot_eligible = true;
};

// Catalog of instance types with unique names.
class Catalog {
public:
    Catalog() = default;
    explicit Catalog(std::vector<InstanceType> types);

    const InstanceType& at(const std::string& name) const;
    const InstanceType* find(const std::string& name) const;
    const std::vector<InstanceType>& types() const { return types_; }
    std::size_t size() const { return types_.size(); }
    std::size_t dims() const;

private:
    std::vector<InstanceType> types_;
};

// Offline application profile: steady-state resource demand per request/s and
// the service-length distribution of individual requests.
struct AppProfile {
    ResourceVector demand_per_request;  // consumed per request per second
    double mean_request_length = 0.07;  // ECU
    double request_length_stddev = 0.005;

    void validate() const;
};

enum class MarginMode { kStatic, kDynamic };

struct MarginPolicy {
    double m_min = 0.10;
    double m_def = 0.25;
    int f_max = 3;
    MarginMode mode = MarginMode::kStatic;

    void validate() const;
};

// capacity * (1 - m), component-wise. Requires 0 <= m < 1.
ResourceVector effective_capacity(const InstanceType& type, double margin);

// Margin for fault-tolerant level f: affine between m_min (f = 0) and
// m_def (f = f_max) in dynamic mode, m_def in static mode.
double dynamic_margin(const MarginPolicy& policy, int f);

// R: raw demand for the given request rate, no margin headroom applied.
ResourceVector required_capacity(const AppProfile& profile, double request_rate);

// Minimum n such that n * effective_capacity(type, margin) covers demand.
int num_instances(const ResourceVector& demand, const InstanceType& type, double margin);

// Index of the dimension with the highest demand-to-capacity ratio against
// the given reference type; load-balancer weights are derived in this dimension.
std::size_t bottleneck_dimension(const AppProfile& profile, const InstanceType& reference);

// Integer weighted-round-robin weights proportional to each instance's
// effective capacity in the bottleneck dimension. Weights are >= 1 and
// capped at 100 per instance.
std::vector<int> wrr_weights(const std::vector<std::pair<const InstanceType*, double>>& instances,
                             std::size_t bottleneck_dim);

// Smooth weighted round robin; deterministic, exact over each cycle of
// sum(weights) dispatches.
class WrrScheduler {
public:
    void reset(std::vector<int> weights);
    std::size_t pick();
    bool empty() const { return weights_.empty(); }

private:
    std::vector<int> weights_;
    std::vector<long long> current_;
    long long total_ = 0;
};

}  // namespace spotsim
