#pragma once

// Spot market replay: per-type price step functions, bid matching and
// provider-side termination of underbid instances.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spotsim/resources.hpp"

namespace spotsim {

struct PriceSample {
    double timestamp = 0.0;  // seconds
    double price = 0.0;      // currency per hour
};

// Time-ordered samples for one instance type; the price is a right-continuous
// step function of time.
struct PriceTrace {
    std::string instance_type;
    std::vector<PriceSample> samples;

    void validate() const;
    double first_timestamp() const { return samples.front().timestamp; }
    double last_timestamp() const { return samples.back().timestamp; }
};

// Price of the most recent sample at or before t. Throws if t precedes the
// first sample.
double price_at(const PriceTrace& trace, double t);

struct Bid {
    std::string instance_type;
    int count = 1;
    double max_price = 0.0;
};

// Current market prices for every spot type, owned by the simulator loop.
class MarketState {
public:
    MarketState() = default;

    void set_price(const std::string& type, double price) { prices_[type] = price; }
    double current_price(const std::string& type) const;
    bool has_type(const std::string& type) const { return prices_.count(type) != 0; }
    double clock = 0.0;

private:
    std::map<std::string, double> prices_;
};

// A bid is fulfilled only when it strictly exceeds the market price; equality
// keeps the holder's side.
bool bid_accepted(const Bid& bid, const MarketState& market);

struct LiveSpotInstance {
    std::uint64_t vm_id = 0;
    std::string instance_type;
    double bid_price = 0.0;
};

// Exactly those instances whose bid is strictly below the current market
// price of their type.
std::vector<std::uint64_t> terminations_due(const MarketState& market,
                                            const std::vector<LiveSpotInstance>& live_spot_instances);

}  // namespace spotsim
