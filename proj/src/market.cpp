#include "spotsim/market.hpp"

#include <algorithm>

namespace spotsim {

void PriceTrace::validate() const {
    if (samples.empty()) throw ValidationError("price trace '" + instance_type + "' is empty");
    double prev = samples.front().timestamp;
    if (samples.front().price <= 0.0) {
        throw ValidationError("price trace '" + instance_type + "': non-positive price");
    }
    for (std::size_t i = 1; i < samples.size(); ++i) {
        if (samples[i].timestamp <= prev) {
            throw ValidationError("price trace '" + instance_type + "': timestamps not strictly increasing at sample " +
                                  std::to_string(i));
        }
        if (samples[i].price <= 0.0) {
            throw ValidationError("price trace '" + instance_type + "': non-positive price at sample " +
                                  std::to_string(i));
        }
        prev = samples[i].timestamp;
    }
}

double price_at(const PriceTrace& trace, double t) {
    if (trace.samples.empty() || t < trace.samples.front().timestamp) {
        throw std::out_of_range("price_at: t=" + std::to_string(t) + " precedes trace for '" +
                                trace.instance_type + "'");
    }
    // First sample with timestamp > t, then step back one.
    auto it = std::upper_bound(trace.samples.begin(), trace.samples.end(), t,
                               [](double value, const PriceSample& s) { return value < s.timestamp; });
    return std::prev(it)->price;
}

double MarketState::current_price(const std::string& type) const {
    auto it = prices_.find(type);
    if (it == prices_.end()) throw ValidationError("market: no price for instance type '" + type + "'");
    return it->second;
}

bool bid_accepted(const Bid& bid, const MarketState& market) {
    return bid.max_price > market.current_price(bid.instance_type);
}

std::vector<std::uint64_t> terminations_due(const MarketState& market,
                                            const std::vector<LiveSpotInstance>& live_spot_instances) {
    std::vector<std::uint64_t> doomed;
    for (const auto& inst : live_spot_instances) {
        if (inst.bid_price < market.current_price(inst.instance_type)) {
            doomed.push_back(inst.vm_id);
        }
    }
    return doomed;
}

}  // namespace spotsim
