#pragma once

#include <cstdint>
#include <deque>
#include <string>

namespace spotsim {

using VmId = std::uint64_t;

enum class VmRole { kOnDemand, kSpot };

enum class VmState { kRequested, kBooting, kOnline, kDraining, kTerminated };

enum class TerminationCause { kNone, kUser, kProvider };

struct VmInstance {
    VmId id = 0;
    std::string type_name;
    VmRole role = VmRole::kOnDemand;
    double bid_price = 0.0;      // spot only
    double request_time = 0.0;
    double online_time = -1.0;   // set when the instance comes up
    double billing_anchor = -1.0;
    double offline_time = -1.0;
    VmState state = VmState::kRequested;
    TerminationCause termination_cause = TerminationCause::kNone;

    bool is_live() const { return state != VmState::kTerminated; }
    bool is_serving() const { return state == VmState::kOnline || state == VmState::kDraining; }
    // Capacity-planning view: pending instances count (they were planned and
    // will arrive), draining ones are committed to leave and do not.
    bool counts_for_planning() const {
        return state == VmState::kRequested || state == VmState::kBooting || state == VmState::kOnline;
    }
};

// Stable-address store; instances are never erased, only marked terminated.
class VmStore {
public:
    VmInstance& create() {
        VmInstance& vm = instances_.emplace_back();
        vm.id = instances_.size() - 1;
        return vm;
    }
    VmInstance& operator[](VmId id) { return instances_[id]; }
    const VmInstance& operator[](VmId id) const { return instances_[id]; }
    std::size_t size() const { return instances_.size(); }

private:
    std::deque<VmInstance> instances_;
};

}  // namespace spotsim
