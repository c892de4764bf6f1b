#include "spotsim/engine.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

namespace spotsim {

namespace {

constexpr double kVirtualEps = 1e-6;   // slack on virtual-time completion checks
constexpr double kTimeEps = 1e-7;
constexpr double kHour = 3600.0;

std::uint64_t fnv1a(std::uint64_t hash, std::uint64_t value) {
    for (int i = 0; i < 8; ++i) {
        hash ^= (value >> (i * 8)) & 0xff;
        hash *= 1099511628211ULL;
    }
    return hash;
}

}  // namespace

std::uint8_t priority_class(EventKind kind) {
    switch (kind) {
        case EventKind::kSpotTermination: return 0;
        case EventKind::kVmOnline:
        case EventKind::kVmOffline: return 1;
        case EventKind::kBillingBoundary: return 2;
        case EventKind::kPriceChange: return 3;
        case EventKind::kRemovalSweep: return 4;
        case EventKind::kUtilizationSample: return 5;
        case EventKind::kRequestArrival:
        case EventKind::kRequestDeparture: return 6;
    }
    return 7;
}

void EventQueue::push(double fire_time, EventKind kind, std::uint32_t subject, std::uint32_t generation) {
    SimEvent ev;
    ev.fire_time = fire_time;
    ev.klass = priority_class(kind);
    ev.kind = kind;
    ev.seq = next_seq_++;
    ev.subject = subject;
    ev.generation = generation;
    heap_.push(ev);
}

SimEvent EventQueue::pop() {
    SimEvent ev = heap_.top();
    heap_.pop();
    return ev;
}

SimRng::SimRng(std::uint64_t seed)
    : request_lengths_(seed ^ 0x9e3779b97f4a7c15ULL),
      startup_delays_(seed ^ 0xc2b2ae3d27d4eb4fULL),
      shutdown_delays_(seed ^ 0x165667b19e3779f9ULL),
      spot_request_delays_(seed ^ 0x27d4eb2f165667c5ULL) {}

double SimRng::positive_normal(std::mt19937_64& engine, double mean, double stddev) {
    std::normal_distribution<double> dist(mean, stddev);
    for (;;) {
        double v = dist(engine);
        if (v > 0.0) return v;
    }
}

double SimRng::request_length(double mean, double stddev) {
    return positive_normal(request_lengths_, mean, stddev);
}
double SimRng::startup_delay(double mean, double stddev) {
    return positive_normal(startup_delays_, mean, stddev);
}
double SimRng::shutdown_delay(double mean, double stddev) {
    return positive_normal(shutdown_delays_, mean, stddev);
}
double SimRng::spot_request_delay(double mean, double stddev) {
    return positive_normal(spot_request_delays_, mean, stddev);
}

void PsServer::init(double service_rate, double timeout) {
    rate_ = service_rate;
    timeout_ = timeout;
    virtual_time_ = 0.0;
    last_update_ = 0.0;
    active_ = 0;
    jobs_.clear();
    free_slots_.clear();
    completion_heap_.clear();
    deadline_heap_.clear();
}

void PsServer::advance(double t) {
    if (t <= last_update_) return;
    if (active_ > 0) virtual_time_ += rate_ * (t - last_update_) / active_;
    last_update_ = t;
}

std::uint32_t PsServer::add_job(double t, double length, double first_arrival, bool redispatched) {
    advance(t);
    std::uint32_t slot;
    if (!free_slots_.empty()) {
        slot = free_slots_.back();
        free_slots_.pop_back();
    } else {
        slot = static_cast<std::uint32_t>(jobs_.size());
        jobs_.emplace_back();
    }
    Job& job = jobs_[slot];
    job.target_v = virtual_time_ + length;
    job.first_arrival = first_arrival;
    job.deadline = first_arrival + timeout_;
    job.length = length;
    job.redispatched = redispatched;
    job.done = false;
    ++active_;

    completion_heap_.emplace_back(job.target_v, slot);
    std::push_heap(completion_heap_.begin(), completion_heap_.end(), std::greater<>{});
    deadline_heap_.emplace_back(job.deadline, slot);
    std::push_heap(deadline_heap_.begin(), deadline_heap_.end(), std::greater<>{});
    return slot;
}

void PsServer::skip_finished() {
    // Entries whose key no longer matches the slot's job are leftovers from a
    // retired job that shared the slot; drop them along with finished jobs.
    while (!completion_heap_.empty() &&
           (jobs_[completion_heap_.front().second].done ||
            jobs_[completion_heap_.front().second].target_v != completion_heap_.front().first)) {
        std::pop_heap(completion_heap_.begin(), completion_heap_.end(), std::greater<>{});
        completion_heap_.pop_back();
    }
    while (!deadline_heap_.empty() &&
           (jobs_[deadline_heap_.front().second].done ||
            jobs_[deadline_heap_.front().second].deadline != deadline_heap_.front().first)) {
        std::pop_heap(deadline_heap_.begin(), deadline_heap_.end(), std::greater<>{});
        deadline_heap_.pop_back();
    }
}

PsServer::Due PsServer::due_at(double t) {
    advance(t);
    skip_finished();
    if (!completion_heap_.empty() &&
        completion_heap_.front().first <= virtual_time_ + kVirtualEps) {
        return {Due::What::kCompletion, completion_heap_.front().second};
    }
    if (!deadline_heap_.empty() && deadline_heap_.front().first <= t + kTimeEps) {
        return {Due::What::kTimeout, deadline_heap_.front().second};
    }
    return {};
}

void PsServer::finish_job(std::uint32_t slot) {
    Job& job = jobs_[slot];
    assert(!job.done);
    job.done = true;
    --active_;
    free_slots_.push_back(slot);
}

double PsServer::next_event_time() {
    skip_finished();
    double next = std::numeric_limits<double>::infinity();
    if (!completion_heap_.empty() && active_ > 0) {
        double dv = completion_heap_.front().first - virtual_time_;
        next = last_update_ + std::max(0.0, dv) * active_ / rate_;
    }
    if (!deadline_heap_.empty()) next = std::min(next, deadline_heap_.front().first);
    return next;
}

std::vector<PsServer::JobInfo> PsServer::drain_active() {
    std::vector<std::pair<std::uint32_t, JobInfo>> live;
    for (std::uint32_t slot = 0; slot < jobs_.size(); ++slot) {
        Job& job = jobs_[slot];
        if (job.done) continue;
        live.push_back({slot, {job.first_arrival, job.length, job.redispatched}});
        job.done = true;
        free_slots_.push_back(slot);
    }
    active_ = 0;
    completion_heap_.clear();
    deadline_heap_.clear();
    std::sort(live.begin(), live.end(), [](const auto& a, const auto& b) {
        if (a.second.first_arrival != b.second.first_arrival) {
            return a.second.first_arrival < b.second.first_arrival;
        }
        return a.first < b.first;
    });
    std::vector<JobInfo> out;
    out.reserve(live.size());
    for (auto& [slot, info] : live) out.push_back(info);
    return out;
}

Simulator::Simulator(const Catalog& catalog, const AppProfile& profile, const ScalingConfig& config,
                     PolicyKind policy, const SimParams& params, const PriceBook& prices,
                     const WorkloadTrace& workload)
    : catalog_(catalog),
      profile_(profile),
      config_(config),
      policy_(policy),
      params_(params),
      prices_(prices),
      workload_(workload),
      rng_(params.seed) {
    config_.validate();
    profile_.validate();
    if (profile_.demand_per_request.dims() != catalog_.dims()) {
        throw ConfigError("simulator: profile dimensions do not match the catalog");
    }
    if (params_.duration < 0.0) throw ConfigError("simulator: negative duration");
    if (params_.billing_lead <= 0.0 || params_.billing_lead >= kHour) {
        throw ConfigError("simulator: billing lead must be in (0, 3600)");
    }
    if (params_.sample_interval <= 0.0) throw ConfigError("simulator: sample interval must be positive");
    if (params_.request_timeout <= 0.0) throw ConfigError("simulator: request timeout must be positive");
    if (params_.workload_scale < 0.0) throw ConfigError("simulator: negative workload scale");
    catalog_.at(config_.on_demand_type);  // must exist

    allow_spot_ = policy_ != PolicyKind::kOnDemandOnly;

    workload_.validate();
    if (workload_.first_timestamp() > 0.0) {
        throw ValidationError("simulator: workload trace starts after t=0");
    }
    if (workload_.end_timestamp() < params_.duration) {
        throw ValidationError("simulator: workload trace shorter than the simulation horizon");
    }
    for (const auto& t : catalog_.types()) {
        const PriceTrace& trace = prices_.trace_for(t.name);
        trace.validate();
        if (trace.first_timestamp() > 0.0) {
            throw ValidationError("simulator: price trace for '" + t.name + "' starts after t=0");
        }
        if (trace.last_timestamp() < params_.duration) {
            throw ValidationError("simulator: price trace for '" + t.name +
                                  "' shorter than the simulation horizon");
        }
    }

    bottleneck_dim_ = bottleneck_dimension(profile_, catalog_.at(config_.on_demand_type));
    required_ = ResourceVector::zeros(catalog_.dims());
    serving_nominal_ = ResourceVector::zeros(catalog_.dims());

    for (const auto& t : catalog_.types()) {
        type_names_.push_back(t.name);
        market_.set_price(t.name, price_at(prices_.trace_for(t.name), 0.0));
        const auto& samples = prices_.trace_for(t.name).samples;
        std::size_t cursor = 0;
        while (cursor < samples.size() && samples[cursor].timestamp <= 0.0) ++cursor;
        price_cursor_.push_back(cursor);
    }

    std::size_t seconds = static_cast<std::size_t>(std::ceil(params_.duration));
    result_.duration = params_.duration;
    result_.response_time_sum.assign(seconds, 0.0);
    result_.completions_per_second.assign(seconds, 0);
    result_.timeouts_per_second.assign(seconds, 0);
    result_.response_histogram.assign(static_cast<std::size_t>(params_.request_timeout * 1000.0) + 1, 0);
}

std::optional<double> Simulator::next_arrival_time() {
    while (workload_index_ < workload_.samples.size()) {
        if (workload_sub_ == 0) {
            scaled_count_ = static_cast<long long>(
                std::llround(static_cast<double>(workload_.samples[workload_index_].request_count) *
                             params_.workload_scale));
        }
        if (workload_sub_ >= scaled_count_) {
            ++workload_index_;
            workload_sub_ = 0;
            continue;
        }
        double base = workload_.samples[workload_index_].timestamp;
        double t = base + (static_cast<double>(workload_sub_) + 0.5) * workload_.interval /
                              static_cast<double>(scaled_count_);
        ++workload_sub_;
        if (t < 0.0) continue;  // trace may begin before the simulated horizon
        return t;
    }
    return std::nullopt;
}

ExperimentResult Simulator::run() {
    for (int i = 0; i < params_.initial_on_demand; ++i) {
        VmInstance& vm = store_.create();
        servers_.emplace_back();
        vm_generation_.push_back(0);
        departure_generation_.push_back(0);
        vm.type_name = config_.on_demand_type;
        vm.role = VmRole::kOnDemand;
        vm.request_time = 0.0;
        vm.online_time = 0.0;
        vm.billing_anchor = -params_.initial_anchor_stagger * i;
        vm.state = VmState::kOnline;
        provision_.on_demand_pool.push_back(vm.id);
        servers_[vm.id].init(catalog_.at(vm.type_name).capacity[0], params_.request_timeout);
        serving_.push_back(vm.id);
        double boundary = vm.billing_anchor + kHour - params_.billing_lead;
        while (boundary <= 0.0) boundary += kHour;
        queue_.push(boundary, EventKind::kBillingBoundary, static_cast<std::uint32_t>(vm.id),
                    vm_generation_[vm.id]);
    }
    rebuild_serving_set();
    update_shortfall(0.0);

    for (std::size_t i = 0; i < type_names_.size(); ++i) {
        const auto& samples = prices_.trace_for(type_names_[i]).samples;
        if (price_cursor_[i] < samples.size()) {
            queue_.push(samples[price_cursor_[i]].timestamp, EventKind::kPriceChange,
                        static_cast<std::uint32_t>(i), 0);
        }
    }
    queue_.push(params_.sample_interval, EventKind::kUtilizationSample, 0, 0);
    if (allow_spot_) queue_.push(config_.removal_interval, EventKind::kRemovalSweep, 0, 0);
    if (auto t = next_arrival_time()) queue_.push(*t, EventKind::kRequestArrival, 0, 0);

    while (!queue_.empty()) {
        SimEvent ev = queue_.pop();
        if (ev.fire_time >= params_.duration) break;
        record_pop(ev);
        now_ = ev.fire_time;
        switch (ev.kind) {
            case EventKind::kPriceChange:
                on_price_change(ev.subject);
                break;
            case EventKind::kSpotTermination:
                if (ev.generation == vm_generation_[ev.subject]) on_spot_termination(ev.subject);
                break;
            case EventKind::kVmOnline:
                if (ev.generation == vm_generation_[ev.subject]) on_vm_online(ev.subject);
                break;
            case EventKind::kVmOffline:
                if (ev.generation == vm_generation_[ev.subject]) on_vm_offline(ev.subject, TerminationCause::kUser);
                break;
            case EventKind::kBillingBoundary:
                if (ev.generation == vm_generation_[ev.subject]) on_billing_boundary(ev.subject);
                break;
            case EventKind::kUtilizationSample:
                on_utilization_sample();
                break;
            case EventKind::kRemovalSweep:
                on_removal_sweep();
                break;
            case EventKind::kRequestArrival:
                on_request_arrival();
                break;
            case EventKind::kRequestDeparture:
                if (ev.generation == departure_generation_[ev.subject]) on_request_departure(ev.subject);
                break;
        }
    }

    now_ = params_.duration;
    update_shortfall(params_.duration);
    for (VmId id = 0; id < store_.size(); ++id) {
        const VmInstance& vm = store_[id];
        if (vm.is_live() && vm.online_time >= 0.0) {
            bill_instance(id, params_.duration, TerminationCause::kUser);
        }
        if (vm.is_serving()) result_.in_flight_at_end += servers_[id].active_jobs();
    }
    return result_;
}

// ---------------------------------------------------------------------------
// Request path

void Simulator::on_request_arrival() {
    ++result_.arrivals;
    ++arrivals_in_window_;
    double length = rng_.request_length(profile_.mean_request_length, profile_.request_length_stddev);
    if (serving_.empty()) {
        // No capacity at all: availability loss, counted immediately.
        ++result_.timeouts;
        ++result_.termination_induced_timeouts;
        bump_timeout_series(now_);
    } else {
        dispatch(now_, length, now_, false);
    }
    if (auto t = next_arrival_time()) queue_.push(*t, EventKind::kRequestArrival, 0, 0);
}

void Simulator::dispatch(double t, double length, double first_arrival, bool redispatched) {
    VmId vm = serving_[wrr_cycle_[wrr_pos_]];
    wrr_pos_ = (wrr_pos_ + 1) % wrr_cycle_.size();
    servers_[vm].add_job(t, length, first_arrival, redispatched);
    schedule_departure(vm);
}

void Simulator::schedule_departure(VmId id) {
    double t = servers_[id].next_event_time();
    if (!std::isfinite(t)) return;
    if (t <= now_) t = now_ + 1e-9;
    queue_.push(t, EventKind::kRequestDeparture, static_cast<std::uint32_t>(id), ++departure_generation_[id]);
}

void Simulator::on_request_departure(VmId id) {
    PsServer& server = servers_[id];
    server.advance(now_);
    for (;;) {
        PsServer::Due due = server.due_at(now_);
        if (due.what == PsServer::Due::What::kNone) break;
        if (due.what == PsServer::Due::What::kCompletion) {
            double rt = now_ - server.job_first_arrival(due.slot);
            ++result_.completions;
            std::size_t sec = second_index(now_);
            if (sec < result_.completions_per_second.size()) {
                result_.response_time_sum[sec] += rt;
                ++result_.completions_per_second[sec];
            }
            std::size_t bin = static_cast<std::size_t>(rt * 1000.0);
            if (bin >= result_.response_histogram.size()) bin = result_.response_histogram.size() - 1;
            ++result_.response_histogram[bin];
        } else {
            ++result_.timeouts;
            if (server.job_redispatched(due.slot)) ++result_.termination_induced_timeouts;
            bump_timeout_series(now_);
        }
        server.finish_job(due.slot);
    }
    schedule_departure(id);
}

std::size_t Simulator::second_index(double t) const {
    if (result_.completions_per_second.empty()) return 0;
    std::size_t sec = static_cast<std::size_t>(t);
    return std::min(sec, result_.completions_per_second.size() - 1);
}

void Simulator::bump_timeout_series(double t) {
    std::size_t sec = second_index(t);
    if (sec < result_.timeouts_per_second.size()) ++result_.timeouts_per_second[sec];
}

// ---------------------------------------------------------------------------
// VM lifecycle

std::optional<VmId> Simulator::launch_vm(const std::string& type_name, VmRole role, double bid_price) {
    catalog_.at(type_name);  // reject unknown types up front
    if (role == VmRole::kSpot) {
        Bid bid{type_name, 1, bid_price};
        if (!bid_accepted(bid, market_)) {
            ++result_.launch_rejections;
            return std::nullopt;
        }
    }
    VmInstance& vm = store_.create();
    servers_.emplace_back();
    vm_generation_.push_back(0);
    departure_generation_.push_back(0);
    vm.type_name = type_name;
    vm.role = role;
    vm.bid_price = role == VmRole::kSpot ? bid_price : 0.0;
    vm.request_time = now_;
    vm.state = VmState::kRequested;
    double online_at = now_;
    if (role == VmRole::kSpot) {
        online_at += rng_.spot_request_delay(params_.spot_acquisition_mean, params_.spot_acquisition_sd);
        live_spots_.push_back(vm.id);
    }
    online_at += rng_.startup_delay(params_.od_boot_mean, params_.od_boot_sd);
    queue_.push(online_at, EventKind::kVmOnline, static_cast<std::uint32_t>(vm.id), vm_generation_[vm.id]);
    return vm.id;
}

void Simulator::schedule_user_termination(VmId id, double t) {
    queue_.push(t, EventKind::kVmOffline, static_cast<std::uint32_t>(id), vm_generation_[id]);
}

void Simulator::on_vm_online(VmId id) {
    VmInstance& vm = store_[id];
    if (vm.state != VmState::kRequested) return;
    vm.state = VmState::kOnline;
    vm.online_time = now_;
    vm.billing_anchor = now_;
    servers_[id].init(catalog_.at(vm.type_name).capacity[0], params_.request_timeout);
    auto pos = std::lower_bound(serving_.begin(), serving_.end(), id);
    serving_.insert(pos, id);
    rebuild_serving_set();
    update_shortfall(now_);
    queue_.push(vm.billing_anchor + kHour - params_.billing_lead, EventKind::kBillingBoundary,
                static_cast<std::uint32_t>(id), vm_generation_[id]);
}

void Simulator::on_vm_offline(VmId id, TerminationCause cause) {
    take_offline(id, cause);
    if (policy_enabled_) ensure_safe(cause == TerminationCause::kProvider ? "termination" : "scale-down");
}

void Simulator::take_offline(VmId id, TerminationCause cause) {
    VmInstance& vm = store_[id];
    if (!vm.is_live()) return;
    bool was_serving = vm.is_serving();
    if (vm.online_time >= 0.0) bill_instance(id, now_, cause);
    vm.state = VmState::kTerminated;
    vm.termination_cause = cause;
    vm.offline_time = now_;
    ++vm_generation_[id];
    ++departure_generation_[id];
    if (cause == TerminationCause::kUser) {
        // Shutdown latency is bookkeeping only: serving and billing both end now.
        rng_.shutdown_delay(params_.shutdown_mean, params_.shutdown_sd);
    }

    if (vm.role == VmRole::kSpot) {
        live_spots_.erase(std::remove(live_spots_.begin(), live_spots_.end(), id), live_spots_.end());
    }

    // Bookkeeping: exactly one of pool / group / orphan queue holds the id.
    auto& pool = provision_.on_demand_pool;
    pool.erase(std::remove(pool.begin(), pool.end(), id), pool.end());
    if (SpotGroup* g = provision_.group_of(id)) {
        g->remove_member(id);
        if (g->members.empty()) provision_.erase_group(g->type_name);
    }
    provision_.remove_from_orphan_queue(id);

    if (was_serving) {
        serving_.erase(std::remove(serving_.begin(), serving_.end(), id), serving_.end());
        rebuild_serving_set();
        update_shortfall(now_);
        auto jobs = servers_[id].drain_active();
        for (const auto& job : jobs) {
            if (job.redispatched || serving_.empty()) {
                ++result_.timeouts;
                ++result_.termination_induced_timeouts;
                bump_timeout_series(now_);
            } else {
                // Re-dispatched once with accrued service reset; the sojourn
                // clock keeps running from the original arrival.
                dispatch(now_, job.length, job.first_arrival, true);
            }
        }
    }
}

void Simulator::bill_instance(VmId id, double end_time, TerminationCause cause) {
    const VmInstance& vm = store_[id];
    double elapsed = end_time - vm.billing_anchor;
    if (elapsed < 0.0) return;
    int full_hours = static_cast<int>(std::floor((elapsed + kTimeEps) / kHour));
    bool partial = elapsed - full_hours * kHour > kTimeEps;

    LedgerEntry entry;
    entry.instance_id = id;
    entry.type_name = vm.type_name;
    entry.role = vm.role;
    // Initial instances carry anchors in the past; hours started before the
    // run belong to the previous ledger and are skipped.
    auto in_window = [&](int h) { return vm.billing_anchor + h * kHour >= -kTimeEps; };
    if (vm.role == VmRole::kOnDemand) {
        // Every started hour is charged in full.
        Money price = Money::from_double(catalog_.at(vm.type_name).on_demand_price);
        int hours = full_hours + (partial ? 1 : 0);
        for (int h = 0; h < hours; ++h) {
            if (in_window(h)) entry.charges.push_back({h, price});
        }
    } else {
        // Completed hours at the market price sampled at each hour's start; a
        // partial final hour is charged the same way unless the provider
        // ended it, which is free.
        for (int h = 0; h < full_hours; ++h) {
            if (!in_window(h)) continue;
            entry.charges.push_back({h, prices_.micro_price_at(vm.type_name, vm.billing_anchor + h * kHour)});
        }
        if (partial && cause == TerminationCause::kUser && in_window(full_hours)) {
            entry.charges.push_back(
                {full_hours, prices_.micro_price_at(vm.type_name, vm.billing_anchor + full_hours * kHour)});
        }
    }
    if (entry.charges.empty()) return;
    for (const auto& c : entry.charges) entry.total += c.price;
    result_.cost_ledger.push_back(std::move(entry));
}

void Simulator::rebuild_serving_set() {
    if (serving_.empty()) {
        wrr_cycle_.clear();
        wrr_pos_ = 0;
        return;
    }
    std::vector<std::pair<const InstanceType*, double>> entries;
    double margin = current_margin();
    entries.reserve(serving_.size());
    for (VmId id : serving_) entries.emplace_back(&catalog_.at(store_[id].type_name), margin);
    std::vector<int> weights = wrr_weights(entries, bottleneck_dim_);
    WrrScheduler wrr;
    wrr.reset(weights);
    long long total = 0;
    for (int w : weights) total += w;
    wrr_cycle_.clear();
    wrr_cycle_.reserve(static_cast<std::size_t>(total));
    for (long long i = 0; i < total; ++i) wrr_cycle_.push_back(wrr.pick());
    wrr_pos_ = 0;
}

void Simulator::update_shortfall(double t) {
    if (in_shortfall_) result_.shortfall_time += t - shortfall_segment_start_;
    shortfall_segment_start_ = t;
    ResourceVector nominal = ResourceVector::zeros(catalog_.dims());
    for (VmId id : serving_) nominal = nominal.plus(catalog_.at(store_[id].type_name).capacity);
    serving_nominal_ = nominal;
    in_shortfall_ = !serving_nominal_.covers(required_);
}

// ---------------------------------------------------------------------------
// Market events

void Simulator::on_price_change(std::uint32_t type_index) {
    const std::string& name = type_names_[type_index];
    const auto& samples = prices_.trace_for(name).samples;
    std::size_t cursor = price_cursor_[type_index];
    market_.set_price(name, samples[cursor].price);
    market_.clock = now_;

    std::vector<LiveSpotInstance> live;
    live.reserve(live_spots_.size());
    for (VmId id : live_spots_) {
        const VmInstance& vm = store_[id];
        live.push_back({id, vm.type_name, vm.bid_price});
    }
    for (VmId id : terminations_due(market_, live)) {
        queue_.push(now_, EventKind::kSpotTermination, static_cast<std::uint32_t>(id), vm_generation_[id]);
    }

    price_cursor_[type_index] = cursor + 1;
    if (cursor + 1 < samples.size()) {
        queue_.push(samples[cursor + 1].timestamp, EventKind::kPriceChange, type_index, 0);
    }
}

void Simulator::on_spot_termination(VmId id) {
    VmInstance& vm = store_[id];
    if (!vm.is_live()) return;
    // Any provider termination evicts the whole group of that type; members
    // that outbid the market become orphans.
    if (SpotGroup* g = provision_.find_group(vm.type_name)) {
        for (VmId member : std::vector<VmId>(g->members.begin(), g->members.end())) {
            if (member == id) continue;
            g->remove_member(member);
            provision_.orphan_queue.push_back(member);
        }
        g->members.clear();
        provision_.erase_group(vm.type_name);
        std::ostringstream line;
        line << "t=" << now_ << " trigger=eviction group=" << vm.type_name;
        result_.decision_log.push_back(line.str());
    }
    take_offline(id, TerminationCause::kProvider);
    refresh_quotas();
    if (policy_enabled_) ensure_safe("termination");
}

// ---------------------------------------------------------------------------
// Monitors

void Simulator::on_utilization_sample() {
    double window = now_ - last_sample_time_;
    double rate = window > 0.0 ? static_cast<double>(arrivals_in_window_) / window : 0.0;
    arrivals_in_window_ = 0;
    last_sample_time_ = now_;
    required_ = required_capacity(profile_, rate);
    update_shortfall(now_);
    refresh_quotas();
    if (policy_enabled_) ensure_safe("utilization");
    queue_.push(now_ + params_.sample_interval, EventKind::kUtilizationSample, 0, 0);
}

void Simulator::on_removal_sweep() {
    if (policy_enabled_ && provision_.mode == ProvisionMode::kSpot) {
        auto actions = group_removal_sweep(provision_, planner_context(), bottleneck_dim_);
        for (const auto& action : actions) {
            SpotGroup* g = provision_.find_group(action.group_type);
            if (g == nullptr) continue;
            for (VmId member : g->members) provision_.orphan_queue.push_back(member);
            provision_.erase_group(action.group_type);
            std::ostringstream line;
            line << "t=" << now_ << " trigger=sweep "
                 << (action.kind == SweepAction::Kind::kRemoveOverpriced ? "removed" : "replaced")
                 << " group=" << action.group_type;
            result_.decision_log.push_back(line.str());
        }
        if (!actions.empty()) {
            refresh_quotas();
            ensure_safe("sweep");
        }
    }
    queue_.push(now_ + config_.removal_interval, EventKind::kRemovalSweep, 0, 0);
}

void Simulator::on_billing_boundary(VmId id) {
    VmInstance& vm = store_[id];
    if (vm.state != VmState::kOnline) return;
    // This decision event fires billing_lead seconds before the hour mark.
    double k = std::round((now_ + params_.billing_lead - vm.billing_anchor) / kHour);
    double mark = vm.billing_anchor + k * kHour;

    if (!policy_enabled_) {
        queue_.push(mark + kHour - params_.billing_lead, EventKind::kBillingBoundary,
                    static_cast<std::uint32_t>(id), vm_generation_[id]);
        return;
    }

    bool release = false;
    if (vm.role == VmRole::kOnDemand) {
        PlannerContext ctx = planner_context();
        HourEndOutcome outcome = on_demand_hour_end(ctx);
        release = outcome.release;
        if (release) vm.state = VmState::kDraining;
        if (outcome.plan) {
            apply_plan(*outcome.plan, "billing:on-demand");
        }
    } else {
        SpotHourEndDecision decision = spot_hour_end(vm, provision_, store_, catalog_, current_margin());
        release = decision.action != SpotHourEndAction::kKeep;
        if (release) {
            const SpotGroup* host = provision_.group_of(id);
            vm.state = VmState::kDraining;
            if (decision.action == SpotHourEndAction::kShutdownAndReplace && host != nullptr) {
                launch_spot_for_group(*provision_.find_group(host->type_name), decision.replacement_count);
            }
        }
    }

    if (release) {
        queue_.push(mark, EventKind::kVmOffline, static_cast<std::uint32_t>(id), vm_generation_[id]);
    } else {
        queue_.push(mark + kHour - params_.billing_lead, EventKind::kBillingBoundary,
                    static_cast<std::uint32_t>(id), vm_generation_[id]);
    }
}

// ---------------------------------------------------------------------------
// Policy wiring

PlannerContext Simulator::planner_context() const {
    PlannerContext ctx;
    ctx.catalog = &catalog_;
    ctx.config = &config_;
    ctx.market = &market_;
    ctx.required = required_;
    ctx.on_demand_count = planning_on_demand_count();
    ctx.current_groups = provision_.group_types();
    ctx.mode = provision_.mode;
    ctx.allow_spot = allow_spot_;
    return ctx;
}

int Simulator::planning_on_demand_count() const {
    int n = 0;
    for (VmId id : provision_.on_demand_pool) {
        if (store_[id].counts_for_planning()) ++n;
    }
    return n;
}

void Simulator::refresh_quotas() {
    if (provision_.mode != ProvisionMode::kSpot) return;
    int s = static_cast<int>(provision_.spot_groups.size());
    if (s <= config_.f) return;
    double margin = config_.margin_for(ProvisionMode::kSpot);
    double margin_od = config_.margin_for(ProvisionMode::kOnDemand);
    const InstanceType& od = catalog_.at(config_.on_demand_type);
    int n = planning_on_demand_count();
    ResourceVector r_o = effective_capacity(od, margin).scaled(static_cast<double>(n));
    ResourceVector q = quota(required_, r_o, s, config_.f);
    double baseline = on_demand_baseline_cost(required_, od, margin_od);
    double r_o_cost = n * od.on_demand_price;
    for (auto& g : provision_.spot_groups) {
        g.quota = q;
        int count = num_instances(q, catalog_.at(g.type_name), margin);
        if (count >= 1) g.truthful_bid = truthful_bid(baseline, r_o_cost, s, count);
    }
}

void Simulator::ensure_safe(const char* trigger) {
    double margin = current_margin();
    bool covered;
    if (provision_.mode == ProvisionMode::kOnDemand) {
        ResourceVector cap = ResourceVector::zeros(catalog_.dims());
        const InstanceType& od = catalog_.at(config_.on_demand_type);
        cap = effective_capacity(od, margin).scaled(static_cast<double>(planning_on_demand_count()));
        covered = cap.covers(required_);
    } else {
        covered = static_cast<int>(provision_.spot_groups.size()) >= config_.f + 1 &&
                  is_safe(provision_, store_, catalog_, required_, config_, margin);
    }
    if (covered) return;
    PlannerContext ctx = planner_context();
    ProvisionPlan plan = scale_up(ctx);
    apply_plan(plan, trigger);
}

void Simulator::dissolve_groups_to_orphans() {
    for (auto& g : provision_.spot_groups) {
        for (VmId member : g.members) provision_.orphan_queue.push_back(member);
        g.members.clear();
    }
    provision_.spot_groups.clear();
}

void Simulator::launch_spot_for_group(SpotGroup& group, int count) {
    const InstanceType& type = catalog_.at(group.type_name);
    double bid = place_bid(type, config_.bidding_strategy, group.truthful_bid);
    // The strategy price may sit below the market while the truthful bid does
    // not; bid whichever still wins the instances.
    if (bid <= market_.current_price(group.type_name)) bid = group.truthful_bid;
    for (int i = 0; i < count; ++i) {
        if (auto id = launch_vm(group.type_name, VmRole::kSpot, bid)) {
            group.members.push_back(*id);
        }
    }
}

double Simulator::current_cost_estimate() const {
    const InstanceType& od = catalog_.at(config_.on_demand_type);
    std::vector<std::pair<std::string, int>> counts;
    for (const auto& g : provision_.spot_groups) {
        int live = 0;
        for (VmId id : g.members) {
            if (store_[id].counts_for_planning()) ++live;
        }
        counts.emplace_back(g.type_name, live);
    }
    return plan_cost_estimate(planning_on_demand_count(), od, counts, market_);
}

void Simulator::apply_plan(const ProvisionPlan& plan, const char* trigger) {
    std::string before = describe_provision();
    double est_before = current_cost_estimate();
    double margin_after = config_.margin_for(plan.mode);
    bool mode_changed = plan.mode != provision_.mode;

    if (plan.mode == ProvisionMode::kOnDemand) {
        dissolve_groups_to_orphans();
        provision_.mode = ProvisionMode::kOnDemand;
        int need = plan.on_demand_count - planning_on_demand_count();
        for (int i = 0; i < need; ++i) {
            if (auto id = launch_vm(config_.on_demand_type, VmRole::kOnDemand, 0.0)) {
                provision_.on_demand_pool.push_back(*id);
            }
        }
    } else {
        provision_.mode = ProvisionMode::kSpot;
        for (const auto& pg : plan.groups) {
            SpotGroup* g = provision_.find_group(pg.type_name);
            if (g == nullptr) {
                provision_.add_group_sorted({pg.type_name, pg.quota_share, pg.truthful_bid, {}});
                g = provision_.find_group(pg.type_name);
            } else {
                g->quota = pg.quota_share;
                g->truthful_bid = pg.truthful_bid;
            }
            // Orphans of the group's own type become native members at once,
            // whether queued or hosted as foreign members elsewhere.
            for (VmId id : std::vector<VmId>(provision_.orphan_queue)) {
                if (store_[id].type_name == pg.type_name && store_[id].counts_for_planning()) {
                    provision_.remove_from_orphan_queue(id);
                    g->members.push_back(id);
                }
            }
            for (auto& other : provision_.spot_groups) {
                if (other.type_name == pg.type_name) continue;
                for (VmId id : std::vector<VmId>(other.members)) {
                    if (store_[id].type_name == pg.type_name && store_[id].counts_for_planning()) {
                        other.remove_member(id);
                        g->members.push_back(id);
                    }
                }
            }
        }

        // Remaining orphans fill whichever groups are short of quota.
        for (auto& g : provision_.spot_groups) {
            while (!group_capacity(g, store_, catalog_, margin_after).covers(g.quota)) {
                VmId orphan = 0;
                bool found = false;
                for (VmId id : provision_.orphan_queue) {
                    if (store_[id].counts_for_planning()) {
                        orphan = id;
                        found = true;
                        break;
                    }
                }
                if (!found) break;
                adopt_orphan(provision_, store_, catalog_, orphan, g, margin_after);
            }
        }

        // Whatever capacity is still missing gets launched natively.
        for (auto& g : provision_.spot_groups) {
            ResourceVector deficit =
                g.quota.minus_clamped(group_capacity(g, store_, catalog_, margin_after));
            if (deficit.is_zero()) continue;
            int count = num_instances(deficit, catalog_.at(g.type_name), margin_after);
            launch_spot_for_group(g, count);
        }

        int need = plan.on_demand_count - planning_on_demand_count();
        for (int i = 0; i < need; ++i) {
            if (auto id = launch_vm(config_.on_demand_type, VmRole::kOnDemand, 0.0)) {
                provision_.on_demand_pool.push_back(*id);
            }
        }
    }

    if (mode_changed) {
        rebuild_serving_set();
        update_shortfall(now_);
    }
    check_fault_semantics_warning();
    provision_.check_invariants();

    std::ostringstream line;
    line << "t=" << now_ << " trigger=" << trigger << " | " << before << " -> " << describe_provision()
         << " | est=" << est_before << " -> " << plan.hourly_cost_estimate;
    result_.decision_log.push_back(line.str());
}

void Simulator::check_fault_semantics_warning() {
    if (provision_.mode != ProvisionMode::kSpot || config_.f < 1) return;
    bool heterogeneous = false;
    for (const auto& g : provision_.spot_groups) {
        for (VmId id : g.members) {
            if (store_[id].type_name != g.type_name) {
                heterogeneous = true;
                break;
            }
        }
    }
    if (!heterogeneous) return;
    // A foreign type spread across groups can break the f-subset guarantee;
    // the state is tolerated but counted.
    double margin = current_margin();
    std::vector<std::string> types = provision_.group_types();
    int s = static_cast<int>(types.size());
    for (int mask = 1; mask < (1 << s); ++mask) {
        if (__builtin_popcount(static_cast<unsigned>(mask)) > config_.f) continue;
        std::set<std::string> killed;
        for (int i = 0; i < s; ++i) {
            if (mask & (1 << i)) killed.insert(types[i]);
        }
        if (!surviving_capacity(provision_, store_, catalog_, killed, margin).covers(required_)) {
            ++result_.fault_semantics_warnings;
            return;
        }
    }
}

std::string Simulator::describe_provision() const {
    std::ostringstream out;
    out << (provision_.mode == ProvisionMode::kSpot ? "spot" : "on-demand")
        << " od=" << planning_on_demand_count();
    for (const auto& g : provision_.spot_groups) {
        out << " " << g.type_name << "x" << g.members.size();
    }
    if (!provision_.orphan_queue.empty()) out << " orphans=" << provision_.orphan_queue.size();
    return out.str();
}

void Simulator::record_pop(const SimEvent& ev) {
    std::uint64_t h = result_.event_hash ? result_.event_hash : 1469598103934665603ULL;
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(ev.fire_time));
    std::memcpy(&bits, &ev.fire_time, sizeof(bits));
    h = fnv1a(h, bits);
    h = fnv1a(h, (static_cast<std::uint64_t>(ev.klass) << 8) | static_cast<std::uint64_t>(ev.kind));
    h = fnv1a(h, ev.seq);
    result_.event_hash = h;
}

}  // namespace spotsim
