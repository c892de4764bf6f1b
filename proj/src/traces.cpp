#include "spotsim/traces.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace spotsim {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    return fields;
}

double parse_double(const std::string& text, const std::string& where) {
    try {
        std::size_t pos = 0;
        double v = std::stod(text, &pos);
        if (pos != text.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ValidationError(where + ": cannot parse number '" + text + "'");
    }
}

long long parse_int(const std::string& text, const std::string& where) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw ValidationError(where + ": cannot parse integer '" + text + "'");
    }
    return v;
}

std::string row_context(const std::string& path, std::size_t line_no) {
    return path + ":" + std::to_string(line_no);
}

}  // namespace

Money Money::parse(const std::string& text) {
    if (text.empty()) throw ValidationError("money: empty value");
    std::size_t dot = text.find('.');
    std::string whole = dot == std::string::npos ? text : text.substr(0, dot);
    std::string frac = dot == std::string::npos ? "" : text.substr(dot + 1);
    if (frac.size() > 6) throw ValidationError("money: more than six decimals in '" + text + "'");
    if (whole.empty()) whole = "0";
    frac.resize(6, '0');
    std::int64_t w = parse_int(whole, "money");
    std::int64_t f = parse_int(frac, "money");
    if (w < 0 || f < 0) throw ValidationError("money: negative value '" + text + "'");
    return Money(w * 1000000 + f);
}

Money Money::from_double(double value) {
    return Money(static_cast<std::int64_t>(std::llround(value * 1e6)));
}

std::string Money::str() const {
    char buf[40];
    std::int64_t whole = micros_ / 1000000;
    std::int64_t frac = micros_ % 1000000;
    std::snprintf(buf, sizeof(buf), "%lld.%06lld", static_cast<long long>(whole),
                  static_cast<long long>(frac));
    return buf;
}

void WorkloadTrace::validate() const {
    if (samples.empty()) throw ValidationError("workload trace is empty");
    if (interval <= 0.0) throw ValidationError("workload trace: non-positive interval");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].request_count < 0) {
            throw ValidationError("workload trace: negative request count at sample " + std::to_string(i));
        }
        if (i > 0) {
            double gap = samples[i].timestamp - samples[i - 1].timestamp;
            if (gap <= 0.0) {
                throw ValidationError("workload trace: timestamps not strictly increasing at sample " +
                                      std::to_string(i));
            }
            if (std::abs(gap - interval) > 1e-6) {
                throw ValidationError("workload trace: non-uniform interval at sample " + std::to_string(i));
            }
        }
    }
}

long long WorkloadTrace::total_requests() const {
    long long total = 0;
    for (const auto& s : samples) total += s.request_count;
    return total;
}

WorkloadTrace load_workload(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("workload: cannot open '" + path + "'");
    WorkloadTrace trace;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1 && line.rfind("timestamp", 0) == 0) continue;  // header
        auto fields = split_csv(line);
        if (fields.size() != 2) {
            throw ValidationError(row_context(path, line_no) + ": expected 2 fields, got " +
                                  std::to_string(fields.size()));
        }
        WorkloadSample s;
        s.timestamp = parse_double(fields[0], row_context(path, line_no));
        s.request_count = parse_int(fields[1], row_context(path, line_no));
        if (s.request_count < 0) {
            throw ValidationError(row_context(path, line_no) + ": negative request count");
        }
        if (!trace.samples.empty() && s.timestamp <= trace.samples.back().timestamp) {
            throw ValidationError(row_context(path, line_no) + ": timestamps not strictly increasing");
        }
        trace.samples.push_back(s);
    }
    if (trace.samples.empty()) throw ValidationError("workload: '" + path + "' has no samples");
    trace.interval = trace.samples.size() > 1 ? trace.samples[1].timestamp - trace.samples[0].timestamp : 1.0;
    trace.validate();
    return trace;
}

void save_workload(const WorkloadTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("workload: cannot write '" + path + "'");
    out << "timestamp_seconds,request_count\n";
    char buf[64];
    for (const auto& s : trace.samples) {
        std::snprintf(buf, sizeof(buf), "%.3f,%lld\n", s.timestamp, s.request_count);
        out << buf;
    }
}

const PriceTrace& PriceBook::trace_for(const std::string& type) const {
    auto it = traces.find(type);
    if (it == traces.end()) throw ValidationError("price book: no trace for type '" + type + "'");
    return it->second;
}

Money PriceBook::micro_price_at(const std::string& type, double t) const {
    const PriceTrace& trace = trace_for(type);
    if (trace.samples.empty() || t < trace.samples.front().timestamp) {
        throw std::out_of_range("micro_price_at: t precedes trace for '" + type + "'");
    }
    auto it = std::upper_bound(trace.samples.begin(), trace.samples.end(), t,
                               [](double value, const PriceSample& s) { return value < s.timestamp; });
    std::size_t idx = static_cast<std::size_t>(std::distance(trace.samples.begin(), std::prev(it)));
    return micro_prices.at(type)[idx];
}

PriceBook load_price_traces(const std::string& path, const Catalog& catalog) {
    std::ifstream in(path);
    if (!in) throw ValidationError("prices: cannot open '" + path + "'");
    PriceBook book;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1 && line.rfind("timestamp", 0) == 0) continue;
        auto fields = split_csv(line);
        if (fields.size() != 3) {
            throw ValidationError(row_context(path, line_no) + ": expected 3 fields, got " +
                                  std::to_string(fields.size()));
        }
        double ts = parse_double(fields[0], row_context(path, line_no));
        const std::string& type = fields[1];
        if (catalog.find(type) == nullptr) {
            throw ValidationError(row_context(path, line_no) + ": unknown instance type '" + type + "'");
        }
        Money price = Money::parse(fields[2]);
        if (price.micros() <= 0) {
            throw ValidationError(row_context(path, line_no) + ": non-positive price");
        }
        auto& trace = book.traces[type];
        if (trace.instance_type.empty()) trace.instance_type = type;
        if (!trace.samples.empty() && ts <= trace.samples.back().timestamp) {
            throw ValidationError(row_context(path, line_no) + ": timestamps not strictly increasing for '" +
                                  type + "'");
        }
        trace.samples.push_back({ts, price.to_double()});
        book.micro_prices[type].push_back(price);
    }
    for (const auto& t : catalog.types()) {
        if (book.traces.find(t.name) == book.traces.end()) {
            throw ValidationError("prices: '" + path + "' has no samples for catalog type '" + t.name + "'");
        }
    }
    for (auto& [type, trace] : book.traces) trace.validate();
    return book;
}

void save_price_traces(const PriceBook& book, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("prices: cannot write '" + path + "'");
    out << "timestamp_seconds,instance_type,price\n";
    // Interleave by timestamp, then type name, matching loader expectations.
    struct Row {
        double ts;
        const std::string* type;
        Money price;
    };
    std::vector<Row> rows;
    for (const auto& [type, trace] : book.traces) {
        const auto& micros = book.micro_prices.at(type);
        for (std::size_t i = 0; i < trace.samples.size(); ++i) {
            rows.push_back({trace.samples[i].timestamp, &type, micros[i]});
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.ts != b.ts) return a.ts < b.ts;
        return *a.type < *b.type;
    });
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.3f,", r.ts);
        out << buf << *r.type << "," << r.price.str() << "\n";
    }
}

Money ExperimentResult::total_cost() const {
    Money total;
    for (const auto& e : cost_ledger) total += e.total;
    return total;
}

double ExperimentResult::availability() const {
    if (duration <= 0.0) return 1.0;
    return 1.0 - shortfall_time / duration;
}

double ExperimentResult::percentile(double p) const {
    std::uint64_t total = 0;
    for (auto c : response_histogram) total += c;
    if (total == 0) return 0.0;
    std::uint64_t threshold = static_cast<std::uint64_t>(std::ceil(p * static_cast<double>(total)));
    if (threshold == 0) threshold = 1;
    std::uint64_t cum = 0;
    for (std::size_t bin = 0; bin < response_histogram.size(); ++bin) {
        cum += response_histogram[bin];
        if (cum >= threshold) return (static_cast<double>(bin) + 1.0) * 0.001;
    }
    return static_cast<double>(response_histogram.size()) * 0.001;
}

void emit_report(const ExperimentResult& result, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir)) {
        throw std::runtime_error("emit_report: cannot create output directory '" + out_dir + "'");
    }

    {
        std::FILE* f = std::fopen((out_dir + "/response_time.csv").c_str(), "w");
        if (f == nullptr) throw std::runtime_error("emit_report: cannot write response_time.csv");
        std::fputs("second,mean_response_time,completions,timeouts\n", f);
        for (std::size_t s = 0; s < result.completions_per_second.size(); ++s) {
            double mean = result.completions_per_second[s] > 0
                              ? result.response_time_sum[s] / result.completions_per_second[s]
                              : 0.0;
            std::fprintf(f, "%zu,%.6f,%u,%u\n", s, mean, result.completions_per_second[s],
                         result.timeouts_per_second[s]);
        }
        std::fclose(f);
    }

    {
        std::ofstream f(out_dir + "/cost.csv");
        f << "instance_id,type,role,hours,total\n";
        auto entries = result.cost_ledger;
        std::sort(entries.begin(), entries.end(),
                  [](const LedgerEntry& a, const LedgerEntry& b) { return a.instance_id < b.instance_id; });
        for (const auto& e : entries) {
            f << e.instance_id << "," << e.type_name << ","
              << (e.role == VmRole::kOnDemand ? "on-demand" : "spot") << "," << e.charges.size() << ","
              << e.total.str() << "\n";
        }
    }

    {
        std::ofstream f(out_dir + "/summary.csv");
        f << "total_cost,availability,p50_response_time,p95_response_time,p99_response_time,timeouts\n";
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.3f,%.3f,%.3f,%lld\n", result.total_cost().str().c_str(),
                      result.availability(), result.percentile(0.50), result.percentile(0.95),
                      result.percentile(0.99), result.timeouts);
        f << buf;
    }

    {
        std::ofstream f(out_dir + "/decisions.log");
        for (const auto& line : result.decision_log) f << line << "\n";
    }
}

}  // namespace spotsim
