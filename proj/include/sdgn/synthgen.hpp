#pragma once

// Synthetic benchmark: a dynamic random graph whose nodes emit events through
// mutually exciting Hawkes processes (one event type per node).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adjacency.hpp"
#include "errors.hpp"
#include "events_io.hpp"
#include "jsonl.hpp"
#include "random.hpp"

namespace sdgn {

enum class kernel_mode {
    full_history, // sum over every prior neighbour spike
    last_spike,   // only the most recent neighbour spike
};

struct range {
    double lo = 0;
    double hi = 0;
};

struct SynthConfig {
    std::size_t num_nodes = 20;
    double sparsity = 0.3;      // edge count / complete-graph edge count
    std::size_t num_steps = 10; // graph epochs
    double duration = 1000;
    range mu_range{0.5, 1.5};
    range alpha_range{0.1, 0.5};
    range beta_range{1.0, 5.0};
    double carryover_fraction = 0.5;
    kernel_mode kernel = kernel_mode::full_history;
    double max_node_rate = 1e3; // thinning guard, events/s
    std::uint64_t seed = 1;

    void validate() const {
        auto check_range = [](const range& r, const char* name) {
            if (!(r.lo < r.hi)) throw validation_error(std::string(name) + " needs lo < hi");
        };
        check_range(mu_range, "mu_range");
        check_range(alpha_range, "alpha_range");
        check_range(beta_range, "beta_range");
        if (mu_range.lo < 0 || alpha_range.lo < 0 || beta_range.lo <= 0) {
            throw validation_error("Hawkes parameter ranges must be non-negative (beta positive)");
        }
        if (!(sparsity >= 0 && sparsity <= 1)) throw validation_error("sparsity must lie in [0, 1]");
        if (!(duration > 0)) throw validation_error("duration must be positive");
        if (num_steps == 0) throw validation_error("num_steps must be at least 1");
        if (!(carryover_fraction >= 0 && carryover_fraction <= 1)) {
            throw validation_error("carryover_fraction must lie in [0, 1]");
        }
        if (num_nodes == 0) throw validation_error("num_nodes must be at least 1");
    }

    std::size_t target_edges() const {
        const double pairs = 0.5*num_nodes*(num_nodes - 1.0);
        return static_cast<std::size_t>(std::llround(sparsity*pairs));
    }
};

struct GraphSnapshot {
    double start = 0;
    std::vector<edge> edges; // i < j, sorted

    friend bool operator==(const GraphSnapshot&, const GraphSnapshot&) = default;
};

struct GraphTimeline {
    std::size_t num_nodes = 0;
    double duration = 0;
    std::vector<GraphSnapshot> snapshots;

    double epoch_end(std::size_t k) const {
        return k + 1 < snapshots.size()? snapshots[k + 1].start: duration;
    }

    std::size_t epoch_at(double t) const {
        auto it = std::upper_bound(snapshots.begin(), snapshots.end(), t,
            [](double x, const GraphSnapshot& s) { return x < s.start; });
        return it == snapshots.begin()? 0: static_cast<std::size_t>(it - snapshots.begin()) - 1;
    }

    Adjacency adjacency(std::size_t k) const {
        return Adjacency::from_edges(num_nodes, snapshots[k].edges);
    }

    friend bool operator==(const GraphTimeline&, const GraphTimeline&) = default;
};

// Per-node base rates and symmetric per-pair excitation parameters.
struct HawkesParams {
    std::size_t n = 0;
    std::vector<double> mu;
    std::vector<double> alpha; // n*n, symmetric
    std::vector<double> beta;  // n*n, symmetric

    double a(std::size_t i, std::size_t j) const { return alpha[i*n + j]; }
    double b(std::size_t i, std::size_t j) const { return beta[i*n + j]; }
};

namespace detail {

inline std::size_t pair_count(std::size_t n) { return n*(n - 1)/2; }

// Maps k in [0, n(n-1)/2) to the k-th unordered pair in row-major order.
inline edge pair_from_index(std::size_t n, std::size_t k) {
    std::size_t i = 0;
    std::size_t row = n - 1;
    while (k >= row) {
        k -= row;
        ++i;
        --row;
    }
    return {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i + 1 + k)};
}

inline std::size_t pair_index(std::size_t n, edge e) {
    auto [i, j] = e;
    return i*(2*n - i - 1)/2 + (j - i - 1);
}

// Uniform sample of `m` distinct pair indices from `candidates`.
inline std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> candidates, std::size_t m, rng_engine& rng) {
    m = std::min(m, candidates.size());
    for (std::size_t k = 0; k < m; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, candidates.size() - 1);
        std::swap(candidates[k], candidates[pick(rng)]);
    }
    candidates.resize(m);
    return candidates;
}

} // namespace detail

inline GraphTimeline sample_graph_timeline(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.num_nodes;
    const std::size_t pairs = detail::pair_count(n);
    const std::size_t target = std::min(cfg.target_edges(), pairs);
    auto rng = make_rng(cfg.seed, streams::graph);

    GraphTimeline tl;
    tl.num_nodes = n;
    tl.duration = cfg.duration;

    std::vector<std::size_t> all(pairs);
    std::iota(all.begin(), all.end(), 0);
    std::vector<std::size_t> current = detail::sample_without_replacement(all, target, rng);

    for (std::size_t k = 0; k < cfg.num_steps; ++k) {
        if (k > 0) {
            auto keep = static_cast<std::size_t>(std::llround(cfg.carryover_fraction*current.size()));
            current = detail::sample_without_replacement(current, keep, rng);
            std::sort(current.begin(), current.end());
            std::vector<std::size_t> free;
            free.reserve(pairs - current.size());
            std::set_difference(all.begin(), all.end(), current.begin(), current.end(), std::back_inserter(free));
            auto fresh = detail::sample_without_replacement(std::move(free), target - current.size(), rng);
            current.insert(current.end(), fresh.begin(), fresh.end());
        }
        std::sort(current.begin(), current.end());
        GraphSnapshot snap;
        snap.start = cfg.duration*static_cast<double>(k)/static_cast<double>(cfg.num_steps);
        for (auto p: current) snap.edges.push_back(detail::pair_from_index(n, p));
        tl.snapshots.push_back(std::move(snap));
    }
    return tl;
}

inline HawkesParams draw_hawkes_params(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.num_nodes;
    auto rng = make_rng(cfg.seed, streams::params);
    HawkesParams p;
    p.n = n;
    p.mu.resize(n);
    for (auto& m: p.mu) m = uniform(rng, cfg.mu_range.lo, cfg.mu_range.hi);
    p.alpha.assign(n*n, 0.0);
    p.beta.assign(n*n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double a = uniform(rng, cfg.alpha_range.lo, cfg.alpha_range.hi);
            const double b = uniform(rng, cfg.beta_range.lo, cfg.beta_range.hi);
            p.alpha[i*n + j] = p.alpha[j*n + i] = a;
            p.beta[i*n + j] = p.beta[j*n + i] = b;
        }
    }
    return p;
}

// Neighbour lists of every epoch.
inline std::vector<std::vector<std::vector<std::uint32_t>>> neighbour_lists(const GraphTimeline& tl) {
    std::vector<std::vector<std::vector<std::uint32_t>>> out(tl.snapshots.size());
    for (std::size_t k = 0; k < tl.snapshots.size(); ++k) {
        out[k].resize(tl.num_nodes);
        for (auto [i, j]: tl.snapshots[k].edges) {
            out[k][i].push_back(j);
            out[k][j].push_back(i);
        }
    }
    return out;
}

// Conditional intensity of `node` at `t` given per-node spike history (times < t count).
inline double hawkes_intensity(std::size_t node, double t, std::span<const SpikeTrain> history,
                               const GraphTimeline& tl, const HawkesParams& p,
                               kernel_mode mode = kernel_mode::full_history) {
    if (!(t >= 0 && t <= tl.duration)) throw domain_error("time outside [0, duration]");
    if (node >= p.n) throw domain_error("node index out of range");
    double lambda = p.mu[node];
    if (tl.snapshots.empty()) return lambda;
    const auto& snap = tl.snapshots[tl.epoch_at(t)];
    for (auto [a, b]: snap.edges) {
        std::size_t j;
        if (a == node) j = b;
        else if (b == node) j = a;
        else continue;
        const auto& times = history[j].times;
        auto end = std::lower_bound(times.begin(), times.end(), t);
        const double beta = p.b(node, j);
        if (mode == kernel_mode::last_spike) {
            if (end != times.begin()) lambda += p.a(node, j)*std::exp(-beta*(t - *(end - 1)));
        }
        else {
            double s = 0;
            for (auto it = times.begin(); it != end; ++it) s += std::exp(-beta*(t - *it));
            lambda += p.a(node, j)*s;
        }
    }
    return lambda;
}

struct SynthResult {
    EventSequence events;
    GraphTimeline timeline;
    HawkesParams params;
};

// Ogata thinning. Intensities only decay between events inside an epoch, so the
// current total rate bounds the process until the next event or epoch boundary.
inline SynthResult simulate(const SynthConfig& cfg) {
    cfg.validate();
    SynthResult res{{}, sample_graph_timeline(cfg), draw_hawkes_params(cfg)};
    const auto& tl = res.timeline;
    const auto& p = res.params;
    const std::size_t n = cfg.num_nodes;
    const auto nbrs = neighbour_lists(tl);
    auto rng = make_rng(cfg.seed, streams::events);
    std::exponential_distribution<double> expo(1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // trace[j*n + i]: decayed spike count of source j seen by target i, valid at last[j].
    std::vector<double> trace(n*n, 0.0);
    std::vector<double> last(n, -1.0);
    std::vector<double> lambda(n);
    std::vector<Event> events;

    auto intensities = [&](double t, std::size_t epoch) {
        double total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double l = p.mu[i];
            for (auto j: nbrs[epoch][i]) {
                if (last[j] < 0) continue;
                l += p.a(i, j)*trace[j*n + i]*std::exp(-p.b(i, j)*(t - last[j]));
            }
            lambda[i] = l;
            total += l;
        }
        return total;
    };

    double t = 0;
    std::size_t epoch = 0;
    while (t < cfg.duration) {
        const double bound = intensities(t, epoch);
        for (std::size_t i = 0; i < n; ++i) {
            if (!(lambda[i] <= cfg.max_node_rate)) {
                throw simulation_error("intensity of node " + std::to_string(i) + " exceeded "
                    + std::to_string(cfg.max_node_rate) + "/s at t=" + std::to_string(t)
                    + " (excitation too strong for this degree)");
            }
        }
        const double boundary = tl.epoch_end(epoch);
        double cand = bound > 0? t + expo(rng)/bound: boundary;
        if (cand >= boundary) {
            t = boundary;
            ++epoch;
            continue;
        }
        t = cand;
        const double total = intensities(t, epoch);
        const double u = unit(rng)*bound;
        if (u >= total) continue;
        std::size_t k = 0;
        double acc = lambda[0];
        while (acc <= u && k + 1 < n) acc += lambda[++k];
        events.push_back({t, static_cast<event_type>(k)});
        for (std::size_t i = 0; i < n; ++i) {
            double& tr = trace[k*n + i];
            if (cfg.kernel == kernel_mode::last_spike || last[k] < 0) tr = 1.0;
            else tr = tr*std::exp(-p.b(k, i)*(t - last[k])) + 1.0;
        }
        last[k] = t;
    }
    res.events = EventSequence(std::move(events), n, cfg.duration);
    return res;
}

// Sidecar format: one {"epoch_start": t, "edges": [[i,j],...]} record per snapshot.
inline void write_graph_file(std::ostream& out, const GraphTimeline& tl) {
    for (const auto& s: tl.snapshots) {
        json edges = json::array();
        for (auto [i, j]: s.edges) edges.push_back({i, j});
        write_record(out, json{{"epoch_start", s.start}, {"edges", edges}});
    }
}

inline void write_graph_file(const std::string& path, const GraphTimeline& tl) {
    auto out = open_output(path);
    write_graph_file(out, tl);
}

inline GraphTimeline parse_graph_file(std::istream& in, std::size_t num_nodes, double duration) {
    GraphTimeline tl;
    tl.num_nodes = num_nodes;
    tl.duration = duration;
    for_each_record(in, [&](const json& rec, std::size_t lineno) {
        if (!rec.contains("epoch_start") || !rec.contains("edges") || !rec["edges"].is_array()) {
            throw parse_error(lineno, "expected {\"epoch_start\": t, \"edges\": [[i,j],...]}");
        }
        GraphSnapshot s;
        s.start = rec["epoch_start"].get<double>();
        if (!tl.snapshots.empty() && s.start <= tl.snapshots.back().start) {
            throw parse_error(lineno, "epoch starts must increase");
        }
        for (const auto& e: rec["edges"]) {
            if (!e.is_array() || e.size() != 2) throw parse_error(lineno, "edge must be [i, j]");
            auto i = e[0].get<std::uint32_t>();
            auto j = e[1].get<std::uint32_t>();
            if (i >= num_nodes || j >= num_nodes || i == j) throw parse_error(lineno, "invalid edge endpoint");
            s.edges.emplace_back(std::min(i, j), std::max(i, j));
        }
        std::sort(s.edges.begin(), s.edges.end());
        s.edges.erase(std::unique(s.edges.begin(), s.edges.end()), s.edges.end());
        tl.snapshots.push_back(std::move(s));
    });
    if (tl.snapshots.empty()) throw parse_error(0, "graph file has no snapshots");
    return tl;
}

inline GraphTimeline read_graph_file(const std::string& path, std::size_t num_nodes, double duration) {
    auto in = open_input(path);
    return parse_graph_file(in, num_nodes, duration);
}

} // namespace sdgn
