#pragma once

// Regularised pair-based STDP on a fixed sparse topology.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "jsonl.hpp"

namespace sdgn {

struct Synapse {
    std::uint32_t pre = 0;
    std::uint32_t post = 0;
    double w = 0;

    friend bool operator==(const Synapse&, const Synapse&) = default;
};

// Plastic weights w_ij on a fixed edge set, |w| <= w_max.
class SynapseMatrix {
public:
    SynapseMatrix() = default;

    SynapseMatrix(std::size_t num_neurons, std::vector<Synapse> synapses, double w_max):
        n_(num_neurons), w_max_(w_max), syn_(std::move(synapses)),
        out_(num_neurons), in_(num_neurons)
    {
        if (!(w_max_ > 0)) throw validation_error("w_max must be positive");
        for (std::uint32_t k = 0; k < syn_.size(); ++k) {
            auto& s = syn_[k];
            if (s.pre >= n_ || s.post >= n_) throw validation_error("synapse endpoint out of range");
            s.w = std::clamp(s.w, -w_max_, w_max_);
            out_[s.pre].push_back(k);
            in_[s.post].push_back(k);
        }
    }

    std::size_t num_neurons() const { return n_; }
    std::size_t size() const { return syn_.size(); }
    double w_max() const { return w_max_; }

    std::span<const Synapse> synapses() const { return syn_; }
    const Synapse& operator[](std::size_t k) const { return syn_[k]; }
    std::span<const std::uint32_t> outgoing(std::size_t neuron) const { return out_[neuron]; }
    std::span<const std::uint32_t> incoming(std::size_t neuron) const { return in_[neuron]; }

    double weight(std::size_t k) const { return syn_[k].w; }

    // Adds `dw` and clamps into [-w_max, w_max].
    void add(std::size_t k, double dw) {
        syn_[k].w = std::clamp(syn_[k].w + dw, -w_max_, w_max_);
    }

    std::vector<double> weights() const {
        std::vector<double> w(syn_.size());
        for (std::size_t k = 0; k < syn_.size(); ++k) w[k] = syn_[k].w;
        return w;
    }

    friend bool operator==(const SynapseMatrix& a, const SynapseMatrix& b) {
        return a.n_ == b.n_ && a.w_max_ == b.w_max_ && a.syn_ == b.syn_;
    }

private:
    std::size_t n_ = 0;
    double w_max_ = 1;
    std::vector<Synapse> syn_;
    std::vector<std::vector<std::uint32_t>> out_, in_;
};

enum class rate_schedule {
    constant,
    inverse_sqrt, // eta_t = eta / sqrt(t), t = spikes observed so far
};

struct StdpConfig {
    double eta = 0.01;
    double a_plus = 1.0;
    double a_minus = 1.05;
    double tau_plus = 0.02;
    double tau_minus = 0.02;
    double reg_alpha = 2.0;
    double reg_beta = 0.1;
    double pairing_window = 0; // 0 selects 5*max(tau_plus, tau_minus)
    rate_schedule schedule = rate_schedule::constant;

    double window() const {
        return pairing_window > 0? pairing_window: 5*std::max(tau_plus, tau_minus);
    }

    void validate() const {
        if (!(eta > 0)) throw validation_error("eta must be positive");
        if (!(tau_plus > 0 && tau_minus > 0)) throw validation_error("STDP time constants must be positive");
        if (!(reg_alpha >= 1)) throw validation_error("reg_alpha must be >= 1");
        if (!(reg_beta >= 0)) throw validation_error("reg_beta must be non-negative");
    }
};

// Pair kernel; dt = t_post - t_pre.
inline double stdp_kernel(double dt, const StdpConfig& cfg) {
    if (dt > 0) return cfg.a_plus*std::exp(-dt/cfg.tau_plus);
    if (dt < 0) return -cfg.a_minus*std::exp(dt/cfg.tau_minus);
    return 0.0;
}

// Soft-bounded, exponentially regularised update. Zero exactly at w = w_max.
inline double weight_update(double w, double dt, const StdpConfig& cfg, double w_max, double eta) {
    const double soft = 1.0 - w/w_max;
    if (soft <= 0) return 0.0;
    return eta*stdp_kernel(dt, cfg)*std::pow(soft, cfg.reg_alpha)*std::exp(-cfg.reg_beta*std::abs(w));
}

inline double weight_update(double w, double dt, const StdpConfig& cfg, double w_max) {
    return weight_update(w, dt, cfg, w_max, cfg.eta);
}

// Most recent spike per neuron plus the running spike count used by the schedule.
struct SpikeHistory {
    std::vector<double> last;
    std::uint64_t count = 0;

    explicit SpikeHistory(std::size_t n = 0): last(n, std::numeric_limits<double>::quiet_NaN()) {}

    bool has(std::size_t i) const { return !std::isnan(last[i]); }
};

inline double learning_rate(const StdpConfig& cfg, std::uint64_t t) {
    if (cfg.schedule == rate_schedule::inverse_sqrt) return cfg.eta/std::sqrt(static_cast<double>(std::max<std::uint64_t>(t, 1)));
    return cfg.eta;
}

// Nearest-neighbour pairing triggered by a spike of `neuron` at `t`:
// incoming synapses potentiate against their presynaptic last spike, outgoing
// synapses depress against their postsynaptic last spike. Records the spike.
inline void apply_on_spike(SynapseMatrix& weights, const StdpConfig& cfg,
                           std::size_t neuron, double t, SpikeHistory& recent) {
    if (recent.has(neuron) && t < recent.last[neuron]) {
        throw invariant_fault("STDP spike at " + std::to_string(t) + " precedes recorded spike");
    }
    ++recent.count;
    const double eta = learning_rate(cfg, recent.count);
    const double window = cfg.window();
    const double w_max = weights.w_max();
    for (auto k: weights.incoming(neuron)) {
        const auto pre = weights[k].pre;
        if (!recent.has(pre)) continue;
        const double dt = t - recent.last[pre];
        if (dt > window) continue;
        weights.add(k, weight_update(weights.weight(k), dt, cfg, w_max, eta));
    }
    for (auto k: weights.outgoing(neuron)) {
        const auto post = weights[k].post;
        if (!recent.has(post)) continue;
        const double dt = recent.last[post] - t;
        if (-dt > window) continue;
        weights.add(k, weight_update(weights.weight(k), dt, cfg, w_max, eta));
    }
    recent.last[neuron] = t;
}

struct WeightSnapshot {
    double observed_spikes = 0;
    std::vector<double> weights;
};

// Least-squares slope of log ||w_T - w*||^2 against log T, with w* the final
// snapshot. Every earlier snapshot is a fit point.
inline double convergence_slope(std::span<const WeightSnapshot> snaps) {
    if (snaps.size() < 5) throw validation_error("convergence_slope needs at least 5 snapshots");
    const auto& ref = snaps.back().weights;
    std::vector<double> xs, ys;
    for (std::size_t s = 0; s + 1 < snaps.size(); ++s) {
        const auto& w = snaps[s].weights;
        if (w.size() != ref.size()) throw shape_error("weight snapshots differ in size");
        double d2 = 0;
        for (std::size_t k = 0; k < w.size(); ++k) d2 += (w[k] - ref[k])*(w[k] - ref[k]);
        if (!(d2 > 0) || !(snaps[s].observed_spikes > 0)) {
            throw validation_error("snapshot " + std::to_string(s) + " coincides with the reference");
        }
        xs.push_back(std::log(snaps[s].observed_spikes));
        ys.push_back(std::log(d2));
    }
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) { mx += xs[k]; my += ys[k]; }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxy += (xs[k] - mx)*(ys[k] - my);
        sxx += (xs[k] - mx)*(xs[k] - mx);
    }
    if (!(sxx > 0)) throw validation_error("snapshots must span distinct spike counts");
    return sxy/sxx;
}

inline void write_weights(std::ostream& out, const SynapseMatrix& m) {
    for (const auto& s: m.synapses()) write_record(out, json{{"pre", s.pre}, {"post", s.post}, {"w", s.w}});
}

inline json weights_to_json(const SynapseMatrix& m) {
    json arr = json::array();
    for (const auto& s: m.synapses()) arr.push_back(json{{"pre", s.pre}, {"post", s.post}, {"w", s.w}});
    return json{{"num_neurons", m.num_neurons()}, {"w_max", m.w_max()}, {"synapses", arr}};
}

inline SynapseMatrix weights_from_json(const json& j) {
    std::vector<Synapse> syn;
    for (const auto& s: j.at("synapses")) {
        syn.push_back({s.at("pre").get<std::uint32_t>(), s.at("post").get<std::uint32_t>(), s.at("w").get<double>()});
    }
    return SynapseMatrix(j.at("num_neurons").get<std::size_t>(), std::move(syn), j.at("w_max").get<double>());
}

} // namespace sdgn
