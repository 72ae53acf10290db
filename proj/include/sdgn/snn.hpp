#pragma once

// Event-driven leaky integrate-and-fire network.
//
// Membrane:  tau_m dv/dt = -alpha (v - v_rest) + I(t)
// Synapses:  every delivered spike adds w*eps to I, which decays at rate beta.
//
// Between events the (v, I) pair has a closed-form propagator, so the simulator
// only takes adaptive steps while some neuron could still reach threshold;
// otherwise it jumps straight to the next queued delivery.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "events_io.hpp"
#include "jsonl.hpp"
#include "plasticity.hpp"
#include "random.hpp"

namespace sdgn {

struct LifParams {
    double tau_m = 0.02;
    double leak_alpha = 1.0;
    double v_rest = 0.0;
    double v_th = 1.0;
    double v_reset = 0.0;
    double syn_epsilon = 1.0;
    double syn_beta = 50.0;
    double surrogate_sharpness = 1.0;

    void validate() const {
        if (!(tau_m > 0)) throw validation_error("tau_m must be positive");
        if (!(leak_alpha > 0)) throw validation_error("leak_alpha must be positive");
        if (!(syn_beta > 0)) throw validation_error("syn_beta must be positive");
        if (!(v_reset <= v_rest && v_rest < v_th)) throw validation_error("need v_reset <= v_rest < v_th");
    }
};

struct SimConfig {
    double tau_min = 5e-4;   // bound on |v| * dt
    double dt_max = 2e-3;
    double record_grid = 1e-3;
    double syn_delay = 1e-3;

    void validate() const {
        if (!(tau_min > 0 && dt_max > 0)) throw validation_error("tau_min and dt_max must be positive");
        if (!(syn_delay > 0)) throw validation_error("synaptic delay must be positive");
    }
};

struct InputSynapse {
    std::uint32_t target = 0;
    double w = 0;
};

// Input channels (one per event type) feeding a recurrent plastic LIF population.
struct Network {
    LifParams lif;
    std::vector<std::vector<InputSynapse>> inputs; // per channel
    SynapseMatrix recurrent;

    std::size_t num_neurons() const { return recurrent.num_neurons(); }
    std::size_t num_inputs() const { return inputs.size(); }
};

struct NetworkConfig {
    std::size_t neurons_per_type = 4;
    double input_weight = 3.0;
    std::size_t recurrent_fanout = 16;
    double init_weight = 0.1; // recurrent weights ~ U(-init_weight, init_weight)
    double w_max = 1.0;
    std::uint64_t seed = 1;
};

// Type e drives neurons [e*R, (e+1)*R); recurrent targets are drawn uniformly without self-loops.
inline Network make_block_network(std::size_t num_types, const NetworkConfig& cfg, const LifParams& lif = {}) {
    lif.validate();
    Network net;
    net.lif = lif;
    const std::size_t r = cfg.neurons_per_type;
    const std::size_t n = num_types*r;
    net.inputs.resize(num_types);
    for (std::size_t e = 0; e < num_types; ++e) {
        for (std::size_t k = 0; k < r; ++k) {
            net.inputs[e].push_back({static_cast<std::uint32_t>(e*r + k), cfg.input_weight});
        }
    }
    auto topo = make_rng(cfg.seed, streams::topology);
    auto wrng = make_rng(cfg.seed, streams::weights);
    std::vector<Synapse> syn;
    const std::size_t fanout = n > 1? std::min(cfg.recurrent_fanout, n - 1): 0;
    std::vector<std::uint32_t> others;
    for (std::uint32_t pre = 0; pre < n; ++pre) {
        others.clear();
        for (std::uint32_t k = 0; k < n; ++k) if (k != pre) others.push_back(k);
        for (std::size_t k = 0; k < fanout; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, others.size() - 1);
            std::swap(others[k], others[pick(topo)]);
        }
        std::sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(fanout));
        for (std::size_t k = 0; k < fanout; ++k) {
            syn.push_back({pre, others[k], uniform(wrng, -cfg.init_weight, cfg.init_weight)});
        }
    }
    net.recurrent = SynapseMatrix(n, std::move(syn), cfg.w_max);
    return net;
}

struct Delivery {
    double time = 0;
    std::uint64_t seq = 0;     // insertion order, breaks time ties deterministically
    std::uint32_t target = 0;
    std::uint32_t source = 0;  // neuron, or input channel when from_input
    std::uint32_t index = 0;   // synapse id, or spike index within the input train
    bool from_input = false;
};

struct delivery_later {
    bool operator()(const Delivery& a, const Delivery& b) const {
        return a.time > b.time || (a.time == b.time && a.seq > b.seq);
    }
};

struct LifNetworkState {
    std::vector<double> v;
    std::vector<double> current; // synaptic current, valid at `clock`
    double clock = 0;
    std::priority_queue<Delivery, std::vector<Delivery>, delivery_later> pending;
    std::uint64_t next_seq = 0;

    LifNetworkState() = default;
    LifNetworkState(std::size_t n, const LifParams& lif): v(n, lif.v_rest), current(n, 0.0) {}
};

// min(tau_min / max_i |v_i|, dt_max), dt_max when every potential is zero.
inline double adaptive_dt(const LifNetworkState& state, const SimConfig& sim) {
    double vmax = 0;
    for (double v: state.v) vmax = std::max(vmax, std::abs(v));
    if (vmax == 0) return sim.dt_max;
    return std::min(sim.tau_min/vmax, sim.dt_max);
}

inline double logistic(double x) {
    return x >= 0? 1.0/(1.0 + std::exp(-x)): std::exp(x)/(1.0 + std::exp(x));
}

// sigma'(v - v_th) * clip(a |v - v_th|, 0, 1)
inline double surrogate_grad(double v, const LifParams& p) {
    const double x = v - p.v_th;
    const double s = logistic(x);
    return s*(1.0 - s)*std::clamp(p.surrogate_sharpness*std::abs(x), 0.0, 1.0);
}

// Smallest spike separation resolvable at detection threshold `epsilon`.
inline double min_detectable_dt(const LifParams& p, double max_v, double epsilon) {
    if (!(max_v > 0 && epsilon > 0)) throw domain_error("max_v and epsilon must be positive");
    return p.tau_m*epsilon/(p.leak_alpha*max_v);
}

// Current of `neuron` at t >= clock from the decaying trace.
inline double synaptic_current(const LifNetworkState& state, const LifParams& p, std::size_t neuron, double t) {
    return state.current[neuron]*std::exp(-p.syn_beta*(t - state.clock));
}

struct Arrival {
    double time = 0;
    double w = 0;
};

// Explicit kernel sum over arrivals with time <= t; terms below exp(-30) are dropped.
inline double synaptic_current(std::span<const Arrival> arrivals, const LifParams& p, double t) {
    double sum = 0;
    for (const auto& a: arrivals) {
        if (a.time > t) continue;
        const double x = p.syn_beta*(t - a.time);
        if (x > 30) continue;
        sum += a.w*p.syn_epsilon*std::exp(-x);
    }
    return sum;
}

namespace detail {

// (1 - exp(-d s)) / d, continuous through d = 0.
inline double relaxation_integral(double d, double s) {
    const double x = d*s;
    if (std::abs(x) < 1e-10) return s*(1.0 - 0.5*x);
    return -std::expm1(-x)/d;
}

// Closed-form propagation of (v, I) over `h` seconds. Shared factors are precomputed.
struct Propagator {
    double decay_v = 1;   // exp(-k h), k = alpha / tau_m
    double decay_i = 1;   // exp(-beta h)
    double coupling = 0;  // contribution of unit I0 to v(h)

    Propagator(const LifParams& p, double h) {
        const double k = p.leak_alpha/p.tau_m;
        decay_v = std::exp(-k*h);
        decay_i = std::exp(-p.syn_beta*h);
        // (1/tau_m) * (e^{-beta h} - e^{-k h}) / (k - beta)
        coupling = decay_v*relaxation_integral(p.syn_beta - k, h)/p.tau_m;
    }

    double v(const LifParams& p, double v0, double i0) const {
        return p.v_rest + (v0 - p.v_rest)*decay_v + i0*coupling;
    }
};

} // namespace detail

struct MembraneTraces {
    std::vector<std::size_t> neurons;
    std::vector<double> times;
    std::vector<std::vector<double>> values; // values[k][s]: neurons[k] at times[s]

    // Linear interpolation between samples; clamps outside the sampled range.
    double at(std::size_t k, double t) const {
        const auto& vs = values[k];
        if (times.empty()) throw domain_error("empty trace");
        if (t <= times.front()) return vs.front();
        if (t >= times.back()) return vs.back();
        auto it = std::upper_bound(times.begin(), times.end(), t);
        const auto hi = static_cast<std::size_t>(it - times.begin());
        const auto lo = hi - 1;
        const double f = (t - times[lo])/(times[hi] - times[lo]);
        return vs[lo] + f*(vs[hi] - vs[lo]);
    }
};

inline void write_traces(std::ostream& out, const MembraneTraces& tr) {
    for (std::size_t k = 0; k < tr.neurons.size(); ++k) {
        for (std::size_t s = 0; s < tr.times.size(); ++s) {
            write_record(out, json{{"neuron", tr.neurons[k]}, {"t", tr.times[s]}, {"v", tr.values[k][s]}});
        }
    }
}

struct RunOptions {
    SimConfig sim;
    std::optional<StdpConfig> stdp;      // plasticity on recurrent synapses when set
    bool record = false;                 // sample potentials on sim.record_grid
    std::vector<std::size_t> record_neurons; // empty: all neurons
    // Called at each probe time once the network has been integrated up to it.
    std::vector<double> probe_times;
    std::function<void(std::size_t, double, const LifNetworkState&, std::span<const SpikeTrain>)> probe;
};

struct RunResult {
    std::vector<SpikeTrain> spikes; // per neuron
    MembraneTraces traces;
    std::vector<std::vector<double>> spike_steps; // size of the step that detected each spike
    std::uint64_t steps = 0;
    std::uint64_t deliveries = 0;
};

class Simulator {
public:
    Simulator(Network& net, RunOptions opts):
        net_(net), opts_(std::move(opts)), state_(net.num_neurons(), net.lif),
        history_(net.num_neurons())
    {
        net_.lif.validate();
        opts_.sim.validate();
        if (opts_.stdp) opts_.stdp->validate();
        const std::size_t n = net.num_neurons();
        result_.spikes.resize(n);
        result_.spike_steps.resize(n);
        for (std::size_t i = 0; i < n; ++i) result_.spikes[i].neuron = i;
        if (opts_.record) {
            auto& tr = result_.traces;
            tr.neurons = opts_.record_neurons;
            if (tr.neurons.empty()) {
                tr.neurons.resize(n);
                for (std::size_t i = 0; i < n; ++i) tr.neurons[i] = i;
            }
            tr.values.resize(tr.neurons.size());
        }
    }

    const LifNetworkState& state() const { return state_; }
    LifNetworkState& state() { return state_; }

    // Advances to `t`, stepping adaptively while any neuron may reach threshold.
    // Returns early (clock < t) right after a step that emitted spikes.
    bool integrate_to(double t) {
        if (t < state_.clock) throw invariant_fault("integrate_to target precedes clock");
        while (state_.clock < t) {
            if (!any_may_fire()) {
                advance_to(t);
                return false;
            }
            const double h = std::min(adaptive_dt(state_, opts_.sim), t - state_.clock);
            advance_to(h < t - state_.clock? state_.clock + h: t);
            ++result_.steps;
            if (fire(h)) return true;
        }
        return false;
    }

    RunResult run(std::span<const SpikeTrain> inputs, double horizon) {
        if (inputs.size() != net_.num_inputs()) {
            throw shape_error("expected " + std::to_string(net_.num_inputs()) + " input trains");
        }
        for (const auto& tr: inputs) {
            if (!tr.valid()) throw validation_error("input spike train is not strictly increasing");
            if (!tr.times.empty() && (tr.times.front() < 0 || tr.times.back() > horizon)) {
                throw validation_error("input spike outside [0, horizon]");
            }
        }
        inputs_ = inputs;
        cursor_.assign(inputs.size(), 0);
        for (std::uint32_t c = 0; c < inputs.size(); ++c) schedule_input(c);
        if (opts_.record) next_grid_ = 0;
        probe_next_ = 0;

        while (true) {
            const double due = state_.pending.empty()? horizon: std::min(state_.pending.top().time, horizon);
            if (integrate_to(due)) continue;
            if (state_.pending.empty() || state_.pending.top().time > horizon) break;
            deliver();
        }
        flush_samples(horizon, true);
        return std::move(result_);
    }

private:
    bool any_may_fire() const {
        const auto& p = net_.lif;
        const double gain = 1.0/(p.tau_m*p.syn_beta);
        for (std::size_t i = 0; i < state_.v.size(); ++i) {
            const double bound = std::max(state_.v[i], p.v_rest) + std::max(state_.current[i], 0.0)*gain;
            if (bound >= p.v_th) return true;
        }
        return false;
    }

    // Probe/grid samples in [clock, target) are taken before committing.
    void advance_to(double target) {
        flush_samples(target, false);
        const detail::Propagator prop(net_.lif, target - state_.clock);
        for (std::size_t i = 0; i < state_.v.size(); ++i) {
            state_.v[i] = prop.v(net_.lif, state_.v[i], state_.current[i]);
            state_.current[i] *= prop.decay_i;
        }
        state_.clock = target;
    }

    double potential_at(std::size_t i, double t) const {
        const detail::Propagator prop(net_.lif, t - state_.clock);
        return prop.v(net_.lif, state_.v[i], state_.current[i]);
    }

    void flush_samples(double until, bool inclusive) {
        auto before = [&](double x) { return inclusive? x <= until: x < until; };
        if (opts_.record) {
            auto& tr = result_.traces;
            while (true) {
                const double g = opts_.sim.record_grid*static_cast<double>(next_grid_);
                if (!before(g) || g < state_.clock) break;
                tr.times.push_back(g);
                for (std::size_t k = 0; k < tr.neurons.size(); ++k) {
                    tr.values[k].push_back(potential_at(tr.neurons[k], g));
                }
                ++next_grid_;
            }
        }
        if (opts_.probe) {
            while (probe_next_ < opts_.probe_times.size() && before(opts_.probe_times[probe_next_])) {
                const double t = opts_.probe_times[probe_next_];
                if (t < state_.clock) throw invariant_fault("probe times must be sorted");
                LifNetworkState snap;
                snap.clock = t;
                snap.v.resize(state_.v.size());
                snap.current.resize(state_.v.size());
                for (std::size_t i = 0; i < state_.v.size(); ++i) {
                    snap.v[i] = potential_at(i, t);
                    snap.current[i] = synaptic_current(state_, net_.lif, i, t);
                }
                opts_.probe(probe_next_, t, snap, result_.spikes);
                ++probe_next_;
            }
        }
    }

    bool fire(double h) {
        const auto& p = net_.lif;
        bool any = false;
        for (std::uint32_t i = 0; i < state_.v.size(); ++i) {
            const double v = state_.v[i];
            if (!std::isfinite(v)) throw numeric_fault(i, "non-finite membrane potential");
            if (v < p.v_th) continue;
            any = true;
            const double t = state_.clock;
            state_.v[i] = p.v_reset;
            result_.spikes[i].times.push_back(t);
            result_.spike_steps[i].push_back(h);
            for (auto k: net_.recurrent.outgoing(i)) {
                push({t + opts_.sim.syn_delay, 0, net_.recurrent[k].post, i, k, false});
            }
            if (opts_.stdp) apply_on_spike(net_.recurrent, *opts_.stdp, i, t, history_);
        }
        return any;
    }

    void push(Delivery d) {
        d.seq = state_.next_seq++;
        state_.pending.push(d);
    }

    void schedule_input(std::uint32_t channel) {
        const auto& times = inputs_[channel].times;
        const auto k = cursor_[channel];
        if (k >= times.size()) return;
        push({times[k] + opts_.sim.syn_delay, 0, 0, channel, static_cast<std::uint32_t>(k), true});
    }

    void deliver() {
        const Delivery d = state_.pending.top();
        state_.pending.pop();
        if (d.time < state_.clock) throw invariant_fault("delivery time precedes clock");
        const double eps = net_.lif.syn_epsilon;
        if (d.from_input) {
            for (const auto& s: net_.inputs[d.source]) state_.current[s.target] += s.w*eps;
            ++cursor_[d.source];
            schedule_input(d.source);
        }
        else {
            state_.current[d.target] += net_.recurrent.weight(d.index)*eps;
        }
        ++result_.deliveries;
    }

    Network& net_;
    RunOptions opts_;
    LifNetworkState state_;
    SpikeHistory history_;
    RunResult result_;
    std::span<const SpikeTrain> inputs_;
    std::vector<std::size_t> cursor_;
    std::uint64_t next_grid_ = 0;
    std::size_t probe_next_ = 0;
};

// Runs `net` (mutating its recurrent weights when STDP is enabled).
inline RunResult run_event_driven(Network& net, std::span<const SpikeTrain> inputs, double horizon, RunOptions opts = {}) {
    Simulator sim(net, std::move(opts));
    return sim.run(inputs, horizon);
}

} // namespace sdgn
