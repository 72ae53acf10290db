#pragma once

// Conditional-intensity model over event types.
//
//   lambda_v(t) = softplus(w_v . x_v + delta_v (t - t_n) + b_v)
//
// x_v is the neighbour aggregate of node embeddings read from the spiking
// network at the last event t_n, weighted by the graph's edge probabilities.

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "events_io.hpp"
#include "graph.hpp"
#include "jsonl.hpp"
#include "random.hpp"
#include "snn.hpp"

namespace sdgn {

// Floored at the smallest normal double so the rate never underflows to zero.
inline double softplus(double z) {
    return std::max(std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))), std::numeric_limits<double>::min());
}

inline double log_softplus(double z) {
    if (z < -30) return z;
    return std::log(softplus(z));
}

// d/dz log softplus(z) = sigma(z) / softplus(z), which tends to 1 as z -> -inf.
inline double dlog_softplus(double z) {
    if (z < -30) return 1.0;
    return logistic(z)/softplus(z);
}

inline double softplus_inv(double y) {
    if (!(y > 0)) throw domain_error("softplus is strictly positive");
    return y + std::log(-std::expm1(-y));
}

// ---------------------------------------------------------------------------
// Embeddings

struct EmbeddingConfig {
    std::size_t neurons_per_node = 4;
    double filter_tau = 0.3;       // low-pass constant of the spike channel
    bool decay_between_events = false;

    std::size_t dim() const { return 2*neurons_per_node; }

    void validate() const {
        if (neurons_per_node == 0) throw validation_error("neurons_per_node must be at least 1");
        if (!(filter_tau > 0)) throw validation_error("filter_tau must be positive");
    }
};

// Row u: [filtered spikes of u's neurons..., potentials of u's neurons...].
inline Eigen::MatrixXd compute_embeddings(std::span<const SpikeTrain> spikes, const MembraneTraces& traces,
                                          double t, double horizon, std::size_t num_nodes,
                                          const EmbeddingConfig& cfg) {
    cfg.validate();
    if (!(t >= 0 && t <= horizon)) throw domain_error("embedding time outside the simulated horizon");
    const std::size_t r = cfg.neurons_per_node;
    if (spikes.size() < num_nodes*r) throw shape_error("too few spike trains for the node blocks");
    Eigen::MatrixXd h(static_cast<Eigen::Index>(num_nodes), static_cast<Eigen::Index>(2*r));
    for (std::size_t u = 0; u < num_nodes; ++u) {
        for (std::size_t k = 0; k < r; ++k) {
            const std::size_t neuron = u*r + k;
            double level = 0;
            for (double s: spikes[neuron].times) {
                if (s > t) break;
                level += std::exp(-(t - s)/cfg.filter_tau);
            }
            auto it = std::find(traces.neurons.begin(), traces.neurons.end(), neuron);
            if (it == traces.neurons.end()) throw shape_error("no membrane trace for neuron " + std::to_string(neuron));
            const auto row = static_cast<Eigen::Index>(u);
            h(row, static_cast<Eigen::Index>(k)) = level;
            h(row, static_cast<Eigen::Index>(r + k)) = traces.at(static_cast<std::size_t>(it - traces.neurons.begin()), t);
        }
    }
    return h;
}

// Incremental embeddings for non-decreasing query times during a simulation.
class EmbeddingTracker {
public:
    EmbeddingTracker(std::size_t num_nodes, const EmbeddingConfig& cfg):
        cfg_(cfg), n_(num_nodes), level_(num_nodes*cfg.neurons_per_node, 0.0),
        at_(level_.size(), 0.0), cursor_(level_.size(), 0),
        h_(static_cast<Eigen::Index>(num_nodes), static_cast<Eigen::Index>(cfg.dim()))
    {
        cfg_.validate();
    }

    const Eigen::MatrixXd& update(double t, std::span<const SpikeTrain> spikes, std::span<const double> v) {
        const std::size_t r = cfg_.neurons_per_node;
        for (std::size_t neuron = 0; neuron < level_.size(); ++neuron) {
            const auto& ts = spikes[neuron].times;
            auto& c = cursor_[neuron];
            while (c < ts.size() && ts[c] <= t) {
                level_[neuron] = level_[neuron]*std::exp(-(ts[c] - at_[neuron])/cfg_.filter_tau) + 1.0;
                at_[neuron] = ts[c++];
            }
            const auto row = static_cast<Eigen::Index>(neuron/r);
            const auto k = static_cast<Eigen::Index>(neuron%r);
            h_(row, k) = level_[neuron]*std::exp(-(t - at_[neuron])/cfg_.filter_tau);
            h_(row, static_cast<Eigen::Index>(r) + k) = v[neuron];
        }
        return h_;
    }

private:
    EmbeddingConfig cfg_;
    std::size_t n_;
    std::vector<double> level_, at_;
    std::vector<std::size_t> cursor_;
    Eigen::MatrixXd h_;
};

// Attention weights of type v over its neighbours: row v of the edge
// probabilities restricted to the window's adjacency, renormalised.
inline Eigen::VectorXd aggregate(const Eigen::MatrixXd& h, const GraphWindow& w, std::size_t v) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(h.cols());
    double z = 0;
    for (std::size_t u = 0; u < static_cast<std::size_t>(h.rows()); ++u) {
        if (u == v || !w.adjacency(v, u)) continue;
        const double a = w.prob(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(u));
        x += a*h.row(static_cast<Eigen::Index>(u)).transpose();
        z += a;
    }
    if (z > 0) x /= z;
    return x;
}

// ---------------------------------------------------------------------------
// Parameters and intensity

struct IntensityParams {
    Eigen::MatrixXd w;       // types x dim
    Eigen::VectorXd delta;   // elapsed-time modulation
    Eigen::VectorXd bias;
    Eigen::VectorXd shift;   // feature standardisation, x~ = (x - shift) / scale
    Eigen::VectorXd scale;

    IntensityParams() = default;
    IntensityParams(std::size_t types, std::size_t dim):
        w(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(types), static_cast<Eigen::Index>(dim))),
        delta(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(types))),
        bias(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(types))),
        shift(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim))),
        scale(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(dim))) {}

    std::size_t num_types() const { return static_cast<std::size_t>(w.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(w.cols()); }

    bool finite() const {
        return w.allFinite() && delta.allFinite() && bias.allFinite() && shift.allFinite() && scale.allFinite();
    }
};

// Pre-activation for type v given a raw feature row and elapsed time.
inline double intensity_input(const IntensityParams& p, std::size_t v, const Eigen::Ref<const Eigen::VectorXd>& x,
                              double elapsed) {
    const auto r = static_cast<Eigen::Index>(v);
    const Eigen::VectorXd xs = (x - p.shift).cwiseQuotient(p.scale);
    return p.w.row(r).dot(xs) + p.delta(r)*elapsed + p.bias(r);
}

inline double intensity(const IntensityParams& p, std::size_t v, const Eigen::Ref<const Eigen::VectorXd>& x,
                        double elapsed) {
    return softplus(intensity_input(p, v, x, elapsed));
}

// Full form: aggregate the embeddings over v's neighbours in the window holding t.
inline double intensity(std::size_t v, double t, double t_n, const Eigen::MatrixXd& embeddings,
                        const DynamicGraph& graph, const IntensityParams& p) {
    if (t < t_n) throw domain_error("intensity evaluated before the last event");
    return intensity(p, v, aggregate(embeddings, graph.at(t), v), t - t_n);
}

// ---------------------------------------------------------------------------
// Likelihood data

enum class mc_sampling { uniform, stratified };

struct LikelihoodConfig {
    std::size_t num_mc = 10;
    std::size_t neg_samples = 8;
    mc_sampling sampling = mc_sampling::uniform;
    std::uint64_t seed = 1;

    void validate() const {
        if (num_mc == 0) throw validation_error("num_mc must be at least 1");
    }
};

// One inter-event interval (start, start + length]. `event_type` is -1 for the
// censored interval that closes the observation window.
struct Interval {
    double start = 0;
    double length = 0;
    std::int64_t event_type = -1;
    std::vector<std::uint32_t> types;  // types whose survival term is evaluated
    std::vector<double> weights;       // importance weight per entry of `types`
    Eigen::MatrixXd features;          // raw aggregates, one row per entry of `types`
    Eigen::MatrixXd decaying;          // optional part scaled by exp(-u / filter_tau)
    std::vector<double> mc;            // offsets in (0, length)

    std::size_t row_of_event() const {
        for (std::size_t k = 0; k < types.size(); ++k) {
            if (static_cast<std::int64_t>(types[k]) == event_type) return k;
        }
        throw invariant_fault("event type missing from interval types");
    }
};

struct LikelihoodData {
    std::size_t num_types = 0;
    std::size_t dim = 0;
    double filter_tau = 1;
    std::vector<Interval> intervals;

    std::size_t num_events() const {
        std::size_t n = 0;
        for (const auto& iv: intervals) n += iv.event_type >= 0;
        return n;
    }
};

// Survival types for an interval: the observed type plus `neg` uniformly drawn
// others, each other weighted (E - 1) / neg so the sum stays unbiased. With no
// observed type, neg + 1 types weighted E / (neg + 1). Small E uses every type.
inline void sample_types(Interval& iv, std::size_t num_types, std::size_t neg, rng_engine& rng) {
    iv.types.clear();
    iv.weights.clear();
    const bool has_event = iv.event_type >= 0;
    const std::size_t draws = has_event? neg: neg + 1;
    const std::size_t pool = has_event? num_types - 1: num_types;
    if (draws >= pool) {
        for (std::uint32_t v = 0; v < num_types; ++v) {
            iv.types.push_back(v);
            iv.weights.push_back(1.0);
        }
        return;
    }
    if (has_event) {
        iv.types.push_back(static_cast<std::uint32_t>(iv.event_type));
        iv.weights.push_back(1.0);
    }
    std::vector<std::uint32_t> others;
    for (std::uint32_t v = 0; v < num_types; ++v) {
        if (static_cast<std::int64_t>(v) != iv.event_type) others.push_back(v);
    }
    for (std::size_t k = 0; k < draws; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, others.size() - 1);
        std::swap(others[k], others[pick(rng)]);
    }
    std::sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(draws));
    const double wgt = static_cast<double>(pool)/static_cast<double>(draws);
    for (std::size_t k = 0; k < draws; ++k) {
        iv.types.push_back(others[k]);
        iv.weights.push_back(wgt);
    }
}

inline void sample_mc(Interval& iv, const LikelihoodConfig& cfg, rng_engine& rng) {
    iv.mc.resize(cfg.num_mc);
    const double m = static_cast<double>(cfg.num_mc);
    for (std::size_t k = 0; k < cfg.num_mc; ++k) {
        const double u = uniform(rng, 0.0, 1.0);
        iv.mc[k] = cfg.sampling == mc_sampling::stratified
            ? iv.length*(static_cast<double>(k) + u)/m
            : iv.length*u;
    }
}

// Interval skeletons for the events of `seq` inside [t0, t1), features left empty.
// The first interval opens at the last event before t0 (or t0 itself).
inline std::vector<Interval> make_intervals(const EventSequence& seq, double t0, double t1,
                                            const LikelihoodConfig& cfg, bool all_types) {
    cfg.validate();
    auto rng_types = make_rng(cfg.seed, streams::negatives);
    auto rng_mc = make_rng(cfg.seed, streams::monte_carlo);
    std::vector<Interval> out;
    double prev = t0;
    for (const auto& ev: seq.events()) {
        if (ev.t >= t1) break;
        if (ev.t < t0) {
            prev = ev.t;
            continue;
        }
        Interval iv;
        iv.start = prev;
        iv.length = ev.t - prev;
        iv.event_type = ev.type;
        out.push_back(std::move(iv));
        prev = ev.t;
    }
    Interval tail;
    tail.start = prev;
    tail.length = t1 - prev;
    out.push_back(std::move(tail));
    for (auto& iv: out) {
        if (all_types) sample_types(iv, seq.num_types(), seq.num_types(), rng_types);
        else sample_types(iv, seq.num_types(), cfg.neg_samples, rng_types);
        sample_mc(iv, cfg, rng_mc);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Likelihood and gradients

struct LikelihoodValue {
    double value = 0;
    bool degenerate = false; // a non-finite log-intensity was replaced by the sentinel
};

inline constexpr double log_sentinel = -1e300;

namespace detail {

struct RowInputs {
    double base = 0;   // w . x~(0) + b
    double decay = 0;  // w . (decaying / scale)
};

inline RowInputs row_inputs(const IntensityParams& p, const Interval& iv, std::size_t k) {
    const auto v = static_cast<Eigen::Index>(iv.types[k]);
    const auto row = static_cast<Eigen::Index>(k);
    RowInputs r;
    r.base = p.w.row(v).dot((iv.features.row(row).transpose() - p.shift).cwiseQuotient(p.scale)) + p.bias(v);
    if (iv.decaying.size() > 0) r.decay = p.w.row(v).dot(iv.decaying.row(row).transpose().cwiseQuotient(p.scale));
    return r;
}

inline double input_at(const IntensityParams& p, const RowInputs& r, std::uint32_t v, double u, double filter_tau) {
    double z = r.base + p.delta(static_cast<Eigen::Index>(v))*u;
    if (r.decay != 0) z += r.decay*std::exp(-u/filter_tau);
    return z;
}

} // namespace detail

inline LikelihoodValue log_likelihood(const LikelihoodData& data, const IntensityParams& p,
                                      std::span<const std::size_t> subset = {}) {
    LikelihoodValue out;
    auto one = [&](const Interval& iv) {
        const double m = static_cast<double>(iv.mc.size());
        for (std::size_t k = 0; k < iv.types.size(); ++k) {
            const auto r = detail::row_inputs(p, iv, k);
            const auto v = iv.types[k];
            if (static_cast<std::int64_t>(v) == iv.event_type) {
                const double ll = log_softplus(detail::input_at(p, r, v, iv.length, data.filter_tau));
                if (std::isfinite(ll)) out.value += ll;
                else {
                    out.value += log_sentinel;
                    out.degenerate = true;
                }
            }
            double s = 0;
            for (double u: iv.mc) s += softplus(detail::input_at(p, r, v, u, data.filter_tau));
            out.value -= iv.weights[k]*iv.length*s/m;
        }
    };
    if (subset.empty()) for (const auto& iv: data.intervals) one(iv);
    else for (auto i: subset) one(data.intervals[i]);
    return out;
}

struct IntensityGradient {
    Eigen::MatrixXd w;
    Eigen::VectorXd delta;
    Eigen::VectorXd bias;
    Eigen::VectorXd events; // observed events per type in the evaluated intervals

    double norm() const {
        return std::sqrt(w.squaredNorm() + delta.squaredNorm() + bias.squaredNorm());
    }
};

// Exact gradient of log_likelihood with respect to (w, delta, b) under the
// stored Monte-Carlo points.
inline IntensityGradient parameter_gradients(const LikelihoodData& data, const IntensityParams& p,
                                             std::span<const std::size_t> subset = {}) {
    IntensityGradient g;
    g.w = Eigen::MatrixXd::Zero(p.w.rows(), p.w.cols());
    g.delta = Eigen::VectorXd::Zero(p.delta.size());
    g.bias = Eigen::VectorXd::Zero(p.bias.size());
    g.events = Eigen::VectorXd::Zero(p.bias.size());
    auto one = [&](const Interval& iv) {
        const double m = static_cast<double>(iv.mc.size());
        for (std::size_t k = 0; k < iv.types.size(); ++k) {
            const auto r = detail::row_inputs(p, iv, k);
            const auto v = iv.types[k];
            const auto vi = static_cast<Eigen::Index>(v);
            const auto row = static_cast<Eigen::Index>(k);
            const bool decaying = iv.decaying.size() > 0;
            // Features are x0 + xd*exp(-u/tau); accumulate the two coefficients.
            double on_x0 = 0, on_xd = 0;
            if (static_cast<std::int64_t>(v) == iv.event_type) {
                const double d = dlog_softplus(detail::input_at(p, r, v, iv.length, data.filter_tau));
                on_x0 += d;
                if (decaying) on_xd += d*std::exp(-iv.length/data.filter_tau);
                g.delta(vi) += d*iv.length;
                g.bias(vi) += d;
                g.events(vi) += 1;
            }
            const double c = iv.weights[k]*iv.length/m;
            double mass = 0, moment = 0, decayed = 0;
            for (double u: iv.mc) {
                const double s = logistic(detail::input_at(p, r, v, u, data.filter_tau));
                mass += s;
                moment += s*u;
                if (decaying) decayed += s*std::exp(-u/data.filter_tau);
            }
            on_x0 -= c*mass;
            on_xd -= c*decayed;
            g.w.row(vi) += on_x0*(iv.features.row(row) - p.shift.transpose()).cwiseQuotient(p.scale.transpose());
            if (decaying) g.w.row(vi) += on_xd*iv.decaying.row(row).cwiseQuotient(p.scale.transpose());
            g.delta(vi) -= c*moment;
            g.bias(vi) -= c*mass;
        }
    };
    if (subset.empty()) for (const auto& iv: data.intervals) one(iv);
    else for (auto i: subset) one(data.intervals[i]);
    return g;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batches = 10;   // contiguous time windows per epoch
    double step = 1e-2;
    double clip = 10.0;
    std::size_t patience = 10;  // consecutive likelihood decreases before stopping

    void validate() const {
        if (!(step > 0)) throw validation_error("step must be positive");
        if (!(clip > 0)) throw validation_error("clip must be positive");
        if (batches == 0) throw validation_error("batches must be at least 1");
    }
};

struct TrainResult {
    IntensityParams params;
    std::vector<double> epoch_ll; // per-event training log-likelihood after each epoch
    std::size_t epochs_run = 0;
    bool early_stopped = false;
};

// Baseline parameters: w = delta = 0, b at the homogeneous rate of each type,
// features standardised on the training rows.
inline IntensityParams initial_params(const LikelihoodData& data, double horizon) {
    IntensityParams p(data.num_types, data.dim);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.num_types));
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.dim));
    Eigen::VectorXd sq = sum;
    double rows = 0;
    for (const auto& iv: data.intervals) {
        if (iv.event_type >= 0) counts(iv.event_type) += 1;
        for (Eigen::Index k = 0; k < iv.features.rows(); ++k) {
            Eigen::VectorXd x = iv.features.row(k).transpose();
            if (iv.decaying.size() > 0) x += iv.decaying.row(k).transpose();
            sum += x;
            sq += x.cwiseProduct(x);
            rows += 1;
        }
    }
    for (Eigen::Index v = 0; v < p.bias.size(); ++v) {
        p.bias(v) = counts(v) > 0? softplus_inv(counts(v)/horizon): -10.0;
    }
    if (rows > 1) {
        p.shift = sum/rows;
        for (Eigen::Index d = 0; d < p.scale.size(); ++d) {
            const double var = sq(d)/rows - p.shift(d)*p.shift(d);
            p.scale(d) = var > 1e-12? std::sqrt(var): 1.0;
        }
    }
    return p;
}

// Gradient ascent over contiguous batches. Each type's block is scaled by its
// event count in the batch, then the whole step is norm-clipped.
inline TrainResult train(const LikelihoodData& data, IntensityParams init, const TrainConfig& cfg) {
    cfg.validate();
    TrainResult res;
    res.params = std::move(init);
    const std::size_t n = data.intervals.size();
    const std::size_t events = std::max<std::size_t>(1, data.num_events());
    std::vector<std::vector<std::size_t>> batches(std::min(cfg.batches, std::max<std::size_t>(n, 1)));
    for (std::size_t i = 0; i < n; ++i) batches[i*batches.size()/n].push_back(i);

    double prev = log_likelihood(data, res.params).value/static_cast<double>(events);
    std::size_t decreases = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& b: batches) {
            if (b.empty()) continue;
            auto g = parameter_gradients(data, res.params, b);
            for (Eigen::Index v = 0; v < g.bias.size(); ++v) {
                const double s = 1.0/std::max(1.0, g.events(v));
                g.w.row(v) *= s;
                g.delta(v) *= s;
                g.bias(v) *= s;
            }
            const double norm = g.norm();
            const double f = norm > cfg.clip? cfg.clip/norm: 1.0;
            res.params.w += cfg.step*f*g.w;
            res.params.delta += cfg.step*f*g.delta;
            res.params.bias += cfg.step*f*g.bias;
        }
        if (!res.params.finite()) throw runtime_failure("intensity parameters diverged");
        const double ll = log_likelihood(data, res.params).value/static_cast<double>(events);
        res.epoch_ll.push_back(ll);
        ++res.epochs_run;
        decreases = ll < prev? decreases + 1: 0;
        prev = ll;
        if (cfg.patience > 0 && decreases >= cfg.patience) {
            res.early_stopped = true;
            break;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Prediction

struct NextEventPrediction {
    double expected_time = 0;
    std::size_t type = 0;
    double tail_mass = 0;
    bool truncated = false; // tail mass above 1% at the cap
};

// E[T - t_n] = int u f(u) du over [0, cap] for the density f = rate * exp(-int rate),
// integrated as an ODE in (cumulative rate, first moment) with Dormand-Prince.
inline std::pair<double, double> expected_wait(const std::function<double(double)>& total_rate, double cap) {
    if (!(cap > 0)) throw domain_error("prediction cap must lie after the last event");
    namespace ode = boost::numeric::odeint;
    using state = std::array<double, 2>;
    state y{0.0, 0.0};
    auto rhs = [&](const state& s, state& dy, double u) {
        const double r = total_rate(u);
        dy[0] = r;
        dy[1] = u*r*std::exp(-s[0]);
    };
    auto stepper = ode::make_controlled(1e-10, 1e-8, ode::runge_kutta_dopri5<state>());
    ode::integrate_adaptive(stepper, rhs, y, 0.0, cap, cap*1e-4);
    return {y[1], std::exp(-y[0])};
}

// Density of the next event time: total rate times the survival factor, with the
// cumulative rate from Gauss-Kronrod quadrature.
inline double next_event_density(const std::function<double(double)>& total_rate, double elapsed) {
    if (elapsed < 0) throw domain_error("density evaluated before the last event");
    if (elapsed == 0) return total_rate(0);
    const double cum = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(total_rate, 0.0, elapsed, 8, 1e-12);
    return total_rate(elapsed)*std::exp(-cum);
}

// features: one raw aggregate row per type, frozen at the last event.
inline NextEventPrediction predict_next(const IntensityParams& p, const Eigen::MatrixXd& features, double t_n,
                                        double cap, const Eigen::MatrixXd* decaying = nullptr, double filter_tau = 1) {
    if (!(cap > t_n)) throw domain_error("prediction cap must lie after the last event");
    const std::size_t types = p.num_types();
    std::vector<detail::RowInputs> rows(types);
    for (std::size_t v = 0; v < types; ++v) {
        const auto vi = static_cast<Eigen::Index>(v);
        rows[v].base = p.w.row(vi).dot((features.row(vi).transpose() - p.shift).cwiseQuotient(p.scale)) + p.bias(vi);
        if (decaying) rows[v].decay = p.w.row(vi).dot(decaying->row(vi).transpose().cwiseQuotient(p.scale));
    }
    auto rate = [&](std::size_t v, double u) {
        return softplus(detail::input_at(p, rows[v], static_cast<std::uint32_t>(v), u, filter_tau));
    };
    auto total = [&](double u) {
        double s = 0;
        for (std::size_t v = 0; v < types; ++v) s += rate(v, u);
        return s;
    };
    const auto [mean, tail] = expected_wait(total, cap - t_n);
    NextEventPrediction out;
    out.expected_time = t_n + mean;
    out.tail_mass = tail;
    out.truncated = tail > 0.01;
    double best = -1;
    for (std::size_t v = 0; v < types; ++v) {
        const double r = rate(v, mean);
        if (r > best) {
            best = r;
            out.type = v;
        }
    }
    return out;
}

inline double rmse(std::span<const double> predictions, std::span<const double> truths) {
    if (predictions.size() != truths.size()) throw shape_error("prediction and truth counts differ");
    if (predictions.empty()) throw shape_error("rmse needs at least one prediction");
    double s = 0;
    for (std::size_t k = 0; k < predictions.size(); ++k) {
        const double d = predictions[k] - truths[k];
        s += d*d;
    }
    return std::sqrt(s/static_cast<double>(predictions.size()));
}

// ---------------------------------------------------------------------------
// Serialisation

namespace detail {

inline json to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v(k));
    return a;
}

inline Eigen::VectorXd vector_from_json(const json& a) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t k = 0; k < a.size(); ++k) v(static_cast<Eigen::Index>(k)) = a[k].get<double>();
    return v;
}

} // namespace detail

inline json params_to_json(const IntensityParams& p) {
    json w = json::array();
    for (Eigen::Index v = 0; v < p.w.rows(); ++v) w.push_back(detail::to_json(p.w.row(v).transpose()));
    return json{{"w", w}, {"delta", detail::to_json(p.delta)}, {"bias", detail::to_json(p.bias)},
                {"shift", detail::to_json(p.shift)}, {"scale", detail::to_json(p.scale)}};
}

inline IntensityParams params_from_json(const json& j) {
    const auto& w = j.at("w");
    const std::size_t types = w.size();
    const std::size_t dim = types? w.at(0).size(): 0;
    IntensityParams p(types, dim);
    for (std::size_t v = 0; v < types; ++v) {
        if (w[v].size() != dim) throw shape_error("ragged weight matrix in checkpoint");
        p.w.row(static_cast<Eigen::Index>(v)) = detail::vector_from_json(w[v]).transpose();
    }
    p.delta = detail::vector_from_json(j.at("delta"));
    p.bias = detail::vector_from_json(j.at("bias"));
    p.shift = detail::vector_from_json(j.at("shift"));
    p.scale = detail::vector_from_json(j.at("scale"));
    if (static_cast<std::size_t>(p.delta.size()) != types || static_cast<std::size_t>(p.bias.size()) != types
        || static_cast<std::size_t>(p.shift.size()) != dim || static_cast<std::size_t>(p.scale.size()) != dim) {
        throw shape_error("checkpoint parameter shapes disagree");
    }
    return p;
}

} // namespace sdgn
