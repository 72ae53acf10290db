#pragma once

// End-to-end pipeline: spiking pass, graph estimation, feature extraction,
// intensity training, evaluation, ablations and parameter sweeps.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "baselines.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "events_io.hpp"
#include "graph.hpp"
#include "snn.hpp"
#include "synthgen.hpp"
#include "tpp_model.hpp"

namespace sdgn {

// ---------------------------------------------------------------------------
// Spiking pass

inline Network initial_network(const EventSequence& seq, const RunConfig& cfg) {
    NetworkConfig nc = cfg.network;
    nc.seed = cfg.seed;
    return make_block_network(seq.num_types(), nc, cfg.lif);
}

inline RunOptions snn_options(const RunConfig& cfg) {
    RunOptions o;
    o.sim = cfg.sim;
    if (cfg.plastic) o.stdp = cfg.stdp;
    return o;
}

struct SnnPass {
    RunResult run;
    Network network; // after plasticity
};

inline SnnPass run_snn(const EventSequence& seq, const RunConfig& cfg, RunOptions opts) {
    SnnPass out{{}, initial_network(seq, cfg)};
    const auto inputs = encode_as_spikes(seq);
    out.run = run_event_driven(out.network, inputs, seq.horizon(), std::move(opts));
    return out;
}

// ---------------------------------------------------------------------------
// Graphs

inline DynamicGraph estimate_graph(const EventSequence& seq, const RunConfig& cfg, const SnnPass& pass,
                                   std::size_t windows) {
    const std::size_t n = seq.num_types();
    const auto trains = node_trains(pass.run.spikes, n, cfg.network.neurons_per_type);
    if (cfg.graph.estimator == estimator_kind::softmax) {
        return estimate_dynamic_graph(trains, cfg.graph.pair, seq.horizon(), windows);
    }
    // Basis traces need a second, recording pass of the same deterministic network.
    const auto centrality = eigenvector_centrality(weight_magnitudes(pass.network.recurrent));
    auto opts = snn_options(cfg);
    opts.record = true;
    opts.record_neurons = top_central(centrality, std::min(cfg.graph.lasso.basis_size, pass.network.num_neurons()));
    const auto traced = run_snn(seq, cfg, opts);
    const auto basis = select_basis(traced.run.traces, pass.network.recurrent, opts.record_neurons.size());
    return estimate_lasso_graph(trains, basis, cfg.graph.lasso, seq.horizon(), windows);
}

inline DynamicGraph ablation_graph(ablation_mode mode, const EventSequence& seq, const RunConfig& cfg,
                                   const SnnPass& pass, const DynamicGraph& full) {
    switch (mode) {
    case ablation_mode::full: return full;
    case ablation_mode::spatial_only: return estimate_graph(seq, cfg, pass, 1);
    case ablation_mode::random: return random_graph_like(full, full.density(), cfg.seed);
    }
    throw validation_error("unknown ablation mode");
}

// ---------------------------------------------------------------------------
// Features

struct FeatureSet {
    LikelihoodData train;
    LikelihoodData test; // every type per interval, for prediction and held-out likelihood
    double cut = 0;
};

inline double split_time(const EventSequence& seq, double fraction) { return fraction*seq.horizon(); }

// Replays the spiking network and freezes neighbour aggregates at the start of
// every interval.
inline FeatureSet build_features(const EventSequence& seq, const RunConfig& cfg, const DynamicGraph& graph) {
    FeatureSet fs;
    fs.cut = split_time(seq, cfg.train_fraction);
    const std::size_t n = seq.num_types();
    const std::size_t dim = cfg.embedding.dim();
    for (auto* d: {&fs.train, &fs.test}) {
        d->num_types = n;
        d->dim = dim;
        d->filter_tau = cfg.embedding.filter_tau;
    }
    LikelihoodConfig lc = cfg.likelihood;
    lc.seed = cfg.seed;
    fs.train.intervals = make_intervals(seq, 0.0, fs.cut, lc, false);
    LikelihoodConfig tc = lc;
    tc.seed = cfg.seed + 0x9e3779b97f4a7c15ull;
    fs.test.intervals = make_intervals(seq, fs.cut, seq.horizon(), tc, true);

    std::vector<Interval*> order;
    for (auto& iv: fs.train.intervals) order.push_back(&iv);
    for (auto& iv: fs.test.intervals) order.push_back(&iv);
    std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->start < b->start; });

    auto opts = snn_options(cfg);
    for (auto* iv: order) opts.probe_times.push_back(iv->start);
    EmbeddingTracker tracker(n, cfg.embedding);
    const bool decay = cfg.embedding.decay_between_events;
    const std::size_t r = cfg.embedding.neurons_per_node;
    opts.probe = [&](std::size_t k, double t, const LifNetworkState& st, std::span<const SpikeTrain> spikes) {
        const auto& h = tracker.update(t, spikes, st.v);
        auto& iv = *order[k];
        const auto& win = graph.at(t);
        const auto rows = static_cast<Eigen::Index>(iv.types.size());
        iv.features.resize(rows, static_cast<Eigen::Index>(dim));
        if (decay) iv.decaying = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(dim));
        for (Eigen::Index row = 0; row < rows; ++row) {
            const Eigen::VectorXd x = aggregate(h, win, iv.types[static_cast<std::size_t>(row)]);
            iv.features.row(row) = x.transpose();
            if (decay) {
                iv.decaying.row(row).head(static_cast<Eigen::Index>(r)) = x.head(static_cast<Eigen::Index>(r)).transpose();
                iv.features.row(row).head(static_cast<Eigen::Index>(r)).setZero();
            }
        }
    };
    run_snn(seq, cfg, std::move(opts));
    return fs;
}

// ---------------------------------------------------------------------------
// Model

struct TrainedModel {
    IntensityParams params;
    DynamicGraph graph;
    SynapseMatrix synapses;
    TrainResult training;
};

inline TrainedModel train_model(const EventSequence& seq, const RunConfig& cfg, const SnnPass& pass,
                                const DynamicGraph& graph, const FeatureSet& fs) {
    TrainedModel m;
    m.graph = graph;
    m.synapses = pass.network.recurrent;
    m.training = train(fs.train, initial_params(fs.train, fs.cut), cfg.train);
    m.params = m.training.params;
    (void)seq;
    return m;
}

struct Evaluation {
    double rmse = 0;
    double nll = 0;            // per held-out event
    std::size_t predictions = 0;
    std::size_t truncated = 0; // predictions whose tail mass exceeded 1%
    std::vector<double> start, predicted, truth;
    std::vector<std::size_t> predicted_type, true_type;
};

inline Evaluation evaluate_model(const IntensityParams& p, const FeatureSet& fs) {
    Evaluation ev;
    for (const auto& iv: fs.test.intervals) {
        if (iv.event_type < 0) continue;
        double total = 0;
        for (Eigen::Index v = 0; v < iv.features.rows(); ++v) {
            Eigen::VectorXd x = iv.features.row(v).transpose();
            if (iv.decaying.size() > 0) x += iv.decaying.row(v).transpose();
            total += intensity(p, static_cast<std::size_t>(v), x, 0.0);
        }
        const double cap = iv.start + 50.0/std::max(total, 1e-12);
        const auto pred = predict_next(p, iv.features, iv.start, cap,
                                       iv.decaying.size() > 0? &iv.decaying: nullptr, fs.test.filter_tau);
        ev.start.push_back(iv.start);
        ev.predicted.push_back(pred.expected_time);
        ev.truth.push_back(iv.start + iv.length);
        ev.predicted_type.push_back(pred.type);
        ev.true_type.push_back(static_cast<std::size_t>(iv.event_type));
        ev.truncated += pred.truncated;
    }
    ev.predictions = ev.predicted.size();
    if (ev.predictions > 0) ev.rmse = sdgn::rmse(ev.predicted, ev.truth);
    const double events = static_cast<double>(std::max<std::size_t>(1, fs.test.num_events()));
    ev.nll = -log_likelihood(fs.test, p).value/events;
    return ev;
}

// ---------------------------------------------------------------------------
// Baselines on the same split

inline EventSequence prefix(const EventSequence& seq, double cut) {
    std::vector<Event> ev;
    for (const auto& e: seq.events()) {
        if (e.t < cut) ev.push_back(e);
    }
    return EventSequence(std::move(ev), seq.num_types(), cut);
}

inline Evaluation evaluate_poisson(const EventSequence& seq, double cut) {
    const auto model = fit_poisson(prefix(seq, cut));
    Evaluation ev;
    double prev = cut;
    for (const auto& e: seq.events()) {
        if (e.t < cut) {
            prev = e.t;
            continue;
        }
        const auto pred = predict_next_poisson(model, prev);
        ev.start.push_back(prev);
        ev.predicted.push_back(pred.expected_time);
        ev.truth.push_back(e.t);
        ev.predicted_type.push_back(pred.type);
        ev.true_type.push_back(e.type);
        prev = e.t;
    }
    ev.predictions = ev.predicted.size();
    if (ev.predictions > 0) ev.rmse = sdgn::rmse(ev.predicted, ev.truth);
    ev.nll = -poisson_log_likelihood(model, seq, cut, seq.horizon())/static_cast<double>(std::max<std::size_t>(1, ev.predictions));
    return ev;
}

// Held-out exponential-Hawkes log-likelihood over [t0, t1) with the full history.
inline double hawkes_window_log_likelihood(const HawkesModel& m, const EventSequence& seq, double t0, double t1) {
    const auto types = static_cast<Eigen::Index>(m.num_types());
    Eigen::VectorXd state = Eigen::VectorXd::Zero(types);
    Eigen::VectorXd comp = Eigen::VectorXd::Zero(types); // kernel mass inside [t0, t1) per source type
    double last = 0;
    double ll = -m.mu.sum()*(t1 - t0);
    for (const auto& e: seq.events()) {
        if (e.t >= t1) break;
        state *= std::exp(-m.beta*(e.t - last));
        last = e.t;
        if (e.t >= t0) {
            const double lam = m.mu(e.type) + m.alpha.row(e.type).dot(state);
            ll += lam > 0? std::log(lam): log_sentinel;
        }
        const double from = std::max(t0, e.t);
        comp(e.type) += (std::exp(-m.beta*(from - e.t)) - std::exp(-m.beta*(t1 - e.t)))/m.beta;
        state(e.type) += 1;
    }
    ll -= (m.alpha*comp).sum();
    return ll;
}

inline Evaluation evaluate_hawkes(const EventSequence& seq, double cut, const HawkesFitConfig& fit_cfg,
                                  HawkesModel* fitted = nullptr) {
    const auto model = fit_hawkes(prefix(seq, cut), fit_cfg);
    Evaluation ev;
    Eigen::VectorXd state = Eigen::VectorXd::Zero(model.mu.size());
    double last = 0, prev = cut;
    bool started = false;
    for (const auto& e: seq.events()) {
        if (e.t >= cut) {
            const Eigen::VectorXd at = state*std::exp(-model.beta*(prev - last));
            const auto pred = predict_next_hawkes(model, at, started || last > 0? prev: cut);
            ev.start.push_back(prev);
            ev.predicted.push_back(pred.expected_time);
            ev.truth.push_back(e.t);
            ev.predicted_type.push_back(pred.type);
            ev.true_type.push_back(e.type);
            ev.truncated += pred.truncated;
            started = true;
        }
        state *= std::exp(-model.beta*(e.t - last));
        state(e.type) += 1;
        last = e.t;
        prev = e.t;
    }
    ev.predictions = ev.predicted.size();
    if (ev.predictions > 0) ev.rmse = sdgn::rmse(ev.predicted, ev.truth);
    ev.nll = -hawkes_window_log_likelihood(model, seq, cut, seq.horizon())/static_cast<double>(std::max<std::size_t>(1, ev.predictions));
    if (fitted) *fitted = model;
    return ev;
}

// ---------------------------------------------------------------------------
// Reports

struct MetricsReport {
    std::string model;                  // sdgn/<mode>, poisson or hawkes
    std::optional<double> rmse, nll, ssi;
    std::string null_reason;            // why a metric is missing
    std::uint64_t seed = 0;
    std::string config_digest;
    std::size_t num_nodes = 0;
    double sparsity = 0;
    std::size_t predictions = 0;
};

inline json report_to_json(const MetricsReport& r) {
    auto opt = [](const std::optional<double>& v) { return v && std::isfinite(*v)? json(*v): json(nullptr); };
    json j{{"model", r.model}, {"rmse", opt(r.rmse)}, {"nll", opt(r.nll)}, {"ssi", opt(r.ssi)},
           {"seed", r.seed}, {"config_digest", r.config_digest}, {"num_nodes", r.num_nodes},
           {"sparsity", r.sparsity}, {"predictions", r.predictions}};
    if (!r.null_reason.empty()) j["null_reason"] = r.null_reason;
    return j;
}

inline MetricsReport make_report(const std::string& model, const Evaluation& ev, const RunConfig& cfg,
                                 std::size_t num_nodes, std::optional<double> ssi) {
    MetricsReport r;
    r.model = model;
    if (ev.predictions > 0) r.rmse = ev.rmse;
    else r.null_reason = "no held-out events";
    r.nll = ev.nll;
    r.ssi = ssi;
    if (!ssi && r.null_reason.empty()) r.null_reason = "ssi: no ground-truth graph";
    r.seed = cfg.seed;
    r.config_digest = config_digest(cfg);
    r.num_nodes = num_nodes;
    r.sparsity = cfg.synth.sparsity;
    r.predictions = ev.predictions;
    return r;
}

// ---------------------------------------------------------------------------
// Whole runs

struct PipelineRun {
    SnnPass pass;
    DynamicGraph estimated;
    std::optional<double> ssi;
};

inline PipelineRun estimate_stage(const EventSequence& seq, const RunConfig& cfg, const GraphTimeline* truth) {
    PipelineRun r{run_snn(seq, cfg, snn_options(cfg)), {}, std::nullopt};
    r.estimated = estimate_graph(seq, cfg, r.pass, cfg.graph.windows);
    if (truth) r.ssi = dynamic_ssi(*truth, r.estimated);
    return r;
}

struct ModeResult {
    TrainedModel model;
    Evaluation eval;
    MetricsReport report;
};

inline ModeResult run_mode(ablation_mode mode, const EventSequence& seq, const RunConfig& cfg, const PipelineRun& base,
                           const GraphTimeline* truth) {
    ModeResult out;
    const auto graph = ablation_graph(mode, seq, cfg, base.pass, base.estimated);
    const auto fs = build_features(seq, cfg, graph);
    out.model = train_model(seq, cfg, base.pass, graph, fs);
    out.eval = evaluate_model(out.model.params, fs);
    std::optional<double> ssi;
    if (truth) ssi = mode == ablation_mode::full? base.ssi: std::optional<double>(dynamic_ssi(*truth, graph));
    out.report = make_report("sdgn/" + to_string(mode), out.eval, cfg, seq.num_types(), ssi);
    return out;
}

// Three graph modes followed by the two baselines.
inline std::vector<MetricsReport> ablate(const EventSequence& seq, const RunConfig& cfg, const GraphTimeline* truth) {
    const auto base = estimate_stage(seq, cfg, truth);
    std::vector<MetricsReport> out;
    for (auto mode: {ablation_mode::full, ablation_mode::random, ablation_mode::spatial_only}) {
        out.push_back(run_mode(mode, seq, cfg, base, truth).report);
    }
    const double cut = split_time(seq, cfg.train_fraction);
    out.push_back(make_report("poisson", evaluate_poisson(seq, cut), cfg, seq.num_types(), std::nullopt));
    out.push_back(make_report("hawkes", evaluate_hawkes(seq, cut, cfg.hawkes), cfg, seq.num_types(), std::nullopt));
    return out;
}

inline json checkpoint_to_json(const TrainedModel& m, const RunConfig& cfg) {
    return json{{"format", "sdgn-checkpoint"}, {"version", 1}, {"config", config_to_json(cfg)},
                {"config_digest", config_digest(cfg)}, {"params", params_to_json(m.params)},
                {"graph", graph_to_json(m.graph)}, {"synapses", weights_to_json(m.synapses)},
                {"training", {{"epochs_run", m.training.epochs_run}, {"early_stopped", m.training.early_stopped},
                              {"epoch_ll", m.training.epoch_ll}}}};
}

struct Checkpoint {
    RunConfig config;
    IntensityParams params;
    DynamicGraph graph;
};

inline Checkpoint checkpoint_from_json(const json& j) {
    if (j.value("format", "") != "sdgn-checkpoint") throw validation_error("not an sdgn checkpoint");
    Checkpoint c{config_from_json(j.at("config")), params_from_json(j.at("params")), graph_from_json(j.at("graph"))};
    if (j.at("config_digest").get<std::string>() != config_digest(c.config)) {
        throw validation_error("checkpoint config digest does not match its embedded config");
    }
    return c;
}

// ---------------------------------------------------------------------------
// Sweeps

// Worker count from SDGN_THREADS (default: hardware concurrency), at least 1.
inline std::size_t worker_count() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SDGN_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) throw validation_error("SDGN_THREADS must be a positive integer");
        n = std::min(n, static_cast<std::size_t>(v));
    }
    return n;
}

// Runs jobs[0..count) on up to `workers` threads; the first exception is rethrown.
inline void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job) {
    workers = std::max<std::size_t>(1, std::min(workers, count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < count;) {
                try {
                    job(i);
                }
                catch (...) {
                    std::lock_guard lock(mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t: pool) t.join();
    if (error) std::rethrow_exception(error);
}

struct SweepCell {
    std::size_t nodes = 0;
    double sparsity = 0;
    std::uint64_t seed = 0;
};

struct SweepRun {
    SweepCell cell;
    std::vector<MetricsReport> reports; // sdgn/full first, then ablations when enabled
};

inline std::vector<SweepCell> sweep_cells(const RunConfig& cfg) {
    std::vector<SweepCell> cells;
    for (auto n: cfg.sweep.nodes) {
        for (double s: cfg.sweep.sparsity) {
            for (std::size_t k = 0; k < cfg.sweep.seeds; ++k) cells.push_back({n, s, cfg.seed + k});
        }
    }
    return cells;
}

inline RunConfig cell_config(const RunConfig& base, const SweepCell& c) {
    RunConfig cfg = base;
    cfg.seed = c.seed;
    cfg.synth.num_nodes = c.nodes;
    cfg.synth.sparsity = c.sparsity;
    cfg.synth.seed = c.seed;
    return cfg;
}

inline SweepRun run_cell(const RunConfig& base, const SweepCell& c) {
    const auto cfg = cell_config(base, c);
    const auto data = simulate(cfg.synth);
    SweepRun out{c, {}};
    const auto stage = estimate_stage(data.events, cfg, &data.timeline);
    out.reports.push_back(run_mode(ablation_mode::full, data.events, cfg, stage, &data.timeline).report);
    if (cfg.sweep.ablations) {
        for (auto mode: {ablation_mode::random, ablation_mode::spatial_only}) {
            out.reports.push_back(run_mode(mode, data.events, cfg, stage, &data.timeline).report);
        }
        const double cut = split_time(data.events, cfg.train_fraction);
        out.reports.push_back(make_report("poisson", evaluate_poisson(data.events, cut), cfg, c.nodes, std::nullopt));
        out.reports.push_back(make_report("hawkes", evaluate_hawkes(data.events, cut, cfg.hawkes), cfg, c.nodes, std::nullopt));
    }
    return out;
}

inline std::vector<SweepRun> sweep(const RunConfig& cfg, std::size_t workers) {
    const auto cells = sweep_cells(cfg);
    std::vector<SweepRun> runs(cells.size());
    parallel_for(cells.size(), workers, [&](std::size_t i) { runs[i] = run_cell(cfg, cells[i]); });
    return runs;
}

// Spearman rank correlation with average ranks for ties.
inline double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw shape_error("spearman needs two equal series of length >= 2");
    auto ranks = [](std::span<const double> v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5*static_cast<double>(i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0)/n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0)/n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t k = 0; k < rx.size(); ++k) {
        sxy += (rx[k] - mx)*(ry[k] - my);
        sxx += (rx[k] - mx)*(rx[k] - mx);
        syy += (ry[k] - my)*(ry[k] - my);
    }
    if (sxx == 0 || syy == 0) return 0.0;
    return sxy/std::sqrt(sxx*syy);
}

} // namespace sdgn
