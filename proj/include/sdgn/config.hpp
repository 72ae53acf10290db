#pragma once

// Run configuration: every module config plus experiment settings, read from a
// strict JSON document (unknown keys are rejected) and echoed back verbatim.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "baselines.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "jsonl.hpp"
#include "plasticity.hpp"
#include "snn.hpp"
#include "synthgen.hpp"
#include "tpp_model.hpp"

namespace sdgn {

enum class estimator_kind { softmax, lasso };

struct GraphConfig {
    estimator_kind estimator = estimator_kind::softmax;
    std::size_t windows = 10;
    PairScoreConfig pair;
    LassoGraphConfig lasso;
};

struct SweepConfig {
    std::vector<std::size_t> nodes{10, 20, 40};
    std::vector<double> sparsity{0.01, 0.1, 0.3, 0.5};
    std::size_t seeds = 5;
    bool ablations = false;
};

struct RunConfig {
    std::uint64_t seed = 1;
    SynthConfig synth;
    NetworkConfig network;
    LifParams lif;
    SimConfig sim;
    StdpConfig stdp;
    bool plastic = true;
    EmbeddingConfig embedding;
    GraphConfig graph;
    LikelihoodConfig likelihood;
    TrainConfig train;
    double train_fraction = 0.8;
    HawkesFitConfig hawkes;
    SweepConfig sweep;

    RunConfig() {
        // Neighbour-only excitation keeps the default benchmark subcritical.
        synth.kernel = kernel_mode::last_spike;
    }

    void validate() const {
        synth.validate();
        lif.validate();
        sim.validate();
        stdp.validate();
        embedding.validate();
        graph.pair.validate();
        likelihood.validate();
        train.validate();
        if (graph.windows == 0) throw validation_error("graph.windows must be at least 1");
        if (!(train_fraction > 0 && train_fraction < 1)) throw validation_error("train_fraction must lie in (0, 1)");
        if (embedding.neurons_per_node != network.neurons_per_type) {
            throw validation_error("embedding.neurons_per_node must equal network.neurons_per_type");
        }
        if (hawkes.beta_grid.empty()) throw validation_error("hawkes.beta_grid is empty");
        if (sweep.seeds == 0) throw validation_error("sweep.seeds must be at least 1");
    }
};

namespace detail {

// Reads keys of one JSON object, remembering which were consumed.
class Section {
public:
    Section(const json& j, std::string name): j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw validation_error("config section '" + name_ + "' must be an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        try {
            out = j_.at(key).get<T>();
        }
        catch (const json::exception&) {
            throw validation_error("config key '" + name_ + "." + key + "' has the wrong type");
        }
    }

    void get(const char* key, range& out) {
        std::vector<double> v{out.lo, out.hi};
        get(key, v);
        if (v.size() != 2) throw validation_error("config key '" + name_ + "." + key + "' must be [lo, hi]");
        out = {v[0], v[1]};
    }

    template <class F>
    void section(const char* key, F&& fn) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        Section s(j_.at(key), name_.empty()? key: name_ + "." + key);
        fn(s);
        s.finish();
    }

    std::string text(const char* key, const std::string& fallback) {
        std::string s = fallback;
        get(key, s);
        return s;
    }

    void finish() const {
        for (const auto& [k, v]: j_.items()) {
            if (!seen_.count(k)) {
                throw validation_error("unknown config key '" + (name_.empty()? k: name_ + "." + k) + "'");
            }
        }
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

inline kernel_mode parse_kernel(const std::string& s) {
    if (s == "full_history") return kernel_mode::full_history;
    if (s == "last_spike") return kernel_mode::last_spike;
    throw validation_error("unknown kernel mode '" + s + "'");
}

inline std::string to_string(kernel_mode k) { return k == kernel_mode::full_history? "full_history": "last_spike"; }

inline estimator_kind parse_estimator(const std::string& s) {
    if (s == "softmax") return estimator_kind::softmax;
    if (s == "lasso") return estimator_kind::lasso;
    throw validation_error("unknown estimator '" + s + "'");
}

inline std::string to_string(estimator_kind e) { return e == estimator_kind::softmax? "softmax": "lasso"; }

inline combine_rule parse_rule(const std::string& s) {
    if (s == "and") return combine_rule::and_rule;
    if (s == "or") return combine_rule::or_rule;
    throw validation_error("unknown combine rule '" + s + "'");
}

inline mc_sampling parse_sampling(const std::string& s) {
    if (s == "uniform") return mc_sampling::uniform;
    if (s == "stratified") return mc_sampling::stratified;
    throw validation_error("unknown MC sampling '" + s + "'");
}

inline rate_schedule parse_schedule(const std::string& s) {
    if (s == "constant") return rate_schedule::constant;
    if (s == "inverse_sqrt") return rate_schedule::inverse_sqrt;
    throw validation_error("unknown rate schedule '" + s + "'");
}

} // namespace detail

inline RunConfig config_from_json(const json& doc) {
    RunConfig c;
    detail::Section root(doc, "");
    root.get("seed", c.seed);
    root.section("synth", [&](auto& s) {
        s.get("num_nodes", c.synth.num_nodes);
        s.get("sparsity", c.synth.sparsity);
        s.get("num_steps", c.synth.num_steps);
        s.get("duration", c.synth.duration);
        s.get("mu_range", c.synth.mu_range);
        s.get("alpha_range", c.synth.alpha_range);
        s.get("beta_range", c.synth.beta_range);
        s.get("carryover_fraction", c.synth.carryover_fraction);
        c.synth.kernel = detail::parse_kernel(s.text("kernel", detail::to_string(c.synth.kernel)));
        s.get("max_node_rate", c.synth.max_node_rate);
    });
    root.section("network", [&](auto& s) {
        s.get("neurons_per_type", c.network.neurons_per_type);
        s.get("input_weight", c.network.input_weight);
        s.get("recurrent_fanout", c.network.recurrent_fanout);
        s.get("init_weight", c.network.init_weight);
        s.get("w_max", c.network.w_max);
    });
    root.section("lif", [&](auto& s) {
        s.get("tau_m", c.lif.tau_m);
        s.get("leak_alpha", c.lif.leak_alpha);
        s.get("v_rest", c.lif.v_rest);
        s.get("v_th", c.lif.v_th);
        s.get("v_reset", c.lif.v_reset);
        s.get("syn_epsilon", c.lif.syn_epsilon);
        s.get("syn_beta", c.lif.syn_beta);
        s.get("surrogate_sharpness", c.lif.surrogate_sharpness);
    });
    root.section("sim", [&](auto& s) {
        s.get("tau_min", c.sim.tau_min);
        s.get("dt_max", c.sim.dt_max);
        s.get("record_grid", c.sim.record_grid);
        s.get("syn_delay", c.sim.syn_delay);
    });
    root.section("stdp", [&](auto& s) {
        s.get("enabled", c.plastic);
        s.get("eta", c.stdp.eta);
        s.get("a_plus", c.stdp.a_plus);
        s.get("a_minus", c.stdp.a_minus);
        s.get("tau_plus", c.stdp.tau_plus);
        s.get("tau_minus", c.stdp.tau_minus);
        s.get("reg_alpha", c.stdp.reg_alpha);
        s.get("reg_beta", c.stdp.reg_beta);
        s.get("pairing_window", c.stdp.pairing_window);
        c.stdp.schedule = detail::parse_schedule(s.text("schedule", c.stdp.schedule == rate_schedule::constant? "constant": "inverse_sqrt"));
    });
    root.section("embedding", [&](auto& s) {
        s.get("neurons_per_node", c.embedding.neurons_per_node);
        s.get("filter_tau", c.embedding.filter_tau);
        s.get("decay_between_events", c.embedding.decay_between_events);
    });
    root.section("graph", [&](auto& s) {
        c.graph.estimator = detail::parse_estimator(s.text("estimator", detail::to_string(c.graph.estimator)));
        s.get("windows", c.graph.windows);
        s.get("tau", c.graph.pair.tau);
        s.get("sub_windows", c.graph.pair.sub_windows);
        s.get("gain", c.graph.pair.gain);
        s.get("comodulation", c.graph.pair.comodulation);
        s.get("theta", c.graph.pair.theta);
        s.section("lasso", [&](auto& l) {
            l.get("basis_size", c.graph.lasso.basis_size);
            l.get("sample_length", c.graph.lasso.sample_length);
            l.get("signal_tau", c.graph.lasso.signal_tau);
            c.graph.lasso.rule = detail::parse_rule(l.text("rule", c.graph.lasso.rule == combine_rule::and_rule? "and": "or"));
            l.get("rho", c.graph.lasso.admm.rho);
            l.get("tol", c.graph.lasso.admm.tol);
            l.get("max_iter", c.graph.lasso.admm.max_iter);
        });
    });
    root.section("likelihood", [&](auto& s) {
        s.get("num_mc", c.likelihood.num_mc);
        s.get("neg_samples", c.likelihood.neg_samples);
        c.likelihood.sampling = detail::parse_sampling(s.text("sampling", c.likelihood.sampling == mc_sampling::uniform? "uniform": "stratified"));
    });
    root.section("train", [&](auto& s) {
        s.get("epochs", c.train.epochs);
        s.get("batches", c.train.batches);
        s.get("step", c.train.step);
        s.get("clip", c.train.clip);
        s.get("patience", c.train.patience);
        s.get("train_fraction", c.train_fraction);
    });
    root.section("hawkes", [&](auto& s) {
        s.get("beta_grid", c.hawkes.beta_grid);
        s.get("max_iter", c.hawkes.max_iter);
        s.get("tol", c.hawkes.tol);
    });
    root.section("sweep", [&](auto& s) {
        s.get("nodes", c.sweep.nodes);
        s.get("sparsity", c.sweep.sparsity);
        s.get("seeds", c.sweep.seeds);
        s.get("ablations", c.sweep.ablations);
    });
    root.finish();
    return c;
}

inline json config_to_json(const RunConfig& c) {
    auto rng = [](const range& r) { return json::array({r.lo, r.hi}); };
    return json{
        {"seed", c.seed},
        {"synth", {{"num_nodes", c.synth.num_nodes}, {"sparsity", c.synth.sparsity}, {"num_steps", c.synth.num_steps},
                   {"duration", c.synth.duration}, {"mu_range", rng(c.synth.mu_range)}, {"alpha_range", rng(c.synth.alpha_range)},
                   {"beta_range", rng(c.synth.beta_range)}, {"carryover_fraction", c.synth.carryover_fraction},
                   {"kernel", detail::to_string(c.synth.kernel)}, {"max_node_rate", c.synth.max_node_rate}}},
        {"network", {{"neurons_per_type", c.network.neurons_per_type}, {"input_weight", c.network.input_weight},
                     {"recurrent_fanout", c.network.recurrent_fanout}, {"init_weight", c.network.init_weight},
                     {"w_max", c.network.w_max}}},
        {"lif", {{"tau_m", c.lif.tau_m}, {"leak_alpha", c.lif.leak_alpha}, {"v_rest", c.lif.v_rest}, {"v_th", c.lif.v_th},
                 {"v_reset", c.lif.v_reset}, {"syn_epsilon", c.lif.syn_epsilon}, {"syn_beta", c.lif.syn_beta},
                 {"surrogate_sharpness", c.lif.surrogate_sharpness}}},
        {"sim", {{"tau_min", c.sim.tau_min}, {"dt_max", c.sim.dt_max}, {"record_grid", c.sim.record_grid},
                 {"syn_delay", c.sim.syn_delay}}},
        {"stdp", {{"enabled", c.plastic}, {"eta", c.stdp.eta}, {"a_plus", c.stdp.a_plus}, {"a_minus", c.stdp.a_minus},
                  {"tau_plus", c.stdp.tau_plus}, {"tau_minus", c.stdp.tau_minus}, {"reg_alpha", c.stdp.reg_alpha},
                  {"reg_beta", c.stdp.reg_beta}, {"pairing_window", c.stdp.pairing_window},
                  {"schedule", c.stdp.schedule == rate_schedule::constant? "constant": "inverse_sqrt"}}},
        {"embedding", {{"neurons_per_node", c.embedding.neurons_per_node}, {"filter_tau", c.embedding.filter_tau},
                       {"decay_between_events", c.embedding.decay_between_events}}},
        {"graph", {{"estimator", detail::to_string(c.graph.estimator)}, {"windows", c.graph.windows},
                   {"tau", c.graph.pair.tau}, {"sub_windows", c.graph.pair.sub_windows}, {"gain", c.graph.pair.gain},
                   {"comodulation", c.graph.pair.comodulation}, {"theta", c.graph.pair.theta},
                   {"lasso", {{"basis_size", c.graph.lasso.basis_size}, {"sample_length", c.graph.lasso.sample_length},
                              {"signal_tau", c.graph.lasso.signal_tau},
                              {"rule", c.graph.lasso.rule == combine_rule::and_rule? "and": "or"},
                              {"rho", c.graph.lasso.admm.rho}, {"tol", c.graph.lasso.admm.tol},
                              {"max_iter", c.graph.lasso.admm.max_iter}}}}},
        {"likelihood", {{"num_mc", c.likelihood.num_mc}, {"neg_samples", c.likelihood.neg_samples},
                        {"sampling", c.likelihood.sampling == mc_sampling::uniform? "uniform": "stratified"}}},
        {"train", {{"epochs", c.train.epochs}, {"batches", c.train.batches}, {"step", c.train.step}, {"clip", c.train.clip},
                   {"patience", c.train.patience}, {"train_fraction", c.train_fraction}}},
        {"hawkes", {{"beta_grid", c.hawkes.beta_grid}, {"max_iter", c.hawkes.max_iter}, {"tol", c.hawkes.tol}}},
        {"sweep", {{"nodes", c.sweep.nodes}, {"sparsity", c.sweep.sparsity}, {"seeds", c.sweep.seeds},
                   {"ablations", c.sweep.ablations}}},
    };
}

inline RunConfig read_config(const std::string& path) {
    auto in = open_input(path);
    json doc;
    try {
        doc = json::parse(in);
    }
    catch (const json::parse_error& e) {
        throw validation_error("config " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(doc);
}

// Content digest of the configuration that generated an artifact.
inline std::string config_digest(const RunConfig& c) { return digest_hex(config_to_json(c)); }

} // namespace sdgn
