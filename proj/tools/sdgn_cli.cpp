// sdgn command-line driver.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sdgn/experiment.hpp"

namespace fs = std::filesystem;
using namespace sdgn;

namespace {

constexpr int exit_validation = 2;
constexpr int exit_runtime = 3;

struct Flags {
    std::string config, out = "out", events, graph, checkpoint, estimator;
    std::optional<std::uint64_t> seed;
    std::optional<double> duration;
    std::optional<std::size_t> steps, epochs, seeds;
    std::vector<std::size_t> nodes;
    std::vector<double> sparsity;
    bool ablations = false;
};

RunConfig resolve_config(const Flags& f) {
    RunConfig cfg = f.config.empty()? RunConfig{}: read_config(f.config);
    if (f.seed) cfg.seed = *f.seed;
    if (f.nodes.size() == 1) cfg.synth.num_nodes = f.nodes.front();
    if (!f.nodes.empty()) cfg.sweep.nodes = f.nodes;
    if (f.sparsity.size() == 1) cfg.synth.sparsity = f.sparsity.front();
    if (!f.sparsity.empty()) cfg.sweep.sparsity = f.sparsity;
    if (f.duration) cfg.synth.duration = *f.duration;
    if (f.steps) cfg.synth.num_steps = *f.steps;
    if (f.epochs) cfg.train.epochs = *f.epochs;
    if (f.seeds) cfg.sweep.seeds = *f.seeds;
    if (f.ablations) cfg.sweep.ablations = true;
    if (!f.estimator.empty()) cfg.graph.estimator = detail::parse_estimator(f.estimator);
    cfg.synth.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

fs::path prepare_out(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw io_error("cannot create output directory " + dir);
    return fs::path(dir);
}

void write_json(const fs::path& path, const json& j) {
    auto out = open_output(path.string());
    out << j.dump(2) << '\n';
    if (!out) throw io_error("failed writing " + path.string());
}

void echo_config(const fs::path& out, const RunConfig& cfg) {
    write_json(out/"config.json", json{{"config", config_to_json(cfg)}, {"config_digest", config_digest(cfg)}});
}

// Reports accumulate; earlier lines are never rewritten.
void append_reports(const fs::path& path, const std::vector<MetricsReport>& reports) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw io_error("cannot open " + path.string());
    for (const auto& r: reports) write_record(out, report_to_json(r));
}

// Wall-clock timings live apart from the reports so reports stay reproducible.
void append_timing(const fs::path& out, const std::string& command, double seconds) {
    std::ofstream f(out/"timing.jsonl", std::ios::binary | std::ios::app);
    write_record(f, json{{"command", command}, {"runtime_seconds", seconds}});
}

EventSequence need_events(const Flags& f) {
    if (f.events.empty()) throw validation_error("--events <file> is required");
    return read_event_file(f.events);
}

std::optional<GraphTimeline> maybe_truth(const Flags& f, const EventSequence& seq) {
    if (f.graph.empty()) return std::nullopt;
    return read_graph_file(f.graph, seq.num_types(), seq.horizon());
}

Checkpoint need_checkpoint(const Flags& f, const EventSequence& seq) {
    if (f.checkpoint.empty()) throw validation_error("--checkpoint <file> is required");
    auto in = open_input(f.checkpoint);
    json j;
    try {
        j = json::parse(in);
    }
    catch (const json::parse_error& e) {
        throw validation_error("checkpoint " + f.checkpoint + " is not valid JSON: " + e.what());
    }
    auto ck = checkpoint_from_json(j);
    if (ck.params.num_types() != seq.num_types()) {
        throw validation_error("checkpoint has " + std::to_string(ck.params.num_types()) + " types, events have "
                               + std::to_string(seq.num_types()));
    }
    if (!f.config.empty() && config_digest(resolve_config(f)) != config_digest(ck.config)) {
        throw validation_error("--config does not match the configuration stored in the checkpoint");
    }
    return ck;
}

void cmd_generate(const Flags& f) {
    const auto cfg = resolve_config(f);
    const auto out = prepare_out(f.out);
    const auto data = simulate(cfg.synth);
    write_event_file((out/"events.jsonl").string(), data.events);
    write_graph_file((out/"graph.jsonl").string(), data.timeline);
    echo_config(out, cfg);
}

void cmd_estimate_graph(const Flags& f) {
    const auto cfg = resolve_config(f);
    const auto out = prepare_out(f.out);
    const auto seq = need_events(f);
    const auto truth = maybe_truth(f, seq);
    const auto stage = estimate_stage(seq, cfg, truth? &*truth: nullptr);
    write_graph_file((out/"graph_estimate.jsonl").string(), to_timeline(stage.estimated, seq.horizon()));
    write_json(out/"graph_estimate.json", graph_to_json(stage.estimated));
    if (stage.ssi) {
        write_json(out/"ssi.json", json{{"ssi", *stage.ssi}, {"config_digest", config_digest(cfg)}});
    }
    echo_config(out, cfg);
}

void cmd_train(const Flags& f) {
    const auto cfg = resolve_config(f);
    const auto out = prepare_out(f.out);
    const auto seq = need_events(f);
    const auto stage = estimate_stage(seq, cfg, nullptr);
    const auto features = build_features(seq, cfg, stage.estimated);
    const auto model = train_model(seq, cfg, stage.pass, stage.estimated, features);
    write_json(out/"checkpoint.json", checkpoint_to_json(model, cfg));
    echo_config(out, cfg);
}

void cmd_predict(const Flags& f) {
    const auto seq = need_events(f);
    const auto ck = need_checkpoint(f, seq);
    const auto out = prepare_out(f.out);
    const auto features = build_features(seq, ck.config, ck.graph);
    const auto ev = evaluate_model(ck.params, features);
    auto file = open_output((out/"predictions.jsonl").string());
    write_record(file, json{{"config_digest", config_digest(ck.config)}, {"predictions", ev.predictions}});
    for (std::size_t k = 0; k < ev.predictions; ++k) {
        write_record(file, json{{"t_last", ev.start[k]}, {"t_pred", ev.predicted[k]}, {"t_true", ev.truth[k]},
                                {"e_pred", ev.predicted_type[k]}, {"e_true", ev.true_type[k]}});
    }
    echo_config(out, ck.config);
}

void cmd_evaluate(const Flags& f) {
    const auto seq = need_events(f);
    const auto ck = need_checkpoint(f, seq);
    const auto truth = maybe_truth(f, seq);
    const auto out = prepare_out(f.out);
    const auto features = build_features(seq, ck.config, ck.graph);
    const auto ev = evaluate_model(ck.params, features);
    std::optional<double> ssi;
    if (truth) ssi = dynamic_ssi(*truth, ck.graph);
    append_reports(out/"report.jsonl", {make_report("sdgn/full", ev, ck.config, seq.num_types(), ssi)});
    echo_config(out, ck.config);
}

void cmd_ablate(const Flags& f) {
    const auto cfg = resolve_config(f);
    const auto out = prepare_out(f.out);
    const auto seq = need_events(f);
    const auto truth = maybe_truth(f, seq);
    append_reports(out/"report.jsonl", ablate(seq, cfg, truth? &*truth: nullptr));
    echo_config(out, cfg);
}

std::string csv_number(const std::optional<double>& v) {
    if (!v || !std::isfinite(*v)) return "";
    std::ostringstream s;
    s.precision(17);
    s << *v;
    return s.str();
}

void cmd_sweep(const Flags& f) {
    const auto cfg = resolve_config(f);
    const auto out = prepare_out(f.out);
    const auto runs = sweep(cfg, worker_count());

    std::vector<MetricsReport> all;
    auto runs_csv = open_output((out/"runs.csv").string());
    runs_csv << "model,num_nodes,sparsity,seed,ssi,rmse,nll\n";
    // (nodes, sparsity) -> mean accumulators for the full model; model -> nodes -> rmse for ablations.
    std::map<std::pair<std::size_t, double>, std::pair<double, double>> ssi_cells, rmse_cells;
    std::map<std::pair<std::size_t, double>, std::size_t> counts;
    std::map<std::pair<std::string, std::size_t>, std::pair<double, std::size_t>> ablation_cells;
    for (const auto& run: runs) {
        for (const auto& r: run.reports) {
            all.push_back(r);
            runs_csv << r.model << ',' << r.num_nodes << ',' << r.sparsity << ',' << r.seed << ',' << csv_number(r.ssi)
                     << ',' << csv_number(r.rmse) << ',' << csv_number(r.nll) << '\n';
            if (r.model == "sdgn/full") {
                const auto key = std::make_pair(r.num_nodes, r.sparsity);
                ssi_cells[key].first += r.ssi.value_or(0);
                rmse_cells[key].first += r.rmse.value_or(0);
                ++counts[key];
            }
            auto& a = ablation_cells[{r.model, r.num_nodes}];
            a.first += r.rmse.value_or(0);
            ++a.second;
        }
    }
    auto fig2a = open_output((out/"fig2a.csv").string());
    auto fig2b = open_output((out/"fig2b.csv").string());
    fig2a << "num_nodes,sparsity,mean_ssi,runs\n";
    fig2b << "num_nodes,sparsity,mean_rmse,runs\n";
    for (const auto& [key, n]: counts) {
        const double d = static_cast<double>(n);
        fig2a << key.first << ',' << key.second << ',' << csv_number(ssi_cells[key].first/d) << ',' << n << '\n';
        fig2b << key.first << ',' << key.second << ',' << csv_number(rmse_cells[key].first/d) << ',' << n << '\n';
    }
    if (cfg.sweep.ablations) {
        auto fig3 = open_output((out/"fig3.csv").string());
        fig3 << "model,num_nodes,mean_rmse,runs\n";
        for (const auto& [key, acc]: ablation_cells) {
            fig3 << key.first << ',' << key.second << ','
                 << csv_number(acc.first/static_cast<double>(acc.second)) << ',' << acc.second << '\n';
        }
    }
    append_reports(out/"report.jsonl", all);
    echo_config(out, cfg);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spiking dynamic-graph temporal point process toolkit"};
    app.require_subcommand(1);
    Flags f;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", f.config, "JSON configuration file")->check(CLI::ExistingFile);
        sub->add_option("--seed", f.seed, "global seed");
        sub->add_option("--out", f.out, "output directory")->capture_default_str();
    };
    auto add_model = [&](CLI::App* sub) {
        sub->add_option("--estimator", f.estimator, "graph estimator: softmax or lasso");
        sub->add_option("--epochs", f.epochs, "training epochs");
    };
    auto add_events = [&](CLI::App* sub, bool truth) {
        sub->add_option("--events", f.events, "event file")->required();
        if (truth) sub->add_option("--graph", f.graph, "ground-truth graph sidecar");
    };

    std::map<std::string, std::function<void(const Flags&)>> handlers;
    auto* gen = app.add_subcommand("generate", "simulate a synthetic dynamic-graph Hawkes dataset");
    add_common(gen);
    gen->add_option("--nodes", f.nodes, "number of nodes")->expected(1);
    gen->add_option("--sparsity", f.sparsity, "edge density in [0, 1]")->expected(1);
    gen->add_option("--duration", f.duration, "recording length in seconds");
    gen->add_option("--steps", f.steps, "number of graph epochs");
    handlers["generate"] = cmd_generate;

    auto* est = app.add_subcommand("estimate-graph", "estimate the dynamic graph from spiking activity");
    add_common(est);
    add_events(est, true);
    est->add_option("--estimator", f.estimator, "graph estimator: softmax or lasso");
    handlers["estimate-graph"] = cmd_estimate_graph;

    auto* tr = app.add_subcommand("train", "fit intensity parameters and write a checkpoint");
    add_common(tr);
    add_events(tr, false);
    add_model(tr);
    handlers["train"] = cmd_train;

    auto* pr = app.add_subcommand("predict", "predict next-event times on the held-out split");
    add_common(pr);
    add_events(pr, false);
    pr->add_option("--checkpoint", f.checkpoint, "checkpoint from train")->required();
    handlers["predict"] = cmd_predict;

    auto* ev = app.add_subcommand("evaluate", "held-out RMSE, NLL and SSI of a checkpoint");
    add_common(ev);
    add_events(ev, true);
    ev->add_option("--checkpoint", f.checkpoint, "checkpoint from train")->required();
    handlers["evaluate"] = cmd_evaluate;

    auto* ab = app.add_subcommand("ablate", "graph-mode ablations and classical baselines");
    add_common(ab);
    add_events(ab, true);
    add_model(ab);
    handlers["ablate"] = cmd_ablate;

    auto* sw = app.add_subcommand("sweep", "node-count by sparsity grid over seeds");
    add_common(sw);
    add_model(sw);
    sw->add_option("--nodes", f.nodes, "node counts")->delimiter(',');
    sw->add_option("--sparsity", f.sparsity, "edge densities")->delimiter(',');
    sw->add_option("--seeds", f.seeds, "seeds per grid cell");
    sw->add_option("--duration", f.duration, "recording length in seconds");
    sw->add_flag("--ablations", f.ablations, "also run random, spatial-only and baselines");
    handlers["sweep"] = cmd_sweep;

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0? 0: exit_validation;
    }

    const auto* chosen = app.get_subcommands().front();
    const auto started = std::chrono::steady_clock::now();
    try {
        handlers.at(chosen->get_name())(f);
        const std::chrono::duration<double> took = std::chrono::steady_clock::now() - started;
        append_timing(fs::path(f.out), chosen->get_name(), took.count());
    }
    catch (const validation_error& e) {
        std::cerr << "sdgn " << chosen->get_name() << ": invalid input: " << e.what() << '\n';
        return exit_validation;
    }
    catch (const json::exception& e) {
        std::cerr << "sdgn " << chosen->get_name() << ": malformed input: " << e.what() << '\n';
        return exit_validation;
    }
    catch (const std::exception& e) {
        std::cerr << "sdgn " << chosen->get_name() << ": " << e.what() << '\n';
        return exit_runtime;
    }
    return 0;
}
