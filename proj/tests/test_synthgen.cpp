#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "sdgn/synthgen.hpp"
#include "support/oracles.hpp"

using namespace sdgn;

namespace {

SynthConfig isolated(double mu, double duration, std::uint64_t seed) {
    SynthConfig c;
    c.num_nodes = 1;
    c.sparsity = 0;
    c.duration = duration;
    c.mu_range = {mu, std::nextafter(mu, 2*mu + 1)};
    c.seed = seed;
    return c;
}

GraphTimeline single_epoch(std::size_t n, std::vector<edge> edges, double duration) {
    GraphTimeline tl;
    tl.num_nodes = n;
    tl.duration = duration;
    tl.snapshots.push_back({0.0, std::move(edges)});
    return tl;
}

HawkesParams uniform_params(std::size_t n, double mu, double alpha, double beta) {
    HawkesParams p;
    p.n = n;
    p.mu.assign(n, mu);
    p.alpha.assign(n*n, alpha);
    p.beta.assign(n*n, beta);
    return p;
}

double jaccard(const std::vector<edge>& a, const std::vector<edge>& b) {
    std::set<edge> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::size_t inter = 0;
    for (const auto& e: sa) inter += sb.count(e);
    const auto uni = sa.size() + sb.size() - inter;
    return uni == 0? 1.0: double(inter)/double(uni);
}

}

TEST(GraphTimeline, TwoNodesFullDensityAlwaysHaveTheEdge) {
    SynthConfig c;
    c.num_nodes = 2;
    c.sparsity = 1;
    for (const auto& s: sample_graph_timeline(c).snapshots) {
        ASSERT_EQ(s.edges.size(), 1u);
        EXPECT_EQ(s.edges[0], edge(0, 1));
    }
}

TEST(GraphTimeline, ZeroDensityIsEmpty) {
    SynthConfig c;
    c.num_nodes = 10;
    c.sparsity = 0;
    for (const auto& s: sample_graph_timeline(c).snapshots) EXPECT_TRUE(s.edges.empty());
}

TEST(GraphTimeline, EpochsTileAndHoldTargetCount) {
    SynthConfig c;
    c.num_nodes = 20;
    c.sparsity = 0.3;
    c.num_steps = 7;
    const auto tl = sample_graph_timeline(c);
    ASSERT_EQ(tl.snapshots.size(), 7u);
    EXPECT_EQ(tl.snapshots.front().start, 0.0);
    for (std::size_t k = 0; k < tl.snapshots.size(); ++k) {
        EXPECT_EQ(tl.snapshots[k].edges.size(), 57u);
        if (k > 0) {
            EXPECT_DOUBLE_EQ(tl.epoch_end(k - 1), tl.snapshots[k].start);
        }
    }
    EXPECT_DOUBLE_EQ(tl.epoch_end(6), c.duration);
}

// Retention process re-enacted with an unrelated generator: keep round(f*E) of the
// previous edges, refill uniformly from the pairs not kept.
TEST(GraphTimeline, ConsecutiveJaccardMatchesRetentionOracle) {
    const std::size_t pairs = 190, target = 57;
    const auto keep = static_cast<std::size_t>(std::llround(0.5*target));
    std::mt19937_64 rng(2024);
    double oracle = 0;
    const int resamples = 10000;
    for (int r = 0; r < resamples; ++r) {
        std::vector<std::size_t> idx(pairs);
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        std::set<std::size_t> prev(idx.begin(), idx.begin() + target);
        std::vector<std::size_t> pv(prev.begin(), prev.end());
        std::shuffle(pv.begin(), pv.end(), rng);
        std::set<std::size_t> next(pv.begin(), pv.begin() + keep);
        std::vector<std::size_t> rest;
        for (std::size_t k = 0; k < pairs; ++k) {
            if (!next.count(k)) rest.push_back(k);
        }
        std::shuffle(rest.begin(), rest.end(), rng);
        next.insert(rest.begin(), rest.begin() + (target - keep));
        std::size_t inter = 0;
        for (auto k: prev) inter += next.count(k);
        oracle += double(inter)/double(2*target - inter);
    }
    oracle /= resamples;

    double sum = 0;
    int count = 0;
    for (std::uint64_t seed = 1; seed <= 500; ++seed) {
        SynthConfig c;
        c.num_nodes = 20;
        c.sparsity = 0.3;
        c.num_steps = 5;
        c.carryover_fraction = 0.5;
        c.seed = seed;
        const auto tl = sample_graph_timeline(c);
        for (std::size_t k = 1; k < tl.snapshots.size(); ++k) {
            sum += jaccard(tl.snapshots[k - 1].edges, tl.snapshots[k].edges);
            ++count;
        }
    }
    EXPECT_NEAR(sum/count, oracle, 0.005);
}

TEST(Intensity, NoNeighboursIsBaseRate) {
    const auto tl = single_epoch(2, {}, 10);
    const auto p = uniform_params(2, 1.0, 0.5, 1.0);
    std::vector<SpikeTrain> h(2);
    h[1].times = {1.0, 2.0};
    EXPECT_DOUBLE_EQ(hawkes_intensity(0, 3.0, h, tl, p), 1.0);
}

TEST(Intensity, SingleNeighbourSpike) {
    const auto tl = single_epoch(2, {{0, 1}}, 100);
    const auto p = uniform_params(2, 1.0, 0.5, 1.0);
    std::vector<SpikeTrain> h(2);
    h[1].times = {0.0};
    EXPECT_NEAR(hawkes_intensity(0, 1e-12, h, tl, p), 1.5, 1e-9);
    EXPECT_NEAR(hawkes_intensity(0, 60.0, h, tl, p), 1.0, 1e-12);
}

TEST(Intensity, TwoNeighbourSpikesFullHistory) {
    const auto tl = single_epoch(2, {{0, 1}}, 10);
    const auto p = uniform_params(2, 0.0, 0.5, 1.0);
    std::vector<SpikeTrain> h(2);
    h[1].times = {0.0, std::log(2.0)};
    EXPECT_NEAR(hawkes_intensity(0, std::log(2.0) + 1e-12, h, tl, p), 0.75, 1e-9);
    EXPECT_NEAR(hawkes_intensity(0, std::log(2.0) + 1e-12, h, tl, p, kernel_mode::last_spike), 0.5, 1e-9);
}

TEST(Intensity, OutsideDurationIsADomainError) {
    const auto tl = single_epoch(1, {}, 10);
    const auto p = uniform_params(1, 1.0, 0.0, 1.0);
    std::vector<SpikeTrain> h(1);
    EXPECT_THROW(hawkes_intensity(0, 10.5, h, tl, p), domain_error);
    EXPECT_THROW(hawkes_intensity(0, -1.0, h, tl, p), domain_error);
}

TEST(Intensity, BoundedBelowAndMonotoneInEdges) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 10);
    SynthConfig c;
    c.num_nodes = 6;
    c.sparsity = 0.6;
    c.duration = 10;
    const auto tl = sample_graph_timeline(c);
    const auto p = draw_hawkes_params(c);
    std::vector<SpikeTrain> h(6);
    for (auto& tr: h) {
        for (int k = 0; k < 20; ++k) tr.times.push_back(u(rng));
        std::sort(tr.times.begin(), tr.times.end());
    }
    for (int trial = 0; trial < 200; ++trial) {
        const double t = u(rng);
        const std::size_t node = trial % 6;
        const double full = hawkes_intensity(node, t, h, tl, p);
        EXPECT_GE(full, p.mu[node]);
        auto pruned = tl;
        auto& edges = pruned.snapshots[pruned.epoch_at(t)].edges;
        if (!edges.empty()) edges.erase(edges.begin() + trial % static_cast<int>(edges.size()));
        EXPECT_LE(hawkes_intensity(node, t, h, pruned, p), full + 1e-15);
    }
}

TEST(Simulate, IsolatedNodeCountIsPoissonLike) {
    const auto r = simulate(isolated(1.0, 1000, 4));
    EXPECT_NEAR(double(r.events.size()), 1000.0, 3*std::sqrt(1000.0));
}

TEST(Simulate, ZeroRateNoEdgesIsEmpty) {
    SynthConfig c;
    c.num_nodes = 5;
    c.sparsity = 0;
    c.mu_range = {0.0, 1e-300};
    EXPECT_TRUE(simulate(c).events.empty());
}

TEST(Simulate, IsReproducible) {
    SynthConfig c;
    c.num_nodes = 8;
    c.duration = 100;
    EXPECT_EQ(simulate(c).events, simulate(c).events);
    auto d = c;
    d.seed = 2;
    EXPECT_NE(simulate(c).events, simulate(d).events);
}

// Edges are undirected, so coupling is checked as connected versus isolated nodes.
TEST(Simulate, CoupledNodesOutpaceIsolatedNode) {
    double coupled = 0, alone = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        SynthConfig c;
        c.num_nodes = 3;
        c.sparsity = 1.0/3.0;
        c.num_steps = 1;
        c.duration = 200;
        c.mu_range = {1.0, std::nextafter(1.0, 2.0)};
        c.alpha_range = {2.0, 2.5};
        c.beta_range = {4.0, 5.0};
        c.seed = seed;
        const auto r = simulate(c);
        const auto [i, j] = r.timeline.snapshots[0].edges.at(0);
        const std::size_t other = 3 - i - j;
        coupled += 0.5*double(r.events.count(i) + r.events.count(j));
        alone += double(r.events.count(other));
    }
    EXPECT_GT(coupled, 1.2*alone);
}

TEST(Simulate, RunawayExcitationRaisesSimulationError) {
    SynthConfig c;
    c.num_nodes = 10;
    c.sparsity = 1;
    c.alpha_range = {20, 30};
    c.beta_range = {1, 1.5};
    c.max_node_rate = 50;
    try {
        simulate(c);
        FAIL() << "expected simulation_error";
    }
    catch (const simulation_error& e) {
        EXPECT_NE(std::string(e.what()).find("node"), std::string::npos);
    }
}

TEST(GridOracle, ZeroIntensityIsEmpty) {
    SynthConfig c;
    c.num_nodes = 2;
    c.sparsity = 0;
    c.duration = 10;
    c.mu_range = {0.0, 1e-300};
    EXPECT_TRUE(oracle::grid_simulate(c, 1e-3, 1).empty());
}

TEST(GridOracle, PoissonInterEventTimesMatchThinning) {
    std::vector<double> a, b;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto cfg = isolated(1.0, 1000, seed);
        const auto thin = simulate(cfg).events;
        const auto grid = oracle::grid_simulate(cfg, 1e-3, 100 + seed);
        for (std::size_t k = 1; k < thin.size(); ++k) a.push_back(thin[k].t - thin[k - 1].t);
        for (std::size_t k = 1; k < grid.size(); ++k) b.push_back(grid[k].t - grid[k - 1].t);
    }
    EXPECT_GT(oracle::ks_two_sample_p(a, b), 0.01);
}

TEST(GridOracle, CoupledCountsAgreeWithinFivePercent) {
    double thin = 0, grid = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        SynthConfig c;
        c.num_nodes = 3;
        c.sparsity = 1;
        c.num_steps = 2;
        c.duration = 100;
        c.seed = seed;
        thin += double(simulate(c).events.size());
        grid += double(oracle::grid_simulate(c, 1e-3, 500 + seed).size());
    }
    EXPECT_NEAR(thin/grid, 1.0, 0.05);
}

TEST(GraphFile, RoundTrips) {
    SynthConfig c;
    c.num_nodes = 12;
    const auto tl = sample_graph_timeline(c);
    std::ostringstream out;
    write_graph_file(out, tl);
    std::istringstream in(out.str());
    const auto back = parse_graph_file(in, c.num_nodes, c.duration);
    ASSERT_EQ(back.snapshots.size(), tl.snapshots.size());
    for (std::size_t k = 0; k < tl.snapshots.size(); ++k) {
        EXPECT_EQ(back.snapshots[k].start, tl.snapshots[k].start);
        EXPECT_EQ(back.snapshots[k].edges, tl.snapshots[k].edges);
    }
}

TEST(GraphFile, RejectsBadEndpoint) {
    std::istringstream in("{\"epoch_start\": 0, \"edges\": [[0, 5]]}\n");
    EXPECT_THROW(parse_graph_file(in, 3, 10), parse_error);
}
