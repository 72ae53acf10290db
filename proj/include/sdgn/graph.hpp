#pragma once

// Dynamic dependency-graph estimation from spike statistics, plus the
// membrane-basis group-lasso estimator and the SSI comparison metric.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adjacency.hpp"
#include "errors.hpp"
#include "events_io.hpp"
#include "jsonl.hpp"
#include "plasticity.hpp"
#include "random.hpp"
#include "snn.hpp"
#include "synthgen.hpp"

namespace sdgn {

// ---------------------------------------------------------------------------
// Spike-correlation estimator

// Sum of exp(-|ti - tj| / tau) over all cross pairs; lags beyond 30 tau are dropped.
inline double pair_score(std::span<const double> a, std::span<const double> b, double tau) {
    if (!(tau > 0)) throw domain_error("pair_score tau must be positive");
    const double cutoff = 30*tau;
    double sum = 0;
    std::size_t lo = 0;
    for (double ta: a) {
        while (lo < b.size() && b[lo] < ta - cutoff) ++lo;
        for (std::size_t k = lo; k < b.size() && b[k] <= ta + cutoff; ++k) {
            sum += std::exp(-std::abs(ta - b[k])/tau);
        }
    }
    return sum;
}

inline double pair_score(const SpikeTrain& a, const SpikeTrain& b, double tau) {
    return pair_score(std::span<const double>(a.times), std::span<const double>(b.times), tau);
}

struct PairScoreConfig {
    double tau = 0.3;            // kernel width, seconds
    std::size_t sub_windows = 1; // score averaged over this many slices of each window
    double gain = 2.0;           // softmax inverse temperature on standardised scores
    double comodulation = 1.0;   // weight of the rate co-modulation term in the null variance
    double theta = 0;            // 0 selects 1.5 / (N - 1)

    void validate() const {
        if (!(tau > 0)) throw validation_error("pair score tau must be positive");
        if (sub_windows == 0) throw validation_error("sub_windows must be at least 1");
        if (!(gain > 0)) throw validation_error("softmax gain must be positive");
        if (!(theta >= 0 && theta < 1)) throw validation_error("theta must lie in [0, 1)");
    }

    double threshold(std::size_t n) const {
        if (theta > 0) return theta;
        return n > 1? 1.5/static_cast<double>(n - 1): 1.0;
    }
};

namespace detail {

inline std::span<const double> clip(const SpikeTrain& s, double t0, double t1) {
    auto lo = std::lower_bound(s.times.begin(), s.times.end(), t0);
    auto hi = std::lower_bound(lo, s.times.end(), t1);
    return {s.times.data() + (lo - s.times.begin()), static_cast<std::size_t>(hi - lo)};
}

} // namespace detail

// Mean pair score over `sub_windows` slices of [t0, t1), standardised against the
// score two independent homogeneous trains with the same counts would produce.
inline Eigen::MatrixXd standardized_scores(std::span<const SpikeTrain> trains, const PairScoreConfig& cfg,
                                           double t0, double t1) {
    cfg.validate();
    if (!(t1 > t0)) throw domain_error("empty score window");
    const std::size_t n = trains.size();
    const std::size_t k_sub = cfg.sub_windows;
    const double w = (t1 - t0)/static_cast<double>(k_sub);
    const double tau = cfg.tau;
    Eigen::MatrixXd score = Eigen::MatrixXd::Zero(n, n), mean = score, var = score;
    std::vector<std::span<const double>> clipped(n);
    for (std::size_t k = 0; k < k_sub; ++k) {
        const double a = t0 + w*static_cast<double>(k);
        const double b = k + 1 == k_sub? t1: a + w;
        for (std::size_t i = 0; i < n; ++i) clipped[i] = detail::clip(trains[i], a, b);
        for (std::size_t i = 0; i < n; ++i) {
            const double ni = static_cast<double>(clipped[i].size());
            for (std::size_t j = i + 1; j < n; ++j) {
                const double nj = static_cast<double>(clipped[j].size());
                const double s = pair_score(clipped[i], clipped[j], tau);
                // Null moments; the second variance term absorbs slow rate co-modulation.
                const double m = ni*nj*2*tau/w;
                const double v = ni*nj*tau/w + cfg.comodulation*ni*nj*(ni + nj)*4*tau*tau/(w*w);
                score(i, j) += s;
                mean(i, j) += m;
                var(i, j) += v;
            }
        }
    }
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double sd = std::sqrt(var(i, j));
            z(i, j) = z(j, i) = sd > 0? (score(i, j) - mean(i, j))/sd: 0.0;
        }
    }
    return z;
}

// Row softmax over partners j != i; the diagonal is zero.
inline Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& logits) {
    const auto n = logits.rows();
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) if (j != i) mx = std::max(mx, logits(i, j));
        double z = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            p(i, j) = std::exp(logits(i, j) - mx);
            z += p(i, j);
        }
        if (z > 0) p.row(i) /= z;
    }
    return p;
}

inline Eigen::MatrixXd edge_probabilities(std::span<const SpikeTrain> trains, const PairScoreConfig& cfg,
                                          double t0, double t1) {
    return row_softmax(cfg.gain*standardized_scores(trains, cfg, t0, t1));
}

// adjacency_ij = p_ij > theta, OR-symmetrised, no self-loops.
inline Adjacency threshold_graph(const Eigen::MatrixXd& p, double theta) {
    const auto n = static_cast<std::size_t>(p.rows());
    Adjacency a(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j && (p(i, j) > theta || p(j, i) > theta)) a.set(i, j, true);
        }
    }
    return a;
}

struct GraphWindow {
    double start = 0;
    double end = 0;
    Eigen::MatrixXd prob; // row-stochastic over partners
    double theta = 0;
    Adjacency adjacency;
};

struct DynamicGraph {
    std::size_t num_nodes = 0;
    std::vector<GraphWindow> windows;

    // Window whose [start, end) contains t; the last window also owns its end.
    const GraphWindow& at(double t) const {
        if (windows.empty()) throw domain_error("graph has no windows");
        auto it = std::upper_bound(windows.begin(), windows.end(), t,
                                   [](double x, const GraphWindow& w) { return x < w.start; });
        if (it == windows.begin()) return windows.front();
        return *(it - 1);
    }

    std::size_t window_index(double t) const { return static_cast<std::size_t>(&at(t) - windows.data()); }

    double density() const {
        if (num_nodes < 2 || windows.empty()) return 0;
        double pairs = 0;
        for (const auto& w: windows) pairs += static_cast<double>(w.adjacency.undirected_edges().size());
        return pairs/(static_cast<double>(windows.size())*0.5*num_nodes*(num_nodes - 1.0));
    }
};

inline GraphWindow make_window(double start, double end, Eigen::MatrixXd prob, double theta) {
    GraphWindow w{start, end, std::move(prob), theta, {}};
    w.adjacency = threshold_graph(w.prob, theta);
    return w;
}

// One spike-softmax graph per equal window of [0, horizon).
inline DynamicGraph estimate_dynamic_graph(std::span<const SpikeTrain> trains, const PairScoreConfig& cfg,
                                           double horizon, std::size_t num_windows) {
    if (num_windows == 0) throw validation_error("need at least one graph window");
    DynamicGraph g;
    g.num_nodes = trains.size();
    const double theta = cfg.threshold(trains.size());
    for (std::size_t k = 0; k < num_windows; ++k) {
        const double a = horizon*static_cast<double>(k)/static_cast<double>(num_windows);
        const double b = horizon*static_cast<double>(k + 1)/static_cast<double>(num_windows);
        g.windows.push_back(make_window(a, b, edge_probabilities(trains, cfg, a, b), theta));
    }
    return g;
}

// Per-node spike train: union of the node's block of neurons, with spikes closer
// than `merge_window` to the previously kept one collapsed into it.
inline std::vector<SpikeTrain> node_trains(std::span<const SpikeTrain> neuron_spikes, std::size_t num_nodes,
                                           std::size_t neurons_per_node, double merge_window = 0.02) {
    if (neuron_spikes.size() < num_nodes*neurons_per_node) throw shape_error("too few neuron trains for blocks");
    std::vector<SpikeTrain> out(num_nodes);
    for (std::size_t u = 0; u < num_nodes; ++u) {
        auto& ts = out[u].times;
        out[u].neuron = u;
        for (std::size_t r = 0; r < neurons_per_node; ++r) {
            const auto& s = neuron_spikes[u*neurons_per_node + r].times;
            ts.insert(ts.end(), s.begin(), s.end());
        }
        std::sort(ts.begin(), ts.end());
        std::size_t kept = 0;
        for (std::size_t k = 0; k < ts.size(); ++k) {
            if (kept > 0 && ts[k] - ts[kept - 1] < merge_window) continue;
            ts[kept++] = ts[k];
        }
        ts.resize(kept);
    }
    return out;
}

// Monte-Carlo mean over the window of the product of the two kernel-smoothed
// counting processes (causal exponential kernel).
inline double dependency_strength(const EventSequence& events, double kernel_tau, std::size_t i, std::size_t j,
                                  double t0, double t1, std::size_t num_samples, std::uint64_t seed) {
    if (!(kernel_tau > 0)) throw domain_error("kernel_tau must be positive");
    if (i >= events.num_types() || j >= events.num_types()) throw domain_error("event type out of range");
    std::vector<double> ti, tj;
    for (const auto& e: events.events()) {
        if (e.type == i) ti.push_back(e.t);
        if (e.type == j) tj.push_back(e.t);
    }
    if (ti.empty() || tj.empty()) return 0.0;
    auto smoothed = [&](const std::vector<double>& ts, double t) {
        double s = 0;
        auto end = std::lower_bound(ts.begin(), ts.end(), t);
        for (auto it = end; it != ts.begin();) {
            --it;
            const double x = (t - *it)/kernel_tau;
            if (x > 30) break;
            s += std::exp(-x);
        }
        return s;
    };
    auto rng = make_rng(seed, streams::monte_carlo);
    double acc = 0;
    for (std::size_t k = 0; k < num_samples; ++k) {
        const double t = uniform(rng, t0, t1);
        acc += smoothed(ti, t)*smoothed(tj, t);
    }
    return num_samples? acc/static_cast<double>(num_samples): 0.0;
}

// ---------------------------------------------------------------------------
// Membrane-basis group-lasso estimator

// Eigenvector centrality of a non-negative symmetric matrix by power iteration on
// (A + I), which shares eigenvectors with A but is not fooled by bipartite graphs.
// Returns a unit-norm, non-negative vector; an all-zero matrix gives uniform scores.
inline Eigen::VectorXd eigenvector_centrality(const Eigen::MatrixXd& a, std::size_t max_iter = 100, double tol = 1e-10) {
    const auto n = a.rows();
    Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0/std::sqrt(static_cast<double>(n)));
    if (n == 0 || a.cwiseAbs().maxCoeff() == 0) return x;
    for (std::size_t it = 0; it < max_iter; ++it) {
        Eigen::VectorXd y = a*x + x;
        y /= y.norm();
        const double r = (y - x).norm();
        x = y;
        if (r < tol) break;
    }
    return x;
}

// |w_ij| + |w_ji| as a dense symmetric matrix.
inline Eigen::MatrixXd weight_magnitudes(const SynapseMatrix& w) {
    const auto n = static_cast<Eigen::Index>(w.num_neurons());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (const auto& s: w.synapses()) {
        a(s.pre, s.post) += std::abs(s.w);
        a(s.post, s.pre) += std::abs(s.w);
    }
    return a;
}

struct MembraneBasis {
    std::vector<std::size_t> basis_neurons;
    Eigen::VectorXd centrality; // per neuron
    std::vector<double> times;
    std::vector<std::vector<double>> traces; // per basis neuron, on `times`
};

// Top-M central neurons; ties go to the lower index.
inline std::vector<std::size_t> top_central(const Eigen::VectorXd& c, std::size_t m) {
    if (m > static_cast<std::size_t>(c.size())) throw domain_error("basis size exceeds network size");
    std::vector<std::size_t> idx(static_cast<std::size_t>(c.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return c(a) > c(b) + 1e-12; });
    idx.resize(m);
    return idx;
}

inline MembraneBasis select_basis(const MembraneTraces& traces, const SynapseMatrix& weights, std::size_t m) {
    MembraneBasis b;
    b.centrality = eigenvector_centrality(weight_magnitudes(weights));
    b.basis_neurons = top_central(b.centrality, m);
    b.times = traces.times;
    for (auto neuron: b.basis_neurons) {
        auto it = std::find(traces.neurons.begin(), traces.neurons.end(), neuron);
        if (it == traces.neurons.end()) throw shape_error("trace for basis neuron " + std::to_string(neuron) + " not recorded");
        b.traces.push_back(traces.values[static_cast<std::size_t>(it - traces.neurons.begin())]);
    }
    return b;
}

// Trapezoidal inner product of `signal` with each basis trace over samples [first, last].
inline Eigen::VectorXd project(std::span<const double> signal, const MembraneBasis& basis,
                               std::size_t first = 0, std::size_t last = std::size_t(-1)) {
    const auto& t = basis.times;
    if (signal.size() != t.size()) throw shape_error("signal and basis grids differ");
    last = std::min(last, t.size() - 1);
    Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.traces.size()));
    for (std::size_t m = 0; m < basis.traces.size(); ++m) {
        const auto& v = basis.traces[m];
        if (v.size() != t.size()) throw shape_error("basis trace length differs from grid");
        double s = 0;
        for (std::size_t k = first; k < last; ++k) {
            s += 0.5*(t[k + 1] - t[k])*(signal[k]*v[k] + signal[k + 1]*v[k + 1]);
        }
        a(static_cast<Eigen::Index>(m)) = s;
    }
    return a;
}

struct AdmmConfig {
    double rho = 1.0;
    double tol = 1e-6;
    std::size_t max_iter = 1000;
};

struct GroupLassoFit {
    std::vector<Eigen::MatrixXd> blocks; // B_k, response_dim x predictor_dim
    std::vector<double> block_norms;
    std::vector<std::size_t> support;    // predictor indices with norm > eps
    double lambda = 0;
    double eps = 0;
    std::size_t iterations = 0;
    bool converged = false;
};

// min (1/2n) sum_i ||y_i - sum_k B_k x_ki||^2 + lambda sum_k ||B_k||_F by ADMM.
// y: n x d response rows; xs[k]: n x d predictor rows. eps < 0 selects 1e-3 * max block norm.
inline GroupLassoFit group_lasso(const Eigen::MatrixXd& y, const std::vector<Eigen::MatrixXd>& xs,
                                 double lambda, double eps = -1, const AdmmConfig& admm = {}) {
    if (!(lambda >= 0)) throw domain_error("lambda must be non-negative");
    const auto n = y.rows();
    const auto p = static_cast<Eigen::Index>(xs.size());
    if (p == 0) throw shape_error("group lasso needs at least one predictor");
    const auto d = xs.front().cols();
    for (const auto& x: xs) if (x.rows() != n || x.cols() != d) throw shape_error("predictor blocks differ in shape");
    // Stack predictors so Y ~ X * S, with rows k*d..(k+1)*d of S holding B_k^T.
    Eigen::MatrixXd x(n, p*d);
    for (Eigen::Index k = 0; k < p; ++k) x.middleCols(k*d, d) = xs[static_cast<std::size_t>(k)];
    const double inv_n = 1.0/static_cast<double>(n);
    const double rho = admm.rho;
    Eigen::MatrixXd gram = x.transpose()*x*inv_n;
    gram.diagonal().array() += rho;
    const Eigen::LLT<Eigen::MatrixXd> chol(gram);
    const Eigen::MatrixXd xty = x.transpose()*y*inv_n;

    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p*d, y.cols()), z = s, u = s;
    GroupLassoFit fit;
    fit.lambda = lambda;
    for (std::size_t it = 1; it <= admm.max_iter; ++it) {
        s = chol.solve(xty + rho*(z - u));
        const Eigen::MatrixXd z_old = z;
        const Eigen::MatrixXd v = s + u;
        for (Eigen::Index k = 0; k < p; ++k) {
            const auto blk = v.middleRows(k*d, d);
            const double norm = blk.norm();
            const double shrink = norm > 0? std::max(0.0, 1.0 - lambda/(rho*norm)): 0.0;
            z.middleRows(k*d, d) = shrink*blk;
        }
        u += s - z;
        fit.iterations = it;
        const double primal = (s - z).norm();
        const double dual = rho*(z - z_old).norm();
        if (primal < admm.tol && dual < admm.tol) {
            fit.converged = true;
            break;
        }
    }
    double max_norm = 0;
    for (Eigen::Index k = 0; k < p; ++k) {
        fit.blocks.push_back(z.middleRows(k*d, d).transpose());
        fit.block_norms.push_back(fit.blocks.back().norm());
        max_norm = std::max(max_norm, fit.block_norms.back());
    }
    fit.eps = eps >= 0? eps: 1e-3*max_norm;
    for (std::size_t k = 0; k < fit.block_norms.size(); ++k) {
        if (fit.block_norms[k] > fit.eps) fit.support.push_back(k);
    }
    return fit;
}

// Smallest lambda that zeroes every block: max_k ||X_k^T Y||_F / n.
inline double lambda_max(const Eigen::MatrixXd& y, const std::vector<Eigen::MatrixXd>& xs) {
    double m = 0;
    for (const auto& x: xs) m = std::max(m, (x.transpose()*y).norm()/static_cast<double>(y.rows()));
    return m;
}

// Ten log-spaced values from lambda_max down to 1e-3 * lambda_max.
inline std::vector<double> lambda_grid(double lmax, std::size_t points = 10) {
    std::vector<double> g;
    for (std::size_t k = 0; k < points; ++k) {
        g.push_back(lmax*std::pow(1e-3, static_cast<double>(k)/static_cast<double>(points - 1)));
    }
    return g;
}

// Chooses lambda on the grid by prediction error on the trailing fifth of the
// rows (largest lambda within one standard error of the minimum), then refits
// on all rows.
inline GroupLassoFit group_lasso_select(const Eigen::MatrixXd& y, const std::vector<Eigen::MatrixXd>& xs,
                                        const AdmmConfig& admm = {}) {
    const auto n = y.rows();
    const auto n_fit = std::max<Eigen::Index>(1, n - n/5);
    const auto n_val = n - n_fit;
    const auto grid = lambda_grid(lambda_max(y, xs));
    if (n_val == 0) return group_lasso(y, xs, grid[grid.size()/2], -1, admm);
    std::vector<Eigen::MatrixXd> x_fit, x_val;
    for (const auto& x: xs) {
        x_fit.push_back(x.topRows(n_fit));
        x_val.push_back(x.bottomRows(n_val));
    }
    const Eigen::MatrixXd y_fit = y.topRows(n_fit), y_val = y.bottomRows(n_val);
    std::vector<double> err(grid.size()), se(grid.size());
    std::size_t best = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const auto fit = group_lasso(y_fit, x_fit, grid[g], -1, admm);
        Eigen::MatrixXd pred = Eigen::MatrixXd::Zero(n_val, y.cols());
        for (std::size_t k = 0; k < xs.size(); ++k) pred += x_val[k]*fit.blocks[k].transpose();
        const Eigen::VectorXd rows = (y_val - pred).rowwise().squaredNorm();
        err[g] = rows.mean();
        const double var = n_val > 1? (rows.array() - err[g]).square().sum()/static_cast<double>(n_val - 1): 0.0;
        se[g] = std::sqrt(var/static_cast<double>(n_val));
        if (err[g] < err[best]) best = g;
    }
    // The grid descends, so the first admissible point is the sparsest.
    std::size_t pick = best;
    for (std::size_t g = 0; g < best; ++g) {
        if (err[g] <= err[best] + se[best]) {
            pick = g;
            break;
        }
    }
    return group_lasso(y, xs, grid[pick], -1, admm);
}

enum class combine_rule { and_rule, or_rule };

// neighbourhoods[j] lists the estimated neighbours of node j.
inline Adjacency combine_neighborhoods(const std::vector<std::vector<std::size_t>>& neighbourhoods, combine_rule rule) {
    const std::size_t n = neighbourhoods.size();
    Adjacency in(n);
    for (std::size_t j = 0; j < n; ++j) {
        for (auto l: neighbourhoods[j]) {
            if (l >= n) throw domain_error("neighbour index out of range");
            if (l != j) in.set(j, l, true);
        }
    }
    Adjacency out(n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t l = 0; l < n; ++l) {
            const bool e = rule == combine_rule::and_rule? in(j, l) && in(l, j): in(j, l) || in(l, j);
            out.set(j, l, e);
        }
    }
    return out;
}

struct LassoGraphConfig {
    std::size_t basis_size = 4;
    double sample_length = 0.5; // seconds of signal per regression row
    double signal_tau = 0.15;   // exponential smoothing of node event trains
    combine_rule rule = combine_rule::or_rule;
    AdmmConfig admm;
};

// Node signals are event trains smoothed by a causal exponential, sampled on the basis grid.
inline std::vector<std::vector<double>> smoothed_signals(std::span<const SpikeTrain> trains,
                                                         std::span<const double> grid, double tau) {
    std::vector<std::vector<double>> out(trains.size(), std::vector<double>(grid.size(), 0.0));
    for (std::size_t u = 0; u < trains.size(); ++u) {
        const auto& ts = trains[u].times;
        std::size_t k = 0;
        double level = 0, at = 0;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const double t = grid[g];
            while (k < ts.size() && ts[k] <= t) {
                level = level*std::exp(-(ts[k] - at)/tau) + 1.0;
                at = ts[k++];
            }
            out[u][g] = level*std::exp(-(t - at)/tau);
        }
    }
    return out;
}

// Neighbourhood selection per window: regress each node's projection scores on
// every other node's, then combine the per-node supports.
inline DynamicGraph estimate_lasso_graph(std::span<const SpikeTrain> trains, const MembraneBasis& basis,
                                         const LassoGraphConfig& cfg, double horizon, std::size_t num_windows) {
    const std::size_t n = trains.size();
    const auto signals = smoothed_signals(trains, basis.times, cfg.signal_tau);
    const auto& grid = basis.times;
    if (grid.size() < 2) throw shape_error("basis grid too short");
    const double step = grid[1] - grid[0];
    const auto per_row = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.sample_length/step)));
    const auto d = static_cast<Eigen::Index>(basis.traces.size());

    DynamicGraph g;
    g.num_nodes = n;
    for (std::size_t w = 0; w < num_windows; ++w) {
        const double a = horizon*static_cast<double>(w)/static_cast<double>(num_windows);
        const double b = horizon*static_cast<double>(w + 1)/static_cast<double>(num_windows);
        const auto g0 = static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), a) - grid.begin());
        const auto g1 = static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), b) - grid.begin());
        const std::size_t rows = g1 > g0? (g1 - g0)/per_row: 0;
        std::vector<Eigen::MatrixXd> scores(n, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), d));
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t first = g0 + r*per_row;
            const std::size_t last = std::min(first + per_row, grid.size() - 1);
            for (std::size_t u = 0; u < n; ++u) {
                scores[u].row(static_cast<Eigen::Index>(r)) = project(signals[u], basis, first, last).transpose();
            }
        }
        std::vector<std::vector<std::size_t>> hoods(n);
        if (rows >= 2 && n >= 2) {
            for (std::size_t j = 0; j < n; ++j) {
                std::vector<Eigen::MatrixXd> xs;
                std::vector<std::size_t> ids;
                for (std::size_t k = 0; k < n; ++k) {
                    if (k == j) continue;
                    xs.push_back(scores[k]);
                    ids.push_back(k);
                }
                const auto fit = group_lasso_select(scores[j], xs, cfg.admm);
                for (auto k: fit.support) hoods[j].push_back(ids[k]);
            }
        }
        GraphWindow win;
        win.start = a;
        win.end = b;
        win.theta = 0.5;
        win.adjacency = combine_neighborhoods(hoods, cfg.rule);
        win.prob = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) if (win.adjacency(i, j)) win.prob(i, j) = 1.0;
        }
        g.windows.push_back(std::move(win));
    }
    return g;
}

// ---------------------------------------------------------------------------
// Evaluation

struct SsiReport {
    double ssi = 0;
    double mu_a = 0, mu_b = 0;
    double var_a = 0, var_b = 0, cov = 0;
    double c1 = 0, c2 = 0;
};

inline constexpr double ssi_k1 = 0.01;
inline constexpr double ssi_k2 = 0.03;

// Structural similarity over all |V|^2 entries, unbiased (|V|^2 - 1) moments, L = 1.
inline SsiReport ssi(const Adjacency& a, const Adjacency& b) {
    if (a.size() != b.size()) throw shape_error("SSI needs equally sized adjacency matrices");
    const std::size_t n = a.size();
    const double cells = static_cast<double>(n*n);
    if (cells < 2) throw shape_error("SSI needs at least two matrix entries");
    SsiReport r;
    r.c1 = (ssi_k1*1.0)*(ssi_k1*1.0);
    r.c2 = (ssi_k2*1.0)*(ssi_k2*1.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            r.mu_a += a(i, j);
            r.mu_b += b(i, j);
        }
    }
    r.mu_a /= cells;
    r.mu_b /= cells;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double da = a(i, j) - r.mu_a;
            const double db = b(i, j) - r.mu_b;
            r.var_a += da*da;
            r.var_b += db*db;
            r.cov += da*db;
        }
    }
    r.var_a /= cells - 1;
    r.var_b /= cells - 1;
    r.cov /= cells - 1;
    r.ssi = ((2*r.mu_a*r.mu_b + r.c1)*(2*r.cov + r.c2))
          / ((r.mu_a*r.mu_a + r.mu_b*r.mu_b + r.c1)*(r.var_a + r.var_b + r.c2));
    return r;
}

// Mean SSI over truth epochs, each compared with the estimated window covering its midpoint.
inline double dynamic_ssi(const GraphTimeline& truth, const DynamicGraph& est) {
    if (truth.num_nodes != est.num_nodes) throw shape_error("graphs cover different node sets");
    double sum = 0;
    for (std::size_t k = 0; k < truth.snapshots.size(); ++k) {
        const double mid = 0.5*(truth.snapshots[k].start + truth.epoch_end(k));
        sum += ssi(truth.adjacency(k), est.at(mid).adjacency).ssi;
    }
    return sum/static_cast<double>(truth.snapshots.size());
}

enum class ablation_mode { full, spatial_only, random };

inline std::string to_string(ablation_mode m) {
    switch (m) {
    case ablation_mode::full: return "full";
    case ablation_mode::spatial_only: return "spatial_only";
    case ablation_mode::random: return "random";
    }
    return "?";
}

inline ablation_mode parse_ablation_mode(const std::string& s) {
    if (s == "full") return ablation_mode::full;
    if (s == "spatial_only") return ablation_mode::spatial_only;
    if (s == "random") return ablation_mode::random;
    throw validation_error("unknown ablation mode '" + s + "'");
}

// Erdos-Renyi replacement of each window at the given edge density, uniform weights.
inline DynamicGraph random_graph_like(const DynamicGraph& like, double density, std::uint64_t seed) {
    if (!(density >= 0 && density <= 1)) throw domain_error("density must lie in [0, 1]");
    auto rng = make_rng(seed, streams::ablation);
    std::bernoulli_distribution coin(density);
    DynamicGraph g;
    g.num_nodes = like.num_nodes;
    const auto n = like.num_nodes;
    for (const auto& src: like.windows) {
        Adjacency a(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (coin(rng)) {
                    a.set(i, j, true);
                    a.set(j, i, true);
                }
            }
        }
        GraphWindow w{src.start, src.end, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)), 0.5, a};
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) if (a(i, j)) w.prob(i, j) = 1.0;
        }
        g.windows.push_back(std::move(w));
    }
    return g;
}

// Off-diagonal to diagonal mass of the Gram matrix of Gaussian-smoothed trains.
// <g*s_a, g*s_b> = sum over spike pairs of exp(-d^2 / 4w^2) / (2 w sqrt(pi)).
inline double gram_diagnostic(std::span<const SpikeTrain> trains, double width) {
    if (!(width > 0)) throw domain_error("smoothing width must be positive");
    const std::size_t n = trains.size();
    const double norm = 1.0/(2*width*std::sqrt(std::numbers::pi));
    const double cutoff = 12*width;
    auto inner = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0;
        std::size_t lo = 0;
        for (double ta: a) {
            while (lo < b.size() && b[lo] < ta - cutoff) ++lo;
            for (std::size_t k = lo; k < b.size() && b[k] <= ta + cutoff; ++k) {
                const double dd = ta - b[k];
                s += std::exp(-dd*dd/(4*width*width));
            }
        }
        return s*norm;
    };
    double diag = 0, off = 0;
    for (std::size_t i = 0; i < n; ++i) {
        diag += inner(trains[i].times, trains[i].times);
        for (std::size_t j = i + 1; j < n; ++j) off += 2*std::abs(inner(trains[i].times, trains[j].times));
    }
    return diag > 0? off/diag: 0.0;
}

// ---------------------------------------------------------------------------
// Serialisation

inline GraphTimeline to_timeline(const DynamicGraph& g, double duration) {
    GraphTimeline tl;
    tl.num_nodes = g.num_nodes;
    tl.duration = duration;
    for (const auto& w: g.windows) tl.snapshots.push_back({w.start, w.adjacency.undirected_edges()});
    return tl;
}

inline json graph_to_json(const DynamicGraph& g) {
    json windows = json::array();
    for (const auto& w: g.windows) {
        json prob = json::array();
        for (Eigen::Index i = 0; i < w.prob.rows(); ++i) {
            json row = json::array();
            for (Eigen::Index j = 0; j < w.prob.cols(); ++j) row.push_back(w.prob(i, j));
            prob.push_back(row);
        }
        json edges = json::array();
        for (auto [i, j]: w.adjacency.undirected_edges()) edges.push_back({i, j});
        windows.push_back(json{{"start", w.start}, {"end", w.end}, {"theta", w.theta}, {"prob", prob}, {"edges", edges}});
    }
    return json{{"num_nodes", g.num_nodes}, {"windows", windows}};
}

inline DynamicGraph graph_from_json(const json& j) {
    DynamicGraph g;
    g.num_nodes = j.at("num_nodes").get<std::size_t>();
    const auto n = static_cast<Eigen::Index>(g.num_nodes);
    for (const auto& w: j.at("windows")) {
        GraphWindow win;
        win.start = w.at("start").get<double>();
        win.end = w.at("end").get<double>();
        win.theta = w.at("theta").get<double>();
        win.prob = Eigen::MatrixXd::Zero(n, n);
        const auto& prob = w.at("prob");
        if (static_cast<Eigen::Index>(prob.size()) != n) throw shape_error("probability matrix has wrong size");
        for (Eigen::Index r = 0; r < n; ++r) {
            for (Eigen::Index c = 0; c < n; ++c) win.prob(r, c) = prob.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
        }
        std::vector<edge> edges;
        for (const auto& e: w.at("edges")) edges.emplace_back(e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>());
        win.adjacency = Adjacency::from_edges(g.num_nodes, edges);
        g.windows.push_back(std::move(win));
    }
    return g;
}

} // namespace sdgn
