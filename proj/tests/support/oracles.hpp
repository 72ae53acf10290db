#pragma once

// Independent reference implementations used as test oracles. None of these
// share code paths with the library routine they check.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "sdgn/events_io.hpp"
#include "sdgn/snn.hpp"
#include "sdgn/synthgen.hpp"

namespace oracle {

// Asymptotic p-value of the two-sample Kolmogorov-Smirnov statistic.
inline double ks_two_sample_p(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(double(i)/double(a.size()) - double(j)/double(b.size())));
    }
    const double ne = double(a.size())*double(b.size())/double(a.size() + b.size());
    const double lambda = (std::sqrt(ne) + 0.12 + 0.11/std::sqrt(ne))*d;
    if (lambda < 1e-3) return 1.0;
    double q = 0;
    for (int k = 1; k <= 100; ++k) {
        const double term = 2*((k % 2)? 1.0: -1.0)*std::exp(-2.0*k*k*lambda*lambda);
        q += term;
        if (std::abs(term) < 1e-12) break;
    }
    return std::clamp(q, 0.0, 1.0);
}

// Spearman correlation by counting ranks directly (average ranks on ties).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto rank = [](const std::vector<double>& v) {
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            double less = 0, equal = 0;
            for (double w: v) {
                less += w < v[i];
                equal += w == v[i];
            }
            r[i] = less + 0.5*(equal + 1);
        }
        return r;
    };
    const auto rx = rank(x), ry = rank(y);
    const double n = double(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0)/n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0)/n;
    double c = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        c += (rx[i] - mx)*(ry[i] - my);
        vx += (rx[i] - mx)*(rx[i] - mx);
        vy += (ry[i] - my)*(ry[i] - my);
    }
    return c/std::sqrt(vx*vy);
}

// Bernoulli-per-bin approximation of the synthetic Hawkes process. Intensities are
// re-evaluated from scratch at each bin start over the whole history.
inline sdgn::EventSequence grid_simulate(const sdgn::SynthConfig& cfg, double grid_dt, std::uint64_t seed) {
    const auto tl = sdgn::sample_graph_timeline(cfg);
    const auto p = sdgn::draw_hawkes_params(cfg);
    const std::size_t n = cfg.num_nodes;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::vector<double>> hist(n);
    std::vector<sdgn::Event> events;
    const auto bins = static_cast<std::size_t>(std::llround(cfg.duration/grid_dt));
    for (std::size_t b = 0; b < bins; ++b) {
        const double t = double(b)*grid_dt;
        const auto& snap = tl.snapshots[std::min<std::size_t>(tl.snapshots.size() - 1,
            static_cast<std::size_t>(t/(cfg.duration/double(tl.snapshots.size()))))];
        std::vector<sdgn::Event> fresh;
        for (std::size_t i = 0; i < n; ++i) {
            double lam = p.mu[i];
            for (auto [u, v]: snap.edges) {
                std::size_t j;
                if (u == i) j = v;
                else if (v == i) j = u;
                else continue;
                const auto& h = hist[j];
                if (cfg.kernel == sdgn::kernel_mode::last_spike) {
                    if (!h.empty()) lam += p.alpha[i*n + j]*std::exp(-p.beta[i*n + j]*(t - h.back()));
                }
                else {
                    for (auto it = h.rbegin(); it != h.rend(); ++it) {
                        const double x = p.beta[i*n + j]*(t - *it);
                        if (x > 40) break;
                        lam += p.alpha[i*n + j]*std::exp(-x);
                    }
                }
            }
            if (lam*grid_dt > 0.1) throw std::runtime_error("grid too coarse for the intensity");
            if (unit(rng) < lam*grid_dt) {
                const double at = t + unit(rng)*grid_dt;
                fresh.push_back({at, static_cast<sdgn::event_type>(i)});
            }
        }
        for (const auto& e: fresh) {
            hist[e.type].push_back(e.t);
            events.push_back(e);
        }
    }
    std::sort(events.begin(), events.end(), [](auto& a, auto& b) { return a.t < b.t; });
    return sdgn::EventSequence(std::move(events), n, cfg.duration);
}

// Dense fixed-step LIF reference: RK4 on (v, I) with threshold checks at every
// step and the same fixed delivery delay. No plasticity.
inline std::vector<std::vector<double>> fixed_step_lif(const sdgn::Network& net, const std::vector<sdgn::SpikeTrain>& inputs,
                                                       double horizon, double dt, double delay) {
    const auto& p = net.lif;
    const std::size_t n = net.num_neurons();
    std::vector<double> v(n, p.v_rest), cur(n, 0.0);
    std::vector<std::vector<double>> spikes(n);
    // (time, target, amount) deliveries.
    std::vector<std::array<double, 3>> due;
    for (std::size_t c = 0; c < inputs.size(); ++c) {
        for (double t: inputs[c].times) {
            for (const auto& s: net.inputs[c]) due.push_back({t + delay, double(s.target), s.w*p.syn_epsilon});
        }
    }
    auto later = [](const auto& a, const auto& b) { return a[0] > b[0]; };
    std::make_heap(due.begin(), due.end(), later);
    auto f = [&](double vv, double ii) { return (-p.leak_alpha*(vv - p.v_rest) + ii)/p.tau_m; };
    const auto steps = static_cast<std::size_t>(std::ceil(horizon/dt));
    for (std::size_t k = 0; k < steps; ++k) {
        const double t1 = double(k + 1)*dt;
        for (std::size_t i = 0; i < n; ++i) {
            const double i0 = cur[i];
            auto current = [&](double s) { return i0*std::exp(-p.syn_beta*s); };
            const double k1 = f(v[i], current(0));
            const double k2 = f(v[i] + 0.5*dt*k1, current(0.5*dt));
            const double k3 = f(v[i] + 0.5*dt*k2, current(0.5*dt));
            const double k4 = f(v[i] + dt*k3, current(dt));
            v[i] += dt*(k1 + 2*k2 + 2*k3 + k4)/6;
            cur[i] = current(dt);
        }
        while (!due.empty() && due.front()[0] <= t1 + 1e-12) {
            std::pop_heap(due.begin(), due.end(), later);
            const auto d = due.back();
            due.pop_back();
            cur[static_cast<std::size_t>(d[1])] += d[2];
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (v[i] < p.v_th) continue;
            v[i] = p.v_reset;
            spikes[i].push_back(t1);
            for (auto s: net.recurrent.outgoing(i)) {
                due.push_back({t1 + delay, double(net.recurrent[s].post), net.recurrent[s].w*p.syn_epsilon});
                std::push_heap(due.begin(), due.end(), later);
            }
        }
    }
    return spikes;
}

// Exponential-Hawkes log-likelihood by the O(n^2) double sum.
inline double hawkes_ll_naive(const Eigen::VectorXd& mu, const Eigen::MatrixXd& alpha, double beta,
                              const sdgn::EventSequence& seq) {
    double ll = -mu.sum()*seq.horizon();
    const auto& ev = seq.events();
    for (std::size_t i = 0; i < ev.size(); ++i) {
        double lam = mu(ev[i].type);
        for (std::size_t k = 0; k < i; ++k) {
            if (ev[k].t < ev[i].t) lam += alpha(ev[i].type, ev[k].type)*std::exp(-beta*(ev[i].t - ev[k].t));
        }
        ll += std::log(lam);
    }
    for (const auto& e: ev) {
        for (Eigen::Index target = 0; target < mu.size(); ++target) {
            ll -= alpha(target, e.type)*(1 - std::exp(-beta*(seq.horizon() - e.t)))/beta;
        }
    }
    return ll;
}

// SSI re-derived from the definition with explicit loops over all |V|^2 entries.
inline double ssi(const std::vector<std::vector<int>>& a, const std::vector<std::vector<int>>& b) {
    const double k1 = 0.01, k2 = 0.03, l = 1.0;
    const double c1 = (k1*l)*(k1*l), c2 = (k2*l)*(k2*l);
    double n = 0, sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a.size(); ++j) {
            sa += a[i][j];
            sb += b[i][j];
            n += 1;
        }
    }
    const double ma = sa/n, mb = sb/n;
    double va = 0, vb = 0, cov = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a.size(); ++j) {
            va += (a[i][j] - ma)*(a[i][j] - ma);
            vb += (b[i][j] - mb)*(b[i][j] - mb);
            cov += (a[i][j] - ma)*(b[i][j] - mb);
        }
    }
    va /= n - 1;
    vb /= n - 1;
    cov /= n - 1;
    return ((2*ma*mb + c1)*(2*cov + c2))/((ma*ma + mb*mb + c1)*(va + vb + c2));
}

} // namespace oracle
