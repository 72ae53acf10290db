#pragma once

// Homogeneous Poisson and exponential-kernel multivariate Hawkes baselines.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "errors.hpp"
#include "events_io.hpp"
#include "jsonl.hpp"
#include "tpp_model.hpp"

namespace sdgn {

struct PoissonModel {
    Eigen::VectorXd rate; // per type, events/s
};

inline PoissonModel fit_poisson(const EventSequence& train) {
    if (!(train.horizon() > 0)) throw domain_error("Poisson fit needs a positive horizon");
    PoissonModel m;
    m.rate = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(train.num_types()));
    for (const auto& e: train.events()) m.rate(e.type) += 1;
    m.rate /= train.horizon();
    return m;
}

// Exact log-likelihood over [t0, t1); events before t0 are ignored.
inline double poisson_log_likelihood(const PoissonModel& m, const EventSequence& seq, double t0, double t1) {
    double ll = -m.rate.sum()*(t1 - t0);
    for (const auto& e: seq.events()) {
        if (e.t < t0 || e.t >= t1) continue;
        const double r = m.rate(e.type);
        ll += r > 0? std::log(r): log_sentinel;
    }
    return ll;
}

// alpha(e, f): jump in type e's intensity per event of type f; shared decay beta.
struct HawkesModel {
    Eigen::VectorXd mu;
    Eigen::MatrixXd alpha;
    double beta = 1;
    double log_likelihood = 0;
    bool converged = false;
    bool stationary = false;
    std::size_t iterations = 0;

    std::size_t num_types() const { return static_cast<std::size_t>(mu.size()); }
};

inline double spectral_radius(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return 0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

namespace detail {

// Sufficient statistics of the exponential kernel for a fixed beta.
struct HawkesStats {
    std::vector<std::uint32_t> type;  // per event
    Eigen::MatrixXd excitation;       // events x types: sum_{t_k < t_i, type f} exp(-beta (t_i - t_k))
    Eigen::VectorXd compensator;      // per type f: sum_k (1 - exp(-beta (T - t_k))) / beta
    double horizon = 0;
};

inline HawkesStats hawkes_stats(const EventSequence& seq, double beta) {
    HawkesStats s;
    const auto types = static_cast<Eigen::Index>(seq.num_types());
    s.horizon = seq.horizon();
    s.excitation = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(seq.size()), types);
    s.compensator = Eigen::VectorXd::Zero(types);
    Eigen::VectorXd state = Eigen::VectorXd::Zero(types);
    double last = 0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const auto& e = seq[i];
        state *= std::exp(-beta*(e.t - last));
        last = e.t;
        s.excitation.row(static_cast<Eigen::Index>(i)) = state.transpose();
        state(e.type) += 1;
        s.type.push_back(e.type);
        s.compensator(e.type) += -std::expm1(-beta*(s.horizon - e.t))/beta;
    }
    return s;
}

inline double hawkes_ll(const HawkesStats& s, const Eigen::VectorXd& mu, const Eigen::MatrixXd& alpha) {
    double ll = -mu.sum()*s.horizon - (alpha*s.compensator).sum();
    for (std::size_t i = 0; i < s.type.size(); ++i) {
        const auto e = static_cast<Eigen::Index>(s.type[i]);
        const double lam = mu(e) + alpha.row(e).dot(s.excitation.row(static_cast<Eigen::Index>(i)));
        if (!(lam > 0)) return -std::numeric_limits<double>::infinity();
        ll += std::log(lam);
    }
    return ll;
}

inline void hawkes_grad(const HawkesStats& s, const Eigen::VectorXd& mu, const Eigen::MatrixXd& alpha,
                        Eigen::VectorXd& gmu, Eigen::MatrixXd& galpha) {
    gmu = Eigen::VectorXd::Constant(mu.size(), -s.horizon);
    galpha = -Eigen::VectorXd::Ones(mu.size())*s.compensator.transpose();
    for (std::size_t i = 0; i < s.type.size(); ++i) {
        const auto e = static_cast<Eigen::Index>(s.type[i]);
        const auto x = s.excitation.row(static_cast<Eigen::Index>(i));
        const double lam = mu(e) + alpha.row(e).dot(x);
        gmu(e) += 1.0/lam;
        galpha.row(e) += x/lam;
    }
}

} // namespace detail

// Exact log-likelihood via the recursive excitation state.
inline double hawkes_log_likelihood(const HawkesModel& m, const EventSequence& seq) {
    return detail::hawkes_ll(detail::hawkes_stats(seq, m.beta), m.mu, m.alpha);
}

struct HawkesFitConfig {
    std::vector<double> beta_grid{0.5, 1.0, 2.0, 5.0, 10.0};
    std::size_t max_iter = 500;
    double tol = 1e-9; // relative log-likelihood change
};

// Projected gradient ascent on (mu, alpha) with Barzilai-Borwein steps guarded by
// backtracking; the likelihood is concave for fixed beta.
inline HawkesModel fit_hawkes_beta(const EventSequence& train, double beta, const HawkesFitConfig& cfg) {
    if (train.empty()) throw validation_error("Hawkes fit needs at least one event");
    if (!(beta > 0)) throw domain_error("beta must be positive");
    const auto types = static_cast<Eigen::Index>(train.num_types());
    const auto stats = detail::hawkes_stats(train, beta);
    const double horizon = train.horizon();

    HawkesModel m;
    m.beta = beta;
    m.mu = Eigen::VectorXd::Zero(types);
    for (const auto& e: train.events()) m.mu(e.type) += 1;
    m.mu = (0.5*m.mu/horizon).cwiseMax(1e-6);
    m.alpha = Eigen::MatrixXd::Constant(types, types, 0.1*beta/static_cast<double>(types));
    double ll = detail::hawkes_ll(stats, m.mu, m.alpha);

    Eigen::VectorXd gmu, prev_gmu;
    Eigen::MatrixXd galpha, prev_galpha;
    detail::hawkes_grad(stats, m.mu, m.alpha, gmu, galpha);
    double step = 1e-3;
    for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
        m.iterations = it;
        Eigen::VectorXd mu_new;
        Eigen::MatrixXd alpha_new;
        double ll_new = -std::numeric_limits<double>::infinity();
        double t = step;
        for (int bt = 0; bt < 60; ++bt) {
            mu_new = (m.mu + t*gmu).cwiseMax(0.0);
            alpha_new = (m.alpha + t*galpha).cwiseMax(0.0);
            ll_new = detail::hawkes_ll(stats, mu_new, alpha_new);
            const double gain = gmu.dot(mu_new - m.mu) + (galpha.cwiseProduct(alpha_new - m.alpha)).sum();
            if (std::isfinite(ll_new) && ll_new >= ll + 1e-4*gain) break;
            t *= 0.5;
        }
        if (!(ll_new >= ll)) break;
        const Eigen::VectorXd dmu = mu_new - m.mu;
        const Eigen::MatrixXd dalpha = alpha_new - m.alpha;
        prev_gmu = gmu;
        prev_galpha = galpha;
        m.mu = mu_new;
        m.alpha = alpha_new;
        detail::hawkes_grad(stats, m.mu, m.alpha, gmu, galpha);
        const double change = ll_new - ll;
        ll = ll_new;
        if (change <= cfg.tol*std::max(1.0, std::abs(ll))) {
            m.converged = true;
            break;
        }
        // Barzilai-Borwein: s.s / s.y with y the gradient decrease.
        const double ss = dmu.squaredNorm() + dalpha.squaredNorm();
        const double sy = -(dmu.dot(gmu - prev_gmu) + (dalpha.cwiseProduct(galpha - prev_galpha)).sum());
        step = sy > 0? std::clamp(ss/sy, 1e-10, 1e6): std::min(2*t, 1e6);
    }
    m.log_likelihood = ll;
    m.stationary = spectral_radius(m.alpha/beta) < 1;
    return m;
}

inline HawkesModel fit_hawkes(const EventSequence& train, const HawkesFitConfig& cfg = {}) {
    if (cfg.beta_grid.empty()) throw validation_error("beta grid is empty");
    HawkesModel best;
    best.log_likelihood = -std::numeric_limits<double>::infinity();
    for (double beta: cfg.beta_grid) {
        auto m = fit_hawkes_beta(train, beta, cfg);
        if (m.log_likelihood > best.log_likelihood) best = std::move(m);
    }
    return best;
}

// Excitation state just after the last event at or before t.
inline Eigen::VectorXd hawkes_state(const HawkesModel& m, const EventSequence& seq, double t) {
    Eigen::VectorXd state = Eigen::VectorXd::Zero(m.mu.size());
    double last = 0;
    for (const auto& e: seq.events()) {
        if (e.t > t) break;
        state *= std::exp(-m.beta*(e.t - last));
        state(e.type) += 1;
        last = e.t;
    }
    return state*std::exp(-m.beta*(t - last));
}

// Next event after t_n, both models through the shared expected-wait integrator.
inline NextEventPrediction predict_next_poisson(const PoissonModel& m, double t_n) {
    const double total = m.rate.sum();
    if (!(total > 0)) throw domain_error("all Poisson rates are zero; next event undefined");
    NextEventPrediction out;
    const auto [mean, tail] = expected_wait([&](double) { return total; }, 50.0/total);
    out.expected_time = t_n + mean;
    out.tail_mass = tail;
    Eigen::Index best = 0;
    m.rate.maxCoeff(&best);
    out.type = static_cast<std::size_t>(best);
    return out;
}

// `state` is the excitation vector at t_n (see hawkes_state).
inline NextEventPrediction predict_next_hawkes(const HawkesModel& m, const Eigen::VectorXd& state, double t_n) {
    const Eigen::VectorXd jump = m.alpha*state;
    const double base = m.mu.sum();
    const double excite = jump.sum();
    if (!(base + excite > 0)) throw domain_error("all Hawkes rates are zero; next event undefined");
    auto total = [&](double u) { return base + excite*std::exp(-m.beta*u); };
    const double cap = base > 0? 50.0/base: 50.0/(base + excite);
    const auto [mean, tail] = expected_wait(total, cap);
    NextEventPrediction out;
    out.expected_time = t_n + mean;
    out.tail_mass = tail;
    out.truncated = tail > 0.01;
    const Eigen::VectorXd rates = m.mu + jump*std::exp(-m.beta*mean);
    Eigen::Index best = 0;
    rates.maxCoeff(&best);
    out.type = static_cast<std::size_t>(best);
    return out;
}

inline json hawkes_to_json(const HawkesModel& m) {
    json alpha = json::array();
    for (Eigen::Index r = 0; r < m.alpha.rows(); ++r) alpha.push_back(detail::to_json(m.alpha.row(r).transpose()));
    return json{{"mu", detail::to_json(m.mu)}, {"alpha", alpha}, {"beta", m.beta},
                {"log_likelihood", m.log_likelihood}, {"converged", m.converged}, {"stationary", m.stationary}};
}

inline json poisson_to_json(const PoissonModel& m) {
    return json{{"rate", detail::to_json(m.rate)}};
}

} // namespace sdgn
