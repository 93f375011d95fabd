#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "railplan/model.hpp"
#include "railplan/parallel.hpp"

// Exact dynamic programming under full observability: infinite-horizon
// Q-value iteration, finite-horizon backward induction, and Bayesian action
// selection over a posterior ensemble of transition models.

namespace railplan {

struct QTable {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> values; // [s*A + a]
    int iterations = 0;
    double residual = 0.0;

    double at(int s, int a) const { return values[static_cast<std::size_t>(s) * n_actions + a]; }
    double& at(int s, int a) { return values[static_cast<std::size_t>(s) * n_actions + a]; }

    int greedy(int s) const {
        int best = 0;
        for (int a = 1; a < n_actions; ++a)
            if (at(s, a) > at(s, best)) best = a;
        return best;
    }
    double state_value(int s) const { return at(s, greedy(s)); }
};

struct QSchedule {
    int n_states = 0;
    int n_actions = 0;
    int horizon = 0;
    std::vector<double> values; // [t*S*A + s*A + a], terminal value zero

    double at(int t, int s, int a) const {
        return values[(static_cast<std::size_t>(t) * n_states + s) * n_actions + a];
    }
    double& at(int t, int s, int a) {
        return values[(static_cast<std::size_t>(t) * n_states + s) * n_actions + a];
    }
    int greedy(int t, int s) const {
        int best = 0;
        for (int a = 1; a < n_actions; ++a)
            if (at(t, s, a) > at(t, s, best)) best = a;
        return best;
    }
};

namespace detail {

inline void check_stochastic(const TransitionSet& t) {
    for (int a = 0; a < t.n_actions; ++a)
        for (int s = 0; s < t.n_states; ++s) {
            double sum = 0.0;
            for (int s2 = 0; s2 < t.n_states; ++s2) sum += t.at(a, s, s2);
            if (std::fabs(sum - 1.0) > 1e-9)
                throw std::invalid_argument("transition row (" + std::to_string(a) + "," +
                                            std::to_string(s) + ") is not stochastic");
        }
}

} // namespace detail

// Value iteration on the Q-table until the sup-norm change falls below tol.
// The returned table's Bellman residual is then at most gamma*tol.
inline QTable q_value_iteration(const ModelSample& sample, const PomdpModel& model, double tol = 1e-6,
                                std::vector<double>* residual_trace = nullptr) {
    if (!(model.gamma < 1.0)) throw std::invalid_argument("q_value_iteration: gamma must be < 1");
    if (!(tol > 0.0)) throw std::invalid_argument("q_value_iteration: tol must be > 0");
    detail::check_stochastic(sample.transitions);
    const int S = model.n_states;
    const int A = model.n_actions;
    QTable q;
    q.n_states = S;
    q.n_actions = A;
    q.values.assign(static_cast<std::size_t>(S) * A, 0.0);

    std::vector<double> r(static_cast<std::size_t>(S) * A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) r[static_cast<std::size_t>(s) * A + a] = reward(model, s, a);

    std::vector<double> v(static_cast<std::size_t>(S), 0.0);
    std::vector<double> next(static_cast<std::size_t>(S) * A, 0.0);
    const double* P = sample.transitions.prob.data();
    constexpr int max_iter = 10000000;
    for (int iter = 1; iter <= max_iter; ++iter) {
        for (int s = 0; s < S; ++s) {
            double best = q.values[static_cast<std::size_t>(s) * A];
            for (int a = 1; a < A; ++a) best = std::max(best, q.values[static_cast<std::size_t>(s) * A + a]);
            v[s] = best;
        }
        double delta = 0.0;
        for (int a = 0; a < A; ++a) {
            const double* Pa = P + static_cast<std::size_t>(a) * S * S;
            for (int s = 0; s < S; ++s) {
                double acc = 0.0;
                const double* row = Pa + static_cast<std::size_t>(s) * S;
                for (int s2 = 0; s2 < S; ++s2) acc += row[s2] * v[s2];
                const std::size_t idx = static_cast<std::size_t>(s) * A + a;
                const double nv = r[idx] + model.gamma * acc;
                delta = std::max(delta, std::fabs(nv - q.values[idx]));
                next[idx] = nv;
            }
        }
        q.values.swap(next);
        q.iterations = iter;
        q.residual = delta;
        if (residual_trace) residual_trace->push_back(delta);
        if (delta <= tol) return q;
    }
    throw std::runtime_error("q_value_iteration: no convergence within iteration budget");
}

// Finite-horizon backward induction with terminal continuation value zero.
inline QSchedule backward_induction(const ModelSample& sample, const PomdpModel& model, int H) {
    if (H < 1) throw std::invalid_argument("backward_induction: horizon must be >= 1");
    detail::check_stochastic(sample.transitions);
    const int S = model.n_states;
    const int A = model.n_actions;
    QSchedule sched;
    sched.n_states = S;
    sched.n_actions = A;
    sched.horizon = H;
    sched.values.assign(static_cast<std::size_t>(H) * S * A, 0.0);

    std::vector<double> vnext(static_cast<std::size_t>(S), 0.0);
    for (int t = H - 1; t >= 0; --t) {
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                double acc = 0.0;
                for (int s2 = 0; s2 < S; ++s2) acc += sample.transitions.at(a, s, s2) * vnext[s2];
                sched.at(t, s, a) = reward(model, s, a) + model.gamma * acc;
            }
        for (int s = 0; s < S; ++s) {
            double best = sched.at(t, s, 0);
            for (int a = 1; a < A; ++a) best = std::max(best, sched.at(t, s, a));
            vnext[s] = best;
        }
    }
    return sched;
}

inline std::vector<QTable> solve_ensemble(const PosteriorEnsemble& ensemble,
                                          const PomdpModel& model, double tol = 1e-6,
                                          unsigned n_threads = 0) {
    std::vector<QTable> out(ensemble.samples.size());
    parallel_for(
        ensemble.samples.size(),
        [&](std::size_t i) { out[i] = q_value_iteration(ensemble.samples[i], model, tol); },
        n_threads);
    return out;
}

inline std::vector<QSchedule> solve_ensemble_schedules(const PosteriorEnsemble& ensemble,
                                                       const PomdpModel& model, int H,
                                                       unsigned n_threads = 0) {
    std::vector<QSchedule> out(ensemble.samples.size());
    parallel_for(
        ensemble.samples.size(),
        [&](std::size_t i) { out[i] = backward_induction(ensemble.samples[i], model, H); },
        n_threads);
    return out;
}

// Action maximizing the ensemble-average Q-value at state s (ties go to the
// lowest action index).
inline int robust_action(const std::vector<QTable>& qtables, int s) {
    if (qtables.empty()) throw std::invalid_argument("robust_action: empty ensemble");
    const int A = qtables.front().n_actions;
    int best = 0;
    double best_val = -kInf;
    for (int a = 0; a < A; ++a) {
        double mean = 0.0;
        for (const auto& q : qtables) mean += q.at(s, a);
        mean /= static_cast<double>(qtables.size());
        if (mean > best_val) {
            best_val = mean;
            best = a;
        }
    }
    return best;
}

inline std::vector<int> robust_policy(const std::vector<QTable>& qtables) {
    if (qtables.empty()) throw std::invalid_argument("robust_policy: empty ensemble");
    std::vector<int> out(static_cast<std::size_t>(qtables.front().n_states));
    for (int s = 0; s < qtables.front().n_states; ++s) out[s] = robust_action(qtables, s);
    return out;
}

inline int robust_action(const std::vector<QSchedule>& schedules, int s, int t) {
    if (schedules.empty()) throw std::invalid_argument("robust_action: empty ensemble");
    const int A = schedules.front().n_actions;
    int best = 0;
    double best_val = -kInf;
    for (int a = 0; a < A; ++a) {
        double mean = 0.0;
        for (const auto& q : schedules) mean += q.at(t, s, a);
        mean /= static_cast<double>(schedules.size());
        if (mean > best_val) {
            best_val = mean;
            best = a;
        }
    }
    return best;
}

// per-state tally of the samples for which each action is optimal
inline std::vector<std::vector<int>> optimality_counts(const std::vector<QTable>& qtables) {
    if (qtables.empty()) throw std::invalid_argument("optimality_counts: empty ensemble");
    const int S = qtables.front().n_states;
    const int A = qtables.front().n_actions;
    std::vector<std::vector<int>> counts(static_cast<std::size_t>(S),
                                         std::vector<int>(static_cast<std::size_t>(A), 0));
    for (const auto& q : qtables)
        for (int s = 0; s < S; ++s) ++counts[s][q.greedy(s)];
    return counts;
}

// Element-wise ensemble mean: transition rows renormalized, observation
// parameters averaged, suitable for the posterior-mean benchmark policies.
inline ModelSample mean_sample(const PosteriorEnsemble& ensemble) {
    if (ensemble.samples.empty()) throw std::invalid_argument("mean_sample: empty ensemble");
    const auto& first = ensemble.samples.front();
    const int S = first.transitions.n_states;
    const int A = first.transitions.n_actions;
    ModelSample mean;
    mean.transitions = TransitionSet(S, A);
    mean.obs = ObservationParams::zeros(S, A);
    for (auto* v : {&mean.obs.mu_d, &mean.obs.sigma_d, &mean.obs.nu_d, &mean.obs.mu_r,
                    &mean.obs.sigma_r, &mean.obs.nu_r, &mean.obs.mu_0, &mean.obs.sigma_0,
                    &mean.obs.nu_0})
        std::fill(v->begin(), v->end(), 0.0);
    std::fill(mean.obs.k_r.begin(), mean.obs.k_r.end(), 0.0);

    const double n = static_cast<double>(ensemble.samples.size());
    for (const auto& s : ensemble.samples) {
        for (std::size_t i = 0; i < mean.transitions.prob.size(); ++i)
            mean.transitions.prob[i] += s.transitions.prob[i] / n;
        for (int i = 0; i < S; ++i) {
            mean.transitions.initial[i] += s.transitions.initial[i] / n;
            mean.obs.mu_d[i] += s.obs.mu_d[i] / n;
            mean.obs.sigma_d[i] += s.obs.sigma_d[i] / n;
            mean.obs.nu_d[i] += s.obs.nu_d[i] / n;
            mean.obs.mu_r[i] += s.obs.mu_r[i] / n;
            mean.obs.sigma_r[i] += s.obs.sigma_r[i] / n;
            mean.obs.nu_r[i] += s.obs.nu_r[i] / n;
            mean.obs.mu_0[i] += s.obs.mu_0[i] / n;
            mean.obs.sigma_0[i] += s.obs.sigma_0[i] / n;
            mean.obs.nu_0[i] += s.obs.nu_0[i] / n;
        }
        for (std::size_t i = 0; i < mean.obs.k_r.size(); ++i) mean.obs.k_r[i] += s.obs.k_r[i] / n;
    }
    // renormalize against accumulated rounding
    for (int a = 0; a < A; ++a)
        for (int s = 0; s < S; ++s) {
            double sum = 0.0;
            for (int s2 = 0; s2 < S; ++s2) sum += mean.transitions.at(a, s, s2);
            for (int s2 = 0; s2 < S; ++s2) mean.transitions.at(a, s, s2) /= sum;
        }
    double isum = 0.0;
    for (double v : mean.transitions.initial) isum += v;
    for (double& v : mean.transitions.initial) v /= isum;
    return mean;
}

// policy from Q-value iteration on the element-wise mean transition matrices
inline std::vector<int> mean_parameter_policy(const PosteriorEnsemble& ensemble,
                                              const PomdpModel& model, double tol = 1e-6) {
    const ModelSample mean = mean_sample(ensemble);
    const QTable q = q_value_iteration(mean, model, tol);
    std::vector<int> out(static_cast<std::size_t>(model.n_states));
    for (int s = 0; s < model.n_states; ++s) out[s] = q.greedy(s);
    return out;
}

} // namespace railplan
