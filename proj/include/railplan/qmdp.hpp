#pragma once

#include <stdexcept>
#include <vector>

#include "railplan/inference.hpp"
#include "railplan/mdp.hpp"
#include "railplan/simulator.hpp"

// Partial observability layer: Bayes belief updates under the autoregressive
// truncated-t observation model, the Q_MDP policy, its ensemble-robust
// variant, and the finite-horizon value bound at the initial belief.

namespace railplan {

using Belief = std::vector<double>;

namespace detail {

// Prediction followed by the emission reweighting, computed with a max-shift
// in log space. When every state's likelihood is impossible the prediction
// alone is kept, and the caller is told so.
struct BeliefUpdateResult {
    Belief belief;
    bool floored = false;
    double log_marginal = 0.0;
};

inline BeliefUpdateResult belief_update_impl(const Belief& b, int a, double z_prev, double z,
                                             const ModelSample& sample) {
    const int S = sample.transitions.n_states;
    Belief pred(static_cast<std::size_t>(S), 0.0);
    for (int s2 = 0; s2 < S; ++s2) {
        double acc = 0.0;
        for (int s = 0; s < S; ++s) acc += sample.transitions.at(a, s, s2) * b[s];
        pred[s2] = acc;
    }
    std::vector<double> ll(static_cast<std::size_t>(S));
    double lmax = -kInf;
    for (int s2 = 0; s2 < S; ++s2) {
        ll[s2] = emission_loglik(z, z_prev, s2, a, sample.obs);
        lmax = std::max(lmax, ll[s2]);
    }
    BeliefUpdateResult out;
    out.belief.assign(static_cast<std::size_t>(S), 0.0);
    if (lmax == -kInf) {
        // observation impossible under every state of this model: keep the
        // prediction, flag the step
        out.belief = std::move(pred);
        out.floored = true;
        out.log_marginal = -kInf;
        return out;
    }
    double norm = 0.0;
    for (int s2 = 0; s2 < S; ++s2) {
        out.belief[s2] = pred[s2] * std::exp(ll[s2] - lmax);
        norm += out.belief[s2];
    }
    if (!(norm > 0.0)) {
        out.belief = std::move(pred);
        out.floored = true;
        out.log_marginal = -kInf;
        return out;
    }
    for (double& v : out.belief) v /= norm;
    out.log_marginal = std::log(norm) + lmax;
    return out;
}

inline BeliefUpdateResult initial_belief_impl(double z0, const ModelSample& sample) {
    const int S = sample.transitions.n_states;
    std::vector<double> ll(static_cast<std::size_t>(S));
    double lmax = -kInf;
    for (int s = 0; s < S; ++s) {
        ll[s] = emission_loglik(z0, std::nullopt, s, std::nullopt, sample.obs);
        lmax = std::max(lmax, ll[s]);
    }
    BeliefUpdateResult out;
    if (lmax == -kInf) {
        out.belief = sample.transitions.initial;
        out.floored = true;
        out.log_marginal = -kInf;
        return out;
    }
    out.belief.assign(static_cast<std::size_t>(S), 0.0);
    double norm = 0.0;
    for (int s = 0; s < S; ++s) {
        out.belief[s] = sample.transitions.initial[s] * std::exp(ll[s] - lmax);
        norm += out.belief[s];
    }
    if (!(norm > 0.0)) {
        out.belief = sample.transitions.initial;
        out.floored = true;
        out.log_marginal = -kInf;
        return out;
    }
    for (double& v : out.belief) v /= norm;
    out.log_marginal = std::log(norm) + lmax;
    return out;
}

} // namespace detail

// Bayes update of the belief after taking action a and observing z (with the
// previous level z_prev). Throws when the observation is impossible under
// every state.
inline Belief belief_update(const Belief& b, int a, double z_prev, double z,
                            const ModelSample& sample) {
    if (static_cast<int>(b.size()) != sample.transitions.n_states)
        throw std::invalid_argument("belief_update: belief dimension mismatch");
    auto res = detail::belief_update_impl(b, a, z_prev, z, sample);
    if (res.floored) throw std::runtime_error("belief_update: impossible observation");
    return std::move(res.belief);
}

inline int qmdp_action(const Belief& b, const QTable& q) {
    if (static_cast<int>(b.size()) != q.n_states)
        throw std::invalid_argument("qmdp_action: dimension mismatch");
    int best = 0;
    double best_val = -kInf;
    for (int a = 0; a < q.n_actions; ++a) {
        double v = 0.0;
        for (int s = 0; s < q.n_states; ++s) v += b[s] * q.at(s, a);
        if (v > best_val) {
            best_val = v;
            best = a;
        }
    }
    return best;
}

inline int qmdp_action(const Belief& b, const QSchedule& q, int t) {
    int best = 0;
    double best_val = -kInf;
    for (int a = 0; a < q.n_actions; ++a) {
        double v = 0.0;
        for (int s = 0; s < q.n_states; ++s) v += b[s] * q.at(t, s, a);
        if (v > best_val) {
            best_val = v;
            best = a;
        }
    }
    return best;
}

// ensemble variant: expectation of the belief-weighted Q over samples
inline int robust_qmdp_action(const std::vector<Belief>& beliefs,
                              const std::vector<QTable>& qtables) {
    if (beliefs.size() != qtables.size())
        throw std::invalid_argument("robust_qmdp_action: mismatched ensemble sizes");
    if (beliefs.empty()) throw std::invalid_argument("robust_qmdp_action: empty ensemble");
    const int S = qtables.front().n_states;
    const int A = qtables.front().n_actions;
    int best = 0;
    double best_val = -kInf;
    for (int a = 0; a < A; ++a) {
        double mean = 0.0;
        for (std::size_t i = 0; i < beliefs.size(); ++i) {
            double v = 0.0;
            for (int s = 0; s < S; ++s) v += beliefs[i][s] * qtables[i].at(s, a);
            mean += v;
        }
        mean /= static_cast<double>(beliefs.size());
        if (mean > best_val) {
            best_val = mean;
            best = a;
        }
    }
    return best;
}

inline int robust_qmdp_action(const std::vector<Belief>& beliefs,
                              const std::vector<QSchedule>& schedules, int t) {
    if (beliefs.size() != schedules.size())
        throw std::invalid_argument("robust_qmdp_action: mismatched ensemble sizes");
    if (beliefs.empty()) throw std::invalid_argument("robust_qmdp_action: empty ensemble");
    const int S = schedules.front().n_states;
    const int A = schedules.front().n_actions;
    int best = 0;
    double best_val = -kInf;
    for (int a = 0; a < A; ++a) {
        double mean = 0.0;
        for (std::size_t i = 0; i < beliefs.size(); ++i) {
            double v = 0.0;
            for (int s = 0; s < S; ++s) v += beliefs[i][s] * schedules[i].at(t, s, a);
            mean += v;
        }
        mean /= static_cast<double>(beliefs.size());
        if (mean > best_val) {
            best_val = mean;
            best = a;
        }
    }
    return best;
}

// optimistic value of the initial belief under the finite-horizon Q
inline double v_qmdp_bound(const Belief& b0, const QSchedule& schedule) {
    double best = -kInf;
    for (int a = 0; a < schedule.n_actions; ++a) {
        double v = 0.0;
        for (int s = 0; s < schedule.n_states; ++s) v += b0[s] * schedule.at(0, s, a);
        best = std::max(best, v);
    }
    return best;
}

// ---------------------------------------------------------------------------
// planner

// Q_MDP agent over a planning ensemble: one belief per planning sample, each
// updated with that sample's own parameters, actions from the ensemble
// average of belief-weighted Q-values.
class QmdpPlanner {
  public:
    QmdpPlanner(std::vector<const ModelSample*> samples, std::vector<QTable> qtables)
        : samples_(std::move(samples)), qtables_(std::move(qtables)) {
        if (samples_.empty() || samples_.size() != qtables_.size())
            throw std::invalid_argument("QmdpPlanner: mismatched planning ensemble");
    }
    QmdpPlanner(std::vector<const ModelSample*> samples, std::vector<QSchedule> schedules)
        : samples_(std::move(samples)), schedules_(std::move(schedules)) {
        if (samples_.empty() || samples_.size() != schedules_.size())
            throw std::invalid_argument("QmdpPlanner: mismatched planning ensemble");
    }

    static QmdpPlanner stationary(const std::vector<const ModelSample*>& samples,
                                  const PomdpModel& model, double tol = 1e-6) {
        std::vector<QTable> qts(samples.size());
        parallel_for(samples.size(),
                     [&](std::size_t i) { qts[i] = q_value_iteration(*samples[i], model, tol); });
        return QmdpPlanner(samples, std::move(qts));
    }

    static QmdpPlanner finite(const std::vector<const ModelSample*>& samples,
                              const PomdpModel& model, int H) {
        std::vector<QSchedule> sch(samples.size());
        parallel_for(samples.size(),
                     [&](std::size_t i) { sch[i] = backward_induction(*samples[i], model, H); });
        return QmdpPlanner(samples, std::move(sch));
    }

    void begin_episode(double z0) {
        beliefs_.clear();
        floored_steps_ = 0;
        for (const ModelSample* s : samples_) {
            auto res = detail::initial_belief_impl(z0, *s);
            if (res.floored) flag_floor();
            beliefs_.push_back(std::move(res.belief));
        }
        step_had_floor_ = false;
    }

    int act(int t) const {
        if (!schedules_.empty()) return robust_qmdp_action(beliefs_, schedules_, t);
        return robust_qmdp_action(beliefs_, qtables_);
    }

    void observe(int action, double z_prev, double z) {
        step_had_floor_ = false;
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            auto res = detail::belief_update_impl(beliefs_[i], action, z_prev, z, *samples_[i]);
            if (res.floored) flag_floor();
            beliefs_[i] = std::move(res.belief);
        }
    }

    Belief mean_belief() const {
        const int S = samples_.front()->transitions.n_states;
        Belief out(static_cast<std::size_t>(S), 0.0);
        for (const auto& b : beliefs_)
            for (int s = 0; s < S; ++s) out[s] += b[s] / static_cast<double>(beliefs_.size());
        return out;
    }

    const std::vector<Belief>& beliefs() const { return beliefs_; }
    const std::vector<QTable>& qtables() const { return qtables_; }
    const std::vector<QSchedule>& schedules() const { return schedules_; }
    int floored_steps() const { return floored_steps_; }
    std::size_t size() const { return samples_.size(); }

  private:
    void flag_floor() {
        if (!step_had_floor_) {
            ++floored_steps_;
            step_had_floor_ = true;
        }
    }

    std::vector<const ModelSample*> samples_;
    std::vector<QTable> qtables_;
    std::vector<QSchedule> schedules_;
    std::vector<Belief> beliefs_;
    int floored_steps_ = 0;
    bool step_had_floor_ = false;
};

struct EpisodeResult {
    Trajectory trajectory;
    std::vector<Belief> mean_beliefs; // one per observation, H+1 of them
    int floored_steps = 0;
};

// Environment evolves under true_params; the planner sees only observations.
inline EpisodeResult run_qmdp_episode(const ModelSample& true_params, QmdpPlanner& planner,
                                      const PomdpModel& model, int H, Rng& rng) {
    if (H < 1) throw std::invalid_argument("run_qmdp_episode: horizon must be >= 1");
    EpisodeResult out;
    auto [s, z] = initial(true_params, rng);
    planner.begin_episode(z);
    out.trajectory.states.push_back(s);
    out.trajectory.observations.push_back(z);
    out.mean_beliefs.push_back(planner.mean_belief());
    for (int t = 0; t < H; ++t) {
        const int a = planner.act(t);
        out.trajectory.actions.push_back(a);
        out.trajectory.rewards.push_back(reward(model, s, a));
        const StepResult res = step(s, a, z, true_params, model, rng);
        planner.observe(a, z, res.observation);
        out.trajectory.states.push_back(res.next_state);
        out.trajectory.observations.push_back(res.observation);
        out.mean_beliefs.push_back(planner.mean_belief());
        s = res.next_state;
        z = res.observation;
    }
    out.floored_steps = planner.floored_steps();
    return out;
}

} // namespace railplan
