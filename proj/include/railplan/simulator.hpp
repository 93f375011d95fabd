#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "railplan/model.hpp"

// Generative environment: hidden-state trajectories with autoregressive
// truncated-t observations. One time step corresponds to 6 months.

namespace railplan {

// states/observations hold T+1 entries, actions/rewards hold T; actions[t]
// is the action taken between t and t+1
struct Trajectory {
    std::vector<int> states;
    std::vector<int> actions;
    std::vector<double> observations;
    std::vector<double> rewards;
};

struct Dataset {
    struct Series {
        std::string id;
        std::vector<double> z;  // T+1 observations
        std::vector<int> a;     // T actions; a[t-1] taken between t-1 and t
    };
    std::vector<Series> series;
};

inline int sample_categorical(std::span<const double> probs, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u <= acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

inline std::pair<int, double> initial(const ModelSample& p, Rng& rng) {
    const int s0 = sample_categorical(p.transitions.initial, rng);
    TruncStudentT d{p.obs.mu_0[s0], p.obs.sigma_0[s0], p.obs.nu_0[s0], -kInf, 0.0};
    return {s0, trunc_t_sample(d, rng)};
}

struct StepResult {
    int next_state;
    double observation;
    double reward;
};

// One environment step: state transition under the chosen action, then the
// new observation conditioned on the successor state (the state at the time
// the measurement is taken). Do-nothing evolves the level by a truncated-t
// increment bounded so the value stays nonpositive; repairs draw around
// k_r * z_prev + mu_r.
inline StepResult step(int s, int a, double z_prev, const ModelSample& p, const PomdpModel& model,
                       Rng& rng) {
    if (s < 0 || s >= p.transitions.n_states) throw std::out_of_range("step: state index");
    if (a < 0 || a >= p.transitions.n_actions) throw std::out_of_range("step: action index");
    if (z_prev > 0.0) throw std::invalid_argument("step: z_prev must be <= 0");
    const int s2 = sample_categorical(p.transitions.row(a, s), rng);
    double z;
    if (a == 0) {
        TruncStudentT d{p.obs.mu_d[s2], p.obs.sigma_d[s2], p.obs.nu_d[s2], -kInf, -z_prev};
        z = z_prev + trunc_t_sample(d, rng);
    } else {
        TruncStudentT d{p.obs.k_r[a - 1] * z_prev + p.obs.mu_r[s2], p.obs.sigma_r[s2],
                        p.obs.nu_r[s2], -kInf, 0.0};
        z = trunc_t_sample(d, rng);
    }
    if (z > 0.0) z = 0.0;
    return {s2, z, reward(model, s, a)};
}

// maps (t, current state, current observation) to an action
using StatePolicyFn = std::function<int(int t, int s, double z)>;

inline Trajectory rollout(const StatePolicyFn& policy, const ModelSample& p,
                          const PomdpModel& model, int horizon, Rng& rng) {
    if (horizon < 1) throw std::invalid_argument("rollout: horizon must be >= 1");
    Trajectory traj;
    auto [s, z] = initial(p, rng);
    traj.states.push_back(s);
    traj.observations.push_back(z);
    for (int t = 0; t < horizon; ++t) {
        const int a = policy(t, s, z);
        if (a < 0 || a >= model.n_actions)
            throw std::runtime_error("rollout: policy returned invalid action " + std::to_string(a));
        const StepResult res = step(s, a, z, p, model, rng);
        traj.actions.push_back(a);
        traj.rewards.push_back(res.reward);
        traj.states.push_back(res.next_state);
        traj.observations.push_back(res.observation);
        s = res.next_state;
        z = res.observation;
    }
    return traj;
}

inline double discounted_return(const Trajectory& traj, double gamma) {
    double total = 0.0;
    double g = 1.0;
    for (double r : traj.rewards) {
        total += g * r;
        g *= gamma;
    }
    return total;
}

inline double total_return(const Trajectory& traj) {
    double total = 0.0;
    for (double r : traj.rewards) total += r;
    return total;
}

// Synthetic-data behavior rule: repair with a probability that grows with the
// hidden state, choosing renewal more often in worse condition. Real action
// logs are not available, so inference test data needs both repair kinds.
struct BehaviorPolicy {
    std::vector<double> repair_prob = {0.03, 0.12, 0.35, 0.65};
    std::vector<double> renewal_share = {0.10, 0.20, 0.50, 0.80};

    int operator()(int s, Rng& rng) const {
        const double pr = repair_prob[static_cast<std::size_t>(s) < repair_prob.size() ? s
                                                                                       : repair_prob.size() - 1];
        if (rng.uniform() >= pr) return 0;
        const double sh = renewal_share[static_cast<std::size_t>(s) < renewal_share.size()
                                            ? s
                                            : renewal_share.size() - 1];
        return rng.uniform() < sh ? 2 : 1;
    }
};

inline Dataset generate_dataset(const ModelSample& p, const PomdpModel& model, int n_series,
                                int length, Rng& rng,
                                const std::function<int(int s, Rng&)>& behavior = BehaviorPolicy{}) {
    if (n_series < 1) throw std::invalid_argument("generate_dataset: n_series must be >= 1");
    if (length < 2) throw std::invalid_argument("generate_dataset: length must be >= 2");
    Dataset out;
    out.series.resize(static_cast<std::size_t>(n_series));
    for (int i = 0; i < n_series; ++i) {
        auto& ser = out.series[static_cast<std::size_t>(i)];
        ser.id = std::to_string(i);
        auto [s, z] = initial(p, rng);
        ser.z.push_back(z);
        for (int t = 1; t < length; ++t) {
            const int a = behavior(s, rng);
            const StepResult res = step(s, a, z, p, model, rng);
            ser.a.push_back(a);
            ser.z.push_back(res.observation);
            s = res.next_state;
            z = res.observation;
        }
    }
    return out;
}

// Four-state benchmark parameter set shaped like the inferred railway model:
// diagonal-dominant deterioration, tamping that improves by about one state,
// renewal that mostly restores the best state, and well-separated
// initial-observation locations.
inline ModelSample benchmark_sample() {
    const int S = 4, A = 3;
    ModelSample m;
    m.transitions = TransitionSet(S, A);
    const double a0[4][4] = {
        {0.940, 0.050, 0.008, 0.002},
        {0.000, 0.880, 0.100, 0.020},
        {0.000, 0.000, 0.850, 0.150},
        {0.000, 0.000, 0.000, 1.000},
    };
    const double a1[4][4] = {
        {0.990, 0.008, 0.0015, 0.0005},
        {0.550, 0.420, 0.028, 0.002},
        {0.030, 0.470, 0.470, 0.030},
        {0.005, 0.045, 0.350, 0.600},
    };
    const double a2[4][4] = {
        {0.95, 0.030, 0.015, 0.005},
        {0.85, 0.120, 0.025, 0.005},
        {0.80, 0.130, 0.060, 0.010},
        {0.75, 0.150, 0.070, 0.030},
    };
    for (int s = 0; s < S; ++s)
        for (int s2 = 0; s2 < S; ++s2) {
            m.transitions.at(0, s, s2) = a0[s][s2];
            m.transitions.at(1, s, s2) = a1[s][s2];
            m.transitions.at(2, s, s2) = a2[s][s2];
        }
    m.transitions.initial = {0.45, 0.30, 0.15, 0.10};
    m.obs = ObservationParams::zeros(S, A);
    m.obs.mu_d = {-0.010, -0.030, -0.055, -0.085};
    m.obs.sigma_d = {0.008, 0.011, 0.015, 0.022};
    m.obs.nu_d = {6.0, 6.0, 5.0, 4.0};
    m.obs.mu_r = {-0.05, -0.10, -0.18, -0.30};
    m.obs.sigma_r = {0.04, 0.05, 0.07, 0.10};
    m.obs.nu_r = {15.0, 12.0, 10.0, 8.0};
    m.obs.mu_0 = {-0.10, -0.45, -0.95, -1.60};
    m.obs.sigma_0 = {0.05, 0.08, 0.10, 0.15};
    m.obs.nu_0 = {20.0, 15.0, 12.0, 10.0};
    m.obs.k_r = {0.55, 0.10};
    return m;
}

} // namespace railplan
