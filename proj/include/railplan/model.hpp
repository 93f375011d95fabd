#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "railplan/prob.hpp"

// Decision problem and parameter containers: state/action spaces, the cost
// table, per-action transition matrices, observation-process parameters,
// priors, and the posterior ensemble produced by inference.

namespace railplan {

constexpr int kInfiniteHorizon = -1;

struct CostTable {
    std::vector<std::vector<double>> action_cost; // [action][state], <= 0
    std::vector<double> state_cost;               // [state], <= 0
};

struct PomdpModel {
    int n_states = 4;
    int n_actions = 3;
    CostTable costs;
    double gamma = 0.995;
    int horizon = kInfiniteHorizon;

    // four condition states, three maintenance actions, costs in general
    // cost units
    static PomdpModel defaults() {
        PomdpModel m;
        m.costs.action_cost = {
            {0, 0, 0, 0},
            {-50, -50, -50, -50},
            {-2050, -2710, -3370, -4050},
        };
        m.costs.state_cost = {-100, -200, -1000, -8000};
        return m;
    }
};

// Per-step reward: action cost plus the condition cost of the state occupied
// when the action is chosen.
inline double reward(const PomdpModel& model, int s, int a) {
    if (s < 0 || s >= model.n_states) throw std::out_of_range("reward: state index");
    if (a < 0 || a >= model.n_actions) throw std::out_of_range("reward: action index");
    return model.costs.action_cost[a][s] + model.costs.state_cost[s];
}

// Row-stochastic transition matrices per action plus the initial state
// distribution T0. Stored flat row-major: prob[a*S*S + s*S + s'].
struct TransitionSet {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> prob;
    std::vector<double> initial;

    TransitionSet() = default;
    TransitionSet(int S, int A)
        : n_states(S), n_actions(A), prob(static_cast<std::size_t>(A) * S * S, 0.0),
          initial(static_cast<std::size_t>(S), 0.0) {}

    double at(int a, int s, int s2) const {
        return prob[(static_cast<std::size_t>(a) * n_states + s) * n_states + s2];
    }
    double& at(int a, int s, int s2) {
        return prob[(static_cast<std::size_t>(a) * n_states + s) * n_states + s2];
    }
    std::span<const double> row(int a, int s) const {
        return {prob.data() + (static_cast<std::size_t>(a) * n_states + s) * n_states,
                static_cast<std::size_t>(n_states)};
    }
};

// State-conditioned deterioration / repair / initial observation parameters;
// k_r is the autoregressive coefficient per repair action (indices 1..A-1).
struct ObservationParams {
    std::vector<double> mu_d, sigma_d, nu_d; // deterioration step, per state
    std::vector<double> mu_r, sigma_r, nu_r; // repair, per state
    std::vector<double> mu_0, sigma_0, nu_0; // initial observation, per state
    std::vector<double> k_r;                 // per repair action (size A-1)

    static ObservationParams zeros(int S, int A) {
        ObservationParams p;
        p.mu_d.assign(S, 0.0);
        p.sigma_d.assign(S, 1.0);
        p.nu_d.assign(S, 10.0);
        p.mu_r.assign(S, 0.0);
        p.sigma_r.assign(S, 1.0);
        p.nu_r.assign(S, 10.0);
        p.mu_0.assign(S, 0.0);
        p.sigma_0.assign(S, 1.0);
        p.nu_0.assign(S, 10.0);
        p.k_r.assign(A > 1 ? A - 1 : 0, 0.5);
        return p;
    }
};

struct ModelSample {
    TransitionSet transitions;
    ObservationParams obs;
    double log_post = kNaN; // unnormalized
};

struct ChainMeta {
    std::vector<std::uint64_t> seeds;
    std::vector<std::uint32_t> lengths; // kept draws per chain
};

struct PosteriorEnsemble {
    std::vector<ModelSample> samples;
    ChainMeta chain_meta;
};

// ---------------------------------------------------------------------------
// priors

struct GaussPrior {
    double mean, sd;
};
struct TruncGaussPrior {
    double mean, sd; // truncation side is fixed by the parameter's support
};
struct GammaPrior {
    double shape, rate;
};
struct BetaPrior {
    double a, b;
};

// Hyper-priors of the generative model. The transition priors regularize
// deterioration (diagonal-dominant under do-nothing) and repair (mass on the
// improving triangle); the observation hyper-priors are broad defaults.
struct PriorConfig {
    std::vector<double> alpha0;                 // T0 concentrations, size S
    std::vector<std::vector<double>> alphaT;    // [action][S*S] row concentrations
    GaussPrior mu_d{-0.02, 0.05};
    TruncGaussPrior sigma_d{0.05, 0.05};        // lb = 0
    GammaPrior nu_d{2.0, 0.1};
    TruncGaussPrior mu_r{-0.2, 0.2};            // ub = 0
    TruncGaussPrior sigma_r{0.05, 0.05};        // lb = 0
    GammaPrior nu_r{2.0, 0.1};
    TruncGaussPrior mu_0{-0.5, 0.5};            // ub = 0
    TruncGaussPrior sigma_0{0.05, 0.05};        // lb = 0
    GammaPrior nu_0{2.0, 0.1};
    BetaPrior k_r{2.0, 2.0};

    static PriorConfig defaults(int S, int A) {
        PriorConfig cfg;
        cfg.alpha0.assign(S, 1.0);
        cfg.alphaT.assign(A, std::vector<double>(static_cast<std::size_t>(S) * S, 0.0));
        for (int s = 0; s < S; ++s) {
            for (int s2 = 0; s2 < S; ++s2) {
                // action 0: deterioration structure
                double a0;
                if (s2 == s)
                    a0 = 6.0;
                else if (s2 == s + 1)
                    a0 = 2.0;
                else if (s2 > s)
                    a0 = 0.5;
                else
                    a0 = 0.05;
                cfg.alphaT[0][static_cast<std::size_t>(s) * S + s2] = a0;
                // repair actions: improving triangle, near-zero deterioration
                const double ar = s2 <= s ? 2.0 : 0.05;
                for (int a = 1; a < A; ++a)
                    cfg.alphaT[a][static_cast<std::size_t>(s) * S + s2] = ar;
            }
        }
        return cfg;
    }

    int n_states() const { return static_cast<int>(alpha0.size()); }
    int n_actions() const { return static_cast<int>(alphaT.size()); }
};

inline TransitionSet prior_transitions(const PriorConfig& priors, Rng& rng) {
    const int S = priors.n_states();
    const int A = priors.n_actions();
    TransitionSet t(S, A);
    t.initial = sample_dirichlet({priors.alpha0}, rng);
    for (int a = 0; a < A; ++a) {
        for (int s = 0; s < S; ++s) {
            DirichletParams row;
            row.alpha.assign(priors.alphaT[a].begin() + static_cast<std::ptrdiff_t>(s) * S,
                             priors.alphaT[a].begin() + static_cast<std::ptrdiff_t>(s + 1) * S);
            const auto drawn = sample_dirichlet(row, rng);
            for (int s2 = 0; s2 < S; ++s2) t.at(a, s, s2) = drawn[s2];
        }
    }
    return t;
}

// Draw observation parameters from the hyper-priors. The initial-observation
// locations are sorted so better states sit nearer zero, the ordering that
// keeps state labels identified during inference.
inline ObservationParams prior_sample(const PriorConfig& priors, Rng& rng) {
    const int S = priors.n_states();
    const int A = priors.n_actions();
    ObservationParams p = ObservationParams::zeros(S, A);
    for (int s = 0; s < S; ++s) {
        p.mu_d[s] = normal_sample(priors.mu_d.mean, priors.mu_d.sd, rng);
        p.sigma_d[s] = trunc_normal_sample(priors.sigma_d.mean, priors.sigma_d.sd, 0.0, kInf, rng);
        p.nu_d[s] = gamma_sample(priors.nu_d.shape, priors.nu_d.rate, rng);
        p.mu_r[s] = trunc_normal_sample(priors.mu_r.mean, priors.mu_r.sd, -kInf, 0.0, rng);
        p.sigma_r[s] = trunc_normal_sample(priors.sigma_r.mean, priors.sigma_r.sd, 0.0, kInf, rng);
        p.nu_r[s] = gamma_sample(priors.nu_r.shape, priors.nu_r.rate, rng);
        p.mu_0[s] = trunc_normal_sample(priors.mu_0.mean, priors.mu_0.sd, -kInf, 0.0, rng);
        p.sigma_0[s] = trunc_normal_sample(priors.sigma_0.mean, priors.sigma_0.sd, 0.0, kInf, rng);
        p.nu_0[s] = gamma_sample(priors.nu_0.shape, priors.nu_0.rate, rng);
    }
    for (int a = 0; a + 1 < A; ++a) p.k_r[a] = beta_sample(priors.k_r.a, priors.k_r.b, rng);
    std::sort(p.mu_0.begin(), p.mu_0.end(), std::greater<double>());
    return p;
}

inline ModelSample prior_model_sample(const PriorConfig& priors, Rng& rng) {
    ModelSample s;
    s.transitions = prior_transitions(priors, rng);
    s.obs = prior_sample(priors, rng);
    return s;
}

// ---------------------------------------------------------------------------
// validation

inline std::vector<std::string> validate(const ModelSample& sample, const PomdpModel& model) {
    std::vector<std::string> out;
    const int S = model.n_states;
    const int A = model.n_actions;
    auto fail = [&out](const std::string& path, const std::string& what) {
        out.push_back(path + ": " + what);
    };

    const TransitionSet& t = sample.transitions;
    if (t.n_states != S || t.n_actions != A) {
        fail("transitions", "dimension mismatch with model");
        return out;
    }
    if (static_cast<int>(t.initial.size()) != S)
        fail("transitions.initial", "wrong length");
    double t0sum = 0.0;
    for (int s = 0; s < S && s < static_cast<int>(t.initial.size()); ++s) {
        if (t.initial[s] < 0.0 || t.initial[s] > 1.0)
            fail("transitions.initial[" + std::to_string(s) + "]", "outside [0,1]");
        t0sum += t.initial[s];
    }
    if (std::fabs(t0sum - 1.0) > 1e-9) fail("transitions.initial", "does not sum to 1");
    for (int a = 0; a < A; ++a) {
        for (int s = 0; s < S; ++s) {
            double rowsum = 0.0;
            for (int s2 = 0; s2 < S; ++s2) {
                const double v = t.at(a, s, s2);
                if (v < 0.0 || v > 1.0)
                    fail("transitions[" + std::to_string(a) + "][" + std::to_string(s) + "][" +
                             std::to_string(s2) + "]",
                         "outside [0,1]");
                rowsum += v;
            }
            if (std::fabs(rowsum - 1.0) > 1e-9)
                fail("transitions[" + std::to_string(a) + "][" + std::to_string(s) + "]",
                     "row not stochastic");
        }
    }

    const ObservationParams& o = sample.obs;
    auto check_vec = [&](const std::vector<double>& v, const std::string& name, bool positive,
                         bool nonpositive) {
        if (static_cast<int>(v.size()) != S) {
            fail("obs." + name, "wrong length");
            return;
        }
        for (int s = 0; s < S; ++s) {
            if (!std::isfinite(v[s])) fail("obs." + name + "[" + std::to_string(s) + "]", "not finite");
            if (positive && !(v[s] > 0.0))
                fail("obs." + name + "[" + std::to_string(s) + "]", "scale nonpositive");
            if (nonpositive && v[s] > 0.0)
                fail("obs." + name + "[" + std::to_string(s) + "]", "must be <= 0");
        }
    };
    check_vec(o.mu_d, "mu_d", false, false);
    check_vec(o.sigma_d, "sigma_d", true, false);
    check_vec(o.nu_d, "nu_d", true, false);
    check_vec(o.mu_r, "mu_r", false, true);
    check_vec(o.sigma_r, "sigma_r", true, false);
    check_vec(o.nu_r, "nu_r", true, false);
    check_vec(o.mu_0, "mu_0", false, true);
    check_vec(o.sigma_0, "sigma_0", true, false);
    check_vec(o.nu_0, "nu_0", true, false);
    if (static_cast<int>(o.k_r.size()) != A - 1)
        fail("obs.k_r", "wrong length");
    for (std::size_t i = 0; i < o.k_r.size(); ++i)
        if (!(o.k_r[i] > 0.0 && o.k_r[i] < 1.0))
            fail("obs.k_r[" + std::to_string(i) + "]", "outside (0,1)");
    return out;
}

} // namespace railplan
