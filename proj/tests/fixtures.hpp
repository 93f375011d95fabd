#pragma once

// Shared synthetic fixtures: a tight "posterior-like" ensemble built by
// jittering the benchmark parameters, with log-posterior weights scored
// against a fixed held-out dataset.

#include "railplan/inference.hpp"
#include "railplan/mdp.hpp"
#include "railplan/simulator.hpp"

namespace fixtures {

inline railplan::PosteriorEnsemble jitter_ensemble(int n, double kappa, std::uint64_t seed,
                                                   bool score_log_post = true) {
    using namespace railplan;
    const ModelSample center = benchmark_sample();
    const PomdpModel model = PomdpModel::defaults();
    const int S = center.transitions.n_states;
    const int A = center.transitions.n_actions;

    Rng rng(seed);
    PosteriorEnsemble ens;
    ens.samples.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        ModelSample s = center;
        for (int a = 0; a < A; ++a)
            for (int st = 0; st < S; ++st) {
                DirichletParams row;
                row.alpha.resize(S);
                for (int s2 = 0; s2 < S; ++s2)
                    row.alpha[s2] = kappa * center.transitions.at(a, st, s2) + 0.05;
                const auto drawn = sample_dirichlet(row, rng);
                for (int s2 = 0; s2 < S; ++s2) s.transitions.at(a, st, s2) = drawn[s2];
            }
        for (int st = 0; st < S; ++st) {
            s.obs.mu_d[st] = center.obs.mu_d[st] * (1.0 + 0.1 * normal_sample(rng));
            s.obs.sigma_d[st] = center.obs.sigma_d[st] * std::exp(0.08 * normal_sample(rng));
            s.obs.mu_0[st] = center.obs.mu_0[st] * (1.0 + 0.05 * normal_sample(rng));
            s.obs.sigma_0[st] = center.obs.sigma_0[st] * std::exp(0.08 * normal_sample(rng));
            s.obs.mu_r[st] = center.obs.mu_r[st] * (1.0 + 0.1 * normal_sample(rng));
        }
        std::sort(s.obs.mu_0.begin(), s.obs.mu_0.end(), std::greater<double>());
        ens.samples.push_back(std::move(s));
    }

    if (score_log_post) {
        Rng data_rng(0xDA7Au);
        const Dataset held_out = generate_dataset(center, model, 8, 10, data_rng);
        for (auto& s : ens.samples) s.log_post = marginal_loglik(held_out, s);
    }
    return ens;
}

} // namespace fixtures
