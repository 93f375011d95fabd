#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "railplan/model.hpp"
#include "railplan/parallel.hpp"
#include "railplan/simulator.hpp"

// Posterior sampling for the action-conditioned autoregressive HMM:
// forward filtering over hidden states with truncated-t emissions, backward
// sampling of state paths, conjugate Dirichlet updates for transition rows,
// and scalar random-walk Metropolis for the observation parameters. The
// sampler targets the same posterior a gradient-based scheme would; discrete
// paths are drawn explicitly and the stored per-sample weight marginalizes
// them out.

namespace railplan {

struct ProposalScales {
    double mu_d = 0.02;
    double sigma = 0.40; // log scale
    double nu = 0.60;    // log scale
    double mu_r = 0.05;
    double mu_0 = 0.05;
    double k = 0.50; // logit scale
};

struct McmcConfig {
    int n_chains = 4;
    int n_burnin = 4000;
    int n_samples = 3000;
    ProposalScales proposal_scales;
    std::uint64_t seed = 0;
    bool adapt = true;
    // scalar Metropolis passes per Gibbs sweep; the observation parameters
    // mix slower than the conjugate blocks, so they get extra passes
    int obs_subsweeps = 5;
    unsigned n_threads = 0;
};

struct Diagnostics {
    std::vector<std::string> names;
    std::vector<double> rhat;
    std::vector<double> ess;
    std::vector<bool> zero_variance;
    std::vector<std::string> block_names;
    std::vector<double> accept_rate;
};

// ---------------------------------------------------------------------------
// emission model

// Log-density of observation z at hidden state s given the previous
// observation and the action taken since then. No previous action selects
// the initial-observation branch; action 0 the deterioration branch; any
// repair action the autoregressive repair branch.
inline double emission_loglik(double z, std::optional<double> z_prev, int s,
                              std::optional<int> a_prev, const ObservationParams& obs) {
    if (z > 0.0) return -kInf;
    if (!a_prev.has_value()) {
        TruncStudentT d{obs.mu_0[s], obs.sigma_0[s], obs.nu_0[s], -kInf, 0.0};
        return trunc_t_logpdf(z, d);
    }
    const double zp = z_prev.value();
    if (*a_prev == 0) {
        TruncStudentT d{obs.mu_d[s], obs.sigma_d[s], obs.nu_d[s], -kInf, -zp};
        return trunc_t_logpdf(z - zp, d);
    }
    const int ar = *a_prev - 1;
    TruncStudentT d{obs.k_r[ar] * zp + obs.mu_r[s], obs.sigma_r[s], obs.nu_r[s], -kInf, 0.0};
    return trunc_t_logpdf(z, d);
}

// ---------------------------------------------------------------------------
// forward filtering / backward sampling

struct ForwardResult {
    double loglik = 0.0;
    std::vector<std::vector<double>> filtered; // [t][s], each sums to 1
};

// emission_beta tempers the emission terms; burn-in annealing uses values
// below one, every stored quantity uses the default exact filter
inline ForwardResult forward_filter(const Dataset::Series& series, const ModelSample& sample,
                                    double emission_beta = 1.0) {
    const int S = sample.transitions.n_states;
    const auto T = series.z.size();
    if (T == 0) throw std::invalid_argument("forward_filter: empty series");
    ForwardResult out;
    out.filtered.assign(T, std::vector<double>(S, 0.0));

    std::vector<double> logp(S), work(S);
    for (std::size_t t = 0; t < T; ++t) {
        for (int s = 0; s < S; ++s) {
            const std::optional<double> zp =
                t == 0 ? std::nullopt : std::optional<double>(series.z[t - 1]);
            const std::optional<int> ap =
                t == 0 ? std::nullopt : std::optional<int>(series.a[t - 1]);
            logp[s] = emission_beta * emission_loglik(series.z[t], zp, s, ap, sample.obs);
        }
        double lmax = -kInf;
        for (int s = 0; s < S; ++s) lmax = std::max(lmax, logp[s]);
        if (lmax == -kInf)
            throw std::runtime_error("forward_filter: zero likelihood at t=" + std::to_string(t));
        if (t == 0) {
            for (int s = 0; s < S; ++s) work[s] = sample.transitions.initial[s] * std::exp(logp[s] - lmax);
        } else {
            const int a = series.a[t - 1];
            const auto& prev = out.filtered[t - 1];
            for (int s2 = 0; s2 < S; ++s2) {
                double pred = 0.0;
                for (int s = 0; s < S; ++s) pred += prev[s] * sample.transitions.at(a, s, s2);
                work[s2] = pred * std::exp(logp[s2] - lmax);
            }
        }
        double norm = 0.0;
        for (int s = 0; s < S; ++s) norm += work[s];
        if (!(norm > 0.0))
            throw std::runtime_error("forward_filter: zero likelihood at t=" + std::to_string(t));
        for (int s = 0; s < S; ++s) out.filtered[t][s] = work[s] / norm;
        out.loglik += std::log(norm) + lmax;
    }
    return out;
}

// exact joint draw of the hidden path given the filtered marginals
inline std::vector<int> backward_sample(const ForwardResult& fwd, const ModelSample& sample,
                                        const std::vector<int>& actions, Rng& rng) {
    const int S = sample.transitions.n_states;
    const auto T = fwd.filtered.size();
    std::vector<int> path(T);
    path[T - 1] = sample_categorical(fwd.filtered[T - 1], rng);
    std::vector<double> w(S);
    for (std::size_t t = T - 1; t-- > 0;) {
        const int a = actions[t];
        const int snext = path[t + 1];
        double norm = 0.0;
        for (int s = 0; s < S; ++s) {
            w[s] = fwd.filtered[t][s] * sample.transitions.at(a, s, snext);
            norm += w[s];
        }
        for (int s = 0; s < S; ++s) w[s] /= norm;
        path[t] = sample_categorical(w, rng);
    }
    return path;
}

// ---------------------------------------------------------------------------
// conjugate transition update

inline TransitionSet update_transitions(const std::vector<std::vector<int>>& paths,
                                        const Dataset& data, const PriorConfig& priors, Rng& rng) {
    const int S = priors.n_states();
    const int A = priors.n_actions();
    std::vector<double> counts(static_cast<std::size_t>(A) * S * S, 0.0);
    std::vector<double> init_counts(static_cast<std::size_t>(S), 0.0);
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto& path = paths[i];
        const auto& a = data.series[i].a;
        init_counts[path[0]] += 1.0;
        for (std::size_t t = 1; t < path.size(); ++t)
            counts[(static_cast<std::size_t>(a[t - 1]) * S + path[t - 1]) * S + path[t]] += 1.0;
    }
    TransitionSet out(S, A);
    DirichletParams t0;
    t0.alpha.resize(S);
    for (int s = 0; s < S; ++s) t0.alpha[s] = priors.alpha0[s] + init_counts[s];
    out.initial = sample_dirichlet(t0, rng);
    for (int a = 0; a < A; ++a)
        for (int s = 0; s < S; ++s) {
            DirichletParams row;
            row.alpha.resize(S);
            for (int s2 = 0; s2 < S; ++s2)
                row.alpha[s2] = priors.alphaT[a][static_cast<std::size_t>(s) * S + s2] +
                                counts[(static_cast<std::size_t>(a) * S + s) * S + s2];
            const auto drawn = sample_dirichlet(row, rng);
            for (int s2 = 0; s2 < S; ++s2) out.at(a, s, s2) = drawn[s2];
        }
    return out;
}

// ---------------------------------------------------------------------------
// Metropolis update of the observation parameters

namespace detail {

struct DetObs {
    double delta, ub;
};
struct RepObs {
    double z, z_prev;
    int s, a;
};

// observation records grouped by the branch and state the sampled paths
// assign them to
struct BranchData {
    std::vector<std::vector<DetObs>> det;     // [s]
    std::vector<RepObs> rep;
    std::vector<std::vector<std::size_t>> rep_by_state;  // [s] -> indices into rep
    std::vector<std::vector<std::size_t>> rep_by_action; // [repair action-1]
    std::vector<std::vector<double>> init;    // [s] -> z0 values

    BranchData(int S, int A)
        : det(S), rep_by_state(S), rep_by_action(A > 1 ? A - 1 : 0), init(S) {}
};

inline BranchData group_branches(const std::vector<std::vector<int>>& paths, const Dataset& data,
                                 int S, int A) {
    BranchData out(S, A);
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto& path = paths[i];
        const auto& ser = data.series[i];
        out.init[path[0]].push_back(ser.z[0]);
        for (std::size_t t = 1; t < path.size(); ++t) {
            const int a = ser.a[t - 1];
            const int s = path[t];
            if (a == 0) {
                out.det[s].push_back({ser.z[t] - ser.z[t - 1], -ser.z[t - 1]});
            } else {
                out.rep_by_state[s].push_back(out.rep.size());
                out.rep_by_action[a - 1].push_back(out.rep.size());
                out.rep.push_back({ser.z[t], ser.z[t - 1], s, a});
            }
        }
    }
    return out;
}

inline double det_loglik(const std::vector<DetObs>& obs, double mu, double sigma, double nu) {
    double total = 0.0;
    for (const auto& o : obs) {
        TruncStudentT d{mu, sigma, nu, -kInf, o.ub};
        total += trunc_t_logpdf(o.delta, d);
        if (total == -kInf) return -kInf;
    }
    return total;
}

inline double rep_loglik_one(const RepObs& o, const ObservationParams& p) {
    TruncStudentT d{p.k_r[o.a - 1] * o.z_prev + p.mu_r[o.s], p.sigma_r[o.s], p.nu_r[o.s], -kInf,
                    0.0};
    return trunc_t_logpdf(o.z, d);
}

inline double init_loglik(const std::vector<double>& zs, double mu, double sigma, double nu) {
    double total = 0.0;
    for (double z : zs) {
        TruncStudentT d{mu, sigma, nu, -kInf, 0.0};
        total += trunc_t_logpdf(z, d);
        if (total == -kInf) return -kInf;
    }
    return total;
}

// half-normal prior on scales (truncated below zero)
inline double tn_lb0_logpdf(double x, const TruncGaussPrior& pr) {
    return trunc_normal_logpdf(x, pr.mean, pr.sd, 0.0, kInf);
}
inline double tn_ub0_logpdf(double x, const TruncGaussPrior& pr) {
    return trunc_normal_logpdf(x, pr.mean, pr.sd, -kInf, 0.0);
}

} // namespace detail

// One random-walk Metropolis pass over every scalar observation parameter.
// Scales and degrees of freedom walk on the log scale, autoregressive
// coefficients on the logit scale, bounded locations reject proposals
// outside their support. The initial-observation locations additionally
// keep their state ordering, which pins the state labels.
struct ObsParamSampler {
    int S, A;
    const PriorConfig* priors;
    std::vector<double> scales;       // per scalar, transformed space
    std::vector<std::uint32_t> accepted, attempted;

    // scalar layout: 9 per-state families then the k coefficients
    enum Family { MU_D, SIGMA_D, NU_D, MU_R, SIGMA_R, NU_R, MU_0, SIGMA_0, NU_0 };

    ObsParamSampler(int S_, int A_, const PriorConfig& pr, const ProposalScales& ps)
        : S(S_), A(A_), priors(&pr) {
        const int n = 9 * S + (A - 1);
        scales.assign(n, 0.1);
        accepted.assign(n, 0);
        attempted.assign(n, 0);
        for (int s = 0; s < S; ++s) {
            scales[MU_D * S + s] = ps.mu_d;
            scales[SIGMA_D * S + s] = ps.sigma;
            scales[NU_D * S + s] = ps.nu;
            scales[MU_R * S + s] = ps.mu_r;
            scales[SIGMA_R * S + s] = ps.sigma;
            scales[NU_R * S + s] = ps.nu;
            scales[MU_0 * S + s] = ps.mu_0;
            scales[SIGMA_0 * S + s] = ps.sigma;
            scales[NU_0 * S + s] = ps.nu;
        }
        for (int a = 0; a + 1 < A; ++a) scales[9 * S + a] = ps.k;
    }

    int n_scalars() const { return 9 * S + (A - 1); }

    std::string scalar_name(int idx) const {
        static const char* fam[] = {"mu_d",    "sigma_d", "nu_d", "mu_r", "sigma_r",
                                    "nu_r",    "mu_0",    "sigma_0", "nu_0"};
        if (idx < 9 * S) return std::string(fam[idx / S]) + "[" + std::to_string(idx % S) + "]";
        return "k_r[a" + std::to_string(idx - 9 * S + 1) + "]";
    }

    // one sweep; returns per-scalar acceptance of this sweep. beta tempers
    // the likelihood terms during burn-in annealing.
    std::vector<std::uint8_t> sweep(const detail::BranchData& bd, ObservationParams& p, Rng& rng,
                                    double beta = 1.0) {
        std::vector<std::uint8_t> flags(static_cast<std::size_t>(n_scalars()), 0);
        const PriorConfig& pr = *priors;

        auto metro = [&](int idx, double cur_transformed, auto&& logtarget_transformed,
                         auto&& commit) {
            ++attempted[idx];
            const double prop = cur_transformed + scales[idx] * normal_sample(rng);
            const double lt_cur = logtarget_transformed(cur_transformed);
            const double lt_prop = logtarget_transformed(prop);
            if (lt_prop > -kInf &&
                (lt_prop >= lt_cur || std::log(rng.uniform()) < lt_prop - lt_cur)) {
                commit(prop);
                ++accepted[idx];
                flags[idx] = 1;
            }
        };

        for (int s = 0; s < S; ++s) {
            metro(
                MU_D * S + s, p.mu_d[s],
                [&](double mu) {
                    return normal_logpdf(mu, pr.mu_d.mean, pr.mu_d.sd) +
                           beta * detail::det_loglik(bd.det[s], mu, p.sigma_d[s], p.nu_d[s]);
                },
                [&](double mu) { p.mu_d[s] = mu; });
            metro(
                SIGMA_D * S + s, std::log(p.sigma_d[s]),
                [&](double ls) {
                    const double sig = std::exp(ls);
                    if (!(sig > 0.0) || !std::isfinite(sig)) return -kInf;
                    return detail::tn_lb0_logpdf(sig, pr.sigma_d) + ls +
                           beta * detail::det_loglik(bd.det[s], p.mu_d[s], sig, p.nu_d[s]);
                },
                [&](double ls) { p.sigma_d[s] = std::exp(ls); });
            metro(
                NU_D * S + s, std::log(p.nu_d[s]),
                [&](double ln) {
                    const double nu = std::exp(ln);
                    if (!(nu > 0.0) || !std::isfinite(nu)) return -kInf;
                    return gamma_logpdf(nu, pr.nu_d.shape, pr.nu_d.rate) + ln +
                           beta * detail::det_loglik(bd.det[s], p.mu_d[s], p.sigma_d[s], nu);
                },
                [&](double ln) { p.nu_d[s] = std::exp(ln); });

            auto rep_state_lik = [&](const ObservationParams& q) {
                double total = 0.0;
                for (std::size_t i : bd.rep_by_state[s]) {
                    total += detail::rep_loglik_one(bd.rep[i], q);
                    if (total == -kInf) break;
                }
                return total;
            };
            metro(
                MU_R * S + s, p.mu_r[s],
                [&](double mu) {
                    if (mu > 0.0) return -kInf;
                    ObservationParams q = p;
                    q.mu_r[s] = mu;
                    return detail::tn_ub0_logpdf(mu, pr.mu_r) + beta * rep_state_lik(q);
                },
                [&](double mu) { p.mu_r[s] = mu; });
            metro(
                SIGMA_R * S + s, std::log(p.sigma_r[s]),
                [&](double ls) {
                    const double sig = std::exp(ls);
                    if (!(sig > 0.0) || !std::isfinite(sig)) return -kInf;
                    ObservationParams q = p;
                    q.sigma_r[s] = sig;
                    return detail::tn_lb0_logpdf(sig, pr.sigma_r) + ls + beta * rep_state_lik(q);
                },
                [&](double ls) { p.sigma_r[s] = std::exp(ls); });
            metro(
                NU_R * S + s, std::log(p.nu_r[s]),
                [&](double ln) {
                    const double nu = std::exp(ln);
                    if (!(nu > 0.0) || !std::isfinite(nu)) return -kInf;
                    ObservationParams q = p;
                    q.nu_r[s] = nu;
                    return gamma_logpdf(nu, pr.nu_r.shape, pr.nu_r.rate) + ln +
                           beta * rep_state_lik(q);
                },
                [&](double ln) { p.nu_r[s] = std::exp(ln); });

            metro(
                MU_0 * S + s, p.mu_0[s],
                [&](double mu) {
                    if (mu > 0.0) return -kInf;
                    // ordered locations: better states sit nearer zero
                    if (s > 0 && mu > p.mu_0[s - 1]) return -kInf;
                    if (s + 1 < S && mu < p.mu_0[s + 1]) return -kInf;
                    return detail::tn_ub0_logpdf(mu, pr.mu_0) +
                           beta * detail::init_loglik(bd.init[s], mu, p.sigma_0[s], p.nu_0[s]);
                },
                [&](double mu) { p.mu_0[s] = mu; });
            metro(
                SIGMA_0 * S + s, std::log(p.sigma_0[s]),
                [&](double ls) {
                    const double sig = std::exp(ls);
                    if (!(sig > 0.0) || !std::isfinite(sig)) return -kInf;
                    return detail::tn_lb0_logpdf(sig, pr.sigma_0) + ls +
                           beta * detail::init_loglik(bd.init[s], p.mu_0[s], sig, p.nu_0[s]);
                },
                [&](double ls) { p.sigma_0[s] = std::exp(ls); });
            metro(
                NU_0 * S + s, std::log(p.nu_0[s]),
                [&](double ln) {
                    const double nu = std::exp(ln);
                    if (!(nu > 0.0) || !std::isfinite(nu)) return -kInf;
                    return gamma_logpdf(nu, pr.nu_0.shape, pr.nu_0.rate) + ln +
                           beta * detail::init_loglik(bd.init[s], p.mu_0[s], p.sigma_0[s], nu);
                },
                [&](double ln) { p.nu_0[s] = std::exp(ln); });
        }

        for (int a = 0; a + 1 < A; ++a) {
            metro(
                9 * S + a, std::log(p.k_r[a]) - std::log1p(-p.k_r[a]),
                [&](double logit) {
                    const double k = 1.0 / (1.0 + std::exp(-logit));
                    if (!(k > 0.0 && k < 1.0)) return -kInf;
                    ObservationParams q = p;
                    q.k_r[a] = k;
                    double total = beta_logpdf(k, pr.k_r.a, pr.k_r.b) + std::log(k) + std::log1p(-k);
                    for (std::size_t i : bd.rep_by_action[a]) {
                        total += beta * detail::rep_loglik_one(bd.rep[i], q);
                        if (total == -kInf) break;
                    }
                    return total;
                },
                [&](double logit) { p.k_r[a] = 1.0 / (1.0 + std::exp(-logit)); });
        }
        return flags;
    }

    void adapt_window(double target_lo = 0.30, double target_hi = 0.45) {
        const double target = 0.5 * (target_lo + target_hi);
        for (std::size_t i = 0; i < scales.size(); ++i) {
            if (attempted[i] == 0) continue;
            const double rate = static_cast<double>(accepted[i]) / attempted[i];
            scales[i] *= std::exp(rate - target);
            scales[i] = std::clamp(scales[i], 1e-4, 10.0);
            accepted[i] = 0;
            attempted[i] = 0;
        }
    }
};

// standalone single step, the spec-level entry point over current parameters
inline std::pair<ObservationParams, std::vector<std::uint8_t>> update_obs_params(
    const std::vector<std::vector<int>>& paths, const Dataset& data,
    const ObservationParams& current, const PriorConfig& priors, const ProposalScales& scales,
    Rng& rng) {
    const int S = priors.n_states();
    const int A = priors.n_actions();
    const auto bd = detail::group_branches(paths, data, S, A);
    ObsParamSampler sampler(S, A, priors, scales);
    ObservationParams p = current;
    auto flags = sampler.sweep(bd, p, rng);
    return {std::move(p), std::move(flags)};
}

// ---------------------------------------------------------------------------
// log posterior (hidden paths marginalized)

inline double dirichlet_logpdf(std::span<const double> p, std::span<const double> alpha) {
    double total = 0.0;
    double alpha_sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        total += (alpha[i] - 1.0) * std::log(p[i]);
        total -= std::lgamma(alpha[i]);
        alpha_sum += alpha[i];
    }
    return total + std::lgamma(alpha_sum);
}

inline double log_prior(const ModelSample& sample, const PriorConfig& priors) {
    const int S = priors.n_states();
    const int A = priors.n_actions();
    double total = dirichlet_logpdf(sample.transitions.initial, priors.alpha0);
    for (int a = 0; a < A; ++a)
        for (int s = 0; s < S; ++s)
            total += dirichlet_logpdf(
                sample.transitions.row(a, s),
                std::span<const double>(priors.alphaT[a].data() + static_cast<std::size_t>(s) * S,
                                        static_cast<std::size_t>(S)));
    const ObservationParams& o = sample.obs;
    for (int s = 0; s < S; ++s) {
        total += normal_logpdf(o.mu_d[s], priors.mu_d.mean, priors.mu_d.sd);
        total += detail::tn_lb0_logpdf(o.sigma_d[s], priors.sigma_d);
        total += gamma_logpdf(o.nu_d[s], priors.nu_d.shape, priors.nu_d.rate);
        total += detail::tn_ub0_logpdf(o.mu_r[s], priors.mu_r);
        total += detail::tn_lb0_logpdf(o.sigma_r[s], priors.sigma_r);
        total += gamma_logpdf(o.nu_r[s], priors.nu_r.shape, priors.nu_r.rate);
        total += detail::tn_ub0_logpdf(o.mu_0[s], priors.mu_0);
        total += detail::tn_lb0_logpdf(o.sigma_0[s], priors.sigma_0);
        total += gamma_logpdf(o.nu_0[s], priors.nu_0.shape, priors.nu_0.rate);
    }
    for (int a = 0; a + 1 < A; ++a) total += beta_logpdf(o.k_r[a], priors.k_r.a, priors.k_r.b);
    return total;
}

inline double marginal_loglik(const Dataset& data, const ModelSample& sample) {
    double total = 0.0;
    for (const auto& ser : data.series) total += forward_filter(ser, sample).loglik;
    return total;
}

// ---------------------------------------------------------------------------
// convergence diagnostics

// Split R-hat and autocorrelation ESS per scalar. chains[c][k] is the draw
// sequence of scalar k in chain c.
inline Diagnostics compute_diagnostics(const std::vector<std::vector<std::vector<double>>>& chains,
                                       std::vector<std::string> names = {}) {
    if (chains.size() < 2) throw std::invalid_argument("compute_diagnostics: need >= 2 chains");
    const std::size_t K = chains[0].size();
    std::size_t n = chains[0][0].size();
    for (const auto& c : chains) {
        if (c.size() != K) throw std::invalid_argument("compute_diagnostics: ragged chains");
        for (const auto& v : c) n = std::min(n, v.size());
    }
    if (n < 4) throw std::invalid_argument("compute_diagnostics: need >= 4 draws per chain");
    const std::size_t half = n / 2;

    Diagnostics d;
    d.names = names.empty() ? std::vector<std::string>(K) : std::move(names);
    d.rhat.resize(K);
    d.ess.resize(K);
    d.zero_variance.assign(K, false);

    for (std::size_t k = 0; k < K; ++k) {
        // split each chain in half
        std::vector<std::vector<double>> seq;
        for (const auto& c : chains) {
            seq.emplace_back(c[k].begin(), c[k].begin() + static_cast<std::ptrdiff_t>(half));
            seq.emplace_back(c[k].begin() + static_cast<std::ptrdiff_t>(half),
                             c[k].begin() + static_cast<std::ptrdiff_t>(2 * half));
        }
        const double m = static_cast<double>(seq.size());
        const double len = static_cast<double>(half);
        std::vector<double> means(seq.size()), vars(seq.size());
        double grand = 0.0;
        for (std::size_t j = 0; j < seq.size(); ++j) {
            double mu = 0.0;
            for (double v : seq[j]) mu += v;
            mu /= len;
            double var = 0.0;
            for (double v : seq[j]) var += (v - mu) * (v - mu);
            var /= (len - 1.0);
            means[j] = mu;
            vars[j] = var;
            grand += mu / m;
        }
        double W = 0.0, B = 0.0;
        for (std::size_t j = 0; j < seq.size(); ++j) {
            W += vars[j] / m;
            B += (means[j] - grand) * (means[j] - grand) * len / (m - 1.0);
        }
        const double var_plus = (len - 1.0) / len * W + B / len;
        if (!(var_plus > 0.0) || !(W > 0.0)) {
            d.rhat[k] = 1.0;
            d.ess[k] = static_cast<double>(seq.size()) * len;
            d.zero_variance[k] = true;
            continue;
        }
        d.rhat[k] = std::sqrt(var_plus / W);

        // combined autocorrelation with Geyer positive-pair truncation
        double rho_sum = 0.0;
        double prev_pair = kInf;
        for (std::size_t lag = 1; lag + 2 < half; lag += 2) {
            double pair = 0.0;
            bool valid = true;
            for (int piece = 0; piece < 2; ++piece) {
                const std::size_t L = lag + static_cast<std::size_t>(piece);
                if (L >= half) {
                    valid = false;
                    break;
                }
                double acov = 0.0;
                for (std::size_t j = 0; j < seq.size(); ++j) {
                    double c = 0.0;
                    for (std::size_t t = 0; t + L < half; ++t)
                        c += (seq[j][t] - means[j]) * (seq[j][t + L] - means[j]);
                    acov += c / len / m;
                }
                pair += 1.0 - (W - acov) / var_plus;
            }
            if (!valid || pair <= 0.0) break;
            pair = std::min(pair, prev_pair); // enforce monotone decay
            rho_sum += pair;
            prev_pair = pair;
        }
        const double total_draws = static_cast<double>(seq.size()) * len;
        d.ess[k] = std::min(total_draws, total_draws / (1.0 + 2.0 * rho_sum));
    }
    return d;
}

// ---------------------------------------------------------------------------
// full sampler

namespace detail {

struct ChainResult {
    std::vector<ModelSample> kept;
    std::vector<std::vector<double>> draws; // [scalar][iter]
    std::vector<double> accept_rate;        // per scalar block
};

inline void flatten_scalars(const ModelSample& s, std::vector<double>& out) {
    out.clear();
    out.insert(out.end(), s.transitions.prob.begin(), s.transitions.prob.end());
    out.insert(out.end(), s.transitions.initial.begin(), s.transitions.initial.end());
    const ObservationParams& o = s.obs;
    for (const auto* v : {&o.mu_d, &o.sigma_d, &o.nu_d, &o.mu_r, &o.sigma_r, &o.nu_r, &o.mu_0,
                          &o.sigma_0, &o.nu_0, &o.k_r})
        out.insert(out.end(), v->begin(), v->end());
}

inline std::vector<std::string> scalar_names(int S, int A) {
    std::vector<std::string> names;
    for (int a = 0; a < A; ++a)
        for (int s = 0; s < S; ++s)
            for (int s2 = 0; s2 < S; ++s2)
                names.push_back("T[a" + std::to_string(a) + "][" + std::to_string(s) + "][" +
                                std::to_string(s2) + "]");
    for (int s = 0; s < S; ++s) names.push_back("T0[" + std::to_string(s) + "]");
    static const char* fam[] = {"mu_d", "sigma_d", "nu_d", "mu_r", "sigma_r",
                                "nu_r", "mu_0",    "sigma_0", "nu_0"};
    for (const char* f : fam)
        for (int s = 0; s < S; ++s) names.push_back(std::string(f) + "[" + std::to_string(s) + "]");
    for (int a = 1; a < A; ++a) names.push_back("k_r[a" + std::to_string(a) + "]");
    return names;
}

// Data-informed chain start: level quantiles seed the initial-observation
// locations, observed step moments seed the deterioration scales, and every
// scalar is jittered per chain. Prior draws can start an order of magnitude
// off the data scale, where sharp likelihoods lock the sampler into a poor
// path assignment it cannot leave within the burn-in.
inline ModelSample initialize_chain_state(const Dataset& data, const PriorConfig& priors,
                                          Rng& rng) {
    const int S = priors.n_states();
    const int A = priors.n_actions();
    ModelSample cur;

    // transitions: structured prior mean with mild Dirichlet jitter
    cur.transitions = TransitionSet(S, A);
    {
        DirichletParams t0;
        t0.alpha.resize(S);
        for (int s = 0; s < S; ++s) t0.alpha[s] = 10.0 * priors.alpha0[s];
        cur.transitions.initial = sample_dirichlet(t0, rng);
        for (int a = 0; a < A; ++a)
            for (int s = 0; s < S; ++s) {
                DirichletParams row;
                row.alpha.resize(S);
                double rowsum = 0.0;
                for (int s2 = 0; s2 < S; ++s2)
                    rowsum += priors.alphaT[a][static_cast<std::size_t>(s) * S + s2];
                for (int s2 = 0; s2 < S; ++s2)
                    row.alpha[s2] = 30.0 *
                                    priors.alphaT[a][static_cast<std::size_t>(s) * S + s2] /
                                    rowsum;
                const auto drawn = sample_dirichlet(row, rng);
                for (int s2 = 0; s2 < S; ++s2) cur.transitions.at(a, s, s2) = drawn[s2];
            }
    }

    // data moments
    std::vector<double> z0s, det_steps, rep_z, rep_zprev;
    for (const auto& ser : data.series) {
        z0s.push_back(ser.z[0]);
        for (std::size_t t = 1; t < ser.z.size(); ++t) {
            if (ser.a[t - 1] == 0) {
                det_steps.push_back(ser.z[t] - ser.z[t - 1]);
            } else {
                rep_z.push_back(ser.z[t]);
                rep_zprev.push_back(ser.z[t - 1]);
            }
        }
    }
    std::sort(z0s.begin(), z0s.end(), std::greater<double>());
    // one-dimensional k-means on the initial levels anchors the state labels;
    // plain occupancy quantiles would split the most common cluster instead
    std::vector<double> centers(static_cast<std::size_t>(S));
    std::vector<double> cluster_sd(static_cast<std::size_t>(S), 0.05);
    if (static_cast<int>(z0s.size()) >= S) {
        for (int s = 0; s < S; ++s) {
            const double span = z0s.front() - z0s.back();
            centers[s] = z0s.front() - span * (s + 0.5) / S;
        }
        std::vector<int> assign(z0s.size(), 0);
        for (int pass = 0; pass < 50; ++pass) {
            bool changed = false;
            for (std::size_t i = 0; i < z0s.size(); ++i) {
                int best = 0;
                for (int s = 1; s < S; ++s)
                    if (std::fabs(z0s[i] - centers[s]) < std::fabs(z0s[i] - centers[best]))
                        best = s;
                if (assign[i] != best) {
                    assign[i] = best;
                    changed = true;
                }
            }
            for (int s = 0; s < S; ++s) {
                double sum = 0.0;
                int n = 0;
                for (std::size_t i = 0; i < z0s.size(); ++i)
                    if (assign[i] == s) {
                        sum += z0s[i];
                        ++n;
                    }
                if (n > 0) centers[s] = sum / n;
            }
            if (!changed) break;
        }
        std::sort(centers.begin(), centers.end(), std::greater<double>());
        for (int s = 0; s < S; ++s) {
            double ss = 0.0;
            int n = 0;
            for (std::size_t i = 0; i < z0s.size(); ++i) {
                int best = 0;
                for (int c = 1; c < S; ++c)
                    if (std::fabs(z0s[i] - centers[c]) < std::fabs(z0s[i] - centers[best]))
                        best = c;
                if (best == s) {
                    ss += (z0s[i] - centers[s]) * (z0s[i] - centers[s]);
                    ++n;
                }
            }
            if (n > 1) cluster_sd[s] = std::max(0.02, std::sqrt(ss / (n - 1)));
        }
    } else {
        for (int s = 0; s < S; ++s) centers[s] = -0.1 * (s + 1);
    }
    auto moments = [](const std::vector<double>& v, double fallback_mean,
                      double fallback_sd) -> std::pair<double, double> {
        if (v.size() < 2) return {fallback_mean, fallback_sd};
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        return {m, std::sqrt(ss / (static_cast<double>(v.size()) - 1.0))};
    };
    const auto [dmean, dsd] = moments(det_steps, -0.02, 0.02);
    const auto [rmean, rsd] = moments(rep_z, -0.2, 0.1);

    cur.obs = ObservationParams::zeros(S, A);
    auto jitter = [&rng](double x, double rel) { return x * std::exp(rel * normal_sample(rng)); };
    for (int s = 0; s < S; ++s) {
        cur.obs.mu_0[s] = std::min(-1e-3, jitter(centers[s], 0.05));
        cur.obs.sigma_0[s] = jitter(cluster_sd[s], 0.15);
        cur.obs.nu_0[s] = jitter(10.0, 0.2);
        // spread the pooled step moments across the state ranks
        const double spread = 0.5 + 2.0 * static_cast<double>(s) / std::max(1, S - 1);
        cur.obs.mu_d[s] = jitter(std::min(-1e-4, dmean) * spread, 0.15);
        cur.obs.sigma_d[s] = jitter(std::max(1e-3, dsd), 0.15);
        cur.obs.nu_d[s] = jitter(10.0, 0.2);
        cur.obs.mu_r[s] = std::min(-1e-3, jitter(0.5 * rmean * spread, 0.15));
        cur.obs.sigma_r[s] = jitter(std::max(5e-3, rsd), 0.15);
        cur.obs.nu_r[s] = jitter(10.0, 0.2);
    }
    for (int a = 0; a + 1 < A; ++a)
        cur.obs.k_r[a] = std::clamp(jitter(0.3, 0.2), 0.02, 0.95);
    std::sort(cur.obs.mu_0.begin(), cur.obs.mu_0.end(), std::greater<double>());
    return cur;
}

// One chain as a resumable state machine: burn-in with adaptation, then the
// collection phase. Keeping phases separate lets run_mcmc compare chains
// after burn-in and restart any that froze in a negligible-mass labeling
// mode.
class ChainWork {
  public:
    ChainWork(const Dataset& data, const PriorConfig& priors, const McmcConfig& cfg,
              std::uint64_t chain_seed)
        : data_(&data), priors_(&priors), cfg_(&cfg), rng_(chain_seed),
          sampler_(priors.n_states(), priors.n_actions(), priors, cfg.proposal_scales),
          paths_(data.series.size()) {
        cur_ = initialize_chain_state(data, priors, rng_);
    }

    void sweep() {
        const int S = priors_->n_states();
        const int A = priors_->n_actions();
        for (std::size_t i = 0; i < data_->series.size(); ++i) {
            const ForwardResult fwd = forward_filter(data_->series[i], cur_);
            paths_[i] = backward_sample(fwd, cur_, data_->series[i].a, rng_);
        }
        cur_.transitions = update_transitions(paths_, *data_, *priors_, rng_);
        const auto bd = group_branches(paths_, *data_, S, A);
        for (int rep = 0; rep < std::max(1, cfg_->obs_subsweeps); ++rep)
            sampler_.sweep(bd, cur_.obs, rng_);
    }

    void burn(int n_sweeps, bool adapt) {
        for (int iter = 0; iter < n_sweeps; ++iter) {
            sweep();
            if (adapt && cfg_->adapt && (iter + 1) % 50 == 0) sampler_.adapt_window();
        }
    }

    double log_post() const {
        return log_prior(cur_, *priors_) + marginal_loglik(*data_, cur_);
    }

    // move this chain to another chain's parameters; its own rng then
    // decorrelates it from the donor
    void adopt_state(const ChainWork& donor) {
        cur_ = donor.cur_;
        sampler_.scales = donor.sampler_.scales;
    }

    ChainResult collect(int n_samples) {
        const int S = priors_->n_states();
        const int A = priors_->n_actions();
        ChainResult res;
        const std::size_t n_scalars = static_cast<std::size_t>(A) * S * S + S + 9 * S + (A - 1);
        res.draws.assign(n_scalars, {});
        for (auto& v : res.draws) v.reserve(static_cast<std::size_t>(n_samples));
        res.kept.reserve(static_cast<std::size_t>(n_samples));

        std::fill(sampler_.accepted.begin(), sampler_.accepted.end(), 0u);
        std::fill(sampler_.attempted.begin(), sampler_.attempted.end(), 0u);

        std::vector<double> flat;
        for (int iter = 0; iter < n_samples; ++iter) {
            sweep();
            ModelSample kept = cur_;
            kept.log_post = log_post();
            flatten_scalars(kept, flat);
            for (std::size_t k = 0; k < n_scalars; ++k) res.draws[k].push_back(flat[k]);
            res.kept.push_back(std::move(kept));
        }
        res.accept_rate.resize(sampler_.scales.size());
        for (std::size_t i = 0; i < sampler_.scales.size(); ++i)
            res.accept_rate[i] =
                sampler_.attempted[i] == 0
                    ? 0.0
                    : static_cast<double>(sampler_.accepted[i]) / sampler_.attempted[i];
        return res;
    }

  private:
    const Dataset* data_;
    const PriorConfig* priors_;
    const McmcConfig* cfg_;
    Rng rng_;
    ModelSample cur_;
    ObsParamSampler sampler_;
    std::vector<std::vector<int>> paths_;
};

} // namespace detail

inline std::pair<PosteriorEnsemble, Diagnostics> run_mcmc(const Dataset& data,
                                                          const PomdpModel& model,
                                                          const PriorConfig& priors,
                                                          const McmcConfig& cfg) {
    if (cfg.n_chains < 1 || cfg.n_burnin < 0 || cfg.n_samples < 1)
        throw std::invalid_argument("run_mcmc: invalid configuration");
    if (data.series.empty()) throw std::invalid_argument("run_mcmc: empty dataset");
    bool any_long = false;
    for (const auto& ser : data.series) {
        if (ser.z.size() >= 2) any_long = true;
        if (ser.z.size() != ser.a.size() + 1)
            throw std::invalid_argument("run_mcmc: misaligned series " + ser.id);
        for (int a : ser.a)
            if (a < 0 || a >= model.n_actions)
                throw std::invalid_argument("run_mcmc: action out of range in series " + ser.id);
        for (double z : ser.z)
            if (z > 0.0)
                throw std::invalid_argument("run_mcmc: positive observation in series " + ser.id);
    }
    if (!any_long) throw std::invalid_argument("run_mcmc: need a series with >= 2 observations");
    if (priors.n_states() != model.n_states || priors.n_actions() != model.n_actions)
        throw std::invalid_argument("run_mcmc: prior dimensions do not match the model");

    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(cfg.n_chains));
    for (int c = 0; c < cfg.n_chains; ++c) seeds[c] = mix_seed(cfg.seed, 0xC4A1u, c);

    std::vector<std::unique_ptr<detail::ChainWork>> chains;
    for (int c = 0; c < cfg.n_chains; ++c)
        chains.push_back(std::make_unique<detail::ChainWork>(data, priors, cfg, seeds[c]));

    // phase 1: adaptive burn-in
    parallel_for(
        chains.size(), [&](std::size_t c) { chains[c]->burn(cfg.n_burnin, true); },
        cfg.n_threads);

    // A chain can freeze in a labeling mode whose posterior mass is
    // negligible next to the others'. Such a chain would distort the merged
    // ensemble far more than dropping the mode does, so it is moved to the
    // best chain's parameters and decorrelated before collection.
    if (cfg.n_chains >= 2 && cfg.n_burnin > 0) {
        std::vector<double> lp(chains.size());
        parallel_for(
            chains.size(), [&](std::size_t c) { lp[c] = chains[c]->log_post(); },
            cfg.n_threads);
        std::size_t best = 0;
        for (std::size_t c = 1; c < chains.size(); ++c)
            if (lp[c] > lp[best]) best = c;
        constexpr double lag_threshold = 15.0;
        std::vector<std::size_t> restart;
        for (std::size_t c = 0; c < chains.size(); ++c)
            if (lp[best] - lp[c] > lag_threshold) restart.push_back(c);
        if (!restart.empty()) {
            const int decorrelate = std::max(100, cfg.n_burnin / 4);
            for (std::size_t c : restart) chains[c]->adopt_state(*chains[best]);
            parallel_for(
                restart.size(),
                [&](std::size_t i) { chains[restart[i]]->burn(decorrelate, false); },
                cfg.n_threads);
        }
    }

    // phase 2: collection
    std::vector<detail::ChainResult> results(chains.size());
    parallel_for(
        chains.size(), [&](std::size_t c) { results[c] = chains[c]->collect(cfg.n_samples); },
        cfg.n_threads);

    PosteriorEnsemble ens;
    for (int c = 0; c < cfg.n_chains; ++c) {
        ens.chain_meta.seeds.push_back(seeds[c]);
        ens.chain_meta.lengths.push_back(static_cast<std::uint32_t>(results[c].kept.size()));
        for (auto& s : results[c].kept) ens.samples.push_back(std::move(s));
    }

    Diagnostics diag;
    if (cfg.n_chains >= 2 && cfg.n_samples >= 4) {
        std::vector<std::vector<std::vector<double>>> chains;
        for (auto& r : results) chains.push_back(std::move(r.draws));
        diag = compute_diagnostics(chains, detail::scalar_names(model.n_states, model.n_actions));
    }
    ObsParamSampler name_helper(model.n_states, model.n_actions, priors, cfg.proposal_scales);
    diag.block_names.clear();
    diag.accept_rate.assign(static_cast<std::size_t>(name_helper.n_scalars()), 0.0);
    for (int i = 0; i < name_helper.n_scalars(); ++i) {
        diag.block_names.push_back(name_helper.scalar_name(i));
        for (const auto& r : results) diag.accept_rate[i] += r.accept_rate[i] / cfg.n_chains;
    }
    return {std::move(ens), std::move(diag)};
}

} // namespace railplan
