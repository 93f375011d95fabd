#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "railplan/qmdp.hpp"

// Policy-evaluation harness: batched episodes across ensemble-sampled
// environments with common random numbers, cost statistics, and the
// benchmark roster (robust Q_MDP, posterior-mean, posterior-percentile
// agents, always-tamping).

namespace railplan {

class Agent {
  public:
    virtual ~Agent() = default;
    virtual void begin_episode(double z0) = 0;
    virtual int act(int t, int true_state) = 0;
    virtual void observe(int action, double z_prev, double z) = 0;
};

using AgentFactory = std::function<std::unique_ptr<Agent>()>;

class FixedActionAgent final : public Agent {
  public:
    explicit FixedActionAgent(int action) : action_(action) {}
    void begin_episode(double) override {}
    int act(int, int) override { return action_; }
    void observe(int, double, double) override {}

  private:
    int action_;
};

// full-observability agent following a per-state policy
class StatePolicyAgent final : public Agent {
  public:
    explicit StatePolicyAgent(std::vector<int> policy) : policy_(std::move(policy)) {}
    void begin_episode(double) override {}
    int act(int, int true_state) override { return policy_[static_cast<std::size_t>(true_state)]; }
    void observe(int, double, double) override {}

  private:
    std::vector<int> policy_;
};

class QmdpAgent final : public Agent {
  public:
    explicit QmdpAgent(QmdpPlanner planner) : planner_(std::move(planner)) {}
    void begin_episode(double z0) override { planner_.begin_episode(z0); }
    int act(int t, int) override { return planner_.act(t); }
    void observe(int action, double z_prev, double z) override {
        planner_.observe(action, z_prev, z);
    }
    const QmdpPlanner& planner() const { return planner_; }

  private:
    QmdpPlanner planner_;
};

struct EvalRow {
    std::string policy;
    SummaryStats stats;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    int n_sims = 0;
    int horizon = 0;
    std::uint64_t seed = 0;
};

struct EvalOptions {
    bool discounted = false;   // planning keeps gamma; scoring is undiscounted
    double hdi_mass = 0.95;
    unsigned n_threads = 0;
};

// One policy over n_sims episodes. The true environment of episode i and all
// of its step noise derive from (seed, i) alone, so different policies face
// common random numbers and reruns are bit-identical.
inline std::vector<double> simulate_policy(const AgentFactory& make_agent,
                                           const PosteriorEnsemble& envs, const PomdpModel& model,
                                           int n_sims, int H, std::uint64_t seed,
                                           const EvalOptions& opt = {}) {
    if (n_sims < 1) throw std::invalid_argument("simulate_policy: n_sims must be >= 1");
    if (H < 1) throw std::invalid_argument("simulate_policy: horizon must be >= 1");
    if (envs.samples.empty()) throw std::invalid_argument("simulate_policy: empty ensemble");
    std::vector<double> totals(static_cast<std::size_t>(n_sims), 0.0);

    const unsigned workers =
        opt.n_threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : opt.n_threads;
    const std::size_t chunk =
        (static_cast<std::size_t>(n_sims) + workers - 1) / static_cast<std::size_t>(workers);
    parallel_for(
        workers,
        [&](std::size_t w) {
            const std::size_t lo = w * chunk;
            const std::size_t hi = std::min<std::size_t>(n_sims, lo + chunk);
            if (lo >= hi) return;
            auto agent = make_agent();
            for (std::size_t sim = lo; sim < hi; ++sim) {
                Rng pick(mix_seed(seed, 0xE57EC7u, sim));
                const ModelSample& env = envs.samples[pick.uniform_index(envs.samples.size())];
                Rng step_rng(mix_seed(seed, sim, 0));
                auto [s, z] = initial(env, step_rng);
                agent->begin_episode(z);
                double total = 0.0;
                double g = 1.0;
                for (int t = 0; t < H; ++t) {
                    const int a = agent->act(t, s);
                    total += g * reward(model, s, a);
                    if (opt.discounted) g *= model.gamma;
                    Rng rt(mix_seed(seed, sim, static_cast<std::uint64_t>(t) + 1));
                    const StepResult res = step(s, a, z, env, model, rt);
                    agent->observe(a, z, res.observation);
                    s = res.next_state;
                    z = res.observation;
                }
                totals[sim] = total;
            }
        },
        workers);
    return totals;
}

inline SummaryStats evaluate_policy(const AgentFactory& make_agent, const PosteriorEnsemble& envs,
                                    const PomdpModel& model, int n_sims, int H, std::uint64_t seed,
                                    const EvalOptions& opt = {}) {
    const auto totals = simulate_policy(make_agent, envs, model, n_sims, H, seed, opt);
    return summarize(totals, opt.hdi_mass);
}

// samples at the nearest-rank order statistics of the unnormalized log
// posterior; fractions in [0,1]
inline std::vector<ModelSample> percentile_samples(const PosteriorEnsemble& ensemble,
                                                   const std::vector<double>& fractions) {
    if (ensemble.samples.empty()) throw std::invalid_argument("percentile_samples: empty ensemble");
    std::vector<std::size_t> order(ensemble.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (const auto& s : ensemble.samples)
        if (!std::isfinite(s.log_post))
            throw std::invalid_argument("percentile_samples: ensemble lacks log-posterior weights");
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return ensemble.samples[a].log_post < ensemble.samples[b].log_post;
    });
    std::vector<ModelSample> out;
    const double n = static_cast<double>(order.size());
    for (double f : fractions) {
        if (!(f >= 0.0 && f <= 1.0))
            throw std::invalid_argument("percentile_samples: fraction outside [0,1]");
        const auto rank = static_cast<std::ptrdiff_t>(std::ceil(f * n)) - 1;
        const std::size_t idx = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(
            rank, 0, static_cast<std::ptrdiff_t>(order.size()) - 1));
        out.push_back(ensemble.samples[order[idx]]);
    }
    return out;
}

// deterministic evenly-spaced subsample used for the robust planner
inline std::vector<const ModelSample*> subsample_pointers(const PosteriorEnsemble& ensemble,
                                                          std::size_t count) {
    count = std::min(count, ensemble.samples.size());
    std::vector<const ModelSample*> out;
    out.reserve(count);
    const double stride = static_cast<double>(ensemble.samples.size()) / static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(&ensemble.samples[static_cast<std::size_t>(i * stride)]);
    return out;
}

struct CompareOptions {
    std::size_t planner_subsample = 500;
    bool include_full_obs_mdp = false;
    EvalOptions eval;
};

// The benchmark roster: robust Q_MDP over the ensemble, Q_MDP at the
// posterior mean, five posterior-percentile agents, and always-tamping.
inline EvalReport compare_policies(const PosteriorEnsemble& ensemble, const PomdpModel& model,
                                   int H, int n_sims, std::uint64_t seed,
                                   const CompareOptions& copt = {}) {
    EvalReport report;
    report.n_sims = n_sims;
    report.horizon = H;
    report.seed = seed;

    const auto planning = subsample_pointers(ensemble, copt.planner_subsample);
    std::vector<QTable> planning_q(planning.size());
    parallel_for(planning.size(), [&](std::size_t i) {
        planning_q[i] = q_value_iteration(*planning[i], model);
    });

    auto eval = [&](const std::string& name, const AgentFactory& factory) {
        report.rows.push_back(
            {name, evaluate_policy(factory, ensemble, model, n_sims, H, seed, copt.eval)});
    };

    eval("robust_qmdp", [&] {
        return std::make_unique<QmdpAgent>(QmdpPlanner(planning, planning_q));
    });

    const ModelSample mean = mean_sample(ensemble);
    const QTable mean_q = q_value_iteration(mean, model);
    eval("qmdp_posterior_mean", [&] {
        return std::make_unique<QmdpAgent>(QmdpPlanner({&mean}, {mean_q}));
    });

    const std::vector<double> fractions = {0.0, 0.25, 0.5, 0.75, 1.0};
    const auto pct = percentile_samples(ensemble, fractions);
    std::vector<QTable> pct_q(pct.size());
    for (std::size_t i = 0; i < pct.size(); ++i) pct_q[i] = q_value_iteration(pct[i], model);
    for (std::size_t i = 0; i < pct.size(); ++i) {
        const int percent = static_cast<int>(fractions[i] * 100.0);
        eval("qmdp_percentile_" + std::to_string(percent), [&, i] {
            return std::make_unique<QmdpAgent>(QmdpPlanner({&pct[i]}, {pct_q[i]}));
        });
    }

    eval("always_a1", [] { return std::make_unique<FixedActionAgent>(1); });

    if (copt.include_full_obs_mdp) {
        const auto policy = robust_policy(planning_q);
        eval("mdp_robust_full_obs", [&] { return std::make_unique<StatePolicyAgent>(policy); });
    }
    return report;
}

} // namespace railplan
