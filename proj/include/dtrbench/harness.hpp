#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dtrbench/agents.hpp"
#include "dtrbench/core.hpp"
#include "dtrbench/realism.hpp"
#include "dtrbench/tpe.hpp"
#include "dtrbench/trainer.hpp"

namespace dtr {

using EnvFactory = std::function<std::unique_ptr<Environment>()>;
using PolicyForSeed = std::function<std::unique_ptr<Policy>(std::uint64_t)>;

struct EpisodeOutcome {
    double episode_return = 0.0;
    long steps = 0;
    bool terminated = false;
    double sq_err_sum = 0.0; // normalised observation-vs-state squared error
    long sq_err_count = 0;
};

/// Index of each observation component inside the state snapshot, matched
/// by name. Used for observation-fidelity diagnostics.
inline std::vector<int> observation_state_map(const Environment& env) {
    const auto names = env.state_names();
    std::vector<int> map(env.spec().observation_dim, -1);
    for (int i = 0; i < env.spec().observation_dim; ++i) {
        const std::string& want = env.spec().components[i].name;
        for (std::size_t j = 0; j < names.size(); ++j)
            if (names[j] == want) map[i] = static_cast<int>(j);
    }
    return map;
}

/// Runs one greedy-epsilon episode. Optionally records the full trajectory
/// (time, observation, action, reward, hidden state per step).
inline EpisodeOutcome run_episode(Environment& env, Policy& policy, std::uint64_t episode_seed,
                                  double eps, Trajectory* record = nullptr) {
    RngStream policy_rng(episode_seed, kStreamPolicy);
    const auto state_map = observation_state_map(env);
    Observation obs = env.reset(episode_seed);
    EpisodeOutcome out;
    if (record) {
        record->episode_id = episode_seed;
        record->steps.clear();
        record->terminated = false;
        record->total_return = 0.0;
    }
    while (true) {
        const int action = policy.act(obs, eps, policy_rng);
        const double t = env.elapsed_time();
        const StepResult r = env.step(action);
        out.episode_return += r.reward;
        ++out.steps;
        const auto state = env.state_snapshot();
        // fidelity: compare the newly emitted observation with the new state
        for (int i = 0; i < r.observation.dim(); ++i) {
            if (state_map[i] < 0) continue;
            const ComponentSpec& c = env.spec().components[i];
            const double span = c.hi - c.lo > 0 ? c.hi - c.lo : 1.0;
            const double d = (r.observation.values[i] - state[state_map[i]]) / span;
            out.sq_err_sum += d * d;
            ++out.sq_err_count;
        }
        if (record) {
            TrajectoryStep step;
            step.time = t;
            step.observation = obs.values;
            step.presence = obs.presence;
            step.action = action;
            step.action_values = env.action_values(action);
            step.reward = r.reward;
            step.state = state;
            record->steps.push_back(std::move(step));
            record->total_return += r.reward;
        }
        obs = r.observation;
        if (r.terminated || r.truncated) {
            out.terminated = r.terminated;
            if (record) record->terminated = r.terminated;
            break;
        }
    }
    return out;
}

struct EvalOptions {
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    long episodes_per_seed = 5000;
    double eps_test = 0.005;
    int threads = 1;
    bool keep_returns = false;
    bool keep_episodes = false; // per-episode summary rows
};

struct EpisodeRow {
    long index = 0;
    std::uint64_t seed = 0;
    std::uint64_t episode_seed = 0;
    double episode_return = 0.0;
    long steps = 0;
    bool terminated = false;
};

struct EvalReport {
    std::string env_name;
    std::string setting;
    std::string algorithm;
    std::vector<std::uint64_t> seeds;
    std::vector<double> per_seed_mean;
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation over the pooled episodes
    long episodes = 0;
    double obs_state_mse = 0.0;
    double terminal_rate = 0.0;
    std::vector<double> returns; // pooled, in (seed, episode) order when kept
    std::vector<EpisodeRow> episode_rows;
};

/// Evaluates one policy per seed over `episodes_per_seed` greedy-epsilon
/// episodes each and pools the statistics. Per-seed blocks may run on
/// separate threads; per-episode seeds are pre-assigned, so the result is
/// identical to the serial run.
inline EvalReport evaluate(const PolicyForSeed& policy_for_seed, const EnvFactory& make_env,
                           const EvalOptions& opt) {
    EvalReport report;
    report.seeds = opt.seeds;
    const std::size_t S = opt.seeds.size();
    std::vector<std::vector<double>> returns(S);
    std::vector<std::vector<EpisodeRow>> rows(S);
    std::vector<double> sq_err(S, 0.0);
    std::vector<long> sq_cnt(S, 0), terminals(S, 0);

    auto run_seed = [&](std::size_t si) {
        auto env = make_env();
        auto policy = policy_for_seed(opt.seeds[si]);
        returns[si].resize(opt.episodes_per_seed);
        if (opt.keep_episodes) rows[si].resize(opt.episodes_per_seed);
        for (long e = 0; e < opt.episodes_per_seed; ++e) {
            const std::uint64_t episode_seed = derive_seed(opt.seeds[si], static_cast<std::uint64_t>(e));
            const EpisodeOutcome o = run_episode(*env, *policy, episode_seed, opt.eps_test);
            returns[si][e] = o.episode_return;
            sq_err[si] += o.sq_err_sum;
            sq_cnt[si] += o.sq_err_count;
            terminals[si] += o.terminated;
            if (opt.keep_episodes)
                rows[si][e] = {e, opt.seeds[si], episode_seed, o.episode_return, o.steps,
                               o.terminated};
        }
    };

    if (opt.threads > 1 && S > 1) {
        std::vector<std::thread> pool;
        for (std::size_t si = 0; si < S; ++si) pool.emplace_back(run_seed, si);
        for (auto& t : pool) t.join();
    } else {
        for (std::size_t si = 0; si < S; ++si) run_seed(si);
    }

    double sum = 0.0;
    long n = 0, term = 0;
    double err = 0.0;
    long errn = 0;
    for (std::size_t si = 0; si < S; ++si) {
        double s = 0.0;
        for (double r : returns[si]) s += r;
        report.per_seed_mean.push_back(returns[si].empty() ? 0.0 : s / returns[si].size());
        sum += s;
        n += static_cast<long>(returns[si].size());
        err += sq_err[si];
        errn += sq_cnt[si];
        term += terminals[si];
    }
    report.episodes = n;
    report.mean = n > 0 ? sum / n : 0.0;
    double ss = 0.0;
    for (std::size_t si = 0; si < S; ++si)
        for (double r : returns[si]) ss += (r - report.mean) * (r - report.mean);
    report.stddev = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    report.obs_state_mse = errn > 0 ? err / errn : 0.0;
    report.terminal_rate = n > 0 ? static_cast<double>(term) / n : 0.0;
    if (opt.keep_returns) {
        for (std::size_t si = 0; si < S; ++si)
            report.returns.insert(report.returns.end(), returns[si].begin(), returns[si].end());
    }
    if (opt.keep_episodes) {
        long idx = 0;
        for (std::size_t si = 0; si < S; ++si)
            for (auto& r : rows[si]) {
                r.index = idx++;
                report.episode_rows.push_back(r);
            }
    }
    return report;
}

struct BaselineSweep {
    EvalReport random;
    EvalReport zero_drug;
    EvalReport max_drug;
    BaselineKind best = BaselineKind::kRandom;

    const EvalReport& best_report() const {
        switch (best) {
            case BaselineKind::kZeroDrug: return zero_drug;
            case BaselineKind::kMaxDrug: return max_drug;
            default: return random;
        }
    }
};

/// Evaluates the three baseline policies identically; pi_b is the best
/// pooled mean among them.
inline BaselineSweep evaluate_baselines(const EnvFactory& make_env, const EvalOptions& opt) {
    BaselineSweep sweep;
    auto eval_kind = [&](BaselineKind kind) {
        auto factory = [&make_env, kind](std::uint64_t) {
            auto env = make_env();
            return baseline_policy(kind, env->spec());
        };
        EvalReport r = evaluate(factory, make_env, opt);
        r.algorithm = baseline_name(kind);
        return r;
    };
    sweep.random = eval_kind(BaselineKind::kRandom);
    sweep.zero_drug = eval_kind(BaselineKind::kZeroDrug);
    sweep.max_drug = eval_kind(BaselineKind::kMaxDrug);
    sweep.best = BaselineKind::kRandom;
    if (sweep.zero_drug.mean > sweep.best_report().mean) sweep.best = BaselineKind::kZeroDrug;
    if (sweep.max_drug.mean > sweep.best_report().mean) sweep.best = BaselineKind::kMaxDrug;
    return sweep;
}

// ---------------------------------------------------------------------------
// tuning workflow
// ---------------------------------------------------------------------------

struct TuneOptions {
    int random_trials = 50;
    int tpe_trials = 50;
    std::uint64_t tuning_seed = 0; // the single fixed seed for every trial
    long train_env_steps = 100000;
    long tuning_episodes = 100;  // per-trial evaluation budget
    long interim_episodes = 50;  // pruning checkpoint
    AgentHyperparams base;
};

/// The tuning objective for one hyperparameter assignment: train with the
/// fixed tuning seed, evaluate `tuning_episodes` greedy episodes, prune at
/// the interim checkpoint when below the median of completed trials.
inline TrialRecord run_tuning_trial(Algorithm alg, const EnvFactory& make_env,
                                    const SearchSpace& space, const SearchPoint& point,
                                    const TuneOptions& opt,
                                    const std::vector<TrialRecord>& history) {
    AgentHyperparams hp = apply_point(space, point, opt.base);
    hp.epsilon.decay_steps = std::max<long>(1, opt.train_env_steps / 2);
    auto env = make_env();
    QAgent agent(alg, env->spec(), hp, opt.tuning_seed);
    train_agent(agent, *env, opt.train_env_steps, opt.tuning_seed);

    // current median of completed trials, for the pruning rule
    std::vector<double> completed;
    for (const auto& t : history)
        if (t.status == TrialStatus::kComplete) completed.push_back(t.objective);
    std::optional<double> median;
    if (!completed.empty()) {
        std::sort(completed.begin(), completed.end());
        median = completed[completed.size() / 2];
    }

    TrialRecord rec;
    rec.point = point;
    double sum = 0.0;
    long done = 0;
    for (long e = 0; e < opt.tuning_episodes; ++e) {
        const std::uint64_t episode_seed = derive_seed(opt.tuning_seed, 0xE000 + e);
        sum += run_episode(*env, agent, episode_seed, hp.epsilon.eps_test).episode_return;
        ++done;
        if (median && done == opt.interim_episodes && sum / done < *median) {
            rec.status = TrialStatus::kPruned;
            break;
        }
    }
    rec.objective = done > 0 ? sum / done : 0.0;
    rec.episodes = static_cast<int>(done);
    return rec;
}

struct AlgorithmTuneResult {
    SearchPoint best_point;
    AgentHyperparams best_hyperparams;
    std::vector<TrialRecord> trials;
    double best_objective = 0.0;
};

/// The full tuning step: 50 random trials then up to 50 TPE trials, one
/// fixed seed throughout.
inline AlgorithmTuneResult tune(Algorithm alg, const EnvFactory& make_env,
                                const TuneOptions& opt) {
    const SearchSpace space = SearchSpace::dqn_family(alg);
    auto runner = [&](const SearchPoint& p, const std::vector<TrialRecord>& history) {
        return run_tuning_trial(alg, make_env, space, p, opt, history);
    };
    const TuneResult inner =
        tune_grid(space, opt.random_trials, opt.tpe_trials, opt.tuning_seed, runner);
    AlgorithmTuneResult out;
    out.best_point = inner.best_point;
    out.best_hyperparams = apply_point(space, inner.best_point, opt.base);
    out.trials = std::move(inner.trials);
    out.best_objective = inner.best_objective;
    return out;
}

} // namespace dtr
