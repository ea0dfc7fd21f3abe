#pragma once

#include <cmath>
#include <vector>

#include "dtrbench/agents.hpp"
#include "dtrbench/core.hpp"

namespace dtr {

struct TrainStats {
    long env_steps = 0;
    long gradient_steps = 0;
    std::vector<double> episode_returns;
    double mean_recent_return(std::size_t window = 50) const {
        if (episode_returns.empty()) return 0.0;
        const std::size_t n = std::min(window, episode_returns.size());
        double s = 0.0;
        for (std::size_t i = episode_returns.size() - n; i < episode_returns.size(); ++i)
            s += episode_returns[i];
        return s / static_cast<double>(n);
    }
};

/// Off-policy training loop for the value-based agents: collect
/// `step_per_collect` environment steps under the epsilon schedule, then run
/// ceil(update_per_step * collected) gradient steps on replay samples.
/// Fully deterministic in `seed`.
inline TrainStats train_agent(QAgent& agent, Environment& env, long total_env_steps,
                              std::uint64_t seed) {
    const AgentHyperparams& hp = agent.hyperparams();
    ReplayBuffer replay(hp.replay_capacity);
    RngStream explore_rng(seed, kStreamPolicy);
    RngStream replay_rng(seed, kStreamReplay);

    TrainStats stats;
    std::uint64_t episode = 0;
    Observation obs = env.reset(derive_seed(seed, episode));
    double ep_return = 0.0;
    while (stats.env_steps < total_env_steps) {
        int collected = 0;
        while (collected < hp.step_per_collect && stats.env_steps < total_env_steps) {
            const double eps = hp.epsilon.at(stats.env_steps);
            const int action = agent.act(obs, eps, explore_rng);
            const StepResult r = env.step(action);
            replay.push({featurize(obs, env.spec()), action, r.reward,
                         featurize(r.observation, env.spec()), r.terminated, r.truncated});
            ep_return += r.reward;
            obs = r.observation;
            ++collected;
            ++stats.env_steps;
            if (r.terminated || r.truncated) {
                stats.episode_returns.push_back(ep_return);
                ep_return = 0.0;
                obs = env.reset(derive_seed(seed, ++episode));
            }
        }
        if (replay.size() >= static_cast<std::size_t>(hp.warmup_steps)) {
            const int updates =
                static_cast<int>(std::ceil(hp.update_per_step * static_cast<double>(collected)));
            for (int u = 0; u < updates; ++u) {
                const auto batch = replay.sample(hp.batch_size, replay_rng);
                agent.train_batch(batch);
                ++stats.gradient_steps;
            }
        }
    }
    return stats;
}

/// Online tabular Q-learning (no replay); one update per environment step.
inline TrainStats train_tabular(TabularQPolicy& policy, Environment& env, long total_env_steps,
                                std::uint64_t seed, const EpsilonSchedule& schedule = {}) {
    RngStream explore_rng(seed, kStreamPolicy);
    TrainStats stats;
    std::uint64_t episode = 0;
    Observation obs = env.reset(derive_seed(seed, episode));
    double ep_return = 0.0;
    while (stats.env_steps < total_env_steps) {
        const double eps = schedule.at(stats.env_steps);
        const int action = policy.act(obs, eps, explore_rng);
        const StepResult r = env.step(action);
        policy.update(obs, action, r.reward, r.observation, r.terminated);
        ep_return += r.reward;
        obs = r.observation;
        ++stats.env_steps;
        if (r.terminated || r.truncated) {
            stats.episode_returns.push_back(ep_return);
            ep_return = 0.0;
            obs = env.reset(derive_seed(seed, ++episode));
        }
    }
    return stats;
}

} // namespace dtr
