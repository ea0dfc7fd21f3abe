#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "dtrbench/core.hpp"
#include "dtrbench/nn.hpp"
#include "dtrbench/rng.hpp"

namespace dtr {

enum class Algorithm { kDqn, kDdqn, kDuel, kC51 };

inline std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::kDqn: return "DQN";
        case Algorithm::kDdqn: return "DDQN";
        case Algorithm::kDuel: return "DDQN-duel";
        case Algorithm::kC51: return "C51";
    }
    return "DQN";
}

inline Algorithm parse_algorithm(const std::string& name) {
    if (name == "DQN") return Algorithm::kDqn;
    if (name == "DDQN") return Algorithm::kDdqn;
    if (name == "DDQN-duel" || name == "Dueling") return Algorithm::kDuel;
    if (name == "C51") return Algorithm::kC51;
    throw EnvError("unknown algorithm '" + name + "'");
}

/// Agent input: observation values normalised by their declared ranges,
/// followed by the presence flags so policies can condition on missingness.
inline std::vector<double> featurize(const Observation& obs, const EnvSpec& spec) {
    std::vector<double> x(2 * obs.dim());
    for (int i = 0; i < obs.dim(); ++i) {
        const ComponentSpec& c = spec.components[i];
        const double span = c.hi - c.lo;
        x[i] = span > 0.0 ? (obs.values[i] - c.lo) / span : obs.values[i];
        x[obs.dim() + i] = obs.presence[i];
    }
    return x;
}

inline int feature_dim(const EnvSpec& spec) { return 2 * spec.observation_dim; }

// ---------------------------------------------------------------------------
// replay buffer
// ---------------------------------------------------------------------------

struct Transition {
    std::vector<double> obs;
    int action = 0;
    double reward = 0.0;
    std::vector<double> next_obs;
    bool terminated = false;
    bool truncated = false;
};

/// Fixed-capacity ring of transitions with uniform without-replacement
/// sampling inside each batch.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }

    void push(Transition t) {
        if (data_.size() < capacity_) {
            perm_.push_back(data_.size());
            data_.push_back(std::move(t));
        } else {
            data_[head_] = std::move(t);
            head_ = (head_ + 1) % capacity_;
        }
    }

    /// Draws min(batch, size) distinct transitions uniformly.
    std::vector<const Transition*> sample(std::size_t batch, RngStream& rng) {
        const std::size_t k = std::min(batch, data_.size());
        std::vector<const Transition*> out(k);
        // partial Fisher-Yates over a persistent index permutation
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(
                                          rng.uniform_int(static_cast<int>(perm_.size() - i)));
            std::swap(perm_[i], perm_[j]);
            out[i] = &data_[perm_[i]];
        }
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<Transition> data_;
    std::vector<std::size_t> perm_;
};

// ---------------------------------------------------------------------------
// exploration
// ---------------------------------------------------------------------------

/// Linear epsilon decay from `start` to `end` over `decay_steps` env steps.
struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.005;
    long decay_steps = 100000;
    double eps_test = 0.005;

    double at(long env_step) const {
        if (decay_steps <= 0 || env_step >= decay_steps) return end;
        const double frac = static_cast<double>(env_step) / static_cast<double>(decay_steps);
        return start + (end - start) * frac;
    }
};

/// Greedy argmax with ties broken toward the lowest index.
inline int greedy_action(std::span<const double> q) {
    int best = 0;
    for (int a = 1; a < static_cast<int>(q.size()); ++a)
        if (q[a] > q[best]) best = a;
    return best;
}

inline int epsilon_greedy(std::span<const double> q, double eps, RngStream& rng) {
    if (eps > 0.0 && rng.bernoulli(eps)) return rng.uniform_int(static_cast<int>(q.size()));
    return greedy_action(q);
}

// ---------------------------------------------------------------------------
// value targets
// ---------------------------------------------------------------------------

/// y = r + gamma * max_a' Q_target(s', a'); the bootstrap is dropped on
/// termination and kept on truncation.
inline double dqn_target(double reward, bool terminated, std::span<const double> next_q_target,
                         double gamma) {
    if (terminated) return reward;
    double best = next_q_target[0];
    for (double v : next_q_target) best = std::max(best, v);
    return reward + gamma * best;
}

/// y = r + gamma * Q_target(s', argmax_a' Q_online(s', a')).
inline double ddqn_target(double reward, bool terminated, std::span<const double> next_q_online,
                          std::span<const double> next_q_target, double gamma) {
    if (terminated) return reward;
    return reward + gamma * next_q_target[greedy_action(next_q_online)];
}

/// Q(s,a) = V + A(s,a) - mean_a' A(s,a').
inline std::vector<double> dueling_combine(double value, std::span<const double> advantages) {
    double mean = 0.0;
    for (double a : advantages) mean += a;
    mean /= static_cast<double>(advantages.size());
    std::vector<double> q(advantages.size());
    for (std::size_t a = 0; a < advantages.size(); ++a) q[a] = value + advantages[a] - mean;
    return q;
}

/// Distributional Bellman projection: each atom z_j maps to
/// clamp(r + gamma*z_j, v_min, v_max) and its mass splits linearly between
/// the two neighbouring atoms. Output sums to the input mass.
inline std::vector<double> c51_project(std::span<const double> next_dist, double reward,
                                       double gamma, std::span<const double> support) {
    const int n = static_cast<int>(support.size());
    const double vmin = support.front(), vmax = support.back();
    const double dz = (vmax - vmin) / static_cast<double>(n - 1);
    std::vector<double> m(n, 0.0);
    for (int j = 0; j < n; ++j) {
        const double tz = std::clamp(reward + gamma * support[j], vmin, vmax);
        const double b = (tz - vmin) / dz;
        const int lo = static_cast<int>(std::floor(b));
        const int hi = static_cast<int>(std::ceil(b));
        if (lo == hi) {
            m[lo] += next_dist[j];
        } else {
            m[lo] += next_dist[j] * (hi - b);
            m[hi] += next_dist[j] * (b - lo);
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// policies
// ---------------------------------------------------------------------------

/// Anything that maps observations to action indices. `eps` is the caller's
/// exploration rate (training schedule or eps_test).
class Policy {
public:
    virtual ~Policy() = default;
    virtual int act(const Observation& obs, double eps, RngStream& rng) = 0;
    virtual std::unique_ptr<Policy> clone() const = 0;
};

enum class BaselineKind { kRandom, kZeroDrug, kMaxDrug };

inline std::string baseline_name(BaselineKind k) {
    switch (k) {
        case BaselineKind::kRandom: return "random";
        case BaselineKind::kZeroDrug: return "zero-drug";
        case BaselineKind::kMaxDrug: return "max-drug";
    }
    return "random";
}

/// Uniform-random treatment selection each step.
class RandomPolicy : public Policy {
public:
    explicit RandomPolicy(int action_count) : actions_(action_count) {}
    int act(const Observation&, double, RngStream& rng) override {
        return rng.uniform_int(actions_);
    }
    std::unique_ptr<Policy> clone() const override { return std::make_unique<RandomPolicy>(*this); }

private:
    int actions_;
};

/// Constant action. Every environment maps index 0 to "no treatment" and
/// index action_count-1 to "maximum treatment", so the zero-drug and
/// max-drug baselines are the two grid endpoints.
class FixedActionPolicy : public Policy {
public:
    explicit FixedActionPolicy(int action) : action_(action) {}
    int act(const Observation&, double, RngStream&) override { return action_; }
    std::unique_ptr<Policy> clone() const override {
        return std::make_unique<FixedActionPolicy>(*this);
    }

private:
    int action_;
};

inline std::unique_ptr<Policy> baseline_policy(BaselineKind kind, const EnvSpec& spec) {
    switch (kind) {
        case BaselineKind::kRandom: return std::make_unique<RandomPolicy>(spec.action_count);
        case BaselineKind::kZeroDrug: return std::make_unique<FixedActionPolicy>(0);
        case BaselineKind::kMaxDrug:
            return std::make_unique<FixedActionPolicy>(spec.action_count - 1);
    }
    throw EnvError("unknown baseline kind");
}

// ---------------------------------------------------------------------------
// tabular Q-learning (finite-observation oracle learner)
// ---------------------------------------------------------------------------

/// Integer key for a fully categorical observation (all components ordinal).
inline long observation_key(const Observation& obs, const EnvSpec& spec) {
    long key = 0;
    for (int i = 0; i < obs.dim(); ++i) {
        const ComponentSpec& c = spec.components[i];
        if (c.levels <= 0) throw EnvError("observation_key: component " + c.name + " not ordinal");
        const int level = static_cast<int>(std::lround(obs.values[i] * (c.levels - 1)));
        key = key * c.levels + std::clamp(level, 0, c.levels - 1);
    }
    return key;
}

/// Q(s,a) += alpha * [r + gamma * max_a' Q(s',a') * (1-terminated) - Q(s,a)].
inline void tabular_q_update(std::unordered_map<long, std::vector<double>>& table, int actions,
                             long key, int action, double reward, long next_key, bool terminated,
                             double alpha, double gamma) {
    auto& q = table.try_emplace(key, std::vector<double>(actions, 0.0)).first->second;
    double bootstrap = 0.0;
    if (!terminated) {
        auto it = table.find(next_key);
        if (it != table.end()) {
            bootstrap = *std::max_element(it->second.begin(), it->second.end());
        }
    }
    q[action] += alpha * (reward + gamma * bootstrap - q[action]);
}

class TabularQPolicy : public Policy {
public:
    TabularQPolicy(const EnvSpec& spec, double alpha = 0.1, double gamma = kDiscount)
        : spec_(spec), alpha_(alpha), gamma_(gamma), zeros_(spec.action_count, 0.0) {}

    int act(const Observation& obs, double eps, RngStream& rng) override {
        return epsilon_greedy(q_values(observation_key(obs, spec_)), eps, rng);
    }

    std::unique_ptr<Policy> clone() const override {
        return std::make_unique<TabularQPolicy>(*this);
    }

    void update(const Observation& obs, int action, double reward, const Observation& next,
                bool terminated) {
        tabular_q_update(table_, spec_.action_count, observation_key(obs, spec_), action, reward,
                         observation_key(next, spec_), terminated, alpha_, gamma_);
    }

    std::span<const double> q_values(long key) const {
        auto it = table_.find(key);
        return it == table_.end() ? std::span<const double>(zeros_)
                                  : std::span<const double>(it->second);
    }

    std::size_t table_size() const { return table_.size(); }
    double alpha() const { return alpha_; }

private:
    EnvSpec spec_;
    double alpha_;
    double gamma_;
    std::vector<double> zeros_;
    std::unordered_map<long, std::vector<double>> table_;
};

// ---------------------------------------------------------------------------
// deep value-based agent (DQN / DDQN / DDQN-duel / C51)
// ---------------------------------------------------------------------------

struct AgentHyperparams {
    double lr = 1e-3;
    int batch_size = 128;
    bool batch_norm = false;
    double dropout = 0.0;
    int target_update_freq = 1000; // gradient steps between hard copies; 1 = soft update
    double update_per_step = 0.1;
    int step_per_collect = 50;
    double gamma = kDiscount;
    double tau = 0.001;
    EpsilonSchedule epsilon;
    int hidden_width = 128;
    int hidden_depth = 2;
    double v_min = -10.0;
    double v_max = 10.0;
    int atoms = 51;
    int replay_capacity = 100000;
    int warmup_steps = 1000; // env steps collected before updates start
    double grad_clip = 10.0;
    bool use_squared_loss = false; // Huber by default
};

class QAgent : public Policy {
public:
    QAgent(Algorithm alg, const EnvSpec& spec, AgentHyperparams hp, std::uint64_t seed)
        : alg_(alg), spec_(spec), hp_(hp), dropout_rng_(seed, kStreamDropout) {
        MlpConfig cfg;
        cfg.sizes.push_back(feature_dim(spec));
        for (int i = 0; i < hp_.hidden_depth; ++i) cfg.sizes.push_back(hp_.hidden_width);
        cfg.sizes.push_back(output_dim());
        cfg.batch_norm = hp_.batch_norm;
        cfg.dropout = hp_.dropout;
        RngStream init_rng(seed, kStreamNetInit);
        online_ = Mlp(cfg, init_rng);
        target_ = online_;
        opt_.lr = hp_.lr;
        if (alg_ == Algorithm::kC51) {
            support_.resize(hp_.atoms);
            for (int i = 0; i < hp_.atoms; ++i)
                support_[i] = hp_.v_min + (hp_.v_max - hp_.v_min) * i / (hp_.atoms - 1);
        }
    }

    Algorithm algorithm() const { return alg_; }
    const AgentHyperparams& hyperparams() const { return hp_; }
    const EnvSpec& env_spec() const { return spec_; }
    Mlp& online_net() { return online_; }
    const Mlp& online_net() const { return online_; }
    Mlp& target_net() { return target_; }
    long gradient_steps() const { return grad_steps_; }
    std::span<const double> support() const { return support_; }

    int act(const Observation& obs, double eps, RngStream& rng) override {
        const std::vector<double> x = featurize(obs, spec_);
        const std::vector<double> q = q_values_from_net(online_, x);
        return epsilon_greedy(q, eps, rng);
    }

    std::unique_ptr<Policy> clone() const override { return std::make_unique<QAgent>(*this); }

    /// Action values for one featurized input (inference mode).
    std::vector<double> q_values(std::span<const double> x) {
        return q_values_from_net(online_, x);
    }

    /// One gradient step on a sampled batch; returns the mean loss.
    double train_batch(std::span<const Transition* const> batch) {
        if (batch.empty()) return 0.0;
        const int B = static_cast<int>(batch.size());
        const int in = online_.input_dim();
        std::vector<double> X(B * in), Xn(B * in);
        for (int n = 0; n < B; ++n) {
            std::copy(batch[n]->obs.begin(), batch[n]->obs.end(), X.begin() + n * in);
            std::copy(batch[n]->next_obs.begin(), batch[n]->next_obs.end(), Xn.begin() + n * in);
        }
        double loss = alg_ == Algorithm::kC51 ? c51_loss_and_grad(batch, X, Xn)
                                              : td_loss_and_grad(batch, X, Xn);
        clip_grad_norm(grad_, hp_.grad_clip);
        adam_step(online_.parameters(), grad_, opt_);
        ++grad_steps_;
        if (hp_.target_update_freq <= 1) {
            polyak_update(target_, online_, hp_.tau);
        } else if (grad_steps_ % hp_.target_update_freq == 0) {
            polyak_update(target_, online_, 1.0);
        }
        return loss;
    }

    void save(const std::string& path) const { online_.save(path); }
    void load_weights(const std::string& path) {
        online_ = Mlp::load(path);
        target_ = online_;
    }

private:
    int output_dim() const {
        switch (alg_) {
            case Algorithm::kDuel: return 1 + spec_.action_count;
            case Algorithm::kC51: return spec_.action_count * hp_.atoms;
            default: return spec_.action_count;
        }
    }

    /// Head decoding: raw network output -> one Q value per action.
    std::vector<double> decode_q(std::span<const double> out) const {
        switch (alg_) {
            case Algorithm::kDuel:
                return dueling_combine(out[0], out.subspan(1));
            case Algorithm::kC51: {
                std::vector<double> q(spec_.action_count, 0.0);
                for (int a = 0; a < spec_.action_count; ++a) {
                    const std::vector<double> p = softmax(out.subspan(a * hp_.atoms, hp_.atoms));
                    for (int j = 0; j < hp_.atoms; ++j) q[a] += p[j] * support_[j];
                }
                return q;
            }
            default:
                return std::vector<double>(out.begin(), out.end());
        }
    }

    std::vector<double> q_values_from_net(Mlp& net, std::span<const double> x) {
        const std::vector<double> out = net.forward(x, 1, false, nullptr);
        return decode_q(out);
    }

    static std::vector<double> softmax(std::span<const double> logits) {
        double mx = logits[0];
        for (double v : logits) mx = std::max(mx, v);
        std::vector<double> p(logits.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] = std::exp(logits[i] - mx);
            sum += p[i];
        }
        for (double& v : p) v /= sum;
        return p;
    }

    /// DQN / DDQN / dueling: Huber (or squared) regression of the chosen
    /// action's Q toward the bootstrapped target.
    double td_loss_and_grad(std::span<const Transition* const> batch, std::vector<double>& X,
                            std::vector<double>& Xn) {
        const int B = static_cast<int>(batch.size());
        const int out_dim = online_.output_dim();
        // target-side values, inference mode
        std::vector<double> next_target = target_.forward(Xn, B, false, nullptr);
        std::vector<double> next_online;
        if (alg_ != Algorithm::kDqn) next_online = online_.forward(Xn, B, false, nullptr);
        std::vector<double> targets(B);
        for (int n = 0; n < B; ++n) {
            const auto row_t =
                decode_q(std::span<const double>(next_target).subspan(n * out_dim, out_dim));
            if (alg_ == Algorithm::kDqn) {
                targets[n] = dqn_target(batch[n]->reward, batch[n]->terminated, row_t, hp_.gamma);
            } else {
                const auto row_o =
                    decode_q(std::span<const double>(next_online).subspan(n * out_dim, out_dim));
                targets[n] =
                    ddqn_target(batch[n]->reward, batch[n]->terminated, row_o, row_t, hp_.gamma);
            }
        }
        // online forward in training mode, gradient on the chosen action only
        std::vector<double> pred = online_.forward(X, B, true, &dropout_rng_);
        std::vector<double> dY(B * out_dim, 0.0);
        double loss = 0.0;
        for (int n = 0; n < B; ++n) {
            const auto row = std::span<const double>(pred).subspan(n * out_dim, out_dim);
            const std::vector<double> q = decode_q(row);
            const int a = batch[n]->action;
            const auto [l, dl] = hp_.use_squared_loss ? squared_loss(q[a], targets[n])
                                                      : huber_loss(q[a], targets[n]);
            loss += l;
            const double g = dl / B;
            if (alg_ == Algorithm::kDuel) {
                // dQ(a)/dV = 1; dQ(a)/dA(a') = [a==a'] - 1/|A|
                dY[n * out_dim] += g;
                const double inv = 1.0 / spec_.action_count;
                for (int ap = 0; ap < spec_.action_count; ++ap)
                    dY[n * out_dim + 1 + ap] += g * ((ap == a ? 1.0 : 0.0) - inv);
            } else {
                dY[n * out_dim + a] = g;
            }
        }
        online_.backward(dY, grad_);
        return loss / B;
    }

    /// C51: cross-entropy between the projected target distribution and the
    /// predicted distribution of the chosen action.
    double c51_loss_and_grad(std::span<const Transition* const> batch, std::vector<double>& X,
                             std::vector<double>& Xn) {
        const int B = static_cast<int>(batch.size());
        const int out_dim = online_.output_dim();
        const int A = spec_.action_count, Z = hp_.atoms;
        std::vector<double> next_target = target_.forward(Xn, B, false, nullptr);
        std::vector<std::vector<double>> proj(B);
        for (int n = 0; n < B; ++n) {
            const auto row = std::span<const double>(next_target).subspan(n * out_dim, out_dim);
            // greedy next action by expected value under the target net
            int best = 0;
            double best_ev = -1e300;
            std::vector<std::vector<double>> dists(A);
            for (int a = 0; a < A; ++a) {
                dists[a] = softmax(row.subspan(a * Z, Z));
                double ev = 0.0;
                for (int j = 0; j < Z; ++j) ev += dists[a][j] * support_[j];
                if (ev > best_ev) {
                    best_ev = ev;
                    best = a;
                }
            }
            const double gamma_eff = batch[n]->terminated ? 0.0 : hp_.gamma;
            proj[n] = c51_project(dists[best], batch[n]->reward, gamma_eff, support_);
        }
        std::vector<double> pred = online_.forward(X, B, true, &dropout_rng_);
        std::vector<double> dY(B * out_dim, 0.0);
        double loss = 0.0;
        for (int n = 0; n < B; ++n) {
            const int a = batch[n]->action;
            const auto logits =
                std::span<const double>(pred).subspan(n * out_dim + a * Z, Z);
            const std::vector<double> p = softmax(logits);
            for (int j = 0; j < Z; ++j) {
                loss -= proj[n][j] * std::log(std::max(p[j], 1e-12));
                dY[n * out_dim + a * Z + j] = (p[j] - proj[n][j]) / B;
            }
        }
        online_.backward(dY, grad_);
        return loss / B;
    }

    Algorithm alg_;
    EnvSpec spec_;
    AgentHyperparams hp_;
    Mlp online_, target_;
    AdamState opt_;
    std::vector<double> support_;
    std::vector<double> grad_;
    long grad_steps_ = 0;
    RngStream dropout_rng_;
};

} // namespace dtr
