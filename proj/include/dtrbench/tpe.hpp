#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dtrbench/agents.hpp"
#include "dtrbench/rng.hpp"

namespace dtr {

/// Discrete per-hyperparameter candidate lists. Fixed constants appear as
/// single-choice dimensions so a sampled configuration always carries the
/// full assignment.
struct SearchSpace {
    struct Dimension {
        std::string name;
        std::vector<double> choices;
    };
    std::vector<Dimension> dims;

    bool empty() const { return dims.empty(); }

    long cell_count() const {
        long n = 1;
        for (const auto& d : dims) n *= static_cast<long>(d.choices.size());
        return n;
    }

    int index_of(const std::string& name) const {
        for (std::size_t i = 0; i < dims.size(); ++i)
            if (dims[i].name == name) return static_cast<int>(i);
        return -1;
    }

    /// The published search grid for the discrete value-based agents.
    static SearchSpace dqn_family(Algorithm alg) {
        SearchSpace s;
        s.dims = {
            {"lr", {1e-3, 1e-4, 1e-5, 1e-6}},
            {"batch_size", {128, 256, 512, 1024}},
            {"batch_norm", {1, 0}},
            {"dropout", {0.0, 0.25, 0.5}},
            {"target_update_freq", {1, 1000, 5000}},
            {"update_per_step", {0.1, 0.5}},
            {"step_per_collect", {50, 100}},
            {"exploration_noise", {0.1, 0.2, 0.5}},
            {"estimation_step", {1}},
            {"gamma", {0.95}},
            {"tau", {0.001}},
            {"eps_test", {0.005}},
            {"eps_train_start", {1.0}},
            {"eps_train_end", {0.005}},
        };
        if (alg == Algorithm::kC51) {
            s.dims.push_back({"v_min", {-20, -10, -5}});
            s.dims.push_back({"v_max", {5, 10, 20}});
            s.dims.push_back({"atoms", {51}});
        }
        return s;
    }
};

/// One point on the grid: a choice index per dimension.
struct SearchPoint {
    std::vector<int> idx;
    bool operator==(const SearchPoint&) const = default;
    auto operator<=>(const SearchPoint&) const = default;
};

inline std::map<std::string, double> point_values(const SearchSpace& space,
                                                  const SearchPoint& p) {
    std::map<std::string, double> out;
    for (std::size_t d = 0; d < space.dims.size(); ++d)
        out[space.dims[d].name] = space.dims[d].choices[p.idx[d]];
    return out;
}

/// Applies a sampled assignment on top of default hyperparameters.
inline AgentHyperparams apply_point(const SearchSpace& space, const SearchPoint& p,
                                    AgentHyperparams base = {}) {
    const auto v = point_values(space, p);
    auto get = [&v](const std::string& k, double fallback) {
        auto it = v.find(k);
        return it == v.end() ? fallback : it->second;
    };
    base.lr = get("lr", base.lr);
    base.batch_size = static_cast<int>(get("batch_size", base.batch_size));
    base.batch_norm = get("batch_norm", base.batch_norm ? 1.0 : 0.0) != 0.0;
    base.dropout = get("dropout", base.dropout);
    base.target_update_freq = static_cast<int>(get("target_update_freq", base.target_update_freq));
    base.update_per_step = get("update_per_step", base.update_per_step);
    base.step_per_collect = static_cast<int>(get("step_per_collect", base.step_per_collect));
    base.gamma = get("gamma", base.gamma);
    base.tau = get("tau", base.tau);
    base.epsilon.eps_test = get("eps_test", base.epsilon.eps_test);
    base.epsilon.start = get("eps_train_start", base.epsilon.start);
    base.epsilon.end = get("eps_train_end", base.epsilon.end);
    base.v_min = get("v_min", base.v_min);
    base.v_max = get("v_max", base.v_max);
    base.atoms = static_cast<int>(get("atoms", base.atoms));
    return base;
}

enum class TrialStatus { kComplete, kPruned };

struct TrialRecord {
    SearchPoint point;
    double objective = 0.0; // mean return over the evaluated episodes
    int episodes = 0;       // episode count behind the statistic
    TrialStatus status = TrialStatus::kComplete;
};

/// Tree-structured Parzen estimator specialised to a categorical grid:
/// split the history at the top-quantile, fit per-dimension weighted
/// categorical densities for the good and bad sets, sample candidates from
/// the good density and keep the best likelihood ratio l(x)/g(x).
class TpeOptimizer {
public:
    struct Options {
        int random_trials = 50;
        double good_quantile = 0.25;
        int candidates = 24;
        double prior_weight = 1.0;
    };

    TpeOptimizer(SearchSpace space, Options opt, std::uint64_t seed)
        : space_(std::move(space)), opt_(opt), rng_(seed, kStreamPolicy) {
        if (space_.empty()) throw EnvError("TpeOptimizer: empty search space");
    }

    const SearchSpace& space() const { return space_; }

    SearchPoint suggest(const std::vector<TrialRecord>& history) {
        if (static_cast<int>(history.size()) < opt_.random_trials) return random_point();

        std::vector<const TrialRecord*> sorted;
        sorted.reserve(history.size());
        for (const auto& t : history) sorted.push_back(&t);
        std::stable_sort(sorted.begin(), sorted.end(),
                         [](const TrialRecord* a, const TrialRecord* b) {
                             return a->objective > b->objective;
                         });
        const std::size_t n_good = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::ceil(opt_.good_quantile * sorted.size())));

        // per-dimension weighted categorical Parzen estimators
        std::vector<std::vector<double>> good_w(space_.dims.size()), bad_w(space_.dims.size());
        for (std::size_t d = 0; d < space_.dims.size(); ++d) {
            good_w[d].assign(space_.dims[d].choices.size(), opt_.prior_weight);
            bad_w[d].assign(space_.dims[d].choices.size(), opt_.prior_weight);
        }
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            auto& target = i < n_good ? good_w : bad_w;
            for (std::size_t d = 0; d < space_.dims.size(); ++d)
                target[d][sorted[i]->point.idx[d]] += 1.0;
        }
        for (auto& w : good_w) normalize(w);
        for (auto& w : bad_w) normalize(w);

        SearchPoint best;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < opt_.candidates; ++c) {
            SearchPoint p;
            p.idx.resize(space_.dims.size());
            double score = 0.0;
            for (std::size_t d = 0; d < space_.dims.size(); ++d) {
                p.idx[d] = sample_categorical(good_w[d]);
                score += std::log(good_w[d][p.idx[d]]) - std::log(bad_w[d][p.idx[d]]);
            }
            if (score > best_score) {
                best_score = score;
                best = std::move(p);
            }
        }
        return best;
    }

    SearchPoint random_point() {
        SearchPoint p;
        p.idx.resize(space_.dims.size());
        for (std::size_t d = 0; d < space_.dims.size(); ++d)
            p.idx[d] = rng_.uniform_int(static_cast<int>(space_.dims[d].choices.size()));
        return p;
    }

private:
    static void normalize(std::vector<double>& w) {
        double s = 0.0;
        for (double v : w) s += v;
        for (double& v : w) v /= s;
    }

    int sample_categorical(const std::vector<double>& w) {
        const double u = rng_.uniform();
        double acc = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            acc += w[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(w.size()) - 1;
    }

    SearchSpace space_;
    Options opt_;
    RngStream rng_;
};

struct TuneResult {
    SearchPoint best_point;
    double best_objective = -std::numeric_limits<double>::infinity();
    std::vector<TrialRecord> trials;
};

/// Generic tuning driver: `n_random` uniform trials then up to `n_tpe`
/// guided trials. The objective receives the point plus the running trial
/// history (for pruning rules) and reports the trial's outcome. Identical
/// points are evaluated once and their recorded outcome reused.
inline TuneResult tune_grid(
    const SearchSpace& space, int n_random, int n_tpe, std::uint64_t seed,
    const std::function<TrialRecord(const SearchPoint&, const std::vector<TrialRecord>&)>&
        run_trial) {
    TpeOptimizer::Options opt;
    opt.random_trials = n_random;
    TpeOptimizer tpe(space, opt, seed);
    TuneResult result;
    std::map<SearchPoint, TrialRecord> cache;
    const long budget = std::min<long>(n_random + n_tpe, std::max<long>(space.cell_count(), 1));
    while (static_cast<long>(result.trials.size()) < budget) {
        const SearchPoint p = tpe.suggest(result.trials);
        auto it = cache.find(p);
        TrialRecord rec;
        if (it != cache.end()) {
            rec = it->second;
        } else {
            rec = run_trial(p, result.trials);
            rec.point = p;
            cache[p] = rec;
        }
        result.trials.push_back(rec);
        if (rec.status == TrialStatus::kComplete && rec.objective > result.best_objective) {
            result.best_objective = rec.objective;
            result.best_point = p;
        }
    }
    // fall back to the best observed even if everything was pruned
    if (!std::isfinite(result.best_objective)) {
        for (const auto& t : result.trials) {
            if (t.objective > result.best_objective ||
                !std::isfinite(result.best_objective)) {
                result.best_objective = t.objective;
                result.best_point = t.point;
            }
        }
    }
    return result;
}

} // namespace dtr
