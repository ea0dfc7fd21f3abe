#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dtrbench/ahn_chemo.hpp"
#include "dtrbench/ghaffari_cancer.hpp"
#include "dtrbench/oberst_sepsis.hpp"
#include "dtrbench/realism.hpp"
#include "dtrbench/sim_glucose.hpp"

namespace dtr {

inline const std::vector<std::string>& env_names() {
    static const std::vector<std::string> names = {"AhnChemoEnv", "GhaffariCancerEnv",
                                                   "OberstSepsisEnv", "SimGlucoseEnv"};
    return names;
}

inline std::unique_ptr<Environment> make_env(const std::string& name) {
    if (name == "AhnChemoEnv") return std::make_unique<AhnChemoEnv>();
    if (name == "GhaffariCancerEnv") return std::make_unique<GhaffariCancerEnv>();
    if (name == "OberstSepsisEnv") return std::make_unique<OberstSepsisEnv>();
    if (name == "SimGlucoseEnv") return std::make_unique<SimGlucoseEnv>();
    throw EnvError("unknown environment '" + name + "'");
}

/// Environment wrapped into a benchmark setting.
inline std::unique_ptr<Environment> make_env(const std::string& name,
                                             const RealismConfig& config) {
    return std::make_unique<RealismWrapper>(make_env(name), config);
}

/// Learnable algorithms plus the baseline policies recognised by the CLI.
inline const std::vector<std::string>& algorithm_names() {
    static const std::vector<std::string> names = {"DQN", "DDQN", "DDQN-duel", "C51",
                                                   "tabular-q"};
    return names;
}

inline const std::vector<std::string>& policy_names() {
    static const std::vector<std::string> names = {"DQN",  "DDQN",      "DDQN-duel",
                                                   "C51",  "tabular-q", "random",
                                                   "zero-drug", "max-drug", "baselines"};
    return names;
}

inline bool is_baseline_name(const std::string& name) {
    return name == "random" || name == "zero-drug" || name == "max-drug" || name == "baselines";
}

inline BaselineKind parse_baseline(const std::string& name) {
    if (name == "random") return BaselineKind::kRandom;
    if (name == "zero-drug") return BaselineKind::kZeroDrug;
    if (name == "max-drug") return BaselineKind::kMaxDrug;
    throw EnvError("unknown baseline '" + name + "'");
}

} // namespace dtr
