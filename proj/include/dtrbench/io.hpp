#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtrbench/agents.hpp"
#include "dtrbench/core.hpp"
#include "dtrbench/harness.hpp"
#include "dtrbench/realism.hpp"

namespace dtr {

inline constexpr const char* kVersion = "0.1.0";

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Shortest decimal string that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc()) throw IoError("cannot parse number '" + std::string(s) + "'");
    return v;
}

namespace detail {
inline std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, delim)) out.push_back(cur);
    return out;
}
} // namespace detail

// ---------------------------------------------------------------------------
// trajectories
// ---------------------------------------------------------------------------

/// Column names of the trajectory table for an environment.
inline std::vector<std::string> trajectory_columns(const Environment& env) {
    std::vector<std::string> cols{"t"};
    for (const auto& c : env.spec().components) cols.push_back("obs." + c.name);
    for (const auto& c : env.spec().components) cols.push_back("pres." + c.name);
    cols.push_back("action");
    for (const auto& n : env.action_value_names()) cols.push_back("act." + n);
    cols.push_back("reward");
    for (const auto& n : env.state_names()) cols.push_back("s." + n);
    return cols;
}

/// One step per line, comma-separated, header first. Values persist with
/// shortest round-trip precision.
inline void persist_trajectory(const Trajectory& traj, const std::vector<std::string>& columns,
                               const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open trajectory file for writing: " + path);
    f << "# episode=" << traj.episode_id << " terminated=" << (traj.terminated ? 1 : 0)
      << " return=" << format_double(traj.total_return) << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) f << (i ? "," : "") << columns[i];
    f << "\n";
    for (const auto& s : traj.steps) {
        f << format_double(s.time);
        for (double v : s.observation) f << ',' << format_double(v);
        for (double v : s.presence) f << ',' << format_double(v);
        f << ',' << s.action;
        for (double v : s.action_values) f << ',' << format_double(v);
        f << ',' << format_double(s.reward);
        for (double v : s.state) f << ',' << format_double(v);
        f << "\n";
    }
    if (!f) throw IoError("failed writing trajectory file: " + path);
}

struct LoadedTrajectory {
    Trajectory trajectory;
    std::vector<std::string> columns;
};

inline LoadedTrajectory load_trajectory(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open trajectory file: " + path);
    LoadedTrajectory out;
    std::string line;
    if (!std::getline(f, line) || line.rfind("# episode=", 0) != 0)
        throw IoError("missing trajectory preamble in " + path);
    {
        std::stringstream ss(line.substr(2));
        std::string kv;
        while (ss >> kv) {
            const auto eq = kv.find('=');
            const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
            if (key == "episode") out.trajectory.episode_id = std::stoull(val);
            if (key == "terminated") out.trajectory.terminated = val == "1";
            if (key == "return") out.trajectory.total_return = parse_double(val);
        }
    }
    if (!std::getline(f, line)) throw IoError("missing trajectory header in " + path);
    out.columns = detail::split(line, ',');
    int n_obs = 0, n_pres = 0, n_act = 0, n_state = 0;
    for (const auto& c : out.columns) {
        if (c.rfind("obs.", 0) == 0) ++n_obs;
        else if (c.rfind("pres.", 0) == 0) ++n_pres;
        else if (c.rfind("act.", 0) == 0) ++n_act;
        else if (c.rfind("s.", 0) == 0) ++n_state;
    }
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split(line, ',');
        if (cells.size() != out.columns.size())
            throw IoError("ragged trajectory row in " + path);
        TrajectoryStep s;
        int i = 0;
        s.time = parse_double(cells[i++]);
        for (int k = 0; k < n_obs; ++k) s.observation.push_back(parse_double(cells[i++]));
        for (int k = 0; k < n_pres; ++k) s.presence.push_back(parse_double(cells[i++]));
        s.action = static_cast<int>(parse_double(cells[i++]));
        for (int k = 0; k < n_act; ++k) s.action_values.push_back(parse_double(cells[i++]));
        s.reward = parse_double(cells[i++]);
        for (int k = 0; k < n_state; ++k) s.state.push_back(parse_double(cells[i++]));
        out.trajectory.steps.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// episode summaries and result tables
// ---------------------------------------------------------------------------

struct EpisodeSummary {
    long index = 0;
    std::uint64_t seed = 0;
    std::uint64_t episode_seed = 0;
    double episode_return = 0.0;
    long steps = 0;
    bool terminated = false;
};

inline void write_episode_summaries(const std::vector<EpisodeSummary>& rows,
                                    const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open episodes file for writing: " + path);
    f << "episode,seed,episode_seed,return,steps,terminated\n";
    for (const auto& r : rows)
        f << r.index << ',' << r.seed << ',' << r.episode_seed << ','
          << format_double(r.episode_return) << ',' << r.steps << ',' << (r.terminated ? 1 : 0)
          << "\n";
    if (!f) throw IoError("failed writing episodes file: " + path);
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    return {{"env", r.env_name},
            {"setting", r.setting},
            {"algorithm", r.algorithm},
            {"seeds", r.seeds},
            {"per_seed_mean", r.per_seed_mean},
            {"mean", r.mean},
            {"std", r.stddev},
            {"episodes", r.episodes},
            {"obs_state_mse", r.obs_state_mse},
            {"terminal_rate", r.terminal_rate}};
}

/// Benchmark table: one row per policy, one "mean ± std" column per
/// setting; the best and second-best mean per column are flagged.
struct BenchmarkRow {
    std::string policy;
    std::map<std::string, EvalReport> by_setting;
};

inline std::string render_benchmark_table(const std::vector<BenchmarkRow>& rows,
                                          const std::vector<std::string>& settings,
                                          const std::string& env_name) {
    // column winners
    std::map<std::string, std::pair<int, int>> winners; // setting -> (best,second) row idx
    for (const auto& s : settings) {
        int best = -1, second = -1;
        for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
            auto it = rows[i].by_setting.find(s);
            if (it == rows[i].by_setting.end()) continue;
            if (best < 0 || it->second.mean > rows[best].by_setting.at(s).mean) {
                second = best;
                best = i;
            } else if (second < 0 || it->second.mean > rows[second].by_setting.at(s).mean) {
                second = i;
            }
        }
        winners[s] = {best, second};
    }
    std::ostringstream out;
    out << "# " << env_name << "\n";
    out << std::left << std::setw(12) << "policy";
    for (const auto& s : settings) out << std::setw(26) << s;
    out << "\n";
    for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
        out << std::left << std::setw(12) << rows[i].policy;
        for (const auto& s : settings) {
            auto it = rows[i].by_setting.find(s);
            if (it == rows[i].by_setting.end()) {
                out << std::setw(26) << "-";
                continue;
            }
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(2) << it->second.mean << " +- "
                 << it->second.stddev;
            if (winners[s].first == i) cell << " *";
            else if (winners[s].second == i) cell << " +";
            out << std::setw(26) << cell.str();
        }
        out << "\n";
    }
    out << "(* best per column, + second best)\n";
    return out.str();
}

inline void write_benchmark_csv(const std::vector<BenchmarkRow>& rows,
                                const std::vector<std::string>& settings,
                                const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open benchmark table for writing: " + path);
    f << "policy";
    for (const auto& s : settings) f << ",mean_" << s << ",std_" << s << ",mse_" << s;
    f << "\n";
    for (const auto& r : rows) {
        f << r.policy;
        for (const auto& s : settings) {
            auto it = r.by_setting.find(s);
            if (it == r.by_setting.end()) {
                f << ",,,";
                continue;
            }
            f << ',' << format_double(it->second.mean) << ',' << format_double(it->second.stddev)
              << ',' << format_double(it->second.obs_state_mse);
        }
        f << "\n";
    }
}

// ---------------------------------------------------------------------------
// run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
    std::string env = "OberstSepsisEnv";
    std::string algorithm = "DQN";
    std::string setting = "p";
    RealismConfig realism;
    bool tune = false;
    AgentHyperparams hyperparams;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::uint64_t tuning_seed = 0;
    long episodes_per_seed = 5000;
    long train_env_steps = 200000;
    long tuning_episodes = 100;
    int record_trajectories = 10;
    int threads = 1;
    bool desk_scale = false;
    std::string out_dir = "runs/out";

    /// Desk-scale profile: episode and training budgets shrink tenfold.
    long scaled_episodes() const { return desk_scale ? episodes_per_seed / 10 : episodes_per_seed; }
    long scaled_train_steps() const { return desk_scale ? train_env_steps / 10 : train_env_steps; }
};

inline nlohmann::json hyperparams_to_json(const AgentHyperparams& h) {
    return {{"lr", h.lr},
            {"batch_size", h.batch_size},
            {"batch_norm", h.batch_norm},
            {"dropout", h.dropout},
            {"target_update_freq", h.target_update_freq},
            {"update_per_step", h.update_per_step},
            {"step_per_collect", h.step_per_collect},
            {"gamma", h.gamma},
            {"tau", h.tau},
            {"eps_train_start", h.epsilon.start},
            {"eps_train_end", h.epsilon.end},
            {"eps_decay_steps", h.epsilon.decay_steps},
            {"eps_test", h.epsilon.eps_test},
            {"hidden_width", h.hidden_width},
            {"hidden_depth", h.hidden_depth},
            {"v_min", h.v_min},
            {"v_max", h.v_max},
            {"atoms", h.atoms},
            {"replay_capacity", h.replay_capacity},
            {"warmup_steps", h.warmup_steps},
            {"grad_clip", h.grad_clip},
            {"use_squared_loss", h.use_squared_loss}};
}

inline AgentHyperparams hyperparams_from_json(const nlohmann::json& j,
                                              AgentHyperparams base = {}) {
    auto get = [&j](const char* k, auto fallback) {
        using T = decltype(fallback);
        return j.contains(k) ? j.at(k).get<T>() : fallback;
    };
    base.lr = get("lr", base.lr);
    base.batch_size = get("batch_size", base.batch_size);
    base.batch_norm = get("batch_norm", base.batch_norm);
    base.dropout = get("dropout", base.dropout);
    base.target_update_freq = get("target_update_freq", base.target_update_freq);
    base.update_per_step = get("update_per_step", base.update_per_step);
    base.step_per_collect = get("step_per_collect", base.step_per_collect);
    base.gamma = get("gamma", base.gamma);
    base.tau = get("tau", base.tau);
    base.epsilon.start = get("eps_train_start", base.epsilon.start);
    base.epsilon.end = get("eps_train_end", base.epsilon.end);
    base.epsilon.decay_steps = get("eps_decay_steps", base.epsilon.decay_steps);
    base.epsilon.eps_test = get("eps_test", base.epsilon.eps_test);
    base.hidden_width = get("hidden_width", base.hidden_width);
    base.hidden_depth = get("hidden_depth", base.hidden_depth);
    base.v_min = get("v_min", base.v_min);
    base.v_max = get("v_max", base.v_max);
    base.atoms = get("atoms", base.atoms);
    base.replay_capacity = get("replay_capacity", base.replay_capacity);
    base.warmup_steps = get("warmup_steps", base.warmup_steps);
    base.grad_clip = get("grad_clip", base.grad_clip);
    base.use_squared_loss = get("use_squared_loss", base.use_squared_loss);
    return base;
}

inline nlohmann::json realism_to_json(const RealismConfig& c) {
    return {{"setting", setting_name(c.setting)},
            {"pkpd_spread", c.pkpd_spread},
            {"noise_scale", c.noise_scale},
            {"flip_prob", c.flip_prob},
            {"missing_ratio", c.missing_ratio},
            {"fill", c.fill == FillPolicy::kLocf ? "locf" : "population-default"}};
}

inline RealismConfig realism_from_json(const nlohmann::json& j, RealismConfig base = {}) {
    if (j.contains("setting")) base.setting = parse_setting(j.at("setting").get<std::string>());
    if (j.contains("pkpd_spread")) base.pkpd_spread = j.at("pkpd_spread").get<double>();
    if (j.contains("noise_scale")) base.noise_scale = j.at("noise_scale").get<double>();
    if (j.contains("flip_prob")) base.flip_prob = j.at("flip_prob").get<double>();
    if (j.contains("missing_ratio")) base.missing_ratio = j.at("missing_ratio").get<double>();
    if (j.contains("fill")) {
        const std::string f = j.at("fill").get<std::string>();
        if (f == "locf") base.fill = FillPolicy::kLocf;
        else if (f == "population-default") base.fill = FillPolicy::kPopulationDefault;
        else throw IoError("unknown fill policy '" + f + "'");
    }
    base.validate();
    return base;
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
    return {{"env", c.env},
            {"algorithm", c.algorithm},
            {"setting", c.setting},
            {"realism", realism_to_json(c.realism)},
            {"tune", c.tune},
            {"hyperparameters", hyperparams_to_json(c.hyperparams)},
            {"seeds", c.seeds},
            {"tuning_seed", c.tuning_seed},
            {"episodes_per_seed", c.episodes_per_seed},
            {"train_env_steps", c.train_env_steps},
            {"tuning_episodes", c.tuning_episodes},
            {"record_trajectories", c.record_trajectories},
            {"threads", c.threads},
            {"desk_scale", c.desk_scale},
            {"out", c.out_dir}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    auto get = [&j](const char* k, auto fallback) {
        using T = decltype(fallback);
        return j.contains(k) ? j.at(k).get<T>() : fallback;
    };
    c.env = get("env", c.env);
    c.algorithm = get("algorithm", c.algorithm);
    c.setting = get("setting", c.setting);
    if (j.contains("realism")) c.realism = realism_from_json(j.at("realism"));
    c.realism.setting = parse_setting(c.setting);
    c.tune = get("tune", c.tune);
    if (j.contains("hyperparameters")) c.hyperparams = hyperparams_from_json(j.at("hyperparameters"));
    c.seeds = get("seeds", c.seeds);
    c.tuning_seed = get("tuning_seed", c.tuning_seed);
    c.episodes_per_seed = get("episodes_per_seed", c.episodes_per_seed);
    c.train_env_steps = get("train_env_steps", c.train_env_steps);
    c.tuning_episodes = get("tuning_episodes", c.tuning_episodes);
    c.record_trajectories = get("record_trajectories", c.record_trajectories);
    c.threads = get("threads", c.threads);
    c.desk_scale = get("desk_scale", c.desk_scale);
    c.out_dir = get("out", c.out_dir);
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed config " + path + ": " + e.what());
    }
    return run_config_from_json(j);
}

/// Applies a `key.path=value` override onto a config JSON. Values parse as
/// JSON literals when possible, else as strings.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw IoError("override must look like key=value, got '" + assignment + "'");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw;
    }
    nlohmann::json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

// ---------------------------------------------------------------------------
// manifests
// ---------------------------------------------------------------------------

/// Everything needed to re-run an artifact directory exactly.
inline nlohmann::json run_manifest(const RunConfig& c) {
    nlohmann::json m = {{"tool", "dtrbench"},
                        {"version", kVersion},
                        {"config", run_config_to_json(c)}};
    return m;
}

inline void write_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
    if (!f) throw IoError("failed writing " + path);
}

inline nlohmann::json read_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed JSON " + path + ": " + e.what());
    }
    return j;
}

} // namespace dtr
