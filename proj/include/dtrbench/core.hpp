#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtrbench/rng.hpp"

namespace dtr {

/// Shared discount factor for all environments and agents.
inline constexpr double kDiscount = 0.95;

inline double discount() { return kDiscount; }

class EnvError : public std::runtime_error {
public:
    explicit EnvError(const std::string& what) : std::runtime_error(what) {}
};

/// Per-component metadata of an observation vector. `levels > 0` marks an
/// ordinal categorical component (sepsis vitals); continuous otherwise.
struct ComponentSpec {
    std::string name;
    double lo = 0.0;
    double hi = 1.0;
    int levels = 0;
};

struct EnvSpec {
    std::string name;
    int observation_dim = 0;
    int action_count = 0;
    int max_steps = 0;
    double step_interval = 0.0; // environment time units per step
    std::vector<ComponentSpec> components;

    void validate() const {
        if (observation_dim < 1) throw EnvError(name + ": observation_dim must be >= 1");
        if (action_count < 2) throw EnvError(name + ": action_count must be >= 2");
        if (max_steps < 1) throw EnvError(name + ": max_steps must be >= 1");
        if (static_cast<int>(components.size()) != observation_dim)
            throw EnvError(name + ": component metadata size mismatch");
    }
};

/// Partially observed view of the hidden state. `presence[i]` is 1 when
/// component i was observed this step and 0 when it was masked out (the
/// value then carries the fill).
struct Observation {
    std::vector<double> values;
    std::vector<double> presence;

    Observation() = default;
    explicit Observation(std::vector<double> v)
        : values(std::move(v)), presence(values.size(), 1.0) {}

    int dim() const { return static_cast<int>(values.size()); }
};

struct StepResult {
    Observation observation;
    double reward = 0.0;
    bool terminated = false;
    bool truncated = false;
    // diagnostics only (true-state snapshot and such); never agent input
    std::map<std::string, double> info;
};

struct TrajectoryStep {
    double time = 0.0;
    std::vector<double> observation;
    std::vector<double> presence;
    int action = 0;
    std::vector<double> action_values;
    double reward = 0.0;
    std::vector<double> state;
};

struct Trajectory {
    std::uint64_t episode_id = 0;
    std::vector<TrajectoryStep> steps;
    bool terminated = false;
    double total_return = 0.0;
};

/// POMDP contract implemented by every environment. A single instance is
/// single-threaded; concurrent use requires separate instances.
class Environment {
public:
    virtual ~Environment() = default;

    virtual const EnvSpec& spec() const = 0;

    /// Starts a new episode. Deterministic in `seed`.
    virtual Observation reset(std::uint64_t seed) = 0;

    /// Advances one step_interval. Throws EnvError on an out-of-range action
    /// or when the previous episode already finished.
    virtual StepResult step(int action) = 0;

    /// Raw treatment value(s) behind a discrete action index.
    virtual std::vector<double> action_values(int action) const = 0;

    /// Column names for the raw treatment values.
    virtual std::vector<std::string> action_value_names() const {
        std::vector<std::string> names;
        for (std::size_t i = 0; i < action_values(0).size(); ++i)
            names.push_back("a" + std::to_string(i));
        return names;
    }

    virtual std::vector<std::string> state_names() const = 0;
    virtual std::vector<double> state_snapshot() const = 0;

    // --- PK/PD variance hooks -------------------------------------------
    /// Flat vector of the nominal dynamics parameters.
    virtual std::vector<double> params() const = 0;
    virtual void set_params(std::span<const double> p) = 0;

    /// Draws a per-episode parameter set: each component uniform in
    /// [(1-spread)*nominal, (1+spread)*nominal]. Environments with special
    /// rules (probability clamping, patient profiles) override this.
    virtual void sample_pkpd(double spread, RngStream& rng) {
        std::vector<double> p = nominal_params_;
        for (double& v : p) v *= rng.uniform(1.0 - spread, 1.0 + spread);
        set_params(p);
    }

    /// Restores the nominal parameter set (base setting).
    virtual void reset_pkpd() { set_params(nominal_params_); }

    virtual int steps_taken() const { return steps_; }
    virtual bool episode_active() const { return active_; }
    double elapsed_time() const { return steps_taken() * spec().step_interval; }

protected:
    void begin_episode() {
        steps_ = 0;
        active_ = true;
    }

    /// Common step preamble: validates the action and episode status, bumps
    /// the counter. Returns true when this step hits the horizon.
    bool advance(int action) {
        if (!active_)
            throw EnvError(spec().name + ": step() on a finished episode; call reset()");
        if (action < 0 || action >= spec().action_count)
            throw EnvError(spec().name + ": action " + std::to_string(action) +
                           " out of range [0, " + std::to_string(spec().action_count) + ")");
        ++steps_;
        return steps_ >= spec().max_steps;
    }

    void finish_episode() { active_ = false; }

    void remember_nominal() { nominal_params_ = params(); }

    std::vector<double> nominal_params_;

private:
    int steps_ = 0;
    bool active_ = false;
};

/// Writes the state snapshot into a StepResult info map under "s.<name>".
inline void attach_state_info(const Environment& env, StepResult& r) {
    const auto names = env.state_names();
    const auto values = env.state_snapshot();
    for (std::size_t i = 0; i < names.size(); ++i) r.info["s." + names[i]] = values[i];
}

} // namespace dtr
