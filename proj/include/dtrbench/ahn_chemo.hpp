#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "dtrbench/core.hpp"
#include "dtrbench/ode.hpp"

namespace dtr {

/// Parameters of the four-equation chemotherapy model. Cell-kill fractions,
/// carrying capacities, competition and growth rates; `immune_steepness`
/// (the Michaelis constant of the immune response term) and `drug_kill_offset`
/// (the offset in the normal-cell kill term, chosen so the term vanishes at
/// zero drug concentration) are decided constants, not published ones.
struct AhnParams {
    double a1 = 0.2; // fraction cell kill on immune eq.
    double a2 = 0.3; // fraction cell kill on tumour cells
    double a3 = 0.1; // fraction cell kill on normal cells
    double b1 = 1.0; // inverse tumour carrying capacity
    double b2 = 1.0; // inverse normal-cell carrying capacity
    double c1 = 1.0; // immune-tumour competition
    double c2 = 0.5; // tumour kill by immune cells
    double c3 = 1.0; // tumour-normal competition
    double c4 = 1.0; // normal-cell loss to tumour competition
    double d1 = 0.2; // immune death rate (unused by the printed equations)
    double d2 = 1.0; // drug decay rate
    double r1 = 1.5; // tumour growth rate
    double r2 = 1.0; // normal-cell growth rate
    double s = 0.33; // immune source rate
    double rho = 0.01; // immune response rate
    double immune_steepness = 0.3;
    double drug_kill_offset = 1.0;

    std::vector<double> to_vector() const {
        return {a1, a2, a3, b1, b2, c1, c2, c3, c4, d1, d2, r1, r2, s, rho,
                immune_steepness, drug_kill_offset};
    }
    static AhnParams from_vector(std::span<const double> v) {
        AhnParams p;
        p.a1 = v[0]; p.a2 = v[1]; p.a3 = v[2]; p.b1 = v[3]; p.b2 = v[4];
        p.c1 = v[5]; p.c2 = v[6]; p.c3 = v[7]; p.c4 = v[8]; p.d1 = v[9];
        p.d2 = v[10]; p.r1 = v[11]; p.r2 = v[12]; p.s = v[13]; p.rho = v[14];
        p.immune_steepness = v[15]; p.drug_kill_offset = v[16];
        return p;
    }
};

/// dN/dt, dT/dt, dI/dt, dB/dt for state (N, T, I, B) under dose rate u.
/// The equations are implemented exactly as printed in the source model,
/// including the tumour-coupled terms in dI/dt.
inline std::array<double, 4> ahn_derivatives(double N, double T, double I, double B, double u,
                                             const AhnParams& p) {
    const double kill = 1.0 - std::exp(-B);
    const double dN = p.r2 * N * (1.0 - p.b2 * N) - p.c4 * T * N -
                      p.a3 * (p.drug_kill_offset - std::exp(-B)) * N;
    const double dT = p.r1 * T * (1.0 - p.b1 * T) - p.c2 * I * T - p.c3 * T * N - p.a2 * kill * T;
    const double dI = p.s + p.rho * I * T / (p.immune_steepness + T) - p.c1 * I * T -
                      p.c3 * T * N - p.a1 * kill * T;
    const double dB = -p.d2 * B + u;
    return {dN, dT, dI, dB};
}

/// r = N/N0 - T/T0 + I - u.
inline double ahn_reward(double N, double T, double I, double u, double N0, double T0) {
    if (N0 <= 0.0 || T0 <= 0.0) throw EnvError("AhnChemoEnv: N0 and T0 must be positive");
    return N / N0 - T / T0 + I - u;
}

/// Uniform dose grid over [0, 1]: index/(bins-1).
inline double ahn_action_map(int index, int bins = 5) {
    if (index < 0 || index >= bins) throw EnvError("AhnChemoEnv: action index out of range");
    return static_cast<double>(index) / static_cast<double>(bins - 1);
}

/// Chemotherapy environment. Hidden state (N, T, I, B); the agent observes
/// (T, I, B) only -- the normal-cell population stays hidden.
class AhnChemoEnv : public Environment {
public:
    static constexpr int kBins = 5;
    static constexpr int kSubsteps = 10;        // per 6-hour step
    static constexpr double kStepDays = 0.25;   // 6 hours
    static constexpr int kMaxSteps = 120;       // 30 days
    static constexpr double kTumourEliminated = 1e-4;
    static constexpr double kNormalCollapse = 1e-2;

    AhnChemoEnv() {
        spec_.name = "AhnChemoEnv";
        spec_.observation_dim = 3;
        spec_.action_count = kBins;
        spec_.max_steps = kMaxSteps;
        spec_.step_interval = kStepDays;
        spec_.components = {{"T", 0.0, 2.0, 0}, {"I", 0.0, 2.0, 0}, {"B", 0.0, 1.0, 0}};
        spec_.validate();
        remember_nominal();
        system_.dimension = 4;
        system_.ranges = {{0.0, 2.0}, {0.0, 2.0}, {0.0, 2.0}, {0.0, 1.0}};
        system_.derivative = [this](double, std::span<const double> y,
                                    std::span<const double> c, std::vector<double>& dy) {
            const auto d = ahn_derivatives(y[0], y[1], y[2], y[3], c[0], params_);
            dy.assign(d.begin(), d.end());
        };
    }

    const EnvSpec& spec() const override { return spec_; }

    Observation reset(std::uint64_t seed) override {
        (void)seed; // deterministic initial condition; stochasticity comes from wrappers
        state_ = {1.0, 0.25, 0.15, 0.0};
        n0_ = state_[0];
        t0_ = state_[1];
        begin_episode();
        return observe();
    }

    StepResult step(int action) override {
        const bool at_horizon = advance(action);
        const double u = ahn_action_map(action, kBins);
        const std::array<double, 1> control{u};
        state_vec_.assign(state_.begin(), state_.end());
        const auto next = rk4_step(system_, state_vec_, control,
                                   (steps_taken() - 1) * kStepDays, kStepDays, kSubsteps);
        std::copy(next.begin(), next.end(), state_.begin());

        StepResult r;
        r.reward = ahn_reward(state_[0], state_[1], state_[2], u, n0_, t0_);
        r.terminated = state_[1] < kTumourEliminated || state_[0] < kNormalCollapse;
        r.truncated = !r.terminated && at_horizon;
        if (r.terminated || r.truncated) finish_episode();
        r.observation = observe();
        attach_state_info(*this, r);
        r.info["u"] = u;
        return r;
    }

    std::vector<double> action_values(int action) const override {
        return {ahn_action_map(action, kBins)};
    }

    std::vector<std::string> action_value_names() const override { return {"u"}; }

    std::vector<std::string> state_names() const override { return {"N", "T", "I", "B"}; }
    std::vector<double> state_snapshot() const override {
        return {state_[0], state_[1], state_[2], state_[3]};
    }

    std::vector<double> params() const override { return params_.to_vector(); }
    void set_params(std::span<const double> p) override { params_ = AhnParams::from_vector(p); }

    const AhnParams& model_params() const { return params_; }

private:
    Observation observe() const { return Observation({state_[1], state_[2], state_[3]}); }

    EnvSpec spec_;
    AhnParams params_;
    OdeSystem system_;
    std::array<double, 4> state_{};
    std::vector<double> state_vec_;
    double n0_ = 1.0, t0_ = 0.25;
};

} // namespace dtr
