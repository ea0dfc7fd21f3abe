#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "dtrbench/core.hpp"
#include "dtrbench/ode.hpp"

namespace dtr {

/// Constants of the mixed radiotherapy/chemotherapy model, primary site,
/// secondary site, lymphocytes, chemotherapy concentration and the
/// irradiated-cell pools. `mu_c1/mu_c2/k_c1/k_c2` (accumulator terms) and
/// `delta` (irradiated-pool decay) have no published values; the defaults
/// here are small stability-preserving choices.
struct GhaffariParams {
    // primary site
    double a1 = 4.31e-1;   // tumour growth rate
    double b1 = 1.02e-9;   // inverse carrying capacity
    double c1 = 6.41e-11;  // tumour kill by NK cells
    double d1 = 2.34;      // saturation of CD8+ lysis
    double l = 2.09;       // lysis exponent
    double s = 8.39e-2;    // lysis steepness
    double e1 = 2.08e-1;   // lymphocyte -> NK conversion
    double f1 = 4.12e-3;   // NK death rate
    double p1 = 3.42e-4;   // NK inactivation by tumour
    double m1 = 2.04e-2;   // CD8+ death rate
    double j1 = 2.49e-2;   // max CD8+ recruitment
    double k1 = 3.66e7;    // recruitment steepness
    double q1 = 1.42e-4;   // CD8+ inactivation by tumour
    double r11 = 1.1e-7;   // CD8+ stimulation via NK kills
    double r12 = 6.5e-11;  // CD8+ stimulation via lymphocytes
    double u1 = 3e-10;     // NK regulation of CD8+
    double K1T = 100.0;    // chemo kill, tumour
    double K1N = 10.0;     // chemo kill, NK
    double K1L = 10.0;     // chemo kill, CD8+
    double K1C = 10.0;     // chemo kill, lymphocytes
    double alpha = 7.5e8;  // lymphocyte source
    double beta = 1.2e2;   // lymphocyte death rate
    double mu = 9e-1;      // chemo agent decay
    // secondary site
    double a2 = 5.0;
    double b2 = 1e-7;
    double c2 = 6.41e-12;
    double d2 = 5.0;
    double e2 = 2.08e-1;
    double f2 = 3.5e-2;
    double p2 = 1e-1;
    double m2 = 1.8e-1;
    double j2 = 1.6e-2;
    double k2 = 3.66e7;
    double q2 = 1e-1;
    double r21 = 2e-1;
    double r22 = 7.5e11;
    double u2 = 3e-10;
    double K2T = 100.0;
    double K2N = 10.0;
    double K2L = 10.0;
    // radiation recovery / damage
    double gamma1 = 0.04;
    double gamma2 = 0.1;
    double gamma3 = 0.1;
    double eps = 0.05;      // fraction of radiation damaging healthy cells
    double alpha1 = 1e-4;   // metastatic departure rate
    double alpha2 = 1e-5;   // metastatic arrival rate
    // saturation speeds
    double W1T = 0.01;
    double W1N = 1.0;
    double W1L = 1.0;
    double W1C = 1.0;
    double W2T = 1.0;
    double W2N = 1.0;
    double W2L = 1.0;
    // accumulator and decay closures (decided, unpublished)
    double mu_c1 = 1e-4;
    double mu_c2 = 1e-4;
    double k_c1 = 1.0;
    double k_c2 = 1.0;
    double delta = 1e-2;

    std::vector<double> to_vector() const {
        return {a1, b1, c1, d1, l, s, e1, f1, p1, m1, j1, k1, q1, r11, r12, u1,
                K1T, K1N, K1L, K1C, alpha, beta, mu,
                a2, b2, c2, d2, e2, f2, p2, m2, j2, k2, q2, r21, r22, u2,
                K2T, K2N, K2L, gamma1, gamma2, gamma3, eps, alpha1, alpha2,
                W1T, W1N, W1L, W1C, W2T, W2N, W2L,
                mu_c1, mu_c2, k_c1, k_c2, delta};
    }
    static GhaffariParams from_vector(std::span<const double> v) {
        GhaffariParams p;
        int i = 0;
        p.a1 = v[i++]; p.b1 = v[i++]; p.c1 = v[i++]; p.d1 = v[i++]; p.l = v[i++];
        p.s = v[i++]; p.e1 = v[i++]; p.f1 = v[i++]; p.p1 = v[i++]; p.m1 = v[i++];
        p.j1 = v[i++]; p.k1 = v[i++]; p.q1 = v[i++]; p.r11 = v[i++]; p.r12 = v[i++];
        p.u1 = v[i++]; p.K1T = v[i++]; p.K1N = v[i++]; p.K1L = v[i++]; p.K1C = v[i++];
        p.alpha = v[i++]; p.beta = v[i++]; p.mu = v[i++];
        p.a2 = v[i++]; p.b2 = v[i++]; p.c2 = v[i++]; p.d2 = v[i++]; p.e2 = v[i++];
        p.f2 = v[i++]; p.p2 = v[i++]; p.m2 = v[i++]; p.j2 = v[i++]; p.k2 = v[i++];
        p.q2 = v[i++]; p.r21 = v[i++]; p.r22 = v[i++]; p.u2 = v[i++];
        p.K2T = v[i++]; p.K2N = v[i++]; p.K2L = v[i++];
        p.gamma1 = v[i++]; p.gamma2 = v[i++]; p.gamma3 = v[i++]; p.eps = v[i++];
        p.alpha1 = v[i++]; p.alpha2 = v[i++];
        p.W1T = v[i++]; p.W1N = v[i++]; p.W1L = v[i++]; p.W1C = v[i++];
        p.W2T = v[i++]; p.W2N = v[i++]; p.W2L = v[i++];
        p.mu_c1 = v[i++]; p.mu_c2 = v[i++]; p.k_c1 = v[i++]; p.k_c2 = v[i++];
        p.delta = v[i++];
        return p;
    }
};

struct GhaffariAction {
    double radiation = 0.0;  // D, Gy
    double chemo = 0.0;      // v_M, mg/L
};

/// 3x3 row-major treatment grid: D in {0,5,10} Gy x v_M in {0,4,8} mg/L.
inline GhaffariAction ghaffari_action_map(int index) {
    if (index < 0 || index >= 9) throw EnvError("GhaffariCancerEnv: action index out of range");
    static constexpr double kD[3] = {0.0, 5.0, 10.0};
    static constexpr double kV[3] = {0.0, 4.0, 8.0};
    return {kD[index / 3], kV[index % 3]};
}

namespace detail {
/// CD8+ lysis fraction d * L^l / (s*T^l + L^l) with the division guard; the
/// populations are clamped at zero before the fractional powers.
inline double ghaffari_lysis(double d, double L, double T, double s, double l) {
    const double Lp = std::pow(std::max(L, 0.0), l);
    const double Tp = std::pow(std::max(T, 0.0), l);
    const double den = s * Tp + Lp;
    if (den < 1e-30) return 0.0;
    return d * Lp / den;
}
} // namespace detail

/// The 13 printed equations. State order:
/// (Tp, Np, Lp, C, Ts, Ns, Ls, c1, c2, M, u, v, x); `delayed_Tp` is the
/// primary tumour population tau days ago.
inline std::array<double, 13> ghaffari_derivatives(std::span<const double> y,
                                                   const GhaffariAction& a,
                                                   const GhaffariParams& p, double delayed_Tp) {
    const double Tp = y[0], Np = y[1], Lp = y[2], C = y[3];
    const double Ts = y[4], Ns = y[5], Ls = y[6];
    const double c1a = y[7], c2a = y[8], M = y[9];
    const double u = y[10], v = y[11], x = y[12];
    const double D = a.radiation, vM = a.chemo;

    const double Dp = detail::ghaffari_lysis(p.d1, Lp, Tp, p.s, p.l);
    const double Ds = detail::ghaffari_lysis(p.d2, Ls, Ts, p.s, p.l);

    std::array<double, 13> dy{};
    dy[0] = p.a1 * Tp * (1.0 - p.b1 * Tp) - p.c1 * Np * Tp - Dp * Tp - D * Tp + p.gamma1 * u -
            p.K1T * Tp * M / (p.W1T + Tp);
    dy[1] = p.e1 * C - p.p1 * Np * Tp - p.f1 * Np - p.eps * D * Np + p.gamma2 * v -
            p.K1N * Np * M / (p.W1N + Np);
    dy[2] = -p.m1 * Lp + p.j1 * Tp / (p.k1 + Tp) - p.q1 * Lp * Tp + p.r11 * Np * Tp +
            p.r12 * C * Tp - p.u1 * Np * Lp * Lp - p.eps * D * Lp + p.gamma3 * x -
            p.K1L * Lp * M / (p.W1L + Lp);
    dy[3] = p.alpha - p.beta * C - p.K1C * C * M / (p.W1C + C);
    dy[4] = p.a2 * Ts * (1.0 - p.b2 * Ts) - p.c2 * Ns * Ts - Ds * Ts + p.alpha2 * delayed_Tp -
            p.K2T * Ts * M / (p.W2T + Ts);
    dy[5] = p.e2 * C - p.p2 * Ns * Ts - p.f2 * Ns - p.K2N * Ns * M / (p.W2N + Ns);
    dy[6] = -p.m2 * Ls + p.j2 * Ts / (p.k2 + Ts) - p.q2 * Ls * Ts + p.r21 * Ns * Ts +
            p.r22 * C * Ts - p.u2 * Ns * Ls * Ls - p.K2L * Ls * M / (p.W2L + Ls);
    dy[7] = p.mu_c1 * vM * (1.0 - c1a / p.k_c1);
    dy[8] = p.mu_c2 * vM * (1.0 - c2a / p.k_c2);
    dy[9] = -p.mu * M + vM;
    dy[10] = D * Tp - p.gamma1 * u - p.delta * u;
    dy[11] = p.eps * D * Np - p.gamma2 * v - p.delta * v;
    dy[12] = p.eps * D * Lp - p.gamma3 * x - p.delta * x;
    return dy;
}

/// Per-step tumour-reduction reward plus the terminal outcome bonus.
/// Returns (reward, terminated). `initial_total` is Tp(0)+Ts(0).
inline std::pair<double, bool> ghaffari_reward(double Tp, double Ts, double initial_total,
                                               double overflow = 1e11) {
    if (initial_total <= 0.0) throw EnvError("GhaffariCancerEnv: initial tumour total must be > 0");
    double r = 1.0 - (Tp + Ts) / initial_total;
    bool terminal = false;
    if (Tp >= overflow || Ts >= overflow) {
        r += -100.0;
        terminal = true;
    } else if (Tp < 1.0 && Ts < 1.0) {
        r += 100.0;
        terminal = true;
    }
    return {r, terminal};
}

/// Mixed radiotherapy/chemotherapy environment with a metastatic delay:
/// the secondary site receives tumour cells that left the primary site
/// tau = 10 days earlier. Observation: the seven cell populations; the
/// chemo concentration and irradiated pools stay hidden.
class GhaffariCancerEnv : public Environment {
public:
    static constexpr int kSubsteps = 24;     // per 1-day step
    static constexpr double kStepDays = 1.0;
    static constexpr int kMaxSteps = 60;
    static constexpr double kTau = 10.0;     // metastatic delay, days
    static constexpr double kOverflow = 1e11;

    GhaffariCancerEnv() {
        spec_.name = "GhaffariCancerEnv";
        spec_.observation_dim = 7;
        spec_.action_count = 9;
        spec_.max_steps = kMaxSteps;
        spec_.step_interval = kStepDays;
        spec_.components = {{"Tp", 0.0, 1e11, 0}, {"Np", 0.0, 1e10, 0}, {"Lp", 0.0, 1e10, 0},
                            {"C", 0.0, 1e11, 0},  {"Ts", 0.0, 1e11, 0}, {"Ns", 0.0, 1e10, 0},
                            {"Ls", 0.0, 1e10, 0}};
        spec_.validate();
        remember_nominal();
        system_.dimension = 13;
        system_.ranges = {{0.0, 1e11}, {0.0, 1e10}, {0.0, 1e10}, {0.0, 1e11}, {0.0, 1e11},
                          {0.0, 1e10}, {0.0, 1e10}, {0.0, 10.0}, {0.0, 10.0}, {0.0, 1e10},
                          {0.0, 1e11}, {0.0, 1e11}, {0.0, 1e11}};
        system_.derivative = [this](double t, std::span<const double> y,
                                    std::span<const double> c, std::vector<double>& dy) {
            const GhaffariAction act{c[0], c[1]};
            const double delayed_tp = delay_.lookup(t)[0];
            const auto d = ghaffari_derivatives(y, act, params_, delayed_tp);
            dy.assign(d.begin(), d.end());
        };
    }

    const EnvSpec& spec() const override { return spec_; }

    Observation reset(std::uint64_t seed) override {
        (void)seed;
        state_ = {1e7, 1e5, 1e2, 6.25e6, 0.0, 1e4, 10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
        initial_total_ = state_[0] + state_[4];
        const std::size_t capacity = static_cast<std::size_t>(kTau / (kStepDays / kSubsteps)) + 8;
        delay_ = DelayBuffer(kTau, capacity, {state_[0]});
        delay_.push(0.0, std::array<double, 1>{state_[0]});
        begin_episode();
        return observe();
    }

    StepResult step(int action) override {
        const bool at_horizon = advance(action);
        const GhaffariAction a = ghaffari_action_map(action);
        const std::array<double, 2> control{a.radiation, a.chemo};
        const double t0 = (steps_taken() - 1) * kStepDays;
        const auto next = rk4_step(system_, state_, control, t0, kStepDays, kSubsteps,
                                   [this](double t, std::span<const double> y) {
                                       delay_.push(t, std::array<double, 1>{y[0]});
                                   });
        state_ = next;

        StepResult r;
        const auto [reward, terminal] = ghaffari_reward(state_[0], state_[4], initial_total_, kOverflow);
        r.reward = reward;
        r.terminated = terminal;
        r.truncated = !terminal && at_horizon;
        if (r.terminated || r.truncated) finish_episode();
        r.observation = observe();
        attach_state_info(*this, r);
        r.info["D"] = a.radiation;
        r.info["vM"] = a.chemo;
        return r;
    }

    std::vector<double> action_values(int action) const override {
        const GhaffariAction a = ghaffari_action_map(action);
        return {a.radiation, a.chemo};
    }

    std::vector<std::string> action_value_names() const override { return {"D", "vM"}; }

    std::vector<std::string> state_names() const override {
        return {"Tp", "Np", "Lp", "C", "Ts", "Ns", "Ls", "c1", "c2", "M", "u", "v", "x"};
    }
    std::vector<double> state_snapshot() const override { return state_; }

    std::vector<double> params() const override { return params_.to_vector(); }
    void set_params(std::span<const double> p) override {
        params_ = GhaffariParams::from_vector(p);
    }

    const GhaffariParams& model_params() const { return params_; }

private:
    Observation observe() const {
        return Observation({state_[0], state_[1], state_[2], state_[3], state_[4], state_[5],
                            state_[6]});
    }

    EnvSpec spec_;
    GhaffariParams params_;
    OdeSystem system_;
    std::vector<double> state_;
    DelayBuffer delay_;
    double initial_total_ = 1e7;
};

} // namespace dtr
