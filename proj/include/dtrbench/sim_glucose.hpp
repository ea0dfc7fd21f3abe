#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "dtrbench/core.hpp"
#include "dtrbench/ode.hpp"

namespace dtr {

/// Glucose-insulin model constants. All rates are per minute, matching the
/// five-minute step and the source model family; `uii` (insulin-independent
/// utilisation), the subcutaneous chain rates `kd`/`ka` and the
/// pump-to-plasma gain are decided closures without published values.
struct GlucoseParams {
    double kp1 = 11.5048;   // endogenous glucose production, mg/kg/min
    double kp2 = 0.0233;    // EGP sensitivity to plasma glucose
    double kp3 = 0.0233;    // EGP sensitivity to insulin action
    double ke1 = 0.0005;    // renal excretion rate, 1/min
    double ke2 = 339.0;     // renal excretion threshold, mg/dL
    double Vm0 = 5.9285;    // max glucose utilisation, mg/kg/min
    double Vmx = 0.0747;    // utilisation sensitivity to insulin action
    double Km0 = 260.8900;  // half-max utilisation concentration, mg/dL
    double k1 = 0.0573;     // plasma -> tissue transfer, 1/min
    double k2 = 0.0677;     // tissue -> plasma transfer, 1/min
    double p2u = 0.0213;    // insulin action rate, 1/min
    double ki = 0.0089;     // insulin signal rate, 1/min
    double ksto = 0.0159;   // stomach solid -> liquid, 1/min
    double kgut = 0.0159;   // stomach -> gut, 1/min
    double kabs = 0.0910;   // gut absorption, 1/min
    double f = 0.9;         // bioavailability
    double BW = 68.7060;    // body weight, kg
    double uii = 1.0;       // insulin-independent utilisation, mg/kg/min
    double kd = 0.0164;     // subcutaneous depot 1 -> 2, 1/min
    double ka = 0.0164;     // depot 2 -> plasma, 1/min
    double pump_gain = 600.0; // plasma insulin signal per U/min of appearance

    std::vector<double> to_vector() const {
        return {kp1, kp2, kp3, ke1, ke2, Vm0, Vmx, Km0, k1, k2, p2u, ki,
                ksto, kgut, kabs, f, BW, uii, kd, ka, pump_gain};
    }
    static GlucoseParams from_vector(std::span<const double> v) {
        GlucoseParams p;
        int i = 0;
        p.kp1 = v[i++]; p.kp2 = v[i++]; p.kp3 = v[i++]; p.ke1 = v[i++]; p.ke2 = v[i++];
        p.Vm0 = v[i++]; p.Vmx = v[i++]; p.Km0 = v[i++]; p.k1 = v[i++]; p.k2 = v[i++];
        p.p2u = v[i++]; p.ki = v[i++]; p.ksto = v[i++]; p.kgut = v[i++]; p.kabs = v[i++];
        p.f = v[i++]; p.BW = v[i++]; p.uii = v[i++]; p.kd = v[i++]; p.ka = v[i++];
        p.pump_gain = v[i++];
        return p;
    }
};

struct Meal {
    double minute_of_day = 0.0;
    double grams = 0.0;
};

/// A day's carbohydrate intake; amounts are bounded to (0, 200) grams.
struct MealScenario {
    std::vector<Meal> meals;

    static MealScenario canonical() {
        return {{{7 * 60.0, 45.0}, {12 * 60.0, 70.0}, {18 * 60.0, 80.0}}};
    }
};

// State layout for the ODE core.
enum GlucoseStateIndex : int {
    kGp = 0, kGt, kInsulin, kX, kXL, kSsto, kQsto, kQgut, kIsc1, kIsc2,
    kGlucoseDim
};

/// Glucose rate of appearance from the gut, mg/kg per minute.
inline double glucose_ra(double Qgut, const GlucoseParams& p) {
    return p.f * p.kabs * Qgut / p.BW;
}

/// The eight printed equations plus the two-compartment subcutaneous
/// insulin chain, evaluated per minute. `insulin_rate` is the pump command
/// in U/h, `cho_rate` an optional carbohydrate inflow in mg/min. `Ib` is the
/// basal insulin signal (steady-state I at zero pump input).
inline std::array<double, kGlucoseDim> glucose_derivatives(std::span<const double> y,
                                                           double insulin_rate, double cho_rate,
                                                           const GlucoseParams& p, double Ib) {
    const double Gp = y[kGp], Gt = y[kGt], I = y[kInsulin], X = y[kX], XL = y[kXL];
    const double Ssto = y[kSsto], Qsto = y[kQsto], Qgut = y[kQgut];
    const double Isc1 = y[kIsc1], Isc2 = y[kIsc2];

    const double Ra = glucose_ra(Qgut, p);
    const double E = Gp > p.ke2 ? p.ke1 * (Gp - p.ke2) : 0.0;
    const double Uid = (p.Vm0 + p.Vmx * X) * Gt / (p.Km0 + Gt);
    const double EGP = p.kp1 - p.kp2 * Gp - p.kp3 * XL;

    // pump-to-plasma pathway: depot chain, appearance ka*Isc2 scaled into
    // the plasma insulin signal
    const double pump = insulin_rate / 60.0; // U/h -> U/min
    const double I_plasma = Ib + p.pump_gain * p.ka * Isc2;

    std::array<double, kGlucoseDim> dy{};
    dy[kGp] = EGP + Ra - p.uii - E - p.k1 * Gp + p.k2 * Gt;
    dy[kGt] = -Uid + p.k1 * Gp - p.k2 * Gt;
    dy[kX] = -p.p2u * X + p.p2u * (I - Ib);
    // stable orientation: both insulin signals relax toward the plasma source
    dy[kInsulin] = p.ki * (I_plasma - I);
    dy[kXL] = -p.ki * (XL - I_plasma);
    dy[kSsto] = cho_rate - p.ksto * Ssto;
    dy[kQsto] = p.ksto * Ssto - p.kgut * Qsto;
    dy[kQgut] = p.kgut * Qsto - p.kabs * Qgut;
    dy[kIsc1] = pump - p.kd * Isc1;
    dy[kIsc2] = p.kd * Isc1 - p.ka * Isc2;
    return dy;
}

/// Blood-glucose risk index with log10 transform; maximal near 112.5 mg/dL.
inline double glucose_risk_reward(double Gp) {
    const double x = 1.509 * (std::pow(std::log(Gp), 1.084) - 5.381);
    return -std::log10(std::max(x * x, 1e-10));
}

/// Fluctuation penalty on the per-step glucose change.
inline double glucose_delta_reward(double delta_gp) {
    if (delta_gp < 30.0) return 0.0;
    if (delta_gp < 60.0) return -(delta_gp - 30.0) / 30.0;
    return -1.0;
}

/// Episode status for the outcome reward term.
enum class GlucoseOutcome { kMidEpisode, kTruncatedInRange, kRangeViolation };

inline double glucose_outcome_reward(GlucoseOutcome o) {
    switch (o) {
        case GlucoseOutcome::kTruncatedInRange: return 100.0;
        case GlucoseOutcome::kRangeViolation: return -100.0;
        default: return 0.0;
    }
}

/// Total reward: risk + fluctuation + outcome.
inline double glucose_reward(double Gp_now, double Gp_prev, GlucoseOutcome status) {
    if (Gp_now <= 0.0) throw EnvError("SimGlucoseEnv: Gp must be positive");
    return glucose_risk_reward(Gp_now) + glucose_delta_reward(Gp_now - Gp_prev) +
           glucose_outcome_reward(status);
}

/// Uniform insulin-rate grid over [0, 30] U/h.
inline double glucose_action_map(int index, int bins = 5) {
    if (index < 0 || index >= bins) throw EnvError("SimGlucoseEnv: action index out of range");
    return 30.0 * static_cast<double>(index) / static_cast<double>(bins - 1);
}

/// Meal-response glucose environment: 24 hours in 288 five-minute steps.
/// Observation is the CGM-style plasma glucose alone. Termination on
/// hypo-/hyperglycemia (Gp < 10 or > 600), truncation at the horizon with
/// a +100 completion bonus.
class SimGlucoseEnv : public Environment {
public:
    static constexpr int kBins = 5;
    static constexpr int kSubsteps = 5;        // per 5-minute step
    static constexpr double kStepMinutes = 5.0;
    static constexpr int kMaxSteps = 288;
    static constexpr double kGpLow = 10.0;
    static constexpr double kGpHigh = 600.0;
    static constexpr double kGp0 = 140.0;
    static constexpr int kProfileCount = 30;

    SimGlucoseEnv() {
        spec_.name = "SimGlucoseEnv";
        spec_.observation_dim = 1;
        spec_.action_count = kBins;
        spec_.max_steps = kMaxSteps;
        spec_.step_interval = kStepMinutes;
        spec_.components = {{"Gp", kGpLow, kGpHigh, 0}};
        spec_.validate();
        remember_nominal();
        scenario_ = MealScenario::canonical();
        system_.dimension = kGlucoseDim;
        // integration guards only; the (10, 600) band is the termination
        // condition, not a clamp
        system_.ranges = {{1.0, 2000.0},  {0.0, 5000.0}, {0.0, 1e7}, {-1e7, 1e7},
                          {0.0, 1e7},     {0.0, 1e9},    {0.0, 1e9}, {0.0, 1e9},
                          {0.0, 1e6},     {0.0, 1e6}};
        system_.derivative = [this](double, std::span<const double> y,
                                    std::span<const double> c, std::vector<double>& dy) {
            const auto d = glucose_derivatives(y, c[0], 0.0, params_, ib_);
            dy.assign(d.begin(), d.end());
        };
    }

    const EnvSpec& spec() const override { return spec_; }

    Observation reset(std::uint64_t seed) override {
        (void)seed;
        solve_basal();
        state_.assign(kGlucoseDim, 0.0);
        state_[kGp] = kGp0;
        state_[kGt] = gt0_;
        state_[kInsulin] = ib_;
        state_[kXL] = ib_;
        prev_gp_ = kGp0;
        begin_episode();
        return observe();
    }

    StepResult step(int action) override {
        const bool at_horizon = advance(action);
        const double rate = glucose_action_map(action, kBins);
        const double t0 = (steps_taken() - 1) * kStepMinutes;
        deliver_meals(t0, t0 + kStepMinutes);
        const std::array<double, 1> control{rate};
        state_ = rk4_step(system_, state_, control, t0, kStepMinutes, kSubsteps);

        const double gp = state_[kGp];
        const bool violated = gp < kGpLow || gp > kGpHigh;
        GlucoseOutcome outcome = GlucoseOutcome::kMidEpisode;
        if (violated) outcome = GlucoseOutcome::kRangeViolation;
        else if (at_horizon) outcome = GlucoseOutcome::kTruncatedInRange;

        StepResult r;
        r.reward = glucose_reward(gp, prev_gp_, outcome);
        r.terminated = violated;
        r.truncated = !violated && at_horizon;
        prev_gp_ = gp;
        if (r.terminated || r.truncated) finish_episode();
        r.observation = observe();
        attach_state_info(*this, r);
        r.info["insulin_rate"] = rate;
        return r;
    }

    std::vector<double> action_values(int action) const override {
        return {glucose_action_map(action, kBins)};
    }

    std::vector<std::string> action_value_names() const override { return {"insulin_rate"}; }

    std::vector<std::string> state_names() const override {
        return {"Gp", "Gt", "I", "X", "XL", "Ssto", "Qsto", "Qgut", "Isc1", "Isc2"};
    }
    std::vector<double> state_snapshot() const override { return state_; }

    std::vector<double> params() const override { return params_.to_vector(); }
    void set_params(std::span<const double> p) override {
        params_ = GlucoseParams::from_vector(p);
    }

    /// PK/PD variance: draw one of the 30 synthetic patients and jitter the
    /// meal schedule (+-30 min, +-20% amounts, optional evening snack).
    void sample_pkpd(double spread, RngStream& rng) override {
        (void)spread;
        set_params(profile_params(rng.uniform_int(kProfileCount)).to_vector());
        MealScenario s = MealScenario::canonical();
        for (Meal& m : s.meals) {
            m.minute_of_day += rng.uniform(-30.0, 30.0);
            m.grams = std::clamp(m.grams * rng.uniform(0.8, 1.2), 1.0, 199.0);
        }
        if (rng.bernoulli(0.5)) s.meals.push_back({21 * 60.0 + rng.uniform(-30.0, 30.0), 15.0});
        scenario_ = s;
    }

    void reset_pkpd() override {
        set_params(nominal_params_);
        scenario_ = MealScenario::canonical();
    }

    /// The i-th synthetic patient: the canonical adolescent scaled by a
    /// population-class body-weight factor (10 adolescents, 10 adults,
    /// 10 children) plus a fixed per-profile +-10% jitter on every rate.
    GlucoseParams profile_params(int index) const {
        GlucoseParams p; // canonical adolescent
        const int cls = index / 10;
        if (cls == 1) p.BW *= 1.35;       // adults
        else if (cls == 2) p.BW *= 0.55;  // children
        RngStream jitter(0xD7Bu, static_cast<std::uint64_t>(index));
        auto j = [&jitter](double v) { return v * jitter.uniform(0.9, 1.1); };
        p.kp1 = j(p.kp1); p.kp2 = j(p.kp2); p.kp3 = j(p.kp3);
        p.Vm0 = j(p.Vm0); p.Vmx = j(p.Vmx); p.Km0 = j(p.Km0);
        p.k1 = j(p.k1); p.k2 = j(p.k2); p.p2u = j(p.p2u); p.ki = j(p.ki);
        p.ksto = j(p.ksto); p.kgut = j(p.kgut); p.kabs = j(p.kabs);
        return p;
    }

    const MealScenario& scenario() const { return scenario_; }
    void set_scenario(MealScenario s) { scenario_ = std::move(s); }
    double basal_insulin() const { return ib_; }
    double basal_tissue_glucose() const { return gt0_; }
    const GlucoseParams& model_params() const { return params_; }

private:
    Observation observe() const { return Observation({state_[kGp]}); }

    /// Zero-input steady state at Gp0: tissue glucose from the quadratic
    /// k2*Gt^2 + (Vm0 + k2*Km0 - k1*Gp0)*Gt - k1*Gp0*Km0 = 0, then the basal
    /// insulin signal from EGP(Gp0, Ib) = Uii + Uid(Gt0).
    void solve_basal() {
        const GlucoseParams& p = params_;
        const double a = p.k2;
        const double b = p.Vm0 + p.k2 * p.Km0 - p.k1 * kGp0;
        const double c = -p.k1 * kGp0 * p.Km0;
        gt0_ = (-b + std::sqrt(b * b - 4.0 * a * c)) / (2.0 * a);
        const double uid0 = p.Vm0 * gt0_ / (p.Km0 + gt0_);
        ib_ = (p.kp1 - p.kp2 * kGp0 - p.uii - uid0) / p.kp3;
    }

    /// Adds the mass of every meal falling in [t_from, t_to) to the solid
    /// stomach compartment (meals enter as impulses at step boundaries).
    void deliver_meals(double t_from, double t_to) {
        for (const Meal& m : scenario_.meals) {
            if (m.minute_of_day >= t_from && m.minute_of_day < t_to)
                state_[kSsto] += m.grams * 1000.0; // grams -> mg
        }
    }

    EnvSpec spec_;
    GlucoseParams params_;
    OdeSystem system_;
    MealScenario scenario_;
    std::vector<double> state_;
    double prev_gp_ = kGp0;
    double ib_ = 0.0;
    double gt0_ = 0.0;
};

} // namespace dtr
