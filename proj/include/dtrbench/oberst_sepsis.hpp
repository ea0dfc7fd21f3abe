#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "dtrbench/core.hpp"

namespace dtr {

// vital levels: 0=Low (Super Low for glucose), ascending; Normal is 1 for
// the three-level vitals and 2 for glucose
inline constexpr int kHrLevels = 3;
inline constexpr int kBpLevels = 3;
inline constexpr int kO2Levels = 3;
inline constexpr int kGluLevels = 5;
inline constexpr int kHrNormal = 1;
inline constexpr int kBpNormal = 1;
inline constexpr int kO2Normal = 1;
inline constexpr int kGluNormal = 2;

struct SepsisState {
    int hr = kHrNormal;
    int bp = kBpNormal;
    int o2 = kO2Normal;
    int glu = kGluNormal;
    bool diabetic = false;
    bool abx = false;
    bool vaso = false;
    bool vent = false;

    int abnormal_count() const {
        return (hr != kHrNormal) + (bp != kBpNormal) + (o2 != kO2Normal) + (glu != kGluNormal);
    }
    bool all_normal() const { return abnormal_count() == 0; }
    bool any_treatment() const { return abx || vaso || vent; }
};

struct SepsisAction {
    bool abx = false;
    bool vaso = false;
    bool vent = false;
};

/// Action index encoding: bit 0 = antibiotics, bit 1 = vasopressors,
/// bit 2 = ventilation; 0 = nothing, 7 = everything.
inline SepsisAction sepsis_action_map(int index) {
    if (index < 0 || index >= 8) throw EnvError("OberstSepsisEnv: action index out of range");
    return {(index & 1) != 0, (index & 2) != 0, (index & 4) != 0};
}

/// Transition probabilities. Every entry is perturbable under the PK/PD
/// setting and then clamped to [0, 1].
struct SepsisParams {
    double abx_on_hr_HN = 0.5;
    double abx_on_bp_HN = 0.5;
    double abx_off_hr_NH = 0.1;
    double abx_off_bp_NH = 0.5;
    double vent_on_o2_LN = 0.7;
    double vent_off_o2_NL = 0.1;
    double vaso_on_bp_LN = 0.7;       // non-diabetic
    double vaso_on_bp_NH = 0.7;       // non-diabetic
    double vaso_on_dia_bp_LN = 0.5;
    double vaso_on_dia_bp_LH = 0.4;
    double vaso_on_dia_bp_NH = 0.9;
    double vaso_on_dia_glu_up = 0.5;
    double vaso_off_bp_NL = 0.1;      // non-diabetic
    double vaso_off_bp_HN = 0.1;      // non-diabetic
    double vaso_off_dia_bp_NL = 0.05;
    double vaso_off_dia_bp_HN = 0.05;
    double fluctuate = 0.1;
    double fluctuate_glu_diabetic = 0.3;

    std::vector<double> to_vector() const {
        return {abx_on_hr_HN, abx_on_bp_HN, abx_off_hr_NH, abx_off_bp_NH,
                vent_on_o2_LN, vent_off_o2_NL,
                vaso_on_bp_LN, vaso_on_bp_NH,
                vaso_on_dia_bp_LN, vaso_on_dia_bp_LH, vaso_on_dia_bp_NH, vaso_on_dia_glu_up,
                vaso_off_bp_NL, vaso_off_bp_HN, vaso_off_dia_bp_NL, vaso_off_dia_bp_HN,
                fluctuate, fluctuate_glu_diabetic};
    }
    static SepsisParams from_vector(std::span<const double> v) {
        SepsisParams p;
        int i = 0;
        p.abx_on_hr_HN = v[i++]; p.abx_on_bp_HN = v[i++];
        p.abx_off_hr_NH = v[i++]; p.abx_off_bp_NH = v[i++];
        p.vent_on_o2_LN = v[i++]; p.vent_off_o2_NL = v[i++];
        p.vaso_on_bp_LN = v[i++]; p.vaso_on_bp_NH = v[i++];
        p.vaso_on_dia_bp_LN = v[i++]; p.vaso_on_dia_bp_LH = v[i++];
        p.vaso_on_dia_bp_NH = v[i++]; p.vaso_on_dia_glu_up = v[i++];
        p.vaso_off_bp_NL = v[i++]; p.vaso_off_bp_HN = v[i++];
        p.vaso_off_dia_bp_NL = v[i++]; p.vaso_off_dia_bp_HN = v[i++];
        p.fluctuate = v[i++]; p.fluctuate_glu_diabetic = v[i++];
        return p;
    }
};

namespace detail {
/// +-1 fluctuation with a single draw: lower half of the probability mass
/// moves the level down, upper half up; clamped at the enumeration bounds.
inline int fluctuate_level(int level, int levels, double p, RngStream& rng) {
    const double u = rng.uniform();
    if (u < 0.5 * p) return std::max(level - 1, 0);
    if (u < p) return std::min(level + 1, levels - 1);
    return level;
}
} // namespace detail

/// One transition of the sepsis model, applied in Step order 1-7:
/// antibiotics, ventilation, vasopressors, then spontaneous fluctuation of
/// every vital not touched by a treatment rule this step. Treatment "on"
/// effects apply while the treatment is on; "withdrawn" effects fire only
/// on an on->off switch. Flags are updated to the action.
inline SepsisState sepsis_transition(const SepsisState& state, const SepsisAction& action,
                                     const SepsisParams& p, RngStream& rng) {
    SepsisState s = state;
    const bool abx_withdrawn = state.abx && !action.abx;
    const bool vaso_withdrawn = state.vaso && !action.vaso;
    const bool vent_withdrawn = state.vent && !action.vent;

    // Step 1: antibiotics
    if (action.abx) {
        if (s.hr == kHrNormal + 1 && rng.bernoulli(p.abx_on_hr_HN)) s.hr = kHrNormal;
        if (s.bp == kBpNormal + 1 && rng.bernoulli(p.abx_on_bp_HN)) s.bp = kBpNormal;
    } else if (abx_withdrawn) {
        if (s.hr == kHrNormal && rng.bernoulli(p.abx_off_hr_NH)) s.hr = kHrNormal + 1;
        if (s.bp == kBpNormal && rng.bernoulli(p.abx_off_bp_NH)) s.bp = kBpNormal + 1;
    }

    // Step 2: mechanical ventilation
    if (action.vent) {
        if (s.o2 == kO2Normal - 1 && rng.bernoulli(p.vent_on_o2_LN)) s.o2 = kO2Normal;
    } else if (vent_withdrawn) {
        if (s.o2 == kO2Normal && rng.bernoulli(p.vent_off_o2_NL)) s.o2 = kO2Normal - 1;
    }

    // Step 3: vasopressors
    if (action.vaso) {
        if (s.diabetic) {
            if (s.bp == 0) {
                const double u = rng.uniform();
                if (u < p.vaso_on_dia_bp_LN) s.bp = 1;
                else if (u < p.vaso_on_dia_bp_LN + p.vaso_on_dia_bp_LH) s.bp = 2;
            } else if (s.bp == 1 && rng.bernoulli(p.vaso_on_dia_bp_NH)) {
                s.bp = 2;
            }
            if (rng.bernoulli(p.vaso_on_dia_glu_up)) s.glu = std::min(s.glu + 1, kGluLevels - 1);
        } else {
            if (s.bp == 0 && rng.bernoulli(p.vaso_on_bp_LN)) s.bp = 1;
            else if (s.bp == 1 && rng.bernoulli(p.vaso_on_bp_NH)) s.bp = 2;
        }
    } else if (vaso_withdrawn) {
        const double p_nl = s.diabetic ? p.vaso_off_dia_bp_NL : p.vaso_off_bp_NL;
        const double p_hn = s.diabetic ? p.vaso_off_dia_bp_HN : p.vaso_off_bp_HN;
        if (s.bp == 1 && rng.bernoulli(p_nl)) s.bp = 0;
        else if (s.bp == 2 && rng.bernoulli(p_hn)) s.bp = 1;
    }

    // Steps 4-7: spontaneous fluctuation of untreated vitals
    const bool hr_treated = action.abx || abx_withdrawn;
    const bool bp_treated = action.abx || abx_withdrawn || action.vaso || vaso_withdrawn;
    const bool o2_treated = action.vent || vent_withdrawn;
    const bool glu_treated = action.vaso && s.diabetic;
    if (!hr_treated) s.hr = detail::fluctuate_level(s.hr, kHrLevels, p.fluctuate, rng);
    if (!bp_treated) s.bp = detail::fluctuate_level(s.bp, kBpLevels, p.fluctuate, rng);
    if (!o2_treated) s.o2 = detail::fluctuate_level(s.o2, kO2Levels, p.fluctuate, rng);
    if (!glu_treated) {
        const double pg = s.diabetic ? p.fluctuate_glu_diabetic : p.fluctuate;
        s.glu = detail::fluctuate_level(s.glu, kGluLevels, pg, rng);
    }

    s.abx = action.abx;
    s.vaso = action.vaso;
    s.vent = action.vent;
    return s;
}

/// Death: at least three abnormal vitals. Discharge: all vitals normal and
/// every treatment off. Returns (reward, terminated).
inline std::pair<double, bool> sepsis_reward_and_terminal(const SepsisState& s) {
    if (s.abnormal_count() >= 3) return {-1.0, true};
    if (s.all_normal() && !s.any_treatment()) return {1.0, true};
    return {0.0, false};
}

/// Admission state: diabetic with probability `diabetic_prevalence`, vitals
/// uniform over their levels resampled until one or two are abnormal,
/// treatments off. Never satisfies the death or discharge conditions.
inline SepsisState sepsis_initial_state(RngStream& rng, double diabetic_prevalence = 0.2) {
    SepsisState s;
    s.diabetic = rng.bernoulli(diabetic_prevalence);
    do {
        s.hr = rng.uniform_int(kHrLevels);
        s.bp = rng.uniform_int(kBpLevels);
        s.o2 = rng.uniform_int(kO2Levels);
        s.glu = rng.uniform_int(kGluLevels);
    } while (s.abnormal_count() < 1 || s.abnormal_count() > 2);
    s.abx = s.vaso = s.vent = false;
    return s;
}

/// Discrete sepsis MDP. Observation: the four vitals as ordinals scaled to
/// [0, 1]; the diabetes flag is hidden.
class OberstSepsisEnv : public Environment {
public:
    static constexpr int kMaxSteps = 20;
    static constexpr double kDiabeticPrevalence = 0.2;

    OberstSepsisEnv() {
        spec_.name = "OberstSepsisEnv";
        spec_.observation_dim = 4;
        spec_.action_count = 8;
        spec_.max_steps = kMaxSteps;
        spec_.step_interval = 1.0;
        spec_.components = {{"hr", 0.0, 1.0, kHrLevels},
                            {"bp", 0.0, 1.0, kBpLevels},
                            {"o2", 0.0, 1.0, kO2Levels},
                            {"glu", 0.0, 1.0, kGluLevels}};
        spec_.validate();
        remember_nominal();
    }

    const EnvSpec& spec() const override { return spec_; }

    Observation reset(std::uint64_t seed) override {
        rng_ = RngStream(seed, kStreamDynamics);
        RngStream init_rng(seed, kStreamInit);
        state_ = sepsis_initial_state(init_rng, kDiabeticPrevalence);
        begin_episode();
        return observe();
    }

    StepResult step(int action) override {
        const bool at_horizon = advance(action);
        state_ = sepsis_transition(state_, sepsis_action_map(action), params_, rng_);
        StepResult r;
        const auto [reward, terminal] = sepsis_reward_and_terminal(state_);
        r.reward = reward;
        r.terminated = terminal;
        r.truncated = !terminal && at_horizon;
        if (r.terminated || r.truncated) finish_episode();
        r.observation = observe();
        attach_state_info(*this, r);
        return r;
    }

    std::vector<double> action_values(int action) const override {
        const SepsisAction a = sepsis_action_map(action);
        return {a.abx ? 1.0 : 0.0, a.vaso ? 1.0 : 0.0, a.vent ? 1.0 : 0.0};
    }

    std::vector<std::string> action_value_names() const override {
        return {"abx", "vaso", "vent"};
    }

    std::vector<std::string> state_names() const override {
        return {"hr", "bp", "o2", "glu", "diabetic", "abx", "vaso", "vent"};
    }
    std::vector<double> state_snapshot() const override {
        return {static_cast<double>(state_.hr), static_cast<double>(state_.bp),
                static_cast<double>(state_.o2), static_cast<double>(state_.glu),
                state_.diabetic ? 1.0 : 0.0, state_.abx ? 1.0 : 0.0,
                state_.vaso ? 1.0 : 0.0, state_.vent ? 1.0 : 0.0};
    }

    std::vector<double> params() const override { return params_.to_vector(); }
    void set_params(std::span<const double> p) override { params_ = SepsisParams::from_vector(p); }

    /// Probabilities are clamped to [0, 1] after the uniform perturbation.
    void sample_pkpd(double spread, RngStream& rng) override {
        std::vector<double> p = nominal_params_;
        for (double& v : p) v = std::clamp(v * rng.uniform(1.0 - spread, 1.0 + spread), 0.0, 1.0);
        set_params(p);
    }

    const SepsisState& current_state() const { return state_; }
    const SepsisParams& model_params() const { return params_; }

private:
    Observation observe() const {
        return Observation({static_cast<double>(state_.hr) / (kHrLevels - 1),
                            static_cast<double>(state_.bp) / (kBpLevels - 1),
                            static_cast<double>(state_.o2) / (kO2Levels - 1),
                            static_cast<double>(state_.glu) / (kGluLevels - 1)});
    }

    EnvSpec spec_;
    SepsisParams params_;
    SepsisState state_;
    RngStream rng_;
};

} // namespace dtr
