#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "dtrbench/core.hpp"

namespace dtr {

/// Benchmark settings. Cumulative: each level keeps everything the previous
/// one adds.
enum class Setting { kBase = 0, kPkpd = 1, kPkpdNoise = 2, kPkpdNoiseMissing = 3 };

inline std::string setting_name(Setting s) {
    switch (s) {
        case Setting::kBase: return "p";
        case Setting::kPkpd: return "p1";
        case Setting::kPkpdNoise: return "p2";
        case Setting::kPkpdNoiseMissing: return "p3";
    }
    return "p";
}

inline Setting parse_setting(const std::string& name) {
    if (name == "p" || name == "p0") return Setting::kBase;
    if (name == "p1") return Setting::kPkpd;
    if (name == "p2") return Setting::kPkpdNoise;
    if (name == "p3") return Setting::kPkpdNoiseMissing;
    throw EnvError("unknown setting '" + name + "' (expected p, p1, p2 or p3)");
}

enum class FillPolicy { kLocf, kPopulationDefault };

struct RealismConfig {
    Setting setting = Setting::kBase;
    double pkpd_spread = 0.2;   // uniform parameter range half-width
    double noise_scale = 0.05;  // Gaussian sd as a fraction of component range
    double flip_prob = 0.05;    // categorical level-flip probability
    double missing_ratio = 0.2; // Bernoulli masking rate
    FillPolicy fill = FillPolicy::kLocf;

    void validate() const {
        if (pkpd_spread < 0.0 || pkpd_spread >= 1.0)
            throw EnvError("RealismConfig: pkpd_spread must be in [0, 1)");
        if (noise_scale < 0.0) throw EnvError("RealismConfig: noise_scale must be >= 0");
        if (flip_prob < 0.0 || flip_prob > 1.0)
            throw EnvError("RealismConfig: flip_prob must be in [0, 1]");
        if (missing_ratio < 0.0 || missing_ratio >= 1.0)
            throw EnvError("RealismConfig: missing_ratio must be in [0, 1)");
    }
};

/// Observation noise: continuous components gain clipped Gaussian noise
/// scaled by the declared range; ordinal components flip one level up or
/// down with `flip_prob`.
inline void apply_noise(Observation& obs, const EnvSpec& spec, double noise_scale,
                        double flip_prob, RngStream& rng) {
    for (int i = 0; i < obs.dim(); ++i) {
        const ComponentSpec& c = spec.components[i];
        if (c.levels > 0) {
            if (rng.bernoulli(flip_prob)) {
                const double denom = static_cast<double>(c.levels - 1);
                int level = static_cast<int>(std::lround(obs.values[i] * denom));
                level += rng.bernoulli(0.5) ? 1 : -1;
                level = std::clamp(level, 0, c.levels - 1);
                obs.values[i] = static_cast<double>(level) / denom;
            }
        } else {
            const double noisy = obs.values[i] + rng.normal() * (noise_scale * (c.hi - c.lo));
            obs.values[i] = std::clamp(noisy, c.lo, c.hi);
        }
    }
}

/// Per-component midpoint fills used before a component was ever observed.
inline std::vector<double> population_defaults(const EnvSpec& spec) {
    std::vector<double> d(spec.observation_dim);
    for (int i = 0; i < spec.observation_dim; ++i)
        d[i] = 0.5 * (spec.components[i].lo + spec.components[i].hi);
    return d;
}

/// Missing values: each component masked i.i.d.; masked components carry
/// presence 0 and a fill value. `last_seen` tracks the most recent observed
/// value per component (negative presence there means never observed).
inline void apply_mask(Observation& obs, double missing_ratio, FillPolicy fill,
                       std::vector<double>& last_seen, std::vector<bool>& ever_seen,
                       const std::vector<double>& defaults, RngStream& rng) {
    for (int i = 0; i < obs.dim(); ++i) {
        if (rng.bernoulli(missing_ratio)) {
            obs.presence[i] = 0.0;
            const bool use_locf = fill == FillPolicy::kLocf && ever_seen[i];
            obs.values[i] = use_locf ? last_seen[i] : defaults[i];
        } else {
            obs.presence[i] = 1.0;
            last_seen[i] = obs.values[i];
            ever_seen[i] = true;
        }
    }
}

/// Wraps any environment into one of the four benchmark settings. Only the
/// sampled parameters (at reset) and the emitted observations are touched;
/// rewards, termination and the hidden state pass through unchanged. Every
/// stochastic concern draws from its own stream, so disabling one leaves
/// the others' sequences intact.
class RealismWrapper : public Environment {
public:
    RealismWrapper(std::unique_ptr<Environment> inner, RealismConfig config)
        : inner_(std::move(inner)), config_(config) {
        config_.validate();
        defaults_ = population_defaults(inner_->spec());
    }

    const EnvSpec& spec() const override { return inner_->spec(); }

    Observation reset(std::uint64_t seed) override {
        if (config_.setting >= Setting::kPkpd) {
            RngStream pkpd_rng(seed, kStreamPkpd);
            inner_->sample_pkpd(config_.pkpd_spread, pkpd_rng);
        } else {
            inner_->reset_pkpd();
        }
        noise_rng_ = RngStream(seed, kStreamNoise);
        mask_rng_ = RngStream(seed, kStreamMask);
        last_seen_.assign(spec().observation_dim, 0.0);
        ever_seen_.assign(spec().observation_dim, false);
        Observation obs = inner_->reset(seed);
        transform(obs);
        return obs;
    }

    StepResult step(int action) override {
        StepResult r = inner_->step(action);
        transform(r.observation);
        return r;
    }

    std::vector<double> action_values(int action) const override {
        return inner_->action_values(action);
    }
    std::vector<std::string> state_names() const override { return inner_->state_names(); }
    std::vector<double> state_snapshot() const override { return inner_->state_snapshot(); }
    std::vector<double> params() const override { return inner_->params(); }
    void set_params(std::span<const double> p) override { inner_->set_params(p); }
    void sample_pkpd(double spread, RngStream& rng) override { inner_->sample_pkpd(spread, rng); }
    void reset_pkpd() override { inner_->reset_pkpd(); }

    int steps_taken() const override { return inner_->steps_taken(); }
    bool episode_active() const override { return inner_->episode_active(); }

    const RealismConfig& config() const { return config_; }
    Environment& inner() { return *inner_; }

private:
    void transform(Observation& obs) {
        if (config_.setting >= Setting::kPkpdNoise)
            apply_noise(obs, spec(), config_.noise_scale, config_.flip_prob, noise_rng_);
        if (config_.setting >= Setting::kPkpdNoiseMissing)
            apply_mask(obs, config_.missing_ratio, config_.fill, last_seen_, ever_seen_,
                       defaults_, mask_rng_);
    }

    std::unique_ptr<Environment> inner_;
    RealismConfig config_;
    RngStream noise_rng_, mask_rng_;
    std::vector<double> last_seen_;
    std::vector<bool> ever_seen_;
    std::vector<double> defaults_;
};

/// Builds a wrapped environment for a benchmark setting.
inline std::unique_ptr<Environment> with_setting(std::unique_ptr<Environment> env,
                                                 RealismConfig config) {
    return std::make_unique<RealismWrapper>(std::move(env), config);
}

} // namespace dtr
