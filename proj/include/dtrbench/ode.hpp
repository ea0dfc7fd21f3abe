#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dtr {

class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& what, int component)
        : std::runtime_error(what + " (component " + std::to_string(component) + ")"),
          component_index(component) {}
    int component_index;
};

/// Right-hand side of an autonomous-with-control ODE system. `control` holds
/// the piecewise-constant treatment values for the current step.
struct OdeSystem {
    int dimension = 0;
    std::function<void(double t, std::span<const double> state,
                       std::span<const double> control, std::vector<double>& dstate)>
        derivative;
    // per-component clamp applied after every sub-step; cell counts and
    // concentrations are physically bounded
    std::vector<std::pair<double, double>> ranges;
};

namespace detail {
inline void eval_derivative(const OdeSystem& sys, double t, std::span<const double> state,
                            std::span<const double> control, std::vector<double>& out) {
    sys.derivative(t, state, control, out);
    for (int i = 0; i < sys.dimension; ++i) {
        if (!std::isfinite(out[i]))
            throw IntegrationError("non-finite derivative", i);
    }
}
} // namespace detail

/// Classic fixed-step RK4 over [t0, t0+dt] in `substeps` equal sub-steps,
/// projecting every component back into its declared range after each
/// sub-step. Optional `on_substep(t, state)` fires after each projection
/// (used to record delayed-state snapshots).
inline std::vector<double> rk4_step(
    const OdeSystem& sys, std::span<const double> state, std::span<const double> control,
    double t0, double dt, int substeps,
    const std::function<void(double, std::span<const double>)>& on_substep = nullptr) {
    if (dt <= 0.0) throw std::invalid_argument("rk4_step: dt must be > 0");
    if (substeps < 1) throw std::invalid_argument("rk4_step: substeps must be >= 1");
    const int n = sys.dimension;
    std::vector<double> y(state.begin(), state.end());
    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
    const double h = dt / substeps;
    double t = t0;
    for (int s = 0; s < substeps; ++s) {
        detail::eval_derivative(sys, t, y, control, k1);
        for (int i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        detail::eval_derivative(sys, t + 0.5 * h, tmp, control, k2);
        for (int i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
        detail::eval_derivative(sys, t + 0.5 * h, tmp, control, k3);
        for (int i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
        detail::eval_derivative(sys, t + h, tmp, control, k4);
        for (int i = 0; i < n; ++i)
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if (!sys.ranges.empty()) {
            for (int i = 0; i < n; ++i)
                y[i] = std::clamp(y[i], sys.ranges[i].first, sys.ranges[i].second);
        }
        t = t0 + (s + 1) * h;
        if (on_substep) on_substep(t, y);
    }
    return y;
}

/// Snapshot ring for delayed-state terms. Stores (time, vector) pairs at
/// sub-step resolution; lookups before recorded history return the fill
/// value (constant pre-history convention).
class DelayBuffer {
public:
    DelayBuffer() = default;

    /// `capacity` should cover at least tau / h_substep entries.
    DelayBuffer(double tau, std::size_t capacity, std::vector<double> fill)
        : tau_(tau), capacity_(std::max<std::size_t>(capacity, 2)), fill_(std::move(fill)) {}

    double tau() const { return tau_; }

    void clear(std::vector<double> fill) {
        entries_.clear();
        head_ = 0;
        fill_ = std::move(fill);
    }

    void push(double t, std::span<const double> state) {
        Entry e{t, std::vector<double>(state.begin(), state.end())};
        if (entries_.size() < capacity_) {
            entries_.push_back(std::move(e));
        } else {
            entries_[head_] = std::move(e);
            head_ = (head_ + 1) % capacity_;
        }
    }

    /// Delayed state at current time `t`: the snapshot nearest to t - tau,
    /// or the fill value while t < tau (constant pre-history).
    const std::vector<double>& lookup(double t) const {
        if (t < tau_ || entries_.empty()) return fill_;
        const double target = t - tau_;
        const Entry* best = nullptr;
        double best_gap = std::numeric_limits<double>::infinity();
        for (const Entry& e : entries_) {
            const double gap = std::abs(e.t - target);
            if (gap < best_gap) {
                best_gap = gap;
                best = &e;
            }
        }
        return best->state;
    }

private:
    struct Entry {
        double t = 0.0;
        std::vector<double> state;
    };
    double tau_ = 0.0;
    std::size_t capacity_ = 2;
    std::vector<double> fill_;
    std::vector<Entry> entries_;
    std::size_t head_ = 0;
};

} // namespace dtr
