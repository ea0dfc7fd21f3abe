#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dtrbench/ode.hpp"

using namespace dtr;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

OdeSystem exponential_decay(double rate) {
    OdeSystem sys;
    sys.dimension = 1;
    sys.derivative = [rate](double, std::span<const double> y, std::span<const double> c,
                            std::vector<double>& dy) {
        dy.assign({-rate * y[0] + (c.empty() ? 0.0 : c[0])});
    };
    return sys;
}

} // namespace

TEST_CASE("rk4 matches the exponential closed form") {
    auto sys = exponential_decay(1.0);
    const std::vector<double> y0{1.0};
    const std::vector<double> u{0.0};
    const auto y = rk4_step(sys, y0, u, 0.0, 1.0, 100);
    REQUIRE_THAT(y[0], WithinAbs(std::exp(-1.0), 1e-6));
}

TEST_CASE("chemo drug decay d2=1 over one 6-hour step") {
    // dB/dt = -d2*B + u with d2 = 1, u = 0
    auto sys = exponential_decay(1.0);
    const std::vector<double> y0{1.0};
    const std::vector<double> u{0.0};
    const auto y = rk4_step(sys, y0, u, 0.0, 0.25, 10);
    REQUIRE_THAT(y[0], WithinRel(std::exp(-0.25), 1e-6));
}

TEST_CASE("zero derivative leaves the state unchanged") {
    OdeSystem sys;
    sys.dimension = 3;
    sys.derivative = [](double, std::span<const double>, std::span<const double>,
                        std::vector<double>& dy) { dy.assign({0.0, 0.0, 0.0}); };
    const std::vector<double> y0{1.5, -2.0, 7.0};
    const auto y = rk4_step(sys, y0, {}, 0.0, 3.0, 7);
    REQUIRE(y == y0);
}

TEST_CASE("fourth-order convergence on exponential decay") {
    auto sys = exponential_decay(1.0);
    const std::vector<double> y0{1.0};
    const std::vector<double> u{0.0};
    const double exact = std::exp(-1.0);
    // error(h) / error(h/2) should be ~2^4
    const auto coarse = rk4_step(sys, y0, u, 0.0, 1.0, 4);
    const auto fine = rk4_step(sys, y0, u, 0.0, 1.0, 8);
    const double ratio = std::abs(coarse[0] - exact) / std::abs(fine[0] - exact);
    REQUIRE(ratio > 12.0);
    REQUIRE(ratio < 20.0);
}

TEST_CASE("range projection clamps after every sub-step") {
    OdeSystem sys;
    sys.dimension = 1;
    sys.ranges = {{0.0, 1.0}};
    sys.derivative = [](double, std::span<const double>, std::span<const double>,
                        std::vector<double>& dy) { dy.assign({-100.0}); };
    const std::vector<double> y0{0.5};
    const auto y = rk4_step(sys, y0, {}, 0.0, 1.0, 10);
    REQUIRE(y[0] == 0.0);
}

TEST_CASE("non-finite derivative raises with the component index") {
    OdeSystem sys;
    sys.dimension = 2;
    sys.derivative = [](double, std::span<const double>, std::span<const double>,
                        std::vector<double>& dy) {
        dy.assign({0.0, std::numeric_limits<double>::quiet_NaN()});
    };
    const std::vector<double> y0{0.0, 0.0};
    try {
        rk4_step(sys, y0, {}, 0.0, 1.0, 1);
        FAIL("expected IntegrationError");
    } catch (const IntegrationError& e) {
        REQUIRE(e.component_index == 1);
    }
}

TEST_CASE("rk4 rejects bad arguments") {
    auto sys = exponential_decay(1.0);
    const std::vector<double> y0{1.0};
    REQUIRE_THROWS_AS(rk4_step(sys, y0, {}, 0.0, -1.0, 1), std::invalid_argument);
    REQUIRE_THROWS_AS(rk4_step(sys, y0, {}, 0.0, 1.0, 0), std::invalid_argument);
}

TEST_CASE("delay buffer pre-history and constant trajectory") {
    DelayBuffer buf(10.0, 64, {3.0});
    REQUIRE(buf.lookup(0.0)[0] == 3.0);
    REQUIRE(buf.lookup(9.999)[0] == 3.0);
    for (int i = 0; i <= 20; ++i) buf.push(i * 1.0, std::vector<double>{3.0});
    for (double t : {10.0, 15.0, 20.0}) REQUIRE(buf.lookup(t)[0] == 3.0);
}

TEST_CASE("delay buffer tracks a linear ramp within one sub-step") {
    // stored value v(t) = 2t at resolution h = 0.25
    const double h = 0.25, tau = 5.0;
    DelayBuffer buf(tau, 256, {0.0});
    for (int i = 0; i <= 120; ++i) {
        const double t = i * h;
        buf.push(t, std::vector<double>{2.0 * t});
    }
    for (double t : {5.0, 7.3, 12.81, 30.0}) {
        const double expect = 2.0 * (t - tau);
        REQUIRE_THAT(buf.lookup(t)[0], WithinAbs(expect, 2.0 * h + 1e-12));
    }
}

TEST_CASE("delay buffer ring keeps enough history") {
    DelayBuffer buf(1.0, 12, {0.0}); // capacity beyond tau/h = 10
    const double h = 0.1;
    for (int i = 0; i <= 1000; ++i) buf.push(i * h, std::vector<double>{i * h});
    // lookup at t - tau = 99.0
    REQUIRE_THAT(buf.lookup(100.0)[0], WithinAbs(99.0, h + 1e-9));
}
