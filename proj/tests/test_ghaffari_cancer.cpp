#include <catch2/catch_amalgamated.hpp>

#include "dtrbench/ghaffari_cancer.hpp"

using namespace dtr;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
std::vector<double> initial_state() {
    return {1e7, 1e5, 1e2, 6.25e6, 0.0, 1e4, 10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
}
} // namespace

TEST_CASE("all-zero cells with zero action leave only the lymphocyte source") {
    GhaffariParams p;
    const std::vector<double> y(13, 0.0);
    const auto d = ghaffari_derivatives(y, {0.0, 0.0}, p, 0.0);
    REQUIRE(d[3] == p.alpha);
    for (int i = 0; i < 13; ++i) {
        if (i == 3) continue;
        REQUIRE(d[i] == 0.0);
    }
}

TEST_CASE("lymphocytes are stationary at alpha/beta") {
    GhaffariParams p;
    std::vector<double> y(13, 0.0);
    y[3] = p.alpha / p.beta; // 7.5e8 / 1.2e2 = 6.25e6
    REQUIRE_THAT(y[3], WithinRel(6.25e6, 1e-12));
    const auto d = ghaffari_derivatives(y, {0.0, 0.0}, p, 0.0);
    REQUIRE_THAT(d[3], WithinAbs(0.0, 1e-6));
}

TEST_CASE("full 13-vector at the initial state, zero action") {
    // frozen from an independent evaluation of the printed system with the
    // constant pre-history Tp(t - tau) = Tp(0)
    GhaffariParams p;
    const auto d = ghaffari_derivatives(initial_state(), {0.0, 0.0}, p, 1e7);
    REQUIRE_THAT(d[0], WithinRel(4265973.890104133, 1e-12));   // dTp
    REQUIRE_THAT(d[1], WithinRel(-340700412.0, 1e-12));        // dNp
    REQUIRE_THAT(d[2], WithinRel(-27939.83465665235, 1e-12));  // dLp
    REQUIRE_THAT(d[3], WithinAbs(0.0, 1e-6));                  // dC
    REQUIRE_THAT(d[4], WithinRel(100.0, 1e-12));               // dTs (metastatic influx)
    REQUIRE_THAT(d[5], WithinRel(1299650.0, 1e-12));           // dNs
    REQUIRE_THAT(d[6], WithinRel(-1.8003, 1e-12));             // dLs
    for (int i = 7; i < 13; ++i) REQUIRE(d[i] == 0.0);
}

TEST_CASE("lysis division guard") {
    GhaffariParams p;
    std::vector<double> y(13, 0.0);
    y[0] = 0.0;
    y[2] = 0.0;
    const auto d = ghaffari_derivatives(y, {0.0, 0.0}, p, 0.0);
    REQUIRE(std::isfinite(d[0]));
}

TEST_CASE("reward at the initial total is zero") {
    const auto [r, term] = ghaffari_reward(6e6, 4e6, 1e7);
    REQUIRE_THAT(r, WithinAbs(0.0, 1e-12));
    REQUIRE_FALSE(term);
}

TEST_CASE("reward at half the initial total") {
    const auto [r, term] = ghaffari_reward(3e6, 2e6, 1e7);
    REQUIRE_THAT(r, WithinAbs(0.5, 1e-12));
    REQUIRE_FALSE(term);
}

TEST_CASE("elimination bonus fires below one cell at both sites") {
    const auto [r, term] = ghaffari_reward(0.5, 0.3, 1e7);
    REQUIRE_THAT(r, WithinAbs(1.0 - 0.8 / 1e7 + 100.0, 1e-9));
    REQUIRE(term);
}

TEST_CASE("overflow penalty fires at the cap") {
    const auto [r, term] = ghaffari_reward(1e11, 0.0, 1e7);
    REQUIRE(term);
    REQUIRE(r < -99.0);
}

TEST_CASE("action grid is row-major D x vM") {
    REQUIRE(ghaffari_action_map(0).radiation == 0.0);
    REQUIRE(ghaffari_action_map(0).chemo == 0.0);
    REQUIRE(ghaffari_action_map(8).radiation == 10.0);
    REQUIRE(ghaffari_action_map(8).chemo == 8.0);
    REQUIRE(ghaffari_action_map(5).radiation == 5.0);
    REQUIRE(ghaffari_action_map(5).chemo == 8.0);
    REQUIRE_THROWS_AS(ghaffari_action_map(9), EnvError);
}

TEST_CASE("observation exposes the seven cell populations") {
    GhaffariCancerEnv env;
    const Observation obs = env.reset(0);
    REQUIRE(obs.dim() == 7);
    REQUIRE_THAT(obs.values[0], WithinRel(1e7, 1e-12));
    const auto names = env.state_names();
    REQUIRE(names.size() == 13); // M, u, v, x and the accumulators stay hidden
}

TEST_CASE("no metastatic influx means the secondary site stays empty") {
    GhaffariCancerEnv env;
    auto p = GhaffariParams::from_vector(env.params());
    p.alpha2 = 0.0;
    env.set_params(p.to_vector());
    env.reset(0);
    for (int i = 0; i < 25; ++i) {
        const auto r = env.step(0);
        REQUIRE(r.info.at("s.Ts") == 0.0);
        if (r.terminated || r.truncated) break;
    }
    env.reset_pkpd();
}

TEST_CASE("delayed influx: the secondary site grows from the pre-history") {
    GhaffariCancerEnv env;
    env.reset(0);
    const auto r = env.step(0);
    REQUIRE(r.info.at("s.Ts") > 0.0);
}

TEST_CASE("episode truncates at 60 daily steps under no treatment") {
    GhaffariCancerEnv env;
    env.reset(0);
    StepResult r;
    int steps = 0;
    do {
        r = env.step(0);
        ++steps;
    } while (!r.terminated && !r.truncated);
    REQUIRE(steps == 60);
    REQUIRE(r.truncated);
}

TEST_CASE("determinism across resets") {
    GhaffariCancerEnv a, b;
    a.reset(5);
    b.reset(5);
    for (int i = 0; i < 10; ++i) {
        const auto ra = a.step(4);
        const auto rb = b.step(4);
        REQUIRE(ra.observation.values == rb.observation.values);
        REQUIRE(ra.reward == rb.reward);
        REQUIRE(ra.terminated == rb.terminated);
        if (ra.terminated || ra.truncated) break;
    }
}
