#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dtrbench/agents.hpp"
#include "dtrbench/ahn_chemo.hpp"
#include "dtrbench/oberst_sepsis.hpp"
#include "dtrbench/trainer.hpp"

using namespace dtr;
using Catch::Matchers::WithinAbs;

TEST_CASE("featurize normalises by range and appends presence flags") {
    AhnChemoEnv env;
    Observation obs({1.0, 0.5, 0.25});
    obs.presence = {1.0, 0.0, 1.0};
    const auto x = featurize(obs, env.spec());
    REQUIRE(x.size() == 6);
    REQUIRE_THAT(x[0], WithinAbs(0.5, 1e-12));   // T in (0,2)
    REQUIRE_THAT(x[1], WithinAbs(0.25, 1e-12));  // I in (0,2)
    REQUIRE_THAT(x[2], WithinAbs(0.25, 1e-12));  // B in (0,1)
    REQUIRE(x[3] == 1.0);
    REQUIRE(x[4] == 0.0);
    REQUIRE(x[5] == 1.0);
}

TEST_CASE("replay buffer ring and batch sampling") {
    ReplayBuffer buf(4);
    for (int i = 0; i < 6; ++i) {
        Transition t;
        t.reward = i;
        buf.push(std::move(t));
    }
    REQUIRE(buf.size() == 4);
    RngStream rng(1, kStreamReplay);
    const auto batch = buf.sample(3, rng);
    REQUIRE(batch.size() == 3);
    // without replacement: distinct pointers
    REQUIRE(batch[0] != batch[1]);
    REQUIRE(batch[1] != batch[2]);
    REQUIRE(batch[0] != batch[2]);
    // oldest entries were overwritten
    for (const auto* t : batch) REQUIRE(t->reward >= 2.0);
    const auto all = buf.sample(100, rng);
    REQUIRE(all.size() == 4);
}

TEST_CASE("epsilon schedule decays linearly and clamps") {
    EpsilonSchedule s;
    s.start = 1.0;
    s.end = 0.005;
    s.decay_steps = 1000;
    REQUIRE(s.at(0) == 1.0);
    REQUIRE_THAT(s.at(500), WithinAbs(0.5025, 1e-9));
    REQUIRE(s.at(1000) == 0.005);
    REQUIRE(s.at(100000) == 0.005);
    double prev = 2.0;
    for (long t = 0; t <= 1200; t += 50) {
        REQUIRE(s.at(t) <= prev);
        prev = s.at(t);
    }
}

TEST_CASE("dqn target: bootstrap drops on termination, survives truncation") {
    const std::vector<double> next_q{0.5, 2.0, 1.0};
    REQUIRE_THAT(dqn_target(0.0, false, next_q, 0.95), WithinAbs(1.9, 1e-12));
    REQUIRE_THAT(dqn_target(-1.0, true, next_q, 0.95), WithinAbs(-1.0, 1e-12));
    const std::vector<double> zeros{0.0, 0.0, 0.0};
    REQUIRE_THAT(dqn_target(0.7, false, zeros, 0.95), WithinAbs(0.7, 1e-12));
}

TEST_CASE("ddqn decouples selection from evaluation") {
    // online prefers action 1, target values disagree
    const std::vector<double> online{0.1, 0.9};
    const std::vector<double> target{2.0, 0.5};
    REQUIRE_THAT(ddqn_target(0.0, false, online, target, 1.0), WithinAbs(0.5, 1e-12));
    // identical nets collapse to the dqn target
    REQUIRE_THAT(ddqn_target(0.0, false, target, target, 1.0),
                 WithinAbs(dqn_target(0.0, false, target, 1.0), 1e-12));
    // the ddqn target never exceeds the dqn target for the same target net
    REQUIRE(ddqn_target(0.0, false, online, target, 1.0) <=
            dqn_target(0.0, false, target, 1.0));
    REQUIRE(ddqn_target(3.0, true, online, target, 1.0) == 3.0);
}

TEST_CASE("dueling combine: mean-centred advantages") {
    const std::vector<double> adv_equal{0.7, 0.7, 0.7};
    const auto q1 = dueling_combine(2.0, adv_equal);
    for (double q : q1) REQUIRE_THAT(q, WithinAbs(2.0, 1e-12));

    const auto q2 = dueling_combine(1.0, std::vector<double>{1.0, 3.0});
    REQUIRE_THAT(q2[0], WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(q2[1], WithinAbs(2.0, 1e-12));

    // shift invariance
    const auto q3 = dueling_combine(1.0, std::vector<double>{11.0, 13.0});
    REQUIRE_THAT(q3[0], WithinAbs(q2[0], 1e-12));
    REQUIRE_THAT(q3[1], WithinAbs(q2[1], 1e-12));
}

TEST_CASE("c51 projection: identity on on-grid shifts and mass conservation") {
    const int atoms = 51;
    std::vector<double> support(atoms);
    for (int i = 0; i < atoms; ++i) support[i] = -10.0 + 0.4 * i;

    SECTION("identity when r=0, gamma=1") {
        std::vector<double> dist(atoms, 0.0);
        dist[10] = 0.25;
        dist[30] = 0.75;
        const auto m = c51_project(dist, 0.0, 1.0, support);
        for (int i = 0; i < atoms; ++i) REQUIRE_THAT(m[i], WithinAbs(dist[i], 1e-12));
    }
    SECTION("unit mass shifts exactly k atoms") {
        std::vector<double> dist(atoms, 0.0);
        dist[25] = 1.0; // z = 0
        const auto m = c51_project(dist, 5 * 0.4, 1.0, support);
        REQUIRE_THAT(m[30], WithinAbs(1.0, 1e-12));
    }
    SECTION("off-grid shift splits mass between neighbours") {
        std::vector<double> dist(atoms, 0.0);
        dist[25] = 1.0;
        const auto m = c51_project(dist, 0.1, 1.0, support);
        REQUIRE_THAT(m[25], WithinAbs(0.75, 1e-9));
        REQUIRE_THAT(m[26], WithinAbs(0.25, 1e-9));
    }
    SECTION("random distributions conserve mass and stay non-negative") {
        RngStream rng(5, 0);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<double> dist(atoms);
            double sum = 0.0;
            for (double& v : dist) {
                v = rng.uniform();
                sum += v;
            }
            for (double& v : dist) v /= sum;
            const double r = rng.uniform(-30.0, 30.0);
            const double g = rng.uniform(0.0, 1.0);
            const auto m = c51_project(dist, r, g, support);
            double total = 0.0;
            for (double v : m) {
                REQUIRE(v >= 0.0);
                total += v;
            }
            REQUIRE_THAT(total, WithinAbs(1.0, 1e-6));
        }
    }
}

TEST_CASE("epsilon-greedy: uniform at eps=1, greedy at eps=0, lowest-index ties") {
    const std::vector<double> q{0.1, 0.9, 0.9};
    RngStream rng(8, kStreamPolicy);
    int counts[3] = {0, 0, 0};
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[epsilon_greedy(q, 1.0, rng)];
    for (int c : counts) REQUIRE_THAT(c / static_cast<double>(n), WithinAbs(1.0 / 3, 0.01));

    REQUIRE(epsilon_greedy(q, 0.0, rng) == 1); // tie between 1 and 2 -> lowest
    const std::vector<double> flat{0.5, 0.5, 0.5};
    REQUIRE(epsilon_greedy(flat, 0.0, rng) == 0);

    // positive rescaling never changes the greedy choice
    std::vector<double> q2{0.2, -0.4, 0.1};
    std::vector<double> q2s{2.0, -4.0, 1.0};
    REQUIRE(greedy_action(q2) == greedy_action(q2s));
}

TEST_CASE("baseline policies") {
    AhnChemoEnv env;
    RngStream rng(9, kStreamPolicy);
    const Observation obs = env.reset(0);

    auto zero = baseline_policy(BaselineKind::kZeroDrug, env.spec());
    auto maxd = baseline_policy(BaselineKind::kMaxDrug, env.spec());
    for (int i = 0; i < 10; ++i) {
        REQUIRE(zero->act(obs, 0.0, rng) == 0);
        REQUIRE(maxd->act(obs, 0.0, rng) == 4);
    }
    REQUIRE(env.action_values(0)[0] == 0.0);
    REQUIRE(env.action_values(4)[0] == 1.0);

    auto rnd = baseline_policy(BaselineKind::kRandom, env.spec());
    int seen[5] = {0, 0, 0, 0, 0};
    for (int i = 0; i < 5000; ++i) ++seen[rnd->act(obs, 0.0, rng)];
    for (int c : seen) REQUIRE(c > 0);
}

TEST_CASE("tabular q-learning update rule") {
    std::unordered_map<long, std::vector<double>> table;
    // terminated, r=1, alpha=1: Q goes straight to 1
    tabular_q_update(table, 2, 5, 1, 1.0, 6, true, 1.0, 0.95);
    REQUIRE(table[5][1] == 1.0);
    // alpha=0: no change
    tabular_q_update(table, 2, 5, 1, -10.0, 6, true, 0.0, 0.95);
    REQUIRE(table[5][1] == 1.0);
    // bootstrap pulls toward r + gamma * max Q(s')
    tabular_q_update(table, 2, 7, 0, 0.0, 5, false, 0.5, 0.95);
    REQUIRE_THAT(table[7][0], WithinAbs(0.5 * 0.95 * 1.0, 1e-12));
}

TEST_CASE("tabular q converges on a two-state deterministic chain") {
    // state 0 --a0--> state 1 (r=0), state 1 --a0--> terminal (r=1)
    // closed form with gamma: Q(0,a0) = gamma * 1, Q(1,a0) = 1
    std::unordered_map<long, std::vector<double>> table;
    const double gamma = 0.95, alpha = 0.2;
    for (int it = 0; it < 500; ++it) {
        tabular_q_update(table, 1, 0, 0, 0.0, 1, false, alpha, gamma);
        tabular_q_update(table, 1, 1, 0, 1.0, 2, true, alpha, gamma);
    }
    REQUIRE_THAT(table[1][0], WithinAbs(1.0, 1e-6));
    REQUIRE_THAT(table[0][0], WithinAbs(0.95, 1e-6));
}

TEST_CASE("observation key enumerates sepsis vitals") {
    OberstSepsisEnv env;
    Observation obs({0.0, 0.5, 1.0, 0.25}); // hr=0, bp=1, o2=2, glu=1
    const long key = observation_key(obs, env.spec());
    REQUIRE(key == ((0 * 3 + 1) * 3 + 2) * 5 + 1);
    AhnChemoEnv cont;
    Observation cobs({0.1, 0.1, 0.1});
    REQUIRE_THROWS_AS(observation_key(cobs, cont.spec()), EnvError);
}

TEST_CASE("qagent: act is deterministic at eps=0 and respects the action count") {
    AhnChemoEnv env;
    AgentHyperparams hp;
    hp.hidden_width = 16;
    hp.hidden_depth = 2;
    QAgent agent(Algorithm::kDqn, env.spec(), hp, 123);
    const Observation obs = env.reset(0);
    RngStream r1(1, kStreamPolicy), r2(1, kStreamPolicy);
    const int a1 = agent.act(obs, 0.0, r1);
    const int a2 = agent.act(obs, 0.0, r2);
    REQUIRE(a1 == a2);
    REQUIRE(a1 >= 0);
    REQUIRE(a1 < 5);
}

TEST_CASE("qagent training step runs for every algorithm head") {
    AhnChemoEnv env;
    for (auto alg : {Algorithm::kDqn, Algorithm::kDdqn, Algorithm::kDuel, Algorithm::kC51}) {
        AgentHyperparams hp;
        hp.hidden_width = 16;
        hp.hidden_depth = 1;
        hp.batch_size = 8;
        hp.warmup_steps = 8;
        hp.target_update_freq = 2;
        QAgent agent(alg, env.spec(), hp, 7);
        ReplayBuffer buf(64);
        Observation obs = env.reset(0);
        RngStream rng(3, kStreamPolicy);
        for (int i = 0; i < 32; ++i) {
            const int a = agent.act(obs, 0.5, rng);
            const auto r = env.step(a);
            buf.push({featurize(obs, env.spec()), a, r.reward,
                      featurize(r.observation, env.spec()), r.terminated, r.truncated});
            obs = r.observation;
            if (r.terminated || r.truncated) obs = env.reset(1);
        }
        RngStream srng(4, kStreamReplay);
        double loss1 = 0.0;
        for (int k = 0; k < 10; ++k) loss1 = agent.train_batch(buf.sample(8, srng));
        REQUIRE(std::isfinite(loss1));
        REQUIRE(agent.gradient_steps() == 10);
    }
}

TEST_CASE("c51 agent q-values are expectations within the support") {
    OberstSepsisEnv env;
    AgentHyperparams hp;
    hp.hidden_width = 8;
    hp.hidden_depth = 1;
    hp.v_min = -10.0;
    hp.v_max = 10.0;
    QAgent agent(Algorithm::kC51, env.spec(), hp, 5);
    const Observation obs = env.reset(2);
    const auto q = agent.q_values(featurize(obs, env.spec()));
    REQUIRE(q.size() == 8);
    for (double v : q) {
        REQUIRE(v >= -10.0);
        REQUIRE(v <= 10.0);
    }
}

TEST_CASE("training loop is deterministic in the seed") {
    auto run = [] {
        OberstSepsisEnv env;
        AgentHyperparams hp;
        hp.hidden_width = 8;
        hp.hidden_depth = 1;
        hp.batch_size = 16;
        hp.warmup_steps = 32;
        hp.epsilon.decay_steps = 500;
        QAgent agent(Algorithm::kDqn, env.spec(), hp, 99);
        const auto stats = train_agent(agent, env, 600, 42);
        return std::make_pair(stats.episode_returns, agent.online_net().parameters());
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.first == b.first);
    REQUIRE(a.second == b.second);
}
