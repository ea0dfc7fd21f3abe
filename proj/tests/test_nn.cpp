#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "dtrbench/nn.hpp"

using namespace dtr;
using Catch::Matchers::WithinAbs;

namespace {

/// Scalar loss of a net under fixed inputs/targets: mean Huber over the
/// batch against per-sample scalar targets on summed outputs. Used as the
/// finite-difference oracle target.
double net_loss(Mlp& net, const std::vector<double>& X, int batch,
                const std::vector<double>& targets, RngStream* drop = nullptr) {
    const auto Y = net.forward(X, batch, true, drop);
    const int out = net.output_dim();
    double loss = 0.0;
    for (int n = 0; n < batch; ++n) {
        double s = 0.0;
        for (int j = 0; j < out; ++j) s += Y[n * out + j];
        loss += huber_loss(s, targets[n]).first;
    }
    return loss / batch;
}

void loss_grad(Mlp& net, const std::vector<double>& X, int batch,
               const std::vector<double>& targets, std::vector<double>& grad) {
    const auto Y = net.forward(X, batch, true, nullptr);
    const int out = net.output_dim();
    std::vector<double> dY(batch * out, 0.0);
    for (int n = 0; n < batch; ++n) {
        double s = 0.0;
        for (int j = 0; j < out; ++j) s += Y[n * out + j];
        const double d = huber_loss(s, targets[n]).second / batch;
        for (int j = 0; j < out; ++j) dY[n * out + j] = d;
    }
    net.backward(dY, grad);
}

double max_relative_grad_error(Mlp& net, int batch, std::uint64_t seed) {
    RngStream rng(seed, 0);
    std::vector<double> X(batch * net.input_dim());
    for (double& v : X) v = rng.uniform(-1.0, 1.0);
    std::vector<double> targets(batch);
    for (double& v : targets) v = rng.uniform(-2.0, 2.0);

    std::vector<double> analytic;
    loss_grad(net, X, batch, targets, analytic);

    auto& params = net.parameters();
    double worst = 0.0;
    const double h = 1e-6;
    // forward bn running-stat updates would shift the loss between calls;
    // stash and restore buffers around each probe
    const auto buffers0 = net.buffers();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        net.buffers() = buffers0;
        const double up = net_loss(net, X, batch, targets);
        params[i] = keep - h;
        net.buffers() = buffers0;
        const double dn = net_loss(net, X, batch, targets);
        params[i] = keep;
        const double numeric = (up - dn) / (2.0 * h);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
    net.buffers() = buffers0;
    return worst;
}

} // namespace

TEST_CASE("zero-weight net maps everything to zero") {
    RngStream rng(1, 0);
    Mlp net({{4, 8, 3}, false, 0.0}, rng);
    std::fill(net.parameters().begin(), net.parameters().end(), 0.0);
    const auto y = net.predict(std::vector<double>{1.0, -2.0, 3.0, 0.5});
    REQUIRE(y == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("1x1 affine net computes w*x + b") {
    RngStream rng(2, 0);
    Mlp net({{1, 1}, false, 0.0}, rng);
    net.parameters()[0] = 2.0; // weight
    net.parameters()[1] = 1.0; // bias
    const auto y = net.predict(std::vector<double>{3.0});
    REQUIRE_THAT(y[0], WithinAbs(7.0, 1e-12));
}

TEST_CASE("batch forward equals per-row forward") {
    RngStream rng(3, 0);
    Mlp net({{5, 16, 16, 4}, false, 0.0}, rng);
    RngStream data(4, 0);
    std::vector<double> X(3 * 5);
    for (double& v : X) v = data.uniform(-1.0, 1.0);
    const auto Y = net.forward(X, 3, false, nullptr);
    for (int n = 0; n < 3; ++n) {
        const auto yn = net.predict(std::span<const double>(X).subspan(n * 5, 5));
        for (int j = 0; j < 4; ++j) REQUIRE_THAT(Y[n * 4 + j], WithinAbs(yn[j], 1e-12));
    }
}

TEST_CASE("linear one-layer gradient closed form") {
    // pred = w*x + b, squared loss -> dw = 2(pred-target)*x, db = 2(pred-target)
    RngStream rng(5, 0);
    Mlp net({{1, 1}, false, 0.0}, rng);
    net.parameters()[0] = 1.5;
    net.parameters()[1] = -0.5;
    const std::vector<double> X{2.0};
    const auto Y = net.forward(X, 1, true, nullptr);
    const double target = 4.0;
    const auto [l, dl] = squared_loss(Y[0], target);
    (void)l;
    std::vector<double> grad;
    net.backward(std::vector<double>{dl}, grad);
    const double pred = 1.5 * 2.0 - 0.5;
    REQUIRE_THAT(grad[0], WithinAbs(2.0 * (pred - target) * 2.0, 1e-12));
    REQUIRE_THAT(grad[1], WithinAbs(2.0 * (pred - target), 1e-12));
}

TEST_CASE("gradients match central finite differences on random nets") {
    for (std::uint64_t seed : {10u, 11u, 12u}) {
        RngStream rng(seed, 0);
        Mlp net({{4, 8, 6, 3}, false, 0.0}, rng);
        REQUIRE(max_relative_grad_error(net, 5, seed + 100) < 1e-4);
    }
}

TEST_CASE("gradients with batch normalisation active") {
    RngStream rng(20, 0);
    Mlp net({{4, 8, 6, 3}, true, 0.0}, rng);
    REQUIRE(max_relative_grad_error(net, 6, 200) < 1e-4);
}

TEST_CASE("dropout: training mode masks, inference mode doesn't") {
    RngStream rng(30, 0);
    Mlp net({{6, 32, 2}, false, 0.5}, rng);
    RngStream data(31, 0);
    std::vector<double> x(6);
    for (double& v : x) v = data.uniform(0.5, 1.0);
    const auto y_eval_1 = net.forward(x, 1, false, nullptr);
    const auto y_eval_2 = net.forward(x, 1, false, nullptr);
    REQUIRE(y_eval_1 == y_eval_2);
    RngStream d1(7, kStreamDropout), d2(7, kStreamDropout);
    const auto t1 = net.forward(x, 1, true, &d1);
    const auto t2 = net.forward(x, 1, true, &d2);
    REQUIRE(t1 == t2); // same dropout stream, same masks
}

TEST_CASE("batch norm eval mode uses the running statistics") {
    RngStream rng(40, 0);
    Mlp net({{3, 8, 2}, true, 0.0}, rng);
    RngStream data(41, 0);
    std::vector<double> X(16 * 3);
    for (double& v : X) v = data.normal(2.0, 3.0);
    for (int it = 0; it < 50; ++it) net.forward(X, 16, true, nullptr);
    // after many identical batches the running stats converge to the batch
    // stats, so train and eval outputs agree
    const auto y_train = net.forward(X, 16, true, nullptr);
    const auto y_eval = net.forward(X, 16, false, nullptr);
    for (std::size_t i = 0; i < y_train.size(); ++i)
        REQUIRE_THAT(y_eval[i], WithinAbs(y_train[i], 0.05));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    RngStream rng(50, 0);
    Mlp net({{2, 4, 1}, false, 0.0}, rng);
    const auto before = net.parameters();
    AdamState st;
    const std::vector<double> zeros(net.param_count(), 0.0);
    adam_step(net.parameters(), zeros, st);
    REQUIRE(net.parameters() == before);
}

TEST_CASE("adam first step moves by ~lr in the gradient sign direction") {
    std::vector<double> params{1.0, -2.0};
    const std::vector<double> grad{0.3, -0.7};
    AdamState st;
    st.lr = 0.01;
    adam_step(params, grad, st);
    REQUIRE_THAT(params[0], WithinAbs(1.0 - 0.01, 1e-6));
    REQUIRE_THAT(params[1], WithinAbs(-2.0 + 0.01, 1e-6));
}

TEST_CASE("adam minimises a convex quadratic") {
    std::vector<double> params{5.0};
    AdamState st;
    st.lr = 0.01;
    double prev = 1e300;
    // far from the optimum the descent is monotone after warm-up
    for (int i = 0; i < 300; ++i) {
        const double loss = (params[0] - 1.0) * (params[0] - 1.0);
        if (i > 10) REQUIRE(loss <= prev + 1e-9);
        prev = loss;
        adam_step(params, {2.0 * (params[0] - 1.0)}, st);
    }
    REQUIRE(prev < 16.0 * 0.5);
    for (int i = 0; i < 2000; ++i) adam_step(params, {2.0 * (params[0] - 1.0)}, st);
    REQUIRE_THAT(params[0], WithinAbs(1.0, 0.05));
}

TEST_CASE("polyak update blends and copies") {
    RngStream rng(60, 0);
    Mlp a({{2, 4, 1}, false, 0.0}, rng);
    Mlp b = a;
    for (double& v : b.parameters()) v += 1.0;
    Mlp t = a;
    polyak_update(t, b, 0.0);
    REQUIRE(t.parameters() == a.parameters());
    polyak_update(t, b, 1.0);
    REQUIRE(t.parameters() == b.parameters());
    Mlp t2 = a;
    polyak_update(t2, b, 0.001);
    for (std::size_t i = 0; i < t2.parameters().size(); ++i)
        REQUIRE_THAT(t2.parameters()[i], WithinAbs(a.parameters()[i] + 0.001, 1e-12));
}

TEST_CASE("polyak rejects architecture mismatches") {
    RngStream rng(61, 0);
    Mlp a({{2, 4, 1}, false, 0.0}, rng);
    Mlp b({{2, 5, 1}, false, 0.0}, rng);
    REQUIRE_THROWS_AS(polyak_update(a, b, 0.5), NnError);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    RngStream rng(70, 0);
    Mlp net({{3, 16, 4}, true, 0.25}, rng);
    // dirty the buffers so they are exercised too
    std::vector<double> X(8 * 3, 0.3);
    RngStream drop(71, kStreamDropout);
    net.forward(X, 8, true, &drop);
    const auto path = std::filesystem::temp_directory_path() / "dtrbench_ckpt_test.txt";
    net.save(path.string());
    const Mlp loaded = Mlp::load(path.string());
    REQUIRE(loaded.config() == net.config());
    REQUIRE(loaded.parameters() == net.parameters());
    REQUIRE(loaded.buffers() == net.buffers());
    std::filesystem::remove(path);
}

TEST_CASE("gradient clipping caps the global norm") {
    std::vector<double> g{30.0, 40.0}; // norm 50
    const double norm = clip_grad_norm(g, 10.0);
    REQUIRE_THAT(norm, WithinAbs(50.0, 1e-12));
    REQUIRE_THAT(std::sqrt(g[0] * g[0] + g[1] * g[1]), WithinAbs(10.0, 1e-9));
    std::vector<double> small{1.0, 1.0};
    clip_grad_norm(small, 10.0);
    REQUIRE(small == std::vector<double>{1.0, 1.0});
}
