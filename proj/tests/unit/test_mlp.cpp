#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "diffmi/common.hpp"
#include "diffmi/graph.hpp"
#include "diffmi/mlp.hpp"
#include "diffmi/rng.hpp"
#include "fd_oracle.hpp"

using namespace diffmi;

namespace {
MlpConfig cfg_of(std::vector<int> widths, bool residual = false,
                 Activation act = Activation::Silu) {
    MlpConfig c;
    c.widths = std::move(widths);
    c.activation = act;
    c.residual = residual;
    return c;
}
}  // namespace

TEST_CASE("parameter count follows the layer-size formula") {
    const Mlp net = Mlp::init(cfg_of({3, 4, 2}), 1);
    CHECK(net.param_count() == 3 * 4 + 4 + 4 * 2 + 2);

    const Mlp deep = Mlp::init(cfg_of({64, 36, 36, 53}), 2);
    CHECK(deep.param_count() == 64 * 36 + 36 + 36 * 36 + 36 + 36 * 53 + 53);
}

TEST_CASE("identity one-layer net reproduces its input") {
    Mlp net = Mlp::init(cfg_of({2, 2}), 3);
    net.set_flat_parameters({1, 0, 0, 1, 0, 0});  // W=I, b=0
    const Tensor y = net.forward(Tensor({1, 2}, {1, 2}));
    CHECK(y.at(0, 0) == 1.0);
    CHECK(y.at(0, 1) == 2.0);
}

TEST_CASE("single linear unit computes 2x+1") {
    Mlp net = Mlp::init(cfg_of({1, 1}), 3);
    net.set_flat_parameters({2, 1});
    const Tensor y = net.forward(Tensor({1, 1}, {3}));
    CHECK(y.at(0, 0) == 7.0);
}

TEST_CASE("forward obeys the shape contract and rejects bad input") {
    const Mlp net = Mlp::init(cfg_of({4, 8, 3}), 5);
    Rng rng(7);
    const Tensor x = Tensor::randn({5, 4}, rng);
    const Tensor y = net.forward(x);
    CHECK(y.shape() == std::vector<int>{5, 3});
    CHECK(y.all_finite());
    CHECK_THROWS_AS(net.forward(Tensor({5, 3})), DimensionError);
    CHECK_THROWS_AS(net.forward(Tensor({4})), DimensionError);
}

TEST_CASE("initialization is seeded and bounded by fan-in") {
    const Mlp a = Mlp::init(cfg_of({6, 5, 4}), 11);
    const Mlp b = Mlp::init(cfg_of({6, 5, 4}), 11);
    const Mlp c = Mlp::init(cfg_of({6, 5, 4}), 12);
    CHECK(a.flat_parameters() == b.flat_parameters());
    CHECK(a.flat_parameters() != c.flat_parameters());

    const auto params = a.parameters();
    REQUIRE(params.size() == 4);
    const double bound0 = 1.0 / std::sqrt(6.0);
    for (std::int64_t i = 0; i < params[0]->size(); ++i) {
        CHECK(std::abs((*params[0])[i]) <= bound0);
    }
}

TEST_CASE("graph forward and inference forward agree bitwise") {
    const Mlp net = Mlp::init(cfg_of({5, 7, 7, 2}, true), 13);
    Rng rng(17);
    const Tensor x = Tensor::randn({3, 5}, rng);

    const Tensor inf = net.forward(x);

    Graph g;
    auto params = net.bind_parameters(g);
    Node* out = net.forward(g, params, g.leaf(x, false));
    REQUIRE(out->value.shape() == inf.shape());
    for (std::int64_t i = 0; i < inf.size(); ++i) CHECK(out->value[i] == inf[i]);
}

TEST_CASE("residual skip changes hidden propagation") {
    // Hidden weights zero, bias c: residual keeps x + act(c); plain keeps act(c).
    MlpConfig base = cfg_of({2, 2, 2});
    Mlp plain = Mlp::init(base, 1);
    base.residual = true;
    Mlp res = Mlp::init(base, 1);

    const std::vector<double> flat = {0, 0, 0, 0, 0.5, 0.5,   // hidden W=0, b=0.5
                                      1, 0, 0, 1, 0,   0};    // output W=I, b=0
    plain.set_flat_parameters(flat);
    res.set_flat_parameters(flat);

    const Tensor x({1, 2}, {2.0, -1.0});
    const Tensor yp = plain.forward(x);
    const Tensor yr = res.forward(x);
    const double s = 0.5 / (1.0 + std::exp(-0.5));  // silu(0.5)
    CHECK_THAT(yp.at(0, 0), Catch::Matchers::WithinRel(s, 1e-12));
    CHECK_THAT(yr.at(0, 0), Catch::Matchers::WithinRel(2.0 + s, 1e-12));
    CHECK_THAT(yr.at(0, 1), Catch::Matchers::WithinRel(-1.0 + s, 1e-12));
}

TEST_CASE("full residual network gradient matches finite differences") {
    const MlpConfig cfg = cfg_of({4, 6, 6, 3}, true);
    const Mlp net = Mlp::init(cfg, 19);
    Rng rng(23);
    const Tensor x = Tensor::randn({4, 4}, rng);
    const Tensor target = Tensor::randn({4, 3}, rng);

    auto loss_of = [&](const std::vector<double>& flat) {
        Mlp m = Mlp::init(cfg, 0);
        m.set_flat_parameters(flat);
        Graph g;
        auto ps = m.bind_parameters(g);
        Node* out = m.forward(g, ps, g.leaf(x, false));
        return g.mean_all(g.square(g.sub(out, g.leaf(target, false))))->value[0];
    };

    Graph g;
    auto ps = net.bind_parameters(g);
    Node* out = net.forward(g, ps, g.leaf(x, false));
    g.backward(g.mean_all(g.square(g.sub(out, g.leaf(target, false)))));
    std::vector<double> got;
    for (Node* p : ps) got.insert(got.end(), p->grad.data().begin(), p->grad.data().end());

    const auto want = fd::central_gradient(loss_of, net.flat_parameters());
    REQUIRE(got.size() == want.size());
    // Smooth activation: demand agreement on every coordinate, not just 99%.
    CHECK(fd::agreement(got, want) == 1.0);
}

TEST_CASE("config validation rejects nonsense") {
    CHECK_THROWS_AS(Mlp::init(cfg_of({4}), 1), ConfigError);
    CHECK_THROWS_AS(Mlp::init(cfg_of({4, 0, 2}), 1), ConfigError);
    CHECK_THROWS_AS(activation_from_string("relu6"), ConfigError);
    CHECK(activation_from_string("silu") == Activation::Silu);
    CHECK(activation_from_string("tanh") == Activation::Tanh);
}

TEST_CASE("flat parameter round trip") {
    Mlp net = Mlp::init(cfg_of({3, 5, 2}), 29);
    const auto flat = net.flat_parameters();
    Mlp other = Mlp::init(cfg_of({3, 5, 2}), 999);
    other.set_flat_parameters(flat);
    CHECK(other.flat_parameters() == flat);
    CHECK_THROWS_AS(other.set_flat_parameters(std::vector<double>(3)), DimensionError);
}
