#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "gazectl/numcore/graph.hpp"
#include "gazectl/numcore/params.hpp"
#include "support/fd.hpp"

using namespace gazectl;
using G = nc::Graph<double>;
using Tensor = nc::Tensor<double>;
using nc::Var;

namespace {

struct Case {
    std::vector<nc::Shape> shapes;
    std::function<Var(G&, const std::vector<Var>&)> build;
};

/// Weighted sum of the op output so every output element reaches the loss with its own weight.
double grad_check(const Case& c, std::uint64_t seed = 1) {
    nc::ParamSet<double> ps;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < c.shapes.size(); ++i) {
        ps.add("p" + std::to_string(i), c.shapes[i]);
        nc::uniform_fill(ps[i].value, 1.0, rng);
    }
    Tensor weights;
    auto loss = [&](G& g) {
        std::vector<Var> vs;
        for (std::size_t i = 0; i < ps.size(); ++i) vs.push_back(g.param(ps, i));
        const Var out = c.build(g, vs);
        if (weights.data.empty()) {
            std::mt19937_64 wr(99);
            weights = Tensor(g.value(out).shape);
            nc::uniform_fill(weights, 1.0, wr);
        }
        return g.sum(g.mul(out, g.constant(weights)));
    };
    ps.zero_grad();
    {
        G g;
        g.backward(loss(g));
    }
    const auto rep = check::compare_fd(ps, [&] {
        G g(false);
        return g.value(loss(g)).data[0];
    });
    EXPECT_GT(rep.checked, 0u);
    EXPECT_LT(rep.max_rel, 1e-6) << rep.worst;
    return rep.max_rel;
}

}  // namespace

TEST(GraphGrad, Matmul) { grad_check({{{3, 4}, {4, 5}}, [](G& g, auto v) { return g.matmul(v[0], v[1]); }}); }
TEST(GraphGrad, MatmulNT) { grad_check({{{3, 4}, {5, 4}}, [](G& g, auto v) { return g.matmul_nt(v[0], v[1]); }}); }
TEST(GraphGrad, AddMulScale) {
    grad_check({{{3, 4}, {3, 4}}, [](G& g, auto v) { return g.scale(g.mul(g.add(v[0], v[1]), v[0]), 0.7); }});
}
TEST(GraphGrad, AddRow) { grad_check({{{3, 4}, {1, 4}}, [](G& g, auto v) { return g.add_row(v[0], v[1]); }}); }
TEST(GraphGrad, AddTiled) { grad_check({{{6, 4}, {2, 4}}, [](G& g, auto v) { return g.add_tiled(v[0], v[1]); }}); }
TEST(GraphGrad, Activations) {
    grad_check({{{3, 4}}, [](G& g, auto v) { return g.tanh(v[0]); }});
    grad_check({{{3, 4}}, [](G& g, auto v) { return g.sigmoid(v[0]); }});
    grad_check({{{3, 4}}, [](G& g, auto v) { return g.swish(v[0]); }});
}
TEST(GraphGrad, BlockAndSlices) {
    grad_check({{{5, 6}}, [](G& g, auto v) { return g.block(v[0], 1, 3, 2, 3); }});
    grad_check({{{5, 6}}, [](G& g, auto v) { return g.add(g.slice_rows(v[0], 0, 2), g.slice_rows(v[0], 3, 2)); }});
    grad_check({{{5, 6}}, [](G& g, auto v) { return g.slice_cols(v[0], 4, 2); }});
}
TEST(GraphGrad, Concats) {
    grad_check({{{3, 2}, {3, 4}}, [](G& g, auto v) { return g.concat_cols({v[0], v[1], v[0]}); }});
    grad_check({{{2, 3}, {4, 3}}, [](G& g, auto v) { return g.concat_rows({v[1], v[0]}); }});
}
TEST(GraphGrad, SoftmaxRows) { grad_check({{{4, 5}}, [](G& g, auto v) { return g.softmax_rows(v[0]); }}); }
TEST(GraphGrad, LayerNorm) {
    grad_check({{{4, 6}, {1, 6}, {1, 6}}, [](G& g, auto v) { return g.layer_norm_rows(v[0], v[1], v[2]); }});
}
TEST(GraphGrad, GroupMax) { grad_check({{{6, 3}}, [](G& g, auto v) { return g.group_max_rows(v[0], 3); }}); }
TEST(GraphGrad, ReusedParameterAccumulates) {
    grad_check({{{3, 3}}, [](G& g, auto v) { return g.matmul(v[0], g.tanh(v[0])); }});
}

TEST(GraphGrad, CrossEntropy) {
    nc::ParamSet<double> ps;
    std::mt19937_64 rng(5);
    ps.add("logits", {4, 3});
    nc::uniform_fill(ps[0].value, 2.0, rng);
    const std::vector<int> labels{0, 2, 1, 2};
    auto loss = [&](G& g) { return g.cross_entropy(g.softmax_rows(g.param(ps, 0)), labels); };
    ps.zero_grad();
    {
        G g;
        g.backward(loss(g));
    }
    const auto rep = check::compare_fd(ps, [&] {
        G g(false);
        return g.value(loss(g)).data[0];
    });
    EXPECT_LT(rep.max_rel, 1e-6) << rep.worst;
}

TEST(GraphValues, SoftmaxAndCrossEntropy) {
    G g(false);
    const auto p = g.softmax_rows(g.constant(Tensor({1, 3}, {0.0, std::log(2.0), std::log(5.0)})));
    EXPECT_NEAR(g.value(p).data[0], 1.0 / 8, 1e-15);
    EXPECT_NEAR(g.value(p).data[2], 5.0 / 8, 1e-15);
    const std::vector<int> y{2};
    EXPECT_NEAR(g.value(g.cross_entropy(p, y)).data[0], -std::log(5.0 / 8), 1e-14);
}

TEST(GraphValues, LayerNormZeroMeanUnitVar) {
    G g(false);
    const auto x = g.constant(Tensor({2, 4}, {1, 2, 3, 4, -5, 0, 5, 10}));
    const auto y = g.layer_norm_rows(x, g.constant(Tensor({1, 4}, {1, 1, 1, 1})), g.constant(Tensor({1, 4}, {0, 0, 0, 0})), 0.0);
    for (std::size_t r = 0; r < 2; ++r) {
        double s = 0, ss = 0;
        for (std::size_t c = 0; c < 4; ++c) {
            s += g.value(y)(r, c);
            ss += g.value(y)(r, c) * g.value(y)(r, c);
        }
        EXPECT_NEAR(s, 0, 1e-12);
        EXPECT_NEAR(ss / 4, 1, 1e-12);
    }
}

TEST(GraphErrors, ShapeChecks) {
    G g;
    const auto a = g.constant(Tensor::matrix(2, 3));
    const auto b = g.constant(Tensor::matrix(2, 3));
    try {
        g.matmul(a, b);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
    }
    try {
        g.backward(a);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotScalarLoss);
    }
    EXPECT_THROW(g.group_max_rows(a, 4), Error);
}

TEST(Adam, RequiresGradients) {
    nc::ParamSet<double> ps;
    ps.add("w", {1, 2});
    try {
        nc::adam_step(ps);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingGradient);
    }
}

TEST(Adam, FirstStepsMatchHandComputation) {
    nc::ParamSet<double> ps;
    ps.add("w", {1, 2});
    ps[0].value.data = {1.0, -2.0};
    const nc::AdamConfig cfg{0.1};
    // Oracle: textbook Adam on L = w0^2 + 3 w1, two steps.
    double w[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
    for (int t = 1; t <= 2; ++t) {
        {
            G g;
            const auto x = g.param(ps, 0);
            const auto loss = g.sum(g.mul(x, g.add(g.mul(x, g.constant(Tensor({1, 2}, {1, 0}))), g.constant(Tensor({1, 2}, {0, 3})))));
            g.backward(loss);
        }
        nc::adam_step(ps, cfg);
        const double grad[2] = {2 * w[0], 3.0};
        for (int i = 0; i < 2; ++i) {
            m[i] = 0.9 * m[i] + 0.1 * grad[i];
            v[i] = 0.999 * v[i] + 0.001 * grad[i] * grad[i];
            const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
            w[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
        }
        EXPECT_NEAR(ps[0].value.data[0], w[0], 1e-12);
        EXPECT_NEAR(ps[0].value.data[1], w[1], 1e-12);
    }
    EXPECT_EQ(ps.step(), 2);
}
