#include <doctest.h>

#include "rfscope/autograd.hpp"
#include "rfscope/kernel_pad.hpp"
#include "rfscope/netspec.hpp"

#include "test_util.hpp"

using namespace rfscope;
using namespace testutil;

TEST_CASE("identity 1x1 conv reproduces its input") {
    NetGraph g = random_graph("input 1 5 5\nconv 1 1 0 1", 0);
    g.nodes[1].conv().weight.fill(1.0);
    Tensor4 x(1, 1, 5, 5);
    Rng rng(7);
    x.fill_uniform(rng, -2.0, 2.0);
    Activations acts = forward_eval(g, x);
    CHECK(max_abs_diff(acts.act.back(), x) == 0.0);
}

TEST_CASE("conv k7 s2 pad3 halves 224 to 112") {
    NetGraph g = random_graph("input 3 224 224\nconv 7 2 3 4", 0);
    CHECK(g.nodes[1].out_shape == Shape4{1, 4, 112, 112});
}

TEST_CASE("3x3 all-ones kernel on constant input gives 9 in the interior") {
    NetGraph g = random_graph("input 1 6 6\nconv 3 1 0 1", 0);
    g.nodes[1].conv().weight.fill(1.0);
    Tensor4 x(1, 1, 6, 6, 1.0);
    Tensor4 out = forward_eval(g, x).act.back();
    REQUIRE(out.shape() == Shape4{1, 1, 4, 4});
    for (int y = 0; y < 4; ++y)
        for (int x2 = 0; x2 < 4; ++x2) CHECK(out.at(0, 0, y, x2) == doctest::Approx(9.0));
}

TEST_CASE("scalar_reduce center_channel_mean picks floor(H/2), floor(W/2)") {
    Tensor4 a(1, 2, 7, 7, 0.0);
    a.at(0, 0, 3, 3) = 1.0;  // (4,4) in 1-indexed coordinates
    a.at(0, 1, 3, 3) = 3.0;
    CHECK(scalar_reduce(a, ScalarTarget::center()) == doctest::Approx(2.0));

    Tensor4 z(1, 4, 7, 7, 0.0);
    CHECK(scalar_reduce(z, ScalarTarget::center()) == 0.0);
}

TEST_CASE("scalar_reduce logit_index validates the range") {
    Tensor4 a(1, 3, 1, 1, 0.5);
    CHECK(scalar_reduce(a, ScalarTarget::logit(2)) == doctest::Approx(0.5));
    CHECK_THROWS_AS(scalar_reduce(a, ScalarTarget::logit(3)), Error);
    CHECK_THROWS_AS(scalar_reduce(a, ScalarTarget::logit(-1)), Error);
}

TEST_CASE("gradient of the global mean is uniform") {
    NetGraph g = random_graph("input 2 6 6\ngap", 0);
    Tensor4 x(1, 2, 6, 6);
    Rng rng(3);
    x.fill_uniform(rng, -1.0, 1.0);
    Activations acts = forward_eval(g, x);
    int gap_node = 1;
    Tensor4 seed = reduction_seed(acts.act[size_t(gap_node)].shape(), ScalarTarget::mean_logit());
    BackwardResult res = backward_input(g, acts, gap_node, seed);
    CHECK(res.input_reached);
    for (size_t i = 0; i < res.input_grad.size(); ++i)
        CHECK(res.input_grad[i] == doctest::Approx(1.0 / (2.0 * 6.0 * 6.0)));
}

TEST_CASE("gradient of one conv output is the kernel footprint") {
    NetGraph g = random_graph("input 1 6 6\nconv 3 1 0 1", 5);
    const Tensor4& w = g.nodes[1].conv().weight;
    Tensor4 x(1, 1, 6, 6);
    Rng rng(9);
    x.fill_uniform(rng, -1.0, 1.0);
    Activations acts = forward_eval(g, x);

    Tensor4 seed(acts.act[1].shape(), 0.0);
    seed.at(0, 0, 1, 2) = 1.0;  // output position (1,2): window rows 1..3, cols 2..4
    Tensor4 grad = backward_input(g, acts, 1, seed).input_grad;
    for (int y = 0; y < 6; ++y)
        for (int x2 = 0; x2 < 6; ++x2) {
            bool inside = y >= 1 && y <= 3 && x2 >= 2 && x2 <= 4;
            double want = inside ? w.at(0, 0, y - 1, x2 - 2) : 0.0;
            CHECK(grad.at(0, 0, y, x2) == doctest::Approx(want));
        }
}

TEST_CASE("finite differences confirm a random 3-layer conv+relu net") {
    NetGraph g = random_graph(
        "input 2 8 8\n"
        "conv 3 1 1 3\nrelu\n"
        "conv 3 2 1 3\nrelu\n"
        "conv 3 1 1 2\n",
        42);
    int target = int(g.nodes.size()) - 2;  // last conv
    Tensor4 x = margin_input(g, Mode::eval, 1001);
    Tensor4 analytic = input_gradient(g, x, target, ScalarTarget::center());
    Tensor4 fd = fd_gradient(g, x, target, ScalarTarget::center(), Mode::eval);
    CHECK(max_rel_error(analytic, fd) < 1e-5);
}

static void check_op_gradient(const std::string& dsl, uint64_t seed, Mode mode) {
    CAPTURE(dsl);
    NetGraph g = random_graph(dsl, seed);
    int target = g.last_spatial_node();
    ScalarTarget st = ScalarTarget::center();
    if (g.ends_in_logits()) {
        target = g.output_node();
        st = ScalarTarget::mean_logit();
    }
    Tensor4 x = margin_input(g, mode, seed * 31 + 7);
    Activations acts = forward_frozen(g, x, mode);
    Tensor4 seed_grad = reduction_seed(acts.act[size_t(target)].shape(), st);
    Tensor4 analytic = backward_input(g, acts, target, seed_grad, mode).input_grad;
    Tensor4 fd = fd_gradient(g, x, target, st, mode);
    CHECK(max_rel_error(analytic, fd) < 1e-5);
}

TEST_CASE("finite differences per op type") {
    SUBCASE("conv, asymmetric padding, stride 2") { check_op_gradient("input 2 8 8\nconv 3 2 0,1,1,0 3", 11, Mode::eval); }
    SUBCASE("conv with bias") {
        NetGraph g = random_graph("input 2 7 7\nconv 3 1 1 2", 12);
        auto& p = g.nodes[1].conv();
        p.bias = {0.3, -0.2};
        Tensor4 x = margin_input(g, Mode::eval, 77);
        Tensor4 analytic = input_gradient(g, x, 1, ScalarTarget::center());
        Tensor4 fd = fd_gradient(g, x, 1, ScalarTarget::center(), Mode::eval);
        CHECK(max_rel_error(analytic, fd) < 1e-5);
    }
    SUBCASE("maxpool") { check_op_gradient("input 2 8 8\nconv 3 1 1 2\nmaxpool 3 2 1", 13, Mode::eval); }
    SUBCASE("avgpool") { check_op_gradient("input 2 8 8\nconv 3 1 1 2\navgpool 3 2 1", 14, Mode::eval); }
    SUBCASE("relu") { check_op_gradient("input 2 8 8\nconv 3 1 1 2\nrelu", 15, Mode::eval); }
    SUBCASE("bn eval") { check_op_gradient("input 2 8 8\nconv 3 1 1 2\nbn\nrelu", 16, Mode::eval); }
    SUBCASE("residual add") {
        check_op_gradient(
            "input 2 8 8\n"
            "resblock {\nconv 3 2 1 3\nrelu\nconv 3 1 1 3\nshortcut\nconv 1 2 0 3\n}\nrelu",
            17, Mode::eval);
    }
    SUBCASE("fc and gap head") { check_op_gradient("input 2 8 8\nconv 3 2 1 3\nrelu\ngap\nfc 4", 18, Mode::eval); }
}

TEST_CASE("bn train mode gradient flows through batch statistics") {
    NetGraph g = random_graph("input 2 6 6\nconv 3 1 1 2\nbn", 21);
    // batch statistics vary with the input; randomize bn params too
    auto& p = g.nodes[2].bn();
    Rng rng(22);
    for (auto& v : p.gamma) v = rng.uniform(0.5, 1.5);
    for (auto& v : p.beta) v = rng.uniform(-0.5, 0.5);
    Tensor4 x = margin_input(g, Mode::train, 23);
    Activations acts = forward_frozen(g, x, Mode::train);
    Tensor4 seed = reduction_seed(acts.act[2].shape(), ScalarTarget::center());
    Tensor4 analytic = backward_input(g, acts, 2, seed, Mode::train).input_grad;
    Tensor4 fd = fd_gradient(g, x, 2, ScalarTarget::center(), Mode::train);
    CHECK(max_rel_error(analytic, fd) < 1e-5);
}

TEST_CASE("backward is exactly linear in the seed for power-of-two scales") {
    NetGraph g = random_graph("input 2 8 8\nconv 3 2 1 3\nrelu\nconv 3 1 1 2", 31);
    Tensor4 x(1, 2, 8, 8);
    Rng rng(32);
    x.fill_uniform(rng, -1.0, 1.0);
    Activations acts = forward_eval(g, x);
    int target = int(g.nodes.size()) - 2;
    Tensor4 seed = reduction_seed(acts.act[size_t(target)].shape(), ScalarTarget::center());
    Tensor4 g1 = backward_input(g, acts, target, seed).input_grad;
    for (auto& v : seed.data()) v *= 2.0;
    Tensor4 g2 = backward_input(g, acts, target, seed).input_grad;
    for (size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == 2.0 * g1[i]);
}

TEST_CASE("appending zero kernel rows/cols with enlarged bottom/right padding is bit-identical") {
    NetGraph g = random_graph("input 3 9 9\nconv 3 2 1 4", 41);
    NetGraph g2 = g;
    auto& p = g2.nodes[1].conv();
    p.weight = zero_extend_kernel(p.weight, 1, 1);
    p.kh += 1;
    p.kw += 1;
    p.pad.bottom += 1;
    p.pad.right += 1;
    g2.nodes[1].out_shape = infer_shape(g2.nodes[1], g2.nodes[0].out_shape, "conv0");
    REQUIRE(g2.nodes[1].out_shape == g.nodes[1].out_shape);

    Rng rng(42);
    for (int i = 0; i < 10; ++i) {
        Tensor4 x(1, 3, 9, 9);
        x.fill_uniform(rng, -1.0, 1.0);
        Tensor4 a = forward_eval(g, x).act.back();
        Tensor4 b = forward_eval(g2, x).act.back();
        REQUIRE(a.size() == b.size());
        for (size_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
    }
}

TEST_CASE("maxpool ties route the gradient to the first row-major element") {
    NetGraph g = random_graph("input 1 4 4\nmaxpool 2 2 0", 0);
    Tensor4 x(1, 1, 4, 4, 0.0);
    // window (0,0): equal maxima at (0,1) and (1,0); first row-major wins
    x.at(0, 0, 0, 1) = 5.0;
    x.at(0, 0, 1, 0) = 5.0;
    Activations acts = forward_eval(g, x);
    Tensor4 seed(acts.act[1].shape(), 0.0);
    seed.at(0, 0, 0, 0) = 1.0;
    Tensor4 grad = backward_input(g, acts, 1, seed).input_grad;
    CHECK(grad.at(0, 0, 0, 1) == 1.0);
    CHECK(grad.at(0, 0, 1, 0) == 0.0);
}

TEST_CASE("eval-mode forward is deterministic") {
    NetGraph g = random_graph("input 3 10 10\nconv 3 2 1 4\nbn\nrelu\nmaxpool 3 2 1\ngap\nfc 3", 51);
    Tensor4 x(1, 3, 10, 10);
    Rng rng(52);
    x.fill_uniform(rng, -1.0, 1.0);
    Tensor4 a = forward_eval(g, x).act.back();
    Tensor4 b = forward_eval(g, x).act.back();
    for (size_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
}

TEST_CASE("forward reports shape mismatches by node name") {
    NetGraph g = random_graph("input 3 8 8\nconv 3 1 1 4", 61);
    Tensor4 wrong(1, 2, 8, 8);
    CHECK_THROWS_WITH_AS(forward_eval(g, wrong), doctest::Contains("input"), Error);

    // a graph wired with an inconsistent channel count names the conv node
    GraphNode bad;
    bad.kind = OpKind::conv;
    bad.name = "conv_bad";
    ConvParams p;
    p.out_ch = 2;
    p.in_ch = 5;  // parent provides 3
    p.kh = p.kw = 1;
    p.weight = Tensor4(2, 5, 1, 1);
    bad.params = std::move(p);
    CHECK_THROWS_WITH_AS(infer_shape(bad, Shape4{1, 3, 8, 8}, bad.name), doctest::Contains("conv_bad"), Error);
}

TEST_CASE("train-mode forward updates running statistics, eval does not") {
    NetGraph g = random_graph("input 2 6 6\nconv 3 1 1 2\nbn", 71);
    Tensor4 x(2, 2, 6, 6);
    Rng rng(72);
    x.fill_uniform(rng, 0.5, 1.5);
    std::vector<double> rm_before = g.nodes[2].bn().running_mean;
    forward_eval(g, x);
    CHECK(g.nodes[2].bn().running_mean == rm_before);
    forward_train(g, x);
    CHECK(g.nodes[2].bn().running_mean != rm_before);
}
