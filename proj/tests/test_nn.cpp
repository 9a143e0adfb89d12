// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include "csifb/nn.hpp"
#include "doctest.h"

using namespace csifb;

namespace {

Tensor<double> random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.v) v = rng.uniform(-scale, scale);
    return t;
}

// Direct nested-loop convolution, the oracle for the GEMM path.
Tensor<double> conv_reference(const Tensor<double>& x, const ConvLayer<double>& l) {
    const int n_batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = conv_out_dim(h, l.stride_h), ow = conv_out_dim(w, l.stride_w);
    Tensor<double> y({n_batch, l.f_out, oh, ow});
    for (int n = 0; n < n_batch; ++n)
        for (int o = 0; o < l.f_out; ++o)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    double acc = l.bias.v[static_cast<size_t>(o)];
                    for (int c = 0; c < c_in; ++c)
                        for (int di = 0; di < 3; ++di)
                            for (int dj = 0; dj < 3; ++dj) {
                                int ii = i * l.stride_h + di - 1;
                                int jj = j * l.stride_w + dj - 1;
                                if (l.padding == Padding::Circular) {
                                    ii = ((ii % h) + h) % h;
                                    jj = ((jj % w) + w) % w;
                                } else if (ii < 0 || ii >= h || jj < 0 || jj >= w) {
                                    continue;
                                }
                                acc += l.kernels.at4(o, c, di, dj) * x.at4(n, c, ii, jj);
                            }
                    y.at4(n, o, i, j) = acc;
                }
    return y;
}

double weighted_sum(const Tensor<double>& t, uint64_t seed) {
    Rng rng(seed);
    double s = 0.0;
    for (double v : t.v) s += v * rng.uniform(-1.0, 1.0);
    return s;
}

}  // namespace

TEST_CASE("convolution matches the direct reference in both padding modes") {
    Rng rng(11);
    for (Padding p : {Padding::Circular, Padding::Zero}) {
        for (auto [sh, sw] : {std::pair{1, 1}, std::pair{3, 1}, std::pair{3, 3}}) {
            ConvLayer<double> l = make_conv<double>(2, 3, sh, sw, p);
            for (auto& k : l.kernels.v) k = rng.uniform(-1.0, 1.0);
            for (auto& b : l.bias.v) b = rng.uniform(-1.0, 1.0);
            Tensor<double> x = random_tensor({2, 2, 7, 5}, rng);
            Tensor<double> got = conv2d_forward(x, l);
            Tensor<double> want = conv_reference(x, l);
            REQUIRE(got.same_shape(want));
            for (size_t i = 0; i < got.v.size(); ++i)
                CHECK(got.v[i] == doctest::Approx(want.v[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("all-ones kernel separates circular from zero padding exactly") {
    Tensor<double> x({1, 1, 4, 5});
    x.fill(1.0);

    ConvLayer<double> circ = make_conv<double>(1, 1, 1, 1, Padding::Circular);
    circ.kernels.fill(1.0);
    Tensor<double> yc = conv2d_forward(x, circ);
    for (double v : yc.v) CHECK(v == 9.0);

    ConvLayer<double> zero = make_conv<double>(1, 1, 1, 1, Padding::Zero);
    zero.kernels.fill(1.0);
    Tensor<double> yz = conv2d_forward(x, zero);
    const int h = 4, w = 5;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            bool edge_i = (i == 0 || i == h - 1);
            bool edge_j = (j == 0 || j == w - 1);
            double want = edge_i && edge_j ? 4.0 : (edge_i || edge_j ? 6.0 : 9.0);
            CHECK(yz.at4(0, 0, i, j) == want);
        }
}

TEST_CASE("convolution output size follows the stride rule") {
    CHECK(conv_out_dim(32, 1) == 32);
    CHECK(conv_out_dim(32, 3) == 11);
    CHECK(conv_out_dim(11, 3) == 4);
    CHECK(conv_out_dim(4, 3) == 2);
    CHECK(conv_out_dim(8, 3) == 3);
    CHECK(conv_out_dim(3, 3) == 1);
    CHECK(conv_out_dim(2, 3) == 1);
    CHECK(conv_out_dim(1, 1) == 1);
}

TEST_CASE("convolution gradients agree with finite differences") {
    for (Padding p : {Padding::Circular, Padding::Zero}) {
        Rng rng(p == Padding::Circular ? 21 : 22);
        ConvLayer<double> l = make_conv<double>(2, 3, 2, 1, p);
        for (auto& k : l.kernels.v) k = rng.uniform(-1.0, 1.0);
        for (auto& b : l.bias.v) b = rng.uniform(-1.0, 1.0);
        Tensor<double> x = random_tensor({2, 2, 5, 4}, rng);
        Tensor<double> grad_x_store(x.shape);

        auto loss_only = [&]() { return weighted_sum(conv2d_forward(x, l), 99); };
        auto loss_and_backward = [&]() {
            Tensor<double> y = conv2d_forward(x, l);
            double loss = weighted_sum(y, 99);
            Tensor<double> g(y.shape);
            Rng grng(99);
            for (auto& v : g.v) v = grng.uniform(-1.0, 1.0);
            grad_x_store = conv2d_backward(g, x, l);
            return loss;
        };
        std::vector<ParamView<double>> params = {
            {"k", &l.kernels, &l.grad_kernels},
            {"b", &l.bias, &l.grad_bias},
            {"x", &x, &grad_x_store},
        };
        GradCheckResult r = gradient_check(params, loss_and_backward, loss_only, 120, 5);
        CHECK(r.max_rel_err < 1e-7);
    }
}

TEST_CASE("batchnorm train mode standardizes each channel") {
    Rng rng(31);
    BatchNormLayer<double> l = make_batchnorm<double>(3);
    Tensor<double> x = random_tensor({4, 3, 5, 2}, rng, 3.0);
    for (auto& v : x.v) v += 1.7;
    Tensor<double> y = batchnorm_forward(x, l, Mode::Train);
    const double count = 4 * 5 * 2;
    for (int c = 0; c < 3; ++c) {
        double mean = 0.0, sq = 0.0;
        for (int n = 0; n < 4; ++n)
            for (int i = 0; i < 5; ++i)
                for (int j = 0; j < 2; ++j) mean += y.at4(n, c, i, j);
        mean /= count;
        for (int n = 0; n < 4; ++n)
            for (int i = 0; i < 5; ++i)
                for (int j = 0; j < 2; ++j) {
                    double d = y.at4(n, c, i, j) - mean;
                    sq += d * d;
                }
        CHECK(std::abs(mean) < 1e-12);
        // biased batch variance of the output is 1 up to the eps correction
        CHECK(sq / count == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("batchnorm running statistics blend with the documented momentum") {
    Rng rng(32);
    BatchNormLayer<double> l = make_batchnorm<double>(1);
    Tensor<double> x({2, 1, 1, 2});
    x.v = {1.0, 2.0, 3.0, 6.0};
    batchnorm_forward(x, l, Mode::Train);
    const double mean = 3.0;
    double sq = 0.0;
    for (double v : x.v) sq += (v - mean) * (v - mean);
    const double unbiased = sq / 3.0;
    CHECK(l.running_mean.v[0] == doctest::Approx(0.9 * 0.0 + 0.1 * mean).epsilon(1e-12));
    CHECK(l.running_var.v[0] == doctest::Approx(0.9 * 1.0 + 0.1 * unbiased).epsilon(1e-12));
}

TEST_CASE("batchnorm eval mode applies the running affine map") {
    BatchNormLayer<double> l = make_batchnorm<double>(2);
    l.running_mean.v = {1.0, -2.0};
    l.running_var.v = {4.0, 0.25};
    l.gamma.v = {2.0, 3.0};
    l.beta.v = {0.5, -1.0};
    Tensor<double> x({1, 2, 1, 1});
    x.v = {3.0, -1.0};
    Tensor<double> y = batchnorm_forward(x, l, Mode::Eval);
    CHECK(y.v[0] == doctest::Approx(2.0 * (3.0 - 1.0) / std::sqrt(4.0 + 1e-5) + 0.5));
    CHECK(y.v[1] == doctest::Approx(3.0 * (-1.0 + 2.0) / std::sqrt(0.25 + 1e-5) - 1.0));
}

TEST_CASE("batchnorm rejects degenerate train batches") {
    BatchNormLayer<double> l = make_batchnorm<double>(2);
    Tensor<double> x({1, 2, 1, 1});
    CHECK_THROWS_AS(batchnorm_forward(x, l, Mode::Train), ShapeError);
    CHECK_NOTHROW(batchnorm_forward(x, l, Mode::Eval));
}

TEST_CASE("batchnorm gradients agree with finite differences in both modes") {
    for (Mode mode : {Mode::Train, Mode::Eval}) {
        Rng rng(41);
        BatchNormLayer<double> l = make_batchnorm<double>(3);
        for (auto& g : l.gamma.v) g = rng.uniform(0.5, 1.5);
        for (auto& b : l.beta.v) b = rng.uniform(-0.5, 0.5);
        for (auto& m : l.running_mean.v) m = rng.uniform(-1.0, 1.0);
        for (auto& v : l.running_var.v) v = rng.uniform(0.5, 2.0);
        const Tensor<double> x0 = random_tensor({3, 3, 2, 2}, rng);
        Tensor<double> x = x0;
        Tensor<double> grad_x_store(x.shape);
        BatchNormLayer<double> work = l;

        auto loss_only = [&]() {
            BatchNormLayer<double> fresh = l;  // keep running stats untouched
            return weighted_sum(batchnorm_forward(x, fresh, mode), 7);
        };
        auto loss_and_backward = [&]() {
            work = l;
            Tensor<double> y = batchnorm_forward(x, work, mode);
            double loss = weighted_sum(y, 7);
            Tensor<double> g(y.shape);
            Rng grng(7);
            for (auto& v : g.v) v = grng.uniform(-1.0, 1.0);
            grad_x_store = batchnorm_backward(g, work);
            return loss;
        };
        // gamma and beta live on l so the FD perturbation feeds loss_only
        std::vector<ParamView<double>> params = {
            {"gamma", &l.gamma, &work.grad_gamma},
            {"beta", &l.beta, &work.grad_beta},
            {"x", &x, &grad_x_store},
        };
        GradCheckResult r = gradient_check(params, loss_and_backward, loss_only, 60, 6);
        CHECK(r.max_rel_err < 1e-6);
    }
}

TEST_CASE("leaky relu keeps positives and scales the rest") {
    Tensor<double> x({1, 4});
    x.v = {2.0, -3.0, 0.0, -0.5};
    Tensor<double> y = leaky_relu(x, 0.1);
    CHECK(y.v[0] == 2.0);
    CHECK(y.v[1] == doctest::Approx(-0.3));
    CHECK(y.v[2] == 0.0);
    CHECK(y.v[3] == doctest::Approx(-0.05));

    Tensor<double> g({1, 4});
    g.fill(1.0);
    Tensor<double> gx = leaky_relu_backward(g, x, 0.1);
    CHECK(gx.v[0] == 1.0);
    CHECK(gx.v[1] == doctest::Approx(0.1));
    CHECK(gx.v[2] == doctest::Approx(0.1));  // the kink goes with the negative side
    CHECK(gx.v[3] == doctest::Approx(0.1));
}

TEST_CASE("global average pool averages and spreads back evenly") {
    Tensor<double> x({1, 2, 2, 2});
    x.v = {1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0};
    Tensor<double> y = global_avg_pool(x);
    CHECK(y.at2(0, 0) == doctest::Approx(2.5));
    CHECK(y.at2(0, 1) == doctest::Approx(25.0));

    Tensor<double> g({1, 2});
    g.v = {4.0, 8.0};
    Tensor<double> gx = global_avg_pool_backward(g, 2, 2);
    for (int i = 0; i < 4; ++i) CHECK(gx.v[static_cast<size_t>(i)] == doctest::Approx(1.0));
    for (int i = 4; i < 8; ++i) CHECK(gx.v[static_cast<size_t>(i)] == doctest::Approx(2.0));
}

TEST_CASE("dense layer matches a direct affine map when dropout is off") {
    Rng rng(51);
    DenseLayer<double> l = make_dense<double>(3, 2, 0.0);
    for (auto& w : l.weight.v) w = rng.uniform(-1.0, 1.0);
    for (auto& b : l.bias.v) b = rng.uniform(-1.0, 1.0);
    Tensor<double> x = random_tensor({4, 3}, rng);
    Tensor<double> y = dense_forward(x, l, Mode::Train, &rng);
    for (int n = 0; n < 4; ++n)
        for (int o = 0; o < 2; ++o) {
            double want = l.bias.v[static_cast<size_t>(o)];
            for (int f = 0; f < 3; ++f) want += l.weight.at2(o, f) * x.at2(n, f);
            CHECK(y.at2(n, o) == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("dropout is inactive in eval mode and unbiased in train mode") {
    Rng rng(52);
    DenseLayer<double> l = make_dense<double>(1, 1, 0.3);
    l.weight.v = {1.0};
    l.bias.v = {0.0};
    Tensor<double> x({5000, 1});
    x.fill(1.0);

    Tensor<double> ye = dense_forward(x, l, Mode::Eval);
    for (double v : ye.v) CHECK(v == 1.0);

    Tensor<double> yt = dense_forward(x, l, Mode::Train, &rng);
    double mean = 0.0;
    int zeros = 0;
    for (double v : yt.v) {
        mean += v;
        if (v == 0.0) ++zeros;
        else CHECK(v == doctest::Approx(1.0 / 0.7));
    }
    mean /= static_cast<double>(yt.v.size());
    CHECK(mean == doctest::Approx(1.0).epsilon(0.05));
    CHECK(zeros > 1200);
    CHECK(zeros < 1800);
}

TEST_CASE("a frozen dropout mask reproduces the same forward pass") {
    Rng rng(53);
    DenseLayer<double> l = make_dense<double>(6, 2, 0.5);
    init_dense(l, rng);
    Tensor<double> x = random_tensor({3, 6}, rng);
    Tensor<double> y1 = dense_forward(x, l, Mode::Train, &rng);
    Tensor<double> y2 = dense_forward(x, l, Mode::Train, nullptr);
    for (size_t i = 0; i < y1.v.size(); ++i) CHECK(y1.v[i] == y2.v[i]);

    DenseLayer<double> fresh = make_dense<double>(6, 2, 0.5);
    init_dense(fresh, rng);
    CHECK_THROWS_AS(dense_forward(x, fresh, Mode::Train, nullptr), ShapeError);
}

TEST_CASE("dense gradients agree with finite differences under frozen dropout") {
    Rng rng(54);
    DenseLayer<double> l = make_dense<double>(5, 3, 0.4);
    init_dense(l, rng);
    for (auto& b : l.bias.v) b = rng.uniform(-0.5, 0.5);
    Tensor<double> x = random_tensor({4, 5}, rng);
    Tensor<double> grad_x_store(x.shape);
    dense_forward(x, l, Mode::Train, &rng);  // draw the mask once

    auto loss_only = [&]() { return weighted_sum(dense_forward(x, l, Mode::Train, nullptr), 13); };
    auto loss_and_backward = [&]() {
        Tensor<double> y = dense_forward(x, l, Mode::Train, nullptr);
        double loss = weighted_sum(y, 13);
        Tensor<double> g(y.shape);
        Rng grng(13);
        for (auto& v : g.v) v = grng.uniform(-1.0, 1.0);
        grad_x_store = dense_backward(g, l);
        return loss;
    };
    std::vector<ParamView<double>> params = {
        {"w", &l.weight, &l.grad_weight},
        {"b", &l.bias, &l.grad_bias},
        {"x", &x, &grad_x_store},
    };
    GradCheckResult r = gradient_check(params, loss_and_backward, loss_only, 50, 8);
    CHECK(r.max_rel_err < 1e-7);
}

TEST_CASE("sigmoid is stable at extreme inputs and differentiates cleanly") {
    Tensor<double> x({1, 4});
    x.v = {500.0, -500.0, 0.0, 1.0};
    Tensor<double> y = sigmoid(x);
    CHECK(y.v[0] == 1.0);
    CHECK(y.v[1] == doctest::Approx(0.0).epsilon(1e-200));
    CHECK(std::isfinite(y.v[1]));
    CHECK(y.v[2] == doctest::Approx(0.5));
    CHECK(y.v[3] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));

    Tensor<double> g({1, 4});
    g.fill(1.0);
    Tensor<double> gx = sigmoid_backward(g, y);
    CHECK(gx.v[2] == doctest::Approx(0.25));
    const double h = 1e-6;
    Tensor<double> xp = x, xm = x;
    xp.v[3] += h;
    xm.v[3] -= h;
    double fd = (sigmoid(xp).v[3] - sigmoid(xm).v[3]) / (2.0 * h);
    CHECK(gx.v[3] == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("the first optimizer step has the known closed form") {
    Tensor<double> theta({2});
    theta.v = {1.0, -2.0};
    Tensor<double> grad({2});
    grad.v = {0.5, -3.0};
    AdamState<double> st;
    std::vector<ParamView<double>> params = {{"t", &theta, &grad}};
    adam_step(params, st, 0.01);
    // after one step the bias corrections cancel: update = lr * g / (|g| + eps)
    CHECK(theta.v[0] == doctest::Approx(1.0 - 0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
    CHECK(theta.v[1] == doctest::Approx(-2.0 + 0.01 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
    CHECK(st.step == 1);
}

TEST_CASE("optimizer steps shrink a quadratic objective") {
    Tensor<double> theta({3});
    theta.v = {4.0, -3.0, 2.0};
    Tensor<double> grad({3});
    AdamState<double> st;
    std::vector<ParamView<double>> params = {{"t", &theta, &grad}};
    auto value = [&]() {
        double s = 0.0;
        for (double v : theta.v) s += v * v;
        return s;
    };
    double before = value();
    for (int it = 0; it < 200; ++it) {
        for (size_t i = 0; i < 3; ++i) grad.v[i] = 2.0 * theta.v[i];
        adam_step(params, st, 0.05);
    }
    CHECK(value() < 0.01 * before);
}

TEST_CASE("the five-block trunk reduces 32x8 to a 512-way feature vector") {
    ConvTrunk<float> t = make_trunk<float>(Padding::Circular);
    Rng rng(61);
    init_trunk(t, rng);
    Tensor<float> x({1, 2, 32, 8});
    for (auto& v : x.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));

    Tensor<float> stage = x;
    const int want_c[5] = {256, 512, 512, 512, 512};
    const int want_h[5] = {32, 11, 4, 2, 1};
    const int want_w[5] = {8, 8, 3, 1, 1};
    for (int i = 0; i < 5; ++i) {
        stage = t.blocks[static_cast<size_t>(i)].forward(stage, Mode::Eval);
        CHECK(stage.dim(1) == want_c[i]);
        CHECK(stage.dim(2) == want_h[i]);
        CHECK(stage.dim(3) == want_w[i]);
    }
    Tensor<float> pooled = t.forward(x, Mode::Eval);
    CHECK(pooled.rank() == 2);
    CHECK(pooled.dim(0) == 1);
    CHECK(pooled.dim(1) == 512);

    std::vector<ParamView<float>> params;
    collect_params(t, params);
    CHECK(params.size() == 20);
    std::int64_t total = 0;
    for (const auto& p : params) total += p.value->numel();
    // (256*2*9 + 3*256) + (512*256*9 + 3*512) + 3*(512*512*9 + 3*512)
    CHECK(total == 8269056);
}

TEST_CASE("a small conv block chain passes an end-to-end gradient check") {
    Rng rng(71);
    ConvBlock<double> block = make_conv_block<double>(2, 4, 2, 1, Padding::Circular);
    init_conv(block.conv, rng);
    for (auto& g : block.bn.gamma.v) g = rng.uniform(0.8, 1.2);
    for (auto& b : block.bn.beta.v) b = rng.uniform(-0.2, 0.2);
    DenseLayer<double> head = make_dense<double>(4, 2, 0.3);
    init_dense(head, rng);
    Tensor<double> x = random_tensor({3, 2, 6, 4}, rng);

    // seed the dropout mask for a (3, 4) pooled batch, then freeze it
    {
        Tensor<double> warm({3, 4});
        dense_forward(warm, head, Mode::Train, &rng);
    }
    BatchNormLayer<double> bn_snapshot = block.bn;

    auto run = [&](bool backward) {
        block.bn.running_mean = bn_snapshot.running_mean;
        block.bn.running_var = bn_snapshot.running_var;
        Tensor<double> a = block.forward(x, Mode::Train);
        Tensor<double> pooled = global_avg_pool(a);
        Tensor<double> logits = dense_forward(pooled, head, Mode::Train, nullptr);
        Tensor<double> probs = sigmoid(logits);
        double loss = weighted_sum(probs, 17);
        if (backward) {
            Tensor<double> g(probs.shape);
            Rng grng(17);
            for (auto& v : g.v) v = grng.uniform(-1.0, 1.0);
            g = sigmoid_backward(g, probs);
            g = dense_backward(g, head);
            g = global_avg_pool_backward(g, a.dim(2), a.dim(3));
            block.backward(g);
        }
        return loss;
    };
    auto loss_only = [&]() { return run(false); };
    auto loss_and_backward = [&]() { return run(true); };

    std::vector<ParamView<double>> params;
    collect_params(block, "cb", params);
    params.push_back({"head.w", &head.weight, &head.grad_weight});
    params.push_back({"head.b", &head.bias, &head.grad_bias});
    GradCheckResult r = gradient_check(params, loss_and_backward, loss_only, 200, 9);
    CHECK(r.checked >= 200);
    CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("weight initialization stays inside the fan-in bound") {
    Rng rng(81);
    ConvLayer<double> l = make_conv<double>(8, 4, 1, 1, Padding::Zero);
    init_conv(l, rng);
    const double bound = std::sqrt(6.0 / (8 * 9));
    double max_abs = 0.0;
    for (double k : l.kernels.v) max_abs = std::max(max_abs, std::abs(k));
    CHECK(max_abs <= bound);
    CHECK(max_abs > 0.5 * bound);
    for (double b : l.bias.v) CHECK(b == 0.0);
}

TEST_CASE("layer constructors reject inconsistent shapes") {
    CHECK_THROWS_AS(make_dense<double>(4, 2, 1.0), ConfigError);
    CHECK_THROWS_AS(make_dense<double>(4, 2, -0.1), ConfigError);

    ConvLayer<double> l = make_conv<double>(2, 3, 1, 1, Padding::Zero);
    Tensor<double> bad({1, 3, 4, 4});
    CHECK_THROWS_AS(conv2d_forward(bad, l), ShapeError);

    BatchNormLayer<double> bn = make_batchnorm<double>(2);
    Tensor<double> bad_bn({2, 3, 2, 2});
    CHECK_THROWS_AS(batchnorm_forward(bad_bn, bn, Mode::Eval), ShapeError);

    DenseLayer<double> d = make_dense<double>(4, 2, 0.0);
    Tensor<double> bad_d({2, 5});
    CHECK_THROWS_AS(dense_forward(bad_d, d, Mode::Eval), ShapeError);
}
