// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <complex>
#include <cstdio>
#include <vector>

#include "csifb/checkpoint.hpp"
#include "csifb/recon_model.hpp"
#include "csifb/selector_model.hpp"
#include "doctest.h"

using namespace csifb;

namespace {

// Small geometry that keeps the fixed-channel trunk cheap in tests.
SystemConfig tiny_config() {
    SystemConfig c = default_config();
    c.n_h = 1;
    c.n_v = 1;
    c.n_tx = 2;
    c.m = 4;
    c.p_ports = 2;
    c.k_ues = 2;
    return c;
}

ChannelMatrix random_channel(int rows, int cols, Rng& rng) {
    ChannelMatrix h(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            h(r, c) = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    return h;
}

struct TempPath {
    std::string path;
    explicit TempPath(const std::string& name) : path("/tmp/csifb_test_" + name) {}
    ~TempPath() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("class-prior weights follow the port split") {
    SystemConfig c = default_config();
    FocalLossConfig cfg = make_focal_config(c);
    CHECK(cfg.gamma == 2.0);
    CHECK(cfg.w_pos == doctest::Approx(224.0 / 256.0).epsilon(1e-15));
    CHECK(cfg.w_neg == doctest::Approx(32.0 / 256.0).epsilon(1e-15));
    CHECK(cfg.w_pos + cfg.w_neg == doctest::Approx(1.0));
    CHECK_THROWS_AS(make_focal_config(c, -0.5), ConfigError);
}

TEST_CASE("preprocessing normalizes the peak and is scale invariant") {
    SystemConfig c = default_config();
    AngularBasis wa = build_angular_basis(c.n_h, c.n_v, 0, 0);
    DelayBasis wd = build_delay_basis(c.m);
    Rng rng(101);
    ChannelMatrix h = random_channel(c.n_tx, c.m, rng);

    Tensor<float> t = preprocess<float>(h, wa, wd);
    CHECK(t.rank() == 4);
    CHECK(t.dim(0) == 1);
    CHECK(t.dim(1) == 2);
    CHECK(t.dim(2) == 32);
    CHECK(t.dim(3) == 8);

    double peak = 0.0;
    for (int a = 0; a < 32; ++a)
        for (int d = 0; d < 8; ++d)
            peak = std::max(
                peak, static_cast<double>(std::hypot(t.at4(0, 0, a, d), t.at4(0, 1, a, d))));
    CHECK(peak == doctest::Approx(1.0).epsilon(1e-6));

    Tensor<float> scaled = preprocess<float>(3.7 * h, wa, wd);
    for (size_t i = 0; i < t.v.size(); ++i)
        CHECK(scaled.v[i] == doctest::Approx(t.v[i]).epsilon(1e-6));

    ChannelMatrix zero = ChannelMatrix::Zero(c.n_tx, c.m);
    CHECK_THROWS_AS(preprocess<float>(zero, wa, wd), DataError);
}

TEST_CASE("labels mark exactly the strongest ports") {
    SystemConfig c = default_config();
    AngularBasis wa = build_angular_basis(c.n_h, c.n_v, 1, 2);
    DelayBasis wd = build_delay_basis(c.m);
    Rng rng(102);
    ChannelMatrix h = random_channel(c.n_tx, c.m, rng);

    PortLabel label = labels_from_clean(h, wa, wd, c.p_ports);
    CHECK(static_cast<int>(label.size()) == c.port_count());
    int sum = 0;
    for (auto v : label) sum += v;
    CHECK(sum == c.p_ports);

    PortSelection sel = select_ports_topP(to_angular_delay(h, wa, wd), c.p_ports);
    for (int port : sel.ports) CHECK(label[static_cast<size_t>(port)] == 1);
}

TEST_CASE("score decoding keeps the top scores with index tie-breaks") {
    std::vector<double> scores = {0.1, 0.9, 0.5, 0.9, 0.2};
    PortSelection sel = decode_topP(scores, 3);
    REQUIRE(sel.ports.size() == 3);
    CHECK(sel.ports[0] == 1);  // ties go to the lower index
    CHECK(sel.ports[1] == 3);
    CHECK(sel.ports[2] == 2);

    std::vector<double> flat(6, 0.25);
    PortSelection first = decode_topP(flat, 4);
    CHECK(first.ports == std::vector<int>{0, 1, 2, 3});

    // invariant under strictly increasing transforms
    std::vector<double> warped(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) warped[i] = 2.0 * scores[i] + 1.0;
    CHECK(decode_topP(warped, 3).ports == sel.ports);

    CHECK_THROWS_AS(decode_topP(scores, 0), ConfigError);
    CHECK_THROWS_AS(decode_topP(scores, 6), ConfigError);
}

TEST_CASE("cross entropy hits its analytic anchors") {
    Tensor<double> half({1, 4});
    half.fill(0.5);
    Tensor<double> labels({1, 4});
    labels.v = {1.0, 0.0, 1.0, 0.0};
    CHECK(bce_loss(half, labels) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Tensor<double> good({1, 4});
    good.v = {1.0 - 1e-6, 1e-6, 1.0 - 1e-6, 1e-6};
    CHECK(bce_loss(good, labels) < 1e-5);
}

TEST_CASE("focal loss with zero gamma and unit weights reduces to cross entropy") {
    Rng rng(103);
    Tensor<double> scores({3, 16});
    Tensor<double> labels({3, 16});
    for (auto& v : scores.v) v = rng.uniform(0.02, 0.98);
    for (auto& v : labels.v) v = rng.uniform() < 0.25 ? 1.0 : 0.0;
    FocalLossConfig plain;
    plain.gamma = 0.0;
    plain.w_pos = 1.0;
    plain.w_neg = 1.0;
    CHECK(focal_loss(scores, labels, plain) ==
          doctest::Approx(bce_loss(scores, labels)).epsilon(1e-12));

    Tensor<double> g1, g2;
    double l1 = focal_loss_grad(scores, labels, plain, g1);
    double l2 = bce_loss_grad(scores, labels, g2);
    CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
    for (size_t i = 0; i < g1.v.size(); ++i)
        CHECK(g1.v[i] == doctest::Approx(g2.v[i]).epsilon(1e-10));
}

TEST_CASE("the lone-positive focal term matches direct arithmetic") {
    // one positive port at 0.9, every negative small enough to vanish
    Tensor<double> scores({1, 256});
    Tensor<double> labels({1, 256});
    scores.fill(1e-12);
    scores.v[0] = 0.9;
    labels.v[0] = 1.0;
    FocalLossConfig cfg = make_focal_config(default_config(), 2.0);
    double pre_average_sum = focal_loss(scores, labels, cfg) * 256.0;
    CHECK(pre_average_sum ==
          doctest::Approx((224.0 / 256.0) * 0.01 * (-std::log(0.9))).epsilon(1e-9));
    CHECK(std::abs(pre_average_sum - 9.22e-4) < 1e-6);
}

TEST_CASE("the positive modulating factor decays as confidence grows") {
    FocalLossConfig cfg = make_focal_config(default_config(), 2.0);
    Tensor<double> labels({1, 1});
    labels.v = {1.0};
    double prev = 1e300;
    for (double o : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
        Tensor<double> s({1, 1});
        s.v = {o};
        double loss = focal_loss(s, labels, cfg);
        CHECK(loss < prev);
        prev = loss;
    }
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(104);
    Tensor<double> scores({2, 10});
    Tensor<double> labels({2, 10});
    for (auto& v : scores.v) v = rng.uniform(0.05, 0.95);
    for (auto& v : labels.v) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    FocalLossConfig cfg;
    cfg.gamma = 2.0;
    cfg.w_pos = 0.875;
    cfg.w_neg = 0.125;

    Tensor<double> g_bce, g_focal;
    bce_loss_grad(scores, labels, g_bce);
    focal_loss_grad(scores, labels, cfg, g_focal);
    const double h = 1e-7;
    for (size_t i = 0; i < scores.v.size(); ++i) {
        Tensor<double> up = scores, down = scores;
        up.v[i] += h;
        down.v[i] -= h;
        double fd_bce = (bce_loss(up, labels) - bce_loss(down, labels)) / (2.0 * h);
        CHECK(g_bce.v[i] == doctest::Approx(fd_bce).epsilon(1e-5));
        double fd_focal =
            (focal_loss(up, labels, cfg) - focal_loss(down, labels, cfg)) / (2.0 * h);
        CHECK(g_focal.v[i] == doctest::Approx(fd_focal).epsilon(1e-5));
    }
}

TEST_CASE("selector outputs one probability per port") {
    SystemConfig c = tiny_config();
    SelectorNet<float> net = make_selector<float>(c, Padding::Circular, 7);
    Rng rng(105);
    Tensor<float> x({3, 2, c.n_tx, c.m});
    for (auto& v : x.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor<float> probs = net.forward(x, Mode::Eval);
    CHECK(probs.rank() == 2);
    CHECK(probs.dim(0) == 3);
    CHECK(probs.dim(1) == c.port_count());
    for (float v : probs.v) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }

    std::vector<ParamView<float>> params;
    collect_params(net, params);
    CHECK(params.size() == 22);

    SelectorNet<float> again = make_selector<float>(c, Padding::Circular, 7);
    CHECK(again.head.weight.v == net.head.weight.v);
    CHECK(again.trunk.blocks[0].conv.kernels.v == net.trunk.blocks[0].conv.kernels.v);
}

TEST_CASE("selector gradients agree with finite differences") {
    SystemConfig c = tiny_config();
    SelectorNet<double> net = make_selector<double>(c, Padding::Circular, 11);
    Rng rng(106);
    Tensor<double> x({2, 2, c.n_tx, c.m});
    for (auto& v : x.v) v = rng.uniform(-1.0, 1.0);
    Tensor<double> labels({2, c.port_count()});
    for (auto& v : labels.v) v = rng.uniform() < 0.25 ? 1.0 : 0.0;
    FocalLossConfig cfg = make_focal_config(c, 2.0);

    // eval mode freezes dropout and batch statistics
    auto loss_only = [&]() {
        Tensor<double> probs = net.forward(x, Mode::Eval);
        return focal_loss(probs, labels, cfg);
    };
    auto loss_and_backward = [&]() {
        Tensor<double> probs = net.forward(x, Mode::Eval);
        Tensor<double> grad;
        double loss = focal_loss_grad(probs, labels, cfg, grad);
        net.backward(grad);
        return loss;
    };
    std::vector<ParamView<double>> params;
    collect_params(net, params);
    GradCheckResult r = gradient_check(params, loss_and_backward, loss_only, 60, 3);
    CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("selector training is deterministic and reports sane metrics") {
    SystemConfig c = tiny_config();
    auto train = generate_dataset(c, 24, 5.0, 901);
    auto val = generate_dataset(c, 8, 5.0, 902);
    SelectorHyper hyper;
    hyper.epochs = 2;
    hyper.batch = 8;
    hyper.lr = 1e-3;
    hyper.seed = 42;
    hyper.oversampling = 1;

    SelectorTrainResult a = train_selector(train, val, c, hyper);
    SelectorTrainResult b = train_selector(train, val, c, hyper);
    REQUIRE(a.history.size() == 2);
    REQUIRE(b.history.size() == 2);
    for (size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].train_loss == b.history[i].train_loss);
        CHECK(a.history[i].val_pn == b.history[i].val_pn);
        CHECK(std::isfinite(a.history[i].train_loss));
        CHECK(a.history[i].val_pn > 0.0);
        CHECK(a.history[i].val_pn <= 1.0);
    }
    CHECK(a.final_val_pn == a.history.back().val_pn);
    CHECK(a.bound_val_pn <= 1.0);
    CHECK(a.bound_val_pn > 0.0);
    CHECK(a.baseline_val_pn > 0.0);

    SelectorEvalResult ev = evaluate_selector(a.model, val, c, 1);
    CHECK(ev.mean_pn > 0.0);
    CHECK(ev.mean_pn <= 1.0);
    CHECK(ev.mean_overlap >= 0.0);
    CHECK(ev.mean_overlap <= 1.0);
    CHECK(ev.bound_pn == doctest::Approx(a.bound_val_pn));
    CHECK(ev.baseline_pn == doctest::Approx(a.baseline_val_pn));

    CHECK_THROWS_AS(train_selector({}, val, c, hyper), DataError);
    SelectorHyper bad = hyper;
    bad.batch = 1;
    CHECK_THROWS_AS(train_selector(train, val, c, bad), ConfigError);
}

TEST_CASE("reconstruction pairs collapse to identity under full expansion") {
    SystemConfig c = default_config();
    c.p_ports = c.port_count();
    auto data = generate_dataset(c, 2, 10.0, 903);
    for (const auto& sample : data) {
        ReconSample rs = build_recon_sample(sample, c, nullptr, true, 1);
        CHECK((rs.x - rs.y).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("quantized reconstruction pairs are sparse with unit peak") {
    SystemConfig c = default_config();
    auto data = generate_dataset(c, 3, 10.0, 904);
    for (const auto& sample : data) {
        ReconSample rs = build_recon_sample(sample, c, nullptr, false, 2);
        int nonzero = 0;
        for (int a = 0; a < rs.x.rows(); ++a)
            for (int d = 0; d < rs.x.cols(); ++d)
                if (std::abs(rs.x(a, d)) > 0.0) ++nonzero;
        CHECK(nonzero == c.p_ports);
        CHECK(rs.x.cwiseAbs().maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(static_cast<int>(rs.sel.ports.size()) == c.p_ports);
    }
}

TEST_CASE("truncation-only pair error equals the unselected power") {
    SystemConfig c = default_config();
    auto data = generate_dataset(c, 3, 10.0, 905);
    for (const auto& sample : data) {
        ReconSample rs = build_recon_sample(sample, c, nullptr, true, 2);
        const double nm = static_cast<double>(c.port_count());
        double direct = (rs.y - rs.x).squaredNorm() / nm;
        double parseval =
            (1.0 - port_power_fraction(rs.y, rs.sel.ports)) * rs.y.squaredNorm() / nm;
        CHECK(direct == doctest::Approx(parseval).epsilon(1e-12));
    }
}

TEST_CASE("reconstructor output is the input plus a bounded correction") {
    SystemConfig c = tiny_config();
    ReconNet<float> net = make_recon<float>(c, Padding::Circular, 0.01, 13);
    Rng rng(107);
    Tensor<float> x({2, 2, c.n_tx, c.m});
    for (auto& v : x.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));

    ReconNet<float> frozen = net;
    frozen.head.weight.fill(0.0f);
    frozen.head.bias.fill(0.0f);
    Tensor<float> same = frozen.forward(x, Mode::Eval);
    for (size_t i = 0; i < x.v.size(); ++i) CHECK(same.v[i] == x.v[i]);

    Tensor<float> y = net.forward(x, Mode::Eval);
    Tensor<float> pooled = net.trunk.forward(x, Mode::Eval);
    Tensor<float> delta = dense_forward(pooled, net.head, Mode::Eval);
    float peak = 0.0f;
    for (float v : delta.v) peak = std::max(peak, std::abs(v));
    for (size_t i = 0; i < y.v.size(); ++i)
        CHECK(std::abs(y.v[i] - x.v[i]) <= 0.01f * peak + 1e-7f);

    CHECK_THROWS_AS(make_recon<float>(c, Padding::Circular, -1.0, 13), ConfigError);
    Tensor<float> bad({1, 2, c.n_tx + 1, c.m});
    CHECK_THROWS_AS(net.forward(bad, Mode::Eval), ShapeError);
}

TEST_CASE("squared reconstruction error matches hand values") {
    Tensor<double> y({1, 2, 4, 2});
    Tensor<double> yhat({1, 2, 4, 2});
    CHECK(mse_loss(yhat, y) == 0.0);
    yhat.at4(0, 0, 1, 1) = 3.0;  // one complex entry 3 + 4i against zero
    yhat.at4(0, 1, 1, 1) = 4.0;
    CHECK(mse_loss(yhat, y) == doctest::Approx(25.0 / 8.0).epsilon(1e-15));

    Tensor<double> grad;
    double loss = mse_loss_grad(yhat, y, grad);
    CHECK(loss == doctest::Approx(25.0 / 8.0).epsilon(1e-15));
    CHECK(grad.at4(0, 0, 1, 1) == doctest::Approx(2.0 * 3.0 / 8.0));
    CHECK(grad.at4(0, 1, 1, 1) == doctest::Approx(2.0 * 4.0 / 8.0));
    CHECK(grad.at4(0, 0, 0, 0) == 0.0);
}

TEST_CASE("reconstructor gradients agree with finite differences") {
    SystemConfig c = tiny_config();
    ReconNet<double> net = make_recon<double>(c, Padding::Zero, 0.01, 17);
    Rng rng(108);
    Tensor<double> x({2, 2, c.n_tx, c.m});
    Tensor<double> y({2, 2, c.n_tx, c.m});
    for (auto& v : x.v) v = rng.uniform(-1.0, 1.0);
    for (auto& v : y.v) v = rng.uniform(-1.0, 1.0);

    auto loss_only = [&]() { return mse_loss(net.forward(x, Mode::Eval), y); };
    auto loss_and_backward = [&]() {
        Tensor<double> yhat = net.forward(x, Mode::Eval);
        Tensor<double> grad;
        double loss = mse_loss_grad(yhat, y, grad);
        net.backward(grad);
        return loss;
    };
    std::vector<ParamView<double>> params;
    collect_params(net, params);
    GradCheckResult r = gradient_check(params, loss_and_backward, loss_only, 60, 4);
    // the kinked activations put a 1e-5 floor on central-difference accuracy
    CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("an initialized reconstructor stays near the codebook baseline") {
    SystemConfig c = default_config();
    auto data = generate_dataset(c, 16, 10.0, 906);
    std::vector<ReconSample> samples;
    for (const auto& s : data) samples.push_back(build_recon_sample(s, c, nullptr, false, 2));

    double baseline = 0.0;
    for (const auto& rs : samples) {
        Tensor<float> x = split_re_im<float>(rs.x);
        Tensor<float> y = split_re_im<float>(rs.y);
        baseline += mse_loss(x, y);
    }
    baseline /= static_cast<double>(samples.size());

    ReconModel net = make_recon<float>(c, Padding::Circular, 0.01, 19);
    double initial = evaluate_recon(net, samples, 16);
    CHECK(std::abs(initial - baseline) <= 0.05 * baseline);
}

TEST_CASE("reconstructor training is deterministic and starts at the baseline") {
    SystemConfig c = tiny_config();
    auto raw_train = generate_dataset(c, 24, 10.0, 907);
    auto raw_val = generate_dataset(c, 8, 10.0, 908);
    std::vector<ReconSample> train, val;
    for (const auto& s : raw_train) train.push_back(build_recon_sample(s, c, nullptr, false, 1));
    for (const auto& s : raw_val) val.push_back(build_recon_sample(s, c, nullptr, false, 1));

    ReconHyper hyper;
    hyper.epochs = 2;
    hyper.batch = 8;
    hyper.lr = 1e-4;
    hyper.seed = 5;

    ReconTrainResult a = train_recon(train, val, c, hyper);
    ReconTrainResult b = train_recon(train, val, c, hyper);
    REQUIRE(a.history.size() == 2);
    for (size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].train_loss == b.history[i].train_loss);
        CHECK(a.history[i].val_mse == b.history[i].val_mse);
        CHECK(std::isfinite(a.history[i].val_mse));
    }
    CHECK(a.baseline_val_mse > 0.0);
    CHECK(a.final_val_mse == a.history.back().val_mse);
    CHECK_THROWS_AS(train_recon({}, val, c, hyper), DataError);
}

TEST_CASE("checkpoints round-trip model state bit-exactly") {
    SystemConfig c = tiny_config();
    SelectorModel net = make_selector<float>(c, Padding::Circular, 23);
    net.trunk.blocks[0].bn.running_mean.v[0] = 0.25f;
    net.trunk.blocks[2].bn.running_var.v[7] = 3.5f;

    TempPath tmp("sel.ck");
    save_tensors(tmp.path, state_tensors(net));

    SelectorModel other = make_selector<float>(c, Padding::Circular, 999);
    assign_state(load_tensors(tmp.path), state_tensors(other));

    Rng rng(109);
    Tensor<float> x({2, 2, c.n_tx, c.m});
    for (auto& v : x.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor<float> p1 = net.forward(x, Mode::Eval);
    Tensor<float> p2 = other.forward(x, Mode::Eval);
    CHECK(p1.v == p2.v);
    CHECK(other.trunk.blocks[0].bn.running_mean.v[0] == 0.25f);
    CHECK(other.trunk.blocks[2].bn.running_var.v[7] == 3.5f);
}

TEST_CASE("checkpoint loading rejects damaged or mismatched files") {
    TempPath tmp("bad.ck");
    CHECK_THROWS_AS(load_tensors("/nonexistent/nope.ck"), DataError);

    {
        std::FILE* f = std::fopen(tmp.path.c_str(), "wb");
        REQUIRE(f != nullptr);
        std::fputs("NOTACKPT", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_tensors(tmp.path), DataError);

    Tensor<float> t({2, 3});
    for (size_t i = 0; i < t.v.size(); ++i) t.v[i] = static_cast<float>(i);
    save_tensors(tmp.path, {{"a", &t}});
    auto loaded = load_tensors(tmp.path);
    REQUIRE(loaded.count("a") == 1);
    CHECK(loaded.at("a").v == t.v);

    Tensor<float> wrong({3, 2});
    CHECK_THROWS_AS(assign_state(loaded, {{"a", &wrong}}), DataError);
    Tensor<float> fine({2, 3});
    CHECK_THROWS_AS(assign_state(loaded, {{"missing", &fine}}), DataError);

    // truncated payload
    {
        std::FILE* f = std::fopen(tmp.path.c_str(), "rb");
        REQUIRE(f != nullptr);
        std::fseek(f, 0, SEEK_END);
        long size = std::ftell(f);
        std::fseek(f, 0, SEEK_SET);
        std::vector<char> bytes(static_cast<size_t>(size));
        REQUIRE(std::fread(bytes.data(), 1, bytes.size(), f) == bytes.size());
        std::fclose(f);
        f = std::fopen(tmp.path.c_str(), "wb");
        REQUIRE(f != nullptr);
        std::fwrite(bytes.data(), 1, bytes.size() - 6, f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_tensors(tmp.path), DataError);
}
