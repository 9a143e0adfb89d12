// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "csifb/channel.hpp"
#include "csifb/codebook.hpp"
#include "csifb/nn.hpp"
#include "csifb/transforms.hpp"

// Learned port selection: a five-block convolutional trunk over the
// two-channel angular-delay map, a sigmoid scoring head, and a top-P
// decode. Scores are trained against top-P labels from clean uplink CSI
// with a class-prior-weighted focal loss.

namespace csifb {

using PortLabel = std::vector<std::uint8_t>;

// Class-prior weights: positives are rare (P of n_tx*m ports), so the
// positive term carries the complementary weight.
struct FocalLossConfig {
    double gamma = 2.0;
    double w_pos = 1.0;
    double w_neg = 1.0;
};

FocalLossConfig make_focal_config(const SystemConfig& config, double gamma = 2.0);

template <typename S>
struct SelectorNet {
    ConvTrunk<S> trunk;
    DenseLayer<S> head;  // 512 -> n_tx*m with dropout 0.3
    int n_tx = 0, m = 0;
    Tensor<S> cache_probs;

    // (n, 2, n_tx, m) -> per-port scores in (0, 1)
    Tensor<S> forward(const Tensor<S>& x, Mode mode, Rng* rng = nullptr) {
        Tensor<S> pooled = trunk.forward(x, mode);
        Tensor<S> logits = dense_forward(pooled, head, mode, rng);
        cache_probs = sigmoid(logits);
        return cache_probs;
    }

    // takes d(loss)/d(scores), returns d(loss)/d(input)
    Tensor<S> backward(const Tensor<S>& grad_scores) {
        Tensor<S> g = sigmoid_backward(grad_scores, cache_probs);
        g = dense_backward(g, head);
        return trunk.backward(g);
    }
};

using SelectorModel = SelectorNet<float>;

template <typename S>
SelectorNet<S> make_selector(const SystemConfig& config, Padding padding,
                             std::uint64_t seed) {
    SelectorNet<S> net;
    net.n_tx = config.n_tx;
    net.m = config.m;
    net.trunk = make_trunk<S>(padding);
    net.head = make_dense<S>(512, config.port_count(), S(0.3));
    Rng trunk_rng(Rng::split(seed, 0));
    Rng head_rng(Rng::split(seed, 1));
    init_trunk(net.trunk, trunk_rng);
    init_dense(net.head, head_rng);
    return net;
}

template <typename S>
void collect_params(SelectorNet<S>& net, std::vector<ParamView<S>>& out) {
    collect_params(net.trunk, out);
    out.push_back({"head.weight", &net.head.weight, &net.head.grad_weight});
    out.push_back({"head.bias", &net.head.bias, &net.head.grad_bias});
}

// Value tensors that define the model, for checkpoints: parameters plus
// batchnorm running statistics.
template <typename S>
std::vector<std::pair<std::string, Tensor<S>*>> state_tensors(SelectorNet<S>& net) {
    std::vector<std::pair<std::string, Tensor<S>*>> out;
    std::vector<ParamView<S>> params;
    collect_params(net, params);
    for (auto& p : params) out.emplace_back(p.name, p.value);
    for (size_t i = 0; i < net.trunk.blocks.size(); ++i) {
        std::string prefix = "cb" + std::to_string(i + 1) + ".bn.";
        out.emplace_back(prefix + "running_mean", &net.trunk.blocks[i].bn.running_mean);
        out.emplace_back(prefix + "running_var", &net.trunk.blocks[i].bn.running_var);
    }
    return out;
}

// ---------------------------------------------------------- preprocessing ----

// Angular-delay transform, peak amplitude scaled to 1, then real and
// imaginary parts as two feature channels.
template <typename S>
Tensor<S> preprocess(const ChannelMatrix& h, const AngularBasis& wa,
                     const DelayBasis& wd) {
    AngularDelayCsi ht = to_angular_delay(h, wa, wd);
    const int n_tx = static_cast<int>(ht.rows()), m = static_cast<int>(ht.cols());
    double peak = 0.0;
    for (int a = 0; a < n_tx; ++a)
        for (int d = 0; d < m; ++d) peak = std::max(peak, std::abs(ht(a, d)));
    if (peak <= 0.0) throw DataError("cannot preprocess an all-zero channel");
    Tensor<S> out({1, 2, n_tx, m});
    for (int a = 0; a < n_tx; ++a)
        for (int d = 0; d < m; ++d) {
            out.at4(0, 0, a, d) = static_cast<S>(ht(a, d).real() / peak);
            out.at4(0, 1, a, d) = static_cast<S>(ht(a, d).imag() / peak);
        }
    return out;
}

// Indicator vector of the top-P ports of the clean channel.
PortLabel labels_from_clean(const ChannelMatrix& h_clean, const AngularBasis& wa,
                            const DelayBasis& wd, int p);

// The P highest scores, ties to the lower port index.
PortSelection decode_topP(const std::vector<double>& scores, int p);

// ----------------------------------------------------------------- losses ----

namespace detail {
constexpr double kProbClamp = 1e-7;  // keeps logs and ratios finite in fp32
}

// Mean over samples of the per-port-averaged binary cross entropy.
template <typename S>
double bce_loss(const Tensor<S>& scores, const Tensor<S>& labels) {
    if (!scores.same_shape(labels)) throw ShapeError("score/label shape mismatch");
    double total = 0.0;
    for (size_t i = 0; i < scores.v.size(); ++i) {
        double o = std::min(std::max(static_cast<double>(scores.v[i]),
                                     detail::kProbClamp),
                            1.0 - detail::kProbClamp);
        double y = labels.v[i];
        total += y * std::log(o) + (1.0 - y) * std::log(1.0 - o);
    }
    return -total / static_cast<double>(scores.v.size());
}

template <typename S>
double bce_loss_grad(const Tensor<S>& scores, const Tensor<S>& labels,
                     Tensor<S>& grad) {
    if (!scores.same_shape(labels)) throw ShapeError("score/label shape mismatch");
    grad = Tensor<S>(scores.shape);
    const double inv = 1.0 / static_cast<double>(scores.v.size());
    double total = 0.0;
    for (size_t i = 0; i < scores.v.size(); ++i) {
        double o = std::min(std::max(static_cast<double>(scores.v[i]),
                                     detail::kProbClamp),
                            1.0 - detail::kProbClamp);
        double y = labels.v[i];
        total += y * std::log(o) + (1.0 - y) * std::log(1.0 - o);
        grad.v[i] = static_cast<S>(-inv * (y / o - (1.0 - y) / (1.0 - o)));
    }
    return -total * inv;
}

// Focal reweighting: w+ * (1-o)^g for positives, w- * o^g for negatives.
template <typename S>
double focal_loss(const Tensor<S>& scores, const Tensor<S>& labels,
                  const FocalLossConfig& cfg) {
    if (!scores.same_shape(labels)) throw ShapeError("score/label shape mismatch");
    if (cfg.gamma < 0.0) throw ConfigError("focusing parameter must be >= 0");
    double total = 0.0;
    for (size_t i = 0; i < scores.v.size(); ++i) {
        double o = std::min(std::max(static_cast<double>(scores.v[i]),
                                     detail::kProbClamp),
                            1.0 - detail::kProbClamp);
        double y = labels.v[i];
        total += cfg.w_pos * std::pow(1.0 - o, cfg.gamma) * y * std::log(o) +
                 cfg.w_neg * std::pow(o, cfg.gamma) * (1.0 - y) * std::log(1.0 - o);
    }
    return -total / static_cast<double>(scores.v.size());
}

template <typename S>
double focal_loss_grad(const Tensor<S>& scores, const Tensor<S>& labels,
                       const FocalLossConfig& cfg, Tensor<S>& grad) {
    if (!scores.same_shape(labels)) throw ShapeError("score/label shape mismatch");
    if (cfg.gamma < 0.0) throw ConfigError("focusing parameter must be >= 0");
    grad = Tensor<S>(scores.shape);
    const double inv = 1.0 / static_cast<double>(scores.v.size());
    const double g = cfg.gamma;
    double total = 0.0;
    for (size_t i = 0; i < scores.v.size(); ++i) {
        double o = std::min(std::max(static_cast<double>(scores.v[i]),
                                     detail::kProbClamp),
                            1.0 - detail::kProbClamp);
        double y = labels.v[i];
        double pos = std::pow(1.0 - o, g) * std::log(o);
        double neg = std::pow(o, g) * std::log(1.0 - o);
        total += cfg.w_pos * y * pos + cfg.w_neg * (1.0 - y) * neg;
        // d/do of the summand; the gamma term vanishes identically at g = 0
        double dpos = std::pow(1.0 - o, g) / o;
        double dneg = -std::pow(o, g) / (1.0 - o);
        if (g > 0.0) {
            dpos -= g * std::pow(1.0 - o, g - 1.0) * std::log(o);
            dneg += g * std::pow(o, g - 1.0) * std::log(1.0 - o);
        }
        grad.v[i] = static_cast<S>(-inv * (cfg.w_pos * y * dpos + cfg.w_neg * (1.0 - y) * dneg));
    }
    return -total * inv;
}

// ---------------------------------------------------------------- training ----

// One dataset sample prepared for selector training: rotation searched on
// the noisy uplink, inputs and labels under that shared basis, and the
// clean-downlink port powers that score a selection.
struct SelectorSample {
    Rotation rot;
    Tensor<float> input;
    PortLabel label;
    std::vector<double> dl_power;
    double dl_total = 0.0;
    PortSelection bound;     // top-P of the clean uplink (the label set)
    PortSelection baseline;  // top-P of the noisy uplink
};

SelectorSample prepare_selector_sample(const ChannelSample& sample,
                                       const SystemConfig& config,
                                       int oversampling = 4);

// Fraction of clean-downlink power captured by a selection.
double captured_power(const SelectorSample& s, const PortSelection& sel);

struct SelectorHyper {
    int epochs = 40;
    double lr = 1e-3;
    int batch = 64;
    std::uint64_t seed = 1;
    bool focal = true;
    double gamma = 2.0;
    Padding padding = Padding::Circular;
    int oversampling = 4;
};

struct SelectorEpoch {
    int epoch = 0;
    double train_loss = 0.0;
    double val_pn = 0.0;
};

struct SelectorTrainResult {
    SelectorModel model;
    std::vector<SelectorEpoch> history;
    double final_val_pn = 0.0;
    double baseline_val_pn = 0.0;  // noisy top-P on the validation set
    double bound_val_pn = 0.0;     // clean-uplink top-P on the validation set
};

SelectorTrainResult train_selector(const std::vector<ChannelSample>& train,
                                   const std::vector<ChannelSample>& val,
                                   const SystemConfig& config,
                                   const SelectorHyper& hyper);

struct SelectorEvalResult {
    double mean_pn = 0.0;
    double mean_overlap = 0.0;  // against the clean-uplink oracle selection
    double baseline_pn = 0.0;
    double bound_pn = 0.0;
};

SelectorEvalResult evaluate_selector(SelectorModel& model,
                                     const std::vector<ChannelSample>& dataset,
                                     const SystemConfig& config, int oversampling = 4);

}  // namespace csifb
