// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "csifb/channel.hpp"
#include "csifb/codebook.hpp"
#include "csifb/nn.hpp"
#include "csifb/selector_model.hpp"
#include "csifb/transforms.hpp"

// Learned refinement of the codebook-reconstructed CSI: the same trunk as
// the selector, a dense head producing a vectorized complex correction,
// and a weighted shortcut so the model starts at the codebook baseline.

namespace csifb {

template <typename S>
struct ReconNet {
    ConvTrunk<S> trunk;
    DenseLayer<S> head;  // 512 -> 2*n_tx*m with dropout 0.1
    S w = S(0.01);
    int n_tx = 0, m = 0;
    Tensor<S> cache_x;

    // (n, 2, n_tx, m) -> same shape; output = input + w * correction
    Tensor<S> forward(const Tensor<S>& x, Mode mode, Rng* rng = nullptr) {
        if (x.rank() != 4 || x.dim(1) != 2 || x.dim(2) != n_tx || x.dim(3) != m)
            throw ShapeError("reconstruction input shape mismatch");
        cache_x = x;
        Tensor<S> pooled = trunk.forward(x, mode);
        Tensor<S> delta = dense_forward(pooled, head, mode, rng);
        Tensor<S> out(x.shape);
        const int flat = 2 * n_tx * m;
        for (int b = 0; b < x.dim(0); ++b) {
            const size_t base = static_cast<size_t>(b) * flat;
            for (int f = 0; f < flat; ++f)
                out.v[base + f] = x.v[base + f] + w * delta.at2(b, f);
        }
        return out;
    }

    // takes d(loss)/d(output), returns d(loss)/d(input)
    Tensor<S> backward(const Tensor<S>& grad_out) {
        if (!grad_out.same_shape(cache_x)) throw ShapeError("gradient shape mismatch");
        const int flat = 2 * n_tx * m;
        Tensor<S> gd({grad_out.dim(0), flat});
        for (int b = 0; b < grad_out.dim(0); ++b) {
            const size_t base = static_cast<size_t>(b) * flat;
            for (int f = 0; f < flat; ++f) gd.at2(b, f) = w * grad_out.v[base + f];
        }
        Tensor<S> g = dense_backward(gd, head);
        Tensor<S> gx = trunk.backward(g);
        for (size_t i = 0; i < gx.v.size(); ++i) gx.v[i] += grad_out.v[i];
        return gx;
    }
};

using ReconModel = ReconNet<float>;

template <typename S>
ReconNet<S> make_recon(const SystemConfig& config, Padding padding, double w,
                       std::uint64_t seed) {
    if (w < 0.0) throw ConfigError("shortcut weight must be non-negative");
    ReconNet<S> net;
    net.n_tx = config.n_tx;
    net.m = config.m;
    net.w = static_cast<S>(w);
    net.trunk = make_trunk<S>(padding);
    net.head = make_dense<S>(512, 2 * config.port_count(), S(0.1));
    Rng trunk_rng(Rng::split(seed, 0));
    Rng head_rng(Rng::split(seed, 1));
    init_trunk(net.trunk, trunk_rng);
    init_dense(net.head, head_rng);
    return net;
}

template <typename S>
void collect_params(ReconNet<S>& net, std::vector<ParamView<S>>& out) {
    collect_params(net.trunk, out);
    out.push_back({"head.weight", &net.head.weight, &net.head.grad_weight});
    out.push_back({"head.bias", &net.head.bias, &net.head.grad_bias});
}

template <typename S>
std::vector<std::pair<std::string, Tensor<S>*>> state_tensors(ReconNet<S>& net) {
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

// Real and imaginary parts as two feature channels, no rescaling.
template <typename S>
Tensor<S> split_re_im(const Eigen::MatrixXcd& x) {
    const int rows = static_cast<int>(x.rows()), cols = static_cast<int>(x.cols());
    Tensor<S> out({1, 2, rows, cols});
    for (int a = 0; a < rows; ++a)
        for (int d = 0; d < cols; ++d) {
            out.at4(0, 0, a, d) = static_cast<S>(x(a, d).real());
            out.at4(0, 1, a, d) = static_cast<S>(x(a, d).imag());
        }
    return out;
}

template <typename S>
Eigen::MatrixXcd merge_re_im(const Tensor<S>& t, int sample) {
    if (t.rank() != 4 || t.dim(1) != 2) throw ShapeError("expected a two-channel tensor");
    Eigen::MatrixXcd out(t.dim(2), t.dim(3));
    for (int a = 0; a < t.dim(2); ++a)
        for (int d = 0; d < t.dim(3); ++d)
            out(a, d) = {static_cast<double>(t.at4(sample, 0, a, d)),
                         static_cast<double>(t.at4(sample, 1, a, d))};
    return out;
}

// ----------------------------------------------------------------- loss ----

// Mean over samples of ||y - yhat||_F^2 / (n_tx*m), complex entries as
// paired reals.
template <typename S>
double mse_loss(const Tensor<S>& yhat, const Tensor<S>& y) {
    if (!yhat.same_shape(y)) throw ShapeError("prediction/target shape mismatch");
    if (yhat.rank() != 4) throw ShapeError("expected a 4-D tensor");
    double total = 0.0;
    for (size_t i = 0; i < yhat.v.size(); ++i) {
        double d = static_cast<double>(yhat.v[i]) - static_cast<double>(y.v[i]);
        total += d * d;
    }
    const double per = static_cast<double>(yhat.dim(0)) *
                       static_cast<double>(yhat.dim(2)) *
                       static_cast<double>(yhat.dim(3));
    return total / per;
}

template <typename S>
double mse_loss_grad(const Tensor<S>& yhat, const Tensor<S>& y, Tensor<S>& grad) {
    if (!yhat.same_shape(y)) throw ShapeError("prediction/target shape mismatch");
    if (yhat.rank() != 4) throw ShapeError("expected a 4-D tensor");
    grad = Tensor<S>(yhat.shape);
    const double per = static_cast<double>(yhat.dim(0)) *
                       static_cast<double>(yhat.dim(2)) *
                       static_cast<double>(yhat.dim(3));
    double total = 0.0;
    for (size_t i = 0; i < yhat.v.size(); ++i) {
        double d = static_cast<double>(yhat.v[i]) - static_cast<double>(y.v[i]);
        total += d * d;
        grad.v[i] = static_cast<S>(2.0 * d / per);
    }
    return total / per;
}

// ------------------------------------------------------------- pipeline ----

// One reconstruction training pair: x is the angular-delay CSI the BS can
// rebuild from quantized feedback (peak amplitude 1 by construction), y is
// the clean downlink CSI divided by the measured reference amplitude, so
// both live on one scale and y - x is the quantization-plus-truncation
// residual.
struct ReconSample {
    Eigen::MatrixXcd x;
    Eigen::MatrixXcd y;
    Rotation rot;
    PortSelection sel;
};

// selector == nullptr selects ports by oracle top-P on the clean uplink;
// otherwise the trained selector runs on the noisy uplink.
// bypass_quantizer places the exact measured coefficients instead of the
// quantized ones (the truncation-only reference point).
ReconSample build_recon_sample(const ChannelSample& sample, const SystemConfig& config,
                               SelectorModel* selector = nullptr,
                               bool bypass_quantizer = false, int oversampling = 4);

// ----------------------------------------------------------------- training ----

struct ReconHyper {
    int epochs = 40;
    double lr = 1e-3;
    int batch = 64;
    std::uint64_t seed = 1;
    Padding padding = Padding::Circular;
    double w = 0.01;
    int oversampling = 4;
};

struct ReconEpoch {
    int epoch = 0;
    double train_loss = 0.0;
    double val_mse = 0.0;
};

struct ReconTrainResult {
    ReconModel model;
    std::vector<ReconEpoch> history;
    double final_val_mse = 0.0;
    double baseline_val_mse = 0.0;  // mse of the untouched codebook output
};

ReconTrainResult train_recon(const std::vector<ReconSample>& train,
                             const std::vector<ReconSample>& val,
                             const SystemConfig& config, const ReconHyper& hyper);

// Validation MSE of a trained model against the paired targets.
double evaluate_recon(ReconModel& model, const std::vector<ReconSample>& samples,
                      int batch = 64);

}  // namespace csifb
