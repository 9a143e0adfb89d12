// SPDX-License-Identifier: Apache-2.0
#include "csifb/recon_model.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

namespace csifb {

namespace {

Eigen::MatrixXcd place_on_grid(const PortCoefficients& co, const PortSelection& sel,
                               int n_tx, int m) {
    Eigen::MatrixXcd grid = Eigen::MatrixXcd::Zero(n_tx, m);
    for (size_t i = 0; i < sel.ports.size(); ++i) {
        int port = sel.ports[i];
        grid(port_angular(port, m), port_delay(port, m)) = co.c[i];
    }
    return grid;
}

}  // namespace

ReconSample build_recon_sample(const ChannelSample& sample, const SystemConfig& config,
                               SelectorModel* selector, bool bypass_quantizer,
                               int oversampling) {
    ReconSample out;
    const int p = config.p_ports;
    if (selector == nullptr) {
        out.rot = best_rotation(sample.h_ul_clean, config, p, oversampling);
    } else {
        out.rot = best_rotation(sample.h_ul_noisy, config, p, oversampling);
    }
    AngularBasis wa = build_angular_basis(config.n_h, config.n_v, out.rot.rot_h,
                                          out.rot.rot_v, oversampling);
    DelayBasis wd = build_delay_basis(config.m);

    if (selector == nullptr) {
        out.sel = select_ports_topP(to_angular_delay(sample.h_ul_clean, wa, wd), p);
    } else {
        Tensor<float> x = preprocess<float>(sample.h_ul_noisy, wa, wd);
        Tensor<float> probs = selector->forward(x, Mode::Eval);
        std::vector<double> scores(probs.v.begin(), probs.v.end());
        out.sel = decode_topP(scores, p);
    }

    PortCoefficients co = measure_coefficients(sample.h_dl_clean, out.sel, wa, wd);
    double g0 = 0.0;
    for (const auto& c : co.c) g0 = std::max(g0, std::abs(c));
    if (g0 <= 0.0) throw DataError("all selected ports measured zero");

    if (bypass_quantizer) {
        PortCoefficients scaled = co;
        for (auto& c : scaled.c) c /= g0;
        out.x = place_on_grid(scaled, out.sel, config.n_tx, config.m);
    } else {
        QuantizerSpec spec = make_quantizer_spec(config);
        PortCoefficients cbar = dequantize(quantize(co, spec), spec);
        out.x = place_on_grid(cbar, out.sel, config.n_tx, config.m);
    }
    out.y = to_angular_delay(sample.h_dl_clean, wa, wd) / g0;
    return out;
}

namespace {

void fill_pair_batch(const std::vector<ReconSample>& data, const std::vector<int>& order,
                     int begin, int count, Tensor<float>& x, Tensor<float>& y) {
    const auto& first = data[static_cast<size_t>(order[static_cast<size_t>(begin)])];
    const int n_tx = static_cast<int>(first.x.rows()), m = static_cast<int>(first.x.cols());
    x = Tensor<float>({count, 2, n_tx, m});
    y = Tensor<float>({count, 2, n_tx, m});
    for (int k = 0; k < count; ++k) {
        const auto& s = data[static_cast<size_t>(order[static_cast<size_t>(begin + k)])];
        for (int a = 0; a < n_tx; ++a)
            for (int d = 0; d < m; ++d) {
                x.at4(k, 0, a, d) = static_cast<float>(s.x(a, d).real());
                x.at4(k, 1, a, d) = static_cast<float>(s.x(a, d).imag());
                y.at4(k, 0, a, d) = static_cast<float>(s.y(a, d).real());
                y.at4(k, 1, a, d) = static_cast<float>(s.y(a, d).imag());
            }
    }
}

}  // namespace

double evaluate_recon(ReconModel& model, const std::vector<ReconSample>& samples,
                      int batch) {
    if (samples.empty()) throw DataError("empty evaluation set");
    std::vector<int> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    double total = 0.0;
    for (int begin = 0; begin < static_cast<int>(samples.size()); begin += batch) {
        int count = std::min<int>(batch, static_cast<int>(samples.size()) - begin);
        Tensor<float> x, y;
        fill_pair_batch(samples, order, begin, count, x, y);
        Tensor<float> yhat = model.forward(x, Mode::Eval);
        total += mse_loss(yhat, y) * count;
    }
    return total / static_cast<double>(samples.size());
}

ReconTrainResult train_recon(const std::vector<ReconSample>& train,
                             const std::vector<ReconSample>& val,
                             const SystemConfig& config, const ReconHyper& hyper) {
    if (train.empty() || val.empty()) throw DataError("empty training or validation set");
    if (hyper.batch < 2) throw ConfigError("batch size must be at least 2");
    if (hyper.epochs < 1) throw ConfigError("epoch count must be positive");
    if (hyper.lr <= 0.0) throw ConfigError("learning rate must be positive");

    ReconTrainResult res;
    res.model = make_recon<float>(config, hyper.padding, hyper.w,
                                  Rng::split(hyper.seed, 0));
    std::vector<ParamView<float>> params;
    collect_params(res.model, params);
    AdamState<float> adam;
    Rng shuffle_rng(Rng::split(hyper.seed, 1));
    Rng dropout_rng(Rng::split(hyper.seed, 2));

    {
        std::vector<int> order(val.size());
        std::iota(order.begin(), order.end(), 0);
        double total = 0.0;
        for (int begin = 0; begin < static_cast<int>(val.size()); begin += hyper.batch) {
            int count = std::min<int>(hyper.batch, static_cast<int>(val.size()) - begin);
            Tensor<float> x, y;
            fill_pair_batch(val, order, begin, count, x, y);
            total += mse_loss(x, y) * count;
        }
        res.baseline_val_mse = total / static_cast<double>(val.size());
    }

    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            int j = static_cast<int>(
                shuffle_rng.uniform_int(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }
        double loss_sum = 0.0;
        std::int64_t seen = 0;
        for (int begin = 0; begin + 1 < static_cast<int>(order.size());
             begin += hyper.batch) {
            int count =
                std::min<int>(hyper.batch, static_cast<int>(order.size()) - begin);
            if (count < 2) break;
            Tensor<float> x, y;
            fill_pair_batch(train, order, begin, count, x, y);
            Tensor<float> yhat = res.model.forward(x, Mode::Train, &dropout_rng);
            Tensor<float> grad;
            double loss = mse_loss_grad(yhat, y, grad);
            res.model.backward(grad);
            adam_step(params, adam, static_cast<float>(hyper.lr));
            loss_sum += loss * count;
            seen += count;
        }
        ReconEpoch entry;
        entry.epoch = epoch;
        entry.train_loss = loss_sum / static_cast<double>(seen);
        entry.val_mse = evaluate_recon(res.model, val, hyper.batch);
        res.history.push_back(entry);
    }
    res.final_val_mse = res.history.back().val_mse;
    return res;
}

}  // namespace csifb
