// SPDX-License-Identifier: Apache-2.0
#include "csifb/selector_model.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

namespace csifb {

FocalLossConfig make_focal_config(const SystemConfig& config, double gamma) {
    if (gamma < 0.0) throw ConfigError("focusing parameter must be >= 0");
    FocalLossConfig cfg;
    cfg.gamma = gamma;
    const double ports = config.port_count();
    cfg.w_pos = (ports - config.p_ports) / ports;
    cfg.w_neg = config.p_ports / ports;
    return cfg;
}

PortLabel labels_from_clean(const ChannelMatrix& h_clean, const AngularBasis& wa,
                            const DelayBasis& wd, int p) {
    AngularDelayCsi ht = to_angular_delay(h_clean, wa, wd);
    PortSelection sel = select_ports_topP(ht, p);
    PortLabel label(static_cast<size_t>(ht.size()), 0);
    for (int port : sel.ports) label[static_cast<size_t>(port)] = 1;
    return label;
}

PortSelection decode_topP(const std::vector<double>& scores, int p) {
    const int n = static_cast<int>(scores.size());
    if (p < 1 || p > n) throw ConfigError("port count out of range");
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
    });
    PortSelection sel;
    sel.ports.assign(order.begin(), order.begin() + p);
    return sel;
}

SelectorSample prepare_selector_sample(const ChannelSample& sample,
                                       const SystemConfig& config, int oversampling) {
    SelectorSample out;
    out.rot = best_rotation(sample.h_ul_noisy, config, config.p_ports, oversampling);
    AngularBasis wa = build_angular_basis(config.n_h, config.n_v, out.rot.rot_h,
                                          out.rot.rot_v, oversampling);
    DelayBasis wd = build_delay_basis(config.m);

    out.input = preprocess<float>(sample.h_ul_noisy, wa, wd);
    AngularDelayCsi ht_noisy = to_angular_delay(sample.h_ul_noisy, wa, wd);
    out.baseline = select_ports_topP(ht_noisy, config.p_ports);
    AngularDelayCsi ht_clean = to_angular_delay(sample.h_ul_clean, wa, wd);
    out.bound = select_ports_topP(ht_clean, config.p_ports);
    out.label.assign(static_cast<size_t>(config.port_count()), 0);
    for (int port : out.bound.ports) out.label[static_cast<size_t>(port)] = 1;

    AngularDelayCsi ht_dl = to_angular_delay(sample.h_dl_clean, wa, wd);
    out.dl_power.resize(static_cast<size_t>(ht_dl.size()));
    for (int a = 0; a < ht_dl.rows(); ++a)
        for (int d = 0; d < ht_dl.cols(); ++d)
            out.dl_power[static_cast<size_t>(a * ht_dl.cols() + d)] =
                std::norm(ht_dl(a, d));
    out.dl_total = ht_dl.squaredNorm();
    return out;
}

double captured_power(const SelectorSample& s, const PortSelection& sel) {
    if (s.dl_total <= 0.0) throw DataError("sample has zero downlink power");
    double captured = 0.0;
    for (int port : sel.ports) captured += s.dl_power[static_cast<size_t>(port)];
    return captured / s.dl_total;
}

namespace {

void fill_batch(const std::vector<SelectorSample>& data, const std::vector<int>& order,
                int begin, int count, Tensor<float>& x, Tensor<float>& y) {
    const auto& first = data[static_cast<size_t>(order[static_cast<size_t>(begin)])];
    const int n_tx = first.input.dim(2), m = first.input.dim(3);
    const int n_ports = static_cast<int>(first.label.size());
    x = Tensor<float>({count, 2, n_tx, m});
    y = Tensor<float>({count, n_ports});
    const size_t row = first.input.v.size();
    for (int k = 0; k < count; ++k) {
        const auto& s = data[static_cast<size_t>(order[static_cast<size_t>(begin + k)])];
        std::memcpy(x.v.data() + static_cast<size_t>(k) * row, s.input.v.data(),
                    row * sizeof(float));
        for (int i = 0; i < n_ports; ++i)
            y.at2(k, i) = static_cast<float>(s.label[static_cast<size_t>(i)]);
    }
}

double mean_decoded_power(SelectorModel& model, const std::vector<SelectorSample>& data,
                          int p, int batch) {
    std::vector<int> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    double total = 0.0;
    std::vector<double> row(static_cast<size_t>(model.n_tx * model.m));
    for (int begin = 0; begin < static_cast<int>(data.size()); begin += batch) {
        int count = std::min<int>(batch, static_cast<int>(data.size()) - begin);
        Tensor<float> x, y;
        fill_batch(data, order, begin, count, x, y);
        Tensor<float> probs = model.forward(x, Mode::Eval);
        for (int k = 0; k < count; ++k) {
            for (size_t i = 0; i < row.size(); ++i)
                row[i] = probs.at2(k, static_cast<int>(i));
            PortSelection sel = decode_topP(row, p);
            total += captured_power(data[static_cast<size_t>(begin + k)], sel);
        }
    }
    return total / static_cast<double>(data.size());
}

}  // namespace

SelectorTrainResult train_selector(const std::vector<ChannelSample>& train,
                                   const std::vector<ChannelSample>& val,
                                   const SystemConfig& config,
                                   const SelectorHyper& hyper) {
    if (train.empty() || val.empty()) throw DataError("empty training or validation set");
    if (hyper.batch < 2) throw ConfigError("batch size must be at least 2");
    if (hyper.epochs < 1) throw ConfigError("epoch count must be positive");
    if (hyper.lr <= 0.0) throw ConfigError("learning rate must be positive");

    std::vector<SelectorSample> train_prep, val_prep;
    train_prep.reserve(train.size());
    for (const auto& s : train)
        train_prep.push_back(prepare_selector_sample(s, config, hyper.oversampling));
    val_prep.reserve(val.size());
    for (const auto& s : val)
        val_prep.push_back(prepare_selector_sample(s, config, hyper.oversampling));

    SelectorTrainResult res;
    res.model = make_selector<float>(config, hyper.padding, Rng::split(hyper.seed, 0));
    std::vector<ParamView<float>> params;
    collect_params(res.model, params);
    AdamState<float> adam;
    FocalLossConfig fcfg = make_focal_config(config, hyper.gamma);
    Rng shuffle_rng(Rng::split(hyper.seed, 1));
    Rng dropout_rng(Rng::split(hyper.seed, 2));

    for (const auto& s : val_prep) {
        res.baseline_val_pn += captured_power(s, s.baseline);
        res.bound_val_pn += captured_power(s, s.bound);
    }
    res.baseline_val_pn /= static_cast<double>(val_prep.size());
    res.bound_val_pn /= static_cast<double>(val_prep.size());

    std::vector<int> order(train_prep.size());
    std::iota(order.begin(), order.end(), 0);
    const int p = config.p_ports;

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
            if (count < 2) break;  // batch statistics need two samples
            Tensor<float> x, y;
            fill_batch(train_prep, order, begin, count, x, y);
            Tensor<float> probs = res.model.forward(x, Mode::Train, &dropout_rng);
            Tensor<float> grad;
            double loss = hyper.focal ? focal_loss_grad(probs, y, fcfg, grad)
                                      : bce_loss_grad(probs, y, grad);
            res.model.backward(grad);
            adam_step(params, adam, static_cast<float>(hyper.lr));
            loss_sum += loss * count;
            seen += count;
        }
        SelectorEpoch entry;
        entry.epoch = epoch;
        entry.train_loss = loss_sum / static_cast<double>(seen);
        entry.val_pn = mean_decoded_power(res.model, val_prep, p, hyper.batch);
        res.history.push_back(entry);
    }
    res.final_val_pn = res.history.back().val_pn;
    return res;
}

SelectorEvalResult evaluate_selector(SelectorModel& model,
                                     const std::vector<ChannelSample>& dataset,
                                     const SystemConfig& config, int oversampling) {
    if (dataset.empty()) throw DataError("empty evaluation set");
    SelectorEvalResult out;
    const int p = config.p_ports;
    std::vector<double> row(static_cast<size_t>(config.port_count()));
    const int batch = 64;
    std::vector<SelectorSample> prep;
    prep.reserve(static_cast<size_t>(batch));
    for (size_t begin = 0; begin < dataset.size(); begin += batch) {
        size_t count = std::min<size_t>(batch, dataset.size() - begin);
        prep.clear();
        for (size_t k = 0; k < count; ++k)
            prep.push_back(
                prepare_selector_sample(dataset[begin + k], config, oversampling));
        std::vector<int> order(count);
        std::iota(order.begin(), order.end(), 0);
        Tensor<float> x, y;
        fill_batch(prep, order, 0, static_cast<int>(count), x, y);
        Tensor<float> probs = model.forward(x, Mode::Eval);
        for (size_t k = 0; k < count; ++k) {
            for (size_t i = 0; i < row.size(); ++i)
                row[i] = probs.at2(static_cast<int>(k), static_cast<int>(i));
            PortSelection sel = decode_topP(row, p);
            const SelectorSample& s = prep[k];
            out.mean_pn += captured_power(s, sel);
            out.baseline_pn += captured_power(s, s.baseline);
            out.bound_pn += captured_power(s, s.bound);
            int hits = 0;
            for (int port : sel.ports)
                if (s.label[static_cast<size_t>(port)] != 0) ++hits;
            out.mean_overlap += static_cast<double>(hits) / static_cast<double>(p);
        }
    }
    const double n = static_cast<double>(dataset.size());
    out.mean_pn /= n;
    out.mean_overlap /= n;
    out.baseline_pn /= n;
    out.bound_pn /= n;
    return out;
}

}  // namespace csifb
