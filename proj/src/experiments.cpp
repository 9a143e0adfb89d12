// SPDX-License-Identifier: Apache-2.0
#include "csifb/experiments.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <system_error>

#include "csifb/checkpoint.hpp"
#include "json.hpp"

namespace csifb {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(std::filesystem::path(path).parent_path(), ec);
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path + " for writing");
    return out;
}

// 64-bit hash split into four 16-bit chunks, losslessly representable in
// float32 checkpoint tensors.
Tensor<float> hash_tensor(const SystemConfig& config) {
    const std::string hex = config_hash(config);
    const std::uint64_t h = std::stoull(hex, nullptr, 16);
    Tensor<float> t(std::vector<int>{4});
    for (int i = 0; i < 4; ++i)
        t.v[static_cast<size_t>(i)] =
            static_cast<float>((h >> (48 - 16 * i)) & 0xffffu);
    return t;
}

void append_meta(std::vector<std::pair<std::string, Tensor<float>*>>& entries,
                 Tensor<float>& padding, Tensor<float>& hash, Padding pad) {
    padding = Tensor<float>(std::vector<int>{1});
    padding.v[0] = pad == Padding::Circular ? 0.0f : 1.0f;
    entries.emplace_back("meta.padding", &padding);
    entries.emplace_back("meta.config_hash", &hash);
}

Padding padding_from_meta(const std::map<std::string, Tensor<float>>& loaded) {
    auto it = loaded.find("meta.padding");
    if (it == loaded.end()) return Padding::Circular;
    return it->second.v.at(0) == 0.0f ? Padding::Circular : Padding::Zero;
}

}  // namespace

std::string config_hash(const SystemConfig& config) {
    const std::string s = to_string(config);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_manifest(const RunManifest& m, const std::string& out_dir) {
    nlohmann::json j;
    j["experiment"] = m.experiment;
    j["seed"] = m.seed;
    j["config_hash"] = config_hash(m.config);
    j["config"] = {{"n_h", m.config.n_h},
                   {"n_v", m.config.n_v},
                   {"n_tx", m.config.n_tx},
                   {"m", m.config.m},
                   {"n_s", m.config.n_s},
                   {"k_ues", m.config.k_ues},
                   {"f_c_ul", m.config.f_c_ul},
                   {"f_c_dl", m.config.f_c_dl},
                   {"f_s", m.config.f_s},
                   {"p_tx_dbm", m.config.p_tx_dbm},
                   {"noise_figure_db", m.config.noise_figure_db},
                   {"cell_radius_m", m.config.cell_radius_m},
                   {"p_ports", m.config.p_ports},
                   {"q_w", m.config.q_w},
                   {"q_na", m.config.q_na},
                   {"q_np", m.config.q_np}};
    j["outputs"] = m.outputs;
    std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    j["generated_utc"] = stamp;

    const std::string path = out_dir + "/" + m.experiment + "_manifest.json";
    auto out = open_out(path);
    out << j.dump(2) << "\n";
}

// ------------------------------------------------------------ checkpoints ----

void save_selector(const std::string& path, SelectorModel& model,
                   const SystemConfig& config) {
    auto entries = state_tensors(model);
    Tensor<float> pad_t, hash_t = hash_tensor(config);
    append_meta(entries, pad_t, hash_t, model.trunk.blocks[0].conv.padding);
    save_tensors(path, entries);
}

SelectorModel load_selector(const std::string& path, const SystemConfig& config) {
    auto loaded = load_tensors(path);
    SelectorModel model = make_selector<float>(config, padding_from_meta(loaded), 0);
    auto entries = state_tensors(model);
    assign_state(loaded, entries);
    return model;
}

void save_recon(const std::string& path, ReconModel& model,
                const SystemConfig& config) {
    auto entries = state_tensors(model);
    Tensor<float> pad_t, hash_t = hash_tensor(config);
    append_meta(entries, pad_t, hash_t, model.trunk.blocks[0].conv.padding);
    Tensor<float> w_t(std::vector<int>{1});
    w_t.v[0] = model.w;
    entries.emplace_back("meta.shortcut_w", &w_t);
    save_tensors(path, entries);
}

ReconModel load_recon(const std::string& path, const SystemConfig& config) {
    auto loaded = load_tensors(path);
    double w = 0.01;
    auto it = loaded.find("meta.shortcut_w");
    if (it != loaded.end()) w = static_cast<double>(it->second.v.at(0));
    ReconModel model = make_recon<float>(config, padding_from_meta(loaded), w, 0);
    auto entries = state_tensors(model);
    assign_state(loaded, entries);
    return model;
}

void write_selector_history(const std::string& path,
                            const std::vector<SelectorEpoch>& history,
                            std::uint64_t seed, const std::string& hash) {
    auto out = open_out(path);
    out << "epoch,train_loss,val_pn,seed,config_hash\n";
    for (const auto& e : history)
        out << e.epoch << "," << fmt(e.train_loss) << "," << fmt(e.val_pn) << ","
            << seed << "," << hash << "\n";
}

void write_recon_history(const std::string& path,
                         const std::vector<ReconEpoch>& history, std::uint64_t seed,
                         const std::string& hash) {
    auto out = open_out(path);
    out << "epoch,train_loss,val_mse,seed,config_hash\n";
    for (const auto& e : history)
        out << e.epoch << "," << fmt(e.train_loss) << "," << fmt(e.val_mse) << ","
            << seed << "," << hash << "\n";
}

// ------------------------------------------------------------------- fig2 ----

std::string combo_name(const Fig2Combo& combo) {
    std::string name = combo.padding == Padding::Circular ? "circular" : "zero";
    name += combo.focal ? "_focal" : "_bce";
    return name;
}

Fig2Result run_fig2(const std::vector<ChannelSample>& train,
                    const std::vector<ChannelSample>& val, const SystemConfig& config,
                    const DeskPreset& preset, const std::vector<Fig2Combo>& combos,
                    const std::string& out_dir) {
    if (combos.empty()) throw ConfigError("fig2 needs at least one combination");
    const auto t0 = std::chrono::steady_clock::now();
    const std::string hash = config_hash(config);

    Fig2Result result;
    RunManifest manifest{"fig2", config, preset.seed, {"fig2.csv"}};
    auto csv = open_out(out_dir + "/fig2.csv");
    csv << "config,epoch,train_loss,val_pn,seed,config_hash\n";

    for (const Fig2Combo& combo : combos) {
        SelectorHyper hyper;
        hyper.epochs = preset.epochs;
        hyper.lr = preset.lr;
        hyper.batch = preset.batch;
        hyper.seed = preset.seed;
        hyper.focal = combo.focal;
        hyper.padding = combo.padding;
        hyper.oversampling = preset.oversampling;

        const auto tc = std::chrono::steady_clock::now();
        SelectorTrainResult r = train_selector(train, val, config, hyper);

        Fig2Curve curve;
        curve.name = combo_name(combo);
        curve.history = r.history;
        curve.final_val_pn = r.final_val_pn;
        curve.seconds = seconds_since(tc);
        for (const auto& e : r.history)
            csv << curve.name << "," << e.epoch << "," << fmt(e.train_loss) << ","
                << fmt(e.val_pn) << "," << preset.seed << "," << hash << "\n";

        const std::string ckpt = "selector_" + curve.name + ".ckpt";
        save_selector(out_dir + "/" + ckpt, r.model, config);
        manifest.outputs.push_back(ckpt);

        result.baseline_val_pn = r.baseline_val_pn;
        result.bound_val_pn = r.bound_val_pn;
        result.curves.push_back(std::move(curve));
    }

    // constant reference lines, one row per epoch to keep the schema regular
    for (int e = 1; e <= preset.epochs; ++e)
        csv << "baseline," << e << ",," << fmt(result.baseline_val_pn) << ","
            << preset.seed << "," << hash << "\n";
    for (int e = 1; e <= preset.epochs; ++e)
        csv << "bound," << e << ",," << fmt(result.bound_val_pn) << "," << preset.seed
            << "," << hash << "\n";

    result.seconds = seconds_since(t0);
    write_manifest(manifest, out_dir);
    return result;
}

// ------------------------------------------------------------------- fig3 ----

namespace {

// Quantized feedback round trip for one UE under a given selection: what
// the BS can rebuild in the antenna-frequency domain.
ChannelMatrix feedback_reconstruction(const ChannelMatrix& h_dl, const PortSelection& sel,
                                      const AngularBasis& wa, const DelayBasis& wd,
                                      const QuantizerSpec& spec) {
    PortCoefficients co = measure_coefficients(h_dl, sel, wa, wd);
    QuantizedFeedback fb = quantize(co, spec);
    return reconstruct(fb, sel, wa, wd, spec);
}

}  // namespace

Fig3Result run_fig3(SelectorModel& selector, const SystemConfig& config,
                    const std::vector<double>& snr_grid_db, int drops,
                    std::uint64_t seed, int oversampling, const std::string& out_dir) {
    if (drops < 1) throw ConfigError("fig3 needs at least one drop");
    const auto t0 = std::chrono::steady_clock::now();
    const SumRateConfig sr = make_sum_rate_config(config);
    const QuantizerSpec spec = make_quantizer_spec(config);
    const DelayBasis wd = build_delay_basis(config.m);
    const std::string hash = config_hash(config);

    Fig3Result result;
    for (double snr_db : snr_grid_db) {
        Fig3Row row;
        row.snr_db = snr_db;
        double sum_base = 0.0, sum_dl = 0.0, sum_bound = 0.0;
        int counted = 0;
        for (int d = 0; d < drops; ++d) {
            // common channel and geometry streams across the SNR grid
            std::vector<ChannelSample> ues = generate_dataset(
                config, config.k_ues, snr_db, Rng::split(seed, static_cast<uint64_t>(d)));
            Rng geo(Rng::split(Rng::split(seed, 7), static_cast<uint64_t>(d)));
            std::vector<double> dists = draw_ue_distances(sr, geo);
            std::vector<double> gains(dists.size());
            for (size_t u = 0; u < dists.size(); ++u)
                gains[u] = pathloss_amplitude(dists[u], sr);

            try {
                std::vector<ChannelMatrix> truth, rec_base, rec_dl, rec_bound;
                for (const ChannelSample& ue : ues) {
                    truth.push_back(ue.h_dl_clean);

                    Rotation rot_n = best_rotation(ue.h_ul_noisy, config,
                                                   config.p_ports, oversampling);
                    AngularBasis wa_n = build_angular_basis(config.n_h, config.n_v,
                                                            rot_n.rot_h, rot_n.rot_v,
                                                            oversampling);
                    AngularDelayCsi ht_n = to_angular_delay(ue.h_ul_noisy, wa_n, wd);
                    PortSelection sel_base = select_ports_topP(ht_n, config.p_ports);
                    rec_base.push_back(
                        feedback_reconstruction(ue.h_dl_clean, sel_base, wa_n, wd, spec));

                    Tensor<float> input = preprocess<float>(ue.h_ul_noisy, wa_n, wd);
                    Tensor<float> scores = selector.forward(input, Mode::Eval);
                    std::vector<double> sv(scores.v.begin(), scores.v.end());
                    PortSelection sel_dl = decode_topP(sv, config.p_ports);
                    rec_dl.push_back(
                        feedback_reconstruction(ue.h_dl_clean, sel_dl, wa_n, wd, spec));

                    Rotation rot_c = best_rotation(ue.h_ul_clean, config,
                                                   config.p_ports, oversampling);
                    AngularBasis wa_c = build_angular_basis(config.n_h, config.n_v,
                                                            rot_c.rot_h, rot_c.rot_v,
                                                            oversampling);
                    AngularDelayCsi ht_c = to_angular_delay(ue.h_ul_clean, wa_c, wd);
                    PortSelection sel_bound = select_ports_topP(ht_c, config.p_ports);
                    rec_bound.push_back(
                        feedback_reconstruction(ue.h_dl_clean, sel_bound, wa_c, wd, spec));
                }
                double r_b = sum_rate(truth, rec_base, gains, sr);
                double r_d = sum_rate(truth, rec_dl, gains, sr);
                double r_o = sum_rate(truth, rec_bound, gains, sr);
                sum_base += r_b;
                sum_dl += r_d;
                sum_bound += r_o;
                ++counted;
            } catch (const RankError&) {
                ++row.skipped;
            }
        }
        if (counted == 0) throw DataError("every drop was rank-deficient");
        row.r_baseline = sum_base / counted;
        row.r_dl = sum_dl / counted;
        row.r_bound = sum_bound / counted;
        row.drops = counted;
        result.rows.push_back(row);
    }

    auto csv = open_out(out_dir + "/fig3.csv");
    csv << "snr_db,r_baseline,r_dl,r_bound,drops,skipped,seed,config_hash\n";
    for (const Fig3Row& r : result.rows)
        csv << fmt(r.snr_db) << "," << fmt(r.r_baseline) << "," << fmt(r.r_dl) << ","
            << fmt(r.r_bound) << "," << r.drops << "," << r.skipped << "," << seed
            << "," << hash << "\n";
    write_manifest({"fig3", config, seed, {"fig3.csv"}}, out_dir);
    result.seconds = seconds_since(t0);
    return result;
}

// ------------------------------------------------------------------- fig4 ----

Fig4Result run_fig4(const std::vector<ReconSample>& train,
                    const std::vector<ReconSample>& val, const SystemConfig& config,
                    const DeskPreset& preset, const std::vector<double>& w_list,
                    const std::string& out_dir) {
    if (w_list.empty()) throw ConfigError("fig4 needs at least one shortcut weight");
    const auto t0 = std::chrono::steady_clock::now();
    const std::string hash = config_hash(config);

    Fig4Result result;
    auto csv = open_out(out_dir + "/fig4.csv");
    csv << "w,epoch,train_loss,val_mse,seed,config_hash\n";
    for (double w : w_list) {
        ReconHyper hyper;
        hyper.epochs = preset.epochs;
        hyper.lr = preset.lr;
        hyper.batch = preset.batch;
        hyper.seed = preset.seed;
        hyper.w = w;
        hyper.oversampling = preset.oversampling;

        const auto tc = std::chrono::steady_clock::now();
        ReconTrainResult r = train_recon(train, val, config, hyper);
        Fig4Curve curve;
        curve.w = w;
        curve.history = r.history;
        curve.final_val_mse = r.final_val_mse;
        curve.baseline_val_mse = r.baseline_val_mse;
        curve.seconds = seconds_since(tc);
        for (const auto& e : r.history)
            csv << fmt(w) << "," << e.epoch << "," << fmt(e.train_loss) << ","
                << fmt(e.val_mse) << "," << preset.seed << "," << hash << "\n";
        result.curves.push_back(std::move(curve));
    }
    write_manifest({"fig4", config, preset.seed, {"fig4.csv"}}, out_dir);
    result.seconds = seconds_since(t0);
    return result;
}

// ------------------------------------------------------------------- fig5 ----

Fig5Result run_fig5(ReconModel& recon, const SystemConfig& config,
                    const std::vector<int>& p_list, int drops, std::uint64_t seed,
                    double snr_db, int oversampling, const std::string& out_dir) {
    if (drops < 1) throw ConfigError("fig5 needs at least one drop");
    const auto t0 = std::chrono::steady_clock::now();
    const SumRateConfig sr = make_sum_rate_config(config);
    const DelayBasis wd = build_delay_basis(config.m);
    const std::string hash = config_hash(config);

    Fig5Result result;
    for (int p : p_list) {
        SystemConfig pcfg = config;
        pcfg.p_ports = p;
        validate(pcfg);
        Fig5Row row;
        row.p_ports = p;
        double sum_t2 = 0.0, sum_dl = 0.0;
        int counted = 0;
        for (int d = 0; d < drops; ++d) {
            std::vector<ChannelSample> ues = generate_dataset(
                pcfg, pcfg.k_ues, snr_db, Rng::split(seed, static_cast<uint64_t>(d)));
            Rng geo(Rng::split(Rng::split(seed, 7), static_cast<uint64_t>(d)));
            std::vector<double> dists = draw_ue_distances(sr, geo);
            std::vector<double> gains(dists.size());
            for (size_t u = 0; u < dists.size(); ++u)
                gains[u] = pathloss_amplitude(dists[u], sr);

            try {
                std::vector<ChannelMatrix> truth, rec_t2, rec_dl;
                for (const ChannelSample& ue : ues) {
                    truth.push_back(ue.h_dl_clean);
                    ReconSample rs =
                        build_recon_sample(ue, pcfg, nullptr, false, oversampling);
                    AngularBasis wa = build_angular_basis(
                        pcfg.n_h, pcfg.n_v, rs.rot.rot_h, rs.rot.rot_v, oversampling);
                    rec_t2.push_back(from_angular_delay(rs.x, wa, wd));

                    Tensor<float> input = split_re_im<float>(rs.x);
                    Tensor<float> refined = recon.forward(input, Mode::Eval);
                    rec_dl.push_back(
                        from_angular_delay(merge_re_im(refined, 0), wa, wd));
                }
                sum_t2 += sum_rate(truth, rec_t2, gains, sr);
                sum_dl += sum_rate(truth, rec_dl, gains, sr);
                ++counted;
            } catch (const RankError&) {
                ++row.skipped;
            }
        }
        if (counted == 0) throw DataError("every drop was rank-deficient");
        row.r_typeii = sum_t2 / counted;
        row.r_dl = sum_dl / counted;
        row.drops = counted;
        result.rows.push_back(row);
    }

    auto csv = open_out(out_dir + "/fig5.csv");
    csv << "p_ports,r_typeii,r_dl,drops,skipped,seed,config_hash\n";
    for (const Fig5Row& r : result.rows)
        csv << r.p_ports << "," << fmt(r.r_typeii) << "," << fmt(r.r_dl) << ","
            << r.drops << "," << r.skipped << "," << seed << "," << hash << "\n";
    write_manifest({"fig5", config, seed, {"fig5.csv"}}, out_dir);
    result.seconds = seconds_since(t0);
    return result;
}

// ------------------------------------------------------- recon training ----

ReconRunResult run_recon_training(const std::vector<ReconSample>& train,
                                  const std::vector<ReconSample>& val,
                                  const SystemConfig& config, const ReconHyper& hyper,
                                  const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    ReconRunResult result;
    result.train = train_recon(train, val, config, hyper);
    save_recon(out_dir + "/recon.ckpt", result.train.model, config);
    write_recon_history(out_dir + "/recon_history.csv", result.train.history,
                        hyper.seed, config_hash(config));
    write_manifest({"recon", config, hyper.seed, {"recon.ckpt", "recon_history.csv"}},
                   out_dir);
    result.seconds = seconds_since(t0);
    return result;
}

std::vector<ReconSample> build_recon_dataset(const std::vector<ChannelSample>& samples,
                                             const SystemConfig& config,
                                             int oversampling) {
    std::vector<ReconSample> out;
    out.reserve(samples.size());
    for (const ChannelSample& s : samples)
        out.push_back(build_recon_sample(s, config, nullptr, false, oversampling));
    return out;
}

}  // namespace csifb
