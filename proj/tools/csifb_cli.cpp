// SPDX-License-Identifier: Apache-2.0
// Operator entry point: dataset generation, training, and the figure
// sweeps, all reproducible from (flags, config file, input files).
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "csifb/experiments.hpp"

namespace {

using namespace csifb;

// Exit code 4: a required checkpoint or input file is absent.
struct MissingArtifact : Error {
    using Error::Error;
};

SystemConfig load_config(const std::string& path) {
    if (path.empty()) return default_config();
    if (!std::filesystem::exists(path))
        throw MissingArtifact("missing artifact: config file " + path);
    return load_config_toml(path);
}

void require_file(const std::string& path, const std::string& what) {
    if (path.empty())
        throw MissingArtifact("missing artifact: " + what + " (flag not given)");
    if (!std::filesystem::exists(path))
        throw MissingArtifact("missing artifact: " + what + " " + path);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir);
}

// ------------------------------------------------------------- gen-data ----

struct GenDataArgs {
    std::string config_path;
    int count = 0;
    double snr_db = 5.0;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
    SystemConfig config = load_config(a.config_path);
    std::vector<ChannelSample> samples =
        generate_dataset(config, a.count, a.snr_db, a.seed);
    if (!a.out.empty() && std::filesystem::path(a.out).has_parent_path())
        ensure_dir(std::filesystem::path(a.out).parent_path().string());
    save_dataset(a.out, samples, config);

    const DelayBasis wd = build_delay_basis(config.m);
    double mean_fraction = 0.0;
    for (const ChannelSample& s : samples) {
        Rotation rot = best_rotation(s.h_ul_clean, config, config.p_ports);
        AngularBasis wa =
            build_angular_basis(config.n_h, config.n_v, rot.rot_h, rot.rot_v);
        mean_fraction += top_port_power_fraction(
            to_angular_delay(s.h_ul_clean, wa, wd), config.p_ports);
    }
    mean_fraction /= static_cast<double>(samples.size());

    RunManifest manifest{"gen_data", config, a.seed,
                         {std::filesystem::path(a.out).filename().string()}};
    std::string dir = std::filesystem::path(a.out).has_parent_path()
                          ? std::filesystem::path(a.out).parent_path().string()
                          : ".";
    write_manifest(manifest, dir);

    std::printf("wrote %s: %d samples at %.1f dB, seed %llu, config %s\n",
                a.out.c_str(), a.count, a.snr_db,
                static_cast<unsigned long long>(a.seed),
                config_hash(config).c_str());
    std::printf("mean top-%d uplink power fraction: %.4f\n", config.p_ports,
                mean_fraction);
    return 0;
}

// ---------------------------------------------------------------- train ----

struct TrainArgs {
    std::string task;
    std::string config_path;
    std::string data;
    std::string val;
    std::string selector_ckpt;  // recon pairs from a trained selector
    std::string out;
    int epochs = 200;
    double lr = 3e-6;
    int batch = 64;
    std::uint64_t seed = 1;
    std::string padding = "circular";
    std::string loss = "focal";
    double gamma = 2.0;
    double w = 0.01;
    int oversampling = 4;
    bool desk = false;
    bool epochs_set = false, lr_set = false, batch_set = false;
};

Padding parse_padding(const std::string& s) {
    if (s == "circular") return Padding::Circular;
    if (s == "zero") return Padding::Zero;
    throw ConfigError("padding must be circular or zero, got " + s);
}

void apply_desk(TrainArgs& a) {
    DeskPreset preset;
    if (!a.epochs_set) a.epochs = preset.epochs;
    if (!a.lr_set) a.lr = preset.lr;
    if (!a.batch_set) a.batch = preset.batch;
}

int cmd_train(TrainArgs a) {
    if (a.desk) apply_desk(a);
    SystemConfig config = load_config(a.config_path);
    require_file(a.data, "training dataset");
    require_file(a.val, "validation dataset");
    std::vector<ChannelSample> train = load_dataset(a.data, config);
    std::vector<ChannelSample> val = load_dataset(a.val, config);

    const std::filesystem::path out(a.out);
    if (out.has_parent_path()) ensure_dir(out.parent_path().string());
    const std::string dir = out.has_parent_path() ? out.parent_path().string() : ".";
    const std::string stem = (out.parent_path() / out.stem()).string();
    const std::string hash = config_hash(config);

    if (a.task == "select") {
        SelectorHyper hyper;
        hyper.epochs = a.epochs;
        hyper.lr = a.lr;
        hyper.batch = a.batch;
        hyper.seed = a.seed;
        hyper.focal = a.loss == "focal";
        hyper.gamma = a.gamma;
        hyper.padding = parse_padding(a.padding);
        hyper.oversampling = a.oversampling;
        if (!hyper.focal && a.loss != "bce")
            throw ConfigError("loss must be focal or bce, got " + a.loss);

        SelectorTrainResult r = train_selector(train, val, config, hyper);
        save_selector(a.out, r.model, config);
        write_selector_history(stem + "_history.csv", r.history, a.seed, hash);
        write_manifest({"train_select", config, a.seed,
                        {out.filename().string(),
                         out.stem().string() + "_history.csv"}},
                       dir);
        std::printf("final val P_N %.4f (baseline %.4f, bound %.4f), config %s\n",
                    r.final_val_pn, r.baseline_val_pn, r.bound_val_pn, hash.c_str());
    } else if (a.task == "recon") {
        SelectorModel selector;
        SelectorModel* sel_ptr = nullptr;
        if (!a.selector_ckpt.empty()) {
            require_file(a.selector_ckpt, "selector checkpoint");
            selector = load_selector(a.selector_ckpt, config);
            sel_ptr = &selector;
        }
        std::vector<ReconSample> train_pairs, val_pairs;
        train_pairs.reserve(train.size());
        val_pairs.reserve(val.size());
        for (const ChannelSample& s : train)
            train_pairs.push_back(
                build_recon_sample(s, config, sel_ptr, false, a.oversampling));
        for (const ChannelSample& s : val)
            val_pairs.push_back(
                build_recon_sample(s, config, sel_ptr, false, a.oversampling));

        ReconHyper hyper;
        hyper.epochs = a.epochs;
        hyper.lr = a.lr;
        hyper.batch = a.batch;
        hyper.seed = a.seed;
        hyper.padding = parse_padding(a.padding);
        hyper.w = a.w;
        hyper.oversampling = a.oversampling;

        ReconTrainResult r = train_recon(train_pairs, val_pairs, config, hyper);
        save_recon(a.out, r.model, config);
        write_recon_history(stem + "_history.csv", r.history, a.seed, hash);
        write_manifest({"train_recon", config, a.seed,
                        {out.filename().string(),
                         out.stem().string() + "_history.csv"}},
                       dir);
        std::printf("final val MSE %.6g (identity baseline %.6g), config %s\n",
                    r.final_val_mse, r.baseline_val_mse, hash.c_str());
    } else {
        throw ConfigError("task must be select or recon, got " + a.task);
    }
    return 0;
}

// ----------------------------------------------------------------- eval ----

struct EvalArgs {
    std::string experiment;
    std::string config_path;
    std::string ckpt;
    std::string data;
    std::string val;
    std::string out;
    int drops = 256;
    std::uint64_t seed = 1;
    double snr_db = 5.0;
    int oversampling = 4;
    std::vector<double> snr_grid = {-5.0, 0.0, 5.0, 10.0, 15.0};
    std::vector<double> w_list = {0.001, 0.005, 0.01, 0.02, 0.1};
    std::vector<int> p_list = {8, 16, 32, 64};
    int epochs = 0;  // 0: keep the desk preset's epoch budget
};

int cmd_eval(const EvalArgs& a) {
    SystemConfig config = load_config(a.config_path);
    ensure_dir(a.out);
    DeskPreset preset;
    preset.seed = a.seed;
    preset.snr_db = a.snr_db;
    preset.oversampling = a.oversampling;
    if (a.epochs > 0) preset.epochs = a.epochs;

    if (a.experiment == "fig2" || a.experiment == "fig4") {
        require_file(a.data, "training dataset");
        require_file(a.val, "validation dataset");
        std::vector<ChannelSample> train = load_dataset(a.data, config);
        std::vector<ChannelSample> val = load_dataset(a.val, config);
        if (a.experiment == "fig2") {
            std::vector<Fig2Combo> combos = {{Padding::Zero, false},
                                             {Padding::Zero, true},
                                             {Padding::Circular, false},
                                             {Padding::Circular, true}};
            Fig2Result r = run_fig2(train, val, config, preset, combos, a.out);
            std::printf("fig2 done in %.1f s: baseline %.4f, bound %.4f\n", r.seconds,
                        r.baseline_val_pn, r.bound_val_pn);
            for (const auto& c : r.curves)
                std::printf("  %-15s final val P_N %.4f (%.1f s)\n", c.name.c_str(),
                            c.final_val_pn, c.seconds);
        } else {
            std::vector<ReconSample> train_pairs =
                build_recon_dataset(train, config, a.oversampling);
            std::vector<ReconSample> val_pairs =
                build_recon_dataset(val, config, a.oversampling);
            Fig4Result r = run_fig4(train_pairs, val_pairs, config, preset, a.w_list,
                                    a.out);
            std::printf("fig4 done in %.1f s\n", r.seconds);
            for (const auto& c : r.curves)
                std::printf("  w=%-7g final val MSE %.6g (baseline %.6g)\n", c.w,
                            c.final_val_mse, c.baseline_val_mse);
        }
    } else if (a.experiment == "fig3") {
        require_file(a.ckpt, "selector checkpoint");
        SelectorModel selector = load_selector(a.ckpt, config);
        Fig3Result r = run_fig3(selector, config, a.snr_grid, a.drops, a.seed,
                                a.oversampling, a.out);
        std::printf("fig3 done in %.1f s\n", r.seconds);
        for (const auto& row : r.rows)
            std::printf("  %+5.1f dB: baseline %.3f, dl %.3f, bound %.3f (%d drops, "
                        "%d skipped)\n",
                        row.snr_db, row.r_baseline, row.r_dl, row.r_bound, row.drops,
                        row.skipped);
    } else if (a.experiment == "fig5") {
        require_file(a.ckpt, "reconstruction checkpoint");
        ReconModel recon = load_recon(a.ckpt, config);
        Fig5Result r = run_fig5(recon, config, a.p_list, a.drops, a.seed, a.snr_db,
                                a.oversampling, a.out);
        std::printf("fig5 done in %.1f s\n", r.seconds);
        for (const auto& row : r.rows)
            std::printf("  P=%-3d codebook %.3f, dl %.3f (%d drops, %d skipped)\n",
                        row.p_ports, row.r_typeii, row.r_dl, row.drops, row.skipped);
    } else {
        throw ConfigError("experiment must be fig2, fig3, fig4, or fig5, got " +
                          a.experiment);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Type-II codebook CSI feedback laboratory"};
    app.require_subcommand(1);

    GenDataArgs gen;
    CLI::App* cgen = app.add_subcommand("gen-data", "Generate a channel dataset");
    cgen->add_option("--config", gen.config_path, "TOML system config");
    cgen->add_option("--count", gen.count, "Number of samples")
        ->required()
        ->check(CLI::Range(1, 1 << 30));
    cgen->add_option("--snr-db", gen.snr_db, "Uplink SNR in dB")->capture_default_str();
    cgen->add_option("--seed", gen.seed, "Master seed")->capture_default_str();
    cgen->add_option("--out", gen.out, "Output dataset path")->required();

    TrainArgs tr;
    CLI::App* ctrain = app.add_subcommand("train", "Train a model");
    ctrain->add_option("--task", tr.task, "select or recon")->required();
    ctrain->add_option("--config", tr.config_path, "TOML system config");
    ctrain->add_option("--data", tr.data, "Training dataset")->required();
    ctrain->add_option("--val", tr.val, "Validation dataset")->required();
    ctrain->add_option("--selector", tr.selector_ckpt,
                       "Selector checkpoint for recon pair building");
    auto* oe = ctrain->add_option("--epochs", tr.epochs, "Training epochs")->capture_default_str();
    auto* ol = ctrain->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
    auto* ob = ctrain->add_option("--batch", tr.batch, "Batch size")->capture_default_str();
    ctrain->add_option("--seed", tr.seed, "Training seed")->capture_default_str();
    ctrain->add_option("--padding", tr.padding, "circular or zero")->capture_default_str();
    ctrain->add_option("--loss", tr.loss, "focal or bce (select task)")->capture_default_str();
    ctrain->add_option("--gamma", tr.gamma, "Focusing parameter")->capture_default_str();
    ctrain->add_option("--w", tr.w, "Shortcut weight (recon task)")->capture_default_str();
    ctrain->add_option("--oversampling", tr.oversampling, "Rotation grid")->capture_default_str();
    ctrain->add_flag("--preset-desk", tr.desk,
                     "Desk-scale budget: 40 epochs, batch 64, lr 1e-3");
    ctrain->add_option("--out", tr.out, "Checkpoint output path")->required();

    EvalArgs ev;
    CLI::App* ceval = app.add_subcommand("eval", "Run an experiment sweep");
    ceval->add_option("--experiment", ev.experiment, "fig2, fig3, fig4, or fig5")
        ->required();
    ceval->add_option("--config", ev.config_path, "TOML system config");
    ceval->add_option("--ckpt", ev.ckpt, "Model checkpoint (fig3, fig5)");
    ceval->add_option("--data", ev.data, "Training dataset (fig2, fig4)");
    ceval->add_option("--val", ev.val, "Validation dataset (fig2, fig4)");
    ceval->add_option("--drops", ev.drops, "UE drops per point (fig3, fig5)")->capture_default_str();
    ceval->add_option("--seed", ev.seed, "Sweep seed")->capture_default_str();
    ceval->add_option("--snr-db", ev.snr_db, "Uplink SNR (fig4, fig5)")->capture_default_str();
    ceval->add_option("--epochs", ev.epochs, "Override training epochs (fig2, fig4)");
    ceval->add_option("--oversampling", ev.oversampling, "Rotation grid")->capture_default_str();
    ceval->add_option("--snr-grid", ev.snr_grid, "SNR grid in dB (fig3)");
    ceval->add_option("--w-list", ev.w_list, "Shortcut weights (fig4)");
    ceval->add_option("--p-list", ev.p_list, "Port budgets (fig5)");
    ceval->add_option("--out", ev.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
        tr.epochs_set = oe->count() > 0;
        tr.lr_set = ol->count() > 0;
        tr.batch_set = ob->count() > 0;
        if (cgen->parsed()) return cmd_gen_data(gen);
        if (ctrain->parsed()) return cmd_train(tr);
        return cmd_eval(ev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const MissingArtifact& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
