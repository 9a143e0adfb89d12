// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "csifb/channel.hpp"
#include "csifb/config.hpp"
#include "csifb/eval.hpp"
#include "csifb/recon_model.hpp"
#include "csifb/selector_model.hpp"

// Experiment harnesses behind the four figure sweeps. Each run_* writes its
// CSV set plus a JSON manifest into out_dir and returns the aggregate
// numbers, so callers (CLI, acceptance gate) never reparse their own files.

namespace csifb {

// Desk-scale budget: qualitative orderings of the full-scale study at a
// fraction of the samples and epochs.
struct DeskPreset {
    int train_count = 8192;
    int val_count = 512;
    int epochs = 40;
    int batch = 64;
    double lr = 1e-3;  // tuned for the short schedule; full scale uses 3e-6
    double snr_db = 5.0;
    std::uint64_t seed = 1;
    int oversampling = 4;
};

// FNV-1a over the canonical config rendering, as 16 hex digits.
std::string config_hash(const SystemConfig& config);

struct RunManifest {
    std::string experiment;
    SystemConfig config;
    std::uint64_t seed = 0;
    std::vector<std::string> outputs;  // paths relative to the manifest
};

// Writes <out_dir>/<experiment>_manifest.json: config snapshot, seed, hash,
// output names, and a UTC timestamp.
void write_manifest(const RunManifest& m, const std::string& out_dir);

// ------------------------------------------------------------ checkpoints ----

// Model checkpoints carry a few meta.* tensors (padding, shortcut weight,
// config hash) so a file is enough to rebuild the right architecture and
// trace its provenance.
void save_selector(const std::string& path, SelectorModel& model,
                   const SystemConfig& config);
SelectorModel load_selector(const std::string& path, const SystemConfig& config);

void save_recon(const std::string& path, ReconModel& model,
                const SystemConfig& config);
ReconModel load_recon(const std::string& path, const SystemConfig& config);

// Per-epoch history CSVs (also used by the CLI train command). Rows carry
// the seed and config hash so every output references its manifest.
void write_selector_history(const std::string& path,
                            const std::vector<SelectorEpoch>& history,
                            std::uint64_t seed, const std::string& hash);
void write_recon_history(const std::string& path,
                         const std::vector<ReconEpoch>& history, std::uint64_t seed,
                         const std::string& hash);

// ------------------------------------------------------------------- fig2 ----

// Selector convergence: one training per (padding, loss) combination on the
// shared dataset, against the noisy-uplink baseline and the noiseless
// upper bound.
struct Fig2Combo {
    Padding padding = Padding::Circular;
    bool focal = true;
};

std::string combo_name(const Fig2Combo& combo);

struct Fig2Curve {
    std::string name;
    std::vector<SelectorEpoch> history;
    double final_val_pn = 0.0;
    double seconds = 0.0;  // wall-clock training time
};

struct Fig2Result {
    std::vector<Fig2Curve> curves;
    double baseline_val_pn = 0.0;
    double bound_val_pn = 0.0;
    double seconds = 0.0;
};

// Trains each combo with identical data and seed, saves
// selector_<name>.ckpt per combo, writes fig2.csv.
Fig2Result run_fig2(const std::vector<ChannelSample>& train,
                    const std::vector<ChannelSample>& val, const SystemConfig& config,
                    const DeskPreset& preset, const std::vector<Fig2Combo>& combos,
                    const std::string& out_dir);

// ------------------------------------------------------------------- fig3 ----

// Sum rate versus uplink SNR for three port-selection sources feeding the
// same quantized feedback pipeline.
struct Fig3Row {
    double snr_db = 0.0;
    double r_baseline = 0.0;  // top-P on the noisy uplink
    double r_dl = 0.0;        // trained selector on the noisy uplink
    double r_bound = 0.0;     // top-P on the clean uplink
    int drops = 0;
    int skipped = 0;
};

struct Fig3Result {
    std::vector<Fig3Row> rows;
    double seconds = 0.0;
};

Fig3Result run_fig3(SelectorModel& selector, const SystemConfig& config,
                    const std::vector<double>& snr_grid_db, int drops,
                    std::uint64_t seed, int oversampling, const std::string& out_dir);

// ------------------------------------------------------------------- fig4 ----

// Reconstructor convergence for each shortcut weight, identical data, seed
// and budget per run.
struct Fig4Curve {
    double w = 0.0;
    std::vector<ReconEpoch> history;
    double final_val_mse = 0.0;
    double baseline_val_mse = 0.0;
    double seconds = 0.0;
};

struct Fig4Result {
    std::vector<Fig4Curve> curves;
    double seconds = 0.0;
};

Fig4Result run_fig4(const std::vector<ReconSample>& train,
                    const std::vector<ReconSample>& val, const SystemConfig& config,
                    const DeskPreset& preset, const std::vector<double>& w_list,
                    const std::string& out_dir);

// ------------------------------------------------------------------- fig5 ----

// Sum rate versus selected port count for the plain codebook reconstruction
// and the model-refined one, oracle port selection on the clean uplink.
struct Fig5Row {
    int p_ports = 0;
    double r_typeii = 0.0;
    double r_dl = 0.0;
    int drops = 0;
    int skipped = 0;
};

struct Fig5Result {
    std::vector<Fig5Row> rows;
    double seconds = 0.0;
};

Fig5Result run_fig5(ReconModel& recon, const SystemConfig& config,
                    const std::vector<int>& p_list, int drops, std::uint64_t seed,
                    double snr_db, int oversampling, const std::string& out_dir);

// ------------------------------------------------------- recon training ----

// Criterion harness shared by the CLI and the acceptance gate: trains the
// reconstructor on quantized pairs, saves recon.ckpt and history CSV.
struct ReconRunResult {
    ReconTrainResult train;
    double seconds = 0.0;
};

ReconRunResult run_recon_training(const std::vector<ReconSample>& train,
                                  const std::vector<ReconSample>& val,
                                  const SystemConfig& config, const ReconHyper& hyper,
                                  const std::string& out_dir);

// Builds reconstruction pairs from channel samples (oracle selection on the
// clean uplink, quantizer active).
std::vector<ReconSample> build_recon_dataset(const std::vector<ChannelSample>& samples,
                                             const SystemConfig& config,
                                             int oversampling = 4);

}  // namespace csifb
