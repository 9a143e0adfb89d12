// SPDX-License-Identifier: Apache-2.0
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "csifb/experiments.hpp"

namespace py = pybind11;
using namespace csifb;

namespace {

Tensor<float> tensor_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    Tensor<float> t;
    t.shape.assign(a.ndim(), 0);
    for (py::ssize_t i = 0; i < a.ndim(); ++i)
        t.shape[static_cast<size_t>(i)] = static_cast<int>(a.shape(i));
    t.v.assign(a.data(), a.data() + a.size());
    return t;
}

py::array_t<float> array_from_tensor(const Tensor<float>& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<float> a(shape);
    std::copy(t.v.begin(), t.v.end(), a.mutable_data());
    return a;
}

// Shared inference helper: rotation search on the given uplink, scores from
// the trunk, top-P decode.
std::pair<std::vector<int>, Rotation> select_with_model(SelectorModel& model,
                                                        const ChannelMatrix& h_ul,
                                                        const SystemConfig& config,
                                                        int oversampling) {
    Rotation rot = best_rotation(h_ul, config, config.p_ports, oversampling);
    AngularBasis wa =
        build_angular_basis(config.n_h, config.n_v, rot.rot_h, rot.rot_v, oversampling);
    DelayBasis wd = build_delay_basis(config.m);
    Tensor<float> input = preprocess<float>(h_ul, wa, wd);
    Tensor<float> scores = model.forward(input, Mode::Eval);
    std::vector<double> sv(scores.v.begin(), scores.v.end());
    return {decode_topP(sv, config.p_ports).ports, rot};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Type-II codebook CSI feedback laboratory core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_IOError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<RankError>(m, "RankError", PyExc_ArithmeticError);

    // ------------------------------------------------------------ config ----
    py::class_<SystemConfig>(m, "SystemConfig")
        .def(py::init<>())
        .def_readwrite("n_h", &SystemConfig::n_h)
        .def_readwrite("n_v", &SystemConfig::n_v)
        .def_readwrite("n_tx", &SystemConfig::n_tx)
        .def_readwrite("m", &SystemConfig::m)
        .def_readwrite("n_s", &SystemConfig::n_s)
        .def_readwrite("k_ues", &SystemConfig::k_ues)
        .def_readwrite("f_c_ul", &SystemConfig::f_c_ul)
        .def_readwrite("f_c_dl", &SystemConfig::f_c_dl)
        .def_readwrite("f_s", &SystemConfig::f_s)
        .def_readwrite("p_tx_dbm", &SystemConfig::p_tx_dbm)
        .def_readwrite("noise_figure_db", &SystemConfig::noise_figure_db)
        .def_readwrite("cell_radius_m", &SystemConfig::cell_radius_m)
        .def_readwrite("p_ports", &SystemConfig::p_ports)
        .def_readwrite("q_w", &SystemConfig::q_w)
        .def_readwrite("q_na", &SystemConfig::q_na)
        .def_readwrite("q_np", &SystemConfig::q_np)
        .def_property_readonly("port_count", &SystemConfig::port_count)
        .def("__repr__", [](const SystemConfig& c) { return to_string(c); });
    m.def("default_config", &default_config);
    m.def("validate", &validate, py::arg("config"));
    m.def("load_config_toml", &load_config_toml, py::arg("path"));
    m.def("config_hash", &config_hash, py::arg("config"));

    // -------------------------------------------------------- transforms ----
    py::class_<Rotation>(m, "Rotation")
        .def(py::init<>())
        .def_readwrite("rot_h", &Rotation::rot_h)
        .def_readwrite("rot_v", &Rotation::rot_v)
        .def("__repr__", [](const Rotation& r) {
            return "Rotation(rot_h=" + std::to_string(r.rot_h) +
                   ", rot_v=" + std::to_string(r.rot_v) + ")";
        });
    py::class_<AngularBasis>(m, "AngularBasis")
        .def_readonly("w_a", &AngularBasis::w_a)
        .def_readonly("rot_h", &AngularBasis::rot_h)
        .def_readonly("rot_v", &AngularBasis::rot_v)
        .def_readonly("oversampling", &AngularBasis::oversampling);
    py::class_<DelayBasis>(m, "DelayBasis").def_readonly("w_d", &DelayBasis::w_d);

    m.def("rotated_dft", &rotated_dft, py::arg("n"), py::arg("rot"),
          py::arg("oversampling"));
    m.def("build_angular_basis", &build_angular_basis, py::arg("n_h"), py::arg("n_v"),
          py::arg("rot_h"), py::arg("rot_v"), py::arg("oversampling") = 4);
    m.def("build_delay_basis", &build_delay_basis, py::arg("m"));
    m.def("to_angular_delay", &to_angular_delay, py::arg("h"), py::arg("wa"),
          py::arg("wd"));
    m.def("from_angular_delay", &from_angular_delay, py::arg("ht"), py::arg("wa"),
          py::arg("wd"));
    m.def("best_rotation", &best_rotation, py::arg("h_ul"), py::arg("config"),
          py::arg("p"), py::arg("oversampling") = 4);
    m.def("top_port_power_fraction", &top_port_power_fraction, py::arg("ht"),
          py::arg("p"));

    // ----------------------------------------------------------- codebook ----
    py::class_<PortSelection>(m, "PortSelection")
        .def(py::init<>())
        .def_readwrite("ports", &PortSelection::ports);
    py::class_<PortCoefficients>(m, "PortCoefficients")
        .def_readonly("c", &PortCoefficients::c)
        .def_readonly("pol", &PortCoefficients::pol);
    py::class_<QuantizerSpec>(m, "QuantizerSpec")
        .def_readonly("q_w", &QuantizerSpec::q_w)
        .def_readonly("q_na", &QuantizerSpec::q_na)
        .def_readonly("q_np", &QuantizerSpec::q_np)
        .def_readonly("wideband", &QuantizerSpec::wideband)
        .def_readonly("narrowband", &QuantizerSpec::narrowband)
        .def_readonly("phases", &QuantizerSpec::phases);
    py::class_<QuantizedFeedback>(m, "QuantizedFeedback")
        .def_readonly("strong_pol", &QuantizedFeedback::strong_pol)
        .def_readonly("wb_index", &QuantizedFeedback::wb_index)
        .def_readonly("na_index", &QuantizedFeedback::na_index)
        .def_readonly("np_index", &QuantizedFeedback::np_index)
        .def_readonly("reference_pos", &QuantizedFeedback::reference_pos);

    m.def("make_quantizer_spec",
          py::overload_cast<const SystemConfig&>(&make_quantizer_spec),
          py::arg("config"));
    m.def("select_ports_topP", &select_ports_topP, py::arg("ht"), py::arg("p"));
    m.def("measure_coefficients", &measure_coefficients, py::arg("h_dl"),
          py::arg("sel"), py::arg("wa"), py::arg("wd"));
    m.def("quantize", &quantize, py::arg("coefficients"), py::arg("spec"));
    m.def("dequantize", &dequantize, py::arg("feedback"), py::arg("spec"));
    m.def("reconstruct", &reconstruct, py::arg("feedback"), py::arg("sel"),
          py::arg("wa"), py::arg("wd"), py::arg("spec"));
    m.def("payload_bits", &payload_bits, py::arg("p"), py::arg("spec"));
    m.def(
        "pack_feedback",
        [](const QuantizedFeedback& fb, const QuantizerSpec& spec) {
            auto bytes = pack_feedback(fb, spec);
            return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        },
        py::arg("feedback"), py::arg("spec"));
    m.def(
        "unpack_feedback",
        [](const py::bytes& b, const PortSelection& sel, const SystemConfig& config,
           const QuantizerSpec& spec) {
            std::string s = b;
            std::vector<std::uint8_t> bytes(s.begin(), s.end());
            return unpack_feedback(bytes, sel, config, spec);
        },
        py::arg("data"), py::arg("sel"), py::arg("config"), py::arg("spec"));

    // ------------------------------------------------------------ channel ----
    py::class_<ChannelSample>(m, "ChannelSample")
        .def_readonly("h_ul_noisy", &ChannelSample::h_ul_noisy)
        .def_readonly("h_ul_clean", &ChannelSample::h_ul_clean)
        .def_readonly("h_dl_clean", &ChannelSample::h_dl_clean)
        .def_readonly("snr_db", &ChannelSample::snr_db)
        .def_readonly("seed", &ChannelSample::seed);
    m.def("generate_dataset", &generate_dataset, py::arg("config"), py::arg("count"),
          py::arg("snr_db"), py::arg("master_seed"), py::arg("n_clusters") = 3,
          py::arg("rays_per_cluster") = 1);
    m.def("save_dataset", &save_dataset, py::arg("path"), py::arg("samples"),
          py::arg("config"));
    m.def("load_dataset", &load_dataset, py::arg("path"), py::arg("config"));

    // --------------------------------------------------------------- eval ----
    py::class_<SumRateConfig>(m, "SumRateConfig")
        .def(py::init<>())
        .def_readwrite("p_tx_dbm", &SumRateConfig::p_tx_dbm)
        .def_readwrite("noise_figure_db", &SumRateConfig::noise_figure_db)
        .def_readwrite("thermal_dbm_hz", &SumRateConfig::thermal_dbm_hz)
        .def_readwrite("bandwidth_hz", &SumRateConfig::bandwidth_hz)
        .def_readwrite("k_ues", &SumRateConfig::k_ues)
        .def_readwrite("pathloss_exponent", &SumRateConfig::pathloss_exponent)
        .def_readwrite("ref_loss_db", &SumRateConfig::ref_loss_db)
        .def_readwrite("cell_radius_m", &SumRateConfig::cell_radius_m)
        .def_readwrite("min_distance_m", &SumRateConfig::min_distance_m);
    m.def("make_sum_rate_config", &make_sum_rate_config, py::arg("config"));
    m.def("normalized_power", &normalized_power, py::arg("ht_dl"), py::arg("sel"));
    m.def("zf_precoder", &zf_precoder, py::arg("h_hat_subband"));
    m.def("pathloss_amplitude", &pathloss_amplitude, py::arg("distance_m"),
          py::arg("cfg"));
    m.def("sum_rate", &sum_rate, py::arg("h_true"), py::arg("h_recon"),
          py::arg("ue_gain"), py::arg("cfg"));

    // -------------------------------------------------------------- models ----
    py::class_<SelectorModel>(m, "Selector")
        .def(
            "scores",
            [](SelectorModel& model, const py::array_t<float>& x) {
                Tensor<float> t = tensor_from_array(x);
                return array_from_tensor(model.forward(t, Mode::Eval));
            },
            py::arg("x"), "Per-port scores for a (n, 2, n_tx, m) float32 batch")
        .def(
            "select_ports",
            [](SelectorModel& model, const ChannelMatrix& h_ul,
               const SystemConfig& config, int oversampling) {
                auto [ports, rot] = select_with_model(model, h_ul, config, oversampling);
                return py::make_tuple(ports, rot);
            },
            py::arg("h_ul"), py::arg("config"), py::arg("oversampling") = 4,
            "Rotation search plus top-P decode on an uplink channel matrix");
    m.def("load_selector", &load_selector, py::arg("path"), py::arg("config"));

    py::class_<ReconModel>(m, "Recon")
        .def_property_readonly("w", [](const ReconModel& r) { return r.w; })
        .def(
            "refine",
            [](ReconModel& model, const Eigen::MatrixXcd& x) {
                Tensor<float> input = split_re_im<float>(x);
                Tensor<float> out = model.forward(input, Mode::Eval);
                return merge_re_im(out, 0);
            },
            py::arg("x"),
            "Refine one codebook-reconstructed angular-delay CSI matrix");
    m.def("load_recon", &load_recon, py::arg("path"), py::arg("config"));
}
