# SPDX-License-Identifier: Apache-2.0
"""Type-II codebook CSI feedback laboratory.

Thin Python surface over the C++ core: channel generation, the
angular-delay transform, port selection, two-stage quantization, CSI
reconstruction, the sum-rate metric, and trained-model inference.
"""

from csifb._core import (
    AngularBasis,
    ChannelSample,
    ConfigError,
    DataError,
    DelayBasis,
    PortCoefficients,
    PortSelection,
    QuantizedFeedback,
    QuantizerSpec,
    RankError,
    Recon,
    Rotation,
    Selector,
    ShapeError,
    SumRateConfig,
    SystemConfig,
    best_rotation,
    build_angular_basis,
    build_delay_basis,
    config_hash,
    default_config,
    dequantize,
    from_angular_delay,
    generate_dataset,
    load_config_toml,
    load_dataset,
    load_recon,
    load_selector,
    make_quantizer_spec,
    make_sum_rate_config,
    measure_coefficients,
    normalized_power,
    pack_feedback,
    pathloss_amplitude,
    payload_bits,
    quantize,
    reconstruct,
    rotated_dft,
    save_dataset,
    select_ports_topP,
    sum_rate,
    to_angular_delay,
    top_port_power_fraction,
    unpack_feedback,
    validate,
    zf_precoder,
)

__all__ = [
    "AngularBasis",
    "ChannelSample",
    "ConfigError",
    "DataError",
    "DelayBasis",
    "PortCoefficients",
    "PortSelection",
    "QuantizedFeedback",
    "QuantizerSpec",
    "RankError",
    "Recon",
    "Rotation",
    "Selector",
    "ShapeError",
    "SumRateConfig",
    "SystemConfig",
    "best_rotation",
    "build_angular_basis",
    "build_delay_basis",
    "config_hash",
    "default_config",
    "dequantize",
    "from_angular_delay",
    "generate_dataset",
    "load_config_toml",
    "load_dataset",
    "load_recon",
    "load_selector",
    "make_quantizer_spec",
    "make_sum_rate_config",
    "measure_coefficients",
    "normalized_power",
    "pack_feedback",
    "pathloss_amplitude",
    "payload_bits",
    "quantize",
    "reconstruct",
    "rotated_dft",
    "save_dataset",
    "select_ports_topP",
    "sum_rate",
    "to_angular_delay",
    "top_port_power_fraction",
    "unpack_feedback",
    "validate",
    "zf_precoder",
]
