"""
Desk-scale float model generator.

Stands in for a trained entropy model: small random convolutions whose
biases place the predicted mixture in a realistic regime (weights near 1,
means near 0, scales of a few units).
"""

import logging

import numpy as np

from src.engine.graph import LayerGraph
from src.engine.layers import LayerSpec

logger = logging.getLogger(__name__)


def _conv(rng, name, kind, in_ch, out_ch, kernel, activation="identity", leaky_slope=0.0,
          gain=0.5, bias=None):
    fan_in = in_ch * kernel * kernel
    weight = rng.normal(0.0, gain / np.sqrt(fan_in), size=(out_ch, in_ch, kernel, kernel))
    if bias is None:
        bias = rng.normal(0.0, 0.1, size=out_ch)
    return LayerSpec(
        name=name,
        kind=kind,
        in_channels=in_ch,
        out_channels=out_ch,
        kernel_size=(kernel, kernel),
        weight=weight.astype(np.float32),
        bias=np.asarray(bias, dtype=np.float32),
        padding=kernel // 2,
        activation=activation,
        leaky_slope=leaky_slope,
    )


def random_float_model(
    seed: int = 0,
    y_channels: int = 4,
    z_channels: int = 4,
    hidden: int = 8,
    num_components: int = 2,
    height: int = 8,
    width: int = 8,
) -> LayerGraph:
    """
    Build the toy float entropy model.

    Args:
        seed: Seed for np.random.default_rng
        y_channels: Latent channels C_y
        z_channels: Hyper latent channels C_z
        hidden: Width of every hidden layer
        num_components: Mixture components K
        height: Latent height
        width: Latent width

    Returns:
        Unquantized LayerGraph
    """
    rng = np.random.default_rng(seed)
    k, c = num_components, y_channels

    hyper = (
        _conv(rng, "hyper.0", "conv2d", z_channels, hidden, 3, "leaky_relu", 0.2),
        _conv(rng, "hyper.1", "conv2d", hidden, hidden, 3, "relu"),
    )
    context = (
        _conv(rng, "context.0", "masked_conv2d", y_channels, hidden, 5),
    )

    # output channel layout [pi | mu | sigma], channel c*K + k in each block
    final_bias = np.concatenate([
        rng.uniform(0.75, 1.25, size=c * k),
        rng.normal(0.0, 0.25, size=c * k),
        rng.uniform(1.0, 4.0, size=c * k),
    ])
    param_net = (
        _conv(rng, "param.0", "conv1x1", 2 * hidden, hidden, 1, "leaky_relu", 0.2),
        _conv(rng, "param.1", "conv1x1", hidden, 3 * k * c, 1, gain=0.2, bias=final_bias),
    )

    model = LayerGraph(
        hyper_synthesis=hyper,
        context=context,
        param_net=param_net,
        num_components=k,
        z_channels=z_channels,
        y_channels=y_channels,
        height=height,
        width=width,
        hyper_sigma_indices=tuple(int(i) for i in rng.integers(16, 40, size=z_channels)),
        metadata={"generator": "random_float_model", "seed": str(seed)},
    )
    logger.info(f"Built toy float model: K={k}, C_y={c}, C_z={z_channels}, {height}x{width}")
    return model
