"""Bandlimited harmonic analysis on the sphere and the rotation group,
exactly equivariant spectral convolution layers, a small trainable layer
stack with hand-rolled reverse-mode gradients, a random architecture
sampler, a synthetic spherical segmentation data pipeline, and a CLI
(python -m artifact)."""

from . import datagen, grids, harmonics, network, ops, profiler, transforms, verify
from .grids import (
    beta_quadrature_weights,
    euler_to_matrix,
    make_kernel_support_grid,
    make_s2_grid,
    make_so3_grid,
    matrix_to_euler,
    random_rotation,
)
from .network import (
    LayerSpec,
    ModelSpec,
    adam_init,
    adam_step,
    backward,
    count_parameters,
    forward,
    init_params,
    kernel_weights_to_spectrum,
    load_model,
    sample_equivariant_architecture,
    save_model,
    softmax_xent_loss,
    validate_model_spec,
)
from .ops import (
    conv_s2_to_so3,
    conv_so3,
    h_orbit_spectrum,
    invariant_readout,
    rotate_s2_spectrum,
    rotate_so3_spectrum,
    so3_to_s2_spectrum,
)
from .transforms import (
    s2_analyze,
    s2_mode_count,
    s2_synthesize,
    so3_analyze,
    so3_mode_count,
    so3_synthesize,
)

__version__ = "0.1.0"
