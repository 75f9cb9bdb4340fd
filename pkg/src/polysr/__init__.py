"""Online video super-resolution with multirate inverse filterbanks.

Modules:

* :mod:`polysr.imaging` -- blur, decimation, warping and their adjoints.
* :mod:`polysr.motion` -- phase-correlation shifts and Horn-Schunck flow.
* :mod:`polysr.polyphase` -- polyphase algebra and the system transfer matrix.
* :mod:`polysr.design` -- least-squares FIR inverse design and its file cache.
* :mod:`polysr.wavelet` -- Daubechies transforms, thresholding, cycle spinning.
* :mod:`polysr.engine` -- the per-frame reconstruction loops.
* :mod:`polysr.harness` -- synthetic data, metrics, frame I/O, experiments, CLI.
"""

from .design import (
    DesignError,
    DesignSpec,
    InverseFilterbankCache,
    StaleCacheError,
    build_cache,
    cache_load,
    cache_store,
    design_inverse,
    validate_inverse,
)
from .engine import SrrParams, SrrState, new_state, run_sequence, step
from .imaging import (
    PERIODIC,
    SYMMETRIC,
    BoundaryRule,
    DecimationSpec,
    DenseFlow,
    DimensionError,
    GlobalShift,
    Kernel2D,
    laplacian,
    uniform_blur,
)
from .polyphase import PolyphaseMatrix, apply_polyphase, build_system_transfer
from .wavelet import WaveletMode, WaveletPlan, project_omega2

__version__ = "0.1.0"
