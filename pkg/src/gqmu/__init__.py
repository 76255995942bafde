"""Underdetermined multispectral unmixing toolkit.

Lifts a few-band observed image into a virtual many-band domain by
prism-style band splitting, then recovers endmembers and abundances with
an alternating NMF/ADMM solver regularized by simplex geometry and a
pluggable abundance prior (quantum-circuit image prior or a classical
fallback), plus a synthesis-and-metrics evaluation harness.
"""

from .augment import (
    BspResult,
    Denoiser,
    augment,
    bsp_split,
    build_srf,
    determine_tau,
    gaussian_denoiser,
    identity_denoiser,
    make_denoiser,
    refine_virtual_hsi,
)
from .errors import (
    ConfigError,
    ContractError,
    DegenerateDataError,
    FormatError,
    GqmuError,
    InputError,
    MetricError,
    ProtocolError,
    SolverError,
    TrainingDiverged,
)
from .geometry import (
    WssContext,
    mv_grad,
    mv_value,
    simplex_center,
    sparsity_weights,
    wss_grad,
    wss_value,
)
from .protocol import (
    GroundTruth,
    SynthConfig,
    gen_synthetic,
    match_permutation,
    metrics_report,
    naive_baseline,
    phi_ab,
    phi_en,
    rmse,
    run_protocol,
    spectral_downsample,
    synthesize_msi,
)
from .qdip import QdipConfig, QdipModel, ls_prior, qdip_forward, qdip_init, qdip_train
from .solver import (
    SolverConfig,
    UnmixResult,
    admm_solve,
    admm_update_s,
    gqmu_core,
    gqmu_run,
    init_endmembers,
    nnls_abundances,
    spa_init,
    update_a,
)
from .tensor import (
    fold3,
    kron,
    mode3_matricize,
    mode3_mul,
    project_nonneg,
    soft_threshold,
    solve_spd,
)

__version__ = "0.1.0"
