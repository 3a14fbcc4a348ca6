"""Structured sequence-mixing toolkit.

Semiseparable matrix algebra, interchangeable scalar-scan algorithms,
selective state-space layers, structured masked attention, the chunked
state-space dual layer, and a forward-only gated block with simulated
tensor/sequence parallelism. Everything runs on numpy with exact operation
counting so asymptotic claims are testable.
"""

from .tensor import (
    ConfigurationError,
    DimensionError,
    OpCounter,
    Tensor,
    SUPPORTED_DESCRIPTORS,
    contract,
    max_rel_err,
    numerical_rank,
)
from .scan import (
    Sequential,
    AssociativeScan,
    Dilated,
    StatePassing,
    BlockDecomposition,
    ScanState,
    associative_combine,
    associative_scan_factors,
    cumprodsum,
    dilated_factors,
    scan_work,
)
from .semiseparable import (
    ArOrderCertificate,
    BandedLower,
    OneSSCoeffs,
    SSSRep,
    SingularMatrixError,
    ar_to_ssm,
    block_lowrank_factors,
    closure_check,
    lower_rank_profile,
    materialize_1ss,
    materialize_sss,
)
from .ssm import (
    scalar_identity_quadratic,
    ssm_diagonal_contraction,
    ssm_matrix_mode,
    ssm_recurrent,
)
from .sma import (
    Causal,
    CosFormer,
    Decay,
    DegenerateRowError,
    Elu1p,
    Exp,
    Identity,
    OneSS,
    PositiveRandomFeatures,
    RandomFourier,
    ReLU,
    Swish,
    Taylor,
    Toeplitz,
    attention_linear,
    attention_quadratic,
    feature_map_apply,
    kernel_approx_error,
    mask_materialize,
    normalized_attention,
)
from .ssd import (
    MCS,
    MES,
    MHS,
    MIS,
    ChunkPlan,
    Grouped,
    SSDInputs,
    expand_heads,
    head_group_map,
    ssd_blocked,
    ssd_cost,
    ssd_quadratic,
    ssd_recurrent,
)
from .architecture import (
    BlockWeights,
    Communicator,
    MessageChannel,
    ShardPlan,
    init_block_weights,
    load_arrays,
    load_weights,
    make_shard_plan,
    mamba2_block_forward,
    save_arrays,
    save_weights,
    sp_forward,
    tp_forward,
    varlen_forward,
)
from .bench import (
    BenchConfig,
    Report,
    REPORT_SCHEMA,
    fit_exponent,
    run_bench,
    run_table,
    run_verify,
)

__version__ = "0.1.0"
