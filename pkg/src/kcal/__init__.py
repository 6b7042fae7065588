"""kcal: post-hoc multi-class calibration via KDE on projected embeddings."""

import os as _os

# Cap numeric-library worker threads before numpy loads anywhere.
_requested = _os.environ.get("KCAL_THREADS")
if _requested:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        _os.environ.setdefault(_var, _requested)

__version__ = "0.1.0"

from .bandwidth import (  # noqa: E402
    BandwidthLaw,
    BandwidthSearchConfig,
    analytic_bandwidth,
    fit_bandwidth_constant,
    golden_section_minimize,
    tune_bandwidth,
)
from .baseline_ts import (  # noqa: E402
    TemperatureModel,
    apply_temperature,
    fit_temperature,
    softmax,
)
from .dataio import (  # noqa: E402
    ClassPartition,
    EmbeddingDataset,
    class_partition,
    read_csv_dataset,
    read_embedding_file,
    read_label_file,
    split_dataset,
    write_embedding_file,
    write_label_file,
)
from .errors import (  # noqa: E402
    FormatError,
    KcalError,
    NumericalError,
    SizeMismatchError,
    ValidationError,
)
from .kde import KdeModel, kde_predict, kde_predict_weighted, load_model, save_model  # noqa: E402
from .kernel import KernelFamily, KernelSpec, log_kernel_weights, pairwise_sq_dist  # noqa: E402
from .metrics import (  # noqa: E402
    BinningKind,
    BinningScheme,
    ReliabilityData,
    accuracy,
    brier_multi,
    brier_top,
    cece,
    ece,
    nll,
    reliability_data,
    validate_prob_matrix,
)
from .projection import (  # noqa: E402
    Arch,
    ProjectionParams,
    freeze_normalization,
    init_projection,
    load_projection,
    project_backward,
    project_forward,
    save_projection,
)
from .synth import (  # noqa: E402
    GmmOracle,
    full_calibration_error,
    generate_gmm,
    oracle_posterior,
)
from .trainer import (  # noqa: E402
    TrainConfig,
    TrainReport,
    compute_batch_loss_and_grads,
    sample_batch,
    train_projection,
)
