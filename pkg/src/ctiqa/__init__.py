"""Image-quality assessment toolkit for CT denoising studies.

Paired metrics compare a denoised slice against its reference; unpaired
metrics judge the denoised output alone (or against a reference corpus
distribution).  On top of the metric kernels the package ships corpus
scoring, correlation matrices between paired and unpaired scores,
decision-tree feature importances with cross-validated error, an SVG
ring chart, a timing harness, and a CLI that ties those together.
"""

__version__ = "0.1.0"

from .errors import (
    DegenerateInputError,
    DomainError,
    FileFormatError,
    InsufficientDataError,
    ShapeError,
    ToolkitError,
)
from .image import (
    Domain,
    ImageGrid,
    PatchSet,
    WindowSpec,
    extract_patches,
    image_from_values,
    load_csv_image,
    load_image,
    preprocess,
    resize_bilinear,
    save_image,
    window_normalize,
)
from .paired import (
    ActivationLayer,
    ActivationStack,
    SsimParams,
    lpips,
    mse,
    psnr,
    ssim,
    vif,
)
from .nss import (
    AggdFit,
    GgdFit,
    brisque_features,
    fit_aggd,
    fit_ggd,
    mscn,
    niqe_patch_features,
)
from .unpaired import (
    GaussianStats,
    MvgModel,
    ProbMatrix,
    RapsCurve,
    SvrModel,
    brisque_score,
    corner_air_mask,
    derive_tissue_mask,
    discrete_frechet,
    fid,
    fit_niqe_model,
    frechet_curve_distance,
    gaussian_stats,
    inception_score,
    kid,
    load_mvg_model,
    load_svr_model,
    mvg_distance,
    niqe_score,
    raps,
    raps_fd,
    raps_profile,
    read_external_scores,
    save_mvg_model,
    save_svr_model,
    snr,
)
from .embedding_io import (
    EmbeddingFile,
    EmbeddingRecord,
    load_activation_stacks,
    read_embeddings,
    write_embeddings,
)
from .correlation import (
    CorrelationMatrix,
    GroupAverageTable,
    MetricClass,
    MetricInfo,
    MetricTable,
    classify_strength,
    correlation_matrix,
    group_average,
    is_paired_metric,
    load_table,
    metric_class_of,
    pair_correlations,
    plcc,
    srocc,
)
from .regression import (
    ImportanceReport,
    RegressionTree,
    TreeParams,
    cross_validated_importance,
    feature_importance,
    fit_tree,
    predict,
    predict_many,
)
from .piechart import render_importance_chart
from .config import Config, config_from_dict, load_config, override
from .manifest import CorpusManifest, ManifestEntry, load_manifest
from .scoring import (
    METRIC_ORDER,
    PAIRED_METRICS,
    UNPAIRED_METRICS,
    ScoreEngine,
    select_metrics,
)
from .bench import TimingReport, TimingRow, run_benchmark

__all__ = [name for name in dir() if not name.startswith("_")]
