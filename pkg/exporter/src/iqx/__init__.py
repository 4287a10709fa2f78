"""iqx — offline CNN feature and quality-score exporter.

Runs torchvision backbones (VGG-16, AlexNet, SqueezeNet 1.1 activation
stacks; Inception v3 pooled patch features and class probabilities; a
regression-headed ResNet-18 blind quality predictor) over a corpus
manifest and writes the binary embedding containers and score CSVs the
image-quality toolkit consumes.  The two packages share nothing but
file formats.
"""
from .errors import (
    ExporterError,
    InferenceError,
    JobError,
    ManifestError,
    RasterError,
    WeightsError,
)
from .export import (
    export_activations,
    export_inception,
    export_paq2piq,
    run_export,
)
from .iqae import TensorRecord, write_iqae
from .jobs import EXTRACTORS, SOURCES, ExportJob, job_for_directory
from .manifest import CorpusImage, read_manifest
from .networks import (
    BACKBONES,
    FeatureExtractor,
    InceptionRunner,
    QualityRunner,
    available_layers,
    weights_fingerprint,
)
from .rasters import Raster, load_raster, to_unit_interval

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
