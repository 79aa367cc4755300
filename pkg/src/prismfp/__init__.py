"""Frequency-domain fingerprinting and attribution of generated images.

The attribution pipeline composes a radial DFT feature extractor with a
linear discriminant classifier::

    >>> from prismfp import make_attribution_pipeline
    >>> pipe = make_attribution_pipeline(n_r=64)   # doctest: +SKIP
    >>> pipe.fit(images, labels).predict(new_images)   # doctest: +SKIP
"""

from sklearn.pipeline import Pipeline

from .evaluation import (
    MetricsReport,
    ResamplingSummary,
    SplitSpec,
    binarize,
    compute_metrics,
    make_splits,
    run_ablation,
    run_protocol,
)
from .io import FeatureTable, ManifestEntry, RgbImage, decode_image, read_features, read_manifest, write_features
from .lda import LdaAttributor
from .radial import RadialSpectrumFeatures, extract_features, make_binning, radial_reduce
from .spectrum import centralize, dft2, to_planes

__version__ = "0.1.0"


def make_attribution_pipeline(n_r=64, reg=None, subset="all", normalization="zscore", n_jobs=1):
    """Images in, source labels out: radial features followed by LDA."""
    return Pipeline([
        ("features", RadialSpectrumFeatures(n_r=n_r, n_jobs=n_jobs)),
        ("lda", LdaAttributor(reg=reg, subset=subset, n_r=n_r, normalization=normalization)),
    ])


__all__ = [
    "FeatureTable",
    "LdaAttributor",
    "ManifestEntry",
    "MetricsReport",
    "RadialSpectrumFeatures",
    "ResamplingSummary",
    "RgbImage",
    "SplitSpec",
    "binarize",
    "centralize",
    "compute_metrics",
    "decode_image",
    "dft2",
    "extract_features",
    "make_attribution_pipeline",
    "make_binning",
    "make_splits",
    "radial_reduce",
    "read_features",
    "read_manifest",
    "run_ablation",
    "run_protocol",
    "to_planes",
    "write_features",
]
