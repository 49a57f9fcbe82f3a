"""Rotation-invariant point-cloud features and classification.

Thin wrapper over the C++ core. Geometry is plain Python sequences of
(x, y, z) triples; the heavy lifting happens in the extension module.
"""

from ._core import (
    Classifier,
    __version__,
    estimate_normals,
    risp_column_names,
    risp_features,
    risp_width,
    rotate,
    synth_dataset,
)

__all__ = [
    "Classifier",
    "__version__",
    "estimate_normals",
    "risp_column_names",
    "risp_features",
    "risp_width",
    "rotate",
    "synth_dataset",
]
