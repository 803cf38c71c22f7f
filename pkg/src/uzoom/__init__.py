"""uzoom: gigapixel zoomable imagery from a full-view photo plus close-ups.

Pipeline: register the close-ups into the full view through bridging videos
(chained similarity transforms), build a degradation-aligned patch dataset,
enhance the full view window by window, and export a Deep Zoom pyramid.
"""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    Footprint,
    SimilarityTransform2D,
    chain,
    compose,
    extract_scale,
    invert,
    map_footprint,
    ransac_similarity,
    similarity_from_pairs,
)
