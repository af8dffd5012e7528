"""Python bindings for the attrscan engine."""

from ._core import (
    AttrscanError,
    affinity,
    annotate,
    attribution_similarity,
    build_project,
    bundle_weighted_vectors,
    convex_hull,
    corrupt,
    cosine_similarity,
    embed,
    find_slices,
    fit_curve_params,
    kmeans_2d,
    mask_distance,
    normalize_mask,
    propagate,
    rcs,
    read_bundle,
    read_tensor,
    slice_coherence,
    spread,
    trustworthiness,
    upsample_mask,
    weighted_vector,
    write_fixture,
    write_tensor,
)

__all__ = [
    "AttrscanError",
    "affinity",
    "annotate",
    "attribution_similarity",
    "build_project",
    "bundle_weighted_vectors",
    "convex_hull",
    "corrupt",
    "cosine_similarity",
    "embed",
    "find_slices",
    "fit_curve_params",
    "kmeans_2d",
    "mask_distance",
    "normalize_mask",
    "propagate",
    "rcs",
    "read_bundle",
    "read_tensor",
    "slice_coherence",
    "spread",
    "trustworthiness",
    "upsample_mask",
    "weighted_vector",
    "write_fixture",
    "write_tensor",
]
