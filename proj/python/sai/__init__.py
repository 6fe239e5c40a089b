"""Synthetic-aperture integral imaging: rendering, masking, autofocus and a
two-plane occlusion simulator."""

from ._core import (
    CaptureSession,
    FocalSurfaceParams,
    IntegralImage,
    Intrinsics,
    LoadedSession,
    MaskConfig,
    MaskSource,
    SaiError,
    alpha_from_mask,
    autofocus_depth,
    blur_footprint,
    build_alpha_masks,
    compute_vdvi,
    decode_frame,
    encode_frame,
    export_image,
    focus_metric,
    intersect_surface,
    load_session,
    pixel_ray,
    project_point,
    render_integral,
    render_pinhole,
    save_session,
    sim,
)

__all__ = [name for name in dir() if not name.startswith("_")]
