"""Spectral-residual saliency maps and top-ratio pixel selection.

A frame's saliency is the reconstruction of what its log-amplitude spectrum
cannot explain: the residual between the log amplitude and its local
average, recombined with the original phase. Unexpected structure
(foreground, edges) survives; repetitive background is suppressed. Pixel
selection keeps exactly the requested fraction of the highest scores per
frame, which is what makes the area ratio controllable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .tensors import BinaryMask, VideoTensor

__all__ = ["SaliencyMap", "spectral_residual", "select_salient", "spatial_mask"]

# Working resolution and filter defaults of the classic spectral-residual
# pipeline; fixed rather than configurable so identical frames always yield
# identical masks. Amplitudes are taken on unit-scaled pixels with a unit
# floor in the log: exact spectrum zeros (common in synthetic frames) would
# otherwise turn into deep residual spikes that drown the real structure.
INTERNAL_SIZE = 64
BOX_FILTER = 3
SMOOTH_SIGMA = 2.5
PIXEL_SCALE = 255.0


@dataclass(frozen=True)
class SaliencyMap:
    """Non-negative per-frame saliency scores; ``degenerate`` marks a
    structureless (constant) frame whose map is uniform by convention."""

    values: np.ndarray
    degenerate: bool = False


def _resize_bilinear(img: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resample with the pixel-center (half-pixel offset) convention."""
    in_w, in_h = img.shape
    out_w, out_h = out_shape
    if (in_w, in_h) == (out_w, out_h):
        return img.copy()

    def axis_coords(n_in, n_out):
        coords = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        coords = np.clip(coords, 0.0, n_in - 1.0)
        lower = np.floor(coords).astype(np.intp)
        upper = np.minimum(lower + 1, n_in - 1)
        frac = coords - lower
        return lower, upper, frac

    w_lo, w_hi, w_frac = axis_coords(in_w, out_w)
    h_lo, h_hi, h_frac = axis_coords(in_h, out_h)
    top = img[np.ix_(w_lo, h_lo)] * (1 - h_frac) + img[np.ix_(w_lo, h_hi)] * h_frac
    bottom = img[np.ix_(w_hi, h_lo)] * (1 - h_frac) + img[np.ix_(w_hi, h_hi)] * h_frac
    return top * (1 - w_frac[:, None]) + bottom * w_frac[:, None]


def spectral_residual(frame: np.ndarray) -> SaliencyMap:
    """Saliency map of one (width, height, channels) pixel block.

    Pipeline: grayscale by channel mean on unit scale, resample so the longer
    side is 64, 2-D DFT, residual of the log amplitude against its 3x3 box
    average, reconstruction with the original phase, squared magnitude,
    Gaussian smoothing (sigma 2.5) and resampling back to the frame's
    resolution.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3:
        raise ValueError(f"frame must be (width, height, channels), got shape {frame.shape}")
    w, h, _ = frame.shape
    if w < 8 or h < 8:
        raise ValueError(f"frame too small for saliency detection: {w}x{h}")

    gray = frame.mean(axis=2) / PIXEL_SCALE
    if gray.max() == gray.min():
        return SaliencyMap(np.ones((w, h)), degenerate=True)

    scale = INTERNAL_SIZE / max(w, h)
    small_shape = (max(1, round(w * scale)), max(1, round(h * scale)))
    small = _resize_bilinear(gray, small_shape)

    spectrum = np.fft.fft2(small)
    log_amplitude = np.log1p(np.abs(spectrum))
    phase = np.angle(spectrum)
    residual = log_amplitude - ndimage.uniform_filter(log_amplitude, size=BOX_FILTER, mode="nearest")
    reconstructed = np.fft.ifft2(np.exp(residual + 1j * phase))
    energy = np.abs(reconstructed) ** 2
    smoothed = ndimage.gaussian_filter(energy, sigma=SMOOTH_SIGMA)
    values = np.maximum(_resize_bilinear(smoothed, (w, h)), 0.0)
    return SaliencyMap(values)


def select_salient(saliency: SaliencyMap, ratio: float) -> np.ndarray:
    """Binary (width, height) matrix keeping the top ``ceil(ratio * W * H)`` scores.

    Ties break in row-major index order, so identical maps always select the
    same set.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"salient ratio must be in (0, 1], got {ratio}")
    values = saliency.values
    w, h = values.shape
    k = math.ceil(ratio * w * h)
    order = np.argsort(-values.ravel(), kind="stable")
    selected = np.zeros(w * h, dtype=np.float64)
    selected[order[:k]] = 1.0
    return selected.reshape(w, h)


def spatial_mask(x: VideoTensor, ratio: float) -> BinaryMask:
    """Per-frame saliency selection expanded to a full video mask.

    A selected pixel turns on every channel at its (w, h) position, so the
    mask is channel coherent. Every frame keeps exactly ``ceil(ratio*W*H)``
    pixels.
    """
    t, w, h, c = x.dims
    mask = np.empty((t, w, h, c), dtype=np.float64)
    for frame_index in range(t):
        plane = select_salient(spectral_residual(x.data[frame_index]), ratio)
        mask[frame_index] = plane[:, :, None]
    return BinaryMask._wrap(mask)
