"""Perceptual distortion: semantics-preserving image degradations.

One of five options (clean, rotate, blur, shadow-or-stain, wave) is drawn
uniformly per image from a seeded generator, then the option's parameters
are drawn from fixed ranges chosen to keep rendered text legible. The whole
operation is a pure function of (image bytes, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from PIL import Image
from scipy import ndimage

from .render import RenderedCarrier
from .rng import SplitMix64
from .validation import check_rgb_image

FAMILIES = ("clean", "rotate", "blur", "shadow_or_stain", "wave")

GAUSSIAN_SIGMA_RANGE = (0.5, 2.0)
BOX_KERNELS = (3, 5)
MOTION_LENGTH_RANGE = (5, 15)
SMALL_ANGLE_RANGE = (-5.0, 5.0)
LARGE_ANGLES = (90.0, 180.0, 270.0)
SHADOW_STRENGTH_RANGE = (0.2, 0.5)
STAIN_COUNT_RANGE = (1, 3)
STAIN_ALPHA_RANGE = (0.1, 0.3)
STAIN_RADIUS_RANGE = (0.08, 0.25)  # fraction of min(H, W)
WAVE_AMPLITUDE_RANGE = (2.0, 6.0)
WAVE_WAVELENGTH_RANGE = (80.0, 200.0)

WHITE = 255.0


@dataclass(frozen=True)
class DistortionChoice:
    family: str
    params: dict
    seed: int

    def to_dict(self) -> dict:
        return {"family": self.family, "params": self.params, "seed": self.seed}


def rotate(image: np.ndarray, angle: float) -> np.ndarray:
    """Rotate counterclockwise about the center, expanding the canvas.

    Multiples of 90 degrees are exact pixel permutations; other angles use
    bilinear resampling with white fill. The output extents equal
    ceil(w|cos| + h|sin|) by ceil(w|sin| + h|cos|).
    """
    image = check_rgb_image(image)
    if abs(angle) > 360:
        raise ValueError("|angle| must be <= 360")
    a = angle % 360.0
    if a == 0.0:
        return image.copy()
    if a in (90.0, 180.0, 270.0):
        return np.rot90(image, k=int(a) // 90).copy()
    h, w = image.shape[:2]
    t = math.radians(a)
    ct, st = math.cos(t), math.sin(t)
    nw = math.ceil(abs(w * ct) + abs(h * st))
    nh = math.ceil(abs(w * st) + abs(h * ct))
    # inverse affine map from output pixel to source pixel, both about centers
    ncx, ncy = nw / 2.0, nh / 2.0
    cx, cy = w / 2.0, h / 2.0
    matrix = (ct, st, cx - ct * ncx - st * ncy, -st, ct, cy + st * ncx - ct * ncy)
    out = Image.fromarray(image).transform(
        (nw, nh), Image.AFFINE, matrix, resample=Image.BILINEAR, fillcolor=(255, 255, 255)
    )
    return np.asarray(out)


def gaussian_blur_field(field: np.ndarray, sigma: float) -> np.ndarray:
    """Float-space Gaussian smoothing with clamped (edge-replicated) borders."""
    return ndimage.gaussian_filter(field, sigma=sigma, mode="nearest", truncate=4.0)


def motion_kernel(length: int, angle_deg: float) -> np.ndarray:
    """Normalized line kernel of ``length`` sample points at ``angle_deg``.

    Sample points are splatted bilinearly so the kernel varies smoothly with
    the angle and stays deterministic.
    """
    size = length if length % 2 == 1 else length + 1
    kernel = np.zeros((size, size), dtype=np.float64)
    center = (size - 1) / 2.0
    t = math.radians(angle_deg)
    dx, dy = math.cos(t), math.sin(t)
    for i in range(length):
        offset = i - (length - 1) / 2.0
        x = center + offset * dx
        y = center + offset * dy
        x0, y0 = int(math.floor(x)), int(math.floor(y))
        fx, fy = x - x0, y - y0
        for (yy, xx, wgt) in (
            (y0, x0, (1 - fx) * (1 - fy)),
            (y0, x0 + 1, fx * (1 - fy)),
            (y0 + 1, x0, (1 - fx) * fy),
            (y0 + 1, x0 + 1, fx * fy),
        ):
            if 0 <= yy < size and 0 <= xx < size and wgt > 0:
                kernel[yy, xx] += wgt
    return kernel / kernel.sum()


def blur(image: np.ndarray, kind: str, param) -> np.ndarray:
    """Blur with a Gaussian, box, or motion kernel; dimensions are preserved.

    ``param`` is sigma for gaussian, the kernel size for box, and a
    ``(length, angle_deg)`` pair for motion. Edges are clamped.
    """
    image = check_rgb_image(image)
    arr = image.astype(np.float64)
    if kind == "gaussian":
        sigma = float(param)
        if not GAUSSIAN_SIGMA_RANGE[0] <= sigma <= GAUSSIAN_SIGMA_RANGE[1]:
            raise ValueError(f"gaussian sigma must be in {GAUSSIAN_SIGMA_RANGE}, got {sigma}")
        out = ndimage.gaussian_filter(arr, sigma=(sigma, sigma, 0.0), mode="nearest", truncate=4.0)
    elif kind == "box":
        k = int(param)
        if k not in BOX_KERNELS:
            raise ValueError(f"box kernel must be one of {BOX_KERNELS}, got {k}")
        out = ndimage.uniform_filter(arr, size=(k, k, 1), mode="nearest")
    elif kind == "motion":
        length, angle_deg = param
        length = int(length)
        if not MOTION_LENGTH_RANGE[0] <= length <= MOTION_LENGTH_RANGE[1]:
            raise ValueError(f"motion length must be in {MOTION_LENGTH_RANGE}, got {length}")
        if not 0.0 <= float(angle_deg) < 180.0:
            raise ValueError(f"motion angle must be in [0, 180), got {angle_deg}")
        kernel = motion_kernel(length, float(angle_deg))
        out = np.stack(
            [ndimage.convolve(arr[..., c], kernel, mode="nearest") for c in range(3)], axis=-1
        )
    else:
        raise ValueError(f"unknown blur kind {kind!r}")
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def shadow_or_stain(image: np.ndarray, params: dict) -> np.ndarray:
    """Overlay an edge shadow or dark elliptical stains.

    Both variants only darken: the shadow is a multiplicative gradient from
    one edge, stains alpha-composite black ellipses. Dimensions preserved.
    """
    image = check_rgb_image(image)
    arr = image.astype(np.float64)
    h, w = arr.shape[:2]
    variant = params["variant"]
    if variant == "shadow":
        strength = float(params["strength"])
        edge = params["edge"]
        if edge in ("left", "right"):
            ramp = np.linspace(1.0, 0.0, w) if edge == "left" else np.linspace(0.0, 1.0, w)
            factor = (1.0 - strength * ramp)[np.newaxis, :, np.newaxis]
        elif edge in ("top", "bottom"):
            ramp = np.linspace(1.0, 0.0, h) if edge == "top" else np.linspace(0.0, 1.0, h)
            factor = (1.0 - strength * ramp)[:, np.newaxis, np.newaxis]
        else:
            raise ValueError(f"unknown shadow edge {edge!r}")
        out = arr * factor
    elif variant == "stain":
        yy, xx = np.mgrid[0:h, 0:w]
        keep = np.ones((h, w), dtype=np.float64)
        for blob in params["blobs"]:
            cx = blob["cx"] * (w - 1)
            cy = blob["cy"] * (h - 1)
            rx = max(1.0, blob["rx"] * min(h, w))
            ry = max(1.0, blob["ry"] * min(h, w))
            inside = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
            keep[inside] *= 1.0 - blob["alpha"]
        out = arr * keep[..., np.newaxis]
    else:
        raise ValueError(f"unknown shadow_or_stain variant {variant!r}")
    # truncation keeps the per-pixel non-increasing guarantee exact
    return np.clip(out, 0, 255).astype(np.uint8)


def wave(image: np.ndarray, amplitude: float, wavelength: float) -> np.ndarray:
    """Sinusoidal vertical displacement y' = y + A*sin(2*pi*x/wavelength).

    The canvas grows by ceil(A) at top and bottom so no content is clipped;
    sampling is bilinear with white fill outside the source.
    """
    image = check_rgb_image(image)
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    h, w = image.shape[:2]
    pad = math.ceil(amplitude)
    out_h = h + 2 * pad
    arr = image.astype(np.float64)
    x = np.arange(w, dtype=np.float64)
    shift = pad + amplitude * np.sin(2.0 * math.pi * x / wavelength)  # per-column offset
    y_out = np.arange(out_h, dtype=np.float64)[:, np.newaxis]
    src_y = y_out - shift[np.newaxis, :]
    y0 = np.floor(src_y).astype(np.int64)
    frac = (src_y - y0)[..., np.newaxis]

    def sample(rows: np.ndarray) -> np.ndarray:
        valid = (rows >= 0) & (rows < h)
        clipped = np.clip(rows, 0, h - 1)
        vals = arr[clipped, np.arange(w)[np.newaxis, :], :]
        vals[~valid] = WHITE
        return vals

    out = (1.0 - frac) * sample(y0) + frac * sample(y0 + 1)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def sample_choice(seed: int) -> DistortionChoice:
    """Draw a distortion family and its parameters from the seeded generator."""
    rng = SplitMix64(seed)
    family = FAMILIES[rng.below(len(FAMILIES))]
    params: dict = {}
    if family == "rotate":
        if rng.below(2) == 0:
            params["angle"] = rng.choice(LARGE_ANGLES)
        else:
            params["angle"] = rng.uniform(*SMALL_ANGLE_RANGE)
    elif family == "blur":
        kind = rng.choice(("gaussian", "box", "motion"))
        params["kind"] = kind
        if kind == "gaussian":
            params["sigma"] = rng.uniform(*GAUSSIAN_SIGMA_RANGE)
        elif kind == "box":
            params["kernel"] = rng.choice(BOX_KERNELS)
        else:
            params["length"] = rng.randint(*MOTION_LENGTH_RANGE)
            params["angle"] = rng.uniform(0.0, 180.0)
    elif family == "shadow_or_stain":
        if rng.below(2) == 0:
            params["variant"] = "shadow"
            params["edge"] = rng.choice(("left", "right", "top", "bottom"))
            params["strength"] = rng.uniform(*SHADOW_STRENGTH_RANGE)
        else:
            params["variant"] = "stain"
            blobs = []
            for _ in range(rng.randint(*STAIN_COUNT_RANGE)):
                blobs.append({
                    "cx": rng.random(),
                    "cy": rng.random(),
                    "rx": rng.uniform(*STAIN_RADIUS_RANGE),
                    "ry": rng.uniform(*STAIN_RADIUS_RANGE),
                    "alpha": rng.uniform(*STAIN_ALPHA_RANGE),
                })
            params["blobs"] = blobs
    elif family == "wave":
        params["amplitude"] = rng.uniform(*WAVE_AMPLITUDE_RANGE)
        params["wavelength"] = rng.uniform(*WAVE_WAVELENGTH_RANGE)
    return DistortionChoice(family=family, params=params, seed=seed)


def apply_choice(image: np.ndarray, choice: DistortionChoice) -> np.ndarray:
    p = choice.params
    if choice.family == "clean":
        return image
    if choice.family == "rotate":
        return rotate(image, p["angle"])
    if choice.family == "blur":
        if p["kind"] == "gaussian":
            return blur(image, "gaussian", p["sigma"])
        if p["kind"] == "box":
            return blur(image, "box", p["kernel"])
        return blur(image, "motion", (p["length"], p["angle"]))
    if choice.family == "shadow_or_stain":
        return shadow_or_stain(image, p)
    if choice.family == "wave":
        return wave(image, p["amplitude"], p["wavelength"])
    raise ValueError(f"unknown distortion family {choice.family!r}")


def apply_distortion(carrier: RenderedCarrier, seed: int) -> RenderedCarrier:
    """Sample one distortion (or clean) from ``seed`` and apply it.

    Deterministic: the same (image, seed) always yields identical bytes and
    an identical recorded choice.
    """
    choice = sample_choice(seed)
    image = apply_choice(carrier.image, choice)
    return replace(carrier, image=image, distortion=choice.to_dict())
