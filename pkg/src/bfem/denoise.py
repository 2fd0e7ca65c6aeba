"""Patch-based Gaussian denoising of grayscale images with a fitted mixture.

Every overlapping ``f x f`` patch is filtered by the posterior mean of the
clean patch under each cluster, the cluster filters are mixed with the
responsibilities, and pixels are rebuilt by averaging all patches that
cover them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import CoverageGap, MalformedFile, NonFinite, PatchTooLarge, UnsupportedMaxval
from .inference import FitConfig, FitResult, fit, predict_tau
from .metrics import psnr

__all__ = [
    "GrayImage",
    "PatchSet",
    "extract_patches",
    "reconstruct_image",
    "denoise_patch",
    "denoise_patches",
    "denoise_image",
    "read_pgm",
    "write_pgm",
]


@dataclass
class GrayImage:
    """Grayscale image with real-valued intensities, stored as (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float)
        if self.pixels.ndim != 2:
            raise ValueError("pixels must be a 2-D array")
        if not np.all(np.isfinite(self.pixels)):
            raise NonFinite("image contains non-finite values")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple:
        return self.pixels.shape


@dataclass
class PatchSet:
    """Flattened patches (row-major inside each patch) and their top-left corners."""

    patches: np.ndarray
    origins: np.ndarray
    f: int
    image_shape: tuple

    def __len__(self) -> int:
        return self.patches.shape[0]


def _grid(size: int, f: int, stride: int) -> np.ndarray:
    pos = np.arange(0, size - f + 1, stride)
    if pos[-1] != size - f:
        pos = np.append(pos, size - f)
    return pos


def extract_patches(img, f: int, stride: int = 1) -> PatchSet:
    """All ``f x f`` patches on a ``stride`` grid, plus the last row and column.

    Raises:
        PatchTooLarge: if ``f`` exceeds either image side.
    """
    pix = img.pixels if isinstance(img, GrayImage) else np.asarray(img, dtype=float)
    H, W = pix.shape
    if f < 1 or f > min(H, W):
        raise PatchTooLarge(f"patch size {f} does not fit in a {H}x{W} image")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    rows, cols = _grid(H, f, stride), _grid(W, f, stride)
    windows = np.lib.stride_tricks.sliding_window_view(pix, (f, f))
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    origins = np.column_stack([rr.ravel(), cc.ravel()])
    patches = windows[origins[:, 0], origins[:, 1]].reshape(len(origins), f * f)
    return PatchSet(np.ascontiguousarray(patches, dtype=float), origins, f, (H, W))


def reconstruct_image(patches, origins, f: int, dims, clamp: bool = True) -> GrayImage:
    """Average overlapping patches back into an image.

    Each pixel is the plain mean of the patch values covering it.  Values are
    clamped to [0, 255] only after averaging.

    Raises:
        CoverageGap: if some pixel is covered by no patch.
    """
    patches = np.asarray(patches, dtype=float)
    origins = np.asarray(origins, dtype=int)
    H, W = dims
    if patches.shape != (origins.shape[0], f * f):
        raise ValueError("patches and origins have inconsistent shapes")
    if np.any(origins < 0) or np.any(origins[:, 0] > H - f) or np.any(origins[:, 1] > W - f):
        raise ValueError("patch origin out of bounds")
    total = np.zeros(H * W)
    count = np.zeros(H * W)
    base = origins[:, 0] * W + origins[:, 1]
    for a in range(f):
        for b in range(f):
            idx = base + a * W + b
            total += np.bincount(idx, weights=patches[:, a * f + b], minlength=H * W)
            count += np.bincount(idx, minlength=H * W)
    if np.any(count == 0):
        missing = int(np.flatnonzero(count == 0)[0])
        raise CoverageGap(f"pixel ({missing // W}, {missing % W}) is not covered by any patch")
    out = (total / count).reshape(H, W)
    if clamp:
        out = np.clip(out, 0.0, 255.0)
    return GrayImage(out)


def cluster_filters(result: FitResult, sigma2: float) -> np.ndarray:
    """Latent shrinkage matrices ``I_d - sigma2 Sigma_k^{-1}``, shape (K, d, d)."""
    d = result.params.d
    return np.stack([np.eye(d) - sigma2 * np.linalg.inv(s) for s in result.params.sigma])


def denoise_patches(Y, result: FitResult, sigma2: float, tau=None, chunk: int = 20000) -> np.ndarray:
    """Posterior-mean estimate of the clean patches, one per row of ``Y``."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    U = result.params.U
    if U.shape[1] >= U.shape[0]:
        raise ValueError("denoising needs a latent dimension d < p")
    center = result.center if result.center is not None else np.zeros(U.shape[0])
    filters = cluster_filters(result, sigma2)
    means = result.state.m_tilde
    out = np.empty_like(Y)
    for start in range(0, Y.shape[0], chunk):
        block = Y[start:start + chunk]
        t = predict_tau(block, result) if tau is None else np.asarray(tau)[start:start + chunk]
        X = (block - center) @ U
        latent = np.zeros_like(X)
        for k in range(result.K):
            latent += t[:, [k]] * (means[k] + (X - means[k]) @ filters[k].T)
        out[start:start + chunk] = center + latent @ U.T
    if not np.all(np.isfinite(out)):
        raise NonFinite("non-finite denoised patch")
    return out


def denoise_patch(y, result: FitResult, sigma2: float) -> np.ndarray:
    """Denoise a single flattened patch."""
    return denoise_patches(np.asarray(y, dtype=float)[None, :], result, sigma2)[0]


def denoise_image(img_noisy, sigma: float, K: int, f: int, config: FitConfig | None = None,
                  subsample: int = 50000, d: int | None = None, ref=None, seed=0):
    """Fit the mixture on (a subsample of) the patches and filter the whole image.

    Args:
        img_noisy: ``GrayImage`` or 2-D array.
        sigma: standard deviation of the additive Gaussian noise.
        K: number of clusters.
        f: patch side, so the data dimension is ``f**2``.
        config: fit settings; the submodel defaults to ``Sk_B``.
        subsample: number of patches used for fitting (all if fewer).
        d: latent dimension, ``K - 1`` by default.
        ref: optional clean image for the PSNR report.
        seed: seed of the patch subsample.

    Returns:
        ``(denoised GrayImage, report dict)``.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    img = img_noisy if isinstance(img_noisy, GrayImage) else GrayImage(img_noisy)
    ps = extract_patches(img, f, 1)
    if config is None:
        config = FitConfig(K=K, spec="Sk_B")
    config = replace(config, K=K, d=d if d is not None else min(K - 1, f * f - 1))
    train = ps.patches
    if subsample is not None and len(ps) > subsample:
        rng = np.random.default_rng(seed)
        train = train[rng.choice(len(ps), size=subsample, replace=False)]
    result = fit(train, config)
    clean = denoise_patches(ps.patches, result, float(sigma) ** 2)
    out = reconstruct_image(clean, ps.origins, f, img.shape)
    report = {"n_patches": len(ps), "n_train": train.shape[0], "elbo": result.elbo, "flags": list(result.flags)}
    if ref is not None:
        ref_pix = ref.pixels if isinstance(ref, GrayImage) else np.asarray(ref, dtype=float)
        report["psnr_noisy"] = psnr(ref_pix, img.pixels)
        report["psnr_denoised"] = psnr(ref_pix, out.pixels)
    return out, report


# --------------------------------------------------------------------------
# PGM input/output


def _pgm_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    i = 0
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i >= len(data):
            raise MalformedFile("truncated PGM header")
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < len(data) and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
            i += 1
        tokens.append(data[start:i])
    return tokens, i


def read_pgm(path) -> GrayImage:
    """Read an 8-bit binary (P5) or ASCII (P2) PGM file."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] not in (b"P5", b"P2"):
        raise MalformedFile(f"{path}: not a P2/P5 PGM file")
    tokens, pos = _pgm_tokens(data[2:], 3)
    pos += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise MalformedFile(f"{path}: non-integer header field") from None
    if width <= 0 or height <= 0:
        raise MalformedFile(f"{path}: invalid size {width}x{height}")
    if maxval > 255:
        raise UnsupportedMaxval(f"{path}: maxval {maxval} (only 8-bit images are supported)")
    if maxval <= 0:
        raise MalformedFile(f"{path}: invalid maxval {maxval}")
    npix = width * height
    if data[:2] == b"P5":
        raster = data[pos + 1:pos + 1 + npix]
        if len(raster) != npix:
            raise MalformedFile(f"{path}: expected {npix} pixels, found {len(raster)}")
        pixels = np.frombuffer(raster, dtype=np.uint8)
    else:
        body = data[pos:].split()
        if len(body) != npix:
            raise MalformedFile(f"{path}: expected {npix} pixels, found {len(body)}")
        try:
            pixels = np.array([int(v) for v in body])
        except ValueError:
            raise MalformedFile(f"{path}: non-integer pixel value") from None
    if pixels.max(initial=0) > maxval or pixels.min(initial=0) < 0:
        raise MalformedFile(f"{path}: pixel value outside [0, {maxval}]")
    return GrayImage(pixels.reshape(height, width).astype(float))


def write_pgm(img, path) -> None:
    """Write a binary P5 PGM; values are rounded and clipped to [0, 255]."""
    pix = img.pixels if isinstance(img, GrayImage) else np.asarray(img, dtype=float)
    raster = np.clip(np.rint(pix), 0, 255).astype(np.uint8)
    H, W = raster.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{W} {H}\n255\n".encode("ascii"))
        fh.write(raster.tobytes())
