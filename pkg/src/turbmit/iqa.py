"""Image-quality metrics: full-reference PSNR/SSIM and no-reference PIQE.

PSNR and SSIM follow the standard definitions for unit-interval images
(SSIM: single scale, 11x11 Gaussian window with sigma 1.5, valid windows
only). PIQE is the training-free block-based score: the luminance is
mean-subtracted contrast-normalized (MSCN), partitioned into 16x16 blocks,
and every spatially active block is tested for noticeable artifacts
(too-uniform edge segments) and for noise (center-vs-surround deviation);
lower is better, a featureless image scores 100 by construction.

All metrics are pure functions of their inputs.
"""

import dataclasses
import math
import os

import numpy as np
from scipy.signal import convolve2d

from .pngio import list_pngs, load_png

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2

MSCN_WINDOW = 7
MSCN_SIGMA = 7.0 / 6.0

PIQE_BLOCK = 16
PIQE_ACTIVITY_THRESHOLD = 0.1    # block MSCN variance above this is "active"
PIQE_SEGMENT_THRESHOLD = 0.1     # edge-segment std below this flags artifacts
PIQE_SEGMENT_LENGTH = 6
PIQE_POOLING_CONSTANT = 1.0


def to_gray(frame):
    """Luminance of a (3,H,W)/(1,H,W)/(H,W) frame as a float64 (H,W) array."""
    a = np.asarray(frame, dtype=np.float64)
    if a.ndim == 2:
        return a
    if a.ndim == 3 and a.shape[0] == 1:
        return a[0]
    if a.ndim == 3 and a.shape[0] == 3:
        r, g, b = LUMA_WEIGHTS
        return r * a[0] + g * a[1] + b * a[2]
    raise ValueError(f"expected (H,W), (1,H,W) or (3,H,W), got {a.shape}")


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b):
    """Peak signal-to-noise ratio in dB (peak 1); inf for identical inputs."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_kernel(size, sigma):
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(a, b):
    """Mean single-scale SSIM over all valid 11x11 windows."""
    a, b = _check_pair(a, b)
    x = to_gray(a)
    y = to_gray(b)
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(
            f"image {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    win = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)

    mu_x = convolve2d(x, win, mode="valid")
    mu_y = convolve2d(y, win, mode="valid")
    xx = convolve2d(x * x, win, mode="valid") - mu_x**2
    yy = convolve2d(y * y, win, mode="valid") - mu_y**2
    xy = convolve2d(x * y, win, mode="valid") - mu_x * mu_y

    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * xy + SSIM_C2)
    den = (mu_x**2 + mu_y**2 + SSIM_C1) * (xx + yy + SSIM_C2)
    return float(np.mean(num / den))


def mscn(a):
    """Mean-subtracted contrast-normalized coefficients of a grayscale image.

    (a - mu) / (sigma + 1) with mu/sigma the local Gaussian-weighted mean
    and std over a 7x7 window (sigma 7/6), symmetric boundary.
    """
    x = np.asarray(a, dtype=np.float64)
    if x.ndim == 3 and x.shape[0] == 1:
        x = x[0]
    if x.ndim != 2:
        raise ValueError(f"mscn expects a grayscale image, got shape {x.shape}")
    win = _gaussian_kernel(MSCN_WINDOW, MSCN_SIGMA)
    mu = convolve2d(x, win, mode="same", boundary="symm")
    second = convolve2d(x * x, win, mode="same", boundary="symm")
    sigma = np.sqrt(np.maximum(second - mu**2, 0.0))
    return (x - mu) / (sigma + 1.0)


def _edge_segments_impaired(block):
    """True if any 6-px segment along the block's 4 edges is near-uniform."""
    n = block.shape[0]
    edges = [block[0, :], block[:, -1], block[-1, :], block[:, 0]]
    for edge in edges:
        for start in range(n - PIQE_SEGMENT_LENGTH + 1):
            seg = edge[start:start + PIQE_SEGMENT_LENGTH]
            if np.std(seg, ddof=1) < PIQE_SEGMENT_THRESHOLD:
                return True
    return False


def _noise_flag(block, block_var):
    """Center-vs-surround deviation test for Gaussian-noise-like blocks."""
    block_sigma = math.sqrt(block_var)
    n = block.shape[1]
    c1 = (n - 1) // 2
    center = np.concatenate([block[:, c1], block[:, c1 + 1]])
    surround = np.delete(block, (c1, c1 + 1), axis=1)
    center_std = np.std(center, ddof=1)
    surround_std = np.std(surround, ddof=1)
    ratio = center_std / surround_std if surround_std > 0 else 0.0
    if math.isnan(ratio):
        ratio = 0.0
    beta = abs(block_sigma - ratio) / max(block_sigma, ratio)
    return block_sigma > 2.0 * beta


def piqe(a):
    """No-reference quality score in [0, 100]; lower is better.

    Works on the 0-255-scaled luminance so the standard activity threshold
    applies; the fixed scaling keeps the score invariant to constant
    intensity shifts.
    """
    gray = to_gray(a) * 255.0
    h, w = gray.shape
    if h < PIQE_BLOCK or w < PIQE_BLOCK:
        raise ValueError(f"image {gray.shape} smaller than one {PIQE_BLOCK}px block")

    coeffs = mscn(gray)
    pad_h = (-h) % PIQE_BLOCK
    pad_w = (-w) % PIQE_BLOCK
    if pad_h or pad_w:
        coeffs = np.pad(coeffs, ((0, pad_h), (0, pad_w)), mode="symmetric")

    n_active = 0
    total_distortion = 0.0
    for i in range(0, coeffs.shape[0], PIQE_BLOCK):
        for j in range(0, coeffs.shape[1], PIQE_BLOCK):
            block = coeffs[i:i + PIQE_BLOCK, j:j + PIQE_BLOCK]
            var = float(np.var(block, ddof=1))
            if var <= PIQE_ACTIVITY_THRESHOLD:
                continue
            n_active += 1
            artifact = 1.0 if _edge_segments_impaired(block) else 0.0
            noisy = 1.0 if _noise_flag(block, var) else 0.0
            distortion = artifact * (1.0 - var) + noisy * var
            total_distortion += float(np.clip(distortion, 0.0, 1.0))

    c = PIQE_POOLING_CONSTANT
    return 100.0 * (total_distortion + c) / (n_active + c)


@dataclasses.dataclass
class MetricReport:
    rows: "list[dict]"               # per-image {name, psnr?, ssim?, piqe}
    errors: "list[str]"              # per-file problems (run continues)
    count: int
    mean_psnr: "float | None"
    mean_ssim: "float | None"
    mean_piqe: "float | None"

    def summary(self):
        return {
            "count": self.count,
            "mean_psnr": self.mean_psnr,
            "mean_ssim": self.mean_ssim,
            "mean_piqe": self.mean_piqe,
            "errors": list(self.errors),
        }


def evaluate(restored_dir, reference_dir=None):
    """Score every PNG in restored_dir; full-reference columns only when a
    reference directory with matching filenames is given."""
    names = list_pngs(restored_dir)
    rows = []
    errors = []
    for name in names:
        restored = load_png(os.path.join(restored_dir, name))
        row = {"name": name, "piqe": piqe(restored)}
        if reference_dir is not None:
            ref_path = os.path.join(reference_dir, name)
            if not os.path.exists(ref_path):
                errors.append(f"{name}: no matching reference file")
            else:
                reference = load_png(ref_path)
                try:
                    row["psnr"] = psnr(reference, restored)
                    row["ssim"] = ssim(reference, restored)
                except ValueError as exc:
                    errors.append(f"{name}: {exc}")
        rows.append(row)

    def col_mean(key):
        vals = [r[key] for r in rows if key in r]
        return float(np.mean(vals)) if vals else None

    return MetricReport(
        rows=rows, errors=errors, count=len(rows),
        mean_psnr=col_mean("psnr"), mean_ssim=col_mean("ssim"),
        mean_piqe=col_mean("piqe"),
    )


def write_report(report, table_path, summary_path=None):
    """Delimited per-image table plus aggregate row; optional JSON summary."""
    import json

    have_ref = any("psnr" in r for r in report.rows)
    cols = ["name", "psnr", "ssim", "piqe"] if have_ref else ["name", "piqe"]
    lines = [",".join(cols)]
    for r in report.rows:
        lines.append(",".join(_fmt(r.get(c)) for c in cols))
    agg = {"name": "aggregate_mean", "psnr": report.mean_psnr,
           "ssim": report.mean_ssim, "piqe": report.mean_piqe}
    lines.append(",".join(_fmt(agg.get(c)) for c in cols))
    os.makedirs(os.path.dirname(os.path.abspath(table_path)), exist_ok=True)
    with open(table_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if summary_path is not None:
        with open(summary_path, "w") as fh:
            json.dump(report.summary(), fh, indent=2, default=str)
            fh.write("\n")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "inf" if math.isinf(v) else f"{v:.6f}"
    return str(v)
