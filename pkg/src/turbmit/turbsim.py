"""Parametric atmospheric-turbulence degradation and dataset fabrication.

The degradation model is tilt-then-blur: a correlated random displacement
field warps the clean frame, then a spatially varying Gaussian blur is
applied. Strength is controlled by the dimensionless knob d_r0 (aperture
over Fried parameter). Tilt RMS scales as t0 * d_r0**(5/6) (Zernike tilt
variance goes as the 5/3 power); blur sigma scales linearly as s0 * d_r0
with a +/-30% smooth spatial modulation.

Two dataset domains are fabricated from the same machinery:

* ``synthetic``  — d_r0 in [0.5, 2.0], paired clean/degraded records.
* ``proxy_real`` — d_r0 in [2.0, 3.0], halved correlation length, additive
  Gaussian noise (std 0.01); a deliberate distribution shift. Its training
  manifest exposes no clean paths; a separate sealed manifest keeps the
  ground truth for evaluation only.

Everything here is pure and deterministic given (inputs, seed); the
simulator is data-side only, so nothing needs to be differentiable.
"""

import dataclasses
import json
import os

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from .pngio import list_pngs, load_png, save_png

SYNTHETIC_D_R0_RANGE = (0.5, 2.0)
PROXY_REAL_D_R0_RANGE = (2.0, 3.0)
PROXY_REAL_NOISE_STD = 0.01

DEFAULT_CORR_LENGTH = 16.0
DEFAULT_TILT_COEFF = 1.2   # t0: tilt RMS in pixels at d_r0 = 1
DEFAULT_BLUR_COEFF = 1.0   # s0: blur sigma in pixels at d_r0 = 1
BLUR_LEVELS = 4            # fixed-sigma copies blended for the varying blur

TRAIN_MANIFEST = "manifest.jsonl"
SEALED_MANIFEST = "manifest_sealed.jsonl"


@dataclasses.dataclass
class TurbulenceParams:
    """Full per-sample degradation state.

    tilt_field is (2,H,W) pixel displacement (row, col); sigma_field is
    (H,W) per-pixel Gaussian blur std. Both are bit-reproducible from
    (seed, d_r0 draw, shape, corr_length).
    """

    d_r0: float
    tilt_field: np.ndarray
    sigma_field: np.ndarray
    corr_length: float
    seed: int


@dataclasses.dataclass
class ManifestRecord:
    clean_path: "str | None"
    degraded_path: str
    d_r0: float
    seed: int


@dataclasses.dataclass
class DatasetManifest:
    domain: str
    seed: int
    corr_length: float
    t0: float
    s0: float
    noise_std: float
    d_r0_range: "tuple[float, float]"
    records: "list[ManifestRecord]"
    root: str = ""

    def resolve(self, rel):
        return os.path.normpath(os.path.join(self.root, rel))


def _resolve_seed(rng):
    """Accept an int seed or a Generator; always return a concrete seed."""
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63 - 1))
    raise ValueError(f"rng must be an int seed or numpy Generator, got {type(rng)!r}")


def _smooth_noise(gen, shape, corr_length):
    noise = gen.standard_normal(shape)
    if corr_length > 0:
        sig = (0,) * (len(shape) - 2) + (corr_length, corr_length)
        noise = gaussian_filter(noise, sigma=sig)
    return noise


def sample_params(shape, d_r0_range, corr_length=DEFAULT_CORR_LENGTH, rng=0,
                  t0=DEFAULT_TILT_COEFF, s0=DEFAULT_BLUR_COEFF):
    """Draw a TurbulenceParams for an image of spatial `shape` (H, W).

    d_r0 is drawn uniformly from d_r0_range (pass a degenerate interval to
    pin it). The tilt field is smoothed white noise rescaled to RMS
    t0 * d_r0**(5/6); the blur field is s0 * d_r0 modulated by a smoothed
    random factor in [0.7, 1.3].
    """
    h, w = int(shape[0]), int(shape[1])
    if h <= 0 or w <= 0:
        raise ValueError(f"image shape must be positive, got {(h, w)}")
    lo, hi = float(d_r0_range[0]), float(d_r0_range[1])
    if lo < 0 or hi < lo:
        raise ValueError(f"d_r0_range must satisfy 0 <= lo <= hi, got {(lo, hi)}")
    if corr_length < 0:
        raise ValueError(f"corr_length must be non-negative, got {corr_length}")

    seed = _resolve_seed(rng)
    gen = np.random.default_rng(np.random.SeedSequence([seed & (2**63 - 1)]))
    d_r0 = float(gen.uniform(lo, hi)) if hi > lo else lo

    tilt = _smooth_noise(gen, (2, h, w), corr_length)
    target_rms = t0 * d_r0 ** (5.0 / 6.0)
    rms = float(np.sqrt(np.mean(tilt**2)))
    if target_rms <= 0.0 or rms == 0.0:
        tilt = np.zeros((2, h, w))
    else:
        tilt = tilt * (target_rms / rms)

    modulation = _smooth_noise(gen, (h, w), corr_length)
    span = float(modulation.max() - modulation.min())
    if span > 0:
        modulation = (modulation - modulation.min()) / span   # -> [0, 1]
        factor = 0.7 + 0.6 * modulation
    else:
        factor = np.ones((h, w))
    sigma = s0 * d_r0 * factor

    return TurbulenceParams(
        d_r0=d_r0,
        tilt_field=tilt.astype(np.float32),
        sigma_field=sigma.astype(np.float32),
        corr_length=float(corr_length),
        seed=seed,
    )


def _warp(x, tilt_field):
    """Bilinear warp with reflective boundary: out(p) = x(p + tilt(p))."""
    _, h, w = x.shape
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64),
                             np.arange(w, dtype=np.float64), indexing="ij")
    coords = np.stack([rows + tilt_field[0], cols + tilt_field[1]])
    out = np.empty_like(x, dtype=np.float64)
    for c in range(x.shape[0]):
        out[c] = map_coordinates(x[c].astype(np.float64), coords,
                                 order=1, mode="reflect")
    return out


def _varying_blur(x, sigma_field, n_levels=BLUR_LEVELS):
    """Spatially varying Gaussian blur by blending fixed-sigma copies."""
    smin = float(sigma_field.min())
    smax = float(sigma_field.max())
    if smax <= 0.0:
        return x.copy()
    if smax == smin:
        return gaussian_filter(x, sigma=(0, smax, smax))

    levels = np.linspace(smin, smax, n_levels)
    stack = np.stack([x if s == 0 else gaussian_filter(x, sigma=(0, s, s))
                      for s in levels])                      # (L,C,H,W)
    pos = (sigma_field - smin) / (smax - smin) * (n_levels - 1)
    i0 = np.clip(np.floor(pos).astype(np.int64), 0, n_levels - 2)
    frac = pos - i0

    stack_clf = np.transpose(stack, (1, 0, 2, 3))            # (C,L,H,W)
    idx = np.broadcast_to(i0[None, None], (x.shape[0], 1) + i0.shape)
    lo = np.take_along_axis(stack_clf, idx, axis=1)[:, 0]
    hi = np.take_along_axis(stack_clf, idx + 1, axis=1)[:, 0]
    return lo * (1.0 - frac) + hi * frac


def degrade(x, p):
    """Apply tilt warp then spatially varying blur; output clipped to [0, 1]."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise ValueError(f"expected a (C,H,W) frame, got shape {x.shape}")
    if x.shape[1:] != p.tilt_field.shape[1:] or x.shape[1:] != p.sigma_field.shape:
        raise ValueError(
            f"params fields {p.sigma_field.shape} do not match frame {x.shape[1:]}")
    warped = _warp(x, p.tilt_field.astype(np.float64))
    blurred = _varying_blur(warped, p.sigma_field.astype(np.float64))
    return np.clip(blurred, 0.0, 1.0).astype(np.float32)


def param_map(p, latent_shape):
    """Area-averaged degradation summary at latent resolution (input dims / 2).

    Channel 0 is mean tilt magnitude, channel 1 mean blur sigma, each
    averaged over the 2x2 input block that maps to the latent cell.
    """
    return fields_to_map(p.tilt_field, p.sigma_field, latent_shape)


def fields_to_map(tilt_field, sigma_field, latent_shape):
    h, w = sigma_field.shape
    lh, lw = int(latent_shape[0]), int(latent_shape[1])
    if h % 2 or w % 2 or (lh, lw) != (h // 2, w // 2):
        raise ValueError(
            f"latent shape {(lh, lw)} incompatible with field shape {(h, w)}")
    magnitude = np.sqrt(tilt_field[0].astype(np.float64) ** 2
                        + tilt_field[1].astype(np.float64) ** 2)
    out = np.stack([_block_mean(magnitude), _block_mean(sigma_field)])
    return out.astype(np.float32)


def _block_mean(a):
    h, w = a.shape
    return np.asarray(a, dtype=np.float64).reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def record_seed(global_seed, index):
    """Per-record seed stream: pure function of (global seed, record index)."""
    return int(np.random.SeedSequence([int(global_seed), int(index)])
               .generate_state(1, dtype=np.uint64)[0] & (2**63 - 1))


def build_dataset(clean_dir, out_dir, count, domain, seed,
                  corr_length=DEFAULT_CORR_LENGTH,
                  t0=DEFAULT_TILT_COEFF, s0=DEFAULT_BLUR_COEFF):
    """Fabricate a degraded dataset and write its manifest(s).

    Returns the training-view DatasetManifest. For the proxy_real domain the
    training view omits clean paths; the sealed manifest (with ground truth)
    is written alongside it as a separate file.
    """
    if domain not in ("synthetic", "proxy_real"):
        raise ValueError(f"domain must be 'synthetic' or 'proxy_real', got {domain!r}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    clean_names = list_pngs(clean_dir)
    if not clean_names:
        raise FileNotFoundError(f"no PNG images found in clean dir {clean_dir!r}")

    if domain == "synthetic":
        d_r0_range = SYNTHETIC_D_R0_RANGE
        noise_std = 0.0
    else:
        d_r0_range = PROXY_REAL_D_R0_RANGE
        corr_length = corr_length / 2.0
        noise_std = PROXY_REAL_NOISE_STD

    degraded_dir = os.path.join(out_dir, "degraded")
    os.makedirs(degraded_dir, exist_ok=True)

    records = []
    for i in range(count):
        name = clean_names[i % len(clean_names)]
        clean_path = os.path.join(clean_dir, name)
        x = load_png(clean_path)
        rec_seed = record_seed(seed, i)
        params = sample_params(x.shape[1:], d_r0_range, corr_length,
                               rng=rec_seed, t0=t0, s0=s0)
        y = degrade(x, params).astype(np.float64)
        if noise_std > 0:
            noise_gen = np.random.default_rng(np.random.SeedSequence([seed, i, 1]))
            y = np.clip(y + noise_gen.normal(0.0, noise_std, size=y.shape), 0.0, 1.0)
        degraded_path = os.path.join(degraded_dir, f"{i:05d}.png")
        save_png(degraded_path, y)
        records.append(ManifestRecord(
            clean_path=os.path.relpath(clean_path, out_dir),
            degraded_path=os.path.relpath(degraded_path, out_dir),
            d_r0=params.d_r0,
            seed=rec_seed,
        ))

    manifest = DatasetManifest(
        domain=domain, seed=int(seed), corr_length=float(corr_length),
        t0=float(t0), s0=float(s0), noise_std=float(noise_std),
        d_r0_range=(float(d_r0_range[0]), float(d_r0_range[1])),
        records=records, root=out_dir,
    )
    if domain == "proxy_real":
        save_manifest(manifest, os.path.join(out_dir, SEALED_MANIFEST))
        train_view = dataclasses.replace(
            manifest,
            records=[dataclasses.replace(r, clean_path=None) for r in records],
        )
        save_manifest(train_view, os.path.join(out_dir, TRAIN_MANIFEST))
        return train_view
    save_manifest(manifest, os.path.join(out_dir, TRAIN_MANIFEST))
    return manifest


def save_manifest(manifest, path):
    header = {
        "domain": manifest.domain,
        "seed": manifest.seed,
        "corr_length": manifest.corr_length,
        "t0": manifest.t0,
        "s0": manifest.s0,
        "noise_std": manifest.noise_std,
        "d_r0_range": list(manifest.d_r0_range),
        "count": len(manifest.records),
    }
    lines = [json.dumps(header, sort_keys=True)]
    for r in manifest.records:
        lines.append(json.dumps({
            "clean_path": r.clean_path,
            "degraded_path": r.degraded_path,
            "d_r0": r.d_r0,
            "seed": r.seed,
        }, sort_keys=True))
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_manifest(path):
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    header = json.loads(lines[0])
    records = [ManifestRecord(
        clean_path=d["clean_path"], degraded_path=d["degraded_path"],
        d_r0=d["d_r0"], seed=d["seed"],
    ) for d in map(json.loads, lines[1:])]
    return DatasetManifest(
        domain=header["domain"], seed=header["seed"],
        corr_length=header["corr_length"], t0=header["t0"], s0=header["s0"],
        noise_std=header["noise_std"],
        d_r0_range=tuple(header["d_r0_range"]),
        records=records, root=os.path.dirname(os.path.abspath(path)),
    )


def reproduce_params(manifest, rec, shape):
    """Rebuild the exact TurbulenceParams used for a manifest record."""
    p = sample_params(shape, manifest.d_r0_range, manifest.corr_length,
                      rng=rec.seed, t0=manifest.t0, s0=manifest.s0)
    if abs(p.d_r0 - rec.d_r0) > 1e-9:
        raise RuntimeError(
            f"manifest record out of sync: d_r0 {rec.d_r0} vs rebuilt {p.d_r0}")
    return p


def make_test_card(size=64, seed=3):
    """A deterministic textured frame: smooth field + edges + sinusoid."""
    gen = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    h = w = int(size)
    base = gaussian_filter(gen.standard_normal((h, w)), sigma=size / 8.0)
    detail = gaussian_filter(gen.standard_normal((h, w)), sigma=size / 32.0)
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
    waves = 0.3 * np.sin(2 * np.pi * (3 * xx + 2 * yy))
    card = base / (np.abs(base).max() + 1e-9) + 0.7 * detail / (np.abs(detail).max() + 1e-9) + waves
    # a few hard-edged rectangles so the card has step edges
    for _ in range(4):
        r0, c0 = gen.integers(0, h - 8), gen.integers(0, w - 8)
        rh, cw = gen.integers(4, h // 3), gen.integers(4, w // 3)
        card[r0:r0 + rh, c0:c0 + cw] += gen.uniform(-0.8, 0.8)
    card = (card - card.min()) / (card.max() - card.min())
    card = 0.05 + 0.9 * card
    tint = gen.uniform(-0.05, 0.05, size=(3, 1, 1))
    return np.clip(card[None, :, :] + tint, 0.0, 1.0).astype(np.float32)


def synth_clean_images(out_dir, count, size=64, seed=0):
    """Write `count` procedural textured clean PNGs; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i in range(count):
        frame = make_test_card(size=size, seed=record_seed(seed, i))
        path = os.path.join(out_dir, f"clean_{i:04d}.png")
        save_png(path, frame)
        paths.append(path)
    return paths
