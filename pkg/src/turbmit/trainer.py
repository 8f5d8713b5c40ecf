"""Alternating adversarial training for teacher-only and teacher-student modes.

Each iteration runs one discrimination step (updates both discriminators,
respecting the shared 6-9 layer group) followed by one generation step
(updates generator, encoder/decoder, parameter estimator and reproduce net);
the inactive parameter set never moves during the other side's step. Both
sides use Adam with zero weight decay under a cosine-annealed learning rate.

Every random draw is a pure function of (config seed, global iteration):
batch indices, augmentation, and reparameterization noise are all derived
from per-iteration seed streams, so a checkpoint only needs the iteration
counter to resume bit-identically and identical seeds give identical loss
logs.

Modes:

* ``syn_atm``  — teacher part only, supervised on the synthetic domain.
* ``real_atm`` — full system; the student path consumes degraded frames
  from the proxy-real manifest (its training view carries no clean paths,
  and the data path never reads one). The student discriminator's "real"
  branch consumes teacher-domain clean frames.
"""

import dataclasses
import json
import math
import os
import configparser

import numpy as np
import torch
from torch.optim import Adam

from . import iqa
from .nets import (DiscriminatorPair, Generator, ReproduceNet, sample_latent,
                   sharing_report)
from .objectives import (LossReport, LossWeights, RandomFeatureExtractor,
                         degrad_loss, dis_adv_loss, dist_loss, gen_adv_loss,
                         rm_loss, total_dis, total_gen, vae_loss)
from .pngio import list_pngs, load_png, save_png
from .turbsim import fields_to_map, load_manifest, reproduce_params

CHECKPOINT_SCHEMA = 1


class ConfigError(ValueError):
    """Invalid training configuration; message lists every offending key."""


class SchemaError(RuntimeError):
    """Checkpoint schema version mismatch."""


@dataclasses.dataclass
class TrainConfig:
    mode: str = "syn_atm"                  # syn_atm | real_atm
    epochs: int = 200
    iters_per_epoch: int = 1500
    batch_size: int = 16
    crop_size: int = 160
    lr_init: float = 1e-4
    lr_final: float = 5e-6
    seed: int = 0
    checkpoint_every: int = 1              # epochs between checkpoints
    val_count: int = 8                     # held-out records per domain
    weights: LossWeights = dataclasses.field(default_factory=LossWeights)
    teacher_manifest: str = ""
    student_manifest: "str | None" = None
    base_width: int = 64
    disc_width: int = 64
    rnet_width: int = 32
    ddf_blocks: int = 8
    feature_seed: int = 0
    out_dir: "str | None" = None

    @property
    def total_iterations(self):
        return self.epochs * self.iters_per_epoch


def validate_config(cfg):
    """Raise ConfigError listing every offending key."""
    problems = []
    if cfg.mode not in ("syn_atm", "real_atm"):
        problems.append(f"mode: must be 'syn_atm' or 'real_atm', got {cfg.mode!r}")
    for key in ("epochs", "iters_per_epoch", "batch_size", "crop_size",
                "checkpoint_every"):
        if getattr(cfg, key) < 1:
            problems.append(f"{key}: must be >= 1, got {getattr(cfg, key)}")
    if cfg.crop_size % 2:
        problems.append(f"crop_size: must be even, got {cfg.crop_size}")
    if cfg.lr_init <= 0 or cfg.lr_final <= 0:
        problems.append("lr_init/lr_final: must be positive")
    if cfg.val_count < 0:
        problems.append(f"val_count: must be >= 0, got {cfg.val_count}")
    if not cfg.teacher_manifest:
        problems.append("teacher_manifest: required")
    if cfg.mode == "real_atm" and not cfg.student_manifest:
        problems.append("student_manifest: required in real_atm mode")
    for lam in ("l1", "l2", "l3", "l4", "l5"):
        if getattr(cfg.weights, lam) < 0:
            problems.append(f"{lam}: must be non-negative")
    if problems:
        raise ConfigError("invalid configuration: " + "; ".join(problems))


_CONFIG_SECTIONS = {
    "train": ["mode", "epochs", "iters_per_epoch", "batch_size", "crop_size",
              "lr_init", "lr_final", "seed", "checkpoint_every", "val_count"],
    "weights": ["l1", "l2", "l3", "l4", "l5"],
    "model": ["base_width", "disc_width", "rnet_width", "ddf_blocks",
              "feature_seed"],
    "data": ["teacher_manifest", "student_manifest", "out_dir"],
}


def config_to_dict(cfg):
    d = dataclasses.asdict(cfg)
    weights = d.pop("weights")
    d.update(weights)
    return d


def config_from_dict(d):
    weights = LossWeights(**{k: float(d[k]) for k in ("l1", "l2", "l3", "l4", "l5")
                             if k in d})
    kwargs = {}
    for f in dataclasses.fields(TrainConfig):
        if f.name == "weights" or f.name not in d:
            continue
        kwargs[f.name] = d[f.name]
    return TrainConfig(weights=weights, **kwargs)


def save_config(cfg, path):
    parser = configparser.ConfigParser()
    flat = config_to_dict(cfg)
    for section, keys in _CONFIG_SECTIONS.items():
        parser[section] = {}
        for key in keys:
            value = flat.get(key)
            parser[section][key] = "" if value is None else str(value)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        parser.write(fh)


_INT_KEYS = {"epochs", "iters_per_epoch", "batch_size", "crop_size", "seed",
             "checkpoint_every", "val_count", "base_width", "disc_width",
             "rnet_width", "ddf_blocks", "feature_seed"}
_FLOAT_KEYS = {"lr_init", "lr_final", "l1", "l2", "l3", "l4", "l5"}


def _coerce(key, raw):
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    return raw if raw != "" else None


def load_config(path, overrides=None):
    """Read a key = value config file; `overrides` is a flat {key: str} map
    taking precedence over file values (CLI flags use this)."""
    parser = configparser.ConfigParser()
    if path is not None:
        read = parser.read(path)
        if not read:
            raise OSError(f"cannot read config file {path!r}")
    flat = {}
    for section in parser.sections():
        for key, raw in parser[section].items():
            flat[key] = raw
    for key, raw in (overrides or {}).items():
        flat[key] = raw
    known = {k for keys in _CONFIG_SECTIONS.values() for k in keys}
    unknown = sorted(set(flat) - known)
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(unknown))
    coerced = {}
    bad = []
    for key, raw in flat.items():
        try:
            value = _coerce(key, raw) if isinstance(raw, str) else raw
        except ValueError:
            bad.append(f"{key}: cannot parse {raw!r}")
            continue
        if value is not None:
            coerced[key] = value
    if bad:
        raise ConfigError("invalid configuration: " + "; ".join(bad))
    return config_from_dict(coerced)


# ---------------------------------------------------------------------------
# augmentation and the learning-rate schedule
# ---------------------------------------------------------------------------

def sample_transform(rng, h, w, crop_size):
    """Draw one geometric augmentation: crop offset, flips, transpose."""
    if h < crop_size or w < crop_size:
        raise ValueError(f"image {h}x{w} smaller than crop {crop_size}")
    top = int(rng.integers(0, h - crop_size + 1))
    left = int(rng.integers(0, w - crop_size + 1))
    flip_v, flip_h, transpose = (bool(b) for b in rng.random(3) < 0.5)
    return {"top": top, "left": left, "crop": crop_size,
            "flip_v": flip_v, "flip_h": flip_h, "transpose": transpose}


def apply_transform(arrays, t):
    out = []
    for a in arrays:
        c = a[..., t["top"]:t["top"] + t["crop"], t["left"]:t["left"] + t["crop"]]
        if t["flip_v"]:
            c = c[..., ::-1, :]
        if t["flip_h"]:
            c = c[..., ::-1]
        if t["transpose"]:
            c = np.swapaxes(c, -1, -2)
        out.append(np.ascontiguousarray(c))
    return out


def augment(item, crop_size, rng):
    """Apply one shared random crop/flip/transpose to a frame or an aligned
    tuple of arrays (e.g. a clean/degraded pair)."""
    single = not isinstance(item, (list, tuple))
    arrays = [item] if single else list(item)
    h, w = arrays[0].shape[-2:]
    for a in arrays[1:]:
        if a.shape[-2:] != (h, w):
            raise ValueError("all augmented arrays must share spatial dims")
    t = sample_transform(rng, h, w, crop_size)
    out = apply_transform(arrays, t)
    return out[0] if single else out


def lr_at(iteration, total_iters, lr_init, lr_final):
    """Cosine annealing from lr_init at 0 to lr_final at total_iters."""
    if total_iters <= 0:
        raise ValueError(f"total_iters must be positive, got {total_iters}")
    if iteration < 0 or iteration > total_iters:
        raise ValueError(f"iteration {iteration} outside [0, {total_iters}]")
    cos = math.cos(math.pi * iteration / total_iters)
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + cos)


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

class FrameDataset:
    """In-memory dataset over a manifest.

    With `with_clean` the clean frames are loaded as supervision; with
    `with_params` the exact degradation fields are rebuilt from each
    record's seed so the ground-truth degradation map can be computed for
    any crop. A student-domain dataset sets neither, and its code path
    never touches a clean_path.
    """

    def __init__(self, manifest, with_clean=False, with_params=False, val_count=0):
        self.manifest = manifest
        self.with_clean = with_clean
        self.with_params = with_params
        self.items = []
        for rec in manifest.records:
            item = {"degraded": load_png(manifest.resolve(rec.degraded_path))}
            if with_clean:
                if rec.clean_path is None:
                    raise ValueError(
                        "manifest record has no clean_path; this view cannot supervise")
                item["clean"] = load_png(manifest.resolve(rec.clean_path))
            if with_params:
                p = reproduce_params(manifest, rec, item["degraded"].shape[1:])
                item["tilt"] = p.tilt_field
                item["sigma"] = p.sigma_field
            self.items.append(item)
        if val_count >= len(self.items):
            raise ValueError(
                f"val_count {val_count} leaves no training records "
                f"(dataset has {len(self.items)})")
        self.train_count = len(self.items) - val_count
        self.val_count = val_count

    def sample_batch(self, batch_size, crop_size, rng):
        idxs = rng.integers(0, self.train_count, size=batch_size)
        clean, degraded, maps = [], [], []
        for i in idxs:
            item = self.items[int(i)]
            arrays = [item["degraded"]]
            if self.with_clean:
                arrays.append(item["clean"])
            if self.with_params:
                arrays.extend([item["tilt"], item["sigma"][None]])
            h, w = arrays[0].shape[-2:]
            t = sample_transform(rng, h, w, crop_size)
            arrays = apply_transform(arrays, t)
            degraded.append(arrays[0])
            pos = 1
            if self.with_clean:
                clean.append(arrays[pos])
                pos += 1
            if self.with_params:
                tilt, sigma = arrays[pos], arrays[pos + 1][0]
                maps.append(fields_to_map(tilt, sigma,
                                          (crop_size // 2, crop_size // 2)))
        batch = {"degraded": torch.from_numpy(np.stack(degraded))}
        if self.with_clean:
            batch["clean"] = torch.from_numpy(np.stack(clean))
        if self.with_params:
            batch["param_map"] = torch.from_numpy(np.stack(maps))
        return batch

    def val_items(self):
        return self.items[self.train_count:]


# ---------------------------------------------------------------------------
# training state and the two alternation steps
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class TrainState:
    config: TrainConfig
    gen: Generator
    disc: DiscriminatorPair
    rnet: ReproduceNet
    feat: RandomFeatureExtractor
    opt_gen: Adam
    opt_dis: Adam
    iteration: int = 0

    @property
    def epoch(self):
        return self.iteration // self.config.iters_per_epoch

    def sharing(self):
        return sharing_report(self.gen, self.disc, self.rnet)


def build_state(cfg):
    torch.manual_seed(cfg.seed)
    gen = Generator(width=cfg.base_width, n_blocks=cfg.ddf_blocks)
    disc = DiscriminatorPair(width=cfg.disc_width)
    rnet = ReproduceNet(width=cfg.rnet_width)
    feat = RandomFeatureExtractor(seed=cfg.feature_seed)
    opt_gen = Adam(list(gen.parameters()) + list(rnet.parameters()),
                   lr=cfg.lr_init, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0)
    opt_dis = Adam(disc.parameters(),
                   lr=cfg.lr_init, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0)
    return TrainState(config=cfg, gen=gen, disc=disc, rnet=rnet, feat=feat,
                      opt_gen=opt_gen, opt_dis=opt_dis)


def _iter_seeds(cfg, iteration):
    """Four independent integer seeds for one training iteration."""
    state = np.random.SeedSequence([cfg.seed, iteration]).generate_state(
        4, dtype=np.uint64)
    return [int(s & (2**63 - 1)) for s in state]


def _require_student(cfg, batch_s):
    if cfg.mode == "real_atm" and batch_s is None:
        raise ConfigError("real_atm mode requires a student batch "
                          "(missing key: student_manifest)")


def generation_step(state, batch_t, batch_s=None, noise_seed=0):
    """One generation-side update; discriminator parameters stay untouched."""
    cfg = state.config
    _require_student(cfg, batch_s)
    g = torch.Generator().manual_seed(noise_seed)
    state.opt_gen.zero_grad(set_to_none=True)

    x_t = batch_t["clean"]
    y_t = batch_t["degraded"]
    post_t = state.gen.encode(y_t)
    c_t = sample_latent(post_t, "train", g)
    x_hat_t = state.gen.restore(y_t, c_t)
    teacher = {
        "dist": dist_loss(x_t, x_hat_t, state.feat),
        "gen": gen_adv_loss(state.disc(x_hat_t, "teacher")),
        "rm": rm_loss(y_t, state.rnet(x_hat_t)),
        "vae": vae_loss(post_t, y_t, state.gen.decode(c_t)),
        "degrad": degrad_loss(batch_t["param_map"], state.gen.estimate_params(c_t)),
    }

    student = None
    if batch_s is not None:
        y_s = batch_s["degraded"]      # degraded-only: no clean frame exists here
        post_s = state.gen.encode(y_s)
        c_s = sample_latent(post_s, "train", g)
        x_hat_s = state.gen.restore(y_s, c_s)
        student = {
            "gen": gen_adv_loss(state.disc(x_hat_s, "student")),
            "rm": rm_loss(y_s, state.rnet(x_hat_s)),
            "vae": vae_loss(post_s, y_s, state.gen.decode(c_s)),
        }

    total, report = total_gen(teacher, student, cfg.weights)
    total.backward()
    state.opt_gen.step()
    return report


def discrimination_step(state, batch_t, batch_s=None, noise_seed=0):
    """One discrimination-side update; generation-side parameters untouched.

    The student discriminator's real branch consumes teacher-domain clean
    frames (the student domain has none).
    """
    cfg = state.config
    _require_student(cfg, batch_s)
    g = torch.Generator().manual_seed(noise_seed)
    state.opt_dis.zero_grad(set_to_none=True)

    x_t = batch_t["clean"]
    y_t = batch_t["degraded"]
    with torch.no_grad():
        c_t = sample_latent(state.gen.encode(y_t), "train", g)
        x_hat_t = state.gen.restore(y_t, c_t)
        x_hat_s = None
        if batch_s is not None:
            y_s = batch_s["degraded"]
            c_s = sample_latent(state.gen.encode(y_s), "train", g)
            x_hat_s = state.gen.restore(y_s, c_s)

    dis_t = dis_adv_loss(state.disc(x_t, "teacher"), state.disc(x_hat_t, "teacher"))
    dis_s = None
    if x_hat_s is not None:
        dis_s = dis_adv_loss(state.disc(x_t, "student"),
                             state.disc(x_hat_s, "student"))

    total = total_dis(dis_t, dis_s)
    total.backward()
    state.opt_dis.step()
    report = LossReport(dis_T=float(dis_t.detach()),
                        dis_S=float(dis_s.detach()) if dis_s is not None else 0.0,
                        total_dis=float(total.detach()))
    return report


def _set_lr(state, lr):
    for opt in (state.opt_gen, state.opt_dis):
        for group in opt.param_groups:
            group["lr"] = lr


def evaluate_state(state, teacher_data, student_data=None):
    """Held-out metrics: PSNR/SSIM on the teacher split, PIQE on the student."""
    state.gen.eval()
    out = {}
    with torch.no_grad():
        psnrs, ssims = [], []
        for item in teacher_data.val_items():
            y = torch.from_numpy(item["degraded"][None])
            x_hat = state.gen.run_test_time(y)[0].numpy()
            psnrs.append(iqa.psnr(item["clean"], x_hat))
            ssims.append(iqa.ssim(item["clean"], x_hat))
        if psnrs:
            out["val_psnr"] = float(np.mean(psnrs))
            out["val_ssim"] = float(np.mean(ssims))
        if student_data is not None and student_data.val_count:
            piqe_in, piqe_out = [], []
            for item in student_data.val_items():
                y = torch.from_numpy(item["degraded"][None])
                x_hat = state.gen.run_test_time(y)[0].numpy()
                piqe_in.append(iqa.piqe(item["degraded"]))
                piqe_out.append(iqa.piqe(x_hat))
            out["val_piqe_degraded"] = float(np.mean(piqe_in))
            out["val_piqe_restored"] = float(np.mean(piqe_out))
    state.gen.train()
    return out


def train(cfg, state=None, log_fh=None, verbose=False, stop_after=None):
    """Run (or continue) training; returns (state, logs).

    logs is {"iterations": [per-iteration records], "epochs": [per-epoch
    validation records]} covering the iterations executed by this call.
    `stop_after` pauses the run once that many total iterations have been
    taken (checkpoint/resume keeps going bit-identically).
    """
    validate_config(cfg)
    if state is None:
        state = build_state(cfg)

    teacher_data = FrameDataset(load_manifest(cfg.teacher_manifest),
                                with_clean=True, with_params=True,
                                val_count=cfg.val_count)
    student_data = None
    if cfg.mode == "real_atm":
        student_view = load_manifest(cfg.student_manifest)
        student_data = FrameDataset(student_view, with_clean=False,
                                    with_params=False, val_count=cfg.val_count)

    iter_log, epoch_log = [], []
    total = cfg.total_iterations
    ckpt_dir = None
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        ckpt_dir = os.path.join(cfg.out_dir, "checkpoints")
        os.makedirs(ckpt_dir, exist_ok=True)

    while state.iteration < total and (stop_after is None
                                        or state.iteration < stop_after):
        i = state.iteration
        seed_t, seed_s, seed_d, seed_g = _iter_seeds(cfg, i)
        lr = lr_at(i, total, cfg.lr_init, cfg.lr_final)
        _set_lr(state, lr)

        batch_t = teacher_data.sample_batch(
            cfg.batch_size, cfg.crop_size, np.random.default_rng(seed_t))
        batch_s = None
        if student_data is not None:
            batch_s = student_data.sample_batch(
                cfg.batch_size, cfg.crop_size, np.random.default_rng(seed_s))

        rep = discrimination_step(state, batch_t, batch_s, noise_seed=seed_d)
        gen_rep = generation_step(state, batch_t, batch_s, noise_seed=seed_g)
        gen_rep.dis_T, gen_rep.dis_S = rep.dis_T, rep.dis_S
        gen_rep.total_dis = rep.total_dis

        record = {"iteration": i, "lr": lr}
        record.update(gen_rep.as_dict())
        iter_log.append(record)
        if log_fh is not None:
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")
        if verbose and (i % 50 == 0 or i + 1 == total):
            print(f"iter {i:6d}  lr {lr:.3e}  total_gen {record['total_gen']:.4f}  "
                  f"total_dis {record['total_dis']:.4f}")

        state.iteration += 1
        if state.iteration % cfg.iters_per_epoch == 0:
            epoch = state.iteration // cfg.iters_per_epoch
            metrics = {"epoch": epoch, "iteration": state.iteration}
            metrics.update(evaluate_state(state, teacher_data, student_data))
            epoch_log.append(metrics)
            if verbose:
                shown = {k: round(v, 4) for k, v in metrics.items()
                         if k not in ("epoch", "iteration")}
                print(f"epoch {epoch:4d} validation: {shown}")
            if ckpt_dir and (epoch % cfg.checkpoint_every == 0
                             or state.iteration == total):
                save_checkpoint(state, os.path.join(ckpt_dir, f"epoch_{epoch:04d}.pt"))
                save_checkpoint(state, os.path.join(ckpt_dir, "latest.pt"))

    return state, {"iterations": iter_log, "epochs": epoch_log}


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------

def save_checkpoint(state, path):
    """Single-file archive; shared parameter groups are stored once (the
    generator is one module, the discriminators keep their shared middle
    block as one submodule)."""
    payload = {
        "schema": CHECKPOINT_SCHEMA,
        "config": config_to_dict(state.config),
        "iteration": state.iteration,
        "models": {
            "generator": state.gen.state_dict(),
            "discriminators": state.disc.state_dict(),
            "rnet": state.rnet.state_dict(),
            "features": state.feat.state_dict(),
        },
        "optimizers": {
            "gen": state.opt_gen.state_dict(),
            "dis": state.opt_dis.state_dict(),
        },
        # all randomness is derived from (seed, iteration), so this is the
        # complete RNG state
        "rng": {"seed": state.config.seed, "iteration": state.iteration},
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path):
    payload = torch.load(path, map_location="cpu", weights_only=True)
    schema = payload.get("schema")
    if schema != CHECKPOINT_SCHEMA:
        raise SchemaError(
            f"checkpoint schema {schema!r} unsupported (expected {CHECKPOINT_SCHEMA})")
    cfg = config_from_dict(payload["config"])
    state = build_state(cfg)
    state.gen.load_state_dict(payload["models"]["generator"])
    state.disc.load_state_dict(payload["models"]["discriminators"])
    state.rnet.load_state_dict(payload["models"]["rnet"])
    state.feat.load_state_dict(payload["models"]["features"])
    state.opt_gen.load_state_dict(payload["optimizers"]["gen"])
    state.opt_dis.load_state_dict(payload["optimizers"]["dis"])
    state.iteration = int(payload["iteration"])
    return state


def restore_directory(state, input_dir, out_dir):
    """Test-time restoration of every PNG in input_dir; per-file failures are
    collected and the run continues. Returns (restored names, errors)."""
    os.makedirs(out_dir, exist_ok=True)
    state.gen.eval()
    done, errors = [], []
    with torch.no_grad():
        for name in list_pngs(input_dir):
            try:
                y = load_png(os.path.join(input_dir, name))
                x_hat = state.gen.run_test_time(torch.from_numpy(y[None]))[0]
                save_png(os.path.join(out_dir, name), x_hat.numpy())
                done.append(name)
            except Exception as exc:   # noqa: BLE001 - per-file isolation
                errors.append(f"{name}: {exc}")
    state.gen.train()
    return done, errors
