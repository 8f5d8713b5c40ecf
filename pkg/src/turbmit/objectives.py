"""Training objectives for the teacher-student restoration system.

Teacher terms: pixel+perceptual distance, adversarial generation loss,
reproduce-match loss, VAE loss (closed-form KL to the standard normal plus
reconstruction MSE), and the degradation-parameter loss. Student terms:
adversarial, reproduce-match and VAE only — nothing on the student side
ever touches a ground-truth clean frame.

All squared-norm losses are means, not sums, so the lambda weights are
resolution independent. The generation objective is

    total = [dist + l1*gen_T + l2*rm_T + l3*vae_T + l4*degrad]
          + [l1*gen_S + l5*rm_S + l3*vae_S]

and the discrimination objective is dis_T + dis_S.
"""

import dataclasses
import json
import math

import torch
import torch.nn.functional as F

PROB_EPS = 1e-6   # clamp applied on the harmful side of each log term


@dataclasses.dataclass
class LossWeights:
    l1: float = 1e-3    # adversarial generation (teacher and student)
    l2: float = 5e-1    # teacher reproduce match
    l3: float = 1e-1    # VAE (teacher and student)
    l4: float = 2e-1    # degradation parameters
    l5: float = 2.5e-1  # student reproduce match


@dataclasses.dataclass
class LossReport:
    """Named scalar for every objective term plus the weighted totals."""

    dist: float = 0.0
    gen_T: float = 0.0
    dis_T: float = 0.0
    rm_T: float = 0.0
    vae_T: float = 0.0
    degrad: float = 0.0
    gen_S: float = 0.0
    dis_S: float = 0.0
    rm_S: float = 0.0
    vae_S: float = 0.0
    total_gen: float = 0.0
    total_dis: float = 0.0

    def as_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(self.as_dict(), sort_keys=True)


def _mse(a, b, what="inputs"):
    if a.shape != b.shape:
        raise ValueError(f"{what} shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return torch.mean((a - b) ** 2)


def _check_prob(d, name):
    vals = d.detach()
    if not torch.isfinite(vals).all():
        raise ValueError(f"{name} contains non-finite values")
    lo, hi = float(vals.min()), float(vals.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got range [{lo:.4g}, {hi:.4g}]")


def dist_loss(x, x_hat, feat=None):
    """Pixel MSE plus feature-space MSE summed over the extractor's scales."""
    loss = _mse(x, x_hat, "frames")
    if feat is not None:
        for fx, fh in zip(feat(x), feat(x_hat)):
            loss = loss + _mse(fx, fh, "features")
    return loss


def gen_adv_loss(d_fake):
    """mean(-log D(fake)): minimized when the discriminator is fooled."""
    _check_prob(d_fake, "d_fake")
    return torch.mean(-torch.log(torch.clamp(d_fake, min=PROB_EPS)))


def dis_adv_loss(d_real, d_fake):
    """mean(-log D(real)) + mean(-log(1 - D(fake)))."""
    _check_prob(d_real, "d_real")
    _check_prob(d_fake, "d_fake")
    real_term = -torch.log(torch.clamp(d_real, min=PROB_EPS))
    fake_term = -torch.log(torch.clamp(1.0 - d_fake, min=PROB_EPS))
    return torch.mean(real_term) + torch.mean(fake_term)


def rm_loss(y, y_hat):
    """Reproduce-match loss: MSE between true and regenerated degraded frames."""
    return _mse(y, y_hat, "frames")


def kl_standard_normal(post):
    """Closed-form KL(q || N(0, I)) for a diagonal Gaussian, per element."""
    mu, logvar = post.mu, post.logvar
    if not (torch.isfinite(mu).all() and torch.isfinite(logvar).all()):
        raise ValueError("posterior contains non-finite values")
    return 0.5 * torch.mean(mu**2 + torch.exp(logvar) - logvar - 1.0)


def vae_loss(post, y, y_recon):
    """KL fidelity term plus decoder reconstruction MSE."""
    return kl_standard_normal(post) + _mse(y, y_recon, "frames")


def degrad_loss(phi, phi_hat):
    """MSE between true and estimated degradation maps (both channels)."""
    return _mse(phi, phi_hat, "degradation maps")


def total_gen(teacher, student=None, w=None):
    """Combine the generation-side terms into the full objective.

    `teacher` carries dist/gen/rm/vae/degrad, `student` (optional) carries
    gen/rm/vae. Returns (total tensor, LossReport); the report's
    discriminator fields are left at zero for the discrimination step to
    fill in.
    """
    w = w or LossWeights()

    def val(t):
        return float(t.detach()) if torch.is_tensor(t) else float(t)

    loss_t = (teacher["dist"] + w.l1 * teacher["gen"] + w.l2 * teacher["rm"]
              + w.l3 * teacher["vae"] + w.l4 * teacher["degrad"])
    total = loss_t
    report = LossReport(
        dist=val(teacher["dist"]), gen_T=val(teacher["gen"]),
        rm_T=val(teacher["rm"]), vae_T=val(teacher["vae"]),
        degrad=val(teacher["degrad"]),
    )
    if student is not None:
        loss_s = w.l1 * student["gen"] + w.l5 * student["rm"] + w.l3 * student["vae"]
        total = total + loss_s
        report.gen_S = val(student["gen"])
        report.rm_S = val(student["rm"])
        report.vae_S = val(student["vae"])
    report.total_gen = val(total)
    return total, report


def total_dis(dis_t, dis_s=None):
    """Discrimination objective: teacher plus student adversarial losses."""
    if dis_s is None:
        return dis_t if torch.is_tensor(dis_t) else torch.as_tensor(dis_t)
    return dis_t + dis_s


class RandomFeatureExtractor(torch.nn.Module):
    """Frozen random-conv features at 1/4 and 1/8 scale.

    Stands in for a pretrained perceptual backbone: the weights are drawn
    once from a fixed seed, stored as buffers (so no optimizer can ever see
    them), and never change. An externally trained backbone can be dropped
    in by passing its conv weights via `weights`.
    """

    def __init__(self, seed=0, width=24, weights=None):
        super().__init__()
        if weights is None:
            g = torch.Generator().manual_seed(int(seed))

            def draw(shape, fan_in):
                return torch.randn(shape, generator=g) * math.sqrt(2.0 / fan_in)

            weights = {
                "w1": draw((width, 3, 3, 3), 3 * 9),
                "w2": draw((width, width, 3, 3), width * 9),
                "w3": draw((width, width, 3, 3), width * 9),
            }
        for name in ("w1", "w2", "w3"):
            self.register_buffer(name, torch.as_tensor(weights[name]).float())

    def forward(self, x):
        h = F.leaky_relu(F.conv2d(x, self.w1, stride=2, padding=1), 0.2)
        f4 = F.leaky_relu(F.conv2d(h, self.w2, stride=2, padding=1), 0.2)
        f8 = F.leaky_relu(F.conv2d(f4, self.w3, stride=2, padding=1), 0.2)
        return [f4, f8]
