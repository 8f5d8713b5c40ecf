"""Learnable networks: shared generator, paired discriminators, reproduce net.

The generator bundles four sub-networks operating on unit-interval frames:

* encoder   — 5 convs (ReLU), one stride-2 downsampling after the first conv;
              final conv emits 32 channels split into the latent posterior
              (mu, logvar), 16 channels each at half resolution.
* decoder   — 5 convs (ReLU), nearest upsampling after the first conv; maps a
              latent sample back to a frame (the VAE reconstruction path).
* trunk     — the restoration path: one conv, 8 dynamic-filter bottleneck
              blocks, two convs, global residual onto the input, clipped to
              [0, 1]. Conditioned on the latent code by channel concatenation
              (latent upsampled x2, nearest).
* estimator — 2 convs (LeakyReLU) predicting the 2-channel degradation map
              from the latent code, softplus output.

One generator instance serves both the teacher and the student path; that
full sharing is the first knowledge-transfer mechanism. The discriminators
are 11 spectrally normalized convs each (LeakyReLU, stride 2 at layers
1/3/5/7/9, sigmoid patch output); conv layers 6-9 are one shared parameter
group between teacher and student (second mechanism). A single reproduce
net (5 convs + residual) regenerates the degraded frame from a restored one
and serves both paths (third mechanism).
"""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils import spectral_norm

LATENT_CHANNELS = 16
DDF_KERNEL = 3
LEAKY_SLOPE = 0.2
LOGVAR_CLAMP = 10.0
SHARED_DISC_LAYERS = (6, 7, 8, 9)    # 1-based conv indices, per-role sharing
MIN_DISC_INPUT = 32


class LatentPosterior:
    """Per-pixel diagonal Gaussian over the latent code (mu, logvar)."""

    def __init__(self, mu, logvar):
        self.mu = mu
        self.logvar = torch.clamp(logvar, -LOGVAR_CLAMP, LOGVAR_CLAMP)


def sample_latent(post, mode="train", generator=None):
    """Reparameterized sample in train mode; the posterior mean at test time."""
    if mode == "test":
        return post.mu
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'test', got {mode!r}")
    eps = torch.empty_like(post.mu).normal_(generator=generator)
    return post.mu + torch.exp(0.5 * post.logvar) * eps


def ddf_apply(x, spatial_filters, channel_filters):
    """Decoupled dynamic filtering with reflective boundary.

    out(ch, p) = sum_o spatial(p, o) * channel(ch, o) * x(ch, p + o)
    over the k x k offsets o, with x (B,C,H,W), spatial_filters (B,k*k,H,W)
    and channel_filters (B,C,k*k). Taps are enumerated row-major.
    """
    if x.dim() != 4:
        raise ValueError(f"x must be (B,C,H,W), got {tuple(x.shape)}")
    b, c, h, w = x.shape
    k2 = spatial_filters.shape[1] if spatial_filters.dim() == 4 else -1
    k = int(round(math.sqrt(max(k2, 0))))
    if k2 <= 0 or k * k != k2 or k % 2 == 0:
        raise ValueError(f"spatial_filters must carry an odd k*k tap axis, got {k2}")
    if tuple(spatial_filters.shape) != (b, k2, h, w):
        raise ValueError(
            f"spatial_filters shape {tuple(spatial_filters.shape)} != {(b, k2, h, w)}")
    if tuple(channel_filters.shape) != (b, c, k2):
        raise ValueError(
            f"channel_filters shape {tuple(channel_filters.shape)} != {(b, c, k2)}")
    pad = k // 2
    xp = F.pad(x, (pad, pad, pad, pad), mode="reflect")
    patches = xp.unfold(2, k, 1).unfold(3, k, 1)            # (B,C,H,W,k,k)
    patches = patches.reshape(b, c, h, w, k2)
    return torch.einsum("bchwo,bco,bohw->bchw",
                        patches, channel_filters, spatial_filters)


class DDFBottleneck(nn.Module):
    """1x1 reduce -> dynamic filtering -> 1x1 expand, with residual.

    Both filter branches are predicted from the block input: the spatial
    branch with a 1x1 conv, the channel branch with global average pooling
    followed by a 2-layer transform.
    """

    def __init__(self, width, kernel=DDF_KERNEL):
        super().__init__()
        self.kernel = kernel
        mid = max(width // 4, 4)
        hidden = max(width // 4, 8)
        self.mid = mid
        self.reduce = nn.Conv2d(width, mid, 1)
        self.spatial_gen = nn.Conv2d(width, kernel * kernel, 1)
        self.channel_fc1 = nn.Linear(width, hidden)
        self.channel_fc2 = nn.Linear(hidden, mid * kernel * kernel)
        self.expand = nn.Conv2d(mid, width, 1)

    def forward(self, z):
        b = z.shape[0]
        r = F.relu(self.reduce(z))
        sp = self.spatial_gen(z)
        ch = self.channel_fc2(F.relu(self.channel_fc1(z.mean(dim=(2, 3)))))
        ch = ch.view(b, self.mid, self.kernel * self.kernel)
        out = F.relu(ddf_apply(r, sp, ch))
        return z + self.expand(out)


class Encoder(nn.Module):
    def __init__(self, width=64):
        super().__init__()
        self.conv1 = nn.Conv2d(3, width, 3, 1, 1)
        self.conv2 = nn.Conv2d(width, width, 3, 2, 1)   # the downsampling layer
        self.conv3 = nn.Conv2d(width, width, 3, 1, 1)
        self.conv4 = nn.Conv2d(width, width, 3, 1, 1)
        self.conv5 = nn.Conv2d(width, 2 * LATENT_CHANNELS, 3, 1, 1)

    def forward(self, y):
        if y.shape[-1] % 2 or y.shape[-2] % 2:
            raise ValueError(f"spatial dims must be even, got {tuple(y.shape[-2:])}")
        h = F.relu(self.conv1(y))
        h = F.relu(self.conv2(h))
        h = F.relu(self.conv3(h))
        h = F.relu(self.conv4(h))
        out = self.conv5(h)
        mu, logvar = torch.chunk(out, 2, dim=1)
        return LatentPosterior(mu, logvar)


class Decoder(nn.Module):
    def __init__(self, width=64):
        super().__init__()
        self.conv1 = nn.Conv2d(LATENT_CHANNELS, width, 3, 1, 1)
        self.conv2 = nn.Conv2d(width, width, 3, 1, 1)
        self.conv3 = nn.Conv2d(width, width, 3, 1, 1)
        self.conv4 = nn.Conv2d(width, width, 3, 1, 1)
        self.conv5 = nn.Conv2d(width, 3, 3, 1, 1)

    def forward(self, c):
        h = F.relu(self.conv1(c))
        h = F.interpolate(h, scale_factor=2, mode="nearest")  # upsample after conv1
        h = F.relu(self.conv2(h))
        h = F.relu(self.conv3(h))
        h = F.relu(self.conv4(h))
        return self.conv5(h)


class RestorationTrunk(nn.Module):
    def __init__(self, width=64, n_blocks=8):
        super().__init__()
        self.head = nn.Conv2d(3 + LATENT_CHANNELS, width, 3, 1, 1)
        self.blocks = nn.ModuleList(DDFBottleneck(width) for _ in range(n_blocks))
        self.tail1 = nn.Conv2d(width, width, 3, 1, 1)
        self.tail2 = nn.Conv2d(width, 3, 3, 1, 1)
        # start from the identity restoration (global residual dominates)
        nn.init.zeros_(self.tail2.weight)
        nn.init.zeros_(self.tail2.bias)

    def forward(self, y, c):
        if tuple(c.shape[-2:]) != (y.shape[-2] // 2, y.shape[-1] // 2):
            raise ValueError(
                f"latent {tuple(c.shape[-2:])} must be input dims / 2 of {tuple(y.shape[-2:])}")
        cu = F.interpolate(c, scale_factor=2, mode="nearest")
        h = F.relu(self.head(torch.cat([y, cu], dim=1)))
        for block in self.blocks:
            h = block(h)
        h = F.relu(self.tail1(h))
        return torch.clamp(y + self.tail2(h), 0.0, 1.0)


class ParamEstimator(nn.Module):
    def __init__(self, width=64):
        super().__init__()
        self.conv1 = nn.Conv2d(LATENT_CHANNELS, width, 3, 1, 1)
        self.conv2 = nn.Conv2d(width, 2, 3, 1, 1)

    def forward(self, c):
        h = F.leaky_relu(self.conv1(c), LEAKY_SLOPE)
        return F.softplus(self.conv2(h))


class Generator(nn.Module):
    """Encoder + decoder + restoration trunk + degradation-parameter estimator.

    A single instance is used by both the teacher and the student path: the
    module itself is the fully shared parameter group.
    """

    def __init__(self, width=64, n_blocks=8):
        super().__init__()
        self.width = width
        self.encoder = Encoder(width)
        self.decoder = Decoder(width)
        self.trunk = RestorationTrunk(width, n_blocks)
        self.estimator = ParamEstimator(width)

    def encode(self, y):
        return self.encoder(y)

    def decode(self, c):
        return self.decoder(c)

    def restore(self, y, c):
        return self.trunk(y, c)

    def estimate_params(self, c):
        return self.estimator(c)

    def run_test_time(self, y):
        """Inference path: encode, take the posterior mean, restore."""
        post = self.encode(y)
        return self.restore(y, sample_latent(post, mode="test"))


def _sn_conv(in_c, out_c, stride):
    return spectral_norm(nn.Conv2d(in_c, out_c, 3, stride, 1))


def _disc_layer_plan(w):
    # (in, out, stride); stride 2 at layers 1, 3, 5, 7, 9
    return [
        (3, w, 2), (w, w, 1),
        (w, 2 * w, 2), (2 * w, 2 * w, 1),
        (2 * w, 4 * w, 2), (4 * w, 4 * w, 1),
        (4 * w, 4 * w, 2), (4 * w, 4 * w, 1),
        (4 * w, 4 * w, 2), (4 * w, 2 * w, 1),
        (2 * w, 1, 1),
    ]


class DiscriminatorPair(nn.Module):
    """Teacher and student discriminators with conv layers 6-9 shared.

    Each role runs 11 spectrally normalized convs with LeakyReLU and a
    sigmoid patch output. The shared middle block is stored once, so the
    layer 6-9 identity between roles holds by construction and survives
    checkpointing.
    """

    def __init__(self, width=64):
        super().__init__()
        self.width = width
        plan = _disc_layer_plan(width)
        self.teacher_front = nn.ModuleList(_sn_conv(*p) for p in plan[:5])
        self.student_front = nn.ModuleList(_sn_conv(*p) for p in plan[:5])
        self.shared_mid = nn.ModuleList(_sn_conv(*p) for p in plan[5:9])
        self.teacher_back = nn.ModuleList(_sn_conv(*p) for p in plan[9:])
        self.student_back = nn.ModuleList(_sn_conv(*p) for p in plan[9:])

    def forward(self, x, role):
        if role == "teacher":
            front, back = self.teacher_front, self.teacher_back
        elif role == "student":
            front, back = self.student_front, self.student_back
        else:
            raise ValueError(f"role must be 'teacher' or 'student', got {role!r}")
        if min(x.shape[-2:]) < MIN_DISC_INPUT:
            raise ValueError(
                f"discriminator input must be >= {MIN_DISC_INPUT}px, got {tuple(x.shape[-2:])}")
        h = x
        for conv in front:
            h = F.leaky_relu(conv(h), LEAKY_SLOPE)
        for conv in self.shared_mid:
            h = F.leaky_relu(conv(h), LEAKY_SLOPE)
        h = F.leaky_relu(back[0](h), LEAKY_SLOPE)
        return torch.sigmoid(back[1](h))

    def role_parameters(self, role):
        front = self.teacher_front if role == "teacher" else self.student_front
        back = self.teacher_back if role == "teacher" else self.student_back
        mods = list(front) + list(self.shared_mid) + list(back)
        for m in mods:
            yield from m.parameters()


class ReproduceNet(nn.Module):
    """Small net regenerating the degraded frame from the restored one."""

    def __init__(self, width=32):
        super().__init__()
        self.width = width
        self.conv1 = nn.Conv2d(3, width, 3, 1, 1)
        self.conv2 = nn.Conv2d(width, width, 3, 1, 1)
        self.conv3 = nn.Conv2d(width, width, 3, 1, 1)
        self.conv4 = nn.Conv2d(width, width, 3, 1, 1)
        self.conv5 = nn.Conv2d(width, 3, 3, 1, 1)
        nn.init.zeros_(self.conv5.weight)
        nn.init.zeros_(self.conv5.bias)

    def forward(self, x_hat):
        h = F.relu(self.conv1(x_hat))
        h = F.relu(self.conv2(h))
        h = F.relu(self.conv3(h))
        h = F.relu(self.conv4(h))
        return torch.clamp(x_hat + self.conv5(h), 0.0, 1.0)


def _count(params):
    return sum(p.numel() for p in params)


def sharing_report(gen, disc, rnet):
    """Enumerate parameter groups with their sharing flags."""
    return {
        "generator": {
            "flag": "fully_shared", "num_params": _count(gen.parameters())},
        "rnet": {
            "flag": "fully_shared", "num_params": _count(rnet.parameters())},
        "disc.shared.layers_6_9": {
            "flag": "partially_shared",
            "num_params": _count(disc.shared_mid.parameters())},
        "disc.teacher.layers_1_5": {
            "flag": "private", "num_params": _count(disc.teacher_front.parameters())},
        "disc.teacher.layers_10_11": {
            "flag": "private", "num_params": _count(disc.teacher_back.parameters())},
        "disc.student.layers_1_5": {
            "flag": "private", "num_params": _count(disc.student_front.parameters())},
        "disc.student.layers_10_11": {
            "flag": "private", "num_params": _count(disc.student_back.parameters())},
    }
