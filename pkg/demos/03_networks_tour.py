"""Tour of the learnable components and their sharing structure.

Traces tensor shapes through encoder -> latent -> decoder/trunk/estimator,
demonstrates the dynamic-filter identities, and prints the parameter-group
sharing report that the teacher-student transfer relies on.

Run:  python3 demos/03_networks_tour.py
"""

import torch

from turbmit import nets

torch.manual_seed(0)

gen = nets.Generator(width=32)
disc = nets.DiscriminatorPair(width=32)
rnet = nets.ReproduceNet(width=32)

y = torch.rand(1, 3, 64, 64)
post = gen.encode(y)
print(f"degraded frame {tuple(y.shape)} -> posterior mu {tuple(post.mu.shape)}")

c_train = nets.sample_latent(post, "train", torch.Generator().manual_seed(1))
c_test = nets.sample_latent(post, "test")
print(f"latent sample (train) {tuple(c_train.shape)}; "
      f"test-time latent == posterior mean: {torch.equal(c_test, post.mu)}")

print(f"decoder reconstruction: {tuple(gen.decode(c_train).shape)}")
print(f"restored frame:         {tuple(gen.restore(y, c_train).shape)}")
print(f"degradation estimate:   {tuple(gen.estimate_params(c_train).shape)}")
print(f"reproduce net output:   {tuple(rnet(gen.restore(y, c_train)).shape)}")
for size in (64, 160):
    patch = disc(torch.rand(1, 3, size, size), "teacher")
    print(f"discriminator on {size}x{size}: patch map {tuple(patch.shape)}")

# dynamic filtering: spatial-all-ones x channel-center-delta is the identity
x = torch.randn(1, 4, 6, 6)
spatial = torch.ones(1, 9, 6, 6)
channel = torch.zeros(1, 4, 9)
channel[:, :, 4] = 1.0
print(f"\nddf identity kernel max |out - x|: "
      f"{float((nets.ddf_apply(x, spatial, channel) - x).abs().max()):.1e}")

print("\nparameter-group sharing report:")
for name, entry in nets.sharing_report(gen, disc, rnet).items():
    print(f"  {name:28s} {entry['flag']:18s} {entry['num_params']:7d} params")

# zero trunk == identity restoration (the global residual)
with torch.no_grad():
    for p in gen.trunk.parameters():
        p.zero_()
print(f"\nzero-weight trunk restores the input exactly: "
      f"{torch.equal(gen.restore(y, c_test), y)}")
