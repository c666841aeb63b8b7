"""Resampling generator noise as a defense against a gradient attack.

A convolutional GRFF is trained on MNIST digits.  The attacker builds
iterative least-likely-class examples against the kernels produced by one
noise draw N1.  Evaluated with N1 the attack succeeds; evaluated with a
fresh draw N2 the network sees different kernels and recovers part of its
accuracy.  Freezing the noise turns the model into an ordinary CNN with
cos/sin activations, where resampling is impossible.

Needs the optional ``mlxtend`` package for the bundled 5000-digit sample.
Takes a few minutes on one core.

Run: python demos/03_resampling_defense.py
"""

from grff.datasets import mnist_subset_from_mlxtend, split
from grff.model import build_image_network, freeze_noise
from grff.robustness import AttackConfig, robustness_protocol
from grff.training import TrainConfig, train_progressive

data = mnist_subset_from_mlxtend()
train, val, test = split(data, (0.7, 0.1, 0.2), seed=0)

config = TrainConfig(D_list=(16, 8), epochs=(3, 12), lr=3e-3, seed=0)
net = build_image_network(D_list=config.D_list, seed=0)
net, history = train_progressive(
    net, (train.X, train.y), (val.X, val.y), config,
    on_epoch=lambda r: print(f"epoch {r.epoch + 1:2d}  phase {r.phase}  val acc {r.val_acc:.4f}"))

X, y = test.X[:300], test.y[:300]
print("\n           eps  iters  clean   fixed N1  resampled N2")
for label, model in (("GRFF", net), ("CNN", freeze_noise(net, seed=0))):
    for eps in (4, 8, 12):
        r = robustness_protocol(model, X, y, AttackConfig(eps), seed=0)
        print(f"{label:<10s} {eps:3d}  {r.iterations:5d}  {r.acc0:.3f}   {r.acc1:.3f}     {r.acc2:.3f}")
