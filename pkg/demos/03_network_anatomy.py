"""Building the residual architecture at desk scale and full scale.

Shows the weighted-layer arithmetic ({2,3,5,2} -> 50 layers, {2,3,22,2} ->
101), the plain no-shortcut twin, deterministic He initialization, and the
binary checkpoint round trip.

Run:  python demos/03_network_anatomy.py
"""

import os
import tempfile

import numpy as np

from ldlnet import Network, NetworkSpec, init_weights, full_scale_spec
from ldlnet import checkpoint as ckpt_io

print("full-scale configurations (bottleneck blocks, 224x224):")
for depth in (50, 101):
    spec = full_scale_spec(depth)
    net = Network(spec)
    print(f"  {spec.block_counts} -> {net.weighted_layer_count()} weighted layers, "
          f"{net.parameter_count():,} parameters")

print("\ndesk-scale default (basic blocks, 32x32):")
spec = NetworkSpec()
net = Network(spec)
init_weights(net, seed=0)
print(f"  {spec.block_counts} blocks+1 per stage, widths {spec.stage_widths}, "
      f"{net.weighted_layer_count()} weighted layers, {net.parameter_count():,} parameters")

batch = np.random.default_rng(0).uniform(size=(4, 3, 32, 32)).astype(np.float32)
out = net.forward(batch, mode="eval")
print(f"  forward: logits {out.logits.shape}, features {out.features.shape}")
print(f"  distribution rows sum to {out.distribution.data.sum(axis=1)}")

plain = Network(NetworkSpec(skip_connections=False))
print(f"\nplain twin: same {plain.weighted_layer_count()} weighted layers, "
      f"{plain.parameter_count():,} parameters (no projection shortcuts)")

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "demo.ckpt")
    ckpt_io.save(ckpt_io.Checkpoint.from_network(net, iteration=7), path)
    loaded = ckpt_io.load(path)
    other = Network(loaded.spec)
    other.load_state_dict(loaded.state)
    same = all(np.array_equal(a.data, b.data)
               for (_, a), (_, b) in zip(net.named_parameters(), other.named_parameters()))
    print(f"\ncheckpoint round trip: {os.path.getsize(path):,} bytes, "
          f"bit-exact={same}, iteration={loaded.iteration}")
