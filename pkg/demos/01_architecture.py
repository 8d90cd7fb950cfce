"""Walk a 200x200x3 input through the feature extractor and print the
layer table: activation shapes, activation sizes, and parameter counts."""

import numpy as np

from skullnet import nn
from skullnet.tensor import make_rng

params = nn.build_extractor(make_rng(0))

print(f"{'layer':28s} {'activation shape':>18s} {'act. size':>10s} {'params':>9s}")
x = make_rng(1).random((200, 200, 3)).astype(np.float32)
print(f"{'input':28s} {str(x.shape):>18s} {x.size:>10d} {0:>9d}")

pool_idx = 0
for i, layer in enumerate(params.conv_layers):
    x = nn.leaky_relu(nn.conv2d_forward(x, layer), params.leaky_slope)
    name = f"conv2d_{i + 1} (3x3, {layer.c_out} filters)"
    print(f"{name:28s} {str(x.shape):>18s} {x.size:>10d} {layer.param_count():>9d}")
    if i % 2 == 1:
        pool_idx += 1
        x, _ = nn.maxpool2_forward(x)
        name = f"maxpool2d_{pool_idx} (2x2 s2)"
        print(f"{name:28s} {str(x.shape):>18s} {x.size:>10d} {0:>9d}")

features = x.reshape(-1)
print(f"{'flatten':28s} {str(features.shape):>18s} {features.size:>10d} {0:>9d}")
print(f"\nconv stack total parameters: {nn.count_params(params):,}")
print(f"classification head (36864 -> 7): {params.head.param_count():,} parameters")
