"""The baseline convolutional feature extractor and its gradients.

The stack is four blocks of two same-padded 3x3 stride-1 convolutions
(32, 32 / 64, 64 / 128, 128 / 256, 256 filters), each convolution followed
by a leaky ReLU, each block closed by a 2x2 stride-2 max pool. A 200x200x3
input therefore flows

    (200,200,32) -> (100,100,32) -> (100,100,64) -> (50,50,64)
    -> (50,50,128) -> (25,25,128) -> (25,25,256) -> (12,12,256)

and flattens to a 36864-long feature vector, which either feeds the
sigmoid classification head (during training) or is handed to the
nearest-neighbour classifier (at inference).

Convolution is implemented as cross-correlation (no kernel flip) via
im2col + matrix product. All backward passes are exact gradients of the
forward maps and are validated against finite differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .tensor import DTYPE, he_normal, im2col

# Output channels of the eight convolution layers, in order. A max pool
# follows every second layer.
CONV_CHANNELS = (32, 32, 64, 64, 128, 128, 256, 256)
INPUT_SHAPE = (200, 200, 3)
FEATURE_DIM = 36864
NUM_CLASSES = 7
DEFAULT_LEAKY_SLOPE = 0.01


@dataclass
class ConvLayer:
    """3x3 convolution parameters: kernels (3,3,c_in,c_out), bias (c_out,)."""

    kernels: np.ndarray
    bias: np.ndarray

    @property
    def c_in(self) -> int:
        return self.kernels.shape[2]

    @property
    def c_out(self) -> int:
        return self.kernels.shape[3]

    def param_count(self) -> int:
        return self.kernels.size + self.bias.size


@dataclass
class DenseLayer:
    """Fully-connected parameters: weights (in_dim, out_dim), bias (out_dim,)."""

    weights: np.ndarray
    bias: np.ndarray

    def param_count(self) -> int:
        return self.weights.size + self.bias.size


@dataclass
class ModelParams:
    """Full model state: eight conv layers (pool after every pair) + head."""

    conv_layers: list[ConvLayer] = field(default_factory=list)
    head: DenseLayer | None = None
    leaky_slope: float = DEFAULT_LEAKY_SLOPE


def _conv2d_forward_patches(x: np.ndarray, layer: ConvLayer):
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeError(f"expected (H, W, C) input, got shape {x.shape}")
    h, w, c = x.shape
    if c != layer.c_in:
        raise ShapeError(f"input has {c} channels, layer expects {layer.c_in}")
    patches = im2col(x)
    kmat = layer.kernels.reshape(9 * layer.c_in, layer.c_out)
    out = patches @ kmat
    out += layer.bias
    return out.reshape(h, w, layer.c_out), patches


def conv2d_forward(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Same-padded stride-1 cross-correlation plus bias; (H,W,Cin)->(H,W,Cout)."""
    out, _ = _conv2d_forward_patches(x, layer)
    return out


def conv2d_backward(x: np.ndarray, layer: ConvLayer, dy: np.ndarray, patches: np.ndarray | None = None):
    """Gradients of conv2d_forward at cached input `x` for upstream `dy`.

    Returns (dx, dkernels, dbias). dbias[c] sums dy over spatial positions.
    `patches` may pass the im2col matrix already built by the forward pass;
    it is recomputed from `x` when omitted.
    """
    x = np.asarray(x)
    dy = np.asarray(dy)
    h, w, c = x.shape
    if dy.shape != (h, w, layer.c_out):
        raise ShapeError(f"dy shape {dy.shape} does not match output {(h, w, layer.c_out)}")
    dy_flat = dy.reshape(h * w, layer.c_out)
    if patches is None:
        patches = im2col(x)
    kmat = layer.kernels.reshape(9 * c, layer.c_out)

    dbias = dy.sum(axis=(0, 1))
    dkernels = (patches.T @ dy_flat).reshape(layer.kernels.shape)

    # scatter patch gradients back onto the padded input, then crop
    dpatches = (dy_flat @ kmat.T).reshape(h, w, 3, 3, c)
    dx_pad = np.zeros((h + 2, w + 2, c), dtype=dpatches.dtype)
    for ki in range(3):
        for kj in range(3):
            dx_pad[ki : ki + h, kj : kj + w] += dpatches[:, :, ki, kj]
    dx = dx_pad[1 : h + 1, 1 : w + 1]
    return dx, dkernels, dbias


def leaky_relu(x: np.ndarray, slope: float = DEFAULT_LEAKY_SLOPE) -> np.ndarray:
    """Elementwise f(v) = v for v >= 0 else slope * v."""
    x = np.asarray(x)
    return np.where(x >= 0, x, x * x.dtype.type(slope))


def leaky_relu_backward(x: np.ndarray, dy: np.ndarray, slope: float = DEFAULT_LEAKY_SLOPE) -> np.ndarray:
    """Gradient of leaky_relu at cached input `x`: dy scaled by 1 or slope."""
    x = np.asarray(x)
    dy = np.asarray(dy)
    if x.shape != dy.shape:
        raise ShapeError(f"dy shape {dy.shape} does not match input {x.shape}")
    return np.where(x >= 0, dy, dy * dy.dtype.type(slope))


def maxpool2_forward(x: np.ndarray):
    """2x2 stride-2 max pool; odd trailing row/column is dropped.

    Returns (pooled, argmax) where argmax holds, per output element, the
    row-major index 0..3 of the winning cell inside its 2x2 window (ties
    go to the smallest index).
    """
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeError(f"expected (H, W, C) input, got shape {x.shape}")
    h, w, c = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"spatial dimensions must be >= 2 to pool, got {(h, w)}")
    h2, w2 = h // 2, w // 2
    windows = (
        x[: 2 * h2, : 2 * w2]
        .reshape(h2, 2, w2, 2, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(h2, w2, 4, c)
    )
    argmax = windows.argmax(axis=2).astype(np.uint8)
    pooled = np.take_along_axis(windows, argmax[:, :, None, :], axis=2)[:, :, 0, :]
    return pooled, argmax


def maxpool2_backward(dy: np.ndarray, argmax: np.ndarray, input_shape) -> np.ndarray:
    """Route dy back to the recorded argmax positions; everywhere else 0."""
    dy = np.asarray(dy)
    h, w, c = input_shape
    h2, w2 = h // 2, w // 2
    if dy.shape != (h2, w2, c) or argmax.shape != (h2, w2, c):
        raise ShapeError(
            f"dy {dy.shape} / argmax {argmax.shape} do not match pooled shape {(h2, w2, c)}"
        )
    scattered = np.zeros((h2, w2, 4, c), dtype=dy.dtype)
    np.put_along_axis(scattered, argmax[:, :, None, :].astype(np.intp), dy[:, :, None, :], axis=2)
    dx = np.zeros((h, w, c), dtype=dy.dtype)
    dx[: 2 * h2, : 2 * w2] = (
        scattered.reshape(h2, w2, 2, 2, c).transpose(0, 2, 1, 3, 4).reshape(2 * h2, 2 * w2, c)
    )
    return dx


def flatten(x: np.ndarray) -> np.ndarray:
    """Row-major flatten of the final (12,12,256) pooling output to 36864."""
    x = np.asarray(x)
    if x.shape != (12, 12, 256):
        raise ShapeError(f"expected final pooling output (12, 12, 256), got {x.shape}")
    return x.reshape(-1).copy()


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, dtype-preserving."""
    z = np.asarray(z)
    out = np.empty_like(z, dtype=z.dtype if z.dtype.kind == "f" else np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def dense_sigmoid_head(f: np.ndarray, head: DenseLayer) -> np.ndarray:
    """Per-label probabilities sigma(W^T f + b); no softmax, labels overlap."""
    f = np.asarray(f)
    if f.ndim != 1 or f.shape[0] != head.weights.shape[0]:
        raise ShapeError(
            f"feature length {f.shape} does not match head input {head.weights.shape[0]}"
        )
    logits = f @ head.weights + head.bias
    return sigmoid(logits)


def build_extractor(rng: np.random.Generator, leaky_slope: float = DEFAULT_LEAKY_SLOPE) -> ModelParams:
    """Construct the full model, He-initialised kernels and zero biases.

    Kernel fan-in is 9 * c_in; head weights use fan-in 36864. The draw
    order (conv layers first, then head) is fixed, so one seed always
    yields identical parameters.
    """
    layers = []
    c_in = INPUT_SHAPE[2]
    for c_out in CONV_CHANNELS:
        kernels = he_normal(rng, 9 * c_in, 9 * c_in * c_out).reshape(3, 3, c_in, c_out)
        layers.append(ConvLayer(kernels=kernels, bias=np.zeros(c_out, dtype=DTYPE)))
        c_in = c_out
    weights = he_normal(rng, FEATURE_DIM, FEATURE_DIM * NUM_CLASSES).reshape(FEATURE_DIM, NUM_CLASSES)
    head = DenseLayer(weights=weights, bias=np.zeros(NUM_CLASSES, dtype=DTYPE))
    return ModelParams(conv_layers=layers, head=head, leaky_slope=leaky_slope)


def _conv_stack_forward(params: ModelParams, image: np.ndarray, cache: list | None):
    """Run the conv/pool stack and return the flattened feature vector.

    When `cache` is a list, per-layer inputs, pre-activations, pool argmax
    maps and shapes are appended in forward order for the backward pass.
    """
    x = np.asarray(image)
    if x.ndim != 3:
        raise ShapeError(f"expected (H, W, C) image, got shape {x.shape}")
    if not params.conv_layers or len(params.conv_layers) % 2 != 0:
        raise ShapeError("conv stack must hold an even, non-zero number of layers")
    if x.shape[2] != params.conv_layers[0].c_in:
        raise ShapeError(
            f"image has {x.shape[2]} channels, first layer expects {params.conv_layers[0].c_in}"
        )
    slope = params.leaky_slope
    for i, layer in enumerate(params.conv_layers):
        if cache is not None:
            z, patches = _conv2d_forward_patches(x, layer)
            cache.append(("conv", x, z, patches))
        else:
            z = conv2d_forward(x, layer)
        x = leaky_relu(z, slope)
        if i % 2 == 1:
            pre_pool_shape = x.shape
            x, argmax = maxpool2_forward(x)
            if cache is not None:
                cache.append(("pool", argmax, pre_pool_shape))
    return x.reshape(-1)


def extract_features(params: ModelParams, image: np.ndarray) -> np.ndarray:
    """Forward an image through the conv stack up to and including flatten.

    The feature length must match the head input width; for the standard
    extractor that pins the image to 200x200x3 and the output to 36864.
    """
    features = _conv_stack_forward(params, image, cache=None)
    if params.head is not None and features.shape[0] != params.head.weights.shape[0]:
        raise ShapeError(
            f"image produces {features.shape[0]} features, head expects {params.head.weights.shape[0]}"
        )
    return features


def model_forward(params: ModelParams, image: np.ndarray):
    """Full forward pass to per-label probabilities.

    Returns (probabilities, cache); pass the cache to model_backward.
    """
    cache: list = []
    features = _conv_stack_forward(params, image, cache)
    if features.shape[0] != params.head.weights.shape[0]:
        raise ShapeError(
            f"image produces {features.shape[0]} features, head expects {params.head.weights.shape[0]}"
        )
    p = dense_sigmoid_head(features, params.head)
    cache.append(("head", features))
    return p, cache


def model_backward(params: ModelParams, cache: list, dlogits: np.ndarray) -> list[np.ndarray]:
    """Backpropagate a gradient at the head logits through the whole model.

    Returns gradients ordered exactly as param_arrays(params). The fused
    sigmoid+BCE gradient (p - y) / n is the expected `dlogits`.
    """
    kind, features = cache[-1]
    assert kind == "head"
    dlogits = np.asarray(dlogits)
    grads_head_w = np.outer(features, dlogits)
    grads_head_b = dlogits.copy()
    dx = (params.head.weights @ dlogits).astype(features.dtype, copy=False)

    slope = params.leaky_slope
    conv_grads: list[tuple[np.ndarray, np.ndarray]] = []
    layer_idx = len(params.conv_layers) - 1
    for entry in reversed(cache[:-1]):
        if entry[0] == "pool":
            _, argmax, in_shape = entry
            dx = maxpool2_backward(dx.reshape(argmax.shape), argmax, in_shape)
        else:
            _, x_in, z, patches = entry
            dx = leaky_relu_backward(z, dx.reshape(z.shape), slope)
            dx, dk, db = conv2d_backward(x_in, params.conv_layers[layer_idx], dx, patches)
            conv_grads.append((dk, db))
            layer_idx -= 1
    grads: list[np.ndarray] = []
    for dk, db in reversed(conv_grads):
        grads.extend([dk, db])
    grads.extend([grads_head_w, grads_head_b])
    return grads


def param_arrays(params: ModelParams) -> list[np.ndarray]:
    """Trainable arrays in fixed order: (kernels, bias) per layer, then head."""
    arrays: list[np.ndarray] = []
    for layer in params.conv_layers:
        arrays.extend([layer.kernels, layer.bias])
    if params.head is not None:
        arrays.extend([params.head.weights, params.head.bias])
    return arrays


def layer_param_counts(params: ModelParams) -> list[int]:
    """Per-conv-layer trainable parameter counts, in architecture order."""
    return [layer.param_count() for layer in params.conv_layers]


def count_params(params: ModelParams) -> int:
    """Total trainable parameters of the conv stack (head counted separately)."""
    return sum(layer_param_counts(params))
