"""Central-difference gradient checking for every differentiable primitive.

Used both by the test suite and by the ``gradcheck`` CLI subcommand. All
checks run in float64 with step 1e-5; an op passes when the worst-case
relative error against central differences is <= 1e-4.
"""

import numpy as np

from . import ops
from .tensor import Tensor, backward

STEP = 1e-5
TOLERANCE = 1e-4


def _loss_weights(rng, shape):
    # Fixed random projection turns any op output into a scalar loss.
    return rng.standard_normal(shape)


def relative_error(analytic, numeric):
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float((diff / denom).max()) if diff.size else 0.0


def check_op(build, inputs, rng, step=STEP, skip=()):
    """Compare tape gradients of ``sum(w * build(*inputs))`` with central differences.

    ``inputs`` are float64 arrays. Indices in ``skip`` are treated as
    non-differentiable constants (batchnorm moving statistics) and are
    neither perturbed nor compared. Returns the worst relative error.
    """
    tensors = [Tensor(np.asarray(a, dtype=np.float64), requires_grad=True) for a in inputs]
    out = build(*tensors)
    w = _loss_weights(rng, out.shape)

    def scalar_loss(arrays):
        ts = [Tensor(a) for a in arrays]
        return float((build(*ts).data * w).sum())

    loss = Tensor((out.data * w).sum(), requires_grad=True, parents=(out,),
                  backward_fn=lambda g: out.accumulate_grad(g * w), op="loss")
    backward(loss)

    worst = 0.0
    arrays = [t.data.copy() for t in tensors]
    for k, t in enumerate(tensors):
        if k in skip:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = np.zeros_like(t.data)
        flat = arrays[k].reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = scalar_loss(arrays)
            flat[i] = orig - step
            down = scalar_loss(arrays)
            flat[i] = orig
            num_flat[i] = (up - down) / (2 * step)
        worst = max(worst, relative_error(analytic, numeric))
    return worst


def _random_conv_case(rng):
    n = int(rng.integers(1, 3))
    kh = int(rng.integers(1, 4))
    kw = int(rng.integers(1, 4))
    c = int(rng.integers(1, 4))
    f = int(rng.integers(1, 4))
    stride = int(rng.integers(1, 3))
    padding = "valid" if rng.random() < 0.5 else "same"
    h = int(rng.integers(kh, kh + 5))
    w = int(rng.integers(kw, kw + 5))
    x = rng.standard_normal((n, h, w, c))
    k = rng.standard_normal((kh, kw, c, f))
    return lambda xt, kt: ops.conv2d(xt, kt, stride=stride, padding=padding), [x, k]


def _random_pool_case(rng, mode):
    n = int(rng.integers(1, 3))
    c = int(rng.integers(1, 4))
    window = int(rng.integers(1, 4))
    stride = int(rng.integers(1, 3))
    padding = "valid" if rng.random() < 0.5 else "same"
    h = int(rng.integers(window, window + 5))
    w = int(rng.integers(window, window + 5))
    # Spread values so window maxima stay unique at the finite-difference step.
    x = rng.permutation(n * h * w * c).astype(np.float64).reshape(n, h, w, c)
    x += rng.uniform(-0.2, 0.2, x.shape)
    return lambda xt: ops.pool2d(xt, window, stride, mode, padding), [x]


def _random_batchnorm_case(rng):
    n = int(rng.integers(1, 3))
    h = int(rng.integers(1, 4))
    w = int(rng.integers(1, 4))
    c = int(rng.integers(1, 5))
    x = rng.standard_normal((n, h, w, c))
    beta = rng.standard_normal(c)
    mean = rng.standard_normal(c)
    var = rng.uniform(0.1, 2.0, c)
    return (
        lambda xt, bt, mt, vt: ops.batchnorm(xt, bt, mt, vt, eps=1e-3),
        [x, beta, mean, var],
        (2, 3),  # moving statistics are frozen constants, not parameters
    )


def _random_dense_case(rng):
    n = int(rng.integers(1, 5))
    d = int(rng.integers(1, 7))
    u = int(rng.integers(1, 6))
    return lambda xt, wt, bt: ops.dense(xt, wt, bt), [
        rng.standard_normal((n, d)),
        rng.standard_normal((d, u)),
        rng.standard_normal(u),
    ]


def _random_relu_case(rng):
    shape = tuple(int(rng.integers(1, 4)) for _ in range(4))
    x = rng.standard_normal(shape)
    x = np.where(np.abs(x) < 0.05, 0.5, x)  # keep clear of the kink
    return lambda xt: ops.relu(xt), [x]


def _random_softmax_case(rng):
    n = int(rng.integers(1, 5))
    k = int(rng.integers(2, 6))
    return lambda xt: ops.softmax(xt), [rng.standard_normal((n, k))]


def _random_flatten_concat_case(rng):
    n = int(rng.integers(1, 3))
    h = int(rng.integers(1, 4))
    w = int(rng.integers(1, 4))
    c1 = int(rng.integers(1, 4))
    c2 = int(rng.integers(1, 4))

    def build(a, b):
        return ops.flatten(ops.concat_channels([a, b]))

    return build, [rng.standard_normal((n, h, w, c1)), rng.standard_normal((n, h, w, c2))]


def _random_crossentropy_case(rng):
    # softmax -> clamp -> mean negative log-likelihood, the training composition
    from .train import categorical_crossentropy

    n = int(rng.integers(1, 5))
    k = 3
    onehot = np.eye(k)[rng.integers(0, k, n)]

    def build(logits):
        return categorical_crossentropy(ops.softmax(logits), onehot)

    return build, [rng.uniform(-2.0, 2.0, (n, k))]


CASE_BUILDERS = {
    "conv2d": _random_conv_case,
    "maxpool2d": lambda rng: _random_pool_case(rng, "max"),
    "avgpool2d": lambda rng: _random_pool_case(rng, "avg"),
    "batchnorm": _random_batchnorm_case,
    "dense": _random_dense_case,
    "relu": _random_relu_case,
    "softmax": _random_softmax_case,
    "flatten_concat": _random_flatten_concat_case,
    "crossentropy": _random_crossentropy_case,
}


def run_suite(shapes_per_op=20, seed=2024, ops_subset=None, report=None):
    """Gradient-check every primitive on randomized shapes.

    Returns {op name: worst relative error}. ``report`` (if given) receives
    one line per op.
    """
    results = {}
    for name, builder in CASE_BUILDERS.items():
        if ops_subset and name not in ops_subset:
            continue
        rng = np.random.default_rng([seed, len(name), *map(ord, name)])
        worst = 0.0
        for _ in range(shapes_per_op):
            case = builder(rng)
            build, inputs = case[0], case[1]
            skip = case[2] if len(case) > 2 else ()
            worst = max(worst, check_op(build, inputs, rng, skip=skip))
        results[name] = worst
        if report is not None:
            status = "ok" if worst <= TOLERANCE else "FAIL"
            report(f"{name:<16} max relative error {worst:.3e}  [{status}]")
    return results
