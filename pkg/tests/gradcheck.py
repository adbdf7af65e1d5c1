"""Finite-difference oracle for autodiff primitives (float64, central differences)."""
import numpy as np

from cfmsr import autodiff as ad

H = 1e-4
TOL = 1e-3


def rel_err(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


def check(build, inputs: dict, rng: np.random.Generator, n_coords: int = 20, h: float = H):
    """Compare reverse-mode grads of ``<build(**vars), C>`` with central differences.

    Returns the worst relative error over ``n_coords`` random coordinates of
    every input (all coordinates when an input has fewer).
    """
    inputs = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    leaves = {k: ad.leaf(v, k) for k, v in inputs.items()}
    out = build(**leaves)
    cot = rng.standard_normal(out.value.shape)
    ad.backward(out, cot)

    def loss():
        return float(np.sum(build(**{k: ad.leaf(v) for k, v in inputs.items()}).value * cot))

    worst = 0.0
    for k, arr in inputs.items():
        g = leaves[k].grad
        assert g is not None and g.shape == arr.shape, k
        flat = arr.reshape(-1)
        coords = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
        for i in coords:
            old = flat[i]
            flat[i] = old + h
            fp = loss()
            flat[i] = old - h
            fm = loss()
            flat[i] = old
            worst = max(worst, rel_err(g.reshape(-1)[i], (fp - fm) / (2 * h)))
    return worst


def primitive_cases(rng: np.random.Generator):
    """(name, build, inputs) for every differentiable primitive."""
    r = rng.standard_normal
    x4 = r((2, 6, 6, 4))
    return [
        ("add", lambda a, b: ad.add(a, b), {"a": r((3, 5)), "b": r((3, 5))}),
        ("add_broadcast", lambda a, b: ad.add(a, b), {"a": r((2, 3, 4)), "b": r((1, 1, 4))}),
        ("mul", lambda a, b: ad.mul(a, b), {"a": r((3, 5)), "b": r((3, 5))}),
        ("scale", lambda a: ad.scale(a, 0.37), {"a": r((4, 6))}),
        ("silu", lambda a: ad.silu(a), {"a": 2 * r((5, 7))}),
        ("tanh", lambda a: ad.tanh(a), {"a": r((5, 7))}),
        ("reshape", lambda a: ad.reshape(a, (6, 4)), {"a": r((2, 3, 4))}),
        ("transpose", lambda a: ad.transpose(a, (2, 0, 1)), {"a": r((2, 3, 4))}),
        ("concat", lambda a, b: ad.concat([a, b], axis=-1), {"a": r((2, 3, 4)), "b": r((2, 3, 2))}),
        ("dense", lambda x, w, b: ad.dense(x, w, b), {"x": r((4, 5)), "w": r((5, 3)), "b": r(3)}),
        ("dense_3d", lambda x, w, b: ad.dense(x, w, b), {"x": r((2, 4, 5)), "w": r((5, 3)), "b": r(3)}),
        ("matmul", lambda a, b: ad.matmul(a, b), {"a": r((2, 3, 4)), "b": r((2, 4, 5))}),
        ("softmax", lambda a: ad.softmax(a, axis=-1), {"a": r((3, 6))}),
        ("conv3x3", lambda x, w, b: ad.conv2d(x, w, b), {"x": x4, "w": r((3, 3, 4, 5)), "b": r(5)}),
        ("conv3x3_stride2", lambda x, w, b: ad.conv2d(x, w, b, stride=2),
         {"x": x4, "w": r((3, 3, 4, 3)), "b": r(3)}),
        ("conv1x1", lambda x, w, b: ad.conv2d(x, w, b), {"x": x4, "w": r((1, 1, 4, 3)), "b": r(3)}),
        ("group_norm", lambda x, g, b: ad.group_norm(x, g, b, groups=2),
         {"x": 3 * r((2, 4, 4, 6)) + 1, "g": r(6), "b": r(6)}),
        ("upsample2x", lambda a: ad.upsample_nearest2x(a), {"a": r((2, 3, 3, 4))}),
    ]
