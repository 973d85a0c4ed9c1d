"""Small numerical substrate shared by the trainable modules.

Matrices are plain ``float64`` numpy arrays. Randomness goes through
:class:`RngState`, a (seed, stream) pair backed by numpy's counter-based
Philox bit generator, so every draw is reproducible from its key.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    m = np.array(data, dtype=np.float64, ndmin=2)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if rows is not None and m.shape[0] != rows or cols is not None and m.shape[1] != cols:
        raise ShapeError(f"expected shape ({rows}, {cols}), got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericalError("matrix has non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


class RngState:
    """Deterministic random stream keyed by ``(seed, stream)``.

    Two instances built from the same key produce the same draws. Streams
    are independent sub-keys of one seed; :meth:`substream` derives further
    keys (e.g. one per frame) without touching this stream's counter.
    """

    def __init__(self, seed: int, stream: int | Sequence[int] = 0):
        self.seed = int(seed)
        self.stream = (int(stream),) if np.isscalar(stream) else tuple(int(s) for s in stream)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        self.generator = np.random.Generator(np.random.Philox(ss))

    def substream(self, index: int) -> "RngState":
        return RngState(self.seed, self.stream + (int(index),))

    def __repr__(self):
        return f"RngState(seed={self.seed}, stream={self.stream})"


def sample_gaussian(rng: RngState, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.generator.standard_normal(int(n))


def grad_check(
    loss_fn: Callable[[np.ndarray], float],
    params,
    analytic_grad,
    step: float = 1e-5,
) -> float:
    """Largest relative disagreement between ``analytic_grad`` and central differences.

    Each coordinate's error is ``|fd - analytic| / max(1, |analytic|)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    p = np.array(params, dtype=np.float64).ravel()
    g = np.asarray(analytic_grad, dtype=np.float64).ravel()
    if g.shape != p.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match params {p.shape}")
    worst = 0.0
    for i in range(p.size):
        orig = p[i]
        p[i] = orig + step
        up = float(loss_fn(p.copy()))
        p[i] = orig - step
        down = float(loss_fn(p.copy()))
        p[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericalError(f"non-finite loss probing coordinate {i}")
        fd = (up - down) / (2.0 * step)
        worst = max(worst, abs(fd - g[i]) / max(1.0, abs(g[i])))
    return worst
