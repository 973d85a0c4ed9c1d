"""Orthogonally-constrained variational bottleneck codec.

Linear Gaussian encoder ``q(z|x) = N(W_mu x + b_mu, diag exp(W_s x + b_s))``,
linear reconstruction decoder and linear position head, trained on

    mean||x - x_hat||^2 + alpha_loc * mean||y - y_hat||^2
        + beta * mean[ard_kl] + gamma * ||W_mu W_mu^T - I||_F^2

with hand-written gradients and Adam. After training, latent dimensions
whose mean log alpha exceeds a threshold are pruned, and the surviving
means are uniformly quantized for transmission.
"""

from __future__ import annotations

import copy
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .numkernel import NumericalError, RngState, ShapeError, sample_gaussian

log = logging.getLogger(__name__)

# log-uniform prior KL fit coefficients
K1, K2, K3 = 0.63576, 1.87320, 1.48695
LOGVAR_CLAMP = 8.0
LOGALPHA_CLAMP = 8.0
MU2_EPS = 1e-8
DEFAULT_PRUNE_THRESHOLD = 3.0

PARAM_ORDER = ("W_mu", "b_mu", "W_s", "b_s", "W_dec", "b_dec", "W_loc", "b_loc")
CKPT_MAGIC = b"OVCK"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


class TrainingDivergence(NumericalError):
    def __init__(self, msg, last_good=None, history=None):
        super().__init__(msg)
        self.last_good = last_good
        self.history = history


# ----------------------------------------------------------------------------
# model
# ----------------------------------------------------------------------------


@dataclass
class OvibModel:
    W_mu: np.ndarray
    b_mu: np.ndarray
    W_s: np.ndarray
    b_s: np.ndarray
    W_dec: np.ndarray
    b_dec: np.ndarray
    W_loc: np.ndarray
    b_loc: np.ndarray
    alpha_loc: float = 1.0
    beta: float = 1e-3
    gamma: float = 0.01
    prune_mask: np.ndarray | None = None
    quant_lo: np.ndarray | None = None
    quant_hi: np.ndarray | None = None
    seed: int = 0
    num_views: int = 0
    feature_dim: int = 0

    def __post_init__(self):
        for name in PARAM_ORDER:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        k, n = self.W_mu.shape
        expected = {"b_mu": (k,), "W_s": (k, n), "b_s": (k,), "W_dec": (n, k),
                    "b_dec": (n,), "W_loc": (3, k), "b_loc": (3,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if k < 1:
            raise ShapeError("latent dimension must be >= 1")
        if min(self.alpha_loc, self.beta, self.gamma) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.prune_mask is None:
            self.prune_mask = np.ones(k, dtype=bool)
        self.prune_mask = np.asarray(self.prune_mask, dtype=bool)

    @classmethod
    def init(cls, n_in: int, k: int, seed: int = 0, alpha_loc=1.0, beta=1e-3, gamma=0.01,
             init_logvar=-6.0, num_views=0, feature_dim=0) -> "OvibModel":
        g = RngState(seed, stream=(7, 0)).generator
        return cls(
            W_mu=g.standard_normal((k, n_in)) / np.sqrt(n_in),
            b_mu=np.zeros(k),
            W_s=np.zeros((k, n_in)),
            b_s=np.full(k, float(init_logvar)),
            W_dec=g.standard_normal((n_in, k)) / np.sqrt(k),
            b_dec=np.zeros(n_in),
            W_loc=g.standard_normal((3, k)) / np.sqrt(k),
            b_loc=np.zeros(3),
            alpha_loc=alpha_loc, beta=beta, gamma=gamma, seed=seed,
            num_views=num_views, feature_dim=feature_dim,
        )

    @property
    def k(self) -> int:
        return self.W_mu.shape[0]

    @property
    def n_in(self) -> int:
        return self.W_mu.shape[1]

    @property
    def k_active(self) -> int:
        return int(self.prune_mask.sum())

    @property
    def active_dims(self) -> np.ndarray:
        return np.flatnonzero(self.prune_mask)

    def params(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_ORDER}

    def copy(self) -> "OvibModel":
        return copy.deepcopy(self)

    def flat_params(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).ravel() for n in PARAM_ORDER])

    def set_flat_params(self, flat) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        i = 0
        for name in PARAM_ORDER:
            p = getattr(self, name)
            setattr(self, name, flat[i:i + p.size].reshape(p.shape).copy())
            i += p.size
        if i != flat.size:
            raise ShapeError(f"expected {i} parameters, got {flat.size}")


@dataclass
class LatentCode:
    mu: np.ndarray
    logvar: np.ndarray
    z: np.ndarray


def encode(model: OvibModel, x, rng: RngState | None = None, stochastic: bool = False) -> LatentCode:
    """Map flattened features (``(n,)`` or ``(B, n)``) to a latent code."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.n_in:
        raise ShapeError(f"input has {x.shape[-1]} features, model expects {model.n_in}")
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite encoder input")
    mu = x @ model.W_mu.T + model.b_mu
    logvar = np.clip(x @ model.W_s.T + model.b_s, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    if stochastic:
        if rng is None:
            raise ValueError("stochastic encoding needs an rng")
        eps = sample_gaussian(rng, mu.size).reshape(mu.shape)
        z = mu + np.exp(0.5 * logvar) * eps
    else:
        z = mu.copy()
    return LatentCode(mu, logvar, z)


def apply_mask(model: OvibModel, z) -> np.ndarray:
    """Zero the pruned latent coordinates."""
    return np.asarray(z, dtype=np.float64) * model.prune_mask


def decode(model: OvibModel, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != model.k:
        raise ShapeError(f"latent has {z.shape[-1]} dims, model has {model.k}")
    return z @ model.W_dec.T + model.b_dec


def localize_head(model: OvibModel, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != model.k:
        raise ShapeError(f"latent has {z.shape[-1]} dims, model has {model.k}")
    return z @ model.W_loc.T + model.b_loc


# ----------------------------------------------------------------------------
# loss terms
# ----------------------------------------------------------------------------


def log_alpha(mu, logvar) -> np.ndarray:
    """Per-dimension log noise-to-signal ratio, clamped to [-8, 8]."""
    mu = np.asarray(mu, dtype=np.float64)
    raw = np.asarray(logvar, dtype=np.float64) - np.log(mu * mu + MU2_EPS)
    return np.clip(raw, -LOGALPHA_CLAMP, LOGALPHA_CLAMP)


def ard_kl_from_logalpha(la) -> np.ndarray:
    """Elementwise non-negative KL fit in nats."""
    la = np.asarray(la, dtype=np.float64)
    return K1 - K1 * expit(K2 + K3 * la) + 0.5 * np.logaddexp(0.0, -la)


def ard_neg_kl_fit_from_logalpha(la) -> np.ndarray:
    la = np.asarray(la, dtype=np.float64)
    return K1 * expit(K2 + K3 * la) - 0.5 * np.logaddexp(0.0, -la)


def ard_kl(mu, logvar) -> float:
    """KL(q(z|x) || log-uniform prior), summed over dimensions."""
    return float(np.sum(ard_kl_from_logalpha(log_alpha(mu, logvar))))


def ard_neg_kl_fit(mu, logvar) -> float:
    """Opposite orientation, k1 - KL per dim: equals ``k * K1 - ard_kl`` over ``k`` dims."""
    return float(np.sum(ard_neg_kl_fit_from_logalpha(log_alpha(mu, logvar))))


def _dkl_dlogalpha(la):
    s = expit(K2 + K3 * la)
    return -K1 * K3 * s * (1.0 - s) - 0.5 * expit(-la)


def orthogonality_penalty(W) -> float:
    W = np.asarray(W, dtype=np.float64)
    G = W @ W.T - np.eye(W.shape[0])
    return float(np.sum(G * G))


def orthogonality_grad(W) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    return 4.0 * (W @ W.T - np.eye(W.shape[0])) @ W


@dataclass
class LossTerms:
    recon: float
    loc: float
    ard: float
    ortho: float
    total: float

    def as_dict(self):
        return {"recon": self.recon, "loc": self.loc, "ard": self.ard,
                "ortho": self.ortho, "total": self.total}


def composite_loss(model: OvibModel, x, y, rng: RngState | None = None, eps=None,
                   with_grad: bool = True):
    """Loss terms and analytic gradients for a batch.

    ``eps`` fixes the reparameterization noise (shape ``(B, k)``); otherwise
    one standard-normal vector per example is drawn from ``rng``.

    Returns ``(LossTerms, grads)`` where ``grads`` maps parameter names to
    arrays of the parameter's shape (``None`` when ``with_grad`` is false).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    B = x.shape[0]
    if B == 0:
        raise ValueError("empty batch")
    if y.shape != (B, 3):
        raise ShapeError(f"targets have shape {y.shape}, expected ({B}, 3)")
    k = model.k
    if eps is None:
        if rng is None:
            raise ValueError("need rng or eps")
        eps = sample_gaussian(rng, B * k).reshape(B, k)
    eps = np.asarray(eps, dtype=np.float64).reshape(B, k)
    mask = model.prune_mask.astype(np.float64)

    mu = x @ model.W_mu.T + model.b_mu
    s_raw = x @ model.W_s.T + model.b_s
    logvar = np.clip(s_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    sigma = np.exp(0.5 * logvar)
    z = (mu + sigma * eps) * mask
    x_hat = z @ model.W_dec.T + model.b_dec
    y_hat = z @ model.W_loc.T + model.b_loc

    rx = x - x_hat
    ry = y - y_hat
    recon = float(np.sum(rx * rx) / B)
    loc = float(np.sum(ry * ry) / B)
    la_raw = logvar - np.log(mu * mu + MU2_EPS)
    la = np.clip(la_raw, -LOGALPHA_CLAMP, LOGALPHA_CLAMP)
    ard = float(np.sum(ard_kl_from_logalpha(la) * mask) / B)
    G = model.W_mu @ model.W_mu.T - np.eye(k)
    ortho = float(np.sum(G * G))
    total = recon + model.alpha_loc * loc + model.beta * ard + model.gamma * ortho
    terms = LossTerms(recon, loc, ard, ortho, total)
    for name, v in terms.as_dict().items():
        if not np.isfinite(v):
            raise NumericalError(f"non-finite {name} loss term")
    if not with_grad:
        return terms, None

    d_xhat = -2.0 / B * rx
    d_yhat = -2.0 * model.alpha_loc / B * ry
    grads = {
        "W_dec": d_xhat.T @ z,
        "b_dec": d_xhat.sum(0),
        "W_loc": d_yhat.T @ z,
        "b_loc": d_yhat.sum(0),
    }
    dz = (d_xhat @ model.W_dec + d_yhat @ model.W_loc) * mask
    dmu = dz.copy()
    dlogvar = 0.5 * dz * eps * sigma

    inside = (la_raw >= -LOGALPHA_CLAMP) & (la_raw <= LOGALPHA_CLAMP)
    dla = model.beta / B * _dkl_dlogalpha(la) * inside * mask
    dlogvar += dla
    dmu += dla * (-2.0 * mu / (mu * mu + MU2_EPS))
    dlogvar *= (s_raw >= -LOGVAR_CLAMP) & (s_raw <= LOGVAR_CLAMP)

    grads["W_mu"] = dmu.T @ x + model.gamma * 4.0 * G @ model.W_mu
    grads["b_mu"] = dmu.sum(0)
    grads["W_s"] = dlogvar.T @ x
    grads["b_s"] = dlogvar.sum(0)
    return terms, grads


# ----------------------------------------------------------------------------
# training
# ----------------------------------------------------------------------------


@dataclass
class Schedule:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3
    adam_b1: float = 0.9
    adam_b2: float = 0.999
    adam_eps: float = 1e-8
    fit_head: bool = True

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1 or not self.lr > 0:
            raise ValueError("schedule needs epochs >= 1, batch_size >= 1, lr > 0")


class Adam:
    def __init__(self, params: dict, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def fit_position_head(model: OvibModel, x, y, ridge: float = 1e-6) -> None:
    """Set the position head to the minimizer of the expected localization loss.

    With z = mu + sigma * eps the expected squared error is the deterministic
    least-squares error plus sum_j W_j^2 * sum_n sigma_nj^2, so the optimum is
    a ridge solve whose ridge is each dim's total sampling variance. Noisy
    dims get small weights, which is what lets pruning drop them cleanly.

    Positions are in meters while every other quantity is O(1); starting the
    head here keeps Adam from spending the whole schedule walking the bias out
    to the world's coordinates.
    """
    code = encode(model, x)
    z = apply_mask(model, code.mu)
    var = apply_mask(model, np.exp(code.logvar)).sum(axis=0)
    A = np.column_stack([z, np.ones(len(z))])
    reg = np.diag(np.append(var + ridge * len(z), 0.0))
    coef = np.linalg.solve(A.T @ A + reg, A.T @ np.asarray(y, dtype=np.float64))
    model.W_loc = coef[:-1].T.copy()
    model.b_loc = coef[-1].copy()


def train(model: OvibModel, dataset, schedule: Schedule | None = None, seed: int = 0):
    """Train a copy of ``model``; return ``(trained, history)``.

    ``history`` is a list of per-epoch dicts with the mean recon, loc, ard,
    ortho and total loss over that epoch's minibatches.
    """
    schedule = schedule or Schedule()
    schedule.validate()
    if getattr(dataset, "split", "train") != "train":
        raise ValueError(f"training needs the train split, got {dataset.split!r}")
    x = dataset.flat
    y = dataset.positions
    n = len(x)
    if n == 0:
        raise ValueError("empty training set")
    model = model.copy()
    model.seed = int(seed)
    if schedule.fit_head:
        fit_position_head(model, x, y)
    params = model.params()
    opt = Adam(params, schedule.lr, schedule.adam_b1, schedule.adam_b2, schedule.adam_eps)
    rng = RngState(seed, stream=(5, 0))
    history = []
    last_good = model.copy()
    for epoch in range(schedule.epochs):
        order = rng.generator.permutation(n)
        sums = dict.fromkeys(("recon", "loc", "ard", "ortho", "total"), 0.0)
        for start in range(0, n, schedule.batch_size):
            idx = order[start:start + schedule.batch_size]
            try:
                terms, grads = composite_loss(model, x[idx], y[idx], rng=rng)
            except NumericalError as e:
                raise TrainingDivergence(f"epoch {epoch + 1}: {e}", last_good, history) from e
            for key, v in terms.as_dict().items():
                sums[key] += v * len(idx)
            opt.step(params, grads)
            for name in PARAM_ORDER:
                setattr(model, name, params[name])
        row = {"epoch": epoch + 1}
        row.update({key: v / n for key, v in sums.items()})
        history.append(row)
        last_good = model.copy()
        log.debug("epoch %d total %.5g", epoch + 1, row["total"])
    if schedule.fit_head:
        # the head enters only the loc term, so this is an exact block step on the loss
        fit_position_head(model, x, y)
    fit_ranges(model, dataset)
    return model, history


# ----------------------------------------------------------------------------
# pruning, quantization, entropy
# ----------------------------------------------------------------------------


def mean_log_alpha(model: OvibModel, dataset) -> np.ndarray:
    code = encode(model, dataset.flat)
    return log_alpha(code.mu, code.logvar).mean(axis=0)


def prune(model: OvibModel, dataset, threshold_logalpha: float = DEFAULT_PRUNE_THRESHOLD):
    """Mark dims with mean log alpha above ``threshold_logalpha`` as pruned.

    The mask is stored on ``model``; returns ``(mask, k_active)``.
    """
    la = mean_log_alpha(model, dataset)
    mask = la <= threshold_logalpha
    if not mask.any():
        log.warning("every latent dim exceeds the prune threshold; keeping dim %d",
                    int(np.argmin(la)))
        mask[int(np.argmin(la))] = True
    model.prune_mask = mask
    return mask.copy(), int(mask.sum())


def fit_ranges(model: OvibModel, dataset) -> None:
    """Store per-dim (min, max) of the deterministic latent mean over ``dataset``."""
    mu = encode(model, dataset.flat).mu
    model.quant_lo = mu.min(axis=0)
    model.quant_hi = mu.max(axis=0)


@dataclass
class QuantizedCode:
    codes: np.ndarray  # (..., n_sent) unsigned ints
    bits: int
    lo: np.ndarray  # per latent dim, length k
    hi: np.ndarray
    active_dims: np.ndarray  # dims transmitted
    k: int
    constant_dims: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def payload_bits(self) -> int:
        return int(self.active_dims.size * self.bits)


def _ranges(model, ranges):
    if ranges is None:
        if model.quant_lo is None:
            raise ValueError("model has no quantizer ranges; call fit_ranges first")
        return np.asarray(model.quant_lo, dtype=np.float64), np.asarray(model.quant_hi, dtype=np.float64)
    lo, hi = ranges
    return (np.broadcast_to(np.asarray(lo, dtype=np.float64), (model.k,)).copy(),
            np.broadcast_to(np.asarray(hi, dtype=np.float64), (model.k,)).copy())


def quantize(code, model: OvibModel, bits: int = 8, ranges=None) -> QuantizedCode:
    """Uniform per-dim quantization of the active latent coordinates.

    ``code`` is a :class:`LatentCode` or a raw ``(k,)``/``(B, k)`` array.
    Dims with ``lo == hi`` carry no information and are not transmitted.
    """
    if not 1 <= bits <= 16:
        raise ValueError("bits must be in [1, 16]")
    z = code.z if isinstance(code, LatentCode) else np.asarray(code, dtype=np.float64)
    lo, hi = _ranges(model, ranges)
    active = model.active_dims
    sent = active[hi[active] > lo[active]]
    const = active[hi[active] <= lo[active]]
    levels = (1 << bits) - 1
    zs = np.clip(z[..., sent], lo[sent], hi[sent])
    u = (zs - lo[sent]) / (hi[sent] - lo[sent]) * levels
    codes = np.floor(u + 0.5).astype(np.uint32)  # u >= 0: half away from zero
    return QuantizedCode(codes, bits, lo, hi, sent, model.k, const)


def dequantize(q: QuantizedCode) -> np.ndarray:
    """Reconstruct the ``k``-dim latent; untransmitted dims are 0 (pruned) or ``lo`` (constant)."""
    levels = (1 << q.bits) - 1
    out = np.zeros(q.codes.shape[:-1] + (q.k,))
    out[..., q.active_dims] = q.lo[q.active_dims] + q.codes / levels * (
        q.hi[q.active_dims] - q.lo[q.active_dims])
    out[..., q.constant_dims] = q.lo[q.constant_dims]
    return out


def empirical_entropy_bits(symbols) -> float:
    _, counts = np.unique(np.asarray(symbols), return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log2(p)))


def latent_entropy(model: OvibModel, dataset, bits: int = 8) -> float:
    """Sum over active dims of the empirical entropy (bits) of quantized latent means."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    q = quantize(encode(model, dataset.flat), model, bits)
    return float(sum(empirical_entropy_bits(q.codes[:, j]) for j in range(q.codes.shape[1])))


# ----------------------------------------------------------------------------
# orthogonality perturbation check
# ----------------------------------------------------------------------------


@dataclass
class OrthoBoundReport:
    passed: bool
    trials: int
    violations: int
    max_ratio: float  # max |a_i - a0_i| / bound over all rows/trials
    witness: dict | None = None


def random_psd(n: int, rng: RngState) -> np.ndarray:
    A = rng.generator.standard_normal((n, n))
    return A @ A.T / n


def random_row_orthonormal(k: int, n: int, rng: RngState) -> np.ndarray:
    q, r = np.linalg.qr(rng.generator.standard_normal((n, k)))
    return (q * np.sign(np.diag(r))).T


def check_orthogonality_bound(k: int, n: int, epsilon: float, Sigma_x=None, trials: int = 1000,
                              rng: RngState | None = None) -> OrthoBoundReport:
    """Empirically check the per-row variance perturbation bound.

    Each trial draws a row-orthonormal ``W0`` (k x n), perturbs every row by a
    random vector of norm at most ``epsilon`` and checks
    ``|a_i - a0_i| <= (2 eps + eps^2) ||Sigma_x||_2`` with ``a_i = w_i Sigma_x w_i^T``.
    ``Sigma_x=None`` draws a fresh random PSD covariance per trial.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    rng = rng or RngState(0)
    fixed = None
    if Sigma_x is not None:
        fixed = np.asarray(Sigma_x, dtype=np.float64)
        if fixed.shape != (n, n) or not np.allclose(fixed, fixed.T):
            raise ValueError("Sigma_x must be a symmetric n x n matrix")
    violations = 0
    worst = 0.0
    witness = None
    for t in range(trials):
        S = fixed if fixed is not None else random_psd(n, rng)
        W0 = random_row_orthonormal(k, n, rng)
        d = rng.generator.standard_normal((k, n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        d *= epsilon * rng.generator.uniform(0.0, 1.0, (k, 1))
        W = W0 + d
        a0 = np.einsum("ij,jk,ik->i", W0, S, W0)
        a = np.einsum("ij,jk,ik->i", W, S, W)
        bound = (2 * epsilon + epsilon ** 2) * np.linalg.norm(S, 2)
        dev = np.abs(a - a0)
        bad = dev > bound
        if bound > 0:
            worst = max(worst, float(np.max(dev) / bound))
        if bad.any():
            violations += 1
            if witness is None:
                witness = {"trial": t, "W0": W0, "W": W, "Sigma_x": S, "rows": np.flatnonzero(bad)}
    return OrthoBoundReport(violations == 0, trials, violations, worst, witness)


# ----------------------------------------------------------------------------
# checkpoint container
# ----------------------------------------------------------------------------


def write_container(path, magic: bytes, header: dict, blob: np.ndarray) -> None:
    hdr = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<HI", CKPT_VERSION, len(hdr)))
        f.write(hdr)
        f.write(np.ascontiguousarray(blob, dtype="<f8").tobytes())


def read_container(path, magic: bytes):
    buf = Path(path).read_bytes()
    if len(buf) < 10 or buf[:4] != magic:
        raise CheckpointError(f"{path}: bad magic, expected {magic!r}")
    version, hlen = struct.unpack_from("<HI", buf, 4)
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    if 10 + hlen > len(buf):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(buf[10:10 + hlen])
    except ValueError as e:
        raise CheckpointError(f"{path}: corrupt header: {e}") from e
    body = buf[10 + hlen:]
    if len(body) % 8:
        raise CheckpointError(f"{path}: blob is not a whole number of f64 values")
    return header, np.frombuffer(body, dtype="<f8").copy()


def _floats(a):
    return None if a is None else [float(v) for v in a]


def save_checkpoint(model: OvibModel, path) -> None:
    header = {
        "k": model.k, "n_in": model.n_in,
        "num_views": model.num_views, "feature_dim": model.feature_dim,
        "alpha_loc": model.alpha_loc, "beta": model.beta, "gamma": model.gamma,
        "prune_mask": [bool(v) for v in model.prune_mask],
        "quant_lo": _floats(model.quant_lo), "quant_hi": _floats(model.quant_hi),
        "seed": model.seed, "param_order": list(PARAM_ORDER),
    }
    write_container(path, CKPT_MAGIC, header, model.flat_params())


def load_checkpoint(path) -> OvibModel:
    h, blob = read_container(path, CKPT_MAGIC)
    try:
        k, n = int(h["k"]), int(h["n_in"])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: header missing dims") from e
    expected = 2 * k * n + 2 * k + n * k + n + 3 * k + 3
    if blob.size != expected:
        raise CheckpointError(f"{path}: blob has {blob.size} values, expected {expected}")
    model = OvibModel.init(n, k)
    model.set_flat_params(blob)
    model.alpha_loc, model.beta, model.gamma = h["alpha_loc"], h["beta"], h["gamma"]
    model.prune_mask = np.array(h["prune_mask"], dtype=bool)
    model.quant_lo = None if h["quant_lo"] is None else np.array(h["quant_lo"])
    model.quant_hi = None if h["quant_hi"] is None else np.array(h["quant_hi"])
    model.seed = h["seed"]
    model.num_views, model.feature_dim = h["num_views"], h["feature_dim"]
    return model
