"""Propensity-weighted matrix factorization with offset terms.

The objective over the ``N`` observed entries of a dataset is::

    (1/N) * sum_e (y_e - yhat_e)^2 / P_e
        + c * (|b_user|^2 + |b_item|^2 + mu^2)
        + factor_reg * (|V|^2 + |W|^2)

with ``yhat = V[u] . W[i] + b_user[u] + b_item[i] + mu``.  Setting every
``P_e = 1`` gives plain (unweighted) matrix factorization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from ..core import ObservedDataset

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"diverged: non-finite loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


@dataclass(frozen=True)
class TrainConfig:
    latent_dim: int = 10
    learning_rate: float = 0.01
    epochs: int = 128
    offset_reg: float = 1e-5
    factor_reg: float = 0.0
    init_scale: float = 0.1
    batch_size: int = 1024
    optimizer: str = "adam"  # or "sgd"

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.offset_reg < 0 or self.factor_reg < 0:
            raise ValueError("regularization weights must be >= 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class FactorModel:
    user_factors: np.ndarray
    item_factors: np.ndarray
    user_bias: np.ndarray
    item_bias: np.ndarray
    global_offset: float

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.user_bias), len(self.item_bias))

    @property
    def latent_dim(self) -> int:
        return self.user_factors.shape[1]

    def predict(self, users, items) -> np.ndarray:
        """Raw (unclamped) predictions for the given index pairs."""
        users = np.asarray(users)
        items = np.asarray(items)
        return (np.einsum("ij,ij->i", self.user_factors[users], self.item_factors[items])
                + self.user_bias[users] + self.item_bias[items] + self.global_offset)

    def copy(self) -> "FactorModel":
        return FactorModel(self.user_factors.copy(), self.item_factors.copy(),
                           self.user_bias.copy(), self.item_bias.copy(), float(self.global_offset))

    def save(self, path) -> None:
        """CSV parameter dump.

        Line 1 is ``num_users,num_items,latent_dim``; then one row per user
        (factors then bias), one row per item (factors then bias), and a final
        line holding the global offset.
        """
        with Path(path).open("w") as fh:
            fh.write("{},{},{}\n".format(*self.shape, self.latent_dim))
            np.savetxt(fh, np.column_stack([self.user_factors, self.user_bias]), delimiter=",", fmt="%.17g")
            np.savetxt(fh, np.column_stack([self.item_factors, self.item_bias]), delimiter=",", fmt="%.17g")
            fh.write(f"{self.global_offset!r}\n")

    @classmethod
    def load(cls, path) -> "FactorModel":
        with Path(path).open() as fh:
            nu, ni, d = (int(x) for x in fh.readline().split(","))
            rows = np.loadtxt(fh, delimiter=",", ndmin=2, max_rows=nu)
            cols = np.loadtxt(fh, delimiter=",", ndmin=2, max_rows=ni)
            mu = float(fh.readline())
        return cls(rows[:, :d], cols[:, :d], rows[:, d], cols[:, d], mu)


def predict_matrix(model: FactorModel, clamp: bool = True) -> np.ndarray:
    pred = (model.user_factors @ model.item_factors.T
            + model.user_bias[:, None] + model.item_bias[None, :] + model.global_offset)
    return np.clip(pred, 0.0, 1.0) if clamp else pred


def init_model(num_users: int, num_items: int, config: TrainConfig,
               stream: np.random.Generator, global_offset: float = 0.0) -> FactorModel:
    d = config.latent_dim
    V = stream.normal(0.0, config.init_scale, size=(num_users, d))
    W = stream.normal(0.0, config.init_scale, size=(num_items, d))
    return FactorModel(V, W, np.zeros(num_users), np.zeros(num_items), float(global_offset))


def _data_grads(model, users, items, y, weights, scale):
    """Loss sum and gradients of ``scale * sum w (y - yhat)^2`` over one batch."""
    Vu = model.user_factors[users]
    Wi = model.item_factors[items]
    resid = np.einsum("ij,ij->i", Vu, Wi) + model.user_bias[users] + model.item_bias[items] \
        + model.global_offset - y
    loss = scale * np.dot(weights, resid * resid)
    g = 2.0 * scale * weights * resid
    nu, d = model.user_factors.shape
    ni = model.item_factors.shape[0]
    offs = np.arange(d)
    gV = np.bincount((users[:, None] * d + offs).ravel(), weights=(g[:, None] * Wi).ravel(),
                     minlength=nu * d).reshape(nu, d)
    gW = np.bincount((items[:, None] * d + offs).ravel(), weights=(g[:, None] * Vu).ravel(),
                     minlength=ni * d).reshape(ni, d)
    gbu = np.bincount(users, weights=g, minlength=nu)
    gbi = np.bincount(items, weights=g, minlength=ni)
    return loss, [gV, gW, gbu, gbi, g.sum()]


def _reg_terms(model, config):
    c, lam = config.offset_reg, config.factor_reg
    loss = c * (model.user_bias @ model.user_bias + model.item_bias @ model.item_bias
                + model.global_offset ** 2)
    grads = [2 * c * model.user_bias, 2 * c * model.item_bias, 2 * c * model.global_offset]
    if lam:
        loss += lam * (np.sum(model.user_factors ** 2) + np.sum(model.item_factors ** 2))
        fgrads = [2 * lam * model.user_factors, 2 * lam * model.item_factors]
    else:
        fgrads = [0.0, 0.0]
    return loss, fgrads + grads


def objective(model: FactorModel, dataset: ObservedDataset, propensities,
              config: TrainConfig) -> float:
    """Full weighted objective at ``model``."""
    w = 1.0 / np.asarray(propensities, dtype=np.float64)
    loss, _ = _data_grads(model, dataset.users, dataset.items, dataset.values, w, 1.0 / len(dataset))
    reg, _ = _reg_terms(model, config)
    return float(loss + reg)


def gradient(model: FactorModel, dataset: ObservedDataset, propensities,
             config: TrainConfig) -> FactorModel:
    """Full-batch gradient of :func:`objective`, packed as a FactorModel."""
    w = 1.0 / np.asarray(propensities, dtype=np.float64)
    _, dg = _data_grads(model, dataset.users, dataset.items, dataset.values, w, 1.0 / len(dataset))
    _, rg = _reg_terms(model, config)
    parts = [a + b for a, b in zip(dg, rg)]
    return FactorModel(parts[0], parts[1], parts[2], parts[3], float(parts[4]))


@njit(cache=True)
def _run_epoch(V, W, bu, bi, mu, state, gV, gW, gbu, gbi, users, items, y, w, order,
               batch_size, lr, c, lam, adam, t0):
    """One pass over ``order`` in mini-batches; updates parameters in place.

    ``mu`` is a length-1 array.  ``state`` holds Adam moments as
    ``[mV, vV, mW, vW, mbu, vbu, mbi, vbi, mmu(2)]`` packed in a tuple.
    Returns (data+reg loss averaged over the epoch, steps taken).
    """
    mV, vV, mW, vW, mbu, vbu, mbi, vbi, mmu = state
    b1, b2, eps = 0.9, 0.999, 1e-8
    n = order.shape[0]
    d = V.shape[1]
    total = 0.0
    t = t0
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        m = stop - start
        gV[:] = 0.0
        gW[:] = 0.0
        gbu[:] = 0.0
        gbi[:] = 0.0
        gmu = 0.0
        loss = 0.0
        for j in range(start, stop):
            e = order[j]
            u = users[e]
            i = items[e]
            pred = bu[u] + bi[i] + mu[0]
            for f in range(d):
                pred += V[u, f] * W[i, f]
            r = pred - y[e]
            loss += w[e] * r * r
            g = 2.0 * w[e] * r / m
            for f in range(d):
                gV[u, f] += g * W[i, f]
                gW[i, f] += g * V[u, f]
            gbu[u] += g
            gbi[i] += g
            gmu += g
        loss /= m
        reg = c * (np.sum(bu * bu) + np.sum(bi * bi) + mu[0] * mu[0])
        if lam > 0.0:
            reg += lam * (np.sum(V * V) + np.sum(W * W))
            gV += 2.0 * lam * V
            gW += 2.0 * lam * W
        gbu += 2.0 * c * bu
        gbi += 2.0 * c * bi
        gmu += 2.0 * c * mu[0]
        total += (loss + reg) * m / n
        t += 1
        if adam:
            c1 = 1.0 - b1 ** t
            c2 = 1.0 - b2 ** t
            _adam(V, gV, mV, vV, lr, b1, b2, eps, c1, c2)
            _adam(W, gW, mW, vW, lr, b1, b2, eps, c1, c2)
            _adam(bu, gbu, mbu, vbu, lr, b1, b2, eps, c1, c2)
            _adam(bi, gbi, mbi, vbi, lr, b1, b2, eps, c1, c2)
            mmu[0] = b1 * mmu[0] + (1 - b1) * gmu
            mmu[1] = b2 * mmu[1] + (1 - b2) * gmu * gmu
            mu[0] -= lr * (mmu[0] / c1) / (np.sqrt(mmu[1] / c2) + eps)
        else:
            V -= lr * gV
            W -= lr * gW
            bu -= lr * gbu
            bi -= lr * gbi
            mu[0] -= lr * gmu
    return total, t


@njit(cache=True)
def _adam(p, g, m, v, lr, b1, b2, eps, c1, c2):
    pf = p.ravel()
    gf = g.ravel()
    mf = m.ravel()
    vf = v.ravel()
    for k in range(pf.shape[0]):
        mf[k] = b1 * mf[k] + (1 - b1) * gf[k]
        vf[k] = b2 * vf[k] + (1 - b2) * gf[k] * gf[k]
        pf[k] -= lr * (mf[k] / c1) / (np.sqrt(vf[k] / c2) + eps)


def train_ips_mf(dataset: ObservedDataset, propensities, config: TrainConfig,
                 stream: np.random.Generator) -> FactorModel:
    """Fit a :class:`FactorModel` by mini-batch descent on the weighted objective.

    ``propensities`` holds one observation probability per dataset entry, in
    the dataset's entry order; each squared error is divided by it.  Every
    batch step uses the batch mean of the data term plus the full
    regularizer, an unbiased estimate of the objective's gradient.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    P = np.asarray(propensities, dtype=np.float64)
    if P.shape != (n,):
        raise ValueError(f"expected {n} propensities, got shape {P.shape}")
    if np.any(~np.isfinite(P)) or np.any(P <= 0):
        raise ValueError("propensities must be finite and positive")
    w = 1.0 / P
    users = np.ascontiguousarray(dataset.users)
    items = np.ascontiguousarray(dataset.items)
    y = np.ascontiguousarray(dataset.values)

    model = init_model(dataset.num_users, dataset.num_items, config, stream)
    V, W, bu, bi = model.user_factors, model.item_factors, model.user_bias, model.item_bias
    mu = np.array([model.global_offset])
    state = (np.zeros_like(V), np.zeros_like(V), np.zeros_like(W), np.zeros_like(W),
             np.zeros_like(bu), np.zeros_like(bu), np.zeros_like(bi), np.zeros_like(bi),
             np.zeros(2))
    grads = (np.empty_like(V), np.empty_like(W), np.empty_like(bu), np.empty_like(bi))
    t = 0
    for epoch in range(config.epochs):
        order = stream.permutation(n)
        loss, t = _run_epoch(V, W, bu, bi, mu, state, *grads, users, items, y, w, order,
                             config.batch_size, config.learning_rate, config.offset_reg,
                             config.factor_reg, config.optimizer == "adam", t)
        if not np.isfinite(loss) or not (np.isfinite(V).all() and np.isfinite(W).all()
                                         and np.isfinite(bu).all() and np.isfinite(bi).all()
                                         and np.isfinite(mu[0])):
            raise TrainingDiverged(epoch, loss)
        if epoch % 32 == 0 or epoch == config.epochs - 1:
            log.debug("epoch %d loss %.6f", epoch, loss)

    return FactorModel(V, W, bu, bi, float(mu[0]))
