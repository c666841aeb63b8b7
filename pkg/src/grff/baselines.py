"""Two-stage comparison methods.

* vanilla RFF: RBF spectral weights, Fourier features, ridge classifier
* alignment-selected RFF: score a large weight pool by kernel-target
  alignment and keep the best ``k`` before fitting the same ridge
* a ReLU MLP whose hidden widths equal the GRFF layer sizes

Kernel-target alignment of features ``Z`` (rows ``phi(x_i)``) against
labels ``y`` in {-1, +1} is the double sum ``sum_ij y_i y_j phi(x_i).phi(x_j)``.
Writing ``u = Z^T y`` this is ``u.u = ||Z^T y||^2``, an O(nD) evaluation, and
since ``u`` splits into a cosine and a sine half, weight ``k`` contributes
``u_k^2 + u_{k+D}^2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import autodiff as ad
from .autodiff import Parameter
from .exceptions import ConfigError, LabelError, NumericalError
from .features import RBFKernelSpec, rff_map_np, sample_rbf_weights

logger = logging.getLogger(__name__)

LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1.0)
GAMMA_GRID = tuple(round(0.5 + 0.1 * i, 1) for i in range(10))  # 0.5 .. 1.4
POOL_FACTOR = 10


def to_signed(y) -> np.ndarray:
    """Binary class indices {0, 1} -> {-1, +1}; signed labels pass through."""
    y = np.asarray(y)
    values = set(np.unique(y).tolist())
    if values <= {-1, 1}:
        return y.astype(np.float64)
    if values <= {0, 1}:
        return 2.0 * y - 1.0
    raise LabelError(f"expected binary labels, got values {sorted(values)}")


# -- ridge -----------------------------------------------------------------------

@dataclass
class RidgeModel:
    weight: np.ndarray
    bias: float
    lam: float
    W: np.ndarray | None = None  # spectral weights when fitted on RFF features

    def decision(self, Z) -> np.ndarray:
        return np.asarray(Z) @ self.weight + self.bias

    def predict_signed(self, Z) -> np.ndarray:
        return np.where(self.decision(Z) >= 0, 1.0, -1.0)

    def features(self, X) -> np.ndarray:
        if self.W is None:
            raise ConfigError("model was not fitted on random features")
        return rff_map_np(X, self.W)

    def predict(self, X) -> np.ndarray:
        """Class indices {0, 1} for raw inputs (RFF models only)."""
        return (self.decision(self.features(X)) >= 0).astype(np.int64)


def fit_ridge(Z, y, lam) -> RidgeModel:
    """Ridge regression on ``Z`` with signed targets and an unpenalized bias.

    Centring ``Z`` and ``y`` removes the bias from the problem, leaving the
    symmetric positive-definite system ``(Zc^T Zc + lam I) w = Zc^T yc``;
    the bias is then ``mean(y) - mean(Z) . w``.
    """
    if not lam > 0:
        raise ConfigError(f"ridge lambda must be positive, got {lam}")
    Z = np.asarray(Z, dtype=np.float64)
    y = to_signed(y)
    zm, ym = Z.mean(axis=0), y.mean()
    Zc = Z - zm
    A = Zc.T @ Zc
    A[np.diag_indices_from(A)] += lam
    w = linalg.solve(A, Zc.T @ (y - ym), assume_a="pos")
    return RidgeModel(w, float(ym - zm @ w), float(lam))


def normal_equation_residual(model: RidgeModel, Z, y) -> float:
    """Relative residual ``||A w - b|| / ||b||`` of the centred normal equations."""
    Z = np.asarray(Z, dtype=np.float64)
    y = to_signed(y)
    Zc = Z - Z.mean(axis=0)
    b = Zc.T @ (y - y.mean())
    r = Zc.T @ (Zc @ model.weight) + model.lam * model.weight - b
    return float(np.linalg.norm(r) / max(np.linalg.norm(b), 1e-300))


def fit_ridge_rff(X, y, spec: RBFKernelSpec, D, lam, seed=0) -> RidgeModel:
    """Vanilla RFF: sample ``D`` RBF weights, map ``X``, fit ridge."""
    if D < 1:
        raise ConfigError(f"D must be >= 1, got {D}")
    X = np.asarray(X, dtype=np.float64)
    W = sample_rbf_weights(spec, D, X.shape[1], np.random.default_rng(seed))
    model = fit_ridge(rff_map_np(X, W), y, lam)
    model.W = W
    return model


# -- alignment -------------------------------------------------------------------

@dataclass
class AlignmentScores:
    per_weight: np.ndarray
    total: float


def alignment_score(Z, y) -> AlignmentScores:
    """Per-weight and total kernel-target alignment of (n, 2D) Fourier features."""
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise LabelError("alignment needs labels in {-1, +1}")
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[1] % 2:
        raise ConfigError(f"feature width {Z.shape[1]} is not 2D")
    u = Z.T @ y
    D = Z.shape[1] // 2
    per = u[:D] ** 2 + u[D:] ** 2
    return AlignmentScores(per, float(u @ u))


def select_features_by_alignment(pool, X, y, k) -> np.ndarray:
    """Top-``k`` rows of the weight ``pool`` by alignment on (X, y).

    Ties go to the lower pool index.  The selected rows keep pool order.
    Each weight's score depends only on itself, so the choice is the same
    whether features are normalized by the pool size or by ``k``.
    """
    pool = np.asarray(pool, dtype=np.float64)
    if not 1 <= k <= len(pool):
        raise ConfigError(f"k={k} must be in [1, {len(pool)}]")
    scores = alignment_score(rff_map_np(X, pool), to_signed(y)).per_weight
    order = np.lexsort((np.arange(len(pool)), -scores))
    return pool[np.sort(order[:k])]


def fit_aligned_rff(X, y, spec: RBFKernelSpec, k, lam, seed=0, pool_size=None) -> RidgeModel:
    pool_size = POOL_FACTOR * k if pool_size is None else int(pool_size)
    X = np.asarray(X, dtype=np.float64)
    pool = sample_rbf_weights(spec, pool_size, X.shape[1], np.random.default_rng(seed))
    W = select_features_by_alignment(pool, X, y, k)
    model = fit_ridge(rff_map_np(X, W), y, lam)
    model.W = W
    return model


@dataclass
class GridResult:
    model: RidgeModel
    gamma: float
    lam: float
    val_acc: float
    table: list = field(default_factory=list)


def grid_search_rff(train, val, D, seed=0, gammas=GAMMA_GRID, lams=LAMBDA_GRID,
                    aligned=False) -> GridResult:
    """Pick (gamma, lambda) by validation accuracy; the first best point wins ties.

    Weights depend only on (gamma, seed), so each gamma's features are
    computed once and shared across the lambda grid.
    """
    Xtr, ytr = train
    Xva, yva = val
    Xtr = np.asarray(Xtr, dtype=np.float64)
    best = None
    table = []
    for gamma in gammas:
        spec = RBFKernelSpec(float(gamma))
        rng = np.random.default_rng(seed)
        if aligned:
            pool = sample_rbf_weights(spec, POOL_FACTOR * D, Xtr.shape[1], rng)
            W = select_features_by_alignment(pool, Xtr, ytr, D)
        else:
            W = sample_rbf_weights(spec, D, Xtr.shape[1], rng)
        Ztr, Zva = rff_map_np(Xtr, W), rff_map_np(Xva, W)
        for lam in lams:
            model = fit_ridge(Ztr, ytr, lam)
            model.W = W
            acc = float(((model.decision(Zva) >= 0).astype(int) == np.asarray(yva)).mean())
            table.append((float(gamma), float(lam), acc))
            if best is None or acc > best.val_acc:
                best = GridResult(model, float(gamma), float(lam), acc)
    logger.info("rff grid: gamma=%s lambda=%s val_acc=%.4f", best.gamma, best.lam, best.val_acc)
    best.table = table
    return best


# -- MLP -------------------------------------------------------------------------

def mlp_widths(d, D_list, num_classes) -> list:
    """Hidden width ``k`` equals ``D_k``: ``[d, D_1, ..., D_K, C]``."""
    return [int(d), *(int(D) for D in D_list), int(num_classes)]


@dataclass
class MLP:
    widths: list
    layers: list  # [(W, b), ...]

    @classmethod
    def init(cls, widths, seed=0):
        rng = np.random.default_rng(seed)
        layers = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = np.sqrt(6.0 / fan_in)
            layers.append((Parameter(rng.uniform(-bound, bound, (fan_in, fan_out))),
                           Parameter(np.zeros(fan_out))))
        return cls(list(widths), layers)

    def parameters(self):
        return [p for pair in self.layers for p in pair]

    def __call__(self, X):
        h = ad.as_tensor(X)
        for i, (W, b) in enumerate(self.layers):
            h = ad.linear(h, W, b)
            if i < len(self.layers) - 1:
                h = ad.relu(h)
        return h

    def logits(self, X, batch_size=1000) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        with ad.no_grad():
            return np.concatenate([self(X[s:s + batch_size]).data
                                   for s in range(0, len(X), batch_size)])

    def predict(self, X) -> np.ndarray:
        return self.logits(X).argmax(axis=1)

    def state(self):
        return [(W.data.copy(), b.data.copy()) for W, b in self.layers]

    def load_state(self, state):
        for (W, b), (w, c) in zip(self.layers, state):
            W.data, b.data = w.copy(), c.copy()


def fit_mlp_baseline(train, val, widths, config, epochs=None):
    """ReLU MLP trained with Adam and cross-entropy, best-validation restored.

    ``config`` is a :class:`~grff.training.TrainConfig`; unless ``epochs`` is
    given the MLP trains for the config's total epoch budget.  Returns
    ``(mlp, history)`` with history rows ``(epoch, train_loss, val_acc)``.
    """
    Xtr, ytr = (np.asarray(a) for a in train)
    Xtr = Xtr.astype(np.float64)
    Xva, yva = val if val is not None else (Xtr, ytr)
    epochs = sum(config.epochs) if epochs is None else int(epochs)
    mlp = MLP.init(widths, np.random.SeedSequence(config.seed, spawn_key=(11,)))
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(7,)))
    opt = ad.Adam(config.lr, config.betas, config.eps)
    params = mlp.parameters()
    history = []
    best_acc, best_state = -np.inf, None
    for epoch in range(epochs):
        order = rng.permutation(len(Xtr))
        total = 0.0
        for s in range(0, len(Xtr), config.batch_size):
            idx = order[s:s + config.batch_size]
            loss = ad.softmax_cross_entropy(mlp(Xtr[idx]), ytr[idx])
            if not np.isfinite(loss.item()):
                raise NumericalError(f"non-finite MLP loss at epoch {epoch}")
            ad.zero_grad(params)
            loss.backward()
            opt.step(params)
            total += loss.item() * len(idx)
        val_acc = float((mlp.predict(Xva) == np.asarray(yva)).mean())
        history.append((epoch, total / len(Xtr), val_acc))
        if val_acc > best_acc:
            best_acc, best_state = val_acc, mlp.state()
    mlp.load_state(best_state)
    return mlp, history
