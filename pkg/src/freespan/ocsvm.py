"""One-class SVM with an RBF kernel, trained in the dual by SMO.

Dual problem (alpha scaled so it sums to one)::

    minimise   0.5 * a^T Q a
    subject to 0 <= a_i <= 1 / (nu * n),   sum(a) = 1,   Q_ij = k(t_i, t_j)

and the anomaly score is ``f(t) = sum_i a_i k(sv_i, t) - rho``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

OCSVM_FORMAT = 1
DEFAULT_NU = 0.1
KKT_TOL = 1e-3
MAX_ITER = 1_000_000

NORMAL = "normal"
ANOMALOUS = "anomalous"


class ConvergenceError(RuntimeError):
    def __init__(self, violation: float, n_iter: int):
        super().__init__(f"SMO did not converge after {n_iter} iterations (KKT violation {violation:.3g})")
        self.violation = violation
        self.n_iter = n_iter


@dataclass(frozen=True, eq=False)
class OcsvmModel:
    support_vectors: np.ndarray  # (S, K)
    alphas: np.ndarray  # (S,)
    rho: float
    gamma: float
    nu: float
    n_train: int = 0
    kkt_violation: float = 0.0
    n_iter: int = 0

    def to_dict(self) -> dict:
        return {
            "ocsvm_format": OCSVM_FORMAT,
            "support_vectors": self.support_vectors.tolist(),
            "alphas": self.alphas.tolist(),
            "rho": float(self.rho),
            "gamma": float(self.gamma),
            "nu": float(self.nu),
            "n_train": int(self.n_train),
            "kkt_violation": float(self.kkt_violation),
            "n_iter": int(self.n_iter),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OcsvmModel":
        if d.get("ocsvm_format") != OCSVM_FORMAT:
            raise ValueError(f"unsupported ocsvm_format {d.get('ocsvm_format')!r}")
        sv = np.asarray(d["support_vectors"], dtype=float)
        return cls(
            support_vectors=sv.reshape(len(d["alphas"]), -1),
            alphas=np.asarray(d["alphas"], dtype=float),
            rho=float(d["rho"]),
            gamma=float(d["gamma"]),
            nu=float(d["nu"]),
            n_train=int(d.get("n_train", 0)),
            kkt_violation=float(d.get("kkt_violation", 0.0)),
            n_iter=int(d.get("n_iter", 0)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict()) + "\n"


def rbf_kernel(a, b, gamma: float) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    d = a - b
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    """Kernel matrix between rows of A and rows of B.

    Each entry depends only on its own pair of rows (no BLAS blocking), so a
    point scores bit-identically whether it is scored alone or in a batch.
    """
    d = A[:, None, :] - B[None, :, :]
    return np.exp(-gamma * np.sum(d * d, axis=-1))


def _expansion(T: np.ndarray, sv: np.ndarray, alphas: np.ndarray, gamma: float) -> np.ndarray:
    return np.sum(rbf_matrix(T, sv, gamma) * alphas, axis=1)


def default_gamma(T: np.ndarray) -> float:
    """``1 / (K * Var(T))`` over all entries of the training latents."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    var = float(T.var())
    if not var > 0:
        return 1.0 / T.shape[1]
    return 1.0 / (T.shape[1] * var)


def _rho(G: np.ndarray, a: np.ndarray, C: float, T: np.ndarray, gamma: float) -> float:
    free = (a > 0) & (a < C)
    if free.any():
        # free SVs sit on the boundary; their expansions agree to rounding,
        # take the smallest so none of them scores below zero
        sv = a > 0
        return float(_expansion(T[free], T[sv], a[sv], gamma).min())
    # rho lies in [max G over a == C, min G over a == 0]
    at_c = G[a >= C]
    at_0 = G[a <= 0]
    lo = at_c.max() if at_c.size else None
    hi = at_0.min() if at_0.size else None
    if lo is None:
        return float(hi)
    if hi is None:
        return float(lo)
    return float(0.5 * (lo + hi))


def _violation(G: np.ndarray, a: np.ndarray, C: float) -> float:
    up = a < C
    low = a > 0
    if not up.any() or not low.any():
        return 0.0
    return max(0.0, float(G[low].max() - G[up].min()))


def _polish(Q: np.ndarray, a: np.ndarray, C: float) -> np.ndarray | None:
    """Solve the equality-constrained QP on the current free set exactly."""
    at_c = a >= C
    free = (a > 0) & ~at_c
    if not free.any():
        return None
    F = np.flatnonzero(free)
    m = F.size
    A = np.zeros((m + 1, m + 1))
    A[:m, :m] = Q[np.ix_(F, F)]
    A[:m, m] = -1.0
    A[m, :m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[:m] = -C * Q[np.ix_(F, np.flatnonzero(at_c))].sum(axis=1)
    rhs[m] = 1.0 - C * at_c.sum()
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)) or np.any(sol[:m] <= 0) or np.any(sol[:m] >= C):
        return None
    out = np.where(at_c, C, 0.0)
    out[F] = sol[:m]
    return out


def _initial_alphas(n: int, C: float) -> np.ndarray:
    a = np.zeros(n)
    n_full = min(n, int(np.floor(1.0 / C + 1e-12)))
    a[:n_full] = C
    if n_full < n:
        a[n_full] = 1.0 - n_full * C
    return a


def _smo(
    Q: np.ndarray, a: np.ndarray, C: float, tol: float, max_iter: int, it: int = 0
) -> tuple[np.ndarray, int, float]:
    """Two-coordinate descent from ``a`` (modified in place)."""
    G = Q @ a
    diag = np.diag(Q)
    while True:
        up = a < C
        low = a > 0
        if not up.any() or not low.any():
            return a, it, 0.0
        G_up = np.where(up, G, np.inf)
        i = int(np.argmin(G_up))
        g_max = float(np.max(np.where(low, G, -np.inf)))
        viol = g_max - G[i]
        if viol < tol:
            return a, it, max(viol, 0.0)
        if it >= max_iter:
            raise ConvergenceError(viol, it)
        # second-order working-set selection for j
        b = G - G[i]
        cand = low & (b > 0)
        curv = diag[i] + diag - 2.0 * Q[i]
        curv = np.where(curv > 1e-12, curv, 1e-12)
        gain = np.where(cand, b * b / curv, -np.inf)
        j = int(np.argmax(gain))
        step = b[j] / curv[j]
        step_cap = min(C - a[i], a[j])
        if step >= step_cap:
            step = step_cap
            if C - a[i] <= a[j]:
                a_i_new, a_j_new = C, a[j] - step
            else:
                a_i_new, a_j_new = a[i] + step, 0.0
        else:
            a_i_new, a_j_new = a[i] + step, a[j] - step
        d_i, d_j = a_i_new - a[i], a_j_new - a[j]
        a[i], a[j] = a_i_new, a_j_new
        G += d_i * Q[:, i] + d_j * Q[:, j]
        it += 1


def fit_ocsvm(
    T,
    nu: float = DEFAULT_NU,
    gamma: float | None = None,
    tol: float = KKT_TOL,
    max_iter: int = MAX_ITER,
    polish: bool = True,
) -> OcsvmModel:
    """Train on latent vectors ``T`` (n, K).

    SMO runs until the maximal KKT violation drops below ``tol``. With
    ``polish`` the free-set system is then solved exactly and kept if it
    stays feasible and does not worsen the violation.
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if not (0 < nu <= 1):
        raise ValueError("invalid nu")
    n = T.shape[0]
    if n < 1:
        raise ValueError("empty training set")
    if gamma is None:
        gamma = default_gamma(T)
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    C = 1.0 / (nu * n)
    Q = rbf_matrix(T, T, gamma)

    a, n_iter, viol = _smo(Q, _initial_alphas(n, C), C, tol, max_iter)
    if polish:
        # the free set found at ``tol`` may still be wrong; tighten until the
        # exact free-set solution is feasible
        inner = tol
        while True:
            a2 = _polish(Q, a, C)
            if a2 is not None:
                v2 = _violation(Q @ a2, a2, C)
                if v2 <= max(viol, 1e-12):
                    a, viol = a2, v2
                    break
            if inner <= 1e-12 or viol <= 1e-12:
                break
            inner *= 1e-3
            a, n_iter, viol = _smo(Q, a, C, inner, max_iter, n_iter)
    G = Q @ a
    rho = _rho(G, a, C, T, gamma)
    sv = a > 0
    log.debug("ocsvm n=%d nu=%g gamma=%g: %d SVs, %d iterations", n, nu, gamma, sv.sum(), n_iter)
    return OcsvmModel(
        support_vectors=T[sv].copy(),
        alphas=a[sv].copy(),
        rho=rho,
        gamma=float(gamma),
        nu=float(nu),
        n_train=n,
        kkt_violation=float(viol),
        n_iter=n_iter,
    )


def dual_objective(model: OcsvmModel) -> float:
    K = rbf_matrix(model.support_vectors, model.support_vectors, model.gamma)
    return 0.5 * float(model.alphas @ K @ model.alphas)


def decision_function(model: OcsvmModel, t) -> np.ndarray | float:
    """Anomaly score; accepts a single vector or a matrix of row vectors."""
    t = np.asarray(t, dtype=float)
    single = t.ndim == 1
    T = np.atleast_2d(t)
    if T.shape[1] != model.support_vectors.shape[1]:
        raise ValueError("dimension mismatch")
    f = _expansion(T, model.support_vectors, model.alphas, model.gamma) - model.rho
    return float(f[0]) if single else f


def label_of(score: float) -> str:
    return ANOMALOUS if score < 0 else NORMAL


def classify(model: OcsvmModel, t):
    f = decision_function(model, t)
    if np.ndim(f) == 0:
        return label_of(f)
    return [label_of(v) for v in f]
