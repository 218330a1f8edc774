"""Optimal transport solvers.

``sinkhorn`` is the workhorse (entropic OT, log-domain by default).
``exact_ot`` and ``exact_ot_permutations`` are exact solvers for small
instances, used to check the entropic solver.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg, sparse
from scipy.optimize import linprog

from geospot.cost import CostMatrix, CostTriplet
from geospot.errors import ConfigError, SolverError
from geospot.measures import EmpiricalMeasure

EXACT_LP_MAX_ENTRIES = 10_000
EXACT_PERM_MAX_N = 8


@dataclass(frozen=True)
class SinkhornConfig:
    epsilon: float = 0.01
    max_iterations: int = 10_000
    tolerance: float = 1e-9
    log_stabilized: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "SinkhornConfig":
        return cls(
            epsilon=float(d.get("epsilon", 0.01)),
            max_iterations=int(d.get("max_iterations", 10_000)),
            tolerance=float(d.get("tolerance", 1e-9)),
            log_stabilized=bool(d.get("log_stabilized", True)),
        )


@dataclass(frozen=True)
class TransportPlan:
    matrix: np.ndarray
    cost_value: float
    iterations_used: int = 0
    converged: bool = True
    marginal_error: float = 0.0


@dataclass(frozen=True)
class DistanceResult:
    """Sinkhorn divergence ``cross - (self_src + self_tgt) / 2`` and its parts."""

    value: float
    cross_cost: float
    self_cost_src: float
    self_cost_tgt: float
    config: SinkhornConfig
    diagnostics: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return all(d["converged"] for d in self.diagnostics.values())

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "cross_cost": self.cross_cost,
            "self_cost_src": self.self_cost_src,
            "self_cost_tgt": self.self_cost_tgt,
            "converged": self.converged,
            "sinkhorn": self.config.to_dict(),
            "diagnostics": self.diagnostics,
        }


def _values(cost) -> np.ndarray:
    if isinstance(cost, CostMatrix):
        return cost.values
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    return c


def _check_weights(a, b, shape) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != (shape[0],) or b.shape != (shape[1],):
        raise ValueError(f"weights of shape {a.shape}, {b.shape} do not fit a {shape} cost matrix")
    if (a < 0).any() or (b < 0).any():
        raise ValueError("weights must be nonnegative")
    if abs(a.sum() - 1.0) > 1e-9 or abs(b.sum() - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    return a, b


# ---------------------------------------------------------------------------
# exact solvers


def exact_ot(cost, src_weights, tgt_weights) -> tuple[float, TransportPlan]:
    """Exact OT by linear programming (HiGHS dual simplex, vertex solution)."""
    C = _values(cost)
    n, m = C.shape
    if n * m > EXACT_LP_MAX_ENTRIES:
        raise SolverError(f"instance too large for the exact solver ({n}x{m} > {EXACT_LP_MAX_ENTRIES} entries)")
    a, b = _check_weights(src_weights, tgt_weights, C.shape)
    # plan flattened row-major: x[i*m + j]
    rows = sparse.kron(sparse.eye(n), np.ones((1, m)))
    cols = sparse.kron(np.ones((1, n)), sparse.eye(m))
    A_eq = sparse.vstack([rows, cols]).tocsr()
    b_eq = np.concatenate([a, b])
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise SolverError(f"exact OT failed: {res.message}")
    P = np.clip(res.x.reshape(n, m), 0.0, None)
    value = float(np.sum(P * C))
    return value, TransportPlan(P, value, int(getattr(res, "nit", 0)), True, _marginal_error(P, a, b))


def exact_ot_permutations(cost) -> tuple[float, np.ndarray]:
    """Brute force over permutations for square uniform problems (n <= 8).

    With equal uniform marginals an optimal vertex is a permutation matrix.
    Returns (value, best permutation).
    """
    C = _values(cost)
    n = C.shape[0]
    if C.shape != (n, n):
        raise ValueError("permutation enumeration needs a square cost matrix")
    if n > EXACT_PERM_MAX_N:
        raise SolverError(f"instance too large for enumeration (n={n} > {EXACT_PERM_MAX_N})")
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    totals = C[np.arange(n), perms].sum(axis=1)
    k = int(np.argmin(totals))
    return float(totals[k] / n), perms[k]


# ---------------------------------------------------------------------------
# Sinkhorn


def _marginal_error(P, a, b) -> float:
    return float(np.abs(P.sum(axis=1) - a).sum() + np.abs(P.sum(axis=0) - b).sum())


def _lse(M: np.ndarray, axis: int) -> np.ndarray:
    mx = M.max(axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    return (np.log(np.exp(M - mx).sum(axis=axis, keepdims=True)) + mx).squeeze(axis)


class _Dual:
    """Dual potentials (f, g) of one entropic problem and helpers on them."""

    def __init__(self, C, a, b, eps):
        self.C, self.a, self.b, self.eps = C, a, b, eps
        self.log_a, self.log_b = np.log(a), np.log(b)

    def plan(self, f, g):
        with np.errstate(over="ignore", under="ignore"):
            return np.exp((f[:, None] + g[None, :] - self.C) / self.eps + self.log_a[:, None] + self.log_b[None, :])

    def g_update(self, f):
        return -self.eps * _lse((f[:, None] - self.C) / self.eps + self.log_a[:, None], axis=0)

    def f_update(self, g):
        return -self.eps * _lse((g[None, :] - self.C) / self.eps + self.log_b[None, :], axis=1)

    def objective(self, f, g, P):
        return float(f @ self.a + g @ self.b - self.eps * P.sum())


def _symmetric_log(dual: _Dual, cfg: SinkhornConfig, budget: int):
    """Averaged fixed-point iteration f <- (f + T f) / 2 for symmetric problems.

    Converges to the same plan as alternating updates but in far fewer
    steps when the cost has a zero diagonal.
    """
    f = np.zeros(dual.C.shape[0])
    for it in range(1, budget + 1):
        Tf = dual.f_update(f)
        est = 2.0 * float(np.abs(dual.a * np.expm1((f - Tf) / dual.eps)).sum())
        if est <= cfg.tolerance:
            P = dual.plan(f, f)
            if _marginal_error(P, dual.a, dual.b) <= cfg.tolerance:
                return f, f, it, True
        f = 0.5 * (f + Tf)
    return f, f, budget, False


def _stabilized_scaling(dual: _Dual, f, g, cfg: SinkhornConfig, budget: int, absorb_at: float = 1e30):
    """Alternating Sinkhorn updates with kernel absorption.

    Scaling vectors u, v run on the kernel exp((f + g - C) / eps) and are
    folded back into the potentials whenever they leave [1/absorb_at, absorb_at].
    Equivalent to log-domain iterations, at matvec cost per step.
    """
    a, b, eps = dual.a, dual.b, dual.eps
    it = 0
    while it < budget:
        # exact log-domain step keeps every kernel row/column non-degenerate
        g = dual.g_update(f)
        f_next = dual.f_update(g)
        it += 1
        est = float(np.abs(a * np.expm1((f - f_next) / eps)).sum())
        if est <= cfg.tolerance and _marginal_error(dual.plan(f, g), a, b) <= cfg.tolerance:
            return f, g, it, True
        f = f_next
        K = dual.plan(f, g)
        u = np.ones_like(a)
        v = np.ones_like(b)
        while it < budget:
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                v_new = b / (K.T @ u)
                Kv = K @ v_new
                row = u * Kv
            if not (np.isfinite(v_new).all() and np.isfinite(row).all() and (Kv > 0).all()):
                break
            v = v_new
            it += 1
            if float(np.abs(row - a).sum()) <= cfg.tolerance:
                fa, ga = f + eps * np.log(u), g + eps * np.log(v)
                if _marginal_error(dual.plan(fa, ga), a, b) <= cfg.tolerance:
                    return fa, ga, it, True
            u = a / Kv
            if max(u.max(), v.max()) > absorb_at or min(u.min(), v.min()) < 1.0 / absorb_at:
                break
        f = f + eps * np.log(u)
        g = g + eps * np.log(v)
    return f, g, it, False


def _newton_polish(dual: _Dual, f, g, cfg: SinkhornConfig, budget: int):
    """Damped Newton ascent on the concave dual, with Armijo backtracking.

    One potential is pinned to remove the additive gauge freedom; a tiny ridge
    keeps the system solvable when the plan support is disconnected.
    """
    a, b, eps = dual.a, dual.b, dual.eps
    n, m = dual.C.shape
    g = dual.g_update(f)
    P = dual.plan(f, g)
    for it in range(1, budget + 1):
        r_row = a - P.sum(axis=1)
        r_col = b - P.sum(axis=0)
        if float(np.abs(r_row).sum() + np.abs(r_col).sum()) <= cfg.tolerance:
            return f, g, it - 1, True
        H = np.empty((n + m - 1, n + m - 1))
        H[:n, :n] = np.diag(P.sum(axis=1))
        H[n:, n:] = np.diag(P.sum(axis=0)[:-1])
        H[:n, n:] = P[:, :-1]
        H[n:, :n] = P[:, :-1].T
        H[np.diag_indices_from(H)] += 1e-12 * H.diagonal().max()
        grad = np.concatenate([r_row, r_col[:-1]])
        try:
            step = eps * linalg.solve(H, grad, assume_a="pos")
        except linalg.LinAlgError:
            step = eps * linalg.lstsq(H, grad)[0]
        df, dg = step[:n], np.append(step[n:], 0.0)
        base = dual.objective(f, g, P)
        slope = float(grad @ step)
        t = 1.0
        while t > 1e-12:
            Pt = dual.plan(f + t * df, g + t * dg)
            if np.isfinite(Pt).all() and dual.objective(f + t * df, g + t * dg, Pt) >= base + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            return f, g, it, False
        f, g, P = f + t * df, g + t * dg, Pt
    return f, g, budget, False


NEWTON_MAX_VARIABLES = 4000


def _sinkhorn_log(C, a, b, cfg: SinkhornConfig) -> TransportPlan:
    dual = _Dual(C, a, b, cfg.epsilon)
    n, m = C.shape
    used = 0
    f = g = None
    converged = False
    if n == m and np.array_equal(a, b) and np.allclose(C, C.T, rtol=0, atol=1e-12 * max(1.0, np.abs(C).max())):
        f, g, used, converged = _symmetric_log(dual, cfg, min(cfg.max_iterations, 1000))
    if not converged:
        f0 = np.zeros(n) if f is None else f
        newton_ok = n + m <= NEWTON_MAX_VARIABLES
        # leave part of the budget for Newton when it is available
        sk_budget = cfg.max_iterations - used
        if newton_ok:
            sk_budget = min(sk_budget, max(200, (cfg.max_iterations - used) // 10))
        f, g, it, converged = _stabilized_scaling(dual, f0, g, cfg, sk_budget)
        used += it
        if not converged and newton_ok and used < cfg.max_iterations:
            f, g, it, converged = _newton_polish(dual, f, g, cfg, min(200, cfg.max_iterations - used))
            used += it
    P = dual.plan(f, g)
    if not np.isfinite(P).all():
        raise SolverError("numerical overflow in log-domain Sinkhorn")
    err = _marginal_error(P, a, b)
    return TransportPlan(P, float(np.sum(P * C)), used, err <= cfg.tolerance, err)


def _sinkhorn_scaling(C, a, b, cfg: SinkhornConfig) -> TransportPlan:
    """Textbook scaling iterations on exp(-C / eps); fails loudly on under/overflow."""
    K = np.exp(-C / cfg.epsilon)
    if not (K.sum(axis=1) > 0).all() or not (K.sum(axis=0) > 0).all():
        raise SolverError(
            f"numerical overflow: kernel underflows at epsilon={cfg.epsilon}; use log_stabilized=True"
        )
    u = np.ones_like(a)
    v = np.ones_like(b)
    it = 0
    with np.errstate(over="raise", divide="raise", invalid="raise"):
        try:
            while it < cfg.max_iterations:
                it += 1
                v = b / (K.T @ u)
                Kv = K @ v
                if float(np.abs(u * Kv - a).sum()) <= cfg.tolerance:
                    break
                u = a / Kv
        except FloatingPointError as e:
            raise SolverError(f"numerical overflow in Sinkhorn scaling ({e})") from None
    P = u[:, None] * K * v[None, :]
    if not np.isfinite(P).all():
        raise SolverError("numerical overflow in Sinkhorn scaling")
    err = _marginal_error(P, a, b)
    return TransportPlan(P, float(np.sum(P * C)), it, err <= cfg.tolerance, err)


def sinkhorn(cost, src_weights, tgt_weights, config: SinkhornConfig | None = None) -> tuple[float, TransportPlan]:
    """Entropic OT plan and its transport cost <plan, cost>.

    The entropy term is not included in the returned value. Non-convergence
    is reported through ``plan.converged`` rather than raised.
    """
    config = config or SinkhornConfig()
    C = _values(cost)
    if not np.isfinite(C).all():
        raise ValueError("cost matrix has non-finite entries")
    a, b = _check_weights(src_weights, tgt_weights, C.shape)
    if (a == 0).any() or (b == 0).any():
        raise ValueError("Sinkhorn needs strictly positive weights")
    if 1 in C.shape:
        # a single point on either side admits exactly one coupling
        P = a[:, None] * b[None, :]
        plan = TransportPlan(P, float(np.sum(P * C)), 0, True, _marginal_error(P, a, b))
        return plan.cost_value, plan
    solver = _sinkhorn_log if config.log_stabilized else _sinkhorn_scaling
    plan = solver(C, a, b, config)
    return plan.cost_value, plan


def _diag(plan: TransportPlan) -> dict:
    return {
        "iterations": plan.iterations_used,
        "converged": bool(plan.converged),
        "marginal_error": plan.marginal_error,
    }


CostBuilder = Callable[[EmpiricalMeasure, EmpiricalMeasure], CostTriplet]


def _content_key(m: EmpiricalMeasure) -> bytes:
    h = hashlib.sha256()
    h.update(repr(m.index).encode())
    h.update(np.ascontiguousarray(m.coords).tobytes())
    for name in sorted(m.embeddings):
        h.update(name.encode())
        h.update(np.ascontiguousarray(m.embeddings[name]).tobytes())
    return h.digest()


def sinkhorn_divergence(
    src: EmpiricalMeasure,
    tgt: EmpiricalMeasure,
    cost_builder: CostBuilder,
    config: SinkhornConfig | None = None,
) -> DistanceResult:
    """Debiased entropic OT: OT(a, b) - (OT(a, a) + OT(b, b)) / 2.

    The pair is solved in an orientation fixed by the measures' content, so
    swapping the arguments gives a bit-identical value.
    """
    config = config or SinkhornConfig()
    swap = _content_key(src) > _content_key(tgt)
    first, second = (tgt, src) if swap else (src, tgt)
    costs = cost_builder(first, second)
    a, b = first.weights, second.weights
    cross, p_cross = sinkhorn(costs.cross, a, b, config)
    self_1, p_1 = sinkhorn(costs.src_self, a, a, config)
    self_2, p_2 = sinkhorn(costs.tgt_self, b, b, config)
    if swap:
        self_1, self_2, p_1, p_2 = self_2, self_1, p_2, p_1
    return DistanceResult(
        value=cross - 0.5 * (self_1 + self_2),
        cross_cost=cross,
        self_cost_src=self_1,
        self_cost_tgt=self_2,
        config=config,
        diagnostics={"cross": _diag(p_cross), "src_self": _diag(p_1), "tgt_self": _diag(p_2)},
    )
