"""
Weighted hinge-loss solver
Deterministic interior-point method on the dual with a certified duality gap

Solves
    min_{w,b}  1/2 ||w||^2 + sum_i c_i * max(0, 1 - s_i * (x_i.w + a_i*b + o_i))
where b is unregularized (only when fit_bias is set). The dual is
    max_alpha  sum_i alpha_i e_i - 1/2 ||sum_i alpha_i s_i x_i||^2,  0 <= alpha_i <= c_i
with e_i = 1 - s_i o_i, plus sum_i alpha_i s_i a_i = 0 when a bias is fitted.
It is solved by Mehrotra predictor-corrector steps; once the iterates separate
bound from free multipliers, a crossover solves the free ones exactly.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.utils.errors import ValidationError
from src.utils.metrics import record_solve

logger = logging.getLogger(__name__)

# interior-point iterations never need more than this; beyond it the
# Newton systems are too ill-conditioned to make progress
MAX_NEWTON_STEPS = 200

# fraction of the distance to the boundary taken by each step
STEP_FRACTION = 0.995

# largest free set the crossover solves directly
CROSSOVER_LIMIT = 3000


@dataclass(frozen=True)
class HingeProblem:
    """
    One weighted, regularized hinge-loss problem

    examples: m x p solver features
    signs: +1 / -1 per example
    weights: positive penalty per example (C_S or C_T)
    fit_bias: solve for an unregularized offset b
    bias_scale: coefficient a_i multiplying b (ones by default)
    offsets: fixed score offsets o_i (zeros by default)
    factors: optional (L, R) with example row i*K + k equal to
        kron(L[k], R[i]); the solver then forms weighted Gram matrices
        from the factors instead of the m x p rows
    """
    examples: np.ndarray
    signs: np.ndarray
    weights: np.ndarray
    fit_bias: bool = False
    bias_scale: Optional[np.ndarray] = None
    offsets: Optional[np.ndarray] = None
    factors: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        # read-only view; large transform-step matrices are not copied
        examples = np.asarray(self.examples, dtype=np.float64).view()
        signs = np.array(self.signs, dtype=np.float64).reshape(-1)
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)

        if examples.ndim != 2:
            raise ValidationError(f"examples must be an m x p matrix, got shape {examples.shape}")
        m = examples.shape[0]
        if m < 1:
            raise ValidationError("a hinge problem needs at least one example")
        if signs.shape[0] != m or weights.shape[0] != m:
            raise ValidationError(
                f"{m} examples but {signs.shape[0]} signs and {weights.shape[0]} weights"
            )
        if not np.all(np.isin(signs, (-1.0, 1.0))):
            raise ValidationError("signs must be +1 or -1")
        if not np.all(weights > 0) or not np.all(np.isfinite(weights)):
            raise ValidationError("weights must be positive and finite")
        if not np.all(np.isfinite(examples)):
            raise ValidationError("examples contain non-finite values")

        bias_scale = np.ones(m) if self.bias_scale is None else np.array(self.bias_scale, dtype=np.float64).reshape(-1)
        offsets = np.zeros(m) if self.offsets is None else np.array(self.offsets, dtype=np.float64).reshape(-1)
        if bias_scale.shape[0] != m or offsets.shape[0] != m:
            raise ValidationError("bias_scale and offsets need one entry per example")
        if not (np.all(np.isfinite(bias_scale)) and np.all(np.isfinite(offsets))):
            raise ValidationError("bias_scale and offsets must be finite")

        if self.factors is not None:
            left, right = (np.array(f, dtype=np.float64) for f in self.factors)
            if left.ndim != 2 or right.ndim != 2:
                raise ValidationError("factors must be two matrices")
            if left.shape[0] * right.shape[0] != m or left.shape[1] * right.shape[1] != examples.shape[1]:
                raise ValidationError(
                    f"factors of shapes {left.shape} and {right.shape} do not match "
                    f"{m} x {examples.shape[1]} examples"
                )
            left.setflags(write=False)
            right.setflags(write=False)
            object.__setattr__(self, "factors", (left, right))

        for name, value in (("examples", examples), ("signs", signs), ("weights", weights),
                            ("bias_scale", bias_scale), ("offsets", offsets)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "fit_bias", bool(self.fit_bias))

    @property
    def num_examples(self) -> int:
        return int(self.examples.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.examples.shape[1])

    def margins(self, w: np.ndarray, b: float = 0.0) -> np.ndarray:
        """Signed scores s_i * (x_i.w + a_i*b + o_i)"""
        scores = self.examples @ w + self.offsets
        if self.fit_bias:
            scores = scores + self.bias_scale * b
        return self.signs * scores

    def weighted_gram(self, d: np.ndarray) -> np.ndarray:
        """p x p matrix X^T diag(d) X"""
        if self.factors is None:
            return self.examples.T @ (self.examples * d[:, None])

        left, right = self.factors
        K = left.shape[0]
        per_row = d.reshape(right.shape[0], K)
        blocks = np.stack([right.T @ (right * per_row[:, [k]]) for k in range(K)])
        gram = np.einsum("ka,kb,kcd->acbd", left, left, blocks)
        p = self.num_features
        return gram.reshape(p, p)


@dataclass(frozen=True)
class HingeSolution:
    """Solver output with its optimality certificate"""
    w: np.ndarray
    b: float
    objective: float
    suboptimality_bound: float
    converged: bool
    passes: int
    dual_objective: float


def delta(y: int, k: int) -> int:
    """One-vs-all sign: +1 if y == k else -1"""
    return 1 if y == k else -1


def hinge_loss(y: int, k: int, score: float) -> float:
    """
    One-vs-all hinge loss

    Args:
        y: True class index
        k: Class of the binary problem
        score: Precomputed x.theta

    Returns:
        max(0, 1 - delta(y, k) * score)
    """
    return max(0.0, 1.0 - delta(y, k) * float(score))


def objective(problem: HingeProblem, w: np.ndarray, b: float = 0.0) -> float:
    """
    Exact primal objective 1/2 ||w||^2 + sum_i c_i hinge_i

    Args:
        problem: Hinge problem
        w: Weight vector of length p
        b: Offset, used only when the problem fits a bias

    Returns:
        Objective value
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape[0] != problem.num_features:
        raise ValidationError(
            f"w has {w.shape[0]} entries, problem has {problem.num_features} features"
        )
    losses = np.maximum(0.0, 1.0 - problem.margins(w, b))
    return float(0.5 * (w @ w) + problem.weights @ losses)


def best_offset(problem: HingeProblem, w: np.ndarray) -> float:
    """
    Exact minimizer over b of the primal objective for fixed w

    The loss in b is piecewise linear and convex; every breakpoint raises the
    slope by c_i |s_i a_i|, so the minimizer is the first breakpoint at which
    the slope turns non-negative.
    """
    if not problem.fit_bias:
        return 0.0
    v = problem.signs * problem.bias_scale
    active = v != 0.0
    if not np.any(active):
        return 0.0

    q = 1.0 - problem.signs * (problem.examples @ w + problem.offsets)
    breakpoints = q[active] / v[active]
    increments = problem.weights[active] * np.abs(v[active])
    slope = -float(np.sum(problem.weights[active] * np.where(v[active] > 0, v[active], 0.0)))

    order = np.argsort(breakpoints, kind="stable")
    cumulative = slope + np.cumsum(increments[order])
    first = int(np.argmax(cumulative >= 0.0))
    return float(breakpoints[order][first])


class _Dual:
    """Dual data of a hinge problem: s, c, e and the equality row v"""

    def __init__(self, problem: HingeProblem):
        self.problem = problem
        self.X = problem.examples
        self.s = problem.signs
        self.C = problem.weights
        self.e = 1.0 - problem.signs * problem.offsets
        self.v = problem.signs * problem.bias_scale if problem.fit_bias else np.zeros(problem.num_examples)
        self.has_equality = bool(np.any(self.v != 0.0))

    def weights_of(self, alpha: np.ndarray) -> np.ndarray:
        """w = sum_i alpha_i s_i x_i"""
        return self.X.T @ (self.s * alpha)

    def feasible(self, alpha: np.ndarray) -> np.ndarray:
        """Nearby point of the box that also satisfies v.alpha = 0"""
        alpha = np.clip(alpha, 0.0, self.C)
        if not self.has_equality:
            return alpha
        residual = float(self.v @ alpha)
        if residual == 0.0:
            return alpha

        # room to move each coordinate in the direction that shrinks the residual
        lowering = (self.v > 0) == (residual > 0)
        room = np.where(lowering, alpha, self.C - alpha)
        room = np.where(self.v != 0.0, room, 0.0)
        capacity = float(np.abs(self.v) @ room)
        if capacity <= 0.0:
            return alpha
        t = min(abs(residual) / capacity, 1.0)
        return np.clip(alpha + t * np.where(lowering, -room, room), 0.0, self.C)


class _Certificate:
    """Best primal point and best dual value seen so far"""

    def __init__(self, dual: _Dual):
        self.dual_data = dual
        self.w = np.zeros(dual.X.shape[1])
        self.b = 0.0
        self.primal = np.inf
        self.dual = -np.inf

    def update(self, alpha: np.ndarray) -> float:
        problem = self.dual_data.problem
        alpha = self.dual_data.feasible(alpha)
        w = self.dual_data.weights_of(alpha)
        b = best_offset(problem, w)
        primal = objective(problem, w, b)
        if primal < self.primal:
            self.primal = primal
            self.w = w
            self.b = b
        self.dual = max(self.dual, float(alpha @ self.dual_data.e - 0.5 * (w @ w)))
        return self.gap

    @property
    def gap(self) -> float:
        return max(self.primal - self.dual, 0.0)


def _max_step(x: np.ndarray, dx: np.ndarray) -> float:
    shrinking = dx < 0.0
    if not np.any(shrinking):
        return np.inf
    return float(np.min(-x[shrinking] / dx[shrinking]))


class _InteriorPoint:
    """
    Primal-dual path following on the box-constrained dual QP

    Minimizes 1/2 alpha^T Q alpha - e^T alpha over 0 <= alpha <= c (and
    v^T alpha = 0), Q = diag(s) X X^T diag(s). Each Newton system
    (Q + D) dx = g is reduced to p x p by the Woodbury identity when p <= m or
    the problem carries Kronecker factors, and solved as m x m otherwise.
    """

    def __init__(self, dual: _Dual):
        self.dual = dual
        m, p = dual.X.shape
        self.m = m
        self.use_woodbury = dual.problem.factors is not None or p <= m
        self.Q = None if self.use_woodbury else np.outer(dual.s, dual.s) * (dual.X @ dual.X.T)

        self.alpha = 0.5 * dual.C
        gradient = self._gradient(self.alpha)
        # multipliers chosen so the first dual residual vanishes
        self.z_lower = np.maximum(gradient, 0.0) + 1.0
        self.z_upper = np.maximum(-gradient, 0.0) + 1.0
        self.nu = 0.0

    def _gradient(self, alpha: np.ndarray) -> np.ndarray:
        dual = self.dual
        return dual.s * (dual.X @ dual.weights_of(alpha)) - dual.e

    def _solver(self, D: np.ndarray):
        dual = self.dual
        if not self.use_woodbury:
            S = self.Q + np.diag(D)
            return lambda rhs: np.linalg.solve(S, rhs)

        D_inv = 1.0 / D
        M = np.eye(dual.X.shape[1]) + dual.problem.weighted_gram(D_inv)

        def solve_system(rhs: np.ndarray) -> np.ndarray:
            scaled = rhs * D_inv[:, None]
            inner = np.linalg.solve(M, dual.X.T @ (dual.s[:, None] * scaled))
            return scaled - (dual.s[:, None] * (dual.X @ inner)) * D_inv[:, None]

        return solve_system

    def _direction(self, solve_system, rhs: np.ndarray, v_solved: Optional[np.ndarray],
                   residual_eq: float) -> Tuple[np.ndarray, float]:
        x = solve_system(rhs[:, None])[:, 0]
        if v_solved is None:
            return x, 0.0
        d_nu = (float(self.dual.v @ x) + residual_eq) / float(self.dual.v @ v_solved)
        return x - d_nu * v_solved, d_nu

    def step(self) -> bool:
        """One predictor-corrector step; False when the linear algebra breaks down"""
        dual = self.dual
        alpha, zl, zu = self.alpha, self.z_lower, self.z_upper
        upper = dual.C - alpha
        if not (np.all(alpha > 0.0) and np.all(upper > 0.0)):
            return False

        residual = self._gradient(alpha) - zl + zu
        residual_eq = 0.0
        if dual.has_equality:
            residual = residual + self.nu * dual.v
            residual_eq = float(dual.v @ alpha)
        mu = (alpha @ zl + upper @ zu) / (2 * self.m)
        D = zl / alpha + zu / upper

        try:
            solve_system = self._solver(D)
            v_solved = solve_system(dual.v[:, None])[:, 0] if dual.has_equality else None

            # predictor
            d_alpha, _ = self._direction(solve_system, -residual - zl + zu, v_solved, residual_eq)
            d_zl = -zl - zl * d_alpha / alpha
            d_zu = -zu + zu * d_alpha / upper
            t = min(1.0, _max_step(alpha, d_alpha), _max_step(upper, -d_alpha),
                    _max_step(zl, d_zl), _max_step(zu, d_zu))
            mu_affine = ((alpha + t * d_alpha) @ (zl + t * d_zl)
                         + (upper - t * d_alpha) @ (zu + t * d_zu)) / (2 * self.m)
            sigma = min((mu_affine / mu) ** 3, 1.0) if mu > 0 else 0.0

            # corrector
            target_lower = sigma * mu - alpha * zl - d_alpha * d_zl
            target_upper = sigma * mu - upper * zu + d_alpha * d_zu
            rhs = -residual + target_lower / alpha - target_upper / upper
            d_alpha, d_nu = self._direction(solve_system, rhs, v_solved, residual_eq)
        except np.linalg.LinAlgError:
            return False

        d_zl = (target_lower - zl * d_alpha) / alpha
        d_zu = (target_upper + zu * d_alpha) / upper
        if not (np.all(np.isfinite(d_alpha)) and np.all(np.isfinite(d_zl)) and np.all(np.isfinite(d_zu))):
            return False

        t = min(1.0, STEP_FRACTION * min(_max_step(alpha, d_alpha), _max_step(upper, -d_alpha),
                                         _max_step(zl, d_zl), _max_step(zu, d_zu)))
        self.alpha = alpha + t * d_alpha
        self.z_lower = zl + t * d_zl
        self.z_upper = zu + t * d_zu
        self.nu = self.nu + t * d_nu
        return True

    def crossover(self) -> Optional[np.ndarray]:
        """
        Exact dual point for the current guess of bound and free multipliers

        A multiplier is taken to sit at a bound when its bound multiplier
        exceeds its distance to that bound. Free examples lie exactly on the
        margin, which fixes their alpha (and b) through a linear system.
        """
        dual = self.dual
        alpha = self.alpha
        at_lower = self.z_lower > alpha
        at_upper = (self.z_upper > dual.C - alpha) & ~at_lower
        candidate = np.where(at_upper, dual.C, 0.0)

        free = np.flatnonzero(~(at_lower | at_upper))
        if free.size > CROSSOVER_LIMIT:
            return None
        if free.size:
            X_free = dual.X[free]
            s_free = dual.s[free]
            rhs = dual.e[free] - s_free * (X_free @ dual.weights_of(candidate))
            gram = np.outer(s_free, s_free) * (X_free @ X_free.T)
            if dual.has_equality:
                v_free = dual.v[free]
                lhs = np.block([[gram, v_free[:, None]], [v_free[None, :], np.zeros((1, 1))]])
                rhs = np.append(rhs, -float(dual.v @ candidate))
            else:
                lhs = gram
            solution = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
            candidate[free] = np.clip(solution[:free.size], 0.0, dual.C[free])
        return candidate


def _solve_dual(problem: HingeProblem, tol: float, max_passes: int) -> Tuple[_Certificate, int, bool]:
    dual = _Dual(problem)
    cert = _Certificate(dual)
    ipm = _InteriorPoint(dual)
    limit = min(max_passes, MAX_NEWTON_STEPS)

    passes = 0
    next_crossover = np.inf
    while True:
        gap = cert.update(ipm.alpha)
        if gap <= tol:
            return cert, passes, True

        if gap <= min(next_crossover, 1e-2 * (1.0 + abs(cert.primal))):
            next_crossover = 0.1 * gap
            candidate = ipm.crossover()
            if candidate is not None and cert.update(candidate) <= tol:
                return cert, passes, True

        if passes >= limit or not ipm.step():
            break
        passes += 1

    candidate = ipm.crossover()
    if candidate is not None:
        cert.update(candidate)
    return cert, passes, cert.gap <= tol


def solve(problem: HingeProblem, tol: float = 1e-6, max_passes: int = 10000,
          name: str = "hinge") -> HingeSolution:
    """
    Solve a hinge problem to a certified suboptimality

    Args:
        problem: Hinge problem
        tol: Bound on primal objective suboptimality (duality gap)
        max_passes: Cap on interior-point iterations, each a pass over the examples
        name: Label for logs and metrics

    Returns:
        HingeSolution; converged is False when the gap stayed above tol
    """
    if not tol > 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    if max_passes < 1:
        raise ValidationError(f"max_passes must be at least 1, got {max_passes}")

    cert, passes, converged = _solve_dual(problem, tol, max_passes)

    record_solve(name, converged)
    if not converged:
        logger.warning(
            f"{name} solve stopped after {passes} passes with gap {cert.gap:.3e} > tol {tol:.1e}"
        )
    else:
        logger.debug(f"{name} solve: m={problem.num_examples} p={problem.num_features} "
                     f"passes={passes} objective={cert.primal:.10g} gap={cert.gap:.2e}")

    w = np.array(cert.w)
    w.setflags(write=False)
    return HingeSolution(
        w=w,
        b=cert.b,
        objective=cert.primal,
        suboptimality_bound=cert.gap,
        converged=converged,
        passes=passes,
        dual_objective=cert.dual,
    )
