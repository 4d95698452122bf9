"""Projector cones and the peak selection (inner maximization on cones).

Two cone families are supported:

* ``IndefiniteCone`` — a fixed subspace E (the negative eigenspace) plus the
  ray through the H-orthogonal projection of u onto the complement of E;
  the peak selection maximizes the energy over ``E + R+ * ray``.
* ``SystemCone`` — the product cone of componentwise rays
  ``(t_1 u_1, ..., t_k u_k), t_i >= 0``; E is trivial.

The inner maximization runs a bound-constrained limited-memory quasi-Newton
pass and then polishes with projected Newton steps until the inner gradient
norm drops below ``inner_tol``.  The selection must be accurate: the outer
descent loop compares energies at selected points against decreases of
order ``alpha * s * grad_norm``, which is far below the energy scale.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateRay, DomainViolation, NumericFailure
from .fields import Field

__all__ = [
    "PeakResult",
    "IndefiniteCone",
    "SystemCone",
    "peak_select",
    "project_ray",
    "nehari_residuals",
    "DELTA_A",
    "INNER_TOL",
]

DELTA_A = 1e-8        # admissibility floor for ray norms
INNER_TOL = 1e-10     # absolute inner gradient tolerance at the optimum
INNER_CAP = 500       # quasi-Newton iteration cap
_RAY_TOL = 1e-9       # ray coordinate at/below this is a boundary maximum
_SAFETY_RAY = 1e-4    # warn when a selected component norm drops below this


def _abs_pow_pm2(s: np.ndarray, p: float) -> np.ndarray:
    """|s|^(p-2), with the quartic case kept free of float-exponent pow."""
    if p == 4.0:
        return s * s
    return np.abs(s) ** (p - 2.0)


@dataclass(frozen=True)
class PeakResult:
    """Outcome of one peak selection.

    ``params`` are the inner-optimum coordinates: ``[c_1..c_d, t]`` for the
    indefinite cone (subspace coefficients plus ray coordinate) or
    ``[t_1..t_k]`` for the system cone.  ``grad_norm`` is the inner
    objective's gradient norm at the optimum.
    """

    point: Field
    params: np.ndarray
    grad_norm: float
    iterations: int


def _maximize(fun_grad, hess, x0, lower_bounded, inner_tol=INNER_TOL,
              cap=INNER_CAP):
    """Maximize a smooth objective with optional t >= 0 bounds.

    Warm starts (the common case inside the outer iteration) are finished
    by a few projected Newton steps; cold or bound-active starts fall back
    to bound-constrained L-BFGS-B and are then Newton-certified down to
    ``inner_tol``.  Returns (x, projected_grad_norm, iterations).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    lb = np.asarray(lower_bounded, dtype=bool)

    def projected(g, x):
        pg = g.copy()
        at_bound = lb & (x <= 0.0)
        pg[at_bound] = np.maximum(pg[at_bound], 0.0)
        return pg

    def newton(x, rounds):
        """Projected Newton while the Hessian stays negative definite."""
        _, g = fun_grad(x)
        pg_norm = float(np.linalg.norm(projected(g, x)))
        used = 0
        for _ in range(rounds):
            if pg_norm <= inner_tol:
                return x, pg_norm, used, True
            free = ~(lb & (x <= 0.0) & (g <= 0.0))
            H = hess(x)[np.ix_(free, free)]
            try:
                if np.linalg.eigvalsh(H).max() >= 0.0:
                    return x, pg_norm, used, False
                step = np.linalg.solve(H, -g[free])
            except np.linalg.LinAlgError:
                return x, pg_norm, used, False
            if not np.all(np.isfinite(step)):
                return x, pg_norm, used, False
            used += 1
            improved = False
            scale = 1.0
            for _ in range(10):
                x_try = x.copy()
                x_try[free] = x[free] + scale * step
                x_try[lb] = np.maximum(x_try[lb], 0.0)
                _, g_try = fun_grad(x_try)
                trial_norm = float(np.linalg.norm(projected(g_try, x_try)))
                if trial_norm < pg_norm:
                    x, g, pg_norm = x_try, g_try, trial_norm
                    improved = True
                    break
                scale *= 0.5
            if not improved:
                return x, pg_norm, used, False
        return x, pg_norm, used, pg_norm <= inner_tol

    x, pg_norm, iters, done = newton(x0, 8)
    if not done:
        def negated(z):
            f, g = fun_grad(z)
            return -f, -g

        bounds = [(0.0, None) if b else (None, None) for b in lower_bounded]
        res = minimize(negated, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": cap, "ftol": 1e-18,
                                "gtol": 0.1 * inner_tol, "maxls": 60})
        iters += int(res.nit)
        x, pg_norm, used, done = newton(np.asarray(res.x, dtype=np.float64), 30)
        iters += used

    if pg_norm > inner_tol:
        raise NumericFailure(
            f"inner maximization stalled at gradient norm {pg_norm!r} "
            f"(tolerance {inner_tol})"
        )
    return x, pg_norm, iters


class IndefiniteCone:
    """Cone E + R+ * ray attached to u, with E the negative eigenspace.

    The single projector maps onto the H-orthogonal complement of E, so the
    ray direction is the normalized projection of u.  ``basis`` holds the
    H-orthonormal columns spanning E (possibly zero columns).
    """

    kind = "indefinite"

    def __init__(self, basis: np.ndarray, stiffness, delta_a: float = DELTA_A,
                 inner_tol: float = INNER_TOL):
        self.basis = np.asarray(basis, dtype=np.float64)
        self.stiffness = stiffness
        self.delta_a = float(delta_a)
        self.inner_tol = float(inner_tol)

    @property
    def dim_e(self) -> int:
        return self.basis.shape[1]

    def split(self, vec: np.ndarray):
        """E-coefficients, complement part, and its H-norm."""
        c = self.basis.T @ (self.stiffness.matrix @ vec)
        perp = vec - self.basis @ c
        t = float(np.sqrt(max(perp @ (self.stiffness.matrix @ perp), 0.0)))
        return c, perp, t

    def project_ray(self, u: Field) -> Field:
        c, perp, t = self.split(u.data[0])
        if t < self.delta_a:
            raise DomainViolation(
                f"projection norm {t!r} below admissibility floor "
                f"{self.delta_a}"
            )
        return Field(u.mesh, perp / t)

    def select(self, problem, u: Field, warm_start=None,
               check_uniqueness: bool = False) -> PeakResult:
        c0, perp, tn = self.split(u.data[0])
        if tn < self.delta_a:
            raise DomainViolation(
                f"projection norm {tn!r} below admissibility floor "
                f"{self.delta_a}; input is outside the admissible set"
            )
        w = perp / tn
        cols = np.hstack([self.basis, w[:, None]])  # (m, d+1)
        Q = cols.T @ (problem.K.matrix @ cols)
        Q = 0.5 * (Q + Q.T)
        psi = problem.quad.interp @ cols             # (Nq, d+1)
        wts = problem.quad.weights
        p = problem.p

        def fun_grad(x):
            s = psi @ x
            sp2 = _abs_pow_pm2(s, p)
            qx = Q @ x
            f = 0.5 * float(x @ qx) - float(wts @ (sp2 * s * s)) / p
            g = qx - psi.T @ (wts * (sp2 * s))
            return f, g

        def hess(x):
            s = psi @ x
            d2 = (p - 1.0) * _abs_pow_pm2(s, p)
            return Q - psi.T @ (psi * (wts * d2)[:, None])

        if warm_start is not None:
            x0 = np.asarray(warm_start, dtype=np.float64)
            if x0.shape != (self.dim_e + 1,):
                raise ValueError("warm start has wrong length")
        else:
            x0 = np.append(c0, tn)
        lower = [False] * self.dim_e + [True]
        x, pg, iters = _maximize(fun_grad, hess, x0, lower, self.inner_tol)

        t_opt = float(x[-1])
        if t_opt <= _RAY_TOL * max(1.0, tn):
            raise DegenerateRay(
                "inner maximum sits on the cone boundary (ray coordinate "
                f"{t_opt!r}); peak selection is undefined there",
                vanished=(0,),
            )
        if check_uniqueness:
            x_alt, _, _ = _maximize(fun_grad, hess, x0 * 1.37 + 0.1, lower,
                                    self.inner_tol)
            if abs(fun_grad(x_alt)[0] - fun_grad(x)[0]) > 1e-6:
                warnings.warn("peak selection may have multiple maxima: "
                              "restart disagreed in energy", stacklevel=2)
        point = Field(u.mesh, cols @ x)
        return PeakResult(point, x.copy(), pg, iters)


class SystemCone:
    """Product cone of componentwise rays for k-component fields."""

    kind = "system"

    def __init__(self, k: int, stiffness, delta_a: float = DELTA_A,
                 inner_tol: float = INNER_TOL):
        self.k = int(k)
        self.stiffness = stiffness
        self.delta_a = float(delta_a)
        self.inner_tol = float(inner_tol)

    def _component_norms(self, u: Field) -> np.ndarray:
        au = (self.stiffness.matrix @ u.data.T).T
        return np.sqrt(np.maximum(np.einsum("ij,ij->i", u.data, au), 0.0))

    def project_ray(self, u: Field) -> Field:
        norms = self._component_norms(u)
        if np.any(norms < self.delta_a):
            i = int(np.argmin(norms))
            raise DomainViolation(
                f"component {i} has H-norm {norms[i]!r} below the "
                f"admissibility floor {self.delta_a}"
            )
        return Field(u.mesh, u.data / norms[:, None])

    def select(self, problem, u: Field, warm_start=None,
               check_uniqueness: bool = False) -> PeakResult:
        norms = self._component_norms(u)
        if np.any(norms < self.delta_a):
            i = int(np.argmin(norms))
            raise DomainViolation(
                f"component {i} has H-norm {norms[i]!r} below the "
                f"admissibility floor {self.delta_a}; input is outside "
                "the admissible set"
            )
        # optimize over tau_i = t_i |u_i|_H (ray-normalized coordinates) so
        # the objective and the gradient tolerance are input-scale invariant
        svals = problem.quad.values(u.data)           # (k, Nq)
        s2 = (svals / norms[:, None]) ** 2
        G = (s2 * problem.quad.weights) @ s2.T        # int w_i^2 w_j^2
        coup = problem.beta * G
        np.fill_diagonal(coup, problem.mu * np.diagonal(G))

        def fun_grad(tau):
            t2 = tau * tau
            ct2 = coup @ t2
            f = 0.5 * float(t2.sum()) - 0.25 * float(t2 @ ct2)
            g = tau * (1.0 - ct2)
            return f, g

        def hess(tau):
            t2 = tau * tau
            h = -2.0 * coup * np.outer(tau, tau)
            h[np.diag_indices_from(h)] += 1.0 - coup @ t2
            return h

        if warm_start is not None:
            t0 = np.asarray(warm_start, dtype=np.float64)
            if t0.shape != (self.k,):
                raise ValueError("warm start has wrong length")
            x0 = t0 * norms
        else:
            x0 = norms.copy()
        tau, pg, iters = _maximize(fun_grad, hess, x0, [True] * self.k,
                                   self.inner_tol)

        t_opt = tau / norms
        dead = np.flatnonzero(t_opt <= _RAY_TOL)
        if dead.size:
            raise DegenerateRay(
                "inner maximum sits on the cone boundary (ray coordinates "
                f"{t_opt[dead]!r} for components {dead.tolist()}); peak "
                "selection is undefined there",
                vanished=tuple(int(i) for i in dead),
            )
        if check_uniqueness:
            x_alt, _, _ = _maximize(fun_grad, hess, x0 * 1.37 + 0.1,
                                    [True] * self.k, self.inner_tol)
            if abs(fun_grad(x_alt)[0] - fun_grad(tau)[0]) > 1e-6:
                warnings.warn("peak selection may have multiple maxima: "
                              "restart disagreed in energy", stacklevel=2)
        if np.any(tau < _SAFETY_RAY):
            warnings.warn(
                f"selected components {np.flatnonzero(tau < _SAFETY_RAY).tolist()} "
                f"have H-norm below {_SAFETY_RAY}; the cone is close to "
                "degenerate",
                stacklevel=2,
            )
        point = Field(u.mesh, u.data * t_opt[:, None])
        return PeakResult(point, t_opt.copy(), pg, iters)


def peak_select(cone, problem, u: Field, warm_start=None,
                check_uniqueness: bool = False) -> PeakResult:
    """Maximize the problem energy over the cone attached to ``u``."""
    return cone.select(problem, u, warm_start=warm_start,
                       check_uniqueness=check_uniqueness)


def project_ray(cone, u: Field) -> Field:
    """Normalized ray direction(s) of ``u`` in the cone's parameterization."""
    return cone.project_ray(u)


def nehari_residuals(problem, u: Field) -> np.ndarray:
    """First-order residuals of the natural constraint at ``u``.

    System problems: ``r_i = |grad u_i|^2_L2 - int dF_i(u) u_i`` per
    component.  Indefinite problems: the derivative of the energy along u
    itself, followed by the derivatives along each basis vector of the
    negative eigenspace.  All residuals vanish (to inner tolerance) at a
    selected point.
    """
    residual = problem.weak_gradient(u)
    if problem.kind == "system":
        return np.einsum("ij,ij->i", u.data, residual)
    out = [float(u.data[0] @ residual[0])]
    basis = problem.basis.vectors
    out.extend(float(basis[:, j] @ residual[0]) for j in range(basis.shape[1]))
    return np.asarray(out)
