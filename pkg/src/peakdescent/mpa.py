"""Outer constrained steepest-descent loop with admissible stepsizes.

One outer iteration: compute the H-gradient at the current selected point,
walk along the normalized descent direction with a stepsize from the
admissible set, and re-select the peak on the cone attached to the trial
point.  A stepsize s is admissible when the energy of the re-selected
point drops by more than ``alpha * s * grad_norm``; rule "S" additionally
keeps s within a factor 2 of the (dyadic) supremum of the admissible set,
and rule "tilde" demands the drop at every dyadic fraction of s as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cones import SystemCone, peak_select
from .errors import DegenerateRay, DomainViolation, StepsizeUnderflow
from .fields import Field

__all__ = [
    "MpaConfig",
    "MpaStep",
    "MpaTrace",
    "steepest_direction",
    "stepsize_S",
    "stepsize_tilde",
    "run_mpa",
]

_CRITICAL_EPS = 1e-14


@dataclass(frozen=True)
class MpaConfig:
    """Outer-loop parameters.

    ``alpha`` is the decrease coefficient of the admissible-stepsize test;
    ``tilde_grid`` is the dyadic depth of the rule-"tilde" verification
    grid (depth 0 degenerates to rule "S" exactly).
    """

    eps_stop: float = 1e-4
    alpha: float = 0.5
    s_init: float = 1.0
    s_max: float = 1e3
    s_min: float = 1e-12
    max_iters: int = 10_000
    stepsize_rule: str = "S"
    tilde_grid: int = 6

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0.0 < self.s_min < self.s_init <= self.s_max:
            raise ValueError(
                "stepsizes must satisfy 0 < s_min < s_init <= s_max, got "
                f"{self.s_min}, {self.s_init}, {self.s_max}"
            )
        if not self.eps_stop > 0.0:
            raise ValueError(f"eps_stop must be positive, got {self.eps_stop}")
        if self.stepsize_rule not in ("S", "tilde"):
            raise ValueError(f"unknown stepsize rule {self.stepsize_rule!r}")
        if self.tilde_grid < 0:
            raise ValueError(f"tilde_grid must be >= 0, got {self.tilde_grid}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")


@dataclass(frozen=True)
class MpaStep:
    """One trace row; the terminal row carries step = sup_s = margin = 0."""

    index: int
    energy: float
    grad_norm: float
    step: float
    sup_s: float
    inner_iters: int
    margin: float


@dataclass
class MpaTrace:
    """Per-iteration record of a run; append-only during the run."""

    steps: list = field(default_factory=list)
    status: str = "running"
    notes: list = field(default_factory=list)

    CSV_HEADER = "iter,energy,grad_norm,step,sup_s,inner_iters,margin"

    def to_csv_text(self) -> str:
        lines = [self.CSV_HEADER]
        for s in self.steps:
            lines.append(
                f"{s.index},{float(s.energy)!r},{float(s.grad_norm)!r},"
                f"{float(s.step)!r},{float(s.sup_s)!r},{s.inner_iters},"
                f"{float(s.margin)!r}"
            )
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv_text())

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energy for s in self.steps])

    @property
    def iterations(self) -> int:
        """Number of descent steps taken (terminal row excluded)."""
        return sum(1 for s in self.steps if s.step > 0.0)


def steepest_direction(problem, u):
    """Normalized negative H-gradient and the gradient norm.

    When the gradient norm is at critical-point level (<= 1e-14) the
    direction is returned as zero; callers treat that as convergence.
    """
    g, gnorm = problem.riesz_gradient(u)
    if gnorm <= _CRITICAL_EPS:
        return g * 0.0, gnorm
    return g * (-1.0 / gnorm), gnorm


class _ComponentCollapse(StepsizeUnderflow):
    """Every surviving trial stepsize collapsed a system component."""

    def __init__(self, message, vanished):
        super().__init__(message)
        self.vanished = tuple(sorted(set(vanished)))


@dataclass
class _Trial:
    s: float
    ok: bool
    peak: object
    energy: float
    inner_iters: int
    vanished: tuple


def _evaluate_trial(problem, cone, u, direction, grad_norm, e0, alpha, s):
    """Admissibility test at one stepsize: trial point in the domain and
    energy of the re-selected peak below e0 - alpha*s*grad_norm."""
    u_s = u + direction * s
    try:
        pr = peak_select(cone, problem, u_s)
    except DomainViolation:
        return _Trial(s, False, None, np.nan, 0, ())
    except DegenerateRay as exc:
        return _Trial(s, False, None, np.nan, 0, exc.vanished)
    e_s = problem.energy(pr.point)
    ok = (e_s - e0) < (-alpha * s * grad_norm)
    return _Trial(s, ok, pr, e_s, pr.iterations, ())


def _make_tilde_evaluate(base_evaluate, depth):
    """Wrap a trial evaluator so the decrease test must hold on the whole
    dyadic grid s*j/2^depth, j = 1..2^depth (surrogate for all s' <= s)."""
    npts = 2 ** depth

    def evaluate(s):
        total = 0
        vanished = set()
        last = None
        for j in range(1, npts + 1):
            sj = s * (j / npts)
            tr = base_evaluate(sj)
            total += tr.inner_iters
            vanished.update(tr.vanished)
            if not tr.ok:
                return _Trial(s, False, None, np.nan, total, tuple(vanished))
            last = tr
        return _Trial(s, True, last.peak, last.energy, total, ())

    return evaluate


def _ladder_search(evaluate, cfg):
    """Dyadic stepsize ladder.

    Doubles from ``s_init`` while the test passes (capped at ``s_max``) and
    returns the last passing value, which is then also the supremum
    estimate; otherwise halves until the first pass.  Raises
    ``StepsizeUnderflow`` (or the component-collapse subclass when every
    failure was a boundary maximum of a system cone) below ``s_min``.
    """
    notes = []
    total = 0
    vanished = set()

    trial = evaluate(cfg.s_init)
    total += trial.inner_iters
    vanished.update(trial.vanished)

    if trial.ok:
        best = trial
        s = cfg.s_init
        while s < cfg.s_max:
            s_next = min(2.0 * s, cfg.s_max)
            t2 = evaluate(s_next)
            total += t2.inner_iters
            if not t2.ok:
                break
            best = t2
            s = s_next
        if best.s == cfg.s_max:
            notes.append("stepsize capped at s_max")
        return best, best.s, total, notes

    s = cfg.s_init
    while True:
        s = 0.5 * s
        if s < cfg.s_min:
            break
        trial = evaluate(s)
        total += trial.inner_iters
        vanished.update(trial.vanished)
        if trial.ok:
            return trial, trial.s, total, notes

    if vanished:
        raise _ComponentCollapse(
            "all admissible trial stepsizes collapsed a component",
            vanished=vanished,
        )
    raise StepsizeUnderflow(
        f"no admissible stepsize found above s_min = {cfg.s_min}; at a "
        "non-critical selected point a positive admissible stepsize exists, "
        "so underflow signals tolerance or scaling trouble"
    )


def _search(problem, cone, u, direction, grad_norm, e0, cfg):
    def base(s):
        return _evaluate_trial(problem, cone, u, direction, grad_norm,
                               e0, cfg.alpha, s)

    if cfg.stepsize_rule == "tilde":
        return _ladder_search(_make_tilde_evaluate(base, cfg.tilde_grid), cfg)
    return _ladder_search(base, cfg)


def stepsize_S(problem, cone, u, direction, grad_norm, cfg: MpaConfig):
    """Admissible stepsize under rule "S": (s, supremum estimate)."""
    e0 = problem.energy(u)
    def base(s):
        return _evaluate_trial(problem, cone, u, direction, grad_norm,
                               e0, cfg.alpha, s)
    best, sup, _, _ = _ladder_search(base, cfg)
    return best.s, sup


def stepsize_tilde(problem, cone, u, direction, grad_norm, cfg: MpaConfig):
    """Admissible stepsize under rule "tilde": decrease on the whole grid."""
    e0 = problem.energy(u)
    def base(s):
        return _evaluate_trial(problem, cone, u, direction, grad_norm,
                               e0, cfg.alpha, s)
    best, sup, _, _ = _ladder_search(
        _make_tilde_evaluate(base, cfg.tilde_grid), cfg)
    return best.s, sup


def _reduce_system(problem, cone, u, active, vanished, notes):
    """Freeze collapsed components at zero and restrict the system."""
    survivors = [i for i in range(problem.k) if i not in set(vanished)]
    if not survivors:
        raise DegenerateRay(
            "every component collapsed; no reduced system remains",
            vanished=tuple(active),
        )
    dead_original = [active[i] for i in vanished]
    notes.append(
        f"components {dead_original} vanished (cone boundary); "
        "continuing on the reduced system with them frozen at zero"
    )
    new_problem = problem.restrict(survivors)
    new_cone = SystemCone(new_problem.k, new_problem.stiffness,
                          delta_a=cone.delta_a, inner_tol=cone.inner_tol)
    new_u = Field(u.mesh, u.data[survivors])
    new_active = [active[i] for i in survivors]
    return new_problem, new_cone, new_u, new_active


def _embed(u: Field, active, k_full: int) -> Field:
    data = np.zeros((k_full, u.data.shape[1]))
    data[active] = u.data
    return Field(u.mesh, data)


def run_mpa(problem, cone, u0, cfg: MpaConfig | None = None):
    """Run the outer descent loop from ``u0``.

    The start is first projected through the peak selection so every
    iterate lies in the selection range.  System runs survive component
    collapse (a ray coordinate pinned at the cone boundary): the collapsed
    components are frozen at zero and the iteration continues on the
    reduced system, which reproduces the vanishing-component behavior of
    couplings outside the admissible range.

    Returns
    -------
    (solution, trace)
        The final iterate (collapsed components re-embedded as zeros) and
        the per-iteration trace.
    """
    if cfg is None:
        cfg = MpaConfig()
    is_system = getattr(problem, "kind", None) == "system"
    k_full = getattr(problem, "k", 1)
    active = list(range(k_full)) if is_system else None
    notes = []

    u = u0
    while True:
        try:
            u = peak_select(cone, problem, u).point
            break
        except DegenerateRay as exc:
            if not is_system:
                raise
            problem, cone, u, active = _reduce_system(
                problem, cone, u, active, exc.vanished, notes)

    rows = []
    status = "max-iters"
    n = 0
    while True:
        e0 = problem.energy(u)
        direction, gnorm = steepest_direction(problem, u)
        if gnorm <= max(cfg.eps_stop, _CRITICAL_EPS):
            rows.append(MpaStep(n, e0, gnorm, 0.0, 0.0, 0, 0.0))
            status = "converged"
            break
        if n >= cfg.max_iters:
            rows.append(MpaStep(n, e0, gnorm, 0.0, 0.0, 0, 0.0))
            break
        try:
            best, sup, inner_total, step_notes = _search(
                problem, cone, u, direction, gnorm, e0, cfg)
        except _ComponentCollapse as exc:
            if not is_system:
                raise
            problem, cone, u, active = _reduce_system(
                problem, cone, u, active, exc.vanished, notes)
            u = peak_select(cone, problem, u).point
            continue
        for note in step_notes:
            notes.append(f"iteration {n}: {note}")
        margin = (best.energy - e0) + cfg.alpha * best.s * gnorm
        rows.append(MpaStep(n, e0, gnorm, best.s, sup, inner_total, margin))
        u = best.peak.point
        n += 1

    trace = MpaTrace(steps=rows, status=status, notes=notes)
    if is_system and len(active) != k_full:
        u = _embed(u, active, k_full)
    return u, trace
