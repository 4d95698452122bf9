"""Run configuration: flat ``key = value`` text files with module sections.

The effective configuration (all defaults materialized) is echoed into the
output directory and re-parses to an identical run; the run directory name
is derived from a hash of that canonical text.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .mpa import MpaConfig

__all__ = ["RunConfig", "SEED_FUNCTIONS"]

SEED_FUNCTIONS = {
    "poly_bump": lambda x, y: x * y * (1.0 - x) * (1.0 - y),
    "poly_bump_signed": lambda x, y: x * y * (x - 1.0) * (y - 1.0),
}

_SECTIONS = {
    "problem": ("kind", "V", "p", "mu", "beta"),
    "mesh": ("n",),
    "mpa": ("eps_stop", "alpha", "s_init", "s_max", "s_min", "max_iters",
            "stepsize_rule", "tilde_grid"),
    "run": ("u0", "output", "figures", "eig_count"),
}


@dataclass(frozen=True)
class RunConfig:
    """Validated parameters of one solve / eigenreport invocation."""

    kind: str
    n: int
    V: float = 0.0
    p: float = 4.0
    mu: tuple = ()
    beta: tuple = ()
    u0: str = "poly_bump"
    output: str = "runs"
    figures: bool = True
    eig_count: int = 8
    mpa: MpaConfig = field(default_factory=MpaConfig)

    @property
    def k(self) -> int:
        return len(self.mu) if self.kind == "system" else 1

    # -- parsing ---------------------------------------------------------

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(
            comment_prefixes=("#",), inline_comment_prefixes=("#",),
            interpolation=None,
        )
        parser.optionxform = str  # keys are case-sensitive (V vs v)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"config parse error: {exc}") from exc

        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for key in parser[section]:
                if key not in _SECTIONS[section]:
                    raise ConfigError(
                        f"unknown key '{key}' in section [{section}]"
                    )

        def get(section, key, default=None):
            if parser.has_option(section, key):
                return parser.get(section, key).strip()
            return default

        kind = get("problem", "kind")
        if kind not in ("indefinite", "system"):
            raise ConfigError(
                f"problem.kind must be 'indefinite' or 'system', got {kind!r}"
            )
        n = _parse_int(get("mesh", "n"), "mesh.n")
        if n < 2:
            raise ConfigError(f"mesh.n must be >= 2, got {n}")

        V = _parse_float(get("problem", "V", "0.0"), "problem.V")
        p = _parse_float(get("problem", "p", "4.0"), "problem.p")
        mu: tuple = ()
        beta: tuple = ()
        if kind == "system":
            mu_text = get("problem", "mu")
            if not mu_text:
                raise ConfigError("system runs require problem.mu")
            mu = tuple(_parse_float(x, "problem.mu")
                       for x in mu_text.split(","))
            if any(m <= 0.0 for m in mu):
                raise ConfigError("all entries of problem.mu must be positive")
            beta = _parse_beta(get("problem", "beta", "0.0"), len(mu))
        elif get("problem", "mu") or get("problem", "beta"):
            raise ConfigError("mu/beta are only valid for kind = system")
        if kind == "indefinite" and not p > 2.0:
            raise ConfigError(f"problem.p must exceed 2, got {p}")

        try:
            mpa = MpaConfig(
                eps_stop=_parse_float(get("mpa", "eps_stop", "1e-4"), "mpa.eps_stop"),
                alpha=_parse_float(get("mpa", "alpha", "0.5"), "mpa.alpha"),
                s_init=_parse_float(get("mpa", "s_init", "1.0"), "mpa.s_init"),
                s_max=_parse_float(get("mpa", "s_max", "1000.0"), "mpa.s_max"),
                s_min=_parse_float(get("mpa", "s_min", "1e-12"), "mpa.s_min"),
                max_iters=_parse_int(get("mpa", "max_iters", "10000"), "mpa.max_iters"),
                stepsize_rule=get("mpa", "stepsize_rule", "S"),
                tilde_grid=_parse_int(get("mpa", "tilde_grid", "6"), "mpa.tilde_grid"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

        figures = _parse_bool(get("run", "figures", "on"), "run.figures")
        eig_count = _parse_int(get("run", "eig_count", "8"), "run.eig_count")
        if eig_count < 1:
            raise ConfigError("run.eig_count must be >= 1")

        return cls(
            kind=kind, n=n, V=V, p=p, mu=mu, beta=beta,
            u0=get("run", "u0", "poly_bump"),
            output=get("run", "output", "runs"),
            figures=figures, eig_count=eig_count, mpa=mpa,
        )

    # -- serialization ---------------------------------------------------

    def canonical_text(self) -> str:
        out = io.StringIO()
        out.write("[problem]\n")
        out.write(f"kind = {self.kind}\n")
        if self.kind == "indefinite":
            out.write(f"V = {self.V!r}\n")
            out.write(f"p = {self.p!r}\n")
        else:
            out.write(f"mu = {', '.join(repr(m) for m in self.mu)}\n")
            flat = ", ".join(repr(b) for row in self.beta for b in row)
            out.write(f"beta = {flat}\n")
        out.write("\n[mesh]\n")
        out.write(f"n = {self.n}\n")
        out.write("\n[mpa]\n")
        m = self.mpa
        out.write(f"eps_stop = {m.eps_stop!r}\n")
        out.write(f"alpha = {m.alpha!r}\n")
        out.write(f"s_init = {m.s_init!r}\n")
        out.write(f"s_max = {m.s_max!r}\n")
        out.write(f"s_min = {m.s_min!r}\n")
        out.write(f"max_iters = {m.max_iters}\n")
        out.write(f"stepsize_rule = {m.stepsize_rule}\n")
        out.write(f"tilde_grid = {m.tilde_grid}\n")
        out.write("\n[run]\n")
        out.write(f"u0 = {self.u0}\n")
        out.write(f"output = {self.output}\n")
        out.write(f"figures = {'on' if self.figures else 'off'}\n")
        out.write(f"eig_count = {self.eig_count}\n")
        return out.getvalue()

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:12]

    def write_effective(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.canonical_text())


def _parse_float(text, what) -> float:
    if text is None:
        raise ConfigError(f"missing required key {what}")
    try:
        value = float(text)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what} must be a number, got {text!r}") from exc
    if not np.isfinite(value):
        raise ConfigError(f"{what} must be finite, got {text!r}")
    return value


def _parse_int(text, what) -> int:
    if text is None:
        raise ConfigError(f"missing required key {what}")
    try:
        return int(text)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what} must be an integer, got {text!r}") from exc


def _parse_bool(text, what) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("on", "true", "1", "yes"):
        return True
    if lowered in ("off", "false", "0", "no"):
        return False
    raise ConfigError(f"{what} must be on/off, got {text!r}")


def _parse_beta(text, k: int) -> tuple:
    values = [_parse_float(x, "problem.beta") for x in text.split(",")]
    if len(values) == 1 and k == 2:
        b = values[0]
        matrix = np.array([[0.0, b], [b, 0.0]])
    elif len(values) == k * k:
        matrix = np.array(values).reshape(k, k)
    else:
        raise ConfigError(
            f"problem.beta needs 1 (k=2 coupling) or {k * k} (row-major "
            f"matrix) entries, got {len(values)}"
        )
    if not np.array_equal(matrix, matrix.T):
        raise ConfigError("problem.beta must be symmetric")
    if np.any(np.diagonal(matrix) != 0.0):
        raise ConfigError("problem.beta must have zero diagonal")
    return tuple(tuple(float(x) for x in row) for row in matrix)
