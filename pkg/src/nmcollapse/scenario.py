"""Scenario configuration, unit handling and the four-variant runs.

SI inputs are rescaled to units with ħ = m = λ = 1 before solving: the
length unit is (ħ/(mλ))^{1/4} and the time unit √(m/(ħλ)). Without collapse
(λ = 0) the length unit is σ₀ and the time unit mσ₀²/ħ. Results are
converted back on output.
"""

from __future__ import annotations

import math
import os
import re
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from . import __version__
from .analytic import solve_h
from .ide import f_problem, g_problem, h_problem, residual, weak_residual
from .model import HBAR_SI, KB_SI, ExponentialKernel, ModelParams, TimeGrid
from .noise import sample
from .propagator import VARIANTS, GaussianState, evolve_series, riccati_alpha, solve_fg, spreads

COLUMNS = ("t", "sigma", "alpha_re", "alpha_im", "beta_re", "beta_im", "x_mean", "x_var")


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    variant: str = "all"
    m: float = 1.0
    hbar: float | None = None
    kB: float | None = None
    # "lambda" in files; renamed because of the keyword
    lam: float = 0.0
    mu: float = 0.0
    omega: float = 0.0
    gamma: float = 1.0
    sigma0: float = 1.0
    x0: float = 0.0
    t_end: float = 1.0
    n_steps: int = 100
    seeds: list[int] = field(default_factory=lambda: [0])
    output: str = "results"
    unit_mode: str = "dimensionless"
    w0_mode: str = "stationary"

    def __post_init__(self):
        if self.hbar is None:
            self.hbar = HBAR_SI if self.unit_mode == "si" else 1.0
        if self.kB is None:
            self.kB = KB_SI if self.unit_mode == "si" else 1.0

    @property
    def variants(self) -> tuple[str, ...]:
        return VARIANTS if self.variant == "all" else (self.variant,)

    def params(self) -> ModelParams:
        return ModelParams(self.m, self.hbar, self.lam, self.mu, self.omega, self.gamma, self.kB, self.unit_mode)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


_KEYS = {("lambda" if f.name == "lam" else f.name): f for f in fields(ScenarioConfig)}


def _line_of(text: str, key: str) -> int:
    for i, line in enumerate(text.splitlines(), 1):
        if re.match(rf"\s*{re.escape(key)}\s*=", line):
            return i
    return 0


def _fail(path, text, key, message):
    line = _line_of(text, key)
    where = f"{path}:{line}" if line else str(path)
    raise ConfigError(f"{where}: {message}")


def parse_config(text: str, path: str = "<config>") -> ScenarioConfig:
    """Parse and validate a flat TOML scenario.

    A ``[run]`` table (written into manifests) is accepted and ignored.
    """
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    raw.pop("run", None)
    values = {}
    for key, val in raw.items():
        if key not in _KEYS:
            _fail(path, text, key, f"unknown key {key!r}")
        f = _KEYS[key]
        if key == "seeds":
            if isinstance(val, int) and not isinstance(val, bool):
                val = [val]
            if not isinstance(val, list) or not val or not all(isinstance(s, int) and not isinstance(s, bool) for s in val):
                _fail(path, text, key, "seeds must be a non-empty list of integers")
        elif key == "n_steps":
            if not isinstance(val, int) or isinstance(val, bool):
                _fail(path, text, key, "n_steps must be an integer")
        elif key in ("variant", "output", "unit_mode", "w0_mode"):
            if not isinstance(val, str):
                _fail(path, text, key, f"{key} must be a string")
        else:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                _fail(path, text, key, f"{key} must be a number")
            val = float(val)
        values[f.name] = val
    cfg = ScenarioConfig(**values)
    checks = [
        ("variant", cfg.variant == "all" or cfg.variant in VARIANTS, f"variant must be 'all' or one of {VARIANTS}"),
        ("unit_mode", cfg.unit_mode in ("si", "dimensionless"), "unit_mode must be 'si' or 'dimensionless'"),
        ("w0_mode", cfg.w0_mode in ("stationary", "zero"), "w0_mode must be 'stationary' or 'zero'"),
        ("sigma0", cfg.sigma0 > 0, "sigma0 must be positive"),
        ("t_end", cfg.t_end > 0, "t_end must be positive"),
        ("n_steps", cfg.n_steps >= 1, "n_steps must be positive"),
        ("m", cfg.m > 0, "m must be positive"),
        ("hbar", cfg.hbar > 0, "hbar must be positive"),
        ("lambda", cfg.lam >= 0, "lambda must be non-negative"),
        ("mu", cfg.mu >= 0, "mu must be non-negative"),
        ("omega", cfg.omega >= 0, "omega must be non-negative"),
        ("gamma", cfg.gamma > 0, "gamma must be positive"),
    ]
    for key, ok, msg in checks:
        if not ok:
            _fail(path, text, key, msg)
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, str(path))


@dataclass(frozen=True)
class Units:
    length: float
    time: float

    @classmethod
    def for_config(cls, cfg: ScenarioConfig) -> "Units":
        if cfg.unit_mode != "si":
            return cls(1.0, 1.0)
        if cfg.lam > 0:
            return cls((cfg.hbar / (cfg.m * cfg.lam)) ** 0.25, math.sqrt(cfg.m / (cfg.hbar * cfg.lam)))
        return cls(cfg.sigma0, cfg.m * cfg.sigma0**2 / cfg.hbar)

    def params(self, cfg: ScenarioConfig) -> ModelParams:
        if cfg.unit_mode != "si":
            return cfg.params()
        L, T = self.length, self.time
        return ModelParams(
            m=1.0,
            hbar=1.0,
            lam=cfg.lam * L * L * T,
            mu=cfg.mu / (L * L),
            omega=cfg.omega * T,
            gamma=cfg.gamma * T,
            kB=cfg.kB,
            unit_mode="dimensionless",
        )


def variant_params(params: ModelParams, variant: str) -> ModelParams:
    """Non-dissipative variants force μ = 0; white variants ignore γ."""
    if variant in ("white", "nonwhite"):
        return params.replace(mu=0.0)
    return params


@dataclass
class VariantResult:
    variant: str
    table: np.ndarray  # rows of COLUMNS, output units
    diagnostics: dict

    @property
    def t(self):
        return self.table[:, 0]

    @property
    def sigma(self):
        return self.table[:, 1]


def run_variant(cfg: ScenarioConfig, variant: str, residual_check: bool = True) -> VariantResult:
    units = Units.for_config(cfg)
    params = variant_params(units.params(cfg), variant)
    grid = TimeGrid(cfg.t_end / units.time, cfg.n_steps)
    sigma0 = cfg.sigma0 / units.length
    state0 = GaussianState.from_spread(sigma0, cfg.x0 / units.length)
    diagnostics: dict = {}
    if variant.startswith("white"):
        alpha, beta = riccati_alpha(params, variant, grid, state0.alpha, state0.beta)
        x_mean = beta.real / (2 * alpha.real)
        x_var = np.zeros_like(x_mean)
        diagnostics["beta_source"] = "noise-free mean (white paths are not sampled)"
    else:
        kernel = ExponentialKernel(params.gamma)
        noises = [sample(kernel, grid, s, cfg.w0_mode) for s in cfg.seeds]
        res = evolve_series(params, grid, state0, noises)
        alpha, beta = res.alpha[0], res.beta[0]
        xm = res.x_mean
        x_mean = xm.mean(axis=0)
        x_var = xm.var(axis=0, ddof=1) if len(noises) > 1 else np.zeros(len(grid))
        if residual_check:
            diagnostics.update(residual_diagnostics(params, grid, noises[0]))
    L = units.length
    sigma = spreads(alpha) * L
    table = np.column_stack(
        [
            grid.nodes * units.time,
            sigma,
            alpha.real / L**2,
            alpha.imag / L**2,
            beta.real / L,
            beta.imag / L,
            x_mean * L,
            x_var * L * L,
        ]
    )
    return VariantResult(variant, table, diagnostics)


def residual_diagnostics(params: ModelParams, grid: TimeGrid, noise) -> dict:
    """Strong residuals of f, g and the weak residual of h at t_end."""
    kernel = ExponentialKernel(params.gamma)
    f, g = solve_fg(params, grid)
    out = {
        "residual_f": residual(f_problem(params, kernel, grid), f),
        "residual_g": residual(g_problem(params, kernel, grid), g),
    }
    if grid.n_steps >= 16:
        h = solve_h(params, grid, noise)
        out["weak_residual_h"] = weak_residual(h_problem(params, kernel, noise), h.values)
    return out


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def table_text(header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_manifest(cfg: ScenarioConfig, out_dir: Path, command: str, files: list[str], diagnostics: dict) -> Path:
    doc = {k: v for k, v in cfg.to_dict().items()}
    doc["output"] = str(out_dir)
    doc["run"] = {
        "command": command,
        "version": __version__,
        "files": files,
        "diagnostics": {k: {kk: _plain(vv) for kk, vv in v.items()} for k, v in diagnostics.items()},
    }
    path = out_dir / "manifest.toml"
    write_atomic(path, tomli_w.dumps(doc))
    return path


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def run_scenario(cfg: ScenarioConfig, residual_check: bool = True) -> dict[str, VariantResult]:
    """Run each configured variant and write one CSV per variant plus a manifest."""
    out_dir = Path(cfg.output)
    results = {v: run_variant(cfg, v, residual_check) for v in cfg.variants}
    files = []
    for name, res in results.items():
        write_atomic(out_dir / f"{name}.csv", table_text(COLUMNS, res.table))
        files.append(f"{name}.csv")
    write_manifest(cfg, out_dir, "run", files, {k: r.diagnostics for k, r in results.items()})
    return results


def settle_time(t: np.ndarray, sigma: np.ndarray, rtol: float = 0.01) -> float:
    """First time σ is within ``rtol`` of its final (asymptotic) value."""
    close = np.abs(sigma / sigma[-1] - 1.0) <= rtol
    return float(t[np.argmax(close)])


@dataclass
class Comparison:
    t: np.ndarray
    sigma: dict[str, np.ndarray]
    ratios: dict[str, np.ndarray]
    settle: dict[str, float]
    results: dict[str, VariantResult]


def compare_variants(cfg: ScenarioConfig, residual_check: bool = True) -> Comparison:
    """All four variants on one grid; σ ratios against the white baseline."""
    results = {v: run_variant(cfg, v, residual_check) for v in VARIANTS}
    t = results["white"].t
    sigma = {v: r.sigma for v, r in results.items()}
    ratios = {v: sigma[v] / sigma["white"] for v in VARIANTS[1:]}
    settle = {v: settle_time(t, sigma[v]) for v in VARIANTS}
    cmp = Comparison(t, sigma, ratios, settle, results)
    out_dir = Path(cfg.output)
    header = ["t"] + [f"sigma_{v}" for v in VARIANTS] + [f"ratio_{v}" for v in VARIANTS[1:]]
    rows = np.column_stack([t] + [sigma[v] for v in VARIANTS] + [ratios[v] for v in VARIANTS[1:]])
    files = []
    for name, res in results.items():
        write_atomic(out_dir / f"{name}.csv", table_text(COLUMNS, res.table))
        files.append(f"{name}.csv")
    write_atomic(out_dir / "compare.csv", table_text(header, rows))
    files.append("compare.csv")
    diag = {k: r.diagnostics for k, r in results.items()}
    diag["settle_time"] = settle
    write_manifest(cfg, out_dir, "compare", files, diag)
    return cmp
