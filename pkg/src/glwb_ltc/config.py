"""Run configuration read from INI files.

Sections and keys (rates are per year, fees as decimals)::

    [contract]  P, alpha, alpha_bps, beta, x0, g, c, pi, b, initial_health,
                kappa (``default`` or comma list by anniversary), indexed_death_benefit
    [market]    mode, sigma_F, sigma_r, k_r, theta, r0, rho
    [numeric]   N, f_A, strategy, gamma_mesh, tol_bps, max_iter, two_stage
    [mc]        paths, steps_per_year, seed, cv
    [output]    directory

Anything omitted falls back to the standard parameter set.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Tuple

from .params import ConfigError, ContractParams, MarketParams
from .pricer import KINDS, Strategy


@dataclass(frozen=True)
class KappaSchedule:
    """Penalty by anniversary; ``None`` values mean the default schedule."""

    values: Optional[Tuple[float, ...]] = None

    def __call__(self, n: int) -> float:
        if self.values is None:
            return 0.01 * max(0, 8 - n)
        return self.values[n] if n < len(self.values) else 0.0

    def __str__(self) -> str:
        return "default" if self.values is None else ",".join(f"{v:g}" for v in self.values)


@dataclass(frozen=True)
class NumericConfig:
    N: int = 100
    f_A: float = 100.0
    strategy: str = "static"
    gamma_mesh: Tuple[float, ...] = (0.0, 1.0, 2.0)
    tol_bps: float = 1e-3
    max_iter: int = 50
    two_stage: bool = True


@dataclass(frozen=True)
class McConfig:
    paths: int = 1_000_000
    steps_per_year: int = 1
    seed: int = 12345
    cv: bool = False


@dataclass(frozen=True)
class RunConfig:
    contract: ContractParams = field(default_factory=ContractParams)
    market: MarketParams = field(default_factory=MarketParams)
    numeric: NumericConfig = field(default_factory=NumericConfig)
    mc: McConfig = field(default_factory=McConfig)
    output_dir: str = "."

    @property
    def strategy(self) -> Strategy:
        return Strategy(self.numeric.strategy, self.numeric.gamma_mesh)

    def to_ini(self) -> str:
        c = self.contract
        lines = ["[contract]"]
        for name in ("P", "alpha", "beta", "x0", "g", "c", "pi", "b", "initial_health"):
            lines.append(f"{name} = {getattr(c, name)!r}")
        lines.append(f"kappa = {c.penalty if c.penalty is not None else 'default'}")
        lines.append(f"indexed_death_benefit = {str(c.indexed_death_benefit).lower()}")
        lines.append("[market]")
        for k, v in asdict(self.market).items():
            lines.append(f"{k} = {v!r}" if not isinstance(v, str) else f"{k} = {v}")
        lines.append("[numeric]")
        for k, v in asdict(self.numeric).items():
            v = ",".join(f"{x:g}" for x in v) if isinstance(v, tuple) else v
            lines.append(f"{k} = {v}")
        lines.append("[mc]")
        for k, v in asdict(self.mc).items():
            lines.append(f"{k} = {v}")
        lines.append("[output]")
        lines.append(f"directory = {self.output_dir}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        """Short hash of the computational settings (the output directory is excluded)."""
        body = self.to_ini().split("[output]")[0]
        return hashlib.sha256(body.encode()).hexdigest()[:12]


def _get(section, key, conv, where):
    raw = section.get(key)
    try:
        return conv(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}", f"cannot parse {raw!r}") from None


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(s)


def _floats(s: str) -> Tuple[float, ...]:
    return tuple(float(x) for x in s.split(",") if x.strip())


_CONTRACT_KEYS = {"P": float, "alpha": float, "beta": float, "x0": int, "g": float, "c": float,
                  "pi": float, "b": float, "initial_health": int, "indexed_death_benefit": _bool}
_MARKET_KEYS = {f.name: (str if f.name == "mode" else float) for f in fields(MarketParams)}
_NUMERIC_KEYS = {"N": int, "f_A": float, "strategy": str, "gamma_mesh": _floats,
                 "tol_bps": float, "max_iter": int, "two_stage": _bool}
_MC_KEYS = {"paths": int, "steps_per_year": int, "seed": int, "cv": _bool}


def _collect(parser, name, keys):
    if not parser.has_section(name):
        return {}
    sec = parser[name]
    unknown = set(sec) - set(keys) - ({"kappa", "alpha_bps"} if name == "contract" else set())
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}", "unknown key")
    return {k: _get(sec, k, conv, name) for k, conv in keys.items() if k in sec}


def parse(text: str) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keys are case sensitive (P, N, f_A)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    known = {"contract", "market", "numeric", "mc", "output"}
    for s in parser.sections():
        if s not in known:
            raise ConfigError(s, "unknown section")

    ckw = _collect(parser, "contract", _CONTRACT_KEYS)
    if parser.has_section("contract"):
        sec = parser["contract"]
        if "alpha_bps" in sec:
            if "alpha" in ckw:
                raise ConfigError("contract.alpha_bps", "give either alpha or alpha_bps")
            ckw["alpha"] = _get(sec, "alpha_bps", float, "contract") * 1e-4
        if "kappa" in sec and sec["kappa"].strip().lower() != "default":
            ckw["penalty"] = KappaSchedule(_get(sec, "kappa", _floats, "contract"))
    contract = ContractParams(**ckw)
    market = MarketParams(**_collect(parser, "market", _MARKET_KEYS))
    numeric = NumericConfig(**_collect(parser, "numeric", _NUMERIC_KEYS))
    mc = McConfig(**_collect(parser, "mc", _MC_KEYS))
    out = parser.get("output", "directory", fallback=".")
    cfg = RunConfig(contract, market, numeric, mc, out)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    n = cfg.numeric
    if n.N < 1:
        raise ConfigError("numeric.N", "must be a positive integer")
    if not n.f_A > 1:
        raise ConfigError("numeric.f_A", "must exceed 1")
    if n.strategy not in KINDS:
        raise ConfigError("numeric.strategy", f"must be one of {KINDS}")
    try:
        Strategy(n.strategy, n.gamma_mesh)
    except ValueError as exc:
        raise ConfigError("numeric.gamma_mesh", str(exc)) from None
    if not n.tol_bps > 0:
        raise ConfigError("numeric.tol_bps", "must be positive")
    if cfg.mc.paths < 2:
        raise ConfigError("mc.paths", "need at least two paths")
    if cfg.mc.steps_per_year < 1:
        raise ConfigError("mc.steps_per_year", "must be a positive integer")


def load(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            return parse(fh.read())
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    """Apply command-line overrides (``None`` values are ignored)."""
    numeric = {k: v for k, v in kw.items() if k in ("N", "f_A", "strategy") and v is not None}
    mc = {k: v for k, v in kw.items() if k in ("paths", "seed") and v is not None}
    out = kw.get("output_dir") or cfg.output_dir
    cfg = replace(cfg, numeric=replace(cfg.numeric, **numeric), mc=replace(cfg.mc, **mc), output_dir=out)
    validate(cfg)
    return cfg
