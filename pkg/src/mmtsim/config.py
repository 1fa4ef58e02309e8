"""
Experiment configuration: YAML loading, command-line overrides and validation.

A config has an optional top-level ``experiment`` key and two sections::

    experiment: rate-table
    system:
      nt: 4
      fc: 2.1e9          # carrier [Hz]
      tau: 1.0e-3        # feedback delay [s]; defaults to ts
      v: 10              # km/h, or give fdts instead
      b: 18              # feedback bits per user; omit for unquantized CSIT
      snr_db: {start: -10, stop: 40, step: 2}
    run:
      trials: 10000
      seed: 0

Every diagnostic carries the dotted field path, the reason and, when the
value came from the file, its line number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np
import yaml

from . import channel
from .rates import ImperfectionParams

__all__ = [
    "KINDS",
    "Diagnostic",
    "ConfigError",
    "ExperimentConfig",
    "UserSpec",
    "parse_override",
    "validate_config",
    "load_config",
]

KINDS = ("rate-table", "operating-region", "simulate", "schedule", "feedback-budget", "high-snr-mode")

DEFAULT_SNR_DB = tuple(float(x) for x in np.arange(-10.0, 40.0 + 1e-9, 2.0))
DEFAULT_US_BITS = (5, 10, 15, 20, 25)
MAX_FEEDBACK_BITS = 64

_SYSTEM_KEYS = {
    "nt", "u", "fc", "tau", "ts", "v", "fdts", "b", "b_t", "snr_db", "precoder", "m",
    "v_grid", "b_grid", "fdts_grid", "us_bits", "users",
}
_RUN_KEYS = {"trials", "us_trials", "seed", "out", "format", "workers", "slots", "su"}
_USER_KEYS = {"snr_db", "v", "fdts", "b"}


@dataclass(frozen=True)
class Diagnostic:
    path: str
    reason: str
    line: Optional[int] = None
    source: str = "<config>"

    def __str__(self) -> str:
        loc = f"{self.source}:{self.line}" if self.line is not None else self.source
        return f"{loc}: {self.path}: {self.reason}"


class ConfigError(ValueError):
    def __init__(self, diagnostics: list):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class UserSpec:
    """Per-user slow parameters for heterogeneous scheduling runs."""

    snr_db: float
    v: Optional[float] = None
    fdts: Optional[float] = None
    b: float = math.inf


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    nt: int
    u: int = 8
    fc: float = 2.1e9
    tau: Optional[float] = None
    v: Optional[float] = None
    fdts: Optional[float] = None
    b: float = math.inf
    b_t: tuple = ()
    snr_db: tuple = DEFAULT_SNR_DB
    precoder: str = "zf"
    m: Optional[int] = None
    v_grid: Optional[tuple] = None
    b_grid: Optional[tuple] = None
    fdts_grid: Optional[tuple] = None
    us_bits: tuple = DEFAULT_US_BITS
    users: Optional[tuple] = None
    trials: int = 10_000
    us_trials: int = 2000
    seed: int = 0
    out: str = "out"
    format: str = "csv"
    workers: int = 1
    slots: int = 1000
    su: str = "proxy"
    raw: dict = field(default_factory=dict, compare=False)

    def doppler(self, v: Optional[float] = None, fdts: Optional[float] = None) -> Optional[channel.DopplerParams]:
        """Channel correlation for speed ``v`` or ``fdts`` (config values by default)."""
        if v is None and fdts is None:
            v, fdts = self.v, self.fdts
        if fdts is not None:
            return channel.doppler_from_fdts(fdts)
        if v is not None:
            return channel.doppler_correlation(v, self.fc, self.tau)
        return None

    def imp(self, B: Optional[float] = None, **kw) -> ImperfectionParams:
        B = self.b if B is None else B
        return ImperfectionParams.build(self.nt, B, self.doppler(**kw))

    def echo(self) -> dict:
        """Resolved configuration as plain JSON-friendly values."""
        out = {}
        for k in self.__dataclass_fields__:
            if k == "raw":
                continue
            val = getattr(self, k)
            if isinstance(val, float) and math.isinf(val):
                val = "inf"
            elif isinstance(val, tuple):
                val = [u.__dict__ if isinstance(u, UserSpec) else u for u in val]
                val = [{kk: ("inf" if isinstance(vv, float) and math.isinf(vv) else vv)
                        for kk, vv in x.items()} if isinstance(x, dict) else x for x in val]
            out[k] = val
        return out


# --------------------------------------------------------------------------
# raw loading
# --------------------------------------------------------------------------

def _line_map(node, prefix="", out=None) -> dict:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = k.start_mark.line + 1
            _line_map(v, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            path = f"{prefix}[{i}]"
            out[path] = v.start_mark.line + 1
            _line_map(v, path, out)
    return out


def parse_override(text: str) -> tuple[str, Any]:
    """Split ``key.path=value``; the value is parsed as a YAML scalar or list."""
    if "=" not in text:
        raise ValueError(f"override {text!r} is not of the form key=value")
    key, val = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ValueError(f"override {text!r} has an empty key")
    return key, yaml.safe_load(val) if val.strip() else None


def _read(path: Optional[str], overrides: Iterable[str]):
    """Return ``(data, lines, overridden, source, diagnostics)``."""
    diags = []
    data, lines, source = {}, {}, "<config>"
    if path is not None:
        source = str(path)
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            return None, {}, set(), source, [Diagnostic("<file>", f"cannot read config: {exc.strerror or exc}", None, source)]
        try:
            node = yaml.compose(text)
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = mark.line + 1 if mark is not None else None
            return None, {}, set(), source, [Diagnostic("<file>", f"invalid YAML: {getattr(exc, 'problem', exc)}", line, source)]
        if data is None:
            data = {}
        if not isinstance(data, dict):
            return None, {}, set(), source, [Diagnostic("<root>", "top level must be a mapping", 1, source)]
        lines = _line_map(node)
    overridden = set()
    for ov in overrides:
        try:
            key, val = parse_override(ov)
        except ValueError as exc:
            diags.append(Diagnostic("--set", str(exc), None, source))
            continue
        parts = key.split(".")
        cur = data
        for p in parts[:-1]:
            nxt = cur.get(p)
            if not isinstance(nxt, dict):
                nxt = {}
                cur[p] = nxt
            cur = nxt
        cur[parts[-1]] = val
        overridden.add(key)
    return data, lines, overridden, source, diags


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

class _Checker:
    def __init__(self, lines: dict, overridden: set, source: str):
        self.lines = lines
        self.overridden = overridden
        self.source = source
        self.diags: list = []

    def err(self, path: str, reason: str):
        line = None if path in self.overridden else self.lines.get(path)
        self.diags.append(Diagnostic(path, reason, line, self.source))

    def number(self, sec: dict, key: str, path: str, *, integer=False, lo=None, lo_open=False,
               hi=None, hi_open=False, allow_inf=False):
        if key not in sec or sec[key] is None:
            return None
        val = sec[key]
        if allow_inf and isinstance(val, str) and val.strip().lower() in ("inf", "infinity"):
            return math.inf
        if isinstance(val, str):
            # YAML 1.1 leaves exponent forms such as 2.1e9 as strings
            try:
                val = float(val)
            except ValueError:
                pass
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.err(path, f"expected a number, got {val!r}")
            return None
        if integer and (not float(val).is_integer()):
            self.err(path, f"expected an integer, got {val!r}")
            return None
        val = int(val) if integer else float(val)
        if not math.isfinite(val):
            self.err(path, "must be finite")
            return None
        if lo is not None and (val <= lo if lo_open else val < lo):
            self.err(path, f"must be {'>' if lo_open else '>='} {lo:g}, got {val:g}")
            return None
        if hi is not None and (val >= hi if hi_open else val > hi):
            self.err(path, f"must be {'<' if hi_open else '<='} {hi:g}, got {val:g}")
            return None
        return val

    def grid(self, sec: dict, key: str, path: str, *, integer=False, lo=None, lo_open=False, hi=None,
             hi_open=False, scalar_ok=True):
        if key not in sec or sec[key] is None:
            return None
        val = sec[key]
        if isinstance(val, dict):
            extra = set(val) - {"start", "stop", "step"}
            for k in sorted(extra):
                self.err(f"{path}.{k}", "unknown key (expected start, stop, step)")
            parts = {}
            for k in ("start", "stop", "step"):
                if k not in val:
                    self.err(f"{path}.{k}", "required")
                else:
                    parts[k] = self.number(val, k, f"{path}.{k}")
            if len(parts) < 3 or any(v is None for v in parts.values()):
                return None
            if parts["step"] <= 0:
                self.err(f"{path}.step", "must be > 0")
                return None
            n = int(math.floor((parts["stop"] - parts["start"]) / parts["step"] + 1e-9)) + 1
            items = [parts["start"] + i * parts["step"] for i in range(max(n, 0))]
            if not items:
                self.err(path, "grid is empty")
                return None
            wrapped = {i: x for i, x in enumerate(items)}
        elif isinstance(val, list):
            if not val:
                self.err(path, "grid is empty")
                return None
            wrapped = dict(enumerate(val))
        elif scalar_ok:
            wrapped = {0: val}
        else:
            self.err(path, f"expected a list or a start/stop/step mapping, got {val!r}")
            return None
        out = []
        ok = True
        for i, x in wrapped.items():
            sub = f"{path}[{i}]" if isinstance(val, list) else path
            r = self.number({"x": x}, "x", sub, integer=integer, lo=lo, lo_open=lo_open, hi=hi, hi_open=hi_open)
            ok &= r is not None
            out.append(r)
        return tuple(out) if ok else None

    def choice(self, sec: dict, key: str, path: str, options: tuple):
        if key not in sec or sec[key] is None:
            return None
        val = sec[key]
        if val not in options:
            self.err(path, f"must be one of {', '.join(options)}, got {val!r}")
            return None
        return val


def _section(ck: _Checker, data: dict, name: str, allowed: set) -> dict:
    sec = data.get(name)
    if sec is None:
        return {}
    if not isinstance(sec, dict):
        ck.err(name, "must be a mapping")
        return {}
    for k in sorted(set(sec) - allowed, key=str):
        ck.err(f"{name}.{k}", "unknown key")
    return sec


def _build(data: dict, ck: _Checker, kind: Optional[str]) -> Optional[ExperimentConfig]:
    for k in sorted(set(data) - {"experiment", "system", "run"}, key=str):
        ck.err(str(k), "unknown key")
    declared = data.get("experiment")
    if declared is not None and declared not in KINDS:
        ck.err("experiment", f"must be one of {', '.join(KINDS)}, got {declared!r}")
    elif kind is None:
        if declared is None:
            ck.err("experiment", "required")
        kind = declared
    elif declared is not None and declared != kind:
        ck.err("experiment", f"config declares {declared!r} but the command is {kind!r}")

    sys_ = _section(ck, data, "system", _SYSTEM_KEYS)
    run = _section(ck, data, "run", _RUN_KEYS)
    kw: dict = {}

    nt = ck.number(sys_, "nt", "system.nt", integer=True, lo=1)
    if "nt" not in sys_ or sys_["nt"] is None:
        ck.err("system.nt", "required")
    for key, opts in (("u", dict(integer=True, lo=1)), ("fc", dict(lo=0, lo_open=True)),
                      ("tau", dict(lo=0, lo_open=True)), ("ts", dict(lo=0, lo_open=True)),
                      ("v", dict(lo=0)), ("fdts", dict(lo=0, hi=0.5, hi_open=True)),
                      ("m", dict(integer=True))):
        val = ck.number(sys_, key, f"system.{key}", **opts)
        if val is not None:
            kw[key] = val
    b = ck.number(sys_, "b", "system.b", integer=True, lo=1, allow_inf=True)
    if b is not None:
        if not math.isinf(b) and b > MAX_FEEDBACK_BITS:
            ck.err("system.b", f"must be <= {MAX_FEEDBACK_BITS} or inf")
        kw["b"] = float(b) if math.isinf(b) else int(b)
    ts = kw.pop("ts", None)
    if "tau" not in kw and ts is not None:
        kw["tau"] = ts

    if "v" in sys_ and sys_["v"] is not None and "fdts" in sys_ and sys_["fdts"] is not None:
        ck.err("system.fdts", "mutually exclusive with system.v (give speed or normalized Doppler, not both)")
    if "v" in kw and "tau" not in kw:
        ck.err("system.tau", "required when system.v is given (or give system.ts)")

    snr = ck.grid(sys_, "snr_db", "system.snr_db")
    if snr is not None:
        kw["snr_db"] = snr
    kw["precoder"] = ck.choice(sys_, "precoder", "system.precoder", ("zf", "mmse")) or "zf"
    for key, opts in (("v_grid", dict(lo=0)), ("b_grid", dict(integer=True, lo=1)),
                      ("fdts_grid", dict(lo=0, lo_open=True, hi=0.5, hi_open=True)),
                      ("us_bits", dict(integer=True, lo=1, hi=MAX_FEEDBACK_BITS)),
                      ("b_t", dict(integer=True, lo=0))):
        g = ck.grid(sys_, key, f"system.{key}", **opts)
        if g is not None:
            kw[key] = g

    users = sys_.get("users")
    if users is not None:
        if not isinstance(users, list) or not users:
            ck.err("system.users", "must be a nonempty list of user mappings")
        else:
            specs = []
            for i, us in enumerate(users):
                p = f"system.users[{i}]"
                if not isinstance(us, dict):
                    ck.err(p, "must be a mapping")
                    continue
                for k in sorted(set(us) - _USER_KEYS, key=str):
                    ck.err(f"{p}.{k}", "unknown key")
                s = ck.number(us, "snr_db", f"{p}.snr_db")
                if "snr_db" not in us:
                    ck.err(f"{p}.snr_db", "required")
                uv = ck.number(us, "v", f"{p}.v", lo=0)
                uf = ck.number(us, "fdts", f"{p}.fdts", lo=0, hi=0.5, hi_open=True)
                if uv is not None and uf is not None:
                    ck.err(f"{p}.fdts", "mutually exclusive with v")
                if uv is not None and "tau" not in kw:
                    ck.err(f"{p}.v", "needs system.tau (or system.ts)")
                ub = ck.number(us, "b", f"{p}.b", integer=True, lo=1, allow_inf=True)
                if s is not None:
                    specs.append(UserSpec(snr_db=s, v=uv, fdts=uf,
                                          b=math.inf if ub is None or math.isinf(ub) else int(ub)))
            kw["users"] = tuple(specs)

    for key, opts in (("trials", dict(integer=True, lo=1)), ("us_trials", dict(integer=True, lo=1)),
                      ("seed", dict(integer=True, lo=0, hi=2**64 - 1)), ("workers", dict(integer=True, lo=1)),
                      ("slots", dict(integer=True, lo=1))):
        val = ck.number(run, key, f"run.{key}", **opts)
        if val is not None:
            kw[key] = val
    fmt = ck.choice(run, "format", "run.format", ("csv", "json"))
    if fmt:
        kw["format"] = fmt
    su = ck.choice(run, "su", "run.su", ("proxy", "montecarlo"))
    if su:
        kw["su"] = su
    if run.get("out") is not None:
        if isinstance(run["out"], (bool, dict, list)) or not str(run["out"]):
            ck.err("run.out", "must be a nonempty path")
        else:
            kw["out"] = str(run["out"])

    # kind-specific requirements
    if nt is not None and kind in KINDS:
        _check_kind(ck, kind, nt, kw, sys_)
    if ck.diags or nt is None or kind not in KINDS:
        return None
    return ExperimentConfig(kind=kind, nt=nt, raw=data, **kw)


def _check_kind(ck: _Checker, kind: str, nt: int, kw: dict, sys_: dict):
    def need(key, why=""):
        if key not in kw:
            ck.err(f"system.{key}", "required" + (f" for {kind}" if not why else f" {why}"))

    if "m" in kw and not 1 <= kw["m"] <= nt:
        ck.err("system.m", f"must satisfy 1 <= M <= Nt (got M={kw['m']}, Nt={nt})")
    if kind == "simulate":
        need("m")
    if kind == "operating-region":
        has_v, has_b = "v_grid" in kw, "b_grid" in kw
        if has_v == has_b:
            ck.err("system.v_grid", "give exactly one of system.v_grid or system.b_grid")
        elif has_v:
            if "b" not in kw or math.isinf(kw["b"]):
                ck.err("system.b", "a finite value is required with system.v_grid")
            if "tau" not in kw:
                ck.err("system.tau", "required with system.v_grid")
            if "v" in kw or "fdts" in kw:
                ck.err("system.v", "conflicts with system.v_grid")
        elif "v" not in kw and "fdts" not in kw:
            ck.err("system.v", "required with system.b_grid (or give system.fdts)")
    if kind == "feedback-budget":
        need("b_t")
        if "b" in sys_ and sys_["b"] is not None:
            ck.err("system.b", "not used by feedback-budget (bits follow from system.b_t)")
    if kind == "high-snr-mode":
        need("fdts_grid")
        need("b_grid")
        if nt < 2:
            ck.err("system.nt", "high-snr-mode needs Nt >= 2")
    if kind == "schedule":
        users = kw.get("users")
        if users is not None:
            if "u" in sys_ and sys_["u"] is not None and kw.get("u") != len(users):
                ck.err("system.u", f"disagrees with the number of system.users ({len(users)})")
        elif len(kw.get("snr_db", DEFAULT_SNR_DB)) != 1:
            ck.err("system.snr_db", "schedule needs a single SNR value (or per-user system.users)")


def validate_config(path: Optional[str], overrides: Iterable[str] = (), kind: Optional[str] = None) -> list:
    """Diagnostics for a config file plus overrides; empty iff it is runnable."""
    data, lines, overridden, source, diags = _read(path, list(overrides))
    if data is None:
        return diags
    ck = _Checker(lines, overridden, source)
    ck.diags.extend(diags)
    _build(data, ck, kind)
    return ck.diags


def load_config(path: Optional[str], overrides: Iterable[str] = (), kind: Optional[str] = None) -> ExperimentConfig:
    """Validated :class:`ExperimentConfig`; raises :class:`ConfigError` with all diagnostics."""
    data, lines, overridden, source, diags = _read(path, list(overrides))
    if data is None:
        raise ConfigError(diags)
    ck = _Checker(lines, overridden, source)
    ck.diags.extend(diags)
    cfg = _build(data, ck, kind)
    if cfg is None:
        raise ConfigError(ck.diags)
    return cfg
