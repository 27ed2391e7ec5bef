"""Run configuration, key = value config files and deterministic CSV output."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .propagator import Hamiltonian2, discriminant

METHODS = ("sqz", "case1", "case2", "sqc-twf", "covariant", "custom")
POINTS_PER_PERIOD = 200
DEFAULT_PERIODS = 3


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (usage error)."""


@dataclass(frozen=True)
class RunConfig:
    h11: float = 10.0
    h22: float = 2.0
    h12_re: float = 2.0
    h12_im: float = 0.0
    method: str = "sqz"
    gamma: float = 0.5
    ntraj: int = 100_000
    seed: int = 42
    tmax: float | None = None
    dt: float | None = None
    out: str | None = None
    xi_table: str | None = None
    f_table: str | None = None
    threads: int = 1

    def __post_init__(self):
        for name in ("h11", "h22", "h12_re", "h12_im", "gamma"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {', '.join(METHODS)}; got {self.method!r}")
        if self.gamma <= -0.5:
            raise ConfigError("gamma must exceed -1/2")
        if self.ntraj < 1:
            raise ConfigError("ntraj must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.tmax is not None and not (math.isfinite(self.tmax) and self.tmax > 0):
            raise ConfigError("tmax must be positive")
        if self.dt is not None and not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError("dt must be positive")
        if self.method == "custom":
            if (self.xi_table is None) == (self.f_table is None):
                raise ConfigError("method=custom needs exactly one of xi-table or f-table")
        elif self.xi_table is not None or self.f_table is not None:
            raise ConfigError("xi-table / f-table are only used with method=custom")

    @property
    def hamiltonian(self) -> Hamiltonian2:
        return Hamiltonian2(self.h11, self.h22, self.h12_re, self.h12_im)

    @property
    def rabi_period(self) -> float:
        delta = discriminant(self.hamiltonian)
        return math.inf if delta == 0.0 else 2.0 * math.pi / math.sqrt(delta)

    def resolved_grid(self) -> tuple[float, float]:
        """(tmax, dt) with defaults of three Rabi periods sampled 200 times per period."""
        period = self.rabi_period
        if not math.isfinite(period) and (self.tmax is None or self.dt is None):
            raise ConfigError("no Rabi period (degenerate Hamiltonian): give tmax and dt explicitly")
        tmax = DEFAULT_PERIODS * period if self.tmax is None else self.tmax
        dt = period / POINTS_PER_PERIOD if self.dt is None else self.dt
        return tmax, dt

    def time_grid(self) -> np.ndarray:
        tmax, dt = self.resolved_grid()
        steps = int(math.ceil(tmax / dt - 1e-9))
        return dt * np.arange(steps + 1)

    def describe(self) -> str:
        """One-line record of every setting, including the resolved grid."""
        tmax, dt = self.resolved_grid()
        parts = [f"{k}={_fmt_value(v)}" for k, v in asdict(self).items() if k not in ("tmax", "dt", "out")]
        parts += [f"tmax={tmax:.17g}", f"dt={dt:.17g}", f"npoints={len(self.time_grid())}"]
        return " ".join(parts)


def _fmt_value(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return "none" if v is None else str(v)


# --- config files --------------------------------------------------------------

def _to_int(s: str) -> int:
    """Integer, also accepting exact float spellings such as 1e6."""
    try:
        return int(s)
    except ValueError:
        v = float(s)
        if not v.is_integer():
            raise ValueError(f"not an integer: {s}") from None
        return int(v)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CONVERT = {
    "h11": float, "h22": float, "h12_re": float, "h12_im": float, "lambda": float,
    "gamma": float, "tmax": float, "dt": float,
    "ntraj": _to_int, "seed": int, "threads": int,
    "method": str, "out": str, "xi_table": str, "f_table": str,
}


def normalise_key(key: str) -> str:
    return key.strip().lower().lstrip("-").replace("-", "_")


def convert_value(key: str, raw) -> object:
    if key not in _CONVERT:
        raise ConfigError(f"unknown configuration key {key!r}")
    if not isinstance(raw, str):
        return raw
    try:
        return _CONVERT[key](raw.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment.  Keys use flag names (h12-re or h12_re)."""
    out = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        key = normalise_key(key)
        if key in out:
            raise ConfigError(f"{path}:{lineno}: {key} given twice")
        out[key] = convert_value(key, value)
    return out


def build_config(file_values: dict, flag_values: dict) -> RunConfig:
    """Merge defaults < config file < flags; ``lambda`` is shorthand for a real h12."""
    merged = {}
    for source in (file_values, flag_values):
        if "lambda" in source and ("h12_re" in source or "h12_im" in source):
            raise ConfigError("give either lambda or h12-re/h12-im, not both")
        if "lambda" in source:
            merged.pop("h12_re", None)
            merged.pop("h12_im", None)
        merged.update(source)
    if "lambda" in merged:
        merged["h12_re"] = merged.pop("lambda")
        merged["h12_im"] = 0.0
    unknown = set(merged) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    return RunConfig(**merged)


# --- CSV -------------------------------------------------------------------------

def format_number(x) -> str:
    return f"{float(x):.17g}"


def csv_text(columns: dict, comments=()) -> str:
    names = list(columns)
    arrays = [np.asarray(columns[k]) for k in names]
    length = {len(a) for a in arrays}
    if len(length) != 1:
        raise ValueError("all CSV columns must have the same length")
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(names))
    for row in zip(*arrays):
        lines.append(",".join(v if isinstance(v, str) else format_number(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, columns: dict, comments=()) -> None:
    text = csv_text(columns, comments)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def read_csv(path) -> tuple[list[str], dict]:
    """Inverse of write_csv for numeric columns: (comments, {name: array})."""
    comments, rows, header = [], [], None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            comments.append(line[1:].strip())
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append(line.split(","))
    if header is None:
        raise ValueError(f"{path}: no header row")
    cols = {}
    for i, name in enumerate(header):
        vals = [r[i] for r in rows]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = np.array(vals, dtype=object)
    return comments, cols
