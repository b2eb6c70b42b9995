"""Experiment configuration: key-value files, per-study defaults, CLI overrides."""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ..fem.assembly import BcKind, BcSetup
from ..geometry import BufferConfig, BufferKind, DomainSpec
from ..linalg.krylov import KrylovConfig

# densities above this need the explicit large-run flag
DESK_MAX_M = 16


class Study(str, enum.Enum):
    INFSUP = "infsup"
    CONVERGENCE = "convergence"
    AMPLIFY = "amplify"
    BUFFERS = "buffers"
    BENCH = "bench"
    MESH = "mesh"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    study: Study
    L_x: float = 1.0
    L_y: float = 1.0
    m: int = 4
    delta: float = 0.0
    rho: float = 0.25
    buffer_kind: str = "none"
    L_b: float = 0.0
    setups: tuple[str, ...] = ("A",)  # A = pressure driven, B = velocity driven
    p_in: float | None = None  # None: m**2
    p_out: float = 0.0
    U_max: float = 1.0
    mu: float = 1.0
    N_g: float = 6.0
    min_angle: float = 25.0
    m_list: tuple[int, ...] = ()
    h_list: tuple[float, ...] = ()
    delta_list: tuple[float, ...] = ()
    buffer_list: tuple[str, ...] = ()
    precond: tuple[str, ...] = ("std", "al")
    gamma0: float = 1.0
    gamma0_list: tuple[float, ...] = ()
    field_m: tuple[int, ...] = ()
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_iter: int = 1000
    restart: int = 500
    consistency_rel_tol: float = 1e-13
    ref_tol: float = 1e-12
    eig_tol: float = 1e-8
    eig_block: int = 8
    export_matrices: bool = False
    output_dir: str = "results"
    seed: int = 0
    large: bool = False

    def __post_init__(self):
        object.__setattr__(self, "study", Study(self.study))
        for name in ("m_list", "h_list"):
            vals = getattr(self, name)
            if list(vals) != sorted(vals, reverse=(name == "h_list")):
                order = "decreasing" if name == "h_list" else "increasing"
                raise ConfigError(f"{name} must be sorted ({order})")
        if self.study in (Study.INFSUP, Study.AMPLIFY, Study.BUFFERS, Study.BENCH) and not self.m_list:
            raise ConfigError(f"study {self.study.value} needs a nonempty m_list")
        if self.study is Study.CONVERGENCE and not self.h_list:
            raise ConfigError("study convergence needs a nonempty h_list")
        for s in self.setups:
            if s not in ("A", "B"):
                raise ConfigError(f"unknown setup {s!r} (expected A or B)")
        big = [m for m in self.m_list if m > DESK_MAX_M]
        if big and not self.large:
            raise ConfigError(f"m = {big} exceed desk scale ({DESK_MAX_M}); pass --large to run them")

    def domain(self, m: int | None = None, delta: float | None = None, buffer_kind: str | None = None) -> DomainSpec:
        kind = BufferKind(buffer_kind if buffer_kind is not None else self.buffer_kind)
        return DomainSpec(
            L_x=self.L_x,
            L_y=self.L_y,
            m=int(m if m is not None else self.m),
            delta=self.delta if delta is None else delta,
            rho=self.rho,
            buffer=BufferConfig(kind, 0.0 if kind is BufferKind.NONE else self.L_b),
        )

    def bc(self, name: str) -> BcSetup:
        if name == "A":
            return BcSetup(BcKind.PRESSURE_DRIVEN, p_in=self.p_in, p_out=self.p_out, mu=self.mu)
        return BcSetup(BcKind.VELOCITY_DRIVEN, U_max=self.U_max, mu=self.mu)

    def krylov(self) -> KrylovConfig:
        return KrylovConfig(self.abs_tol, self.rel_tol, self.max_iter, self.restart)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["study"] = self.study.value
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def defaults(study: Study | str) -> dict:
    """Desk-scale defaults of every study."""
    study = Study(study)
    base: dict = {"study": study}
    if study is Study.INFSUP:
        base.update(L_x=1.0, L_y=1.0, delta=0.0, rho=0.25, N_g=6.0, m_list=(2, 4, 8, 16))
    elif study is Study.CONVERGENCE:
        # m = 4 on the 2 x 1 channel; h values of the reference table
        base.update(
            L_x=2.0, L_y=1.0, m=4, rho=0.3, setups=("A", "B"),
            h_list=(0.0786, 0.0549, 0.0426, 0.0338, 0.0284, 0.0247, 0.0218),
        )
    elif study is Study.AMPLIFY:
        base.update(L_x=2.0, L_y=1.0, rho=0.3, N_g=6.0, setups=("A", "B"), m_list=(2, 4, 8, 16))
    elif study is Study.BUFFERS:
        base.update(
            L_x=2.0, L_y=1.0, rho=0.3, N_g=6.0, setups=("B",), L_b=0.5,
            buffer_list=("patterned", "empty"), m_list=(2, 4, 8),
        )
    elif study is Study.BENCH:
        base.update(
            L_x=1.0, L_y=1.0, rho=0.25, N_g=6.0, setups=("A",), m_list=(2, 4, 8, 16),
            delta_list=(0.0, 1.0 / 3.0), field_m=(4, 8),
        )
    elif study is Study.MESH:
        base.update(m_list=(4,))
    return base


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _convert(key: str, raw) -> object:
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    typ = str(_FIELD_TYPES[key])
    if not isinstance(raw, str):
        if typ.startswith("tuple") and not isinstance(raw, tuple):
            return tuple(raw)
        return raw
    text = raw.strip()
    try:
        if typ.startswith("tuple"):
            items = [t.strip() for t in text.replace(";", ",").split(",") if t.strip()]
            if "int" in typ:
                return tuple(int(t) for t in items)
            if "float" in typ:
                return tuple(_fraction(t) for t in items)
            return tuple(items)
        if typ == "bool":
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if typ == "int":
            return int(text)
        if typ.startswith("float"):
            if "None" in typ and text.lower() in ("", "none", "default"):
                return None
            return _fraction(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def _fraction(text: str) -> float:
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment; lists are comma separated."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def load_config(study: Study | str, path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Study defaults, then the file, then explicit overrides."""
    raw: dict = dict(defaults(study))
    if path is not None:
        file_vals = parse_config_text(Path(path).read_text())
        if "study" in file_vals and Study(file_vals["study"]) is not Study(study):
            raise ConfigError(f"config file is for study {file_vals['study']!r}, not {Study(study).value!r}")
        file_vals.pop("study", None)
        raw.update({k: _convert(k, v) for k, v in file_vals.items()})
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = _convert(k, v)
    return ExperimentConfig(**raw)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: _convert(k, v) for k, v in kw.items()})
