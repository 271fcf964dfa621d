"""INI configuration and PES parameter files.

Both files are plain UTF-8 ``key = value`` INI read with configparser.
Keys are case-sensitive and physical quantities carry a unit suffix
(``_amu``, ``_A``, ``_eV``, ``_rad``, ``_invA``). Errors point at the
offending line and column.
"""
from __future__ import annotations

import configparser
import copy
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

from nccscatter.lib.errors import ConfigError, DomainError
from nccscatter.lib.pes import LepsParameters, PairParameters
from nccscatter.lib.units import UNITS

logger = logging.getLogger(__name__)

UNIT_SUFFIXES = ("amu", "A", "eV", "rad", "invA", "bohr", "Ha", "au", "deg", "K")

REQUIRED = object()

# section -> key -> (type, default); a default of None means "derived or unset"
SCHEMA: dict[str, dict[str, tuple[Any, Any]]] = {
    "masses": {
        "mA_amu": (float, REQUIRED),
        "mB_amu": (float, REQUIRED),
        "mC_amu": (float, REQUIRED),
    },
    "pes": {
        "file": (str, None),
    },
    "path": {
        "a": (float, None),
        "q_eq_minus_A": (float, None),
        "q_eq_plus_A": (float, None),
        "u0": (float, 0.0),
    },
    "integrator": {
        "rtol": (float, 1e-10),
        "atol": (float, 1e-12),
        "s_max": (float, 2e4),
        "output_stride": (float, 1.0),
        "u_start": (float, None),
        "u_react": (float, None),
        "u_nonreact": (float, None),
        "angular_momentum": (float, 0.0),
        "lyapunov_delta0": (float, 1e-8),
        "lyapunov_renorm_fraction": (float, 0.02),
    },
    "trajectory": {
        "E_eV": (float, None),
        "phi_rad": (float, 0.0),
        "n": (int, 0),
    },
    "quantum": {
        "channels": (int, 6),
        "u_min": (float, None),
        "u_max": (float, None),
        "u_steps": (int, 1200),
        "v_steps": (int, 400),
        "v_min": (float, -3.0),
        "v_max": (float, 1.2),
        "j": (int, 0),
        "mode": (("static", "tube"), "static"),
        "reorth_stride": (int, 50),
        "max_phase_step": (float, 0.05),
    },
    "scatter": {
        "E_eV": (float, None),
        "E_max_eV": (float, None),
        "nE": (int, 1),
        "phi_rad": (float, 0.0),
        "nPhi": (int, 1),
    },
    "sweep": {
        "E_min_eV": (float, None),
        "E_max_eV": (float, None),
        "nE": (int, 16),
        "nPhi": (int, 16),
        "n": (int, 0),
    },
    "average": {
        "energy_eV": (float, None),
        "delta_e_eV": (float, 0.0),
        "rectangles": (int, 16),
        "tol": (float, 0.05),
        "max_subdivision": (int, 3),
        "initial_nodes": (int, 2),
        "undecided": (("exclude", "nonreactive"), "exclude"),
        "sigma_target": (("product", "reactant"), "product"),
    },
    "run": {
        "seed": (int, 0),
        "threads": (int, 1),
    },
}

PAIR_SCHEMA = {
    "De_eV": float,
    "beta_invA": float,
    "re_A": float,
    "sato": float,
}

DEFAULT_PES = "lifh_leps.ini"


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration.

    ``values`` holds every known key with defaults materialised; ``derived``
    names the keys computed at run time rather than read from the file.
    """

    values: dict[str, dict[str, Any]]
    source: Optional[str] = None
    derived: tuple[str, ...] = ()
    strict: bool = True
    pes_path: Optional[str] = None

    def get(self, section: str, key: str) -> Any:
        try:
            return self.values[section][key]
        except KeyError as exc:
            raise ConfigError(f"unknown configuration key {section}.{key}") from exc

    def effective(self) -> dict[str, dict[str, Any]]:
        """Deep copy of all effective values."""
        return copy.deepcopy(self.values)

    def with_values(self, section: str, **updates: Any) -> "RunConfig":
        """Copy with ``updates`` applied to ``section``; None values are skipped."""
        values = copy.deepcopy(self.values)
        for key, value in updates.items():
            if value is None:
                continue
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown configuration key {section}.{key}")
            values[section][key] = _coerce(SCHEMA[section][key][0], value, f"{section}.{key}")
        return RunConfig(values=values, source=self.source, derived=self.derived, strict=self.strict, pes_path=self.pes_path)

    def with_derived(self, section: str, key: str, value: Any) -> "RunConfig":
        updated = self.with_values(section, **{key: value})
        name = f"{section}.{key}"
        derived = self.derived if name in self.derived else self.derived + (name,)
        return RunConfig(values=updated.values, source=self.source, derived=derived, strict=self.strict, pes_path=self.pes_path)


def _coerce(kind: Any, value: Any, name: str) -> Any:
    if isinstance(kind, tuple):
        if value not in kind:
            raise ConfigError(f"{name} must be one of {', '.join(kind)}, got {value!r}")
        return value
    if kind is str:
        return str(value)
    try:
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: cannot parse {value!r} as {kind.__name__}") from exc


def _locate(lines: list[str]) -> dict[tuple[str, Optional[str]], tuple[int, int, int]]:
    """(section, key) -> (line, key column, value column), 1-based; key None for headers."""
    where: dict[tuple[str, Optional[str]], tuple[int, int, int]] = {}
    section = ""
    for lineno, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        m = re.match(r"\s*\[([^\]]+)\]", raw)
        if m:
            section = m.group(1).strip()
            where[(section, None)] = (lineno, m.start(1) + 1, 0)
            continue
        m = re.match(r"(\s*)([^=:\s][^=:]*?)\s*[=:]\s*", raw)
        if m:
            where[(section, m.group(2))] = (lineno, len(m.group(1)) + 1, m.end() + 1)
    return where


def _read_ini(path: Path) -> tuple[configparser.ConfigParser, dict]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc}", path=str(path)) from exc
    except UnicodeDecodeError as exc:
        raise ConfigError(f"file is not valid UTF-8: {exc}", path=str(path)) from exc
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.section}.{exc.option}", path=str(path), line=exc.lineno) from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", path=str(path), line=exc.lineno) from exc
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", path=str(path), line=exc.lineno) from exc
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if getattr(exc, "errors", None) else None
        raise ConfigError(f"malformed line: {exc}", path=str(path), line=line) from exc
    return parser, _locate(text.splitlines())


def _suffix_stem(key: str) -> tuple[str, Optional[str]]:
    head, _, tail = key.rpartition("_")
    if head and tail in UNIT_SUFFIXES:
        return head, tail
    return key, None


def _unknown_key(section: str, key: str, known: dict, path: Path, where: dict, strict: bool) -> None:
    line, col, _ = where.get((section, key), (None, None, None))
    stem, suffix = _suffix_stem(key)
    for candidate in known:
        c_stem, c_suffix = _suffix_stem(candidate)
        if c_stem == stem and c_suffix != suffix:
            raise ConfigError(f"unit suffix mismatch for {section}.{key}: expected {candidate}", path=str(path), line=line, column=col)
    if strict:
        raise ConfigError(f"unknown key {section}.{key}", path=str(path), line=line, column=col)
    logger.warning(f"{path}:{line}: ignoring unknown key {section}.{key}")


def load_config(path: str | Path, strict: bool = True) -> RunConfig:
    """Read and validate a run configuration.

    Raises:
        ConfigError: For unknown sections or keys (strict mode), unit-suffix
            mismatches, missing required keys and unparsable values.
    """
    path = Path(path)
    parser, where = _read_ini(path)
    values: dict[str, dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            line, col, _ = where.get((section, None), (None, None, None))
            if strict:
                raise ConfigError(f"unknown section [{section}]", path=str(path), line=line, column=col)
            logger.warning(f"{path}:{line}: ignoring unknown section [{section}]")
            continue
        for key in parser[section]:
            if key not in SCHEMA[section]:
                _unknown_key(section, key, SCHEMA[section], path, where, strict)

    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (kind, default) in keys.items():
            if parser.has_option(section, key):
                raw = parser.get(section, key).strip()
                line, _, vcol = where.get((section, key), (None, None, None))
                try:
                    values[section][key] = _coerce(kind, raw, f"{section}.{key}")
                except ConfigError as exc:
                    raise ConfigError(str(exc), path=str(path), line=line, column=vcol) from exc
            elif default is REQUIRED:
                line, col, _ = where.get((section, None), (None, None, None))
                raise ConfigError(f"missing required key {section}.{key}", path=str(path), line=line, column=col)
            else:
                values[section][key] = default

    pes_file = values["pes"]["file"]
    pes_path = str((path.parent / pes_file).resolve()) if pes_file else None
    logger.info(f"loaded configuration {path} (strict={strict})")
    return RunConfig(values=values, source=str(path), strict=strict, pes_path=pes_path)


def default_pes_path() -> Path:
    return Path(str(resources.files("nccscatter.data").joinpath(DEFAULT_PES)))


@dataclass(frozen=True)
class PesFile:
    params: LepsParameters
    path: str
    note: str = ""
    raw: dict[str, dict[str, float]] = field(default_factory=dict)


def load_leps_parameters(path: str | Path | None = None, strict: bool = True) -> PesFile:
    """Read a LEPS parameter file and convert it to internal units.

    Sections ``[pair.BC]``, ``[pair.AB]`` and ``[pair.AC]`` are required;
    an optional ``[meta]`` section may carry a ``note``.
    """
    path = Path(path) if path is not None else default_pes_path()
    parser, where = _read_ini(path)
    pairs: dict[str, PairParameters] = {}
    raw: dict[str, dict[str, float]] = {}
    note = ""
    for section in parser.sections():
        if section == "meta":
            note = parser.get("meta", "note", fallback="")
            continue
        if section not in ("pair.BC", "pair.AB", "pair.AC"):
            line, col, _ = where.get((section, None), (None, None, None))
            if strict:
                raise ConfigError(f"unknown section [{section}]", path=str(path), line=line, column=col)
            logger.warning(f"{path}:{line}: ignoring unknown section [{section}]")
    for name in ("BC", "AB", "AC"):
        section = f"pair.{name}"
        if not parser.has_section(section):
            raise ConfigError(f"missing section [{section}]", path=str(path))
        for key in parser[section]:
            if key not in PAIR_SCHEMA:
                _unknown_key(section, key, PAIR_SCHEMA, path, where, strict)
        vals: dict[str, float] = {}
        for key in PAIR_SCHEMA:
            line, col, vcol = where.get((section, key), (None, None, None))
            if not parser.has_option(section, key):
                hline, hcol, _ = where.get((section, None), (None, None, None))
                raise ConfigError(f"missing key {section}.{key}", path=str(path), line=hline, column=hcol)
            try:
                vals[key] = _coerce(float, parser.get(section, key).strip(), f"{section}.{key}")
            except ConfigError as exc:
                raise ConfigError(str(exc), path=str(path), line=line, column=vcol) from exc
        raw[name] = vals
        try:
            pairs[name] = PairParameters(
                De=UNITS.ev(vals["De_eV"]),
                beta=vals["beta_invA"] / UNITS.length,
                re=UNITS.angstrom(vals["re_A"]),
                sato=vals["sato"],
            )
        except DomainError as exc:
            line, col, _ = where.get((section, None), (None, None, None))
            raise ConfigError(f"[{section}]: {exc}", path=str(path), line=line, column=col) from exc
    params = LepsParameters(bc=pairs["BC"], ab=pairs["AB"], ac=pairs["AC"])
    return PesFile(params=params, path=str(path), note=note, raw=raw)
