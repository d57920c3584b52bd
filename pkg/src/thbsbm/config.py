"""Study configuration: INI-style files with fail-closed key validation.

Every option lives in a section; unknown sections or keys abort parsing
so typos in study definitions cannot silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

GEOMETRIES = ("square", "circle_hole", "annulus", "polyline_hole")
BC_TAGS = ("dirichlet", "neumann")
STRATEGY_TAGS = ("none", "h", "p", "k")
REFINE_TARGETS = ("D", "N", "both", "none")
SCHEDULE_MODES = ("halve", "step")
NEUMANN_RULES = ("automatic", "force_standard", "force_enhanced")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Complete description of one study (or single run)."""

    geometry: str = "square"
    center: tuple[float, float] = (0.5, 0.5)
    radius: float = 0.15
    r_inner: float = 0.10
    r_outer: float = 0.47
    polyline_file: str | None = None
    outer_bc: str = "dirichlet"
    hole_bc: str = "dirichlet"
    solution: str = "coshsin"
    degrees: tuple[int, ...] = (2,)
    strategies: tuple[str, ...] = ("none",)
    refine_target: str = "N"
    refine_levels: int = 1
    schedule_mode: str = "halve"
    span_start: int = 20
    span_end: int = 160
    theta: float = -1.0
    alpha: float = 0.0
    dirichlet_order: int | None = None
    neumann_order: int | None = None
    enhanced_dirichlet: bool = True
    neumann_rule: str = "automatic"
    out_csv: str = ""
    threads: int = 1

    def validate(self) -> "RunConfig":
        if self.geometry not in GEOMETRIES:
            raise ConfigError(f"geometry.kind: unknown geometry {self.geometry!r}")
        if self.outer_bc not in BC_TAGS:
            raise ConfigError(f"bcs.outer: unknown tag {self.outer_bc!r}")
        if self.hole_bc not in BC_TAGS:
            raise ConfigError(f"bcs.hole: unknown tag {self.hole_bc!r}")
        if self.geometry == "polyline_hole" and not self.polyline_file:
            raise ConfigError("geometry.polyline: required for polyline_hole")
        if not self.degrees:
            raise ConfigError("discretization.degrees: empty")
        if any(d < 1 or d > 5 for d in self.degrees):
            raise ConfigError("discretization.degrees: degrees must be within 1..5")
        if not self.strategies:
            raise ConfigError("discretization.strategies: empty")
        for s in self.strategies:
            if s not in STRATEGY_TAGS:
                raise ConfigError(f"discretization.strategies: unknown strategy {s!r}")
        if self.refine_target not in REFINE_TARGETS:
            raise ConfigError(f"discretization.refine_target: unknown {self.refine_target!r}")
        if self.refine_levels < 0:
            raise ConfigError("discretization.refine_levels: must be >= 0")
        if self.schedule_mode not in SCHEDULE_MODES:
            raise ConfigError(f"schedule.mode: unknown mode {self.schedule_mode!r}")
        if self.span_start < 1 or self.span_end < self.span_start:
            raise ConfigError("schedule: need 1 <= start <= stop")
        if self.theta not in (-1.0, 1.0):
            raise ConfigError("nitsche.theta: must be -1 or 1")
        if self.alpha < 0:
            raise ConfigError("nitsche.alpha: must be >= 0")
        if self.neumann_rule not in NEUMANN_RULES:
            raise ConfigError(f"shift.neumann_rule: unknown rule {self.neumann_rule!r}")
        if self.threads < 1:
            raise ConfigError("output.threads: must be >= 1")
        return self


_SCHEMA = {
    "geometry": {"kind", "center", "radius", "r_inner", "r_outer", "polyline"},
    "bcs": {"outer", "hole"},
    "solution": {"id"},
    "discretization": {"degrees", "strategies", "refine_target", "refine_levels"},
    "schedule": {"mode", "start", "stop"},
    "nitsche": {"theta", "alpha"},
    "shift": {"dirichlet_order", "neumann_order", "enhanced_dirichlet", "neumann_rule"},
    "output": {"csv", "threads"},
}


def parse_config(text: str) -> RunConfig:
    """Parses the INI text; unknown sections or keys raise ConfigError."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")

    cfg = RunConfig()

    def get(section, key, default=None):
        if cp.has_option(section, key):
            v = cp.get(section, key).strip()
            return v if v else default
        return default

    def get_bool(section, key, default):
        v = get(section, key)
        if v is None:
            return default
        if v.lower() in ("true", "yes", "1", "on"):
            return True
        if v.lower() in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{section}.{key}: not a boolean: {v!r}")

    try:
        cfg.geometry = get("geometry", "kind", cfg.geometry)
        c = get("geometry", "center")
        if c is not None:
            parts = c.split()
            if len(parts) != 2:
                raise ConfigError("geometry.center: expected 'x y'")
            cfg.center = (float(parts[0]), float(parts[1]))
        cfg.radius = float(get("geometry", "radius", cfg.radius))
        cfg.r_inner = float(get("geometry", "r_inner", cfg.r_inner))
        cfg.r_outer = float(get("geometry", "r_outer", cfg.r_outer))
        cfg.polyline_file = get("geometry", "polyline", cfg.polyline_file)
        cfg.outer_bc = get("bcs", "outer", cfg.outer_bc)
        cfg.hole_bc = get("bcs", "hole", cfg.hole_bc)
        cfg.solution = get("solution", "id", cfg.solution)
        d = get("discretization", "degrees")
        if d is not None:
            cfg.degrees = tuple(int(t) for t in d.split())
        s = get("discretization", "strategies")
        if s is not None:
            cfg.strategies = tuple(s.split())
        cfg.refine_target = get("discretization", "refine_target", cfg.refine_target)
        cfg.refine_levels = int(get("discretization", "refine_levels", cfg.refine_levels))
        cfg.schedule_mode = get("schedule", "mode", cfg.schedule_mode)
        cfg.span_start = int(get("schedule", "start", cfg.span_start))
        cfg.span_end = int(get("schedule", "stop", cfg.span_end))
        cfg.theta = float(get("nitsche", "theta", cfg.theta))
        cfg.alpha = float(get("nitsche", "alpha", cfg.alpha))
        do = get("shift", "dirichlet_order")
        cfg.dirichlet_order = int(do) if do is not None else None
        no = get("shift", "neumann_order")
        cfg.neumann_order = int(no) if no is not None else None
        cfg.enhanced_dirichlet = get_bool("shift", "enhanced_dirichlet", cfg.enhanced_dirichlet)
        cfg.neumann_rule = get("shift", "neumann_rule", cfg.neumann_rule)
        cfg.out_csv = get("output", "csv", cfg.out_csv) or ""
        cfg.threads = int(get("output", "threads", cfg.threads))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"malformed config value: {exc}") from None
    return cfg.validate()


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def serialize_config(cfg: RunConfig) -> str:
    """Round-trippable INI text of the effective settings."""
    cp = configparser.ConfigParser()
    cp["geometry"] = {
        "kind": cfg.geometry,
        "center": f"{cfg.center[0]} {cfg.center[1]}",
        "radius": repr(cfg.radius),
        "r_inner": repr(cfg.r_inner),
        "r_outer": repr(cfg.r_outer),
    }
    if cfg.polyline_file:
        cp["geometry"]["polyline"] = cfg.polyline_file
    cp["bcs"] = {"outer": cfg.outer_bc, "hole": cfg.hole_bc}
    cp["solution"] = {"id": cfg.solution}
    cp["discretization"] = {
        "degrees": " ".join(map(str, cfg.degrees)),
        "strategies": " ".join(cfg.strategies),
        "refine_target": cfg.refine_target,
        "refine_levels": str(cfg.refine_levels),
    }
    cp["schedule"] = {"mode": cfg.schedule_mode, "start": str(cfg.span_start),
                      "stop": str(cfg.span_end)}
    cp["nitsche"] = {"theta": repr(cfg.theta), "alpha": repr(cfg.alpha)}
    cp["shift"] = {"enhanced_dirichlet": str(cfg.enhanced_dirichlet).lower(),
                   "neumann_rule": cfg.neumann_rule}
    if cfg.dirichlet_order is not None:
        cp["shift"]["dirichlet_order"] = str(cfg.dirichlet_order)
    if cfg.neumann_order is not None:
        cp["shift"]["neumann_order"] = str(cfg.neumann_order)
    cp["output"] = {"csv": cfg.out_csv, "threads": str(cfg.threads)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
