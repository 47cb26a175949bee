"""Benchmark experiment presets and run-configuration resolution.

Three presets mirror the published benchmark setups:

  rectangle  clamped (-5,5)x(-2,2) plate, left edge held flat, alpha = 2.5,
             tau = h/5; relaxes toward a cylinder of radius 1/alpha.
  oshape     frame plate (-5,5)x(-2,2) minus [-4,4]x[-1,1], clamped along the
             two unit segments at the lower-left corner, alpha = 0.5, tau = h/5.
  obstacle   the O-shape pressed by a constant vertical body force against a
             plane at height 1, penalized flow, tau = h/50, eps = 1.25e-1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .constraints import apply_dirichlet, identity_boundary_data
from .dkt import DeformationField, flat_embedding
from .energy import SimulationParams
from .mesh import (TriangleMesh, generate_oshape_mesh, generate_rectangle_mesh,
                   tag_dirichlet_boundary)

RECT_CLAMP = (((-5.0, -2.0), (-5.0, 2.0)),)
OSHAPE_CLAMP = (((-5.0, -2.0), (-5.0, -1.0)), ((-5.0, -2.0), (-4.0, -2.0)))

PRESETS = {
    "rectangle": dict(domain="rectangle", level=3, pattern="nonsymmetric",
                      alpha=2.5, tau_denominator=5, mode="isometry_flow",
                      dirichlet=RECT_CLAMP, cf=0.0, eps=None),
    "oshape": dict(domain="oshape", level=3, pattern="symmetric",
                   alpha=0.5, tau_denominator=5, mode="isometry_flow",
                   dirichlet=OSHAPE_CLAMP, cf=0.0, eps=None),
    "obstacle": dict(domain="oshape", level=3, pattern="symmetric",
                     alpha=0.0, tau_denominator=50, mode="penalized_flow",
                     dirichlet=OSHAPE_CLAMP, cf=6.0e-3, eps=1.25e-1),
}

CONFIG_KEYS = ("experiment", "level", "pattern", "alpha", "tau", "tau_scale",
               "eps", "cf", "eps_stop", "max_iters", "out", "vtk_every", "resume")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class RunConfig:
    """A fully resolvable run description; unset fields fall back to the preset."""

    experiment: str = "oshape"
    level: Optional[int] = None
    pattern: Optional[str] = None
    alpha: Optional[float] = None
    tau: Optional[float] = None          # explicit step size, overrides the rule
    tau_scale: int = 0                   # tau = 2**tau_scale * h / denominator
    eps: Optional[float] = None
    cf: Optional[float] = None
    eps_stop: float = 1.0e-3
    max_iters: int = 500_000
    out: str = "out"
    vtk_every: int = 1000
    resume: Optional[str] = None

    def __post_init__(self):
        if self.experiment not in PRESETS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; "
                              f"choose from {sorted(PRESETS)}")


@dataclass
class ResolvedRun:
    config: RunConfig
    mesh: TriangleMesh
    params: SimulationParams
    initial: DeformationField
    echo: dict


def resolve(config: RunConfig) -> ResolvedRun:
    """Build the mesh, parameters and initial state a config describes."""
    preset = PRESETS[config.experiment]
    level = preset["level"] if config.level is None else int(config.level)
    if level < 0:
        raise ConfigError("level must be a nonnegative integer")
    pattern = preset["pattern"] if config.pattern is None else config.pattern
    alpha = preset["alpha"] if config.alpha is None else float(config.alpha)
    mode = preset["mode"]
    cf = preset["cf"] if config.cf is None else float(config.cf)
    eps = preset["eps"] if config.eps is None else float(config.eps)

    h = 2.0 ** (-level)
    tau = float(config.tau) if config.tau is not None else \
        (2.0 ** config.tau_scale) * h / preset["tau_denominator"]

    if mode == "penalized_flow" and (eps is None or not eps > 0):
        raise ConfigError("penalized mode requires a positive eps")
    if mode != "penalized_flow" and config.eps is not None:
        raise ConfigError(f"eps is only meaningful for the obstacle experiment, "
                          f"not {config.experiment!r}")

    if preset["domain"] == "rectangle":
        mesh = generate_rectangle_mesh(level, pattern)
    else:
        mesh = generate_oshape_mesh(level, pattern)
    mesh = tag_dirichlet_boundary(mesh, preset["dirichlet"])

    f = (0.0, 0.0, cf) if cf else None
    params = SimulationParams(alpha=alpha, tau=tau, eps_stop=config.eps_stop,
                              eps_penalty=eps, f=f, mode=mode,
                              max_iters=config.max_iters)

    if config.resume:
        from .io import load_field
        initial = load_field(config.resume)
        if initial.dofs.size != 9 * mesh.num_vertices:
            raise ConfigError(f"checkpoint {config.resume!r} does not match the mesh "
                              f"({initial.num_vertices} vs {mesh.num_vertices} vertices)")
    else:
        initial = flat_embedding(mesh)
    y_d, phi_d = identity_boundary_data()
    initial = apply_dirichlet(initial, mesh, y_d, phi_d)

    echo = {
        "experiment": config.experiment, "domain": preset["domain"],
        "level": level, "pattern": pattern, "h": h,
        "alpha": alpha, "tau": tau, "tau_scale": config.tau_scale,
        "eps": eps if eps is not None else "none", "cf": cf,
        "eps_stop": config.eps_stop, "mode": mode,
        "max_iters": config.max_iters, "vtk_every": config.vtk_every,
        "resume": config.resume or "none",
        "triangles": mesh.num_triangles, "vertices": mesh.num_vertices,
    }
    return ResolvedRun(config, mesh, params, initial, echo)
