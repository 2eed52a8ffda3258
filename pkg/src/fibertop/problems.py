"""Problem definitions: configuration schema, built-in case studies, and
the translation from a config into runtime FE objects.

Configs are plain JSON trees of SI quantities (Pa, N, m, rad). Presets are
complete configs, never partial overlays, so loading one and saving it
round-trips exactly.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fem import BoundaryConditions, MeshError, StructuredMesh
from .material import OrthotropicMaterial

EPOXY_GLASS = dict(e1=38.6e9, e2=8.27e9, g12=4.14e9, nu12=0.27, nu21=0.0578)


class ConfigError(ValueError):
    """A configuration file or preset violates the schema."""


@dataclass
class MaterialConfig:
    e1: float
    e2: float
    g12: float
    nu12: float
    nu21: float

    def build(self) -> OrthotropicMaterial:
        return OrthotropicMaterial(self.e1, self.e2, self.g12, self.nu12, self.nu21)


@dataclass
class StressLimits:
    """Ultimate stresses per principal direction (Pa); tension and
    compression share one effective limit min(tension, compression)."""

    s1_t: float
    s1_c: float
    s2_t: float
    s2_c: float

    def per_direction(self) -> tuple[float, float]:
        return (min(self.s1_t, self.s1_c), min(self.s2_t, self.s2_c))


@dataclass
class NodeLoad:
    """Point load at grid node (ix, iy), components in N."""

    ix: int
    iy: int
    fx: float = 0.0
    fy: float = 0.0


@dataclass
class NodeSupport:
    """Fixed dofs at grid node (ix, iy); dofs is "x", "y", or "xy"."""

    ix: int
    iy: int
    dofs: str = "xy"


@dataclass
class ProblemConfig:
    name: str
    geometry: str  # "cantilever" | "lbracket" | "custom"
    nelx: int
    nely: int
    elem_size: float
    thickness: float
    material: MaterialConfig
    loads: list[NodeLoad]
    supports: list[NodeSupport]
    volume_fraction: float
    simp_power: float
    pnorm_power: int
    stress_constraints: bool
    n_clusters: int
    n_s: int
    limits: StressLimits
    r_min: float = 1.5
    rho_init: float = 1.0
    theta_init: float = -0.1
    conv_tol: float = 1e-3
    max_iter: int = 8000
    move_rho: float = 0.2
    move_theta: float = 0.2
    asy_init: float = 0.5
    asy_incr: float = 1.2
    asy_decr: float = 0.7
    exclusion_rings: int = 1
    corner_rings: int = 3
    lbracket_cut: list[int] | None = None
    active: list[list[int]] | None = None  # custom geometry, row 0 = top row
    out_dir: str | None = None

    def resolve_active(self) -> np.ndarray:
        """Active-cell mask (nelx, nely) implied by the geometry fields."""
        if self.geometry == "cantilever":
            return np.ones((self.nelx, self.nely), dtype=bool)
        if self.geometry == "lbracket":
            if not self.lbracket_cut or len(self.lbracket_cut) != 2:
                raise ConfigError("lbracket_cut: expected [cut_x, cut_y]")
            cx, cy = self.lbracket_cut
            if not (0 < cx < self.nelx and 0 < cy < self.nely):
                raise ConfigError("lbracket_cut: cut must be inside the grid")
            mask = np.ones((self.nelx, self.nely), dtype=bool)
            mask[self.nelx - cx:, self.nely - cy:] = False
            return mask
        if self.geometry == "custom":
            if self.active is None:
                raise ConfigError("active: required for custom geometry")
            rows = np.asarray(self.active, dtype=bool)
            if rows.shape != (self.nely, self.nelx):
                raise ConfigError(
                    f"active: expected {self.nely} rows of {self.nelx} entries")
            # rows are listed top-to-bottom; transpose to (ix, iy) with y up
            return rows[::-1].T.copy()
        raise ConfigError(f"geometry: unknown kind {self.geometry!r}")

    def validate(self) -> None:
        if self.nelx < 1 or self.nely < 1:
            raise ConfigError("nelx/nely: must be at least 1")
        if self.elem_size <= 0 or self.thickness <= 0:
            raise ConfigError("elem_size/thickness: must be positive")
        if not 0.0 < self.volume_fraction <= 1.0:
            raise ConfigError("volume_fraction: must lie in (0, 1]")
        if self.simp_power < 1.0:
            raise ConfigError("simp_power: must be >= 1")
        if self.pnorm_power < 2 or self.pnorm_power % 2 != 0:
            raise ConfigError("pnorm_power: must be an even integer >= 2")
        if self.stress_constraints:
            if self.n_clusters not in (1, 2):
                raise ConfigError("n_clusters: must be 1 or 2")
            n_active = int(self.resolve_active().sum())
            min_ns = math.ceil(0.025 * n_active)
            if self.n_s < min_ns:
                raise ConfigError(
                    f"n_s: must be >= {min_ns} (2.5% of {n_active} active elements)")
            lims = dataclasses.astuple(self.limits)
            if min(lims) <= 0.0:
                raise ConfigError("limits: all stress limits must be positive")
        if not -math.pi <= self.theta_init <= math.pi:
            raise ConfigError("theta_init: must lie in [-pi, pi]")
        if not 0.0 <= self.rho_init <= 1.0:
            raise ConfigError("rho_init: must lie in [0, 1]")
        if self.r_min <= 0.0:
            raise ConfigError("r_min: must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter: must be at least 1")
        if self.conv_tol <= 0.0:
            raise ConfigError("conv_tol: must be positive")
        if not self.supports:
            raise ConfigError("supports: at least one support is required")
        self.material.build()  # raises MaterialError on bad constants


def config_to_dict(config: ProblemConfig) -> dict:
    return dataclasses.asdict(config)


def _build_nested(cls, data: dict, key: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{key}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{key}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def config_from_dict(data: dict) -> ProblemConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    data = dict(data)
    names = {f.name for f in dataclasses.fields(ProblemConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    for key, cls in (("material", MaterialConfig), ("limits", StressLimits)):
        if key not in data:
            raise ConfigError(f"{key}: missing required block")
        data[key] = _build_nested(cls, data[key], key)
    data["loads"] = [_build_nested(NodeLoad, item, "loads") for item in
                     data.get("loads", [])]
    data["supports"] = [_build_nested(NodeSupport, item, "supports") for item in
                        data.get("supports", [])]
    try:
        config = ProblemConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    config.validate()
    return config


def load_config(path) -> ProblemConfig:
    """Parse and validate a JSON problem configuration."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(data)


def save_config(config: ProblemConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, indent=2)
        fh.write("\n")


def _cantilever_base(**overrides) -> dict:
    """60x40 cantilever: left edge fully fixed, 60 kN spread over six
    consecutive nodes at the bottom of the right edge (10 kN each)."""
    nelx, nely = 60, 40
    base = dict(
        geometry="cantilever",
        nelx=nelx,
        nely=nely,
        elem_size=1.0,
        thickness=1.0,
        material=MaterialConfig(**EPOXY_GLASS),
        supports=[NodeSupport(0, iy, "xy") for iy in range(nely + 1)],
        loads=[NodeLoad(nelx, iy, fy=-10e3) for iy in range(6)],
        volume_fraction=0.25,
        simp_power=3.0,
        pnorm_power=8,
        rho_init=1.0,
        theta_init=-0.1,
    )
    base.update(overrides)
    return base


def _lbracket_base(**overrides) -> dict:
    """L-bracket in a 50x50 grid of 2 m cells with the top-right 30x30
    block removed (1600 active elements). The top edge of the vertical arm
    is fully fixed; 60 kN is spread over six nodes at the top of the
    horizontal arm's right tip."""
    nelx = nely = 50
    cut = 30
    arm = nelx - cut
    base = dict(
        geometry="lbracket",
        nelx=nelx,
        nely=nely,
        lbracket_cut=[cut, cut],
        elem_size=2.0,
        thickness=1.0,
        material=MaterialConfig(**EPOXY_GLASS),
        supports=[NodeSupport(ix, nely, "xy") for ix in range(arm + 1)],
        loads=[NodeLoad(nelx - k, arm, fy=-10e3) for k in range(6)],
        volume_fraction=0.25,
        simp_power=3.0,
        pnorm_power=8,
        rho_init=1.0,
        theta_init=-0.1,
    )
    base.update(overrides)
    return base


_CASE_VARIANTS = {
    1: ("constrained", "unconstrained"),
    2: ("ns40", "ns80"),
    3: ("default",),
    4: ("p8", "p4", "p6", "p10"),
}


def build_case_study(case_id: int, variant: str | None = None) -> ProblemConfig:
    """Built-in presets mirroring the four studied configurations.

    1: cantilever, 240 points per cluster, with/without stress limits
       60/20 kPa.
    2: L-bracket, limits 5/4 kPa, one cluster of 40 or 80 points.
    3: L-bracket, two clusters of 40 points per direction.
    4: cantilever restarted from rho = 0.25, theta = 0.1, 120 points per
       cluster, tensile limits 60/25 kPa, selectable P-norm power.
    """
    if case_id not in _CASE_VARIANTS:
        raise ConfigError(f"unknown case study id {case_id}; expected 1..4")
    allowed = _CASE_VARIANTS[case_id]
    if variant is None:
        variant = allowed[0]
    if variant not in allowed:
        raise ConfigError(
            f"case {case_id} variant must be one of {allowed}, got {variant!r}")

    if case_id == 1:
        constrained = variant == "constrained"
        base = _cantilever_base(
            name=f"case1_{variant}",
            stress_constraints=constrained,
            n_clusters=1,
            n_s=240,
            limits=StressLimits(60e3, 60e3, 20e3, 20e3),
            out_dir=f"results/case1_{variant}",
        )
    elif case_id == 2:
        n_s = 40 if variant == "ns40" else 80
        base = _lbracket_base(
            name=f"case2_{variant}",
            stress_constraints=True,
            n_clusters=1,
            n_s=n_s,
            limits=StressLimits(5e3, 5e3, 4e3, 4e3),
            out_dir=f"results/case2_{variant}",
        )
    elif case_id == 3:
        base = _lbracket_base(
            name="case3",
            stress_constraints=True,
            n_clusters=2,
            n_s=40,
            limits=StressLimits(5e3, 5e3, 4e3, 4e3),
            out_dir="results/case3",
        )
    else:
        power = int(variant[1:])
        base = _cantilever_base(
            name=f"case4_{variant}",
            stress_constraints=True,
            n_clusters=1,
            n_s=120,
            limits=StressLimits(60e3, 60e3, 25e3, 25e3),
            pnorm_power=power,
            rho_init=0.25,
            theta_init=0.1,
            out_dir=f"results/case4_{variant}",
        )
    config = ProblemConfig(**base)
    config.validate()
    return config


@dataclass
class Model:
    """Runtime objects resolved from a config."""

    config: ProblemConfig
    mesh: StructuredMesh
    material: OrthotropicMaterial
    bc: BoundaryConditions
    force: np.ndarray
    limits: tuple[float, float]
    excluded: np.ndarray
    support_corner_elements: np.ndarray


def build_model(config: ProblemConfig) -> Model:
    """Resolve a validated config into mesh, material, and load objects."""
    config.validate()
    mesh = StructuredMesh(config.nelx, config.nely, config.elem_size,
                          config.thickness, active=config.resolve_active())
    mat = config.material.build()

    fixed: list[int] = []
    fixed_nodes: list[tuple[int, int]] = []
    for sup in config.supports:
        try:
            node = mesh.node_id(sup.ix, sup.iy)
        except MeshError as exc:
            raise ConfigError(f"supports: {exc}") from exc
        if sup.dofs not in ("x", "y", "xy"):
            raise ConfigError(f'supports: dofs must be "x", "y", or "xy"')
        if "x" in sup.dofs:
            fixed.append(2 * node)
        if "y" in sup.dofs:
            fixed.append(2 * node + 1)
        fixed_nodes.append((sup.ix, sup.iy))

    loads: dict[int, float] = {}
    loaded_nodes: list[int] = []
    for load in config.loads:
        try:
            node = mesh.node_id(load.ix, load.iy)
        except MeshError as exc:
            raise ConfigError(f"loads: {exc}") from exc
        loaded_nodes.append(node)
        if load.fx:
            loads[2 * node] = loads.get(2 * node, 0.0) + load.fx
        if load.fy:
            loads[2 * node + 1] = loads.get(2 * node + 1, 0.0) + load.fy

    bc = BoundaryConditions(np.array(fixed, dtype=int), loads)
    bc.validate(mesh)
    force = bc.force_vector(mesh)

    excluded = mesh.elements_containing_nodes(loaded_nodes) if loaded_nodes \
        else np.empty(0, dtype=int)
    for _ in range(config.exclusion_rings):
        if excluded.size:
            excluded = np.union1d(excluded, mesh.edge_neighbors(excluded))

    # Elements around the two lattice-extreme fixed nodes (the ends of a
    # fixed edge) carry a mesh-dependent stress concentration; they stay in
    # the clusters but are tracked so reports can set them aside.
    corners = np.empty(0, dtype=int)
    if fixed_nodes:
        ordered = sorted(set(fixed_nodes))
        ends = [mesh.node_id(*ordered[0]), mesh.node_id(*ordered[-1])]
        corners = mesh.elements_containing_nodes(ends)
        for _ in range(config.corner_rings):
            corners = np.union1d(corners, mesh.edge_neighbors(corners))

    return Model(config=config, mesh=mesh, material=mat, bc=bc, force=force,
                 limits=config.limits.per_direction(), excluded=excluded,
                 support_corner_elements=corners)
