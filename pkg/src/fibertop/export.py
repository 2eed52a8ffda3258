"""Result export: CSV field grids, the convergence log, and pixmap renders.

Grids are written row-major with row 0 at the top of the domain (highest y)
so the CSV reads like the rendered image; inactive cells serialize as NaN.
All floats use repr-precision so a re-import reproduces the in-memory
values bit for bit.

convergence.csv columns, fixed order:
    iteration, compliance, g1, g2, g3, g4, volume, max_abs_sigma1,
    max_abs_sigma2
where g1..g4 are the normalized stress-cluster constraints (value/limit - 1)
in direction-major order, NaN-padded when fewer are active.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .fem import StructuredMesh
from .optimize import OptimizationResult

_FMT = "%.17g"


def field_to_grid(mesh: StructuredMesh, values: np.ndarray,
                  fill: float = np.nan) -> np.ndarray:
    """Scatter a per-active-element vector onto the (nely, nelx) grid."""
    grid = np.full((mesh.nely, mesh.nelx), fill)
    grid[mesh.nely - 1 - mesh.elem_iy, mesh.elem_ix] = values
    return grid


def grid_from_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def _write_grid(path: Path, mesh: StructuredMesh, values: np.ndarray) -> None:
    np.savetxt(path, field_to_grid(mesh, values), fmt=_FMT, delimiter=",")


def _write_pgm(path: Path, gray: np.ndarray) -> None:
    """Plain (ASCII) PGM, one image row per line."""
    h, w = gray.shape
    lines = ["P2", f"{w} {h}", "255"]
    lines += [" ".join(str(v) for v in row) for row in gray.tolist()]
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def _write_ppm(path: Path, rgb: np.ndarray) -> None:
    """Plain (ASCII) PPM from an (h, w, 3) uint8 array."""
    h, w, _ = rgb.shape
    lines = ["P3", f"{w} {h}", "255"]
    flat = rgb.reshape(h, w * 3)
    lines += [" ".join(str(v) for v in row) for row in flat.tolist()]
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def _density_image(mesh: StructuredMesh, rho: np.ndarray) -> np.ndarray:
    """Grayscale render: solid is black, void and inactive cells white."""
    grid = field_to_grid(mesh, rho, fill=0.0)
    return np.rint(255.0 * (1.0 - np.clip(grid, 0.0, 1.0))).astype(int)


def _diverging_image(mesh: StructuredMesh, values: np.ndarray) -> np.ndarray:
    """Blue-white-red render with a scale symmetric about zero."""
    grid = field_to_grid(mesh, values, fill=np.nan)
    vmax = np.nanmax(np.abs(grid)) if np.isfinite(grid).any() else 0.0
    t = np.zeros_like(grid) if vmax == 0.0 else np.clip(grid / vmax, -1.0, 1.0)
    t = np.nan_to_num(t)
    pos = np.clip(t, 0.0, 1.0)
    neg = np.clip(-t, 0.0, 1.0)
    rgb = np.empty(grid.shape + (3,), dtype=np.uint8)
    rgb[..., 0] = np.rint(255.0 * (1.0 - neg))
    rgb[..., 1] = np.rint(255.0 * (1.0 - np.maximum(pos, neg)))
    rgb[..., 2] = np.rint(255.0 * (1.0 - pos))
    inactive = ~np.isfinite(grid)
    rgb[inactive] = 255
    return rgb


def export_fields(result: OptimizationResult, out_dir) -> list[Path]:
    """Write all result files into ``out_dir`` and return their paths."""
    from .problems import build_model

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mesh = build_model(result.config).mesh

    written = []
    for name, values in (("density.csv", result.rho),
                         ("theta.csv", result.theta),
                         ("sigma1.csv", result.stress.sigma1),
                         ("sigma2.csv", result.stress.sigma2)):
        path = out / name
        _write_grid(path, mesh, values)
        written.append(path)

    iters = result.compliance_history.size
    table = np.column_stack([
        np.arange(1, iters + 1),
        result.compliance_history,
        result.constraint_history,
        result.volume_history,
        result.max_sigma1_history,
        result.max_sigma2_history,
    ])
    conv = out / "convergence.csv"
    header = ("iteration,compliance,g1,g2,g3,g4,volume,"
              "max_abs_sigma1,max_abs_sigma2")
    np.savetxt(conv, table, fmt=_FMT, delimiter=",", header=header)
    written.append(conv)

    pgm = out / "density.pgm"
    _write_pgm(pgm, _density_image(mesh, result.rho))
    written.append(pgm)
    for name, values in (("sigma1.ppm", result.stress.sigma1),
                         ("sigma2.ppm", result.stress.sigma2)):
        path = out / name
        _write_ppm(path, _diverging_image(mesh, values))
        written.append(path)
    return written
