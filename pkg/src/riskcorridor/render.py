"""SVG rendering of a result directory.

Each visual layer is a single matplotlib artist carrying a gid, so the SVG
contains addressable groups (layer_road, layer_obstacles, layer_corridor,
layer_risk, layer_trajectory) that downstream tooling can toggle or style.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.collections import LineCollection, PatchCollection
from matplotlib.patches import Circle, Polygon, Rectangle

from .config import load_config
from .errors import ConfigError
from .geometry import OrientedRect
from .io import read_corridor_txt, read_corridors_txt, read_host_csv, \
    read_obstacles_csv, read_trajectory_csv
from .risk import read_risk_grid
from .simulation import RingRoad, StraightRoad

LAYERS = ("road", "obstacles", "corridor", "risk", "trajectory")


def _require(data_dir: Path, names) -> Path:
    for name in names:
        candidate = data_dir / name
        if candidate.exists():
            return candidate
    raise ConfigError(f"render: missing {' or '.join(names)} in {data_dir}")


def _risk_grid_files(data_dir: Path) -> list[Path]:
    return sorted(data_dir.glob("risk_grid_t*.txt"))


def detect_layers(data_dir: Path) -> list[str]:
    """Layers whose data files are present, in drawing order."""
    present = []
    if (data_dir / "effective_config.cfg").exists():
        present.append("road")
    if _risk_grid_files(data_dir):
        present.append("risk")
    if (data_dir / "obstacles.csv").exists():
        present.append("obstacles")
    if (data_dir / "corridors.txt").exists() or (data_dir / "corridor.txt").exists():
        present.append("corridor")
    if (data_dir / "host.csv").exists() or (data_dir / "trajectory.csv").exists():
        present.append("trajectory")
    return present


def _draw_road(ax, data_dir: Path, extent):
    cfg = load_config(_require(data_dir, ["effective_config.cfg"]))
    road = cfg.scenario.road
    if isinstance(road, StraightRoad):
        x0, x1 = extent[0] - 10.0, extent[1] + 10.0
        segments = []
        for i in range(road.n_lanes + 1):
            y = -0.5 * road.lane_width + i * road.lane_width
            segments.append([(x0, y), (x1, y)])
        artist = LineCollection(segments, colors="0.6", linewidths=1.0,
                                linestyles=["solid"] + ["dashed"] * (road.n_lanes - 1)
                                           + ["solid"])
    else:
        circles = []
        radii = sorted(road.lane_radii)
        edges = [radii[0] - 0.5 * road.lane_width] + \
                [r + 0.5 * road.lane_width for r in radii]
        for r in edges:
            circles.append(Circle(road.center, r, fill=False))
        artist = PatchCollection(circles, match_original=False, facecolor="none",
                                 edgecolor="0.6", linewidth=1.0)
    artist.set_gid("layer_road")
    ax.add_collection(artist)


def _footprint_polys(rows, length, width):
    polys = []
    for x, y, heading in rows:
        rect = OrientedRect(x, y, heading, length, width)
        polys.append(Polygon(rect.corners(), closed=True))
    return polys


def _draw_obstacles(ax, data_dir: Path):
    data = read_obstacles_csv(_require(data_dir, ["obstacles.csv"]))
    times = np.unique(data[:, 0])
    samples = times[np.linspace(0, len(times) - 1, min(5, len(times))).astype(int)]
    polys = []
    for t in samples:
        rows = data[data[:, 0] == t]
        # Obstacle dims are not in the csv; footprints use the default body.
        polys.extend(_footprint_polys(rows[:, 2:5], 4.5, 1.8))
    artist = PatchCollection(polys, facecolor="tab:orange", edgecolor="tab:red",
                             alpha=0.35, linewidth=0.8)
    artist.set_gid("layer_obstacles")
    ax.add_collection(artist)


def _draw_corridor(ax, data_dir: Path):
    sim_path = data_dir / "corridors.txt"
    if sim_path.exists():
        data = read_corridors_txt(sim_path)
        if len(data):
            last = data[:, 0] == data[:, 0].max()
            bounds = data[last][:, 3:7]
        else:
            bounds = np.zeros((0, 4))
    else:
        data = read_corridor_txt(_require(data_dir, ["corridor.txt"]))
        bounds = data[:, 1:5]
    rects = [Rectangle((b[0], b[2]), b[1] - b[0], b[3] - b[2]) for b in bounds]
    artist = PatchCollection(rects, facecolor="none", edgecolor="tab:blue",
                             alpha=0.5, linewidth=0.6)
    artist.set_gid("layer_corridor")
    ax.add_collection(artist)


def _draw_risk(ax, data_dir: Path):
    files = _risk_grid_files(data_dir)
    if not files:
        raise ConfigError(f"render: missing risk_grid_t*.txt in {data_dir}")
    grid = read_risk_grid(files[-1])
    artist = ax.pcolormesh(grid.xs, grid.ys, grid.values, cmap="magma",
                           shading="nearest", alpha=0.6, zorder=0)
    artist.set_gid("layer_risk")


def _trajectory_xy(data_dir: Path):
    host = data_dir / "host.csv"
    if host.exists():
        data = read_host_csv(host)
    else:
        data = read_trajectory_csv(_require(data_dir, ["host.csv", "trajectory.csv"]))
    return data[:, 1], data[:, 2]


def _draw_trajectory(ax, data_dir: Path):
    x, y = _trajectory_xy(data_dir)
    (artist,) = ax.plot(x, y, color="tab:green", linewidth=1.8, zorder=5)
    artist.set_gid("layer_trajectory")


def render(data_dir, out_path, layers=None) -> Path:
    """Draw the requested layers from data_dir into an SVG at out_path.

    layers=None draws whatever data is present; explicitly requested layers
    with missing data raise ConfigError naming the absent file.
    """
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise ConfigError(f"render: data directory {data_dir} does not exist")
    if layers is None:
        layers = detect_layers(data_dir)
        if not layers:
            raise ConfigError(f"render: no renderable files in {data_dir}")
    else:
        if not layers:
            raise ConfigError("render: empty layer set")
        unknown = set(layers) - set(LAYERS)
        if unknown:
            raise ConfigError(f"render: unknown layers {sorted(unknown)}")

    fig, ax = plt.subplots(figsize=(10.0, 7.0))
    try:
        if "trajectory" in layers or "road" in layers:
            x, y = _trajectory_xy(data_dir)
            extent = (float(x.min()), float(x.max()))
        else:
            extent = (0.0, 1.0)
        for layer in LAYERS:  # fixed z-order: road under risk under the rest
            if layer not in layers:
                continue
            if layer == "road":
                _draw_road(ax, data_dir, extent)
            elif layer == "risk":
                _draw_risk(ax, data_dir)
            elif layer == "obstacles":
                _draw_obstacles(ax, data_dir)
            elif layer == "corridor":
                _draw_corridor(ax, data_dir)
            else:
                _draw_trajectory(ax, data_dir)
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_aspect("equal")
        ax.autoscale_view()
        ax.margins(0.05)
        out_path = Path(out_path)
        fig.savefig(out_path, format="svg", bbox_inches="tight")
    finally:
        plt.close(fig)
    return out_path
