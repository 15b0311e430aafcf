"""CSV, SVG and manifest emission for scenario runs."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__

FLOAT_DIGITS = 12


class EmitError(RuntimeError):
    pass


class PlotError(EmitError):
    pass


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, f".{FLOAT_DIGITS}g")
    s = str(v)
    if any(c in s for c in ',"\n\r'):
        raise EmitError(f"string field {s!r} contains a separator")
    return s


def emit_csv(path: str | Path, rows: Iterable[Mapping], schema: Sequence[str]) -> Path:
    """Write ``rows`` (mappings keyed by ``schema``) in the given order.

    Floats are rendered with 12 significant digits, so identical inputs give
    byte-identical files.
    """
    path = Path(path)
    schema = list(schema)
    lines = [",".join(schema)]
    for k, row in enumerate(rows):
        keys = set(row)
        if keys != set(schema):
            missing, extra = sorted(set(schema) - keys), sorted(keys - set(schema))
            raise EmitError(f"row {k} does not match schema: missing {missing}, unexpected {extra}")
        lines.append(",".join(format_value(row[c]) for c in schema))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise EmitError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _parse(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_csv(path: str | Path) -> tuple[list[str], list[dict]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmitError(f"{path} is empty") from None
        rows = []
        for n, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise EmitError(f"{path}:{n}: expected {len(header)} fields, got {len(rec)}")
            rows.append({h: _parse(v) for h, v in zip(header, rec)})
    return header, rows


@dataclass(frozen=True)
class PlotSpec:
    x: str
    y: str
    group_by: tuple[str, ...] = ()
    logx: bool = True
    logy: bool = True
    infidelity: bool = False  # plot 1 - y
    hlines: tuple[tuple[float, str], ...] = ()
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    filters: dict = field(default_factory=dict)


def emit_plot(csv_path: str | Path, spec: PlotSpec, svg_path: str | Path) -> Path:
    """Render one panel from a CSV; failures raise :class:`PlotError` only."""
    try:
        header, rows = read_csv(csv_path)
    except (OSError, EmitError) as exc:
        raise PlotError(f"cannot read {csv_path}: {exc}") from exc
    needed = [spec.x, spec.y, *spec.group_by, *spec.filters]
    missing = [c for c in needed if c not in header]
    if missing:
        raise PlotError(f"{csv_path} lacks columns {missing}")
    rows = [r for r in rows if all(r[k] == v for k, v in spec.filters.items())]

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "foerster"
    groups: dict[tuple, list[tuple[float, float]]] = {}
    for r in rows:
        x, y = r[spec.x], r[spec.y]
        if not isinstance(x, (int, float)) or not isinstance(y, (int, float)):
            raise PlotError(f"non-numeric value in {spec.x}/{spec.y}: {x!r}, {y!r}")
        if spec.infidelity:
            y = 1.0 - y
        groups.setdefault(tuple(r[g] for g in spec.group_by), []).append((x, y))

    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    try:
        for key, pts in groups.items():
            pts.sort()
            xs, ys = np.array(pts).T
            if spec.logy:
                ys = np.where(ys > 0, ys, np.nan)
            label = ", ".join(f"{g}={k}" for g, k in zip(spec.group_by, key)) or None
            ax.plot(xs, ys, marker="o", ms=3, label=label)
        for value, label in spec.hlines:
            ax.axhline(value, ls="--", lw=1, color="gray")
            ax.annotate(label, (0.01, value), xycoords=("axes fraction", "data"), fontsize=8, va="bottom")
        if spec.logx:
            ax.set_xscale("log")
        if spec.logy:
            ax.set_yscale("log")
        ax.set_xlabel(spec.xlabel or spec.x)
        ax.set_ylabel(spec.ylabel or (f"1 - {spec.y}" if spec.infidelity else spec.y))
        if spec.title:
            ax.set_title(spec.title)
        if any(k for k in groups):
            ax.legend(fontsize=7)
        fig.tight_layout()
        svg_path = Path(svg_path)
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
    except Exception as exc:
        raise PlotError(f"plotting {svg_path} failed: {exc}") from exc
    finally:
        plt.close(fig)
    return svg_path


def config_hash(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(out_dir: str | Path, config: Mapping, wall_time: float, outputs: Sequence[str],
                   summary: Mapping | None = None) -> Path:
    """Record the resolved config, its hash, the tool version and wall time."""
    out = Path(out_dir)
    manifest = {
        "tool": "foerster",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config_hash": config_hash(config),
        "config": config,
        "wall_time_s": round(float(wall_time), 3),
        "outputs": list(outputs),
        "summary": dict(summary or {}),
    }
    path = out / "manifest.json"
    try:
        path.write_text(json.dumps(manifest, sort_keys=True, indent=1, default=str) + "\n")
    except OSError as exc:
        raise EmitError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path
