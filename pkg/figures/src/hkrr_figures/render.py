"""Render static figures from hkrr run outputs.

Five figure kinds, each reading only the CLI's documented file schemas:

* ``loss_curve``   — fit trace CSVs; loss vs iteration, log loss axis
* ``r2_bar``       — cv table CSVs; best validation R2 per latent dimension
* ``r2_vs_m``      — eval JSONs keyed by training size; R2 vs m
* ``basin_map``    — basin CSV (+ optional meta JSON); colored init grid
* ``trajectory``   — trajectory CSVs; optimizer paths in the (x, y) plane

All inputs are parsed and validated before any drawing happens; a schema
mismatch raises ``SchemaError`` naming the offending column.  Rendering never
mutates inputs, and identical inputs always produce identical plotted series.
Every figure is written as both PNG and SVG.

Series touching the two optimizers follow the fixed color convention:
VarPro red, AGD blue.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.patches import Patch

FIGURE_KINDS = ("loss_curve", "r2_bar", "r2_vs_m", "basin_map", "trajectory")

VARPRO_COLOR = "tab:red"
AGD_COLOR = "tab:blue"

BASIN_CODES = ("both", "varpro_only", "agd_only", "neither")
BASIN_COLORS = {
    "both": "purple",
    "varpro_only": VARPRO_COLOR,
    "agd_only": AGD_COLOR,
    "neither": "lightgray",
}


class SchemaError(ValueError):
    """An input file does not match the documented schema."""


@dataclass
class FigureSpec:
    kind: str
    inputs: list[str]                 # "path" or "label=path" entries
    out: str                          # output stem (extension stripped)
    points: list[str] = field(default_factory=list)  # r2_vs_m: "label:m:path"
    title: str = ""

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}")
        if self.kind == "r2_vs_m":
            if not self.points:
                raise SchemaError("r2_vs_m needs --point label:m:path entries")
        elif not self.inputs:
            raise SchemaError(f"{self.kind} needs at least one --input file")


def series_color(label: str, index: int) -> str:
    low = label.lower()
    if "varpro" in low:
        return VARPRO_COLOR
    if "agd" in low:
        return AGD_COLOR
    return f"C{index % 10}"


def split_label(entry: str):
    # "label=path" or bare path (label from the file stem)
    if "=" in entry:
        label, path = entry.split("=", 1)
        return label, Path(path)
    path = Path(entry)
    return path.stem, path


def read_csv_columns(path: Path, required: tuple[str, ...]) -> dict[str, list[str]]:
    if not path.exists():
        raise SchemaError(f"input file {path} does not exist")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path} is empty")
        for col in required:
            if col not in reader.fieldnames:
                raise SchemaError(f"{path} is missing column {col!r}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path} has no data rows")
    return {col: [row[col] for row in rows] for col in reader.fieldnames}


def _floats(table, col, path):
    try:
        return [float(v) for v in table[col]]
    except ValueError as exc:
        raise SchemaError(f"{path}: column {col!r} is not numeric ({exc})") from None


def _save(fig, out: str) -> list[Path]:
    stem = Path(out)
    if stem.suffix.lower() in (".png", ".svg"):
        stem = stem.with_suffix("")
    stem.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for ext in (".png", ".svg"):
        target = stem.with_suffix(ext)
        fig.savefig(target, dpi=150, bbox_inches="tight")
        written.append(target)
    plt.close(fig)
    return written


# ---------------------------------------------------------------------------
# figure kinds
# ---------------------------------------------------------------------------

def render_loss_curve(spec: FigureSpec) -> list[Path]:
    series = []
    for label, path in map(split_label, spec.inputs):
        table = read_csv_columns(path, ("iter", "loss"))
        series.append((label, _floats(table, "iter", path), _floats(table, "loss", path)))
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for i, (label, its, losses) in enumerate(series):
        ax.plot(its, losses, color=series_color(label, i), label=label, lw=1.6)
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("training loss")
    ax.legend()
    ax.set_title(spec.title or "loss vs iterations")
    return _save(fig, spec.out)


def render_r2_bar(spec: FigureSpec) -> list[Path]:
    # one series per cv table: best validation R2 per latent dimension
    series = []
    for label, path in map(split_label, spec.inputs):
        table = read_csv_columns(path, ("d", "val_r2", "error"))
        best: dict[int, float] = {}
        for d_str, r2_str, err in zip(table["d"], table["val_r2"], table["error"]):
            if err.strip():
                continue
            d = int(d_str)
            r2 = float(r2_str)
            if d not in best or r2 > best[d]:
                best[d] = r2
        if not best:
            raise SchemaError(f"{path} has no successful rows")
        series.append((label, best))
    ds = sorted({d for _, best in series for d in best})
    width = 0.8 / len(series)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for i, (label, best) in enumerate(series):
        offs = [d + (i - (len(series) - 1) / 2) * width for d in ds]
        vals = [best.get(d, float("nan")) for d in ds]
        ax.bar(offs, vals, width=width, color=series_color(label, i), label=label)
    ax.set_xticks(ds)
    ax.set_xlabel("latent dimension d")
    ax.set_ylabel("validation R2")
    ax.legend()
    ax.set_title(spec.title or "R2 by latent dimension")
    return _save(fig, spec.out)


def render_r2_vs_m(spec: FigureSpec) -> list[Path]:
    series: dict[str, list[tuple[float, float]]] = {}
    for entry in spec.points:
        parts = entry.split(":", 2)
        if len(parts) != 3:
            raise SchemaError(f"--point {entry!r} is not label:m:path")
        label, m_str, path = parts[0], parts[1], Path(parts[2])
        if not path.exists():
            raise SchemaError(f"input file {path} does not exist")
        try:
            m = float(m_str)
        except ValueError:
            raise SchemaError(f"--point {entry!r}: m is not numeric") from None
        doc = json.loads(path.read_text())
        if "r2" not in doc:
            raise SchemaError(f"{path} is missing column 'r2'")
        series.setdefault(label, []).append((m, float(doc["r2"])))
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for i, (label, pts) in enumerate(series.items()):
        pts = sorted(pts)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                color=series_color(label, i), label=label)
    ax.set_xlabel("training size m")
    ax.set_ylabel("test R2")
    ax.legend()
    ax.set_title(spec.title or "R2 vs training size")
    return _save(fig, spec.out)


def render_basin_map(spec: FigureSpec) -> list[Path]:
    _, path = split_label(spec.inputs[0])
    table = read_csv_columns(path, ("x0", "y0", "code"))
    xs = _floats(table, "x0", path)
    ys = _floats(table, "y0", path)
    codes = table["code"]
    bad = sorted(set(codes) - set(BASIN_CODES))
    if bad:
        raise SchemaError(f"{path}: column 'code' has unknown values {bad}")
    title = spec.title
    meta_path = path.with_name("basin.meta.json")
    if not title and meta_path.exists():
        meta = json.loads(meta_path.read_text())
        title = f"convergence map ({meta.get('variant', '?')} variant)"
    fig, ax = plt.subplots(figsize=(5.5, 5))
    xu, yu = sorted(set(xs)), sorted(set(ys))
    dx = (xu[1] - xu[0]) if len(xu) > 1 else 1.0
    dy = (yu[1] - yu[0]) if len(yu) > 1 else 1.0
    for x, y, code in zip(xs, ys, codes):
        ax.add_patch(plt.Rectangle((x - dx / 2, y - dy / 2), dx, dy,
                                   color=BASIN_COLORS[code], lw=0))
    ax.set_xlim(min(xu) - dx / 2, max(xu) + dx / 2)
    ax.set_ylim(min(yu) - dy / 2, max(yu) + dy / 2)
    ax.set_xlabel("x0")
    ax.set_ylabel("y0")
    # legend carries exactly the four cell categories
    ax.legend(handles=[Patch(color=BASIN_COLORS[c], label=c) for c in BASIN_CODES],
              loc="upper left", fontsize=8)
    ax.set_title(title or "convergence map")
    return _save(fig, spec.out)


def render_trajectory(spec: FigureSpec) -> list[Path]:
    series = []
    for label, path in map(split_label, spec.inputs):
        table = read_csv_columns(path, ("iter", "x", "y", "f"))
        series.append((label, _floats(table, "x", path), _floats(table, "y", path)))
    fig, ax = plt.subplots(figsize=(5.5, 5))
    for i, (label, xs, ys) in enumerate(series):
        color = series_color(label, i)
        ax.plot(xs, ys, marker=".", color=color, label=label, lw=1.2)
        ax.plot(xs[0], ys[0], marker="s", color=color, ms=7)
        ax.plot(xs[-1], ys[-1], marker="*", color=color, ms=11)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.legend()
    ax.set_title(spec.title or "optimizer trajectories")
    return _save(fig, spec.out)


_RENDERERS = {
    "loss_curve": render_loss_curve,
    "r2_bar": render_r2_bar,
    "r2_vs_m": render_r2_vs_m,
    "basin_map": render_basin_map,
    "trajectory": render_trajectory,
}


def render(spec: FigureSpec) -> list[Path]:
    """Validate the spec's inputs and write the figure as PNG and SVG."""
    return _RENDERERS[spec.kind](spec)
