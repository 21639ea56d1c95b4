"""CSV / SVG / JSON emission with atomic writes and a hashed manifest."""
from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from html import escape
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


def atomic_write(path: str | Path, data: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def emit_csv(header: Sequence[str], rows: Iterable[Sequence[float]], path: str | Path) -> Path:
    rows = [list(r) for r in rows]
    if not rows:
        raise ValueError("refusing to write an empty series")
    for r in rows:
        if len(r) != len(header):
            raise ValueError(f"row has {len(r)} values, header has {len(header)}")
    lines = [",".join(header)] + [",".join(_fmt(x) for x in r) for r in rows]
    return atomic_write(path, "\n".join(lines) + "\n")


def emit_svg(
    series: Mapping[str, tuple[Sequence[float], Sequence[float]]],
    path: str | Path,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    loglog: bool = False,
    width: int = 640,
    height: int = 420,
) -> Path:
    """Self-contained line plot: axes, labels, one polyline per series."""
    if not series or any(len(xs) == 0 for xs, _ in series.values()):
        raise ValueError("refusing to plot an empty series")
    tf = (lambda a: np.log10(np.asarray(a, dtype=float))) if loglog else (lambda a: np.asarray(a, dtype=float))
    data = {}
    for name, (xs, ys) in series.items():
        xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
        keep = np.isfinite(xs) & np.isfinite(ys)
        if loglog:
            keep &= (xs > 0) & (ys > 0)
        data[name] = (tf(xs[keep]), tf(ys[keep]))
    allx = np.concatenate([d[0] for d in data.values()])
    ally = np.concatenate([d[1] for d in data.values()])
    if allx.size == 0:
        raise ValueError("no finite points to plot")
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    ml, mr, mt, mb = 70, 20, 36, 50
    pw, ph = width - ml - mr, height - mt - mb

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv, yv = x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)
        xl = f"1e{xv:.2g}" if loglog else f"{xv:.3g}"
        yl = f"1e{yv:.2g}" if loglog else f"{yv:.3g}"
        out.append(f'<text x="{sx(xv):.1f}" y="{mt + ph + 16}" font-size="11" text-anchor="middle">{xl}</text>')
        out.append(f'<text x="{ml - 6}" y="{sy(yv) + 4:.1f}" font-size="11" text-anchor="end">{yl}</text>')
    if title:
        out.append(f'<text x="{width / 2:.0f}" y="20" font-size="14" text-anchor="middle">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{ml + pw / 2:.0f}" y="{height - 10}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{mt + ph / 2:.0f}" font-size="12" text-anchor="middle" '
                   f'transform="rotate(-90 14 {mt + ph / 2:.0f})">{escape(ylabel)}</text>')
    for idx, (name, (xs, ys)) in enumerate(data.items()):
        color = palette[idx % len(palette)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"><title>{escape(name)}</title></polyline>')
    out.append("</svg>")
    return atomic_write(path, "\n".join(out) + "\n")


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def emit_json(obj, path: str | Path) -> Path:
    return atomic_write(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_manifest(out_dir: str | Path, files: Sequence[str | Path], config: Mapping, extra: Mapping | None = None) -> Path:
    out_dir = Path(out_dir)
    inventory = {Path(f).name: sha256_file(f) for f in files}
    doc = {"config": dict(config), "files": inventory, **(extra or {})}
    return emit_json(doc, out_dir / "manifest.json")


def verify_manifest(path: str | Path) -> bool:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    return all((path.parent / name).exists() and sha256_file(path.parent / name) == digest
               for name, digest in doc["files"].items())
