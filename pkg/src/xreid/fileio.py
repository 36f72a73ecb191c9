"""File formats: JSON-lines frame files, JSON checkpoints, CSV tables and SVG plots.

Floating-point values in JSON are written with 17 significant digits so
every double reads back bit-exactly.  CSV values use 6 decimals.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch
from .gait import MeshFrame
from .net import MetricNet, NetConfig
from .radar import RadarFrame
from .signature import SignatureFrame


def fmt(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite value {x}")
    return format(x, ".17g")


def _rows(pts: np.ndarray, int_cols=()) -> str:
    rows = []
    for row in pts:
        cells = [str(int(v)) if j in int_cols else fmt(v) for j, v in enumerate(row)]
        rows.append("[" + ",".join(cells) + "]")
    return "[" + ",".join(rows) + "]"


def frame_line(t: float, identity: int, walk: int, pts: np.ndarray, int_cols=(), **extra) -> str:
    head = f'{{"t":{fmt(t)},"id":{int(identity)},"walk":{int(walk)}'
    for k, v in extra.items():
        head += f',{json.dumps(k)}:{json.dumps(v)}'
    return head + f',"pts":{_rows(pts, int_cols)}}}'


def _labelled(points, parts) -> np.ndarray:
    return np.column_stack([points, np.asarray(parts, dtype=np.float64)]) if len(points) else np.zeros((0, 4))


def write_lines(path, lines) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in lines:
                fh.write(line + "\n")
    except OSError as exc:
        raise OSError(f"{path}: {exc}") from exc
    return path


def read_jsonl(path) -> tuple[dict | None, list]:
    """``(header or None, records)``; a header is a first line carrying a ``"header"`` key."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"{path}: {exc}") from exc
    header, records = None, []
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        obj = json.loads(line)
        if i == 0 and "header" in obj:
            header = obj["header"]
            continue
        pts = np.array(obj["pts"], dtype=np.float64)
        obj["pts"] = pts.reshape(len(pts), -1) if len(pts) else np.zeros((0, 0))
        records.append(obj)
    return header, records


def group_frames(records) -> dict:
    """Records grouped by ``(id, walk[, track])`` in file order."""
    out: dict = {}
    for r in records:
        key = (r["id"], r["walk"]) + ((r["track"],) if "track" in r else ())
        out.setdefault(key, []).append(r)
    return out


# mesh -----------------------------------------------------------------------

def mesh_lines(identity: int, walk: int, frames) -> list:
    return [frame_line(f.timestamp, identity, walk, _labelled(f.points, f.parts), int_cols=(3,)) for f in frames]


def mesh_frames(records) -> list:
    out = []
    for r in records:
        pts = r["pts"].reshape(-1, 4)
        xyz = pts[:, :3].copy()
        out.append(MeshFrame(r["t"], xyz, pts[:, 3].astype(np.int8),
                             xyz.mean(axis=0) if len(xyz) else np.zeros(3)))
    return out


# signatures -------------------------------------------------------------------

def signature_header(epsilon: float, radar_pos=(0.0, 0.0, 0.0)) -> str:
    pos = ",".join(fmt(v) for v in radar_pos)
    return f'{{"header":{{"epsilon":{fmt(epsilon)},"radar_pos":[{pos}]}}}}'


def signature_lines(identity: int, walk: int, frames) -> list:
    return [frame_line(f.timestamp, identity, walk, _labelled(f.points, f.parts), int_cols=(3,)) for f in frames]


def signature_frames(records) -> list:
    return [SignatureFrame(r["t"], r["pts"].reshape(-1, 4)[:, :3].copy(),
                           r["pts"].reshape(-1, 4)[:, 3].astype(np.int8)) for r in records]


# radar ------------------------------------------------------------------------

def radar_lines(identity: int, walk: int, frames, track: int | None = None) -> list:
    extra = {} if track is None else {"track": int(track)}
    return [frame_line(f.timestamp, identity, walk, f.points.reshape(-1, 5), **extra) for f in frames]


def radar_frames(records) -> list:
    return [RadarFrame(r["t"], r["pts"].reshape(-1, 5).copy()) for r in records]


# checkpoints --------------------------------------------------------------------

def save_checkpoint(path, model: MetricNet, config: dict | None = None) -> Path:
    cfg = {"ablation": model.config.ablation, "share_lstm": model.config.share_lstm,
           "radar_max_points": model.config.radar_max_points, "sig_max_points": model.config.sig_max_points}
    cfg.update(config or {})
    parts = []
    for name in sorted(model.params):
        arr = np.asarray(model.params[name], dtype=np.float64)
        shape = ",".join(str(s) for s in arr.shape)
        data = ",".join(fmt(v) for v in arr.ravel())
        parts.append(f'{json.dumps(name)}:{{"shape":[{shape}],"data":[{data}]}}')
    text = f'{{"schema":1,"config":{json.dumps(cfg, sort_keys=True)},"tensors":{{{",".join(parts)}}}}}\n'
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def load_checkpoint(path) -> tuple[MetricNet, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != 1:
        raise ShapeMismatch(f"{path}: unsupported checkpoint schema {doc.get('schema')!r}")
    cfg = doc.get("config", {})
    net_cfg = NetConfig(ablation=cfg.get("ablation", "full"), share_lstm=bool(cfg.get("share_lstm", True)),
                        radar_max_points=int(cfg.get("radar_max_points", 64)),
                        sig_max_points=int(cfg.get("sig_max_points", 256)))
    params = {}
    for name, t in doc["tensors"].items():
        shape = tuple(int(s) for s in t["shape"])
        data = np.array(t["data"], dtype=np.float64)
        if data.size != int(np.prod(shape)):
            raise ShapeMismatch(f"{name}: {data.size} values for shape {shape}")
        params[name] = data.reshape(shape)
    return MetricNet(params, net_cfg), cfg


# CSV / SVG ------------------------------------------------------------------------

def write_csv(path, columns, rows, meta: dict | None = None) -> Path:
    """CSV with ``# key: value`` metadata lines, then a header row; floats at 6 decimals."""
    lines = [f"# {k}: {v}" for k, v in (meta or {}).items()]
    lines.append(",".join(columns))
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(f"{float(v):.6f}")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    return write_lines(path, lines)


def csv_body(path) -> str:
    """The CSV text without its metadata lines."""
    return "".join(l for l in Path(path).read_text(encoding="utf-8").splitlines(True) if not l.startswith("#"))


def write_svg(path, series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
              width: int = 480, height: int = 320, meta: dict | None = None) -> Path:
    """Line plot of ``{name: (xs, ys)}`` as plain SVG polylines; ``meta`` goes into XML comments."""
    pad = 48
    xs_all = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()])
    ys_all = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()])
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = min(0.0, float(ys_all.min())), max(1.0, float(ys_all.max()))
    x1 = x1 if x1 > x0 else x0 + 1.0

    def px(x, y):
        return (pad + (x - x0) / (x1 - x0) * (width - 2 * pad),
                height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad))

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]
    out = [f"<!-- {k}: {str(v).replace('--', '- -')} -->" for k, v in (meta or {}).items()]
    out += [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
           f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
           f'<text x="{width / 2:.0f}" y="{height - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
           f'<text x="14" y="{height / 2:.0f}" font-size="12" transform="rotate(-90 14 {height / 2:.0f})">{ylabel}</text>',
           f'<text x="{pad - 4}" y="{height - pad}" text-anchor="end" font-size="10">{y0:g}</text>',
           f'<text x="{pad - 4}" y="{pad + 4}" text-anchor="end" font-size="10">{y1:g}</text>',
           f'<text x="{pad}" y="{height - pad + 14}" text-anchor="middle" font-size="10">{x0:g}</text>',
           f'<text x="{width - pad}" y="{height - pad + 14}" text-anchor="middle" font-size="10">{x1:g}</text>']
    for i, (name, (xs, ys)) in enumerate(series.items()):
        color = colors[i % len(colors)]
        pts = " ".join("%.2f,%.2f" % px(x, y) for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        out.append(f'<text x="{width - pad + 4}" y="{pad + 14 * i}" font-size="10" fill="{color}">{name}</text>')
    out.append("</svg>")
    return write_lines(path, out)
