"""CSV and SVG emitters for run artifacts."""

from __future__ import annotations

import csv
import hashlib
import io

import numpy as np

__all__ = ["fmt", "csv_text", "write_csv", "read_csv", "svg_lines", "sha256_file", "sha256_text"]


def fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def csv_text(header, rows, meta=None):
    """RFC-4180 CSV: optional ``# key=value,...`` line, header row, data rows."""
    buf = io.StringIO()
    if meta:
        buf.write("# " + " ".join(f"{k}={fmt(v)}" for k, v in meta.items()) + "\r\n")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path, header, rows, meta=None):
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(header, rows, meta))


def read_csv(path):
    """Return (meta dict, header, float array)."""
    meta = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if lines and lines[0].startswith("#"):
        for tok in lines[0][1:].split():
            k, _, v = tok.partition("=")
            meta[k] = v
        lines = lines[1:]
    rows = list(csv.reader(lines))
    header, data = rows[0], rows[1:]
    return meta, header, np.array([[float(v) for v in r] for r in data]) if data else np.zeros((0, len(header)))


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def svg_lines(series, title="", xlabel="t", ylabel="", logy=False, width=640, height=400):
    """Static SVG line chart; ``series`` is a list of (label, x, y)."""
    pad_l, pad_r, pad_t, pad_b = 70, 20, 30, 50
    xs = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s[2], dtype=float) for s in series])
    if logy:
        ys = ys[ys > 0]
        ys = np.log10(ys) if ys.size else np.array([0.0, 1.0])
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    y0, y1 = float(np.min(ys)), float(np.max(ys))
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    W, H = width - pad_l - pad_r, height - pad_t - pad_b

    def px(x):
        return pad_l + (x - x0) / (x1 - x0) * W

    def py(y):
        return pad_t + (1 - (y - y0) / (y1 - y0)) * H

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="14">{_esc(title)}</text>',
           f'<line x1="{pad_l}" y1="{pad_t + H}" x2="{pad_l + W}" y2="{pad_t + H}" stroke="black"/>',
           f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{pad_t + H}" stroke="black"/>']
    for i in range(5):
        xv = x0 + i * (x1 - x0) / 4
        yv = y0 + i * (y1 - y0) / 4
        ylab = f"1e{yv:.2g}" if logy else f"{yv:.3g}"
        out.append(f'<text x="{px(xv):.1f}" y="{pad_t + H + 18}" text-anchor="middle" font-size="11">{xv:.3g}</text>')
        out.append(f'<text x="{pad_l - 6}" y="{py(yv) + 4:.1f}" text-anchor="end" font-size="11">{ylab}</text>')
    out.append(f'<text x="{pad_l + W / 2}" y="{height - 10}" text-anchor="middle" font-size="12">{_esc(xlabel)}</text>')
    out.append(f'<text x="16" y="{pad_t + H / 2}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {pad_t + H / 2})">{_esc(ylabel)}</text>')
    for k, (label, x, y) in enumerate(series):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if logy:
            keep = y > 0
            x, y = x[keep], np.log10(y[keep])
        keep = np.isfinite(y)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[keep], y[keep]))
        c = colors[k % len(colors)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{pad_l + W - 4}" y="{pad_t + 14 + 14 * k}" text-anchor="end" '
                   f'font-size="11" fill="{c}">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")



def sha256_text(text):
    return hashlib.sha256(text.encode()).hexdigest()
