"""Static SVG line charts for ROC curves (no timestamps, byte-stable)."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


def roc_svg(curves, title="ROC", size=360, margin=48) -> str:
    """Render ``[(label, fpr, tpr), ...]`` with a dashed chance diagonal."""
    span = size - 2 * margin

    def xy(fx, ty):
        return f"{margin + fx * span:.2f},{size - margin - ty * span:.2f}"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 16 * len(curves)}" '
        f'viewBox="0 0 {size} {size + 16 * len(curves)}" font-family="sans-serif" font-size="11">',
        f'<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{size / 2:.0f}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<rect x="{margin}" y="{margin}" width="{span}" height="{span}" fill="none" stroke="black"/>',
        f'<polyline points="{xy(0, 0)} {xy(1, 1)}" fill="none" stroke="#888" stroke-dasharray="4 3"/>',
    ]
    for k in range(0, 11, 2):
        v = k / 10
        out.append(f'<text x="{margin + v * span:.2f}" y="{size - margin + 14}" text-anchor="middle">{v:.1f}</text>')
        out.append(f'<text x="{margin - 6}" y="{size - margin - v * span + 4:.2f}" text-anchor="end">{v:.1f}</text>')
    out.append(f'<text x="{size / 2:.0f}" y="{size - 12}" text-anchor="middle">false positive rate</text>')
    out.append(f'<text x="14" y="{size / 2:.0f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {size / 2:.0f})">true positive rate</text>')
    for i, (label, fpr, tpr) in enumerate(curves):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(xy(f, t) for f, t in zip(fpr, tpr))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        y = size + 16 * i + 4
        out.append(f'<line x1="{margin}" y1="{y}" x2="{margin + 18}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{margin + 24}" y="{y + 4}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_roc_svg(path, curves, title="ROC") -> None:
    Path(path).write_text(roc_svg(curves, title), encoding="utf-8")
