"""SVG overlay of a campaign: obstacles, tube ribbons and executed paths."""
from __future__ import annotations

from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def campaign_svg(report, width: int = 800) -> str:
    """Top view of every execution.

    Each execution draws a translucent ribbon of half-width ``rho`` around
    its nominal path and the executed path on top of it.
    """
    ws = report.workspace
    if ws is None:
        raise ValueError("report carries no workspace to draw")
    (x0, x1), (y0, y1) = ws.bounds
    scale = width / (x1 - x0)
    height = int(round((y1 - y0) * scale))

    def pt(x, y):
        return f"{(x - x0) * scale:.2f},{(y1 - y) * scale:.2f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white" stroke="black"/>']
    for lo, hi in ws.obstacles:
        out.append(f'<rect x="{(lo[0] - x0) * scale:.2f}" y="{(y1 - hi[1]) * scale:.2f}" '
                   f'width="{(hi[0] - lo[0]) * scale:.2f}" height="{(hi[1] - lo[1]) * scale:.2f}" '
                   f'fill="#444444"/>')
    for i, rec in enumerate(report.records):
        colour = PALETTE[i % len(PALETTE)]
        nominal = " ".join(pt(x, y) for x, y in rec.nominal[:, 3:5])
        executed = " ".join(pt(x, y) for x, y in rec.states[:, 5:7])
        out.append(f'<g id="execution-{rec.execution}">')
        out.append(f'<title>{escape(f"execution {rec.execution}: cost {rec.plan_cost:.4f}")}</title>')
        out.append(f'<polyline points="{nominal}" fill="none" stroke="{colour}" '
                   f'stroke-opacity="0.15" stroke-width="{2 * rec.rho * scale:.2f}" '
                   f'stroke-linejoin="round" stroke-linecap="round"/>')
        out.append(f'<polyline points="{executed}" fill="none" stroke="{colour}" '
                   f'stroke-width="1.5"/>')
        out.append("</g>")
    if report.records:
        first = report.records[0]
        for (x, y), label in ((first.states[0, 5:7], "start"), (first.nominal[-1, 3:5], "goal")):
            cx, cy = pt(x, y).split(",")
            out.append(f'<circle cx="{cx}" cy="{cy}" r="5" fill="black"><title>{label}</title>'
                       f'</circle>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
