"""Grouped bar charts as standalone SVG strings.

Hand-assembled markup, no plotting dependency: output is a pure
function of the metric rows, so re-runs diff clean.
"""

from __future__ import annotations

from .simulate import BatchMetrics

PALETTE = (
    "#4878d0",
    "#ee854a",
    "#6acc64",
    "#d65f5f",
    "#956cb4",
    "#8c613c",
    "#dc7ec0",
    "#797979",
)


def _esc(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    )


def _series_label(row: BatchMetrics) -> str:
    if not row.variant.startswith("hybrid"):
        return row.variant
    label = f"{row.variant} c={row.c:g}"
    if row.adaptive_mode != "none":
        label += f" ({row.adaptive_mode})"
    return label


def bar_chart(
    rows: list[BatchMetrics],
    metric: str = "pct_correct_mtd",
    title: str | None = None,
    width: int = 760,
    height: int = 420,
) -> str:
    """Render one metric across scenario groups and variant series.

    Rows with a None metric value (e.g. OBD columns for non-ET
    variants) are drawn as zero-height bars with a hollow marker.
    """
    if not rows:
        raise ValueError("nothing to chart")
    scenarios = list(dict.fromkeys(r.scenario for r in rows))
    series = list(dict.fromkeys(_series_label(r) for r in rows))
    values: dict[tuple[str, str], float | None] = {}
    for r in rows:
        values[(r.scenario, _series_label(r))] = getattr(r, metric)

    margin_l, margin_r, margin_t, margin_b = 52, 16, 34, 110
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b
    group_w = plot_w / len(scenarios)
    bar_w = group_w * 0.8 / max(len(series), 1)

    top = max((v for v in values.values() if v is not None), default=0.0)
    y_max = 100.0 if top <= 100.0 else 10.0 * (int(top // 10) + 1)

    def y(v: float) -> float:
        return margin_t + plot_h * (1.0 - v / y_max)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">'
        f"{_esc(title or metric)}</text>",
    ]
    for tick in range(0, int(y_max) + 1, 20):
        yy = y(tick)
        out.append(
            f'<line x1="{margin_l}" y1="{yy:.1f}" x2="{width - margin_r}" '
            f'y2="{yy:.1f}" stroke="#ddd" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{margin_l - 6}" y="{yy + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{tick}</text>'
        )
    for gi, scenario in enumerate(scenarios):
        gx = margin_l + gi * group_w
        for si, name in enumerate(series):
            v = values.get((scenario, name))
            x = gx + group_w * 0.1 + si * bar_w
            color = PALETTE[si % len(PALETTE)]
            if v is None:
                out.append(
                    f'<rect x="{x:.1f}" y="{y(0) - 2:.1f}" '
                    f'width="{bar_w * 0.92:.1f}" height="2" fill="none" '
                    f'stroke="{color}" stroke-width="1"/>'
                )
                continue
            out.append(
                f'<rect x="{x:.1f}" y="{y(v):.1f}" width="{bar_w * 0.92:.1f}" '
                f'height="{y(0) - y(v):.1f}" fill="{color}">'
                f"<title>{_esc(scenario)} {_esc(name)}: {v:.4f}</title></rect>"
            )
        out.append(
            f'<text x="{gx + group_w / 2:.1f}" y="{y(0) + 16:.1f}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="12">'
            f"{_esc(scenario)}</text>"
        )
    out.append(
        f'<line x1="{margin_l}" y1="{y(0):.1f}" x2="{width - margin_r}" '
        f'y2="{y(0):.1f}" stroke="#333" stroke-width="1"/>'
    )
    legend_y = height - margin_b + 40
    for si, name in enumerate(series):
        lx = margin_l + (si % 3) * (plot_w / 3)
        ly = legend_y + (si // 3) * 18
        color = PALETTE[si % len(PALETTE)]
        out.append(
            f'<rect x="{lx:.1f}" y="{ly - 9:.1f}" width="10" height="10" '
            f'fill="{color}"/>'
        )
        out.append(
            f'<text x="{lx + 14:.1f}" y="{ly:.1f}" font-family="sans-serif" '
            f'font-size="11">{_esc(name)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
