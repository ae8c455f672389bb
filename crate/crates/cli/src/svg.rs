//! Minimal static SVG output: scatter panels colored per sample and simple
//! line charts. Output depends only on the inputs, so files diff cleanly.

use std::fmt::Write;

use anchordt::adcore::Tensor;

const PANEL: f64 = 320.0;
const MARGIN: f64 = 36.0;

/// Deterministic color for sample `index`; the same index gets the same
/// color in every panel so corresponding points can be matched by eye.
pub fn index_color(index: usize) -> String {
    // splitmix64 finalizer
    let mut z = (index as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let hue = z % 360;
    let light = 35 + (z >> 16) % 30;
    format!("hsl({hue},75%,{light}%)")
}

pub struct Panel<'a> {
    pub title: String,
    pub points: &'a Tensor,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo < hi) {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Side-by-side 2D scatter panels sharing one coordinate frame. At most
/// `max_points` leading rows of each panel are drawn.
pub fn scatter_panels(panels: &[Panel<'_>], max_points: usize) -> String {
    let all = || {
        panels
            .iter()
            .flat_map(|p| p.points.data()[..p.points.cols() * p.points.rows().min(max_points)].iter())
    };
    let xs = bounds(all().step_by(2));
    let ys = bounds(all().skip(1).step_by(2));
    let width = panels.len() as f64 * (PANEL + MARGIN) + MARGIN;
    let height = PANEL + 2.0 * MARGIN;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for (k, panel) in panels.iter().enumerate() {
        let left = MARGIN + k as f64 * (PANEL + MARGIN);
        let top = MARGIN;
        writeln!(
            s,
            r#"<rect x="{left}" y="{top}" width="{PANEL}" height="{PANEL}" fill="none" stroke="black"/>"#
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
            left + PANEL / 2.0,
            top - 10.0,
            escape(&panel.title)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{left}" y="{:.1}" font-family="sans-serif" font-size="10">x [{:.2}, {:.2}]  y [{:.2}, {:.2}]</text>"#,
            top + PANEL + 16.0,
            xs.0,
            xs.1,
            ys.0,
            ys.1
        )
        .unwrap();
        for i in 0..panel.points.rows().min(max_points) {
            let p = panel.points.row_slice(i);
            let cx = left + (p[0] - xs.0) / (xs.1 - xs.0) * PANEL;
            let cy = top + PANEL - (p[1] - ys.0) / (ys.1 - ys.0) * PANEL;
            writeln!(
                s,
                r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="1.8" fill="{}"/>"#,
                index_color(i)
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}

/// One or more `(x, y)` series on shared axes, optionally with a log-scaled
/// x axis.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
    log_x: bool,
) -> String {
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let xs = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)).map(tx).collect::<Vec<_>>().iter());
    let ys = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)).collect::<Vec<_>>().iter());
    let (w, h) = (PANEL * 1.5, PANEL);
    let width = w + 3.0 * MARGIN;
    let height = h + 3.0 * MARGIN;
    let (left, top) = (2.0 * MARGIN, MARGIN);
    let px = |x: f64| left + (tx(x) - xs.0) / (xs.1 - xs.0) * w;
    let py = |y: f64| top + h - (y - ys.0) / (ys.1 - ys.0) * h;
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<rect x="{left}" y="{top}" width="{w}" height="{h}" fill="none" stroke="black"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        left + w / 2.0,
        top - 10.0,
        escape(title)
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}{}</text>"#,
        left + w / 2.0,
        top + h + 30.0,
        escape(x_label),
        if log_x { " (log scale)" } else { "" }
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="14" y="{:.1}" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {:.1})" text-anchor="middle">{}</text>"#,
        top + h / 2.0,
        top + h / 2.0,
        escape(y_label)
    )
    .unwrap();
    for (label, y) in [(ys.0, ys.0), (ys.1, ys.1)] {
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{label:.3e}</text>"#,
            left - 4.0,
            py(y) + 4.0
        )
        .unwrap();
    }
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = palette[k % palette.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        )
        .unwrap();
        for &(x, y) in pts {
            writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y)).unwrap();
            writeln!(
                s,
                r#"<text x="{:.2}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">{x}</text>"#,
                px(x),
                top + h + 14.0
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            left + 8.0,
            top + 16.0 + 14.0 * k as f64,
            escape(name)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
