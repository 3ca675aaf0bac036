//! Minimal static SVG line plot.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 30.0, 40.0, 60.0); // left, right, top, bottom
const TICKS: usize = 5;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.08 * (hi - lo);
    (lo - pad, hi + pad)
}

/// One polyline through `points`, each also drawn as a marker carrying
/// `data-x`/`data-y` attributes and a tooltip. Infinite y values are pinned
/// to the top of the axis.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let (left, right, top, bottom) = MARGIN;
    let (x0, x1) = range(points.iter().map(|p| p.0));
    let (y0, y1) = range(points.iter().map(|p| p.1).filter(|v| v.is_finite()));
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (WIDTH - left - right);
    let py = |y: f64| {
        let y = if y.is_finite() { y } else { y1 };
        HEIGHT - bottom - (y - y0) / (y1 - y0) * (HEIGHT - top - bottom)
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));

    // axes and ticks
    let (ax0, ax1, ay0, ay1) = (left, WIDTH - right, top, HEIGHT - bottom);
    let _ = writeln!(s, r#"<path d="M{ax0},{ay0} L{ax0},{ay1} L{ax1},{ay1}" fill="none" stroke="black"/>"#);
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (tx, ty) = (px(xv), py(yv));
        let _ = writeln!(s, r#"<line x1="{tx:.2}" y1="{ay1}" x2="{tx:.2}" y2="{}" stroke="black"/>"#, ay1 + 5.0);
        let _ = writeln!(s, r#"<text x="{tx:.2}" y="{}" text-anchor="middle">{xv:.1}</text>"#, ay1 + 20.0);
        let _ = writeln!(s, r#"<line x1="{}" y1="{ty:.2}" x2="{ax0}" y2="{ty:.2}" stroke="black"/>"#, ax0 - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{yv:.2}</text>"#, ax0 - 8.0, ty + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (ax0 + ax1) / 2.0, HEIGHT - 15.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        (ay0 + ay1) / 2.0,
        escape(y_label)
    );

    let path: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, path.join(" "));
    for (row, &(x, y)) in points.iter().enumerate() {
        let label = if y.is_finite() { format!("{y:.4}") } else { "inf".into() };
        let _ = writeln!(
            s,
            r#"<circle data-row="{row}" data-x="{x}" data-y="{label}" cx="{:.2}" cy="{:.2}" r="4" fill="steelblue"><title>{x}: {label}</title></circle>"#,
            px(x),
            py(y)
        );
    }
    s.push_str("</svg>\n");
    s
}
