//! Minimal SVG line charts of trajectory columns.

use std::fmt::Write as _;

use bss_core::TrajectoryPoint;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;

/// Colours follow the figure convention: diagonal entries blue and magenta,
/// anti-diagonal entries yellow and orange.
const SERIES: [(&str, &str); 5] = [
    ("c11", "#1f4fd6"),
    ("c22", "#c026d3"),
    ("c12", "#e0b000"),
    ("c21", "#f07800"),
    ("index", "#555555"),
];

fn value(p: &TrajectoryPoint, name: &str) -> f64 {
    match name {
        "c11" => p.c11,
        "c12" => p.c12,
        "c21" => p.c21,
        "c22" => p.c22,
        _ => p.index,
    }
}

/// Entries of `C_t` against `t`, plus the non-mixing index as a dashed line.
pub fn trajectory_svg(title: &str, points: &[TrajectoryPoint]) -> String {
    let finite = |v: f64| v.is_finite();
    let t_max = points.last().map_or(1.0, |p| p.t.max(1) as f64);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        for (name, _) in SERIES {
            let v = value(p, name);
            if finite(v) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if !(lo.is_finite() && hi.is_finite()) {
        (lo, hi) = (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let x = |t: u64| MARGIN + (WIDTH - 2.0 * MARGIN) * t as f64 / t_max;
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{x0},{y0} L{x0},{y1} L{x1},{y1}" stroke="black" fill="none"/>"#
    );
    if lo < 0.0 && hi > 0.0 {
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{0:.2}" x2="{x1}" y2="{0:.2}" stroke="#bbbbbb" stroke-dasharray="2,3"/>"##,
            y(0.0)
        );
    }
    for (v, anchor) in [(lo, y1), (hi, y0)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{anchor}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.3}</text>"#,
            x0 - 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{x1}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">t = {}</text>"#,
        y1 + 16.0,
        t_max
    );
    for (k, (name, colour)) in SERIES.iter().enumerate() {
        let mut d = String::new();
        let mut pen_down = false;
        for p in points {
            let v = value(p, name);
            if !finite(v) {
                pen_down = false;
                continue;
            }
            let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, x(p.t), y(v));
            pen_down = true;
        }
        let dash = if *name == "index" { r#" stroke-dasharray="5,4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<path d="{}" stroke="{colour}" stroke-width="1.4" fill="none"{dash}/>"#,
            d.trim_end()
        );
        let ly = y0 + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="11" fill="{colour}">{name}</text>"#,
            x1 + 6.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
