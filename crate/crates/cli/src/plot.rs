//! Trajectory plot: track outline with the driven path colored by speed.

use std::fmt::Write;

use trackmppi::Centerline;

/// Offset of the closed or open polyline by `d` along its left normal.
fn offset(line: &Centerline, d: f64) -> Vec<[f64; 2]> {
    let v = &line.vertices;
    let n = v.len();
    (0..n)
        .map(|i| {
            let prev = if i > 0 { v[i - 1] } else if line.closed { v[n - 1] } else { v[i] };
            let next = if i + 1 < n { v[i + 1] } else if line.closed { v[0] } else { v[i] };
            let (tx, ty) = (next[0] - prev[0], next[1] - prev[1]);
            let len = tx.hypot(ty).max(1e-12);
            [v[i][0] - ty / len * d, v[i][1] + tx / len * d]
        })
        .collect()
}

/// Blue at `lo` through green to red at `hi`.
fn speed_color(s: f64, lo: f64, hi: f64) -> String {
    let f = if hi > lo { ((s - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
    let hue = 240.0 * (1.0 - f);
    format!("hsl({hue:.0},90%,45%)")
}

/// SVG of the track edges, centerline, and `(x, y, speed)` trace.
pub fn render_svg(line: &Centerline, trace: &[[f64; 3]], width_px: f64) -> String {
    let left = offset(line, line.half_width);
    let right = offset(line, -line.half_width);
    let pts = left.iter().chain(&right).copied().chain(trace.iter().map(|p| [p[0], p[1]]));
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for [x, y] in pts {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let pad = 1.0;
    let (x0, y0, x1, y1) = (x0 - pad, y0 - pad, x1 + pad, y1 + pad);
    let scale = width_px / (x1 - x0).max(1e-9);
    let height_px = (y1 - y0) * scale;
    let px = |p: [f64; 2]| ((p[0] - x0) * scale, (y1 - p[1]) * scale);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width_px:.0}" height="{height_px:.0}" viewBox="0 0 {width_px:.2} {height_px:.2}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let poly = |pts: &[[f64; 2]], closed: bool, style: &str| {
        let mut s = String::new();
        for p in pts {
            let (a, b) = px(*p);
            let _ = write!(s, "{a:.2},{b:.2} ");
        }
        let tag = if closed { "polygon" } else { "polyline" };
        format!("<{tag} points=\"{}\" fill=\"none\" {style}/>\n", s.trim_end())
    };
    svg.push_str(&poly(&left, line.closed, r#"stroke="black" stroke-width="1.5""#));
    svg.push_str(&poly(&right, line.closed, r#"stroke="black" stroke-width="1.5""#));
    svg.push_str(&poly(&line.vertices, line.closed, r##"stroke="#999" stroke-width="0.8" stroke-dasharray="4 3""##));

    let (lo, hi) = trace
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[2]), hi.max(p[2])));
    for p in trace {
        let (a, b) = px([p[0], p[1]]);
        let _ = writeln!(svg, r#"<circle cx="{a:.2}" cy="{b:.2}" r="1.6" fill="{}"/>"#, speed_color(p[2], lo, hi));
    }
    if !trace.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="8" y="18" font-family="sans-serif" font-size="13">speed {lo:.2} (blue) to {hi:.2} m/s (red)</text>"#
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_has_outline_and_one_marker_per_sample() {
        let line = Centerline::new(vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]], true, 1.0).unwrap();
        let trace = [[0.0, 0.0, 1.0], [5.0, 0.0, 2.0], [10.0, 5.0, 3.0]];
        let svg = render_svg(&line, &trace, 400.0);
        assert_eq!(svg.matches("<polygon").count(), 3);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("hsl(240,") && svg.contains("hsl(0,"));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn offsets_sit_at_half_width() {
        let line = Centerline::new(vec![[0.0, 0.0], [4.0, 0.0], [8.0, 0.0]], false, 0.5).unwrap();
        let left = offset(&line, 0.5);
        assert!(left.iter().all(|p| (p[1] - 0.5).abs() < 1e-12));
    }
}
