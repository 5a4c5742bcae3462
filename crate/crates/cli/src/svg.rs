//! Plain-text SVG for the correlation heatmap and embedding scatter plots.
//!
//! Each data cell or point is exactly one mark element (`rect.cell`,
//! `circle.point`), so tests can count and read them back with an XML parser.

use std::fmt::Write;

use ndarray::{ArrayView2, Axis};
use psyman_core::gradcam::colormap;
use psyman_core::stats::CorrMatrix;

const CELL: f64 = 24.0;
const CHAR_W: f64 = 7.0;
const PLOT: f64 = 480.0;
const PAD: f64 = 16.0;
const RADIUS: f64 = 3.5;

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// `#rrggbb` for a colormap position in `[0, 1]`.
pub fn hex_color(t: f64) -> String {
    let [r, g, b] = colormap(t.clamp(0.0, 1.0));
    let byte = |v: f64| (255.0 * v.clamp(0.0, 1.0)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", byte(r), byte(g), byte(b))
}

/// Correlation grid in matrix order, colormap spread over `[-1, 1]`, names on both axes.
pub fn heatmap(m: &CorrMatrix<f64>) -> String {
    let n = m.size();
    let longest = m.names.iter().map(|s| s.chars().count()).max().unwrap_or(0) as f64;
    let margin = PAD + CHAR_W * longest;
    let side = margin + CELL * n as f64 + PAD;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side:.0}" height="{side:.0}" viewBox="0 0 {side:.0} {side:.0}" font-family="sans-serif" font-size="11">"#
    );
    s.push_str("<g class=\"row-labels\">\n");
    for (i, name) in m.names.iter().enumerate() {
        let y = margin + CELL * (i as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text class="row-label" x="{:.1}" y="{y:.1}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            margin - 4.0,
            escape(name)
        );
    }
    s.push_str("</g>\n<g class=\"col-labels\">\n");
    for (j, name) in m.names.iter().enumerate() {
        let x = margin + CELL * (j as f64 + 0.5);
        let y = margin - 4.0;
        let _ = writeln!(
            s,
            r#"<text class="col-label" x="{x:.1}" y="{y:.1}" transform="rotate(-90 {x:.1} {y:.1})" dominant-baseline="middle">{}</text>"#,
            escape(name)
        );
    }
    s.push_str("</g>\n<g class=\"cells\">\n");
    for i in 0..n {
        for j in 0..n {
            let r = m.values[[i, j]];
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{:.1}" y="{:.1}" width="{CELL}" height="{CELL}" fill="{}" data-row="{i}" data-col="{j}" data-r="{r:.6}"><title>{} / {}: {r:.3}</title></rect>"#,
                margin + CELL * j as f64,
                margin + CELL * i as f64,
                hex_color((r + 1.0) / 2.0),
                escape(&m.names[i]),
                escape(&m.names[j]),
            );
        }
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// Orthographic projection of 3D points for a camera at `azimuth` degrees
/// around the vertical axis and `elevation` degrees above the x-y plane.
/// Returns screen `(u, v)` and depth towards the viewer for each row.
pub fn project(coords: ArrayView2<f64>, azimuth: f64, elevation: f64) -> Vec<(f64, f64, f64)> {
    let (az, el) = (azimuth.to_radians(), elevation.to_radians());
    let (sa, ca, se, ce) = (az.sin(), az.cos(), el.sin(), el.cos());
    coords
        .axis_iter(Axis(0))
        .map(|p| {
            let (x, y, z) = (p[0], p[1], p[2]);
            let u = -x * sa + y * ca;
            let v = -x * ca * se - y * sa * se + z * ce;
            let depth = x * ca * ce + y * sa * ce + z * se;
            (u, v, depth)
        })
        .collect()
}

/// Scatter plot of a 2D or 3D embedding. Points are coloured by `values`
/// mapped linearly from their min/max onto the colormap; 3D coordinates are
/// projected with `view = (azimuth, elevation)` and drawn back to front.
pub fn scatter(coords: ArrayView2<f64>, ids: &[String], values: &[f64], view: (f64, f64), title: &str) -> String {
    let pts: Vec<(f64, f64, f64)> = if coords.ncols() == 3 {
        project(coords, view.0, view.1)
    } else {
        coords.axis_iter(Axis(0)).map(|p| (p[0], p[1], 0.0)).collect()
    };
    let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(u, v, _) in &pts {
        lo_u = lo_u.min(u);
        hi_u = hi_u.max(u);
        lo_v = lo_v.min(v);
        hi_v = hi_v.max(v);
    }
    let span = (hi_u - lo_u).max(hi_v - lo_v);
    let inner = PLOT - 2.0 * PAD;
    let scale = if span > 0.0 { inner / span } else { 0.0 };
    let (mid_u, mid_v) = ((lo_u + hi_u) / 2.0, (lo_v + hi_v) / 2.0);

    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shade = |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };

    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| pts[a].2.total_cmp(&pts[b].2).then(a.cmp(&b)));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PLOT}" height="{PLOT}" viewBox="0 0 {PLOT} {PLOT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, r##"<rect class="frame" x="0" y="0" width="{PLOT}" height="{PLOT}" fill="#ffffff"/>"##);
    s.push_str("<g class=\"points\">\n");
    for i in order {
        let (u, v, _) = pts[i];
        let cx = PLOT / 2.0 + (u - mid_u) * scale;
        let cy = PLOT / 2.0 - (v - mid_v) * scale;
        let _ = writeln!(
            s,
            r#"<circle class="point" cx="{cx:.2}" cy="{cy:.2}" r="{RADIUS}" fill="{}" data-index="{i}"><title>{}: {}</title></circle>"#,
            hex_color(shade(values[i])),
            escape(&ids[i]),
            values[i]
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape(r#"a<b&"c'"#), "a&lt;b&amp;&quot;c&apos;");
    }

    #[test]
    fn colours_hit_the_stops() {
        assert_eq!(hex_color(0.0), "#000080");
        assert_eq!(hex_color(0.5), "#00ff00");
        assert_eq!(hex_color(1.0), "#ff0000");
    }

    #[test]
    fn front_view_projection() {
        let p = project(array![[1.0, 2.0, 3.0]].view(), 0.0, 0.0);
        assert_eq!(p[0], (2.0, 3.0, 1.0));
        let top = project(array![[1.0, 2.0, 3.0]].view(), 0.0, 90.0);
        assert!((top[0].0 - 2.0).abs() < 1e-12 && (top[0].1 + 1.0).abs() < 1e-12);
        assert!((top[0].2 - 3.0).abs() < 1e-12);
    }
}
