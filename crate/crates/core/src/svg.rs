//! SVG rendering of planar region arenas.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::network::ActivationPattern;
use crate::region2d::PlaneArena;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvgStyle {
    /// Width and height of the image in pixels.
    pub size: f64,
    /// Stroke colour for region edges; `None` draws no outlines.
    pub stroke: Option<String>,
    pub stroke_width: f64,
    pub show_anchors: bool,
    pub anchor_radius: f64,
}

impl Default for SvgStyle {
    fn default() -> Self {
        Self {
            size: 800.0,
            stroke: Some("#202020".into()),
            stroke_width: 0.3,
            show_anchors: true,
            anchor_radius: 4.0,
        }
    }
}

/// FNV-1a, stable across platforms and toolchains.
fn pattern_hash(pattern: &ActivationPattern) -> u64 {
    pattern.0.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Colour keyed by the activation pattern.
pub fn pattern_color(pattern: &ActivationPattern) -> String {
    let h = pattern_hash(pattern);
    let hue = (h % 360) as f64;
    let sat = 45.0 + ((h >> 16) % 40) as f64;
    let light = 45.0 + ((h >> 32) % 30) as f64;
    format!("hsl({hue:.0},{sat:.0}%,{light:.0}%)")
}

/// One filled path per polygon; slice coordinates map onto the image with
/// the `v` axis pointing up.
pub fn render_svg(arena: &PlaneArena, style: &SvgStyle) -> String {
    let h = arena.frame.half();
    let scale = style.size / (2.0 * h);
    let map = |p: [f64; 2]| ((p[0] + h) * scale, (h - p[1]) * scale);
    let mut out = String::with_capacity(64 + arena.polygons.len() * 160);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#,
        s = style.size
    );
    let stroke = match &style.stroke {
        Some(c) => format!(r#" stroke="{c}" stroke-width="{}" stroke-linejoin="round""#, style.stroke_width),
        None => String::new(),
    };
    let _ = writeln!(out, "<g{stroke}>");
    for (pid, poly) in arena.polygons.iter().enumerate() {
        out.push_str(r#"<path d=""#);
        for (k, p) in arena.polygon_points(pid).into_iter().enumerate() {
            let (x, y) = map(p);
            let _ = write!(out, "{}{x:.3} {y:.3}", if k == 0 { "M" } else { " L" });
        }
        let _ = writeln!(out, r#" Z" fill="{}"/>"#, pattern_color(&poly.pattern));
    }
    out.push_str("</g>\n");
    if style.show_anchors {
        for &a in &arena.frame.anchors {
            let (x, y) = map(a);
            let _ = writeln!(
                out,
                r#"<circle cx="{x:.3}" cy="{y:.3}" r="{}" fill="black"/>"#,
                style.anchor_radius
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Layer, Network};
    use crate::region2d::{enumerate_plane, SliceFrame};
    use crate::PiecewiseLinearActivation;

    fn single_cut(bias: f64) -> PlaneArena {
        let net = Network::new(
            2,
            vec![
                Layer::new(1, 2, vec![1.0, 0.0], vec![bias]).unwrap(),
                Layer::new(1, 1, vec![1.0], vec![0.0]).unwrap(),
            ],
            PiecewiseLinearActivation::relu(),
        )
        .unwrap();
        let mut frame = SliceFrame::axis_aligned(vec![0.0, 0.0], 0, 1, 2.0).unwrap();
        frame.anchors.push([0.5, 0.5]);
        enumerate_plane(&net, &frame).unwrap()
    }

    #[test]
    fn one_polygon_one_path() {
        let svg = render_svg(&single_cut(-5.0), &SvgStyle::default());
        assert_eq!(svg.matches("<path").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 1);
    }

    #[test]
    fn two_polygons_share_the_chord() {
        let arena = single_cut(0.0);
        let svg = render_svg(&arena, &SvgStyle::default());
        let paths: Vec<&str> = svg.lines().filter(|l| l.starts_with("<path")).collect();
        assert_eq!(paths.len(), 2);
        // the chord x = 0 maps to pixel column 400
        for p in &paths {
            assert!(p.contains("400.000 0.000") && p.contains("400.000 800.000"), "{p}");
        }
        assert_ne!(pattern_color(&arena.polygons[0].pattern), pattern_color(&arena.polygons[1].pattern));
    }
}
