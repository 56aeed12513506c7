//! Dependency-free SVG emission for vector fields: one `<g class="bin">`
//! per grid cell (empty cells included, so the structure is countable),
//! plus overlaid exemplary trajectories.

use crate::diag::VectorField;
use crate::math::Real;
use std::fmt::Write;

const CANVAS: Real = 840.0;
const MARGIN: Real = 20.0;
/// Visual amplification of displacement arrows.
const ARROW_GAIN: Real = 3.0;

pub fn vector_field_svg(field: &VectorField, overlays: &[(String, Vec<[Real; 2]>)]) -> String {
    let plot = CANVAS - 2.0 * MARGIN;
    let width = field.dx * field.bins_x as Real;
    let height = field.dy * field.bins_y as Real;
    let to_px = |p: [Real; 2]| -> [Real; 2] {
        [
            MARGIN + (p[0] - field.x0) / width * plot,
            // SVG y grows downward.
            MARGIN + (1.0 - (p[1] - field.y0) / height) * plot,
        ]
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CANVAS}\" height=\"{CANVAS}\" viewBox=\"0 0 {CANVAS} {CANVAS}\">"
    );
    let _ = writeln!(
        s,
        "  <rect x=\"0\" y=\"0\" width=\"{CANVAS}\" height=\"{CANVAS}\" fill=\"white\"/>"
    );
    let _ = writeln!(s, "  <g class=\"field\" stroke=\"#336\" stroke-width=\"1\">");
    for iy in 0..field.bins_y {
        for ix in 0..field.bins_x {
            match field.mean(ix, iy) {
                Some(m) => {
                    let c = field.center(ix, iy);
                    let from = to_px(c);
                    let to = to_px([c[0] + ARROW_GAIN * m[0], c[1] + ARROW_GAIN * m[1]]);
                    let _ = writeln!(
                        s,
                        "    <g class=\"bin\" data-count=\"{}\"><circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1\" fill=\"#336\"/><line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/></g>",
                        field.count(ix, iy),
                        from[0],
                        from[1],
                        from[0],
                        from[1],
                        to[0],
                        to[1]
                    );
                }
                None => {
                    let _ = writeln!(s, "    <g class=\"bin\" data-count=\"0\"/>");
                }
            }
        }
    }
    let _ = writeln!(s, "  </g>");
    let colors = ["#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
    let _ = writeln!(s, "  <g class=\"trajectories\" fill=\"none\" stroke-width=\"2\">");
    for (i, (label, points)) in overlays.iter().enumerate() {
        let mut path = String::new();
        for p in points {
            let px = to_px(*p);
            let _ = write!(path, "{:.2},{:.2} ", px[0], px[1]);
        }
        let _ = writeln!(
            s,
            "    <polyline class=\"traj traj-{label}\" stroke=\"{}\" points=\"{}\"/>",
            colors[i % colors.len()],
            path.trim_end()
        );
    }
    let _ = writeln!(s, "  </g>");
    let _ = writeln!(s, "</svg>");
    s
}
