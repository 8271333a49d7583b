//! Marching-squares isolines and a minimal SVG writer for 2D slices.

use std::fmt::Write;

use crate::landscape::{isoline_levels, Slice2D};

/// Line segment in grid coordinates `(α, β)`.
pub type Segment = ((f64, f64), (f64, f64));

/// Segments of the level set `{v = level}` of a grid sampled at
/// `(coords[i], coords[j])`.
pub fn isoline(coords: &[f64], values: &[Vec<f64>], level: f64) -> Vec<Segment> {
    let n = coords.len();
    let mut out = Vec::new();
    for i in 0..n.saturating_sub(1) {
        for j in 0..n - 1 {
            let (x0, x1, y0, y1) = (coords[i], coords[i + 1], coords[j], coords[j + 1]);
            let v00 = values[i][j];
            let v10 = values[i + 1][j];
            let v11 = values[i + 1][j + 1];
            let v01 = values[i][j + 1];
            let above = |v: f64| v >= level;
            let cut = |a: f64, b: f64| (level - a) / (b - a);
            // bottom, right, top, left
            let mut pts: [Option<(f64, f64)>; 4] = [None; 4];
            if above(v00) != above(v10) {
                pts[0] = Some((x0 + cut(v00, v10) * (x1 - x0), y0));
            }
            if above(v10) != above(v11) {
                pts[1] = Some((x1, y0 + cut(v10, v11) * (y1 - y0)));
            }
            if above(v01) != above(v11) {
                pts[2] = Some((x0 + cut(v01, v11) * (x1 - x0), y1));
            }
            if above(v00) != above(v01) {
                pts[3] = Some((x0, y0 + cut(v00, v01) * (y1 - y0)));
            }
            let hits: Vec<(f64, f64)> = pts.iter().flatten().copied().collect();
            match hits.len() {
                2 => out.push((hits[0], hits[1])),
                4 => {
                    // Saddle: the cell centre decides which corners connect.
                    let centre = 0.25 * (v00 + v10 + v11 + v01);
                    let [b, r, t, l] = pts.map(Option::unwrap);
                    if above(centre) == above(v00) {
                        out.push((b, r));
                        out.push((t, l));
                    } else {
                        out.push((b, l));
                        out.push((r, t));
                    }
                }
                _ => {}
            }
        }
    }
    out
}

/// SVG with `levels` equally spaced isolines between the grid extremes.
pub fn slice_svg(slice: &Slice2D, levels: usize) -> String {
    const SIZE: f64 = 480.0;
    const PAD: f64 = 20.0;
    let lo_c = slice.coords.first().copied().unwrap_or(0.0);
    let hi_c = slice.coords.last().copied().unwrap_or(1.0);
    let span = (hi_c - lo_c).max(f64::MIN_POSITIVE);
    let px = |a: f64| PAD + (a - lo_c) / span * SIZE;
    let py = |b: f64| PAD + (hi_c - b) / span * SIZE;
    let (lo, hi) = slice.min_max();
    let total = SIZE + 2.0 * PAD;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{PAD}" y="{PAD}" width="{SIZE}" height="{SIZE}" fill="white" stroke="black"/>"#
    );
    let count = levels.max(1) as f64;
    for (k, level) in isoline_levels(lo, hi, levels).into_iter().enumerate() {
        let mut d = String::new();
        for ((a0, b0), (a1, b1)) in isoline(&slice.coords, &slice.values, level) {
            let _ = write!(d, "M{:.2} {:.2}L{:.2} {:.2}", px(a0), py(b0), px(a1), py(b1));
        }
        let hue = 240.0 * (1.0 - k as f64 / (count - 1.0).max(1.0));
        let _ = writeln!(
            svg,
            r#"<path class="isoline" data-level="{level:.16e}" d="{d}" fill="none" stroke="hsl({hue:.0},80%,40%)" stroke-width="1.2"/>"#
        );
    }
    svg.push_str("</svg>\n");
    svg
}
