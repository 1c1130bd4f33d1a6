//! Static SVG scatter of two-dimensional latent posteriors.
//!
//! Markers and ellipses are drawn in latent coordinates inside a scaled
//! group, so each ellipse's `rx`/`ry` attributes are exactly `k·σ` per axis.

use std::fmt::Write as _;

use zsda_core::LatentPosterior;

pub const SOURCE_COLOR: &str = "#1f4fd1";
pub const HELD_OUT_COLOR: &str = "#d1281f";

const SIZE: f64 = 480.0;
const MARGIN: f64 = 40.0;

/// `points` pairs each posterior with whether its domain was held out.
pub fn latent_scatter(points: &[(&LatentPosterior, bool)]) -> Option<String> {
    if points.is_empty() || points.iter().any(|(p, _)| p.dim() != 2) {
        return None;
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for (p, _) in points {
        let sd = p.std_dev();
        for k in 0..2 {
            lo[k] = lo[k].min(p.mu[k] - 2.0 * sd[k]);
            hi[k] = hi[k].max(p.mu[k] + 2.0 * sd[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let cx = 0.5 * (lo[0] + hi[0]);
    let cy = 0.5 * (lo[1] + hi[1]);
    let dot = 3.0 / scale;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="20" font-family="sans-serif" font-size="12">posterior means with 1σ and 2σ ellipses (blue: source, red: held out)</text>"#
    );
    let _ = writeln!(
        out,
        r#"<g transform="translate({} {}) scale({scale} {}) translate({} {})">"#,
        SIZE / 2.0,
        SIZE / 2.0,
        -scale,
        -cx,
        -cy
    );
    for (p, held_out) in points {
        let color = if *held_out { HELD_OUT_COLOR } else { SOURCE_COLOR };
        let sd = p.std_dev();
        let id = p.id.map(|i| i.to_string()).unwrap_or_default();
        for k in [1.0, 2.0] {
            let _ = writeln!(
                out,
                r#"<ellipse class="sigma{k}" data-domain="{id}" cx="{:?}" cy="{:?}" rx="{:?}" ry="{:?}" fill="none" stroke="{color}" stroke-opacity="{}" vector-effect="non-scaling-stroke"/>"#,
                p.mu[0],
                p.mu[1],
                k * sd[0],
                k * sd[1],
                if k == 1.0 { 0.9 } else { 0.45 }
            );
        }
        let _ = writeln!(
            out,
            r#"<circle class="mean" data-domain="{id}" cx="{:?}" cy="{:?}" r="{dot:?}" fill="{color}"/>"#,
            p.mu[0], p.mu[1]
        );
    }
    out.push_str("</g>\n</svg>\n");
    Some(out)
}
