use std::fmt::Write as _;

use super::{FilterAtlas, FilterEntry};

const ROW_H: f64 = 110.0;
const PLOT_W: f64 = 220.0;
const PLOT_H: f64 = 80.0;
const MAP: f64 = 80.0;
const PANEL_W: f64 = PLOT_W + MAP + 60.0;
const GRID: usize = 24;

/// Inverse-distance-weighted value at `(x, y)` with power 2.
pub(crate) fn idw(xy: &[[f32; 2]], values: &[f64], x: f64, y: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (p, &v) in xy.iter().zip(values) {
        let d2 = (x - p[0] as f64).powi(2) + (y - p[1] as f64).powi(2);
        if d2 < 1e-18 {
            return v;
        }
        num += v / d2;
        den += 1.0 / d2;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Gray level symmetric about zero: −1 black, 0 mid-gray, +1 white.
pub(crate) fn gray(v: f64) -> u8 {
    if v < 0.0 {
        255 - gray(-v)
    } else {
        (127.5 + 127.5 * v.min(1.0)).round() as u8
    }
}

fn spectrum_plot(out: &mut String, e: &FilterEntry, x0: f64, y0: f64, nyquist: f64) {
    let top = e.smoothed.iter().chain(&e.spectrum.magnitude).fold(0.0f64, |m, &v| m.max(v));
    let scale = if top > 0.0 { PLOT_H / top } else { 0.0 };
    let _ = writeln!(
        out,
        r##"<rect x="{x0}" y="{y0}" width="{PLOT_W}" height="{PLOT_H}" fill="none" stroke="#888"/>"##
    );
    for (series, style) in [(&e.spectrum.magnitude, r##"stroke="#bbb""##), (&e.smoothed, r##"stroke="#000""##)] {
        let pts: Vec<String> = e
            .spectrum
            .freqs
            .iter()
            .zip(series.iter())
            .map(|(f, m)| format!("{:.2},{:.2}", x0 + f / nyquist * PLOT_W, y0 + PLOT_H - m * scale))
            .collect();
        let _ = writeln!(out, r#"<polyline fill="none" {style} points="{}"/>"#, pts.join(" "));
    }
    let _ = writeln!(
        out,
        r#"<text x="{x0}" y="{}" font-size="9">b{} f{} peak {:.1} Hz</text>"#,
        y0 - 3.0,
        e.branch,
        e.filter,
        e.peak_hz()
    );
}

fn topomap(out: &mut String, atlas: &FilterAtlas, e: &FilterEntry, x0: f64, y0: f64) {
    let xy = &atlas.montage.xy;
    let radius = xy.iter().fold(0.0f64, |m, p| m.max((p[0] as f64).hypot(p[1] as f64))).max(1e-6) * 1.15;
    let cell = MAP / GRID as f64;
    for gy in 0..GRID {
        for gx in 0..GRID {
            let ux = ((gx as f64 + 0.5) / GRID as f64 * 2.0 - 1.0) * radius;
            let uy = (1.0 - (gy as f64 + 0.5) / GRID as f64 * 2.0) * radius;
            if ux.hypot(uy) > radius {
                continue;
            }
            let g = gray(idw(xy, &e.pattern, ux, uy));
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({g},{g},{g})"/>"#,
                x0 + gx as f64 * cell,
                y0 + gy as f64 * cell
            );
        }
    }
    let (cx, cy) = (x0 + MAP / 2.0, y0 + MAP / 2.0);
    let _ = writeln!(out, r##"<circle cx="{cx}" cy="{cy}" r="{}" fill="none" stroke="#000"/>"##, MAP / 2.0);
    for p in xy {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="#c00"/>"##,
            cx + p[0] as f64 / radius * MAP / 2.0,
            cy - p[1] as f64 / radius * MAP / 2.0
        );
    }
    if e.degenerate {
        let _ = writeln!(out, r#"<text x="{x0}" y="{}" font-size="9">degenerate</text>"#, y0 + MAP + 10.0);
    }
}

pub(crate) fn render(atlas: &FilterAtlas) -> String {
    let branches = atlas.entries.iter().map(|e| e.branch + 1).max().unwrap_or(0);
    let rows = (0..branches)
        .map(|b| atlas.entries.iter().filter(|e| e.branch == b).count())
        .max()
        .unwrap_or(0);
    let width = PANEL_W * branches.max(1) as f64 + 20.0;
    let height = ROW_H * rows as f64 + 50.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="10" y="20" font-size="12">Spectra 0 to {} Hz at fs = {} Hz; {}</text>"#,
        atlas.nyquist(),
        atlas.fs,
        atlas.annotation()
    );
    for b in 0..branches {
        for (row, e) in atlas.entries.iter().filter(|e| e.branch == b).enumerate() {
            let x0 = 10.0 + PANEL_W * b as f64;
            let y0 = 45.0 + ROW_H * row as f64;
            spectrum_plot(&mut out, e, x0, y0, atlas.nyquist());
            topomap(&mut out, atlas, e, x0 + PLOT_W + 20.0, y0);
        }
    }
    out.push_str("</svg>\n");
    out
}
