//! Minimal line charts: a mean polyline over a shaded min–max band.

use std::fmt::Write;

use crate::output::BandRow;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD_L: f64 = 70.0;
const PAD_R: f64 = 20.0;
const PAD_T: f64 = 40.0;
const PAD_B: f64 = 50.0;

/// Renders `rows` with a logarithmic step axis.
pub fn band_chart(title: &str, y_label: &str, rows: &[BandRow]) -> String {
    let pts: Vec<&BandRow> = rows
        .iter()
        .filter(|r| r.t > 0 && r.min.is_finite() && r.max.is_finite())
        .collect();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    if pts.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }

    let x0 = (pts[0].t as f64).log10();
    let x1 = (pts[pts.len() - 1].t as f64).log10().max(x0 + 1e-9);
    let mut y0 = pts.iter().map(|r| r.min).fold(f64::INFINITY, f64::min);
    let mut y1 = pts.iter().map(|r| r.max).fold(f64::NEG_INFINITY, f64::max);
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |t: u64| PAD_L + ((t as f64).log10() - x0) / (x1 - x0) * (W - PAD_L - PAD_R);
    let py = |v: f64| H - PAD_B - (v - y0) / (y1 - y0) * (H - PAD_T - PAD_B);

    // Axes and ticks.
    let _ = writeln!(
        s,
        r#"<path d="M{PAD_L},{PAD_T} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD_B,
        W - PAD_R
    );
    for e in (x0.ceil() as i32)..=(x1.floor() as i32) {
        let t = 10f64.powi(e);
        let x = PAD_L + (e as f64 - x0) / (x1 - x0) * (W - PAD_L - PAD_R);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{t:e}</text>"#,
            H - PAD_B + 18.0
        );
    }
    for k in 0..=4 {
        let v = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            PAD_L - 6.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#,
        (PAD_L + W - PAD_R) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );

    let mut band = String::new();
    for (i, r) in pts.iter().enumerate() {
        let _ = write!(
            band,
            "{}{:.2},{:.2} ",
            if i == 0 { 'M' } else { 'L' },
            px(r.t),
            py(r.max)
        );
    }
    for r in pts.iter().rev() {
        let _ = write!(band, "L{:.2},{:.2} ", px(r.t), py(r.min));
    }
    let _ = writeln!(s, r#"<path d="{band}Z" fill="lightblue" stroke="none"/>"#);
    let mean: Vec<String> = pts
        .iter()
        .map(|r| format!("{:.2},{:.2}", px(r.t), py(r.mean)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="navy" stroke-width="1.5"/>"#,
        mean.join(" ")
    );
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_band_and_mean() {
        let rows: Vec<BandRow> = [1u64, 10, 100, 1000]
            .iter()
            .map(|&t| BandRow {
                t,
                mean: 1.0 / t as f64,
                min: 0.5 / t as f64,
                max: 2.0 / t as f64,
            })
            .collect();
        let svg = band_chart("R(t)/t <f1>", "R(t)/t", &rows);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline") && svg.contains("lightblue"));
        assert!(svg.contains("&lt;f1&gt;"));
        assert!(band_chart("empty", "y", &[]).ends_with("</svg>\n"));
    }
}
