//! Minimal SVG scatter and Bland-Altman plots.

use std::fmt::Write;

use scarquant_core::metrics::AgreementResult;

const W: f64 = 480.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;

struct Axes {
    x: (f64, f64),
    y: (f64, f64),
}

impl Axes {
    fn fit(xs: &[f64], ys: &[f64]) -> Self {
        Self { x: padded_range(xs), y: padded_range(ys) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN)
    }
}

fn padded_range(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { (hi - lo) * 0.08 } else { lo.abs().max(1.0) * 0.1 };
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(out: &mut String, axes: &Axes, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = axes.x.0 + f * (axes.x.1 - axes.x.0);
        let yv = axes.y.0 + f * (axes.y.1 - axes.y.0);
        let (x, y) = (axes.px(xv), axes.py(yv));
        let _ = writeln!(out, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{xv:.2}</text>"#, H - MARGIN + 16.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.2}</text>"#, MARGIN - 6.0, y + 4.0);
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ =
        writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, W / 2.0, H - 14.0, escape(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

fn points(out: &mut String, axes: &Axes, xs: &[f64], ys: &[f64]) {
    for (&x, &y) in xs.iter().zip(ys) {
        let _ = writeln!(out, r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4"/>"##, axes.px(x), axes.py(y));
    }
}

fn hline(out: &mut String, axes: &Axes, y: f64, label: &str, dashed: bool) {
    let py = axes.py(y);
    let dash = if dashed { r#" stroke-dasharray="5,4""# } else { "" };
    let _ =
        writeln!(out, r#"<line x1="{MARGIN}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="gray"{dash}/>"#, W - MARGIN);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
        W - MARGIN - 4.0,
        py - 4.0,
        escape(label)
    );
}

/// Automatic against manual values with the identity line.
pub fn scatter_svg(manual: &[f64], auto: &[f64], title: &str) -> String {
    let all: Vec<f64> = manual.iter().chain(auto).copied().collect();
    let range = padded_range(&all);
    let axes = Axes { x: range, y: range };
    let mut out = String::new();
    frame(&mut out, &axes, title, "manual", "automatic");
    let _ = writeln!(
        out,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="5,4"/>"#,
        axes.px(range.0),
        axes.py(range.0),
        axes.px(range.1),
        axes.py(range.1)
    );
    points(&mut out, &axes, manual, auto);
    out.push_str("</svg>\n");
    out
}

/// Difference (automatic - manual) against the pair mean, with bias and
/// limits of agreement.
pub fn bland_altman_svg(manual: &[f64], auto: &[f64], agreement: &AgreementResult, title: &str) -> String {
    let means: Vec<f64> = manual.iter().zip(auto).map(|(m, a)| (m + a) / 2.0).collect();
    let diffs: Vec<f64> = manual.iter().zip(auto).map(|(m, a)| a - m).collect();
    let mut yr = diffs.clone();
    yr.extend([agreement.loa_low, agreement.loa_high]);
    let axes = Axes::fit(&means, &yr);
    let mut out = String::new();
    frame(&mut out, &axes, title, "mean of manual and automatic", "automatic - manual");
    hline(&mut out, &axes, agreement.bias, &format!("bias {:.2}", agreement.bias), false);
    hline(&mut out, &axes, agreement.loa_low, &format!("-1.96 SD {:.2}", agreement.loa_low), true);
    hline(&mut out, &axes, agreement.loa_high, &format!("+1.96 SD {:.2}", agreement.loa_high), true);
    points(&mut out, &axes, &means, &diffs);
    out.push_str("</svg>\n");
    out
}
