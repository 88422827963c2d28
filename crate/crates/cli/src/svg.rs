//! Deterministic SVG rendering of ROC curves.

use std::fmt::Write;

use causal_mia::estimators::DpBound;
use causal_mia::RocCurve;

const SIZE: f64 = 400.0;
const MARGIN: f64 = 50.0;
const LEGEND: f64 = 190.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

fn px(fpr: f64) -> f64 {
    MARGIN + fpr * SIZE
}

fn py(tpr: f64) -> f64 {
    MARGIN + (1.0 - tpr) * SIZE
}

fn polyline(out: &mut String, pts: impl Iterator<Item = (f64, f64)>, stroke: &str, extra: &str) {
    let coords: Vec<String> = pts.map(|(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
    let _ = writeln!(out, r#"<polyline fill="none" stroke="{stroke}" stroke-width="1.5"{extra} points="{}"/>"#, coords.join(" "));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Overlays `curves` on the chance diagonal, plus the DP bound when given.
/// The same input always yields the same bytes.
pub fn render_roc(curves: &[(String, RocCurve)], bound: Option<&DpBound>) -> String {
    let width = 2.0 * MARGIN + SIZE + LEGEND;
    let height = 2.0 * MARGIN + SIZE;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(s, r##"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="#444"/>"##);
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{v}</text>"#, px(v), MARGIN + SIZE + 16.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v}</text>"#, MARGIN - 6.0, py(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">FPR</text>"#, px(0.5), height - 10.0);
    let _ = writeln!(s, r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">TPR</text>"#, py(0.5), py(0.5));
    polyline(&mut s, [(0.0, 0.0), (1.0, 1.0)].into_iter(), "#999", r#" stroke-dasharray="4 4""#);

    let mut legend: Vec<(String, String, bool)> = Vec::new();
    if let Some(b) = bound {
        polyline(&mut s, b.points.iter().copied(), "#000", r#" stroke-dasharray="8 3""#);
        legend.push((format!("DP bound ({}, {})", b.epsilon, b.delta), "#000".into(), true));
    }
    for (i, (label, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        polyline(&mut s, curve.points.iter().map(|p| (p.fpr, p.tpr)), color, "");
        legend.push((format!("{label} (AUC {:.3})", curve.auc()), color.into(), false));
    }
    for (i, (label, color, dashed)) in legend.iter().enumerate() {
        let y = MARGIN + 10.0 + 18.0 * i as f64;
        let x = MARGIN + SIZE + 12.0;
        let dash = if *dashed { r#" stroke-dasharray="8 3""# } else { "" };
        let _ = writeln!(s, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/>"#, x + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x + 26.0, y + 4.0, escape(label));
    }
    s.push_str("</svg>\n");
    s
}
