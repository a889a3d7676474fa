//! Minimal SVG line plots for reports.

use std::fmt::Write as _;

use super::report::ExperimentReport;
use crate::flow::FlowTrace;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series], log_y: bool) -> String {
    let tf = |y: f64| if log_y { y.log10() } else { y };
    let pts = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_y || *y > 0.0));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(tf(y));
        y1 = y1.max(tf(y));
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (tf(y) - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let px = MARGIN + (W - 2.0 * MARGIN) * k as f64 / 4.0;
        let py = H - MARGIN - (H - 2.0 * MARGIN) * k as f64 / 4.0;
        let ylab = if log_y { format!("1e{fy:.1}") } else { format!("{fy:.3}") };
        let _ = writeln!(s, r#"<text x="{px}" y="{}" text-anchor="middle">{fx:.2}</text>"#, H - MARGIN + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{ylab}</text>"#, MARGIN - 4.0, py + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    for (i, series) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = series
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_y || *y > 0.0))
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if !path.is_empty() {
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - MARGIN - 150.0,
            MARGIN + 16.0 * (i as f64 + 1.0),
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `(file name, SVG)` pairs for a report: `Y` on a log scale, `λ` and `μ`
/// against time, and `R − 1` profiles of the stored snapshots.
pub fn report_plots(report: &ExperimentReport) -> Vec<(String, String)> {
    let Some(trace) = &report.trace else {
        return Vec::new();
    };
    let mut out = vec![(
        "y.svg".to_string(),
        line_plot(
            "Y = ∫|∇u|² ω",
            "t",
            "Y (log)",
            &[Series {
                label: "Y".into(),
                points: trace.records.iter().map(|r| (r.t, r.y)).collect(),
            }],
            true,
        ),
    )];
    let eig = |f: fn(&crate::flow::FlowRecord) -> Option<f64>| -> Vec<(f64, f64)> {
        trace.records.iter().filter_map(|r| f(r).map(|v| (r.t, v))).collect()
    };
    out.push((
        "spectrum.svg".to_string(),
        line_plot(
            "lowest positive eigenvalues",
            "t",
            "eigenvalue",
            &[
                Series {
                    label: "λ (vector fields)".into(),
                    points: eig(|r| r.lambda),
                },
                Series {
                    label: "μ (weighted Poincaré)".into(),
                    points: eig(|r| r.mu),
                },
            ],
            false,
        ),
    ));
    out.push(("curvature_profiles.svg".to_string(), profile_plot(trace)));
    out
}

fn profile_plot(trace: &FlowTrace) -> String {
    let series: Vec<Series> = trace
        .snapshots
        .iter()
        .filter_map(|snap| {
            let s = snap.state().ok()?;
            let pts = s
                .grid()
                .nodes()
                .iter()
                .zip(s.curvature())
                .map(|(x, r)| (*x, r - 1.0))
                .collect();
            Some(Series {
                label: format!("t = {:.2}", snap.t),
                points: pts,
            })
        })
        .collect();
    line_plot("R − 1 along the meridian", "moment coordinate x", "R − 1", &series, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_is_well_formed() {
        let s = line_plot(
            "a < b",
            "t",
            "y",
            &[Series {
                label: "e^-t".into(),
                points: (0..10).map(|k| (k as f64, (-(k as f64)).exp())).collect(),
            }],
            true,
        );
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a &lt; b") && s.contains("<polyline"));
    }
}
