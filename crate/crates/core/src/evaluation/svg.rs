//! Grouped bar chart of a report: relative mass accuracy of the trained
//! schemes on top, absolute mass accuracy of every scheme below.

use std::fmt::Write as _;

use super::BenchmarkReport;
use crate::attribution::Method;
use crate::model::TrainScheme;

const WIDTH: f64 = 960.0;
const PANEL_HEIGHT: f64 = 260.0;
const LEFT: f64 = 60.0;
const TOP: f64 = 30.0;
const GAP: f64 = 110.0;
const PALETTE: [&str; 4] = ["#9e9e9e", "#4e79a7", "#f28e2b", "#59a14f"];

fn color(scheme: TrainScheme) -> &'static str {
    PALETTE[TrainScheme::LADDER.iter().position(|&s| s == scheme).unwrap_or(0)]
}

struct Panel<'a> {
    title: &'a str,
    y0: f64,
    y_max: f64,
    /// Horizontal reference line.
    reference: Option<f64>,
}

fn panel(
    out: &mut String,
    p: &Panel<'_>,
    methods: &[Method],
    schemes: &[TrainScheme],
    value: impl Fn(TrainScheme, Method) -> Option<(f64, f64)>,
) {
    let plot_w = WIDTH - LEFT - 20.0;
    let group_w = plot_w / methods.len().max(1) as f64;
    let bar_w = group_w * 0.8 / schemes.len().max(1) as f64;
    let y = |v: f64| p.y0 + PANEL_HEIGHT * (1.0 - (v / p.y_max).clamp(0.0, 1.0));
    let _ = writeln!(
        out,
        r#"<text x="{LEFT}" y="{:.1}" font-size="14" font-weight="bold">{}</text>"#,
        p.y0 - 8.0,
        p.title
    );
    for i in 0..=4 {
        let v = p.y_max * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#e0e0e0"/><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.2}</text>"##,
            LEFT + plot_w,
            y(v),
            y(v),
            LEFT - 4.0,
            y(v) + 3.0
        );
    }
    if let Some(r) = p.reference {
        let _ = writeln!(
            out,
            r#"<line x1="{LEFT}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="black" stroke-dasharray="4 3"/>"#,
            LEFT + plot_w,
            y(r),
            y(r)
        );
    }
    for (mi, &m) in methods.iter().enumerate() {
        let gx = LEFT + group_w * mi as f64 + group_w * 0.1;
        for (si, &s) in schemes.iter().enumerate() {
            let Some((v, err)) = value(s, m) else { continue };
            let x = gx + bar_w * si as f64;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}"><title>{s} {m}: {v:.4}</title></rect>"#,
                y(v),
                bar_w * 0.9,
                y(0.0) - y(v),
                color(s)
            );
            if err > 0.0 {
                let cx = x + bar_w * 0.45;
                let _ = writeln!(
                    out,
                    r#"<line x1="{cx:.1}" x2="{cx:.1}" y1="{:.1}" y2="{:.1}" stroke="black"/>"#,
                    y(v - err),
                    y(v + err)
                );
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end" transform="rotate(-35 {:.1} {:.1})">{}</text>"#,
            gx + group_w * 0.4,
            y(0.0) + 14.0,
            gx + group_w * 0.4,
            y(0.0) + 14.0,
            m.id()
        );
    }
}

pub fn render_svg(report: &BenchmarkReport) -> String {
    let mut methods: Vec<Method> = report.cells.iter().map(|c| c.method).collect();
    methods.sort();
    methods.dedup();
    let mut schemes: Vec<TrainScheme> = report.cells.iter().map(|c| c.scheme).collect();
    schemes.sort();
    schemes.dedup();
    let trained: Vec<TrainScheme> = schemes
        .iter()
        .copied()
        .filter(|&s| s != report.metadata.baseline)
        .collect();

    let rma_max = report.cells.iter().filter_map(|c| c.rma).fold(1.0f64, f64::max) * 1.1;
    let height = TOP + 2.0 * PANEL_HEIGHT + 2.0 * GAP;
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif">"#
    );
    out.push('\n');
    panel(
        &mut out,
        &Panel {
            title: &format!("relative mass accuracy vs {}", report.metadata.baseline),
            y0: TOP,
            y_max: rma_max,
            reference: Some(1.0),
        },
        &methods,
        &trained,
        |s, m| report.cell(s, m).and_then(|c| c.rma).map(|v| (v, 0.0)),
    );
    panel(
        &mut out,
        &Panel {
            title: "mass accuracy",
            y0: TOP + PANEL_HEIGHT + GAP,
            y_max: 1.0,
            reference: None,
        },
        &methods,
        &schemes,
        |s, m| report.cell(s, m).map(|c| (c.mean_ma, c.std_ma)),
    );
    for (i, &s) in schemes.iter().enumerate() {
        let x = LEFT + 80.0 * i as f64;
        let y = height - 16.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{y:.1}" font-size="12">{s}</text>"#,
            y - 10.0,
            color(s),
            x + 16.0
        );
    }
    out.push_str("</svg>\n");
    out
}
