use std::fmt::Write;

use super::{BenchEstimator, ConvergenceReport};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 130.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 44.0;

fn color(e: BenchEstimator) -> &'static str {
    match e {
        BenchEstimator::KernelLasso => "#1b9e77",
        BenchEstimator::Permutation => "#7570b3",
        BenchEstimator::Lime => "#d95f02",
    }
}

/// Mean line with a shaded 10th–90th percentile band per estimator against
/// log₂ budget, plus a dashed exact-value line.
pub(super) fn render_convergence_plot(report: &ConvergenceReport, feature: usize) -> String {
    let truth = report.truth[feature];
    let cells: Vec<_> = report.cells.iter().filter(|c| c.feature == feature).collect();

    let (mut lo, mut hi) = (truth, truth);
    for c in &cells {
        lo = lo.min(c.p10).min(c.mean);
        hi = hi.max(c.p90).max(c.mean);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 1.0 };
    let (lo, hi) = (lo - pad, hi + pad);

    let bmin = report.budgets.first().copied().unwrap_or(1).max(1) as f64;
    let bmax = report.budgets.last().copied().unwrap_or(1).max(1) as f64;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |b: usize| {
        let span = (bmax / bmin).log2();
        let t = if span > 0.0 { (b as f64 / bmin).log2() / span } else { 0.5 };
        MARGIN_LEFT + t * plot_w
    };
    let py = |v: f64| MARGIN_TOP + (hi - v) / (hi - lo) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{} feature {}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        crate::viz::escape_xml(&report.scenario),
        feature
    );
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#999"/>"##
    );
    for &b in &report.budgets {
        let x = px(b);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{b}</text>"#,
            HEIGHT - MARGIN_BOTTOM + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">model evaluations</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 8.0
    );
    for v in [lo + pad, hi - pad] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
            MARGIN_LEFT - 6.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r##"<line class="truth" x1="{MARGIN_LEFT}" x2="{:.2}" y1="{y:.2}" y2="{y:.2}" stroke="#000" stroke-dasharray="5,4"/>"##,
        MARGIN_LEFT + plot_w,
        y = py(truth)
    );

    for (k, e) in BenchEstimator::ALL.into_iter().enumerate() {
        let mut ec: Vec<_> = cells.iter().filter(|c| c.estimator == e).collect();
        ec.sort_by_key(|c| c.budget);
        let _ = writeln!(s, r#"<g class="estimator" data-name="{e}">"#);
        if !ec.is_empty() {
            let mut band: Vec<String> = ec.iter().map(|c| format!("{:.2},{:.2}", px(c.budget), py(c.p90))).collect();
            band.extend(ec.iter().rev().map(|c| format!("{:.2},{:.2}", px(c.budget), py(c.p10))));
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{}" fill-opacity="0.2" stroke="none"/>"#,
                band.join(" "),
                color(e)
            );
            let line: Vec<String> = ec.iter().map(|c| format!("{:.2},{:.2}", px(c.budget), py(c.mean))).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
                line.join(" "),
                color(e)
            );
        }
        let ly = MARGIN_TOP + 14.0 + 18.0 * k as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{e}</text>"#,
            lx + 18.0,
            color(e),
            lx + 24.0,
            ly + 4.0
        );
        let _ = writeln!(s, "</g>");
    }
    let ly = MARGIN_TOP + 14.0 + 18.0 * 3.0;
    let lx = WIDTH - MARGIN_RIGHT + 12.0;
    let _ = writeln!(
        s,
        r##"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="#000" stroke-dasharray="5,4"/><text x="{}" y="{}">exact</text>"##,
        lx + 18.0,
        lx + 24.0,
        ly + 4.0
    );
    s.push_str("</svg>\n");
    s
}
