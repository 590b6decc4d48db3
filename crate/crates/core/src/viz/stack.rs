use std::fmt::Write;

use super::{check_finite, escape_xml, format_value, layout_segments, value_extent, NEGATIVE_COLOR, POSITIVE_COLOR};
use crate::error::{Error, Result};
use crate::estimators::Explanation;

pub const DEFAULT_STACK_WIDTH: f64 = 900.0;
pub const DEFAULT_STACK_HEIGHT: f64 = 350.0;
const MARGIN_X: f64 = 50.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 20.0;

/// Explanations drawn as vertical force columns in `order`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackPlotSpec {
    pub explanations: Vec<Explanation>,
    /// Column `k` shows `explanations[order[k]]`.
    pub order: Vec<usize>,
    pub column_width: f64,
    pub height: f64,
}

impl StackPlotSpec {
    pub fn new(explanations: Vec<Explanation>, order: Vec<usize>, column_width: f64, height: f64) -> Result<Self> {
        let n = explanations.len();
        if n == 0 {
            return Err(Error::RenderInput("no explanations to stack".into()));
        }
        let m = explanations[0].phi.len();
        if let Some(bad) = explanations.iter().find(|e| e.phi.len() != m) {
            return Err(Error::InputShape {
                what: "explanation attributions",
                expected: m,
                actual: bad.phi.len(),
            });
        }
        for e in &explanations {
            check_finite(e)?;
        }
        let mut seen = vec![false; n];
        if order.len() != n || !order.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true)) {
            return Err(Error::RenderInput("ordering is not a permutation of the explanations".into()));
        }
        if !(column_width > 0.0 && column_width.is_finite() && height > MARGIN_TOP + MARGIN_BOTTOM && height.is_finite()) {
            return Err(Error::RenderInput("canvas dimensions too small".into()));
        }
        Ok(StackPlotSpec {
            explanations,
            order,
            column_width,
            height,
        })
    }

    /// Divides `width` evenly among the columns.
    pub fn fit(explanations: Vec<Explanation>, order: Vec<usize>, width: f64, height: f64) -> Result<Self> {
        let n = explanations.len().max(1) as f64;
        StackPlotSpec::new(explanations, order, (width - 2.0 * MARGIN_X) / n, height)
    }

    pub fn width(&self) -> f64 {
        2.0 * MARGIN_X + self.column_width * self.explanations.len() as f64
    }

    /// Pixels per unit of output and the pixel row of the value 0, shared by
    /// every column.
    pub fn vertical_scale(&self) -> (f64, f64) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for e in &self.explanations {
            let (l, h) = value_extent(e);
            lo = lo.min(l);
            hi = hi.max(h);
        }
        let usable = self.height - MARGIN_TOP - MARGIN_BOTTOM;
        if hi > lo {
            let scale = usable / (hi - lo);
            (scale, MARGIN_TOP + scale * hi)
        } else {
            let scale = usable / 2.0_f64.max(2.0 * lo.abs());
            (scale, self.height / 2.0 + scale * lo)
        }
    }
}

/// Renders each explanation as a vertical force plot, one `g.column` per
/// explanation translated horizontally, all sharing one vertical scale.
pub fn render_stack_plot(spec: &StackPlotSpec) -> Result<String> {
    let w = spec.width();
    let h = spec.height;
    let cw = spec.column_width;
    let (scale, zero_y) = spec.vertical_scale();
    let y_of = |v: f64| zero_y - scale * v;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(
        s,
        r##"<line class="axis-origin" x1="{MARGIN_X}" x2="{:.6}" y1="{zero_y:.6}" y2="{zero_y:.6}" stroke="#bbb" stroke-dasharray="2,3"/>"##,
        w - MARGIN_X
    );
    let mut trace = Vec::with_capacity(spec.order.len());
    for (k, &idx) in spec.order.iter().enumerate() {
        let e = &spec.explanations[idx];
        let x = MARGIN_X + cw * k as f64;
        let _ = writeln!(
            s,
            r#"<g class="column" data-index="{idx}" transform="translate({x:.6},0)">"#
        );
        for seg in layout_segments(e) {
            let (class, fill) = if seg.phi > 0.0 {
                ("positive", POSITIVE_COLOR)
            } else {
                ("negative", NEGATIVE_COLOR)
            };
            let _ = writeln!(
                s,
                r#"<rect class="segment {class}" data-feature="{f}" x="0" y="{:.6}" width="{cw:.6}" height="{:.6}" fill="{fill}"><title>{} = {}</title></rect>"#,
                y_of(seg.end),
                scale * seg.phi.abs(),
                escape_xml(&e.feature_names[seg.feature]),
                format_value(seg.phi),
                f = seg.feature
            );
        }
        let _ = writeln!(
            s,
            r##"<line class="base-marker" x1="0" x2="{cw:.6}" y1="{y:.6}" y2="{y:.6}" stroke="#888"/>"##,
            y = y_of(e.base_value)
        );
        let out_y = y_of(e.output());
        let _ = writeln!(
            s,
            r##"<line class="output-marker" x1="0" x2="{cw:.6}" y1="{out_y:.6}" y2="{out_y:.6}" stroke="#000"/>"##
        );
        let _ = writeln!(s, "</g>");
        trace.push(format!("{:.6},{out_y:.6}", x + cw / 2.0));
    }
    let _ = writeln!(
        s,
        r##"<polyline class="output-trace" points="{}" fill="none" stroke="#000" stroke-width="1"/>"##,
        trace.join(" ")
    );
    let base = spec.explanations[spec.order[0]].base_value;
    let _ = writeln!(
        s,
        r##"<text class="base-label" x="{:.6}" y="{:.6}" text-anchor="end" fill="#888">{}</text>"##,
        MARGIN_X - 4.0,
        y_of(base) + 3.0,
        format_value(base)
    );
    s.push_str("</svg>\n");
    Ok(s)
}
