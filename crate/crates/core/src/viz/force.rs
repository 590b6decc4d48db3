use std::fmt::Write;

use super::{
    check_finite, escape_xml, format_value, layout_segments, value_extent, NEGATIVE_COLOR,
    POSITIVE_COLOR,
};
use crate::error::{Error, Result};
use crate::estimators::Explanation;

pub const DEFAULT_FORCE_WIDTH: f64 = 900.0;
pub const DEFAULT_FORCE_HEIGHT: f64 = 120.0;
const MARGIN: f64 = 40.0;
const BAR_HEIGHT: f64 = 18.0;

/// A force plot layout: value `v` is drawn at `origin + scale · v` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcePlotSpec {
    pub explanation: Explanation,
    pub width: f64,
    pub height: f64,
    /// Pixels per unit of model output.
    pub scale: f64,
    /// Pixel position of the value 0.
    pub origin: f64,
}

impl ForcePlotSpec {
    pub fn new(explanation: Explanation, width: f64, height: f64, scale: f64, origin: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::RenderInput(format!("scale must be positive and finite, got {scale}")));
        }
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) || !origin.is_finite() {
            return Err(Error::RenderInput("canvas dimensions must be positive and finite".into()));
        }
        check_finite(&explanation)?;
        Ok(ForcePlotSpec {
            explanation,
            width,
            height,
            scale,
            origin,
        })
    }

    /// Chooses scale and origin so the whole plot fits the canvas with a
    /// fixed side margin.
    pub fn fit(explanation: Explanation, width: f64, height: f64) -> Result<Self> {
        check_finite(&explanation)?;
        let (lo, hi) = value_extent(&explanation);
        let usable = (width - 2.0 * MARGIN).max(1.0);
        let (scale, origin) = if hi > lo {
            let scale = usable / (hi - lo);
            (scale, MARGIN - scale * lo)
        } else {
            let scale = usable / 2.0_f64.max(2.0 * lo.abs());
            (scale, width / 2.0 - scale * lo)
        };
        ForcePlotSpec::new(explanation, width, height, scale, origin)
    }

    pub fn x_of(&self, value: f64) -> f64 {
        self.origin + self.scale * value
    }
}

/// Renders one prediction as a horizontal force plot. Each segment is a
/// `rect` with class `segment positive` or `segment negative` and a
/// `data-feature` attribute; the output and base value are vertical lines of
/// class `output-marker` and `base-marker`, and the value 0 is marked by the
/// `axis-origin` line.
pub fn render_force_plot(spec: &ForcePlotSpec) -> Result<String> {
    let e = &spec.explanation;
    check_finite(e)?;
    let (w, h) = (spec.width, spec.height);
    let bar_y = h / 2.0 - BAR_HEIGHT / 2.0;
    let out = e.output();

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r##"<line class="axis-origin" x1="{x:.6}" x2="{x:.6}" y1="0" y2="{h}" stroke="#bbb" stroke-dasharray="2,3"/>"##,
        x = spec.origin
    );
    let _ = writeln!(
        s,
        r##"<line class="axis" x1="0" x2="{w}" y1="{y:.6}" y2="{y:.6}" stroke="#ccc"/>"##,
        y = bar_y + BAR_HEIGHT
    );

    for (k, seg) in layout_segments(e).iter().enumerate() {
        let positive = seg.phi > 0.0;
        let x = spec.x_of(seg.start);
        let width = spec.scale * seg.phi.abs();
        let (class, fill) = if positive {
            ("positive", POSITIVE_COLOR)
        } else {
            ("negative", NEGATIVE_COLOR)
        };
        let name = &e.feature_names[seg.feature];
        let _ = writeln!(s, r#"<g class="feature" data-feature="{}">"#, seg.feature);
        let _ = writeln!(
            s,
            r##"<rect class="segment {class}" data-feature="{f}" x="{x:.6}" y="{bar_y:.6}" width="{width:.6}" height="{BAR_HEIGHT}" fill="{fill}" stroke="#fff" stroke-width="0.5"/>"##,
            f = seg.feature
        );
        // Alternate label rows so neighbouring labels do not overlap.
        let row = (k % 2) as f64;
        let label_y = if positive {
            bar_y - 6.0 - 12.0 * row
        } else {
            bar_y + BAR_HEIGHT + 14.0 + 12.0 * row
        };
        let _ = writeln!(
            s,
            r#"<text class="label" x="{:.6}" y="{label_y:.6}" text-anchor="middle" fill="{fill}">{} = {}</text>"#,
            x + width / 2.0,
            escape_xml(name),
            format_value(seg.phi)
        );
        let _ = writeln!(s, "</g>");
    }

    let base_x = spec.x_of(e.base_value);
    let _ = writeln!(
        s,
        r##"<line class="base-marker" x1="{base_x:.6}" x2="{base_x:.6}" y1="{:.6}" y2="{:.6}" stroke="#888" stroke-width="1"/>"##,
        bar_y - 4.0,
        bar_y + BAR_HEIGHT + 4.0
    );
    let _ = writeln!(
        s,
        r##"<text class="base-label" x="{base_x:.6}" y="{:.6}" text-anchor="middle" fill="#888">base value {}</text>"##,
        h - 4.0,
        format_value(e.base_value)
    );
    let out_x = spec.x_of(out);
    let _ = writeln!(
        s,
        r##"<line class="output-marker" x1="{out_x:.6}" x2="{out_x:.6}" y1="{:.6}" y2="{:.6}" stroke="#000" stroke-width="2"/>"##,
        bar_y - 8.0,
        bar_y + BAR_HEIGHT + 8.0
    );
    let _ = writeln!(
        s,
        r#"<text class="output-label" x="{out_x:.6}" y="12" text-anchor="middle" font-weight="bold">f(x) = {}</text>"#,
        format_value(out)
    );
    s.push_str("</svg>\n");
    Ok(s)
}
