//! Standalone SVG renderings of explanations: single-prediction force plots
//! and similarity-ordered stacks of rotated force plots.
//!
//! Positive attributions are drawn in `#ff0d57` and negative ones in
//! `#1e88e5`. Within a plot the positive block ends at the model output and
//! the negative block starts there, so together they span from the base
//! value to `f(x)`; segments are ordered by decreasing magnitude with the
//! largest next to the output.

mod force;
mod order;
mod stack;

pub use force::{render_force_plot, ForcePlotSpec, DEFAULT_FORCE_HEIGHT, DEFAULT_FORCE_WIDTH};
pub use order::order_by_similarity;
pub use stack::{render_stack_plot, StackPlotSpec, DEFAULT_STACK_HEIGHT, DEFAULT_STACK_WIDTH};

use crate::error::{Error, Result};
use crate::estimators::Explanation;

pub const POSITIVE_COLOR: &str = "#ff0d57";
pub const NEGATIVE_COLOR: &str = "#1e88e5";

/// Escapes the five XML special characters.
pub fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Compact number text for labels: four significant digits, no trailing zeros.
pub(crate) fn format_value(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let digits = (3 - v.abs().log10().floor() as i32).clamp(0, 12) as usize;
    let s = format!("{v:.digits$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn check_finite(e: &Explanation) -> Result<()> {
    if !e.base_value.is_finite() || e.phi.iter().any(|p| !p.is_finite()) {
        return Err(Error::RenderInput("explanation contains non-finite values".into()));
    }
    if e.feature_names.len() != e.phi.len() {
        return Err(Error::RenderInput(format!(
            "{} feature names for {} attributions",
            e.feature_names.len(),
            e.phi.len()
        )));
    }
    Ok(())
}

/// One drawn segment in value space.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Segment {
    pub feature: usize,
    pub phi: f64,
    pub start: f64,
    pub end: f64,
}

/// Value-space layout of a force plot: positives stacked leftwards from the
/// output, negatives rightwards from it. Zero attributions are omitted.
pub(crate) fn layout_segments(e: &Explanation) -> Vec<Segment> {
    let out = e.output();
    let by_magnitude = |positive: bool| {
        let mut idx: Vec<usize> = (0..e.phi.len())
            .filter(|&i| if positive { e.phi[i] > 0.0 } else { e.phi[i] < 0.0 })
            .collect();
        idx.sort_by(|&a, &b| e.phi[b].abs().total_cmp(&e.phi[a].abs()).then(a.cmp(&b)));
        idx
    };
    let mut segments = Vec::new();
    let mut cursor = out;
    for i in by_magnitude(true) {
        segments.push(Segment {
            feature: i,
            phi: e.phi[i],
            start: cursor - e.phi[i],
            end: cursor,
        });
        cursor -= e.phi[i];
    }
    let mut cursor = out;
    for i in by_magnitude(false) {
        segments.push(Segment {
            feature: i,
            phi: e.phi[i],
            start: cursor,
            end: cursor - e.phi[i],
        });
        cursor -= e.phi[i];
    }
    segments
}

/// Smallest and largest values a force plot of `e` touches.
pub(crate) fn value_extent(e: &Explanation) -> (f64, f64) {
    let out = e.output();
    let (mut lo, mut hi) = (e.base_value.min(out), e.base_value.max(out));
    for s in layout_segments(e) {
        lo = lo.min(s.start);
        hi = hi.max(s.end);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape_xml(r#"a<b & "c">'"#), "a&lt;b &amp; &quot;c&quot;&gt;&apos;");
    }

    #[test]
    fn formats_compactly() {
        assert_eq!(format_value(0.25), "0.25");
        assert_eq!(format_value(-2.5), "-2.5");
        assert_eq!(format_value(1234.567), "1235");
        assert_eq!(format_value(0.000123456), "0.0001235");
        assert_eq!(format_value(0.0), "0");
    }

    #[test]
    fn segments_span_base_to_output() {
        let e = Explanation::new(0.1, vec![0.25, -0.05, 0.0, 0.5], "exact", 0, 0);
        let segs = layout_segments(&e);
        assert_eq!(segs.iter().map(|s| s.feature).collect::<Vec<_>>(), vec![3, 0, 1]);
        let (lo, hi) = value_extent(&e);
        assert!((lo - 0.05).abs() < 1e-12 && (hi - 0.85).abs() < 1e-12);
    }
}
