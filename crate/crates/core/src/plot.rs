//! Plain SVG output: one annotated signal chart per parameter and a
//! confusion heat table per model kind.
//!
//! Charts record their vertical mapping as `data-y-transform="a b"` on the
//! root element, where a data value `v` is drawn at `y = a·v + b`. Tests and
//! downstream tools can invert it to read threshold values back out.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::domain::{HealthLabel, ParameterKind};
use crate::eval::EvaluationReport;
use crate::ingest::format_timestamp;
use crate::models::ModelKind;
use crate::synth::InjectionRecord;
use crate::thresholds::LabeledSeries;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const FIXED_COLOUR: &str = "red";
const ADAPTIVE_COLOUR: &str = "orange";
const SIGNAL_COLOUR: &str = "steelblue";
const EARLY_COLOUR: &str = "goldenrod";
const CRITICAL_COLOUR: &str = "darkred";

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(ch),
        }
    }
    out
}

/// Affine map `y = a·v + b` from data units to pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YTransform {
    pub a: f64,
    pub b: f64,
}

impl YTransform {
    fn fit(lo: f64, hi: f64) -> Self {
        let (lo, hi) = if hi > lo {
            let pad = (hi - lo) * 0.05;
            (lo - pad, hi + pad)
        } else {
            let pad = lo.abs().max(1.0) * 0.05;
            (lo - pad, hi + pad)
        };
        let plot_h = HEIGHT - TOP - BOTTOM;
        let a = -plot_h / (hi - lo);
        YTransform {
            a,
            b: TOP + plot_h - a * lo,
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        self.a * v + self.b
    }

    pub fn invert(&self, y: f64) -> f64 {
        (y - self.b) / self.a
    }

    /// Reads the `data-y-transform` attribute back from an emitted chart.
    pub fn parse_from_svg(svg: &str) -> Option<Self> {
        let start = svg.find("data-y-transform=\"")? + "data-y-transform=\"".len();
        let rest = &svg[start..];
        let attr = &rest[..rest.find('"')?];
        let mut parts = attr.split_whitespace().map(str::parse::<f64>);
        let a = parts.next()?.ok()?;
        let b = parts.next()?.ok()?;
        Some(YTransform { a, b })
    }
}

/// Renders the annotated chart for one parameter. Readings listed in
/// `injections` for this parameter get `data-injected="true"` on their marker.
pub fn signal_svg(
    labeled: &LabeledSeries,
    p: ParameterKind,
    injections: &[InjectionRecord],
) -> String {
    let readings = labeled.base.readings();
    let values: Vec<f64> = labeled.base.values(p).collect();
    let pair = labeled.thresholds_used.pair(p);
    let rolling = labeled.rolling_adaptive.as_ref().map(|r| &r[p]);

    let mut lo = values.iter().copied().fold(pair.adaptive, f64::min);
    let mut hi = values.iter().copied().fold(pair.fixed, f64::max);
    if let Some(r) = rolling {
        lo = r.iter().copied().fold(lo, f64::min);
        hi = r.iter().copied().fold(hi, f64::max);
    }
    let yt = YTransform::fit(lo, hi);

    let plot_w = WIDTH - LEFT - RIGHT;
    let x_end = LEFT + plot_w;
    let n = values.len();
    let x_of = |i: usize| {
        if n <= 1 {
            LEFT + plot_w / 2.0
        } else {
            LEFT + plot_w * i as f64 / (n - 1) as f64
        }
    };
    let injected: BTreeSet<usize> = injections
        .iter()
        .filter(|r| r.parameter == p)
        .map(|r| r.index)
        .collect();

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-parameter="{}" data-y-transform="{} {}">"#,
        p.name(),
        yt.a,
        yt.b
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text class="title" x="{}" y="24" text-anchor="middle" font-size="16">{} with fixed and adaptive thresholds</text>"#,
        LEFT + plot_w / 2.0,
        p.title()
    );

    // Axes, ticks and labels.
    let y_base = HEIGHT - BOTTOM;
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{y_base}" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{LEFT}" y1="{y_base}" x2="{x_end}" y2="{y_base}" stroke="black"/>"#
    );
    let (v_lo, v_hi) = (yt.invert(y_base), yt.invert(TOP));
    for k in 0..=4 {
        let v = v_lo + (v_hi - v_lo) * k as f64 / 4.0;
        let y = yt.apply(v);
        let _ = writeln!(
            s,
            r#"<line class="tick" x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end" font-size="11">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            tick_label(v)
        );
    }
    if let (Some(first), Some(last)) = (readings.first(), readings.last()) {
        let _ = writeln!(
            s,
            r#"<text x="{LEFT}" y="{}" font-size="11">{}</text>"#,
            y_base + 16.0,
            format_timestamp(&first.timestamp)
        );
        let _ = writeln!(
            s,
            r#"<text x="{x_end}" y="{}" text-anchor="end" font-size="11">{}</text>"#,
            y_base + 16.0,
            format_timestamp(&last.timestamp)
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="{}" y="{}" text-anchor="middle" font-size="13">Time (UTC)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 16.0
    );
    let mid_y = TOP + (y_base - TOP) / 2.0;
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="20" y="{mid_y}" text-anchor="middle" font-size="13" transform="rotate(-90 20 {mid_y})">{} ({})</text>"#,
        p.title(),
        p.unit()
    );

    // Signal.
    s.push_str(r#"<polyline class="signal" fill="none" stroke=""#);
    s.push_str(SIGNAL_COLOUR);
    s.push_str(r#"" stroke-width="1" points=""#);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{:.2},{:.2}", x_of(i), yt.apply(*v));
    }
    s.push_str("\"/>\n");

    // Threshold lines.
    let fy = yt.apply(pair.fixed);
    let _ = writeln!(
        s,
        r#"<line class="threshold-fixed" x1="{LEFT}" y1="{fy}" x2="{x_end}" y2="{fy}" stroke="{FIXED_COLOUR}" stroke-width="2" data-value="{}"/>"#,
        pair.fixed
    );
    let ay = yt.apply(pair.adaptive);
    let _ = writeln!(
        s,
        r#"<line class="threshold-adaptive" x1="{LEFT}" y1="{ay}" x2="{x_end}" y2="{ay}" stroke="{ADAPTIVE_COLOUR}" stroke-width="2" stroke-dasharray="6 4" data-value="{}"/>"#,
        pair.adaptive
    );
    if let Some(r) = rolling {
        s.push_str(r#"<polyline class="threshold-rolling" fill="none" stroke=""#);
        s.push_str(ADAPTIVE_COLOUR);
        s.push_str(r#"" stroke-width="1" points=""#);
        for (i, v) in r.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{:.2},{:.2}", x_of(i), yt.apply(*v));
        }
        s.push_str("\"/>\n");
    }

    // Markers; critical drawn last so they sit on top.
    for (label, class, colour, r) in [
        (
            HealthLabel::EarlyWarning,
            "marker early-warning",
            EARLY_COLOUR,
            2.5,
        ),
        (
            HealthLabel::CriticalAlert,
            "marker critical",
            CRITICAL_COLOUR,
            4.0,
        ),
    ] {
        for (i, l) in labeled.labels_for(p).enumerate() {
            if l != label {
                continue;
            }
            let extra = if injected.contains(&i) {
                r#" data-injected="true""#
            } else {
                ""
            };
            let _ = writeln!(
                s,
                r#"<circle class="{class}" cx="{:.2}" cy="{:.2}" r="{r}" fill="{colour}"{extra}/>"#,
                x_of(i),
                yt.apply(values[i])
            );
        }
    }

    // Legend.
    let lx = x_end + 20.0;
    let entries: [(&str, &str); 5] = [
        ("Signal", SIGNAL_COLOUR),
        ("Fixed threshold", FIXED_COLOUR),
        ("Adaptive threshold", ADAPTIVE_COLOUR),
        ("Early warning", EARLY_COLOUR),
        ("Critical alert", CRITICAL_COLOUR),
    ];
    let _ = writeln!(s, r#"<g class="legend">"#);
    for (k, (name, colour)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 22.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{y}" width="14" height="10" fill="{colour}"/><text x="{}" y="{}" font-size="12">{name}</text>"#,
            lx + 20.0,
            y + 9.0
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Heat table with one 3×3 panel per parameter evaluated for `approach`.
/// Cell shading is the row-normalised count, so each true class reads as a
/// distribution over predictions.
pub fn confusion_svg(report: &EvaluationReport, approach: ModelKind) -> String {
    let entries: Vec<_> = report
        .entries
        .iter()
        .filter(|e| e.approach == approach)
        .collect();
    const CELL: f64 = 44.0;
    const PANEL_W: f64 = 3.0 * CELL + 110.0;
    const PANEL_H: f64 = 3.0 * CELL + 90.0;
    let width = PANEL_W * entries.len().max(1) as f64 + 60.0;
    let height = PANEL_H + 40.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" data-approach="{}">"#,
        approach.name()
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text class="title" x="{}" y="22" text-anchor="middle" font-size="16">{} confusion matrices (rows: true, columns: predicted)</text>"#,
        width / 2.0,
        approach.approach()
    );
    let short = ["N", "EW", "CA"];
    for (k, e) in entries.iter().enumerate() {
        let ox = 10.0 + PANEL_W * k as f64 + 90.0;
        let oy = 70.0;
        let _ = writeln!(
            s,
            r#"<g class="panel" data-parameter="{}"><text x="{}" y="{}" text-anchor="middle" font-size="13">{} ({})</text>"#,
            e.parameter.name(),
            ox + 1.5 * CELL,
            oy - 22.0,
            e.parameter.title(),
            escape(&e.dataset)
        );
        for c in 0..3 {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">{}</text>"#,
                ox + (c as f64 + 0.5) * CELL,
                oy - 6.0,
                short[c]
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end" font-size="11">{}</text>"#,
                ox - 6.0,
                oy + (c as f64 + 0.5) * CELL + 4.0,
                short[c]
            );
        }
        for r in 0..3 {
            let row_total = e.confusion.row_sum(r);
            for c in 0..3 {
                let count = e.confusion.counts[r][c];
                let share = if row_total == 0 {
                    0.0
                } else {
                    count as f64 / row_total as f64
                };
                // White for 0 through to a dark blue for the whole row.
                let shade = |full: f64| (255.0 - (255.0 - full) * share).round() as u8;
                let fill = format!("rgb({},{},{})", shade(8.0), shade(48.0), shade(107.0));
                let text = if share > 0.5 { "white" } else { "black" };
                let x = ox + c as f64 * CELL;
                let y = oy + r as f64 * CELL;
                let _ = writeln!(
                    s,
                    r#"<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="gray" data-row="{r}" data-col="{c}" data-count="{count}"/><text x="{}" y="{}" text-anchor="middle" font-size="12" fill="{text}">{count}</text>"#,
                    x + CELL / 2.0,
                    y + CELL / 2.0 + 4.0
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">accuracy {:.4}, macro F1 {:.4}</text></g>"#,
            ox + 1.5 * CELL,
            oy + 3.0 * CELL + 20.0,
            e.metrics.accuracy,
            e.metrics.macro_avg.f1
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{PerParameter, SensorReading, SensorSeries, ThresholdPair};
    use crate::thresholds::{label_series, ThresholdSet};
    use chrono::{TimeZone, Utc};

    fn labeled(pressure: &[f64]) -> LabeledSeries {
        let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let series = SensorSeries::new(
            pressure
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    SensorReading::new(
                        t0 + chrono::Duration::minutes(i as i64),
                        PerParameter::from_array([1.0, 40.0, 2500.0, v, 220.0]),
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap();
        let set = ThresholdSet {
            pairs: PerParameter::from_fn(|p| {
                let fixed = crate::thresholds::DEFAULT_FIXED[p];
                ThresholdPair::new(p, fixed, fixed * 0.95).unwrap()
            }),
            clamped: vec![],
        };
        label_series(&series, &set).0
    }

    #[test]
    fn constant_series_has_no_markers() {
        let svg = signal_svg(&labeled(&[4.0; 20]), ParameterKind::Pressure, &[]);
        assert!(!svg.contains("class=\"marker"));
        assert!(svg.contains("Pressure (bar)"));
    }

    #[test]
    fn transform_round_trips() {
        let svg = signal_svg(
            &labeled(&[4.0, 5.0, 7.0, 4.2]),
            ParameterKind::Pressure,
            &[],
        );
        let t = YTransform::parse_from_svg(&svg).unwrap();
        assert!((t.invert(t.apply(6.0)) - 6.0).abs() < 1e-9);
        assert!(t.a < 0.0);
        assert_eq!(svg.matches("class=\"marker critical\"").count(), 1);
        assert_eq!(svg.matches("class=\"marker early-warning\"").count(), 0);
    }

    #[test]
    fn escape_special_characters() {
        assert_eq!(escape("a<b&\"c\">"), "a&lt;b&amp;&quot;c&quot;&gt;");
    }
}
