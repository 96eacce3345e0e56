//! Hand-written SVG overlays. Output bytes depend only on the inputs.

use std::fmt::Write as _;

use eegemd::{Error, Result};

const WIDTH: f64 = 1000.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

/// Colours handed out in order when a series has none.
pub const PALETTE: [&str; 6] = ["#000000", "#ff7f0e", "#2ca02c", "#d62728", "#1f77b4", "#9467bd"];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    pub color: String,
    pub values: Vec<f64>,
}

impl PlotSeries {
    pub fn new(label: impl Into<String>, color: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            color: color.into(),
            values,
        }
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
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

/// Round step (1, 2 or 5 × 10^k) giving about `target` ticks over `span`.
fn tick_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64, target: f64) -> Vec<f64> {
    let step = tick_step(hi - lo, target);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(v: f64) -> String {
    let s = format!("{:.3}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Overlay `series` sampled at `rate_hz` on a time axis in seconds and an
/// amplitude axis in microvolts.
pub fn render_svg(title: &str, rate_hz: f64, series: &[PlotSeries]) -> Result<String> {
    let first = series
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to plot".into()))?;
    let n = first.values.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, found: n });
    }
    for s in series {
        if s.values.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: s.values.len(),
            });
        }
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("series `{}` has non-finite values", s.label)));
        }
    }
    let (mut lo, mut hi) = series
        .iter()
        .flat_map(|s| s.values.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let duration = (n - 1) as f64 / rate_hz;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |t: f64| LEFT + t / duration * plot_w;
    let py = |v: f64| TOP + (hi - v) / (hi - lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    let _ = writeln!(svg, r##"<g class="axes" stroke="#444444" fill="none">"##);
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}"/>"#
    );
    for t in ticks(0.0, duration, 8.0) {
        let x = px(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}"/>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0
        );
    }
    for v in ticks(lo, hi, 6.0) {
        let y = py(v);
        let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}"/>"#, LEFT - 5.0);
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, r##"<g class="tick-labels" fill="#222222">"##);
    for t in ticks(0.0, duration, 8.0) {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(t),
            TOP + plot_h + 18.0,
            label(t)
        );
    }
    for v in ticks(lo, hi, 6.0) {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            py(v) + 4.0,
            label(v)
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">time (s)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">amplitude (µV)</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    for s in series {
        let mut points = String::with_capacity(n * 16);
        for (i, &v) in s.values.iter().enumerate() {
            if i > 0 {
                points.push(' ');
            }
            let _ = write!(points, "{:.2},{:.2}", px(i as f64 / rate_hz), py(v));
        }
        let _ = writeln!(
            svg,
            r#"<polyline data-label="{}" fill="none" stroke="{}" stroke-width="1.2" points="{points}"/>"#,
            escape(&s.label),
            escape(&s.color)
        );
    }
    let _ = writeln!(svg, r#"<g class="legend">"#);
    for (k, s) in series.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * k as f64;
        let x = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/>"#,
            x + 20.0,
            escape(&s.color)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            x + 26.0,
            y + 4.0,
            escape(&s.label)
        );
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(n: usize, f: f64) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * f).sin()).collect()
    }

    #[test]
    fn deterministic_and_counted() {
        let series: Vec<PlotSeries> = (0..4)
            .map(|k| PlotSeries::new(format!("s{k}"), PALETTE[k], wave(300, 0.1 * (k + 1) as f64)))
            .collect();
        let a = render_svg("demo & <test>", 250.0, &series).unwrap();
        let b = render_svg("demo & <test>", 250.0, &series).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.matches("<polyline").count(), 4);
        assert!(a.contains("demo &amp; &lt;test&gt;"));
    }

    #[test]
    fn length_mismatch() {
        let series = vec![
            PlotSeries::new("a", PALETTE[0], wave(10, 0.3)),
            PlotSeries::new("b", PALETTE[1], wave(11, 0.3)),
        ];
        assert!(matches!(render_svg("x", 250.0, &series), Err(Error::LengthMismatch { .. })));
        assert!(render_svg("x", 250.0, &[]).is_err());
    }

    #[test]
    fn nice_ticks() {
        assert_eq!(ticks(0.0, 4.0, 8.0), vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]);
        assert_eq!(label(0.5), "0.5");
        assert_eq!(label(-0.0), "0");
        assert_eq!(label(2.0), "2");
        let flat = render_svg("flat", 10.0, &[PlotSeries::new("c", "#000", vec![1.0; 5])]).unwrap();
        assert!(flat.contains("<polyline"));
    }
}
