//! Minimal SVG line charts: per-panel mean lines with min-max bands over a
//! categorical x axis. No plotting dependency; the geometry is simple
//! enough to emit directly.

use std::fmt::Write;

pub struct Series {
    pub label: String,
    pub color: String,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
}

const PLOT_W: f64 = 260.0;
const PLOT_H: f64 = 230.0;
const MARGIN_LEFT: f64 = 58.0;
const MARGIN_TOP: f64 = 52.0;
const MARGIN_BOTTOM: f64 = 46.0;
const PANEL_GAP: f64 = 26.0;

/// Renders one chart with a shared y axis across panels.
pub fn line_band_chart(
    y_label: &str,
    x_label: &str,
    x_ticks: &[String],
    panels: &[Panel],
) -> String {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in panels {
        for s in &p.series {
            for v in s.min.iter().chain(&s.max).chain(&s.mean) {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if (hi - lo).abs() < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.06 * (hi - lo);
    let (y_lo, y_hi) = (lo - pad, hi + pad);

    let n = x_ticks.len().max(1);
    let x_pos = |i: usize| {
        if n == 1 {
            PLOT_W / 2.0
        } else {
            PLOT_W * i as f64 / (n - 1) as f64
        }
    };
    let y_pos = |v: f64| PLOT_H - PLOT_H * (v - y_lo) / (y_hi - y_lo);

    let width = MARGIN_LEFT + panels.len() as f64 * (PLOT_W + PANEL_GAP);
    let height = MARGIN_TOP + PLOT_H + MARGIN_BOTTOM;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(
        out,
        "<rect width=\"{width:.0}\" height=\"{height:.0}\" fill=\"white\"/>"
    );

    // legend from the first panel's series
    if let Some(first) = panels.first() {
        let mut lx = MARGIN_LEFT;
        for s in &first.series {
            let _ = writeln!(
                out,
                "<line x1=\"{lx:.1}\" y1=\"16\" x2=\"{:.1}\" y2=\"16\" stroke=\"{}\" stroke-width=\"2.5\"/>",
                lx + 22.0,
                s.color
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.1}\" y=\"20\">{}</text>",
                lx + 27.0,
                s.label
            );
            lx += 27.0 + 10.0 * s.label.len() as f64 + 18.0;
        }
    }

    for (pi, panel) in panels.iter().enumerate() {
        let ox = MARGIN_LEFT + pi as f64 * (PLOT_W + PANEL_GAP);
        let oy = MARGIN_TOP;
        let _ = writeln!(out, "<g transform=\"translate({ox:.1},{oy:.1})\">");
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"-14\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
            PLOT_W / 2.0,
            panel.title
        );

        // frame and horizontal grid with labels on the first panel
        let _ = writeln!(
            out,
            "<rect width=\"{PLOT_W:.1}\" height=\"{PLOT_H:.1}\" fill=\"none\" stroke=\"#888\"/>"
        );
        for t in 0..=4 {
            let v = y_lo + (y_hi - y_lo) * t as f64 / 4.0;
            let y = y_pos(v);
            let _ = writeln!(
                out,
                "<line x1=\"0\" y1=\"{y:.1}\" x2=\"{PLOT_W:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\" stroke-dasharray=\"3,3\"/>"
            );
            if pi == 0 {
                let _ = writeln!(
                    out,
                    "<text x=\"-8\" y=\"{:.1}\" text-anchor=\"end\">{v:.3}</text>",
                    y + 3.5
                );
            }
        }
        for (i, tick) in x_ticks.iter().enumerate() {
            let x = x_pos(i);
            let _ = writeln!(
                out,
                "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{tick}</text>",
                PLOT_H + 16.0
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x_label}</text>",
            PLOT_W / 2.0,
            PLOT_H + 34.0
        );
        if pi == 0 {
            let _ = writeln!(
                out,
                "<text x=\"-42\" y=\"{:.1}\" transform=\"rotate(-90 -42 {:.1})\" text-anchor=\"middle\">{y_label}</text>",
                PLOT_H / 2.0,
                PLOT_H / 2.0
            );
        }

        for s in &panel.series {
            // min-max band
            if !s.min.is_empty() {
                let mut points = String::new();
                for (i, v) in s.max.iter().enumerate() {
                    let _ = write!(points, "{:.1},{:.1} ", x_pos(i), y_pos(*v));
                }
                for (i, v) in s.min.iter().enumerate().rev() {
                    let _ = write!(points, "{:.1},{:.1} ", x_pos(i), y_pos(*v));
                }
                let _ = writeln!(
                    out,
                    "<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.22\" stroke=\"none\"/>",
                    points.trim_end(),
                    s.color
                );
            }
            // mean line with markers
            let mut points = String::new();
            for (i, v) in s.mean.iter().enumerate() {
                let _ = write!(points, "{:.1},{:.1} ", x_pos(i), y_pos(*v));
            }
            let _ = writeln!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>",
                points.trim_end(),
                s.color
            );
            for (i, v) in s.mean.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.4\" fill=\"{}\"/>",
                    x_pos(i),
                    y_pos(*v),
                    s.color
                );
            }
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, "</svg>");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_contains_band_line_and_ticks() {
        let panels = vec![Panel {
            title: "B=5".into(),
            series: vec![Series {
                label: "pbs".into(),
                color: "#1b9e77".into(),
                mean: vec![0.5, 0.6, 0.7],
                min: vec![0.4, 0.55, 0.65],
                max: vec![0.6, 0.65, 0.75],
            }],
        }];
        let ticks = vec!["0".to_string(), "1".to_string(), "5".to_string()];
        let svg = line_band_chart("MOTA", "Bias", &ticks, &panels);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<polygon"), "band missing");
        assert!(svg.contains("<polyline"), "mean line missing");
        assert!(svg.contains(">Bias<"));
        assert!(svg.contains(">B=5<"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn degenerate_single_run_collapses_band_to_the_line() {
        let panels = vec![Panel {
            title: "B=1".into(),
            series: vec![Series {
                label: "gbs".into(),
                color: "#d95f02".into(),
                mean: vec![1.0, 1.0],
                min: vec![1.0, 1.0],
                max: vec![1.0, 1.0],
            }],
        }];
        let svg = line_band_chart("IDF1", "Bias", &["0".into(), "1".into()], &panels);
        assert!(svg.contains("<polygon"));
    }
}
