//! Log-log regret plots as standalone SVG.

use std::fmt::Write as _;

const WIDTH: f64 = 880.0;
const HEIGHT: f64 = 360.0;
const PANEL: f64 = 380.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_TOP: f64 = 40.0;
const PLOT_H: f64 = 260.0;
const GAP: f64 = 60.0;
const MAX_POINTS: usize = 200;

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Self { lo: 0.0, hi: 1.0 };
        }
        let (lo, hi) = (lo.log10().floor(), hi.log10().ceil());
        Self { lo, hi: if hi > lo { hi } else { lo + 1.0 } }
    }

    fn map(&self, v: f64, len: f64) -> f64 {
        (v.log10() - self.lo) / (self.hi - self.lo) * len
    }
}

/// Episode indices sampled roughly evenly on a log scale.
fn sample_indices(len: usize) -> Vec<usize> {
    if len <= MAX_POINTS {
        return (0..len).collect();
    }
    let mut out: Vec<usize> = (0..MAX_POINTS)
        .map(|i| ((len as f64).powf(i as f64 / (MAX_POINTS - 1) as f64) - 1.0).round() as usize)
        .collect();
    out.dedup();
    out
}

fn panel(out: &mut String, x0: f64, title: &str, series: &[Vec<(f64, f64)>]) {
    let floor = series
        .iter()
        .flatten()
        .map(|p| p.1)
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1.0 };
    let clamp = |v: f64| v.max(floor);
    let xa = Axis::new(series.iter().flatten().map(|p| p.0));
    let ya = Axis::new(series.iter().flatten().map(|p| clamp(p.1)));
    let px = |x: f64| x0 + MARGIN_LEFT + xa.map(x, PANEL - MARGIN_LEFT);
    let py = |y: f64| MARGIN_TOP + PLOT_H - ya.map(clamp(y), PLOT_H);

    let _ = writeln!(
        out,
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#444\"/>",
        x0 + MARGIN_LEFT,
        MARGIN_TOP,
        PANEL - MARGIN_LEFT,
        PLOT_H
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
        x0 + MARGIN_LEFT + (PANEL - MARGIN_LEFT) / 2.0,
        MARGIN_TOP - 12.0,
        title
    );
    for e in xa.lo as i32..=xa.hi as i32 {
        let x = px(10f64.powi(e));
        let _ = writeln!(
            out,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"11\">1e{e}</text>",
            MARGIN_TOP + PLOT_H + 16.0
        );
    }
    for e in ya.lo as i32..=ya.hi as i32 {
        let y = py(10f64.powi(e));
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\">1e{e}</text>",
            x0 + MARGIN_LEFT - 6.0,
            y + 4.0
        );
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>",
            x0 + MARGIN_LEFT,
            x0 + PANEL
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"11\">episode</text>",
        x0 + MARGIN_LEFT + (PANEL - MARGIN_LEFT) / 2.0,
        MARGIN_TOP + PLOT_H + 32.0
    );

    let len = series.iter().map(|s| s.len()).min().unwrap_or(0);
    if len == 0 {
        return;
    }
    let idx = sample_indices(len);
    if series.len() > 1 {
        let mut upper = String::new();
        let mut lower = Vec::new();
        for &i in &idx {
            let x = series[0][i].0;
            let hi = series.iter().map(|s| s[i].1).fold(f64::NEG_INFINITY, f64::max);
            let lo = series.iter().map(|s| s[i].1).fold(f64::INFINITY, f64::min);
            let _ = write!(upper, "{:.2},{:.2} ", px(x), py(hi));
            lower.push(format!("{:.2},{:.2}", px(x), py(lo)));
        }
        lower.reverse();
        let _ = writeln!(
            out,
            "<polygon points=\"{}{}\" fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"none\"/>",
            upper,
            lower.join(" ")
        );
    }
    let mut mean = String::new();
    for &i in &idx {
        let x = series[0][i].0;
        let m = series.iter().map(|s| s[i].1).sum::<f64>() / series.len() as f64;
        let _ = write!(mean, "{:.2},{:.2} ", px(x), py(m));
    }
    let _ = writeln!(
        out,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#08519c\" stroke-width=\"1.5\"/>",
        mean.trim_end()
    );
}

/// Two log-log panels: cumulative regret and regret per episode, with a
/// min/max band across seeds and the seed mean. Non-positive values are
/// drawn at the smallest positive value present.
pub fn render_regret_svg(curves: &[(u64, Vec<f64>)], title: &str) -> String {
    let cumulative: Vec<Vec<(f64, f64)>> =
        curves.iter().map(|(_, c)| c.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, v)).collect()).collect();
    let average: Vec<Vec<(f64, f64)>> =
        cumulative.iter().map(|c| c.iter().map(|&(k, v)| (k, v / k)).collect()).collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"16\" text-anchor=\"middle\" font-size=\"14\">{} - {} seed(s)</text>",
        WIDTH / 2.0,
        xml_escape(title),
        curves.len()
    );
    panel(&mut out, 10.0, "cumulative regret", &cumulative);
    panel(&mut out, 10.0 + PANEL + GAP, "regret per episode", &average);
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
