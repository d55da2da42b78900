//! CSV tables and standalone SVG figures for sweep and grid results.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! values always produce equal bytes.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::Result;
use crate::metrics::ScoreTriple;
use crate::noise::NoiseMode;
use crate::oracle::OracleCurve;
use crate::trainer::{mean_dice_grid, GridCell};
use crate::volume::Subset;

pub const METRICS: [&str; 3] = ["dice", "precision", "recall"];

fn metric_of(s: &ScoreTriple, name: &str) -> f64 {
    match name {
        "dice" => s.dice,
        "precision" => s.precision,
        _ => s.recall,
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub mode: Option<NoiseMode>,
    pub sigma2: Option<f64>,
    pub beta: Option<f64>,
    pub fold: Option<usize>,
    pub subset: Option<Subset>,
    pub metric: &'static str,
    pub value: f64,
}

/// Long-format score table: one row per metric value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    /// Appends dice, precision and recall rows sharing one key.
    pub fn push_triple(
        &mut self,
        mode: Option<NoiseMode>,
        sigma2: Option<f64>,
        beta: Option<f64>,
        fold: Option<usize>,
        subset: Option<Subset>,
        scores: &ScoreTriple,
    ) {
        for metric in METRICS {
            self.rows.push(ScoreRow {
                mode,
                sigma2,
                beta,
                fold,
                subset,
                metric,
                value: metric_of(scores, metric),
            });
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["mode", "sigma2", "beta", "fold", "subset", "metric", "value"])?;
        for r in &self.rows {
            w.write_record([
                opt(r.mode),
                opt(r.sigma2),
                opt(r.beta),
                opt(r.fold),
                opt(r.subset),
                r.metric.to_string(),
                r.value.to_string(),
            ])?;
        }
        w.flush().map_err(|e| crate::Error::io("writing score table", e))?;
        Ok(())
    }
}

/// Per-fold oracle means (over repetitions) as a score table on the test
/// subset.
pub fn oracle_score_table(curve: &OracleCurve) -> ScoreTable {
    let mut table = ScoreTable::default();
    for (mode, sigma2, fold, scores) in curve.fold_means() {
        table.push_triple(Some(mode), Some(sigma2), None, Some(fold), Some(Subset::Test), &scores);
    }
    table
}

/// Columns: mode, sigma2, metric, mean, std, n.
pub fn write_curve_csv<W: Write>(curve: &OracleCurve, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["mode", "sigma2", "metric", "mean", "std", "n"])?;
    for p in &curve.points {
        for metric in METRICS {
            w.write_record([
                p.mode.to_string(),
                p.sigma2.to_string(),
                metric.to_string(),
                metric_of(&p.mean, metric).to_string(),
                metric_of(&p.std, metric).to_string(),
                p.n.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| crate::Error::io("writing curve table", e))?;
    Ok(())
}

/// Columns: beta, sigma2, seed, test_dice, test_precision, test_recall.
pub fn write_grid_csv<W: Write>(cells: &[GridCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["beta", "sigma2", "seed", "test_dice", "test_precision", "test_recall"])?;
    for c in cells {
        w.write_record([
            c.beta.to_string(),
            c.sigma2.to_string(),
            c.seed.to_string(),
            c.test.dice.to_string(),
            c.test.precision.to_string(),
            c.test.recall.to_string(),
        ])?;
    }
    w.flush().map_err(|e| crate::Error::io("writing grid table", e))?;
    Ok(())
}

const WIDTH: f64 = 520.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn mode_colour(mode: NoiseMode) -> &'static str {
    match mode {
        NoiseMode::Dilate => "#d62728",
        NoiseMode::Erode => "#1f77b4",
        NoiseMode::Random => "#2ca02c",
    }
}

fn svg_open(s: &mut String, title: &str) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Dashed line plot of one oracle metric against sigma2, one series per
/// mode, with an annotation of the reference model-vs-oracle gaps.
pub fn oracle_svg(curve: &OracleCurve, metric: &str) -> String {
    let mut s = String::new();
    svg_open(&mut s, &format!("oracle {metric}"));
    let xs: Vec<f64> = {
        let mut v: Vec<f64> = curve.points.iter().map(|p| p.sigma2).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let (x_lo, x_hi) = (xs.first().copied().unwrap_or(0.0), xs.last().copied().unwrap_or(1.0));
    let y_lo = curve
        .points
        .iter()
        .map(|p| metric_of(&p.mean, metric))
        .fold(1.0_f64, f64::min);
    let y_lo = ((y_lo * 10.0).floor() / 10.0).clamp(0.0, 0.9);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + if x_hi > x_lo { (x - x_lo) / (x_hi - x_lo) * pw } else { pw / 2.0 };
    let py = |y: f64| TOP + (1.0 - (y - y_lo) / (1.0 - y_lo)) * ph;

    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for &x in &xs {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x}</text>"#,
            px(x),
            TOP + ph + 16.0
        );
    }
    for i in 0..=4 {
        let y = y_lo + (1.0 - y_lo) * f64::from(i) / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.2}</text>"#,
            LEFT - 6.0,
            py(y) + 4.0,
            y
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">sigma2</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );

    let mut legend_y = TOP + 10.0;
    for mode in NoiseMode::ALL {
        let pts: Vec<String> = curve
            .points
            .iter()
            .filter(|p| p.mode == mode)
            .map(|p| format!("{:.1},{:.1}", px(p.sigma2), py(metric_of(&p.mean, metric))))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let c = mode_colour(mode);
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2" stroke-dasharray="6,4"/>"#,
            pts.join(" ")
        );
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{legend_y}" x2="{}" y2="{legend_y}" stroke="{c}" stroke-width="2" stroke-dasharray="6,4"/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{mode}</text>"#,
            lx + 30.0,
            legend_y + 4.0
        );
        legend_y += 18.0;
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="10">reference gap vs oracle:</text>"#,
        LEFT + pw + 12.0,
        legend_y + 14.0
    );
    for (i, line) in ["random +8%", "dilate +6%", "erode +6%"].iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10">{line}</text>"#,
            LEFT + pw + 12.0,
            legend_y + 28.0 + 12.0 * i as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Heatmap of mean test dice over seeds: columns are betas, rows sigma2.
pub fn grid_heatmap_svg(cells: &[GridCell]) -> String {
    let means = mean_dice_grid(cells);
    let mut betas: Vec<f64> = means.iter().map(|m| m.0).collect();
    let mut sigmas: Vec<f64> = means.iter().map(|m| m.1).collect();
    for v in [&mut betas, &mut sigmas] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let lo = means.iter().map(|m| m.2).fold(f64::INFINITY, f64::min);
    let hi = means.iter().map(|m| m.2).fold(f64::NEG_INFINITY, f64::max);

    let mut s = String::new();
    svg_open(&mut s, "mean test dice");
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let cw = pw / betas.len().max(1) as f64;
    let ch = ph / sigmas.len().max(1) as f64;
    for &(b, sg, d) in &means {
        let col = betas.iter().position(|&x| x == b).unwrap_or(0);
        let row = sigmas.iter().position(|&x| x == sg).unwrap_or(0);
        let t = if hi > lo { (d - lo) / (hi - lo) } else { 1.0 };
        // White to dark blue.
        let shade = |a: f64, z: f64| (a + (z - a) * t).round() as u8;
        let fill = format!("#{:02x}{:02x}{:02x}", shade(255.0, 8.0), shade(255.0, 48.0), shade(255.0, 107.0));
        let x = LEFT + col as f64 * cw;
        let y = TOP + row as f64 * ch;
        let ink = if t > 0.5 { "white" } else { "black" };
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{y:.1}" width="{cw:.1}" height="{ch:.1}" fill="{fill}" stroke="white"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{ink}" font-size="11">{d:.3}</text>"#,
            x + cw / 2.0,
            y + ch / 2.0 + 4.0
        );
    }
    for (i, b) in betas.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{b}</text>"#,
            LEFT + (i as f64 + 0.5) * cw,
            TOP + ph + 16.0
        );
    }
    for (i, sg) in sigmas.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{sg}</text>"#,
            LEFT - 6.0,
            TOP + (i as f64 + 0.5) * ch + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">beta</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">sigma2</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    s.push_str("</svg>\n");
    s
}
