use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::experiment::{EstimateRow, ExperimentOutput, ResultRow};
use crate::BenchError;

/// Header `estimator,M,replicate,l2_error,wall_ms`.
pub fn write_results_csv<W: Write>(w: W, rows: &[ResultRow]) -> Result<(), BenchError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_results_csv<R: Read>(r: R) -> Result<Vec<ResultRow>, BenchError> {
    let mut rd = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rd.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

pub fn write_estimates_csv<W: Write>(w: W, rows: &[EstimateRow]) -> Result<(), BenchError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Mean and standard error of `log2 l2_error` for one estimator at one M.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryPoint {
    pub m: usize,
    pub mean_log2: f64,
    pub se_log2: f64,
    pub mean_error: f64,
    pub count: usize,
}

/// Per-estimator series sorted by M, estimators in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<(String, Vec<SummaryPoint>)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let e = match order.iter().position(|s| *s == r.estimator) {
            Some(i) => i,
            None => {
                order.push(r.estimator.clone());
                order.len() - 1
            }
        };
        groups.entry((e, r.m)).or_default().push(r.l2_error);
    }
    order
        .iter()
        .enumerate()
        .map(|(e, name)| {
            let pts = groups
                .range((e, 0)..=(e, usize::MAX))
                .map(|(&(_, m), errs)| {
                    let logs: Vec<f64> = errs.iter().map(|x| x.log2()).collect();
                    let n = logs.len() as f64;
                    let mean = logs.iter().sum::<f64>() / n;
                    let se = if logs.len() > 1 {
                        (logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n)
                            .sqrt()
                    } else {
                        0.0
                    };
                    SummaryPoint {
                        m,
                        mean_log2: mean,
                        se_log2: se,
                        mean_error: errs.iter().sum::<f64>() / n,
                        count: logs.len(),
                    }
                })
                .collect();
            (name.clone(), pts)
        })
        .collect()
}

/// Least-squares slope of `mean_log2` against `log2 M`.
pub fn log_slope(points: &[SummaryPoint]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.mean_log2.is_finite())
        .map(|p| ((p.m as f64).log2(), p.mean_log2))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Plot rectangle `(left, top, right, bottom)` in SVG pixels.
pub const PLOT_RECT: (f64, f64, f64, f64) = (70.0, 30.0, 470.0, 390.0);

/// Mean log2 error against log2 M with ±1 SE bars, one series per estimator.
pub fn render_svg(series: &[(String, Vec<SummaryPoint>)], title: &str) -> String {
    let (l, t, r, b) = PLOT_RECT;
    let finite = |v: f64| v.is_finite();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (_, pts) in series {
        for p in pts.iter().filter(|p| finite(p.mean_log2)) {
            xs.push((p.m as f64).log2());
            ys.push(p.mean_log2 - p.se_log2);
            ys.push(p.mean_log2 + p.se_log2);
        }
    }
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-9 {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let px = |x: f64| l + (x - x0) / (x1 - x0) * (r - l);
    let py = |y: f64| b - (y - y0) / (y1 - y0) * (b - t);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<rect id="plot" x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        (l + r) / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">log2 M</text>"#,
        (l + r) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 18 {})">mean log2 L2 error</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle" font-size="10">{fx:.1}</text>"#,
            px(fx),
            b + 14.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end" font-size="10">{fy:.1}</text>"#,
            l - 4.0,
            py(fy) + 3.0
        );
    }
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let good: Vec<&SummaryPoint> = pts.iter().filter(|p| finite(p.mean_log2)).collect();
        let path: Vec<String> = good
            .iter()
            .map(|p| format!("{:.2},{:.2}", px((p.m as f64).log2()), py(p.mean_log2)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        for p in good {
            let x = px((p.m as f64).log2());
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}"/>"#,
                py(p.mean_log2 - p.se_log2),
                py(p.mean_log2 + p.se_log2)
            );
            let _ = writeln!(
                s,
                r#"<circle class="point" cx="{x:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                py(p.mean_log2)
            );
        }
        let ly = t + 16.0 * i as f64 + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            r + 10.0,
            r + 30.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11">{}</text>"#,
            r + 35.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Writes `results.csv`, `estimates.csv`, `metadata.toml`, `plot.svg` and
/// `summary.txt` into `dir` and returns their paths.
pub fn write_all(
    dir: &Path,
    config: &ExperimentConfig,
    out: &ExperimentOutput,
) -> Result<Vec<PathBuf>, BenchError> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();

    let p = dir.join("results.csv");
    write_results_csv(std::fs::File::create(&p)?, &out.rows)?;
    paths.push(p);

    let p = dir.join("estimates.csv");
    write_estimates_csv(std::fs::File::create(&p)?, &out.estimates)?;
    paths.push(p);

    let p = dir.join("metadata.toml");
    let mut meta = String::new();
    let _ = writeln!(meta, "hash = \"{}\"", out.hash);
    let _ = writeln!(meta, "version = \"{}\"", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(meta, "sigma = {:e}", out.sigma);
    let _ = writeln!(meta, "snr = {:e}", out.snr);
    let _ = writeln!(meta, "\n[config]");
    meta.push_str(&config.to_toml());
    std::fs::write(&p, meta)?;
    paths.push(p);

    let series = summarize(&out.rows);
    let p = dir.join("plot.svg");
    let title = format!(
        "{} {:?} eta={} SNR={:.3}",
        config.signal, config.model, config.eta, out.snr
    );
    std::fs::write(&p, render_svg(&series, &title))?;
    paths.push(p);

    let p = dir.join("summary.txt");
    std::fs::write(&p, summary_text(&series))?;
    paths.push(p);
    Ok(paths)
}

pub fn summary_text(series: &[(String, Vec<SummaryPoint>)]) -> String {
    let mut s = String::new();
    for (name, pts) in series {
        let slope = log_slope(pts).map_or("n/a".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(s, "{name}: slope {slope}");
        for p in pts {
            let _ = writeln!(
                s,
                "  M={:<8} mean={:.4e} log2={:.3} se={:.3} n={}",
                p.m, p.mean_error, p.mean_log2, p.se_log2, p.count
            );
        }
    }
    s
}
