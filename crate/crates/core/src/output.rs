//! CSV, report and SVG emission.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::RateEnvelope;
use crate::optimizer::Trajectory;
use crate::scalar::fmt17;
use crate::stats::ComparisonReport;
use crate::Scalar;

pub const TRAJECTORY_HEADER: &str = "k,loss,grad_norm_sq,min_grad_sq,g_k,eta_k,u_k,sum_eta,envelope_det,envelope_case";

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn opt<T: Scalar>(v: Option<T>) -> String {
    v.map(fmt17).unwrap_or_default()
}

fn lookup<T: Scalar>(env: Option<&RateEnvelope<T>>, k: usize) -> Option<T> {
    let env = env?;
    env.ks.binary_search(&k).ok().map(|i| env.values[i])
}

/// One row per eval point. Fields that do not exist at a point (the step size
/// after the last step, envelopes at `k = 0`, an unset `g_k`) are left empty.
pub fn trajectory_csv<T: Scalar>(
    traj: &Trajectory<T>,
    envelope_det: Option<&RateEnvelope<T>>,
    envelope_case: Option<&RateEnvelope<T>>,
) -> String {
    let mut s = String::with_capacity(64 + traj.eval_k.len() * 200);
    s.push_str(TRAJECTORY_HEADER);
    s.push('\n');
    for (i, &k) in traj.eval_k.iter().enumerate() {
        let _ = writeln!(
            s,
            "{k},{},{},{},{},{},{},{},{},{}",
            fmt17(traj.loss[i]),
            fmt17(traj.grad_norm_sq[i]),
            fmt17(traj.min_grad_sq[i]),
            opt(traj.g_series.get(k).copied()),
            opt(traj.eta_series.get(k).copied()),
            opt(traj.u_series.get(k).copied()),
            opt(traj.sum_eta.get(k).copied()),
            opt(lookup(envelope_det, k)),
            opt(lookup(envelope_case, k)),
        );
    }
    s
}

pub fn write_trajectory_csv<T: Scalar>(
    traj: &Trajectory<T>,
    envelope_det: Option<&RateEnvelope<T>>,
    envelope_case: Option<&RateEnvelope<T>>,
    path: &Path,
) -> Result<()> {
    write_file(path, &trajectory_csv(traj, envelope_det, envelope_case))
}

/// Columns of a trajectory CSV; empty fields read back as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub k: Vec<usize>,
    pub columns: Vec<Vec<Option<f64>>>,
}

impl TrajectoryTable {
    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        let idx = TRAJECTORY_HEADER.split(',').skip(1).position(|c| c == name)?;
        Some(&self.columns[idx])
    }
}

pub fn read_trajectory_csv(path: &Path) -> Result<TrajectoryTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let perr = |line: usize, msg: String| Error::Parse {
        line,
        key: path.display().to_string(),
        msg,
    };
    let mut lines = text.lines();
    if lines.next() != Some(TRAJECTORY_HEADER) {
        return Err(perr(1, "unexpected header".into()));
    }
    let width = TRAJECTORY_HEADER.split(',').count();
    let mut table = TrajectoryTable {
        k: Vec::new(),
        columns: vec![Vec::new(); width - 1],
    };
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(perr(i + 2, format!("expected {width} fields, got {}", fields.len())));
        }
        table.k.push(
            fields[0]
                .parse()
                .map_err(|_| perr(i + 2, format!("bad k `{}`", fields[0])))?,
        );
        for (col, f) in table.columns.iter_mut().zip(&fields[1..]) {
            col.push(if f.is_empty() {
                None
            } else {
                Some(f.parse().map_err(|_| perr(i + 2, format!("bad number `{f}`")))?)
            });
        }
    }
    Ok(table)
}

pub fn write_report<T: Scalar>(report: &ComparisonReport<T>, path: &Path) -> Result<()> {
    write_file(path, &report.to_csv())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotLabels {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 200.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Line chart with one `<polyline>` per series, axis labels and a legend.
/// Points that are non-finite, or non-positive on a log axis, are dropped.
pub fn svg(series: &[Series], labels: &PlotLabels) -> String {
    let tx = |v: f64| if labels.log_x { v.log10() } else { v };
    let ty = |v: f64| if labels.log_y { v.log10() } else { v };
    let keep = |&(x, y): &(f64, f64)| {
        x.is_finite() && y.is_finite() && (!labels.log_x || x > 0.0) && (!labels.log_y || y > 0.0)
    };
    let mapped: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|p| keep(p))
                .map(|&(x, y)| (tx(x), ty(y)))
                .collect()
        })
        .collect();
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        let (lo, hi) = mapped
            .iter()
            .flatten()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        MARGIN_L + pw / 2.0,
        escape(&labels.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (vx, vy) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let tick = |v: f64, log: bool| if log { format!("1e{v:.1}") } else { format!("{v:.3e}") };
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(vx),
            HEIGHT - MARGIN_B + 18.0,
            tick(vx, labels.log_x)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_L - 6.0,
            py(vy) + 4.0,
            tick(vy, labels.log_y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 15.0,
        escape(&labels.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text class="y-label" x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0,
        escape(&labels.y_label)
    );
    for (i, (ser, pts)) in series.iter().zip(&mapped).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            coords.join(" "),
            escape(&ser.name)
        );
    }
    let _ = writeln!(s, r#"<g class="legend">"#);
    let lx = WIDTH - MARGIN_R + 15.0;
    for (i, ser) in series.iter().enumerate() {
        let ly = MARGIN_T + 10.0 + 18.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

pub fn render_svg(series: &[Series], labels: &PlotLabels, path: &Path) -> Result<()> {
    write_file(path, &svg(series, labels))
}
