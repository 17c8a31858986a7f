//! Minimal self-contained SVG line charts drawn from run tables.

use std::fmt::Write;

use super::output::RunRecord;
use super::{ExperimentKind, RunOutcome};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Markers only, no connecting line.
    pub scatter: bool,
}

#[derive(Debug, Clone)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(t);
        t += step;
    }
    out
}

impl LineChart {
    pub fn render(&self) -> String {
        let tx = |v: f64| if self.log_x { v.log10() } else { v };
        let ty = |v: f64| if self.log_y { v.log10() } else { v };
        let pts: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|s| {
                s.points
                    .iter()
                    .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_x || *x > 0.0) && (!self.log_y || *y > 0.0))
                    .map(|&(x, y)| (tx(x), ty(y)))
                    .collect()
            })
            .collect();
        let all: Vec<&(f64, f64)> = pts.iter().flatten().collect();
        let (mut x0, mut x1, mut y0, mut y1) = (0.0, 1.0, 0.0, 1.0);
        if !all.is_empty() {
            x0 = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            x1 = all.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            y0 = all.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            y1 = all.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        }
        if x1 - x0 < 1e-12 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, MARGIN_L + pw / 2.0, escape(&self.title));
        let _ = writeln!(s, r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);
        let label = |v: f64, log: bool| if log { format!("1e{v}") } else { format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string() };
        for t in nice_ticks(x0, x1) {
            let x = sx(t);
            let _ = writeln!(s, r##"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="#333"/>"##, MARGIN_T + ph, MARGIN_T + ph + 5.0);
            let _ = writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{}</text>"#, MARGIN_T + ph + 18.0, label(t, self.log_x));
        }
        for t in nice_ticks(y0, y1) {
            let y = sy(t);
            let _ = writeln!(s, r##"<line x1="{}" y1="{y:.1}" x2="{MARGIN_L}" y2="{y:.1}" stroke="#333"/>"##, MARGIN_L - 5.0);
            let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, MARGIN_L - 8.0, y + 4.0, label(t, self.log_y));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, MARGIN_L + pw / 2.0, HEIGHT - 10.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            MARGIN_T + ph / 2.0,
            MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, (series, p)) in self.series.iter().zip(&pts).enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            if series.scatter {
                for &(x, y) in p {
                    let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(x), sy(y));
                }
            } else if !p.is_empty() {
                let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
            }
            let ly = MARGIN_T + 14.0 + 16.0 * i as f64;
            let lx = WIDTH - MARGIN_R + 10.0;
            let _ = writeln!(s, r#"<rect x="{lx}" y="{}" width="12" height="4" fill="{color}"/>"#, ly - 4.0);
            let _ = writeln!(s, r#"<text x="{}" y="{ly}">{}</text>"#, lx + 18.0, escape(&series.name));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn line(name: impl Into<String>, points: Vec<(f64, f64)>) -> Series {
    Series { name: name.into(), points, scatter: false }
}

fn dots(name: impl Into<String>, points: Vec<(f64, f64)>) -> Series {
    Series { name: name.into(), points, scatter: true }
}

/// `(file name, svg)` pairs for a run.
pub fn render(record: &RunRecord) -> Vec<(String, String)> {
    let kind = record.config.experiment;
    match &record.outcome {
        RunOutcome::Traces(res) => {
            let metric = |title: &str, log_y: bool, f: &dyn Fn(&super::TraceRow) -> f64| LineChart {
                title: format!("{kind}: {title}"),
                x_label: "iteration".into(),
                y_label: title.into(),
                log_x: false,
                log_y,
                series: res.methods.iter().map(|m| line(m.name.clone(), m.mean.iter().map(|r| (r.iter as f64, f(r))).collect())).collect(),
            };
            vec![
                ("train_loss.svg".into(), metric("train loss", true, &|r| r.train_loss).render()),
                ("subspace_dist.svg".into(), metric("subspace distance", false, &|r| r.subspace_dist).render()),
                ("transfer_loss.svg".into(), metric("transfer loss", true, &|r| r.transfer_loss).render()),
            ]
        }
        RunOutcome::LrSweep(rows) => {
            let mut names: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
            names.dedup();
            let chart = LineChart {
                title: "subspace distance after training".into(),
                x_label: "learning rate".into(),
                y_label: "subspace distance".into(),
                log_x: true,
                log_y: false,
                series: names
                    .iter()
                    .map(|n| line(*n, rows.iter().filter(|r| r.method == *n).map(|r| (r.lr, r.subspace_dist)).collect()))
                    .collect(),
            };
            vec![("lr_sweep.svg".into(), chart.render())]
        }
        RunOutcome::SingleIndex(rows) => {
            let by_lambda = kind == ExperimentKind::SingleIndexLambda;
            let x = |r: &super::AlignmentRow| if by_lambda { r.lambda } else { r.epsilon };
            let chart = LineChart {
                title: "alignment with the true direction".into(),
                x_label: if by_lambda { "lambda_G" } else { "epsilon" }.into(),
                y_label: "cosine".into(),
                log_x: by_lambda,
                log_y: false,
                series: vec![
                    dots("sgd (sim)", rows.iter().map(|r| (x(r), r.sim_sgd)).collect()),
                    dots("kfac (sim)", rows.iter().map(|r| (x(r), r.sim_kfac)).collect()),
                    line("sgd (theory)", rows.iter().map(|r| (x(r), r.theory_sgd)).collect()),
                    line("kfac (theory)", rows.iter().map(|r| (x(r), r.theory_kfac.unwrap_or(f64::NAN))).collect()),
                ],
            };
            vec![("alignment.svg".into(), chart.render())]
        }
        RunOutcome::LowerBound(rows) => {
            let mut series = Vec::new();
            let mut keys: Vec<(f64, f64)> = Vec::new();
            for r in rows {
                if !keys.contains(&(r.lambda, r.eta)) {
                    keys.push((r.lambda, r.eta));
                }
            }
            for &(lam, eta) in &keys {
                let pts = rows.iter().filter(|r| r.lambda == lam && r.eta == eta).map(|r| (r.t as f64, r.dist)).collect();
                series.push(line(format!("λ={lam} η={eta:.3}"), pts));
            }
            let mut lambdas: Vec<f64> = keys.iter().map(|k| k.0).collect();
            lambdas.dedup();
            for lam in lambdas {
                let first = keys.iter().find(|k| k.0 == lam).copied().unwrap_or((lam, 0.0));
                let pts = rows
                    .iter()
                    .filter(|r| r.lambda == first.0 && r.eta == first.1)
                    .map(|r| (r.t as f64, r.envelope))
                    .collect();
                series.push(line(format!("envelope λ={lam}"), pts));
            }
            let chart = LineChart {
                title: "population AMGD on the hard instance".into(),
                x_label: "iteration".into(),
                y_label: "subspace distance".into(),
                log_x: false,
                log_y: true,
                series,
            };
            vec![("lower_bound.svg".into(), chart.render())]
        }
    }
}
