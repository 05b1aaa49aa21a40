//! Curve files for finished runs: CSV for analysis, SVG for a quick look.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};

use qlm_core::dynamics::{fourier_eval, qubit_pairs, DEFAULT_T_F_NS};
use qlm_core::model::Checkpoint;

use crate::artifacts::{self, write_atomic};

/// Samples per control-field curve.
pub const CURVE_POINTS: usize = 200;

/// A set of named series sharing one x axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Curves {
    pub x_label: String,
    pub x: Vec<f64>,
    pub series: Vec<(String, Vec<f64>)>,
}

impl Curves {
    pub fn to_csv(&self) -> anyhow::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![self.x_label.clone()];
        header.extend(self.series.iter().map(|(name, _)| name.clone()));
        w.write_record(&header)?;
        for (i, x) in self.x.iter().enumerate() {
            let mut row = vec![x.to_string()];
            row.extend(self.series.iter().map(|(_, ys)| ys[i].to_string()));
            w.write_record(&row)?;
        }
        Ok(w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?)
    }

    pub fn write(&self, dir: &Path, stem: &str, title: &str, log_y: bool) -> anyhow::Result<()> {
        write_atomic(&dir.join(format!("{stem}.csv")), &self.to_csv()?)?;
        write_atomic(&dir.join(format!("{stem}.svg")), svg(self, title, log_y).as_bytes())
    }
}

/// Field values over `[0, t_f]`, one series per parameter. Circuit weights
/// are shown as the piecewise-constant field that produces each angle over a
/// segment of the default duration.
pub fn parameter_curves(ck: &Checkpoint) -> anyhow::Result<Curves> {
    let (n, t_f) = match ck {
        Checkpoint::Hamiltonian(p) => (p.n_qubits, p.t_f_ns),
        Checkpoint::Circuit(w) => (w.n_qubits, DEFAULT_T_F_NS),
    };
    let x: Vec<f64> = (0..CURVE_POINTS).map(|i| t_f * i as f64 / (CURVE_POINTS - 1) as f64).collect();
    let mut names: Vec<String> = (0..n).map(|q| format!("K{q}")).collect();
    names.extend((0..n).map(|q| format!("eps{q}")));
    names.extend(qubit_pairs(n).iter().map(|(a, b)| format!("zeta{a}_{b}")));
    let series = match ck {
        Checkpoint::Hamiltonian(p) => p
            .all_params()
            .zip(names)
            .map(|(fp, name)| Ok((name, x.iter().map(|&t| fourier_eval(fp, t, t_f)).collect::<Result<Vec<_>, _>>()?)))
            .collect::<anyhow::Result<Vec<_>>>()?,
        Checkpoint::Circuit(w) => {
            let tau = t_f / w.n_segments as f64;
            names
                .into_iter()
                .enumerate()
                .map(|(k, name)| {
                    let ys = x
                        .iter()
                        .map(|&t| {
                            let s = ((t / tau) as usize).min(w.n_segments - 1);
                            w.segment(s)[k] / (2.0 * tau)
                        })
                        .collect();
                    (name, ys)
                })
                .collect()
        }
    };
    Ok(Curves { x_label: "t_ns".into(), x, series })
}

/// Writes every curve available in `dir`. Stage runs also get overlays of
/// the first tunneling and coupling field across qubit counts.
pub fn plot_run(dir: &Path) -> anyhow::Result<Vec<String>> {
    let mut written = Vec::new();
    let has_run = dir.join(artifacts::EPOCHS_CSV).exists();
    let has_stages = dir.join(artifacts::STAGE_SUMMARY_CSV).exists();
    if !has_run && !has_stages {
        bail!("{} holds neither {} nor {}", dir.display(), artifacts::EPOCHS_CSV, artifacts::STAGE_SUMMARY_CSV);
    }
    if has_run {
        written.extend(plot_single(dir)?);
    }
    if has_stages {
        let rows = artifacts::read_stage_summary(dir)?;
        let mut overlays: Vec<(usize, Curves)> = Vec::new();
        for row in &rows {
            let sub = artifacts::stage_dir(dir, row.n_qubits);
            written.extend(plot_single(&sub)?.into_iter().map(|f| format!("stage_{}/{f}", row.n_qubits)));
            let ck = artifacts::read_checkpoint(&sub.join(artifacts::CHECKPOINT_JSON))?;
            overlays.push((row.n_qubits, parameter_curves(&ck)?));
        }
        if let Some((_, first)) = overlays.first() {
            for (field, title) in [("K0", "tunneling_vs_time"), ("zeta0_1", "coupling_vs_time")] {
                let series = overlays
                    .iter()
                    .map(|(n, c)| {
                        let ys = c.series.iter().find(|(name, _)| name == field).map(|(_, ys)| ys.clone());
                        Ok((format!("N{n}"), ys.context("missing field")?))
                    })
                    .collect::<anyhow::Result<Vec<_>>>()?;
                let curves = Curves { x_label: "t_ns".into(), x: first.x.clone(), series };
                curves.write(dir, title, &format!("{field} by qubit count"), false)?;
                written.push(format!("{title}.csv"));
                written.push(format!("{title}.svg"));
            }
        }
    }
    Ok(written)
}

fn plot_single(dir: &Path) -> anyhow::Result<Vec<String>> {
    let records = artifacts::read_epochs(dir)?;
    let mut written = Vec::new();
    let x: Vec<f64> = records.iter().map(|r| r.epoch as f64).collect();
    let rms = Curves { x_label: "epoch".into(), x: x.clone(), series: vec![("rms".into(), records.iter().map(|r| r.rms).collect())] };
    rms.write(dir, "rms_vs_epoch", "RMS error", true)?;
    written.extend(["rms_vs_epoch.csv".to_string(), "rms_vs_epoch.svg".to_string()]);
    let damped: Vec<(f64, f64)> = records.iter().filter_map(|r| r.lambda.map(|l| (r.epoch as f64, l))).collect();
    if !damped.is_empty() {
        let lambda = Curves {
            x_label: "epoch".into(),
            x: damped.iter().map(|p| p.0).collect(),
            series: vec![("lambda".into(), damped.iter().map(|p| p.1).collect())],
        };
        lambda.write(dir, "lambda_vs_epoch", "damping", true)?;
        written.extend(["lambda_vs_epoch.csv".to_string(), "lambda_vs_epoch.svg".to_string()]);
    }
    let ck_path = dir.join(artifacts::CHECKPOINT_JSON);
    if ck_path.exists() {
        parameter_curves(&artifacts::read_checkpoint(&ck_path)?)?.write(dir, "params_vs_time", "control fields", false)?;
        written.extend(["params_vs_time.csv".to_string(), "params_vs_time.svg".to_string()]);
    }
    Ok(written)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn svg(c: &Curves, title: &str, log_y: bool) -> String {
    let ty = |y: f64| if log_y { y.max(1e-300).log10() } else { y };
    let ys = c.series.iter().flat_map(|(_, v)| v.iter().copied().map(ty)).filter(|y| y.is_finite());
    let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if y1 - y0 < 1e-12 * y0.abs().max(1.0) {
        let pad = 0.5 * y0.abs().max(1e-12);
        (y0, y1) = (y0 - pad, y1 + pad);
    }
    let x0 = c.x.first().copied().unwrap_or(0.0);
    let x1 = c.x.last().copied().filter(|&v| v > x0).unwrap_or(x0 + 1.0);
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (ty(y) - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    let label = |v: f64| if log_y { format!("1e{v:.1}") } else { format!("{v:.3e}") };

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 15.0, c.x_label);
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{}" text-anchor="middle">{x0}</text>"#, H - MARGIN + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x1}</text>"#, W - MARGIN, H - MARGIN + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 4.0, H - MARGIN, label(y0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 4.0, MARGIN + 10.0, label(y1));
    for (k, (name, ys)) in c.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = c
            .x
            .iter()
            .zip(ys)
            .filter(|(_, &y)| ty(y).is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points.join(" "));
        let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{color}">{name}</text>"#, W - MARGIN + 5.0, MARGIN + 14.0 * (k as f64 + 1.0));
    }
    s.push_str("</svg>\n");
    s
}
