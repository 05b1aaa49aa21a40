//! Trainers for the witness models: Levenberg–Marquardt, finite-difference
//! gradient descent, and adjoint-gradient descent.

pub mod backprop;
pub mod fdgd;
pub mod lm;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::circuit::Backend;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::training::TrainingPair;

pub use fdgd::{ClassRates, FdgdConfig};
pub use lm::{LmConfig, LmState};

pub type Jacobian = DMatrix<f64>;

// seed streams within an epoch
const STREAM_INIT: u64 = 0;
const STREAM_JACOBIAN: u64 = 1;
const STREAM_RESIDUAL: u64 = 2;
const STREAM_TRIAL: u64 = 3;
const STREAM_FDGD: u64 = 4;
const STREAM_EVAL: u64 = 5;

/// `r_i = d_i − O(x_i, w)` and their root mean square.
#[derive(Clone, Debug, PartialEq)]
pub struct Residuals {
    pub r: Vec<f64>,
    pub rms: f64,
}

impl Residuals {
    pub fn new(r: Vec<f64>) -> Self {
        let rms = if r.is_empty() { 0.0 } else { (r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt() };
        Self { r, rms }
    }
}

pub fn residuals(model: &Model, set: &[TrainingPair], backend: &Backend) -> Result<Residuals> {
    let outputs = model.outputs(set, backend)?;
    Ok(Residuals::new(set.iter().zip(outputs).map(|(p, o)| p.target - o).collect()))
}

pub fn lm_jacobian(model: &Model, set: &[TrainingPair], backend: &Backend) -> Result<Jacobian> {
    model.jacobian(set, backend)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Lm,
    Fdgd,
    Backprop,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lm" => Ok(Self::Lm),
            "fdgd" => Ok(Self::Fdgd),
            "backprop" => Ok(Self::Backprop),
            other => Err(format!("unknown optimizer {other:?}; expected lm, fdgd or backprop")),
        }
    }
}

/// One line of the epoch log. Damping fields are empty for the gradient methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub rms: f64,
    pub lambda: Option<f64>,
    pub grid_idx: Option<usize>,
    pub accepted: bool,
    pub uphill: bool,
    pub n_rejections: usize,
    /// Only filled when wall-clock logging is enabled, which breaks byte-identical logs.
    pub wall_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub seed: u64,
    pub lm: LmConfig,
    /// Falls back to the model's default table when absent.
    pub fdgd: Option<FdgdConfig>,
    /// Learning rates for adjoint-gradient descent; falls back to the finite-difference table.
    pub backprop_rates: Option<ClassRates>,
    pub record_wall_time: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { epochs: 50, seed: 0, lm: LmConfig::default(), fdgd: None, backprop_rates: None, record_wall_time: false }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub model: Model,
    pub records: Vec<EpochRecord>,
    pub start_rms: f64,
    pub finish_rms: f64,
    pub lm_state: Option<LmState>,
}

impl TrainReport {
    /// True when none of the last 20% of epochs (at least one) accepted a step.
    pub fn stalled(&self) -> bool {
        stalled(&self.records)
    }
}

pub fn stalled(records: &[EpochRecord]) -> bool {
    if records.is_empty() {
        return false;
    }
    let tail = (records.len() as f64 * 0.2).ceil().max(1.0) as usize;
    records[records.len() - tail..].iter().all(|r| !r.accepted)
}

/// Result of one Levenberg–Marquardt epoch.
#[derive(Clone, Debug)]
pub struct LmOutcome {
    pub model: Model,
    pub error: f64,
    pub lambda: f64,
    pub grid_idx: usize,
    pub accepted: bool,
    pub uphill: bool,
    pub n_rejections: usize,
}

/// One epoch: Jacobian, scaling update, then proposals along the damping grid
/// until one is accepted downhill or uphill. Rejected proposals leave the
/// weights untouched. After `max_traversals` grid exhaustions the epoch ends
/// without a step. `backend` should already be specific to this epoch.
pub fn lm_epoch(model: &Model, set: &[TrainingPair], state: &mut LmState, backend: &Backend, cfg: &LmConfig) -> Result<LmOutcome> {
    if state.dtd.len() != model.n_weights() {
        return Err(Error::DimensionMismatch { expected: model.n_weights(), got: state.dtd.len() });
    }
    let e_cur = *state.err_history.last().ok_or_else(|| Error::InvalidParams("LM state has no error history".into()))?;
    let w = DVector::from_vec(model.weights());
    let mut traversal = 0u64;
    let mut j = model.jacobian(set, &backend.derive(&[STREAM_JACOBIAN, traversal]))?;
    let mut r = DVector::from_vec(residuals(model, set, &backend.derive(&[STREAM_RESIDUAL, traversal]))?.r);
    lm::update_scaling(&mut state.dtd, &j);
    if state.grid.is_empty() {
        state.reset_grid(&j);
        state.idx = cfg.initial_index.min(lm::GRID_LEN - 1);
    }
    let mut n_rejections = 0usize;
    let mut trial = 0u64;
    loop {
        let lambda = state.lambda();
        let idx = state.idx;
        if let Ok(step) = lm::lm_step(&j, &r, lambda, &state.dtd) {
            let w_new = &w + &step;
            let candidate = model.with_weights(w_new.as_slice());
            if let Ok(candidate) = candidate {
                let e_new = residuals(&candidate, set, &backend.derive(&[STREAM_TRIAL, trial]))?.rms;
                trial += 1;
                let downhill = e_new < e_cur;
                let uphill = !downhill
                    && e_new.is_finite()
                    && state
                        .last_accepted_step
                        .as_ref()
                        .map(|old| lm::uphill_accept(e_new, &state.err_history, &step, &DVector::from_column_slice(old)))
                        .unwrap_or(false);
                if downhill || uphill {
                    state.on_accept();
                    state.err_history.push(e_new);
                    state.last_accepted_step = Some(step.as_slice().to_vec());
                    return Ok(LmOutcome { model: candidate, error: e_new, lambda, grid_idx: idx, accepted: true, uphill, n_rejections });
                }
            }
        }
        n_rejections += 1;
        if state.on_reject() == lm::Escalation::Exhausted {
            traversal += 1;
            if traversal >= cfg.max_traversals as u64 {
                state.reset_grid(&j);
                return Ok(LmOutcome {
                    model: model.clone(),
                    error: e_cur,
                    lambda: state.lambda(),
                    grid_idx: state.idx,
                    accepted: false,
                    uphill: false,
                    n_rejections,
                });
            }
            // fresh quantum evaluations, then a grid matched to the new Hessian
            j = model.jacobian(set, &backend.derive(&[STREAM_JACOBIAN, traversal]))?;
            r = DVector::from_vec(residuals(model, set, &backend.derive(&[STREAM_RESIDUAL, traversal]))?.r);
            lm::update_scaling(&mut state.dtd, &j);
            state.reset_grid(&j);
        }
    }
}

/// Per-pair descent on `½(d − O)²` with adjoint gradients: `w ← w − η ⊙ ∇E`.
pub fn backprop_epoch(model: &Model, set: &[TrainingPair], rates: &ClassRates) -> Result<Model> {
    rates.validate()?;
    let Model::Hamiltonian { evolution, .. } = model else {
        return Err(Error::InvalidParams("adjoint training needs the Hamiltonian model".into()));
    };
    if set.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let eta: Vec<f64> = model.weight_classes().into_iter().map(|c| rates.get(c)).collect();
    let mut current = model.clone();
    for pair in set {
        let Model::Hamiltonian { params, .. } = &current else { unreachable!() };
        let g = backprop::backprop_gradient(params, pair, evolution)?;
        let w: Vec<f64> = current.weights().iter().zip(&g).zip(&eta).map(|((w, g), e)| w - e * g).collect();
        current = current.with_weights(&w)?;
    }
    Ok(current)
}

/// Trains for `options.epochs` epochs. `on_epoch` sees the model and record
/// after every epoch. Sampling streams derive from `backend` mixed with
/// `options.seed`, the epoch number and the purpose of each evaluation.
pub fn train(
    model: &Model,
    set: &[TrainingPair],
    kind: OptimizerKind,
    backend: &Backend,
    options: &TrainOptions,
    mut on_epoch: impl FnMut(&Model, &EpochRecord),
) -> Result<TrainReport> {
    if set.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let run = backend.derive(&[options.seed]);
    let fdgd_cfg = options.fdgd.unwrap_or_else(|| FdgdConfig::defaults_for(model));
    let bp_rates = options.backprop_rates.unwrap_or(fdgd_cfg.rates);
    match kind {
        OptimizerKind::Fdgd => fdgd_cfg.validate()?,
        OptimizerKind::Backprop => {
            bp_rates.validate()?;
            if !matches!(model, Model::Hamiltonian { .. }) {
                return Err(Error::InvalidParams("adjoint training needs the Hamiltonian model".into()));
            }
        }
        OptimizerKind::Lm => {}
    }
    let start_rms = residuals(model, set, &run.derive(&[STREAM_INIT]))?.rms;
    let mut current = model.clone();
    let mut lm_state = (kind == OptimizerKind::Lm).then(|| LmState::new(model.n_weights(), start_rms));
    let mut records = Vec::with_capacity(options.epochs);
    let mut rms = start_rms;
    for epoch in 1..=options.epochs {
        let started = Instant::now();
        let eb = run.derive(&[epoch as u64]);
        let mut record = EpochRecord {
            epoch,
            rms,
            lambda: None,
            grid_idx: None,
            accepted: true,
            uphill: false,
            n_rejections: 0,
            wall_ms: None,
        };
        match kind {
            OptimizerKind::Lm => {
                let state = lm_state.as_mut().expect("LM state exists for LM runs");
                let out = lm_epoch(&current, set, state, &eb, &options.lm)?;
                current = out.model;
                rms = out.error;
                record.lambda = Some(out.lambda);
                record.grid_idx = Some(out.grid_idx);
                record.accepted = out.accepted;
                record.uphill = out.uphill;
                record.n_rejections = out.n_rejections;
            }
            OptimizerKind::Fdgd => {
                current = fdgd::fdgd_epoch(&current, set, &fdgd_cfg, &eb.derive(&[STREAM_FDGD]))?;
                rms = residuals(&current, set, &eb.derive(&[STREAM_EVAL]))?.rms;
            }
            OptimizerKind::Backprop => {
                current = backprop_epoch(&current, set, &bp_rates)?;
                rms = residuals(&current, set, &eb.derive(&[STREAM_EVAL]))?.rms;
            }
        }
        record.rms = rms;
        if options.record_wall_time {
            record.wall_ms = Some(started.elapsed().as_millis() as u64);
        }
        on_epoch(&current, &record);
        records.push(record);
    }
    Ok(TrainReport { model: current, records, start_rms, finish_rms: rms, lm_state })
}
