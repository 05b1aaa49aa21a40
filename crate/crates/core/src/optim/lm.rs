//! Levenberg–Marquardt with a tabulated damping grid.
//!
//! The damping factor walks a 100-point logarithmic grid built from the
//! spectrum of `JᵀJ`: ten points down after an accepted step, one point up
//! after a rejection, and a fresh grid when the top is passed. The scaling
//! matrix `DᵀD` keeps the largest diagonal of `JᵀJ` seen so far.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigenvalues;

pub const GRID_LEN: usize = 100;
pub const STEPS_DOWN: usize = 10;
pub const STEPS_UP: usize = 1;
pub const DTD_FLOOR: f64 = 1e-6;
/// Eigenvalues of `JᵀJ` within this factor of the largest form the dominant cluster.
pub const CLUSTER_REL: f64 = 1e-3;
/// Below this the spectrum is treated as empty.
pub const SPECTRUM_FLOOR: f64 = 1e-12;
pub const FALLBACK_RANGE: (f64, f64) = (1e-7, 1e7);
/// Smallest ratio between the top damping value and the largest eigenvalue.
pub const HEAVY_DAMPING: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    /// Grid exhaustions allowed in one epoch before it is recorded as stalled.
    pub max_traversals: usize,
    /// Grid position used the first time a grid is built.
    pub initial_index: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self { max_traversals: 2, initial_index: 0 }
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// `[l_min/10, 1/l_max]` over the dominant eigenvalue cluster of `JᵀJ`.
///
/// When the curvature is large, `1/l_max` no longer damps anything; the top
/// of the grid is then raised to `HEAVY_DAMPING · l_max` so the largest
/// damping still dominates `JᵀJ`. The optimizer feeds this the spectrum in
/// `DᵀD`-scaled coordinates, see [`scaled_damping_grid`].
pub fn damping_range(jtj_eigenvalues: &[f64]) -> (f64, f64) {
    let l_max = jtj_eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(l_max > SPECTRUM_FLOOR) || !l_max.is_finite() {
        return FALLBACK_RANGE;
    }
    let l_min = jtj_eigenvalues
        .iter()
        .copied()
        .filter(|&l| l >= CLUSTER_REL * l_max)
        .fold(f64::INFINITY, f64::min);
    (l_min / 10.0, (1.0 / l_max).max(HEAVY_DAMPING * l_max))
}

pub fn damping_grid(j: &DMatrix<f64>) -> Vec<f64> {
    let jtj = j.transpose() * j;
    let (lo, hi) = damping_range(&symmetric_eigenvalues(&jtj));
    log_grid(lo, hi, GRID_LEN)
}

/// Grid from the spectrum of `D⁻¹ JᵀJ D⁻¹`, the curvature seen by `λ DᵀD`.
pub fn scaled_damping_grid(j: &DMatrix<f64>, dtd: &[f64]) -> Vec<f64> {
    let mut js = j.clone();
    for (c, d) in dtd.iter().enumerate() {
        js.column_mut(c).scale_mut(1.0 / d.sqrt());
    }
    damping_grid(&js)
}

/// `dtd[j] = max(dtd[j], (JᵀJ)[j][j], 1e-6)`.
pub fn update_scaling(dtd: &mut [f64], j: &DMatrix<f64>) {
    for (c, d) in dtd.iter_mut().enumerate() {
        let diag = j.column(c).norm_squared();
        *d = d.max(diag).max(DTD_FLOOR);
    }
}

/// Solves `(JᵀJ + λ DᵀD) δw = Jᵀr` with `r = d − O`, so `δw` moves outputs
/// toward their targets (Gauss–Newton as `λ → 0`). Uses an SVD of the normal
/// matrix; directions with vanishing singular values are dropped.
pub fn lm_step(j: &DMatrix<f64>, r: &DVector<f64>, lambda: f64, dtd: &[f64]) -> Result<DVector<f64>> {
    if j.nrows() != r.len() {
        return Err(Error::DimensionMismatch { expected: j.nrows(), got: r.len() });
    }
    if dtd.len() != j.ncols() {
        return Err(Error::DimensionMismatch { expected: j.ncols(), got: dtd.len() });
    }
    if j.iter().chain(r.iter()).any(|x| !x.is_finite()) || !lambda.is_finite() {
        return Err(Error::NonFinite("Levenberg-Marquardt system"));
    }
    let mut a = j.transpose() * j;
    for (c, d) in dtd.iter().enumerate() {
        a[(c, c)] += lambda * d;
    }
    let b = j.transpose() * r;
    let dim = a.nrows();
    let svd = a.svd(true, true);
    let s_max = svd.singular_values.max();
    if !(s_max > 0.0) {
        return Err(Error::Singular);
    }
    let eps = s_max * dim as f64 * f64::EPSILON;
    let step = svd.solve(&b, eps).map_err(|_| Error::Singular)?;
    if step.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(step)
}

/// `β = cos(δw_new, δw_old)`, zero when either vector vanishes.
pub fn step_cosine(new: &DVector<f64>, old: &DVector<f64>) -> f64 {
    let denom = new.norm() * old.norm();
    if denom == 0.0 {
        0.0
    } else {
        (new.dot(old) / denom).clamp(-1.0, 1.0)
    }
}

/// `(1 − β) E_new ≤ min(history)`.
pub fn uphill_accept(e_new: f64, err_history: &[f64], new: &DVector<f64>, old: &DVector<f64>) -> bool {
    let best = err_history.iter().copied().fold(f64::INFINITY, f64::min);
    (1.0 - step_cosine(new, old)) * e_new <= best
}

/// What the schedule did after a rejection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Escalation {
    Raised,
    /// The grid was exhausted: the caller must rebuild it from a fresh `JᵀJ`.
    Exhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmState {
    pub grid: Vec<f64>,
    pub idx: usize,
    pub dtd: Vec<f64>,
    /// Accepted epoch errors, starting with the error of the initial weights.
    pub err_history: Vec<f64>,
    pub last_accepted_step: Option<Vec<f64>>,
}

impl LmState {
    pub fn new(n_weights: usize, initial_error: f64) -> Self {
        Self {
            grid: Vec::new(),
            idx: 0,
            dtd: vec![DTD_FLOOR; n_weights],
            err_history: vec![initial_error],
            last_accepted_step: None,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.grid[self.idx]
    }

    /// Rebuilds the grid from `j` and the current scaling; call after
    /// [`update_scaling`].
    pub fn reset_grid(&mut self, j: &DMatrix<f64>) {
        self.grid = scaled_damping_grid(j, &self.dtd);
        self.idx = 0;
    }

    pub fn on_accept(&mut self) {
        self.idx = self.idx.saturating_sub(STEPS_DOWN);
    }

    /// Moves one point up. Passing the top leaves `idx` at 0 and asks for a
    /// new grid; the caller rebuilds it from the current `JᵀJ`.
    pub fn on_reject(&mut self) -> Escalation {
        if self.idx + STEPS_UP >= self.grid.len() {
            self.idx = 0;
            Escalation::Exhausted
        } else {
            self.idx += STEPS_UP;
            Escalation::Raised
        }
    }

    pub fn best_error(&self) -> f64 {
        self.err_history.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Applies the schedule for one outcome: accepted steps move ten points down,
/// rejections one point up, rebuilding the grid from `j` when it runs out.
pub fn lm_schedule(state: &mut LmState, accepted: bool, j: &DMatrix<f64>) -> Escalation {
    if accepted {
        state.on_accept();
        Escalation::Raised
    } else {
        let e = state.on_reject();
        if e == Escalation::Exhausted {
            state.reset_grid(j);
        }
        e
    }
}
