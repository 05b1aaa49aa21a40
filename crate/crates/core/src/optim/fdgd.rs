//! Coordinate-wise finite-difference gradient descent.
//!
//! For each training pair and each coefficient in turn: perturb the
//! coefficient by `δ·|w|`, difference the pair error forward, and step the
//! coefficient against the gradient before moving on.

use serde::{Deserialize, Serialize};

use crate::circuit::Backend;
use crate::dynamics::ParamClass;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::training::TrainingPair;

/// A value per parameter class; learning rates here, zero meaning frozen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRates {
    pub tunneling: f64,
    pub bias: f64,
    pub coupling: f64,
}

impl ClassRates {
    pub fn get(&self, class: ParamClass) -> f64 {
        match class {
            ParamClass::Tunneling => self.tunneling,
            ParamClass::Bias => self.bias,
            ParamClass::Coupling => self.coupling,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for r in [self.tunneling, self.bias, self.coupling] {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidParams(format!("learning rates must be finite and non-negative, got {r}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdgdConfig {
    pub rates: ClassRates,
    /// Relative perturbation: `Δw = δ·|w|`, or `δ` when `w = 0`.
    pub delta: f64,
}

impl FdgdConfig {
    /// Continuous-time model: tunneling `2e-8`, bias frozen, coupling `4e-7`, `δ = 0.02%`.
    pub fn hamiltonian_defaults() -> Self {
        Self { rates: ClassRates { tunneling: 2e-8, bias: 0.0, coupling: 4e-7 }, delta: 2e-4 }
    }

    /// Gate model: tunneling `1e-2`, bias and coupling `1e-3`, `δ = 0.02%`.
    pub fn circuit_defaults() -> Self {
        Self { rates: ClassRates { tunneling: 1e-2, bias: 1e-3, coupling: 1e-3 }, delta: 2e-4 }
    }

    pub fn defaults_for(model: &Model) -> Self {
        match model {
            Model::Circuit(_) => Self::circuit_defaults(),
            Model::Hamiltonian { .. } => Self::hamiltonian_defaults(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        if self.delta == 0.0 {
            return Err(Error::ZeroPerturbation);
        }
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(Error::InvalidParams(format!("perturbation must be positive, got {}", self.delta)));
        }
        Ok(())
    }
}

/// `(E_new − E_old) / Δw`.
pub fn forward_difference(e_old: f64, e_new: f64, dw: f64) -> f64 {
    (e_new - e_old) / dw
}

pub fn perturbation(w: f64, delta: f64) -> f64 {
    if w == 0.0 {
        delta
    } else {
        delta * w.abs()
    }
}

/// `½(d − O)²` for one pair.
pub fn pair_error(model: &Model, pair: &TrainingPair, backend: &Backend) -> Result<f64> {
    let o = model.outputs(std::slice::from_ref(pair), backend)?[0];
    Ok(0.5 * (pair.target - o).powi(2))
}

/// One pass over every pair and every trainable coefficient. `backend` should
/// already be specific to this epoch; each `(pair, coefficient)` derives its
/// own stream, shared by the base and perturbed evaluations.
pub fn fdgd_epoch(model: &Model, set: &[TrainingPair], cfg: &FdgdConfig, backend: &Backend) -> Result<Model> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let classes = model.weight_classes();
    let mut current = model.clone();
    let mut w = model.weights();
    for (i, pair) in set.iter().enumerate() {
        for c in 0..w.len() {
            let eta = cfg.rates.get(classes[c]);
            if eta == 0.0 {
                continue;
            }
            let b = backend.derive(&[i as u64, c as u64]);
            let e_old = pair_error(&current, pair, &b)?;
            let dw = perturbation(w[c], cfg.delta);
            let mut probe = w.clone();
            probe[c] += dw;
            let e_new = pair_error(&current.with_weights(&probe)?, pair, &b)?;
            w[c] -= eta * forward_difference(e_old, e_new, dw);
            current = current.with_weights(&w)?;
        }
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::CircuitWeights;
    use crate::training::make_training_set;

    #[test]
    fn forward_difference_example() {
        assert!((forward_difference(0.50, 0.45, 0.01) + 5.0).abs() < 1e-12);
    }

    #[test]
    fn default_tables() {
        let h = FdgdConfig::hamiltonian_defaults();
        assert_eq!((h.rates.tunneling, h.rates.bias, h.rates.coupling, h.delta), (2e-8, 0.0, 4e-7, 2e-4));
        let c = FdgdConfig::circuit_defaults();
        assert_eq!((c.rates.tunneling, c.rates.bias, c.rates.coupling), (1e-2, 1e-3, 1e-3));
    }

    #[test]
    fn zero_rates_leave_weights() {
        let model = Model::Circuit(CircuitWeights::nominal(2, 4).unwrap());
        let cfg = FdgdConfig { rates: ClassRates { tunneling: 0.0, bias: 0.0, coupling: 0.0 }, delta: 2e-4 };
        let set = make_training_set(2).unwrap();
        assert_eq!(fdgd_epoch(&model, &set, &cfg, &Backend::Exact).unwrap(), model);
    }

    #[test]
    fn zero_perturbation_rejected() {
        let model = Model::Circuit(CircuitWeights::nominal(2, 4).unwrap());
        let cfg = FdgdConfig { delta: 0.0, ..FdgdConfig::circuit_defaults() };
        let set = make_training_set(2).unwrap();
        assert!(matches!(fdgd_epoch(&model, &set, &cfg, &Backend::Exact), Err(Error::ZeroPerturbation)));
    }

    #[test]
    fn epoch_lowers_error() {
        let model = Model::Circuit(CircuitWeights::nominal(2, 4).unwrap());
        let cfg = FdgdConfig { rates: ClassRates { tunneling: 0.02, bias: 0.02, coupling: 0.02 }, delta: 1e-4 };
        let set = make_training_set(2).unwrap();
        let before = crate::optim::residuals(&model, &set, &Backend::Exact).unwrap().rms;
        let next = fdgd_epoch(&model, &set, &cfg, &Backend::Exact).unwrap();
        let after = crate::optim::residuals(&next, &set, &Backend::Exact).unwrap().rms;
        assert!(after < before, "{after} !< {before}");
    }
}
