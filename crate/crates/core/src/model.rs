//! The two trainable witness models behind a common flat-weight interface.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{parameter_shift_grad_prepared, run_circuit_prepared, Backend, CircuitWeights};
use crate::dynamics::{propagate_final, step_propagators, EvolutionConfig, HamiltonianParams, ParamClass, StepPropagator};
use crate::error::{Error, Result};
use crate::optim::backprop::output_gradient;
use crate::training::TrainingPair;

/// Seed coordinate separating output evaluations from gradient shifts.
const OUTPUT_STREAM: u64 = 0x0u64;
const SHIFT_STREAM: u64 = 0x1u64;

/// Serialized parameters of either model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Checkpoint {
    Hamiltonian(HamiltonianParams),
    Circuit(CircuitWeights),
}

impl Checkpoint {
    pub fn n_qubits(&self) -> usize {
        match self {
            Checkpoint::Hamiltonian(p) => p.n_qubits,
            Checkpoint::Circuit(w) => w.n_qubits,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn into_model(self, evolution: EvolutionConfig) -> Model {
        match self {
            Checkpoint::Hamiltonian(params) => Model::Hamiltonian { params, evolution },
            Checkpoint::Circuit(w) => Model::Circuit(w),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    /// Segmented gate circuit; gradients by parameter shift.
    Circuit(CircuitWeights),
    /// Fourier-parameterized Hamiltonian; gradients by the adjoint method.
    Hamiltonian { params: HamiltonianParams, evolution: EvolutionConfig },
}

impl Model {
    pub fn n_qubits(&self) -> usize {
        match self {
            Model::Circuit(w) => w.n_qubits,
            Model::Hamiltonian { params, .. } => params.n_qubits,
        }
    }

    pub fn n_weights(&self) -> usize {
        match self {
            Model::Circuit(w) => w.len(),
            Model::Hamiltonian { params, .. } => params.n_weights(),
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        match self {
            Model::Circuit(w) => w.angles.clone(),
            Model::Hamiltonian { params, .. } => params.to_weights(),
        }
    }

    pub fn with_weights(&self, w: &[f64]) -> Result<Model> {
        Ok(match self {
            Model::Circuit(c) => Model::Circuit(c.with_angles(w.to_vec())?),
            Model::Hamiltonian { params, evolution } => {
                Model::Hamiltonian { params: params.with_weights(w)?, evolution: *evolution }
            }
        })
    }

    pub fn weight_classes(&self) -> Vec<ParamClass> {
        match self {
            Model::Circuit(w) => w.weight_classes(),
            Model::Hamiltonian { params, .. } => params.weight_classes(),
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        match self {
            Model::Circuit(w) => Checkpoint::Circuit(w.clone()),
            Model::Hamiltonian { params, .. } => Checkpoint::Hamiltonian(params.clone()),
        }
    }

    fn check_set(&self, set: &[TrainingPair]) -> Result<()> {
        if set.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let n = self.n_qubits();
        match set.iter().find(|p| p.input.n_qubits() != n) {
            Some(p) => Err(Error::DimensionMismatch { expected: n, got: p.input.n_qubits() }),
            None => Ok(()),
        }
    }

    fn propagators(&self) -> Result<Option<Vec<StepPropagator>>> {
        match self {
            Model::Circuit(_) => Ok(None),
            Model::Hamiltonian { params, evolution } => Ok(Some(step_propagators(params, evolution)?)),
        }
    }

    /// Witness output for every training pair. Pair `i` samples with
    /// `backend.derive([i, ·])`, so results do not depend on evaluation order.
    pub fn outputs(&self, set: &[TrainingPair], backend: &Backend) -> Result<Vec<f64>> {
        self.check_set(set)?;
        let props = self.propagators()?;
        if props.is_some() && matches!(backend, Backend::External { .. }) {
            return Err(Error::Backend("the Hamiltonian model runs on the local simulators only".into()));
        }
        set.par_iter()
            .enumerate()
            .map(|(i, p)| {
                let b = backend.derive(&[i as u64, OUTPUT_STREAM]);
                match (self, &props) {
                    (Model::Circuit(w), _) => {
                        run_circuit_prepared(w, &p.input, p.preparation.as_deref(), p.alpha, p.beta, &b).map(|e| e.value)
                    }
                    (Model::Hamiltonian { .. }, Some(props)) => {
                        let out = propagate_final(&p.input, props);
                        b.measure(&out, p.alpha, p.beta).map(|e| e.value)
                    }
                    (Model::Hamiltonian { .. }, None) => unreachable!("propagators built above"),
                }
            })
            .collect()
    }

    /// `J[i][j] = ∂O(x_i, w)/∂w_j`. Circuit entries come from parameter shifts
    /// evaluated on `backend`; Hamiltonian rows come from the exact adjoint
    /// recursion on the simulator, whatever the backend.
    pub fn jacobian(&self, set: &[TrainingPair], backend: &Backend) -> Result<DMatrix<f64>> {
        self.check_set(set)?;
        let n_w = self.n_weights();
        match self {
            Model::Circuit(w) => {
                let entries: Vec<f64> = (0..set.len() * n_w)
                    .into_par_iter()
                    .map(|k| {
                        let (i, j) = (k / n_w, k % n_w);
                        let p = &set[i];
                        let b = backend.derive(&[i as u64, SHIFT_STREAM]);
                        parameter_shift_grad_prepared(w, j, &p.input, p.preparation.as_deref(), p.alpha, p.beta, &b)
                    })
                    .collect::<Result<_>>()?;
                Ok(DMatrix::from_row_slice(set.len(), n_w, &entries))
            }
            Model::Hamiltonian { params, evolution } => {
                let props = step_propagators(params, evolution)?;
                let rows: Vec<Vec<f64>> = set
                    .par_iter()
                    .map(|p| output_gradient(params, &props, &p.input, p.alpha, p.beta))
                    .collect::<Result<_>>()?;
                Ok(DMatrix::from_fn(set.len(), n_w, |i, j| rows[i][j]))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::make_training_set;

    #[test]
    fn checkpoint_kind_is_detected() {
        let c = Model::Circuit(CircuitWeights::nominal(2, 4).unwrap()).checkpoint();
        let h = Model::Hamiltonian { params: HamiltonianParams::nominal(2).unwrap(), evolution: EvolutionConfig::default() }.checkpoint();
        assert!(matches!(Checkpoint::from_json(&c.to_json()).unwrap(), Checkpoint::Circuit(_)));
        assert!(matches!(Checkpoint::from_json(&h.to_json()).unwrap(), Checkpoint::Hamiltonian(_)));
        assert_eq!(Checkpoint::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn circuit_jacobian_shape_and_fd() {
        let model = Model::Circuit(crate::training::random_circuit(2, 4, 11).unwrap());
        let set = make_training_set(2).unwrap();
        let j = model.jacobian(&set, &Backend::Exact).unwrap();
        assert_eq!((j.nrows(), j.ncols()), (4, 20));
        let w = model.weights();
        let h = 1e-5;
        for col in 0..w.len() {
            let mut wp = w.clone();
            wp[col] += h;
            let mut wm = w.clone();
            wm[col] -= h;
            let op = model.with_weights(&wp).unwrap().outputs(&set, &Backend::Exact).unwrap();
            let om = model.with_weights(&wm).unwrap().outputs(&set, &Backend::Exact).unwrap();
            for row in 0..set.len() {
                let fd = (op[row] - om[row]) / (2.0 * h);
                assert!((fd - j[(row, col)]).abs() < 1e-6, "({row},{col}): {fd} vs {}", j[(row, col)]);
            }
        }
    }

    #[test]
    fn hamiltonian_jacobian_matches_fd() {
        let params = crate::training::random_hamiltonian(2, 200.0, 1, 5).unwrap();
        let model = Model::Hamiltonian { params, evolution: EvolutionConfig::new(40).unwrap() };
        let set = make_training_set(2).unwrap();
        let j = model.jacobian(&set, &Backend::Exact).unwrap();
        let w = model.weights();
        for col in 0..w.len() {
            let h = 1e-7;
            let mut wp = w.clone();
            wp[col] += h;
            let mut wm = w.clone();
            wm[col] -= h;
            let op = model.with_weights(&wp).unwrap().outputs(&set, &Backend::Exact).unwrap();
            let om = model.with_weights(&wm).unwrap().outputs(&set, &Backend::Exact).unwrap();
            for row in 0..set.len() {
                let fd = (op[row] - om[row]) / (2.0 * h);
                let an = j[(row, col)];
                assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-2), "({row},{col}): {fd} vs {an}");
            }
        }
    }

    #[test]
    fn external_backend_rejected_for_hamiltonian() {
        let model = Model::Hamiltonian { params: HamiltonianParams::nominal(2).unwrap(), evolution: EvolutionConfig::new(4).unwrap() };
        let backend = Backend::External { backend: std::sync::Arc::new(crate::circuit::UnavailableBackend), shots: 10 };
        assert!(matches!(model.outputs(&make_training_set(2).unwrap(), &backend), Err(Error::Backend(_))));
    }
}
