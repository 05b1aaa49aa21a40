//! Adjoint ("co-state") gradients for the Fourier-parameterized model.
//!
//! The co-state `p` is a Hermitian matrix carried backward through the same
//! step propagators as the forward density matrix: `p_k = U_k† p_{k+1} U_k`.
//! Differentiating each step propagator exactly, in the eigenbasis of its
//! Hamiltonian, makes the gradient the exact derivative of the discretized
//! model, so it agrees with finite differences to rounding.

use crate::dynamics::{fourier_basis, step_propagators, term_list, EvolutionConfig, HamiltonianParams, StepPropagator, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::qstate::{witness_expectation, zz_observable, QuantumState};
use crate::training::TrainingPair;

/// Co-state matrices at every step boundary, aligned with a [`Trajectory`].
#[derive(Clone, Debug)]
pub struct CostateTrajectory {
    pub times: Vec<f64>,
    pub costates: Vec<CMatrix>,
}

impl CostateTrajectory {
    pub fn final_costate(&self) -> &CMatrix {
        self.costates.last().expect("co-state trajectory is never empty")
    }
}

/// `p(t_f) = −(d − ⟨M⟩) M` with `M = σ_z^α σ_z^β`: the derivative of
/// `E = ½(d − ⟨M⟩)²` with respect to the final density matrix.
pub fn costate_boundary(final_state: &QuantumState, alpha: usize, beta: usize, target: f64) -> Result<CMatrix> {
    let o = witness_expectation(final_state, alpha, beta)?;
    let m = zz_observable(alpha, beta, final_state.n_qubits())?.matrix;
    Ok(m * C64::new(-(target - o), 0.0))
}

/// Evolves `p_final` backward through `props`.
pub fn costate_trajectory(props: &[StepPropagator], p_final: CMatrix) -> CostateTrajectory {
    let n = props.len();
    let mut costates = vec![CMatrix::zeros(0, 0); n + 1];
    let mut times = vec![0.0; n + 1];
    costates[n] = p_final;
    let mut t: f64 = props.iter().map(|p| p.dt).sum();
    times[n] = t;
    for k in (0..n).rev() {
        let u = &props[k].unitary;
        costates[k] = u.adjoint() * &costates[k + 1] * u;
        t -= props[k].dt;
        times[k] = t;
    }
    CostateTrajectory { times, costates }
}

/// `∂/∂w_c` of `tr(p_n ρ_n)` through every step, for forward states
/// `ρ_0..ρ_n` and co-states `p_0..p_n`.
fn adjoint_sum(params: &HamiltonianParams, props: &[StepPropagator], states: &[CMatrix], costates: &[CMatrix]) -> Vec<f64> {
    let n_qubits = params.n_qubits;
    let terms = term_list(n_qubits);
    let stride = 1 + 2 * params.harmonics();
    let mut grad = vec![0.0; terms.len() * stride];
    for (k, step) in props.iter().enumerate() {
        // d tr(p_{k+1} U ρ_k U†) = 2 Re tr(dU · G), G = ρ_k U† p_{k+1}
        let g = &states[k] * step.unitary.adjoint() * &costates[k + 1];
        let v = &step.eigenvectors;
        let mut y = v.adjoint() * g * v;
        let dt = step.dt;
        let e = &step.energies;
        for a in 0..e.len() {
            for b in 0..e.len() {
                let x = (e[a] - e[b]) * dt / 2.0;
                let sinc = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
                let phase = C64::from_polar(1.0, -(e[a] + e[b]) * dt / 2.0);
                y[(b, a)] *= C64::new(0.0, -dt) * phase * sinc;
            }
        }
        let bmat = v * y * v.adjoint();
        for (ti, term) in terms.iter().enumerate() {
            let g_term = 2.0 * term.trace_with(&bmat, n_qubits).re;
            for c in 0..stride {
                grad[ti * stride + c] += fourier_basis(c, params.harmonics(), step.t_mid, params.t_f_ns) * g_term;
            }
        }
    }
    grad
}

fn forward_matrices(input: &QuantumState, props: &[StepPropagator]) -> Vec<CMatrix> {
    let mut states = Vec::with_capacity(props.len() + 1);
    let mut rho = input.density_matrix();
    states.push(rho.clone());
    for p in props {
        rho = &p.unitary * rho * p.unitary.adjoint();
        states.push(rho.clone());
    }
    states
}

/// `∂⟨σ_z^α σ_z^β⟩(t_f) / ∂w` for every flat Fourier coefficient.
pub fn output_gradient(
    params: &HamiltonianParams,
    props: &[StepPropagator],
    input: &QuantumState,
    alpha: usize,
    beta: usize,
) -> Result<Vec<f64>> {
    if input.n_qubits() != params.n_qubits {
        return Err(Error::DimensionMismatch { expected: params.n_qubits, got: input.n_qubits() });
    }
    let m = zz_observable(alpha, beta, params.n_qubits)?.matrix;
    let states = forward_matrices(input, props);
    let costate = costate_trajectory(props, m);
    Ok(adjoint_sum(params, props, &states, &costate.costates))
}

/// Gradient of `E = ½(d − O(t_f))²` for one training pair.
pub fn backprop_gradient(params: &HamiltonianParams, pair: &TrainingPair, cfg: &EvolutionConfig) -> Result<Vec<f64>> {
    let props = step_propagators(params, cfg)?;
    let traj = crate::dynamics::evolve_with(&pair.input.to_mixed(), &props);
    backprop_from_trajectory(params, pair, &props, Some(&traj))
}

/// As [`backprop_gradient`] with the forward pass supplied by the caller.
pub fn backprop_from_trajectory(
    params: &HamiltonianParams,
    pair: &TrainingPair,
    props: &[StepPropagator],
    trajectory: Option<&Trajectory>,
) -> Result<Vec<f64>> {
    let traj = trajectory.ok_or_else(|| Error::MissingTrajectory("run the forward evolution first".into()))?;
    if traj.states.len() != props.len() + 1 {
        return Err(Error::MissingTrajectory(format!(
            "trajectory has {} states, expected {}",
            traj.states.len(),
            props.len() + 1
        )));
    }
    let states: Vec<CMatrix> = traj.states.iter().map(QuantumState::density_matrix).collect();
    let p_final = costate_boundary(traj.final_state(), pair.alpha, pair.beta, pair.target)?;
    let costate = costate_trajectory(props, p_final);
    Ok(adjoint_sum(params, props, &states, &costate.costates))
}
