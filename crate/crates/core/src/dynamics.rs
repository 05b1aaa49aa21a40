//! Time-dependent qubit Hamiltonians and density-matrix propagation.
//!
//! Units: ħ = 1. Parameters are angular frequencies in rad/ns and times are in
//! ns, so a tunneling amplitude `K` rotates a qubit by `2·K·t` radians.
//!
//! The Hamiltonian is
//! `H(t) = Σ_i K_i(t) σ_x^i + Σ_i ε_i(t) σ_z^i + Σ_{i<j} ζ_ij(t) σ_z^i σ_z^j`,
//! each coefficient a truncated Fourier series over `[0, t_f]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, qubit_bit, CMatrix, CVector, C64};
use crate::qstate::{check_cap, Observable, QuantumState, StateData, DEFAULT_QUBIT_CAP};

pub const DEFAULT_T_F_NS: f64 = 200.0;
pub const DEFAULT_N_STEPS: usize = 400;
pub const DEFAULT_FOURIER_N: usize = 3;

/// Nominal initial magnitudes (GHz) for the continuous-time model.
pub const INIT_TUNNELING: f64 = 2.5e-3;
pub const INIT_BIAS: f64 = 1e-4;
pub const INIT_COUPLING: f64 = 1e-4;

/// `w(t) = w0 + Σ_j S_j sin(jπt/t_f) + C_j cos(jπt/t_f)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierParam {
    pub w0: f64,
    #[serde(rename = "S")]
    pub sin: Vec<f64>,
    #[serde(rename = "C")]
    pub cos: Vec<f64>,
}

impl FourierParam {
    pub fn constant(w0: f64, harmonics: usize) -> Self {
        Self { w0, sin: vec![0.0; harmonics], cos: vec![0.0; harmonics] }
    }

    pub fn harmonics(&self) -> usize {
        self.sin.len()
    }

    /// Number of trainable coefficients: `1 + 2n`.
    pub fn n_coeffs(&self) -> usize {
        1 + 2 * self.harmonics()
    }

    fn validate(&self) -> Result<()> {
        if self.sin.len() != self.cos.len() {
            return Err(Error::InvalidParams("S and C must have the same length".into()));
        }
        let finite = self.w0.is_finite() && self.sin.iter().chain(&self.cos).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("Fourier coefficients"));
        }
        Ok(())
    }

    /// Unchecked evaluation; `t` may lie anywhere.
    pub fn value(&self, t: f64, t_f: f64) -> f64 {
        let mut w = self.w0;
        for j in 0..self.harmonics() {
            let arg = (j + 1) as f64 * PI * t / t_f;
            w += self.sin[j] * arg.sin() + self.cos[j] * arg.cos();
        }
        w
    }

    /// Coefficient `k` in the flat order `[w0, S_1..S_n, C_1..C_n]`.
    pub fn coeff(&self, k: usize) -> f64 {
        let n = self.harmonics();
        match k {
            0 => self.w0,
            k if k <= n => self.sin[k - 1],
            k => self.cos[k - 1 - n],
        }
    }

    fn coeff_mut(&mut self, k: usize) -> &mut f64 {
        let n = self.harmonics();
        match k {
            0 => &mut self.w0,
            k if k <= n => &mut self.sin[k - 1],
            k => &mut self.cos[k - 1 - n],
        }
    }
}

/// Derivative of `w(t)` with respect to flat coefficient `k` of a series with `harmonics` terms.
pub fn fourier_basis(k: usize, harmonics: usize, t: f64, t_f: f64) -> f64 {
    match k {
        0 => 1.0,
        k if k <= harmonics => (k as f64 * PI * t / t_f).sin(),
        k => ((k - harmonics) as f64 * PI * t / t_f).cos(),
    }
}

/// Checked evaluation of a Fourier-parameterized weight at `t ∈ [0, t_f]`.
pub fn fourier_eval(p: &FourierParam, t: f64, t_f: f64) -> Result<f64> {
    let slack = 1e-12 * t_f.abs();
    if !(t >= -slack && t <= t_f + slack) {
        return Err(Error::TimeOutOfRange { t, t_f });
    }
    Ok(p.value(t, t_f))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamClass {
    Tunneling,
    Bias,
    Coupling,
}

/// One Pauli-string term of the Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HamiltonianTerm {
    X(usize),
    Z(usize),
    ZZ(usize, usize),
}

impl HamiltonianTerm {
    pub fn class(self) -> ParamClass {
        match self {
            HamiltonianTerm::X(_) => ParamClass::Tunneling,
            HamiltonianTerm::Z(_) => ParamClass::Bias,
            HamiltonianTerm::ZZ(..) => ParamClass::Coupling,
        }
    }

    /// Adds `coeff · P` into `h`.
    pub fn accumulate(self, coeff: f64, n_qubits: usize, h: &mut CMatrix) {
        let dim = h.nrows();
        match self {
            HamiltonianTerm::X(q) => {
                let mask = 1usize << (n_qubits - 1 - q);
                for i in 0..dim {
                    h[(i, i ^ mask)] += coeff;
                }
            }
            HamiltonianTerm::Z(q) => {
                for i in 0..dim {
                    h[(i, i)] += coeff * z_sign(i, q, n_qubits);
                }
            }
            HamiltonianTerm::ZZ(a, b) => {
                for i in 0..dim {
                    h[(i, i)] += coeff * z_sign(i, a, n_qubits) * z_sign(i, b, n_qubits);
                }
            }
        }
    }

    /// `tr(P · B)` without forming `P`.
    pub fn trace_with(self, b: &CMatrix, n_qubits: usize) -> C64 {
        let dim = b.nrows();
        let mut acc = C64::new(0.0, 0.0);
        match self {
            HamiltonianTerm::X(q) => {
                let mask = 1usize << (n_qubits - 1 - q);
                for i in 0..dim {
                    acc += b[(i ^ mask, i)];
                }
            }
            HamiltonianTerm::Z(q) => {
                for i in 0..dim {
                    acc += b[(i, i)] * z_sign(i, q, n_qubits);
                }
            }
            HamiltonianTerm::ZZ(a, c) => {
                for i in 0..dim {
                    acc += b[(i, i)] * (z_sign(i, a, n_qubits) * z_sign(i, c, n_qubits));
                }
            }
        }
        acc
    }
}

#[inline]
fn z_sign(index: usize, qubit: usize, n_qubits: usize) -> f64 {
    1.0 - 2.0 * qubit_bit(index, qubit, n_qubits) as f64
}

/// Unordered pairs `i < j` in lexicographic order.
pub fn qubit_pairs(n_qubits: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n_qubits * n_qubits.saturating_sub(1) / 2);
    for i in 0..n_qubits {
        for j in i + 1..n_qubits {
            out.push((i, j));
        }
    }
    out
}

/// Term order shared by every schedule: `[X_0.., Z_0.., ZZ_pairs..]`.
pub fn term_list(n_qubits: usize) -> Vec<HamiltonianTerm> {
    let mut terms: Vec<HamiltonianTerm> = (0..n_qubits).map(HamiltonianTerm::X).collect();
    terms.extend((0..n_qubits).map(HamiltonianTerm::Z));
    terms.extend(qubit_pairs(n_qubits).into_iter().map(|(a, b)| HamiltonianTerm::ZZ(a, b)));
    terms
}

pub fn dense_hamiltonian(n_qubits: usize, coeffs: &[f64]) -> CMatrix {
    let dim = 1usize << n_qubits;
    let mut h = CMatrix::zeros(dim, dim);
    for (term, &c) in term_list(n_qubits).into_iter().zip(coeffs) {
        if c != 0.0 {
            term.accumulate(c, n_qubits, &mut h);
        }
    }
    h
}

/// Anything that yields Hamiltonian term coefficients as a function of time.
pub trait HamiltonianSchedule {
    fn n_qubits(&self) -> usize;
    fn duration(&self) -> f64;
    /// Coefficients aligned with [`term_list`].
    fn coefficients(&self, t: f64) -> Vec<f64>;
}

/// Fourier-parameterized control fields. Also the checkpoint format of the
/// continuous-time model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHamiltonianParams")]
pub struct HamiltonianParams {
    pub n_qubits: usize,
    pub t_f_ns: f64,
    #[serde(rename = "K")]
    pub tunneling: Vec<FourierParam>,
    #[serde(rename = "eps")]
    pub bias: Vec<FourierParam>,
    #[serde(rename = "zeta")]
    pub coupling: Vec<FourierParam>,
}

#[derive(Deserialize)]
struct RawHamiltonianParams {
    n_qubits: usize,
    t_f_ns: f64,
    #[serde(rename = "K")]
    tunneling: Vec<FourierParam>,
    #[serde(rename = "eps")]
    bias: Vec<FourierParam>,
    #[serde(rename = "zeta")]
    coupling: Vec<FourierParam>,
}

impl TryFrom<RawHamiltonianParams> for HamiltonianParams {
    type Error = Error;

    fn try_from(raw: RawHamiltonianParams) -> Result<Self> {
        let hp = HamiltonianParams {
            n_qubits: raw.n_qubits,
            t_f_ns: raw.t_f_ns,
            tunneling: raw.tunneling,
            bias: raw.bias,
            coupling: raw.coupling,
        };
        hp.validate()?;
        Ok(hp)
    }
}

impl HamiltonianParams {
    pub fn constant(n_qubits: usize, t_f_ns: f64, harmonics: usize, k: f64, eps: f64, zeta: f64) -> Result<Self> {
        let n_pairs = n_qubits * n_qubits.saturating_sub(1) / 2;
        let hp = Self {
            n_qubits,
            t_f_ns,
            tunneling: vec![FourierParam::constant(k, harmonics); n_qubits],
            bias: vec![FourierParam::constant(eps, harmonics); n_qubits],
            coupling: vec![FourierParam::constant(zeta, harmonics); n_pairs],
        };
        hp.validate()?;
        Ok(hp)
    }

    /// Constant fields at the nominal initial magnitudes, `t_f = 200 ns`, `n = 3`.
    pub fn nominal(n_qubits: usize) -> Result<Self> {
        Self::constant(n_qubits, DEFAULT_T_F_NS, DEFAULT_FOURIER_N, INIT_TUNNELING, INIT_BIAS, INIT_COUPLING)
    }

    pub fn validate(&self) -> Result<()> {
        check_cap(self.n_qubits, DEFAULT_QUBIT_CAP)?;
        if !(self.t_f_ns > 0.0 && self.t_f_ns.is_finite()) {
            return Err(Error::InvalidParams(format!("t_f must be positive, got {}", self.t_f_ns)));
        }
        if self.tunneling.len() != self.n_qubits || self.bias.len() != self.n_qubits {
            return Err(Error::InvalidParams(format!(
                "expected {} tunneling and bias entries, got {} and {}",
                self.n_qubits,
                self.tunneling.len(),
                self.bias.len()
            )));
        }
        let n_pairs = self.n_qubits * (self.n_qubits - 1) / 2;
        if self.coupling.len() != n_pairs {
            return Err(Error::InvalidParams(format!(
                "expected {n_pairs} coupling entries, got {}",
                self.coupling.len()
            )));
        }
        let harmonics = self.harmonics();
        for p in self.all_params() {
            p.validate()?;
            if p.harmonics() != harmonics {
                return Err(Error::InvalidParams("all parameters must share one harmonic count".into()));
            }
        }
        Ok(())
    }

    pub fn harmonics(&self) -> usize {
        self.tunneling.first().map(FourierParam::harmonics).unwrap_or(0)
    }

    /// Parameters in term order: K per qubit, ε per qubit, ζ per pair.
    pub fn all_params(&self) -> impl Iterator<Item = &FourierParam> {
        self.tunneling.iter().chain(&self.bias).chain(&self.coupling)
    }

    fn all_params_mut(&mut self) -> impl Iterator<Item = &mut FourierParam> {
        self.tunneling.iter_mut().chain(self.bias.iter_mut()).chain(self.coupling.iter_mut())
    }

    pub fn n_weights(&self) -> usize {
        (2 * self.n_qubits + self.coupling.len()) * (1 + 2 * self.harmonics())
    }

    /// Flat coefficient vector: parameters in term order, each as `[w0, S.., C..]`.
    pub fn to_weights(&self) -> Vec<f64> {
        self.all_params().flat_map(|p| (0..p.n_coeffs()).map(move |k| p.coeff(k))).collect()
    }

    pub fn with_weights(&self, w: &[f64]) -> Result<Self> {
        if w.len() != self.n_weights() {
            return Err(Error::WeightCount { expected: self.n_weights(), got: w.len() });
        }
        let mut out = self.clone();
        let stride = 1 + 2 * self.harmonics();
        for (pi, p) in out.all_params_mut().enumerate() {
            for k in 0..stride {
                *p.coeff_mut(k) = w[pi * stride + k];
            }
        }
        out.validate()?;
        Ok(out)
    }

    /// `(term index, coefficient index within the series)` of flat weight `c`.
    pub fn weight_location(&self, c: usize) -> (usize, usize) {
        let stride = 1 + 2 * self.harmonics();
        (c / stride, c % stride)
    }

    pub fn weight_classes(&self) -> Vec<ParamClass> {
        let stride = 1 + 2 * self.harmonics();
        term_list(self.n_qubits)
            .into_iter()
            .flat_map(|t| std::iter::repeat(t.class()).take(stride))
            .collect()
    }
}

impl HamiltonianSchedule for HamiltonianParams {
    fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    fn duration(&self) -> f64 {
        self.t_f_ns
    }

    fn coefficients(&self, t: f64) -> Vec<f64> {
        self.all_params().map(|p| p.value(t, self.t_f_ns)).collect()
    }
}

/// H(t) as a dense Hermitian matrix.
pub fn build_hamiltonian(hp: &HamiltonianParams, t: f64) -> Result<Observable> {
    hp.validate()?;
    if !(0.0..=hp.t_f_ns).contains(&t) {
        return Err(Error::TimeOutOfRange { t, t_f: hp.t_f_ns });
    }
    Observable::new(dense_hamiltonian(hp.n_qubits, &hp.coefficients(t)), format!("H({t})"))
}

/// Equal-length pieces of constant Hamiltonian coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseSchedule {
    pub n_qubits: usize,
    pub piece_duration: f64,
    pub pieces: Vec<Vec<f64>>,
}

impl HamiltonianSchedule for PiecewiseSchedule {
    fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    fn duration(&self) -> f64 {
        self.piece_duration * self.pieces.len() as f64
    }

    fn coefficients(&self, t: f64) -> Vec<f64> {
        let idx = ((t / self.piece_duration).floor().max(0.0) as usize).min(self.pieces.len() - 1);
        self.pieces[idx].clone()
    }
}

/// Per-segment constant values of each parameter, indexed `[segment][qubit or pair]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentValues {
    pub segment_duration: f64,
    pub tunneling: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
    pub coupling: Vec<Vec<f64>>,
}

/// Samples every Fourier parameter at the midpoint of each of `n_segments` equal segments.
pub fn piecewise_constant_params(hp: &HamiltonianParams, n_segments: usize) -> Result<SegmentValues> {
    if n_segments == 0 {
        return Err(Error::InvalidParams("n_segments must be at least 1".into()));
    }
    let tau = hp.t_f_ns / n_segments as f64;
    let sample = |ps: &[FourierParam]| -> Vec<Vec<f64>> {
        (0..n_segments)
            .map(|s| {
                let t = (s as f64 + 0.5) * tau;
                ps.iter().map(|p| p.value(t, hp.t_f_ns)).collect()
            })
            .collect()
    };
    Ok(SegmentValues {
        segment_duration: tau,
        tunneling: sample(&hp.tunneling),
        bias: sample(&hp.bias),
        coupling: sample(&hp.coupling),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub n_steps: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self { n_steps: DEFAULT_N_STEPS }
    }
}

impl EvolutionConfig {
    pub fn new(n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidParams("n_steps must be at least 1".into()));
        }
        Ok(Self { n_steps })
    }
}

/// `U = exp(−i H Δt)` for one step, kept with the eigenbasis of `H`.
#[derive(Clone, Debug)]
pub struct StepPropagator {
    pub t_mid: f64,
    pub dt: f64,
    pub energies: Vec<f64>,
    pub eigenvectors: CMatrix,
    pub unitary: CMatrix,
}

impl StepPropagator {
    pub fn new(h: &CMatrix, t_mid: f64, dt: f64) -> Result<Self> {
        let (energies, v) = hermitian_eigen(h)?;
        let phases = CVector::from_iterator(energies.len(), energies.iter().map(|&e| C64::from_polar(1.0, -e * dt)));
        let unitary = &v * CMatrix::from_diagonal(&phases) * v.adjoint();
        if unitary.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix exponential"));
        }
        Ok(Self { t_mid, dt, energies, eigenvectors: v, unitary })
    }
}

/// Midpoint-sampled propagators `U_k = exp(−i H(t_k + Δt/2) Δt)`, `Δt = t_f / n_steps`.
pub fn step_propagators<S: HamiltonianSchedule + ?Sized>(schedule: &S, cfg: &EvolutionConfig) -> Result<Vec<StepPropagator>> {
    if cfg.n_steps == 0 {
        return Err(Error::InvalidParams("n_steps must be at least 1".into()));
    }
    let n = schedule.n_qubits();
    let dt = schedule.duration() / cfg.n_steps as f64;
    (0..cfg.n_steps)
        .map(|k| {
            let t_mid = (k as f64 + 0.5) * dt;
            let h = dense_hamiltonian(n, &schedule.coefficients(t_mid));
            StepPropagator::new(&h, t_mid, dt)
        })
        .collect()
}

/// States at every step boundary, `states[0] = ρ0`, `states[n_steps] = ρ(t_f)`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<QuantumState>,
}

impl Trajectory {
    pub fn final_state(&self) -> &QuantumState {
        self.states.last().expect("trajectory always holds the initial state")
    }
}

pub fn evolve<S: HamiltonianSchedule + ?Sized>(rho0: &QuantumState, schedule: &S, cfg: &EvolutionConfig) -> Result<Trajectory> {
    if schedule.n_qubits() != rho0.n_qubits() {
        return Err(Error::DimensionMismatch { expected: schedule.n_qubits(), got: rho0.n_qubits() });
    }
    let props = step_propagators(schedule, cfg)?;
    Ok(evolve_with(rho0, &props))
}

/// Propagates through precomputed steps, keeping the input's representation.
pub fn evolve_with(rho0: &QuantumState, props: &[StepPropagator]) -> Trajectory {
    let n = rho0.n_qubits();
    let mut times = Vec::with_capacity(props.len() + 1);
    let mut states = Vec::with_capacity(props.len() + 1);
    times.push(0.0);
    states.push(rho0.clone());
    let mut t = 0.0;
    for p in props {
        let next = match states.last().unwrap().data() {
            StateData::Pure(psi) => QuantumState::from_vector_unchecked(n, &p.unitary * psi),
            StateData::Mixed(rho) => QuantumState::from_matrix_unchecked(n, &p.unitary * rho * p.unitary.adjoint()),
        };
        t += p.dt;
        times.push(t);
        states.push(next);
    }
    Trajectory { times, states }
}

/// Final state only; avoids storing the trajectory.
pub fn propagate_final(rho0: &QuantumState, props: &[StepPropagator]) -> QuantumState {
    let n = rho0.n_qubits();
    match rho0.data() {
        StateData::Pure(psi) => {
            let out = props.iter().fold(psi.clone(), |v, p| &p.unitary * v);
            QuantumState::from_vector_unchecked(n, out)
        }
        StateData::Mixed(rho) => {
            let out = props.iter().fold(rho.clone(), |r, p| &p.unitary * r * p.unitary.adjoint());
            QuantumState::from_matrix_unchecked(n, out)
        }
    }
}
