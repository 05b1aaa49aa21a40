//! Gate-model realization of the piecewise-constant evolution.
//!
//! Each time segment applies, for every qubit `q`, `R_y(θ_q)` then `R_z(φ_q)`,
//! then for every pair `i < j` (lexicographic) the coupler
//! `CNOT(i→j) · R_z(θ_ij on j) · CNOT(i→j) = exp(−i θ_ij Z_i Z_j / 2)`.
//! Rotations follow `R_a(θ) = exp(−i θ σ_a / 2)`, so every weight is the angle
//! of a single-Pauli-generator rotation and the ±π/2 parameter-shift rule is exact.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    qubit_pairs, term_list, ParamClass, PiecewiseSchedule, SegmentValues, DEFAULT_T_F_NS,
};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};
use crate::qstate::{
    check_cap, check_pair, sample_witness, witness_expectation, witness_from_counts, QuantumState, StateData,
    WitnessEstimate, DEFAULT_QUBIT_CAP,
};
use crate::seed::derive_seed;

pub const DEFAULT_SEGMENTS: usize = 4;

/// Nominal gate-model initial magnitudes (GHz), converted to angles by `2·value·τ`.
pub const GATE_INIT_TUNNELING: f64 = 2.0e-3;
pub const GATE_INIT_BIAS: f64 = 1.0e-4;
pub const GATE_INIT_COUPLING: f64 = 1.0e-4;

/// Weights per segment: `2N + N(N−1)/2`.
pub fn weights_per_segment(n_qubits: usize) -> usize {
    2 * n_qubits + n_qubits * n_qubits.saturating_sub(1) / 2
}

/// Rotation angles of the segmented circuit, laid out per segment as
/// `[R_y per qubit, R_z per qubit, ZZ per pair]`. Also the circuit checkpoint format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCircuitWeights")]
pub struct CircuitWeights {
    pub n_qubits: usize,
    pub n_segments: usize,
    pub angles: Vec<f64>,
}

#[derive(Deserialize)]
struct RawCircuitWeights {
    n_qubits: usize,
    n_segments: usize,
    angles: Vec<f64>,
}

impl TryFrom<RawCircuitWeights> for CircuitWeights {
    type Error = Error;

    fn try_from(raw: RawCircuitWeights) -> Result<Self> {
        CircuitWeights::new(raw.n_qubits, raw.n_segments, raw.angles)
    }
}

impl CircuitWeights {
    pub fn new(n_qubits: usize, n_segments: usize, angles: Vec<f64>) -> Result<Self> {
        check_cap(n_qubits, DEFAULT_QUBIT_CAP)?;
        if n_segments == 0 {
            return Err(Error::InvalidParams("n_segments must be at least 1".into()));
        }
        let expected = n_segments * weights_per_segment(n_qubits);
        if angles.len() != expected {
            return Err(Error::WeightCount { expected, got: angles.len() });
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("circuit angles"));
        }
        Ok(Self { n_qubits, n_segments, angles })
    }

    pub fn zeros(n_qubits: usize, n_segments: usize) -> Result<Self> {
        Self::new(n_qubits, n_segments, vec![0.0; n_segments * weights_per_segment(n_qubits)])
    }

    /// Angles `2·value·τ` from per-segment Hamiltonian values: tunneling drives
    /// `R_y`, bias drives `R_z`, coupling drives the ZZ block.
    pub fn from_segment_values(sv: &SegmentValues) -> Result<Self> {
        let n_segments = sv.tunneling.len();
        let n_qubits = sv.tunneling.first().map(Vec::len).unwrap_or(0);
        let scale = 2.0 * sv.segment_duration;
        let mut angles = Vec::with_capacity(n_segments * weights_per_segment(n_qubits));
        for s in 0..n_segments {
            angles.extend(sv.tunneling[s].iter().map(|v| v * scale));
            angles.extend(sv.bias[s].iter().map(|v| v * scale));
            angles.extend(sv.coupling[s].iter().map(|v| v * scale));
        }
        Self::new(n_qubits, n_segments, angles)
    }

    /// Constant-in-time nominal gate-model values over `t_f = 200 ns`.
    pub fn nominal(n_qubits: usize, n_segments: usize) -> Result<Self> {
        let tau = DEFAULT_T_F_NS / n_segments as f64;
        let n_pairs = n_qubits * n_qubits.saturating_sub(1) / 2;
        let sv = SegmentValues {
            segment_duration: tau,
            tunneling: vec![vec![GATE_INIT_TUNNELING; n_qubits]; n_segments],
            bias: vec![vec![GATE_INIT_BIAS; n_qubits]; n_segments],
            coupling: vec![vec![GATE_INIT_COUPLING; n_pairs]; n_segments],
        };
        Self::from_segment_values(&sv)
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn segment(&self, s: usize) -> &[f64] {
        let k = weights_per_segment(self.n_qubits);
        &self.angles[s * k..(s + 1) * k]
    }

    pub fn with_angles(&self, angles: Vec<f64>) -> Result<Self> {
        Self::new(self.n_qubits, self.n_segments, angles)
    }

    pub fn weight_classes(&self) -> Vec<ParamClass> {
        let per: Vec<ParamClass> = term_list(self.n_qubits).into_iter().map(|t| t.class()).collect();
        per.iter().copied().cycle().take(self.len()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    Ry,
    Rz,
    Cnot,
}

/// Wire-format gate: `{"gate": "ry"|"rz"|"cnot", "qubits": [...], "angle": real}`.
/// CNOT lists `[control, target]` and carries angle 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateOp {
    pub gate: GateKind,
    pub qubits: Vec<usize>,
    #[serde(default)]
    pub angle: f64,
}

impl GateOp {
    pub fn ry(q: usize, angle: f64) -> Self {
        Self { gate: GateKind::Ry, qubits: vec![q], angle }
    }

    pub fn rz(q: usize, angle: f64) -> Self {
        Self { gate: GateKind::Rz, qubits: vec![q], angle }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self { gate: GateKind::Cnot, qubits: vec![control, target], angle: 0.0 }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        let arity = match self.gate {
            GateKind::Ry | GateKind::Rz => 1,
            GateKind::Cnot => 2,
        };
        if self.qubits.len() != arity {
            return Err(Error::InvalidParams(format!("{:?} expects {arity} qubit(s)", self.gate)));
        }
        if arity == 2 {
            check_pair(n_qubits, self.qubits[0], self.qubits[1])?;
        } else if self.qubits[0] >= n_qubits {
            return Err(Error::QubitOutOfRange { index: self.qubits[0], n_qubits });
        }
        if !self.angle.is_finite() {
            return Err(Error::NonFinite("gate angle"));
        }
        Ok(())
    }
}

/// Ordered gate list submitted to an execution backend.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CircuitDescription(pub Vec<GateOp>);

impl CircuitDescription {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("gate list serialization cannot fail")
    }
}

/// Gates for one segment, in application order.
pub fn segment_gates(angles: &[f64], n_qubits: usize) -> Result<Vec<GateOp>> {
    let k = weights_per_segment(n_qubits);
    if angles.len() != k {
        return Err(Error::WeightCount { expected: k, got: angles.len() });
    }
    let mut gates = Vec::with_capacity(2 * n_qubits + 3 * (k - 2 * n_qubits));
    for q in 0..n_qubits {
        gates.push(GateOp::ry(q, angles[q]));
        gates.push(GateOp::rz(q, angles[n_qubits + q]));
    }
    for (p, (i, j)) in qubit_pairs(n_qubits).into_iter().enumerate() {
        gates.push(GateOp::cnot(i, j));
        gates.push(GateOp::rz(j, angles[2 * n_qubits + p]));
        gates.push(GateOp::cnot(i, j));
    }
    Ok(gates)
}

pub fn circuit_gates(w: &CircuitWeights) -> Vec<GateOp> {
    (0..w.n_segments)
        .flat_map(|s| segment_gates(w.segment(s), w.n_qubits).expect("segment length fixed by construction"))
        .collect()
}

#[inline]
fn mask(q: usize, n_qubits: usize) -> usize {
    1usize << (n_qubits - 1 - q)
}

/// Applies one gate in place to an amplitude vector (or any column).
pub fn apply_gate(psi: &mut [C64], gate: &GateOp, n_qubits: usize) {
    match gate.gate {
        GateKind::Ry => {
            let m = mask(gate.qubits[0], n_qubits);
            let (s, c) = (gate.angle / 2.0).sin_cos();
            for i in 0..psi.len() {
                if i & m == 0 {
                    let (a, b) = (psi[i], psi[i | m]);
                    psi[i] = a * c - b * s;
                    psi[i | m] = a * s + b * c;
                }
            }
        }
        GateKind::Rz => {
            let m = mask(gate.qubits[0], n_qubits);
            let lo = C64::from_polar(1.0, -gate.angle / 2.0);
            let hi = lo.conj();
            for (i, z) in psi.iter_mut().enumerate() {
                *z *= if i & m == 0 { lo } else { hi };
            }
        }
        GateKind::Cnot => {
            let cm = mask(gate.qubits[0], n_qubits);
            let tm = mask(gate.qubits[1], n_qubits);
            for i in 0..psi.len() {
                if i & cm != 0 && i & tm == 0 {
                    psi.swap(i, i | tm);
                }
            }
        }
    }
}

/// Runs a gate list on a state, keeping its representation.
pub fn simulate_gates(state: &QuantumState, gates: &[GateOp]) -> Result<QuantumState> {
    let n = state.n_qubits();
    for g in gates {
        g.validate(n)?;
    }
    Ok(match state.data() {
        StateData::Pure(psi) => {
            let mut v = psi.clone();
            for g in gates {
                apply_gate(v.as_mut_slice(), g, n);
            }
            QuantumState::from_vector_unchecked(n, v)
        }
        StateData::Mixed(rho) => {
            // ρ → GρG†: act on columns, then on columns of the adjoint
            let mut m = rho.clone();
            for g in gates {
                apply_to_columns(&mut m, g, n);
                m = m.adjoint();
                apply_to_columns(&mut m, g, n);
                m = m.adjoint();
            }
            QuantumState::from_matrix_unchecked(n, m)
        }
    })
}

fn apply_to_columns(m: &mut CMatrix, g: &GateOp, n: usize) {
    for mut col in m.column_iter_mut() {
        apply_gate(col.as_mut_slice(), g, n);
    }
}

/// Dense unitary of one segment.
pub fn segment_unitary(angles: &[f64], n_qubits: usize) -> Result<CMatrix> {
    check_cap(n_qubits, DEFAULT_QUBIT_CAP)?;
    let gates = segment_gates(angles, n_qubits)?;
    let dim = 1usize << n_qubits;
    let mut u = CMatrix::identity(dim, dim);
    for g in &gates {
        apply_to_columns(&mut u, g, n_qubits);
    }
    Ok(u)
}

/// The circuit expressed as equal-duration Hamiltonian pieces built only from
/// `σ_x`, `σ_z` and `σ_zσ_z` terms: each `R_y(θ)` becomes
/// `R_z(π/2)·R_x(θ)·R_z(−π/2)`, each coupler one ZZ piece. Propagating this
/// schedule reproduces the circuit exactly.
pub fn circuit_schedule(w: &CircuitWeights, piece_duration: f64) -> PiecewiseSchedule {
    let n = w.n_qubits;
    let terms = term_list(n);
    let pairs = qubit_pairs(n);
    let mut pieces = Vec::new();
    let mut piece = |term_idx: usize, angle: f64| {
        let mut c = vec![0.0; terms.len()];
        c[term_idx] = angle / (2.0 * piece_duration);
        pieces.push(c);
    };
    for s in 0..w.n_segments {
        let seg = w.segment(s);
        for q in 0..n {
            piece(n + q, -FRAC_PI_2);
            piece(q, seg[q]);
            piece(n + q, FRAC_PI_2);
            piece(n + q, seg[n + q]);
        }
        for p in 0..pairs.len() {
            piece(2 * n + p, seg[2 * n + p]);
        }
    }
    PiecewiseSchedule { n_qubits: n, piece_duration, pieces }
}

/// Hardware attachment point: receives a gate list and returns bitstring
/// counts keyed `"b0b1…"` with qubit 0 leftmost.
pub trait ExternalBackend: Send + Sync {
    fn name(&self) -> &str;
    fn submit(&self, n_qubits: usize, circuit: &CircuitDescription, shots: u64) -> Result<BTreeMap<String, u64>>;
}

/// Placeholder external backend that is never reachable.
#[derive(Clone, Debug, Default)]
pub struct UnavailableBackend;

impl ExternalBackend for UnavailableBackend {
    fn name(&self) -> &str {
        "unavailable"
    }

    fn submit(&self, _: usize, _: &CircuitDescription, _: u64) -> Result<BTreeMap<String, u64>> {
        Err(Error::BackendUnavailable("no external backend is configured".into()))
    }
}

#[derive(Clone)]
pub enum Backend {
    Exact,
    Shots { shots: u64, seed: u64 },
    External { backend: Arc<dyn ExternalBackend>, shots: u64 },
}

impl fmt::Debug for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Exact => write!(f, "Exact"),
            Backend::Shots { shots, seed } => write!(f, "Shots {{ shots: {shots}, seed: {seed} }}"),
            Backend::External { backend, shots } => write!(f, "External {{ {}, shots: {shots} }}", backend.name()),
        }
    }
}

impl Backend {
    pub fn shots(shots: u64, seed: u64) -> Result<Self> {
        if shots < 1 {
            return Err(Error::InvalidShots);
        }
        Ok(Backend::Shots { shots, seed })
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Backend::Exact)
    }

    /// Same backend with its sampling seed mixed with `coords`. Exact and
    /// external backends are returned unchanged.
    pub fn derive(&self, coords: &[u64]) -> Backend {
        match self {
            Backend::Shots { shots, seed } => Backend::Shots { shots: *shots, seed: derive_seed(*seed, coords) },
            other => other.clone(),
        }
    }

    /// Measures the witness on an already-evolved state.
    pub fn measure(&self, state: &QuantumState, alpha: usize, beta: usize) -> Result<WitnessEstimate> {
        match self {
            Backend::Exact => Ok(WitnessEstimate::exact(witness_expectation(state, alpha, beta)?)),
            Backend::Shots { shots, seed } => sample_witness(state, alpha, beta, *shots, *seed),
            Backend::External { .. } => Err(Error::Backend(
                "an external backend executes circuits, not simulated states".into(),
            )),
        }
    }
}

/// Gates preparing `state` from `|0…0⟩`, for computational-basis states.
pub fn basis_preparation(state: &QuantumState) -> Option<Vec<GateOp>> {
    let n = state.n_qubits();
    let probs = state.probabilities();
    let idx = probs.iter().position(|&p| (p - 1.0).abs() < 1e-12)?;
    let gates = (0..n).filter(|&q| idx & mask(q, n) != 0).map(|q| GateOp::ry(q, std::f64::consts::PI)).collect();
    Some(gates)
}

pub fn run_circuit(w: &CircuitWeights, input: &QuantumState, alpha: usize, beta: usize, backend: &Backend) -> Result<WitnessEstimate> {
    run_circuit_prepared(w, input, None, alpha, beta, backend)
}

/// As [`run_circuit`]; `prep` supplies the preparation gates an external
/// backend needs when `input` is not a basis state.
pub fn run_circuit_prepared(
    w: &CircuitWeights,
    input: &QuantumState,
    prep: Option<&[GateOp]>,
    alpha: usize,
    beta: usize,
    backend: &Backend,
) -> Result<WitnessEstimate> {
    if input.n_qubits() != w.n_qubits {
        return Err(Error::DimensionMismatch { expected: w.n_qubits, got: input.n_qubits() });
    }
    check_pair(w.n_qubits, alpha, beta)?;
    match backend {
        Backend::External { backend, shots } => {
            let mut gates = match prep {
                Some(p) => p.to_vec(),
                None => basis_preparation(input).ok_or_else(|| {
                    Error::Backend("external execution needs a preparation circuit for this input".into())
                })?,
            };
            gates.extend(circuit_gates(w));
            let counts = backend.submit(w.n_qubits, &CircuitDescription(gates), *shots)?;
            let dense = dense_counts(&counts, w.n_qubits)?;
            witness_from_counts(&dense, w.n_qubits, alpha, beta)
        }
        _ => {
            let out = simulate_gates(input, &circuit_gates(w))?;
            backend.measure(&out, alpha, beta)
        }
    }
}

fn dense_counts(counts: &BTreeMap<String, u64>, n_qubits: usize) -> Result<Vec<u64>> {
    let mut dense = vec![0u64; 1 << n_qubits];
    for (bits, &c) in counts {
        if bits.len() != n_qubits || !bits.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(Error::Backend(format!("malformed bitstring {bits:?}")));
        }
        let idx = usize::from_str_radix(bits, 2).expect("validated binary string");
        dense[idx] += c;
    }
    Ok(dense)
}

/// Formats a basis index as a bitstring with qubit 0 leftmost.
pub fn bitstring(index: usize, n_qubits: usize) -> String {
    format!("{index:0width$b}", width = n_qubits)
}

/// Sparse counts from a simulated final state, for backends built on the local simulator.
pub fn counts_to_bitstrings(dense: &[u64], n_qubits: usize) -> BTreeMap<String, u64> {
    dense
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (bitstring(i, n_qubits), c))
        .collect()
}

/// `(O(w_j + π/2) − O(w_j − π/2)) / 2`.
pub fn parameter_shift_grad(
    w: &CircuitWeights,
    j: usize,
    input: &QuantumState,
    alpha: usize,
    beta: usize,
    backend: &Backend,
) -> Result<f64> {
    parameter_shift_grad_prepared(w, j, input, None, alpha, beta, backend)
}

pub fn parameter_shift_grad_prepared(
    w: &CircuitWeights,
    j: usize,
    input: &QuantumState,
    prep: Option<&[GateOp]>,
    alpha: usize,
    beta: usize,
    backend: &Backend,
) -> Result<f64> {
    if j >= w.len() {
        return Err(Error::WeightIndex { index: j, len: w.len() });
    }
    let mut plus = w.angles.clone();
    plus[j] += FRAC_PI_2;
    let mut minus = w.angles.clone();
    minus[j] -= FRAC_PI_2;
    let o_plus = run_circuit_prepared(&w.with_angles(plus)?, input, prep, alpha, beta, &backend.derive(&[j as u64, 1]))?;
    let o_minus = run_circuit_prepared(&w.with_angles(minus)?, input, prep, alpha, beta, &backend.derive(&[j as u64, 0]))?;
    Ok((o_plus.value - o_minus.value) / 2.0)
}

/// Full-register final state, exposed for simulator-backed external backends.
pub fn final_state_vector(n_qubits: usize, gates: &[GateOp]) -> Result<CVector> {
    let start = QuantumState::basis(n_qubits, 0)?;
    match simulate_gates(&start, gates)?.data() {
        StateData::Pure(v) => Ok(v.clone()),
        StateData::Mixed(_) => unreachable!("basis input stays pure"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve, EvolutionConfig};
    use crate::linalg::{max_abs_diff, unitarity_error};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn bell(n: usize) -> QuantumState {
        QuantumState::on_pair(n, 0, 1, [c(1.0), c(0.0), c(0.0), c(1.0)]).unwrap()
    }

    #[test]
    fn weight_count_formula() {
        assert_eq!(CircuitWeights::zeros(2, 4).unwrap().len(), 20);
        assert_eq!(weights_per_segment(3), 9);
        assert!(matches!(CircuitWeights::new(2, 4, vec![0.0; 19]), Err(Error::WeightCount { expected: 20, got: 19 })));
    }

    #[test]
    fn zero_segment_is_identity() {
        let u = segment_unitary(&[0.0; 5], 2).unwrap();
        assert!(max_abs_diff(&u, &CMatrix::identity(4, 4)) < 1e-15);
        assert!(segment_unitary(&[0.0; 4], 2).is_err());
    }

    #[test]
    fn ry_pi_matrix() {
        let u = segment_unitary(&[PI, 0.0], 1).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[c(0.0), c(-1.0), c(1.0), c(0.0)]);
        assert!(max_abs_diff(&u, &expected) < 1e-15);
    }

    #[test]
    fn zz_block_is_diagonal_phase() {
        // direct 4×4 product CNOT · (I ⊗ R_z(θ)) · CNOT
        let theta = 0.73;
        let cnot = CMatrix::from_row_slice(
            4,
            4,
            &[c(1.0), c(0.0), c(0.0), c(0.0), c(0.0), c(1.0), c(0.0), c(0.0), c(0.0), c(0.0), c(0.0), c(1.0), c(0.0), c(0.0), c(1.0), c(0.0)],
        );
        let rz = CMatrix::from_diagonal(&CVector::from_vec(vec![
            C64::from_polar(1.0, -theta / 2.0),
            C64::from_polar(1.0, theta / 2.0),
        ]));
        let oracle = &cnot * CMatrix::identity(2, 2).kronecker(&rz) * &cnot;
        let expected = CMatrix::from_diagonal(&CVector::from_vec(vec![
            C64::from_polar(1.0, -theta / 2.0),
            C64::from_polar(1.0, theta / 2.0),
            C64::from_polar(1.0, theta / 2.0),
            C64::from_polar(1.0, -theta / 2.0),
        ]));
        assert!(max_abs_diff(&oracle, &expected) < 1e-15);
        let ours = segment_unitary(&[0.0, 0.0, 0.0, 0.0, theta], 2).unwrap();
        assert!(max_abs_diff(&ours, &expected) < 1e-15);
    }

    #[test]
    fn segment_unitaries_are_unitary() {
        for n in 1..=4 {
            let k = weights_per_segment(n);
            let angles: Vec<f64> = (0..k).map(|i| (i as f64 * 1.37).sin() * 3.0).collect();
            assert!(unitarity_error(&segment_unitary(&angles, n).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn zero_weights_preserve_inputs() {
        let w = CircuitWeights::zeros(2, 4).unwrap();
        let s00 = QuantumState::basis(2, 0).unwrap();
        assert_eq!(run_circuit(&w, &s00, 0, 1, &Backend::Exact).unwrap().value, 1.0);
        assert_abs_diff_eq!(run_circuit(&w, &bell(2), 0, 1, &Backend::Exact).unwrap().value, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn circuit_matches_hamiltonian_bridge() {
        for seed in 0..5 {
            let n = 3;
            let angles: Vec<f64> = (0..4 * weights_per_segment(n)).map(|i| ((i * 7 + seed * 13) as f64 * 0.61).sin() * 2.0).collect();
            let w = CircuitWeights::new(n, 4, angles).unwrap();
            let input = QuantumState::on_pair(n, 0, 2, [c(0.8), c(0.1), c(-0.3), c(0.5)]).unwrap();
            let sched = circuit_schedule(&w, 1.0);
            let traj = evolve(&input.to_mixed(), &sched, &EvolutionConfig::new(sched.pieces.len()).unwrap()).unwrap();
            for (a, b) in qubit_pairs(n) {
                let gate = run_circuit(&w, &input, a, b, &Backend::Exact).unwrap().value;
                let ham = witness_expectation(traj.final_state(), a, b).unwrap();
                assert!((gate - ham).abs() < 1e-8, "{gate} vs {ham}");
            }
        }
    }

    #[test]
    fn mixed_and_pure_paths_agree() {
        let n = 3;
        let angles: Vec<f64> = (0..2 * weights_per_segment(n)).map(|i| (i as f64 * 0.9).cos()).collect();
        let w = CircuitWeights::new(n, 2, angles).unwrap();
        let input = QuantumState::on_pair(n, 1, 2, [c(0.3), c(0.4), c(0.5), c(0.6)]).unwrap();
        let a = run_circuit(&w, &input, 0, 2, &Backend::Exact).unwrap().value;
        let b = run_circuit(&w, &input.to_mixed(), 0, 2, &Backend::Exact).unwrap().value;
        assert_abs_diff_eq!(a, b, epsilon = 1e-13);
    }

    #[test]
    fn parameter_shift_single_qubit_ry() {
        // ⟨σ_z⟩ = cos θ after R_y(θ)|0⟩ on qubit 0; measure Z0·Z1 with qubit 1 fixed at |0⟩
        let mut w = CircuitWeights::zeros(2, 1).unwrap();
        w.angles[0] = FRAC_PI_2;
        let s00 = QuantumState::basis(2, 0).unwrap();
        let g = parameter_shift_grad(&w, 0, &s00, 0, 1, &Backend::Exact).unwrap();
        assert_abs_diff_eq!(g, -1.0, epsilon = 1e-14);
        w.angles[0] = 0.0;
        assert_abs_diff_eq!(parameter_shift_grad(&w, 0, &s00, 0, 1, &Backend::Exact).unwrap(), 0.0, epsilon = 1e-15);
        assert!(matches!(parameter_shift_grad(&w, 5, &s00, 0, 1, &Backend::Exact), Err(Error::WeightIndex { .. })));
    }

    #[test]
    fn shots_backend_reproducible_and_exact_seed_free() {
        let w = CircuitWeights::nominal(2, 4).unwrap();
        let s = QuantumState::on_pair(2, 0, 1, [c(1.0), c(1.0), c(1.0), c(1.0)]).unwrap();
        let b = Backend::shots(256, 5).unwrap();
        let x = run_circuit(&w, &s, 0, 1, &b).unwrap();
        let y = run_circuit(&w, &s, 0, 1, &b).unwrap();
        assert_eq!(x.value.to_bits(), y.value.to_bits());
        assert_eq!(x.shots, 256);
        let e1 = run_circuit(&w, &s, 0, 1, &Backend::Exact).unwrap();
        let e2 = run_circuit(&w, &s, 0, 1, &Backend::Exact.derive(&[9, 9])).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn external_stub_errors_explicitly() {
        let w = CircuitWeights::nominal(2, 4).unwrap();
        let backend = Backend::External { backend: Arc::new(UnavailableBackend), shots: 100 };
        let s00 = QuantumState::basis(2, 0).unwrap();
        assert!(matches!(run_circuit(&w, &s00, 0, 1, &backend), Err(Error::BackendUnavailable(_))));
        assert!(matches!(run_circuit(&w, &bell(2), 0, 1, &backend), Err(Error::Backend(_))));
    }

    #[test]
    fn gate_list_wire_format() {
        let desc = CircuitDescription(vec![GateOp::ry(0, 0.5), GateOp::cnot(0, 1), GateOp::rz(1, -0.25)]);
        let v: serde_json::Value = serde_json::from_str(&desc.to_json()).unwrap();
        assert_eq!(v[0]["gate"], "ry");
        assert_eq!(v[1]["qubits"], serde_json::json!([0, 1]));
        assert_eq!(v[2]["angle"], -0.25);
        let back: CircuitDescription = serde_json::from_str(&desc.to_json()).unwrap();
        assert_eq!(back, desc);
    }

    #[test]
    fn nominal_angles_from_gate_defaults() {
        let w = CircuitWeights::nominal(2, 4).unwrap();
        // τ = 50 ns: R_y = 2·2e-3·50, R_z = ZZ = 2·1e-4·50
        assert_abs_diff_eq!(w.angles[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(w.angles[2], 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(w.angles[4], 0.01, epsilon = 1e-15);
        assert_eq!(w.weight_classes()[4], ParamClass::Coupling);
    }
}
