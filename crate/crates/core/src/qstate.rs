//! N-qubit states and operators, the pairwise ZZ witness, shot sampling and
//! the two-qubit concurrence used to label training data.
//!
//! Qubit 0 is the leftmost tensor factor, i.e. the most significant bit of a
//! computational-basis index. Every constructor and kernel in the crate uses
//! this ordering.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_eigen, hermiticity_error, is_power_of_two, log2_exact, qubit_bit, CMatrix, CVector,
    C64, I, ONE, ZERO,
};

pub const DEFAULT_QUBIT_CAP: usize = 12;

/// Algebraic identities (norm, trace, Hermiticity) are checked to this tolerance.
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Smallest eigenvalue accepted for a density matrix.
pub const EIGEN_FLOOR: f64 = -1e-10;

#[derive(Clone, Debug, PartialEq)]
pub enum StateData {
    Pure(CVector),
    Mixed(CMatrix),
}

/// A pure amplitude vector or a density matrix on `n_qubits` qubits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateDocument", into = "StateDocument")]
pub struct QuantumState {
    n_qubits: usize,
    data: StateData,
}

impl QuantumState {
    /// Validated pure state; the norm must already be one.
    pub fn pure(amplitudes: CVector) -> Result<Self> {
        let n_qubits = log2_exact(amplitudes.len())?;
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("state amplitudes"));
        }
        let norm_sq = amplitudes.norm_squared();
        if (norm_sq - 1.0).abs() > ALGEBRA_TOL {
            return Err(Error::InvalidState(format!("squared norm is {norm_sq}, expected 1")));
        }
        Ok(Self { n_qubits, data: StateData::Pure(amplitudes) })
    }

    pub fn pure_normalized(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("cannot normalize a zero vector".into()));
        }
        Self::pure(amplitudes.unscale(norm))
    }

    /// Validated density matrix: Hermitian, unit trace, no eigenvalue below `EIGEN_FLOOR`.
    pub fn mixed(rho: CMatrix) -> Result<Self> {
        if !rho.is_square() {
            return Err(Error::InvalidState("density matrix must be square".into()));
        }
        let n_qubits = log2_exact(rho.nrows())?;
        let herm = hermiticity_error(&rho);
        if herm > ALGEBRA_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > ALGEBRA_TOL || tr.im.abs() > ALGEBRA_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let (vals, _) = hermitian_eigen(&rho)?;
        if let Some(&lowest) = vals.first() {
            if lowest < EIGEN_FLOOR {
                return Err(Error::NonPhysical(lowest));
            }
        }
        Ok(Self { n_qubits, data: StateData::Mixed(rho) })
    }

    pub(crate) fn from_vector_unchecked(n_qubits: usize, psi: CVector) -> Self {
        Self { n_qubits, data: StateData::Pure(psi) }
    }

    pub(crate) fn from_matrix_unchecked(n_qubits: usize, rho: CMatrix) -> Self {
        Self { n_qubits, data: StateData::Mixed(rho) }
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_cap(n_qubits, DEFAULT_QUBIT_CAP)?;
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::InvalidState(format!("basis index {index} >= {dim}")));
        }
        let mut psi = CVector::zeros(dim);
        psi[index] = ONE;
        Ok(Self { n_qubits, data: StateData::Pure(psi) })
    }

    /// Embeds the two-qubit amplitudes `[c00, c01, c10, c11]` on qubits
    /// `(alpha, beta)`; every other qubit is left in `|0⟩`.
    pub fn on_pair(n_qubits: usize, alpha: usize, beta: usize, amps: [C64; 4]) -> Result<Self> {
        check_pair(n_qubits, alpha, beta)?;
        check_cap(n_qubits, DEFAULT_QUBIT_CAP)?;
        let dim = 1usize << n_qubits;
        let mut psi = CVector::zeros(dim);
        for (k, amp) in amps.iter().enumerate() {
            let a = k >> 1;
            let b = k & 1;
            let idx = (a << (n_qubits - 1 - alpha)) | (b << (n_qubits - 1 - beta));
            psi[idx] += *amp;
        }
        Self::pure_normalized(psi)
    }

    pub fn maximally_mixed(n_qubits: usize) -> Result<Self> {
        check_cap(n_qubits, DEFAULT_QUBIT_CAP)?;
        let dim = 1usize << n_qubits;
        let rho = CMatrix::identity(dim, dim).unscale(dim as f64);
        Ok(Self { n_qubits, data: StateData::Mixed(rho) })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn data(&self) -> &StateData {
        &self.data
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.data, StateData::Pure(_))
    }

    pub fn density_matrix(&self) -> CMatrix {
        match &self.data {
            StateData::Pure(psi) => psi * psi.adjoint(),
            StateData::Mixed(rho) => rho.clone(),
        }
    }

    pub fn to_mixed(&self) -> Self {
        Self { n_qubits: self.n_qubits, data: StateData::Mixed(self.density_matrix()) }
    }

    pub fn trace(&self) -> f64 {
        match &self.data {
            StateData::Pure(psi) => psi.norm_squared(),
            StateData::Mixed(rho) => rho.trace().re,
        }
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> f64 {
        match &self.data {
            StateData::Pure(psi) => psi.norm_squared().powi(2),
            StateData::Mixed(rho) => rho.iter().map(|z| z.norm_sqr()).sum(),
        }
    }

    /// Computational-basis outcome probabilities (diagonal of ρ), clamped at zero.
    pub fn probabilities(&self) -> Vec<f64> {
        match &self.data {
            StateData::Pure(psi) => psi.iter().map(|z| z.norm_sqr()).collect(),
            StateData::Mixed(rho) => (0..rho.nrows()).map(|i| rho[(i, i)].re.max(0.0)).collect(),
        }
    }

    /// `U ρ U†` (or `U ψ`), keeping the representation.
    pub fn apply_unitary(&self, u: &CMatrix) -> Result<Self> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: u.nrows() });
        }
        let data = match &self.data {
            StateData::Pure(psi) => StateData::Pure(u * psi),
            StateData::Mixed(rho) => StateData::Mixed(u * rho * u.adjoint()),
        };
        Ok(Self { n_qubits: self.n_qubits, data })
    }

    /// `self ⊗ other`.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        check_cap(self.n_qubits + other.n_qubits, DEFAULT_QUBIT_CAP)?;
        let n_qubits = self.n_qubits + other.n_qubits;
        let data = match (&self.data, &other.data) {
            (StateData::Pure(a), StateData::Pure(b)) => StateData::Pure(a.kronecker(b)),
            _ => StateData::Mixed(self.density_matrix().kronecker(&other.density_matrix())),
        };
        Ok(Self { n_qubits, data })
    }

    /// Spectral decomposition into `(weight, unit vector)` terms with weight > 0.
    /// A pure state yields its own vector with weight one.
    pub fn ensemble(&self) -> Result<Vec<(f64, CVector)>> {
        match &self.data {
            StateData::Pure(psi) => Ok(vec![(1.0, psi.clone())]),
            StateData::Mixed(rho) => {
                let (vals, vecs) = hermitian_eigen(rho)?;
                Ok(vals
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 1e-14)
                    .map(|(k, &p)| (p, vecs.column(k).into_owned()))
                    .collect())
            }
        }
    }

    /// Two-qubit reduced density matrix on `(alpha, beta)`, in that order.
    pub fn reduced_pair(&self, alpha: usize, beta: usize) -> Result<Self> {
        check_pair(self.n_qubits, alpha, beta)?;
        let n = self.n_qubits;
        let rho = self.density_matrix();
        let dim = self.dim();
        let mut out = CMatrix::zeros(4, 4);
        let local = |idx: usize| (qubit_bit(idx, alpha, n) << 1) | qubit_bit(idx, beta, n);
        let mask = (1usize << (n - 1 - alpha)) | (1usize << (n - 1 - beta));
        for i in 0..dim {
            for j in 0..dim {
                if (i & !mask) == (j & !mask) {
                    out[(local(i), local(j))] += rho[(i, j)];
                }
            }
        }
        Ok(Self { n_qubits: 2, data: StateData::Mixed(out) })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("state serialization cannot fail")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// On-disk layout: real and imaginary parts split, matrices row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateDocument {
    pub n_qubits: usize,
    pub kind: StateKind,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Pure,
    Mixed,
}

impl From<QuantumState> for StateDocument {
    fn from(s: QuantumState) -> Self {
        match &s.data {
            StateData::Pure(psi) => StateDocument {
                n_qubits: s.n_qubits,
                kind: StateKind::Pure,
                re: psi.iter().map(|z| z.re).collect(),
                im: psi.iter().map(|z| z.im).collect(),
            },
            StateData::Mixed(rho) => {
                let d = rho.nrows();
                let mut re = Vec::with_capacity(d * d);
                let mut im = Vec::with_capacity(d * d);
                for r in 0..d {
                    for c in 0..d {
                        re.push(rho[(r, c)].re);
                        im.push(rho[(r, c)].im);
                    }
                }
                StateDocument { n_qubits: s.n_qubits, kind: StateKind::Mixed, re, im }
            }
        }
    }
}

impl TryFrom<StateDocument> for QuantumState {
    type Error = Error;

    fn try_from(doc: StateDocument) -> Result<Self> {
        check_cap(doc.n_qubits, DEFAULT_QUBIT_CAP)?;
        if doc.re.len() != doc.im.len() {
            return Err(Error::InvalidState("re and im lengths differ".into()));
        }
        let dim = 1usize << doc.n_qubits;
        let values: Vec<C64> = doc.re.iter().zip(&doc.im).map(|(&r, &i)| C64::new(r, i)).collect();
        let state = match doc.kind {
            StateKind::Pure => {
                if values.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: values.len() });
                }
                QuantumState::pure(CVector::from_vec(values))?
            }
            StateKind::Mixed => {
                if values.len() != dim * dim {
                    return Err(Error::DimensionMismatch { expected: dim * dim, got: values.len() });
                }
                QuantumState::mixed(CMatrix::from_row_slice(dim, dim, &values))?
            }
        };
        Ok(state)
    }
}

impl std::fmt::Display for StateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StateKind::Pure => write!(f, "pure"),
            StateKind::Mixed => write!(f, "mixed"),
        }
    }
}

/// A Hermitian operator with a human-readable label.
#[derive(Clone, Debug)]
pub struct Observable {
    pub matrix: CMatrix,
    pub label: String,
}

impl Observable {
    pub fn new(matrix: CMatrix, label: impl Into<String>) -> Result<Self> {
        log2_exact(matrix.nrows())?;
        let herm = hermiticity_error(&matrix);
        if herm > ALGEBRA_TOL {
            return Err(Error::NotHermitian(herm));
        }
        Ok(Self { matrix, label: label.into() })
    }

    pub fn expectation(&self, state: &QuantumState) -> Result<f64> {
        if self.matrix.nrows() != state.dim() {
            return Err(Error::DimensionMismatch { expected: self.matrix.nrows(), got: state.dim() });
        }
        let value = match state.data() {
            StateData::Pure(psi) => psi.dotc(&(&self.matrix * psi)),
            StateData::Mixed(rho) => (rho * &self.matrix).trace(),
        };
        Ok(value.re)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> CMatrix {
        match self {
            Pauli::X => CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
            Pauli::Y => CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
            Pauli::Z => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Pauli::X => "x",
            Pauli::Y => "y",
            Pauli::Z => "z",
        }
    }
}

/// Kronecker product of two operators or column states, with the default qubit cap.
pub fn tensor_product(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    tensor_product_capped(a, b, DEFAULT_QUBIT_CAP)
}

pub fn tensor_product_capped(a: &CMatrix, b: &CMatrix, cap: usize) -> Result<CMatrix> {
    for d in [a.nrows(), a.ncols(), b.nrows(), b.ncols()] {
        if !is_power_of_two(d) {
            return Err(Error::NotPowerOfTwo(d));
        }
    }
    let rows = log2_exact(a.nrows())? + log2_exact(b.nrows())?;
    let cols = log2_exact(a.ncols())? + log2_exact(b.ncols())?;
    check_cap(rows.max(cols), cap)?;
    Ok(a.kronecker(b))
}

/// Single-qubit Pauli on `qubit`, identity elsewhere.
pub fn pauli_on(axis: Pauli, qubit: usize, n_qubits: usize) -> Result<Observable> {
    if qubit >= n_qubits {
        return Err(Error::QubitOutOfRange { index: qubit, n_qubits });
    }
    check_cap(n_qubits, DEFAULT_QUBIT_CAP)?;
    let mut m = CMatrix::identity(1, 1);
    for q in 0..n_qubits {
        let factor = if q == qubit { axis.matrix() } else { CMatrix::identity(2, 2) };
        m = m.kronecker(&factor);
    }
    Observable::new(m, format!("{}{}", axis.symbol(), qubit))
}

/// The witness observable `σ_z^α σ_z^β` as a dense matrix.
pub fn zz_observable(alpha: usize, beta: usize, n_qubits: usize) -> Result<Observable> {
    check_pair(n_qubits, alpha, beta)?;
    check_cap(n_qubits, DEFAULT_QUBIT_CAP)?;
    let dim = 1usize << n_qubits;
    let diag = CVector::from_fn(dim, |i, _| C64::new(parity_sign(i, alpha, beta, n_qubits), 0.0));
    Observable::new(CMatrix::from_diagonal(&diag), format!("z{alpha}z{beta}"))
}

/// `+1` when qubits `alpha` and `beta` agree in basis state `index`, else `-1`.
#[inline]
pub fn parity_sign(index: usize, alpha: usize, beta: usize, n_qubits: usize) -> f64 {
    if qubit_bit(index, alpha, n_qubits) == qubit_bit(index, beta, n_qubits) {
        1.0
    } else {
        -1.0
    }
}

/// `tr[ρ σ_z^α σ_z^β]`.
pub fn witness_expectation(state: &QuantumState, alpha: usize, beta: usize) -> Result<f64> {
    let n = state.n_qubits();
    check_pair(n, alpha, beta)?;
    let value = match state.data() {
        StateData::Pure(psi) => psi
            .iter()
            .enumerate()
            .map(|(i, z)| z.norm_sqr() * parity_sign(i, alpha, beta, n))
            .sum::<f64>(),
        StateData::Mixed(rho) => {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..rho.nrows() {
                acc += rho[(i, i)] * parity_sign(i, alpha, beta, n);
            }
            if acc.im.abs() >= 1e-10 {
                return Err(Error::NotHermitian(acc.im.abs()));
            }
            acc.re
        }
    };
    Ok(value.clamp(-1.0, 1.0))
}

/// A witness value with its sampling metadata. `shots == 0` marks an exact value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessEstimate {
    pub value: f64,
    pub shots: u64,
    pub std_err: f64,
}

impl WitnessEstimate {
    pub fn exact(value: f64) -> Self {
        Self { value, shots: 0, std_err: 0.0 }
    }

    pub fn sampled(value: f64, shots: u64) -> Self {
        let std_err = if shots == 0 { 0.0 } else { ((1.0 - value * value).max(0.0) / shots as f64).sqrt() };
        Self { value, shots, std_err }
    }
}

/// Draws `shots` full-register measurements in the computational basis.
/// Returns counts indexed by basis state.
pub fn sample_counts(state: &QuantumState, shots: u64, seed: u64) -> Result<Vec<u64>> {
    if shots < 1 {
        return Err(Error::InvalidShots);
    }
    let probs = state.probabilities();
    let dist = WeightedIndex::new(&probs).map_err(|e| Error::InvalidState(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; probs.len()];
    for _ in 0..shots {
        counts[dist.sample(&mut rng)] += 1;
    }
    Ok(counts)
}

/// Reduces basis-state counts to the `(alpha, beta)` parity estimate.
pub fn witness_from_counts(counts: &[u64], n_qubits: usize, alpha: usize, beta: usize) -> Result<WitnessEstimate> {
    check_pair(n_qubits, alpha, beta)?;
    if counts.len() != 1 << n_qubits {
        return Err(Error::DimensionMismatch { expected: 1 << n_qubits, got: counts.len() });
    }
    let shots: u64 = counts.iter().sum();
    if shots == 0 {
        return Err(Error::InvalidShots);
    }
    let mut same = 0u64;
    for (i, &c) in counts.iter().enumerate() {
        if parity_sign(i, alpha, beta, n_qubits) > 0.0 {
            same += c;
        }
    }
    let diff = shots - same;
    let value = (same as f64 - diff as f64) / shots as f64;
    Ok(WitnessEstimate::sampled(value, shots))
}

/// Shot-sampled witness, deterministic in `seed`.
pub fn sample_witness(state: &QuantumState, alpha: usize, beta: usize, shots: u64, seed: u64) -> Result<WitnessEstimate> {
    check_pair(state.n_qubits(), alpha, beta)?;
    let counts = sample_counts(state, shots, seed)?;
    witness_from_counts(&counts, state.n_qubits(), alpha, beta)
}

/// Wootters concurrence of a two-qubit state.
///
/// The λ_i are the square roots of the eigenvalues of `ρ ρ̃`, computed here
/// through the Hermitian matrix `√ρ ρ̃ √ρ`, which has the same spectrum.
pub fn concurrence2(state: &QuantumState) -> Result<f64> {
    if state.n_qubits() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: state.n_qubits() });
    }
    let rho = state.density_matrix();
    let (vals, vecs) = hermitian_eigen(&rho)?;
    if let Some(&lowest) = vals.first() {
        if lowest < EIGEN_FLOOR {
            return Err(Error::NonPhysical(lowest));
        }
    }
    let sqrt_diag = CVector::from_iterator(4, vals.iter().map(|&v| C64::new(v.max(0.0).sqrt(), 0.0)));
    let sqrt_rho = &vecs * CMatrix::from_diagonal(&sqrt_diag) * vecs.adjoint();
    let yy = Pauli::Y.matrix().kronecker(&Pauli::Y.matrix());
    let rho_tilde = &yy * rho.conjugate() * &yy;
    let mut r = &sqrt_rho * rho_tilde * &sqrt_rho;
    // symmetrize away rounding before the Hermitian solver
    r = (&r + r.adjoint()).unscale(2.0);
    let (mu, _) = hermitian_eigen(&r)?;
    let mut lambdas: Vec<f64> = mu.iter().map(|&m| m.max(0.0).sqrt()).collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).clamp(0.0, 1.0))
}

pub(crate) fn check_pair(n_qubits: usize, alpha: usize, beta: usize) -> Result<()> {
    for q in [alpha, beta] {
        if q >= n_qubits {
            return Err(Error::QubitOutOfRange { index: q, n_qubits });
        }
    }
    if alpha == beta {
        return Err(Error::SameQubit(alpha));
    }
    Ok(())
}

pub(crate) fn check_cap(n_qubits: usize, cap: usize) -> Result<()> {
    if n_qubits > cap {
        return Err(Error::DimensionOverflow { qubits: n_qubits, cap });
    }
    if n_qubits == 0 {
        return Err(Error::InvalidState("at least one qubit is required".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn bell() -> QuantumState {
        QuantumState::on_pair(2, 0, 1, [c(1.0), c(0.0), c(0.0), c(1.0)]).unwrap()
    }

    #[test]
    fn kron_identity_and_sigma_z() {
        let id2 = CMatrix::identity(2, 2);
        assert_eq!(tensor_product(&id2, &id2).unwrap(), CMatrix::identity(4, 4));
        let zi = tensor_product(&Pauli::Z.matrix(), &id2).unwrap();
        let expected = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0), c(1.0), c(-1.0), c(-1.0)]));
        assert_eq!(zi, expected);
    }

    #[test]
    fn kron_basis_vectors() {
        let zero = CMatrix::from_column_slice(2, 1, &[c(1.0), c(0.0)]);
        let one = CMatrix::from_column_slice(2, 1, &[c(0.0), c(1.0)]);
        let prod = tensor_product(&zero, &one).unwrap();
        assert_eq!(prod.as_slice(), &[c(0.0), c(1.0), c(0.0), c(0.0)]);
    }

    #[test]
    fn kron_overflow_guard() {
        let big = CMatrix::identity(1 << 7, 1 << 7);
        assert!(matches!(
            tensor_product(&big, &big),
            Err(Error::DimensionOverflow { qubits: 14, cap: 12 })
        ));
        assert!(tensor_product_capped(&big, &big, 14).is_ok());
        let bad = CMatrix::identity(3, 3);
        assert!(matches!(tensor_product(&bad, &bad), Err(Error::NotPowerOfTwo(3))));
    }

    #[test]
    fn pauli_placement() {
        let z0 = pauli_on(Pauli::Z, 0, 1).unwrap();
        assert_eq!(z0.matrix, Pauli::Z.matrix());
        let z1 = pauli_on(Pauli::Z, 1, 2).unwrap();
        let diag: Vec<f64> = (0..4).map(|i| z1.matrix[(i, i)].re).collect();
        assert_eq!(diag, vec![1.0, -1.0, 1.0, -1.0]);
        let x0 = pauli_on(Pauli::X, 0, 1).unwrap();
        assert_eq!(x0.matrix, Pauli::X.matrix());
        assert!(matches!(pauli_on(Pauli::X, 2, 2), Err(Error::QubitOutOfRange { .. })));
    }

    #[test]
    fn witness_basis_and_mixed() {
        let s00 = QuantumState::basis(2, 0b00).unwrap();
        let s01 = QuantumState::basis(2, 0b01).unwrap();
        assert_eq!(witness_expectation(&s00, 0, 1).unwrap(), 1.0);
        assert_eq!(witness_expectation(&s01, 0, 1).unwrap(), -1.0);
        let mm = QuantumState::maximally_mixed(2).unwrap();
        assert_abs_diff_eq!(witness_expectation(&mm, 0, 1).unwrap(), 0.0, epsilon = 1e-15);
        assert!(matches!(witness_expectation(&s00, 1, 1), Err(Error::SameQubit(1))));
    }

    #[test]
    fn witness_matches_dense_observable() {
        let psi = CVector::from_fn(8, |i, _| C64::new((i as f64 + 1.0).sin(), (i as f64).cos()));
        let s = QuantumState::pure_normalized(psi).unwrap();
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let dense = zz_observable(a, b, 3).unwrap().expectation(&s).unwrap();
            assert_abs_diff_eq!(witness_expectation(&s, a, b).unwrap(), dense, epsilon = 1e-14);
            assert_abs_diff_eq!(witness_expectation(&s.to_mixed(), a, b).unwrap(), dense, epsilon = 1e-14);
        }
    }

    #[test]
    fn sampling_deterministic_outcomes() {
        let s00 = QuantumState::basis(2, 0).unwrap();
        for shots in [1, 7, 1000] {
            let est = sample_witness(&s00, 0, 1, shots, 42).unwrap();
            assert_eq!(est.value, 1.0);
            assert_eq!(est.std_err, 0.0);
        }
        let est = sample_witness(&bell(), 0, 1, 4096, 9).unwrap();
        assert_eq!(est.value, 1.0);
        assert!(matches!(sample_witness(&s00, 0, 1, 0, 1), Err(Error::InvalidShots)));
    }

    #[test]
    fn sampling_reproducible_in_seed() {
        let s = QuantumState::on_pair(2, 0, 1, [c(1.0), c(1.0), c(0.0), c(0.0)]).unwrap();
        let a = sample_witness(&s, 0, 1, 500, 17).unwrap();
        let b = sample_witness(&s, 0, 1, 500, 17).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        let est = WitnessEstimate::sampled(a.value, 500);
        assert_abs_diff_eq!(est.std_err, ((1.0 - a.value * a.value) / 500.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn plus_zero_state_sampling_within_band() {
        // |+⟩⊗|0⟩: the parity is a fair coin, so the estimate is (2·Bin(n, 1/2) − n)/n.
        // Binomial oracle: sd = 1/√n = 0.01 at n = 10⁴, so 0.05 is a 5σ band and the
        // expected miss rate over 200 seeds is ~1e-4.
        let s = QuantumState::on_pair(2, 0, 1, [c(1.0), c(0.0), c(1.0), c(0.0)]).unwrap();
        let hits = (0..200u64)
            .filter(|&seed| sample_witness(&s, 0, 1, 10_000, seed).unwrap().value.abs() <= 0.05)
            .count();
        assert!(hits as f64 >= 0.95 * 200.0, "hits = {hits}");
    }

    #[test]
    fn concurrence_examples() {
        assert_abs_diff_eq!(concurrence2(&bell()).unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(concurrence2(&QuantumState::basis(2, 0).unwrap()).unwrap(), 0.0, epsilon = 1e-9);
        let th = PI / 8.0;
        let partial = QuantumState::on_pair(2, 0, 1, [c(th.cos()), c(0.0), c(0.0), c(th.sin())]).unwrap();
        // analytic C = sin 2θ = 1/√2
        assert_abs_diff_eq!(concurrence2(&partial).unwrap(), FRAC_1_SQRT_2, epsilon = 1e-6);
        let mm = QuantumState::maximally_mixed(2).unwrap();
        assert_abs_diff_eq!(concurrence2(&mm).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn concurrence_rejects_non_physical_and_wrong_size() {
        let mut rho = CMatrix::zeros(4, 4);
        rho[(0, 0)] = c(1.2);
        rho[(3, 3)] = c(-0.2);
        let bad = QuantumState::from_matrix_unchecked(2, rho);
        assert!(matches!(concurrence2(&bad), Err(Error::NonPhysical(_))));
        let three = QuantumState::basis(3, 0).unwrap();
        assert!(concurrence2(&three).is_err());
    }

    #[test]
    fn mixed_validation() {
        let mut rho = CMatrix::identity(2, 2).unscale(2.0);
        rho[(0, 1)] = c(0.1);
        assert!(matches!(QuantumState::mixed(rho.clone()), Err(Error::NotHermitian(_))));
        rho[(1, 0)] = c(0.1);
        assert!(QuantumState::mixed(rho).is_ok());
        let neg = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.5), c(-0.5)]));
        assert!(matches!(QuantumState::mixed(neg), Err(Error::NonPhysical(_))));
    }

    #[test]
    fn json_round_trip() {
        let s = QuantumState::on_pair(3, 0, 2, [c(0.6), C64::new(0.0, 0.8), c(0.0), c(0.0)]).unwrap();
        let back = QuantumState::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        let m = s.to_mixed();
        let back = QuantumState::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let doc: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(doc["kind"], "mixed");
        assert_eq!(doc["re"].as_array().unwrap().len(), 64);
        assert!(QuantumState::from_json(r#"{"n_qubits":1,"kind":"pure","re":[1,1],"im":[0,0]}"#).is_err());
    }

    #[test]
    fn reduced_pair_of_embedded_bell() {
        let s = QuantumState::on_pair(4, 1, 3, [c(1.0), c(0.0), c(0.0), c(1.0)]).unwrap();
        let red = s.reduced_pair(1, 3).unwrap();
        assert!((red.density_matrix() - bell().density_matrix()).norm() < 1e-14);
        let spectator = s.reduced_pair(0, 2).unwrap();
        assert_abs_diff_eq!(spectator.density_matrix()[(0, 0)].re, 1.0, epsilon = 1e-14);
    }
}
