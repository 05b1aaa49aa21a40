//! Training data, parameter transfer between system sizes, and the staged driver.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, FRAC_PI_8};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{weights_per_segment, Backend, CircuitWeights, GateOp};
use crate::dynamics::{qubit_pairs, FourierParam, HamiltonianParams};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::model::{Checkpoint, Model};
use crate::optim::{train, EpochRecord, OptimizerKind, TrainOptions};
use crate::qstate::{concurrence2, QuantumState};

/// Largest register accepted by [`make_training_set`] unless overridden.
pub const DEFAULT_TRAINING_QUBIT_CAP: usize = 8;

/// Epoch budget per stage for registers of 2, 3, … qubits.
pub const DEFAULT_STAGE_EPOCHS: [usize; 7] = [20, 20, 20, 10, 10, 10, 10];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairState {
    Bell,
    Ground,
    Product,
    Partial,
}

impl PairState {
    pub const ALL: [PairState; 4] = [PairState::Bell, PairState::Ground, PairState::Product, PairState::Partial];

    /// Two-qubit amplitudes `[c00, c01, c10, c11]`.
    pub fn amplitudes(self) -> [C64; 4] {
        let r = |x: f64| C64::new(x, 0.0);
        match self {
            PairState::Bell => [r(FRAC_1_SQRT_2), r(0.0), r(0.0), r(FRAC_1_SQRT_2)],
            PairState::Ground => [r(1.0), r(0.0), r(0.0), r(0.0)],
            PairState::Product => [r(0.5), r(0.5), r(0.5), r(0.5)],
            PairState::Partial => [r(FRAC_PI_8.cos()), r(0.0), r(0.0), r(FRAC_PI_8.sin())],
        }
    }

    pub fn target(self) -> f64 {
        match self {
            PairState::Bell => 1.0,
            PairState::Ground | PairState::Product => 0.0,
            PairState::Partial => FRAC_PI_4.sin(),
        }
    }

    /// Gates preparing the state on `(alpha, beta)` from `|0…0⟩`.
    pub fn preparation(self, alpha: usize, beta: usize) -> Vec<GateOp> {
        match self {
            PairState::Bell => vec![GateOp::ry(alpha, FRAC_PI_2), GateOp::cnot(alpha, beta)],
            PairState::Ground => Vec::new(),
            PairState::Product => vec![GateOp::ry(alpha, FRAC_PI_2), GateOp::ry(beta, FRAC_PI_2)],
            PairState::Partial => vec![GateOp::ry(alpha, FRAC_PI_4), GateOp::cnot(alpha, beta)],
        }
    }
}

/// One labelled example: the witness on `(alpha, beta)` should read `target` for `input`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub input: QuantumState,
    pub alpha: usize,
    pub beta: usize,
    pub target: f64,
    /// Preparation circuit for backends that start from `|0…0⟩`.
    pub preparation: Option<Vec<GateOp>>,
}

impl TrainingPair {
    /// Labels `input` with the concurrence of its reduced `(alpha, beta)` state.
    pub fn labelled(input: QuantumState, alpha: usize, beta: usize) -> Result<Self> {
        let target = concurrence2(&input.reduced_pair(alpha, beta)?)?;
        Ok(Self { input, alpha, beta, target, preparation: None })
    }

    pub fn canonical(n_qubits: usize, alpha: usize, beta: usize, kind: PairState) -> Result<Self> {
        let input = QuantumState::on_pair(n_qubits, alpha, beta, kind.amplitudes())?;
        let target = kind.target();
        let oracle = concurrence2(&input.reduced_pair(alpha, beta)?)?;
        if (oracle - target).abs() > 1e-9 {
            return Err(Error::InvalidState(format!("{kind:?} target {target} disagrees with concurrence {oracle}")));
        }
        Ok(Self { input, alpha, beta, target, preparation: Some(kind.preparation(alpha, beta)) })
    }
}

/// Four canonical states on every qubit pair, spectators in `|0⟩`: `4·N(N−1)/2` examples.
pub fn make_training_set(n_qubits: usize) -> Result<Vec<TrainingPair>> {
    make_training_set_capped(n_qubits, DEFAULT_TRAINING_QUBIT_CAP)
}

pub fn make_training_set_capped(n_qubits: usize, cap: usize) -> Result<Vec<TrainingPair>> {
    if n_qubits < 2 {
        return Err(Error::InvalidParams(format!("a training set needs at least 2 qubits, got {n_qubits}")));
    }
    if n_qubits > cap {
        return Err(Error::DimensionOverflow { qubits: n_qubits, cap });
    }
    let mut set = Vec::with_capacity(4 * n_qubits * (n_qubits - 1) / 2);
    for (a, b) in qubit_pairs(n_qubits) {
        for kind in PairState::ALL {
            set.push(TrainingPair::canonical(n_qubits, a, b, kind)?);
        }
    }
    Ok(set)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn mean_param(ps: &[FourierParam], harmonics: usize) -> FourierParam {
    if ps.is_empty() {
        return FourierParam::constant(0.0, harmonics);
    }
    FourierParam {
        w0: mean(ps.iter().map(|p| p.w0)),
        sin: (0..harmonics).map(|j| mean(ps.iter().map(|p| p.sin[j]))).collect(),
        cos: (0..harmonics).map(|j| mean(ps.iter().map(|p| p.cos[j]))).collect(),
    }
}

/// Grows Fourier parameters to `n_target` qubits. Existing entries are copied,
/// new qubits take the mean of the existing per-qubit fields and new pairs the
/// mean of the existing couplings.
pub fn transfer_hamiltonian(src: &HamiltonianParams, n_target: usize) -> Result<HamiltonianParams> {
    src.validate()?;
    if n_target < src.n_qubits {
        return Err(Error::InvalidParams(format!("cannot shrink {} qubits to {n_target}", src.n_qubits)));
    }
    let h = src.harmonics();
    let k_mean = mean_param(&src.tunneling, h);
    let e_mean = mean_param(&src.bias, h);
    let z_mean = mean_param(&src.coupling, h);
    let old_pairs = qubit_pairs(src.n_qubits);
    let mut tunneling = src.tunneling.clone();
    let mut bias = src.bias.clone();
    tunneling.resize(n_target, k_mean);
    bias.resize(n_target, e_mean);
    let coupling = qubit_pairs(n_target)
        .into_iter()
        .map(|pair| match old_pairs.iter().position(|&p| p == pair) {
            Some(i) => src.coupling[i].clone(),
            None => z_mean.clone(),
        })
        .collect();
    let out = HamiltonianParams { n_qubits: n_target, t_f_ns: src.t_f_ns, tunneling, bias, coupling };
    out.validate()?;
    Ok(out)
}

/// Segment-wise counterpart of [`transfer_hamiltonian`] for circuit angles.
pub fn transfer_circuit(src: &CircuitWeights, n_target: usize) -> Result<CircuitWeights> {
    let n = src.n_qubits;
    if n_target < n {
        return Err(Error::InvalidParams(format!("cannot shrink {n} qubits to {n_target}")));
    }
    let old_pairs = qubit_pairs(n);
    let mut angles = Vec::with_capacity(src.n_segments * weights_per_segment(n_target));
    for s in 0..src.n_segments {
        let seg = src.segment(s);
        let (ry, rest) = seg.split_at(n);
        let (rz, zz) = rest.split_at(n);
        for block in [ry, rz] {
            let m = mean(block.iter().copied());
            angles.extend_from_slice(block);
            angles.extend(std::iter::repeat(m).take(n_target - n));
        }
        let zz_mean = mean(zz.iter().copied());
        for pair in qubit_pairs(n_target) {
            angles.push(match old_pairs.iter().position(|&p| p == pair) {
                Some(i) => zz[i],
                None => zz_mean,
            });
        }
    }
    CircuitWeights::new(n_target, src.n_segments, angles)
}

/// Transfers whichever parameterization `model` carries.
pub fn transfer_init(model: &Model, n_target: usize) -> Result<Model> {
    Ok(match model {
        Model::Circuit(w) => Model::Circuit(transfer_circuit(w, n_target)?),
        Model::Hamiltonian { params, evolution } => {
            Model::Hamiltonian { params: transfer_hamiltonian(params, n_target)?, evolution: *evolution }
        }
    })
}

/// Nominal values scaled entrywise by `U(0.5, 1.5)`.
pub fn random_circuit(n_qubits: usize, n_segments: usize, seed: u64) -> Result<CircuitWeights> {
    let nominal = CircuitWeights::nominal(n_qubits, n_segments)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Uniform::new(0.5, 1.5);
    let angles = nominal.angles.iter().map(|a| a * jitter.sample(&mut rng)).collect();
    nominal.with_angles(angles)
}

/// Nominal constant fields with each offset `w0` scaled by `U(0.5, 1.5)`.
pub fn random_hamiltonian(n_qubits: usize, t_f_ns: f64, harmonics: usize, seed: u64) -> Result<HamiltonianParams> {
    use crate::dynamics::{INIT_BIAS, INIT_COUPLING, INIT_TUNNELING};
    let mut hp = HamiltonianParams::constant(n_qubits, t_f_ns, harmonics, INIT_TUNNELING, INIT_BIAS, INIT_COUPLING)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Uniform::new(0.5, 1.5);
    for p in hp.tunneling.iter_mut().chain(hp.bias.iter_mut()).chain(hp.coupling.iter_mut()) {
        p.w0 *= jitter.sample(&mut rng);
    }
    Ok(hp)
}

/// Qubit counts trained in sequence, each initialized from the previous stage.
#[derive(Clone, Debug)]
pub struct StagePlan {
    pub qubits: Vec<usize>,
    pub epochs: Vec<usize>,
    pub optimizer: OptimizerKind,
    pub backend: Backend,
    pub options: TrainOptions,
}

impl StagePlan {
    /// Stages `first..=last` with the default epoch budget.
    pub fn range(first: usize, last: usize, optimizer: OptimizerKind, backend: Backend, options: TrainOptions) -> Result<Self> {
        let qubits: Vec<usize> = (first..=last).collect();
        let epochs = qubits
            .iter()
            .map(|&n| DEFAULT_STAGE_EPOCHS.get(n.saturating_sub(2)).copied().unwrap_or(10))
            .collect();
        let plan = Self { qubits, epochs, optimizer, backend, options };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.qubits.is_empty() {
            return Err(Error::InvalidParams("a stage plan needs at least one stage".into()));
        }
        if self.qubits.len() != self.epochs.len() {
            return Err(Error::InvalidParams("qubits and epochs must have the same length".into()));
        }
        if self.qubits.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams("qubit counts must be strictly increasing".into()));
        }
        if self.qubits[0] < 2 {
            return Err(Error::InvalidParams("stages need at least 2 qubits".into()));
        }
        if self.epochs.contains(&0) {
            return Err(Error::InvalidParams("every stage needs at least one epoch".into()));
        }
        Ok(())
    }
}

/// One row of the stage summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub n_qubits: usize,
    pub n_pairs: usize,
    pub epochs: usize,
    pub start_rms: f64,
    pub finish_rms: f64,
}

#[derive(Clone, Debug)]
pub struct StageResult {
    pub summary: StageSummary,
    pub records: Vec<EpochRecord>,
    pub checkpoint: Checkpoint,
}

/// Runs each stage in turn. `initial` is the model for the first stage;
/// `on_stage` sees every finished stage before the next one starts, so callers
/// can persist checkpoints. A failing stage stops the plan and returns the error.
pub fn run_stage_plan(
    plan: &StagePlan,
    initial: Model,
    on_stage: impl FnMut(&StageResult) -> Result<()>,
) -> Result<Vec<StageResult>> {
    run_stage_plan_from(plan, 0, initial, on_stage)
}

/// Like [`run_stage_plan`] but skips the stages before `first`. `initial` may
/// be the checkpoint of an earlier stage; it is transferred up as needed.
/// Stage seeds depend on the stage index only, so a resumed plan reproduces
/// the uninterrupted one.
pub fn run_stage_plan_from(
    plan: &StagePlan,
    first: usize,
    initial: Model,
    mut on_stage: impl FnMut(&StageResult) -> Result<()>,
) -> Result<Vec<StageResult>> {
    plan.validate()?;
    if first >= plan.qubits.len() {
        return Err(Error::InvalidParams(format!("stage {first} is past the end of a {}-stage plan", plan.qubits.len())));
    }
    let n_first = plan.qubits[first];
    if initial.n_qubits() > n_first || (first == 0 && initial.n_qubits() != n_first) {
        return Err(Error::DimensionMismatch { expected: n_first, got: initial.n_qubits() });
    }
    let mut model = initial;
    let mut results = Vec::with_capacity(plan.qubits.len() - first);
    for (stage, (&n, &epochs)) in plan.qubits.iter().zip(&plan.epochs).enumerate().skip(first) {
        if model.n_qubits() != n {
            model = transfer_init(&model, n)?;
        }
        let set = make_training_set(n)?;
        let mut options = plan.options.clone();
        options.epochs = epochs;
        options.seed = crate::seed::derive_seed(plan.options.seed, &[stage as u64]);
        let report = train(&model, &set, plan.optimizer, &plan.backend, &options, |_, _| {})?;
        let result = StageResult {
            summary: StageSummary {
                n_qubits: n,
                n_pairs: set.len(),
                epochs,
                start_rms: report.start_rms,
                finish_rms: report.finish_rms,
            },
            records: report.records,
            checkpoint: report.model.checkpoint(),
        };
        on_stage(&result)?;
        model = report.model;
        results.push(result);
    }
    Ok(results)
}
