use qlm_core::circuit::Backend;
use qlm_core::dynamics::EvolutionConfig;
use qlm_core::model::{Checkpoint, Model};
use qlm_core::optim::{residuals, train, OptimizerKind, TrainOptions};
use qlm_core::training::{make_training_set, random_circuit, random_hamiltonian, transfer_init};

fn trained_pair_model(model: Model, seed: u64) -> Model {
    let set = make_training_set(2).unwrap();
    let opts = TrainOptions { epochs: 20, seed, ..Default::default() };
    train(&model, &set, OptimizerKind::Lm, &Backend::Exact, &opts, |_, _| {}).unwrap().model
}

fn staged_vs_fresh(make: impl Fn(usize, u64) -> Model) -> (usize, Vec<(f64, f64)>) {
    let set3 = make_training_set(3).unwrap();
    let rms = |m: &Model| residuals(m, &set3, &Backend::Exact).unwrap().rms;
    let pairs: Vec<(f64, f64)> = (0..10u64)
        .map(|seed| {
            let staged = transfer_init(&trained_pair_model(make(2, seed), seed), 3).unwrap();
            (rms(&staged), rms(&make(3, seed)))
        })
        .collect();
    (pairs.iter().filter(|(s, f)| s < f).count(), pairs)
}

#[test]
fn staged_start_beats_fresh_start() {
    let evolution = EvolutionConfig::new(200).unwrap();
    let (wins, pairs) =
        staged_vs_fresh(|n, seed| Model::Hamiltonian { params: random_hamiltonian(n, 200.0, 3, seed).unwrap(), evolution });
    let mean = |k: fn(&(f64, f64)) -> f64| pairs.iter().map(k).sum::<f64>() / pairs.len() as f64;
    assert!(mean(|p| p.0) < mean(|p| p.1), "{pairs:?}");
    assert!(wins >= 8, "{wins}/10: {pairs:?}");
}

#[test]
fn checkpoint_round_trip_gives_identical_jacobian() {
    let set = make_training_set(3).unwrap();
    let models = [
        Model::Circuit(random_circuit(3, 4, 9).unwrap()),
        Model::Hamiltonian { params: random_hamiltonian(3, 200.0, 3, 9).unwrap(), evolution: EvolutionConfig::new(50).unwrap() },
    ];
    for model in models {
        let model = trained_pair_model_for(&model);
        let text = model.checkpoint().to_json();
        let back = Checkpoint::from_json(&text).unwrap().into_model(EvolutionConfig::new(50).unwrap());
        assert_eq!(back, model);
        let (a, b) = (model.jacobian(&set, &Backend::Exact).unwrap(), back.jacobian(&set, &Backend::Exact).unwrap());
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

/// A few epochs so the weights carry full-precision noise, not round numbers.
fn trained_pair_model_for(model: &Model) -> Model {
    let set = make_training_set(model.n_qubits()).unwrap();
    let opts = TrainOptions { epochs: 2, seed: 1, ..Default::default() };
    train(model, &set, OptimizerKind::Lm, &Backend::shots(128, 1).unwrap(), &opts, |_, _| {}).unwrap().model
}
