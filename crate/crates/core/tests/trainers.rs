use sgdlab::collectives::CollectiveKind;
use sgdlab::compression::Compressor;
use sgdlab::objective::{Objective, ObjectiveKind, ObjectiveSpec};
use sgdlab::topology::TopologyKind;
use sgdlab::trainers::{
    self, auto_learning_rate, Algorithm, CsgdForm, LrInputs, LrRule, MbImplementation, NetworkConfig, RunMetrics,
    TrainerConfig,
};
use sgdlab::vecops;
use sgdlab::SimTime;

fn instance() -> Objective {
    Objective::generate(&ObjectiveSpec::least_squares(64, 8, 3, 0.5)).unwrap()
}

fn max_traj_diff(a: &RunMetrics, b: &RunMetrics) -> f64 {
    assert_eq!(a.trajectory.len(), b.trajectory.len());
    a.trajectory
        .iter()
        .zip(&b.trajectory)
        .map(|(x, y)| vecops::max_abs_diff(x, y))
        .fold(0.0, f64::max)
}

fn mb(n: usize) -> TrainerConfig {
    TrainerConfig::new(Algorithm::MbSgd, 200).workers(n).batch(2).gamma(0.05).seed(11)
}

#[test]
fn mb_sgd_implementations_agree() {
    let obj = instance();
    let g = trainers::run(&mb(4), &obj).unwrap();
    let m = trainers::run(&mb(4).implementation(MbImplementation::ModelAgg), &obj).unwrap();
    let r = trainers::run(
        &mb(4)
            .implementation(MbImplementation::GlobalReplica)
            .collective(CollectiveKind::PsSingle),
        &obj,
    )
    .unwrap();
    assert!(max_traj_diff(&g, &m) < 1e-12);
    assert!(max_traj_diff(&g, &r) < 1e-12);
}

#[test]
fn identity_compression_matches_mb_sgd() {
    let obj = instance();
    let base = trainers::run(&mb(4).collective(CollectiveKind::PsMulti), &obj).unwrap();
    let cs = trainers::run(&TrainerConfig { algorithm: Algorithm::Csgd, ..mb(4) }, &obj).unwrap();
    assert_eq!(base.trajectory, cs.trajectory);
    let ring = trainers::run(&mb(4), &obj).unwrap();
    let cs_ring = trainers::run(&TrainerConfig { algorithm: Algorithm::Csgd, ..mb(4) }.form(CsgdForm::Ring), &obj).unwrap();
    assert_eq!(ring.trajectory, cs_ring.trajectory);
    let ps = trainers::run(&mb(4).collective(CollectiveKind::PsSingle), &obj).unwrap();
    let ec = trainers::run(&TrainerConfig { algorithm: Algorithm::EcSgd, ..mb(4) }, &obj).unwrap();
    assert_eq!(ps.trajectory, ec.trajectory);
    assert_eq!(ec.lemma_residual_max, Some(0.0));
}

#[test]
fn asgd_single_worker_is_sgd() {
    let obj = instance();
    let sgd = TrainerConfig::new(Algorithm::Sgd, 300).batch(2).gamma(0.05).seed(4);
    let asgd = TrainerConfig { algorithm: Algorithm::Asgd, ..sgd.clone() }.tau(0);
    let a = trainers::run(&sgd, &obj).unwrap();
    let b = trainers::run(&asgd, &obj).unwrap();
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(b.max_staleness(), Some(0));
}

fn timed() -> NetworkConfig {
    NetworkConfig {
        latency: SimTime::from_integer(1),
        transfer_per_unit: SimTime::new(1, 100),
        unit_per_element: SimTime::from_integer(1),
        compute_time: SimTime::from_integer(1000),
        compute_factors: Vec::new(),
    }
}

#[test]
fn asgd_equal_workers_have_staleness_n_minus_one() {
    let obj = instance();
    let cfg = TrainerConfig::new(Algorithm::Asgd, 200).workers(4).gamma(0.01).tau(8).network(timed());
    let m = trainers::run(&cfg, &obj).unwrap();
    assert_eq!(m.max_staleness(), Some(3));
    assert_eq!(m.iterations(), 200);
    let times: Vec<_> = m.records.iter().map(|r| r.sim_time).collect();
    assert!(times.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn asgd_gate_bounds_staleness() {
    let obj = instance();
    let mut net = timed();
    net.compute_factors = vec![
        SimTime::from_integer(1),
        SimTime::from_integer(1),
        SimTime::from_integer(2),
        SimTime::from_integer(1),
    ];
    for tau in [0usize, 1, 2, 5] {
        let cfg = TrainerConfig::new(Algorithm::Asgd, 120).workers(4).gamma(0.01).tau(tau).network(net.clone());
        let m = trainers::run(&cfg, &obj).unwrap();
        assert_eq!(m.staleness.len(), 120);
        assert!(m.max_staleness().unwrap() <= tau, "tau {tau}: {:?}", m.max_staleness());
    }
}

#[test]
fn dsgd_fully_connected_matches_model_averaging() {
    let obj = instance();
    let d = TrainerConfig { algorithm: Algorithm::Dsgd, ..mb(4) }.topology(TopologyKind::FullyConnected);
    let a = trainers::run(&d, &obj).unwrap();
    let b = trainers::run(&mb(4).implementation(MbImplementation::ModelAgg), &obj).unwrap();
    assert!(max_traj_diff(&a, &b) < 1e-10);
}

#[test]
fn dsgd_rejects_disconnected() {
    let obj = instance();
    let d = TrainerConfig { algorithm: Algorithm::Dsgd, ..mb(4) }.topology(TopologyKind::DisconnectedBlock);
    assert!(trainers::run(&d, &obj).is_err());
}

#[test]
fn dsgd_zero_step_keeps_consensus() {
    let obj = instance();
    let mut d = TrainerConfig { algorithm: Algorithm::Dsgd, ..mb(4) }.gamma(1e-300);
    d.iterations = 1;
    d.x0 = Some(vec![0.5; 8]);
    let m = trainers::run(&d, &obj).unwrap();
    assert!(vecops::max_abs_diff(&m.final_model, &[0.5; 8]) < 1e-12);
    assert!(m.final_consensus() < 1e-12);
}

#[test]
fn k_step_one_is_model_averaging() {
    let obj = instance();
    let k = TrainerConfig { algorithm: Algorithm::KStepAvg, ..mb(4) }.k(1);
    let a = trainers::run(&k, &obj).unwrap();
    let b = trainers::run(&mb(4).implementation(MbImplementation::ModelAgg), &obj).unwrap();
    assert_eq!(a.trajectory, b.trajectory);
}

#[test]
fn k_step_round_count_and_cost() {
    let obj = instance();
    let mut k = TrainerConfig { algorithm: Algorithm::KStepAvg, ..mb(4) }.k(3).network(timed());
    k.iterations = 10;
    let m = trainers::run(&k, &obj).unwrap();
    assert_eq!(m.comm_rounds, 4);
    let per = m.round_simulated.unwrap();
    assert_eq!(m.total_comm_time, per * 4);
    let compute = SimTime::from_integer(1000) * 10;
    assert_eq!(m.total_sim_time(), compute + per * 4);
    k.k = Some(10);
    assert_eq!(trainers::run(&k, &obj).unwrap().comm_rounds, 1);
}

#[test]
fn csgd_compressed_round_time() {
    let obj = Objective::generate(&ObjectiveSpec::least_squares(64, 64, 3, 0.5)).unwrap();
    let cfg = TrainerConfig { algorithm: Algorithm::Csgd, ..mb(4) }
        .compressor(Compressor::RandomizedQuantization { bits: 8 })
        .network(NetworkConfig { compute_time: SimTime::ZERO, ..timed() });
    let m = trainers::run(&cfg, &obj).unwrap();
    assert_eq!(m.round_simulated, m.round_closed_form);
    assert_eq!(m.total_sim_time(), m.round_simulated.unwrap() * 200);
    let full = trainers::run(&mb(4).collective(CollectiveKind::PsMulti).network(NetworkConfig { compute_time: SimTime::ZERO, ..timed() }), &obj)
        .unwrap();
    assert!(m.total_sim_time() < full.total_sim_time());
    assert!(m.total_bytes() < full.total_bytes());
}

#[test]
fn biased_csgd_warns() {
    let obj = instance();
    let cfg = TrainerConfig { algorithm: Algorithm::Csgd, ..mb(4) }.compressor(Compressor::OneBitSign);
    let m = trainers::run(&cfg, &obj).unwrap();
    assert!(m.warnings.iter().any(|w| w.contains("biased")));
}

#[test]
fn ec_sgd_lemma_with_biased_compressors() {
    let obj = Objective::generate(&ObjectiveSpec::least_squares(64, 16, 5, 0.5)).unwrap();
    for c in [Compressor::Clipping { k: 40 }, Compressor::RandomizedQuantization { bits: 2 }] {
        let cfg = TrainerConfig::new(Algorithm::EcSgd, 100).workers(4).gamma(0.02).seed(1).compressor(c);
        let m = trainers::run(&cfg, &obj).unwrap();
        assert!(m.lemma_residual_max.unwrap() <= 1e-10);
    }
}

#[test]
fn gd_descends_and_warns_on_large_step() {
    let obj = instance();
    let m = trainers::run(&TrainerConfig::new(Algorithm::Gd, 300), &obj).unwrap();
    assert!((m.gamma - 1.0 / obj.smoothness()).abs() < 1e-15);
    let mut prev = m.initial_loss;
    for r in &m.records {
        assert!(r.loss <= prev + 1e-12);
        prev = r.loss;
    }
    let big = trainers::run(&TrainerConfig::new(Algorithm::Gd, 5).gamma(2.5 / obj.smoothness()), &obj).unwrap();
    assert!(!big.warnings.is_empty());
}

#[test]
fn gd_one_dimensional_quadratic() {
    let obj = Objective::from_data(ObjectiveKind::LeastSquares, vec![vec![1.0]], vec![0.0], 0.0).unwrap();
    let mut cfg = TrainerConfig::new(Algorithm::Gd, 1).gamma(1.0);
    cfg.x0 = Some(vec![1.0]);
    let m = trainers::run(&cfg, &obj).unwrap();
    assert_eq!(m.final_model, vec![0.0]);
}

#[test]
fn sgd_without_noise_is_gd() {
    let obj = Objective::from_data(
        ObjectiveKind::LeastSquares,
        vec![vec![1.0, -2.0, 0.5], vec![1.0, -2.0, 0.5]],
        vec![0.3, 0.3],
        0.0,
    )
    .unwrap();
    let gd = trainers::run(&TrainerConfig::new(Algorithm::Gd, 50).gamma(0.1), &obj).unwrap();
    let sgd = trainers::run(&TrainerConfig::new(Algorithm::Sgd, 50).gamma(0.1).seed(3), &obj).unwrap();
    assert_eq!(gd.trajectory, sgd.trajectory);
}

#[test]
fn auto_rates_are_reported() {
    let obj = instance();
    let m = trainers::run(&TrainerConfig::new(Algorithm::Asgd, 50).workers(2).tau(1), &obj).unwrap();
    let expect = auto_learning_rate(
        LrRule::Asgd,
        &LrInputs { l: Some(obj.smoothness()), sigma: Some(m.gamma), tau: Some(1), iterations: 50, workers: 2, ..Default::default() },
    )
    .unwrap();
    assert!(m.gamma > 0.0 && expect.gamma > 0.0);
}
