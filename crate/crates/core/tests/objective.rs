use proptest::prelude::*;
use rand::Rng as _;
use sgdlab::objective::{estimate_constants, Objective, ObjectiveKind, ObjectiveSpec, ShardedObjective};
use sgdlab::{rng, vecops};

fn spec(kind: ObjectiveKind) -> ObjectiveSpec {
    ObjectiveSpec {
        kind,
        ..ObjectiveSpec::least_squares(40, 6, 9, 0.5)
    }
}

const KINDS: [ObjectiveKind; 3] = [ObjectiveKind::LeastSquares, ObjectiveKind::Logistic, ObjectiveKind::Nonconvex];

#[test]
fn gradients_match_central_differences() {
    let mut r = rng::seeded(77);
    for kind in KINDS {
        let obj = Objective::generate(&spec(kind)).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..obj.dim()).map(|_| r.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..obj.dim()).map(|_| r.random_range(-1.0..1.0)).collect();
            let h = 1e-6;
            let plus: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
            let minus: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
            let fd = (obj.value(&plus).unwrap() - obj.value(&minus).unwrap()) / (2.0 * h);
            let an = vecops::dot(&obj.full_gradient(&x).unwrap(), &v);
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "{kind:?}: {fd} vs {an}");
        }
    }
}

#[test]
fn full_gradient_is_mean_of_sample_gradients() {
    for kind in KINDS {
        let obj = Objective::generate(&spec(kind)).unwrap();
        let x = &obj.reference_points()[2];
        let mut acc = vec![0.0; obj.dim()];
        for m in 0..obj.samples() {
            vecops::add_assign(&mut acc, &obj.sample_gradient(x, m).unwrap());
        }
        let mean: Vec<f64> = acc.iter().map(|v| v / obj.samples() as f64).collect();
        assert_eq!(mean, obj.full_gradient(x).unwrap());
    }
}

#[test]
fn equal_shards_average_to_the_objective() {
    for kind in KINDS {
        let obj = Objective::generate(&spec(kind)).unwrap();
        let x = obj.reference_points()[3].clone();
        let f = obj.value(&x).unwrap();
        let sharded = ShardedObjective::new(obj, 4).unwrap();
        assert!(sharded.shards_equal_sized());
        let avg = (0..4).map(|n| sharded.shard_value(n, &x).unwrap()).sum::<f64>() / 4.0;
        assert!((avg - f).abs() <= 1e-12 * f.abs().max(1.0));
    }
}

/// Largest eigenvalue of `A^T A / M` by power iteration.
fn power_smoothness(obj: &Objective) -> f64 {
    let d = obj.dim();
    let mut v = vec![1.0; d];
    let mut lambda = 0.0;
    for _ in 0..5000 {
        let mut w = vec![0.0; d];
        for m in 0..obj.samples() {
            let a = obj.features(m);
            let z = vecops::dot(a, &v);
            for i in 0..d {
                w[i] += a[i] * z / obj.samples() as f64;
            }
        }
        lambda = vecops::norm(&w) / vecops::norm(&v);
        let n = vecops::norm(&w);
        v = w.iter().map(|x| x / n).collect();
    }
    lambda
}

#[test]
fn smoothness_matches_power_iteration() {
    let obj = Objective::generate(&spec(ObjectiveKind::LeastSquares)).unwrap();
    let l = power_smoothness(&obj);
    assert!((obj.smoothness() - l).abs() <= 1e-8 * l);
    let logistic = Objective::generate(&spec(ObjectiveKind::Logistic)).unwrap();
    assert!((logistic.smoothness() - power_smoothness(&logistic) / 4.0).abs() <= 1e-8 * l);
}

#[test]
fn minimizer_has_zero_gradient() {
    let obj = Objective::generate(&spec(ObjectiveKind::LeastSquares)).unwrap();
    let g = obj.full_gradient(obj.minimizer().unwrap()).unwrap();
    assert!(vecops::norm(&g) < 1e-10);
    assert_eq!(obj.f_star(), Some(obj.value(obj.minimizer().unwrap()).unwrap()));
}

#[test]
fn estimated_constants_bound_the_measured_ones() {
    let obj = Objective::generate(&spec(ObjectiveKind::LeastSquares)).unwrap();
    let sharded = ShardedObjective::new(obj, 4).unwrap();
    let c = estimate_constants(&sharded, 8, 3).unwrap();
    assert!(c.l_hat > 0.0 && c.l_hat <= sharded.parent().smoothness() * (1.0 + 1e-9));
    assert!(c.sigma_hat >= 0.0 && c.varsigma_hat >= 0.0);
}

proptest! {
    #[test]
    fn generation_is_deterministic(seed in 0u64..1000, m in 2usize..30, d in 1usize..6) {
        let s = ObjectiveSpec::least_squares(m, d, seed, 0.3);
        let a = Objective::generate(&s).unwrap();
        let b = Objective::generate(&s).unwrap();
        prop_assert_eq!(a.reference_points(), b.reference_points());
        prop_assert_eq!(a.value(&vec![0.5; d]).unwrap(), b.value(&vec![0.5; d]).unwrap());
    }
}
