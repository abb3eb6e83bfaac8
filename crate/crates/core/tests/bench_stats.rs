use epal::bench::{
    avg_mse, eps_accuracy, eps_coverage, sample_gp_function, true_pareto_front, Grid, SampledObjective,
};
use epal::kernels::{KernelFamily, MultiOutputKernel, ScalarKernel};
use epal::partition::{DesignSpace, Metric};
use proptest::prelude::*;

fn grid(points: usize) -> Grid {
    let space = DesignSpace::unit_cube(1, Metric::Linf).unwrap();
    Grid::new(&space, vec![points]).unwrap()
}

fn two_objectives(family: KernelFamily) -> MultiOutputKernel {
    MultiOutputKernel::independent(vec![
        ScalarKernel::new(family, 0.5, 0.1).unwrap(),
        ScalarKernel::new(family, 0.1, 0.06).unwrap(),
    ])
    .unwrap()
}

/// Values of both objectives at the grid's middle point over seeds `0..n`.
fn middle_values(kernel: &MultiOutputKernel, grid: &Grid, n: u64) -> Vec<Vec<f64>> {
    let mid = grid.len() / 2;
    (0..n)
        .map(|s| sample_gp_function(kernel, grid, s).unwrap().values()[mid].clone())
        .collect()
}

fn variance(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64
}

#[test]
fn same_seed_gives_same_values() {
    let k = two_objectives(KernelFamily::Matern52);
    for g in [grid(257), grid(16385)] {
        assert_eq!(sample_gp_function(&k, &g, 7).unwrap().values(), sample_gp_function(&k, &g, 7).unwrap().values());
    }
}

fn check_variance(seeds: u64) {
    for family in [KernelFamily::SquaredExponential, KernelFamily::Matern52] {
        let k = two_objectives(family);
        // one Cholesky-sized grid and one sampled through the circulant embedding
        for g in [grid(257), grid(16385)] {
            let vals = middle_values(&k, &g, seeds);
            for (j, nu) in [0.5, 0.1].into_iter().enumerate() {
                let col: Vec<f64> = vals.iter().map(|v| v[j]).collect();
                let v = variance(&col);
                assert!((v - nu).abs() <= 0.15 * nu, "{family:?} n={} objective {j}: {v} vs {nu}", g.len());
            }
        }
    }
}

#[test]
fn pointwise_variance_over_50_seeds() {
    check_variance(50);
}

#[test]
fn pointwise_variance_over_1000_seeds() {
    check_variance(1000);
}

#[test]
fn independent_objectives_are_uncorrelated() {
    let k = two_objectives(KernelFamily::SquaredExponential);
    for g in [grid(257), grid(16385)] {
        let vals = middle_values(&k, &g, 200);
        let a: Vec<f64> = vals.iter().map(|v| v[0]).collect();
        let b: Vec<f64> = vals.iter().map(|v| v[1]).collect();
        let (ma, mb) = (a.iter().sum::<f64>() / 200.0, b.iter().sum::<f64>() / 200.0);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / 199.0;
        let r = cov / (variance(&a) * variance(&b)).sqrt();
        assert!(r.abs() <= 0.1, "n={} correlation {r}", g.len());
    }
}

fn tabulated(f: impl Fn(f64) -> Vec<f64>, n: usize) -> SampledObjective {
    let g = grid(n);
    let values = g.points().iter().map(|p| f(p[0])).collect();
    SampledObjective::from_values(g, values, 0).unwrap()
}

#[test]
fn conflicting_objectives_put_every_point_on_the_front() {
    let obj = tabulated(|x| vec![x, 1.0 - x], 101);
    assert_eq!(true_pareto_front(&obj).points.len(), 101);
}

#[test]
fn aligned_objectives_keep_only_the_maximum() {
    let obj = tabulated(|x| vec![x, x], 101);
    let front = true_pareto_front(&obj);
    assert_eq!(front.points.len(), 1);
    assert_eq!(front.points[0].as_ref(), &[1.0, 1.0]);
}

fn brute_force(values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    values
        .iter()
        .filter(|p| {
            !values
                .iter()
                .any(|q| q.iter().zip(p.iter()).all(|(a, b)| a >= b) && q.iter().zip(p.iter()).any(|(a, b)| a > b))
        })
        .cloned()
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn true_front_matches_brute_force(vals in prop::collection::vec(prop::collection::vec((0i32..6).prop_map(f64::from), 2), 2..60)) {
        let g = grid(vals.len());
        let obj = SampledObjective::from_values(g, vals.clone(), 0).unwrap();
        let front: Vec<Vec<f64>> = true_pareto_front(&obj).points.iter().map(|p| p.to_vec()).collect();
        prop_assert_eq!(front, brute_force(&vals));
    }

    #[test]
    fn metrics_are_monotone_in_epsilon(
        truth in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 2), 1..20),
        predicted in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 2), 1..20),
        e in 0.0..0.3f64,
        extra in 0.0..0.3f64,
    ) {
        let front = brute_force(&truth);
        let (small, large) = (vec![e; 2], vec![e + extra; 2]);
        prop_assert!(eps_coverage(&front, &predicted, &large, 0.0).unwrap() >= eps_coverage(&front, &predicted, &small, 0.0).unwrap());
        // accuracy is monotone for points below the front; the slab only grows downward
        let below: Vec<Vec<f64>> = predicted.iter().filter(|y| front.iter().any(|p| y.iter().zip(p).all(|(a, b)| a <= b))).cloned().collect();
        if !below.is_empty() {
            prop_assert!(eps_accuracy(&below, &front, &large, 0.0).unwrap() >= eps_accuracy(&below, &front, &small, 0.0).unwrap());
        }
    }

    #[test]
    fn mse_vanishes_when_truth_is_predicted(
        truth in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 2), 1..20),
        extra in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 2), 0..10),
    ) {
        let mut predicted = truth.clone();
        predicted.extend(extra);
        prop_assert_eq!(avg_mse(&truth, &predicted).unwrap(), 0.0);
        let front = brute_force(&truth);
        prop_assert_eq!(eps_accuracy(&front, &front, &[0.01, 0.01], 0.0).unwrap(), 1.0);
        prop_assert_eq!(eps_coverage(&front, &predicted, &[0.0, 0.0], 0.0).unwrap(), 1.0);
    }
}
