use epal::kernels::{KernelFamily, MultiOutputKernel, ScalarKernel};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn family() -> impl Strategy<Value = KernelFamily> {
    prop_oneof![Just(KernelFamily::SquaredExponential), Just(KernelFamily::Matern52)]
}

fn scalar() -> impl Strategy<Value = ScalarKernel> {
    (family(), 0.05..2.0f64, 0.02..1.0f64).prop_map(|(f, v, l)| ScalarKernel::new(f, v, l).unwrap())
}

/// Random square matrix with unit-norm rows.
fn mixing(m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, m * m).prop_map(move |v| {
        let mut a = DMatrix::from_row_slice(m, m, &v);
        for i in 0..m {
            let norm = a.row(i).norm().max(1e-3);
            for j in 0..m {
                a[(i, j)] /= norm;
            }
            if a.row(i).norm() < 0.5 {
                a.row_mut(i).fill(0.0);
                a[(i, i)] = 1.0;
            }
        }
        a
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn induced_metric_below_holder_bound(k in scalar()) {
        let c = k.smoothness_constants();
        let x0 = 0.0;
        for i in 0..=10_000 {
            let x = i as f64 / 10_000.0;
            let d = (x - x0).abs();
            let l = k.induced_metric(d);
            // direct form of the induced metric as a second evaluator
            let direct = (k.eval(&[x0], &[x0]) + k.eval(&[x], &[x]) - 2.0 * k.eval(&[x0], &[x])).max(0.0).sqrt();
            prop_assert!((l - direct).abs() <= 1e-9);
            prop_assert!(l <= c.c_k * d.powf(c.alpha) + 1e-9, "d={d} l={l}");
        }
    }

    #[test]
    fn scalar_symmetry_is_exact(k in scalar(), x in prop::collection::vec(-2.0..2.0f64, 3), y in prop::collection::vec(-2.0..2.0f64, 3)) {
        prop_assert_eq!(k.eval(&x, &y), k.eval(&y, &x));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn output_covariance_is_psd(
        bases in prop::collection::vec(scalar(), 3),
        a in mixing(3),
        x in prop::collection::vec(0.0..1.0f64, 2),
        y in prop::collection::vec(0.0..1.0f64, 2),
        mixed in any::<bool>(),
    ) {
        let kernel = if mixed {
            MultiOutputKernel::linear_mixing(bases, a).unwrap()
        } else {
            MultiOutputKernel::independent(bases).unwrap()
        };
        for (p, q) in [(&x, &x), (&y, &y)] {
            let k = kernel.eval_matrix(p, q);
            prop_assert!((&k - k.transpose()).abs().max() <= 1e-15);
            let min = k.symmetric_eigenvalues().min();
            prop_assert!(min >= -1e-10, "min eigenvalue {min}");
        }
        // the joint 2m x 2m block matrix over the pair is PSD as well
        let m = kernel.outputs();
        let mut joint = DMatrix::zeros(2 * m, 2 * m);
        let pts = [&x, &y];
        for (i, p) in pts.iter().enumerate() {
            for (j, q) in pts.iter().enumerate() {
                joint.view_mut((i * m, j * m), (m, m)).copy_from(&kernel.eval_matrix(p, q));
            }
        }
        let sym = (&joint + joint.transpose()) * 0.5;
        prop_assert!(sym.symmetric_eigenvalues().min() >= -1e-10);
    }
}
