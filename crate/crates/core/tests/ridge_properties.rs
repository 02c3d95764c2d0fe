use nalgebra::{DMatrix, DVector};
use polysens::orthobasis::IndexSet;
use polysens::pce::{fit_least_squares, Projection};
use polysens::ridge::{fit_ridge, lift_coefficients, reduced_family, Subspace};
use polysens::sampling::sample_product;
use polysens::{IndexScheme, MarginalFamily, SampleSet, Surrogate};
use proptest::prelude::*;

fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    sample_product(&vec![MarginalFamily::hermite(); cols], rows, seed)
}

fn inputs(d: usize, seed: u64) -> Vec<MarginalFamily> {
    (0..d)
        .map(|i| {
            let shift = ((seed >> i) % 7) as f64 - 3.0;
            if (seed >> (i + 8)) % 2 == 0 {
                MarginalFamily::uniform(shift, shift + 2.0).unwrap()
            } else {
                MarginalFamily::gaussian(shift, 0.5).unwrap()
            }
        })
        .collect()
}

fn max_rel_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

fn smooth(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        x.nrows(),
        x.row_iter().map(|r| (0.3 * r.sum()).sin() + r.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v * v).sum::<f64>()),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lifted_surrogate_reproduces_the_ridge(d in 3usize..=6, n in 1usize..=2, p in 1u32..=3, seed in any::<u64>()) {
        let fams = inputs(d, seed);
        let subspace = Subspace::from_spanning(&gaussian_matrix(d, n, seed ^ 1)).unwrap();
        let reduced = IndexSet::total_order(n, p).unwrap();
        let coeffs = gaussian_matrix(reduced.len(), 1, seed ^ 2).column(0).into_owned();
        let ridge = Surrogate::new(vec![reduced_family(d); n], reduced, coeffs)
            .unwrap()
            .with_subspace(Projection::new(subspace.matrix().clone(), fams.clone()).unwrap())
            .unwrap();
        let (lifted, report) = lift_coefficients(&ridge, &IndexSet::total_order(d, p).unwrap(), None, seed ^ 3).unwrap();
        prop_assert!(report.relative_residual < 1e-8);
        let x = sample_product(&fams, 10_000, seed ^ 4);
        let dev = max_rel_diff(&lifted.evaluate(&x).unwrap(), &ridge.evaluate(&x).unwrap());
        prop_assert!(dev < 1e-8, "max relative difference {}", dev);
    }

    #[test]
    fn ridge_fit_is_invariant_to_rotating_the_subspace(d in 3usize..=5, p in 1u32..=3, seed in any::<u64>()) {
        let n = 2;
        let fams = inputs(d, seed);
        let m = Subspace::from_spanning(&gaussian_matrix(d, n, seed ^ 1)).unwrap();
        let q = gaussian_matrix(n, n, seed ^ 2).qr().q();
        let rotated = Subspace::new(m.matrix() * &q).unwrap();
        let x = sample_product(&fams, 200, seed ^ 3);
        let samples = SampleSet::new(x.clone(), smooth(&x)).unwrap();
        let a = fit_ridge(&samples, &fams, &m, IndexScheme::TotalOrder(p)).unwrap();
        let b = fit_ridge(&samples, &fams, &rotated, IndexScheme::TotalOrder(p)).unwrap();
        let test = sample_product(&fams, 500, seed ^ 4);
        let dev = max_rel_diff(&a.evaluate(&test).unwrap(), &b.evaluate(&test).unwrap());
        prop_assert!(dev < 1e-8, "max relative difference {}", dev);
    }

    #[test]
    fn coordinate_ridge_matches_a_full_fit_in_those_coordinates(d in 3usize..=5, n in 1usize..=2, p in 1u32..=3, seed in any::<u64>()) {
        let fams = inputs(d, seed);
        let frame = DMatrix::from_fn(d, n, |i, j| if i == j { 1.0 } else { 0.0 });
        let subspace = Subspace::new(frame).unwrap();
        let x = sample_product(&fams, 150, seed ^ 1);
        let head = x.columns(0, n).into_owned();
        let f = smooth(&head);
        let ridge = fit_ridge(&SampleSet::new(x.clone(), f.clone()).unwrap(), &fams, &subspace, IndexScheme::TotalOrder(p)).unwrap();
        let direct = fit_least_squares(&fams[..n], &IndexSet::total_order(n, p).unwrap(), &SampleSet::new(head, f).unwrap()).unwrap();
        let test = sample_product(&fams, 500, seed ^ 2);
        let dev = max_rel_diff(&ridge.evaluate(&test).unwrap(), &direct.evaluate(&test.columns(0, n).into_owned()).unwrap());
        prop_assert!(dev < 1e-8, "max relative difference {}", dev);
    }
}
