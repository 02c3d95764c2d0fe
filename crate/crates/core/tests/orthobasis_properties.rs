use nalgebra::DMatrix;
use polysens::orthobasis::{design_matrix, gauss_rule, tensor_rule, IndexSet, MarginalFamily};
use polysens::sampling::sample_product;
use proptest::prelude::*;

fn family() -> impl Strategy<Value = MarginalFamily> {
    prop_oneof![
        (-5.0..5.0f64, 0.1..10.0f64).prop_map(|(a, w)| MarginalFamily::uniform(a, a + w).unwrap()),
        (-5.0..5.0f64, 0.1..4.0f64).prop_map(|(m, s)| MarginalFamily::gaussian(m, s).unwrap()),
    ]
}

fn binomial(n: u64, k: u64) -> u64 {
    (1..=k).fold(1u64, |acc, i| acc * (n - k + i) / i)
}

/// Raw moment of the standardized variable: uniform on [-1, 1] or N(0, 1).
fn standard_moment(uniform: bool, m: u32) -> f64 {
    if m % 2 == 1 {
        return 0.0;
    }
    if uniform {
        1.0 / (m as f64 + 1.0)
    } else {
        (1..m).step_by(2).map(|k| k as f64).product()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn univariate_families_are_orthonormal(fam in family(), k in 0usize..=10, l in 0usize..=10) {
        let rule = gauss_rule(&fam, 12).unwrap();
        let ip = rule.integrate(|x| fam.eval(k, x[0]).unwrap() * fam.eval(l, x[0]).unwrap());
        let expected = if k == l { 1.0 } else { 0.0 };
        prop_assert!((ip - expected).abs() < 1e-10, "<psi_{}, psi_{}> = {}", k, l, ip);
    }

    #[test]
    fn gauss_rules_integrate_monomials_exactly(uniform in any::<bool>(), n in 1usize..=10, m_frac in 0.0..1.0f64) {
        let fam = if uniform { MarginalFamily::legendre() } else { MarginalFamily::hermite() };
        let max_m = 2 * n as u32 - 1;
        let m = ((max_m as f64 + 1.0) * m_frac).floor().min(max_m as f64) as u32;
        let rule = gauss_rule(&fam, n).unwrap();
        prop_assert!((rule.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(rule.weights().iter().all(|&w| w > 0.0));
        let got = rule.integrate(|x| x[0].powi(m as i32));
        let expected = standard_moment(uniform, m);
        // odd moments cancel large terms, so scale by the absolute moment
        let scale = rule.integrate(|x| x[0].abs().powi(m as i32)).max(1.0);
        let tol = 1e-12 * scale;
        prop_assert!((got - expected).abs() <= tol, "n = {}, m = {}: {} vs {}", n, m, got, expected);
    }

    #[test]
    fn index_set_cardinalities(d in 1usize..=10, p in 0u32..=6) {
        let total = IndexSet::total_order(d, p).unwrap();
        prop_assert_eq!(total.len() as u64, binomial(d as u64 + p as u64, p as u64));
        prop_assert!(total.get(0).is_zero());
        let degrees: Vec<u32> = total.indices().iter().map(|m| m.total_degree()).collect();
        prop_assert!(degrees.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(total.is_downward_closed());
        let tensor_size = (p as u64 + 1).pow(d as u32);
        if tensor_size <= 200_000 {
            prop_assert_eq!(IndexSet::tensor_grid(d, p).unwrap().len() as u64, tensor_size);
        }
    }
}

#[test]
fn cardinalities_used_by_the_benchmarks() {
    for (d, p, r) in [(6, 3, 84), (8, 3, 165), (6, 4, 210), (7, 4, 330), (8, 4, 495), (7, 5, 792)] {
        assert_eq!(IndexSet::total_order(d, p).unwrap().len(), r, "d = {d}, p = {p}");
    }
}

#[test]
fn tensor_weights_sum_to_one() {
    let fams = [MarginalFamily::legendre(), MarginalFamily::gaussian(2.0, 0.3).unwrap(), MarginalFamily::uniform(0.0, 5.0).unwrap()];
    for level in 0..6 {
        let rule = tensor_rule(&fams, level).unwrap();
        assert!((rule.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

fn max_gram_deviation(fams: &[MarginalFamily], degree: u32, seed: u64) -> f64 {
    let set = IndexSet::total_order(fams.len(), degree).unwrap();
    let n = 100_000;
    let x = sample_product(fams, n, seed);
    let a = design_matrix(fams, &set, &x).unwrap();
    let gram = a.transpose() * &a / n as f64;
    (gram - DMatrix::identity(set.len(), set.len())).abs().max()
}

// Products of high-degree Hermite terms are heavy tailed, so the Gaussian case stays at degree 1.
#[test]
fn monte_carlo_gram_matrix_approaches_identity() {
    let bounded = [MarginalFamily::uniform(-2.0, 3.0).unwrap(), MarginalFamily::uniform(10.0, 11.0).unwrap(), MarginalFamily::legendre()];
    let dev = max_gram_deviation(&bounded, 3, 17);
    assert!(dev < 0.02, "uniform inputs: max deviation {dev}");
    let mixed = [MarginalFamily::uniform(-2.0, 3.0).unwrap(), MarginalFamily::gaussian(1.0, 2.0).unwrap(), MarginalFamily::hermite()];
    let dev = max_gram_deviation(&mixed, 1, 18);
    assert!(dev < 0.02, "mixed inputs: max deviation {dev}");
}
