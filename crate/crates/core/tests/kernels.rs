use gorf::kernels::{gram_matrix, kernel_eval, kernel_profile_eval, polynomial_dot_form, spectral_profile, KernelSpec};
use gorf::numerics::{DenseMatrix, Rng};
use gorf::Error;
use proptest::prelude::*;

fn sphere_point(rng: &mut Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

#[test]
fn polynomial_values() {
    let spec = KernelSpec::polynomial(3.0, 1, 3);
    let x = [1.0, 0.0, 0.0];
    let y = [-1.0, 0.0, 0.0];
    assert_eq!(kernel_eval(&spec, &x, &x).unwrap(), 1.0);
    assert!((kernel_eval(&spec, &x, &y).unwrap() - 5.0 / 9.0).abs() < 1e-15);
    assert!((kernel_profile_eval(&spec, 1.0).unwrap() - 8.0 / 9.0).abs() < 1e-15);
    assert!(matches!(kernel_profile_eval(&spec, 2.5), Err(Error::Domain(_))));
    assert!(matches!(kernel_eval(&spec, &[0.5, 0.0, 0.0], &x), Err(Error::OffSphere(_))));
}

#[test]
fn gaussian_and_delta_gaussian_values() {
    assert_eq!(kernel_profile_eval(&KernelSpec::gaussian(1.0, 2), 0.0).unwrap(), 1.0);
    let dg = KernelSpec::delta_gaussian(vec![1.0, -1.0], vec![1.0, 10.0], 2);
    assert_eq!(kernel_eval(&dg, &[0.3, 0.1], &[0.3, 0.1]).unwrap(), 0.0);
    let want = (-0.5f64).exp() - (-1.0f64 / 200.0).exp();
    assert!((kernel_profile_eval(&dg, 1.0).unwrap() - want).abs() < 1e-15);
    assert!((want + 0.3885).abs() < 1e-4);
    assert!(kernel_profile_eval(&dg, -1.0).is_err());
}

#[test]
fn dimension_checks() {
    let spec = KernelSpec::gaussian(1.0, 3);
    assert!(matches!(
        kernel_eval(&spec, &[0.0; 2], &[0.0; 3]),
        Err(Error::DimensionMismatch { expected: 3, got: 2 })
    ));
    assert!(gram_matrix(&spec, &DenseMatrix::zeros(4, 2)).is_err());
}

#[test]
fn parameter_validation() {
    assert!(KernelSpec::parse("poly:a=2,m=1", Some(3)).is_err());
    assert!(KernelSpec::parse("poly:a=3,m=0", Some(3)).is_err());
    assert!(KernelSpec::parse("gaussian:sigma=-1", Some(3)).is_err());
    assert!(KernelSpec::parse("delta-gaussian:a=1/0,sigma=1/2", Some(3)).is_err());
    assert!(KernelSpec::parse("delta-gaussian:a=1/-1,sigma=1/1", Some(3)).is_err());
    assert!(KernelSpec::parse("delta-gaussian:a=1/-1,sigma=1/-2", Some(3)).is_err());
    assert!(KernelSpec::parse("gaussian:sigma=1", None).is_err());
    assert_eq!(KernelSpec::parse("gaussian:sigma=2,dim=5", Some(3)).unwrap().dim, 5);
}

#[test]
fn config_text_round_trip() {
    for spec in [
        KernelSpec::gaussian(0.7, 4),
        KernelSpec::polynomial(3.0, 2, 16),
        KernelSpec::delta_gaussian(vec![1.0, -1.0], vec![1.0, 10.0], 16),
    ] {
        let text = spec.to_toml();
        assert_eq!(KernelSpec::parse(&text, None).unwrap(), spec, "{text}");
    }
}

#[test]
fn gram_matrix_matches_pairwise() {
    let mut rng = Rng::new(4);
    let rows: Vec<Vec<f64>> = (0..3).map(|_| sphere_point(&mut rng, 5)).collect();
    let x = DenseMatrix::from_rows(&rows);
    for spec in [
        KernelSpec::gaussian(1.0, 5),
        KernelSpec::polynomial(3.0, 2, 5),
        KernelSpec::delta_gaussian(vec![2.0, -1.0], vec![1.0, 10.0], 5),
    ] {
        let k = gram_matrix(&spec, &x).unwrap();
        for i in 0..3 {
            assert_eq!(k.col(i)[i], spec.k_zero());
            for j in 0..3 {
                assert_eq!(k.col(j)[i], k.col(i)[j]);
                let want = kernel_eval(&spec, &rows[i], &rows[j]).unwrap();
                assert!((k.col(j)[i] - want).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn gaussian_spectrum_is_nonnegative() {
    let s = spectral_profile(&KernelSpec::gaussian(0.5, 16)).unwrap();
    for i in 0..5000 {
        assert!(s.eval(i as f64 * 0.01) >= 0.0);
    }
}

#[test]
fn delta_gaussian_profile_sign_at_origin() {
    // 1·1 − 1·10² < 0 in d = 2
    let s = spectral_profile(&KernelSpec::delta_gaussian(vec![1.0, -1.0], vec![1.0, 10.0], 2)).unwrap();
    assert!(s.eval(0.0) < 0.0);
    let s = spectral_profile(&KernelSpec::delta_gaussian(vec![1.0, -1.0], vec![10.0, 1.0], 2)).unwrap();
    assert!(s.eval(0.0) > 0.0);
}

#[test]
fn polynomial_forms_agree_on_many_pairs() {
    let mut rng = Rng::new(8);
    for (a, m) in [(3.0, 1u32), (3.0, 3), (2.5, 2), (6.0, 5)] {
        let (alpha, q) = polynomial_dot_form(a, m);
        for _ in 0..1000 {
            let x = sphere_point(&mut rng, 7);
            let y = sphere_point(&mut rng, 7);
            let z2: f64 = x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum();
            let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
            let f1 = (1.0 - z2 / (a * a)).powi(m as i32);
            let f2 = alpha * (q + dot).powi(m as i32);
            assert!((f1 - f2).abs() < 1e-10);
        }
    }
}

proptest! {
    #[test]
    fn kernels_are_symmetric(seed in any::<u64>(), d in 1usize..12) {
        let mut rng = Rng::new(seed);
        let x = sphere_point(&mut rng, d);
        let y = sphere_point(&mut rng, d);
        for spec in [
            KernelSpec::gaussian(1.3, d),
            KernelSpec::polynomial(3.0, 2, d),
            KernelSpec::delta_gaussian(vec![1.0, -1.0], vec![1.0, 10.0], d),
        ] {
            let a = kernel_eval(&spec, &x, &y).unwrap();
            let b = kernel_eval(&spec, &y, &x).unwrap();
            prop_assert_eq!(a, b);
            prop_assert_eq!(kernel_eval(&spec, &x, &x).unwrap(), spec.k_zero());
        }
    }

    #[test]
    fn profile_agrees_with_pairwise(seed in any::<u64>(), d in 1usize..12, scale in 0.0f64..3.0) {
        let mut rng = Rng::new(seed);
        let x: Vec<f64> = (0..d).map(|_| rng.normal() * scale).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.normal() * scale).collect();
        let spec = KernelSpec::delta_gaussian(vec![2.0, -0.5, 1.0], vec![0.5, 2.0, 7.0], d);
        let z: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!((kernel_eval(&spec, &x, &y).unwrap() - kernel_profile_eval(&spec, z).unwrap()).abs() < 1e-14);
    }
}
