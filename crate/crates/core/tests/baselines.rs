use gorf::baselines::{
    build_maclaurin, build_tensor_sketch, degree_probabilities, maclaurin_coefficients, Baseline, MAX_DEGREE,
};
use gorf::kernels::{kernel_eval, polynomial_dot_form, KernelSpec};
use gorf::numerics::{DenseMatrix, Rng};
use gorf::Error;
use proptest::prelude::*;

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn pair(d: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = Rng::new(seed);
    let x = unit((0..d).map(|_| rng.normal()).collect());
    let y = unit((0..d).map(|_| rng.normal() + 0.8 * x[0]).collect());
    (x, y)
}

/// Mean and standard error of `f(t)` over `n` trials.
fn mc(n: u64, f: impl Fn(u64) -> f64) -> (f64, f64) {
    let v: Vec<f64> = (0..n).map(f).collect();
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

#[test]
fn maclaurin_is_unbiased() {
    for m in [1u32, 2] {
        let d = 6;
        let spec = KernelSpec::polynomial(3.0, m, d);
        let (x, y) = pair(d, m as u64);
        let exact = kernel_eval(&spec, &x, &y).unwrap();
        let base = Rng::new(40 + m as u64);
        let (mean, se) = mc(100_000, |t| {
            let model = Baseline::Maclaurin(build_maclaurin(&spec, 1, &mut base.split(t)).unwrap());
            model.approx_kernel(&x, &y).unwrap()
        });
        assert!((mean - exact).abs() < 4.0 * se, "m={m}: {mean} vs {exact} (se {se})");
    }
}

#[test]
fn maclaurin_degree_histogram() {
    let spec = KernelSpec::polynomial(3.0, 1, 3);
    let model = build_maclaurin(&spec, 100_000, &mut Rng::new(6)).unwrap();
    let mut counts = vec![0usize; MAX_DEGREE + 1];
    for &n in &model.degrees {
        counts[n] += 1;
    }
    for (n, p) in degree_probabilities().iter().enumerate() {
        let freq = counts[n] as f64 / 1e5;
        assert!((freq - p).abs() < 0.01, "n={n}: {freq} vs {p}");
        assert!((p - 2f64.powi(-(n as i32 + 1))).abs() < 1e-9);
    }
}

#[test]
fn maclaurin_zero_coefficients_give_zero_features() {
    let spec = KernelSpec::polynomial(3.0, 1, 4);
    let model = build_maclaurin(&spec, 2000, &mut Rng::new(2)).unwrap();
    let (x, _) = pair(4, 9);
    let f = model.features(&x).unwrap();
    for (j, &n) in model.degrees.iter().enumerate() {
        if n > 1 {
            assert_eq!(f[j], 0.0);
        }
    }
    assert!(model.degrees.iter().any(|&n| n > 1));
}

#[test]
fn maclaurin_coefficients_expand_the_kernel() {
    let (alpha, q) = polynomial_dot_form(3.0, 3);
    let a = maclaurin_coefficients(alpha, q, 3).unwrap();
    for t in [-1.0, -0.3, 0.0, 0.5, 1.0] {
        let series: f64 = a.iter().enumerate().map(|(n, c)| c * f64::powi(t, n as i32)).sum();
        assert!((series - alpha * (q + t).powi(3)).abs() < 1e-12);
    }
    assert!(matches!(maclaurin_coefficients(1.0, -0.5, 3), Err(Error::NegativeCoefficient(_))));
}

#[test]
fn sketch_m1_is_unbiased() {
    let d = 5;
    let spec = KernelSpec::polynomial(3.0, 1, d);
    let (x, y) = pair(d, 3);
    let (alpha, q) = polynomial_dot_form(3.0, 1);
    let dot: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let base = Rng::new(12);
    let (mean, se) = mc(10_000, |t| {
        Baseline::Sketch(build_tensor_sketch(&spec, 8, &mut base.split(t)).unwrap()).approx_kernel(&x, &y).unwrap()
    });
    let want = alpha * (q + dot);
    assert!((mean - want).abs() < 4.0 * se, "{mean} vs {want} (se {se})");
}

#[test]
fn sketch_m2_is_unbiased_for_any_length() {
    let d = 4;
    let spec = KernelSpec::polynomial(3.0, 2, d);
    let (x, y) = pair(d, 4);
    let exact = kernel_eval(&spec, &x, &y).unwrap();
    for s in [8usize, 12] {
        let base = Rng::new(s as u64);
        let (mean, se) = mc(20_000, |t| {
            Baseline::Sketch(build_tensor_sketch(&spec, s, &mut base.split(t)).unwrap())
                .approx_kernel(&x, &y)
                .unwrap()
        });
        assert!((mean - exact).abs() < 4.0 * se, "s={s}: {mean} vs {exact} (se {se})");
    }
}

#[test]
fn sketch_self_pair_norm() {
    let d = 4;
    let spec = KernelSpec::polynomial(3.0, 2, d);
    let (alpha, q) = polynomial_dot_form(3.0, 2);
    let x = vec![0.3, -0.4, 0.5, 0.1];
    let nx: f64 = x.iter().map(|v| v * v).sum();
    let base = Rng::new(8);
    let (mean, se) = mc(20_000, |t| {
        let s = build_tensor_sketch(&spec, 16, &mut base.split(t)).unwrap().sketch(&x).unwrap();
        s.iter().map(|v| v * v).sum()
    });
    let want = alpha * (q + nx).powi(2);
    assert!((mean - want).abs() < 4.0 * se, "{mean} vs {want} (se {se})");
}

#[test]
fn sketch_of_zero_uses_only_the_offset() {
    let spec = KernelSpec::polynomial(3.0, 1, 3);
    let model = build_tensor_sketch(&spec, 8, &mut Rng::new(1)).unwrap();
    let (alpha, q) = polynomial_dot_form(3.0, 1);
    let s = model.sketch(&[0.0; 3]).unwrap();
    let nonzero: Vec<f64> = s.iter().cloned().filter(|v| *v != 0.0).collect();
    assert_eq!(nonzero.len(), 1);
    assert!((nonzero[0].abs() - (alpha * q).sqrt()).abs() < 1e-12);
}

#[test]
fn baselines_need_a_dot_product_kernel() {
    let spec = KernelSpec::delta_gaussian(vec![1.0, -1.0], vec![1.0, 10.0], 3);
    assert!(matches!(build_maclaurin(&spec, 4, &mut Rng::new(0)), Err(Error::Incompatible(_))));
    assert!(matches!(build_tensor_sketch(&spec, 4, &mut Rng::new(0)), Err(Error::Incompatible(_))));
    let poly = KernelSpec::polynomial(3.0, 1, 3);
    assert!(build_maclaurin(&poly, 0, &mut Rng::new(0)).is_err());
    let m = build_tensor_sketch(&poly, 4, &mut Rng::new(0)).unwrap();
    assert!(m.sketch(&[0.0; 2]).is_err());
}

#[test]
fn baseline_gram_and_serialization() {
    let d = 4;
    let spec = KernelSpec::polynomial(3.0, 2, d);
    let rows: Vec<Vec<f64>> = (0..4).map(|i| pair(d, 100 + i).0).collect();
    let x = DenseMatrix::from_rows(&rows);
    for b in [
        Baseline::Maclaurin(build_maclaurin(&spec, 32, &mut Rng::new(1)).unwrap()),
        Baseline::Sketch(build_tensor_sketch(&spec, 32, &mut Rng::new(1)).unwrap()),
    ] {
        let g = b.approx_gram(&x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((g.col(j)[i] - b.approx_kernel(&rows[i], &rows[j]).unwrap()).abs() < 1e-12);
            }
        }
        let text = serde_json::to_string(&b).unwrap();
        assert_eq!(serde_json::from_str::<Baseline>(&text).unwrap(), b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sketches_are_deterministic(seed in any::<u64>(), s in 1usize..40, m in 1u32..4) {
        let spec = KernelSpec::polynomial(3.0, m, 3);
        let a = build_tensor_sketch(&spec, s, &mut Rng::new(seed)).unwrap();
        let b = build_tensor_sketch(&spec, s, &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(a.sketch(&[0.6, 0.0, 0.8]).unwrap(), b.sketch(&[0.6, 0.0, 0.8]).unwrap());
    }
}
