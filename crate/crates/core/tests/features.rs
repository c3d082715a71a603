use gorf::bench::relative_error;
use gorf::features::{
    approx_gram, approx_kernel, build_gorf, build_grff, build_orf, build_rff, lift, Coupling, FeatureBuilder,
    FeatureModel, Method,
};
use gorf::kernels::{gram_matrix, kernel_eval, KernelSpec};
use gorf::numerics::{norm, DenseMatrix, Rng};
use gorf::spectrum::Part;
use gorf::Error;
use proptest::prelude::*;

fn dg(d: usize) -> KernelSpec {
    KernelSpec::delta_gaussian(vec![1.0, -1.0], vec![1.0, 10.0], d)
}

fn col_norms(w: &DenseMatrix) -> Vec<f64> {
    (0..w.cols()).map(|j| norm(w.col(j))).collect()
}

fn ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn random_points(rng: &mut Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.normal() * scale).collect()).collect()
}

#[test]
fn gaussian_grff_is_rff() {
    let spec = KernelSpec::gaussian(1.0, 5);
    let g = build_grff(&spec, 20, &mut Rng::new(3)).unwrap();
    let r = build_rff(&spec, 20, &mut Rng::new(3)).unwrap();
    assert!(g.w_neg.is_none());
    assert_eq!(g.mass_neg, 0.0);
    assert_eq!(g.w_pos, r.w_pos);
    let go = build_gorf(&spec, 20, &mut Rng::new(3)).unwrap();
    let o = build_orf(&spec, 20, &mut Rng::new(3)).unwrap();
    assert_eq!(go.w_pos, o.w_pos);
    let x = [0.1, 0.2, -0.3, 0.0, 0.5];
    let y = [0.0, -0.1, 0.3, 0.2, 0.1];
    assert_eq!(approx_kernel(&g, &x, &y).unwrap(), approx_kernel(&r, &x, &y).unwrap());
    assert_eq!(approx_kernel(&go, &x, &y).unwrap(), approx_kernel(&o, &x, &y).unwrap());
}

#[test]
fn builds_are_reproducible() {
    let b = FeatureBuilder::new(&dg(4)).unwrap();
    for method in [Method::Grff, Method::Gorf] {
        for coupling in [Coupling::Stacked, Coupling::Truncated, Coupling::Block] {
            let a = b.build(method, coupling, 7, &mut Rng::new(99)).unwrap();
            let c = b.build(method, coupling, 7, &mut Rng::new(99)).unwrap();
            assert_eq!(a, c);
        }
    }
}

#[test]
fn pd_builders_reject_indefinite_kernels() {
    let b = FeatureBuilder::new(&dg(4)).unwrap();
    assert!(matches!(b.build_rff(4, &mut Rng::new(1)), Err(Error::Indefinite(_))));
    assert!(matches!(b.build_orf(4, &mut Rng::new(1)), Err(Error::Indefinite(_))));
    assert!(b.build_grff(0, &mut Rng::new(1)).is_err());
}

#[test]
fn grff_norms_follow_spectrum() {
    let b = FeatureBuilder::new(&dg(4)).unwrap();
    let m = b.build_grff(10_000, &mut Rng::new(12)).unwrap();
    let (_, pos) = b.prepared.part(Part::Positive).unwrap();
    let (_, neg) = b.prepared.part(Part::Negative).unwrap();
    assert!(ks(col_norms(&m.w_pos), |r| pos.cdf(r)) < 0.02);
    assert!(ks(col_norms(m.w_neg.as_ref().unwrap()), |r| neg.cdf(r)) < 0.02);
}

#[test]
fn gorf_shares_norms_with_grff() {
    let b = FeatureBuilder::new(&dg(6)).unwrap();
    let g = b.build_grff(9, &mut Rng::new(4)).unwrap();
    for coupling in [Coupling::Stacked, Coupling::Truncated, Coupling::Block] {
        let o = b.build_gorf_with(9, coupling, &mut Rng::new(4)).unwrap();
        for (a, c) in col_norms(&g.w_pos).iter().zip(col_norms(&o.w_pos)) {
            assert!((a - c).abs() < 1e-12 * a.max(1.0));
        }
        for (a, c) in col_norms(g.w_neg.as_ref().unwrap()).iter().zip(col_norms(o.w_neg.as_ref().unwrap())) {
            assert!((a - c).abs() < 1e-12 * a.max(1.0));
        }
    }
}

fn unit_cols(w: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..w.cols())
        .map(|j| {
            let c = w.col(j);
            let n = norm(c);
            c.iter().map(|v| v / n).collect()
        })
        .collect()
}

fn mean_abs_cos(cols: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    let mut k = 0;
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            acc += cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum::<f64>().abs();
            k += 1;
        }
    }
    acc / k as f64
}

#[test]
fn coupled_directions_are_less_aligned() {
    let d = 8;
    let b = FeatureBuilder::new(&dg(d)).unwrap();
    let mut rng = Rng::new(21);
    let (mut iid, mut trunc, mut stacked) = (0.0, 0.0, 0.0);
    let reps = 150;
    for _ in 0..reps {
        let g = b.build_grff(d, &mut rng).unwrap();
        let t = b.build_gorf_with(d, Coupling::Truncated, &mut rng).unwrap();
        let s = b.build_gorf_with(d, Coupling::Stacked, &mut rng).unwrap();
        iid += mean_abs_cos(&unit_cols(&g.w_pos));
        trunc += mean_abs_cos(&unit_cols(&t.w_pos));
        stacked += mean_abs_cos(&unit_cols(&s.w_pos));
    }
    assert!(trunc < iid, "{trunc} vs {iid}");
    assert!(stacked / reps as f64 <= 1e-12, "stacked block is orthogonal");
}

#[test]
fn orf_columns_are_orthogonal() {
    let spec = KernelSpec::gaussian(1.0, 10);
    for s in [3, 10] {
        let m = build_orf(&spec, s, &mut Rng::new(s as u64)).unwrap();
        let g = m.w_pos.transpose().matmul(&m.w_pos);
        for i in 0..s {
            for j in 0..s {
                if i != j {
                    assert!(g.col(j)[i].abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn coupled_direction_marginal_is_uniform() {
    // First coordinate of a uniform direction: uniform on [−1, 1] for d = 3,
    // density 3(1 − t²)/4 for d = 5.
    for (d, cdf) in [
        (3usize, Box::new(|t: f64| (t + 1.0) / 2.0) as Box<dyn Fn(f64) -> f64>),
        (5, Box::new(|t: f64| 0.5 + 0.75 * t - 0.25 * t * t * t)),
    ] {
        let b = FeatureBuilder::new(&dg(d)).unwrap();
        for coupling in [Coupling::Stacked, Coupling::Truncated] {
            let mut rng = Rng::new(d as u64);
            let mut xs = Vec::new();
            for _ in 0..4000 {
                let m = b.build_gorf_with(d, coupling, &mut rng).unwrap();
                let c = m.w_pos.col(1);
                xs.push(c[0] / norm(c));
                let c = m.w_neg.as_ref().unwrap().col(0);
                xs.push(c[0] / norm(c));
            }
            let stat = ks(xs, &cdf);
            assert!(stat < 0.025, "d={d} {coupling:?}: KS {stat}");
        }
    }
}

#[test]
fn lift_structure() {
    let spec = dg(4);
    let m = build_gorf(&spec, 6, &mut Rng::new(2)).unwrap();
    let zero = lift(&m, &[0.0; 4]).unwrap();
    assert_eq!(zero.values.len(), 24);
    let (cp, cn) = ((m.mass_pos / 6.0).sqrt(), (m.mass_neg / 6.0).sqrt());
    for j in 0..6 {
        assert_eq!(zero.values[j], cp);
        assert_eq!(zero.values[6 + j], 0.0);
        assert_eq!(zero.values[12 + j], cn);
        assert_eq!(zero.values[18 + j], 0.0);
    }
    assert_eq!(zero.signature(11), 1.0);
    assert_eq!(zero.signature(12), -1.0);
    let x = [0.3, -0.2, 0.9, 0.1];
    let lx = lift(&m, &x).unwrap();
    assert_eq!(lx, lift(&m, &x).unwrap());
    assert!((lx.signed_dot(&lx) - (m.mass_pos - m.mass_neg)).abs() < 1e-12);
    assert!(matches!(lift(&m, &[0.0; 3]), Err(Error::DimensionMismatch { .. })));
    assert!(approx_kernel(&m, &x, &[0.0; 5]).is_err());
}

#[test]
fn diagonal_is_exact() {
    for spec in [dg(4), KernelSpec::polynomial(3.0, 1, 4), KernelSpec::gaussian(2.0, 4)] {
        let m = build_gorf(&spec, 5, &mut Rng::new(8)).unwrap();
        let x = [0.5, 0.5, 0.5, 0.5];
        let k = approx_kernel(&m, &x, &x).unwrap();
        assert!((k - (m.mass_pos - m.mass_neg)).abs() < 1e-12);
        assert!((k - spec.k_zero()).abs() < 1e-6);
    }
}

#[test]
fn gaussian_estimates_are_bounded() {
    let spec = KernelSpec::gaussian(0.5, 3);
    let mut rng = Rng::new(0);
    for p in random_points(&mut rng, 100, 3, 1.0).chunks(2) {
        let m = build_grff(&spec, 4, &mut rng).unwrap();
        let k = approx_kernel(&m, &p[0], &p[1]).unwrap();
        assert!(k.abs() <= m.mass_pos + 1e-12);
    }
}

#[test]
fn grff_small_scale_unbiasedness() {
    let spec = dg(4);
    let b = FeatureBuilder::new(&spec).unwrap();
    let x = [0.2, -0.1, 0.4, 0.0];
    let y = [-0.3, 0.2, 0.1, 0.5];
    let exact = kernel_eval(&spec, &x, &y).unwrap();
    let base = Rng::new(77);
    let vals: Vec<f64> = (0..10_000)
        .map(|t| approx_kernel(&b.build_grff(8, &mut base.split(t)).unwrap(), &x, &y).unwrap())
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let se = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact} (se {se})");
}

#[test]
fn approx_gram_matches_pairwise() {
    let spec = dg(3);
    let mut rng = Rng::new(5);
    let pts = random_points(&mut rng, 5, 3, 0.5);
    let x = DenseMatrix::from_rows(&pts);
    for method in [Method::Grff, Method::Gorf] {
        let m = FeatureBuilder::new(&spec).unwrap().build(method, Coupling::Stacked, 11, &mut rng).unwrap();
        let g = approx_gram(&m, &x).unwrap();
        for i in 0..5 {
            assert!((g.col(i)[i] - spec.k_zero()).abs() < 1e-6);
            for j in 0..5 {
                assert_eq!(g.col(j)[i], g.col(i)[j]);
                let want = approx_kernel(&m, &pts[i], &pts[j]).unwrap();
                assert!((g.col(j)[i] - want).abs() < 1e-12);
            }
        }
    }
    let m = build_grff(&spec, 4, &mut rng).unwrap();
    assert!(approx_gram(&m, &DenseMatrix::zeros(2, 4)).is_err());
}

#[test]
fn model_serialization_round_trip() {
    let m = build_gorf(&dg(5), 7, &mut Rng::new(1)).unwrap();
    let text = m.to_json();
    let back = FeatureModel::from_json(&text).unwrap();
    assert_eq!(back, m);
    assert!(FeatureModel::from_json("{}").is_err());
}

#[test]
fn gram_error_shrinks_with_features() {
    // O(1/√s): doubling s should cut the error by about 1/√2.
    let d = 8;
    let spec = dg(d);
    let b = FeatureBuilder::new(&spec).unwrap();
    let mut rng = Rng::new(31);
    let pts = random_points(&mut rng, 60, d, 0.35);
    let x = DenseMatrix::from_rows(&pts);
    let exact = gram_matrix(&spec, &x).unwrap();
    let mean_err = |s: usize| {
        let base = Rng::new(1000 + s as u64);
        (0..10)
            .map(|t| relative_error(&exact, &approx_gram(&b.build_grff(s, &mut base.split(t)).unwrap(), &x).unwrap()).unwrap())
            .sum::<f64>()
            / 10.0
    };
    let errs: Vec<f64> = [d, 2 * d, 4 * d, 8 * d, 16 * d].iter().map(|&s| mean_err(s)).collect();
    for w in errs.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.6..=0.85).contains(&ratio), "errors {errs:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_identity(seed in any::<u64>(), d in 1usize..10, s in 1usize..40, orth in any::<bool>()) {
        let spec = KernelSpec::delta_gaussian(vec![2.0, -1.0], vec![1.0, 5.0], d);
        let b = FeatureBuilder::new(&spec).unwrap();
        let mut rng = Rng::new(seed);
        let m = if orth { b.build_gorf(s, &mut rng).unwrap() } else { b.build_grff(s, &mut rng).unwrap() };
        for _ in 0..16 {
            let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let y: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let via_lift = lift(&m, &x).unwrap().signed_dot(&lift(&m, &y).unwrap());
            prop_assert!((approx_kernel(&m, &x, &y).unwrap() - via_lift).abs() < 1e-12);
        }
    }

    #[test]
    fn gorf_columns_keep_shape(seed in any::<u64>(), d in 1usize..12, s in 1usize..30) {
        let b = FeatureBuilder::new(&KernelSpec::delta_gaussian(vec![1.0, -1.0], vec![1.0, 3.0], d)).unwrap();
        for coupling in [Coupling::Stacked, Coupling::Truncated, Coupling::Block] {
            let m = b.build_gorf_with(s, coupling, &mut Rng::new(seed)).unwrap();
            prop_assert_eq!((m.w_pos.rows(), m.w_pos.cols()), (d, s));
            let wn = m.w_neg.as_ref().unwrap();
            prop_assert_eq!((wn.rows(), wn.cols()), (d, s));
            prop_assert!(m.w_pos.as_slice().iter().chain(wn.as_slice()).all(|v| v.is_finite()));
        }
    }
}
