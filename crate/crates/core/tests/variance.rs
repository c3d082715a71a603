use gorf::features::{Coupling, FeatureBuilder, Method};
use gorf::kernels::{kernel_profile_eval, KernelSpec};
use gorf::numerics::Rng;
use gorf::spectrum::Part;
use gorf::variance::{
    empirical_variance, g_k, h_term, pair_counts, paired_empirical_variance, radial_char_fn, tilde_k,
    var_grff_closed, variance_gap, variance_report, ReportConfig,
};
use gorf::Error;
use proptest::prelude::*;

fn dg(d: usize) -> FeatureBuilder {
    FeatureBuilder::new(&KernelSpec::delta_gaussian(vec![1.0, -1.0], vec![1.0, 10.0], d)).unwrap()
}

fn lag(d: usize, z: f64) -> (Vec<f64>, Vec<f64>) {
    let mut y = vec![0.0; d];
    y[0] = z;
    (vec![0.0; d], y)
}

// Values from tests/oracles/reference.py.
const CHAR_FN: &[(usize, f64, f64)] = &[
    (2, 0.3, 0.97762624653829608757),
    (2, 2.0, 0.22389077914123566805),
    (2, 11.0, -0.17119030040719608835),
    (2, 40.0, 0.0073668905842372895535),
    (5, 0.3, 0.9910288804064188014),
    (5, 2.0, 0.65309666246998742602),
    (5, 11.0, -0.0023636503781050235168),
    (5, 40.0, 0.0012854360449954604326),
    (16, 0.3, 0.99719101298962906661),
    (16, 2.0, 0.88171813733610180927),
    (16, 11.0, 0.00060833592427482416142),
    (16, 40.0, -4.2534226245963150051e-7),
    (64, 0.3, 0.99929711464883766622),
    (64, 2.0, 0.96921887581398861551),
    (64, 11.0, 0.38312986707997487887),
    (64, 40.0, -6.0151775842503621209e-8),
];

#[test]
fn radial_char_fn_reference_values() {
    for &(d, u, want) in CHAR_FN {
        let got = radial_char_fn(d, u);
        assert!((got - want).abs() < 1e-12 + 1e-10 * want.abs(), "d={d} u={u}: {got} vs {want}");
    }
    for d in [1, 2, 7, 100] {
        assert_eq!(radial_char_fn(d, 0.0), 1.0);
    }
    for u in [0.1, 1.0, 3.3, 20.0] {
        assert!((radial_char_fn(1, u) - f64::cos(u)).abs() < 1e-15);
        assert!((radial_char_fn(3, u) - u.sin() / u).abs() < 1e-12);
    }
    assert!(radial_char_fn(3, std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn radial_char_fn_is_a_direction_average() {
    let d = 6;
    let u = 2.5;
    let mut rng = Rng::new(3);
    let n = 200_000;
    let mut acc = 0.0;
    let mut acc2 = 0.0;
    for _ in 0..n {
        let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let c = (u * v[0] / v.iter().map(|x| x * x).sum::<f64>().sqrt()).cos();
        acc += c;
        acc2 += c * c;
    }
    let mean = acc / n as f64;
    let se = ((acc2 / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - radial_char_fn(d, u)).abs() < 4.0 * se);
}

#[test]
fn tilde_k_gaussian_closed_form() {
    for (d, sigma) in [(2usize, 1.0), (8, 0.5), (16, 2.0)] {
        let b = FeatureBuilder::new(&KernelSpec::gaussian(sigma, d)).unwrap();
        let (dens, _) = b.prepared.part(Part::Positive).unwrap();
        assert_eq!(tilde_k(dens, d, 0.0).unwrap(), 1.0);
        for z in [0.25, 0.7, 1.5, 3.0] {
            let want = (-z * z / (2.0 * sigma * sigma)).exp();
            assert!((tilde_k(dens, d, z).unwrap() - want).abs() < 1e-6, "d={d} σ={sigma} z={z}");
        }
    }
}

#[test]
fn tilde_k_reconstructs_delta_gaussian() {
    let b = dg(16);
    let (mp, mn) = b.prepared.masses();
    let (pos, _) = b.prepared.part(Part::Positive).unwrap();
    let (neg, _) = b.prepared.part(Part::Negative).unwrap();
    for z in [0.0, 0.3, 1.0, 2.0, 3.0] {
        let k = mp * tilde_k(pos, 16, z).unwrap() - mn * tilde_k(neg, 16, z).unwrap();
        assert!((k - kernel_profile_eval(&b.spec, z).unwrap()).abs() < 1e-4);
    }
}

#[test]
fn closed_variance_structure() {
    let b = dg(8);
    assert_eq!(var_grff_closed(&b.prepared, 0.0, 5).unwrap(), 0.0);
    for z in [0.3, 1.0, 2.5] {
        let v1 = var_grff_closed(&b.prepared, z, 1).unwrap();
        let v2 = var_grff_closed(&b.prepared, z, 2).unwrap();
        assert!((v2 / v1 - 0.5).abs() < 1e-14);
        assert!(v1 > 0.0);
    }
    assert!(var_grff_closed(&b.prepared, 1.0, 0).is_err());
}

#[test]
fn g_k_vanishes_at_trivial_points() {
    let b = FeatureBuilder::new(&KernelSpec::gaussian(1.0, 8)).unwrap();
    let (_, sampler) = b.prepared.part(Part::Positive).unwrap();
    let mut rng = Rng::new(1);
    assert_eq!(g_k(sampler, 8, 1, 1.0, &mut rng, 1000).value, 0.0);
    assert_eq!(g_k(sampler, 8, 8, 0.0, &mut rng, 1000).value, 0.0);
    let g = g_k(sampler, 8, 8, 1.0, &mut rng, 100_000);
    assert!(g.value < 0.0 && g.stderr > 0.0);
}

#[test]
fn g_k_matches_paired_orf_minus_rff() {
    let d = 8;
    let b = FeatureBuilder::new(&KernelSpec::gaussian(1.0, d)).unwrap();
    let (_, sampler) = b.prepared.part(Part::Positive).unwrap();
    let z = 1.0;
    let g = g_k(sampler, d, d, z, &mut Rng::new(5), 400_000);
    let (x, y) = lag(d, z);
    let p = paired_empirical_variance(
        &b,
        (Method::Rff, Coupling::Stacked),
        (Method::Orf, Coupling::Stacked),
        &x,
        &y,
        d,
        100_000,
        &mut Rng::new(6),
    )
    .unwrap();
    let se = g.stderr.hypot(p.difference.stderr);
    assert!((g.value - p.difference.value).abs() < 3.0 * se, "{g:?} vs {:?}", p.difference);
}

#[test]
fn h_term_properties() {
    let b = dg(16);
    let mut rng = Rng::new(2);
    assert_eq!(h_term(&b.prepared, Coupling::Stacked, 16, 0.0, &mut rng, 10_000).unwrap().value, 0.0);
    let pd = FeatureBuilder::new(&KernelSpec::gaussian(1.0, 4)).unwrap();
    assert!(matches!(
        h_term(&pd.prepared, Coupling::Stacked, 4, 1.0, &mut rng, 10_000),
        Err(Error::ZeroMass(_))
    ));
    for z in [0.5, 1.0, 2.0] {
        let h = h_term(&b.prepared, Coupling::Stacked, 16, z, &mut rng, 100_000).unwrap();
        let v = var_grff_closed(&b.prepared, z, 16).unwrap();
        assert!(h.value.is_finite());
        assert!(h.stderr < 0.05 * v, "z={z}: {h:?} vs {v}");
    }
    // independent blocks have no cross term
    let h = h_term(&b.prepared, Coupling::Block, 16, 1.0, &mut rng, 10_000).unwrap();
    assert_eq!(h.value, 0.0);
}

#[test]
fn gap_is_zero_at_origin() {
    for spec in [
        KernelSpec::delta_gaussian(vec![1.0, -1.0], vec![1.0, 10.0], 16),
        KernelSpec::polynomial(3.0, 1, 16),
        KernelSpec::gaussian(1.0, 4),
    ] {
        let b = FeatureBuilder::new(&spec).unwrap();
        let g = variance_gap(&b.prepared, 16, 0.0, &mut Rng::new(0), 1000).unwrap();
        assert_eq!(g.value, 0.0);
        assert_eq!(g.stderr, 0.0);
    }
}

#[test]
fn pair_counts_by_coupling() {
    let c = pair_counts(Coupling::Stacked, 4, 4, true);
    assert_eq!((c.pos_pos, c.neg_neg, c.pos_neg), (12, 12, 0));
    let c = pair_counts(Coupling::Stacked, 8, 4, true);
    assert_eq!((c.pos_pos, c.neg_neg, c.pos_neg), (12, 12, 16));
    let c = pair_counts(Coupling::Block, 8, 4, true);
    assert_eq!(c.pos_neg, 0);
    let c = pair_counts(Coupling::Truncated, 3, 4, true);
    assert_eq!((c.pos_pos, c.neg_neg, c.pos_neg), (12, 12, 16));
    let c = pair_counts(Coupling::Stacked, 4, 4, false);
    assert_eq!((c.pos_pos, c.neg_neg, c.pos_neg), (12, 0, 0));
}

#[test]
fn empirical_variance_basics() {
    let b = dg(4);
    let x = [0.1, 0.2, 0.3, 0.4];
    let same = empirical_variance(&b, Method::Gorf, Coupling::Stacked, &x, &x, 8, 200, &mut Rng::new(1)).unwrap();
    assert_eq!(same.variance, 0.0);
    let (mp, mn) = b.prepared.masses();
    assert!((same.mean - (mp - mn)).abs() < 1e-12);
    assert!(same.mean.abs() < 1e-6);
    let (x, y) = lag(4, 0.8);
    let exact = kernel_profile_eval(&b.spec, 0.8).unwrap();
    for method in [Method::Grff, Method::Gorf] {
        let e = empirical_variance(&b, method, Coupling::Stacked, &x, &y, 8, 20_000, &mut Rng::new(2)).unwrap();
        assert!((e.mean - exact).abs() < 4.0 * e.mean_stderr, "{method:?}: {e:?} vs {exact}");
        assert!(e.variance > 0.0 && e.variance_stderr > 0.0);
        assert_eq!(e.trials, 20_000);
    }
    assert!(empirical_variance(&b, Method::Grff, Coupling::Stacked, &x, &y, 8, 10, &mut Rng::new(2)).is_err());
}

#[test]
fn gorf_variance_below_grff_at_unit_lag() {
    let b = dg(16);
    let (x, y) = lag(16, 1.0);
    let p = paired_empirical_variance(
        &b,
        (Method::Grff, Coupling::Stacked),
        (Method::Gorf, Coupling::Stacked),
        &x,
        &y,
        16,
        20_000,
        &mut Rng::new(9),
    )
    .unwrap();
    assert!(p.difference.value + 3.0 * p.difference.stderr < 0.0, "{:?}", p.difference);
}

#[test]
fn report_is_deterministic_and_checks_grid() {
    let b = dg(4);
    let cfg = ReportConfig {
        s: 4,
        grid: vec![0.0, 0.5, 1.0],
        trials: 500,
        gap_trials: 2000,
        coupling: Coupling::Stacked,
        seed: 17,
    };
    let r1 = variance_report(&b, &cfg).unwrap();
    let r2 = variance_report(&b, &cfg).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(r1.rows[0].gap_closed, 0.0);
    assert_eq!(r1.rows[0].var_grff_closed, 0.0);
    let mut out = Vec::new();
    r1.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    for col in ["z_norm", "var_grff_closed", "var_grff_mc", "var_gorf_mc", "gap_closed", "gap_mc"] {
        assert!(header.split(',').any(|c| c == col), "{header}");
    }
    let bad = ReportConfig { grid: vec![0.5, 0.5], ..cfg };
    assert!(variance_report(&b, &bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn radial_char_fn_is_bounded(d in 1usize..80, u in 0.0f64..150.0) {
        let v = radial_char_fn(d, u);
        prop_assert!(v.is_finite() && v.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn closed_variance_is_nonnegative(z in 0.0f64..4.0, s in 1usize..64) {
        let b = dg(3);
        prop_assert!(var_grff_closed(&b.prepared, z, s).unwrap() >= 0.0);
    }
}
