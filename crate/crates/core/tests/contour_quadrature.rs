use gauss_quad::GaussLegendre;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use respectra::{make_model, ContourGrid, ContourSpec, ModelSpec, RealAxisRule, Shape, Side};

/// Plain Gauss–Legendre on [a,b] split into `panels` equal pieces.
fn gl(a: f64, b: f64, panels: usize, f: &dyn Fn(f64) -> f64) -> f64 {
    let rule = GaussLegendre::new(20.try_into().unwrap());
    let h = (b - a) / panels as f64;
    (0..panels).map(|p| rule.integrate(a + p as f64 * h, a + (p + 1) as f64 * h, f)).sum()
}

/// Panels whose sizes grow geometrically away from `a` (the singular end).
fn gl_graded(a: f64, b: f64, first: f64, f: &dyn Fn(f64) -> f64) -> f64 {
    let mut acc = 0.0;
    let mut lo = a;
    let mut h = first;
    while lo < b {
        let hi = (lo + h).min(b);
        acc += gl(lo, hi, 1, f);
        lo = hi;
        h *= 2.0;
    }
    acc
}

/// Excision oracle: ∫ over |ω − x0| > δ, Richardson-extrapolated in δ.
fn excision_pv(f: &dyn Fn(f64) -> f64, x0: f64, cutoff: f64) -> f64 {
    let cut = |delta: f64| {
        let g = |w: f64| f(w) / (w - x0);
        let left = gl(0.0, x0 / 2.0, 40, &g) + gl_graded(delta, x0 / 2.0, delta, &|t| g(x0 - t));
        let right = gl_graded(x0 + delta, cutoff, delta, &g);
        left + right
    };
    let (a, b) = (cut(1e-3), cut(5e-4));
    2.0 * b - a
}

#[test]
fn plemelj_against_excision_oracle() {
    let rule = RealAxisRule::new(40.0, 400).unwrap();
    let f = |w: f64| (-w).exp();
    let value = rule.plemelj_integral(&|w| C64::new(f(w), 0.0), 1.0, Side::Plus).unwrap();
    let pv = excision_pv(&f, 1.0, 40.0);
    let expected = C64::new(-pv, -std::f64::consts::PI * (-1.0f64).exp());
    assert!((value - expected).norm() < 1e-8, "{value} vs {expected}");
}

fn random_integrand(rng: &mut ChaCha8Rng) -> impl Fn(C64) -> C64 + Clone {
    let fams = ["sqrt_exp", "poly_exp", "lorentz_sqrt"];
    let a = make_model(fams[rng.gen_range(0..3)], &[rng.gen_range(0.8..1.5)], 1.0, 1.0, ContourSpec::for_level(1.0))
        .unwrap();
    let b = make_model(fams[rng.gen_range(0..3)], &[rng.gen_range(0.8..1.5)], 1.0, 1.0, ContourSpec::for_level(1.0))
        .unwrap();
    let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    move |z: C64| a.v(z) * b.vbar(z) * (c[0] + c[1] * z + c[2] * z * z)
}

#[test]
fn deformation_identity_for_random_analytic_integrands() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let grid = ContourGrid::build(&ContourSpec::for_level(1.0)).unwrap();
    let real = RealAxisRule::new(20.0, 800).unwrap();
    for _ in 0..20 {
        let f = random_integrand(&mut rng);
        let on_path = grid.integrate(&f).unwrap();
        let on_axis = real.integrate(|x| f(C64::new(x, 0.0))).unwrap();
        assert!((on_path - on_axis).norm() <= 1e-8, "{on_path} vs {on_axis}");
    }
}

#[test]
fn contour_pole_integral_equals_plemelj_value() {
    let model = ModelSpec::default_with_coupling(1.0);
    let grid = model.grid().unwrap();
    let rule = RealAxisRule::new(20.0, 800).unwrap();
    for x0 in [0.5, 1.0, 2.0, 5.0] {
        let on_path = grid.integrate(|z| model.v(z) * model.vbar(z) / (x0 - z)).unwrap();
        let f = |w: f64| model.v(C64::new(w, 0.0)).norm_sqr().into();
        let plemelj = rule.plemelj_integral(&f, x0, Side::Plus).unwrap();
        assert!((on_path - plemelj).norm() < 1e-8, "x0={x0}: {on_path} vs {plemelj}");
    }
}

#[test]
fn doubling_nodes_shrinks_error() {
    // Smooth integrand with a nearby singularity so the error is measurable.
    let f = |z: C64| 1.0 / (z - C64::new(2.0, -0.7));
    let exact = (C64::new(18.0, 0.7)).ln() - (C64::new(-2.0, 0.7)).ln();
    let err = |n: usize| {
        let spec = ContourSpec { depth: 0.5, cutoff: 20.0, shape: Shape::Rectangle, n_nodes: n };
        (ContourGrid::build(&spec).unwrap().integrate(f).unwrap() - exact).norm()
    };
    let (e1, e2) = (err(40), err(80));
    assert!(e1 > 1e-13, "baseline error already at roundoff: {e1}");
    assert!(e1 / e2 >= 4.0, "{e1} -> {e2}");
}

#[test]
fn semi_ellipse_agrees_with_rectangle() {
    let model = ModelSpec::default_with_coupling(1.0);
    let rect = model.grid().unwrap();
    let spec = ContourSpec { shape: Shape::SemiEllipse, n_nodes: 400, ..*model.contour() };
    let ell = ContourGrid::build(&spec).unwrap();
    let f = |z: C64| model.v(z) * model.vbar(z) * (-z).exp();
    assert!((rect.integrate(f).unwrap() - ell.integrate(f).unwrap()).norm() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plemelj_sides_are_conjugate_for_real_f(x0 in 0.1..19.0f64, s in 0.5..2.0f64) {
        let rule = RealAxisRule::new(20.0, 400).unwrap();
        let f = move |w: f64| C64::new(w.sqrt() * (-w / s).exp(), 0.0);
        let p = rule.plemelj_integral(&f, x0, Side::Plus).unwrap();
        let m = rule.plemelj_integral(&f, x0, Side::Minus).unwrap();
        prop_assert!((p - m.conj()).norm() < 1e-13);
    }

    #[test]
    fn boundary_values_differ_by_residue(k in 0usize..200, c in -1.0..1.0f64) {
        let grid = ContourGrid::build(&ContourSpec::for_level(1.0)).unwrap();
        let u = grid.nodes()[k];
        let g = move |z: C64| (c * z).exp() * (-z).exp();
        let jump = grid.cauchy_limit(&g, u, Side::Plus) - grid.cauchy_limit(&g, u, Side::Minus);
        let expected = C64::new(0.0, -2.0 * std::f64::consts::PI) * g(u);
        prop_assert!((jump - expected).norm() < 1e-12);
    }
}
