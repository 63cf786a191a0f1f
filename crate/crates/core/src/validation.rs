//! Named invariant checks over one model and one barrier configuration.
//! Every check is attainable at the stated tolerance on the default inputs;
//! the stricter targets that are not live in the acceptance harness.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::barrier::{bound_scattering_overlap, even_scattering_state, mapped_model, resonance_width, solve_bound_state, BarrierSpec};
use crate::contour::RealAxisRule;
use crate::dynamics::{default_time_grid, exponential_approx, oracle_survival_curve, survival_curve, DecayCurve};
use crate::error::{Error, Result};
use crate::friedrichs::{exact_system, find_pole};
use crate::liouville::{apply_l, check_physicality, BlockGrid, BlockObservable, GeneralizedState, LiouvilleSystem};
use crate::model::ModelSpec;
use crate::oracle::discretize;
use crate::perturbation::{assemble_system, perturb_discrete};
use crate::vector::{AnalyticVector, Continuation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Not applicable to this configuration (for example a kernel in Liouville mode).
    Skip,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub status: Status,
    pub detail: String,
}

impl Check {
    fn measured(name: &'static str, value: f64, tolerance: f64) -> Self {
        let status = if value.is_finite() && value <= tolerance { Status::Pass } else { Status::Fail };
        Self { name, value, tolerance, status, detail: String::new() }
    }

    fn from_result(name: &'static str, tolerance: f64, r: Result<f64>) -> Self {
        match r {
            Ok(v) => Self::measured(name, v, tolerance),
            Err(Error::Unsupported(msg)) => {
                Self { name, value: f64::NAN, tolerance, status: Status::Skip, detail: msg }
            }
            Err(e) => Self { name, value: f64::NAN, tolerance, status: Status::Fail, detail: e.to_string() },
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Root-finding tolerance for the exact pole.
    pub pole_tolerance: f64,
    /// Levels of the dense oracle.
    pub oracle_levels: usize,
    /// Randomized analytic test pairs for completeness.
    pub random_pairs: usize,
    pub liouville_nodes: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { seed: 2024, pole_tolerance: 1e-13, oracle_levels: 1000, random_pairs: 10, liouville_nodes: 100 }
    }
}

/// d + √z·(a + bz)·e^{−sz} with random complex a, b, d and s ∈ [0.5, 1.5].
pub fn random_analytic_vector(rng: &mut ChaCha8Rng) -> AnalyticVector {
    let mut c = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let (d, a, b) = (c(), c(), c());
    let s = rng.gen_range(0.5..1.5);
    AnalyticVector::new(d, Arc::new(move |z: C64| z.sqrt() * (a + b * z) * (-s * z).exp()), Continuation::Both)
}

/// ⟨Ψ|Φ⟩ and ⟨Ψ|H|Φ⟩ by quadrature on the real axis.
pub fn direct_elements(model: &ModelSpec, psi: &AnalyticVector, phi: &AnalyticVector) -> Result<(C64, C64)> {
    let rule = RealAxisRule::new(model.contour().cutoff, 1600)?;
    let pd = psi.d_component.conj();
    let overlap = pd * phi.d_component + rule.integrate(|w| psi.value(w).conj() * phi.value(w))?;
    let om = model.omega_level();
    let h = om * pd * phi.d_component
        + rule.integrate(|w| {
            let x = C64::new(w, 0.0);
            let (p, f) = (psi.value(w).conj(), phi.value(w));
            w * p * f + p * model.v(x) * phi.d_component + pd * model.vbar(x) * f
        })?;
    Ok((overlap, h))
}

/// Largest deviation between two curves on the same time grid.
pub fn max_gap(a: &DecayCurve, b: &DecayCurve) -> f64 {
    a.survival.iter().zip(&b.survival).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst completeness and Hamiltonian-reconstruction residuals of a
/// biorthogonal system over seeded random pairs.
pub fn completeness_residuals(
    model: &ModelSpec,
    system: &crate::system::BiorthogonalSystem,
    seed: u64,
    pairs: usize,
) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut id, mut h) = (0.0f64, 0.0f64);
    for _ in 0..pairs {
        let (psi, phi) = (random_analytic_vector(&mut rng), random_analytic_vector(&mut rng));
        let (bra, ket) = (psi.as_bra()?, phi.as_ket()?);
        let (ov, hd) = direct_elements(model, &psi, &phi)?;
        id = id.max((system.reconstruct_identity(&bra, &ket)? - ov).norm());
        h = h.max((system.reconstruct_hamiltonian(&bra, &ket)? - hd).norm());
    }
    Ok((id, h))
}

fn liouville_checks(model: &ModelSpec, opts: &SuiteOptions, out: &mut Vec<Check>) {
    let sys = LiouvilleSystem::build(model, opts.liouville_nodes);
    let sys = match sys {
        Ok(s) => s,
        Err(e) => {
            for name in ["liouville_decay_eigenvalue", "liouville_trace_conservation", "liouville_physicality", "liouville_reality"] {
                out.push(Check::from_result(name, 0.0, Err(e.clone())));
            }
            return;
        }
    };
    let g = sys.grid();
    let want = C64::new(0.0, model.golden_rule_width());
    out.push(Check::measured("liouville_decay_eigenvalue", (sys.zero_sector().lambda_decay - want).norm(), 1e-10));

    let trace = (|| -> Result<f64> {
        let rho = GeneralizedState::level_state(g);
        let span = 5.0 / model.golden_rule_width().max(1e-300);
        let mut worst: f64 = 0.0;
        for k in 0..=10 {
            let t = if span.is_finite() { span * k as f64 / 10.0 } else { k as f64 };
            worst = worst.max((sys.evolve_state(&rho, t)?.total - 1.0).norm());
        }
        Ok(worst)
    })();
    out.push(Check::from_result("liouville_trace_conservation", 1e-8, trace));

    let phys = (|| -> Result<f64> {
        let n = g.n_upper();
        let mut worst = check_physicality(g, &sys.decay().left, sys.decay().lambda())?.trace.norm();
        for k in (0..n).step_by((n / 10).max(1)) {
            for p in [sys.branch_upper_level(k)?, sys.branch_level_lower(k)?, sys.branch_upper_lower(k, n - 1 - k)?] {
                worst = worst.max(check_physicality(g, &p.left, p.lambda())?.trace.norm());
            }
        }
        let inv = check_physicality(g, &sys.invariant_left(model.omega_level()), C64::new(0.0, 0.0))?;
        Ok(worst.max((inv.trace - 1.0).norm()))
    })();
    out.push(Check::from_result("liouville_physicality", 1e-8, phys));

    let reality = (|| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
        let mut c = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let mut b = BlockObservable::zero(g);
        b.level = c();
        b.diagonal = Some(Arc::new(|z: C64| z * (-z).exp()));
        b.column.iter_mut().for_each(|x| *x = c() * 0.1);
        b.row.iter_mut().for_each(|x| *x = c() * 0.1);
        b.kernel.iter_mut().for_each(|x| *x = c() * 0.01);
        let bd = b.adjoint(g)?;
        let st = sys.evolve_state(&GeneralizedState::level_state(g), 10.0)?.state;
        let (l, r) = (st.pair(&bd, g)?, st.pair(&b, g)?.conj());
        Ok((l - r).norm() / (1.0 + l.norm()))
    })();
    out.push(Check::from_result("liouville_reality", 1e-12, reality));
}

fn commutator_check(model: &ModelSpec, opts: &SuiteOptions) -> Result<f64> {
    let n = 120;
    let x = model.contour().cutoff;
    let grid = BlockGrid::real_axis(n, x);
    let dense = discretize(model, n, x)?;
    let h = dense.spacing();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut c = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let mut obs = BlockObservable::zero(&grid);
    obs.level = c();
    obs.column.iter_mut().for_each(|v| *v = c());
    obs.row.iter_mut().for_each(|v| *v = c());
    obs.kernel.iter_mut().for_each(|v| *v = c());
    let d = n + 1;
    let mut mat = vec![C64::new(0.0, 0.0); d * d];
    mat[0] = obs.level;
    for i in 0..n {
        mat[(i + 1) * d] = h.sqrt() * obs.column[i];
        mat[i + 1] = h.sqrt() * obs.row[i];
        for j in 0..n {
            mat[(i + 1) * d + j + 1] = h * obs.kernel[i * n + j];
        }
    }
    let k = dense.commutator_apply(&mat)?;
    let out = apply_l(model, &grid, &obs)?;
    let mut worst = (k[0] - out.level).norm();
    for i in 0..n {
        worst = worst.max((k[(i + 1) * d] / h.sqrt() - out.column[i]).norm());
        worst = worst.max((k[i + 1] / h.sqrt() - out.row[i]).norm());
        for j in 0..n {
            worst = worst.max((k[(i + 1) * d + j + 1] / h - out.kernel[i * n + j]).norm());
        }
    }
    Ok(worst)
}

fn barrier_checks(spec: &BarrierSpec, out: &mut Vec<Check>) {
    out.push(Check::from_result("barrier_bound_state_residual", 1e-10, solve_bound_state(spec).map(|b| b.residual)));
    let ortho = (|| -> Result<f64> {
        let b = solve_bound_state(spec)?;
        let mut worst: f64 = 0.0;
        for k in [0.1, 0.5, 1.0, 2.0, 5.0] {
            worst = worst.max(bound_scattering_overlap(spec, &b, &even_scattering_state(spec, k)?).abs());
        }
        Ok(worst)
    })();
    out.push(Check::from_result("barrier_orthogonality", 1e-10, ortho));
    let cross = (|| -> Result<f64> {
        let r = resonance_width(spec)?;
        let m = mapped_model(spec, None)?;
        let w = -2.0 * perturb_discrete(&m, 2)?.eigenvalue().im;
        Ok((w / r.width - 1.0).abs())
    })();
    out.push(Check::from_result("barrier_width_cross_check", 1e-8, cross));
}

/// Runs every check. Individual failures are recorded, never propagated.
pub fn run_suite(model: &ModelSpec, barrier: &BarrierSpec, opts: &SuiteOptions) -> Vec<Check> {
    let mut out = Vec::new();
    let eps = model.coupling();

    out.push(Check::from_result(
        "contour_integrates_polynomials",
        1e-10,
        model.grid().and_then(|g| {
            let x = model.contour().cutoff;
            Ok((g.integrate(|z| z * z)? - x * x * x / 3.0).norm() / (x * x * x))
        }),
    ));

    let lambda2 = perturb_discrete(model, 2).map(|s| s.eigenvalue());
    out.push(Check::from_result(
        "plemelj_imaginary_part",
        1e-8,
        lambda2.clone().map(|l| (l.im + PI * model.v_at_level().norm_sqr()).abs()),
    ));

    let pole = find_pole(model, opts.pole_tolerance, 200);
    out.push(Check::from_result("pole_residual", 1e-10, pole.clone().map(|p| p.residual)));
    out.push(Check::from_result(
        "pole_error_is_fourth_order",
        2.0,
        lambda2.and_then(|l| {
            let p = pole.clone()?;
            Ok(if eps == 0.0 { (l - p.lambda_pole).norm() } else { (l - p.lambda_pole).norm() / eps.powi(4) })
        }),
    ));

    let exact = exact_system(model).map(|e| e.to_system());
    match &exact {
        Ok(sys) => {
            let n = sys.continuum().len();
            let sample: Vec<usize> = (0..10).map(|k| (7 + 19 * k) % n.max(1)).collect();
            let rep = sys.biorthogonality(&sample);
            out.push(Check::from_result("discrete_biorthonormality", 1e-6, rep.clone().map(|r| r.discrete_norm)));
            out.push(Check::from_result("cross_biorthogonality", 1e-6, rep.map(|r| r.cross)));
            let comp = completeness_residuals(model, sys, opts.seed, opts.random_pairs);
            out.push(Check::from_result("completeness_random_pairs", 1e-6, comp.clone().map(|c| c.0)));
            out.push(Check::from_result("hamiltonian_reconstruction", 1e-6, comp.map(|c| c.1)));
            out.push(Check::from_result(
                "survival_starts_at_one",
                1e-8,
                survival_curve(sys, &[0.0]).map(|c| (c.amplitude[0] - 1.0).norm()),
            ));
        }
        Err(e) => {
            for name in [
                "discrete_biorthonormality",
                "cross_biorthogonality",
                "completeness_random_pairs",
                "hamiltonian_reconstruction",
                "survival_starts_at_one",
            ] {
                out.push(Check::from_result(name, 0.0, Err(e.clone())));
            }
        }
    }

    let oracle = discretize(model, opts.oracle_levels, model.contour().cutoff);
    out.push(Check::from_result("oracle_unitarity", 1e-12, oracle.as_ref().map(|o| o.unitarity_defect()).map_err(Clone::clone)));

    let dyn_check = (|| -> Result<(f64, f64)> {
        let times = default_time_grid(model)?;
        let o = oracle_survival_curve(oracle.as_ref().map_err(Clone::clone)?, &times)?;
        let spec = survival_curve(&assemble_system(model, 4)?, &times)?;
        let gw = model.golden_rule_width();
        let slope = spec.log_slope(1.0 / gw, 3.0 / gw).ok_or_else(|| Error::Config("empty slope window".into()))?;
        Ok((max_gap(&spec, &o), (slope / -gw - 1.0).abs()))
    })();
    out.push(Check::from_result("survival_matches_oracle", 1e-3, dyn_check.clone().map(|d| d.0)));
    out.push(Check::from_result("decay_log_slope", 0.05, dyn_check.map(|d| d.1)));
    out.push(Check::from_result(
        "exponential_at_one_lifetime",
        1e-15,
        exponential_approx(model, 1.0 / model.golden_rule_width()).map(|s| (s - (-1.0f64).exp()).abs()),
    ));

    out.push(Check::from_result("liouville_commutator_vs_dense", 1e-11, commutator_check(model, opts)));
    liouville_checks(model, opts, &mut out);
    barrier_checks(barrier, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let checks = run_suite(&ModelSpec::default_with_coupling(0.1), &BarrierSpec::default(), &SuiteOptions::default());
        assert!(checks.len() >= 15);
        for c in &checks {
            assert_eq!(c.status, Status::Pass, "{c:?}");
        }
        let mut names: Vec<_> = checks.iter().map(|c| c.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), checks.len());
    }

    #[test]
    fn kernels_skip_the_liouville_checks() {
        use crate::model::FormFactor2;
        let m = ModelSpec::default_with_coupling(0.1).with_kernel(Some(FormFactor2::separable_sqrt_exp(0.1))).unwrap();
        let checks = run_suite(&m, &BarrierSpec::default(), &SuiteOptions { oracle_levels: 200, ..Default::default() });
        let skipped: Vec<_> = checks.iter().filter(|c| c.status == Status::Skip).map(|c| c.name).collect();
        assert!(skipped.contains(&"liouville_decay_eigenvalue"), "{skipped:?}");
    }
}
