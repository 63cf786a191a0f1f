//! Exact solution of the Friedrichs case (no continuum–continuum kernel):
//! η(λ), its zero λ_Ω and the exact biorthogonal eigenvectors.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::contour::{ContourGrid, Side};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::system::{BiorthogonalSystem, ContinuumPair};
use crate::vector::VectorCoeffs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleMethod {
    FixedPoint,
    Newton,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PoleResult {
    pub lambda_pole: C64,
    pub residual: f64,
    pub iterations: usize,
    pub method: PoleMethod,
}

fn require_friedrichs(model: &ModelSpec) -> Result<()> {
    if model.has_kernel() {
        return Err(Error::Unsupported("the exact solution needs a model without a continuum kernel".into()));
    }
    Ok(())
}

/// The pole equation on a fixed grid, with V·V̄ cached at the nodes.
#[derive(Clone, Debug)]
pub struct PoleEquation {
    omega: f64,
    grid: ContourGrid,
    /// w_j·V(z_j)·V̄(z_j).
    weighted: Vec<C64>,
}

impl PoleEquation {
    pub fn new(model: &ModelSpec) -> Result<Self> {
        require_friedrichs(model)?;
        let grid = model.grid()?;
        let weighted = grid.nodes().iter().zip(grid.weights()).map(|(&z, &w)| w * model.v(z) * model.vbar(z)).collect();
        Ok(Self { omega: model.omega_level(), grid, weighted })
    }

    pub fn grid(&self) -> &ContourGrid {
        &self.grid
    }

    fn self_energy(&self, lambda: C64) -> C64 {
        self.grid.nodes().iter().zip(&self.weighted).map(|(&z, &c)| c / (lambda - z)).sum()
    }

    fn check_clearance(&self, lambda: C64) -> Result<()> {
        for (&z, &w) in self.grid.nodes().iter().zip(self.grid.weights()) {
            if (lambda - z).norm() < 0.5 * w.norm() {
                return Err(Error::NearContour(lambda));
            }
        }
        Ok(())
    }

    /// η(λ) = λ − Ω − ∫_Γ V(z)V̄(z)/(λ − z) dz.
    pub fn eta(&self, lambda: C64) -> Result<C64> {
        self.check_clearance(lambda)?;
        Ok(lambda - self.omega - self.self_energy(lambda))
    }

    /// η′(λ) = 1 + ∫_Γ V V̄/(λ − z)² dz, differentiated term by term.
    pub fn eta_prime(&self, lambda: C64) -> Result<C64> {
        self.check_clearance(lambda)?;
        let s: C64 = self.grid.nodes().iter().zip(&self.weighted).map(|(&z, &c)| c / ((lambda - z) * (lambda - z))).sum();
        Ok(1.0 + s)
    }

    /// Boundary value η(u ± i0) for u on Γ.
    pub fn eta_boundary(&self, model: &ModelSpec, u: C64, side: Side) -> C64 {
        let m = model.clone();
        u - self.omega - self.grid.cauchy_limit(&move |z| m.v(z) * m.vbar(z), u, side)
    }

    /// Number of zeros of η inside the closed polygon `corners`, from the
    /// accumulated change of arg η along its edges.
    fn winding(&self, corners: &[C64], per_edge: usize) -> i64 {
        let mut total = 0.0;
        // Unchecked sums: near the far, coarse end of Γ only the phase matters.
        let eta = |l: C64| l - self.omega - self.self_energy(l);
        let mut prev = eta(corners[0]);
        for k in 0..corners.len() {
            let (a, b) = (corners[k], corners[(k + 1) % corners.len()]);
            for j in 1..=per_edge {
                let cur = eta(a + (b - a) * (j as f64 / per_edge as f64));
                total += (cur / prev).arg();
                prev = cur;
            }
        }
        (total / (2.0 * PI)).round() as i64
    }
}

/// η(λ) for `model` on its configured contour.
pub fn eta(model: &ModelSpec, lambda: C64) -> Result<C64> {
    PoleEquation::new(model)?.eta(lambda)
}

/// Zero of η between ℝ⁺ and Γ, starting from λ⁰ = Ω.
///
/// The fixed-point map λ ← Ω + ∫V V̄/(λ − z) is tried first; Newton on η
/// takes over if it stalls or leaves the strip.
pub fn find_pole(model: &ModelSpec, tol: f64, max_iter: usize) -> Result<PoleResult> {
    let eq = PoleEquation::new(model)?;
    let omega = C64::new(model.omega_level(), 0.0);
    if model.coupling() == 0.0 {
        return Ok(PoleResult { lambda_pole: omega, residual: 0.0, iterations: 0, method: PoleMethod::FixedPoint });
    }
    let result = match fixed_point(&eq, omega, tol, max_iter) {
        Ok(r) => r,
        Err(first) => match newton(&eq, omega, tol, max_iter) {
            Ok(r) => r,
            Err(second) => {
                return Err(if matches!(first, Error::PoleBelowContour(_)) { first } else { second });
            }
        },
    };
    let grid = eq.grid();
    if !grid.region_contains(result.lambda_pole) {
        return Err(Error::PoleBelowContour(result.lambda_pole));
    }
    let count = eq.winding(&single_pole_loop(grid, result.lambda_pole), 400);
    if count != 1 {
        return Err(Error::PoleCount(count));
    }
    Ok(result)
}

fn fixed_point(eq: &PoleEquation, start: C64, tol: f64, max_iter: usize) -> Result<PoleResult> {
    let omega = C64::new(eq.omega, 0.0);
    let mut lambda = start;
    for it in 1..=max_iter {
        eq.check_clearance(lambda)?;
        lambda = omega + eq.self_energy(lambda);
        if !eq.grid.region_contains(lambda) {
            return Err(Error::PoleBelowContour(lambda));
        }
        let residual = eq.eta(lambda)?.norm();
        if residual <= tol {
            return Ok(PoleResult { lambda_pole: lambda, residual, iterations: it, method: PoleMethod::FixedPoint });
        }
    }
    let residual = eq.eta(lambda)?.norm();
    Err(Error::NoConvergence { method: "fixed-point iteration", iterations: max_iter, last: lambda, residual })
}

/// Newton iteration on η; also the independent check of the fixed point.
pub fn newton(eq: &PoleEquation, start: C64, tol: f64, max_iter: usize) -> Result<PoleResult> {
    let mut lambda = start;
    for it in 1..=max_iter {
        let f = eq.eta(lambda)?;
        let df = eq.eta_prime(lambda)?;
        if df.norm() == 0.0 {
            return Err(Error::DegeneratePole);
        }
        lambda -= f / df;
        let residual = eq.eta(lambda)?.norm();
        if residual <= tol {
            return Ok(PoleResult { lambda_pole: lambda, residual, iterations: it, method: PoleMethod::Newton });
        }
    }
    let residual = eq.eta(lambda)?.norm();
    Err(Error::NoConvergence { method: "Newton iteration", iterations: max_iter, last: lambda, residual })
}

/// Rectangle inside the strip enclosing `pole`, kept clear of Γ. Its top edge
/// sits slightly above the real axis, where η has no zeros.
fn single_pole_loop(grid: &ContourGrid, pole: C64) -> Vec<C64> {
    let d = grid.spec().depth;
    let x = grid.spec().cutoff;
    let left = (0.1 * d).min(0.5 * pole.re);
    let right = (0.8 * x).max(0.5 * (pole.re + x));
    let bottom = (-0.6 * d).min(0.5 * (pole.im - d));
    let top = 0.1 * d;
    vec![C64::new(left, bottom), C64::new(right, bottom), C64::new(right, top), C64::new(left, top)]
}

/// Exact pole, normalization and eigenvector generators.
#[derive(Clone, Debug)]
pub struct ExactSystem {
    model: ModelSpec,
    equation: PoleEquation,
    pole: PoleResult,
    eta_prime: C64,
}

pub const DEFAULT_POLE_TOL: f64 = 1e-13;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Solve for the pole and prepare the exact eigenvector families.
pub fn exact_system(model: &ModelSpec) -> Result<ExactSystem> {
    let equation = PoleEquation::new(model)?;
    let pole = find_pole(model, DEFAULT_POLE_TOL, DEFAULT_MAX_ITER)?;
    let eta_prime = equation.eta_prime(pole.lambda_pole)?;
    if eta_prime.norm() < 1e-12 {
        return Err(Error::DegeneratePole);
    }
    Ok(ExactSystem { model: model.clone(), equation, pole, eta_prime })
}

impl ExactSystem {
    pub fn pole(&self) -> &PoleResult {
        &self.pole
    }

    pub fn eta_prime(&self) -> C64 {
        self.eta_prime
    }

    pub fn grid(&self) -> &ContourGrid {
        self.equation.grid()
    }

    pub fn equation(&self) -> &PoleEquation {
        &self.equation
    }

    /// 1/√η′(λ_Ω), principal branch.
    pub fn normalization(&self) -> C64 {
        1.0 / self.eta_prime.sqrt()
    }

    /// f_Ω = N(|1⟩ + V_z/(λ_Ω − z)).
    pub fn discrete_right(&self) -> VectorCoeffs {
        let (m, l, n) = (self.model.clone(), self.pole.lambda_pole, self.normalization());
        VectorCoeffs::from_profile(n, Arc::new(move |z| n * m.v(z) / (l - z)))
    }

    /// f̃_Ω = N(⟨1| + V̄_z/(λ_Ω − z)).
    pub fn discrete_left(&self) -> VectorCoeffs {
        let (m, l, n) = (self.model.clone(), self.pole.lambda_pole, self.normalization());
        VectorCoeffs::from_profile(n, Arc::new(move |z| n * m.vbar(z) / (l - z)))
    }

    /// f_u = |u⟩ + c(|1⟩ + V_z/(u + i0 − z)), c = V̄(u)/η(u + i0).
    pub fn continuum_right(&self, u: C64) -> VectorCoeffs {
        let c = self.model.vbar(u) / self.equation.eta_boundary(&self.model, u, Side::Plus);
        let m = self.model.clone();
        let mut v = VectorCoeffs::atom(u).with_cauchy(u, Side::Plus, Arc::new(move |z| c * m.v(z)));
        v.d_component = c;
        v
    }

    /// f̃_u = ⟨u| + c̃(⟨1| + V̄_z/(u − i0 − z)), c̃ = V(u)/η(u − i0).
    pub fn continuum_left(&self, u: C64) -> VectorCoeffs {
        let c = self.model.v(u) / self.equation.eta_boundary(&self.model, u, Side::Minus);
        let m = self.model.clone();
        let mut v = VectorCoeffs::atom(u).with_cauchy(u, Side::Minus, Arc::new(move |z| c * m.vbar(z)));
        v.d_component = c;
        v
    }

    /// Assemble the full system with continuum pairs at every node.
    pub fn to_system(&self) -> BiorthogonalSystem {
        let grid = self.grid().clone();
        let continuum = grid
            .nodes()
            .par_iter()
            .zip(grid.weights().par_iter())
            .map(|(&u, &w)| ContinuumPair {
                u,
                weight: w,
                right: self.continuum_right(u),
                left: self.continuum_left(u),
            })
            .collect();
        BiorthogonalSystem::new(grid, self.pole.lambda_pole, self.discrete_right(), self.discrete_left(), continuum)
    }
}
