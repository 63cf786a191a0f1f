//! Order-by-order eigenvectors of H_Γ = H⁰_Γ + H¹_Γ for general V and V₂.
//!
//! Discrete branch (gauge ⟨1|Φ⁽ⁿ⁾⟩ = 0, ⟨Ψ⁽ⁿ⁾|1⟩ = 0 for n ≥ 1):
//!   λ⁽ⁿ⁾     = ∫ V̄(z) φ⁽ⁿ⁻¹⁾(z) dz
//!   φ⁽ⁿ⁾(z)  = [V(z) φ₁⁽ⁿ⁻¹⁾ + ∫V₂(z,z′)φ⁽ⁿ⁻¹⁾(z′)dz′ − Σₖ λ⁽ᵏ⁾ φ⁽ⁿ⁻ᵏ⁾(z)] / (Ω − z)
//! and the mirror recursion for the left vector. The resolvent (Ω − z)⁻¹ only
//! ever acts on the continuum block, where z ∈ Γ keeps it finite.
//!
//! Continuum branch at u ∈ Γ: eigenvalue u at every order, denominators
//! (u − Ω) on the discrete block and (u ± i0 − z) on the continuum block.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::contour::{ContourGrid, Side};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Profile};
use crate::system::{BiorthogonalSystem, ContinuumPair};
use crate::vector::VectorCoeffs;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Highest discrete-branch order the recursion is run to.
pub const MAX_DISCRETE_ORDER: usize = 4;
/// Highest continuum-branch order.
pub const MAX_CONTINUUM_ORDER: usize = 2;

/// One order of a series: eigenvalue correction and vector corrections.
#[derive(Clone, Debug)]
pub struct SeriesTerm {
    pub lambda: C64,
    pub right: VectorCoeffs,
    pub left: VectorCoeffs,
}

#[derive(Clone, Debug)]
pub struct PerturbationSeries {
    pub orders: Vec<SeriesTerm>,
}

impl PerturbationSeries {
    /// Σ λ⁽ᵏ⁾.
    pub fn eigenvalue(&self) -> C64 {
        self.orders.iter().map(|t| t.lambda).sum()
    }

    pub fn right(&self) -> VectorCoeffs {
        self.orders.iter().skip(1).fold(self.orders[0].right.clone(), |acc, t| acc.plus(&t.right))
    }

    pub fn left(&self) -> VectorCoeffs {
        self.orders.iter().skip(1).fold(self.orders[0].left.clone(), |acc, t| acc.plus(&t.left))
    }

    pub fn order(&self) -> usize {
        self.orders.len() - 1
    }
}

/// Node samples of a continuum function, pre-multiplied by the weights.
fn weighted_samples(grid: &ContourGrid, profile: &Profile) -> Arc<Vec<C64>> {
    Arc::new(grid.nodes().iter().zip(grid.weights()).map(|(&z, &w)| w * profile(z)).collect())
}

#[derive(Clone, Copy)]
enum Hand {
    Right,
    Left,
}

/// One side of the discrete-branch recursion.
fn discrete_side(model: &ModelSpec, grid: &ContourGrid, order: usize, hand: Hand) -> (Vec<C64>, Vec<Profile>) {
    let omega = model.omega_level();
    let nodes: Arc<Vec<C64>> = Arc::new(grid.nodes().to_vec());
    // The coupling that feeds the continuum from the level, and the one that
    // closes the loop back onto it.
    let (feed, close): (Profile, Profile) = {
        let (a, b) = (model.clone(), model.clone());
        match hand {
            Hand::Right => (Arc::new(move |z| a.v(z)), Arc::new(move |z| b.vbar(z))),
            Hand::Left => (Arc::new(move |z| a.vbar(z)), Arc::new(move |z| b.v(z))),
        }
    };
    let mut lambdas = vec![C64::new(omega, 0.0)];
    let mut profiles: Vec<Profile> = vec![Arc::new(|_| ZERO)];
    let mut samples = vec![weighted_samples(grid, &profiles[0])];
    for n in 1..=order {
        let prev = &samples[n - 1];
        // λ⁽ⁿ⁾ = ∫ close(z) φ⁽ⁿ⁻¹⁾(z) dz; exactly zero at n = 1.
        let lam = if n == 1 {
            ZERO
        } else {
            grid.nodes().iter().zip(prev.iter()).map(|(&z, &c)| close(z) * c).sum()
        };
        lambdas.push(lam);
        let level_amp = if n == 1 { ONE } else { ZERO };
        let kernel_part: Option<(ModelSpec, Arc<Vec<C64>>, Arc<Vec<C64>>)> =
            model.has_kernel().then(|| (model.clone(), nodes.clone(), prev.clone()));
        let lower: Vec<(C64, Profile)> = (1..n).map(|k| (lambdas[k], profiles[n - k].clone())).collect();
        let feed = feed.clone();
        let profile: Profile = Arc::new(move |z: C64| {
            let mut num = feed(z) * level_amp;
            if let Some((m, zs, wphi)) = &kernel_part {
                num += match hand {
                    Hand::Right => zs.iter().zip(wphi.iter()).map(|(&zp, &c)| m.v2(z, zp) * c).sum::<C64>(),
                    Hand::Left => zs.iter().zip(wphi.iter()).map(|(&zp, &c)| c * m.v2(zp, z)).sum::<C64>(),
                };
            }
            for (l, p) in &lower {
                num -= l * p(z);
            }
            num / (omega - z)
        });
        samples.push(weighted_samples(grid, &profile));
        profiles.push(profile);
    }
    (lambdas, profiles)
}

/// Discrete-branch series through `order` (right and left built separately).
pub fn perturb_discrete(model: &ModelSpec, order: usize) -> Result<PerturbationSeries> {
    if order > MAX_DISCRETE_ORDER {
        return Err(Error::Unsupported(format!(
            "discrete-branch order {order} exceeds the ceiling {MAX_DISCRETE_ORDER}"
        )));
    }
    let grid = model.grid()?;
    if grid.nodes().iter().any(|z| (model.omega_level() - z).norm() < 1e-12) {
        return Err(Error::Analyticity("contour passes through the discrete level".into()));
    }
    let (lr, pr) = discrete_side(model, &grid, order, Hand::Right);
    let (_, pl) = discrete_side(model, &grid, order, Hand::Left);
    let orders = (0..=order)
        .map(|n| {
            let d = if n == 0 { ONE } else { ZERO };
            let (right, left) = if n == 0 {
                (VectorCoeffs::discrete(ONE), VectorCoeffs::discrete(ONE))
            } else {
                (VectorCoeffs::from_profile(d, pr[n].clone()), VectorCoeffs::from_profile(d, pl[n].clone()))
            };
            SeriesTerm { lambda: lr[n], right, left }
        })
        .collect();
    Ok(PerturbationSeries { orders })
}

/// Eigenvalue corrections from the left recursion alone.
pub fn left_eigenvalue_corrections(model: &ModelSpec, order: usize) -> Result<Vec<C64>> {
    let grid = model.grid()?;
    Ok(discrete_side(model, &grid, order.min(MAX_DISCRETE_ORDER), Hand::Left).0)
}

/// Continuum-branch series at u ∈ Γ through `order` ≤ 2.
pub fn perturb_continuous(model: &ModelSpec, grid: &ContourGrid, u: C64, order: usize) -> Result<PerturbationSeries> {
    if order > MAX_CONTINUUM_ORDER {
        return Err(Error::Unsupported(format!(
            "continuum-branch order {order} exceeds the ceiling {MAX_CONTINUUM_ORDER}"
        )));
    }
    if !grid.on_path(u) {
        return Err(Error::NotANode(u));
    }
    let omega = model.omega_level();
    let gap = u - omega;
    if gap.norm() < 1e-12 {
        return Err(Error::Analyticity("continuum eigenvalue coincides with the discrete level".into()));
    }
    let mut orders = vec![SeriesTerm { lambda: u, right: VectorCoeffs::atom(u), left: VectorCoeffs::atom(u) }];
    if order >= 1 {
        let mut right = VectorCoeffs::discrete(model.vbar(u) / gap);
        let mut left = VectorCoeffs::discrete(model.v(u) / gap);
        if model.has_kernel() {
            let (a, b) = (model.clone(), model.clone());
            right = right.with_cauchy(u, Side::Plus, Arc::new(move |z| a.v2(z, u)));
            left = left.with_cauchy(u, Side::Minus, Arc::new(move |z| b.v2(u, z)));
        }
        orders.push(SeriesTerm { lambda: ZERO, right, left });
    }
    if order >= 2 {
        let (r_d, l_d) = if model.has_kernel() {
            let (a, b) = (model.clone(), model.clone());
            (
                grid.cauchy_limit(&move |z| a.vbar(z) * a.v2(z, u), u, Side::Plus) / gap,
                grid.cauchy_limit(&move |z| b.v2(u, z) * b.v(z), u, Side::Minus) / gap,
            )
        } else {
            (ZERO, ZERO)
        };
        let (vbar_u, v_u) = (model.vbar(u), model.v(u));
        let (a, b) = (model.clone(), model.clone());
        let kernel = model.has_kernel().then(|| Arc::new(grid.clone()));
        let kr = kernel.clone();
        let right_num: Profile = Arc::new(move |z| {
            let mut n = a.v(z) * vbar_u / gap;
            if let Some(g) = &kr {
                let a2 = a.clone();
                n += g.cauchy_limit(&move |zp| a2.v2(z, zp) * a2.v2(zp, u), u, Side::Plus);
            }
            n
        });
        let left_num: Profile = Arc::new(move |z| {
            let mut n = v_u * b.vbar(z) / gap;
            if let Some(g) = &kernel {
                let b2 = b.clone();
                n += g.cauchy_limit(&move |zp| b2.v2(u, zp) * b2.v2(zp, z), u, Side::Minus);
            }
            n
        });
        orders.push(SeriesTerm {
            lambda: ZERO,
            right: VectorCoeffs::discrete(r_d).with_cauchy(u, Side::Plus, right_num),
            left: VectorCoeffs::discrete(l_d).with_cauchy(u, Side::Minus, left_num),
        });
    }
    Ok(PerturbationSeries { orders })
}

/// Divide both vectors by √⟨left|right⟩ (principal branch).
pub fn normalize_pair(
    right: &VectorCoeffs,
    left: &VectorCoeffs,
    grid: &ContourGrid,
) -> Result<(VectorCoeffs, VectorCoeffs)> {
    let overlap = VectorCoeffs::pair(left, right, grid)?;
    if overlap.norm() < 1e-300 {
        return Err(Error::SelfOrthogonal);
    }
    let s = 1.0 / overlap.sqrt();
    Ok((right.scaled(s), left.scaled(s)))
}

/// Pole, normalized discrete pair and continuum pairs at every node.
pub fn assemble_system(model: &ModelSpec, order: usize) -> Result<BiorthogonalSystem> {
    let grid = model.grid()?;
    let discrete = perturb_discrete(model, order)?;
    let (right, left) = normalize_pair(&discrete.right(), &discrete.left(), &grid)?;
    let c_order = order.min(MAX_CONTINUUM_ORDER);
    let continuum = grid
        .nodes()
        .par_iter()
        .zip(grid.weights().par_iter())
        .map(|(&u, &w)| {
            let s = perturb_continuous(model, &grid, u, c_order)?;
            Ok(ContinuumPair { u, weight: w, right: s.right(), left: s.left() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BiorthogonalSystem::new(grid, discrete.eigenvalue(), right, left, continuum))
}
