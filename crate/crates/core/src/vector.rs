//! Coefficient representation of generalized vectors over {|1⟩} ⊕ {|z⟩, z ∈ Γ}
//! and their bilinear pairing.
//!
//! A vector is a discrete component plus a continuum function made of three
//! kinds of pieces: contour delta atoms, an analytic smooth profile, and
//! Cauchy terms N(z)/(u ± i0 − z). Every pairing between pieces is evaluated
//! in closed form or by the boundary-value quadrature of [`ContourGrid`], so
//! atoms are never sampled.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::contour::{ContourGrid, Side};
use crate::error::{Error, Result};
use crate::model::Profile;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// δ_Γ(z − position) with a complex weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub position: C64,
    pub weight: C64,
}

/// numerator(z) / (pole ± i0 − z), the ± fixed by `side`.
#[derive(Clone)]
pub struct CauchyTerm {
    pub pole: C64,
    pub side: Side,
    pub numerator: Profile,
}

impl fmt::Debug for CauchyTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CauchyTerm").field("pole", &self.pole).field("side", &self.side).finish()
    }
}

/// A right vector (ket) or a left vector (bra functional).
///
/// Right and left vectors share the representation but are always built
/// independently; a bra is never obtained by conjugating a ket.
#[derive(Clone, Default)]
pub struct VectorCoeffs {
    pub d_component: C64,
    pub atoms: Vec<Atom>,
    pub smooth: Option<Profile>,
    pub cauchy: Vec<CauchyTerm>,
}

impl fmt::Debug for VectorCoeffs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorCoeffs")
            .field("d_component", &self.d_component)
            .field("atoms", &self.atoms)
            .field("smooth", &self.smooth.is_some())
            .field("cauchy", &self.cauchy)
            .finish()
    }
}

fn same_point(a: C64, b: C64) -> bool {
    (a - b).norm() <= 1e-12 * (1.0 + a.norm())
}

impl VectorCoeffs {
    pub fn zero() -> Self {
        Self::default()
    }

    /// |1⟩ (or ⟨1| on the left).
    pub fn discrete(d: C64) -> Self {
        Self { d_component: d, ..Self::default() }
    }

    /// A unit contour atom, the unperturbed continuum eigenvector at `u`.
    pub fn atom(position: C64) -> Self {
        Self { atoms: vec![Atom { position, weight: C64::new(1.0, 0.0) }], ..Self::default() }
    }

    pub fn from_profile(d: C64, profile: Profile) -> Self {
        Self { d_component: d, smooth: Some(profile), ..Self::default() }
    }

    pub fn with_cauchy(mut self, pole: C64, side: Side, numerator: Profile) -> Self {
        self.cauchy.push(CauchyTerm { pole, side, numerator });
        self
    }

    /// P_d: keep the discrete component only.
    pub fn project_discrete(&self) -> Self {
        Self::discrete(self.d_component)
    }

    /// P_Γ: drop the discrete component.
    pub fn project_continuum(&self) -> Self {
        Self { d_component: ZERO, ..self.clone() }
    }

    pub fn scaled(&self, c: C64) -> Self {
        let smooth = self.smooth.clone().map(|p| -> Profile { Arc::new(move |z| c * p(z)) });
        let cauchy = self
            .cauchy
            .iter()
            .map(|t| {
                let n = t.numerator.clone();
                CauchyTerm { pole: t.pole, side: t.side, numerator: Arc::new(move |z| c * n(z)) }
            })
            .collect();
        Self {
            d_component: c * self.d_component,
            atoms: self.atoms.iter().map(|a| Atom { position: a.position, weight: c * a.weight }).collect(),
            smooth,
            cauchy,
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        let smooth = match (&self.smooth, &other.smooth) {
            (Some(a), Some(b)) => {
                let (a, b) = (a.clone(), b.clone());
                Some(Arc::new(move |z| a(z) + b(z)) as Profile)
            }
            (Some(a), None) => Some(a.clone()),
            (None, b) => b.clone(),
        };
        let mut atoms = self.atoms.clone();
        for a in &other.atoms {
            match atoms.iter_mut().find(|b| same_point(b.position, a.position)) {
                Some(b) => b.weight += a.weight,
                None => atoms.push(*a),
            }
        }
        let mut cauchy = self.cauchy.clone();
        cauchy.extend(other.cauchy.iter().cloned());
        Self { d_component: self.d_component + other.d_component, atoms, smooth, cauchy }
    }

    pub fn has_continuum(&self) -> bool {
        !self.atoms.is_empty() || self.smooth.is_some() || !self.cauchy.is_empty()
    }

    /// Regular part of the continuum function at `z` (smooth profile plus
    /// Cauchy terms; atoms excluded). Undefined at Cauchy poles.
    pub fn regular_at(&self, z: C64) -> C64 {
        let mut v = self.smooth.as_ref().map_or(ZERO, |p| p(z));
        for t in &self.cauchy {
            v += (t.numerator)(z) / (t.pole - z);
        }
        v
    }

    /// ⟨left|right⟩ = left.d·right.d + ∫_Γ left(z)·right(z) dz.
    pub fn pair(left: &Self, right: &Self, grid: &ContourGrid) -> Result<C64> {
        let mut acc = left.d_component * right.d_component;
        if !left.has_continuum() || !right.has_continuum() {
            return Ok(acc);
        }

        // Atom–atom.
        for a in &left.atoms {
            for b in &right.atoms {
                if same_point(a.position, b.position) {
                    return Err(Error::CoincidentSingularities(a.position));
                }
            }
        }
        // Atom against the other side's regular part.
        for a in &left.atoms {
            acc += a.weight * right.regular_at_checked(a.position)?;
        }
        for b in &right.atoms {
            acc += b.weight * left.regular_at_checked(b.position)?;
        }
        // Smooth–smooth.
        if let (Some(l), Some(r)) = (&left.smooth, &right.smooth) {
            acc += grid.sum(|z| l(z) * r(z));
        }
        // Smooth against Cauchy terms.
        if let Some(l) = &left.smooth {
            for t in &right.cauchy {
                let (l, n) = (l.clone(), t.numerator.clone());
                acc += grid.cauchy_limit(&move |z| l(z) * n(z), t.pole, t.side);
            }
        }
        if let Some(r) = &right.smooth {
            for t in &left.cauchy {
                let (r, n) = (r.clone(), t.numerator.clone());
                acc += grid.cauchy_limit(&move |z| r(z) * n(z), t.pole, t.side);
            }
        }
        // Cauchy–Cauchy by partial fractions:
        // 1/((v−z)(u−z)) = [1/(v−z) − 1/(u−z)]/(u−v).
        for s in &left.cauchy {
            for t in &right.cauchy {
                if same_point(s.pole, t.pole) {
                    return Err(Error::CoincidentSingularities(s.pole));
                }
                let (m, n) = (s.numerator.clone(), t.numerator.clone());
                let mn = move |z: C64| m(z) * n(z);
                let bv = grid.cauchy_limit(&mn, s.pole, s.side);
                let bu = grid.cauchy_limit(&mn, t.pole, t.side);
                acc += (bv - bu) / (t.pole - s.pole);
            }
        }
        Ok(acc)
    }

    fn regular_at_checked(&self, z: C64) -> Result<C64> {
        if let Some(t) = self.cauchy.iter().find(|t| same_point(t.pole, z)) {
            return Err(Error::CoincidentSingularities(t.pole));
        }
        Ok(self.regular_at(z))
    }
}

/// Regular part sampled at every node of `grid`.
pub fn node_samples(v: &VectorCoeffs, grid: &ContourGrid) -> Vec<C64> {
    grid.nodes().iter().map(|&z| v.regular_at(z)).collect()
}

/// Which half plane a vector's profile continues into.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Continuation {
    Lower,
    Upper,
    Both,
}

/// A physical vector given by its discrete amplitude and an analytic profile
/// ω ↦ ⟨ω|Φ⟩, used as a ket (continued below the axis) or as a bra.
#[derive(Clone)]
pub struct AnalyticVector {
    pub d_component: C64,
    pub profile: Profile,
    pub continuation: Continuation,
}

impl fmt::Debug for AnalyticVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticVector")
            .field("d_component", &self.d_component)
            .field("continuation", &self.continuation)
            .finish()
    }
}

impl AnalyticVector {
    pub fn new(d_component: C64, profile: Profile, continuation: Continuation) -> Self {
        Self { d_component, profile, continuation }
    }

    /// The unstable level |1⟩.
    pub fn level() -> Self {
        Self::new(C64::new(1.0, 0.0), Arc::new(|_| ZERO), Continuation::Both)
    }

    /// ⟨ω|Φ⟩ on the real axis.
    pub fn value(&self, omega: f64) -> C64 {
        (self.profile)(C64::new(omega, 0.0))
    }

    /// Ket coefficients with the profile continued onto Γ.
    pub fn as_ket(&self) -> Result<VectorCoeffs> {
        if self.continuation == Continuation::Upper {
            return Err(Error::Unsupported("ket profile is only continuable into the upper half plane".into()));
        }
        Ok(VectorCoeffs::from_profile(self.d_component, self.profile.clone()))
    }

    /// Bra functional: conjugated amplitude, profile z ↦ conj(ψ(conj z)).
    pub fn as_bra(&self) -> Result<VectorCoeffs> {
        if self.continuation == Continuation::Lower {
            return Err(Error::Unsupported("bra profile is only continuable into the lower half plane".into()));
        }
        let p = self.profile.clone();
        Ok(VectorCoeffs::from_profile(self.d_component.conj(), Arc::new(move |z: C64| p(z.conj()).conj())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::ContourSpec;
    use proptest::prelude::*;

    fn grid() -> ContourGrid {
        ContourGrid::build(&ContourSpec::for_level(1.0)).unwrap()
    }

    fn prof(f: impl Fn(C64) -> C64 + Send + Sync + 'static) -> Profile {
        Arc::new(f)
    }

    #[test]
    fn discrete_and_smooth_pairing() {
        let g = grid();
        let l = VectorCoeffs::from_profile(C64::new(2.0, 0.0), prof(|z| (-z).exp()));
        let r = VectorCoeffs::from_profile(C64::new(0.5, 1.0), prof(|z| (-z).exp()));
        let p = VectorCoeffs::pair(&l, &r, &g).unwrap();
        let exact = C64::new(1.0, 2.0) + 0.5 * (1.0 - (-40.0f64).exp());
        assert!((p - exact).norm() < 1e-10, "{p}");
    }

    #[test]
    fn atom_evaluates_partner_profile() {
        let g = grid();
        let u = g.nodes()[50];
        let l = VectorCoeffs::from_profile(C64::new(0.0, 0.0), prof(|z| z * z));
        let r = VectorCoeffs::atom(u).scaled(C64::new(0.0, 3.0));
        let p = VectorCoeffs::pair(&l, &r, &g).unwrap();
        assert!((p - C64::new(0.0, 3.0) * u * u).norm() < 1e-14);
    }

    #[test]
    fn coincident_singularities_are_rejected() {
        let g = grid();
        let u = g.nodes()[10];
        let a = VectorCoeffs::atom(u);
        assert!(matches!(VectorCoeffs::pair(&a, &a, &g), Err(Error::CoincidentSingularities(_))));
        let c = VectorCoeffs::zero().with_cauchy(u, Side::Plus, prof(|_| C64::new(1.0, 0.0)));
        assert!(VectorCoeffs::pair(&a, &c, &g).is_err());
        let cm = VectorCoeffs::zero().with_cauchy(u, Side::Minus, prof(|_| C64::new(1.0, 0.0)));
        assert!(VectorCoeffs::pair(&cm, &c, &g).is_err());
    }

    #[test]
    fn cauchy_cauchy_matches_sampled_product_for_separate_poles() {
        let g = grid();
        // Poles off the path: the pairing is an ordinary quadrature.
        let v = C64::new(2.0, -0.2);
        let u = C64::new(3.0, -0.25);
        let m = prof(|z| z.sqrt() * (-z).exp());
        let n = prof(|z| (-z / 2.0).exp());
        let l = VectorCoeffs::zero().with_cauchy(v, Side::Plus, m.clone());
        let r = VectorCoeffs::zero().with_cauchy(u, Side::Plus, n.clone());
        let p = VectorCoeffs::pair(&l, &r, &g).unwrap();
        let fine = ContourGrid::build(&ContourSpec::for_level(1.0).with_nodes(800)).unwrap();
        let direct = fine.sum(|z| m(z) / (v - z) * n(z) / (u - z));
        assert!((p - direct).norm() < 1e-9, "{p} {direct}");
    }

    #[test]
    fn projectors_split_and_annihilate() {
        let g = grid();
        let v = VectorCoeffs::from_profile(C64::new(1.5, -0.5), prof(|z| z * (-z).exp()));
        let d = v.project_discrete();
        let c = v.project_continuum();
        let sum = d.plus(&c);
        let probe = VectorCoeffs::from_profile(C64::new(0.3, 0.1), prof(|z| (-z).exp()));
        let whole = VectorCoeffs::pair(&probe, &v, &g).unwrap();
        let split = VectorCoeffs::pair(&probe, &sum, &g).unwrap();
        assert!((whole - split).norm() < 1e-15);
        // P_d P_Γ = 0.
        let both = c.project_discrete();
        assert_eq!(both.d_component, C64::new(0.0, 0.0));
        assert!(!both.has_continuum());
    }

    proptest! {
        #[test]
        fn pairing_is_bilinear(a in -2.0..2.0f64, b in -2.0..2.0f64, k in 0usize..150) {
            let g = grid();
            let u = g.nodes()[k];
            let l = VectorCoeffs::from_profile(C64::new(1.0, 0.0), prof(|z| (-z).exp()));
            let r1 = VectorCoeffs::atom(u);
            let r2 = VectorCoeffs::from_profile(C64::new(0.0, 1.0), prof(|z| z * (-z).exp()));
            let c = C64::new(a, b);
            let lhs = VectorCoeffs::pair(&l, &r1.scaled(c).plus(&r2), &g).unwrap();
            let rhs = c * VectorCoeffs::pair(&l, &r1, &g).unwrap() + VectorCoeffs::pair(&l, &r2, &g).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-12 * (1.0 + lhs.norm()));
        }
    }
}
