//! Square well of half-width a and depth V₀ (potential 0 inside, V₀
//! outside) with a second drop of V₁ beyond |x| = b. The well's single even
//! bound state leaks through the barrier a < |x| < b into the even continuum.
//!
//! Energies keep the well's convention: the unperturbed continuum starts at
//! V₀ and, after the drop, at V₀ − V₁. The mapped generic model shifts that
//! threshold to zero.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::contour::ContourSpec;
use crate::error::{Error, Result};
use crate::model::{FormFactor, ModelSpec, Profile};

/// Default lower bound on b/a.
pub const DEFAULT_MIN_SEPARATION: f64 = 5.0;

fn default_min_separation() -> f64 {
    DEFAULT_MIN_SEPARATION
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSpec {
    /// Inner well half-width.
    pub a: f64,
    /// Outer edge of the barrier.
    pub b: f64,
    /// Potential outside the well.
    pub v0: f64,
    /// Drop beyond |x| = b.
    pub v1: f64,
    pub mu: f64,
    pub hbar: f64,
    /// Required b/a.
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
}

impl Default for BarrierSpec {
    fn default() -> Self {
        Self { a: 1.0, b: 5.0, v0: 1.0, v1: 0.8, mu: 1.0, hbar: 1.0, min_separation: DEFAULT_MIN_SEPARATION }
    }
}

impl BarrierSpec {
    /// Well strength a√(2μV₀)/ħ; below π/2 there is exactly one bound state.
    pub fn strength(&self) -> f64 {
        self.a * (2.0 * self.mu * self.v0).sqrt() / self.hbar
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("a", self.a), ("b", self.b), ("v0", self.v0), ("mu", self.mu), ("hbar", self.hbar)] {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::Barrier(format!("{name} must be positive, got {x}")));
            }
        }
        if !(self.v1.is_finite() && self.v1 >= 0.0 && self.v1 < self.v0) {
            return Err(Error::Barrier(format!("need 0 ≤ v1 < v0, got v1 = {}, v0 = {}", self.v1, self.v0)));
        }
        if self.strength() >= FRAC_PI_2 {
            return Err(Error::Barrier(format!(
                "a√(2μV₀)/ħ = {} admits more than one bound state (limit π/2)",
                self.strength()
            )));
        }
        if self.b < self.min_separation * self.a {
            return Err(Error::Barrier(format!("b = {} is closer than {}·a to the well", self.b, self.min_separation)));
        }
        Ok(())
    }

    fn k_of(&self, energy_above: f64) -> f64 {
        (2.0 * self.mu * energy_above).sqrt() / self.hbar
    }

    /// q² − k² inside the well: 2μV₀/ħ².
    fn well_q2(&self) -> f64 {
        2.0 * self.mu * self.v0 / (self.hbar * self.hbar)
    }
}

/// ψ₁(x) = A cos(px) for |x| < a, C e^{−κ(|x|−a)} outside, C = A cos(pa).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundState {
    pub energy: f64,
    pub p: f64,
    pub kappa: f64,
    pub inner: f64,
    pub outer: f64,
    /// |p tan(pa) − κ| at the root.
    pub residual: f64,
}

impl BoundState {
    pub fn psi(&self, x: f64, a: f64) -> f64 {
        if x.abs() < a {
            self.inner * (self.p * x).cos()
        } else {
            self.outer * (-self.kappa * (x.abs() - a)).exp()
        }
    }

    /// ∫|ψ₁|² from the piecewise closed forms.
    pub fn norm_sqr(&self, a: f64) -> f64 {
        let p = self.p;
        let inside = self.inner * self.inner * (a + (2.0 * p * a).sin() / (2.0 * p));
        let outside = self.outer * self.outer / self.kappa;
        inside + outside
    }
}

/// Even bound state by bisection on p tan(pa) − κ, which increases
/// monotonically on (0, V₀) when the strength is below π/2.
pub fn solve_bound_state(spec: &BarrierSpec) -> Result<BoundState> {
    spec.validate()?;
    let f = |e: f64| {
        let p = spec.k_of(e);
        let kappa = spec.k_of(spec.v0 - e);
        p * (p * spec.a).tan() - kappa
    };
    let (mut lo, mut hi) = (0.0, spec.v0);
    assert!(f(lo) < 0.0 && f(hi) > 0.0, "single even root is bracketed under the strength bound");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * spec.v0 {
            break;
        }
    }
    let energy = 0.5 * (lo + hi);
    let p = spec.k_of(energy);
    let kappa = spec.k_of(spec.v0 - energy);
    let c = (p * spec.a).cos();
    let unnormalized = BoundState { energy, p, kappa, inner: 1.0, outer: c, residual: f(energy).abs() };
    let n = unnormalized.norm_sqr(spec.a).sqrt();
    Ok(BoundState { inner: 1.0 / n, outer: c / n, ..unnormalized })
}

/// Even continuum state at E = ħ²k²/2μ + V₀, normalized to δ(k − k′) on k > 0:
/// A cos(qx) inside, α cos(k|x|) + β sin(k|x|) outside with α² + β² = 1/π.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScatteringState {
    pub k: f64,
    pub q: f64,
    pub inner: f64,
    pub cos_coeff: f64,
    pub sin_coeff: f64,
}

impl ScatteringState {
    pub fn psi(&self, x: f64, a: f64) -> f64 {
        let x = x.abs();
        if x < a {
            self.inner * (self.q * x).cos()
        } else {
            self.cos_coeff * (self.k * x).cos() + self.sin_coeff * (self.k * x).sin()
        }
    }

    /// δ in ψ = cos(k|x| + δ)/√π outside the well.
    pub fn phase_shift(&self) -> f64 {
        (-self.sin_coeff).atan2(self.cos_coeff)
    }
}

/// Matching coefficients continued to complex k: (A, α/A, β/A).
/// Only q² enters, so the choice of √ for q is irrelevant.
fn matching(spec: &BarrierSpec, k: C64) -> (C64, C64, C64) {
    let q2 = k * k + spec.well_q2();
    let q = q2.sqrt();
    let (cq, sq) = ((q * spec.a).cos(), (q * spec.a).sin());
    let (ck, sk) = ((k * spec.a).cos(), (k * spec.a).sin());
    let qs = q * sq;
    let alpha = cq * ck + qs * sk / k;
    let beta = cq * sk - qs * ck / k;
    let d = k * k * cq * cq + qs * qs;
    let amp = k / (PI * d).sqrt();
    (amp, alpha, beta)
}

pub fn even_scattering_state(spec: &BarrierSpec, k: f64) -> Result<ScatteringState> {
    spec.validate()?;
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::Barrier(format!("scattering wavenumber must be positive, got {k}")));
    }
    let (amp, alpha, beta) = matching(spec, C64::new(k, 0.0));
    Ok(ScatteringState {
        k,
        q: (k * k + spec.well_q2()).sqrt(),
        inner: amp.re,
        cos_coeff: (amp * alpha).re,
        sin_coeff: (amp * beta).re,
    })
}

/// ∫_c^∞ e^{−κ(x−a)} (α cos kx + β sin kx) dx, continued to complex k.
fn tail_integral(kappa: f64, a: f64, c: f64, k: C64, alpha: C64, beta: C64) -> C64 {
    let (ck, sk) = ((k * c).cos(), (k * c).sin());
    let num = alpha * (kappa * ck - k * sk) + beta * (kappa * sk + k * ck);
    (-kappa * (c - a)).exp() * num / (kappa * kappa + k * k)
}

/// ⟨1|V¹|k_even⟩ = −2V₁∫_b^∞ ψ₁ψ_k dx, analytic in k off the branch cut of D.
fn coupling_complex(spec: &BarrierSpec, bound: &BoundState, k: C64) -> C64 {
    let (amp, alpha, beta) = matching(spec, k);
    -2.0 * spec.v1 * bound.outer * amp * tail_integral(bound.kappa, spec.a, spec.b, k, alpha, beta)
}

/// ∫_0^c cos(αx + φ) cos(βx + ψ) dx.
fn cos_product(alpha: f64, phi: f64, beta: f64, psi: f64, c: f64) -> f64 {
    let s = |g: f64, t: f64| {
        if g.abs() * c < 1e-8 {
            c * t.cos() - 0.5 * g * c * c * t.sin()
        } else {
            ((g * c + t).sin() - t.sin()) / g
        }
    };
    0.5 * (s(alpha - beta, phi - psi) + s(alpha + beta, phi + psi))
}

/// ∫_{−L}^{L} ψ_k ψ_k′ dx in closed form, L ≥ a.
pub fn scattering_overlap(spec: &BarrierSpec, k: &ScatteringState, kp: &ScatteringState, half_width: f64) -> f64 {
    let a = spec.a;
    let inner = k.inner * kp.inner * cos_product(k.q, 0.0, kp.q, 0.0, a);
    let (bk, bp) = (k.cos_coeff.hypot(k.sin_coeff), kp.cos_coeff.hypot(kp.sin_coeff));
    let (dk, dp) = (k.phase_shift(), kp.phase_shift());
    let outer = bk * bp * (cos_product(k.k, dk, kp.k, dp, half_width) - cos_product(k.k, dk, kp.k, dp, a));
    2.0 * (inner + outer)
}

/// ⟨1|k_even⟩, closed form; zero for eigenstates of the same well.
pub fn bound_scattering_overlap(spec: &BarrierSpec, bound: &BoundState, s: &ScatteringState) -> f64 {
    let inside = bound.inner * s.inner * cos_product(bound.p, 0.0, s.q, 0.0, spec.a);
    let outside = bound.outer
        * tail_integral(bound.kappa, spec.a, spec.a, C64::new(s.k, 0.0), C64::new(s.cos_coeff, 0.0), C64::new(s.sin_coeff, 0.0)).re;
    2.0 * (inside + outside)
}

/// V₁₁, V₁ₖ and V_{kk′} on a k-grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatrixElements {
    pub v11: f64,
    pub k_grid: Vec<f64>,
    pub v1k: Vec<f64>,
    /// V₁∫_{−b}^{b} ψ_k ψ_k′ dx, row-major over the grid.
    pub vkk: Vec<f64>,
}

/// Log-spaced points on [k_min, k_split] followed by a linear tail to k_max.
pub fn default_k_grid(k_min: f64, k_split: f64, k_max: f64, n_log: usize, n_lin: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..n_log)
        .map(|i| k_min * (k_split / k_min).powf(i as f64 / n_log.max(1) as f64))
        .collect();
    out.extend((0..=n_lin).map(|i| k_split + (k_max - k_split) * i as f64 / n_lin.max(1) as f64));
    out
}

pub fn matrix_elements(spec: &BarrierSpec, k_grid: &[f64]) -> Result<MatrixElements> {
    let bound = solve_bound_state(spec)?;
    let states = k_grid.iter().map(|&k| even_scattering_state(spec, k)).collect::<Result<Vec<_>>>()?;
    let v11 = -spec.v1 * bound.outer * bound.outer * (-2.0 * bound.kappa * (spec.b - spec.a)).exp() / bound.kappa;
    let v1k = k_grid.iter().map(|&k| coupling_complex(spec, &bound, C64::new(k, 0.0)).re).collect();
    let n = states.len();
    let mut vkk = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = spec.v1 * scattering_overlap(spec, &states[i], &states[j], spec.b);
            vkk[i * n + j] = v;
            vkk[j * n + i] = v;
        }
    }
    Ok(MatrixElements { v11, k_grid: k_grid.to_vec(), v1k, vkk })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BarrierResonance {
    pub e1: f64,
    pub v11: f64,
    pub k_tilde: f64,
    /// Γ_b = 2πμ/(ħ²k̃)·V₁k̃V_k̃1.
    pub width: f64,
    /// Γ_b/ħ.
    pub survival_rate: f64,
    /// E₁ + V₁₁ − (V₀ − V₁): the level above the shifted threshold.
    pub level_above_threshold: f64,
}

impl BarrierResonance {
    /// e^{−Γ_b t/ħ}.
    pub fn survival(&self, t: f64) -> Result<f64> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        Ok((-self.survival_rate * t).exp())
    }
}

pub fn resonance_width(spec: &BarrierSpec) -> Result<BarrierResonance> {
    let bound = solve_bound_state(spec)?;
    let v11 = matrix_elements(spec, &[])?.v11;
    let level = bound.energy + v11;
    let threshold = spec.v0 - spec.v1;
    if level <= threshold {
        return Err(Error::ClosedChannel { level, threshold });
    }
    let k_tilde = spec.k_of(level - threshold);
    let v = coupling_complex(spec, &bound, C64::new(k_tilde, 0.0)).re;
    let width = 2.0 * PI * spec.mu / (spec.hbar * spec.hbar * k_tilde) * v * v;
    Ok(BarrierResonance {
        e1: bound.energy,
        v11,
        k_tilde,
        width,
        survival_rate: width / spec.hbar,
        level_above_threshold: level - threshold,
    })
}

/// The barrier problem as a generic model: Ω = E₁ + V₁₁ − (V₀ − V₁),
/// ω = ħ²k²/2μ, V(ω) = V₁ₖ√(dk/dω), coupling constant V₁.
/// The default contour is scaled to Ω with depth min(0.5, Ω/2).
pub fn mapped_model(spec: &BarrierSpec, contour: Option<ContourSpec>) -> Result<ModelSpec> {
    let res = resonance_width(spec)?;
    let bound = solve_bound_state(spec)?;
    let omega = res.level_above_threshold;
    let contour = contour.unwrap_or_else(|| ContourSpec::for_level(omega).with_depth(f64::min(0.5, 0.5 * omega)));
    let s = *spec;
    // V₁ₖ is linear in V₁: the profile is taken at V₁ = 1 and the coupling carries V₁.
    let unit = BarrierSpec { v1: 1.0, ..s };
    let profile: Profile = Arc::new(move |w: C64| {
        let k = (2.0 * s.mu * w).sqrt() / s.hbar;
        let jac = (s.mu / (s.hbar * s.hbar * k)).sqrt();
        coupling_complex(&unit, &bound, k) * jac
    });
    // Singularities of the profile sit at the zeros of k²cos²qa + q²sin²qa,
    // far below the shallow contour used here; the depth bound is the contour's own.
    let ff = FormFactor::custom(vec![s.a, s.b, s.v0, s.mu, s.hbar], s.v1, 2.0 * contour.depth, profile);
    ModelSpec::new(omega, ff, None, contour)
}

/// Γ_b as the barrier is widened: (b − a, Γ_b) pairs.
pub fn width_sweep(spec: &BarrierSpec, widths: &[f64]) -> Result<Vec<(f64, f64)>> {
    widths
        .iter()
        .map(|&w| {
            let s = BarrierSpec { b: spec.a + w, ..*spec };
            Ok((w, resonance_width(&s)?.width))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_well() -> BarrierSpec {
        BarrierSpec::default()
    }

    #[test]
    fn invariants_are_enforced() {
        let ok = unit_well();
        assert!(ok.validate().is_ok());
        let deep = BarrierSpec { v0: 2.0, ..ok };
        assert!(matches!(deep.validate(), Err(Error::Barrier(_))));
        let close = BarrierSpec { b: 3.0, ..ok };
        assert!(close.validate().is_err());
        assert!(BarrierSpec { min_separation: 2.0, ..close }.validate().is_ok());
        assert!(BarrierSpec { v1: 1.0, ..ok }.validate().is_err());
        assert!(BarrierSpec { v1: -0.1, ..ok }.validate().is_err());
        assert!(BarrierSpec { mu: 0.0, ..ok }.validate().is_err());
    }

    #[test]
    fn bound_state_matches_newton_on_the_sine_form() {
        let s = unit_well();
        let b = solve_bound_state(&s).unwrap();
        assert!(b.residual <= 1e-10);
        // p sin(pa) − κ cos(pa) = 0 solved independently.
        let g = |e: f64| {
            let p = (2.0 * e).sqrt();
            let k = (2.0 * (1.0 - e)).sqrt();
            p * p.sin() - k * p.cos()
        };
        let mut e = 0.4;
        for _ in 0..50 {
            let h = 1e-7;
            e -= g(e) / ((g(e + h) - g(e - h)) / (2.0 * h));
        }
        assert!((b.energy - e).abs() < 1e-12, "{} vs {e}", b.energy);
        assert!((b.energy - 0.396_102_166_136_605).abs() < 1e-12, "{:.15}", b.energy);
        assert!((b.norm_sqr(s.a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shallow_wells_bind_weakly() {
        let mut last = 0.0;
        for v0 in [0.5, 0.1, 0.01, 0.001] {
            let s = BarrierSpec { v0, v1: 0.0, ..unit_well() };
            let b = solve_bound_state(&s).unwrap();
            let binding = (v0 - b.energy) / v0;
            assert!(binding > 0.0 && (last == 0.0 || binding < last));
            last = binding;
        }
        assert!(last < 0.01);
    }

    #[test]
    fn bound_state_is_orthogonal_to_the_continuum() {
        let s = unit_well();
        let b = solve_bound_state(&s).unwrap();
        for k in [0.05, 0.3, 1.0, 2.7, 8.0] {
            let st = even_scattering_state(&s, k).unwrap();
            assert!(bound_scattering_overlap(&s, &b, &st).abs() <= 1e-10, "k={k}");
        }
        assert!(even_scattering_state(&s, 0.0).is_err());
        assert!(even_scattering_state(&s, -1.0).is_err());
    }

    #[test]
    fn wavefunctions_are_continuous_and_smooth_at_the_edge() {
        let s = unit_well();
        let b = solve_bound_state(&s).unwrap();
        let st = even_scattering_state(&s, 1.3).unwrap();
        let h = 1e-7;
        let fs: [&dyn Fn(f64) -> f64; 2] = [&|x| b.psi(x, s.a), &|x| st.psi(x, s.a)];
        for f in fs {
            assert!((f(s.a - 1e-12) - f(s.a + 1e-12)).abs() < 1e-10);
            let dl = (f(s.a - h) - f(s.a - 2.0 * h)) / h;
            let dr = (f(s.a + 2.0 * h) - f(s.a + h)) / h;
            assert!((dl - dr).abs() < 1e-5);
        }
        assert!((st.cos_coeff.hypot(st.sin_coeff) - 1.0 / PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn phase_shift_vanishes_without_a_well() {
        let mut prev = f64::INFINITY;
        for v0 in [0.1, 1e-2, 1e-4] {
            let s = BarrierSpec { v0, v1: 0.0, ..unit_well() };
            let d = even_scattering_state(&s, 1.0).unwrap().phase_shift().abs();
            assert!(d < prev);
            prev = d;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn no_drop_no_coupling() {
        let s = BarrierSpec { v1: 0.0, ..unit_well() };
        let m = matrix_elements(&s, &[0.5, 1.0]).unwrap();
        assert_eq!(m.v11, 0.0);
        assert!(m.v1k.iter().chain(&m.vkk).all(|v| *v == 0.0));
        assert!(matches!(resonance_width(&s), Err(Error::ClosedChannel { .. })));
    }

    #[test]
    fn level_shift_is_negative_and_kernel_symmetric() {
        let s = unit_well();
        let m = matrix_elements(&s, &default_k_grid(0.01, 0.5, 4.0, 6, 6)).unwrap();
        assert!(m.v11 < 0.0);
        let n = m.k_grid.len();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(m.vkk[i * n + j], m.vkk[j * n + i]);
            }
        }
    }

    #[test]
    fn survival_law() {
        let r = resonance_width(&unit_well()).unwrap();
        assert!(r.width > 0.0 && r.k_tilde > 0.0);
        assert_eq!(r.survival(0.0).unwrap(), 1.0);
        assert!((r.survival(1.0 / r.survival_rate).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!(r.survival(-1.0).is_err());
    }
}
