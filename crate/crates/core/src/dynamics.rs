//! Transition and survival amplitudes from a biorthogonal system:
//! A(t) = e^{−iλ_Ω t}⟨Ψ|f_Ω⟩⟨f̃_Ω|Φ⟩ + ∫_Γ du e^{−iut}⟨Ψ|f_u⟩⟨f̃_u|Φ⟩.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::oracle::DiscretizedSystem;
use crate::system::{BiorthogonalSystem, SpectralOverlaps};
use crate::vector::AnalyticVector;

/// Points in [`default_time_grid`].
pub const DEFAULT_TIME_POINTS: usize = 200;

/// Span of [`default_time_grid`] in units of the inverse golden-rule width.
pub const DEFAULT_SPAN_WIDTHS: f64 = 5.0;

fn phase(lambda: C64, t: f64) -> C64 {
    (C64::new(0.0, -t) * lambda).exp()
}

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        Err(Error::NegativeTime(t))
    } else {
        Ok(())
    }
}

/// Overlaps of one (Ψ, Φ) pair, computed once and evaluated at any t ≥ 0.
#[derive(Clone, Debug)]
pub struct Propagator<'a> {
    system: &'a BiorthogonalSystem,
    overlaps: SpectralOverlaps,
}

impl<'a> Propagator<'a> {
    pub fn new(system: &'a BiorthogonalSystem, psi: &AnalyticVector, phi: &AnalyticVector) -> Result<Self> {
        let overlaps = system.overlaps(&psi.as_bra()?, &phi.as_ket()?)?;
        Ok(Self { system, overlaps })
    }

    pub fn overlaps(&self) -> &SpectralOverlaps {
        &self.overlaps
    }

    /// Full amplitude at time t.
    pub fn at(&self, t: f64) -> Result<C64> {
        check_time(t)?;
        Ok(self.system.spectral_sum(&self.overlaps, |l| phase(l, t)))
    }

    /// Only the pole contribution e^{−iλ_Ω t}⟨Ψ|f_Ω⟩⟨f̃_Ω|Φ⟩.
    pub fn pole_part(&self, t: f64) -> Result<C64> {
        check_time(t)?;
        Ok(phase(self.system.pole(), t) * self.overlaps.pole_term)
    }

    /// The contour integral alone.
    pub fn background(&self, t: f64) -> Result<C64> {
        Ok(self.at(t)? - self.pole_part(t)?)
    }
}

/// ⟨Ψ|e^{−iHt}|Φ⟩ through the spectral decomposition.
pub fn transition_amplitude(
    system: &BiorthogonalSystem,
    psi: &AnalyticVector,
    phi: &AnalyticVector,
    t: f64,
) -> Result<C64> {
    check_time(t)?;
    Propagator::new(system, psi, phi)?.at(t)
}

/// Amplitudes and probabilities on a time grid.
#[derive(Clone, Debug, Serialize)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub amplitude: Vec<C64>,
}

impl DecayCurve {
    fn from_amplitudes(times: &[f64], amplitude: Vec<C64>) -> Self {
        let survival = amplitude.iter().map(|a| a.norm_sqr()).collect();
        Self { times: times.to_vec(), survival, amplitude }
    }

    /// Least-squares slope of ln(survival) over times in [t0, t1].
    pub fn log_slope(&self, t0: f64, t1: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.survival)
            .filter(|(t, s)| **t >= t0 && **t <= t1 && **s > 0.0)
            .map(|(t, s)| (*t, s.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let (mt, ml) = pts.iter().fold((0.0, 0.0), |(a, b), (t, l)| (a + t / n, b + l / n));
        let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (t, l)| (a + (t - mt) * (l - ml), b + (t - mt) * (t - mt)));
        Some(num / den)
    }
}

fn check_grid(times: &[f64]) -> Result<()> {
    times.iter().try_for_each(|&t| check_time(t))
}

/// Survival of the unstable level, |⟨1|e^{−iHt}|1⟩|².
pub fn survival_curve(system: &BiorthogonalSystem, times: &[f64]) -> Result<DecayCurve> {
    check_grid(times)?;
    let level = AnalyticVector::level();
    let prop = Propagator::new(system, &level, &level)?;
    let amps = times.par_iter().map(|&t| prop.at(t)).collect::<Result<Vec<_>>>()?;
    Ok(DecayCurve::from_amplitudes(times, amps))
}

/// Survival from the pole term alone, |⟨1|f_Ω⟩⟨f̃_Ω|1⟩|² e^{2 Im λ_Ω t}.
pub fn pole_survival_curve(system: &BiorthogonalSystem, times: &[f64]) -> Result<DecayCurve> {
    check_grid(times)?;
    let level = AnalyticVector::level();
    let prop = Propagator::new(system, &level, &level)?;
    let amps = times.iter().map(|&t| prop.pole_part(t)).collect::<Result<Vec<_>>>()?;
    Ok(DecayCurve::from_amplitudes(times, amps))
}

/// The golden-rule law e^{−2π|V_Ω|² t}.
pub fn exponential_approx(model: &ModelSpec, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok((-model.golden_rule_width() * t).exp())
}

/// 200 equally spaced times on [0, 5/Γ_w].
pub fn default_time_grid(model: &ModelSpec) -> Result<Vec<f64>> {
    time_grid(model, DEFAULT_SPAN_WIDTHS, DEFAULT_TIME_POINTS)
}

/// `points` equally spaced times on [0, span/Γ_w].
pub fn time_grid(model: &ModelSpec, span: f64, points: usize) -> Result<Vec<f64>> {
    let width = model.golden_rule_width();
    if width <= 0.0 {
        return Err(Error::Config("the level does not decay; supply an explicit time grid".into()));
    }
    if points < 2 {
        return Err(Error::Config("a time grid needs at least two points".into()));
    }
    let end = span / width;
    Ok((0..points).map(|k| end * k as f64 / (points - 1) as f64).collect())
}

/// Survival of |1⟩ in a finite discretization, over a time grid.
pub fn oracle_survival_curve(oracle: &DiscretizedSystem, times: &[f64]) -> Result<DecayCurve> {
    check_grid(times)?;
    let v = oracle.sample(&AnalyticVector::level());
    let w = oracle.spectral_weights(&v, &v)?;
    let amps = times.par_iter().map(|&t| oracle.amplitude_from_weights(&w, t)).collect();
    Ok(DecayCurve::from_amplitudes(times, amps))
}
