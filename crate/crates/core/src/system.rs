//! A pole eigenpair plus a continuum of eigenpairs on Γ, and the
//! reconstruction rules built from them.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::contour::ContourGrid;
use crate::error::Result;
use crate::vector::VectorCoeffs;

/// Right and left eigenvectors for the continuum eigenvalue `u` (a node of Γ).
#[derive(Clone, Debug)]
pub struct ContinuumPair {
    pub u: C64,
    pub weight: C64,
    pub right: VectorCoeffs,
    pub left: VectorCoeffs,
}

/// Spectral data on a truncated contour: I_Γ = |f_Ω⟩⟨f̃_Ω| + ∫_Γ du |f_u⟩⟨f̃_u|.
#[derive(Clone, Debug)]
pub struct BiorthogonalSystem {
    grid: ContourGrid,
    pole: C64,
    right: VectorCoeffs,
    left: VectorCoeffs,
    continuum: Vec<ContinuumPair>,
}

/// ⟨Ψ|f_Ω⟩⟨f̃_Ω|Φ⟩ and ⟨Ψ|f_u⟩⟨f̃_u|Φ⟩ at each node.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralOverlaps {
    pub pole_term: C64,
    pub continuum: Vec<C64>,
}

/// Residuals of the pairwise orthogonality relations.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BiorthogonalityReport {
    /// |⟨f̃_Ω|f_Ω⟩ − 1|.
    pub discrete_norm: f64,
    /// max over sampled u of |⟨f̃_Ω|f_u⟩| and |⟨f̃_u|f_Ω⟩|.
    pub cross: f64,
}

impl BiorthogonalSystem {
    pub fn new(
        grid: ContourGrid,
        pole: C64,
        right: VectorCoeffs,
        left: VectorCoeffs,
        continuum: Vec<ContinuumPair>,
    ) -> Self {
        Self { grid, pole, right, left, continuum }
    }

    pub fn grid(&self) -> &ContourGrid {
        &self.grid
    }

    pub fn pole(&self) -> C64 {
        self.pole
    }

    pub fn discrete_right(&self) -> &VectorCoeffs {
        &self.right
    }

    pub fn discrete_left(&self) -> &VectorCoeffs {
        &self.left
    }

    pub fn continuum(&self) -> &[ContinuumPair] {
        &self.continuum
    }

    /// Spectral components of the bilinear form ⟨bra|·|ket⟩.
    pub fn overlaps(&self, bra: &VectorCoeffs, ket: &VectorCoeffs) -> Result<SpectralOverlaps> {
        let g = &self.grid;
        let pole_term = VectorCoeffs::pair(bra, &self.right, g)? * VectorCoeffs::pair(&self.left, ket, g)?;
        let continuum = self
            .continuum
            .par_iter()
            .map(|p| Ok(VectorCoeffs::pair(bra, &p.right, g)? * VectorCoeffs::pair(&p.left, ket, g)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(SpectralOverlaps { pole_term, continuum })
    }

    /// Σ over the spectrum of f(λ)·(spectral component).
    pub fn spectral_sum(&self, ov: &SpectralOverlaps, f: impl Fn(C64) -> C64) -> C64 {
        let cont: C64 = self.continuum.iter().zip(&ov.continuum).map(|(p, c)| p.weight * f(p.u) * c).sum();
        f(self.pole) * ov.pole_term + cont
    }

    /// ⟨Ψ|Φ⟩ through the completeness relation.
    pub fn reconstruct_identity(&self, bra: &VectorCoeffs, ket: &VectorCoeffs) -> Result<C64> {
        let ov = self.overlaps(bra, ket)?;
        Ok(self.spectral_sum(&ov, |_| C64::new(1.0, 0.0)))
    }

    /// ⟨Ψ|H|Φ⟩ through the spectral decomposition.
    pub fn reconstruct_hamiltonian(&self, bra: &VectorCoeffs, ket: &VectorCoeffs) -> Result<C64> {
        let ov = self.overlaps(bra, ket)?;
        Ok(self.spectral_sum(&ov, |l| l))
    }

    /// Orthogonality relations between the discrete pair and the continuum
    /// pairs at the node indices in `sample`.
    pub fn biorthogonality(&self, sample: &[usize]) -> Result<BiorthogonalityReport> {
        let g = &self.grid;
        let discrete_norm = (VectorCoeffs::pair(&self.left, &self.right, g)? - 1.0).norm();
        let mut cross: f64 = 0.0;
        for &k in sample {
            let p = &self.continuum[k];
            cross = cross.max(VectorCoeffs::pair(&self.left, &p.right, g)?.norm());
            cross = cross.max(VectorCoeffs::pair(&p.left, &self.right, g)?.norm());
        }
        Ok(BiorthogonalityReport { discrete_norm, cross })
    }
}
