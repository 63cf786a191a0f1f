//! Brute-force ground truth: the Hamiltonian restricted to a finite real
//! energy grid, diagonalized densely and propagated exactly.
//!
//! Basis ordering is `[|1⟩, |ω_1⟩, …, |ω_n⟩]`, continuum kets carrying the
//! quadrature weight √Δω so that the matrix is Hermitian in the plain
//! Euclidean inner product.

use faer::complex_native::c64;
use faer::prelude::*;
use faer::{Mat, Side as FaerSide};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::vector::AnalyticVector;

/// Smallest grid accepted by [`discretize`].
pub const MIN_LEVELS: usize = 100;

const HERMITIAN_TOL: f64 = 1e-14;

fn to_faer(z: C64) -> c64 {
    c64::new(z.re, z.im)
}

fn from_faer(z: c64) -> C64 {
    C64::new(z.re, z.im)
}

/// Eigenvectors are stored real when the assembled matrix is real symmetric,
/// which halves the cost of the dense solve for the registry families.
#[derive(Clone, Debug)]
enum Transform {
    Real(Mat<f64>),
    Complex(Mat<c64>),
}

/// Where an oracle result came from, so logs can be replayed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub n_levels: usize,
    pub omega_max: f64,
}

/// Finite Hermitian discretization of H together with its eigendecomposition.
#[derive(Clone, Debug)]
pub struct DiscretizedSystem {
    provenance: Provenance,
    omega: f64,
    grid: Vec<f64>,
    spacing: f64,
    couplings: Vec<C64>,
    kernel: Option<Vec<C64>>,
    eigenvalues: Vec<f64>,
    transform: Transform,
}

/// Assembles the row-major Hamiltonian matrix; kept separate so the
/// Hermiticity check sees exactly what gets diagonalized.
fn assemble(omega: f64, grid: &[f64], couplings: &[C64], kernel: Option<&[C64]>) -> Vec<C64> {
    let n = grid.len();
    let dim = n + 1;
    let mut h = vec![C64::new(0.0, 0.0); dim * dim];
    h[0] = C64::new(omega, 0.0);
    for i in 0..n {
        h[(i + 1) * dim] = couplings[i];
        h[i + 1] = couplings[i].conj();
        h[(i + 1) * dim + i + 1] = C64::new(grid[i], 0.0);
    }
    if let Some(k) = kernel {
        for i in 0..n {
            for j in 0..n {
                h[(i + 1) * dim + j + 1] += k[i * n + j];
            }
        }
    }
    h
}

/// Discretizes the model on the midpoint grid ω_i = (i − ½)Δω, Δω = omega_max/n.
///
/// The kernel is evaluated as given, without symmetrization: an asymmetric
/// kernel is an input error, not something to hide.
pub fn discretize(model: &ModelSpec, n: usize, omega_max: f64) -> Result<DiscretizedSystem> {
    if n < MIN_LEVELS {
        return Err(Error::Config(format!("oracle grid needs at least {MIN_LEVELS} levels, got {n}")));
    }
    if !(omega_max.is_finite() && omega_max > 0.0) {
        return Err(Error::Config(format!("oracle cutoff must be positive, got {omega_max}")));
    }
    let spacing = omega_max / n as f64;
    let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * spacing).collect();
    let root = spacing.sqrt();
    let couplings: Vec<C64> = grid.iter().map(|&w| model.v(C64::new(w, 0.0)) * root).collect();
    let kernel = model.has_kernel().then(|| {
        let mut k = Vec::with_capacity(n * n);
        for &wi in &grid {
            for &wj in &grid {
                k.push(model.v2(C64::new(wi, 0.0), C64::new(wj, 0.0)) * spacing);
            }
        }
        k
    });
    let omega = model.omega_level();
    let h = assemble(omega, &grid, &couplings, kernel.as_deref());
    let dim = n + 1;

    let scale = h.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let mut deviation: f64 = 0.0;
    let mut real = true;
    for i in 0..dim {
        for j in i..dim {
            let (a, b) = (h[i * dim + j], h[j * dim + i]);
            deviation = deviation.max((a - b.conj()).norm());
            real &= a.im == 0.0 && b.im == 0.0;
        }
    }
    if deviation > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian(deviation));
    }
    for z in &h {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Config("non-finite matrix element in oracle discretization".into()));
        }
    }

    let (eigenvalues, transform) = if real {
        let m = Mat::<f64>::from_fn(dim, dim, |i, j| h[i * dim + j].re);
        let evd = m.selfadjoint_eigendecomposition(FaerSide::Lower);
        let vals = (0..dim).map(|k| evd.s().column_vector().read(k)).collect();
        (vals, Transform::Real(evd.u().to_owned()))
    } else {
        let m = Mat::<c64>::from_fn(dim, dim, |i, j| to_faer(h[i * dim + j]));
        let evd = m.selfadjoint_eigendecomposition(FaerSide::Lower);
        let vals = (0..dim).map(|k| evd.s().column_vector().read(k).re).collect();
        (vals, Transform::Complex(evd.u().to_owned()))
    };

    Ok(DiscretizedSystem {
        provenance: Provenance { n_levels: n, omega_max },
        omega,
        grid,
        spacing,
        couplings,
        kernel,
        eigenvalues,
        transform,
    })
}

impl DiscretizedSystem {
    pub fn dimension(&self) -> usize {
        self.grid.len() + 1
    }

    /// Row of |1⟩ in the matrix.
    pub fn level_index(&self) -> usize {
        0
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// V(ω_i)√Δω.
    pub fn couplings(&self) -> &[C64] {
        &self.couplings
    }

    /// V₂(ω_i, ω_j)Δω, row-major, when the model has a kernel.
    pub fn kernel(&self) -> Option<&[C64]> {
        self.kernel.as_deref()
    }

    /// Ascending eigenvalues of the discretized H.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Row-major H.
    pub fn hamiltonian(&self) -> Vec<C64> {
        assemble(self.omega, &self.grid, &self.couplings, self.kernel.as_deref())
    }

    /// Entry (i, k) of the unitary whose columns are eigenvectors.
    pub fn transform_entry(&self, i: usize, k: usize) -> C64 {
        match &self.transform {
            Transform::Real(u) => C64::new(u.read(i, k), 0.0),
            Transform::Complex(u) => from_faer(u.read(i, k)),
        }
    }

    /// max |(U†U − I)_{ij}|.
    pub fn unitarity_defect(&self) -> f64 {
        let dim = self.dimension();
        match &self.transform {
            Transform::Real(u) => {
                let g = u.transpose() * u;
                max_identity_defect(dim, |i, j| C64::new(g.read(i, j), 0.0))
            }
            Transform::Complex(u) => {
                let g = u.adjoint() * u;
                max_identity_defect(dim, |i, j| from_faer(g.read(i, j)))
            }
        }
    }

    /// Grid representation of a state: (d, Φ(ω_i)√Δω).
    pub fn sample(&self, state: &AnalyticVector) -> Vec<C64> {
        let root = self.spacing.sqrt();
        std::iter::once(state.d_component).chain(self.grid.iter().map(|&w| state.value(w) * root)).collect()
    }

    /// U† v.
    fn to_eigenbasis(&self, v: &[C64]) -> Vec<C64> {
        let dim = self.dimension();
        match &self.transform {
            Transform::Real(u) => (0..dim)
                .map(|k| (0..dim).map(|i| u.read(i, k) * v[i]).sum())
                .collect(),
            Transform::Complex(u) => (0..dim)
                .map(|k| (0..dim).map(|i| from_faer(u.read(i, k)).conj() * v[i]).sum())
                .collect(),
        }
    }

    /// U c.
    fn from_eigenbasis(&self, c: &[C64]) -> Vec<C64> {
        let dim = self.dimension();
        match &self.transform {
            Transform::Real(u) => (0..dim)
                .map(|i| (0..dim).map(|k| u.read(i, k) * c[k]).sum())
                .collect(),
            Transform::Complex(u) => (0..dim)
                .map(|i| (0..dim).map(|k| from_faer(u.read(i, k)) * c[k]).sum())
                .collect(),
        }
    }

    fn check_len(&self, found: usize) -> Result<()> {
        let expected = self.dimension();
        if found == expected {
            Ok(())
        } else {
            Err(Error::Dimension { expected, found })
        }
    }

    /// e^{−iHt} v.
    pub fn propagate(&self, initial: &[C64], t: f64) -> Result<Vec<C64>> {
        self.check_len(initial.len())?;
        let c: Vec<C64> = self
            .to_eigenbasis(initial)
            .into_iter()
            .zip(&self.eigenvalues)
            .map(|(c, &e)| c * C64::new(0.0, -e * t).exp())
            .collect();
        Ok(self.from_eigenbasis(&c))
    }

    /// Per-eigenvalue weights conj(U†ψ)_k (U†φ)_k, reused across many times.
    pub fn spectral_weights(&self, psi: &[C64], phi: &[C64]) -> Result<Vec<C64>> {
        self.check_len(psi.len())?;
        self.check_len(phi.len())?;
        let (a, b) = (self.to_eigenbasis(psi), self.to_eigenbasis(phi));
        Ok(a.iter().zip(&b).map(|(x, y)| x.conj() * y).collect())
    }

    /// Σ_k e^{−iE_k t} w_k.
    pub fn amplitude_from_weights(&self, weights: &[C64], t: f64) -> C64 {
        weights.iter().zip(&self.eigenvalues).map(|(w, &e)| w * C64::new(0.0, -e * t).exp()).sum()
    }

    /// ⟨ψ|e^{−iHt}|φ⟩ for grid vectors.
    pub fn amplitude(&self, psi: &[C64], phi: &[C64], t: f64) -> Result<C64> {
        Ok(self.amplitude_from_weights(&self.spectral_weights(psi, phi)?, t))
    }

    /// [H, O] = HO − OH for a row-major dense O.
    pub fn commutator_apply(&self, o: &[C64]) -> Result<Vec<C64>> {
        let dim = self.dimension();
        if o.len() != dim * dim {
            return Err(Error::Dimension { expected: dim * dim, found: o.len() });
        }
        let h = self.hamiltonian();
        let hm = Mat::<c64>::from_fn(dim, dim, |i, j| to_faer(h[i * dim + j]));
        let om = Mat::<c64>::from_fn(dim, dim, |i, j| to_faer(o[i * dim + j]));
        let c = &hm * &om - &om * &hm;
        let mut out = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                out.push(from_faer(c.read(i, j)));
            }
        }
        Ok(out)
    }
}

fn max_identity_defect(dim: usize, g: impl Fn(usize, usize) -> C64) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let target = if i == j { 1.0 } else { 0.0 };
            m = m.max((g(i, j) - target).norm());
        }
    }
    m
}

/// ⟨ψ|e^{−iHt}|φ⟩ from a fresh discretization. For many times, build the
/// system once with [`discretize`] and reuse [`DiscretizedSystem::spectral_weights`].
pub fn oracle_amplitude(
    model: &ModelSpec,
    psi: &AnalyticVector,
    phi: &AnalyticVector,
    t: f64,
    n_levels: usize,
    omega_max: f64,
) -> Result<C64> {
    let sys = discretize(model, n_levels, omega_max)?;
    sys.amplitude(&sys.sample(psi), &sys.sample(phi), t)
}

/// The resonance as an eigenvalue of the non-Hermitian matrix obtained by
/// putting the continuum on the contour nodes: diagonal (Ω, z_j), couplings
/// V̄(z_j)√w_j and V(z_i)√w_i, kernel √w_i V₂(z_i, z_j) √w_j.
///
/// Found by shifted inverse iteration from `shift`, so only one LU
/// factorization is needed; the other eigenvalues are the nodes themselves
/// (perturbed) and sit at least the contour depth away from the pole.
pub fn deformed_eigenvalue(model: &ModelSpec, shift: C64, tol: f64, max_iter: usize) -> Result<C64> {
    let grid = model.grid()?;
    let (nodes, weights) = (grid.nodes(), grid.weights());
    let n = nodes.len();
    let dim = n + 1;
    let roots: Vec<C64> = weights.iter().map(|w| w.sqrt()).collect();
    let entry = |i: usize, j: usize| -> C64 {
        let mut h = match (i, j) {
            (0, 0) => C64::new(model.omega_level(), 0.0),
            (0, j) => model.vbar(nodes[j - 1]) * roots[j - 1],
            (i, 0) => model.v(nodes[i - 1]) * roots[i - 1],
            (i, j) if i == j => nodes[i - 1],
            _ => C64::new(0.0, 0.0),
        };
        if i > 0 && j > 0 && model.has_kernel() {
            h += roots[i - 1] * model.v2(nodes[i - 1], nodes[j - 1]) * roots[j - 1];
        }
        h
    };
    let shifted = Mat::<c64>::from_fn(dim, dim, |i, j| {
        let d = if i == j { shift } else { C64::new(0.0, 0.0) };
        to_faer(entry(i, j) - d)
    });
    let lu = shifted.partial_piv_lu();
    let mut x = Mat::<c64>::from_fn(dim, 1, |i, _| if i == 0 { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) });
    let mut estimate = shift;
    let mut residual = f64::INFINITY;
    for iter in 0..max_iter {
        let y = lu.solve(&x);
        // Rayleigh-type quotient on the |1⟩ component, which dominates the resonance.
        let ratio = from_faer(x.read(0, 0)) / from_faer(y.read(0, 0));
        let next = shift + ratio;
        let norm = (0..dim).map(|i| from_faer(y.read(i, 0)).norm_sqr()).sum::<f64>().sqrt();
        x = Mat::<c64>::from_fn(dim, 1, |i, _| to_faer(from_faer(y.read(i, 0)) / norm));
        residual = (next - estimate).norm();
        estimate = next;
        if iter > 0 && residual <= tol {
            return Ok(estimate);
        }
    }
    Err(Error::NoConvergence { method: "inverse iteration", iterations: max_iter, last: estimate, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::friedrichs::find_pole;
    use crate::model::FormFactor2;

    #[test]
    fn free_matrix_is_diagonal() {
        let m = ModelSpec::default_with_coupling(0.0);
        let s = discretize(&m, 120, 20.0).unwrap();
        assert_eq!(s.dimension(), 121);
        let mut expected: Vec<f64> = s.grid().to_vec();
        expected.push(1.0);
        expected.sort_by(f64::total_cmp);
        for (a, b) in expected.iter().zip(s.eigenvalues()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn small_grids_are_rejected() {
        let m = ModelSpec::default_with_coupling(0.1);
        assert!(matches!(discretize(&m, 50, 20.0), Err(Error::Config(_))));
    }

    #[test]
    fn propagation_identities() {
        let m = ModelSpec::default_with_coupling(0.1);
        let s = discretize(&m, 200, 20.0).unwrap();
        assert!(s.unitarity_defect() < 1e-12);
        let v = s.sample(&AnalyticVector::level());
        let same = s.propagate(&v, 0.0).unwrap();
        for (a, b) in v.iter().zip(&same) {
            assert!((a - b).norm() < 1e-12);
        }
        for t in [0.5, 7.0, 40.0] {
            let p = s.propagate(&v, t).unwrap();
            let norm: f64 = p.iter().map(|z| z.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        let a0 = s.amplitude(&v, &v, 0.0).unwrap();
        assert!((a0 - 1.0).norm() < 1e-13);
        assert!(matches!(s.propagate(&v[1..], 1.0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn commutator_with_identity_vanishes() {
        let m = ModelSpec::default_with_coupling(0.1);
        let s = discretize(&m, 100, 20.0).unwrap();
        let dim = s.dimension();
        let id: Vec<C64> = (0..dim * dim)
            .map(|k| if k / dim == k % dim { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
            .collect();
        let c = s.commutator_apply(&id).unwrap();
        assert!(c.iter().all(|z| *z == C64::new(0.0, 0.0)));
        assert!(s.commutator_apply(&id[1..]).is_err());
    }

    #[test]
    fn asymmetric_kernel_is_rejected() {
        use std::sync::Arc;
        let k = FormFactor2::custom("skew", 0.1, 10.0, Arc::new(|z: C64, w: C64| z - w * 2.0));
        let m = ModelSpec::default_with_coupling(0.1).with_kernel(Some(k)).unwrap();
        assert!(matches!(discretize(&m, 100, 20.0), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn complex_kernels_take_the_complex_path() {
        use std::sync::Arc;
        // i(z − w) is Hermitian on the real axis but has imaginary entries.
        let k = FormFactor2::custom("twist", 0.05, 10.0, Arc::new(|z: C64, w: C64| C64::new(0.0, 1.0) * (z - w) * (-(z + w)).exp()));
        let m = ModelSpec::default_with_coupling(0.1).with_kernel(Some(k)).unwrap();
        let s = discretize(&m, 100, 20.0).unwrap();
        assert!(s.unitarity_defect() < 1e-12);
        let v = s.sample(&AnalyticVector::level());
        let p = s.propagate(&v, 3.0).unwrap();
        let norm: f64 = p.iter().map(|z| z.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deformed_matrix_reproduces_the_pole() {
        let m = ModelSpec::default_with_coupling(0.1);
        let exact = find_pole(&m, 1e-14, 200).unwrap().lambda_pole;
        let ev = deformed_eigenvalue(&m, C64::new(1.0, 0.0), 1e-14, 100).unwrap();
        assert!((ev - exact).norm() < 1e-11, "{ev} vs {exact}");
    }
}
