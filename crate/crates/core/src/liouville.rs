//! Observables and state functionals in the five-block basis
//! |1) = |1⟩⟨1|, |ω) = |ω⟩⟨ω|, |ωω′) = |ω⟩⟨ω′|, |ω1) = |ω⟩⟨1|, |1ω′) = |1⟩⟨ω′|,
//! the commutator superoperator L = [H, ·] with its left index continued onto
//! Γ̄ and its right index onto Γ, the perturbative spectrum of L, and the
//! evolution (ρ_t|O) = (ρ_0|e^{iLt}|O).
//!
//! Regular blocks are sampled at contour nodes; a delta on a node is stored
//! as 1/w at that node so that quadrature pairings reproduce it exactly.
//! Atoms on the diagonal block are kept as (position, weight) pairs and
//! paired analytically.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::contour::ContourGrid;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Profile};
use crate::vector::Atom;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Contour nodes used by default for the Γ̄ × Γ blocks.
pub const LIOUVILLE_NODES: usize = 100;

/// Node sets for the left index (Γ̄, or the real axis) and the right index
/// (Γ, or the real axis), with quadrature weights.
#[derive(Clone, Debug)]
pub struct BlockGrid {
    upper: Vec<C64>,
    upper_w: Vec<C64>,
    lower: Vec<C64>,
    lower_w: Vec<C64>,
}

impl BlockGrid {
    /// Left index on Γ̄ = conj(Γ), right index on Γ; node k of Γ̄ is the
    /// mirror image of node k of Γ.
    pub fn contour(grid: &ContourGrid) -> Self {
        let up = grid.conjugate();
        Self {
            upper: up.nodes().to_vec(),
            upper_w: up.weights().to_vec(),
            lower: grid.nodes().to_vec(),
            lower_w: grid.weights().to_vec(),
        }
    }

    /// Both indices on the midpoint grid of [0, omega_max]; matches the
    /// oracle discretization node for node.
    pub fn real_axis(n: usize, omega_max: f64) -> Self {
        let h = omega_max / n as f64;
        let nodes: Vec<C64> = (0..n).map(|i| C64::new((i as f64 + 0.5) * h, 0.0)).collect();
        let w = vec![C64::new(h, 0.0); n];
        Self { upper: nodes.clone(), upper_w: w.clone(), lower: nodes, lower_w: w }
    }

    pub fn upper(&self) -> &[C64] {
        &self.upper
    }

    pub fn upper_weights(&self) -> &[C64] {
        &self.upper_w
    }

    pub fn lower(&self) -> &[C64] {
        &self.lower
    }

    pub fn lower_weights(&self) -> &[C64] {
        &self.lower_w
    }

    pub fn n_upper(&self) -> usize {
        self.upper.len()
    }

    pub fn n_lower(&self) -> usize {
        self.lower.len()
    }

    fn check(&self, kernel: usize, column: usize, row: usize) -> Result<()> {
        let (nu, nl) = (self.n_upper(), self.n_lower());
        for (expected, found) in [(nu * nl, kernel), (nu, column), (nl, row)] {
            if expected != found {
                return Err(Error::Dimension { expected, found });
            }
        }
        Ok(())
    }
}

/// O = O₁|1) + ∫O_ω|ω) + ∫∫O_{zz′}|zz′) + ∫O_{z1}|z1) + ∫O_{1z′}|1z′).
#[derive(Clone, Default)]
pub struct BlockObservable {
    /// O₁.
    pub level: C64,
    /// O_ω, analytic near the positive real axis on both sides.
    pub diagonal: Option<Profile>,
    /// O_{zz′}, row-major over (upper node, lower node).
    pub kernel: Vec<C64>,
    /// O_{z1} at the upper nodes.
    pub column: Vec<C64>,
    /// O_{1z′} at the lower nodes.
    pub row: Vec<C64>,
}

impl std::fmt::Debug for BlockObservable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlockObservable")
            .field("level", &self.level)
            .field("diagonal", &self.diagonal.is_some())
            .field("kernel_len", &self.kernel.len())
            .finish()
    }
}

impl BlockObservable {
    pub fn zero(grid: &BlockGrid) -> Self {
        let (nu, nl) = (grid.n_upper(), grid.n_lower());
        Self { level: ZERO, diagonal: None, kernel: vec![ZERO; nu * nl], column: vec![ZERO; nu], row: vec![ZERO; nl] }
    }

    /// |1).
    pub fn level_projector(grid: &BlockGrid) -> Self {
        Self { level: ONE, ..Self::zero(grid) }
    }

    /// The identity I = |1) + ∫dω |ω).
    pub fn identity(grid: &BlockGrid) -> Self {
        Self { level: ONE, diagonal: Some(Arc::new(|_| ONE)), ..Self::zero(grid) }
    }

    fn diag_at(&self, z: C64) -> C64 {
        self.diagonal.as_ref().map_or(ZERO, |p| p(z))
    }

    /// O†, for grids whose upper nodes mirror the lower ones.
    pub fn adjoint(&self, grid: &BlockGrid) -> Result<Self> {
        let n = grid.n_upper();
        if grid.n_lower() != n {
            return Err(Error::Dimension { expected: n, found: grid.n_lower() });
        }
        let diagonal = self.diagonal.clone().map(|p| -> Profile { Arc::new(move |z: C64| p(z.conj()).conj()) });
        let mut kernel = vec![ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                kernel[i * n + j] = self.kernel[j * n + i].conj();
            }
        }
        Ok(Self {
            level: self.level.conj(),
            diagonal,
            kernel,
            column: self.row.iter().map(|z| z.conj()).collect(),
            row: self.column.iter().map(|z| z.conj()).collect(),
        })
    }

    /// Largest violation of O = O† on the sampled blocks.
    pub fn hermiticity_defect(&self, grid: &BlockGrid) -> Result<f64> {
        let a = self.adjoint(grid)?;
        let mut d = (a.level - self.level).norm();
        for (x, y) in a.kernel.iter().zip(&self.kernel).chain(a.column.iter().zip(&self.column)).chain(a.row.iter().zip(&self.row)) {
            d = d.max((x - y).norm());
        }
        Ok(d)
    }

    fn scaled_add(&mut self, other: &Self, c: C64) {
        self.level += c * other.level;
        for (a, b) in self.kernel.iter_mut().zip(&other.kernel) {
            *a += c * b;
        }
        for (a, b) in self.column.iter_mut().zip(&other.column) {
            *a += c * b;
        }
        for (a, b) in self.row.iter_mut().zip(&other.row) {
            *a += c * b;
        }
    }
}

/// A state functional ρ with the same five blocks.
///
/// The diagonal block holds atoms at real energies plus densities along
/// the upper and lower node sets; a density r along Γ̄ acts as
/// O ↦ Σ_k w̄_k r_k O_ω(z̄_k), i.e. analytic continuation of a real-axis density.
#[derive(Clone, Debug, Default, Serialize)]
pub struct GeneralizedState {
    pub level: C64,
    #[serde(skip)]
    pub atoms: Vec<Atom>,
    pub upper_density: Vec<C64>,
    pub lower_density: Vec<C64>,
    pub kernel: Vec<C64>,
    pub column: Vec<C64>,
    pub row: Vec<C64>,
}

impl GeneralizedState {
    pub fn zero(grid: &BlockGrid) -> Self {
        let (nu, nl) = (grid.n_upper(), grid.n_lower());
        Self {
            level: ZERO,
            atoms: Vec::new(),
            upper_density: vec![ZERO; nu],
            lower_density: vec![ZERO; nl],
            kernel: vec![ZERO; nu * nl],
            column: vec![ZERO; nu],
            row: vec![ZERO; nl],
        }
    }

    /// (1|, the unstable level as a state.
    pub fn level_state(grid: &BlockGrid) -> Self {
        Self { level: ONE, ..Self::zero(grid) }
    }

    /// (ω₀|, a sharp energy on the diagonal block.
    pub fn energy_state(grid: &BlockGrid, omega0: f64) -> Self {
        Self { atoms: vec![Atom { position: C64::new(omega0, 0.0), weight: ONE }], ..Self::zero(grid) }
    }

    /// Total atom weight within 1e-12 of `position`.
    pub fn atom_weight(&self, position: f64) -> C64 {
        self.atoms
            .iter()
            .filter(|a| (a.position - position).norm() <= 1e-12 * (1.0 + position.abs()))
            .map(|a| a.weight)
            .sum()
    }

    fn push_atom(&mut self, position: C64, weight: C64) {
        match self.atoms.iter_mut().find(|a| (a.position - position).norm() <= 1e-12 * (1.0 + position.norm())) {
            Some(a) => a.weight += weight,
            None => self.atoms.push(Atom { position, weight }),
        }
    }

    fn scaled_add(&mut self, other: &Self, c: C64) {
        self.level += c * other.level;
        for a in &other.atoms {
            self.push_atom(a.position, c * a.weight);
        }
        let pairs = [
            (&mut self.upper_density, &other.upper_density),
            (&mut self.lower_density, &other.lower_density),
            (&mut self.kernel, &other.kernel),
            (&mut self.column, &other.column),
            (&mut self.row, &other.row),
        ];
        for (a, b) in pairs {
            for (x, y) in a.iter_mut().zip(b) {
                *x += c * y;
            }
        }
    }

    fn check(&self, grid: &BlockGrid) -> Result<()> {
        grid.check(self.kernel.len(), self.column.len(), self.row.len())?;
        grid.check(self.kernel.len(), self.upper_density.len(), self.lower_density.len())
    }

    /// (ρ|O).
    pub fn pair(&self, obs: &BlockObservable, grid: &BlockGrid) -> Result<C64> {
        self.check(grid)?;
        grid.check(obs.kernel.len(), obs.column.len(), obs.row.len())?;
        let nl = grid.n_lower();
        let mut acc = self.level * obs.level;
        if obs.diagonal.is_some() {
            acc += self.atoms.iter().map(|a| a.weight * obs.diag_at(a.position)).sum::<C64>();
            for (k, (&z, &w)) in grid.upper.iter().zip(&grid.upper_w).enumerate() {
                if self.upper_density[k] != ZERO {
                    acc += w * self.upper_density[k] * obs.diag_at(z);
                }
            }
            for (k, (&z, &w)) in grid.lower.iter().zip(&grid.lower_w).enumerate() {
                if self.lower_density[k] != ZERO {
                    acc += w * self.lower_density[k] * obs.diag_at(z);
                }
            }
        }
        for (i, wu) in grid.upper_w.iter().enumerate() {
            acc += wu * self.column[i] * obs.column[i];
            let mut s = ZERO;
            for (j, wl) in grid.lower_w.iter().enumerate() {
                s += wl * self.kernel[i * nl + j] * obs.kernel[i * nl + j];
            }
            acc += wu * s;
        }
        for (j, wl) in grid.lower_w.iter().enumerate() {
            acc += wl * self.row[j] * obs.row[j];
        }
        Ok(acc)
    }
}

/// Refuses models the block calculus does not cover: a kernel V₂, or a form
/// factor that is not real on the real axis.
pub fn require_liouville_model(model: &ModelSpec) -> Result<()> {
    if model.has_kernel() {
        return Err(Error::Unsupported("Liouville mode requires V₂ = 0".into()));
    }
    let x = model.contour().cutoff;
    for k in 1..64 {
        let w = x * k as f64 / 64.0;
        let v = model.v(C64::new(w, 0.0));
        if v.im.abs() > 1e-12 * (1.0 + v.re.abs()) {
            return Err(Error::Unsupported(format!("form factor is complex on the real axis (V({w}) = {v})")));
        }
    }
    Ok(())
}

/// V sampled at both node sets.
struct Couplings {
    omega: f64,
    upper: Vec<C64>,
    lower: Vec<C64>,
}

impl Couplings {
    fn new(model: &ModelSpec, grid: &BlockGrid) -> Self {
        Self {
            omega: model.omega_level(),
            upper: grid.upper.iter().map(|&z| model.v(z)).collect(),
            lower: grid.lower.iter().map(|&z| model.v(z)).collect(),
        }
    }
}

/// L⁰O: multiplies |z1) by (z − Ω), |1z′) by (Ω − z′), |zz′) by (z − z′),
/// and annihilates the level and diagonal blocks.
pub fn apply_free(model: &ModelSpec, grid: &BlockGrid, obs: &BlockObservable) -> Result<BlockObservable> {
    grid.check(obs.kernel.len(), obs.column.len(), obs.row.len())?;
    let om = model.omega_level();
    let nl = grid.n_lower();
    let mut out = BlockObservable::zero(grid);
    for (i, &z) in grid.upper.iter().enumerate() {
        out.column[i] = (z - om) * obs.column[i];
        for (j, &zp) in grid.lower.iter().enumerate() {
            out.kernel[i * nl + j] = (z - zp) * obs.kernel[i * nl + j];
        }
    }
    for (j, &zp) in grid.lower.iter().enumerate() {
        out.row[j] = (om - zp) * obs.row[j];
    }
    Ok(out)
}

fn interaction(c: &Couplings, grid: &BlockGrid, obs: &BlockObservable) -> BlockObservable {
    let nl = grid.n_lower();
    let mut out = BlockObservable::zero(grid);
    for (i, (&wu, &vu)) in grid.upper_w.iter().zip(&c.upper).enumerate() {
        out.level += wu * vu * obs.column[i];
    }
    for (j, (&wl, &vl)) in grid.lower_w.iter().zip(&c.lower).enumerate() {
        out.level -= wl * vl * obs.row[j];
    }
    for (i, &z) in grid.upper.iter().enumerate() {
        let vu = c.upper[i];
        let mut contracted = ZERO;
        for j in 0..nl {
            let k = obs.kernel[i * nl + j];
            contracted += grid.lower_w[j] * k * c.lower[j];
            out.kernel[i * nl + j] = vu * obs.row[j] - obs.column[i] * c.lower[j];
        }
        out.column[i] = vu * (obs.level - obs.diag_at(z)) - contracted;
    }
    for (j, &zp) in grid.lower.iter().enumerate() {
        let vl = c.lower[j];
        let contracted: C64 = (0..grid.n_upper()).map(|i| grid.upper_w[i] * c.upper[i] * obs.kernel[i * nl + j]).sum();
        out.row[j] = vl * (obs.diag_at(zp) - obs.level) + contracted;
    }
    out
}

/// L¹O = [H¹, O] in blocks.
pub fn apply_interaction(model: &ModelSpec, grid: &BlockGrid, obs: &BlockObservable) -> Result<BlockObservable> {
    require_liouville_model(model)?;
    grid.check(obs.kernel.len(), obs.column.len(), obs.row.len())?;
    Ok(interaction(&Couplings::new(model, grid), grid, obs))
}

/// L O = [H, O] in blocks; the diagonal block of the result always vanishes.
pub fn apply_l(model: &ModelSpec, grid: &BlockGrid, obs: &BlockObservable) -> Result<BlockObservable> {
    let mut out = apply_interaction(model, grid, obs)?;
    out.scaled_add(&apply_free(model, grid, obs)?, ONE);
    Ok(out)
}

/// The functional O ↦ (Ψ|L¹O), written back in blocks.
fn interaction_left(c: &Couplings, grid: &BlockGrid, psi: &GeneralizedState) -> GeneralizedState {
    let (nu, nl) = (grid.n_upper(), grid.n_lower());
    let mut out = GeneralizedState::zero(grid);
    for i in 0..nu {
        out.level += grid.upper_w[i] * psi.column[i] * c.upper[i];
        out.upper_density[i] = -psi.column[i] * c.upper[i];
        let contracted: C64 = (0..nl).map(|j| grid.lower_w[j] * psi.kernel[i * nl + j] * c.lower[j]).sum();
        out.column[i] = psi.level * c.upper[i] - contracted;
        for j in 0..nl {
            out.kernel[i * nl + j] = c.upper[i] * psi.row[j] - psi.column[i] * c.lower[j];
        }
    }
    for j in 0..nl {
        out.level -= grid.lower_w[j] * psi.row[j] * c.lower[j];
        out.lower_density[j] = psi.row[j] * c.lower[j];
        let contracted: C64 = (0..nu).map(|i| grid.upper_w[i] * c.upper[i] * psi.kernel[i * nl + j]).sum();
        out.row[j] = -psi.level * c.lower[j] + contracted;
    }
    out
}

/// −(Q₀L⁰Q₀)⁻¹Q₀ on a right vector: the level and diagonal blocks are dropped.
fn reduced_resolvent(om: f64, grid: &BlockGrid, obs: &BlockObservable) -> BlockObservable {
    let nl = grid.n_lower();
    let mut out = BlockObservable::zero(grid);
    for (i, &z) in grid.upper.iter().enumerate() {
        out.column[i] = -obs.column[i] / (z - om);
        for (j, &zp) in grid.lower.iter().enumerate() {
            out.kernel[i * nl + j] = -obs.kernel[i * nl + j] / (z - zp);
        }
    }
    for (j, &zp) in grid.lower.iter().enumerate() {
        out.row[j] = -obs.row[j] / (om - zp);
    }
    out
}

/// The same resolvent acting on a functional from the right.
fn reduced_resolvent_left(om: f64, grid: &BlockGrid, psi: &GeneralizedState) -> GeneralizedState {
    let nl = grid.n_lower();
    let mut out = GeneralizedState::zero(grid);
    for (i, &z) in grid.upper.iter().enumerate() {
        out.column[i] = -psi.column[i] / (z - om);
        for (j, &zp) in grid.lower.iter().enumerate() {
            out.kernel[i * nl + j] = -psi.kernel[i * nl + j] / (z - zp);
        }
    }
    for (j, &zp) in grid.lower.iter().enumerate() {
        out.row[j] = -psi.row[j] / (om - zp);
    }
    out
}

/// The decay mode and the data of the degenerate zero-eigenvalue solve.
#[derive(Clone, Debug)]
pub struct ZeroSector {
    /// λ of the decay mode, through second order (first order is zero).
    pub lambda_decay: C64,
    /// P₀L⁰P₀ applied to |1); identically zero.
    pub lambda_first: C64,
    /// κ_Ω in P₀L¹RL¹|b) = κ_Ω b(Ω)|1) for diagonal-block inputs b.
    pub diagonal_coupling: C64,
    /// |Φ_d) through second order.
    pub right: BlockObservable,
    /// (Ψ_d| through second order, scaled so that (Ψ_d|Φ_d) = 1.
    pub left: GeneralizedState,
    /// (Ψ_d|Φ_d) before scaling.
    pub norm: C64,
    /// Weight of |1) in the invariant right vectors: |Φ_ω̃) ∋ ω̃-coefficient·δ(ω̃ − Ω)|1).
    pub invariant_level_weight: C64,
}

/// Which family an eigenvalue belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Invariant,
    Decay,
    /// u ∈ Γ̄ paired with the level: |u1).
    UpperLevel,
    /// Level paired with u′ ∈ Γ: |1u′).
    LevelLower,
    /// |uu′), u ∈ Γ̄, u′ ∈ Γ.
    UpperLower,
}

impl Branch {
    pub fn tag(self) -> &'static str {
        match self {
            Branch::Invariant => "invariant",
            Branch::Decay => "decay",
            Branch::UpperLevel => "u1",
            Branch::LevelLower => "1u",
            Branch::UpperLower => "uu",
        }
    }
}

/// One eigenvalue with its order-by-order pieces and eigenvectors.
#[derive(Clone, Debug)]
pub struct LiouvilleEigenpair {
    pub branch: Branch,
    /// λ⁽⁰⁾, λ⁽¹⁾, λ⁽²⁾.
    pub lambda_orders: [C64; 3],
    pub right: BlockObservable,
    pub left: GeneralizedState,
}

impl LiouvilleEigenpair {
    pub fn lambda(&self) -> C64 {
        self.lambda_orders.iter().sum()
    }
}

/// (Ψ|I) and what it says about the functional.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Physicality {
    pub trace: C64,
    /// λ = 0: the functional may carry probability.
    pub physical_candidate: bool,
    /// λ ≠ 0 and (Ψ|I) vanishes, as it must.
    pub traceless: bool,
}

/// Pairing of a left eigenfunctional with the identity.
pub fn check_physicality(grid: &BlockGrid, left: &GeneralizedState, lambda: C64) -> Result<Physicality> {
    let trace = left.pair(&BlockObservable::identity(grid), grid)?;
    let zero = lambda.norm() <= 1e-14;
    Ok(Physicality { trace, physical_candidate: zero, traceless: !zero && trace.norm() <= 1e-8 })
}

/// Perturbative spectrum of L on a contour grid.
#[derive(Clone, Debug)]
pub struct LiouvilleSystem {
    grid: BlockGrid,
    omega: f64,
    couplings_upper: Vec<C64>,
    couplings_lower: Vec<C64>,
    /// V(z)/(z − Ω) on the two node sets.
    ratio_upper: Vec<C64>,
    ratio_lower: Vec<C64>,
    /// λ⁽²⁾ of the |u1) and |1u′) branches.
    shift_upper: C64,
    shift_lower: C64,
    zero: ZeroSector,
}

/// Evolved state plus the three numbers usually asked of it.
#[derive(Clone, Debug, Serialize)]
pub struct EvolvedState {
    pub t: f64,
    /// (ρ_t|1).
    pub level_population: f64,
    /// Weight of the atom at Ω on the diagonal block.
    pub atom_at_level: f64,
    /// (ρ_t|I).
    pub total: C64,
    #[serde(skip)]
    pub state: GeneralizedState,
}

impl LiouvilleSystem {
    /// Builds the system on the model's contour resampled to `n_nodes`.
    pub fn build(model: &ModelSpec, n_nodes: usize) -> Result<Self> {
        require_liouville_model(model)?;
        let om = model.omega_level();
        if !(om > 0.0 && om < model.contour().cutoff) {
            return Err(Error::Config(format!("the atom at Ω = {om} must lie inside (0, cutoff)")));
        }
        let spec = model.contour().with_nodes(n_nodes);
        let grid = BlockGrid::contour(&ContourGrid::build(&spec)?);
        let c = Couplings::new(model, &grid);
        let ratio_upper: Vec<C64> = grid.upper.iter().zip(&c.upper).map(|(&z, v)| v / (z - om)).collect();
        let ratio_lower: Vec<C64> = grid.lower.iter().zip(&c.lower).map(|(&z, v)| v / (z - om)).collect();
        let shift_upper: C64 = grid.lower.iter().zip(&grid.lower_w).zip(&c.lower).map(|((&z, w), v)| w * v * v / (z - om)).sum();
        let shift_lower: C64 = grid.upper.iter().zip(&grid.upper_w).zip(&c.upper).map(|((&z, w), v)| w * v * v / (om - z)).sum();
        let zero = zero_sector(&c, &grid)?;
        Ok(Self {
            grid,
            omega: om,
            couplings_upper: c.upper,
            couplings_lower: c.lower,
            ratio_upper,
            ratio_lower,
            shift_upper,
            shift_lower,
            zero,
        })
    }

    /// [`LiouvilleSystem::build`] with [`LIOUVILLE_NODES`].
    pub fn new(model: &ModelSpec) -> Result<Self> {
        Self::build(model, LIOUVILLE_NODES)
    }

    pub fn grid(&self) -> &BlockGrid {
        &self.grid
    }

    pub fn zero_sector(&self) -> &ZeroSector {
        &self.zero
    }

    pub fn couplings(&self) -> (&[C64], &[C64]) {
        (&self.couplings_upper, &self.couplings_lower)
    }

    fn n(&self) -> usize {
        self.grid.n_upper()
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k < self.n() {
            Ok(())
        } else {
            Err(Error::Dimension { expected: self.n(), found: k })
        }
    }

    /// The decay mode as an eigenpair.
    pub fn decay(&self) -> LiouvilleEigenpair {
        LiouvilleEigenpair {
            branch: Branch::Decay,
            lambda_orders: [ZERO, self.zero.lambda_first, self.zero.lambda_decay],
            right: self.zero.right.clone(),
            left: self.zero.left.clone(),
        }
    }

    /// (Ψ_ω| = (ω| with λ = 0; it receives no corrections because (ω|L¹ = 0.
    pub fn invariant_left(&self, omega: f64) -> GeneralizedState {
        GeneralizedState::energy_state(&self.grid, omega)
    }

    /// ∫dω̃ g(ω̃)|Φ_ω̃) through second order, for g analytic near the
    /// positive axis: |g) + c·g(Ω)|1) plus resolvent corrections.
    pub fn invariant_right_smeared(&self, g: Profile) -> BlockObservable {
        let c = Couplings { omega: self.omega, upper: self.couplings_upper.clone(), lower: self.couplings_lower.clone() };
        let mut phi0 = BlockObservable::level_projector(&self.grid);
        phi0.level = g(C64::new(self.omega, 0.0)) * self.zero.invariant_level_weight;
        phi0.diagonal = Some(g);
        let phi1 = reduced_resolvent(self.omega, &self.grid, &interaction(&c, &self.grid, &phi0));
        let phi2 = reduced_resolvent(self.omega, &self.grid, &interaction(&c, &self.grid, &phi1));
        let mut out = phi0;
        out.scaled_add(&phi1, ONE);
        out.scaled_add(&phi2, ONE);
        out
    }

    /// g ↦ (ρ|∫dω̃ g(ω̃)Φ_ω̃), written as a diagonal-block functional.
    fn invariant_projection(&self, rho: &GeneralizedState) -> Result<GeneralizedState> {
        let g = &self.grid;
        let nl = g.n_lower();
        let mut out = GeneralizedState::zero(g);
        out.atoms = rho.atoms.clone();
        out.upper_density.clone_from(&rho.upper_density);
        out.lower_density.clone_from(&rho.lower_density);
        let mut q0_part = self.zero.right.clone();
        q0_part.level = ZERO;
        out.push_atom(
            C64::new(self.omega, 0.0),
            self.zero.invariant_level_weight * (rho.level + rho.pair(&q0_part, g)?),
        );
        for (k, &z) in g.upper.iter().enumerate() {
            let contracted: C64 = (0..nl)
                .map(|l| g.lower_w[l] * rho.kernel[k * nl + l] * self.couplings_lower[l] / (z - g.lower[l]))
                .sum();
            out.upper_density[k] += self.ratio_upper[k] * (rho.column[k] + contracted);
        }
        for (l, &zp) in g.lower.iter().enumerate() {
            let contracted: C64 = (0..g.n_upper())
                .map(|k| g.upper_w[k] * rho.kernel[k * nl + l] * self.couplings_upper[k] / (g.upper[k] - zp))
                .sum();
            out.lower_density[l] += self.ratio_lower[l] * (rho.row[l] - contracted);
        }
        Ok(out)
    }

    /// λ_{u1} and its eigenvectors for the upper node `k`.
    pub fn branch_upper_level(&self, k: usize) -> Result<LiouvilleEigenpair> {
        self.check_index(k)?;
        let (g, w) = (&self.grid, self.grid.upper_w[k]);
        let nl = g.n_lower();
        let mut right = BlockObservable::zero(g);
        right.column[k] = ONE / w;
        right.level = self.ratio_upper[k];
        for j in 0..nl {
            right.kernel[k * nl + j] = -self.ratio_lower[j] / w;
        }
        let mut left = GeneralizedState::zero(g);
        left.column[k] = ONE / w;
        left.level = self.ratio_upper[k];
        left.upper_density[k] = -self.ratio_upper[k] / w;
        for j in 0..nl {
            left.kernel[k * nl + j] = -self.ratio_lower[j] / w;
        }
        Ok(LiouvilleEigenpair {
            branch: Branch::UpperLevel,
            lambda_orders: [g.upper[k] - self.omega, ZERO, self.shift_upper],
            right,
            left,
        })
    }

    /// λ_{1u′} and its eigenvectors for the lower node `l`.
    pub fn branch_level_lower(&self, l: usize) -> Result<LiouvilleEigenpair> {
        self.check_index(l)?;
        let (g, w) = (&self.grid, self.grid.lower_w[l]);
        let nl = g.n_lower();
        let mut right = BlockObservable::zero(g);
        right.row[l] = ONE / w;
        right.level = self.ratio_lower[l];
        for i in 0..g.n_upper() {
            right.kernel[i * nl + l] = -self.ratio_upper[i] / w;
        }
        let mut left = GeneralizedState::zero(g);
        left.row[l] = ONE / w;
        left.level = self.ratio_lower[l];
        left.lower_density[l] = -self.ratio_lower[l] / w;
        for i in 0..g.n_upper() {
            left.kernel[i * nl + l] = -self.ratio_upper[i] / w;
        }
        Ok(LiouvilleEigenpair {
            branch: Branch::LevelLower,
            lambda_orders: [self.omega - g.lower[l], ZERO, self.shift_lower],
            right,
            left,
        })
    }

    /// λ_{uu′} = u − u′ (no shift through second order) and its eigenvectors.
    pub fn branch_upper_lower(&self, k: usize, l: usize) -> Result<LiouvilleEigenpair> {
        self.check_index(k)?;
        self.check_index(l)?;
        let g = &self.grid;
        let (wu, wl) = (g.upper_w[k], g.lower_w[l]);
        let nl = g.n_lower();
        let mut right = BlockObservable::zero(g);
        right.kernel[k * nl + l] = ONE / (wu * wl);
        right.row[l] = self.ratio_upper[k] / wl;
        right.column[k] = self.ratio_lower[l] / wu;
        let mut left = GeneralizedState::zero(g);
        left.kernel[k * nl + l] = ONE / (wu * wl);
        left.row[l] = self.ratio_upper[k] / wl;
        left.column[k] = self.ratio_lower[l] / wu;
        Ok(LiouvilleEigenpair { branch: Branch::UpperLower, lambda_orders: [g.upper[k] - g.lower[l], ZERO, ZERO], right, left })
    }

    /// Every eigenvalue of the truncated system, tagged by branch.
    pub fn eigenvalue_cloud(&self) -> Vec<(Branch, C64)> {
        let g = &self.grid;
        let mut out = vec![(Branch::Invariant, ZERO), (Branch::Decay, self.zero.lambda_first + self.zero.lambda_decay)];
        out.extend(g.upper.iter().map(|&u| (Branch::UpperLevel, u - self.omega + self.shift_upper)));
        out.extend(g.lower.iter().map(|&u| (Branch::LevelLower, self.omega - u + self.shift_lower)));
        for &u in &g.upper {
            out.extend(g.lower.iter().map(|&v| (Branch::UpperLower, u - v)));
        }
        out
    }

    /// (ρ_t| = Σ e^{iλt}(ρ₀|Φ)(Ψ| over every branch of the truncated basis.
    pub fn evolve_state(&self, rho0: &GeneralizedState, t: f64) -> Result<EvolvedState> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        rho0.check(&self.grid)?;
        let g = &self.grid;
        let (nu, nl) = (g.n_upper(), g.n_lower());
        let phase = |l: C64| (C64::new(0.0, t) * l).exp();

        // λ = 0: the diagonal block only collects, it never oscillates.
        let mut out = self.invariant_projection(rho0)?;

        let decay = rho0.pair(&self.zero.right, g)? * phase(self.zero.lambda_first + self.zero.lambda_decay);
        out.scaled_add(&self.zero.left, decay);

        for k in 0..nu {
            let wu = g.upper_w[k];
            let contracted: C64 = (0..nl).map(|j| g.lower_w[j] * rho0.kernel[k * nl + j] * self.ratio_lower[j]).sum();
            let overlap = rho0.level * self.ratio_upper[k] + rho0.column[k] - contracted;
            let b = wu * overlap * phase(g.upper[k] - self.omega + self.shift_upper);
            out.column[k] += b / wu;
            out.level += b * self.ratio_upper[k];
            out.upper_density[k] -= b * self.ratio_upper[k] / wu;
            for j in 0..nl {
                out.kernel[k * nl + j] -= b * self.ratio_lower[j] / wu;
            }
        }
        for l in 0..nl {
            let wl = g.lower_w[l];
            let contracted: C64 = (0..nu).map(|i| g.upper_w[i] * rho0.kernel[i * nl + l] * self.ratio_upper[i]).sum();
            let overlap = rho0.level * self.ratio_lower[l] + rho0.row[l] - contracted;
            let b = wl * overlap * phase(self.omega - g.lower[l] + self.shift_lower);
            out.row[l] += b / wl;
            out.level += b * self.ratio_lower[l];
            out.lower_density[l] -= b * self.ratio_lower[l] / wl;
            for i in 0..nu {
                out.kernel[i * nl + l] -= b * self.ratio_upper[i] / wl;
            }
        }
        for k in 0..nu {
            for l in 0..nl {
                let (wu, wl) = (g.upper_w[k], g.lower_w[l]);
                let idx = k * nl + l;
                let overlap = rho0.kernel[idx] + rho0.row[l] * self.ratio_upper[k] + rho0.column[k] * self.ratio_lower[l];
                if overlap == ZERO {
                    continue;
                }
                let b = wu * wl * overlap * phase(g.upper[k] - g.lower[l]);
                out.kernel[idx] += b / (wu * wl);
                out.row[l] += b * self.ratio_upper[k] / wl;
                out.column[k] += b * self.ratio_lower[l] / wu;
            }
        }

        let total = out.pair(&BlockObservable::identity(g), g)?;
        Ok(EvolvedState {
            t,
            level_population: out.level.re,
            atom_at_level: out.atom_weight(self.omega).re,
            total,
            state: out,
        })
    }
}

/// Degenerate perturbation theory on P₀ = |1)(1| + ∫dω|ω)(ω|, carried out
/// with the block operators themselves.
fn zero_sector(c: &Couplings, grid: &BlockGrid) -> Result<ZeroSector> {
    let om = c.omega;
    let level = BlockObservable::level_projector(grid);

    // First order: P₀L⁰P₀ restricted to the level.
    let free = apply_free_raw(om, grid, &level);
    let lambda_first = free.level;

    // Second order on P₀: M = P₀L¹RL¹P₀ with R = −(Q₀L⁰Q₀)⁻¹Q₀.
    let phi1 = reduced_resolvent(om, grid, &interaction(c, grid, &level));
    let lambda_decay = interaction(c, grid, &phi1).level;

    // The diagonal-block column of M is a point evaluation at Ω; its weight
    // is read off from a test profile that is smooth across the strip.
    let probe: Profile = Arc::new(move |z: C64| (-(z - om) * (z - om)).exp() * (1.0 + 0.3 * z));
    let probe_obs = BlockObservable { diagonal: Some(probe.clone()), ..BlockObservable::zero(grid) };
    let probe_image = interaction(c, grid, &reduced_resolvent(om, grid, &interaction(c, grid, &probe_obs)));
    let diagonal_coupling = probe_image.level / probe(C64::new(om, 0.0));

    if lambda_decay.norm() == 0.0 {
        // Free limit: the whole sector stays degenerate at zero.
        let right = BlockObservable::level_projector(grid);
        let left = GeneralizedState::level_state(grid);
        return Ok(ZeroSector {
            lambda_decay,
            lambda_first,
            diagonal_coupling,
            right,
            left,
            norm: ONE,
            invariant_level_weight: ZERO,
        });
    }

    // λ ≠ 0 forces a vanishing diagonal block on the right and an atom of
    // weight κ_Ω/λ at Ω on the left; λ = 0 gives |ω̃) − (κ_Ω/λ_d)δ(ω̃ − Ω)|1).
    let atom_weight = diagonal_coupling / lambda_decay;
    let phi2 = reduced_resolvent(om, grid, &interaction(c, grid, &phi1));
    let mut right = level.clone();
    right.scaled_add(&phi1, ONE);
    right.scaled_add(&phi2, ONE);

    let mut psi0 = GeneralizedState::level_state(grid);
    psi0.push_atom(C64::new(om, 0.0), atom_weight);
    let psi1 = reduced_resolvent_left(om, grid, &interaction_left(c, grid, &psi0));
    let psi2 = reduced_resolvent_left(om, grid, &interaction_left(c, grid, &psi1));
    let mut left = psi0;
    left.scaled_add(&psi1, ONE);
    left.scaled_add(&psi2, ONE);

    let norm = left.pair(&right, grid)?;
    if norm.norm() < 1e-14 {
        return Err(Error::SelfOrthogonal);
    }
    let mut scaled = GeneralizedState::zero(grid);
    scaled.scaled_add(&left, ONE / norm);

    Ok(ZeroSector {
        lambda_decay,
        lambda_first,
        diagonal_coupling,
        right,
        left: scaled,
        norm,
        invariant_level_weight: -atom_weight,
    })
}

fn apply_free_raw(om: f64, grid: &BlockGrid, obs: &BlockObservable) -> BlockObservable {
    let nl = grid.n_lower();
    let mut out = BlockObservable::zero(grid);
    for (i, &z) in grid.upper.iter().enumerate() {
        out.column[i] = (z - om) * obs.column[i];
        for (j, &zp) in grid.lower.iter().enumerate() {
            out.kernel[i * nl + j] = (z - zp) * obs.kernel[i * nl + j];
        }
    }
    for (j, &zp) in grid.lower.iter().enumerate() {
        out.row[j] = (om - zp) * obs.row[j];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sys(eps: f64) -> (ModelSpec, LiouvilleSystem) {
        let m = ModelSpec::default_with_coupling(eps);
        let s = LiouvilleSystem::new(&m).unwrap();
        (m, s)
    }

    #[test]
    fn commutator_with_identity_vanishes() {
        let (m, s) = sys(0.1);
        let g = s.grid();
        let out = apply_l(&m, g, &BlockObservable::identity(g)).unwrap();
        assert!(out.level.norm() < 1e-15);
        assert!(out.column.iter().chain(&out.row).chain(&out.kernel).all(|z| z.norm() < 1e-15));
        assert!(out.diagonal.is_none());
    }

    #[test]
    fn free_action_on_a_column_delta() {
        let m = ModelSpec::default_with_coupling(0.0);
        let g = BlockGrid::contour(&m.grid().unwrap());
        let k = 17;
        let mut o = BlockObservable::zero(&g);
        o.column[k] = ONE / g.upper_weights()[k];
        let out = apply_l(&m, &g, &o).unwrap();
        assert!((out.column[k] - (g.upper()[k] - 1.0) * o.column[k]).norm() < 1e-14);
        assert_eq!(out.level, ZERO);
    }

    #[test]
    fn first_order_vanishes_on_the_invariant_sector() {
        let (m, s) = sys(0.1);
        let g = s.grid();
        assert_eq!(s.zero_sector().lambda_first, ZERO);
        let diag = BlockObservable { diagonal: Some(Arc::new(|z: C64| (-z).exp())), ..BlockObservable::zero(g) };
        for o in [BlockObservable::level_projector(g), diag] {
            let out = apply_free(&m, g, &o).unwrap();
            assert_eq!(out.level, ZERO);
            assert!(out.diagonal.is_none());
        }
    }

    #[test]
    fn decay_rate_is_twice_the_golden_rule_half_width() {
        let (m, s) = sys(0.1);
        let want = C64::new(0.0, 2.0 * PI * m.v_at_level().norm_sqr());
        assert!((s.zero_sector().lambda_decay - want).norm() < 1e-10);
        assert!((s.zero_sector().diagonal_coupling + want).norm() < 1e-10);
    }

    #[test]
    fn free_limit_is_fully_degenerate() {
        let (_, s) = sys(0.0);
        assert_eq!(s.zero_sector().lambda_decay, ZERO);
        for (_, l) in s.eigenvalue_cloud().iter().filter(|(b, _)| matches!(b, Branch::Decay | Branch::Invariant)) {
            assert_eq!(*l, ZERO);
        }
        let b = s.branch_upper_level(10).unwrap();
        assert_eq!(b.lambda(), s.grid().upper()[10] - 1.0);
    }

    #[test]
    fn zero_sector_vectors_match_closed_forms() {
        let (_, s) = sys(0.1);
        let z = s.zero_sector();
        let nl = s.grid().n_lower();
        for k in [3, 40, 77] {
            assert!((z.right.column[k] + s.ratio_upper[k]).norm() < 1e-14);
            assert!((z.right.row[k] + s.ratio_lower[k]).norm() < 1e-14);
            let c = s.ratio_upper[k] * s.ratio_lower[20];
            assert!((z.right.kernel[k * nl + 20] - c).norm() < 1e-13 * (1.0 + c.norm()));
            let l = z.left.kernel[k * nl + 20] * z.norm;
            assert!((l - c).norm() < 1e-13 * (1.0 + c.norm()));
        }
        assert!((z.invariant_level_weight - 1.0).norm() < 1e-10);
    }

    #[test]
    fn zero_sector_biorthogonality() {
        let (_, s) = sys(0.1);
        let g = s.grid();
        let z = s.zero_sector();
        assert!((z.left.pair(&z.right, g).unwrap() - 1.0).norm() < 1e-14);
        // (Ψ_ω|Φ_d) = 0 away from Ω; the atom at Ω sees no diagonal block.
        assert_eq!(s.invariant_left(2.5).pair(&z.right, g).unwrap(), ZERO);
        // The smeared invariant vector of a constant is the identity.
        let one = s.invariant_right_smeared(Arc::new(|_| ONE));
        let id = BlockObservable::identity(g);
        assert!((one.level - 1.0).norm() < 1e-12);
        assert!(one.kernel.iter().chain(&one.column).chain(&one.row).all(|c| c.norm() < 1e-10));
        assert!(z.left.pair(&one, g).unwrap().norm() < 1e-10);
        assert!(z.left.pair(&id, g).unwrap().norm() < 1e-10);
    }

    fn random_functional(grid: &BlockGrid, seed: u64) -> GeneralizedState {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut r = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let mut rho = GeneralizedState::level_state(grid);
        rho.level = r();
        for v in [&mut rho.kernel, &mut rho.column, &mut rho.row, &mut rho.upper_density] {
            v.iter_mut().for_each(|c| *c = r());
        }
        rho
    }

    #[test]
    fn invariant_projection_pairs_like_the_smeared_vectors() {
        let (_, s) = sys(0.1);
        let g = s.grid();
        let rho = random_functional(g, 3);
        let proj = s.invariant_projection(&rho).unwrap();
        for centre in [0.7, 1.0, 2.5] {
            let f: Profile = Arc::new(move |w: C64| (-(w - centre) * (w - centre)).exp() * (1.0 + 0.5 * w));
            let want = rho.pair(&s.invariant_right_smeared(f.clone()), g).unwrap();
            let diag = BlockObservable { diagonal: Some(f), ..BlockObservable::zero(g) };
            let got = proj.pair(&diag, g).unwrap();
            assert!((got - want).norm() < 1e-10 * (1.0 + want.norm()), "{got} vs {want}");
        }
    }

    #[test]
    fn eigen_residuals_are_third_order() {
        let residual = |eps: f64| {
            let (m, s) = sys(eps);
            let g = s.grid();
            let d = s.decay();
            let mut r = apply_l(&m, g, &d.right).unwrap();
            r.scaled_add(&d.right, -d.lambda());
            let f: Profile = Arc::new(|w: C64| (-(w - 1.5) * (w - 1.5)).exp());
            let inv = apply_l(&m, g, &s.invariant_right_smeared(f)).unwrap();
            let size = |o: &BlockObservable| {
                let mut x = o.level.norm();
                for (k, c) in o.column.iter().enumerate() {
                    x = x.max((c * g.upper_weights()[k]).norm());
                }
                for (k, c) in o.row.iter().enumerate() {
                    x = x.max((c * g.lower_weights()[k]).norm());
                }
                x
            };
            (size(&r), size(&inv))
        };
        let (a, b) = (residual(0.1), residual(0.05));
        assert!((a.0 / b.0).log2() > 2.8, "{a:?} {b:?}");
        assert!((a.1 / b.1).log2() > 2.8, "{a:?} {b:?}");
    }

    #[test]
    fn branch_eigenvalues_shift_upward_and_mirror() {
        let (m, s) = sys(0.1);
        let vv = m.v_at_level().norm_sqr();
        for k in [0, 25, 60, 99] {
            let a = s.branch_upper_level(k).unwrap();
            assert_eq!(a.lambda_orders[1], ZERO);
            assert!(((a.lambda() - a.lambda_orders[0]).im - PI * vv).abs() < 1e-10);
            let b = s.branch_level_lower(k).unwrap();
            assert!((b.lambda() + a.lambda().conj()).norm() < 1e-12);
            let c = s.branch_upper_lower(k, 99 - k).unwrap();
            assert_eq!(c.lambda_orders[2], ZERO);
        }
    }

    #[test]
    fn left_eigenfunctionals_other_than_invariant_are_traceless() {
        let (_, s) = sys(0.1);
        let g = s.grid();
        let mut pairs = vec![s.decay()];
        for k in [0, 33, 66, 99] {
            pairs.push(s.branch_upper_level(k).unwrap());
            pairs.push(s.branch_level_lower(k).unwrap());
            pairs.push(s.branch_upper_lower(k, 50).unwrap());
        }
        for p in pairs {
            let ph = check_physicality(g, &p.left, p.lambda()).unwrap();
            assert!(ph.trace.norm() <= 1e-8, "{:?}: {:?}", p.branch, ph.trace);
            assert!(ph.traceless && !ph.physical_candidate);
        }
        let inv = check_physicality(g, &s.invariant_left(1.7), ZERO).unwrap();
        assert_eq!(inv.trace, ONE);
        assert!(inv.physical_candidate);
    }

    #[test]
    fn evolution_conserves_the_trace_and_refuses_negative_time() {
        let (_, s) = sys(0.1);
        let rho = GeneralizedState::level_state(s.grid());
        for t in [0.0, 10.0, 80.0] {
            let e = s.evolve_state(&rho, t).unwrap();
            assert!((e.total - 1.0).norm() <= 1e-8, "{}", e.total);
        }
        assert_eq!(s.evolve_state(&rho, -1.0).unwrap_err(), Error::NegativeTime(-1.0));
    }

    #[test]
    fn kernels_and_complex_couplings_are_refused() {
        use crate::model::FormFactor2;
        let m = ModelSpec::default_with_coupling(0.1).with_kernel(Some(FormFactor2::separable_sqrt_exp(0.1))).unwrap();
        assert!(matches!(LiouvilleSystem::new(&m), Err(Error::Unsupported(_))));
    }
}
