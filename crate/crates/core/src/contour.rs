//! Deformed integration paths from 0 to the cutoff, quadrature on them, and
//! boundary values of Cauchy integrals (real-axis Plemelj split and its
//! transcription onto the discretized curve).

use std::f64::consts::PI;

use gauss_quad::GaussLegendre;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of Gauss–Legendre nodes per panel.
const PANEL: usize = 10;

/// Points on the circle used to differentiate a profile at a curve node.
const DERIVATIVE_POINTS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// 0 → −i·depth → cutoff − i·depth → cutoff.
    #[default]
    Rectangle,
    SemiEllipse,
}

/// Geometry and resolution of the deformed path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourSpec {
    pub depth: f64,
    pub cutoff: f64,
    #[serde(default)]
    pub shape: Shape,
    pub n_nodes: usize,
}

impl ContourSpec {
    pub const DEFAULT_DEPTH: f64 = 0.5;
    pub const DEFAULT_NODES: usize = 200;

    /// Default path for a discrete level at `omega`: depth 0.5, cutoff
    /// max(20, 10·omega), rectangle, 200 nodes.
    pub fn for_level(omega: f64) -> Self {
        Self {
            depth: Self::DEFAULT_DEPTH,
            cutoff: f64::max(20.0, 10.0 * omega),
            shape: Shape::Rectangle,
            n_nodes: Self::DEFAULT_NODES,
        }
    }

    pub fn with_nodes(mut self, n_nodes: usize) -> Self {
        self.n_nodes = n_nodes;
        self
    }

    pub fn with_depth(mut self, depth: f64) -> Self {
        self.depth = depth;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.depth.is_finite() && self.depth > 0.0) {
            return Err(Error::Config(format!("contour depth must be positive, got {}", self.depth)));
        }
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return Err(Error::Config(format!("contour cutoff must be positive, got {}", self.cutoff)));
        }
        if self.n_nodes < 16 {
            return Err(Error::Config(format!("contour needs at least 16 nodes, got {}", self.n_nodes)));
        }
        Ok(())
    }
}

/// Which half plane the path bulges into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Γ, used for kets and for the lower-half-plane continuation.
    Lower,
    /// Γ̄, the mirror image of Γ.
    Upper,
}

/// Limit direction of a boundary value, in the real-axis sense `u ± i0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn flip(self) -> Self {
        match self {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
        }
    }
}

/// Nodes and complex path-measure weights on Γ or Γ̄, ordered from 0 to the cutoff.
#[derive(Clone, Debug)]
pub struct ContourGrid {
    spec: ContourSpec,
    orientation: Orientation,
    nodes: Vec<C64>,
    weights: Vec<C64>,
}

fn legendre(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(n.try_into().expect("panel order is positive"));
    rule.iter().map(|(x, w)| (*x, *w)).collect()
}

/// Composite Gauss–Legendre on s ∈ [0,1] with `n` nodes split into panels of
/// at most [`PANEL`] nodes. Returns (s, ds-weight) pairs.
fn unit_panels(n: usize) -> Vec<(f64, f64)> {
    let panels = n.div_ceil(PANEL).max(1);
    let mut out = Vec::with_capacity(n);
    let base = n / panels;
    let extra = n % panels;
    for p in 0..panels {
        let order = base + usize::from(p < extra);
        let (a, b) = (p as f64 / panels as f64, (p + 1) as f64 / panels as f64);
        let half = 0.5 * (b - a);
        for (x, w) in legendre(order) {
            out.push((a + half * (x + 1.0), half * w));
        }
    }
    out
}

/// Composite rule on the real interval [a,b]; with `graded` the map
/// x = a + (b−a)s² clusters nodes at `a`, which tames √(x−a) behaviour.
fn real_segment(a: f64, b: f64, n: usize, graded: bool) -> Vec<(f64, f64)> {
    unit_panels(n)
        .into_iter()
        .map(|(s, w)| {
            if graded {
                (a + (b - a) * s * s, 2.0 * (b - a) * s * w)
            } else {
                (a + (b - a) * s, (b - a) * w)
            }
        })
        .collect()
}

impl ContourGrid {
    /// Discretize Γ (lower orientation) for a validated spec.
    pub fn build(spec: &ContourSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.depth;
        let x = spec.cutoff;
        let n = spec.n_nodes;
        let i = C64::i();
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        match spec.shape {
            Shape::Rectangle => {
                let n1 = (n / 10).max(4);
                let n3 = (n / 20).max(4);
                let n2 = n - n1 - n3;
                // Descent from 0, quadratic in s so that √z stays smooth in s.
                for (s, w) in unit_panels(n1) {
                    nodes.push(-i * d * s * s);
                    weights.push(-i * d * 2.0 * s * w);
                }
                // Bottom edge, exponentially graded toward small Re z where the
                // real level and the branch point sit closest to the path.
                let kappa = (1.0 + x / (2.0 * d)).ln().clamp(0.5, 4.0);
                let scale = x / kappa.exp_m1();
                for (s, w) in unit_panels(n2) {
                    let re = scale * (kappa * s).exp_m1();
                    nodes.push(C64::new(re, -d));
                    weights.push(C64::new(scale * kappa * (kappa * s).exp() * w, 0.0));
                }
                for (s, w) in unit_panels(n3) {
                    nodes.push(C64::new(x, -d * (1.0 - s)));
                    weights.push(i * d * w);
                }
            }
            Shape::SemiEllipse => {
                for (s, w) in unit_panels(n) {
                    let th = PI * s * s;
                    let dth = 2.0 * PI * s * w;
                    nodes.push(C64::new(0.5 * x * (1.0 - th.cos()), -d * th.sin()));
                    weights.push(C64::new(0.5 * x * th.sin(), -d * th.cos()) * dth);
                }
            }
        }
        Ok(Self { spec: *spec, orientation: Orientation::Lower, nodes, weights })
    }

    /// Mirror image: conjugated nodes and weights.
    pub fn conjugate(&self) -> Self {
        let orientation = match self.orientation {
            Orientation::Lower => Orientation::Upper,
            Orientation::Upper => Orientation::Lower,
        };
        Self {
            spec: self.spec,
            orientation,
            nodes: self.nodes.iter().map(|z| z.conj()).collect(),
            weights: self.weights.iter().map(|w| w.conj()).collect(),
        }
    }

    pub fn spec(&self) -> &ContourSpec {
        &self.spec
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn nodes(&self) -> &[C64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[C64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Σ w_j f(z_j), failing on the first non-finite sample.
    pub fn integrate(&self, f: impl Fn(C64) -> C64) -> Result<C64> {
        let mut acc = C64::new(0.0, 0.0);
        for (k, (&z, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let v = f(z);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::NonFinite { index: k, z });
            }
            acc += w * v;
        }
        Ok(acc)
    }

    /// Unchecked quadrature sum for hot loops whose integrands are known finite.
    pub fn sum(&self, f: impl Fn(C64) -> C64) -> C64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }

    /// Position of `u` in the node list, if it is (numerically) a node.
    pub fn index_of(&self, u: C64) -> Option<usize> {
        let tol = 1e-12 * (1.0 + u.norm());
        self.nodes.iter().position(|z| (z - u).norm() <= tol)
    }

    fn sign(&self) -> f64 {
        match self.orientation {
            Orientation::Lower => -1.0,
            Orientation::Upper => 1.0,
        }
    }

    /// Whether `z` lies on the drawn path, up to a relative tolerance.
    pub fn on_path(&self, z: C64) -> bool {
        let d = self.spec.depth;
        let x = self.spec.cutoff;
        let y = self.sign() * z.im;
        let tol = 1e-10 * (1.0 + x);
        match self.spec.shape {
            Shape::Rectangle => {
                let vertical = (z.re.abs() <= tol || (z.re - x).abs() <= tol) && (-tol..=d + tol).contains(&y);
                let bottom = (y - d).abs() <= tol && (-tol..=x + tol).contains(&z.re);
                vertical || bottom
            }
            Shape::SemiEllipse => {
                let a = 0.5 * x;
                let r = ((z.re - a) / a).powi(2) + (y / d).powi(2);
                y >= -tol && (r - 1.0).abs() <= 1e-10
            }
        }
    }

    /// Whether `z` lies strictly between the real axis and the path.
    pub fn region_contains(&self, z: C64) -> bool {
        let d = self.spec.depth;
        let x = self.spec.cutoff;
        let y = self.sign() * z.im;
        if y <= 0.0 {
            return false;
        }
        match self.spec.shape {
            Shape::Rectangle => z.re > 0.0 && z.re < x && y < d,
            Shape::SemiEllipse => {
                let a = 0.5 * x;
                ((z.re - a) / a).powi(2) + (y / d).powi(2) < 1.0
            }
        }
    }

    /// ∫ dz/(ζ−z) along the path equals −K(ζ); this is K for ζ → u.
    fn log_kernel(&self, u: C64, side: Side) -> C64 {
        let x = self.spec.cutoff;
        let base = (C64::new(x, 0.0) - u).ln() - (-u).ln();
        let inside = if self.on_path(u) {
            // For Γ the region lies on the u + i0 side; for Γ̄ on the u − i0 side.
            matches!(
                (self.orientation, side),
                (Orientation::Lower, Side::Plus) | (Orientation::Upper, Side::Minus)
            )
        } else {
            self.region_contains(u)
        };
        if !inside {
            return base;
        }
        let two_pi_i = C64::new(0.0, 2.0 * PI);
        match self.orientation {
            Orientation::Lower => base + two_pi_i,
            Orientation::Upper => base - two_pi_i,
        }
    }

    /// Boundary value of ∫_path g(z)/(ζ − z) dz as ζ → u ± i0.
    ///
    /// `u` may be a node, an arbitrary point on the path, or a point off the
    /// path (then `side` is irrelevant). The singular part is removed by
    /// subtracting g(u) and restored through the closed form of ∫dz/(ζ−z); at
    /// a node the regularized integrand takes the value g′(u).
    pub fn cauchy_limit(&self, g: &dyn Fn(C64) -> C64, u: C64, side: Side) -> C64 {
        let gu = g(u);
        let near = 1e-7 * (1.0 + u.norm());
        let mut derivative = None;
        let mut acc = C64::new(0.0, 0.0);
        for (&z, &w) in self.nodes.iter().zip(&self.weights) {
            let dz = z - u;
            let q = if dz.norm() <= near {
                *derivative.get_or_insert_with(|| circle_derivative(g, u))
            } else {
                (g(z) - gu) / dz
            };
            acc += w * q;
        }
        -(acc + gu * self.log_kernel(u, side))
    }
}

/// g′(u) from the trapezoidal rule on a small circle around `u`, kept clear of
/// the branch point at 0 and of the real axis.
pub(crate) fn circle_derivative(g: &dyn Fn(C64) -> C64, u: C64) -> C64 {
    let r = 0.25 * u.norm().min(u.im.abs()).min(1.0).max(1e-6);
    let m = DERIVATIVE_POINTS;
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..m {
        let e = C64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64);
        acc += g(u + r * e) / e;
    }
    acc / (m as f64 * r)
}

/// Composite Gauss–Legendre rule on the real interval [0, cutoff], graded near 0.
#[derive(Clone, Debug)]
pub struct RealAxisRule {
    cutoff: f64,
    n_nodes: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl RealAxisRule {
    pub fn new(cutoff: f64, n_nodes: usize) -> Result<Self> {
        if !(cutoff.is_finite() && cutoff > 0.0) {
            return Err(Error::Config(format!("cutoff must be positive, got {cutoff}")));
        }
        if n_nodes < 16 {
            return Err(Error::Config(format!("real-axis rule needs at least 16 nodes, got {n_nodes}")));
        }
        let (nodes, weights) = Self::split_rule(cutoff, n_nodes, &[]).into_iter().unzip();
        Ok(Self { cutoff, n_nodes, nodes, weights })
    }

    /// Rule whose panels break at the given interior points. The first
    /// segment is graded toward 0, the rest are uniform; nodes are allotted
    /// in proportion to segment length with at least two panels each.
    fn split_rule(cutoff: f64, n: usize, breaks: &[f64]) -> Vec<(f64, f64)> {
        let head = (cutoff / 10.0).min(1.0);
        let mut points = vec![0.0, head];
        points.extend(breaks.iter().copied().filter(|b| *b > 0.0 && *b < cutoff));
        points.push(cutoff);
        points.sort_by(f64::total_cmp);
        points.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let mut out = Vec::new();
        for (k, pair) in points.windows(2).enumerate() {
            let (a, b) = (pair[0], pair[1]);
            let share = ((b - a) / cutoff * n as f64).round() as usize;
            out.extend(real_segment(a, b, share.max(2 * PANEL), k == 0));
        }
        out
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate(&self, f: impl Fn(f64) -> C64) -> Result<C64> {
        let mut acc = C64::new(0.0, 0.0);
        for (k, (&x, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let v = f(x);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::NonFinite { index: k, z: C64::new(x, 0.0) });
            }
            acc += w * v;
        }
        Ok(acc)
    }

    /// Principal value PV∫₀^X f(ω)/(ω − x0) dω.
    ///
    /// The pole is subtracted, f(x0)·ln((X−x0)/x0) restores it in closed
    /// form, and the smooth remainder is integrated on panels split at x0.
    pub fn principal_value(&self, f: &dyn Fn(f64) -> C64, x0: f64) -> Result<C64> {
        if !(x0 > 0.0 && x0 < self.cutoff) {
            return Err(Error::Config(format!(
                "principal-value point {x0} must lie inside (0, {})",
                self.cutoff
            )));
        }
        let f0 = f(x0);
        let near = 1e-9 * (1.0 + x0);
        let mut acc = C64::new(0.0, 0.0);
        for (k, (x, w)) in Self::split_rule(self.cutoff, self.n_nodes, &[x0]).into_iter().enumerate() {
            let dx = x - x0;
            let q = if dx.abs() <= near {
                let h = 1e-5 * (1.0 + x0);
                (f(x0 + h) - f(x0 - h)) / (2.0 * h)
            } else {
                (f(x) - f0) / dx
            };
            if !(q.re.is_finite() && q.im.is_finite()) {
                return Err(Error::NonFinite { index: k, z: C64::new(x, 0.0) });
            }
            acc += w * q;
        }
        Ok(acc + f0 * ((self.cutoff - x0) / x0).ln())
    }

    /// ∫₀^X f(ω)/(x0 − ω ± i0) dω = ∓iπ f(x0) − PV∫ f(ω)/(ω − x0) dω.
    pub fn plemelj_integral(&self, f: &dyn Fn(f64) -> C64, x0: f64, side: Side) -> Result<C64> {
        let pv = self.principal_value(f, x0)?;
        let half_residue = C64::new(0.0, PI) * f(x0);
        Ok(match side {
            Side::Plus => -half_residue - pv,
            Side::Minus => half_residue - pv,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(shape: Shape, n: usize) -> ContourGrid {
        ContourGrid::build(&ContourSpec { depth: 0.5, cutoff: 20.0, shape, n_nodes: n }).unwrap()
    }

    #[test]
    fn path_integral_of_one_and_z() {
        for shape in [Shape::Rectangle, Shape::SemiEllipse] {
            let g = grid(shape, 200);
            assert_eq!(g.len(), 200);
            let one = g.integrate(|_| C64::new(1.0, 0.0)).unwrap();
            assert_abs_diff_eq!(one.re, 20.0, epsilon = 1e-10);
            assert_abs_diff_eq!(one.im, 0.0, epsilon = 1e-10);
            let z = g.integrate(|z| z).unwrap();
            assert_abs_diff_eq!(z.re, 200.0, epsilon = 1e-9);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn endpoints_and_interior_placement() {
        let g = grid(Shape::Rectangle, 200);
        assert!(g.nodes().iter().all(|z| z.im < 0.0 && z.re >= 0.0 && z.re <= 20.0));
        assert!(g.nodes()[0].norm() < 1e-2);
        assert!((g.nodes()[g.len() - 1] - 20.0).norm() < 1e-2);
        let bar = g.conjugate();
        assert_eq!(bar.orientation(), Orientation::Upper);
        for (a, b) in g.nodes().iter().zip(bar.nodes()) {
            assert_eq!(a.conj(), *b);
        }
    }

    #[test]
    fn exponential_matches_closed_form() {
        let g = ContourGrid::build(&ContourSpec { depth: 0.5, cutoff: 40.0, shape: Shape::Rectangle, n_nodes: 200 })
            .unwrap();
        let v = g.integrate(|z| (-z).exp()).unwrap();
        let exact = 1.0 - (-40.0f64).exp();
        assert_abs_diff_eq!(v.re, exact, epsilon = 1e-10);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn non_finite_sample_is_reported() {
        let g = grid(Shape::Rectangle, 32);
        let err = g.integrate(|_| C64::new(f64::NAN, 0.0)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 0, .. }));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = [
            ContourSpec { depth: 0.0, cutoff: 20.0, shape: Shape::Rectangle, n_nodes: 200 },
            ContourSpec { depth: 0.5, cutoff: -1.0, shape: Shape::Rectangle, n_nodes: 200 },
            ContourSpec { depth: 0.5, cutoff: 20.0, shape: Shape::Rectangle, n_nodes: 15 },
        ];
        for spec in bad {
            assert!(ContourGrid::build(&spec).is_err());
        }
    }

    #[test]
    fn cauchy_limit_matches_sides_and_off_path_points() {
        let g = grid(Shape::Rectangle, 200);
        let f = |z: C64| z.sqrt() * (-z).exp();
        // Off-path point inside the strip: the integral along Γ equals the
        // real-axis integral minus 2πi f(ζ) (Γ passes below ζ).
        let zeta = C64::new(1.3, -0.2);
        let direct = g.sum(|z| f(z) / (zeta - z));
        let limit = g.cauchy_limit(&f, zeta, Side::Plus);
        assert!((direct - limit).norm() < 1e-10, "{direct} {limit}");
        // Node values: the two sides differ by the full residue.
        let u = g.nodes()[60];
        let plus = g.cauchy_limit(&f, u, Side::Plus);
        let minus = g.cauchy_limit(&f, u, Side::Minus);
        let jump = plus - minus;
        let expected = -C64::new(0.0, 2.0 * PI) * f(u);
        assert!((jump - expected).norm() < 1e-12);
        // Off-path points just outside and just inside converge to the two limits.
        let delta = C64::new(0.0, 1e-4);
        let below = g.cauchy_limit(&f, u - delta, Side::Plus);
        let above = g.cauchy_limit(&f, u + delta, Side::Plus);
        assert!((below - minus).norm() < 1e-3, "{below} {minus}");
        assert!((above - plus).norm() < 1e-3, "{above} {plus}");
        // Far outside, the subtracted form agrees with the plain sum.
        let far = u - C64::new(0.0, 0.4);
        let plain = g.sum(|z| f(z) / (far - z));
        assert!((plain - g.cauchy_limit(&f, far, Side::Minus)).norm() < 1e-8);
    }

    #[test]
    fn principal_value_and_plemelj_sides() {
        let rule = RealAxisRule::new(40.0, 400).unwrap();
        let f = |x: f64| C64::new((-x).exp(), 0.0);
        let plus = rule.plemelj_integral(&f, 1.0, Side::Plus).unwrap();
        let minus = rule.plemelj_integral(&f, 1.0, Side::Minus).unwrap();
        assert!((plus - minus.conj()).norm() < 1e-14);
        assert_abs_diff_eq!(plus.im, -PI * (-1.0f64).exp(), epsilon = 1e-14);
        assert!(rule.plemelj_integral(&f, 0.0, Side::Plus).is_err());
        assert!(rule.plemelj_integral(&f, 40.0, Side::Plus).is_err());
    }

    #[test]
    fn plemelj_without_local_support_is_an_ordinary_integral() {
        let rule = RealAxisRule::new(20.0, 400).unwrap();
        // Smooth bump supported in [3,5]; x0 = 1 sees no pole contribution.
        let bump = |x: f64| {
            if x > 3.0 && x < 5.0 {
                let s = (x - 4.0).powi(2);
                C64::new((-1.0 / (1.0 - s)).exp(), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        };
        let p = rule.plemelj_integral(&bump, 1.0, Side::Plus).unwrap();
        let direct = rule.integrate(|x| bump(x) / (1.0 - x)).unwrap();
        assert_abs_diff_eq!(p.im, 0.0, epsilon = 1e-15);
        assert!((p - direct).norm() < 1e-6);
    }
}
