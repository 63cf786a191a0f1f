//! Discrete level, continuum form factors and their continuations.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::contour::{ContourGrid, ContourSpec};
use crate::error::{Error, Result};

pub type Profile = Arc<dyn Fn(C64) -> C64 + Send + Sync>;
pub type Profile2 = Arc<dyn Fn(C64, C64) -> C64 + Send + Sync>;

/// Built-in form-factor families plus a tag for externally supplied ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// ε·√z·e^{−z/(2s)}, default s = 1.
    SqrtExp,
    /// ε·z·e^{−z/s}, default s = 1.
    PolyExp,
    /// ε·√z/(1+(z/s)²), poles at ±i·s.
    LorentzSqrt,
    /// Closure-backed profile with a declared analyticity depth.
    Custom,
}

impl Family {
    pub fn parse(id: &str) -> Result<Self> {
        match id {
            "sqrt_exp" => Ok(Self::SqrtExp),
            "poly_exp" => Ok(Self::PolyExp),
            "lorentz_sqrt" => Ok(Self::LorentzSqrt),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Self::SqrtExp => "sqrt_exp",
            Self::PolyExp => "poly_exp",
            Self::LorentzSqrt => "lorentz_sqrt",
            Self::Custom => "custom",
        }
    }
}

/// Coupling between the level and the continuum, V(z) = ε·profile(z).
#[derive(Clone)]
pub struct FormFactor {
    family: Family,
    params: Vec<f64>,
    coupling: f64,
    /// Half-width of the strip around ℝ⁺ in which the profile is analytic.
    analytic_depth: f64,
    profile: Profile,
}

impl fmt::Debug for FormFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FormFactor")
            .field("family", &self.family)
            .field("params", &self.params)
            .field("coupling", &self.coupling)
            .field("analytic_depth", &self.analytic_depth)
            .finish()
    }
}

fn scale_param(family: &str, params: &[f64]) -> Result<f64> {
    match params {
        [] => Ok(1.0),
        [s] if s.is_finite() && *s > 0.0 => Ok(*s),
        [s] => Err(Error::Config(format!("{family}: scale must be positive, got {s}"))),
        _ => Err(Error::Config(format!("{family}: expected at most one parameter, got {}", params.len()))),
    }
}

impl FormFactor {
    /// Registry lookup.
    pub fn from_registry(family_id: &str, params: &[f64], coupling: f64) -> Result<Self> {
        let family = Family::parse(family_id)?;
        let s = scale_param(family_id, params)?;
        let (profile, depth): (Profile, f64) = match family {
            Family::SqrtExp => (Arc::new(move |z: C64| z.sqrt() * (-z / (2.0 * s)).exp()), f64::INFINITY),
            Family::PolyExp => (Arc::new(move |z: C64| z * (-z / s).exp()), f64::INFINITY),
            Family::LorentzSqrt => {
                (Arc::new(move |z: C64| z.sqrt() / (1.0 + (z / s) * (z / s))), s)
            }
            Family::Custom => unreachable!("custom families are not in the registry"),
        };
        Ok(Self { family, params: params.to_vec(), coupling, analytic_depth: depth, profile })
    }

    /// Closure-backed form factor. `profile` must be real on ℝ⁺ up to a
    /// phase convention and analytic for |Im z| < `analytic_depth`, Re z > 0.
    pub fn custom(params: Vec<f64>, coupling: f64, analytic_depth: f64, profile: Profile) -> Self {
        Self { family: Family::Custom, params, coupling, analytic_depth, profile }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn analytic_depth(&self) -> f64 {
        self.analytic_depth
    }

    pub fn with_coupling(&self, coupling: f64) -> Self {
        Self { coupling, ..self.clone() }
    }

    /// V(z).
    #[inline]
    pub fn eval(&self, z: C64) -> C64 {
        self.coupling * (self.profile)(z)
    }

    /// V̄(z) = conj(V(conj z)).
    #[inline]
    pub fn eval_bar(&self, z: C64) -> C64 {
        self.eval(z.conj()).conj()
    }
}

/// Continuum–continuum coupling V₂(z, z′), carrying ε² relative to its profile.
#[derive(Clone)]
pub struct FormFactor2 {
    label: String,
    coupling: f64,
    analytic_depth: f64,
    profile: Profile2,
}

impl fmt::Debug for FormFactor2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FormFactor2")
            .field("label", &self.label)
            .field("coupling", &self.coupling)
            .finish()
    }
}

impl FormFactor2 {
    /// ε²·h(z)·h(z′) with h(z) = √z·e^{−z/2}.
    pub fn separable_sqrt_exp(coupling: f64) -> Self {
        let h = |z: C64| z.sqrt() * (-z / 2.0).exp();
        Self {
            label: "separable_sqrt_exp".into(),
            coupling,
            analytic_depth: f64::INFINITY,
            profile: Arc::new(move |z, w| h(z) * h(w)),
        }
    }

    pub fn from_registry(id: &str, coupling: f64) -> Result<Self> {
        match id {
            "separable_sqrt_exp" => Ok(Self::separable_sqrt_exp(coupling)),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }

    /// Closure-backed kernel. The caller guarantees Hermiticity on the real
    /// axis and the absence of a δ(z−z′) component.
    pub fn custom(label: impl Into<String>, coupling: f64, analytic_depth: f64, profile: Profile2) -> Self {
        Self { label: label.into(), coupling, analytic_depth, profile }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_coupling(&self, coupling: f64) -> Self {
        Self { coupling, ..self.clone() }
    }

    #[inline]
    pub fn eval2(&self, z: C64, w: C64) -> C64 {
        self.coupling * self.coupling * (self.profile)(z, w)
    }
}

/// Ω, V, optional V₂ and the contour they are continued onto.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    omega_level: f64,
    form_factor: FormFactor,
    kernel: Option<FormFactor2>,
    contour: ContourSpec,
}

/// Model construction from family name and parameters.
pub fn make_model(
    family_id: &str,
    params: &[f64],
    omega_level: f64,
    coupling: f64,
    contour: ContourSpec,
) -> Result<ModelSpec> {
    let ff = FormFactor::from_registry(family_id, params, coupling)?;
    ModelSpec::new(omega_level, ff, None, contour)
}

impl ModelSpec {
    pub fn new(
        omega_level: f64,
        form_factor: FormFactor,
        kernel: Option<FormFactor2>,
        contour: ContourSpec,
    ) -> Result<Self> {
        if !(omega_level.is_finite() && omega_level > 0.0) {
            return Err(Error::Config(format!("discrete level must be positive, got {omega_level}")));
        }
        let c = form_factor.coupling();
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::Config(format!("coupling must be non-negative, got {c}")));
        }
        contour.validate()?;
        if contour.cutoff <= omega_level {
            return Err(Error::Config(format!(
                "contour cutoff {} must exceed the discrete level {omega_level}",
                contour.cutoff
            )));
        }
        if contour.depth >= form_factor.analytic_depth() {
            return Err(Error::Analyticity(format!(
                "{} form factor is singular at depth {}, contour reaches depth {}",
                form_factor.family().id(),
                form_factor.analytic_depth(),
                contour.depth
            )));
        }
        if let Some(k) = &kernel {
            if contour.depth >= k.analytic_depth {
                return Err(Error::Analyticity(format!(
                    "kernel {} is singular at depth {}, contour reaches depth {}",
                    k.label, k.analytic_depth, contour.depth
                )));
            }
        }
        Ok(Self { omega_level, form_factor, kernel, contour })
    }

    /// Default model: sqrt_exp, Ω = 1, default contour.
    pub fn default_with_coupling(coupling: f64) -> Self {
        make_model("sqrt_exp", &[1.0], 1.0, coupling, ContourSpec::for_level(1.0))
            .expect("default model is valid")
    }

    pub fn omega_level(&self) -> f64 {
        self.omega_level
    }

    pub fn coupling(&self) -> f64 {
        self.form_factor.coupling()
    }

    pub fn form_factor(&self) -> &FormFactor {
        &self.form_factor
    }

    pub fn kernel(&self) -> Option<&FormFactor2> {
        self.kernel.as_ref()
    }

    pub fn contour(&self) -> &ContourSpec {
        &self.contour
    }

    pub fn with_coupling(&self, coupling: f64) -> Self {
        Self {
            form_factor: self.form_factor.with_coupling(coupling),
            kernel: self.kernel.as_ref().map(|k| k.with_coupling(coupling)),
            ..self.clone()
        }
    }

    pub fn with_kernel(&self, kernel: Option<FormFactor2>) -> Result<Self> {
        Self::new(self.omega_level, self.form_factor.clone(), kernel, self.contour)
    }

    pub fn with_contour(&self, contour: ContourSpec) -> Result<Self> {
        Self::new(self.omega_level, self.form_factor.clone(), self.kernel.clone(), contour)
    }

    pub fn grid(&self) -> Result<ContourGrid> {
        ContourGrid::build(&self.contour)
    }

    /// Closed strip {0 ≤ Re z ≤ cutoff, |Im z| ≤ depth} onto which V is continued.
    pub fn in_region(&self, z: C64) -> bool {
        let tol = 1e-12 * (1.0 + self.contour.cutoff);
        z.re >= -tol && z.re <= self.contour.cutoff + tol && z.im.abs() <= self.contour.depth + tol
    }

    fn check(&self, z: C64) -> Result<()> {
        if self.in_region(z) {
            Ok(())
        } else {
            Err(Error::Domain(z))
        }
    }

    pub fn eval_v(&self, z: C64) -> Result<C64> {
        self.check(z)?;
        Ok(self.v(z))
    }

    pub fn eval_vbar(&self, z: C64) -> Result<C64> {
        self.check(z)?;
        Ok(self.vbar(z))
    }

    /// Unchecked V(z) for internal quadrature loops.
    #[inline]
    pub fn v(&self, z: C64) -> C64 {
        self.form_factor.eval(z)
    }

    #[inline]
    pub fn vbar(&self, z: C64) -> C64 {
        self.form_factor.eval_bar(z)
    }

    /// V₂(z, z′), zero when no kernel is configured.
    #[inline]
    pub fn v2(&self, z: C64, w: C64) -> C64 {
        match &self.kernel {
            Some(k) => k.eval2(z, w),
            None => C64::new(0.0, 0.0),
        }
    }

    pub fn has_kernel(&self) -> bool {
        self.kernel.is_some()
    }

    /// V at the discrete level.
    pub fn v_at_level(&self) -> C64 {
        self.v(C64::new(self.omega_level, 0.0))
    }

    /// Golden-rule width 2π|V_Ω|².
    pub fn golden_rule_width(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.v_at_level().norm_sqr()
    }
}

/// JSON description of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: String,
    #[serde(default)]
    pub params: Vec<f64>,
    pub omega: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub kernel: Option<String>,
    #[serde(default)]
    pub contour: Option<ContourSpec>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec> {
        let contour = self.contour.unwrap_or_else(|| ContourSpec::for_level(self.omega));
        let ff = FormFactor::from_registry(&self.family, &self.params, self.epsilon)?;
        let kernel = self.kernel.as_deref().map(|id| FormFactor2::from_registry(id, self.epsilon)).transpose()?;
        ModelSpec::new(self.omega, ff, kernel, contour)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_model_value_at_one() {
        let m = ModelSpec::default_with_coupling(0.1);
        let v = m.eval_v(C64::new(1.0, 0.0)).unwrap();
        assert!((v.re - 0.1 * (-0.5f64).exp()).abs() < 1e-16);
        assert_eq!(v.im, 0.0);
        assert!((v.re - 0.06065306597126334).abs() < 1e-15);
    }

    #[test]
    fn zero_coupling_switches_off_interaction() {
        let m = ModelSpec::default_with_coupling(0.0).with_kernel(Some(FormFactor2::separable_sqrt_exp(0.0))).unwrap();
        for z in [C64::new(0.3, -0.2), C64::new(5.0, 0.4)] {
            assert_eq!(m.v(z), C64::new(0.0, 0.0));
            assert_eq!(m.v2(z, z.conj()), C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn registry_errors() {
        let c = ContourSpec::for_level(1.0);
        assert!(matches!(make_model("gauss", &[], 1.0, 0.1, c), Err(Error::UnknownFamily(_))));
        let deep = c.with_depth(1.5);
        assert!(matches!(make_model("lorentz_sqrt", &[1.0], 1.0, 0.1, deep), Err(Error::Analyticity(_))));
        assert!(make_model("lorentz_sqrt", &[1.0], 1.0, 0.1, c).is_ok());
        assert!(make_model("sqrt_exp", &[-1.0], 1.0, 0.1, c).is_err());
        assert!(make_model("sqrt_exp", &[1.0], -1.0, 0.1, c).is_err());
        assert!(make_model("sqrt_exp", &[1.0], 1.0, -0.1, c).is_err());
        assert!(make_model("sqrt_exp", &[1.0], 30.0, 0.1, c).is_err());
    }

    #[test]
    fn domain_errors_outside_strip() {
        let m = ModelSpec::default_with_coupling(0.1);
        assert!(matches!(m.eval_v(C64::new(1.0, -2.0)), Err(Error::Domain(_))));
        assert!(matches!(m.eval_vbar(C64::new(-1.0, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn json_config_rejects_unknown_keys() {
        let ok = r#"{"family":"sqrt_exp","params":[1.0],"omega":1.0,"epsilon":0.1,
                     "contour":{"depth":0.5,"cutoff":20.0,"n_nodes":200}}"#;
        let cfg: ModelConfig = serde_json::from_str(ok).unwrap();
        assert!(cfg.build().is_ok());
        let bad = r#"{"family":"sqrt_exp","omega":1.0,"epsilon":0.1,"colour":3}"#;
        assert!(serde_json::from_str::<ModelConfig>(bad).is_err());
    }

    fn strip_point() -> impl Strategy<Value = C64> {
        (0.0..20.0f64, -0.5..0.5f64).prop_map(|(x, y)| C64::new(x, y))
    }

    proptest! {
        #[test]
        fn schwarz_reflection(z in strip_point(), fam in 0usize..3) {
            let id = ["sqrt_exp", "poly_exp", "lorentz_sqrt"][fam];
            let m = make_model(id, &[1.0], 1.0, 0.1, ContourSpec::for_level(1.0)).unwrap();
            let lhs = m.eval_v(z.conj()).unwrap().conj();
            let rhs = m.eval_vbar(z).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-15 * (1.0 + lhs.norm()));
        }

        #[test]
        fn coupling_is_linear(z in strip_point(), eps in 0.0..1.0f64) {
            let a = ModelSpec::default_with_coupling(eps);
            let b = a.with_coupling(2.0 * eps);
            prop_assert_eq!(b.v(z), a.v(z) * 2.0);
        }

        #[test]
        fn real_axis_values_are_real(x in 0.0..20.0f64) {
            let m = ModelSpec::default_with_coupling(0.1);
            let z = C64::new(x, 0.0);
            prop_assert_eq!(m.v(z), m.vbar(z));
        }

        #[test]
        fn kernel_hermitian_on_real_axis(x in 0.0..20.0f64, y in 0.0..20.0f64) {
            let k = FormFactor2::separable_sqrt_exp(0.1);
            let (a, b) = (C64::new(x, 0.0), C64::new(y, 0.0));
            prop_assert!((k.eval2(a, b) - k.eval2(b, a).conj()).norm() < 1e-18);
        }
    }
}
