//! Jacobi last multipliers.
//!
//! A last multiplier of a field `X` is a nonvanishing `M` with
//! `div(M X) = 0`, equivalently `d/dt ln M = −div X` along the flow. This
//! module produces closed forms for the conformal (momentum-homogeneous),
//! contact and Cheillini–Liénard cases, and transports `ln M` numerically
//! for any field.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::flow::{self, Augment, FlowError, IntegratorSettings, Trajectory};
use crate::jet::Jet2;
use crate::systems::{Family, FieldError, FieldSpec, LienardSystem, PhaseLayout};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MultiplierError {
    #[error("Hamiltonian is not homogeneous of degree {k} in the momenta: relative Euler residual {residual:e} at {point:?}")]
    NotHomogeneous {
        k: f64,
        residual: f64,
        point: Vec<f64>,
    },
    #[error("homogeneity could not be certified: only {found} usable sample points with H > 0")]
    TooFewRegionPoints { found: usize },
    #[error("K vanishes at q = {0}")]
    KVanishes(f64),
    #[error("l² + l + c = 0 has complex roots (discriminant {0})")]
    ComplexRoots(f64),
    #[error("Cheillini condition not satisfied: c(q) varies by {residual:e}")]
    NotSatisfied {
        residual: f64,
        profile: Vec<(f64, f64)>,
    },
    #[error("Cheillini roots are 0 and -1, neither is admissible")]
    NoAdmissibleRoot,
    #[error("need at least 8 sample points, got {0}")]
    TooFewSamples(usize),
    #[error("invalid exponent l = {0} (l must differ from 0 and -1)")]
    InvalidExponent(f64),
    #[error("point {point:?} lies outside the multiplier region (constraint value {value})")]
    OutsideRegion { point: Vec<f64>, value: f64 },
    #[error("multiplier vanishes at {0:?}")]
    Vanishes(Vec<f64>),
    #[error("multiplier has no closed form")]
    NotClosedForm,
    #[error("expected a {expected} field, got {got}")]
    WrongFamily { expected: Family, got: Family },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MultiplierForm {
    /// `M` valid where `constraint > 0`.
    ClosedForm { expr: Expr, constraint: Expr },
    /// Known only through transport from a reference value.
    Transported {
        reference: Vec<f64>,
        ln_reference: f64,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MultiplierParams {
    /// Homogeneity degree in the momenta.
    pub k: Option<f64>,
    /// Cheillini exponent.
    pub l: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSpec {
    pub form: MultiplierForm,
    pub family: Family,
    pub params: MultiplierParams,
}

impl MultiplierSpec {
    pub fn closed_form(expr: Expr, constraint: Expr, family: Family) -> Self {
        MultiplierSpec {
            form: MultiplierForm::ClosedForm { expr, constraint },
            family,
            params: MultiplierParams::default(),
        }
    }

    pub fn transported(family: Family, reference: Vec<f64>, ln_reference: f64) -> Self {
        MultiplierSpec {
            form: MultiplierForm::Transported {
                reference,
                ln_reference,
            },
            family,
            params: MultiplierParams::default(),
        }
    }

    pub fn expr(&self) -> Option<&Expr> {
        match &self.form {
            MultiplierForm::ClosedForm { expr, .. } => Some(expr),
            MultiplierForm::Transported { .. } => None,
        }
    }

    pub fn constraint(&self) -> Option<&Expr> {
        match &self.form {
            MultiplierForm::ClosedForm { constraint, .. } => Some(constraint),
            MultiplierForm::Transported { .. } => None,
        }
    }

    fn parts(&self) -> Result<(&Expr, &Expr), MultiplierError> {
        match &self.form {
            MultiplierForm::ClosedForm { expr, constraint } => Ok((expr, constraint)),
            MultiplierForm::Transported { .. } => Err(MultiplierError::NotClosedForm),
        }
    }

    /// Whether `x` lies strictly inside the validity region.
    pub fn in_region(&self, x: &[f64]) -> bool {
        self.parts()
            .ok()
            .and_then(|(_, c)| c.eval(x).ok())
            .is_some_and(|v| v > 0.0)
    }

    fn check_region(&self, x: &[f64]) -> Result<&Expr, MultiplierError> {
        let (expr, constraint) = self.parts()?;
        let value = constraint.eval(x)?;
        if !(value > 0.0) {
            return Err(MultiplierError::OutsideRegion {
                point: x.to_vec(),
                value,
            });
        }
        Ok(expr)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, MultiplierError> {
        let m = self.check_region(x)?.eval(x)?;
        if m == 0.0 {
            return Err(MultiplierError::Vanishes(x.to_vec()));
        }
        Ok(m)
    }

    pub fn eval_jet2(&self, x: &[f64]) -> Result<Jet2, MultiplierError> {
        let jet = self.check_region(x)?.eval_jet2(x)?;
        if jet.value() == 0.0 {
            return Err(MultiplierError::Vanishes(x.to_vec()));
        }
        Ok(jet)
    }

    /// `ln |M(x)|`; the sign of `M` is constant on a connected region.
    pub fn ln_abs(&self, x: &[f64]) -> Result<f64, MultiplierError> {
        Ok(self.eval(x)?.abs().ln())
    }

    /// `(1 + eps·q1)·M`, which is not a multiplier unless `eps = 0`.
    pub fn perturbed(&self, eps: f64) -> Result<MultiplierSpec, MultiplierError> {
        let (expr, constraint) = self.parts()?;
        let vars = crate::expr::Variables::new(expr.vars())?;
        let one = Expr::constant(1.0, &vars);
        let factor = &one + &Expr::variable(0, &vars).scale(eps);
        Ok(MultiplierSpec {
            form: MultiplierForm::ClosedForm {
                expr: &factor * expr,
                constraint: constraint.clone(),
            },
            family: self.family,
            params: self.params,
        })
    }
}

/// `Δ(H) = Σ p_i ∂H/∂p_i` at `x`.
fn liouville_derivative(jet: &Jet2, layout: PhaseLayout, x: &[f64]) -> f64 {
    (0..layout.n)
        .map(|i| x[layout.p(i)] * jet.grad()[layout.p(i)])
        .sum()
}

/// `M = H^{−n/k}` for `H` homogeneous of degree `k` in the momenta, valid on
/// `H > 0`. Homogeneity is certified through Euler's identity `Δ(H) = kH`
/// on 100 seeded points of `[-2, 2]^{2n}` with `H > 0`.
pub fn multiplier_conformal_homogeneous(
    hamiltonian: &Expr,
    k: f64,
    n: usize,
) -> Result<MultiplierSpec, MultiplierError> {
    if !(k > 0.0) {
        return Err(MultiplierError::NotHomogeneous {
            k,
            residual: f64::INFINITY,
            point: Vec::new(),
        });
    }
    let layout = PhaseLayout::symplectic(n);
    let h = hamiltonian.rebind(&layout.variables())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x4a4c_4d00 + n as u64);
    let mut worst = (0.0f64, Vec::new());
    let mut found = 0;
    for _ in 0..100_000 {
        if found == 100 {
            break;
        }
        let x: Vec<f64> = (0..layout.dim())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let Ok(jet) = h.eval_jet2(&x) else {
            continue;
        };
        if !(jet.value() > 0.0) {
            continue;
        }
        found += 1;
        let residual =
            (liouville_derivative(&jet, layout, &x) - k * jet.value()).abs() / jet.value();
        if residual > worst.0 {
            worst = (residual, x);
        }
    }
    if found < 100 {
        return Err(MultiplierError::TooFewRegionPoints { found });
    }
    if worst.0 >= 1e-8 {
        return Err(MultiplierError::NotHomogeneous {
            k,
            residual: worst.0,
            point: worst.1,
        });
    }
    let mut spec = MultiplierSpec::closed_form(h.powf(-(n as f64) / k), h, Family::Conformal);
    spec.params.k = Some(k);
    Ok(spec)
}

/// Which side of `h = 0` a contact multiplier lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Positive,
    Negative,
}

/// `M = h^{−(n+1)}` on the chosen side of `h = 0`.
pub fn multiplier_contact(
    h: &Expr,
    n: usize,
    side: Side,
) -> Result<MultiplierSpec, MultiplierError> {
    let layout = PhaseLayout::contact(n);
    let h = h.rebind(&layout.variables())?;
    let constraint = match side {
        Side::Positive => h.clone(),
        Side::Negative => -&h,
    };
    Ok(MultiplierSpec::closed_form(
        h.powf(-(n as f64 + 1.0)),
        constraint,
        Family::Contact,
    ))
}

/// Outcome of the Cheillini solver.
#[derive(Debug, Clone, PartialEq)]
pub struct CheilliniRoots {
    /// The constant `c` with `l² + l + c = 0`.
    pub c: f64,
    pub l_minus: f64,
    pub l_plus: f64,
    /// `max |c(q) − c|` over the samples.
    pub residual: f64,
    /// `(q, c(q))` per sample.
    pub profile: Vec<(f64, f64)>,
}

impl CheilliniRoots {
    pub fn roots(&self) -> [f64; 2] {
        [self.l_minus, self.l_plus]
    }

    pub fn discriminant(&self) -> f64 {
        1.0 - 4.0 * self.c
    }

    /// `|l² + l + c|` for a root.
    pub fn root_residual(&self, l: f64) -> f64 {
        (l * l + l + self.c).abs()
    }
}

const CHEILLINI_TOL: f64 = 1e-8;
const EXCLUDED_ROOT_TOL: f64 = 1e-12;

fn is_excluded_exponent(l: f64) -> bool {
    l.abs() < EXCLUDED_ROOT_TOL || (l + 1.0).abs() < EXCLUDED_ROOT_TOL || !l.is_finite()
}

/// `c(q) = (d/dq [V′/(mK)]) / K` sampled at `q_samples` (with `p = 0`).
pub fn cheillini_profile(
    system: &LienardSystem,
    q_samples: &[f64],
) -> Result<Vec<(f64, f64)>, MultiplierError> {
    let ratio = &system.vprime / &system.damping.scale(system.mass);
    q_samples
        .iter()
        .map(|&q| {
            let x = [q, 0.0];
            let k = system.damping.eval(&x)?;
            if k == 0.0 {
                return Err(MultiplierError::KVanishes(q));
            }
            let slope = ratio.eval_jet2(&x)?.grad()[0];
            Ok((q, slope / k))
        })
        .collect()
}

/// Solve the Cheillini condition `d/dq(V′/(mK)) + l(l+1)K = 0` for constant
/// `l`, returning both real roots.
pub fn cheillini_roots(
    system: &LienardSystem,
    q_samples: &[f64],
) -> Result<CheilliniRoots, MultiplierError> {
    if q_samples.len() < 8 {
        return Err(MultiplierError::TooFewSamples(q_samples.len()));
    }
    let profile = cheillini_profile(system, q_samples)?;
    let mean = profile.iter().map(|(_, c)| c).sum::<f64>() / profile.len() as f64;
    let residual = profile
        .iter()
        .map(|(_, c)| (c - mean).abs())
        .fold(0.0, f64::max);
    if residual > CHEILLINI_TOL * (1.0 + mean.abs()) {
        return Err(MultiplierError::NotSatisfied { residual, profile });
    }
    let disc = 1.0 - 4.0 * mean;
    if disc < 0.0 {
        return Err(MultiplierError::ComplexRoots(disc));
    }
    // l_minus ≤ -1/2 is never zero; Vieta's product gives the other root
    // without cancellation.
    let l_minus = (-1.0 - disc.sqrt()) / 2.0;
    let l_plus = mean / l_minus;
    if is_excluded_exponent(l_minus) || is_excluded_exponent(l_plus) {
        return Err(MultiplierError::NoAdmissibleRoot);
    }
    Ok(CheilliniRoots {
        c: mean,
        l_minus,
        l_plus,
        residual,
        profile,
    })
}

/// Closed-form Liénard multiplier `M = u^{1/l}` with `u = (p − G(q))/m`
/// and `G = V′/(lK)`, valid where `u > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LienardMultiplier {
    pub spec: MultiplierSpec,
    pub l: f64,
    pub g: Expr,
    pub u: Expr,
    damping: Expr,
}

pub fn multiplier_lienard(
    system: &LienardSystem,
    l: f64,
) -> Result<LienardMultiplier, MultiplierError> {
    if is_excluded_exponent(l) {
        return Err(MultiplierError::InvalidExponent(l));
    }
    let vars = PhaseLayout::symplectic(1).variables();
    let p = Expr::variable(1, &vars);
    let g = &system.vprime / &system.damping.scale(l);
    let u = (&p - &g).scale(1.0 / system.mass);
    let mut spec = MultiplierSpec::closed_form(u.powf(1.0 / l), u.clone(), Family::Lienard);
    spec.params.l = Some(l);
    Ok(LienardMultiplier {
        spec,
        l,
        g,
        u,
        damping: system.damping.clone(),
    })
}

impl LienardMultiplier {
    /// `|u̇ − l·u·K(q)| / (1 + |u|)` at `x`, with `u̇` taken along `field`.
    pub fn u_residual(&self, field: &FieldSpec, x: &[f64]) -> Result<f64, MultiplierError> {
        let u = self.u.eval(x)?;
        let udot = field.lie_derivative(&self.u, x)?;
        let k = self.damping.eval(x)?;
        Ok((udot - self.l * u * k).abs() / (1.0 + u.abs()))
    }
}

/// Integrate `d/dt ln M = −div X` jointly with the trajectory. The result
/// carries `ln M(t) − ln M(0)` in `log_multiplier` and `ln det Dφ_t` in
/// `log_volume`.
pub fn multiplier_transport(
    field: &FieldSpec,
    x0: &[f64],
    grid: &[f64],
    settings: &IntegratorSettings,
) -> Result<Trajectory, MultiplierError> {
    Ok(flow::integrate_augmented(
        field,
        x0,
        grid,
        settings,
        Augment {
            log_volume: true,
            log_multiplier: true,
            variational: false,
        },
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::parse_phase;

    fn sym(src: &str) -> Expr {
        parse_phase(src, PhaseLayout::symplectic(1)).unwrap()
    }

    fn cont(src: &str) -> Expr {
        parse_phase(src, PhaseLayout::contact(1)).unwrap()
    }

    #[test]
    fn free_particle_multiplier() {
        let h = sym("p^2/2");
        let m = multiplier_conformal_homogeneous(&h, 2.0, 1).unwrap();
        let x = [0.3, 1.7];
        let expected = (1.7f64 * 1.7 / 2.0).powf(-0.5);
        assert!((m.eval(&x).unwrap() - expected).abs() < 1e-15);
        assert_eq!(m.params.k, Some(2.0));
        assert!(matches!(
            m.eval(&[0.0, 0.0]),
            Err(MultiplierError::OutsideRegion { .. })
        ));
    }

    #[test]
    fn potential_breaks_homogeneity() {
        let err = multiplier_conformal_homogeneous(&sym("p^2/2 + q^2/2"), 2.0, 1).unwrap_err();
        match err {
            MultiplierError::NotHomogeneous {
                residual, point, ..
            } => {
                assert!(residual > 1e-2);
                assert_eq!(point.len(), 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degree_one_momentum() {
        let m = multiplier_conformal_homogeneous(&sym("p"), 1.0, 1).unwrap();
        assert_eq!(m.eval(&[5.0, 4.0]).unwrap(), 0.25);
        let jet = m.eval_jet2(&[5.0, 4.0]).unwrap();
        assert_eq!(jet.grad()[0], 0.0);
    }

    #[test]
    fn contact_exponents() {
        // h = s, evaluated where h = 2
        let m1 = multiplier_contact(&cont("s"), 1, Side::Positive).unwrap();
        assert_eq!(m1.eval(&[0.0, 0.0, 2.0]).unwrap(), 0.25);
        let l2 = PhaseLayout::contact(2);
        let h2 = parse_phase("s", l2).unwrap();
        let m2 = multiplier_contact(&h2, 2, Side::Positive).unwrap();
        assert_eq!(m2.eval(&[0.0, 0.0, 0.0, 0.0, 2.0]).unwrap(), 0.125);
        assert!(m1.eval(&[0.0, 0.0, 0.0]).is_err());
        let neg = multiplier_contact(&cont("s"), 1, Side::Negative).unwrap();
        assert_eq!(neg.eval(&[0.0, 0.0, -2.0]).unwrap(), 0.25);
    }

    fn samples() -> Vec<f64> {
        (0..9).map(|i| -2.0 + 0.5 * i as f64).collect()
    }

    #[test]
    fn cheillini_linear_force_constant_damping() {
        let sys = LienardSystem::parse("4*q", "5", 1.0).unwrap();
        let roots = cheillini_roots(&sys, &samples()).unwrap();
        // oracle: l² + l + 4/25 = 0, discriminant 9/25
        let disc: f64 = 1.0 - 4.0 * (4.0 / 25.0);
        assert!((roots.discriminant() - disc).abs() < 1e-15);
        let oracle = [(-1.0 - disc.sqrt()) / 2.0, (-1.0 + disc.sqrt()) / 2.0];
        assert!((roots.l_minus - oracle[0]).abs() < 1e-15);
        assert!((roots.l_plus - oracle[1]).abs() < 1e-15);
        assert!((roots.l_minus + 0.8).abs() < 1e-15 && (roots.l_plus + 0.2).abs() < 1e-15);
        for l in roots.roots() {
            assert!(roots.root_residual(l) <= 1e-12);
        }
    }

    #[test]
    fn cheillini_unstable_linear_force() {
        let sys = LienardSystem::parse("-2*q", "1", 1.0).unwrap();
        let roots = cheillini_roots(&sys, &samples()).unwrap();
        assert_eq!(roots.l_minus, -2.0);
        assert_eq!(roots.l_plus, 1.0);
    }

    #[test]
    fn cheillini_cubic_force_fails() {
        let sys = LienardSystem::parse("q^3", "1", 1.0).unwrap();
        assert!(matches!(
            cheillini_roots(&sys, &samples()),
            Err(MultiplierError::NotSatisfied { .. })
        ));
    }

    #[test]
    fn cheillini_error_paths() {
        let sys = LienardSystem::parse("q", "q", 1.0).unwrap();
        assert!(matches!(
            cheillini_roots(&sys, &samples()),
            Err(MultiplierError::KVanishes(q)) if q == 0.0
        ));
        let few = LienardSystem::parse("q", "1", 1.0).unwrap();
        assert_eq!(
            cheillini_roots(&few, &[1.0, 2.0]).unwrap_err(),
            MultiplierError::TooFewSamples(2)
        );
        // c = 1: discriminant -3
        let complex = LienardSystem::parse("q", "1", 1.0).unwrap();
        assert!(matches!(
            cheillini_roots(&complex, &samples()),
            Err(MultiplierError::ComplexRoots(d)) if (d + 3.0).abs() < 1e-12
        ));
        let zero = LienardSystem::parse("3", "1", 1.0).unwrap();
        assert_eq!(
            cheillini_roots(&zero, &samples()).unwrap_err(),
            MultiplierError::NoAdmissibleRoot
        );
    }

    #[test]
    fn lienard_multipliers_for_both_roots() {
        let sys = LienardSystem::parse("4*q", "5", 1.0).unwrap();
        let x = [1.0, 1.0];
        let m1 = multiplier_lienard(&sys, -0.2).unwrap();
        assert!((m1.spec.eval(&x).unwrap() - 3.2e-4).abs() < 1e-15);
        // G = -4q
        assert!((m1.g.eval(&[1.0, 0.0]).unwrap() + 4.0).abs() < 1e-14);
        let m2 = multiplier_lienard(&sys, -0.8).unwrap();
        assert!((m2.spec.eval(&x).unwrap() - 2f64.powf(-1.25)).abs() < 1e-14);
        assert!((m2.spec.eval(&x).unwrap() - 0.4204).abs() < 1e-4);
        assert_eq!(
            multiplier_lienard(&sys, -1.0).unwrap_err(),
            MultiplierError::InvalidExponent(-1.0)
        );
        assert!(multiplier_lienard(&sys, 0.0).is_err());
    }

    #[test]
    fn perturbation_changes_value() {
        let m = multiplier_contact(&cont("s"), 1, Side::Positive).unwrap();
        let pert = m.perturbed(0.01).unwrap();
        let x = [2.0, 0.0, 1.0];
        assert!((pert.eval(&x).unwrap() - 1.02).abs() < 1e-15);
    }
}
