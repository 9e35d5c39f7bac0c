//! Vector fields on phase space in Darboux coordinates.
//!
//! Coordinates are ordered `(q1..qn, p1..pn)` for symplectic families and
//! `(q1..qn, p1..pn, s)` for contact fields. With one degree of freedom the
//! canonical names are `q`, `p` (and `s`), and `q1`, `p1` are accepted as
//! aliases.

use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::{Expr, ExprError, Variables};
use crate::jet::Jet2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("{what} must depend on position only, but references `{name}`")]
    Constraint { what: &'static str, name: String },
    #[error("mass must be positive, got {0}")]
    NonpositiveMass(f64),
    #[error("degrees of freedom must be positive")]
    ZeroDegrees,
    #[error("phase point has {got} coordinates, field expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("at {point:?}: {source}")]
    AtPoint {
        point: Vec<f64>,
        #[source]
        source: ExprError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Conservative,
    Conformal,
    Contact,
    GeneralizedConformal,
    Lienard,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Conservative => "conservative",
            Family::Conformal => "conformal",
            Family::Contact => "contact",
            Family::GeneralizedConformal => "generalized_conformal",
            Family::Lienard => "lienard",
        }
    }

    pub fn from_name(name: &str) -> Option<Family> {
        [
            Family::Conservative,
            Family::Conformal,
            Family::Contact,
            Family::GeneralizedConformal,
            Family::Lienard,
        ]
        .into_iter()
        .find(|f| f.name() == name)
    }

    pub fn is_contact(self) -> bool {
        self == Family::Contact
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Coordinate layout of a Darboux chart with `n` degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseLayout {
    pub n: usize,
    pub contact: bool,
}

impl PhaseLayout {
    pub fn symplectic(n: usize) -> Self {
        PhaseLayout { n, contact: false }
    }

    pub fn contact(n: usize) -> Self {
        PhaseLayout { n, contact: true }
    }

    pub fn dim(&self) -> usize {
        2 * self.n + usize::from(self.contact)
    }

    pub fn q(&self, i: usize) -> usize {
        i
    }

    pub fn p(&self, i: usize) -> usize {
        self.n + i
    }

    /// Index of `s`; only meaningful for contact layouts.
    pub fn s(&self) -> usize {
        2 * self.n
    }

    pub fn variables(&self) -> Variables {
        let names = self.names();
        let mut vars = Variables::new(&names).expect("canonical names are distinct");
        if self.n == 1 {
            vars = vars.with_alias("q1", "q").with_alias("p1", "p");
        }
        vars
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        if self.n == 1 {
            names.extend(["q".to_string(), "p".to_string()]);
        } else {
            names.extend((1..=self.n).map(|i| format!("q{i}")));
            names.extend((1..=self.n).map(|i| format!("p{i}")));
        }
        if self.contact {
            names.push("s".to_string());
        }
        names
    }
}

/// Parse an expression over the canonical variables of `layout`.
pub fn parse_phase(source: &str, layout: PhaseLayout) -> Result<Expr, ExprError> {
    crate::expr::parse_with(source, &layout.variables())
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    Conservative {
        hamiltonian: Expr,
    },
    Conformal {
        hamiltonian: Expr,
        gamma: f64,
    },
    Contact {
        hamiltonian: Expr,
    },
    GeneralizedConformal {
        hamiltonian: Expr,
        damping: Expr,
    },
    /// `q̇ = p/m`, `ṗ = −m·g(q) − f(q)·p`.
    Lienard {
        f: Expr,
        g: Expr,
        mass: f64,
    },
}

/// An immutable vector field on a Darboux chart.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    layout: PhaseLayout,
    kind: FieldKind,
}

fn position_only(expr: &Expr, layout: PhaseLayout, what: &'static str) -> Result<(), FieldError> {
    let names = layout.names();
    let positions = &names[..layout.n];
    if let Some(bad) = expr
        .referenced_names()
        .into_iter()
        .find(|n| !positions.iter().any(|q| q == n))
    {
        return Err(FieldError::Constraint {
            what,
            name: bad.to_string(),
        });
    }
    Ok(())
}

fn check_n(n: usize) -> Result<(), FieldError> {
    if n == 0 {
        Err(FieldError::ZeroDegrees)
    } else {
        Ok(())
    }
}

pub fn build_hamiltonian_field(hamiltonian: &Expr, n: usize) -> Result<FieldSpec, FieldError> {
    check_n(n)?;
    let layout = PhaseLayout::symplectic(n);
    Ok(FieldSpec {
        layout,
        kind: FieldKind::Conservative {
            hamiltonian: hamiltonian.rebind(&layout.variables())?,
        },
    })
}

pub fn build_conformal_field(
    hamiltonian: &Expr,
    gamma: f64,
    n: usize,
) -> Result<FieldSpec, FieldError> {
    check_n(n)?;
    let layout = PhaseLayout::symplectic(n);
    Ok(FieldSpec {
        layout,
        kind: FieldKind::Conformal {
            hamiltonian: hamiltonian.rebind(&layout.variables())?,
            gamma,
        },
    })
}

pub fn build_contact_field(hamiltonian: &Expr, n: usize) -> Result<FieldSpec, FieldError> {
    check_n(n)?;
    let layout = PhaseLayout::contact(n);
    Ok(FieldSpec {
        layout,
        kind: FieldKind::Contact {
            hamiltonian: hamiltonian.rebind(&layout.variables())?,
        },
    })
}

pub fn build_generalized_conformal_field(
    hamiltonian: &Expr,
    damping: &Expr,
    n: usize,
) -> Result<FieldSpec, FieldError> {
    check_n(n)?;
    let layout = PhaseLayout::symplectic(n);
    position_only(damping, layout, "damping K")?;
    Ok(FieldSpec {
        layout,
        kind: FieldKind::GeneralizedConformal {
            hamiltonian: hamiltonian.rebind(&layout.variables())?,
            damping: damping.rebind(&layout.variables())?,
        },
    })
}

/// Liénard system `q̈ + f(q) q̇ + g(q) = 0` written in `(q, p = m q̇)`.
pub fn build_lienard_field(f: &Expr, g: &Expr, mass: f64) -> Result<FieldSpec, FieldError> {
    if !(mass > 0.0) {
        return Err(FieldError::NonpositiveMass(mass));
    }
    let layout = PhaseLayout::symplectic(1);
    position_only(f, layout, "f")?;
    position_only(g, layout, "g")?;
    Ok(FieldSpec {
        layout,
        kind: FieldKind::Lienard {
            f: f.rebind(&layout.variables())?,
            g: g.rebind(&layout.variables())?,
            mass,
        },
    })
}

/// A Liénard system given by its force `V′(q)`, damping `K(q)` and mass.
#[derive(Debug, Clone, PartialEq)]
pub struct LienardSystem {
    pub vprime: Expr,
    pub damping: Expr,
    pub mass: f64,
}

impl LienardSystem {
    pub fn new(vprime: &Expr, damping: &Expr, mass: f64) -> Result<Self, FieldError> {
        if !(mass > 0.0) {
            return Err(FieldError::NonpositiveMass(mass));
        }
        let layout = PhaseLayout::symplectic(1);
        position_only(vprime, layout, "V'")?;
        position_only(damping, layout, "damping K")?;
        let vars = layout.variables();
        Ok(LienardSystem {
            vprime: vprime.rebind(&vars)?,
            damping: damping.rebind(&vars)?,
            mass,
        })
    }

    pub fn parse(vprime: &str, damping: &str, mass: f64) -> Result<Self, FieldError> {
        let layout = PhaseLayout::symplectic(1);
        Self::new(
            &parse_phase(vprime, layout)?,
            &parse_phase(damping, layout)?,
            mass,
        )
    }

    /// The Liénard field with `f = K` and `g = V′/m`.
    pub fn field(&self) -> FieldSpec {
        let g = self.vprime.scale(1.0 / self.mass);
        build_lienard_field(&self.damping, &g, self.mass).expect("validated in constructor")
    }
}

impl FieldSpec {
    pub fn family(&self) -> Family {
        match self.kind {
            FieldKind::Conservative { .. } => Family::Conservative,
            FieldKind::Conformal { .. } => Family::Conformal,
            FieldKind::Contact { .. } => Family::Contact,
            FieldKind::GeneralizedConformal { .. } => Family::GeneralizedConformal,
            FieldKind::Lienard { .. } => Family::Lienard,
        }
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn layout(&self) -> PhaseLayout {
        self.layout
    }

    pub fn n(&self) -> usize {
        self.layout.n
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn variables(&self) -> Variables {
        self.layout.variables()
    }

    /// `H` or `h`, when the family has one.
    pub fn hamiltonian(&self) -> Option<&Expr> {
        match &self.kind {
            FieldKind::Conservative { hamiltonian }
            | FieldKind::Conformal { hamiltonian, .. }
            | FieldKind::Contact { hamiltonian }
            | FieldKind::GeneralizedConformal { hamiltonian, .. } => Some(hamiltonian),
            FieldKind::Lienard { .. } => None,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), FieldError> {
        if x.len() != self.dim() {
            return Err(FieldError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn jet(&self, e: &Expr, x: &[f64]) -> Result<Jet2, FieldError> {
        e.eval_jet2(x).map_err(|source| FieldError::AtPoint {
            point: x.to_vec(),
            source,
        })
    }

    /// Velocity of the field at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, FieldError> {
        Ok(self.eval_with_jacobian(x)?.0)
    }

    /// Velocity together with its Jacobian `∂v_i/∂x_j`, both exact up to
    /// rounding since they are read off second-order jets.
    pub fn eval_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), FieldError> {
        self.check_dim(x)?;
        let layout = self.layout;
        let (n, dim) = (layout.n, layout.dim());
        let mut v = vec![0.0; dim];
        let mut jac = DMatrix::zeros(dim, dim);
        match &self.kind {
            FieldKind::Conservative { hamiltonian }
            | FieldKind::Conformal { hamiltonian, .. }
            | FieldKind::GeneralizedConformal { hamiltonian, .. } => {
                let h = self.jet(hamiltonian, x)?;
                // damping coefficient multiplying p_i and its gradient
                let (d, dgrad) = match &self.kind {
                    FieldKind::Conformal { gamma, .. } => (*gamma, None),
                    FieldKind::GeneralizedConformal { damping, .. } => {
                        let k = self.jet(damping, x)?;
                        (k.value(), Some(k.grad().to_vec()))
                    }
                    _ => (0.0, None),
                };
                for i in 0..n {
                    let (qi, pi) = (layout.q(i), layout.p(i));
                    v[qi] = h.grad()[pi];
                    v[pi] = -h.grad()[qi] - d * x[pi];
                    for j in 0..dim {
                        jac[(qi, j)] = h.hess(pi, j);
                        jac[(pi, j)] = -h.hess(qi, j);
                        if let Some(dg) = &dgrad {
                            jac[(pi, j)] -= dg[j] * x[pi];
                        }
                    }
                    jac[(pi, pi)] -= d;
                }
            }
            FieldKind::Contact { hamiltonian } => {
                let h = self.jet(hamiltonian, x)?;
                let s = layout.s();
                let hs = h.grad()[s];
                v[s] = -h.value();
                for j in 0..dim {
                    jac[(s, j)] = -h.grad()[j];
                }
                for i in 0..n {
                    let (qi, pi) = (layout.q(i), layout.p(i));
                    v[qi] = h.grad()[pi];
                    v[pi] = -h.grad()[qi] - x[pi] * hs;
                    v[s] += x[pi] * h.grad()[pi];
                    for j in 0..dim {
                        jac[(qi, j)] = h.hess(pi, j);
                        jac[(pi, j)] = -h.hess(qi, j) - x[pi] * h.hess(s, j);
                        jac[(s, j)] += x[pi] * h.hess(pi, j);
                    }
                    jac[(pi, pi)] -= hs;
                    jac[(s, pi)] += h.grad()[pi];
                }
            }
            FieldKind::Lienard { f, g, mass } => {
                let (fj, gj) = (self.jet(f, x)?, self.jet(g, x)?);
                let p = x[1];
                v[0] = p / mass;
                v[1] = -mass * gj.value() - fj.value() * p;
                jac[(0, 1)] = 1.0 / mass;
                jac[(1, 0)] = -mass * gj.grad()[0] - fj.grad()[0] * p;
                jac[(1, 1)] = -fj.value();
            }
        }
        Ok((v, jac))
    }

    /// Divergence as the trace of the jet Jacobian.
    pub fn divergence(&self, x: &[f64]) -> Result<f64, FieldError> {
        Ok(self.eval_with_jacobian(x)?.1.trace())
    }

    /// The family's closed-form divergence: `0`, `−γn`, `−(n+1)∂h/∂s`,
    /// `−nK(q)` or `−f(q)`.
    pub fn closed_form_divergence(&self, x: &[f64]) -> Result<f64, FieldError> {
        self.check_dim(x)?;
        let n = self.n() as f64;
        Ok(match &self.kind {
            FieldKind::Conservative { .. } => 0.0,
            FieldKind::Conformal { gamma, .. } => -gamma * n,
            FieldKind::Contact { hamiltonian } => {
                -(n + 1.0) * self.jet(hamiltonian, x)?.grad()[self.layout.s()]
            }
            FieldKind::GeneralizedConformal { damping, .. } => -n * self.jet(damping, x)?.value(),
            FieldKind::Lienard { f, .. } => -self.jet(f, x)?.value(),
        })
    }

    /// Time derivative of `e` along the flow, `∇e · X`.
    pub fn lie_derivative(&self, e: &Expr, x: &[f64]) -> Result<f64, FieldError> {
        let v = self.eval(x)?;
        Ok(self.jet(e, x)?.directional(&v))
    }

    /// Constant value of the divergence if it is structurally constant.
    ///
    /// For contact fields constancy of `∂h/∂s` is probed numerically: the
    /// `s` row of the Hessian of `h` must vanish on a fixed probe set.
    pub fn constant_divergence(&self) -> Option<f64> {
        let n = self.n() as f64;
        match &self.kind {
            FieldKind::Conservative { .. } => Some(0.0),
            FieldKind::Conformal { gamma, .. } => Some(-gamma * n),
            FieldKind::GeneralizedConformal { damping, .. } if damping.is_constant() => {
                damping.eval(&vec![0.0; self.dim()]).ok().map(|k| -n * k)
            }
            FieldKind::Lienard { f, .. } if f.is_constant() => f.eval(&[0.0, 0.0]).ok().map(|k| -k),
            FieldKind::Contact { hamiltonian } => {
                let s = self.layout.s();
                if !hamiltonian.references(s) {
                    return Some(0.0);
                }
                let mut slope = None;
                for x in probe_points(self.dim()) {
                    let Ok(j) = hamiltonian.eval_jet2(&x) else {
                        continue;
                    };
                    if (0..self.dim()).any(|k| j.hess(s, k) != 0.0) {
                        return None;
                    }
                    let hs = j.grad()[s];
                    match slope {
                        None => slope = Some(hs),
                        Some(prev) if prev != hs => return None,
                        _ => {}
                    }
                }
                slope.map(|hs| -(n + 1.0) * hs)
            }
            _ => None,
        }
    }
}

/// Deterministic, irregular probe points in `[-2, 2]^dim`.
fn probe_points(dim: usize) -> impl Iterator<Item = Vec<f64>> {
    (0..32u32).map(move |k| {
        (0..dim)
            .map(|c| {
                let t =
                    ((k as f64 + 1.0) * 0.618_033_988_749_895 + c as f64 * 0.414_213_562).fract();
                4.0 * t - 2.0
            })
            .collect()
    })
}
