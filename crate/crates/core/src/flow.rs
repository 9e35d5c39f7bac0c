//! Trajectory integration for [`FieldSpec`]s.
//!
//! Alongside the phase point the integrator can carry the accumulated
//! divergence `∫ div X dt` (which equals `ln det Dφ_t`), its negative (the
//! transported `ln M`) and the variational equations `Φ̇ = (∂X/∂x) Φ`.
//! All augmented components share one stepper and one error control.
//!
//! Two steppers are available: classical RK4 with a fixed step and the
//! Dormand–Prince 5(4) embedded pair. Values at the requested sample times
//! come from cubic Hermite interpolation on accepted steps.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::systems::{FieldError, FieldSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("invalid integrator settings: {0}")]
    Settings(String),
    #[error("invalid sample grid: {0}")]
    Grid(String),
    #[error("initial condition has {got} coordinates, field expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("maximum number of steps ({steps}) reached at t = {t}")]
    MaxSteps { t: f64, steps: usize },
    #[error("at t = {t}: {source}")]
    Domain {
        t: f64,
        #[source]
        source: FieldError,
    },
}

impl FlowError {
    /// Whether this is a numerical breakdown rather than a domain problem.
    pub fn is_integration_failure(&self) -> bool {
        matches!(
            self,
            FlowError::StepUnderflow { .. } | FlowError::MaxSteps { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Rk4 { dt: f64 },
    Dopri5 { rtol: f64, atol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    pub method: Method,
    pub max_steps: usize,
}

impl IntegratorSettings {
    pub const DEFAULT_MAX_STEPS: usize = 5_000_000;

    pub fn rk4(dt: f64) -> Self {
        IntegratorSettings {
            method: Method::Rk4 { dt },
            max_steps: Self::DEFAULT_MAX_STEPS,
        }
    }

    pub fn dopri5(rtol: f64, atol: f64) -> Self {
        IntegratorSettings {
            method: Method::Dopri5 { rtol, atol },
            max_steps: Self::DEFAULT_MAX_STEPS,
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: &str| Err(FlowError::Settings(m.to_string()));
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        match self.method {
            Method::Rk4 { dt } if !(dt > 0.0 && dt.is_finite()) => bad("dt must be positive"),
            Method::Dopri5 { rtol, .. } if !(rtol >= 1e-14 && rtol.is_finite()) => {
                bad("rtol must be at least 1e-14")
            }
            Method::Dopri5 { atol, .. } if !(atol > 0.0 && atol.is_finite()) => {
                bad("atol must be positive")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Largest scaled error norm among accepted steps (adaptive only).
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `ln det Dφ_t`, from integrating the divergence.
    pub log_volume: Option<Vec<f64>>,
    /// Transported `ln M(t) − ln M(0)`, from `d/dt ln M = −div X`.
    pub log_multiplier: Option<Vec<f64>>,
    /// `Dφ_t` at each sample, from the variational equations.
    pub jacobians: Option<Vec<DMatrix<f64>>>,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory has at least one sample")
    }
}

/// `samples` equally spaced times from `t_start` to `t_end` inclusive.
pub fn uniform_grid(t_start: f64, t_end: f64, samples: usize) -> Vec<f64> {
    match samples {
        0 => Vec::new(),
        1 => vec![t_start],
        _ => {
            let step = (t_end - t_start) / (samples - 1) as f64;
            let mut grid: Vec<f64> = (0..samples).map(|i| t_start + step * i as f64).collect();
            grid[samples - 1] = t_end;
            grid
        }
    }
}

/// Which extra quantities ride along with the phase point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Augment {
    pub log_volume: bool,
    pub log_multiplier: bool,
    pub variational: bool,
}

/// Autonomous ODE `ẏ = F(y)`.
trait Rhs {
    fn dim(&self) -> usize;
    fn eval(&self, y: &[f64], dy: &mut [f64]) -> Result<(), FieldError>;
}

struct Augmented<'a> {
    field: &'a FieldSpec,
    augment: Augment,
}

impl Augmented<'_> {
    fn lv_index(&self) -> usize {
        self.field.dim()
    }

    fn lm_index(&self) -> usize {
        self.field.dim() + usize::from(self.augment.log_volume)
    }

    fn phi_offset(&self) -> usize {
        self.lm_index() + usize::from(self.augment.log_multiplier)
    }
}

impl Rhs for Augmented<'_> {
    fn dim(&self) -> usize {
        let d = self.field.dim();
        self.phi_offset() + if self.augment.variational { d * d } else { 0 }
    }

    fn eval(&self, y: &[f64], dy: &mut [f64]) -> Result<(), FieldError> {
        let d = self.field.dim();
        let needs_jacobian =
            self.augment.log_volume || self.augment.log_multiplier || self.augment.variational;
        if !needs_jacobian {
            let v = self.field.eval(&y[..d])?;
            dy[..d].copy_from_slice(&v);
            return Ok(());
        }
        let (v, jac) = self.field.eval_with_jacobian(&y[..d])?;
        dy[..d].copy_from_slice(&v);
        let div = jac.trace();
        if self.augment.log_volume {
            dy[self.lv_index()] = div;
        }
        if self.augment.log_multiplier {
            dy[self.lm_index()] = -div;
        }
        if self.augment.variational {
            let off = self.phi_offset();
            // Φ stored column-major
            let phi = DMatrix::from_column_slice(d, d, &y[off..off + d * d]);
            let dphi = jac * phi;
            dy[off..off + d * d].copy_from_slice(dphi.as_slice());
        }
        Ok(())
    }
}

fn check_grid(grid: &[f64]) -> Result<f64, FlowError> {
    if grid.is_empty() {
        return Err(FlowError::Grid("no sample times".into()));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(FlowError::Grid("non-finite sample time".into()));
    }
    if grid.len() == 1 {
        return Ok(1.0);
    }
    let dir = (grid[1] - grid[0]).signum();
    if dir == 0.0 || grid.windows(2).any(|w| (w[1] - w[0]) * dir <= 0.0) {
        return Err(FlowError::Grid(
            "sample times must be strictly monotone".into(),
        ));
    }
    Ok(dir)
}

/// Cubic Hermite interpolation on `[t0, t0 + h]`.
fn hermite(theta: f64, h: f64, y0: &[f64], f0: &[f64], y1: &[f64], f1: &[f64]) -> Vec<f64> {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    (0..y0.len())
        .map(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i])
        .collect()
}

/// Emits samples falling in `(t, t + h]` as a step is accepted.
struct Sampler<'g> {
    grid: &'g [f64],
    next: usize,
    dir: f64,
    out: Vec<Vec<f64>>,
}

impl Sampler<'_> {
    fn done(&self) -> bool {
        self.next >= self.grid.len()
    }

    fn emit(&mut self, t: f64, h: f64, y0: &[f64], f0: &[f64], y1: &[f64], f1: &[f64]) {
        let t1 = t + h;
        while !self.done() && (self.grid[self.next] - t1) * self.dir <= 0.0 {
            let tau = self.grid[self.next];
            if tau == t1 {
                self.out.push(y1.to_vec());
            } else {
                self.out.push(hermite((tau - t) / h, h, y0, f0, y1, f1));
            }
            self.next += 1;
        }
    }
}

fn rhs_at(sys: &dyn Rhs, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), FlowError> {
    sys.eval(y, dy)
        .map_err(|source| FlowError::Domain { t, source })?;
    if dy.iter().any(|v| !v.is_finite()) {
        return Err(FlowError::Domain {
            t,
            source: FieldError::AtPoint {
                point: y.to_vec(),
                source: crate::expr::ExprError::Domain {
                    node: "vector field".into(),
                    input: f64::NAN,
                },
            },
        });
    }
    Ok(())
}

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for &(a, k) in terms {
        if a == 0.0 {
            continue;
        }
        for (o, ki) in out.iter_mut().zip(k) {
            *o += h * a * ki;
        }
    }
    out
}

fn solve(
    sys: &dyn Rhs,
    y0: &[f64],
    grid: &[f64],
    settings: &IntegratorSettings,
) -> Result<(Vec<Vec<f64>>, StepStats), FlowError> {
    settings.validate()?;
    let dir = check_grid(grid)?;
    let mut sampler = Sampler {
        grid,
        next: 1,
        dir,
        out: vec![y0.to_vec()],
    };
    let mut stats = StepStats::default();
    if sampler.done() {
        return Ok((sampler.out, stats));
    }
    match settings.method {
        Method::Rk4 { dt } => rk4(sys, y0, dt * dir, settings, &mut sampler, &mut stats)?,
        Method::Dopri5 { rtol, atol } => {
            dopri5(sys, y0, rtol, atol, dir, settings, &mut sampler, &mut stats)?
        }
    }
    Ok((sampler.out, stats))
}

fn rk4(
    sys: &dyn Rhs,
    y0: &[f64],
    h_nominal: f64,
    settings: &IntegratorSettings,
    sampler: &mut Sampler,
    stats: &mut StepStats,
) -> Result<(), FlowError> {
    let n = sys.dim();
    let t_final = *sampler.grid.last().unwrap();
    let mut t = sampler.grid[0];
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    rhs_at(sys, t, &y, &mut k1)?;
    let (mut k2, mut k3, mut k4, mut f1) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut step = 0usize;
    while !sampler.done() {
        if stats.accepted >= settings.max_steps {
            return Err(FlowError::MaxSteps {
                t,
                steps: settings.max_steps,
            });
        }
        step += 1;
        // t from the step counter avoids drift from repeated addition
        let t_next_nominal = sampler.grid[0] + step as f64 * h_nominal;
        let (t_next, h) = if (t_next_nominal - t_final) * sampler.dir >= 0.0 {
            (t_final, t_final - t)
        } else {
            (t_next_nominal, t_next_nominal - t)
        };
        rhs_at(sys, t + 0.5 * h, &axpy(&y, 0.5 * h, &[(1.0, &k1)]), &mut k2)?;
        rhs_at(sys, t + 0.5 * h, &axpy(&y, 0.5 * h, &[(1.0, &k2)]), &mut k3)?;
        rhs_at(sys, t + h, &axpy(&y, h, &[(1.0, &k3)]), &mut k4)?;
        let y_new = axpy(
            &y,
            h / 6.0,
            &[(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)],
        );
        rhs_at(sys, t_next, &y_new, &mut f1)?;
        sampler.emit(t, t_next - t, &y, &k1, &y_new, &f1);
        stats.accepted += 1;
        t = t_next;
        y = y_new;
        std::mem::swap(&mut k1, &mut f1);
    }
    Ok(())
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
// b − b̂
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn scaled_norm(v: &[f64], y0: &[f64], y1: &[f64], rtol: f64, atol: f64) -> f64 {
    let sum: f64 = v
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = atol + rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / v.len() as f64).sqrt()
}

fn initial_step(
    sys: &dyn Rhs,
    t: f64,
    y: &[f64],
    f0: &[f64],
    rtol: f64,
    atol: f64,
    dir: f64,
) -> Result<f64, FlowError> {
    let d0 = scaled_norm(y, y, y, rtol, atol);
    let d1 = scaled_norm(f0, y, y, rtol, atol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1 = axpy(y, h0 * dir, &[(1.0, f0)]);
    let mut f1 = vec![0.0; y.len()];
    rhs_at(sys, t + h0 * dir, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled_norm(&diff, y, y, rtol, atol) / h0;
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dmax).powf(0.2)
    };
    Ok((100.0 * h0).min(h1) * dir)
}

#[allow(clippy::too_many_arguments)]
fn dopri5(
    sys: &dyn Rhs,
    y0: &[f64],
    rtol: f64,
    atol: f64,
    dir: f64,
    settings: &IntegratorSettings,
    sampler: &mut Sampler,
    stats: &mut StepStats,
) -> Result<(), FlowError> {
    let n = sys.dim();
    let t_final = *sampler.grid.last().unwrap();
    let mut t = sampler.grid[0];
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    rhs_at(sys, t, &y, &mut k[0])?;
    let mut h = initial_step(sys, t, &y, &k[0], rtol, atol, dir)?;
    let mut last_rejected = false;

    while !sampler.done() {
        if stats.accepted + stats.rejected >= settings.max_steps {
            return Err(FlowError::MaxSteps {
                t,
                steps: settings.max_steps,
            });
        }
        let remaining = t_final - t;
        if (h - remaining) * dir > 0.0 {
            h = remaining;
        }
        if h.abs() <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(FlowError::StepUnderflow { t, h });
        }

        let stages: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
        for (s, row) in stages.iter().enumerate() {
            let ys = {
                let terms: Vec<(f64, &[f64])> = row
                    .iter()
                    .zip(&k)
                    .map(|(&a, ki)| (a, ki.as_slice()))
                    .collect();
                axpy(&y, h, &terms)
            };
            rhs_at(sys, t + C[s + 1] * h, &ys, &mut k[s + 1])?;
        }
        let y_new = {
            let terms: Vec<(f64, &[f64])> = B
                .iter()
                .zip(&k)
                .map(|(&b, ki)| (b, ki.as_slice()))
                .collect();
            axpy(&y, h, &terms)
        };
        let t_new = if h == remaining { t_final } else { t + h };
        rhs_at(sys, t_new, &y_new, &mut k[6])?;
        let mut err = vec![0.0; n];
        for (e, ki) in E.iter().zip(&k) {
            if *e == 0.0 {
                continue;
            }
            for (ei, kij) in err.iter_mut().zip(ki) {
                *ei += h * e * kij;
            }
        }
        let err_norm = scaled_norm(&err, &y, &y_new, rtol, atol);

        if err_norm.is_finite() && err_norm <= 1.0 {
            sampler.emit(t, t_new - t, &y, &k[0], &y_new, &k[6]);
            stats.accepted += 1;
            stats.max_error = stats.max_error.max(err_norm);
            let fac_max = if last_rejected { 1.0 } else { 5.0 };
            let fac = if err_norm == 0.0 {
                fac_max
            } else {
                (0.9 * err_norm.powf(-0.2)).clamp(0.2, fac_max)
            };
            t = t_new;
            y = y_new;
            k.swap(0, 6);
            h *= fac;
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let fac = if err_norm.is_finite() {
                (0.9 * err_norm.powf(-0.2)).clamp(0.2, 1.0)
            } else {
                0.2
            };
            h *= fac;
            last_rejected = true;
        }
    }
    Ok(())
}

fn check_x0(field: &FieldSpec, x0: &[f64]) -> Result<(), FlowError> {
    if x0.len() != field.dim() {
        return Err(FlowError::Dimension {
            expected: field.dim(),
            got: x0.len(),
        });
    }
    Ok(())
}

/// Integrate `field` from `x0` at `grid[0]`, sampling at every grid time.
/// The grid may run backwards in time.
pub fn integrate_augmented(
    field: &FieldSpec,
    x0: &[f64],
    grid: &[f64],
    settings: &IntegratorSettings,
    augment: Augment,
) -> Result<Trajectory, FlowError> {
    check_x0(field, x0)?;
    let sys = Augmented { field, augment };
    let mut y0 = x0.to_vec();
    y0.resize(sys.dim(), 0.0);
    if augment.variational {
        let d = field.dim();
        let off = sys.phi_offset();
        for i in 0..d {
            y0[off + i * d + i] = 1.0;
        }
    }
    let (samples, stats) = solve(&sys, &y0, grid, settings)?;
    let d = field.dim();
    let column = |idx: usize| samples.iter().map(|y| y[idx]).collect::<Vec<_>>();
    Ok(Trajectory {
        times: grid.to_vec(),
        log_volume: augment.log_volume.then(|| column(sys.lv_index())),
        log_multiplier: augment.log_multiplier.then(|| column(sys.lm_index())),
        jacobians: augment.variational.then(|| {
            let off = sys.phi_offset();
            samples
                .iter()
                .map(|y| DMatrix::from_column_slice(d, d, &y[off..off + d * d]))
                .collect()
        }),
        states: samples.iter().map(|y| y[..d].to_vec()).collect(),
        stats,
    })
}

pub fn integrate(
    field: &FieldSpec,
    x0: &[f64],
    grid: &[f64],
    settings: &IntegratorSettings,
) -> Result<Trajectory, FlowError> {
    integrate_augmented(field, x0, grid, settings, Augment::default())
}

pub fn integrate_with_logvolume(
    field: &FieldSpec,
    x0: &[f64],
    grid: &[f64],
    settings: &IntegratorSettings,
) -> Result<Trajectory, FlowError> {
    integrate_augmented(
        field,
        x0,
        grid,
        settings,
        Augment {
            log_volume: true,
            ..Augment::default()
        },
    )
}

/// Flow Jacobian `Dφ` from `t_start` to `t_end`, with the end state and the
/// independently integrated `ln det`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monodromy {
    pub matrix: DMatrix<f64>,
    pub state: Vec<f64>,
    pub log_volume: f64,
}

impl Monodromy {
    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }
}

pub fn monodromy(
    field: &FieldSpec,
    x0: &[f64],
    t_start: f64,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<Monodromy, FlowError> {
    check_x0(field, x0)?;
    let d = field.dim();
    if t_end == t_start {
        settings.validate()?;
        return Ok(Monodromy {
            matrix: DMatrix::identity(d, d),
            state: x0.to_vec(),
            log_volume: 0.0,
        });
    }
    let augment = Augment {
        log_volume: true,
        log_multiplier: false,
        variational: true,
    };
    let sys = Augmented { field, augment };
    let mut y0 = x0.to_vec();
    y0.resize(sys.dim(), 0.0);
    let off = sys.phi_offset();
    for i in 0..d {
        y0[off + i * d + i] = 1.0;
    }
    let (samples, _) = solve(&sys, &y0, &[t_start, t_end], settings)?;
    let y = samples.last().unwrap();
    Ok(Monodromy {
        matrix: DMatrix::from_column_slice(d, d, &y[off..off + d * d]),
        state: y[..d].to_vec(),
        log_volume: y[sys.lv_index()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{
        build_conformal_field, build_hamiltonian_field, parse_phase, PhaseLayout,
    };

    fn sym(src: &str) -> crate::Expr {
        parse_phase(src, PhaseLayout::symplectic(1)).unwrap()
    }

    #[test]
    fn settings_validation() {
        assert!(IntegratorSettings::rk4(0.0).validate().is_err());
        assert!(IntegratorSettings::dopri5(1e-15, 1e-12).validate().is_err());
        assert!(IntegratorSettings::dopri5(1e-10, 0.0).validate().is_err());
        assert!(IntegratorSettings::dopri5(1e-10, 1e-12).validate().is_ok());
    }

    #[test]
    fn grid_must_be_monotone() {
        let f = build_hamiltonian_field(&sym("p^2/2"), 1).unwrap();
        let s = IntegratorSettings::rk4(0.1);
        assert!(matches!(
            integrate(&f, &[0.0, 1.0], &[0.0, 1.0, 0.5], &s),
            Err(FlowError::Grid(_))
        ));
        let single = integrate(&f, &[0.0, 1.0], &[3.0], &s).unwrap();
        assert_eq!(single.states, vec![vec![0.0, 1.0]]);
    }

    #[test]
    fn free_particle_is_exact() {
        let f = build_hamiltonian_field(&sym("p^2/2"), 1).unwrap();
        let grid = uniform_grid(0.0, 2.0, 5);
        for s in [
            IntegratorSettings::rk4(0.3),
            IntegratorSettings::dopri5(1e-8, 1e-10),
        ] {
            let tr = integrate(&f, &[0.0, 1.5], &grid, &s).unwrap();
            for (t, x) in tr.times.iter().zip(&tr.states) {
                assert!((x[0] - 1.5 * t).abs() < 1e-12, "{s:?}");
            }
        }
    }

    #[test]
    fn max_steps_is_reported() {
        let f = build_hamiltonian_field(&sym("p^2/2 + q^2/2"), 1).unwrap();
        let mut s = IntegratorSettings::rk4(1e-3);
        s.max_steps = 10;
        let err = integrate(&f, &[1.0, 0.0], &[0.0, 1.0], &s).unwrap_err();
        assert!(err.is_integration_failure());
    }

    #[test]
    fn domain_error_carries_time() {
        // q grows linearly and ln(1 - q) breaks at q = 1
        let f = build_hamiltonian_field(&sym("p + ln(1 - q)*0"), 1).unwrap();
        let err =
            integrate(&f, &[0.0, 0.0], &[0.0, 2.0], &IntegratorSettings::rk4(0.01)).unwrap_err();
        match err {
            FlowError::Domain { t, .. } => assert!(t > 0.9 && t < 1.01, "t = {t}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_time_monodromy_is_identity() {
        let f = build_conformal_field(&sym("p^2/2 + q^4"), 0.3, 1).unwrap();
        let m = monodromy(
            &f,
            &[0.3, 0.2],
            1.0,
            1.0,
            &IntegratorSettings::dopri5(1e-10, 1e-12),
        )
        .unwrap();
        assert_eq!(m.matrix, DMatrix::identity(2, 2));
    }
}
