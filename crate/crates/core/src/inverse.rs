//! Levenberg-Marquardt reconstruction of the complex permittivity on the
//! coarse mesh.
//!
//! The data model `E(eps)` is the coarse-mesh MoM solver evaluated at the
//! receivers. Unknowns are kept complex; the update is
//! `d = -(J^H J + lambda I)^-1 J^H r` with `r = E(eps) - e`, followed by a
//! projection onto `re >= 0`, `im <= 0`.
//!
//! The Jacobian is exact for the discretized model. With `A = I + C D`,
//! `D = diag(eps - 1)`, total field `E_t = A^-1 E_inc,t` and receiver
//! coupling `G_t`, the data of transmitter `t` are
//! `E_inc,rx - G_t D E_t`, so
//!
//! ```text
//! dE_rx[r] / d eps_q = -(G_t - Y_t^T C)[r, q] E_t[q],   Y_t = A^-T D G_t^T
//! ```
//!
//! which costs one adjoint solve per receiver with the transmitter's LU.

use std::fmt::Write as _;

use log::{debug, info, warn};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ComplexPermittivity, PermittivityMap};
use crate::error::{Error, Result};
use crate::forward::{
    incident_field, receiver_coupling, wavenumber, CouplingMatrix, FieldVector, MomSystem, SourceModel,
};
use crate::linalg::{adjoint_matvec, gram, norm2, CMatrix, Cholesky};
use crate::measurement::{geometry_digest, FieldMode, MeasurementGeometry, MeasurementSet};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative tolerance of the optional finite-difference Jacobian check.
pub const FD_CHECK_TOLERANCE: f64 = 1e-4;
/// Step used by [`finite_difference_jacobian`] when none is given.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseConfig {
    /// Value every unknown cell starts from.
    pub initial_guess: ComplexPermittivity,
    /// `lambda_0 = lambda0_scale * max diag(J^H J)` at the first iteration.
    pub lambda0_scale: f64,
    /// Factor applied to lambda after each accepted step.
    pub lambda_decay: f64,
    /// Lower bound on lambda, relative to `lambda_0`.
    pub lambda_floor: f64,
    /// Stop once `||r|| / ||e||` is at or below this.
    pub stop_residual: f64,
    pub max_iterations: usize,
    /// Compare a few Jacobian columns against finite differences on the
    /// first iteration.
    pub fd_check: bool,
}

impl Default for InverseConfig {
    fn default() -> Self {
        InverseConfig {
            initial_guess: ComplexPermittivity::new(50.0, -23.0),
            lambda0_scale: 0.1,
            lambda_decay: 0.5,
            lambda_floor: 1e-8,
            stop_residual: 1e-4,
            max_iterations: 50,
            fd_check: false,
        }
    }
}

impl InverseConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: format!("inverse.{key}"),
                message: message.into(),
            })
        };
        if !(self.stop_residual > 0.0) {
            return bad("stop_residual", "must be positive");
        }
        if !(self.lambda_decay > 0.0 && self.lambda_decay < 1.0) {
            return bad("lambda_decay", "must lie strictly between 0 and 1");
        }
        if !(self.lambda0_scale > 0.0) || !self.lambda0_scale.is_finite() {
            return bad("lambda0_scale", "must be positive");
        }
        if !(self.lambda_floor >= 0.0) || !self.lambda_floor.is_finite() {
            return bad("lambda_floor", "must be non-negative");
        }
        if !self.initial_guess.is_admissible() {
            return bad("initial_guess", "must have re >= 0 and im <= 0");
        }
        Ok(())
    }
}

/// Clamps onto the admissible set: `re >= 0`, `im <= 0`.
pub fn project(eps: ComplexPermittivity) -> ComplexPermittivity {
    // `max`/`min` against 0.0 also turn -0.0 and NaN into 0.0
    ComplexPermittivity::new(eps.re.max(0.0), eps.im.min(0.0))
}

pub fn project_all(eps: &[ComplexPermittivity]) -> Vec<ComplexPermittivity> {
    eps.iter().map(|&e| project(e)).collect()
}

#[derive(Debug, Clone)]
struct View {
    incident: FieldVector,
    incident_rx: Vec<Complex64>,
    coupling: CMatrix,
    offset: usize,
}

/// Everything about the coarse-mesh data model that does not depend on the
/// unknowns: the template map with its fixed cells, coupling matrices and
/// incident fields.
#[derive(Debug, Clone)]
pub struct InverseProblem {
    template: PermittivityMap,
    unknown: Vec<usize>,
    coupling: CouplingMatrix,
    views: Vec<View>,
    mode: FieldMode,
    geometry_digest: String,
    data_count: usize,
}

/// Forward evaluation at one point of the unknown space.
pub struct Evaluation {
    pub epsilon: Vec<ComplexPermittivity>,
    pub predicted: Vec<Complex64>,
    system: MomSystem,
    fields: Vec<Vec<Complex64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub r: Vec<Complex64>,
    /// `||r|| / ||e||`.
    pub norm: f64,
}

impl InverseProblem {
    /// `template` fixes the mesh and the values of its known cells; the
    /// values of unknown cells are ignored.
    pub fn new(
        template: &PermittivityMap,
        geometry: &MeasurementGeometry,
        frequency_ghz: f64,
        mode: FieldMode,
    ) -> Result<Self> {
        let unknown = template.unknown_indices();
        if unknown.is_empty() {
            return Err(Error::Parameter("the map has no unknown cells".into()));
        }
        if template
            .known()
            .iter()
            .zip(template.values())
            .any(|(&k, v)| k && !v.is_admissible())
        {
            return Err(Error::Parameter("fixed cells must be physically admissible".into()));
        }
        let k0 = wavenumber(frequency_ghz)?;
        let mesh = template.mesh();
        let coupling = CouplingMatrix::new(mesh, k0);
        let offsets = geometry.view_offsets();
        let views = geometry
            .transmitters
            .par_iter()
            .zip(&geometry.receivers)
            .zip(offsets)
            .map(|((source, receivers), offset): ((&SourceModel, &Vec<_>), usize)| {
                Ok(View {
                    incident: FieldVector::incident(mesh, source)?,
                    incident_rx: incident_field(source, receivers)?,
                    coupling: receiver_coupling(mesh, k0, receivers)?,
                    offset,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(InverseProblem {
            template: template.clone(),
            unknown,
            coupling,
            views,
            mode,
            geometry_digest: geometry_digest(geometry, frequency_ghz, mode),
            data_count: geometry.data_count(),
        })
    }

    /// Mesh cell index of each unknown, in unknown order.
    pub fn unknowns(&self) -> &[usize] {
        &self.unknown
    }

    pub fn template(&self) -> &PermittivityMap {
        &self.template
    }

    pub fn geometry_digest(&self) -> &str {
        &self.geometry_digest
    }

    pub fn data_count(&self) -> usize {
        self.data_count
    }

    pub fn check_dataset(&self, data: &MeasurementSet) -> Result<()> {
        let found = data.geometry_digest();
        if found != self.geometry_digest {
            return Err(Error::DigestMismatch {
                dataset: found,
                expected: self.geometry_digest.clone(),
            });
        }
        Ok(())
    }

    /// Values of the unknown cells of `map` (which must share the mesh).
    pub fn extract(&self, map: &PermittivityMap) -> Result<Vec<ComplexPermittivity>> {
        if map.mesh().digest() != self.template.mesh().digest() {
            return Err(Error::Dimension("map is on a different mesh".into()));
        }
        Ok(self.unknown.iter().map(|&i| map.values()[i]).collect())
    }

    /// Full coarse map with `epsilon` in the unknown cells and the fixed
    /// cells copied from the template.
    pub fn embed(&self, epsilon: &[ComplexPermittivity]) -> Result<PermittivityMap> {
        if epsilon.len() != self.unknown.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} unknowns",
                epsilon.len(),
                self.unknown.len()
            )));
        }
        let mut values = self.template.values().to_vec();
        for (&i, &e) in self.unknown.iter().zip(epsilon) {
            values[i] = e;
        }
        self.template.with_values(values)
    }

    /// Solves the coarse forward problem for every transmitter.
    pub fn evaluate(&self, epsilon: &[ComplexPermittivity]) -> Result<Evaluation> {
        let map = self.embed(epsilon)?;
        let system = MomSystem::from_coupling(&self.coupling, &map.complex_values())?;
        let lu = system.factorization()?;
        let contrast = system.contrast();
        let per_view: Vec<(Vec<Complex64>, Vec<Complex64>)> = self
            .views
            .par_iter()
            .map(|v| {
                let total = lu.solve(v.incident.values());
                let data = v
                    .coupling
                    .rows()
                    .into_iter()
                    .zip(&v.incident_rx)
                    .map(|(row, inc)| {
                        let s: Complex64 = row
                            .iter()
                            .zip(contrast)
                            .zip(&total)
                            .map(|((g, chi), e)| g * chi * e)
                            .sum();
                        match self.mode {
                            FieldMode::Total => inc - s,
                            FieldMode::Scattered => -s,
                        }
                    })
                    .collect();
                (total, data)
            })
            .collect();
        let (fields, data): (Vec<_>, Vec<_>) = per_view.into_iter().unzip();
        Ok(Evaluation {
            epsilon: epsilon.to_vec(),
            predicted: data.concat(),
            system,
            fields,
        })
    }

    /// Predicted data `E(eps)`, transmitter-major.
    pub fn predict(&self, epsilon: &[ComplexPermittivity]) -> Result<Vec<Complex64>> {
        Ok(self.evaluate(epsilon)?.predicted)
    }

    /// `r = E(eps) - e` and its norm relative to `||e||`.
    pub fn residual(&self, epsilon: &[ComplexPermittivity], data: &MeasurementSet) -> Result<Residual> {
        self.check_dataset(data)?;
        let eval = self.evaluate(epsilon)?;
        Ok(residual_of(&eval, &data.values))
    }

    /// Analytic Jacobian, data points by unknowns.
    pub fn jacobian(&self, epsilon: &[ComplexPermittivity], data: &MeasurementSet) -> Result<CMatrix> {
        self.check_dataset(data)?;
        self.jacobian_at(&self.evaluate(epsilon)?)
    }

    /// Jacobian at an existing evaluation, reusing its LU factors.
    pub fn jacobian_at(&self, eval: &Evaluation) -> Result<CMatrix> {
        let lu = eval.system.factorization()?;
        let contrast = eval.system.contrast();
        let c = self.coupling.matrix();
        let n = c.nrows();
        let blocks: Vec<Vec<(usize, Vec<Complex64>)>> = self
            .views
            .par_iter()
            .zip(&eval.fields)
            .map(|(v, total)| {
                v.coupling
                    .rows()
                    .into_iter()
                    .enumerate()
                    .map(|(r, g)| {
                        let rhs: Vec<Complex64> = g.iter().zip(contrast).map(|(g, chi)| g * chi).collect();
                        let y = lu.solve_transpose(&rhs);
                        let row = self
                            .unknown
                            .iter()
                            .map(|&q| {
                                let yc: Complex64 = (0..n).map(|m| y[m] * c[[m, q]]).sum();
                                -(g[q] - yc) * total[q]
                            })
                            .collect();
                        (v.offset + r, row)
                    })
                    .collect()
            })
            .collect();
        let mut jac = CMatrix::from_elem((self.data_count, self.unknown.len()), ZERO);
        for (p, row) in blocks.into_iter().flatten() {
            for (q, value) in row.into_iter().enumerate() {
                jac[[p, q]] = value;
            }
        }
        Ok(jac)
    }
}

fn residual_of(eval: &Evaluation, data: &[Complex64]) -> Residual {
    let r: Vec<Complex64> = eval.predicted.iter().zip(data).map(|(p, e)| p - e).collect();
    let scale = norm2(data);
    let norm = if scale > 0.0 { norm2(&r) / scale } else { norm2(&r) };
    Residual { r, norm }
}

/// Central-difference derivative of the predicted data with respect to the
/// real and imaginary parts of unknown `q`. Because the data depend
/// holomorphically on `eps`, the analytic column `J[:, q]` should equal
/// the first and `-j` times the second.
pub fn finite_difference_column(
    problem: &InverseProblem,
    epsilon: &[ComplexPermittivity],
    q: usize,
    step: f64,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let shifted = |dre: f64, dim: f64| -> Result<Vec<Complex64>> {
        let mut e = epsilon.to_vec();
        e[q] = ComplexPermittivity::new(e[q].re + dre, e[q].im + dim);
        problem.predict(&e)
    };
    let diff = |a: Vec<Complex64>, b: Vec<Complex64>| -> Vec<Complex64> {
        a.iter().zip(&b).map(|(a, b)| (a - b) / (2.0 * step)).collect()
    };
    let d_re = diff(shifted(step, 0.0)?, shifted(-step, 0.0)?);
    let d_im = diff(shifted(0.0, step)?, shifted(0.0, -step)?);
    Ok((d_re, d_im))
}

/// Finite-difference Jacobian built column by column from the real-part
/// derivative.
pub fn finite_difference_jacobian(
    problem: &InverseProblem,
    epsilon: &[ComplexPermittivity],
    step: f64,
) -> Result<CMatrix> {
    let m = problem.unknown.len();
    let mut jac = CMatrix::from_elem((problem.data_count, m), ZERO);
    for q in 0..m {
        let (d_re, _) = finite_difference_column(problem, epsilon, q, step)?;
        for (p, v) in d_re.into_iter().enumerate() {
            jac[[p, q]] = v;
        }
    }
    Ok(jac)
}

/// Largest entry-wise relative difference between the analytic Jacobian
/// columns `columns` and central differences, over both the real and the
/// imaginary perturbation. Entries are compared relative to the largest
/// magnitude in their column.
pub fn jacobian_fd_error(
    problem: &InverseProblem,
    epsilon: &[ComplexPermittivity],
    analytic: &CMatrix,
    columns: &[usize],
    step: f64,
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for &q in columns {
        let (d_re, d_im) = finite_difference_column(problem, epsilon, q, step)?;
        let col = analytic.column(q);
        let scale = col.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for ((a, fr), fi) in col.iter().zip(&d_re).zip(&d_im) {
            let j = Complex64::new(0.0, 1.0);
            worst = worst.max((a - fr).norm() / scale).max((a * j - fi).norm() / scale);
        }
    }
    Ok(worst)
}

/// `-(J^H J + lambda I)^-1 J^H r` via Cholesky of the damped normal matrix.
pub fn lm_step(jac: &CMatrix, r: &[Complex64], lambda: f64) -> Result<Vec<Complex64>> {
    lm_step_with_gram(&gram(jac), jac, r, lambda)
}

fn lm_step_with_gram(g: &CMatrix, jac: &CMatrix, r: &[Complex64], lambda: f64) -> Result<Vec<Complex64>> {
    if jac.nrows() != r.len() {
        return Err(Error::Dimension(format!("{} residuals for {} Jacobian rows", r.len(), jac.nrows())));
    }
    let mut a = g.clone();
    for i in 0..a.nrows() {
        a[[i, i]] += lambda;
    }
    let chol = Cholesky::factor(&a).ok_or(Error::NotPositiveDefinite { lambda })?;
    let rhs = adjoint_matvec(jac, r);
    Ok(chol.solve(&rhs).into_iter().map(|v| -v).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIterations,
    Stalled,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIterations => "max_iterations",
            Status::Stalled => "stalled",
        }
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub residual_norm: f64,
    pub lambda: f64,
}

/// One line of the iteration log: every trial step, accepted or not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub iteration: usize,
    pub lambda: f64,
    pub residual_norm: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionState {
    pub epsilon: Vec<ComplexPermittivity>,
    pub iteration: usize,
    pub lambda: f64,
    pub residual_norm: f64,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone)]
pub struct InversionOutcome {
    pub map: PermittivityMap,
    pub state: ReconstructionState,
    pub status: Status,
    pub log: Vec<LogEntry>,
    /// Result of the finite-difference check when enabled.
    pub fd_check_error: Option<f64>,
}

/// Machine-parsable iteration log.
pub fn render_log(log: &[LogEntry]) -> String {
    let mut s = String::from("# iteration lambda relative_residual step_norm status\n");
    for e in log {
        writeln!(
            s,
            "{} {:e} {:e} {:e} {}",
            e.iteration,
            e.lambda,
            e.residual_norm,
            e.step_norm,
            if e.accepted { "accepted" } else { "rejected" }
        )
        .unwrap();
    }
    s
}

/// Columns probed by the optional finite-difference check.
fn probe_columns(m: usize) -> Vec<usize> {
    let mut cols = vec![0, m / 2, m - 1];
    cols.dedup();
    cols
}

fn apply_step(eps: &[ComplexPermittivity], step: &[Complex64], scale: f64) -> Vec<ComplexPermittivity> {
    eps.iter()
        .zip(step)
        .map(|(e, d)| project(ComplexPermittivity::from_complex(e.to_complex() + d * scale)))
        .collect()
}

/// Runs LM from the configured initial guess.
pub fn run_inversion(
    problem: &InverseProblem,
    data: &MeasurementSet,
    config: &InverseConfig,
) -> Result<InversionOutcome> {
    let start = vec![project(config.initial_guess); problem.unknown.len()];
    run_inversion_from(problem, data, config, start)
}

/// Runs LM from an explicit starting point (projected first).
pub fn run_inversion_from(
    problem: &InverseProblem,
    data: &MeasurementSet,
    config: &InverseConfig,
    start: Vec<ComplexPermittivity>,
) -> Result<InversionOutcome> {
    let mut log = Vec::new();
    run_inversion_logged(problem, data, config, start, &mut log)
}

/// As [`run_inversion_from`], appending to a caller-owned log so trial
/// steps up to a failure remain available.
pub fn run_inversion_logged(
    problem: &InverseProblem,
    data: &MeasurementSet,
    config: &InverseConfig,
    start: Vec<ComplexPermittivity>,
    log: &mut Vec<LogEntry>,
) -> Result<InversionOutcome> {
    config.validate()?;
    problem.check_dataset(data)?;
    let e = &data.values;
    let mut eval = problem.evaluate(&project_all(&start))?;
    let mut res = residual_of(&eval, e);
    let mut lambda = 0.0;
    let mut floor = 0.0;
    let mut iteration = 0;
    let mut history = vec![HistoryEntry {
        iteration: 0,
        residual_norm: res.norm,
        lambda: 0.0,
    }];
    let log_start = log.len();
    let mut fd_check_error = None;

    let status = loop {
        if res.norm <= config.stop_residual {
            break Status::Converged;
        }
        if iteration >= config.max_iterations {
            break Status::MaxIterations;
        }
        let jac = problem.jacobian_at(&eval)?;
        let g = gram(&jac);
        if iteration == 0 {
            let max_diag = (0..g.nrows()).map(|i| g[[i, i]].re).fold(0.0, f64::max);
            lambda = config.lambda0_scale * max_diag;
            floor = config.lambda_floor * lambda;
            history[0].lambda = lambda;
            if config.fd_check {
                let err = jacobian_fd_error(problem, &eval.epsilon, &jac, &probe_columns(jac.ncols()), FD_STEP)?;
                if err > FD_CHECK_TOLERANCE {
                    warn!("Jacobian finite-difference check: relative error {err:.3e}");
                } else {
                    debug!("Jacobian finite-difference check: relative error {err:.3e}");
                }
                fd_check_error = Some(err);
            }
        }

        let step = match lm_step_with_gram(&g, &jac, &res.r, lambda) {
            Ok(s) => s,
            Err(Error::NotPositiveDefinite { .. }) => lm_step_with_gram(&g, &jac, &res.r, 10.0 * lambda)?,
            Err(err) => return Err(err),
        };

        let mut trial = |step: &[Complex64], scale: f64, trial_lambda: f64| -> Result<Option<(Evaluation, Residual)>> {
            let cand = problem.evaluate(&apply_step(&eval.epsilon, step, scale))?;
            let cand_res = residual_of(&cand, e);
            let accepted = cand_res.norm < res.norm;
            log.push(LogEntry {
                iteration: iteration + 1,
                lambda: trial_lambda,
                residual_norm: cand_res.norm,
                step_norm: scale * norm2(step),
                accepted,
            });
            Ok(accepted.then_some((cand, cand_res)))
        };

        let mut accepted = trial(&step, 1.0, lambda)?;
        if accepted.is_none() {
            let raised = 10.0 * lambda;
            if let Ok(s) = lm_step_with_gram(&g, &jac, &res.r, raised) {
                accepted = trial(&s, 1.0, raised)?;
            }
        }
        let mut scale = 1.0;
        for _ in 0..5 {
            if accepted.is_some() {
                break;
            }
            scale *= 0.5;
            accepted = trial(&step, scale, lambda)?;
        }
        let Some((cand, cand_res)) = accepted else {
            break Status::Stalled;
        };

        eval = cand;
        res = cand_res;
        iteration += 1;
        lambda = (lambda * config.lambda_decay).max(floor);
        history.push(HistoryEntry {
            iteration,
            residual_norm: res.norm,
            lambda,
        });
        debug!("iteration {iteration}: residual {:.3e}, lambda {lambda:.3e}", res.norm);
    };
    info!("inversion {} after {iteration} iterations, residual {:.3e}", status.as_str(), res.norm);

    let map = problem.embed(&eval.epsilon)?;
    Ok(InversionOutcome {
        map,
        state: ReconstructionState {
            epsilon: eval.epsilon,
            iteration,
            lambda,
            residual_norm: res.norm,
            history,
        },
        status,
        log: log[log_start..].to_vec(),
        fd_check_error,
    })
}
