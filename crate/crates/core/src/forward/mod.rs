//! Method-of-moments forward solver for TM (E_z) scattering by a 2D
//! inhomogeneous dielectric cylinder.
//!
//! The volume integral equation for the total field is discretized with
//! pulse basis functions and point matching on square cells, each replaced
//! by the disc of equal area so the cell integrals of the free-space Green's
//! function `-(j/4) H0(2)(k rho)` have closed forms. With contrast
//! `chi = eps - 1` the system reads `(I + C diag(chi)) E = E_inc`, where
//!
//! ```text
//! C[m][n] = (j pi k a_n / 2) J1(k a_n) H0(2)(k rho_mn)          m != n
//! C[m][m] = (j / 2) [pi k a_m H1(2)(k a_m) - 2j]
//! ```
//!
//! and the scattered field at an exterior point `r` is
//! `-sum_n (j pi k a_n / 2) J1(k a_n) H0(2)(k |r - r_n|) chi_n E_n`.

pub mod mie;

use std::f64::consts::PI;
use std::sync::OnceLock;

use log::warn;
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Mesh, PermittivityMap, Point};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, LuFactors};
use crate::specfun;

pub use mie::mie_cylinder_oracle;

/// Speed of light in cm * GHz.
pub const SPEED_OF_LIGHT_CM_GHZ: f64 = 29.979_245_8;

/// Estimated condition numbers above this are logged.
pub const CONDITION_WARN: f64 = 1e12;
/// Estimated condition numbers above this abort the solve.
pub const CONDITION_FAIL: f64 = 1e14;

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Free-space wavenumber in rad/cm for a frequency in GHz.
pub fn wavenumber(frequency_ghz: f64) -> Result<f64> {
    if !(frequency_ghz > 0.0) || !frequency_ghz.is_finite() {
        return Err(Error::Parameter(format!("frequency must be positive, got {frequency_ghz} GHz")));
    }
    Ok(2.0 * PI * frequency_ghz / SPEED_OF_LIGHT_CM_GHZ)
}

/// Open-ended waveguide aperture modelled as a row of line sources with a
/// half-cosine amplitude taper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    pub center: Point,
    /// Unit normal pointing into the imaging domain.
    pub normal: Point,
    pub aperture_width: f64,
    pub num_elements: usize,
    pub frequency_ghz: f64,
    /// Overall amplitude applied to every element.
    pub amplitude: f64,
}

impl SourceModel {
    pub fn new(
        center: Point,
        normal: Point,
        aperture_width: f64,
        num_elements: usize,
        frequency_ghz: f64,
    ) -> Result<Self> {
        let len = normal.x.hypot(normal.y);
        if !(len > 0.0) {
            return Err(Error::Geometry("source normal must be non-zero".into()));
        }
        if num_elements == 0 {
            return Err(Error::Geometry("source needs at least one element".into()));
        }
        if !(aperture_width >= 0.0) {
            return Err(Error::Geometry("aperture width must be non-negative".into()));
        }
        wavenumber(frequency_ghz)?;
        Ok(SourceModel {
            center,
            normal: Point::new(normal.x / len, normal.y / len),
            aperture_width,
            num_elements,
            frequency_ghz,
            amplitude: 1.0,
        })
    }

    /// A single unit line source.
    pub fn line_source(center: Point, frequency_ghz: f64) -> Result<Self> {
        SourceModel::new(center, Point::new(0.0, 1.0), 0.0, 1, frequency_ghz)
    }

    /// Half-cosine taper `cos(pi t / W)`, exactly zero at and beyond the edges.
    pub fn taper(&self, offset: f64) -> f64 {
        let w = self.aperture_width;
        if w == 0.0 {
            return 1.0;
        }
        if offset.abs() >= 0.5 * w * (1.0 - 1e-12) {
            return 0.0;
        }
        (PI * offset / w).cos()
    }

    /// Element positions and taper weights (before `amplitude`), spaced
    /// evenly across the aperture and symmetric about the centre.
    pub fn elements(&self) -> Vec<(Point, f64)> {
        let tangent = Point::new(-self.normal.y, self.normal.x);
        let n = self.num_elements;
        (0..n)
            .map(|k| {
                let t = if n == 1 {
                    0.0
                } else {
                    (k as f64 - 0.5 * (n - 1) as f64) * self.aperture_width / (n - 1) as f64
                };
                let p = Point::new(self.center.x + t * tangent.x, self.center.y + t * tangent.y);
                (p, self.taper(t))
            })
            .collect()
    }

    pub fn field_at(&self, p: Point) -> Result<Complex64> {
        let k0 = wavenumber(self.frequency_ghz)?;
        let mut sum = Complex64::new(0.0, 0.0);
        for (q, weight) in self.elements() {
            let d = p.distance(q);
            if d <= 1e-12 {
                return Err(Error::Geometry(format!(
                    "evaluation point ({}, {}) coincides with a source element",
                    p.x, p.y
                )));
            }
            if weight != 0.0 {
                sum += weight * specfun::h0(k0 * d);
            }
        }
        Ok(self.amplitude * sum)
    }

    /// Rescales `amplitude` so the largest field magnitude over `points` is 1.
    pub fn normalized_over(mut self, points: &[Point]) -> Result<Self> {
        self.amplitude = 1.0;
        let peak = points
            .iter()
            .map(|&p| self.field_at(p).map(|v| v.norm()))
            .try_fold(0.0_f64, |acc, v| v.map(|v| acc.max(v)))?;
        if !(peak > 0.0) {
            return Err(Error::Geometry("source field vanishes on the normalization points".into()));
        }
        self.amplitude = 1.0 / peak;
        Ok(self)
    }
}

/// Incident field of `source` at each point.
pub fn incident_field(source: &SourceModel, points: &[Point]) -> Result<Vec<Complex64>> {
    points.iter().map(|&p| source.field_at(p)).collect()
}

/// Complex field sample per mesh cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldVector {
    mesh_digest: String,
    values: Vec<Complex64>,
}

impl FieldVector {
    pub fn new(mesh: &Mesh, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(Error::Dimension(format!(
                "{} field values for {} cells",
                values.len(),
                mesh.len()
            )));
        }
        Ok(FieldVector {
            mesh_digest: mesh.digest(),
            values,
        })
    }

    /// Incident field of `source` sampled at the cell centres of `mesh`.
    pub fn incident(mesh: &Mesh, source: &SourceModel) -> Result<Self> {
        FieldVector::new(mesh, incident_field(source, &mesh.centers())?)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn mesh_digest(&self) -> &str {
        &self.mesh_digest
    }
}

/// `(j pi k a / 2) J1(k a)`: the closed-form integral of the cell's current
/// against `H0(2)` at an exterior point, up to the `H0(2)(k rho)` factor.
pub fn cell_coupling_factor(k0: f64, radius: f64) -> Complex64 {
    J * (0.5 * PI * k0 * radius * specfun::j1(k0 * radius))
}

/// Diagonal coupling `(j/2) [pi k a H1(2)(k a) - 2j]` of a cell with itself.
pub fn cell_self_term(k0: f64, radius: f64) -> Complex64 {
    let x = k0 * radius;
    0.5 * J * (PI * x * specfun::h1(x) - 2.0 * J)
}

/// Contrast-free coupling matrix `C` of a mesh, so that the MoM matrix is
/// `I + C diag(eps - 1)`. Depends only on geometry and frequency.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    mesh: Mesh,
    wavenumber: f64,
    matrix: CMatrix,
}

impl CouplingMatrix {
    pub fn new(mesh: &Mesh, k0: f64) -> Self {
        let cells = mesh.cells();
        let n = cells.len();
        let factors: Vec<Complex64> = cells
            .iter()
            .map(|c| cell_coupling_factor(k0, c.equivalent_radius()))
            .collect();
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        data.par_chunks_mut(n.max(1)).enumerate().for_each(|(m, row)| {
            let cm = cells[m].center;
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = if j == m {
                    cell_self_term(k0, cells[m].equivalent_radius())
                } else {
                    factors[j] * specfun::h0(k0 * cm.distance(cells[j].center))
                };
            }
        });
        CouplingMatrix {
            mesh: mesh.clone(),
            wavenumber: k0,
            matrix: Array2::from_shape_vec((n, n), data).expect("square coupling matrix"),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn wavenumber(&self) -> f64 {
        self.wavenumber
    }
}

#[derive(Debug, Clone)]
enum FactorFailure {
    Singular(usize),
    IllConditioned(f64),
}

/// Assembled MoM system for one permittivity map, with its LU factorization
/// computed on first use and shared by every subsequent solve.
#[derive(Debug)]
pub struct MomSystem {
    mesh: Mesh,
    mesh_digest: String,
    wavenumber: f64,
    contrast: Vec<Complex64>,
    matrix: CMatrix,
    lu: OnceLock<std::result::Result<LuFactors, FactorFailure>>,
}

impl MomSystem {
    /// Builds `I + C diag(chi)` from a precomputed coupling matrix.
    pub fn from_coupling(coupling: &CouplingMatrix, epsilon: &[Complex64]) -> Result<Self> {
        let n = coupling.mesh.len();
        if epsilon.len() != n {
            return Err(Error::Dimension(format!("{} permittivities for {n} cells", epsilon.len())));
        }
        let contrast: Vec<Complex64> = epsilon.iter().map(|e| e - 1.0).collect();
        let mut matrix = coupling.matrix.clone();
        for mut row in matrix.rows_mut() {
            for (v, chi) in row.iter_mut().zip(&contrast) {
                *v *= chi;
            }
        }
        for i in 0..n {
            matrix[[i, i]] += 1.0;
        }
        Ok(MomSystem {
            mesh_digest: coupling.mesh.digest(),
            mesh: coupling.mesh.clone(),
            wavenumber: coupling.wavenumber,
            contrast,
            matrix,
            lu: OnceLock::new(),
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn contrast(&self) -> &[Complex64] {
        &self.contrast
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn wavenumber(&self) -> f64 {
        self.wavenumber
    }

    /// LU factors, computed once. Fails when the matrix is singular or its
    /// estimated condition number exceeds [`CONDITION_FAIL`].
    pub fn factorization(&self) -> Result<&LuFactors> {
        let cached = self.lu.get_or_init(|| match LuFactors::factor(&self.matrix) {
            Ok(lu) => {
                let cond = lu.condition_estimate();
                if cond > CONDITION_FAIL {
                    Err(FactorFailure::IllConditioned(cond))
                } else {
                    if cond > CONDITION_WARN {
                        warn!("MoM matrix condition estimate {cond:.3e}");
                    }
                    Ok(lu)
                }
            }
            Err(Error::Singular { pivot }) => Err(FactorFailure::Singular(pivot)),
            Err(_) => Err(FactorFailure::Singular(0)),
        });
        match cached {
            Ok(lu) => Ok(lu),
            Err(FactorFailure::Singular(pivot)) => Err(Error::Singular { pivot: *pivot }),
            Err(FactorFailure::IllConditioned(c)) => Err(Error::IllConditioned { condition: *c }),
        }
    }

    /// Solves `A^T x = b` with the cached factorization.
    pub fn solve_transpose(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(b.len())?;
        Ok(self.factorization()?.solve_transpose(b))
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.mesh.len() {
            return Err(Error::Dimension(format!("{len} values for {} cells", self.mesh.len())));
        }
        Ok(())
    }
}

/// Assembles the MoM system of a permittivity map. Contrast is measured
/// against free space, matching the free-space Green's function.
pub fn assemble(map: &PermittivityMap, k0: f64) -> Result<MomSystem> {
    if !map.is_admissible() {
        return Err(Error::Parameter("permittivity map is not physically admissible".into()));
    }
    let coupling = CouplingMatrix::new(map.mesh(), k0);
    MomSystem::from_coupling(&coupling, &map.complex_values())
}

/// Total field from `A E = E_inc`.
pub fn solve_total_field(sys: &MomSystem, incident: &FieldVector) -> Result<FieldVector> {
    if incident.mesh_digest != sys.mesh_digest {
        return Err(Error::Dimension("incident field belongs to a different mesh".into()));
    }
    let lu = sys.factorization()?;
    Ok(FieldVector {
        mesh_digest: sys.mesh_digest.clone(),
        values: lu.solve(&incident.values),
    })
}

/// Coupling `(j pi k a_n / 2) J1(k a_n) H0(2)(k |r - r_n|)` from every cell to
/// each exterior point. Rows are points, columns cells.
pub fn receiver_coupling(mesh: &Mesh, k0: f64, points: &[Point]) -> Result<CMatrix> {
    let cells = mesh.cells();
    if let Some(p) = points.iter().find(|&&p| cells.iter().any(|c| c.contains(p))) {
        return Err(Error::Geometry(format!(
            "receiver ({}, {}) lies inside a mesh cell",
            p.x, p.y
        )));
    }
    let factors: Vec<Complex64> = cells
        .iter()
        .map(|c| cell_coupling_factor(k0, c.equivalent_radius()))
        .collect();
    Ok(Array2::from_shape_fn((points.len(), cells.len()), |(r, n)| {
        factors[n] * specfun::h0(k0 * points[r].distance(cells[n].center))
    }))
}

/// Scattered field `-G diag(chi) E` at the points described by `coupling`.
pub fn scattered_from(coupling: &CMatrix, contrast: &[Complex64], total: &[Complex64]) -> Vec<Complex64> {
    coupling
        .rows()
        .into_iter()
        .map(|row| {
            -row.iter()
                .zip(contrast)
                .zip(total)
                .map(|((g, chi), e)| g * chi * e)
                .sum::<Complex64>()
        })
        .collect()
}

/// Total field at exterior receivers: incident plus the field re-radiated by
/// the equivalent cell currents.
pub fn field_at_receivers(
    sys: &MomSystem,
    total: &FieldVector,
    incident_at_receivers: &[Complex64],
    receivers: &[Point],
) -> Result<Vec<Complex64>> {
    if total.mesh_digest != sys.mesh_digest {
        return Err(Error::Dimension("total field belongs to a different mesh".into()));
    }
    if incident_at_receivers.len() != receivers.len() {
        return Err(Error::Dimension("one incident value per receiver is required".into()));
    }
    let g = receiver_coupling(&sys.mesh, sys.wavenumber, receivers)?;
    let scattered = scattered_from(&g, &sys.contrast, &total.values);
    Ok(incident_at_receivers
        .iter()
        .zip(scattered)
        .map(|(i, s)| i + s)
        .collect())
}
