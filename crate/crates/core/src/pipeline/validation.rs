//! Self-checks behind `mwtomo validate`: the MoM solver against the
//! cylinder series solution, and the analytic Jacobian against central
//! differences.

use num_complex::Complex64;
use serde::Serialize;

use crate::domain::{rasterize, ComplexPermittivity, Grid, Mesh, PermittivityMap, Phantom, Point, Region, Shape};
use crate::error::Result;
use crate::forward::{
    assemble, field_at_receivers, incident_field, mie_cylinder_oracle, solve_total_field, wavenumber,
    FieldVector, SourceModel,
};
use crate::inverse::{finite_difference_column, InverseProblem};
use crate::measurement::{build_geometry, synthesize, FieldMode, GeometryConfig};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

/// Line source and the 18 receivers used by the cylinder comparison.
pub fn cylinder_setup() -> (Point, Vec<Point>) {
    let ts = [-4.5, -2.7, -0.9, 0.9, 2.7, 4.5];
    let mut receivers = Vec::new();
    receivers.extend(ts.iter().map(|&t| Point::new(15.4, t)));
    receivers.extend(ts.iter().map(|&t| Point::new(t, 15.4)));
    receivers.extend(ts.iter().map(|&t| Point::new(-15.4, t)));
    (Point::new(-4.05, -15.4), receivers)
}

/// Relative L2 difference between the MoM and series total fields for a
/// centred disc of `radius` meshed with `cell`-sized squares.
pub fn cylinder_error(radius: f64, eps: ComplexPermittivity, cell: f64, frequency_ghz: f64) -> Result<f64> {
    let (source, receivers) = cylinder_setup();
    let k0 = wavenumber(frequency_ghz)?;
    let n = (2.0 * radius / cell).ceil() as usize;
    let half = 0.5 * n as f64 * cell;
    let mesh = Mesh::uniform(Grid {
        origin: Point::new(-half, -half),
        cell_size: cell,
        nx: n,
        ny: n,
    });
    let phantom = Phantom::new(
        ComplexPermittivity::FREE_SPACE,
        vec![Region {
            name: "disc".into(),
            shape: Shape::Disc {
                cx: 0.0,
                cy: 0.0,
                radius,
            },
            permittivity: eps,
        }],
        None,
    )?;
    let map = rasterize(&phantom, &mesh);
    let line = SourceModel::line_source(source, frequency_ghz)?;
    let sys = assemble(&map, k0)?;
    let total = solve_total_field(&sys, &FieldVector::incident(&mesh, &line)?)?;
    let mom = field_at_receivers(&sys, &total, &incident_field(&line, &receivers)?, &receivers)?;
    let exact = mie_cylinder_oracle(radius, eps, k0, source, &receivers)?;
    let num: f64 = mom.iter().zip(&exact).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = exact.iter().map(|b| b.norm_sqr()).sum();
    Ok((num / den).sqrt())
}

/// Heterogeneous 6x6 map of 0.6 cm cells, all unknown.
pub fn toy_map() -> PermittivityMap {
    let mesh = Mesh::uniform(Grid {
        origin: Point::new(-1.8, -1.8),
        cell_size: 0.6,
        nx: 6,
        ny: 6,
    });
    let values = (0..36)
        .map(|i| ComplexPermittivity::new(20.0 + 3.0 * (i % 5) as f64, -5.0 - (i % 3) as f64))
        .collect();
    PermittivityMap::new(mesh, values, vec![false; 36]).expect("36 cells")
}

/// Largest per-entry relative difference between the analytic Jacobian of
/// the toy problem and central differences with step `step`, over both
/// real and imaginary perturbations.
pub fn toy_jacobian_error(step: f64) -> Result<f64> {
    let map = toy_map();
    let geometry = build_geometry(
        &GeometryConfig {
            transmitters_per_side: 1,
            receivers_per_side: 3,
            standoff_cm: 3.0,
            aperture_cm: 2.0,
            elements: 3,
        },
        map.mesh().outer(),
        1.0,
    )?;
    let problem = InverseProblem::new(&map, &geometry, 1.0, FieldMode::Total)?;
    let data = synthesize(&map, &geometry, 1.0, FieldMode::Total)?;
    let eps = problem.extract(&map)?;
    let jac = problem.jacobian(&eps, &data)?;
    let j = Complex64::new(0.0, 1.0);
    let mut worst = 0.0_f64;
    for q in 0..eps.len() {
        let (d_re, d_im) = finite_difference_column(&problem, &eps, q, step)?;
        for (p, (fr, fi)) in d_re.iter().zip(&d_im).enumerate() {
            let a = jac[[p, q]];
            worst = worst.max((a - fr).norm() / a.norm()).max((j * a - fi).norm() / a.norm());
        }
    }
    Ok(worst)
}

pub fn validation_checks() -> Result<Vec<Check>> {
    Ok(vec![
        Check::new(
            "mom-vs-series disc 8-j1.2",
            cylinder_error(1.8, ComplexPermittivity::new(8.0, -1.2), 0.3, 1.0)?,
            0.02,
        ),
        Check::new(
            "mom-vs-series disc 50-j23",
            cylinder_error(1.8, ComplexPermittivity::new(50.0, -23.0), 0.3, 1.0)?,
            0.05,
        ),
        Check::new("jacobian-vs-central-differences", toy_jacobian_error(1e-5)?, 1e-4),
    ])
}
