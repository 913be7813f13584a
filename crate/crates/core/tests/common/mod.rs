//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use mwtomo::domain::{ComplexPermittivity, Grid, Mesh, PermittivityMap, Point, Refinement};
use mwtomo::inverse::InverseProblem;
use mwtomo::measurement::{build_geometry, synthesize, FieldMode, GeometryConfig, MeasurementGeometry, MeasurementSet};

pub const FREQ: f64 = 1.0;

pub fn grid(n: usize, cell: f64) -> Grid {
    let half = 0.5 * n as f64 * cell;
    Grid {
        origin: Point::new(-half, -half),
        cell_size: cell,
        nx: n,
        ny: n,
    }
}

pub fn small_geometry(domain: &Grid) -> MeasurementGeometry {
    let cfg = GeometryConfig {
        transmitters_per_side: 1,
        receivers_per_side: 3,
        standoff_cm: 3.0,
        aperture_cm: 2.0,
        elements: 3,
    };
    build_geometry(&cfg, domain, FREQ).unwrap()
}

/// Centre cell of a 3x3 coarse grid unknown, everything else known free
/// space; data come from a mesh that splits the centre cell 2x2.
pub struct OneCell {
    pub problem: InverseProblem,
    pub data: MeasurementSet,
}

pub fn one_cell(truth: ComplexPermittivity) -> OneCell {
    let outer = grid(3, 0.6);
    let fine_mesh = Mesh::refined(
        outer,
        Refinement {
            col0: 1,
            row0: 1,
            cols: 1,
            rows: 1,
            factor: 2,
        },
    )
    .unwrap();
    let fine_values = (0..fine_mesh.len())
        .map(|i| if i < 4 { truth } else { ComplexPermittivity::FREE_SPACE })
        .collect();
    let fine = PermittivityMap::new(fine_mesh, fine_values, vec![false; 12]).unwrap();
    let geometry = small_geometry(&outer);
    let data = synthesize(&fine, &geometry, FREQ, FieldMode::Total).unwrap();

    let mut known = vec![true; 9];
    known[4] = false;
    let template = PermittivityMap::constant(Mesh::uniform(outer), ComplexPermittivity::FREE_SPACE)
        .with_known(known)
        .unwrap();
    OneCell {
        problem: InverseProblem::new(&template, &geometry, FREQ, FieldMode::Total).unwrap(),
        data,
    }
}

/// Exhaustive search over (re, im), refined around the best point until
/// the spacing is 1e-5.
pub fn grid_search(setup: &OneCell) -> ComplexPermittivity {
    let objective = |re: f64, im: f64| {
        setup
            .problem
            .residual(&[ComplexPermittivity::new(re, im)], &setup.data)
            .unwrap()
            .norm
    };
    let (mut c_re, mut c_im) = (40.0, -20.0);
    let (mut half_re, mut half_im) = (40.0, 20.0);
    let steps = 40;
    while half_re / steps as f64 > 1e-5 {
        let mut best = (f64::INFINITY, c_re, c_im);
        for a in 0..=2 * steps {
            for b in 0..=2 * steps {
                let re = (c_re - half_re + a as f64 * half_re / steps as f64).max(0.0);
                let im = (c_im - half_im + b as f64 * half_im / steps as f64).min(0.0);
                let f = objective(re, im);
                if f < best.0 {
                    best = (f, re, im);
                }
            }
        }
        c_re = best.1;
        c_im = best.2;
        half_re *= 4.0 / steps as f64;
        half_im *= 4.0 / steps as f64;
    }
    ComplexPermittivity::new(c_re, c_im)
}

