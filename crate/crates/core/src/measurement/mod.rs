//! Measurement geometry, synthetic data generation and noise contamination.
//!
//! Transmitters sit on the four sides of the square domain at a fixed
//! standoff; each one is observed by receivers on the other three sides.
//! Data are ordered transmitter-major, receiver-minor.

mod dataset;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digest::DigestBuilder;
use crate::domain::{Grid, PermittivityMap, Point};
use crate::error::{Error, Result};
use crate::forward::{
    assemble, field_at_receivers, incident_field, solve_total_field, wavenumber, FieldVector, SourceModel,
};
use crate::linalg::norm2;

pub use dataset::{parse_dataset, read_dataset, render_dataset, write_dataset, DATASET_VERSION};

/// Whether recorded data are total fields or total minus incident.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldMode {
    Total,
    Scattered,
}

impl FieldMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldMode::Total => "total",
            FieldMode::Scattered => "scattered",
        }
    }
}

impl std::str::FromStr for FieldMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "total" => Ok(FieldMode::Total),
            "scattered" => Ok(FieldMode::Scattered),
            other => Err(Error::Parameter(format!("unknown field mode `{other}`"))),
        }
    }
}

/// Antenna layout parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub transmitters_per_side: usize,
    pub receivers_per_side: usize,
    /// Distance from the domain edge to the antenna lines.
    pub standoff_cm: f64,
    pub aperture_cm: f64,
    pub elements: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementGeometry {
    pub transmitters: Vec<SourceModel>,
    /// Receiver positions observed for each transmitter.
    pub receivers: Vec<Vec<Point>>,
    pub standoff_cm: f64,
}

impl MeasurementGeometry {
    pub fn data_count(&self) -> usize {
        self.receivers.iter().map(Vec::len).sum()
    }

    /// Offset of each transmitter's block within the flat data vector.
    pub fn view_offsets(&self) -> Vec<usize> {
        self.receivers
            .iter()
            .scan(0, |acc, r| {
                let start = *acc;
                *acc += r.len();
                Some(start)
            })
            .collect()
    }
}

/// `side`: 0 bottom, 1 right, 2 top, 3 left. Returns the point at tangential
/// parameter `t` on the antenna line at distance `d` from the origin, and the
/// inward normal.
fn side_point(side: usize, t: f64, d: f64) -> (Point, Point) {
    match side {
        0 => (Point::new(t, -d), Point::new(0.0, 1.0)),
        1 => (Point::new(d, t), Point::new(-1.0, 0.0)),
        2 => (Point::new(t, d), Point::new(0.0, -1.0)),
        _ => (Point::new(-d, t), Point::new(1.0, 0.0)),
    }
}

fn spread(count: usize, length: f64) -> impl Iterator<Item = f64> {
    (0..count).map(move |i| -0.5 * length + (i as f64 + 0.5) * length / count as f64)
}

/// Lays out transmitters and receivers around the square `domain` (assumed
/// centred on the origin). Each source is normalized to unit peak field over
/// the domain's cell centres so that meshes of any resolution see the same
/// illumination.
pub fn build_geometry(cfg: &GeometryConfig, domain: &Grid, frequency_ghz: f64) -> Result<MeasurementGeometry> {
    if cfg.transmitters_per_side == 0 || cfg.receivers_per_side == 0 {
        return Err(Error::Geometry("at least one transmitter and receiver per side is required".into()));
    }
    if !(cfg.standoff_cm > 0.0) {
        return Err(Error::Geometry(format!(
            "standoff must be positive (got {} cm); antennas would touch the domain",
            cfg.standoff_cm
        )));
    }
    let half = 0.5 * domain.width().max(domain.height());
    let d = half + cfg.standoff_cm;
    let side_len = 2.0 * half;
    let reference: Vec<Point> = (0..domain.ny)
        .flat_map(|row| (0..domain.nx).map(move |col| (col, row)))
        .map(|(col, row)| domain.cell_center(col, row))
        .collect();

    let inside = |p: Point| p.x.abs() <= half && p.y.abs() <= half;
    let mut transmitters = Vec::new();
    let mut receivers = Vec::new();
    for side in 0..4 {
        for t in spread(cfg.transmitters_per_side, side_len) {
            let (center, normal) = side_point(side, t, d);
            let source = SourceModel::new(center, normal, cfg.aperture_cm, cfg.elements, frequency_ghz)?;
            if source.elements().iter().any(|(p, _)| inside(*p)) {
                return Err(Error::Geometry("source aperture overlaps the object domain".into()));
            }
            transmitters.push(source.normalized_over(&reference)?);
            let view: Vec<Point> = (0..4)
                .filter(|&s| s != side)
                .flat_map(|s| spread(cfg.receivers_per_side, side_len).map(move |t| side_point(s, t, d).0))
                .collect();
            receivers.push(view);
        }
    }
    Ok(MeasurementGeometry {
        transmitters,
        receivers,
        standoff_cm: cfg.standoff_cm,
    })
}

/// Digest of everything the forward model needs besides the permittivity map.
pub fn geometry_digest(geometry: &MeasurementGeometry, frequency_ghz: f64, mode: FieldMode) -> String {
    let mut d = DigestBuilder::new("measurement-geometry");
    d.f64(frequency_ghz).str(mode.as_str()).f64(geometry.standoff_cm);
    d.u64(geometry.transmitters.len() as u64);
    for (s, rx) in geometry.transmitters.iter().zip(&geometry.receivers) {
        d.f64(s.center.x).f64(s.center.y).f64(s.normal.x).f64(s.normal.y);
        d.f64(s.aperture_width).u64(s.num_elements as u64).f64(s.frequency_ghz).f64(s.amplitude);
        d.u64(rx.len() as u64);
        for p in rx {
            d.f64(p.x).f64(p.y);
        }
    }
    d.finish()
}

/// Field samples for every (transmitter, receiver) pair plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub geometry: MeasurementGeometry,
    pub frequency_ghz: f64,
    pub mode: FieldMode,
    /// Transmitter-major samples, `geometry.data_count()` long.
    pub values: Vec<Complex64>,
    pub noise_percent: f64,
    pub rng_seed: u64,
    /// Digest of the permittivity map the data were generated from.
    pub provenance: String,
    /// Digest of the run configuration, when produced by the pipeline.
    pub config_digest: Option<String>,
}

impl MeasurementSet {
    pub fn geometry_digest(&self) -> String {
        geometry_digest(&self.geometry, self.frequency_ghz, self.mode)
    }

    /// Per-transmitter slices of `values`.
    pub fn views(&self) -> Vec<&[Complex64]> {
        let mut rest = self.values.as_slice();
        self.geometry
            .receivers
            .iter()
            .map(|r| {
                let (head, tail) = rest.split_at(r.len());
                rest = tail;
                head
            })
            .collect()
    }

    pub fn is_contaminated(&self) -> bool {
        self.noise_percent > 0.0
    }
}

/// Clean synthetic data for `map`. The MoM matrix is assembled and factored
/// once and shared by all transmitters.
pub fn synthesize(
    map: &PermittivityMap,
    geometry: &MeasurementGeometry,
    frequency_ghz: f64,
    mode: FieldMode,
) -> Result<MeasurementSet> {
    if let Some(s) = geometry.transmitters.iter().find(|s| s.frequency_ghz != frequency_ghz) {
        return Err(Error::Parameter(format!(
            "source frequency {} GHz differs from measurement frequency {frequency_ghz} GHz",
            s.frequency_ghz
        )));
    }
    let k0 = wavenumber(frequency_ghz)?;
    let sys = assemble(map, k0)?;
    sys.factorization()?;
    let views: Vec<Vec<Complex64>> = geometry
        .transmitters
        .par_iter()
        .zip(&geometry.receivers)
        .map(|(source, receivers)| {
            let incident = FieldVector::incident(map.mesh(), source)?;
            let total = solve_total_field(&sys, &incident)?;
            let inc_rx = incident_field(source, receivers)?;
            let fields = field_at_receivers(&sys, &total, &inc_rx, receivers)?;
            Ok(match mode {
                FieldMode::Total => fields,
                FieldMode::Scattered => fields.iter().zip(&inc_rx).map(|(f, i)| f - i).collect(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(MeasurementSet {
        geometry: geometry.clone(),
        frequency_ghz,
        mode,
        values: views.concat(),
        noise_percent: 0.0,
        rng_seed: 0,
        provenance: map.digest(),
        config_digest: None,
    })
}

/// Adds complex Gaussian noise to clean data. Each transmitter view gets an
/// independent draw rescaled so that `||noise|| = percent/100 * ||view||`
/// exactly.
pub fn contaminate(set: &MeasurementSet, percent: f64, seed: u64) -> Result<MeasurementSet> {
    if !(percent >= 0.0) || !percent.is_finite() {
        return Err(Error::Noise(format!("noise percentage must be >= 0, got {percent}")));
    }
    if set.is_contaminated() {
        return Err(Error::Noise(format!(
            "dataset already carries {}% noise; contaminate clean data only",
            set.noise_percent
        )));
    }
    if percent == 0.0 {
        return Ok(set.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(set.values.len());
    for view in set.views() {
        let noise: Vec<Complex64> = view
            .iter()
            .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect();
        let noise_norm = norm2(&noise);
        let scale = if noise_norm > 0.0 {
            percent / 100.0 * norm2(view) / noise_norm
        } else {
            0.0
        };
        values.extend(view.iter().zip(&noise).map(|(v, n)| v + n * scale));
    }
    Ok(MeasurementSet {
        values,
        noise_percent: percent,
        rng_seed: seed,
        ..set.clone()
    })
}
