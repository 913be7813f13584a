//! Meshes, phantoms and permittivity maps.
//!
//! Lengths are in centimetres throughout. Cells are squares; a [`Mesh`] is
//! either a uniform grid or a uniform grid whose central block is refined by
//! an integer factor (the forward-solver layout: fine object cells inside a
//! coarse saline border).

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::digest::DigestBuilder;
use crate::error::{Error, Result};

const ALIGN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Relative permittivity `re + j im`, written `e' - j e''` in the usual
/// engineering notation, so lossy media have `im <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct ComplexPermittivity {
    pub re: f64,
    pub im: f64,
}

impl ComplexPermittivity {
    pub const FREE_SPACE: ComplexPermittivity = ComplexPermittivity { re: 1.0, im: 0.0 };

    pub const fn new(re: f64, im: f64) -> Self {
        ComplexPermittivity { re, im }
    }

    /// Non-negative real part and non-positive imaginary part.
    pub fn is_admissible(self) -> bool {
        self.re >= 0.0 && self.im <= 0.0
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn from_complex(z: Complex64) -> Self {
        ComplexPermittivity { re: z.re, im: z.im }
    }
}

impl From<[f64; 2]> for ComplexPermittivity {
    fn from(v: [f64; 2]) -> Self {
        ComplexPermittivity::new(v[0], v[1])
    }
}

impl From<ComplexPermittivity> for [f64; 2] {
    fn from(e: ComplexPermittivity) -> Self {
        [e.re, e.im]
    }
}

impl fmt::Display for ComplexPermittivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im <= 0.0 {
            write!(f, "{}-j{}", self.re, -self.im)
        } else {
            write!(f, "{}+j{}", self.re, self.im)
        }
    }
}

/// Uniform grid of square cells, indexed row-major from the lower-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: Point,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.nx + col
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Point {
        Point::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_size,
            self.origin.y + (row as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn width(&self) -> f64 {
        self.nx as f64 * self.cell_size
    }

    pub fn height(&self) -> f64 {
        self.ny as f64 * self.cell_size
    }

    /// Cell containing `p`, if any (cells are half-open on their upper edges).
    pub fn locate(&self, p: Point) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.cell_size;
        let fy = (p.y - self.origin.y) / self.cell_size;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (col, row) = (fx.floor() as usize, fy.floor() as usize);
        (col < self.nx && row < self.ny).then_some((col, row))
    }

    pub fn bounds(&self) -> Shape {
        Shape::Rect {
            x0: self.origin.x,
            y0: self.origin.y,
            x1: self.origin.x + self.width(),
            y1: self.origin.y + self.height(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub center: Point,
    pub size: f64,
}

impl Cell {
    /// Radius of the disc with the same area as the cell.
    pub fn equivalent_radius(&self) -> f64 {
        self.size / std::f64::consts::PI.sqrt()
    }

    /// Closed-square containment.
    pub fn contains(&self, p: Point) -> bool {
        let h = 0.5 * self.size;
        (p.x - self.center.x).abs() <= h && (p.y - self.center.y).abs() <= h
    }
}

/// Block of an outer grid subdivided into `factor x factor` sub-cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Refinement {
    pub col0: usize,
    pub row0: usize,
    pub cols: usize,
    pub rows: usize,
    pub factor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    outer: Grid,
    refinement: Option<Refinement>,
    cells: Vec<Cell>,
}

impl Mesh {
    pub fn uniform(grid: Grid) -> Self {
        let cells = (0..grid.ny)
            .flat_map(|row| (0..grid.nx).map(move |col| (col, row)))
            .map(|(col, row)| Cell {
                center: grid.cell_center(col, row),
                size: grid.cell_size,
            })
            .collect();
        Mesh {
            outer: grid,
            refinement: None,
            cells,
        }
    }

    /// Outer grid with a refined block. Refined cells come first (row-major on
    /// the refined lattice), followed by the remaining outer cells row-major.
    pub fn refined(outer: Grid, refinement: Refinement) -> Result<Self> {
        let Refinement {
            col0,
            row0,
            cols,
            rows,
            factor,
        } = refinement;
        if factor == 0 || cols == 0 || rows == 0 {
            return Err(Error::Mesh("empty refinement block".into()));
        }
        if col0 + cols > outer.nx || row0 + rows > outer.ny {
            return Err(Error::Mesh("refinement block exceeds the outer grid".into()));
        }
        let fine = Grid {
            origin: Point::new(
                outer.origin.x + col0 as f64 * outer.cell_size,
                outer.origin.y + row0 as f64 * outer.cell_size,
            ),
            cell_size: outer.cell_size / factor as f64,
            nx: cols * factor,
            ny: rows * factor,
        };
        let mut cells = Mesh::uniform(fine).cells;
        for row in 0..outer.ny {
            for col in 0..outer.nx {
                let inside = (col0..col0 + cols).contains(&col) && (row0..row0 + rows).contains(&row);
                if !inside {
                    cells.push(Cell {
                        center: outer.cell_center(col, row),
                        size: outer.cell_size,
                    });
                }
            }
        }
        Ok(Mesh {
            outer,
            refinement: Some(refinement),
            cells,
        })
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn centers(&self) -> Vec<Point> {
        self.cells.iter().map(|c| c.center).collect()
    }

    /// The grid, when the mesh is uniform.
    pub fn as_uniform(&self) -> Option<&Grid> {
        self.refinement.is_none().then_some(&self.outer)
    }

    pub fn outer(&self) -> &Grid {
        &self.outer
    }

    pub fn refinement(&self) -> Option<Refinement> {
        self.refinement
    }

    pub fn digest(&self) -> String {
        let mut d = DigestBuilder::new("mesh");
        d.u64(self.cells.len() as u64);
        for c in &self.cells {
            d.f64(c.center.x).f64(c.center.y).f64(c.size);
        }
        d.finish()
    }
}

/// Object domain and mesh resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// Side of the square object region, centred on the origin.
    pub object_size_cm: f64,
    pub fine_cell_cm: f64,
    pub coarse_cell_cm: f64,
    /// Width of the known saline border, in coarse cells.
    pub border_cells: usize,
}

impl DomainConfig {
    pub fn object_rect(&self) -> Shape {
        let h = 0.5 * self.object_size_cm;
        Shape::Rect {
            x0: -h,
            y0: -h,
            x1: h,
            y1: h,
        }
    }

    /// Half the side of the full (object plus border) domain.
    pub fn half_extent(&self) -> f64 {
        0.5 * self.object_size_cm + self.border_cells as f64 * self.coarse_cell_cm
    }
}

fn integral_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    ((r - r.round()).abs() < ALIGN_TOL && r.round() >= 1.0).then_some(r.round() as usize)
}

/// Builds the forward (fine) and inverse (coarse) meshes.
///
/// The coarse mesh is uniform over object plus border. The fine mesh shares
/// the coarse border cells and refines every object cell by
/// `coarse_cell / fine_cell`.
pub fn build_meshes(cfg: &DomainConfig) -> Result<(Mesh, Mesh)> {
    if !(cfg.fine_cell_cm > 0.0) || !(cfg.coarse_cell_cm > 0.0) || !(cfg.object_size_cm > 0.0) {
        return Err(Error::Mesh("sizes must be positive".into()));
    }
    let factor = integral_ratio(cfg.coarse_cell_cm, cfg.fine_cell_cm).ok_or_else(|| {
        Error::Mesh(format!(
            "coarse cell {} cm is not an integer multiple of fine cell {} cm",
            cfg.coarse_cell_cm, cfg.fine_cell_cm
        ))
    })?;
    let object_cells = integral_ratio(cfg.object_size_cm, cfg.coarse_cell_cm).ok_or_else(|| {
        Error::Mesh(format!(
            "object size {} cm is not tiled by {} cm cells",
            cfg.object_size_cm, cfg.coarse_cell_cm
        ))
    })?;
    let n = object_cells + 2 * cfg.border_cells;
    let half = 0.5 * n as f64 * cfg.coarse_cell_cm;
    let outer = Grid {
        origin: Point::new(-half, -half),
        cell_size: cfg.coarse_cell_cm,
        nx: n,
        ny: n,
    };
    let fine = Mesh::refined(
        outer,
        Refinement {
            col0: cfg.border_cells,
            row0: cfg.border_cells,
            cols: object_cells,
            rows: object_cells,
            factor,
        },
    )?;
    Ok((fine, Mesh::uniform(outer)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disc { cx: f64, cy: f64, radius: f64 },
}

impl Shape {
    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1,
            Shape::Disc { cx, cy, radius } => (p.x - cx).hypot(p.y - cy) <= radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub name: String,
    pub shape: Shape,
    pub permittivity: ComplexPermittivity,
}

/// Background medium plus ordered regions; later regions override earlier
/// ones. Cells whose centres fall outside the investigation domain are
/// treated as known during inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    background: ComplexPermittivity,
    regions: Vec<Region>,
    investigation_domain: Option<Shape>,
}

impl Phantom {
    pub fn new(
        background: ComplexPermittivity,
        regions: Vec<Region>,
        investigation_domain: Option<Shape>,
    ) -> Result<Self> {
        if !background.is_admissible() {
            return Err(Error::Parameter(format!("background {background} is not admissible")));
        }
        if let Some(r) = regions.iter().find(|r| !r.permittivity.is_admissible()) {
            return Err(Error::Parameter(format!(
                "region `{}` permittivity {} is not admissible",
                r.name, r.permittivity
            )));
        }
        Ok(Phantom {
            background,
            regions,
            investigation_domain,
        })
    }

    pub fn background(&self) -> ComplexPermittivity {
        self.background
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Index of the last region containing `p`.
    pub fn region_at(&self, p: Point) -> Option<usize> {
        self.regions.iter().rposition(|r| r.shape.contains(p))
    }

    pub fn permittivity_at(&self, p: Point) -> ComplexPermittivity {
        self.region_at(p)
            .map_or(self.background, |i| self.regions[i].permittivity)
    }

    pub fn is_known(&self, p: Point) -> bool {
        self.investigation_domain
            .map_or(false, |domain| !domain.contains(p))
    }

    /// Region index per cell, by cell-centre sampling.
    pub fn labels(&self, mesh: &Mesh) -> Vec<Option<usize>> {
        mesh.cells().iter().map(|c| self.region_at(c.center)).collect()
    }
}

/// Per-cell permittivity plus the mask of cells held fixed during inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct PermittivityMap {
    mesh: Mesh,
    values: Vec<ComplexPermittivity>,
    known: Vec<bool>,
}

impl PermittivityMap {
    pub fn new(mesh: Mesh, values: Vec<ComplexPermittivity>, known: Vec<bool>) -> Result<Self> {
        if values.len() != mesh.len() || known.len() != mesh.len() {
            return Err(Error::Dimension(format!(
                "map has {} values and {} mask entries for {} cells",
                values.len(),
                known.len(),
                mesh.len()
            )));
        }
        Ok(PermittivityMap { mesh, values, known })
    }

    /// Every cell set to `value`, nothing known.
    pub fn constant(mesh: Mesh, value: ComplexPermittivity) -> Self {
        let n = mesh.len();
        PermittivityMap {
            mesh,
            values: vec![value; n],
            known: vec![false; n],
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn values(&self) -> &[ComplexPermittivity] {
        &self.values
    }

    pub fn known(&self) -> &[bool] {
        &self.known
    }

    pub fn unknown_indices(&self) -> Vec<usize> {
        (0..self.known.len()).filter(|&i| !self.known[i]).collect()
    }

    pub fn is_admissible(&self) -> bool {
        self.values.iter().all(|v| v.is_admissible())
    }

    pub fn complex_values(&self) -> Vec<Complex64> {
        self.values.iter().map(|v| v.to_complex()).collect()
    }

    pub fn with_values(&self, values: Vec<ComplexPermittivity>) -> Result<Self> {
        PermittivityMap::new(self.mesh.clone(), values, self.known.clone())
    }

    pub fn with_known(&self, known: Vec<bool>) -> Result<Self> {
        PermittivityMap::new(self.mesh.clone(), self.values.clone(), known)
    }

    /// Sub-map covering the bounding box of the unknown cells of a uniform
    /// map; the whole map when every cell is known.
    pub fn unknown_window(&self) -> Result<Self> {
        let grid = *self
            .mesh
            .as_uniform()
            .ok_or_else(|| Error::Mesh("window requires a uniform mesh".into()))?;
        let mut cols = (usize::MAX, 0);
        let mut rows = (usize::MAX, 0);
        for row in 0..grid.ny {
            for col in 0..grid.nx {
                if !self.known[grid.index(col, row)] {
                    cols = (cols.0.min(col), cols.1.max(col));
                    rows = (rows.0.min(row), rows.1.max(row));
                }
            }
        }
        if cols.0 == usize::MAX {
            return Ok(self.clone());
        }
        let sub = Grid {
            origin: Point::new(
                grid.origin.x + cols.0 as f64 * grid.cell_size,
                grid.origin.y + rows.0 as f64 * grid.cell_size,
            ),
            cell_size: grid.cell_size,
            nx: cols.1 - cols.0 + 1,
            ny: rows.1 - rows.0 + 1,
        };
        let mut values = Vec::with_capacity(sub.len());
        let mut known = Vec::with_capacity(sub.len());
        for row in rows.0..=rows.1 {
            for col in cols.0..=cols.1 {
                values.push(self.values[grid.index(col, row)]);
                known.push(self.known[grid.index(col, row)]);
            }
        }
        PermittivityMap::new(Mesh::uniform(sub), values, known)
    }

    pub fn digest(&self) -> String {
        let mut d = DigestBuilder::new("permittivity-map");
        d.str(&self.mesh.digest());
        for (v, k) in self.values.iter().zip(&self.known) {
            d.f64(v.re).f64(v.im).u64(*k as u64);
        }
        d.finish()
    }
}

/// Samples the phantom at every cell centre.
pub fn rasterize(phantom: &Phantom, mesh: &Mesh) -> PermittivityMap {
    let values = mesh.cells().iter().map(|c| phantom.permittivity_at(c.center)).collect();
    let known = mesh.cells().iter().map(|c| phantom.is_known(c.center)).collect();
    PermittivityMap {
        mesh: mesh.clone(),
        values,
        known,
    }
}

/// Averages a fine map onto a nesting uniform coarse mesh. Coarse cells are
/// known only when every fine cell they cover is known.
pub fn restrict_to_coarse(fine_map: &PermittivityMap, coarse: &Mesh) -> Result<PermittivityMap> {
    let grid = coarse
        .as_uniform()
        .ok_or_else(|| Error::Mesh("coarse mesh must be uniform".into()))?;
    let mut sums = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut counts = vec![0usize; grid.len()];
    let mut known = vec![true; grid.len()];
    for (i, cell) in fine_map.mesh.cells().iter().enumerate() {
        integral_ratio(grid.cell_size, cell.size).ok_or_else(|| {
            Error::Mesh(format!(
                "fine cell {} cm does not divide coarse cell {} cm",
                cell.size, grid.cell_size
            ))
        })?;
        let corner_x = (cell.center.x - 0.5 * cell.size - grid.origin.x) / cell.size;
        let corner_y = (cell.center.y - 0.5 * cell.size - grid.origin.y) / cell.size;
        if (corner_x - corner_x.round()).abs() > ALIGN_TOL || (corner_y - corner_y.round()).abs() > ALIGN_TOL {
            return Err(Error::Mesh("fine cells are not aligned with the coarse grid".into()));
        }
        let (col, row) = grid
            .locate(cell.center)
            .ok_or_else(|| Error::Mesh("fine cell lies outside the coarse mesh".into()))?;
        let j = grid.index(col, row);
        sums[j] += fine_map.values[i].to_complex();
        counts[j] += 1;
        known[j] &= fine_map.known[i];
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::Mesh("coarse mesh extends beyond the fine mesh".into()));
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| ComplexPermittivity::from_complex(s / c as f64))
        .collect();
    PermittivityMap::new(coarse.clone(), values, known)
}
