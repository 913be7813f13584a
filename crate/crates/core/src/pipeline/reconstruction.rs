//! Plain-text reconstruction grids.
//!
//! ```text
//! mwtomo-reconstruction
//! version 1
//! config_digest <hex | ->
//! grid <nx> <ny> <origin_x> <origin_y> <cell_cm>
//! <col> <row> <re> <im> <known>      (nx * ny lines, row-major)
//! checksum <sha256 of every preceding byte>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::digest::sha256_hex;
use crate::domain::{ComplexPermittivity, Grid, Mesh, PermittivityMap, Point};
use crate::error::{Error, Result};
use crate::fsutil;

pub const RECONSTRUCTION_VERSION: u32 = 1;
const MAGIC: &str = "mwtomo-reconstruction";
const WHAT: &str = "reconstruction";

pub fn render_reconstruction(map: &PermittivityMap, config_digest: Option<&str>) -> Result<String> {
    let grid = map
        .mesh()
        .as_uniform()
        .ok_or_else(|| Error::Mesh("reconstructions are stored on uniform meshes".into()))?;
    let mut s = String::new();
    writeln!(s, "{MAGIC}\nversion {RECONSTRUCTION_VERSION}").unwrap();
    writeln!(s, "config_digest {}", config_digest.unwrap_or("-")).unwrap();
    writeln!(
        s,
        "grid {} {} {:?} {:?} {:?}",
        grid.nx, grid.ny, grid.origin.x, grid.origin.y, grid.cell_size
    )
    .unwrap();
    for row in 0..grid.ny {
        for col in 0..grid.nx {
            let i = grid.index(col, row);
            let v = map.values()[i];
            writeln!(s, "{col} {row} {:?} {:?} {}", v.re, v.im, map.known()[i] as u8).unwrap();
        }
    }
    let checksum = sha256_hex(s.as_bytes());
    writeln!(s, "checksum {checksum}").unwrap();
    Ok(s)
}

pub fn write_reconstruction(map: &PermittivityMap, config_digest: Option<&str>, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, render_reconstruction(map, config_digest)?.as_bytes())
}

/// The map and the config digest it was written with.
pub fn parse_reconstruction(text: &str) -> Result<(PermittivityMap, Option<String>)> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::format(WHAT, "missing `mwtomo-reconstruction` header"));
    }
    let version: u32 = lines
        .next()
        .and_then(|l| l.strip_prefix("version "))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::format(WHAT, "missing version line"))?;
    if version != RECONSTRUCTION_VERSION {
        return Err(Error::Version {
            found: version,
            supported: RECONSTRUCTION_VERSION,
        });
    }
    let body_end = text
        .rfind("checksum ")
        .filter(|&i| i > 0 && text.as_bytes()[i - 1] == b'\n')
        .ok_or_else(|| Error::Checksum("reconstruction (checksum line missing; truncated file?)".into()))?;
    if sha256_hex(&text.as_bytes()[..body_end]) != text[body_end + "checksum ".len()..].trim() {
        return Err(Error::Checksum("reconstruction".into()));
    }

    let mut lines = text[..body_end].lines().skip(2);
    let digest = lines
        .next()
        .and_then(|l| l.strip_prefix("config_digest "))
        .ok_or_else(|| Error::format(WHAT, "missing config_digest line"))?;
    let config_digest = (digest != "-").then(|| digest.to_string());
    let g: Vec<&str> = lines
        .next()
        .and_then(|l| l.strip_prefix("grid "))
        .map(|l| l.split_whitespace().collect())
        .unwrap_or_default();
    let bad_grid = || Error::format(WHAT, "malformed grid line");
    if g.len() != 5 {
        return Err(bad_grid());
    }
    let grid = Grid {
        nx: g[0].parse().map_err(|_| bad_grid())?,
        ny: g[1].parse().map_err(|_| bad_grid())?,
        origin: Point::new(g[2].parse().map_err(|_| bad_grid())?, g[3].parse().map_err(|_| bad_grid())?),
        cell_size: g[4].parse().map_err(|_| bad_grid())?,
    };
    if grid.nx == 0 || grid.ny == 0 || !(grid.cell_size > 0.0) {
        return Err(bad_grid());
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut known = Vec::with_capacity(grid.len());
    for row in 0..grid.ny {
        for col in 0..grid.nx {
            let line = lines
                .next()
                .ok_or_else(|| Error::format(WHAT, format!("missing cell ({col}, {row})")))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::format(WHAT, format!("malformed cell line `{line}`"));
            if f.len() != 5 || f[0].parse::<usize>().ok() != Some(col) || f[1].parse::<usize>().ok() != Some(row) {
                return Err(bad());
            }
            let re: f64 = f[2].parse().map_err(|_| bad())?;
            let im: f64 = f[3].parse().map_err(|_| bad())?;
            values.push(ComplexPermittivity::new(re, im));
            known.push(match f[4] {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            });
        }
    }
    if lines.next().is_some() {
        return Err(Error::format(WHAT, "trailing content before checksum"));
    }
    Ok((PermittivityMap::new(Mesh::uniform(grid), values, known)?, config_digest))
}

pub fn read_reconstruction(path: &Path) -> Result<(PermittivityMap, Option<String>)> {
    parse_reconstruction(&fsutil::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PermittivityMap {
        let grid = Grid {
            origin: Point::new(-0.9, -0.6),
            cell_size: 0.3,
            nx: 3,
            ny: 2,
        };
        let values = (0..6)
            .map(|i| ComplexPermittivity::new(1.0 + i as f64 / 3.0, -0.1 * i as f64))
            .collect();
        PermittivityMap::new(Mesh::uniform(grid), values, vec![true, false, false, false, false, true]).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let map = sample();
        let text = render_reconstruction(&map, Some("feed")).unwrap();
        assert_eq!(parse_reconstruction(&text).unwrap(), (map, Some("feed".to_string())));
    }

    #[test]
    fn damage_is_detected() {
        let text = render_reconstruction(&sample(), None).unwrap();
        assert!(matches!(parse_reconstruction(&text[..text.len() - 30]), Err(Error::Checksum(_))));
        let tampered = text.replacen("0 0 1.0", "0 0 2.0", 1);
        assert!(matches!(parse_reconstruction(&tampered), Err(Error::Checksum(_))));
        assert!(matches!(parse_reconstruction("nope"), Err(Error::Format { .. })));
    }
}
