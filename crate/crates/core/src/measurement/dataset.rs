//! Versioned plain-text dataset files.
//!
//! ```text
//! mwtomo-dataset
//! version 1
//! frequency_ghz 1.0
//! field_mode total
//! geometry_digest <hex>
//! provenance <hex>
//! config_digest <hex | ->
//! noise_percent 0.0
//! rng_seed 0
//! standoff_cm 10.0
//! transmitters 16
//! tx <index> <cx> <cy> <nx> <ny> <aperture_cm> <elements> <amplitude>
//! records 288
//! <tx> <rx> <x> <y> <re> <im>
//! checksum <sha256 of every preceding byte>
//! ```
//!
//! Floats use Rust's shortest round-trip representation, so a write/read
//! cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;

use super::{FieldMode, MeasurementGeometry, MeasurementSet};
use crate::digest::sha256_hex;
use crate::domain::Point;
use crate::error::{Error, Result};
use crate::forward::SourceModel;
use crate::fsutil;

pub const DATASET_VERSION: u32 = 1;
const MAGIC: &str = "mwtomo-dataset";
const WHAT: &str = "dataset";

pub fn render_dataset(set: &MeasurementSet) -> String {
    let mut s = String::new();
    let g = &set.geometry;
    writeln!(s, "{MAGIC}").unwrap();
    writeln!(s, "version {DATASET_VERSION}").unwrap();
    writeln!(s, "frequency_ghz {:?}", set.frequency_ghz).unwrap();
    writeln!(s, "field_mode {}", set.mode.as_str()).unwrap();
    writeln!(s, "geometry_digest {}", set.geometry_digest()).unwrap();
    writeln!(s, "provenance {}", set.provenance).unwrap();
    writeln!(s, "config_digest {}", set.config_digest.as_deref().unwrap_or("-")).unwrap();
    writeln!(s, "noise_percent {:?}", set.noise_percent).unwrap();
    writeln!(s, "rng_seed {}", set.rng_seed).unwrap();
    writeln!(s, "standoff_cm {:?}", g.standoff_cm).unwrap();
    writeln!(s, "transmitters {}", g.transmitters.len()).unwrap();
    for (i, t) in g.transmitters.iter().enumerate() {
        writeln!(
            s,
            "tx {i} {:?} {:?} {:?} {:?} {:?} {} {:?}",
            t.center.x, t.center.y, t.normal.x, t.normal.y, t.aperture_width, t.num_elements, t.amplitude
        )
        .unwrap();
    }
    writeln!(s, "records {}", set.values.len()).unwrap();
    let mut values = set.values.iter();
    for (t, rx) in g.receivers.iter().enumerate() {
        for (r, p) in rx.iter().enumerate() {
            let v = values.next().expect("one value per receiver");
            writeln!(s, "{t} {r} {:?} {:?} {:?} {:?}", p.x, p.y, v.re, v.im).unwrap();
        }
    }
    let checksum = sha256_hex(s.as_bytes());
    writeln!(s, "checksum {checksum}").unwrap();
    s
}

pub fn write_dataset(set: &MeasurementSet, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, render_dataset(set).as_bytes())
}

pub fn read_dataset(path: &Path) -> Result<MeasurementSet> {
    parse_dataset(&fsutil::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        self.line_no += 1;
        self.inner
            .next()
            .ok_or_else(|| Error::format(WHAT, format!("unexpected end of file at line {}", self.line_no)))
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim()),
            _ => Err(Error::format(WHAT, format!("line {}: expected `{key}`", self.line_no))),
        }
    }

    fn keyed_parse<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.keyed(key)?;
        v.parse()
            .map_err(|_| Error::format(WHAT, format!("line {}: bad value for `{key}`", self.line_no)))
    }
}

fn field<T: FromStr>(parts: &[&str], i: usize, line_no: usize) -> Result<T> {
    parts
        .get(i)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::format(WHAT, format!("line {line_no}: bad field {i}")))
}

pub fn parse_dataset(text: &str) -> Result<MeasurementSet> {
    let mut head = text.lines();
    if head.next() != Some(MAGIC) {
        return Err(Error::format(WHAT, "missing `mwtomo-dataset` header"));
    }
    let version: u32 = head
        .next()
        .and_then(|l| l.strip_prefix("version "))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::format(WHAT, "missing version line"))?;
    if version != DATASET_VERSION {
        return Err(Error::Version {
            found: version,
            supported: DATASET_VERSION,
        });
    }

    let body_end = text
        .rfind("checksum ")
        .filter(|&i| i == 0 || text.as_bytes()[i - 1] == b'\n')
        .ok_or_else(|| Error::Checksum("dataset (checksum line missing; truncated file?)".into()))?;
    let stored = text[body_end + "checksum ".len()..].trim();
    if sha256_hex(&text.as_bytes()[..body_end]) != stored {
        return Err(Error::Checksum("dataset".into()));
    }

    let mut lines = Lines {
        inner: text[..body_end].lines(),
        line_no: 0,
    };
    lines.next_line()?;
    lines.next_line()?;
    let frequency_ghz: f64 = lines.keyed_parse("frequency_ghz")?;
    let mode: FieldMode = lines.keyed("field_mode")?.parse()?;
    let geometry_digest = lines.keyed("geometry_digest")?.to_string();
    let provenance = lines.keyed("provenance")?.to_string();
    let config_digest = match lines.keyed("config_digest")? {
        "-" => None,
        d => Some(d.to_string()),
    };
    let noise_percent: f64 = lines.keyed_parse("noise_percent")?;
    let rng_seed: u64 = lines.keyed_parse("rng_seed")?;
    let standoff_cm: f64 = lines.keyed_parse("standoff_cm")?;
    let n_tx: usize = lines.keyed_parse("transmitters")?;

    let mut transmitters = Vec::with_capacity(n_tx);
    for i in 0..n_tx {
        let line = lines.keyed("tx")?;
        let ln = lines.line_no;
        let p: Vec<&str> = line.split_whitespace().collect();
        if p.len() != 8 || field::<usize>(&p, 0, ln)? != i {
            return Err(Error::format(WHAT, format!("line {ln}: malformed transmitter record")));
        }
        let mut source = SourceModel::new(
            Point::new(field(&p, 1, ln)?, field(&p, 2, ln)?),
            Point::new(field(&p, 3, ln)?, field(&p, 4, ln)?),
            field(&p, 5, ln)?,
            field(&p, 6, ln)?,
            frequency_ghz,
        )?;
        // keep the stored normal bit-exact rather than re-normalized
        source.normal = Point::new(field(&p, 3, ln)?, field(&p, 4, ln)?);
        source.amplitude = field(&p, 7, ln)?;
        transmitters.push(source);
    }

    let n_records: usize = lines.keyed_parse("records")?;
    let mut receivers: Vec<Vec<Point>> = vec![Vec::new(); n_tx];
    let mut values = Vec::with_capacity(n_records);
    let mut last = None;
    for _ in 0..n_records {
        let line = lines.next_line()?;
        let ln = lines.line_no;
        let p: Vec<&str> = line.split_whitespace().collect();
        if p.len() != 6 {
            return Err(Error::format(WHAT, format!("line {ln}: expected 6 fields")));
        }
        let t: usize = field(&p, 0, ln)?;
        let r: usize = field(&p, 1, ln)?;
        let ordered = match last {
            None => t == 0 && r == 0,
            Some((lt, lr)) => (t == lt && r == lr + 1) || (t > lt && r == 0),
        };
        if t >= n_tx || !ordered {
            return Err(Error::format(WHAT, format!("line {ln}: record out of order")));
        }
        last = Some((t, r));
        receivers[t].push(Point::new(field(&p, 2, ln)?, field(&p, 3, ln)?));
        values.push(Complex64::new(field(&p, 4, ln)?, field(&p, 5, ln)?));
    }
    if lines.inner.next().is_some() {
        return Err(Error::format(WHAT, "trailing content before checksum"));
    }

    let set = MeasurementSet {
        geometry: MeasurementGeometry {
            transmitters,
            receivers,
            standoff_cm,
        },
        frequency_ghz,
        mode,
        values,
        noise_percent,
        rng_seed,
        provenance,
        config_digest,
    };
    if set.geometry_digest() != geometry_digest {
        return Err(Error::format(WHAT, "geometry digest does not match the stored geometry"));
    }
    Ok(set)
}
