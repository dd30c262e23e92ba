//! Candidate lattice sites and their precomputed hyperfine couplings.
//!
//! A catalog is the discrete domain the samplers walk over. It is immutable
//! once built and can be shared read-only between chains.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CUTOFF_KHZ: f64 = 5.0;
pub const DEFAULT_RADIUS_ANGSTROM: f64 = 5.0;

/// Couplings are grouped into symmetry classes after rounding to this step.
pub const COUPLING_PRECISION_KHZ: f64 = 0.01;

const COLUMNS: [&str; 5] = [
    "x_angstrom",
    "y_angstrom",
    "z_angstrom",
    "a_par_khz",
    "a_perp_khz",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSite {
    pub site_id: usize,
    /// Cartesian position in the defect frame, Å, defect at the origin.
    pub position: [f64; 3],
    /// Parallel hyperfine component, kHz.
    pub a_par: f64,
    /// Perpendicular hyperfine component, kHz. Never negative.
    pub a_perp: f64,
    pub symmetry_class: usize,
}

impl LatticeSite {
    /// Hyperfine magnitude `sqrt(a_par^2 + a_perp^2)`, kHz.
    pub fn magnitude(&self) -> f64 {
        self.a_par.hypot(self.a_perp)
    }

    pub fn distance(&self, other: &LatticeSite) -> f64 {
        let [x, y, z] = self.position;
        let [u, v, w] = other.position;
        ((x - u).powi(2) + (y - v).powi(2) + (z - w).powi(2)).sqrt()
    }
}

/// Raw site description before ids and classes are assigned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteRecord {
    pub position: [f64; 3],
    pub a_par: f64,
    pub a_perp: f64,
}

#[derive(Debug, Clone)]
pub struct LatticeCatalog {
    sites: Vec<LatticeSite>,
    cutoff_khz: f64,
    radius: f64,
    neighbors: Vec<Vec<u32>>,
    class_sizes: Vec<usize>,
}

fn passes_cutoff(a_par: f64, a_perp: f64, cutoff_khz: f64) -> bool {
    a_par.abs() > cutoff_khz || a_perp.abs() > cutoff_khz
}

fn coupling_key(a_par: f64, a_perp: f64) -> (i64, i64) {
    (
        (a_par / COUPLING_PRECISION_KHZ).round() as i64,
        (a_perp / COUPLING_PRECISION_KHZ).round() as i64,
    )
}

impl LatticeCatalog {
    /// Builds a catalog from raw records: applies the magnitude cutoff,
    /// assigns dense site ids in input order, groups symmetry classes and
    /// precomputes the neighbour index.
    pub fn from_records(records: &[SiteRecord], cutoff_khz: f64, radius: f64) -> Result<Self> {
        if !(cutoff_khz >= 0.0) {
            return Err(Error::invalid(format!("cutoff must be >= 0, got {cutoff_khz}")));
        }
        if !(radius > 0.0) {
            return Err(Error::invalid(format!("neighbour radius must be > 0, got {radius}")));
        }
        let mut sites = Vec::new();
        for r in records {
            if r.a_perp < 0.0 || !r.a_perp.is_finite() || !r.a_par.is_finite() {
                return Err(Error::invalid(format!(
                    "site with couplings ({}, {}) kHz is out of domain",
                    r.a_par, r.a_perp
                )));
            }
            if passes_cutoff(r.a_par, r.a_perp, cutoff_khz) {
                sites.push(LatticeSite {
                    site_id: sites.len(),
                    position: r.position,
                    a_par: r.a_par,
                    a_perp: r.a_perp,
                    symmetry_class: 0,
                });
            }
        }
        if sites.is_empty() {
            return Err(Error::EmptyCatalog { cutoff_khz });
        }
        let class_sizes = assign_classes(&mut sites);
        let neighbors = build_neighbor_index(&sites, radius);
        Ok(Self {
            sites,
            cutoff_khz,
            radius,
            neighbors,
            class_sizes,
        })
    }

    pub fn sites(&self) -> &[LatticeSite] {
        &self.sites
    }

    pub fn site(&self, id: usize) -> &LatticeSite {
        &self.sites[id]
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn cutoff_khz(&self) -> f64 {
        self.cutoff_khz
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Sorted ids of the sites within the neighbour radius of `id`.
    pub fn neighbors(&self, id: usize) -> &[u32] {
        &self.neighbors[id]
    }

    pub fn n_classes(&self) -> usize {
        self.class_sizes.len()
    }

    pub fn class_of(&self, id: usize) -> usize {
        self.sites[id].symmetry_class
    }

    pub fn class_size(&self, class: usize) -> usize {
        self.class_sizes[class]
    }

    /// Multiplicity of each symmetry class.
    pub fn symmetry_class_sizes(&self) -> BTreeMap<usize, usize> {
        self.class_sizes.iter().copied().enumerate().collect()
    }

    pub fn records(&self) -> Vec<SiteRecord> {
        self.sites
            .iter()
            .map(|s| SiteRecord {
                position: s.position,
                a_par: s.a_par,
                a_perp: s.a_perp,
            })
            .collect()
    }

    /// Re-applies a cutoff. Site ids are reassigned densely.
    pub fn filtered(&self, cutoff_khz: f64) -> Result<Self> {
        Self::from_records(&self.records(), cutoff_khz, self.radius)
    }

    /// Same sites and couplings, different neighbour radius.
    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::invalid(format!("neighbour radius must be > 0, got {radius}")));
        }
        Ok(Self {
            neighbors: build_neighbor_index(&self.sites, radius),
            radius,
            ..self.clone()
        })
    }

    /// Same sites and positions with replaced couplings; ids are preserved
    /// and no cutoff is re-applied, so site ids stay aligned with `self`.
    pub fn with_couplings(&self, couplings: &[(f64, f64)]) -> Result<Self> {
        if couplings.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: couplings.len(),
            });
        }
        let mut sites = self.sites.clone();
        for (s, &(a_par, a_perp)) in sites.iter_mut().zip(couplings) {
            if a_perp < 0.0 {
                return Err(Error::invalid("a_perp must be non-negative"));
            }
            s.a_par = a_par;
            s.a_perp = a_perp;
        }
        let class_sizes = assign_classes(&mut sites);
        Ok(Self {
            sites,
            class_sizes,
            ..self.clone()
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_records(out, &self.records())
    }
}

fn assign_classes(sites: &mut [LatticeSite]) -> Vec<usize> {
    let mut by_key: HashMap<(i64, i64), usize> = HashMap::new();
    let mut sizes = Vec::new();
    for s in sites.iter_mut() {
        let class = *by_key.entry(coupling_key(s.a_par, s.a_perp)).or_insert_with(|| {
            sizes.push(0);
            sizes.len() - 1
        });
        sizes[class] += 1;
        s.symmetry_class = class;
    }
    sizes
}

/// `neighbors(i) = { j != i : |x_i - x_j| <= radius }`, each list sorted.
pub fn build_neighbor_index(sites: &[LatticeSite], radius: f64) -> Vec<Vec<u32>> {
    let mut index = vec![Vec::new(); sites.len()];
    for i in 0..sites.len() {
        for j in (i + 1)..sites.len() {
            if sites[i].distance(&sites[j]) <= radius {
                index[i].push(j as u32);
                index[j].push(i as u32);
            }
        }
    }
    for list in &mut index {
        list.sort_unstable();
    }
    index
}

/// Loads a catalog file and applies the magnitude cutoff.
pub fn load_catalog(path: impl AsRef<Path>, cutoff_khz: f64, radius: f64) -> Result<LatticeCatalog> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let records = read_records(file, path)?;
    LatticeCatalog::from_records(&records, cutoff_khz, radius)
}

pub fn read_records<R: std::io::Read>(input: R, path: &Path) -> Result<Vec<SiteRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(parse_err(1, "missing header row".into()));
    }
    let mut columns = [0usize; 5];
    for (slot, name) in columns.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, format!("missing column `{name}`")))?;
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let mut values = [0.0f64; 5];
        for (v, (&col, name)) in values.iter_mut().zip(columns.iter().zip(COLUMNS)) {
            let raw = row
                .get(col)
                .ok_or_else(|| parse_err(line, format!("row is missing `{name}`")))?;
            *v = raw
                .parse()
                .map_err(|_| parse_err(line, format!("`{raw}` is not a number ({name})")))?;
        }
        if values[4] < 0.0 {
            return Err(parse_err(line, format!("negative a_perp_khz {}", values[4])));
        }
        records.push(SiteRecord {
            position: [values[0], values[1], values[2]],
            a_par: values[3],
            a_perp: values[4],
        });
    }
    Ok(records)
}

pub fn write_records<W: Write>(out: W, records: &[SiteRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record(&[
            r.position[0].to_string(),
            r.position[1].to_string(),
            r.position[2].to_string(),
            r.a_par.to_string(),
            r.a_perp.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
