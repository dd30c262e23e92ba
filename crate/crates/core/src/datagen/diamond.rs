//! Point-dipole hyperfine catalog for 13C sites around an NV centre.
//!
//! Sites are the diamond lattice points within `radius` of the vacancy,
//! excluding the vacancy and the nitrogen. The frame is rotated so that the
//! NV axis ([111]) is z. Couplings use the secular dipolar form
//! `A_par = C (3 cos^2 t - 1) / r^3`, `A_perp = 3 C |sin t cos t| / r^3`,
//! rounded to the catalog precision so that symmetric sites share values
//! exactly. Contact terms of the nearest shells are not modelled.

use serde::{Deserialize, Serialize};

use crate::catalog::{SiteRecord, COUPLING_PRECISION_KHZ};
use crate::error::{Error, Result};

/// `mu0 / 4pi * hbar * gamma_e * gamma_13C / h`, kHz Å^3.
pub const DIPOLAR_KHZ_A3: f64 = 19_885.0;
/// Cubic lattice constant of diamond, Å.
pub const LATTICE_CONSTANT: f64 = 3.567;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiamondConfig {
    /// Generation radius around the vacancy, Å.
    pub radius: f64,
    pub lattice_constant: f64,
    pub dipolar_khz_a3: f64,
}

impl Default for DiamondConfig {
    fn default() -> Self {
        Self {
            radius: 22.0,
            lattice_constant: LATTICE_CONSTANT,
            dipolar_khz_a3: DIPOLAR_KHZ_A3,
        }
    }
}

fn round_coupling(v: f64) -> f64 {
    let r = (v / COUPLING_PRECISION_KHZ).round() * COUPLING_PRECISION_KHZ;
    // keep -0.0 out of the output
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Diamond lattice points in units of a/4: all-even coordinates with a
/// sum divisible by four, or all-odd ones with a sum of 3 mod 4.
fn is_lattice_point(n: [i64; 3]) -> bool {
    let parity = n[0].rem_euclid(2);
    if n.iter().any(|x| x.rem_euclid(2) != parity) {
        return false;
    }
    let sum = (n[0] + n[1] + n[2]).rem_euclid(4);
    if parity == 0 {
        sum == 0
    } else {
        sum == 3
    }
}

/// Generates the raw site records, sorted by decreasing coupling magnitude
/// (ties by position) so the output is stable.
///
/// Couplings depend on a site only through the integers `|n|^2` and
/// `n . (1, 1, 1)`, so symmetry-equivalent sites get bit-identical values.
pub fn generate(cfg: &DiamondConfig) -> Result<Vec<SiteRecord>> {
    if !(cfg.radius > 0.0 && cfg.lattice_constant > 0.0 && cfg.dipolar_khz_a3 > 0.0) {
        return Err(Error::invalid("diamond generator parameters must be positive"));
    }
    let unit = cfg.lattice_constant / 4.0;
    let s3 = 3f64.sqrt();
    let s6 = 6f64.sqrt();
    let s2 = 2f64.sqrt();
    let ex = [1.0 / s6, 1.0 / s6, -2.0 / s6];
    let ey = [-1.0 / s2, 1.0 / s2, 0.0];
    let ez = [1.0 / s3, 1.0 / s3, 1.0 / s3];
    let dot = |u: &[f64; 3], v: [i64; 3]| u[0] * v[0] as f64 + u[1] * v[1] as f64 + u[2] * v[2] as f64;

    let max = (cfg.radius / unit).floor() as i64;
    let max_sq = (cfg.radius / unit).powi(2);
    let mut records = Vec::new();
    for i in -max..=max {
        for j in -max..=max {
            for k in -max..=max {
                let n = [i, j, k];
                let norm_sq = i * i + j * j + k * k;
                // the vacancy and, one bond along [111], the nitrogen
                if norm_sq == 0 || n == [1, 1, 1] || norm_sq as f64 > max_sq || !is_lattice_point(n) {
                    continue;
                }
                let axial = (i + j + k) as f64;
                let cos_sq = axial * axial / (3.0 * norm_sq as f64);
                let sin_cos = (cos_sq * (1.0 - cos_sq)).max(0.0).sqrt();
                let r = unit * (norm_sq as f64).sqrt();
                let scale = cfg.dipolar_khz_a3 / (r * r * r);
                let position = [dot(&ex, n), dot(&ey, n), dot(&ez, n)].map(|x| (x * unit * 1e4).round() / 1e4);
                records.push(SiteRecord {
                    position,
                    a_par: round_coupling(scale * (3.0 * cos_sq - 1.0)),
                    a_perp: round_coupling(3.0 * scale * sin_cos),
                });
            }
        }
    }
    records.sort_by(|x, y| {
        let mx = x.a_par.hypot(x.a_perp);
        let my = y.a_par.hypot(y.a_perp);
        my.total_cmp(&mx)
            .then(x.a_par.total_cmp(&y.a_par))
            .then(x.a_perp.total_cmp(&y.a_perp))
            .then(x.position.iter().zip(&y.position).fold(std::cmp::Ordering::Equal, |o, (a, b)| o.then(a.total_cmp(b))))
    });
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::LatticeCatalog;

    #[test]
    fn nearest_shell_and_symmetry() {
        let recs = generate(&DiamondConfig { radius: 4.0, ..Default::default() }).unwrap();
        // no site at the vacancy or the nitrogen
        let bond = LATTICE_CONSTANT * 3f64.sqrt() / 4.0;
        let on_axis = recs
            .iter()
            .filter(|r| (r.position[2] - bond).abs() < 1e-3 && r.position[0].abs() < 1e-3 && r.position[1].abs() < 1e-3)
            .count();
        assert_eq!(on_axis, 0);
        // three carbons bonded to the vacancy share one coupling
        let nearest: Vec<&SiteRecord> = recs
            .iter()
            .filter(|r| (r.position.iter().map(|x| x * x).sum::<f64>().sqrt() - bond).abs() < 1e-3)
            .collect();
        assert_eq!(nearest.len(), 3);
        assert!(nearest.iter().all(|r| r.a_par == nearest[0].a_par && r.a_perp == nearest[0].a_perp));
    }

    #[test]
    fn coupling_matches_dipolar_formula() {
        let recs = generate(&DiamondConfig { radius: 8.0, ..Default::default() }).unwrap();
        for r in recs {
            let d = r.position.iter().map(|x| x * x).sum::<f64>().sqrt();
            let c = r.position[2] / d;
            let want = DIPOLAR_KHZ_A3 * (3.0 * c * c - 1.0) / d.powi(3);
            // positions are rounded to 1e-4 Å
            assert!((r.a_par - want).abs() < 0.02 + 1e-3 * want.abs(), "{r:?}");
        }
    }

    #[test]
    fn default_catalog_has_expected_class_structure() {
        let recs = generate(&DiamondConfig::default()).unwrap();
        let cat = LatticeCatalog::from_records(&recs, 5.0, 5.0).unwrap();
        assert!(cat.len() > 3000 && cat.len() < 4500, "{}", cat.len());
        // C3v orbits hold 3 or 6 sites, except single sites on the axis
        let sizes = cat.symmetry_class_sizes();
        for s in cat.sites() {
            let m = sizes[&s.symmetry_class];
            assert!(m % 3 == 0 || s.a_perp == 0.0, "{s:?} in a class of {m}");
        }
        let strong = cat.sites().iter().filter(|s| s.magnitude() > 150.0).count();
        assert!(strong > 50);
    }
}
