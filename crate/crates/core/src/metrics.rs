//! Posterior summaries and recovery metrics.
//!
//! Spins are only identifiable up to their symmetry class, so every
//! comparison with a truth or reference goes through class multisets: a
//! sample detects the i-th truth copy of class `c` when it holds at least
//! `i` spins of class `c`. Classes always come from the catalog passed in,
//! which for perturbed-catalog studies should be the unperturbed one.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::catalog::LatticeCatalog;
use crate::engine::{PosteriorEnsemble, Sample};
use crate::error::{Error, Result};

/// Default magnitude bin edges, kHz.
pub const DEFAULT_BIN_EDGES: [f64; 6] = [0.0, 25.0, 50.0, 100.0, 150.0, f64::INFINITY];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MagnitudeBins {
    edges: Vec<f64>,
}

impl Default for MagnitudeBins {
    fn default() -> Self {
        Self {
            edges: DEFAULT_BIN_EDGES.to_vec(),
        }
    }
}

impl MagnitudeBins {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) || edges[0].is_nan() {
            return Err(Error::invalid("bin edges must be at least two strictly increasing values"));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Half-open bin `[lo, hi)` holding `magnitude`.
    pub fn bin_of(&self, magnitude: f64) -> Option<usize> {
        let i = self.edges.partition_point(|&e| e <= magnitude);
        (i >= 1 && i < self.edges.len()).then(|| i - 1)
    }

    pub fn bounds(&self, bin: usize) -> (f64, f64) {
        (self.edges[bin], self.edges[bin + 1])
    }

    pub fn label(&self, bin: usize) -> String {
        let (lo, hi) = self.bounds(bin);
        if hi.is_infinite() {
            format!(">{lo}")
        } else {
            format!("{lo}-{hi}")
        }
    }
}

fn require_samples(posterior: &PosteriorEnsemble) -> Result<()> {
    if posterior.is_empty() {
        Err(Error::invalid("the posterior holds no samples past burn-in"))
    } else {
        Ok(())
    }
}

fn class_counts(catalog: &LatticeCatalog, sites: &[u32]) -> HashMap<usize, usize> {
    let mut counts = HashMap::new();
    for &s in sites {
        *counts.entry(catalog.class_of(s as usize)).or_insert(0) += 1;
    }
    counts
}

/// One truth (or reference) spin and its detection rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinDetection {
    pub site_id: u32,
    pub symmetry_class: usize,
    /// 1-based copy index among truth spins of the same class.
    pub copy: usize,
    pub magnitude_khz: f64,
    pub rate: f64,
}

/// Multiplicity-aware detection rate of every truth spin.
pub fn detection_rate(posterior: &PosteriorEnsemble, catalog: &LatticeCatalog, truth: &[u32]) -> Result<Vec<SpinDetection>> {
    require_samples(posterior)?;
    let mut copies: HashMap<usize, usize> = HashMap::new();
    let mut spins: Vec<(u32, usize, usize)> = Vec::with_capacity(truth.len());
    for &s in truth {
        let class = catalog.class_of(s as usize);
        let copy = copies.entry(class).or_insert(0);
        *copy += 1;
        spins.push((s, class, *copy));
    }
    let mut hits = vec![0usize; spins.len()];
    let mut n = 0usize;
    for sample in posterior.posterior() {
        n += 1;
        let counts = class_counts(catalog, &sample.site_ids);
        for (h, &(_, class, copy)) in hits.iter_mut().zip(&spins) {
            if counts.get(&class).copied().unwrap_or(0) >= copy {
                *h += 1;
            }
        }
    }
    Ok(spins
        .into_iter()
        .zip(hits)
        .map(|((site_id, symmetry_class, copy), h)| SpinDetection {
            site_id,
            symmetry_class,
            copy,
            magnitude_khz: catalog.site(site_id as usize).magnitude(),
            rate: h as f64 / n as f64,
        })
        .collect())
}

/// Mode of a histogram, ties towards the smaller key.
pub fn histogram_mode(hist: &BTreeMap<usize, usize>) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (&k, &c) in hist {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((k, c));
        }
    }
    best.map(|(k, _)| k)
}

pub fn k_mode(posterior: &PosteriorEnsemble) -> Result<usize> {
    require_samples(posterior)?;
    Ok(histogram_mode(&posterior.k_histogram()).expect("non-empty"))
}

/// `|mode(k) - k_true|`.
pub fn dimension_discrepancy(posterior: &PosteriorEnsemble, k_true: usize) -> Result<usize> {
    Ok(k_mode(posterior)?.abs_diff(k_true))
}

/// Most frequent exact configuration among samples at the modal dimension;
/// ties go to the lexicographically smallest site list.
pub fn modal_configuration(posterior: &PosteriorEnsemble) -> Result<Vec<u32>> {
    let mode = k_mode(posterior)?;
    let mut counts: BTreeMap<&[u32], usize> = BTreeMap::new();
    for s in posterior.posterior().filter(|s| s.k == mode) {
        *counts.entry(&s.site_ids).or_insert(0) += 1;
    }
    let mut best: Option<(&[u32], usize)> = None;
    for (cfg, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((cfg, c));
        }
    }
    Ok(best.expect("mode has samples").0.to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRate {
    pub bin: usize,
    pub lo_khz: f64,
    pub hi_khz: f64,
    /// Spins falling in this bin.
    pub n: usize,
    /// Of which flagged (false positives, or detections).
    pub hits: usize,
    pub rate: f64,
}

fn bin_rates(bins: &MagnitudeBins, items: impl IntoIterator<Item = (f64, f64)>) -> Vec<BinRate> {
    let mut acc: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for (magnitude, value) in items {
        if let Some(b) = bins.bin_of(magnitude) {
            let e = acc.entry(b).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += value;
        }
    }
    acc.into_iter()
        .map(|(bin, (n, sum))| {
            let (lo_khz, hi_khz) = bins.bounds(bin);
            BinRate {
                bin,
                lo_khz,
                hi_khz,
                n,
                hits: sum.round() as usize,
                rate: sum / n as f64,
            }
        })
        .collect()
}

/// False-positive fraction of the modal configuration, per magnitude bin.
/// Bins holding no spin of the modal configuration are absent.
pub fn false_positive_rate(
    posterior: &PosteriorEnsemble,
    catalog: &LatticeCatalog,
    truth: &[u32],
    bins: &MagnitudeBins,
) -> Result<Vec<BinRate>> {
    let modal = modal_configuration(posterior)?;
    let mut remaining = class_counts(catalog, truth);
    let flagged = modal.iter().map(|&s| {
        let class = catalog.class_of(s as usize);
        let left = remaining.entry(class).or_insert(0);
        let false_positive = if *left > 0 {
            *left -= 1;
            0.0
        } else {
            1.0
        };
        (catalog.site(s as usize).magnitude(), false_positive)
    });
    Ok(bin_rates(bins, flagged.collect::<Vec<_>>()))
}

/// Mean detection rate per magnitude bin; empty bins are absent.
pub fn binned_detection(detections: &[SpinDetection], bins: &MagnitudeBins) -> Vec<BinRate> {
    bin_rates(bins, detections.iter().map(|d| (d.magnitude_khz, d.rate)))
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..=n {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

/// `P(X >= occurrence)` for `X ~ Hypergeometric(n_sites, class_size, n_draw)`.
pub fn baseline_probability(n_sites: usize, n_draw: usize, class_size: usize, occurrence: usize) -> Result<f64> {
    if class_size == 0 || class_size > n_sites {
        return Err(Error::invalid(format!("class size must lie in [1, {n_sites}]")));
    }
    if n_draw > n_sites {
        return Err(Error::invalid("cannot draw more sites than exist"));
    }
    if !(1..=2).contains(&occurrence) {
        return Err(Error::invalid("occurrence must be 1 or 2"));
    }
    let lf = ln_factorials(n_sites);
    let ln_choose = |n: usize, k: usize| lf[n] - lf[k] - lf[n - k];
    let pmf = |x: usize| {
        if x > class_size || x > n_draw || n_draw - x > n_sites - class_size {
            0.0
        } else {
            (ln_choose(class_size, x) + ln_choose(n_sites - class_size, n_draw - x) - ln_choose(n_sites, n_draw)).exp()
        }
    };
    let below: f64 = (0..occurrence).map(pmf).sum();
    Ok((1.0 - below).clamp(0.0, 1.0))
}

/// Fraction of post-burn-in samples containing each site.
pub fn site_frequencies(posterior: &PosteriorEnsemble) -> BTreeMap<u32, f64> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    let mut n = 0usize;
    for s in posterior.posterior() {
        n += 1;
        for &site in &s.site_ids {
            *counts.entry(site).or_insert(0) += 1;
        }
    }
    counts.into_iter().map(|(s, c)| (s, c as f64 / n as f64)).collect()
}

/// Sites whose occupancy frequency exceeds `threshold`. A threshold of
/// zero keeps every site seen at least once.
pub fn plausible_sites(posterior: &PosteriorEnsemble, threshold: f64) -> Result<Vec<u32>> {
    require_samples(posterior)?;
    Ok(site_frequencies(posterior)
        .into_iter()
        .filter(|&(_, f)| f > threshold)
        .map(|(s, _)| s)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins on `[lo, hi]`; the last bin is closed.
    pub fn new(values: impl IntoIterator<Item = f64>, lo: f64, hi: f64, n_bins: usize) -> Result<Self> {
        if n_bins == 0 || !(hi > lo) {
            return Err(Error::invalid("histogram needs at least one bin over a non-empty range"));
        }
        let width = (hi - lo) / n_bins as f64;
        let edges = (0..=n_bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0usize; n_bins];
        for v in values {
            if v >= lo && v <= hi {
                let i = (((v - lo) / width) as usize).min(n_bins - 1);
                counts[i] += 1;
            }
        }
        Ok(Self { edges, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Centre of the fullest bin, ties towards lower values.
    pub fn mode(&self) -> Option<f64> {
        let (i, &c) = self.counts.iter().enumerate().rev().max_by_key(|&(_, c)| c)?;
        (c > 0).then(|| 0.5 * (self.edges[i] + self.edges[i + 1]))
    }

    /// Shannon entropy of the bin frequencies, nats.
    pub fn entropy(&self) -> f64 {
        let total = self.total() as f64;
        if total == 0.0 {
            return 0.0;
        }
        -self
            .counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / total;
                p * p.ln()
            })
            .sum::<f64>()
    }
}

pub fn lambda_histogram(posterior: &PosteriorEnsemble, n_bins: usize) -> Result<Histogram> {
    Histogram::new(posterior.posterior().map(|s| s.lambda), 0.0, 1.0, n_bins)
}

/// Posterior occupancy of one symmetry class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperfineRow {
    pub symmetry_class: usize,
    pub a_par_khz: f64,
    pub a_perp_khz: f64,
    pub magnitude_khz: f64,
    pub class_size: usize,
    /// Fraction of samples holding at least one spin of the class.
    pub frequency: f64,
    /// Mean number of spins of the class per sample.
    pub mean_count: f64,
}

/// Every class that appears in the posterior, most frequent first.
pub fn hyperfine_posterior(posterior: &PosteriorEnsemble, catalog: &LatticeCatalog) -> Result<Vec<HyperfineRow>> {
    require_samples(posterior)?;
    let mut present: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut n = 0usize;
    let mut first_site: BTreeMap<usize, usize> = BTreeMap::new();
    for s in posterior.posterior() {
        n += 1;
        for (class, c) in class_counts(catalog, &s.site_ids) {
            let e = present.entry(class).or_insert((0, 0));
            e.0 += 1;
            e.1 += c;
        }
        for &site in &s.site_ids {
            first_site.entry(catalog.class_of(site as usize)).or_insert(site as usize);
        }
    }
    let mut rows: Vec<HyperfineRow> = present
        .into_iter()
        .map(|(class, (with, total))| {
            let site = catalog.site(first_site[&class]);
            HyperfineRow {
                symmetry_class: class,
                a_par_khz: site.a_par,
                a_perp_khz: site.a_perp,
                magnitude_khz: site.magnitude(),
                class_size: catalog.class_size(class),
                frequency: with as f64 / n as f64,
                mean_count: total as f64 / n as f64,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.frequency.total_cmp(&a.frequency).then(a.symmetry_class.cmp(&b.symmetry_class)));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportOptions {
    pub bins: MagnitudeBins,
    pub lambda_bins: usize,
    pub plausible_threshold: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            bins: MagnitudeBins::default(),
            lambda_bins: 50,
            plausible_threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub n_samples: usize,
    pub k_histogram: BTreeMap<usize, usize>,
    pub k_mode: usize,
    pub k_true: Option<usize>,
    pub discrepancy: Option<usize>,
    pub lambda_histogram: Histogram,
    pub lambda_mode: Option<f64>,
    pub magnitude_bins: MagnitudeBins,
    pub detection: Vec<SpinDetection>,
    /// Rate of the first truth copy of each class.
    pub detection_by_class: BTreeMap<usize, f64>,
    pub detection_by_bin: Vec<BinRate>,
    pub false_positive: Vec<BinRate>,
    pub modal_configuration: Vec<u32>,
    pub plausible_threshold: f64,
    pub plausible_sites: usize,
    pub hyperfine: Vec<HyperfineRow>,
}

impl RecoveryReport {
    pub fn build(
        posterior: &PosteriorEnsemble,
        catalog: &LatticeCatalog,
        truth: Option<&[u32]>,
        options: &ReportOptions,
    ) -> Result<Self> {
        require_samples(posterior)?;
        let k_histogram = posterior.k_histogram();
        let k_mode = histogram_mode(&k_histogram).expect("non-empty");
        let lambda_histogram = lambda_histogram(posterior, options.lambda_bins)?;
        let (detection, false_positive) = match truth {
            Some(t) => (
                detection_rate(posterior, catalog, t)?,
                false_positive_rate(posterior, catalog, t, &options.bins)?,
            ),
            None => (Vec::new(), Vec::new()),
        };
        let detection_by_class = detection
            .iter()
            .filter(|d| d.copy == 1)
            .map(|d| (d.symmetry_class, d.rate))
            .collect();
        Ok(Self {
            n_samples: posterior.len(),
            k_mode,
            k_true: truth.map(<[u32]>::len),
            discrepancy: truth.map(|t| k_mode.abs_diff(t.len())),
            lambda_mode: lambda_histogram.mode(),
            lambda_histogram,
            magnitude_bins: options.bins.clone(),
            detection_by_bin: binned_detection(&detection, &options.bins),
            detection_by_class,
            detection,
            false_positive,
            modal_configuration: modal_configuration(posterior)?,
            plausible_threshold: options.plausible_threshold,
            plausible_sites: plausible_sites(posterior, options.plausible_threshold)?.len(),
            hyperfine: hyperfine_posterior(posterior, catalog)?,
            k_histogram,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A reference spin, e.g. from a published characterisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpin {
    pub label: String,
    pub a_par_khz: f64,
    pub a_perp_khz: f64,
    #[serde(default)]
    pub detection_rate: Option<f64>,
}

pub fn read_reference<R: Read>(input: R) -> Result<Vec<ReferenceSpin>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// `sqrt((gamma B - A_par)^2 + A_perp^2)`, all in kHz.
pub fn effective_frequency(gamma_b_khz: f64, a_par: f64, a_perp: f64) -> f64 {
    (gamma_b_khz - a_par).hypot(a_perp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub a_minus_ref: f64,
    pub a_minus_rec: f64,
    pub a_par: f64,
    pub a_perp: f64,
    pub detection_rate: f64,
}

/// Matches every reference spin to the catalog class with the nearest
/// couplings and reports the class's multiplicity-aware detection rate.
pub fn compare_with_reference(
    posterior: &PosteriorEnsemble,
    catalog: &LatticeCatalog,
    reference: &[ReferenceSpin],
    gamma_b_khz: f64,
) -> Result<Vec<ComparisonRow>> {
    let nearest: Vec<u32> = reference
        .iter()
        .map(|r| {
            catalog
                .sites()
                .iter()
                .min_by(|a, b| {
                    let da = (a.a_par - r.a_par_khz).hypot(a.a_perp - r.a_perp_khz);
                    let db = (b.a_par - r.a_par_khz).hypot(b.a_perp - r.a_perp_khz);
                    da.total_cmp(&db)
                })
                .map(|s| s.site_id as u32)
                .expect("catalog is never empty")
        })
        .collect();
    let detections = detection_rate(posterior, catalog, &nearest)?;
    Ok(reference
        .iter()
        .zip(&detections)
        .map(|(r, d)| {
            let site = catalog.site(d.site_id as usize);
            ComparisonRow {
                label: r.label.clone(),
                a_minus_ref: effective_frequency(gamma_b_khz, r.a_par_khz, r.a_perp_khz),
                a_minus_rec: effective_frequency(gamma_b_khz, site.a_par, site.a_perp),
                a_par: site.a_par,
                a_perp: site.a_perp,
                detection_rate: d.rate,
            }
        })
        .collect())
}

pub fn write_comparison<W: Write>(out: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Occupancy of a single sample by class, useful for ad-hoc summaries.
pub fn sample_classes(catalog: &LatticeCatalog, sample: &Sample) -> BTreeMap<usize, usize> {
    class_counts(catalog, &sample.site_ids).into_iter().collect()
}
