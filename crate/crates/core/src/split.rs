//! DOE-aware train/val/test assignment with KS and W1 diagnostics.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groundtruth::DesignSample;

fn sorted(a: &[f64]) -> Vec<f64> {
    let mut v = a.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in sample set".into()));
    }
    Ok(())
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// One-dimensional Wasserstein-1 distance, `∫ |F_a - F_b| dx`, valid for
/// unequal sizes.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    let (a, b) = (sorted(a), sorted(b));
    let mut all: Vec<f64> = a.iter().chain(&b).copied().collect();
    all.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut w = 0.0;
    for k in 0..all.len() - 1 {
        let x = all[k];
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        w += (i as f64 / na - j as f64 / nb).abs() * (all[k + 1] - x);
    }
    Ok(w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Val, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Fractions for train, val and test.
    pub ratios: [f64; 3],
    pub ks_threshold: f64,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratios: [0.6, 0.2, 0.2],
            ks_threshold: 0.35,
            max_attempts: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostic {
    pub variable: String,
    pub a: SplitName,
    pub b: SplitName,
    pub ks: f64,
    pub w1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub id: u64,
    pub split: SplitName,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub assignment: Vec<Assignment>,
    pub diagnostics: Vec<PairDiagnostic>,
    pub max_ks: f64,
    pub ks_threshold: f64,
    pub passed: bool,
    pub attempts: usize,
    /// Variable whose ranks were dealt on the accepted attempt.
    pub primary_variable: String,
}

impl SplitReport {
    pub fn ids(&self, split: SplitName) -> Vec<u64> {
        self.assignment
            .iter()
            .filter(|a| a.split == split)
            .map(|a| a.id)
            .collect()
    }

    pub fn split_of(&self, id: u64) -> Option<SplitName> {
        self.assignment.iter().find(|a| a.id == id).map(|a| a.split)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "variable,split_a,split_b,ks,w1")?;
        for d in &self.diagnostics {
            writeln!(w, "{},{},{},{},{}", d.variable, d.a, d.b, d.ks, d.w1)?;
        }
        Ok(())
    }
}

/// Split sizes from ratios; every split gets at least one sample.
pub fn split_counts(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(*r > 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios {ratios:?} must be positive and sum to 1"
        )));
    }
    let val = ((n as f64 * ratios[1]).round() as usize).max(1);
    let test = ((n as f64 * ratios[2]).round() as usize).max(1);
    if val + test >= n {
        return Err(Error::InvalidArgument(format!("{n} samples cannot fill three splits")));
    }
    Ok([n - val - test, val, test])
}

/// Label sequence dealt along sorted ranks: each position goes to the split
/// furthest below its target share.
fn deal_pattern(counts: [usize; 3]) -> Vec<SplitName> {
    let n: usize = counts.iter().sum();
    let mut given = [0usize; 3];
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut best = 0;
        let mut best_def = f64::NEG_INFINITY;
        for s in 0..3 {
            if given[s] >= counts[s] {
                continue;
            }
            let def = counts[s] as f64 * (k + 1) as f64 / n as f64 - given[s] as f64;
            if def > best_def + 1e-12 {
                best_def = def;
                best = s;
            }
        }
        given[best] += 1;
        out.push(SplitName::ALL[best]);
    }
    out
}

/// KS and W1 for every variable and split pair.
pub fn diagnose(samples: &[DesignSample], labels: &[SplitName]) -> Result<Vec<PairDiagnostic>> {
    let Some(first) = samples.first() else {
        return Err(Error::Empty("design samples"));
    };
    let mut out = Vec::new();
    for (v, var) in first.vars.iter().enumerate() {
        let col = |s: SplitName| -> Vec<f64> {
            samples
                .iter()
                .zip(labels)
                .filter(|(_, l)| **l == s)
                .map(|(d, _)| d.vars[v].value)
                .collect()
        };
        let cols = SplitName::ALL.map(col);
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            out.push(PairDiagnostic {
                variable: var.bounds.name.clone(),
                a: SplitName::ALL[a],
                b: SplitName::ALL[b],
                ks: ks_statistic(&cols[a], &cols[b])?,
                w1: wasserstein1(&cols[a], &cols[b])?,
            });
        }
    }
    Ok(out)
}

/// `(max KS, sum KS)` over all variables and split pairs.
fn score(samples: &[DesignSample], labels: &[SplitName]) -> Result<(f64, f64)> {
    let d = diagnose(samples, labels)?;
    Ok((d.iter().map(|p| p.ks).fold(0.0, f64::max), d.iter().map(|p| p.ks).sum()))
}

/// Greedy pairwise label swaps between splits while `(max KS, sum KS)`
/// improves lexicographically. Split sizes are preserved.
fn refine(samples: &[DesignSample], labels: &mut [SplitName]) -> Result<f64> {
    let n = labels.len();
    let mut cur = score(samples, labels)?;
    loop {
        let mut improved = false;
        for i in 0..n {
            for j in i + 1..n {
                if labels[i] == labels[j] {
                    continue;
                }
                labels.swap(i, j);
                let s = score(samples, labels)?;
                if s.0 < cur.0 - 1e-12 || (s.0 <= cur.0 + 1e-12 && s.1 < cur.1 - 1e-12) {
                    cur = s;
                    improved = true;
                } else {
                    labels.swap(i, j);
                }
            }
        }
        if !improved {
            return Ok(cur.0);
        }
    }
}

/// Stratified assignment: sort by one design variable, deal ranks into the
/// splits in proportion, shuffle labels within small rank windows, refine
/// by label swaps, and keep the first attempt whose maximum KS meets the gate.
pub fn make_split(samples: &[DesignSample], cfg: &SplitConfig) -> Result<SplitReport> {
    let n = samples.len();
    let counts = split_counts(n, cfg.ratios)?;
    let nvars = samples.first().map_or(0, |s| s.vars.len());
    if nvars == 0 || samples.iter().any(|s| s.vars.len() != nvars) {
        return Err(Error::InvalidArgument(
            "samples need the same non-empty design variables".into(),
        ));
    }
    let min_ratio = cfg.ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let window = ((1.0 / min_ratio).round() as usize).max(1);
    let pattern = deal_pattern(counts);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(f64, Vec<SplitName>, usize)> = None;
    let mut attempts = 0;
    while attempts < cfg.max_attempts.max(1) {
        attempts += 1;
        let primary = rng.gen_range(0..nvars);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order.sort_by(|&a, &b| {
            samples[a].vars[primary]
                .value
                .total_cmp(&samples[b].vars[primary].value)
        });
        let mut dealt = pattern.clone();
        if rng.gen::<bool>() {
            dealt.reverse();
        }
        for chunk in dealt.chunks_mut(window) {
            chunk.shuffle(&mut rng);
        }
        let mut labels = vec![SplitName::Train; n];
        for (rank, &idx) in order.iter().enumerate() {
            labels[idx] = dealt[rank];
        }
        let mut max_ks = score(samples, &labels)?.0;
        if max_ks > cfg.ks_threshold {
            max_ks = refine(samples, &mut labels)?;
        }
        if best.as_ref().is_none_or(|b| max_ks < b.0) {
            best = Some((max_ks, labels, primary));
        }
        if max_ks <= cfg.ks_threshold {
            break;
        }
    }
    let (max_ks, labels, primary) = best.expect("at least one attempt");
    let passed = max_ks <= cfg.ks_threshold;
    let report = SplitReport {
        assignment: samples
            .iter()
            .zip(&labels)
            .map(|(s, l)| Assignment { id: s.id, split: *l })
            .collect(),
        diagnostics: diagnose(samples, &labels)?,
        max_ks,
        ks_threshold: cfg.ks_threshold,
        passed,
        attempts,
        primary_variable: samples[0].vars[primary].bounds.name.clone(),
    };
    if passed {
        Ok(report)
    } else {
        Err(Error::SplitGate {
            attempts,
            best_ks: max_ks,
            threshold: cfg.ks_threshold,
            best: Box::new(report),
        })
    }
}
