//! Tables derived from fitted models: sparsity reports, histograms of E[α],
//! and coefficient trajectories.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::data::CoefficientSheet;
use crate::error::{Error, Result};

/// Sparsity threshold used when none is given.
pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub epsilon: f64,
    pub active: Vec<usize>,
    pub pruned: Vec<usize>,
    pub pruned_fraction: f64,
}

/// Splits features into pruned (max over words and time of |β| below
/// `epsilon`) and active.
pub fn sparsity_report(beta: &CoefficientSheet, epsilon: f64) -> Result<SparsityReport> {
    if !(epsilon > 0.0) {
        return Err(Error::config(format!("epsilon must be positive, got {epsilon}")));
    }
    let (mut active, mut pruned) = (Vec::new(), Vec::new());
    for (i, m) in beta.group_max_abs().into_iter().enumerate() {
        if m < epsilon {
            pruned.push(i);
        } else {
            active.push(i);
        }
    }
    let pruned_fraction = if beta.features == 0 { 0.0 } else { pruned.len() as f64 / beta.features as f64 };
    Ok(SparsityReport { epsilon, active, pruned, pruned_fraction })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaHistogram {
    /// `bins + 1` edges from −C to 0.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width histogram of E[α] values over (−C, 0].
pub fn alpha_histogram(alphas: &[f64], bins: usize, c: f64) -> Result<AlphaHistogram> {
    if bins == 0 {
        return Err(Error::config("histogram needs at least one bin"));
    }
    if !(c > 0.0 && c < 0.5) {
        return Err(Error::config(format!("truncation must lie in (0, 0.5), got {c}")));
    }
    let width = c / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|k| -c + k as f64 * width).collect();
    edges[bins] = 0.0;
    let mut counts = vec![0; bins];
    for &a in alphas {
        if !(a > -c && a <= 0.0) {
            return Err(Error::domain(format!("E[alpha] {a} outside (-{c}, 0]")));
        }
        let k = (((a + c) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(AlphaHistogram { edges, counts })
}

pub fn write_histogram_tsv<W: Write>(h: &AlphaHistogram, mut w: W) -> Result<()> {
    writeln!(w, "lower\tupper\tcount")?;
    for (k, count) in h.counts.iter().enumerate() {
        writeln!(w, "{}\t{}\t{}", h.edges[k], h.edges[k + 1], count)?;
    }
    Ok(())
}

/// Which features to export.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    All,
    Indices(Vec<usize>),
    /// Names matched by a glob with `*` and `?`.
    Pattern(String),
}

fn glob_match(pattern: &[u8], text: &[u8]) -> bool {
    let (mut p, mut t) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while t < text.len() {
        if p < pattern.len() && (pattern[p] == b'?' || pattern[p] == text[t]) {
            p += 1;
            t += 1;
        } else if p < pattern.len() && pattern[p] == b'*' {
            star = Some((p, t));
            p += 1;
        } else if let Some((sp, st)) = star {
            p = sp + 1;
            t = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    pattern[p..].iter().all(|&c| c == b'*')
}

/// Resolves a selection to sorted feature indices.
pub fn select_features(sel: &Selection, features: usize, names: Option<&[String]>) -> Result<Vec<usize>> {
    match sel {
        Selection::All => Ok((0..features).collect()),
        Selection::Indices(idx) => {
            if let Some(&bad) = idx.iter().find(|&&i| i >= features) {
                return Err(Error::Lookup(format!("feature index {bad} outside 0..{features}")));
            }
            let mut v = idx.clone();
            v.sort_unstable();
            v.dedup();
            Ok(v)
        }
        Selection::Pattern(p) => {
            let default_names: Vec<String>;
            let names = match names {
                Some(n) => n,
                None => {
                    default_names = (0..features).map(|i| i.to_string()).collect();
                    &default_names
                }
            };
            let hits: Vec<usize> = names
                .iter()
                .enumerate()
                .filter(|(_, n)| glob_match(p.as_bytes(), n.as_bytes()))
                .map(|(i, _)| i)
                .collect();
            if hits.is_empty() {
                return Err(Error::Lookup(format!("no feature matches {p:?}")));
            }
            Ok(hits)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub feature: String,
    /// Word label for text models.
    pub word: Option<String>,
    /// 1-based timestep.
    pub t: usize,
    pub value: f64,
}

/// One row per (selected feature, word, timestep).
pub fn trajectory_rows(
    beta: &CoefficientSheet,
    selected: &[usize],
    names: Option<&[String]>,
    words: Option<&[String]>,
    text: bool,
) -> Vec<TrajectoryRow> {
    let mut rows = Vec::new();
    for &i in selected {
        let feature = names.and_then(|n| n.get(i).cloned()).unwrap_or_else(|| i.to_string());
        for w in 0..beta.classes {
            let word = text.then(|| words.and_then(|ws| ws.get(w).cloned()).unwrap_or_else(|| w.to_string()));
            for (t, &value) in beta.trajectory(i, w).iter().enumerate() {
                rows.push(TrajectoryRow { feature: feature.clone(), word: word.clone(), t: t + 1, value });
            }
        }
    }
    rows
}

pub fn write_trajectories_tsv<W: Write>(rows: &[TrajectoryRow], mut w: W) -> Result<()> {
    let text = rows.first().is_some_and(|r| r.word.is_some());
    if text {
        writeln!(w, "feature\tword\tt\tvalue")?;
    } else {
        writeln!(w, "feature\tt\tvalue")?;
    }
    for r in rows {
        match &r.word {
            Some(word) => writeln!(w, "{}\t{}\t{}\t{}", r.feature, word, r.t, r.value)?,
            None => writeln!(w, "{}\t{}\t{}", r.feature, r.t, r.value)?,
        }
    }
    Ok(())
}

pub fn read_trajectories_tsv<R: BufRead>(r: R) -> Result<Vec<TrajectoryRow>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or(Error::EmptyDataset)??;
    let text = header.split('\t').count() == 4;
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |m: &str| Error::Parse { line: k + 2, message: m.to_string() };
        if cols.len() != if text { 4 } else { 3 } {
            return Err(bad("wrong number of columns"));
        }
        let (word, rest) = if text { (Some(cols[1].to_string()), &cols[2..]) } else { (None, &cols[1..]) };
        rows.push(TrajectoryRow {
            feature: cols[0].to_string(),
            word,
            t: rest[0].parse().map_err(|_| bad("bad timestep"))?,
            value: rest[1].parse().map_err(|_| bad("bad value"))?,
        });
    }
    Ok(rows)
}

pub fn write_sparsity_tsv<W: Write>(rep: &SparsityReport, names: Option<&[String]>, mut w: W) -> Result<()> {
    writeln!(w, "feature\tstatus")?;
    let mut all: Vec<(usize, &str)> = rep
        .active
        .iter()
        .map(|&i| (i, "active"))
        .chain(rep.pruned.iter().map(|&i| (i, "pruned")))
        .collect();
    all.sort_unstable();
    for (i, status) in all {
        let name = names.and_then(|n| n.get(i).cloned()).unwrap_or_else(|| i.to_string());
        writeln!(w, "{name}\t{status}")?;
    }
    Ok(())
}
