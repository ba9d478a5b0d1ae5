//! Label vectors, MAP extraction, adjusted Rand index and confusion tables.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// One-based labels with an optional mask; `missing[i] = true` marks an
/// unlabeled position that is skipped by [`ari`] and [`confusion`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    pub labels: Vec<usize>,
    pub missing: Option<Vec<bool>>,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if let Some(i) = labels.iter().position(|l| *l == 0) {
            return Err(Error::invalid(format!("label at position {} is 0; labels are one-based", i + 1)));
        }
        Ok(Self { labels, missing: None })
    }

    /// Builds a vector from optional labels; `None` positions are masked.
    pub fn from_options(labels: &[Option<usize>]) -> Result<Self> {
        let missing: Vec<bool> = labels.iter().map(Option::is_none).collect();
        let mut v = Self::new(labels.iter().map(|l| l.unwrap_or(1)).collect())?;
        if missing.iter().any(|m| *m) {
            v.missing = Some(missing);
        }
        Ok(v)
    }

    /// One-based labels from zero-based component indices.
    pub fn from_zero_based(labels: &[usize]) -> Self {
        Self {
            labels: labels.iter().map(|l| l + 1).collect(),
            missing: None,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_missing(&self, i: usize) -> bool {
        self.missing.as_ref().is_some_and(|m| m[i])
    }
}

/// Row-wise arg max of a responsibility matrix, ties to the lowest index.
pub fn map_labels(zhat: &DMatrix<f64>) -> LabelVector {
    LabelVector::from_zero_based(&crate::inference::map_rows(zhat))
}

/// Positions kept by both vectors.
fn paired(a: &LabelVector, b: &LabelVector) -> Result<Vec<(usize, usize)>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok((0..a.len())
        .filter(|i| !a.is_missing(*i) && !b.is_missing(*i))
        .map(|i| (a.labels[i], b.labels[i]))
        .collect())
}

fn choose2(n: f64) -> f64 {
    n * (n - 1.0) / 2.0
}

/// Pair-counting adjusted Rand index over positions labeled in both vectors.
/// Two single-cluster partitions (or fewer than two positions) give 1.
pub fn ari(a: &LabelVector, b: &LabelVector) -> Result<f64> {
    let pairs = paired(a, b)?;
    let n = pairs.len() as f64;
    let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, f64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, f64> = BTreeMap::new();
    for (x, y) in &pairs {
        *table.entry((*x, *y)).or_default() += 1.0;
        *rows.entry(*x).or_default() += 1.0;
        *cols.entry(*y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|v| choose2(*v)).sum();
    let sa: f64 = rows.values().map(|v| choose2(*v)).sum();
    let sb: f64 = cols.values().map(|v| choose2(*v)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        // both partitions trivial in the same way
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Confusion {
    /// Distinct labels of the first vector, in increasing order (table rows).
    pub row_labels: Vec<usize>,
    /// Distinct labels of the second vector (table columns).
    pub col_labels: Vec<usize>,
    pub counts: DMatrix<usize>,
    /// Fraction of positions outside the matched cells.
    pub misclassification: f64,
    /// `(row label, column label)` pairs chosen by the matching.
    pub matching: Vec<(usize, usize)>,
}

/// Contingency table and the misclassification rate under a one-to-one
/// matching built greedily: repeatedly take the largest remaining cell whose
/// row and column are both unused (ties to the lowest row, then column).
pub fn confusion(a: &LabelVector, b: &LabelVector) -> Result<Confusion> {
    let pairs = paired(a, b)?;
    let mut row_labels: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let mut col_labels: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    row_labels.sort_unstable();
    row_labels.dedup();
    col_labels.sort_unstable();
    col_labels.dedup();
    let mut counts = DMatrix::zeros(row_labels.len(), col_labels.len());
    for (x, y) in &pairs {
        let r = row_labels.binary_search(x).unwrap();
        let c = col_labels.binary_search(y).unwrap();
        counts[(r, c)] += 1;
    }
    let mut used_r = vec![false; row_labels.len()];
    let mut used_c = vec![false; col_labels.len()];
    let mut matching = Vec::new();
    let mut matched = 0;
    loop {
        let mut best: Option<(usize, usize, usize)> = None;
        for r in 0..row_labels.len() {
            for c in 0..col_labels.len() {
                if used_r[r] || used_c[c] {
                    continue;
                }
                if best.is_none_or(|(_, _, v)| counts[(r, c)] > v) {
                    best = Some((r, c, counts[(r, c)]));
                }
            }
        }
        match best {
            Some((r, c, v)) => {
                used_r[r] = true;
                used_c[c] = true;
                matched += v;
                matching.push((row_labels[r], col_labels[c]));
            }
            None => break,
        }
    }
    let n = pairs.len();
    Ok(Confusion {
        misclassification: if n == 0 { 0.0 } else { 1.0 - matched as f64 / n as f64 },
        row_labels,
        col_labels,
        counts,
        matching,
    })
}
