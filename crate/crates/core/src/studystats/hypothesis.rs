//! Hypothesis tests and agreement coefficients for the reader study:
//! permutation tests, Kendall's W, chi-squared, Kruskal-Wallis and
//! Kendall's tau-b, all with mid-rank tie handling.

use rand::seq::SliceRandom;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::metrics::stream_rng;
use crate::studystats::StudyError;

/// Mid-ranks of a sample (average rank across ties), 1-based.
pub(crate) fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of tie groups in a sample.
fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        if j > i {
            groups.push(j - i + 1);
        }
        i = j + 1;
    }
    groups
}

fn chi_squared_sf(stat: f64, df: f64) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df).expect("positive degrees of freedom");
    (1.0 - dist.cdf(stat)).clamp(0.0, 1.0)
}

fn normal_sf(z: f64) -> f64 {
    let dist = Normal::new(0.0, 1.0).unwrap();
    (1.0 - dist.cdf(z)).clamp(0.0, 1.0)
}

/// Scaled two-sample statistic |sum_a * nb - sum_b * na|, a monotone
/// transform of the absolute difference in means that avoids division.
fn scaled_stat(sum_a: f64, na: usize, sum_b: f64, nb: usize) -> f64 {
    (sum_a * nb as f64 - sum_b * na as f64).abs()
}

const STAT_TOLERANCE: f64 = 1e-9;

/// Monte-Carlo permutation test for a difference in means (or proportions
/// for 0/1 data), two-sided, with add-one smoothing:
/// p = (1 + #{permutations with |stat| >= |observed|}) / (n_perm + 1).
pub fn permutation_test(
    group_a: &[f64],
    group_b: &[f64],
    n_perm: usize,
    seed: u64,
) -> Result<f64, StudyError> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(StudyError::EmptyGroup);
    }
    let (na, nb) = (group_a.len(), group_b.len());
    let observed = scaled_stat(group_a.iter().sum(), na, group_b.iter().sum(), nb);
    let pool: Vec<f64> = group_a.iter().chain(group_b).copied().collect();
    let total: f64 = pool.iter().sum();
    let mut extreme = 0usize;
    for i in 0..n_perm {
        let mut rng = stream_rng(seed, i as u64);
        let mut shuffled = pool.clone();
        shuffled.shuffle(&mut rng);
        let sum_a: f64 = shuffled[..na].iter().sum();
        if scaled_stat(sum_a, na, total - sum_a, nb) >= observed - STAT_TOLERANCE {
            extreme += 1;
        }
    }
    Ok((1 + extreme) as f64 / (n_perm + 1) as f64)
}

/// Exact permutation test enumerating every assignment of the pooled values
/// into the two group sizes. p = #{assignments with |stat| >= |observed|} /
/// C(n, na). Limited to at most one million assignments.
pub fn permutation_test_exact(group_a: &[f64], group_b: &[f64]) -> Result<f64, StudyError> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(StudyError::EmptyGroup);
    }
    let (na, nb) = (group_a.len(), group_b.len());
    let n = na + nb;
    let combinations = binomial(n, na);
    if combinations > 1_000_000 {
        return Err(StudyError::TooManyCombinations(combinations));
    }
    let observed = scaled_stat(group_a.iter().sum(), na, group_b.iter().sum(), nb);
    let pool: Vec<f64> = group_a.iter().chain(group_b).copied().collect();
    let total: f64 = pool.iter().sum();

    // Lexicographic enumeration of index combinations.
    let mut combo: Vec<usize> = (0..na).collect();
    let mut extreme = 0u64;
    loop {
        let sum_a: f64 = combo.iter().map(|&i| pool[i]).sum();
        if scaled_stat(sum_a, na, total - sum_a, nb) >= observed - STAT_TOLERANCE {
            extreme += 1;
        }
        // Advance to the next combination.
        let mut k = na;
        loop {
            if k == 0 {
                return Ok(extreme as f64 / combinations as f64);
            }
            k -= 1;
            if combo[k] != k + n - na {
                break;
            }
        }
        combo[k] += 1;
        for j in k + 1..na {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result * (n - i) as u128 / (i + 1) as u128;
    }
    result
}

/// A complete raters-by-items grid of ordinal scores.
#[derive(Debug, Clone)]
pub struct RatingMatrix {
    rows: Vec<Vec<f64>>,
}

impl RatingMatrix {
    /// Rows are raters, columns items; every rater must score every item.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, StudyError> {
        if rows.len() < 2 {
            return Err(StudyError::IncompleteMatrix(
                "need at least two raters".to_string(),
            ));
        }
        let n_items = rows[0].len();
        if n_items < 2 {
            return Err(StudyError::IncompleteMatrix(
                "need at least two items".to_string(),
            ));
        }
        if rows.iter().any(|r| r.len() != n_items) {
            return Err(StudyError::IncompleteMatrix(
                "raters scored different item counts".to_string(),
            ));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(StudyError::IncompleteMatrix(
                "scores must be finite".to_string(),
            ));
        }
        Ok(Self { rows })
    }

    pub fn n_raters(&self) -> usize {
        self.rows.len()
    }

    pub fn n_items(&self) -> usize {
        self.rows[0].len()
    }
}

/// Tie-corrected Kendall coefficient of concordance:
/// W = 12 S / (m^2 (n^3 - n) - m sum_j T_j) with mid-ranks per rater and
/// T_j = sum over that rater's tie groups of (t^3 - t).
pub fn kendalls_w(matrix: &RatingMatrix) -> Result<f64, StudyError> {
    let m = matrix.n_raters() as f64;
    let n = matrix.n_items() as f64;
    let ranks: Vec<Vec<f64>> = matrix.rows.iter().map(|r| midranks(r)).collect();
    let mut item_sums = vec![0.0; matrix.n_items()];
    for rater in &ranks {
        for (i, rank) in rater.iter().enumerate() {
            item_sums[i] += rank;
        }
    }
    let mean = item_sums.iter().sum::<f64>() / n;
    let s: f64 = item_sums.iter().map(|r| (r - mean).powi(2)).sum();
    let tie_term: f64 = matrix
        .rows
        .iter()
        .map(|r| {
            tie_groups(r)
                .iter()
                .map(|&t| (t * t * t - t) as f64)
                .sum::<f64>()
        })
        .sum();
    let denom = m * m * (n * n * n - n) - m * tie_term;
    if denom <= 0.0 {
        return Err(StudyError::DegenerateMatrix);
    }
    Ok(12.0 * s / denom)
}

/// Pearson chi-squared test of independence on an r-by-k count table.
pub fn chi_squared(table: &[Vec<f64>]) -> Result<(f64, f64), StudyError> {
    if table.len() < 2 || table.iter().any(|row| row.len() < 2) {
        return Err(StudyError::DegenerateTable(
            "need at least a 2x2 table".to_string(),
        ));
    }
    let cols = table[0].len();
    if table.iter().any(|row| row.len() != cols) {
        return Err(StudyError::DegenerateTable("ragged table".to_string()));
    }
    if table.iter().flatten().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(StudyError::DegenerateTable(
            "counts must be finite and non-negative".to_string(),
        ));
    }
    let row_totals: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_totals: Vec<f64> = (0..cols)
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let grand: f64 = row_totals.iter().sum();
    if row_totals.iter().chain(&col_totals).any(|t| *t <= 0.0) {
        return Err(StudyError::DegenerateTable(
            "zero marginal total".to_string(),
        ));
    }
    let mut stat = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &observed) in row.iter().enumerate() {
            let expected = row_totals[i] * col_totals[j] / grand;
            stat += (observed - expected).powi(2) / expected;
        }
    }
    let df = (table.len() - 1) as f64 * (cols - 1) as f64;
    Ok((stat, chi_squared_sf(stat, df)))
}

/// Tie-corrected Kruskal-Wallis H test with the chi-squared approximation.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<(f64, f64), StudyError> {
    if groups.len() < 2 {
        return Err(StudyError::TooFewGroups);
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(StudyError::EmptyGroup);
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let ranks = midranks(&pooled);
    let mut h = 0.0;
    let mut offset = 0;
    for group in groups {
        let r: f64 = ranks[offset..offset + group.len()].iter().sum();
        h += r * r / group.len() as f64;
        offset += group.len();
    }
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);
    let tie_sum: f64 = tie_groups(&pooled)
        .iter()
        .map(|&t| (t * t * t - t) as f64)
        .sum();
    let correction = 1.0 - tie_sum / (n * n * n - n);
    if correction <= 0.0 {
        return Err(StudyError::DegenerateTable(
            "all pooled values tied".to_string(),
        ));
    }
    let h = h / correction;
    let df = (groups.len() - 1) as f64;
    Ok((h, chi_squared_sf(h, df)))
}

/// Kendall's tau-b with tie correction and the normal-approximation
/// two-sided p-value.
pub fn kendalls_tau(x: &[f64], y: &[f64]) -> Result<(f64, f64), StudyError> {
    if x.len() != y.len() {
        return Err(StudyError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(StudyError::InsufficientLength);
    }
    let mut concordant_minus_discordant: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[i] - x[j]).partial_cmp(&0.0).unwrap();
            let dy = (y[i] - y[j]).partial_cmp(&0.0).unwrap();
            use std::cmp::Ordering::*;
            match (dx, dy) {
                (Equal, _) | (_, Equal) => {}
                (a, b) if a == b => concordant_minus_discordant += 1,
                _ => concordant_minus_discordant -= 1,
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    let tx = tie_groups(x);
    let ty = tie_groups(y);
    let n1: f64 = tx.iter().map(|&t| (t * (t - 1) / 2) as f64).sum();
    let n2: f64 = ty.iter().map(|&t| (t * (t - 1) / 2) as f64).sum();
    let denom = ((n0 - n1) * (n0 - n2)).sqrt();
    if denom == 0.0 {
        return Err(StudyError::DegenerateTable(
            "a sample is entirely tied".to_string(),
        ));
    }
    let tau = concordant_minus_discordant as f64 / denom;

    // Tie-corrected variance of C - D (normal approximation).
    let nf = n as f64;
    let v0 = nf * (nf - 1.0) * (2.0 * nf + 5.0);
    let vt: f64 = tx
        .iter()
        .map(|&t| (t as f64) * (t as f64 - 1.0) * (2.0 * t as f64 + 5.0))
        .sum();
    let vu: f64 = ty
        .iter()
        .map(|&t| (t as f64) * (t as f64 - 1.0) * (2.0 * t as f64 + 5.0))
        .sum();
    let v1x: f64 = tx.iter().map(|&t| (t * (t - 1)) as f64).sum();
    let v1y: f64 = ty.iter().map(|&t| (t * (t - 1)) as f64).sum();
    let v2x: f64 = tx.iter().map(|&t| (t * (t - 1) * (t.saturating_sub(2))) as f64).sum();
    let v2y: f64 = ty.iter().map(|&t| (t * (t - 1) * (t.saturating_sub(2))) as f64).sum();
    let mut var = (v0 - vt - vu) / 18.0 + (v1x * v1y) / (2.0 * nf * (nf - 1.0));
    if n > 2 {
        var += (v2x * v2y) / (9.0 * nf * (nf - 1.0) * (nf - 2.0));
    }
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = concordant_minus_discordant as f64 / var.sqrt();
        (2.0 * normal_sf(z.abs())).min(1.0)
    };
    Ok((tau, p))
}
