//! Instance matching between a predicted and a reference structured report.
//!
//! Candidates must share the metric type. Within a type group the pairing is
//! a minimum-total-cost assignment where each pair costs the number of
//! disagreeing attributes among (side, change, tip), with side disagreements
//! breaking ties ahead of the others, and remaining ties broken by report
//! order. Instances left over from the larger group are unmatched.

use crate::schema::{ChangeLabel, LTInstance, LTType, PlacementLabel, SideLabel, StructuredLTReport};

/// One matched (predicted, reference) pair with the label snapshot the
/// pair-level metrics consume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchedPair {
    pub pred_index: usize,
    pub ref_index: usize,
    pub metric_type: LTType,
    pub pred_side: SideLabel,
    pub ref_side: SideLabel,
    pub pred_change: ChangeLabel,
    pub ref_change: ChangeLabel,
    pub pred_placement: PlacementLabel,
    pub ref_placement: PlacementLabel,
    pub tip_agrees: bool,
}

/// Outcome of matching one report pair. Every instance of either report
/// appears exactly once across `pairs`, `unmatched_pred` and `unmatched_ref`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_ref: Vec<usize>,
}

impl MatchResult {
    /// Total attribute-disagreement cost over the matched pairs.
    pub fn total_cost(&self) -> i64 {
        self.pairs
            .iter()
            .map(|p| {
                pair_cost(
                    p.pred_side != p.ref_side,
                    p.pred_change != p.ref_change,
                    !p.tip_agrees,
                )
            })
            .sum()
    }
}

/// Attribute-disagreement cost. The factor 4 makes the disagreement count
/// dominate; the extra side term prefers side-consistent pairings among
/// equal-count options.
pub(crate) fn pair_cost(side_differs: bool, change_differs: bool, tip_differs: bool) -> i64 {
    let disagreements = side_differs as i64 + change_differs as i64 + tip_differs as i64;
    4 * disagreements + side_differs as i64
}

fn instance_cost(pred: &LTInstance, reference: &LTInstance) -> i64 {
    pair_cost(
        pred.side() != reference.side(),
        pred.change() != reference.change(),
        pred.tip().as_str() != reference.tip().as_str(),
    )
}

/// Match predicted against reference instances.
pub fn match_instances(pred: &StructuredLTReport, reference: &StructuredLTReport) -> MatchResult {
    let mut result = MatchResult::default();
    for lt_type in LTType::ALL {
        let pred_idx: Vec<usize> = pred
            .instances()
            .iter()
            .enumerate()
            .filter(|(_, inst)| inst.metric_type() == lt_type)
            .map(|(i, _)| i)
            .collect();
        let ref_idx: Vec<usize> = reference
            .instances()
            .iter()
            .enumerate()
            .filter(|(_, inst)| inst.metric_type() == lt_type)
            .map(|(i, _)| i)
            .collect();
        if pred_idx.is_empty() || ref_idx.is_empty() {
            result.unmatched_pred.extend(&pred_idx);
            result.unmatched_ref.extend(&ref_idx);
            continue;
        }

        // Rows are the smaller group so every row gets assigned.
        let transposed = pred_idx.len() > ref_idx.len();
        let (rows, cols) = if transposed {
            (&ref_idx, &pred_idx)
        } else {
            (&pred_idx, &ref_idx)
        };
        // Scaled cost: real cost dominates, a row-major index term breaks
        // remaining ties deterministically by report order.
        let tie_scale: i64 = (rows.len() as i64 * cols.len() as i64 + 1).max(16);
        let cost: Vec<Vec<i64>> = rows
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                cols.iter()
                    .enumerate()
                    .map(|(j, &c)| {
                        let (p, q) = if transposed { (c, r) } else { (r, c) };
                        instance_cost(&pred.instances()[p], &reference.instances()[q]) * tie_scale
                            + (i * cols.len() + j) as i64
                    })
                    .collect()
            })
            .collect();
        let assignment = min_cost_assignment(&cost);

        let mut used_cols = vec![false; cols.len()];
        for (row, col) in assignment.iter().enumerate() {
            used_cols[*col] = true;
            let (p, r) = if transposed {
                (cols[*col], rows[row])
            } else {
                (rows[row], cols[*col])
            };
            let (pi, ri) = (&pred.instances()[p], &reference.instances()[r]);
            result.pairs.push(MatchedPair {
                pred_index: p,
                ref_index: r,
                metric_type: lt_type,
                pred_side: pi.side(),
                ref_side: ri.side(),
                pred_change: pi.change(),
                ref_change: ri.change(),
                pred_placement: pi.placement(),
                ref_placement: ri.placement(),
                tip_agrees: pi.tip().as_str() == ri.tip().as_str(),
            });
        }
        for (j, used) in used_cols.iter().enumerate() {
            if !used {
                if transposed {
                    result.unmatched_pred.push(cols[j]);
                } else {
                    result.unmatched_ref.push(cols[j]);
                }
            }
        }
    }
    result.pairs.sort_by_key(|p| (p.ref_index, p.pred_index));
    result.unmatched_pred.sort_unstable();
    result.unmatched_ref.sort_unstable();
    result
}

/// Minimum-cost assignment via shortest augmenting paths with potentials.
/// `cost` must be rectangular with rows <= cols; returns the assigned column
/// for each row.
pub(crate) fn min_cost_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "rows must not exceed columns");
    const INF: i64 = i64::MAX / 4;

    // 1-based potentials over rows and columns; way[j] remembers the column
    // preceding j on the shortest augmenting path.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; m + 1];
    let mut row_of = vec![0usize; m + 1]; // 0 = free column
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut min_v = vec![INF; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < min_v[j] {
                        min_v[j] = cur;
                        way[j] = j0;
                    }
                    if min_v[j] < delta {
                        delta = min_v[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![usize::MAX; n];
    for j in 1..=m {
        if row_of[j] != 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}
