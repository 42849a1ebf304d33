//! Partition agreement scores: adjusted Rand index and normalized mutual
//! information.

use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("label vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("label vectors are empty")]
    Empty,
}

struct Contingency {
    n: u64,
    cells: HashMap<(usize, usize), u64>,
    rows: HashMap<usize, u64>,
    cols: HashMap<usize, u64>,
}

fn contingency(a: &[usize], b: &[usize]) -> Result<Contingency, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut t = Contingency {
        n: a.len() as u64,
        cells: HashMap::new(),
        rows: HashMap::new(),
        cols: HashMap::new(),
    };
    for (&x, &y) in a.iter().zip(b) {
        *t.cells.entry((x, y)).or_default() += 1;
        *t.rows.entry(x).or_default() += 1;
        *t.cols.entry(y).or_default() += 1;
    }
    Ok(t)
}

fn pairs(k: u64) -> i128 {
    let k = k as i128;
    k * (k - 1) / 2
}

/// Adjusted Rand index (Hubert-Arabie), evaluated in exact integer
/// arithmetic. Identical trivial partitions (both one cluster, or both all
/// singletons) score 1; a single-cluster prediction against a non-trivial
/// truth scores 0.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64, MetricError> {
    let t = contingency(a, b)?;
    let total = pairs(t.n);
    let sum_cells: i128 = t.cells.values().map(|&c| pairs(c)).sum();
    let sum_a: i128 = t.rows.values().map(|&c| pairs(c)).sum();
    let sum_b: i128 = t.cols.values().map(|&c| pairs(c)).sum();
    // Both numerator and denominator scaled by 2 * C(N, 2).
    let num = 2 * (total * sum_cells - sum_a * sum_b);
    let den = total * (sum_a + sum_b) - 2 * sum_a * sum_b;
    if den == 0 {
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}

// Sorting before summation makes the result independent of label names and
// argument order.
fn ordered_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

fn entropy(counts: &HashMap<usize, u64>, n: u64) -> f64 {
    let nf = n as f64;
    ordered_sum(
        counts
            .values()
            .map(|&c| (c as f64 / nf) * (nf / c as f64).ln())
            .collect(),
    )
}

/// Normalized mutual information `I(a; b) / ((H(a) + H(b)) / 2)` in nats.
/// Two constant vectors score 1; a constant against a non-constant vector
/// scores 0.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64, MetricError> {
    let t = contingency(a, b)?;
    let ha = entropy(&t.rows, t.n);
    let hb = entropy(&t.cols, t.n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    let nf = t.n as f64;
    let terms = t
        .cells
        .iter()
        .map(|(&(x, y), &c)| {
            let ratio = (t.n * c) as f64 / (t.rows[&x] * t.cols[&y]) as f64;
            (c as f64 / nf) * ratio.ln()
        })
        .collect();
    let mi = ordered_sum(terms);
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}
