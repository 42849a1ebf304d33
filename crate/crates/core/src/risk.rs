//! Held-out misclassification risk of a pair classifier for every pair of
//! candidates.
//!
//! For candidates `i` and `j` the risk is the error rate at threshold 0.5 on
//! a balanced pool: half cross pairs (one endpoint from each, label
//! "different") and half same pairs, split equally between pairs inside `i`
//! and pairs inside `j`. Every available pair is used and weighted so the
//! three groups contribute 1/2, 1/4 and 1/4:
//!
//! `risk(i, j) = cross_err(i, j) / 2 + same_err(i) / 4 + same_err(j) / 4`.
//!
//! A probability of exactly 0.5 predicts "different", so a constant 0.5
//! classifier scores exactly 0.5 on every cell.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::nn::{MlpParams, NnError};

#[derive(Debug, thiserror::Error)]
pub enum RiskError {
    #[error("cell ({i}, {j}) has {cross} cross and {same} same pairs; need {needed} of each")]
    InsufficientPairs {
        i: usize,
        j: usize,
        cross: usize,
        same: usize,
        needed: usize,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Anything that scores pairs of states as "same source".
pub trait PairClassifier: Sync {
    type Embedded: Send + Sync;

    fn embed(&self, points: ArrayView2<f64>) -> Result<Self::Embedded, NnError>;

    /// `out[r][c]` is the same-source probability of `(a[r], b[c])`.
    fn cross_probabilities(&self, a: &Self::Embedded, b: &Self::Embedded) -> Result<Array2<f64>, NnError>;
}

impl PairClassifier for MlpParams {
    type Embedded = Array2<f64>;

    fn embed(&self, points: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        MlpParams::embed(self, points)
    }

    fn cross_probabilities(&self, a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        let (na, nb, e) = (a.nrows(), b.nrows(), a.ncols());
        let mut diff = Array2::zeros((na * nb, e));
        for r in 0..na {
            for c in 0..nb {
                let mut row = diff.row_mut(r * nb + c);
                for k in 0..e {
                    row[k] = (a[[r, k]] - b[[c, k]]).abs();
                }
            }
        }
        let probs = self.head_probabilities(diff)?;
        Ok(probs.into_shape_with_order((na, nb)).expect("na x nb"))
    }
}

/// Symmetric `K x K` risk estimates; the diagonal is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskMatrix {
    size: usize,
    values: Vec<f64>,
}

impl RiskMatrix {
    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = vec![f64::NAN; size * size];
        for i in 0..size {
            for j in i + 1..size {
                let v = f(i, j);
                values[i * size + j] = v;
                values[j * size + i] = v;
            }
        }
        Self { size, values }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Risk of cell `(i, j)`; `None` on the diagonal.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        (i != j).then(|| self.values[i * self.size + j])
    }

    /// Off-diagonal cells `(i, j, risk)` with `i < j`.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.size).flat_map(move |i| (i + 1..self.size).map(move |j| (i, j, self.values[i * self.size + j])))
    }

    pub fn rows(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.size)
            .map(|i| (0..self.size).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

impl Serialize for RiskMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.size))?;
        for row in self.rows() {
            seq.serialize_element(&row)?;
        }
        seq.end()
    }
}

/// Fraction of within-group pairs predicted "different".
fn same_error<C: PairClassifier>(clf: &C, emb: &C::Embedded, n: usize) -> Result<f64, NnError> {
    if n < 2 {
        return Ok(0.0);
    }
    let p = clf.cross_probabilities(emb, emb)?;
    let mut wrong = 0usize;
    for r in 0..n {
        for c in r + 1..n {
            wrong += usize::from(p[[r, c]] <= 0.5);
        }
    }
    Ok(wrong as f64 / (n * (n - 1) / 2) as f64)
}

/// Balanced-pool risk for every pair of groups of held-out endpoints.
///
/// A cell needs at least `min_pairs / 2` cross pairs and `min_pairs / 2`
/// same pairs.
pub fn estimate_pair_risk<C: PairClassifier>(clf: &C, groups: &[Array2<f64>], min_pairs: usize) -> Result<RiskMatrix, RiskError> {
    let k = groups.len();
    let needed = min_pairs.div_ceil(2);
    let sizes: Vec<usize> = groups.iter().map(|g| g.nrows()).collect();
    let within = |n: usize| n * n.saturating_sub(1) / 2;
    for i in 0..k {
        for j in i + 1..k {
            let cross = sizes[i] * sizes[j];
            let same = within(sizes[i]) + within(sizes[j]);
            if cross < needed || same < needed {
                return Err(RiskError::InsufficientPairs {
                    i,
                    j,
                    cross,
                    same,
                    needed,
                });
            }
        }
    }
    let embedded: Vec<C::Embedded> = groups
        .par_iter()
        .map(|g| clf.embed(g.view()))
        .collect::<Result<_, _>>()?;
    let same_err: Vec<f64> = (0..k)
        .into_par_iter()
        .map(|i| same_error(clf, &embedded[i], sizes[i]))
        .collect::<Result<_, _>>()?;
    let cells: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let cross_err: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let p = clf.cross_probabilities(&embedded[i], &embedded[j])?;
            let wrong = p.iter().filter(|&&v| v > 0.5).count();
            Ok(wrong as f64 / p.len() as f64)
        })
        .collect::<Result<_, NnError>>()?;
    let mut lookup = vec![0.0; k * k];
    for (&(i, j), e) in cells.iter().zip(&cross_err) {
        lookup[i * k + j] = *e;
    }
    Ok(RiskMatrix::from_fn(k, |i, j| {
        0.5 * lookup[i * k + j] + 0.25 * (same_err[i] + same_err[j])
    }))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::process::rng_from_seed;
    use rand::Rng;

    /// Always answers `p`.
    pub(crate) struct Constant(pub f64);

    impl PairClassifier for Constant {
        type Embedded = usize;

        fn embed(&self, points: ArrayView2<f64>) -> Result<usize, NnError> {
            Ok(points.nrows())
        }

        fn cross_probabilities(&self, a: &usize, b: &usize) -> Result<Array2<f64>, NnError> {
            Ok(Array2::from_elem((*a, *b), self.0))
        }
    }

    /// Says "same" iff both points have the same sign of the first
    /// coordinate.
    struct SignOracle;

    impl PairClassifier for SignOracle {
        type Embedded = Vec<bool>;

        fn embed(&self, points: ArrayView2<f64>) -> Result<Vec<bool>, NnError> {
            Ok(points.rows().into_iter().map(|r| r[0] > 0.0).collect())
        }

        fn cross_probabilities(&self, a: &Vec<bool>, b: &Vec<bool>) -> Result<Array2<f64>, NnError> {
            Ok(Array2::from_shape_fn((a.len(), b.len()), |(r, c)| if a[r] == b[c] { 0.9 } else { 0.1 }))
        }
    }

    fn group(n: usize, centre: f64, seed: u64) -> Array2<f64> {
        let mut rng = rng_from_seed(seed);
        Array2::from_shape_fn((n, 2), |(_, c)| if c == 0 { centre + rng.random_range(-0.5..0.5) } else { 0.0 })
    }

    #[test]
    fn constant_half_scores_exactly_half() {
        let groups = vec![group(20, 1.0, 0), group(15, -1.0, 1), group(17, 3.0, 2)];
        let r = estimate_pair_risk(&Constant(0.5), &groups, 200).unwrap();
        for (_, _, v) in r.cells() {
            assert_eq!(v, 0.5);
        }
        assert_eq!(r.get(1, 1), None);
    }

    #[test]
    fn perfect_separation_scores_zero() {
        let groups = vec![group(20, 2.0, 0), group(20, -2.0, 1)];
        let r = estimate_pair_risk(&SignOracle, &groups, 200).unwrap();
        assert_eq!(r.get(0, 1), Some(0.0));
        // Same-side groups are indistinguishable to the oracle: every cross
        // pair is called "same".
        let groups = vec![group(20, 2.0, 0), group(20, 2.0, 1)];
        let r = estimate_pair_risk(&SignOracle, &groups, 200).unwrap();
        assert_eq!(r.get(0, 1), Some(0.5));
    }

    #[test]
    fn symmetric_under_group_swap() {
        let mut p = MlpParams::init(2, &crate::nn::tests::small_arch(), 3).unwrap();
        p.values.iter_mut().for_each(|v| *v *= 1.3);
        let groups = vec![group(20, 0.3, 0), group(18, -0.2, 1)];
        let swapped = vec![groups[1].clone(), groups[0].clone()];
        let a = estimate_pair_risk(&p, &groups, 200).unwrap();
        let b = estimate_pair_risk(&p, &swapped, 200).unwrap();
        assert_eq!(a.get(0, 1), b.get(0, 1));
        assert_eq!(a.get(0, 1), a.get(1, 0));
    }

    #[test]
    fn insufficient_pairs_name_the_cell() {
        let groups = vec![group(20, 1.0, 0), group(20, 1.0, 1), group(4, 1.0, 2)];
        match estimate_pair_risk(&Constant(0.5), &groups, 200) {
            Err(RiskError::InsufficientPairs { i: 0, j: 2, cross: 80, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_group_is_an_empty_matrix() {
        let r = estimate_pair_risk(&Constant(0.5), &[group(3, 0.0, 0)], 200).unwrap();
        assert_eq!(r.size(), 1);
        assert_eq!(r.cells().count(), 0);
        assert_eq!(serde_json::to_string(&r).unwrap(), "[[null]]");
    }
}
