//! Scalarization arithmetic, regret, crowding distance and the policy-set
//! bookkeeping used by the multi-network agent.
//!
//! Policy sets are plain slices ordered oldest first; recency matters for
//! tie-breaking, so callers must append new entries at the end.

use serde::{Deserialize, Serialize};

use crate::error::{MorlError, Result};

/// Per-objective discounted return of one episode or trajectory.
pub type ReturnVector = Vec<f64>;
/// Immediate per-objective reward.
pub type RewardVector = Vec<f64>;
/// Expected return of a policy.
pub type ValueVector = Vec<f64>;

const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A point on the probability simplex: the active linear scalarization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Validates that `components` are finite, non-negative and sum to one.
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(MorlError::InvalidWeight("no components".into()));
        }
        if let Some(c) = components.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(MorlError::InvalidWeight(format!("component {c} is negative or non-finite")));
        }
        let sum: f64 = components.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(MorlError::InvalidWeight(format!("components sum to {sum}, not 1")));
        }
        Ok(WeightVector(components))
    }

    /// Divides by the component sum. Fails on negative entries or a zero sum.
    pub fn normalized(components: Vec<f64>) -> Result<Self> {
        if let Some(c) = components.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(MorlError::InvalidWeight(format!("component {c} is negative or non-finite")));
        }
        let sum: f64 = components.iter().sum();
        if sum <= 0.0 {
            return Err(MorlError::InvalidWeight("components sum to zero".into()));
        }
        Ok(WeightVector(components.into_iter().map(|c| c / sum).collect()))
    }

    /// Unit weight on objective `index`.
    pub fn basis(len: usize, index: usize) -> Self {
        assert!(index < len, "basis index {index} out of range for {len} objectives");
        let mut c = vec![0.0; len];
        c[index] = 1.0;
        WeightVector(c)
    }

    pub fn uniform(len: usize) -> Self {
        assert!(len > 0);
        WeightVector(vec![1.0 / len as f64; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for WeightVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = MorlError;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        WeightVector::new(value)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

impl std::fmt::Display for WeightVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c:.4}")?;
        }
        write!(f, ")")
    }
}

/// Anything carrying a stateless value vector.
pub trait HasValue {
    fn value(&self) -> &[f64];
}

impl HasValue for Vec<f64> {
    fn value(&self) -> &[f64] {
        self
    }
}

impl HasValue for &[f64] {
    fn value(&self) -> &[f64] {
        self
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear scalarization `v · w`.
pub fn scalarize(v: &[f64], w: &WeightVector) -> Result<f64> {
    MorlError::check_dim(w.len(), v.len())?;
    Ok(dot(v, w))
}

/// `v_star · w − g · w`: zero for an optimal episode.
pub fn regret(g: &[f64], w: &WeightVector, v_star: &[f64]) -> Result<f64> {
    Ok(scalarize(v_star, w)? - scalarize(g, w)?)
}

/// NSGA-II crowding distance of every signature, in input order.
///
/// Points are sorted per objective (ties by input position); the two extremes
/// of each objective get an infinite distance and interior points accumulate
/// the normalized gap between their neighbours. An objective whose values are
/// all equal adds nothing to interior points.
pub fn crowding_distance<V: AsRef<[f64]>>(signatures: &[V]) -> Vec<f64> {
    let n = signatures.len();
    if n == 0 {
        return Vec::new();
    }
    let dims = signatures[0].as_ref().len();
    debug_assert!(signatures.iter().all(|s| s.as_ref().len() == dims));
    let mut distance = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..dims {
        let coord = |i: usize| signatures[i].as_ref()[k];
        order.sort_by(|&a, &b| coord(a).total_cmp(&coord(b)).then(a.cmp(&b)));
        let lo = coord(order[0]);
        let hi = coord(order[n - 1]);
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range > 0.0 {
            for pos in 1..n.saturating_sub(1) {
                let gap = coord(order[pos + 1]) - coord(order[pos - 1]);
                distance[order[pos]] += gap / range;
            }
        }
    }
    distance
}

fn max_scalarized<T: HasValue>(policy_set: &[T], w: &[f64]) -> f64 {
    policy_set
        .iter()
        .map(|p| dot(p.value(), w))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// True iff some encountered weight scalarizes `candidate` above the best
/// stored policy minus `kappa`. An empty policy set is always improved upon.
pub fn is_improvement<T: HasValue>(
    candidate: &[f64],
    policy_set: &[T],
    encountered: &[WeightVector],
    kappa: f64,
) -> bool {
    if policy_set.is_empty() {
        return true;
    }
    encountered
        .iter()
        .any(|w| dot(candidate, w) > max_scalarized(policy_set, w) - kappa)
}

/// Index of the entry maximizing `V · w`, ties going to the newest entry.
pub fn best_policy_index<T: HasValue>(policy_set: &[T], w: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in policy_set.iter().enumerate() {
        MorlError::check_dim(w.len(), p.value().len())?;
        let s = dot(p.value(), w);
        match best {
            Some((_, b)) if s < b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i).ok_or(MorlError::EmptyPolicySet)
}

/// Entry maximizing `V · w`, ties going to the newest entry.
pub fn best_policy_for<'a, T: HasValue>(policy_set: &'a [T], w: &[f64]) -> Result<&'a T> {
    best_policy_index(policy_set, w).map(|i| &policy_set[i])
}

/// Index of the newest entry within `kappa` of the best scalarized value.
fn recent_within_kappa<T: HasValue>(policy_set: &[T], w: &[f64], kappa: f64) -> Option<usize> {
    let max = max_scalarized(policy_set, w);
    policy_set
        .iter()
        .rposition(|p| dot(p.value(), w) >= max - kappa)
}

/// Keeps, for every encountered weight, the exact best entry and the newest
/// entry within `kappa` of it; everything else is dropped. Order is preserved.
pub fn prune_redundant<T: HasValue>(
    policy_set: Vec<T>,
    encountered: &[WeightVector],
    kappa: f64,
) -> Vec<T> {
    if policy_set.is_empty() {
        return policy_set;
    }
    let mut keep = vec![false; policy_set.len()];
    for w in encountered {
        if let Ok(i) = best_policy_index(&policy_set, w) {
            keep[i] = true;
        }
        if let Some(i) = recent_within_kappa(&policy_set, w, kappa) {
            keep[i] = true;
        }
    }
    policy_set
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(c: &[f64]) -> WeightVector {
        WeightVector::new(c.to_vec()).unwrap()
    }

    /// Brute-force NSGA-II crowding distance: neighbours found by rank
    /// counting rather than sorting.
    pub(crate) fn crowding_oracle(points: &[Vec<f64>]) -> Vec<f64> {
        let n = points.len();
        let mut out = vec![0.0; n];
        if n == 0 {
            return out;
        }
        let dims = points[0].len();
        for k in 0..dims {
            let less = |a: usize, b: usize| {
                points[a][k] < points[b][k] || (points[a][k] == points[b][k] && a < b)
            };
            let rank: Vec<usize> = (0..n).map(|i| (0..n).filter(|&j| less(j, i)).count()).collect();
            let at_rank = |r: usize| (0..n).find(|&j| rank[j] == r).unwrap();
            let lo = points[at_rank(0)][k];
            let hi = points[at_rank(n - 1)][k];
            for i in 0..n {
                if rank[i] == 0 || rank[i] == n - 1 {
                    out[i] = f64::INFINITY;
                } else if hi > lo {
                    out[i] += (points[at_rank(rank[i] + 1)][k] - points[at_rank(rank[i] - 1)][k]) / (hi - lo);
                }
            }
        }
        out
    }

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(vec![0.5, 0.5]).is_ok());
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.5, 1.5]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
        assert!(WeightVector::new(vec![f64::NAN, 1.0]).is_err());
        let n = WeightVector::normalized(vec![2.0, 6.0]).unwrap();
        assert_eq!(n.as_slice(), &[0.25, 0.75]);
        assert!(WeightVector::normalized(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn scalarize_examples() {
        assert_eq!(scalarize(&[1.0, 0.0], &w(&[0.5, 0.5])).unwrap(), 0.5);
        assert_eq!(scalarize(&[0.2, -0.03], &w(&[1.0, 0.0])).unwrap(), 0.2);
        let v = [3.0, -7.0, 11.0];
        for i in 0..3 {
            assert_eq!(scalarize(&v, &WeightVector::basis(3, i)).unwrap(), v[i]);
        }
        assert!(matches!(
            scalarize(&[1.0], &w(&[0.5, 0.5])),
            Err(MorlError::Dimension { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn regret_examples() {
        let wv = w(&[0.5, 0.5]);
        assert_eq!(regret(&[3.0, -1.0], &wv, &[3.0, -1.0]).unwrap(), 0.0);
        let r = regret(&[1.4, 0.0], &wv, &[2.0, 0.0]).unwrap();
        assert!((r - 0.3).abs() < 1e-12);
    }

    #[test]
    fn crowding_small_cases() {
        assert_eq!(crowding_distance(&[vec![0.3, 0.1]]), vec![f64::INFINITY]);
        assert_eq!(crowding_distance(&[vec![0.0, 1.0], vec![1.0, 0.0]]), vec![f64::INFINITY; 2]);
        let pts = vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]];
        let d = crowding_distance(&pts);
        assert_eq!(d, vec![f64::INFINITY, 2.0, f64::INFINITY]);
        assert_eq!(d, crowding_oracle(&pts));
        assert!(crowding_distance::<Vec<f64>>(&[]).is_empty());
    }

    #[test]
    fn crowding_zero_range_objective_contributes_nothing() {
        let pts = vec![vec![0.0, 5.0], vec![0.5, 5.0], vec![1.0, 5.0], vec![0.7, 5.0]];
        let d = crowding_distance(&pts);
        // objective 1 is constant: only its sorted extremes (by index) go infinite
        assert_eq!(d[0], f64::INFINITY);
        assert_eq!(d[3], f64::INFINITY);
        assert_eq!(d[2], f64::INFINITY);
        assert!((d[1] - 0.7).abs() < 1e-12);
        assert_eq!(d, crowding_oracle(&pts));
    }

    #[test]
    fn improvement_examples() {
        let empty: Vec<Vec<f64>> = vec![];
        let ws = vec![w(&[1.0, 0.0])];
        assert!(is_improvement(&[0.0, 0.0], &empty, &ws, 0.0));
        let set = vec![vec![1.0, 1.0]];
        assert!(is_improvement(&[1.0, 1.0], &set, &ws, 0.01));
        assert!(!is_improvement(&[1.0, 1.0], &set, &ws, 0.0));
        let ws2 = vec![w(&[1.0, 0.0]), w(&[0.0, 1.0]), w(&[0.5, 0.5])];
        assert!(!is_improvement(&[0.5, 0.5], &set, &ws2, 0.1));
    }

    #[test]
    fn best_policy_examples() {
        let single = vec![vec![0.2, 0.3]];
        assert_eq!(best_policy_index(&single, &[0.5, 0.5]).unwrap(), 0);
        let set = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(best_policy_index(&set, &[1.0, 0.0]).unwrap(), 0);
        assert_eq!(best_policy_index(&set, &[0.5, 0.5]).unwrap(), 1);
        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(best_policy_for(&empty, &[1.0]), Err(MorlError::EmptyPolicySet)));
    }

    #[test]
    fn prune_examples() {
        let ws = vec![w(&[1.0, 0.0]), w(&[0.0, 1.0])];
        let dup = prune_redundant(vec![vec![1.0, 0.0], vec![1.0, 0.0]], &ws, 0.0);
        assert_eq!(dup.len(), 1);
        let both = prune_redundant(vec![vec![1.0, 0.0], vec![0.0, 1.0]], &ws, 0.0);
        assert_eq!(both.len(), 2);

        // brute force: which entries are the newest exact argmax somewhere?
        let set = vec![vec![1.0, 0.0], vec![0.4, 0.4], vec![0.0, 1.0]];
        let ws3 = vec![w(&[1.0, 0.0]), w(&[0.5, 0.5]), w(&[0.0, 1.0])];
        let mut expected = [false; 3];
        for wv in &ws3 {
            let scores: Vec<f64> = set.iter().map(|v| v[0] * wv[0] + v[1] * wv[1]).collect();
            let m = scores.iter().cloned().fold(f64::MIN, f64::max);
            let newest = (0..3).rev().find(|&i| scores[i] == m).unwrap();
            expected[newest] = true;
        }
        let pruned = prune_redundant(set.clone(), &ws3, 0.0);
        let survivors: Vec<bool> = set.iter().map(|v| pruned.contains(v)).collect();
        assert_eq!(survivors, expected.to_vec());
        assert!(!pruned.contains(&vec![0.4, 0.4]));
    }

    fn arb_weight(n: usize) -> impl Strategy<Value = WeightVector> {
        prop::collection::vec(0.01f64..1.0, n).prop_map(|c| WeightVector::normalized(c).unwrap())
    }

    proptest! {
        #[test]
        fn scalarize_is_linear(
            u in prop::collection::vec(-10.0f64..10.0, 3),
            v in prop::collection::vec(-10.0f64..10.0, 3),
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
            wv in arb_weight(3),
        ) {
            let comb: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lhs = scalarize(&comb, &wv).unwrap();
            let rhs = a * scalarize(&u, &wv).unwrap() + b * scalarize(&v, &wv).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn crowding_is_permutation_equivariant_and_scale_invariant(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..12),
            scale in prop::collection::vec(0.1f64..10.0, 2),
            shift in prop::collection::vec(-3.0f64..3.0, 2),
            rot in 0usize..12,
        ) {
            let base = crowding_distance(&pts);
            let n = pts.len();
            let rot = rot % n;
            let perm: Vec<Vec<f64>> = (0..n).map(|i| pts[(i + rot) % n].clone()).collect();
            // distinct points keep their rank under rotation; ties may reorder, so
            // compare only when all coordinates are distinct
            let distinct = (0..2).all(|k| {
                let mut c: Vec<f64> = pts.iter().map(|p| p[k]).collect();
                c.sort_by(f64::total_cmp);
                c.windows(2).all(|w| w[0] < w[1])
            });
            if distinct {
                let permuted = crowding_distance(&perm);
                for i in 0..n {
                    let a = permuted[i];
                    let b = base[(i + rot) % n];
                    prop_assert!(a == b || (a - b).abs() < 1e-9);
                }
            }
            let affine: Vec<Vec<f64>> = pts
                .iter()
                .map(|p| p.iter().zip(&scale).zip(&shift).map(|((x, s), t)| x * s + t).collect())
                .collect();
            let scaled = crowding_distance(&affine);
            for i in 0..n {
                prop_assert!(scaled[i] == base[i] || (scaled[i] - base[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn prune_is_idempotent_and_preserves_best(
            values in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 1..10),
            weights in prop::collection::vec(arb_weight(2), 1..8),
            kappa in 0.0f64..0.2,
        ) {
            let once = prune_redundant(values.clone(), &weights, kappa);
            let twice = prune_redundant(once.clone(), &weights, kappa);
            prop_assert_eq!(&once, &twice);
            for wv in &weights {
                let before = dot(best_policy_for(&values, wv).unwrap(), wv);
                let after = dot(best_policy_for(&once, wv).unwrap(), wv);
                prop_assert!((before - after).abs() <= kappa + 1e-12);
            }
        }
    }
}
