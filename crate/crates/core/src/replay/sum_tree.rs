/// Binary sum/max tree over a fixed number of leaves.
///
/// Parents are recomputed from their children on every update, so sums do
/// not drift no matter how many updates are applied.
#[derive(Clone, Debug, PartialEq)]
pub struct SumTree {
    leaves: usize,
    sum: Vec<f64>,
    max: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        SumTree {
            leaves,
            sum: vec![0.0; 2 * leaves],
            max: vec![0.0; 2 * leaves],
        }
    }

    pub fn capacity(&self) -> usize {
        self.leaves
    }

    pub fn total(&self) -> f64 {
        self.sum[1]
    }

    pub fn max(&self) -> f64 {
        self.max[1]
    }

    pub fn get(&self, index: usize) -> f64 {
        self.sum[self.leaves + index]
    }

    pub fn set(&mut self, index: usize, value: f64) {
        debug_assert!(value >= 0.0 && value.is_finite());
        let mut i = self.leaves + index;
        self.sum[i] = value;
        self.max[i] = value;
        while i > 1 {
            i /= 2;
            self.sum[i] = self.sum[2 * i] + self.sum[2 * i + 1];
            self.max[i] = self.max[2 * i].max(self.max[2 * i + 1]);
        }
    }

    /// Leaf whose cumulative mass interval contains `mass` (clamped into
    /// `[0, total)`); never returns a zero-mass leaf while `total() > 0`.
    pub fn find(&self, mass: f64) -> usize {
        let mut mass = mass.clamp(0.0, self.total());
        let mut i = 1;
        while i < self.leaves {
            let left = 2 * i;
            if mass < self.sum[left] || self.sum[left + 1] == 0.0 {
                i = left;
            } else {
                mass -= self.sum[left];
                i = left + 1;
            }
        }
        let mut leaf = i - self.leaves;
        // rounding can land on an empty leaf at the far right; walk back
        while self.get(leaf) == 0.0 && leaf > 0 {
            leaf -= 1;
        }
        leaf
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn totals_and_lookup() {
        let mut t = SumTree::new(5);
        assert_eq!(t.capacity(), 8);
        for (i, v) in [1.0, 2.0, 0.0, 3.0, 4.0].iter().enumerate() {
            t.set(i, *v);
        }
        assert_eq!(t.total(), 10.0);
        assert_eq!(t.max(), 4.0);
        assert_eq!(t.find(0.0), 0);
        assert_eq!(t.find(0.99), 0);
        assert_eq!(t.find(1.0), 1);
        assert_eq!(t.find(2.99), 1);
        assert_eq!(t.find(3.0), 3);
        assert_eq!(t.find(6.0), 4);
        assert_eq!(t.find(10.0), 4);
        t.set(4, 0.0);
        assert_eq!(t.max(), 3.0);
        assert_eq!(t.find(9.0), 3);
    }

    proptest! {
        #[test]
        fn find_matches_linear_scan(values in prop::collection::vec(0.0f64..5.0, 1..40), u in 0.0f64..1.0) {
            let mut t = SumTree::new(values.len());
            for (i, v) in values.iter().enumerate() {
                t.set(i, *v);
            }
            let total: f64 = values.iter().sum();
            prop_assume!(total > 0.0);
            let mass = u * t.total();
            let got = t.find(mass);
            prop_assert!(values[got] > 0.0);
            let mut acc = 0.0;
            let mut expected = values.len() - 1;
            for (i, v) in values.iter().enumerate() {
                if mass < acc + v {
                    expected = i;
                    break;
                }
                acc += v;
            }
            // boundary rounding may pick a neighbour; mass must lie in or at the edge of its interval
            let lo: f64 = values[..got].iter().sum();
            prop_assert!(got == expected || (mass - lo).abs() < 1e-9 || (mass - (lo + values[got])).abs() < 1e-9);
        }
    }
}
