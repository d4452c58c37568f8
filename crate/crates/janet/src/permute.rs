//! Non-overlapping-block (NOB) cyclic permutations of calibration indices.
//!
//! The calibration series is divided into `d = L_cal / b` blocks of `b`
//! observations; the `j`-th member rotates the series forward by `j - 1`
//! blocks, so the front block wraps to the end. The `d` rotations form a
//! cyclic group under composition.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// One cyclic block rotation, stored as `(shift, block size, length)`;
/// the explicit index map is derived on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NobPermutation {
    /// 1-based member index `j` in `1..=d`; `j = 1` is the identity.
    shift_blocks: usize,
    block_size: usize,
    length: usize,
}

impl NobPermutation {
    /// Member index `j` (1-based; 1 is the identity).
    pub fn shift_blocks(&self) -> usize {
        self.shift_blocks
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Domain size `L_cal`.
    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    /// Row offset in the original series that this rotation starts from.
    pub fn offset(&self) -> usize {
        (self.shift_blocks - 1) * self.block_size
    }

    pub fn is_identity(&self) -> bool {
        self.shift_blocks == 1
    }

    /// 0-based index map: output row `i` takes input row `map_index(i)`.
    ///
    /// Equivalent to the 1-based rule `i -> i + (j-1)b` when that stays
    /// within `1..=L_cal` and `i + (j-1)b - L_cal` otherwise.
    pub fn map_index(&self, i: usize) -> usize {
        debug_assert!(i < self.length);
        (i + self.offset()) % self.length
    }

    /// The full index map as a vector.
    pub fn to_indices(&self) -> Vec<usize> {
        (0..self.length).map(|i| self.map_index(i)).collect()
    }

    /// The group inverse: shift `j` composes with shift `d - j + 2` to the
    /// identity (the identity is its own inverse).
    pub fn inverse(&self) -> NobPermutation {
        let d = self.length / self.block_size;
        let j = if self.shift_blocks == 1 {
            1
        } else {
            d - self.shift_blocks + 2
        };
        NobPermutation {
            shift_blocks: j,
            ..*self
        }
    }
}

/// The cyclic group of all `d = L_cal / b` NOB rotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationGroup {
    members: Vec<NobPermutation>,
    block_size: usize,
    length: usize,
}

impl PermutationGroup {
    pub fn members(&self) -> &[NobPermutation] {
        &self.members
    }

    /// Group order `d`.
    pub fn order(&self) -> usize {
        self.members.len()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Domain size `L_cal`.
    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn identity(&self) -> NobPermutation {
        self.members[0]
    }
}

/// Constructs the NOB group for a calibration length and block size.
/// The block size must divide the length exactly.
pub fn nob_group(l_cal: usize, b: usize) -> Result<PermutationGroup> {
    if b == 0 || l_cal == 0 || l_cal % b != 0 {
        return Err(Error::BlockSizeDoesNotDivide {
            block_size: b,
            len: l_cal,
        });
    }
    let d = l_cal / b;
    let members = (1..=d)
        .map(|j| NobPermutation {
            shift_blocks: j,
            block_size: b,
            length: l_cal,
        })
        .collect();
    Ok(PermutationGroup {
        members,
        block_size: b,
        length: l_cal,
    })
}

/// Applies a rotation to a series: output row `i` equals input row `pi(i)`.
pub fn apply(perm: &NobPermutation, series: &TimeSeries) -> Result<TimeSeries> {
    if series.len() != perm.len() {
        return Err(Error::LengthMismatch {
            expected: perm.len(),
            found: series.len(),
        });
    }
    let p = series.channels();
    let mut out = Array2::zeros((perm.len(), p));
    for i in 0..perm.len() {
        let src = perm.map_index(i);
        for c in 0..p {
            out[[i, c]] = series.values()[[src, c]];
        }
    }
    let labels = series
        .labels()
        .map(|l| (0..perm.len()).map(|i| l[perm.map_index(i)].clone()).collect());
    TimeSeries::new(out, labels)
}

/// Composes two rotations of the same group: shifts add modulo `d`.
pub fn compose(a: &NobPermutation, b: &NobPermutation) -> Result<NobPermutation> {
    if a.length != b.length || a.block_size != b.block_size {
        return Err(Error::Incompatible {
            len_a: a.length,
            block_a: a.block_size,
            len_b: b.length,
            block_b: b.block_size,
        });
    }
    let d = a.length / a.block_size;
    let j = (a.shift_blocks + b.shift_blocks - 2) % d + 1;
    Ok(NobPermutation {
        shift_blocks: j,
        block_size: a.block_size,
        length: a.length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::TimeSeries;
    use proptest::prelude::*;

    fn series(vals: &[f64]) -> TimeSeries {
        TimeSeries::univariate(vals).unwrap()
    }

    #[test]
    fn unit_block_rotations() {
        let g = nob_group(6, 1).unwrap();
        assert_eq!(g.order(), 6);
        assert!(g.identity().is_identity());
        // Second member rotates the front element to the end.
        let s = series(&[11.0, 12.0, 13.0, 14.0, 15.0, 16.0]);
        let rotated = apply(&g.members()[1], &s).unwrap();
        assert_eq!(
            rotated.column().unwrap(),
            vec![12.0, 13.0, 14.0, 15.0, 16.0, 11.0]
        );
    }

    #[test]
    fn whole_series_block_is_identity_only() {
        let g = nob_group(6, 6).unwrap();
        assert_eq!(g.order(), 1);
        assert!(g.identity().is_identity());
    }

    #[test]
    fn indivisible_block_size_rejected() {
        assert!(matches!(
            nob_group(6, 4),
            Err(Error::BlockSizeDoesNotDivide {
                block_size: 4,
                len: 6
            })
        ));
    }

    #[test]
    fn identity_application_is_noop() {
        let g = nob_group(5, 1).unwrap();
        let s = series(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(apply(&g.identity(), &s).unwrap(), s);
    }

    #[test]
    fn length_mismatch_rejected() {
        let g = nob_group(6, 1).unwrap();
        let s = series(&[1.0, 2.0]);
        assert!(matches!(
            apply(&g.members()[2], &s),
            Err(Error::LengthMismatch {
                expected: 6,
                found: 2
            })
        ));
    }

    #[test]
    fn compose_with_identity() {
        let g = nob_group(12, 3).unwrap();
        for m in g.members() {
            assert_eq!(&compose(&g.identity(), m).unwrap(), m);
            assert_eq!(&compose(m, &g.identity()).unwrap(), m);
        }
    }

    #[test]
    fn compose_shift_one_with_last_is_identity() {
        // shift 1 + shift d-1 = full cycle, for every d <= 12 with b = 1.
        for d in 2..=12 {
            let g = nob_group(d, 1).unwrap();
            let composed = compose(&g.members()[1], &g.members()[d - 1]).unwrap();
            assert!(composed.is_identity(), "d={d}");
        }
    }

    #[test]
    fn compose_self_inverse_at_half_cycle() {
        // pi_3 . pi_3 with d = 4 wraps to the identity.
        let g = nob_group(4, 1).unwrap();
        let composed = compose(&g.members()[2], &g.members()[2]).unwrap();
        assert!(composed.is_identity());
    }

    #[test]
    fn incompatible_permutations_rejected() {
        let a = nob_group(6, 1).unwrap().identity();
        let b = nob_group(6, 2).unwrap().identity();
        assert!(matches!(compose(&a, &b), Err(Error::Incompatible { .. })));
    }

    #[test]
    fn apply_then_inverse_restores_series_exhaustive() {
        // Verified by composing mappings exhaustively for L_cal <= 12.
        for l in 1..=12usize {
            for b in 1..=l {
                if l % b != 0 {
                    continue;
                }
                let g = nob_group(l, b).unwrap();
                let vals: Vec<f64> = (0..l).map(|i| (i * i) as f64 + 0.25).collect();
                let s = series(&vals);
                for m in g.members() {
                    let there = apply(m, &s).unwrap();
                    let back = apply(&m.inverse(), &there).unwrap();
                    assert_eq!(back, s, "l={l} b={b} j={}", m.shift_blocks());
                }
            }
        }
    }

    #[test]
    fn group_axioms_small_sizes() {
        // Closure, identity, inverse, associativity for L_cal <= 24 here;
        // the acceptance suite extends this to 64.
        for l in 1..=24usize {
            for b in (1..=l).filter(|b| l % b == 0) {
                let g = nob_group(l, b).unwrap();
                let members = g.members();
                for a in members {
                    assert!(members.contains(&a.inverse()));
                    assert!(compose(a, &a.inverse()).unwrap().is_identity());
                    for c in members {
                        let ac = compose(a, c).unwrap();
                        assert!(members.contains(&ac));
                        for e in members {
                            let left = compose(&compose(a, c).unwrap(), e).unwrap();
                            let right = compose(a, &compose(c, e).unwrap()).unwrap();
                            assert_eq!(left, right);
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn rotation_preserves_multiset(
            l in 1usize..30,
            vals in proptest::collection::vec(-1e6f64..1e6, 30),
            j_pick in 0usize..30,
        ) {
            let g = nob_group(l, 1).unwrap();
            let s = series(&vals[..l]);
            let m = g.members()[j_pick % l];
            let rotated = apply(&m, &s).unwrap();
            let mut a = s.column().unwrap();
            let mut b = rotated.column().unwrap();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn prefix_is_cyclic_window(
            l in 6usize..24,
            j_pick in 0usize..24,
            vals in proptest::collection::vec(-1e3f64..1e3, 24),
        ) {
            // The first rows of a rotated series form a cyclic window of the
            // original starting at the rotation offset.
            let g = nob_group(l, 1).unwrap();
            let m = g.members()[j_pick % l];
            let s = series(&vals[..l]);
            let rotated = apply(&m, &s).unwrap();
            let t_plus_h = 4usize.min(l);
            for i in 0..t_plus_h {
                prop_assert_eq!(
                    rotated.values()[[i, 0]],
                    s.values()[[(m.offset() + i) % l, 0]]
                );
            }
        }
    }
}
