//! Index maps for the space-time lattice reachable by an n-step simple random walk.
//!
//! At step `i` the admissible positions are `x = -i, -i+2, ..., i`; position `x` is stored at
//! dense index `(x + i) / 2`, so layer `i` has `i + 1` entries.

use crate::scalar::Scalar;

/// Dense index of position `x` at step `i`, or `None` if the site is not reachable.
pub fn site_index(step: usize, x: i64) -> Option<usize> {
    let i = step as i64;
    if x.abs() > i || (x + i).rem_euclid(2) != 0 {
        return None;
    }
    Some(((x + i) / 2) as usize)
}

/// Position stored at dense index `k` of layer `step`.
pub fn site_position(step: usize, k: usize) -> i64 {
    2 * k as i64 - step as i64
}

/// Number of sites (i, x) with 1 <= i <= n.
pub fn site_count(n: usize) -> usize {
    n * (n + 3) / 2
}

/// One step of the simple random walk kernel applied to a layer:
/// `next[k] = (prev[k - 1] + prev[k]) / 2`, with out-of-range entries read as zero.
pub(crate) fn walk_step<T: Scalar>(prev: &[T], next: &mut Vec<T>) {
    let half = T::lit(0.5);
    let len = prev.len() + 1;
    next.clear();
    next.reserve(len);
    for k in 0..len {
        let up = if k >= 1 { prev[k - 1] } else { T::zero() };
        let down = if k < prev.len() { prev[k] } else { T::zero() };
        next.push(half * (up + down));
    }
}

/// Adjoint of [`walk_step`]: `prev[k] = (next[k] + next[k + 1]) / 2`.
pub(crate) fn walk_step_back<T: Scalar>(next: &[T], prev: &mut Vec<T>) {
    let half = T::lit(0.5);
    prev.clear();
    for k in 0..next.len() - 1 {
        prev.push(half * (next[k] + next[k + 1]));
    }
}

/// Enumerates all 2^n step sequences as positions `S_1..S_n`.
pub(crate) fn for_each_path(n: usize, mut f: impl FnMut(&[i64])) {
    let mut positions = vec![0i64; n];
    for mask in 0u64..(1u64 << n) {
        let mut s = 0i64;
        for (i, p) in positions.iter_mut().enumerate() {
            s += if mask >> i & 1 == 1 { 1 } else { -1 };
            *p = s;
        }
        f(&positions);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        for step in 0..8 {
            for k in 0..=step {
                let x = site_position(step, k);
                assert_eq!(site_index(step, x), Some(k));
            }
        }
        assert_eq!(site_index(3, 0), None);
        assert_eq!(site_index(3, 5), None);
        assert_eq!(site_index(2, -2), Some(0));
    }

    #[test]
    fn counts() {
        assert_eq!(site_count(3), 9);
        assert_eq!(site_count(1), 2);
        assert_eq!(site_count(10), (1..=10).map(|i| i + 1).sum::<usize>());
    }

    #[test]
    fn walk_kernel_is_binomial() {
        let mut layer = vec![1.0f64];
        let mut next = Vec::new();
        for _ in 0..4 {
            walk_step(&layer, &mut next);
            std::mem::swap(&mut layer, &mut next);
        }
        assert_eq!(layer, vec![1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0]);
    }

    #[test]
    fn adjoint_pairs() {
        let a = [0.3f64, 0.7, 0.1];
        let b = [1.0f64, 2.0, 3.0, 4.0];
        let mut fa = Vec::new();
        walk_step(&a, &mut fa);
        let mut bb = Vec::new();
        walk_step_back(&b, &mut bb);
        let lhs: f64 = fa.iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.iter().zip(&bb).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-15);
    }
}
