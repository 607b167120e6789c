//! Closed-form geometry of the symmetric visibility chain and its base
//! (the projection of the chain onto the leader's horizontal line).
//!
//! Side `j` of a branch makes angle `θ/2 + (j-1)θ` with the horizontal, so
//! the first base point sits at `σ = d·cos(θ/2)` from the tip.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;

#[derive(Clone, Copy, Debug, PartialEq, Error)]
pub enum ChainError {
    #[error("sigma {0} must exceed 1/2")]
    SigmaTooSmall(f64),
    #[error("branch index {0} bends past the vertical")]
    BranchOverflow(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub stretch: f64,
    pub turning: f64,
    pub sigma: f64,
}

/// Strict lower bound on `sin θ` for three consecutive chain points to be
/// pairwise visible.
pub fn min_sin_turning(d: f64, c: f64) -> f64 {
    (1.0 - c) / d
}

pub fn spec_from_sigma(sigma: f64) -> Result<ChainSpec, ChainError> {
    if sigma.is_nan() || sigma <= 0.5 {
        return Err(ChainError::SigmaTooSmall(sigma));
    }
    let stretch = 2.0 * sigma * sigma / (4.0 * sigma * sigma - 1.0).sqrt();
    let turning = 2.0 * (0.5 / sigma).asin();
    Ok(ChainSpec {
        stretch,
        turning,
        sigma,
    })
}

impl ChainSpec {
    fn side_angle(&self, j: usize) -> f64 {
        self.turning * (j as f64 - 0.5)
    }

    fn check(&self, k: usize) -> Result<(), ChainError> {
        if k >= 1 && self.side_angle(k) >= FRAC_PI_2 {
            Err(ChainError::BranchOverflow(k))
        } else {
            Ok(())
        }
    }

    /// Horizontal offsets `b_1..b_k` of the first `k` vertices of a branch.
    pub fn base_offsets(&self, k: usize) -> Result<Vec<f64>, ChainError> {
        self.check(k)?;
        Ok(self.partial_sums(k, f64::cos))
    }

    /// Heights `h_1..h_k` of the first `k` vertices above the tip.
    pub fn heights(&self, k: usize) -> Result<Vec<f64>, ChainError> {
        self.check(k)?;
        Ok(self.partial_sums(k, f64::sin))
    }

    fn partial_sums(&self, k: usize, f: fn(f64) -> f64) -> Vec<f64> {
        let mut acc = 0.0;
        (1..=k)
            .map(|j| {
                acc += self.stretch * f(self.side_angle(j));
                acc
            })
            .collect()
    }

    /// Offset `b_m` (with `b_0 = 0`), if vertex `m` exists.
    pub fn offset(&self, m: usize) -> Option<f64> {
        if m == 0 {
            return Some(0.0);
        }
        self.base_offsets(m).ok().map(|v| v[m - 1])
    }

    pub fn height(&self, m: usize) -> Option<f64> {
        if m == 0 {
            return Some(0.0);
        }
        self.heights(m).ok().map(|v| v[m - 1])
    }

    /// Whether a branch already holding `m` robots can take one more.
    pub fn branch_has_space(&self, m: usize) -> bool {
        match (self.offset(m), self.offset(m + 1)) {
            (Some(a), Some(b)) => b - a >= 2.0,
            _ => false,
        }
    }

    /// Number of robots a branch can hold under the 2-unit spacing rule.
    pub fn capacity(&self) -> usize {
        let mut m = 0;
        while self.branch_has_space(m) {
            m += 1;
        }
        m
    }

    /// Index `m ≥ 1` with `b_m` within `tol` of `x`, if any.
    pub fn index_of_offset(&self, x: f64, tol: f64) -> Option<usize> {
        let mut m = 1;
        while let Some(b) = self.offset(m) {
            if (b - x).abs() <= tol {
                return Some(m);
            }
            if b > x + tol {
                return None;
            }
            m += 1;
        }
        None
    }
}

/// Vertices of a chain with its tip at `origin`: the tip, then the east
/// branch outward, then the west branch outward.
pub fn chain_points(
    spec: &ChainSpec,
    k_east: usize,
    k_west: usize,
    origin: Point,
) -> Result<Vec<Point>, ChainError> {
    let k = k_east.max(k_west);
    let (b, h) = (spec.base_offsets(k)?, spec.heights(k)?);
    let mut pts = vec![origin];
    pts.extend((0..k_east).map(|m| origin + Point::new(b[m], h[m])));
    pts.extend((0..k_west).map(|m| origin + Point::new(-b[m], h[m])));
    Ok(pts)
}

/// The smallest stretch whose branches hold `base` robots besides the tip,
/// split as evenly as possible with the east branch taking the extra one.
/// Found by bisection on σ, since capacity grows with σ.
pub fn optimal_stretch(base: usize) -> f64 {
    let need = base.div_ceil(2);
    let fits = |sigma: f64| {
        spec_from_sigma(sigma)
            .map(|s| sigma >= 2.0 && s.capacity() >= need)
            .unwrap_or(false)
    };
    let (mut lo, mut hi) = (2.0, 4.0);
    if fits(lo) {
        return spec_from_sigma(lo).expect("valid sigma").stretch;
    }
    while !fits(hi) {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    spec_from_sigma(hi).expect("valid sigma").stretch
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // 40-digit evaluations of the σ = 4 chain.
    const D4: f64 = 4.031_621_045_431_757;
    const B4: [f64; 5] = [4.0, 7.75, 11.015625, 13.5927734375, 15.32037353515625];
    const H4: [f64; 3] = [
        0.503_952_630_678_969_6,
        1.984_313_483_298_443,
        4.348_560_004_569_703,
    ];

    #[test]
    fn min_sin_turning_values() {
        assert_eq!(min_sin_turning(2.0, 0.5), 0.25);
        assert_eq!(min_sin_turning(4.0, 0.5), 0.125);
        assert!(min_sin_turning(3.0, 1.0 - 1e-12) < 1e-11);
    }

    #[test]
    fn sigma_fixtures() {
        let s = spec_from_sigma(0.5f64.sqrt()).unwrap();
        assert!((s.stretch - 1.0).abs() < 1e-12);
        let s = spec_from_sigma(4.0).unwrap();
        assert!((s.stretch - D4).abs() < 1e-12);
        assert!((s.stretch * (s.turning / 2.0).cos() - 4.0).abs() < 1e-12);
        assert_eq!(spec_from_sigma(0.5), Err(ChainError::SigmaTooSmall(0.5)));
    }

    #[test]
    fn sigma_four_offsets_and_heights() {
        let s = spec_from_sigma(4.0).unwrap();
        let b = s.base_offsets(5).unwrap();
        for (x, y) in b.iter().zip(B4) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
        let h = s.heights(3).unwrap();
        for (x, y) in h.iter().zip(H4) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
        assert!((h[0] - s.stretch / 8.0).abs() < 1e-12);
        assert!((s.base_offsets(1).unwrap()[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn overflow_when_sides_turn_vertical() {
        let s = spec_from_sigma(1.0).unwrap();
        // θ = π/3, so side 2 is at π/2.
        assert_eq!(s.base_offsets(2), Err(ChainError::BranchOverflow(2)));
        assert!(!s.branch_has_space(1));
    }

    #[test]
    fn sigma_four_capacity() {
        let s = spec_from_sigma(4.0).unwrap();
        assert!(s.branch_has_space(0));
        assert!(s.branch_has_space(1));
        assert!(s.branch_has_space(3));
        assert!(!s.branch_has_space(4));
        assert_eq!(s.capacity(), 4);
        assert_eq!(s.index_of_offset(11.015625, 1e-6), Some(3));
        assert_eq!(s.index_of_offset(9.0, 1e-6), None);
    }

    #[test]
    fn chain_points_layout() {
        let s = spec_from_sigma(4.0).unwrap();
        let o = Point::new(1.0, -2.0);
        assert_eq!(chain_points(&s, 0, 0, o).unwrap(), vec![o]);
        let p = chain_points(&s, 1, 1, o).unwrap();
        assert!((p[1].x - o.x + (p[2].x - o.x)).abs() < 1e-12);
        assert_eq!(p[1].y, p[2].y);
    }

    #[test]
    fn optimal_stretch_is_monotone_and_minimal() {
        let mut prev = 0.0;
        for base in 1..40 {
            let d = optimal_stretch(base);
            assert!(d >= prev - 1e-9);
            prev = d;
        }
        // One robot per branch only needs the 2-unit gap to the tip.
        assert!((optimal_stretch(2) - spec_from_sigma(2.0).unwrap().stretch).abs() < 1e-12);
    }

    fn exterior_angle(a: Point, b: Point, c: Point) -> f64 {
        let (u, v) = (b - a, c - b);
        u.cross(v).atan2(u.dot(v)).abs()
    }

    proptest! {
        #[test]
        fn sigma_round_trip(sigma in 0.500_001..50.0f64) {
            let s = spec_from_sigma(sigma).unwrap();
            prop_assert!((s.stretch * (s.turning / 2.0).cos() - sigma).abs() < 1e-9);
            prop_assert!((s.stretch * s.turning.sin() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn branch_geometry(sigma in 2.0..60.0f64, k in 1usize..12) {
            let s = spec_from_sigma(sigma).unwrap();
            prop_assume!(s.base_offsets(k).is_ok());
            let pts = chain_points(&s, k, 0, Point::ORIGIN).unwrap();
            for w in pts.windows(2) {
                prop_assert!((w[0].dist(w[1]) - s.stretch).abs() < 1e-9);
            }
            for w in pts.windows(3) {
                prop_assert!((exterior_angle(w[0], w[1], w[2]) - s.turning).abs() < 1e-9);
            }
            let b = s.base_offsets(k).unwrap();
            for m in 2..k {
                prop_assert!(b[m] - b[m - 1] < b[m - 1] - b[m - 2] + 1e-12);
            }
        }
    }
}
