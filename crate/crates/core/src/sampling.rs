//! Latin hypercube sampling.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::param::Bounds;
use crate::rng::RngSpec;

/// `n` points of `bounds`, one per equal-width stratum in every coordinate.
///
/// A collapsed coordinate (`lower == upper`) takes its single value.
pub fn lhs_sample(bounds: &Bounds, n: usize, rng: RngSpec) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("LHS needs at least one point".into()));
    }
    let mut g = rng.rng();
    let d = bounds.dim();
    let mut points = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for i in 0..d {
        perm.shuffle(&mut g);
        let (lo, w) = (bounds.lower()[i], bounds.width(i));
        for (k, p) in points.iter_mut().enumerate() {
            let u: f64 = g.random();
            let x = lo + w * ((perm[k] as f64 + u) / n as f64);
            p[i] = x.clamp(lo, bounds.upper()[i]);
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strata(points: &[Vec<f64>], b: &Bounds, i: usize) -> Vec<usize> {
        let n = points.len();
        let mut s: Vec<usize> = points
            .iter()
            .map(|p| {
                let u = (p[i] - b.lower()[i]) / b.width(i);
                ((u * n as f64).floor() as usize).min(n - 1)
            })
            .collect();
        s.sort_unstable();
        s
    }

    #[test]
    fn unit_interval_four_points() {
        let b = Bounds::from_intervals(&[(0.0, 1.0)]).unwrap();
        let p = lhs_sample(&b, 4, RngSpec::seeded(5)).unwrap();
        assert_eq!(strata(&p, &b, 0), vec![0, 1, 2, 3]);
    }

    #[test]
    fn degenerate_box() {
        let b = Bounds::from_intervals(&[(2.0, 2.0)]).unwrap();
        let p = lhs_sample(&b, 5, RngSpec::seeded(5)).unwrap();
        assert_eq!(p, vec![vec![2.0]; 5]);
    }

    #[test]
    fn projectile_verification_box() {
        let b =
            Bounds::from_intervals(&[(0.005, 5.0), (0.005, 0.1), (0.0, 2.0), (10.0, 120.0)])
                .unwrap();
        let p = lhs_sample(&b, 10, RngSpec::seeded(2024)).unwrap();
        assert_eq!(p.len(), 10);
        assert!(p.iter().all(|x| b.contains(x)));
        for i in 0..4 {
            assert_eq!(strata(&p, &b, i), (0..10).collect::<Vec<_>>());
        }
    }

    proptest! {
        #[test]
        fn every_column_is_a_permutation(n in 1usize..60, seed in any::<u64>(),
                                         lo in -10.0f64..10.0, w in 0.1f64..100.0) {
            let b = Bounds::from_intervals(&[(lo, lo + w), (0.0, 1.0), (-w, 0.0)]).unwrap();
            let p = lhs_sample(&b, n, RngSpec::seeded(seed)).unwrap();
            prop_assert_eq!(p.len(), n);
            for x in &p {
                prop_assert!(b.contains(x));
            }
            for i in 0..3 {
                prop_assert_eq!(strata(&p, &b, i), (0..n).collect::<Vec<_>>());
            }
        }
    }
}
