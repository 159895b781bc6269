//! Deterministic low-discrepancy sample sets.

use serde::{Deserialize, Serialize};

use crate::chart::{Chart, FactorKind};

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Van der Corput radical inverse of `k` in `base`.
pub fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while k > 0 {
        r += (k % base) as f64 * f;
        k /= base;
        f *= inv;
    }
    r
}

/// The `k`-th point (0-based) of the seed-offset Halton sequence in the unit cube.
pub fn halton(k: u64, seed: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "Halton sampling supports up to {} dimensions", PRIMES.len());
    let idx = k + 1 + seed;
    PRIMES[..dim].iter().map(|&b| radical_inverse(idx, b)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub count: usize,
    pub seed: u64,
    /// Extra points placed on interval faces of the sampling box.
    pub boundary: usize,
}

impl SamplePlan {
    pub fn new(count: usize, seed: u64) -> SamplePlan {
        SamplePlan {
            count,
            seed,
            boundary: count / 10,
        }
    }

    pub fn scheme(&self) -> &'static str {
        "halton+faces"
    }

    pub fn total(&self) -> usize {
        self.count + self.boundary
    }
}

/// Points of `plan` inside `bounds` (one `(lo, hi)` per chart factor).
/// Boundary points cycle through the interval factors, alternating faces.
pub fn sample_box(chart: &Chart, bounds: &[(f64, f64)], plan: &SamplePlan) -> Vec<Vec<f64>> {
    let dim = chart.dim();
    assert_eq!(bounds.len(), dim);
    let scale = |u: &[f64]| -> Vec<f64> { u.iter().zip(bounds).map(|(t, (lo, hi))| lo + (hi - lo) * t).collect() };
    let mut pts: Vec<Vec<f64>> = (0..plan.count as u64).map(|k| scale(&halton(k, plan.seed, dim))).collect();
    let faces: Vec<usize> = (0..dim)
        .filter(|&i| matches!(chart.factor(i).kind, FactorKind::Interval { .. }))
        .collect();
    if !faces.is_empty() {
        for k in 0..plan.boundary {
            let mut p = scale(&halton(plan.count as u64 + k as u64, plan.seed, dim));
            let f = faces[k % faces.len()];
            p[f] = if (k / faces.len()).is_multiple_of(2) {
                bounds[f].0
            } else {
                bounds[f].1
            };
            pts.push(p);
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Factor;

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert_eq!(radical_inverse(5, 3), 2.0 / 3.0 + 1.0 / 9.0);
    }

    #[test]
    fn halton_fills_the_cube_evenly() {
        let n = 4096;
        let mut counts = [0usize; 4];
        for k in 0..n {
            let p = halton(k, 0, 2);
            counts[(p[0] * 2.0) as usize * 2 + (p[1] * 2.0) as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 - n as f64 / 4.0).abs() < 8.0, "{counts:?}");
        }
    }

    #[test]
    fn samples_respect_bounds_and_hit_faces() {
        let chart = Chart::new(vec![Factor::periodic("t", 1.0), Factor::interval("r", 0.0, 1.0)]).unwrap();
        let plan = SamplePlan::new(100, 7);
        let pts = sample_box(&chart, &[(0.0, 1.0), (1e-3, 1.0)], &plan);
        assert_eq!(pts.len(), plan.total());
        assert!(pts.iter().all(|p| p[1] >= 1e-3 && p[1] <= 1.0));
        assert!(pts.iter().any(|p| p[1] == 1e-3));
        assert!(pts.iter().any(|p| p[1] == 1.0));
        assert_eq!(pts, sample_box(&chart, &[(0.0, 1.0), (1e-3, 1.0)], &plan));
    }
}
