//! Named sub-regions of a chart as decidable predicates.

use serde::{Deserialize, Serialize};

/// One atomic predicate on a point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum Clause {
    /// `lo <= p[coord] <= hi`.
    Within { coord: usize, lo: f64, hi: f64 },
    /// `p[coord] <= at_most`.
    AtMost { coord: usize, value: f64 },
    /// `p[coord] >= value`.
    AtLeast { coord: usize, value: f64 },
    /// Euclidean norm of the listed coordinates is at most `radius`.
    NormAtMost { coords: Vec<usize>, radius: f64 },
    /// Euclidean norm of the listed coordinates is at least `radius`.
    NormAtLeast { coords: Vec<usize>, radius: f64 },
}

impl Clause {
    pub fn holds(&self, p: &[f64]) -> bool {
        let norm = |cs: &[usize]| cs.iter().map(|&i| p[i] * p[i]).sum::<f64>().sqrt();
        match self {
            Clause::Within { coord, lo, hi } => *lo <= p[*coord] && p[*coord] <= *hi,
            Clause::AtMost { coord, value } => p[*coord] <= *value,
            Clause::AtLeast { coord, value } => p[*coord] >= *value,
            Clause::NormAtMost { coords, radius } => norm(coords) <= *radius,
            Clause::NormAtLeast { coords, radius } => norm(coords) >= *radius,
        }
    }
}

/// A union of conjunctions of clauses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub any_of: Vec<Vec<Clause>>,
}

impl Region {
    pub fn new(name: impl Into<String>, any_of: Vec<Vec<Clause>>) -> Region {
        Region { name: name.into(), any_of }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.any_of.iter().any(|all| all.iter().all(|c| c.holds(p)))
    }
}

/// The set a plug traps, for closest-approach measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrappedSet {
    /// Level sets `p[coord] = v` for each listed value.
    Levels { coord: usize, values: Vec<f64> },
    /// Finitely many points in the listed coordinates (times the remaining factors).
    Points { coords: Vec<usize>, points: Vec<Vec<f64>> },
}

impl TrappedSet {
    pub fn distance(&self, p: &[f64]) -> f64 {
        match self {
            TrappedSet::Levels { coord, values } => values.iter().map(|v| (p[*coord] - v).abs()).fold(f64::INFINITY, f64::min),
            TrappedSet::Points { coords, points } => points
                .iter()
                .map(|q| coords.iter().zip(q).map(|(&i, qi)| (p[i] - qi).powi(2)).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min),
        }
    }
}

/// Entry/exit geometry of a plug.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlugSpec {
    /// Flow-direction coordinate (`z`).
    pub axis: usize,
    pub entry: f64,
    pub exit: f64,
    /// The two entry-face coordinates swept by a matched-ends scan.
    pub scan: [usize; 2],
    pub trapped: TrappedSet,
    /// Entry positions expected to be trapped, if that set has positive measure.
    pub window: Option<Region>,
    /// Position of the mirror seam along the axis.
    pub seam: f64,
    /// Region where `X = d/dz` and `alpha = dz` hold exactly.
    pub collar: Region,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unions_of_conjunctions() {
        let r = Region::new(
            "collar",
            vec![
                vec![Clause::AtMost { coord: 0, value: -1.0 }],
                vec![
                    Clause::Within {
                        coord: 0,
                        lo: 0.0,
                        hi: 1.0,
                    },
                    Clause::NormAtLeast {
                        coords: vec![1, 2],
                        radius: 1.0,
                    },
                ],
            ],
        );
        assert!(r.contains(&[-2.0, 0.0, 0.0]));
        assert!(r.contains(&[0.5, 0.6, 0.8]));
        assert!(!r.contains(&[0.5, 0.6, 0.7]));
        assert!(!r.contains(&[1.5, 5.0, 5.0]));
    }

    #[test]
    fn trapped_set_distances() {
        let levels = TrappedSet::Levels {
            coord: 0,
            values: vec![-1.0, 1.0],
        };
        assert_eq!(levels.distance(&[-0.75, 9.0]), 0.25);
        let pts = TrappedSet::Points {
            coords: vec![1, 2],
            points: vec![vec![0.0, 0.0], vec![3.0, 4.0]],
        };
        assert_eq!(pts.distance(&[7.0, 3.0, 0.0]), 3.0);
    }
}
