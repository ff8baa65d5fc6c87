//! Finite unions of open balls and open axis-aligned cubes.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::special::unit_ball_volume;

/// A set with exact coordinate membership and computable volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    /// The empty set.
    Empty,
    /// Open ball `|x - center| < radius`.
    Ball { center: Vec<f64>, radius: f64 },
    /// Open cube with the given side length, `|x_k - center_k| < side / 2`.
    Cube { center: Vec<f64>, side: f64 },
    /// Union of the listed cells of the dyadic subdivision of `cube` into
    /// `2^level` cells per axis. `cells` holds row-major cell indices.
    Dyadic {
        center: Vec<f64>,
        side: f64,
        level: u32,
        cells: Vec<u64>,
    },
    /// Finite union. Components are assumed pairwise disjoint for volume.
    Union(Vec<Region>),
}

impl Region {
    pub fn ball(center: &[f64], radius: f64) -> Self {
        Region::Ball { center: center.to_vec(), radius }
    }

    pub fn cube(center: &[f64], side: f64) -> Self {
        Region::Cube { center: center.to_vec(), side }
    }

    /// Spatial dimension, `None` for the empty set or an empty union.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Region::Empty => None,
            Region::Ball { center, .. } | Region::Cube { center, .. } | Region::Dyadic { center, .. } => {
                Some(center.len())
            }
            Region::Union(parts) => parts.iter().find_map(Region::dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Region::Empty => Ok(()),
            Region::Ball { center, radius } => {
                ensure!(!center.is_empty(), Domain, "ball center has no coordinates");
                ensure!(*radius > 0.0 && radius.is_finite(), Domain, "ball radius must be positive, got {radius}");
                Ok(())
            }
            Region::Cube { center, side } => {
                ensure!(!center.is_empty(), Domain, "cube center has no coordinates");
                ensure!(*side > 0.0 && side.is_finite(), Domain, "cube side must be positive, got {side}");
                Ok(())
            }
            Region::Dyadic { center, side, level, cells } => {
                ensure!(!center.is_empty(), Domain, "dyadic center has no coordinates");
                ensure!(*side > 0.0, Domain, "dyadic side must be positive");
                ensure!(*level <= 20, Domain, "dyadic level {level} too deep");
                let total = 1u64 << (*level as u64 * center.len() as u64);
                ensure!(cells.iter().all(|&c| c < total), Domain, "dyadic cell index out of range");
                ensure!(cells.windows(2).all(|w| w[0] < w[1]), Domain, "dyadic cells must be sorted and unique");
                Ok(())
            }
            Region::Union(parts) => {
                let d = self.dim();
                for p in parts {
                    p.validate()?;
                    ensure!(p.dim().is_none() || p.dim() == d, Domain, "union mixes dimensions");
                }
                Ok(())
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Region::Empty => true,
            Region::Dyadic { cells, .. } => cells.is_empty(),
            Region::Union(parts) => parts.iter().all(Region::is_empty),
            _ => false,
        }
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Empty => false,
            Region::Ball { center, radius } => {
                let r2: f64 = center.iter().zip(x).map(|(c, v)| (v - c) * (v - c)).sum();
                r2 < radius * radius
            }
            Region::Cube { center, side } => {
                let half = 0.5 * side;
                center.iter().zip(x).all(|(c, v)| (v - c).abs() < half)
            }
            Region::Dyadic { center, side, level, cells } => match dyadic_cell(center, *side, *level, x) {
                Some(idx) => cells.binary_search(&idx).is_ok(),
                None => false,
            },
            Region::Union(parts) => parts.iter().any(|p| p.contains(x)),
        }
    }

    /// Lebesgue measure. Union components are summed.
    pub fn volume(&self) -> f64 {
        match self {
            Region::Empty => 0.0,
            Region::Ball { center, radius } => unit_ball_volume(center.len()) * radius.powi(center.len() as i32),
            Region::Cube { center, side } => side.powi(center.len() as i32),
            Region::Dyadic { center, side, level, cells } => {
                let cell = side / (1u64 << level) as f64;
                cells.len() as f64 * cell.powi(center.len() as i32)
            }
            Region::Union(parts) => parts.iter().map(Region::volume).sum(),
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Region::Empty => None,
            Region::Ball { center, radius } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            Region::Cube { center, side } | Region::Dyadic { center, side, .. } => Some((
                center.iter().map(|c| c - 0.5 * side).collect(),
                center.iter().map(|c| c + 0.5 * side).collect(),
            )),
            Region::Union(parts) => parts.iter().filter_map(Region::bounding_box).reduce(|(lo, hi), (l2, h2)| {
                (
                    lo.iter().zip(&l2).map(|(a, b)| a.min(*b)).collect(),
                    hi.iter().zip(&h2).map(|(a, b)| a.max(*b)).collect(),
                )
            }),
        }
    }

    /// Conservative subset test: `true` guarantees `self ⊆ other`.
    /// A union on the right-hand side is only matched component-wise.
    pub fn is_subset_of(&self, other: &Region) -> bool {
        const TOL: f64 = 1e-12;
        if self.is_empty() {
            return true;
        }
        match (self, other) {
            (Region::Union(parts), _) => parts.iter().all(|p| p.is_subset_of(other)),
            (Region::Dyadic { center, side, level, cells }, _) => {
                dyadic_cubes(center, *side, *level, cells).iter().all(|c| c.is_subset_of(other))
            }
            (_, Region::Empty) => false,
            (_, Region::Union(parts)) => parts.iter().any(|p| self.is_subset_of(p)),
            (_, Region::Dyadic { center, side, level, cells }) => {
                if cells.len() as u64 == 1u64 << (*level as u64 * center.len() as u64) {
                    self.is_subset_of(&Region::cube(center, *side))
                } else {
                    dyadic_cubes(center, *side, *level, cells).iter().any(|c| self.is_subset_of(c))
                }
            }
            (Region::Ball { center: c1, radius: r1 }, Region::Ball { center: c2, radius: r2 }) => {
                dist(c1, c2) + r1 <= r2 + TOL
            }
            (Region::Ball { center: c1, radius: r1 }, Region::Cube { center: c2, side }) => {
                c1.iter().zip(c2).all(|(a, b)| (a - b).abs() + r1 <= 0.5 * side + TOL)
            }
            (Region::Cube { center: c1, side }, Region::Ball { center: c2, radius }) => {
                let far2: f64 = c1.iter().zip(c2).map(|(a, b)| ((a - b).abs() + 0.5 * side).powi(2)).sum();
                far2.sqrt() <= radius + TOL
            }
            (Region::Cube { center: c1, side: s1 }, Region::Cube { center: c2, side: s2 }) => {
                c1.iter().zip(c2).all(|(a, b)| (a - b).abs() + 0.5 * s1 <= 0.5 * s2 + TOL)
            }
            (Region::Empty, _) => true,
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Row-major dyadic cell index of `x`, or `None` outside the (open) cube.
#[inline]
fn dyadic_cell(center: &[f64], side: f64, level: u32, x: &[f64]) -> Option<u64> {
    let n = 1u64 << level;
    let mut idx = 0u64;
    for (c, v) in center.iter().zip(x) {
        let rel = (v - c) / side + 0.5;
        if !(rel > 0.0 && rel < 1.0) {
            return None;
        }
        let k = ((rel * n as f64) as u64).min(n - 1);
        idx = idx * n + k;
    }
    Some(idx)
}

fn dyadic_cubes(center: &[f64], side: f64, level: u32, cells: &[u64]) -> Vec<Region> {
    let n = 1u64 << level;
    let cell = side / n as f64;
    let d = center.len();
    cells
        .iter()
        .map(|&idx| {
            let mut rem = idx;
            let mut c = vec![0.0; d];
            for k in (0..d).rev() {
                let j = rem % n;
                rem /= n;
                c[k] = center[k] - 0.5 * side + (j as f64 + 0.5) * cell;
            }
            Region::cube(&c, cell)
        })
        .collect()
}

/// Build a dyadic union, sorting and deduplicating the cell list.
pub fn dyadic_union(center: &[f64], side: f64, level: u32, mut cells: Vec<u64>) -> Region {
    cells.sort_unstable();
    cells.dedup();
    Region::Dyadic { center: center.to_vec(), side, level, cells }
}
