//! Cost-quality Pareto fronts, hypervolume scores, and bootstrap bands.
//!
//! Points are `(cost, value)` pairs where both coordinates are minimized:
//! cost is a sampler's evaluation count, value is an error metric. Fronts
//! are step functions, so "value at cost c" means the best value achievable
//! at budget c or less.

use crate::math::percentile;
use crate::rng::derive_rng;
use rand::Rng;

/// Reference corner for normalized hypervolume, slightly outside the unit
/// box so boundary points still dominate positive area.
const HV_REFERENCE: (f64, f64) = (1.1, 1.1);

/// Non-dominated subset under (min cost, min value), sorted by cost
/// ascending, value strictly descending. Duplicate points are collapsed.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<(f64, f64)> = points.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite pareto point"));
    let mut front: Vec<(f64, f64)> = Vec::new();
    for &(c, v) in &sorted {
        match front.last() {
            Some(&(lc, lv)) => {
                if v < lv {
                    if c > lc {
                        front.push((c, v));
                    } else {
                        // same cost, strictly better value
                        *front.last_mut().unwrap() = (c, v);
                    }
                }
            }
            None => front.push((c, v)),
        }
    }
    front
}

/// Step-function evaluation: best value on the front at budget `cost` or
/// less. Budgets below the cheapest front point clamp to that point.
pub fn front_value_at(front: &[(f64, f64)], cost: f64) -> f64 {
    assert!(!front.is_empty());
    let mut value = front[0].1;
    for &(c, v) in front {
        if c <= cost {
            value = v;
        } else {
            break;
        }
    }
    value
}

/// Area dominated by `front` relative to `reference` under minimization.
/// `front` must be sorted by cost ascending with value descending (the
/// shape `pareto_front` returns).
pub fn hypervolume(front: &[(f64, f64)], reference: (f64, f64)) -> f64 {
    let mut total = 0.0;
    for (i, &(c, v)) in front.iter().enumerate() {
        let next_c = front.get(i + 1).map_or(reference.0, |p| p.0);
        let width = (next_c.min(reference.0) - c).max(0.0);
        let height = (reference.1 - v).max(0.0);
        total += width * height;
    }
    total
}

/// Hypervolume ratio of each method's front against the combined front.
///
/// All points are first normalized to the unit box using the global
/// per-objective range over every method; a degenerate range maps that
/// coordinate to the constant 0.5. Ratios are in [0, 1] and a method whose
/// front coincides with the combined front scores exactly 1.
pub fn hypervolume_ratios(methods: &[Vec<(f64, f64)>]) -> Vec<f64> {
    let all: Vec<(f64, f64)> = methods.iter().flatten().copied().collect();
    assert!(!all.is_empty(), "hypervolume over no points");
    let (min_c, max_c) = min_max(all.iter().map(|p| p.0));
    let (min_v, max_v) = min_max(all.iter().map(|p| p.1));
    let norm = |p: (f64, f64)| {
        (
            normalize_coord(p.0, min_c, max_c),
            normalize_coord(p.1, min_v, max_v),
        )
    };
    let combined = hypervolume(&pareto_front(&all.iter().map(|&p| norm(p)).collect::<Vec<_>>()), HV_REFERENCE);
    methods
        .iter()
        .map(|pts| {
            assert!(!pts.is_empty(), "method without points");
            let normed: Vec<(f64, f64)> = pts.iter().map(|&p| norm(p)).collect();
            hypervolume(&pareto_front(&normed), HV_REFERENCE) / combined
        })
        .collect()
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

fn normalize_coord(x: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (x - lo) / (hi - lo)
    } else {
        0.5
    }
}

/// Pointwise median front with 5th and 95th percentile bands, all step
/// functions on the shared `grid` of costs.
pub struct BandedFront {
    pub grid: Vec<f64>,
    pub median: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Bootstrap uncertainty bands for a cost-quality front.
///
/// `configs` groups replicate runs of the same configuration. Each
/// iteration resamples every configuration's replicates with replacement,
/// averages them into one point per configuration, and takes the Pareto
/// front of those points. Fronts are then compared pointwise on the pooled
/// grid of every front's cost coordinates.
pub fn bootstrap_front(
    configs: &[Vec<(f64, f64)>],
    iterations: usize,
    seed: u64,
) -> BandedFront {
    assert!(iterations > 0);
    assert!(configs.iter().all(|c| !c.is_empty()), "config without runs");
    let mut rng = derive_rng(seed, &[0x626f_6f74]);
    let mut fronts: Vec<Vec<(f64, f64)>> = Vec::with_capacity(iterations);
    for iter in 0..iterations {
        let mut points = Vec::with_capacity(configs.len());
        for replicates in configs {
            let point = if iterations == 1 {
                // a single iteration reports the plain front of the means
                mean_point(replicates)
            } else {
                let _ = iter;
                let resampled: Vec<(f64, f64)> = (0..replicates.len())
                    .map(|_| replicates[rng.random_range(0..replicates.len())])
                    .collect();
                mean_point(&resampled)
            };
            points.push(point);
        }
        fronts.push(pareto_front(&points));
    }
    let mut grid: Vec<f64> = fronts.iter().flatten().map(|p| p.0).collect();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    let mut median = Vec::with_capacity(grid.len());
    let mut lo = Vec::with_capacity(grid.len());
    let mut hi = Vec::with_capacity(grid.len());
    for &c in &grid {
        let values: Vec<f64> = fronts.iter().map(|f| front_value_at(f, c)).collect();
        median.push(percentile(&values, 0.5));
        lo.push(percentile(&values, 0.05));
        hi.push(percentile(&values, 0.95));
    }
    BandedFront {
        grid,
        median,
        lo,
        hi,
    }
}

fn mean_point(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let c = points.iter().map(|p| p.0).sum::<f64>() / n;
    let v = points.iter().map(|p| p.1).sum::<f64>() / n;
    (c, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dominates(p: (f64, f64), q: (f64, f64)) -> bool {
        p.0 <= q.0 && p.1 <= q.1 && (p.0 < q.0 || p.1 < q.1)
    }

    #[test]
    fn front_matches_dominance_scan() {
        let mut rng = derive_rng(77, &[1]);
        for _ in 0..20 {
            let points: Vec<(f64, f64)> = (0..25)
                .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
                .collect();
            let front = pareto_front(&points);
            // oracle: a point is on the front iff nothing dominates it
            let expected: Vec<(f64, f64)> = {
                let mut keep: Vec<(f64, f64)> = points
                    .iter()
                    .copied()
                    .filter(|&p| !points.iter().any(|&q| dominates(q, p)))
                    .collect();
                keep.sort_by(|a, b| a.partial_cmp(b).unwrap());
                keep.dedup();
                keep
            };
            assert_eq!(front, expected);
            for w in front.windows(2) {
                assert!(w[0].0 < w[1].0 && w[0].1 > w[1].1);
            }
        }
    }

    #[test]
    fn adding_dominated_points_changes_nothing() {
        let base = vec![(1.0, 5.0), (3.0, 2.0), (7.0, 1.0)];
        let front = pareto_front(&base);
        let mut padded = base.clone();
        padded.push((3.5, 2.5));
        padded.push((8.0, 1.0));
        padded.push((7.0, 4.0));
        assert_eq!(pareto_front(&padded), front);
    }

    #[test]
    fn step_evaluation_clamps_left() {
        let front = vec![(2.0, 5.0), (4.0, 3.0), (8.0, 1.0)];
        assert_relative_eq!(front_value_at(&front, 1.0), 5.0);
        assert_relative_eq!(front_value_at(&front, 2.0), 5.0);
        assert_relative_eq!(front_value_at(&front, 5.0), 3.0);
        assert_relative_eq!(front_value_at(&front, 100.0), 1.0);
    }

    #[test]
    fn hypervolume_of_the_ideal_point_fills_the_box() {
        let hv = hypervolume(&[(0.0, 0.0)], HV_REFERENCE);
        assert_relative_eq!(hv, 1.21, max_relative = 1e-12);
        let ratios = hypervolume_ratios(&[vec![(5.0, 5.0)]]);
        // single method, single point: degenerate ranges normalize to 0.5
        let expected = (1.1 - 0.5) * (1.1 - 0.5) / ((1.1 - 0.5) * (1.1 - 0.5));
        assert_relative_eq!(ratios[0], expected);
    }

    #[test]
    fn hypervolume_staircase_matches_hand_decomposition() {
        let front = vec![(0.2, 0.5), (0.6, 0.1)];
        // slabs: [0.2, 0.6) at height 1.1 - 0.5, then [0.6, 1.1) at 1.1 - 0.1
        let by_hand = 0.4 * 0.6 + 0.5 * 1.0;
        assert_relative_eq!(hypervolume(&front, HV_REFERENCE), by_hand, max_relative = 1e-12);
        // inclusion-exclusion over the two rectangles agrees
        let rects = (1.1 - 0.2) * (1.1 - 0.5) + (1.1 - 0.6) * (1.1 - 0.1)
            - (1.1 - 0.6) * (1.1 - 0.5);
        assert_relative_eq!(hypervolume(&front, HV_REFERENCE), rects, max_relative = 1e-12);
    }

    #[test]
    fn hypervolume_grows_when_a_dominating_point_arrives() {
        let a = vec![(10.0, 8.0), (20.0, 4.0)];
        let mut b = a.clone();
        b.push((12.0, 2.0));
        let ratios = hypervolume_ratios(&[a.clone(), b.clone()]);
        assert!(ratios[1] > ratios[0]);
        assert_relative_eq!(ratios[1], 1.0, max_relative = 1e-12);
        // dominated additions leave the ratio fixed
        let mut c = a.clone();
        c.push((25.0, 9.0));
        let again = hypervolume_ratios(&[a, c]);
        assert_relative_eq!(again[0], again[1], max_relative = 1e-12);
    }

    #[test]
    fn degenerate_objective_ranges_stay_finite() {
        let ratios = hypervolume_ratios(&[vec![(3.0, 1.0)], vec![(3.0, 1.0)]]);
        assert_relative_eq!(ratios[0], 1.0);
        assert_relative_eq!(ratios[1], 1.0);
    }

    #[test]
    fn identical_replicates_collapse_the_bands() {
        let configs = vec![
            vec![(100.0, 5.0); 4],
            vec![(200.0, 3.0); 4],
            vec![(400.0, 1.0); 4],
        ];
        let banded = bootstrap_front(&configs, 50, 9);
        assert_eq!(banded.grid, vec![100.0, 200.0, 400.0]);
        for i in 0..banded.grid.len() {
            assert_relative_eq!(banded.lo[i], banded.median[i]);
            assert_relative_eq!(banded.hi[i], banded.median[i]);
        }
        assert_eq!(banded.median, vec![5.0, 3.0, 1.0]);
    }

    #[test]
    fn single_iteration_reports_the_plain_front_of_means() {
        let configs = vec![
            vec![(100.0, 4.0), (100.0, 6.0)],
            vec![(200.0, 2.0), (200.0, 4.0)],
        ];
        let banded = bootstrap_front(&configs, 1, 9);
        assert_eq!(banded.grid, vec![100.0, 200.0]);
        assert_eq!(banded.median, vec![5.0, 3.0]);
        assert_eq!(banded.lo, banded.median);
        assert_eq!(banded.hi, banded.median);
    }

    #[test]
    fn more_replicates_tighten_the_bands() {
        let mut rng = derive_rng(4242, &[2]);
        let mut noisy_config = |cost: f64, value: f64, n: usize| -> Vec<(f64, f64)> {
            (0..n)
                .map(|_| {
                    (
                        cost,
                        value + 0.5 * (rng.random::<f64>() - 0.5),
                    )
                })
                .collect()
        };
        let few = vec![
            noisy_config(100.0, 5.0, 3),
            noisy_config(200.0, 3.0, 3),
            noisy_config(400.0, 1.0, 3),
        ];
        let many = vec![
            noisy_config(100.0, 5.0, 24),
            noisy_config(200.0, 3.0, 24),
            noisy_config(400.0, 1.0, 24),
        ];
        let width = |b: &BandedFront| -> f64 {
            b.grid
                .iter()
                .enumerate()
                .map(|(i, _)| b.hi[i] - b.lo[i])
                .sum::<f64>()
                / b.grid.len() as f64
        };
        let w_few = width(&bootstrap_front(&few, 200, 9));
        let w_many = width(&bootstrap_front(&many, 200, 9));
        assert!(
            w_many < w_few * 0.8,
            "bands should tighten: few {w_few} many {w_many}"
        );
    }
}
