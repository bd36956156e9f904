//! Temporal aggregation of per-slot sparse estimates that share one grid.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{RangeEntry, RangeReport};
use crate::spectrum::{Geometry, GeometryMode, SPEED_OF_LIGHT};
use crate::sparse::{CirEntry, SparseCir};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationMode {
    /// Complex mean; for scenes whose path phases are stable across slots.
    #[default]
    Static,
    /// Mean of magnitudes; survives random per-slot phases.
    Dynamic,
}

/// How the per-point mean is accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationRule {
    /// Divide by the number of slots in which the point appeared.
    #[default]
    CountMean,
    /// `chi <- ((n - 1) chi + a) / n` with `n` the global slot index
    /// (1-based), applied only in slots where the point appears.
    SlotIndexRecursion,
    /// Divide by the window length `N`: a point missing from a slot counts as zero.
    WindowMean,
}

fn value(e: &CirEntry, mode: AggregationMode) -> Complex64 {
    match mode {
        AggregationMode::Static => e.amplitude,
        AggregationMode::Dynamic => Complex64::new(e.amplitude.norm(), 0.0),
    }
}

/// Aggregates `N` estimates on a shared grid and keeps the `l_out` strongest
/// grid points.
pub fn aggregate(cirs: &[SparseCir], mode: AggregationMode, rule: AggregationRule, l_out: usize) -> Result<SparseCir> {
    let first = cirs.first().ok_or(Error::Empty("aggregation window is empty"))?;
    if cirs.iter().any(|c| !c.same_grid(first)) {
        return Err(Error::GridMismatch);
    }

    // grid index -> (accumulator, appearance count)
    let mut acc: BTreeMap<usize, (Complex64, usize)> = BTreeMap::new();
    for (n, cir) in cirs.iter().enumerate() {
        for e in &cir.entries {
            let v = value(e, mode);
            let slot = acc.entry(e.grid_index).or_insert((Complex64::new(0.0, 0.0), 0));
            slot.1 += 1;
            match rule {
                AggregationRule::CountMean | AggregationRule::WindowMean => slot.0 += v,
                AggregationRule::SlotIndexRecursion => {
                    let n = (n + 1) as f64;
                    slot.0 = (slot.0 * (n - 1.0) + v) / n;
                }
            }
        }
    }
    let window = cirs.len() as f64;
    let peak = cirs
        .iter()
        .flat_map(|c| c.entries.iter())
        .map(|e| e.amplitude.norm())
        .fold(0.0, f64::max);

    let mut points: Vec<(usize, Complex64)> = acc
        .into_iter()
        .map(|(q, (sum, count))| {
            let chi = match rule {
                AggregationRule::CountMean => sum / count as f64,
                AggregationRule::WindowMean => sum / window,
                AggregationRule::SlotIndexRecursion => sum,
            };
            (q, chi)
        })
        .filter(|(_, chi)| chi.norm() > 1e-12 * peak)
        .collect();
    // Strongest first; equal strengths keep the smaller delay (grid indices
    // increase with delay).
    points.sort_by(|a, b| b.1.norm().total_cmp(&a.1.norm()).then(a.0.cmp(&b.0)));
    points.truncate(l_out);

    let candidates = first.grid.candidates();
    let mut entries: Vec<CirEntry> = points
        .into_iter()
        .map(|(q, chi)| CirEntry {
            delay: candidates[q],
            amplitude: chi,
            grid_index: q,
        })
        .collect();
    entries.sort_by(|a, b| a.delay.total_cmp(&b.delay));

    Ok(SparseCir {
        entries,
        grid: first.grid.clone(),
        residual_ratio: cirs.iter().map(|c| c.residual_ratio).sum::<f64>() / window,
        residual_history: Vec::new(),
        converged: cirs.iter().all(|c| c.converged),
        rank_deficient: cirs.iter().any(|c| c.rank_deficient),
    })
}

/// Median per-slot path count, the default `L_out`.
pub fn median_path_count(cirs: &[SparseCir]) -> usize {
    let mut counts: Vec<usize> = cirs.iter().map(SparseCir::len).collect();
    if counts.is_empty() {
        return 0;
    }
    counts.sort_unstable();
    counts[(counts.len() - 1) / 2]
}

/// Ranges relative to the earliest aggregated path:
/// `c (tau - tau_1) / 2` mono-static, `c (tau - tau_1)` bi-static.
pub fn aggregate_ranges(agg: &SparseCir, geometry: &Geometry, slot: usize) -> Result<RangeReport> {
    let tau_1 = agg
        .entries
        .iter()
        .map(|e| e.delay)
        .min_by(f64::total_cmp)
        .ok_or(Error::Empty("aggregated estimate has no paths"))?;
    let scale = match geometry.mode {
        GeometryMode::MonoStatic => SPEED_OF_LIGHT / 2.0,
        GeometryMode::BiStatic => SPEED_OF_LIGHT,
    };
    let entries = agg
        .entries
        .iter()
        .map(|e| RangeEntry {
            range_m: scale * (e.delay - tau_1),
            amplitude: e.amplitude,
            delay: e.delay,
            negative: false,
        })
        .collect();
    Ok(RangeReport::from_entries(slot, entries, *geometry))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::delays_to_ranges;
    use crate::sparse::DelayGrid;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn grid() -> Arc<DelayGrid> {
        Arc::new(DelayGrid::from_lattice(1e6, 1000, (0..50).collect()).unwrap())
    }

    fn cir(grid: &Arc<DelayGrid>, entries: &[(usize, Complex64)]) -> SparseCir {
        SparseCir {
            entries: entries
                .iter()
                .map(|&(q, a)| CirEntry {
                    delay: grid.candidates()[q],
                    amplitude: a,
                    grid_index: q,
                })
                .collect(),
            ..SparseCir::empty(grid.clone())
        }
    }

    #[test]
    fn single_slot_keeps_top_entries() {
        let g = grid();
        let x = cir(&g, &[(3, c(1.0, 0.0)), (7, c(0.0, 3.0)), (9, c(0.5, 0.0))]);
        let out = aggregate(&[x], AggregationMode::Static, AggregationRule::CountMean, 2).unwrap();
        let idx: Vec<usize> = out.entries.iter().map(|e| e.grid_index).collect();
        assert_eq!(idx, vec![3, 7]);
        assert_eq!(out.entries[1].amplitude, c(0.0, 3.0));
    }

    #[test]
    fn dynamic_mean_of_magnitudes() {
        let g = grid();
        let a = cir(&g, &[(4, c(2.0, 0.0))]);
        let b = cir(&g, &[(4, c(0.0, -4.0))]);
        let out = aggregate(&[a, b], AggregationMode::Dynamic, AggregationRule::CountMean, 1).unwrap();
        assert!((out.entries[0].amplitude - c(3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn opposite_phases_cancel_only_in_static_mode() {
        let g = grid();
        let a = cir(&g, &[(4, c(1.0, 0.0))]);
        let b = cir(&g, &[(4, c(-1.0, 0.0))]);
        let window = [a, b];
        let st = aggregate(&window, AggregationMode::Static, AggregationRule::CountMean, 1).unwrap();
        assert!(st.is_empty());
        let dy = aggregate(&window, AggregationMode::Dynamic, AggregationRule::CountMean, 1).unwrap();
        assert_eq!(dy.len(), 1);
        assert!((dy.entries[0].amplitude - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rules_differ_when_points_skip_slots() {
        let g = grid();
        let window = [cir(&g, &[]), cir(&g, &[(2, c(4.0, 0.0))])];
        let count = aggregate(&window, AggregationMode::Static, AggregationRule::CountMean, 1).unwrap();
        let literal = aggregate(&window, AggregationMode::Static, AggregationRule::SlotIndexRecursion, 1).unwrap();
        let mean = aggregate(&window, AggregationMode::Static, AggregationRule::WindowMean, 1).unwrap();
        assert_eq!(count.entries[0].amplitude, c(4.0, 0.0));
        assert_eq!(literal.entries[0].amplitude, c(2.0, 0.0));
        assert_eq!(mean.entries[0].amplitude, c(2.0, 0.0));
    }

    #[test]
    fn ties_prefer_smaller_delay() {
        let g = grid();
        let x = cir(&g, &[(8, c(1.0, 0.0)), (5, c(0.0, 1.0))]);
        let out = aggregate(&[x], AggregationMode::Static, AggregationRule::CountMean, 1).unwrap();
        assert_eq!(out.entries[0].grid_index, 5);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = cir(&grid(), &[(1, c(1.0, 0.0))]);
        let other = Arc::new(DelayGrid::from_lattice(1e6, 1000, (0..49).collect()).unwrap());
        let b = cir(&other, &[(1, c(1.0, 0.0))]);
        assert!(matches!(
            aggregate(&[a, b], AggregationMode::Static, AggregationRule::CountMean, 1),
            Err(Error::GridMismatch)
        ));
        assert!(aggregate(&[], AggregationMode::Static, AggregationRule::CountMean, 1).is_err());
    }

    #[test]
    fn relative_ranges() {
        let g = Arc::new(DelayGrid::new(vec![10e-9, 20e-9]).unwrap());
        let x = cir(&g, &[(0, c(1.0, 0.0)), (1, c(1.0, 0.0))]);
        let mono = aggregate_ranges(&x, &Geometry::mono_static(), 0).unwrap();
        assert_eq!(mono.entries[0].range_m, 0.0);
        assert!((mono.entries[1].range_m - SPEED_OF_LIGHT * 10e-9 / 2.0).abs() < 1e-12);
        let bi = aggregate_ranges(&x, &Geometry::bi_static(2.0, 1.0).unwrap(), 0).unwrap();
        assert!((bi.entries[1].range_m - 2.99792458).abs() < 1e-9);
        let single = cir(&g, &[(1, c(1.0, 0.0))]);
        assert_eq!(aggregate_ranges(&single, &Geometry::mono_static(), 0).unwrap().ranges(), vec![0.0]);
        assert!(aggregate_ranges(&cir(&g, &[]), &Geometry::mono_static(), 0).is_err());
    }

    #[test]
    fn median_count() {
        let g = grid();
        let w = [
            cir(&g, &[(1, c(1.0, 0.0))]),
            cir(&g, &[(1, c(1.0, 0.0)), (2, c(1.0, 0.0)), (3, c(1.0, 0.0))]),
            cir(&g, &[(1, c(1.0, 0.0)), (2, c(1.0, 0.0))]),
        ];
        assert_eq!(median_path_count(&w), 2);
    }

    fn arb_window() -> impl Strategy<Value = Vec<Vec<(usize, f64, f64)>>> {
        prop::collection::vec(prop::collection::vec((0usize..50, -2.0f64..2.0, -2.0f64..2.0), 0..6), 1..8)
    }

    fn build(g: &Arc<DelayGrid>, raw: &[Vec<(usize, f64, f64)>]) -> Vec<SparseCir> {
        raw.iter()
            .map(|slot| {
                let mut seen = std::collections::BTreeSet::new();
                let entries: Vec<(usize, Complex64)> = slot
                    .iter()
                    .filter(|e| seen.insert(e.0))
                    .map(|&(q, re, im)| (q, c(re, im)))
                    .collect();
                cir(g, &entries)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn dynamic_mode_ignores_slot_order(raw in arb_window(), l_out in 1usize..6, rot in 0usize..8) {
            let g = grid();
            let window = build(&g, &raw);
            let mut shuffled = window.clone();
            let len = shuffled.len();
            shuffled.rotate_left(rot % len);
            shuffled.reverse();
            let a = aggregate(&window, AggregationMode::Dynamic, AggregationRule::CountMean, l_out).unwrap();
            let b = aggregate(&shuffled, AggregationMode::Dynamic, AggregationRule::CountMean, l_out).unwrap();
            prop_assert_eq!(a.entries.len(), b.entries.len());
            for (x, y) in a.entries.iter().zip(&b.entries) {
                prop_assert_eq!(x.grid_index, y.grid_index);
                prop_assert!((x.amplitude - y.amplitude).norm() < 1e-12);
            }
        }

        #[test]
        fn output_is_a_bounded_subset_of_the_grid(raw in arb_window(), l_out in 0usize..6, dynamic in any::<bool>()) {
            let g = grid();
            let window = build(&g, &raw);
            let mode = if dynamic { AggregationMode::Dynamic } else { AggregationMode::Static };
            let out = aggregate(&window, mode, AggregationRule::CountMean, l_out).unwrap();
            prop_assert!(out.len() <= l_out);
            for e in &out.entries {
                prop_assert_eq!(g.candidates()[e.grid_index], e.delay);
            }
        }

        #[test]
        fn relative_ranges_shift_absolute_ones(delays in prop::collection::btree_set(0usize..50, 1..6), bi in any::<bool>()) {
            let g = grid();
            let entries: Vec<(usize, Complex64)> = delays.iter().map(|&q| (q, c(1.0, 0.0))).collect();
            let x = cir(&g, &entries);
            let geometry = if bi { Geometry::bi_static(4.0, 1.2).unwrap() } else { Geometry::mono_static() };
            let rel = aggregate_ranges(&x, &geometry, 0).unwrap();
            let abs = delays_to_ranges(&x, &geometry, 0);
            let shift = abs.entries[0].range_m;
            for (r, a) in rel.entries.iter().zip(&abs.entries) {
                prop_assert!((r.range_m - (a.range_m - shift)).abs() < 1e-9);
            }
        }
    }
}
