//! Relative timing/phase offset estimation between subsystems and the
//! compensation that makes their subbands mutually coherent.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectrum::{AnchorPolicy, FrequencyPlan, SubsystemSpec};
use crate::sparse::{CirEntry, SparseCir};
use crate::synth::{apply_offset, CfrSlice};
use crate::util::{energy, wrap_phase};

/// Points in the TO search (`2 xi / 100` spacing).
pub const TO_STEPS: usize = 101;
/// Points in the PO search (`pi / 100` spacing over `[0, 2pi)`).
pub const PO_STEPS: usize = 200;
/// Fraction of the strongest amplitude a path needs to qualify as anchor.
pub const ANCHOR_GATE: f64 = 0.5;

/// Estimated offsets of one subsystem relative to the reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceSolution {
    pub subsystem_id: usize,
    /// Estimated relative TO (s).
    pub to_hat: f64,
    /// Estimated PO (rad, `[0, 2pi)`).
    pub po_hat: f64,
    /// Objective at the returned point.
    pub cost: f64,
    /// TO initialization from the anchor delays (s).
    pub to_init: f64,
}

impl CoherenceSolution {
    pub fn identity(subsystem_id: usize) -> Self {
        Self {
            subsystem_id,
            to_hat: 0.0,
            po_hat: 0.0,
            cost: 0.0,
            to_init: 0.0,
        }
    }
}

/// Picks the anchor path out of a coarse estimate.
pub fn select_anchor(cir: &SparseCir, policy: AnchorPolicy) -> Result<CirEntry> {
    if cir.is_empty() {
        return Err(Error::NoAnchor);
    }
    let entry = match policy {
        AnchorPolicy::MinDelayMaxPower => {
            let peak = cir.entries.iter().map(|e| e.amplitude.norm()).fold(0.0, f64::max);
            cir.entries
                .iter()
                .filter(|e| e.amplitude.norm() >= ANCHOR_GATE * peak)
                .min_by(|a, b| a.delay.total_cmp(&b.delay))
        }
        AnchorPolicy::KnownDelay(delay) => cir
            .entries
            .iter()
            .min_by(|a, b| (a.delay - delay).abs().total_cmp(&(b.delay - delay).abs())),
    };
    entry.copied().ok_or(Error::NoAnchor)
}

/// Initial TO: the anchor delay difference.
pub fn init_to(anchor_i: f64, anchor_ref: f64) -> f64 {
    anchor_i - anchor_ref
}

/// `sum_k conj(a_k) b_k exp(j 2 pi k delta_f tau)`, with the rotating phasor
/// re-seeded periodically to bound drift.
fn shifted_correlation(prod: &[Complex64], delta_f: f64, tau: f64) -> Complex64 {
    const RESEED: usize = 1024;
    let theta = TAU * delta_f * tau;
    let step = Complex64::from_polar(1.0, theta);
    let mut acc = Complex64::new(0.0, 0.0);
    for (block, chunk) in prod.chunks(RESEED).enumerate() {
        let mut w = Complex64::from_polar(1.0, theta * (block * RESEED) as f64);
        for p in chunk {
            acc += p * w;
            w *= step;
        }
    }
    acc
}

/// Exhaustive search of `sum_k |H1_k - exp(-j phi) exp(j 2 pi k delta_f tau) Hi_k|^2`
/// over the TO/PO lattice around `to_init`.
///
/// Ties go to the smallest `|tau - to_init|`, then the smallest `phi`.
pub fn refine_offsets(
    subsystem_id: usize,
    model_ref: &[Complex64],
    model_i: &[Complex64],
    to_init: f64,
    xi: f64,
    plan: &FrequencyPlan,
) -> Result<CoherenceSolution> {
    if model_ref.len() != model_i.len() {
        return Err(Error::LengthMismatch {
            expected: model_ref.len(),
            got: model_i.len(),
        });
    }
    if !(xi > 0.0) {
        return Err(Error::Domain(format!("search half-width must be positive, got {xi}")));
    }
    let e = energy(model_ref) + energy(model_i);
    let prod: Vec<Complex64> = model_ref.iter().zip(model_i).map(|(a, b)| a.conj() * b).collect();
    let rot: Vec<Complex64> = (0..PO_STEPS)
        .map(|p| Complex64::from_polar(1.0, -(p as f64) * PI / 100.0))
        .collect();
    let to_step = 2.0 * xi / (TO_STEPS - 1) as f64;
    let centre = (TO_STEPS - 1) / 2;

    // Visit TO points nearest the initialization first so strict `<` keeps
    // the preferred point on ties.
    let mut order: Vec<usize> = (0..TO_STEPS).collect();
    order.sort_by_key(|&j| (j.abs_diff(centre), j));

    let mut best = (f64::INFINITY, centre, 0usize);
    for j in order {
        let tau = to_init - xi + j as f64 * to_step;
        let s = shifted_correlation(&prod, plan.delta_f(), tau);
        for (p, r) in rot.iter().enumerate() {
            let cost = e - 2.0 * (r * s).re;
            if cost < best.0 {
                best = (cost, j, p);
            }
        }
    }
    let (cost, j, p) = best;
    Ok(CoherenceSolution {
        subsystem_id,
        to_hat: to_init - xi + j as f64 * to_step,
        po_hat: p as f64 * PI / 100.0,
        cost,
        to_init,
    })
}

/// Value of the offset objective at an arbitrary `(tau, phi)`.
pub fn offset_cost(model_ref: &[Complex64], model_i: &[Complex64], tau: f64, phi: f64, plan: &FrequencyPlan) -> f64 {
    model_ref
        .iter()
        .zip(model_i)
        .enumerate()
        .map(|(k, (a, b))| {
            let w = Complex64::from_polar(1.0, -phi + TAU * k as f64 * plan.delta_f() * tau);
            (a - w * b).norm_sqr()
        })
        .sum()
}

/// Removes the estimated offsets from one subband slice: multiplies by
/// `exp(-j po_hat) exp(j 2 pi k delta_f to_hat)` with `k` the absolute index.
pub fn compensate(
    slice: &CfrSlice,
    sol: &CoherenceSolution,
    subsystem: &SubsystemSpec,
    plan: &FrequencyPlan,
) -> Result<CfrSlice> {
    if slice.subsystem_id != sol.subsystem_id || subsystem.id != sol.subsystem_id {
        return Err(Error::SubsystemMismatch {
            expected: sol.subsystem_id,
            got: slice.subsystem_id,
        });
    }
    let sb = subsystem.subbands.get(slice.subband).ok_or(Error::MissingSubband {
        subsystem: subsystem.id,
        subband: slice.subband,
    })?;
    if sb.width != slice.samples.len() {
        return Err(Error::LengthMismatch {
            expected: sb.width,
            got: slice.samples.len(),
        });
    }
    let mut out = slice.clone();
    apply_offset(
        &mut out.samples,
        sb.start_index,
        -sol.to_hat,
        wrap_phase(-sol.po_hat),
        plan.delta_f(),
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{CirEntry, DelayGrid};
    use crate::spectrum::SubbandSpec;
    use crate::synth::{channel_at, synth_subband_cfr, MultipathScene, NoiseSpec, OffsetState, Path, SlotOffset};
    use crate::util::{angular_distance, norm};
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cir(entries: &[(f64, f64)]) -> SparseCir {
        let grid = Arc::new(DelayGrid::new(entries.iter().map(|e| e.0).collect()).unwrap());
        SparseCir {
            entries: entries
                .iter()
                .enumerate()
                .map(|(i, &(d, a))| CirEntry {
                    delay: d,
                    amplitude: c(a, 0.0),
                    grid_index: i,
                })
                .collect(),
            ..SparseCir::empty(grid)
        }
    }

    fn plan() -> FrequencyPlan {
        FrequencyPlan::new(60e9, 1024.0 * 1e6, 1e6).unwrap()
    }

    fn model(paths: &[Path], plan: &FrequencyPlan) -> Vec<Complex64> {
        channel_at(paths, 0..plan.num_subcarriers(), plan.delta_f())
    }

    #[test]
    fn anchor_examples() {
        let a = select_anchor(&cir(&[(10e-9, 1.0), (20e-9, 0.3)]), AnchorPolicy::MinDelayMaxPower).unwrap();
        assert_eq!(a.delay, 10e-9);
        let b = select_anchor(&cir(&[(10e-9, 0.1), (20e-9, 1.0)]), AnchorPolicy::MinDelayMaxPower).unwrap();
        assert_eq!(b.delay, 20e-9);
        let k = select_anchor(
            &cir(&[(10e-9, 1.0), (16e-9, 1.0), (30e-9, 1.0)]),
            AnchorPolicy::KnownDelay(15e-9),
        )
        .unwrap();
        assert_eq!(k.delay, 16e-9);
        let empty = SparseCir::empty(Arc::new(DelayGrid::new(vec![0.0]).unwrap()));
        let err = select_anchor(&empty, AnchorPolicy::MinDelayMaxPower).unwrap_err();
        assert_eq!(err.to_string(), "no anchor path");
    }

    #[test]
    fn init_to_examples() {
        assert!((init_to(13.2e-9, 10.0e-9) - 3.2e-9).abs() < 1e-18);
        assert_eq!(init_to(4e-9, 4e-9), 0.0);
    }

    #[test]
    fn identical_models_give_identity() {
        let p = plan();
        let m = model(&[Path::new(0.0, c(5.0, 0.0)), Path::new(12e-9, c(0.3, 0.2))], &p);
        let sol = refine_offsets(2, &m, &m, 0.0, 1e-9, &p).unwrap();
        assert_eq!((sol.to_hat, sol.po_hat), (0.0, 0.0));
        assert!(sol.cost.abs() < 1e-9 * energy(&m));
    }

    #[test]
    fn pure_phase_offset_is_recovered() {
        let p = plan();
        let m = model(&[Path::new(3e-9, c(2.0, 1.0)), Path::new(9e-9, c(0.4, 0.0))], &p);
        let rotated: Vec<Complex64> = m.iter().map(|v| v * Complex64::from_polar(1.0, PI / 3.0)).collect();
        let sol = refine_offsets(2, &m, &rotated, 0.0, 1e-9, &p).unwrap();
        // The search lattice contains pi/3 only approximately; compare against
        // the best lattice point found by brute force.
        let mut oracle = (f64::INFINITY, 0.0);
        for pi in 0..PO_STEPS {
            let phi = pi as f64 * PI / 100.0;
            let cost = offset_cost(&m, &rotated, 0.0, phi, &p);
            if cost < oracle.0 {
                oracle = (cost, phi);
            }
        }
        assert_eq!(sol.to_hat, 0.0);
        assert!(angular_distance(sol.po_hat, PI / 3.0) <= PI / 100.0);
        assert!((sol.po_hat - oracle.1).abs() < 1e-12);
        // pi/3 is exactly 33.33 steps, so the nearest lattice point is 1/3 step away.
        let expect = 2.0 * energy(&m) * (1.0 - (PI / 300.0).cos());
        assert!((sol.cost - expect).abs() < 1e-6 * energy(&m));
    }

    #[test]
    fn exact_lattice_phase_gives_negligible_cost() {
        let p = plan();
        let m = model(&[Path::new(3e-9, c(2.0, 1.0))], &p);
        let phi = 40.0 * PI / 100.0;
        let rotated: Vec<Complex64> = m.iter().map(|v| v * Complex64::from_polar(1.0, phi)).collect();
        let sol = refine_offsets(2, &m, &rotated, 0.0, 1e-9, &p).unwrap();
        assert!((sol.po_hat - phi).abs() < 1e-12);
        assert!(sol.cost < 1e-6 * energy(&m));
    }

    #[test]
    fn injected_ramp_is_recovered() {
        let p = plan();
        let base = [Path::new(0.0, c(5.0, 0.0)), Path::new(7e-9, c(0.5, 0.5))];
        let shifted: Vec<Path> = base.iter().map(|q| Path::new(q.delay + 2e-9, q.amplitude)).collect();
        let sol = refine_offsets(2, &model(&base, &p), &model(&shifted, &p), 1.8e-9, 0.5e-9, &p).unwrap();
        assert!((sol.to_hat - 2e-9).abs() <= 1e-9 / 100.0 + 1e-18, "{}", sol.to_hat);
        assert!(angular_distance(sol.po_hat, 0.0) <= PI / 100.0);
    }

    #[test]
    fn cost_at_solution_beats_initialization() {
        let p = plan();
        let a = model(&[Path::new(0.0, c(5.0, 0.0)), Path::new(15e-9, c(1.0, -1.0))], &p);
        let b = model(&[Path::new(1.1e-9, c(-2.0, 4.0)), Path::new(16.2e-9, c(0.9, 1.1))], &p);
        let sol = refine_offsets(2, &a, &b, 1.0e-9, 0.4e-9, &p).unwrap();
        assert!(sol.cost <= offset_cost(&a, &b, sol.to_init, 0.0, &p) + 1e-9);
        let direct = offset_cost(&a, &b, sol.to_hat, sol.po_hat, &p);
        assert!((direct - sol.cost).abs() < 1e-8 * energy(&a));
        assert!((sol.to_hat - sol.to_init).abs() <= 0.4e-9 + 1e-18);
    }

    fn two_subsystems() -> (FrequencyPlan, SubsystemSpec, SubsystemSpec) {
        let p = FrequencyPlan::new(60e9, 256.0 * 1e6, 1e6).unwrap();
        let s1 = SubsystemSpec::spanning(
            1,
            &p,
            vec![SubbandSpec::new(0, 20), SubbandSpec::new(40, 20)],
            AnchorPolicy::MinDelayMaxPower,
        );
        let s2 = SubsystemSpec::spanning(
            2,
            &p,
            vec![SubbandSpec::new(150, 30), SubbandSpec::new(200, 40)],
            AnchorPolicy::MinDelayMaxPower,
        );
        (p, s1, s2)
    }

    #[test]
    fn compensation_inverts_offsets() {
        use rand::{Rng, SeedableRng};
        let (p, s1, s2) = two_subsystems();
        let scene = MultipathScene::static_scene(vec![
            Path::new(0.0, c(10.0, 0.0)),
            Path::new(23e-9, c(0.6, -0.4)),
            Path::new(31e-9, c(0.2, 0.9)),
        ])
        .unwrap();
        let subs = vec![s1, s2.clone()];
        let zero = OffsetState::zero(&subs, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let off = SlotOffset::from_to_po(rng.random_range(-20e-9..20e-9), rng.random_range(0.0..TAU));
            let mut with = OffsetState::zero(&subs, 1);
            with.set(2, vec![off]).unwrap();
            let sol = CoherenceSolution {
                subsystem_id: 2,
                to_hat: off.to,
                po_hat: off.po,
                ..CoherenceSolution::identity(2)
            };
            for s in 0..2 {
                let raw = synth_subband_cfr(&scene, &p, &s2, s, &with, 0, &NoiseSpec::noiseless()).unwrap();
                let clean = synth_subband_cfr(&scene, &p, &s2, s, &zero, 0, &NoiseSpec::noiseless()).unwrap();
                let fixed = compensate(&raw, &sol, &s2, &p).unwrap();
                let diff: Vec<Complex64> = fixed.samples.iter().zip(&clean.samples).map(|(a, b)| a - b).collect();
                assert!(norm(&diff) <= 1e-9 * norm(&clean.samples));
                assert_eq!((fixed.subsystem_id, fixed.subband, fixed.slot), (2, s, 0));
            }
        }
    }

    #[test]
    fn identity_compensation_is_bitwise() {
        let (p, _, s2) = two_subsystems();
        let slice = CfrSlice {
            subsystem_id: 2,
            subband: 0,
            slot: 4,
            samples: (0..30).map(|i| c(i as f64 * 0.1, -0.3)).collect(),
            snr_db: Some(10.0),
        };
        assert_eq!(compensate(&slice, &CoherenceSolution::identity(2), &s2, &p).unwrap(), slice);
    }

    #[test]
    fn compensation_composes() {
        let (p, _, s2) = two_subsystems();
        let slice = CfrSlice {
            subsystem_id: 2,
            subband: 1,
            slot: 0,
            samples: (0..40).map(|i| Complex64::from_polar(1.0 + i as f64, 0.2 * i as f64)).collect(),
            snr_db: None,
        };
        let sol = CoherenceSolution {
            to_hat: 1.7e-9,
            po_hat: 4.0,
            ..CoherenceSolution::identity(2)
        };
        let twice = compensate(&compensate(&slice, &sol, &s2, &p).unwrap(), &sol, &s2, &p).unwrap();
        let double = CoherenceSolution {
            to_hat: 3.4e-9,
            po_hat: wrap_phase(8.0),
            ..sol
        };
        let once = compensate(&slice, &double, &s2, &p).unwrap();
        for (a, b) in twice.samples.iter().zip(&once.samples) {
            assert!((a - b).norm() < 1e-9 * a.norm());
        }
    }

    #[test]
    fn mismatched_subsystem_is_rejected() {
        let (p, s1, _) = two_subsystems();
        let slice = CfrSlice {
            subsystem_id: 1,
            subband: 0,
            slot: 0,
            samples: vec![c(1.0, 0.0); 20],
            snr_db: None,
        };
        assert!(matches!(
            compensate(&slice, &CoherenceSolution::identity(2), &s1, &p),
            Err(Error::SubsystemMismatch { .. })
        ));
    }
}
