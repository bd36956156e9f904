//! Comparison methods: OMP on an offset-free full band, OMP on one
//! contiguous block of equal total width, OMP on a single subband, and
//! phase line fitting as an alternative offset estimator.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;

use crate::coherence::CoherenceSolution;
use crate::error::{Error, Result};
use crate::fusion::{delays_to_ranges, expected_noise_energy, RangeReport};
use crate::spectrum::{FrequencyPlan, Geometry, SubsystemSpec};
use crate::sparse::{build_dictionary, fused_period, omp_solve, DelayGrid, OmpParams, SparseCir};
use crate::synth::{add_noise, channel_at, CfrSlice, MultipathScene, NoiseSpec};
use crate::util::{rng_from, wrap_phase};

const FULLBAND_STREAM: u64 = 0xF011;
const CONTIGUOUS_STREAM: u64 = 0xC047;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    /// Largest delay on the search grid (s).
    pub tau_max: f64,
    pub omp: OmpParams,
    pub noise_aware: bool,
}

impl BaselineConfig {
    pub fn new(tau_max: f64) -> Self {
        Self {
            tau_max,
            omp: OmpParams::default(),
            noise_aware: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutput {
    pub report: RangeReport,
    pub cir: SparseCir,
}

/// Uniform grid of step `1/(8B)` over `[0, tau_max]`.
pub fn baseline_grid(plan: &FrequencyPlan, tau_max: f64) -> Result<Arc<DelayGrid>> {
    Ok(Arc::new(DelayGrid::lattice_span(plan.delta_f(), fused_period(plan), 0.0, tau_max)?))
}

#[allow(clippy::too_many_arguments)]
fn block_estimate(
    scene: &MultipathScene,
    plan: &FrequencyPlan,
    indices: std::ops::Range<usize>,
    noise: &NoiseSpec,
    stream: u64,
    slot: usize,
    geometry: &Geometry,
    cfg: &BaselineConfig,
) -> Result<BaselineOutput> {
    let rows: Vec<usize> = indices.collect();
    let mut h = channel_at(&scene.paths_at(slot), rows.iter().copied(), plan.delta_f());
    let slice = if let Some(snr) = noise.snr_db {
        let mut rng = rng_from(noise.seed, &[stream, slot as u64]);
        add_noise(&mut h, snr, &mut rng);
        CfrSlice {
            subsystem_id: 0,
            subband: 0,
            slot,
            samples: h,
            snr_db: Some(snr),
        }
    } else {
        CfrSlice {
            subsystem_id: 0,
            subband: 0,
            slot,
            samples: h,
            snr_db: None,
        }
    };
    let dict = build_dictionary(&rows, baseline_grid(plan, cfg.tau_max)?, plan)?;
    let noise_energy = if cfg.noise_aware {
        expected_noise_energy([&slice])
    } else {
        None
    };
    let cir = omp_solve(&slice.samples, &dict, &cfg.omp.with_noise_energy(noise_energy))?;
    Ok(BaselineOutput {
        report: delays_to_ranges(&cir, geometry, slot),
        cir,
    })
}

/// OMP on the offset-free CFR of the whole virtual band.
pub fn fullband_baseline(
    scene: &MultipathScene,
    plan: &FrequencyPlan,
    noise: &NoiseSpec,
    slot: usize,
    geometry: &Geometry,
    cfg: &BaselineConfig,
) -> Result<BaselineOutput> {
    block_estimate(
        scene,
        plan,
        0..plan.num_subcarriers(),
        noise,
        FULLBAND_STREAM,
        slot,
        geometry,
        cfg,
    )
}

/// OMP on one contiguous block of `round(effective_bw / delta_f)`
/// subcarriers starting at `start_index` (shifted down if it would run past
/// the band edge).
#[allow(clippy::too_many_arguments)]
pub fn contiguous_baseline(
    scene: &MultipathScene,
    plan: &FrequencyPlan,
    effective_bw: f64,
    start_index: usize,
    noise: &NoiseSpec,
    slot: usize,
    geometry: &Geometry,
    cfg: &BaselineConfig,
) -> Result<BaselineOutput> {
    let k = plan.num_subcarriers();
    let width = (effective_bw / plan.delta_f()).round() as usize;
    if width < 2 || width > k {
        return Err(Error::Domain(format!(
            "contiguous block of {width} subcarriers does not fit K = {k}"
        )));
    }
    let start = start_index.min(k - width);
    let stream = if width == k { FULLBAND_STREAM } else { CONTIGUOUS_STREAM };
    block_estimate(scene, plan, start..start + width, noise, stream, slot, geometry, cfg)
}

/// OMP on a single subband slice as measured.
pub fn subband_baseline(
    slice: &CfrSlice,
    subsystem: &SubsystemSpec,
    plan: &FrequencyPlan,
    geometry: &Geometry,
    cfg: &BaselineConfig,
) -> Result<BaselineOutput> {
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
    let rows: Vec<usize> = sb.indices().collect();
    let dict = build_dictionary(&rows, baseline_grid(plan, cfg.tau_max)?, plan)?;
    let noise_energy = if cfg.noise_aware {
        expected_noise_energy([slice])
    } else {
        None
    };
    let cir = omp_solve(&slice.samples, &dict, &cfg.omp.with_noise_energy(noise_energy))?;
    Ok(BaselineOutput {
        report: delays_to_ranges(&cir, geometry, slice.slot),
        cir,
    })
}

/// Unwraps a phase sequence with the `+-pi` jump rule.
pub fn unwrap_phase(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut shift = 0.0;
    for (i, &p) in phases.iter().enumerate() {
        if i > 0 {
            let d = p - phases[i - 1];
            shift -= TAU * (d / TAU).round();
        }
        out.push(p + shift);
    }
    out
}

/// Least-squares line `phase ~ a + b k` over the absolute indices of a subband.
pub fn fit_phase_line(samples: &[Complex64], start_index: usize) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::Domain("line fit needs at least 2 samples".into()));
    }
    let phase = unwrap_phase(&samples.iter().map(|v| v.arg()).collect::<Vec<_>>());
    let n = samples.len() as f64;
    // Centre the abscissa for conditioning.
    let k_mean = start_index as f64 + (n - 1.0) / 2.0;
    let p_mean = phase.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, p) in phase.iter().enumerate() {
        let x = start_index as f64 + i as f64 - k_mean;
        sxy += x * (p - p_mean);
        sxx += x * x;
    }
    let b = sxy / sxx;
    Ok((p_mean - b * k_mean, b))
}

fn subsystem_line(slices: &[CfrSlice], sub: &SubsystemSpec) -> Result<(f64, f64)> {
    let mut slope = 0.0;
    let mut phasor = Complex64::new(0.0, 0.0);
    let mut count = 0usize;
    for (s, sb) in sub.subbands.iter().enumerate() {
        let slice = slices
            .iter()
            .find(|x| x.subsystem_id == sub.id && x.subband == s)
            .ok_or(Error::MissingSubband {
                subsystem: sub.id,
                subband: s,
            })?;
        let (a, b) = fit_phase_line(&slice.samples, sb.start_index)?;
        slope += b;
        phasor += Complex64::from_polar(1.0, a);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Empty("subsystem has no subbands"));
    }
    Ok((phasor.arg(), slope / count as f64))
}

/// Offsets from per-subsystem phase lines, relative to subsystem 1:
/// `to = -(b_i - b_1) / (2 pi delta_f)`, `po = a_i - a_1`.
pub fn spotfi_coherence(
    slices: &[CfrSlice],
    subsystems: &[SubsystemSpec],
    plan: &FrequencyPlan,
) -> Result<Vec<CoherenceSolution>> {
    let reference = subsystems
        .iter()
        .find(|s| s.is_reference())
        .ok_or(Error::UnknownSubsystem(1))?;
    let (a1, b1) = subsystem_line(slices, reference)?;
    let mut out = Vec::with_capacity(subsystems.len());
    for sub in subsystems {
        if sub.is_reference() {
            out.push(CoherenceSolution::identity(sub.id));
            continue;
        }
        let (a, b) = subsystem_line(slices, sub)?;
        let to = -(b - b1) / (TAU * plan.delta_f());
        out.push(CoherenceSolution {
            subsystem_id: sub.id,
            to_hat: to,
            po_hat: wrap_phase(a - a1),
            cost: f64::NAN,
            to_init: to,
        });
    }
    Ok(out)
}
