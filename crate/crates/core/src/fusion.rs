//! Joint sparse recovery over every compensated subband on a delay grid
//! focused around the reference subsystem's coarse estimates.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectrum::{FrequencyPlan, Geometry, GeometryMode, SubsystemSpec, SPEED_OF_LIGHT};
use crate::sparse::{build_dictionary, fused_period, omp_solve, DelayGrid, OmpParams, SparseCir};
use crate::synth::CfrSlice;

/// Union of `[tau_l - gamma, tau_l + gamma]` discretized on a global lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct FocusedGrid {
    pub intervals: Vec<(f64, f64)>,
    pub gamma: f64,
    pub grid: Arc<DelayGrid>,
}

/// `gamma = 1 / (2 max_i B_i)`.
pub fn focus_gamma(subsystems: &[SubsystemSpec]) -> Result<f64> {
    let b_max = subsystems.iter().map(|s| s.bandwidth).fold(0.0, f64::max);
    if !(b_max > 0.0) {
        return Err(Error::Domain("no subsystem with positive bandwidth".into()));
    }
    Ok(1.0 / (2.0 * b_max))
}

/// Grid points `n / (period delta_f)` inside the union of intervals around
/// `ref_delays`; intervals are clamped at zero delay.
pub fn build_focused_grid(ref_delays: &[f64], gamma: f64, delta_f: f64, period: usize) -> Result<FocusedGrid> {
    if ref_delays.is_empty() {
        return Err(Error::Empty("focused grid needs at least one reference delay"));
    }
    if !(gamma >= 0.0) {
        return Err(Error::Domain(format!("gamma must be non-negative, got {gamma}")));
    }
    let unit = 1.0 / (period as f64 * delta_f);
    let mut intervals: Vec<(f64, f64)> = ref_delays
        .iter()
        .map(|&t| ((t - gamma).max(0.0), (t + gamma).max(0.0)))
        .collect();
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut indices: Vec<i64> = intervals
        .iter()
        .flat_map(|&(lo, hi)| {
            let n_lo = (lo / unit - 1e-9).ceil() as i64;
            let n_hi = (hi / unit + 1e-9).floor() as i64;
            n_lo.max(0)..=n_hi
        })
        .collect();
    indices.sort_unstable();
    indices.dedup();
    let grid = DelayGrid::from_lattice(delta_f, period, indices)?;
    Ok(FocusedGrid {
        intervals,
        gamma,
        grid: Arc::new(grid),
    })
}

/// Focused grid with step `1/(8B)` and `gamma` from the subsystem bandwidths.
pub fn focused_grid_for(ref_delays: &[f64], subsystems: &[SubsystemSpec], plan: &FrequencyPlan) -> Result<FocusedGrid> {
    build_focused_grid(ref_delays, focus_gamma(subsystems)?, plan.delta_f(), fused_period(plan))
}

/// Expected noise energy of a set of slices, from their nominal SNRs.
pub fn expected_noise_energy<'a>(slices: impl IntoIterator<Item = &'a CfrSlice>) -> Option<f64> {
    let mut total = 0.0;
    for s in slices {
        let snr = s.snr_db?;
        total += crate::util::energy(&s.samples) / (1.0 + 10f64.powf(snr / 10.0));
    }
    Some(total)
}

/// Picks, for every configured subband, the latest slice with slot in
/// `[slot - staleness, slot]`.
pub fn select_latest(
    slices: &[CfrSlice],
    subsystems: &[SubsystemSpec],
    slot: usize,
    staleness: usize,
) -> Result<Vec<CfrSlice>> {
    let mut out = Vec::new();
    for sub in subsystems {
        for s in 0..sub.subbands.len() {
            let pick = slices
                .iter()
                .filter(|x| x.subsystem_id == sub.id && x.subband == s)
                .filter(|x| x.slot <= slot && slot - x.slot <= staleness)
                .max_by_key(|x| x.slot)
                .ok_or(Error::MissingSubband {
                    subsystem: sub.id,
                    subband: s,
                })?;
            out.push(pick.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuseOptions {
    pub omp: OmpParams,
    /// Stop at the noise floor implied by the slices' nominal SNR.
    pub noise_aware: bool,
    /// Accept slices from different slots (staggered acquisition).
    pub allow_mixed_slots: bool,
}

impl Default for FuseOptions {
    fn default() -> Self {
        Self {
            omp: OmpParams::default(),
            noise_aware: true,
            allow_mixed_slots: false,
        }
    }
}

/// Checks that every configured subband has exactly one slice and returns
/// `(absolute index, sample)` pairs sorted by index.
pub(crate) fn gather_samples(
    slices: &[CfrSlice],
    subsystems: &[SubsystemSpec],
    allow_mixed_slots: bool,
) -> Result<Vec<(usize, Complex64)>> {
    let first_slot = slices.first().map(|s| s.slot).ok_or(Error::Empty("no slices"))?;
    let mut pairs = Vec::new();
    for sub in subsystems {
        for (s, sb) in sub.subbands.iter().enumerate() {
            let mut matching = slices.iter().filter(|x| x.subsystem_id == sub.id && x.subband == s);
            let slice = matching.next().ok_or(Error::MissingSubband {
                subsystem: sub.id,
                subband: s,
            })?;
            if matching.next().is_some() {
                return Err(Error::Domain(format!(
                    "duplicate slices for subsystem {}, subband {s}",
                    sub.id
                )));
            }
            if !allow_mixed_slots && slice.slot != first_slot {
                return Err(Error::InconsistentSlots {
                    first: first_slot,
                    other: slice.slot,
                });
            }
            if slice.samples.len() != sb.width {
                return Err(Error::LengthMismatch {
                    expected: sb.width,
                    got: slice.samples.len(),
                });
            }
            pairs.extend(sb.indices().zip(slice.samples.iter().copied()));
        }
    }
    if let Some(stray) = slices.iter().find(|x| !subsystems.iter().any(|s| s.id == x.subsystem_id)) {
        return Err(Error::UnknownSubsystem(stray.subsystem_id));
    }
    pairs.sort_by_key(|p| p.0);
    Ok(pairs)
}

/// OMP over the concatenation of all compensated subbands.
pub fn fuse(
    slices: &[CfrSlice],
    subsystems: &[SubsystemSpec],
    grid: &FocusedGrid,
    plan: &FrequencyPlan,
    opts: &FuseOptions,
) -> Result<SparseCir> {
    let pairs = gather_samples(slices, subsystems, opts.allow_mixed_slots)?;
    let (rows, h): (Vec<usize>, Vec<Complex64>) = pairs.into_iter().unzip();
    let dict = build_dictionary(&rows, grid.grid.clone(), plan)?;
    let noise = if opts.noise_aware {
        expected_noise_energy(slices)
    } else {
        None
    };
    omp_solve(&h, &dict, &opts.omp.with_noise_energy(noise))
}

/// One estimated target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeEntry {
    pub range_m: f64,
    pub amplitude: Complex64,
    pub delay: f64,
    /// The mapped range came out negative.
    pub negative: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeReport {
    pub slot: usize,
    /// Sorted by range.
    pub entries: Vec<RangeEntry>,
    pub geometry: Geometry,
}

impl RangeReport {
    pub fn ranges(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.range_m).collect()
    }

    pub fn from_entries(slot: usize, mut entries: Vec<RangeEntry>, geometry: Geometry) -> Self {
        entries.sort_by(|a, b| a.range_m.total_cmp(&b.range_m));
        Self { slot, entries, geometry }
    }
}

/// `c tau / 2` mono-static, `c tau - D` bi-static.
pub fn delay_to_range(delay: f64, geometry: &Geometry) -> f64 {
    match geometry.mode {
        GeometryMode::MonoStatic => SPEED_OF_LIGHT * delay / 2.0,
        GeometryMode::BiStatic => SPEED_OF_LIGHT * delay - geometry.baseline_m,
    }
}

pub fn delays_to_ranges(cir: &SparseCir, geometry: &Geometry, slot: usize) -> RangeReport {
    let entries = cir
        .entries
        .iter()
        .map(|e| {
            let range_m = delay_to_range(e.delay, geometry);
            RangeEntry {
                range_m,
                amplitude: e.amplitude,
                delay: e.delay,
                negative: range_m < 0.0,
            }
        })
        .collect();
    RangeReport::from_entries(slot, entries, *geometry)
}

/// CSV rows `slot,range_m,amp_re,amp_im,delay_s`.
pub fn write_range_reports<W: Write>(writer: W, reports: &[RangeReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["slot", "range_m", "amp_re", "amp_im", "delay_s"])?;
    for r in reports {
        for e in &r.entries {
            w.write_record([
                r.slot.to_string(),
                e.range_m.to_string(),
                e.amplitude.re.to_string(),
                e.amplitude.im.to_string(),
                e.delay.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
