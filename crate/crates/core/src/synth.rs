//! Ground-truth multipath scenes and the subband measurements each subsystem
//! observes through its own timing and phase offsets.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{FrequencyPlan, SubsystemSpec, Technology};
use crate::util::{rng_from, steering, wrap_phase};

const OFFSET_STREAM: u64 = 0x0FF5;
const NOISE_STREAM: u64 = 0x4015E;

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    /// Delay `tau_l` (s).
    pub delay: f64,
    /// Complex amplitude `alpha_l`, carrier phase included.
    pub amplitude: Complex64,
}

impl Path {
    pub fn new(delay: f64, amplitude: Complex64) -> Self {
        Self { delay, amplitude }
    }
}

/// Ground-truth channel over a sequence of slots. Path 0 is the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipathScene {
    paths: Vec<Path>,
    slot_times: Vec<f64>,
    drift: Vec<f64>,
    // Extra per-slot phase of each path (micro-motion); empty means none.
    phase_tracks: Vec<Vec<f64>>,
}

impl MultipathScene {
    pub fn new(mut paths: Vec<Path>, slot_times: Vec<f64>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::Empty("scene needs at least one path"));
        }
        if slot_times.is_empty() {
            return Err(Error::Empty("scene needs at least one slot"));
        }
        if paths.iter().any(|p| !(p.delay >= 0.0) || !p.delay.is_finite()) {
            return Err(Error::Domain("path delays must be finite and non-negative".into()));
        }
        paths.sort_by(|a, b| a.delay.total_cmp(&b.delay));
        let n = paths.len();
        Ok(Self {
            paths,
            slot_times,
            drift: vec![0.0; n],
            phase_tracks: Vec::new(),
        })
    }

    /// A single-slot scene at `t = 0`.
    pub fn static_scene(paths: Vec<Path>) -> Result<Self> {
        Self::new(paths, vec![0.0])
    }

    /// Per-path delay drift rates (s/s), in path order.
    pub fn with_drift(mut self, drift: Vec<f64>) -> Result<Self> {
        if drift.len() != self.paths.len() {
            return Err(Error::LengthMismatch {
                expected: self.paths.len(),
                got: drift.len(),
            });
        }
        self.drift = drift;
        Ok(self)
    }

    /// Extra phase (rad) per slot and path, in path order.
    pub fn with_phase_tracks(mut self, tracks: Vec<Vec<f64>>) -> Result<Self> {
        if tracks.len() != self.slot_times.len() {
            return Err(Error::LengthMismatch {
                expected: self.slot_times.len(),
                got: tracks.len(),
            });
        }
        if let Some(bad) = tracks.iter().find(|t| t.len() != self.paths.len()) {
            return Err(Error::LengthMismatch {
                expected: self.paths.len(),
                got: bad.len(),
            });
        }
        self.phase_tracks = tracks;
        Ok(self)
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn anchor(&self) -> &Path {
        &self.paths[0]
    }

    pub fn num_slots(&self) -> usize {
        self.slot_times.len()
    }

    pub fn slot_times(&self) -> &[f64] {
        &self.slot_times
    }

    pub fn slot_time(&self, slot: usize) -> f64 {
        self.slot_times[slot.min(self.slot_times.len() - 1)]
    }

    pub fn is_slot_constant(&self) -> bool {
        self.drift.iter().all(|&d| d == 0.0) && self.phase_tracks.is_empty()
    }

    /// Paths advanced to the given slot.
    pub fn paths_at(&self, slot: usize) -> Vec<Path> {
        let t = self.slot_time(slot);
        self.paths
            .iter()
            .enumerate()
            .map(|(l, p)| {
                let mut amp = p.amplitude;
                if let Some(track) = self.phase_tracks.get(slot) {
                    amp *= Complex64::from_polar(1.0, track[l]);
                }
                Path::new(p.delay + self.drift[l] * t, amp)
            })
            .collect()
    }
}

/// Relative offsets of one subsystem at one slot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SlotOffset {
    /// Relative timing offset `tau_o` (s).
    pub to: f64,
    /// Residual carrier frequency offset `f_o` (Hz).
    pub cfo: f64,
    /// Random phase offset `varphi_o` (rad).
    pub rpo: f64,
    /// Combined phase offset `-2 pi f_o t + varphi_o`, wrapped to `[0, 2pi)`.
    pub po: f64,
}

impl SlotOffset {
    pub fn new(to: f64, cfo: f64, rpo: f64, time: f64) -> Self {
        Self {
            to,
            cfo,
            rpo,
            po: wrap_phase(-TAU * cfo * time + rpo),
        }
    }

    /// Offsets given directly as a TO and combined PO.
    pub fn from_to_po(to: f64, po: f64) -> Self {
        Self {
            to,
            cfo: 0.0,
            rpo: wrap_phase(po),
            po: wrap_phase(po),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.to == 0.0 && self.po == 0.0
    }
}

/// Offsets per subsystem and slot. The reference subsystem is always zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OffsetState {
    entries: BTreeMap<usize, Vec<SlotOffset>>,
}

impl OffsetState {
    /// All-zero offsets for every subsystem over `num_slots` slots.
    pub fn zero(subsystems: &[SubsystemSpec], num_slots: usize) -> Self {
        let entries = subsystems
            .iter()
            .map(|s| (s.id, vec![SlotOffset::default(); num_slots]))
            .collect();
        Self { entries }
    }

    /// Overrides one subsystem's offsets. Setting non-zero offsets on the
    /// reference is rejected.
    pub fn set(&mut self, subsystem_id: usize, offsets: Vec<SlotOffset>) -> Result<()> {
        if subsystem_id == 1 && offsets.iter().any(|o| !o.is_zero()) {
            return Err(Error::Domain("reference subsystem offsets must be zero".into()));
        }
        self.entries.insert(subsystem_id, offsets);
        Ok(())
    }

    pub fn get(&self, subsystem_id: usize, slot: usize) -> Option<SlotOffset> {
        if subsystem_id == 1 {
            return Some(SlotOffset::default());
        }
        self.entries.get(&subsystem_id).and_then(|v| v.get(slot)).copied()
    }

    pub fn subsystem(&self, subsystem_id: usize) -> Option<&[SlotOffset]> {
        self.entries.get(&subsystem_id).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RpoModel {
    /// Uniform on `[0, 2pi)`.
    Uniform,
    /// Fixed value (rad).
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetEvolution {
    /// Fresh draw for every block of slots.
    Independent,
    /// Each block perturbs the previous one by a uniform step of
    /// `step_fraction` times the range (TO and CFO clamped to the range).
    RandomWalk { step_fraction: f64 },
}

/// Sampling model for relative offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OffsetModel {
    pub to_range_s: f64,
    pub cfo_range_hz: f64,
    pub rpo: RpoModel,
    pub evolution: OffsetEvolution,
    /// Consecutive slots sharing one draw (a subsystem sweeping its subbands
    /// without resynchronizing). The CFO phase uses the block's first slot time.
    pub hold_slots: usize,
    /// When set, TOs are rounded to multiples of this step.
    pub to_step_s: Option<f64>,
}

impl Default for OffsetModel {
    fn default() -> Self {
        Self {
            to_range_s: 20e-9,
            cfo_range_hz: 10e3,
            rpo: RpoModel::Uniform,
            evolution: OffsetEvolution::Independent,
            hold_slots: 1,
            to_step_s: None,
        }
    }
}

impl OffsetModel {
    pub fn none() -> Self {
        Self {
            to_range_s: 0.0,
            cfo_range_hz: 0.0,
            rpo: RpoModel::Fixed(0.0),
            ..Self::default()
        }
    }

    fn quantize_to(&self, to: f64) -> f64 {
        match self.to_step_s {
            Some(step) if step > 0.0 => {
                let mut q = (to / step).round() * step;
                if q.abs() > self.to_range_s {
                    q -= q.signum() * step;
                }
                q
            }
            _ => to,
        }
    }
}

fn uniform_sym<R: Rng>(rng: &mut R, range: f64) -> f64 {
    if range > 0.0 {
        rng.random_range(-range..=range)
    } else {
        0.0
    }
}

/// Draws relative offsets for every non-reference subsystem and slot.
pub fn gen_offsets(
    seed: u64,
    model: &OffsetModel,
    subsystems: &[SubsystemSpec],
    slot_times: &[f64],
) -> Result<OffsetState> {
    if model.to_range_s < 0.0 || model.cfo_range_hz < 0.0 {
        return Err(Error::Domain("offset ranges must be non-negative".into()));
    }
    let hold = model.hold_slots.max(1);
    let mut state = OffsetState::zero(subsystems, slot_times.len());
    for sub in subsystems.iter().filter(|s| !s.is_reference()) {
        let mut per_slot = Vec::with_capacity(slot_times.len());
        let mut walk_rng = rng_from(seed, &[OFFSET_STREAM, sub.id as u64]);
        let mut prev: Option<(f64, f64, f64)> = None;
        for (block, times) in slot_times.chunks(hold).enumerate() {
            let (to, cfo, rpo) = match (model.evolution, prev) {
                (OffsetEvolution::RandomWalk { step_fraction }, Some((to, cfo, rpo))) => {
                    let to = (to + uniform_sym(&mut walk_rng, model.to_range_s * step_fraction))
                        .clamp(-model.to_range_s, model.to_range_s);
                    let cfo = (cfo + uniform_sym(&mut walk_rng, model.cfo_range_hz * step_fraction))
                        .clamp(-model.cfo_range_hz, model.cfo_range_hz);
                    let rpo = match model.rpo {
                        RpoModel::Uniform => wrap_phase(rpo + uniform_sym(&mut walk_rng, TAU * step_fraction)),
                        RpoModel::Fixed(v) => v,
                    };
                    (to, cfo, rpo)
                }
                (OffsetEvolution::RandomWalk { .. }, None) => draw(&mut walk_rng, model),
                (OffsetEvolution::Independent, _) => {
                    let mut rng = rng_from(seed, &[OFFSET_STREAM, sub.id as u64, block as u64]);
                    draw(&mut rng, model)
                }
            };
            prev = Some((to, cfo, rpo));
            let t0 = times[0];
            let offset = SlotOffset::new(model.quantize_to(to), cfo, rpo, t0);
            per_slot.extend(std::iter::repeat_n(offset, times.len()));
        }
        state.set(sub.id, per_slot)?;
    }
    Ok(state)
}

fn draw<R: Rng>(rng: &mut R, model: &OffsetModel) -> (f64, f64, f64) {
    let to = uniform_sym(rng, model.to_range_s);
    let cfo = uniform_sym(rng, model.cfo_range_hz);
    let rpo = match model.rpo {
        RpoModel::Uniform => rng.random_range(0.0..TAU),
        RpoModel::Fixed(v) => wrap_phase(v),
    };
    (to, cfo, rpo)
}

/// One subband's measured CFR for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct CfrSlice {
    pub subsystem_id: usize,
    /// Subband index within the subsystem.
    pub subband: usize,
    pub slot: usize,
    pub samples: Vec<Complex64>,
    /// Nominal measurement SNR; `None` for noiseless slices.
    pub snr_db: Option<f64>,
}

/// Measurement noise configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self { snr_db: None, seed: 0 }
    }

    pub fn new(snr_db: f64, seed: u64) -> Self {
        Self {
            snr_db: Some(snr_db),
            seed,
        }
    }
}

/// Channel response at arbitrary absolute subcarrier indices.
pub fn channel_at(paths: &[Path], indices: impl Iterator<Item = usize>, delta_f: f64) -> Vec<Complex64> {
    indices
        .map(|k| {
            paths
                .iter()
                .map(|p| p.amplitude * steering(k as f64, delta_f, p.delay))
                .sum()
        })
        .collect()
}

/// Full-band CFR `H_k = sum_l alpha_l exp(-j 2 pi k delta_f tau_l)`, `k = 0..K-1`.
pub fn synth_fullband_cfr(scene: &MultipathScene, plan: &FrequencyPlan, slot: usize) -> Vec<Complex64> {
    channel_at(&scene.paths_at(slot), 0..plan.num_subcarriers(), plan.delta_f())
}

/// Multiplies subband samples by `exp(j po) exp(-j 2 pi k delta_f to)`, where
/// `k = start_index + kappa` is the absolute subcarrier index.
pub fn apply_offset(samples: &mut [Complex64], start_index: usize, to: f64, po: f64, delta_f: f64) {
    if to == 0.0 && po == 0.0 {
        return;
    }
    let rot = Complex64::from_polar(1.0, po);
    for (kappa, v) in samples.iter_mut().enumerate() {
        *v *= rot * steering((start_index + kappa) as f64, delta_f, to);
    }
}

/// Adds complex white Gaussian noise at `snr_db` relative to the mean sample power.
pub fn add_noise<R: Rng>(samples: &mut [Complex64], snr_db: f64, rng: &mut R) {
    let power = crate::util::energy(samples) / samples.len().max(1) as f64;
    let sigma2 = power * 10f64.powf(-snr_db / 10.0);
    add_noise_variance(samples, sigma2, rng);
}

fn add_noise_variance<R: Rng>(samples: &mut [Complex64], sigma2: f64, rng: &mut R) {
    if !(sigma2 > 0.0) {
        return;
    }
    let normal = Normal::new(0.0, (sigma2 / 2.0).sqrt()).expect("finite std");
    for v in samples.iter_mut() {
        *v += Complex64::new(normal.sample(rng), normal.sample(rng));
    }
}

/// Measured CFR of subband `s` of `subsystem` at `slot`, including offsets and noise.
pub fn synth_subband_cfr(
    scene: &MultipathScene,
    plan: &FrequencyPlan,
    subsystem: &SubsystemSpec,
    s: usize,
    offsets: &OffsetState,
    slot: usize,
    noise: &NoiseSpec,
) -> Result<CfrSlice> {
    let sb = *subsystem.subbands.get(s).ok_or(Error::MissingSubband {
        subsystem: subsystem.id,
        subband: s,
    })?;
    let off = offsets.get(subsystem.id, slot).ok_or(Error::MissingSubband {
        subsystem: subsystem.id,
        subband: s,
    })?;
    let mut samples = channel_at(&scene.paths_at(slot), sb.indices(), plan.delta_f());
    apply_offset(&mut samples, sb.start_index, off.to, off.po, plan.delta_f());

    if let Some(snr_db) = noise.snr_db {
        let mut rng = rng_from(noise.seed, &[NOISE_STREAM, subsystem.id as u64, s as u64, slot as u64]);
        match subsystem.technology {
            Technology::Ofdm => add_noise(&mut samples, snr_db, &mut rng),
            Technology::SingleCarrier => {
                // The receiver estimates taps by correlation; noise enters there.
                let n = samples.len();
                let power = crate::util::energy(&samples) / n as f64;
                let mut taps = cfr_to_cir(&samples);
                add_noise_variance(&mut taps, power * 10f64.powf(-snr_db / 10.0) / n as f64, &mut rng);
                samples = cir_to_cfr(&taps, n)?;
            }
        }
    }

    Ok(CfrSlice {
        subsystem_id: subsystem.id,
        subband: s,
        slot,
        samples,
        snr_db: noise.snr_db,
    })
}

/// Every subband slice of every subsystem at one slot.
pub fn synth_all_slices(
    scene: &MultipathScene,
    plan: &FrequencyPlan,
    subsystems: &[SubsystemSpec],
    offsets: &OffsetState,
    slot: usize,
    noise: &NoiseSpec,
) -> Result<Vec<CfrSlice>> {
    let mut out = Vec::new();
    for sub in subsystems {
        for s in 0..sub.subbands.len() {
            out.push(synth_subband_cfr(scene, plan, sub, s, offsets, slot, noise)?);
        }
    }
    Ok(out)
}

/// Forward DFT of zero-padded CIR taps (`H_k = sum_n h_n exp(-j 2 pi k n / N)`).
pub fn cir_to_cfr(taps: &[Complex64], n_dft: usize) -> Result<Vec<Complex64>> {
    if taps.len() > n_dft {
        return Err(Error::Domain(format!(
            "{} taps do not fit a {n_dft}-point DFT",
            taps.len()
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n_dft];
    buf[..taps.len()].copy_from_slice(taps);
    if n_dft > 0 {
        FftPlanner::new().plan_fft_forward(n_dft).process(&mut buf);
    }
    Ok(buf)
}

/// Inverse DFT (with `1/N`) taking a CFR to CIR taps.
pub fn cfr_to_cir(cfr: &[Complex64]) -> Vec<Complex64> {
    let n = cfr.len();
    let mut buf = cfr.to_vec();
    if n > 0 {
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }
    buf
}

/// Writes slices as CSV rows `subsystem,subband,slot,kappa,re,im`.
pub fn write_slices_csv<W: Write>(writer: W, slices: &[CfrSlice]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["subsystem", "subband", "slot", "kappa", "re", "im"])?;
    for slice in slices {
        for (kappa, v) in slice.samples.iter().enumerate() {
            w.write_record([
                slice.subsystem_id.to_string(),
                slice.subband.to_string(),
                slice.slot.to_string(),
                kappa.to_string(),
                v.re.to_string(),
                v.im.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
