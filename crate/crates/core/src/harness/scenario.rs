//! Scenario files: band layout, geometry, scene template, offset model and
//! run settings, plus the per-trial draw of scene and offsets.

use std::f64::consts::{PI, TAU};
use std::path::Path as FsPath;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::delay_to_range;
use crate::pipeline::{AggregationConfig, PipelineConfig};
use crate::spectrum::{
    range_resolution, validate_plan, AnchorPolicy, FrequencyPlan, Geometry, GeometryMode, PlanReport, SubbandSpec,
    SubsystemSpec, Technology, SPEED_OF_LIGHT,
};
use crate::sparse::fused_period;
use crate::synth::{gen_offsets, MultipathScene, OffsetModel, OffsetState, Path, SlotOffset};
use crate::util::{derive_seed, rng_from};

use super::runner::Method;

pub const SCHEMA_VERSION: u32 = 1;

const SCENE_STREAM: u64 = 0x5CE4E;
const OFFSETS_STREAM: u64 = 0x0FF5E7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    /// Frequency of virtual subcarrier 0 (Hz). Subband starts are relative to it.
    pub f0_hz: f64,
    pub bandwidth_hz: f64,
    pub delta_f_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSection {
    /// Start relative to `f0_hz`.
    pub start_hz: f64,
    pub width_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemSection {
    pub id: usize,
    #[serde(default = "default_anchor")]
    pub anchor: AnchorPolicy,
    #[serde(default)]
    pub technology: Technology,
    pub subbands: Vec<BandSection>,
}

fn default_anchor() -> AnchorPolicy {
    AnchorPolicy::MinDelayMaxPower
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub mode: GeometryMode,
    #[serde(default)]
    pub baseline_m: f64,
    #[serde(default)]
    pub bistatic_angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    /// Range of the first target (mono-static `c tau / 2`, bi-static `c tau - D`).
    pub first_range_m: f64,
    /// Uniform jitter added to the first range per trial.
    #[serde(default)]
    pub range_jitter_m: f64,
    /// Spatial gaps between consecutive targets; trial `t` uses set `t mod len`.
    pub spacing_sets_m: Vec<Vec<f64>>,
    /// Target magnitudes, cycled over targets.
    pub amplitudes: Vec<f64>,
    #[serde(default = "yes")]
    pub random_phase: bool,
    /// Magnitude of the self-interference (mono-static) or LOS (bi-static) path.
    #[serde(default = "default_anchor_amplitude")]
    pub anchor_amplitude: f64,
    /// Snap delays to the fused grid.
    #[serde(default = "yes")]
    pub on_grid: bool,
    /// Largest delay searched (s).
    pub tau_max_s: f64,
    /// Radial speeds (m/s) cycled over targets; empty means static.
    #[serde(default)]
    pub speeds_mps: Vec<f64>,
    /// Fresh random target phases in every slot.
    #[serde(default)]
    pub random_slot_phase: bool,
}

fn yes() -> bool {
    true
}

fn default_anchor_amplitude() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetsSection {
    #[serde(flatten)]
    pub model: OffsetModel,
    /// Round each TO so the shifted anchor lies on the subsystem's coarse grid.
    #[serde(default)]
    pub align_to_grid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Acquisition {
    /// Every subband is measured in every slot.
    #[default]
    Simultaneous,
    /// One subband per dwell; a slot is one sweep over all subbands.
    Staggered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub snr_db: Vec<f64>,
    /// Also run without noise.
    #[serde(default)]
    pub noiseless: bool,
    #[serde(default = "one")]
    pub slots: usize,
    /// Time between dwells (s).
    #[serde(default = "default_ifs")]
    pub ifs_s: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub acquisition: Acquisition,
    #[serde(default)]
    pub aggregation: AggregationConfig,
    pub methods: Vec<String>,
    /// Detection radius; defaults to the smallest gap between targets.
    #[serde(default)]
    pub match_radius_m: Option<f64>,
    #[serde(default = "default_oversample")]
    pub pdp_oversample: usize,
}

fn one() -> usize {
    1
}

fn default_ifs() -> f64 {
    1e-3
}

fn default_oversample() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub plan: PlanSection,
    pub subsystems: Vec<SubsystemSection>,
    pub geometry: GeometrySection,
    pub scene: SceneSection,
    pub offsets: OffsetsSection,
    pub run: RunSection,
}

/// Resolved band layout of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub plan: FrequencyPlan,
    pub subsystems: Vec<SubsystemSpec>,
    pub geometry: Geometry,
    pub report: PlanReport,
}

impl Setup {
    /// `(subsystem position, subband index)` in sweep order.
    pub fn sweep_order(&self) -> Vec<(usize, usize)> {
        self.subsystems
            .iter()
            .enumerate()
            .flat_map(|(i, sub)| (0..sub.subbands.len()).map(move |s| (i, s)))
            .collect()
    }

    pub fn num_subbands(&self) -> usize {
        self.subsystems.iter().map(|s| s.subbands.len()).sum()
    }
}

/// One trial's ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialScene {
    pub scene: MultipathScene,
    pub offsets: OffsetState,
    /// Target ranges at the evaluated slot, ascending.
    pub truth_m: Vec<f64>,
    pub anchor_range_m: f64,
    pub match_radius_m: f64,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        if sc.schema_version != SCHEMA_VERSION {
            return Err(Error::Scenario(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                sc.schema_version
            )));
        }
        Ok(sc)
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Scenario(e.to_string()))
    }

    /// Band layout without the semantic checks of [`Scenario::validate`].
    pub fn build(&self) -> Result<Setup> {
        let p = &self.plan;
        let plan = FrequencyPlan::new(p.f0_hz, p.bandwidth_hz, p.delta_f_hz)?;
        let df = plan.delta_f();
        let mut subsystems = Vec::with_capacity(self.subsystems.len());
        for s in &self.subsystems {
            let mut bands = Vec::with_capacity(s.subbands.len());
            for b in &s.subbands {
                let start = (b.start_hz / df).round();
                let width = (b.width_hz / df).round();
                if start < 0.0 || width < 1.0 {
                    return Err(Error::Scenario(format!(
                        "subsystem {}: subband at {} Hz of width {} Hz is empty or below f0",
                        s.id, b.start_hz, b.width_hz
                    )));
                }
                bands.push(SubbandSpec::new(start as usize, width as usize));
            }
            subsystems.push(SubsystemSpec::spanning(s.id, &plan, bands, s.anchor).with_technology(s.technology));
        }
        let g = &self.geometry;
        let geometry = Geometry {
            mode: g.mode,
            baseline_m: g.baseline_m,
            bistatic_angle: g.bistatic_angle_deg.to_radians(),
        };
        let report = validate_plan(&plan, &subsystems);
        Ok(Setup {
            plan,
            subsystems,
            geometry,
            report,
        })
    }

    /// Every check a scenario must pass before it runs.
    pub fn validate(&self) -> Result<Setup> {
        let setup = self.build()?;
        let mut problems = setup.report.violations.clone();
        if let Err(e) = setup.geometry.validate() {
            problems.push(e.to_string());
        }
        let sc = &self.scene;
        if sc.spacing_sets_m.is_empty() {
            problems.push("scene.spacing_sets_m is empty".into());
        }
        if sc.spacing_sets_m.iter().flatten().any(|&d| !(d > 0.0)) {
            problems.push("target spacings must be positive".into());
        }
        if sc.amplitudes.is_empty() || sc.amplitudes.iter().any(|&a| !(a > 0.0)) {
            problems.push("scene.amplitudes must be non-empty and positive".into());
        }
        if !(sc.anchor_amplitude > 0.0) {
            problems.push("scene.anchor_amplitude must be positive".into());
        }
        if !(sc.first_range_m > 0.0) || !(sc.range_jitter_m >= 0.0) || sc.range_jitter_m >= sc.first_range_m {
            problems.push("scene.first_range_m must be positive and exceed the jitter".into());
        }
        if !(sc.tau_max_s > 0.0) {
            problems.push("scene.tau_max_s must be positive".into());
        } else {
            let span = sc.tau_max_s + 2.0 * self.to_margin(&setup);
            if span * setup.plan.delta_f() >= 1.0 {
                problems.push(format!(
                    "delay span {span:e} s reaches 1/delta_f; delays would alias"
                ));
            }
            let far = self.max_target_delay(&setup);
            if far > sc.tau_max_s {
                problems.push(format!(
                    "farthest target delay {far:e} s exceeds scene.tau_max_s {:e} s",
                    sc.tau_max_s
                ));
            }
        }
        let r = &self.run;
        if r.trials == 0 {
            problems.push("run.trials must be at least 1".into());
        }
        if r.slots == 0 {
            problems.push("run.slots must be at least 1".into());
        }
        if r.snr_db.is_empty() && !r.noiseless {
            problems.push("run.snr_db is empty and run.noiseless is false".into());
        }
        if r.snr_db.iter().any(|s| !s.is_finite()) {
            problems.push("run.snr_db entries must be finite".into());
        }
        if !(r.ifs_s >= 0.0) {
            problems.push("run.ifs_s must be non-negative".into());
        }
        if let Some(m) = r.match_radius_m {
            if !(m > 0.0) {
                problems.push("run.match_radius_m must be positive".into());
            }
        }
        let m = self.offsets.model;
        if !(m.to_range_s >= 0.0) || !(m.cfo_range_hz >= 0.0) {
            problems.push("offset ranges must be non-negative".into());
        }
        if let Err(e) = self.methods(&setup) {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(setup)
        } else {
            Err(Error::Scenario(problems.join("; ")))
        }
    }

    /// Requested methods, parsed against the layout.
    pub fn methods(&self, setup: &Setup) -> Result<Vec<Method>> {
        let mut out = Vec::with_capacity(self.run.methods.len());
        for name in &self.run.methods {
            let m: Method = name.parse()?;
            if let Method::Subband(n) = m {
                if n >= setup.num_subbands() {
                    return Err(Error::UnknownMethod(format!(
                        "{name}: layout has {} subbands",
                        setup.num_subbands()
                    )));
                }
            }
            if !out.contains(&m) {
                out.push(m);
            }
        }
        Ok(out)
    }

    /// Extra span of the per-subsystem grids covering the TO range.
    pub fn to_margin(&self, setup: &Setup) -> f64 {
        let b_min = setup
            .subsystems
            .iter()
            .map(|s| s.bandwidth)
            .fold(f64::INFINITY, f64::min);
        self.offsets.model.to_range_s + if b_min.is_finite() { 1.0 / b_min } else { 0.0 }
    }

    pub fn pipeline_config(&self, setup: &Setup) -> PipelineConfig {
        let mut cfg = PipelineConfig::new(self.scene.tau_max_s, self.to_margin(setup));
        cfg.staggered = self.run.acquisition == Acquisition::Staggered;
        cfg
    }

    /// Dwells per slot: 1 when simultaneous, the subband count when staggered.
    pub fn dwells_per_slot(&self, setup: &Setup) -> usize {
        match self.run.acquisition {
            Acquisition::Simultaneous => 1,
            Acquisition::Staggered => setup.num_subbands().max(1),
        }
    }

    pub fn spacing_set(&self, trial: usize) -> &[f64] {
        let sets = &self.scene.spacing_sets_m;
        &sets[trial % sets.len()]
    }

    /// Range gap per unit of spatial gap along the bisector.
    fn range_scale(geometry: &Geometry) -> f64 {
        match geometry.mode {
            GeometryMode::MonoStatic => 1.0,
            GeometryMode::BiStatic => 2.0 * (geometry.bistatic_angle / 2.0).cos(),
        }
    }

    fn range_to_delay(range: f64, geometry: &Geometry) -> f64 {
        match geometry.mode {
            GeometryMode::MonoStatic => 2.0 * range / SPEED_OF_LIGHT,
            GeometryMode::BiStatic => (range + geometry.baseline_m) / SPEED_OF_LIGHT,
        }
    }

    fn max_target_delay(&self, setup: &Setup) -> f64 {
        let scale = Self::range_scale(&setup.geometry);
        let widest = self
            .scene
            .spacing_sets_m
            .iter()
            .map(|set| set.iter().sum::<f64>())
            .fold(0.0, f64::max);
        let far = self.scene.first_range_m + self.scene.range_jitter_m + scale * widest;
        Self::range_to_delay(far, &setup.geometry)
    }

    /// Absolute time of every dwell.
    pub fn dwell_times(&self, setup: &Setup) -> Vec<f64> {
        let n = self.run.slots * self.dwells_per_slot(setup);
        (0..n).map(|d| d as f64 * self.run.ifs_s).collect()
    }

    /// Draws the scene and offsets of trial `trial`.
    pub fn draw_trial(&self, setup: &Setup, trial: usize, seed: u64) -> Result<TrialScene> {
        let trial_seed = derive_seed(seed, &[trial as u64]);
        let mut rng = rng_from(trial_seed, &[SCENE_STREAM]);
        let geometry = &setup.geometry;
        let plan = &setup.plan;
        let sc = &self.scene;
        let fused_step = 1.0 / (fused_period(plan) as f64 * plan.delta_f());
        let ref_step = setup
            .subsystems
            .iter()
            .find(|s| s.is_reference())
            .map(|s| 1.0 / (4.0 * s.num_subcarriers(plan) as f64 * plan.delta_f()))
            .ok_or(Error::UnknownSubsystem(1))?;

        let snap = |tau: f64, step: f64| if sc.on_grid { (tau / step).round() * step } else { tau };
        let anchor_delay = match geometry.mode {
            GeometryMode::MonoStatic => 0.0,
            // The reference subsystem's coarse grid must contain the anchor.
            GeometryMode::BiStatic => snap(geometry.baseline_m / SPEED_OF_LIGHT, ref_step),
        };

        let jitter = if sc.range_jitter_m > 0.0 {
            rng.random_range(-sc.range_jitter_m..=sc.range_jitter_m)
        } else {
            0.0
        };
        let scale = Self::range_scale(geometry);
        let mut ranges = vec![sc.first_range_m + jitter];
        for gap in self.spacing_set(trial) {
            let last = *ranges.last().expect("non-empty");
            ranges.push(last + scale * gap);
        }

        let mut paths = vec![Path::new(anchor_delay, Complex64::new(sc.anchor_amplitude, 0.0))];
        for (l, r) in ranges.iter().enumerate() {
            let tau = snap(Self::range_to_delay(*r, geometry), fused_step);
            let mag = sc.amplitudes[l % sc.amplitudes.len()];
            let phase = if sc.random_phase { rng.random_range(0.0..TAU) } else { 0.0 };
            paths.push(Path::new(tau, Complex64::from_polar(mag, phase)));
        }

        let times = self.dwell_times(setup);
        let mut scene = MultipathScene::new(paths, times.clone())?;
        if !sc.speeds_mps.is_empty() {
            let drift: Vec<f64> = std::iter::once(0.0)
                .chain((0..ranges.len()).map(|l| {
                    let v = sc.speeds_mps[l % sc.speeds_mps.len()];
                    match geometry.mode {
                        GeometryMode::MonoStatic => 2.0 * v / SPEED_OF_LIGHT,
                        GeometryMode::BiStatic => scale * v / SPEED_OF_LIGHT,
                    }
                }))
                .collect();
            scene = scene.with_drift(drift)?;
        }
        if sc.random_slot_phase {
            // One phase per slot, shared by that slot's dwells.
            let dps = self.dwells_per_slot(setup);
            let mut per_slot: Vec<Vec<f64>> = Vec::with_capacity(self.run.slots);
            for _ in 0..self.run.slots {
                let mut row = vec![0.0];
                row.extend((0..ranges.len()).map(|_| rng.random_range(-PI..PI)));
                per_slot.push(row);
            }
            let tracks = (0..times.len()).map(|d| per_slot[d / dps].clone()).collect();
            scene = scene.with_phase_tracks(tracks)?;
        }

        let offsets = self.draw_offsets(setup, trial_seed, &times, anchor_delay)?;

        let eval_dwell = times.len() - 1;
        let current = scene.paths_at(eval_dwell);
        let anchor_range_m = delay_to_range(current[0].delay, geometry);
        let mut truth_m: Vec<f64> = current[1..].iter().map(|p| delay_to_range(p.delay, geometry)).collect();
        truth_m.sort_by(f64::total_cmp);
        let min_gap = truth_m.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let match_radius_m = match self.run.match_radius_m {
            Some(m) => m,
            None if min_gap.is_finite() => min_gap,
            None => range_resolution(plan.bandwidth(), geometry.effective_angle())?,
        };
        Ok(TrialScene {
            scene,
            offsets,
            truth_m,
            anchor_range_m,
            match_radius_m,
        })
    }

    fn draw_offsets(&self, setup: &Setup, trial_seed: u64, times: &[f64], anchor_delay: f64) -> Result<OffsetState> {
        let mut model = self.offsets.model;
        // A subsystem keeps its offsets for a whole sweep.
        model.hold_slots = model.hold_slots.max(1) * self.dwells_per_slot(setup);
        let mut state = gen_offsets(
            derive_seed(trial_seed, &[OFFSETS_STREAM]),
            &model,
            &setup.subsystems,
            times,
        )?;
        if !self.offsets.align_to_grid {
            return Ok(state);
        }
        let plan = &setup.plan;
        for sub in setup.subsystems.iter().filter(|s| !s.is_reference()) {
            let step = 1.0 / (4.0 * sub.num_subcarriers(plan) as f64 * plan.delta_f());
            let aligned: Vec<SlotOffset> = state
                .subsystem(sub.id)
                .unwrap_or_default()
                .iter()
                .map(|o| {
                    let mut to = ((anchor_delay + o.to) / step).round() * step - anchor_delay;
                    if to.abs() > model.to_range_s && to.abs() > step {
                        to -= to.signum() * step;
                    }
                    SlotOffset { to, ..*o }
                })
                .collect();
            state.set(sub.id, aligned)?;
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::presets;

    #[test]
    fn presets_round_trip_through_toml() {
        for name in presets::names() {
            let sc = presets::get(name).unwrap();
            let text = sc.to_toml_string().unwrap();
            let back = Scenario::from_toml_str(&text).unwrap();
            assert_eq!(sc, back, "{name}");
        }
    }

    #[test]
    fn presets_validate() {
        for name in presets::names() {
            let sc = presets::get(name).unwrap();
            if let Err(e) = sc.validate() {
                panic!("{name}: {e}");
            }
        }
    }

    #[test]
    fn rejects_unknown_schema_version() {
        let mut sc = presets::get("ca-c1").unwrap();
        sc.schema_version = 99;
        let text = sc.to_toml_string().unwrap();
        assert!(Scenario::from_toml_str(&text).is_err());
    }

    #[test]
    fn rejects_bad_spacing_and_trials() {
        let mut sc = presets::get("ca-c1").unwrap();
        sc.scene.spacing_sets_m = vec![vec![0.0]];
        sc.run.trials = 0;
        let msg = sc.validate().unwrap_err().to_string();
        assert!(msg.contains("spacings"), "{msg}");
        assert!(msg.contains("trials"), "{msg}");
    }

    #[test]
    fn rejects_unknown_method() {
        let mut sc = presets::get("ca-c1").unwrap();
        sc.run.methods.push("subband-99".into());
        assert!(sc.validate().is_err());
        sc.run.methods = vec!["bogus".into()];
        assert!(sc.validate().is_err());
    }

    #[test]
    fn trial_draw_is_deterministic_and_truth_is_sorted() {
        let sc = presets::get("resolution-limit").unwrap();
        let setup = sc.validate().unwrap();
        let a = sc.draw_trial(&setup, 3, 11).unwrap();
        let b = sc.draw_trial(&setup, 3, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.truth_m.windows(2).all(|w| w[0] <= w[1]));
        let c = sc.draw_trial(&setup, 4, 11).unwrap();
        assert_ne!(a.scene, c.scene);
    }

    #[test]
    fn on_grid_targets_sit_on_the_fused_lattice() {
        let sc = presets::get("bwp-c1").unwrap();
        let setup = sc.validate().unwrap();
        let t = sc.draw_trial(&setup, 0, 1).unwrap();
        let step = 1.0 / (fused_period(&setup.plan) as f64 * setup.plan.delta_f());
        for p in &t.scene.paths()[1..] {
            let n = p.delay / step;
            assert!((n - n.round()).abs() < 1e-6);
        }
    }

    #[test]
    fn aligned_offsets_put_the_anchor_on_each_coarse_grid() {
        let mut sc = presets::get("bistatic-bwp-c1").unwrap();
        sc.offsets.align_to_grid = true;
        let setup = sc.validate().unwrap();
        let t = sc.draw_trial(&setup, 2, 5).unwrap();
        let anchor = t.scene.anchor().delay;
        for sub in &setup.subsystems {
            let step = 1.0 / (4.0 * sub.num_subcarriers(&setup.plan) as f64 * setup.plan.delta_f());
            for o in t.offsets.subsystem(sub.id).unwrap() {
                let n = (anchor + o.to) / step;
                assert!((n - n.round()).abs() < 1e-6, "subsystem {}", sub.id);
                assert!(o.to.abs() <= sc.offsets.model.to_range_s + step);
            }
        }
    }

    #[test]
    fn staggered_offsets_hold_for_a_sweep() {
        let mut sc = presets::get("bwp-c1").unwrap();
        sc.run.slots = 3;
        let setup = sc.validate().unwrap();
        let t = sc.draw_trial(&setup, 0, 9).unwrap();
        let s = setup.num_subbands();
        let offs = t.offsets.subsystem(2).unwrap();
        assert_eq!(offs.len(), 3 * s);
        for sweep in offs.chunks(s) {
            assert!(sweep.iter().all(|o| o == &sweep[0]));
        }
        assert_ne!(offs[0], offs[s]);
    }

    #[test]
    fn bistatic_spacing_scales_with_the_angle() {
        let sc = presets::get("bistatic-bwp-c1").unwrap();
        let setup = sc.validate().unwrap();
        let t = sc.draw_trial(&setup, 0, 1).unwrap();
        let gap = sc.spacing_set(0)[0] * 2.0 * (setup.geometry.bistatic_angle / 2.0).cos();
        let step = SPEED_OF_LIGHT / (fused_period(&setup.plan) as f64 * setup.plan.delta_f());
        assert!(((t.truth_m[1] - t.truth_m[0]) - gap).abs() <= step);
    }
}
