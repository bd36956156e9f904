//! Monte-Carlo orchestration: every trial draws a scene, offsets and noise,
//! runs each method on the same measurements and scores the range reports.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path as FsPath;
use std::str::FromStr;

use log::{debug, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{contiguous_baseline, fullband_baseline, subband_baseline, BaselineConfig};
use crate::error::{Error, Result};
use crate::fusion::RangeReport;
use crate::pipeline::{multiband_slot, power_delay_profile, run_window, CoherenceMethod, PipelineConfig};
use crate::sparse::SparseCir;
use crate::synth::{synth_all_slices, synth_subband_cfr, CfrSlice, NoiseSpec, OffsetState};
use crate::util::derive_seed;

use super::metrics::{compute_frt, match_detections, mean_std, median, rmse};
use super::scenario::{Acquisition, Scenario, Setup, TrialScene};

const NOISE_LABEL: u64 = 0x4E01;

/// A ranging method the harness can score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Grid-search coherence plus fusion, one slot.
    Multiband,
    /// As `Multiband`, aggregated over all slots of the run.
    MultibandAgg,
    /// Offset-free OMP over the whole virtual band.
    Fullband,
    /// OMP over one contiguous block as wide as the measured spectrum.
    Contiguous,
    /// Phase line fitting for coherence, then fusion.
    Spotfi,
    /// OMP on one subband (index in sweep order), offset-free.
    Subband(usize),
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Multiband => "multiband".into(),
            Method::MultibandAgg => "multiband-agg".into(),
            Method::Fullband => "fullband".into(),
            Method::Contiguous => "contiguous".into(),
            Method::Spotfi => "spotfi".into(),
            Method::Subband(n) => format!("subband-{n}"),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "multiband" => Method::Multiband,
            "multiband-agg" => Method::MultibandAgg,
            "fullband" => Method::Fullband,
            "contiguous" => Method::Contiguous,
            "spotfi" => Method::Spotfi,
            _ => match s.strip_prefix("subband-").map(str::parse::<usize>) {
                Some(Ok(n)) => Method::Subband(n),
                _ => return Err(Error::UnknownMethod(s.to_string())),
            },
        })
    }
}

/// Command-line overrides of a scenario's run section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub methods: Option<Vec<String>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
}

impl RunOptions {
    pub fn apply(&self, scenario: &Scenario) -> Scenario {
        let mut sc = scenario.clone();
        if let Some(m) = &self.methods {
            sc.run.methods = m.clone();
        }
        if let Some(t) = self.trials {
            sc.run.trials = t;
        }
        if let Some(s) = self.seed {
            sc.run.seed = s;
        }
        sc
    }
}

/// Noise condition of one pass over the trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    pub snr_db: Option<f64>,
}

impl Condition {
    pub fn label(&self) -> String {
        match self.snr_db {
            Some(s) => format!("{s}"),
            None => "noiseless".into(),
        }
    }
}

/// Noiseless first (when requested), then the SNR list in order.
pub fn conditions(sc: &Scenario) -> Vec<Condition> {
    let mut out = Vec::new();
    if sc.run.noiseless {
        out.push(Condition { snr_db: None });
    }
    out.extend(sc.run.snr_db.iter().map(|&s| Condition { snr_db: Some(s) }));
    out
}

/// Score of one method in one trial and condition.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodTrial {
    pub report: Option<RangeReport>,
    pub cir: Option<SparseCir>,
    pub detected: usize,
    pub squared_errors: Vec<f64>,
    pub false_alarms: usize,
    pub failed: bool,
}

/// Trial-aggregated metrics of one method under one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub condition: Condition,
    pub trials: usize,
    pub targets: usize,
    pub detected: usize,
    pub fullband_detected: usize,
    pub false_alarms: usize,
    pub failures: usize,
    pub rmse_m: Option<f64>,
    pub frt: Option<f64>,
    /// RMSE of every trial, `None` where nothing was detected.
    pub trial_rmse: Vec<Option<f64>>,
}

impl MethodSummary {
    pub fn median_trial_rmse(&self) -> Option<f64> {
        median(self.trial_rmse.iter().flatten().copied())
    }
}

/// One estimated path of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeRow {
    pub trial: usize,
    pub snr_db: String,
    pub slot: usize,
    pub range_m: f64,
    pub amp_re: f64,
    pub amp_im: f64,
    pub delay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdpRow {
    pub delay_s: f64,
    pub slot: usize,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub summaries: Vec<MethodSummary>,
    pub ranges: Vec<(Method, Vec<RangeRow>)>,
    /// Trial 0 under the first condition.
    pub pdp: Vec<(Method, Vec<PdpRow>)>,
}

impl RunReport {
    pub fn summary(&self, method: Method, snr_db: Option<f64>) -> Option<&MethodSummary> {
        self.summaries
            .iter()
            .find(|s| s.method == method && s.condition.snr_db == snr_db)
    }
}

/// Everything needed to run trials, checked up front.
struct Prepared {
    sc: Scenario,
    setup: Setup,
    methods: Vec<Method>,
    cfg: PipelineConfig,
    base: BaselineConfig,
    conditions: Vec<Condition>,
}

fn prepare(scenario: &Scenario) -> Result<Prepared> {
    let setup = scenario.validate()?;
    let mut methods = scenario.methods(&setup)?;
    if !methods.contains(&Method::Fullband) {
        methods.push(Method::Fullband);
    }
    let cfg = scenario.pipeline_config(&setup);
    let base = BaselineConfig::new(scenario.scene.tau_max_s);
    Ok(Prepared {
        conditions: conditions(scenario),
        sc: scenario.clone(),
        setup,
        methods,
        cfg,
        base,
    })
}

/// Measured slices of slot `slot` of a trial.
pub fn slot_slices(
    sc: &Scenario,
    setup: &Setup,
    trial: &TrialScene,
    offsets: &OffsetState,
    slot: usize,
    noise: &NoiseSpec,
) -> Result<Vec<CfrSlice>> {
    match sc.run.acquisition {
        Acquisition::Simultaneous => {
            synth_all_slices(&trial.scene, &setup.plan, &setup.subsystems, offsets, slot, noise)
        }
        Acquisition::Staggered => {
            let order = setup.sweep_order();
            let s = order.len();
            order
                .iter()
                .enumerate()
                .map(|(j, &(i, b))| {
                    synth_subband_cfr(
                        &trial.scene,
                        &setup.plan,
                        &setup.subsystems[i],
                        b,
                        offsets,
                        slot * s + j,
                        noise,
                    )
                })
                .collect()
        }
    }
}

fn noise_for(sc: &Scenario, trial: usize, cond_idx: usize, cond: &Condition) -> NoiseSpec {
    match cond.snr_db {
        Some(snr) => NoiseSpec::new(snr, derive_seed(sc.run.seed, &[NOISE_LABEL, trial as u64, cond_idx as u64])),
        None => NoiseSpec::noiseless(),
    }
}

fn score(report: &RangeReport, trial: &TrialScene) -> (usize, Vec<f64>, usize) {
    let estimates = report.ranges();
    // The anchor competes for estimates but is not a target.
    let mut truth = Vec::with_capacity(trial.truth_m.len() + 1);
    truth.push(trial.anchor_range_m);
    truth.extend_from_slice(&trial.truth_m);
    let m = match_detections(&estimates, &truth, trial.match_radius_m);
    let targets: Vec<(usize, usize)> = m.pairs.iter().copied().filter(|&(t, _)| t > 0).collect();
    let sq = targets.iter().map(|&(t, e)| (estimates[e] - truth[t]).powi(2)).collect();
    (targets.len(), sq, m.false_alarms)
}

fn run_method(
    p: &Prepared,
    method: Method,
    trial: &TrialScene,
    cond_idx: usize,
    trial_idx: usize,
    windows: &mut Option<Vec<Vec<CfrSlice>>>,
) -> Result<(RangeReport, SparseCir)> {
    let sc = &p.sc;
    let setup = &p.setup;
    let cond = &p.conditions[cond_idx];
    let noise = noise_for(sc, trial_idx, cond_idx, cond);
    let last = sc.run.slots - 1;
    let last_dwell = sc.run.slots * sc.dwells_per_slot(setup) - 1;
    let mut window = |upto: usize| -> Result<Vec<Vec<CfrSlice>>> {
        if windows.is_none() {
            let all = (0..sc.run.slots)
                .map(|n| slot_slices(sc, setup, trial, &trial.offsets, n, &noise))
                .collect::<Result<Vec<_>>>()?;
            *windows = Some(all);
        }
        Ok(windows.as_ref().expect("filled")[..=upto].to_vec())
    };
    match method {
        Method::Multiband | Method::Spotfi => {
            let slices = window(last)?.pop().expect("one slot");
            let mut cfg = p.cfg;
            if method == Method::Spotfi {
                cfg.coherence = CoherenceMethod::LineFit;
            }
            let out = multiband_slot(&slices, &setup.subsystems, &setup.plan, &setup.geometry, &cfg, None)?;
            Ok((out.report, out.diagnostics.fused))
        }
        Method::MultibandAgg => {
            let all = window(last)?;
            let out = run_window(
                &all,
                &setup.subsystems,
                &setup.plan,
                &setup.geometry,
                &p.cfg,
                &sc.run.aggregation,
            )?;
            Ok((out.report, out.aggregated))
        }
        Method::Fullband => {
            let out = fullband_baseline(&trial.scene, &setup.plan, &noise, last_dwell, &setup.geometry, &p.base)?;
            Ok((out.report, out.cir))
        }
        Method::Contiguous => {
            let width = setup.report.effective_bandwidth;
            let start = setup
                .subsystems
                .iter()
                .flat_map(|s| s.subbands.iter().map(|b| b.start_index))
                .min()
                .unwrap_or(0);
            let out = contiguous_baseline(
                &trial.scene,
                &setup.plan,
                width,
                start,
                &noise,
                last_dwell,
                &setup.geometry,
                &p.base,
            )?;
            Ok((out.report, out.cir))
        }
        Method::Subband(n) => {
            let order = setup.sweep_order();
            let (i, b) = order[n];
            let sub = &setup.subsystems[i];
            let dwell = match sc.run.acquisition {
                Acquisition::Simultaneous => last,
                Acquisition::Staggered => last * order.len() + n,
            };
            let clean = OffsetState::zero(&setup.subsystems, trial.scene.num_slots());
            let slice = synth_subband_cfr(&trial.scene, &setup.plan, sub, b, &clean, dwell, &noise)?;
            let out = subband_baseline(&slice, sub, &setup.plan, &setup.geometry, &p.base)?;
            Ok((out.report, out.cir))
        }
    }
}

/// Results of one trial: `[condition][method]`.
fn run_trial(p: &Prepared, trial_idx: usize) -> Result<(TrialScene, Vec<Vec<MethodTrial>>)> {
    let trial = p.sc.draw_trial(&p.setup, trial_idx, p.sc.run.seed)?;
    let mut per_cond = Vec::with_capacity(p.conditions.len());
    for cond_idx in 0..p.conditions.len() {
        let mut windows = None;
        let mut row = Vec::with_capacity(p.methods.len());
        for &method in &p.methods {
            let result = run_method(p, method, &trial, cond_idx, trial_idx, &mut windows);
            row.push(match result {
                Ok((report, cir)) => {
                    let (detected, squared_errors, false_alarms) = score(&report, &trial);
                    MethodTrial {
                        report: Some(report),
                        cir: Some(cir),
                        detected,
                        squared_errors,
                        false_alarms,
                        failed: false,
                    }
                }
                Err(e) => {
                    warn!("trial {trial_idx}, {method}: {e}");
                    MethodTrial {
                        report: None,
                        cir: None,
                        detected: 0,
                        squared_errors: Vec::new(),
                        false_alarms: 0,
                        failed: true,
                    }
                }
            });
        }
        per_cond.push(row);
    }
    debug!("trial {trial_idx} done");
    Ok((trial, per_cond))
}

/// Runs every trial of a scenario (in parallel) and aggregates the metrics.
pub fn run_scenario(scenario: &Scenario) -> Result<RunReport> {
    let p = prepare(scenario)?;
    let trials: Vec<(TrialScene, Vec<Vec<MethodTrial>>)> = (0..p.sc.run.trials)
        .into_par_iter()
        .map(|t| run_trial(&p, t))
        .collect::<Result<Vec<_>>>()?;

    let fb = p.methods.iter().position(|m| *m == Method::Fullband).expect("always run");
    let mut summaries = Vec::new();
    for (c, cond) in p.conditions.iter().enumerate() {
        let fullband_detected: usize = trials.iter().map(|(_, r)| r[c][fb].detected).sum();
        let targets: usize = trials.iter().map(|(t, _)| t.truth_m.len()).sum();
        for (mi, &method) in p.methods.iter().enumerate() {
            let outcomes: Vec<&MethodTrial> = trials.iter().map(|(_, r)| &r[c][mi]).collect();
            let detected = outcomes.iter().map(|o| o.detected).sum();
            let all_sq: Vec<f64> = outcomes.iter().flat_map(|o| o.squared_errors.iter().copied()).collect();
            summaries.push(MethodSummary {
                method,
                condition: *cond,
                trials: outcomes.len(),
                targets,
                detected,
                fullband_detected,
                false_alarms: outcomes.iter().map(|o| o.false_alarms).sum(),
                failures: outcomes.iter().filter(|o| o.failed).count(),
                rmse_m: rmse(&all_sq),
                frt: compute_frt(detected, fullband_detected),
                trial_rmse: outcomes.iter().map(|o| rmse(&o.squared_errors)).collect(),
            });
        }
    }

    let mut ranges = Vec::with_capacity(p.methods.len());
    let mut pdp = Vec::with_capacity(p.methods.len());
    for (mi, &method) in p.methods.iter().enumerate() {
        let mut rows = Vec::new();
        for (t, (_, r)) in trials.iter().enumerate() {
            for (c, cond) in p.conditions.iter().enumerate() {
                if let Some(rep) = &r[c][mi].report {
                    rows.extend(rep.entries.iter().map(|e| RangeRow {
                        trial: t,
                        snr_db: cond.label(),
                        slot: rep.slot,
                        range_m: e.range_m,
                        amp_re: e.amplitude.re,
                        amp_im: e.amplitude.im,
                        delay_s: e.delay,
                    }));
                }
            }
        }
        ranges.push((method, rows));
        let first = trials.first().and_then(|(_, r)| r.first()).map(|row| &row[mi]);
        let rows = match first {
            Some(MethodTrial {
                cir: Some(cir),
                report: Some(rep),
                ..
            }) => power_delay_profile(cir, &p.setup.plan, p.sc.run.pdp_oversample, p.sc.scene.tau_max_s)
                .into_iter()
                .map(|(delay_s, power)| PdpRow {
                    delay_s,
                    slot: rep.slot,
                    power,
                })
                .collect(),
            _ => Vec::new(),
        };
        pdp.push((method, rows));
    }

    Ok(RunReport {
        scenario: p.sc.name.clone(),
        seed: p.sc.run.seed,
        summaries,
        ranges,
        pdp,
    })
}

#[derive(Serialize)]
struct MetricsRow {
    method: String,
    snr_db: String,
    rmse_m: Option<f64>,
    frt: Option<f64>,
    trials: usize,
    targets: usize,
    detected: usize,
    fullband_detected: usize,
    false_alarms: usize,
    failures: usize,
    trial_rmse_mean_m: Option<f64>,
    trial_rmse_std_m: Option<f64>,
    trial_rmse_median_m: Option<f64>,
}

fn csv_writer(path: &FsPath) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

/// Writes `metrics.csv`, `ranges_<method>.csv` and `pdp_<method>.csv` to `dir`.
pub fn write_outputs(report: &RunReport, dir: &FsPath) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv_writer(&dir.join("metrics.csv"))?;
    for s in &report.summaries {
        let spread = mean_std(s.trial_rmse.iter().flatten().copied());
        w.serialize(MetricsRow {
            method: s.method.name(),
            snr_db: s.condition.label(),
            rmse_m: s.rmse_m,
            frt: s.frt,
            trials: s.trials,
            targets: s.targets,
            detected: s.detected,
            fullband_detected: s.fullband_detected,
            false_alarms: s.false_alarms,
            failures: s.failures,
            trial_rmse_mean_m: spread.map(|x| x.0),
            trial_rmse_std_m: spread.map(|x| x.1),
            trial_rmse_median_m: s.median_trial_rmse(),
        })?;
    }
    w.flush()?;
    for (method, rows) in &report.ranges {
        let mut w = csv_writer(&dir.join(format!("ranges_{method}.csv")))?;
        if rows.is_empty() {
            w.write_record(["trial", "snr_db", "slot", "range_m", "amp_re", "amp_im", "delay_s"])?;
        }
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    for (method, rows) in &report.pdp {
        let mut w = csv_writer(&dir.join(format!("pdp_{method}.csv")))?;
        if rows.is_empty() {
            w.write_record(["delay_s", "slot", "power"])?;
        }
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Measured (or compensated) slices of trial 0 at `slot` under the first condition.
pub fn dump_slices(scenario: &Scenario, slot: usize, compensated: bool) -> Result<Vec<CfrSlice>> {
    let p = prepare(scenario)?;
    if slot >= p.sc.run.slots {
        return Err(Error::Scenario(format!(
            "slot {slot} out of range (scenario has {} slots)",
            p.sc.run.slots
        )));
    }
    let trial = p.sc.draw_trial(&p.setup, 0, p.sc.run.seed)?;
    let cond = p.conditions.first().ok_or(Error::Empty("no noise conditions"))?;
    let noise = noise_for(&p.sc, 0, 0, cond);
    let slices = slot_slices(&p.sc, &p.setup, &trial, &trial.offsets, slot, &noise)?;
    if !compensated {
        return Ok(slices);
    }
    let out = multiband_slot(&slices, &p.setup.subsystems, &p.setup.plan, &p.setup.geometry, &p.cfg, None)?;
    Ok(out.diagnostics.compensated)
}
