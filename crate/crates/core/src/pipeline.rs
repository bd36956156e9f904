//! End-to-end multiband ranging: per-subsystem OMP, offset estimation and
//! compensation, focused fusion, and optional temporal aggregation.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate, aggregate_ranges, median_path_count, AggregationMode, AggregationRule};
use crate::baselines::spotfi_coherence;
use crate::coherence::{compensate, init_to, refine_offsets, select_anchor, CoherenceSolution};
use crate::error::{Error, Result, Stage};
use crate::fusion::{
    delays_to_ranges, expected_noise_energy, focused_grid_for, fuse, gather_samples, FocusedGrid, FuseOptions,
    RangeReport,
};
use crate::spectrum::{FrequencyPlan, Geometry, SubsystemSpec};
use crate::sparse::{build_dictionary, omp_solve, subsystem_grid, synth_model_cfr, OmpParams, SparseCir};
use crate::synth::CfrSlice;

/// How subsystems are made coherent before fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoherenceMethod {
    /// Anchor-based initialization plus TO/PO grid search on synthetic CFRs.
    #[default]
    GridSearch,
    /// Phase line fitting per subsystem.
    LineFit,
    /// No compensation (slices are assumed coherent already).
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Largest target delay of interest (s).
    pub tau_max: f64,
    /// Extra span of the per-subsystem grids on both sides, covering the TO range (s).
    pub to_margin: f64,
    pub omp: OmpParams,
    pub noise_aware: bool,
    pub coherence: CoherenceMethod,
    /// Slices may come from different slots (staggered acquisition).
    pub staggered: bool,
}

impl PipelineConfig {
    pub fn new(tau_max: f64, to_margin: f64) -> Self {
        Self {
            tau_max,
            to_margin,
            omp: OmpParams::default(),
            noise_aware: true,
            coherence: CoherenceMethod::GridSearch,
            staggered: false,
        }
    }

    fn fuse_options(&self) -> FuseOptions {
        FuseOptions {
            omp: self.omp,
            noise_aware: self.noise_aware,
            allow_mixed_slots: self.staggered,
        }
    }
}

/// Coarse estimate of one subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseEstimate {
    pub subsystem_id: usize,
    pub cir: SparseCir,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotDiagnostics {
    pub coarse: Vec<CoarseEstimate>,
    pub solutions: Vec<CoherenceSolution>,
    pub compensated: Vec<CfrSlice>,
    pub focused: FocusedGrid,
    pub fused: SparseCir,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutput {
    pub report: RangeReport,
    pub diagnostics: SlotDiagnostics,
}

fn reference(subsystems: &[SubsystemSpec]) -> Result<&SubsystemSpec> {
    subsystems
        .iter()
        .find(|s| s.is_reference())
        .ok_or(Error::UnknownSubsystem(1))
}

/// OMP over one subsystem's subbands on its own grid.
pub fn coarse_estimate(
    slices: &[CfrSlice],
    sub: &SubsystemSpec,
    plan: &FrequencyPlan,
    cfg: &PipelineConfig,
) -> Result<SparseCir> {
    let own: Vec<CfrSlice> = slices.iter().filter(|s| s.subsystem_id == sub.id).cloned().collect();
    if own.is_empty() {
        return Err(Error::MissingSubband {
            subsystem: sub.id,
            subband: 0,
        });
    }
    let pairs = gather_samples(&own, std::slice::from_ref(sub), cfg.staggered)?;
    let (rows, h): (Vec<usize>, Vec<Complex64>) = pairs.into_iter().unzip();
    let grid = subsystem_grid(sub.num_subcarriers(plan), plan.delta_f(), cfg.tau_max, cfg.to_margin)?;
    let dict = build_dictionary(&rows, std::sync::Arc::new(grid), plan)?;
    let noise = if cfg.noise_aware {
        expected_noise_energy(&own)
    } else {
        None
    };
    omp_solve(&h, &dict, &cfg.omp.with_noise_energy(noise))
}

/// Offsets of every subsystem relative to the reference from their coarse estimates.
pub fn estimate_offsets(
    coarse: &[CoarseEstimate],
    subsystems: &[SubsystemSpec],
    plan: &FrequencyPlan,
) -> Result<Vec<CoherenceSolution>> {
    let find = |id: usize| {
        coarse
            .iter()
            .find(|c| c.subsystem_id == id)
            .map(|c| &c.cir)
            .ok_or(Error::UnknownSubsystem(id))
    };
    let ref_spec = reference(subsystems)?;
    let ref_cir = find(1)?;
    let ref_anchor = select_anchor(ref_cir, ref_spec.anchor_policy).map_err(|e| e.at(Stage::Coherence, Some(1)))?;
    let k = plan.num_subcarriers();
    let ref_model = synth_model_cfr(ref_cir, 0..k, plan);

    let mut out = Vec::with_capacity(subsystems.len());
    for sub in subsystems {
        if sub.is_reference() {
            out.push(CoherenceSolution::identity(sub.id));
            continue;
        }
        let cir = find(sub.id)?;
        let anchor = select_anchor(cir, sub.anchor_policy).map_err(|e| e.at(Stage::Coherence, Some(sub.id)))?;
        let to_init = init_to(anchor.delay, ref_anchor.delay);
        let xi = 5.0 / (4.0 * sub.bandwidth);
        let model = synth_model_cfr(cir, 0..k, plan);
        let sol = refine_offsets(sub.id, &ref_model, &model, to_init, xi, plan)
            .map_err(|e| e.at(Stage::Coherence, Some(sub.id)))?;
        out.push(sol);
    }
    Ok(out)
}

/// Steps 1-3 for one acquisition window of slices. With `frozen`, the focused
/// grid is reused instead of rebuilt.
pub fn multiband_slot(
    slices: &[CfrSlice],
    subsystems: &[SubsystemSpec],
    plan: &FrequencyPlan,
    geometry: &Geometry,
    cfg: &PipelineConfig,
    frozen: Option<&FocusedGrid>,
) -> Result<SlotOutput> {
    let slot = slices.iter().map(|s| s.slot).max().ok_or(Error::Empty("no slices"))?;
    reference(subsystems)?;

    let mut coarse = Vec::with_capacity(subsystems.len());
    for sub in subsystems {
        let cir = coarse_estimate(slices, sub, plan, cfg).map_err(|e| e.at(Stage::Coarse, Some(sub.id)))?;
        coarse.push(CoarseEstimate {
            subsystem_id: sub.id,
            cir,
        });
    }

    let solutions = match cfg.coherence {
        CoherenceMethod::GridSearch => estimate_offsets(&coarse, subsystems, plan)?,
        CoherenceMethod::LineFit => {
            spotfi_coherence(slices, subsystems, plan).map_err(|e| e.at(Stage::Coherence, None))?
        }
        CoherenceMethod::None => subsystems.iter().map(|s| CoherenceSolution::identity(s.id)).collect(),
    };

    let mut compensated = Vec::with_capacity(slices.len());
    for slice in slices {
        let sub = subsystems
            .iter()
            .find(|s| s.id == slice.subsystem_id)
            .ok_or(Error::UnknownSubsystem(slice.subsystem_id))?;
        let sol = solutions
            .iter()
            .find(|s| s.subsystem_id == sub.id)
            .ok_or(Error::UnknownSubsystem(sub.id))?;
        compensated.push(compensate(slice, sol, sub, plan).map_err(|e| e.at(Stage::Coherence, Some(sub.id)))?);
    }

    let focused = match frozen {
        Some(g) => g.clone(),
        None => {
            let ref_delays = coarse
                .iter()
                .find(|c| c.subsystem_id == 1)
                .map(|c| c.cir.delays())
                .unwrap_or_default();
            focused_grid_for(&ref_delays, subsystems, plan).map_err(|e| e.at(Stage::Fusion, None))?
        }
    };
    let fused =
        fuse(&compensated, subsystems, &focused, plan, &cfg.fuse_options()).map_err(|e| e.at(Stage::Fusion, None))?;
    let report = delays_to_ranges(&fused, geometry, slot);
    Ok(SlotOutput {
        report,
        diagnostics: SlotDiagnostics {
            coarse,
            solutions,
            compensated,
            focused,
            fused,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub mode: AggregationMode,
    pub rule: AggregationRule,
    /// Paths kept; `None` means the median per-slot path count.
    pub l_out: Option<usize>,
}

/// Aggregated estimate of a window of per-slot fused estimates.
pub fn aggregate_window(fused: &[SparseCir], agg: &AggregationConfig) -> Result<SparseCir> {
    let l_out = agg.l_out.unwrap_or_else(|| median_path_count(fused));
    aggregate(fused, agg.mode, agg.rule, l_out).map_err(|e| e.at(Stage::Aggregation, None))
}

fn window_report(combined: &SparseCir, geometry: &Geometry, slot: usize) -> Result<RangeReport> {
    if combined.is_empty() {
        return Ok(RangeReport::from_entries(slot, Vec::new(), *geometry));
    }
    aggregate_ranges(combined, geometry, slot).map_err(|e| e.at(Stage::Aggregation, None))
}

/// Aggregates per-slot fused estimates and maps them to relative ranges.
pub fn multiband_window(
    fused: &[SparseCir],
    agg: &AggregationConfig,
    geometry: &Geometry,
    slot: usize,
) -> Result<RangeReport> {
    window_report(&aggregate_window(fused, agg)?, geometry, slot)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutput {
    pub slots: Vec<SlotOutput>,
    pub aggregated: SparseCir,
    pub report: RangeReport,
}

/// Runs every slot of a window sequentially on a grid frozen at the first
/// slot, then aggregates.
pub fn run_window(
    windows: &[Vec<CfrSlice>],
    subsystems: &[SubsystemSpec],
    plan: &FrequencyPlan,
    geometry: &Geometry,
    cfg: &PipelineConfig,
    agg: &AggregationConfig,
) -> Result<WindowOutput> {
    let mut slots: Vec<SlotOutput> = Vec::with_capacity(windows.len());
    for slices in windows {
        let frozen = slots.first().map(|s| s.diagnostics.focused.clone());
        slots.push(multiband_slot(slices, subsystems, plan, geometry, cfg, frozen.as_ref())?);
    }
    let last = slots.last().ok_or(Error::Empty("aggregation window is empty"))?;
    let fused: Vec<SparseCir> = slots.iter().map(|s| s.diagnostics.fused.clone()).collect();
    let aggregated = aggregate_window(&fused, agg)?;
    let report = window_report(&aggregated, geometry, last.report.slot)?;
    Ok(WindowOutput {
        slots,
        aggregated,
        report,
    })
}

/// Normalized `|IDFT|^2` of the synthetic full-band CFR of `cir`, zero-padded
/// by `oversample`, as `(delay, power)` pairs up to `tau_max`.
pub fn power_delay_profile(cir: &SparseCir, plan: &FrequencyPlan, oversample: usize, tau_max: f64) -> Vec<(f64, f64)> {
    let k = plan.num_subcarriers();
    let n = k * oversample.max(1);
    let mut buf = synth_model_cfr(cir, 0..k, plan);
    buf.resize(n, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let step = 1.0 / (n as f64 * plan.delta_f());
    let count = ((tau_max / step).floor() as usize + 1).min(n);
    let power: Vec<f64> = buf[..count].iter().map(|v| v.norm_sqr()).collect();
    let peak = power.iter().copied().fold(0.0, f64::max);
    power
        .into_iter()
        .enumerate()
        .map(|(i, p)| (i as f64 * step, if peak > 0.0 { p / peak } else { 0.0 }))
        .collect()
}
