//! Frequency-plan bookkeeping and closed-form resolution formulas.
//!
//! The full band is a uniform grid of `K` virtual subcarriers spaced `delta_f`
//! apart, starting at `f0`. Subsystems and their subbands are addressed by
//! absolute indices into that grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Delay resolution `1/B` of a band of width `bandwidth` Hz.
pub fn delay_resolution(bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    Ok(1.0 / bandwidth)
}

/// Range resolution `c / (2 B cos(beta/2))` for bi-static angle `beta`.
///
/// `beta = 0` is the mono-static case `c / 2B`.
pub fn range_resolution(bandwidth: f64, beta: f64) -> Result<f64> {
    let dt = delay_resolution(bandwidth)?;
    if !(0.0..std::f64::consts::PI).contains(&beta) {
        return Err(Error::Domain(format!(
            "bi-static angle must lie in [0, pi), got {beta}"
        )));
    }
    Ok(SPEED_OF_LIGHT * dt / (2.0 * (beta / 2.0).cos()))
}

/// The virtual full band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPlan {
    f0: f64,
    bandwidth: f64,
    delta_f: f64,
    num_subcarriers: usize,
}

impl FrequencyPlan {
    /// Builds a plan, snapping the bandwidth to an integer number of subcarriers.
    pub fn new(f0: f64, bandwidth: f64, delta_f: f64) -> Result<Self> {
        if !(delta_f > 0.0) || !delta_f.is_finite() {
            return Err(Error::InvalidPlan(format!("subcarrier spacing must be positive, got {delta_f}")));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() || !f0.is_finite() {
            return Err(Error::InvalidPlan(format!("bandwidth must be positive, got {bandwidth}")));
        }
        let k = (bandwidth / delta_f).round();
        if k < 2.0 {
            return Err(Error::InvalidPlan(format!(
                "plan needs at least 2 subcarriers, got {k}"
            )));
        }
        let num_subcarriers = k as usize;
        Ok(Self {
            f0,
            bandwidth: num_subcarriers as f64 * delta_f,
            delta_f,
            num_subcarriers,
        })
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    /// Snapped virtual bandwidth `K * delta_f`.
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    /// Number of virtual subcarriers `K`.
    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    /// Nearest grid index of an absolute frequency.
    pub fn index_of(&self, freq: f64) -> i64 {
        ((freq - self.f0) / self.delta_f).round() as i64
    }

    pub fn frequency_of(&self, index: usize) -> f64 {
        self.f0 + index as f64 * self.delta_f
    }
}

/// A contiguous block of measured subcarriers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubbandSpec {
    pub start_index: usize,
    pub width: usize,
}

impl SubbandSpec {
    pub fn new(start_index: usize, width: usize) -> Self {
        Self { start_index, width }
    }

    /// One past the last absolute index.
    pub fn end_index(&self) -> usize {
        self.start_index + self.width
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start_index..self.end_index()
    }
}

/// How a subsystem's anchor path is picked out of its coarse estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorPolicy {
    /// Earliest path among the strong ones.
    MinDelayMaxPower,
    /// Path nearest a delay localized beforehand (seconds).
    KnownDelay(f64),
}

/// How channel estimates reach the processor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Technology {
    /// Per-subcarrier CFR estimates.
    #[default]
    Ofdm,
    /// Time-domain CIR taps that are converted to a CFR with a DFT.
    SingleCarrier,
}

/// One TX-RX pair: all of its subbands share a clock and hence the same offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsystemSpec {
    pub id: usize,
    /// Start frequency `f_i` (Hz, absolute).
    pub start_hz: f64,
    /// Subsystem bandwidth `B_i` (Hz).
    pub bandwidth: f64,
    pub subbands: Vec<SubbandSpec>,
    pub anchor_policy: AnchorPolicy,
    #[serde(default)]
    pub technology: Technology,
}

impl SubsystemSpec {
    /// A subsystem whose band is exactly the span of its subbands.
    pub fn spanning(
        id: usize,
        plan: &FrequencyPlan,
        subbands: Vec<SubbandSpec>,
        anchor_policy: AnchorPolicy,
    ) -> Self {
        let lo = subbands.iter().map(|s| s.start_index).min().unwrap_or(0);
        let hi = subbands.iter().map(|s| s.end_index()).max().unwrap_or(lo);
        Self {
            id,
            start_hz: plan.frequency_of(lo),
            bandwidth: (hi - lo) as f64 * plan.delta_f(),
            subbands,
            anchor_policy,
            technology: Technology::Ofdm,
        }
    }

    pub fn with_technology(mut self, technology: Technology) -> Self {
        self.technology = technology;
        self
    }

    pub fn is_reference(&self) -> bool {
        self.id == 1
    }

    /// Virtual subcarrier count `K_i`.
    pub fn num_subcarriers(&self, plan: &FrequencyPlan) -> usize {
        (self.bandwidth / plan.delta_f()).round() as usize
    }

    /// Available subcarrier count `M_i`.
    pub fn num_available(&self) -> usize {
        self.subbands.iter().map(|s| s.width).sum()
    }

    /// Absolute indices of every available subcarrier, in subband order.
    pub fn available_indices(&self) -> Vec<usize> {
        self.subbands.iter().flat_map(|s| s.indices()).collect()
    }
}

/// Mono-static or bi-static TX/RX placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryMode {
    MonoStatic,
    BiStatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub mode: GeometryMode,
    /// TX-RX distance `D` (m).
    pub baseline_m: f64,
    /// Bi-static angle `beta` (rad); ignored for mono-static.
    #[serde(default)]
    pub bistatic_angle: f64,
}

impl Geometry {
    pub fn mono_static() -> Self {
        Self {
            mode: GeometryMode::MonoStatic,
            baseline_m: 0.0,
            bistatic_angle: 0.0,
        }
    }

    pub fn bi_static(baseline_m: f64, bistatic_angle: f64) -> Result<Self> {
        let g = Self {
            mode: GeometryMode::BiStatic,
            baseline_m,
            bistatic_angle,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.baseline_m >= 0.0) {
            return Err(Error::Domain(format!("baseline must be non-negative, got {}", self.baseline_m)));
        }
        if self.mode == GeometryMode::BiStatic
            && !(self.bistatic_angle > 0.0 && self.bistatic_angle < std::f64::consts::PI)
        {
            return Err(Error::Domain(format!(
                "bi-static angle must lie in (0, pi), got {}",
                self.bistatic_angle
            )));
        }
        Ok(())
    }

    /// Angle entering the range-resolution formula (0 when mono-static).
    pub fn effective_angle(&self) -> f64 {
        match self.mode {
            GeometryMode::MonoStatic => 0.0,
            GeometryMode::BiStatic => self.bistatic_angle,
        }
    }
}

/// Outcome of [`validate_plan`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlanReport {
    pub violations: Vec<String>,
    /// `M * delta_f` (Hz).
    pub effective_bandwidth: f64,
    /// `K * delta_f` (Hz).
    pub virtual_bandwidth: f64,
}

impl PlanReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every structural constraint on a plan and its subsystems.
pub fn validate_plan(plan: &FrequencyPlan, subsystems: &[SubsystemSpec]) -> PlanReport {
    let mut violations = Vec::new();
    let k = plan.num_subcarriers();
    let df = plan.delta_f();
    let tol = 0.5 * df;

    if subsystems.is_empty() {
        violations.push("no subsystems configured".to_string());
    }
    if !subsystems.iter().any(SubsystemSpec::is_reference) {
        violations.push("reference subsystem (id 1) is missing".to_string());
    }
    let mut ids: Vec<usize> = subsystems.iter().map(|s| s.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        violations.push("duplicate subsystem ids".to_string());
    }

    let band_lo = plan.f0();
    let band_hi = plan.f0() + plan.bandwidth();
    let mut total_available = 0usize;

    for sub in subsystems {
        let id = sub.id;
        if id == 0 {
            violations.push("subsystem ids start at 1".to_string());
        }
        if !(sub.bandwidth > 0.0) {
            violations.push(format!("subsystem {id}: bandwidth must be positive"));
        }
        if sub.subbands.is_empty() {
            violations.push(format!("subsystem {id}: no subbands"));
        }
        let sub_lo = sub.start_hz;
        let sub_hi = sub.start_hz + sub.bandwidth;
        if sub_lo < band_lo - tol || sub_hi > band_hi + tol {
            violations.push(format!(
                "subsystem {id}: band [{sub_lo}, {sub_hi}] Hz exceeds the full band [{band_lo}, {band_hi}] Hz"
            ));
        }
        for (s, sb) in sub.subbands.iter().enumerate() {
            if sb.width < 2 {
                violations.push(format!("subsystem {id}, subband {s}: width {} < 2", sb.width));
            }
            if sb.end_index() > k {
                violations.push(format!(
                    "subsystem {id}, subband {s}: indices {}..{} exceed K = {k}",
                    sb.start_index,
                    sb.end_index()
                ));
            }
            let f_lo = plan.f0() + sb.start_index as f64 * df;
            let f_hi = plan.f0() + sb.end_index() as f64 * df;
            if f_lo < sub_lo - tol || f_hi > sub_hi + tol {
                violations.push(format!(
                    "subsystem {id}, subband {s}: [{f_lo}, {f_hi}] Hz lies outside the subsystem band"
                ));
            }
        }
        for (s, pair) in sub.subbands.windows(2).enumerate() {
            if pair[1].start_index < pair[0].start_index {
                violations.push(format!("subsystem {id}: subbands {s} and {} are not sorted", s + 1));
            } else if pair[1].start_index < pair[0].end_index() {
                violations.push(format!("subsystem {id}: subbands {s} and {} overlap", s + 1));
            }
        }
        let m_i = sub.num_available();
        let k_i = sub.num_subcarriers(plan);
        if m_i > k_i {
            violations.push(format!("subsystem {id}: {m_i} available subcarriers exceed K_i = {k_i}"));
        }
        total_available += m_i;
    }

    PlanReport {
        violations,
        effective_bandwidth: total_available as f64 * df,
        virtual_bandwidth: plan.bandwidth(),
    }
}
