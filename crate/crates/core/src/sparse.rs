//! Orthogonal matching pursuit over partial Fourier dictionaries.
//!
//! Atoms are `exp(-j 2 pi k delta_f nu) / sqrt(K)`. When the candidate delays
//! sit on a lattice `n / (P delta_f)` with integer `P`, correlations against
//! the residual are computed with one length-`P` FFT instead of a dense
//! matrix product.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::spectrum::FrequencyPlan;
use crate::synth::{channel_at, Path};
use crate::util::{energy, norm};

const DENSE_LIMIT: usize = 1 << 21;

/// Candidate delays of the form `n / (period * delta_f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub delta_f: f64,
    pub period: usize,
    pub indices: Vec<i64>,
}

impl Lattice {
    pub fn unit(&self) -> f64 {
        1.0 / (self.period as f64 * self.delta_f)
    }
}

/// Sorted candidate path delays.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayGrid {
    candidates: Vec<f64>,
    granularity: f64,
    lattice: Option<Lattice>,
}

impl DelayGrid {
    /// Arbitrary non-negative, strictly increasing candidates.
    pub fn new(candidates: Vec<f64>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidGrid("grid needs at least one candidate".into()));
        }
        if candidates.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidGrid("candidates must be finite and non-negative".into()));
        }
        if candidates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("candidates must be strictly increasing".into()));
        }
        let granularity = candidates
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            candidates,
            granularity: if granularity.is_finite() { granularity } else { 0.0 },
            lattice: None,
        })
    }

    /// Lattice points `n / (period delta_f)` for the given strictly increasing `n`.
    ///
    /// Negative indices are accepted: a subsystem observes its paths shifted by
    /// its own timing offset, which may be negative.
    pub fn from_lattice(delta_f: f64, period: usize, indices: Vec<i64>) -> Result<Self> {
        if !(delta_f > 0.0) || period == 0 {
            return Err(Error::InvalidGrid("lattice needs positive spacing and period".into()));
        }
        if indices.is_empty() {
            return Err(Error::InvalidGrid("grid needs at least one candidate".into()));
        }
        if indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("lattice indices must be strictly increasing".into()));
        }
        let lattice = Lattice {
            delta_f,
            period,
            indices,
        };
        let unit = lattice.unit();
        Ok(Self {
            candidates: lattice.indices.iter().map(|&n| n as f64 * unit).collect(),
            granularity: unit,
            lattice: Some(lattice),
        })
    }

    /// Every lattice point in `[lo, hi]` (seconds).
    pub fn lattice_span(delta_f: f64, period: usize, lo: f64, hi: f64) -> Result<Self> {
        let unit = 1.0 / (period as f64 * delta_f);
        let n_lo = (lo / unit - 1e-9).ceil() as i64;
        let n_hi = (hi / unit + 1e-9).floor() as i64;
        if n_hi < n_lo {
            return Err(Error::InvalidGrid(format!("empty span [{lo}, {hi}]")));
        }
        Self::from_lattice(delta_f, period, (n_lo..=n_hi).collect())
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Grid step `delta` (smallest spacing for irregular grids).
    pub fn granularity(&self) -> f64 {
        self.granularity
    }

    pub fn lattice(&self) -> Option<&Lattice> {
        self.lattice.as_ref()
    }

    /// Index of the candidate nearest `delay`.
    pub fn nearest(&self, delay: f64) -> usize {
        let i = self.candidates.partition_point(|&v| v < delay);
        if i == 0 {
            0
        } else if i == self.candidates.len() || delay - self.candidates[i - 1] <= self.candidates[i] - delay {
            i - 1
        } else {
            i
        }
    }
}

/// Per-subsystem grid: step `1/(4 B_i)` over `[-margin, tau_max + margin]`.
pub fn subsystem_grid(k_i: usize, delta_f: f64, tau_max: f64, margin: f64) -> Result<DelayGrid> {
    DelayGrid::lattice_span(delta_f, 4 * k_i, -margin, tau_max + margin)
}

/// Step `1/(8 B)` of the fused and full-band grids.
pub fn fused_step(plan: &FrequencyPlan) -> f64 {
    1.0 / (8.0 * plan.bandwidth())
}

/// Lattice period matching [`fused_step`].
pub fn fused_period(plan: &FrequencyPlan) -> usize {
    8 * plan.num_subcarriers()
}

enum Backend {
    Dense(Vec<Complex64>),
    Fft {
        period: usize,
        fft: Arc<dyn Fft<f64>>,
        bins: Vec<usize>,
    },
}

/// Partial Fourier dictionary `Gamma = A F` restricted to a delay grid.
pub struct Dictionary {
    rows: Vec<usize>,
    grid: Arc<DelayGrid>,
    delta_f: f64,
    scale: f64,
    // Phase numerators `k n mod P` are exact for lattice grids.
    period: Option<usize>,
    backend: Backend,
}

impl fmt::Debug for Dictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dictionary")
            .field("rows", &self.rows.len())
            .field("columns", &self.grid.len())
            .field("fft", &matches!(self.backend, Backend::Fft { .. }))
            .finish()
    }
}

/// Builds `Gamma[m][q] = exp(-j 2 pi k_m delta_f nu_q) / sqrt(K)`.
pub fn build_dictionary(available: &[usize], grid: Arc<DelayGrid>, plan: &FrequencyPlan) -> Result<Dictionary> {
    if available.is_empty() {
        return Err(Error::Empty("dictionary needs at least one subcarrier"));
    }
    let k = plan.num_subcarriers();
    let mut rows = available.to_vec();
    rows.sort_unstable();
    if rows.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Domain("duplicate subcarrier indices".into()));
    }
    if let Some(&last) = rows.last() {
        if last >= k {
            return Err(Error::Domain(format!("subcarrier index {last} outside [0, {k})")));
        }
    }
    let delta_f = plan.delta_f();
    let period = grid.lattice().and_then(|l| {
        let ratio = 1.0 / (l.unit() * delta_f);
        ((ratio - l.period as f64).abs() <= 1e-9 * ratio).then_some(l.period)
    });
    let scale = 1.0 / (k as f64).sqrt();
    let m = rows.len();
    let q = grid.len();

    let backend = match period {
        Some(p) if m * q > DENSE_LIMIT => {
            let lat = grid.lattice().expect("lattice grid");
            Backend::Fft {
                period: p,
                fft: FftPlanner::new().plan_fft_inverse(p),
                bins: lat.indices.iter().map(|&n| n.rem_euclid(p as i64) as usize).collect(),
            }
        }
        _ => Backend::Dense(Vec::new()),
    };
    let mut dict = Dictionary {
        rows,
        grid,
        delta_f,
        scale,
        period,
        backend,
    };
    if let Backend::Dense(_) = dict.backend {
        let mut data = Vec::with_capacity(m * q);
        for col in 0..q {
            data.extend(dict.compute_column(col));
        }
        dict.backend = Backend::Dense(data);
    }
    Ok(dict)
}

impl Dictionary {
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn grid(&self) -> &Arc<DelayGrid> {
        &self.grid
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_columns(&self) -> usize {
        self.grid.len()
    }

    /// The normalizer `1/sqrt(K)`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn uses_fft(&self) -> bool {
        matches!(self.backend, Backend::Fft { .. })
    }

    fn compute_column(&self, q: usize) -> Vec<Complex64> {
        match (self.period, self.grid.lattice()) {
            (Some(p), Some(lat)) => {
                let n = lat.indices[q];
                let p = p as i64;
                self.rows
                    .iter()
                    .map(|&k| {
                        let num = (k as i64 * n).rem_euclid(p);
                        Complex64::from_polar(self.scale, -TAU * num as f64 / p as f64)
                    })
                    .collect()
            }
            _ => {
                let nu = self.grid.candidates()[q];
                self.rows
                    .iter()
                    .map(|&k| Complex64::from_polar(self.scale, -TAU * k as f64 * self.delta_f * nu))
                    .collect()
            }
        }
    }

    pub fn column(&self, q: usize) -> Vec<Complex64> {
        match &self.backend {
            Backend::Dense(data) => {
                let m = self.rows.len();
                data[q * m..(q + 1) * m].to_vec()
            }
            Backend::Fft { .. } => self.compute_column(q),
        }
    }

    /// `Gamma^H r`.
    pub fn correlate(&self, r: &[Complex64]) -> Vec<Complex64> {
        match &self.backend {
            Backend::Dense(data) => {
                let m = self.rows.len();
                data.chunks_exact(m)
                    .map(|col| col.iter().zip(r).map(|(a, b)| a.conj() * b).sum())
                    .collect()
            }
            Backend::Fft { period, fft, bins } => {
                let mut buf = vec![Complex64::new(0.0, 0.0); *period];
                for (&k, v) in self.rows.iter().zip(r) {
                    buf[k % period] += v;
                }
                fft.process(&mut buf);
                bins.iter().map(|&b| buf[b] * self.scale).collect()
            }
        }
    }
}

/// One recovered path on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirEntry {
    pub delay: f64,
    /// Path amplitude in the units of the channel model (the `sqrt(K)`
    /// dictionary normalization is undone).
    pub amplitude: Complex64,
    pub grid_index: usize,
}

/// Sparse CIR estimate on a delay grid; entries sorted by delay.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCir {
    pub entries: Vec<CirEntry>,
    pub grid: Arc<DelayGrid>,
    /// Final `||r|| / ||H||`.
    pub residual_ratio: f64,
    /// Residual norm after each iteration.
    pub residual_history: Vec<f64>,
    /// `false` when the iteration cap was hit above the stopping threshold.
    pub converged: bool,
    /// A selected column was linearly dependent on earlier ones and dropped.
    pub rank_deficient: bool,
}

impl SparseCir {
    pub fn empty(grid: Arc<DelayGrid>) -> Self {
        Self {
            entries: Vec::new(),
            grid,
            residual_ratio: 0.0,
            residual_history: Vec::new(),
            converged: true,
            rank_deficient: false,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn delays(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.delay).collect()
    }

    pub fn paths(&self) -> Vec<Path> {
        self.entries.iter().map(|e| Path::new(e.delay, e.amplitude)).collect()
    }

    /// Whether two estimates live on the same grid.
    pub fn same_grid(&self, other: &SparseCir) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }
}

/// OMP stopping parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmpParams {
    /// Stop once `||r|| <= stop_ratio * ||H||`.
    pub stop_ratio: f64,
    /// Iteration cap; `None` means `min(32, M/2)`.
    pub max_iter: Option<usize>,
    /// Expected noise energy in `H`. When set, iteration also stops once the
    /// residual energy is within two standard deviations of the noise floor.
    pub noise_energy: Option<f64>,
    /// A candidate whose component orthogonal to the selected atoms is below
    /// this fraction of its norm is treated as rank deficient and dropped.
    pub rank_tol: f64,
}

impl Default for OmpParams {
    fn default() -> Self {
        Self {
            stop_ratio: 0.05,
            max_iter: None,
            noise_energy: None,
            rank_tol: 1e-3,
        }
    }
}

impl OmpParams {
    pub fn with_noise_energy(mut self, noise_energy: Option<f64>) -> Self {
        self.noise_energy = noise_energy;
        self
    }

    pub fn iteration_cap(&self, m: usize) -> usize {
        self.max_iter.unwrap_or_else(|| 32.min(m / 2)).max(1)
    }
}

/// Greedy sparse recovery of `H = Gamma h` with a joint least-squares refit
/// after every selection.
pub fn omp_solve(h: &[Complex64], dict: &Dictionary, params: &OmpParams) -> Result<SparseCir> {
    let m = dict.num_rows();
    if h.len() != m {
        return Err(Error::LengthMismatch { expected: m, got: h.len() });
    }
    if !(params.stop_ratio > 0.0 && params.stop_ratio < 1.0) {
        return Err(Error::Domain(format!("stop ratio must lie in (0, 1), got {}", params.stop_ratio)));
    }
    let h_norm = norm(h);
    if h_norm == 0.0 {
        return Ok(SparseCir::empty(dict.grid.clone()));
    }
    let mut threshold = (params.stop_ratio * h_norm).powi(2);
    if let Some(noise) = params.noise_energy {
        threshold = threshold.max(noise * (1.0 + 2.0 / (m as f64).sqrt()));
    }
    let cap = params.iteration_cap(m).min(dict.num_columns());

    let mut r = h.to_vec();
    let mut blocked = vec![false; dict.num_columns()];
    let mut selected: Vec<usize> = Vec::new();
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    // Column j of R holds the projections of atom j onto basis 0..=j.
    let mut r_cols: Vec<Vec<Complex64>> = Vec::new();
    let mut y: Vec<Complex64> = Vec::new();
    let mut history = Vec::new();
    let mut rank_deficient = false;
    let mut converged = false;

    for _ in 0..cap {
        if energy(&r) <= threshold {
            converged = true;
            break;
        }
        let corr = dict.correlate(&r);
        let mut best: Option<(usize, f64)> = None;
        for (q, c) in corr.iter().enumerate() {
            if blocked[q] {
                continue;
            }
            let mag = c.norm_sqr();
            if best.is_none_or(|(_, b)| mag > b) {
                best = Some((q, mag));
            }
        }
        let Some((q, mag)) = best else { break };
        if mag == 0.0 {
            break;
        }
        blocked[q] = true;

        let atom = dict.column(q);
        let atom_norm = norm(&atom);
        let mut v = atom.clone();
        let mut proj = vec![Complex64::new(0.0, 0.0); basis.len()];
        for _ in 0..2 {
            for (j, b) in basis.iter().enumerate() {
                let c: Complex64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
                proj[j] += c;
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let v_norm = norm(&v);
        if v_norm <= params.rank_tol * atom_norm {
            rank_deficient = true;
            continue;
        }
        v.iter_mut().for_each(|x| *x /= v_norm);
        let z: Complex64 = v.iter().zip(&r).map(|(a, b)| a.conj() * b).sum();
        r.iter_mut().zip(&v).for_each(|(x, b)| *x -= z * b);
        proj.push(Complex64::new(v_norm, 0.0));
        r_cols.push(proj);
        basis.push(v);
        y.push(z);
        selected.push(q);
        history.push(norm(&r));
    }
    if !converged && energy(&r) <= threshold {
        converged = true;
    }

    // Back substitution R x = y.
    let n = selected.len();
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut acc = y[i];
        for j in i + 1..n {
            acc -= r_cols[j][i] * x[j];
        }
        x[i] = acc / r_cols[i][i];
    }

    let candidates = dict.grid.candidates();
    let mut entries: Vec<CirEntry> = selected
        .iter()
        .zip(&x)
        .map(|(&q, &amp)| CirEntry {
            delay: candidates[q],
            amplitude: amp * dict.scale,
            grid_index: q,
        })
        .collect();
    entries.sort_by(|a, b| a.delay.total_cmp(&b.delay));

    Ok(SparseCir {
        entries,
        grid: dict.grid.clone(),
        residual_ratio: norm(&r) / h_norm,
        residual_history: history,
        converged,
        rank_deficient,
    })
}

/// Synthetic CFR `sum_l amp_l exp(-j 2 pi k delta_f nu_l)` for `k` in `k_range`.
pub fn synth_model_cfr(cir: &SparseCir, k_range: Range<usize>, plan: &FrequencyPlan) -> Vec<Complex64> {
    channel_at(&cir.paths(), k_range, plan.delta_f())
}

/// Same as [`synth_model_cfr`] over explicit indices.
pub fn synth_model_at(cir: &SparseCir, indices: &[usize], plan: &FrequencyPlan) -> Vec<Complex64> {
    channel_at(&cir.paths(), indices.iter().copied(), plan.delta_f())
}
