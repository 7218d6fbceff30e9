//! Eavesdropper measurements on Bob's photon.
//!
//! Every discrete attack here is a POM diagonal in the time-bin basis,
//! `Π_k = Σ_n λ[k][n] |n><n|`, stored as one sparse row per outcome. The
//! measurement back-action is the square-root (Lüders) form `√Π_k`.
//! Continuous attacks describe `Π(t) = ∫ β(t; t') |t'><t'| dt'`.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statevec::{BiphotonState, EnvelopeFunction, FrameSpec};

/// Completeness tolerance enforced on constructor output.
pub const COMPLETENESS_TOLERANCE: f64 = 1e-10;

/// Weights below this fraction of the kernel peak are dropped from Gaussian
/// windows before per-bin normalization.
const GAUSSIAN_CUTOFF: f64 = 1e-20;

/// How bin offsets that leave `[0, M)` are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexingMode {
    /// Offsets wrap mod `M`.
    #[default]
    Cyclic,
    /// Out-of-frame offsets are dropped and each bin is renormalized.
    Truncated,
}

/// Reading of the exponent in the Gaussian peak weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianExponent {
    /// `exp(-α x²)`.
    #[default]
    Squared,
    /// `exp(-α |x|)`.
    Absolute,
    /// `exp(-α x)`, the exponent exactly as printed without square or modulus.
    Signed,
}

impl GaussianExponent {
    pub const ALL: [GaussianExponent; 3] = [
        GaussianExponent::Squared,
        GaussianExponent::Absolute,
        GaussianExponent::Signed,
    ];

    fn apply(self, alpha: f64, x: f64) -> f64 {
        match self {
            GaussianExponent::Squared => (-alpha * x * x).exp(),
            GaussianExponent::Absolute => (-alpha * x.abs()).exp(),
            GaussianExponent::Signed => (-alpha * x).exp(),
        }
    }
}

/// A diagonal POM `λ[k][n]` on an `M`-bin frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalAttack {
    frame: FrameSpec,
    rows: Vec<Vec<(usize, f64)>>,
    mode: IndexingMode,
}

impl DiagonalAttack {
    /// Builds an attack from raw per-outcome rows. Rows are sorted and merged;
    /// completeness is not enforced (see [`DiagonalAttack::completeness_deviation`]).
    pub fn from_rows(frame: FrameSpec, rows: Vec<Vec<(usize, f64)>>, mode: IndexingMode) -> Result<Self> {
        let mut clean = Vec::with_capacity(rows.len());
        for row in rows {
            let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
            for (bin, w) in row {
                frame.check_bin(bin)?;
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(Error::InvalidParameter(format!("POM weight {w} is not >= 0")));
                }
                *merged.entry(bin).or_insert(0.0) += w;
            }
            clean.push(merged.into_iter().filter(|&(_, w)| w > 0.0).collect());
        }
        if clean.is_empty() {
            return Err(Error::InvalidParameter("attack has no outcomes".into()));
        }
        Ok(Self {
            frame,
            rows: clean,
            mode,
        })
    }

    /// Builds from unnormalized rows, dividing each bin's column by its sum.
    fn normalized_columns(frame: FrameSpec, rows: Vec<Vec<(usize, f64)>>, mode: IndexingMode) -> Result<Self> {
        let mut attack = Self::from_rows(frame, rows, mode)?;
        let mut col = vec![0.0; frame.num_bins()];
        for row in &attack.rows {
            for &(n, w) in row {
                col[n] += w;
            }
        }
        if let Some(n) = col.iter().position(|&z| z <= 0.0) {
            return Err(Error::PeakLayout(format!("bin {n} is not covered by any outcome")));
        }
        for row in &mut attack.rows {
            for (n, w) in row.iter_mut() {
                *w /= col[*n];
            }
        }
        Ok(attack)
    }

    pub fn frame(&self) -> &FrameSpec {
        &self.frame
    }

    pub fn indexing_mode(&self) -> IndexingMode {
        self.mode
    }

    pub fn num_outcomes(&self) -> usize {
        self.rows.len()
    }

    /// Nonzero `(bin, λ)` entries of outcome `k`, ascending by bin.
    pub fn row(&self, k: usize) -> &[(usize, f64)] {
        &self.rows[k]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn weight(&self, k: usize, n: usize) -> f64 {
        let row = &self.rows[k];
        row.binary_search_by_key(&n, |&(b, _)| b)
            .map(|i| row[i].1)
            .unwrap_or(0.0)
    }

    /// `max_n |Σ_k λ[k][n] - 1|`.
    pub fn completeness_deviation(&self) -> f64 {
        let mut col = vec![0.0; self.frame.num_bins()];
        for row in &self.rows {
            for &(n, w) in row {
                col[n] += w;
            }
        }
        col.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// `λ[k][n] = δ(k, n)`.
pub fn sharp_attack(frame: FrameSpec) -> DiagonalAttack {
    let rows = (0..frame.num_bins()).map(|k| vec![(k, 1.0)]).collect();
    DiagonalAttack {
        frame,
        rows,
        mode: IndexingMode::Cyclic,
    }
}

/// `M/L` outcomes, outcome `k` covering bins `kL .. (k+1)L - 1` with weight 1.
pub fn square_window_attack(frame: FrameSpec, window: usize) -> Result<DiagonalAttack> {
    let m = frame.num_bins();
    if window == 0 || !m.is_multiple_of(window) {
        return Err(Error::WindowDoesNotDivide { window, num_bins: m });
    }
    let rows = (0..m / window)
        .map(|k| (k * window..(k + 1) * window).map(|n| (n, 1.0)).collect())
        .collect();
    Ok(DiagonalAttack {
        frame,
        rows,
        mode: IndexingMode::Cyclic,
    })
}

/// One outcome per bin, each covering `window` consecutive bins starting at
/// `k` with cyclic wrap. Defined for any `window` in `1..=M`.
pub fn sliding_window_attack(frame: FrameSpec, window: usize) -> Result<DiagonalAttack> {
    let m = frame.num_bins();
    if window == 0 || window > m {
        return Err(Error::InvalidParameter(format!("window {window} not in 1..={m}")));
    }
    let weight = 1.0 / window as f64;
    let rows = (0..m)
        .map(|k| {
            let mut row: Vec<(usize, f64)> = (0..window).map(|i| ((k + i) % m, weight)).collect();
            row.sort_unstable_by_key(|&(n, _)| n);
            row
        })
        .collect();
    Ok(DiagonalAttack {
        frame,
        rows,
        mode: IndexingMode::Cyclic,
    })
}

/// One outcome per bin, `λ[k][n] = exp(-(k-n)²/a) / Z_n`. In cyclic mode
/// `k - n` is the cyclic bin distance.
pub fn gaussian_window_attack(frame: FrameSpec, width: f64, mode: IndexingMode) -> Result<DiagonalAttack> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::InvalidParameter(format!("Gaussian width must be > 0, got {width}")));
    }
    let m = frame.num_bins() as i64;
    // exp(-d²/a) < cutoff beyond this distance
    let reach = ((-GAUSSIAN_CUTOFF.ln()) * width).sqrt().floor() as i64;
    let reach = reach.min(m - 1);
    let mut rows = Vec::with_capacity(m as usize);
    for k in 0..m {
        let mut row = Vec::new();
        match mode {
            IndexingMode::Cyclic => {
                let half = reach.min(m / 2);
                let mut seen = std::collections::BTreeSet::new();
                for d in -half..=half {
                    let n = (k + d).rem_euclid(m);
                    if seen.insert(n) {
                        let dist = ((k - n).rem_euclid(m)).min((n - k).rem_euclid(m)) as f64;
                        row.push((n as usize, (-dist * dist / width).exp()));
                    }
                }
            }
            IndexingMode::Truncated => {
                for n in (k - reach).max(0)..=(k + reach).min(m - 1) {
                    let d = (k - n) as f64;
                    row.push((n as usize, (-d * d / width).exp()));
                }
            }
        }
        rows.push(row);
    }
    DiagonalAttack::normalized_columns(frame, rows, mode)
}

/// Peak layout and weights for multi-peaked attacks: `peaks_per_axis^d`
/// peaks on the grid `Σ_i n_i Δ_i`, `n_i ∈ [0, w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiPeakShape {
    peaks_per_axis: usize,
    spacings: Vec<usize>,
    /// Row-major over `(n_1, ..., n_d)`, `n_d` fastest.
    weights: Vec<f64>,
}

impl MultiPeakShape {
    pub fn new(peaks_per_axis: usize, spacings: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if peaks_per_axis == 0 {
            return Err(Error::InvalidParameter("need at least one peak".into()));
        }
        if spacings.is_empty() || spacings.contains(&0) {
            return Err(Error::InvalidParameter("spacings must be nonempty and >= 1".into()));
        }
        let count = checked_grid_size(peaks_per_axis, spacings.len())?;
        if weights.len() != count {
            return Err(Error::InvalidParameter(format!(
                "expected {count} peak weights, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("peak weights must be >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("peak weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            peaks_per_axis,
            spacings,
            weights,
        })
    }

    /// Equal weights `1/w^d`.
    pub fn flat(peaks_per_axis: usize, spacings: Vec<usize>) -> Result<Self> {
        let count = checked_grid_size(peaks_per_axis, spacings.len())?;
        Self::new(peaks_per_axis, spacings, vec![1.0; count])
    }

    pub fn peaks_per_axis(&self) -> usize {
        self.peaks_per_axis
    }

    pub fn spacings(&self) -> &[usize] {
        &self.spacings
    }

    pub fn dims(&self) -> usize {
        self.spacings.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(Σ_i n_i Δ_i, Γ)` for every grid point.
    pub fn offsets(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let w = self.peaks_per_axis;
        self.weights.iter().enumerate().map(move |(idx, &g)| {
            let mut rem = idx;
            let mut off = 0;
            for &s in self.spacings.iter().rev() {
                off += (rem % w) * s;
                rem /= w;
            }
            (off, g)
        })
    }

    /// Largest offset `(w-1) Σ Δ_i`.
    pub fn span(&self) -> usize {
        (self.peaks_per_axis - 1) * self.spacings.iter().sum::<usize>()
    }
}

fn checked_grid_size(w: usize, d: usize) -> Result<usize> {
    u32::try_from(d)
        .ok()
        .and_then(|d| w.checked_pow(d))
        .filter(|&n| n <= 1 << 24)
        .ok_or_else(|| Error::InvalidParameter(format!("peak grid {w}^{d} too large")))
}

/// Product Gaussian weights `Γ ∝ Π_i exp(-α f(n_i - (w-1)/2))` on a
/// `w^d` grid, with `d = spacings.len()`.
pub fn gaussian_grid_weights(
    peaks_per_axis: usize,
    spacings: Vec<usize>,
    alpha: f64,
    exponent: GaussianExponent,
) -> Result<MultiPeakShape> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("α must be > 0, got {alpha}")));
    }
    let w = peaks_per_axis;
    let d = spacings.len();
    let count = checked_grid_size(w, d)?;
    let center = (w as f64 - 1.0) / 2.0;
    let axis: Vec<f64> = (0..w)
        .map(|n| exponent.apply(alpha, n as f64 - center))
        .collect();
    let weights = (0..count)
        .map(|idx| {
            let mut rem = idx;
            let mut g = 1.0;
            for _ in 0..d {
                g *= axis[rem % w];
                rem /= w;
            }
            g
        })
        .collect();
    MultiPeakShape::new(peaks_per_axis, spacings, weights)
}

fn peaked_attack(
    frame: FrameSpec,
    shape: &MultiPeakShape,
    mode: IndexingMode,
    forward: bool,
) -> Result<DiagonalAttack> {
    let m = frame.num_bins();
    if shape.span() >= m {
        return Err(Error::PeakLayout(format!(
            "peaks span {} bins, frame has {m}",
            shape.span() + 1
        )));
    }
    let offsets: Vec<(usize, f64)> = shape.offsets().collect();
    let mut distinct: Vec<usize> = offsets.iter().map(|&(o, _)| o).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != offsets.len() && mode == IndexingMode::Truncated {
        return Err(Error::PeakLayout("grid offsets collide".into()));
    }
    let rows = (0..m)
        .map(|k| {
            offsets
                .iter()
                .filter_map(|&(off, g)| {
                    let bin = if forward { k as i64 + off as i64 } else { k as i64 - off as i64 };
                    match mode {
                        IndexingMode::Cyclic => Some((bin.rem_euclid(m as i64) as usize, g)),
                        IndexingMode::Truncated => {
                            (0..m as i64).contains(&bin).then_some((bin as usize, g))
                        }
                    }
                })
                .collect()
        })
        .collect();
    match mode {
        // Γ sums to one and every bin sees each offset exactly once.
        IndexingMode::Cyclic => DiagonalAttack::from_rows(frame, rows, mode),
        IndexingMode::Truncated => DiagonalAttack::normalized_columns(frame, rows, mode),
    }
}

/// Single-axis multi-peaked attack: outcome `k` weights bin `k - nΔe` by `Γ_n`.
pub fn multipeak_attack(frame: FrameSpec, shape: &MultiPeakShape, mode: IndexingMode) -> Result<DiagonalAttack> {
    if shape.dims() != 1 {
        return Err(Error::InvalidParameter(format!(
            "single-axis multipeak needs one spacing, got {}",
            shape.dims()
        )));
    }
    peaked_attack(frame, shape, mode, false)
}

/// Product-grid attack: outcome `k` weights bin `k + Σ n_i Δ_i` by `Γ_{n_1..n_d}`.
pub fn product_multipeak_attack(
    frame: FrameSpec,
    shape: &MultiPeakShape,
    mode: IndexingMode,
) -> Result<DiagonalAttack> {
    peaked_attack(frame, shape, mode, true)
}

/// Result of one attack outcome on a biphoton state.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub outcome: usize,
    pub probability: f64,
    pub post_state: BiphotonState,
}

struct BobGrouped {
    by_bob: BTreeMap<usize, Vec<(usize, Complex64)>>,
}

impl BobGrouped {
    fn new(state: &BiphotonState) -> Self {
        let mut by_bob: BTreeMap<usize, Vec<(usize, Complex64)>> = BTreeMap::new();
        for ((a, b), amp) in state.amplitudes() {
            by_bob.entry(b).or_default().push((a, amp));
        }
        Self { by_bob }
    }

    fn marginal(&self, bob: usize) -> f64 {
        self.by_bob
            .get(&bob)
            .map(|v| v.iter().map(|(_, a)| a.norm_sqr()).sum())
            .unwrap_or(0.0)
    }

    fn outcome(&self, state: &BiphotonState, attack: &DiagonalAttack, k: usize) -> Result<AttackOutcome> {
        let row = attack.row(k);
        let probability: f64 = row.iter().map(|&(n, lam)| lam * self.marginal(n)).sum();
        if probability <= 0.0 {
            return Err(Error::ZeroProbabilityOutcome { outcome: k });
        }
        let scale = 1.0 / probability.sqrt();
        let mut amplitudes = BTreeMap::new();
        for &(n, lam) in row {
            if let Some(entries) = self.by_bob.get(&n) {
                let root = lam.sqrt() * scale;
                for &(a, amp) in entries {
                    amplitudes.insert((a, n), amp * root);
                }
            }
        }
        Ok(AttackOutcome {
            outcome: k,
            probability,
            post_state: BiphotonState::from_map(*state.frame(), amplitudes),
        })
    }
}

fn check_frames(state: &BiphotonState, attack: &DiagonalAttack) -> Result<()> {
    if state.frame() != attack.frame() {
        return Err(Error::FrameMismatch {
            left: state.frame().num_bins(),
            right: attack.frame().num_bins(),
        });
    }
    Ok(())
}

/// Applies outcome `k` of `attack` to Bob's photon:
/// probability `Σ_n λ[k][n] P_B(n)`, post-state `(1 ⊗ √Π_k)|ψ>` normalized.
pub fn apply_attack(state: &BiphotonState, attack: &DiagonalAttack, k: usize) -> Result<AttackOutcome> {
    check_frames(state, attack)?;
    if k >= attack.num_outcomes() {
        return Err(Error::InvalidParameter(format!("outcome {k} out of range")));
    }
    BobGrouped::new(state).outcome(state, attack, k)
}

/// Samples Eve's outcome from the Born rule, then applies it.
pub fn apply_attack_sampled<R: Rng + ?Sized>(
    state: &BiphotonState,
    attack: &DiagonalAttack,
    rng: &mut R,
) -> Result<AttackOutcome> {
    check_frames(state, attack)?;
    let grouped = BobGrouped::new(state);
    let probs: Vec<f64> = attack
        .rows()
        .iter()
        .map(|row| row.iter().map(|&(n, lam)| lam * grouped.marginal(n)).sum())
        .collect();
    let total: f64 = probs.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut chosen = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    for (k, &p) in probs.iter().enumerate() {
        if u < p {
            chosen = k;
            break;
        }
        u -= p;
    }
    grouped.outcome(state, attack, chosen)
}

/// All outcomes with nonzero probability, ascending by outcome index.
pub fn apply_attack_all(state: &BiphotonState, attack: &DiagonalAttack) -> Result<Vec<AttackOutcome>> {
    check_frames(state, attack)?;
    let grouped = BobGrouped::new(state);
    let mut out = Vec::with_capacity(attack.num_outcomes());
    for k in 0..attack.num_outcomes() {
        match grouped.outcome(state, attack, k) {
            Ok(o) => out.push(o),
            Err(Error::ZeroProbabilityOutcome { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

type DiscreteBeta = dyn Fn(f64) -> f64 + Send + Sync;

/// Continuous-time eavesdropper POM.
#[derive(Clone)]
pub enum ContinuousAttack {
    /// Comb of `L` square windows of width `δ`:
    /// `β(t_e; t') = (1/(Lδ)) Σ_m 1[t' ∈ [t_e - mΔe, t_e - mΔe + δ)]`.
    WindowComb {
        width: f64,
        spacing: f64,
        peaks: usize,
    },
    /// Discrete outcomes `β_μ(t')`, which must sum to one for every `t'`.
    Discrete(Vec<Arc<DiscreteBeta>>),
}

impl std::fmt::Debug for ContinuousAttack {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ContinuousAttack::WindowComb {
                width,
                spacing,
                peaks,
            } => f
                .debug_struct("WindowComb")
                .field("width", width)
                .field("spacing", spacing)
                .field("peaks", peaks)
                .finish(),
            ContinuousAttack::Discrete(b) => write!(f, "Discrete({} outcomes)", b.len()),
        }
    }
}

/// Multi-peaked continuous attack built from square windows.
pub fn continuous_multipeak(width: f64, spacing: f64, peaks: usize) -> Result<ContinuousAttack> {
    if peaks == 0 || !(width > 0.0) || !width.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need peaks >= 1 and width > 0, got {peaks}, {width}"
        )));
    }
    if peaks > 1 && width >= spacing {
        return Err(Error::OverlappingWindows { width, spacing });
    }
    Ok(ContinuousAttack::WindowComb {
        width,
        spacing,
        peaks,
    })
}

impl ContinuousAttack {
    /// Unnormalized window indicator `Σ_m 1[t' ∈ [t_e - mΔe, t_e - mΔe + δ)]`
    /// for outcome `t_e`. Only defined for window combs.
    pub fn window(&self, t_e: f64, t_prime: f64) -> f64 {
        match *self {
            ContinuousAttack::WindowComb {
                width,
                spacing,
                peaks,
            } => (0..peaks)
                .filter(|&m| {
                    let lo = t_e - m as f64 * spacing;
                    t_prime >= lo && t_prime < lo + width
                })
                .count() as f64,
            ContinuousAttack::Discrete(_) => f64::NAN,
        }
    }

    /// `β(t; t')` for the window comb.
    pub fn density(&self, t: f64, t_prime: f64) -> f64 {
        match *self {
            ContinuousAttack::WindowComb { width, peaks, .. } => {
                self.window(t, t_prime) / (peaks as f64 * width)
            }
            ContinuousAttack::Discrete(_) => f64::NAN,
        }
    }

    /// `max |∫ β(t; t') dt - 1|` (or `max |Σ_μ β_μ(t') - 1|`) over `probes`.
    pub fn completeness_deviation(&self, probes: &[f64]) -> f64 {
        match self {
            ContinuousAttack::WindowComb {
                width,
                spacing,
                peaks,
            } => probes
                .iter()
                .map(|&tp| {
                    // β(·; t') is piecewise constant between these breakpoints.
                    let mut cuts: Vec<f64> = (0..*peaks)
                        .flat_map(|m| {
                            let c = tp + m as f64 * spacing;
                            [c - width, c]
                        })
                        .collect();
                    cuts.sort_by(f64::total_cmp);
                    let integral = integrate_piecewise(|t| self.density(t, tp), &cuts, 4);
                    (integral - 1.0).abs()
                })
                .fold(0.0, f64::max),
            ContinuousAttack::Discrete(betas) => probes
                .iter()
                .map(|&tp| (betas.iter().map(|b| b(tp)).sum::<f64>() - 1.0).abs())
                .fold(0.0, f64::max),
        }
    }

    /// Post-measurement envelope `β_window(t_e; t_b) g(t_a, t_b)` for outcome
    /// `t_e`, left unnormalized so conditional detection densities compare
    /// directly with those of `g`.
    pub fn post_envelope(&self, g: &EnvelopeFunction, t_e: f64) -> Result<EnvelopeFunction> {
        if let ContinuousAttack::Discrete(_) = self {
            return Err(Error::InvalidParameter(
                "post-measurement envelope needs a window comb".into(),
            ));
        }
        let attack = self.clone();
        let inner = g.clone();
        let (lo, hi) = g.support();
        Ok(EnvelopeFunction::new(
            move |ta, tb| inner.eval(ta, tb) * attack.window(t_e, tb),
            lo,
            hi,
        )?
        .with_resolution(g.resolution()))
    }
}

/// Midpoint rule on each interval between consecutive `cuts`.
fn integrate_piecewise<F: Fn(f64) -> f64>(f: F, cuts: &[f64], per_piece: usize) -> f64 {
    cuts.windows(2)
        .map(|w| {
            let h = (w[1] - w[0]) / per_piece as f64;
            (0..per_piece)
                .map(|i| f(w[0] + (i as f64 + 0.5) * h))
                .sum::<f64>()
                * h
        })
        .sum()
}

/// Completeness deviation for either attack form. Continuous attacks are
/// probed on a grid over `[0, extent)`.
pub fn validate_completeness(attack: &AnyAttack<'_>) -> f64 {
    match attack {
        AnyAttack::Diagonal(a) => a.completeness_deviation(),
        AnyAttack::Continuous(a, extent) => {
            let probes: Vec<f64> = (0..997).map(|i| extent * (i as f64 + 0.31) / 997.0).collect();
            a.completeness_deviation(&probes)
        }
    }
}

/// Borrowed view over either attack form.
pub enum AnyAttack<'a> {
    Diagonal(&'a DiagonalAttack),
    Continuous(&'a ContinuousAttack, f64),
}

/// Peak weighting in a serialized attack.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum PeakWeights {
    #[default]
    Flat,
    Gaussian {
        alpha: f64,
        #[serde(default)]
        exponent: GaussianExponent,
    },
}

/// Attack family and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackKind {
    Sharp,
    SquareWindow {
        window: usize,
    },
    SlidingWindow {
        window: usize,
    },
    GaussianWindow {
        width: f64,
    },
    Multipeak {
        peaks: usize,
        spacing: usize,
        #[serde(default)]
        weights: PeakWeights,
    },
    Product {
        peaks_per_axis: usize,
        spacings: Vec<usize>,
        #[serde(default)]
        weights: PeakWeights,
    },
}

/// Serializable attack description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub frame: FrameSpec,
    #[serde(default)]
    pub indexing_mode: IndexingMode,
    #[serde(flatten)]
    pub kind: AttackKind,
}

impl AttackSpec {
    pub fn build(&self) -> Result<DiagonalAttack> {
        let frame = self.frame;
        let mode = self.indexing_mode;
        let shape = |w: usize, spacings: Vec<usize>, weights: PeakWeights| match weights {
            PeakWeights::Flat => MultiPeakShape::flat(w, spacings),
            PeakWeights::Gaussian { alpha, exponent } => gaussian_grid_weights(w, spacings, alpha, exponent),
        };
        match &self.kind {
            AttackKind::Sharp => Ok(sharp_attack(frame)),
            AttackKind::SquareWindow { window } => square_window_attack(frame, *window),
            AttackKind::SlidingWindow { window } => sliding_window_attack(frame, *window),
            AttackKind::GaussianWindow { width } => gaussian_window_attack(frame, *width, mode),
            AttackKind::Multipeak {
                peaks,
                spacing,
                weights,
            } => multipeak_attack(frame, &shape(*peaks, vec![*spacing], *weights)?, mode),
            AttackKind::Product {
                peaks_per_axis,
                spacings,
                weights,
            } => product_multipeak_attack(frame, &shape(*peaks_per_axis, spacings.clone(), *weights)?, mode),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevec::uniform_biphoton;
    use rand::SeedableRng;

    fn frame(m: usize) -> FrameSpec {
        FrameSpec::with_bins(m).unwrap()
    }

    #[test]
    fn sharp_is_identity_rows() {
        let a = sharp_attack(frame(4));
        assert_eq!(a.num_outcomes(), 4);
        for k in 0..4 {
            assert_eq!(a.row(k), &[(k, 1.0)]);
        }
        assert_eq!(a.completeness_deviation(), 0.0);
    }

    #[test]
    fn sharp_on_uniform() {
        let f = frame(4);
        let outs = apply_attack_all(&uniform_biphoton(f), &sharp_attack(f)).unwrap();
        assert_eq!(outs.len(), 4);
        for o in outs {
            assert!((o.probability - 0.25).abs() < 1e-15);
            assert_eq!(o.post_state.support_len(), 1);
            assert!((o.post_state.amplitude(o.outcome, o.outcome).re - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn square_window_layout() {
        let a = square_window_attack(frame(1024), 32).unwrap();
        assert_eq!(a.num_outcomes(), 32);
        assert_eq!(a.row(3).first(), Some(&(96, 1.0)));
        assert_eq!(a.row(3).len(), 32);
        assert!(matches!(
            square_window_attack(frame(12), 5),
            Err(Error::WindowDoesNotDivide { .. })
        ));
        let id = square_window_attack(frame(8), 8).unwrap();
        let out = apply_attack(&uniform_biphoton(frame(8)), &id, 0).unwrap();
        assert!((out.probability - 1.0).abs() < 1e-15);
        let u = uniform_biphoton(frame(8));
        assert!((out.post_state.inner(&u).unwrap().re - 1.0).abs() < 1e-15);
        assert_eq!(out.post_state.support_len(), 8);
    }

    #[test]
    fn square_window_post_state_flat() {
        let f = frame(32);
        let a = square_window_attack(f, 8).unwrap();
        let o = apply_attack(&uniform_biphoton(f), &a, 2).unwrap();
        assert!((o.probability - 0.25).abs() < 1e-15);
        assert_eq!(o.post_state.support_len(), 8);
        for n in 16..24 {
            assert!((o.post_state.amplitude(n, n).re - 8f64.sqrt().recip()).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_window_limits_and_completeness() {
        let f = frame(64);
        let g = gaussian_window_attack(f, 10.0, IndexingMode::Cyclic).unwrap();
        assert!(g.completeness_deviation() < 1e-10);
        let t = gaussian_window_attack(f, 10.0, IndexingMode::Truncated).unwrap();
        assert!(t.completeness_deviation() < 1e-10);

        let narrow = gaussian_window_attack(f, 1e-4, IndexingMode::Cyclic).unwrap();
        let sharp = sharp_attack(f);
        let mut tv: f64 = 0.0;
        for k in 0..64 {
            for n in 0..64 {
                tv = tv.max((narrow.weight(k, n) - sharp.weight(k, n)).abs());
            }
        }
        assert!(tv < 1e-9);
        assert!(gaussian_window_attack(f, 0.0, IndexingMode::Cyclic).is_err());
    }

    #[test]
    fn multipeak_layout_and_post_state() {
        let f = frame(16);
        let shape = MultiPeakShape::flat(2, vec![2]).unwrap();
        let a = multipeak_attack(f, &shape, IndexingMode::Cyclic).unwrap();
        assert_eq!(a.row(5), &[(3, 0.5), (5, 0.5)]);
        let o = apply_attack(&uniform_biphoton(f), &a, 5).unwrap();
        let r = 0.5f64.sqrt();
        assert!((o.post_state.amplitude(5, 5).re - r).abs() < 1e-15);
        assert!((o.post_state.amplitude(3, 3).re - r).abs() < 1e-15);
        assert_eq!(o.post_state.support_len(), 2);

        let one = multipeak_attack(f, &MultiPeakShape::flat(1, vec![3]).unwrap(), IndexingMode::Cyclic).unwrap();
        assert_eq!(one, sharp_attack(f));

        let too_wide = MultiPeakShape::flat(9, vec![2]).unwrap();
        assert!(multipeak_attack(f, &too_wide, IndexingMode::Truncated).is_err());
    }

    #[test]
    fn multipeak_m8_outcome3() {
        let f = frame(8);
        let a = multipeak_attack(f, &MultiPeakShape::flat(2, vec![1]).unwrap(), IndexingMode::Cyclic).unwrap();
        let o = apply_attack(&uniform_biphoton(f), &a, 3).unwrap();
        assert!((o.probability - 0.125).abs() < 1e-15);
        let r = 0.5f64.sqrt();
        assert!((o.post_state.amplitude(3, 3).re - r).abs() < 1e-15);
        assert!((o.post_state.amplitude(2, 2).re - r).abs() < 1e-15);
    }

    #[test]
    fn truncated_modes_stay_complete() {
        let f = frame(40);
        let shape = gaussian_grid_weights(4, vec![3], 0.5, GaussianExponent::Squared).unwrap();
        let a = multipeak_attack(f, &shape, IndexingMode::Truncated).unwrap();
        assert!(a.completeness_deviation() < 1e-12);
        let p = product_multipeak_attack(f, &MultiPeakShape::flat(3, vec![1, 4]).unwrap(), IndexingMode::Truncated)
            .unwrap();
        assert!(p.completeness_deviation() < 1e-12);
        let clash = MultiPeakShape::flat(3, vec![1, 2]).unwrap();
        assert!(product_multipeak_attack(f, &clash, IndexingMode::Truncated).is_err());
    }

    #[test]
    fn product_d1_matches_multipeak() {
        let f = frame(64);
        let s = MultiPeakShape::flat(5, vec![3]).unwrap();
        let p = product_multipeak_attack(f, &s, IndexingMode::Cyclic).unwrap();
        let m = multipeak_attack(f, &s, IndexingMode::Cyclic).unwrap();
        // Same kernel, mirrored: outcome k forward equals outcome k + span backward.
        for k in 0..64 {
            assert_eq!(p.row(k), m.row((k + s.span()) % 64));
        }
    }

    #[test]
    fn gaussian_grid_limits() {
        let s = gaussian_grid_weights(4, vec![1, 5], 1e-14, GaussianExponent::Squared).unwrap();
        for &w in s.weights() {
            assert!((w - 1.0 / 16.0).abs() < 1e-12);
        }
        let s = gaussian_grid_weights(16, vec![1], 0.3, GaussianExponent::Squared).unwrap();
        assert!((s.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.weights()[7] > s.weights()[0]);
        assert!(gaussian_grid_weights(4, vec![1], 0.0, GaussianExponent::Squared).is_err());
        let signed = gaussian_grid_weights(4, vec![1], 0.5, GaussianExponent::Signed).unwrap();
        assert!(signed.weights()[0] > signed.weights()[3]);
    }

    #[test]
    fn hand_built_incomplete_row_reported() {
        let f = frame(4);
        let rows = vec![vec![(0, 1.1)], vec![(1, 1.0)], vec![(2, 1.0)], vec![(3, 1.0)]];
        let a = DiagonalAttack::from_rows(f, rows, IndexingMode::Cyclic).unwrap();
        assert!((validate_completeness(&AnyAttack::Diagonal(&a)) - 0.1).abs() < 1e-12);
        assert!(DiagonalAttack::from_rows(f, vec![vec![(0, -1.0)]], IndexingMode::Cyclic).is_err());
    }

    #[test]
    fn zero_probability_outcome_rejected() {
        let f = frame(4);
        let s = BiphotonState::product(f, 1, 1).unwrap();
        assert!(matches!(
            apply_attack(&s, &sharp_attack(f), 2),
            Err(Error::ZeroProbabilityOutcome { outcome: 2 })
        ));
    }

    #[test]
    fn sampled_outcome_is_reproducible() {
        let f = frame(16);
        let a = multipeak_attack(f, &MultiPeakShape::flat(2, vec![2]).unwrap(), IndexingMode::Cyclic).unwrap();
        let u = uniform_biphoton(f);
        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a1 = apply_attack_sampled(&u, &a, &mut r1).unwrap();
            let a2 = apply_attack_sampled(&u, &a, &mut r2).unwrap();
            assert_eq!(a1, a2);
        }
    }

    #[test]
    fn continuous_comb_normalization() {
        let c = continuous_multipeak(0.4, 1.0, 5).unwrap();
        assert!(validate_completeness(&AnyAttack::Continuous(&c, 20.0)) < 1e-6);
        assert!(matches!(
            continuous_multipeak(1.0, 1.0, 3),
            Err(Error::OverlappingWindows { .. })
        ));
        let single = continuous_multipeak(2.0, 0.0, 1).unwrap();
        assert_eq!(single.window(5.0, 5.5), 1.0);
        assert_eq!(single.window(5.0, 7.5), 0.0);
        assert!((single.density(5.0, 6.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn discrete_continuous_completeness() {
        let a: Arc<DiscreteBeta> = Arc::new(|t: f64| if t < 5.0 { 1.0 } else { 0.0 });
        let b: Arc<DiscreteBeta> = Arc::new(|t: f64| if t < 5.0 { 0.0 } else { 1.0 });
        let c = ContinuousAttack::Discrete(vec![a.clone(), b]);
        assert_eq!(validate_completeness(&AnyAttack::Continuous(&c, 10.0)), 0.0);
        let broken = ContinuousAttack::Discrete(vec![a]);
        assert_eq!(validate_completeness(&AnyAttack::Continuous(&broken, 10.0)), 1.0);
    }

    #[test]
    fn attack_spec_json_roundtrip() {
        let json = r#"{
            "kind": "multipeak",
            "frame": {"num_bins": 64},
            "peaks": 4, "spacing": 3,
            "weights": {"profile": "gaussian", "alpha": 0.2}
        }"#;
        let spec: AttackSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.indexing_mode, IndexingMode::Cyclic);
        let built = spec.build().unwrap();
        assert_eq!(built.num_outcomes(), 64);
        let back: AttackSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }
}
