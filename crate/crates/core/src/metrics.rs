//! Exact information and disturbance figures of merit.
//!
//! Everything here is deterministic enumeration: an attack is applied to the
//! uniform biphoton state, every outcome's post-state is pushed through the
//! Franson statistics, and the outcome tables are mixed with their Born
//! weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{
    apply_attack_all, gaussian_grid_weights, gaussian_window_attack, multipeak_attack, product_multipeak_attack,
    sliding_window_attack, square_window_attack, DiagonalAttack, GaussianExponent, IndexingMode, MultiPeakShape,
};
use crate::error::{Error, Result};
use crate::franson::{visibility, Boundary, CoincidenceTable, SettingsBank, TableAccumulator};
use crate::statevec::{uniform_biphoton, FrameSpec};

/// How per-setting disturbances are combined across the bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Each of the `d` settings weighted `1/d`.
    #[default]
    RawAverage,
    /// Pooled mismatch weight over pooled coincidence weight.
    CoincidenceWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingDisturbance {
    pub delta_tau: usize,
    #[serde(serialize_with = "crate::format::ser_f64")]
    pub p_error: f64,
    #[serde(serialize_with = "crate::format::ser_f64")]
    pub coincidence_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceReport {
    #[serde(serialize_with = "crate::format::ser_f64")]
    pub p_error: f64,
    #[serde(serialize_with = "crate::format::ser_f64")]
    pub visibility: f64,
    pub per_setting: Vec<SettingDisturbance>,
    pub convention: Convention,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoDisturbancePoint {
    #[serde(serialize_with = "crate::format::ser_f64")]
    pub param: f64,
    #[serde(serialize_with = "crate::format::ser_f64")]
    pub eve_bits: f64,
    #[serde(serialize_with = "crate::format::ser_f64")]
    pub p_error: f64,
    #[serde(serialize_with = "crate::format::ser_f64")]
    pub visibility: f64,
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// Shannon entropy (bits) of a weight vector; zero entries contribute zero.
pub fn entropy_bits(weights: &[f64]) -> f64 {
    weights.iter().map(|&p| plogp(p)).sum()
}

/// Mutual information `I(K; N)` in bits between Eve's outcome `K` and the
/// shared bin `N`, with `P(n) = 1/M` and `P(k|n) = λ[k][n]`.
pub fn eve_information(attack: &DiagonalAttack) -> f64 {
    let m = attack.frame().num_bins() as f64;
    let mut h_k = 0.0;
    let mut h_k_given_n = 0.0;
    for row in attack.rows() {
        let pk: f64 = row.iter().map(|&(_, lam)| lam).sum::<f64>() / m;
        h_k += plogp(pk);
        h_k_given_n += row.iter().map(|&(_, lam)| plogp(lam)).sum::<f64>();
    }
    (h_k - h_k_given_n / m).max(0.0)
}

/// Franson edge handling consistent with the attack's indexing.
pub fn boundary_for(mode: IndexingMode) -> Boundary {
    match mode {
        IndexingMode::Cyclic => Boundary::Periodic,
        IndexingMode::Truncated => Boundary::Open,
    }
}

/// Coincidence tables of the outcome-mixed state, one per setting (equal
/// settings for Alice and Bob).
pub fn mixed_tables(attack: &DiagonalAttack, bank: &SettingsBank, boundary: Boundary) -> Result<Vec<CoincidenceTable>> {
    let frame = *attack.frame();
    bank.check(&frame)?;
    let outcomes = apply_attack_all(&uniform_biphoton(frame), attack)?;
    bank.settings()
        .iter()
        .map(|&s| {
            let mut mix = TableAccumulator::new(&frame);
            for o in &outcomes {
                mix.add(&o.post_state, s, s, boundary, o.probability)?;
            }
            Ok(mix.finish())
        })
        .collect()
}

/// Disturbance of `attack` against the settings bank, with the Franson edge
/// handling implied by the attack's indexing mode.
pub fn disturbance(attack: &DiagonalAttack, bank: &SettingsBank, convention: Convention) -> Result<DisturbanceReport> {
    disturbance_with_boundary(attack, bank, convention, boundary_for(attack.indexing_mode()))
}

pub fn disturbance_with_boundary(
    attack: &DiagonalAttack,
    bank: &SettingsBank,
    convention: Convention,
    boundary: Boundary,
) -> Result<DisturbanceReport> {
    let tables = mixed_tables(attack, bank, boundary)?;
    report_from_tables(bank, &tables, convention)
}

/// Combines per-setting tables into a report.
pub fn report_from_tables(
    bank: &SettingsBank,
    tables: &[CoincidenceTable],
    convention: Convention,
) -> Result<DisturbanceReport> {
    let mut per_setting = Vec::with_capacity(tables.len());
    for (s, t) in bank.settings().iter().zip(tables) {
        per_setting.push(SettingDisturbance {
            delta_tau: s.delta_tau(),
            p_error: t.p_error()?,
            coincidence_weight: t.total_weight(),
        });
    }
    let p = match convention {
        Convention::RawAverage => per_setting.iter().map(|s| s.p_error).sum::<f64>() / per_setting.len() as f64,
        Convention::CoincidenceWeighted => {
            let mismatch: f64 = tables.iter().map(|t| t.mismatch_weight()).sum();
            let total: f64 = tables.iter().map(|t| t.total_weight()).sum();
            mismatch / total
        }
    };
    // Rounding can push a pooled 1/2 a few ulps over.
    let p = p.clamp(0.0, 0.5);
    Ok(DisturbanceReport {
        p_error: p,
        visibility: visibility(p)?,
        per_setting,
        convention,
    })
}

/// Closed-form disturbance formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "formula", rename_all = "snake_case")]
pub enum ClosedForm {
    /// Square window of `L` bins probed at `Δτ`: `Δτ/(2L)`, saturating at 1/2.
    Window { window: usize, delta_tau: usize },
    /// Flat `L`-peak attack at matched spacing: `1/(2L)`.
    Multipeak { peaks: usize },
    /// Flat `L`-peak attack against `d` settings, one matched: `((d-1)L+1)/(2dL)`.
    MultiSetting { settings: usize, peaks: usize },
    /// Flat product attack with `w` peaks per axis: `1/(2w)`.
    Product { peaks_per_axis: usize },
}

impl ClosedForm {
    pub const NAMES: [&'static str; 4] = ["window", "multipeak", "multi_setting", "product"];

    /// Looks a formula up by name; `get` supplies named integer parameters.
    pub fn from_name(name: &str, get: impl Fn(&str) -> Option<usize>) -> Result<Self> {
        let need = |key: &str| {
            get(key).ok_or_else(|| Error::InvalidParameter(format!("formula `{name}` needs parameter `{key}`")))
        };
        match name {
            "window" => Ok(ClosedForm::Window {
                window: need("L")?,
                delta_tau: need("dtau")?,
            }),
            "multipeak" => Ok(ClosedForm::Multipeak { peaks: need("L")? }),
            "multi_setting" => Ok(ClosedForm::MultiSetting {
                settings: need("d")?,
                peaks: need("L")?,
            }),
            "product" => Ok(ClosedForm::Product {
                peaks_per_axis: need("w")?,
            }),
            other => Err(Error::UnknownFormula(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClosedForm::Window { .. } => "window",
            ClosedForm::Multipeak { .. } => "multipeak",
            ClosedForm::MultiSetting { .. } => "multi_setting",
            ClosedForm::Product { .. } => "product",
        }
    }

    pub fn value(&self) -> Result<f64> {
        let positive = |x: usize, what: &str| {
            if x == 0 {
                Err(Error::InvalidParameter(format!("{what} must be >= 1")))
            } else {
                Ok(x as f64)
            }
        };
        Ok(match *self {
            ClosedForm::Window { window, delta_tau } => {
                let l = positive(window, "L")?;
                let d = positive(delta_tau, "dtau")?;
                if delta_tau >= window {
                    0.5
                } else {
                    d / (2.0 * l)
                }
            }
            ClosedForm::Multipeak { peaks } => 1.0 / (2.0 * positive(peaks, "L")?),
            ClosedForm::MultiSetting { settings, peaks } => {
                let d = positive(settings, "d")?;
                let l = positive(peaks, "L")?;
                ((d - 1.0) * l + 1.0) / (2.0 * d * l)
            }
            ClosedForm::Product { peaks_per_axis } => 1.0 / (2.0 * positive(peaks_per_axis, "w")?),
        })
    }

    /// The same quantity by exact enumeration over the attack on `frame`.
    /// Windows use the partition POM when `L` divides `M`, the sliding POM
    /// otherwise; multipeak attacks use spacing 3 (single setting), 2 plus
    /// incommensurate delays (multi-setting) and `[1, w + 1]` (product).
    pub fn enumerate(&self, frame: FrameSpec) -> Result<f64> {
        let (attack, bank) = match *self {
            ClosedForm::Window { window, delta_tau } => {
                let attack = if window > 0 && frame.num_bins().is_multiple_of(window) {
                    square_window_attack(frame, window)?
                } else {
                    sliding_window_attack(frame, window)?
                };
                (attack, SettingsBank::new(&[delta_tau])?)
            }
            ClosedForm::Multipeak { peaks } => (
                multipeak_attack(frame, &MultiPeakShape::flat(peaks, vec![3])?, IndexingMode::Cyclic)?,
                SettingsBank::new(&[3])?,
            ),
            ClosedForm::MultiSetting { settings, peaks } => (
                multipeak_attack(frame, &MultiPeakShape::flat(peaks, vec![2])?, IndexingMode::Cyclic)?,
                incommensurate_bank(2, settings)?,
            ),
            ClosedForm::Product { peaks_per_axis } => {
                let spacings = vec![1, peaks_per_axis + 1];
                (
                    product_multipeak_attack(frame, &MultiPeakShape::flat(peaks_per_axis, spacings.clone())?, IndexingMode::Cyclic)?,
                    SettingsBank::new(&spacings)?,
                )
            }
        };
        Ok(disturbance(&attack, &bank, Convention::RawAverage)?.p_error)
    }
}

/// Evaluates a closed form by name.
pub fn closed_form_oracle(name: &str, get: impl Fn(&str) -> Option<usize>) -> Result<f64> {
    ClosedForm::from_name(name, get)?.value()
}

/// Settings bank for multi-setting checks: `matched` first, then `d - 1`
/// settings that are not multiples of it.
pub fn incommensurate_bank(matched: usize, d: usize) -> Result<SettingsBank> {
    let mut delays = vec![matched];
    let mut candidate = matched + 1;
    while delays.len() < d {
        if !candidate.is_multiple_of(matched) {
            delays.push(candidate);
        }
        candidate += 1;
    }
    SettingsBank::new(&delays)
}

/// A one-parameter attack family for information/disturbance sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CurveFamily {
    /// Parameter `α`; single-axis Gaussian-weighted multipeak.
    GaussianMultipeak {
        frame: FrameSpec,
        peaks: usize,
        spacing: usize,
        #[serde(default)]
        exponent: GaussianExponent,
        #[serde(default)]
        indexing_mode: IndexingMode,
    },
    /// Parameter `α`; product of Gaussians on a `w^d` grid.
    GaussianProduct {
        frame: FrameSpec,
        peaks_per_axis: usize,
        spacings: Vec<usize>,
        #[serde(default)]
        exponent: GaussianExponent,
        #[serde(default)]
        indexing_mode: IndexingMode,
    },
    /// Parameter `a`; Gaussian time-of-arrival window.
    GaussianWindow {
        frame: FrameSpec,
        #[serde(default)]
        indexing_mode: IndexingMode,
    },
    /// Parameter `L`; square window.
    SquareWindow { frame: FrameSpec },
    /// Parameter `L`; one square window per bin, any `L`.
    SlidingWindow { frame: FrameSpec },
    /// Parameter `L`; flat multipeak at the given spacing.
    FlatMultipeak {
        frame: FrameSpec,
        spacing: usize,
        #[serde(default)]
        indexing_mode: IndexingMode,
    },
    /// Parameter `w`; flat product grid.
    FlatProduct {
        frame: FrameSpec,
        spacings: Vec<usize>,
        #[serde(default)]
        indexing_mode: IndexingMode,
    },
}

fn integer_param(p: f64) -> Result<usize> {
    if p >= 1.0 && p.fract() == 0.0 && p < 1e9 {
        Ok(p as usize)
    } else {
        Err(Error::InvalidParameter(format!("expected a positive integer parameter, got {p}")))
    }
}

impl CurveFamily {
    pub fn attack(&self, param: f64) -> Result<DiagonalAttack> {
        match self {
            CurveFamily::GaussianMultipeak {
                frame,
                peaks,
                spacing,
                exponent,
                indexing_mode,
            } => multipeak_attack(
                *frame,
                &gaussian_grid_weights(*peaks, vec![*spacing], param, *exponent)?,
                *indexing_mode,
            ),
            CurveFamily::GaussianProduct {
                frame,
                peaks_per_axis,
                spacings,
                exponent,
                indexing_mode,
            } => product_multipeak_attack(
                *frame,
                &gaussian_grid_weights(*peaks_per_axis, spacings.clone(), param, *exponent)?,
                *indexing_mode,
            ),
            CurveFamily::GaussianWindow { frame, indexing_mode } => {
                gaussian_window_attack(*frame, param, *indexing_mode)
            }
            CurveFamily::SquareWindow { frame } => square_window_attack(*frame, integer_param(param)?),
            CurveFamily::SlidingWindow { frame } => sliding_window_attack(*frame, integer_param(param)?),
            CurveFamily::FlatMultipeak {
                frame,
                spacing,
                indexing_mode,
            } => multipeak_attack(
                *frame,
                &MultiPeakShape::flat(integer_param(param)?, vec![*spacing])?,
                *indexing_mode,
            ),
            CurveFamily::FlatProduct {
                frame,
                spacings,
                indexing_mode,
            } => product_multipeak_attack(
                *frame,
                &MultiPeakShape::flat(integer_param(param)?, spacings.clone())?,
                *indexing_mode,
            ),
        }
    }

    pub fn point(&self, param: f64, bank: &SettingsBank, convention: Convention) -> Result<InfoDisturbancePoint> {
        let attack = self.attack(param)?;
        let report = disturbance(&attack, bank, convention)?;
        Ok(InfoDisturbancePoint {
            param,
            eve_bits: eve_information(&attack),
            p_error: report.p_error,
            visibility: report.visibility,
        })
    }
}

/// One point per parameter value, evaluated in parallel, returned in the
/// order of `params`.
pub fn info_disturbance_curve(
    family: &CurveFamily,
    params: &[f64],
    bank: &SettingsBank,
    convention: Convention,
) -> Result<Vec<InfoDisturbancePoint>> {
    if params.is_empty() {
        return Err(Error::InvalidParameter("parameter grid is empty".into()));
    }
    params
        .par_iter()
        .map(|&p| family.point(p, bank, convention))
        .collect()
}

/// Points not dominated by another point with at least as much Eve
/// information and no more disturbance, sorted by `p_error`.
pub fn monotone_envelope(points: &[InfoDisturbancePoint]) -> Vec<InfoDisturbancePoint> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.p_error.total_cmp(&b.p_error).then(b.eve_bits.total_cmp(&a.eve_bits)));
    let mut best = f64::NEG_INFINITY;
    sorted
        .into_iter()
        .filter(|p| {
            if p.eve_bits > best {
                best = p.eve_bits;
                true
            } else {
                false
            }
        })
        .collect()
}

/// Largest Eve information among points with `p_error <= limit`.
pub fn max_bits_within(points: &[InfoDisturbancePoint], limit: f64) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.p_error <= limit)
        .map(|p| p.eve_bits)
        .max_by(f64::total_cmp)
}

/// Gaussian window width `a` at which Eve's information equals `target_bits`.
pub fn gaussian_width_for_information(frame: FrameSpec, target_bits: f64, mode: IndexingMode) -> Result<f64> {
    let info = |a: f64| gaussian_window_attack(frame, a, mode).map(|att| eve_information(&att));
    let (mut lo, mut hi) = (1e-6_f64, 1e6_f64);
    let (i_lo, i_hi) = (info(lo)?, info(hi)?);
    if !(i_hi <= target_bits && target_bits <= i_lo) {
        return Err(Error::InvalidParameter(format!(
            "target {target_bits} bits outside attainable range [{i_hi}, {i_lo}]"
        )));
    }
    // Information decreases monotonically with the width.
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if info(mid)? > target_bits {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}
