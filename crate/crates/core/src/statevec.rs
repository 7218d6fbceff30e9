//! Time-bin Hilbert-space primitives.
//!
//! A frame is `M` contiguous bins of width `T`. Single-photon states are
//! sparse maps from bin index to amplitude; biphoton states are sparse maps
//! from ordered `(alice_bin, bob_bin)` pairs to amplitude. Both are immutable
//! once built, and iteration order over amplitudes is always ascending by key
//! so every reduction is deterministic.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the normalized flag on discrete states.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Default midpoint-rule samples per bin width.
pub const DEFAULT_RESOLUTION: usize = 16;

/// Frame geometry: `num_bins` bins of width `bin_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFrame", into = "RawFrame")]
pub struct FrameSpec {
    num_bins: usize,
    bin_width: f64,
}

#[derive(Serialize, Deserialize)]
struct RawFrame {
    num_bins: usize,
    #[serde(default = "unit_width")]
    bin_width: f64,
}

fn unit_width() -> f64 {
    1.0
}

impl TryFrom<RawFrame> for FrameSpec {
    type Error = Error;
    fn try_from(raw: RawFrame) -> Result<Self> {
        FrameSpec::new(raw.num_bins, raw.bin_width)
    }
}

impl From<FrameSpec> for RawFrame {
    fn from(f: FrameSpec) -> Self {
        RawFrame {
            num_bins: f.num_bins,
            bin_width: f.bin_width,
        }
    }
}

impl FrameSpec {
    pub fn new(num_bins: usize, bin_width: f64) -> Result<Self> {
        if num_bins < 2 {
            return Err(Error::InvalidFrame(format!(
                "need at least 2 bins, got {num_bins}"
            )));
        }
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::InvalidFrame(format!(
                "bin width must be positive, got {bin_width}"
            )));
        }
        Ok(Self {
            num_bins,
            bin_width,
        })
    }

    /// Frame of `num_bins` unit-width bins.
    pub fn with_bins(num_bins: usize) -> Result<Self> {
        Self::new(num_bins, 1.0)
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    /// Total duration `M * T`.
    pub fn extent(&self) -> f64 {
        self.num_bins as f64 * self.bin_width
    }

    pub fn check_bin(&self, bin: usize) -> Result<()> {
        if bin < self.num_bins {
            Ok(())
        } else {
            Err(Error::BinOutOfRange {
                bin,
                num_bins: self.num_bins,
            })
        }
    }

    pub(crate) fn check_same(&self, other: &FrameSpec) -> Result<()> {
        if self.num_bins == other.num_bins && self.bin_width == other.bin_width {
            Ok(())
        } else {
            Err(Error::FrameMismatch {
                left: self.num_bins,
                right: other.num_bins,
            })
        }
    }
}

/// A (possibly sub-normalized) single-photon time-bin state.
#[derive(Debug, Clone, PartialEq)]
pub struct SinglePhotonState {
    frame: FrameSpec,
    amplitudes: BTreeMap<usize, Complex64>,
    sub_normalized: bool,
}

impl SinglePhotonState {
    /// Builds a state from `(bin, amplitude)` pairs. Repeated bins add.
    pub fn from_amplitudes<I>(frame: FrameSpec, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, Complex64)>,
    {
        let mut amplitudes = BTreeMap::new();
        for (bin, amp) in entries {
            frame.check_bin(bin)?;
            *amplitudes.entry(bin).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        amplitudes.retain(|_, a| a.norm_sqr() > 0.0);
        let norm: f64 = amplitudes.values().map(|a| a.norm_sqr()).sum();
        if norm > 1.0 + NORM_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "single-photon state has squared norm {norm} > 1"
            )));
        }
        Ok(Self {
            frame,
            amplitudes,
            sub_normalized: norm < 1.0 - NORM_TOLERANCE,
        })
    }

    /// The time-bin basis state `|bin>`.
    pub fn basis(frame: FrameSpec, bin: usize) -> Result<Self> {
        Self::from_amplitudes(frame, [(bin, Complex64::new(1.0, 0.0))])
    }

    pub fn frame(&self) -> &FrameSpec {
        &self.frame
    }

    /// True when the squared norm is below one (e.g. a projection truncated
    /// at the frame edge).
    pub fn is_sub_normalized(&self) -> bool {
        self.sub_normalized
    }

    pub fn amplitude(&self, bin: usize) -> Complex64 {
        self.amplitudes
            .get(&bin)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.amplitudes.iter().map(|(&k, &v)| (k, v))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`, conjugate-linear in `self`.
    pub fn inner(&self, other: &SinglePhotonState) -> Result<Complex64> {
        self.frame.check_same(&other.frame)?;
        let (small, large, conj_small) = if self.amplitudes.len() <= other.amplitudes.len() {
            (&self.amplitudes, &other.amplitudes, true)
        } else {
            (&other.amplitudes, &self.amplitudes, false)
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for (bin, a) in small {
            if let Some(b) = large.get(bin) {
                acc += if conj_small { a.conj() * b } else { b.conj() * a };
            }
        }
        Ok(acc)
    }
}

/// A two-photon time-bin state, sparse over ordered `(alice_bin, bob_bin)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiphotonState {
    frame: FrameSpec,
    amplitudes: BTreeMap<(usize, usize), Complex64>,
    normalized: bool,
}

impl BiphotonState {
    /// Builds a state from `((alice_bin, bob_bin), amplitude)` pairs. Repeated
    /// keys add; exact zeros are dropped. The state is not renormalized.
    pub fn from_amplitudes<I>(frame: FrameSpec, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = ((usize, usize), Complex64)>,
    {
        let mut amplitudes = BTreeMap::new();
        for ((a, b), amp) in entries {
            frame.check_bin(a)?;
            frame.check_bin(b)?;
            *amplitudes.entry((a, b)).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        amplitudes.retain(|_, a| a.norm_sqr() > 0.0);
        Ok(Self::from_map(frame, amplitudes))
    }

    pub(crate) fn from_map(frame: FrameSpec, amplitudes: BTreeMap<(usize, usize), Complex64>) -> Self {
        let norm: f64 = amplitudes.values().map(|a| a.norm_sqr()).sum();
        Self {
            frame,
            amplitudes,
            normalized: (norm - 1.0).abs() <= NORM_TOLERANCE,
        }
    }

    /// The product state `|alice>|bob>`.
    pub fn product(frame: FrameSpec, alice: usize, bob: usize) -> Result<Self> {
        Self::from_amplitudes(frame, [((alice, bob), Complex64::new(1.0, 0.0))])
    }

    pub fn frame(&self) -> &FrameSpec {
        &self.frame
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn amplitude(&self, alice: usize, bob: usize) -> Complex64 {
        self.amplitudes
            .get(&(alice, bob))
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = ((usize, usize), Complex64)> + '_ {
        self.amplitudes.iter().map(|(&k, &v)| (k, v))
    }

    pub fn support_len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    /// True when every amplitude sits on `alice_bin == bob_bin`.
    pub fn is_diagonal(&self) -> bool {
        self.amplitudes.keys().all(|(a, b)| a == b)
    }

    /// Probability that Bob's photon is in `bin` (unnormalized for
    /// sub-normalized states).
    pub fn bob_marginal(&self, bin: usize) -> f64 {
        self.amplitudes
            .iter()
            .filter(|((_, b), _)| *b == bin)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Copy rescaled to unit norm.
    pub fn normalized(&self) -> Result<Self> {
        let norm = self.norm_sqr();
        if norm <= 0.0 {
            return Err(Error::InvalidParameter("cannot normalize the zero state".into()));
        }
        let scale = 1.0 / norm.sqrt();
        let amplitudes = self
            .amplitudes
            .iter()
            .map(|(&k, &v)| (k, v * scale))
            .collect();
        let mut out = Self::from_map(self.frame, amplitudes);
        out.normalized = true;
        Ok(out)
    }

    /// `<self|other>`, conjugate-linear in `self`.
    pub fn inner(&self, other: &BiphotonState) -> Result<Complex64> {
        self.frame.check_same(&other.frame)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (key, a) in &self.amplitudes {
            if let Some(b) = other.amplitudes.get(key) {
                acc += a.conj() * b;
            }
        }
        Ok(acc)
    }

    /// Relabels both parties' bins by `bin -> (bin + shift) mod M`.
    pub fn cyclic_shift(&self, shift: usize) -> Self {
        let m = self.frame.num_bins;
        let amplitudes = self
            .amplitudes
            .iter()
            .map(|(&(a, b), &v)| (((a + shift) % m, (b + shift) % m), v))
            .collect();
        Self::from_map(self.frame, amplitudes)
    }
}

/// `(1/sqrt(M)) * sum_k |k>|k>`.
pub fn uniform_biphoton(frame: FrameSpec) -> BiphotonState {
    let m = frame.num_bins();
    let amp = Complex64::new(1.0 / (m as f64).sqrt(), 0.0);
    let amplitudes = (0..m).map(|k| ((k, k), amp)).collect();
    let mut state = BiphotonState::from_map(frame, amplitudes);
    // 1/sqrt(M) squared and summed M times can miss 1 by a few ulps.
    state.normalized = true;
    state
}

/// Fourier basis state `|phi_n> = (1/sqrt(M)) sum_k exp(2 pi i n k / M) |k>`.
pub fn mub_basis_state(frame: FrameSpec, n: usize) -> Result<SinglePhotonState> {
    frame.check_bin(n)?;
    let m = frame.num_bins();
    let scale = 1.0 / (m as f64).sqrt();
    let amplitudes = (0..m)
        .map(|k| (k, fourier_phase(n * k, m) * scale))
        .collect();
    Ok(SinglePhotonState {
        frame,
        amplitudes,
        sub_normalized: false,
    })
}

/// `exp(2 pi i j / m)` with `j` reduced mod `m` first so large products keep
/// full phase accuracy.
pub(crate) fn fourier_phase(j: usize, m: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * ((j % m) as f64) / m as f64)
}

type EnvelopeRule = dyn Fn(f64, f64) -> Complex64 + Send + Sync;

/// Continuous two-photon envelope `g(t1, t2)` with square support
/// `[t_min, t_max)^2`. Evaluation returns zero outside the support.
#[derive(Clone)]
pub struct EnvelopeFunction {
    rule: Arc<EnvelopeRule>,
    t_min: f64,
    t_max: f64,
    resolution: usize,
}

impl fmt::Debug for EnvelopeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnvelopeFunction")
            .field("t_min", &self.t_min)
            .field("t_max", &self.t_max)
            .field("resolution", &self.resolution)
            .finish()
    }
}

impl EnvelopeFunction {
    pub fn new<F>(rule: F, t_min: f64, t_max: f64) -> Result<Self>
    where
        F: Fn(f64, f64) -> Complex64 + Send + Sync + 'static,
    {
        if !(t_min < t_max) {
            return Err(Error::InvalidParameter(format!(
                "empty envelope support [{t_min}, {t_max})"
            )));
        }
        Ok(Self {
            rule: Arc::new(rule),
            t_min,
            t_max,
            resolution: DEFAULT_RESOLUTION,
        })
    }

    /// Samples per bin width used by the midpoint rule.
    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.resolution = resolution.max(1);
        self
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn support(&self) -> (f64, f64) {
        (self.t_min, self.t_max)
    }

    fn inside(&self, t: f64) -> bool {
        t >= self.t_min && t < self.t_max
    }

    pub fn eval(&self, t1: f64, t2: f64) -> Complex64 {
        if self.inside(t1) && self.inside(t2) {
            (self.rule)(t1, t2)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    /// Midpoint-rule estimate of `∫∫ |g|^2` over the support, using
    /// `resolution` samples per unit of `step`.
    pub fn norm_sqr(&self, step: f64) -> f64 {
        let n = (((self.t_max - self.t_min) / step) * self.resolution as f64).ceil() as usize;
        let h = (self.t_max - self.t_min) / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let t1 = self.t_min + (i as f64 + 0.5) * h;
            for j in 0..n {
                let t2 = self.t_min + (j as f64 + 0.5) * h;
                acc += self.eval(t1, t2).norm_sqr();
            }
        }
        acc * h * h
    }
}

/// Bins a continuous envelope: each `(m, n)` amplitude is the midpoint-rule
/// integral of `g` over the bin rectangle divided by `T`; the result is
/// renormalized.
pub fn discretize_envelope(g: &EnvelopeFunction, frame: FrameSpec) -> Result<BiphotonState> {
    let (t_min, t_max) = g.support();
    let extent = frame.extent();
    if t_min < 0.0 || t_max > extent {
        return Err(Error::SupportExceedsFrame {
            t_min,
            t_max,
            extent,
        });
    }
    let width = frame.bin_width();
    let rho = g.resolution();
    let h = width / rho as f64;
    let first = (t_min / width).floor() as usize;
    let last = ((t_max / width).ceil() as usize).min(frame.num_bins());

    let mut amplitudes = BTreeMap::new();
    for m in first..last {
        for n in first..last {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..rho {
                let t1 = (m as f64) * width + (i as f64 + 0.5) * h;
                for j in 0..rho {
                    let t2 = (n as f64) * width + (j as f64 + 0.5) * h;
                    acc += g.eval(t1, t2);
                }
            }
            let amp = acc * (h * h / width);
            if amp.norm_sqr() > 0.0 {
                amplitudes.insert((m, n), amp);
            }
        }
    }
    BiphotonState::from_map(frame, amplitudes).normalized()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn uniform_biphoton_m4() {
        let f = FrameSpec::with_bins(4).unwrap();
        let s = uniform_biphoton(f);
        assert_eq!(s.support_len(), 4);
        for k in 0..4 {
            assert_eq!(s.amplitude(k, k), c(0.5, 0.0));
        }
        assert_eq!(s.amplitude(0, 1), c(0.0, 0.0));
        assert!(s.is_normalized());
    }

    #[test]
    fn degenerate_frame_rejected() {
        assert!(matches!(FrameSpec::with_bins(1), Err(Error::InvalidFrame(_))));
        assert!(FrameSpec::new(4, 0.0).is_err());
    }

    #[test]
    fn uniform_biphoton_large_normalized() {
        let s = uniform_biphoton(FrameSpec::with_bins(1024).unwrap());
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        let self_overlap = s.inner(&s).unwrap();
        assert!((self_overlap.re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mub_zero_phase() {
        let f = FrameSpec::with_bins(8).unwrap();
        let phi = mub_basis_state(f, 0).unwrap();
        for k in 0..8 {
            let a = phi.amplitude(k);
            assert!((a - c(1.0 / 8f64.sqrt(), 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn mub_unbiased_and_orthogonal() {
        let f = FrameSpec::with_bins(8).unwrap();
        let phi3 = mub_basis_state(f, 3).unwrap();
        for k in 0..8 {
            assert!((phi3.amplitude(k).norm_sqr() - 0.125).abs() < 1e-15);
        }
        let a = mub_basis_state(f, 2).unwrap();
        let b = mub_basis_state(f, 5).unwrap();
        assert!(a.inner(&b).unwrap().norm() < 1e-12);
        assert!(mub_basis_state(f, 8).is_err());
    }

    #[test]
    fn inner_product_examples() {
        let f = FrameSpec::with_bins(4).unwrap();
        let phi0 = mub_basis_state(f, 0).unwrap();
        assert!((phi0.inner(&phi0).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        let k2 = SinglePhotonState::basis(f, 2).unwrap();
        let phi1 = mub_basis_state(f, 1).unwrap();
        // exp(2 pi i * 2 / 4) / 2 = -1/2
        assert!((k2.inner(&phi1).unwrap() - c(-0.5, 0.0)).norm() < 1e-15);
        let k1 = SinglePhotonState::basis(f, 1).unwrap();
        assert!((k1.inner(&phi1).unwrap() - c(0.0, 0.5)).norm() < 1e-15);
        // conjugate linearity in the first slot
        assert!((phi1.inner(&k1).unwrap() - c(0.0, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn frame_mismatch_rejected() {
        let a = mub_basis_state(FrameSpec::with_bins(4).unwrap(), 0).unwrap();
        let b = mub_basis_state(FrameSpec::with_bins(8).unwrap(), 0).unwrap();
        assert!(matches!(a.inner(&b), Err(Error::FrameMismatch { .. })));
    }

    #[test]
    fn uniform_is_cyclic_invariant() {
        let s = uniform_biphoton(FrameSpec::with_bins(12).unwrap());
        for shift in 0..12 {
            assert_eq!(s.cyclic_shift(shift), s);
        }
    }

    #[test]
    fn discretize_piecewise_constant_diagonal() {
        let f = FrameSpec::with_bins(4).unwrap();
        let g = EnvelopeFunction::new(
            |t1, t2| {
                if t1.floor() == t2.floor() {
                    c(0.5, 0.0)
                } else {
                    c(0.0, 0.0)
                }
            },
            0.0,
            4.0,
        )
        .unwrap();
        let d = discretize_envelope(&g, f).unwrap();
        let u = uniform_biphoton(f);
        for ((a, b), amp) in d.amplitudes() {
            assert!((amp - u.amplitude(a, b)).norm() < 1e-9);
        }
        assert_eq!(d.support_len(), 4);
    }

    #[test]
    fn discretize_narrow_gaussian_concentrates() {
        let f = FrameSpec::with_bins(8).unwrap();
        let sigma = 1.0 / 20.0;
        let g = EnvelopeFunction::new(
            move |t1, t2| {
                let r2 = (t1 - 2.5).powi(2) + (t2 - 2.5).powi(2);
                c((-r2 / (4.0 * sigma * sigma)).exp(), 0.0)
            },
            0.0,
            8.0,
        )
        .unwrap();
        let d = discretize_envelope(&g, f).unwrap();
        assert!(d.amplitude(2, 2).norm_sqr() >= 0.999);
        assert!(d.is_normalized());
    }

    #[test]
    fn discretize_rejects_oversized_support() {
        let f = FrameSpec::with_bins(4).unwrap();
        let g = EnvelopeFunction::new(|_, _| c(1.0, 0.0), 0.0, 5.0).unwrap();
        assert!(matches!(
            discretize_envelope(&g, f),
            Err(Error::SupportExceedsFrame { .. })
        ));
    }

    #[test]
    fn sub_normalized_flag() {
        let f = FrameSpec::with_bins(8).unwrap();
        let s = SinglePhotonState::from_amplitudes(f, [(1, c(0.5f64.sqrt(), 0.0))]).unwrap();
        assert!(s.is_sub_normalized());
        assert!(SinglePhotonState::from_amplitudes(f, [(1, c(1.1, 0.0))]).is_err());
        assert!(SinglePhotonState::from_amplitudes(f, [(9, c(0.1, 0.0))]).is_err());
    }
}
