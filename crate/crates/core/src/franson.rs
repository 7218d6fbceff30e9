//! Franson interferometer statistics.
//!
//! A click at detector D2 (D3) in bin `m` with path difference `Δτ` projects
//! onto `(|m> ± |m-Δτ>)/√2`. Security-check statistics are conditioned on
//! both parties clicking in the same bin; the 1/2 beamsplitter prefactors of
//! the output modes drop out of every conditional quantity and are not
//! tracked.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statevec::{BiphotonState, EnvelopeFunction, FrameSpec, SinglePhotonState};

/// Output port of a Franson interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Detector {
    /// Constructive port, projection sign `+`.
    D2,
    /// Destructive port, projection sign `-`.
    D3,
}

impl Detector {
    pub const BOTH: [Detector; 2] = [Detector::D2, Detector::D3];

    pub fn sign(self) -> f64 {
        match self {
            Detector::D2 => 1.0,
            Detector::D3 => -1.0,
        }
    }

    fn index(self) -> usize {
        match self {
            Detector::D2 => 0,
            Detector::D3 => 1,
        }
    }

    pub fn flipped(self) -> Detector {
        match self {
            Detector::D2 => Detector::D3,
            Detector::D3 => Detector::D2,
        }
    }
}

/// How bins `r - Δτ < 0` are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Bins whose projection falls off the frame start are excluded from the
    /// conditional statistics and tallied as edge loss.
    #[default]
    Open,
    /// Bin arithmetic is taken mod `M`, so the frame has no edge.
    Periodic,
}

/// Interferometer path difference, in bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FransonSetting {
    delta_tau: usize,
}

impl FransonSetting {
    pub fn new(delta_tau: usize) -> Result<Self> {
        if delta_tau == 0 {
            return Err(Error::InvalidParameter("path difference must be >= 1 bin".into()));
        }
        Ok(Self { delta_tau })
    }

    pub fn delta_tau(&self) -> usize {
        self.delta_tau
    }

    pub fn check(&self, frame: &FrameSpec) -> Result<()> {
        if self.delta_tau >= 1 && self.delta_tau < frame.num_bins() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "path difference {} not in [1, {})",
                self.delta_tau,
                frame.num_bins()
            )))
        }
    }
}

/// The `d` interferometer settings Alice and Bob choose between.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SettingsBank {
    settings: Vec<FransonSetting>,
}

impl SettingsBank {
    pub fn new(delays: &[usize]) -> Result<Self> {
        if delays.is_empty() {
            return Err(Error::InvalidParameter("settings bank is empty".into()));
        }
        let mut settings = Vec::with_capacity(delays.len());
        for &d in delays {
            let s = FransonSetting::new(d)?;
            if settings.contains(&s) {
                return Err(Error::InvalidParameter(format!("duplicate setting {d}")));
            }
            settings.push(s);
        }
        Ok(Self { settings })
    }

    pub fn settings(&self) -> &[FransonSetting] {
        &self.settings
    }

    pub fn len(&self) -> usize {
        self.settings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.settings.is_empty()
    }

    pub fn check(&self, frame: &FrameSpec) -> Result<()> {
        self.settings.iter().try_for_each(|s| s.check(frame))
    }
}

impl TryFrom<Vec<usize>> for SettingsBank {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        SettingsBank::new(&v)
    }
}

impl From<SettingsBank> for Vec<usize> {
    fn from(b: SettingsBank) -> Self {
        b.settings.iter().map(|s| s.delta_tau).collect()
    }
}

/// `(|m> ± |m-Δτ>)/√2`. When `m < Δτ` the second component lies before the
/// frame and is dropped, leaving a sub-normalized state.
pub fn projection_state(
    frame: FrameSpec,
    m: usize,
    setting: FransonSetting,
    detector: Detector,
) -> Result<SinglePhotonState> {
    frame.check_bin(m)?;
    let amp = std::f64::consts::FRAC_1_SQRT_2;
    let mut entries = vec![(m, Complex64::new(amp, 0.0))];
    if let Some(early) = m.checked_sub(setting.delta_tau) {
        entries.push((early, Complex64::new(detector.sign() * amp, 0.0)));
    }
    SinglePhotonState::from_amplitudes(frame, entries)
}

/// Same-bin coincidence weights `|(<s_A,r,Δτ_a| ⊗ <s_B,r,Δτ_b|) |ψ>|^2`,
/// keyed by bin `r`, indexed `[alice_detector][bob_detector]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoincidenceTable {
    bins: BTreeMap<usize, [[f64; 2]; 2]>,
    edge_loss: f64,
}

impl CoincidenceTable {
    pub fn weight(&self, alice: Detector, bob: Detector, bin: usize) -> f64 {
        self.bins
            .get(&bin)
            .map(|w| w[alice.index()][bob.index()])
            .unwrap_or(0.0)
    }

    /// Bins with a nonzero same-bin weight, ascending.
    pub fn bins(&self) -> impl Iterator<Item = (usize, [[f64; 2]; 2])> + '_ {
        self.bins.iter().map(|(&r, &w)| (r, w))
    }

    pub fn total_weight(&self) -> f64 {
        self.bins.values().flatten().flatten().sum()
    }

    /// Total `(D2,D3) + (D3,D2)` weight.
    pub fn mismatch_weight(&self) -> f64 {
        self.bins.values().map(|w| w[0][1] + w[1][0]).sum()
    }

    pub fn match_weight(&self) -> f64 {
        self.bins.values().map(|w| w[0][0] + w[1][1]).sum()
    }

    /// Weight that fell on frame-edge bins with sub-normalized projections.
    pub fn edge_loss(&self) -> f64 {
        self.edge_loss
    }

    /// `P(A≠B)` conditioned on a same-bin coincidence.
    pub fn p_error(&self) -> Result<f64> {
        let total = self.total_weight();
        if total <= 0.0 {
            return Err(Error::NoCoincidences);
        }
        Ok(self.mismatch_weight() / total)
    }

    /// Adds `scale * other` entry-wise. Tables are linear in the density
    /// matrix, so this builds the table of a mixture.
    pub fn add_scaled(&mut self, other: &CoincidenceTable, scale: f64) {
        for (&r, w) in &other.bins {
            let slot = self.bins.entry(r).or_insert([[0.0; 2]; 2]);
            for i in 0..2 {
                for j in 0..2 {
                    slot[i][j] += scale * w[i][j];
                }
            }
        }
        self.edge_loss += scale * other.edge_loss;
    }
}

/// Detector-pair weights of bin `r` from the four amplitudes it interferes.
fn bin_weights(same: Complex64, bob_early: Complex64, alice_early: Complex64, both_early: Complex64) -> [[f64; 2]; 2] {
    let mut w = [[0.0; 2]; 2];
    for det_a in Detector::BOTH {
        for det_b in Detector::BOTH {
            let (sa, sb) = (det_a.sign(), det_b.sign());
            let a = (same + bob_early * sb + alice_early * sa + both_early * (sa * sb)) * 0.5;
            w[det_a.index()][det_b.index()] = a.norm_sqr();
        }
    }
    w
}

/// Calls `visit(r, weights, is_edge)` for every bin with possible same-bin
/// support.
fn visit_bins(
    state: &BiphotonState,
    setting_a: FransonSetting,
    setting_b: FransonSetting,
    boundary: Boundary,
    mut visit: impl FnMut(usize, [[f64; 2]; 2], bool),
) -> Result<()> {
    let frame = *state.frame();
    setting_a.check(&frame)?;
    setting_b.check(&frame)?;
    let m = frame.num_bins();
    let (da, db) = (setting_a.delta_tau, setting_b.delta_tau);

    // Bin r sees amplitudes at alice ∈ {r, r-Δa}, bob ∈ {r, r-Δb}.
    let mut candidates: Vec<usize> = Vec::with_capacity(4 * state.support_len());
    for ((a, b), _) in state.amplitudes() {
        for ra in [a, a + da] {
            for rb in [b, b + db] {
                match boundary {
                    Boundary::Open if ra == rb && ra < m => candidates.push(ra),
                    Boundary::Periodic if ra % m == rb % m => candidates.push(ra % m),
                    _ => {}
                }
            }
        }
    }
    candidates.sort_unstable();
    candidates.dedup();

    let shifted = |r: usize, d: usize| -> Option<usize> {
        match boundary {
            Boundary::Open => r.checked_sub(d),
            Boundary::Periodic => Some((r + m - d) % m),
        }
    };
    // Off-diagonal amplitudes of a diagonal state are zero; skip their lookups.
    let diagonal = state.is_diagonal();

    for r in candidates {
        let ra_early = shifted(r, da);
        let rb_early = shifted(r, db);
        let amp = |a: Option<usize>, b: Option<usize>| match (a, b) {
            (Some(a), Some(b)) if a == b || !diagonal => state.amplitude(a, b),
            _ => Complex64::new(0.0, 0.0),
        };
        let w = bin_weights(
            amp(Some(r), Some(r)),
            amp(Some(r), rb_early),
            amp(ra_early, Some(r)),
            amp(ra_early, rb_early),
        );
        visit(r, w, ra_early.is_none() || rb_early.is_none());
    }
    Ok(())
}

/// Same-bin coincidence table for `state` with Alice at `setting_a` and Bob
/// at `setting_b`.
pub fn coincidence_table(
    state: &BiphotonState,
    setting_a: FransonSetting,
    setting_b: FransonSetting,
    boundary: Boundary,
) -> Result<CoincidenceTable> {
    let mut table = CoincidenceTable::default();
    visit_bins(state, setting_a, setting_b, boundary, |r, w, is_edge| {
        if is_edge {
            table.edge_loss += w.iter().flatten().sum::<f64>();
        } else if w.iter().flatten().any(|&x| x > 0.0) {
            table.bins.insert(r, w);
        }
    })?;
    Ok(table)
}

/// Accumulates `Σ_i scale_i · table(state_i)` over many states in one dense
/// per-bin buffer. Equal to summing [`CoincidenceTable::add_scaled`] in the
/// same order.
#[derive(Debug, Clone)]
pub struct TableAccumulator {
    bins: Vec<[[f64; 2]; 2]>,
    touched: Vec<bool>,
    edge_loss: f64,
    /// Diagonal amplitudes of the state being added; zero between calls.
    scratch: Vec<Complex64>,
    /// Bins already visited for the state being added; false between calls.
    visited: Vec<bool>,
}

impl TableAccumulator {
    pub fn new(frame: &FrameSpec) -> Self {
        let m = frame.num_bins();
        Self {
            bins: vec![[[0.0; 2]; 2]; m],
            touched: vec![false; m],
            edge_loss: 0.0,
            scratch: vec![Complex64::new(0.0, 0.0); m],
            visited: vec![false; m],
        }
    }

    fn record(&mut self, r: usize, w: [[f64; 2]; 2], is_edge: bool, scale: f64) {
        if is_edge {
            self.edge_loss += scale * w.iter().flatten().sum::<f64>();
        } else if w.iter().flatten().any(|&x| x > 0.0) {
            self.touched[r] = true;
            for (acc, x) in self.bins[r].iter_mut().flatten().zip(w.iter().flatten()) {
                *acc += scale * x;
            }
        }
    }

    pub fn add(
        &mut self,
        state: &BiphotonState,
        setting_a: FransonSetting,
        setting_b: FransonSetting,
        boundary: Boundary,
        scale: f64,
    ) -> Result<()> {
        let m = self.bins.len();
        if state.frame().num_bins() != m {
            return Err(Error::FrameMismatch {
                left: m,
                right: state.frame().num_bins(),
            });
        }
        if !state.is_diagonal() {
            let mut pending = Vec::new();
            visit_bins(state, setting_a, setting_b, boundary, |r, w, e| pending.push((r, w, e)))?;
            for (r, w, e) in pending {
                self.record(r, w, e, scale);
            }
            return Ok(());
        }
        setting_a.check(state.frame())?;
        setting_b.check(state.frame())?;
        let (da, db) = (setting_a.delta_tau, setting_b.delta_tau);
        for ((a, _), amp) in state.amplitudes() {
            self.scratch[a] = amp;
        }
        let shifted = |r: usize, d: usize| -> Option<usize> {
            match boundary {
                Boundary::Open => r.checked_sub(d),
                Boundary::Periodic => Some((r + m - d) % m),
            }
        };
        let zero = Complex64::new(0.0, 0.0);
        // Same-bin support of a diagonal state: r = n, and r = n + Δ when the delays agree.
        for ((n, _), _) in state.amplitudes() {
            let late = if da == db {
                match boundary {
                    Boundary::Open => Some(n + da).filter(|&r| r < m),
                    Boundary::Periodic => Some((n + da) % m),
                }
            } else {
                None
            };
            for r in std::iter::once(n).chain(late) {
                if std::mem::replace(&mut self.visited[r], true) {
                    continue;
                }
                let (ra_early, rb_early) = (shifted(r, da), shifted(r, db));
                let both_early = match (ra_early, rb_early) {
                    (Some(a), Some(b)) if a == b => self.scratch[a],
                    _ => zero,
                };
                let w = bin_weights(self.scratch[r], zero, zero, both_early);
                self.record(r, w, ra_early.is_none() || rb_early.is_none(), scale);
            }
        }
        for ((n, _), _) in state.amplitudes() {
            self.scratch[n] = zero;
            self.visited[n] = false;
            self.visited[(n + da) % m] = false;
        }
        Ok(())
    }

    pub fn finish(self) -> CoincidenceTable {
        CoincidenceTable {
            bins: self
                .bins
                .into_iter()
                .zip(self.touched)
                .enumerate()
                .filter(|(_, (_, t))| *t)
                .map(|(r, (w, _))| (r, w))
                .collect(),
            edge_loss: self.edge_loss,
        }
    }
}

/// `P(A≠B)` for a single state and setting pair.
pub fn p_error(
    state: &BiphotonState,
    setting_a: FransonSetting,
    setting_b: FransonSetting,
    boundary: Boundary,
) -> Result<f64> {
    coincidence_table(state, setting_a, setting_b, boundary)?.p_error()
}

/// Franson visibility `1 - 2 P(A≠B)`.
pub fn visibility(p: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&p) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    Ok(1.0 - 2.0 * p)
}

/// Joint detection density at `(t_a, t_b)` for continuous envelope `g`:
/// `(1/16) |g(ta,tb) + s_A g(ta-Δa,tb) + s_B g(ta,tb-Δb) + s_A s_B g(ta-Δa,tb-Δb)|^2`.
pub fn joint_detection_continuous(
    g: &EnvelopeFunction,
    t_a: f64,
    t_b: f64,
    dtau_a: f64,
    dtau_b: f64,
    det_a: Detector,
    det_b: Detector,
) -> f64 {
    let (sa, sb) = (det_a.sign(), det_b.sign());
    let amp = g.eval(t_a, t_b)
        + g.eval(t_a - dtau_a, t_b) * sa
        + g.eval(t_a, t_b - dtau_b) * sb
        + g.eval(t_a - dtau_a, t_b - dtau_b) * (sa * sb);
    amp.norm_sqr() / 16.0
}
