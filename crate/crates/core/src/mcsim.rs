//! Monte Carlo simulation of the full protocol.
//!
//! Each frame: the source emits the uniform diagonal state; Eve intercepts
//! Bob's photon with probability `intercept_fraction` and samples an outcome
//! of her POM; Alice and Bob each route to the timing detector with
//! probability `p_timing` or to an interferometer with a uniformly drawn
//! setting. Only matched-basis, matched-setting events survive sifting, and
//! security checks additionally require both clicks in the same bin.
//!
//! Interferometer outcomes are sampled exactly. Given the diagonal state
//! `Σ c_n |n,n>`, each photon takes the short or long arm with probability
//! 1/2; a same-arm pair lands both clicks in bin `r`, and the detector pair
//! is drawn from the interference term
//! `P(s_A s_B = +1 | r) = |c_r + c_{r-Δ}|² / (2(|c_r|² + |c_{r-Δ}|²))`.
//! Mixed-arm pairs land in different bins and are discarded.
//!
//! Randomness comes from ChaCha8 streams keyed by `(seed, chunk)` where a
//! chunk is [`CHUNK_FRAMES`] consecutive frames; draws inside a chunk follow
//! frame order and a fixed role order (Eve, Alice, Bob, detection). Output is
//! therefore independent of how chunks are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{AttackSpec, DiagonalAttack, IndexingMode};
use crate::error::{Error, Result};
use crate::franson::{coincidence_table, Boundary, CoincidenceTable, SettingsBank};
use crate::metrics::{boundary_for, mixed_tables, report_from_tables, Convention, DisturbanceReport};
use crate::statevec::{uniform_biphoton, FrameSpec};

/// Frames per random stream.
pub const CHUNK_FRAMES: u64 = 4096;

fn default_p_timing() -> f64 {
    0.9
}

fn default_intercept() -> f64 {
    1.0
}

/// Full protocol configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub frame: FrameSpec,
    /// Probability each party routes a photon to the timing detector.
    #[serde(default = "default_p_timing")]
    pub p_timing: f64,
    pub bank: SettingsBank,
    #[serde(default)]
    pub attack: Option<AttackSpec>,
    #[serde(default = "default_intercept")]
    pub intercept_fraction: f64,
    pub n_frames: u64,
    #[serde(default)]
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_timing", self.p_timing), ("intercept_fraction", self.intercept_fraction)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} = {p} not in [0, 1]")));
            }
        }
        if self.n_frames == 0 {
            return Err(Error::InvalidParameter("n_frames must be >= 1".into()));
        }
        self.bank.check(&self.frame)?;
        if let Some(a) = &self.attack {
            if a.frame != self.frame {
                return Err(Error::FrameMismatch {
                    left: self.frame.num_bins(),
                    right: a.frame.num_bins(),
                });
            }
        }
        Ok(())
    }

    /// Franson edge handling for this configuration.
    pub fn boundary(&self) -> Boundary {
        boundary_for(
            self.attack
                .as_ref()
                .map(|a| a.indexing_mode)
                .unwrap_or(IndexingMode::Cyclic),
        )
    }
}

/// Security-check counts for one setting, `[alice_detector][bob_detector]`
/// with index 0 = D2 and 1 = D3.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettingCounts {
    pub delta_tau: usize,
    pub counts: [[u64; 2]; 2],
}

impl SettingCounts {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn mismatches(&self) -> u64 {
        self.counts[0][1] + self.counts[1][0]
    }
}

/// Aggregated simulation counts and the rates derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiftedStats {
    pub n_frames: u64,
    pub intercepted: u64,
    pub timing_coincidences: u64,
    pub timing_mismatches: u64,
    pub per_setting: Vec<SettingCounts>,
    /// Parties chose different bases or different settings.
    pub basis_discards: u64,
    /// Interferometer clicks in different bins.
    pub cross_bin_discards: u64,
    /// Same-bin clicks whose projection leaves the frame.
    pub edge_discards: u64,
    #[serde(serialize_with = "crate::format::ser_f64")]
    pub p_error: f64,
    #[serde(serialize_with = "crate::format::ser_f64")]
    pub p_error_std_err: f64,
    #[serde(serialize_with = "crate::format::ser_f64")]
    pub timing_error_rate: f64,
}

impl SiftedStats {
    fn empty(bank: &SettingsBank) -> Self {
        Self {
            n_frames: 0,
            intercepted: 0,
            timing_coincidences: 0,
            timing_mismatches: 0,
            per_setting: bank
                .settings()
                .iter()
                .map(|s| SettingCounts {
                    delta_tau: s.delta_tau(),
                    counts: [[0; 2]; 2],
                })
                .collect(),
            basis_discards: 0,
            cross_bin_discards: 0,
            edge_discards: 0,
            p_error: 0.0,
            p_error_std_err: 0.0,
            timing_error_rate: 0.0,
        }
    }

    /// Adds the counts of `other`. Associative and commutative.
    pub fn merge(mut self, other: SiftedStats) -> Self {
        self.n_frames += other.n_frames;
        self.intercepted += other.intercepted;
        self.timing_coincidences += other.timing_coincidences;
        self.timing_mismatches += other.timing_mismatches;
        for (a, b) in self.per_setting.iter_mut().zip(other.per_setting) {
            for i in 0..2 {
                for j in 0..2 {
                    a.counts[i][j] += b.counts[i][j];
                }
            }
        }
        self.basis_discards += other.basis_discards;
        self.cross_bin_discards += other.cross_bin_discards;
        self.edge_discards += other.edge_discards;
        self
    }

    pub fn security_checks(&self) -> u64 {
        self.per_setting.iter().map(SettingCounts::total).sum()
    }

    pub fn security_mismatches(&self) -> u64 {
        self.per_setting.iter().map(SettingCounts::mismatches).sum()
    }

    /// Frames where both parties measured in the same basis (and, for the
    /// interferometer, the same setting).
    pub fn matched_basis(&self) -> u64 {
        self.timing_coincidences + self.security_checks() + self.cross_bin_discards + self.edge_discards
    }

    fn finalize(mut self) -> Self {
        let n = self.security_checks();
        if n > 0 {
            let p = self.security_mismatches() as f64 / n as f64;
            self.p_error = p;
            self.p_error_std_err = (p * (1.0 - p) / n as f64).sqrt();
        }
        if self.timing_coincidences > 0 {
            self.timing_error_rate = self.timing_mismatches as f64 / self.timing_coincidences as f64;
        }
        self
    }
}

/// Eve's POM prepared for sampling.
struct PreparedAttack {
    outcome_cdf: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    row_cdfs: Vec<Vec<f64>>,
}

impl PreparedAttack {
    fn new(attack: &DiagonalAttack) -> Self {
        let m = attack.frame().num_bins() as f64;
        let mut acc = 0.0;
        let mut outcome_cdf = Vec::with_capacity(attack.num_outcomes());
        let mut row_cdfs = Vec::with_capacity(attack.num_outcomes());
        for row in attack.rows() {
            let mut r = 0.0;
            let cdf: Vec<f64> = row
                .iter()
                .map(|&(_, lam)| {
                    r += lam;
                    r
                })
                .collect();
            acc += r / m;
            outcome_cdf.push(acc);
            row_cdfs.push(cdf);
        }
        Self {
            outcome_cdf,
            rows: attack.rows().to_vec(),
            row_cdfs,
        }
    }

    fn sample_outcome(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.outcome_cdf.last().unwrap();
        let u = rng.gen::<f64>() * total;
        self.outcome_cdf
            .partition_point(|&c| c <= u)
            .min(self.outcome_cdf.len() - 1)
    }

    fn sample_bin(&self, k: usize, rng: &mut ChaCha8Rng) -> usize {
        let cdf = &self.row_cdfs[k];
        let u = rng.gen::<f64>() * cdf.last().unwrap();
        let i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        self.rows[k][i].0
    }

    /// Unnormalized amplitude `√λ[k][n]`.
    fn amplitude(&self, k: usize, n: usize) -> f64 {
        let row = &self.rows[k];
        row.binary_search_by_key(&n, |&(b, _)| b)
            .map(|i| row[i].1.sqrt())
            .unwrap_or(0.0)
    }
}

/// Diagonal two-photon state of one frame.
#[derive(Clone, Copy)]
enum FrameState {
    Uniform,
    Outcome(usize),
}

struct Simulator<'a> {
    config: &'a ProtocolConfig,
    attack: Option<PreparedAttack>,
    boundary: Boundary,
}

impl Simulator<'_> {
    fn sample_bin(&self, state: FrameState, rng: &mut ChaCha8Rng) -> usize {
        match state {
            FrameState::Uniform => rng.gen_range(0..self.config.frame.num_bins()),
            FrameState::Outcome(k) => self.attack.as_ref().unwrap().sample_bin(k, rng),
        }
    }

    fn amplitude(&self, state: FrameState, n: usize) -> f64 {
        match state {
            FrameState::Uniform => 1.0,
            FrameState::Outcome(k) => self.attack.as_ref().unwrap().amplitude(k, n),
        }
    }

    /// `None` for timing, `Some(setting index)` for the interferometer.
    fn choose(&self, rng: &mut ChaCha8Rng) -> Option<usize> {
        if rng.gen::<f64>() < self.config.p_timing {
            None
        } else {
            Some(rng.gen_range(0..self.config.bank.len()))
        }
    }

    fn run_chunk(&self, chunk: u64) -> SiftedStats {
        let cfg = self.config;
        let m = cfg.frame.num_bins();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(chunk);
        let start = chunk * CHUNK_FRAMES;
        let end = (start + CHUNK_FRAMES).min(cfg.n_frames);

        let mut stats = SiftedStats::empty(&cfg.bank);
        stats.n_frames = end - start;
        for _ in start..end {
            let state = match &self.attack {
                Some(a) if cfg.intercept_fraction > 0.0 && rng.gen::<f64>() < cfg.intercept_fraction => {
                    stats.intercepted += 1;
                    FrameState::Outcome(a.sample_outcome(&mut rng))
                }
                _ => FrameState::Uniform,
            };
            let alice = self.choose(&mut rng);
            let bob = self.choose(&mut rng);
            match (alice, bob) {
                (None, None) => {
                    // Diagonal states put both photons in the same bin.
                    let n = self.sample_bin(state, &mut rng);
                    let (bin_a, bin_b) = (n, n);
                    stats.timing_coincidences += 1;
                    if bin_a != bin_b {
                        stats.timing_mismatches += 1;
                    }
                }
                (Some(sa), Some(sb)) if sa == sb => {
                    let delta = cfg.bank.settings()[sa].delta_tau();
                    let n = self.sample_bin(state, &mut rng);
                    let arms: u32 = rng.gen();
                    let (long_a, long_b) = (arms & 1 == 1, arms & 2 == 2);
                    if long_a != long_b {
                        stats.cross_bin_discards += 1;
                        continue;
                    }
                    let r_raw = if long_a { n + delta } else { n };
                    let (r, early) = match self.boundary {
                        Boundary::Periodic => (r_raw % m, (r_raw + m - delta) % m),
                        Boundary::Open => {
                            if r_raw >= m || r_raw < delta {
                                stats.edge_discards += 1;
                                continue;
                            }
                            (r_raw, r_raw - delta)
                        }
                    };
                    let (c_r, c_e) = (self.amplitude(state, r), self.amplitude(state, early));
                    let p_same = (c_r + c_e).powi(2) / (2.0 * (c_r * c_r + c_e * c_e));
                    let same_sign = rng.gen::<f64>() < p_same;
                    let det_a = usize::from(rng.gen::<bool>());
                    let det_b = if same_sign { det_a } else { 1 - det_a };
                    stats.per_setting[sa].counts[det_a][det_b] += 1;
                }
                _ => stats.basis_discards += 1,
            }
        }
        stats
    }
}

/// Runs the protocol. Output depends only on the configuration.
pub fn run_protocol(config: &ProtocolConfig) -> Result<SiftedStats> {
    config.validate()?;
    let attack = config.attack.as_ref().map(|a| a.build()).transpose()?;
    let sim = Simulator {
        config,
        attack: attack.as_ref().map(PreparedAttack::new),
        boundary: config.boundary(),
    };
    let chunks = config.n_frames.div_ceil(CHUNK_FRAMES);
    let stats = (0..chunks)
        .into_par_iter()
        .map(|c| sim.run_chunk(c))
        .reduce(|| SiftedStats::empty(&config.bank), SiftedStats::merge);
    Ok(stats.finalize())
}

/// Exact disturbance for a configuration, mixing intercepted and
/// untouched frames by `intercept_fraction`. Pooled across settings to match
/// how the simulator counts.
pub fn exact_report(config: &ProtocolConfig) -> Result<DisturbanceReport> {
    config.validate()?;
    let boundary = config.boundary();
    let clean: Vec<CoincidenceTable> = config
        .bank
        .settings()
        .iter()
        .map(|&s| coincidence_table(&uniform_biphoton(config.frame), s, s, boundary))
        .collect::<Result<_>>()?;
    let tables = match &config.attack {
        None => clean,
        Some(spec) => {
            let attacked = mixed_tables(&spec.build()?, &config.bank, boundary)?;
            let f = config.intercept_fraction;
            clean
                .iter()
                .zip(&attacked)
                .map(|(c, a)| {
                    let mut t = CoincidenceTable::default();
                    t.add_scaled(c, 1.0 - f);
                    t.add_scaled(a, f);
                    t
                })
                .collect()
        }
    };
    report_from_tables(&config.bank, &tables, Convention::CoincidenceWeighted)
}

/// Standardized deviations of simulated rates from exact values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScores {
    #[serde(serialize_with = "crate::format::ser_f64")]
    pub p_error: f64,
    pub per_setting: Vec<SettingZ>,
    #[serde(serialize_with = "crate::format::ser_f64")]
    pub matched_basis_fraction: f64,
}

impl ZScores {
    /// Largest `|z|` over all quantities.
    pub fn max_abs(&self) -> f64 {
        self.per_setting
            .iter()
            .map(|s| s.z.abs())
            .fold(self.p_error.abs().max(self.matched_basis_fraction.abs()), f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingZ {
    pub delta_tau: usize,
    #[serde(serialize_with = "crate::format::ser_f64")]
    pub z: f64,
}

fn z_score(empirical: f64, exact: f64, n: u64, what: &str) -> Result<f64> {
    if n < 2 {
        return Err(Error::ZeroVariance(format!("{what}: {n} samples")));
    }
    let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
    if sigma > 0.0 {
        Ok((empirical - exact) / sigma)
    } else if empirical == exact {
        Ok(0.0)
    } else {
        Err(Error::ZeroVariance(format!(
            "{what}: exact value {exact} has no variance but simulation gave {empirical}"
        )))
    }
}

/// `(empirical - exact) / σ` per quantity, with σ the binomial standard
/// error at the exact rate.
pub fn compare_to_exact(stats: &SiftedStats, exact: &DisturbanceReport, config: &ProtocolConfig) -> Result<ZScores> {
    let p_error = z_score(stats.p_error, exact.p_error, stats.security_checks(), "p_error")?;
    let mut per_setting = Vec::with_capacity(stats.per_setting.len());
    for (counts, ex) in stats.per_setting.iter().zip(&exact.per_setting) {
        let n = counts.total();
        let emp = if n > 0 { counts.mismatches() as f64 / n as f64 } else { 0.0 };
        per_setting.push(SettingZ {
            delta_tau: counts.delta_tau,
            z: z_score(emp, ex.p_error, n, "per-setting p_error")?,
        });
    }
    let d = config.bank.len() as f64;
    let pt = config.p_timing;
    let expected = pt * pt + (1.0 - pt).powi(2) / d;
    let matched = stats.matched_basis() as f64 / stats.n_frames as f64;
    let matched_basis_fraction = z_score(matched, expected, stats.n_frames, "matched-basis fraction")?;
    Ok(ZScores {
        p_error,
        per_setting,
        matched_basis_fraction,
    })
}

/// Named configurations used by the CLI and the acceptance suite.
pub fn preset(name: &str, n_frames: u64, seed: u64) -> Option<ProtocolConfig> {
    use crate::attacks::{AttackKind, PeakWeights};
    let frame = FrameSpec::with_bins(1024).ok()?;
    let spec = |kind| AttackSpec {
        frame,
        indexing_mode: IndexingMode::Cyclic,
        kind,
    };
    let attack = match name {
        "no-attack" => None,
        "sharp" | "sharp-attack" => Some(spec(AttackKind::Sharp)),
        "multipeak" => Some(spec(AttackKind::Multipeak {
            peaks: 32,
            spacing: 3,
            weights: PeakWeights::Flat,
        })),
        _ => return None,
    };
    Some(ProtocolConfig {
        frame,
        p_timing: default_p_timing(),
        bank: SettingsBank::new(&[3]).ok()?,
        attack,
        intercept_fraction: 1.0,
        n_frames,
        seed,
    })
}

pub const PRESET_NAMES: [&str; 3] = ["no-attack", "sharp", "multipeak"];
