//! Dense-matrix reference implementation over the full `M²` two-photon space.
#![allow(dead_code)]

use franson_sec::attacks::{DiagonalAttack, IndexingMode};
use franson_sec::franson::Boundary;
use franson_sec::statevec::{BiphotonState, FrameSpec};
use num_complex::Complex64;
use rand::Rng;

pub type Dense = Vec<Complex64>;

/// Row-major `ψ[a * M + b]`.
pub fn dense_state(state: &BiphotonState) -> Dense {
    let m = state.frame().num_bins();
    let mut psi = vec![Complex64::default(); m * m];
    for ((a, b), amp) in state.amplitudes() {
        psi[a * m + b] = amp;
    }
    psi
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

/// Dense `M × M` weight matrix of outcome `k`.
pub fn dense_kraus(attack: &DiagonalAttack, k: usize) -> Vec<Vec<f64>> {
    let m = attack.frame().num_bins();
    let mut op = vec![vec![0.0; m]; m];
    for (n, row) in op.iter_mut().enumerate() {
        row[n] = attack.weight(k, n).sqrt();
    }
    op
}

/// `(probability, unnormalized post-state)` for each outcome, applying the
/// Kraus operator as a full matrix on Bob's index.
pub fn dense_outcomes(psi: &Dense, m: usize, attack: &DiagonalAttack) -> Vec<(f64, Dense)> {
    (0..attack.num_outcomes())
        .map(|k| {
            let op = dense_kraus(attack, k);
            let mut out = vec![Complex64::default(); m * m];
            for a in 0..m {
                for b in 0..m {
                    let mut acc = Complex64::default();
                    for j in 0..m {
                        acc += psi[a * m + j] * op[b][j];
                    }
                    out[a * m + b] = acc;
                }
            }
            (norm_sqr(&out), out)
        })
        .collect()
}

/// `(|r> + sign |r - Δ>) / √2`, or `None` when `r - Δ` leaves an open frame.
pub fn projector(m: usize, r: usize, delta: usize, sign: f64, boundary: Boundary) -> Option<Vec<f64>> {
    let early = match boundary {
        Boundary::Open => r.checked_sub(delta)?,
        Boundary::Periodic => (r + m - delta) % m,
    };
    let mut v = vec![0.0; m];
    let s = std::f64::consts::FRAC_1_SQRT_2;
    v[r] += s;
    v[early] += sign * s;
    Some(v)
}

/// Per-bin detector-pair weights `[bin][alice][bob]`, zero for edge bins.
pub fn dense_table(psi: &Dense, m: usize, da: usize, db: usize, boundary: Boundary) -> Vec<[[f64; 2]; 2]> {
    let mut table = vec![[[0.0; 2]; 2]; m];
    for (r, entry) in table.iter_mut().enumerate() {
        for (ia, sa) in [1.0, -1.0].into_iter().enumerate() {
            for (ib, sb) in [1.0, -1.0].into_iter().enumerate() {
                let (Some(pa), Some(pb)) = (projector(m, r, da, sa, boundary), projector(m, r, db, sb, boundary)) else {
                    continue;
                };
                let mut amp = Complex64::default();
                for a in 0..m {
                    for b in 0..m {
                        amp += pa[a] * pb[b] * psi[a * m + b];
                    }
                }
                entry[ia][ib] = amp.norm_sqr();
            }
        }
    }
    table
}

/// Random POM with column sums one: each bin spreads its weight over a
/// random subset of outcomes.
pub fn random_attack<R: Rng>(rng: &mut R, m: usize) -> DiagonalAttack {
    let frame = FrameSpec::with_bins(m).unwrap();
    let outcomes = rng.gen_range(1..=2 * m);
    let mut rows = vec![Vec::new(); outcomes];
    for n in 0..m {
        let hits = rng.gen_range(1..=outcomes);
        let chosen: Vec<usize> = (0..hits).map(|_| rng.gen_range(0..outcomes)).collect();
        let weights: Vec<f64> = chosen.iter().map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for (&k, w) in chosen.iter().zip(weights) {
            rows[k].push((n, w / total));
        }
    }
    let mode = if rng.gen_bool(0.5) { IndexingMode::Cyclic } else { IndexingMode::Truncated };
    DiagonalAttack::from_rows(frame, rows, mode).unwrap()
}

/// Random normalized state on a random sparse support.
pub fn random_state<R: Rng>(rng: &mut R, m: usize) -> BiphotonState {
    let frame = FrameSpec::with_bins(m).unwrap();
    let terms = rng.gen_range(1..=m * m / 2 + 1);
    let entries: Vec<_> = (0..terms)
        .map(|_| {
            (
                (rng.gen_range(0..m), rng.gen_range(0..m)),
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            )
        })
        .collect();
    let state = BiphotonState::from_amplitudes(frame, entries).unwrap();
    if state.norm_sqr() == 0.0 {
        return BiphotonState::product(frame, 0, 0).unwrap();
    }
    state.normalized().unwrap()
}

/// Largest absolute difference between the library's mixed tables and the
/// dense oracle for the given state, attack and settings.
pub fn max_table_deviation(
    state: &BiphotonState,
    attack: &DiagonalAttack,
    da: usize,
    db: usize,
    boundary: Boundary,
) -> f64 {
    use franson_sec::attacks::apply_attack_all;
    use franson_sec::franson::{coincidence_table, CoincidenceTable, Detector, FransonSetting};

    let m = state.frame().num_bins();
    let psi = dense_state(state);
    let mut dense = vec![[[0.0; 2]; 2]; m];
    for (_, post) in dense_outcomes(&psi, m, attack) {
        for (acc, t) in dense.iter_mut().zip(dense_table(&post, m, da, db, boundary)) {
            for i in 0..2 {
                for j in 0..2 {
                    acc[i][j] += t[i][j];
                }
            }
        }
    }
    let (sa, sb) = (FransonSetting::new(da).unwrap(), FransonSetting::new(db).unwrap());
    let mut lib = CoincidenceTable::default();
    for o in apply_attack_all(state, attack).unwrap() {
        lib.add_scaled(&coincidence_table(&o.post_state, sa, sb, boundary).unwrap(), o.probability);
    }
    let mut dev: f64 = 0.0;
    for (r, w) in dense.iter().enumerate() {
        for (ia, a) in Detector::BOTH.into_iter().enumerate() {
            for (ib, b) in Detector::BOTH.into_iter().enumerate() {
                dev = dev.max((lib.weight(a, b, r) - w[ia][ib]).abs());
            }
        }
    }
    dev
}

/// Largest difference in outcome probabilities and post-state amplitudes.
pub fn max_outcome_deviation(state: &BiphotonState, attack: &DiagonalAttack) -> f64 {
    use franson_sec::attacks::apply_attack_all;

    let m = state.frame().num_bins();
    let dense = dense_outcomes(&dense_state(state), m, attack);
    let lib = apply_attack_all(state, attack).unwrap();
    let mut dev: f64 = 0.0;
    let mut seen = vec![false; dense.len()];
    for o in &lib {
        seen[o.outcome] = true;
        let (p, post) = &dense[o.outcome];
        dev = dev.max((o.probability - p).abs());
        let scale = 1.0 / p.sqrt();
        let lib_post = dense_state(&o.post_state);
        for (x, y) in lib_post.iter().zip(post) {
            dev = dev.max((x - y * scale).norm());
        }
    }
    for (k, (p, _)) in dense.iter().enumerate() {
        if !seen[k] {
            dev = dev.max(*p);
        }
    }
    dev
}
