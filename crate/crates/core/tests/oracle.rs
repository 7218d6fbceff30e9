//! Library results against the dense `M²` reference implementation.

mod common;

use franson_sec::attacks::{apply_attack_all, DiagonalAttack};
use franson_sec::franson::{coincidence_table, Boundary, CoincidenceTable, Detector, FransonSetting, SettingsBank, TableAccumulator};
use franson_sec::metrics::mixed_tables;
use franson_sec::statevec::{uniform_biphoton, BiphotonState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-12;

fn table_deviation(a: &CoincidenceTable, b: &CoincidenceTable, m: usize) -> f64 {
    let mut dev: f64 = (a.edge_loss() - b.edge_loss()).abs();
    for r in 0..m {
        for x in Detector::BOTH {
            for y in Detector::BOTH {
                dev = dev.max((a.weight(x, y, r) - b.weight(x, y, r)).abs());
            }
        }
    }
    dev
}

/// Dense mixture `Σ_k p_k table(post_k)` of the uniform state.
fn dense_mixed(attack: &DiagonalAttack, delta: usize, boundary: Boundary) -> Vec<[[f64; 2]; 2]> {
    let m = attack.frame().num_bins();
    let psi = common::dense_state(&uniform_biphoton(*attack.frame()));
    let mut acc = vec![[[0.0; 2]; 2]; m];
    for (_, post) in common::dense_outcomes(&psi, m, attack) {
        for (a, t) in acc.iter_mut().zip(common::dense_table(&post, m, delta, delta, boundary)) {
            for i in 0..2 {
                for j in 0..2 {
                    a[i][j] += t[i][j];
                }
            }
        }
    }
    acc
}

#[test]
fn random_corpus_matches_dense_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for m in 2..=10 {
        for _ in 0..6 {
            let attack = common::random_attack(&mut rng, m);
            for state in [uniform_biphoton(*attack.frame()), common::random_state(&mut rng, m)] {
                assert!(common::max_outcome_deviation(&state, &attack) <= TOL);
                let (da, db) = (rng.gen_range(1..m), rng.gen_range(1..m));
                for boundary in [Boundary::Open, Boundary::Periodic] {
                    assert!(common::max_table_deviation(&state, &attack, da, da, boundary) <= TOL);
                    assert!(common::max_table_deviation(&state, &attack, da, db, boundary) <= TOL);
                }
            }
        }
    }
}

#[test]
fn mixed_tables_match_dense_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for m in 2..=12 {
        for _ in 0..4 {
            let attack = common::random_attack(&mut rng, m);
            let delays: Vec<usize> = (1..m).collect();
            let bank = SettingsBank::new(&delays).unwrap();
            for boundary in [Boundary::Open, Boundary::Periodic] {
                let tables = mixed_tables(&attack, &bank, boundary).unwrap();
                for (&delta, table) in delays.iter().zip(&tables) {
                    let dense = dense_mixed(&attack, delta, boundary);
                    for (r, w) in dense.iter().enumerate() {
                        for (i, x) in Detector::BOTH.into_iter().enumerate() {
                            for (j, y) in Detector::BOTH.into_iter().enumerate() {
                                assert!((table.weight(x, y, r) - w[i][j]).abs() <= TOL, "M={m} dt={delta} r={r}");
                            }
                        }
                    }
                }
            }
        }
    }
}

fn accumulate(states: &[(BiphotonState, f64)], sa: FransonSetting, sb: FransonSetting, boundary: Boundary) -> (CoincidenceTable, CoincidenceTable) {
    let frame = *states[0].0.frame();
    let mut fast = TableAccumulator::new(&frame);
    let mut slow = CoincidenceTable::default();
    for (s, p) in states {
        fast.add(s, sa, sb, boundary, *p).unwrap();
        slow.add_scaled(&coincidence_table(s, sa, sb, boundary).unwrap(), *p);
    }
    (fast.finish(), slow)
}

#[test]
fn accumulator_agrees_with_summed_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for m in 2..=16 {
        for _ in 0..6 {
            let attack = common::random_attack(&mut rng, m);
            let diagonal: Vec<_> = apply_attack_all(&uniform_biphoton(*attack.frame()), &attack)
                .unwrap()
                .into_iter()
                .map(|o| (o.post_state, o.probability))
                .collect();
            let general: Vec<_> = (0..3).map(|_| (common::random_state(&mut rng, m), rng.gen_range(0.0..1.0))).collect();
            let sa = FransonSetting::new(rng.gen_range(1..m)).unwrap();
            let sb = FransonSetting::new(rng.gen_range(1..m)).unwrap();
            for boundary in [Boundary::Open, Boundary::Periodic] {
                for states in [&diagonal, &general] {
                    for (x, y) in [(sa, sa), (sa, sb)] {
                        let (fast, slow) = accumulate(states, x, y, boundary);
                        assert!(table_deviation(&fast, &slow, m) <= TOL);
                    }
                }
            }
        }
    }
}

#[test]
fn accumulator_rejects_foreign_frame() {
    let a = uniform_biphoton(franson_sec::statevec::FrameSpec::with_bins(8).unwrap());
    let b = uniform_biphoton(franson_sec::statevec::FrameSpec::with_bins(9).unwrap());
    let s = FransonSetting::new(1).unwrap();
    let mut acc = TableAccumulator::new(a.frame());
    assert!(acc.add(&b, s, s, Boundary::Open, 1.0).is_err());
}
