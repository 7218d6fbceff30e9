//! Continuous-time detection against the binned model.

use franson_sec::attacks::continuous_multipeak;
use franson_sec::franson::{coincidence_table, joint_detection_continuous, Boundary, Detector, FransonSetting};
use franson_sec::statevec::{discretize_envelope, EnvelopeFunction, FrameSpec};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Envelope constant on each unit bin rectangle, taking values `c[a][b]`.
fn piecewise(c: Vec<Vec<Complex64>>) -> EnvelopeFunction {
    let m = c.len() as f64;
    EnvelopeFunction::new(move |t1, t2| c[t1.floor() as usize][t2.floor() as usize], 0.0, m).unwrap()
}

#[test]
fn piecewise_constant_envelope_matches_binned_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = 6;
    let frame = FrameSpec::with_bins(m).unwrap();
    for _ in 0..5 {
        let c: Vec<Vec<Complex64>> = (0..m)
            .map(|_| (0..m).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
            .collect();
        let norm: f64 = c.iter().flatten().map(|x| x.norm_sqr()).sum();
        let g = piecewise(c);
        let state = discretize_envelope(&g, frame).unwrap();
        for (da, db) in [(1, 1), (2, 2), (1, 3)] {
            let table = coincidence_table(
                &state,
                FransonSetting::new(da).unwrap(),
                FransonSetting::new(db).unwrap(),
                Boundary::Open,
            )
            .unwrap();
            for r in da.max(db)..m {
                for t in [r as f64 + 0.25, r as f64 + 0.75] {
                    for x in Detector::BOTH {
                        for y in Detector::BOTH {
                            let density = joint_detection_continuous(&g, t, t, da as f64, db as f64, x, y);
                            let expected = table.weight(x, y, r) * norm / 4.0;
                            assert!((density - expected).abs() < 1e-12, "r={r} t={t}");
                        }
                    }
                }
            }
        }
    }
}

fn flat(extent: f64) -> EnvelopeFunction {
    EnvelopeFunction::new(|_, _| Complex64::new(1.0, 0.0), 0.0, extent).unwrap()
}

#[test]
fn matched_comb_leaves_interior_detections_unchanged() {
    let (width, spacing, peaks) = (0.4, 1.0, 6);
    let attack = continuous_multipeak(width, spacing, peaks).unwrap();
    let g = flat(40.0);
    let t_e = 20.0;
    let post = attack.post_envelope(&g, t_e).unwrap();
    // Bob's click at t and t - Δe both lie inside the comb.
    for m in 0..peaks - 1 {
        for frac in [0.1, 0.5, 0.9] {
            let t = t_e - m as f64 * spacing + frac * width;
            for x in Detector::BOTH {
                for y in Detector::BOTH {
                    let clean = joint_detection_continuous(&g, t, t, spacing, spacing, x, y);
                    let after = joint_detection_continuous(&post, t, t, spacing, spacing, x, y);
                    assert!((clean - after).abs() < 1e-15);
                }
            }
            let mismatch = joint_detection_continuous(&post, t, t, spacing, spacing, Detector::D2, Detector::D3);
            assert_eq!(mismatch, 0.0);
        }
    }
}

#[test]
fn mismatched_delay_randomizes_detectors() {
    let (width, spacing, peaks) = (0.4, 1.0, 6);
    let attack = continuous_multipeak(width, spacing, peaks).unwrap();
    let g = flat(40.0);
    let t_e = 20.0;
    let post = attack.post_envelope(&g, t_e).unwrap();
    // Delays that are not multiples of the spacing put the early arm in a gap.
    for dtau in [0.5, 1.5, 2.7] {
        for m in 0..peaks {
            let t = t_e - m as f64 * spacing + 0.5 * width;
            let d: Vec<f64> = Detector::BOTH
                .into_iter()
                .flat_map(|x| Detector::BOTH.map(|y| joint_detection_continuous(&post, t, t, dtau, dtau, x, y)))
                .collect();
            let total: f64 = d.iter().sum();
            let mismatch = d[1] + d[2];
            assert!(total > 0.0);
            assert!((mismatch / total - 0.5).abs() < 1e-12, "dtau={dtau} m={m}");
        }
    }
}
