//! Sweep specifications, presets and CSV rendering.
//!
//! CSV layout: a `#schema_version=N` line, a header, then one row per point.
//! Curve sweeps write `param,eve_bits,p_error,visibility`, with a leading
//! `peaks` column when the peak count is swept jointly.

use anyhow::{bail, Result};
use franson_sec::attacks::{sliding_window_attack, square_window_attack, GaussianExponent, IndexingMode};
use franson_sec::format::fmt_sig12;
use franson_sec::franson::SettingsBank;
use franson_sec::metrics::{
    disturbance, eve_information, gaussian_width_for_information, info_disturbance_curve, Convention, CurveFamily,
    InfoDisturbancePoint,
};
use franson_sec::statevec::FrameSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::SCHEMA_VERSION;

/// Parameter values: an explicit list or an evenly spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamGrid {
    List(Vec<f64>),
    Range {
        start: f64,
        stop: f64,
        count: usize,
        /// Space points evenly in `log10`.
        #[serde(default)]
        log: bool,
    },
}

impl ParamGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let values = match *self {
            ParamGrid::List(ref v) => v.clone(),
            ParamGrid::Range { start, stop, count, log } => {
                if log && !(start > 0.0 && stop > 0.0) {
                    bail!("log range needs positive endpoints, got {start}..{stop}");
                }
                let (a, b) = if log { (start.log10(), stop.log10()) } else { (start, stop) };
                (0..count)
                    .map(|i| {
                        let x = if count == 1 { a } else { a + (b - a) * i as f64 / (count - 1) as f64 };
                        if log {
                            10f64.powf(x)
                        } else {
                            x
                        }
                    })
                    .collect()
            }
        };
        if values.is_empty() {
            bail!("parameter grid is empty");
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub case: String,
    pub family: CurveFamily,
    pub param: f64,
    pub bank: SettingsBank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepSpec {
    /// Information-disturbance curve over one parameter, optionally jointly
    /// over the peak count of a Gaussian multipeak family.
    Curve {
        family: CurveFamily,
        params: ParamGrid,
        bank: SettingsBank,
        #[serde(default)]
        convention: Convention,
        #[serde(default)]
        peaks: Option<Vec<usize>>,
    },
    /// Named single points.
    Table {
        rows: Vec<TableRow>,
        #[serde(default)]
        convention: Convention,
    },
    /// Square window against the Gaussian window carrying the same
    /// information, for each path difference.
    WindowComparison {
        frame: FrameSpec,
        window: usize,
        delta_taus: Vec<usize>,
    },
}

/// Header plus rendered rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = format!("#schema_version={SCHEMA_VERSION}\n{}\n", self.header.join(","));
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn point_cells(p: &InfoDisturbancePoint) -> [String; 4] {
    [fmt_sig12(p.param), fmt_sig12(p.eve_bits), fmt_sig12(p.p_error), fmt_sig12(p.visibility)]
}

fn with_peaks(family: &CurveFamily, peaks: usize) -> Result<CurveFamily> {
    let mut f = family.clone();
    match &mut f {
        CurveFamily::GaussianMultipeak { peaks: p, .. } => *p = peaks,
        CurveFamily::GaussianProduct { peaks_per_axis, .. } => *peaks_per_axis = peaks,
        _ => bail!("joint peak sweeps need a Gaussian multipeak or product family"),
    }
    Ok(f)
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Table> {
    match spec {
        SweepSpec::Curve {
            family,
            params,
            bank,
            convention,
            peaks,
        } => {
            let params = params.values()?;
            match peaks {
                None => {
                    let points = info_disturbance_curve(family, &params, bank, *convention)?;
                    Ok(Table {
                        header: vec!["param", "eve_bits", "p_error", "visibility"],
                        rows: points.iter().map(|p| point_cells(p).to_vec()).collect(),
                    })
                }
                Some(list) => {
                    if list.is_empty() {
                        bail!("peak list is empty");
                    }
                    let mut rows = Vec::new();
                    for &l in list {
                        let fam = with_peaks(family, l)?;
                        for p in info_disturbance_curve(&fam, &params, bank, *convention)? {
                            let mut row = vec![l.to_string()];
                            row.extend(point_cells(&p));
                            rows.push(row);
                        }
                    }
                    Ok(Table {
                        header: vec!["peaks", "param", "eve_bits", "p_error", "visibility"],
                        rows,
                    })
                }
            }
        }
        SweepSpec::Table { rows, convention } => {
            if rows.is_empty() {
                bail!("table has no rows");
            }
            let rendered = rows
                .par_iter()
                .map(|r| {
                    let p = r.family.point(r.param, &r.bank, *convention)?;
                    let mut row = vec![r.case.clone()];
                    row.extend(point_cells(&p));
                    Ok(row)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Table {
                header: vec!["case", "param", "eve_bits", "p_error", "visibility"],
                rows: rendered,
            })
        }
        SweepSpec::WindowComparison {
            frame,
            window,
            delta_taus,
        } => {
            if delta_taus.is_empty() {
                bail!("delta_taus is empty");
            }
            let square = if *window > 0 && frame.num_bins() % window == 0 {
                square_window_attack(*frame, *window)?
            } else {
                sliding_window_attack(*frame, *window)?
            };
            let bits = eve_information(&square);
            let width = gaussian_width_for_information(*frame, bits, IndexingMode::Cyclic)?;
            let gaussian = franson_sec::attacks::gaussian_window_attack(*frame, width, IndexingMode::Cyclic)?;
            let rows = delta_taus
                .iter()
                .map(|&dt| {
                    let bank = SettingsBank::new(&[dt])?;
                    let sq = disturbance(&square, &bank, Convention::RawAverage)?.p_error;
                    let g = disturbance(&gaussian, &bank, Convention::RawAverage)?.p_error;
                    Ok(vec![dt.to_string(), fmt_sig12(sq), fmt_sig12(g), fmt_sig12(bits), fmt_sig12(width)])
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Table {
                header: vec!["delta_tau", "square_p_error", "gaussian_p_error", "eve_bits", "gaussian_width"],
                rows,
            })
        }
    }
}

pub const PRESET_NAMES: [&str; 4] = ["fig2", "fig3", "fig5", "table-sec6"];

pub fn preset(name: &str) -> Option<SweepSpec> {
    let m1024 = FrameSpec::with_bins(1024).ok()?;
    let gaussian_multipeak = |peaks| CurveFamily::GaussianMultipeak {
        frame: m1024,
        peaks,
        spacing: 3,
        exponent: GaussianExponent::Squared,
        indexing_mode: IndexingMode::Cyclic,
    };
    let gaussian_product = CurveFamily::GaussianProduct {
        frame: m1024,
        peaks_per_axis: 16,
        spacings: vec![1, 17],
        exponent: GaussianExponent::Squared,
        indexing_mode: IndexingMode::Cyclic,
    };
    let single = SettingsBank::new(&[3]).ok()?;
    let pair = SettingsBank::new(&[1, 17]).ok()?;
    Some(match name {
        "fig2" => SweepSpec::WindowComparison {
            frame: FrameSpec::with_bins(64).ok()?,
            window: 6,
            delta_taus: (1..=12).collect(),
        },
        "fig3" => SweepSpec::Curve {
            family: gaussian_multipeak(64),
            params: ParamGrid::Range {
                start: 1e-5,
                stop: 10.0,
                count: 241,
                log: true,
            },
            bank: single,
            convention: Convention::RawAverage,
            peaks: None,
        },
        "fig5" => {
            let mut params: Vec<f64> = (0..=120).map(|i| 10f64.powf(-3.0 + 4.0 * i as f64 / 120.0)).collect();
            params.extend([0.2, 0.3]);
            params.sort_by(f64::total_cmp);
            SweepSpec::Curve {
                family: gaussian_product.clone(),
                params: ParamGrid::List(params),
                bank: pair,
                convention: Convention::RawAverage,
                peaks: None,
            }
        }
        "table-sec6" => {
            let row = |case: &str, family: CurveFamily, param: f64, bank: &SettingsBank| TableRow {
                case: case.into(),
                family,
                param,
                bank: bank.clone(),
            };
            let flat = CurveFamily::FlatMultipeak {
                frame: m1024,
                spacing: 3,
                indexing_mode: IndexingMode::Cyclic,
            };
            SweepSpec::Table {
                rows: vec![
                    row("flat_multipeak_l32", flat.clone(), 32.0, &single),
                    row("flat_multipeak_l32_wrong_spacing", flat, 32.0, &SettingsBank::new(&[5]).ok()?),
                    row("gaussian_multipeak_l32", gaussian_multipeak(32), 0.0335, &single),
                    row("gaussian_multipeak_l64", gaussian_multipeak(64), 0.0084, &single),
                    row(
                        "flat_product_w16",
                        CurveFamily::FlatProduct {
                            frame: m1024,
                            spacings: vec![1, 17],
                            indexing_mode: IndexingMode::Cyclic,
                        },
                        16.0,
                        &pair,
                    ),
                    row("gaussian_product_w16_a0.3", gaussian_product.clone(), 0.3, &pair),
                    row("gaussian_product_w16_a0.2", gaussian_product, 0.2, &pair),
                ],
                convention: Convention::RawAverage,
            }
        }
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = ParamGrid::Range {
            start: 1.0,
            stop: 100.0,
            count: 3,
            log: true,
        };
        let v = g.values().unwrap();
        assert!((v[1] - 10.0).abs() < 1e-12 && (v[2] - 100.0).abs() < 1e-12);
        assert!(ParamGrid::List(vec![]).values().is_err());
        let json: ParamGrid = serde_json::from_str(r#"{"start": 0, "stop": 1, "count": 5}"#).unwrap();
        assert_eq!(json.values().unwrap()[2], 0.5);
    }

    #[test]
    fn presets_round_trip() {
        for name in PRESET_NAMES {
            let spec = preset(name).unwrap();
            let back: SweepSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
            assert_eq!(back, spec);
        }
        assert!(preset("fig9").is_none());
    }

    #[test]
    fn joint_sweep_adds_peaks_column() {
        let spec = SweepSpec::Curve {
            family: CurveFamily::GaussianMultipeak {
                frame: FrameSpec::with_bins(128).unwrap(),
                peaks: 4,
                spacing: 2,
                exponent: GaussianExponent::Squared,
                indexing_mode: IndexingMode::Cyclic,
            },
            params: ParamGrid::List(vec![0.1, 1.0]),
            bank: SettingsBank::new(&[2]).unwrap(),
            convention: Convention::RawAverage,
            peaks: Some(vec![4, 8]),
        };
        let t = run_sweep(&spec).unwrap();
        assert_eq!(t.header[0], "peaks");
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.rows[3][0], "8");
        assert!(t.to_csv().starts_with("#schema_version=1\npeaks,param,"));
    }

    #[test]
    fn table_preset_values() {
        let t = run_sweep(&preset("table-sec6").unwrap()).unwrap();
        let get = |case: &str, col: usize| -> f64 { t.rows.iter().find(|r| r[0] == case).unwrap()[col].parse().unwrap() };
        assert_eq!(get("flat_multipeak_l32", 3), 0.015625);
        assert_eq!(get("flat_multipeak_l32_wrong_spacing", 3), 0.5);
        assert_eq!(get("flat_product_w16", 3), 0.03125);
        assert_eq!(get("flat_product_w16", 2), 2.0);
    }
}
