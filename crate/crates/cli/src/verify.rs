//! Closed-form disturbance formulas checked against exact enumeration.

use anyhow::Result;
use franson_sec::format::fmt_sig12;
use franson_sec::metrics::ClosedForm;
use franson_sec::statevec::FrameSpec;
use rayon::prelude::*;

pub const TOLERANCE: f64 = 1e-9;
pub const FRAME_BINS: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub formula: ClosedForm,
    pub closed_form: f64,
    pub enumerated: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        (self.closed_form - self.enumerated).abs() <= TOLERANCE
    }

    pub fn line(&self) -> String {
        let params = match self.formula {
            ClosedForm::Window { window, delta_tau } => format!("L={window} dtau={delta_tau}"),
            ClosedForm::Multipeak { peaks } => format!("L={peaks}"),
            ClosedForm::MultiSetting { settings, peaks } => format!("d={settings} L={peaks}"),
            ClosedForm::Product { peaks_per_axis } => format!("w={peaks_per_axis}"),
        };
        format!(
            "{} {} {} closed_form={} enumerated={} diff={:.3e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.formula.name(),
            params,
            fmt_sig12(self.closed_form),
            fmt_sig12(self.enumerated),
            (self.closed_form - self.enumerated).abs()
        )
    }
}

pub fn check(formula: ClosedForm) -> Result<Check> {
    let frame = FrameSpec::with_bins(FRAME_BINS)?;
    Ok(Check {
        formula,
        closed_form: formula.value()?,
        enumerated: formula.enumerate(frame)?,
    })
}

/// Windows for every `Δτ ≤ L+1` at power-of-two `L ≤ 64` plus a non-divisor
/// width, multipeak `L ≤ 64`, multi-setting `d ≤ 4` at `L ∈ {8, 32}`, and
/// two-axis products `w ≤ 16`.
pub fn default_grid() -> Vec<ClosedForm> {
    let mut grid = Vec::new();
    for window in [2, 4, 6, 8, 16, 32, 64] {
        for delta_tau in 1..=window + 1 {
            grid.push(ClosedForm::Window { window, delta_tau });
        }
    }
    for peaks in [2, 4, 8, 16, 32, 64] {
        grid.push(ClosedForm::Multipeak { peaks });
    }
    for settings in 1..=4 {
        for peaks in [8, 32] {
            grid.push(ClosedForm::MultiSetting { settings, peaks });
        }
    }
    for peaks_per_axis in [2, 4, 8, 16] {
        grid.push(ClosedForm::Product { peaks_per_axis });
    }
    grid
}

pub fn run_grid(grid: &[ClosedForm]) -> Result<Vec<Check>> {
    grid.par_iter().map(|&f| check(f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_line() {
        let c = check(ClosedForm::Window { window: 6, delta_tau: 2 }).unwrap();
        assert!(c.passed());
        assert!(c.line().starts_with("PASS window L=6 dtau=2 closed_form=0.166666666667"));
    }
}
