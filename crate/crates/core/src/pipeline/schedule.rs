use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleForm {
    /// Exploration decays from `alpha_s` toward the floor `alpha_e`.
    #[default]
    Interpolated,
    /// The formula as printed, which reduces to `1 - alpha_s * exp(-n / alpha_d)`.
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleParams {
    pub alpha_e: f64,
    pub alpha_s: f64,
    pub alpha_d: f64,
    pub form: ScheduleForm,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self { alpha_e: 0.05, alpha_s: 0.8, alpha_d: 2000.0, form: ScheduleForm::Interpolated }
    }
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.alpha_e && self.alpha_e <= self.alpha_s && self.alpha_s <= 1.0) || !(self.alpha_d > 0.0) {
            return Err(Error::Config("schedule needs 0 <= alpha_e <= alpha_s <= 1 and alpha_d > 0".into()));
        }
        Ok(())
    }
}

/// Probability that pick `n` follows the learned models rather than exploring.
pub fn greedy_fraction(n: u64, sp: &ScheduleParams) -> f64 {
    let decay = (-(n as f64) / sp.alpha_d).exp();
    let p = match sp.form {
        ScheduleForm::Literal => 1.0 - (sp.alpha_e + (sp.alpha_s - sp.alpha_e)) * decay,
        ScheduleForm::Interpolated => 1.0 - (sp.alpha_e + (sp.alpha_s - sp.alpha_e) * decay),
    };
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(form: ScheduleForm) -> ScheduleParams {
        ScheduleParams { form, ..ScheduleParams::default() }
    }

    #[test]
    fn start_and_limits() {
        let (i, l) = (params(ScheduleForm::Interpolated), params(ScheduleForm::Literal));
        assert!((greedy_fraction(0, &i) - 0.2).abs() < 1e-15);
        assert!((greedy_fraction(0, &l) - 0.2).abs() < 1e-15);
        assert!((greedy_fraction(2000, &i) - (1.0 - (0.05 + 0.75 / std::f64::consts::E))).abs() < 1e-12);
        assert!((greedy_fraction(u64::MAX, &i) - 0.95).abs() < 1e-15);
        assert_eq!(greedy_fraction(u64::MAX, &l), 1.0);
    }

    #[test]
    fn monotone() {
        for form in [ScheduleForm::Interpolated, ScheduleForm::Literal] {
            let sp = params(form);
            let mut prev = 0.0;
            for n in (0..20_000).step_by(97) {
                let p = greedy_fraction(n, &sp);
                assert!(p >= prev && (0.0..=1.0).contains(&p));
                prev = p;
            }
        }
    }
}
