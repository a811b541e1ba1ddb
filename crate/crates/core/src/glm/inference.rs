use statrs::function::erf::erfc;

use super::FitResult;
use crate::error::GlmError;

#[derive(Debug, Clone, PartialEq)]
pub struct CoefRow {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    pub signif: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceTable {
    pub rows: Vec<CoefRow>,
}

impl InferenceTable {
    pub fn get(&self, name: &str) -> Option<&CoefRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// `***` p<0.001, `**` p<0.01, `*` p<0.05, `.` p<0.1.
pub fn significance_code(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.1 {
        "."
    } else {
        ""
    }
}

/// Two-sided normal p-value.
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

pub(crate) fn wald_row(name: &str, estimate: f64, std_error: f64) -> Result<CoefRow, GlmError> {
    if !(std_error > 0.0) {
        return Err(GlmError::ZeroStdError(name.to_string()));
    }
    let z = estimate / std_error;
    let p_value = two_sided_p(z);
    Ok(CoefRow {
        name: name.to_string(),
        estimate,
        std_error,
        z,
        p_value,
        signif: significance_code(p_value),
    })
}

pub fn wald_inference(fit: &FitResult) -> Result<InferenceTable, GlmError> {
    let rows = fit
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| wald_row(name, fit.beta[j], fit.covariance[(j, j)].max(0.0).sqrt()))
        .collect::<Result<_, _>>()?;
    Ok(InferenceTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strong_positive_effect() {
        let r = wald_row("hbe_rate", 0.23, 0.02).unwrap();
        assert!((r.z - 11.5).abs() < 1e-12);
        assert!(r.p_value < 0.001);
        assert_eq!(r.signif, "***");
    }

    #[test]
    fn borderline_effect() {
        let r = wald_row("cum_turn_angle", 0.0002, 0.0001).unwrap();
        assert!((r.z - 2.0).abs() < 1e-12);
        assert!((r.p_value - 0.0455).abs() < 1e-4);
        assert_eq!(r.signif, "*");
    }

    #[test]
    fn null_effect() {
        let r = wald_row("x", 0.0, 0.5).unwrap();
        assert_eq!(r.z, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-15);
        assert_eq!(r.signif, "");
    }

    #[test]
    fn zero_standard_error_is_an_error() {
        assert_eq!(wald_row("x", 1.0, 0.0), Err(GlmError::ZeroStdError("x".into())));
    }

    #[test]
    fn code_thresholds() {
        assert_eq!(significance_code(0.0009), "***");
        assert_eq!(significance_code(0.001), "**");
        assert_eq!(significance_code(0.049), "*");
        assert_eq!(significance_code(0.05), ".");
        assert_eq!(significance_code(0.1), "");
    }
}
