//! Sequential (online) experiment balancing at desk scale.
//!
//! Subjects carrying covariates arrive one by one and must be assigned to
//! control or treated on the spot, half-half overall. Quality of a design is
//! its discrepancy: the minimum-weight perfect matching (L2 costs) between
//! the two final groups. This crate implements the sequential cell-balancing
//! design over covariate-space partitions together with the matched-pair and
//! completely randomized benchmarks, exact matching solvers with brute-force
//! oracles, adversarial and stochastic instance generators, a deterministic
//! Monte Carlo harness with log-log rate fitting, and a synthetic
//! average-treatment-effect study.

pub mod ate;
pub mod design;
pub mod harness;
pub mod instance;
pub mod matching;
pub mod space;

pub use design::{DesignSpec, Partition, PartitionSpec};
pub use harness::{McReport, RateFit};
pub use instance::InstanceSpec;
pub use matching::{discrepancy, min_weight_pairing, Matching};
pub use space::{Arm, ArrivalSequence, AssignmentTrace, CovariateSpace, Subject};

/// Formats a float with the given number of significant digits, plain
/// decimal where reasonable and scientific notation otherwise.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let digits = digits.max(1);
    let mag = x.abs().log10().floor() as i32;
    if mag < -4 || mag >= digits as i32 {
        let s = format!("{:.*e}", digits - 1, x);
        return trim_exp(&s);
    }
    let decimals = (digits as i32 - 1 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    let trimmed = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if trimmed == "-0" {
        "0".to_string()
    } else {
        trimmed
    }
}

// Trim trailing zeros in the mantissa of a `1.2300e5`-style string.
fn trim_exp(s: &str) -> String {
    match s.split_once('e') {
        Some((mantissa, exp)) => {
            let m = if mantissa.contains('.') {
                mantissa.trim_end_matches('0').trim_end_matches('.')
            } else {
                mantissa
            };
            format!("{m}e{exp}")
        }
        None => s.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_sig;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(fmt_sig(0.0, 12), "0");
        assert_eq!(fmt_sig(0.25, 12), "0.25");
        assert_eq!(fmt_sig(2.0 / 3.0, 12), "0.666666666667");
        assert_eq!(fmt_sig(1.1, 12), "1.1");
        assert_eq!(fmt_sig(123456.0, 12), "123456");
        assert_eq!(fmt_sig(1e-9, 12), "1e-9");
        assert_eq!(fmt_sig(-0.5, 12), "-0.5");
    }
}
