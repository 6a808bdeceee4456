//! Synthetic average-treatment-effect study: a binary-covariate data
//! generating process with a linear click-probability model, the
//! difference-in-means estimator under each design, and the variance
//! comparison between the cell-balancing and completely randomized designs.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::design::{design_rng, DesignError, DesignSpec};
use crate::harness::kahan_sum;
use crate::space::{Arm, ArrivalSequence, AssignmentTrace, CovariateSpace, Subject};

#[derive(Debug, Error)]
pub enum AteError {
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("trace length {trace} does not match outcome table length {table}")]
    LengthMismatch { trace: usize, table: usize },
    #[error(transparent)]
    Design(#[from] DesignError),
}

/// Configuration of the data generating process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DgpConfig {
    /// Number of subjects (even).
    pub t: usize,
    /// Number of binary covariates.
    pub d: usize,
    /// Per-covariate Bernoulli rates; length d.
    pub marginals: Vec<f64>,
    /// Base coefficient vector; `None` draws i.i.d. standard normals.
    pub base_coeffs: Option<Vec<f64>>,
    /// Intercept of the linear probability model.
    pub intercept: f64,
    /// How many of the largest-magnitude coefficients get magnified.
    pub boost_top_k: usize,
    /// Magnification factor for the boosted coefficients.
    pub boost_factor: f64,
    /// Upper bound of the uniform treatment lift; `None` uses the realized
    /// mean control probability.
    pub noise_upper: Option<f64>,
    /// Seed fixing one realization of the population.
    pub seed: u64,
}

impl DgpConfig {
    /// Defaults: fair-coin marginals, seeded standard normal coefficients.
    pub fn new(t: usize, d: usize, seed: u64) -> Self {
        Self {
            t,
            d,
            marginals: vec![0.5; d],
            base_coeffs: None,
            intercept: 0.05,
            boost_top_k: 5,
            boost_factor: 3.0,
            noise_upper: None,
            seed,
        }
    }

    fn validate(&self) -> Result<(), AteError> {
        if self.t < 2 || !self.t.is_multiple_of(2) {
            return Err(AteError::BadConfig(format!(
                "T = {} must be even and >= 2",
                self.t
            )));
        }
        if self.d == 0 {
            return Err(AteError::BadConfig("d must be at least 1".into()));
        }
        if self.marginals.len() != self.d {
            return Err(AteError::BadConfig(format!(
                "{} marginals for d = {} covariates",
                self.marginals.len(),
                self.d
            )));
        }
        if self.marginals.iter().any(|&m| !(0.0..=1.0).contains(&m)) {
            return Err(AteError::BadConfig("marginals must lie in [0,1]".into()));
        }
        if let Some(c) = &self.base_coeffs {
            if c.len() != self.d {
                return Err(AteError::BadConfig(format!(
                    "{} coefficients for d = {} covariates",
                    c.len(),
                    self.d
                )));
            }
        }
        if self.boost_top_k > self.d {
            return Err(AteError::BadConfig("boost_top_k exceeds d".into()));
        }
        if let Some(u) = self.noise_upper {
            if u < 0.0 {
                return Err(AteError::BadConfig(
                    "noise_upper must be nonnegative".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One fixed realization of covariates and both potential outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub sequence: ArrivalSequence,
    pub y0: Vec<u8>,
    pub y1: Vec<u8>,
    /// Realized average treatment effect `mean(Y(1)) - mean(Y(0))`.
    pub true_ate: f64,
    /// Realized mean control probability (after trimming).
    pub mean_control_prob: f64,
    /// The treatment-lift upper bound actually used.
    pub noise_upper: f64,
}

fn sample_standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; one value per call is plenty here.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Draws covariates, builds the linear probability model (top-k coefficients
/// magnified), trims probabilities to [0,1], and fixes one realization of
/// both potential outcomes.
pub fn generate_population(cfg: &DgpConfig) -> Result<Population, AteError> {
    cfg.validate()?;
    let mut rng = design_rng(cfg.seed);

    let mut coeffs = match &cfg.base_coeffs {
        Some(c) => c.clone(),
        None => (0..cfg.d)
            .map(|_| sample_standard_normal(&mut rng))
            .collect(),
    };
    // Magnify the largest coefficients in magnitude.
    let mut order: Vec<usize> = (0..cfg.d).collect();
    order.sort_by(|&a, &b| coeffs[b].abs().partial_cmp(&coeffs[a].abs()).unwrap());
    for &i in order.iter().take(cfg.boost_top_k) {
        coeffs[i] *= cfg.boost_factor;
    }

    let space =
        CovariateSpace::binary(cfg.d).map_err(|e| AteError::BadConfig(format!("space: {e}")))?;
    let mut subjects = Vec::with_capacity(cfg.t);
    let mut p0 = Vec::with_capacity(cfg.t);
    for _ in 0..cfg.t {
        let x: Vec<f64> = cfg
            .marginals
            .iter()
            .map(|&m| if rng.gen_bool(m) { 1.0 } else { 0.0 })
            .collect();
        let lin = cfg.intercept + x.iter().zip(&coeffs).map(|(xi, ci)| xi * ci).sum::<f64>();
        p0.push(lin.clamp(0.0, 1.0));
        subjects.push(Subject::new(Vec::new(), x));
    }
    let mean_control_prob = kahan_sum(p0.iter().copied()) / cfg.t as f64;
    let noise_upper = cfg.noise_upper.unwrap_or(mean_control_prob);

    let mut y0 = Vec::with_capacity(cfg.t);
    let mut y1 = Vec::with_capacity(cfg.t);
    for &prob0 in &p0 {
        let lift = if noise_upper > 0.0 {
            rng.gen_range(0.0..noise_upper)
        } else {
            0.0
        };
        let prob1 = (prob0 + lift).clamp(0.0, 1.0);
        y0.push(u8::from(rng.gen_bool(prob0)));
        y1.push(u8::from(rng.gen_bool(prob1)));
    }
    let true_ate = (kahan_sum(y1.iter().map(|&y| y as f64))
        - kahan_sum(y0.iter().map(|&y| y as f64)))
        / cfg.t as f64;

    Ok(Population {
        sequence: ArrivalSequence::new(space, subjects),
        y0,
        y1,
        true_ate,
        mean_control_prob,
        noise_upper,
    })
}

/// Difference-in-means estimator:
/// `(2/T) sum 1{W=1} Y(1) - (2/T) sum 1{W=0} Y(0)`.
pub fn diff_in_means(trace: &AssignmentTrace, y0: &[u8], y1: &[u8]) -> Result<f64, AteError> {
    let t = trace.len();
    if y0.len() != t || y1.len() != t {
        return Err(AteError::LengthMismatch {
            trace: t,
            table: y0.len().min(y1.len()),
        });
    }
    let mut treated_sum = 0.0;
    let mut control_sum = 0.0;
    for (i, &arm) in trace.arms().iter().enumerate() {
        match arm {
            Arm::Treated => treated_sum += y1[i] as f64,
            Arm::Control => control_sum += y0[i] as f64,
        }
    }
    Ok(2.0 / t as f64 * (treated_sum - control_sum))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AteDesignStats {
    pub design: String,
    pub reps: usize,
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AteReport {
    pub true_ate: f64,
    pub mean_control_prob: f64,
    pub noise_upper: f64,
    pub per_design: Vec<AteDesignStats>,
    /// `1 - var(pigeonhole) / var(crd)` when both designs are present.
    pub variance_reduction: Option<f64>,
}

/// Runs `reps` assignment replications of each design over one fixed
/// population and reports estimator means and variances.
pub fn ate_study(
    cfg: &DgpConfig,
    designs: &[DesignSpec],
    reps: usize,
    seed: u64,
) -> Result<AteReport, AteError> {
    if reps < 2 {
        return Err(AteError::BadConfig(
            "at least 2 replications required".into(),
        ));
    }
    let population = generate_population(cfg)?;
    ate_study_on(&population, designs, reps, seed)
}

/// As [`ate_study`] but over an already generated population.
pub fn ate_study_on(
    population: &Population,
    designs: &[DesignSpec],
    reps: usize,
    seed: u64,
) -> Result<AteReport, AteError> {
    Ok(ate_study_with_samples_on(population, designs, reps, seed)?.0)
}

/// Per-replication difference-in-means draws for one design, seeded the
/// same way the study seeds them.
pub fn design_estimates(
    population: &Population,
    design: &DesignSpec,
    design_index: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>, AteError> {
    let estimates: Vec<Result<f64, AteError>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = seed ^ (rep as u64) ^ ((design_index as u64) << 48);
            let trace = design.run(&population.sequence, rep_seed)?;
            diff_in_means(&trace, &population.y0, &population.y1)
        })
        .collect();
    let mut vals = Vec::with_capacity(reps);
    for e in estimates {
        vals.push(e?);
    }
    Ok(vals)
}

/// As [`ate_study_on`] but also returns the raw per-replication estimates
/// per design (for external plotting).
pub fn ate_study_with_samples_on(
    population: &Population,
    designs: &[DesignSpec],
    reps: usize,
    seed: u64,
) -> Result<(AteReport, Vec<Vec<f64>>), AteError> {
    let mut per_design = Vec::with_capacity(designs.len());
    let mut samples = Vec::with_capacity(designs.len());
    for (d_idx, design) in designs.iter().enumerate() {
        let vals = design_estimates(population, design, d_idx, reps, seed)?;
        let mean = kahan_sum(vals.iter().copied()) / reps as f64;
        let var = kahan_sum(vals.iter().map(|v| (v - mean) * (v - mean))) / (reps - 1) as f64;
        per_design.push(AteDesignStats {
            design: design.label(),
            reps,
            mean,
            var,
        });
        samples.push(vals);
    }

    let find =
        |pred: fn(&DesignSpec) -> bool| designs.iter().position(pred).map(|i| per_design[i].var);
    let var_crd = find(|d| matches!(d, DesignSpec::CompletelyRandomized));
    let var_ph = find(|d| matches!(d, DesignSpec::Pigeonhole(_) | DesignSpec::SinglePigeonhole));
    let variance_reduction = match (var_crd, var_ph) {
        (Some(c), Some(p)) if c > 0.0 => Some(1.0 - p / c),
        _ => None,
    };

    Ok((
        AteReport {
            true_ate: population.true_ate,
            mean_control_prob: population.mean_control_prob,
            noise_upper: population.noise_upper,
            per_design,
            variance_reduction,
        },
        samples,
    ))
}

/// One point of the sample-size sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub t: usize,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    /// CRD variance at the full horizon (the reference level).
    pub crd_var_full: f64,
    pub points: Vec<SweepPoint>,
    /// Smallest sample size at which the cell-balancing variance first
    /// drops below the full-horizon CRD variance, linearly interpolated
    /// between grid points; `None` if it never does.
    pub equivalent_t: Option<f64>,
}

/// Reruns the cell-balancing design on prefixes of the fixed population
/// (fractions of T, rounded to even) and reports where its variance crosses
/// the full-horizon CRD variance.
pub fn sample_size_sweep(
    cfg: &DgpConfig,
    pigeonhole: &DesignSpec,
    fractions: &[f64],
    reps: usize,
    seed: u64,
) -> Result<SweepReport, AteError> {
    if fractions.is_empty() {
        return Err(AteError::BadConfig("no sweep fractions".into()));
    }
    if fractions.iter().any(|&f| !(0.0 < f && f <= 1.0)) {
        return Err(AteError::BadConfig("fractions must lie in (0,1]".into()));
    }
    let population = generate_population(cfg)?;
    let full = ate_study_on(
        &population,
        std::slice::from_ref(&DesignSpec::CompletelyRandomized),
        reps,
        seed,
    )?;
    let crd_var_full = full.per_design[0].var;

    let mut ts: Vec<usize> = fractions
        .iter()
        .map(|&f| {
            let t = (cfg.t as f64 * f).round() as usize;
            t - t % 2
        })
        .filter(|&t| t >= 2)
        .collect();
    ts.sort_unstable();
    ts.dedup();

    let mut points = Vec::with_capacity(ts.len());
    for &t in &ts {
        let prefix = Population {
            sequence: ArrivalSequence::new(
                population.sequence.space.clone(),
                population.sequence.subjects[..t].to_vec(),
            ),
            y0: population.y0[..t].to_vec(),
            y1: population.y1[..t].to_vec(),
            true_ate: population.true_ate,
            mean_control_prob: population.mean_control_prob,
            noise_upper: population.noise_upper,
        };
        let report = ate_study_on(
            &prefix,
            std::slice::from_ref(pigeonhole),
            reps,
            seed ^ t as u64,
        )?;
        points.push(SweepPoint {
            t,
            var: report.per_design[0].var,
        });
    }

    // First crossing below the reference level, linear in T.
    let mut equivalent_t = None;
    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.var <= crd_var_full {
            equivalent_t = Some(a.t as f64);
            break;
        }
        if b.var <= crd_var_full && a.var > b.var {
            let frac = (a.var - crd_var_full) / (a.var - b.var);
            equivalent_t = Some(a.t as f64 + frac * (b.t - a.t) as f64);
            break;
        }
    }
    if equivalent_t.is_none() {
        if let Some(last) = points.last() {
            if last.var <= crd_var_full {
                equivalent_t = Some(last.t as f64);
            }
        }
    }

    Ok(SweepReport {
        crd_var_full,
        points,
        equivalent_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::PartitionSpec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_model_probabilities() {
        let cfg = DgpConfig {
            base_coeffs: Some(vec![0.0; 4]),
            intercept: 0.05,
            boost_top_k: 0,
            ..DgpConfig::new(1000, 4, 1)
        };
        let pop = generate_population(&cfg).unwrap();
        assert_abs_diff_eq!(pop.mean_control_prob, 0.05, epsilon = 1e-12);
        // Nonnegative lift means the realized effect cannot be very negative.
        assert!(pop.true_ate > -0.05);
    }

    #[test]
    fn trimming_caps_probabilities() {
        let cfg = DgpConfig {
            base_coeffs: Some(vec![0.0; 2]),
            intercept: 1.2,
            boost_top_k: 0,
            noise_upper: Some(0.0),
            ..DgpConfig::new(100, 2, 2)
        };
        let pop = generate_population(&cfg).unwrap();
        // Model output 1.2 trims to 1.0: every outcome is a click.
        assert!(pop.y0.iter().all(|&y| y == 1));
        assert!(pop.y1.iter().all(|&y| y == 1));
        assert_abs_diff_eq!(pop.mean_control_prob, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pop.true_ate, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn diff_in_means_examples() {
        use Arm::*;
        let trace = AssignmentTrace::new(vec![Treated, Control, Treated, Control]).unwrap();
        // Constant outcomes cancel.
        assert_abs_diff_eq!(
            diff_in_means(&trace, &[1, 1, 1, 1], &[1, 1, 1, 1]).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        // Y(1) = 1, Y(0) = 0 everywhere.
        assert_abs_diff_eq!(
            diff_in_means(&trace, &[0, 0, 0, 0], &[1, 1, 1, 1]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        // Direct formula evaluation.
        assert_abs_diff_eq!(
            diff_in_means(&trace, &[0, 0, 0, 0], &[1, 1, 0, 0]).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert!(diff_in_means(&trace, &[0, 0], &[1, 1]).is_err());
    }

    #[test]
    fn population_is_fixed_by_seed() {
        let cfg = DgpConfig::new(200, 6, 11);
        let a = generate_population(&cfg).unwrap();
        let b = generate_population(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn estimators_unbiased_on_small_population() {
        let cfg = DgpConfig {
            boost_top_k: 2,
            ..DgpConfig::new(400, 4, 5)
        };
        let designs = vec![
            DesignSpec::CompletelyRandomized,
            DesignSpec::Pigeonhole(PartitionSpec::Natural),
        ];
        let report = ate_study(&cfg, &designs, 3000, 17).unwrap();
        for stats in &report.per_design {
            let se = (stats.var / stats.reps as f64).sqrt();
            assert!(
                (stats.mean - report.true_ate).abs() < 3.0 * se,
                "{}: mean {} vs true {} (se {se})",
                stats.design,
                stats.mean,
                report.true_ate
            );
        }
        assert!(report.variance_reduction.is_some());
    }

    #[test]
    fn zero_signal_dgp_gives_no_reduction() {
        // Without covariate signal the two designs have the same estimator
        // distribution; the reduction ratio is near zero.
        let cfg = DgpConfig {
            base_coeffs: Some(vec![0.0; 4]),
            intercept: 0.3,
            boost_top_k: 0,
            ..DgpConfig::new(500, 4, 7)
        };
        let designs = vec![
            DesignSpec::CompletelyRandomized,
            DesignSpec::Pigeonhole(PartitionSpec::Natural),
        ];
        let report = ate_study(&cfg, &designs, 4000, 23).unwrap();
        let reduction = report.variance_reduction.unwrap();
        assert!(
            reduction.abs() < 0.1,
            "reduction {reduction} should be near zero"
        );
    }
}
