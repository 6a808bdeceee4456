//! Deterministic Monte Carlo engine over (design, instance, horizon) grids,
//! exact small-horizon enumeration oracles, the exact binomial mean absolute
//! deviation, and log-log rate fitting.
//!
//! Replications run in parallel with seeds derived from (base seed, horizon,
//! replication index), and aggregation is performed in replication order, so
//! reports are bit-identical regardless of scheduling.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::design::{
    assign_from_pairing, matched_pairing, DesignError, DesignSpec, PartitionError, PartitionSpec,
};
use crate::instance::{InstanceError, InstanceSpec};
use crate::matching::{self, MatchingError};
use crate::space::{ArrivalSequence, AssignmentTrace, Subject, ValidationError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error("horizon T = {t} exceeds the exact-enumeration limit {max}")]
    TooLarge { t: usize, max: usize },
    #[error("exact enumeration is not defined for design `{0}`")]
    UnsupportedDesign(String),
    #[error("degenerate input for rate fit: {0}")]
    DegenerateInput(String),
    #[error("at least one replication is required")]
    NoReplications,
}

const INSTANCE_SALT: u64 = 0xA5A5_5A5A_C0FF_EE00;
const T_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

fn horizon_base(seed: u64, t: usize) -> u64 {
    seed ^ (t as u64).wrapping_mul(T_MIX)
}

/// Compensated (Kahan) summation.
pub(crate) fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Splits a sequence's subjects into (control, treated) per the trace.
pub fn split_groups(
    seq: &ArrivalSequence,
    trace: &AssignmentTrace,
) -> (Vec<Subject>, Vec<Subject>) {
    let mut control = Vec::with_capacity(seq.len() / 2);
    let mut treated = Vec::with_capacity(seq.len() / 2);
    for (s, &arm) in seq.subjects.iter().zip(trace.arms()) {
        match arm {
            crate::space::Arm::Control => control.push(s.clone()),
            crate::space::Arm::Treated => treated.push(s.clone()),
        }
    }
    (control, treated)
}

/// Exact discrepancy of a realized assignment. Single-dimensional spaces use
/// the sorted-order identity; everything else runs the general bipartite
/// solver.
pub fn eval_discrepancy(
    seq: &ArrivalSequence,
    trace: &AssignmentTrace,
) -> Result<f64, HarnessError> {
    if seq.space.dim() == 1 {
        let mut control = Vec::with_capacity(seq.len() / 2);
        let mut treated = Vec::with_capacity(seq.len() / 2);
        for (s, &arm) in seq.subjects.iter().zip(trace.arms()) {
            let v = s.coords().next().expect("dim = 1");
            match arm {
                crate::space::Arm::Control => control.push(v),
                crate::space::Arm::Treated => treated.push(v),
            }
        }
        return Ok(matching::line_discrepancy(&control, &treated));
    }
    let (control, treated) = split_groups(seq, trace);
    Ok(matching::discrepancy(&control, &treated)?.cost)
}

/// One aggregated row of a Monte Carlo study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub design: String,
    pub instance: String,
    pub t: usize,
    pub reps: usize,
    pub mean: f64,
    pub std: f64,
    /// 95% half-width `1.96 std / sqrt(R)`; NaN below 30 replications.
    pub ci: f64,
    pub mean_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub seed: u64,
    pub rows: Vec<McRow>,
}

impl McReport {
    /// CSV body with the `design,instance,T,R,mean,std,ci,mean_tau` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("design,instance,T,R,mean,std,ci,mean_tau\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.design,
                r.instance,
                r.t,
                r.reps,
                crate::fmt_sig(r.mean, 12),
                crate::fmt_sig(r.std, 12),
                crate::fmt_sig(r.ci, 12),
                crate::fmt_sig(r.mean_tau, 12),
            ));
        }
        out
    }
}

/// Runs `reps` seeded replications of a design over an instance for each
/// horizon. Fixed instances are generated once per horizon; stochastic ones
/// are redrawn per replication from a derived seed.
pub fn run_mc(
    design: &DesignSpec,
    instance: &InstanceSpec,
    horizons: &[usize],
    reps: usize,
    seed: u64,
) -> Result<McReport, HarnessError> {
    if reps == 0 {
        return Err(HarnessError::NoReplications);
    }
    let mut rows = Vec::with_capacity(horizons.len());
    for &t in horizons {
        let fixed_seq = if instance.is_stochastic() {
            None
        } else {
            Some(instance.generate(t, horizon_base(seed, t) ^ INSTANCE_SALT)?)
        };
        // For the matched-pair design on a fixed instance the pairing does
        // not depend on the seed; prepare it once.
        let fixed_pairing = match (&fixed_seq, design) {
            (Some(seq), DesignSpec::MatchedPair) => Some(matched_pairing(seq)?),
            _ => None,
        };

        let samples: Vec<Result<(f64, usize), HarnessError>> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let rep_seed = horizon_base(seed, t) ^ rep as u64;
                let seq_storage;
                let seq = match &fixed_seq {
                    Some(seq) => seq,
                    None => {
                        seq_storage = instance.generate(t, rep_seed ^ INSTANCE_SALT)?;
                        &seq_storage
                    }
                };
                let trace = match &fixed_pairing {
                    Some(pairing) => assign_from_pairing(t, pairing, rep_seed)?,
                    None => design.run(seq, rep_seed)?,
                };
                let cost = eval_discrepancy(seq, &trace)?;
                Ok((cost, trace.tau()))
            })
            .collect();

        let mut costs = Vec::with_capacity(reps);
        let mut taus = Vec::with_capacity(reps);
        for s in samples {
            let (cost, tau) = s?;
            costs.push(cost);
            taus.push(tau as f64);
        }
        let mean = kahan_sum(costs.iter().copied()) / reps as f64;
        let var = if reps > 1 {
            kahan_sum(costs.iter().map(|c| (c - mean) * (c - mean))) / (reps - 1) as f64
        } else {
            0.0
        };
        let std = var.max(0.0).sqrt();
        let ci = if reps >= 30 {
            1.96 * std / (reps as f64).sqrt()
        } else {
            f64::NAN
        };
        let mean_tau = kahan_sum(taus.iter().copied()) / reps as f64;
        rows.push(McRow {
            design: design.label(),
            instance: instance.label(),
            t,
            reps,
            mean,
            std,
            ci,
            mean_tau,
        });
    }
    Ok(McReport { seed, rows })
}

const MAX_EXACT_CRD: usize = 8;
const MAX_EXACT_PIGEONHOLE: usize = 12;

/// Exact expected discrepancy by full enumeration: all half splits for the
/// completely randomized design (T <= 8), all coin outcomes for the
/// cell-balancing designs (T <= 12).
pub fn exact_expected_discrepancy(
    design: &DesignSpec,
    seq: &ArrivalSequence,
) -> Result<f64, HarnessError> {
    seq.validate()?;
    let t = seq.len();
    match design {
        DesignSpec::CompletelyRandomized => {
            if t > MAX_EXACT_CRD {
                return Err(HarnessError::TooLarge {
                    t,
                    max: MAX_EXACT_CRD,
                });
            }
            let mut total = 0.0;
            let mut count = 0u64;
            for mask in 0u32..(1 << t) {
                if mask.count_ones() as usize != t / 2 {
                    continue;
                }
                total += split_cost(seq, mask)?;
                count += 1;
            }
            Ok(total / count as f64)
        }
        DesignSpec::SinglePigeonhole => exact_pigeonhole(seq, &PartitionSpec::Single),
        DesignSpec::Pigeonhole(spec) => exact_pigeonhole(seq, spec),
        other => Err(HarnessError::UnsupportedDesign(other.label())),
    }
}

// Discrepancy of the split where mask bit i set means subject i is control.
fn split_cost(seq: &ArrivalSequence, mask: u32) -> Result<f64, HarnessError> {
    if seq.space.dim() == 1 {
        let mut control = Vec::new();
        let mut treated = Vec::new();
        for (i, s) in seq.subjects.iter().enumerate() {
            let v = s.coords().next().expect("dim = 1");
            if mask >> i & 1 == 1 {
                control.push(v);
            } else {
                treated.push(v);
            }
        }
        return Ok(matching::line_discrepancy(&control, &treated));
    }
    let mut control = Vec::new();
    let mut treated = Vec::new();
    for (i, s) in seq.subjects.iter().enumerate() {
        if mask >> i & 1 == 1 {
            control.push(s.clone());
        } else {
            treated.push(s.clone());
        }
    }
    Ok(matching::discrepancy(&control, &treated)?.cost)
}

// Walk the decision tree of the cell-balancing rule, branching on every fair
// coin with probability 1/2 per branch.
fn exact_pigeonhole(seq: &ArrivalSequence, spec: &PartitionSpec) -> Result<f64, HarnessError> {
    use crate::design::{CellKey, Partition};
    use std::collections::HashMap;

    let t = seq.len();
    if t > MAX_EXACT_PIGEONHOLE {
        return Err(HarnessError::TooLarge {
            t,
            max: MAX_EXACT_PIGEONHOLE,
        });
    }
    let partition: Partition = spec.build(&seq.space, t)?;

    struct Frame {
        idx: usize,
        mask: u32,
        n0: usize,
        n1: usize,
        prob: f64,
        counts: HashMap<CellKey, (u32, u32)>,
    }

    let mut total = 0.0;
    let mut stack = vec![Frame {
        idx: 0,
        mask: 0,
        n0: 0,
        n1: 0,
        prob: 1.0,
        counts: HashMap::new(),
    }];
    while let Some(f) = stack.pop() {
        if f.idx == t {
            total += f.prob * split_cost(seq, f.mask)?;
            continue;
        }
        let subject = &seq.subjects[f.idx];
        let half = t / 2;
        // Forced branches carry full probability.
        let mut push = |arm_control: bool, prob: f64, base: &Frame, update_cell: bool| {
            let mut counts = base.counts.clone();
            if update_cell {
                let cell = counts.entry(partition.cell_key(subject)).or_insert((0, 0));
                if arm_control {
                    cell.0 += 1;
                } else {
                    cell.1 += 1;
                }
            }
            stack.push(Frame {
                idx: base.idx + 1,
                mask: base.mask | ((arm_control as u32) << base.idx),
                n0: base.n0 + arm_control as usize,
                n1: base.n1 + !arm_control as usize,
                prob,
                counts,
            });
        };
        if f.n0 == half {
            push(false, f.prob, &f, false);
        } else if f.n1 == half {
            push(true, f.prob, &f, false);
        } else {
            let key = partition.cell_key(subject);
            let (c0, c1) = f.counts.get(&key).copied().unwrap_or((0, 0));
            if c0 < c1 {
                push(true, f.prob, &f, true);
            } else if c0 > c1 {
                push(false, f.prob, &f, true);
            } else {
                push(true, f.prob * 0.5, &f, true);
                push(false, f.prob * 0.5, &f, true);
            }
        }
    }
    Ok(total)
}

/// Exact `E|X - n p|` for `X ~ Binomial(n, p)` by pmf summation in log
/// space. This is the finite-n oracle behind the asymptotic
/// `sqrt(2 p (1-p) n / pi)` approximation.
pub fn binomial_mad(n: u64, p: f64) -> f64 {
    assert!(n >= 1, "n must be positive");
    assert!(p > 0.0 && p < 1.0, "p must lie in (0,1)");
    let nf = n as f64;
    let mean = nf * p;
    // ln_fact[k] = ln(k!)
    let mut ln_fact = Vec::with_capacity(n as usize + 1);
    ln_fact.push(0.0f64);
    for k in 1..=n {
        ln_fact.push(ln_fact[k as usize - 1] + (k as f64).ln());
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut acc = 0.0;
    for k in 0..=n {
        let kf = k as f64;
        let ln_pmf = ln_fact[n as usize] - ln_fact[k as usize] - ln_fact[(n - k) as usize]
            + kf * lp
            + (nf - kf) * lq;
        acc += ln_pmf.exp() * (kf - mean).abs();
    }
    acc
}

/// Asymptotic binomial mean absolute deviation `sqrt(2 p (1-p) n / pi)`.
pub fn binomial_mad_asymptotic(n: u64, p: f64) -> f64 {
    (2.0 * p * (1.0 - p) * n as f64 / std::f64::consts::PI).sqrt()
}

/// Power-law fit of mean discrepancy against horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares on `(ln T, ln mean)`. Requires at least 4 distinct
/// horizons with strictly positive means.
pub fn fit_rate(points: &[(usize, f64)]) -> Result<RateFit, HarnessError> {
    let mut distinct: Vec<usize> = points.iter().map(|p| p.0).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(HarnessError::DegenerateInput(format!(
            "need at least 4 distinct horizons, got {}",
            distinct.len()
        )));
    }
    if let Some((t, m)) = points.iter().find(|(_, m)| !(m.is_finite() && *m > 0.0)) {
        return Err(HarnessError::DegenerateInput(format!(
            "mean at T = {t} is {m}; all means must be positive"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(t, _)| (t as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, m)| m.ln()).collect();
    let xbar = kahan_sum(xs.iter().copied()) / n;
    let ybar = kahan_sum(ys.iter().copied()) / n;
    let sxx = kahan_sum(xs.iter().map(|x| (x - xbar) * (x - xbar)));
    let sxy = kahan_sum(xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)));
    let syy = kahan_sum(ys.iter().map(|y| (y - ybar) * (y - ybar)));
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res = kahan_sum(xs.iter().zip(&ys).map(|(x, y)| {
        let e = y - (intercept + slope * x);
        e * e
    }));
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept,
        r2,
    })
}

/// Convenience: fit a report's rows (one design, one instance).
pub fn fit_report(report: &McReport) -> Result<RateFit, HarnessError> {
    let pts: Vec<(usize, f64)> = report.rows.iter().map(|r| (r.t, r.mean)).collect();
    fit_rate(&pts)
}
