//! Golden-value self checks: the worked 4-subject example, the exact
//! enumeration oracles, solver-vs-oracle spot checks and the binomial
//! mean-absolute-deviation asymptote.

use seqbalance::design::{matched_pair_assign, DesignSpec, PartitionSpec};
use seqbalance::harness::{
    binomial_mad, binomial_mad_asymptotic, eval_discrepancy, exact_expected_discrepancy,
};
use seqbalance::matching::{
    discrepancy, discrepancy_bruteforce, min_weight_pairing, pairing_bruteforce,
};
use seqbalance::space::{ArrivalSequence, CovariateSpace, Subject};

use crate::config::AppError;

fn line_seq(xs: &[f64]) -> ArrivalSequence {
    let space = CovariateSpace::continuous(1).unwrap();
    ArrivalSequence::new(space, xs.iter().map(|&x| Subject::scalar(x)).collect())
}

fn scalars(xs: &[f64]) -> Vec<Subject> {
    xs.iter().map(|&x| Subject::scalar(x)).collect()
}

pub fn cmd_verify() -> Result<(), AppError> {
    let mut failures = 0usize;
    let mut check = |name: &str, got: f64, want: f64, tol: f64| {
        let ok = (got - want).abs() <= tol;
        println!(
            "{} {name}: got {} want {} (tol {tol})",
            if ok { "PASS" } else { "FAIL" },
            seqbalance::fmt_sig(got, 12),
            seqbalance::fmt_sig(want, 12),
        );
        if !ok {
            failures += 1;
        }
    };

    // Worked example: split {0.1,0.4} vs {0.7,0.9}.
    let d = discrepancy(&scalars(&[0.1, 0.4]), &scalars(&[0.7, 0.9]))
        .map_err(|e| AppError::Failure(e.to_string()))?;
    check("split {0.1,0.4}|{0.7,0.9}", d.cost, 1.1, 1e-9);

    let seq = line_seq(&[0.1, 0.7, 0.4, 0.9]);
    let (trace, pairing) =
        matched_pair_assign(&seq, 1).map_err(|e| AppError::Failure(e.to_string()))?;
    check("matched-pair pairing cost", pairing.cost, 0.5, 1e-9);
    let realized = eval_discrepancy(&seq, &trace).map_err(|e| AppError::Failure(e.to_string()))?;
    check("matched-pair realized discrepancy", realized, 0.5, 1e-9);

    let crd = exact_expected_discrepancy(&DesignSpec::CompletelyRandomized, &seq)
        .map_err(|e| AppError::Failure(e.to_string()))?;
    check("exact CRD expectation", crd, 0.7, 1e-9);

    let ph = exact_expected_discrepancy(
        &DesignSpec::Pigeonhole(PartitionSpec::UniformCells { k: 2 }),
        &seq,
    )
    .map_err(|e| AppError::Failure(e.to_string()))?;
    check("exact two-cell expectation", ph, 0.5, 1e-9);

    // Enumeration oracles on 0/1 sequences.
    let crd01 = exact_expected_discrepancy(
        &DesignSpec::CompletelyRandomized,
        &line_seq(&[0.0, 0.0, 1.0, 1.0]),
    )
    .map_err(|e| AppError::Failure(e.to_string()))?;
    check("exact CRD on (0,0,1,1)", crd01, 2.0 / 3.0, 1e-9);

    let single_ord = exact_expected_discrepancy(
        &DesignSpec::SinglePigeonhole,
        &line_seq(&[0.0, 0.0, 1.0, 1.0]),
    )
    .map_err(|e| AppError::Failure(e.to_string()))?;
    check("exact single-cell on (0,0,1,1)", single_ord, 0.0, 1e-9);
    let single_alt = exact_expected_discrepancy(
        &DesignSpec::SinglePigeonhole,
        &line_seq(&[0.0, 1.0, 0.0, 1.0]),
    )
    .map_err(|e| AppError::Failure(e.to_string()))?;
    check("exact single-cell on (0,1,0,1)", single_alt, 1.0, 1e-9);

    // Solver vs brute-force oracles on seeded random instances.
    let mut max_dev = 0.0f64;
    for seed in 0..50 {
        let seq = seqbalance::instance::gen_uniform(8, 1, seed)
            .map_err(|e| AppError::Failure(e.to_string()))?;
        let (a, b) = seq.subjects.split_at(4);
        let fast = discrepancy(a, b)
            .map_err(|e| AppError::Failure(e.to_string()))?
            .cost;
        let slow = discrepancy_bruteforce(a, b)
            .map_err(|e| AppError::Failure(e.to_string()))?
            .cost;
        max_dev = max_dev.max((fast - slow).abs());
    }
    check(
        "bipartite solver vs oracle (max dev, 50 runs)",
        max_dev,
        0.0,
        1e-9,
    );

    let mut max_dev = 0.0f64;
    for seed in 0..50 {
        let seq = seqbalance::instance::gen_uniform(8, 2, 100 + seed)
            .map_err(|e| AppError::Failure(e.to_string()))?;
        let fast = min_weight_pairing(&seq.subjects)
            .map_err(|e| AppError::Failure(e.to_string()))?
            .cost;
        let slow = pairing_bruteforce(&seq.subjects)
            .map_err(|e| AppError::Failure(e.to_string()))?
            .cost;
        max_dev = max_dev.max((fast - slow).abs());
    }
    check(
        "pairing solver vs oracle (max dev, 50 runs)",
        max_dev,
        0.0,
        1e-9,
    );

    // Binomial mean absolute deviation against its asymptote.
    let exact = binomial_mad(100, 0.5);
    let asym = binomial_mad_asymptotic(100, 0.5);
    check("binomial MAD n=100 vs asymptote", exact / asym, 1.0, 0.02);
    check("binomial MAD n=2 p=1/2", binomial_mad(2, 0.5), 0.5, 1e-12);

    if failures == 0 {
        println!("verify: all checks passed");
        Ok(())
    } else {
        Err(AppError::Failure(format!(
            "{failures} verification check(s) failed"
        )))
    }
}
