//! Property tests for the metric, the matching solvers and serialization.

use proptest::prelude::*;

use seqbalance::matching::{discrepancy, line_discrepancy, min_weight_pairing};
use seqbalance::space::{
    l2_distance, read_sequence_csv, write_sequence_csv, ArrivalSequence, CovariateSpace, Subject,
};

fn unit_coord() -> impl Strategy<Value = f64> {
    // Finite values in [0,1] with plenty of boundary mass.
    prop_oneof![
        3 => 0.0f64..=1.0,
        1 => Just(0.0),
        1 => Just(1.0),
        1 => Just(0.5),
    ]
}

fn subject(p: usize) -> impl Strategy<Value = Subject> {
    prop::collection::vec(unit_coord(), p).prop_map(|c| Subject::point(&c))
}

proptest! {
    #[test]
    fn l2_is_a_metric(
        a in subject(3),
        b in subject(3),
        c in subject(3),
    ) {
        let dab = l2_distance(&a, &b).unwrap();
        let dba = l2_distance(&b, &a).unwrap();
        let dac = l2_distance(&a, &c).unwrap();
        let dcb = l2_distance(&c, &b).unwrap();
        prop_assert_eq!(dab, dba);
        prop_assert!(dab >= 0.0);
        prop_assert_eq!(dab == 0.0, a.coords().eq(b.coords()));
        prop_assert!(dab <= dac + dcb + 1e-12);
        prop_assert_eq!(l2_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn sorted_order_identity_in_one_dimension(
        xs in prop::collection::vec(unit_coord(), 1..10),
        ys_seed in prop::collection::vec(unit_coord(), 10),
    ) {
        let n = xs.len();
        let ys = &ys_seed[..n];
        let a: Vec<Subject> = xs.iter().map(|&x| Subject::scalar(x)).collect();
        let b: Vec<Subject> = ys.iter().map(|&y| Subject::scalar(y)).collect();
        let exact = discrepancy(&a, &b).unwrap().cost;
        let sorted = line_discrepancy(&xs, ys);
        prop_assert!((exact - sorted).abs() <= 1e-9, "exact {exact} vs sorted {sorted}");
        // The sorted pairing is one explicit bijection, so it upper bounds
        // (and in one dimension attains) the optimum.
        prop_assert!(exact <= sorted + 1e-12);
    }

    #[test]
    fn costs_scale_linearly(
        pts in prop::collection::vec(subject(2), 2..12),
        lambda in 0.01f64..=1.0,
    ) {
        let n = pts.len() - pts.len() % 2;
        let pts = &pts[..n];
        let scaled: Vec<Subject> = pts
            .iter()
            .map(|s| Subject::point(&s.continuous.iter().map(|x| x * lambda).collect::<Vec<_>>()))
            .collect();

        let half = n / 2;
        let base_d = discrepancy(&pts[..half], &pts[half..]).unwrap().cost;
        let scaled_d = discrepancy(&scaled[..half], &scaled[half..]).unwrap().cost;
        let tol = 1e-12 * (lambda * base_d).max(1.0);
        prop_assert!((scaled_d - lambda * base_d).abs() <= tol,
            "discrepancy {scaled_d} vs {}", lambda * base_d);

        let base_m = min_weight_pairing(pts).unwrap().cost;
        let scaled_m = min_weight_pairing(&scaled).unwrap().cost;
        let tol = 1e-12 * (lambda * base_m).max(1.0);
        prop_assert!((scaled_m - lambda * base_m).abs() <= tol,
            "pairing {scaled_m} vs {}", lambda * base_m);
    }

    #[test]
    fn sequence_csv_round_trips(
        rows in prop::collection::vec((unit_coord(), 0usize..3), 2..20),
    ) {
        let n = rows.len() - rows.len() % 2;
        let supports = vec![0.0, 0.5, 1.0];
        let space = CovariateSpace::new(1, vec![supports.clone()]).unwrap();
        let subjects: Vec<Subject> = rows[..n]
            .iter()
            .map(|&(c, d)| Subject::new(vec![c], vec![supports[d]]))
            .collect();
        let seq = ArrivalSequence::new(space, subjects);
        prop_assume!(seq.validate().is_ok());
        let mut buf = Vec::new();
        write_sequence_csv(&seq, &mut buf).unwrap();
        let back = read_sequence_csv(&buf[..], Some(seq.space.clone())).unwrap();
        prop_assert_eq!(back.subjects, seq.subjects);
    }
}
