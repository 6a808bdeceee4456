//! Arrival-sequence generators: the adversarial constructions used in the
//! worst-case analyses plus stochastic baselines. All generators are
//! deterministic in their parameters and seed.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::design::design_rng;
use crate::space::{ArrivalSequence, CovariateSpace, Subject};

/// Offset keeping "right end" points strictly inside their half-open cell.
pub const ENDPOINT_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("horizon T = {0} must be an even number of at least 2")]
    OddHorizon(usize),
    #[error("T = {t} is not a perfect {p}-th power")]
    NotAPower { t: usize, p: usize },
    #[error("T = {t} is not divisible by 2K = {k2}")]
    Indivisible { t: usize, k2: usize },
    #[error("cluster spec invalid: {0}")]
    BadClusterSpec(String),
    #[error("space must have {0}")]
    BadSpace(&'static str),
}

fn check_even(t: usize) -> Result<(), InstanceError> {
    if t < 2 || !t.is_multiple_of(2) {
        return Err(InstanceError::OddHorizon(t));
    }
    Ok(())
}

/// The worst case for covariate-blind designs on a line: T/2 zeros followed
/// by T/2 ones.
pub fn gen_halfzero_halfone(t: usize) -> Result<ArrivalSequence, InstanceError> {
    check_even(t)?;
    let space = CovariateSpace::continuous(1).expect("p=1 space");
    let subjects = (0..t)
        .map(|i| Subject::scalar(if i < t / 2 { 0.0 } else { 1.0 }))
        .collect();
    Ok(ArrivalSequence::new(space, subjects))
}

/// One subject at the center of each of `T = k^p` equal hypercubes, in
/// lexicographic arrival order. Any two subjects are at distance at least
/// `T^(-1/p)`. Odd perfect powers are allowed here (the centers themselves
/// are well defined); running a design on them still requires an even T.
pub fn gen_grid(t: usize, p: usize) -> Result<ArrivalSequence, InstanceError> {
    if t == 0 {
        return Err(InstanceError::OddHorizon(t));
    }
    if p == 0 {
        return Err(InstanceError::BadSpace("p >= 1"));
    }
    let k = (t as f64).powf(1.0 / p as f64).round() as usize;
    if k == 0 || k.pow(p as u32) != t {
        return Err(InstanceError::NotAPower { t, p });
    }
    let space = CovariateSpace::continuous(p).expect("continuous space");
    let mut subjects = Vec::with_capacity(t);
    let mut digits = vec![0usize; p];
    for _ in 0..t {
        let coords: Vec<f64> = digits
            .iter()
            .map(|&d| (d as f64 + 0.5) / k as f64)
            .collect();
        subjects.push(Subject::point(&coords));
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < k {
                break;
            }
            *d = 0;
        }
    }
    Ok(ArrivalSequence::new(space, subjects))
}

/// As [`gen_grid`] but with the arrival order shuffled by `seed`; the
/// one-subject-per-cell family is order-free.
pub fn gen_grid_shuffled(t: usize, p: usize, seed: u64) -> Result<ArrivalSequence, InstanceError> {
    let mut seq = gen_grid(t, p)?;
    seq.subjects.shuffle(&mut design_rng(seed));
    Ok(seq)
}

/// Lower-bound style instance against interval partitions: `K` uniform cells
/// each receiving `T/K` subjects that alternate between the cell's left end
/// and its right end (minus [`ENDPOINT_EPS`]), cells visited round-robin.
pub fn gen_alternating_lb(t: usize, k: usize) -> Result<ArrivalSequence, InstanceError> {
    check_even(t)?;
    if k == 0 || !t.is_multiple_of(2 * k) {
        return Err(InstanceError::Indivisible { t, k2: 2 * k });
    }
    let space = CovariateSpace::continuous(1).expect("p=1 space");
    let width = 1.0 / k as f64;
    let mut subjects = Vec::with_capacity(t);
    let rounds = t / k;
    for round in 0..rounds {
        for cell in 0..k {
            let x = if round % 2 == 0 {
                cell as f64 * width
            } else {
                (cell + 1) as f64 * width - ENDPOINT_EPS
            };
            subjects.push(Subject::scalar(x));
        }
    }
    Ok(ArrivalSequence::new(space, subjects))
}

/// A finite collection of L-infinity boxes of diameter `T^-gamma` that every
/// subject is drawn from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSpec {
    pub centers: Vec<Vec<f64>>,
    pub gamma: f64,
}

impl ClusterSpec {
    pub fn new(centers: Vec<Vec<f64>>, gamma: f64) -> Result<Self, InstanceError> {
        if centers.is_empty() {
            return Err(InstanceError::BadClusterSpec("no centers".into()));
        }
        if gamma <= 0.0 {
            return Err(InstanceError::BadClusterSpec(format!(
                "gamma = {gamma} not positive"
            )));
        }
        let p = centers[0].len();
        if p == 0 {
            return Err(InstanceError::BadClusterSpec("centers need p >= 1".into()));
        }
        for c in &centers {
            if c.len() != p {
                return Err(InstanceError::BadClusterSpec(
                    "ragged center dimensions".into(),
                ));
            }
            if c.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(InstanceError::BadClusterSpec(
                    "center outside [0,1]^p".into(),
                ));
            }
        }
        Ok(Self { centers, gamma })
    }

    /// `n` centers drawn uniformly from `[0,1]^p`.
    pub fn random_centers(
        p: usize,
        n: usize,
        gamma: f64,
        seed: u64,
    ) -> Result<Self, InstanceError> {
        let mut rng = design_rng(seed);
        let centers = (0..n)
            .map(|_| (0..p).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        Self::new(centers, gamma)
    }

    pub fn p(&self) -> usize {
        self.centers[0].len()
    }
}

/// Each subject picks a cluster uniformly, then a uniform point in the
/// cluster's box intersected with `[0,1]^p`.
pub fn gen_clustered(
    t: usize,
    spec: &ClusterSpec,
    seed: u64,
) -> Result<ArrivalSequence, InstanceError> {
    check_even(t)?;
    let p = spec.p();
    let space = CovariateSpace::continuous(p).expect("continuous space");
    let half_diam = 0.5 * (t as f64).powf(-spec.gamma);
    let mut rng = design_rng(seed);
    let subjects = (0..t)
        .map(|_| {
            let center = &spec.centers[rng.gen_range(0..spec.centers.len())];
            let coords: Vec<f64> = center
                .iter()
                .map(|&v| {
                    let lo = (v - half_diam).max(0.0);
                    let hi = (v + half_diam).min(1.0);
                    if hi > lo {
                        rng.gen_range(lo..hi)
                    } else {
                        lo
                    }
                })
                .collect();
            Subject::point(&coords)
        })
        .collect();
    Ok(ArrivalSequence::new(space, subjects))
}

/// i.i.d. uniform points over `[0,1]^p`.
pub fn gen_uniform(t: usize, p: usize, seed: u64) -> Result<ArrivalSequence, InstanceError> {
    if p == 0 {
        return Err(InstanceError::BadSpace("p >= 1"));
    }
    gen_space_uniform(
        t,
        &CovariateSpace::continuous(p).expect("continuous space"),
        seed,
    )
}

/// i.i.d. subjects uniform over a space: continuous coordinates uniform on
/// `[0,1]`, discrete coordinates uniform over their supports.
pub fn gen_space_uniform(
    t: usize,
    space: &CovariateSpace,
    seed: u64,
) -> Result<ArrivalSequence, InstanceError> {
    check_even(t)?;
    let mut rng = design_rng(seed);
    let subjects = (0..t)
        .map(|_| {
            let continuous = (0..space.p()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let discrete = space
                .discrete_supports()
                .iter()
                .map(|s| s[rng.gen_range(0..s.len())])
                .collect();
            Subject::new(continuous, discrete)
        })
        .collect();
    Ok(ArrivalSequence::new(space.clone(), subjects))
}

/// i.i.d. uniform over the supports of a purely discrete space.
pub fn gen_discrete_uniform(
    t: usize,
    space: &CovariateSpace,
    seed: u64,
) -> Result<ArrivalSequence, InstanceError> {
    if space.q() == 0 {
        return Err(InstanceError::BadSpace("q >= 1"));
    }
    gen_space_uniform(t, space, seed)
}

/// Rule for choosing the cell count of the alternating-endpoints instance
/// as a function of the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellRule {
    Fixed(usize),
    /// `K = ceil(sqrt(T))`.
    SqrtT,
}

impl CellRule {
    pub fn cells(&self, t: usize) -> usize {
        match *self {
            CellRule::Fixed(k) => k,
            CellRule::SqrtT => (t as f64).sqrt().ceil() as usize,
        }
    }
}

/// Instance recipe that can be instantiated at any horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "instance", rename_all = "snake_case")]
pub enum InstanceSpec {
    HalfZeroHalfOne,
    Grid {
        p: usize,
        shuffle: bool,
    },
    Alternating {
        cells: CellRule,
    },
    Clustered {
        p: usize,
        centers: usize,
        gamma: f64,
        centers_seed: u64,
    },
    Uniform {
        p: usize,
    },
    DiscreteUniform {
        binary_q: usize,
    },
}

impl InstanceSpec {
    /// Whether a fresh draw is needed per replication.
    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            InstanceSpec::Clustered { .. }
                | InstanceSpec::Uniform { .. }
                | InstanceSpec::DiscreteUniform { .. }
                | InstanceSpec::Grid { shuffle: true, .. }
        )
    }

    pub fn generate(&self, t: usize, seed: u64) -> Result<ArrivalSequence, InstanceError> {
        match *self {
            InstanceSpec::HalfZeroHalfOne => gen_halfzero_halfone(t),
            InstanceSpec::Grid { p, shuffle } => {
                if shuffle {
                    gen_grid_shuffled(t, p, seed)
                } else {
                    gen_grid(t, p)
                }
            }
            InstanceSpec::Alternating { cells } => gen_alternating_lb(t, cells.cells(t)),
            InstanceSpec::Clustered {
                p,
                centers,
                gamma,
                centers_seed,
            } => {
                let spec = ClusterSpec::random_centers(p, centers, gamma, centers_seed)?;
                gen_clustered(t, &spec, seed)
            }
            InstanceSpec::Uniform { p } => gen_uniform(t, p, seed),
            InstanceSpec::DiscreteUniform { binary_q } => {
                let space = CovariateSpace::binary(binary_q)
                    .map_err(|_| InstanceError::BadSpace("q >= 1"))?;
                gen_discrete_uniform(t, &space, seed)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            InstanceSpec::HalfZeroHalfOne => "halfzero".into(),
            InstanceSpec::Grid { p, shuffle } => {
                if *shuffle {
                    format!("grid(p={p},shuffled)")
                } else {
                    format!("grid(p={p})")
                }
            }
            InstanceSpec::Alternating { cells } => match cells {
                CellRule::Fixed(k) => format!("alternating(K={k})"),
                CellRule::SqrtT => "alternating(K=sqrtT)".into(),
            },
            InstanceSpec::Clustered {
                p, centers, gamma, ..
            } => {
                format!("clustered(p={p},N={centers},gamma={gamma})")
            }
            InstanceSpec::Uniform { p } => format!("uniform(p={p})"),
            InstanceSpec::DiscreteUniform { binary_q } => format!("binary(q={binary_q})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn halfzero_shape() {
        assert_eq!(
            gen_halfzero_halfone(4)
                .unwrap()
                .subjects
                .iter()
                .map(|s| s.continuous[0])
                .collect::<Vec<_>>(),
            vec![0.0, 0.0, 1.0, 1.0]
        );
        assert_eq!(
            gen_halfzero_halfone(2)
                .unwrap()
                .subjects
                .iter()
                .map(|s| s.continuous[0])
                .collect::<Vec<_>>(),
            vec![0.0, 1.0]
        );
        assert_eq!(gen_halfzero_halfone(5), Err(InstanceError::OddHorizon(5)));
        let seq = gen_halfzero_halfone(100).unwrap();
        assert_eq!(
            seq.subjects
                .iter()
                .filter(|s| s.continuous[0] == 0.0)
                .count(),
            50
        );
        assert!(seq.validate().is_ok());
    }

    #[test]
    fn grid_centers_and_membership() {
        let seq = gen_grid(4, 2).unwrap();
        let pts: HashSet<Vec<u64>> = seq
            .subjects
            .iter()
            .map(|s| s.continuous.iter().map(|v| v.to_bits()).collect())
            .collect();
        assert_eq!(pts.len(), 4);
        assert!(pts.contains(&vec![0.25f64.to_bits(), 0.25f64.to_bits()]));
        assert!(pts.contains(&vec![0.75f64.to_bits(), 0.75f64.to_bits()]));

        // Exactly one subject per cell (the one-per-hypercube family).
        let seq = gen_grid(16, 2).unwrap();
        let mut cells = HashSet::new();
        for s in &seq.subjects {
            let cell: Vec<usize> = s
                .continuous
                .iter()
                .map(|&x| ((x * 4.0).floor() as usize).min(3))
                .collect();
            assert!(cells.insert(cell), "two subjects in one cell");
        }
        assert_eq!(cells.len(), 16);

        // Minimum pairwise distance is T^(-1/p).
        let seq = gen_grid(9, 2).unwrap();
        let min_d = (0..9)
            .flat_map(|i| (0..9).map(move |j| (i, j)))
            .filter(|(i, j)| i < j)
            .map(|(i, j)| crate::space::l2_distance(&seq.subjects[i], &seq.subjects[j]).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!((min_d - 1.0 / 3.0).abs() < 1e-12);

        assert_eq!(
            gen_grid(10, 2),
            Err(InstanceError::NotAPower { t: 10, p: 2 })
        );
    }

    #[test]
    fn alternating_structure() {
        let seq = gen_alternating_lb(4, 1).unwrap();
        let xs: Vec<f64> = seq.subjects.iter().map(|s| s.continuous[0]).collect();
        assert_eq!(xs, vec![0.0, 1.0 - ENDPOINT_EPS, 0.0, 1.0 - ENDPOINT_EPS]);

        let seq = gen_alternating_lb(8, 2).unwrap();
        assert!(seq.validate().is_ok());
        // each cell receives an even count, alternating endpoints
        let in_cell0 = seq
            .subjects
            .iter()
            .filter(|s| s.continuous[0] < 0.5)
            .count();
        assert_eq!(in_cell0, 4);
        assert_eq!(
            gen_alternating_lb(10, 2),
            Err(InstanceError::Indivisible { t: 10, k2: 4 })
        );
    }

    #[test]
    fn clustered_membership_and_counts() {
        let spec = ClusterSpec::new(vec![vec![0.5, 0.5]], 0.5).unwrap();
        let t = 100;
        let seq = gen_clustered(t, &spec, 5).unwrap();
        let half_diam = 0.5 * (t as f64).powf(-0.5);
        for s in &seq.subjects {
            for (x, c) in s.continuous.iter().zip(&spec.centers[0]) {
                assert!((x - c).abs() <= half_diam + 1e-12);
            }
        }
        // Uniform cluster choice: counts near T/N.
        let spec = ClusterSpec::random_centers(2, 4, 0.9, 7).unwrap();
        let t = 10_000;
        let seq = gen_clustered(t, &spec, 8).unwrap();
        let half_diam = 0.5 * (t as f64).powf(-0.9);
        let mut counts = vec![0usize; 4];
        'outer: for s in &seq.subjects {
            for (n, c) in spec.centers.iter().enumerate() {
                if s.continuous
                    .iter()
                    .zip(c)
                    .all(|(x, v)| (x - v).abs() <= half_diam + 1e-12)
                {
                    counts[n] += 1;
                    continue 'outer;
                }
            }
            panic!("subject outside every cluster");
        }
        let expect = t as f64 / 4.0;
        let sigma = (t as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - expect).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn uniform_generators_are_deterministic() {
        let a = gen_uniform(50, 2, 9).unwrap();
        let b = gen_uniform(50, 2, 9).unwrap();
        assert_eq!(a, b);
        let space = CovariateSpace::binary(3).unwrap();
        let c = gen_discrete_uniform(100, &space, 1).unwrap();
        let d = gen_discrete_uniform(100, &space, 1).unwrap();
        assert_eq!(c, d);
        assert!(c.validate().is_ok());
        let e = gen_discrete_uniform(100, &space, 2).unwrap();
        assert_ne!(c, e);
    }

    #[test]
    fn binary_support_frequencies() {
        let space = CovariateSpace::binary(1).unwrap();
        let t = 10_000;
        let seq = gen_discrete_uniform(t, &space, 3).unwrap();
        let ones = seq.subjects.iter().filter(|s| s.discrete[0] == 1.0).count();
        let sigma = (t as f64 * 0.25).sqrt();
        assert!((ones as f64 - t as f64 / 2.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn all_generators_validate() {
        let specs: Vec<InstanceSpec> = vec![
            InstanceSpec::HalfZeroHalfOne,
            InstanceSpec::Grid {
                p: 2,
                shuffle: false,
            },
            InstanceSpec::Grid {
                p: 2,
                shuffle: true,
            },
            InstanceSpec::Alternating {
                cells: CellRule::SqrtT,
            },
            InstanceSpec::Clustered {
                p: 2,
                centers: 3,
                gamma: 0.8,
                centers_seed: 1,
            },
            InstanceSpec::Uniform { p: 3 },
            InstanceSpec::DiscreteUniform { binary_q: 4 },
        ];
        for spec in &specs {
            let seq = spec.generate(64, 11).unwrap();
            assert!(seq.validate().is_ok(), "{} failed validation", spec.label());
            assert_eq!(seq.len(), 64);
        }
    }
}
