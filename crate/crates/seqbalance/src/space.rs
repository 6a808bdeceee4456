//! Covariate spaces, subjects, arrival sequences and assignment traces.
//!
//! Every covariate dimension is normalized to `[0,1]`. A space has `p`
//! continuous dimensions followed by `q` discrete dimensions; each discrete
//! dimension carries an explicit finite support. Discrete values are compared
//! by exact floating-point equality, never by tolerance, so cells keyed on
//! them can never silently merge.

use std::fmt;
use std::io::{self, BufRead, Write};

use serde::Serialize;
use thiserror::Error;

/// Shape of the covariate space `[0,1]^(p+q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSpace {
    p: usize,
    supports: Vec<Vec<f64>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error("covariate space needs at least one dimension")]
    Empty,
    #[error("discrete dimension {dim} has an empty support")]
    EmptySupport { dim: usize },
    #[error("support value {value} in discrete dimension {dim} lies outside [0,1]")]
    SupportOutOfRange { dim: usize, value: f64 },
    #[error("duplicate support value {value} in discrete dimension {dim}")]
    DuplicateSupport { dim: usize, value: f64 },
}

impl CovariateSpace {
    /// A space with `p` continuous dimensions and the given discrete supports.
    pub fn new(p: usize, supports: Vec<Vec<f64>>) -> Result<Self, SpaceError> {
        if p + supports.len() == 0 {
            return Err(SpaceError::Empty);
        }
        for (dim, s) in supports.iter().enumerate() {
            if s.is_empty() {
                return Err(SpaceError::EmptySupport { dim });
            }
            for (i, &v) in s.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(SpaceError::SupportOutOfRange { dim, value: v });
                }
                if s[..i].contains(&v) {
                    return Err(SpaceError::DuplicateSupport { dim, value: v });
                }
            }
        }
        Ok(Self { p, supports })
    }

    /// Purely continuous space `[0,1]^p`.
    pub fn continuous(p: usize) -> Result<Self, SpaceError> {
        Self::new(p, Vec::new())
    }

    /// Purely discrete space of `q` binary dimensions with supports `{0,1}`.
    pub fn binary(q: usize) -> Result<Self, SpaceError> {
        Self::new(0, vec![vec![0.0, 1.0]; q])
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.supports.len()
    }

    /// Total number of dimensions, `p + q`.
    pub fn dim(&self) -> usize {
        self.p + self.supports.len()
    }

    pub fn discrete_supports(&self) -> &[Vec<f64>] {
        &self.supports
    }

    /// Number of distinct discrete support tuples, `prod m_i` (1 when q = 0).
    pub fn support_tuples(&self) -> usize {
        self.supports.iter().map(Vec::len).product()
    }

    /// Index of `value` within the support of discrete dimension `dim`,
    /// by exact equality.
    pub fn support_index(&self, dim: usize, value: f64) -> Option<usize> {
        self.supports[dim].iter().position(|&v| v == value)
    }
}

/// One experimental subject: a point in the covariate space.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub continuous: Vec<f64>,
    pub discrete: Vec<f64>,
}

impl Subject {
    pub fn new(continuous: Vec<f64>, discrete: Vec<f64>) -> Self {
        Self {
            continuous,
            discrete,
        }
    }

    /// Single continuous coordinate, the common p=1 case.
    pub fn scalar(x: f64) -> Self {
        Self {
            continuous: vec![x],
            discrete: Vec::new(),
        }
    }

    /// Continuous-only point.
    pub fn point(coords: &[f64]) -> Self {
        Self {
            continuous: coords.to_vec(),
            discrete: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.continuous.len() + self.discrete.len()
    }

    /// All coordinates, continuous first.
    pub fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        self.continuous.iter().chain(self.discrete.iter()).copied()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DistanceError {
    #[error("subjects live in different spaces ({a} vs {b} dimensions)")]
    SpaceMismatch { a: usize, b: usize },
}

/// Euclidean distance over all `p+q` coordinates.
pub fn l2_distance(a: &Subject, b: &Subject) -> Result<f64, DistanceError> {
    if a.continuous.len() != b.continuous.len() || a.discrete.len() != b.discrete.len() {
        return Err(DistanceError::SpaceMismatch {
            a: a.dim(),
            b: b.dim(),
        });
    }
    Ok(dist(a, b))
}

/// Distance without the shape check, for hot paths that validated up front.
pub(crate) fn dist(a: &Subject, b: &Subject) -> f64 {
    debug_assert_eq!(a.continuous.len(), b.continuous.len());
    debug_assert_eq!(a.discrete.len(), b.discrete.len());
    let mut s = 0.0;
    for (x, y) in a.coords().zip(b.coords()) {
        let d = x - y;
        s += d * d;
    }
    s.sqrt()
}

/// An ordered arrival sequence of `T` subjects in one space.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalSequence {
    pub space: CovariateSpace,
    pub subjects: Vec<Subject>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ValidationError {
    #[error("horizon T={t} is odd; an even number of subjects is required")]
    OddHorizon { t: usize },
    #[error("horizon T={t} is too short; at least 2 subjects are required")]
    TooShort { t: usize },
    #[error(
        "subject {index} has {got} continuous and {got_d} discrete coordinates, expected {p}+{q}"
    )]
    DimensionMismatch {
        index: usize,
        got: usize,
        got_d: usize,
        p: usize,
        q: usize,
    },
    #[error("subject {index}: continuous coordinate {value} in dimension {dim} is outside [0,1]")]
    OutOfRange {
        index: usize,
        dim: usize,
        value: f64,
    },
    #[error(
        "subject {index}: discrete value {value} in dimension {dim} is not in the declared support"
    )]
    UnknownSupport {
        index: usize,
        dim: usize,
        value: f64,
    },
}

impl ArrivalSequence {
    pub fn new(space: CovariateSpace, subjects: Vec<Subject>) -> Self {
        Self { space, subjects }
    }

    /// Number of periods `T`.
    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Checks every sequence invariant, reporting the first violation.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let t = self.subjects.len();
        if t < 2 {
            return Err(ValidationError::TooShort { t });
        }
        if !t.is_multiple_of(2) {
            return Err(ValidationError::OddHorizon { t });
        }
        let (p, q) = (self.space.p(), self.space.q());
        for (index, s) in self.subjects.iter().enumerate() {
            if s.continuous.len() != p || s.discrete.len() != q {
                return Err(ValidationError::DimensionMismatch {
                    index,
                    got: s.continuous.len(),
                    got_d: s.discrete.len(),
                    p,
                    q,
                });
            }
            for (dim, &v) in s.continuous.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(ValidationError::OutOfRange {
                        index,
                        dim,
                        value: v,
                    });
                }
            }
            for (dim, &v) in s.discrete.iter().enumerate() {
                if self.space.support_index(dim, v).is_none() {
                    return Err(ValidationError::UnknownSupport {
                        index,
                        dim,
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Group label of one subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn opposite(self) -> Arm {
        match self {
            Arm::Control => Arm::Treated,
            Arm::Treated => Arm::Control,
        }
    }

    /// `0` for control, `1` for treated.
    pub fn as_u8(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("trace has {control} control and {treated} treated labels; exactly T/2 each required")]
    Unbalanced { control: usize, treated: usize },
    #[error("trace length {t} is not a positive even number")]
    BadLength { t: usize },
}

/// Realized assignment of one design run: the label sequence plus the
/// stopping time `tau`, the first period at which one group reached `T/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentTrace {
    arms: Vec<Arm>,
    tau: usize,
}

impl AssignmentTrace {
    /// Builds a trace from labels, checking the half-half constraint and
    /// computing `tau` (1-based period).
    pub fn new(arms: Vec<Arm>) -> Result<Self, TraceError> {
        let t = arms.len();
        if t < 2 || !t.is_multiple_of(2) {
            return Err(TraceError::BadLength { t });
        }
        let half = t / 2;
        let (mut n0, mut n1) = (0usize, 0usize);
        let mut tau = t;
        for (i, a) in arms.iter().enumerate() {
            match a {
                Arm::Control => n0 += 1,
                Arm::Treated => n1 += 1,
            }
            if tau == t && (n0 == half || n1 == half) {
                tau = i + 1;
            }
        }
        if n0 != half || n1 != half {
            return Err(TraceError::Unbalanced {
                control: n0,
                treated: n1,
            });
        }
        Ok(Self { arms, tau })
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    /// Stopping time: first period at which either group reached `T/2`.
    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn control_indices(&self) -> Vec<usize> {
        self.indices_of(Arm::Control)
    }

    pub fn treated_indices(&self) -> Vec<usize> {
        self.indices_of(Arm::Treated)
    }

    fn indices_of(&self, arm: Arm) -> Vec<usize> {
        self.arms
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == arm)
            .map(|(i, _)| i)
            .collect()
    }

    /// The same trace with every label flipped.
    pub fn flipped(&self) -> AssignmentTrace {
        let arms = self.arms.iter().map(|a| a.opposite()).collect();
        AssignmentTrace::new(arms).expect("flipping preserves balance")
    }
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("header row is missing or malformed: {0}")]
    Header(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Writes a sequence as CSV: header `c1..cp,d1..dq`, one subject per row.
/// Coordinates use the shortest decimal form that parses back to the exact
/// same float, so discrete values survive the round trip bitwise.
pub fn write_sequence_csv<W: Write>(seq: &ArrivalSequence, mut w: W) -> io::Result<()> {
    let (p, q) = (seq.space.p(), seq.space.q());
    let mut header = Vec::with_capacity(p + q);
    header.extend((1..=p).map(|i| format!("c{i}")));
    header.extend((1..=q).map(|i| format!("d{i}")));
    writeln!(w, "{}", header.join(","))?;
    for s in &seq.subjects {
        let row: Vec<String> = s.coords().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads a sequence from CSV. When `space` is `None` the shape is taken from
/// the header and discrete supports are inferred as the sorted distinct
/// values observed in each `d` column. Lines starting with `#` are skipped.
pub fn read_sequence_csv<R: BufRead>(
    r: R,
    space: Option<CovariateSpace>,
) -> Result<ArrivalSequence, CsvError> {
    let mut lines = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        lines.push((ln + 1, trimmed.to_string()));
    }
    let (_, header) = lines
        .first()
        .ok_or_else(|| CsvError::Header("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let p = cols.iter().take_while(|c| c.starts_with('c')).count();
    let q = cols.len() - p;
    if !cols[p..].iter().all(|c| c.starts_with('d')) {
        return Err(CsvError::Header(format!(
            "expected columns c1..cp then d1..dq, got `{header}`"
        )));
    }

    let mut subjects = Vec::with_capacity(lines.len().saturating_sub(1));
    for (ln, line) in &lines[1..] {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != p + q {
            return Err(CsvError::Parse {
                line: *ln,
                message: format!("expected {} fields, got {}", p + q, fields.len()),
            });
        }
        let mut vals = Vec::with_capacity(p + q);
        for f in &fields {
            let v: f64 = f.parse().map_err(|e| CsvError::Parse {
                line: *ln,
                message: format!("bad number `{f}`: {e}"),
            })?;
            vals.push(v);
        }
        subjects.push(Subject::new(vals[..p].to_vec(), vals[p..].to_vec()));
    }

    let space = match space {
        Some(s) => s,
        None => {
            let mut supports: Vec<Vec<f64>> = vec![Vec::new(); q];
            for s in &subjects {
                for (dim, &v) in s.discrete.iter().enumerate() {
                    if !supports[dim].contains(&v) {
                        supports[dim].push(v);
                    }
                }
            }
            for sup in &mut supports {
                sup.sort_by(|a, b| a.partial_cmp(b).unwrap());
            }
            CovariateSpace::new(p, supports)?
        }
    };
    Ok(ArrivalSequence::new(space, subjects))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn example1() -> ArrivalSequence {
        let space = CovariateSpace::continuous(1).unwrap();
        let subjects = [0.1, 0.7, 0.4, 0.9]
            .iter()
            .map(|&x| Subject::scalar(x))
            .collect();
        ArrivalSequence::new(space, subjects)
    }

    #[test]
    fn example1_sequence_is_valid() {
        assert!(example1().validate().is_ok());
    }

    #[test]
    fn odd_horizon_rejected() {
        let space = CovariateSpace::continuous(1).unwrap();
        let subjects = [0.1, 0.7, 0.4]
            .iter()
            .map(|&x| Subject::scalar(x))
            .collect();
        let seq = ArrivalSequence::new(space, subjects);
        assert_eq!(seq.validate(), Err(ValidationError::OddHorizon { t: 3 }));
    }

    #[test]
    fn unknown_support_rejected() {
        let space = CovariateSpace::binary(1).unwrap();
        let subjects = vec![
            Subject::new(vec![], vec![0.5]),
            Subject::new(vec![], vec![1.0]),
        ];
        let seq = ArrivalSequence::new(space, subjects);
        assert_eq!(
            seq.validate(),
            Err(ValidationError::UnknownSupport {
                index: 0,
                dim: 0,
                value: 0.5
            })
        );
    }

    #[test]
    fn out_of_range_rejected() {
        let space = CovariateSpace::continuous(1).unwrap();
        let subjects = vec![Subject::scalar(0.2), Subject::scalar(1.2)];
        let seq = ArrivalSequence::new(space, subjects);
        assert_eq!(
            seq.validate(),
            Err(ValidationError::OutOfRange {
                index: 1,
                dim: 0,
                value: 1.2
            })
        );
    }

    #[test]
    fn l2_distance_examples() {
        let a = Subject::scalar(0.1);
        let b = Subject::scalar(0.4);
        assert_abs_diff_eq!(l2_distance(&a, &b).unwrap(), 0.3, epsilon = 1e-15);
        assert_eq!(l2_distance(&a, &a).unwrap(), 0.0);
        let c = Subject::point(&[0.0, 0.0]);
        let d = Subject::point(&[1.0, 1.0]);
        assert_abs_diff_eq!(l2_distance(&c, &d).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        assert!(l2_distance(&a, &c).is_err());
    }

    #[test]
    fn trace_half_half_and_tau() {
        use Arm::*;
        let tr = AssignmentTrace::new(vec![Treated, Control, Control, Treated]).unwrap();
        assert_eq!(tr.tau(), 3); // control reaches 2 at period 3
        assert_eq!(tr.control_indices(), vec![1, 2]);
        let bad = AssignmentTrace::new(vec![Treated, Treated, Treated, Control]);
        assert!(matches!(bad, Err(TraceError::Unbalanced { .. })));
    }

    #[test]
    fn csv_round_trip_infers_space() {
        let space = CovariateSpace::new(1, vec![vec![0.0, 0.5, 1.0]]).unwrap();
        let subjects = vec![
            Subject::new(vec![0.25], vec![0.5]),
            Subject::new(vec![0.75], vec![0.0]),
            Subject::new(vec![0.1], vec![1.0]),
            Subject::new(vec![0.9], vec![0.5]),
        ];
        let seq = ArrivalSequence::new(space, subjects);
        let mut buf = Vec::new();
        write_sequence_csv(&seq, &mut buf).unwrap();
        let back = read_sequence_csv(&buf[..], None).unwrap();
        assert_eq!(back.subjects, seq.subjects);
        assert_eq!(back.space.p(), 1);
        assert_eq!(back.space.q(), 1);
        assert!(back.validate().is_ok());
    }
}
