//! Evaluation protocol: session-level nested cross-validation, recall
//! confusion accounting (overall and stratified by bone density), and the
//! statistical comparisons reported across detector configurations.

pub mod bmd;
pub mod special;
pub mod stats;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
#[cfg(not(feature = "std"))]
use num_traits::Float;

pub use bmd::{
    bmd_mean_hu, BmdAssessment, BmdStratum, EllipseRoi, HuVolume, DEFAULT_BMD_THRESHOLD_HU,
};
pub use special::{f_upper_p, ln_gamma, reg_inc_beta, t_two_sided_p};
pub use stats::{
    ci_bounds, mean_std_ci, one_way_anova, pairwise_t_test, t_test_from_summary, Anova,
    SummaryStats, TTest, TTestKind, CI_Z,
};

use crate::label::WindowLabel;
use crate::rng::SeedRng;

/// Nested cross-validation layout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CvPlan {
    /// Fraction of sessions held out for the final test set.
    pub test_fraction: f64,
    /// Folds over the remaining sessions.
    pub n_folds: usize,
    /// Training runs per configuration (one per fold by default).
    pub n_runs: usize,
    /// Shuffle seed.
    pub seed: u64,
}

impl Default for CvPlan {
    fn default() -> Self {
        Self {
            test_fraction: 0.10,
            n_folds: 5,
            n_runs: 5,
            seed: 0,
        }
    }
}

impl CvPlan {
    fn validate(&self) -> Result<(), EvalError> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(EvalError::InvalidParam("test fraction must be in (0, 1)"));
        }
        if self.n_folds < 2 {
            return Err(EvalError::InvalidParam("need at least 2 folds"));
        }
        if self.n_runs < 1 {
            return Err(EvalError::InvalidParam("need at least 1 run"));
        }
        Ok(())
    }
}

/// One fold: which sessions validate and which train.
#[derive(Clone, Debug, PartialEq)]
pub struct CvFold {
    /// Sessions trained on.
    pub train_sessions: Vec<String>,
    /// Sessions validated on.
    pub val_sessions: Vec<String>,
}

/// Complete cross-validation split over sessions.
#[derive(Clone, Debug, PartialEq)]
pub struct CvSplit {
    /// Held-out test sessions, never seen by any fold.
    pub test_sessions: Vec<String>,
    /// Folds over the remaining sessions; each session validates exactly
    /// once.
    pub folds: Vec<CvFold>,
}

/// Partition sessions into a held-out test set and `n_folds` train/val
/// folds. Splits are session-level (a window never crosses splits because
/// its session cannot), deterministic in `plan.seed`, and independent of the
/// input ordering. Each non-test session appears in exactly one fold's
/// validation list.
pub fn split_cv(sessions: &[String], plan: &CvPlan) -> Result<CvSplit, EvalError> {
    plan.validate()?;
    let mut order: Vec<String> = sessions.to_vec();
    order.sort_unstable();
    for w in order.windows(2) {
        if w[0] == w[1] {
            return Err(EvalError::DuplicateSession(w[0].clone()));
        }
    }

    let n = order.len();
    let n_test = ((n as f64) * plan.test_fraction).round().max(1.0) as usize;
    let needed = plan.n_folds + n_test.max(1);
    if n < needed {
        return Err(EvalError::TooFewSessions { got: n, needed });
    }

    let mut rng = SeedRng::new(plan.seed);
    rng.shuffle(&mut order);

    let mut test_sessions: Vec<String> = order[..n_test].to_vec();
    test_sessions.sort_unstable();
    let rest = &order[n_test..];

    let base = rest.len() / plan.n_folds;
    let extra = rest.len() % plan.n_folds;
    let mut folds = Vec::with_capacity(plan.n_folds);
    let mut offset = 0;
    for i in 0..plan.n_folds {
        let size = base + usize::from(i < extra);
        let mut val: Vec<String> = rest[offset..offset + size].to_vec();
        let mut train: Vec<String> = rest[..offset]
            .iter()
            .chain(rest[offset + size..].iter())
            .cloned()
            .collect();
        val.sort_unstable();
        train.sort_unstable();
        folds.push(CvFold {
            train_sessions: train,
            val_sessions: val,
        });
        offset += size;
    }
    Ok(CvSplit {
        test_sessions,
        folds,
    })
}

/// Binary confusion counts with breach as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    /// Breach windows predicted breach (true positives).
    pub detected_breach: usize,
    /// Breach windows predicted non-breach (false negatives).
    pub missed_breach: usize,
    /// Non-breach windows predicted non-breach (true negatives).
    pub rejected_non_breach: usize,
    /// Non-breach windows predicted breach (false positives).
    pub false_alarms: usize,
}

impl Confusion {
    /// Tally one (truth, prediction) pair.
    pub fn add(&mut self, truth: WindowLabel, prediction: WindowLabel) {
        match (truth.is_breach(), prediction.is_breach()) {
            (true, true) => self.detected_breach += 1,
            (true, false) => self.missed_breach += 1,
            (false, false) => self.rejected_non_breach += 1,
            (false, true) => self.false_alarms += 1,
        }
    }

    /// Total windows tallied.
    pub fn total(&self) -> usize {
        self.detected_breach + self.missed_breach + self.rejected_non_breach + self.false_alarms
    }

    /// Recall of the breach class; `None` when no breach window was present
    /// (undefined, as for strata without any breach).
    pub fn breach_recall(&self) -> Option<f64> {
        let denom = self.detected_breach + self.missed_breach;
        (denom > 0).then(|| self.detected_breach as f64 / denom as f64)
    }

    /// Recall of the non-breach class; `None` when no non-breach window was
    /// present.
    pub fn non_breach_recall(&self) -> Option<f64> {
        let denom = self.rejected_non_breach + self.false_alarms;
        (denom > 0).then(|| self.rejected_non_breach as f64 / denom as f64)
    }

    /// Merge another confusion into this one.
    pub fn merge(&mut self, other: &Confusion) {
        self.detected_breach += other.detected_breach;
        self.missed_breach += other.missed_breach;
        self.rejected_non_breach += other.rejected_non_breach;
        self.false_alarms += other.false_alarms;
    }
}

/// Tally (truth, prediction) pairs for one evaluation pass.
pub fn confusion_from_pairs(pairs: &[(WindowLabel, WindowLabel)]) -> Result<Confusion, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let mut c = Confusion::default();
    for &(truth, pred) in pairs {
        c.add(truth, pred);
    }
    Ok(c)
}

/// One cross-validation run's outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunResult {
    /// Which run (fold) produced this result.
    pub run_index: usize,
    /// Test-set confusion counts.
    pub confusion: Confusion,
}

impl RunResult {
    /// Breach recall, if defined.
    pub fn breach_recall(&self) -> Option<f64> {
        self.confusion.breach_recall()
    }

    /// Non-breach recall, if defined.
    pub fn non_breach_recall(&self) -> Option<f64> {
        self.confusion.non_breach_recall()
    }
}

/// Confusions split by bone-density stratum, plus the overall tally.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StratifiedConfusion {
    /// All windows.
    pub overall: Confusion,
    /// Windows from normal-density subjects.
    pub normal: Confusion,
    /// Windows from abnormal-density subjects.
    pub abnormal: Confusion,
}

/// Tally (truth, prediction) pairs with a per-window density stratum.
/// Per-stratum counts always sum to the overall counts.
pub fn confusion_stratified(
    pairs: &[(WindowLabel, WindowLabel)],
    strata: &[BmdStratum],
) -> Result<StratifiedConfusion, EvalError> {
    if pairs.len() != strata.len() {
        return Err(EvalError::LengthMismatch {
            left: pairs.len(),
            right: strata.len(),
        });
    }
    if pairs.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let mut out = StratifiedConfusion::default();
    for (&(truth, pred), stratum) in pairs.iter().zip(strata) {
        out.overall.add(truth, pred);
        match stratum {
            BmdStratum::Normal => out.normal.add(truth, pred),
            BmdStratum::Abnormal => out.abnormal.add(truth, pred),
        }
    }
    Ok(out)
}

/// Evaluation-protocol errors.
#[derive(Clone, Debug, PartialEq)]
pub enum EvalError {
    /// Too few values for the statistic.
    TooFewValues {
        /// Values provided.
        got: usize,
        /// Values required.
        needed: usize,
    },
    /// ANOVA needs at least two groups.
    TooFewGroups {
        /// Groups provided.
        got: usize,
    },
    /// Not enough sessions for the requested split.
    TooFewSessions {
        /// Sessions provided.
        got: usize,
        /// Sessions required.
        needed: usize,
    },
    /// The same session name appears twice.
    DuplicateSession(String),
    /// All variance is zero; the test statistic is undefined.
    ZeroVariance,
    /// Volume value count does not match its dimensions.
    VolumeSizeMismatch {
        /// Values implied by the dimensions.
        expected: usize,
        /// Values provided.
        got: usize,
    },
    /// Slice range is empty or exceeds the volume.
    InvalidSlices {
        /// Range start.
        start: usize,
        /// Range end (exclusive).
        end: usize,
        /// Slices available.
        available: usize,
    },
    /// Region of interest extends outside the volume.
    RoiOutOfBounds,
    /// Region of interest contains no voxel centers.
    EmptyRoi,
    /// Evaluation of an empty set.
    EmptyEvaluation,
    /// Paired inputs differ in length.
    LengthMismatch {
        /// Left length.
        left: usize,
        /// Right length.
        right: usize,
    },
    /// Parameter failed validation; the message says which.
    InvalidParam(&'static str),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::TooFewValues { got, needed } => {
                write!(f, "need at least {needed} values, got {got}")
            }
            EvalError::TooFewGroups { got } => {
                write!(f, "need at least 2 groups, got {got}")
            }
            EvalError::TooFewSessions { got, needed } => {
                write!(f, "need at least {needed} sessions, got {got}")
            }
            EvalError::DuplicateSession(s) => write!(f, "duplicate session {s:?}"),
            EvalError::ZeroVariance => {
                write!(f, "zero variance; the test statistic is undefined")
            }
            EvalError::VolumeSizeMismatch { expected, got } => {
                write!(f, "volume dimensions imply {expected} values, got {got}")
            }
            EvalError::InvalidSlices {
                start,
                end,
                available,
            } => write!(
                f,
                "slice range {start}..{end} invalid for {available} slices"
            ),
            EvalError::RoiOutOfBounds => {
                write!(f, "region of interest extends outside the volume")
            }
            EvalError::EmptyRoi => write!(f, "region of interest contains no voxel centers"),
            EvalError::EmptyEvaluation => write!(f, "cannot evaluate an empty set"),
            EvalError::LengthMismatch { left, right } => {
                write!(f, "paired inputs differ in length: {left} vs {right}")
            }
            EvalError::InvalidParam(msg) => write!(f, "invalid parameter: {msg}"),
        }
    }
}

impl core::error::Error for EvalError {}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;

    fn sessions(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("S{}-L{}-left", i % 4 + 1, i)).collect()
    }

    #[test]
    fn split_is_a_partition_with_expected_sizes() {
        let s = sessions(20);
        let split = split_cv(&s, &CvPlan::default()).unwrap();
        assert_eq!(split.test_sessions.len(), 2);
        assert_eq!(split.folds.len(), 5);

        let mut seen: BTreeSet<&String> = split.test_sessions.iter().collect();
        for fold in &split.folds {
            assert!(fold.val_sessions.len() == 3 || fold.val_sessions.len() == 4);
            assert_eq!(fold.train_sessions.len() + fold.val_sessions.len(), 18);
            for v in &fold.val_sessions {
                // Each non-test session validates exactly once.
                assert!(seen.insert(v), "{v} validates twice");
                assert!(!fold.train_sessions.contains(v));
            }
            for t in &fold.train_sessions {
                assert!(!split.test_sessions.contains(t));
            }
        }
        assert_eq!(seen.len(), 20);
    }

    #[test]
    fn split_is_deterministic_and_order_independent() {
        let s = sessions(20);
        let plan = CvPlan::default();
        let a = split_cv(&s, &plan).unwrap();
        let b = split_cv(&s, &plan).unwrap();
        assert_eq!(a, b);

        let mut reversed = s.clone();
        reversed.reverse();
        assert_eq!(split_cv(&reversed, &plan).unwrap(), a);

        // Different seeds give different splits for at least one seed.
        let distinct: BTreeSet<Vec<String>> = (0..10)
            .map(|seed| {
                split_cv(&s, &CvPlan { seed, ..plan }).unwrap().test_sessions
            })
            .collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn split_validates_input() {
        let plan = CvPlan::default();
        assert!(matches!(
            split_cv(&sessions(5), &plan),
            Err(EvalError::TooFewSessions { .. })
        ));
        let mut dup = sessions(10);
        dup[9] = dup[0].clone();
        assert!(matches!(
            split_cv(&dup, &plan),
            Err(EvalError::DuplicateSession(_))
        ));
        assert!(split_cv(
            &sessions(10),
            &CvPlan {
                n_folds: 1,
                ..plan
            }
        )
        .is_err());
    }

    #[test]
    fn confusion_recalls_are_definitional() {
        use WindowLabel::{Breach, NonBreach};
        // TP=9, FN=0, TN=60, FP=6.
        let mut pairs = vec![(Breach, Breach); 9];
        pairs.extend(vec![(NonBreach, NonBreach); 60]);
        pairs.extend(vec![(NonBreach, Breach); 6]);
        let c = confusion_from_pairs(&pairs).unwrap();
        assert_eq!(c.breach_recall(), Some(1.0));
        assert!((c.non_breach_recall().unwrap() - 0.909).abs() < 1e-3);
        assert_eq!(c.total(), 75);

        // Constant non-breach predictor.
        let pairs: Vec<_> = vec![(Breach, NonBreach); 5]
            .into_iter()
            .chain(vec![(NonBreach, NonBreach); 10])
            .collect();
        let c = confusion_from_pairs(&pairs).unwrap();
        assert_eq!(c.breach_recall(), Some(0.0));
        assert_eq!(c.non_breach_recall(), Some(1.0));

        // Undefined recall is None, not a number.
        let c = confusion_from_pairs(&[(NonBreach, NonBreach)]).unwrap();
        assert_eq!(c.breach_recall(), None);

        assert!(matches!(
            confusion_from_pairs(&[]),
            Err(EvalError::EmptyEvaluation)
        ));
    }

    #[test]
    fn strata_partition_the_overall_counts() {
        use WindowLabel::{Breach, NonBreach};
        let pairs = vec![
            (Breach, Breach),
            (Breach, NonBreach),
            (NonBreach, NonBreach),
            (NonBreach, Breach),
            (NonBreach, NonBreach),
        ];
        let strata = vec![
            BmdStratum::Normal,
            BmdStratum::Abnormal,
            BmdStratum::Abnormal,
            BmdStratum::Normal,
            BmdStratum::Normal,
        ];
        let s = confusion_stratified(&pairs, &strata).unwrap();
        assert_eq!(s.overall.total(), 5);
        assert_eq!(s.normal.total() + s.abnormal.total(), s.overall.total());
        assert_eq!(
            s.normal.detected_breach + s.abnormal.detected_breach,
            s.overall.detected_breach
        );
        // The abnormal stratum here has one breach, missed.
        assert_eq!(s.abnormal.breach_recall(), Some(0.0));

        assert!(matches!(
            confusion_stratified(&pairs, &strata[..4]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn run_result_delegates_to_confusion() {
        let mut c = Confusion::default();
        c.add(WindowLabel::Breach, WindowLabel::Breach);
        c.add(WindowLabel::NonBreach, WindowLabel::Breach);
        let r = RunResult {
            run_index: 3,
            confusion: c,
        };
        assert_eq!(r.breach_recall(), Some(1.0));
        assert_eq!(r.non_breach_recall(), Some(0.0));
        let _ = r.run_index.to_string();
    }
}
