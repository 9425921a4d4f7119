//! Transition probability tables for the smart kinetic walk.
//!
//! At each step the walk looks at the three relative directions front, left,
//! right (back is always the previous site). Depending on which of the three
//! are blocked, one of four probability cases applies; within a case the
//! table assigns one probability per remaining direction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row sums must equal 1 within this tolerance; symmetry comparisons use it too.
pub const TABLE_TOL: f64 = 1e-12;

/// Relative direction of a candidate step, measured from the current heading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelativeDirection {
    Front,
    Left,
    Right,
}

/// Which probability row applies, given the blocked pattern of the three
/// candidates. Exactly two blocked leaves a forced move; all three blocked
/// is a dead end the walk must never reach.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepCase {
    NBlock,
    LeftBlocked,
    RightBlocked,
    FrontBlocked,
    SingleAllowable(RelativeDirection),
    DeadEnd,
}

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("probability {name} = {value} outside [0, 1]")]
    EntryOutOfRange { name: &'static str, value: f64 },
    #[error("{row} probabilities sum to {sum}, expected 1")]
    BadRowSum { row: &'static str, sum: f64 },
    #[error("cannot sample a step from a dead-end configuration")]
    DeadEndSample,
}

/// The nine probabilities of the walk, one row per step case.
///
/// `a*` applies when nothing is blocked (front, left, right), `b*` when only
/// the left is blocked (front, right), `c*` when only the right is blocked
/// (front, left), `d*` when only the front is blocked (left, right).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
}

impl TransitionTable {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a1: f64,
        a2: f64,
        a3: f64,
        b1: f64,
        b2: f64,
        c1: f64,
        c2: f64,
        d1: f64,
        d2: f64,
    ) -> Result<Self, TableError> {
        let t = TransitionTable {
            a1,
            a2,
            a3,
            b1,
            b2,
            c1,
            c2,
            d1,
            d2,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), TableError> {
        let entries = [
            ("a1", self.a1),
            ("a2", self.a2),
            ("a3", self.a3),
            ("b1", self.b1),
            ("b2", self.b2),
            ("c1", self.c1),
            ("c2", self.c2),
            ("d1", self.d1),
            ("d2", self.d2),
        ];
        for (name, value) in entries {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(TableError::EntryOutOfRange { name, value });
            }
        }
        let rows = [
            ("nblock", self.a1 + self.a2 + self.a3),
            ("left-blocked", self.b1 + self.b2),
            ("right-blocked", self.c1 + self.c2),
            ("front-blocked", self.d1 + self.d2),
        ];
        for (row, sum) in rows {
            if (sum - 1.0).abs() > TABLE_TOL {
                return Err(TableError::BadRowSum { row, sum });
            }
        }
        Ok(())
    }

    /// True exactly when the walk's law is invariant under left-right
    /// reflection: a2 = a3, b1 = c1 (hence b2 = c2), d1 = d2 = 1/2.
    pub fn is_symmetric(&self) -> bool {
        (self.a2 - self.a3).abs() <= TABLE_TOL
            && (self.b1 - self.c1).abs() <= TABLE_TOL
            && (self.d1 - 0.5).abs() <= TABLE_TOL
            && (self.d2 - 0.5).abs() <= TABLE_TOL
    }

    /// Short label for reports, listing only rows that differ from uniform.
    pub fn label(&self) -> String {
        let u = uniform_table();
        let mut parts = Vec::new();
        if self.a1 != u.a1 || self.a2 != u.a2 || self.a3 != u.a3 {
            parts.push(format!("a={:.3}/{:.3}/{:.3}", self.a1, self.a2, self.a3));
        }
        if self.b1 != u.b1 {
            parts.push(format!("b={:.3}/{:.3}", self.b1, self.b2));
        }
        if self.c1 != u.c1 {
            parts.push(format!("c={:.3}/{:.3}", self.c1, self.c2));
        }
        if self.d1 != u.d1 {
            parts.push(format!("d={:.3}/{:.3}", self.d1, self.d2));
        }
        if parts.is_empty() {
            "uniform".to_string()
        } else {
            parts.join(" ")
        }
    }
}

/// Every allowable candidate equally likely in every case.
pub fn uniform_table() -> TransitionTable {
    TransitionTable {
        a1: 1.0 / 3.0,
        a2: 1.0 / 3.0,
        a3: 1.0 / 3.0,
        b1: 0.5,
        b2: 0.5,
        c1: 0.5,
        c2: 0.5,
        d1: 0.5,
        d2: 0.5,
    }
}

/// Map the blocked pattern of (front, left, right) to its step case.
pub fn classify_step(front_blocked: bool, left_blocked: bool, right_blocked: bool) -> StepCase {
    use RelativeDirection::*;
    match (front_blocked, left_blocked, right_blocked) {
        (false, false, false) => StepCase::NBlock,
        (false, true, false) => StepCase::LeftBlocked,
        (false, false, true) => StepCase::RightBlocked,
        (true, false, false) => StepCase::FrontBlocked,
        (false, true, true) => StepCase::SingleAllowable(Front),
        (true, false, true) => StepCase::SingleAllowable(Left),
        (true, true, false) => StepCase::SingleAllowable(Right),
        (true, true, true) => StepCase::DeadEnd,
    }
}

/// Choose a direction from one uniform deviate `u` in [0, 1).
///
/// The cumulative order is fixed as front < left < right restricted to the
/// case's candidates, so a run is reproducible from its deviate stream alone.
pub fn sample_step(
    table: &TransitionTable,
    case: StepCase,
    u: f64,
) -> Result<RelativeDirection, TableError> {
    use RelativeDirection::*;
    let dir = match case {
        StepCase::NBlock => {
            if u < table.a1 {
                Front
            } else if u < table.a1 + table.a2 {
                Left
            } else {
                Right
            }
        }
        StepCase::LeftBlocked => {
            if u < table.b1 {
                Front
            } else {
                Right
            }
        }
        StepCase::RightBlocked => {
            if u < table.c1 {
                Front
            } else {
                Left
            }
        }
        StepCase::FrontBlocked => {
            if u < table.d1 {
                Left
            } else {
                Right
            }
        }
        StepCase::SingleAllowable(d) => d,
        StepCase::DeadEnd => return Err(TableError::DeadEndSample),
    };
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_table_values() {
        let t = uniform_table();
        assert_eq!(t.a1, 1.0 / 3.0);
        assert_eq!(t.a2, 1.0 / 3.0);
        assert_eq!(t.a3, 1.0 / 3.0);
        for v in [t.b1, t.b2, t.c1, t.c2, t.d1, t.d2] {
            assert_eq!(v, 0.5);
        }
        t.validate().unwrap();
        assert!(t.is_symmetric());
    }

    #[test]
    fn validation_rejects_bad_rows() {
        assert!(matches!(
            TransitionTable::new(0.5, 0.3, 0.3, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5),
            Err(TableError::BadRowSum { row: "nblock", .. })
        ));
        assert!(matches!(
            TransitionTable::new(1.2, -0.1, -0.1, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5),
            Err(TableError::EntryOutOfRange { .. })
        ));
        // b1 changed without adjusting b2 must not validate.
        assert!(TransitionTable::new(
            1.0 / 3.0,
            1.0 / 3.0,
            1.0 / 3.0,
            0.55,
            0.5,
            0.5,
            0.5,
            0.5,
            0.5
        )
        .is_err());
    }

    #[test]
    fn symmetry_examples() {
        let mut t = uniform_table();
        t.a1 = 0.9;
        t.a2 = 0.05;
        t.a3 = 0.05;
        assert!(t.is_symmetric());

        let mut t = uniform_table();
        t.b1 = 0.1;
        t.b2 = 0.9;
        t.c1 = 0.1;
        t.c2 = 0.9;
        assert!(t.is_symmetric());

        let mut t = uniform_table();
        t.b1 = 0.55;
        t.b2 = 0.45;
        assert!(!t.is_symmetric());

        let mut t = uniform_table();
        t.a1 = 0.3;
        t.a2 = 0.3;
        t.a3 = 0.4;
        assert!(!t.is_symmetric());
    }

    #[test]
    fn classify_all_eight_patterns() {
        use RelativeDirection::*;
        assert_eq!(classify_step(false, false, false), StepCase::NBlock);
        assert_eq!(classify_step(false, true, false), StepCase::LeftBlocked);
        assert_eq!(classify_step(false, false, true), StepCase::RightBlocked);
        assert_eq!(classify_step(true, false, false), StepCase::FrontBlocked);
        assert_eq!(
            classify_step(false, true, true),
            StepCase::SingleAllowable(Front)
        );
        assert_eq!(
            classify_step(true, false, true),
            StepCase::SingleAllowable(Left)
        );
        assert_eq!(
            classify_step(true, true, false),
            StepCase::SingleAllowable(Right)
        );
        assert_eq!(classify_step(true, true, true), StepCase::DeadEnd);
    }

    #[test]
    fn sample_midpoint_is_left_under_uniform() {
        let t = uniform_table();
        assert_eq!(
            sample_step(&t, StepCase::NBlock, 0.5).unwrap(),
            RelativeDirection::Left
        );
    }

    #[test]
    fn sample_forced_and_dead_end() {
        let t = uniform_table();
        assert_eq!(
            sample_step(&t, StepCase::SingleAllowable(RelativeDirection::Right), 0.99).unwrap(),
            RelativeDirection::Right
        );
        assert_eq!(
            sample_step(&t, StepCase::DeadEnd, 0.0),
            Err(TableError::DeadEndSample)
        );
    }

    /// Empirical frequencies must match the table within 4 binomial sigmas.
    fn check_frequencies(table: &TransitionTable, case: StepCase, probs: &[(RelativeDirection, f64)]) {
        let n = 1_000_000u64;
        let mut rng = ChaCha8Rng::seed_from_u64(07_141_512);
        let mut counts = std::collections::HashMap::new();
        for _ in 0..n {
            let d = sample_step(table, case, rng.gen::<f64>()).unwrap();
            *counts.entry(d).or_insert(0u64) += 1;
        }
        for &(d, p) in probs {
            let observed = *counts.get(&d).unwrap_or(&0) as f64 / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (observed - p).abs() <= 4.0 * sigma.max(1e-9),
                "{d:?}: observed {observed}, expected {p} +- {sigma}"
            );
        }
    }

    #[test]
    fn empirical_frequencies_nblock_front_heavy() {
        use RelativeDirection::*;
        let t = TransitionTable::new(0.9, 0.05, 0.05, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5).unwrap();
        check_frequencies(
            &t,
            StepCase::NBlock,
            &[(Front, 0.9), (Left, 0.05), (Right, 0.05)],
        );
    }

    #[test]
    fn empirical_frequencies_two_candidate_cases() {
        use RelativeDirection::*;
        let t = TransitionTable::new(
            1.0 / 3.0,
            1.0 / 3.0,
            1.0 / 3.0,
            0.1,
            0.9,
            0.1,
            0.9,
            0.5,
            0.5,
        )
        .unwrap();
        check_frequencies(&t, StepCase::LeftBlocked, &[(Front, 0.1), (Right, 0.9)]);
        check_frequencies(&t, StepCase::RightBlocked, &[(Front, 0.1), (Left, 0.9)]);
        check_frequencies(&t, StepCase::FrontBlocked, &[(Left, 0.5), (Right, 0.5)]);
    }

    fn arb_table() -> impl Strategy<Value = TransitionTable> {
        (
            0.0f64..1.0,
            0.0f64..1.0,
            0.0f64..1.0,
            0.0f64..1.0,
            0.0f64..1.0,
        )
            .prop_map(|(a1s, a2s, b1, c1, d1)| {
                // Build a valid table from free coordinates: split the nblock
                // row by two cuts, the two-candidate rows by one each.
                let (lo, hi) = if a1s <= a2s { (a1s, a2s) } else { (a2s, a1s) };
                TransitionTable {
                    a1: lo,
                    a2: hi - lo,
                    a3: 1.0 - hi,
                    b1,
                    b2: 1.0 - b1,
                    c1,
                    c2: 1.0 - c1,
                    d1,
                    d2: 1.0 - d1,
                }
            })
    }

    fn mirror(t: &TransitionTable) -> TransitionTable {
        // Swap left and right everywhere: a2<->a3, b<->c rows, d1<->d2.
        TransitionTable {
            a1: t.a1,
            a2: t.a3,
            a3: t.a2,
            b1: t.c1,
            b2: t.c2,
            c1: t.b1,
            c2: t.b2,
            d1: t.d2,
            d2: t.d1,
        }
    }

    proptest! {
        #[test]
        fn generated_tables_validate(t in arb_table()) {
            prop_assert!(t.validate().is_ok());
        }

        #[test]
        fn symmetry_invariant_under_left_right_swap(t in arb_table()) {
            prop_assert_eq!(t.is_symmetric(), mirror(&t).is_symmetric());
        }

        #[test]
        fn sampled_direction_is_always_allowable(t in arb_table(), u in 0.0f64..1.0) {
            use RelativeDirection::*;
            prop_assert_ne!(sample_step(&t, StepCase::LeftBlocked, u).unwrap(), Left);
            prop_assert_ne!(sample_step(&t, StepCase::RightBlocked, u).unwrap(), Right);
            prop_assert_ne!(sample_step(&t, StepCase::FrontBlocked, u).unwrap(), Front);
        }

        #[test]
        fn mirrored_table_mirrors_samples(t in arb_table(), u in 0.0f64..1.0) {
            // Sampling front stays front under mirroring; left and right swap.
            let m = mirror(&t);
            let d = sample_step(&t, StepCase::NBlock, u).unwrap();
            let md = sample_step(&m, StepCase::NBlock, u).unwrap();
            // With the fixed front<left<right cumulative order, mirroring maps the
            // cut points (a1, a1+a2) to (a1, a1+a3); equality of outcomes holds for
            // front, and left/right swap as segment lengths swap.
            match (d, md) {
                (RelativeDirection::Front, RelativeDirection::Front) => {}
                (RelativeDirection::Left | RelativeDirection::Right, RelativeDirection::Left | RelativeDirection::Right) => {}
                other => prop_assert!(false, "unexpected pair {:?}", other),
            }
        }
    }
}
