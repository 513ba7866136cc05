//! Event semantics: behavior-correlation matrix, status co-occurrence
//! matrix, centroid initialization ranges, and event-map composition.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::behavior::TurnGeometry;
use crate::error::{Error, Result};
use crate::semantic::{BehaviorKind, SemanticLabel, NUM_LABELS};

/// P(label is dominant/active) per behavior row; `estimated` marks
/// placeholder entries not pinned by measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorCorrelationMatrix {
    pub values: [[f64; 16]; 3],
    pub estimated: [[bool; 16]; 3],
}

/// c[i][j] = P(label j co-occurs | label i present); diagonal is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusCooccurrenceMatrix {
    pub values: [[f64; 16]; 16],
    pub estimated: [[bool; 16]; 16],
}

impl BehaviorCorrelationMatrix {
    pub fn validate(&self) -> Result<()> {
        for row in &self.values {
            for &p in row {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Validation(
                        "behavior correlation entries must lie in [0,1]".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, behavior: BehaviorKind, label: SemanticLabel) -> f64 {
        self.values[behavior.index()][(label.id() - 1) as usize]
    }
}

impl StatusCooccurrenceMatrix {
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.values.iter().enumerate() {
            for &p in row {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Validation(
                        "co-occurrence entries must lie in [0,1]".into(),
                    ));
                }
            }
            if (row[i] - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!(
                    "co-occurrence diagonal for label {} must be 1",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, given: SemanticLabel, other: SemanticLabel) -> f64 {
        self.values[(given.id() - 1) as usize][(other.id() - 1) as usize]
    }
}

/// Initialization ranges for one label's centroid, normalized-domain power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelRange {
    pub label: SemanticLabel,
    pub delay_lo_ns: f64,
    pub delay_hi_ns: f64,
    pub power_lo_db: f64,
    pub power_hi_db: f64,
    #[serde(default)]
    pub estimated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidInitRanges {
    pub ranges: Vec<LabelRange>,
}

impl CentroidInitRanges {
    pub fn validate(&self) -> Result<()> {
        for r in &self.ranges {
            if r.delay_lo_ns > r.delay_hi_ns || r.power_lo_db > r.power_hi_db {
                return Err(Error::Validation(format!(
                    "label {}: range lo must be <= hi",
                    r.label.id()
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, label: SemanticLabel) -> Result<&LabelRange> {
        self.ranges
            .iter()
            .find(|r| r.label == label)
            .ok_or(Error::MissingLabel(label.id()))
    }
}

/// The event-matrix bundle shipped as one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMatrices {
    pub bcm: BehaviorCorrelationMatrix,
    pub scm: StatusCooccurrenceMatrix,
    pub ranges: CentroidInitRanges,
}

impl EventMatrices {
    pub fn validate(&self) -> Result<()> {
        self.bcm.validate()?;
        self.scm.validate()?;
        self.ranges.validate()
    }

    pub fn default_table() -> &'static EventMatrices {
        static TABLE: OnceLock<EventMatrices> = OnceLock::new();
        TABLE.get_or_init(|| {
            let m: EventMatrices =
                serde_json::from_str(include_str!("../data/event_matrices.json"))
                    .expect("embedded event matrices parse");
            m.validate().expect("embedded event matrices validate");
            m
        })
    }
}

/// One behavior token of a script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptToken {
    pub behavior: BehaviorKind,
    /// Explicit duration in snapshots; sampled from the behavior library when absent.
    #[serde(default)]
    pub duration: Option<usize>,
    #[serde(default)]
    pub turn: Option<TurnGeometry>,
}

/// A behavior sequence driving one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventScript {
    pub tokens: Vec<ScriptToken>,
    /// Overrides the configured seed when present.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl EventScript {
    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::Validation("event script must be nonempty".into()));
        }
        Ok(())
    }
}

/// Active-label sets per script segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMap {
    pub segments: Vec<SegmentLabels>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentLabels {
    pub behavior: BehaviorKind,
    pub active: Vec<SemanticLabel>,
}

/// Resolves each script segment to its active label set: Bernoulli trials
/// over the behavior-correlation row pick the dominant labels (argmax as
/// a floor when none succeed), then each dominant pulls coexisting labels
/// through the co-occurrence matrix.
pub fn compose_event_map<R: Rng + ?Sized>(
    script: &EventScript,
    bcm: &BehaviorCorrelationMatrix,
    scm: &StatusCooccurrenceMatrix,
    rng: &mut R,
) -> Result<EventMap> {
    script.validate()?;
    bcm.validate()?;
    scm.validate()?;
    let mut segments = Vec::with_capacity(script.tokens.len());
    for token in &script.tokens {
        let mut dominant: Vec<SemanticLabel> = SemanticLabel::all()
            .filter(|&l| rng.random::<f64>() < bcm.get(token.behavior, l))
            .collect();
        if dominant.is_empty() {
            let best = SemanticLabel::all()
                .max_by(|&a, &b| {
                    bcm.get(token.behavior, a)
                        .partial_cmp(&bcm.get(token.behavior, b))
                        .unwrap()
                        .then(b.id().cmp(&a.id())) // ties -> lowest id
                })
                .unwrap();
            dominant.push(best);
        }
        let mut active = [false; 16];
        for &d in &dominant {
            active[(d.id() - 1) as usize] = true;
        }
        for &d in &dominant {
            for other in SemanticLabel::all() {
                if other != d && rng.random::<f64>() < scm.get(d, other) {
                    active[(other.id() - 1) as usize] = true;
                }
            }
        }
        let active: Vec<SemanticLabel> = (1..=NUM_LABELS)
            .filter(|&id| active[(id - 1) as usize])
            .map(SemanticLabel)
            .collect();
        segments.push(SegmentLabels {
            behavior: token.behavior,
            active,
        });
    }
    Ok(EventMap { segments })
}

/// Uniform centroid initialization within a label's configured ranges.
pub fn init_centroid<R: Rng + ?Sized>(
    label: SemanticLabel,
    ranges: &CentroidInitRanges,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let r = ranges.get(label)?;
    let delay = if r.delay_lo_ns == r.delay_hi_ns {
        r.delay_lo_ns
    } else {
        rng.random_range(r.delay_lo_ns..r.delay_hi_ns)
    };
    let power = if r.power_lo_db == r.power_hi_db {
        r.power_lo_db
    } else {
        rng.random_range(r.power_lo_db..r.power_hi_db)
    };
    Ok((delay, power))
}

/// Seeds a replacement cluster on a birth event: uniform label choice
/// from the segment's active set, centroid from its init range.
pub fn spawn_on_birth<R: Rng + ?Sized>(
    active_labels: &[SemanticLabel],
    ranges: &CentroidInitRanges,
    rng: &mut R,
) -> Result<(SemanticLabel, f64, f64)> {
    if active_labels.is_empty() {
        return Err(Error::EmptyInput("active label set is empty".into()));
    }
    let label = active_labels[rng.random_range(0..active_labels.len())];
    let (delay, power) = init_centroid(label, ranges, rng)?;
    Ok((label, delay, power))
}

/// Estimated matrices plus observability masks.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedMatrices {
    pub bcm: BehaviorCorrelationMatrix,
    pub scm: StatusCooccurrenceMatrix,
    pub behavior_observed: [bool; 3],
    pub label_observed: [bool; 16],
}

/// Frequency estimates: bcm[b][i] = fraction of b-snapshots containing i;
/// scm[i][j] = fraction of i-snapshots also containing j; diagonal forced to 1.
pub fn estimate_matrices(
    labeled_snapshots: &[(BehaviorKind, Vec<SemanticLabel>)],
) -> Result<EstimatedMatrices> {
    if labeled_snapshots.is_empty() {
        return Err(Error::EmptyInput("no labeled snapshots".into()));
    }
    let mut behavior_counts = [0usize; 3];
    let mut bcm_counts = [[0usize; 16]; 3];
    let mut label_counts = [0usize; 16];
    let mut pair_counts = [[0usize; 16]; 16];
    for (behavior, labels) in labeled_snapshots {
        let b = behavior.index();
        behavior_counts[b] += 1;
        let mut present = [false; 16];
        for l in labels {
            if l.id() >= 1 {
                present[(l.id() - 1) as usize] = true;
            }
        }
        for i in 0..16 {
            if present[i] {
                bcm_counts[b][i] += 1;
                label_counts[i] += 1;
                for j in 0..16 {
                    if present[j] {
                        pair_counts[i][j] += 1;
                    }
                }
            }
        }
    }
    let mut bcm = BehaviorCorrelationMatrix {
        values: [[0.0; 16]; 3],
        estimated: [[true; 16]; 3],
    };
    let mut behavior_observed = [false; 3];
    for b in 0..3 {
        if behavior_counts[b] > 0 {
            behavior_observed[b] = true;
            for i in 0..16 {
                bcm.values[b][i] = bcm_counts[b][i] as f64 / behavior_counts[b] as f64;
            }
        }
    }
    let mut scm = StatusCooccurrenceMatrix {
        values: [[0.0; 16]; 16],
        estimated: [[true; 16]; 16],
    };
    let mut label_observed = [false; 16];
    for i in 0..16 {
        scm.values[i][i] = 1.0;
        if label_counts[i] > 0 {
            label_observed[i] = true;
            for j in 0..16 {
                scm.values[i][j] = pair_counts[i][j] as f64 / label_counts[i] as f64;
            }
            scm.values[i][i] = 1.0;
        }
    }
    Ok(EstimatedMatrices {
        bcm,
        scm,
        behavior_observed,
        label_observed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_hot_bcm(label_id: u8) -> BehaviorCorrelationMatrix {
        let mut values = [[0.0; 16]; 3];
        for row in values.iter_mut() {
            row[(label_id - 1) as usize] = 1.0;
        }
        BehaviorCorrelationMatrix { values, estimated: [[true; 16]; 3] }
    }

    fn identity_scm() -> StatusCooccurrenceMatrix {
        let mut values = [[0.0; 16]; 16];
        for (i, row) in values.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        StatusCooccurrenceMatrix { values, estimated: [[true; 16]; 16] }
    }

    fn script(behavior: BehaviorKind, n: usize) -> EventScript {
        EventScript {
            tokens: vec![
                ScriptToken { behavior, duration: Some(1), turn: None };
                n
            ],
            seed: None,
        }
    }

    #[test]
    fn one_hot_row_gives_exactly_that_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let map = compose_event_map(
            &script(BehaviorKind::StraightDriving, 20),
            &one_hot_bcm(9),
            &identity_scm(),
            &mut rng,
        )
        .unwrap();
        for seg in &map.segments {
            assert_eq!(seg.active, vec![SemanticLabel(9)]);
        }
    }

    #[test]
    fn certain_left_turn_label_appears_in_nearly_all_segments() {
        let mut bcm = EventMatrices::default_table().bcm.clone();
        bcm.values[BehaviorKind::LeftTurning.index()][0] = 1.0;
        let scm = EventMatrices::default_table().scm.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let map =
            compose_event_map(&script(BehaviorKind::LeftTurning, 1000), &bcm, &scm, &mut rng)
                .unwrap();
        let hits = map
            .segments
            .iter()
            .filter(|s| s.active.contains(&SemanticLabel(1)))
            .count();
        assert!(hits as f64 / 1000.0 > 0.99);
    }

    #[test]
    fn cooccurrence_probability_is_respected() {
        let bcm = one_hot_bcm(1);
        let mut scm = identity_scm();
        scm.values[0][1] = 0.30;
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let map = compose_event_map(
            &script(BehaviorKind::StraightDriving, 10_000),
            &bcm,
            &scm,
            &mut rng,
        )
        .unwrap();
        let hits = map
            .segments
            .iter()
            .filter(|s| s.active.contains(&SemanticLabel(2)))
            .count();
        let f = hits as f64 / 10_000.0;
        assert!((f - 0.30).abs() < 0.03, "f = {f}");
    }

    #[test]
    fn init_centroid_uniform_moments_and_degenerate_range() {
        let mut ranges = CentroidInitRanges { ranges: vec![LabelRange {
            label: SemanticLabel(1),
            delay_lo_ns: 50.0,
            delay_hi_ns: 200.0,
            power_lo_db: -5.0,
            power_hi_db: -5.0,
            estimated: true,
        }] };
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let mut sum = 0.0;
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for _ in 0..10_000 {
            let (d, p) = init_centroid(SemanticLabel(1), &ranges, &mut rng).unwrap();
            assert_eq!(p, -5.0);
            sum += d;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let mean = sum / 10_000.0;
        assert!(lo >= 50.0 && hi <= 200.0);
        assert!((mean - 125.0).abs() < 2.0, "mean {mean}");

        ranges.ranges.clear();
        assert!(matches!(
            init_centroid(SemanticLabel(1), &ranges, &mut rng),
            Err(Error::MissingLabel(1))
        ));
    }

    #[test]
    fn buildings_sit_at_larger_delays_than_barriers() {
        let ranges = &EventMatrices::default_table().ranges;
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let mut building: Vec<f64> = Vec::new();
        let mut barrier: Vec<f64> = Vec::new();
        for _ in 0..10_000 {
            building.push(init_centroid(SemanticLabel(3), ranges, &mut rng).unwrap().0);
            barrier.push(init_centroid(SemanticLabel(1), ranges, &mut rng).unwrap().0);
        }
        building.sort_by(|a, b| a.partial_cmp(b).unwrap());
        barrier.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(building[5000] > barrier[5000]);
    }

    #[test]
    fn spawn_choices_are_uniform_over_active_set() {
        let ranges = &EventMatrices::default_table().ranges;
        let active = [SemanticLabel(1), SemanticLabel(2)];
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let mut ones = 0;
        for _ in 0..10_000 {
            let (label, delay, _) = spawn_on_birth(&active, ranges, &mut rng).unwrap();
            let r = ranges.get(label).unwrap();
            assert!(delay >= r.delay_lo_ns && delay <= r.delay_hi_ns);
            if label == SemanticLabel(1) {
                ones += 1;
            }
        }
        let f = ones as f64 / 10_000.0;
        assert!((f - 0.5).abs() < 0.02, "f = {f}");
    }

    #[test]
    fn estimate_matrices_hand_counts() {
        let snaps = vec![
            (BehaviorKind::StraightDriving, vec![SemanticLabel(1), SemanticLabel(2)]),
            (BehaviorKind::StraightDriving, vec![SemanticLabel(1)]),
        ];
        let est = estimate_matrices(&snaps).unwrap();
        assert_eq!(est.bcm.values[0][0], 1.0);
        assert_eq!(est.bcm.values[0][1], 0.5);
        assert_eq!(est.scm.values[0][1], 0.5);
        assert_eq!(est.scm.values[1][0], 1.0);
        assert!(est.behavior_observed[0]);
        assert!(!est.behavior_observed[1]);
    }

    #[test]
    fn identical_sets_give_all_ones_over_observed_labels() {
        let snaps: Vec<_> = (0..50)
            .map(|_| (BehaviorKind::LeftTurning, vec![SemanticLabel(3), SemanticLabel(7)]))
            .collect();
        let est = estimate_matrices(&snaps).unwrap();
        assert_eq!(est.scm.values[2][6], 1.0);
        assert_eq!(est.scm.values[6][2], 1.0);
    }

    #[test]
    fn composition_is_deterministic_under_seed() {
        let m = EventMatrices::default_table();
        let s = script(BehaviorKind::StraightDriving, 50);
        let a = compose_event_map(&s, &m.bcm, &m.scm, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = compose_event_map(&s, &m.bcm, &m.scm, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }
}
