//! Behavior semantics: 4-state Markov centroid dynamics, behavior
//! durations, turning delay offsets, and centroid power variation.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::DistributionSpec;
use crate::error::{Error, Result};
use crate::semantic::{BehaviorKind, SemanticLabel, SPEED_OF_LIGHT};

/// Markov states of a cluster centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MarkovState {
    Unchanged,
    Advancing,
    Delaying,
    BirthDeath,
}

impl MarkovState {
    pub const ALL: [MarkovState; 4] = [
        MarkovState::Unchanged,
        MarkovState::Advancing,
        MarkovState::Delaying,
        MarkovState::BirthDeath,
    ];

    pub fn index(self) -> usize {
        match self {
            MarkovState::Unchanged => 0,
            MarkovState::Advancing => 1,
            MarkovState::Delaying => 2,
            MarkovState::BirthDeath => 3,
        }
    }

    pub fn from_index(i: usize) -> MarkovState {
        Self::ALL[i]
    }
}

/// One behavior's dynamics: transition matrix, duration distribution
/// (log-normal over snapshot counts), and power-variation distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub kind: BehaviorKind,
    /// Row-stochastic 4x4 matrix over {Unchanged, Advancing, Delaying, BirthDeath}.
    pub transition: [[f64; 4]; 4],
    pub duration_dist: DistributionSpec,
    pub power_var_dist: DistributionSpec,
}

/// Printed rows may carry rounding error up to this before rejection.
const ROW_SUM_TOLERANCE: f64 = 2e-3;

impl BehaviorProfile {
    /// Checks row sums and renormalizes rounding-level error to exactly 1.
    pub fn validate_and_normalize(&mut self) -> Result<()> {
        for (i, row) in self.transition.iter_mut().enumerate() {
            if row.iter().any(|&p| p < 0.0) {
                return Err(Error::Validation(format!(
                    "{:?} transition row {} has a negative entry",
                    self.kind,
                    i + 1
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Validation(format!(
                    "{:?} transition row {} sums to {sum}, expected 1",
                    self.kind,
                    i + 1
                )));
            }
            for p in row.iter_mut() {
                *p /= sum;
            }
        }
        self.duration_dist.validate()?;
        self.power_var_dist.validate()?;
        if !matches!(self.duration_dist, DistributionSpec::LogNormal { .. })
            && !matches!(self.duration_dist, DistributionSpec::Normal { .. })
        {
            return Err(Error::Validation(format!(
                "{:?} duration family must be log-normal or normal",
                self.kind
            )));
        }
        Ok(())
    }
}

/// The three-record behavior library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorLibrary {
    pub profiles: Vec<BehaviorProfile>,
}

impl BehaviorLibrary {
    pub fn validate_and_normalize(&mut self) -> Result<()> {
        for kind in BehaviorKind::ALL {
            if !self.profiles.iter().any(|p| p.kind == kind) {
                return Err(Error::Validation(format!("missing behavior profile {kind:?}")));
            }
        }
        if self.profiles.len() != 3 {
            return Err(Error::Validation("behavior library must have exactly 3 records".into()));
        }
        for p in &mut self.profiles {
            p.validate_and_normalize()?;
        }
        Ok(())
    }

    pub fn profile(&self, kind: BehaviorKind) -> &BehaviorProfile {
        self.profiles.iter().find(|p| p.kind == kind).expect("validated library")
    }

    pub fn default_table() -> &'static BehaviorLibrary {
        static TABLE: OnceLock<BehaviorLibrary> = OnceLock::new();
        TABLE.get_or_init(|| {
            let mut lib: BehaviorLibrary =
                serde_json::from_str(include_str!("../data/behavior_library.json"))
                    .expect("embedded behavior library parses");
            lib.validate_and_normalize().expect("embedded behavior library validates");
            lib
        })
    }
}

/// Circular-arc turn parameters; with the snapshot rate they fix the
/// per-snapshot delay offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnGeometry {
    pub radius_m: f64,
    pub total_angle_rad: f64,
    pub duration_s: f64,
    pub snapshot_rate_hz: f64,
}

impl TurnGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.radius_m <= 0.0
            || self.duration_s <= 0.0
            || self.snapshot_rate_hz <= 0.0
            || self.total_angle_rad < 0.0
        {
            return Err(Error::Validation("turn geometry fields must be positive".into()));
        }
        Ok(())
    }
}

/// Per-snapshot delay offset of a turning trajectory, in ns.
pub fn turn_offset(geom: &TurnGeometry) -> f64 {
    let angle_per_snapshot = geom.total_angle_rad / geom.duration_s / geom.snapshot_rate_hz;
    2.0 * geom.radius_m / SPEED_OF_LIGHT * (1.0 - angle_per_snapshot.cos()) * 1e9
}

/// Evolving state of one cluster centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentroidState {
    pub label: SemanticLabel,
    pub markov_state: MarkovState,
    pub delay_ns: f64,
    /// Normalized-domain power, dB.
    pub power_db: f64,
    pub birth_snapshot: usize,
}

/// Draws the next Markov state from the row of the current one.
pub fn step_markov<R: Rng + ?Sized>(
    current: MarkovState,
    profile: &BehaviorProfile,
    rng: &mut R,
) -> MarkovState {
    let row = &profile.transition[current.index()];
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return MarkovState::from_index(j);
        }
    }
    MarkovState::BirthDeath
}

/// Result of advancing one centroid by one snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Alive(CentroidState),
    /// Cluster died (BirthDeath coin, or delay left the window).
    Died,
    /// Cluster survives and the caller should spawn a replacement cluster.
    Spawned(CentroidState),
}

/// Advances one centroid: Markov step, delay offset, power variation.
///
/// On a BirthDeath entry a fair coin picks death of this cluster or the
/// birth of an additional one, keeping birth and death rates matched.
/// A delay stepping out of [0, window] kills the cluster.
pub fn advance_centroid<R: Rng + ?Sized>(
    state: &CentroidState,
    behavior: BehaviorKind,
    profile: &BehaviorProfile,
    geom: Option<&TurnGeometry>,
    delay_bin_ns: f64,
    window_ns: f64,
    rng: &mut R,
) -> Result<StepOutcome> {
    let next_state = step_markov(state.markov_state, profile, rng);
    let offset = match behavior {
        BehaviorKind::StraightDriving => delay_bin_ns,
        BehaviorKind::LeftTurning | BehaviorKind::RightTurning => {
            let geom = geom.ok_or_else(|| {
                Error::Validation("turning behavior requires a TurnGeometry".into())
            })?;
            turn_offset(geom)
        }
    };
    let mut next = *state;
    next.markov_state = next_state;
    next.power_db += profile.power_var_dist.sample_one(rng);

    let spawn = if next_state == MarkovState::BirthDeath {
        if rng.random::<f64>() < 0.5 {
            return Ok(StepOutcome::Died);
        }
        true
    } else {
        false
    };
    match next_state {
        MarkovState::Advancing => next.delay_ns -= offset,
        MarkovState::Delaying => next.delay_ns += offset,
        MarkovState::Unchanged | MarkovState::BirthDeath => {}
    }
    if next.delay_ns <= 0.0 || next.delay_ns > window_ns {
        return Ok(StepOutcome::Died);
    }
    if spawn {
        Ok(StepOutcome::Spawned(next))
    } else {
        Ok(StepOutcome::Alive(next))
    }
}

/// Ceil of a duration draw, floored at one snapshot.
pub fn sample_duration<R: Rng + ?Sized>(profile: &BehaviorProfile, rng: &mut R) -> usize {
    let draw = profile.duration_dist.sample_one(rng);
    (draw.ceil() as i64).max(1) as usize
}

/// Row-normalized transition counts estimated from observed state paths.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEstimate {
    pub matrix: [[f64; 4]; 4],
    /// False where a row had no observed outgoing transition.
    pub observed: [bool; 4],
}

pub fn estimate_transition_matrix(sequences: &[Vec<MarkovState>]) -> Result<TransitionEstimate> {
    let mut counts = [[0usize; 4]; 4];
    for seq in sequences {
        for pair in seq.windows(2) {
            counts[pair[0].index()][pair[1].index()] += 1;
        }
    }
    let total: usize = counts.iter().flatten().sum();
    if total == 0 {
        return Err(Error::EmptyInput("no transitions observed".into()));
    }
    let mut matrix = [[0.0; 4]; 4];
    let mut observed = [false; 4];
    for i in 0..4 {
        let row_total: usize = counts[i].iter().sum();
        if row_total > 0 {
            observed[i] = true;
            for j in 0..4 {
                matrix[i][j] = counts[i][j] as f64 / row_total as f64;
            }
        }
    }
    Ok(TransitionEstimate { matrix, observed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_table_rows_are_stochastic() {
        let lib = BehaviorLibrary::default_table();
        for p in &lib.profiles {
            for row in &p.transition {
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn straight_unchanged_row_frequencies() {
        let lib = BehaviorLibrary::default_table();
        let p = lib.profile(BehaviorKind::StraightDriving);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[step_markov(MarkovState::Unchanged, p, &mut rng).index()] += 1;
        }
        let expected = [0.8851, 0.0500, 0.0445, 0.0204];
        for (c, e) in counts.iter().zip(expected) {
            let f = *c as f64 / n as f64;
            assert!((f - e).abs() < 0.01, "freq {f} vs {e}");
        }
    }

    #[test]
    fn left_turn_advancing_frequency() {
        let lib = BehaviorLibrary::default_table();
        let p = lib.profile(BehaviorKind::LeftTurning);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| step_markov(MarkovState::Unchanged, p, &mut rng) == MarkovState::Advancing)
            .count();
        let f = hits as f64 / n as f64;
        assert!((f - 0.1546).abs() < 0.01, "freq {f}");
    }

    #[test]
    fn identity_matrix_never_moves() {
        let mut p = BehaviorLibrary::default_table()
            .profile(BehaviorKind::StraightDriving)
            .clone();
        p.transition = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for s in MarkovState::ALL {
            for _ in 0..100 {
                assert_eq!(step_markov(s, &p, &mut rng), s);
            }
        }
    }

    #[test]
    fn turn_offset_analytic_cases() {
        let zero = TurnGeometry {
            radius_m: 10.0,
            total_angle_rad: 0.0,
            duration_s: 5.0,
            snapshot_rate_hz: 10.0,
        };
        assert_eq!(turn_offset(&zero), 0.0);

        // theta / (T * f_s) = pi  ->  offset = 4 r / c
        let pi_step = TurnGeometry {
            radius_m: 10.0,
            total_angle_rad: std::f64::consts::PI,
            duration_s: 1.0,
            snapshot_rate_hz: 1.0,
        };
        let off = turn_offset(&pi_step);
        assert!((off - 4.0 * 10.0 / SPEED_OF_LIGHT * 1e9).abs() < 0.1, "off {off}");
        assert!((off - 133.4).abs() < 0.1);
    }

    #[test]
    fn turn_offset_monotone_in_angle() {
        let mut last = -1.0;
        for i in 0..=1000 {
            let theta = std::f64::consts::PI * i as f64 / 1000.0;
            let off = turn_offset(&TurnGeometry {
                radius_m: 7.0,
                total_angle_rad: theta,
                duration_s: 1.0,
                snapshot_rate_hz: 1.0,
            });
            assert!(off >= last);
            last = off;
        }
    }

    #[test]
    fn straight_advancing_moves_exactly_one_bin() {
        let lib = BehaviorLibrary::default_table();
        let mut p = lib.profile(BehaviorKind::StraightDriving).clone();
        // force Advancing forever
        p.transition = [[0.0, 1.0, 0.0, 0.0]; 4];
        let state = CentroidState {
            label: SemanticLabel(1),
            markov_state: MarkovState::Unchanged,
            delay_ns: 100.0,
            power_db: -60.0,
            birth_snapshot: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        match advance_centroid(&state, BehaviorKind::StraightDriving, &p, None, 1.0, 334.0, &mut rng)
            .unwrap()
        {
            StepOutcome::Alive(next) => assert!((next.delay_ns - 99.0).abs() < 1e-12),
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn unchanged_keeps_delay_and_perturbs_power() {
        let lib = BehaviorLibrary::default_table();
        let mut p = lib.profile(BehaviorKind::StraightDriving).clone();
        p.transition = [[1.0, 0.0, 0.0, 0.0]; 4];
        let state = CentroidState {
            label: SemanticLabel(2),
            markov_state: MarkovState::Unchanged,
            delay_ns: 50.0,
            power_db: -55.0,
            birth_snapshot: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        match advance_centroid(&state, BehaviorKind::StraightDriving, &p, None, 1.0, 334.0, &mut rng)
            .unwrap()
        {
            StepOutcome::Alive(next) => {
                assert_eq!(next.delay_ns, 50.0);
                assert_ne!(next.power_db, -55.0);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn straight_power_variation_statistics() {
        let lib = BehaviorLibrary::default_table();
        let p = lib.profile(BehaviorKind::StraightDriving);
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let draws: Vec<f64> = (0..10_000).map(|_| p.power_var_dist.sample_one(&mut rng)).collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((mean - (-0.0013)).abs() < 0.03, "mean {mean}");
        assert!((sd - 0.9854).abs() / 0.9854 < 0.03, "sd {sd}");
    }

    #[test]
    fn duration_medians_match_lognormal_medians() {
        let lib = BehaviorLibrary::default_table();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for (kind, mu) in [
            (BehaviorKind::StraightDriving, 4.2741f64),
            (BehaviorKind::LeftTurning, 3.4918),
        ] {
            let p = lib.profile(kind);
            let mut draws: Vec<usize> =
                (0..100_000).map(|_| sample_duration(p, &mut rng)).collect();
            draws.sort_unstable();
            let median = draws[draws.len() / 2] as f64;
            let expected = mu.exp();
            assert!((median - expected).abs() / expected < 0.05, "{kind:?} median {median}");
        }
    }

    #[test]
    fn degenerate_duration_is_constant() {
        let mut p = BehaviorLibrary::default_table()
            .profile(BehaviorKind::StraightDriving)
            .clone();
        p.duration_dist = DistributionSpec::LogNormal { mu: 4.2741, sigma: 1e-12 };
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let expected = 4.2741f64.exp().ceil() as usize;
        for _ in 0..100 {
            assert_eq!(sample_duration(&p, &mut rng), expected);
        }
    }

    #[test]
    fn transition_estimation_hand_counts() {
        use MarkovState::*;
        let est = estimate_transition_matrix(&[vec![Unchanged, Unchanged, Unchanged, Advancing, Unchanged]])
            .unwrap();
        assert!((est.matrix[0][0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((est.matrix[0][1] - 1.0 / 3.0).abs() < 1e-12);
        assert!(est.observed[0] && est.observed[1]);
        assert!(!est.observed[2]);

        let est = estimate_transition_matrix(&[vec![Delaying, Delaying]]).unwrap();
        assert_eq!(est.matrix[2], [0.0, 0.0, 1.0, 0.0]);
        assert!(estimate_transition_matrix(&[]).is_err());
    }

    #[test]
    fn transition_estimation_recovers_right_turning_matrix() {
        let lib = BehaviorLibrary::default_table();
        let p = lib.profile(BehaviorKind::RightTurning);
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        // independent row simulations keep every row well observed
        let per_row = 50_000;
        let mut seqs = Vec::new();
        for start in MarkovState::ALL {
            let mut seq = Vec::with_capacity(per_row + 1);
            // restart at `start` after every transition to pin the row
            for _ in 0..per_row {
                seq.push(start);
                seq.push(step_markov(start, p, &mut rng));
            }
            // windows(2) also sees the stitching pairs; emit as separate 2-paths
            let pairs: Vec<Vec<MarkovState>> =
                seq.chunks(2).map(|c| c.to_vec()).collect();
            seqs.extend(pairs);
        }
        let est = estimate_transition_matrix(&seqs).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (est.matrix[i][j] - p.transition[i][j]).abs() < 0.01,
                    "entry ({i},{j}): {} vs {}",
                    est.matrix[i][j],
                    p.transition[i][j]
                );
            }
        }
    }
}
