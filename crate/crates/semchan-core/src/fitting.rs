//! Model-side parameter recovery: rebuilding status rows, behavior
//! profiles, and event matrices from labeled cluster observations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analyzer::SnapshotAnalysis;
use crate::behavior::{
    estimate_transition_matrix, BehaviorProfile, MarkovState, TransitionEstimate,
};
use crate::dist::{fit_mle, select_best_family, Family};
use crate::error::{Error, Result};
use crate::event::{estimate_matrices, EstimatedMatrices};
use crate::semantic::{BehaviorKind, ChannelRealization, SemanticLabel};
use crate::status::{normalize_power, ParamOrder, StatusLibrary, StatusProfile};

/// Minimum cluster observations per label before a row is fitted.
pub const MIN_LABEL_SAMPLES: usize = 30;

/// One observed cluster: a centroid plus its non-centroid members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterObservation {
    pub snapshot: usize,
    pub label: SemanticLabel,
    pub centroid_delay_ns: f64,
    /// Centroid power in the normalized (path-loss-free) domain, dB.
    pub centroid_power_db: f64,
    /// Total member count including the centroid.
    pub member_count: usize,
    /// Non-centroid members as (delay ns, measured power dB).
    pub satellites: Vec<(f64, f64)>,
}

/// Ground-truth observations straight out of a realization.
pub fn observations_from_realization(
    r: &ChannelRealization,
) -> Vec<ClusterObservation> {
    r.snapshots
        .iter()
        .flat_map(|s| {
            s.clusters.iter().map(move |c| ClusterObservation {
                snapshot: s.time_index,
                label: c.label,
                centroid_delay_ns: c.centroid_delay_ns,
                centroid_power_db: c.centroid_power_db,
                member_count: c.members.len(),
                satellites: c
                    .members
                    .iter()
                    .skip(1) // member 0 is the centroid itself
                    .map(|m| (m.delay_ns, 20.0 * m.amplitude.log10()))
                    .collect(),
            })
        })
        .collect()
}

/// Observations from analyzed PDP data. The strongest member in the
/// normalized domain stands in for the centroid.
pub fn observations_from_analysis(
    analyses: &[SnapshotAnalysis],
    wavelength_m: f64,
    two_way: bool,
) -> Result<Vec<ClusterObservation>> {
    let mut out = Vec::new();
    for snap in analyses {
        for cluster in &snap.clusters {
            let mut normalized: Vec<(f64, f64, f64)> = Vec::new(); // (delay, measured, normalized)
            for m in &cluster.members {
                let norm = normalize_power(m.power_db, m.delay_ns, wavelength_m, two_way)?;
                normalized.push((m.delay_ns, m.power_db, norm));
            }
            let centroid = normalized
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.2.partial_cmp(&b.2).unwrap())
                .map(|(i, _)| i)
                .ok_or_else(|| Error::EmptyInput("cluster has no members".into()))?;
            out.push(ClusterObservation {
                snapshot: snap.snapshot,
                label: cluster.label,
                centroid_delay_ns: normalized[centroid].0,
                centroid_power_db: normalized[centroid].2,
                member_count: normalized.len(),
                satellites: normalized
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != centroid)
                    .map(|(_, &(d, p, _))| (d, p))
                    .collect(),
            });
        }
    }
    Ok(out)
}

/// A label left out of a fit, with the sample count that disqualified it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkippedLabel {
    pub label: SemanticLabel,
    pub clusters_seen: usize,
    pub satellites_seen: usize,
}

/// Fitted status rows plus the labels that lacked data.
#[derive(Debug, Clone, PartialEq)]
pub struct StatusFit {
    pub library: StatusLibrary,
    pub skipped: Vec<SkippedLabel>,
}

/// Ordinary least squares y = slope * x + intercept.
fn ols(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::EmptyInput("regression needs paired samples".into()));
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate("regression abscissa is constant".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Fits one status row per label with enough observations.
pub fn fit_status_library(
    observations: &[ClusterObservation],
    wavelength_m: f64,
    two_way: bool,
    min_samples: usize,
) -> Result<StatusFit> {
    if observations.is_empty() {
        return Err(Error::EmptyInput("no cluster observations".into()));
    }
    let mut by_label: BTreeMap<u8, Vec<&ClusterObservation>> = BTreeMap::new();
    for obs in observations {
        by_label.entry(obs.label.id()).or_default().push(obs);
    }

    let mut profiles = Vec::new();
    let mut skipped = Vec::new();
    for (label_id, group) in by_label {
        let label = SemanticLabel(label_id);
        let counts: Vec<f64> = group.iter().map(|o| o.member_count as f64).collect();
        // per-satellite relative delay (signed) and normalized power drop
        let mut late = Vec::new();
        let mut early = Vec::new();
        let mut dtaus = Vec::new();
        let mut dps = Vec::new();
        for obs in &group {
            for &(delay_ns, measured_db) in &obs.satellites {
                let norm = normalize_power(measured_db, delay_ns, wavelength_m, two_way)?;
                let dtau = delay_ns - obs.centroid_delay_ns;
                if dtau >= 0.0 {
                    late.push(dtau);
                } else {
                    early.push(-dtau);
                }
                dtaus.push(dtau.abs());
                dps.push(obs.centroid_power_db - norm);
            }
        }
        let n_sat = dtaus.len();
        if group.len() < min_samples || n_sat < min_samples {
            skipped.push(SkippedLabel {
                label,
                clusters_seen: group.len(),
                satellites_seen: n_sat,
            });
            continue;
        }

        let number_dist = select_best_family(&counts, &Family::COMMON)?;
        // exponential MLE is the sample mean; an empty side inherits the other
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let (scale_late, scale_early) = match (late.is_empty(), early.is_empty()) {
            (false, false) => (mean(&late), mean(&early)),
            (false, true) => (mean(&late), mean(&late)),
            (true, false) => (mean(&early), mean(&early)),
            (true, true) => unreachable!("n_sat >= min_samples"),
        };
        let (slope, intercept) = ols(&dtaus, &dps)?;
        let residuals: Vec<f64> = dtaus
            .iter()
            .zip(&dps)
            .map(|(&x, &y)| y - (slope * x + intercept))
            .collect();
        let residual = fit_mle(Family::TLocationScale, &residuals)?;
        profiles.push(StatusProfile {
            label,
            name: label.name().to_string(),
            number_dist,
            delay_scale_late_ns: scale_late,
            delay_scale_early_ns: scale_early,
            decay_slope_db_per_ns: slope,
            decay_intercept_db: intercept,
            residual,
            side_probability_late: Some(late.len() as f64 / n_sat as f64),
            param_order: ParamOrder::AsPrinted,
        });
    }
    if profiles.is_empty() {
        return Err(Error::Degenerate(
            "every label fell below the sample threshold".into(),
        ));
    }
    Ok(StatusFit {
        library: StatusLibrary {
            carrier_wavelength_m: wavelength_m,
            profiles,
        },
        skipped,
    })
}

/// Raw material for one behavior fit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BehaviorObservations {
    pub state_paths: Vec<Vec<MarkovState>>,
    /// Segment lengths in snapshots.
    pub durations: Vec<f64>,
    /// Per-step centroid power increments, dB.
    pub power_deltas: Vec<f64>,
}

/// A fitted behavior profile with the transition observability mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedBehavior {
    pub kind: BehaviorKind,
    pub profile: BehaviorProfile,
    pub transition_observed: [bool; 4],
}

/// Classifies one centroid delay track into Markov states by comparing
/// each step against half the per-snapshot offset. A surviving
/// birth-death step moves no delay and therefore reads as Unchanged.
pub fn classify_steps(delays: &[f64], offset_ns: f64) -> Result<Vec<MarkovState>> {
    if delays.len() < 2 {
        return Err(Error::EmptyInput("track needs at least two snapshots".into()));
    }
    if offset_ns <= 0.0 {
        return Err(Error::Validation("offset must be > 0".into()));
    }
    let mut states = vec![MarkovState::Unchanged];
    for pair in delays.windows(2) {
        let d = pair[1] - pair[0];
        states.push(if d < -offset_ns / 2.0 {
            MarkovState::Advancing
        } else if d > offset_ns / 2.0 {
            MarkovState::Delaying
        } else {
            MarkovState::Unchanged
        });
    }
    Ok(states)
}

/// Fits one behavior profile from observed chains, durations, and
/// per-snapshot power increments. Rows of the transition matrix that
/// were never left keep a self-loop.
pub fn fit_behavior_profile(
    kind: BehaviorKind,
    obs: &BehaviorObservations,
) -> Result<FittedBehavior> {
    let TransitionEstimate { mut matrix, observed } =
        estimate_transition_matrix(&obs.state_paths)?;
    for i in 0..4 {
        if !observed[i] {
            matrix[i][i] = 1.0;
        }
    }
    let duration_dist = fit_mle(Family::LogNormal, &obs.durations)?;
    let power_var_dist = fit_mle(Family::Normal, &obs.power_deltas)?;
    let mut profile = BehaviorProfile {
        kind,
        transition: matrix,
        duration_dist,
        power_var_dist,
    };
    profile.validate_and_normalize()?;
    Ok(FittedBehavior {
        kind,
        profile,
        transition_observed: observed,
    })
}

/// A centroid trajectory reconstructed from a realization.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidTrack {
    pub label: SemanticLabel,
    pub behavior: BehaviorKind,
    pub start_snapshot: usize,
    pub delays_ns: Vec<f64>,
    pub powers_db: Vec<f64>,
}

/// Rebuilds centroid tracks by following each (label, birth snapshot)
/// cohort through consecutive snapshots; cohort mates pair up in delay
/// order. Tracks that straddle a behavior change split at the boundary.
pub fn extract_tracks(r: &ChannelRealization) -> Vec<CentroidTrack> {
    let mut open: BTreeMap<(u8, usize, usize), CentroidTrack> = BTreeMap::new();
    let mut done: Vec<CentroidTrack> = Vec::new();
    for (t, snap) in r.snapshots.iter().enumerate() {
        // rank cohort mates by delay so pairing is stable across snapshots
        let mut cohort_rank: BTreeMap<(u8, usize), Vec<(f64, f64)>> = BTreeMap::new();
        for c in &snap.clusters {
            cohort_rank
                .entry((c.label.id(), c.birth_snapshot))
                .or_default()
                .push((c.centroid_delay_ns, c.centroid_power_db));
        }
        let mut seen: Vec<(u8, usize, usize)> = Vec::new();
        for ((label, birth), mut members) in cohort_rank {
            members.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            for (rank, (delay, power)) in members.into_iter().enumerate() {
                let key = (label, birth, rank);
                seen.push(key);
                let continues = open
                    .get(&key)
                    .is_some_and(|track| track.behavior == snap.behavior);
                if continues {
                    let track = open.get_mut(&key).unwrap();
                    track.delays_ns.push(delay);
                    track.powers_db.push(power);
                } else {
                    if let Some(track) = open.remove(&key) {
                        done.push(track);
                    }
                    open.insert(
                            key,
                            CentroidTrack {
                                label: SemanticLabel(label),
                                behavior: snap.behavior,
                                start_snapshot: t,
                                delays_ns: vec![delay],
                                powers_db: vec![power],
                            },
                        );
                }
            }
        }
        // cohorts absent this snapshot have ended
        let ended: Vec<_> = open.keys().filter(|k| !seen.contains(k)).cloned().collect();
        for key in ended {
            done.push(open.remove(&key).unwrap());
        }
    }
    done.extend(open.into_values());
    done.sort_by_key(|t| (t.start_snapshot, t.label.id()));
    done
}

/// Gathers behavior observations per kind from reconstructed tracks.
/// `offset_ns` maps each behavior to its per-snapshot delay offset.
pub fn behavior_observations(
    r: &ChannelRealization,
    offset_ns: impl Fn(BehaviorKind) -> f64,
) -> Result<BTreeMap<BehaviorKind, BehaviorObservations>> {
    let mut out: BTreeMap<BehaviorKind, BehaviorObservations> = BTreeMap::new();
    for track in extract_tracks(r) {
        if track.delays_ns.len() < 2 {
            continue;
        }
        let entry = out.entry(track.behavior).or_default();
        entry
            .state_paths
            .push(classify_steps(&track.delays_ns, offset_ns(track.behavior))?);
        entry
            .power_deltas
            .extend(track.powers_db.windows(2).map(|w| w[1] - w[0]));
    }
    // durations: maximal runs of one behavior
    let mut run_start = 0usize;
    for t in 1..=r.snapshots.len() {
        if t == r.snapshots.len() || r.snapshots[t].behavior != r.snapshots[run_start].behavior {
            out.entry(r.snapshots[run_start].behavior)
                .or_default()
                .durations
                .push((t - run_start) as f64);
            run_start = t;
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("no usable tracks in realization".into()));
    }
    Ok(out)
}

/// Presence-frequency event matrices straight from a realization.
pub fn fit_event_matrices(r: &ChannelRealization) -> Result<EstimatedMatrices> {
    let labeled: Vec<(BehaviorKind, Vec<SemanticLabel>)> = r
        .snapshots
        .iter()
        .map(|s| (s.behavior, s.clusters.iter().map(|c| c.label).collect()))
        .collect();
    estimate_matrices(&labeled)
}
