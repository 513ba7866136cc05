//! The six-step generation pipeline: behavior durations, event map,
//! centroid initialization, Markov evolution, member synthesis, and
//! snapshot assembly.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::behavior::{
    advance_centroid, sample_duration, BehaviorLibrary, CentroidState, MarkovState, StepOutcome,
    TurnGeometry,
};
use crate::error::{Error, Result};
use crate::event::{
    compose_event_map, init_centroid, spawn_on_birth, EventMatrices, EventScript,
};
use crate::semantic::{ChannelRealization, DelayGrid, Snapshot};
use crate::status::{StatusLibrary, SynthesisContext};

/// Generator knobs; libraries travel separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub delay_bin_ns: f64,
    pub d_max_m: f64,
    pub snapshot_rate_hz: f64,
    pub two_way_pathloss: bool,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            delay_bin_ns: 1.0,
            d_max_m: 50.0,
            snapshot_rate_hz: 100.0,
            two_way_pathloss: false,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delay_bin_ns <= 0.0 || self.d_max_m <= 0.0 || self.snapshot_rate_hz <= 0.0 {
            return Err(Error::Validation(
                "delay_bin_ns, d_max_m and snapshot_rate_hz must be > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn delay_grid(&self) -> Result<DelayGrid> {
        DelayGrid::for_max_distance(self.d_max_m, self.delay_bin_ns)
    }
}

const DEFAULT_TURN_RADIUS_M: f64 = 10.0;
const DEFAULT_TURN_ANGLE_RAD: f64 = FRAC_PI_2;

/// Runs the full pipeline for one script.
pub fn generate(
    script: &EventScript,
    cfg: &GeneratorConfig,
    status: &StatusLibrary,
    behavior: &BehaviorLibrary,
    event: &EventMatrices,
) -> Result<ChannelRealization> {
    cfg.validate()?;
    script.validate()?;
    status.validate()?;
    event.validate()?;
    let grid = cfg.delay_grid()?;
    let ctx = SynthesisContext {
        window_ns: grid.window_ns(),
        two_way_pathloss: cfg.two_way_pathloss,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // step 1: durations
    let durations: Vec<usize> = script
        .tokens
        .iter()
        .map(|t| match t.duration {
            Some(d) => d.max(1),
            None => sample_duration(behavior.profile(t.behavior), &mut rng),
        })
        .collect();

    // step 2: event map
    let event_map = compose_event_map(script, &event.bcm, &event.scm, &mut rng)?;

    let mut live: Vec<CentroidState> = Vec::new();
    let mut snapshots: Vec<Snapshot> = Vec::new();
    let mut time_index = 0usize;

    for ((token, segment), duration) in script
        .tokens
        .iter()
        .zip(&event_map.segments)
        .zip(&durations)
    {
        let profile = behavior.profile(token.behavior);
        let geom = token.turn.unwrap_or(TurnGeometry {
            radius_m: DEFAULT_TURN_RADIUS_M,
            total_angle_rad: DEFAULT_TURN_ANGLE_RAD,
            duration_s: *duration as f64 / cfg.snapshot_rate_hz,
            snapshot_rate_hz: cfg.snapshot_rate_hz,
        });
        geom.validate()?;

        // segment boundary: labels leaving the active set take their
        // clusters with them; newly active labels get fresh centroids (step 3)
        live.retain(|c| segment.active.contains(&c.label));
        for &label in &segment.active {
            if !live.iter().any(|c| c.label == label) {
                let (delay_ns, power_db) = init_centroid(label, &event.ranges, &mut rng)?;
                live.push(CentroidState {
                    label,
                    markov_state: MarkovState::Unchanged,
                    delay_ns: delay_ns.min(ctx.window_ns),
                    power_db,
                    birth_snapshot: time_index,
                });
            }
        }

        for _ in 0..*duration {
            // step 5: re-synthesize members around each live centroid
            let mut clusters = Vec::with_capacity(live.len());
            for c in &live {
                let mut cluster = status.synthesize_cluster(
                    c.label,
                    c.delay_ns,
                    c.power_db,
                    c.birth_snapshot,
                    &ctx,
                    &mut rng,
                )?;
                cluster.birth_snapshot = c.birth_snapshot;
                clusters.push(cluster);
            }
            snapshots.push(Snapshot {
                time_index,
                clusters,
                behavior: token.behavior,
            });
            time_index += 1;

            // step 4: evolve centroids into the next snapshot
            let mut next_live = Vec::with_capacity(live.len() + 1);
            for c in &live {
                match advance_centroid(
                    c,
                    token.behavior,
                    profile,
                    Some(&geom),
                    cfg.delay_bin_ns,
                    ctx.window_ns,
                    &mut rng,
                )? {
                    StepOutcome::Alive(next) => next_live.push(next),
                    StepOutcome::Died => {}
                    StepOutcome::Spawned(next) => {
                        next_live.push(next);
                        let (label, delay_ns, power_db) =
                            spawn_on_birth(&segment.active, &event.ranges, &mut rng)?;
                        next_live.push(CentroidState {
                            label,
                            markov_state: MarkovState::Unchanged,
                            delay_ns: delay_ns.min(ctx.window_ns),
                            power_db,
                            birth_snapshot: time_index,
                        });
                    }
                }
            }
            live = next_live;
        }
    }

    Ok(ChannelRealization {
        snapshots,
        snapshot_rate_hz: cfg.snapshot_rate_hz,
        delay_bin_ns: cfg.delay_bin_ns,
        seed: cfg.seed,
    })
}

/// Summary counters over one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationStats {
    pub per_snapshot_mpc_counts: Vec<usize>,
    /// Cluster lifetimes (snapshots) per label; final-snapshot survivors included.
    pub per_label_lifetimes: BTreeMap<u8, Vec<usize>>,
    pub births: usize,
    pub deaths: usize,
}

/// Exact per-snapshot counts plus birth/death bookkeeping by
/// (label, birth_snapshot) cohort.
pub fn realization_stats(r: &ChannelRealization) -> Result<RealizationStats> {
    if r.snapshots.is_empty() {
        return Err(Error::EmptyInput("realization has no snapshots".into()));
    }
    let per_snapshot_mpc_counts: Vec<usize> =
        r.snapshots.iter().map(|s| s.mpc_count()).collect();

    type Cohort = (u8, usize);
    let cohorts = |s: &Snapshot| -> BTreeMap<Cohort, usize> {
        let mut m = BTreeMap::new();
        for c in &s.clusters {
            *m.entry((c.label.id(), c.birth_snapshot)).or_insert(0) += 1;
        }
        m
    };

    let mut births = 0usize;
    let mut deaths = 0usize;
    let mut per_label_lifetimes: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    let mut prev: BTreeMap<Cohort, usize> = BTreeMap::new();
    for (t, snap) in r.snapshots.iter().enumerate() {
        let cur = cohorts(snap);
        for (&(label, birth), &count) in &cur {
            if birth == t {
                births += count;
            }
            let before = prev.get(&(label, birth)).copied().unwrap_or(0);
            if count > before && birth != t {
                // should not happen: cohorts only shrink after birth
                return Err(Error::Validation(format!(
                    "cohort (label {label}, birth {birth}) grew at snapshot {t}"
                )));
            }
        }
        for (&(label, birth), &before) in &prev {
            let now = cur.get(&(label, birth)).copied().unwrap_or(0);
            if now < before {
                deaths += before - now;
                per_label_lifetimes
                    .entry(label)
                    .or_default()
                    .extend(std::iter::repeat(t - birth).take(before - now));
            }
        }
        prev = cur;
    }
    let last_t = r.snapshots.len();
    for (&(label, birth), &count) in &prev {
        per_label_lifetimes
            .entry(label)
            .or_default()
            .extend(std::iter::repeat(last_t - birth).take(count));
    }
    Ok(RealizationStats {
        per_snapshot_mpc_counts,
        per_label_lifetimes,
        births,
        deaths,
    })
}

/// Many realizations of the same script; run `i` is seeded with
/// `cfg.seed ^ i`. Parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn generate_batch(
    script: &EventScript,
    cfg: &GeneratorConfig,
    status: &StatusLibrary,
    behavior: &BehaviorLibrary,
    event: &EventMatrices,
    n_runs: usize,
) -> Result<Vec<ChannelRealization>> {
    use rayon::prelude::*;
    (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let run_cfg = GeneratorConfig { seed: cfg.seed ^ i, ..*cfg };
            generate(script, &run_cfg, status, behavior, event)
        })
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn generate_batch(
    script: &EventScript,
    cfg: &GeneratorConfig,
    status: &StatusLibrary,
    behavior: &BehaviorLibrary,
    event: &EventMatrices,
    n_runs: usize,
) -> Result<Vec<ChannelRealization>> {
    generate_batch_seq(script, cfg, status, behavior, event, n_runs)
}

/// Sequential fallback with identical output ordering and seeding.
pub fn generate_batch_seq(
    script: &EventScript,
    cfg: &GeneratorConfig,
    status: &StatusLibrary,
    behavior: &BehaviorLibrary,
    event: &EventMatrices,
    n_runs: usize,
) -> Result<Vec<ChannelRealization>> {
    (0..n_runs as u64)
        .map(|i| {
            let run_cfg = GeneratorConfig { seed: cfg.seed ^ i, ..*cfg };
            generate(script, &run_cfg, status, behavior, event)
        })
        .collect()
}
