//! Measurement-side pipeline: PDP thresholding, DBSCAN clustering in the
//! delay-power plane, depth-based label binding, and validation metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dist::ks_two_sample;
use crate::error::{Error, Result};
use crate::semantic::{
    assemble_cir, pdp_of, ChannelRealization, SemanticLabel, SPEED_OF_LIGHT,
};

/// One thresholded PDP bin treated as a multipath point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcPoint {
    pub bin: usize,
    pub delay_ns: f64,
    pub power_db: f64,
}

/// DBSCAN knobs over the (delay ns, power dB) plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
    pub delay_weight: f64,
    pub power_weight: f64,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams {
            eps: 5.0,
            min_pts: 3,
            delay_weight: 1.0,
            power_weight: 0.25,
        }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if self.eps <= 0.0 || self.min_pts == 0 || self.delay_weight < 0.0 || self.power_weight < 0.0
        {
            return Err(Error::Validation(
                "dbscan needs eps > 0, min_pts >= 1, nonnegative weights".into(),
            ));
        }
        Ok(())
    }

    pub fn distance(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        (self.delay_weight * (a.0 - b.0).powi(2) + self.power_weight * (a.1 - b.1).powi(2)).sqrt()
    }
}

const THRESHOLD_ABOVE_FLOOR_DB: f64 = 6.0;

/// Noise-floor estimate: median of the lowest-power quartile of nonzero bins.
pub fn auto_noise_floor_db(pdp: &[Vec<f64>]) -> Option<f64> {
    let mut powers: Vec<f64> = pdp
        .iter()
        .flatten()
        .filter(|&&p| p > 0.0)
        .map(|&p| 10.0 * p.log10())
        .collect();
    if powers.is_empty() {
        return None;
    }
    powers.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quartile = &powers[..(powers.len() / 4).max(1)];
    Some(quartile[quartile.len() / 2])
}

/// Keeps bins at least 6 dB above the noise floor, per snapshot.
pub fn threshold_pdp(
    pdp: &[Vec<f64>],
    delay_bin_ns: f64,
    noise_floor_db: Option<f64>,
) -> Result<Vec<Vec<MpcPoint>>> {
    if pdp.is_empty() {
        return Err(Error::EmptyInput("PDP matrix is empty".into()));
    }
    let floor = match noise_floor_db.or_else(|| auto_noise_floor_db(pdp)) {
        Some(f) => f,
        None => return Ok(vec![Vec::new(); pdp.len()]), // all-zero matrix
    };
    let gate = floor + THRESHOLD_ABOVE_FLOOR_DB;
    Ok(pdp
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|&(_, &p)| p > 0.0)
                .filter_map(|(bin, &p)| {
                    let db = 10.0 * p.log10();
                    (db >= gate).then_some(MpcPoint {
                        bin,
                        delay_ns: bin as f64 * delay_bin_ns,
                        power_db: db,
                    })
                })
                .collect()
        })
        .collect())
}

/// Cluster assignment: `Some(k)` or `None` for noise.
pub type Assignment = Vec<Option<usize>>;

/// Density-connectivity DBSCAN. Border points go to the first core point
/// in ascending delay order that reaches them; cluster ids follow the
/// ascending-delay order of their first core point.
pub fn dbscan_cluster(points: &[(f64, f64)], params: &DbscanParams) -> Result<Assignment> {
    params.validate()?;
    if points.is_empty() {
        return Err(Error::EmptyInput("dbscan needs at least one point".into()));
    }
    let n = points.len();
    // deterministic scan order: ascending delay, then power, then index
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .0
            .partial_cmp(&points[b].0)
            .unwrap()
            .then(points[a].1.partial_cmp(&points[b].1).unwrap())
            .then(a.cmp(&b))
    });
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if params.distance(points[i], points[j]) <= params.eps {
                neighbors[i].push(j); // includes self
            }
        }
    }
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= params.min_pts).collect();

    // union-find over mutually reachable core points
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        if core[i] {
            for &j in &neighbors[i] {
                if core[j] {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri] = rj;
                    }
                }
            }
        }
    }

    let mut assignment: Assignment = vec![None; n];
    let mut cluster_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut next_cluster = 0usize;
    for &i in &order {
        if core[i] {
            let root = find(&mut parent, i);
            let id = *cluster_of_root.entry(root).or_insert_with(|| {
                let id = next_cluster;
                next_cluster += 1;
                id
            });
            assignment[i] = Some(id);
        }
    }
    // border points: first reaching core in scan order
    for i in 0..n {
        if !core[i] {
            for &j in &order {
                if core[j] && params.distance(points[i], points[j]) <= params.eps {
                    assignment[i] = assignment[j];
                    break;
                }
            }
        }
    }
    Ok(assignment)
}

/// Per-frame average depth per semantic category, meters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DepthTable {
    pub frames: BTreeMap<usize, BTreeMap<u8, f64>>,
}

impl DepthTable {
    pub fn validate(&self, d_max_m: f64) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::EmptyInput("depth table has no frames".into()));
        }
        for (frame, cats) in &self.frames {
            for (&cat, &d) in cats {
                if d <= 0.0 || d > d_max_m {
                    return Err(Error::Validation(format!(
                        "frame {frame} category {cat}: depth {d} outside (0, {d_max_m}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Closest frame at or before `t`, else the earliest frame.
    pub fn for_frame(&self, t: usize) -> &BTreeMap<u8, f64> {
        self.frames
            .range(..=t)
            .next_back()
            .or_else(|| self.frames.iter().next())
            .map(|(_, v)| v)
            .expect("validated nonempty table")
    }
}

/// Eq-style depth normalization: affine map of raw values onto [0, d_max].
pub fn normalize_depth(raw: &[f64], d_max_m: f64) -> Result<Vec<f64>> {
    let min = raw.iter().cloned().fold(f64::MAX, f64::min);
    let max = raw.iter().cloned().fold(f64::MIN, f64::max);
    if raw.is_empty() || max <= min {
        return Err(Error::Degenerate("constant or empty depth image".into()));
    }
    Ok(raw.iter().map(|&d| (d - min) / (max - min) * d_max_m).collect())
}

/// Mean normalized depth per category; categories with no pixels are absent.
pub fn avg_depth(seg_map: &[u8], depth: &[f64]) -> Result<BTreeMap<u8, f64>> {
    if seg_map.len() != depth.len() {
        return Err(Error::Validation("segmentation and depth sizes differ".into()));
    }
    let mut sums: BTreeMap<u8, (f64, usize)> = BTreeMap::new();
    for (&cat, &d) in seg_map.iter().zip(depth) {
        let e = sums.entry(cat).or_insert((0.0, 0));
        e.0 += d;
        e.1 += 1;
    }
    Ok(sums.into_iter().map(|(c, (s, n))| (c, s / n as f64)).collect())
}

/// One labeled cluster of an analyzed snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCluster {
    pub cluster_id: usize,
    pub label: SemanticLabel,
    /// Mean member delay, ns.
    pub mean_delay_ns: f64,
    /// Mono-static echo distance c * mean_delay / 2, meters.
    pub distance_m: f64,
    pub members: Vec<MpcPoint>,
}

/// Binds clusters to labels by matching echo distance against the depth
/// table; ties break to the lowest label id. Without a depth table every
/// cluster gets label 0 ("other").
pub fn bind_labels(
    clusters: Vec<Vec<MpcPoint>>,
    depth_table: Option<&DepthTable>,
    frame: usize,
) -> Vec<LabeledCluster> {
    clusters
        .into_iter()
        .enumerate()
        .map(|(cluster_id, members)| {
            let mean_delay_ns =
                members.iter().map(|m| m.delay_ns).sum::<f64>() / members.len().max(1) as f64;
            let distance_m = SPEED_OF_LIGHT * mean_delay_ns * 1e-9 / 2.0;
            let label = match depth_table {
                None => SemanticLabel::OTHER,
                Some(table) => {
                    let cats = table.for_frame(frame);
                    cats.iter()
                        .min_by(|(ia, &da), (ib, &db)| {
                            (distance_m - da)
                                .abs()
                                .partial_cmp(&(distance_m - db).abs())
                                .unwrap()
                                .then(ia.cmp(ib))
                        })
                        .map(|(&c, _)| SemanticLabel(c))
                        .unwrap_or(SemanticLabel::OTHER)
                }
            };
            LabeledCluster {
                cluster_id,
                label,
                mean_delay_ns,
                distance_m,
                members,
            }
        })
        .collect()
}

/// Root-mean-square delay spread of one PDP snapshot, ns.
pub fn rmsds(pdp_snapshot: &[f64], delay_bin_ns: f64) -> Result<f64> {
    let total: f64 = pdp_snapshot.iter().sum();
    if total <= 0.0 {
        return Err(Error::Domain("rmsds undefined for zero total power".into()));
    }
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (bin, &p) in pdp_snapshot.iter().enumerate() {
        let tau = bin as f64 * delay_bin_ns;
        m1 += p * tau;
        m2 += p * tau * tau;
    }
    m1 /= total;
    m2 /= total;
    Ok((m2 - m1 * m1).max(0.0).sqrt())
}

/// Analyzed snapshot: labeled clusters plus its RMSDS when defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotAnalysis {
    pub snapshot: usize,
    pub clusters: Vec<LabeledCluster>,
    pub rmsds_ns: Option<f64>,
}

/// Thresholds, clusters, and labels every snapshot of a PDP matrix.
pub fn analyze_pdp(
    pdp: &[Vec<f64>],
    delay_bin_ns: f64,
    noise_floor_db: Option<f64>,
    params: &DbscanParams,
    depth_table: Option<&DepthTable>,
) -> Result<Vec<SnapshotAnalysis>> {
    let points = threshold_pdp(pdp, delay_bin_ns, noise_floor_db)?;
    let analyze_one = |(snapshot, (row, pts)): (usize, (&Vec<f64>, &Vec<MpcPoint>))| -> Result<SnapshotAnalysis> {
        let clusters = if pts.is_empty() {
            Vec::new()
        } else {
            let coords: Vec<(f64, f64)> = pts.iter().map(|p| (p.delay_ns, p.power_db)).collect();
            let assignment = dbscan_cluster(&coords, params)?;
            let n_clusters = assignment.iter().flatten().max().map_or(0, |&m| m + 1);
            let mut groups: Vec<Vec<MpcPoint>> = vec![Vec::new(); n_clusters];
            for (p, a) in pts.iter().zip(&assignment) {
                if let Some(k) = a {
                    groups[*k].push(*p);
                }
            }
            bind_labels(groups, depth_table, snapshot)
        };
        Ok(SnapshotAnalysis {
            snapshot,
            clusters,
            rmsds_ns: rmsds(row, delay_bin_ns).ok(),
        })
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        pdp.par_iter()
            .zip(points.par_iter())
            .enumerate()
            .map(analyze_one)
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        pdp.iter().zip(points.iter()).enumerate().map(analyze_one).collect()
    }
}

/// Always-sequential variant of [`analyze_pdp`] (bench baseline).
pub fn analyze_pdp_seq(
    pdp: &[Vec<f64>],
    delay_bin_ns: f64,
    noise_floor_db: Option<f64>,
    params: &DbscanParams,
    depth_table: Option<&DepthTable>,
) -> Result<Vec<SnapshotAnalysis>> {
    let points = threshold_pdp(pdp, delay_bin_ns, noise_floor_db)?;
    pdp.iter()
        .zip(points.iter())
        .enumerate()
        .map(|(snapshot, (row, pts))| {
            let clusters = if pts.is_empty() {
                Vec::new()
            } else {
                let coords: Vec<(f64, f64)> =
                    pts.iter().map(|p| (p.delay_ns, p.power_db)).collect();
                let assignment = dbscan_cluster(&coords, params)?;
                let n_clusters = assignment.iter().flatten().max().map_or(0, |&m| m + 1);
                let mut groups: Vec<Vec<MpcPoint>> = vec![Vec::new(); n_clusters];
                for (p, a) in pts.iter().zip(&assignment) {
                    if let Some(k) = a {
                        groups[*k].push(*p);
                    }
                }
                bind_labels(groups, depth_table, snapshot)
            };
            Ok(SnapshotAnalysis {
                snapshot,
                clusters,
                rmsds_ns: rmsds(row, delay_bin_ns).ok(),
            })
        })
        .collect()
}

/// PDP matrix of a realization (one row per snapshot).
pub fn realization_pdp(r: &ChannelRealization) -> Result<Vec<Vec<f64>>> {
    let grid = crate::semantic::DelayGrid::for_max_distance(
        // reconstruct the window from the longest delay present
        r.snapshots
            .iter()
            .flat_map(|s| s.multipaths())
            .map(|m| m.delay_ns)
            .fold(0.0, f64::max)
            * 1e-9
            * SPEED_OF_LIGHT
            / 2.0,
        r.delay_bin_ns,
    )?;
    r.snapshots
        .iter()
        .map(|s| Ok(pdp_of(&assemble_cir(s, &grid)?)))
        .collect()
}

/// Comparison report between two realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rmsds_a_ns: Vec<f64>,
    pub rmsds_b_ns: Vec<f64>,
    pub mean_rmsds_a_ns: f64,
    pub mean_rmsds_b_ns: f64,
    pub ks_distance: f64,
}

/// Per-snapshot RMSDS series of both realizations and the KS distance
/// between their pooled distributions.
pub fn compare_realizations(
    a: &ChannelRealization,
    b: &ChannelRealization,
) -> Result<ComparisonReport> {
    let series = |r: &ChannelRealization| -> Result<Vec<f64>> {
        if r.snapshots.is_empty() {
            return Err(Error::EmptyInput("realization has no snapshots".into()));
        }
        Ok(realization_pdp(r)?
            .iter()
            .filter_map(|row| rmsds(row, r.delay_bin_ns).ok())
            .collect())
    };
    let rmsds_a = series(a)?;
    let rmsds_b = series(b)?;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    let ks = ks_two_sample(&rmsds_a, &rmsds_b)?;
    Ok(ComparisonReport {
        mean_rmsds_a_ns: mean(&rmsds_a),
        mean_rmsds_b_ns: mean(&rmsds_b),
        rmsds_a_ns: rmsds_a,
        rmsds_b_ns: rmsds_b,
        ks_distance: ks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_db_gate_arithmetic() {
        // floor -100 dB; bins at -95 and -93 dB linear
        let pdp = vec![vec![10f64.powf(-9.5), 10f64.powf(-9.3)]];
        let pts = threshold_pdp(&pdp, 1.0, Some(-100.0)).unwrap();
        assert_eq!(pts[0].len(), 1);
        assert_eq!(pts[0][0].bin, 1);
    }

    #[test]
    fn all_zero_matrix_gives_empty_list() {
        let pdp = vec![vec![0.0; 8]; 3];
        let pts = threshold_pdp(&pdp, 1.0, None).unwrap();
        assert!(pts.iter().all(|p| p.is_empty()));
    }

    #[test]
    fn uniform_matrix_auto_mode_is_deterministic() {
        let pdp = vec![vec![1e-8; 16]; 4];
        let a = threshold_pdp(&pdp, 1.0, None).unwrap();
        let b = threshold_pdp(&pdp, 1.0, None).unwrap();
        assert_eq!(a, b);
        // the floor equals the uniform power, so nothing clears the 6 dB gate
        assert!(a.iter().all(|p| p.is_empty()));
    }

    #[test]
    fn three_separated_groups() {
        let mut pts = Vec::new();
        for center in [0.0, 100.0, 200.0] {
            for i in 0..10 {
                pts.push((center + i as f64 * 0.5, -60.0));
            }
        }
        let params = DbscanParams::default();
        let assignment = dbscan_cluster(&pts, &params).unwrap();
        assert!(assignment.iter().all(|a| a.is_some()));
        let ids: std::collections::BTreeSet<_> = assignment.iter().flatten().collect();
        assert_eq!(ids.len(), 3);
        // ids follow ascending delay order
        assert_eq!(assignment[0], Some(0));
        assert_eq!(assignment[10], Some(1));
        assert_eq!(assignment[20], Some(2));
    }

    #[test]
    fn single_point_is_noise_when_min_pts_two() {
        let params = DbscanParams { min_pts: 2, ..Default::default() };
        let assignment = dbscan_cluster(&[(10.0, -60.0)], &params).unwrap();
        assert_eq!(assignment, vec![None]);
    }

    #[test]
    fn bind_labels_mean_delay_and_distance() {
        let members: Vec<MpcPoint> = [100.0, 110.0, 90.0]
            .iter()
            .map(|&d| MpcPoint { bin: d as usize, delay_ns: d, power_db: -60.0 })
            .collect();
        let mut frames = BTreeMap::new();
        frames.insert(0usize, BTreeMap::from([(1u8, 15.0f64), (2u8, 40.0f64)]));
        let table = DepthTable { frames };
        let labeled = bind_labels(vec![members], Some(&table), 0);
        assert!((labeled[0].mean_delay_ns - 100.0).abs() < 1e-12);
        assert!((labeled[0].distance_m - 14.99).abs() < 0.01);
        assert_eq!(labeled[0].label, SemanticLabel(1));
    }

    #[test]
    fn equidistant_depths_tie_to_lowest_id() {
        let members = vec![MpcPoint { bin: 100, delay_ns: 100.0, power_db: -60.0 }];
        let mut frames = BTreeMap::new();
        // identical depths force an exact tie between categories 2 and 1
        let d = SPEED_OF_LIGHT * 100.0e-9 / 2.0;
        frames.insert(0usize, BTreeMap::from([(2u8, d + 3.0), (1u8, d + 3.0)]));
        let table = DepthTable { frames };
        let labeled = bind_labels(vec![members], Some(&table), 0);
        assert_eq!(labeled[0].label, SemanticLabel(1));
    }

    #[test]
    fn bind_without_table_is_other() {
        let members = vec![MpcPoint { bin: 10, delay_ns: 10.0, power_db: -60.0 }];
        let labeled = bind_labels(vec![members], None, 0);
        assert_eq!(labeled[0].label, SemanticLabel::OTHER);
    }

    #[test]
    fn bind_is_scale_consistent() {
        let mk = |d: f64| vec![MpcPoint { bin: 0, delay_ns: d, power_db: -60.0 }];
        let table = |scale: f64| {
            let mut frames = BTreeMap::new();
            frames.insert(0usize, BTreeMap::from([(1u8, 12.0 * scale), (2u8, 20.0 * scale)]));
            DepthTable { frames }
        };
        let l1 = bind_labels(vec![mk(100.0)], Some(&table(1.0)), 0);
        let l2 = bind_labels(vec![mk(200.0)], Some(&table(2.0)), 0);
        assert_eq!(l1[0].label, l2[0].label);
    }

    #[test]
    fn depth_normalization_endpoints_and_means() {
        let raw: Vec<f64> = (0..=255).map(|v| v as f64).collect();
        let norm = normalize_depth(&raw, 50.0).unwrap();
        assert_eq!(norm[0], 0.0);
        assert_eq!(norm[255], 50.0);

        let seg = vec![1u8, 1, 2];
        let depth = vec![10.0, 20.0, 7.0];
        let table = avg_depth(&seg, &depth).unwrap();
        assert_eq!(table[&1], 15.0);
        assert_eq!(table[&2], 7.0);
        assert!(!table.contains_key(&3));

        assert!(normalize_depth(&[5.0, 5.0], 50.0).is_err());
    }

    #[test]
    fn rmsds_analytic_cases() {
        // single tap
        let mut pdp = vec![0.0; 200];
        pdp[17] = 2.5;
        assert_eq!(rmsds(&pdp, 1.0).unwrap(), 0.0);
        // equal two-tap at 0 and 100 ns
        let mut pdp = vec![0.0; 101];
        pdp[0] = 1.0;
        pdp[100] = 1.0;
        assert!((rmsds(&pdp, 1.0).unwrap() - 50.0).abs() < 1e-9);
        // weighted 1:3
        pdp[100] = 3.0;
        let expected = (7500.0f64 - 75.0 * 75.0).sqrt();
        assert!((rmsds(&pdp, 1.0).unwrap() - expected).abs() < 1e-9);
        assert!((expected - 43.30).abs() < 0.01);
        // zero power
        assert!(rmsds(&[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn rmsds_scale_and_shift_invariances() {
        let pdp: Vec<f64> = vec![0.0, 1.0, 0.5, 2.0, 0.0, 0.25];
        let base = rmsds(&pdp, 1.0).unwrap();
        let scaled: Vec<f64> = pdp.iter().map(|p| p * 7.5).collect();
        assert!((rmsds(&scaled, 1.0).unwrap() - base).abs() < 1e-12);
        let mut shifted = vec![0.0; 3];
        shifted.extend(&pdp);
        assert!((rmsds(&shifted, 1.0).unwrap() - base).abs() < 1e-9);
    }
}
