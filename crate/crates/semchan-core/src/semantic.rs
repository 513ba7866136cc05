//! Core domain types: labels, multipath components, clusters, snapshots,
//! and the per-snapshot impulse-response assembly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Number of named scatterer categories (ids 1..=16); id 0 is "other".
pub const NUM_LABELS: u8 = 16;

/// One of 16 scatterer categories plus 0 = "other".
///
/// Id 0 is only ever assigned by the analyzer (no depth table, or no
/// usable match); the forward model never generates it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SemanticLabel(pub u8);

impl SemanticLabel {
    pub const OTHER: SemanticLabel = SemanticLabel(0);

    pub fn new(id: u8) -> Result<Self> {
        if id > NUM_LABELS {
            return Err(Error::Validation(format!(
                "semantic label id {id} out of range 0..=16"
            )));
        }
        Ok(SemanticLabel(id))
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        LABEL_NAMES[self.0 as usize]
    }

    /// All generator-visible labels (1..=16).
    pub fn all() -> impl Iterator<Item = SemanticLabel> {
        (1..=NUM_LABELS).map(SemanticLabel)
    }
}

const LABEL_NAMES: [&str; 17] = [
    "Other",
    "Metal Barrier",
    "Parked Vehicles",
    "Building-Commercial",
    "Building-Shanty",
    "Same Direction Vehicles",
    "Greenbelt-Shrubs",
    "Opposite Direction Vehicles",
    "Heavy Vehicles",
    "Greenbelt-Lawn/Trees",
    "Billboard/Bus Stop",
    "Street Debris",
    "Greenbelt-Dense Trees",
    "Two Wheeler",
    "Streetlight",
    "Mesh Fence",
    "Concrete Barrier",
];

/// One resolvable propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultipathComponent {
    /// Linear voltage gain, > 0.
    pub amplitude: f64,
    /// Radians in [0, 2*pi).
    pub phase: f64,
    /// Absolute delay in ns, >= 0.
    pub delay_ns: f64,
    pub label: SemanticLabel,
}

/// A centroid plus the member multipaths sharing one status label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticCluster {
    pub label: SemanticLabel,
    /// Centroid delay in ns.
    pub centroid_delay_ns: f64,
    /// Centroid power in dB, normalized domain.
    pub centroid_power_db: f64,
    pub members: Vec<MultipathComponent>,
    pub birth_snapshot: usize,
    pub alive: bool,
}

/// Driving behaviors fitted by the model. Exactly three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BehaviorKind {
    StraightDriving,
    LeftTurning,
    RightTurning,
}

impl BehaviorKind {
    pub const ALL: [BehaviorKind; 3] = [
        BehaviorKind::StraightDriving,
        BehaviorKind::LeftTurning,
        BehaviorKind::RightTurning,
    ];

    pub fn index(self) -> usize {
        match self {
            BehaviorKind::StraightDriving => 0,
            BehaviorKind::LeftTurning => 1,
            BehaviorKind::RightTurning => 2,
        }
    }
}

/// The channel state at one time index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time_index: usize,
    pub clusters: Vec<SemanticCluster>,
    pub behavior: BehaviorKind,
}

impl Snapshot {
    pub fn multipaths(&self) -> impl Iterator<Item = &MultipathComponent> {
        self.clusters.iter().flat_map(|c| c.members.iter())
    }

    pub fn mpc_count(&self) -> usize {
        self.clusters.iter().map(|c| c.members.len()).sum()
    }
}

/// An ordered sequence of snapshots with its timing and seed metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub snapshots: Vec<Snapshot>,
    /// Snapshot rate in Hz.
    pub snapshot_rate_hz: f64,
    /// Delay bin width in ns.
    pub delay_bin_ns: f64,
    pub seed: u64,
}

/// Uniform delay grid used when assembling impulse responses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayGrid {
    /// Bin width in ns.
    pub bin_ns: f64,
    pub n_bins: usize,
}

impl DelayGrid {
    pub fn new(bin_ns: f64, n_bins: usize) -> Result<Self> {
        if bin_ns <= 0.0 || n_bins == 0 {
            return Err(Error::Validation(
                "delay grid needs bin_ns > 0 and n_bins > 0".into(),
            ));
        }
        Ok(DelayGrid { bin_ns, n_bins })
    }

    /// Grid for a round-trip window of `d_max` meters at `bin_ns` resolution.
    pub fn for_max_distance(d_max_m: f64, bin_ns: f64) -> Result<Self> {
        let window_ns = 2.0 * d_max_m / SPEED_OF_LIGHT * 1e9;
        Self::new(bin_ns, (window_ns / bin_ns).ceil() as usize + 1)
    }

    pub fn window_ns(&self) -> f64 {
        self.bin_ns * (self.n_bins - 1) as f64
    }

    /// Round-half-up quantization of a delay to its bin index.
    pub fn quantize(&self, delay_ns: f64) -> Option<usize> {
        if delay_ns < 0.0 {
            return None;
        }
        let bin = (delay_ns / self.bin_ns + 0.5).floor() as usize;
        (bin < self.n_bins).then_some(bin)
    }

    pub fn delay_of_bin(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_ns
    }
}

/// Complex impulse-response sample per delay bin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub fn norm_sq(self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

/// Sum of a_l * e^{j phi_l} over MPCs, binned on the delay grid.
pub fn assemble_cir(snapshot: &Snapshot, grid: &DelayGrid) -> Result<Vec<Complex>> {
    let mut cir = vec![Complex::default(); grid.n_bins];
    for (index, mpc) in snapshot.multipaths().enumerate() {
        let bin = grid.quantize(mpc.delay_ns).ok_or(Error::DelayOutOfRange {
            index,
            delay_ns: mpc.delay_ns,
            max_ns: grid.window_ns(),
        })?;
        cir[bin].re += mpc.amplitude * mpc.phase.cos();
        cir[bin].im += mpc.amplitude * mpc.phase.sin();
    }
    Ok(cir)
}

/// Elementwise |h|^2, linear power.
pub fn pdp_of(cir: &[Complex]) -> Vec<f64> {
    cir.iter().map(|h| h.norm_sq()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn mpc(a: f64, phase: f64, delay: f64) -> MultipathComponent {
        MultipathComponent {
            amplitude: a,
            phase,
            delay_ns: delay,
            label: SemanticLabel(1),
        }
    }

    fn snapshot(members: Vec<MultipathComponent>) -> Snapshot {
        Snapshot {
            time_index: 0,
            clusters: vec![SemanticCluster {
                label: SemanticLabel(1),
                centroid_delay_ns: 0.0,
                centroid_power_db: 0.0,
                members,
                birth_snapshot: 0,
                alive: true,
            }],
            behavior: BehaviorKind::StraightDriving,
        }
    }

    #[test]
    fn empty_snapshot_gives_zero_cir() {
        let grid = DelayGrid::new(1.0, 16).unwrap();
        let cir = assemble_cir(&snapshot(vec![]), &grid).unwrap();
        assert!(cir.iter().all(|c| c.re == 0.0 && c.im == 0.0));
    }

    #[test]
    fn single_delta() {
        let grid = DelayGrid::new(1.0, 32).unwrap();
        let cir = assemble_cir(&snapshot(vec![mpc(1.0, 0.0, 10.0)]), &grid).unwrap();
        for (i, c) in cir.iter().enumerate() {
            if i == 10 {
                assert!((c.re - 1.0).abs() < 1e-12 && c.im.abs() < 1e-12);
            } else {
                assert_eq!((c.re, c.im), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn destructive_interference_cancels() {
        let grid = DelayGrid::new(1.0, 8).unwrap();
        let cir =
            assemble_cir(&snapshot(vec![mpc(1.0, 0.0, 3.0), mpc(1.0, PI, 3.0)]), &grid).unwrap();
        assert!(cir[3].re.abs() < 1e-12 && cir[3].im.abs() < 1e-12);
    }

    #[test]
    fn out_of_range_delay_names_the_mpc() {
        let grid = DelayGrid::new(1.0, 8).unwrap();
        let err = assemble_cir(&snapshot(vec![mpc(1.0, 0.0, 2.0), mpc(1.0, 0.0, 99.0)]), &grid)
            .unwrap_err();
        match err {
            Error::DelayOutOfRange { index, .. } => assert_eq!(index, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn pdp_values() {
        assert_eq!(pdp_of(&[Complex { re: 1.0, im: 0.0 }]), vec![1.0]);
        let pdp = pdp_of(&[Complex::default(), Complex { re: 3.0, im: 4.0 }]);
        assert_eq!(pdp, vec![0.0, 25.0]);
    }

    #[test]
    fn quantize_rounds_half_up() {
        let grid = DelayGrid::new(1.0, 16).unwrap();
        assert_eq!(grid.quantize(2.5), Some(3));
        assert_eq!(grid.quantize(2.49), Some(2));
        assert_eq!(grid.quantize(-0.1), None);
    }

    #[test]
    fn assembly_is_linear_over_disjoint_snapshots() {
        let grid = DelayGrid::new(1.0, 32).unwrap();
        let a = snapshot(vec![mpc(1.0, 0.3, 4.0), mpc(0.5, 1.1, 9.0)]);
        let b = snapshot(vec![mpc(2.0, 2.2, 15.0)]);
        let mut union = a.clone();
        union.clusters.extend(b.clusters.clone());
        let ca = assemble_cir(&a, &grid).unwrap();
        let cb = assemble_cir(&b, &grid).unwrap();
        let cu = assemble_cir(&union, &grid).unwrap();
        for i in 0..grid.n_bins {
            assert!((cu[i].re - (ca[i].re + cb[i].re)).abs() < 1e-12);
            assert!((cu[i].im - (ca[i].im + cb[i].im)).abs() < 1e-12);
        }
    }

    #[test]
    fn pdp_invariant_to_global_phase_rotation() {
        let grid = DelayGrid::new(1.0, 32).unwrap();
        let base = vec![mpc(1.0, 0.3, 4.0), mpc(0.7, 1.9, 4.0), mpc(0.2, 5.0, 20.0)];
        let rotated: Vec<_> = base
            .iter()
            .map(|m| MultipathComponent {
                phase: (m.phase + 1.234).rem_euclid(2.0 * PI),
                ..*m
            })
            .collect();
        let p0 = pdp_of(&assemble_cir(&snapshot(base), &grid).unwrap());
        let p1 = pdp_of(&assemble_cir(&snapshot(rotated), &grid).unwrap());
        for (a, b) in p0.iter().zip(&p1) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
