//! Built-in scenarios. Subband start frequencies are relative to the plan's f0.
//!
//! BWP-C1 has 8 subbands and BWP-C2 has 4, one per listed start frequency
//! (effective bandwidths 460.8 MHz and 230.4 MHz).

use crate::error::{Error, Result};
use crate::pipeline::AggregationConfig;
use crate::aggregation::AggregationMode;
use crate::spectrum::{AnchorPolicy, GeometryMode, Technology, SPEED_OF_LIGHT};
use crate::synth::OffsetModel;

use super::scenario::{
    Acquisition, BandSection, GeometrySection, OffsetsSection, PlanSection, RunSection, Scenario, SceneSection,
    SubsystemSection, SCHEMA_VERSION,
};

const BWP_WIDTH: f64 = 57.6e6;
const BWP_C1_BANDWIDTH: f64 = 1.21e9 + BWP_WIDTH;

const PRESETS: &[(&str, &str)] = &[
    ("ca-c1", "carrier aggregation, 4 x 100 MHz over 2.01 GHz, two subsystems"),
    ("ca-c2", "carrier aggregation, 5 subbands (1 GHz measured) over 3.46 GHz"),
    ("bwp-c1", "bandwidth parts, 8 x 57.6 MHz over 1.27 GHz, one subband per dwell"),
    ("bwp-c2", "bandwidth parts, 4 x 57.6 MHz over 1.07 GHz, one subband per dwell"),
    ("crosstech", "400 MHz OFDM block plus 1.76 GHz single-carrier block over 4.03 GHz"),
    ("headline", "bwp-c1, two targets 0.30 m apart; fused vs. each single subband"),
    ("resolution-limit", "ca-c1, target pairs 17.2 / 10.1 / 3.1 cm apart, cycled over trials"),
    ("bistatic-bwp-c1", "bwp-c1, bi-static at 90 degrees, targets 1.2 resolution cells apart"),
    ("bistatic-bwp-c2", "bwp-c2 with the scene of bistatic-bwp-c1"),
    ("aggregation", "ca-c1, static scene at 5 dB, 10 slots aggregated coherently"),
    ("dynamic", "ca-c1, moving targets with random per-slot phase, magnitude aggregation"),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|p| p.0)
}

pub fn describe(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|p| p.0 == name).map(|p| p.1)
}

fn band(start_ghz: f64, width_hz: f64) -> BandSection {
    BandSection {
        start_hz: start_ghz * 1e9,
        width_hz,
    }
}

fn subsystem(id: usize, subbands: Vec<BandSection>) -> SubsystemSection {
    SubsystemSection {
        id,
        anchor: AnchorPolicy::MinDelayMaxPower,
        technology: Technology::Ofdm,
        subbands,
    }
}

fn base(name: &str, f0_hz: f64, bandwidth_hz: f64, delta_f_hz: f64, subsystems: Vec<SubsystemSection>) -> Scenario {
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: name.into(),
        description: describe(name).unwrap_or_default().into(),
        plan: PlanSection {
            f0_hz,
            bandwidth_hz,
            delta_f_hz,
        },
        subsystems,
        geometry: GeometrySection {
            mode: GeometryMode::MonoStatic,
            baseline_m: 0.0,
            bistatic_angle_deg: 0.0,
        },
        scene: SceneSection {
            first_range_m: 3.0,
            range_jitter_m: 0.5,
            spacing_sets_m: vec![vec![0.5]],
            amplitudes: vec![1.0, 0.8],
            random_phase: true,
            anchor_amplitude: 10.0,
            on_grid: true,
            tau_max_s: 60e-9,
            speeds_mps: Vec::new(),
            random_slot_phase: false,
        },
        offsets: OffsetsSection {
            model: OffsetModel::default(),
            align_to_grid: true,
        },
        run: RunSection {
            snr_db: vec![5.0, 10.0, 20.0],
            noiseless: false,
            slots: 1,
            ifs_s: 1e-3,
            trials: 100,
            seed: 2024,
            acquisition: Acquisition::Simultaneous,
            aggregation: AggregationConfig::default(),
            methods: ["multiband", "fullband", "contiguous", "spotfi"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            match_radius_m: None,
            pdp_oversample: 4,
        },
    }
}

fn ca_c1(name: &str) -> Scenario {
    base(
        name,
        24.25e9,
        2.01e9,
        120e3,
        vec![
            subsystem(1, vec![band(0.0, 100e6), band(0.19, 100e6)]),
            subsystem(2, vec![band(1.63, 100e6), band(1.91, 100e6)]),
        ],
    )
}

fn ca_c2(name: &str) -> Scenario {
    base(
        name,
        24.25e9,
        3.46e9,
        120e3,
        vec![
            subsystem(1, vec![band(0.0, 100e6), band(0.19, 100e6), band(1.2, 400e6)]),
            subsystem(2, vec![band(2.88, 100e6), band(3.36, 100e6)]),
        ],
    )
}

fn bwp(name: &str, starts_1: &[f64], starts_2: &[f64], bandwidth_hz: f64) -> Scenario {
    let mut sc = base(
        name,
        24.25e9,
        bandwidth_hz,
        240e3,
        vec![
            subsystem(1, starts_1.iter().map(|&s| band(s, BWP_WIDTH)).collect()),
            subsystem(2, starts_2.iter().map(|&s| band(s, BWP_WIDTH)).collect()),
        ],
    );
    sc.run.acquisition = Acquisition::Staggered;
    sc
}

fn bwp_c1(name: &str) -> Scenario {
    bwp(name, &[0.02, 0.12, 0.22, 0.32], &[0.91, 1.01, 1.11, 1.21], BWP_C1_BANDWIDTH)
}

fn bwp_c2(name: &str) -> Scenario {
    bwp(name, &[0.02, 0.12], &[0.91, 1.01], 1.01e9 + BWP_WIDTH)
}

fn crosstech(name: &str) -> Scenario {
    let mut sc = base(
        name,
        24.25e9,
        4.03e9,
        240e3,
        vec![
            subsystem(1, vec![band(0.0, 400e6)]),
            subsystem(2, vec![band(2.27, 1.76e9)]),
        ],
    );
    sc.subsystems[1].technology = Technology::SingleCarrier;
    sc
}

/// Bi-static scene: targets on the bisector, 1.2 resolution cells of the
/// BWP-C1 virtual band apart at a 90 degree bi-static angle.
fn bistatic(mut sc: Scenario) -> Scenario {
    let beta = 90f64.to_radians();
    let cell = SPEED_OF_LIGHT / (2.0 * BWP_C1_BANDWIDTH * (beta / 2.0).cos());
    sc.geometry = GeometrySection {
        mode: GeometryMode::BiStatic,
        baseline_m: 4.0,
        bistatic_angle_deg: 90.0,
    };
    sc.scene.first_range_m = 1.7;
    sc.scene.range_jitter_m = 0.3;
    sc.scene.spacing_sets_m = vec![vec![1.2 * cell]];
    sc.scene.amplitudes = vec![1.0, 1.0];
    sc.run.snr_db = vec![20.0];
    sc.run.methods = vec!["multiband".into(), "fullband".into(), "contiguous".into()];
    sc
}

pub fn get(name: &str) -> Result<Scenario> {
    let sc = match name {
        "ca-c1" => ca_c1(name),
        "ca-c2" => ca_c2(name),
        "bwp-c1" => bwp_c1(name),
        "bwp-c2" => bwp_c2(name),
        "crosstech" => crosstech(name),
        "headline" => {
            let mut sc = bwp_c1(name);
            sc.scene.spacing_sets_m = vec![vec![0.30]];
            sc.scene.amplitudes = vec![1.0, 1.0];
            sc.run.noiseless = true;
            sc.run.snr_db = vec![20.0];
            sc.run.methods = ["multiband", "fullband"].iter().map(|s| s.to_string()).collect();
            sc.run.methods.extend((0..8).map(|n| format!("subband-{n}")));
            sc
        }
        "resolution-limit" => {
            let mut sc = ca_c1(name);
            sc.scene.spacing_sets_m = vec![vec![0.172], vec![0.101], vec![0.031]];
            sc.scene.amplitudes = vec![1.0, 1.0];
            sc.run.snr_db = vec![20.0];
            sc
        }
        "bistatic-bwp-c1" => bistatic(bwp_c1(name)),
        "bistatic-bwp-c2" => bistatic(bwp_c2(name)),
        "aggregation" => {
            let mut sc = ca_c1(name);
            sc.run.snr_db = vec![5.0];
            sc.run.slots = 10;
            sc.run.methods = ["multiband", "multiband-agg", "fullband"].iter().map(|s| s.to_string()).collect();
            sc
        }
        "dynamic" => {
            let mut sc = ca_c1(name);
            sc.scene.speeds_mps = vec![1.5, -1.0];
            sc.scene.random_slot_phase = true;
            sc.run.snr_db = vec![10.0];
            sc.run.slots = 10;
            sc.run.ifs_s = 1e-3;
            sc.run.aggregation = AggregationConfig {
                mode: AggregationMode::Dynamic,
                ..AggregationConfig::default()
            };
            sc.run.methods = ["multiband", "multiband-agg", "fullband"].iter().map(|s| s.to_string()).collect();
            sc
        }
        _ => return Err(Error::Scenario(format!("unknown preset '{name}'"))),
    };
    Ok(sc)
}
