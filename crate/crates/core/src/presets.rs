//! Canonical designs and scenarios used by the experiment presets and the
//! acceptance suite.

use std::sync::OnceLock;

use crate::channel::builtin;
use crate::design::{
    build_multi_design, build_single_design, Design, InteriorPinpoint, MultiDesignSpec,
    MultiOptionDesign, SingleOptionDesign, UtilitySpec,
};
use crate::mac::StepSchedule;
use crate::sim::{EstimatorMode, Scenario, Stage};

/// Sum-throughput design on the collision channel (b = 1.01, x* = 1).
pub fn collision_design() -> SingleOptionDesign {
    static CELL: OnceLock<SingleOptionDesign> = OnceLock::new();
    CELL.get_or_init(|| {
        build_single_design(
            &builtin::collision(),
            &UtilitySpec::sum_throughput_single(),
            0.01,
            0.01,
        )
        .expect("collision design builds")
    })
    .clone()
}

/// Energy-weighted design on the two-state fading channel (E = 0.3).
pub fn fading_design() -> SingleOptionDesign {
    static CELL: OnceLock<SingleOptionDesign> = OnceLock::new();
    CELL.get_or_init(|| {
        build_single_design(
            &builtin::fading_example(),
            &UtilitySpec::energy_weighted(0.3),
            0.01,
            0.01,
        )
        .expect("fading design builds")
    })
    .clone()
}

/// Two-option design bridging the high-rate head regime and the low-rate
/// tail regime with pinpoints at 4, 5, 6, and 10.
pub fn two_option_design() -> MultiOptionDesign {
    static CELL: OnceLock<MultiOptionDesign> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut spec = MultiDesignSpec::new(4, 10);
        spec.interior = vec![
            InteriorPinpoint::OptimalDirectionLine { k_hat: 5 },
            InteriorPinpoint::OptimalDirectionLine { k_hat: 6 },
        ];
        build_multi_design(
            &builtin::two_option_example(),
            &UtilitySpec::sum_throughput_multi(),
            &spec,
        )
        .expect("two-option design builds")
    })
    .clone()
}

/// Fading-channel convergence run: 8 users, 3000 slots, exponential
/// contention averaging with constant 1/300, constant step 0.05.
pub fn fading_scenario(seed: u64) -> Scenario {
    Scenario {
        channel: builtin::fading_example(),
        design: Design::Single(fading_design()),
        utility: UtilitySpec::energy_weighted(0.3),
        stages: vec![Stage { duration: 3000, user_delta: 8 }],
        estimator: EstimatorMode::Ema { lambda: 1.0 / 300.0 },
        step: StepSchedule::constant(0.05).expect("valid step"),
        seed,
        freeze_during_window: None,
        utility_ema_lambda: 1.0 / 300.0,
    }
}

/// Three-stage two-option run: 8 users, then 14 from slot 3001, then 6
/// from slot 6001.
pub fn three_stage_scenario(seed: u64) -> Scenario {
    Scenario {
        channel: builtin::two_option_example(),
        design: Design::Multi(two_option_design()),
        utility: UtilitySpec::sum_throughput_multi(),
        stages: vec![
            Stage { duration: 3000, user_delta: 8 },
            Stage { duration: 3000, user_delta: 6 },
            Stage { duration: 3000, user_delta: -8 },
        ],
        estimator: EstimatorMode::Ema { lambda: 1.0 / 300.0 },
        step: StepSchedule::constant(0.05).expect("valid step"),
        seed,
        freeze_during_window: None,
        utility_ema_lambda: 1.0 / 300.0,
    }
}
