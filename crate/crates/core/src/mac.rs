//! Per-user adaptation rules and step-size schedules.

use crate::contention::{invert_qv_star_multi, invert_qv_star_single, DirectionVector};
use crate::design::{Design, MultiOptionDesign, SingleOptionDesign};
use crate::error::{Error, Result};

/// Step-size law driving the probability updates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepKind {
    Constant { alpha: f64 },
    /// alpha(t) = a / (t + t0)
    Decreasing { a: f64, t0: f64 },
}

/// Declared bound family for the measurement bias beta(t).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BiasBound {
    Zero,
    Constant { value: f64 },
    /// beta(t) = coeff / (t + 1)^exponent
    Power { coeff: f64, exponent: f64 },
}

impl Default for BiasBound {
    fn default() -> Self {
        BiasBound::Zero
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepSchedule {
    #[serde(flatten)]
    pub kind: StepKind,
    #[serde(default)]
    pub bias: BiasBound,
}

impl StepSchedule {
    pub fn constant(alpha: f64) -> Result<Self> {
        if !(0.0 < alpha && alpha < 1.0) {
            return Err(Error::Invalid(format!("constant step must lie in (0,1), got {alpha}")));
        }
        Ok(Self { kind: StepKind::Constant { alpha }, bias: BiasBound::Zero })
    }

    pub fn decreasing(a: f64, t0: f64) -> Result<Self> {
        if !(a > 0.0) || !(t0 > 0.0) {
            return Err(Error::Invalid("decreasing schedule needs a > 0 and t0 > 0".into()));
        }
        Ok(Self { kind: StepKind::Decreasing { a, t0 }, bias: BiasBound::Zero })
    }

    pub fn with_bias(mut self, bias: BiasBound) -> Self {
        self.bias = bias;
        self
    }

    pub fn alpha(&self, t: u64) -> f64 {
        match self.kind {
            StepKind::Constant { alpha } => alpha,
            StepKind::Decreasing { a, t0 } => (a / (t as f64 + t0)).min(1.0 - 1e-12),
        }
    }
}

/// Convergence regime a schedule is validated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    /// Diminishing steps; convergence with probability one.
    ProbabilityOne,
    /// Constant steps; weak convergence to a neighborhood.
    Weak,
}

#[derive(Debug, Clone)]
pub struct ScheduleReport {
    pub mode: ScheduleMode,
    /// Human-readable statement of the applicable convergence regime.
    pub regime: String,
    pub checks: Vec<(String, bool, String)>,
}

impl ScheduleReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|(_, ok, _)| *ok)
    }
}

/// Structural validation of a step schedule against the requirements of
/// the chosen convergence regime.
pub fn validate_schedule(s: &StepSchedule, mode: ScheduleMode) -> ScheduleReport {
    let mut checks = Vec::new();
    match mode {
        ScheduleMode::ProbabilityOne => {
            match s.kind {
                StepKind::Decreasing { a, t0 } => {
                    checks.push((
                        "sum(alpha) diverges".into(),
                        a > 0.0,
                        format!("harmonic family a/(t+t0) with a={a}, t0={t0}"),
                    ));
                    checks.push((
                        "sum(alpha^2) converges".into(),
                        true,
                        "square of the harmonic family is summable".into(),
                    ));
                }
                StepKind::Constant { alpha } => {
                    checks.push((
                        "sum(alpha^2) converges".into(),
                        false,
                        format!("constant step {alpha} has a divergent square sum"),
                    ));
                }
            }
            let (ok, detail) = match s.bias {
                BiasBound::Zero => (true, "bias bound is identically zero".into()),
                BiasBound::Constant { value } => (
                    value == 0.0,
                    format!("constant bias bound {value} makes sum(alpha*beta) diverge"),
                ),
                BiasBound::Power { coeff, exponent } => (
                    exponent > 0.0 || coeff == 0.0,
                    format!("power bias bound with exponent {exponent}"),
                ),
            };
            checks.push(("sum(alpha*beta) converges".into(), ok, detail));
            ScheduleReport {
                mode,
                regime: "probability-one convergence (diminishing step sizes)".into(),
                checks,
            }
        }
        ScheduleMode::Weak => {
            match s.kind {
                StepKind::Constant { alpha } => {
                    checks.push((
                        "step bounded within (0,1)".into(),
                        0.0 < alpha && alpha < 1.0,
                        format!("constant step {alpha}"),
                    ));
                    let sqrt_a = alpha.sqrt();
                    let (ok, detail) = match s.bias {
                        BiasBound::Zero => (true, "bias bound is identically zero".into()),
                        BiasBound::Constant { value } => (
                            value <= sqrt_a,
                            format!("constant bias bound {value} vs sqrt(alpha)={sqrt_a:.6}"),
                        ),
                        BiasBound::Power { coeff, exponent } => (
                            exponent > 0.0 || coeff <= sqrt_a,
                            format!("power bias bound eventually below sqrt(alpha)={sqrt_a:.6}"),
                        ),
                    };
                    checks.push(("beta eventually below sqrt(alpha)".into(), ok, detail));
                }
                StepKind::Decreasing { .. } => {
                    checks.push((
                        "step bounded away from zero".into(),
                        false,
                        "decreasing schedule has no positive lower bound".into(),
                    ));
                }
            }
            ScheduleReport {
                mode,
                regime: "weak convergence to a neighborhood (constant step size)".into(),
                checks,
            }
        }
    }
}

/// Adaptation state of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub user_id: u32,
    /// Current M-length probability vector p*d.
    profile: Vec<f64>,
    /// Direction retained while the transmission probability is zero.
    last_direction: DirectionVector,
    pub step: StepSchedule,
}

impl UserState {
    /// A user starting from the zero profile with the given fallback direction.
    pub fn new(user_id: u32, initial_direction: DirectionVector, step: StepSchedule) -> Self {
        let profile = vec![0.0; initial_direction.len()];
        Self { user_id, profile, last_direction: initial_direction, step }
    }

    pub fn with_profile(
        user_id: u32,
        profile: Vec<f64>,
        fallback: DirectionVector,
        step: StepSchedule,
    ) -> Result<Self> {
        let mut state = Self::new(user_id, fallback, step);
        state.set_profile(profile)?;
        Ok(state)
    }

    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    pub fn p(&self) -> f64 {
        self.profile.iter().sum()
    }

    pub fn direction(&self) -> &DirectionVector {
        &self.last_direction
    }

    fn set_profile(&mut self, v: Vec<f64>) -> Result<()> {
        let p: f64 = v.iter().sum();
        if v.iter().any(|&e| !(-1e-12..=1.0 + 1e-12).contains(&e)) || p > 1.0 + 1e-9 {
            return Err(Error::Invalid("profile entries must form a subprobability vector".into()));
        }
        if p > 0.0 {
            self.last_direction = DirectionVector::new(v.iter().map(|&e| e / p).collect())?;
        }
        self.profile = v;
        Ok(())
    }
}

/// Probability target of the single-option adaptation rule.
pub fn single_target(design: &SingleOptionDesign, qv_meas: f64) -> Result<f64> {
    invert_qv_star_single(design, qv_meas)
}

/// Target profile vector of the multi-option adaptation rule.
pub fn multi_target(design: &MultiOptionDesign, qv_meas: f64) -> Result<Vec<f64>> {
    let k_hat = invert_qv_star_multi(design, qv_meas)?;
    Ok(design.profile_at(k_hat))
}

/// Target profile vector for either design flavor.
pub fn target_vector(design: &Design, qv_meas: f64) -> Result<Vec<f64>> {
    match design {
        Design::Single(d) => {
            let p = single_target(d, qv_meas)?;
            Ok(d.params.direction().entries().iter().map(|&e| p * e).collect())
        }
        Design::Multi(d) => multi_target(d, qv_meas),
    }
}

/// Blends the user's probability vector toward the target with the
/// schedule's step size for slot t. The (p, d) decomposition is recovered
/// from the blended vector; a zero vector keeps the previous direction.
pub fn apply_update(state: &mut UserState, target: &[f64], t: u64) {
    debug_assert_eq!(target.len(), state.profile.len());
    let alpha = state.step.alpha(t);
    for (cur, &tgt) in state.profile.iter_mut().zip(target) {
        *cur = (1.0 - alpha) * *cur + alpha * tgt;
    }
    let p: f64 = state.profile.iter().sum();
    if p > 0.0 {
        if let Ok(d) = DirectionVector::new(state.profile.iter().map(|&e| e / p).collect()) {
            state.last_direction = d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use proptest::prelude::*;

    #[test]
    fn apply_update_scalar_case() {
        let step = StepSchedule::constant(0.05).unwrap();
        let mut user =
            UserState::with_profile(0, vec![0.5], DirectionVector::single(), step).unwrap();
        apply_update(&mut user, &[0.1], 1);
        assert!((user.p() - 0.48).abs() < 1e-15);
    }

    #[test]
    fn apply_update_fixed_point() {
        let step = StepSchedule::constant(0.3).unwrap();
        let d = DirectionVector::new(vec![0.25, 0.75]).unwrap();
        let mut user =
            UserState::with_profile(0, vec![0.1, 0.3], d, step).unwrap();
        let target = vec![0.1, 0.3];
        apply_update(&mut user, &target, 7);
        assert!((user.profile()[0] - 0.1).abs() < 1e-15);
        assert!((user.profile()[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn apply_update_vector_blend() {
        let step = StepSchedule::constant(0.5).unwrap();
        let d = DirectionVector::new(vec![1.0, 0.0]).unwrap();
        let mut user =
            UserState::with_profile(0, vec![0.2, 0.0], d, step).unwrap();
        apply_update(&mut user, &[0.0, 0.4], 1);
        assert!((user.profile()[0] - 0.1).abs() < 1e-15);
        assert!((user.profile()[1] - 0.2).abs() < 1e-15);
        assert!((user.p() - 0.3).abs() < 1e-15);
        assert!((user.direction().get(0) - 1.0 / 3.0).abs() < 1e-12);
        assert!((user.direction().get(1) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_profile_keeps_previous_direction() {
        let step = StepSchedule::constant(0.5).unwrap();
        let d = DirectionVector::new(vec![1.0, 0.0]).unwrap();
        let mut user = UserState::new(3, d.clone(), step);
        apply_update(&mut user, &[0.0, 0.0], 1);
        assert_eq!(user.p(), 0.0);
        assert!(user.direction().approx_eq(&d, 0.0));
    }

    #[test]
    fn schedule_validation_examples() {
        let harmonic = StepSchedule::decreasing(1.0, 1.0)
            .unwrap()
            .with_bias(BiasBound::Power { coeff: 1.0, exponent: 1.0 });
        assert!(validate_schedule(&harmonic, ScheduleMode::ProbabilityOne).all_pass());

        let constant = StepSchedule::constant(0.05)
            .unwrap()
            .with_bias(BiasBound::Constant { value: 0.05f64.sqrt() });
        assert!(validate_schedule(&constant, ScheduleMode::Weak).all_pass());

        let constant_p1 = validate_schedule(&constant, ScheduleMode::ProbabilityOne);
        assert!(!constant_p1.all_pass());
    }

    #[test]
    fn target_maps_are_monotone() {
        let single = presets::collision_design();
        let mut last = -1.0;
        for i in 0..=200 {
            let qv = i as f64 / 200.0;
            let p = single_target(&single, qv).unwrap();
            assert!(p >= last - 1e-12, "single target decreased at qv={qv}");
            last = p;
        }

        let multi = presets::two_option_design();
        let mut last_k = f64::INFINITY;
        for i in 0..=200 {
            let qv = i as f64 / 200.0;
            let k = crate::contention::invert_qv_star_multi(&multi, qv).unwrap();
            assert!(k <= last_k + 1e-9, "estimate increased at qv={qv}");
            last_k = k;
        }
    }

    #[test]
    fn identical_feedback_yields_identical_targets() {
        let design = presets::fading_design();
        let a = single_target(&design, 0.87).unwrap();
        let b = single_target(&design, 0.87).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn update_preserves_validity(
            p0 in 0.0f64..=1.0,
            split in 0.0f64..=1.0,
            tp in 0.0f64..=1.0,
            tsplit in 0.0f64..=1.0,
            alpha in 1e-6f64..1.0,
        ) {
            let d = DirectionVector::new(vec![0.5, 0.5]).unwrap();
            let step = StepSchedule::constant(alpha).unwrap();
            let mut user = UserState::with_profile(
                0,
                vec![p0 * split, p0 * (1.0 - split)],
                d,
                step,
            ).unwrap();
            let target = vec![tp * tsplit, tp * (1.0 - tsplit)];
            apply_update(&mut user, &target, 1);
            let p = user.p();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
            for &e in user.profile() {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&e));
            }
        }
    }
}
