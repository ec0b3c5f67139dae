//! Slotted Monte Carlo simulator of the closed adaptation loop, the mean
//! ODE integrator, and the estimator bias probe.
//!
//! A simulation run is sequential and deterministic given its seed; the
//! random generator is ChaCha8 seeded from the scenario seed, and every
//! draw happens in a fixed order (channel state, then users in id order,
//! then per-packet successes, then the virtual packet).

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::LinkChannel;
use crate::contention::{qv_profiles, TransmitProfile};
use crate::design::{Design, UtilitySpec};
use crate::error::{Error, Result};
use crate::mac::{apply_update, target_vector, StepSchedule, UserState};

/// How the receiver turns per-slot virtual packet indicators into feedback.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EstimatorMode {
    /// Average over non-overlapping windows of q slots; feedback is emitted
    /// once per window.
    Window { q: u32 },
    /// Exponential moving average updated and emitted every slot.
    Ema { lambda: f64 },
}

/// Receiver-side estimator of the channel contention measure.
#[derive(Debug, Clone)]
pub struct ReceiverEstimator {
    mode: EstimatorMode,
    estimate: f64,
    successes: u32,
    observed: u32,
}

impl ReceiverEstimator {
    pub fn new(mode: EstimatorMode) -> Result<Self> {
        match mode {
            EstimatorMode::Window { q } if q == 0 => {
                return Err(Error::Invalid("window length must be >= 1".into()))
            }
            EstimatorMode::Ema { lambda } if !(0.0 < lambda && lambda <= 1.0) => {
                return Err(Error::Invalid(format!("ema lambda must lie in (0,1], got {lambda}")))
            }
            _ => {}
        }
        // the contention estimate starts at 1 (an idle channel)
        Ok(Self { mode, estimate: 1.0, successes: 0, observed: 0 })
    }

    pub fn estimate(&self) -> f64 {
        self.estimate
    }

    /// Feeds one virtual packet indicator; returns the fresh feedback value
    /// when this slot emits one.
    pub fn observe(&mut self, i_v: bool) -> Option<f64> {
        match self.mode {
            EstimatorMode::Window { q } => {
                self.successes += i_v as u32;
                self.observed += 1;
                if self.observed == q {
                    self.estimate = self.successes as f64 / q as f64;
                    self.successes = 0;
                    self.observed = 0;
                    Some(self.estimate)
                } else {
                    None
                }
            }
            EstimatorMode::Ema { lambda } => {
                self.estimate = (1.0 - lambda) * self.estimate + lambda * (i_v as u8 as f64);
                Some(self.estimate)
            }
        }
    }
}

/// One experiment stage: the user count changes by `user_delta` when the
/// stage begins and holds for `duration` slots.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Stage {
    pub duration: u64,
    pub user_delta: i32,
}

/// A full experiment configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub channel: LinkChannel,
    pub design: Design,
    pub utility: UtilitySpec,
    pub stages: Vec<Stage>,
    pub estimator: EstimatorMode,
    pub step: StepSchedule,
    pub seed: u64,
    /// Hold probabilities fixed between feedback emissions. Defaults to
    /// true for window estimation and false for exponential averaging.
    pub freeze_during_window: Option<bool>,
    /// Smoothing constant of the reported utility average.
    pub utility_ema_lambda: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if self.design.num_options() != self.channel.num_options() {
            return Err(Error::Invalid("design and channel disagree on option count".into()));
        }
        self.utility.validate_for(self.channel.num_options())?;
        if self.stages.is_empty() {
            return Err(Error::Invalid("scenario needs at least one stage".into()));
        }
        let mut count: i64 = 0;
        for (i, s) in self.stages.iter().enumerate() {
            if s.duration == 0 {
                return Err(Error::Invalid(format!("stage {i} has zero duration")));
            }
            count += s.user_delta as i64;
            if count < 1 {
                return Err(Error::Invalid(format!(
                    "user count drops to {count} at stage {i}; must stay >= 1"
                )));
            }
        }
        if !(0.0 < self.utility_ema_lambda && self.utility_ema_lambda <= 1.0) {
            return Err(Error::Invalid("utility ema lambda must lie in (0,1]".into()));
        }
        ReceiverEstimator::new(self.estimator)?;
        Ok(())
    }

    fn freeze(&self) -> bool {
        self.freeze_during_window.unwrap_or(matches!(self.estimator, EstimatorMode::Window { .. }))
    }

    pub fn total_slots(&self) -> u64 {
        self.stages.iter().map(|s| s.duration).sum()
    }

    /// Slot numbers at which later stages begin (1-based).
    pub fn stage_starts(&self) -> Vec<u64> {
        let mut starts = Vec::with_capacity(self.stages.len());
        let mut at = 1u64;
        for s in &self.stages {
            starts.push(at);
            at += s.duration;
        }
        starts
    }
}

/// One row of simulation output.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub slot: u64,
    pub users: u32,
    pub q_hat: f64,
    pub i_v: u8,
    /// Realized transmissions per option.
    pub tx_counts: Vec<u32>,
    pub util_inst: f64,
    pub util_ema: f64,
    /// Mean probability vector over users, per option.
    pub mean_profile: Vec<f64>,
    /// Most recent target profile vector.
    pub target: Vec<f64>,
}

/// Runs the slotted closed loop and returns one record per slot.
pub fn run(scenario: &Scenario) -> Result<Vec<TraceRecord>> {
    scenario.validate()?;
    let m = scenario.channel.num_options();
    let freeze = scenario.freeze();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut estimator = ReceiverEstimator::new(scenario.estimator)?;
    let mut users: Vec<UserState> = Vec::new();
    let mut next_id = 0u32;
    let initial_d = scenario.design.initial_direction();

    let stage_starts = scenario.stage_starts();
    let total = scenario.total_slots();
    let mut records = Vec::with_capacity(total as usize);
    let mut util_ema = 0.0f64;
    let mut last_feedback: Option<f64> = None;
    let mut target = vec![0.0; m];
    let energy = scenario.utility.energy();

    let mut stage_idx = 0usize;
    let mut options = vec![0usize; 0];
    for slot in 1..=total {
        while stage_idx < stage_starts.len() && stage_starts[stage_idx] == slot {
            let delta = scenario.stages[stage_idx].user_delta;
            if delta >= 0 {
                for _ in 0..delta {
                    users.push(UserState::new(next_id, initial_d.clone(), scenario.step));
                    next_id += 1;
                }
            } else {
                for _ in 0..(-delta) {
                    users.pop();
                }
            }
            stage_idx += 1;
        }

        // (a) channel state
        let state = draw_state(&scenario.channel, &mut rng);

        // (b) per-user transmission decisions, in user order
        let mut counts = vec![0u32; m];
        options.clear();
        for user in &users {
            let r = rng.gen::<f64>();
            let mut acc = 0.0;
            let mut chosen = usize::MAX;
            for (i, &pi) in user.profile().iter().enumerate() {
                acc += pi;
                if r < acc {
                    chosen = i;
                    break;
                }
            }
            options.push(chosen);
            if chosen != usize::MAX {
                counts[chosen] += 1;
            }
        }

        // (c) packet outcomes
        let mut successes = vec![0u32; m];
        let mut tx_total = 0u32;
        for &opt in &options {
            if opt == usize::MAX {
                continue;
            }
            tx_total += 1;
            counts[opt] -= 1;
            let prob = scenario.channel.real_success(opt, &counts, state);
            counts[opt] += 1;
            if rng.gen::<f64>() < prob {
                successes[opt] += 1;
            }
        }
        let pv = scenario.channel.virtual_success(&counts, state);
        let i_v = rng.gen::<f64>() < pv;

        // (d) receiver estimate
        let emitted = estimator.observe(i_v);
        if let Some(q) = emitted {
            last_feedback = Some(q);
        }

        // (e) adaptation
        let update_now = if freeze { emitted.is_some() } else { last_feedback.is_some() };
        if update_now {
            let q = last_feedback.expect("feedback available");
            target = target_vector(&scenario.design, q)?;
            for user in users.iter_mut() {
                apply_update(user, &target, slot);
            }
        }

        // (f) record
        let util_inst = scenario
            .channel
            .options()
            .iter()
            .enumerate()
            .map(|(i, o)| successes[i] as f64 * o.rate)
            .sum::<f64>()
            - energy * tx_total as f64;
        util_ema = (1.0 - scenario.utility_ema_lambda) * util_ema
            + scenario.utility_ema_lambda * util_inst;
        let mut mean_profile = vec![0.0; m];
        for user in &users {
            for (mp, &e) in mean_profile.iter_mut().zip(user.profile()) {
                *mp += e;
            }
        }
        let n = users.len() as f64;
        mean_profile.iter_mut().for_each(|e| *e /= n);
        records.push(TraceRecord {
            slot,
            users: users.len() as u32,
            q_hat: estimator.estimate(),
            i_v: i_v as u8,
            tx_counts: counts,
            util_inst,
            util_ema,
            mean_profile,
            target: target.clone(),
        });
    }
    Ok(records)
}

fn draw_state(channel: &LinkChannel, rng: &mut ChaCha8Rng) -> usize {
    let states = channel.states();
    if states.len() == 1 {
        // consume a draw anyway so state mixtures and single states walk
        // the same random stream length per slot
        let _ = rng.gen::<f64>();
        return 0;
    }
    let r = rng.gen::<f64>();
    let mut acc = 0.0;
    for (i, s) in states.iter().enumerate() {
        acc += s.probability;
        if r < acc {
            return i;
        }
    }
    states.len() - 1
}

/// Euler trajectory of the mean dynamics dP/dt = -(P - target(P)).
#[derive(Debug, Clone)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    /// Sampled states, each a flattened M*K vector in user order.
    pub states: Vec<Vec<f64>>,
    pub terminal: Vec<f64>,
}

pub fn ode_trajectory(
    design: &Design,
    channel: &LinkChannel,
    p0: &[Vec<f64>],
    dt: f64,
    t_end: f64,
    sample_every: usize,
) -> Result<OdeTrajectory> {
    design.validate()?;
    if p0.is_empty() {
        return Err(Error::Invalid("need at least one user".into()));
    }
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(Error::Invalid(format!("dt must lie in (0, 0.1], got {dt}")));
    }
    let m = channel.num_options();
    let mut profiles: Vec<Vec<f64>> = p0.to_vec();
    for v in &profiles {
        if v.len() != m {
            return Err(Error::Invalid("initial profile length mismatch".into()));
        }
    }
    let steps = (t_end / dt).ceil() as usize;
    let sample_every = sample_every.max(1);
    let mut times = Vec::new();
    let mut states = Vec::new();
    let flatten = |profiles: &[Vec<f64>]| -> Vec<f64> {
        profiles.iter().flatten().copied().collect()
    };
    times.push(0.0);
    states.push(flatten(&profiles));
    for step in 1..=steps {
        let q = qv_profiles(channel, &profiles)?.clamp(0.0, 1.0);
        let target = target_vector(design, q)?;
        for v in profiles.iter_mut() {
            for (e, &t) in v.iter_mut().zip(&target) {
                *e += dt * (t - *e);
            }
        }
        if step % sample_every == 0 || step == steps {
            times.push(step as f64 * dt);
            states.push(flatten(&profiles));
        }
    }
    let terminal = states.last().cloned().unwrap_or_default();
    Ok(OdeTrajectory { times, states, terminal })
}

/// Monte Carlo estimate of the target bias induced by finite-window
/// estimation at a fixed operating point.
#[derive(Debug, Clone)]
pub struct BiasReport {
    pub window: u32,
    /// Mean of target(q_hat) - target(q_exact), per profile component.
    pub mean_bias: Vec<f64>,
    /// Standard error of each component mean.
    pub std_err: Vec<f64>,
    pub trials: u32,
}

impl BiasReport {
    pub fn magnitude(&self) -> f64 {
        self.mean_bias.iter().map(|b| b * b).sum::<f64>().sqrt()
    }
}

pub fn measure_bias(
    design: &Design,
    channel: &LinkChannel,
    k: usize,
    profile: &TransmitProfile,
    windows: &[u32],
    trials: u32,
    seed: u64,
    exact_feedback: bool,
) -> Result<Vec<BiasReport>> {
    design.validate()?;
    if k == 0 || trials == 0 {
        return Err(Error::Invalid("need k >= 1 and trials >= 1".into()));
    }
    let m = channel.num_options();
    let vec_profile = profile.vector();
    if vec_profile.len() != m {
        return Err(Error::Invalid("profile length does not match the channel".into()));
    }
    let all = vec![vec_profile.clone(); k];
    let q_exact = qv_profiles(channel, &all)?.clamp(0.0, 1.0);
    let target_exact = target_vector(design, q_exact)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::with_capacity(windows.len());
    for &window in windows {
        if window == 0 {
            return Err(Error::Invalid("bias window must be >= 1".into()));
        }
        let mut sums = vec![0.0; m];
        let mut sumsq = vec![0.0; m];
        for _ in 0..trials {
            let q_hat = if exact_feedback {
                q_exact
            } else {
                let hits = count_virtual_successes(channel, &vec_profile, k, window, &mut rng);
                hits as f64 / window as f64
            };
            let t = target_vector(design, q_hat)?;
            for i in 0..m {
                let d = t[i] - target_exact[i];
                sums[i] += d;
                sumsq[i] += d * d;
            }
        }
        let n = trials as f64;
        let mean_bias: Vec<f64> = sums.iter().map(|s| s / n).collect();
        let std_err: Vec<f64> = sumsq
            .iter()
            .zip(&mean_bias)
            .map(|(&sq, &mb)| {
                let var = (sq / n - mb * mb).max(0.0);
                (var / n).sqrt()
            })
            .collect();
        reports.push(BiasReport { window, mean_bias, std_err, trials });
    }
    Ok(reports)
}

/// Simulates `slots` slots with every user at the same fixed profile and
/// counts virtual packet successes.
pub fn count_virtual_successes(
    channel: &LinkChannel,
    profile: &[f64],
    k: usize,
    slots: u32,
    rng: &mut ChaCha8Rng,
) -> u32 {
    let m = channel.num_options();
    let mut hits = 0u32;
    let mut counts = vec![0u32; m];
    for _ in 0..slots {
        let state = draw_state(channel, rng);
        counts.iter_mut().for_each(|c| *c = 0);
        for _ in 0..k {
            let r = rng.gen::<f64>();
            let mut acc = 0.0;
            for (i, &pi) in profile.iter().enumerate() {
                acc += pi;
                if r < acc {
                    counts[i] += 1;
                    break;
                }
            }
        }
        let pv = channel.virtual_success(&counts, state);
        if rng.gen::<f64>() < pv {
            hits += 1;
        }
    }
    hits
}

/// Column header of the trace CSV for an M-option channel.
pub fn trace_csv_header(m: usize) -> String {
    let mut h = String::from("slot,users,q_hat,i_v");
    for i in 1..=m {
        h.push_str(&format!(",tx_opt{i}"));
    }
    h.push_str(",util_inst,util_ema");
    for i in 1..=m {
        h.push_str(&format!(",mean_p{i}"));
    }
    for i in 1..=m {
        h.push_str(&format!(",target_p{i}"));
    }
    h
}

/// Streams the trace to CSV, one row per `decimate` slots.
pub fn write_trace_csv<W: Write>(
    w: &mut W,
    records: &[TraceRecord],
    m: usize,
    decimate: usize,
) -> std::io::Result<()> {
    writeln!(w, "{}", trace_csv_header(m))?;
    for rec in records.iter().step_by(decimate.max(1)) {
        write!(w, "{},{},{},{}", rec.slot, rec.users, rec.q_hat, rec.i_v)?;
        for c in &rec.tx_counts {
            write!(w, ",{c}")?;
        }
        write!(w, ",{},{}", rec.util_inst, rec.util_ema)?;
        for p in &rec.mean_profile {
            write!(w, ",{p}")?;
        }
        for t in &rec.target {
            write!(w, ",{t}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Plain-text summary block written alongside a trace.
pub fn summarize(scenario: &Scenario, records: &[TraceRecord], tail_window: u64) -> String {
    let mut out = String::new();
    out.push_str(&format!("seed = {}\n", scenario.seed));
    out.push_str("rng = chacha8\n");
    out.push_str(&format!("slots = {}\n", scenario.total_slots()));
    let starts = scenario.stage_starts();
    let mut count: i64 = 0;
    for (i, (stage, start)) in scenario.stages.iter().zip(&starts).enumerate() {
        count += stage.user_delta as i64;
        let end = start + stage.duration - 1;
        out.push_str(&format!(
            "stage{} = slots {}..{}, users {}\n",
            i + 1,
            start,
            end,
            count
        ));
        let eq = scenario.design.equilibrium_profile(count as usize);
        let eq_vec = eq.vector();
        let lo = end.saturating_sub(tail_window.min(stage.duration) - 1);
        let window: Vec<&TraceRecord> =
            records.iter().filter(|r| r.slot >= lo && r.slot <= end).collect();
        if window.is_empty() {
            continue;
        }
        let n = window.len() as f64;
        let m = eq_vec.len();
        let mut mean_target = vec![0.0; m];
        let mut mean_util = 0.0;
        for r in &window {
            for (acc, &t) in mean_target.iter_mut().zip(&r.target) {
                *acc += t;
            }
            mean_util += r.util_ema;
        }
        mean_target.iter_mut().for_each(|t| *t /= n);
        mean_util /= n;
        let dist = mean_target
            .iter()
            .zip(&eq_vec)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        out.push_str(&format!("stage{}_equilibrium = {:?}\n", i + 1, eq_vec));
        out.push_str(&format!("stage{}_mean_target = {:?}\n", i + 1, mean_target));
        out.push_str(&format!("stage{}_target_distance = {}\n", i + 1, dist));
        out.push_str(&format!("stage{}_mean_util_ema = {}\n", i + 1, mean_util));
    }
    if let Some(last) = records.last() {
        out.push_str(&format!("final_target = {:?}\n", last.target));
        out.push_str(&format!("final_mean_profile = {:?}\n", last.mean_profile));
        out.push_str(&format!("final_util_ema = {}\n", last.util_ema));
    }
    out
}
