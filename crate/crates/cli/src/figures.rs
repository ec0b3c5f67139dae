//! CSV exports for the bundled experiment presets.

use std::fmt::Write as _;

use vpmac_core::channel::{builtin, derive_params};
use vpmac_core::contention::{qv_star_multi, DirectionVector, TransmitProfile};
use vpmac_core::design::{hajek_baseline, optimal_profile, utility_eval, UtilitySpec};
use vpmac_core::error::Result;
use vpmac_core::presets;
use vpmac_core::sim::{run, summarize, write_trace_csv, Scenario};

pub const PRESET_NAMES: [&str; 7] = [
    "fig1_optimal_probs",
    "fig2_collision_throughput",
    "fig3_fading_utility",
    "fig4_convergence_k8",
    "fig5_qvstar_curve",
    "fig6_threestage_throughput",
    "fig7_threestage_targets",
];

pub struct PresetOutput {
    pub csv: String,
    pub summary: Option<String>,
}

/// Renders a preset to CSV (plus a run summary for simulation presets).
pub fn render(
    name: &str,
    seed: u64,
    slots: Option<u64>,
    decimate: usize,
) -> Result<PresetOutput> {
    match name {
        "fig1_optimal_probs" => fig1(),
        "fig2_collision_throughput" => fig2(),
        "fig3_fading_utility" => fig3(),
        "fig4_convergence_k8" => {
            sim_preset(presets::fading_scenario(seed), slots, decimate)
        }
        "fig5_qvstar_curve" => fig5(),
        "fig6_threestage_throughput" => {
            sim_preset(presets::three_stage_scenario(seed), slots, decimate)
        }
        "fig7_threestage_targets" => fig7(seed, slots, decimate),
        other => Err(vpmac_core::Error::Config(format!(
            "unknown preset '{other}'; available: {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

fn apply_slots(scenario: &mut Scenario, slots: Option<u64>) {
    if let Some(total) = slots {
        let n = scenario.stages.len() as u64;
        let each = (total / n).max(1);
        for stage in scenario.stages.iter_mut() {
            stage.duration = each;
        }
    }
}

fn sim_preset(mut scenario: Scenario, slots: Option<u64>, decimate: usize) -> Result<PresetOutput> {
    apply_slots(&mut scenario, slots);
    let records = run(&scenario)?;
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, &records, scenario.channel.num_options(), decimate)?;
    let csv = String::from_utf8(buf).expect("csv output is utf8");
    let summary = summarize(&scenario, &records, 500);
    Ok(PresetOutput { csv, summary: Some(summary) })
}

/// Optimal transmission probabilities per option for the two-option channel.
fn fig1() -> Result<PresetOutput> {
    let channel = builtin::two_option_example();
    let utility = UtilitySpec::sum_throughput_multi();
    let mut csv = String::from("k,p_high_opt,p_low_opt\n");
    for k in 1..=20usize {
        let prof = optimal_profile(&utility, &channel, k, 0.005)?;
        let v = prof.vector();
        writeln!(csv, "{k},{},{}", v[0], v[1]).unwrap();
    }
    Ok(PresetOutput { csv, summary: None })
}

/// Collision-channel sum throughput: optimal, designed equilibrium, and
/// the idling-probability baseline.
fn fig2() -> Result<PresetOutput> {
    let channel = builtin::collision();
    let utility = UtilitySpec::sum_throughput_single();
    let params = derive_params(&channel, &DirectionVector::single())?;
    let design = presets::collision_design();
    let mut csv = String::from("k,optimal_throughput,proposed_throughput,hajek_throughput\n");
    for k in 2..=20usize {
        let opt = optimal_profile(&utility, &channel, k, 0.005)?;
        let u_opt = utility_eval(&utility, &params, k, &opt);
        let star = design.equilibrium_profile(k);
        let u_star = utility_eval(&utility, &params, k, &star);
        let pa = hajek_baseline(k);
        let u_a = utility_eval(
            &utility,
            &params,
            k,
            &TransmitProfile::new(pa, DirectionVector::single())?,
        );
        writeln!(csv, "{k},{u_opt},{u_star},{u_a}").unwrap();
    }
    Ok(PresetOutput { csv, summary: None })
}

/// Fading-channel utility: optimal, designed equilibrium, and the
/// asymptotic-idling heuristic.
fn fig3() -> Result<PresetOutput> {
    let channel = builtin::fading_example();
    let utility = UtilitySpec::energy_weighted(0.3);
    let params = derive_params(&channel, &DirectionVector::single())?;
    let design = presets::fading_design();
    let mut csv = String::from("k,optimal_utility,proposed_utility,idle_heuristic_utility\n");
    for k in 1..=20usize {
        let opt = optimal_profile(&utility, &channel, k, 0.005)?;
        let u_opt = utility_eval(&utility, &params, k, &opt);
        let star = design.equilibrium_profile(k);
        let u_star = utility_eval(&utility, &params, k, &star);
        let p_idle = 1.0 - (-design.x_star / k as f64).exp();
        let u_idle = utility_eval(
            &utility,
            &params,
            k,
            &TransmitProfile::new(p_idle.min(1.0), DirectionVector::single())?,
        );
        writeln!(csv, "{k},{u_opt},{u_star},{u_idle}").unwrap();
    }
    Ok(PresetOutput { csv, summary: None })
}

/// Theoretical channel contention measure of the two-option design.
fn fig5() -> Result<PresetOutput> {
    let design = presets::two_option_design();
    let mut csv = String::from("k_hat,qv_star\n");
    let steps = ((16.0 - 2.0) / 0.01f64).round() as usize;
    for i in 0..=steps {
        let k_hat = 2.0 + 14.0 * i as f64 / steps as f64;
        let q = qv_star_multi(&design, k_hat)?;
        writeln!(csv, "{k_hat},{q}").unwrap();
    }
    Ok(PresetOutput { csv, summary: None })
}

/// Per-slot computed targets of the three-stage run against the designed
/// equilibrium profile of each stage.
fn fig7(seed: u64, slots: Option<u64>, decimate: usize) -> Result<PresetOutput> {
    let mut scenario = presets::three_stage_scenario(seed);
    apply_slots(&mut scenario, slots);
    let records = run(&scenario)?;
    let starts = scenario.stage_starts();
    let mut counts = Vec::new();
    let mut acc: i64 = 0;
    for stage in &scenario.stages {
        acc += stage.user_delta as i64;
        counts.push(acc as usize);
    }
    let theory: Vec<Vec<f64>> = counts
        .iter()
        .map(|&k| scenario.design.equilibrium_profile(k).vector())
        .collect();
    let mut csv = String::from("slot,target_high,target_low,theory_high,theory_low\n");
    for rec in records.iter().step_by(decimate.max(1)) {
        let stage = match starts.iter().rposition(|&s| rec.slot >= s) {
            Some(i) => i,
            None => 0,
        };
        writeln!(
            csv,
            "{},{},{},{},{}",
            rec.slot, rec.target[0], rec.target[1], theory[stage][0], theory[stage][1]
        )
        .unwrap();
    }
    let summary = summarize(&scenario, &records, 500);
    Ok(PresetOutput { csv, summary: Some(summary) })
}
