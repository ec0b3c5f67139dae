//! Command-line front end: build and verify designs, run simulations, and
//! export the bundled experiment presets as CSV.

mod figures;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vpmac_core::config::{DesignConfig, DesignFile, DesignParams, ScenarioConfig};
use vpmac_core::design::{
    verify_monotonicity_gradient, verify_pinpoints, Design, UtilitySpec, DEFAULT_KG_MAX,
};
use vpmac_core::error::Error;
use vpmac_core::sim::{run, summarize, write_trace_csv};

#[derive(Parser)]
#[command(name = "vpmac", version, about = "Distributed MAC design and simulation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a design from a config file and write the versioned design file
    Design {
        /// Design config (TOML); see configs/ for examples
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Built-in design preset: collision | fading | two_option
        #[arg(long)]
        preset: Option<String>,
        /// Output path for the design file
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a design and print its condition verification report
    Verify {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
    },
    /// Run an experiment preset or a scenario config; write the CSV trace
    Run {
        /// Experiment preset name (fig1..fig7)
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Scenario config (TOML)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Random seed override
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV path; a .summary.txt sidecar is written for runs
        #[arg(long)]
        out: PathBuf,
        /// Total slot count override (split evenly over stages)
        #[arg(long)]
        slots: Option<u64>,
        /// Keep one trace row per this many slots
        #[arg(long, default_value_t = 1)]
        decimate: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Design { config, preset, out } => cmd_design(config, preset, &out),
        Command::Verify { config, preset } => cmd_verify(config, preset),
        Command::Run { preset, config, seed, out, slots, decimate } => {
            cmd_run(preset, config, seed, &out, slots, decimate)
        }
    }
}

fn design_preset(name: &str) -> Result<DesignConfig, Error> {
    use vpmac_core::config::ChannelConfig;
    let cfg = match name {
        "collision" => DesignConfig {
            channel: ChannelConfig::Collision,
            utility: UtilitySpec::sum_throughput_single(),
            design: DesignParams::Single { eps_v: 0.01, b_margin: 0.01, k_cap: 1000 },
        },
        "fading" => DesignConfig {
            channel: ChannelConfig::CapacityMixture {
                states: vec![
                    vpmac_core::config::MixtureState { capacity: 4, probability: 0.3 },
                    vpmac_core::config::MixtureState { capacity: 6, probability: 0.7 },
                ],
            },
            utility: UtilitySpec::energy_weighted(0.3),
            design: DesignParams::Single { eps_v: 0.01, b_margin: 0.01, k_cap: 1000 },
        },
        "two_option" => DesignConfig {
            channel: ChannelConfig::SlotEquivalents {
                capacity: 12.0,
                virtual_units: 4.0,
                options: vec![
                    vpmac_core::config::OptionConfig {
                        rate: 4.0,
                        slot_equivalents: 4.0,
                        energy_cost: 0.0,
                    },
                    vpmac_core::config::OptionConfig {
                        rate: 1.0,
                        slot_equivalents: 1.0,
                        energy_cost: 0.0,
                    },
                ],
            },
            utility: UtilitySpec::sum_throughput_multi(),
            design: DesignParams::Multi {
                k_lower: 4,
                k_upper: 10,
                pinpoints: vec![
                    vpmac_core::config::PinpointConfig { k_hat: 5, profile: None },
                    vpmac_core::config::PinpointConfig { k_hat: 6, profile: None },
                ],
                eps_v: 0.01,
                b_margin: 0.01,
                eps_q: 0.01,
                delta_k: 0.01,
                p_bounds: [0.001, 0.999],
                k_cap: 1000,
            },
        },
        other => {
            return Err(Error::Config(format!(
                "unknown design preset '{other}'; available: collision, fading, two_option"
            )))
        }
    };
    Ok(cfg)
}

fn load_design_config(
    config: Option<PathBuf>,
    preset: Option<String>,
) -> Result<DesignConfig, Error> {
    match (config, preset) {
        (Some(path), None) => {
            let text = fs::read_to_string(&path)?;
            DesignConfig::from_toml(&text)
        }
        (None, Some(name)) => design_preset(&name),
        _ => Err(Error::Config("provide exactly one of --config or --preset".into())),
    }
}

fn print_verification(design: &Design) -> bool {
    match design {
        Design::Single(d) => {
            println!("design kind        = single option");
            println!("x_star             = {}", d.x_star);
            println!("j_eps              = {}", d.j_eps);
            println!("gamma_eps          = {}", d.gamma_eps);
            println!("b                  = {}", d.b);
            println!("p_max              = {}", d.p_max);
            let ok = d.validate().is_ok();
            println!("monotone inversion = {}", if ok { "pass" } else { "FAIL" });
            ok
        }
        Design::Multi(d) => {
            println!("design kind = multiple options");
            println!(
                "head: x_star = {}, j_eps = {}, b = {}, p_max = {}",
                d.head.x_star, d.head.j_eps, d.head.b, d.head.p_max
            );
            println!(
                "tail: x_star = {}, j_eps = {}, b = {}, p_max = {}",
                d.tail.x_star, d.tail.j_eps, d.tail.b, d.tail.p_max
            );
            println!("k_lower = {}, k_upper = {}, k_cap = {}", d.k_lower, d.k_upper, d.k_cap);
            let mut all = true;
            match verify_pinpoints(&d.pinpoints, &d.channel, d.head.eps_v, d.eps_q, d.p_bounds) {
                Ok(report) => {
                    for (i, item) in report.items.iter().enumerate() {
                        println!(
                            "pinpoint condition item {} = {} ({})",
                            i + 1,
                            if item.pass { "pass" } else { "FAIL" },
                            item.detail
                        );
                        all &= item.pass;
                    }
                }
                Err(e) => {
                    println!("pinpoint verification errored: {e}");
                    all = false;
                }
            }
            let mg = verify_monotonicity_gradient(d, DEFAULT_KG_MAX);
            for (name, item) in [
                ("lipschitz", &mg.lipschitz),
                ("strict decrease", &mg.strict_decrease),
                ("threshold clearance", &mg.threshold_clearance),
                ("probability bounds", &mg.probability_bounds),
            ] {
                println!(
                    "gradient condition {} = {} ({})",
                    name,
                    if item.pass { "pass" } else { "FAIL" },
                    item.detail
                );
                all &= item.pass;
            }
            println!("estimated lipschitz bound = {}", mg.k_g);
            println!("estimated contention slope = {}", mg.eps_q);
            all
        }
    }
}

fn cmd_design(
    config: Option<PathBuf>,
    preset: Option<String>,
    out: &Path,
) -> Result<ExitCode, Error> {
    let cfg = load_design_config(config, preset)?;
    let (_channel, design) = cfg.build()?;
    let ok = print_verification(&design);
    let file = DesignFile::from_design(&cfg.channel, &cfg.utility, &design);
    fs::write(out, file.to_toml()?)?;
    println!("design written to {}", out.display());
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_verify(config: Option<PathBuf>, preset: Option<String>) -> Result<ExitCode, Error> {
    let cfg = load_design_config(config, preset)?;
    let (_channel, design) = cfg.build()?;
    let ok = print_verification(&design);
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_run(
    preset: Option<String>,
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: &Path,
    slots: Option<u64>,
    decimate: usize,
) -> Result<ExitCode, Error> {
    match (preset, config) {
        (Some(name), None) => {
            let output = figures::render(&name, seed.unwrap_or(1), slots, decimate)?;
            fs::write(out, &output.csv)?;
            println!("trace written to {}", out.display());
            if let Some(summary) = output.summary {
                let sidecar = out.with_extension("summary.txt");
                fs::write(&sidecar, &summary)?;
                println!("summary written to {}", sidecar.display());
                print!("{summary}");
            }
            Ok(ExitCode::SUCCESS)
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(&path)?;
            let mut cfg = ScenarioConfig::from_toml(&text)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let mut scenario = cfg.build()?;
            if let Some(total) = slots {
                let n = scenario.stages.len() as u64;
                for stage in scenario.stages.iter_mut() {
                    stage.duration = (total / n).max(1);
                }
            }
            let records = run(&scenario)?;
            let decimate = cfg.decimate.unwrap_or(decimate);
            let mut buf = Vec::new();
            write_trace_csv(&mut buf, &records, scenario.channel.num_options(), decimate)?;
            fs::write(out, &buf)?;
            println!("trace written to {}", out.display());
            let summary = summarize(&scenario, &records, 500);
            let sidecar = out.with_extension("summary.txt");
            fs::write(&sidecar, &summary)?;
            println!("summary written to {}", sidecar.display());
            print!("{summary}");
            Ok(ExitCode::SUCCESS)
        }
        _ => Err(Error::Config("provide exactly one of --preset or --config".into())),
    }
}
