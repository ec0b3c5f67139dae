//! Declarative configuration files (channels, designs, scenarios) and the
//! versioned design file emitted by the design command.

use serde::{Deserialize, Serialize};

use crate::channel::{builtin, derive_params, LinkChannel, OptionSpec};
use crate::contention::{DirectionVector, TransmitProfile};
use crate::design::{
    build_multi_design, build_single_for_direction, Design, DesignGrid, InteriorPinpoint,
    MultiDesignSpec, MultiOptionDesign, Pinpoint, SingleOptionDesign, UtilitySpec,
};
use crate::error::{Error, Result};
use crate::mac::StepSchedule;
use crate::sim::{EstimatorMode, Scenario, Stage};

pub const DESIGN_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MixtureState {
    pub capacity: u32,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OptionConfig {
    pub rate: f64,
    pub slot_equivalents: f64,
    #[serde(default)]
    pub energy_cost: f64,
}

/// Declarative channel description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelConfig {
    Collision,
    Threshold { capacity: u32 },
    CapacityMixture { states: Vec<MixtureState> },
    SlotEquivalents { capacity: f64, virtual_units: f64, options: Vec<OptionConfig> },
    /// Direct single-option table entry, intended for testing.
    Tables { c_r: Vec<f64>, c_v: Vec<f64> },
}

impl ChannelConfig {
    pub fn build(&self) -> Result<LinkChannel> {
        match self {
            ChannelConfig::Collision => Ok(builtin::collision()),
            ChannelConfig::Threshold { capacity } => {
                if *capacity == 0 {
                    return Err(Error::Config("threshold capacity must be >= 1".into()));
                }
                Ok(builtin::threshold(*capacity))
            }
            ChannelConfig::CapacityMixture { states } => {
                let caps: Vec<(u32, f64)> =
                    states.iter().map(|s| (s.capacity, s.probability)).collect();
                builtin::capacity_mixture(&caps)
            }
            ChannelConfig::SlotEquivalents { capacity, virtual_units, options } => {
                let opts = options
                    .iter()
                    .map(|o| OptionSpec::new(o.rate, o.slot_equivalents, o.energy_cost))
                    .collect::<Result<Vec<_>>>()?;
                builtin::slot_equivalents(opts, *capacity, *virtual_units)
            }
            ChannelConfig::Tables { c_r, c_v } => builtin::from_tables(c_r.clone(), c_v.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PinpointConfig {
    pub k_hat: u32,
    /// Explicit probability vector p*d; omitted to take the direction from
    /// the utility-optimal profile and place the contention target on the
    /// line between the endpoint values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<f64>>,
}

fn default_eps_v() -> f64 {
    0.01
}
fn default_b_margin() -> f64 {
    0.01
}
fn default_eps_q() -> f64 {
    0.01
}
fn default_delta_k() -> f64 {
    0.01
}
fn default_p_bounds() -> [f64; 2] {
    [0.001, 0.999]
}
fn default_k_cap() -> u32 {
    1000
}

/// Design construction parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DesignParams {
    Single {
        #[serde(default = "default_eps_v")]
        eps_v: f64,
        #[serde(default = "default_b_margin")]
        b_margin: f64,
        #[serde(default = "default_k_cap")]
        k_cap: u32,
    },
    Multi {
        k_lower: u32,
        k_upper: u32,
        #[serde(default)]
        pinpoints: Vec<PinpointConfig>,
        #[serde(default = "default_eps_v")]
        eps_v: f64,
        #[serde(default = "default_b_margin")]
        b_margin: f64,
        #[serde(default = "default_eps_q")]
        eps_q: f64,
        #[serde(default = "default_delta_k")]
        delta_k: f64,
        #[serde(default = "default_p_bounds")]
        p_bounds: [f64; 2],
        #[serde(default = "default_k_cap")]
        k_cap: u32,
    },
}

/// Input to the design command.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DesignConfig {
    pub channel: ChannelConfig,
    pub utility: UtilitySpec,
    pub design: DesignParams,
}

impl DesignConfig {
    pub fn build(&self) -> Result<(LinkChannel, Design)> {
        let channel = self.channel.build()?;
        let design = match &self.design {
            DesignParams::Single { eps_v, b_margin, k_cap } => {
                if channel.num_options() != 1 {
                    return Err(Error::Config(
                        "single design requires a single-option channel".into(),
                    ));
                }
                let d = build_single_for_direction(
                    &channel,
                    &self.utility,
                    &DirectionVector::single(),
                    *eps_v,
                    *b_margin,
                    *k_cap,
                )?;
                Design::Single(d)
            }
            DesignParams::Multi {
                k_lower,
                k_upper,
                pinpoints,
                eps_v,
                b_margin,
                eps_q,
                delta_k,
                p_bounds,
                k_cap,
            } => {
                let mut spec = MultiDesignSpec::new(*k_lower, *k_upper);
                spec.eps_v = *eps_v;
                spec.b_margin = *b_margin;
                spec.eps_q = *eps_q;
                spec.delta_k = *delta_k;
                spec.p_bounds = (p_bounds[0], p_bounds[1]);
                spec.k_cap = *k_cap;
                for pin in pinpoints {
                    let interior = match &pin.profile {
                        Some(v) => {
                            let fallback = DirectionVector::single();
                            let profile = if v.iter().sum::<f64>() > 0.0 {
                                TransmitProfile::from_vector(v, &fallback)?
                            } else {
                                return Err(Error::Config(format!(
                                    "pinpoint k_hat={} has a zero profile",
                                    pin.k_hat
                                )));
                            };
                            InteriorPinpoint::Explicit { k_hat: pin.k_hat, profile }
                        }
                        None => InteriorPinpoint::OptimalDirectionLine { k_hat: pin.k_hat },
                    };
                    spec.interior.push(interior);
                }
                Design::Multi(build_multi_design(&channel, &self.utility, &spec)?)
            }
        };
        Ok((channel, design))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SingleDesignRecord {
    pub direction: Vec<f64>,
    pub x_star: f64,
    pub b: f64,
    pub eps_v: f64,
    pub j_eps: usize,
    pub gamma_eps: f64,
    pub p_max: f64,
    pub k_cap: u32,
}

impl SingleDesignRecord {
    fn from_design(d: &SingleOptionDesign) -> Self {
        Self {
            direction: d.params.direction().entries().to_vec(),
            x_star: d.x_star,
            b: d.b,
            eps_v: d.eps_v,
            j_eps: d.j_eps,
            gamma_eps: d.gamma_eps,
            p_max: d.p_max,
            k_cap: d.k_cap,
        }
    }

    fn to_design(&self, channel: &LinkChannel) -> Result<SingleOptionDesign> {
        let direction = DirectionVector::new(self.direction.clone())?;
        let params = derive_params(channel, &direction)?;
        let design = SingleOptionDesign {
            x_star: self.x_star,
            b: self.b,
            eps_v: self.eps_v,
            j_eps: self.j_eps,
            gamma_eps: self.gamma_eps,
            p_max: self.p_max,
            k_cap: self.k_cap,
            params,
        };
        design.validate()?;
        Ok(design)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PinpointRecord {
    pub k_hat: u32,
    pub profile: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MultiDesignRecord {
    pub k_lower: u32,
    pub k_upper: u32,
    pub k_cap: u32,
    pub eps_q: f64,
    pub p_bounds: [f64; 2],
    pub head: SingleDesignRecord,
    pub tail: SingleDesignRecord,
    pub pinpoints: Vec<PinpointRecord>,
    pub pinpoint_qv_star: Vec<f64>,
    pub grid_k: Vec<f64>,
    pub grid_profiles: Vec<Vec<f64>>,
    pub grid_qv_star: Vec<f64>,
}

/// Versioned, self-contained record of a built design.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DesignFile {
    pub version: u32,
    pub channel: ChannelConfig,
    pub utility: UtilitySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single: Option<SingleDesignRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multi: Option<MultiDesignRecord>,
}

impl DesignFile {
    pub fn from_design(channel: &ChannelConfig, utility: &UtilitySpec, design: &Design) -> Self {
        match design {
            Design::Single(d) => Self {
                version: DESIGN_FILE_VERSION,
                channel: channel.clone(),
                utility: *utility,
                single: Some(SingleDesignRecord::from_design(d)),
                multi: None,
            },
            Design::Multi(d) => Self {
                version: DESIGN_FILE_VERSION,
                channel: channel.clone(),
                utility: *utility,
                single: None,
                multi: Some(MultiDesignRecord {
                    k_lower: d.k_lower,
                    k_upper: d.k_upper,
                    k_cap: d.k_cap,
                    eps_q: d.eps_q,
                    p_bounds: [d.p_bounds.0, d.p_bounds.1],
                    head: SingleDesignRecord::from_design(&d.head),
                    tail: SingleDesignRecord::from_design(&d.tail),
                    pinpoints: d
                        .pinpoints
                        .iter()
                        .map(|p| PinpointRecord {
                            k_hat: p.k_hat,
                            profile: p.profile.vector(),
                        })
                        .collect(),
                    pinpoint_qv_star: d.pinpoint_qv_star.clone(),
                    grid_k: d.grid.k_values().to_vec(),
                    grid_profiles: d.grid.profiles().to_vec(),
                    grid_qv_star: d.grid.qv_star_values().to_vec(),
                }),
            },
        }
    }

    pub fn to_design(&self) -> Result<(LinkChannel, Design)> {
        if self.version != DESIGN_FILE_VERSION {
            return Err(Error::Config(format!(
                "unsupported design file version {} (expected {DESIGN_FILE_VERSION})",
                self.version
            )));
        }
        let channel = self.channel.build()?;
        match (&self.single, &self.multi) {
            (Some(rec), None) => {
                let d = rec.to_design(&channel)?;
                Ok((channel, Design::Single(d)))
            }
            (None, Some(rec)) => {
                let head = rec.head.to_design(&channel)?;
                let tail = rec.tail.to_design(&channel)?;
                let head_dir = head.params.direction().clone();
                let pinpoints = rec
                    .pinpoints
                    .iter()
                    .map(|p| {
                        Ok(Pinpoint {
                            k_hat: p.k_hat,
                            profile: TransmitProfile::from_vector(&p.profile, &head_dir)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let grid = DesignGrid::from_tables(
                    rec.grid_k.clone(),
                    rec.grid_profiles.clone(),
                    rec.grid_qv_star.clone(),
                )?;
                let design = MultiOptionDesign {
                    head,
                    tail,
                    k_lower: rec.k_lower,
                    k_upper: rec.k_upper,
                    pinpoints,
                    pinpoint_qv_star: rec.pinpoint_qv_star.clone(),
                    grid,
                    k_cap: rec.k_cap,
                    p_bounds: (rec.p_bounds[0], rec.p_bounds[1]),
                    eps_q: rec.eps_q,
                    channel: channel.clone(),
                };
                design.validate()?;
                Ok((channel, Design::Multi(design)))
            }
            _ => Err(Error::Config(
                "design file must contain exactly one of [single] or [multi]".into(),
            )),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StageConfig {
    pub duration: u64,
    pub user_delta: i32,
}

/// Input to the run command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub channel: ChannelConfig,
    pub utility: UtilitySpec,
    pub design: DesignParams,
    #[serde(default)]
    pub seed: u64,
    pub stages: Vec<StageConfig>,
    pub estimator: EstimatorMode,
    pub step: StepSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze_during_window: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility_ema_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decimate: Option<usize>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<Scenario> {
        let cfg = DesignConfig {
            channel: self.channel.clone(),
            utility: self.utility,
            design: self.design.clone(),
        };
        let (channel, design) = cfg.build()?;
        let scenario = Scenario {
            channel,
            design,
            utility: self.utility,
            stages: self
                .stages
                .iter()
                .map(|s| Stage { duration: s.duration, user_delta: s.user_delta })
                .collect(),
            estimator: self.estimator,
            step: self.step,
            seed: self.seed,
            freeze_during_window: self.freeze_during_window,
            utility_ema_lambda: self.utility_ema_lambda.unwrap_or(1.0 / 300.0),
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_file_roundtrip_single() {
        let cfg = DesignConfig {
            channel: ChannelConfig::Collision,
            utility: UtilitySpec::sum_throughput_single(),
            design: DesignParams::Single { eps_v: 0.01, b_margin: 0.01, k_cap: 1000 },
        };
        let (_, design) = cfg.build().unwrap();
        let file = DesignFile::from_design(&cfg.channel, &cfg.utility, &design);
        let text = file.to_toml().unwrap();
        let parsed = DesignFile::from_toml(&text).unwrap();
        assert_eq!(file, parsed);
        let (_, rebuilt) = parsed.to_design().unwrap();
        match (design, rebuilt) {
            (Design::Single(a), Design::Single(b)) => {
                assert_eq!(a.x_star, b.x_star);
                assert_eq!(a.b, b.b);
                assert_eq!(a.p_max, b.p_max);
            }
            _ => panic!("expected single designs"),
        }
    }

    #[test]
    fn scenario_config_parses() {
        let text = r#"
            seed = 7

            [channel]
            kind = "capacity_mixture"
            [[channel.states]]
            capacity = 4
            probability = 0.3
            [[channel.states]]
            capacity = 6
            probability = 0.7

            [utility]
            kind = "energy_weighted"
            energy_weight = 0.3

            [design]
            type = "single"

            [[stages]]
            duration = 3000
            user_delta = 8

            [estimator]
            mode = "ema"
            lambda = 0.003333333333333333

            [step]
            kind = "constant"
            alpha = 0.05
        "#;
        let cfg = ScenarioConfig::from_toml(text).unwrap();
        let scenario = cfg.build().unwrap();
        assert_eq!(scenario.seed, 7);
        assert_eq!(scenario.total_slots(), 3000);
    }

    #[test]
    fn bad_config_is_rejected() {
        let text = r#"
            [channel]
            kind = "capacity_mixture"
            [[channel.states]]
            capacity = 4
            probability = 0.9
        "#;
        // probabilities do not sum to one
        let cfg: ChannelConfig = toml::from_str(
            &text.replace("[channel]", "").replace("channel.states", "states"),
        )
        .unwrap();
        assert!(cfg.build().is_err());
    }
}
