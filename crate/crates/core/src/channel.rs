//! Link-layer multiple access channel models.
//!
//! A channel is defined abstractly by two success predicates: one for a
//! tagged real packet transmitted in parallel with a multiset of other
//! packets, and one for the virtual packet whose success probability is
//! the channel contention measure fed back to the users. The per-count
//! parameter tables consumed by the analytic machinery are derived from
//! the predicates by exact enumeration, so the Monte Carlo simulator and
//! the closed-form expressions always agree on the same channel.

use std::fmt;
use std::sync::Arc;

use crate::contention::DirectionVector;
use crate::error::{Error, Result};

/// Success probability of a tagged real packet: (option index, option
/// counts of the other parallel packets, channel state index) -> [0, 1].
pub type RealPredicate = Arc<dyn Fn(usize, &[u32], usize) -> f64 + Send + Sync>;

/// Success probability of the virtual packet: (option counts of the
/// parallel real packets, channel state index) -> [0, 1].
pub type VirtualPredicate = Arc<dyn Fn(&[u32], usize) -> f64 + Send + Sync>;

/// One transmission option available to every user.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionSpec {
    /// Communication rate in payload units per slot.
    pub rate: f64,
    /// Capacity units one packet of this option occupies.
    pub slot_equivalents: f64,
    /// Energy spent per transmission attempt.
    pub energy_cost: f64,
}

impl OptionSpec {
    pub fn new(rate: f64, slot_equivalents: f64, energy_cost: f64) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(Error::Invalid(format!("option rate must be > 0, got {rate}")));
        }
        if !(slot_equivalents > 0.0) {
            return Err(Error::Invalid(format!(
                "slot_equivalents must be > 0, got {slot_equivalents}"
            )));
        }
        if !(energy_cost >= 0.0) {
            return Err(Error::Invalid(format!(
                "energy_cost must be >= 0, got {energy_cost}"
            )));
        }
        Ok(Self { rate, slot_equivalents, energy_cost })
    }

    /// Unit-rate, unit-size option with no energy cost.
    pub fn unit() -> Self {
        Self { rate: 1.0, slot_equivalents: 1.0, energy_cost: 0.0 }
    }
}

/// One discrete channel state with its occurrence probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub state_id: String,
    pub probability: f64,
}

/// A link-layer multiple access channel.
#[derive(Clone)]
pub struct LinkChannel {
    options: Vec<OptionSpec>,
    states: Vec<ChannelState>,
    real: RealPredicate,
    virt: VirtualPredicate,
    max_parallel: usize,
}

impl fmt::Debug for LinkChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinkChannel")
            .field("options", &self.options)
            .field("states", &self.states)
            .field("max_parallel", &self.max_parallel)
            .finish_non_exhaustive()
    }
}

impl LinkChannel {
    pub fn new(
        options: Vec<OptionSpec>,
        states: Vec<ChannelState>,
        real: RealPredicate,
        virt: VirtualPredicate,
        max_parallel: usize,
    ) -> Result<Self> {
        if options.is_empty() {
            return Err(Error::Invalid("channel needs at least one option".into()));
        }
        for o in &options {
            OptionSpec::new(o.rate, o.slot_equivalents, o.energy_cost)?;
        }
        if states.is_empty() {
            return Err(Error::Invalid("channel needs at least one state".into()));
        }
        let mut total = 0.0;
        for s in &states {
            if !(0.0..=1.0).contains(&s.probability) {
                return Err(Error::Invalid(format!(
                    "state probability out of range: {}",
                    s.probability
                )));
            }
            total += s.probability;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("state probabilities sum to {total}, not 1")));
        }
        if max_parallel == 0 {
            return Err(Error::Invalid("max_parallel must be >= 1".into()));
        }
        Ok(Self { options, states, real, virt, max_parallel })
    }

    pub fn num_options(&self) -> usize {
        self.options.len()
    }

    pub fn options(&self) -> &[OptionSpec] {
        &self.options
    }

    pub fn states(&self) -> &[ChannelState] {
        &self.states
    }

    /// Cutoff beyond which the virtual success probability is treated as constant.
    pub fn max_parallel(&self) -> usize {
        self.max_parallel
    }

    pub fn real_success(&self, option: usize, others: &[u32], state: usize) -> f64 {
        (self.real)(option, others, state)
    }

    pub fn virtual_success(&self, parallel: &[u32], state: usize) -> f64 {
        (self.virt)(parallel, state)
    }

    /// Virtual success probability averaged over channel states.
    pub fn virtual_success_avg(&self, parallel: &[u32]) -> f64 {
        self.states
            .iter()
            .enumerate()
            .map(|(s, st)| st.probability * (self.virt)(parallel, s))
            .sum()
    }

    /// Numerically confirms that C_vj(d) is nonincreasing in j for every
    /// direction on a simplex grid with the given step.
    pub fn check_virtual_monotonicity(&self, grid_step: f64) -> Result<()> {
        for d in simplex_grid(self.num_options(), grid_step) {
            let dir = DirectionVector::new(d)?;
            derive_params(self, &dir)?;
        }
        Ok(())
    }
}

/// Enumerates direction vectors on the probability simplex with the given step.
fn simplex_grid(m: usize, step: f64) -> Vec<Vec<f64>> {
    let n = (1.0 / step).round() as usize;
    let mut out = Vec::new();
    let mut current = vec![0usize; m];
    fn rec(m: usize, left: usize, idx: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if idx == m - 1 {
            cur[idx] = left;
            out.push(cur.iter().map(|&c| c as f64 / n as f64).collect());
            return;
        }
        for c in 0..=left {
            cur[idx] = c;
            rec(m, left - c, idx + 1, n, cur, out);
        }
    }
    rec(m, n, 0, n, &mut current, &mut out);
    out
}

/// Channel parameter tables derived for one common direction vector.
///
/// `c_v[j]` is the virtual packet success probability with j parallel real
/// packets; `c_r[i][j]` is the success probability of a real packet using
/// option i transmitted in parallel with j other packets. Both tables are
/// exact expectations over the multinomial option split and the channel
/// state mixture, and are treated as constant beyond `max_parallel`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    c_r: Vec<Vec<f64>>,
    c_v: Vec<f64>,
    direction: DirectionVector,
    options: Vec<OptionSpec>,
}

impl ChannelParams {
    /// Builds params directly from tables; the testing entry path.
    ///
    /// The virtual table must be nonincreasing within 1e-12.
    pub fn from_tables(
        c_r: Vec<Vec<f64>>,
        c_v: Vec<f64>,
        options: Vec<OptionSpec>,
        direction: DirectionVector,
    ) -> Result<Self> {
        if c_r.len() != options.len() {
            return Err(Error::Invalid("c_r must have one row per option".into()));
        }
        if c_v.is_empty() {
            return Err(Error::Invalid("c_v table must be nonempty".into()));
        }
        for row in c_r.iter().chain(std::iter::once(&c_v)) {
            for &v in row {
                if !(-1e-9..=1.0 + 1e-9).contains(&v) {
                    return Err(Error::Invalid(format!("table entry out of [0,1]: {v}")));
                }
            }
        }
        check_nonincreasing(&c_v)?;
        Ok(Self { c_r, c_v, direction, options })
    }

    pub fn direction(&self) -> &DirectionVector {
        &self.direction
    }

    pub fn options(&self) -> &[OptionSpec] {
        &self.options
    }

    pub fn num_options(&self) -> usize {
        self.options.len()
    }

    /// Largest tabulated parallel-packet count.
    pub fn max_parallel(&self) -> usize {
        self.c_v.len() - 1
    }

    /// C_vj, constant beyond the table end.
    pub fn c_v(&self, j: usize) -> f64 {
        self.c_v[j.min(self.c_v.len() - 1)]
    }

    /// C_rij, constant beyond the table end.
    pub fn c_r(&self, option: usize, j: usize) -> f64 {
        let row = &self.c_r[option];
        row[j.min(row.len() - 1)]
    }

    pub fn c_v_table(&self) -> &[f64] {
        &self.c_v
    }

    pub fn c_r_table(&self) -> &[Vec<f64>] {
        &self.c_r
    }
}

fn check_nonincreasing(c_v: &[f64]) -> Result<()> {
    for j in 0..c_v.len() - 1 {
        if c_v[j + 1] > c_v[j] + 1e-12 {
            return Err(Error::Invalid(format!(
                "virtual parameters increase at j={j}: {} -> {}",
                c_v[j],
                c_v[j + 1]
            )));
        }
    }
    Ok(())
}

/// Derives the channel parameter tables for a common direction vector by
/// exact enumeration over multinomial option splits and channel states.
pub fn derive_params(channel: &LinkChannel, d: &DirectionVector) -> Result<ChannelParams> {
    let m = channel.num_options();
    if d.len() != m {
        return Err(Error::Invalid(format!(
            "direction has {} entries, channel has {} options",
            d.len(),
            m
        )));
    }
    let nmax = channel.max_parallel();
    let mut c_v = vec![0.0; nmax + 1];
    let mut c_r = vec![vec![0.0; nmax + 1]; m];

    let mut counts = vec![0u32; m];
    for j in 0..=nmax {
        let mut vsum = 0.0;
        let mut rsum = vec![0.0; m];
        for_each_split(j as u32, d.entries(), &mut counts, 0, 1.0, &mut |counts, w| {
            for (s, st) in channel.states().iter().enumerate() {
                let sw = w * st.probability;
                if sw == 0.0 {
                    continue;
                }
                let pv = channel.virtual_success(counts, s);
                if !(-1e-9..=1.0 + 1e-9).contains(&pv) {
                    return Err(Error::Invalid(format!(
                        "virtual predicate returned {pv} outside [0,1]"
                    )));
                }
                vsum += sw * pv;
                for (i, r) in rsum.iter_mut().enumerate() {
                    let pr = channel.real_success(i, counts, s);
                    if !(-1e-9..=1.0 + 1e-9).contains(&pr) {
                        return Err(Error::Invalid(format!(
                            "real predicate returned {pr} outside [0,1]"
                        )));
                    }
                    *r += sw * pr;
                }
            }
            Ok(())
        })?;
        c_v[j] = vsum.clamp(0.0, 1.0);
        for i in 0..m {
            c_r[i][j] = rsum[i].clamp(0.0, 1.0);
        }
    }
    check_nonincreasing(&c_v)?;
    Ok(ChannelParams { c_r, c_v, direction: d.clone(), options: channel.options().to_vec() })
}

/// Visits every split of `total` packets over options with its multinomial
/// probability weight under direction `d`. Splits with zero weight are skipped.
fn for_each_split(
    total: u32,
    d: &[f64],
    counts: &mut Vec<u32>,
    idx: usize,
    weight: f64,
    f: &mut impl FnMut(&[u32], f64) -> Result<()>,
) -> Result<()> {
    if idx == d.len() - 1 {
        counts[idx] = total;
        let w = weight * pow_or_zero(d[idx], total);
        if w != 0.0 {
            f(counts, w)?;
        }
        return Ok(());
    }
    let mut remaining_weight = weight;
    for n in 0..=total {
        // weight accumulates choose(total_remaining, n) * d^n term by term
        if n > 0 {
            remaining_weight *= (total - n + 1) as f64 / n as f64 * d[idx];
            if remaining_weight == 0.0 {
                break;
            }
        }
        counts[idx] = n;
        for_each_split(total - n, d, counts, idx + 1, remaining_weight, f)?;
    }
    Ok(())
}

fn pow_or_zero(base: f64, exp: u32) -> f64 {
    if exp == 0 {
        1.0
    } else if base == 0.0 {
        0.0
    } else {
        base.powi(exp as i32)
    }
}

/// First index where the virtual parameters drop by more than `eps_v`,
/// or `None` when the virtual packet cannot distinguish contention levels.
pub fn j_epsilon(params: &ChannelParams, eps_v: f64) -> Option<usize> {
    let c_v = params.c_v_table();
    (0..c_v.len() - 1).find(|&j| c_v[j] > c_v[j + 1] + eps_v)
}

/// Weighted-average drop index minimized over admissible table lengths.
///
/// Evaluates, for every N with N >= J_eps and N >= x* - b up to the table
/// cutoff, the ratio of first-moment to zeroth-moment drop sums with odds
/// weight t = p_{N+1}/(1-p_{N+1}), p_{N+1} = min(p_max, x*/(N+1+b)), and
/// returns the minimum ratio.
pub fn gamma_epsilon(
    params: &ChannelParams,
    eps_v: f64,
    x_star: f64,
    b: f64,
    p_max: f64,
) -> Result<f64> {
    if !(x_star > 0.0) {
        return Err(Error::Invalid(format!("x_star must be > 0, got {x_star}")));
    }
    if !(b >= 1.0) {
        return Err(Error::Invalid(format!("b must be >= 1, got {b}")));
    }
    let j_eps = j_epsilon(params, eps_v).ok_or(Error::DegenerateVirtualChannel)?;
    let nmax = params.max_parallel();
    let n_lo = (j_eps as f64).max((x_star - b).ceil()).max(0.0) as usize;
    if nmax < n_lo {
        return Err(Error::Invalid(format!(
            "table cutoff {nmax} below first admissible N={n_lo}"
        )));
    }
    let mut gamma = f64::INFINITY;
    for n in n_lo..=nmax {
        let p_next = p_max.min(x_star / (n as f64 + 1.0 + b));
        let t = p_next / (1.0 - p_next);
        let mut num = 0.0;
        let mut den = 0.0;
        let mut w = 1.0; // choose(n, j) * t^j, built up incrementally
        for j in 0..=n {
            let drop = params.c_v(j) - params.c_v(j + 1);
            num += j as f64 * w * drop;
            den += w * drop;
            if j < n {
                w *= (n - j) as f64 / (j + 1) as f64 * t;
            }
            if w > 1e250 {
                num /= 1e50;
                den /= 1e50;
                w /= 1e50;
            }
        }
        if den > 0.0 {
            let ratio = num / den;
            if ratio < gamma {
                gamma = ratio;
            }
        }
    }
    if gamma.is_infinite() {
        return Err(Error::DegenerateVirtualChannel);
    }
    Ok(gamma)
}

/// Factory constructors for the standard channels used by the presets.
pub mod builtin {
    use super::*;

    fn capacity_channel(
        options: Vec<OptionSpec>,
        caps: Vec<(f64, f64)>,
        virtual_units: f64,
        max_parallel: usize,
    ) -> Result<LinkChannel> {
        let units: Vec<f64> = options.iter().map(|o| o.slot_equivalents).collect();
        let cap_values: Vec<f64> = caps.iter().map(|&(c, _)| c).collect();
        let states = caps
            .iter()
            .map(|&(c, p)| ChannelState { state_id: format!("cap{c}"), probability: p })
            .collect();
        let load =
            |counts: &[u32], units: &[f64]| -> f64 {
                counts.iter().zip(units).map(|(&n, &u)| n as f64 * u).sum()
            };
        let real = {
            let units = units.clone();
            let cap_values = cap_values.clone();
            Arc::new(move |opt: usize, others: &[u32], state: usize| {
                if units[opt] + load(others, &units) <= cap_values[state] + 1e-9 {
                    1.0
                } else {
                    0.0
                }
            })
        };
        let virt = Arc::new(move |parallel: &[u32], state: usize| {
            if virtual_units + load(parallel, &units) <= cap_values[state] + 1e-9 {
                1.0
            } else {
                0.0
            }
        });
        LinkChannel::new(options, states, real, virt, max_parallel)
    }

    /// Classical collision channel: any parallel transmission destroys all packets.
    pub fn collision() -> LinkChannel {
        threshold(1)
    }

    /// Multi-packet reception channel supporting up to `capacity` parallel packets.
    pub fn threshold(capacity: u32) -> LinkChannel {
        capacity_channel(vec![OptionSpec::unit()], vec![(capacity as f64, 1.0)], 1.0, 64)
            .expect("threshold channel parameters are valid")
    }

    /// Channel whose capacity is drawn per slot from a discrete mixture.
    pub fn capacity_mixture(caps: &[(u32, f64)]) -> Result<LinkChannel> {
        if caps.is_empty() {
            return Err(Error::Invalid("mixture needs at least one component".into()));
        }
        let caps: Vec<(f64, f64)> = caps.iter().map(|&(c, p)| (c as f64, p)).collect();
        capacity_channel(vec![OptionSpec::unit()], caps, 1.0, 64)
    }

    /// Two-state fading channel supporting 4 packets with probability 0.3
    /// and 6 packets with probability 0.7.
    pub fn fading_example() -> LinkChannel {
        capacity_mixture(&[(4, 0.3), (6, 0.7)]).expect("valid mixture")
    }

    /// Multi-option channel where each option consumes `slot_equivalents`
    /// capacity units and the slot supports `capacity` units in parallel.
    pub fn slot_equivalents(
        options: Vec<OptionSpec>,
        capacity: f64,
        virtual_units: f64,
    ) -> Result<LinkChannel> {
        if options.is_empty() {
            return Err(Error::Invalid("need at least one option".into()));
        }
        if !(capacity > 0.0) || !(virtual_units > 0.0) {
            return Err(Error::Invalid("capacity and virtual_units must be > 0".into()));
        }
        capacity_channel(options, vec![(capacity, 1.0)], virtual_units, 64)
    }

    /// Two-option channel: a high-rate packet equals four low-rate packets
    /// and the slot supports twelve low-rate packets in parallel. The
    /// virtual packet is one high-rate packet.
    pub fn two_option_example() -> LinkChannel {
        slot_equivalents(
            vec![
                OptionSpec { rate: 4.0, slot_equivalents: 4.0, energy_cost: 0.0 },
                OptionSpec { rate: 1.0, slot_equivalents: 1.0, energy_cost: 0.0 },
            ],
            12.0,
            4.0,
        )
        .expect("valid channel")
    }

    /// Direct-table channel for testing: one state, single option.
    pub fn from_tables(c_r: Vec<f64>, c_v: Vec<f64>) -> Result<LinkChannel> {
        let c_r_shared = Arc::new(c_r);
        let c_v_shared = Arc::new(c_v);
        let nmax = c_v_shared.len().saturating_sub(1).max(1);
        let real = {
            let t = Arc::clone(&c_r_shared);
            Arc::new(move |_opt: usize, others: &[u32], _state: usize| {
                let j = others.iter().sum::<u32>() as usize;
                t[j.min(t.len() - 1)]
            })
        };
        let virt = {
            let t = Arc::clone(&c_v_shared);
            Arc::new(move |parallel: &[u32], _state: usize| {
                let j = parallel.iter().sum::<u32>() as usize;
                t[j.min(t.len() - 1)]
            })
        };
        LinkChannel::new(
            vec![OptionSpec::unit()],
            vec![ChannelState { state_id: "s0".into(), probability: 1.0 }],
            real,
            virt,
            nmax,
        )
    }

    /// Named standard instances.
    pub fn catalog() -> Vec<(&'static str, LinkChannel)> {
        vec![
            ("collision", collision()),
            ("fading_example", fading_example()),
            ("two_option_example", two_option_example()),
        ]
    }
}
