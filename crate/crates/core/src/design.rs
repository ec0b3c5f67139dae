//! Design-time constants and functions: asymptotic load optimization,
//! utility evaluation, single- and multi-option design construction,
//! pinpoint verification, and the interpolation that completes a
//! multi-option design between its pinpoints.

use crate::channel::{
    derive_params, gamma_epsilon, j_epsilon, ChannelParams, LinkChannel,
};
use crate::contention::{
    binom_expect, qv_common, qv_noninteger_p, DirectionVector, TransmitProfile,
};
use crate::error::{Error, Result};

/// Which symmetric network utility the design optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKind {
    /// Sum throughput in packets per slot for single-option channels.
    SumThroughputSingle,
    /// Rate-weighted sum throughput for multi-option channels.
    SumThroughputMulti,
    /// Sum throughput minus a per-transmission energy charge.
    EnergyWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UtilitySpec {
    pub kind: UtilityKind,
    #[serde(default)]
    pub energy_weight: f64,
}

impl UtilitySpec {
    pub fn sum_throughput_single() -> Self {
        Self { kind: UtilityKind::SumThroughputSingle, energy_weight: 0.0 }
    }

    pub fn sum_throughput_multi() -> Self {
        Self { kind: UtilityKind::SumThroughputMulti, energy_weight: 0.0 }
    }

    pub fn energy_weighted(energy_weight: f64) -> Self {
        Self { kind: UtilityKind::EnergyWeighted, energy_weight }
    }

    pub fn validate_for(&self, num_options: usize) -> Result<()> {
        if self.energy_weight < 0.0 {
            return Err(Error::Invalid("energy weight must be >= 0".into()));
        }
        match self.kind {
            UtilityKind::SumThroughputSingle | UtilityKind::EnergyWeighted => {
                if num_options != 1 {
                    return Err(Error::Invalid(format!(
                        "{:?} requires a single-option channel, got {num_options} options",
                        self.kind
                    )));
                }
            }
            UtilityKind::SumThroughputMulti => {}
        }
        Ok(())
    }

    pub fn energy(&self) -> f64 {
        match self.kind {
            UtilityKind::EnergyWeighted => self.energy_weight,
            _ => 0.0,
        }
    }

    /// Per-count success coefficients of the equivalent single-option
    /// system: rate-weighted over options for the multi kind.
    fn equivalent_crj(&self, params: &ChannelParams) -> Vec<f64> {
        let nmax = params.max_parallel();
        match self.kind {
            UtilityKind::SumThroughputSingle | UtilityKind::EnergyWeighted => {
                (0..=nmax).map(|j| params.c_r(0, j)).collect()
            }
            UtilityKind::SumThroughputMulti => (0..=nmax)
                .map(|j| {
                    params
                        .options()
                        .iter()
                        .enumerate()
                        .map(|(i, o)| params.direction().get(i) * o.rate * params.c_r(i, j))
                        .sum()
                })
                .collect(),
        }
    }
}

/// Poisson-limit utility per unit load x, exact under the constant-tail fold.
fn limit_utility(x: f64, crj: &[f64], energy: f64) -> f64 {
    let fold = *crj.last().unwrap();
    let mut term = x * (-x).exp();
    let mut sum = 0.0;
    for (j, &c) in crj.iter().enumerate() {
        sum += term * (c - fold);
        term *= x / (j + 1) as f64;
    }
    sum + (fold - energy) * x
}

/// Derivative of the Poisson-limit utility with respect to the load.
fn limit_utility_deriv(x: f64, crj: &[f64], energy: f64) -> f64 {
    let fold = *crj.last().unwrap();
    // d/dx [e^-x x^(j+1)/j!] = e^-x ((j+1) x^j - x^(j+1)) / j!
    let mut xj_over_fact = (-x).exp();
    let mut sum = 0.0;
    for (j, &c) in crj.iter().enumerate() {
        sum += (c - fold) * xj_over_fact * ((j + 1) as f64 - x);
        xj_over_fact *= x / (j + 1) as f64;
    }
    sum + (fold - energy)
}

/// Maximizes the asymptotic (large-K) utility over the expected channel
/// load, returning the optimal load x*.
pub fn asymptotic_xstar(utility: &UtilitySpec, params: &ChannelParams) -> Result<f64> {
    utility.validate_for(params.num_options())?;
    let crj = utility.equivalent_crj(params);
    let fold = *crj.last().unwrap();
    if fold - utility.energy() > 1e-12 {
        return Err(Error::Design(
            "asymptotic utility is unbounded above: success persists at every contention level"
                .into(),
        ));
    }
    let last = crj
        .iter()
        .rposition(|&c| c > 1e-12)
        .ok_or_else(|| Error::Design("utility is identically zero".into()))?;
    let x_hi = 2.0 * (last as f64 + 1.0);
    let g = |x: f64| limit_utility(x, &crj, utility.energy());

    let steps = (x_hi / 1e-3).ceil() as usize;
    let mut best_x = x_hi / steps as f64;
    let mut best_v = g(best_x);
    for i in 2..=steps {
        let x = x_hi * i as f64 / steps as f64;
        let v = g(x);
        if v > best_v {
            best_v = v;
            best_x = x;
        }
    }
    let step = x_hi / steps as f64;
    let mut lo = (best_x - step).max(step * 1e-3);
    let mut hi = best_x + step;
    // a sign change of the derivative pins the optimum to full precision;
    // a flat or boundary optimum falls back to ternary refinement
    let dg = |x: f64| limit_utility_deriv(x, &crj, utility.energy());
    if dg(lo) > 0.0 && dg(hi) < 0.0 {
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if dg(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return Ok(0.5 * (lo + hi));
    }
    while hi - lo > 1e-6 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if g(m1) < g(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Exact finite-K utility when all K users hold the given profile.
pub fn utility_eval(
    utility: &UtilitySpec,
    params: &ChannelParams,
    k: usize,
    profile: &TransmitProfile,
) -> f64 {
    debug_assert!(profile.direction().approx_eq(params.direction(), 1e-9));
    if k == 0 {
        return 0.0;
    }
    let p = profile.p();
    let nmax = params.max_parallel();
    let kf = k as f64;
    let throughput = match utility.kind {
        UtilityKind::SumThroughputSingle | UtilityKind::EnergyWeighted => {
            kf * p * binom_expect(k - 1, p, nmax, |j| params.c_r(0, j))
        }
        UtilityKind::SumThroughputMulti => params
            .options()
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let di = params.direction().get(i);
                if di == 0.0 {
                    0.0
                } else {
                    kf * p * di * o.rate * binom_expect(k - 1, p, nmax, |j| params.c_r(i, j))
                }
            })
            .sum(),
    };
    throughput - utility.energy() * kf * p
}

/// Grid search for the utility-maximizing common profile. The direction
/// simplex is searched for two-option channels; ties break toward the
/// smaller probability, then the lexicographically smaller direction.
pub fn optimal_profile(
    utility: &UtilitySpec,
    channel: &LinkChannel,
    k: usize,
    grid_step: f64,
) -> Result<TransmitProfile> {
    if k == 0 {
        return Err(Error::Invalid("user count must be >= 1".into()));
    }
    if !(grid_step > 0.0 && grid_step <= 0.005 + 1e-12) {
        return Err(Error::Invalid(format!("grid step must lie in (0, 0.005], got {grid_step}")));
    }
    let m = channel.num_options();
    utility.validate_for(m)?;
    let directions: Vec<DirectionVector> = match m {
        1 => vec![DirectionVector::single()],
        2 => {
            let n = (1.0 / grid_step).round() as usize;
            (0..=n)
                .map(|i| {
                    let d1 = i as f64 / n as f64;
                    DirectionVector::new(vec![d1, 1.0 - d1]).expect("on-simplex grid point")
                })
                .collect()
        }
        _ => {
            return Err(Error::Invalid(
                "direction grid search supports at most two options".into(),
            ))
        }
    };
    let tables: Vec<ChannelParams> = directions
        .iter()
        .map(|d| derive_params(channel, d))
        .collect::<Result<_>>()?;

    let n = (1.0 / grid_step).round() as usize;
    let mut best: Option<(f64, TransmitProfile)> = None;
    for ip in 0..=n {
        let p = ip as f64 / n as f64;
        for (d, params) in directions.iter().zip(&tables) {
            let profile = TransmitProfile::new(p, d.clone())?;
            let u = utility_eval(utility, params, k, &profile);
            match &best {
                Some((bu, _)) if u <= *bu => {}
                _ => best = Some((u, profile)),
            }
        }
    }
    Ok(best.expect("grid is nonempty").1)
}

/// All constants of a single-transmission-option design.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleOptionDesign {
    pub x_star: f64,
    pub b: f64,
    pub eps_v: f64,
    pub j_eps: usize,
    pub gamma_eps: f64,
    pub p_max: f64,
    pub k_cap: u32,
    pub params: ChannelParams,
}

impl SingleOptionDesign {
    /// Theorem hypothesis and internal consistency checks.
    pub fn validate(&self) -> Result<()> {
        let floor = 1.0f64.max(self.x_star - self.gamma_eps);
        if !(self.b > floor) {
            return Err(Error::Design(format!(
                "b={} must strictly exceed max(1, x*-gamma)={floor}",
                self.b
            )));
        }
        let expect_pmax = 1.0f64.min(self.x_star / (self.j_eps as f64 + self.b));
        if (self.p_max - expect_pmax).abs() > 1e-9 {
            return Err(Error::Design(format!(
                "p_max={} inconsistent with min(1, x*/(J+b))={expect_pmax}",
                self.p_max
            )));
        }
        if self.k_cap as f64 <= self.j_eps as f64 + 1.0 {
            return Err(Error::Design("k_cap must exceed J_eps + 1".into()));
        }
        Ok(())
    }

    /// Probability target as a function of the user number estimate.
    pub fn p_of_khat(&self, k_hat: f64) -> f64 {
        self.p_max.min(self.x_star / (k_hat + self.b))
    }

    pub fn equilibrium_p(&self, k: usize) -> f64 {
        self.p_of_khat(k as f64)
    }

    pub fn equilibrium_profile(&self, k: usize) -> TransmitProfile {
        TransmitProfile::new(self.equilibrium_p(k), self.params.direction().clone())
            .expect("equilibrium probability is in range")
    }
}

/// Iterates the mutual dependence between b and gamma to a fixed point:
/// gamma's admissible range depends on b while b is set from gamma.
fn resolve_b_gamma(
    params: &ChannelParams,
    eps_v: f64,
    x_star: f64,
    j_eps: usize,
    b_margin: f64,
) -> Result<(f64, f64)> {
    let mut b = 1.0f64.max(x_star - j_eps as f64) + b_margin;
    for _ in 0..100 {
        let p_max = 1.0f64.min(x_star / (j_eps as f64 + b));
        let gamma = gamma_epsilon(params, eps_v, x_star, b, p_max)?;
        let next = 1.0f64.max(x_star - gamma) + b_margin;
        if (next - b).abs() < 1e-12 {
            return Ok((b, gamma));
        }
        b = next;
    }
    Err(Error::Design("b/gamma iteration did not converge".into()))
}

/// Builds a single-option design from parameter tables and a chosen
/// asymptotic load target.
pub fn design_from_params(
    params: ChannelParams,
    x_star: f64,
    eps_v: f64,
    b_margin: f64,
    k_cap: u32,
) -> Result<SingleOptionDesign> {
    if !(eps_v > 0.0) {
        return Err(Error::Invalid("eps_v must be > 0".into()));
    }
    if !(b_margin > 0.0) {
        return Err(Error::Invalid("b_margin must be > 0".into()));
    }
    let j_eps = j_epsilon(&params, eps_v).ok_or(Error::DegenerateVirtualChannel)?;
    let (b, gamma_eps) = resolve_b_gamma(&params, eps_v, x_star, j_eps, b_margin)?;
    let p_max = 1.0f64.min(x_star / (j_eps as f64 + b));
    let design = SingleOptionDesign { x_star, b, eps_v, j_eps, gamma_eps, p_max, k_cap, params };
    design.validate()?;
    Ok(design)
}

/// Builds a single-option design for a channel restricted to one direction.
pub fn build_single_for_direction(
    channel: &LinkChannel,
    utility: &UtilitySpec,
    d: &DirectionVector,
    eps_v: f64,
    b_margin: f64,
    k_cap: u32,
) -> Result<SingleOptionDesign> {
    let params = derive_params(channel, d)?;
    let x_star = asymptotic_xstar(utility, &params)?;
    design_from_params(params, x_star, eps_v, b_margin, k_cap)
}

/// Builds a single-option design for a single-option channel.
pub fn build_single_design(
    channel: &LinkChannel,
    utility: &UtilitySpec,
    eps_v: f64,
    b_margin: f64,
) -> Result<SingleOptionDesign> {
    if channel.num_options() != 1 {
        return Err(Error::Invalid(
            "build_single_design requires a single-option channel".into(),
        ));
    }
    build_single_for_direction(channel, utility, &DirectionVector::single(), eps_v, b_margin, 1000)
}

/// A manually designed anchor of the multi-option target function.
#[derive(Debug, Clone, PartialEq)]
pub struct Pinpoint {
    pub k_hat: u32,
    pub profile: TransmitProfile,
}

/// Outcome of one verification item.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemCheck {
    pub pass: bool,
    pub detail: String,
    /// The first violating interpolation coordinate, when applicable.
    pub first_violation: Option<f64>,
}

impl ItemCheck {
    fn pass(detail: impl Into<String>) -> Self {
        Self { pass: true, detail: detail.into(), first_violation: None }
    }

    fn fail(detail: impl Into<String>, at: Option<f64>) -> Self {
        Self { pass: false, detail: detail.into(), first_violation: at }
    }
}

/// Per-item result of the pinpoint condition verifier.
#[derive(Debug, Clone, PartialEq)]
pub struct PinpointReport {
    /// Items 1-4: contention drop, threshold clearance, probability bounds,
    /// and the bracketing inequality.
    pub items: Vec<ItemCheck>,
    /// Theoretical contention measure at each pinpoint.
    pub qv_star: Vec<f64>,
}

impl PinpointReport {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }

    pub fn first_failure(&self) -> Option<u8> {
        self.items.iter().position(|i| !i.pass).map(|i| i as u8 + 1)
    }
}

const LAMBDA_GRID_STEP: f64 = 0.01;

/// Checks the four pinpoint condition items on a fine interpolation grid.
pub fn verify_pinpoints(
    pinpoints: &[Pinpoint],
    channel: &LinkChannel,
    eps_v: f64,
    eps_q: f64,
    p_bounds: (f64, f64),
) -> Result<PinpointReport> {
    if pinpoints.is_empty() {
        return Err(Error::Invalid("need at least one pinpoint".into()));
    }
    let (p_lo, p_hi) = p_bounds;
    if !(0.0 < p_lo && p_lo < p_hi && p_hi < 1.0) {
        return Err(Error::Invalid(format!(
            "probability bounds must satisfy 0 < lo < hi < 1, got ({p_lo}, {p_hi})"
        )));
    }
    if !(eps_q > 0.0) {
        return Err(Error::Invalid("eps_q must be > 0".into()));
    }
    let m = channel.num_options();
    for w in pinpoints.windows(2) {
        if w[1].k_hat <= w[0].k_hat {
            return Err(Error::Invalid("pinpoint k_hat values must be strictly increasing".into()));
        }
    }
    for pin in pinpoints {
        if pin.profile.direction().len() != m {
            return Err(Error::Invalid("pinpoint direction does not match the channel".into()));
        }
    }

    let qv_star: Vec<f64> = pinpoints
        .iter()
        .map(|pin| {
            let params = derive_params(channel, pin.profile.direction())?;
            Ok(qv_common(&params, pin.profile.p(), pin.k_hat as usize))
        })
        .collect::<Result<_>>()?;

    // Item 1: contention measure drops by at least eps_q between pinpoints.
    let mut item1 = ItemCheck::pass(format!("all drops >= eps_q={eps_q}"));
    for i in 1..pinpoints.len() {
        let drop = qv_star[i - 1] - qv_star[i];
        if drop < eps_q {
            item1 = ItemCheck::fail(
                format!(
                    "drop {drop:.6} between k_hat={} and k_hat={} is below eps_q={eps_q}",
                    pinpoints[i - 1].k_hat,
                    pinpoints[i].k_hat
                ),
                Some(pinpoints[i].k_hat as f64),
            );
            break;
        }
    }

    // Items 2 and 4 share the lambda grid and the derived tables.
    let mut item2 = ItemCheck::pass("k_hat above the drop threshold along every segment");
    let mut item4 = ItemCheck::pass("bracketing inequality holds along every segment");
    'outer: for i in 1..pinpoints.len() {
        let (a, b) = (&pinpoints[i - 1], &pinpoints[i]);
        let steps = (1.0 / LAMBDA_GRID_STEP).round() as usize;
        for s in 0..steps {
            let lambda = s as f64 * LAMBDA_GRID_STEP;
            let k_l = (1.0 - lambda) * a.k_hat as f64 + lambda * b.k_hat as f64;
            let d_l = a.profile.direction().blend(b.profile.direction(), lambda);
            let q_l = (1.0 - lambda) * qv_star[i - 1] + lambda * qv_star[i];
            let params = derive_params(channel, &d_l)?;
            if item2.pass {
                match j_epsilon(&params, eps_v) {
                    Some(j) if (j as f64) < k_l => {}
                    Some(j) => {
                        item2 = ItemCheck::fail(
                            format!("k_hat={k_l:.4} does not exceed J_eps={j} at lambda={lambda}"),
                            Some(lambda),
                        );
                    }
                    None => {
                        item2 = ItemCheck::fail(
                            format!("no contention drop exists at lambda={lambda}"),
                            Some(lambda),
                        );
                    }
                }
            }
            if item4.pass {
                let upper = qv_noninteger_p(&params, p_hi, k_l);
                let lower = qv_noninteger_p(&params, p_lo, k_l);
                if !(upper <= q_l + 1e-12 && q_l <= lower + 1e-12) {
                    item4 = ItemCheck::fail(
                        format!(
                            "target {q_l:.6} escapes bracket [{upper:.6}, {lower:.6}] at lambda={lambda}"
                        ),
                        Some(lambda),
                    );
                }
            }
            if !item2.pass && !item4.pass {
                break 'outer;
            }
        }
    }

    // Item 3: pinpoint probabilities stay strictly inside the bounds.
    let mut item3 = ItemCheck::pass(format!("all pinpoint probabilities within [{p_lo}, {p_hi}]"));
    for pin in pinpoints {
        let p = pin.profile.p();
        if !(p_lo <= p && p <= p_hi) {
            item3 = ItemCheck::fail(
                format!("pinpoint k_hat={} has p={p} outside [{p_lo}, {p_hi}]", pin.k_hat),
                Some(pin.k_hat as f64),
            );
            break;
        }
    }

    Ok(PinpointReport { items: vec![item1, item2, item3, item4], qv_star })
}

/// The dense target tables of a multi-option design over the middle region.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignGrid {
    k: Vec<f64>,
    profiles: Vec<Vec<f64>>,
    qv_star: Vec<f64>,
}

impl DesignGrid {
    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn k_values(&self) -> &[f64] {
        &self.k
    }

    pub fn profiles(&self) -> &[Vec<f64>] {
        &self.profiles
    }

    pub fn qv_star_values(&self) -> &[f64] {
        &self.qv_star
    }

    pub fn from_tables(k: Vec<f64>, profiles: Vec<Vec<f64>>, qv_star: Vec<f64>) -> Result<Self> {
        if k.is_empty() || k.len() != profiles.len() || k.len() != qv_star.len() {
            return Err(Error::Invalid("grid tables must be nonempty and equally long".into()));
        }
        for w in k.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Invalid("grid k values must be strictly increasing".into()));
            }
        }
        Ok(Self { k, profiles, qv_star })
    }

    /// Locates k_hat: either an exact node (within 1e-9) or a segment with
    /// its interpolation weight.
    fn locate(&self, k_hat: f64) -> (usize, Option<f64>) {
        if k_hat <= self.k[0] {
            return (0, None);
        }
        let last = self.k.len() - 1;
        if k_hat >= self.k[last] {
            return (last, None);
        }
        let idx = self.k.partition_point(|&x| x <= k_hat) - 1;
        if (self.k[idx] - k_hat).abs() < 1e-9 {
            return (idx, None);
        }
        if (self.k[idx + 1] - k_hat).abs() < 1e-9 {
            return (idx + 1, None);
        }
        let w = (k_hat - self.k[idx]) / (self.k[idx + 1] - self.k[idx]);
        (idx, Some(w))
    }

    pub fn qv_star_at(&self, k_hat: f64) -> f64 {
        match self.locate(k_hat) {
            (i, None) => self.qv_star[i],
            (i, Some(w)) => (1.0 - w) * self.qv_star[i] + w * self.qv_star[i + 1],
        }
    }

    pub fn profile_at(&self, k_hat: f64) -> Vec<f64> {
        match self.locate(k_hat) {
            (i, None) => self.profiles[i].clone(),
            (i, Some(w)) => self.profiles[i]
                .iter()
                .zip(&self.profiles[i + 1])
                .map(|(a, b)| (1.0 - w) * a + w * b)
                .collect(),
        }
    }
}

/// Completes the target function between pinpoints: for every grid point,
/// the direction and the contention target are linear blends of the
/// neighboring pinpoints and the probability solves the blended-count
/// contention equation by bisection.
pub fn interpolate_pinpoints(
    pinpoints: &[Pinpoint],
    channel: &LinkChannel,
    eps_v: f64,
    delta_k: f64,
    p_bounds: (f64, f64),
    eps_q: f64,
) -> Result<DesignGrid> {
    if !(delta_k > 0.0) {
        return Err(Error::Invalid("delta_k must be > 0".into()));
    }
    let report = verify_pinpoints(pinpoints, channel, eps_v, eps_q, p_bounds)?;
    if let Some(item) = report.first_failure() {
        let detail = report.items[item as usize - 1].detail.clone();
        return Err(Error::Pinpoint { item, detail });
    }
    if pinpoints.len() == 1 {
        let pin = &pinpoints[0];
        return DesignGrid::from_tables(
            vec![pin.k_hat as f64],
            vec![pin.profile.vector()],
            vec![report.qv_star[0]],
        );
    }
    let (p_lo, p_hi) = p_bounds;
    let mut k = Vec::new();
    let mut profiles = Vec::new();
    let mut qv_star = Vec::new();
    for i in 1..pinpoints.len() {
        let (a, b) = (&pinpoints[i - 1], &pinpoints[i]);
        let span = (b.k_hat - a.k_hat) as f64;
        let steps = (span / delta_k).round().max(1.0) as usize;
        let start = if i == 1 { 0 } else { 1 };
        for s in start..=steps {
            let lambda = s as f64 / steps as f64;
            let k_l = (1.0 - lambda) * a.k_hat as f64 + lambda * b.k_hat as f64;
            let d_l = a.profile.direction().blend(b.profile.direction(), lambda);
            let q_l = (1.0 - lambda) * report.qv_star[i - 1] + lambda * report.qv_star[i];
            let p = if s == 0 {
                a.profile.p()
            } else if s == steps {
                b.profile.p()
            } else {
                let params = derive_params(channel, &d_l)?;
                let mut lo = p_lo;
                let mut hi = p_hi;
                // contention is nonincreasing in p; the bracket is item 4
                while hi - lo > 1e-13 {
                    let mid = 0.5 * (lo + hi);
                    if qv_noninteger_p(&params, mid, k_l) >= q_l {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            };
            k.push(k_l);
            profiles.push(d_l.entries().iter().map(|&e| p * e).collect());
            qv_star.push(q_l);
        }
    }
    DesignGrid::from_tables(k, profiles, qv_star)
}

/// A complete multi-option design: head and tail single-option designs
/// plus the interpolated tables bridging them.
#[derive(Debug, Clone)]
pub struct MultiOptionDesign {
    pub head: SingleOptionDesign,
    pub tail: SingleOptionDesign,
    pub k_lower: u32,
    pub k_upper: u32,
    pub pinpoints: Vec<Pinpoint>,
    pub pinpoint_qv_star: Vec<f64>,
    pub grid: DesignGrid,
    pub k_cap: u32,
    pub p_bounds: (f64, f64),
    pub eps_q: f64,
    pub channel: LinkChannel,
}

impl MultiOptionDesign {
    pub fn num_options(&self) -> usize {
        self.channel.num_options()
    }

    pub fn validate(&self) -> Result<()> {
        self.head.validate()?;
        self.tail.validate()?;
        if self.k_lower > self.k_upper {
            return Err(Error::Design("k_lower must not exceed k_upper".into()));
        }
        if (self.k_lower as usize) < self.head.j_eps {
            return Err(Error::Design(format!(
                "head condition violated: k_lower={} below J_eps={}",
                self.k_lower, self.head.j_eps
            )));
        }
        if self.k_upper as usize <= self.tail.j_eps {
            return Err(Error::Design(format!(
                "tail condition violated: k_upper={} does not exceed J_eps={}",
                self.k_upper, self.tail.j_eps
            )));
        }
        let q = self.grid.qv_star_values();
        for i in 1..q.len() {
            if q[i] >= q[i - 1] {
                return Err(Error::Design(format!(
                    "qv_star table is not strictly decreasing at index {i}"
                )));
            }
        }
        if self.k_cap as f64 <= self.k_upper as f64 + 1.0 {
            return Err(Error::Design("k_cap must exceed k_upper + 1".into()));
        }
        Ok(())
    }

    /// Direction users fall back to before their first transmission.
    pub fn head_direction(&self) -> &DirectionVector {
        self.head.params.direction()
    }

    /// The designed target profile vector at a user number estimate.
    pub fn profile_at(&self, k_hat: f64) -> Vec<f64> {
        if k_hat <= self.k_lower as f64 {
            let p = self.head.p_of_khat(k_hat);
            self.head.params.direction().entries().iter().map(|&e| p * e).collect()
        } else if k_hat >= self.k_upper as f64 {
            let p = self.tail.p_of_khat(k_hat);
            self.tail.params.direction().entries().iter().map(|&e| p * e).collect()
        } else {
            self.grid.profile_at(k_hat)
        }
    }

    pub fn equilibrium_profile(&self, k: usize) -> TransmitProfile {
        let k_eff = (k as f64).max(self.head.j_eps as f64);
        let v = self.profile_at(k_eff);
        TransmitProfile::from_vector(&v, self.head.params.direction())
            .expect("designed profiles are valid")
    }
}

/// How an interior pinpoint is specified.
#[derive(Debug, Clone)]
pub enum InteriorPinpoint {
    /// Fully specified profile.
    Explicit { k_hat: u32, profile: TransmitProfile },
    /// Direction from the utility-optimal profile at this user count, with
    /// the contention target placed on the straight line between the
    /// endpoint values and the probability solved from it.
    OptimalDirectionLine { k_hat: u32 },
}

impl InteriorPinpoint {
    fn k_hat(&self) -> u32 {
        match self {
            InteriorPinpoint::Explicit { k_hat, .. } => *k_hat,
            InteriorPinpoint::OptimalDirectionLine { k_hat } => *k_hat,
        }
    }
}

/// Everything needed to construct a multi-option design.
#[derive(Debug, Clone)]
pub struct MultiDesignSpec {
    pub k_lower: u32,
    pub k_upper: u32,
    pub interior: Vec<InteriorPinpoint>,
    pub eps_v: f64,
    pub b_margin: f64,
    pub eps_q: f64,
    pub delta_k: f64,
    pub p_bounds: (f64, f64),
    pub k_cap: u32,
    /// Head/tail directions; when absent they are taken from the
    /// utility-optimal profiles at k_lower and k_upper.
    pub d_head: Option<DirectionVector>,
    pub d_tail: Option<DirectionVector>,
}

impl MultiDesignSpec {
    pub fn new(k_lower: u32, k_upper: u32) -> Self {
        Self {
            k_lower,
            k_upper,
            interior: Vec::new(),
            eps_v: 0.01,
            b_margin: 0.01,
            eps_q: 0.01,
            delta_k: 0.01,
            p_bounds: (0.001, 0.999),
            k_cap: 1000,
            d_head: None,
            d_tail: None,
        }
    }
}

pub fn build_multi_design(
    channel: &LinkChannel,
    utility: &UtilitySpec,
    spec: &MultiDesignSpec,
) -> Result<MultiOptionDesign> {
    utility.validate_for(channel.num_options())?;
    if spec.k_lower == 0 || spec.k_lower > spec.k_upper {
        return Err(Error::Invalid("need 1 <= k_lower <= k_upper".into()));
    }
    let d_head = match &spec.d_head {
        Some(d) => d.clone(),
        None => optimal_profile(utility, channel, spec.k_lower as usize, 0.005)?
            .direction()
            .clone(),
    };
    let d_tail = match &spec.d_tail {
        Some(d) => d.clone(),
        None => optimal_profile(utility, channel, spec.k_upper as usize, 0.005)?
            .direction()
            .clone(),
    };
    let head =
        build_single_for_direction(channel, utility, &d_head, spec.eps_v, spec.b_margin, spec.k_cap)?;
    let tail =
        build_single_for_direction(channel, utility, &d_tail, spec.eps_v, spec.b_margin, spec.k_cap)?;
    if (spec.k_lower as usize) < head.j_eps {
        return Err(Error::Design(format!(
            "head condition violated: k_lower={} below J_eps={}",
            spec.k_lower, head.j_eps
        )));
    }
    if spec.k_upper as usize <= tail.j_eps {
        return Err(Error::Design(format!(
            "tail condition violated: k_upper={} does not exceed J_eps={}",
            spec.k_upper, tail.j_eps
        )));
    }

    let p_lower_pin = head.p_of_khat(spec.k_lower as f64);
    let p_upper_pin = tail.p_of_khat(spec.k_upper as f64);
    let q_lower = qv_common(&head.params, p_lower_pin, spec.k_lower as usize);
    let q_upper = qv_common(&tail.params, p_upper_pin, spec.k_upper as usize);
    let line = |k: f64| {
        let span = (spec.k_upper - spec.k_lower) as f64;
        (spec.k_upper as f64 - k) / span * q_lower + (k - spec.k_lower as f64) / span * q_upper
    };

    if spec.k_lower == spec.k_upper {
        if !spec.interior.is_empty() {
            return Err(Error::Invalid(
                "interior pinpoints require k_lower < k_upper".into(),
            ));
        }
        let head_vec: Vec<f64> =
            d_head.entries().iter().map(|&e| p_lower_pin * e).collect();
        let tail_vec: Vec<f64> =
            d_tail.entries().iter().map(|&e| p_upper_pin * e).collect();
        let mismatch = head_vec
            .iter()
            .zip(&tail_vec)
            .any(|(a, b)| (a - b).abs() > 1e-9);
        if mismatch {
            return Err(Error::Design(
                "head and tail profiles disagree at the shared boundary".into(),
            ));
        }
    }

    let mut pinpoints = Vec::with_capacity(spec.interior.len() + 2);
    pinpoints.push(Pinpoint {
        k_hat: spec.k_lower,
        profile: TransmitProfile::new(p_lower_pin, d_head.clone())?,
    });
    for ip in &spec.interior {
        let k = ip.k_hat();
        if k <= spec.k_lower || k >= spec.k_upper {
            return Err(Error::Invalid(format!(
                "interior pinpoint k_hat={k} must lie strictly between {} and {}",
                spec.k_lower, spec.k_upper
            )));
        }
        let pin = match ip {
            InteriorPinpoint::Explicit { k_hat, profile } => {
                Pinpoint { k_hat: *k_hat, profile: profile.clone() }
            }
            InteriorPinpoint::OptimalDirectionLine { k_hat } => {
                let d = optimal_profile(utility, channel, *k_hat as usize, 0.005)?
                    .direction()
                    .clone();
                let params = derive_params(channel, &d)?;
                let target = line(*k_hat as f64);
                let (p_lo, p_hi) = spec.p_bounds;
                let q_at_lo = qv_common(&params, p_lo, *k_hat as usize);
                let q_at_hi = qv_common(&params, p_hi, *k_hat as usize);
                if !(q_at_hi <= target && target <= q_at_lo) {
                    return Err(Error::Design(format!(
                        "pinpoint k_hat={k_hat}: target {target:.6} not bracketed by \
                         [{q_at_hi:.6}, {q_at_lo:.6}] over the probability bounds"
                    )));
                }
                let mut lo = p_lo;
                let mut hi = p_hi;
                while hi - lo > 1e-13 {
                    let mid = 0.5 * (lo + hi);
                    if qv_common(&params, mid, *k_hat as usize) >= target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Pinpoint { k_hat: *k_hat, profile: TransmitProfile::new(0.5 * (lo + hi), d)? }
            }
        };
        pinpoints.push(pin);
    }
    if spec.k_upper > spec.k_lower {
        pinpoints.push(Pinpoint {
            k_hat: spec.k_upper,
            profile: TransmitProfile::new(p_upper_pin, d_tail.clone())?,
        });
    }

    let grid = interpolate_pinpoints(
        &pinpoints,
        channel,
        spec.eps_v,
        spec.delta_k,
        spec.p_bounds,
        spec.eps_q,
    )?;
    let pinpoint_qv_star =
        verify_pinpoints(&pinpoints, channel, spec.eps_v, spec.eps_q, spec.p_bounds)?.qv_star;

    let design = MultiOptionDesign {
        head,
        tail,
        k_lower: spec.k_lower,
        k_upper: spec.k_upper,
        pinpoints,
        pinpoint_qv_star,
        grid,
        k_cap: spec.k_cap,
        p_bounds: spec.p_bounds,
        eps_q: spec.eps_q,
        channel: channel.clone(),
    };
    design.validate()?;
    Ok(design)
}

/// Result of the monotonicity and gradient verifier.
#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    pub lipschitz: ItemCheck,
    /// Largest observed difference quotient of the profile table.
    pub k_g: f64,
    pub strict_decrease: ItemCheck,
    /// Smallest observed per-unit decrease of the contention table.
    pub eps_q: f64,
    pub threshold_clearance: ItemCheck,
    pub probability_bounds: ItemCheck,
}

impl MonotonicityReport {
    pub fn all_pass(&self) -> bool {
        self.lipschitz.pass
            && self.strict_decrease.pass
            && self.threshold_clearance.pass
            && self.probability_bounds.pass
    }
}

/// Numerically verifies the monotonicity and gradient condition on the
/// design's interpolation grid and reports the estimated constants.
pub fn verify_monotonicity_gradient(design: &MultiOptionDesign, kg_max: f64) -> MonotonicityReport {
    let grid = &design.grid;
    let k = grid.k_values();
    let profiles = grid.profiles();
    let q = grid.qv_star_values();

    let mut k_g = 0.0f64;
    let mut lipschitz = ItemCheck::pass("profile table difference quotients bounded");
    for i in 1..k.len() {
        let dk = k[i] - k[i - 1];
        let dist: f64 = profiles[i]
            .iter()
            .zip(&profiles[i - 1])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let quot = dist / dk;
        if quot > k_g {
            k_g = quot;
        }
        if quot > kg_max && lipschitz.pass {
            lipschitz = ItemCheck::fail(
                format!("difference quotient {quot:.3} exceeds bound {kg_max} at k_hat={:.4}", k[i]),
                Some(k[i]),
            );
        }
    }

    let mut eps_q = f64::INFINITY;
    let mut strict = ItemCheck::pass("contention table strictly decreasing");
    for i in 1..k.len() {
        let drop = q[i - 1] - q[i];
        let rate = drop / (k[i] - k[i - 1]);
        if rate < eps_q {
            eps_q = rate;
        }
        if drop <= 0.0 && strict.pass {
            strict = ItemCheck::fail(
                format!("contention table fails to decrease at k_hat={:.4}", k[i]),
                Some(k[i]),
            );
        }
    }
    if k.len() < 2 {
        eps_q = f64::INFINITY;
    }

    let mut clearance = ItemCheck::pass("k_hat exceeds the drop threshold at every node");
    for (i, node_k) in k.iter().enumerate() {
        let d = match TransmitProfile::from_vector(&profiles[i], design.head.params.direction()) {
            Ok(prof) => prof.direction().clone(),
            Err(_) => {
                clearance = ItemCheck::fail(format!("invalid profile at k_hat={node_k:.4}"), Some(*node_k));
                break;
            }
        };
        let params = match derive_params(&design.channel, &d) {
            Ok(p) => p,
            Err(e) => {
                clearance = ItemCheck::fail(format!("derivation failed at k_hat={node_k:.4}: {e}"), Some(*node_k));
                break;
            }
        };
        match j_epsilon(&params, design.head.eps_v) {
            Some(j) if (j as f64) < *node_k => {}
            Some(j) => {
                clearance = ItemCheck::fail(
                    format!("k_hat={node_k:.4} does not exceed J_eps={j}"),
                    Some(*node_k),
                );
                break;
            }
            None => {
                clearance = ItemCheck::fail(
                    format!("no contention drop at k_hat={node_k:.4}"),
                    Some(*node_k),
                );
                break;
            }
        }
    }

    let (p_lo, p_hi) = design.p_bounds;
    let mut bounds = ItemCheck::pass(format!("probabilities within [{p_lo}, {p_hi}]"));
    for (i, node_k) in k.iter().enumerate() {
        let p: f64 = profiles[i].iter().sum();
        if !(p_lo <= p && p <= p_hi) {
            bounds = ItemCheck::fail(
                format!("p={p:.6} at k_hat={node_k:.4} outside [{p_lo}, {p_hi}]"),
                Some(*node_k),
            );
            break;
        }
    }

    MonotonicityReport {
        lipschitz,
        k_g,
        strict_decrease: strict,
        eps_q,
        threshold_clearance: clearance,
        probability_bounds: bounds,
    }
}

/// Default bound for the Lipschitz verifier; realistic designs stay well
/// below it while an injected table jump lands far above.
pub const DEFAULT_KG_MAX: f64 = 10.0;

/// Transmission probability of the idling-probability-driven baseline:
/// the unique root of e*(1-p)^K - 1 - 0.5*sqrt(p) = 0.
pub fn hajek_baseline(k: usize) -> f64 {
    assert!(k >= 1, "user count must be >= 1");
    let f = |p: f64| std::f64::consts::E * (1.0 - p).powi(k as i32) - 1.0 - 0.5 * p.sqrt();
    let mut lo = 0.0;
    let mut hi = 1.0;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Either flavor of design, as bound into scenarios and config files.
#[derive(Debug, Clone)]
pub enum Design {
    Single(SingleOptionDesign),
    Multi(MultiOptionDesign),
}

impl Design {
    pub fn validate(&self) -> Result<()> {
        match self {
            Design::Single(d) => d.validate(),
            Design::Multi(d) => d.validate(),
        }
    }

    pub fn num_options(&self) -> usize {
        match self {
            Design::Single(d) => d.params.num_options(),
            Design::Multi(d) => d.num_options(),
        }
    }

    pub fn equilibrium_profile(&self, k: usize) -> TransmitProfile {
        match self {
            Design::Single(d) => d.equilibrium_profile(k),
            Design::Multi(d) => d.equilibrium_profile(k),
        }
    }

    /// Direction a user reports before it has ever transmitted.
    pub fn initial_direction(&self) -> DirectionVector {
        match self {
            Design::Single(d) => d.params.direction().clone(),
            Design::Multi(d) => d.head_direction().clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::builtin;
    use crate::contention::{
        invert_qv_star_single, qv_common, qv_star_single, TransmitProfile,
    };
    use crate::presets;

    fn single_profile(p: f64) -> TransmitProfile {
        TransmitProfile::new(p, DirectionVector::single()).unwrap()
    }

    #[test]
    fn xstar_collision_is_one() {
        let params = derive_params(&builtin::collision(), &DirectionVector::single()).unwrap();
        let x = asymptotic_xstar(&UtilitySpec::sum_throughput_single(), &params).unwrap();
        assert!((x - 1.0).abs() < 1e-3, "x* = {x}");
    }

    #[test]
    fn xstar_fading_energy_weighted() {
        let params =
            derive_params(&builtin::fading_example(), &DirectionVector::single()).unwrap();
        let x = asymptotic_xstar(&UtilitySpec::energy_weighted(0.3), &params).unwrap();
        assert!((x - 3.29).abs() < 0.01, "x* = {x}");
    }

    #[test]
    fn xstar_two_option_head_and_tail() {
        let ch = builtin::two_option_example();
        let head = derive_params(&ch, &DirectionVector::new(vec![1.0, 0.0]).unwrap()).unwrap();
        let x_h = asymptotic_xstar(&UtilitySpec::sum_throughput_multi(), &head).unwrap();
        assert!((x_h - 2.27).abs() < 0.01, "head x* = {x_h}");
        let tail = derive_params(&ch, &DirectionVector::new(vec![0.0, 1.0]).unwrap()).unwrap();
        let x_t = asymptotic_xstar(&UtilitySpec::sum_throughput_multi(), &tail).unwrap();
        assert!((x_t - 8.82).abs() < 0.01, "tail x* = {x_t}");
    }

    #[test]
    fn xstar_rejects_unbounded_utility() {
        let params = crate::channel::ChannelParams::from_tables(
            vec![vec![1.0; 65]],
            vec![1.0, 0.5, 0.0],
            vec![crate::channel::OptionSpec::unit()],
            DirectionVector::single(),
        )
        .unwrap();
        assert!(asymptotic_xstar(&UtilitySpec::sum_throughput_single(), &params).is_err());
    }

    #[test]
    fn utility_collision_two_users() {
        let params = derive_params(&builtin::collision(), &DirectionVector::single()).unwrap();
        let u = utility_eval(
            &UtilitySpec::sum_throughput_single(),
            &params,
            2,
            &single_profile(0.5),
        );
        assert!((u - 0.5).abs() < 1e-15);
        let zero = utility_eval(
            &UtilitySpec::sum_throughput_single(),
            &params,
            5,
            &single_profile(0.0),
        );
        assert_eq!(zero, 0.0);
    }

    /// Oracle: enumerate all transmit patterns, score successful packets,
    /// and charge energy per transmission.
    fn utility_bruteforce(crj: &[f64], k: usize, p: f64, energy: f64) -> f64 {
        let mut total = 0.0;
        for mask in 0u32..(1 << k) {
            let n = mask.count_ones() as usize;
            let w = p.powi(n as i32) * (1.0 - p).powi((k - n) as i32);
            if n == 0 {
                continue;
            }
            let c = if n - 1 < crj.len() { crj[n - 1] } else { 0.0 };
            total += w * (n as f64 * c - energy * n as f64);
        }
        total
    }

    #[test]
    fn utility_fading_matches_bruteforce() {
        let params =
            derive_params(&builtin::fading_example(), &DirectionVector::single()).unwrap();
        let p = 3.29 / 9.01;
        let u = utility_eval(&UtilitySpec::energy_weighted(0.3), &params, 8, &single_profile(p));
        let crj = [1.0, 1.0, 1.0, 1.0, 0.7, 0.7];
        let oracle = utility_bruteforce(&crj, 8, p, 0.3);
        assert!((u - oracle).abs() < 1e-10, "{u} vs {oracle}");
    }

    #[test]
    fn optimal_profile_collision_near_one_over_k() {
        let ch = builtin::collision();
        let utility = UtilitySpec::sum_throughput_single();
        let prof = optimal_profile(&utility, &ch, 5, 0.005).unwrap();
        assert!((prof.p() - 0.2).abs() < 1e-12, "p = {}", prof.p());
        for k in 2..=20 {
            let prof = optimal_profile(&utility, &ch, k, 0.005).unwrap();
            assert!(
                (prof.p() - 1.0 / k as f64).abs() <= 0.005 + 1e-12,
                "k={k}: p={} vs {}",
                prof.p(),
                1.0 / k as f64
            );
        }
    }

    #[test]
    fn optimal_profile_two_option_directions() {
        let ch = builtin::two_option_example();
        let utility = UtilitySpec::sum_throughput_multi();
        for k in [2usize, 3, 4] {
            let prof = optimal_profile(&utility, &ch, k, 0.005).unwrap();
            assert!(
                prof.direction().approx_eq(&DirectionVector::new(vec![1.0, 0.0]).unwrap(), 1e-12),
                "k={k}: d={:?}",
                prof.direction()
            );
        }
        for k in [10usize, 12] {
            let prof = optimal_profile(&utility, &ch, k, 0.005).unwrap();
            assert!(
                prof.direction().approx_eq(&DirectionVector::new(vec![0.0, 1.0]).unwrap(), 1e-12),
                "k={k}: d={:?}",
                prof.direction()
            );
        }
    }

    #[test]
    fn collision_design_constants() {
        let d = presets::collision_design();
        assert!((d.x_star - 1.0).abs() < 0.01);
        assert_eq!(d.j_eps, 0);
        assert!((d.gamma_eps - 0.0).abs() < 1e-12);
        assert!((d.b - 1.01).abs() < 1e-9);
        assert!((d.p_max - 1.0f64.min(d.x_star / 1.01)).abs() < 1e-12);
        d.validate().unwrap();
    }

    #[test]
    fn fading_design_constants() {
        let d = presets::fading_design();
        assert_eq!(d.j_eps, 3);
        assert!((d.gamma_eps - 3.0).abs() < 1e-12);
        assert!((d.b - 1.01).abs() < 1e-9, "b = {}", d.b);
        d.validate().unwrap();
    }

    #[test]
    fn two_option_design_constants() {
        let d = presets::two_option_design();
        assert_eq!(d.head.j_eps, 2);
        assert_eq!(d.tail.j_eps, 8);
        assert!((d.head.b - 1.01).abs() < 1e-9, "b_H = {}", d.head.b);
        assert!((d.tail.b - 1.01).abs() < 1e-9, "b_T = {}", d.tail.b);
        assert_eq!(d.pinpoints.len(), 4);
        assert_eq!(
            d.pinpoints.iter().map(|p| p.k_hat).collect::<Vec<_>>(),
            vec![4, 5, 6, 10]
        );
        d.validate().unwrap();
    }

    #[test]
    fn design_build_fails_without_contention_drop() {
        let ch = builtin::from_tables(vec![1.0; 8], vec![1.0; 8]).unwrap();
        let err = build_single_design(&ch, &UtilitySpec::sum_throughput_single(), 0.01, 0.01);
        assert!(matches!(err, Err(Error::Design(_)) | Err(Error::DegenerateVirtualChannel)));
    }

    #[test]
    fn hajek_baseline_brackets_and_matches_newton() {
        for k in [1usize, 2, 8, 20] {
            let e = std::f64::consts::E;
            let f = |p: f64| e * (1.0 - p).powi(k as i32) - 1.0 - 0.5 * p.sqrt();
            assert!(f(1e-12) > 0.0);
            assert!(f(1.0 - 1e-12) < 0.0);
            // independent oracle: Newton iteration at high precision
            let mut p: f64 = 0.3;
            for _ in 0..200 {
                let fp = -e * k as f64 * (1.0 - p).powi(k as i32 - 1) - 0.25 / p.sqrt();
                let step = f(p) / fp;
                p -= step;
                p = p.clamp(1e-9, 1.0 - 1e-9);
            }
            let root = hajek_baseline(k);
            assert!((root - p).abs() < 1e-9, "k={k}: {root} vs {p}");
        }
    }

    #[test]
    fn proposed_equilibrium_beats_hajek_below_optimal() {
        let thr = |k: usize, p: f64| k as f64 * p * (1.0f64 - p).powi(k as i32 - 1);
        let design = presets::collision_design();
        for k in 2..=20 {
            let p_opt = 1.0 / k as f64;
            let p_star = design.equilibrium_p(k);
            let p_a = hajek_baseline(k);
            let (t_opt, t_star, t_a) = (thr(k, p_opt), thr(k, p_star), thr(k, p_a));
            assert!(t_star >= t_a - 1e-12, "k={k}: proposed {t_star} < hajek {t_a}");
            assert!(t_star <= t_opt + 1e-12);
            assert!(t_a <= t_opt + 1e-12);
        }
    }

    #[test]
    fn equilibrium_profiles() {
        let coll = presets::collision_design();
        assert!((coll.equilibrium_p(8) - 1.0 / 9.01).abs() < 1e-9);

        // below the distinguishable range the equilibrium clamps at p_max
        let fading = presets::fading_design();
        assert_eq!(fading.equilibrium_p(1), fading.p_max);
        assert_eq!(fading.equilibrium_p(2), fading.p_max);

        let multi = presets::two_option_design();
        let eq = multi.equilibrium_profile(14).vector();
        let expect = multi.tail.x_star / (14.0 + multi.tail.b);
        assert!((eq[0] - 0.0).abs() < 1e-12);
        assert!((eq[1] - expect).abs() < 1e-12, "{} vs {expect}", eq[1]);
    }

    #[test]
    fn example_pinpoints_pass_verification() {
        let design = presets::two_option_design();
        let report = verify_pinpoints(
            &design.pinpoints,
            &design.channel,
            0.01,
            0.01,
            design.p_bounds,
        )
        .unwrap();
        assert!(report.all_pass(), "{report:?}");
    }

    #[test]
    fn flat_pinpoints_fail_item_one() {
        let ch = builtin::two_option_example();
        let d = DirectionVector::new(vec![0.5, 0.5]).unwrap();
        // nearly idle profiles keep the contention measure pinned near one
        let pins = vec![
            Pinpoint { k_hat: 4, profile: TransmitProfile::new(0.001, d.clone()).unwrap() },
            Pinpoint { k_hat: 5, profile: TransmitProfile::new(0.001, d).unwrap() },
        ];
        let report = verify_pinpoints(&pins, &ch, 0.01, 0.01, (0.001, 0.999)).unwrap();
        assert!(!report.items[0].pass);
    }

    #[test]
    fn saturated_pinpoint_fails_item_three() {
        let ch = builtin::two_option_example();
        let d = DirectionVector::new(vec![0.0, 1.0]).unwrap();
        let design = presets::two_option_design();
        let mut pins = design.pinpoints.clone();
        pins.last_mut().unwrap().profile = TransmitProfile::new(1.0, d).unwrap();
        let report = verify_pinpoints(&pins, &ch, 0.01, 0.01, (0.001, 0.999)).unwrap();
        assert!(!report.items[2].pass);
    }

    #[test]
    fn interpolation_reproduces_pinpoints_exactly() {
        let design = presets::two_option_design();
        for pin in &design.pinpoints {
            let got = design.grid.profile_at(pin.k_hat as f64);
            let want = pin.profile.vector();
            for (g, w) in got.iter().zip(&want) {
                assert_eq!(g, w, "pinpoint {}", pin.k_hat);
            }
        }
    }

    #[test]
    fn interpolated_contention_strictly_decreasing() {
        let design = presets::two_option_design();
        let q = design.grid.qv_star_values();
        for i in 1..q.len() {
            assert!(q[i] < q[i - 1], "no decrease at grid index {i}");
        }
    }

    #[test]
    fn same_direction_pinpoints_match_single_inversion_at_nodes() {
        // consecutive-integer pinpoints on the head direction taken from
        // the single-option curve: at integer grid nodes both routes
        // recover the same probability
        let ch = builtin::two_option_example();
        let daily = DirectionVector::new(vec![1.0, 0.0]).unwrap();
        let head = build_single_for_direction(
            &ch,
            &UtilitySpec::sum_throughput_multi(),
            &daily,
            0.01,
            0.01,
            1000,
        )
        .unwrap();
        let params = derive_params(&ch, &daily).unwrap();
        let pins: Vec<Pinpoint> = [4u32, 5]
            .iter()
            .map(|&k| {
                let p = head.p_of_khat(k as f64);
                Pinpoint { k_hat: k, profile: TransmitProfile::new(p, daily.clone()).unwrap() }
            })
            .collect();
        let grid = interpolate_pinpoints(&pins, &ch, 0.01, 0.01, (0.001, 0.999), 0.005).unwrap();
        for (i, &k) in grid.k_values().iter().enumerate() {
            if (k - k.round()).abs() > 1e-9 {
                continue;
            }
            let q_node = grid.qv_star_values()[i];
            let p_single = invert_qv_star_single(&head, q_node).unwrap();
            let p_grid: f64 = grid.profiles()[i].iter().sum();
            assert!(
                (p_single - p_grid).abs() < 1e-6,
                "k={k}: single {p_single} vs grid {p_grid}"
            );
            // and the node target is consistent with the analytic curve
            let q_check = qv_common(&params, p_grid, k.round() as usize);
            assert!((q_check - q_node).abs() < 1e-10);
        }
    }

    #[test]
    fn monotonicity_gradient_passes_for_example_design() {
        let design = presets::two_option_design();
        let report = verify_monotonicity_gradient(&design, DEFAULT_KG_MAX);
        assert!(report.all_pass(), "{report:?}");
        assert!(report.k_g.is_finite() && report.k_g > 0.0);
        assert!(report.eps_q > 0.0);
    }

    #[test]
    fn monotonicity_gradient_catches_injected_jump() {
        let mut design = presets::two_option_design();
        let mut profiles = design.grid.profiles().to_vec();
        let mid = profiles.len() / 2;
        profiles[mid][1] += 0.2;
        design.grid = DesignGrid::from_tables(
            design.grid.k_values().to_vec(),
            profiles,
            design.grid.qv_star_values().to_vec(),
        )
        .unwrap();
        let report = verify_monotonicity_gradient(&design, DEFAULT_KG_MAX);
        assert!(!report.lipschitz.pass);
    }

    #[test]
    fn degenerate_middle_region_passes_vacuously() {
        // equal head and tail anchors leave a single-node grid
        let ch = builtin::two_option_example();
        let d = DirectionVector::new(vec![1.0, 0.0]).unwrap();
        let mut spec = MultiDesignSpec::new(4, 4);
        spec.d_head = Some(d.clone());
        spec.d_tail = Some(d);
        let design =
            build_multi_design(&ch, &UtilitySpec::sum_throughput_multi(), &spec).unwrap();
        assert_eq!(design.grid.len(), 1);
        let report = verify_monotonicity_gradient(&design, DEFAULT_KG_MAX);
        assert!(report.all_pass(), "{report:?}");
    }

    #[test]
    fn fixed_point_of_target_map_at_equilibrium() {
        // q_v at the designed equilibrium equals the theoretical value
        let coll = presets::collision_design();
        for k in 1..=12usize {
            let p_star = coll.equilibrium_p(k);
            let q = qv_common(&coll.params, p_star, k);
            let q_star = qv_star_single(&coll, p_star).unwrap();
            assert!((q - q_star).abs() < 1e-10, "k={k}: {q} vs {q_star}");
        }
    }
}
