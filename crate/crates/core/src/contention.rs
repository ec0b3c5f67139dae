//! Channel contention measure evaluation and inversion.
//!
//! The contention measure q_v is the success probability of the virtual
//! packet. Users invert its designed counterpart q_v* to recover either a
//! probability target (single transmission option) or a user number
//! estimate (multiple options). All functions here are pure.

use std::collections::BTreeMap;

use crate::channel::{ChannelParams, LinkChannel};
use crate::design::{MultiOptionDesign, SingleOptionDesign};
use crate::error::{Error, Result};

/// Conditional distribution over transmission options given a transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionVector(Vec<f64>);

impl DirectionVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Invalid("direction vector must be nonempty".into()));
        }
        let mut sum = 0.0;
        for &e in &entries {
            if !(-1e-12..=1.0 + 1e-9).contains(&e) {
                return Err(Error::Invalid(format!("direction entry out of [0,1]: {e}")));
            }
            sum += e;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("direction entries sum to {sum}, not 1")));
        }
        Ok(Self(entries))
    }

    /// The single-option direction [1].
    pub fn single() -> Self {
        Self(vec![1.0])
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| (a - b).abs() <= tol)
    }

    /// Convex blend of two directions; result is renormalized only by
    /// construction (blend of simplex points stays on the simplex).
    pub fn blend(&self, other: &Self, lambda: f64) -> Self {
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
                .collect(),
        )
    }
}

/// A user's full per-slot decision distribution: transmit with probability
/// p, then pick an option according to the direction vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitProfile {
    p: f64,
    d: DirectionVector,
}

impl TransmitProfile {
    pub fn new(p: f64, d: DirectionVector) -> Result<Self> {
        if !(-1e-12..=1.0 + 1e-12).contains(&p) {
            return Err(Error::Invalid(format!("transmission probability out of [0,1]: {p}")));
        }
        Ok(Self { p: p.clamp(0.0, 1.0), d })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn direction(&self) -> &DirectionVector {
        &self.d
    }

    /// The M-length probability vector p * d.
    pub fn vector(&self) -> Vec<f64> {
        self.d.entries().iter().map(|&e| self.p * e).collect()
    }

    /// Recovers (p, d) from an M-length probability vector. When the vector
    /// is all zero the direction is unobservable and `fallback_d` is kept.
    pub fn from_vector(v: &[f64], fallback_d: &DirectionVector) -> Result<Self> {
        let p: f64 = v.iter().sum();
        if p <= 0.0 {
            return TransmitProfile::new(0.0, fallback_d.clone());
        }
        let d = DirectionVector::new(v.iter().map(|&e| e / p).collect())?;
        TransmitProfile::new(p, d)
    }
}

/// Binomial(k, p) probability mass vector, stable for p near either endpoint.
pub(crate) fn binomial_pmf(k: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; k + 1];
    if p <= 0.0 {
        pmf[0] = 1.0;
        return pmf;
    }
    if p >= 1.0 {
        pmf[k] = 1.0;
        return pmf;
    }
    let q = 1.0 - p;
    if p <= 0.5 {
        let mut term = q.powi(k as i32);
        let ratio = p / q;
        for j in 0..=k {
            pmf[j] = term;
            if j < k {
                term *= (k - j) as f64 / (j + 1) as f64 * ratio;
            }
        }
    } else {
        let mut term = p.powi(k as i32);
        let ratio = q / p;
        for j in (0..=k).rev() {
            pmf[j] = term;
            if j > 0 {
                term *= j as f64 / (k - j + 1) as f64 * ratio;
            }
        }
    }
    pmf
}

/// Binomial(k, p) pmf over 0..=jmax only, plus the total mass beyond jmax.
fn binomial_pmf_prefix(k: usize, p: f64, jmax: usize) -> (Vec<f64>, f64) {
    if k <= jmax {
        let mut pmf = binomial_pmf(k, p);
        pmf.resize(jmax + 1, 0.0);
        return (pmf, 0.0);
    }
    if p <= 0.5 {
        let mut pmf = vec![0.0; jmax + 1];
        if p <= 0.0 {
            pmf[0] = 1.0;
            return (pmf, 0.0);
        }
        let q = 1.0 - p;
        let mut term = q.powi(k as i32);
        let ratio = p / q;
        let mut cdf = 0.0;
        for (j, slot) in pmf.iter_mut().enumerate() {
            *slot = term;
            cdf += term;
            term *= (k - j) as f64 / (j + 1) as f64 * ratio;
        }
        (pmf, (1.0 - cdf).max(0.0))
    } else {
        let full = binomial_pmf(k, p);
        let tail: f64 = full[jmax + 1..].iter().sum();
        (full[..=jmax].to_vec(), tail)
    }
}

/// Expectation of f(J) for J ~ Binomial(n, p), where f is constant for
/// J >= jcut so the summation folds the tail mass onto f(jcut).
pub(crate) fn binom_expect(n: usize, p: f64, jcut: usize, f: impl Fn(usize) -> f64) -> f64 {
    if n <= jcut {
        binomial_pmf(n, p)
            .iter()
            .enumerate()
            .map(|(j, &w)| w * f(j))
            .sum()
    } else {
        let (pmf, tail_mass) = binomial_pmf_prefix(n, p, jcut);
        pmf.iter().enumerate().map(|(j, &w)| w * f(j)).sum::<f64>() + tail_mass * f(jcut)
    }
}

/// q_v when all K users transmit with the same probability p.
pub fn qv_common(params: &ChannelParams, p: f64, k: usize) -> f64 {
    let p = p.clamp(0.0, 1.0);
    binom_expect(k, p, params.max_parallel(), |j| params.c_v(j))
}

/// q_v for users holding different transmission probabilities but the same
/// direction: exact Poisson-binomial convolution.
pub fn qv_hetero(params: &ChannelParams, probs: &[f64]) -> f64 {
    let mut dist = vec![1.0];
    for &p in probs {
        let p = p.clamp(0.0, 1.0);
        let mut next = vec![0.0; dist.len() + 1];
        for (n, &w) in dist.iter().enumerate() {
            next[n] += w * (1.0 - p);
            next[n + 1] += w * p;
        }
        dist = next;
    }
    dist.iter().enumerate().map(|(j, &w)| w * params.c_v(j)).sum()
}

pub(crate) fn qv_noninteger_p(params: &ChannelParams, p: f64, k_hat: f64) -> f64 {
    let n = k_hat.floor();
    if n == k_hat {
        return qv_common(params, p, n as usize);
    }
    let lo = qv_common(params, p, n as usize);
    let hi = qv_common(params, p, n as usize + 1);
    (n + 1.0 - k_hat) * lo + (k_hat - n) * hi
}

/// q_v extended to non-integer user counts by linear interpolation between
/// the two neighboring integers.
pub fn qv_noninteger(params: &ChannelParams, profile: &TransmitProfile, k_hat: f64) -> Result<f64> {
    if !(k_hat >= 0.0) {
        return Err(Error::Invalid(format!("k_hat must be >= 0, got {k_hat}")));
    }
    if !profile.direction().approx_eq(params.direction(), 1e-9) {
        return Err(Error::Invalid(
            "profile direction does not match the direction the params were derived for".into(),
        ));
    }
    Ok(qv_noninteger_p(params, profile.p(), k_hat))
}

/// Partial derivative of q_v(p, K) with respect to p; nonpositive whenever
/// the virtual parameters are nonincreasing.
pub fn qv_partial_p(params: &ChannelParams, p: f64, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let p = p.clamp(0.0, 1.0);
    let nmax = params.max_parallel();
    let jmax = (k - 1).min(nmax);
    let (pmf, _) = binomial_pmf_prefix(k - 1, p, jmax);
    let mut sum = 0.0;
    for (j, &w) in pmf.iter().enumerate() {
        sum += w * (params.c_v(j + 1) - params.c_v(j));
    }
    k as f64 * sum
}

/// Theoretical channel contention measure for a single-option design,
/// as a function of the probability target.
pub fn qv_star_single(design: &SingleOptionDesign, p_hat: f64) -> Result<f64> {
    if !(p_hat > 0.0) || p_hat > design.p_max + 1e-9 {
        return Err(Error::Invalid(format!(
            "p_hat must lie in (0, p_max={}], got {p_hat}",
            design.p_max
        )));
    }
    // x*/p - b dips below J only through rounding at the p_max endpoint
    let k_hat = (design.x_star / p_hat - design.b).max(design.j_eps as f64);
    let n = k_hat.floor();
    let p_n = design.p_max.min(design.x_star / (n + design.b));
    let p_n1 = design.p_max.min(design.x_star / (n + 1.0 + design.b));
    let den = p_n - p_n1;
    if den < 1e-12 {
        return Err(Error::Design(format!(
            "degenerate interpolation denominator at p_hat={p_hat} (p_N={p_n}, p_N+1={p_n1})"
        )));
    }
    let w = ((p_hat - p_n1) / den).clamp(0.0, 1.0);
    let q_n = qv_common(&design.params, p_hat, n as usize);
    let q_n1 = qv_common(&design.params, p_hat, n as usize + 1);
    Ok(w * q_n + (1.0 - w) * q_n1)
}

/// Inverts q_v*(p_hat) = qv_meas by bisection, clamping to p_max above the
/// admissible range and to 0 below it.
pub fn invert_qv_star_single(design: &SingleOptionDesign, qv_meas: f64) -> Result<f64> {
    design.validate()?;
    if !(-1e-9..=1.0 + 1e-9).contains(&qv_meas) {
        return Err(Error::Invalid(format!("qv_meas out of [0,1]: {qv_meas}")));
    }
    let q_top = qv_star_single(design, design.p_max)?;
    if qv_meas >= q_top {
        return Ok(design.p_max);
    }
    let p_lo = design.x_star / (design.k_cap as f64 + design.b);
    let q_bot = qv_star_single(design, p_lo)?;
    if qv_meas <= q_bot {
        return Ok(0.0);
    }
    let mut lo = p_lo;
    let mut hi = design.p_max;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if qv_star_single(design, mid)? <= qv_meas {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Theoretical channel contention measure for a multi-option design,
/// as a function of the user number estimate.
pub fn qv_star_multi(design: &MultiOptionDesign, k_hat: f64) -> Result<f64> {
    let k_min = design.head.j_eps as f64;
    if k_hat < k_min - 1e-9 {
        return Err(Error::Invalid(format!(
            "k_hat {k_hat} below the head threshold {k_min}"
        )));
    }
    let k_hat = k_hat.max(k_min);
    if k_hat <= design.k_lower as f64 {
        let p = design.head.p_of_khat(k_hat);
        qv_star_single(&design.head, p)
    } else if k_hat >= design.k_upper as f64 {
        let p = design.tail.p_of_khat(k_hat);
        qv_star_single(&design.tail, p)
    } else {
        Ok(design.grid.qv_star_at(k_hat))
    }
}

/// Inverts q_v*(k_hat) = qv_meas by bisection over the piecewise-monotone
/// curve; clamps to the head threshold above and to k_cap below.
pub fn invert_qv_star_multi(design: &MultiOptionDesign, qv_meas: f64) -> Result<f64> {
    design.validate()?;
    if !(-1e-9..=1.0 + 1e-9).contains(&qv_meas) {
        return Err(Error::Invalid(format!("qv_meas out of [0,1]: {qv_meas}")));
    }
    let k_min = design.head.j_eps as f64;
    let q_top = qv_star_multi(design, k_min)?;
    if qv_meas >= q_top {
        return Ok(k_min);
    }
    let k_cap = design.k_cap as f64;
    let q_bot = qv_star_multi(design, k_cap)?;
    if qv_meas <= q_bot {
        return Ok(k_cap);
    }
    let mut lo = k_min;
    let mut hi = k_cap;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if qv_star_multi(design, mid)? >= qv_meas {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Exact q_v for arbitrary per-user profiles, computed through the channel
/// predicates: the option-count distribution is convolved user by user and
/// the virtual predicate is averaged over it and the channel states.
pub fn qv_profiles(channel: &LinkChannel, profiles: &[Vec<f64>]) -> Result<f64> {
    let m = channel.num_options();
    for v in profiles {
        if v.len() != m {
            return Err(Error::Invalid(format!(
                "profile has {} entries, channel has {m} options",
                v.len()
            )));
        }
        let s: f64 = v.iter().sum();
        if v.iter().any(|&e| e < -1e-12) || s > 1.0 + 1e-9 {
            return Err(Error::Invalid("profile entries must be a subprobability vector".into()));
        }
    }
    match m {
        1 => {
            let mut dist = vec![1.0];
            for v in profiles {
                let p = v[0].clamp(0.0, 1.0);
                let mut next = vec![0.0; dist.len() + 1];
                for (n, &w) in dist.iter().enumerate() {
                    next[n] += w * (1.0 - p);
                    next[n + 1] += w * p;
                }
                dist = next;
            }
            Ok(dist
                .iter()
                .enumerate()
                .map(|(n, &w)| w * channel.virtual_success_avg(&[n as u32]))
                .sum())
        }
        2 => {
            let k = profiles.len();
            let side = k + 1;
            let mut dist = vec![0.0; side * side];
            dist[0] = 1.0;
            for v in profiles {
                let (p1, p2) = (v[0].clamp(0.0, 1.0), v[1].clamp(0.0, 1.0));
                let idle = (1.0 - p1 - p2).max(0.0);
                let mut next = vec![0.0; side * side];
                for n1 in 0..side {
                    for n2 in 0..side - n1 {
                        let w = dist[n1 * side + n2];
                        if w == 0.0 {
                            continue;
                        }
                        next[n1 * side + n2] += w * idle;
                        if n1 + 1 < side {
                            next[(n1 + 1) * side + n2] += w * p1;
                        }
                        if n2 + 1 < side {
                            next[n1 * side + n2 + 1] += w * p2;
                        }
                    }
                }
                dist = next;
            }
            let mut q = 0.0;
            for n1 in 0..side {
                for n2 in 0..side - n1 {
                    let w = dist[n1 * side + n2];
                    if w > 0.0 {
                        q += w * channel.virtual_success_avg(&[n1 as u32, n2 as u32]);
                    }
                }
            }
            Ok(q)
        }
        _ => {
            let mut dist: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
            dist.insert(vec![0; m], 1.0);
            for v in profiles {
                let idle = (1.0 - v.iter().sum::<f64>()).max(0.0);
                let mut next: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
                for (counts, w) in &dist {
                    *next.entry(counts.clone()).or_insert(0.0) += w * idle;
                    for (i, &pi) in v.iter().enumerate() {
                        if pi > 0.0 {
                            let mut c = counts.clone();
                            c[i] += 1;
                            *next.entry(c).or_insert(0.0) += w * pi;
                        }
                    }
                }
                dist = next;
            }
            Ok(dist
                .iter()
                .map(|(counts, &w)| w * channel.virtual_success_avg(counts))
                .sum())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{builtin, derive_params};

    fn collision_params() -> ChannelParams {
        derive_params(&builtin::collision(), &DirectionVector::single()).unwrap()
    }

    fn fading_params() -> ChannelParams {
        derive_params(&builtin::fading_example(), &DirectionVector::single()).unwrap()
    }

    /// Brute-force oracle: enumerate all transmit subsets of the users and
    /// weight the virtual parameter by each subset's probability.
    fn qv_bruteforce(params: &ChannelParams, probs: &[f64]) -> f64 {
        let k = probs.len();
        let mut total = 0.0;
        for mask in 0u32..(1 << k) {
            let mut w = 1.0;
            let mut j = 0usize;
            for (i, &p) in probs.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    w *= p;
                    j += 1;
                } else {
                    w *= 1.0 - p;
                }
            }
            total += w * params.c_v(j);
        }
        total
    }

    #[test]
    fn qv_common_collision() {
        let params = collision_params();
        assert!((qv_common(&params, 0.2, 3) - 0.512).abs() < 1e-15);
    }

    #[test]
    fn qv_common_at_zero_probability_is_cv0() {
        for params in [collision_params(), fading_params()] {
            for k in [0usize, 1, 5, 40] {
                assert_eq!(qv_common(&params, 0.0, k), params.c_v(0));
            }
        }
    }

    #[test]
    fn qv_common_matches_bruteforce() {
        let params = fading_params();
        let oracle = qv_bruteforce(&params, &[0.3; 8]);
        assert!((qv_common(&params, 0.3, 8) - oracle).abs() < 1e-12);
    }

    #[test]
    fn qv_common_folds_large_k() {
        // beyond the cutoff the tail value takes over smoothly
        let params = fading_params();
        let q = qv_common(&params, 0.9, 500);
        assert!((0.0..=1e-12).contains(&q));
        let q2 = qv_common(&params, 0.004, 1000);
        assert!(q2 > 0.5 && q2 < 1.0);
    }

    #[test]
    fn qv_hetero_equal_probs_matches_common() {
        let params = fading_params();
        for k in [1usize, 4, 9] {
            let probs = vec![0.37; k];
            let a = qv_hetero(&params, &probs);
            let b = qv_common(&params, 0.37, k);
            assert!((a - b).abs() < 1e-14, "k={k}: {a} vs {b}");
        }
    }

    #[test]
    fn qv_hetero_two_certain_transmitters_collide() {
        let params = collision_params();
        assert_eq!(qv_hetero(&params, &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn qv_hetero_matches_bruteforce() {
        let params = fading_params();
        let probs = [0.1, 0.5, 0.9];
        let oracle = qv_bruteforce(&params, &probs);
        assert!((qv_hetero(&params, &probs) - oracle).abs() < 1e-14);
    }

    #[test]
    fn qv_noninteger_blends() {
        let params = collision_params();
        let profile = TransmitProfile::new(0.1, DirectionVector::single()).unwrap();
        let at5 = qv_noninteger(&params, &profile, 5.0).unwrap();
        assert!((at5 - qv_common(&params, 0.1, 5)).abs() < 1e-15);
        let at55 = qv_noninteger(&params, &profile, 5.5).unwrap();
        let mean = 0.5 * (qv_common(&params, 0.1, 5) + qv_common(&params, 0.1, 6));
        assert!((at55 - mean).abs() < 1e-15);
        let at225 = qv_noninteger(&params, &profile, 2.25).unwrap();
        assert!((at225 - 0.78975).abs() < 1e-12);
    }

    #[test]
    fn qv_partial_p_collision_closed_form() {
        let params = collision_params();
        for (p, k) in [(0.1f64, 4usize), (0.4, 10), (0.7, 2)] {
            let expected = -(k as f64) * (1.0 - p).powi(k as i32 - 1);
            assert!((qv_partial_p(&params, p, k) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn qv_partial_p_constant_cv_is_zero() {
        let params = ChannelParams::from_tables(
            vec![vec![0.5; 6]],
            vec![0.5; 6],
            vec![crate::channel::OptionSpec::unit()],
            DirectionVector::single(),
        )
        .unwrap();
        assert_eq!(qv_partial_p(&params, 0.3, 12), 0.0);
    }

    #[test]
    fn qv_partial_p_matches_finite_difference() {
        let params = fading_params();
        let h = 1e-6;
        let fd = (qv_common(&params, 0.4 + h, 10) - qv_common(&params, 0.4 - h, 10)) / (2.0 * h);
        let exact = qv_partial_p(&params, 0.4, 10);
        assert!((fd - exact).abs() < 1e-6, "fd={fd} exact={exact}");
    }

    #[test]
    fn qv_partial_p_matches_finite_difference_at_random_points() {
        use rand::Rng;
        use rand::SeedableRng;
        let params = fading_params();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let h = 1e-6;
        for _ in 0..50 {
            let p: f64 = rng.gen_range(0.01..0.99);
            let k = rng.gen_range(1..=30usize);
            let fd = (qv_common(&params, p + h, k) - qv_common(&params, p - h, k)) / (2.0 * h);
            let exact = qv_partial_p(&params, p, k);
            assert!((fd - exact).abs() < 1e-6, "p={p} k={k}: fd={fd} exact={exact}");
            assert!(exact <= 0.0, "derivative must be nonpositive");
        }
    }

    #[test]
    fn binomial_pmf_sums_to_one() {
        for (k, p) in [(0usize, 0.3), (1, 0.0), (7, 0.51), (64, 0.999), (200, 0.2)] {
            let pmf = binomial_pmf(k, p);
            let s: f64 = pmf.iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "k={k} p={p} sum={s}");
        }
    }

    #[test]
    fn qv_profiles_single_option_matches_hetero() {
        let ch = builtin::fading_example();
        let params = fading_params();
        let probs = [0.2, 0.5, 0.05, 0.9];
        let profiles: Vec<Vec<f64>> = probs.iter().map(|&p| vec![p]).collect();
        let a = qv_profiles(&ch, &profiles).unwrap();
        let b = qv_hetero(&params, &probs);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn qv_profiles_two_options_matches_common_direction() {
        let ch = builtin::two_option_example();
        let d = DirectionVector::new(vec![0.3, 0.7]).unwrap();
        let params = derive_params(&ch, &d).unwrap();
        let profiles: Vec<Vec<f64>> = (0..6).map(|_| vec![0.4 * 0.3, 0.4 * 0.7]).collect();
        let a = qv_profiles(&ch, &profiles).unwrap();
        let b = qv_common(&params, 0.4, 6);
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn profile_vector_roundtrip() {
        let d = DirectionVector::new(vec![0.25, 0.75]).unwrap();
        let prof = TransmitProfile::new(0.4, d.clone()).unwrap();
        let v = prof.vector();
        let back = TransmitProfile::from_vector(&v, &d).unwrap();
        assert!((back.p() - 0.4).abs() < 1e-12);
        assert!(back.direction().approx_eq(&d, 1e-12));
        // zero vector keeps the fallback direction
        let zero = TransmitProfile::from_vector(&[0.0, 0.0], &d).unwrap();
        assert_eq!(zero.p(), 0.0);
        assert!(zero.direction().approx_eq(&d, 0.0));
    }
}

#[cfg(test)]
mod design_interplay_tests {
    use super::*;
    use crate::channel::{builtin, derive_params};
    use crate::design::SingleOptionDesign;
    use crate::presets;

    /// Collision design with the exact constants x* = 1, b = 1.01.
    fn exact_collision_design() -> SingleOptionDesign {
        let params =
            derive_params(&builtin::collision(), &DirectionVector::single()).unwrap();
        let d = SingleOptionDesign {
            x_star: 1.0,
            b: 1.01,
            eps_v: 0.01,
            j_eps: 0,
            gamma_eps: 0.0,
            p_max: 1.0f64.min(1.0 / 1.01),
            k_cap: 1000,
            params,
        };
        d.validate().unwrap();
        d
    }

    #[test]
    fn qv_star_collapses_at_integer_estimates() {
        for design in [presets::collision_design(), presets::fading_design()] {
            for k in design.j_eps.max(1)..=20 {
                let p_hat = design.x_star / (k as f64 + design.b);
                if p_hat > design.p_max {
                    continue;
                }
                let star = qv_star_single(&design, p_hat).unwrap();
                let plain = qv_common(&design.params, p_hat, k);
                assert!((star - plain).abs() < 1e-12, "k={k}: {star} vs {plain}");
            }
        }
    }

    #[test]
    fn qv_star_collision_closed_form() {
        let design = exact_collision_design();
        let p_hat = 1.0 / 9.01;
        let star = qv_star_single(&design, p_hat).unwrap();
        assert!((star - (1.0 - p_hat).powi(8)).abs() < 1e-12);
    }

    #[test]
    fn qv_star_between_neighbor_counts() {
        let design = presets::fading_design();
        let k = 7usize;
        // just above the k+1 node the value sits between the neighbors
        let p_hat = design.x_star / (k as f64 + 1.0 + design.b) + 1e-4;
        let star = qv_star_single(&design, p_hat).unwrap();
        let lo = qv_common(&design.params, p_hat, k + 1);
        let hi = qv_common(&design.params, p_hat, k);
        assert!(
            lo - 1e-12 <= star && star <= hi + 1e-12,
            "{lo} <= {star} <= {hi} violated"
        );
    }

    #[test]
    fn invert_single_round_trips() {
        for design in [presets::collision_design(), presets::fading_design()] {
            for i in 1..40 {
                let p0 = design.p_max * i as f64 / 40.0;
                if p0 < design.x_star / (design.k_cap as f64 / 2.0) {
                    continue;
                }
                let q = qv_star_single(&design, p0).unwrap();
                let back = invert_qv_star_single(&design, q).unwrap();
                assert!((back - p0).abs() < 1e-8, "p0={p0} back={back}");
            }
        }
    }

    #[test]
    fn invert_single_clamps() {
        let design = exact_collision_design();
        // an idle channel reads as maximal contention headroom
        let top = invert_qv_star_single(&design, 1.0).unwrap();
        assert_eq!(top, design.p_max);
        let q_pmax = qv_star_single(&design, design.p_max).unwrap();
        let at_boundary = invert_qv_star_single(&design, q_pmax).unwrap();
        assert_eq!(at_boundary, design.p_max);
        let bottom = invert_qv_star_single(&design, 0.0).unwrap();
        assert_eq!(bottom, 0.0);
    }

    #[test]
    fn invert_single_recovers_true_user_count_target() {
        let design = exact_collision_design();
        let truth = (1.0 - 1.0 / 9.01f64).powi(8);
        let p_hat = invert_qv_star_single(&design, truth).unwrap();
        assert!((p_hat - 1.0 / 9.01).abs() < 1e-8, "p_hat = {p_hat}");
    }

    #[test]
    fn invert_single_rejects_invalid_design() {
        let mut design = exact_collision_design();
        design.b = 0.5;
        assert!(invert_qv_star_single(&design, 0.5).is_err());
    }

    #[test]
    fn qv_star_multi_at_integer_estimates() {
        let design = presets::two_option_design();
        for k in 2..=30usize {
            let star = qv_star_multi(&design, k as f64).unwrap();
            let vec = design.profile_at(k as f64);
            let profile = TransmitProfile::from_vector(&vec, design.head.params.direction())
                .unwrap();
            let params = derive_params(&design.channel, profile.direction()).unwrap();
            let plain = qv_common(&params, profile.p(), k);
            assert!((star - plain).abs() < 1e-10, "k={k}: {star} vs {plain}");
        }
    }

    #[test]
    fn qv_star_multi_seam_continuity() {
        let design = presets::two_option_design();
        for k in [design.k_lower as f64, design.k_upper as f64] {
            let below = qv_star_multi(&design, k - 1e-9).unwrap();
            let at = qv_star_multi(&design, k).unwrap();
            let above = qv_star_multi(&design, k + 1e-9).unwrap();
            assert!((below - at).abs() < 1e-6, "seam at {k}: {below} vs {at}");
            assert!((above - at).abs() < 1e-6, "seam at {k}: {above} vs {at}");
        }
    }

    #[test]
    fn qv_star_multi_head_matches_single_route() {
        let design = presets::two_option_design();
        let star = qv_star_multi(&design, 4.0).unwrap();
        let p4 = design.head.x_star / (4.0 + design.head.b);
        let via_single = qv_star_single(&design.head, p4).unwrap();
        assert!((star - via_single).abs() < 1e-12);
    }

    #[test]
    fn qv_star_multi_middle_matches_count_blend() {
        // the stored table agrees with the blended-count evaluation at the
        // interpolated profile
        let design = presets::two_option_design();
        for k_hat in [4.37, 5.5, 6.02, 7.77, 9.99] {
            let table = qv_star_multi(&design, k_hat).unwrap();
            let vec = design.profile_at(k_hat);
            let profile = TransmitProfile::from_vector(&vec, design.head.params.direction())
                .unwrap();
            let params = derive_params(&design.channel, profile.direction()).unwrap();
            let n = k_hat.floor();
            let lo = qv_common(&params, profile.p(), n as usize);
            let hi = qv_common(&params, profile.p(), n as usize + 1);
            let blended = (n + 1.0 - k_hat) * lo + (k_hat - n) * hi;
            assert!(
                (table - blended).abs() < 1e-10,
                "k_hat={k_hat}: table {table} vs blend {blended}"
            );
        }
    }

    #[test]
    fn invert_multi_round_trips() {
        let design = presets::two_option_design();
        for k0 in [2.5, 3.0, 4.0, 5.5, 7.3, 10.0, 14.0, 25.0, 100.0] {
            let q = qv_star_multi(&design, k0).unwrap();
            let back = invert_qv_star_multi(&design, q).unwrap();
            assert!((back - k0).abs() < 1e-7, "k0={k0} back={back}");
        }
    }

    #[test]
    fn invert_multi_clamps() {
        let design = presets::two_option_design();
        let top = invert_qv_star_multi(&design, 1.0).unwrap();
        assert_eq!(top, design.head.j_eps as f64);
        let bottom = invert_qv_star_multi(&design, 0.0).unwrap();
        assert_eq!(bottom, design.k_cap as f64);
    }
}
