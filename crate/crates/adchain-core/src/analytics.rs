//! Closed-form models: the Sybil-attack success probability with Monte Carlo
//! cross-validation, and the node economics model (required verifier slots,
//! recommended active pool, per-node revenue/cost/profit).
//!
//! The attack succeeds on one proposition when a strict majority of the `n`
//! sampled verifiers is dishonest:
//!
//! ```text
//! P[success] = sum_{i = floor(n/2)+1}^{n} C(j, i) * C(N-j, n-i) / C(N, n)
//! ```
//!
//! Exact big-integer arithmetic is used up to N = 10,000; larger populations
//! switch to log-gamma evaluation (relative error well under 1e-12 for the
//! committee sizes involved).

use std::io::{self, Write};

use num::bigint::BigInt;
use num::rational::Ratio;
use num::{BigUint, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Largest population for which the exact big-integer path is used.
pub const EXACT_POPULATION_LIMIT: u64 = 10_000;

/// Verifier committees are recommended to be sampled from a pool of at least
/// this many active nodes.
pub const MIN_SAMPLING_POOL: u64 = 200;

/// Population parameters for the Sybil model: `n` verifiers sampled out of
/// `N` nodes of which `j` are dishonest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SybilParams {
    pub total_nodes: u64,
    pub sample_size: u64,
    pub dishonest: u64,
}

impl SybilParams {
    pub fn new(total_nodes: u64, sample_size: u64, dishonest: u64) -> Result<Self, AnalyticsError> {
        let params = SybilParams { total_nodes, sample_size, dishonest };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.sample_size == 0 || self.sample_size > self.total_nodes {
            return Err(AnalyticsError::InvalidParams(format!(
                "sample size {} must be in 1..={}",
                self.sample_size, self.total_nodes
            )));
        }
        if self.dishonest > self.total_nodes {
            return Err(AnalyticsError::InvalidParams(format!(
                "dishonest count {} exceeds population {}",
                self.dishonest, self.total_nodes
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("per-node capacity must be positive")]
    ZeroCapacity,
    #[error("economics require at least one active node")]
    ZeroNodes,
}

fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut result = BigUint::from(1u32);
    for i in 0..k {
        result = result * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    result
}

/// Exact rational value of the attack-success probability.
pub fn sybil_success_exact(params: &SybilParams) -> Result<Ratio<BigInt>, AnalyticsError> {
    params.validate()?;
    let (total, sample, dishonest) = (params.total_nodes, params.sample_size, params.dishonest);
    let mut numerator = BigUint::zero();
    for dishonest_picked in sample / 2 + 1..=sample {
        let honest_picked = sample - dishonest_picked;
        if dishonest_picked > dishonest || honest_picked > total - dishonest {
            continue;
        }
        numerator += binomial(dishonest, dishonest_picked)
            * binomial(total - dishonest, honest_picked);
    }
    let denominator = binomial(total, sample);
    Ok(Ratio::new(BigInt::from(numerator), BigInt::from(denominator)))
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

fn sybil_success_log_space(params: &SybilParams) -> f64 {
    let (total, sample, dishonest) = (params.total_nodes, params.sample_size, params.dishonest);
    let ln_denom = ln_binomial(total, sample);
    let mut sum = 0.0f64;
    for dishonest_picked in sample / 2 + 1..=sample {
        let honest_picked = sample - dishonest_picked;
        if dishonest_picked > dishonest || honest_picked > total - dishonest {
            continue;
        }
        sum += (ln_binomial(dishonest, dishonest_picked)
            + ln_binomial(total - dishonest, honest_picked)
            - ln_denom)
            .exp();
    }
    sum.clamp(0.0, 1.0)
}

/// Probability that a randomly sampled verifier committee holds a dishonest
/// strict majority.
pub fn sybil_success_probability(params: &SybilParams) -> Result<f64, AnalyticsError> {
    params.validate()?;
    if params.total_nodes <= EXACT_POPULATION_LIMIT {
        Ok(sybil_success_exact(params)?.to_f64().unwrap_or(0.0))
    } else {
        Ok(sybil_success_log_space(params))
    }
}

/// Monte Carlo estimate of the attack-success probability: per trial, sample
/// `n` of `N` without replacement and test for a dishonest strict majority.
/// Returns `(estimate, standard_error)` with the binomial standard error
/// `sqrt(p_hat (1 - p_hat) / trials)`.
pub fn sybil_success_monte_carlo(
    params: &SybilParams,
    trials: u64,
    seed: u64,
) -> Result<(f64, f64), AnalyticsError> {
    params.validate()?;
    if trials == 0 {
        return Err(AnalyticsError::InvalidParams("trials must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut successes = 0u64;
    for _ in 0..trials {
        // Sequential hypergeometric draw; exact and allocation-free.
        let mut remaining = params.total_nodes;
        let mut dishonest_left = params.dishonest;
        let mut picked_dishonest = 0u64;
        for _ in 0..params.sample_size {
            if rng.gen_range(0..remaining) < dishonest_left {
                picked_dishonest += 1;
                dishonest_left -= 1;
            }
            remaining -= 1;
        }
        if picked_dishonest > params.sample_size / 2 {
            successes += 1;
        }
    }
    let estimate = successes as f64 / trials as f64;
    let std_error = (estimate * (1.0 - estimate) / trials as f64).sqrt();
    Ok((estimate, std_error))
}

/// One row of the probability-curve CSV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SybilCurveRow {
    pub total_nodes: u64,
    pub sample_size: u64,
    pub dishonest: u64,
    pub analytic: f64,
    pub monte_carlo: f64,
    pub std_error: f64,
}

pub const SYBIL_CURVE_CSV_HEADER: &str = "N,n,j,analytic,monte_carlo,std_error";

pub fn write_sybil_curve_csv(mut writer: impl Write, rows: &[SybilCurveRow]) -> io::Result<()> {
    writeln!(writer, "{SYBIL_CURVE_CSV_HEADER}")?;
    for row in rows {
        writeln!(
            writer,
            "{},{},{},{:.6},{:.6},{:.6}",
            row.total_nodes,
            row.sample_size,
            row.dishonest,
            row.analytic,
            row.monte_carlo,
            row.std_error
        )?;
    }
    Ok(())
}

/// Inputs to the economics model, defaulting to the published operating
/// point: 15 verifiers per ad, 3.5M global ad transactions per second,
/// 7,000 ads/s of per-node capacity, $414B annual header-bidding revenue
/// with 1% allocated to the prize pool ($0.14B of it routed to the host),
/// and per-node internet/compute/storage costs of $380/$4,000/$18,700 per
/// year.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EconParams {
    pub verifiers_per_ad: u32,
    pub global_tps: f64,
    pub per_node_capacity: f64,
    pub header_bidding_revenue: f64,
    pub pool_fraction: f64,
    /// Share of the annual prize allocation that funds the host rather than
    /// the verifier pool.
    pub host_annual_share: f64,
    pub internet_cost: f64,
    pub compute_cost: f64,
    pub storage_cost: f64,
}

impl Default for EconParams {
    fn default() -> Self {
        EconParams {
            verifiers_per_ad: 15,
            global_tps: 3.5e6,
            per_node_capacity: 7_000.0,
            header_bidding_revenue: 414e9,
            pool_fraction: 0.01,
            host_annual_share: 0.14e9,
            internet_cost: 380.0,
            compute_cost: 4_000.0,
            storage_cost: 18_700.0,
        }
    }
}

impl EconParams {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        for (name, v) in [
            ("global_tps", self.global_tps),
            ("per_node_capacity", self.per_node_capacity),
            ("header_bidding_revenue", self.header_bidding_revenue),
            ("pool_fraction", self.pool_fraction),
            ("host_annual_share", self.host_annual_share),
            ("internet_cost", self.internet_cost),
            ("compute_cost", self.compute_cost),
            ("storage_cost", self.storage_cost),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(AnalyticsError::InvalidParams(format!("{name} must be nonnegative")));
            }
        }
        if self.pool_fraction > 1.0 {
            return Err(AnalyticsError::InvalidParams("pool_fraction must be <= 1".into()));
        }
        Ok(())
    }
}

/// Verifier slots needed to cover the global transaction rate, and the
/// recommended active-node pool once each committee of `V` is drawn from at
/// least [`MIN_SAMPLING_POOL`] nodes.
pub fn required_nodes(params: &EconParams) -> Result<(u64, u64), AnalyticsError> {
    params.validate()?;
    if params.per_node_capacity <= 0.0 {
        return Err(AnalyticsError::ZeroCapacity);
    }
    let slots =
        (params.global_tps * params.verifiers_per_ad as f64 / params.per_node_capacity).ceil()
            as u64;
    if params.verifiers_per_ad == 0 {
        return Ok((0, 0));
    }
    let committees = slots.div_ceil(params.verifiers_per_ad as u64);
    Ok((slots, committees * MIN_SAMPLING_POOL))
}

/// Annual per-node economics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EconBreakdown {
    pub verifier_slots: u64,
    pub active_nodes: u64,
    pub revenue: f64,
    pub internet: f64,
    pub compute: f64,
    pub storage: f64,
    pub profit: f64,
}

/// Per-node revenue, costs, and profit. The verifier pool is the configured
/// revenue fraction minus the host's share, spread uniformly across the
/// recommended active-node pool.
pub fn node_annual_profit(params: &EconParams) -> Result<EconBreakdown, AnalyticsError> {
    let (verifier_slots, active_nodes) = required_nodes(params)?;
    if active_nodes == 0 {
        return Err(AnalyticsError::ZeroNodes);
    }
    let gross_pool = params.header_bidding_revenue * params.pool_fraction;
    let verifier_pool = (gross_pool - params.host_annual_share).max(0.0);
    let revenue = verifier_pool / active_nodes as f64;
    let costs = params.internet_cost + params.compute_cost + params.storage_cost;
    Ok(EconBreakdown {
        verifier_slots,
        active_nodes,
        revenue,
        internet: params.internet_cost,
        compute: params.compute_cost,
        storage: params.storage_cost,
        profit: revenue - costs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::One;

    fn params(n: u64, k: u64, j: u64) -> SybilParams {
        SybilParams::new(n, k, j).unwrap()
    }

    #[test]
    fn degenerate_populations() {
        assert_eq!(sybil_success_probability(&params(100, 15, 0)).unwrap(), 0.0);
        assert_eq!(sybil_success_probability(&params(100, 15, 100)).unwrap(), 1.0);
        assert!(sybil_success_exact(&params(50, 7, 50)).unwrap().is_one());
        assert!(SybilParams::new(10, 0, 5).is_err());
        assert!(SybilParams::new(10, 11, 5).is_err());
        assert!(SybilParams::new(10, 5, 11).is_err());
    }

    #[test]
    fn exact_matches_exhaustive_enumeration_for_small_population() {
        // Oracle: enumerate all C(20,5) = 15,504 verifier subsets and count
        // those with a dishonest strict majority (>= 3 of 5), comparing as
        // exact rationals for every dishonest count.
        use itertools::Itertools;
        let population: Vec<u64> = (0..20).collect();
        for dishonest in 0..=20u64 {
            let mut hits = 0u64;
            let mut total = 0u64;
            for committee in population.iter().combinations(5) {
                total += 1;
                let picked_dishonest =
                    committee.iter().filter(|id| ***id < dishonest).count();
                if picked_dishonest > 2 {
                    hits += 1;
                }
            }
            assert_eq!(total, 15_504);
            let expected = Ratio::new(BigInt::from(hits), BigInt::from(total));
            let got = sybil_success_exact(&params(20, 5, dishonest)).unwrap();
            assert_eq!(got, expected, "j = {dishonest}");
        }
    }

    #[test]
    fn tail_and_complement_sum_to_one_exactly() {
        // Hypergeometric completeness in exact arithmetic.
        let p = params(30, 7, 11);
        let tail = sybil_success_exact(&p).unwrap();
        let mut complement = Ratio::from_integer(BigInt::from(0));
        for i in 0..=7u64 / 2 {
            if i > 11 || 7 - i > 30 - 11 {
                continue;
            }
            let term = binomial(11, i) * binomial(19, 7 - i);
            complement += Ratio::new(BigInt::from(term), BigInt::from(binomial(30, 7)));
        }
        assert!( (tail + complement).is_one() );
    }

    #[test]
    fn log_space_path_agrees_with_exact() {
        for (n, k, j) in [(2_000u64, 15u64, 900u64), (5_000, 19, 2_400), (9_999, 15, 4_000)] {
            let p = params(n, k, j);
            let exact = sybil_success_exact(&p).unwrap().to_f64().unwrap();
            let logged = sybil_success_log_space(&p);
            assert!((exact - logged).abs() <= 1e-9 * exact.max(1e-12), "({n},{k},{j})");
        }
        // large-population path stays in range and keeps monotonicity
        let big = |j| sybil_success_probability(&params(1_000_000, 15, j)).unwrap();
        assert!(big(100_000) < big(500_000));
        assert!((big(500_000) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn success_probability_is_monotone_in_dishonest_count() {
        let mut last = 0.0;
        for j in 0..=60u64 {
            let p = sybil_success_probability(&params(60, 9, j)).unwrap();
            assert!(p >= last - 1e-15, "j = {j}");
            last = p;
        }
    }

    #[test]
    fn monte_carlo_is_deterministic_and_consistent() {
        let p = params(1_000, 15, 450);
        let (e1, se1) = sybil_success_monte_carlo(&p, 20_000, 7).unwrap();
        let (e2, _) = sybil_success_monte_carlo(&p, 20_000, 7).unwrap();
        assert_eq!(e1, e2);

        let analytic = sybil_success_probability(&p).unwrap();
        let tolerance = 3.0 * (analytic * (1.0 - analytic) / 20_000.0).sqrt();
        assert!((e1 - analytic).abs() <= tolerance, "estimate {e1} vs analytic {analytic}");
        assert!(se1 > 0.0);

        let (zero, zero_se) = sybil_success_monte_carlo(&params(100, 15, 0), 5_000, 1).unwrap();
        assert_eq!((zero, zero_se), (0.0, 0.0));
    }

    #[test]
    fn required_nodes_reproduces_the_operating_point() {
        let econ = EconParams::default();
        let (slots, pool) = required_nodes(&econ).unwrap();
        assert_eq!(slots, 7_500);
        assert_eq!(pool, 100_000);

        let none = EconParams { verifiers_per_ad: 0, ..econ };
        assert_eq!(required_nodes(&none).unwrap(), (0, 0));

        let broken = EconParams { per_node_capacity: 0.0, ..econ };
        assert_eq!(required_nodes(&broken), Err(AnalyticsError::ZeroCapacity));
    }

    #[test]
    fn profit_breakdown_matches_published_figures() {
        let breakdown = node_annual_profit(&EconParams::default()).unwrap();
        assert_eq!(breakdown.active_nodes, 100_000);
        assert!((breakdown.revenue - 40_000.0).abs() < 1e-6);
        let costs = breakdown.internet + breakdown.compute + breakdown.storage;
        assert!((costs - 23_080.0).abs() < 1e-6);
        assert!((breakdown.profit - 16_920.0).abs() < 1e-6);
        // inside the +/-5% band around $17K/year
        assert!(breakdown.profit >= 17_000.0 * 0.95 && breakdown.profit <= 17_000.0 * 1.05);
    }

    #[test]
    fn zero_pool_fraction_means_pure_cost() {
        let breakdown =
            node_annual_profit(&EconParams { pool_fraction: 0.0, ..EconParams::default() })
                .unwrap();
        assert_eq!(breakdown.revenue, 0.0);
        assert!((breakdown.profit + 23_080.0).abs() < 1e-6);
    }

    #[test]
    fn doubling_capacity_halves_slots_and_doubles_revenue() {
        let base = EconParams::default();
        let doubled = EconParams { per_node_capacity: base.per_node_capacity * 2.0, ..base };
        let a = node_annual_profit(&base).unwrap();
        let b = node_annual_profit(&doubled).unwrap();
        assert_eq!(b.verifier_slots * 2, a.verifier_slots);
        assert_eq!(b.active_nodes * 2, a.active_nodes);
        assert!((b.revenue - 2.0 * a.revenue).abs() < 1e-9 * a.revenue);
    }

    #[test]
    fn model_is_homogeneous_in_load_and_capacity() {
        let base = EconParams::default();
        for factor in [0.5, 2.0, 10.0] {
            let scaled = EconParams {
                global_tps: base.global_tps * factor,
                per_node_capacity: base.per_node_capacity * factor,
                ..base
            };
            assert_eq!(required_nodes(&scaled).unwrap(), required_nodes(&base).unwrap());
        }
    }

    #[test]
    fn curve_csv_has_header_and_fixed_precision() {
        let rows = vec![SybilCurveRow {
            total_nodes: 1_000,
            sample_size: 15,
            dishonest: 450,
            analytic: 0.345528,
            monte_carlo: 0.344,
            std_error: 0.0047,
        }];
        let mut buffer = Vec::new();
        write_sybil_curve_csv(&mut buffer, &rows).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        assert_eq!(
            text,
            "N,n,j,analytic,monte_carlo,std_error\n1000,15,450,0.345528,0.344000,0.004700\n"
        );
    }
}
