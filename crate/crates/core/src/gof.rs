//! Maximum entry-wise deviation statistics, their Gumbel null and the
//! two-sided tests for a community count or a full membership vector.
//!
//! For a hypothesised membership `σ₀` with `k₀` communities the deviation of
//! node `i` against community `v` is
//!
//! ```text
//! ρ_iv = |v \ {i}|^{-1/2} Σ_{j ∈ v, j ≠ i} (A_ij − P_ij) / sqrt(P_ij (1 − P_ij))
//! ```
//!
//! with `P_ij = B̂_{σ₀(i)σ₀(j)}` for the plain block model and
//! `P_ij = ω_i ω_j B̂_{σ₀(i)σ₀(j)}` for the degree-corrected one. The statistic
//! is `T = L² − 2 log(2k₀n) + log log(2k₀n)` with `L = max |ρ_iv|`, and its
//! null limit is Gumbel with location `−2 log(2√π)` and scale 2.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::detect::{score, spectral_clustering, ClusteringConfig, Detector};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{
    estimate_block_matrix, estimate_degree_params, BlockMatrix, DegreeParams, Membership,
};

/// Gumbel law with location `−2 log(2√π)` and scale 2.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GumbelNull;

impl GumbelNull {
    pub const SCALE: f64 = 2.0;

    pub fn new() -> Self {
        GumbelNull
    }

    pub fn location(&self) -> f64 {
        -2.0 * (2.0 * PI.sqrt()).ln()
    }

    /// `exp(−e^{−y/2} / (2√π))`.
    pub fn cdf(&self, y: f64) -> f64 {
        (-(-y / Self::SCALE).exp() / (2.0 * PI.sqrt())).exp()
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!(
                "quantile level {p} is outside (0, 1)"
            )));
        }
        Ok(self.location() - Self::SCALE * (-p.ln()).ln())
    }
}

pub fn gumbel_cdf(y: f64) -> f64 {
    GumbelNull.cdf(y)
}

pub fn gumbel_quantile(p: f64) -> Result<f64> {
    GumbelNull.quantile(p)
}

/// Which member of the statistic family a value belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StatisticVariant {
    /// Block model with estimated `B̂`.
    #[serde(rename = "T_n")]
    Tn,
    /// Degree-corrected, known `ω`.
    #[serde(rename = "T_n1")]
    Tn1,
    /// Degree-corrected, plug-in `ω̂`.
    #[serde(rename = "T_n2")]
    Tn2,
    /// `T_n2` with `L` scaled by `sqrt((k₀+1)/k₀)`.
    #[serde(rename = "T_n3")]
    Tn3,
}

impl StatisticVariant {
    pub fn name(self) -> &'static str {
        match self {
            StatisticVariant::Tn => "T_n",
            StatisticVariant::Tn1 => "T_n1",
            StatisticVariant::Tn2 => "T_n2",
            StatisticVariant::Tn3 => "T_n3",
        }
    }
}

impl fmt::Display for StatisticVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldVariant {
    Sbm,
    DcsbmKnownOmega,
    DcsbmEstimatedOmega,
}

/// Standardised deviations `ρ_iv`, row-major `n × k₀`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationField {
    pub n: usize,
    pub k0: usize,
    pub rho: Vec<f64>,
    pub variant: FieldVariant,
    /// Number of `(i, j)` terms whose probability had to be clamped.
    pub clamp_events: u64,
}

impl DeviationField {
    pub fn get(&self, i: usize, v: usize) -> f64 {
        self.rho[i * self.k0 + v]
    }
}

/// Probabilities are kept inside `[ε, 1 − ε]` with `ε = 1 / (2n²)`.
pub fn clamp_epsilon(n: usize) -> f64 {
    1.0 / (2.0 * (n as f64).powi(2))
}

/// Standardised sum of `pairs` Bernoulli(`p`) residuals with `edges` successes:
/// `(edges − pairs·p) / (sqrt(pairs) · sqrt(p(1 − p)))`.
#[inline]
pub fn aggregated_deviation(edges: f64, pairs: usize, p: f64) -> f64 {
    let s = pairs as f64;
    (edges - s * p) / (s.sqrt() * (p * (1.0 - p)).sqrt())
}

fn check_field_inputs(g: &Graph, sigma0: &Membership, bhat: &BlockMatrix) -> Result<()> {
    sigma0.require_len(g.n())?;
    sigma0.require_min_size(2, "the deviation statistic")?;
    if bhat.k() != sigma0.k() {
        return Err(Error::domain(format!(
            "B̂ is {}x{} but the membership has {} communities",
            bhat.k(),
            bhat.k(),
            sigma0.k()
        )));
    }
    Ok(())
}

/// Per-node neighbour counts into every community, row-major `n × k`.
fn neighbour_counts(g: &Graph, sigma0: &Membership) -> Vec<u32> {
    let k = sigma0.k();
    let mut counts = vec![0u32; g.n() * k];
    for i in 0..g.n() {
        let row = &mut counts[i * k..(i + 1) * k];
        for &j in g.neighbors(i) {
            row[sigma0.label(j as usize)] += 1;
        }
    }
    counts
}

struct Clamp {
    lo: f64,
    hi: f64,
}

impl Clamp {
    fn new(n: usize) -> Self {
        let eps = clamp_epsilon(n);
        Clamp {
            lo: eps,
            hi: 1.0 - eps,
        }
    }

    #[inline]
    fn apply(&self, p: f64) -> (f64, bool) {
        if p < self.lo {
            (self.lo, true)
        } else if p > self.hi {
            (self.hi, true)
        } else {
            (p, false)
        }
    }
}

pub fn deviation_field_sbm(
    g: &Graph,
    sigma0: &Membership,
    bhat: &BlockMatrix,
) -> Result<DeviationField> {
    check_field_inputs(g, sigma0, bhat)?;
    let (n, k) = (g.n(), sigma0.k());
    let clamp = Clamp::new(n);
    let sizes = sigma0.sizes();
    let counts = neighbour_counts(g, sigma0);
    let mut rho = vec![0.0; n * k];
    let mut clamp_events = 0u64;
    for i in 0..n {
        let u = sigma0.label(i);
        for v in 0..k {
            let pairs = sizes[v] - usize::from(u == v);
            let (p, clamped) = clamp.apply(bhat.get(u, v));
            if clamped {
                clamp_events += pairs as u64;
            }
            rho[i * k + v] = aggregated_deviation(f64::from(counts[i * k + v]), pairs, p);
        }
    }
    Ok(DeviationField {
        n,
        k0: k,
        rho,
        variant: FieldVariant::Sbm,
        clamp_events,
    })
}

/// Degree-corrected deviations. Communities whose multipliers are all equal
/// use the aggregated form, so `ω ≡ 1` reproduces [`deviation_field_sbm`]
/// bit for bit.
pub fn deviation_field_dcsbm(
    g: &Graph,
    sigma0: &Membership,
    bhat: &BlockMatrix,
    omega: &DegreeParams,
    omega_is_estimated: bool,
) -> Result<DeviationField> {
    check_field_inputs(g, sigma0, bhat)?;
    if omega.len() != g.n() {
        return Err(Error::domain(
            "degree parameters and graph differ in length",
        ));
    }
    let (n, k) = (g.n(), sigma0.k());
    let w = omega.as_slice();
    let clamp = Clamp::new(n);
    let sizes = sigma0.sizes();
    let communities = sigma0.communities();
    let uniform: Vec<Option<f64>> = communities
        .iter()
        .map(|members| {
            let first = w[members[0]];
            members.iter().all(|&j| w[j] == first).then_some(first)
        })
        .collect();
    let counts = neighbour_counts(g, sigma0);
    let mut rho = vec![0.0; n * k];
    let mut clamp_events = 0u64;
    let mut adjacent = vec![false; n];
    for i in 0..n {
        let u = sigma0.label(i);
        for &j in g.neighbors(i) {
            adjacent[j as usize] = true;
        }
        for v in 0..k {
            let pairs = sizes[v] - usize::from(u == v);
            let b = bhat.get(u, v);
            rho[i * k + v] = match uniform[v] {
                Some(wv) => {
                    let (p, clamped) = clamp.apply(w[i] * wv * b);
                    if clamped {
                        clamp_events += pairs as u64;
                    }
                    aggregated_deviation(f64::from(counts[i * k + v]), pairs, p)
                }
                None => {
                    let mut sum = 0.0;
                    for &j in &communities[v] {
                        if j == i {
                            continue;
                        }
                        let (p, clamped) = clamp.apply(w[i] * w[j] * b);
                        clamp_events += u64::from(clamped);
                        let a = if adjacent[j] { 1.0 } else { 0.0 };
                        sum += (a - p) / (p * (1.0 - p)).sqrt();
                    }
                    sum / (pairs as f64).sqrt()
                }
            };
        }
        for &j in g.neighbors(i) {
            adjacent[j as usize] = false;
        }
    }
    Ok(DeviationField {
        n,
        k0: k,
        rho,
        variant: if omega_is_estimated {
            FieldVariant::DcsbmEstimatedOmega
        } else {
            FieldVariant::DcsbmKnownOmega
        },
        clamp_events,
    })
}

/// `L = max_{i,v} |ρ_iv|`.
pub fn statistic_l(field: &DeviationField) -> f64 {
    field.rho.iter().fold(0.0, |m: f64, r| m.max(r.abs()))
}

/// Centred statistic `L² − 2 log(2k₀n) + log log(2k₀n)`; for `T_n3` the
/// maximum is first scaled by `sqrt((k₀+1)/k₀)`.
pub fn statistic_t(l: f64, k0: usize, n: usize, variant: StatisticVariant) -> f64 {
    assert!(n >= 2 && k0 >= 1, "statistic needs n >= 2 and k0 >= 1");
    let l = match variant {
        StatisticVariant::Tn3 => l * ((k0 as f64 + 1.0) / k0 as f64).sqrt(),
        _ => l,
    };
    let m = (2 * k0 * n) as f64;
    l * l - 2.0 * m.ln() + m.ln().ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Sbm,
    Dcsbm,
}

/// Where the hypothesised membership came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaSource {
    Supplied,
    Spectral,
    Score,
}

impl From<Detector> for SigmaSource {
    fn from(d: Detector) -> Self {
        match d {
            Detector::Spectral => SigmaSource::Spectral,
            Detector::Score => SigmaSource::Score,
        }
    }
}

/// Outcome of one two-sided test at level `alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub variant: StatisticVariant,
    pub statistic: f64,
    /// Unscaled maximum |deviation| (`L_n`, `L_n1` or `L_n2`).
    #[serde(rename = "L")]
    pub l: f64,
    pub k0: usize,
    pub n: usize,
    pub alpha: f64,
    pub lower_critical: f64,
    pub upper_critical: f64,
    pub reject: bool,
    pub p_value: f64,
    pub clamp_events: u64,
    pub sigma_source: SigmaSource,
    /// Companion `T_n2` value reported next to `T_n3`; never used for decisions.
    pub t_n2: Option<f64>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("level {alpha} is outside (0, 1)")))
    }
}

/// Two-sided p-value `2 min(F(t), 1 − F(t))`.
pub fn two_sided_p_value(statistic: f64) -> f64 {
    let f = gumbel_cdf(statistic);
    (2.0 * f.min(1.0 - f)).clamp(0.0, 1.0)
}

fn report(
    variant: StatisticVariant,
    l: f64,
    k0: usize,
    n: usize,
    alpha: f64,
    clamp_events: u64,
    sigma_source: SigmaSource,
    t_n2: Option<f64>,
) -> Result<TestReport> {
    let statistic = statistic_t(l, k0, n, variant);
    let lower_critical = gumbel_quantile(alpha / 2.0)?;
    let upper_critical = gumbel_quantile(1.0 - alpha / 2.0)?;
    Ok(TestReport {
        variant,
        statistic,
        l,
        k0,
        n,
        alpha,
        lower_critical,
        upper_critical,
        reject: statistic > upper_critical || statistic < lower_critical,
        p_value: two_sided_p_value(statistic),
        clamp_events,
        sigma_source,
        t_n2,
    })
}

fn evaluate(
    g: &Graph,
    sigma0: &Membership,
    alpha: f64,
    model: ModelKind,
    source: SigmaSource,
) -> Result<TestReport> {
    let (n, k0) = (g.n(), sigma0.k());
    if n < 2 {
        return Err(Error::domain("the test needs at least two nodes"));
    }
    let bhat = estimate_block_matrix(g, sigma0)?;
    match model {
        ModelKind::Sbm => {
            let field = deviation_field_sbm(g, sigma0, &bhat)?;
            report(
                StatisticVariant::Tn,
                statistic_l(&field),
                k0,
                n,
                alpha,
                field.clamp_events,
                source,
                None,
            )
        }
        ModelKind::Dcsbm => {
            let omega = estimate_degree_params(g, sigma0)?;
            let field = deviation_field_dcsbm(g, sigma0, &bhat, &omega, true)?;
            let l = statistic_l(&field);
            let t_n2 = statistic_t(l, k0, n, StatisticVariant::Tn2);
            report(
                StatisticVariant::Tn3,
                l,
                k0,
                n,
                alpha,
                field.clamp_events,
                source,
                Some(t_n2),
            )
        }
    }
}

/// Tests `H₀: k = k₀` after estimating labels with spectral clustering (block
/// model) or SCORE (degree-corrected model).
pub fn test_num_communities(
    g: &Graph,
    k0: usize,
    alpha: f64,
    model: ModelKind,
    cfg: &ClusteringConfig,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    if k0 == 0 {
        return Err(Error::domain("k0 must be at least 1"));
    }
    let (sigma_hat, detector) = match model {
        ModelKind::Sbm => (spectral_clustering(g, k0, cfg)?, Detector::Spectral),
        ModelKind::Dcsbm => (score(g, k0, cfg)?, Detector::Score),
    };
    if sigma_hat.sizes().iter().any(|&s| s < 2) {
        return Err(Error::domain(format!(
            "estimated membership for k0 = {k0} has a single-node community; \
             try a smaller k0 or check whether the plain block model fits"
        )));
    }
    evaluate(g, &sigma_hat, alpha, model, detector.into())
}

/// Tests `H₀: σ = σ₀`; `k₀` is the number of communities in `σ₀`.
pub fn test_membership(
    g: &Graph,
    sigma0: &Membership,
    alpha: f64,
    model: ModelKind,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    evaluate(g, sigma0, alpha, model, SigmaSource::Supplied)
}

/// Degree-corrected test with known multipliers (`T_n1`).
pub fn test_membership_known_omega(
    g: &Graph,
    sigma0: &Membership,
    omega: &DegreeParams,
    alpha: f64,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    let bhat = estimate_block_matrix(g, sigma0)?;
    let field = deviation_field_dcsbm(g, sigma0, &bhat, omega, false)?;
    report(
        StatisticVariant::Tn1,
        statistic_l(&field),
        sigma0.k(),
        g.n(),
        alpha,
        field.clamp_events,
        SigmaSource::Supplied,
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rng_from_seed, sample_membership_balanced, sample_sbm};

    #[test]
    fn gumbel_location_maps_to_inverse_e() {
        let g = GumbelNull::new();
        assert!((g.cdf(g.location()) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((g.location() + 2.531024246969291).abs() < 1e-12);
        assert_eq!(gumbel_cdf(1e6), 1.0);
        assert_eq!(gumbel_cdf(-1e6), 0.0);
    }

    #[test]
    fn reported_critical_values() {
        assert!((gumbel_quantile(0.975).unwrap() - 4.82).abs() < 0.01);
        assert!((gumbel_quantile(0.025).unwrap() + 5.14).abs() < 0.01);
        assert!((gumbel_cdf(4.82) - 0.975).abs() < 5e-4);
        assert!(gumbel_quantile(0.0).is_err());
        assert!(gumbel_quantile(1.0).is_err());
        assert!(gumbel_quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            assert!((gumbel_cdf(gumbel_quantile(p).unwrap()) - p).abs() < 1e-10);
        }
    }

    #[test]
    fn statistic_t_arithmetic() {
        let t = statistic_t(0.0, 1, 2, StatisticVariant::Tn);
        assert!((t - (-2.0 * 4f64.ln() + 4f64.ln().ln())).abs() < 1e-15);
        let base = statistic_t(2.0 * 1.5f64.sqrt(), 2, 100, StatisticVariant::Tn2);
        let scaled = statistic_t(2.0, 2, 100, StatisticVariant::Tn3);
        assert!((base - scaled).abs() < 1e-12);
    }

    #[test]
    fn single_corrupted_node_expected_counts() {
        // node 1 moved to the other half of a 200/200 split, B = 0.2 / 0.1
        let rho11 = aggregated_deviation(40.0, 200, 0.1);
        let rho12 = aggregated_deviation(20.0, 200, 0.2);
        assert!((rho11 - 4.71).abs() < 0.005);
        assert!((rho12 + 3.54).abs() < 0.005);
        assert!((statistic_t(rho11, 2, 400, StatisticVariant::Tn) - 9.46).abs() < 0.02);
    }

    #[test]
    fn field_l_and_errors() {
        let field = DeviationField {
            n: 2,
            k0: 2,
            rho: vec![0.0, -1.5, 4.71, 2.0],
            variant: FieldVariant::Sbm,
            clamp_events: 0,
        };
        assert_eq!(statistic_l(&field), 4.71);
        let zero = DeviationField {
            rho: vec![0.0; 4],
            ..field
        };
        assert_eq!(statistic_l(&zero), 0.0);

        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        let sigma = Membership::new(vec![0, 0, 1], 2).unwrap();
        let b = BlockMatrix::constant(2, 0.5).unwrap();
        assert!(deviation_field_sbm(&g, &sigma, &b).is_err());
    }

    fn tiny() -> (Graph, Membership) {
        let edges = [(0, 1), (0, 2), (1, 3), (2, 4), (3, 4), (4, 5), (0, 5)];
        (
            Graph::from_edges(6, edges).unwrap(),
            Membership::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap(),
        )
    }

    fn assert_field(field: &DeviationField, expected: &[[f64; 2]; 6]) {
        for (i, row) in expected.iter().enumerate() {
            for (v, &want) in row.iter().enumerate() {
                assert!(
                    (field.get(i, v) - want).abs() < 1e-12,
                    "({i},{v}): {} vs {want}",
                    field.get(i, v)
                );
            }
        }
    }

    #[test]
    fn tiny_instance_matches_frozen_values() {
        let (g, sigma) = tiny();
        let bhat = estimate_block_matrix(&g, &sigma).unwrap();
        let field = deviation_field_sbm(&g, &sigma, &bhat).unwrap();
        assert_field(
            &field,
            &[
                [1.0, 0.0],
                [-0.5, 0.0],
                [-0.5, 0.0],
                [0.0, -0.5],
                [0.0, 1.0],
                [0.0, -0.5],
            ],
        );
        assert_eq!(statistic_l(&field), field.get(0, 0));
    }

    #[test]
    fn tiny_degree_corrected_matches_frozen_values() {
        let (g, sigma) = tiny();
        let bhat = estimate_block_matrix(&g, &sigma).unwrap();
        let omega = DegreeParams::new(vec![1.2, 0.8, 1.0, 0.9, 1.1, 1.0]).unwrap();
        let field = deviation_field_dcsbm(&g, &sigma, &bhat, &omega, false).unwrap();
        assert_eq!(field.variant, FieldVariant::DcsbmKnownOmega);
        assert_field(
            &field,
            &[
                [0.8838834764831845, -0.23767223642483068],
                [-0.22559886012854374, 0.30727285631623247],
                [-0.4023755554251806, -0.02742585283376201],
                [0.2164251589267161, -0.3585061848618864],
                [-0.12495357068036535, 0.933920651633773],
                [-0.04929682118871108, -0.4396239710732179],
            ],
        );
    }

    #[test]
    fn degenerate_bhat_is_clamped_and_counted() {
        // two blocks of 3 with no cross edges: B̂_12 = 0
        let g = Graph::from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4)]).unwrap();
        let sigma = Membership::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
        let bhat = estimate_block_matrix(&g, &sigma).unwrap();
        let field = deviation_field_sbm(&g, &sigma, &bhat).unwrap();
        assert!(field.rho.iter().all(|r| r.is_finite()));
        // B̂_11 = 1 clamps for nodes 0..3 (2 terms each), B̂_12 = B̂_21 = 0 for all (3 each)
        assert_eq!(field.clamp_events, 3 * 2 + 6 * 3);
    }

    #[test]
    fn report_is_consistent() {
        let mut rng = rng_from_seed(21);
        let sigma = sample_membership_balanced(200, 2, &mut rng).unwrap();
        let g = sample_sbm(
            &sigma,
            &BlockMatrix::assortative(2, 0.1, 2.0).unwrap(),
            &mut rng,
        )
        .unwrap();
        let r = test_membership(&g, &sigma, 0.05, ModelKind::Sbm).unwrap();
        assert_eq!(r.variant, StatisticVariant::Tn);
        assert_eq!(r.statistic, statistic_t(r.l, 2, 200, StatisticVariant::Tn));
        assert_eq!(
            r.reject,
            r.statistic > r.upper_critical || r.statistic < r.lower_critical
        );
        assert_eq!(r.reject, r.p_value < r.alpha);
        let d = test_membership(&g, &sigma, 0.05, ModelKind::Dcsbm).unwrap();
        assert_eq!(d.variant, StatisticVariant::Tn3);
        assert_eq!(
            d.t_n2,
            Some(statistic_t(d.l, 2, 200, StatisticVariant::Tn2))
        );
        assert!(test_membership(&g, &sigma, 1.0, ModelKind::Sbm).is_err());
    }
}
