//! Sum-rate maximisation by fractional programming with projected successive
//! linear approximation (PSLA).
//!
//! The rate of user `k` is lower-bounded by the quadratic-transform surrogate
//!
//! ```text
//! Rbar_k = 2 sqrt(1+a_k) Re{conj(b_k) h_k^H t_k} + ln(1+a_k) - a_k
//!          - |b_k|^2 (sum_i |h_k^H t_i|^2 + sigma_k^2)
//! ```
//!
//! which is tight at the closed-form `a`, `b`. For fixed `a`, `b` the
//! surrogate is a concave quadratic in `T`; adding `xi (trace(T T^H) - Pt)`,
//! which vanishes on the power sphere, makes its quadratic part convex
//! whenever `xi I - Hbar diag(|b|^2) Hbar^H` is PSD. Linearising that part at
//! the current iterate gives a minorizer whose maximiser on the sphere is a
//! scaled matrix, so every outer round is a closed-form minorize-maximize
//! step and the sum-rate never decreases.
//!
//! All routines accept a channel with any number of rows, so the same code
//! serves the reduced `K x K` problem and the full `L x K` one.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{reduce_channel, ChannelSet, ReducedChannel};
use crate::error::{MilacError, Result};
use crate::linalg::{self, CMat};
use crate::mapping::{map_digital_to_milac, DigitalBeamformer, TwoLayerSolution};

/// Largest admissible gap between the digital sum-rate and the sum-rate of
/// the synthesised analog transmitter.
pub const EQUIVALENCE_TOL: f64 = 1e-9;

fn check_shapes(h: &CMat, p: &CMat, sigma: &[f64]) -> Result<()> {
    if h.nrows() != p.nrows() || h.ncols() != p.ncols() || sigma.len() != h.ncols() {
        return Err(MilacError::DimensionMismatch(format!(
            "channel {}x{}, precoder {}x{}, {} noise levels",
            h.nrows(),
            h.ncols(),
            p.nrows(),
            p.ncols(),
            sigma.len()
        )));
    }
    Ok(())
}

/// `|h_k^H p_k|^2 / (sum_{i != k} |h_k^H p_i|^2 + sigma_k^2)`.
pub fn sinr(h: &CMat, p: &CMat, sigma: &[f64], k: usize) -> Result<f64> {
    check_shapes(h, p, sigma)?;
    if k >= h.ncols() {
        return Err(MilacError::InvalidDimension(format!(
            "user {k} out of range for {} users",
            h.ncols()
        )));
    }
    let hk = h.column(k);
    let mut interference = sigma[k] * sigma[k];
    let mut desired = 0.0;
    for i in 0..p.ncols() {
        let g = hk.dotc(&p.column(i)).norm_sqr();
        if i == k {
            desired = g;
        } else {
            interference += g;
        }
    }
    Ok(desired / interference)
}

/// Per-user SINRs from the cross-gain matrix `H^H P`.
fn sinrs_unchecked(h: &CMat, p: &CMat, sigma: &[f64]) -> Vec<f64> {
    let gains = h.adjoint() * p;
    (0..h.ncols())
        .map(|k| {
            let row_power: f64 = gains.row(k).iter().map(|z| z.norm_sqr()).sum();
            let desired = gains[(k, k)].norm_sqr();
            desired / (row_power - desired + sigma[k] * sigma[k])
        })
        .collect()
}

/// Per-user rates `log2(1 + sinr_k)` in bit/s/Hz.
pub fn rates(h: &CMat, p: &CMat, sigma: &[f64]) -> Result<Vec<f64>> {
    check_shapes(h, p, sigma)?;
    Ok(sinrs_unchecked(h, p, sigma).into_iter().map(|g| g.ln_1p() / std::f64::consts::LN_2).collect())
}

/// Sum of `log2(1 + sinr_k)` over users.
pub fn sum_rate(h: &CMat, p: &CMat, sigma: &[f64]) -> Result<f64> {
    Ok(rates(h, p, sigma)?.iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum XiRule {
    /// Largest eigenvalue of `Hbar diag(|b|^2) Hbar^H`.
    #[default]
    Spectral,
    /// Its trace; looser but needs no eigen-solve.
    Trace,
}

impl std::str::FromStr for XiRule {
    type Err = MilacError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spectral" => Ok(XiRule::Spectral),
            "trace" => Ok(XiRule::Trace),
            other => Err(MilacError::InvalidConfig(format!(
                "unknown xi rule {other:?} (expected spectral or trace)"
            ))),
        }
    }
}

/// Starting point used when no explicit initial precoder is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitRule {
    /// Run from both the regularised zero-forcing and the matched-filter
    /// start and keep the better result.
    #[default]
    MultiStart,
    /// Regularised zero forcing with equal column powers.
    RegularizedZf,
    /// Matched filter with equal column powers.
    MatchedFilter,
}

impl std::str::FromStr for InitRule {
    type Err = MilacError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "multi_start" | "auto" => Ok(InitRule::MultiStart),
            "regularized_zf" | "rzf" => Ok(InitRule::RegularizedZf),
            "matched_filter" | "mf" => Ok(InitRule::MatchedFilter),
            other => Err(MilacError::InvalidConfig(format!(
                "unknown init rule {other:?} (expected multi_start, regularized_zf or matched_filter)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Radiated power budget `trace(P P^H)`.
    pub pt: f64,
    /// Relative sum-rate change below which the outer loop stops.
    pub eps: f64,
    pub max_outer: usize,
    /// Linearisation steps per outer round.
    pub inner_updates: usize,
    pub xi_rule: XiRule,
    pub xi_margin: f64,
    pub init: InitRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            pt: 1.0,
            eps: 1e-4,
            max_outer: 500,
            inner_updates: 1,
            xi_rule: XiRule::Spectral,
            xi_margin: 1e-9,
            init: InitRule::MultiStart,
        }
    }
}

impl SolverConfig {
    pub fn with_power(pt: f64) -> Self {
        SolverConfig { pt, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MilacError::InvalidConfig(msg));
        if !(self.pt.is_finite() && self.pt > 0.0) {
            return bad(format!("pt must be positive, got {}", self.pt));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.max_outer < 1 {
            return bad("max_outer must be at least 1".into());
        }
        if self.inner_updates < 1 {
            return bad("inner_updates must be at least 1".into());
        }
        if !(self.xi_margin >= 0.0) {
            return bad(format!("xi_margin must be nonnegative, got {}", self.xi_margin));
        }
        Ok(())
    }
}

/// Iterate of the alternating FP scheme.
#[derive(Debug, Clone)]
pub struct FPState {
    pub alpha: Vec<f64>,
    pub beta: Vec<Complex64>,
    pub t: CMat,
    /// Linearisation point.
    pub tbar: CMat,
}

impl FPState {
    /// State at precoder `t` with zero auxiliaries.
    pub fn new(t: CMat) -> Self {
        let k = t.ncols();
        FPState {
            alpha: vec![0.0; k],
            beta: vec![Complex64::new(0.0, 0.0); k],
            tbar: t.clone(),
            t,
        }
    }

    /// Closed-form optimal `alpha`, `beta` for the current `t`.
    pub fn update_alpha_beta(&mut self, hbar: &CMat, sigma: &[f64]) {
        let gains = hbar.adjoint() * &self.t;
        for k in 0..hbar.ncols() {
            let row_power: f64 = gains.row(k).iter().map(|z| z.norm_sqr()).sum();
            let own = gains[(k, k)];
            let noise = sigma[k] * sigma[k];
            let alpha = own.norm_sqr() / (row_power - own.norm_sqr() + noise);
            self.alpha[k] = alpha;
            self.beta[k] = own * ((1.0 + alpha).sqrt() / (row_power + noise));
        }
    }

    /// `diag(sqrt(1 + a_k) b_k)`, returned as its diagonal.
    fn sigma1(&self) -> Vec<Complex64> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| b * (1.0 + a).sqrt())
            .collect()
    }

    /// `diag(|b_k|^2)`, returned as its diagonal.
    fn sigma2(&self) -> Vec<f64> {
        self.beta.iter().map(|b| b.norm_sqr()).collect()
    }

    /// Sum of the surrogate rates `Rbar_k` at the stored variables, in nats.
    pub fn surrogate_value(&self, hbar: &CMat, sigma: &[f64]) -> f64 {
        let gains = hbar.adjoint() * &self.t;
        (0..hbar.ncols())
            .map(|k| {
                let (a, b) = (self.alpha[k], self.beta[k]);
                let row_power: f64 = gains.row(k).iter().map(|z| z.norm_sqr()).sum();
                2.0 * (1.0 + a).sqrt() * (b.conj() * gains[(k, k)]).re + a.ln_1p()
                    - b.norm_sqr() * (row_power + sigma[k] * sigma[k])
                    - a
            })
            .sum()
    }

    /// The `T`-dependent part of the surrogate,
    /// `2 Re tr(conj(Sigma1) Hbar^H T) - tr(T T^H Hbar Sigma2 Hbar^H)`.
    pub fn quadratic_objective(&self, hbar: &CMat) -> f64 {
        let gains = hbar.adjoint() * &self.t;
        let s1 = self.sigma1();
        let s2 = self.sigma2();
        (0..hbar.ncols())
            .map(|k| {
                let row_power: f64 = gains.row(k).iter().map(|z| z.norm_sqr()).sum();
                2.0 * (s1[k].conj() * gains[(k, k)]).re - s2[k] * row_power
            })
            .sum()
    }

    /// The `T`-independent part of the surrogate,
    /// `sum_k ln(1+a_k) - a_k - |b_k|^2 sigma_k^2`.
    pub fn constant_terms(&self, sigma: &[f64]) -> f64 {
        (0..self.alpha.len())
            .map(|k| {
                let a = self.alpha[k];
                a.ln_1p() - a - self.beta[k].norm_sqr() * sigma[k] * sigma[k]
            })
            .sum()
    }

    /// Objective of the linearised `T`-subproblem at `t` around `self.tbar`:
    /// `2 Re tr(conj(Sigma1) Hbar^H t) - tr(Tbar Tbar^H B) + 2 Re tr(Tbar t^H B)`
    /// with `B = xi I - Hbar Sigma2 Hbar^H`.
    pub fn linearized_objective(&self, hbar: &CMat, xi: f64, t: &CMat) -> f64 {
        let s1 = self.sigma1();
        let gains = hbar.adjoint() * t;
        let linear: f64 = (0..hbar.ncols()).map(|k| 2.0 * (s1[k].conj() * gains[(k, k)]).re).sum();
        let b_tbar = self.shifted_times(hbar, xi, &self.tbar);
        let constant = self.tbar.dotc(&b_tbar).re;
        let cross = t.dotc(&b_tbar).re;
        linear - constant + 2.0 * cross
    }

    /// `(xi I - Hbar Sigma2 Hbar^H) X` without forming the rows x rows matrix.
    fn shifted_times(&self, hbar: &CMat, xi: f64, x: &CMat) -> CMat {
        let mut inner = hbar.adjoint() * x;
        for (k, s) in self.sigma2().iter().enumerate() {
            inner.row_mut(k).scale_mut(*s);
        }
        x.scale(xi) - hbar * inner
    }

    /// Projected linearisation step:
    /// `T <- Pi(Hbar Sigma1 + (xi I - Hbar Sigma2 Hbar^H) Tbar)`, where `Pi`
    /// rescales onto `trace(T T^H) = pt`.
    pub fn update_t(&mut self, hbar: &CMat, xi: f64, pt: f64) -> Result<()> {
        let mut step = hbar.clone();
        for (k, s) in self.sigma1().iter().enumerate() {
            step.column_mut(k).apply(|z| *z *= s);
        }
        step += self.shifted_times(hbar, xi, &self.tbar);
        self.t = project_to_sphere(step, pt)?;
        Ok(())
    }
}

/// `sqrt(pt / trace(X X^H)) X`.
pub fn project_to_sphere(x: CMat, pt: f64) -> Result<CMat> {
    let norm_sq = linalg::power(&x);
    if !(norm_sq > 0.0) {
        return Err(MilacError::DegenerateProjection);
    }
    Ok(x.scale((pt / norm_sq).sqrt()))
}

/// Shift `xi` making `xi I - Hbar diag(|beta|^2) Hbar^H` positive
/// semidefinite, plus `margin`.
pub fn compute_xi(hbar: &CMat, beta: &[Complex64], rule: XiRule, margin: f64) -> f64 {
    let weights: Vec<f64> = beta.iter().map(|b| b.norm_sqr()).collect();
    let base = match rule {
        XiRule::Trace => (0..hbar.ncols())
            .map(|k| weights[k] * hbar.column(k).norm_squared())
            .sum::<f64>(),
        XiRule::Spectral => {
            // Nonzero spectrum of Hbar D Hbar^H equals that of
            // D^{1/2} Hbar^H Hbar D^{1/2}; take whichever side is smaller.
            let mut scaled = hbar.clone();
            for (k, w) in weights.iter().enumerate() {
                scaled.column_mut(k).scale_mut(w.sqrt());
            }
            let gram = if scaled.nrows() <= scaled.ncols() {
                &scaled * scaled.adjoint()
            } else {
                scaled.adjoint() * &scaled
            };
            linalg::hermitian_eigenvalues(&gram).into_iter().fold(0.0, f64::max)
        }
    };
    base.max(0.0) + margin
}

/// Matched-filter start: column `k` along `h_k`, every column with power
/// `pt / K`. Also used to equalise the columns of any other direction set.
pub fn matched_filter_init(h: &CMat, pt: f64) -> CMat {
    let k = h.ncols();
    let mut t = h.clone();
    for j in 0..k {
        let n = t.column(j).norm();
        if n > 0.0 {
            t.column_mut(j).scale_mut((pt / k as f64).sqrt() / n);
        }
    }
    t
}

/// Regularised zero-forcing start, `H (H^H H + (sum_k sigma_k^2 / pt) I)^-1`
/// with every column rescaled to power `pt / K`.
pub fn regularized_zf_init(h: &CMat, sigma: &[f64], pt: f64) -> CMat {
    let k = h.ncols();
    let reg: f64 = sigma.iter().map(|s| s * s).sum::<f64>() / pt;
    let gram = h.adjoint() * h + CMat::identity(k, k).scale(reg);
    let inv = gram
        .cholesky()
        .expect("Gram matrix plus a positive ridge is positive definite")
        .inverse();
    matched_filter_init(&(h * inv), pt)
}

/// Starting points for `h` under `cfg.init`, in order of preference.
pub fn initial_points(h: &CMat, sigma: &[f64], cfg: &SolverConfig) -> Vec<CMat> {
    match cfg.init {
        InitRule::MultiStart => vec![regularized_zf_init(h, sigma, cfg.pt), matched_filter_init(h, cfg.pt)],
        InitRule::RegularizedZf => vec![regularized_zf_init(h, sigma, cfg.pt)],
        InitRule::MatchedFilter => vec![matched_filter_init(h, cfg.pt)],
    }
}

/// Seeded complex-Gaussian start scaled onto the power sphere.
pub fn random_init(rows: usize, users: usize, pt: f64, seed: u64) -> CMat {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let t = CMat::from_fn(rows, users, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im)
    });
    project_to_sphere(t, pt).expect("gaussian draw is nonzero")
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Final optimisation variable (`K x K` reduced, or `L x K` full).
    pub t_final: CMat,
    /// Antenna-domain precoder, `L x K`.
    pub pd: CMat,
    /// Per-user rates in bit/s/Hz.
    pub rates: Vec<f64>,
    pub sum_rate: f64,
    /// Outer rounds of the returned run.
    pub iterations: usize,
    /// Starting points tried.
    pub starts: usize,
    /// Outer rounds summed over all starting points.
    pub total_iterations: usize,
    pub converged: bool,
    /// Sum-rate before the first round followed by the value after each round.
    pub objective_history: Vec<f64>,
    /// `||T - Tbar||_F / ||T||_F` after the last round.
    pub fixed_point_residual: f64,
    pub wall_time: Duration,
    /// Time spent inside the projected linearisation steps.
    pub t_update_time: Duration,
    pub t_updates: usize,
    pub config: SolverConfig,
}

/// Structured record of one solve, one JSON object per line in run logs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveRecord {
    pub config: SolverConfig,
    pub seed: Option<u64>,
    pub iterations: usize,
    pub starts: usize,
    pub total_iterations: usize,
    pub converged: bool,
    pub objective_history: Vec<f64>,
    pub rates: Vec<f64>,
    pub sum_rate: f64,
    pub wall_time_s: f64,
    pub t_update_time_s: f64,
    pub fixed_point_residual: f64,
}

impl SolveReport {
    pub fn record(&self, seed: Option<u64>) -> SolveRecord {
        SolveRecord {
            config: self.config,
            seed,
            iterations: self.iterations,
            starts: self.starts,
            total_iterations: self.total_iterations,
            converged: self.converged,
            objective_history: self.objective_history.clone(),
            rates: self.rates.clone(),
            sum_rate: self.sum_rate,
            wall_time_s: self.wall_time.as_secs_f64(),
            t_update_time_s: self.t_update_time.as_secs_f64(),
            fixed_point_residual: self.fixed_point_residual,
        }
    }

    pub fn to_json(&self, seed: Option<u64>) -> Result<String> {
        Ok(serde_json::to_string(&self.record(seed))?)
    }
}

pub(crate) struct FpRun {
    pub t: CMat,
    pub iterations: usize,
    pub starts: usize,
    pub total_iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
    pub fixed_point_residual: f64,
    pub t_update_time: Duration,
    pub t_updates: usize,
}

/// The alternating FP / PSLA loop over a precoder with `h.nrows()` rows.
pub(crate) fn run_fp(h: &CMat, sigma: &[f64], cfg: &SolverConfig, init: CMat) -> Result<FpRun> {
    let rate = |t: &CMat| -> f64 {
        sinrs_unchecked(h, t, sigma).iter().map(|g| g.ln_1p()).sum::<f64>() / std::f64::consts::LN_2
    };
    let mut state = FPState::new(project_to_sphere(init, cfg.pt)?);
    let mut current = rate(&state.t);
    if !current.is_finite() {
        return Err(MilacError::NonFinite(0));
    }
    let mut history = vec![current];
    let mut converged = false;
    let mut iterations = 0;
    let mut t_update_time = Duration::ZERO;
    let mut t_updates = 0;

    for it in 1..=cfg.max_outer {
        iterations = it;
        state.update_alpha_beta(h, sigma);
        for _ in 0..cfg.inner_updates {
            let start = Instant::now();
            state.tbar = state.t.clone();
            let xi = compute_xi(h, &state.beta, cfg.xi_rule, cfg.xi_margin);
            state.update_t(h, xi, cfg.pt)?;
            t_update_time += start.elapsed();
            t_updates += 1;
        }
        let next = rate(&state.t);
        if !next.is_finite() {
            return Err(MilacError::NonFinite(it));
        }
        history.push(next);
        let change = (next - current).abs() / current.max(1.0);
        current = next;
        if change < cfg.eps {
            converged = true;
            break;
        }
    }

    let fixed_point_residual = (&state.t - &state.tbar).norm() / state.t.norm();
    Ok(FpRun {
        t: state.t,
        iterations,
        starts: 1,
        total_iterations: iterations,
        converged,
        history,
        fixed_point_residual,
        t_update_time,
        t_updates,
    })
}

/// Run the loop from every start and keep the run with the highest final
/// sum-rate. A later start replaces an earlier one only when it is better by
/// more than the stopping tolerance, so ties go to the earlier start.
pub(crate) fn run_fp_multistart(h: &CMat, sigma: &[f64], cfg: &SolverConfig, starts: Vec<CMat>) -> Result<FpRun> {
    let count = starts.len();
    let mut best: Option<FpRun> = None;
    let (mut total_iterations, mut t_update_time, mut t_updates) = (0, Duration::ZERO, 0);
    for init in starts {
        let run = run_fp(h, sigma, cfg, init)?;
        total_iterations += run.iterations;
        t_update_time += run.t_update_time;
        t_updates += run.t_updates;
        let value = *run.history.last().expect("history holds the start");
        let better = match &best {
            None => true,
            Some(b) => {
                let incumbent = *b.history.last().expect("history holds the start");
                value > incumbent + cfg.eps * incumbent.max(1.0)
            }
        };
        if better {
            best = Some(run);
        }
    }
    let mut run = best.ok_or_else(|| MilacError::InvalidConfig("no starting point".into()))?;
    run.starts = count;
    run.total_iterations = total_iterations;
    run.t_update_time = t_update_time;
    run.t_updates = t_updates;
    Ok(run)
}

/// Solve the reduced problem over `T` (`K x K`) and lift the result to
/// `Pd = Q T`.
///
/// `init`, when given, is rescaled onto the power sphere; otherwise the
/// start is chosen by `cfg.init`.
pub fn solve_psla(red: &ReducedChannel, cfg: &SolverConfig, init: Option<&CMat>) -> Result<SolveReport> {
    cfg.validate()?;
    let start = Instant::now();
    let k = red.users();
    let t0 = match init {
        Some(t) if t.shape() != (k, k) => {
            return Err(MilacError::DimensionMismatch(format!(
                "initial T is {}x{}, expected {k}x{k}",
                t.nrows(),
                t.ncols()
            )))
        }
        Some(t) => vec![t.clone()],
        None => initial_points(&red.hbar, &red.noise, cfg),
    };
    let run = run_fp_multistart(&red.hbar, &red.noise, cfg, t0)?;
    let pd = red.lift(&run.t);
    let rates = rates(&red.hbar, &run.t, &red.noise)?;
    Ok(SolveReport {
        sum_rate: rates.iter().sum(),
        rates,
        pd,
        t_final: run.t,
        iterations: run.iterations,
        starts: run.starts,
        total_iterations: run.total_iterations,
        converged: run.converged,
        objective_history: run.history,
        fixed_point_residual: run.fixed_point_residual,
        wall_time: start.elapsed(),
        t_update_time: run.t_update_time,
        t_updates: run.t_updates,
        config: *cfg,
    })
}

/// Optimise the digital precoder in the reduced domain, then synthesise the
/// two-layer analog transmitter that reproduces it.
pub fn solve_two_layer(ch: &ChannelSet, cfg: &SolverConfig) -> Result<(SolveReport, TwoLayerSolution)> {
    let red = reduce_channel(ch)?;
    let report = solve_psla(&red, cfg, None)?;
    let digital = DigitalBeamformer::new(report.pd.clone(), cfg.pt)?;
    let solution = map_digital_to_milac(&digital)?;
    let analog = sum_rate(ch.h(), &solution.g, ch.sigma())?;
    let digital_rate = sum_rate(ch.h(), &report.pd, ch.sigma())?;
    if (analog - digital_rate).abs() > EQUIVALENCE_TOL {
        return Err(MilacError::Inconsistent(format!(
            "two-layer sum-rate {analog} differs from digital {digital_rate}"
        )));
    }
    for (name, s) in [("theta", &solution.theta), ("phi", &solution.phi)] {
        let r = s.check(crate::network::CONSTRUCTED_TOL);
        if !r.passed {
            return Err(MilacError::Inconsistent(format!("{name} is not lossless/reciprocal: {r:?}")));
        }
    }
    Ok((report, solution))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_rayleigh;
    use crate::linalg::{c, identity};
    use rand::Rng;

    #[test]
    fn sinr_basic_cases() {
        assert_eq!(sinr(&identity(2), &identity(2), &[1.0, 1.0], 0).unwrap(), 1.0);
        let h = CMat::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]);
        let p = CMat::from_column_slice(2, 1, &[c(10f64.sqrt(), 0.0), c(0.0, 0.0)]);
        assert!((sinr(&h, &p, &[1.0], 0).unwrap() - 10.0).abs() < 1e-12);
        assert!(sinr(&h, &p, &[1.0], 1).is_err());
        assert!(sinr(&h, &identity(2), &[1.0], 0).is_err());
    }

    #[test]
    fn sinr_with_interference_matches_hand_value() {
        // h1 = (1, 1), h2 = (1, -1); p1 = (1, 0), p2 = h1.
        let h = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)]);
        let p = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        // user 1: |h1^H p1|^2 = 1, |h1^H p2|^2 = 4 -> 1 / (4 + 1)
        assert!((sinr(&h, &p, &[1.0, 1.0], 0).unwrap() - 0.2).abs() < 1e-15);
        // user 2: |h2^H p2|^2 = 0, |h2^H p1|^2 = 1 -> 0
        assert_eq!(sinr(&h, &p, &[1.0, 1.0], 1).unwrap(), 0.0);
    }

    #[test]
    fn sum_rate_cases() {
        assert!((sum_rate(&identity(2), &identity(2), &[1.0, 1.0]).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(sum_rate(&identity(2), &CMat::zeros(2, 2), &[1.0, 1.0]).unwrap(), 0.0);
        let ch = generate_rayleigh(6, 3, 1).unwrap();
        let p = random_init(6, 3, 5.0, 2);
        let per_user: f64 = (0..3)
            .map(|k| (1.0 + sinr(ch.h(), &p, ch.sigma(), k).unwrap()).log2())
            .sum();
        assert!((sum_rate(ch.h(), &p, ch.sigma()).unwrap() - per_user).abs() < 1e-12);
    }

    #[test]
    fn scalar_alpha_beta() {
        let mut s = FPState::new(identity(1));
        s.update_alpha_beta(&identity(1), &[1.0]);
        assert!((s.alpha[0] - 1.0).abs() < 1e-15);
        assert!((s.beta[0] - c(2f64.sqrt() / 2.0, 0.0)).norm() < 1e-15);
        assert!((s.surrogate_value(&identity(1), &[1.0]) - 2f64.ln()).abs() < 1e-15);

        let mut z = FPState::new(CMat::zeros(2, 2));
        z.update_alpha_beta(&identity(2), &[1.0, 1.0]);
        assert_eq!(z.alpha, vec![0.0, 0.0]);
        assert!(z.beta.iter().all(|b| b.norm() == 0.0));
        assert_eq!(z.surrogate_value(&identity(2), &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn surrogate_splits_into_quadratic_and_constant() {
        let ch = generate_rayleigh(3, 3, 4).unwrap();
        let mut s = FPState::new(random_init(3, 3, 2.0, 5));
        s.update_alpha_beta(ch.h(), ch.sigma());
        let whole = s.surrogate_value(ch.h(), ch.sigma());
        let parts = s.quadratic_objective(ch.h()) + s.constant_terms(ch.sigma());
        assert!((whole - parts).abs() < 1e-12);
        let tight = sum_rate(ch.h(), &s.t, ch.sigma()).unwrap() * std::f64::consts::LN_2;
        assert!((whole - tight).abs() < 1e-9);
    }

    #[test]
    fn xi_cases() {
        let hbar = identity(1);
        assert_eq!(compute_xi(&hbar, &[c(0.0, 0.0)], XiRule::Spectral, 1e-9), 1e-9);
        assert_eq!(compute_xi(&hbar, &[c(0.0, 0.0)], XiRule::Trace, 1e-9), 1e-9);
        assert!((compute_xi(&hbar, &[c(1.0, 0.0)], XiRule::Spectral, 1e-9) - (1.0 + 1e-9)).abs() < 1e-15);

        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for trial in 0..20 {
            let hbar = generate_rayleigh(4, 4, trial).unwrap().h().clone();
            let beta: Vec<_> = (0..4).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let mut a = hbar.clone();
            for (k, b) in beta.iter().enumerate() {
                a.column_mut(k).scale_mut(b.norm());
            }
            let a = &a * a.adjoint();
            for rule in [XiRule::Spectral, XiRule::Trace] {
                let xi = compute_xi(&hbar, &beta, rule, 1e-9);
                let shifted = identity(4).scale(xi) - &a;
                let min = linalg::hermitian_eigenvalues(&shifted).into_iter().fold(f64::INFINITY, f64::min);
                assert!(min >= 0.0, "{rule:?}: {min}");
            }
            let spectral = compute_xi(&hbar, &beta, XiRule::Spectral, 0.0);
            let trace = compute_xi(&hbar, &beta, XiRule::Trace, 0.0);
            assert!(spectral <= trace * (1.0 + 1e-12));
        }
    }

    #[test]
    fn projection_cases() {
        let x = random_init(3, 3, 4.0, 1);
        let same = project_to_sphere(x.clone(), 4.0).unwrap();
        assert!((&same - &x).norm() < 1e-14);
        let half = project_to_sphere(x.scale(2.0), 4.0).unwrap();
        assert!((&half - &x).norm() < 1e-14);
        assert!(matches!(
            project_to_sphere(CMat::zeros(2, 2), 1.0),
            Err(MilacError::DegenerateProjection)
        ));
    }

    #[test]
    fn degenerate_t_update_is_an_error() {
        let mut s = FPState::new(CMat::zeros(2, 2));
        s.update_alpha_beta(&identity(2), &[1.0, 1.0]);
        assert!(matches!(
            s.update_t(&identity(2), 0.0, 1.0),
            Err(MilacError::DegenerateProjection)
        ));
    }

    #[test]
    fn t_step_ascends_linearized_objective_and_stays_on_sphere() {
        for seed in 0..30 {
            let hbar = generate_rayleigh(3, 3, seed).unwrap().h().clone();
            let pt = 5.0;
            let mut s = FPState::new(random_init(3, 3, pt, seed + 100));
            s.update_alpha_beta(&hbar, &[1.0; 3]);
            s.tbar = s.t.clone();
            let xi = compute_xi(&hbar, &s.beta, XiRule::Spectral, 1e-9);
            let before = s.linearized_objective(&hbar, xi, &s.tbar);
            s.update_t(&hbar, xi, pt).unwrap();
            let after = s.linearized_objective(&hbar, xi, &s.t);
            assert!(after >= before - 1e-9, "{before} -> {after}");
            assert!((linalg::power(&s.t) - pt).abs() <= 1e-10 * pt);
        }
    }

    #[test]
    fn single_user_is_matched_filter() {
        let ch = generate_rayleigh(5, 1, 3).unwrap();
        let red = reduce_channel(&ch).unwrap();
        let cfg = SolverConfig::with_power(10.0);
        let rep = solve_psla(&red, &cfg, None).unwrap();
        let expected = (1.0 + 10.0 * ch.h().norm_squared()).log2();
        assert!((rep.sum_rate - expected).abs() < 1e-9);
        assert!((linalg::power(&rep.t_final) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn rzf_start_is_in_range_space_with_equal_powers() {
        let ch = generate_rayleigh(6, 3, 2).unwrap();
        let p = regularized_zf_init(ch.h(), ch.sigma(), 9.0);
        for j in 0..3 {
            assert!((p.column(j).norm_squared() - 3.0).abs() < 1e-12);
        }
        let red = reduce_channel(&ch).unwrap();
        let off_span = &p - &red.q * (red.q.adjoint() * &p);
        assert!(off_span.norm() < 1e-12);
        // Lifting the reduced start gives the full-dimension start.
        let t = regularized_zf_init(&red.hbar, &red.noise, 9.0);
        assert!((red.lift(&t) - &p).norm() < 1e-10);
        assert_eq!("mf".parse::<InitRule>().unwrap(), InitRule::MatchedFilter);
        assert!("bogus".parse::<InitRule>().is_err());
    }

    #[test]
    fn matched_filter_start_is_monotone_too() {
        let ch = generate_rayleigh(16, 4, 1).unwrap();
        let red = reduce_channel(&ch).unwrap();
        let cfg = SolverConfig { init: InitRule::MatchedFilter, ..SolverConfig::with_power(100.0) };
        let rep = solve_psla(&red, &cfg, None).unwrap();
        assert!(rep.objective_history.windows(2).all(|w| w[1] >= w[0] - 1e-8));
        assert!(rep.objective_history.last().unwrap() > &rep.objective_history[0]);
    }

    #[test]
    fn multi_start_keeps_the_better_basin() {
        // Nearly parallel users: switching one off beats serving both.
        let ch = generate_rayleigh(2, 2, 1011).unwrap();
        let red = reduce_channel(&ch).unwrap();
        let run = |init| solve_psla(&red, &SolverConfig { init, ..SolverConfig::with_power(10.0) }, None).unwrap();
        let (both, rzf, mf) = (run(InitRule::MultiStart), run(InitRule::RegularizedZf), run(InitRule::MatchedFilter));
        assert_eq!((both.starts, rzf.starts), (2, 1));
        assert_eq!(both.total_iterations, rzf.iterations + mf.iterations);
        assert!(mf.sum_rate > rzf.sum_rate + 0.1);
        assert_eq!(both.sum_rate, mf.sum_rate);
        assert_eq!(both.objective_history, mf.objective_history);
    }

    #[test]
    fn multi_start_ties_go_to_the_first_start() {
        let ch = generate_rayleigh(32, 4, 3).unwrap();
        let red = reduce_channel(&ch).unwrap();
        let cfg = SolverConfig::with_power(1000.0);
        let both = solve_psla(&red, &cfg, None).unwrap();
        let rzf = solve_psla(&red, &SolverConfig { init: InitRule::RegularizedZf, ..cfg }, None).unwrap();
        assert_eq!(both.objective_history, rzf.objective_history);
        assert!(both.total_iterations > both.iterations);
    }

    #[test]
    fn history_is_monotone() {
        for seed in 0..5 {
            let ch = generate_rayleigh(16, 4, seed).unwrap();
            let red = reduce_channel(&ch).unwrap();
            let rep = solve_psla(&red, &SolverConfig::with_power(100.0), None).unwrap();
            assert!(rep.objective_history.windows(2).all(|w| w[1] >= w[0] - 1e-8));
            assert!(rep.converged);
            assert_eq!(rep.objective_history.len(), rep.iterations + 1);
        }
    }

    #[test]
    fn init_shape_is_checked() {
        let red = reduce_channel(&generate_rayleigh(4, 2, 0).unwrap()).unwrap();
        assert!(solve_psla(&red, &SolverConfig::default(), Some(&CMat::zeros(3, 2))).is_err());
        let bad = SolverConfig { eps: 0.0, ..Default::default() };
        assert!(matches!(solve_psla(&red, &bad, None), Err(MilacError::InvalidConfig(_))));
    }

    #[test]
    fn two_layer_matches_digital() {
        let ch = generate_rayleigh(8, 3, 12).unwrap();
        let (rep, sol) = solve_two_layer(&ch, &SolverConfig::with_power(10.0)).unwrap();
        let analog = sum_rate(ch.h(), &sol.g, ch.sigma()).unwrap();
        assert!((analog - rep.sum_rate).abs() <= 1e-9);
    }

    #[test]
    fn single_user_two_layer_theta_structure() {
        let ch = generate_rayleigh(2, 1, 6).unwrap();
        let (_, sol) = solve_two_layer(&ch, &SolverConfig::with_power(1.0)).unwrap();
        let t = sol.theta.matrix();
        assert_eq!(t[(0, 0)], c(0.0, 0.0));
        assert_eq!(t[(1, 1)], c(0.0, 0.0));
        assert_eq!(t[(0, 1)], t[(1, 0)]);
        assert!((t[(0, 1)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn record_serializes() {
        let red = reduce_channel(&generate_rayleigh(4, 2, 0).unwrap()).unwrap();
        let rep = solve_psla(&red, &SolverConfig::default(), None).unwrap();
        let json = rep.to_json(Some(7)).unwrap();
        let back: SolveRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.seed, Some(7));
        assert_eq!(back.iterations, rep.iterations);
        assert_eq!(back.config.xi_rule, XiRule::Spectral);
    }
}
