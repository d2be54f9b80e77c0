//! Reference solutions used to validate the reduced solver.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::channel::{ChannelSet, RANK_TOLERANCE};
use crate::error::{MilacError, Result};
use crate::linalg::CMat;
use crate::optimizer::{initial_points, rates, run_fp_multistart, SolveReport, SolverConfig};

/// The FP / PSLA loop run directly on the `L x K` precoder, without the
/// range-space reduction. `init` (`L x K`) is rescaled onto the power
/// sphere; otherwise the start is chosen by `cfg.init`.
pub fn solve_full_dim(ch: &ChannelSet, cfg: &SolverConfig, init: Option<&CMat>) -> Result<SolveReport> {
    cfg.validate()?;
    let start = Instant::now();
    let h = ch.h();
    let p0 = match init {
        Some(p) if p.shape() != h.shape() => {
            return Err(MilacError::DimensionMismatch(format!(
                "initial precoder is {}x{}, expected {}x{}",
                p.nrows(),
                p.ncols(),
                h.nrows(),
                h.ncols()
            )))
        }
        Some(p) => vec![p.clone()],
        None => initial_points(h, ch.sigma(), cfg),
    };
    let run = run_fp_multistart(h, ch.sigma(), cfg, p0)?;
    let rates = rates(h, &run.t, ch.sigma())?;
    Ok(SolveReport {
        sum_rate: rates.iter().sum(),
        rates,
        pd: run.t.clone(),
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

/// Zero-forcing precoder: columns of `H (H^H H)^-1`, normalised, each with
/// power `pt / K`.
pub fn zero_forcing(ch: &ChannelSet, pt: f64) -> Result<CMat> {
    let h = ch.h();
    let sv = h.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= RANK_TOLERANCE * max {
        return Err(MilacError::RankDeficient {
            ratio: if max > 0.0 { min / max } else { 0.0 },
        });
    }
    let gram = h.adjoint() * h;
    let inv = gram
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(MilacError::RankDeficient { ratio: min / max })?;
    let mut p = h * inv;
    let k = h.ncols();
    for j in 0..k {
        let n = p.column(j).norm();
        p.column_mut(j).scale_mut((pt / k as f64).sqrt() / n);
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Random starting points on the power sphere.
    pub samples: usize,
    /// Hill-climbing steps applied to every start.
    pub polish_steps: usize,
    /// Initial perturbation size relative to `sqrt(pt)`.
    pub step_size: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            samples: 100_000,
            polish_steps: 40,
            step_size: 0.1,
            seed: 0,
        }
    }
}

/// Real-coordinate sum-rate evaluator for tiny problems; deliberately shares
/// nothing with the matrix code paths.
struct TinyProblem {
    l: usize,
    k: usize,
    h: Vec<Complex64>,
    noise: Vec<f64>,
    pt: f64,
}

impl TinyProblem {
    fn dim(&self) -> usize {
        2 * self.l * self.k
    }

    /// `x` holds `p_i` column by column as interleaved (re, im).
    fn sum_rate(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for user in 0..self.k {
            let mut desired = 0.0;
            let mut interference = self.noise[user];
            for stream in 0..self.k {
                let mut acc = Complex64::new(0.0, 0.0);
                for ant in 0..self.l {
                    let hv = self.h[user * self.l + ant];
                    let base = 2 * (stream * self.l + ant);
                    acc += hv.conj() * Complex64::new(x[base], x[base + 1]);
                }
                if stream == user {
                    desired = acc.norm_sqr();
                } else {
                    interference += acc.norm_sqr();
                }
            }
            total += (1.0 + desired / interference).log2();
        }
        total
    }

    fn normalize(&self, x: &mut [f64]) {
        let n: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let s = self.pt.sqrt() / n;
        x.iter_mut().for_each(|v| *v *= s);
    }

    fn run_sample(&self, cfg: &OracleConfig, index: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index);
        let d = self.dim();
        let mut gauss = |buf: &mut Vec<f64>| {
            buf.clear();
            buf.extend((0..d).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
        };
        let mut x = Vec::with_capacity(d);
        gauss(&mut x);
        self.normalize(&mut x);
        let mut best = self.sum_rate(&x);

        let mut step = cfg.step_size * self.pt.sqrt();
        let mut dir = Vec::with_capacity(d);
        let mut trial = vec![0.0; d];
        for _ in 0..cfg.polish_steps {
            gauss(&mut dir);
            for i in 0..d {
                trial[i] = x[i] + step * dir[i];
            }
            self.normalize(&mut trial);
            let v = self.sum_rate(&trial);
            if v > best {
                best = v;
                x.copy_from_slice(&trial);
                step *= 1.5;
            } else {
                step *= 0.75;
            }
        }
        best
    }
}

/// Best sum-rate found by multi-start random search on the power sphere,
/// each start refined by adaptive hill climbing. Every start draws from its
/// own ChaCha stream, so the result does not depend on scheduling and never
/// decreases as `samples` grows.
pub fn brute_force_oracle(ch: &ChannelSet, pt: f64, cfg: &OracleConfig) -> Result<f64> {
    let (l, k) = (ch.antennas(), ch.users());
    if 2 * l * k > 8 {
        return Err(MilacError::DimensionTooLarge(format!(
            "{} real parameters for L={l}, K={k}; at most 8 supported",
            2 * l * k
        )));
    }
    if cfg.samples < 1 {
        return Err(MilacError::InvalidConfig("oracle needs at least one sample".into()));
    }
    if !(pt > 0.0) {
        return Err(MilacError::InvalidConfig(format!("pt must be positive, got {pt}")));
    }
    let h = ch.h();
    let problem = TinyProblem {
        l,
        k,
        h: (0..k).flat_map(|u| (0..l).map(move |a| (u, a))).map(|(u, a)| h[(a, u)]).collect(),
        noise: ch.sigma().iter().map(|s| s * s).collect(),
        pt,
    };
    Ok((0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| problem.run_sample(cfg, i))
        .reduce(|| f64::NEG_INFINITY, f64::max))
}
