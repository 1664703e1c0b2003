//! Compression as regularization: excess risk versus rate when the encoder
//! is trained on an empirical distribution.
//!
//! Sources are per-task restricted Boltzmann machines over `(X, Y)` with a
//! Bernoulli task prior. A learner sees `n` samples, trains an encoder and
//! its induced decoder on the empirical joint, and is scored by log-loss
//! under the true joint, relative to the Bayes floor `H(Y|X,Z)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{self, Decoder, Encoder, JointXYZ};
use crate::solver::{self, SolverConfig};

/// Alphabet sizes `(|X|, |Y|, |Z|)` of the benchmark sources.
pub const RBM_DIMS: (usize, usize, usize) = (64, 4, 2);

/// Decoder entries are clamped to this before the log.
pub const DECODER_FLOOR: f64 = 1e-12;

/// Per-task RBM over `(X, Y)`: `P(x,y|z) ∝ exp(a_z[x] + b_z[y] + W_z[x,y])`,
/// with `P(Z = 1) = p_z` (only the first two tasks are weighted when
/// `|Z| = 2`; larger `|Z|` spreads the remaining mass uniformly).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbmTaskSource {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// `a_z`, one vector of length `|X|` per task.
    pub visible_bias: Vec<Vec<f64>>,
    /// `b_z`, one vector of length `|Y|` per task.
    pub label_bias: Vec<Vec<f64>>,
    /// `W_z`, row-major `|X| × |Y|` per task.
    pub coupling: Vec<Vec<f64>>,
    pub p_z: f64,
}

impl RbmTaskSource {
    /// All parameters zero and a fair task prior.
    pub fn zeroed(dims: (usize, usize, usize)) -> Self {
        let (nx, ny, nz) = dims;
        RbmTaskSource {
            nx,
            ny,
            nz,
            visible_bias: vec![vec![0.0; nx]; nz],
            label_bias: vec![vec![0.0; ny]; nz],
            coupling: vec![vec![0.0; nx * ny]; nz],
            p_z: 0.5,
        }
    }

    fn task_prior(&self) -> Vec<f64> {
        match self.nz {
            1 => vec![1.0],
            2 => vec![1.0 - self.p_z, self.p_z],
            nz => {
                let mut w = vec![(1.0 - self.p_z) / (nz - 1) as f64; nz];
                w[1] = self.p_z;
                w
            }
        }
    }

    /// The exact joint `P(z) P(x,y|z)`.
    pub fn joint(&self) -> Result<JointXYZ> {
        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        let prior = self.task_prior();
        let mut raw = vec![0.0; nx * ny * nz];
        for z in 0..nz {
            let energy = |x: usize, y: usize| {
                self.visible_bias[z][x] + self.label_bias[z][y] + self.coupling[z][x * ny + y]
            };
            let max = (0..nx)
                .flat_map(|x| (0..ny).map(move |y| (x, y)))
                .map(|(x, y)| energy(x, y))
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in 0..nx {
                for y in 0..ny {
                    let w = (energy(x, y) - max).exp();
                    raw[(x * ny + y) * nz + z] = w;
                    total += w;
                }
            }
            for x in 0..nx {
                for y in 0..ny {
                    raw[(x * ny + y) * nz + z] *= prior[z] / total;
                }
            }
        }
        JointXYZ::new((nx, ny, nz), raw)
    }
}

/// Benchmark source with `|X| = 64`, `|Y| = 4`, `|Z| = 2`.
pub fn generate_source(seed: u64) -> RbmTaskSource {
    generate_source_with_dims(RBM_DIMS, seed)
}

/// Standard-normal biases and couplings per task, `p_z ~ U[0, 1]`.
pub fn generate_source_with_dims(dims: (usize, usize, usize), seed: u64) -> RbmTaskSource {
    let (nx, ny, nz) = dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normals = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
    let mut visible_bias = Vec::with_capacity(nz);
    let mut label_bias = Vec::with_capacity(nz);
    let mut coupling = Vec::with_capacity(nz);
    for _ in 0..nz {
        visible_bias.push(normals(nx));
        label_bias.push(normals(ny));
        coupling.push(normals(nx * ny));
    }
    let p_z = rng.gen::<f64>();
    RbmTaskSource {
        nx,
        ny,
        nz,
        visible_bias,
        label_bias,
        coupling,
        p_z,
    }
}

/// Counts of `n` i.i.d. draws and the empirical joint they define.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalJoint {
    /// Row-major `(x, y, z)` like [`JointXYZ`].
    pub counts: Vec<u64>,
    pub n: u64,
    pub joint: JointXYZ,
}

/// `n` draws from the source's exact joint.
pub fn sample(source: &RbmTaskSource, n: u64, seed: u64) -> Result<EmpiricalJoint> {
    sample_joint(&source.joint()?, n, seed)
}

/// `n` draws from `joint` by inverse CDF on the flattened tensor.
pub fn sample_joint(joint: &JointXYZ, n: u64, seed: u64) -> Result<EmpiricalJoint> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample size must be at least 1".into()));
    }
    let probs = joint.probs();
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p;
        cdf.push(acc);
    }
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; probs.len()];
    for _ in 0..n {
        let u = rng.gen::<f64>() * acc;
        let i = cdf.partition_point(|&c| c <= u).min(last);
        counts[i] += 1;
    }
    let joint = JointXYZ::new(joint.dims(), counts.iter().map(|&c| c as f64).collect())?;
    Ok(EmpiricalJoint { counts, n, joint })
}

/// Log-loss `E[-log2 dec(Y|U,Z)]` under `true_joint` and `enc`, with decoder
/// entries clamped to [`DECODER_FLOOR`].
pub fn risk(true_joint: &JointXYZ, enc: &Encoder, dec: &Decoder) -> f64 {
    let (nx, ny, nz) = true_joint.dims();
    let nu = enc.nu();
    let mut total = 0.0;
    for x in 0..nx {
        for u in 0..nu {
            let w = enc.get(x, u);
            if w == 0.0 {
                continue;
            }
            for y in 0..ny {
                for z in 0..nz {
                    let p = true_joint.p(x, y, z);
                    if p > 0.0 {
                        total -= p * w * dec.get(y, u, z).max(DECODER_FLOOR).log2();
                    }
                }
            }
        }
    }
    total
}

/// Probability that the MAP decision `argmax_y dec(y|u,z)` is wrong.
pub fn map_error_rate(true_joint: &JointXYZ, enc: &Encoder, dec: &Decoder) -> f64 {
    let (nx, _, nz) = true_joint.dims();
    let mut correct = 0.0;
    for u in 0..enc.nu() {
        for z in 0..nz {
            let yhat = prob::argmax(dec.row(u, z));
            for x in 0..nx {
                correct += true_joint.p(x, yhat, z) * enc.get(x, u);
            }
        }
    }
    (1.0 - correct).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessPoint {
    /// `Î(X;U|Z)` under the empirical joint.
    pub rate: f64,
    pub excess: f64,
    pub converged: bool,
}

/// Trains on `emp`, decodes with the decoder induced by `emp`, and scores
/// the log-loss under `true_joint` minus `H(Y|X,Z)`.
pub fn excess_risk(
    true_joint: &JointXYZ,
    emp: &EmpiricalJoint,
    lambda: f64,
    config: &SolverConfig,
) -> Result<ExcessPoint> {
    let cfg = SolverConfig {
        lambda,
        ..config.clone()
    };
    let res = solver::solve(&emp.joint, &cfg)?;
    let dec = prob::induced_decoder(&emp.joint, &res.encoder);
    let excess = risk(true_joint, &res.encoder, &dec) - true_joint.h_y_given_xz();
    Ok(ExcessPoint {
        rate: res.rate,
        excess,
        converged: res.converged,
    })
}

/// One `(n, λ, trial)` measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessRow {
    pub n: u64,
    pub lambda: f64,
    pub trial: usize,
    pub rate: f64,
    pub excess: f64,
}

/// Per-`n` summary of the trial-averaged curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: u64,
    /// Mean rate at the λ minimizing mean excess.
    #[serde(rename = "R_opt")]
    pub r_opt: f64,
    /// Mean rate where the curve reaches its plateau.
    #[serde(rename = "R_lim")]
    pub r_lim: f64,
    pub min_excess: f64,
}

/// Trial-averaged point of one curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanPoint {
    pub lambda: f64,
    pub rate: f64,
    pub excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub n_list: Vec<u64>,
    pub lambdas: Vec<f64>,
    pub trials: usize,
    /// Trial `t` samples with seed `seed + t`.
    pub seed: u64,
    /// Excess within this many bits of the final value counts as plateau.
    pub plateau_tol: f64,
    pub solver: SolverConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessCurve {
    pub rows: Vec<ExcessRow>,
    pub means: Vec<(u64, Vec<MeanPoint>)>,
    pub summary: Vec<SummaryRow>,
    /// Trial-averaged `Ĥ(X|Z)` per `n`.
    pub h_x_given_z: Vec<(u64, f64)>,
}

/// Averages over trials of excess risk versus rate for every sample size.
///
/// `R_opt` is the mean rate at the minimizing λ; `R_lim` the mean rate of
/// the first λ (in grid order) from which the mean excess stays within
/// `plateau_tol` of its value at the last λ.
pub fn excess_risk_curve(source: &RbmTaskSource, config: &CurveConfig) -> Result<ExcessCurve> {
    if config.trials == 0 || config.lambdas.is_empty() || config.n_list.is_empty() {
        return Err(Error::InvalidConfig("trials, lambdas and n_list must be nonempty".into()));
    }
    config.solver.validate()?;
    let truth = source.joint()?;
    let samples: Vec<(u64, usize, EmpiricalJoint)> = config
        .n_list
        .iter()
        .flat_map(|&n| (0..config.trials).map(move |t| (n, t)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(n, t)| Ok((n, t, sample_joint(&truth, n, config.seed.wrapping_add(t as u64))?)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, f64)> = (0..samples.len())
        .flat_map(|s| config.lambdas.iter().map(move |&l| (s, l)))
        .collect();
    let rows: Vec<ExcessRow> = jobs
        .into_par_iter()
        .map(|(s, lambda)| {
            let (n, trial, emp) = &samples[s];
            let pt = excess_risk(&truth, emp, lambda, &config.solver)?;
            Ok(ExcessRow {
                n: *n,
                lambda,
                trial: *trial,
                rate: pt.rate,
                excess: pt.excess,
            })
        })
        .collect::<Result<_>>()?;

    let k = config.lambdas.len();
    let t = config.trials as f64;
    let mut means = Vec::new();
    let mut summary = Vec::new();
    let mut h_x_given_z = Vec::new();
    for (ni, &n) in config.n_list.iter().enumerate() {
        let mut pts: Vec<MeanPoint> = config
            .lambdas
            .iter()
            .map(|&lambda| MeanPoint {
                lambda,
                rate: 0.0,
                excess: 0.0,
            })
            .collect();
        let mut h = 0.0;
        for trial in 0..config.trials {
            let s = ni * config.trials + trial;
            h += samples[s].2.joint.h_x_given_z() / t;
            for (j, p) in pts.iter_mut().enumerate() {
                let row = &rows[s * k + j];
                p.rate += row.rate / t;
                p.excess += row.excess / t;
            }
        }
        summary.push(summarize(n, &pts, config.plateau_tol));
        means.push((n, pts));
        h_x_given_z.push((n, h));
    }
    Ok(ExcessCurve {
        rows,
        means,
        summary,
        h_x_given_z,
    })
}

fn summarize(n: u64, pts: &[MeanPoint], tol: f64) -> SummaryRow {
    let best = pts
        .iter()
        .enumerate()
        .fold(0, |b, (i, p)| if p.excess < pts[b].excess { i } else { b });
    let plateau = pts.last().map_or(0.0, |p| p.excess);
    let mut onset = pts.len().saturating_sub(1);
    while onset > 0 && (pts[onset - 1].excess - plateau).abs() <= tol {
        onset -= 1;
    }
    SummaryRow {
        n,
        r_opt: pts[best].rate,
        r_lim: pts.get(onset).map_or(0.0, |p| p.rate),
        min_excess: pts[best].excess,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_parameters_give_uniform_conditionals() {
        let j = RbmTaskSource::zeroed(RBM_DIMS).joint().unwrap();
        for x in 0..64 {
            for y in 0..4 {
                for z in 0..2 {
                    assert_abs_diff_eq!(j.p(x, y, z) / j.p_z()[z], 1.0 / 256.0, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic_in_seed() {
        assert_eq!(generate_source(7), generate_source(7));
        let a = generate_source(7).joint().unwrap();
        let b = generate_source(8).joint().unwrap();
        let tv: f64 = a.probs().iter().zip(b.probs()).map(|(p, q)| (p - q).abs()).sum::<f64>() / 2.0;
        assert!(tv > 0.0);
    }

    #[test]
    fn source_joint_matches_energy_form() {
        let s = generate_source(3);
        let j = s.joint().unwrap();
        assert_abs_diff_eq!(j.p_z()[1], s.p_z, epsilon = 1e-12);
        let e = |x: usize, y: usize, z: usize| {
            s.visible_bias[z][x] + s.label_bias[z][y] + s.coupling[z][x * 4 + y]
        };
        // ratios within a task follow the energy difference
        for z in 0..2 {
            let r = j.p(5, 2, z) / j.p(17, 0, z);
            assert_abs_diff_eq!(r.ln(), e(5, 2, z) - e(17, 0, z), epsilon = 1e-10);
        }
    }

    #[test]
    fn single_sample_hits_one_cell() {
        let emp = sample(&generate_source(1), 1, 4).unwrap();
        assert_eq!(emp.counts.iter().sum::<u64>(), 1);
        assert_eq!(emp.counts.iter().filter(|&&c| c == 1).count(), 1);
    }

    #[test]
    fn sampling_is_reproducible_and_exact_in_count() {
        let s = generate_source(2);
        let a = sample(&s, 1000, 9).unwrap();
        let b = sample(&s, 1000, 9).unwrap();
        assert_eq!(a.counts, b.counts);
        assert_eq!(a.counts.iter().sum::<u64>(), 1000);
        for (c, p) in a.counts.iter().zip(a.joint.probs()) {
            assert_eq!(*p, *c as f64 / 1000.0);
        }
    }

    #[test]
    fn large_sample_matches_toy_source() {
        let j = JointXYZ::new((2, 2, 1), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let n = 1_000_000u64;
        let emp = sample_joint(&j, n, 11).unwrap();
        for (c, &p) in emp.counts.iter().zip(j.probs()) {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() <= 3.0 * se);
        }
    }

    #[test]
    fn zero_cells_are_never_drawn() {
        let j = JointXYZ::new((2, 2, 1), vec![0.0, 0.5, 0.0, 0.5]).unwrap();
        let emp = sample_joint(&j, 10_000, 1).unwrap();
        assert_eq!(emp.counts[0], 0);
        assert_eq!(emp.counts[2], 0);
    }

    #[test]
    fn risk_examples() {
        // Y = U deterministic, perfect decoder
        let j = JointXYZ::new((2, 2, 1), vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let enc = Encoder::identity(2);
        let dec = prob::induced_decoder(&j, &enc);
        assert_abs_diff_eq!(risk(&j, &enc, &dec), 0.0, epsilon = 1e-15);

        // constant encoder gives H(Y|Z)
        let j = generate_source(5).joint().unwrap();
        let enc = Encoder::trivial(64, 3);
        let dec = prob::induced_decoder(&j, &enc);
        assert_abs_diff_eq!(risk(&j, &enc, &dec), j.h_y_given_z(), epsilon = 1e-10);
    }

    #[test]
    fn constant_encoder_excess_is_conditional_mutual_information() {
        let j = generate_source(6).joint().unwrap();
        let emp = EmpiricalJoint {
            counts: vec![],
            n: 0,
            joint: j.clone(),
        };
        let cfg = SolverConfig::default();
        let pt = excess_risk(&j, &emp, 0.4, &cfg).unwrap();
        assert_abs_diff_eq!(pt.excess, j.i_xy_given_z(), epsilon = 1e-10);
        assert_abs_diff_eq!(pt.rate, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn full_rate_on_true_joint_reaches_bayes_risk() {
        let j = generate_source(4).joint().unwrap();
        let emp = EmpiricalJoint {
            counts: vec![],
            n: 0,
            joint: j.clone(),
        };
        let cfg = SolverConfig {
            restarts: 2,
            max_iterations: 3000,
            seed: 1,
            ..Default::default()
        };
        let pt = excess_risk(&j, &emp, 1.0, &cfg).unwrap();
        assert!(pt.excess.abs() <= 5e-3, "excess {}", pt.excess);
    }

    #[test]
    fn summary_picks_argmin_and_plateau_onset() {
        let pts: Vec<MeanPoint> = [(0.6, 0.0, 0.5), (0.7, 1.0, 0.2), (0.8, 2.0, 0.4), (0.9, 3.0, 0.5), (1.0, 3.1, 0.5)]
            .iter()
            .map(|&(lambda, rate, excess)| MeanPoint { lambda, rate, excess })
            .collect();
        let s = summarize(10, &pts, 1e-3);
        assert_eq!(s.r_opt, 1.0);
        assert_eq!(s.min_excess, 0.2);
        assert_eq!(s.r_lim, 3.0);
    }
}
