//! Alternating maximization for the information bottleneck with side
//! information at the decoder.
//!
//! For `λ ∈ (0.5, 1]` the solver alternates between the auxiliary pair
//! `(Q(u|y,z), Q(x|z,u))` induced by the current encoder and the closed-form
//! exponential encoder update, tracking the lower statistic `F` and the upper
//! statistic `I`. It stops once `I - F ≤ ε`.
//!
//! The upper statistic driving the stopping rule is the pointwise form
//! `I = Σ_x P(x) max_u g(x,u)`, where `g(x,u)` is the per-pair score whose
//! x-average is the cluster score `α(λ,u)`. It dominates `max_u α(λ,u)`
//! ([`eval_i_upper`]), never falls below `F`, and meets `F` at every fixed
//! point, including those where some `P(u|x)` vanish. For `λ ≤ 0.5` the optimum is the
//! trivial point `(0, 0)` and no iteration is run.
//!
//! Internally every logarithm is natural; reported values are in bits.

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{self, AuxiliaryDecoders, Encoder, JointXYZ};

/// How restarts draw their initial encoder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Each row drawn from a flat Dirichlet.
    #[default]
    Dirichlet,
    /// A random hard assignment mixed with 10% of a flat Dirichlet row.
    PerturbedDeterministic,
    /// Restart 0 starts from `x ↦ x mod |U|` mixed with 10% of a flat
    /// Dirichlet row; later restarts are flat Dirichlet.
    WarmIdentity,
}

impl std::str::FromStr for InitScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet" => Ok(InitScheme::Dirichlet),
            "perturbed_deterministic" | "perturbed" => Ok(InitScheme::PerturbedDeterministic),
            "warm_identity" | "identity" => Ok(InitScheme::WarmIdentity),
            other => Err(Error::InvalidConfig(format!("unknown init scheme {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    /// `None` means `|X| + 1`.
    pub cardinality_u: Option<usize>,
    pub seed: u64,
    pub init_scheme: InitScheme,
    /// Keep the per-iteration trace of every restart.
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 0.9,
            epsilon: 1e-6,
            max_iterations: 5000,
            restarts: 10,
            cardinality_u: None,
            seed: 0,
            init_scheme: InitScheme::Dirichlet,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        SolverConfig {
            lambda,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidLambda(self.lambda));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 || self.restarts == 0 {
            return Err(Error::InvalidConfig("max_iterations and restarts must be positive".into()));
        }
        if self.cardinality_u == Some(0) {
            return Err(Error::InvalidConfig("cardinality_u must be at least 1".into()));
        }
        Ok(())
    }

    /// Codebook size used for an input alphabet of size `nx`.
    pub fn cardinality_for(&self, nx: usize) -> usize {
        self.cardinality_u.unwrap_or(nx + 1)
    }

    /// Seed of restart `index`, derived from the run seed.
    pub fn restart_seed(&self, index: usize) -> u64 {
        self.seed
            .wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

/// One iteration of a run: `F^(n)`, `I^(n)` and `f(λ, P^(n-1))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub f_lower: f64,
    pub f_upper: f64,
    /// `max_u α(λ,u)` against the same auxiliary pair.
    pub cluster_upper: f64,
    pub objective_prev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub restart_index: usize,
    pub initial: Encoder,
    pub records: Vec<IterationRecord>,
}

/// State of a single run after `iteration` steps.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub encoder: Encoder,
    pub f_lower: f64,
    pub f_upper: f64,
    pub iteration: usize,
}

impl SolverState {
    /// Algorithm start: `n = 0`, `I = +∞`, `F = 0`.
    pub fn start(initial: Encoder) -> Self {
        SolverState {
            encoder: initial,
            f_lower: 0.0,
            f_upper: f64::INFINITY,
            iteration: 0,
        }
    }

    pub fn gap(&self) -> f64 {
        self.f_upper - self.f_lower
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub lambda: f64,
    pub encoder: Encoder,
    /// `I(X;U|Z)` in bits.
    pub rate: f64,
    /// `I(Y;U|Z)` in bits.
    pub relevance: f64,
    /// `f(λ, P)` at the returned encoder.
    pub f_value: f64,
    pub final_gap: f64,
    pub iterations: usize,
    pub restart_index: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traces: Vec<SolverTrace>,
}

/// Joint-derived tables reused across iterations.
struct Prepared<'a> {
    joint: &'a JointXYZ,
    /// `P(y,z|x)`, laid out `(x, y, z)`.
    p_yz_given_x: Vec<f64>,
    /// `P(x|y,z)`, laid out `(y, z, x)`.
    p_x_given_yz: Vec<f64>,
    /// `P(x|z)`, laid out `(z, x)`.
    p_x_given_z: Vec<f64>,
    /// `ln P(x|z)`, laid out `(z, x)`.
    ln_p_x_given_z: Vec<f64>,
    /// `Σ_z P(z|x) ln P(x|z)` per x.
    cond_log_x: Vec<f64>,
}

impl<'a> Prepared<'a> {
    fn new(joint: &'a JointXYZ) -> Self {
        let (nx, ny, nz) = joint.dims();
        let mut p_yz_given_x = vec![0.0; nx * ny * nz];
        let mut p_x_given_yz = vec![0.0; ny * nz * nx];
        let mut p_x_given_z = vec![0.0; nz * nx];
        let mut cond_log_x = vec![0.0; nx];
        for x in 0..nx {
            let px = joint.p_x()[x];
            for y in 0..ny {
                for z in 0..nz {
                    let p = joint.p(x, y, z);
                    if px > 0.0 {
                        p_yz_given_x[(x * ny + y) * nz + z] = p / px;
                    }
                    p_x_given_yz[(y * nz + z) * nx + x] = joint.p_x_given_yz(x, y, z);
                }
            }
            for z in 0..nz {
                let pxz = joint.p_x_given_z(x, z);
                p_x_given_z[z * nx + x] = pxz;
                let pzx = joint.p_z_given_x(z, x);
                if pzx > 0.0 {
                    cond_log_x[x] += pzx * pxz.ln();
                }
            }
        }
        let ln_p_x_given_z = p_x_given_z.iter().map(|p| p.ln()).collect();
        Prepared {
            joint,
            p_yz_given_x,
            p_x_given_yz,
            p_x_given_z,
            ln_p_x_given_z,
            cond_log_x,
        }
    }

    fn aux(&self, enc: &Encoder) -> AuxiliaryDecoders {
        let (nx, ny, nz) = self.joint.dims();
        let nu = enc.nu();
        let mut q_u = vec![0.0; ny * nz * nu];
        let mut used_yz = vec![false; ny * nz];
        for yz in 0..ny * nz {
            let (y, z) = (yz / nz, yz % nz);
            let row = &mut q_u[yz * nu..(yz + 1) * nu];
            if self.joint.p_yz(y, z) > 0.0 {
                used_yz[yz] = true;
                let weights = &self.p_x_given_yz[yz * nx..(yz + 1) * nx];
                for (x, &w) in weights.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for (q, &e) in row.iter_mut().zip(enc.row(x)) {
                        *q += w * e;
                    }
                }
            } else {
                row.iter_mut().for_each(|q| *q = 1.0 / nu as f64);
            }
        }

        let mut q_x = vec![0.0; nz * nu * nx];
        let mut used_zu = vec![false; nz * nu];
        for z in 0..nz {
            let pxz = &self.p_x_given_z[z * nx..(z + 1) * nx];
            for u in 0..nu {
                let cell = &mut q_x[(z * nu + u) * nx..(z * nu + u + 1) * nx];
                let mut mass = 0.0;
                for (x, c) in cell.iter_mut().enumerate() {
                    *c = enc.get(x, u) * pxz[x];
                    mass += *c;
                }
                if mass > 0.0 {
                    cell.iter_mut().for_each(|c| *c /= mass);
                    used_zu[z * nu + u] = true;
                } else {
                    cell.iter_mut().for_each(|c| *c = 1.0 / nx as f64);
                }
            }
        }

        AuxiliaryDecoders {
            nx,
            ny,
            nz,
            nu,
            q_u_given_yz: q_u,
            q_x_given_zu: q_x,
            used_yz,
            used_zu,
        }
    }

    /// Per-(x,u) log-scores `A = Σ_z P(z|x) ln Q(x|z,u)` and
    /// `B = Σ_{y,z} P(y,z|x) ln Q(u|y,z)`.
    fn scores(&self, aux: &AuxiliaryDecoders) -> Scores {
        let (nx, ny, nz) = self.joint.dims();
        let nu = aux.nu;
        let ln_qx: Vec<f64> = aux.q_x_given_zu.iter().map(|q| q.ln()).collect();
        let ln_qu: Vec<f64> = aux.q_u_given_yz.iter().map(|q| q.ln()).collect();
        let mut a = vec![0.0; nx * nu];
        let mut b = vec![0.0; nx * nu];
        for x in 0..nx {
            let arow = &mut a[x * nu..(x + 1) * nu];
            for z in 0..nz {
                let w = self.joint.p_z_given_x(z, x);
                if w == 0.0 {
                    continue;
                }
                for (u, av) in arow.iter_mut().enumerate() {
                    *av += w * ln_qx[(z * nu + u) * nx + x];
                }
            }
            let brow = &mut b[x * nu..(x + 1) * nu];
            let weights = &self.p_yz_given_x[x * ny * nz..(x + 1) * ny * nz];
            for (yz, &w) in weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (bv, &l) in brow.iter_mut().zip(&ln_qu[yz * nu..(yz + 1) * nu]) {
                    *bv += w * l;
                }
            }
        }
        Scores { nu, a, b }
    }

    fn encoder_update(&self, scores: &Scores, lambda: f64) -> Result<Encoder> {
        check_active_lambda(lambda)?;
        let nx = self.joint.nx();
        let nu = scores.nu;
        let c = (2.0 * lambda - 1.0) / lambda;
        let mut rows = vec![0.0; nx * nu];
        for x in 0..nx {
            let row = &mut rows[x * nu..(x + 1) * nu];
            if self.joint.p_x()[x] <= 0.0 {
                row.iter_mut().for_each(|v| *v = 1.0 / nu as f64);
                continue;
            }
            for (u, v) in row.iter_mut().enumerate() {
                *v = c * scores.a[x * nu + u] + scores.b[x * nu + u];
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY || max.is_nan() {
                return Err(Error::AllRowsDegenerate(x));
            }
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        Ok(Encoder::from_rows_unchecked(nx, nu, rows))
    }

    /// `F(λ, P, Q)` in bits, given the scores of `Q`.
    fn lower(&self, enc: &Encoder, scores: &Scores, lambda: f64) -> f64 {
        let nx = self.joint.nx();
        let nu = scores.nu;
        let mut acc = 0.0;
        for x in 0..nx {
            let px = self.joint.p_x()[x];
            if px <= 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for u in 0..nu {
                let e = enc.get(x, u);
                if e <= 0.0 {
                    continue;
                }
                let i = x * nu + u;
                inner += e
                    * ((2.0 * lambda - 1.0) * (scores.a[i] - self.cond_log_x[x])
                        + lambda * (scores.b[i] - e.ln()));
            }
            acc += px * inner;
        }
        acc / LN_2
    }

    /// `Σ_x P(x) max_u g(x,u)` in bits, the max taken over clusters with
    /// `P(u|x) > 0`.
    fn pointwise_upper(&self, enc: &Encoder, scores: &Scores, lambda: f64) -> f64 {
        let nx = self.joint.nx();
        let nu = scores.nu;
        let mut acc = 0.0;
        for x in 0..nx {
            let px = self.joint.p_x()[x];
            if px <= 0.0 {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            for u in 0..nu {
                let e = enc.get(x, u);
                if e <= 0.0 {
                    continue;
                }
                let i = x * nu + u;
                let g = (2.0 * lambda - 1.0) * (scores.a[i] - self.cond_log_x[x])
                    + lambda * (scores.b[i] - e.ln());
                best = best.max(g);
            }
            acc += px * best;
        }
        acc / LN_2
    }

    /// Per-cluster scores `α(λ, u)` in bits for encoder `enc` against `Q`.
    fn alphas(&self, enc: &Encoder, scores: &Scores, lambda: f64) -> Vec<f64> {
        let nx = self.joint.nx();
        let nu = scores.nu;
        let mut alpha = vec![0.0; nu];
        for (u, al) in alpha.iter_mut().enumerate() {
            let mut acc = 0.0;
            for x in 0..nx {
                let px = self.joint.p_x()[x];
                if px <= 0.0 {
                    continue;
                }
                let i = x * nu + u;
                let mut term = (2.0 * lambda - 1.0) * (scores.a[i] - self.cond_log_x[x]);
                let e = enc.get(x, u);
                // log(Q/P) with P(u|x) = 0 contributes nothing.
                if e > 0.0 {
                    term += lambda * (scores.b[i] - e.ln());
                }
                acc += px * term;
            }
            *al = acc / LN_2;
        }
        alpha
    }
}

/// Probabilities at or above this are far from subnormal range.
const NORMAL_FLOOR: f64 = 1e-280;

/// Log-ratios below this contribute exactly zero to the auxiliary sums.
const LOG_FLUSH: f64 = -650.0;

/// Result of one iteration carried out in the log domain.
struct LogStep {
    logs: Vec<f64>,
    probs: Vec<f64>,
    f_lower: f64,
    f_upper: f64,
    alphas: Option<Vec<f64>>,
}

/// `c = a · b` for row-major `a` (m×k) and `b` (k×n).
fn matmul(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    assert!(a.len() == m * k && b.len() == k * n && c.len() == m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the lengths above cover every element addressed by the strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

impl Prepared<'_> {
    /// One full iteration from `ln P⁽ⁿ⁾(u|x)`: auxiliary pair, encoder update,
    /// `F⁽ⁿ⁺¹⁾` and the pointwise `I⁽ⁿ⁺¹⁾`.
    ///
    /// Working from logs keeps `ln Q(x|z,u) = ln P(u|x) + ln P(x|z) - ln Q(u|z)`
    /// exact when `P(u|x)` is far below the smallest normal double, where the
    /// linear-domain products lose all precision.
    fn log_step(
        &self,
        logs: &[f64],
        probs_in: &[f64],
        nu: usize,
        lambda: f64,
        want_alphas: bool,
    ) -> Result<LogStep> {
        check_active_lambda(lambda)?;
        let (nx, ny, nz) = self.joint.dims();
        let px = self.joint.p_x();
        let neg_inf = f64::NEG_INFINITY;

        // Per-cluster scaling so the linear sums below cannot underflow.
        let mut scale = vec![neg_inf; nu];
        for x in (0..nx).filter(|&x| px[x] > 0.0) {
            for (s, &l) in scale.iter_mut().zip(&logs[x * nu..(x + 1) * nu]) {
                *s = s.max(l);
            }
        }
        // P(u|x) / max_x P(u|x). A plain division is exact while both are
        // normal doubles; only entries near underflow go through exp, and
        // ratios below e^LOG_FLUSH are dropped to keep subnormals out of the
        // sums.
        let inv: Vec<f64> = scale.iter().map(|&s| (-s).exp()).collect();
        let mut tilde = vec![0.0; nx * nu];
        for x in (0..nx).filter(|&x| px[x] > 0.0) {
            for u in 0..nu {
                let i = x * nu + u;
                if scale[u] == neg_inf {
                    continue;
                }
                let rel = logs[i] - scale[u];
                tilde[i] = if rel < LOG_FLUSH {
                    0.0
                } else if probs_in[i] >= NORMAL_FLOOR && inv[u].is_finite() {
                    probs_in[i] * inv[u]
                } else {
                    rel.exp()
                };
            }
        }
        let to_logs = |acc: Vec<f64>| -> Vec<f64> {
            acc.iter()
                .enumerate()
                .map(|(i, &a)| if a > 0.0 { a.ln() + scale[i % nu] } else { neg_inf })
                .collect()
        };
        // ln Σ_x P(u|x) P(x|z); -inf marks an unused (z, u) cell.
        let mut acc = vec![0.0; nz * nu];
        matmul(&self.p_x_given_z, &tilde, &mut acc, nz, nx, nu);
        let ln_mass_zu = to_logs(acc);
        // ln Q(u|y,z)
        let mut acc = vec![0.0; ny * nz * nu];
        matmul(&self.p_x_given_yz, &tilde, &mut acc, ny * nz, nx, nu);
        let mut ln_qu = to_logs(acc);
        for yz in (0..ny * nz).filter(|&yz| self.joint.p_yz(yz / nz, yz % nz) <= 0.0) {
            ln_qu[yz * nu..(yz + 1) * nu].iter_mut().for_each(|v| *v = -(nu as f64).ln());
        }
        // Σ_{y,z} P(y,z|x) ln Q(u|y,z) for every x at once. A product would
        // turn 0·(-inf) into NaN, so dead cells fall back to the sparse loop.
        let b_all = ln_qu.iter().all(|v| v.is_finite()).then(|| {
            let mut b = vec![0.0; nx * nu];
            matmul(&self.p_yz_given_x, &ln_qu, &mut b, nx, ny * nz, nu);
            b
        });

        let c = (2.0 * lambda - 1.0) / lambda;
        let ln_nx = (nx as f64).ln();
        let mut next = vec![0.0; nx * nu];
        let mut probs = vec![0.0; nx * nu];
        let mut alphas = want_alphas.then(|| vec![0.0; nu]);
        let mut score = vec![0.0; nu];
        let mut a_row = vec![0.0; nu];
        let mut b_row = vec![0.0; nu];
        let (mut lower, mut upper) = (0.0, 0.0);
        for x in 0..nx {
            let row = x * nu..(x + 1) * nu;
            if px[x] <= 0.0 {
                next[row.clone()].iter_mut().for_each(|v| *v = -(nu as f64).ln());
                probs[row].iter_mut().for_each(|v| *v = 1.0 / nu as f64);
                continue;
            }
            let lrow = &logs[row.clone()];
            a_row.iter_mut().for_each(|v| *v = 0.0);
            for z in 0..nz {
                let w = self.joint.p_z_given_x(z, x);
                if w == 0.0 {
                    continue;
                }
                let lx = self.ln_p_x_given_z[z * nx + x];
                let lm_row = &ln_mass_zu[z * nu..(z + 1) * nu];
                for ((a, &lp), &lm) in a_row.iter_mut().zip(lrow).zip(lm_row) {
                    *a += w * if lm > neg_inf { lp + lx - lm } else { -ln_nx };
                }
            }
            if let Some(b) = &b_all {
                b_row.copy_from_slice(&b[row.clone()]);
            } else {
                b_row.iter_mut().for_each(|v| *v = 0.0);
                let weights = &self.p_yz_given_x[x * ny * nz..(x + 1) * ny * nz];
                for (yz, &w) in weights.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for (b, &l) in b_row.iter_mut().zip(&ln_qu[yz * nu..(yz + 1) * nu]) {
                        *b += w * l;
                    }
                }
            }
            for u in 0..nu {
                score[u] = c * a_row[u] + b_row[u];
            }
            if let Some(al) = alphas.as_mut() {
                for u in 0..nu {
                    let mut term = (2.0 * lambda - 1.0) * (a_row[u] - self.cond_log_x[x]);
                    if lrow[u] > neg_inf {
                        term += lambda * (b_row[u] - lrow[u]);
                    }
                    al[u] += px[x] * term;
                }
            }
            let max = score.iter().copied().fold(neg_inf, f64::max);
            if max == neg_inf || max.is_nan() {
                return Err(Error::AllRowsDegenerate(x));
            }
            let mut total = 0.0;
            for (p, &s) in probs[row.clone()].iter_mut().zip(&score) {
                *p = if s - max < LOG_FLUSH { 0.0 } else { (s - max).exp() };
                total += *p;
            }
            let ln_total = total.ln();
            probs[row.clone()].iter_mut().for_each(|p| *p /= total);
            for (l, &s) in next[row.clone()].iter_mut().zip(&score) {
                *l = s - max - ln_total;
            }
            let side = (2.0 * lambda - 1.0) * self.cond_log_x[x];
            lower += px[x] * (lambda * (max + ln_total) - side);
            let best = (0..nu)
                .filter(|&u| logs[x * nu + u] > neg_inf)
                .map(|u| lambda * (score[u] - logs[x * nu + u]))
                .fold(neg_inf, f64::max);
            upper += px[x] * (best - side);
        }
        Ok(LogStep {
            logs: next,
            probs,
            f_lower: lower / LN_2,
            f_upper: upper / LN_2,
            alphas: alphas.map(|a| a.into_iter().map(|v| v / LN_2).collect()),
        })
    }
}

struct Scores {
    nu: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

fn check_active_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.5 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLambda(lambda))
    }
}

fn check_dims(joint: &JointXYZ, enc: &Encoder) {
    assert_eq!(enc.nx(), joint.nx(), "encoder input alphabet must match |X|");
}

/// `f(λ, P) = λ I(Y;U|Z) - (1-λ) I(X;U|Z)` in bits.
pub fn objective_f(joint: &JointXYZ, enc: &Encoder, lambda: f64) -> f64 {
    check_dims(joint, enc);
    lambda * prob::relevance(joint, enc) - (1.0 - lambda) * prob::rate(joint, enc)
}

/// The auxiliary pair induced by `enc`: `Q(u|y,z) = Σ_x P(u|x) P(x|y,z)` and
/// `Q(x|z,u) ∝ P(u|x) P(x|z)`.
///
/// `(z, u)` cells with no mass are flagged in `used_zu` and hold a uniform
/// row.
pub fn update_aux(joint: &JointXYZ, enc: &Encoder) -> AuxiliaryDecoders {
    check_dims(joint, enc);
    Prepared::new(joint).aux(enc)
}

/// Exponential encoder update maximizing `F(λ, ·, Q)`, normalized per row in
/// the log domain.
pub fn update_encoder(joint: &JointXYZ, aux: &AuxiliaryDecoders, lambda: f64) -> Result<Encoder> {
    let prep = Prepared::new(joint);
    let scores = prep.scores(aux);
    prep.encoder_update(&scores, lambda)
}

/// Lower statistic `F(λ, P, Q)` in bits.
pub fn eval_f_lower(joint: &JointXYZ, enc: &Encoder, aux: &AuxiliaryDecoders, lambda: f64) -> f64 {
    check_dims(joint, enc);
    let prep = Prepared::new(joint);
    let scores = prep.scores(aux);
    prep.lower(enc, &scores, lambda)
}

/// Upper statistic `I = max_u α(λ, u)` in bits, with `prev_enc` the encoder
/// `aux` was computed from.
pub fn eval_i_upper(
    joint: &JointXYZ,
    prev_enc: &Encoder,
    aux: &AuxiliaryDecoders,
    lambda: f64,
) -> f64 {
    cluster_scores(joint, prev_enc, aux, lambda)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Pointwise upper statistic `Σ_x P(x) max_u g(x,u)` in bits, the one the
/// solver stops on. Never below [`eval_i_upper`].
pub fn eval_i_pointwise(
    joint: &JointXYZ,
    prev_enc: &Encoder,
    aux: &AuxiliaryDecoders,
    lambda: f64,
) -> f64 {
    check_dims(joint, prev_enc);
    let prep = Prepared::new(joint);
    let scores = prep.scores(aux);
    prep.pointwise_upper(prev_enc, &scores, lambda)
}

/// `α(λ, u)` for every cluster, in bits.
pub fn cluster_scores(
    joint: &JointXYZ,
    enc: &Encoder,
    aux: &AuxiliaryDecoders,
    lambda: f64,
) -> Vec<f64> {
    check_dims(joint, enc);
    let prep = Prepared::new(joint);
    let scores = prep.scores(aux);
    prep.alphas(enc, &scores, lambda)
}

/// Draws an initial encoder with full support.
pub fn initial_encoder(nx: usize, nu: usize, scheme: InitScheme, rng: &mut impl Rng) -> Encoder {
    let mut rows = vec![0.0; nx * nu];
    for x in 0..nx {
        let row = &mut rows[x * nu..(x + 1) * nu];
        loop {
            row.iter_mut().for_each(|v| *v = rng.sample::<f64, _>(Exp1));
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
                break;
            }
        }
        let hot = match scheme {
            InitScheme::Dirichlet => continue,
            InitScheme::PerturbedDeterministic => rng.gen_range(0..nu),
            InitScheme::WarmIdentity => x % nu,
        };
        for (u, v) in row.iter_mut().enumerate() {
            *v = 0.1 * *v + if u == hot { 0.9 } else { 0.0 };
        }
    }
    Encoder::from_rows_unchecked(nx, nu, rows)
}

/// Outcome of one run from a given initial encoder.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub state: SolverState,
    pub converged: bool,
    pub trace: Option<SolverTrace>,
}

/// Runs the alternating iteration from `initial` until `I - F ≤ ε` or the
/// iteration budget is spent. `λ` must lie in `(0.5, 1]`.
pub fn run_from(
    joint: &JointXYZ,
    initial: Encoder,
    lambda: f64,
    epsilon: f64,
    max_iterations: usize,
    record_trace: bool,
) -> Result<RunOutcome> {
    check_active_lambda(lambda)?;
    check_dims(joint, &initial);
    let prep = Prepared::new(joint);
    let mut trace = record_trace.then(|| SolverTrace {
        restart_index: 0,
        initial: initial.clone(),
        records: Vec::new(),
    });
    let (nx, nu) = (initial.nx(), initial.nu());
    let mut logs: Vec<f64> = initial.rows().iter().map(|p| p.ln()).collect();
    let mut state = SolverState::start(initial);
    while state.gap() > epsilon && state.iteration < max_iterations {
        let step = prep.log_step(&logs, state.encoder.rows(), nu, lambda, trace.is_some())?;
        if let Some(t) = trace.as_mut() {
            t.records.push(IterationRecord {
                iteration: state.iteration + 1,
                f_lower: step.f_lower,
                f_upper: step.f_upper,
                cluster_upper: step
                    .alphas
                    .unwrap_or_default()
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max),
                objective_prev: objective_f(joint, &state.encoder, lambda),
            });
        }
        logs = step.logs;
        state = SolverState {
            encoder: Encoder::from_rows_unchecked(nx, nu, step.probs),
            f_lower: step.f_lower,
            f_upper: step.f_upper,
            iteration: state.iteration + 1,
        };
    }
    let converged = state.gap() <= epsilon;
    Ok(RunOutcome {
        state,
        converged,
        trace,
    })
}

/// Solves for the encoder maximizing `f(λ, ·)` with multiple restarts and
/// returns the restart with the largest `f`.
pub fn solve(joint: &JointXYZ, config: &SolverConfig) -> Result<SolverResult> {
    config.validate()?;
    let nx = joint.nx();
    let nu = config.cardinality_for(nx);
    let lambda = config.lambda;

    if lambda <= 0.5 {
        let encoder = Encoder::trivial(nx, nu);
        return Ok(SolverResult {
            lambda,
            rate: prob::rate(joint, &encoder),
            relevance: prob::relevance(joint, &encoder),
            f_value: 0.0,
            encoder,
            final_gap: 0.0,
            iterations: 0,
            restart_index: 0,
            converged: true,
            kkt_residual: 0.0,
            traces: Vec::new(),
        });
    }

    let mut best: Option<SolverResult> = None;
    let mut traces = Vec::new();
    for r in 0..config.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.restart_seed(r));
        let scheme = match config.init_scheme {
            InitScheme::WarmIdentity if r > 0 => InitScheme::Dirichlet,
            s => s,
        };
        let init = initial_encoder(nx, nu, scheme, &mut rng);
        let run = run_from(
            joint,
            init,
            lambda,
            config.epsilon,
            config.max_iterations,
            config.record_trace,
        )?;
        if let Some(mut t) = run.trace {
            t.restart_index = r;
            traces.push(t);
        }
        let encoder = run.state.encoder;
        let rate = prob::rate(joint, &encoder);
        let relevance = prob::relevance(joint, &encoder);
        let f_value = lambda * relevance - (1.0 - lambda) * rate;
        let better = best.as_ref().is_none_or(|b| f_value > b.f_value);
        if better {
            best = Some(SolverResult {
                lambda,
                encoder,
                rate,
                relevance,
                f_value,
                final_gap: run.state.f_upper - run.state.f_lower,
                iterations: run.state.iteration,
                restart_index: r,
                converged: run.converged,
                kkt_residual: 0.0,
                traces: Vec::new(),
            });
        }
    }
    let mut result = best.expect("at least one restart");
    result.kkt_residual = kkt_residual(joint, &result, lambda).residual;
    result.traces = traces;
    Ok(result)
}

/// A cluster is active when its marginal mass and every `P(u|x)` with
/// `P(x) > 0` exceed this: only there must `α(λ,u)` meet the optimum.
pub const ACTIVITY_THRESHOLD: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `max |α(λ,u) - f|` over active clusters.
    pub residual: f64,
    /// `max (α(λ,u) - f)⁺` over inactive clusters.
    pub inactive_excess: f64,
    pub alphas: Vec<f64>,
    pub active: Vec<bool>,
}

/// Stationarity check: on active clusters `α(λ,u)` should equal the optimum
/// value, and elsewhere not exceed it.
pub fn kkt_residual(joint: &JointXYZ, result: &SolverResult, lambda: f64) -> KktReport {
    let nu = result.encoder.nu();
    if lambda <= 0.5 {
        return KktReport {
            residual: 0.0,
            inactive_excess: 0.0,
            alphas: vec![0.0; nu],
            active: vec![false; nu],
        };
    }
    let aux = update_aux(joint, &result.encoder);
    let alphas = cluster_scores(joint, &result.encoder, &aux, lambda);
    let mass = result.encoder.marginal(joint.p_x());
    let px = joint.p_x();
    let active: Vec<bool> = (0..nu)
        .map(|u| {
            mass[u] > ACTIVITY_THRESHOLD
                && (0..px.len())
                    .filter(|&x| px[x] > 0.0)
                    .all(|x| result.encoder.get(x, u) > ACTIVITY_THRESHOLD)
        })
        .collect();
    let mut residual: f64 = 0.0;
    let mut inactive_excess: f64 = 0.0;
    for u in 0..nu {
        let d = alphas[u] - result.f_value;
        if active[u] {
            residual = residual.max(d.abs());
        } else {
            inactive_excess = inactive_excess.max(d.max(0.0));
        }
    }
    KktReport {
        residual,
        inactive_excess,
        alphas,
        active,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `λ E_X[D(P*‖P⁽⁰⁾)]` in bits.
    pub constant: f64,
    /// `(N, V - F⁽ᴺ⁾, bound)` for every N where the bound fails.
    pub violations: Vec<(usize, f64, f64)>,
    /// Largest `V - F⁽ᴺ⁾ - bound` seen (negative when all hold).
    pub worst_margin: f64,
    pub checked: usize,
}

/// Checks `V - F⁽ᴺ⁾ ≤ (λ/N) E_X[D(P*‖P⁽⁰⁾)] + slack` along a trace of `F`
/// values indexed from `N = 1`.
pub fn convergence_bound_check(
    joint: &JointXYZ,
    f_trace: &[f64],
    optimum_value: f64,
    optimum: &Encoder,
    initial: &Encoder,
    lambda: f64,
    slack: f64,
) -> BoundReport {
    let divergence: f64 = (0..joint.nx())
        .map(|x| {
            let px = joint.p_x()[x];
            if px > 0.0 {
                px * prob::kl_divergence(optimum.row(x), initial.row(x))
            } else {
                0.0
            }
        })
        .sum();
    let constant = lambda * divergence;
    let mut violations = Vec::new();
    let mut worst_margin = f64::NEG_INFINITY;
    for (i, &f) in f_trace.iter().enumerate() {
        let n = i + 1;
        let lhs = optimum_value - f;
        let bound = constant / n as f64;
        let margin = lhs - bound;
        worst_margin = worst_margin.max(margin);
        if margin > slack {
            violations.push((n, lhs, bound));
        }
    }
    BoundReport {
        constant,
        violations,
        worst_margin,
        checked: f_trace.len(),
    }
}
