//! Dense finite distributions and the information measures built on them.
//!
//! Everything here is in bits. The conventions `0 log 0 = 0` and
//! `0 log (0/0) = 0` hold throughout, and conditioning cells with zero mass
//! are skipped.

use std::ops::BitOr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mass below which a conditioning cell counts as empty.
const MASS_EPS: f64 = 0.0;

const ROW_TOL: f64 = 1e-9;

const NORMALIZED_TOL: f64 = 1e-12;

/// `p log2 p` with `0 log 0 = 0`.
#[inline]
pub fn plog2(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Binary entropy in bits.
pub fn h2(p: f64) -> f64 {
    -plog2(p) - plog2(1.0 - p)
}

/// Shannon entropy `-Σ p log2 p` of a probability vector.
pub fn entropy(dist: &[f64]) -> f64 {
    let h = -dist.iter().map(|&p| plog2(p)).sum::<f64>();
    h.max(0.0)
}

/// Relative entropy `D(p‖q)` in bits.
///
/// Returns `f64::INFINITY` when `p` is not absolutely continuous with
/// respect to `q`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "kl_divergence: length mismatch");
    let mut d = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return f64::INFINITY;
        }
        d += pi * (pi / qi).log2();
    }
    d.max(0.0)
}

/// Joint pmf of `(X, Y, Z)` on finite alphabets, with cached marginals and
/// conditionals.
///
/// Entries are stored row-major in `(x, y, z)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct JointXYZ {
    nx: usize,
    ny: usize,
    nz: usize,
    p: Vec<f64>,
    px: Vec<f64>,
    py: Vec<f64>,
    pz: Vec<f64>,
    pxz: Vec<f64>,
    pyz: Vec<f64>,
}

impl JointXYZ {
    /// Validates a nonnegative tensor and normalizes it by its total mass.
    pub fn new(dims: (usize, usize, usize), raw: Vec<f64>) -> Result<Self> {
        Self::with_mass(dims, raw).map(|(j, _)| j)
    }

    /// Like [`JointXYZ::new`] but also returns the pre-normalization mass.
    pub fn with_mass(dims: (usize, usize, usize), mut raw: Vec<f64>) -> Result<(Self, f64)> {
        let (nx, ny, nz) = dims;
        if nx == 0 || ny == 0 || nz == 0 || raw.len() != nx * ny * nz {
            return Err(Error::DimensionMismatch(format!(
                "dims {nx}x{ny}x{nz} with {} entries",
                raw.len()
            )));
        }
        let mut total = 0.0;
        for (i, &v) in raw.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(i));
            }
            if v < 0.0 {
                return Err(Error::NegativeMass { index: i, value: v });
            }
            total += v;
        }
        if total <= 0.0 {
            return Err(Error::ZeroTotalMass);
        }
        // Already normalized up to rounding: rescaling would only shift
        // values by an ulp and break exact round trips.
        if (total - 1.0).abs() > NORMALIZED_TOL {
            raw.iter_mut().for_each(|v| *v /= total);
        }
        Ok((Self::from_normalized(nx, ny, nz, raw), total))
    }

    fn from_normalized(nx: usize, ny: usize, nz: usize, p: Vec<f64>) -> Self {
        let mut px = vec![0.0; nx];
        let mut py = vec![0.0; ny];
        let mut pz = vec![0.0; nz];
        let mut pxz = vec![0.0; nx * nz];
        let mut pyz = vec![0.0; ny * nz];
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    let v = p[(x * ny + y) * nz + z];
                    px[x] += v;
                    py[y] += v;
                    pz[z] += v;
                    pxz[x * nz + z] += v;
                    pyz[y * nz + z] += v;
                }
            }
        }
        JointXYZ {
            nx,
            ny,
            nz,
            p,
            px,
            py,
            pz,
            pxz,
            pyz,
        }
    }

    /// Builds the joint from a closure evaluated on every cell.
    pub fn from_fn(
        dims: (usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let (nx, ny, nz) = dims;
        let mut raw = Vec::with_capacity(nx * ny * nz);
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    raw.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, raw)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn nz(&self) -> usize {
        self.nz
    }

    #[inline]
    pub fn p(&self, x: usize, y: usize, z: usize) -> f64 {
        self.p[(x * self.ny + y) * self.nz + z]
    }
    pub fn probs(&self) -> &[f64] {
        &self.p
    }
    pub fn p_x(&self) -> &[f64] {
        &self.px
    }
    pub fn p_y(&self) -> &[f64] {
        &self.py
    }
    pub fn p_z(&self) -> &[f64] {
        &self.pz
    }
    #[inline]
    pub fn p_xz(&self, x: usize, z: usize) -> f64 {
        self.pxz[x * self.nz + z]
    }
    #[inline]
    pub fn p_yz(&self, y: usize, z: usize) -> f64 {
        self.pyz[y * self.nz + z]
    }

    /// `P(x|z)`, zero on empty cells.
    #[inline]
    pub fn p_x_given_z(&self, x: usize, z: usize) -> f64 {
        ratio(self.p_xz(x, z), self.pz[z])
    }
    /// `P(z|x)`, zero on empty cells.
    #[inline]
    pub fn p_z_given_x(&self, z: usize, x: usize) -> f64 {
        ratio(self.p_xz(x, z), self.px[x])
    }
    /// `P(y|x,z)`, zero on empty cells.
    #[inline]
    pub fn p_y_given_xz(&self, y: usize, x: usize, z: usize) -> f64 {
        ratio(self.p(x, y, z), self.p_xz(x, z))
    }
    /// `P(x|y,z)`, zero on empty cells.
    #[inline]
    pub fn p_x_given_yz(&self, x: usize, y: usize, z: usize) -> f64 {
        ratio(self.p(x, y, z), self.p_yz(y, z))
    }

    /// Marginal over `(X, Y)` as a row-major `nx × ny` vector.
    pub fn p_xy(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.nx * self.ny];
        for x in 0..self.nx {
            for y in 0..self.ny {
                out[x * self.ny + y] = (0..self.nz).map(|z| self.p(x, y, z)).sum();
            }
        }
        out
    }

    /// `H(X|Z)` in bits.
    pub fn h_x_given_z(&self) -> f64 {
        entropy(&self.pxz) - entropy(&self.pz)
    }
    /// `H(Y|Z)` in bits.
    pub fn h_y_given_z(&self) -> f64 {
        entropy(&self.pyz) - entropy(&self.pz)
    }
    /// `H(Y|X,Z)` in bits.
    pub fn h_y_given_xz(&self) -> f64 {
        (entropy(&self.p) - entropy(&self.pxz)).max(0.0)
    }
    /// `I(X;Y|Z)` in bits.
    pub fn i_xy_given_z(&self) -> f64 {
        (self.h_y_given_z() - self.h_y_given_xz()).max(0.0)
    }
}

#[inline]
fn ratio(num: f64, den: f64) -> f64 {
    if den > MASS_EPS {
        num / den
    } else {
        0.0
    }
}

/// Row-stochastic conditional `P(u|x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    nx: usize,
    nu: usize,
    rows: Vec<f64>,
}

impl Encoder {
    /// Validates row-major `nx × nu` rows; rows within 1e-9 of unit mass are
    /// renormalized exactly.
    pub fn new(nx: usize, nu: usize, mut rows: Vec<f64>) -> Result<Self> {
        if nx == 0 || nu == 0 || rows.len() != nx * nu {
            return Err(Error::DimensionMismatch(format!(
                "encoder {nx}x{nu} with {} entries",
                rows.len()
            )));
        }
        for x in 0..nx {
            let row = &mut rows[x * nu..(x + 1) * nu];
            if let Some(i) = row.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidEncoder(format!(
                    "row {x} entry {i} = {}",
                    row[i]
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidEncoder(format!("row {x} sums to {s}")));
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        Ok(Encoder { nx, nu, rows })
    }

    /// Internal constructor for rows that are normalized by construction.
    pub(crate) fn from_rows_unchecked(nx: usize, nu: usize, rows: Vec<f64>) -> Self {
        debug_assert_eq!(rows.len(), nx * nu);
        Encoder { nx, nu, rows }
    }

    /// `U = X`.
    pub fn identity(nx: usize) -> Self {
        let mut rows = vec![0.0; nx * nx];
        for x in 0..nx {
            rows[x * nx + x] = 1.0;
        }
        Encoder { nx, nu: nx, rows }
    }

    /// Every row equal to `dist`, so `U` is independent of `X`.
    pub fn constant(nx: usize, dist: &[f64]) -> Result<Self> {
        let rows = dist.iter().copied().cycle().take(nx * dist.len()).collect();
        Self::new(nx, dist.len(), rows)
    }

    /// Constant encoder sending everything to cluster 0.
    pub fn trivial(nx: usize, nu: usize) -> Self {
        let mut rows = vec![0.0; nx * nu];
        for x in 0..nx {
            rows[x * nu] = 1.0;
        }
        Encoder { nx, nu, rows }
    }

    /// Binary symmetric channel with crossover `r`.
    pub fn bsc(r: f64) -> Self {
        Encoder {
            nx: 2,
            nu: 2,
            rows: vec![1.0 - r, r, r, 1.0 - r],
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn nu(&self) -> usize {
        self.nu
    }
    #[inline]
    pub fn get(&self, x: usize, u: usize) -> f64 {
        self.rows[x * self.nu + u]
    }
    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x * self.nu..(x + 1) * self.nu]
    }
    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    /// Cluster with the largest probability for `x`; ties go to the lowest
    /// index.
    pub fn argmax(&self, x: usize) -> usize {
        argmax(self.row(x))
    }

    /// Marginal `P(u) = Σ_x P(x) P(u|x)`.
    pub fn marginal(&self, px: &[f64]) -> Vec<f64> {
        let mut pu = vec![0.0; self.nu];
        for (x, &w) in px.iter().enumerate() {
            for (u, v) in pu.iter_mut().enumerate() {
                *v += w * self.get(x, u);
            }
        }
        pu
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Encoder) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// The auxiliary pair `(Q(u|y,z), Q(x|z,u))` the alternating solver
/// maximizes over.
///
/// `q_u_given_yz` is laid out `(y, z, u)` and `q_x_given_zu` as `(z, u, x)`.
/// Cells without induced mass hold a uniform row and are flagged unused.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliaryDecoders {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub nu: usize,
    pub q_u_given_yz: Vec<f64>,
    pub q_x_given_zu: Vec<f64>,
    pub used_yz: Vec<bool>,
    pub used_zu: Vec<bool>,
}

impl AuxiliaryDecoders {
    #[inline]
    pub fn q_u(&self, u: usize, y: usize, z: usize) -> f64 {
        self.q_u_given_yz[(y * self.nz + z) * self.nu + u]
    }
    #[inline]
    pub fn q_x(&self, x: usize, z: usize, u: usize) -> f64 {
        self.q_x_given_zu[(z * self.nu + u) * self.nx + x]
    }
    pub fn is_used_zu(&self, z: usize, u: usize) -> bool {
        self.used_zu[z * self.nu + u]
    }
}

/// Soft decoder `P(y|u,z)`, laid out `(u, z, y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    pub nu: usize,
    pub nz: usize,
    pub ny: usize,
    pub probs: Vec<f64>,
    /// `(u, z)` cells with positive mass; unused cells hold a uniform row.
    pub used: Vec<bool>,
}

impl Decoder {
    #[inline]
    pub fn get(&self, y: usize, u: usize, z: usize) -> f64 {
        self.probs[(u * self.nz + z) * self.ny + y]
    }
    pub fn row(&self, u: usize, z: usize) -> &[f64] {
        let i = (u * self.nz + z) * self.ny;
        &self.probs[i..i + self.ny]
    }
    pub fn is_used(&self, u: usize, z: usize) -> bool {
        self.used[u * self.nz + z]
    }
}

/// The Bayes-optimal soft decoder `P(y|u,z)` induced by `enc` under `joint`
/// through the chain `U - X - (Y, Z)`.
pub fn induced_decoder(joint: &JointXYZ, enc: &Encoder) -> Decoder {
    let (nx, ny, nz) = joint.dims();
    let nu = enc.nu();
    let mut probs = vec![0.0; nu * nz * ny];
    let mut used = vec![false; nu * nz];
    for u in 0..nu {
        for z in 0..nz {
            let cell = &mut probs[(u * nz + z) * ny..(u * nz + z + 1) * ny];
            for x in 0..nx {
                let w = enc.get(x, u);
                if w == 0.0 {
                    continue;
                }
                for (y, c) in cell.iter_mut().enumerate() {
                    *c += w * joint.p(x, y, z);
                }
            }
            let mass: f64 = cell.iter().sum();
            if mass > MASS_EPS {
                cell.iter_mut().for_each(|c| *c /= mass);
                used[u * nz + z] = true;
            } else {
                cell.iter_mut().for_each(|c| *c = 1.0 / ny as f64);
            }
        }
    }
    Decoder {
        nu,
        nz,
        ny,
        probs,
        used,
    }
}

/// A subset of the variables `{X, Y, Z, U}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Vars(u8);

impl Vars {
    pub const NONE: Vars = Vars(0);
    pub const X: Vars = Vars(1);
    pub const Y: Vars = Vars(2);
    pub const Z: Vars = Vars(4);
    pub const U: Vars = Vars(8);

    fn contains(self, bit: usize) -> bool {
        self.0 & (1 << bit) != 0
    }
}

impl BitOr for Vars {
    type Output = Vars;
    fn bitor(self, rhs: Vars) -> Vars {
        Vars(self.0 | rhs.0)
    }
}

/// Explicit four-way joint `P(x,y,z) P(u|x)`, laid out `(x, y, z, u)`.
#[derive(Clone, Debug)]
pub struct FourWay {
    dims: [usize; 4],
    p: Vec<f64>,
}

impl FourWay {
    pub fn new(joint: &JointXYZ, enc: &Encoder) -> Self {
        let (nx, ny, nz) = joint.dims();
        assert_eq!(enc.nx(), nx, "encoder input alphabet must match |X|");
        let nu = enc.nu();
        let mut p = Vec::with_capacity(nx * ny * nz * nu);
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    let pxyz = joint.p(x, y, z);
                    p.extend((0..nu).map(|u| pxyz * enc.get(x, u)));
                }
            }
        }
        FourWay {
            dims: [nx, ny, nz, nu],
            p,
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    #[inline]
    pub fn p(&self, x: usize, y: usize, z: usize, u: usize) -> f64 {
        let [_, ny, nz, nu] = self.dims;
        self.p[((x * ny + y) * nz + z) * nu + u]
    }

    /// Marginal onto `vars`, indexed in `(x, y, z, u)` order over the kept
    /// variables.
    pub fn marginal(&self, vars: Vars) -> Vec<f64> {
        let keep: Vec<usize> = (0..4).filter(|&b| vars.contains(b)).collect();
        let size: usize = keep.iter().map(|&b| self.dims[b]).product();
        let mut out = vec![0.0; size];
        let [nx, ny, nz, nu] = self.dims;
        let mut idx = [0usize; 4];
        let mut flat = 0;
        for x in 0..nx {
            idx[0] = x;
            for y in 0..ny {
                idx[1] = y;
                for z in 0..nz {
                    idx[2] = z;
                    for u in 0..nu {
                        idx[3] = u;
                        let mut o = 0;
                        for &b in &keep {
                            o = o * self.dims[b] + idx[b];
                        }
                        out[o] += self.p[flat];
                        flat += 1;
                    }
                }
            }
        }
        out
    }

    /// Joint entropy of the variables in `vars`.
    pub fn entropy(&self, vars: Vars) -> f64 {
        if vars == Vars::NONE {
            return 0.0;
        }
        entropy(&self.marginal(vars))
    }

    /// `I(A;B|C)` in bits.
    pub fn cmi(&self, a: Vars, b: Vars, c: Vars) -> f64 {
        let v = self.entropy(a | c) + self.entropy(b | c) - self.entropy(a | b | c) - self.entropy(c);
        v.max(0.0)
    }
}

/// `I(A;B|C)` under `P(x,y,z) P(u|x)`.
pub fn conditional_mutual_information(
    joint: &JointXYZ,
    enc: &Encoder,
    a: Vars,
    b: Vars,
    c: Vars,
) -> f64 {
    FourWay::new(joint, enc).cmi(a, b, c)
}

/// `I(X;U|Z)` evaluated directly as `Σ P(x,z) P(u|x) log(P(u|x)/P(u|z))`.
pub fn rate(joint: &JointXYZ, enc: &Encoder) -> f64 {
    let (nx, _, nz) = joint.dims();
    let nu = enc.nu();
    let mut acc = 0.0;
    let mut pu_z = vec![0.0; nu];
    for z in 0..nz {
        if joint.p_z()[z] <= MASS_EPS {
            continue;
        }
        pu_z.iter_mut().for_each(|v| *v = 0.0);
        for x in 0..nx {
            let w = joint.p_x_given_z(x, z);
            for (u, v) in pu_z.iter_mut().enumerate() {
                *v += w * enc.get(x, u);
            }
        }
        for x in 0..nx {
            let pxz = joint.p_xz(x, z);
            if pxz <= 0.0 {
                continue;
            }
            for u in 0..nu {
                let e = enc.get(x, u);
                if e > 0.0 {
                    acc += pxz * e * (e / pu_z[u]).log2();
                }
            }
        }
    }
    acc.max(0.0)
}

/// `I(Y;U|Z)` evaluated directly as
/// `Σ P(y,z) P(u|y,z) log(P(u|y,z)/P(u|z))`.
pub fn relevance(joint: &JointXYZ, enc: &Encoder) -> f64 {
    let (nx, ny, nz) = joint.dims();
    let nu = enc.nu();
    let mut acc = 0.0;
    let mut pu_z = vec![0.0; nu];
    let mut pu_yz = vec![0.0; nu];
    for z in 0..nz {
        let pz = joint.p_z()[z];
        if pz <= MASS_EPS {
            continue;
        }
        pu_z.iter_mut().for_each(|v| *v = 0.0);
        for x in 0..nx {
            let w = joint.p_x_given_z(x, z);
            for (u, v) in pu_z.iter_mut().enumerate() {
                *v += w * enc.get(x, u);
            }
        }
        for y in 0..ny {
            let pyz = joint.p_yz(y, z);
            if pyz <= MASS_EPS {
                continue;
            }
            pu_yz.iter_mut().for_each(|v| *v = 0.0);
            for x in 0..nx {
                let w = joint.p_x_given_yz(x, y, z);
                if w == 0.0 {
                    continue;
                }
                for (u, v) in pu_yz.iter_mut().enumerate() {
                    *v += w * enc.get(x, u);
                }
            }
            for u in 0..nu {
                let q = pu_yz[u];
                if q > 0.0 {
                    acc += pyz * q * (q / pu_z[u]).log2();
                }
            }
        }
    }
    acc.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_encoder, random_joint};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dsbs(q: f64) -> JointXYZ {
        JointXYZ::from_fn((2, 2, 1), |x, y, _| 0.5 * if x == y { 1.0 - q } else { q }).unwrap()
    }

    #[test]
    fn validate_joint_cases() {
        let raw = vec![0.1, 0.2, 0.3, 0.4];
        let j = JointXYZ::new((2, 2, 1), raw.clone()).unwrap();
        for (a, b) in j.probs().iter().zip(&raw) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        let ones = JointXYZ::new((2, 2, 2), vec![1.0; 8]).unwrap();
        assert!(ones.probs().iter().all(|&v| v == 0.125));
        let mut bad = vec![0.25; 8];
        bad[5] = -0.1;
        assert!(matches!(
            JointXYZ::new((2, 2, 2), bad),
            Err(Error::NegativeMass { index: 5, .. })
        ));
        assert!(matches!(
            JointXYZ::new((2, 2, 2), vec![0.0; 8]),
            Err(Error::ZeroTotalMass)
        ));
        assert!(matches!(
            JointXYZ::new((2, 2, 2), vec![1.0; 7]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            JointXYZ::new((1, 1, 2), vec![f64::NAN, 1.0]),
            Err(Error::NonFinite(0))
        ));
    }

    #[test]
    fn reports_pre_normalization_mass() {
        let (_, mass) = JointXYZ::with_mass((1, 2, 1), vec![3.0, 1.0]).unwrap();
        assert_eq!(mass, 4.0);
    }

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(entropy(&[0.25; 4]), 2.0, epsilon = 1e-15);
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
        // -0.1 log2 0.1 - 0.9 log2 0.9
        assert_abs_diff_eq!(entropy(&[0.1, 0.9]), 0.468_995_593_589_281_2, epsilon = 1e-12);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        assert_abs_diff_eq!(kl_divergence(&[1.0, 0.0], &[0.5, 0.5]), 1.0, epsilon = 1e-15);
        assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]), f64::INFINITY);
    }

    #[test]
    fn cmi_examples() {
        // product P_X P_Y with nontrivial Z
        let j = JointXYZ::from_fn((2, 3, 2), |x, y, z| {
            [0.3, 0.7][x] * [0.2, 0.5, 0.3][y] * [0.6, 0.4][z]
        })
        .unwrap();
        let e = Encoder::identity(2);
        let fw = FourWay::new(&j, &e);
        assert_abs_diff_eq!(fw.cmi(Vars::X, Vars::Y, Vars::Z), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fw.cmi(Vars::U, Vars::Y, Vars::NONE), 0.0, epsilon = 1e-12);

        let j = JointXYZ::from_fn((3, 1, 1), |x, _, _| [0.2, 0.3, 0.5][x]).unwrap();
        let i = conditional_mutual_information(&j, &Encoder::identity(3), Vars::X, Vars::U, Vars::Z);
        assert_abs_diff_eq!(i, entropy(&[0.2, 0.3, 0.5]), epsilon = 1e-12);

        let j = dsbs(0.1);
        let i = conditional_mutual_information(&j, &Encoder::identity(2), Vars::X, Vars::Y, Vars::Z);
        assert_abs_diff_eq!(i, 1.0 - h2(0.1), epsilon = 1e-12);
        assert_abs_diff_eq!(i, 0.531_004_406_410_718_8, epsilon = 1e-12);
    }

    #[test]
    fn induced_decoder_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let j = random_joint(&mut rng, (3, 2, 2));

        let d = induced_decoder(&j, &Encoder::identity(3));
        for x in 0..3 {
            for z in 0..2 {
                for y in 0..2 {
                    assert_abs_diff_eq!(d.get(y, x, z), j.p_y_given_xz(y, x, z), epsilon = 1e-14);
                }
            }
        }

        let d = induced_decoder(&j, &Encoder::constant(3, &[0.2, 0.8]).unwrap());
        for u in 0..2 {
            for z in 0..2 {
                for y in 0..2 {
                    let pyz = j.p_yz(y, z) / j.p_z()[z];
                    assert_abs_diff_eq!(d.get(y, u, z), pyz, epsilon = 1e-14);
                }
            }
        }

        let e = random_encoder(&mut rng, 3, 4);
        let d = induced_decoder(&j, &e);
        let fw = FourWay::new(&j, &e);
        for u in 0..4 {
            for z in 0..2 {
                let puz: f64 = (0..3)
                    .flat_map(|x| (0..2).map(move |y| (x, y)))
                    .map(|(x, y)| fw.p(x, y, z, u))
                    .sum();
                for y in 0..2 {
                    let pyuz: f64 = (0..3).map(|x| fw.p(x, y, z, u)).sum();
                    assert_abs_diff_eq!(d.get(y, u, z), pyuz / puz, epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn induced_decoder_flags_unused_cells() {
        let j = JointXYZ::new((2, 2, 1), vec![0.25; 4]).unwrap();
        let e = Encoder::trivial(2, 3);
        let d = induced_decoder(&j, &e);
        assert!(d.is_used(0, 0));
        assert!(!d.is_used(1, 0) && !d.is_used(2, 0));
        assert_abs_diff_eq!(d.row(2, 0).iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn direct_rate_and_relevance_match_entropy_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let j = random_joint(&mut rng, (4, 3, 2));
            let e = random_encoder(&mut rng, 4, 3);
            let fw = FourWay::new(&j, &e);
            assert_abs_diff_eq!(rate(&j, &e), fw.cmi(Vars::X, Vars::U, Vars::Z), epsilon = 1e-12);
            assert_abs_diff_eq!(
                relevance(&j, &e),
                fw.cmi(Vars::Y, Vars::U, Vars::Z),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn information_identities_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let dims = (rng.gen_range(1..5), rng.gen_range(1..4), rng.gen_range(1..4));
            let j = random_joint(&mut rng, dims);
            let nu = rng.gen_range(1..5);
            let e = random_encoder(&mut rng, dims.0, nu);
            let fw = FourWay::new(&j, &e);
            // chain identity
            let direct = fw.cmi(Vars::Y, Vars::U, Vars::Z);
            let h_y_z = fw.entropy(Vars::Y | Vars::Z) - fw.entropy(Vars::Z);
            let h_y_uz = fw.entropy(Vars::Y | Vars::U | Vars::Z) - fw.entropy(Vars::U | Vars::Z);
            assert_abs_diff_eq!(direct, h_y_z - h_y_uz, epsilon = 1e-10);
            // Markov chain U - X - (Y, Z)
            assert!(fw.cmi(Vars::Y | Vars::Z, Vars::U, Vars::X) <= 1e-10);
            assert!(direct >= 0.0 && fw.cmi(Vars::X, Vars::U, Vars::Z) >= 0.0);
            let p = j.p_x();
            let q = e.marginal(p);
            if q.len() == p.len() {
                assert!(kl_divergence(p, &q) >= 0.0);
            }
        }
    }

    #[test]
    fn cached_conditionals_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let j = random_joint(&mut rng, (3, 4, 2));
        for z in 0..2 {
            let s: f64 = (0..3).map(|x| j.p_x_given_z(x, z)).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
        for x in 0..3 {
            let s: f64 = (0..2).map(|z| j.p_z_given_x(z, x)).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
            for z in 0..2 {
                let s: f64 = (0..4).map(|y| j.p_y_given_xz(y, x, z)).sum();
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
            }
        }
        for y in 0..4 {
            for z in 0..2 {
                let s: f64 = (0..3).map(|x| j.p_x_given_yz(x, y, z)).sum();
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn encoder_validation() {
        assert!(Encoder::new(2, 2, vec![0.5, 0.5, 0.3, 0.6]).is_err());
        assert!(Encoder::new(2, 2, vec![0.5, 0.5, -0.1, 1.1]).is_err());
        assert!(Encoder::new(2, 2, vec![0.5, 0.5, 1.0]).is_err());
        let e = Encoder::new(1, 3, vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(e.argmax(0), 2);
        assert_eq!(argmax(&[1.0, 1.0, 0.5]), 0);
    }
}
