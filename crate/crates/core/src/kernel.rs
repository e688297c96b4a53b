//! Truncated Mercer kernels with polynomially decaying eigenvalues and a
//! periodic trigonometric eigenbasis, orthonormal in L2(Uniform[0,1]).
//!
//! The eigenfunction family is `sqrt(2) sin(2 pi k x)` (odd indices) and
//! `sqrt(2) cos(2 pi k x)` (even indices) with frequency `k = ceil(nu/2)`,
//! optionally preceded by the constant function `phi_0 = 1` with eigenvalue 1.
//! Both members of a frequency pair share the eigenvalue `k^-alpha`, which
//! keeps the kernel translation invariant:
//!
//! ```text
//! K(x, y) = [1] + sum_k k^-alpha * 2 cos(2 pi k (x - y))
//! ```
//!
//! Eigenfunctions are uniformly bounded by `c_phi = sqrt(2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform bound on the trigonometric eigenfunctions, squared.
pub const C_PHI_SQ: f64 = 2.0;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Sin/cos parity of an eigenfunction index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Sin,
    Cos,
}

/// Index pairing rule: `nu -> (frequency, parity)`, odd indices are sines.
#[inline]
pub fn pairing(nu: usize) -> (usize, Parity) {
    let k = nu.div_ceil(2);
    if nu % 2 == 1 {
        (k, Parity::Sin)
    } else {
        (k, Parity::Cos)
    }
}

/// A truncated Mercer basis: decay exponent, number of retained eigenpairs,
/// and whether the constant eigenfunction is included.
///
/// Immutable after construction; shared freely across threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SpecConfig", into = "SpecConfig")]
pub struct MercerBasisSpec {
    alpha: f64,
    truncation: usize,
    include_constant: bool,
    /// Cached `k^-alpha` for `k = 1..=ceil(truncation/2)`.
    pair_weights: Vec<f64>,
}

/// Wire form: `{alpha, truncation, include_constant}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpecConfig {
    alpha: f64,
    truncation: usize,
    include_constant: bool,
}

impl TryFrom<SpecConfig> for MercerBasisSpec {
    type Error = Error;
    fn try_from(c: SpecConfig) -> Result<Self> {
        Self::new(c.alpha, c.truncation, c.include_constant)
    }
}

impl From<MercerBasisSpec> for SpecConfig {
    fn from(s: MercerBasisSpec) -> Self {
        Self { alpha: s.alpha, truncation: s.truncation, include_constant: s.include_constant }
    }
}

impl PartialEq for MercerBasisSpec {
    fn eq(&self, other: &Self) -> bool {
        self.alpha == other.alpha
            && self.truncation == other.truncation
            && self.include_constant == other.include_constant
    }
}

/// One eigenpair of the kernel: index, eigenvalue, and evaluator.
#[derive(Debug, Clone, Copy)]
pub struct EigenPair {
    pub index: usize,
    pub value: f64,
}

impl EigenPair {
    /// Evaluate the eigenfunction at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let (k, parity) = pairing(self.index);
        let arg = TWO_PI * k as f64 * x;
        match parity {
            Parity::Sin => SQRT_2 * arg.sin(),
            Parity::Cos => SQRT_2 * arg.cos(),
        }
    }
}

impl MercerBasisSpec {
    /// New basis; requires `alpha > 1` (summable spectrum) and at least one
    /// retained eigenpair.
    pub fn new(alpha: f64, truncation: usize, include_constant: bool) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 1.0) {
            return Err(Error::Config(format!(
                "eigenvalue decay exponent must be finite and > 1, got {alpha}"
            )));
        }
        if truncation == 0 {
            return Err(Error::Config("truncation must be at least 1".into()));
        }
        let pair_weights =
            (1..=truncation.div_ceil(2)).map(|k| (k as f64).powf(-alpha)).collect();
        Ok(Self { alpha, truncation, include_constant, pair_weights })
    }

    /// Smallest truncation whose integral tail bound is at most `tol`.
    ///
    /// For small `alpha` this can be very large (alpha=2, tol=1e-6 needs
    /// eight million eigenpairs); callers doing simulation work usually pick
    /// an explicit truncation instead.
    pub fn with_tail_tolerance(alpha: f64, tol: f64, include_constant: bool) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::Config("tail tolerance must be positive".into()));
        }
        if !(alpha.is_finite() && alpha > 1.0) {
            return Err(Error::Config(format!(
                "eigenvalue decay exponent must be finite and > 1, got {alpha}"
            )));
        }
        // 2 c_phi^2 (M/2)^(1-alpha) / (alpha-1) <= tol
        let half_m = (2.0 * C_PHI_SQ / ((alpha - 1.0) * tol)).powf(1.0 / (alpha - 1.0));
        let truncation = (2.0 * half_m.ceil()).max(2.0) as usize;
        Self::new(alpha, truncation, include_constant)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn include_constant(&self) -> bool {
        self.include_constant
    }

    fn check_index(&self, nu: usize) -> Result<()> {
        if nu == 0 || nu > self.truncation {
            return Err(Error::IndexOutOfRange { index: nu, max: self.truncation });
        }
        Ok(())
    }

    /// Eigenvalue `mu_nu = k^-alpha` with `k = ceil(nu/2)`.
    pub fn eigenvalue(&self, nu: usize) -> Result<f64> {
        self.check_index(nu)?;
        let (k, _) = pairing(nu);
        Ok(self.pair_weights[k - 1])
    }

    /// Eigenfunction value: `sqrt(2) sin(2 pi k x)` for odd `nu`,
    /// `sqrt(2) cos(2 pi k x)` for even `nu`.
    pub fn eigenfunction(&self, nu: usize, x: f64) -> Result<f64> {
        self.check_index(nu)?;
        check_domain(x)?;
        Ok(EigenPair { index: nu, value: 0.0 }.eval(x))
    }

    /// The full eigenpair for `nu`.
    pub fn eigen_pair(&self, nu: usize) -> Result<EigenPair> {
        Ok(EigenPair { index: nu, value: self.eigenvalue(nu)? })
    }

    /// Truncated kernel value `sum_nu mu_nu phi_nu(x) phi_nu(y)` plus 1 when
    /// the constant eigenfunction is included.
    ///
    /// Full sin/cos pairs collapse to `2 k^-alpha cos(2 pi k (x-y))`; a
    /// trailing unpaired sine (odd truncation) is added separately. Expects
    /// `x, y` in `[0, 1]`.
    pub fn kernel_eval(&self, x: f64, y: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
        let full_pairs = self.truncation / 2;
        let mut acc = if self.include_constant { 1.0 } else { 0.0 };

        if full_pairs > 0 {
            let theta = TWO_PI * (x - y);
            let (step_cos, step_sin) = (theta.cos(), theta.sin());
            // Rotation recurrence for cos(k theta), k = 1..=full_pairs.
            let (mut ck, mut sk) = (step_cos, step_sin);
            acc += 2.0 * self.pair_weights[0] * ck;
            for &wk in &self.pair_weights[1..full_pairs] {
                let next_c = ck * step_cos - sk * step_sin;
                let next_s = sk * step_cos + ck * step_sin;
                ck = next_c;
                sk = next_s;
                acc += 2.0 * wk * ck;
            }
        }

        if self.truncation % 2 == 1 {
            let k = (self.truncation + 1) / 2;
            let arg_x = TWO_PI * k as f64 * x;
            let arg_y = TWO_PI * k as f64 * y;
            acc += 2.0 * self.pair_weights[k - 1] * arg_x.sin() * arg_y.sin();
        }
        acc
    }

    /// Exact truncation tail `c_phi^2 sum_{nu > M} mu_nu`: a uniform bound on
    /// `|K_exact(x,y) - K_M(x,y)|` for all `x, y`.
    pub fn kernel_tail_bound(&self) -> f64 {
        let m = self.truncation;
        if m % 2 == 0 {
            C_PHI_SQ * 2.0 * zeta_tail(self.alpha, m / 2)
        } else {
            let k0 = (m + 1) / 2;
            C_PHI_SQ * ((k0 as f64).powf(-self.alpha) + 2.0 * zeta_tail(self.alpha, k0))
        }
    }

    /// Closed-form integral upper bound on the truncation tail,
    /// `2 c_phi^2 (M/2)^(1-alpha) / (alpha - 1)`.
    pub fn kernel_tail_integral_bound(&self) -> f64 {
        let half_m = self.truncation as f64 / 2.0;
        2.0 * C_PHI_SQ * half_m.powf(1.0 - self.alpha) / (self.alpha - 1.0)
    }

    /// L2 projection coefficients `<f, phi_nu>` for `nu = 1..=count`,
    /// composite midpoint quadrature on `quadrature_nodes` uniform cells.
    ///
    /// Requires `count <= truncation` and at least `4 * count` nodes so the
    /// highest retained frequency is resolved.
    pub fn project_coefficients<F: Fn(f64) -> f64>(
        &self,
        f: F,
        count: usize,
        quadrature_nodes: usize,
    ) -> Result<Vec<f64>> {
        if count > self.truncation {
            return Err(Error::Config(format!(
                "projection count {count} exceeds truncation {}",
                self.truncation
            )));
        }
        if quadrature_nodes < 4 * count {
            return Err(Error::Config(format!(
                "need at least {} quadrature nodes for {count} coefficients, got {quadrature_nodes}",
                4 * count
            )));
        }
        Ok(self.project_impl(&f, count, quadrature_nodes, false))
    }

    /// Projection aligned with the kernel's spectral enumeration: the constant
    /// coefficient `\int f` first (when the basis includes it), then
    /// `<f, phi_nu>` for `nu = 1..=count`.
    pub fn project_onto_spectrum<F: Fn(f64) -> f64>(
        &self,
        f: F,
        count: usize,
        quadrature_nodes: usize,
    ) -> Result<Vec<f64>> {
        if count > self.truncation {
            return Err(Error::Config(format!(
                "projection count {count} exceeds truncation {}",
                self.truncation
            )));
        }
        if quadrature_nodes < 4 * count.max(1) {
            return Err(Error::Config(format!(
                "need at least {} quadrature nodes, got {quadrature_nodes}",
                4 * count.max(1)
            )));
        }
        Ok(self.project_impl(&f, count, quadrature_nodes, self.include_constant))
    }

    fn project_impl<F: Fn(f64) -> f64>(
        &self,
        f: &F,
        count: usize,
        nodes: usize,
        with_constant: bool,
    ) -> Vec<f64> {
        let offset = usize::from(with_constant);
        let mut coeffs = vec![0.0; offset + count];
        let h = 1.0 / nodes as f64;
        let max_freq = count.div_ceil(2);
        let mut feats = vec![0.0; count];
        for j in 0..nodes {
            let x = (j as f64 + 0.5) * h;
            let fx = f(x);
            trig_features(x, max_freq, count, &mut feats);
            if with_constant {
                coeffs[0] += fx * h;
            }
            for (c, &phi) in coeffs[offset..].iter_mut().zip(feats.iter()) {
                *c += fx * phi * h;
            }
        }
        coeffs
    }

    /// Eigenvalues aligned with the spectral enumeration: `[1]` for the
    /// constant (when included) followed by `mu_1..mu_cutoff`.
    pub fn spectrum_upto(&self, cutoff: usize) -> Vec<f64> {
        let cutoff = cutoff.min(self.truncation);
        let mut out = Vec::with_capacity(cutoff + 1);
        if self.include_constant {
            out.push(1.0);
        }
        for nu in 1..=cutoff {
            let (k, _) = pairing(nu);
            out.push(self.pair_weights[k - 1]);
        }
        out
    }

    /// Eigenfunction values at `x` aligned with [`Self::spectrum_upto`].
    pub fn features_upto(&self, x: f64, cutoff: usize) -> Vec<f64> {
        let cutoff = cutoff.min(self.truncation);
        let offset = usize::from(self.include_constant);
        let mut out = vec![0.0; offset + cutoff];
        if self.include_constant {
            out[0] = 1.0;
        }
        trig_features(x, cutoff.div_ceil(2), cutoff, &mut out[offset..]);
        out
    }
}

/// Fill `out[nu-1] = phi_nu(x)` for `nu = 1..=count` via a rotation
/// recurrence (one sin/cos call regardless of `count`).
fn trig_features(x: f64, max_freq: usize, count: usize, out: &mut [f64]) {
    debug_assert!(out.len() >= count);
    if count == 0 {
        return;
    }
    let theta = TWO_PI * x;
    let (step_cos, step_sin) = (theta.cos(), theta.sin());
    let (mut ck, mut sk) = (step_cos, step_sin);
    for k in 1..=max_freq {
        if k > 1 {
            let next_c = ck * step_cos - sk * step_sin;
            let next_s = sk * step_cos + ck * step_sin;
            ck = next_c;
            sk = next_s;
        }
        let sin_idx = 2 * k - 2; // nu = 2k-1
        if sin_idx < count {
            out[sin_idx] = SQRT_2 * sk;
        }
        let cos_idx = 2 * k - 1; // nu = 2k
        if cos_idx < count {
            out[cos_idx] = SQRT_2 * ck;
        }
    }
}

fn check_domain(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    Ok(())
}

/// `sum_{k > start} k^-alpha`: direct summation plus an Euler-Maclaurin
/// remainder, accurate to machine precision.
fn zeta_tail(alpha: f64, start: usize) -> f64 {
    const DIRECT: usize = 10_000;
    let mut sum = 0.0;
    // Summing in reverse keeps small terms from being absorbed.
    for k in ((start + 1)..=(start + DIRECT)).rev() {
        sum += (k as f64).powf(-alpha);
    }
    let m = (start + DIRECT + 1) as f64;
    let rem = m.powf(1.0 - alpha) / (alpha - 1.0)
        + 0.5 * m.powf(-alpha)
        + alpha * m.powf(-alpha - 1.0) / 12.0
        - alpha * (alpha + 1.0) * (alpha + 2.0) * m.powf(-alpha - 3.0) / 720.0;
    sum + rem
}
