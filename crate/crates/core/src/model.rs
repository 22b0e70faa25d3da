//! Autonomous free SDEs `dX = a(X) dt + Σᵢ bⁱ(X) dW cⁱ(X)` and the three
//! built-in models with their closed-form reference statistics.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, HermitianMatrix, SYMMETRIZE_TOLERANCE};
use crate::scalar::{lit, Real};

pub type MatrixMap<T> = Arc<dyn Fn(&HermitianMatrix<T>) -> Result<HermitianMatrix<T>> + Send + Sync>;

/// What to do when `√X` meets negative eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PsdPolicy {
    /// Clamp them to zero and count the event.
    #[default]
    Clamp,
    /// Fail with [`Error::StrictModeViolation`].
    Strict,
}

#[derive(Clone)]
pub enum Drift<T> {
    /// `constant · I + slope · X`.
    Affine { constant: T, slope: T },
    Map(MatrixMap<T>),
}

/// One side of a diffusion factor pair.
#[derive(Clone)]
pub enum Factor<T> {
    Identity,
    /// `c · I`.
    Constant(T),
    /// `c · √X⁺`.
    SqrtPsd(T),
    Map(MatrixMap<T>),
}

/// `left(X) · dW · right(X)`.
#[derive(Clone)]
pub struct DiffusionTerm<T> {
    pub left: Factor<T>,
    pub right: Factor<T>,
}

impl<T> DiffusionTerm<T> {
    pub fn new(left: Factor<T>, right: Factor<T>) -> Self {
        Self { left, right }
    }
}

/// Result of evaluating the diffusion part, with the number of eigenvalues
/// that had to be clamped to take square roots.
#[derive(Clone, Debug, PartialEq)]
pub struct Diffusion<T> {
    pub value: HermitianMatrix<T>,
    pub clamped: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DensityFamily {
    Semicircle { center: f64, radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Reference {
    Ou { theta: f64, sigma: f64, x0: f64 },
    Gbm1 { theta: f64, x0: f64 },
    Cir { a: f64, b: f64, x0: f64 },
    None,
}

/// Closed-form statistics of the exact solution, where known.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceStats {
    reference: Reference,
}

impl ReferenceStats {
    pub fn has_mean(&self) -> bool {
        !matches!(self.reference, Reference::None)
    }

    /// `φ(X_t)`.
    pub fn mean_at(&self, t: f64) -> Option<f64> {
        match self.reference {
            Reference::Ou { theta, x0, .. } => Some(x0 * (theta * t).exp()),
            Reference::Gbm1 { theta, x0 } => Some(x0 * (theta * t).exp()),
            Reference::Cir { a, b, x0 } => {
                let decay = (-b * t).exp();
                Some(a / b + (x0 - a / b) * decay)
            }
            Reference::None => None,
        }
    }

    /// `(lower, upper)` end points of the spectral support.
    pub fn support_at(&self, t: f64) -> Option<(f64, f64)> {
        match self.reference {
            Reference::Ou { .. } => match self.density_family(t)? {
                DensityFamily::Semicircle { center, radius } => Some((center - radius, center + radius)),
            },
            Reference::Gbm1 { theta, x0 } => {
                let (lo, hi) = gbm1_support(theta, t);
                let (lo, hi) = (x0 * lo, x0 * hi);
                Some((lo.min(hi), lo.max(hi)))
            }
            _ => None,
        }
    }

    pub fn density_family(&self, t: f64) -> Option<DensityFamily> {
        match self.reference {
            Reference::Ou { theta, sigma, x0 } => Some(DensityFamily::Semicircle {
                center: x0 * (theta * t).exp(),
                radius: ou_radius(theta, sigma, t),
            }),
            _ => None,
        }
    }
}

/// Radius of the semicircle law of the free OU process started at a
/// multiple of the identity: `√((2σ²/θ)(e^{2θt} − 1))`, which for `θ < 0`
/// equals `√((2σ²/|θ|)(1 − e^{−2|θ|t}))` and for `θ = 0` is `2|σ|√t`.
pub fn ou_radius(theta: f64, sigma: f64, t: f64) -> f64 {
    let variance_times_4 = if theta == 0.0 {
        4.0 * sigma * sigma * t
    } else {
        2.0 * sigma * sigma * (2.0 * theta * t).exp_m1() / theta
    };
    variance_times_4.max(0.0).sqrt()
}

/// Support end points of the free geometric Brownian motion
/// `dX = θX dt + X^{1/2} dW X^{1/2}`, `X₀ = I`.
///
/// With `rᵢ = (−1 ± √(1 + 4/t))/2` the edges are
/// `((1 + rᵢ)/rᵢ) · e^{t(θ + rᵢ)}`, returned as `(lower, upper)`.
pub fn gbm1_support(theta: f64, t: f64) -> (f64, f64) {
    if t <= 0.0 {
        return (1.0, 1.0);
    }
    let root = (1.0 + 4.0 / t).sqrt();
    let edge = |r: f64| (1.0 + r) / r * (t * (theta + r)).exp();
    let upper = edge((-1.0 + root) / 2.0);
    let lower = edge((-1.0 - root) / 2.0);
    (lower, upper)
}

pub struct FsdeModel<T> {
    name: String,
    params: Vec<(String, f64)>,
    drift: Drift<T>,
    diffusion: Vec<DiffusionTerm<T>>,
    initial_scale: T,
    psd_policy: PsdPolicy,
    reference: Reference,
    warnings: Vec<String>,
}

impl<T: Real> Clone for FsdeModel<T> {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            params: self.params.clone(),
            drift: self.drift.clone(),
            diffusion: self.diffusion.clone(),
            initial_scale: self.initial_scale,
            psd_policy: self.psd_policy,
            reference: self.reference,
            warnings: self.warnings.clone(),
        }
    }
}

impl<T: Real> fmt::Debug for FsdeModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FsdeModel")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("terms", &self.diffusion.len())
            .field("initial_scale", &self.initial_scale)
            .field("psd_policy", &self.psd_policy)
            .finish()
    }
}

/// `dX = θX dt + σ dW`, `X₀ = 0`.
pub fn ou_model<T: Real>(theta: T, sigma: T) -> FsdeModel<T> {
    FsdeModel {
        name: "ou".into(),
        params: vec![
            ("theta".into(), theta.to_f64_lossy()),
            ("sigma".into(), sigma.to_f64_lossy()),
        ],
        drift: Drift::Affine {
            constant: T::zero(),
            slope: theta,
        },
        diffusion: vec![DiffusionTerm::new(Factor::Constant(sigma), Factor::Identity)],
        initial_scale: T::zero(),
        psd_policy: PsdPolicy::Clamp,
        reference: Reference::Ou {
            theta: theta.to_f64_lossy(),
            sigma: sigma.to_f64_lossy(),
            x0: 0.0,
        },
        warnings: Vec::new(),
    }
}

/// `dX = θX dt + X^{1/2} dW X^{1/2}`, `X₀ = I`.
pub fn gbm1_model<T: Real>(theta: T) -> FsdeModel<T> {
    FsdeModel {
        name: "gbm1".into(),
        params: vec![("theta".into(), theta.to_f64_lossy())],
        drift: Drift::Affine {
            constant: T::zero(),
            slope: theta,
        },
        diffusion: vec![DiffusionTerm::new(Factor::SqrtPsd(T::one()), Factor::SqrtPsd(T::one()))],
        initial_scale: T::one(),
        psd_policy: PsdPolicy::Clamp,
        reference: Reference::Gbm1 {
            theta: theta.to_f64_lossy(),
            x0: 1.0,
        },
        warnings: Vec::new(),
    }
}

/// `dX = (a − bX) dt + (σ/2)√X dW + (σ/2) dW √X`, `X₀ = I`.
pub fn cir_model<T: Real>(a: T, b: T, sigma: T) -> Result<FsdeModel<T>> {
    for (name, value) in [("a", a), ("b", b), ("sigma", sigma)] {
        if !(value > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "CIR parameter {name} must be positive, got {value}"
            )));
        }
    }
    let mut warnings = Vec::new();
    let two = lit::<T>(2.0);
    if two * a * a < sigma * sigma {
        warnings.push(format!(
            "CIR feasibility 2a^2 >= sigma^2 fails (a = {a}, sigma = {sigma}); expect clamping"
        ));
    }
    let half_sigma = sigma / two;
    Ok(FsdeModel {
        name: "cir".into(),
        params: vec![
            ("a".into(), a.to_f64_lossy()),
            ("b".into(), b.to_f64_lossy()),
            ("sigma".into(), sigma.to_f64_lossy()),
        ],
        drift: Drift::Affine {
            constant: a,
            slope: -b,
        },
        diffusion: vec![
            DiffusionTerm::new(Factor::SqrtPsd(half_sigma), Factor::Identity),
            DiffusionTerm::new(Factor::Identity, Factor::SqrtPsd(half_sigma)),
        ],
        initial_scale: T::one(),
        psd_policy: PsdPolicy::Clamp,
        reference: Reference::Cir {
            a: a.to_f64_lossy(),
            b: b.to_f64_lossy(),
            x0: 1.0,
        },
        warnings,
    })
}

enum Resolved<T> {
    Scalar(T),
    Matrix(HermitianMatrix<T>),
}

impl<T: Real> FsdeModel<T> {
    /// A model without closed-form reference statistics.
    pub fn custom(
        name: impl Into<String>,
        drift: Drift<T>,
        diffusion: Vec<DiffusionTerm<T>>,
        initial_scale: T,
    ) -> Self {
        Self {
            name: name.into(),
            params: Vec::new(),
            drift,
            diffusion,
            initial_scale,
            psd_policy: PsdPolicy::Clamp,
            reference: Reference::None,
            warnings: Vec::new(),
        }
    }

    /// Starts the model at `c · I` instead of its default initial condition.
    /// Reference statistics of the built-in models follow along.
    pub fn with_initial_scale(mut self, c: T) -> Self {
        self.initial_scale = c;
        let x0 = c.to_f64_lossy();
        match &mut self.reference {
            Reference::Ou { x0: r, .. } | Reference::Gbm1 { x0: r, .. } | Reference::Cir { x0: r, .. } => {
                *r = x0
            }
            Reference::None => {}
        }
        self
    }

    pub fn with_psd_policy(mut self, policy: PsdPolicy) -> Self {
        self.psd_policy = policy;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn psd_policy(&self) -> PsdPolicy {
        self.psd_policy
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn diffusion_terms(&self) -> &[DiffusionTerm<T>] {
        &self.diffusion
    }

    pub fn reference(&self) -> ReferenceStats {
        ReferenceStats {
            reference: self.reference,
        }
    }

    pub fn initial_condition(&self, n: usize) -> HermitianMatrix<T> {
        HermitianMatrix::scaled_identity(n, self.initial_scale)
    }

    /// `a(X)`.
    pub fn drift(&self, x: &HermitianMatrix<T>) -> Result<HermitianMatrix<T>> {
        match &self.drift {
            Drift::Affine { constant, slope } => {
                let mut out = x.scaled(slope);
                if *constant != T::zero() {
                    out.add_assign(&HermitianMatrix::scaled_identity(x.n(), *constant))?;
                }
                Ok(out)
            }
            Drift::Map(f) => {
                let out = f(x)?;
                if out.n() != x.n() {
                    return Err(Error::DimensionMismatch {
                        expected: x.n(),
                        got: out.n(),
                    });
                }
                Ok(out)
            }
        }
    }

    /// `(constant, slope)` of an affine drift.
    pub(crate) fn affine_drift(&self) -> Option<(T, T)> {
        match &self.drift {
            Drift::Affine { constant, slope } => Some((*constant, *slope)),
            Drift::Map(_) => None,
        }
    }

    /// `Σᵢ bⁱcⁱ` when every factor is a scalar, so that the diffusion is
    /// that multiple of `dW` whatever the state.
    pub(crate) fn additive_coefficient(&self) -> Option<T> {
        let scalar = |f: &Factor<T>| match f {
            Factor::Identity => Some(T::one()),
            Factor::Constant(c) => Some(*c),
            _ => None,
        };
        self.diffusion.iter().try_fold(T::zero(), |acc, term| {
            Some(acc + scalar(&term.left)? * scalar(&term.right)?)
        })
    }

    /// `Σᵢ bⁱ(X) dW cⁱ(X)` plus the clamp count of any square roots taken.
    pub fn diffusion(&self, x: &HermitianMatrix<T>, dw: &HermitianMatrix<T>) -> Result<Diffusion<T>> {
        if x.n() != dw.n() {
            return Err(Error::DimensionMismatch {
                expected: x.n(),
                got: dw.n(),
            });
        }
        let mut root: Option<HermitianMatrix<T>> = None;
        let mut clamped = 0;
        let mut resolve = |factor: &Factor<T>| -> Result<Resolved<T>> {
            Ok(match factor {
                Factor::Identity => Resolved::Scalar(T::one()),
                Factor::Constant(c) => Resolved::Scalar(*c),
                Factor::SqrtPsd(c) => {
                    if root.is_none() {
                        let (r, k) = x.sqrt_psd()?;
                        if k > 0 && self.psd_policy == PsdPolicy::Strict {
                            return Err(Error::StrictModeViolation { clamped: k });
                        }
                        clamped += k;
                        root = Some(r);
                    }
                    let r = root.as_ref().expect("computed above");
                    if *c == T::one() {
                        Resolved::Matrix(r.clone())
                    } else {
                        Resolved::Matrix(r.scaled(c))
                    }
                }
                Factor::Map(f) => Resolved::Matrix(f(x)?),
            })
        };

        let mut pairs = Vec::with_capacity(self.diffusion.len());
        for term in &self.diffusion {
            pairs.push((resolve(&term.left)?, resolve(&term.right)?));
        }

        // Purely scalar terms keep the result an exact multiple of dW.
        if pairs
            .iter()
            .all(|p| matches!(p, (Resolved::Scalar(_), Resolved::Scalar(_))))
        {
            let coefficient = pairs.iter().fold(T::zero(), |acc, p| match p {
                (Resolved::Scalar(b), Resolved::Scalar(c)) => acc + *b * *c,
                _ => unreachable!(),
            });
            return Ok(Diffusion {
                value: dw.scaled(&coefficient),
                clamped,
            });
        }

        let n = x.n();
        let dw_dense = dw.to_dense();
        let mut total = DenseMatrix::zeros(n);
        for (left, right) in &pairs {
            let term = match (left, right) {
                (Resolved::Scalar(b), Resolved::Scalar(c)) => {
                    let mut m = dw_dense.clone();
                    m.scale_in_place(&(*b * *c));
                    m
                }
                (Resolved::Matrix(b), Resolved::Scalar(c)) => {
                    let mut m = b.to_dense().matmul(&dw_dense);
                    if *c != T::one() {
                        m.scale_in_place(c);
                    }
                    m
                }
                (Resolved::Scalar(b), Resolved::Matrix(c)) => {
                    let mut m = dw_dense.matmul(&c.to_dense());
                    if *b != T::one() {
                        m.scale_in_place(b);
                    }
                    m
                }
                (Resolved::Matrix(b), Resolved::Matrix(c)) => {
                    b.to_dense().matmul(&dw_dense).matmul(&c.to_dense())
                }
            };
            total.add_assign(&term);
        }
        let value = total.symmetrize(lit(SYMMETRIZE_TOLERANCE))?;
        Ok(Diffusion { value, clamped })
    }
}

/// `Σᵢ bⁱ(X) dW cⁱ(X)` without the clamp bookkeeping.
pub fn apply_diffusion<T: Real>(
    model: &FsdeModel<T>,
    x: &HermitianMatrix<T>,
    dw: &HermitianMatrix<T>,
) -> Result<HermitianMatrix<T>> {
    model.diffusion(x, dw).map(|d| d.value)
}
