//! Diffusion models `dX = b(X) dt + σ(X) dW` and their optional closed-form
//! companions.

use std::fmt;
use std::sync::Arc;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::stream::GaussianStream;
use crate::error::{Error, Result};

/// `x ↦ out`, writing a vector (drift, gradient) or a row-major matrix
/// (diffusion coefficient).
pub type VecField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Writes one draw of the invariant law into the output slice.
pub type InvariantSampler = Arc<dyn Fn(&mut GaussianStream, &mut [f64]) + Send + Sync>;
/// `(x, h, stream, x_out, dw_out)`: samples `X_h` given `X_0 = x` exactly,
/// together with the driving Brownian increment `W_h − W_0`.
pub type ExactTransition =
    Arc<dyn Fn(&[f64], f64, &mut GaussianStream, &mut [f64], &mut [f64]) + Send + Sync>;

/// Solution `g` of the Poisson equation `𝒜g = f − ν(f)` for a designated `f`.
#[derive(Clone)]
pub struct PoissonSolution {
    pub f: ScalarField,
    pub nu_f: f64,
    pub g: ScalarField,
    pub grad_g: VecField,
}

#[derive(Clone, Default)]
pub struct AnalyticExtras {
    pub invariant_sampler: Option<InvariantSampler>,
    /// `(power, ν(x^power))` for the first coordinate.
    pub invariant_moments: Vec<(u32, f64)>,
    pub poisson_solution: Option<PoissonSolution>,
    pub exact_transition: Option<ExactTransition>,
}

/// Built-in model parameters as they appear in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelSpec {
    Ou {
        lambda: f64,
        sigma0: f64,
    },
    Cir {
        k: f64,
        theta: f64,
        varsigma: f64,
    },
    Heston {
        r: f64,
        rho_corr: f64,
        k: f64,
        theta: f64,
        varsigma: f64,
        s0: f64,
    },
    BsLog {
        r: f64,
        sigma: f64,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<DiffusionModel> {
        match *self {
            ModelSpec::Ou { lambda, sigma0 } => DiffusionModel::ou(lambda, sigma0),
            ModelSpec::Cir { k, theta, varsigma } => DiffusionModel::cir(k, theta, varsigma),
            ModelSpec::Heston {
                r,
                rho_corr,
                k,
                theta,
                varsigma,
                ..
            } => DiffusionModel::heston(r, rho_corr, k, theta, varsigma),
            ModelSpec::BsLog { r, sigma } => DiffusionModel::bs_log(r, sigma),
        }
    }
}

#[derive(Clone)]
pub struct DiffusionModel {
    name: String,
    dim: usize,
    noise_dim: usize,
    drift: VecField,
    diffusion: VecField,
    /// Documented Lipschitz constant of `b` and `σ`; not enforced.
    pub lipschitz_bound: Option<f64>,
    pub analytic: AnalyticExtras,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("lipschitz_bound", &self.lipschitz_bound)
            .finish_non_exhaustive()
    }
}

impl DiffusionModel {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        noise_dim: usize,
        drift: VecField,
        diffusion: VecField,
    ) -> Result<Self> {
        if dim == 0 || noise_dim == 0 {
            return Err(Error::invalid("dim", "state and noise dimensions must be positive"));
        }
        Ok(Self {
            name: name.into(),
            dim,
            noise_dim,
            drift,
            diffusion,
            lipschitz_bound: None,
            analytic: AnalyticExtras::default(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    #[inline]
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    /// Row-major `d × q` diffusion matrix.
    #[inline]
    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }

    /// `σ*(x) v` for a `d`-vector `v`, written into a `q`-vector.
    pub fn sigma_transpose_times(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let mut sig = vec![0.0; self.dim * self.noise_dim];
        self.diffusion(x, &mut sig);
        for (j, o) in out.iter_mut().enumerate() {
            *o = (0..self.dim)
                .map(|i| sig[i * self.noise_dim + j] * v[i])
                .sum();
        }
    }

    /// `Tr(σσ*)(x)`.
    pub fn sigma_frobenius_sq(&self, x: &[f64]) -> f64 {
        let mut sig = vec![0.0; self.dim * self.noise_dim];
        self.diffusion(x, &mut sig);
        sig.iter().map(|s| s * s).sum()
    }

    pub fn with_lipschitz_bound(mut self, bound: f64) -> Self {
        self.lipschitz_bound = Some(bound);
        self
    }

    /// `𝒜g(x) = ⟨∇g, b⟩(x) + ½ Tr(σ* D²g σ)(x)` with `D²g` taken by central
    /// differences of `grad_g`.
    pub fn generator_on(&self, grad_g: &VecField, x: &[f64]) -> f64 {
        let d = self.dim;
        let q = self.noise_dim;
        let mut b = vec![0.0; d];
        self.drift(x, &mut b);
        let mut grad = vec![0.0; d];
        grad_g(x, &mut grad);
        let first: f64 = grad.iter().zip(&b).map(|(g, b)| g * b).sum();

        let mut hess = vec![0.0; d * d];
        let mut xp = x.to_vec();
        let mut gp = vec![0.0; d];
        let mut gm = vec![0.0; d];
        for j in 0..d {
            let h = 1e-5 * (1.0 + x[j].abs());
            xp[j] = x[j] + h;
            grad_g(&xp, &mut gp);
            xp[j] = x[j] - h;
            grad_g(&xp, &mut gm);
            xp[j] = x[j];
            for i in 0..d {
                hess[i * d + j] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        let mut sig = vec![0.0; d * q];
        self.diffusion(x, &mut sig);
        // Tr(σ* H σ) = Σ_k Σ_{i,j} σ_ik H_ij σ_jk
        let mut second = 0.0;
        for k in 0..q {
            for i in 0..d {
                for j in 0..d {
                    second += sig[i * q + k] * hess[i * d + j] * sig[j * q + k];
                }
            }
        }
        first + 0.5 * second
    }

    /// Largest deviation `|𝒜g − (f − ν(f))|` over `points` draws from the
    /// invariant sampler (or a standard normal cloud when there is none).
    pub fn verify_poisson(&self, points: usize, stream: &mut GaussianStream) -> Result<f64> {
        let ps = self
            .analytic
            .poisson_solution
            .as_ref()
            .ok_or_else(|| Error::UnsupportedModel(format!("{} has no Poisson solution", self.name)))?;
        let mut x = vec![0.0; self.dim];
        let mut worst: f64 = 0.0;
        for _ in 0..points {
            match &self.analytic.invariant_sampler {
                Some(sample) => sample(stream, &mut x),
                None => stream.fill_normal(&mut x),
            }
            let lhs = self.generator_on(&ps.grad_g, &x);
            let rhs = (ps.f)(&x) - ps.nu_f;
            worst = worst.max((lhs - rhs).abs());
        }
        Ok(worst)
    }

    /// Ornstein–Uhlenbeck `dX = −λX dt + σ₀ dW` with invariant law
    /// `N(0, σ₀²/(2λ))`, exact transitions, and the Poisson solution
    /// `g(x) = −x/λ` for `f(x) = x`.
    pub fn ou(lambda: f64, sigma0: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if !(sigma0 >= 0.0 && sigma0.is_finite()) {
            return Err(Error::invalid("sigma0", "must be nonnegative"));
        }
        let mut model = Self::new(
            "ou",
            1,
            1,
            Arc::new(move |x, out| out[0] = -lambda * x[0]),
            Arc::new(move |_, out| out[0] = sigma0),
        )?
        .with_lipschitz_bound(lambda.max(0.0));
        let stat_sd = sigma0 / (2.0 * lambda).sqrt();
        model.analytic = AnalyticExtras {
            invariant_sampler: Some(Arc::new(move |s, out| out[0] = stat_sd * s.normal())),
            invariant_moments: vec![(1, 0.0), (2, stat_sd * stat_sd)],
            poisson_solution: Some(PoissonSolution {
                f: Arc::new(|x| x[0]),
                nu_f: 0.0,
                g: Arc::new(move |x| -x[0] / lambda),
                grad_g: Arc::new(move |_, out| out[0] = -1.0 / lambda),
            }),
            exact_transition: Some(Arc::new(move |x, h, s, x_out, dw_out| {
                let (next, dw) = ou_exact_joint(lambda, sigma0, x[0], h, s.normal(), s.normal());
                x_out[0] = next;
                dw_out[0] = dw;
            })),
        };
        Ok(model)
    }

    /// Cox–Ingersoll–Ross `dv = k(θ − v) dt + ς√v dW`, with `√v` read as
    /// `√max(v, 0)` so the coefficients are total.
    pub fn cir(k: f64, theta: f64, varsigma: f64) -> Result<Self> {
        validate_cir(k, theta, varsigma)?;
        let mut model = Self::new(
            "cir",
            1,
            1,
            Arc::new(move |x, out| out[0] = k * (theta - x[0])),
            Arc::new(move |x, out| out[0] = varsigma * x[0].max(0.0).sqrt()),
        )?;
        let sampler = cir_stationary_sampler(k, theta, varsigma)?;
        model.analytic = AnalyticExtras {
            invariant_sampler: Some(Arc::new(move |s, out| out[0] = sampler(s))),
            invariant_moments: vec![
                (1, theta),
                (2, theta * theta + theta * varsigma * varsigma / (2.0 * k)),
            ],
            poisson_solution: None,
            exact_transition: None,
        };
        Ok(model)
    }

    /// Two-dimensional Heston state `(ξ, v)` with `ξ` the log-price
    /// relative to its origin, driven by independent `(W¹, W²)`.
    pub fn heston(r: f64, rho_corr: f64, k: f64, theta: f64, varsigma: f64) -> Result<Self> {
        if rho_corr.abs() > 1.0 {
            return Err(Error::invalid("rho_corr", "must lie in [-1, 1]"));
        }
        validate_cir(k, theta, varsigma)?;
        let orth = (1.0 - rho_corr * rho_corr).sqrt();
        let mut model = Self::new(
            "heston",
            2,
            2,
            Arc::new(move |x, out| {
                let v = x[1].max(0.0);
                out[0] = r - 0.5 * v;
                out[1] = k * (theta - x[1]);
            }),
            Arc::new(move |x, out| {
                let sv = x[1].max(0.0).sqrt();
                out[0] = orth * sv;
                out[1] = rho_corr * sv;
                out[2] = 0.0;
                out[3] = varsigma * sv;
            }),
        )?;
        let sampler = cir_stationary_sampler(k, theta, varsigma)?;
        model.analytic.invariant_sampler = Some(Arc::new(move |s, out| {
            out[0] = 0.0;
            out[1] = sampler(s);
        }));
        Ok(model)
    }

    /// Black–Scholes log-price `dξ = (r − σ²/2) dt + σ dW`.
    pub fn bs_log(r: f64, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", "must be nonnegative"));
        }
        Self::new(
            "bs-log",
            1,
            1,
            Arc::new(move |_, out| out[0] = r - 0.5 * sigma * sigma),
            Arc::new(move |_, out| out[0] = sigma),
        )
    }
}

fn validate_cir(k: f64, theta: f64, varsigma: f64) -> Result<()> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::invalid("k", "must be positive"));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::invalid("theta", "must be positive"));
    }
    if !(varsigma >= 0.0 && varsigma.is_finite()) {
        return Err(Error::invalid("varsigma", "must be nonnegative"));
    }
    Ok(())
}

/// Sampler of the stationary CIR law: Gamma with shape `2kθ/ς²` and rate
/// `2k/ς²` (mean θ, variance θς²/(2k)). Requires `2kθ > ς²`; `ς = 0` gives
/// the point mass at θ.
pub fn cir_stationary_sampler(
    k: f64,
    theta: f64,
    varsigma: f64,
) -> Result<impl Fn(&mut GaussianStream) -> f64 + Send + Sync + Clone> {
    validate_cir(k, theta, varsigma)?;
    let vs2 = varsigma * varsigma;
    if 2.0 * k * theta <= vs2 {
        return Err(Error::invalid(
            "varsigma",
            "positivity condition 2kθ > ς² violated",
        ));
    }
    let gamma = if vs2 == 0.0 {
        None
    } else {
        let shape = 2.0 * k * theta / vs2;
        let rate = 2.0 * k / vs2;
        Some(Gamma::new(shape, 1.0 / rate).map_err(|e| Error::invalid("varsigma", e.to_string()))?)
    };
    Ok(move |s: &mut GaussianStream| match &gamma {
        Some(g) => g.sample(s.rng_mut()),
        None => theta,
    })
}

/// Exact OU transition together with the Brownian increment that drives it,
/// from two independent standard normals.
pub(crate) fn ou_exact_joint(lambda: f64, sigma0: f64, x: f64, h: f64, z1: f64, z2: f64) -> (f64, f64) {
    let a = (-lambda * h).exp();
    let var_x = sigma0 * sigma0 * (-(-2.0 * lambda * h).exp_m1()) / (2.0 * lambda);
    // Cov(X_h − a x, W_h) = σ₀ (1 − a) / λ
    let cov = sigma0 * (-(-lambda * h).exp_m1()) / lambda;
    let dw = h.sqrt() * z2;
    let beta = cov / h;
    let resid = (var_x - beta * cov).max(0.0);
    (a * x + beta * dw + resid.sqrt() * z1, dw)
}
