//! Training objectives.
//!
//! The primary objective is a distance/motion-adaptive margin softmax over
//! unit embeddings and unit class prototypes: the target cosine is reduced by
//! a margin that grows with subject distance `rho` (meters) and motion
//! magnitude `xi` before the scaled softmax cross-entropy is taken. The
//! margin's rate parameters are trainable through softplus reparameterization.
//! A plain cross-entropy on head logits is available as a fallback.

use ndarray::{Array1, Array2};

use crate::error::{DigError, Result};
use crate::model::net::inv_softplus;
use crate::nn::params::ParamStore;

/// Weight of the saturating-exponential distance term.
pub const GAMMA1: f64 = 0.4;
/// Weight of the rational distance term.
pub const GAMMA2: f64 = 0.5;
/// Weight of the motion term.
pub const GAMMA3: f64 = 0.2;
/// Initial distance rate (1/m).
pub const MU_INIT: f64 = 0.1;
/// Initial motion rate.
pub const LAMBDA_INIT: f64 = 0.2;
/// Initial distance scale of the rational term (m).
pub const RHO0_INIT: f64 = 16.0;

/// Maximum departure from unit norm tolerated on embeddings and prototype
/// rows fed to the margin loss.
pub const UNIT_NORM_TOL: f64 = 1e-3;

fn softplus(x: f64) -> f64 {
    if x > 20.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Pre-activation values of the trainable margin rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginRaws {
    pub mu_raw: f64,
    pub lambda_raw: f64,
    pub rho0_raw: f64,
}

/// Positive margin rates after the softplus map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginParams {
    pub mu: f64,
    pub lambda: f64,
    pub rho0: f64,
}

impl Default for MarginRaws {
    fn default() -> Self {
        MarginRaws {
            mu_raw: inv_softplus(MU_INIT),
            lambda_raw: inv_softplus(LAMBDA_INIT),
            rho0_raw: inv_softplus(RHO0_INIT),
        }
    }
}

impl MarginRaws {
    pub fn params(&self) -> MarginParams {
        MarginParams {
            mu: softplus(self.mu_raw),
            lambda: softplus(self.lambda_raw),
            rho0: softplus(self.rho0_raw),
        }
    }

    pub fn from_store(store: &ParamStore) -> Self {
        MarginRaws {
            mu_raw: store.value("margin.mu_raw")[[0]],
            lambda_raw: store.value("margin.lambda_raw")[[0]],
            rho0_raw: store.value("margin.rho0_raw")[[0]],
        }
    }
}

/// Registers the three margin rates as trainable, decay-exempt scalars.
pub fn register_margin_params(store: &mut ParamStore) {
    use crate::nn::params::Init;
    let defaults = MarginRaws::default();
    for (name, v) in [
        ("margin.mu_raw", defaults.mu_raw),
        ("margin.lambda_raw", defaults.lambda_raw),
        ("margin.rho0_raw", defaults.rho0_raw),
    ] {
        store.register(name, &[1], Init::Const(v));
        store.mark_no_decay(name);
    }
}

/// The adaptive margin `M(rho, xi)`, strictly increasing in both arguments
/// and bounded by `GAMMA1 + GAMMA2 + GAMMA3`.
pub fn margin(p: &MarginParams, rho: f64, xi: f64) -> f64 {
    let u = rho / p.rho0;
    GAMMA1 * (1.0 - (-p.mu * rho).exp())
        + GAMMA2 * (1.0 - 1.0 / (1.0 + u * u))
        + GAMMA3 * (1.0 - (-p.lambda * xi).exp())
}

/// Partial derivatives of the margin wrt `(mu, lambda, rho0)`.
pub fn margin_grad(p: &MarginParams, rho: f64, xi: f64) -> (f64, f64, f64) {
    let u = rho / p.rho0;
    let denom = 1.0 + u * u;
    let dmu = GAMMA1 * rho * (-p.mu * rho).exp();
    let dlambda = GAMMA3 * xi * (-p.lambda * xi).exp();
    let drho0 = GAMMA2 * (-2.0 * rho * rho / (p.rho0 * p.rho0 * p.rho0)) / (denom * denom);
    (dmu, dlambda, drho0)
}

/// Result of one margin-loss evaluation.
#[derive(Debug, Clone)]
pub struct RstdalOutput {
    pub loss: f64,
    /// Post-margin softmax probability of the target class.
    pub prob_target: f64,
    pub grad_embedding: Array1<f64>,
    pub grad_prototypes: Array2<f64>,
    /// Gradients wrt `(mu_raw, lambda_raw, rho0_raw)`.
    pub grad_margin_raws: [f64; 3],
}

fn check_unit(norm: f64, what: &str) -> Result<()> {
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(DigError::Numeric(format!(
            "{what} must be unit-norm (got {norm:.6})"
        )));
    }
    Ok(())
}

/// Margin softmax loss for one sample, with analytic gradients.
///
/// Logits are `scale * cos_j` for every class, with the target cosine reduced
/// by `margin(rho, xi)` first. The log-softmax is evaluated in max-shifted
/// form so large scales cannot overflow.
pub fn rstdal_loss(
    embedding: &Array1<f64>,
    prototypes: &Array2<f64>,
    target: usize,
    rho: f64,
    xi: f64,
    scale: f64,
    raws: &MarginRaws,
) -> Result<RstdalOutput> {
    let (m, d) = prototypes.dim();
    if embedding.len() != d {
        return Err(DigError::Shape(format!(
            "embedding dim {} does not match prototype dim {d}",
            embedding.len()
        )));
    }
    if target >= m {
        return Err(DigError::Config(format!(
            "target class {target} out of range for {m} prototypes"
        )));
    }
    check_unit(embedding.dot(embedding).sqrt(), "embedding")?;
    for (j, row) in prototypes.rows().into_iter().enumerate() {
        check_unit(row.dot(&row).sqrt(), &format!("prototype row {j}"))?;
    }

    let p = raws.params();
    let mm = margin(&p, rho, xi);
    let cos = prototypes.dot(embedding);
    let mut z = cos.mapv(|c| scale * c);
    z[target] = scale * (cos[target] - mm);

    let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|&v| (v - zmax).exp()).sum();
    let loss = sum.ln() + zmax - z[target];
    let probs = z.mapv(|v| (v - zmax).exp() / sum);

    // d loss / d z_j = p_j - [j == target]; cosines pick up the scale.
    let mut dz = probs.clone();
    dz[target] -= 1.0;
    let dcos = dz.mapv(|v| scale * v);
    let grad_embedding = prototypes.t().dot(&dcos);
    let grad_prototypes = dcos
        .view()
        .into_shape((m, 1))
        .unwrap()
        .dot(&embedding.view().into_shape((1, d)).unwrap());

    // d loss / d M = -scale * dz_target; chain through softplus.
    let dloss_dm = -scale * dz[target];
    let (dmu, dlambda, drho0) = margin_grad(&p, rho, xi);
    let grad_margin_raws = [
        dloss_dm * dmu * sigmoid(raws.mu_raw),
        dloss_dm * dlambda * sigmoid(raws.lambda_raw),
        dloss_dm * drho0 * sigmoid(raws.rho0_raw),
    ];

    Ok(RstdalOutput {
        loss,
        prob_target: probs[target],
        grad_embedding,
        grad_prototypes,
        grad_margin_raws,
    })
}

/// Plain cross-entropy on arbitrary logits; returns the loss and its
/// gradient wrt the logits.
pub fn cross_entropy(logits: &Array1<f64>, target: usize) -> Result<(f64, Array1<f64>)> {
    if target >= logits.len() {
        return Err(DigError::Config(format!(
            "target class {target} out of range for {} logits",
            logits.len()
        )));
    }
    let zmax = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&v| (v - zmax).exp()).sum();
    let loss = sum.ln() + zmax - logits[target];
    let mut grad = logits.mapv(|v| (v - zmax).exp() / sum);
    grad[target] -= 1.0;
    Ok((loss, grad))
}
