//! Loss terms of the autoencoder and their weighted combination.
//!
//! Each term is a [`LossTerm`] registered by name (`recons`, `joint`,
//! `cross`, `rank`). [`total_loss`] walks the registry and weights each term
//! with the matching entry of [`LossWeights`].
//!
//! Norm terms use the unsquared Euclidean norm by default. The gradient of
//! `‖r‖` at `r = 0` is taken as 0, as is the hinge subgradient at its kink.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::model::{ModelDims, NegativeForward, OutputGrads, PairForward};
use crate::numerics::{cosine_grad, cosine_similarity};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    Unsquared,
    Squared,
}

impl std::str::FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unsquared" => Ok(NormKind::Unsquared),
            "squared" => Ok(NormKind::Squared),
            other => Err(Error::invalid(format!(
                "unknown norm '{other}' (expected unsquared or squared)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub recons: f64,
    pub joint: f64,
    pub cross: f64,
    pub rank: f64,
    pub margin: f64,
    #[serde(default)]
    pub norm: NormKind,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights::new(1.0, 0.0, 0.0, 0.0)
    }
}

impl LossWeights {
    /// Weights in the order recons, joint, cross, rank; margin 0.5.
    pub fn new(recons: f64, joint: f64, cross: f64, rank: f64) -> Self {
        LossWeights {
            recons,
            joint,
            cross,
            rank,
            margin: 0.5,
            norm: NormKind::Unsquared,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let alphas = [self.recons, self.joint, self.cross, self.rank];
        if alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::invalid(format!(
                "loss weights must be finite and nonnegative, got {alphas:?}"
            )));
        }
        if alphas.iter().all(|&a| a == 0.0) {
            return Err(Error::invalid("all loss weights are zero"));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::invalid(format!("margin {} must be > 0", self.margin)));
        }
        Ok(())
    }
}

/// Per-term loss values of one evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recons: f64,
    pub joint: f64,
    pub cross: f64,
    pub rank: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn set(&mut self, term: &str, value: f64) {
        match term {
            "recons" => self.recons = value,
            "joint" => self.joint = value,
            "cross" => self.cross = value,
            "rank" => self.rank = value,
            _ => unreachable!("unregistered loss term {term}"),
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.recons, self.joint, self.cross, self.rank, self.total]
            .iter()
            .all(|x| x.is_finite())
    }

    pub fn add_scaled(&mut self, other: &LossBreakdown, s: f64) {
        self.recons += s * other.recons;
        self.joint += s * other.joint;
        self.cross += s * other.cross;
        self.rank += s * other.rank;
        self.total += s * other.total;
    }
}

impl std::fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "recons={} joint={} cross={} rank={} total={}",
            self.recons, self.joint, self.cross, self.rank, self.total
        )
    }
}

/// Everything a loss term may read: inputs, the six pass outputs and the
/// negative latents (when sampled).
#[derive(Debug, Clone, Copy)]
pub struct LossOperands<'a> {
    pub v: &'a [f64],
    pub t: &'a [f64],
    pub z_v: &'a [f64],
    pub z_t: &'a [f64],
    pub v_recon: &'a [f64],
    pub t_recon: &'a [f64],
    pub v_cross: &'a [f64],
    pub t_cross: &'a [f64],
    pub negatives: Option<(&'a [f64], &'a [f64])>,
}

impl<'a> LossOperands<'a> {
    pub fn from_forward(
        v: &'a [f64],
        t: &'a [f64],
        fwd: &'a PairForward,
        neg: Option<&'a NegativeForward>,
    ) -> Self {
        LossOperands {
            v,
            t,
            z_v: &fwd.z_v,
            z_t: &fwd.z_t,
            v_recon: &fwd.v_recon,
            t_recon: &fwd.t_recon,
            v_cross: &fwd.v_cross,
            t_cross: &fwd.t_cross,
            negatives: neg.map(|n| (n.z_v.as_slice(), n.z_t.as_slice())),
        }
    }

    fn dims(&self) -> ModelDims {
        ModelDims {
            c: self.v.len(),
            d: self.t.len(),
            z: self.z_v.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ModelDims { c, d, z } = self.dims();
        ensure_dim("reconstructed video", c, self.v_recon.len())?;
        ensure_dim("cross-decoded video", c, self.v_cross.len())?;
        ensure_dim("reconstructed text", d, self.t_recon.len())?;
        ensure_dim("cross-decoded text", d, self.t_cross.len())?;
        ensure_dim("text latent", z, self.z_t.len())?;
        if let Some((nv, nt)) = self.negatives {
            ensure_dim("negative video latent", z, nv.len())?;
            ensure_dim("negative text latent", z, nt.len())?;
        }
        Ok(())
    }
}

/// `‖a - b‖` (or its square) and its gradient with respect to `a`.
fn residual_norm(a: &[f64], b: &[f64], kind: NormKind) -> (f64, Vec<f64>) {
    let r: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let sq: f64 = r.iter().map(|x| x * x).sum();
    match kind {
        NormKind::Squared => (sq, r.iter().map(|x| 2.0 * x).collect()),
        NormKind::Unsquared => {
            let n = sq.sqrt();
            if n == 0.0 {
                (0.0, vec![0.0; r.len()])
            } else {
                (n, r.iter().map(|x| x / n).collect())
            }
        }
    }
}

fn accumulate(dst: &mut [f64], src: &[f64], scale: f64) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += scale * s);
}

/// Gradient sink: where a term adds `scale · ∂term/∂output`.
pub struct GradSink<'a> {
    pub grads: &'a mut OutputGrads,
    pub scale: f64,
}

pub trait LossTerm: Send + Sync {
    fn name(&self) -> &'static str;

    fn weight(&self, w: &LossWeights) -> f64;

    /// Loss value. When `sink` is given, also adds the scaled gradient.
    fn evaluate(
        &self,
        ops: &LossOperands,
        w: &LossWeights,
        sink: Option<GradSink<'_>>,
    ) -> Result<f64>;
}

pub struct Recons;
pub struct Joint;
pub struct Cross;
pub struct Rank;

impl LossTerm for Recons {
    fn name(&self) -> &'static str {
        "recons"
    }

    fn weight(&self, w: &LossWeights) -> f64 {
        w.recons
    }

    fn evaluate(&self, ops: &LossOperands, w: &LossWeights, sink: Option<GradSink<'_>>) -> Result<f64> {
        let (lv, gv) = residual_norm(ops.v_recon, ops.v, w.norm);
        let (lt, gt) = residual_norm(ops.t_recon, ops.t, w.norm);
        if let Some(s) = sink {
            accumulate(&mut s.grads.v_recon, &gv, s.scale);
            accumulate(&mut s.grads.t_recon, &gt, s.scale);
        }
        Ok(lv + lt)
    }
}

impl LossTerm for Joint {
    fn name(&self) -> &'static str {
        "joint"
    }

    fn weight(&self, w: &LossWeights) -> f64 {
        w.joint
    }

    fn evaluate(&self, ops: &LossOperands, w: &LossWeights, sink: Option<GradSink<'_>>) -> Result<f64> {
        let (l, g) = residual_norm(ops.z_v, ops.z_t, w.norm);
        if let Some(s) = sink {
            accumulate(&mut s.grads.z_v, &g, s.scale);
            accumulate(&mut s.grads.z_t, &g, -s.scale);
        }
        Ok(l)
    }
}

impl LossTerm for Cross {
    fn name(&self) -> &'static str {
        "cross"
    }

    fn weight(&self, w: &LossWeights) -> f64 {
        w.cross
    }

    fn evaluate(&self, ops: &LossOperands, w: &LossWeights, sink: Option<GradSink<'_>>) -> Result<f64> {
        let (lt, gt) = residual_norm(ops.t_cross, ops.t, w.norm);
        let (lv, gv) = residual_norm(ops.v_cross, ops.v, w.norm);
        if let Some(s) = sink {
            accumulate(&mut s.grads.t_cross, &gt, s.scale);
            accumulate(&mut s.grads.v_cross, &gv, s.scale);
        }
        Ok(lt + lv)
    }
}

impl LossTerm for Rank {
    fn name(&self) -> &'static str {
        "rank"
    }

    fn weight(&self, w: &LossWeights) -> f64 {
        w.rank
    }

    fn evaluate(&self, ops: &LossOperands, w: &LossWeights, sink: Option<GradSink<'_>>) -> Result<f64> {
        let (nv, nt) = ops
            .negatives
            .ok_or_else(|| Error::invalid("ranking loss needs a negative pair"))?;
        let (s1, g1v, g1t) = cosine_grad(ops.z_v, ops.z_t);
        let (s2, g2v, g2t) = cosine_grad(nv, nt);
        let value = rank_from_similarities(s1, s2, w.margin);
        if let Some(s) = sink {
            if value > 0.0 {
                accumulate(&mut s.grads.z_v, &g1v, -s.scale);
                accumulate(&mut s.grads.z_t, &g1t, -s.scale);
                accumulate(&mut s.grads.z_v_neg, &g2v, s.scale);
                accumulate(&mut s.grads.z_t_neg, &g2t, s.scale);
            }
        }
        Ok(value)
    }
}

static TERMS: [&dyn LossTerm; 4] = [&Recons, &Joint, &Cross, &Rank];

/// All registered loss terms in evaluation order.
pub fn loss_terms() -> &'static [&'static dyn LossTerm] {
    &TERMS
}

pub fn loss_term(name: &str) -> Result<&'static dyn LossTerm> {
    TERMS
        .iter()
        .copied()
        .find(|t| t.name() == name)
        .ok_or_else(|| Error::invalid(format!("unknown loss term '{name}'")))
}

/// `‖v̂ - v‖ + ‖t̂ - t‖` for same-modal reconstructions.
pub fn recons_loss(v: &[f64], t: &[f64], v_recon: &[f64], t_recon: &[f64]) -> Result<f64> {
    ensure_dim("reconstructed video", v.len(), v_recon.len())?;
    ensure_dim("reconstructed text", t.len(), t_recon.len())?;
    Ok(residual_norm(v_recon, v, NormKind::Unsquared).0 + residual_norm(t_recon, t, NormKind::Unsquared).0)
}

/// `‖z_v - z_t‖`
pub fn joint_loss(z_v: &[f64], z_t: &[f64]) -> Result<f64> {
    ensure_dim("latent pair", z_v.len(), z_t.len())?;
    Ok(residual_norm(z_v, z_t, NormKind::Unsquared).0)
}

/// `‖G_T(E_V(v)) - t‖ + ‖G_V(E_T(t)) - v‖`
pub fn cross_loss(v: &[f64], t: &[f64], v_cross: &[f64], t_cross: &[f64]) -> Result<f64> {
    ensure_dim("cross-decoded video", v.len(), v_cross.len())?;
    ensure_dim("cross-decoded text", t.len(), t_cross.len())?;
    Ok(residual_norm(t_cross, t, NormKind::Unsquared).0 + residual_norm(v_cross, v, NormKind::Unsquared).0)
}

/// `max(0, margin - (s1 - s2))`
pub fn rank_from_similarities(s1: f64, s2: f64, margin: f64) -> f64 {
    (margin - (s1 - s2)).max(0.0)
}

/// Margin ranking loss on latents, with `s1 = cos(z_v, z_t)` for the pair and
/// `s2 = cos(z_v_neg, z_t_neg)` for the unpaired sample.
pub fn rank_loss(z_v: &[f64], z_t: &[f64], z_v_neg: &[f64], z_t_neg: &[f64], margin: f64) -> Result<f64> {
    if !(margin > 0.0) {
        return Err(Error::invalid(format!("margin {margin} must be > 0")));
    }
    let s1 = cosine_similarity(z_v, z_t)?;
    let s2 = cosine_similarity(z_v_neg, z_t_neg)?;
    ensure_dim("negative latents", z_v.len(), z_v_neg.len())?;
    Ok(rank_from_similarities(s1, s2, margin))
}

/// Weighted sum of all registered terms. Returns the per-term values and,
/// when `with_grads`, the gradient of the total with respect to every output.
///
/// Terms with weight 0 are still evaluated for reporting, except `rank`
/// when no negatives were supplied.
pub fn total_loss(
    ops: &LossOperands,
    weights: &LossWeights,
    with_grads: bool,
) -> Result<(LossBreakdown, Option<OutputGrads>)> {
    weights.validate()?;
    ops.validate()?;
    let mut breakdown = LossBreakdown::default();
    let mut grads = with_grads.then(|| OutputGrads::zeros(ops.dims()));
    for term in loss_terms() {
        let alpha = term.weight(weights);
        if term.name() == "rank" && ops.negatives.is_none() {
            if alpha > 0.0 {
                return Err(Error::invalid("rank weight is positive but no negative pair was given"));
            }
            continue;
        }
        let sink = match (&mut grads, alpha > 0.0) {
            (Some(g), true) => Some(GradSink { grads: g, scale: alpha }),
            _ => None,
        };
        let value = term.evaluate(ops, weights, sink)?;
        breakdown.set(term.name(), value);
        breakdown.total += alpha * value;
    }
    Ok((breakdown, grads))
}
