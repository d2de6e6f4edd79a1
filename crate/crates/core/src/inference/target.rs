//! Unconstrained posterior density for gradient-based sampling.

use crate::error::Result;
use crate::series::Co2Series;

use super::likelihood::EmStats;
use super::nuts::LogDensity;
use super::prior::{Param, ParamDraw, PriorSet, PriorSpec};

/// Map from an unconstrained coordinate `u` to a parameter value `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    /// `x = lo + (hi - lo) sigmoid(u)`
    Logit { lo: f64, hi: f64 },
    /// `x = lo + exp(u)`
    Log { lo: f64 },
    Identity,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

impl Transform {
    pub fn for_support(lo: f64, hi: f64) -> Self {
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => Transform::Logit { lo, hi },
            (true, false) => Transform::Log { lo },
            _ => Transform::Identity,
        }
    }

    /// `(x, log|dx/du|, dx/du, d log|dx/du| / du)`
    pub fn forward(&self, u: f64) -> (f64, f64, f64, f64) {
        match *self {
            Transform::Logit { lo, hi } => {
                let s = sigmoid(u);
                let w = hi - lo;
                let x = (lo + w * s).clamp(lo, hi);
                (x, w.ln() - softplus(-u) - softplus(u), w * s * (1.0 - s), 1.0 - 2.0 * s)
            }
            Transform::Log { lo } => {
                let e = u.exp();
                (lo + e, u, e, 1.0)
            }
            Transform::Identity => (u, 0.0, 1.0, 0.0),
        }
    }

    pub fn inverse(&self, x: f64) -> f64 {
        match *self {
            Transform::Logit { lo, hi } => {
                let p = (x - lo) / (hi - lo);
                (p / (1.0 - p)).ln()
            }
            Transform::Log { lo } => (x - lo).ln(),
            Transform::Identity => x,
        }
    }
}

/// Log posterior over the free parameters in unconstrained space, with the
/// Jacobian of the transforms folded in. Fixed parameters are held at their
/// pinned values.
#[derive(Debug, Clone)]
pub struct PosteriorTarget {
    stats: EmStats,
    priors: PriorSet,
    free: Vec<Param>,
    transforms: Vec<Transform>,
    base: [f64; 4],
}

impl PosteriorTarget {
    pub fn new(priors: &PriorSet, data: &Co2Series, volume_l: f64) -> Result<Self> {
        priors.validate()?;
        let stats = EmStats::new(data, volume_l)?;
        let free = priors.free_params();
        let transforms = free
            .iter()
            .map(|&p| {
                let (lo, hi) = priors.get(p).support(p);
                Transform::for_support(lo, hi)
            })
            .collect();
        let mut base = [0.0; 4];
        for p in Param::ALL {
            if let PriorSpec::Fixed { value } = *priors.get(p) {
                base[p.index()] = value;
            }
        }
        Ok(Self {
            stats,
            priors: *priors,
            free,
            transforms,
            base,
        })
    }

    pub fn free_params(&self) -> &[Param] {
        &self.free
    }

    pub fn stats(&self) -> &EmStats {
        &self.stats
    }

    /// Log posterior and its gradient in constrained coordinates
    /// (column order q_ach, c_out_ppm, e_lps, sigma).
    pub fn log_posterior_grad(&self, draw: &ParamDraw) -> (f64, [f64; 4]) {
        let mut value = 0.0;
        let mut grad = [0.0; 4];
        for p in Param::ALL {
            let (lp, g) = self.priors.get(p).log_density_grad(p, draw.get(p));
            value += lp;
            grad[p.index()] = g;
        }
        if value == f64::NEG_INFINITY {
            return (value, [0.0; 4]);
        }
        let ll = self.stats.log_likelihood_grad(draw);
        for (g, l) in grad.iter_mut().zip(ll.grad) {
            *g += l;
        }
        (value + ll.value, grad)
    }

    /// Constrained draw for an unconstrained position.
    pub fn to_draw(&self, u: &[f64]) -> ParamDraw {
        let mut v = self.base;
        for ((p, t), &ui) in self.free.iter().zip(&self.transforms).zip(u) {
            v[p.index()] = t.forward(ui).0;
        }
        ParamDraw::from_array(v)
    }

    /// Unconstrained position of a draw; `None` if a free coordinate sits on
    /// its support boundary.
    pub fn to_unconstrained(&self, draw: &ParamDraw) -> Option<Vec<f64>> {
        let u: Vec<f64> = self
            .free
            .iter()
            .zip(&self.transforms)
            .map(|(p, t)| t.inverse(draw.get(*p)))
            .collect();
        u.iter().all(|x| x.is_finite()).then_some(u)
    }
}

impl LogDensity for PosteriorTarget {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn logp_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let mut v = self.base;
        let mut jac = Vec::with_capacity(self.free.len());
        let mut log_jac = 0.0;
        for ((p, t), &ui) in self.free.iter().zip(&self.transforms).zip(u) {
            let (x, lj, dx, dlj) = t.forward(ui);
            v[p.index()] = x;
            log_jac += lj;
            jac.push((dx, dlj));
        }
        let (lp, g) = self.log_posterior_grad(&ParamDraw::from_array(v));
        for ((gi, p), (dx, dlj)) in grad.iter_mut().zip(&self.free).zip(jac) {
            *gi = g[p.index()] * dx + dlj;
        }
        lp + log_jac
    }
}
