//! No-U-Turn sampler with multinomial trajectory sampling, a diagonal
//! metric and windowed warmup adaptation.
//!
//! Step size is tuned by dual averaging and the metric by regularized
//! Welford variance over doubling windows. Both are frozen when warmup ends.

use rand::Rng;
use rand_distr::StandardNormal;

/// Differentiable log density on R^d.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log density at `x`, writing the gradient into `grad`.
    /// May return `-inf` or NaN; such points are treated as divergent.
    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NutsSettings {
    pub target_accept: f64,
    pub max_tree_depth: usize,
}

impl Default for NutsSettings {
    fn default() -> Self {
        Self {
            target_accept: 0.8,
            max_tree_depth: 10,
        }
    }
}

const MAX_DELTA_H: f64 = 1000.0;

#[derive(Debug, Clone)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    logp: f64,
    grad: Vec<f64>,
}

/// Per-transition statistics.
#[derive(Debug, Clone, Copy)]
pub struct TransitionInfo {
    pub accept_stat: f64,
    pub divergent: bool,
    pub depth: usize,
    pub n_leapfrog: usize,
}

/// Output of one chain.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub draws: Vec<Vec<f64>>,
    pub accept_stats: Vec<f64>,
    pub divergences: usize,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
}

struct Sampler<'a, T: LogDensity + ?Sized> {
    target: &'a T,
    inv_metric: Vec<f64>,
    eps: f64,
    max_depth: usize,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

impl<'a, T: LogDensity + ?Sized> Sampler<'a, T> {
    fn point(&self, q: Vec<f64>) -> Point {
        let mut grad = vec![0.0; q.len()];
        let logp = self.target.logp_grad(&q, &mut grad);
        Point {
            p: vec![0.0; q.len()],
            q,
            logp,
            grad,
        }
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
    }

    fn hamiltonian(&self, z: &Point) -> f64 {
        let h = -z.logp + self.kinetic(&z.p);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(p, m)| p * m).collect()
    }

    fn sample_momentum<R: Rng + ?Sized>(&self, z: &mut Point, rng: &mut R) {
        for (p, m) in z.p.iter_mut().zip(&self.inv_metric) {
            let n: f64 = rng.sample(StandardNormal);
            *p = n / m.sqrt();
        }
    }

    fn leapfrog(&self, z: &mut Point, eps: f64) {
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        z.logp = self.target.logp_grad(&z.q, &mut z.grad);
        if z.logp.is_finite() {
            for (p, g) in z.p.iter_mut().zip(&z.grad) {
                *p += 0.5 * eps * g;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree<R: Rng + ?Sized>(
        &self,
        depth: usize,
        z: &mut Point,
        z_propose: &mut Point,
        p_sharp_beg: &mut Vec<f64>,
        p_sharp_end: &mut Vec<f64>,
        rho: &mut Vec<f64>,
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        h0: f64,
        sign: f64,
        n_leapfrog: &mut usize,
        log_sum_weight: &mut f64,
        sum_metro_prob: &mut f64,
        rng: &mut R,
    ) -> bool {
        if depth == 0 {
            self.leapfrog(z, sign * self.eps);
            *n_leapfrog += 1;
            let h = self.hamiltonian(z);
            let divergent = h - h0 > MAX_DELTA_H;
            *log_sum_weight = log_add_exp(*log_sum_weight, h0 - h);
            *sum_metro_prob += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            z_propose.clone_from(z);
            *p_sharp_beg = self.sharp(&z.p);
            p_sharp_end.clone_from(p_sharp_beg);
            for (r, p) in rho.iter_mut().zip(&z.p) {
                *r += p;
            }
            p_beg.clone_from(&z.p);
            p_end.clone_from(&z.p);
            return !divergent;
        }

        let d = z.q.len();
        let mut p_sharp_init_end = vec![0.0; d];
        let mut p_init_end = vec![0.0; d];
        let mut rho_init = vec![0.0; d];
        let mut lsw_init = f64::NEG_INFINITY;
        let valid_init = self.build_tree(
            depth - 1,
            z,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            h0,
            sign,
            n_leapfrog,
            &mut lsw_init,
            sum_metro_prob,
            rng,
        );
        if !valid_init {
            return false;
        }

        let mut z_propose_final = z.clone();
        let mut p_sharp_final_beg = vec![0.0; d];
        let mut p_final_beg = vec![0.0; d];
        let mut rho_final = vec![0.0; d];
        let mut lsw_final = f64::NEG_INFINITY;
        let valid_final = self.build_tree(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            h0,
            sign,
            n_leapfrog,
            &mut lsw_final,
            sum_metro_prob,
            rng,
        );
        if !valid_final {
            return false;
        }

        let lsw_subtree = log_add_exp(lsw_init, lsw_final);
        *log_sum_weight = log_add_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree || rng.random::<f64>() < (lsw_final - lsw_subtree).exp() {
            *z_propose = z_propose_final;
        }

        let rho_subtree = add(&rho_init, &rho_final);
        for (r, s) in rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        no_u_turn(p_sharp_beg, p_sharp_end, &rho_subtree)
            && no_u_turn(p_sharp_beg, &p_sharp_final_beg, &add(&rho_init, &p_final_beg))
            && no_u_turn(&p_sharp_init_end, p_sharp_end, &add(&rho_final, &p_init_end))
    }

    fn transition<R: Rng + ?Sized>(&self, current: &Point, rng: &mut R) -> (Point, TransitionInfo) {
        let mut z = current.clone();
        self.sample_momentum(&mut z, rng);
        let h0 = self.hamiltonian(&z);

        let mut z_fwd = z.clone();
        let mut z_bck = z.clone();
        let mut z_sample = z.clone();
        let mut z_propose = z.clone();

        let mut p_fwd_fwd = z.p.clone();
        let mut p_sharp_fwd_fwd = self.sharp(&z.p);
        let mut p_fwd_bck = z.p.clone();
        let mut p_sharp_fwd_bck = p_sharp_fwd_fwd.clone();
        let mut p_bck_fwd = z.p.clone();
        let mut p_sharp_bck_fwd = p_sharp_fwd_fwd.clone();
        let mut p_bck_bck = z.p.clone();
        let mut p_sharp_bck_bck = p_sharp_fwd_fwd.clone();

        let mut rho = z.p.clone();
        let mut log_sum_weight = 0.0;
        let mut n_leapfrog = 0;
        let mut sum_metro_prob = 0.0;
        let mut depth = 0;
        let mut divergent = false;
        let d = z.q.len();

        while depth < self.max_depth {
            let mut rho_fwd = vec![0.0; d];
            let mut rho_bck = vec![0.0; d];
            let mut lsw_subtree = f64::NEG_INFINITY;

            let valid = if rng.random::<f64>() > 0.5 {
                z.clone_from(&z_fwd);
                rho_bck.clone_from(&rho);
                p_bck_fwd.clone_from(&p_fwd_bck);
                p_sharp_bck_fwd.clone_from(&p_sharp_fwd_bck);
                let v = self.build_tree(
                    depth,
                    &mut z,
                    &mut z_propose,
                    &mut p_sharp_fwd_bck,
                    &mut p_sharp_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    h0,
                    1.0,
                    &mut n_leapfrog,
                    &mut lsw_subtree,
                    &mut sum_metro_prob,
                    rng,
                );
                z_fwd.clone_from(&z);
                v
            } else {
                z.clone_from(&z_bck);
                rho_fwd.clone_from(&rho);
                p_fwd_bck.clone_from(&p_bck_fwd);
                p_sharp_fwd_bck.clone_from(&p_sharp_bck_fwd);
                let v = self.build_tree(
                    depth,
                    &mut z,
                    &mut z_propose,
                    &mut p_sharp_bck_fwd,
                    &mut p_sharp_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    h0,
                    -1.0,
                    &mut n_leapfrog,
                    &mut lsw_subtree,
                    &mut sum_metro_prob,
                    rng,
                );
                z_bck.clone_from(&z);
                v
            };

            if !valid {
                divergent = self.hamiltonian(&z) - h0 > MAX_DELTA_H;
                break;
            }
            depth += 1;

            if lsw_subtree > log_sum_weight || rng.random::<f64>() < (lsw_subtree - log_sum_weight).exp() {
                z_sample.clone_from(&z_propose);
            }
            log_sum_weight = log_add_exp(log_sum_weight, lsw_subtree);

            rho = add(&rho_bck, &rho_fwd);
            let persist = no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho)
                && no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_bck, &add(&rho_bck, &p_fwd_bck))
                && no_u_turn(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &add(&rho_fwd, &p_bck_fwd));
            if !persist {
                break;
            }
        }

        let accept_stat = if n_leapfrog > 0 {
            sum_metro_prob / n_leapfrog as f64
        } else {
            0.0
        };
        (
            z_sample,
            TransitionInfo {
                accept_stat,
                divergent,
                depth,
                n_leapfrog,
            },
        )
    }

    /// Heuristic initial step size: double or halve until the one-step
    /// acceptance crosses 0.8.
    fn init_step_size<R: Rng + ?Sized>(&mut self, current: &Point, rng: &mut R) {
        let probe = |s: &Self, rng: &mut R| {
            let mut z = current.clone();
            s.sample_momentum(&mut z, rng);
            let h0 = s.hamiltonian(&z);
            s.leapfrog(&mut z, s.eps);
            h0 - s.hamiltonian(&z)
        };
        let target = 0.8f64.ln();
        let direction = if probe(self, rng) > target { 1.0 } else { -1.0 };
        for _ in 0..100 {
            let delta_h = probe(self, rng);
            if direction > 0.0 && !(delta_h > target) || direction < 0.0 && !(delta_h < target) {
                break;
            }
            self.eps = if direction > 0.0 { self.eps * 2.0 } else { self.eps * 0.5 };
            if !(self.eps > 1e-12 && self.eps < 1e7) {
                self.eps = self.eps.clamp(1e-12, 1e7);
                break;
            }
        }
    }
}

/// Dual-averaging step-size adaptation.
#[derive(Debug, Clone)]
struct DualAveraging {
    mu: f64,
    delta: f64,
    s_bar: f64,
    x_bar: f64,
    counter: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps: f64, delta: f64) -> Self {
        Self {
            mu: (10.0 * eps).ln(),
            delta,
            s_bar: 0.0,
            x_bar: 0.0,
            counter: 0.0,
        }
    }

    fn learn(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let a = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + Self::T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / Self::GAMMA;
        let x_eta = self.counter.powf(-Self::KAPPA);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

#[derive(Debug, Clone)]
struct Welford {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(d: usize) -> Self {
        Self {
            n: 0.0,
            mean: vec![0.0; d],
            m2: vec![0.0; d],
        }
    }

    fn add(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / self.n;
            *s += delta * (v - *m);
        }
    }

    /// Variance shrunk toward 1e-3, as in common NUTS implementations.
    fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n;
        self.m2
            .iter()
            .map(|s| {
                let var = s / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

/// Slow adaptation windows `[start, end)` for a warmup of `n` iterations.
pub(crate) fn metric_windows(n: usize) -> Vec<(usize, usize)> {
    if n < 20 {
        return Vec::new();
    }
    let (init, term, base) = if 75 + 50 + 25 > n {
        let init = (0.15 * n as f64) as usize;
        let term = (0.1 * n as f64) as usize;
        (init, term, n - init - term)
    } else {
        (75, 50, 25)
    };
    let last = n - term;
    let mut windows = Vec::new();
    let mut start = init;
    let mut size = base;
    while start < last {
        let mut end = start + size;
        if end + 2 * size > last {
            end = last;
        }
        windows.push((start, end));
        start = end;
        size *= 2;
    }
    windows
}

/// Run one chain: `warmup` adaptive transitions then `draws` transitions
/// with frozen step size and metric. Only post-warmup states are returned.
pub fn run_chain<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    init: Vec<f64>,
    warmup: usize,
    draws: usize,
    settings: NutsSettings,
    rng: &mut R,
) -> ChainOutput {
    let d = target.dim();
    let mut sampler = Sampler {
        target,
        inv_metric: vec![1.0; d],
        eps: 1.0,
        max_depth: settings.max_tree_depth,
    };
    let mut z = sampler.point(init);
    sampler.init_step_size(&z, rng);
    let mut da = DualAveraging::new(sampler.eps, settings.target_accept);
    let windows = metric_windows(warmup);
    let mut welford = Welford::new(d);

    for it in 0..warmup {
        let (next, info) = sampler.transition(&z, rng);
        z = next;
        sampler.eps = da.learn(info.accept_stat);
        if let Some(&(_, end)) = windows.iter().find(|(s, e)| it >= *s && it < *e) {
            welford.add(&z.q);
            if it + 1 == end {
                sampler.inv_metric = welford.regularized_variance();
                welford = Welford::new(d);
                sampler.init_step_size(&z, rng);
                da = DualAveraging::new(sampler.eps, settings.target_accept);
            }
        }
    }
    if warmup > 0 {
        sampler.eps = da.final_step();
    }

    let mut out = ChainOutput {
        draws: Vec::with_capacity(draws),
        accept_stats: Vec::with_capacity(draws),
        divergences: 0,
        step_size: sampler.eps,
        inv_metric: sampler.inv_metric.clone(),
    };
    for _ in 0..draws {
        let (next, info) = sampler.transition(&z, rng);
        z = next;
        out.draws.push(z.q.clone());
        out.accept_stats.push(info.accept_stat);
        out.divergences += usize::from(info.divergent);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    struct Gaussian {
        mean: Vec<f64>,
        sd: Vec<f64>,
    }

    impl LogDensity for Gaussian {
        fn dim(&self) -> usize {
            self.mean.len()
        }
        fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let mut lp = 0.0;
            for i in 0..x.len() {
                let z = (x[i] - self.mean[i]) / self.sd[i];
                lp -= 0.5 * z * z;
                grad[i] = -z / self.sd[i];
            }
            lp
        }
    }

    #[test]
    fn windows_cover_warmup_500() {
        assert_eq!(metric_windows(500), vec![(75, 100), (100, 150), (150, 250), (250, 450)]);
        let w = metric_windows(100);
        assert_eq!(w.first().unwrap().0, 15);
        assert_eq!(w.last().unwrap().1, 90);
        assert!(metric_windows(10).is_empty());
    }

    #[test]
    fn samples_scaled_gaussian() {
        let target = Gaussian {
            mean: vec![1.0, -3.0, 100.0],
            sd: vec![0.01, 1.0, 30.0],
        };
        let mut rng = stream(42, Domain::Chain, 0);
        let out = run_chain(&target, vec![0.0, 0.0, 0.0], 1000, 4000, NutsSettings::default(), &mut rng);
        assert_eq!(out.draws.len(), 4000);
        for i in 0..3 {
            let xs: Vec<f64> = out.draws.iter().map(|d| d[i]).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            assert!((m - target.mean[i]).abs() < 0.1 * target.sd[i], "mean {i}: {m}");
            assert!((v.sqrt() / target.sd[i] - 1.0).abs() < 0.1, "sd {i}: {}", v.sqrt());
        }
        let acc = out.accept_stats.iter().sum::<f64>() / out.accept_stats.len() as f64;
        assert!((0.6..0.97).contains(&acc), "accept {acc}");
        assert_eq!(out.divergences, 0);
    }

    #[test]
    fn deterministic_given_rng() {
        let target = Gaussian {
            mean: vec![0.0, 0.0],
            sd: vec![1.0, 2.0],
        };
        let run = || {
            let mut rng = stream(9, Domain::Chain, 3);
            run_chain(&target, vec![0.5, 0.5], 200, 300, NutsSettings::default(), &mut rng).draws
        };
        assert_eq!(run(), run());
    }
}
