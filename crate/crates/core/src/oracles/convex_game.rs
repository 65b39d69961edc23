//! Convex bounded zero-sum game between a projected-OGD learner and an
//! exponentiated-gradient adversary over group weights.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Check;
use crate::error::{argument, Result};
use crate::numeric::{log_sum_exp, norm2, softmax};
use crate::rng::{substream, Stream};

/// Group loss `offset + scale * ||theta - center||^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticGroup {
    pub offset: f64,
    pub scale: f64,
    pub center: Vec<f64>,
}

impl QuadraticGroup {
    pub fn value(&self, theta: &[f64]) -> f64 {
        let sq: f64 = theta.iter().zip(&self.center).map(|(t, c)| (t - c) * (t - c)).sum();
        self.offset + self.scale * sq
    }

    fn add_gradient(&self, theta: &[f64], weight: f64, out: &mut [f64]) {
        for ((o, t), c) in out.iter_mut().zip(theta).zip(&self.center) {
            *o += weight * 2.0 * self.scale * (t - c);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexGameSpec {
    pub dimension: usize,
    /// The feasible set is the centered l2 ball of this radius (diameter twice this).
    pub radius: f64,
    pub groups: Vec<QuadraticGroup>,
    pub horizon: usize,
    /// Radius of the bounded spherical noise added to learner gradients.
    pub noise: f64,
    /// Overrides for the theorem's step sizes.
    pub learner_step: Option<f64>,
    pub adversary_step: Option<f64>,
}

/// Constants of the convex bounded regime for a spec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameConstants {
    pub diameter: f64,
    pub lipschitz: f64,
    pub loss_bound: f64,
    pub second_moment: f64,
}

impl ConvexGameSpec {
    /// Random instance with centers spread so some optima sit on the boundary.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, dimension: usize, groups: usize, horizon: usize, noise: f64) -> Self {
        let radius = 1.0;
        let groups = (0..groups)
            .map(|_| {
                let r = rng.random_range(0.0..1.8);
                let mut c: Vec<f64> = (0..dimension).map(|_| StandardNormal.sample(rng)).collect();
                let n = norm2(&c).max(1e-12);
                c.iter_mut().for_each(|x| *x *= r / n);
                QuadraticGroup {
                    offset: rng.random_range(0.0..0.5),
                    scale: rng.random_range(0.05..0.5),
                    center: c,
                }
            })
            .collect();
        Self {
            dimension,
            radius,
            groups,
            horizon,
            noise,
            learner_step: None,
            adversary_step: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.groups.is_empty() || self.horizon == 0 {
            return Err(argument("game needs a positive dimension, groups and horizon"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) || !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(argument("radius must be positive and noise nonnegative"));
        }
        for g in &self.groups {
            if g.center.len() != self.dimension {
                return Err(argument("group center dimension mismatch"));
            }
            if !(g.offset >= 0.0 && g.scale > 0.0) {
                return Err(argument("group losses need offset >= 0 and scale > 0"));
            }
        }
        Ok(())
    }

    pub fn constants(&self) -> GameConstants {
        let r = self.radius;
        let mut lipschitz: f64 = 0.0;
        let mut loss_bound: f64 = 0.0;
        for g in &self.groups {
            let far = r + norm2(&g.center);
            lipschitz = lipschitz.max(2.0 * g.scale * far);
            loss_bound = loss_bound.max(g.offset + g.scale * far * far);
        }
        GameConstants {
            diameter: 2.0 * r,
            lipschitz,
            loss_bound,
            // Spherical noise is mean-zero with squared norm exactly noise^2.
            second_moment: lipschitz * lipschitz + self.noise * self.noise,
        }
    }

    /// Step sizes minimizing the theorem bound: `D/(G_sg sqrt T)` and `sqrt(8 log B / (M^2 T))`.
    pub fn step_sizes(&self) -> (f64, f64) {
        let c = self.constants();
        let t = self.horizon as f64;
        let b = self.groups.len() as f64;
        let learner = self.learner_step.unwrap_or(c.diameter / (c.second_moment.sqrt() * t.sqrt()));
        let adversary = self
            .adversary_step
            .unwrap_or((8.0 * b.ln() / (c.loss_bound * c.loss_bound * t)).sqrt());
        (learner, adversary)
    }

    pub fn theoretical_bound(&self) -> f64 {
        let c = self.constants();
        let (eta_theta, eta_q) = self.step_sizes();
        let t = self.horizon as f64;
        let b = self.groups.len() as f64;
        let mut bound = c.diameter * c.diameter / (2.0 * eta_theta * t) + eta_theta * c.second_moment / 2.0;
        if b > 1.0 {
            bound += b.ln() / (eta_q * t) + eta_q * c.loss_bound * c.loss_bound / 8.0;
        }
        bound
    }

    /// Samples ball points and confirms losses lie in `[0, M]` with gradient norm at most `G`.
    pub fn sampled_assumption_checks<R: Rng + ?Sized>(&self, rng: &mut R, points: usize) -> Vec<Check> {
        let c = self.constants();
        let mut worst_loss: f64 = 0.0;
        let mut min_loss = f64::INFINITY;
        let mut worst_grad: f64 = 0.0;
        for _ in 0..points {
            let theta = self.random_ball_point(rng);
            for g in &self.groups {
                let v = g.value(&theta);
                worst_loss = worst_loss.max(v);
                min_loss = min_loss.min(v);
                let mut grad = vec![0.0; self.dimension];
                g.add_gradient(&theta, 1.0, &mut grad);
                worst_grad = worst_grad.max(norm2(&grad));
            }
        }
        vec![
            Check::le("sampled_loss_le_m", worst_loss, c.loss_bound),
            Check::le("sampled_loss_ge_zero", -min_loss, 0.0),
            Check::le("sampled_gradient_le_g", worst_grad, c.lipschitz),
        ]
    }

    fn random_ball_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let dir = random_unit(rng, self.dimension);
        let r = self.radius * rng.random::<f64>().powf(1.0 / self.dimension as f64);
        dir.into_iter().map(|x| x * r).collect()
    }

    fn weighted_gradient(&self, theta: &[f64], q: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.dimension];
        for (g, &w) in self.groups.iter().zip(q) {
            g.add_gradient(theta, w, &mut grad);
        }
        grad
    }

    fn weighted_value(&self, theta: &[f64], q: &[f64]) -> f64 {
        self.groups.iter().zip(q).map(|(g, w)| w * g.value(theta)).sum()
    }
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm2(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn project_ball(theta: &mut [f64], radius: f64) {
    let n = norm2(theta);
    if n > radius {
        theta.iter_mut().for_each(|x| *x *= radius / n);
    }
}

/// Result of the inner minimization over the ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerSolution {
    pub theta: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Accelerated projected gradient for `min_theta f(theta, q)` over the ball, stopped when the
/// gradient-mapping norm falls below `tol`.
pub fn minimize_weighted_loss(spec: &ConvexGameSpec, q: &[f64], tol: f64) -> InnerSolution {
    let smooth: f64 = spec.groups.iter().zip(q).map(|(g, w)| 2.0 * g.scale * w).sum();
    let step = 1.0 / smooth.max(1e-300);
    let mut x = vec![0.0; spec.dimension];
    let mut y = x.clone();
    let mut t = 1.0f64;
    let max_iter = 200_000;
    for it in 0..max_iter {
        let grad = spec.weighted_gradient(&y, q);
        let mut next: Vec<f64> = y.iter().zip(&grad).map(|(yi, gi)| yi - step * gi).collect();
        project_ball(&mut next, spec.radius);
        let mapping: f64 = next.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / step;
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let momentum = (t - 1.0) / t_next;
        y = next.iter().zip(&x).map(|(n, o)| n + momentum * (n - o)).collect();
        x = next;
        t = t_next;
        if mapping <= tol {
            let value = spec.weighted_value(&x, q);
            return InnerSolution {
                theta: x,
                value,
                converged: true,
                iterations: it + 1,
            };
        }
    }
    let value = spec.weighted_value(&x, q);
    InnerSolution {
        theta: x,
        value,
        converged: false,
        iterations: max_iter,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameReport {
    pub seed: u64,
    pub horizon: usize,
    pub learner_step: f64,
    pub adversary_step: f64,
    pub constants: GameConstants,
    pub final_theta: Vec<f64>,
    pub final_q: Vec<f64>,
    pub theta_bar: Vec<f64>,
    pub q_bar: Vec<f64>,
    /// `max_b L_b(theta_bar) - min_theta f(theta, q_bar)`
    pub measured_gap: f64,
    pub bound: f64,
    pub inner: InnerSolution,
    /// False when the inner solver did not converge; the gap is then unreliable.
    pub valid: bool,
}

/// Plays the game for `spec.horizon` rounds with learner noise drawn from `seed`.
pub fn run_convex_game(spec: &ConvexGameSpec, seed: u64) -> Result<GameReport> {
    spec.validate()?;
    let (eta_theta, eta_q) = spec.step_sizes();
    let d = spec.dimension;
    let b = spec.groups.len();
    let mut rng = substream(seed, 0, Stream::Oracle, 0);

    let mut theta = vec![0.0; d];
    let mut log_q = vec![0.0; b];
    let mut theta_sum = vec![0.0; d];
    let mut q_sum = vec![0.0; b];
    let mut q = softmax(&log_q);
    for _ in 0..spec.horizon {
        q = softmax(&log_q);
        theta_sum.iter_mut().zip(&theta).for_each(|(s, x)| *s += x);
        q_sum.iter_mut().zip(&q).for_each(|(s, x)| *s += x);

        let losses: Vec<f64> = spec.groups.iter().map(|g| g.value(&theta)).collect();
        let mut grad = spec.weighted_gradient(&theta, &q);
        if spec.noise > 0.0 {
            let dir = random_unit(&mut rng, d);
            grad.iter_mut().zip(dir).for_each(|(g, u)| *g += spec.noise * u);
        }
        theta.iter_mut().zip(&grad).for_each(|(x, g)| *x -= eta_theta * g);
        project_ball(&mut theta, spec.radius);
        log_q.iter_mut().zip(&losses).for_each(|(l, loss)| *l += eta_q * loss);
        // Keep the log-weights bounded; softmax is shift invariant.
        let shift = log_sum_exp(&log_q);
        log_q.iter_mut().for_each(|l| *l -= shift);
    }
    let t = spec.horizon as f64;
    let theta_bar: Vec<f64> = theta_sum.iter().map(|s| s / t).collect();
    let q_bar: Vec<f64> = q_sum.iter().map(|s| s / t).collect();
    let worst = spec
        .groups
        .iter()
        .map(|g| g.value(&theta_bar))
        .fold(f64::NEG_INFINITY, f64::max);
    let inner = minimize_weighted_loss(spec, &q_bar, 1e-8);
    Ok(GameReport {
        seed,
        horizon: spec.horizon,
        learner_step: eta_theta,
        adversary_step: eta_q,
        constants: spec.constants(),
        final_theta: theta,
        final_q: q,
        theta_bar,
        q_bar,
        measured_gap: worst - inner.value,
        bound: spec.theoretical_bound(),
        valid: inner.converged,
        inner,
    })
}

/// Mean measured gap over seeds `0..seeds`, computed in parallel.
pub fn mean_gap_over_seeds(spec: &ConvexGameSpec, seeds: u64) -> Result<(f64, bool)> {
    let reports: Vec<GameReport> = (0..seeds)
        .into_par_iter()
        .map(|s| run_convex_game(spec, s))
        .collect::<Result<_>>()?;
    let mean = reports.iter().map(|r| r.measured_gap).sum::<f64>() / seeds as f64;
    Ok((mean, reports.iter().all(|r| r.valid)))
}
