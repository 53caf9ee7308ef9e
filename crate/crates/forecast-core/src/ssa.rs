//! Velocity-based population optimizer: each individual carries a position
//! and velocity, attracted toward its personal best and the swarm's global
//! best under decaying inertia. Used generically on analytic objectives and
//! specifically to tune the forecaster's hyperparameters against validation
//! loss. Minimization throughout.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_model, train, HyperParams};
use crate::preprocess::WindowedDataset;
use crate::rng::RngStream;

/// Swarm geometry and update coefficients. Inertia decays linearly from
/// `alpha_start` to `alpha_end` across iterations; `beta` weighs attraction
/// to the global best and `gamma` to the personal best.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsaConfig {
    pub population_size: usize,
    pub max_iterations: usize,
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub beta: f64,
    pub gamma: f64,
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
}

impl SsaConfig {
    pub fn new(bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        SsaConfig {
            population_size: 20,
            max_iterations: 100,
            alpha_start: 0.9,
            alpha_end: 0.4,
            beta: 1.5,
            gamma: 1.5,
            bounds,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::Config(format!(
                "population_size must be at least 2, got {}",
                self.population_size
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if self.bounds.is_empty() {
            return Err(Error::Config("bounds must name at least one dimension".into()));
        }
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::Config(format!(
                    "bounds[{i}] requires lo < hi, got ({lo}, {hi})"
                )));
            }
        }
        for (name, v) in [
            ("alpha_start", self.alpha_start),
            ("alpha_end", self.alpha_end),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn dimensions(&self) -> usize {
        self.bounds.len()
    }

    /// Linear inertia schedule over `[0, max_iterations)`.
    pub fn alpha_at(&self, iteration: usize) -> f64 {
        if self.max_iterations <= 1 {
            return self.alpha_start;
        }
        let t = iteration as f64 / (self.max_iterations - 1) as f64;
        self.alpha_start + (self.alpha_end - self.alpha_start) * t
    }
}

/// One individual: position, velocity, and its personal best.
#[derive(Debug, Clone)]
pub struct SparrowState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub personal_best: Vec<f64>,
    pub personal_best_fitness: f64,
}

/// The whole population plus the global best found so far.
#[derive(Debug, Clone)]
pub struct SwarmState {
    pub sparrows: Vec<SparrowState>,
    pub global_best: Vec<f64>,
    pub global_best_fitness: f64,
    pub iteration: usize,
}

/// Objective under minimization. `eval_index` is a stable counter across the
/// run so stochastic objectives can derive a per-call seed.
pub trait Objective: Sync {
    fn evaluate(&self, x: &[f64], eval_index: u64) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for F {
    fn evaluate(&self, x: &[f64], _eval_index: u64) -> f64 {
        self(x)
    }
}

/// Objective value with the non-finite guard: NaN or infinite values become
/// +inf so the individual survives but never becomes a best.
pub fn evaluate_fitness(objective: &dyn Objective, x: &[f64], eval_index: u64) -> f64 {
    let f = objective.evaluate(x, eval_index);
    if f.is_finite() {
        f
    } else {
        f64::INFINITY
    }
}

fn evaluate_all(
    objective: &(impl Objective + ?Sized),
    positions: &[Vec<f64>],
    first_eval_index: u64,
) -> Vec<f64> {
    positions
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let f = objective.evaluate(x, first_eval_index + i as u64);
            if f.is_finite() {
                f
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// Uniform positions within bounds, zero velocities, personal bests at the
/// evaluated initial positions, global best at their argmin.
pub fn init_population(
    config: &SsaConfig,
    objective: &(impl Objective + ?Sized),
    rng: &mut RngStream,
) -> Result<SwarmState> {
    config.validate()?;
    let dims = config.dimensions();
    let positions: Vec<Vec<f64>> = (0..config.population_size)
        .map(|_| {
            config
                .bounds
                .iter()
                .map(|&(lo, hi)| rng.uniform_scalar(lo, hi))
                .collect()
        })
        .collect();
    let fitnesses = evaluate_all(objective, &positions, 0);
    let sparrows: Vec<SparrowState> = positions
        .into_iter()
        .zip(&fitnesses)
        .map(|(position, &fitness)| SparrowState {
            velocity: vec![0.0; dims],
            personal_best: position.clone(),
            personal_best_fitness: fitness,
            position,
        })
        .collect();
    let best_idx = argmin(&fitnesses);
    Ok(SwarmState {
        global_best: sparrows[best_idx].personal_best.clone(),
        global_best_fitness: sparrows[best_idx].personal_best_fitness,
        sparrows,
        iteration: 0,
    })
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Velocity rule with explicit random vectors:
/// `v' = alpha*v + beta*r1.*(p_g - x) + gamma*r2.*(p_i - x)`.
pub fn velocity_update_with(
    sparrow: &SparrowState,
    global_best: &[f64],
    alpha: f64,
    beta: f64,
    gamma: f64,
    r1: &[f64],
    r2: &[f64],
) -> Vec<f64> {
    (0..sparrow.velocity.len())
        .map(|d| {
            alpha * sparrow.velocity[d]
                + beta * r1[d] * (global_best[d] - sparrow.position[d])
                + gamma * r2[d] * (sparrow.personal_best[d] - sparrow.position[d])
        })
        .collect()
}

/// Velocity rule sampling `r1, r2` componentwise uniform in [0,1).
pub fn velocity_update(
    sparrow: &SparrowState,
    global_best: &[f64],
    alpha: f64,
    beta: f64,
    gamma: f64,
    rng: &mut RngStream,
) -> Vec<f64> {
    let dims = sparrow.velocity.len();
    let r1: Vec<f64> = (0..dims).map(|_| rng.next_f64()).collect();
    let r2: Vec<f64> = (0..dims).map(|_| rng.next_f64()).collect();
    velocity_update_with(sparrow, global_best, alpha, beta, gamma, &r1, &r2)
}

/// Position rule `x' = x + v`, clamped componentwise to bounds; clamped
/// components get their velocity zeroed. Returns `(x', v')`.
pub fn position_update(
    position: &[f64],
    velocity: &[f64],
    bounds: &[(f64, f64)],
) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(position.len());
    let mut v = Vec::with_capacity(velocity.len());
    for d in 0..position.len() {
        let raw = position[d] + velocity[d];
        let (lo, hi) = bounds[d];
        if raw < lo {
            x.push(lo);
            v.push(0.0);
        } else if raw > hi {
            x.push(hi);
            v.push(0.0);
        } else {
            x.push(raw);
            v.push(velocity[d]);
        }
    }
    (x, v)
}

/// Personal bests replaced on strict improvement; global best is the argmin
/// over personal bests (first index on ties) and never worsens.
pub fn update_bests(swarm: &mut SwarmState, fitnesses: &[f64]) {
    debug_assert_eq!(fitnesses.len(), swarm.sparrows.len());
    for (sparrow, &fitness) in swarm.sparrows.iter_mut().zip(fitnesses) {
        if fitness < sparrow.personal_best_fitness {
            sparrow.personal_best_fitness = fitness;
            sparrow.personal_best = sparrow.position.clone();
        }
    }
    let best_idx = argmin(
        &swarm
            .sparrows
            .iter()
            .map(|s| s.personal_best_fitness)
            .collect::<Vec<_>>(),
    );
    if swarm.sparrows[best_idx].personal_best_fitness < swarm.global_best_fitness {
        swarm.global_best_fitness = swarm.sparrows[best_idx].personal_best_fitness;
        swarm.global_best = swarm.sparrows[best_idx].personal_best.clone();
    }
}

/// The optimizer's result: the best position found, its fitness, and the
/// best-fitness trace (initial population plus one entry per iteration).
#[derive(Debug, Clone)]
pub struct SsaOutcome {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    pub trace: Vec<f64>,
}

/// Full optimization loop: initialize, then iterate velocity, position,
/// fitness, and best updates. The trace is monotone non-increasing.
pub fn optimize(objective: &(impl Objective + ?Sized), config: &SsaConfig) -> Result<SsaOutcome> {
    let mut rng = RngStream::new(config.seed).child("swarm");
    let mut swarm = init_population(config, objective, &mut rng)?;
    let mut trace = Vec::with_capacity(config.max_iterations + 1);
    trace.push(swarm.global_best_fitness);
    let mut eval_index = config.population_size as u64;

    for iteration in 0..config.max_iterations {
        let alpha = config.alpha_at(iteration);
        // Serial update section: the per-sparrow random draws come from one
        // stream in a fixed order.
        for i in 0..swarm.sparrows.len() {
            let v_new = velocity_update(
                &swarm.sparrows[i],
                &swarm.global_best,
                alpha,
                config.beta,
                config.gamma,
                &mut rng,
            );
            let (x_new, v_new) =
                position_update(&swarm.sparrows[i].position, &v_new, &config.bounds);
            swarm.sparrows[i].position = x_new;
            swarm.sparrows[i].velocity = v_new;
        }
        let positions: Vec<Vec<f64>> = swarm
            .sparrows
            .iter()
            .map(|s| s.position.clone())
            .collect();
        let fitnesses = evaluate_all(objective, &positions, eval_index);
        eval_index += positions.len() as u64;
        update_bests(&mut swarm, &fitnesses);
        swarm.iteration = iteration + 1;
        trace.push(swarm.global_best_fitness);
    }

    Ok(SsaOutcome {
        best_position: swarm.global_best.clone(),
        best_fitness: swarm.global_best_fitness,
        trace,
    })
}

/// Hyperparameter search space: fixed four dimensions over
/// log10(learning_rate), GRU hidden width, kernel length, and the base conv
/// channel count (the second and third stages scale it by 2 and 4).
pub fn tuning_bounds() -> Vec<(f64, f64)> {
    vec![(-4.0, -2.0), (16.0, 128.0), (2.0, 5.0), (8.0, 32.0)]
}

fn round_clamped(v: f64, lo: f64, hi: f64) -> usize {
    v.round().clamp(lo, hi) as usize
}

/// Decodes a swarm position into concrete hyperparameters on top of `base`.
pub fn decode_position(x: &[f64], base: &HyperParams) -> HyperParams {
    debug_assert_eq!(x.len(), 4);
    let c1 = round_clamped(x[3], 8.0, 32.0);
    HyperParams {
        learning_rate: 10f64.powf(x[0].clamp(-4.0, -2.0)),
        gru_hidden: round_clamped(x[1], 16.0, 128.0),
        kernel_len: round_clamped(x[2], 2.0, 5.0),
        conv_channels: (c1, 2 * c1, 4 * c1),
        ..base.clone()
    }
}

/// Result of a hyperparameter search: the decoded best configuration, its
/// fitness (validation MSE under the tuning budget), and the SSA trace.
#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub best: HyperParams,
    pub best_fitness: f64,
    pub trace: Vec<f64>,
    pub initial_fitnesses: Vec<f64>,
}

struct TuneObjective<'a> {
    train_ds: &'a WindowedDataset,
    val_ds: &'a WindowedDataset,
    base: HyperParams,
    epoch_budget: usize,
    seed_root: RngStream,
}

impl Objective for TuneObjective<'_> {
    fn evaluate(&self, x: &[f64], eval_index: u64) -> f64 {
        let mut hp = decode_position(x, &self.base);
        hp.max_epochs = self.epoch_budget;
        // Never stop inside the fixed budget.
        hp.patience = self.epoch_budget;
        let stream = self.seed_root.child(&format!("fitness/{eval_index}"));
        hp.seed = stream.seed();
        let result = build_model(&hp, self.train_ds.feature_dim(), &stream)
            .and_then(|model| train(&model, self.train_ds, self.val_ds));
        match result {
            Ok((_, report)) => report.best_val_loss(),
            // A failed evaluation survives as +inf; the run continues.
            Err(_) => f64::INFINITY,
        }
    }
}

/// Tunes hyperparameters by minimizing validation MSE: each fitness call
/// trains a fresh model for `epoch_budget` epochs with a call-derived seed.
pub fn tune_hyperparams(
    train_ds: &WindowedDataset,
    val_ds: &WindowedDataset,
    base: &HyperParams,
    ssa: &SsaConfig,
    epoch_budget: usize,
) -> Result<TuneOutcome> {
    if epoch_budget == 0 {
        return Err(Error::Config("epoch_budget must be positive".into()));
    }
    let mut config = ssa.clone();
    config.bounds = tuning_bounds();
    let objective = TuneObjective {
        train_ds,
        val_ds,
        base: base.clone(),
        epoch_budget,
        seed_root: RngStream::new(config.seed).child("tune"),
    };

    // Run the generic loop but keep the initial fitnesses for reporting.
    let mut rng = RngStream::new(config.seed).child("swarm");
    let swarm = init_population(&config, &objective, &mut rng)?;
    let initial_fitnesses: Vec<f64> = swarm
        .sparrows
        .iter()
        .map(|s| s.personal_best_fitness)
        .collect();
    let outcome = optimize(&objective, &config)?;
    Ok(TuneOutcome {
        best: decode_position(&outcome.best_position, base),
        best_fitness: outcome.best_fitness,
        trace: outcome.trace,
        initial_fitnesses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn test_config(dims: usize, seed: u64) -> SsaConfig {
        SsaConfig::new(vec![(-5.0, 5.0); dims], seed)
    }

    #[test]
    fn init_population_contract() {
        let config = test_config(3, 1);
        let mut rng = RngStream::new(1);
        let swarm = init_population(&config, &sphere, &mut rng).unwrap();
        assert_eq!(swarm.sparrows.len(), 20);
        for s in &swarm.sparrows {
            assert!(s
                .position
                .iter()
                .all(|&v| (-5.0..5.0).contains(&v)));
            assert!(s.velocity.iter().all(|&v| v == 0.0));
            assert_eq!(s.personal_best, s.position);
        }
        let min = swarm
            .sparrows
            .iter()
            .map(|s| s.personal_best_fitness)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(swarm.global_best_fitness, min);

        let mut rng2 = RngStream::new(1);
        let swarm2 = init_population(&config, &sphere, &mut rng2).unwrap();
        assert_eq!(swarm.global_best, swarm2.global_best);
    }

    #[test]
    fn velocity_fixed_points() {
        let s = SparrowState {
            position: vec![1.0, 2.0],
            velocity: vec![0.5, -0.5],
            personal_best: vec![1.0, 2.0],
            personal_best_fitness: 0.0,
        };
        // x == p_g == p_i: attraction terms vanish, only inertia remains.
        let v = velocity_update_with(&s, &[1.0, 2.0], 0.3, 1.5, 1.5, &[1.0; 2], &[1.0; 2]);
        assert_eq!(v, vec![0.15, -0.15]);

        let still = SparrowState {
            velocity: vec![0.0, 0.0],
            ..s
        };
        let v = velocity_update_with(&still, &[1.0, 2.0], 0.9, 1.5, 1.5, &[1.0; 2], &[1.0; 2]);
        assert_eq!(v, vec![0.0, 0.0]);
    }

    #[test]
    fn velocity_hand_evaluation() {
        // alpha=0.5, v=1, x=0, p_g=2, p_i=1, beta=gamma=1, r1=r2=1:
        // v' = 0.5 + 2 + 1 = 3.5
        let s = SparrowState {
            position: vec![0.0],
            velocity: vec![1.0],
            personal_best: vec![1.0],
            personal_best_fitness: 0.0,
        };
        let v = velocity_update_with(&s, &[2.0], 0.5, 1.0, 1.0, &[1.0], &[1.0]);
        assert_eq!(v, vec![3.5]);
    }

    #[test]
    fn position_update_rules() {
        let (x, v) = position_update(&[0.5], &[0.0], &[(0.0, 1.0)]);
        assert_eq!((x, v), (vec![0.5], vec![0.0]));

        let (x, v) = position_update(&[0.9], &[0.5], &[(0.0, 1.0)]);
        assert_eq!(x, vec![1.0]);
        assert_eq!(v, vec![0.0]);

        let (x, v) = position_update(&[0.2, 0.3], &[0.1, -0.1], &[(0.0, 1.0), (0.0, 1.0)]);
        assert!((x[0] - 0.3).abs() < 1e-15 && (x[1] - 0.2).abs() < 1e-15);
        assert_eq!(v, vec![0.1, -0.1]);
    }

    #[test]
    fn fitness_guard_and_sphere_values() {
        assert_eq!(evaluate_fitness(&sphere, &[0.0, 0.0], 0), 0.0);
        assert_eq!(evaluate_fitness(&sphere, &[1.0, 1.0], 0), 2.0);
        let nan = |_: &[f64]| f64::NAN;
        assert_eq!(evaluate_fitness(&nan, &[1.0], 0), f64::INFINITY);
    }

    #[test]
    fn best_updates_use_strict_improvement() {
        let config = test_config(1, 3);
        let mut rng = RngStream::new(3);
        let mut swarm = init_population(&config, &sphere, &mut rng).unwrap();
        let before = swarm.global_best_fitness;

        let improved: Vec<f64> = swarm
            .sparrows
            .iter()
            .map(|s| s.personal_best_fitness - 1.0)
            .collect();
        let positions: Vec<Vec<f64>> = swarm.sparrows.iter().map(|s| s.position.clone()).collect();
        update_bests(&mut swarm, &improved);
        for (s, f) in swarm.sparrows.iter().zip(&improved) {
            assert_eq!(s.personal_best_fitness, *f);
        }
        assert!(swarm.global_best_fitness <= before);

        // Equal fitness keeps the stored best (strict inequality).
        let equal: Vec<f64> = swarm.sparrows.iter().map(|s| s.personal_best_fitness).collect();
        for (s, p) in swarm.sparrows.iter_mut().zip(positions) {
            s.position = p.iter().map(|v| v + 0.001).collect();
        }
        let bests_before: Vec<Vec<f64>> =
            swarm.sparrows.iter().map(|s| s.personal_best.clone()).collect();
        update_bests(&mut swarm, &equal);
        for (s, b) in swarm.sparrows.iter().zip(bests_before) {
            assert_eq!(s.personal_best, b);
        }
    }

    #[test]
    fn sphere_converges_and_trace_is_monotone() {
        let config = test_config(5, 42);
        let outcome = optimize(&sphere, &config).unwrap();
        assert!(
            outcome.best_fitness < 1e-3,
            "seed 42 reached only {}",
            outcome.best_fitness
        );
        for seed in 1..=10 {
            let outcome = optimize(&sphere, &test_config(5, seed)).unwrap();
            for w in outcome.trace.windows(2) {
                assert!(w[1] <= w[0], "trace must never worsen");
            }
        }
    }

    #[test]
    fn optimize_is_deterministic() {
        let a = optimize(&sphere, &test_config(4, 9)).unwrap();
        let b = optimize(&sphere, &test_config(4, 9)).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.best_position, b.best_position);
    }

    #[test]
    fn zero_attraction_decays_velocity_geometrically() {
        // With beta = gamma = 0 and constant alpha < 1, ||v(t)|| = alpha^t ||v(0)||.
        let alpha = 0.8;
        let mut s = SparrowState {
            position: vec![0.0, 0.0],
            velocity: vec![1.0, -2.0],
            personal_best: vec![0.0, 0.0],
            personal_best_fitness: 0.0,
        };
        let v0_norm = (1.0f64 + 4.0).sqrt();
        let bounds = [(-1e6, 1e6), (-1e6, 1e6)];
        for t in 1..=10 {
            let v = velocity_update_with(&s, &[0.0, 0.0], alpha, 0.0, 0.0, &[1.0; 2], &[1.0; 2]);
            let (x, v) = position_update(&s.position, &v, &bounds);
            s.position = x;
            s.velocity = v;
            let norm = s.velocity.iter().map(|v| v * v).sum::<f64>().sqrt();
            let expected = alpha.powi(t) * v0_norm;
            assert!((norm - expected).abs() < 1e-9 * expected.max(1.0));
        }
    }

    #[test]
    fn decoded_positions_respect_bounds() {
        let base = HyperParams::default();
        let corners = [
            vec![-4.0, 16.0, 2.0, 8.0],
            vec![-2.0, 128.0, 5.0, 32.0],
            vec![-3.3, 77.7, 3.4, 19.2],
        ];
        for x in corners {
            let hp = decode_position(&x, &base);
            assert!(hp.learning_rate >= 1e-4 && hp.learning_rate <= 1e-2);
            assert!((16..=128).contains(&hp.gru_hidden));
            assert!((2..=5).contains(&hp.kernel_len));
            assert!((8..=32).contains(&hp.conv_channels.0));
            assert_eq!(hp.conv_channels.1, 2 * hp.conv_channels.0);
            assert_eq!(hp.conv_channels.2, 4 * hp.conv_channels.0);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut config = test_config(2, 1);
        config.population_size = 1;
        assert!(config.validate().is_err());
        let mut config = test_config(2, 1);
        config.bounds[0] = (1.0, 1.0);
        assert!(config.validate().is_err());
        let mut config = test_config(2, 1);
        config.beta = -0.1;
        assert!(config.validate().is_err());
    }
}
