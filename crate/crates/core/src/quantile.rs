//! Quantile-map construction: turn a target density (or atom list) into a
//! map Q(z) that pushes uniform noise forward to the target law.
//!
//! Four constructions are covered: a piecewise-constant map for discrete
//! targets, CDF inversion for continuous densities on a compact interval,
//! the general-prior composition `Q = F_X^{-1} . F_Z`, and coordinatewise
//! products for independent multivariate targets. `fit_mlp_quantile`
//! regresses Q with a one-hidden-layer tanh network of configurable width,
//! the empirical probe of the width-convergence claim.

use crate::error::QuantileError;
use crate::metrics::js_histogram_1d;
use crate::nn::{self, Activation, EpsSource, LayerSpec, ModelParams};
use crate::rng::Prng;
use crate::tensor::Tensor;
use crate::train::{adam_step, AdamState};

pub const DEFAULT_GRID: usize = 4096;

/// A finite target distribution: strictly increasing atoms with
/// probabilities summing to one.
#[derive(Clone, Debug)]
pub struct DiscreteDist {
    atoms: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self, QuantileError> {
        if atoms.is_empty() {
            return Err(QuantileError::EmptyAtoms);
        }
        if atoms.len() != probs.len() {
            return Err(QuantileError::ProbsNotNormalized {
                sum: f64::NAN,
            });
        }
        if atoms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(QuantileError::AtomsNotSorted);
        }
        if probs.iter().any(|&p| p < 0.0) {
            return Err(QuantileError::NegativeProb);
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(QuantileError::ProbsNotNormalized { sum });
        }
        Ok(DiscreteDist { atoms, probs })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// A continuous target density on a compact interval, strictly positive
/// there and integrating to one (trapezoid rule at `grid_n`).
pub struct DensitySpec {
    support: (f64, f64),
    density: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    grid_n: usize,
}

impl std::fmt::Debug for DensitySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DensitySpec")
            .field("support", &self.support)
            .field("grid_n", &self.grid_n)
            .finish_non_exhaustive()
    }
}

impl DensitySpec {
    pub fn new(
        lo: f64,
        hi: f64,
        density: impl Fn(f64) -> f64 + Send + Sync + 'static,
        grid_n: usize,
    ) -> Result<Self, QuantileError> {
        if !(lo < hi) {
            return Err(QuantileError::BadSupport { lo, hi });
        }
        if grid_n < 2 {
            return Err(QuantileError::BadGrid(grid_n));
        }
        let spec = DensitySpec {
            support: (lo, hi),
            density: Box::new(density),
            grid_n,
        };
        spec.tabulate_checked().map(|_| spec)
    }

    /// Normalize an unnormalized positive shape by its measured mass.
    pub fn normalized(
        lo: f64,
        hi: f64,
        shape: impl Fn(f64) -> f64 + Send + Sync + 'static,
        grid_n: usize,
    ) -> Result<Self, QuantileError> {
        if !(lo < hi) {
            return Err(QuantileError::BadSupport { lo, hi });
        }
        if grid_n < 2 {
            return Err(QuantileError::BadGrid(grid_n));
        }
        let h = (hi - lo) / grid_n as f64;
        let mut mass = 0.0;
        let mut prev = shape(lo);
        for i in 1..=grid_n {
            let x = lo + i as f64 * h;
            let cur = shape(x);
            mass += 0.5 * (prev + cur) * h;
            prev = cur;
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(QuantileError::NotNormalized { mass });
        }
        Self::new(lo, hi, move |x| shape(x) / mass, grid_n)
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn density(&self, x: f64) -> f64 {
        (self.density)(x)
    }

    /// Grid values and cumulative trapezoid integral; errors on
    /// non-positive density or mass off 1 by more than 1e-6. The density
    /// must be strictly positive at interior grid points; it may touch
    /// zero at the two endpoints (the CDF stays strictly increasing).
    fn tabulate_checked(&self) -> Result<(Vec<f64>, Vec<f64>), QuantileError> {
        let (lo, hi) = self.support;
        let n = self.grid_n;
        let h = (hi - lo) / n as f64;
        let mut xs = Vec::with_capacity(n + 1);
        let mut cum = Vec::with_capacity(n + 1);
        let mut prev = (self.density)(lo);
        if !(prev >= 0.0) {
            return Err(QuantileError::NonPositiveDensity { x: lo, p: prev });
        }
        xs.push(lo);
        cum.push(0.0);
        let mut acc = 0.0;
        for i in 1..=n {
            let x = lo + i as f64 * h;
            let p = (self.density)(x);
            let ok = if i == n { p >= 0.0 } else { p > 0.0 };
            if !ok {
                return Err(QuantileError::NonPositiveDensity { x, p });
            }
            acc += 0.5 * (prev + p) * h;
            xs.push(x);
            cum.push(acc);
            prev = p;
        }
        let mass = acc;
        if (mass - 1.0).abs() > 1e-6 {
            return Err(QuantileError::NotNormalized { mass });
        }
        Ok((xs, cum))
    }

    /// CDF by interpolation of the cumulative table (clamped to [0, 1]).
    pub fn cdf_table(&self) -> Result<CdfTable, QuantileError> {
        let (xs, cum) = self.tabulate_checked()?;
        Ok(CdfTable { xs, cum })
    }
}

/// Tabulated CDF with linear interpolation; the inverse view of the same
/// table is the quantile map.
pub struct CdfTable {
    xs: Vec<f64>,
    cum: Vec<f64>,
}

impl CdfTable {
    pub fn eval(&self, x: f64) -> f64 {
        interp(&self.xs, &self.cum, x).clamp(0.0, 1.0)
    }
}

/// Piecewise-linear interpolation through (xs, ys); clamps outside.
fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    // first index with xs[i] > x; xs sorted non-decreasing
    let i = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let (y0, y1) = (ys[i - 1], ys[i]);
    if x1 == x0 {
        return y1;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    PiecewiseConstant,
    MonotoneInterpolant,
}

/// The constructed map Q: noise -> target support, non-decreasing on its
/// domain. Immutable after construction.
#[derive(Clone, Debug)]
pub struct QuantileMap {
    pub kind: MapKind,
    /// Sorted (z, Q(z)) pairs.
    knots: Vec<(f64, f64)>,
    pub domain: (f64, f64),
}

impl QuantileMap {
    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self.kind {
            MapKind::PiecewiseConstant => {
                // knots are (cumulative sum, atom); ties go to the upper atom
                let interior = &self.knots[..self.knots.len() - 1];
                let i = interior.partition_point(|&(c, _)| c <= z);
                self.knots[i].1
            }
            MapKind::MonotoneInterpolant => {
                if z <= self.knots[0].0 {
                    return self.knots[0].1;
                }
                let last = self.knots[self.knots.len() - 1];
                if z >= last.0 {
                    return last.1;
                }
                let i = self.knots.partition_point(|&(c, _)| c <= z);
                let (z0, q0) = self.knots[i - 1];
                let (z1, q1) = self.knots[i];
                if z1 == z0 {
                    return q1;
                }
                q0 + (q1 - q0) * (z - z0) / (z1 - z0)
            }
        }
    }

    /// n samples by mapping uniform noise (domain (0,1) maps only).
    pub fn sample_n(&self, rng: &mut Prng, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.eval(rng.uniform())).collect()
    }
}

/// Piecewise-constant map with cumulative-sum breakpoints:
/// Q(z) = x_i on (sum_{j<i} y_j, sum_{j<=i} y_j); breakpoint ties resolve
/// to the upper atom.
pub fn build_discrete_quantile(dist: &DiscreteDist) -> QuantileMap {
    let mut knots = Vec::with_capacity(dist.atoms.len());
    let mut acc = 0.0;
    for (&x, &y) in dist.atoms.iter().zip(&dist.probs) {
        acc += y;
        knots.push((acc, x));
    }
    // guard against rounding in the final cumulative sum
    knots.last_mut().unwrap().0 = 1.0;
    QuantileMap {
        kind: MapKind::PiecewiseConstant,
        knots,
        domain: (0.0, 1.0),
    }
}

/// CDF inversion on a uniform lambda grid: knots (z(lambda), Q(lambda))
/// with z the cumulative trapezoid integral of the density and
/// Q(lambda) = k1 + lambda (k2 - k1).
pub fn build_continuous_quantile(density: &DensitySpec) -> Result<QuantileMap, QuantileError> {
    let (xs, cum) = density.tabulate_checked()?;
    let knots = cum.into_iter().zip(xs).collect();
    Ok(QuantileMap {
        kind: MapKind::MonotoneInterpolant,
        knots,
        domain: (0.0, 1.0),
    })
}

/// General-prior construction Q = F_X^{-1} . F_Z mapping prior support into
/// target support; strictly increasing because both densities are positive.
///
/// Knots sit at the target grid: each target knot (u_i, x_i) becomes
/// (F_Z^{-1}(u_i), x_i), so a uniform prior reproduces the plain CDF
/// inversion exactly.
pub fn compose_prior(
    density_x: &DensitySpec,
    prior_z: &DensitySpec,
) -> Result<QuantileMap, QuantileError> {
    let (xs_t, cum_t) = density_x.tabulate_checked()?;
    let (zs_p, cum_p) = prior_z.tabulate_checked()?;
    let knots = xs_t
        .into_iter()
        .zip(cum_t)
        .map(|(x, u)| (interp(&cum_p, &zs_p, u), x))
        .collect();
    Ok(QuantileMap {
        kind: MapKind::MonotoneInterpolant,
        knots,
        domain: prior_z.support(),
    })
}

/// n x d samples from the product of d independent 1-D targets: coordinate
/// j of each row applies `maps[j]` to a fresh uniform draw. Draw order is
/// row-major.
pub fn sample_product(maps: &[QuantileMap], rng: &mut Prng, n: usize) -> Tensor {
    let d = maps.len();
    assert!(d >= 1, "sample_product needs at least one map");
    let mut out = Tensor::zeros(n, d);
    for i in 0..n {
        for (j, map) in maps.iter().enumerate() {
            out.set(i, j, map.eval(rng.uniform()));
        }
    }
    out
}

/// Hyperparameters of the quantile-regression probe.
#[derive(Clone, Copy, Debug)]
pub struct FitConfig {
    /// Number of uniformly spaced training pairs (z, Q(z)).
    pub train_points: usize,
    /// Minibatch size; points are consumed in deterministic cyclic order.
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Largest hidden-unit slope at init; per-unit slopes are log-uniform
    /// in [2, init_slope] with transition points spread uniformly over
    /// (0, 1), so steep features are representable from the start.
    pub init_slope: f64,
    /// Sample count per side of the JS evaluation.
    pub eval_n: usize,
    pub bins: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            train_points: DEFAULT_GRID,
            batch: 256,
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            init_slope: 256.0,
            eval_n: 100_000,
            bins: 64,
        }
    }
}

/// Regression init for a 1 -> width -> 1 tanh network on (0, 1): unit k
/// gets a signed slope with magnitude log-uniform in [2, max_slope] and a
/// bias placing its transition at a uniform position t_k, so the hidden
/// basis spans the input interval across sharpness scales from the first
/// step. Output weights start small, output bias at the target mean.
fn regression_init(
    spec: &[LayerSpec],
    width: usize,
    max_slope: f64,
    target_mean: f64,
    rng: &mut Prng,
) -> ModelParams {
    let lo = 2.0f64;
    let hi = max_slope.max(lo + 1.0);
    let mut w1 = Tensor::zeros(width, 1);
    let mut b1 = Tensor::zeros(1, width);
    for k in 0..width {
        let magnitude = (lo.ln() + (hi.ln() - lo.ln()) * rng.uniform()).exp();
        let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
        let w = sign * magnitude;
        let t = rng.uniform();
        w1.set(k, 0, w);
        b1.set(0, k, -w * t);
    }
    let scale = 1.0 / (width as f64).sqrt();
    let mut w2 = Tensor::zeros(1, width);
    for v in w2.values_mut() {
        *v = scale * rng.gaussian();
    }
    let mut b2 = Tensor::zeros(1, 1);
    b2.set(0, 0, target_mean);
    ModelParams::from_tensors(spec, vec![w1, b1, w2, b2])
}

#[derive(Debug)]
pub struct FitResult {
    pub params: ModelParams,
    /// Mean squared error over the full training grid after the last step.
    pub mse: f64,
    /// JS divergence between pushforward samples and direct map samples.
    pub js: f64,
}

/// Regress z -> Q(z) with a 1-hidden-layer tanh network of `width` units on
/// deterministic uniformly spaced z, then compare pushforward samples
/// against direct QuantileMap samples by 1-D histogram JS.
pub fn fit_mlp_quantile(
    map: &QuantileMap,
    width: usize,
    rng: &mut Prng,
    train_steps: usize,
    config: &FitConfig,
) -> FitResult {
    assert!(width >= 1);
    let m = config.train_points;
    let zs: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect();
    let targets: Vec<f64> = zs.iter().map(|&z| map.eval(z)).collect();

    let spec = [
        LayerSpec::det(1, width, Activation::Tanh),
        LayerSpec::det(width, 1, Activation::None),
    ];
    let target_mean = targets.iter().sum::<f64>() / m as f64;
    let mut params = regression_init(&spec, width, config.init_slope, target_mean, rng);
    let mut adam = AdamState::new(&params);

    let batch = config.batch.min(m).max(1);
    let mut cursor = 0usize;
    for _ in 0..train_steps {
        let mut zb = Tensor::zeros(batch, 1);
        let mut tb = Tensor::zeros(batch, 1);
        for r in 0..batch {
            let idx = (cursor + r) % m;
            zb.set(r, 0, zs[idx]);
            tb.set(r, 0, targets[idx]);
        }
        cursor = (cursor + batch) % m;

        let mut g = crate::graph::Graph::new();
        let bound = params.bind(&mut g);
        let zid = g.leaf(zb);
        let out = nn::model_forward(&mut g, &bound, &params, zid, EpsSource::Fixed(&[]))
            .expect("fit forward");
        let tid = g.leaf(tb);
        let diff = g.sub(out, tid).expect("fit shapes");
        let sq = g.square(diff).expect("fit shapes");
        let loss = g.mean_all(sq).expect("fit shapes");
        let grads = g.backward(loss).expect("fit backward");
        let grad_tensors: Vec<Tensor> = bound
            .ids
            .iter()
            .map(|&id| match grads.get(id) {
                Some(gid) => g.value(gid).clone(),
                None => {
                    let (r, c) = g.value(id).shape();
                    Tensor::zeros(r, c)
                }
            })
            .collect();
        adam_step(
            &mut adam,
            params.tensors_mut(),
            &grad_tensors,
            config.lr,
            config.beta1,
            config.beta2,
            config.adam_eps,
        )
        .expect("adam shapes");
    }

    // full-grid mse
    let zfull = Tensor::from_vec(m, 1, zs.clone()).expect("grid shape");
    let pred = nn::forward_values(&params, &zfull, EpsSource::Fixed(&[])).expect("fit forward");
    let mse = pred
        .values()
        .iter()
        .zip(&targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / m as f64;

    // JS between pushforward and direct samples
    let direct: Vec<f64> = map.sample_n(rng, config.eval_n);
    let mut zeval = Tensor::zeros(config.eval_n, 1);
    for v in zeval.values_mut() {
        *v = rng.uniform();
    }
    let push = nn::forward_values(&params, &zeval, EpsSource::Fixed(&[])).expect("fit forward");
    let js = js_histogram_1d(&direct, push.values(), config.bins).expect("histogram js");

    FitResult { params, mse, js }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{ks_statistic, normal_cdf};

    #[test]
    fn discrete_two_atoms() {
        let dist = DiscreteDist::new(vec![0.0, 1.0], vec![0.3, 0.7]).unwrap();
        let q = build_discrete_quantile(&dist);
        assert_eq!(q.eval(0.1), 0.0);
        assert_eq!(q.eval(0.9), 1.0);
        // tie at the breakpoint goes to the upper atom
        assert_eq!(q.eval(0.3), 1.0);
        assert_eq!(q.eval(0.29999999), 0.0);
    }

    #[test]
    fn discrete_single_atom() {
        let dist = DiscreteDist::new(vec![2.5], vec![1.0]).unwrap();
        let q = build_discrete_quantile(&dist);
        for z in [0.001, 0.5, 0.999] {
            assert_eq!(q.eval(z), 2.5);
        }
    }

    #[test]
    fn discrete_validation() {
        assert!(DiscreteDist::new(vec![], vec![]).is_err());
        assert!(DiscreteDist::new(vec![1.0, 0.5], vec![0.5, 0.5]).is_err());
        assert!(DiscreteDist::new(vec![0.0, 1.0], vec![0.6, 0.6]).is_err());
        assert!(DiscreteDist::new(vec![0.0, 1.0], vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn discrete_empirical_frequencies() {
        let dist =
            DiscreteDist::new(vec![-1.0, 0.0, 2.0], vec![0.25, 0.25, 0.5]).unwrap();
        let q = build_discrete_quantile(&dist);
        let mut rng = Prng::new(5);
        let n = 1_000_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let x = q.eval(rng.uniform());
            let idx = dist.atoms().iter().position(|&a| a == x).unwrap();
            counts[idx] += 1;
        }
        for (c, &p) in counts.iter().zip(dist.probs()) {
            let freq = *c as f64 / n as f64;
            assert!((freq - p).abs() < 0.002, "freq {freq} vs {p}");
        }
    }

    #[test]
    fn continuous_uniform_is_identity() {
        let density = DensitySpec::new(0.0, 1.0, |_| 1.0, DEFAULT_GRID).unwrap();
        let q = build_continuous_quantile(&density).unwrap();
        for &(z, x) in q.knots() {
            assert!((x - z).abs() < 1e-9, "knot ({z}, {x})");
        }
    }

    #[test]
    fn continuous_linear_density_analytic_inverse() {
        // p(x) = 2x on [0,1]: F(x) = x^2, Q(z) = sqrt(z)
        let density = DensitySpec::new(0.0, 1.0, |x| 2.0 * x, DEFAULT_GRID).unwrap();
        let q = build_continuous_quantile(&density).unwrap();
        assert!((q.eval(0.25) - 0.5).abs() < 1e-4);
        assert!((q.eval(0.81) - 0.9).abs() < 1e-4);
    }

    #[test]
    fn continuous_rejects_unnormalized() {
        let err = DensitySpec::new(0.0, 1.0, |_| 2.0, 512).unwrap_err();
        match err {
            QuantileError::NotNormalized { mass } => {
                assert!((mass - 2.0).abs() < 1e-9)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn continuous_rejects_nonpositive_density() {
        let err = DensitySpec::new(-1.0, 1.0, |x| x.max(0.0), 512).unwrap_err();
        assert!(matches!(err, QuantileError::NonPositiveDensity { .. }));
    }

    #[test]
    fn truncated_normal_ks() {
        let density = DensitySpec::normalized(
            -2.0,
            2.0,
            |x| (-0.5 * x * x).exp(),
            DEFAULT_GRID,
        )
        .unwrap();
        let q = build_continuous_quantile(&density).unwrap();
        let mut rng = Prng::new(11);
        let samples = q.sample_n(&mut rng, 100_000);
        // independent oracle: renormalized normal CDF
        let phi = |x: f64| normal_cdf(x);
        let mass = phi(2.0) - phi(-2.0);
        let cdf = move |x: f64| ((phi(x) - phi(-2.0)) / mass).clamp(0.0, 1.0);
        let stat = ks_statistic(&samples, cdf);
        assert!(stat < 0.01, "ks {stat}");
    }

    #[test]
    fn compose_prior_identity_when_prior_equals_target() {
        let target = DensitySpec::new(0.0, 1.0, |x| 2.0 * x, DEFAULT_GRID).unwrap();
        let prior = DensitySpec::new(0.0, 1.0, |x| 2.0 * x, DEFAULT_GRID).unwrap();
        let q = compose_prior(&target, &prior).unwrap();
        for i in 0..=100 {
            let z = 0.005 + 0.99 * i as f64 / 100.0;
            assert!((q.eval(z) - z).abs() < 1e-6, "z={z} q={}", q.eval(z));
        }
    }

    #[test]
    fn compose_prior_uniform_matches_continuous_build() {
        let target = DensitySpec::normalized(
            -2.0,
            2.0,
            |x| (-0.5 * x * x).exp(),
            DEFAULT_GRID,
        )
        .unwrap();
        let prior = DensitySpec::new(0.0, 1.0, |_| 1.0, DEFAULT_GRID).unwrap();
        let composed = compose_prior(&target, &prior).unwrap();
        let direct = build_continuous_quantile(&target).unwrap();
        for i in 0..=1000 {
            let z = i as f64 / 1000.0;
            assert!(
                (composed.eval(z) - direct.eval(z)).abs() < 1e-9,
                "z={z}"
            );
        }
    }

    #[test]
    fn compose_prior_truncated_normal_to_linear_density() {
        // prior N(0,1) truncated to [-4,4]; target p(x) = 2x on [0,1]
        let target = DensitySpec::new(0.0, 1.0, |x| 2.0 * x, DEFAULT_GRID).unwrap();
        let prior = DensitySpec::normalized(
            -4.0,
            4.0,
            |x| (-0.5 * x * x).exp(),
            DEFAULT_GRID,
        )
        .unwrap();
        let prior_sampler = build_continuous_quantile(&prior).unwrap();
        let q = compose_prior(&target, &prior).unwrap();
        let mut rng = Prng::new(13);
        let samples: Vec<f64> = (0..100_000)
            .map(|_| q.eval(prior_sampler.eval(rng.uniform())))
            .collect();
        let stat = ks_statistic(&samples, |x| (x * x).clamp(0.0, 1.0));
        assert!(stat < 0.01, "ks {stat}");
    }

    #[test]
    fn product_uniform_square() {
        let u = DensitySpec::new(0.0, 1.0, |_| 1.0, 1024).unwrap();
        let q = build_continuous_quantile(&u).unwrap();
        let maps = vec![q.clone(), q];
        let mut rng = Prng::new(17);
        let n = 100_000;
        let pts = sample_product(&maps, &mut rng, n);
        for axis in 0..2 {
            let col: Vec<f64> = (0..n).map(|i| pts.get(i, axis)).collect();
            let stat = ks_statistic(&col, |x| x.clamp(0.0, 1.0));
            assert!(stat < 0.01, "axis {axis} ks {stat}");
        }
    }

    #[test]
    fn product_single_map_reduces_to_scalar_sampling() {
        let u = DensitySpec::new(0.0, 1.0, |_| 1.0, 256).unwrap();
        let q = build_continuous_quantile(&u).unwrap();
        let mut rng_a = Prng::new(23);
        let pts = sample_product(std::slice::from_ref(&q), &mut rng_a, 50);
        let mut rng_b = Prng::new(23);
        let direct = q.sample_n(&mut rng_b, 50);
        for i in 0..50 {
            assert_eq!(pts.get(i, 0), direct[i]);
        }
    }

    #[test]
    fn product_coordinates_independent() {
        let linear = DensitySpec::new(0.0, 1.0, |x| 2.0 * x, 1024).unwrap();
        let uniform = DensitySpec::new(0.0, 1.0, |_| 1.0, 1024).unwrap();
        let maps = vec![
            build_continuous_quantile(&linear).unwrap(),
            build_continuous_quantile(&uniform).unwrap(),
        ];
        let mut rng = Prng::new(29);
        let n = 100_000;
        let pts = sample_product(&maps, &mut rng, n);
        let mean = |axis: usize| (0..n).map(|i| pts.get(i, axis)).sum::<f64>() / n as f64;
        let (mx, my) = (mean(0), mean(1));
        let mut cov = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for i in 0..n {
            let dx = pts.get(i, 0) - mx;
            let dy = pts.get(i, 1) - my;
            cov += dx * dy;
            vx += dx * dx;
            vy += dy * dy;
        }
        let rho = cov / (vx.sqrt() * vy.sqrt());
        assert!(rho.abs() < 0.01, "rho {rho}");
    }

    #[test]
    fn monotone_on_random_pairs() {
        // every constructed map is non-decreasing
        let maps = vec![
            build_discrete_quantile(
                &DiscreteDist::new(vec![-1.0, 0.5, 3.0], vec![0.2, 0.3, 0.5]).unwrap(),
            ),
            build_continuous_quantile(
                &DensitySpec::new(0.0, 1.0, |x| 2.0 * x, 512).unwrap(),
            )
            .unwrap(),
            compose_prior(
                &DensitySpec::new(0.0, 1.0, |x| 2.0 * x, 512).unwrap(),
                &DensitySpec::normalized(-4.0, 4.0, |x| (-0.5 * x * x).exp(), 512)
                    .unwrap(),
            )
            .unwrap(),
        ];
        let mut rng = Prng::new(31);
        for map in &maps {
            let (lo, hi) = map.domain;
            for _ in 0..2000 {
                let a = lo + (hi - lo) * rng.uniform();
                let b = lo + (hi - lo) * rng.uniform();
                let (a, b) = if a <= b { (a, b) } else { (b, a) };
                assert!(map.eval(a) <= map.eval(b) + 1e-12);
            }
        }
    }

    #[test]
    fn pushforward_ks_band() {
        // KS(empirical Q(U), numeric CDF) < 1.36/sqrt(n) + 2/grid_n
        let grid_n = 2048;
        let density =
            DensitySpec::normalized(-2.0, 2.0, |x| (-0.5 * x * x).exp(), grid_n).unwrap();
        let q = build_continuous_quantile(&density).unwrap();
        let cdf = density.cdf_table().unwrap();
        let mut rng = Prng::new(37);
        let n = 40_000;
        let samples = q.sample_n(&mut rng, n);
        let stat = ks_statistic(&samples, |x| cdf.eval(x));
        let band = 1.36 / (n as f64).sqrt() + 2.0 / grid_n as f64;
        assert!(stat < band, "ks {stat} band {band}");
    }

    #[test]
    fn fit_identity_target_small_widths() {
        // uniform target: Q = id; an affine map suffices at any width
        let u = DensitySpec::new(0.0, 1.0, |_| 1.0, 512).unwrap();
        let q = build_continuous_quantile(&u).unwrap();
        let config = FitConfig {
            train_points: 512,
            batch: 512,
            lr: 0.003,
            init_slope: 2.5,
            eval_n: 20_000,
            ..FitConfig::default()
        };
        for width in [1usize, 8] {
            let mut rng = Prng::new(41);
            let fit = fit_mlp_quantile(&q, width, &mut rng, 30_000, &config);
            assert!(fit.mse < 1e-6, "width {width} mse {}", fit.mse);
        }
    }
}
