//! Evaluation metrics: Jensen–Shannon divergence between sample sets on a
//! shared 2-D PCA projection, exact discrete JS, KS statistics, and the PCA
//! basis itself (cyclic Jacobi eigendecomposition).
//!
//! The sample-set JS estimator is pinned as: project both sets with a basis
//! fit on ground-truth data, histogram on the truth bounding box expanded
//! 10% per side (out-of-box points clipped to edge bins), smooth with
//! alpha = 1e-12, normalize, JS with base-2 logs. Values live in [0, 1].

use crate::error::MetricsError;
use crate::tensor::Tensor;

pub const HISTOGRAM_SMOOTHING: f64 = 1e-12;
pub const DEFAULT_BINS: usize = 64;

/// Rank-2 orthonormal projection basis from PCA.
#[derive(Clone, Debug)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// Two orthonormal rows, each of length D.
    pub components: [Vec<f64>; 2],
    /// Non-increasing pair of eigenvalues of the sample covariance.
    pub explained_variance: [f64; 2],
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors as rows), unsorted.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let scale: f64 = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    for _sweep in 0..50 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[p][q].abs());
            }
        }
        if off < 1e-14 * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vpk = v[p][k];
                    let vqk = v[q][k];
                    v[p][k] = c * vpk - s * vqk;
                    v[q][k] = s * vpk + c * vqk;
                }
            }
        }
    }
    let eigenvalues = (0..n).map(|i| a[i][i]).collect();
    (eigenvalues, v)
}

/// Fit a 2-D PCA basis: center, eigendecompose the sample covariance
/// (denominator n-1), keep the top two components. Sign convention: the
/// largest-magnitude entry of each component is positive.
pub fn pca_fit(data: &Tensor) -> Result<PcaBasis, MetricsError> {
    let (n, d) = data.shape();
    if n < 2 {
        return Err(MetricsError::TooFewRows { needed: 2, got: n });
    }
    if d < 2 {
        return Err(MetricsError::TooFewCols(d));
    }
    let nf = n as f64;
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &x) in mean.iter_mut().zip(data.row_slice(i)) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= nf;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for i in 0..n {
        let row = data.row_slice(i);
        for j in 0..d {
            let xj = row[j] - mean[j];
            for k in j..d {
                cov[j][k] += xj * (row[k] - mean[k]);
            }
        }
    }
    for j in 0..d {
        for k in j..d {
            cov[j][k] /= nf - 1.0;
            cov[k][j] = cov[j][k];
        }
    }
    let total_var: f64 = (0..d).map(|j| cov[j][j]).sum();
    if total_var <= 1e-300 {
        return Err(MetricsError::RankZero);
    }

    let (eigenvalues, vectors) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eigenvalues[j].partial_cmp(&eigenvalues[i]).unwrap());
    let mut components: [Vec<f64>; 2] = [vec![0.0; d], vec![0.0; d]];
    let mut explained = [0.0; 2];
    for slot in 0..2 {
        let idx = order[slot];
        let mut comp = vectors[idx].clone();
        let max_abs_pos = comp
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if comp[max_abs_pos] < 0.0 {
            for c in &mut comp {
                *c = -*c;
            }
        }
        components[slot] = comp;
        explained[slot] = eigenvalues[idx];
    }
    Ok(PcaBasis {
        mean,
        components,
        explained_variance: explained,
    })
}

/// Project rows of `data` onto the basis: `(x - mean) C^T`, n x 2.
pub fn pca_project(basis: &PcaBasis, data: &Tensor) -> Tensor {
    let (n, d) = data.shape();
    assert_eq!(d, basis.mean.len(), "dimension mismatch in pca_project");
    let mut out = Tensor::zeros(n, 2);
    for i in 0..n {
        let row = data.row_slice(i);
        for (slot, comp) in basis.components.iter().enumerate() {
            let mut acc = 0.0;
            for ((&x, &m), &c) in row.iter().zip(&basis.mean).zip(comp) {
                acc += (x - m) * c;
            }
            out.set(i, slot, acc);
        }
    }
    out
}

/// B x B counts over a fixed 2-D box; out-of-box points are clipped into
/// the nearest edge bin.
#[derive(Clone, Debug)]
pub struct Histogram2D {
    pub bounds: [(f64, f64); 2],
    pub bins: usize,
    pub counts: Vec<f64>,
}

impl Histogram2D {
    pub fn new(bounds: [(f64, f64); 2], bins: usize) -> Result<Self, MetricsError> {
        if bins < 2 {
            return Err(MetricsError::BadBins(bins));
        }
        Ok(Histogram2D {
            bounds,
            bins,
            counts: vec![0.0; bins * bins],
        })
    }

    fn bin_index(&self, axis: usize, x: f64) -> usize {
        let (lo, hi) = self.bounds[axis];
        let t = (x - lo) / (hi - lo);
        let i = (t * self.bins as f64).floor() as i64;
        i.clamp(0, self.bins as i64 - 1) as usize
    }

    pub fn accumulate(&mut self, points: &Tensor) {
        assert_eq!(points.cols(), 2, "2-D histogram expects n x 2 points");
        for i in 0..points.rows() {
            let bx = self.bin_index(0, points.get(i, 0));
            let by = self.bin_index(1, points.get(i, 1));
            self.counts[bx * self.bins + by] += 1.0;
        }
    }

    /// Smoothed, normalized probability vector.
    pub fn probabilities(&self, alpha: f64) -> Vec<f64> {
        let total: f64 = self.counts.iter().sum::<f64>() + alpha * self.counts.len() as f64;
        self.counts.iter().map(|&c| (c + alpha) / total).collect()
    }
}

/// Exact JS divergence of two probability vectors, base-2 logs, 0 log 0 = 0.
pub fn js_discrete(p: &[f64], q: &[f64]) -> Result<f64, MetricsError> {
    if p.len() != q.len() {
        return Err(MetricsError::LengthMismatch(p.len(), q.len()));
    }
    for &v in p.iter().chain(q) {
        if v < 0.0 {
            return Err(MetricsError::NegativeEntry { value: v });
        }
    }
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    if (sp - 1.0).abs() > 1e-9 {
        return Err(MetricsError::NotNormalized { sum: sp });
    }
    if (sq - 1.0).abs() > 1e-9 {
        return Err(MetricsError::NotNormalized { sum: sq });
    }
    let mut js = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let m = 0.5 * (pi + qi);
        if pi > 0.0 {
            js += 0.5 * pi * (pi / m).log2();
        }
        if qi > 0.0 {
            js += 0.5 * qi * (qi / m).log2();
        }
    }
    Ok(js)
}

/// JS estimator for sample sets sharing one projection and binning. Fit on
/// ground-truth data once; `divergence` is then symmetric in its arguments.
#[derive(Clone, Debug)]
pub struct JsEstimator {
    pub basis: PcaBasis,
    pub bounds: [(f64, f64); 2],
    pub bins: usize,
}

impl JsEstimator {
    /// Fit the PCA basis on `truth` and freeze the histogram box: the
    /// bounding rectangle of projected truth, expanded 10% per side.
    pub fn fit(truth: &Tensor, bins: usize) -> Result<Self, MetricsError> {
        if bins < 2 {
            return Err(MetricsError::BadBins(bins));
        }
        let basis = pca_fit(truth)?;
        let projected = pca_project(&basis, truth);
        let mut bounds = [(f64::INFINITY, f64::NEG_INFINITY); 2];
        for i in 0..projected.rows() {
            for axis in 0..2 {
                let v = projected.get(i, axis);
                bounds[axis].0 = bounds[axis].0.min(v);
                bounds[axis].1 = bounds[axis].1.max(v);
            }
        }
        for b in &mut bounds {
            let span = (b.1 - b.0).max(1e-12);
            b.0 -= 0.10 * span;
            b.1 += 0.10 * span;
        }
        Ok(JsEstimator {
            basis,
            bounds,
            bins,
        })
    }

    pub fn divergence(&self, a: &Tensor, b: &Tensor) -> Result<f64, MetricsError> {
        if a.rows() == 0 || b.rows() == 0 {
            return Err(MetricsError::EmptySamples);
        }
        let pa = self.histogram(a)?;
        let pb = self.histogram(b)?;
        js_discrete(
            &pa.probabilities(HISTOGRAM_SMOOTHING),
            &pb.probabilities(HISTOGRAM_SMOOTHING),
        )
    }

    fn histogram(&self, data: &Tensor) -> Result<Histogram2D, MetricsError> {
        let projected = pca_project(&self.basis, data);
        let mut h = Histogram2D::new(self.bounds, self.bins)?;
        h.accumulate(&projected);
        Ok(h)
    }
}

/// JS between two sample sets through a fitted estimator.
pub fn js_divergence_samples(
    a: &Tensor,
    b: &Tensor,
    estimator: &JsEstimator,
) -> Result<f64, MetricsError> {
    estimator.divergence(a, b)
}

/// 1-D variant used by the width-sweep probe: histogram both sample lists
/// on the reference bounding interval expanded 10% per side.
pub fn js_histogram_1d(reference: &[f64], other: &[f64], bins: usize) -> Result<f64, MetricsError> {
    if bins < 2 {
        return Err(MetricsError::BadBins(bins));
    }
    if reference.is_empty() || other.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    let lo = reference.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = reference.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    let (lo, hi) = (lo - 0.10 * span, hi + 0.10 * span);
    let count = |xs: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; bins];
        for &x in xs {
            let t = (x - lo) / (hi - lo);
            let i = ((t * bins as f64).floor() as i64).clamp(0, bins as i64 - 1) as usize;
            c[i] += 1.0;
        }
        c
    };
    let to_prob = |c: Vec<f64>| -> Vec<f64> {
        let total: f64 = c.iter().sum::<f64>() + HISTOGRAM_SMOOTHING * bins as f64;
        c.into_iter().map(|x| (x + HISTOGRAM_SMOOTHING) / total).collect()
    };
    js_discrete(&to_prob(count(reference)), &to_prob(count(other)))
}

/// One-sample KS statistic: sup over the sorted sample of the larger of the
/// two one-sided empirical-CDF gaps.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    assert!(!samples.is_empty(), "ks_statistic needs at least one sample");
    let mut xs = samples.to_vec();
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        let upper = ((i + 1) as f64 / n - f).abs();
        let lower = (i as f64 / n - f).abs();
        sup = sup.max(upper.max(lower));
    }
    sup
}

/// Complementary error function (Numerical Recipes rational approximation,
/// relative error below 1.2e-7). Plenty for KS-level oracles.
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t * (-z * z
        - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587
                                    + t * (-0.82215223 + t * 0.17087277)))))))))
    .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Scatter export for the 2-D projection plots: `x,y,source` rows with
/// source in {truth, model}.
pub fn write_scatter_csv(
    basis: &PcaBasis,
    truth: &Tensor,
    model: &Tensor,
    mut w: impl std::io::Write,
) -> std::io::Result<()> {
    writeln!(w, "x,y,source")?;
    for (data, tag) in [(truth, "truth"), (model, "model")] {
        let projected = pca_project(basis, data);
        for i in 0..projected.rows() {
            writeln!(
                w,
                "{:.6e},{:.6e},{}",
                projected.get(i, 0),
                projected.get(i, 1),
                tag
            )?;
        }
    }
    Ok(())
}
