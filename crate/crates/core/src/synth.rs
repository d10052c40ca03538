//! The synthetic datasets: affine pushforwards of 2-D Gaussian latents
//! (Data1/Data2) and the stochastic variant with a multiplicative noise
//! path (Data3). Generator parameters are drawn once per dataset and kept,
//! so ground-truth resampling reuses the exact frozen network.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::DataError;
use crate::nn::{Activation, LayerSpec, ModelParams};
use crate::rng::Prng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    /// X = A2 (A1 z1 + b1) + b2
    LinearGaussian,
    /// X = A2 (A11 z1 + (A12 z1) * eps + b1) + b2
    Sdg,
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthKind::LinearGaussian => write!(f, "linear-gaussian"),
            SynthKind::Sdg => write!(f, "sdg"),
        }
    }
}

impl SynthKind {
    fn parse(s: &str) -> Option<SynthKind> {
        match s {
            "linear-gaussian" => Some(SynthKind::LinearGaussian),
            "sdg" => Some(SynthKind::Sdg),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    /// Latent dimension.
    pub d: usize,
    /// Output dimension.
    pub big_d: usize,
    /// Hidden width.
    pub n1: usize,
    /// Sample count.
    pub n: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.d > self.big_d {
            return Err(DataError::BadDims {
                d: self.d,
                big_d: self.big_d,
            });
        }
        if self.n == 0 {
            return Err(DataError::EmptySample);
        }
        Ok(())
    }

    /// The three presets: d=2, D=10, n=10000; Data1/Data2 are affine with
    /// hidden width 100/200, Data3 is the stochastic construction at 100.
    pub fn preset(which: usize, seed: u64) -> SynthSpec {
        let (kind, n1) = match which {
            1 => (SynthKind::LinearGaussian, 100),
            2 => (SynthKind::LinearGaussian, 200),
            3 => (SynthKind::Sdg, 100),
            _ => panic!("preset must be 1, 2 or 3"),
        };
        SynthSpec {
            kind,
            d: 2,
            big_d: 10,
            n1,
            n: 10_000,
            seed,
        }
    }
}

/// Frozen generator parameters of a dataset.
#[derive(Clone, Debug)]
pub enum FrozenParams {
    Linear {
        a1: Tensor,
        b1: Tensor,
        a2: Tensor,
        b2: Tensor,
    },
    Sdg {
        a11: Tensor,
        a12: Tensor,
        b1: Tensor,
        a2: Tensor,
        b2: Tensor,
    },
}

#[derive(Clone, Debug)]
pub struct Dataset {
    spec: SynthSpec,
    data: Tensor,
    frozen: FrozenParams,
}

fn gaussian_matrix(rng: &mut Prng, rows: usize, cols: usize, std: f64) -> Tensor {
    let mut t = Tensor::zeros(rows, cols);
    for v in t.values_mut() {
        *v = std * rng.gaussian();
    }
    t
}

/// Draw the frozen parameters in documented order. Weight entries are
/// N(0, 1); biases N(0, 0.0001), i.e. std 0.01.
fn draw_params(spec: &SynthSpec, rng: &mut Prng) -> FrozenParams {
    const BIAS_STD: f64 = 0.01;
    match spec.kind {
        SynthKind::LinearGaussian => {
            let a1 = gaussian_matrix(rng, spec.n1, spec.d, 1.0);
            let b1 = gaussian_matrix(rng, 1, spec.n1, BIAS_STD);
            let a2 = gaussian_matrix(rng, spec.big_d, spec.n1, 1.0);
            let b2 = gaussian_matrix(rng, 1, spec.big_d, BIAS_STD);
            FrozenParams::Linear { a1, b1, a2, b2 }
        }
        SynthKind::Sdg => {
            let a11 = gaussian_matrix(rng, spec.n1, spec.d, 1.0);
            let a12 = gaussian_matrix(rng, spec.n1, spec.d, 1.0);
            let b1 = gaussian_matrix(rng, 1, spec.n1, BIAS_STD);
            let a2 = gaussian_matrix(rng, spec.big_d, spec.n1, 1.0);
            let b2 = gaussian_matrix(rng, 1, spec.big_d, BIAS_STD);
            FrozenParams::Sdg {
                a11,
                a12,
                b1,
                a2,
                b2,
            }
        }
    }
}

fn affine_row(z: &[f64], w: &Tensor, b: Option<&Tensor>, out: &mut [f64]) {
    // out_j = sum_k w[j][k] z[k] (+ b_j)
    for (j, o) in out.iter_mut().enumerate() {
        let row = w.row_slice(j);
        let mut acc = b.map_or(0.0, |bt| bt.get(0, j));
        for (wk, zk) in row.iter().zip(z) {
            acc += wk * zk;
        }
        *o = acc;
    }
}

/// Push one latent row through the linear construction.
pub fn push_linear(frozen: &FrozenParams, z1: &[f64], out: &mut [f64]) {
    let FrozenParams::Linear { a1, b1, a2, b2 } = frozen else {
        panic!("push_linear on non-linear params");
    };
    let mut z2 = vec![0.0; a1.rows()];
    affine_row(z1, a1, Some(b1), &mut z2);
    affine_row(&z2, a2, Some(b2), out);
}

/// Push one latent row and eps row through the stochastic construction:
/// z2 = A11 z1 + (A12 z1) * eps + b1. The bias is accumulated inside the
/// mu term, matching the stochastic layer, so the A12 = 0 case reduces
/// bitwise to `push_linear`.
pub fn push_sdg(frozen: &FrozenParams, z1: &[f64], eps: &[f64], out: &mut [f64]) {
    let FrozenParams::Sdg {
        a11,
        a12,
        b1,
        a2,
        b2,
    } = frozen
    else {
        panic!("push_sdg on non-sdg params");
    };
    let n1 = a11.rows();
    let mut mu = vec![0.0; n1];
    let mut sigma = vec![0.0; n1];
    affine_row(z1, a11, Some(b1), &mut mu);
    affine_row(z1, a12, None, &mut sigma);
    let mut z2 = vec![0.0; n1];
    for k in 0..n1 {
        z2[k] = mu[k] + sigma[k] * eps[k];
    }
    affine_row(&z2, a2, Some(b2), out);
}

/// n samples from the frozen network; per sample a fresh z1 (and eps for
/// the stochastic kind), drawn in that order.
fn push_samples(
    spec: &SynthSpec,
    frozen: &FrozenParams,
    n: usize,
    rng: &mut Prng,
) -> Tensor {
    let mut data = Tensor::zeros(n, spec.big_d);
    let mut z1 = vec![0.0; spec.d];
    let mut eps = vec![0.0; spec.n1];
    for i in 0..n {
        for z in z1.iter_mut() {
            *z = rng.gaussian();
        }
        let row_start = i * spec.big_d;
        let out = &mut data.values_mut()[row_start..row_start + spec.big_d];
        match spec.kind {
            SynthKind::LinearGaussian => push_linear(frozen, &z1, out),
            SynthKind::Sdg => {
                for e in eps.iter_mut() {
                    *e = rng.gaussian();
                }
                push_sdg(frozen, &z1, &eps, out);
            }
        }
    }
    data
}

/// Generate a dataset: parameters and samples all derive from `spec.seed`.
pub fn generate(spec: SynthSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let mut rng = Prng::new(spec.seed);
    let frozen = draw_params(&spec, &mut rng);
    let data = push_samples(&spec, &frozen, spec.n, &mut rng);
    debug_assert!(data.all_finite());
    Ok(Dataset { spec, data, frozen })
}

impl Dataset {
    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn frozen(&self) -> &FrozenParams {
        &self.frozen
    }

    /// Fresh draws from the frozen ground-truth network.
    pub fn sample_fresh(&self, n: usize, rng: &mut Prng) -> Result<Tensor, DataError> {
        if n == 0 {
            return Err(DataError::EmptySample);
        }
        Ok(push_samples(&self.spec, &self.frozen, n, rng))
    }

    /// The frozen network as ModelParams (the "perfect generator").
    pub fn generator_params(&self) -> (Vec<LayerSpec>, ModelParams) {
        match &self.frozen {
            FrozenParams::Linear { a1, b1, a2, b2 } => {
                let spec = vec![
                    LayerSpec::det(self.spec.d, self.spec.n1, Activation::None),
                    LayerSpec::det(self.spec.n1, self.spec.big_d, Activation::None),
                ];
                let params = ModelParams::from_tensors(
                    &spec,
                    vec![a1.clone(), b1.clone(), a2.clone(), b2.clone()],
                );
                (spec, params)
            }
            FrozenParams::Sdg {
                a11,
                a12,
                b1,
                a2,
                b2,
            } => {
                let spec = vec![
                    LayerSpec::stochastic(self.spec.d, self.spec.n1, Activation::None),
                    LayerSpec::det(self.spec.n1, self.spec.big_d, Activation::None),
                ];
                let params = ModelParams::from_tensors(
                    &spec,
                    vec![
                        a11.clone(),
                        b1.clone(),
                        a12.clone(),
                        Tensor::zeros(1, self.spec.n1),
                        a2.clone(),
                        b2.clone(),
                    ],
                );
                (spec, params)
            }
        }
    }
}

/// Conventional file name, e.g. `data3_seed7.csv`.
pub fn dataset_file_name(which: usize, seed: u64) -> String {
    format!("data{which}_seed{seed}.csv")
}

/// Text format: `# kind=<k> d=<d> D=<D> N1=<n1> n=<n> seed=<s>` then one
/// comma-separated row per sample, printed with 17 significant digits so
/// values round-trip exactly.
pub fn write_dataset(dataset: &Dataset, mut w: impl Write) -> std::io::Result<()> {
    let s = &dataset.spec;
    writeln!(
        w,
        "# kind={} d={} D={} N1={} n={} seed={}",
        s.kind, s.d, s.big_d, s.n1, s.n, s.seed
    )?;
    let data = &dataset.data;
    let mut line = String::new();
    for i in 0..data.rows() {
        line.clear();
        for (j, v) in data.row_slice(i).iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v:.16e}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn write_dataset_file(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    let file = std::fs::File::create(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut buf = std::io::BufWriter::new(file);
    write_dataset(dataset, &mut buf).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Parse a dataset file. The frozen generator parameters are re-derived
/// from the header seed, which the generation procedure guarantees to be
/// the ones that produced the data.
pub fn read_dataset(r: impl BufRead, path: &str) -> Result<Dataset, DataError> {
    let mut lines = r.lines().enumerate();
    let parse_err = |line: usize, msg: String| DataError::Parse {
        path: path.to_string(),
        line,
        msg,
    };
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let header = header.map_err(|e| DataError::Io {
        path: path.to_string(),
        source: e,
    })?;
    let body = header
        .strip_prefix("# ")
        .ok_or_else(|| parse_err(1, "header must start with `# `".into()))?;
    let mut kind = None;
    let mut fields = [0u64; 5]; // d, D, N1, n, seed
    let mut seen = [false; 5];
    for part in body.split_whitespace() {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed field {part:?}")))?;
        match key {
            "kind" => {
                kind = SynthKind::parse(value);
                if kind.is_none() {
                    return Err(parse_err(1, format!("unknown kind {value:?}")));
                }
            }
            _ => {
                let slot = match key {
                    "d" => 0,
                    "D" => 1,
                    "N1" => 2,
                    "n" => 3,
                    "seed" => 4,
                    _ => return Err(parse_err(1, format!("unknown field {key:?}"))),
                };
                fields[slot] = value
                    .parse()
                    .map_err(|e| parse_err(1, format!("field {key}: {e}")))?;
                seen[slot] = true;
            }
        }
    }
    let kind = kind.ok_or_else(|| parse_err(1, "missing kind".into()))?;
    if seen != [true; 5] {
        return Err(parse_err(1, "missing header field".into()));
    }
    let spec = SynthSpec {
        kind,
        d: fields[0] as usize,
        big_d: fields[1] as usize,
        n1: fields[2] as usize,
        n: fields[3] as usize,
        seed: fields[4],
    };
    spec.validate()?;

    let mut data = Tensor::zeros(spec.n, spec.big_d);
    let mut rows_read = 0usize;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| DataError::Io {
            path: path.to_string(),
            source: e,
        })?;
        if line.is_empty() {
            continue;
        }
        if rows_read == spec.n {
            return Err(parse_err(
                line_no,
                format!("expected {} data rows, found more", spec.n),
            ));
        }
        let mut count = 0usize;
        for (j, tok) in line.split(',').enumerate() {
            if j >= spec.big_d {
                return Err(parse_err(
                    line_no,
                    format!("row has more than {} values", spec.big_d),
                ));
            }
            let v: f64 = tok
                .parse()
                .map_err(|e| parse_err(line_no, format!("column {}: {e}", j + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, format!("non-finite value {v}")));
            }
            data.set(rows_read, j, v);
            count += 1;
        }
        if count != spec.big_d {
            return Err(parse_err(
                line_no,
                format!("row has {count} values, expected {}", spec.big_d),
            ));
        }
        rows_read += 1;
    }
    if rows_read != spec.n {
        return Err(parse_err(
            rows_read + 2,
            format!("expected {} data rows, found {rows_read}", spec.n),
        ));
    }

    let mut rng = Prng::new(spec.seed);
    let frozen = draw_params(&spec, &mut rng);
    Ok(Dataset { spec, data, frozen })
}

pub fn read_dataset_file(path: &Path) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_dataset(std::io::BufReader::new(file), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{ks_statistic, normal_cdf};

    #[test]
    fn preset_dims() {
        let d1 = generate(SynthSpec::preset(1, 0)).unwrap();
        assert_eq!(d1.data().shape(), (10_000, 10));
        let d3 = generate(SynthSpec::preset(3, 0)).unwrap();
        assert_eq!(d3.data().shape(), (10_000, 10));
        assert!(d1.data().all_finite());
        assert!(d3.data().all_finite());
    }

    #[test]
    fn zero_weights_give_constant_rows() {
        let spec = SynthSpec {
            kind: SynthKind::LinearGaussian,
            d: 2,
            big_d: 4,
            n1: 5,
            n: 50,
            seed: 3,
        };
        let mut ds = generate(spec).unwrap();
        // force A1 = A2 = 0: every row must equal b2
        let FrozenParams::Linear { a1, a2, b2, .. } = &mut ds.frozen else {
            unreachable!()
        };
        *a1 = Tensor::zeros(5, 2);
        *a2 = Tensor::zeros(4, 5);
        let b2 = b2.clone();
        let mut rng = Prng::new(9);
        let fresh = ds.sample_fresh(20, &mut rng).unwrap();
        for i in 0..20 {
            for j in 0..4 {
                assert_eq!(fresh.get(i, j), b2.get(0, j));
            }
        }
    }

    #[test]
    fn sigma_path_off_equals_linear_construction() {
        // with A12 = 0, the stochastic push at A11 = A1 matches the linear
        // push exactly for identical latents
        let spec_lin = SynthSpec {
            kind: SynthKind::LinearGaussian,
            d: 2,
            big_d: 6,
            n1: 8,
            n: 10,
            seed: 5,
        };
        let lin = generate(spec_lin).unwrap();
        let FrozenParams::Linear { a1, b1, a2, b2 } = lin.frozen().clone() else {
            unreachable!()
        };
        let sdg = FrozenParams::Sdg {
            a11: a1,
            a12: Tensor::zeros(8, 2),
            b1,
            a2,
            b2,
        };
        let mut rng = Prng::new(31);
        for _ in 0..50 {
            let z1: Vec<f64> = (0..2).map(|_| rng.gaussian()).collect();
            let eps: Vec<f64> = (0..8).map(|_| rng.gaussian()).collect();
            let mut out_lin = vec![0.0; 6];
            let mut out_sdg = vec![0.0; 6];
            push_linear(lin.frozen(), &z1, &mut out_lin);
            push_sdg(&sdg, &z1, &eps, &mut out_sdg);
            let bits_a: Vec<u64> = out_lin.iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = out_sdg.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn determinism_same_spec_same_dataset() {
        let spec = SynthSpec::preset(3, 7);
        let a = generate(spec).unwrap();
        let b = generate(spec).unwrap();
        assert_eq!(a.data().values(), b.data().values());
    }

    #[test]
    fn linear_data_is_gaussian_by_projection_ks() {
        // affine maps of Gaussians are Gaussian: per-axis KS against the
        // fitted normal passes at the 5% critical value
        let ds = generate(SynthSpec::preset(1, 11)).unwrap();
        let n = ds.data().rows();
        let critical = 1.36 / (n as f64).sqrt();
        for axis in [0usize, 3, 7] {
            let col: Vec<f64> = (0..n).map(|i| ds.data().get(i, axis)).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (n as f64 - 1.0);
            let std = var.sqrt();
            let stat = ks_statistic(&col, |x| normal_cdf((x - mean) / std));
            assert!(stat < critical, "axis {axis}: ks {stat} vs {critical}");
        }
    }

    #[test]
    fn sdg_data_has_excess_kurtosis() {
        // the sigma * eps product makes 1-D projections heavier-tailed than
        // Gaussian: excess kurtosis beyond 3 standard errors
        let ds = generate(SynthSpec::preset(3, 11)).unwrap();
        let n = ds.data().rows();
        let se = (24.0 / n as f64).sqrt();
        let mut exceeding = 0;
        for axis in 0..10 {
            let col: Vec<f64> = (0..n).map(|i| ds.data().get(i, axis)).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let m2 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let m4 = col.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n as f64;
            let excess = m4 / (m2 * m2) - 3.0;
            if excess > 3.0 * se {
                exceeding += 1;
            }
        }
        assert!(exceeding >= 8, "only {exceeding}/10 projections leptokurtic");
    }

    #[test]
    fn round_trip_bytes() {
        let spec = SynthSpec {
            kind: SynthKind::Sdg,
            d: 2,
            big_d: 3,
            n1: 4,
            n: 7,
            seed: 19,
        };
        let ds = generate(spec).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let restored = read_dataset(std::io::Cursor::new(&buf), "mem").unwrap();
        assert_eq!(restored.data().values(), ds.data().values());
        assert_eq!(restored.spec(), ds.spec());
        let mut buf2 = Vec::new();
        write_dataset(&restored, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn short_file_errors_with_line_number() {
        let spec = SynthSpec {
            kind: SynthKind::LinearGaussian,
            d: 2,
            big_d: 2,
            n1: 3,
            n: 10,
            seed: 1,
        };
        let ds = generate(spec).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        // drop the last row
        let text = String::from_utf8(buf).unwrap();
        let truncated: Vec<&str> = text.lines().take(10).collect();
        let short = truncated.join("\n");
        match read_dataset(std::io::Cursor::new(short.into_bytes()), "mem") {
            Err(DataError::Parse { line: 11, msg, .. }) => {
                assert!(msg.contains("expected 10 data rows"), "{msg}")
            }
            other => panic!("expected line-11 parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_row_and_nonfinite_rejected() {
        let header = "# kind=linear-gaussian d=2 D=2 N1=3 n=2 seed=1\n";
        let bad_len = format!("{header}1.0,2.0\n3.0\n");
        match read_dataset(std::io::Cursor::new(bad_len.into_bytes()), "mem") {
            Err(DataError::Parse { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        let bad_value = format!("{header}1.0,2.0\n3.0,inf\n");
        match read_dataset(std::io::Cursor::new(bad_value.into_bytes()), "mem") {
            Err(DataError::Parse { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn write_twice_identical_files() {
        let ds = generate(SynthSpec::preset(3, 7)).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_dataset(&ds, &mut a).unwrap();
        write_dataset(&ds, &mut b).unwrap();
        assert_eq!(a, b);
    }
}
