//! Seeded synthetic-data generators for the completion and separable
//! experiment protocols, plus the small printed fixture matrices.

use crate::error::{Error, Result};
use crate::matrix::{norm2, DenseMatrix};
use crate::rng::Stream;
use crate::solver::ObservationMask;

/// Parameters of one synthetic completion instance.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    /// Fraction of `H` entries set to zero.
    pub h_zero_fraction: f64,
    /// Fraction of `X` entries hidden by the mask.
    pub missing_fraction: f64,
    /// Target RMSE between clean and noisy data; 0 means no noise.
    pub noise_level: f64,
    /// Rescale so the mean entry of the clean data equals 1.
    pub normalize_mean_to_one: bool,
    pub seed: u64,
    /// Draw the columns of `H` from a Dirichlet(0.2) instead of the
    /// uniform-then-zeroing scheme (used by the volume-regularized fixtures).
    pub dirichlet_h: bool,
}

impl SyntheticSpec {
    pub fn new(m: usize, n: usize, rank: usize, seed: u64) -> Self {
        Self {
            m,
            n,
            rank,
            h_zero_fraction: 0.0,
            missing_fraction: 0.0,
            noise_level: 0.0,
            normalize_mean_to_one: true,
            seed,
            dirichlet_h: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.rank > self.m.min(self.n) {
            return Err(Error::InvalidArgument("rank out of range".into()));
        }
        if !(0.0..1.0).contains(&self.h_zero_fraction)
            || !(0.0..1.0).contains(&self.missing_fraction)
        {
            return Err(Error::InvalidArgument(
                "fractions must lie in [0, 1)".into(),
            ));
        }
        if self.noise_level < 0.0 {
            return Err(Error::InvalidArgument(
                "noise level must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// One generated completion instance.
#[derive(Debug, Clone)]
pub struct CompletionInstance {
    pub x_noisy: DenseMatrix,
    pub x_clean: DenseMatrix,
    pub mask: ObservationMask,
    pub w_true: DenseMatrix,
    pub h_true: DenseMatrix,
}

const MASK_ATTEMPTS: usize = 100;

/// Draws `(X_noisy, X_clean, mask, W, H)` following the completion protocol:
/// uniform factors, a fraction of `H` zeroed, the clean data rescaled to mean
/// one, uniform noise rescaled to hit the target RMSE, and a uniform mask that
/// keeps at least one observed entry in every row and column.
pub fn gen_completion_instance(spec: &SyntheticSpec) -> Result<CompletionInstance> {
    spec.validate()?;
    let (m, n, r) = (spec.m, spec.n, spec.rank);
    let mut ws = Stream::new(spec.seed, "gen-w", &[]);
    let mut hs = Stream::new(spec.seed, "gen-h", &[]);
    let mut w = DenseMatrix::from_fn(m, r, |_, _| ws.uniform());
    let mut h = if spec.dirichlet_h {
        let mut cols = DenseMatrix::zeros(r, n);
        for j in 0..n {
            let draws: Vec<f64> = (0..r).map(|_| hs.gamma(0.2)).collect();
            let total: f64 = draws.iter().sum();
            for i in 0..r {
                cols.set(i, j, draws[i] / total.max(f64::MIN_POSITIVE));
            }
        }
        cols
    } else {
        DenseMatrix::from_fn(r, n, |_, _| hs.uniform())
    };
    if spec.h_zero_fraction > 0.0 {
        let mut zs = Stream::new(spec.seed, "gen-h-zeros", &[]);
        let total = r * n;
        let k = (spec.h_zero_fraction * total as f64).round() as usize;
        for idx in zs.sample_indices(total, k) {
            h.data_mut()[idx] = 0.0;
        }
    }
    let mut x_clean = w.matmul(&h);
    if spec.normalize_mean_to_one {
        let mean = x_clean.mean();
        if mean > 0.0 {
            x_clean = x_clean.scale(1.0 / mean);
            w = w.scale(1.0 / mean);
        }
    }

    let x_noisy = if spec.noise_level > 0.0 {
        add_noise_at_rmse(&x_clean, spec.noise_level, spec.seed)?
    } else {
        x_clean.clone()
    };

    let mask = draw_covering_mask(m, n, spec.missing_fraction, spec.seed)?;
    Ok(CompletionInstance {
        x_noisy,
        x_clean,
        mask,
        w_true: w,
        h_true: h,
    })
}

/// Adds uniform noise rescaled so the RMSE against `x` hits `target` within
/// 1%. Negative entries introduced by the noise are clipped to zero and the
/// scale re-adjusted, so the returned data stays nonnegative.
fn add_noise_at_rmse(x: &DenseMatrix, target: f64, seed: u64) -> Result<DenseMatrix> {
    let (m, n) = x.shape();
    let mut ns = Stream::new(seed, "gen-noise", &[]);
    let noise = DenseMatrix::from_fn(m, n, |_, _| ns.uniform_in(-1.0, 1.0));
    let count = (m * n) as f64;
    let mut scale = target * count.sqrt() / noise.fro_norm().max(f64::MIN_POSITIVE);
    for _ in 0..200 {
        let mut candidate = x.clone();
        candidate.axpy(scale, &noise);
        let candidate = candidate.map(|v| v.max(0.0));
        let rmse = (candidate.sub(x).fro_norm_sq() / count).sqrt();
        if (rmse - target).abs() <= 0.01 * target {
            return Ok(candidate);
        }
        if rmse <= f64::MIN_POSITIVE {
            break;
        }
        scale *= target / rmse;
    }
    Err(Error::InvalidArgument(format!(
        "could not calibrate noise to RMSE {target}"
    )))
}

fn draw_covering_mask(
    m: usize,
    n: usize,
    missing_fraction: f64,
    seed: u64,
) -> Result<ObservationMask> {
    if missing_fraction == 0.0 {
        return Ok(ObservationMask::ones(m, n));
    }
    let total = m * n;
    let hidden = (missing_fraction * total as f64).round() as usize;
    for attempt in 0..MASK_ATTEMPTS {
        let mut ms = Stream::new(seed, "gen-mask", &[attempt as u64]);
        let mut weights = vec![1.0; total];
        for idx in ms.sample_indices(total, hidden) {
            weights[idx] = 0.0;
        }
        let mat = DenseMatrix::from_raw(m, n, weights);
        let rows_ok = (0..m).all(|i| mat.row(i).iter().any(|&v| v != 0.0));
        let cols_ok = (0..n).all(|j| (0..m).any(|i| mat.get(i, j) != 0.0));
        if rows_ok && cols_ok {
            return ObservationMask::new(mat);
        }
    }
    Err(Error::MaskResampleExhausted(MASK_ATTEMPTS))
}

/// Draws an r-separable instance `X = W [I_r, H'] Pi + N`, returning the data
/// and the positions of the pure columns (`true_indices[k]` is the column of
/// `X` equal to `W(:, k)` before noise). Each noise column has 2-norm at most
/// `noise`.
pub fn gen_separable_instance(
    m: usize,
    n: usize,
    r: usize,
    noise: f64,
    seed: u64,
) -> Result<(DenseMatrix, Vec<usize>)> {
    if n < r || r == 0 || r > m.min(n) {
        return Err(Error::InvalidArgument("need 1 <= r <= min(m, n)".into()));
    }
    let mut ws = Stream::new(seed, "sep-w", &[]);
    let w = DenseMatrix::from_fn(m, r, |_, _| ws.uniform());
    let mut hs = Stream::new(seed, "sep-h", &[]);
    // H = [I_r, H'] with the columns of H' on the simplex, then permuted
    let mut h = DenseMatrix::zeros(r, n);
    for k in 0..r {
        h.set(k, k, 1.0);
    }
    for j in r..n {
        let raw: Vec<f64> = (0..r)
            .map(|_| hs.uniform().max(f64::MIN_POSITIVE))
            .collect();
        let total: f64 = raw.iter().sum();
        for i in 0..r {
            h.set(i, j, raw[i] / total);
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut ps = Stream::new(seed, "sep-perm", &[]);
    ps.shuffle(&mut perm);
    let mut h_perm = DenseMatrix::zeros(r, n);
    for (src, &dst) in perm.iter().enumerate() {
        for i in 0..r {
            h_perm.set(i, dst, h.get(i, src));
        }
    }
    let true_indices: Vec<usize> = (0..r).map(|k| perm[k]).collect();
    let mut x = w.matmul(&h_perm);
    if noise > 0.0 {
        let mut nsr = Stream::new(seed, "sep-noise", &[]);
        for j in 0..n {
            let g: Vec<f64> = (0..m).map(|_| nsr.normal()).collect();
            let nrm = norm2(&g).max(f64::MIN_POSITIVE);
            for i in 0..m {
                let v = x.get(i, j) + noise * g[i] / nrm;
                x.set(i, j, v);
            }
        }
    }
    Ok((x, true_indices))
}

/// Returns one of the printed fixture matrices by name.
///
/// Names: `example1_X`, `example1_W`, `example1_H` (the 6x6 factorization
/// whose bounded variant is unique), `tightness_X/W/H` (the 4x4 example whose
/// uniqueness is not explained by scattering), and `pmf_H_boundary`.
pub fn fixture(name: &str) -> Result<DenseMatrix> {
    let rows: Vec<Vec<f64>> = match name {
        "example1_X" => vec![
            vec![11.0, 9.0, 6.0, 2.0, 3.0, 9.0],
            vec![9.0, 11.0, 9.0, 3.0, 2.0, 6.0],
            vec![3.0, 9.0, 11.0, 9.0, 6.0, 2.0],
            vec![2.0, 6.0, 9.0, 11.0, 9.0, 3.0],
            vec![6.0, 2.0, 3.0, 9.0, 11.0, 9.0],
            vec![9.0, 3.0, 2.0, 6.0, 9.0, 11.0],
        ],
        "example1_W" => vec![
            vec![2.0, 3.0, 0.0],
            vec![3.0, 2.0, 0.0],
            vec![3.0, 0.0, 2.0],
            vec![2.0, 0.0, 3.0],
            vec![0.0, 2.0, 3.0],
            vec![0.0, 3.0, 2.0],
        ],
        "example1_H" => vec![
            vec![1.0, 3.0, 3.0, 1.0, 0.0, 0.0],
            vec![3.0, 1.0, 0.0, 0.0, 1.0, 3.0],
            vec![0.0, 0.0, 1.0, 3.0, 3.0, 1.0],
        ],
        "tightness_X" => vec![
            vec![0.25, 0.25, 0.75, 0.75],
            vec![0.2, 0.6, 0.6, 0.2],
            vec![0.75, 0.75, 0.25, 0.25],
            vec![0.8, 0.4, 0.4, 0.8],
        ],
        "tightness_W" => vec![
            vec![0.0, 0.5, 1.0],
            vec![0.2, 1.0, 0.2],
            vec![1.0, 0.5, 0.0],
            vec![0.8, 0.0, 0.8],
        ],
        "tightness_H" => vec![
            vec![0.75, 0.5, 0.0, 0.25],
            vec![0.0, 0.5, 0.5, 0.0],
            vec![0.25, 0.0, 0.5, 0.75],
        ],
        "pmf_H_boundary" => vec![
            vec![1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0, 0.0, 0.0],
            vec![2.0 / 3.0, 1.0 / 3.0, 0.0, 0.0, 1.0 / 3.0, 2.0 / 3.0],
            vec![0.0, 0.0, 1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0],
        ],
        other => return Err(Error::UnknownFixture(other.to_string())),
    };
    DenseMatrix::from_rows(&rows)
}

/// Every fixture name accepted by [`fixture`].
pub const FIXTURE_NAMES: &[&str] = &[
    "example1_X",
    "example1_W",
    "example1_H",
    "tightness_X",
    "tightness_W",
    "tightness_H",
    "pmf_H_boundary",
];
