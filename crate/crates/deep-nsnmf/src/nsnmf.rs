//! Single-layer non-smooth NMF: multiplicative updates minimizing
//! `½‖X − WH‖²`, with an optional smoothing step `H ← S·H` after each
//! coefficient update. Smoothing H costs it sparsity, which the W update
//! compensates for — that is where the sparse basis comes from.

use ndarray::{Array2, Zip};
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::NonNegMatrix;
use crate::seed;

/// How the factors are initialized before the first update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitKind {
    /// Entries uniform on (0, 1].
    UniformRandom,
    /// Entries uniform on (0, 1] scaled by `sqrt(mean(X)/k)`, which puts the
    /// initial product `WH` at the data's magnitude.
    #[default]
    ScaledRandom,
}

impl InitKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "uniform_random" | "uniform" => Ok(InitKind::UniformRandom),
            "scaled_random" | "scaled" => Ok(InitKind::ScaledRandom),
            other => Err(Error::Config(format!(
                "unknown init kind {other:?}; expected uniform_random or scaled_random"
            ))),
        }
    }
}

/// Configuration for one factorization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitConfig {
    /// Feature count; over-complete `k > min(m, n)` is allowed.
    pub k: usize,
    /// Smoothing strength in `[0, 1]`; `0` disables smoothing entirely.
    pub theta: f64,
    pub max_iters: usize,
    /// Stop when the relative cost change over the last
    /// [`STOP_WINDOW`] iterations falls below this.
    pub tol: f64,
    /// Stabilizer added to every update denominator.
    pub eps: f64,
    pub seed: u64,
    pub init: InitKind,
}

/// Width, in iterations, of the relative-change stopping window.
pub const STOP_WINDOW: usize = 5;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_EPS: f64 = 1e-12;
pub const DEFAULT_MAX_ITERS: usize = 500;

impl UnitConfig {
    pub fn new(k: usize) -> Self {
        UnitConfig {
            k,
            theta: 0.0,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            eps: DEFAULT_EPS,
            seed: 0,
            init: InitKind::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("feature count k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!(
                "theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Smoothing matrix `S = (1−θ)·I(k) + (θ/k)·ones(k)`; symmetric, rows sum
/// to 1, diagonal `(1−θ) + θ/k`.
pub fn smoothing_matrix(k: usize, theta: f64) -> Result<NonNegMatrix> {
    if k < 1 {
        return Err(Error::Config("smoothing matrix requires k >= 1".into()));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Config(format!(
            "theta must lie in [0, 1], got {theta}"
        )));
    }
    let off = theta / k as f64;
    let diag = (1.0 - theta) + off;
    let data = Array2::from_shape_fn((k, k), |(i, j)| if i == j { diag } else { off });
    Ok(NonNegMatrix::from_array_unchecked(data))
}

/// Reconstruction cost `½‖X − WH‖²`.
pub fn cost(x: &NonNegMatrix, w: &NonNegMatrix, h: &NonNegMatrix) -> Result<f64> {
    check_factor_shapes(x, w, h)?;
    let recon = w.as_array().dot(h.as_array());
    Ok(cost_of_reconstruction(x.as_array(), &recon))
}

/// `½ Σ (X − R)²` for a precomputed reconstruction `R`.
pub(crate) fn cost_of_reconstruction(x: &Array2<f64>, recon: &Array2<f64>) -> f64 {
    debug_assert_eq!(x.dim(), recon.dim());
    let mut acc = 0.0;
    Zip::from(x).and(recon).for_each(|&a, &b| {
        let d = a - b;
        acc += d * d;
    });
    0.5 * acc
}

/// Elementwise multiplicative step `base ⊙ num / (den + eps)`.
pub(crate) fn mult_update(
    base: &Array2<f64>,
    num: &Array2<f64>,
    den: &Array2<f64>,
    eps: f64,
) -> Array2<f64> {
    let mut out = base.clone();
    Zip::from(&mut out).and(num).and(den).for_each(|b, &n, &d| {
        *b *= n / (d + eps);
    });
    out
}

pub(crate) fn update_w_arrays(
    x: &Array2<f64>,
    w: &Array2<f64>,
    h: &Array2<f64>,
    eps: f64,
) -> Array2<f64> {
    let num = x.dot(&h.t());
    let den = w.dot(h).dot(&h.t());
    mult_update(w, &num, &den, eps)
}

pub(crate) fn update_h_arrays(
    x: &Array2<f64>,
    w: &Array2<f64>,
    h: &Array2<f64>,
    eps: f64,
) -> Array2<f64> {
    let num = w.t().dot(x);
    let den = w.t().dot(&w.dot(h));
    mult_update(h, &num, &den, eps)
}

/// One multiplicative basis update `W ← W ⊙ (XHᵀ)/(WHHᵀ + eps)`.
pub fn update_w(
    x: &NonNegMatrix,
    w: &NonNegMatrix,
    h: &NonNegMatrix,
    eps: f64,
) -> Result<NonNegMatrix> {
    check_factor_shapes(x, w, h)?;
    Ok(NonNegMatrix::from_array_unchecked(update_w_arrays(
        x.as_array(),
        w.as_array(),
        h.as_array(),
        eps,
    )))
}

/// One multiplicative coefficient update `H ← H ⊙ (WᵀX)/(WᵀWH + eps)`.
pub fn update_h(
    x: &NonNegMatrix,
    w: &NonNegMatrix,
    h: &NonNegMatrix,
    eps: f64,
) -> Result<NonNegMatrix> {
    check_factor_shapes(x, w, h)?;
    Ok(NonNegMatrix::from_array_unchecked(update_h_arrays(
        x.as_array(),
        w.as_array(),
        h.as_array(),
        eps,
    )))
}

fn check_factor_shapes(x: &NonNegMatrix, w: &NonNegMatrix, h: &NonNegMatrix) -> Result<()> {
    if w.cols() != h.rows() {
        return Err(Error::DimMismatch {
            a_rows: w.rows(),
            a_cols: w.cols(),
            b_rows: h.rows(),
            b_cols: h.cols(),
        });
    }
    if w.rows() != x.rows() || h.cols() != x.cols() {
        return Err(Error::ShapeMismatch {
            context: "factorization (X vs WH)",
            a_rows: x.rows(),
            a_cols: x.cols(),
            b_rows: w.rows(),
            b_cols: h.cols(),
        });
    }
    Ok(())
}

/// Stop once the relative cost change across the last [`STOP_WINDOW`]
/// iterations drops below `tol`. `trace[0]` is the pre-iteration cost.
pub(crate) fn should_stop(trace: &[f64], tol: f64) -> bool {
    if trace.len() < STOP_WINDOW + 1 {
        return false;
    }
    let old = trace[trace.len() - 1 - STOP_WINDOW];
    let new = trace[trace.len() - 1];
    (old - new).abs() / old.abs().max(f64::MIN_POSITIVE) < tol
}

/// Draws a `rows × cols` factor with entries uniform on (0, 1] times `scale`.
pub(crate) fn init_factor(
    rows: usize,
    cols: usize,
    scale: f64,
    rng: &mut impl Rng,
) -> Array2<f64> {
    let values: Vec<f64> = (0..rows * cols)
        .map(|_| (1.0 - rng.random::<f64>()) * scale)
        .collect();
    Array2::from_shape_vec((rows, cols), values).expect("shape matches generated length")
}

/// Outcome of [`factorize`].
#[derive(Debug, Clone)]
pub struct FactorizeResult {
    pub w: NonNegMatrix,
    pub h: NonNegMatrix,
    /// Cost before the first iteration, then after every iteration.
    pub trace: Vec<f64>,
    /// Set when the input was entirely zero and the loop was skipped.
    pub zero_input: bool,
}

/// Full single-layer run: alternate `update_w`/`update_h`, smooth
/// `H ← S·H` after each coefficient update when `θ > 0`, and stop on
/// `max_iters` or the windowed relative-change rule.
pub fn factorize(x: &NonNegMatrix, cfg: &UnitConfig) -> Result<FactorizeResult> {
    cfg.validate()?;
    let (m, n) = x.shape();
    let k = cfg.k;
    let mut rng = seed::rng_from(cfg.seed);

    let data_mean = x.mean();
    if data_mean == 0.0 {
        // Degenerate input: keep W at its initialization, zero H, flag it.
        let scale = match cfg.init {
            InitKind::UniformRandom => 1.0,
            InitKind::ScaledRandom => (1.0 / k as f64).sqrt(),
        };
        let w = init_factor(m, k, scale, &mut rng);
        return Ok(FactorizeResult {
            w: NonNegMatrix::from_array_unchecked(w),
            h: NonNegMatrix::zeros(k, n)?,
            trace: vec![0.0],
            zero_input: true,
        });
    }

    let scale = match cfg.init {
        InitKind::UniformRandom => 1.0,
        InitKind::ScaledRandom => (data_mean / k as f64).sqrt(),
    };
    let mut w = init_factor(m, k, scale, &mut rng);
    let mut h = init_factor(k, n, scale, &mut rng);

    let smoothing = if cfg.theta > 0.0 {
        Some(smoothing_matrix(k, cfg.theta)?.into_array())
    } else {
        None
    };

    let xa = x.as_array();
    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    trace.push(cost_of_reconstruction(xa, &w.dot(&h)));

    for _ in 0..cfg.max_iters {
        w = update_w_arrays(xa, &w, &h, cfg.eps);
        h = update_h_arrays(xa, &w, &h, cfg.eps);
        if let Some(s) = &smoothing {
            h = s.dot(&h);
        }
        trace.push(cost_of_reconstruction(xa, &w.dot(&h)));
        if should_stop(&trace, cfg.tol) {
            break;
        }
    }

    Ok(FactorizeResult {
        w: NonNegMatrix::from_array_unchecked(w),
        h: NonNegMatrix::from_array_unchecked(h),
        trace,
        zero_input: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;

    fn m(rows: usize, cols: usize, v: &[f64]) -> NonNegMatrix {
        NonNegMatrix::from_vec(rows, cols, v.to_vec()).unwrap()
    }

    fn random_nonneg(rows: usize, cols: usize, seed: u64) -> NonNegMatrix {
        let mut rng = seed::rng_from(seed);
        let vals: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f64>() * 3.0).collect();
        NonNegMatrix::from_vec(rows, cols, vals).unwrap()
    }

    #[test]
    fn smoothing_matrix_examples() {
        let s = smoothing_matrix(3, 0.0).unwrap();
        assert_eq!(s.values(), NonNegMatrix::identity(3).values());

        let s = smoothing_matrix(2, 1.0).unwrap();
        assert_eq!(s.values(), &[0.5, 0.5, 0.5, 0.5]);

        let s = smoothing_matrix(2, 0.5).unwrap();
        assert_eq!(s.values(), &[0.75, 0.25, 0.25, 0.75]);

        assert!(smoothing_matrix(2, -0.1).is_err());
        assert!(smoothing_matrix(2, 1.1).is_err());
    }

    #[test]
    fn smoothing_matrix_rows_sum_to_one_and_symmetric() {
        for k in [1usize, 2, 5, 17] {
            for theta in [0.0, 0.3, 0.9, 1.0] {
                let s = smoothing_matrix(k, theta).unwrap();
                for i in 0..k {
                    let row_sum: f64 = (0..k).map(|j| s.get(i, j)).sum();
                    assert_abs_diff_eq!(row_sum, 1.0, epsilon = 1e-15);
                    for j in 0..k {
                        assert_eq!(s.get(i, j), s.get(j, i));
                    }
                }
            }
        }
    }

    #[test]
    fn cost_examples() {
        let w = m(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let h = m(2, 2, &[3.0, 1.0, 2.0, 5.0]);
        let x = w.matmul(&h).unwrap();
        assert_eq!(cost(&x, &w, &h).unwrap(), 0.0);

        let x = m(1, 1, &[1.0]);
        assert_eq!(
            cost(&x, &m(1, 1, &[1.0]), &m(1, 1, &[0.0])).unwrap(),
            0.5
        );

        let x = m(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let i2 = NonNegMatrix::identity(2);
        assert_eq!(cost(&x, &i2, &i2).unwrap(), 1.0);
    }

    #[test]
    fn updates_fix_exact_factorization() {
        let w = random_nonneg(5, 3, 11);
        let h = random_nonneg(3, 6, 12);
        let x = w.matmul(&h).unwrap();
        let w2 = update_w(&x, &w, &h, DEFAULT_EPS).unwrap();
        let h2 = update_h(&x, &w, &h, DEFAULT_EPS).unwrap();
        for (a, b) in w.values().iter().zip(w2.values()) {
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
        for (a, b) in h.values().iter().zip(h2.values()) {
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn zero_entries_of_w_stay_zero() {
        let mut vals = random_nonneg(4, 3, 21).values().to_vec();
        vals[0] = 0.0;
        vals[7] = 0.0;
        let w = m(4, 3, &vals);
        let h = random_nonneg(3, 5, 22);
        let x = random_nonneg(4, 5, 23);
        let w2 = update_w(&x, &w, &h, DEFAULT_EPS).unwrap();
        assert_eq!(w2.values()[0], 0.0);
        assert_eq!(w2.values()[7], 0.0);
    }

    // Oracle: direct cost evaluation after each update pair on a seeded
    // rank-2 instance; the trace must never increase.
    #[test]
    fn update_pairs_do_not_increase_cost_on_rank2_data() {
        let a = random_nonneg(6, 2, 31);
        let b = random_nonneg(2, 6, 32);
        let x = a.matmul(&b).unwrap();
        let mut rng = seed::rng_from(33);
        let mut w = init_factor(6, 2, 1.0, &mut rng);
        let mut h = init_factor(2, 6, 1.0, &mut rng);
        let mut prev = cost_of_reconstruction(x.as_array(), &w.dot(&h));
        for _ in 0..50 {
            w = update_w_arrays(x.as_array(), &w, &h, DEFAULT_EPS);
            h = update_h_arrays(x.as_array(), &w, &h, DEFAULT_EPS);
            let c = cost_of_reconstruction(x.as_array(), &w.dot(&h));
            assert!(
                c <= prev + 1e-10,
                "cost rose from {prev} to {c}"
            );
            prev = c;
        }
    }

    #[test]
    fn factorize_theta_zero_matches_manual_update_loop() {
        let x = random_nonneg(8, 10, 41);
        let mut cfg = UnitConfig::new(3);
        cfg.seed = 42;
        cfg.max_iters = 25;
        cfg.tol = 1e-300;
        let res = factorize(&x, &cfg).unwrap();

        // replay: same seed, same order of draws, no smoothing step
        let mut rng = seed::rng_from(cfg.seed);
        let scale = (x.mean() / 3.0).sqrt();
        let mut w = init_factor(8, 3, scale, &mut rng);
        let mut h = init_factor(3, 10, scale, &mut rng);
        for _ in 0..25 {
            w = update_w_arrays(x.as_array(), &w, &h, cfg.eps);
            h = update_h_arrays(x.as_array(), &w, &h, cfg.eps);
        }
        assert_eq!(res.w.values(), w.as_slice().unwrap());
        assert_eq!(res.h.values(), h.as_slice().unwrap());
    }

    #[test]
    fn factorize_smoothing_forces_sparser_basis() {
        let x = random_nonneg(20, 50, 51);
        let mut plain_cfg = UnitConfig::new(5);
        plain_cfg.seed = 7;
        plain_cfg.max_iters = 200;
        plain_cfg.tol = 1e-300;
        let mut smooth_cfg = plain_cfg;
        smooth_cfg.theta = 0.9;

        let plain = factorize(&x, &plain_cfg).unwrap();
        let smooth = factorize(&x, &smooth_cfg).unwrap();
        let sp_plain = crate::eval::basis_sparsity(&plain.w, 1e-3);
        let sp_smooth = crate::eval::basis_sparsity(&smooth.w, 1e-3);
        assert!(
            sp_smooth > sp_plain,
            "sparsity {sp_smooth} (θ=0.9) vs {sp_plain} (θ=0)"
        );
    }

    #[test]
    fn factorize_recovers_single_nonzero_entry() {
        let mut vals = vec![0.0; 12];
        vals[5] = 2.5;
        let x = m(3, 4, &vals);
        let mut cfg = UnitConfig::new(1);
        cfg.seed = 3;
        cfg.max_iters = 200;
        cfg.tol = 1e-300;
        let res = factorize(&x, &cfg).unwrap();
        let final_cost = *res.trace.last().unwrap();
        assert!(final_cost < 1e-8, "final cost {final_cost}");
    }

    #[test]
    fn factorize_zero_input_is_flagged() {
        let x = NonNegMatrix::zeros(4, 6).unwrap();
        let mut cfg = UnitConfig::new(2);
        cfg.seed = 9;
        let res = factorize(&x, &cfg).unwrap();
        assert!(res.zero_input);
        assert!(res.h.values().iter().all(|&v| v == 0.0));
        assert!(res.w.values().iter().all(|&v| v > 0.0));
        assert_eq!(res.trace, vec![0.0]);
    }

    #[test]
    fn factorize_monotone_trace_without_smoothing() {
        for seed in [1u64, 2, 3] {
            let x = random_nonneg(12, 15, 60 + seed);
            let mut cfg = UnitConfig::new(4);
            cfg.seed = seed;
            cfg.max_iters = 60;
            cfg.tol = 1e-300;
            let res = factorize(&x, &cfg).unwrap();
            for pair in res.trace.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-10, "trace rose: {:?}", pair);
            }
        }
    }

    #[test]
    fn stopping_window_triggers() {
        // still falling across the window → keep going
        let falling = vec![10.0, 8.0, 6.0, 5.0, 4.5, 4.2];
        assert!(!should_stop(&falling, 1e-6));
        // constant over the last five steps → relative change 0 < tol
        let flat = vec![10.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0];
        assert!(should_stop(&flat, 1e-6));
        // too short to judge
        assert!(!should_stop(&flat[..5], 1e-6));
    }

    #[test]
    fn config_validation() {
        let mut cfg = UnitConfig::new(0);
        assert!(cfg.validate().is_err());
        cfg.k = 2;
        cfg.theta = 1.5;
        assert!(cfg.validate().is_err());
        cfg.theta = 0.5;
        cfg.tol = 0.0;
        assert!(cfg.validate().is_err());
        cfg.tol = 1e-6;
        cfg.eps = 0.0;
        assert!(cfg.validate().is_err());
        cfg.eps = 1e-12;
        assert!(cfg.validate().is_ok());
    }
}
