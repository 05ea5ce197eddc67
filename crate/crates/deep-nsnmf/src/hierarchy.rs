//! Multi-layer model: layer-wise pre-training, reconstruction through the
//! stack, joint fine-tuning against the original data, and fold-in inference
//! for unseen samples.
//!
//! Layer `l` factorizes the processed output of layer `l−1`:
//! `K⁽ˡ⁻¹⁾ ≈ W⁽ˡ⁾H⁽ˡ⁾` with `K⁽ˡ⁾ = f(H⁽ˡ⁾/M⁽ˡ⁾)`, where `M⁽ˡ⁾` holds each
//! row's mean activation. Joint training optimizes all layers against `X`
//! using reconstructions `H̃⁽ˡ⁾ = M⁽ˡ⁾ ⊙ f⁻¹(W⁽ˡ⁺¹⁾H̃⁽ˡ⁺¹⁾)` propagated down
//! from the top layer, with multiplicative numerator/denominator pairs
//! (`Nu`, `De`) carried up through the stack.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::matrix::NonNegMatrix;
use crate::nonlinearity::Nonlinearity;
use crate::nsnmf::{
    self, cost_of_reconstruction, mult_update, should_stop, update_h_arrays, FactorizeResult,
    UnitConfig,
};

/// Feature count and smoothing strength for one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub k: usize,
    pub theta: f64,
}

impl LayerSpec {
    pub fn new(k: usize, theta: f64) -> Self {
        LayerSpec { k, theta }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("layer feature count must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!(
                "layer theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        Ok(())
    }
}

/// One trained layer: basis `W`, coefficients `H`, and the frozen row-mean
/// matrix `M` captured when the layer finished pre-training.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: NonNegMatrix,
    pub h: NonNegMatrix,
    pub m: NonNegMatrix,
}

/// Configuration for the joint fine-tuning phase (and fold-in inference).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig {
            max_iters: 300,
            tol: nsnmf::DEFAULT_TOL,
            eps: nsnmf::DEFAULT_EPS,
            seed: 0,
        }
    }
}

impl JointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Ordered stack of trained layers plus the nonlinearity they share.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalModel {
    layers: Vec<Layer>,
    specs: Vec<LayerSpec>,
    nonlinearity: Nonlinearity,
    input_dim: usize,
    n_samples: usize,
    seed: u64,
}

impl HierarchicalModel {
    /// Assembles a model from already-built layers, validating the shape
    /// chain, spec agreement, and the row-constancy of every `M`.
    pub fn from_layers(
        layers: Vec<Layer>,
        specs: Vec<LayerSpec>,
        nonlinearity: Nonlinearity,
        seed: u64,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("model requires at least one layer".into()));
        }
        if specs.len() != layers.len() {
            return Err(Error::Config(format!(
                "{} layer specs for {} layers",
                specs.len(),
                layers.len()
            )));
        }
        let n_samples = layers[0].h.cols();
        for (idx, (layer, spec)) in layers.iter().zip(&specs).enumerate() {
            spec.validate()?;
            if layer.w.cols() != spec.k {
                return Err(Error::Config(format!(
                    "layer {} basis has {} columns but spec says k = {}",
                    idx + 1,
                    layer.w.cols(),
                    spec.k
                )));
            }
            if layer.h.rows() != layer.w.cols() {
                return Err(Error::Config(format!(
                    "layer {}: W is {}x{} but H is {}x{}",
                    idx + 1,
                    layer.w.rows(),
                    layer.w.cols(),
                    layer.h.rows(),
                    layer.h.cols()
                )));
            }
            if layer.h.cols() != n_samples {
                return Err(Error::Config(format!(
                    "layer {} has {} sample columns, expected {}",
                    idx + 1,
                    layer.h.cols(),
                    n_samples
                )));
            }
            if layer.m.shape() != layer.h.shape() {
                return Err(Error::Config(format!(
                    "layer {}: M shape {:?} does not match H shape {:?}",
                    idx + 1,
                    layer.m.shape(),
                    layer.h.shape()
                )));
            }
            for r in 0..layer.m.rows() {
                let first = layer.m.get(r, 0);
                for c in 1..layer.m.cols() {
                    if layer.m.get(r, c) != first {
                        return Err(Error::Config(format!(
                            "layer {}: M row {} is not constant across columns",
                            idx + 1,
                            r
                        )));
                    }
                }
            }
            if idx > 0 && layer.w.rows() != layers[idx - 1].w.cols() {
                return Err(Error::Config(format!(
                    "layer {} basis has {} rows but layer {} produced {} features",
                    idx + 1,
                    layer.w.rows(),
                    idx,
                    layers[idx - 1].w.cols()
                )));
            }
        }
        let input_dim = layers[0].w.rows();
        Ok(HierarchicalModel {
            layers,
            specs,
            nonlinearity,
            input_dim,
            n_samples,
            seed,
        })
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, idx: usize) -> &Layer {
        &self.layers[idx]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Final data representation `H⁽ᴸ⁾`.
    pub fn final_representation(&self) -> &NonNegMatrix {
        &self.layers[self.layers.len() - 1].h
    }
}

/// Inter-layer normalization `K = f(H/M)` with an eps-guarded division.
/// All-zero rows of `H` stay all-zero in `K`.
pub fn compute_k(
    h: &NonNegMatrix,
    m: &NonNegMatrix,
    f: Nonlinearity,
    eps: f64,
) -> Result<NonNegMatrix> {
    if h.shape() != m.shape() {
        return Err(Error::ShapeMismatch {
            context: "compute_k (H vs M)",
            a_rows: h.rows(),
            a_cols: h.cols(),
            b_rows: m.rows(),
            b_cols: m.cols(),
        });
    }
    Ok(NonNegMatrix::from_array_unchecked(compute_k_arrays(
        h.as_array(),
        m.as_array(),
        f,
        eps,
    )))
}

fn compute_k_arrays(h: &Array2<f64>, m: &Array2<f64>, f: Nonlinearity, eps: f64) -> Array2<f64> {
    let mut out = h.clone();
    ndarray::Zip::from(&mut out).and(m).for_each(|v, &mean| {
        *v = f.f_scalar(*v / (mean + eps));
    });
    out
}

/// Outcome of [`pretrain`]: the stacked model plus one cost trace per layer.
#[derive(Debug, Clone)]
pub struct PretrainResult {
    pub model: HierarchicalModel,
    pub traces: Vec<Vec<f64>>,
    /// Set if any layer saw an all-zero input.
    pub zero_input: bool,
}

/// Layer-wise separate training: factorize `K⁽ˡ⁻¹⁾`, freeze `M⁽ˡ⁾` from the
/// resulting `H⁽ˡ⁾`, and hand `K⁽ˡ⁾ = f(H⁽ˡ⁾/M⁽ˡ⁾)` to the next layer.
/// Layer `l` trains with seed `ucfg.seed + l`, so a one-layer stack matches
/// a plain [`factorize`](crate::nsnmf::factorize) call exactly.
pub fn pretrain(
    x: &NonNegMatrix,
    specs: &[LayerSpec],
    ucfg: &UnitConfig,
    f: Nonlinearity,
) -> Result<PretrainResult> {
    if specs.is_empty() {
        return Err(Error::Config("pretrain requires at least one layer spec".into()));
    }
    for spec in specs {
        spec.validate()?;
    }

    let mut layers = Vec::with_capacity(specs.len());
    let mut traces = Vec::with_capacity(specs.len());
    let mut zero_input = false;
    let mut k_cur = x.clone();

    for (idx, spec) in specs.iter().enumerate() {
        let layer_cfg = UnitConfig {
            k: spec.k,
            theta: spec.theta,
            seed: ucfg.seed.wrapping_add(idx as u64),
            ..*ucfg
        };
        let FactorizeResult {
            w,
            h,
            trace,
            zero_input: layer_zero,
        } = nsnmf::factorize(&k_cur, &layer_cfg)?;
        zero_input |= layer_zero;
        let m = h.row_mean_broadcast();
        if idx + 1 < specs.len() {
            k_cur = compute_k(&h, &m, f, ucfg.eps)?;
        }
        layers.push(Layer { w, h, m });
        traces.push(trace);
    }

    let model = HierarchicalModel::from_layers(layers, specs.to_vec(), f, ucfg.seed)?;
    Ok(PretrainResult {
        model,
        traces,
        zero_input,
    })
}

/// `H̃` for 0-based layer `target`, propagated down from the top layer.
fn h_tilde_array(model: &HierarchicalModel, target: usize) -> Array2<f64> {
    let layers = &model.layers;
    let top = layers.len() - 1;
    let mut ht = layers[top].h.as_array().clone();
    for j in (target..top).rev() {
        let prod = layers[j + 1].w.as_array().dot(&ht);
        ht = layers[j].m.as_array() * &model.nonlinearity.f_inv_array(&prod);
    }
    ht
}

/// Back-propagated reconstruction `H̃⁽ˡ⁾` for 1-based layer `layer`:
/// `H̃⁽ᴸ⁾ = H⁽ᴸ⁾`, and `H̃⁽ˡ⁾ = M⁽ˡ⁾ ⊙ f⁻¹(W⁽ˡ⁺¹⁾H̃⁽ˡ⁺¹⁾)` below the top.
pub fn reconstruct_h_tilde(model: &HierarchicalModel, layer: usize) -> NonNegMatrix {
    assert!(
        layer >= 1 && layer <= model.layer_count(),
        "layer index {layer} out of range 1..={}",
        model.layer_count()
    );
    NonNegMatrix::from_array_unchecked(h_tilde_array(model, layer - 1))
}

fn reconstruct_x_array(model: &HierarchicalModel) -> Array2<f64> {
    let ht = h_tilde_array(model, 0);
    model.layers[0].w.as_array().dot(&ht)
}

/// Input reconstruction `X̃ = W⁽¹⁾H̃⁽¹⁾`.
pub fn reconstruct_x(model: &HierarchicalModel) -> NonNegMatrix {
    NonNegMatrix::from_array_unchecked(reconstruct_x_array(model))
}

/// Joint-phase cost `½‖X − X̃‖²`. Infinite when the reconstruction chain
/// overflows, which the joint trainer treats as divergence.
pub fn joint_cost(model: &HierarchicalModel, x: &NonNegMatrix) -> f64 {
    cost_of_reconstruction(x.as_array(), &reconstruct_x_array(model))
}

fn check_model_input(model: &HierarchicalModel, x: &NonNegMatrix) -> Result<()> {
    if x.rows() != model.input_dim || x.cols() != model.n_samples {
        return Err(Error::ShapeMismatch {
            context: "joint training (X vs model)",
            a_rows: x.rows(),
            a_cols: x.cols(),
            b_rows: model.input_dim,
            b_cols: model.n_samples,
        });
    }
    Ok(())
}

/// Multiplier exponent for updates at 0-based layer `l`.
///
/// Layer 1 sees the data linearly and takes the plain multiplicative step.
/// Parameters of layer `l` reach the reconstruction through `l` applications
/// of `f⁻¹`; for `f(x) = x^γ` each one raises the response of `X̃` to the
/// `1/γ` power, so the raw step overshoots and the sweep oscillates apart.
/// Damping the multiplier by `γ^l` restores the linear-case step length.
fn visit_exponent(f: Nonlinearity, l: usize) -> f64 {
    match f {
        Nonlinearity::Identity => 1.0,
        Nonlinearity::Power { gamma } => gamma.powi(l as i32),
        // No fixed exponent linearizes exp-compounding; halve per level.
        Nonlinearity::Log1p => 0.5f64.powi(l as i32),
    }
}

/// `base ⊙ (num/(den+eps))^exponent`; `exponent == 1` takes the exact
/// undamped path.
fn mult_update_damped(
    base: &Array2<f64>,
    num: &Array2<f64>,
    den: &Array2<f64>,
    eps: f64,
    exponent: f64,
) -> Array2<f64> {
    if exponent == 1.0 {
        return mult_update(base, num, den, eps);
    }
    let mut out = base.clone();
    ndarray::Zip::from(&mut out)
        .and(num)
        .and(den)
        .for_each(|b, &n, &d| {
            *b *= (n / (d + eps)).powf(exponent);
        });
    out
}

/// `M⁽ˡ⁻¹⁾ ⊙ f⁻¹′(W⁽ˡ⁾H⁽ˡ⁾)`, the per-layer factor in the Nu/De recursion.
fn layer_deriv_factor(
    f: Nonlinearity,
    m_prev: &Array2<f64>,
    w_l: &Array2<f64>,
    h_l: &Array2<f64>,
    eps: f64,
) -> (Array2<f64>, u64) {
    let prod = w_l.dot(h_l);
    let (deriv, clamps) = f.f_inv_deriv_array(&prod, eps);
    (m_prev * &deriv, clamps)
}

/// One joint sweep over all layers, bottom to top. Within each layer the
/// basis updates first; `Nu`/`De` are then re-evaluated at the new basis so
/// the coefficient update sees current parameters, which makes a one-layer
/// stack coincide with the plain `update_w`/`update_h` alternation.
/// Returns the number of clamped inverse-derivative entries.
pub fn joint_step(
    model: &mut HierarchicalModel,
    x: &NonNegMatrix,
    cfg: &JointConfig,
) -> Result<u64> {
    check_model_input(model, x)?;
    cfg.validate()?;
    let f = model.nonlinearity;
    let eps = cfg.eps;
    let layer_count = model.layers.len();
    let mut clamps = 0u64;

    // Nu/De from the previous layer visit; layer 1 starts the recursion.
    let mut carry_nu: Array2<f64> = Array2::zeros((0, 0));
    let mut carry_de: Array2<f64> = Array2::zeros((0, 0));

    for l in 0..layer_count {
        let htilde = h_tilde_array(model, l);
        let exponent = visit_exponent(f, l);

        // The W-dependent factor is rebuilt after the basis update; the
        // projected carries only involve the (already updated) layer below.
        let prefix = if l == 0 {
            None
        } else {
            let w_prev_t = model.layers[l - 1].w.as_array().t();
            Some((w_prev_t.dot(&carry_nu), w_prev_t.dot(&carry_de)))
        };

        let (nu, de) = if l == 0 {
            (
                x.as_array().clone(),
                model.layers[0].w.as_array().dot(&htilde),
            )
        } else {
            let (prefix_nu, prefix_de) = prefix.as_ref().expect("prefix exists for l > 0");
            let (factor, c) = layer_deriv_factor(
                f,
                model.layers[l - 1].m.as_array(),
                model.layers[l].w.as_array(),
                model.layers[l].h.as_array(),
                eps,
            );
            clamps += c;
            (prefix_nu * &factor, prefix_de * &factor)
        };

        let new_w = mult_update_damped(
            model.layers[l].w.as_array(),
            &nu.dot(&htilde.t()),
            &de.dot(&htilde.t()),
            eps,
            exponent,
        );
        model.layers[l].w = NonNegMatrix::from_array_checked_finite(new_w)?;

        let (nu, de) = if l == 0 {
            (nu, model.layers[0].w.as_array().dot(&htilde))
        } else {
            let (prefix_nu, prefix_de) = prefix.as_ref().expect("prefix exists for l > 0");
            let (factor, c) = layer_deriv_factor(
                f,
                model.layers[l - 1].m.as_array(),
                model.layers[l].w.as_array(),
                model.layers[l].h.as_array(),
                eps,
            );
            clamps += c;
            (prefix_nu * &factor, prefix_de * &factor)
        };

        let w_t = model.layers[l].w.as_array().t();
        let new_h = mult_update_damped(
            model.layers[l].h.as_array(),
            &w_t.dot(&nu),
            &w_t.dot(&de),
            eps,
            exponent,
        );
        model.layers[l].h = NonNegMatrix::from_array_checked_finite(new_h)?;

        carry_nu = nu;
        carry_de = de;
    }
    Ok(clamps)
}

/// Outcome of [`joint_train`].
#[derive(Debug, Clone)]
pub struct JointResult {
    /// Joint cost after each completed sweep.
    pub trace: Vec<f64>,
    /// Total clamped inverse-derivative entries across all sweeps.
    pub deriv_clamps: u64,
    /// Set when a sweep produced non-finite values and was rolled back.
    pub diverged: bool,
}

/// Iterates [`joint_step`] until the windowed relative cost change falls
/// below `cfg.tol` or `cfg.max_iters` sweeps have run.
pub fn joint_train(
    model: &mut HierarchicalModel,
    x: &NonNegMatrix,
    cfg: &JointConfig,
) -> Result<JointResult> {
    check_model_input(model, x)?;
    cfg.validate()?;
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let mut deriv_clamps = 0u64;
    let mut diverged = false;
    for _ in 0..cfg.max_iters {
        let snapshot = model.clone();
        match joint_step(model, x, cfg) {
            Ok(clamps) => deriv_clamps += clamps,
            Err(Error::Numeric(_)) => {
                *model = snapshot;
                diverged = true;
                break;
            }
            Err(other) => return Err(other),
        }
        let cost = joint_cost(model, x);
        if !cost.is_finite() {
            *model = snapshot;
            diverged = true;
            break;
        }
        trace.push(cost);
        if should_stop(&trace, cfg.tol) {
            break;
        }
    }
    if diverged {
        log::warn!("joint training produced non-finite values; last sweep rolled back");
    }
    Ok(JointResult {
        trace,
        deriv_clamps,
        diverged,
    })
}

/// Composite basis `W⁽¹⁾W⁽²⁾…W⁽ᴸ⁾` mapping top-level features back to the
/// input space.
pub fn composite_features(model: &HierarchicalModel) -> NonNegMatrix {
    let mut acc = model.layers[0].w.as_array().clone();
    for layer in &model.layers[1..] {
        acc = acc.dot(layer.w.as_array());
    }
    NonNegMatrix::from_array_unchecked(acc)
}

/// Fold-in inference: solve for coefficients layer by layer with every `W`
/// and every training-time `M` held fixed, then return the top-layer
/// representation of `x_new`.
///
/// Coefficients start from a constant at the data's magnitude rather than a
/// random draw, so identical input columns produce identical outputs.
pub fn transform(
    model: &HierarchicalModel,
    x_new: &NonNegMatrix,
    cfg: &JointConfig,
) -> Result<NonNegMatrix> {
    cfg.validate()?;
    if x_new.rows() != model.input_dim {
        return Err(Error::ShapeMismatch {
            context: "transform (new data vs model input dim)",
            a_rows: x_new.rows(),
            a_cols: x_new.cols(),
            b_rows: model.input_dim,
            b_cols: model.n_samples,
        });
    }
    let f = model.nonlinearity;
    let n_new = x_new.cols();
    let layer_count = model.layers.len();
    let mut k_cur = x_new.as_array().clone();
    let mut h = Array2::zeros((0, 0));

    for (idx, layer) in model.layers.iter().enumerate() {
        let w = layer.w.as_array();
        let k_l = w.ncols();
        let mean = k_cur.sum() / k_cur.len() as f64;
        let scale = if mean > 0.0 {
            (mean / k_l as f64).sqrt()
        } else {
            0.0
        };
        h = Array2::from_elem((k_l, n_new), scale);
        let mut trace = vec![cost_of_reconstruction(&k_cur, &w.dot(&h))];
        for _ in 0..cfg.max_iters {
            h = update_h_arrays(&k_cur, w, &h, cfg.eps);
            trace.push(cost_of_reconstruction(&k_cur, &w.dot(&h)));
            if should_stop(&trace, cfg.tol) {
                break;
            }
        }
        if idx + 1 < layer_count {
            // broadcast the frozen training row means over the new samples
            let m_new = Array2::from_shape_fn((k_l, n_new), |(r, _)| layer.m.get(r, 0));
            k_cur = compute_k_arrays(&h, &m_new, f, cfg.eps);
        }
    }
    Ok(NonNegMatrix::from_array_unchecked(h))
}
