//! Function classes for the per-depth regressions: feature maps, ridge and
//! kernel ridge regression, and their uncertainty quantifiers.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvConfig, Observation};
use crate::error::{Error, Result};
use crate::history::HistoryBlock;
use crate::rng::stream;

/// Encoding of `(history block, action)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureLayout {
    /// `[1, x, y, z_prev, onehot(p), o, onehot(p)·z_prev]` for the current
    /// observation, then `[x, y, z_prev, p, o]` for each lagged step. All
    /// coordinates are scaled into `[−1, 1]`.
    Linear,
    /// `Linear` plus second-order terms in inventory, order and lagged sales,
    /// price-specific inventory and order slopes, and covariate × inventory
    /// and covariate × order interactions.
    Quadratic,
    /// One-hot over (inventory level, price, order) of the current period.
    Tabular,
    /// Tensor-product hat functions over (inventory, lagged sales, order)
    /// for each price, plus price-specific covariate slopes. Lagged steps
    /// enter linearly as in `Linear`. Each row has at most eight nonzero
    /// basis weights summing to one, so the ridge uncertainty is local.
    Multilinear,
}

/// Knot counts of the `Multilinear` layout along inventory, lagged sales and
/// order quantity.
pub const MULTILINEAR_KNOTS: [usize; 3] = [6, 5, 4];

/// Hat-function weights of `v` on `knots` equally spaced points over
/// `[0, hi]`: `(lower knot, weight of the upper knot)`.
fn hat(v: f64, hi: f64, knots: usize) -> (usize, f64) {
    if knots < 2 || hi <= 0.0 {
        return (0, 0.0);
    }
    let pos = (v / hi).clamp(0.0, 1.0) * (knots - 1) as f64;
    let i0 = (pos.floor() as usize).min(knots - 2);
    (i0, pos - i0 as f64)
}

/// Scales that map raw coordinates into `[−1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScales {
    pub x_bounds: Vec<f64>,
    pub y_cap: f64,
    pub d_max: f64,
    pub prices: Vec<f64>,
    pub orders: Vec<f64>,
}

impl FeatureScales {
    pub fn from_env(cfg: &EnvConfig) -> Self {
        FeatureScales {
            x_bounds: cfg
                .features
                .coordinate_bounds()
                .into_iter()
                .map(|b| if b > 0.0 { b } else { 1.0 })
                .collect(),
            y_cap: cfg.y_cap.max(1e-12),
            d_max: cfg.demand.d_max,
            prices: cfg.grid.prices.clone(),
            orders: cfg.grid.orders.clone(),
        }
    }

    fn x_dim(&self) -> usize {
        self.x_bounds.len()
    }

    fn o_max(&self) -> f64 {
        self.orders.last().copied().unwrap_or(1.0).max(1e-12)
    }

    fn p_max(&self) -> f64 {
        self.prices.last().copied().unwrap_or(1.0).max(1e-12)
    }

    fn price_index(&self, p: f64) -> usize {
        self.prices
            .iter()
            .position(|&v| v == p)
            .unwrap_or_else(|| {
                self.prices
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - p).abs().total_cmp(&(b.1 - p).abs()))
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
    }

    fn order_index(&self, o: f64) -> usize {
        self.orders
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - o).abs().total_cmp(&(b.1 - o).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Deterministic map from a depth-`i` block and an action to `φ_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub layout: FeatureLayout,
    pub depth: usize,
    pub scales: FeatureScales,
}

impl FeatureMap {
    pub fn new(layout: FeatureLayout, depth: usize, scales: FeatureScales) -> Self {
        FeatureMap {
            layout,
            depth,
            scales,
        }
    }

    fn current_dim(&self) -> usize {
        let dx = self.scales.x_dim();
        let np = self.scales.prices.len();
        let linear = 1 + dx + 1 + 1 + np + 1 + np;
        match self.layout {
            FeatureLayout::Linear => linear,
            FeatureLayout::Quadratic => linear + 6 + 2 * np + 2 * dx,
            FeatureLayout::Tabular => {
                (self.scales.y_cap.round() as usize + 1) * np * self.scales.orders.len()
            }
            FeatureLayout::Multilinear => {
                let [ky, kz, ko] = MULTILINEAR_KNOTS;
                np * ky * kz * ko + np * dx
            }
        }
    }

    fn lag_dim(&self) -> usize {
        match self.layout {
            FeatureLayout::Tabular => 0,
            _ => self.scales.x_dim() + 4,
        }
    }

    pub fn dim(&self) -> usize {
        self.current_dim() + self.depth * self.lag_dim()
    }

    /// Declared bound on `‖φ‖`.
    pub fn norm_bound(&self) -> f64 {
        match self.layout {
            FeatureLayout::Tabular => 1.0,
            FeatureLayout::Multilinear => (1.0 + (self.dim() - self.current_dim()) as f64
                + self.scales.x_dim() as f64)
                .sqrt(),
            _ => (self.dim() as f64).sqrt(),
        }
    }

    pub fn featurize(&self, block: &HistoryBlock, action: &Action) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        self.featurize_into(block, action, &mut out)?;
        Ok(out)
    }

    /// Writes `φ` into `out`, replacing its contents.
    pub fn featurize_into(
        &self,
        block: &HistoryBlock,
        action: &Action,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        if block.depth() != self.depth {
            return Err(Error::DepthMismatch {
                expected: self.depth,
                found: block.depth(),
            });
        }
        out.clear();
        self.current(&block.current, action, out);
        if self.layout != FeatureLayout::Tabular {
            for (w, a) in &block.steps {
                self.lag(w, a, out);
            }
        }
        Ok(())
    }

    fn scaled_x<'a>(&'a self, w: &'a Observation) -> impl Iterator<Item = f64> + 'a {
        w.x.iter().zip(&self.scales.x_bounds).map(|(v, b)| v / b)
    }

    fn current(&self, w: &Observation, a: &Action, out: &mut Vec<f64>) {
        let s = &self.scales;
        let np = s.prices.len();
        let pi = s.price_index(a.p);
        if self.layout == FeatureLayout::Tabular {
            let ny = s.y_cap.round() as usize + 1;
            let yi = (w.y.round().max(0.0) as usize).min(ny - 1);
            let oi = s.order_index(a.o);
            let start = out.len();
            out.resize(start + self.current_dim(), 0.0);
            out[start + (yi * np + pi) * s.orders.len() + oi] = 1.0;
            return;
        }
        if self.layout == FeatureLayout::Multilinear {
            let [ky, kz, ko] = MULTILINEAR_KNOTS;
            let start = out.len();
            let cells = np * ky * kz * ko;
            out.resize(start + cells, 0.0);
            let (iy, fy) = hat(w.y, s.y_cap, ky);
            let (iz, fz) = hat(w.z_prev, s.d_max, kz);
            let (io, fo) = hat(a.o, s.o_max(), ko);
            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                for (dz, wz) in [(0, 1.0 - fz), (1, fz)] {
                    for (d_o, wo) in [(0, 1.0 - fo), (1, fo)] {
                        let wgt = wy * wz * wo;
                        if wgt > 0.0 {
                            let idx = ((pi * ky + iy + dy) * kz + iz + dz) * ko + io + d_o;
                            out[start + idx] += wgt;
                        }
                    }
                }
            }
            let xs: Vec<f64> = self.scaled_x(w).collect();
            for k in 0..np {
                if k == pi {
                    out.extend(&xs);
                } else {
                    out.extend(std::iter::repeat_n(0.0, xs.len()));
                }
            }
            return;
        }
        let y = w.y / s.y_cap;
        let z = w.z_prev / s.d_max;
        let o = a.o / s.o_max();
        out.push(1.0);
        out.extend(self.scaled_x(w));
        out.push(y);
        out.push(z);
        out.extend((0..np).map(|k| if k == pi { 1.0 } else { 0.0 }));
        out.push(o);
        out.extend((0..np).map(|k| if k == pi { z } else { 0.0 }));
        if self.layout == FeatureLayout::Quadratic {
            out.extend([y * y, o * o, z * z, y * o, y * z, o * z]);
            out.extend((0..np).map(|k| if k == pi { y } else { 0.0 }));
            out.extend((0..np).map(|k| if k == pi { o } else { 0.0 }));
            let xs: Vec<f64> = self.scaled_x(w).collect();
            out.extend(xs.iter().map(|x| x * y));
            out.extend(xs.iter().map(|x| x * o));
        }
    }

    fn lag(&self, w: &Observation, a: &Action, out: &mut Vec<f64>) {
        let s = &self.scales;
        out.extend(self.scaled_x(w));
        out.push(w.y / s.y_cap);
        out.push(w.z_prev / s.d_max);
        out.push(a.p / s.p_max());
        out.push(a.o / s.o_max());
    }
}

/// Rows of a design matrix.
pub fn design_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidArgument("rows have differing lengths".into()));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

fn check_finite(values: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite {what}")))
    }
}

/// Ridge fit `θ = Λ⁻¹ Σ φ y` with `Λ = Σ φφᵀ + λI`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub dim: usize,
    pub n_samples: usize,
    /// `Λ`, row-major.
    pub gram: Vec<f64>,
    /// `Λ⁻¹`, row-major.
    pub gram_inv: Vec<f64>,
}

impl RidgeModel {
    pub fn predict(&self, phi: &[f64]) -> f64 {
        self.theta.iter().zip(phi).map(|(a, b)| a * b).sum()
    }

    /// `φᵀ Λ⁻¹ φ`.
    pub fn leverage(&self, phi: &[f64]) -> f64 {
        quad_form(&self.gram_inv, self.dim, phi)
    }

    /// `β·sqrt(φᵀ Λ⁻¹ φ)`.
    pub fn uncertainty(&self, beta: f64, phi: &[f64]) -> f64 {
        uq_eval(self, beta, phi)
    }
}

fn quad_form(m: &[f64], d: usize, v: &[f64]) -> f64 {
    // Feature vectors are often sparse; sum over the nonzero pairs only.
    let nz: Vec<usize> = (0..d).filter(|&i| v[i] != 0.0).collect();
    let mut acc = 0.0;
    for &i in &nz {
        let row = &m[i * d..(i + 1) * d];
        acc += v[i] * nz.iter().map(|&j| row[j] * v[j]).sum::<f64>();
    }
    acc.max(0.0)
}

pub fn uq_eval(model: &RidgeModel, beta: f64, phi: &[f64]) -> f64 {
    beta * model.leverage(phi).sqrt()
}

/// Width `β` for which `|φᵀ(θ̂ − θ)| ≤ β·sqrt(φᵀΛ⁻¹φ)` holds for all `φ`
/// with probability at least `1 − delta`, given `noise_sd`-sub-Gaussian
/// responses, `n` samples with `‖φ‖ ≤ feature_bound`, and `‖θ‖ ≤ theta_bound`
/// (the self-normalized ridge confidence radius).
pub fn calibrated_beta(
    noise_sd: f64,
    dim: usize,
    n: usize,
    lambda: f64,
    feature_bound: f64,
    theta_bound: f64,
    delta: f64,
) -> f64 {
    let d = dim as f64;
    let log_det = d * (1.0 + n as f64 * feature_bound * feature_bound / (d * lambda)).ln();
    noise_sd * (2.0 * (1.0 / delta).ln() + log_det).sqrt() + lambda.sqrt() * theta_bound
}

/// Factorized `Λ` for a fixed design; solves for any target vector.
#[derive(Debug, Clone)]
pub struct RidgeSolver {
    design: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    gram: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    lambda: f64,
}

impl RidgeSolver {
    pub fn new(design: DMatrix<f64>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
        }
        check_finite(design.iter().copied(), "features")?;
        let d = design.ncols();
        let gram = design.tr_mul(&design) + DMatrix::identity(d, d) * lambda;
        let chol = gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("ridge design is not positive definite".into()))?;
        let gram_inv = chol.inverse();
        Ok(RidgeSolver {
            design,
            chol,
            gram,
            gram_inv,
            lambda,
        })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn solve(&self, targets: &[f64]) -> Result<RidgeModel> {
        if targets.len() != self.design.nrows() {
            return Err(Error::InvalidArgument(format!(
                "{} targets for {} rows",
                targets.len(),
                self.design.nrows()
            )));
        }
        check_finite(targets.iter().copied(), "targets")?;
        let rhs = self.design.tr_mul(&DVector::from_column_slice(targets));
        let theta = self.chol.solve(&rhs);
        let d = self.design.ncols();
        Ok(RidgeModel {
            theta: theta.iter().copied().collect(),
            lambda: self.lambda,
            dim: d,
            n_samples: self.design.nrows(),
            gram: self.gram.transpose().iter().copied().collect(),
            gram_inv: self.gram_inv.transpose().iter().copied().collect(),
        })
    }
}

pub fn ridge_fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<RidgeModel> {
    RidgeSolver::new(design_matrix(x)?, lambda)?.solve(y)
}

/// Ridge fit on a design with `dim` columns and no rows.
pub fn ridge_prior(dim: usize, lambda: f64) -> Result<RidgeModel> {
    RidgeSolver::new(DMatrix::zeros(0, dim), lambda)?.solve(&[])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Rbf { bandwidth: f64 },
    Linear,
    Polynomial { degree: u32, offset: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { bandwidth } => {
                let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
                (-d2 / (2.0 * bandwidth * bandwidth)).exp()
            }
            Kernel::Linear => a.iter().zip(b).map(|(u, v)| u * v).sum(),
            Kernel::Polynomial { degree, offset } => {
                let dot: f64 = a.iter().zip(b).map(|(u, v)| u * v).sum();
                (dot + offset).powi(degree as i32)
            }
        }
    }

    /// Targets are centered before fitting except for the linear kernel,
    /// which then coincides with ridge on the same features.
    fn centers(&self) -> bool {
        !matches!(self, Kernel::Linear)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Rbf { bandwidth } if !(bandwidth > 0.0) => Err(Error::config(
                "algo.krr.kernels",
                "rbf bandwidth must be > 0",
            )),
            Kernel::Polynomial { degree: 0, .. } => {
                Err(Error::config("algo.krr.kernels", "polynomial degree must be >= 1"))
            }
            _ => Ok(()),
        }
    }
}

/// Hyperparameter grid searched by cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KrrGrid {
    pub kernels: Vec<Kernel>,
    pub lambdas: Vec<f64>,
    pub folds: usize,
}

impl Default for KrrGrid {
    fn default() -> Self {
        KrrGrid {
            kernels: vec![
                Kernel::Rbf { bandwidth: 0.5 },
                Kernel::Rbf { bandwidth: 1.0 },
                Kernel::Rbf { bandwidth: 2.0 },
            ],
            lambdas: vec![1e-3, 1e-2, 1e-1, 1.0],
            folds: 5,
        }
    }
}

impl KrrGrid {
    pub fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() {
            return Err(Error::config("algo.krr.kernels", "must be non-empty"));
        }
        for k in &self.kernels {
            k.validate()?;
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::config("algo.krr.lambdas", "must be non-empty and > 0"));
        }
        if self.folds < 2 {
            return Err(Error::config("algo.krr.folds", "must be >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRidgeModel {
    pub kernel: Kernel,
    pub lambda: f64,
    pub offset: f64,
    pub support: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    /// Lower Cholesky factor of `G + λI`, row-major.
    pub factor: Vec<f64>,
    pub cv_folds: usize,
    pub cv_mse: Option<f64>,
}

fn gram(kernel: &Kernel, x: &[Vec<f64>]) -> DMatrix<f64> {
    let n = x.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(&x[i], &x[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

impl KernelRidgeModel {
    pub fn fit(kernel: Kernel, lambda: f64, x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidArgument("x and y lengths differ".into()));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument("lambda must be > 0".into()));
        }
        check_finite(y.iter().copied(), "targets")?;
        check_finite(x.iter().flatten().copied(), "features")?;
        let n = x.len();
        let offset = if kernel.centers() && n > 0 {
            y.iter().sum::<f64>() / n as f64
        } else {
            0.0
        };
        let a = gram(&kernel, x) + DMatrix::identity(n, n) * lambda;
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::Numerical("kernel matrix is not positive definite".into()))?;
        let rhs = DVector::from_iterator(n, y.iter().map(|v| v - offset));
        let alpha = chol.solve(&rhs);
        let l = chol.l();
        Ok(KernelRidgeModel {
            kernel,
            lambda,
            offset,
            support: x.to_vec(),
            alpha: alpha.iter().copied().collect(),
            factor: l.transpose().iter().copied().collect(),
            cv_folds: 0,
            cv_mse: None,
        })
    }

    pub fn predict(&self, h: &[f64]) -> f64 {
        self.offset
            + self
                .support
                .iter()
                .zip(&self.alpha)
                .map(|(s, a)| a * self.kernel.eval(s, h))
                .sum::<f64>()
    }

    /// Posterior variance `k(h,h) − k_Sᵀ(G + λI)⁻¹k_S`.
    pub fn posterior_variance(&self, h: &[f64]) -> f64 {
        let n = self.support.len();
        let mut v: Vec<f64> = self.support.iter().map(|s| self.kernel.eval(s, h)).collect();
        // forward substitution with the lower factor
        for i in 0..n {
            let row = &self.factor[i * n..i * n + i];
            let acc: f64 = row.iter().zip(&v[..i]).map(|(a, b)| a * b).sum();
            v[i] = (v[i] - acc) / self.factor[i * n + i];
        }
        (self.kernel.eval(h, h) - v.iter().map(|a| a * a).sum::<f64>()).max(0.0)
    }

    /// `(β/ζ)·sqrt(posterior variance)` with `ζ² = λ`.
    pub fn uncertainty(&self, beta: f64, h: &[f64]) -> f64 {
        beta / self.lambda.sqrt() * self.posterior_variance(h).sqrt()
    }
}

/// Cross-validated kernel ridge fit. Ties in CV error go to the smaller `λ`.
pub fn krr_fit(x: &[Vec<f64>], y: &[f64], grid: &KrrGrid, seed: u64) -> Result<KernelRidgeModel> {
    grid.validate()?;
    let n = x.len();
    if n < grid.folds {
        warn!(
            "{n} samples for {}-fold cross-validation; fitting the first kernel with the smallest lambda",
            grid.folds
        );
        let lambda = grid.lambdas.iter().copied().fold(f64::INFINITY, f64::min);
        return KernelRidgeModel::fit(grid.kernels[0], lambda, x, y);
    }
    let (kernel, lambda, mse) = krr_select(x, y, grid, seed)?;
    let mut model = KernelRidgeModel::fit(kernel, lambda, x, y)?;
    model.cv_folds = grid.folds;
    model.cv_mse = Some(mse);
    Ok(model)
}

/// Returns the CV-selected `(kernel, λ, mse)`.
pub fn krr_select(
    x: &[Vec<f64>],
    y: &[f64],
    grid: &KrrGrid,
    seed: u64,
) -> Result<(Kernel, f64, f64)> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, 0x6b72_72));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % grid.folds;
    }
    let mut lambdas = grid.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);
    let candidates: Vec<(Kernel, f64)> = grid
        .kernels
        .iter()
        .flat_map(|k| lambdas.iter().map(move |&l| (*k, l)))
        .collect();
    let errors: Vec<Result<f64>> = candidates
        .par_iter()
        .map(|&(kernel, lambda)| {
            let mut sse = 0.0;
            for f in 0..grid.folds {
                let (mut tx, mut ty, mut vx, mut vy) = (vec![], vec![], vec![], vec![]);
                for i in 0..n {
                    if fold_of[i] == f {
                        vx.push(x[i].clone());
                        vy.push(y[i]);
                    } else {
                        tx.push(x[i].clone());
                        ty.push(y[i]);
                    }
                }
                let m = KernelRidgeModel::fit(kernel, lambda, &tx, &ty)?;
                sse += vx
                    .iter()
                    .zip(&vy)
                    .map(|(h, t)| (m.predict(h) - t).powi(2))
                    .sum::<f64>();
            }
            Ok(sse / n as f64)
        })
        .collect();
    let mut best: Option<(Kernel, f64, f64)> = None;
    for ((kernel, lambda), err) in candidates.into_iter().zip(errors) {
        let mse = err?;
        let better = match &best {
            None => true,
            Some((_, bl, be)) => {
                let tol = 1e-12 * be.abs().max(1e-300);
                mse < be - tol || ((mse - be).abs() <= tol && lambda < *bl)
            }
        };
        if better {
            best = Some((kernel, lambda, mse));
        }
    }
    best.ok_or_else(|| Error::Numerical("empty hyperparameter grid".into()))
}

/// A fitted per-depth regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regressor {
    Zero,
    Ridge(RidgeModel),
    Krr(KernelRidgeModel),
}

impl Regressor {
    pub fn predict(&self, phi: &[f64]) -> f64 {
        match self {
            Regressor::Zero => 0.0,
            Regressor::Ridge(m) => m.predict(phi),
            Regressor::Krr(m) => m.predict(phi),
        }
    }

    pub fn uncertainty(&self, beta: f64, phi: &[f64]) -> Option<f64> {
        match self {
            Regressor::Zero => None,
            Regressor::Ridge(m) => Some(m.uncertainty(beta, phi)),
            Regressor::Krr(m) => Some(m.uncertainty(beta, phi)),
        }
    }
}
