//! Plug-in Poisson composite likelihood for (θ₁, θ₂, α, β), a quasi-Newton
//! maximiser, and Godambe (sandwich) standard errors.
//!
//! The latent error is replaced by its mean, so every cell-year contributes
//! `N·log(ΛΔΔ_S) − ΛΔΔ_S` with Λ evaluated at `P = m`. Derivatives of `log S_P`
//! with respect to α and β are carried through the one-step recursion
//! `L_k = α(P_k − P_{k−1}) + log(e^{L_{k−1}} + e^β Δ)`, so the gradient and the
//! Hessian are exact.

use nalgebra::{DMatrix, Matrix4, SMatrix, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{CountsCube, Cube};
use crate::error::{Error, Result};
use crate::ratestate::{ModelParams, PARAM_NAMES};

/// Normal quantile for two-sided 95 % intervals.
pub const Z95: f64 = 1.96;
pub const DEFAULT_GRAD_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 500;

/// Counts, production and mean pressure over the fitting window.
#[derive(Debug, Clone)]
pub struct FitData {
    pub counts: CountsCube,
    pub production: Cube<f64>,
    pub pressure: Cube<f64>,
    pub delta: f64,
    pub cell_area: f64,
}

impl FitData {
    pub fn new(
        counts: CountsCube,
        production: Cube<f64>,
        pressure: Cube<f64>,
        delta: f64,
        cell_area: f64,
    ) -> Result<Self> {
        let (n, k) = counts.shape();
        production.ensure_shape(n, k, "production cube")?;
        pressure.ensure_shape(n, k, "pressure cube")?;
        if !(delta > 0.0 && cell_area > 0.0) {
            return Err(Error::invalid("step length and cell area must be positive"));
        }
        Ok(FitData {
            counts,
            production,
            pressure,
            delta,
            cell_area,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.counts.n_cells()
    }

    pub fn exposure(&self) -> f64 {
        self.delta * self.cell_area
    }

    /// Intercept-matched start: θ₁ = log(total count / total exposure), θ₂ = 0,
    /// α = 0.01, β = −16.
    pub fn default_init(&self) -> ModelParams {
        let total = self.counts.total().max(1) as f64;
        let exposure = (self.counts.n_cells() * self.counts.n_steps()) as f64 * self.exposure();
        ModelParams {
            theta1: (total / exposure).ln(),
            theta2: 0.0,
            alpha: 0.01,
            beta: -16.0,
        }
    }

    /// The same data with cells in the order given by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        fn reorder<T: Clone>(c: &Cube<T>, perm: &[usize]) -> Result<Cube<T>> {
            let mut data = Vec::with_capacity(c.as_slice().len());
            for &p in perm {
                data.extend_from_slice(c.series(p));
            }
            Cube::from_vec(perm.len(), c.n_steps(), data)
        }
        FitData::new(
            reorder(&self.counts, perm)?,
            reorder(&self.production, perm)?,
            reorder(&self.pressure, perm)?,
            self.delta,
            self.cell_area,
        )
    }
}

/// One cell's contribution: value, score and Hessian in (θ₁, θ₂, α, β).
#[derive(Debug, Clone, Copy)]
struct CellTerms {
    value: f64,
    grad: Vector4<f64>,
    hess: Matrix4<f64>,
}

impl CellTerms {
    fn zero() -> Self {
        CellTerms {
            value: 0.0,
            grad: Vector4::zeros(),
            hess: Matrix4::zeros(),
        }
    }

    fn add(mut self, other: &CellTerms) -> Self {
        self.value += other.value;
        self.grad += other.grad;
        self.hess += other.hess;
        self
    }
}

fn cell_terms(
    counts: &[u64],
    production: &[f64],
    pressure: &[f64],
    p: &ModelParams,
    log_exposure: f64,
    log_c: f64,
    want_hess: bool,
) -> Result<CellTerms> {
    let mut out = CellTerms::zero();
    // log S and its α/β derivatives, carried by the recursion
    let (mut l, mut la, mut lb) = (0.0f64, 0.0f64, 0.0f64);
    let (mut laa, mut lab, mut lbb) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..counts.len() {
        if k > 0 {
            let dp = pressure[k] - pressure[k - 1];
            // r = e^{L}/(e^{L} + c)
            let r = 1.0 / (1.0 + (log_c - l).exp());
            let q = r * (1.0 - r);
            let (la0, lb0) = (la, lb);
            l = p.alpha * dp + crate::numeric::log_add_exp(l, log_c);
            la = dp + r * la0;
            lb = r * lb0 + (1.0 - r);
            if want_hess {
                laa = r * laa + q * la0 * la0;
                lab = r * lab + q * la0 * (lb0 - 1.0);
                lbb = r * lbb + q * (lb0 - 1.0) * (lb0 - 1.0);
            }
        }
        let eta = p.theta1 + p.theta2 * production[k] - l + log_exposure;
        let mu = eta.exp();
        if !(eta.is_finite() && mu.is_finite()) {
            return Err(Error::numeric(format!(
                "intensity at step {k} is not positive and finite (log mean {eta})"
            )));
        }
        let n = counts[k] as f64;
        out.value += n * eta - mu;
        let resid = n - mu;
        let d_eta = Vector4::new(1.0, production[k], -la, -lb);
        out.grad += resid * d_eta;
        if want_hess {
            let mut h = -mu * d_eta * d_eta.transpose();
            h[(2, 2)] -= resid * laa;
            h[(2, 3)] -= resid * lab;
            h[(3, 2)] -= resid * lab;
            h[(3, 3)] -= resid * lbb;
            out.hess += h;
        }
    }
    Ok(out)
}

fn per_cell(data: &FitData, p: &ModelParams, want_hess: bool) -> Result<Vec<CellTerms>> {
    p.validate()?;
    let log_exposure = data.exposure().ln();
    let log_c = p.beta + data.delta.ln();
    (0..data.n_cells())
        .into_par_iter()
        .map(|c| {
            cell_terms(
                data.counts.series(c),
                data.production.series(c),
                data.pressure.series(c),
                p,
                log_exposure,
                log_c,
                want_hess,
            )
            .map_err(|e| match e {
                Error::Numeric(m) => Error::numeric(format!("cell {c}: {m}")),
                other => other,
            })
        })
        .collect()
}

/// Fixed-shape pairwise reduction, independent of thread scheduling.
fn tree_sum(terms: &[CellTerms]) -> CellTerms {
    match terms.len() {
        0 => CellTerms::zero(),
        1 => terms[0],
        n => {
            let (a, b) = terms.split_at(n / 2);
            tree_sum(a).add(&tree_sum(b))
        }
    }
}

/// `Σ_{s,k} [N log(ΛΔΔ_S) − ΛΔΔ_S]`, with the `log N!` constant omitted.
pub fn composite_loglik(params: &ModelParams, data: &FitData) -> Result<f64> {
    Ok(tree_sum(&per_cell(data, params, false)?).value)
}

/// Log-likelihood and its gradient in (θ₁, θ₂, α, β).
pub fn composite_loglik_grad(params: &ModelParams, data: &FitData) -> Result<(f64, [f64; 4])> {
    let t = tree_sum(&per_cell(data, params, false)?);
    Ok((t.value, t.grad.into()))
}

/// Log-likelihood, gradient and Hessian in (θ₁, θ₂, α, β).
pub fn composite_loglik_hessian(
    params: &ModelParams,
    data: &FitData,
) -> Result<(f64, [f64; 4], [[f64; 4]; 4])> {
    let t = tree_sum(&per_cell(data, params, true)?);
    Ok((t.value, t.grad.into(), t.hess.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Convergence when the sup-norm of the gradient in the optimiser's
    /// coordinates (θ₁, θ₂, log α, β) falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Parameters pinned at a value, indexed as [`PARAM_NAMES`].
    pub fixed: [Option<f64>; 4],
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            grad_tol: DEFAULT_GRAD_TOL,
            max_iter: DEFAULT_MAX_ITER,
            fixed: [None; 4],
        }
    }
}

impl FitOptions {
    /// Pin a parameter by name.
    pub fn fix(mut self, name: &str, value: f64) -> Result<Self> {
        let i = ModelParams::index_of(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name:?} (expected one of {PARAM_NAMES:?})")))?;
        if !value.is_finite() || (i == 2 && value < 0.0) {
            return Err(Error::invalid(format!("invalid pinned value {name}={value}")));
        }
        self.fixed[i] = Some(value);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub loglik: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub std_errors: [f64; 4],
    pub ci95: [(f64, f64); 4],
    pub converged: bool,
    pub iterations: usize,
    pub loglik: f64,
    pub grad_norm: f64,
    pub fixed: [bool; 4],
    pub objective_trace: Vec<TraceEntry>,
}

impl FitResult {
    /// Fill standard errors and ±1.96·SE intervals. Pinned parameters get zero width.
    pub fn with_std_errors(mut self, se: [f64; 4]) -> Self {
        self.std_errors = se;
        let est = self.params.to_array();
        for i in 0..4 {
            self.ci95[i] = (est[i] - Z95 * se[i], est[i] + Z95 * se[i]);
        }
        self
    }

    pub fn covers(&self, truth: &ModelParams) -> [bool; 4] {
        let t = truth.to_array();
        std::array::from_fn(|i| self.ci95[i].0 <= t[i] && t[i] <= self.ci95[i].1)
    }
}

/// Mapping between natural parameters and the free optimiser coordinates.
struct Coords {
    free: Vec<usize>,
    pinned: [Option<f64>; 4],
}

impl Coords {
    fn to_params(&self, u: &[f64]) -> ModelParams {
        let mut a = [0.0; 4];
        for i in 0..4 {
            a[i] = self.pinned[i].unwrap_or(0.0);
        }
        for (j, &i) in self.free.iter().enumerate() {
            a[i] = if i == 2 { u[j].exp() } else { u[j] };
        }
        ModelParams::from_array(a)
    }

    fn to_coords(&self, p: &ModelParams) -> Vec<f64> {
        let a = p.to_array();
        self.free.iter().map(|&i| if i == 2 { a[i].ln() } else { a[i] }).collect()
    }

    /// Gradient of the log-likelihood in free coordinates.
    fn grad(&self, p: &ModelParams, g: &[f64; 4]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&i| if i == 2 { p.alpha * g[2] } else { g[i] })
            .collect()
    }

    /// Hessian of the log-likelihood in free coordinates.
    fn hess(&self, p: &ModelParams, g: &[f64; 4], h: &[[f64; 4]; 4]) -> Vec<Vec<f64>> {
        let scale = |i: usize| if i == 2 { p.alpha } else { 1.0 };
        self.free
            .iter()
            .map(|&i| {
                self.free
                    .iter()
                    .map(|&j| {
                        let mut v = scale(i) * scale(j) * h[i][j];
                        if i == 2 && j == 2 {
                            v += p.alpha * g[2];
                        }
                        v
                    })
                    .collect()
            })
            .collect()
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Inverse of the negated Hessian, if it is positive definite.
fn newton_inverse(h: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = h.len();
    let m = DMatrix::from_fn(n, n, |i, j| -h[i][j]);
    let chol = m.cholesky()?;
    let inv = chol.inverse();
    Some((0..n).map(|i| (0..n).map(|j| inv[(i, j)]).collect()).collect())
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximise the composite log-likelihood by BFGS in (θ₁, θ₂, log α, β).
///
/// The inverse-Hessian approximation starts from the analytic Hessian and is
/// reset to it whenever the line search fails. A step is accepted when it
/// satisfies the Armijo condition, or when the objective is unchanged to
/// round-off while the gradient shrinks.
pub fn fit(data: &FitData, init: &ModelParams, opts: &FitOptions) -> Result<FitResult> {
    if data.counts.total() == 0 {
        return Err(Error::invalid("fit needs at least one positive count"));
    }
    let mut start = *init;
    {
        let mut a = start.to_array();
        for i in 0..4 {
            if let Some(v) = opts.fixed[i] {
                a[i] = v;
            }
        }
        start = ModelParams::from_array(a);
    }
    start.validate()?;
    let free: Vec<usize> = (0..4).filter(|&i| opts.fixed[i].is_none()).collect();
    if free.contains(&2) && !(start.alpha > 0.0) {
        return Err(Error::invalid("a free alpha must start strictly positive"));
    }
    let coords = Coords {
        free,
        pinned: opts.fixed,
    };

    let eval = |u: &[f64]| -> Result<(ModelParams, f64, [f64; 4])> {
        let p = coords.to_params(u);
        let (v, g) = composite_loglik_grad(&p, data)?;
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric(format!("non-finite objective at {p:?}")));
        }
        Ok((p, v, g))
    };
    let newton_h = |p: &ModelParams| -> Result<Option<Vec<Vec<f64>>>> {
        let (_, g, h) = composite_loglik_hessian(p, data)?;
        Ok(newton_inverse(&coords.hess(p, &g, &h)))
    };

    let n = coords.free.len();
    let mut u = coords.to_coords(&start);
    let (mut p, mut f, g_nat) = eval(&u).map_err(|e| match e {
        Error::Numeric(m) => Error::numeric(format!("objective not finite at the initial point: {m}")),
        other => other,
    })?;
    let mut g = coords.grad(&p, &g_nat);
    let identity = |scale: f64| -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| if i == j { scale } else { 0.0 }).collect()).collect()
    };
    let mut binv = newton_h(&p)?.unwrap_or_else(|| identity(1.0 / sup_norm(&g).max(1.0)));
    let mut trace = vec![TraceEntry {
        iteration: 0,
        loglik: f,
        grad_norm: sup_norm(&g),
        step: 0.0,
    }];
    let mut converged = n == 0 || sup_norm(&g) < opts.grad_tol;
    let mut iterations = 0;
    let mut just_reset = true;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        // ascent direction d = B⁻¹ g
        let mut d = mat_vec(&binv, &g);
        let mut slope = dot(&g, &d);
        if !(slope > 0.0) {
            binv = newton_h(&p)?.unwrap_or_else(|| identity(1.0 / sup_norm(&g).max(1.0)));
            d = mat_vec(&binv, &g);
            slope = dot(&g, &d);
            just_reset = true;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            if let Ok((pc, fc, gc_nat)) = eval(&cand) {
                let gc = coords.grad(&pc, &gc_nat);
                let armijo = fc >= f + 1e-4 * t * slope;
                let flat = fc >= f - 4.0 * f64::EPSILON * f.abs() && sup_norm(&gc) < sup_norm(&g);
                if armijo || flat {
                    accepted = Some((cand, pc, fc, gc));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((u_new, p_new, f_new, g_new)) = accepted else {
            if just_reset {
                break;
            }
            binv = newton_h(&p)?.unwrap_or_else(|| identity(1.0 / sup_norm(&g).max(1.0)));
            just_reset = true;
            continue;
        };
        just_reset = false;
        let s: Vec<f64> = u_new.iter().zip(&u).map(|(a, b)| a - b).collect();
        // BFGS on the negated objective: y = ∇(−f)_new − ∇(−f)_old
        let y: Vec<f64> = g.iter().zip(&g_new).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let hy = mat_vec(&binv, &y);
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    binv[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        u = u_new;
        p = p_new;
        f = f_new;
        g = g_new;
        trace.push(TraceEntry {
            iteration: iterations,
            loglik: f,
            grad_norm: sup_norm(&g),
            step: t,
        });
        converged = sup_norm(&g) < opts.grad_tol;
    }
    if !converged {
        log::warn!(
            "fit stopped after {iterations} iterations with gradient sup-norm {:.3e}",
            sup_norm(&g)
        );
    }
    let fixed: [bool; 4] = std::array::from_fn(|i| opts.fixed[i].is_some());
    let est = p.to_array();
    Ok(FitResult {
        params: p,
        std_errors: [f64::NAN; 4],
        ci95: std::array::from_fn(|i| if fixed[i] { (est[i], est[i]) } else { (f64::NAN, f64::NAN) }),
        converged,
        iterations,
        loglik: f,
        grad_norm: sup_norm(&g),
        fixed,
        objective_trace: trace,
    })
}

/// `H⁻¹ J H⁻¹`.
pub fn sandwich<const N: usize>(h: &SMatrix<f64, N, N>, j: &SMatrix<f64, N, N>) -> Result<SMatrix<f64, N, N>> {
    let hinv = h
        .try_inverse()
        .ok_or_else(|| Error::numeric("sensitivity matrix is singular"))?;
    Ok(hinv * j * hinv)
}

/// Sensitivity H = −∇²ℓ and variability J = Σ_cells s_c s_cᵀ restricted to the free parameters.
fn godambe_parts(fit: &FitResult, data: &FitData) -> Result<(Vec<usize>, DMatrix<f64>, DMatrix<f64>)> {
    let terms = per_cell(data, &fit.params, true)?;
    let total = tree_sum(&terms);
    let free: Vec<usize> = (0..4).filter(|&i| !fit.fixed[i]).collect();
    let n = free.len();
    let h = DMatrix::from_fn(n, n, |a, b| -total.hess[(free[a], free[b])]);
    let outer: Vec<SMatrix<f64, 4, 4>> = terms.iter().map(|t| t.grad * t.grad.transpose()).collect();
    let j4 = pairwise_matrix_sum(&outer);
    let j = DMatrix::from_fn(n, n, |a, b| j4[(free[a], free[b])]);
    Ok((free, h, j))
}

fn pairwise_matrix_sum(ms: &[SMatrix<f64, 4, 4>]) -> SMatrix<f64, 4, 4> {
    match ms.len() {
        0 => SMatrix::zeros(),
        1 => ms[0],
        n => {
            let (a, b) = ms.split_at(n / 2);
            pairwise_matrix_sum(a) + pairwise_matrix_sum(b)
        }
    }
}

fn checked_inverse(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = h.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(min > 0.0) || cond > 1e14 {
        return Err(Error::numeric(format!(
            "negative Hessian is singular or indefinite at the fit (condition number {cond:.3e}, \
             smallest eigenvalue {min:.3e})"
        )));
    }
    h.clone()
        .try_inverse()
        .ok_or_else(|| Error::numeric(format!("negative Hessian not invertible (condition number {cond:.3e})")))
}

fn expand_se(free: &[usize], cov: &DMatrix<f64>) -> [f64; 4] {
    let mut se = [0.0; 4];
    for (a, &i) in free.iter().enumerate() {
        se[i] = cov[(a, a)].max(0.0).sqrt();
    }
    se
}

/// Godambe standard errors and 95 % intervals: `cov = H⁻¹ J H⁻¹`, with cells as
/// the independent replication units.
pub fn godambe_ci(fit: FitResult, data: &FitData) -> Result<FitResult> {
    if !fit.converged {
        log::warn!("computing Godambe intervals at a fit that did not converge");
    }
    let (free, h, j) = godambe_parts(&fit, data)?;
    let hinv = checked_inverse(&h)?;
    let cov = &hinv * j * &hinv;
    let se = expand_se(&free, &cov);
    Ok(fit.with_std_errors(se))
}

/// Standard errors from the inverse observed information alone (model-based).
pub fn inverse_hessian_se(fit: &FitResult, data: &FitData) -> Result<[f64; 4]> {
    let (free, h, _) = godambe_parts(fit, data)?;
    Ok(expand_se(&free, &checked_inverse(&h)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_data(counts: Vec<u64>, n_cells: usize, n_steps: usize) -> FitData {
        let pressure: Vec<f64> = (0..n_cells * n_steps).map(|i| 300.0 - 7.0 * (i % n_steps) as f64 - i as f64 * 0.3).collect();
        let production: Vec<f64> = (0..n_cells * n_steps).map(|i| 0.01 * ((i * 7) % 5) as f64).collect();
        FitData::new(
            Cube::from_vec(n_cells, n_steps, counts).unwrap(),
            Cube::from_vec(n_cells, n_steps, production).unwrap(),
            Cube::from_vec(n_cells, n_steps, pressure).unwrap(),
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_counts_give_minus_total_mean() {
        let data = tiny_data(vec![0; 6], 2, 3);
        let p = ModelParams::new(-1.0, 5.0, 0.02, -3.0).unwrap();
        let lam = crate::ratestate::intensity_cube(
            &data.pressure,
            None,
            &data.production,
            &p,
            1.0,
            crate::ratestate::IntensityForm::Full,
        )
        .unwrap();
        let want: f64 = -lam.as_slice().iter().sum::<f64>();
        let got = composite_loglik(&p, &data).unwrap();
        assert!((got - want).abs() < 1e-12 * want.abs());
    }

    #[test]
    fn single_cell_direct_substitution() {
        // Λ·Δ·Δ_S = 2 with N = 2
        let data = FitData::new(
            Cube::from_vec(1, 1, vec![2]).unwrap(),
            Cube::from_vec(1, 1, vec![0.0]).unwrap(),
            Cube::from_vec(1, 1, vec![250.0]).unwrap(),
            1.0,
            1.0,
        )
        .unwrap();
        let p = ModelParams::new(2f64.ln(), 0.0, 0.01, -16.0).unwrap();
        let got = composite_loglik(&p, &data).unwrap();
        assert!((got - (2.0 * 2f64.ln() - 2.0)).abs() < 1e-14);
    }

    #[test]
    fn fit_requires_positive_count() {
        let data = tiny_data(vec![0; 6], 2, 3);
        assert!(fit(&data, &data.default_init(), &FitOptions::default()).is_err());
    }

    #[test]
    fn unknown_fixed_parameter() {
        assert!(FitOptions::default().fix("gamma0", 1.0).is_err());
        assert!(FitOptions::default().fix("alpha", -1.0).is_err());
    }

    #[test]
    fn sandwich_identity() {
        let i = SMatrix::<f64, 4, 4>::identity();
        assert_eq!(sandwich(&i, &i).unwrap(), i);
        let h = SMatrix::<f64, 2, 2>::new(2.0, 0.0, 0.0, 4.0);
        let j = SMatrix::<f64, 2, 2>::new(4.0, 0.0, 0.0, 16.0);
        assert_eq!(sandwich(&h, &j).unwrap(), SMatrix::<f64, 2, 2>::identity());
    }

    #[test]
    fn hessian_matches_finite_differences_of_gradient() {
        let data = tiny_data(vec![3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5, 8], 3, 4);
        let p = ModelParams::new(0.5, 3.0, 0.03, -1.0).unwrap();
        let (_, _, h) = composite_loglik_hessian(&p, &data).unwrap();
        let base = p.to_array();
        for j in 0..4 {
            let step = 1e-6 * (1.0 + base[j].abs());
            let mut hi = base;
            let mut lo = base;
            hi[j] += step;
            lo[j] -= step;
            let (_, gh) = composite_loglik_grad(&ModelParams::from_array(hi), &data).unwrap();
            let (_, gl) = composite_loglik_grad(&ModelParams::from_array(lo), &data).unwrap();
            for i in 0..4 {
                let fd = (gh[i] - gl[i]) / (2.0 * step);
                assert!(
                    (fd - h[i][j]).abs() <= 1e-5 * (1.0 + h[i][j].abs()),
                    "H[{i}][{j}] analytic {} vs fd {fd}",
                    h[i][j]
                );
            }
        }
    }
}
