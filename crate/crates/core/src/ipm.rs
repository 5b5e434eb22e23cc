//! Primal-dual interior-point method for smooth convex programs
//!
//! ```text
//! minimize f0(z)  subject to  f_k(z) <= 0,  k = 1..K
//! ```
//!
//! with `f0` and every `f_k` convex and twice differentiable on an open domain.
//! The iteration follows the standard primal-dual scheme: Newton steps on the
//! modified KKT residual with the centering parameter chosen from the surrogate
//! duality gap, a fraction-to-boundary rule on the multipliers, and
//! backtracking on the residual norm. The Newton system is reduced to the
//! primal block and factored with Cholesky (LU as a fallback).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A convex program in `minimize f0 s.t. f_k <= 0` form.
pub trait ConvexProgram {
    fn dim(&self) -> usize;

    fn num_constraints(&self) -> usize;

    /// Writes every `f_k(z)` into `cons` and returns `f0(z)`, or `None` when `z`
    /// lies outside the domain of any function.
    fn values(&self, z: &[f64], cons: &mut [f64]) -> Option<f64>;

    /// Gradient and Hessian of the objective; both buffers arrive zeroed.
    fn objective_derivatives(&self, z: &[f64], grad: &mut [f64], hess: &mut DMatrix<f64>);

    /// Sparse gradient of constraint `k` as `(index, partial)` pairs appended to `out`.
    fn constraint_gradient(&self, k: usize, z: &[f64], out: &mut Vec<(usize, f64)>);

    /// Adds `weight` times the Hessian of constraint `k`. Linear constraints keep the default.
    fn add_constraint_hessian(&self, _k: usize, _z: &[f64], _weight: f64, _hess: &mut DMatrix<f64>) {}
}

#[derive(Debug, Clone, Copy)]
pub struct IpmOptions {
    /// Target surrogate duality gap `-f(z)'lambda`.
    pub gap_tol: f64,
    /// Target norm of the dual residual `grad f0 + Df' lambda`.
    pub residual_tol: f64,
    pub max_iterations: usize,
    /// Centering factor applied to `K / gap`.
    pub mu: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-12,
            residual_tol: 1e-10,
            max_iterations: 500,
            mu: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub z: Vec<f64>,
    /// Constraint multipliers, one per `f_k`.
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub gap: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

struct Residuals {
    dual: DVector<f64>,
    cent: DVector<f64>,
}

impl Residuals {
    fn norm(&self) -> f64 {
        (self.dual.norm_squared() + self.cent.norm_squared()).sqrt()
    }
}

struct Workspace<'a, P: ConvexProgram + ?Sized> {
    prog: &'a P,
    n: usize,
    k: usize,
    grads: Vec<Vec<(usize, f64)>>,
}

impl<P: ConvexProgram + ?Sized> Workspace<'_, P> {
    fn gradients(&mut self, z: &[f64]) {
        for (k, g) in self.grads.iter_mut().enumerate() {
            g.clear();
            self.prog.constraint_gradient(k, z, g);
        }
    }

    /// Residuals at `(z, lambda)` for barrier parameter `t`; `grads` must be current for `z`.
    fn residuals(&self, z: &[f64], cons: &[f64], lambda: &[f64], t: f64) -> Residuals {
        let mut g0 = vec![0.0; self.n];
        let mut scratch = DMatrix::zeros(0, 0);
        self.objective_gradient(z, &mut g0, &mut scratch);
        let mut dual = DVector::from_vec(g0);
        for (k, g) in self.grads.iter().enumerate() {
            for &(i, v) in g {
                dual[i] += lambda[k] * v;
            }
        }
        let cent = DVector::from_fn(self.k, |k, _| -lambda[k] * cons[k] - 1.0 / t);
        Residuals { dual, cent }
    }

    fn objective_gradient(&self, z: &[f64], grad: &mut [f64], hess: &mut DMatrix<f64>) {
        if hess.nrows() != self.n {
            *hess = DMatrix::zeros(self.n, self.n);
        } else {
            hess.fill(0.0);
        }
        self.prog.objective_derivatives(z, grad, hess);
    }
}

/// Runs the primal-dual method from a strictly feasible `z0`.
pub fn solve<P: ConvexProgram + ?Sized>(prog: &P, z0: Vec<f64>, opts: &IpmOptions) -> Result<IpmResult> {
    let n = prog.dim();
    let k = prog.num_constraints();
    if z0.len() != n {
        return Err(Error::Dimension(format!("start point has {} entries, program has {n}", z0.len())));
    }
    let mut cons = vec![0.0; k];
    let mut f0 = prog
        .values(&z0, &mut cons)
        .ok_or_else(|| Error::Invalid("start point outside the domain".into()))?;
    if let Some(bad) = cons.iter().position(|&c| !(c < 0.0)) {
        return Err(Error::Invalid(format!("start point violates constraint {bad} ({})", cons[bad])));
    }

    let mut ws = Workspace { prog, n, k, grads: vec![Vec::new(); k] };
    let mut z = z0;
    let mut lambda: Vec<f64> = cons.iter().map(|&c| 1.0 / (-c).max(1e-8)).collect();
    let mut hess = DMatrix::zeros(n, n);
    let mut grad0 = vec![0.0; n];
    let mut trial_cons = vec![0.0; k];
    let mut best: Option<(f64, IpmResult)> = None;

    for iter in 0..opts.max_iterations {
        ws.gradients(&z);
        let gap = if k == 0 { 0.0 } else { -cons.iter().zip(&lambda).map(|(c, l)| c * l).sum::<f64>() };
        let t = if k == 0 { 1.0 } else { opts.mu * k as f64 / gap.max(1e-300) };
        let res = ws.residuals(&z, &cons, &lambda, t);
        let dual_norm = res.dual.norm();

        let snapshot = IpmResult {
            z: z.clone(),
            lambda: lambda.clone(),
            objective: f0,
            gap,
            dual_residual: dual_norm,
            iterations: iter,
        };
        if dual_norm <= opts.residual_tol && gap <= opts.gap_tol {
            return Ok(snapshot);
        }
        let score = gap.max(dual_norm);
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, snapshot));
        }

        // Reduced Newton system for the primal step.
        grad0.iter_mut().for_each(|g| *g = 0.0);
        ws.objective_gradient(&z, &mut grad0, &mut hess);
        for kk in 0..k {
            if lambda[kk] != 0.0 {
                prog.add_constraint_hessian(kk, &z, lambda[kk], &mut hess);
            }
        }
        let mut rhs = -res.dual.clone();
        for (kk, g) in ws.grads.iter().enumerate() {
            let w = lambda[kk] / -cons[kk];
            for &(a, va) in g {
                rhs[a] -= va * res.cent[kk] / cons[kk];
                for &(b, vb) in g {
                    hess[(a, b)] += w * va * vb;
                }
            }
        }
        let dz = newton_direction(&hess, &rhs).ok_or_else(|| Error::NotConverged {
            context: "interior point: singular Newton system".into(),
            iterations: iter,
            residuals: vec![gap, dual_norm],
        })?;
        let dlambda: Vec<f64> = (0..k)
            .map(|kk| {
                let gdz: f64 = ws.grads[kk].iter().map(|&(i, v)| v * dz[i]).sum();
                (res.cent[kk] - lambda[kk] * gdz) / cons[kk]
            })
            .collect();

        // Fraction to the boundary on lambda, then stay strictly feasible, then
        // sufficient decrease of the residual norm.
        let mut s: f64 = 1.0;
        for kk in 0..k {
            if dlambda[kk] < 0.0 {
                s = s.min(-lambda[kk] / dlambda[kk]);
            }
        }
        s *= 0.99;
        let r0 = res.norm();
        let mut accepted = false;
        let mut trial_z = vec![0.0; n];
        let mut trial_lambda = vec![0.0; k];
        for _ in 0..200 {
            for i in 0..n {
                trial_z[i] = z[i] + s * dz[i];
            }
            for kk in 0..k {
                trial_lambda[kk] = lambda[kk] + s * dlambda[kk];
            }
            if let Some(val) = prog.values(&trial_z, &mut trial_cons) {
                if trial_cons.iter().all(|&c| c < 0.0) && val.is_finite() {
                    ws.gradients(&trial_z);
                    let r = ws.residuals(&trial_z, &trial_cons, &trial_lambda, t).norm();
                    if r <= (1.0 - 0.01 * s) * r0 || s < 1e-14 {
                        f0 = val;
                        accepted = true;
                        break;
                    }
                }
            }
            s *= 0.5;
            if s < 1e-16 {
                break;
            }
        }
        if !accepted {
            break;
        }
        std::mem::swap(&mut z, &mut trial_z);
        std::mem::swap(&mut lambda, &mut trial_lambda);
        std::mem::swap(&mut cons, &mut trial_cons);
    }

    // Either stalled or out of iterations. A stall at the limits of double
    // precision is still a usable answer when it is close to the targets.
    let (_, best) = best.expect("at least one iterate");
    if best.gap <= opts.gap_tol * 1e3 && best.dual_residual <= opts.residual_tol * 1e3 {
        return Ok(best);
    }
    Err(Error::NotConverged {
        context: "interior point".into(),
        iterations: best.iterations,
        residuals: vec![best.gap, best.dual_residual],
    })
}

fn newton_direction(hess: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = hess.clone().cholesky() {
        let dz = ch.solve(rhs);
        if dz.iter().all(|v| v.is_finite()) {
            return Some(dz);
        }
    }
    let n = hess.nrows();
    let scale = (0..n).map(|i| hess[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut reg = hess.clone();
    for i in 0..n {
        reg[(i, i)] += 1e-12 * scale;
    }
    reg.lu().solve(rhs).filter(|dz| dz.iter().all(|v| v.is_finite()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// minimize (z0 - 2)^2 + (z1 - 2)^2 subject to z0 + z1 <= 2, -z <= 0.
    struct Projection;

    impl ConvexProgram for Projection {
        fn dim(&self) -> usize {
            2
        }
        fn num_constraints(&self) -> usize {
            3
        }
        fn values(&self, z: &[f64], cons: &mut [f64]) -> Option<f64> {
            cons[0] = z[0] + z[1] - 2.0;
            cons[1] = -z[0];
            cons[2] = -z[1];
            Some((z[0] - 2.0).powi(2) + (z[1] - 2.0).powi(2))
        }
        fn objective_derivatives(&self, z: &[f64], grad: &mut [f64], hess: &mut DMatrix<f64>) {
            grad[0] = 2.0 * (z[0] - 2.0);
            grad[1] = 2.0 * (z[1] - 2.0);
            hess[(0, 0)] = 2.0;
            hess[(1, 1)] = 2.0;
        }
        fn constraint_gradient(&self, k: usize, _z: &[f64], out: &mut Vec<(usize, f64)>) {
            match k {
                0 => out.extend([(0, 1.0), (1, 1.0)]),
                1 => out.push((0, -1.0)),
                _ => out.push((1, -1.0)),
            }
        }
    }

    #[test]
    fn projects_onto_simplex_face() {
        let r = solve(&Projection, vec![0.5, 0.25], &IpmOptions::default()).unwrap();
        assert!((r.z[0] - 1.0).abs() < 1e-8 && (r.z[1] - 1.0).abs() < 1e-8, "{:?}", r.z);
        // Stationarity: 2(z - 2) + lambda0 = 0 => lambda0 = 2.
        assert!((r.lambda[0] - 2.0).abs() < 1e-7);
        assert!(r.lambda[1].abs() < 1e-8);
    }

    /// maximize ln z subject to z <= 3 (as minimize -ln z), nonlinear domain.
    struct LogBarrier;

    impl ConvexProgram for LogBarrier {
        fn dim(&self) -> usize {
            1
        }
        fn num_constraints(&self) -> usize {
            1
        }
        fn values(&self, z: &[f64], cons: &mut [f64]) -> Option<f64> {
            cons[0] = z[0] - 3.0;
            (z[0] > 0.0).then(|| -z[0].ln())
        }
        fn objective_derivatives(&self, z: &[f64], grad: &mut [f64], hess: &mut DMatrix<f64>) {
            grad[0] = -1.0 / z[0];
            hess[(0, 0)] = 1.0 / (z[0] * z[0]);
        }
        fn constraint_gradient(&self, _k: usize, _z: &[f64], out: &mut Vec<(usize, f64)>) {
            out.push((0, 1.0));
        }
    }

    #[test]
    fn respects_the_domain() {
        let r = solve(&LogBarrier, vec![1.0], &IpmOptions::default()).unwrap();
        assert!((r.z[0] - 3.0).abs() < 1e-9);
        assert!((r.lambda[0] - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        assert!(solve(&LogBarrier, vec![4.0], &IpmOptions::default()).is_err());
        assert!(solve(&LogBarrier, vec![-1.0], &IpmOptions::default()).is_err());
    }
}
