//! Barrier interior-point solver for convex QCQPs
//!
//! ```text
//! minimize    f0(x)
//! subject to  fi(x) <= 0,   i = 1..m
//! ```
//!
//! where every `f` is `½·xᵀQx + qᵀx + r` with `Q` positive semidefinite and
//! block diagonal over the leading `block_count·block_dim` coordinates (the
//! remaining coordinates enter linearly). The Newton system is assembled
//! densely and factored by Cholesky; problem sizes here are a few hundred
//! variables.

use crate::error::{Error, Result};

/// A convex quadratic `½·xᵀQx + qᵀx + r` with block-diagonal `Q`.
#[derive(Debug, Clone, Default)]
pub struct QuadFn {
    /// Non-zero diagonal blocks as `(block index, row-major block_dim² entries)`.
    pub blocks: Vec<(usize, Vec<f64>)>,
    /// Sparse linear term.
    pub linear: Vec<(usize, f64)>,
    pub constant: f64,
}

impl QuadFn {
    pub fn linear(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        Self {
            blocks: Vec::new(),
            linear: terms,
            constant,
        }
    }

    pub fn eval(&self, x: &[f64], block_dim: usize) -> f64 {
        let mut v = self.constant;
        for &(b, ref q) in &self.blocks {
            let xb = &x[b * block_dim..(b + 1) * block_dim];
            let mut acc = 0.0;
            for i in 0..block_dim {
                let row = &q[i * block_dim..(i + 1) * block_dim];
                acc += xb[i] * row.iter().zip(xb).map(|(a, b)| a * b).sum::<f64>();
            }
            v += 0.5 * acc;
        }
        for &(i, c) in &self.linear {
            v += c * x[i];
        }
        v
    }

    /// Adds `∇f(x)` scaled by `scale` into `out`.
    pub fn add_gradient(&self, x: &[f64], block_dim: usize, scale: f64, out: &mut [f64]) {
        for &(b, ref q) in &self.blocks {
            let off = b * block_dim;
            let xb = &x[off..off + block_dim];
            for i in 0..block_dim {
                let row = &q[i * block_dim..(i + 1) * block_dim];
                out[off + i] += scale * row.iter().zip(xb).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        for &(i, c) in &self.linear {
            out[i] += scale * c;
        }
    }

    /// Indices the gradient can be non-zero at, sorted and deduplicated.
    fn support(&self, block_dim: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .blocks
            .iter()
            .flat_map(|(b, _)| b * block_dim..(b + 1) * block_dim)
            .chain(self.linear.iter().map(|&(i, _)| i))
            .collect();
        idx.sort_unstable();
        idx.dedup();
        idx
    }
}

#[derive(Debug, Clone)]
pub struct QcqpProblem {
    pub dim: usize,
    pub block_dim: usize,
    pub objective: QuadFn,
    pub constraints: Vec<QuadFn>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Duality gap target `m/t`.
    pub gap_tol: f64,
    /// Largest accepted KKT residual at termination.
    pub kkt_tol: f64,
    pub max_iter: usize,
    /// Barrier parameter growth factor.
    pub mu: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gap_tol: 5e-7,
            kkt_tol: 1e-6,
            max_iter: 500,
            mu: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QcqpSolverOutput {
    pub x: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub objective: f64,
    /// `max(‖∇f0 + Σλ∇fi‖∞, −Σλ·fi)` at the returned point, with the
    /// multipliers `λi = 1/(−t·fi)` of the final barrier subproblem.
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Debug)]
pub enum QcqpFailure {
    /// No strictly feasible point exists.
    Infeasible { violation: f64 },
    /// Iteration cap reached; carries the last primal-feasible iterate.
    NotConverged(QcqpSolverOutput),
}

impl From<QcqpFailure> for Error {
    fn from(f: QcqpFailure) -> Self {
        match f {
            QcqpFailure::Infeasible { violation } => Error::Infeasible {
                deficits: vec![violation],
            },
            QcqpFailure::NotConverged(out) => Error::NotConverged {
                iterations: out.iterations,
                residual: out.kkt_residual,
            },
        }
    }
}

struct Workspace {
    values: Vec<f64>,
    grads: Vec<Vec<f64>>,
    supports: Vec<Vec<usize>>,
    obj_grad: Vec<f64>,
}

impl QcqpProblem {
    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| c.eval(x, self.block_dim))
            .collect()
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraint_values(x)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn workspace(&self) -> Workspace {
        Workspace {
            values: vec![0.0; self.constraints.len()],
            grads: vec![vec![0.0; self.dim]; self.constraints.len()],
            supports: self
                .constraints
                .iter()
                .map(|c| c.support(self.block_dim))
                .collect(),
            obj_grad: vec![0.0; self.dim],
        }
    }

    fn evaluate(&self, x: &[f64], ws: &mut Workspace) {
        let bd = self.block_dim;
        ws.obj_grad.iter_mut().for_each(|g| *g = 0.0);
        self.objective.add_gradient(x, bd, 1.0, &mut ws.obj_grad);
        for (i, c) in self.constraints.iter().enumerate() {
            ws.values[i] = c.eval(x, bd);
            let g = &mut ws.grads[i];
            for &j in &ws.supports[i] {
                g[j] = 0.0;
            }
            c.add_gradient(x, bd, 1.0, g);
        }
    }

    fn dual_residual(&self, ws: &Workspace, lambda: &[f64]) -> Vec<f64> {
        let mut r = ws.obj_grad.clone();
        for (i, l) in lambda.iter().enumerate() {
            for &j in &ws.supports[i] {
                r[j] += l * ws.grads[i][j];
            }
        }
        r
    }

    /// Solves from a strictly feasible `x0`, or runs a phase-I search first
    /// when `x0` violates a constraint.
    pub fn solve(&self, x0: &[f64], opts: &SolverOptions) -> Result<QcqpSolverOutput, QcqpFailure> {
        assert_eq!(x0.len(), self.dim, "initial point has the wrong dimension");
        // a start on the boundary stalls the barrier; recenter through phase I
        let start = if self.max_violation(x0) < -1e-9 {
            x0.to_vec()
        } else {
            self.phase_one(x0, opts)?
        };
        self.interior_point(start, opts, None)
    }

    fn phase_one(&self, x0: &[f64], opts: &SolverOptions) -> Result<Vec<f64>, QcqpFailure> {
        let all: Vec<usize> = (0..self.constraints.len()).collect();
        let (x, s) = self.relax(x0, &all, opts, Some(1e-6))?;
        if s < 0.0 && self.max_violation(&x) < 0.0 {
            Ok(x)
        } else {
            Err(QcqpFailure::Infeasible { violation: s })
        }
    }

    /// Minimizes the largest value among the `soft` constraints while the
    /// others stay strictly satisfied, which `x0` must already do. Returns
    /// the point and that largest value; a negative value means `x` is
    /// strictly feasible.
    pub fn least_violation(
        &self,
        x0: &[f64],
        soft: &[usize],
        opts: &SolverOptions,
    ) -> Result<(Vec<f64>, f64), QcqpFailure> {
        self.relax(x0, soft, opts, Some(1e-6))
    }

    fn relax(
        &self,
        x0: &[f64],
        soft: &[usize],
        opts: &SolverOptions,
        margin: Option<f64>,
    ) -> Result<(Vec<f64>, f64), QcqpFailure> {
        // minimize s  s.t.  fi(x) − s ≤ 0 (soft),  fi(x) ≤ 0 (hard),  −s − 1 ≤ 0
        assert_eq!(x0.len(), self.dim, "initial point has the wrong dimension");
        let values = self.constraint_values(x0);
        let mut is_soft = vec![false; values.len()];
        for &i in soft {
            is_soft[i] = true;
        }
        let hard_worst = values
            .iter()
            .zip(&is_soft)
            .filter(|(_, &soft)| !soft)
            .fold(f64::NEG_INFINITY, |a, (v, _)| a.max(*v));
        if hard_worst >= 0.0 {
            return Err(QcqpFailure::Infeasible { violation: hard_worst });
        }
        let soft_worst = values
            .iter()
            .zip(&is_soft)
            .filter(|(_, &soft)| soft)
            .fold(f64::NEG_INFINITY, |a, (v, _)| a.max(*v));
        if soft_worst == f64::NEG_INFINITY {
            return Ok((x0.to_vec(), soft_worst));
        }

        let s_idx = self.dim;
        let mut constraints: Vec<QuadFn> = self
            .constraints
            .iter()
            .zip(&is_soft)
            .map(|(c, &soft)| {
                let mut c = c.clone();
                if soft {
                    c.linear.push((s_idx, -1.0));
                }
                c
            })
            .collect();
        constraints.push(QuadFn::linear(vec![(s_idx, -1.0)], -1.0));
        let aux = QcqpProblem {
            dim: self.dim + 1,
            block_dim: self.block_dim,
            objective: QuadFn::linear(vec![(s_idx, 1.0)], 0.0),
            constraints,
        };
        let mut x = x0.to_vec();
        x.push(soft_worst.max(0.0) + 1.0);
        // stop as soon as the soft constraints hold with a margin
        let early = margin.map(|m| move |z: &[f64]| z[s_idx] < -m);
        let early_ref = early.as_ref().map(|f| f as &dyn Fn(&[f64]) -> bool);
        let out = match aux.interior_point(x, opts, early_ref) {
            Ok(out) => out,
            Err(QcqpFailure::NotConverged(out)) => out,
            Err(e) => return Err(e),
        };
        let mut x = out.x;
        x.pop().expect("auxiliary variable");
        let worst = soft
            .iter()
            .map(|&i| self.constraints[i].eval(&x, self.block_dim))
            .fold(f64::NEG_INFINITY, f64::max);
        Ok((x, worst))
    }

    fn interior_point(
        &self,
        mut x: Vec<f64>,
        opts: &SolverOptions,
        stop_early: Option<&dyn Fn(&[f64]) -> bool>,
    ) -> Result<QcqpSolverOutput, QcqpFailure> {
        let n = self.dim;
        let m = self.constraints.len();
        let bd = self.block_dim;
        let mut ws = self.workspace();
        self.evaluate(&x, &mut ws);
        let mut hess = vec![0.0; n * n];
        let mut iterations = 0;
        let mut t = 1.0;

        let finish = |x: Vec<f64>, ws: &Workspace, t: f64, iterations: usize| {
            let lambda: Vec<f64> = ws.values.iter().map(|f| 1.0 / (-t * f)).collect();
            let r = self.dual_residual(ws, &lambda);
            let rd = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            QcqpSolverOutput {
                objective: self.objective.eval(&x, bd),
                kkt_residual: rd.max(m as f64 / t),
                x,
                multipliers: lambda,
                iterations,
            }
        };
        let barrier = |x: &[f64], t: f64| -> Option<f64> {
            let mut phi = t * self.objective.eval(x, bd);
            for c in &self.constraints {
                let f = c.eval(x, bd);
                if !(f < 0.0) {
                    return None;
                }
                phi -= (-f).ln();
            }
            Some(phi)
        };

        loop {
            // centering: Newton on t·f0 − Σ log(−fi)
            let mut inner = 0;
            loop {
                if let Some(stop) = stop_early {
                    if stop(&x) {
                        return Ok(finish(x, &ws, t, iterations));
                    }
                }
                if iterations >= opts.max_iter {
                    return Err(QcqpFailure::NotConverged(finish(x, &ws, t, iterations)));
                }
                iterations += 1;
                hess.iter_mut().for_each(|h| *h = 0.0);
                add_blocks(&mut hess, n, bd, &self.objective, t);
                let mut grad: Vec<f64> = ws.obj_grad.iter().map(|g| t * g).collect();
                for i in 0..m {
                    let inv = 1.0 / -ws.values[i];
                    add_blocks(&mut hess, n, bd, &self.constraints[i], inv);
                    let g = &ws.grads[i];
                    let sup = &ws.supports[i];
                    let w = inv * inv;
                    for (a, &p) in sup.iter().enumerate() {
                        let gp = w * g[p];
                        if gp == 0.0 {
                            continue;
                        }
                        let row = &mut hess[p * n..(p + 1) * n];
                        for &q in &sup[..=a] {
                            row[q] += gp * g[q];
                        }
                        grad[p] += inv * g[p];
                    }
                }
                let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
                let Some(dx) = cholesky_solve(&mut hess, n, &rhs) else {
                    return Err(QcqpFailure::NotConverged(finish(x, &ws, t, iterations)));
                };
                let decrement: f64 = -grad.iter().zip(&dx).map(|(g, d)| g * d).sum::<f64>();
                // the decrement is scale-free, but the dual residual is
                // ‖∇φ‖/t, so both must be small before leaving this t
                let dual = grad.iter().fold(0.0f64, |a, g| a.max(g.abs())) / t;
                inner += 1;
                if decrement / 2.0 <= 1e-20
                    || (decrement / 2.0 <= 1e-12 && (dual <= 0.1 * opts.kkt_tol || inner > 10))
                    || inner > 60
                {
                    break;
                }
                let phi0 = barrier(&x, t).expect("iterate is strictly feasible");
                let mut step = 1.0;
                let mut moved = false;
                for _ in 0..80 {
                    let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + step * d).collect();
                    if let Some(phi) = barrier(&xt, t) {
                        // inside the quadratic-convergence region a feasible
                        // step needs no descent test, which large t would
                        // drown in rounding
                        if decrement < 0.1 || phi <= phi0 - 0.25 * step * decrement {
                            x = xt;
                            moved = true;
                            break;
                        }
                    }
                    step *= 0.5;
                }
                if !moved {
                    // no further progress representable at this t
                    break;
                }
                self.evaluate(&x, &mut ws);
            }
            if m == 0 || (m as f64) / t <= opts.gap_tol * (1.0 + 1e-12) {
                let out = finish(x, &ws, t, iterations);
                return if out.kkt_residual <= opts.kkt_tol {
                    Ok(out)
                } else {
                    Err(QcqpFailure::NotConverged(out))
                };
            }
            // land exactly on the target gap rather than overshooting it
            t = (t * opts.mu).min(m as f64 / opts.gap_tol);
        }
    }
}


/// Adds `scale·Q` of `f` into the lower triangle of the dense Hessian.
fn add_blocks(hess: &mut [f64], n: usize, bd: usize, f: &QuadFn, scale: f64) {
    if scale == 0.0 {
        return;
    }
    for &(b, ref q) in &f.blocks {
        let off = b * bd;
        for i in 0..bd {
            for j in 0..=i {
                hess[(off + i) * n + off + j] += scale * q[i * bd + j];
            }
        }
    }
}

/// In-place Cholesky of the lower triangle of `a` (row-major n×n) and solve.
/// Adds a small diagonal shift if the factorization breaks down.
fn cholesky_solve(a: &mut [f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    let original: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let scale = original.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let backup = a.to_vec();
    let mut shift = 0.0;
    for _ in 0..12 {
        if shift > 0.0 {
            a.copy_from_slice(&backup);
            for i in 0..n {
                a[i * n + i] += shift;
            }
        }
        if cholesky_in_place(a, n) {
            let mut y = b.to_vec();
            for i in 0..n {
                let mut s = y[i];
                for k in 0..i {
                    s -= a[i * n + k] * y[k];
                }
                y[i] = s / a[i * n + i];
            }
            for i in (0..n).rev() {
                let mut s = y[i];
                for k in i + 1..n {
                    s -= a[k * n + i] * y[k];
                }
                y[i] = s / a[i * n + i];
            }
            return Some(y);
        }
        shift = if shift == 0.0 { scale * 1e-14 } else { shift * 100.0 };
    }
    None
}

fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            let (ri, rj) = (i * n, j * n);
            for k in 0..j {
                s -= a[ri + k] * a[rj + k];
            }
            a[i * n + j] = s / d;
        }
    }
    true
}
