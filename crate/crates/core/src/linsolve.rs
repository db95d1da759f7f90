//! Solvers for the augmented saddle-point system of [`AssembledSystem`].
//!
//! The Krylov path is MINRES with a symmetric positive definite block-diagonal
//! preconditioner. Convergence is declared only on the true relative residual
//! `||b - K x|| / ||b||` in the Euclidean norm, recomputed from scratch.

use faer::linalg::solvers::SolveCore;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, MatMut, Side};

use crate::assembly::AssembledSystem;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Largest augmented system the dense oracle accepts.
pub const DIRECT_ORACLE_LIMIT: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Krylov,
    DirectOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    /// Velocity diagonal and pressure mass.
    Jacobi,
    /// Sparse Cholesky of each velocity component block and pressure mass.
    BlockCholesky,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub rel_tolerance: f64,
    /// `None` means 50 times the number of unknowns.
    pub max_iterations: Option<usize>,
    pub method: Method,
    pub preconditioner: Preconditioner,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rel_tolerance: 1e-10,
            max_iterations: None,
            method: Method::Krylov,
            preconditioner: Preconditioner::BlockCholesky,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tolerance > 0.0 && self.rel_tolerance < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must lie in (0, 1), got {}",
                self.rel_tolerance
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::InvalidArgument(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    /// True relative residual of the augmented system.
    pub residual_norm: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn relative_residual(sys: &AssembledSystem, x: &[f64], b: &[f64], bnorm: f64) -> f64 {
    let mut kx = vec![0.0; x.len()];
    sys.apply(x, &mut kx);
    let r: f64 = kx
        .iter()
        .zip(b)
        .map(|(k, b)| (b - k) * (b - k))
        .sum::<f64>()
        .sqrt();
    r / bnorm
}

/// Solves the augmented system with the requested method.
pub fn solve_saddle(sys: &AssembledSystem, opts: &SolveOptions) -> Result<Solution> {
    opts.validate()?;
    match opts.method {
        Method::DirectOracle => direct_oracle(sys),
        Method::Krylov => minres(sys, opts),
    }
}

/// Removes the tiny mean left by the iteration so the constraint holds to
/// rounding, then splits the augmented vector.
fn finish(
    sys: &AssembledSystem,
    mut x: Vec<f64>,
    b: &[f64],
    bnorm: f64,
    iterations: usize,
) -> Solution {
    let nv = sys.num_velocity();
    let np = sys.num_pressure();
    let total: f64 = sys.mean.iter().sum();
    let mean = dot(&sys.mean, &x[nv..nv + np]) / total;
    for v in &mut x[nv..nv + np] {
        *v -= mean;
    }
    let residual_norm = if bnorm == 0.0 {
        0.0
    } else {
        relative_residual(sys, &x, b, bnorm)
    };
    let p = x[nv..nv + np].to_vec();
    x.truncate(nv);
    Solution {
        u: x,
        p,
        residual_norm,
        iterations,
    }
}

/// Dense LU of the augmented system; a reference for cross-checks.
pub fn direct_oracle(sys: &AssembledSystem) -> Result<Solution> {
    let n = sys.augmented_len();
    if n > DIRECT_ORACLE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "direct oracle is limited to {DIRECT_ORACLE_LIMIT} unknowns, system has {n}"
        )));
    }
    let b = sys.augmented_rhs();
    let lu = sys.to_dense_augmented().lu();
    let diag = lu.u().diagonal();
    let max = diag.amax();
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(max > 0.0) || min <= 1e-14 * max {
        return Err(Error::SingularSystem(format!(
            "pivot ratio {:.3e}",
            min / max
        )));
    }
    let x = lu
        .solve(&nalgebra::DVector::from_column_slice(&b))
        .ok_or_else(|| Error::SingularSystem("zero pivot".into()))?;
    let bnorm = norm(&b);
    Ok(finish(sys, x.as_slice().to_vec(), &b, bnorm, 0))
}

struct CholeskyBlock {
    lo: usize,
    len: usize,
    factor: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

enum Precond {
    Identity,
    Diagonal(Vec<f64>),
    Block {
        blocks: Vec<CholeskyBlock>,
        scale: f64,
        tail: Vec<f64>,
    },
}

fn factor_block(a: &CsrMatrix, lo: usize, hi: usize) -> Result<CholeskyBlock> {
    let block = a.diagonal_block(lo, hi);
    // only the lower triangle is read
    let triplets: Vec<Triplet<usize, usize, f64>> = block
        .triplets()
        .filter(|&(r, c, _)| r >= c)
        .map(|(r, c, v)| Triplet::new(r, c, v))
        .collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(hi - lo, hi - lo, &triplets)
        .map_err(|e| Error::SingularSystem(format!("velocity block: {e:?}")))?;
    let factor = mat.sp_cholesky(Side::Lower).map_err(|e| {
        Error::SingularSystem(format!("velocity block is not positive definite: {e:?}"))
    })?;
    Ok(CholeskyBlock {
        lo,
        len: hi - lo,
        factor,
    })
}

impl Precond {
    fn build(sys: &AssembledSystem, kind: Preconditioner) -> Result<Self> {
        let nu = sys.nu;
        // Schur complement of the pressure block is spectrally close to the
        // pressure mass divided by nu; the multiplier then sees nu * sum |T|.
        let mut tail: Vec<f64> = sys.mean.iter().map(|m| nu / m).collect();
        tail.push(1.0 / (nu * sys.mean.iter().sum::<f64>()));
        Ok(match kind {
            Preconditioner::None => Precond::Identity,
            Preconditioner::Jacobi => {
                let mut d: Vec<f64> = sys.a.diagonal().iter().map(|v| 1.0 / (nu * v)).collect();
                d.extend(tail);
                Precond::Diagonal(d)
            }
            Preconditioner::BlockCholesky => {
                let n = sys.dofs.per_component();
                let blocks = vec![factor_block(&sys.a, 0, n)?, factor_block(&sys.a, n, 2 * n)?];
                Precond::Block {
                    blocks,
                    scale: 1.0 / nu,
                    tail,
                }
            }
        })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Precond::Identity => z.copy_from_slice(r),
            Precond::Diagonal(d) => {
                for ((z, r), d) in z.iter_mut().zip(r).zip(d) {
                    *z = r * d;
                }
            }
            Precond::Block {
                blocks,
                scale,
                tail,
            } => {
                z.copy_from_slice(r);
                let mut end = 0;
                for b in blocks {
                    let n = b.len;
                    let seg = &mut z[b.lo..b.lo + n];
                    b.factor.solve_in_place_with_conj(
                        Conj::No,
                        MatMut::from_column_major_slice_mut(seg, n, 1),
                    );
                    for v in seg.iter_mut() {
                        *v *= scale;
                    }
                    end = b.lo + n;
                }
                for (z, d) in z[end..].iter_mut().zip(tail) {
                    *z *= d;
                }
            }
        }
    }
}

/// True-residual checks without halving the best residual before a cycle
/// gives up.
const STALL_CHECKS: usize = 8;
/// Restarts allowed once the recurrence has stagnated.
const MAX_CYCLES: usize = 12;

/// Preconditioned MINRES on the augmented system, restarted on the freshly
/// computed residual whenever the recurrence stagnates. The updated iterate
/// of a long MINRES run loses accuracy at a level set by the conditioning;
/// a restart solves for the correction instead, pushing that floor down.
fn minres(sys: &AssembledSystem, opts: &SolveOptions) -> Result<Solution> {
    let n = sys.augmented_len();
    let b = sys.augmented_rhs();
    let bnorm = norm(&b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(finish(sys, x, &b, bnorm, 0));
    }
    let max_iter = opts.max_iterations.unwrap_or(50 * n);
    let prec = Precond::build(sys, opts.preconditioner)?;
    let mut r = b.clone();
    let mut rel = 1.0;
    let mut used = 0;
    for _ in 0..MAX_CYCLES {
        // ||r|| = rel ||b||, and the correction must reach tol ||b||
        let goal = opts.rel_tolerance / rel;
        let cycle = minres_cycle(sys, &prec, &r, goal, max_iter - used)?;
        used += cycle.iterations;
        for (xi, di) in x.iter_mut().zip(&cycle.x) {
            *xi += di;
        }
        let mut kx = vec![0.0; n];
        sys.apply(&x, &mut kx);
        for ((ri, bi), ki) in r.iter_mut().zip(&b).zip(&kx) {
            *ri = bi - ki;
        }
        let new_rel = norm(&r) / bnorm;
        if new_rel <= opts.rel_tolerance {
            return Ok(finish(sys, x, &b, bnorm, used));
        }
        let progressed = new_rel < 0.5 * rel;
        rel = rel.min(new_rel);
        if !progressed || used >= max_iter || cycle.breakdown {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: used,
        best_residual: rel,
    })
}

struct Cycle {
    x: Vec<f64>,
    iterations: usize,
    breakdown: bool,
}

/// One MINRES run on `K x = b`, stopped once `||b - K x|| <= tol ||b||`, when
/// the true residual stagnates, or after `max_iter` steps. Returns the
/// iterate with the smallest true residual seen.
fn minres_cycle(
    sys: &AssembledSystem,
    prec: &Precond,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Cycle> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    let mut best_x = x.clone();

    let mut r1 = b.to_vec();
    let mut r2 = b.to_vec();
    let mut y = vec![0.0; n];
    prec.apply(&r1, &mut y);
    let beta1 = dot(&r1, &y);
    if !(beta1 > 0.0) {
        return Err(Error::SingularSystem(
            "preconditioner is not positive definite".into(),
        ));
    }
    let beta1 = beta1.sqrt();

    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    // the estimate measures the preconditioned residual, so the target it
    // must reach is adapted whenever a true-residual check fails
    let mut target = tol;
    let mut best = f64::INFINITY;
    let mut stalled = 0;

    for itn in 1..=max_iter {
        let s = 1.0 / beta;
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = s * yi;
        }
        sys.apply(&v, &mut y);
        if itn >= 2 {
            let c = beta / oldb;
            for (yi, ri) in y.iter_mut().zip(&r1) {
                *yi -= c * ri;
            }
        }
        let alfa = dot(&v, &y);
        let c = alfa / beta;
        for (yi, ri) in y.iter_mut().zip(&r2) {
            *yi -= c * ri;
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        prec.apply(&r2, &mut y);
        oldb = beta;
        let b2 = dot(&r2, &y);
        beta = b2.max(0.0).sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        let denom = 1.0 / gamma;
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }

        let estimate = phibar / beta1;
        let breakdown = beta == 0.0;
        if estimate <= target || breakdown || itn == max_iter {
            let mut kx = vec![0.0; n];
            sys.apply(&x, &mut kx);
            let rel = kx
                .iter()
                .zip(b)
                .map(|(k, b)| (b - k) * (b - k))
                .sum::<f64>()
                .sqrt()
                / bnorm;
            stalled = if rel < 0.5 * best { 0 } else { stalled + 1 };
            if rel < best {
                best = rel;
                best_x.copy_from_slice(&x);
            }
            if rel <= tol || breakdown || stalled >= STALL_CHECKS {
                return Ok(Cycle {
                    x: best_x,
                    iterations: itn,
                    breakdown,
                });
            }
            target = (estimate * tol / rel).min(0.1 * estimate);
        }
    }
    Ok(Cycle {
        x: best_x,
        iterations: max_iter,
        breakdown: false,
    })
}
