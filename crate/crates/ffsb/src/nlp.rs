//! Augmented-Lagrangian solver for smooth constrained programs.
//!
//! Problems are posed as `min f(x)` subject to `g(x) ≤ 0`, `h(x) = 0`, and
//! optional box bounds. The outer loop maintains multiplier estimates (λ for
//! inequalities, σ for equalities) and a penalty ρ, minimizing the augmented
//! merit
//!
//! ```text
//! Φ(x) = f(x) + Σ_i [ max(0, λ_i + ρ g_i(x))² − λ_i² ] / (2ρ)
//!             + Σ_j [ σ_j h_j(x) + ρ h_j(x)² / 2 ]
//! ```
//!
//! with a BFGS quasi-Newton inner loop (Armijo backtracking, iterates
//! projected onto the bounds). Gradients come from central differences
//! unless the problem supplies `objective_gradient` plus the Jacobians, in
//! which case the merit gradient is assembled analytically as
//! `∇f + Jᵀw + Jₑᵀ(σ + ρh)` with `w_i = max(0, λ_i + ρ g_i)`.

use nalgebra::{DMatrix, DVector};

/// A smooth nonlinear program. Inequalities use the `g(x) ≤ 0` convention;
/// equalities are satisfied at `h(x) = 0`.
pub trait NlpProblem {
    fn n_vars(&self) -> usize;

    fn n_constraints(&self) -> usize {
        0
    }

    fn n_eq_constraints(&self) -> usize {
        0
    }

    fn objective(&self, x: &DVector<f64>) -> f64;

    /// Fill `g` with the constraint values at `x`; `g.len() == n_constraints()`.
    fn constraints(&self, _x: &DVector<f64>, _g: &mut DVector<f64>) {}

    /// Fill `h` with the equality residuals at `x`; `h.len() == n_eq_constraints()`.
    fn eq_constraints(&self, _x: &DVector<f64>, _h: &mut DVector<f64>) {}

    /// Box bounds (lower, upper); `None` means unbounded.
    fn bounds(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        None
    }

    /// Analytic objective gradient, if available.
    fn objective_gradient(&self, _x: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    /// Analytic inequality Jacobian (rows = constraints), if available.
    fn constraint_jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Analytic equality Jacobian (rows = equalities), if available.
    fn eq_jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlpOptions {
    /// Feasibility tolerance on max constraint violation.
    pub tol_con: f64,
    /// Relative merit-improvement tolerance ending an inner solve.
    pub tol_obj: f64,
    /// Infinity-norm tolerance on the projected merit gradient.
    pub tol_grad: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub penalty_max: f64,
    pub multiplier_max: f64,
    /// Central-difference step scale.
    pub fd_step: f64,
}

impl Default for NlpOptions {
    fn default() -> Self {
        Self {
            tol_con: 1e-6,
            tol_obj: 1e-9,
            tol_grad: 1e-8,
            max_outer: 50,
            max_inner: 500,
            penalty_init: 10.0,
            penalty_growth: 10.0,
            penalty_max: 1e12,
            multiplier_max: 1e8,
            fd_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlpStatus {
    /// Inner loop met a tolerance and the iterate is feasible.
    Converged,
    /// Ran out of inner or outer iterations while still making progress.
    IterationLimit,
    /// Outer loop exhausted with constraint violation above tolerance.
    Infeasible,
}

impl std::fmt::Display for NlpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NlpStatus::Converged => "converged",
            NlpStatus::IterationLimit => "iteration_limit",
            NlpStatus::Infeasible => "infeasible",
        })
    }
}

#[derive(Debug, Clone)]
pub struct NlpResult {
    pub x: DVector<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub status: NlpStatus,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub f_evals: usize,
    /// Merit value after every accepted inner step, across all outer
    /// iterations. Monotone non-increasing between consecutive entries of
    /// `outer_starts`.
    pub merit_history: Vec<f64>,
    /// Indices into `merit_history` where a new outer iteration (new λ, ρ)
    /// begins.
    pub outer_starts: Vec<usize>,
    /// Final multiplier estimates, reusable as a warm start for a nearby
    /// problem.
    pub dual: DualState,
}

/// Multiplier state of the augmented Lagrangian, carried between related
/// solves (continuation steps, refined grids) so each one starts with a
/// working constraint-force estimate instead of rebuilding it from zero.
#[derive(Debug, Clone)]
pub struct DualState {
    /// Inequality multipliers, one per constraint row.
    pub lambda: DVector<f64>,
    /// Equality multipliers, one per equality row.
    pub sigma: DVector<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InnerStop {
    GradTol,
    MeritTol,
    StepTol,
    LineSearchDead,
    IterCap,
}

struct Workspace<'a> {
    problem: &'a dyn NlpProblem,
    lambda: DVector<f64>,
    sigma: DVector<f64>,
    rho: f64,
    g: std::cell::RefCell<DVector<f64>>,
    h_eq: std::cell::RefCell<DVector<f64>>,
    f_evals: std::cell::Cell<usize>,
    analytic: bool,
}

impl<'a> Workspace<'a> {
    fn merit(&self, x: &DVector<f64>) -> f64 {
        self.f_evals.set(self.f_evals.get() + 1);
        let mut total = self.problem.objective(x);
        let m = self.problem.n_constraints();
        if m > 0 {
            let mut g = self.g.borrow_mut();
            self.problem.constraints(x, &mut g);
            for i in 0..m {
                let shifted = (self.lambda[i] + self.rho * g[i]).max(0.0);
                total += (shifted * shifted - self.lambda[i] * self.lambda[i]) / (2.0 * self.rho);
            }
        }
        let me = self.problem.n_eq_constraints();
        if me > 0 {
            let mut h = self.h_eq.borrow_mut();
            self.problem.eq_constraints(x, &mut h);
            for j in 0..me {
                total += self.sigma[j] * h[j] + 0.5 * self.rho * h[j] * h[j];
            }
        }
        total
    }

    fn merit_gradient(&self, x: &DVector<f64>, fd_step: f64) -> DVector<f64> {
        if self.analytic {
            let mut grad = self
                .problem
                .objective_gradient(x)
                .expect("analytic flag implies a gradient");
            let m = self.problem.n_constraints();
            if m > 0 {
                let jac = self
                    .problem
                    .constraint_jacobian(x)
                    .expect("analytic flag implies a Jacobian");
                let mut g = self.g.borrow_mut();
                self.problem.constraints(x, &mut g);
                let w = DVector::from_fn(m, |i, _| (self.lambda[i] + self.rho * g[i]).max(0.0));
                drop(g);
                grad += jac.tr_mul(&w);
            }
            let me = self.problem.n_eq_constraints();
            if me > 0 {
                let jac = self
                    .problem
                    .eq_jacobian(x)
                    .expect("analytic flag implies an equality Jacobian");
                let mut h = self.h_eq.borrow_mut();
                self.problem.eq_constraints(x, &mut h);
                let w = DVector::from_fn(me, |j, _| self.sigma[j] + self.rho * h[j]);
                drop(h);
                grad += jac.tr_mul(&w);
            }
            grad
        } else {
            let n = x.len();
            let mut grad = DVector::zeros(n);
            let mut xp = x.clone();
            for i in 0..n {
                let h = fd_step.max(fd_step * x[i].abs());
                let xi = x[i];
                xp[i] = xi + h;
                let fp = self.merit(&xp);
                xp[i] = xi - h;
                let fm = self.merit(&xp);
                xp[i] = xi;
                grad[i] = (fp - fm) / (2.0 * h);
            }
            grad
        }
    }

    /// Fused merit gradient and Gauss-Newton curvature model on the analytic
    /// path, sharing one Jacobian evaluation. The model is
    /// B = I + ρ(JₐᵀJₐ + JₑᵀJₑ) with Jₐ the inequality rows whose shifted
    /// multiplier is active; B⁻¹∇Φ is a damped Newton step down the penalty
    /// valley that an identity-seeded BFGS would zigzag across.
    ///
    /// Variables that cannot move (equal bounds, or sitting on a bound face
    /// the gradient pushes against) are carved out of the model: a step
    /// computed as if they could move is wrecked by the projection, which
    /// strips exactly the components the linearization leaned on.
    fn gn_model(
        &self,
        x: &DVector<f64>,
        bounds: &Option<(DVector<f64>, DVector<f64>)>,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let n = x.len();
        let m = self.problem.n_constraints();
        let me = self.problem.n_eq_constraints();
        let mut grad = self
            .problem
            .objective_gradient(x)
            .expect("analytic flag implies a gradient");
        let mut b = DMatrix::zeros(n, n);
        if m > 0 {
            let jac = self
                .problem
                .constraint_jacobian(x)
                .expect("analytic flag implies a Jacobian");
            let mut g = self.g.borrow_mut();
            self.problem.constraints(x, &mut g);
            let w = DVector::from_fn(m, |i, _| (self.lambda[i] + self.rho * g[i]).max(0.0));
            drop(g);
            grad += jac.tr_mul(&w);
            let active: Vec<usize> = (0..m).filter(|&i| w[i] > 0.0).collect();
            if !active.is_empty() {
                let rows = jac.select_rows(active.iter());
                b += rows.tr_mul(&rows) * self.rho;
            }
        }
        if me > 0 {
            let jac = self
                .problem
                .eq_jacobian(x)
                .expect("analytic flag implies an equality Jacobian");
            let mut h = self.h_eq.borrow_mut();
            self.problem.eq_constraints(x, &mut h);
            let w = DVector::from_fn(me, |j, _| self.sigma[j] + self.rho * h[j]);
            drop(h);
            grad += jac.tr_mul(&w);
            b += jac.tr_mul(&jac) * self.rho;
        }
        // Variables pinned by equal bounds or pressed against a face the
        // gradient pushes through cannot move; carve them out of the model so
        // the step never leans on components the projection would strip.
        if let Some((lo, hi)) = bounds {
            for i in 0..n {
                let eps = 1e-12 * (1.0 + x[i].abs());
                let frozen = lo[i] == hi[i]
                    || ((x[i] - lo[i]).abs() <= eps && grad[i] > 0.0)
                    || ((hi[i] - x[i]).abs() <= eps && grad[i] < 0.0);
                if frozen {
                    for j in 0..n {
                        b[(i, j)] = 0.0;
                        b[(j, i)] = 0.0;
                    }
                    grad[i] = 0.0;
                }
            }
        }
        (grad, b)
    }

    /// Worst violation: positive inequality excess or absolute equality gap.
    fn violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst = 0.0f64;
        if self.problem.n_constraints() > 0 {
            let mut g = self.g.borrow_mut();
            self.problem.constraints(x, &mut g);
            worst = g.iter().fold(worst, |acc, &gi| acc.max(gi));
        }
        if self.problem.n_eq_constraints() > 0 {
            let mut h = self.h_eq.borrow_mut();
            self.problem.eq_constraints(x, &mut h);
            worst = h.iter().fold(worst, |acc, &hj| acc.max(hj.abs()));
        }
        worst
    }
}

fn project(x: &mut DVector<f64>, bounds: &Option<(DVector<f64>, DVector<f64>)>) {
    if let Some((lo, hi)) = bounds {
        for i in 0..x.len() {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    }
}

/// Zero out gradient components that push against an active bound.
fn projected_gradient(
    grad: &DVector<f64>,
    x: &DVector<f64>,
    bounds: &Option<(DVector<f64>, DVector<f64>)>,
) -> DVector<f64> {
    let mut pg = grad.clone();
    if let Some((lo, hi)) = bounds {
        for i in 0..x.len() {
            let eps = 1e-12 * (1.0 + x[i].abs());
            if (x[i] - lo[i]).abs() <= eps && grad[i] > 0.0 {
                pg[i] = 0.0;
            }
            if (hi[i] - x[i]).abs() <= eps && grad[i] < 0.0 {
                pg[i] = 0.0;
            }
        }
    }
    pg
}

/// Minimize the problem starting from `x0`.
pub fn minimize(problem: &dyn NlpProblem, x0: &DVector<f64>, options: &NlpOptions) -> NlpResult {
    minimize_seeded(problem, x0, options, None)
}

/// [`minimize`], but starting the multiplier loop from a previous solve's
/// dual state instead of zeros.
pub fn minimize_seeded(
    problem: &dyn NlpProblem,
    x0: &DVector<f64>,
    options: &NlpOptions,
    seed: Option<&DualState>,
) -> NlpResult {
    let n = problem.n_vars();
    assert_eq!(x0.len(), n, "starting point has wrong dimension");
    let m = problem.n_constraints();
    let me = problem.n_eq_constraints();
    let bounds = problem.bounds();
    if let Some((lo, hi)) = &bounds {
        assert_eq!(lo.len(), n);
        assert_eq!(hi.len(), n);
    }

    let probe = DVector::zeros(n);
    let analytic = problem.objective_gradient(&probe).is_some()
        && (m == 0 || problem.constraint_jacobian(&probe).is_some())
        && (me == 0 || problem.eq_jacobian(&probe).is_some());

    let mut x = x0.clone();
    project(&mut x, &bounds);

    let mut ws = Workspace {
        problem,
        lambda: DVector::zeros(m),
        sigma: DVector::zeros(me),
        rho: options.penalty_init,
        g: std::cell::RefCell::new(DVector::zeros(m)),
        h_eq: std::cell::RefCell::new(DVector::zeros(me)),
        f_evals: std::cell::Cell::new(0),
        analytic,
    };
    if let Some(seed) = seed {
        assert_eq!(seed.lambda.len(), m, "dual seed has wrong inequality count");
        assert_eq!(seed.sigma.len(), me, "dual seed has wrong equality count");
        ws.lambda.copy_from(&seed.lambda);
        ws.sigma.copy_from(&seed.sigma);
        ws.rho = seed.rho.clamp(f64::MIN_POSITIVE, options.penalty_max);
    }

    let mut merit_history = Vec::new();
    let mut outer_starts = Vec::new();
    let mut inner_total = 0;
    let mut outer_done = 0;
    let mut last_stop = InnerStop::IterCap;
    let mut prev_violation = f64::INFINITY;
    let mut feasible_obj: Option<f64> = None;
    let mut last_violation = f64::INFINITY;
    let mut stagnant = 0usize;

    let outer_count = if m + me == 0 { 1 } else { options.max_outer };
    // Constrained analytic problems get the Gauss-Newton inner loop; its
    // per-iteration model rebuild needs the Jacobians the analytic path
    // already pays for. Everything else runs quasi-Newton.
    let inner: fn(
        &Workspace<'_>,
        &mut DVector<f64>,
        &Option<(DVector<f64>, DVector<f64>)>,
        &NlpOptions,
        &mut Vec<f64>,
    ) -> (InnerStop, usize) = if analytic && m + me > 0 {
        inner_gauss_newton
    } else {
        inner_bfgs
    };
    for outer in 0..outer_count {
        outer_starts.push(merit_history.len());
        let (stop, iters) = inner(&ws, &mut x, &bounds, options, &mut merit_history);
        inner_total += iters;
        last_stop = stop;
        outer_done = outer + 1;

        if m + me == 0 {
            break;
        }
        let violation = ws.violation(&x);
        let inner_ok = stop != InnerStop::IterCap;
        if violation <= options.tol_con && inner_ok {
            // A feasible point alone is not enough: an inner stall can leave
            // objective descent on the table. Stop once the subproblem is
            // stationary or the objective has settled across outer rounds
            // (multiplier refreshes between rounds reopen descent paths).
            let f_now = ws.problem.objective(&x);
            let settled = stop == InnerStop::GradTol
                || feasible_obj
                    .is_some_and(|p| (p - f_now).abs() <= 1e3 * options.tol_obj * (1.0 + f_now.abs()));
            if settled {
                break;
            }
            feasible_obj = Some(f_now);
        }
        // With the penalty at its cap and the violation frozen, further
        // rounds just replay the same stuck subproblem.
        if ws.rho >= options.penalty_max && violation >= 0.999 * last_violation {
            stagnant += 1;
            if stagnant >= 3 {
                break;
            }
        } else {
            stagnant = 0;
        }
        last_violation = violation;
        // Safeguarded update: multipliers absorb the constraints while
        // feasibility improves; otherwise the penalty does the pushing.
        // Updating both at once lets the merit blow up after a few stalled
        // rounds. Once the penalty is capped, multiplier ascent is the only
        // mechanism left, so it always runs.
        if violation <= (0.5 * prev_violation).max(options.tol_con) || ws.rho >= options.penalty_max
        {
            if m > 0 {
                let mut g = ws.g.borrow_mut();
                ws.problem.constraints(&x, &mut g);
                for i in 0..m {
                    ws.lambda[i] = (ws.lambda[i] + ws.rho * g[i])
                        .max(0.0)
                        .min(options.multiplier_max);
                }
            }
            if me > 0 {
                let mut h = ws.h_eq.borrow_mut();
                ws.problem.eq_constraints(&x, &mut h);
                for j in 0..me {
                    ws.sigma[j] = (ws.sigma[j] + ws.rho * h[j])
                        .clamp(-options.multiplier_max, options.multiplier_max);
                }
            }
            prev_violation = violation;
        } else {
            ws.rho = (ws.rho * options.penalty_growth).min(options.penalty_max);
        }
        log::debug!(
            "outer {outer}: violation {violation:.3e}, rho {:.1e}, stop {stop:?}, f {:.6e}",
            ws.rho,
            ws.problem.objective(&x)
        );
    }

    let objective = problem.objective(&x);
    let max_violation = if m + me == 0 { 0.0 } else { ws.violation(&x) };
    let feasible = max_violation <= options.tol_con;
    let status = if feasible && last_stop != InnerStop::IterCap {
        NlpStatus::Converged
    } else if feasible {
        NlpStatus::IterationLimit
    } else if outer_done >= options.max_outer || m + me == 0 {
        NlpStatus::Infeasible
    } else {
        NlpStatus::IterationLimit
    };

    NlpResult {
        x,
        objective,
        max_violation,
        status,
        outer_iters: outer_done,
        inner_iters: inner_total,
        f_evals: ws.f_evals.get(),
        merit_history,
        outer_starts,
        dual: DualState {
            lambda: ws.lambda,
            sigma: ws.sigma,
            rho: ws.rho,
        },
    }
}

/// Creep guard shared by the inner loops: a subproblem averaging below
/// tol-level progress over this many accepted steps is done, even if no
/// single stop rule fires.
const LOOKBACK: usize = 50;

fn inner_bfgs(
    ws: &Workspace<'_>,
    x: &mut DVector<f64>,
    bounds: &Option<(DVector<f64>, DVector<f64>)>,
    options: &NlpOptions,
    merit_history: &mut Vec<f64>,
) -> (InnerStop, usize) {
    let n = x.len();
    let block_start = merit_history.len();
    let mut h = DMatrix::identity(n, n);
    let mut merit = ws.merit(x);
    merit_history.push(merit);
    let mut grad = ws.merit_gradient(x, options.fd_step);
    let mut tiny_drops = 0usize;

    for iter in 0..options.max_inner {
        let pg = projected_gradient(&grad, x, bounds);
        log::trace!("inner {iter}: merit {merit:.12e}, |pg| {:.3e}", pg.amax());
        if pg.amax() <= options.tol_grad {
            return (InnerStop::GradTol, iter);
        }

        let mut dir = -(&h * &grad);
        let mut steepest = dir.dot(&grad) >= 0.0;
        if steepest {
            // Curvature information went bad; restart from steepest descent.
            h = DMatrix::identity(n, n);
            dir = -grad.clone();
        }

        let mut accepted = armijo(ws, x, &dir, &grad, merit, bounds);
        if accepted.is_none() && !steepest {
            // The quasi-Newton direction failed outright; retry along the
            // gradient before giving up on this subproblem.
            h = DMatrix::identity(n, n);
            dir = -grad.clone();
            steepest = true;
            accepted = armijo(ws, x, &dir, &grad, merit, bounds);
        }
        let _ = steepest;
        let Some((x_new, merit_new)) = accepted else {
            return (InnerStop::LineSearchDead, iter);
        };

        let grad_new = ws.merit_gradient(&x_new, options.fd_step);
        let s = &x_new - &*x;
        let y = &grad_new - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            // Inverse BFGS update via three rank-1 corrections.
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h.ger(rho * rho * yhy + rho, &s, &s, 1.0);
            h.ger(-rho, &s, &hy, 1.0);
            h.ger(-rho, &hy, &s, 1.0);
        }

        let merit_drop = merit - merit_new;
        let step_inf = s.amax();
        *x = x_new;
        grad = grad_new;
        merit = merit_new;
        merit_history.push(merit);

        // Single slow steps are normal while curvature builds; only a run of
        // them means the subproblem is done.
        if merit_drop <= options.tol_obj * (1.0 + merit.abs()) {
            tiny_drops += 1;
            if tiny_drops >= 5 {
                return (InnerStop::MeritTol, iter + 1);
            }
        } else {
            tiny_drops = 0;
        }
        if merit_history.len() >= block_start + LOOKBACK {
            let past = merit_history[merit_history.len() - LOOKBACK];
            if past - merit <= LOOKBACK as f64 * options.tol_obj * (1.0 + merit.abs()) {
                return (InnerStop::MeritTol, iter + 1);
            }
        }
        if step_inf <= 1e-12 * (1.0 + x.amax()) {
            return (InnerStop::StepTol, iter + 1);
        }
    }
    (InnerStop::IterCap, options.max_inner)
}

/// Damped Gauss-Newton inner loop for analytic constrained problems. The
/// fused model from [`Workspace::gn_model`] is rebuilt every iteration, so
/// the direction tracks the penalty valley's curvature instead of relying on
/// secant estimates that go stale as the iterate moves.
fn inner_gauss_newton(
    ws: &Workspace<'_>,
    x: &mut DVector<f64>,
    bounds: &Option<(DVector<f64>, DVector<f64>)>,
    options: &NlpOptions,
    merit_history: &mut Vec<f64>,
) -> (InnerStop, usize) {
    let n = x.len();
    let block_start = merit_history.len();
    let mut merit = ws.merit(x);
    merit_history.push(merit);
    let mut tiny_drops = 0usize;
    // Levenberg-Marquardt damping, adapted by the gain ratio. Far from the
    // solution the Gauss-Newton step overshoots the linearization and a plain
    // backtracking line search stalls in microscopic accepted steps; raising
    // the damping instead bends the step toward scaled steepest descent with
    // a built-in step size. Retries at higher damping reuse the Jacobian and
    // cost only a Cholesky plus a merit evaluation.
    let mut lm = 1e-3f64;

    for iter in 0..options.max_inner {
        let (grad, b0) = ws.gn_model(x, bounds);
        let pg = projected_gradient(&grad, x, bounds);
        log::trace!(
            "inner {iter}: merit {merit:.12e}, |pg| {:.3e}, lm {lm:.1e} (gn)",
            pg.amax()
        );
        if pg.amax() <= options.tol_grad {
            return (InnerStop::GradTol, iter);
        }

        // Marquardt scaling: damp curved directions relative to their own
        // curvature and flat ones on the unit scale, so badly scaled columns
        // do not starve the rest of the step.
        let d = DVector::from_fn(n, |i, _| b0[(i, i)].max(1.0));
        let mut accepted = None;
        for _ in 0..40 {
            let mut b = b0.clone();
            for i in 0..n {
                b[(i, i)] += lm * d[i];
            }
            let Some(chol) = b.cholesky() else {
                lm *= 10.0;
                continue;
            };
            let dir = -chol.solve(&grad);
            let mut cand = &*x + &dir;
            project(&mut cand, bounds);
            let step = &cand - &*x;
            if step.amax() == 0.0 {
                lm *= 4.0;
                continue;
            }
            let cand_merit = ws.merit(&cand);
            if cand_merit.is_finite() && cand_merit < merit {
                // Trust the model more when it predicted the drop well.
                let pred = -(grad.dot(&step) + 0.5 * step.dot(&(&b0 * &step)));
                let gain = (merit - cand_merit) / pred.max(f64::MIN_POSITIVE);
                if gain > 0.75 {
                    lm = (lm / 3.0).max(1e-12);
                } else if gain < 0.25 {
                    lm *= 2.0;
                }
                accepted = Some((cand, cand_merit));
                break;
            }
            lm *= 4.0;
        }
        let Some((x_new, merit_new)) = accepted else {
            return (InnerStop::LineSearchDead, iter);
        };

        let merit_drop = merit - merit_new;
        let step_inf = (&x_new - &*x).amax();
        *x = x_new;
        merit = merit_new;
        merit_history.push(merit);

        if merit_drop <= options.tol_obj * (1.0 + merit.abs()) {
            tiny_drops += 1;
            if tiny_drops >= 5 {
                return (InnerStop::MeritTol, iter + 1);
            }
        } else {
            tiny_drops = 0;
        }
        if merit_history.len() >= block_start + LOOKBACK {
            let past = merit_history[merit_history.len() - LOOKBACK];
            if past - merit <= LOOKBACK as f64 * options.tol_obj * (1.0 + merit.abs()) {
                return (InnerStop::MeritTol, iter + 1);
            }
        }
        if step_inf <= 1e-12 * (1.0 + x.amax()) {
            return (InnerStop::StepTol, iter + 1);
        }
    }
    (InnerStop::IterCap, options.max_inner)
}

/// Armijo backtracking along the bound-projected path.
fn armijo(
    ws: &Workspace<'_>,
    x: &DVector<f64>,
    dir: &DVector<f64>,
    grad: &DVector<f64>,
    merit: f64,
    bounds: &Option<(DVector<f64>, DVector<f64>)>,
) -> Option<(DVector<f64>, f64)> {
    let mut t = 1.0;
    for _ in 0..60 {
        let mut cand = x + dir * t;
        project(&mut cand, bounds);
        let step = &cand - x;
        if step.amax() == 0.0 {
            t *= 0.5;
            continue;
        }
        let cand_merit = ws.merit(&cand);
        let slope = grad.dot(&step);
        if cand_merit.is_finite() && cand_merit <= merit + 1e-4 * slope.min(0.0) && cand_merit <= merit
        {
            return Some((cand, cand_merit));
        }
        t *= 0.5;
    }
    log::trace!(
        "line search dead: merit {merit:.12e}, |dir| {:.3e}, dir·grad {:.3e}",
        dir.amax(),
        dir.dot(grad)
    );
    None
}
