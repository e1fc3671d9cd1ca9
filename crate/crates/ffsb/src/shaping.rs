//! Shape-based trajectory design with finite Fourier series.
//!
//! The radius and polar angle are each expanded in a Fourier series over the
//! transfer; boundary conditions are eliminated analytically (see
//! [`crate::boundary`]), leaving a small free coefficient vector. An
//! augmented-Lagrangian solve then minimizes
//!
//! ```text
//! J = (1−ω)·FᵀF + ω·P
//! ```
//!
//! subject to the thrust-acceleration bound |T_a| ≤ ta_max at every grid
//! point. F stacks the tangential-steering residual of
//! [`crate::dynamics::eom_residual`] at `dp` evenly spaced grid points and P
//! is a time-of-flight ratio (`tof` mode, ToF becomes a decision variable)
//! or the shape's ΔV (`delta_v` mode, ToF stays fixed). With ω = 0 the
//! objective collapses to pure feasibility, J = FᵀF exactly.
//!
//! Internally the series live on the normalized time τ = t/T, which keeps
//! the trigonometric tables independent of the candidate ToF; derivative
//! tables just pick up 1/T and 1/T² factors. The boundary rows are likewise
//! τ-based, so the elimination gain matrix is ToF-independent and the offset
//! is affine in T. That affinity also absorbs rendezvous re-synchronization,
//! where the target angle itself moves linearly with ToF.

use crate::boundary::{constrained_map, BoundaryError, SeriesEndpoints};
use crate::dynamics::{DynamicsError, StateSample, TrajectoryProfile, eom_residual, guarded_sec};
use crate::fourier::{uniform_grid, BasisTables, CoefficientVector, FourierBasis, FourierError};
use crate::nlp::{minimize, NlpOptions, NlpProblem, NlpResult, NlpStatus};
use crate::scenario::{circular_rate, FinalAngleMode, ObjectiveMode, ScenarioConfig, ScenarioError};
use nalgebra::{DMatrix, DVector};
use std::cell::RefCell;

#[derive(Debug, thiserror::Error)]
pub enum ShapingError {
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("decision vector has length {got}, layout needs {expected}")]
    BadDecisionVector { expected: usize, got: usize },
    #[error("operation requires final_angle_mode = {required}, scenario uses {actual}")]
    ModeMismatch {
        required: &'static str,
        actual: String,
    },
}

/// How the flat decision vector is carved up.
///
/// Layout: radius free coefficients, then angle free coefficients, then (in
/// `tof` mode) a trailing ToF slot storing the ratio T/T₀.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecisionLayout {
    pub n_r_free: usize,
    pub n_theta_free: usize,
    pub has_tof: bool,
}

impl DecisionLayout {
    pub fn n_vars(&self) -> usize {
        self.n_r_free + self.n_theta_free + usize::from(self.has_tof)
    }
}

/// Target angle for a rendezvous transfer whose ToF moved off the guess.
///
/// The target sits on a circular orbit of radius r_f, so its angle advances
/// at n = sqrt(μ/r_f³): θ_f = θ_f,0 + n·(ToF − ToF₀).
pub fn rendezvous_theta_f(tof: f64, cfg: &ScenarioConfig) -> Result<f64, ShapingError> {
    if cfg.final_angle_mode != FinalAngleMode::RendezvousSync {
        return Err(ShapingError::ModeMismatch {
            required: "rendezvous_sync",
            actual: cfg.final_angle_mode.to_string(),
        });
    }
    let n = circular_rate(cfg.bcs.r_f, cfg.units.mu_canonical)?;
    let theta_f0 = cfg.bcs.theta_f.expect("validated: rendezvous mode has theta_f");
    Ok(theta_f0 + n * (tof - cfg.tof0))
}

/// One series with its ToF-independent elimination map pieces.
struct SeriesMap {
    tables: BasisTables,
    gain: DMatrix<f64>,
    /// offset(T) = offset_const + T · offset_rate
    offset_const: DVector<f64>,
    offset_rate: DVector<f64>,
}

impl SeriesMap {
    fn build(
        order: usize,
        taus: &[f64],
        const_ep: &SeriesEndpoints,
        rate_ep: &SeriesEndpoints,
    ) -> Result<Self, ShapingError> {
        let basis_tau = FourierBasis::new(order, 1.0)?;
        let tables = basis_tau.tables(taus);
        let map_const = constrained_map(&basis_tau, const_ep)?;
        let map_rate = constrained_map(&basis_tau, rate_ep)?;
        let offset_const = map_const.full(&DVector::zeros(map_const.n_free()));
        let offset_rate = map_rate.full(&DVector::zeros(map_rate.n_free()));
        let gain = map_const.gain().clone();
        Ok(Self {
            tables,
            gain,
            offset_const,
            offset_rate,
        })
    }

    fn full_coeffs(&self, free: &DVector<f64>, tof: f64) -> CoefficientVector {
        &self.gain * free + &self.offset_const + &self.offset_rate * tof
    }

    fn n_free(&self) -> usize {
        self.gain.ncols()
    }
}

/// The shaping optimization problem for one scenario.
pub struct ShapeProblem {
    cfg: ScenarioConfig,
    radius: SeriesMap,
    angle: SeriesMap,
    layout: DecisionLayout,
}

/// Everything one decision vector implies, evaluated in a single pass.
#[derive(Debug, Clone)]
pub struct ShapeEvaluation {
    pub tof: f64,
    /// Flyability residual at each grid point.
    pub residuals: DVector<f64>,
    /// Signed thrust acceleration at each grid point.
    pub ta: Vec<f64>,
    /// Radius at each grid point.
    pub radii: Vec<f64>,
    pub fsq: f64,
    pub delta_v: f64,
}

/// Result of one shaping solve, in canonical units.
#[derive(Debug, Clone)]
pub struct ShapeSolution {
    pub r_coeffs: CoefficientVector,
    pub theta_coeffs: CoefficientVector,
    pub tof: f64,
    pub omega: f64,
    /// Shape and thrust program sampled on the scenario grid.
    pub profile: TrajectoryProfile,
    pub objective: f64,
    /// Residual sum FᵀF over the scenario grid.
    pub fsq: f64,
    /// Shape ΔV, trapezoidal over the scenario grid.
    pub delta_v: f64,
    /// Largest |T_a| over the grid.
    pub max_ta: f64,
    pub nlp: NlpResult,
}

impl ShapeSolution {
    pub fn status(&self) -> NlpStatus {
        self.nlp.status
    }

    /// Resample the shaped trajectory and its thrust program on `n` points.
    pub fn resample(&self, n: usize) -> Result<TrajectoryProfile, ShapingError> {
        sample_profile(&self.r_coeffs, &self.theta_coeffs, self.tof, n)
    }
}

/// Trade-study row: one shaping solve at one penalty weight.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub omega: f64,
    pub fsq: f64,
    pub tof_hours: f64,
    pub delta_v: f64,
    pub status: NlpStatus,
}

/// Sweep execution strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// Solve weights in order, warm-starting each from its predecessor.
    WarmSequential,
    /// Solve every weight independently from the nominal start, in parallel.
    ColdParallel,
}

fn sample_profile(
    r_coeffs: &CoefficientVector,
    theta_coeffs: &CoefficientVector,
    tof: f64,
    n: usize,
) -> Result<TrajectoryProfile, ShapingError> {
    let order_r = (r_coeffs.len() - 1) / 2;
    let order_t = (theta_coeffs.len() - 1) / 2;
    let basis_r = FourierBasis::new(order_r, tof)?;
    let basis_t = FourierBasis::new(order_t, tof)?;
    let grid = uniform_grid(n, tof);
    let mut states = Vec::with_capacity(n);
    for &t in &grid {
        let (r, rdot, rddot) = basis_r.evaluate(r_coeffs, t)?;
        let (theta, thetadot, thetaddot) = basis_t.evaluate(theta_coeffs, t)?;
        states.push(StateSample {
            t,
            r,
            rdot,
            rddot,
            theta,
            thetadot,
            thetaddot,
        });
    }
    Ok(TrajectoryProfile::new(states, 1.0)?)
}

impl ShapeProblem {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, ShapingError> {
        let taus = uniform_grid(cfg.dp, 1.0);
        let b = &cfg.bcs;

        let radius = SeriesMap::build(
            cfg.n_r,
            &taus,
            &SeriesEndpoints {
                value_start: b.r_i,
                slope_start: 0.0,
                value_end: Some(b.r_f),
                slope_end: 0.0,
            },
            &SeriesEndpoints {
                value_start: 0.0,
                slope_start: b.rdot_i,
                value_end: Some(0.0),
                slope_end: b.rdot_f,
            },
        )?;

        // In rendezvous mode the target angle tracks the ToF change at the
        // target's circular rate, which is again affine in T.
        let (angle_value_const, angle_value_rate) = match cfg.final_angle_mode {
            FinalAngleMode::Free => (None, None),
            FinalAngleMode::Fixed => {
                let theta_f = b.theta_f.expect("validated: fixed mode has theta_f");
                (Some(theta_f), Some(0.0))
            }
            FinalAngleMode::RendezvousSync => {
                let theta_f0 = b.theta_f.expect("validated: rendezvous mode has theta_f");
                (
                    Some(theta_f0 - b.thetadot_f * cfg.tof0),
                    Some(b.thetadot_f),
                )
            }
        };
        let angle = SeriesMap::build(
            cfg.n_theta,
            &taus,
            &SeriesEndpoints {
                value_start: b.theta_i,
                slope_start: 0.0,
                value_end: angle_value_const,
                slope_end: 0.0,
            },
            &SeriesEndpoints {
                value_start: 0.0,
                slope_start: b.thetadot_i,
                value_end: angle_value_rate,
                slope_end: b.thetadot_f,
            },
        )?;

        let layout = DecisionLayout {
            n_r_free: radius.n_free(),
            n_theta_free: angle.n_free(),
            has_tof: !cfg.tof_fixed,
        };
        Ok(Self {
            cfg: cfg.clone(),
            radius,
            angle,
            layout,
        })
    }

    pub fn layout(&self) -> &DecisionLayout {
        &self.layout
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    /// Smooth starting shapes: each series begins as a half-cosine ramp
    /// between its boundary values and a unit ToF ratio.
    ///
    /// The constant coefficient is always the first free slot (elimination
    /// only consumes low harmonics), and setting it to the sum of the two
    /// endpoint values turns the boundary interpolant into
    /// `mean + half-span·cos(πτ)`, which stays between its endpoints. With
    /// the constant left at zero the interpolant instead swings far outside
    /// the transfer window and the solver starts in a hopeless basin. A free
    /// final angle aims the ramp at the sweep a quasi-circular spiral would
    /// accumulate over the nominal ToF.
    pub fn nominal_start(&self) -> DVector<f64> {
        let b = &self.cfg.bcs;
        let mut x = DVector::zeros(self.layout.n_vars());
        x[0] = b.r_i + b.r_f;
        let theta_end = match self.cfg.final_angle_mode {
            FinalAngleMode::Fixed | FinalAngleMode::RendezvousSync => {
                b.theta_f.expect("validated: mode carries theta_f")
            }
            FinalAngleMode::Free => b.theta_i + natural_sweep(&self.cfg),
        };
        x[self.layout.n_r_free] = b.theta_i + theta_end;
        if self.layout.has_tof {
            x[self.layout.n_vars() - 1] = 1.0;
        }
        x
    }

    fn check_len(&self, x: &DVector<f64>) -> Result<(), ShapingError> {
        if x.len() != self.layout.n_vars() {
            return Err(ShapingError::BadDecisionVector {
                expected: self.layout.n_vars(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Expand a decision vector into full coefficient vectors and the ToF.
    pub fn decode(
        &self,
        x: &DVector<f64>,
    ) -> Result<(CoefficientVector, CoefficientVector, f64), ShapingError> {
        self.check_len(x)?;
        let nr = self.layout.n_r_free;
        let nt = self.layout.n_theta_free;
        let tof = if self.layout.has_tof {
            x[nr + nt] * self.cfg.tof0
        } else {
            self.cfg.tof0
        };
        let r_free = DVector::from_iterator(nr, x.iter().take(nr).copied());
        let t_free = DVector::from_iterator(nt, x.iter().skip(nr).take(nt).copied());
        let r_coeffs = self.radius.full_coeffs(&r_free, tof);
        let theta_coeffs = self.angle.full_coeffs(&t_free, tof);
        Ok((r_coeffs, theta_coeffs, tof))
    }

    /// Evaluate residuals, thrust, FᵀF, and ΔV for one decision vector.
    pub fn evaluate(&self, x: &DVector<f64>) -> Result<ShapeEvaluation, ShapingError> {
        let (rc, tc, tof) = self.decode(x)?;
        let r = &self.radius.tables.value * &rc;
        let rd = &self.radius.tables.d1 * &rc / tof;
        let rdd = &self.radius.tables.d2 * &rc / (tof * tof);
        let th_d = &self.angle.tables.d1 * &tc / tof;
        let th_dd = &self.angle.tables.d2 * &tc / (tof * tof);

        let dp = self.cfg.dp;
        let mut residuals = DVector::zeros(dp);
        let mut ta = Vec::with_capacity(dp);
        let mut fsq = 0.0;
        for i in 0..dp {
            let f = eom_residual(r[i], rd[i], rdd[i], th_d[i], th_dd[i], 1.0);
            residuals[i] = f;
            fsq += f * f;
            ta.push(signed_thrust(r[i], rd[i], th_d[i], th_dd[i]));
        }
        let h = tof / (dp - 1) as f64;
        let mut delta_v = 0.0;
        for w in ta.windows(2) {
            delta_v += 0.5 * (w[0].abs() + w[1].abs()) * h;
        }
        Ok(ShapeEvaluation {
            tof,
            residuals,
            ta,
            radii: r.iter().copied().collect(),
            fsq,
            delta_v,
        })
    }

    /// Flyability residual at every grid point for a decision vector.
    pub fn residual_vector(&self, x: &DVector<f64>) -> Result<DVector<f64>, ShapingError> {
        Ok(self.evaluate(x)?.residuals)
    }

    /// Thrust-bound inequality rows, two per grid point, feasible when ≤ 0.
    pub fn thrust_constraint_values(&self, x: &DVector<f64>) -> Result<DVector<f64>, ShapingError> {
        let eval = self.evaluate(x)?;
        let mut g = DVector::zeros(2 * eval.ta.len());
        fill_thrust_rows(&eval.ta, self.cfg.ta_max, &mut g);
        Ok(g)
    }

    /// The scalar objective J for a decision vector.
    pub fn objective_value(&self, x: &DVector<f64>) -> Result<f64, ShapingError> {
        let eval = self.evaluate(x)?;
        Ok(self.objective_from(&eval))
    }

    /// Loose radius box handed to the solver. The EoM residual can vanish on
    /// shapes that plunge through the origin; this window rules those out
    /// while staying far clear of any transfer worth keeping.
    fn radius_window(&self) -> (f64, f64) {
        let b = &self.cfg.bcs;
        (0.5 * b.r_i.min(b.r_f), 2.0 * b.r_i.max(b.r_f))
    }

    fn objective_from(&self, eval: &ShapeEvaluation) -> f64 {
        let omega = self.cfg.omega;
        match self.cfg.objective_mode {
            ObjectiveMode::None => eval.fsq,
            ObjectiveMode::Tof => (1.0 - omega) * eval.fsq + omega * eval.tof / self.cfg.tof0,
            ObjectiveMode::DeltaV => (1.0 - omega) * eval.fsq + omega * eval.delta_v,
        }
    }

    /// Minimize from the nominal start.
    ///
    /// Plain fits (ω = 0) ride the residual valley first: an unconstrained
    /// pass with the thrust rows off settles into a flyable basin, and the
    /// constrained polish then only trims whatever pokes past the bound.
    /// Starting with the thrust rows live can wall the descent into a
    /// bound-riding local minimum with a far worse residual.
    ///
    /// Penalized modes (ω > 0) add a homotopy step on top: the plain fit at
    /// the nominal ToF seeds the weighted solve. Jumping straight into a
    /// strongly weighted objective from the analytic ramp start tends to
    /// land in long-ToF local minima where the penalty outruns the residual.
    pub fn solve(&self, options: &NlpOptions) -> Result<ShapeSolution, ShapingError> {
        let plain = self.cfg.omega == 0.0 || self.cfg.objective_mode == ObjectiveMode::None;
        if plain {
            let relaxed = ShapeNlp {
                problem: self,
                thrust_rows: false,
                cache: RefCell::new(None),
            };
            let pre = minimize(&relaxed, &self.nominal_start(), options);
            return self.solve_from(&pre.x, options);
        }
        let mut feas_cfg = self.cfg.clone();
        feas_cfg.objective_mode = ObjectiveMode::None;
        feas_cfg.omega = 0.0;
        feas_cfg.tof_fixed = true;
        let feas_sol = ShapeProblem::new(&feas_cfg)?.solve(options)?;
        let n_coef = self.layout.n_r_free + self.layout.n_theta_free;
        let mut x0 = DVector::zeros(self.layout.n_vars());
        x0.rows_mut(0, n_coef).copy_from(&feas_sol.nlp.x.rows(0, n_coef));
        if self.layout.has_tof {
            x0[self.layout.n_vars() - 1] = 1.0;
        }
        self.solve_from(&x0, options)
    }

    /// Minimize from a caller-supplied decision vector.
    pub fn solve_from(
        &self,
        x0: &DVector<f64>,
        options: &NlpOptions,
    ) -> Result<ShapeSolution, ShapingError> {
        self.check_len(x0)?;
        let adapter = ShapeNlp {
            problem: self,
            thrust_rows: true,
            cache: RefCell::new(None),
        };
        let mut result: NlpResult = minimize(&adapter, x0, options);
        // A fresh quasi-Newton restart from the best point often finishes the
        // job when the first pass ran out of iterations.
        for _ in 0..2 {
            if result.status == NlpStatus::Converged {
                break;
            }
            let x = result.x.clone();
            let again = minimize(&adapter, &x, options);
            result = NlpResult {
                inner_iters: result.inner_iters + again.inner_iters,
                f_evals: result.f_evals + again.f_evals,
                outer_iters: result.outer_iters + again.outer_iters,
                ..again
            };
        }

        let (r_coeffs, theta_coeffs, tof) = self.decode(&result.x)?;
        let eval = self.evaluate(&result.x)?;
        let objective = self.objective_from(&eval);
        let profile = sample_profile(&r_coeffs, &theta_coeffs, tof, self.cfg.dp)?;
        let max_ta = eval.ta.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        Ok(ShapeSolution {
            r_coeffs,
            theta_coeffs,
            tof,
            omega: self.cfg.omega,
            profile,
            objective,
            fsq: eval.fsq,
            delta_v: eval.delta_v,
            max_ta,
            nlp: result,
        })
    }
}

/// Polar angle swept by a quasi-circular spiral whose radius moves linearly
/// from r_i to r_f over the nominal ToF: ∫√(μ/r³) dt in closed form.
fn natural_sweep(cfg: &ScenarioConfig) -> f64 {
    let b = &cfg.bcs;
    let mu = cfg.units.mu_canonical;
    let dr = b.r_f - b.r_i;
    if dr.abs() < 1e-12 {
        return b.thetadot_i * cfg.tof0;
    }
    cfg.tof0 * 2.0 * mu.sqrt() / dr * (1.0 / b.r_i.sqrt() - 1.0 / b.r_f.sqrt())
}

fn fill_thrust_rows(ta: &[f64], ta_max: f64, g: &mut DVector<f64>) {
    for (i, &t) in ta.iter().enumerate() {
        g[2 * i] = t - ta_max;
        g[2 * i + 1] = -t - ta_max;
    }
}

/// Signed thrust acceleration from grid kinematics; the same transverse
/// governing-equation form as [`crate::dynamics::thrust_from_state`], made
/// total over all inputs so the optimizer can probe unphysical shapes.
fn signed_thrust(r: f64, rd: f64, thd: f64, thdd: f64) -> f64 {
    let v_theta = r * thd;
    if rd == 0.0 && v_theta == 0.0 {
        return 0.0;
    }
    let alpha = rd.atan2(v_theta);
    (2.0 * rd * thd + r * thdd) * guarded_sec(alpha.cos())
}

struct CacheEntry {
    x: DVector<f64>,
    eval: ShapeEvaluation,
}

/// NLP adapter; caches the latest evaluation so the solver's separate
/// objective and constraint calls at the same point cost one pass.
///
/// `thrust_rows` toggles the thrust-bound rows; the radius window stays on
/// unconditionally because the residual has spurious zeros through the
/// origin that unconstrained descent otherwise falls into.
struct ShapeNlp<'a> {
    problem: &'a ShapeProblem,
    thrust_rows: bool,
    cache: RefCell<Option<CacheEntry>>,
}

impl ShapeNlp<'_> {
    fn with_eval<T>(&self, x: &DVector<f64>, f: impl FnOnce(&ShapeEvaluation) -> T) -> T {
        let mut cache = self.cache.borrow_mut();
        let fresh = match cache.as_ref() {
            Some(entry) => entry.x != *x,
            None => true,
        };
        if fresh {
            let eval = self
                .problem
                .evaluate(x)
                .expect("dimension checked by the solver");
            *cache = Some(CacheEntry { x: x.clone(), eval });
        }
        f(&cache.as_ref().expect("just filled").eval)
    }
}

impl NlpProblem for ShapeNlp<'_> {
    fn n_vars(&self) -> usize {
        self.problem.layout.n_vars()
    }

    fn n_constraints(&self) -> usize {
        let dp = self.problem.cfg.dp;
        if self.thrust_rows { 4 * dp } else { 2 * dp }
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        self.with_eval(x, |eval| self.problem.objective_from(eval))
    }

    fn constraints(&self, x: &DVector<f64>, g: &mut DVector<f64>) {
        let (r_lo, r_hi) = self.problem.radius_window();
        self.with_eval(x, |eval| {
            let base = if self.thrust_rows {
                fill_thrust_rows(&eval.ta, self.problem.cfg.ta_max, g);
                2 * self.problem.cfg.dp
            } else {
                0
            };
            for (i, &r) in eval.radii.iter().enumerate() {
                g[base + 2 * i] = r_lo - r;
                g[base + 2 * i + 1] = r - r_hi;
            }
        });
    }

    fn bounds(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = self.n_vars();
        let mut lo = DVector::from_element(n, -100.0);
        let mut hi = DVector::from_element(n, 100.0);
        if self.problem.layout.has_tof {
            // ω = 0 is the reference solve every weighted run is compared
            // against; the ToF ratio is pinned at 1 so the baseline keeps the
            // nominal transfer time.
            if self.problem.cfg.omega == 0.0 {
                lo[n - 1] = 1.0;
                hi[n - 1] = 1.0;
            } else {
                lo[n - 1] = 0.1;
                hi[n - 1] = 2.0;
            }
        }
        Some((lo, hi))
    }
}

/// Run the shaping solve across a set of penalty weights.
///
/// Warm-sequential mode feeds each solve the previous weight's solution;
/// cold-parallel mode solves every weight independently from the nominal
/// start across threads. Individual non-convergence lands in the record's
/// status; the sweep itself keeps going.
pub fn sweep_with_mode(
    cfg: &ScenarioConfig,
    omegas: &[f64],
    options: &NlpOptions,
    mode: SweepMode,
) -> Result<Vec<SweepRecord>, ShapingError> {
    match mode {
        SweepMode::WarmSequential => {
            let mut records = Vec::with_capacity(omegas.len());
            let mut warm: Option<DVector<f64>> = None;
            for &omega in omegas {
                let sol = solve_one_weight(cfg, omega, warm.as_ref(), options)?;
                warm = Some(sol.nlp.x.clone());
                records.push(record_from(cfg, &sol));
            }
            Ok(records)
        }
        SweepMode::ColdParallel => {
            let workers = std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
                .min(omegas.len().max(1));
            let mut records: Vec<Option<SweepRecord>> = vec![None; omegas.len()];
            std::thread::scope(|scope| -> Result<(), ShapingError> {
                let mut handles = Vec::new();
                for (chunk_idx, chunk) in omegas.chunks(omegas.len().div_ceil(workers)).enumerate()
                {
                    let base = chunk_idx * omegas.len().div_ceil(workers);
                    handles.push(scope.spawn(move || -> Result<Vec<(usize, SweepRecord)>, ShapingError> {
                        let mut out = Vec::with_capacity(chunk.len());
                        for (j, &omega) in chunk.iter().enumerate() {
                            let sol = solve_one_weight(cfg, omega, None, options)?;
                            out.push((base + j, record_from(cfg, &sol)));
                        }
                        Ok(out)
                    }));
                }
                for h in handles {
                    for (i, rec) in h.join().expect("sweep worker panicked")? {
                        records[i] = Some(rec);
                    }
                }
                Ok(())
            })?;
            Ok(records.into_iter().map(|r| r.expect("all slots filled")).collect())
        }
    }
}

/// Warm-sequential sweep (the default strategy).
pub fn sweep(
    cfg: &ScenarioConfig,
    omegas: &[f64],
    options: &NlpOptions,
) -> Result<Vec<SweepRecord>, ShapingError> {
    sweep_with_mode(cfg, omegas, options, SweepMode::WarmSequential)
}

fn solve_one_weight(
    cfg: &ScenarioConfig,
    omega: f64,
    warm: Option<&DVector<f64>>,
    options: &NlpOptions,
) -> Result<ShapeSolution, ShapingError> {
    let mut c = cfg.clone();
    c.omega = omega;
    let problem = ShapeProblem::new(&c)?;
    let sol = match warm {
        Some(x0) => problem.solve_from(x0, options)?,
        None => problem.solve(options)?,
    };
    log::info!(
        "sweep omega={omega:.3}: fsq={:.3e} tof={:.2} TU status={}",
        sol.fsq,
        sol.tof,
        sol.status()
    );
    Ok(sol)
}

fn record_from(cfg: &ScenarioConfig, sol: &ShapeSolution) -> SweepRecord {
    SweepRecord {
        omega: sol.omega,
        fsq: sol.fsq,
        tof_hours: cfg.units.tu_to_hours(sol.tof),
        delta_v: sol.delta_v,
        status: sol.status(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario_str;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scenario(extra: &str) -> ScenarioConfig {
        let base = "\
r_i_km = 6570
theta_i_deg = 0
rdot_i_kms = 0
r_f_km = 42160
rdot_f_kms = 0
n_r = 2
n_theta = 3
dp = 40
ta_max_canonical = 0.0102
omega = 0.5
tof0_s = 120000
mu_km3s2 = 398601.2
";
        parse_scenario_str(&(base.to_string() + extra)).unwrap()
    }

    fn free_scenario() -> ScenarioConfig {
        scenario("objective_mode = tof\nfinal_angle_mode = free\n")
    }

    #[test]
    fn layout_counts() {
        let cfg = free_scenario();
        let p = ShapeProblem::new(&cfg).unwrap();
        // radius: 2·2+1 − 4 pinned; angle: 2·3+1 − 3 pinned; plus ToF slot
        assert_eq!(p.layout().n_r_free, 1);
        assert_eq!(p.layout().n_theta_free, 4);
        assert!(p.layout().has_tof);
        assert_eq!(p.layout().n_vars(), 6);
    }

    #[test]
    fn decoded_shapes_satisfy_boundary_conditions() {
        let cfg = free_scenario();
        let p = ShapeProblem::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let x = DVector::from_fn(p.layout().n_vars(), |i, _| {
                if i == p.layout().n_vars() - 1 {
                    rng.gen_range(0.3..1.8)
                } else {
                    rng.gen_range(-2.0..2.0)
                }
            });
            let (rc, tc, tof) = p.decode(&x).unwrap();
            let br = FourierBasis::new(cfg.n_r, tof).unwrap();
            let bt = FourierBasis::new(cfg.n_theta, tof).unwrap();
            let (r0, rd0, _) = br.evaluate(&rc, 0.0).unwrap();
            let (rf, rdf, _) = br.evaluate(&rc, tof).unwrap();
            let (th0, thd0, _) = bt.evaluate(&tc, 0.0).unwrap();
            let (_, thdf, _) = bt.evaluate(&tc, tof).unwrap();
            assert_relative_eq!(r0, cfg.bcs.r_i, max_relative = 1e-10);
            assert_relative_eq!(rf, cfg.bcs.r_f, max_relative = 1e-10);
            assert_relative_eq!(rd0, cfg.bcs.rdot_i, epsilon = 1e-10);
            assert_relative_eq!(rdf, cfg.bcs.rdot_f, epsilon = 1e-10);
            assert_relative_eq!(th0, cfg.bcs.theta_i, epsilon = 1e-10);
            assert_relative_eq!(thd0, cfg.bcs.thetadot_i, max_relative = 1e-10);
            assert_relative_eq!(thdf, cfg.bcs.thetadot_f, max_relative = 1e-10);
        }
    }

    #[test]
    fn rendezvous_target_angle_tracks_tof() {
        let theta_f0 = 13.0 * std::f64::consts::PI;
        let cfg = scenario(
            "objective_mode = tof\nfinal_angle_mode = rendezvous_sync\ntheta_f_deg = 2340\n",
        );
        let p = ShapeProblem::new(&cfg).unwrap();
        let mut x = p.nominal_start();
        for ratio in [0.6, 1.0, 1.5] {
            x[p.layout().n_vars() - 1] = ratio;
            let (_, tc, tof) = p.decode(&x).unwrap();
            let bt = FourierBasis::new(cfg.n_theta, tof).unwrap();
            let (thf, _, _) = bt.evaluate(&tc, tof).unwrap();
            let expected = rendezvous_theta_f(tof, &cfg).unwrap();
            assert_relative_eq!(thf, expected, max_relative = 1e-10);
            assert_relative_eq!(
                expected,
                theta_f0 + cfg.bcs.thetadot_f * (tof - cfg.tof0),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn rendezvous_theta_f_trivial_points() {
        let cfg = scenario(
            "objective_mode = tof\nfinal_angle_mode = rendezvous_sync\ntheta_f_deg = 2340\n",
        );
        let theta_f0 = cfg.bcs.theta_f.unwrap();
        assert_relative_eq!(
            rendezvous_theta_f(cfg.tof0, &cfg).unwrap(),
            theta_f0,
            max_relative = 1e-14
        );
        // affine in ToF with slope sqrt(mu/r_f³)
        let d = 7.0;
        let slope = (rendezvous_theta_f(cfg.tof0 + d, &cfg).unwrap() - theta_f0) / d;
        assert_relative_eq!(slope, cfg.bcs.thetadot_f, max_relative = 1e-10);
    }

    #[test]
    fn rendezvous_theta_f_rejects_free_mode() {
        let cfg = free_scenario();
        assert!(matches!(
            rendezvous_theta_f(cfg.tof0, &cfg),
            Err(ShapingError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn objective_collapses_to_fsq_at_zero_weight() {
        let mut cfg = free_scenario();
        cfg.omega = 0.0;
        let p = ShapeProblem::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x = DVector::from_fn(p.layout().n_vars(), |i, _| {
                if i == p.layout().n_vars() - 1 {
                    rng.gen_range(0.5..1.5)
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            });
            let eval = p.evaluate(&x).unwrap();
            assert_eq!(p.objective_value(&x).unwrap(), eval.fsq);
        }
    }

    #[test]
    fn residual_vector_has_grid_length() {
        let cfg = free_scenario();
        let p = ShapeProblem::new(&cfg).unwrap();
        let f = p.residual_vector(&p.nominal_start()).unwrap();
        assert_eq!(f.len(), cfg.dp);
    }

    #[test]
    fn thrust_rows_bracket_the_bound() {
        let cfg = free_scenario();
        let p = ShapeProblem::new(&cfg).unwrap();
        let x = p.nominal_start();
        let g = p.thrust_constraint_values(&x).unwrap();
        let eval = p.evaluate(&x).unwrap();
        assert_eq!(g.len(), 2 * cfg.dp);
        for (i, &t) in eval.ta.iter().enumerate() {
            assert_relative_eq!(g[2 * i], t - cfg.ta_max, max_relative = 1e-14);
            assert_relative_eq!(g[2 * i + 1], -t - cfg.ta_max, max_relative = 1e-14);
        }
    }

    #[test]
    fn pure_feasibility_solve_drives_residual_down() {
        // The default (2, 3) test basis has a single free radius coefficient
        // and bottoms out near 2e-2; feasibility needs the richer series.
        let mut cfg = scenario(
            "objective_mode = none\nfinal_angle_mode = free\nn_r = 3\nn_theta = 6\n",
        );
        cfg.omega = 0.0;
        let p = ShapeProblem::new(&cfg).unwrap();
        let j0 = p.objective_value(&p.nominal_start()).unwrap();
        let sol = p.solve(&NlpOptions::default()).unwrap();
        assert!(
            sol.fsq < 1e-3,
            "residual sum should drop below 1e-3, got {} (start {})",
            sol.fsq,
            j0
        );
        assert!(sol.fsq < j0 * 1e-2, "insufficient descent: {} -> {}", j0, sol.fsq);
        assert_eq!(sol.tof, cfg.tof0);
        assert!(
            sol.max_ta <= cfg.ta_max + 1e-6,
            "thrust bound violated: {} > {}",
            sol.max_ta,
            cfg.ta_max
        );
    }

    #[test]
    fn solution_is_self_consistent() {
        let mut cfg = scenario("objective_mode = none\nfinal_angle_mode = free\n");
        cfg.omega = 0.0;
        let p = ShapeProblem::new(&cfg).unwrap();
        let sol = p.solve(&NlpOptions::default()).unwrap();
        // Re-derive everything from the stored coefficients.
        let rebuilt = sample_profile(&sol.r_coeffs, &sol.theta_coeffs, sol.tof, cfg.dp).unwrap();
        assert_relative_eq!(rebuilt.delta_v(), sol.delta_v, max_relative = 1e-9);
        assert_relative_eq!(rebuilt.max_abs_ta(), sol.max_ta, max_relative = 1e-9);
        let eval = p.evaluate(&sol.nlp.x).unwrap();
        assert_relative_eq!(eval.fsq, sol.fsq, max_relative = 1e-12, epsilon = 1e-300);
        assert_eq!(sol.profile.states.len(), cfg.dp);
    }

    #[test]
    fn tof_mode_shortens_the_transfer() {
        let cfg = free_scenario();
        let p = ShapeProblem::new(&cfg).unwrap();
        let sol = p.solve(&NlpOptions::default()).unwrap();
        assert!(
            sol.tof < cfg.tof0,
            "ToF penalty should shorten below the {} TU guess, got {}",
            cfg.tof0,
            sol.tof
        );
        assert!(sol.tof >= 0.1 * cfg.tof0);
    }

    #[test]
    fn decode_rejects_wrong_length() {
        let cfg = free_scenario();
        let p = ShapeProblem::new(&cfg).unwrap();
        let x = DVector::zeros(3);
        assert!(matches!(
            p.decode(&x),
            Err(ShapingError::BadDecisionVector { expected: 6, got: 3 })
        ));
    }

    #[test]
    fn sweep_produces_one_record_per_weight() {
        let cfg = free_scenario();
        let omegas = [0.0, 0.5];
        let recs = sweep(&cfg, &omegas, &NlpOptions::default()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].omega, 0.0);
        // ω = 0 keeps the nominal ToF; ω = 0.5 shortens it
        assert!(recs[1].tof_hours <= recs[0].tof_hours + 1e-9);
        for r in &recs {
            assert!(r.fsq.is_finite() && r.delta_v.is_finite());
        }
    }

    #[test]
    fn cold_parallel_sweep_matches_weight_list() {
        let cfg = free_scenario();
        let omegas = [0.2, 0.8];
        let recs =
            sweep_with_mode(&cfg, &omegas, &NlpOptions::default(), SweepMode::ColdParallel)
                .unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].omega, 0.2);
        assert_eq!(recs[1].omega, 0.8);
    }
}
