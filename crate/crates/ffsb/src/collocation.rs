//! Minimum-time optimal control by Hermite–Simpson direct collocation.
//!
//! The planar transfer is transcribed on N uniform segments of normalized
//! time τ ∈ [0, 1]. Decision variables are the node states (r, θ, ṙ, θ̇),
//! one signed thrust acceleration T_a per node, and the time of flight (as a
//! ratio against the scenario's nominal ToF). The steering angle is not a
//! separate control: it is slaved to the state's flight-path direction,
//! tan α = ṙ/(rθ̇), matching the shaping module's thrust convention, so T_a
//! points along (or against) the velocity.
//!
//! Compressed Hermite–Simpson defects
//!
//! ```text
//! x_c = (x_k + x_{k+1})/2 + h/8 (f_k − f_{k+1})
//! 0   = x_{k+1} − x_k − h/6 (f_k + 4 f_c + f_{k+1})
//! ```
//!
//! enter the NLP core as equality rows, driven to zero by its multiplier
//! loop. States ride inside the transfer's physical box (r between the
//! terminal radii, monotone outward motion), controls inside ±ta_max, and
//! the boundary states are pinned through equal lower/upper bounds. In
//! rendezvous mode the final angle is tied to the target's drift,
//! θ(ToF) = θ_f,0 + √(μ/r_f³)·(ToF − ToF₀), as one more equality row.

use crate::dynamics::ThrustSample;
use crate::nlp::{minimize, minimize_seeded, DualState, NlpOptions, NlpProblem, NlpResult, NlpStatus};
use crate::scenario::{circular_rate, FinalAngleMode, ObjectiveMode, ScenarioConfig, ScenarioError};
use crate::shaping::{ShapeProblem, ShapeSolution};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, thiserror::Error)]
pub enum CollocationError {
    #[error("minimum-time transcription needs at least 20 segments, got {0}")]
    TooFewSegments(usize),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Discrete trajectory produced by the transcription, canonical units.
#[derive(Debug, Clone)]
pub struct TranscriptionGrid {
    pub n_segments: usize,
    /// Node locations on normalized time τ ∈ [0, 1].
    pub taus: Vec<f64>,
    /// One `[r, θ, ṙ, θ̇]` row per node.
    pub states: Vec<[f64; 4]>,
    /// Signed thrust acceleration per node.
    pub controls: Vec<f64>,
    /// Time of flight, TU.
    pub tof: f64,
    pub ta_max: f64,
}

/// Converged (or best-effort) minimum-time solution.
#[derive(Debug, Clone)]
pub struct OptimalSolution {
    pub grid: TranscriptionGrid,
    pub tof_hours: f64,
    /// Thrust program at the nodes, physical time.
    pub thrust: Vec<ThrustSample>,
    /// Largest |defect| component over all segments.
    pub defect_norm: f64,
    pub status: NlpStatus,
    pub nlp: NlpResult,
}

/// Node-count statistics over the converged control program.
pub mod stats {
    use super::OptimalSolution;

    /// Fraction of nodes that are saturated or off (|T_a| ≥ 0.99·ta_max or
    /// ≤ 0.01·ta_max). Bang-bang and bang-off-bang programs score near 1.
    pub fn saturation_fraction(sol: &OptimalSolution) -> f64 {
        let ta_max = sol.grid.ta_max;
        let n = sol.grid.controls.len();
        let hits = sol
            .grid
            .controls
            .iter()
            .filter(|&&ta| ta.abs() >= 0.99 * ta_max || ta.abs() <= 0.01 * ta_max)
            .count();
        hits as f64 / n as f64
    }

    /// Fraction of nodes with the engine effectively off (|T_a| ≤ 0.01·ta_max).
    pub fn coast_fraction(sol: &OptimalSolution) -> f64 {
        let ta_max = sol.grid.ta_max;
        let n = sol.grid.controls.len();
        let hits = sol
            .grid
            .controls
            .iter()
            .filter(|&&ta| ta.abs() <= 0.01 * ta_max)
            .count();
        hits as f64 / n as f64
    }
}

/// Polar two-body dynamics with velocity-aligned signed thrust.
fn rhs(x: &[f64; 4], ta: f64, mu: f64) -> [f64; 4] {
    let [r, _theta, rdot, thetadot] = *x;
    let v_theta = r * thetadot;
    let v = rdot.hypot(v_theta);
    let (sin_a, cos_a) = if v == 0.0 { (0.0, 1.0) } else { (rdot / v, v_theta / v) };
    let rddot = r * thetadot * thetadot - mu / (r * r) + ta * sin_a;
    let thetaddot = (ta * cos_a - 2.0 * rdot * thetadot) / r;
    [rdot, thetadot, rddot, thetaddot]
}

fn hermite_simpson_defect(
    xk: &[f64; 4],
    xk1: &[f64; 4],
    fk: &[f64; 4],
    fk1: &[f64; 4],
    uk: f64,
    uk1: f64,
    h: f64,
    mu: f64,
) -> [f64; 4] {
    let mut xc = [0.0; 4];
    for i in 0..4 {
        xc[i] = 0.5 * (xk[i] + xk1[i]) + h / 8.0 * (fk[i] - fk1[i]);
    }
    let fc = rhs(&xc, 0.5 * (uk + uk1), mu);
    let mut d = [0.0; 4];
    for i in 0..4 {
        d[i] = xk1[i] - xk[i] - h / 6.0 * (fk[i] + 4.0 * fc[i] + fk1[i]);
    }
    d
}

#[derive(Clone)]
struct RendezvousRow {
    theta_f0: f64,
    rate: f64,
}

/// NLP adapter for the transcription.
///
/// Decision vector: `[x_0 … x_N, u_0 … u_N, tof_ratio]` with x_k the 4-state
/// and u_k the signed thrust at node k.
#[derive(Clone)]
struct MinTimeNlp {
    mu: f64,
    n_seg: usize,
    tof_guess: f64,
    ta_max: f64,
    lo: DVector<f64>,
    hi: DVector<f64>,
    rendezvous: Option<RendezvousRow>,
}

impl MinTimeNlp {
    fn n_nodes(&self) -> usize {
        self.n_seg + 1
    }

    fn ctrl_base(&self) -> usize {
        4 * self.n_nodes()
    }

    fn ratio_index(&self) -> usize {
        self.ctrl_base() + self.n_nodes()
    }

    fn node_state(&self, z: &DVector<f64>, k: usize) -> [f64; 4] {
        [z[4 * k], z[4 * k + 1], z[4 * k + 2], z[4 * k + 3]]
    }

    fn step_len(&self, z: &DVector<f64>) -> f64 {
        z[self.ratio_index()] * self.tof_guess / self.n_seg as f64
    }

    fn segment_defect(&self, z: &DVector<f64>, k: usize) -> [f64; 4] {
        let h = self.step_len(z);
        let xk = self.node_state(z, k);
        let xk1 = self.node_state(z, k + 1);
        let uk = z[self.ctrl_base() + k];
        let uk1 = z[self.ctrl_base() + k + 1];
        let fk = rhs(&xk, uk, self.mu);
        let fk1 = rhs(&xk1, uk1, self.mu);
        hermite_simpson_defect(&xk, &xk1, &fk, &fk1, uk, uk1, h, self.mu)
    }

    /// Raw defects for every segment, reusing node dynamics evaluations.
    fn all_defects(&self, z: &DVector<f64>) -> Vec<[f64; 4]> {
        let h = self.step_len(z);
        let states: Vec<[f64; 4]> = (0..self.n_nodes()).map(|k| self.node_state(z, k)).collect();
        let fs: Vec<[f64; 4]> = (0..self.n_nodes())
            .map(|k| rhs(&states[k], z[self.ctrl_base() + k], self.mu))
            .collect();
        (0..self.n_seg)
            .map(|k| {
                hermite_simpson_defect(
                    &states[k],
                    &states[k + 1],
                    &fs[k],
                    &fs[k + 1],
                    z[self.ctrl_base() + k],
                    z[self.ctrl_base() + k + 1],
                    h,
                    self.mu,
                )
            })
            .collect()
    }

    fn rendezvous_gap(&self, z: &DVector<f64>) -> Option<f64> {
        self.rendezvous.as_ref().map(|row| {
            let theta_n = z[4 * self.n_seg + 1];
            let tof = z[self.ratio_index()] * self.tof_guess;
            theta_n - (row.theta_f0 + row.rate * (tof - self.tof_guess))
        })
    }

    /// Segments whose defect depends on decision variable `j`.
    fn touched_segments(&self, j: usize) -> std::ops::Range<usize> {
        let k = if j < self.ctrl_base() {
            j / 4
        } else {
            j - self.ctrl_base()
        };
        k.saturating_sub(1)..(k + 1).min(self.n_seg)
    }
}

impl NlpProblem for MinTimeNlp {
    fn n_vars(&self) -> usize {
        5 * self.n_nodes() + 1
    }

    fn n_eq_constraints(&self) -> usize {
        4 * self.n_seg + usize::from(self.rendezvous.is_some())
    }

    fn objective(&self, z: &DVector<f64>) -> f64 {
        z[self.ratio_index()]
    }

    fn objective_gradient(&self, _z: &DVector<f64>) -> Option<DVector<f64>> {
        let mut g = DVector::zeros(self.n_vars());
        g[self.ratio_index()] = 1.0;
        Some(g)
    }

    fn eq_constraints(&self, z: &DVector<f64>, h: &mut DVector<f64>) {
        for (k, d) in self.all_defects(z).iter().enumerate() {
            for i in 0..4 {
                h[4 * k + i] = d[i];
            }
        }
        if let Some(c) = self.rendezvous_gap(z) {
            h[4 * self.n_seg] = c;
        }
    }

    fn bounds(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        Some((self.lo.clone(), self.hi.clone()))
    }

    /// Central-difference Jacobian exploiting segment locality: a node's
    /// state or control only enters its two adjacent segments, so each
    /// column costs a handful of dynamics evaluations.
    fn eq_jacobian(&self, z: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n = self.n_vars();
        let m = self.n_eq_constraints();
        let mut jac = DMatrix::zeros(m, n);
        let mut zp = z.clone();
        for j in 0..n {
            let scale = if j >= self.ctrl_base() && j < self.ratio_index() {
                self.ta_max
            } else {
                1.0
            };
            let step = 1e-6 * scale.max(z[j].abs());
            let zj = z[j];
            let segments = if j == self.ratio_index() {
                0..self.n_seg
            } else {
                self.touched_segments(j)
            };
            for k in segments {
                zp[j] = zj + step;
                let dp = self.segment_defect(&zp, k);
                zp[j] = zj - step;
                let dm = self.segment_defect(&zp, k);
                zp[j] = zj;
                for i in 0..4 {
                    jac[(4 * k + i, j)] = (dp[i] - dm[i]) / (2.0 * step);
                }
            }
        }
        if let Some(row) = &self.rendezvous {
            let r0 = 4 * self.n_seg;
            jac[(r0, 4 * self.n_seg + 1)] = 1.0;
            jac[(r0, self.ratio_index())] = -row.rate * self.tof_guess;
        }
        Some(jac)
    }
}

/// Final-angle guess when the scenario leaves it free: six revolutions is
/// a workable spiral count for many-revolution planar raising problems.
const FREE_THETA_F_GUESS: f64 = 12.0 * std::f64::consts::PI;

fn build_nlp(cfg: &ScenarioConfig, n_segments: usize) -> Result<MinTimeNlp, CollocationError> {
    if n_segments < 20 {
        return Err(CollocationError::TooFewSegments(n_segments));
    }
    let b = &cfg.bcs;
    let (theta_f_guess, theta_hi, thetadot_hi) = match cfg.final_angle_mode {
        FinalAngleMode::Free => (FREE_THETA_F_GUESS, FREE_THETA_F_GUESS, 1.0),
        FinalAngleMode::Fixed | FinalAngleMode::RendezvousSync => {
            let theta_f = b.theta_f.expect("validated: mode carries theta_f");
            (theta_f, theta_f, 1.2)
        }
    };
    let rendezvous = match cfg.final_angle_mode {
        FinalAngleMode::RendezvousSync => Some(RendezvousRow {
            theta_f0: b.theta_f.expect("validated"),
            rate: circular_rate(b.r_f, cfg.units.mu_canonical)?,
        }),
        _ => None,
    };

    let n_nodes = n_segments + 1;
    let n_vars = 5 * n_nodes + 1;
    let ctrl_base = 4 * n_nodes;
    let ratio_index = n_vars - 1;
    let (r_lo, r_hi) = (b.r_i.min(b.r_f), b.r_i.max(b.r_f));
    let mut lo = DVector::zeros(n_vars);
    let mut hi = DVector::zeros(n_vars);
    for k in 0..n_nodes {
        lo[4 * k] = r_lo;
        hi[4 * k] = r_hi;
        lo[4 * k + 1] = 0.0;
        hi[4 * k + 1] = theta_hi;
        lo[4 * k + 2] = 0.0;
        hi[4 * k + 2] = 1.0;
        lo[4 * k + 3] = 0.0;
        hi[4 * k + 3] = thetadot_hi;
        lo[ctrl_base + k] = -cfg.ta_max;
        hi[ctrl_base + k] = cfg.ta_max;
    }
    // Terminal states enter as equal-bound pins rather than constraint rows.
    let pin = |lo: &mut DVector<f64>, hi: &mut DVector<f64>, idx: usize, v: f64| {
        lo[idx] = v;
        hi[idx] = v;
    };
    pin(&mut lo, &mut hi, 0, b.r_i);
    pin(&mut lo, &mut hi, 1, b.theta_i);
    pin(&mut lo, &mut hi, 2, b.rdot_i);
    pin(&mut lo, &mut hi, 3, b.thetadot_i);
    let last = 4 * n_segments;
    pin(&mut lo, &mut hi, last, b.r_f);
    pin(&mut lo, &mut hi, last + 2, b.rdot_f);
    pin(&mut lo, &mut hi, last + 3, b.thetadot_f);
    if cfg.final_angle_mode == FinalAngleMode::Fixed {
        pin(&mut lo, &mut hi, last + 1, theta_f_guess);
    }
    lo[ratio_index] = 0.2;
    hi[ratio_index] = 2.0;

    Ok(MinTimeNlp {
        mu: cfg.units.mu_canonical,
        n_seg: n_segments,
        tof_guess: cfg.tof0,
        ta_max: cfg.ta_max,
        lo,
        hi,
        rendezvous,
    })
}

fn linear_guess(nlp: &MinTimeNlp, cfg: &ScenarioConfig, theta_f_guess: f64) -> DVector<f64> {
    let b = &cfg.bcs;
    let n_nodes = nlp.n_nodes();
    let mut z = DVector::zeros(nlp.n_vars());
    for k in 0..n_nodes {
        let s = k as f64 / nlp.n_seg as f64;
        z[4 * k] = b.r_i + s * (b.r_f - b.r_i);
        z[4 * k + 1] = b.theta_i + s * (theta_f_guess - b.theta_i);
        z[4 * k + 2] = b.rdot_i + s * (b.rdot_f - b.rdot_i);
        z[4 * k + 3] = b.thetadot_i + s * (b.thetadot_f - b.thetadot_i);
        // Full throttle: minimum-time programs live at the thrust bound.
        z[nlp.ctrl_base() + k] = cfg.ta_max;
    }
    z[nlp.ratio_index()] = 1.0;
    z
}

/// Warm start from a descending-ToF scan of plain shape fits. Each step pins
/// the ToF a notch shorter and refits the shape from the previous
/// coefficients; the scan keeps the shortest ToF whose fit still has a tiny
/// residual and in-bound thrust, which is a near-minimum-time trajectory the
/// transcription only has to polish. A weighted single solve is no
/// substitute: with a heavy ToF weight the optimizer happily walks off the
/// dynamics manifold, trading residual for time. Falls back to `None` when
/// not even the nominal ToF can be fit.
fn shaping_guess(nlp: &MinTimeNlp, cfg: &ScenarioConfig) -> Option<DVector<f64>> {
    let mut shape_cfg = cfg.clone();
    shape_cfg.objective_mode = ObjectiveMode::None;
    shape_cfg.omega = 0.0;
    shape_cfg.tof_fixed = true;
    let options = NlpOptions::default();
    let ri = nlp.ratio_index();
    let mut best: Option<ShapeSolution> = None;
    let mut prev_x: Option<DVector<f64>> = None;
    let mut ratio = 1.0f64;
    loop {
        shape_cfg.tof0 = cfg.tof0 * ratio;
        let problem = ShapeProblem::new(&shape_cfg).ok()?;
        let sol = match &prev_x {
            Some(x) => problem.solve_from(x, &options),
            None => problem.solve(&options),
        };
        let fits = sol
            .as_ref()
            .is_ok_and(|s| s.fsq <= 1e-4 && s.max_ta <= nlp.ta_max * (1.0 + 1e-6));
        if !fits {
            break;
        }
        let sol = sol.expect("checked fits");
        prev_x = Some(sol.nlp.x.clone());
        best = Some(sol);
        if ratio <= nlp.lo[ri] {
            break;
        }
        ratio = (ratio * 0.93).max(nlp.lo[ri]);
    }
    let sol = best?;
    let profile = sol.resample(nlp.n_nodes()).ok()?;
    let mut z = DVector::zeros(nlp.n_vars());
    for (k, s) in profile.states.iter().enumerate() {
        z[4 * k] = s.r;
        z[4 * k + 1] = s.theta;
        z[4 * k + 2] = s.rdot;
        z[4 * k + 3] = s.thetadot;
        z[nlp.ctrl_base() + k] = profile.thrust[k].ta.clamp(-nlp.ta_max, nlp.ta_max);
    }
    z[ri] = (sol.tof / cfg.tof0).clamp(nlp.lo[ri], nlp.hi[ri]);
    log::debug!(
        "shape warm start: tof {:.2} TU, fsq {:.2e}, max_ta {:.3e}",
        sol.tof,
        sol.fsq,
        sol.max_ta
    );
    Some(z)
}

fn collocation_options() -> NlpOptions {
    NlpOptions {
        tol_con: 1e-7,
        tol_obj: 1e-12,
        tol_grad: 1e-9,
        max_outer: 40,
        // Each damped Gauss-Newton iteration pays a full Jacobian, so the
        // inner budget is small; a subproblem that has not settled in two
        // hundred of them needs a multiplier update, not more of the same.
        max_inner: 200,
        // High initial penalty keeps the first subproblem's minimizer near
        // the warm-started manifold; a soft start lets the ToF objective
        // drag the iterate far into infeasible territory it cannot leave.
        // The cap stays moderate because the last digits of feasibility come
        // from multiplier ascent, not penalty brute force, and the
        // finite-difference Jacobian cannot steer a 1e12-weighted valley.
        penalty_init: 1e4,
        penalty_max: 1e8,
        ..NlpOptions::default()
    }
}

/// Solve the minimum-time transfer for a scenario.
///
/// Transcribes on `n_segments` uniform Hermite–Simpson segments (at least
/// 20; 80 is a good default) and minimizes the time of flight. The returned
/// status is honest: a grid that failed to meet the defect tolerance comes
/// back as `Infeasible` with its defect norm, not as an error.
pub fn solve_min_time(
    cfg: &ScenarioConfig,
    n_segments: usize,
) -> Result<OptimalSolution, CollocationError> {
    let nlp = build_nlp(cfg, n_segments)?;
    let theta_f_guess = nlp
        .rendezvous
        .as_ref()
        .map(|r| r.theta_f0)
        .unwrap_or(match cfg.final_angle_mode {
            FinalAngleMode::Fixed => cfg.bcs.theta_f.expect("validated"),
            _ => FREE_THETA_F_GUESS,
        });
    let z0 = shaping_guess(&nlp, cfg).unwrap_or_else(|| linear_guess(&nlp, cfg, theta_f_guess));
    let options = collocation_options();

    // ToF continuation. A transfer spanning several revolutions puts the
    // minimum time far from any warm start the shape family can reach, and
    // the walk there crosses too much manifold curvature for one local
    // solve. Pinning the ratio turns each step into a pure feasibility
    // problem; the pin then walks down in 5% steps, each solve seeding the
    // next with both its point and its multipliers, until the grid runs out
    // of thrust authority. Walk steps only have to stay inside the basin,
    // so they run under a looser feasibility bar and a smaller outer budget
    // than the final polish, with a half-size retry before the walk gives
    // up: near the floor a full step can overshoot feasibility while half a
    // step does not.
    let walk_options = NlpOptions {
        tol_con: 1e-5,
        max_outer: 12,
        ..options
    };
    let ri = nlp.ratio_index();
    let mut pinned = nlp.clone();
    let mut best = z0.clone();
    let mut ratio = z0[ri];
    let mut dual: Option<DualState> = None;
    let mut step = 0.95f64;
    let (mut inner_acc, mut outer_acc, mut feval_acc) = (0usize, 0usize, 0usize);
    loop {
        pinned.lo[ri] = ratio;
        pinned.hi[ri] = ratio;
        let mut z = best.clone();
        z[ri] = ratio;
        let res = minimize_seeded(&pinned, &z, &walk_options, dual.as_ref());
        inner_acc += res.inner_iters;
        outer_acc += res.outer_iters;
        feval_acc += res.f_evals;
        let feasible = res.max_violation <= walk_options.tol_con;
        log::debug!(
            "tof continuation: ratio {ratio:.4}, violation {:.2e}, {}",
            res.max_violation,
            if feasible { "kept" } else { "rejected" },
        );
        if feasible {
            best = res.x;
            let mut next = res.dual;
            // Re-entering at the cap would start the next step stiff.
            next.rho = next.rho.min(1e6);
            dual = Some(next);
            if ratio <= nlp.lo[ri] {
                break;
            }
            ratio = (ratio * step).max(nlp.lo[ri]);
        } else if step < 0.99 {
            step = (1.0 + step) / 2.0;
            ratio = (best[ri] * step).max(nlp.lo[ri]);
        } else {
            break;
        }
    }

    let mut result = minimize_seeded(&nlp, &best, &options, dual.as_ref());
    if result.status != NlpStatus::Converged {
        // One restart from the best point; multipliers restart too, which
        // often unsticks a stalled penalty loop.
        let x = result.x.clone();
        let again = minimize(&nlp, &x, &options);
        result = NlpResult {
            inner_iters: result.inner_iters + again.inner_iters,
            f_evals: result.f_evals + again.f_evals,
            outer_iters: result.outer_iters + again.outer_iters,
            ..again
        };
    }
    result.inner_iters += inner_acc;
    result.outer_iters += outer_acc;
    result.f_evals += feval_acc;

    let z = &result.x;
    let n_nodes = nlp.n_nodes();
    let tof = z[nlp.ratio_index()] * cfg.tof0;
    let taus: Vec<f64> = (0..n_nodes).map(|k| k as f64 / n_segments as f64).collect();
    let states: Vec<[f64; 4]> = (0..n_nodes).map(|k| nlp.node_state(z, k)).collect();
    let controls: Vec<f64> = (0..n_nodes).map(|k| z[nlp.ctrl_base() + k]).collect();
    let defect_norm = nlp
        .all_defects(z)
        .iter()
        .flat_map(|d| d.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    let thrust: Vec<ThrustSample> = (0..n_nodes)
        .map(|k| {
            let [r, _, rdot, thetadot] = states[k];
            ThrustSample {
                t: taus[k] * tof,
                ta: controls[k],
                alpha: rdot.atan2(r * thetadot),
            }
        })
        .collect();
    log::info!(
        "min-time solve: tof={:.2} TU ({:.2} h), defect={:.2e}, status={}",
        tof,
        cfg.units.tu_to_hours(tof),
        defect_norm,
        result.status
    );

    Ok(OptimalSolution {
        grid: TranscriptionGrid {
            n_segments,
            taus,
            states,
            controls,
            tof,
            ta_max: cfg.ta_max,
        },
        tof_hours: cfg.units.tu_to_hours(tof),
        thrust,
        defect_norm,
        status: result.status,
        nlp: result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario_str;
    use approx::assert_relative_eq;

    fn orbit_raising() -> ScenarioConfig {
        parse_scenario_str(
            "\
r_i_km = 6570
theta_i_deg = 0
rdot_i_kms = 0
r_f_km = 42160
rdot_f_kms = 0
n_r = 3
n_theta = 4
dp = 160
ta_max_canonical = 0.0102
omega = 0.01
tof0_s = 120000
mu_km3s2 = 398601.2
objective_mode = tof
final_angle_mode = free
",
        )
        .unwrap()
    }

    #[test]
    fn rejects_too_few_segments() {
        let cfg = orbit_raising();
        assert!(matches!(
            solve_min_time(&cfg, 10),
            Err(CollocationError::TooFewSegments(10))
        ));
    }

    #[test]
    fn ballistic_circular_segment_has_zero_defect() {
        // A circular orbit sampled at matching nodes is an exact solution of
        // the discrete equations with zero control.
        let mu = 1.0;
        let r = 1.7;
        let thetadot = circular_rate(r, mu).unwrap();
        let h = 0.9;
        let xk = [r, 0.3, 0.0, thetadot];
        let xk1 = [r, 0.3 + h * thetadot, 0.0, thetadot];
        let fk = rhs(&xk, 0.0, mu);
        let fk1 = rhs(&xk1, 0.0, mu);
        let d = hermite_simpson_defect(&xk, &xk1, &fk, &fk1, 0.0, 0.0, h, mu);
        for v in d {
            assert!(v.abs() < 1e-14, "defect {v}");
        }
    }

    #[test]
    fn defect_matches_integrated_dynamics_on_fine_segment() {
        // For a short segment with smooth control, the Hermite-Simpson
        // defect of the true trajectory endpoint is O(h^5).
        let mu = 1.0;
        let x0 = [1.2, 0.1, 0.05, 0.7];
        let u = 0.008;
        let h = 0.02;
        // RK4 with tiny substeps stands in for the exact flow.
        let mut x = x0;
        let steps = 200;
        let dt = h / steps as f64;
        for _ in 0..steps {
            let k1 = rhs(&x, u, mu);
            let mut x2 = x;
            for i in 0..4 {
                x2[i] += 0.5 * dt * k1[i];
            }
            let k2 = rhs(&x2, u, mu);
            let mut x3 = x;
            for i in 0..4 {
                x3[i] += 0.5 * dt * k2[i];
            }
            let k3 = rhs(&x3, u, mu);
            let mut x4 = x;
            for i in 0..4 {
                x4[i] += dt * k3[i];
            }
            let k4 = rhs(&x4, u, mu);
            for i in 0..4 {
                x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        let fk = rhs(&x0, u, mu);
        let fk1 = rhs(&x, u, mu);
        let d = hermite_simpson_defect(&x0, &x, &fk, &fk1, u, u, h, mu);
        for v in d {
            assert!(v.abs() < 1e-10, "defect {v} too large for h = {h}");
        }
    }

    #[test]
    fn jacobian_matches_dense_differences() {
        let cfg = orbit_raising();
        let nlp = build_nlp(&cfg, 20).unwrap();
        let mut z = linear_guess(&nlp, &cfg, FREE_THETA_F_GUESS);
        // Move off the straight-line guess so nothing is special-cased.
        for i in 0..z.len() {
            z[i] += 1e-3 * ((i * 2654435761) % 97) as f64 / 97.0;
        }
        let jac = nlp.eq_jacobian(&z).unwrap();
        let m = nlp.n_eq_constraints();
        let mut g_plus = DVector::zeros(m);
        let mut g_minus = DVector::zeros(m);
        // Spot-check a spread of columns against full-vector differences.
        for &j in &[0usize, 5, 41, nlp.ctrl_base() + 3, nlp.ratio_index()] {
            let step = 1e-6 * z[j].abs().max(if j >= nlp.ctrl_base() && j < nlp.ratio_index() {
                nlp.ta_max
            } else {
                1.0
            });
            let zj = z[j];
            z[j] = zj + step;
            nlp.eq_constraints(&z, &mut g_plus);
            z[j] = zj - step;
            nlp.eq_constraints(&z, &mut g_minus);
            z[j] = zj;
            for i in 0..m {
                let dense = (g_plus[i] - g_minus[i]) / (2.0 * step);
                let sparse = jac[(i, j)];
                assert!(
                    (dense - sparse).abs() <= 1e-6 * (1.0 + dense.abs()),
                    "col {j} row {i}: dense {dense} vs sparse {sparse}"
                );
            }
        }
    }

    #[test]
    fn saturation_stats_on_synthetic_controls() {
        let ta_max = 0.01;
        let make = |controls: Vec<f64>| {
            let n = controls.len();
            OptimalSolution {
                grid: TranscriptionGrid {
                    n_segments: n - 1,
                    taus: (0..n).map(|k| k as f64 / (n - 1) as f64).collect(),
                    states: vec![[1.0, 0.0, 0.0, 1.0]; n],
                    controls,
                    tof: 1.0,
                    ta_max,
                },
                tof_hours: 1.0,
                thrust: Vec::new(),
                defect_norm: 0.0,
                status: NlpStatus::Converged,
                nlp: NlpResult {
                    x: DVector::zeros(1),
                    objective: 0.0,
                    max_violation: 0.0,
                    status: NlpStatus::Converged,
                    outer_iters: 0,
                    inner_iters: 0,
                    f_evals: 0,
                    merit_history: Vec::new(),
                    outer_starts: Vec::new(),
                    dual: crate::nlp::DualState {
                        lambda: DVector::zeros(0),
                        sigma: DVector::zeros(0),
                        rho: 1.0,
                    },
                },
            }
        };
        // All off: both fractions are 1.
        let off = make(vec![0.0; 5]);
        assert_eq!(stats::saturation_fraction(&off), 1.0);
        assert_eq!(stats::coast_fraction(&off), 1.0);
        // Half saturated, half mid-range.
        let mixed = make(vec![ta_max, -ta_max, 0.5 * ta_max, 0.4 * ta_max]);
        assert_relative_eq!(stats::saturation_fraction(&mixed), 0.5);
        assert_eq!(stats::coast_fraction(&mixed), 0.0);
    }

    #[test]
    fn degenerate_transfer_coasts_at_the_tof_floor() {
        // Start and target orbits identical: the optimum is to do nothing
        // and let the objective push the ToF to its lower bound.
        let cfg = parse_scenario_str(
            "\
r_i_km = 6570
theta_i_deg = 0
rdot_i_kms = 0
r_f_km = 6570
rdot_f_kms = 0
n_r = 3
n_theta = 4
dp = 160
ta_max_canonical = 0.0102
omega = 0.01
tof0_s = 120000
mu_km3s2 = 398601.2
objective_mode = tof
final_angle_mode = free
",
        )
        .unwrap();
        let sol = solve_min_time(&cfg, 20).unwrap();
        assert_eq!(sol.status, NlpStatus::Converged);
        assert!(sol.defect_norm <= 1e-6, "defect {}", sol.defect_norm);
        assert_relative_eq!(sol.grid.tof, 0.2 * cfg.tof0, max_relative = 1e-6);
        let max_ta = sol.grid.controls.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(max_ta <= 1e-4, "residual thrust {max_ta}");
    }

    #[test]
    fn orbit_raising_tof_is_grid_independent() {
        let cfg = orbit_raising();
        let coarse = solve_min_time(&cfg, 20).unwrap();
        let fine = solve_min_time(&cfg, 40).unwrap();
        assert!(
            coarse.defect_norm <= 1e-6 && fine.defect_norm <= 1e-6,
            "defects {} / {}",
            coarse.defect_norm,
            fine.defect_norm
        );
        // Boundary rows are pinned to the scenario BCs.
        let s0 = fine.grid.states[0];
        let sn = fine.grid.states[fine.grid.n_segments];
        assert_relative_eq!(s0[0], cfg.bcs.r_i, epsilon = 1e-8);
        assert_relative_eq!(s0[3], cfg.bcs.thetadot_i, epsilon = 1e-8);
        assert_relative_eq!(sn[0], cfg.bcs.r_f, epsilon = 1e-8);
        assert_relative_eq!(sn[3], cfg.bcs.thetadot_f, epsilon = 1e-8);
        let rel = (coarse.grid.tof - fine.grid.tof).abs() / fine.grid.tof;
        assert!(
            rel < 0.01,
            "ToF grid dependence {rel:.4}: {} vs {} TU",
            coarse.grid.tof,
            fine.grid.tof
        );
    }
}
