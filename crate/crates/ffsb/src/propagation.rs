//! Open-loop feasibility check by numerical propagation.
//!
//! The shaping solver only drives the flyability residual toward zero; this
//! module quantifies what remains. It tabulates the thrust program recovered
//! from a shaped solution, replays it open loop (both magnitude and steering
//! angle are functions of time, not of the propagated state) through the
//! full nonlinear dynamics with an adaptive Dormand–Prince 5(4) integrator,
//! and reports how far the propagated trajectory drifts from the shape.
//!
//! The integrator uses the standard DOPRI5 tableau with FSAL, a proportional
//! plus integral step-size controller, and clamps steps to land exactly on
//! the requested sample times, so no dense-output interpolation is needed.

use crate::dynamics::{guarded_sec, polar_accelerations};
use crate::fourier::{uniform_grid, FourierBasis};
use crate::shaping::{ShapeSolution, ShapingError};

#[derive(Debug, thiserror::Error)]
pub enum PropagationError {
    #[error("sample times must be finite and strictly increasing")]
    BadSamples,
    #[error("profile comparison needs equal-length time and state arrays")]
    ProfileMismatch,
    #[error("step size collapsed near t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("exceeded {max} integration steps near t = {t}")]
    MaxSteps { t: f64, max: usize },
    #[error("state became non-finite near t = {t}")]
    NonFiniteState { t: f64 },
    #[error(transparent)]
    Shaping(#[from] ShapingError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

/// States recorded at the requested sample times.
#[derive(Debug, Clone)]
pub struct OdeSolution<const D: usize> {
    pub times: Vec<f64>,
    pub states: Vec<[f64; D]>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights (row 7 of A; FSAL).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
/// Embedded fourth-order weights.
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `dy/dt = f(t, y)` recording the state at each sample time.
///
/// `samples` must be strictly increasing; integration starts at the first
/// entry and ends at the last.
pub fn integrate_sampled<const D: usize>(
    f: impl Fn(f64, &[f64; D]) -> [f64; D],
    y0: [f64; D],
    samples: &[f64],
    opts: &IntegratorOptions,
) -> Result<OdeSolution<D>, PropagationError> {
    if samples.len() < 2
        || samples.iter().any(|t| !t.is_finite())
        || samples.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(PropagationError::BadSamples);
    }
    let t_end = *samples.last().expect("len checked");
    let span = t_end - samples[0];

    let mut t = samples[0];
    let mut y = y0;
    let mut times = Vec::with_capacity(samples.len());
    let mut states = Vec::with_capacity(samples.len());
    times.push(t);
    states.push(y);
    let mut next_sample = 1;

    let mut h_desired = (span * 1e-3).max(1e-10);
    let mut err_old: f64 = 1e-4;
    let mut k1 = f(t, &y);
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut ks = [[0.0; D]; 7];

    for _ in 0..opts.max_steps {
        if next_sample >= samples.len() {
            return Ok(OdeSolution {
                times,
                states,
                steps_accepted: accepted,
                steps_rejected: rejected,
            });
        }
        let target = samples[next_sample];
        let h = h_desired.min(target - t);
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(PropagationError::StepSizeUnderflow { t });
        }

        ks[0] = k1;
        for stage in 1..7 {
            let mut arg = y;
            for (j, kj) in ks.iter().enumerate().take(stage) {
                let a = A[stage - 1][j];
                if a != 0.0 {
                    for d in 0..D {
                        arg[d] += h * a * kj[d];
                    }
                }
            }
            ks[stage] = f(t + C[stage] * h, &arg);
        }
        let mut y5 = y;
        let mut err_vec = [0.0; D];
        for (j, kj) in ks.iter().enumerate() {
            for d in 0..D {
                y5[d] += h * B5[j] * kj[d];
                err_vec[d] += h * (B5[j] - B4[j]) * kj[d];
            }
        }
        if y5.iter().any(|v| !v.is_finite()) {
            return Err(PropagationError::NonFiniteState { t });
        }
        let mut err = 0.0;
        for d in 0..D {
            let scale = opts.abs_tol + opts.rel_tol * y[d].abs().max(y5[d].abs());
            let e = err_vec[d] / scale;
            err += e * e;
        }
        err = (err / D as f64).sqrt();

        if err <= 1.0 {
            accepted += 1;
            t += h;
            y = y5;
            k1 = ks[6]; // FSAL: last stage is f at the accepted point
            let reached = (target - t).abs() <= 1e-12 * target.abs().max(1.0);
            if reached {
                t = target;
                times.push(t);
                states.push(y);
                next_sample += 1;
            }
            // PI controller (proportional exponent 0.17, integral 0.04).
            let err_clamped = err.max(1e-10);
            let fac = 0.9 * err_clamped.powf(-0.17) * err_old.powf(0.04);
            h_desired = h * fac.clamp(0.2, 10.0);
            err_old = err_clamped.max(1e-4);
        } else {
            rejected += 1;
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h_desired = h * fac;
        }
    }
    Err(PropagationError::MaxSteps {
        t,
        max: opts.max_steps,
    })
}

/// How far the propagated trajectory drifted from the shape, canonical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationMetrics {
    pub final_radius: f64,
    pub final_angle: f64,
    pub final_rdot: f64,
    pub final_thetadot: f64,
    pub max_radius: f64,
    pub mean_radius: f64,
    pub max_angle: f64,
    pub mean_angle: f64,
}

/// Pointwise deviation between two state histories on a shared time grid.
///
/// States are `[r, θ, ṙ, θ̇]` rows; means are time-weighted (trapezoidal).
pub fn compare_profiles(
    times: &[f64],
    reference: &[[f64; 4]],
    propagated: &[[f64; 4]],
) -> Result<DeviationMetrics, PropagationError> {
    let n = times.len();
    if n < 2 || reference.len() != n || propagated.len() != n {
        return Err(PropagationError::ProfileMismatch);
    }
    let dr: Vec<f64> = (0..n).map(|i| (propagated[i][0] - reference[i][0]).abs()).collect();
    let dth: Vec<f64> = (0..n).map(|i| (propagated[i][1] - reference[i][1]).abs()).collect();
    let span = times[n - 1] - times[0];
    let mut int_r = 0.0;
    let mut int_th = 0.0;
    for i in 1..n {
        let h = times[i] - times[i - 1];
        int_r += 0.5 * (dr[i] + dr[i - 1]) * h;
        int_th += 0.5 * (dth[i] + dth[i - 1]) * h;
    }
    let last = n - 1;
    Ok(DeviationMetrics {
        final_radius: dr[last],
        final_angle: dth[last],
        final_rdot: (propagated[last][2] - reference[last][2]).abs(),
        final_thetadot: (propagated[last][3] - reference[last][3]).abs(),
        max_radius: dr.iter().fold(0.0f64, |m, &v| m.max(v)),
        mean_radius: int_r / span,
        max_angle: dth.iter().fold(0.0f64, |m, &v| m.max(v)),
        mean_angle: int_th / span,
    })
}

/// Outcome of an open-loop replay of a shaped solution.
#[derive(Debug, Clone)]
pub struct PropagationReport {
    pub times: Vec<f64>,
    /// Propagated states, one `[r, θ, ṙ, θ̇]` row per sample time.
    pub propagated: Vec<[f64; 4]>,
    /// Shape states at the same times.
    pub reference: Vec<[f64; 4]>,
    pub deviation: DeviationMetrics,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

/// Replay a shaped solution's thrust program through the full dynamics.
pub fn integrate_open_loop(
    solution: &ShapeSolution,
    n_samples: usize,
    opts: &IntegratorOptions,
) -> Result<PropagationReport, PropagationError> {
    let order_r = (solution.r_coeffs.len() - 1) / 2;
    let order_t = (solution.theta_coeffs.len() - 1) / 2;
    let basis_r = FourierBasis::new(order_r, solution.tof).map_err(ShapingError::from)?;
    let basis_t = FourierBasis::new(order_t, solution.tof).map_err(ShapingError::from)?;

    // Time-tabulated control: thrust magnitude and steering angle recovered
    // from the shape, evaluated analytically at whatever time the integrator
    // asks for.
    let control = |t: f64| -> (f64, f64) {
        let (r, rdot, _) = basis_r
            .evaluate(&solution.r_coeffs, t)
            .expect("coefficient lengths fixed at build time");
        let (_, thetadot, thetaddot) = basis_t
            .evaluate(&solution.theta_coeffs, t)
            .expect("coefficient lengths fixed at build time");
        let v_theta = r * thetadot;
        if rdot == 0.0 && v_theta == 0.0 {
            return (0.0, 0.0);
        }
        let alpha = rdot.atan2(v_theta);
        let tangential = 2.0 * rdot * thetadot + r * thetaddot;
        (tangential * guarded_sec(alpha.cos()), alpha)
    };

    let rhs = |t: f64, y: &[f64; 4]| -> [f64; 4] {
        let (ta, alpha) = control(t);
        let (rddot, thetaddot) = polar_accelerations(y[0], y[2], y[3], ta, alpha, 1.0);
        [y[2], y[3], rddot, thetaddot]
    };

    let shape_state = |t: f64| -> [f64; 4] {
        let (r, rdot, _) = basis_r
            .evaluate(&solution.r_coeffs, t)
            .expect("length checked");
        let (theta, thetadot, _) = basis_t
            .evaluate(&solution.theta_coeffs, t)
            .expect("length checked");
        [r, theta, rdot, thetadot]
    };

    let samples = uniform_grid(n_samples.max(2), solution.tof);
    let y0 = shape_state(0.0);
    let ode = integrate_sampled(rhs, y0, &samples, opts)?;

    let reference: Vec<[f64; 4]> = ode.times.iter().map(|&t| shape_state(t)).collect();
    let deviation = compare_profiles(&ode.times, &reference, &ode.states)?;
    Ok(PropagationReport {
        times: ode.times,
        propagated: ode.states,
        reference,
        deviation,
        steps_accepted: ode.steps_accepted,
        steps_rejected: ode.steps_rejected,
    })
}
