//! Planar two-body dynamics in polar coordinates, with tangential thrust.
//!
//! The governing equations for a thrust acceleration of magnitude `ta` at
//! angle `alpha` from the local horizontal are
//!
//! ```text
//! r̈ − rθ̇² + μ/r²  = ta sin α
//! 2ṙθ̇ + rθ̈       = ta cos α
//! ```
//!
//! Thrust is steered along the velocity vector, so α equals the flight path
//! angle γ with tan γ = ṙ/(rθ̇). Eliminating `ta` between the two equations
//! under that steering law yields a single scalar residual that vanishes
//! exactly on any trajectory flyable with tangential thrust:
//!
//! ```text
//! F = r²(θ̇ r̈ − ṙ θ̈) + θ̇(μ − 2 r ṙ²) − (r θ̇)³
//! ```
//!
//! `ta` is signed: a negative value means thrust against the velocity. That
//! convention keeps α single-valued (always the branch-0 flight path angle)
//! instead of carrying a separate "add π" flag.

#[derive(Debug, thiserror::Error)]
pub enum DynamicsError {
    #[error("velocity vanishes at t = {t}; thrust direction is undefined")]
    DegenerateVelocity { t: f64 },
    #[error("radius must stay positive, got r = {r} at t = {t}")]
    NonPositiveRadius { t: f64, r: f64 },
}

/// Kinematic state of the shaped trajectory at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSample {
    pub t: f64,
    pub r: f64,
    pub rdot: f64,
    pub rddot: f64,
    pub theta: f64,
    pub thetadot: f64,
    pub thetaddot: f64,
}

/// Recovered thrust program sample: signed magnitude and steering angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrustSample {
    pub t: f64,
    /// Thrust acceleration, DU/TU²; negative = against the velocity.
    pub ta: f64,
    /// Steering angle from the local horizontal, rad.
    pub alpha: f64,
}

/// Combined tangential-steering residual; zero iff the state is flyable.
pub fn eom_residual(r: f64, rdot: f64, rddot: f64, thetadot: f64, thetaddot: f64, mu: f64) -> f64 {
    r * r * (thetadot * rddot - rdot * thetaddot) + thetadot * (mu - 2.0 * r * rdot * rdot)
        - (r * thetadot).powi(3)
}

/// Flight path angle γ = atan2(ṙ, rθ̇).
pub fn flight_path_angle(r: f64, rdot: f64, thetadot: f64) -> f64 {
    rdot.atan2(r * thetadot)
}

/// Accelerations produced by gravity plus a thrust (ta, alpha).
pub fn polar_accelerations(
    r: f64,
    rdot: f64,
    thetadot: f64,
    ta: f64,
    alpha: f64,
    mu: f64,
) -> (f64, f64) {
    let rddot = r * thetadot * thetadot - mu / (r * r) + ta * alpha.sin();
    let thetaddot = (ta * alpha.cos() - 2.0 * rdot * thetadot) / r;
    (rddot, thetaddot)
}

/// 1/cos α with the magnitude capped at 1e6 so near-radial flight cannot
/// produce infinities. Prograde motion keeps cos α > 0, so the cap only
/// engages on pathological states; crucially the expression is smooth in the
/// state everywhere the cap is inactive, which gradient-based solvers need.
pub(crate) fn guarded_sec(cos_alpha: f64) -> f64 {
    if cos_alpha.abs() < 1e-6 {
        1e6f64.copysign(cos_alpha)
    } else {
        1.0 / cos_alpha
    }
}

/// Recover the signed thrust program sample implied by a kinematic state.
///
/// The magnitude comes from the transverse governing equation alone,
/// `ta = (2ṙθ̇ + rθ̈)/cos α`; on an exactly flyable state the radial equation
/// gives the same value, and off it this form stays smooth in the state
/// (the radial alternative would jump wherever the branch choice flips).
pub fn thrust_from_state(s: &StateSample, _mu: f64) -> Result<ThrustSample, DynamicsError> {
    if s.r <= 0.0 {
        return Err(DynamicsError::NonPositiveRadius { t: s.t, r: s.r });
    }
    let v_theta = s.r * s.thetadot;
    if s.rdot == 0.0 && v_theta == 0.0 {
        return Err(DynamicsError::DegenerateVelocity { t: s.t });
    }
    let alpha = s.rdot.atan2(v_theta);
    let tangential = 2.0 * s.rdot * s.thetadot + s.r * s.thetaddot;
    let ta = tangential * guarded_sec(alpha.cos());
    Ok(ThrustSample { t: s.t, ta, alpha })
}

/// A sampled trajectory and the thrust program that flies it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryProfile {
    pub states: Vec<StateSample>,
    pub thrust: Vec<ThrustSample>,
}

impl TrajectoryProfile {
    /// Build a profile from kinematic samples, recovering thrust at each.
    pub fn new(states: Vec<StateSample>, mu: f64) -> Result<Self, DynamicsError> {
        let thrust = states
            .iter()
            .map(|s| thrust_from_state(s, mu))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { states, thrust })
    }

    /// ΔV = ∫ |ta| dt by the trapezoidal rule over the sample grid.
    pub fn delta_v(&self) -> f64 {
        self.thrust
            .windows(2)
            .map(|w| 0.5 * (w[0].ta.abs() + w[1].ta.abs()) * (w[1].t - w[0].t))
            .sum()
    }

    /// Largest |ta| over the program.
    pub fn max_abs_ta(&self) -> f64 {
        self.thrust.iter().map(|s| s.ta.abs()).fold(0.0, f64::max)
    }

    pub fn duration(&self) -> f64 {
        match (self.states.first(), self.states.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}
