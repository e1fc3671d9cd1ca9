//! Problem scenarios, canonical units, and configuration loading.
//!
//! A scenario file is a flat `key = value` text file (`#` starts a comment).
//! Physical quantities are given in km/s/deg and converted to canonical units
//! on load: the distance unit DU defaults to the Earth radius and the time
//! unit TU is derived so that the gravitational parameter is exactly 1 in
//! DU³/TU². Everything downstream of this module works in canonical units.

use std::fmt;
use std::path::Path;

/// Default canonical distance unit: Earth equatorial radius in km.
pub const DEFAULT_DU_KM: f64 = 6378.140;

/// Earth gravitational parameter in km³/s².
pub const EARTH_MU_KM3S2: f64 = 398601.2;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario line {line_no} is not `key = value`: `{line}`")]
    Parse { line_no: usize, line: String },
    #[error("unknown scenario field `{0}`")]
    UnknownField(String),
    #[error("missing scenario field `{0}`")]
    MissingField(&'static str),
    #[error("field `{field}` has invalid value `{value}`: {reason}")]
    InvalidValue {
        field: String,
        value: String,
        reason: String,
    },
    #[error("invariant violation: {0}")]
    Invariant(String),
}

/// Canonical unit system tied to a central body.
///
/// `tu_s` is derived from `du_km` and the physical gravitational parameter so
/// that mu expressed in DU³/TU² is 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalUnits {
    pub du_km: f64,
    pub tu_s: f64,
    pub mu_canonical: f64,
}

/// Kinds of physical quantity the unit conversion understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    /// km ↔ DU
    Distance,
    /// s ↔ TU
    Time,
    /// km/s ↔ DU/TU
    Rate,
    /// km/s² ↔ DU/TU²
    Acceleration,
    /// rad ↔ rad (pass-through)
    Angle,
}

impl CanonicalUnits {
    /// Build a unit system from a distance unit and a physical mu.
    pub fn new(du_km: f64, mu_km3s2: f64) -> Result<Self, ScenarioError> {
        if du_km <= 0.0 || !du_km.is_finite() {
            return Err(ScenarioError::Invariant(format!(
                "du_km must be positive, got {du_km}"
            )));
        }
        if mu_km3s2 <= 0.0 || !mu_km3s2.is_finite() {
            return Err(ScenarioError::Invariant(format!(
                "mu_km3s2 must be positive, got {mu_km3s2}"
            )));
        }
        let tu_s = (du_km.powi(3) / mu_km3s2).sqrt();
        let mu_canonical = mu_km3s2 * tu_s * tu_s / du_km.powi(3);
        debug_assert!((mu_canonical - 1.0).abs() < 1e-12);
        Ok(Self {
            du_km,
            tu_s,
            mu_canonical,
        })
    }

    /// Earth units with the default DU (Earth radius).
    pub fn earth() -> Self {
        Self::new(DEFAULT_DU_KM, EARTH_MU_KM3S2).expect("default constants are valid")
    }

    /// Convert a physical value (km, s, km/s, km/s², rad) to canonical units.
    pub fn to_canonical(&self, value: f64, kind: UnitKind) -> f64 {
        match kind {
            UnitKind::Distance => value / self.du_km,
            UnitKind::Time => value / self.tu_s,
            UnitKind::Rate => value * self.tu_s / self.du_km,
            UnitKind::Acceleration => value * self.tu_s * self.tu_s / self.du_km,
            UnitKind::Angle => value,
        }
    }

    /// Inverse of [`to_canonical`](Self::to_canonical).
    pub fn from_canonical(&self, value: f64, kind: UnitKind) -> f64 {
        match kind {
            UnitKind::Distance => value * self.du_km,
            UnitKind::Time => value * self.tu_s,
            UnitKind::Rate => value * self.du_km / self.tu_s,
            UnitKind::Acceleration => value * self.du_km / (self.tu_s * self.tu_s),
            UnitKind::Angle => value,
        }
    }

    /// Canonical time to hours.
    pub fn tu_to_hours(&self, tof_tu: f64) -> f64 {
        tof_tu * self.tu_s / 3600.0
    }
}

/// Circular-orbit angular rate sqrt(mu/r³).
pub fn circular_rate(r: f64, mu: f64) -> Result<f64, ScenarioError> {
    if r <= 0.0 || !r.is_finite() {
        return Err(ScenarioError::Invariant(format!(
            "circular_rate requires r > 0, got {r}"
        )));
    }
    Ok((mu / r.powi(3)).sqrt())
}

/// Endpoint states in canonical units.
///
/// `theta_f` is present exactly when the final polar angle is constrained
/// (fixed or rendezvous-synchronized); in rendezvous mode it is the reference
/// angle corresponding to the initial time-of-flight guess.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryConditions {
    pub r_i: f64,
    pub theta_i: f64,
    pub rdot_i: f64,
    pub thetadot_i: f64,
    pub r_f: f64,
    pub rdot_f: f64,
    pub thetadot_f: f64,
    pub theta_f: Option<f64>,
}

/// Which penalty term the shaping objective carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveMode {
    /// Pure equation-of-motion residual, J = FᵀF.
    None,
    /// Weighted time-of-flight penalty; ToF becomes a decision variable.
    Tof,
    /// Weighted ΔV penalty; ToF stays fixed.
    DeltaV,
}

impl fmt::Display for ObjectiveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveMode::None => "none",
            ObjectiveMode::Tof => "tof",
            ObjectiveMode::DeltaV => "delta_v",
        })
    }
}

/// Treatment of the final polar angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinalAngleMode {
    Free,
    Fixed,
    /// Fixed, but re-synchronized to the target's orbital rate as ToF varies.
    RendezvousSync,
}

impl fmt::Display for FinalAngleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FinalAngleMode::Free => "free",
            FinalAngleMode::Fixed => "fixed",
            FinalAngleMode::RendezvousSync => "rendezvous_sync",
        })
    }
}

/// A fully resolved problem definition, immutable after load.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub bcs: BoundaryConditions,
    pub units: CanonicalUnits,
    /// Radial Fourier order (harmonic pairs).
    pub n_r: usize,
    /// Angular Fourier order.
    pub n_theta: usize,
    /// Number of discretization points, endpoints included.
    pub dp: usize,
    /// Thrust-acceleration bound, DU/TU².
    pub ta_max: f64,
    /// Penalty weight in [0, 1].
    pub omega: f64,
    /// Initial time-of-flight guess, TU.
    pub tof0: f64,
    pub objective_mode: ObjectiveMode,
    pub final_angle_mode: FinalAngleMode,
    /// True when ToF is not a decision variable (any mode but `tof`).
    pub tof_fixed: bool,
}

impl ScenarioConfig {
    /// Check every structural invariant, naming the offending field.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let inv = |msg: String| Err(ScenarioError::Invariant(msg));
        if self.bcs.r_i <= 0.0 {
            return inv(format!("r_i must be positive, got {}", self.bcs.r_i));
        }
        if self.bcs.r_f <= 0.0 {
            return inv(format!("r_f must be positive, got {}", self.bcs.r_f));
        }
        if self.n_r < 2 {
            return inv(format!(
                "n_r must be at least 2 for boundary-condition elimination, got {}",
                self.n_r
            ));
        }
        if self.n_theta < 2 {
            return inv(format!(
                "n_theta must be at least 2 for boundary-condition elimination, got {}",
                self.n_theta
            ));
        }
        let dp_min = 2 * self.n_r.max(self.n_theta) + 1;
        if self.dp < dp_min {
            return inv(format!(
                "dp must be at least 2*max(n_r, n_theta)+1 = {dp_min}, got {}",
                self.dp
            ));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return inv(format!("omega must lie in [0, 1], got {}", self.omega));
        }
        if self.ta_max <= 0.0 {
            return inv(format!("ta_max must be positive, got {}", self.ta_max));
        }
        if self.tof0 <= 0.0 {
            return inv(format!("tof0 must be positive, got {}", self.tof0));
        }
        let needs_theta_f = matches!(
            self.final_angle_mode,
            FinalAngleMode::Fixed | FinalAngleMode::RendezvousSync
        );
        if needs_theta_f != self.bcs.theta_f.is_some() {
            return inv(format!(
                "theta_f must be given exactly when final_angle_mode is fixed or \
                 rendezvous_sync (mode is {}, theta_f given: {})",
                self.final_angle_mode,
                self.bcs.theta_f.is_some()
            ));
        }
        if self.objective_mode == ObjectiveMode::DeltaV && !self.tof_fixed {
            return inv("objective_mode = delta_v requires a fixed ToF".to_string());
        }
        Ok(())
    }

    /// Canonical ToF to hours using this scenario's unit system.
    pub fn tof_hours(&self, tof_tu: f64) -> f64 {
        self.units.tu_to_hours(tof_tu)
    }

    /// Resolved-parameter echo for run manifests, one `key = value` per line.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let b = &self.bcs;
        s.push_str(&format!("du_km = {}\n", self.units.du_km));
        s.push_str(&format!("tu_s = {}\n", self.units.tu_s));
        s.push_str(&format!("r_i_du = {}\n", b.r_i));
        s.push_str(&format!("theta_i_rad = {}\n", b.theta_i));
        s.push_str(&format!("rdot_i_dutu = {}\n", b.rdot_i));
        s.push_str(&format!("thetadot_i_radtu = {}\n", b.thetadot_i));
        s.push_str(&format!("r_f_du = {}\n", b.r_f));
        s.push_str(&format!("rdot_f_dutu = {}\n", b.rdot_f));
        s.push_str(&format!("thetadot_f_radtu = {}\n", b.thetadot_f));
        if let Some(tf) = b.theta_f {
            s.push_str(&format!("theta_f_rad = {tf}\n"));
        }
        s.push_str(&format!("n_r = {}\n", self.n_r));
        s.push_str(&format!("n_theta = {}\n", self.n_theta));
        s.push_str(&format!("dp = {}\n", self.dp));
        s.push_str(&format!("ta_max_canonical = {}\n", self.ta_max));
        s.push_str(&format!("omega = {}\n", self.omega));
        s.push_str(&format!("tof0_tu = {}\n", self.tof0));
        s.push_str(&format!("objective_mode = {}\n", self.objective_mode));
        s.push_str(&format!("final_angle_mode = {}\n", self.final_angle_mode));
        s.push_str(&format!("tof_fixed = {}\n", self.tof_fixed));
        s
    }
}

/// Load and validate a scenario file, converting to canonical units.
pub fn load_scenario<P: AsRef<Path>>(path: P) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario_str(&text)
}

/// Parse scenario text (see module docs for the format).
pub fn parse_scenario_str(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    const FIELDS: &[&str] = &[
        "r_i_km",
        "theta_i_deg",
        "rdot_i_kms",
        "r_f_km",
        "rdot_f_kms",
        "theta_f_deg",
        "n_r",
        "n_theta",
        "dp",
        "ta_max_canonical",
        "omega",
        "tof0_s",
        "objective_mode",
        "final_angle_mode",
        "mu_km3s2",
        "du_km",
    ];

    let mut pairs: Vec<(&str, &str)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find(['#', ';']) {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ScenarioError::Parse {
            line_no: i + 1,
            line: raw.to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();
        if !FIELDS.contains(&key) {
            return Err(ScenarioError::UnknownField(key.to_string()));
        }
        pairs.push((key, value));
    }

    let get = |name: &'static str| -> Option<&str> {
        pairs.iter().rev().find(|(k, _)| *k == name).map(|(_, v)| *v)
    };
    let require = |name: &'static str| -> Result<&str, ScenarioError> {
        get(name).ok_or(ScenarioError::MissingField(name))
    };
    let num = |name: &'static str| -> Result<f64, ScenarioError> {
        let v = require(name)?;
        v.parse::<f64>().map_err(|e| ScenarioError::InvalidValue {
            field: name.to_string(),
            value: v.to_string(),
            reason: e.to_string(),
        })
    };
    let int = |name: &'static str| -> Result<usize, ScenarioError> {
        let v = require(name)?;
        v.parse::<usize>().map_err(|e| ScenarioError::InvalidValue {
            field: name.to_string(),
            value: v.to_string(),
            reason: e.to_string(),
        })
    };

    let mu_km3s2 = num("mu_km3s2")?;
    let du_km = match get("du_km") {
        Some(v) => v.parse::<f64>().map_err(|e| ScenarioError::InvalidValue {
            field: "du_km".to_string(),
            value: v.to_string(),
            reason: e.to_string(),
        })?,
        None => DEFAULT_DU_KM,
    };
    let units = CanonicalUnits::new(du_km, mu_km3s2)?;

    let objective_mode = match require("objective_mode")? {
        "none" => ObjectiveMode::None,
        "tof" => ObjectiveMode::Tof,
        "delta_v" => ObjectiveMode::DeltaV,
        other => {
            return Err(ScenarioError::InvalidValue {
                field: "objective_mode".to_string(),
                value: other.to_string(),
                reason: "expected one of none, tof, delta_v".to_string(),
            })
        }
    };
    let final_angle_mode = match require("final_angle_mode")? {
        "free" => FinalAngleMode::Free,
        "fixed" => FinalAngleMode::Fixed,
        "rendezvous_sync" => FinalAngleMode::RendezvousSync,
        other => {
            return Err(ScenarioError::InvalidValue {
                field: "final_angle_mode".to_string(),
                value: other.to_string(),
                reason: "expected one of free, fixed, rendezvous_sync".to_string(),
            })
        }
    };

    let r_i = units.to_canonical(num("r_i_km")?, UnitKind::Distance);
    let r_f = units.to_canonical(num("r_f_km")?, UnitKind::Distance);
    let theta_i = num("theta_i_deg")?.to_radians();
    let rdot_i = units.to_canonical(num("rdot_i_kms")?, UnitKind::Rate);
    let rdot_f = units.to_canonical(num("rdot_f_kms")?, UnitKind::Rate);
    let theta_f = match get("theta_f_deg") {
        Some(v) => Some(
            v.parse::<f64>()
                .map_err(|e| ScenarioError::InvalidValue {
                    field: "theta_f_deg".to_string(),
                    value: v.to_string(),
                    reason: e.to_string(),
                })?
                .to_radians(),
        ),
        None => None,
    };

    // Departure and target orbits are circular; their rates come from the radii.
    let thetadot_i = circular_rate(r_i, units.mu_canonical)?;
    let thetadot_f = circular_rate(r_f, units.mu_canonical)?;

    let objective = objective_mode;
    let cfg = ScenarioConfig {
        bcs: BoundaryConditions {
            r_i,
            theta_i,
            rdot_i,
            thetadot_i,
            r_f,
            rdot_f,
            thetadot_f,
            theta_f,
        },
        units,
        n_r: int("n_r")?,
        n_theta: int("n_theta")?,
        dp: int("dp")?,
        ta_max: num("ta_max_canonical")?,
        omega: num("omega")?,
        tof0: units.to_canonical(num("tof0_s")?, UnitKind::Time),
        objective_mode: objective,
        final_angle_mode,
        tof_fixed: objective != ObjectiveMode::Tof,
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn orbit_raising_text() -> String {
        "\
# LEO to GEO orbit raising
r_i_km = 6570
theta_i_deg = 0
rdot_i_kms = 0
r_f_km = 42160
rdot_f_kms = 0
n_r = 2
n_theta = 3
dp = 160
ta_max_canonical = 0.0102
omega = 0.5
tof0_s = 120000
objective_mode = tof
final_angle_mode = free
mu_km3s2 = 398601.2
"
        .to_string()
    }

    #[test]
    fn earth_units_match_hand_arithmetic() {
        let u = CanonicalUnits::earth();
        assert_relative_eq!(u.tu_s, 806.810925718454, max_relative = 1e-12);
        assert!((u.mu_canonical - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_conversion_leo_radius() {
        let u = CanonicalUnits::earth();
        // 6570 / 6378.140, by hand
        assert_relative_eq!(
            u.to_canonical(6570.0, UnitKind::Distance),
            1.0300808699714963,
            max_relative = 1e-12
        );
        assert_eq!(u.to_canonical(0.0, UnitKind::Rate), 0.0);
        // mu itself maps to 1: mu [km³/s²] * tu²/du³
        let mu_c = EARTH_MU_KM3S2 * u.tu_s * u.tu_s / u.du_km.powi(3);
        assert!((mu_c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn angle_passes_through() {
        let u = CanonicalUnits::earth();
        assert_eq!(u.to_canonical(1.25, UnitKind::Angle), 1.25);
    }

    #[test]
    fn round_trip_physical_canonical() {
        let u = CanonicalUnits::earth();
        for kind in [
            UnitKind::Distance,
            UnitKind::Time,
            UnitKind::Rate,
            UnitKind::Acceleration,
            UnitKind::Angle,
        ] {
            for v in [0.0, 1.0, -3.5, 42160.0, 1e-7] {
                let back = u.from_canonical(u.to_canonical(v, kind), kind);
                assert_relative_eq!(back, v, max_relative = 1e-12, epsilon = 1e-300);
            }
        }
    }

    #[test]
    fn circular_rate_unit_orbit() {
        assert_eq!(circular_rate(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(circular_rate(4.0, 1.0).unwrap(), 0.125);
    }

    #[test]
    fn circular_rate_geo_physical() {
        // sqrt(398601.2 / 42160³) rad/s, by hand
        let n = circular_rate(42160.0, EARTH_MU_KM3S2).unwrap();
        assert_relative_eq!(n, 7.2932e-5, max_relative = 1e-4);
        assert_relative_eq!(n, 7.293204606467088e-5, max_relative = 1e-12);
    }

    #[test]
    fn circular_rate_rejects_nonpositive_radius() {
        assert!(circular_rate(0.0, 1.0).is_err());
        assert!(circular_rate(-1.0, 1.0).is_err());
    }

    #[test]
    fn circular_rate_identity_property() {
        // rate² · r³ = mu
        for r in [0.3, 1.0, 2.7, 6.61, 42.0] {
            let n = circular_rate(r, 1.0).unwrap();
            assert_relative_eq!(n * n * r.powi(3), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn parses_orbit_raising_scenario() {
        let cfg = parse_scenario_str(&orbit_raising_text()).unwrap();
        assert_relative_eq!(cfg.bcs.r_i, 1.0300808699714963, max_relative = 1e-12);
        assert_relative_eq!(cfg.bcs.r_f, 6.61007754611846, max_relative = 1e-12);
        assert_relative_eq!(cfg.bcs.thetadot_i, 0.9565177141227095, max_relative = 1e-12);
        assert_relative_eq!(cfg.bcs.thetadot_f, 0.05884237159997805, max_relative = 1e-12);
        assert_relative_eq!(cfg.tof0, 148.7337319994045, max_relative = 1e-12);
        assert_eq!(cfg.n_r, 2);
        assert_eq!(cfg.n_theta, 3);
        assert_eq!(cfg.dp, 160);
        assert_eq!(cfg.objective_mode, ObjectiveMode::Tof);
        assert_eq!(cfg.final_angle_mode, FinalAngleMode::Free);
        assert!(!cfg.tof_fixed);
        assert_eq!(cfg.bcs.theta_f, None);
    }

    #[test]
    fn rejects_omega_out_of_range() {
        let text = orbit_raising_text().replace("omega = 0.5", "omega = 1.2");
        let err = parse_scenario_str(&text).unwrap_err();
        assert!(err.to_string().contains("omega"), "got: {err}");
    }

    #[test]
    fn rejects_small_fourier_order() {
        let text = orbit_raising_text().replace("n_r = 2", "n_r = 1");
        let err = parse_scenario_str(&text).unwrap_err();
        assert!(err.to_string().contains("n_r"), "got: {err}");
    }

    #[test]
    fn rejects_unknown_field() {
        let text = orbit_raising_text() + "bogus = 1\n";
        assert!(matches!(
            parse_scenario_str(&text),
            Err(ScenarioError::UnknownField(_))
        ));
    }

    #[test]
    fn rejects_missing_theta_f_in_fixed_mode() {
        let text = orbit_raising_text().replace(
            "final_angle_mode = free",
            "final_angle_mode = fixed",
        );
        let err = parse_scenario_str(&text).unwrap_err();
        assert!(err.to_string().contains("theta_f"), "got: {err}");
    }

    #[test]
    fn rejects_dp_below_minimum() {
        let text = orbit_raising_text().replace("dp = 160", "dp = 6");
        let err = parse_scenario_str(&text).unwrap_err();
        assert!(err.to_string().contains("dp"), "got: {err}");
    }

    #[test]
    fn delta_v_mode_forces_fixed_tof() {
        let text = orbit_raising_text()
            .replace("objective_mode = tof", "objective_mode = delta_v")
            .replace("final_angle_mode = free", "final_angle_mode = fixed")
            + "theta_f_deg = 2340\n";
        let cfg = parse_scenario_str(&text).unwrap();
        assert!(cfg.tof_fixed);
        assert_relative_eq!(
            cfg.bcs.theta_f.unwrap(),
            13.0 * std::f64::consts::PI,
            max_relative = 1e-12
        );
    }

    #[test]
    fn load_scenario_missing_file_is_io_error() {
        assert!(matches!(
            load_scenario("/nonexistent/scenario.ini"),
            Err(ScenarioError::Io { .. })
        ));
    }
}
