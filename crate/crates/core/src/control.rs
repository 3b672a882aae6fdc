//! Dual-port grid-forming converter controls, Q–V droop, pitch control and
//! the constant-power grid-following baseline.

use serde::{Deserialize, Serialize};

use crate::aero::{mpp_power, CpSurface};
use crate::error::{invalid, Result};
use crate::params::TurbineParams;

/// Operating mode of the wind turbine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Constant-power injection at the MPP with a stiff DC link
    #[serde(rename = "GFL_MPPT")]
    GflMppt,
    /// Dual-port grid forming at the MPP (inertia only)
    #[serde(rename = "GFM_MPPT")]
    GfmMppt,
    /// Dual-port grid forming from a curtailed point (frequency response)
    #[serde(rename = "GFM_FR")]
    GfmFr,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::GflMppt, Mode::GfmMppt, Mode::GfmFr];

    pub fn name(self) -> &'static str {
        match self {
            Mode::GflMppt => "GFL_MPPT",
            Mode::GfmMppt => "GFM_MPPT",
            Mode::GfmFr => "GFM_FR",
        }
    }

    pub fn is_grid_forming(self) -> bool {
        !matches!(self, Mode::GflMppt)
    }
}

impl std::str::FromStr for Mode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "GFL_MPPT" => Ok(Mode::GflMppt),
            "GFM_MPPT" => Ok(Mode::GfmMppt),
            "GFM_FR" => Ok(Mode::GfmFr),
            _ => Err(crate::Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

/// Gains of one converter port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConverterGains {
    /// Frequency/DC-voltage gain (pu/pu)
    pub k_theta: f64,
    /// Derivative gain (pu·s)
    pub k_d: f64,
    /// DC-voltage filter time constant (s). The lossless reduced loop needs
    /// `t_dc < k_d/k_theta` to stay stable; 0 selects the ideal PD law.
    pub t_dc: f64,
    /// Q–V droop gain (pu/pu)
    pub k_q: f64,
    /// Reactive power filter time constant (s)
    pub t_v: f64,
    pub v_star: f64,
    pub q_star: f64,
}

impl Default for ConverterGains {
    fn default() -> Self {
        Self { k_theta: 0.5, k_d: 0.0067, t_dc: 0.01, k_q: 0.02, t_v: 0.05, v_star: 1.0, q_star: 0.0 }
    }
}

impl ConverterGains {
    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.k_theta > 0.0 && self.k_theta.is_finite()) {
            return Err(invalid(format!("{name}.k_theta must be positive")));
        }
        if !(self.k_d >= 0.0 && self.k_d.is_finite()) {
            return Err(invalid(format!("{name}.k_d must be non-negative")));
        }
        if !(self.t_dc >= 0.0 && self.t_dc.is_finite()) {
            return Err(invalid(format!("{name}.t_dc must be non-negative")));
        }
        if !(self.t_v > 0.0) {
            return Err(invalid(format!("{name}.t_v must be positive")));
        }
        Ok(())
    }

    /// `K_d / K_θ`, the quantity that must match across ports.
    pub fn derivative_ratio(&self) -> f64 {
        self.k_d / self.k_theta
    }
}

/// Pitch controller, limiter loops and servo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PitchGains {
    /// Proportional rotor-speed gain (deg/pu)
    pub k_p: f64,
    /// Pitch set-point (deg)
    pub beta_del: f64,
    /// Speed limiter PI (deg/pu, deg/(pu·s))
    pub speed_kp: f64,
    pub speed_ki: f64,
    /// Power limiter PI (deg/pu, deg/(pu·s))
    pub power_kp: f64,
    pub power_ki: f64,
    /// Machine-side power limit (pu)
    pub p_max_msc: f64,
    /// Rotor speed limit (pu)
    pub omega_max: f64,
    /// Servo time constant (s); zero selects an ideal actuator
    pub t_servo: f64,
    /// Servo rate limit (deg/s)
    pub rate_limit: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Upper clamp on each limiter integrator (deg)
    pub limiter_integral_max: f64,
    /// Disable both limiter loops
    pub limiters_enabled: bool,
}

impl Default for PitchGains {
    fn default() -> Self {
        Self {
            k_p: 0.0,
            beta_del: 0.0,
            speed_kp: 100.0,
            speed_ki: 50.0,
            power_kp: 20.0,
            power_ki: 20.0,
            p_max_msc: 1.3,
            omega_max: 1.2,
            t_servo: 0.3,
            rate_limit: 8.0,
            beta_min: 0.0,
            beta_max: 30.0,
            limiter_integral_max: 30.0,
            limiters_enabled: true,
        }
    }
}

impl PitchGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_p >= 0.0) {
            return Err(invalid("pitch.k_p must be non-negative"));
        }
        if !(self.t_servo >= 0.0) || !(self.rate_limit > 0.0) {
            return Err(invalid("pitch servo needs t_servo >= 0 and a positive rate limit"));
        }
        if !(self.beta_max > self.beta_min) || self.beta_min < 0.0 {
            return Err(invalid("pitch range must satisfy 0 <= beta_min < beta_max"));
        }
        if !(self.beta_del >= self.beta_min && self.beta_del <= self.beta_max) {
            return Err(invalid(format!("pitch.beta_del {} outside the pitch range", self.beta_del)));
        }
        for (n, v) in [
            ("speed_kp", self.speed_kp),
            ("speed_ki", self.speed_ki),
            ("power_kp", self.power_kp),
            ("power_ki", self.power_ki),
            ("limiter_integral_max", self.limiter_integral_max),
        ] {
            if !(v >= 0.0) {
                return Err(invalid(format!("pitch.{n} must be non-negative")));
            }
        }
        Ok(())
    }
}

/// Complete control configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlGains {
    pub gsc: ConverterGains,
    pub msc: ConverterGains,
    pub pitch: PitchGains,
    /// DC voltage set-point (pu)
    pub v_dc_star: f64,
    /// Nominal grid frequency (pu)
    pub omega_0: f64,
    /// Rotor speed set-point (pu)
    pub omega_del: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self {
            gsc: ConverterGains::default(),
            msc: ConverterGains { k_q: 0.05, ..ConverterGains::default() },
            pitch: PitchGains::default(),
            v_dc_star: 1.0,
            omega_0: 1.0,
            omega_del: 1.0,
        }
    }
}

impl ControlGains {
    pub fn validate(&self) -> Result<()> {
        self.gsc.validate("gsc")?;
        self.msc.validate("msc")?;
        self.pitch.validate()?;
        if !(self.v_dc_star > 0.0 && self.omega_0 > 0.0 && self.omega_del > 0.0) {
            return Err(invalid("set-points v_dc_star, omega_0 and omega_del must be positive"));
        }
        Ok(())
    }

    /// Whether both ports use the same derivative-to-proportional ratio.
    pub fn ratio_condition(&self) -> bool {
        ratio_matches(self.gsc.k_d, self.gsc.k_theta, self.msc.k_d, self.msc.k_theta)
    }

    /// Set `K_d^msc = K_d^gsc·K_θ^msc/K_θ^gsc`.
    pub fn impose_ratio(&mut self) {
        self.msc.k_d = self.gsc.k_d * self.msc.k_theta / self.gsc.k_theta;
    }
}

/// Relative match of `K_d/K_θ` between two ports within 1e-9.
pub fn ratio_matches(kd_gsc: f64, kt_gsc: f64, kd_msc: f64, kt_msc: f64) -> bool {
    let a = kd_gsc / kt_gsc;
    let b = kd_msc / kt_msc;
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Realisation of `(K_θ + K_d·s)/(T_dc·s + 1)`; returns `(y, dx/dt)`.
pub fn pd_filter_realization(k_theta: f64, k_d: f64, t_dc: f64, x: f64, u: f64) -> Result<(f64, f64)> {
    if !(t_dc > 0.0) {
        return Err(invalid(format!("filter time constant must be positive, got {t_dc}")));
    }
    let y = (k_theta - k_d / t_dc) * x + (k_d / t_dc) * u;
    Ok((y, (u - x) / t_dc))
}

/// Output of a port's DC-voltage filter. With `t_dc = 0` the ideal PD law is
/// used and `dv_dc` must carry the current DC voltage derivative.
fn port_output(g: &ConverterGains, x: f64, dv: f64, dv_dc: f64) -> (f64, f64) {
    if g.t_dc > 0.0 {
        let y = (g.k_theta - g.k_d / g.t_dc) * x + (g.k_d / g.t_dc) * dv;
        (y, (dv - x) / g.t_dc)
    } else {
        (g.k_theta * dv + g.k_d * dv_dc, 0.0)
    }
}

/// Grid-side converter frequency `ω_0 + H_gsc(v_dc − v_dc*)` and filter derivative.
pub fn gsc_frequency(gains: &ControlGains, x_gsc: f64, v_dc: f64, dv_dc: f64) -> (f64, f64) {
    let (y, dx) = port_output(&gains.gsc, x_gsc, v_dc - gains.v_dc_star, dv_dc);
    (gains.omega_0 + y, dx)
}

/// Machine-side converter frequency `ω_del + H_msc(v_dc − v_dc*)` and filter derivative.
pub fn msc_frequency(gains: &ControlGains, x_msc: f64, v_dc: f64, dv_dc: f64) -> (f64, f64) {
    let (y, dx) = port_output(&gains.msc, x_msc, v_dc - gains.v_dc_star, dv_dc);
    (gains.omega_del + y, dx)
}

/// Q–V droop with a first-order measurement filter; returns `(V, dq/dt)`.
pub fn qv_droop(k_q: f64, t_v: f64, v_star: f64, q_star: f64, q_filt: f64, q_meas: f64) -> Result<(f64, f64)> {
    if !(t_v > 0.0) {
        return Err(invalid(format!("Q filter time constant must be positive, got {t_v}")));
    }
    Ok((v_star + k_q * (q_star - q_filt), (q_meas - q_filt) / t_v))
}

/// Pitch actuator and limiter integrator states.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PitchState {
    pub beta: f64,
    pub i_speed: f64,
    pub i_power: f64,
}

/// Pitch reference and limiter integrator derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchCommand {
    pub beta_ref: f64,
    pub u_speed: f64,
    pub u_power: f64,
    pub di_speed: f64,
    pub di_power: f64,
}

/// `β_ref = β_del + K_p(ω_r − ω_del) + u_speed + u_power`, clamped to the
/// pitch range. Limiter integrators stop when their channel is clamped at zero
/// or when `β_ref` saturates in the direction of the error.
pub fn pitch_reference(g: &PitchGains, omega_del: f64, s: &PitchState, omega_r: f64, p_msc: f64) -> PitchCommand {
    let base = g.beta_del + g.k_p * (omega_r - omega_del);
    if !g.limiters_enabled {
        return PitchCommand {
            beta_ref: base.clamp(g.beta_min, g.beta_max),
            u_speed: 0.0,
            u_power: 0.0,
            di_speed: 0.0,
            di_power: 0.0,
        };
    }
    let e_speed = omega_r - g.omega_max;
    let e_power = p_msc - g.p_max_msc;
    let raw_speed = g.speed_kp * e_speed + s.i_speed;
    let raw_power = g.power_kp * e_power + s.i_power;
    let u_speed = raw_speed.max(0.0);
    let u_power = raw_power.max(0.0);
    let unclamped = base + u_speed + u_power;
    let beta_ref = unclamped.clamp(g.beta_min, g.beta_max);
    let integrate = |e: f64, raw: f64, i: f64, ki: f64| {
        let blocked_low = raw <= 0.0 && e < 0.0;
        let blocked_high = unclamped >= g.beta_max && e > 0.0;
        let at_floor = i <= 0.0 && e < 0.0;
        let at_ceiling = i >= g.limiter_integral_max && e > 0.0;
        if blocked_low || blocked_high || at_floor || at_ceiling {
            0.0
        } else {
            ki * e
        }
    };
    PitchCommand {
        beta_ref,
        u_speed,
        u_power,
        di_speed: integrate(e_speed, raw_speed, s.i_speed, g.speed_ki),
        di_power: integrate(e_power, raw_power, s.i_power, g.power_ki),
    }
}

/// Rate-limited first-order servo; holds at the range limits.
pub fn pitch_servo(g: &PitchGains, beta: f64, beta_ref: f64) -> f64 {
    if g.t_servo <= 0.0 {
        return 0.0;
    }
    let rate = ((beta_ref - beta) / g.t_servo).clamp(-g.rate_limit, g.rate_limit);
    if (beta <= g.beta_min && rate < 0.0) || (beta >= g.beta_max && rate > 0.0) {
        0.0
    } else {
        rate
    }
}

/// Constant injection of the MPP power, clamped to the rating, with the DC link
/// held at 1 pu. Returns `(P_gsc, v_dc)` in pu of the aggregated rating.
pub fn gfl_mppt_emulation(params: &TurbineParams, surface: &CpSurface, v_w: f64) -> Result<(f64, f64)> {
    if !(v_w > 0.0) {
        return Err(invalid(format!("wind speed must be positive, got {v_w}")));
    }
    let (_, cp_max) = surface.find_mpp()?;
    let p = (mpp_power(params, cp_max, v_w) / params.power_base()).min(1.0);
    Ok((p, 1.0))
}
