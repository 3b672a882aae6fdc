//! Reduced-order closed loop: rotor, DC link, lossless AC links and a
//! synchronous generator with first-order governor.
//!
//! Angles are kept relative to rotating frames so they stay bounded in steady
//! state: grid-side angles rotate at `ω_0·ω_base`, machine-side angles at
//! `ω_del·ω_mb`. Only angle differences enter the power flow.

use serde::{Deserialize, Serialize};

use crate::aero::{wind_power_pu, CpSurface};
use crate::control::{self, ControlGains, Mode, PitchState};
use crate::error::{invalid, Error, Result};
use crate::params::{NetworkParams, PerUnit, SgParams, TurbineParams};

/// Number of scalar states in [`PlantState`].
pub const N_STATES: usize = 15;

/// Converter controller states.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerState {
    pub theta_gsc: f64,
    pub theta_msc: f64,
    pub x_gsc: f64,
    pub x_msc: f64,
    pub q_gsc: f64,
    pub q_msc: f64,
    pub pitch: PitchState,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    /// PMSG electrical angle (rad, machine frame)
    pub theta_r: f64,
    /// Rotor speed (pu)
    pub omega_r: f64,
    /// SG angle (rad, grid frame)
    pub theta_g: f64,
    /// SG speed (pu)
    pub omega_g: f64,
    /// SG turbine power (pu)
    pub p_g: f64,
    /// DC-link voltage (pu)
    pub v_dc: f64,
    pub ctrl: ControllerState,
}

impl PlantState {
    pub fn to_array(&self) -> [f64; N_STATES] {
        let c = &self.ctrl;
        [
            self.theta_r,
            self.omega_r,
            self.theta_g,
            self.omega_g,
            self.p_g,
            self.v_dc,
            c.theta_gsc,
            c.theta_msc,
            c.x_gsc,
            c.x_msc,
            c.q_gsc,
            c.q_msc,
            c.pitch.beta,
            c.pitch.i_speed,
            c.pitch.i_power,
        ]
    }

    pub fn from_array(a: &[f64; N_STATES]) -> Self {
        Self {
            theta_r: a[0],
            omega_r: a[1],
            theta_g: a[2],
            omega_g: a[3],
            p_g: a[4],
            v_dc: a[5],
            ctrl: ControllerState {
                theta_gsc: a[6],
                theta_msc: a[7],
                x_gsc: a[8],
                x_msc: a[9],
                q_gsc: a[10],
                q_msc: a[11],
                pitch: PitchState { beta: a[12], i_speed: a[13], i_power: a[14] },
            },
        }
    }

    pub const LABELS: [&'static str; N_STATES] = [
        "theta_r", "omega_r", "theta_g", "omega_g", "p_g", "v_dc", "theta_gsc", "theta_msc", "x_gsc",
        "x_msc", "q_gsc", "q_msc", "beta", "i_speed", "i_power",
    ];
}

/// Step change of the load at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadEvent {
    pub time: f64,
    pub delta: f64,
}

/// Piecewise-constant active power load at the SG bus (pu).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadProfile {
    pub base: f64,
    #[serde(default)]
    pub events: Vec<LoadEvent>,
}

impl LoadProfile {
    pub fn value(&self, t: f64) -> f64 {
        self.base + self.events.iter().filter(|e| e.time <= t).map(|e| e.delta).sum::<f64>()
    }
}

/// Signals computed alongside the state derivative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Outputs {
    pub omega_gsc: f64,
    pub omega_msc: f64,
    pub p_wt: f64,
    pub p_pmsg: f64,
    pub p_gsc: f64,
    pub beta: f64,
    pub beta_ref: f64,
    pub p_load: f64,
}

/// Closed-loop model at a fixed wind speed.
#[derive(Debug, Clone)]
pub struct Plant {
    pub turbine: TurbineParams,
    pub sg: SgParams,
    pub network: NetworkParams,
    pub surface: CpSurface,
    pub gains: ControlGains,
    pub mode: Mode,
    pub v_w: f64,
    pub load: LoadProfile,
    pub pu: PerUnit,
    /// Governor power set-point (pu)
    pub p_set: f64,
    /// Constant injection used in GFL_MPPT mode (pu)
    pub p_gfl: f64,
}

impl Plant {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        turbine: TurbineParams,
        sg: SgParams,
        network: NetworkParams,
        surface: CpSurface,
        gains: ControlGains,
        mode: Mode,
        v_w: f64,
        load: LoadProfile,
    ) -> Result<Self> {
        let pu = PerUnit::new(&turbine, &sg, &network)?;
        gains.validate()?;
        if !(v_w > 0.0) {
            return Err(invalid(format!("wind speed must be positive, got {v_w}")));
        }
        let p_gfl = if mode == Mode::GflMppt {
            control::gfl_mppt_emulation(&turbine, &surface, v_w)?.0 * pu.wt_power_scale
        } else {
            0.0
        };
        Ok(Self { turbine, sg, network, surface, gains, mode, v_w, load, pu, p_set: 0.0, p_gfl })
    }

    /// Aerodynamic power on the system base.
    pub fn wind_power(&self, omega_r: f64, beta: f64) -> Result<f64> {
        Ok(wind_power_pu(&self.turbine, &self.surface, self.v_w, omega_r, beta)? * self.pu.wt_power_scale)
    }

    /// State derivative with the load held at `p_load`.
    pub fn derivative_with_load(&self, s: &PlantState, p_load: f64, t: f64) -> Result<(PlantState, Outputs)> {
        let pu = &self.pu;
        let g = &self.gains;
        let mut d = PlantState::default();
        let mut out = Outputs { p_load, ..Default::default() };

        if !(s.omega_g > 0.0) {
            return Err(Error::StateViolation { time: t, what: format!("omega_g = {} <= 0", s.omega_g) });
        }

        let p_gsc = if self.mode == Mode::GflMppt {
            out.omega_gsc = s.omega_g;
            out.omega_msc = s.omega_r;
            out.p_wt = self.p_gfl;
            out.p_pmsg = self.p_gfl;
            out.p_gsc = self.p_gfl;
            out.beta = s.ctrl.pitch.beta;
            out.beta_ref = s.ctrl.pitch.beta;
            self.p_gfl
        } else {
            if !(s.v_dc > 0.0) {
                return Err(Error::StateViolation { time: t, what: format!("v_dc = {} <= 0", s.v_dc) });
            }
            if !(s.omega_r > 0.0) {
                return Err(Error::StateViolation { time: t, what: format!("omega_r = {} <= 0", s.omega_r) });
            }
            let c = &s.ctrl;
            let p_pmsg = pmsg_power(pu.b_msc, s.theta_r, c.theta_msc);
            let p_gsc = gsc_power(&[(pu.b_g, s.theta_g)], c.theta_gsc);

            let cmd = control::pitch_reference(&g.pitch, g.omega_del, &c.pitch, s.omega_r, p_pmsg);
            let ideal_pitch = g.pitch.t_servo <= 0.0;
            let beta = if ideal_pitch { cmd.beta_ref } else { c.pitch.beta };
            let p_wt = self.wind_power(s.omega_r, beta)?;

            d.omega_r = (p_wt - p_pmsg) / (pu.j_wt * s.omega_r);
            d.v_dc = (p_pmsg - p_gsc) / (pu.c_dc * s.v_dc);

            let (omega_gsc, dx_gsc) = control::gsc_frequency(g, c.x_gsc, s.v_dc, d.v_dc);
            let (omega_msc, dx_msc) = control::msc_frequency(g, c.x_msc, s.v_dc, d.v_dc);
            d.ctrl.x_gsc = dx_gsc;
            d.ctrl.x_msc = dx_msc;
            d.ctrl.theta_gsc = pu.omega_base * (omega_gsc - g.omega_0);
            d.ctrl.theta_msc = pu.machine_omega_base * (omega_msc - g.omega_del);
            d.theta_r = pu.machine_omega_base * (s.omega_r - g.omega_del);

            // reactive channels are not coupled to the network: measured Q = 0
            d.ctrl.q_gsc = -c.q_gsc / g.gsc.t_v;
            d.ctrl.q_msc = -c.q_msc / g.msc.t_v;

            d.ctrl.pitch.beta = if ideal_pitch { 0.0 } else { control::pitch_servo(&g.pitch, c.pitch.beta, cmd.beta_ref) };
            d.ctrl.pitch.i_speed = cmd.di_speed;
            d.ctrl.pitch.i_power = cmd.di_power;

            out = Outputs { omega_gsc, omega_msc, p_wt, p_pmsg, p_gsc, beta, beta_ref: cmd.beta_ref, p_load };
            p_gsc
        };

        d.theta_g = pu.omega_base * (s.omega_g - g.omega_0);
        d.omega_g = (s.p_g + p_gsc - p_load) / (pu.j_g * s.omega_g);
        d.p_g = (self.p_set - s.p_g - pu.k_g * (s.omega_g - g.omega_0)) / pu.t_g;
        Ok((d, out))
    }

    /// State derivative at time `t`.
    pub fn closed_loop_derivative(&self, s: &PlantState, t: f64) -> Result<(PlantState, Outputs)> {
        self.derivative_with_load(s, self.load.value(t), t)
    }

    /// One classical RK4 step with the load fixed at its value at the step start.
    pub fn step_rk4(&self, s: &PlantState, t: f64, dt: f64) -> Result<PlantState> {
        self.step_rk4_with_load(s, self.load.value(t), t, dt)
    }

    /// RK4 step with an explicit load value.
    pub fn step_rk4_with_load(&self, s: &PlantState, p_load: f64, t: f64, dt: f64) -> Result<PlantState> {
        if !(dt > 0.0) {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        let f = |x: &[f64; N_STATES], tt: f64| -> Result<[f64; N_STATES]> {
            Ok(self.derivative_with_load(&PlantState::from_array(x), p_load, tt)?.0.to_array())
        };
        let next = rk4_step(f, &s.to_array(), t, dt)?;
        if let Some(m) = next.iter().map(|v| v.abs()).reduce(f64::max).filter(|m| !(*m <= 1e6)) {
            return Err(Error::Divergence { time: t + dt, magnitude: m });
        }
        let mut out = PlantState::from_array(&next);
        self.project(&mut out);
        Ok(out)
    }

    /// Clamp bounded controller states after a step.
    fn project(&self, s: &mut PlantState) {
        let p = &self.gains.pitch;
        let ps = &mut s.ctrl.pitch;
        ps.beta = ps.beta.clamp(p.beta_min, p.beta_max);
        ps.i_speed = ps.i_speed.clamp(0.0, p.limiter_integral_max);
        ps.i_power = ps.i_power.clamp(0.0, p.limiter_integral_max);
    }

    /// Equilibrium at nominal frequency. Sets the governor set-point so the SG
    /// carries the load not supplied by the turbine.
    pub fn find_equilibrium(&mut self) -> Result<PlantState> {
        let g = self.gains;
        let p_load = self.load.value(0.0);
        let mut s = PlantState { omega_g: g.omega_0, omega_r: g.omega_del, v_dc: g.v_dc_star, ..Default::default() };
        s.ctrl.pitch.beta = g.pitch.beta_del;

        let p_wt = if self.mode == Mode::GflMppt {
            s.omega_r = g.omega_del;
            self.p_gfl
        } else {
            let p = self.wind_power(g.omega_del, g.pitch.beta_del)?;
            for (name, b) in [("b_msc", self.pu.b_msc), ("b_g", self.pu.b_g)] {
                if p.abs() >= b {
                    return Err(Error::NoSolution(format!(
                        "turbine power {p:.4} pu exceeds the transfer limit {name} = {b}"
                    )));
                }
            }
            s.theta_r = (p / self.pu.b_msc).asin();
            s.ctrl.theta_gsc = (p / self.pu.b_g).asin();
            p
        };
        s.p_g = p_load - p_wt;
        self.p_set = s.p_g;

        if self.mode != Mode::GflMppt {
            self.newton_polish(&mut s, p_load)?;
        }
        let (d, _) = self.derivative_with_load(&s, p_load, 0.0)?;
        let residual = d.to_array().iter().map(|v| v.abs()).fold(0.0, f64::max);
        if residual >= 1e-9 {
            return Err(Error::NotConverged { iterations: 100, residual });
        }
        Ok(s)
    }

    /// Newton iterations on (δ_msc, δ_gsc, P_g) against the rotor, DC and SG balances.
    fn newton_polish(&self, s: &mut PlantState, p_load: f64) -> Result<()> {
        let resid = |s: &PlantState| -> Result<[f64; 3]> {
            let (d, _) = self.derivative_with_load(s, p_load, 0.0)?;
            Ok([d.omega_r, d.v_dc, d.omega_g])
        };
        let apply = |s: &PlantState, dx: [f64; 3]| {
            let mut n = *s;
            n.theta_r += dx[0];
            n.ctrl.theta_gsc += dx[1];
            n.p_g += dx[2];
            n
        };
        for _ in 0..100 {
            let r = resid(s)?;
            let norm = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if norm < 1e-13 {
                return Ok(());
            }
            let h = 1e-7;
            let mut jac = nalgebra::Matrix3::<f64>::zeros();
            for k in 0..3 {
                let mut e = [0.0; 3];
                e[k] = h;
                let rp = resid(&apply(s, e))?;
                e[k] = -h;
                let rm = resid(&apply(s, e))?;
                for i in 0..3 {
                    jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
            let rhs = nalgebra::Vector3::new(-r[0], -r[1], -r[2]);
            let dx = jac.lu().solve(&rhs).ok_or_else(|| Error::Singular("equilibrium Jacobian".into()))?;
            *s = apply(s, [dx[0], dx[1], dx[2]]);
        }
        let r = resid(s)?;
        let norm = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if norm < 1e-10 {
            Ok(())
        } else {
            Err(Error::NotConverged { iterations: 100, residual: norm })
        }
    }

    /// `|C̃·v·Δv/Δt − (P_pmsg − P_gsc)|` evaluated at the midpoint of a step.
    pub fn dc_energy_residual(&self, s0: &PlantState, s1: &PlantState, t: f64, dt: f64) -> Result<f64> {
        let a0 = s0.to_array();
        let a1 = s1.to_array();
        let mut mid = [0.0; N_STATES];
        for k in 0..N_STATES {
            mid[k] = 0.5 * (a0[k] + a1[k]);
        }
        let m = PlantState::from_array(&mid);
        let (_, out) = self.derivative_with_load(&m, self.load.value(t), t + 0.5 * dt)?;
        let lhs = self.pu.c_dc * m.v_dc * (s1.v_dc - s0.v_dc) / dt;
        Ok((lhs - (out.p_pmsg - out.p_gsc)).abs())
    }
}

/// `b_msc·sin(θ_r − θ_msc)`.
pub fn pmsg_power(b_msc: f64, theta_r: f64, theta_msc: f64) -> f64 {
    b_msc * (theta_r - theta_msc).sin()
}

/// `Σ b_k·sin(θ_gsc − θ_k)`.
pub fn gsc_power(lines: &[(f64, f64)], theta_gsc: f64) -> f64 {
    lines.iter().map(|&(b, th)| b * (theta_gsc - th).sin()).sum()
}

/// Classical fourth-order Runge–Kutta step.
pub fn rk4_step<const N: usize>(
    f: impl Fn(&[f64; N], f64) -> Result<[f64; N]>,
    x: &[f64; N],
    t: f64,
    dt: f64,
) -> Result<[f64; N]> {
    let add = |a: &[f64; N], k: &[f64; N], h: f64| {
        let mut r = *a;
        for i in 0..N {
            r[i] += h * k[i];
        }
        r
    };
    let k1 = f(x, t)?;
    let k2 = f(&add(x, &k1, 0.5 * dt), t + 0.5 * dt)?;
    let k3 = f(&add(x, &k2, 0.5 * dt), t + 0.5 * dt)?;
    let k4 = f(&add(x, &k3, dt), t + dt)?;
    let mut r = *x;
    for i in 0..N {
        r[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(r)
}
