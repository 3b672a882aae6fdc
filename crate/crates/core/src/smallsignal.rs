//! Six-state linear model of the dual-port loop, its spectrum and the
//! LaSalle certificate.
//!
//! States are `(ρ₁, ρ₂, ω_g, ω_r, v_dc, P_g)` where `ρ₁` is the GSC angle
//! relative to the SG and `ρ₂` the MSC angle relative to the rotor, both
//! divided by their frequency base so that `ρ̇ = Δω`.

use nalgebra::{Complex, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::aero::wind_power_pu;
use crate::control::ratio_matches;
use crate::error::{invalid, Error, Result};
use crate::plant::{rk4_step, Plant, PlantState};

pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Vec6 = SVector<f64, 6>;

pub const LABELS: [&str; 6] = ["rho_1", "rho_2", "omega_g", "omega_r", "v_dc", "p_g"];

/// Threshold on the largest real part for a stable verdict.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Scalars entering the linear model. Susceptances are the small-signal
/// line gains `∂P/∂ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallSignalParams {
    pub j_g: f64,
    pub j_wt: f64,
    pub c_dc: f64,
    pub t_g: f64,
    pub k_g: f64,
    pub b_g: f64,
    pub b_msc: f64,
    pub omega_0: f64,
    pub omega_del: f64,
    pub k_theta_gsc: f64,
    pub k_theta_msc: f64,
    pub k_d_gsc: f64,
    pub k_d_msc: f64,
    /// `K_ωr + K_β·K_p` on the system base
    pub k_wt: f64,
}

impl SmallSignalParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("j_g", self.j_g),
            ("j_wt", self.j_wt),
            ("c_dc", self.c_dc),
            ("t_g", self.t_g),
            ("omega_0", self.omega_0),
            ("omega_del", self.omega_del),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("k_g", self.k_g),
            ("k_theta_gsc", self.k_theta_gsc),
            ("k_theta_msc", self.k_theta_msc),
            ("k_d_gsc", self.k_d_gsc),
            ("k_d_msc", self.k_d_msc),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.b_g.is_finite() && self.b_msc.is_finite() && self.k_wt.is_finite()) {
            return Err(invalid("line gains and K_wt must be finite"));
        }
        Ok(())
    }

    /// Linearise a plant about an equilibrium. The line gains include the
    /// frequency bases and the cosine of the steady-state angle differences.
    pub fn from_plant(plant: &Plant, eq: &PlantState) -> Result<Self> {
        let pu = &plant.pu;
        let g = &plant.gains;
        let (k_omega, k_beta) = local_sensitivities(plant, g.omega_del, g.pitch.beta_del)?;
        let delta_g = eq.ctrl.theta_gsc - eq.theta_g;
        let delta_m = eq.theta_r - eq.ctrl.theta_msc;
        Ok(Self {
            j_g: pu.j_g,
            j_wt: pu.j_wt,
            c_dc: pu.c_dc,
            t_g: pu.t_g,
            k_g: pu.k_g,
            b_g: pu.b_g * pu.omega_base * delta_g.cos(),
            b_msc: pu.b_msc * pu.machine_omega_base * delta_m.cos(),
            omega_0: g.omega_0,
            omega_del: g.omega_del,
            k_theta_gsc: g.gsc.k_theta,
            k_theta_msc: g.msc.k_theta,
            k_d_gsc: g.gsc.k_d,
            k_d_msc: g.msc.k_d,
            k_wt: (k_omega + k_beta * g.pitch.k_p) * pu.wt_power_scale,
        })
    }
}

/// `−∂P/∂ω_r` and `−∂P/∂β` from fourth-order stencils, without the
/// zero-clamping applied to reported sensitivities.
fn local_sensitivities(plant: &Plant, omega: f64, beta: f64) -> Result<(f64, f64)> {
    let p = |w: f64, b: f64| wind_power_pu(&plant.turbine, &plant.surface, plant.v_w, w, b);
    let d4 = |f: &dyn Fn(f64) -> Result<f64>, h: f64| -> Result<f64> {
        Ok((f(-2.0 * h)? - f(2.0 * h)? + 8.0 * (f(h)? - f(-h)?)) / (12.0 * h))
    };
    let k_omega = -d4(&|dw| p(omega + dw, beta), 1e-3)?;
    let hb = 1e-2;
    let k_beta = if beta >= 2.0 * hb {
        -d4(&|db| p(omega, beta + db), hb)?
    } else {
        // one-sided at the lower pitch bound
        -(-3.0 * p(omega, beta)? + 4.0 * p(omega, beta + hb)? - p(omega, beta + 2.0 * hb)?) / (2.0 * hb)
    };
    Ok((k_omega, k_beta))
}

/// `T·ẋ = A·x + E·ΔP_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallSignalModel {
    pub params: SmallSignalParams,
    pub t: Mat6,
    pub a: Mat6,
    pub e: Vec6,
}

pub fn build_model(p: &SmallSignalParams) -> Result<SmallSignalModel> {
    p.validate()?;
    let b = [p.b_g, p.b_msc];
    let kd = [p.k_d_gsc / p.c_dc, p.k_d_msc / p.c_dc];
    let kt = [p.k_theta_gsc, p.k_theta_msc];
    let mut a = Mat6::zeros();
    for i in 0..2 {
        for j in 0..2 {
            a[(i, j)] = -kd[i] * b[j];
        }
        a[(i, 2 + i)] = -1.0;
        a[(i, 4)] = kt[i];
        a[(2 + i, i)] = b[i];
        a[(4, i)] = -b[i];
    }
    a[(3, 3)] = -p.k_wt;
    a[(2, 5)] = 1.0;
    a[(5, 2)] = -p.k_g;
    a[(5, 5)] = -1.0;
    let t = Mat6::from_diagonal(&Vec6::from([1.0, 1.0, p.j_g * p.omega_0, p.j_wt * p.omega_del, p.c_dc, p.t_g]));
    let mut e = Vec6::zeros();
    e[2] = -1.0;
    Ok(SmallSignalModel { params: *p, t, a, e })
}

impl SmallSignalModel {
    /// `T⁻¹A`.
    pub fn state_matrix(&self) -> Mat6 {
        let mut m = self.a;
        for i in 0..6 {
            let d = self.t[(i, i)];
            for j in 0..6 {
                m[(i, j)] /= d;
            }
        }
        m
    }

    /// Equilibrium shift under a constant load change: `A·x = −E·ΔP_L`.
    pub fn steady_state(&self, delta_p_load: f64) -> Result<Vec6> {
        let rhs = -self.e * delta_p_load;
        self.a.lu().solve(&rhs).ok_or_else(|| Error::Singular("small-signal A".into()))
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        let rows = |m: &Mat6| -> Vec<Vec<f64>> { (0..6).map(|i| (0..6).map(|j| m[(i, j)]).collect()).collect() };
        let verdict = stability_verdict(self)?;
        Ok(serde_json::json!({
            "labels": LABELS,
            "params": self.params,
            "T": rows(&self.t),
            "A": rows(&self.a),
            "E": self.e.iter().copied().collect::<Vec<_>>(),
            "eigenvalues": verdict.eigenvalues,
            "max_real": verdict.max_real,
            "stable": verdict.stable,
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    /// `(re, im)` pairs sorted by decreasing real part
    pub eigenvalues: Vec<(f64, f64)>,
    pub max_real: f64,
    pub stable: bool,
}

pub fn stability_verdict(model: &SmallSignalModel) -> Result<StabilityVerdict> {
    let m = model.state_matrix();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure);
    }
    let eig: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
    if eig.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigenFailure);
    }
    let mut eigenvalues: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im)).collect();
    eigenvalues.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let max_real = eigenvalues[0].0;
    Ok(StabilityVerdict { eigenvalues, max_real, stable: max_real < -STABILITY_MARGIN })
}

/// `K_ωr + K_β·K_p ≥ 0` and matching derivative-to-proportional ratios.
pub fn theorem1_conditions(
    k_d_gsc: f64,
    k_theta_gsc: f64,
    k_d_msc: f64,
    k_theta_msc: f64,
    k_omega: f64,
    k_beta: f64,
    k_p: f64,
) -> bool {
    k_omega + k_beta * k_p >= 0.0 && ratio_matches(k_d_gsc, k_theta_gsc, k_d_msc, k_theta_msc)
}

/// Numeric check of the LaSalle function `V = xᵀMx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaSalleReport {
    pub m_min_eig: f64,
    pub v_min_eig: f64,
    /// Largest eigenvalue of `MÃ + ÃᵀM`
    pub s_max_eig: f64,
    /// `max |S + 𝒱|`
    pub deviation: f64,
}

impl LaSalleReport {
    pub fn certified(&self) -> bool {
        self.m_min_eig > 0.0 && self.s_max_eig <= STABILITY_MARGIN
    }
}

/// `(M, 𝒱)` in the coordinates `x = (𝓑ρ, ω_g, ω_r, v_dc, P_g)`.
pub fn lasalle_matrices(p: &SmallSignalParams) -> Result<(Mat6, Mat6)> {
    if p.b_g == 0.0 || p.b_msc == 0.0 {
        return Err(Error::Singular("line gain matrix".into()));
    }
    if !(p.k_theta_gsc > 0.0 && p.k_theta_msc > 0.0 && p.k_g > 0.0) {
        return Err(invalid("LaSalle function needs positive K_theta and k_g"));
    }
    let m = Mat6::from_diagonal(&Vec6::from([
        1.0 / (p.k_theta_gsc * p.b_g),
        1.0 / (p.k_theta_msc * p.b_msc),
        p.j_g * p.omega_0 / p.k_theta_gsc,
        p.j_wt * p.omega_del / p.k_theta_msc,
        p.c_dc,
        p.t_g / (p.k_theta_gsc * p.k_g),
    ])) * 0.5;
    let mut v = Mat6::zeros();
    let c = p.k_d_gsc / (p.k_theta_gsc * p.c_dc);
    for i in 0..2 {
        for j in 0..2 {
            v[(i, j)] = c;
        }
    }
    v[(3, 3)] = p.k_wt / p.k_theta_msc;
    v[(5, 5)] = 1.0 / (p.k_theta_gsc * p.k_g);
    Ok((m, v))
}

fn min_sym_eig(m: &Mat6) -> f64 {
    m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn lasalle_verify(model: &SmallSignalModel) -> Result<LaSalleReport> {
    let p = &model.params;
    let (m, v) = lasalle_matrices(p)?;
    let d = Vec6::from([p.b_g, p.b_msc, 1.0, 1.0, 1.0, 1.0]);
    let mut at = model.state_matrix();
    for i in 0..6 {
        for j in 0..6 {
            at[(i, j)] *= d[i] / d[j];
        }
    }
    let s = m * at + at.transpose() * m;
    let s = (s + s.transpose()) * 0.5;
    let deviation = (s + v).iter().map(|x| x.abs()).fold(0.0, f64::max);
    Ok(LaSalleReport {
        m_min_eig: min_sym_eig(&m),
        v_min_eig: min_sym_eig(&v),
        s_max_eig: -min_sym_eig(&(-s)),
        deviation,
    })
}

/// `V(x) = xᵀMx` for a state in model coordinates.
pub fn lasalle_value(p: &SmallSignalParams, z: &Vec6) -> Result<f64> {
    let (m, _) = lasalle_matrices(p)?;
    let mut x = *z;
    x[0] *= p.b_g;
    x[1] *= p.b_msc;
    Ok((x.transpose() * m * x)[(0, 0)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTrajectory {
    pub t: Vec<f64>,
    pub x: Vec<[f64; 6]>,
}

/// Response from rest to a load step `ΔP_L` applied at `t = 0`.
pub fn linear_response(model: &SmallSignalModel, delta_p_load: f64, horizon: f64, dt: f64) -> Result<LinearTrajectory> {
    if !(dt > 0.0 && horizon >= 0.0) {
        return Err(invalid("need dt > 0 and horizon >= 0"));
    }
    let m = model.state_matrix();
    let mut f = Vec6::zeros();
    for i in 0..6 {
        f[i] = model.e[i] * delta_p_load / model.t[(i, i)];
    }
    let rhs = |x: &[f64; 6], _t: f64| -> Result<[f64; 6]> { Ok((m * Vec6::from(*x) + f).into()) };
    let n = (horizon / dt).round() as usize;
    let mut traj = LinearTrajectory { t: Vec::with_capacity(n + 1), x: Vec::with_capacity(n + 1) };
    let mut x = [0.0; 6];
    traj.t.push(0.0);
    traj.x.push(x);
    for k in 0..n {
        x = rk4_step(rhs, &x, k as f64 * dt, dt)?;
        traj.t.push((k + 1) as f64 * dt);
        traj.x.push(x);
    }
    Ok(traj)
}

/// Copy of a plant with ideal PD filters, an ideal pitch actuator and the
/// limiters removed, matching the assumptions of the linear model.
pub fn linearization_plant(plant: &Plant) -> Plant {
    let mut p = plant.clone();
    p.gains.gsc.t_dc = 0.0;
    p.gains.msc.t_dc = 0.0;
    p.gains.pitch.t_servo = 0.0;
    p.gains.pitch.limiters_enabled = false;
    p
}

/// Fourth-order central-difference Jacobian of the nonlinear closed loop in
/// the reduced coordinates of the linear model.
pub fn reduced_jacobian(plant: &Plant, eq: &PlantState) -> Result<Mat6> {
    let wb = plant.pu.omega_base;
    let wm = plant.pu.machine_omega_base;
    let p_load = plant.load.value(0.0);
    let z0 = Vec6::from([
        (eq.ctrl.theta_gsc - eq.theta_g) / wb,
        (eq.ctrl.theta_msc - eq.theta_r) / wm,
        eq.omega_g,
        eq.omega_r,
        eq.v_dc,
        eq.p_g,
    ]);
    let eval = |z: &Vec6| -> Result<Vec6> {
        let mut s = *eq;
        s.ctrl.theta_gsc = eq.theta_g + wb * z[0];
        s.ctrl.theta_msc = eq.theta_r + wm * z[1];
        s.omega_g = z[2];
        s.omega_r = z[3];
        s.v_dc = z[4];
        s.p_g = z[5];
        let (d, _) = plant.derivative_with_load(&s, p_load, 0.0)?;
        Ok(Vec6::from([
            (d.ctrl.theta_gsc - d.theta_g) / wb,
            (d.ctrl.theta_msc - d.theta_r) / wm,
            d.omega_g,
            d.omega_r,
            d.v_dc,
            d.p_g,
        ]))
    };
    let steps = [3e-7, 3e-7, 1e-4, 1e-4, 1e-4, 1e-4];
    let mut jac = Mat6::zeros();
    for k in 0..6 {
        let h = steps[k];
        let at = |c: f64| -> Result<Vec6> {
            let mut z = z0;
            z[k] += c * h;
            eval(&z)
        };
        let col = (at(-2.0)? - at(2.0)? + (at(1.0)? - at(-1.0)?) * 8.0) / (12.0 * h);
        jac.set_column(k, &col);
    }
    Ok(jac)
}
