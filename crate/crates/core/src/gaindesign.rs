//! Steady-state gain selection and the smallest achievable droop map.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::aero::{power_sensitivities, CpSurface};
use crate::control::ControlGains;
use crate::curtailment::{Curtailer, DeloadPoint};
use crate::error::{invalid, Error, Result};
use crate::params::TurbineParams;
use crate::smallsignal::theorem1_conditions;

/// Steady-state excursion limits used to size the gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSpec {
    /// Largest expected grid frequency deviation (pu)
    pub delta_omega_max: f64,
    /// Largest acceptable DC voltage deviation (pu)
    pub delta_v_max: f64,
    /// MSC gain used when the rotor has no speed headroom (pu)
    pub k_theta_msc_floor: f64,
    /// Requested droop; designs that cannot reach it are flagged
    pub target_m_p: Option<f64>,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self::table3()
    }
}

impl DesignSpec {
    /// Δω = 0.01 pu, Δv = 0.02 pu.
    pub fn table3() -> Self {
        Self { delta_omega_max: 0.01, delta_v_max: 0.02, k_theta_msc_floor: 1.0, target_m_p: None }
    }

    /// Δω = 0.005 pu with Δv = 0.01 pu, which keeps `K_θ^gsc = 0.5`.
    pub fn fig7() -> Self {
        Self { delta_omega_max: 0.005, delta_v_max: 0.01, k_theta_msc_floor: 1.0, target_m_p: None }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "table3" => Ok(Self::table3()),
            "fig7" => Ok(Self::fig7()),
            _ => Err(Error::Config(format!("unknown design preset {name:?} (expected table3 or fig7)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_omega_max > 0.0 && self.delta_v_max > 0.0) {
            return Err(invalid("excursion limits must be positive"));
        }
        if !(self.k_theta_msc_floor >= 0.0) {
            return Err(invalid("K_theta_msc floor must be non-negative"));
        }
        if let Some(m) = self.target_m_p {
            if !(m > 0.0) {
                return Err(invalid("target droop must be positive"));
            }
        }
        Ok(())
    }
}

/// `m_p = K_θ^gsc / (K_θ^msc·(K_ωr + K_β·K_p))`.
pub fn droop_coefficient(k_theta_gsc: f64, k_theta_msc: f64, k_omega: f64, k_beta: f64, k_p: f64) -> Result<f64> {
    let den = k_theta_msc * (k_omega + k_beta * k_p);
    if !(den > 0.0) {
        return Err(Error::ZeroStiffness(den));
    }
    Ok(k_theta_gsc / den)
}

/// `Δω_max / Δv_max`.
pub fn max_gsc_gain(spec: &DesignSpec) -> f64 {
    spec.delta_omega_max / spec.delta_v_max
}

/// `K_θ^gsc·(ω_del − ω_mpp)/Δω_max`, or the floor when there is no headroom.
pub fn max_msc_gain(spec: &DesignSpec, k_theta_gsc: f64, omega_del: f64, omega_mpp: f64) -> f64 {
    let headroom = omega_del - omega_mpp;
    if headroom <= 0.0 {
        spec.k_theta_msc_floor
    } else {
        k_theta_gsc * headroom / spec.delta_omega_max
    }
}

/// `(K_θ^gsc/K_θ^msc)·β_del/Δω_max`; zero without pitch reserve.
pub fn max_pitch_gain(spec: &DesignSpec, k_theta_gsc: f64, k_theta_msc: f64, beta_del: f64) -> Result<f64> {
    if !(k_theta_msc > 0.0) {
        return Err(invalid(format!("K_theta_msc must be positive, got {k_theta_msc}")));
    }
    if beta_del <= 0.0 {
        return Ok(0.0);
    }
    Ok(k_theta_gsc / k_theta_msc * beta_del / spec.delta_omega_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignStatus {
    Ok,
    /// No reserve or no stiffness: the turbine provides inertia only
    NoDroop,
    /// Droop is finite but above the requested target
    TargetInfeasible,
}

impl DesignStatus {
    pub fn name(self) -> &'static str {
        match self {
            DesignStatus::Ok => "ok",
            DesignStatus::NoDroop => "no_droop",
            DesignStatus::TargetInfeasible => "target_infeasible",
        }
    }
}

/// Result of the gain design chain at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainDesign {
    pub point: DeloadPoint,
    pub omega_mpp: f64,
    pub k_omega: f64,
    pub k_beta: f64,
    pub k_theta_gsc: f64,
    pub k_theta_msc: f64,
    pub k_p: f64,
    pub k_d_gsc: f64,
    pub k_d_msc: f64,
    pub m_p: Option<f64>,
    pub status: DesignStatus,
    pub theorem1: bool,
}

impl GainDesign {
    /// Copy the designed gains and set-points into a full gain set.
    pub fn apply(&self, base: &ControlGains) -> ControlGains {
        let mut g = *base;
        g.gsc.k_theta = self.k_theta_gsc;
        g.gsc.k_d = self.k_d_gsc;
        g.msc.k_theta = self.k_theta_msc;
        g.msc.k_d = self.k_d_msc;
        g.omega_del = self.point.omega_del;
        g.pitch.beta_del = self.point.beta_del;
        g.pitch.k_p = self.k_p;
        g
    }
}

/// Gain designer with the MPP of the surface cached.
#[derive(Debug, Clone)]
pub struct Designer {
    pub curtailer: Curtailer,
    pub spec: DesignSpec,
    /// Derivative gain of the grid-side port (pu·s)
    pub k_d_gsc: f64,
}

impl Designer {
    pub fn new(params: &TurbineParams, surface: &CpSurface, spec: &DesignSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            curtailer: Curtailer::new(params, surface)?,
            spec: *spec,
            k_d_gsc: ControlGains::default().gsc.k_d,
        })
    }

    pub fn design(&self, v_w: f64, eta: f64) -> Result<GainDesign> {
        let c = &self.curtailer;
        let point = c.point(v_w, eta)?;
        let omega_mpp = c.omega_mpp(v_w);
        let (k_omega, k_beta) = power_sensitivities(&c.params, &c.surface, v_w, point.omega_del, point.beta_del)?;
        let k_theta_gsc = max_gsc_gain(&self.spec);
        let k_d_gsc = self.k_d_gsc;
        if eta >= 1.0 {
            // MPPT operation: no reserve, MSC uses the GSC gain
            let theorem1 = theorem1_conditions(k_d_gsc, k_theta_gsc, k_d_gsc, k_theta_gsc, k_omega, k_beta, 0.0);
            return Ok(GainDesign {
                point,
                omega_mpp,
                k_omega,
                k_beta,
                k_theta_gsc,
                k_theta_msc: k_theta_gsc,
                k_p: 0.0,
                k_d_gsc,
                k_d_msc: k_d_gsc,
                m_p: None,
                status: DesignStatus::NoDroop,
                theorem1,
            });
        }
        let k_theta_msc = max_msc_gain(&self.spec, k_theta_gsc, point.omega_del, omega_mpp);
        let k_p = max_pitch_gain(&self.spec, k_theta_gsc, k_theta_msc, point.beta_del)?;
        let k_d_msc = k_d_gsc * k_theta_msc / k_theta_gsc;
        let (m_p, status) = match droop_coefficient(k_theta_gsc, k_theta_msc, k_omega, k_beta, k_p) {
            Ok(m) => match self.spec.target_m_p {
                Some(target) if m > target => (Some(m), DesignStatus::TargetInfeasible),
                _ => (Some(m), DesignStatus::Ok),
            },
            Err(Error::ZeroStiffness(_)) => (None, DesignStatus::NoDroop),
            Err(e) => return Err(e),
        };
        let theorem1 = theorem1_conditions(k_d_gsc, k_theta_gsc, k_d_msc, k_theta_msc, k_omega, k_beta, k_p);
        Ok(GainDesign {
            point,
            omega_mpp,
            k_omega,
            k_beta,
            k_theta_gsc,
            k_theta_msc,
            k_p,
            k_d_gsc,
            k_d_msc,
            m_p,
            status,
            theorem1,
        })
    }
}

/// Run the design chain at one operating point.
pub fn design_gains(params: &TurbineParams, surface: &CpSurface, v_w: f64, eta: f64, spec: &DesignSpec) -> Result<GainDesign> {
    Designer::new(params, surface, spec)?.design(v_w, eta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroopCell {
    pub v_w: f64,
    pub eta: f64,
    pub m_p: Option<f64>,
    /// `ok`, `no_droop`, `target_infeasible` or `error: ...`
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroopMap {
    pub v_grid: Vec<f64>,
    pub eta_grid: Vec<f64>,
    /// Wind speed is the outer index.
    pub cells: Vec<DroopCell>,
}

impl DroopMap {
    pub fn cell(&self, i: usize, j: usize) -> &DroopCell {
        &self.cells[i * self.eta_grid.len() + j]
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["v_w", "eta", "m_p", "status"])?;
        for c in &self.cells {
            let m = c.m_p.map(|m| m.to_string()).unwrap_or_default();
            w.write_record([c.v_w.to_string(), c.eta.to_string(), m, c.status.clone()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Designed droop over a grid of wind speeds and deloading factors. Cells
/// that fail carry their error in `status`.
pub fn droop_map(
    params: &TurbineParams,
    surface: &CpSurface,
    v_grid: &[f64],
    eta_grid: &[f64],
    spec: &DesignSpec,
) -> Result<DroopMap> {
    for (name, axis) in [("wind speed", v_grid), ("eta", eta_grid)] {
        if axis.is_empty() || !axis.windows(2).all(|w| w[1] > w[0]) {
            return Err(invalid(format!("{name} grid must be non-empty and strictly increasing")));
        }
    }
    let designer = Designer::new(params, surface, spec)?;
    let pairs: Vec<(f64, f64)> = v_grid.iter().flat_map(|&v| eta_grid.iter().map(move |&e| (v, e))).collect();
    let cells = pairs
        .par_iter()
        .map(|&(v_w, eta)| match designer.design(v_w, eta) {
            Ok(d) => DroopCell { v_w, eta, m_p: d.m_p, status: d.status.name().to_string() },
            Err(e) => DroopCell { v_w, eta, m_p: None, status: format!("error: {e}") },
        })
        .collect();
    Ok(DroopMap { v_grid: v_grid.to_vec(), eta_grid: eta_grid.to_vec(), cells })
}
