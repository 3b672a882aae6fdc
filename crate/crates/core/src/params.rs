//! Physical parameters of the turbine, synchronous generator and network, and
//! the conversion of those parameters to the per-unit system used by the plant.
//!
//! Power is expressed on the system base `s_base` (50 MVA by default, the
//! aggregate rating of ten 5 MW turbines). Rotor speed is expressed in pu of
//! the nominal rotor speed, grid frequency in pu of `f_base`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// Turbine constants. Aerodynamic power scales linearly with `n_agg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurbineParams {
    /// Air density (kg/m³)
    pub rho: f64,
    /// Rotor radius (m)
    pub radius: f64,
    /// Rotor, blades and generator inertia of one turbine (kg·m²)
    pub inertia: f64,
    /// Nominal rotor speed, the rotor-speed base (rad/s)
    pub omega_nom: f64,
    /// Maximum rotor speed (pu of `omega_nom`)
    pub omega_max: f64,
    /// Rated electrical power of one turbine (W)
    pub rated_power: f64,
    /// Wind speed at which rated power is reached (m/s)
    pub rated_wind: f64,
    /// Number of identical aggregated turbines
    pub n_agg: f64,
    pub v_cut_in: f64,
    pub v_cut_out: f64,
}

impl Default for TurbineParams {
    fn default() -> Self {
        Self {
            rho: 1.225,
            radius: 63.0,
            inertia: 35.328e6,
            omega_nom: 1.37,
            omega_max: 1.2,
            rated_power: 5.0e6,
            rated_wind: 11.23,
            n_agg: 10.0,
            v_cut_in: 3.0,
            v_cut_out: 25.0,
        }
    }
}

impl TurbineParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho", self.rho),
            ("radius", self.radius),
            ("inertia", self.inertia),
            ("omega_nom", self.omega_nom),
            ("omega_max", self.omega_max),
            ("rated_power", self.rated_power),
            ("rated_wind", self.rated_wind),
            ("n_agg", self.n_agg),
            ("v_cut_in", self.v_cut_in),
            ("v_cut_out", self.v_cut_out),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(format!("turbine {name} must be positive, got {value}")));
            }
        }
        if self.v_cut_out <= self.v_cut_in {
            return Err(invalid("turbine cut-out wind speed must exceed cut-in"));
        }
        Ok(())
    }

    /// Swept-area factor ½ρπR² (kg/m).
    pub fn swept_factor(&self) -> f64 {
        0.5 * self.rho * PI * self.radius * self.radius
    }

    /// Power base of the aggregated turbine (W).
    pub fn power_base(&self) -> f64 {
        self.rated_power * self.n_agg
    }

    /// Maximum rotor speed in rad/s.
    pub fn omega_max_rad(&self) -> f64 {
        self.omega_max * self.omega_nom
    }
}

/// Synchronous generator with first-order turbine/governor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgParams {
    /// Inertia constant on the machine rating (s)
    pub h: f64,
    /// Turbine/governor time constant (s)
    pub t_g: f64,
    /// Governor gain on the machine rating (pu/pu, inverse of droop)
    pub k_g: f64,
    /// Machine rating (VA)
    pub rating: f64,
}

impl Default for SgParams {
    fn default() -> Self {
        Self {
            h: 4.0,
            t_g: 0.5,
            k_g: 20.0,
            rating: 210.0e6,
        }
    }
}

impl SgParams {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("h", self.h), ("t_g", self.t_g), ("k_g", self.k_g), ("rating", self.rating)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(format!("sg {name} must be positive, got {value}")));
            }
        }
        Ok(())
    }
}

/// Lossless network, DC link and per-unit bases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkParams {
    /// Machine-side susceptance (pu on `s_base`)
    pub b_msc: f64,
    /// GSC to SG bus susceptance (pu on `s_base`)
    pub b_g: f64,
    /// System power base (VA)
    pub s_base: f64,
    /// Grid frequency base (Hz)
    pub f_base: f64,
    /// Electrical angular frequency of the PMSG terminal at 1 pu rotor speed (rad/s)
    pub machine_omega_base: f64,
    /// DC voltage base (V)
    pub v_dc_base: f64,
    /// DC-link capacitance of one turbine (F)
    pub dc_capacitance: f64,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            b_msc: 1.5,
            b_g: 3.0,
            s_base: 50.0e6,
            f_base: 50.0,
            machine_omega_base: 2.0 * PI * 50.0,
            v_dc_base: 7.92e3,
            dc_capacitance: 31.88e-3,
        }
    }
}

impl NetworkParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("b_msc", self.b_msc),
            ("b_g", self.b_g),
            ("s_base", self.s_base),
            ("f_base", self.f_base),
            ("machine_omega_base", self.machine_omega_base),
            ("v_dc_base", self.v_dc_base),
            ("dc_capacitance", self.dc_capacitance),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(format!("network {name} must be positive, got {value}")));
            }
        }
        Ok(())
    }

    /// Grid electrical angular frequency base (rad/s).
    pub fn omega_base(&self) -> f64 {
        2.0 * PI * self.f_base
    }
}

/// Per-unit constants of the closed loop, derived from physical parameters.
///
/// The rotor, DC link and SG obey `J ω dω/dt = ΔP` and `C v dv/dt = ΔP` with
/// powers in pu of `s_base`, speeds and voltages in pu and time in seconds, so
/// `J` and `C` carry units of seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerUnit {
    /// Aggregated rotor inertia (s)
    pub j_wt: f64,
    /// Aggregated DC-link capacitance (s)
    pub c_dc: f64,
    /// SG inertia on system base (s)
    pub j_g: f64,
    /// SG governor gain on system base (pu/pu)
    pub k_g: f64,
    pub t_g: f64,
    /// Turbine power base expressed on the system base
    pub wt_power_scale: f64,
    pub omega_base: f64,
    pub machine_omega_base: f64,
    pub b_g: f64,
    pub b_msc: f64,
}

impl PerUnit {
    pub fn new(turbine: &TurbineParams, sg: &SgParams, network: &NetworkParams) -> Result<Self> {
        turbine.validate()?;
        sg.validate()?;
        network.validate()?;
        let s = network.s_base;
        Ok(Self {
            j_wt: turbine.inertia * turbine.n_agg * turbine.omega_nom.powi(2) / s,
            c_dc: network.dc_capacitance * turbine.n_agg * network.v_dc_base.powi(2) / s,
            j_g: 2.0 * sg.h * sg.rating / s,
            k_g: sg.k_g * sg.rating / s,
            t_g: sg.t_g,
            wt_power_scale: turbine.power_base() / s,
            omega_base: network.omega_base(),
            machine_omega_base: network.machine_omega_base,
            b_g: network.b_g,
            b_msc: network.b_msc,
        })
    }
}
