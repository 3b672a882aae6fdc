//! Deloaded operating points: overspeed first, pitch once the rotor reaches
//! its speed limit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::aero::{locate, mpp_power, wind_power_pu, CpSurface};
use crate::error::{invalid, Error, Result};
use crate::params::TurbineParams;

/// Residual tolerance on Cp for both solvers.
pub const CP_TOL: f64 = 1e-9;

/// Largest pitch angle the pitch solver will consider (degrees).
pub const BETA_SEARCH_MAX: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeloadPoint {
    pub v_w: f64,
    pub eta: f64,
    /// Overspeed solution on the zero-pitch branch, before the speed cap.
    /// NaN when that branch has no solution inside the tip-speed search range.
    pub lambda_del: f64,
    /// Rotor speed set-point (pu of `omega_nom`)
    pub omega_del: f64,
    /// Pitch set-point (degrees)
    pub beta_del: f64,
    /// Mechanical power at the set-point (pu of the aggregated rating)
    pub p_wt_del: f64,
}

impl DeloadPoint {
    /// Tip-speed ratio actually seen by the rotor at the set-point.
    pub fn lambda_op(&self, params: &TurbineParams) -> f64 {
        self.omega_del * params.omega_nom * params.radius / self.v_w
    }
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    // f(lo) > 0 >= f(hi)
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let r = f(mid)?;
        if r.abs() < 0.1 * CP_TOL {
            return Ok(mid);
        }
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    let r = f(mid)?;
    if r.abs() < CP_TOL {
        Ok(mid)
    } else {
        Err(Error::NotConverged { iterations: 200, residual: r.abs() })
    }
}

fn speed_branch(surface: &CpSurface, lambda_mpp: f64, cp_max: f64, cp_target: f64) -> Result<f64> {
    if cp_target >= cp_max {
        return Ok(lambda_mpp);
    }
    let (_, hi) = surface.lambda_range();
    let c_hi = surface.cp(hi, 0.0)?;
    if c_hi > cp_target {
        return Err(Error::NoSolution(format!(
            "Cp({hi}, 0) = {c_hi:.6} stays above the target {cp_target:.6}; overspeed alone cannot deload"
        )));
    }
    // the branch must be decreasing wherever it is above zero
    let n = 400;
    let mut prev = cp_max;
    for k in 1..=n {
        let l = lambda_mpp + (hi - lambda_mpp) * k as f64 / n as f64;
        let c = surface.cp(l, 0.0)?;
        if c > prev + 1e-12 || (c >= prev && c > 0.0) {
            return Err(invalid(format!("Cp(., 0) is not decreasing beyond the MPP near lambda = {l:.3}")));
        }
        prev = c;
    }
    bisect(lambda_mpp, hi, |l| Ok(surface.cp(l, 0.0)? - cp_target))
}

/// Tip-speed ratio on the decreasing branch where `Cp(λ, 0) = η·Cp_max`.
pub fn solve_speed_deload(surface: &CpSurface, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(invalid(format!("deloading factor must be in (0, 1], got {eta}")));
    }
    let (lambda_mpp, cp_max) = surface.find_mpp()?;
    if eta == 1.0 {
        return Ok(lambda_mpp);
    }
    speed_branch(surface, lambda_mpp, cp_max, eta * cp_max)
}

/// Pitch angle where `Cp(λ_capped, β) = η·target_cp`; zero if no pitching is needed.
pub fn solve_pitch_deload(surface: &CpSurface, lambda_capped: f64, eta: f64, target_cp: f64) -> Result<f64> {
    let target = eta * target_cp;
    let c0 = surface.cp(lambda_capped, 0.0)?;
    if c0 <= target {
        return Ok(0.0);
    }
    let b_max = BETA_SEARCH_MAX.min(surface.beta_max());
    let c_max = surface.cp(lambda_capped, b_max)?;
    if c_max > target {
        return Err(Error::NoSolution(format!(
            "Cp({lambda_capped:.4}, {b_max}) = {c_max:.6} still exceeds the target {target:.6}"
        )));
    }
    bisect(0.0, b_max, |b| Ok(surface.cp(lambda_capped, b)? - target))
}

/// Reusable solver that caches the MPP of the surface.
#[derive(Debug, Clone)]
pub struct Curtailer {
    pub params: TurbineParams,
    pub surface: CpSurface,
    pub lambda_mpp: f64,
    pub cp_max: f64,
}

impl Curtailer {
    pub fn new(params: &TurbineParams, surface: &CpSurface) -> Result<Self> {
        params.validate()?;
        let (lambda_mpp, cp_max) = surface.find_mpp()?;
        Ok(Self { params: *params, surface: surface.clone(), lambda_mpp, cp_max })
    }

    /// Rotor speed (pu) that tracks the MPP at wind speed `v_w`.
    pub fn omega_mpp(&self, v_w: f64) -> f64 {
        self.lambda_mpp * v_w / (self.params.radius * self.params.omega_nom)
    }

    /// Available power at zero pitch, clamped to the rating (pu).
    pub fn available_power(&self, v_w: f64) -> f64 {
        (mpp_power(&self.params, self.cp_max, v_w) / self.params.power_base()).min(1.0)
    }

    pub fn point(&self, v_w: f64, eta: f64) -> Result<DeloadPoint> {
        let p = &self.params;
        if !(v_w >= p.v_cut_in && v_w <= p.v_cut_out) {
            return Err(invalid(format!(
                "wind speed {v_w} m/s outside [{}, {}]",
                p.v_cut_in, p.v_cut_out
            )));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(invalid(format!("deloading factor must be in (0, 1], got {eta}")));
        }
        // above rated wind the reference is the rated power, not the MPP
        let cp_ref = self.cp_max * self.available_power(v_w) * p.power_base()
            / mpp_power(p, self.cp_max, v_w);
        let lambda_capped = p.omega_max * p.omega_nom * p.radius / v_w;
        let lambda_del = match speed_branch(&self.surface, self.lambda_mpp, self.cp_max, eta * cp_ref) {
            Ok(l) => l,
            // the required overspeed lies beyond the search range, so the cap binds anyway
            Err(Error::NoSolution(_)) if lambda_capped < self.surface.lambda_range().1 => f64::NAN,
            Err(e) => return Err(e),
        };
        let omega_speed = lambda_del * v_w / (p.radius * p.omega_nom);
        let (omega_del, beta_del) = if omega_speed <= p.omega_max {
            (omega_speed, 0.0)
        } else {
            (p.omega_max, solve_pitch_deload(&self.surface, lambda_capped, eta, cp_ref)?)
        };
        let p_wt_del = wind_power_pu(p, &self.surface, v_w, omega_del, beta_del)?;
        Ok(DeloadPoint { v_w, eta, lambda_del, omega_del, beta_del, p_wt_del })
    }
}

/// Deloaded operating point for one wind speed and deloading factor.
pub fn deload_point(params: &TurbineParams, surface: &CpSurface, v_w: f64, eta: f64) -> Result<DeloadPoint> {
    Curtailer::new(params, surface)?.point(v_w, eta)
}

/// Default wind-speed grid: 4 to 14 m/s in 0.5 m/s steps.
pub fn default_v_grid() -> Vec<f64> {
    (0..=20).map(|k| 4.0 + 0.5 * k as f64).collect()
}

/// Default deloading grid: 0.7 to 1.0 in 0.05 steps.
pub fn default_eta_grid() -> Vec<f64> {
    (0..=6).map(|k| 0.7 + 0.05 * k as f64).map(|e: f64| (e * 100.0).round() / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeloadTable {
    pub v_grid: Vec<f64>,
    pub eta_grid: Vec<f64>,
    /// Cells with wind speed as the outer index.
    pub points: Vec<DeloadPoint>,
}

#[derive(Serialize)]
struct DeloadRow {
    v_w: f64,
    eta: f64,
    lambda_del: f64,
    omega_del_pu: f64,
    beta_del_deg: f64,
}

impl DeloadTable {
    pub fn cell(&self, i: usize, j: usize) -> &DeloadPoint {
        &self.points[i * self.eta_grid.len() + j]
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for p in &self.points {
            w.serialize(DeloadRow {
                v_w: p.v_w,
                eta: p.eta,
                lambda_del: p.lambda_del,
                omega_del_pu: p.omega_del,
                beta_del_deg: p.beta_del,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(invalid(format!("{name} grid is empty")));
    }
    if !axis.windows(2).all(|w| w[1] > w[0]) {
        return Err(invalid(format!("{name} grid must be strictly increasing")));
    }
    Ok(())
}

/// Solve every cell of the grid. Cells are computed in parallel; the result
/// does not depend on scheduling.
pub fn build_table(params: &TurbineParams, surface: &CpSurface, v_grid: &[f64], eta_grid: &[f64]) -> Result<DeloadTable> {
    check_axis("wind speed", v_grid)?;
    check_axis("eta", eta_grid)?;
    let solver = Curtailer::new(params, surface)?;
    let cells: Vec<(f64, f64)> =
        v_grid.iter().flat_map(|&v| eta_grid.iter().map(move |&e| (v, e))).collect();
    let points = cells
        .par_iter()
        .map(|&(v, e)| solver.point(v, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(DeloadTable { v_grid: v_grid.to_vec(), eta_grid: eta_grid.to_vec(), points })
}

/// Bilinear interpolation of the table at `(v_w, eta)`.
pub fn lookup(table: &DeloadTable, v_w: f64, eta: f64) -> Result<DeloadPoint> {
    let (i, fv) = locate(&table.v_grid, v_w)
        .ok_or_else(|| Error::Extrapolation(format!("wind speed {v_w} m/s outside the table")))?;
    let (j, fe) = locate(&table.eta_grid, eta)
        .ok_or_else(|| Error::Extrapolation(format!("eta {eta} outside the table")))?;
    let i1 = (i + 1).min(table.v_grid.len() - 1);
    let j1 = (j + 1).min(table.eta_grid.len() - 1);
    let blend = |f: fn(&DeloadPoint) -> f64| {
        let a = f(table.cell(i, j)) * (1.0 - fe) + f(table.cell(i, j1)) * fe;
        let b = f(table.cell(i1, j)) * (1.0 - fe) + f(table.cell(i1, j1)) * fe;
        a * (1.0 - fv) + b * fv
    };
    Ok(DeloadPoint {
        v_w,
        eta,
        lambda_del: blend(|p| p.lambda_del),
        omega_del: blend(|p| p.omega_del),
        beta_del: blend(|p| p.beta_del),
        p_wt_del: blend(|p| p.p_wt_del),
    })
}
