//! Aerodynamic power coefficient, mechanical power and operating-point
//! sensitivities.
//!
//! Pitch angles are in degrees throughout.

use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{invalid, Error, Result};
use crate::params::TurbineParams;

/// Betz limit on the power coefficient.
pub const BETZ_LIMIT: f64 = 16.0 / 27.0;

const LAMBDA_MIN: f64 = 0.5;
const LAMBDA_MAX: f64 = 20.0;

/// Exponential power-coefficient model
///
/// `Cp = scale·[c1·(c2/λi − c3·β − cx·β^x − c4)·exp(−c5/λi) + c6·λ]`
/// with `1/λi = 1/(λ + k1·β) − k2/(β³ + 1)`.
///
/// With `cx = 0`, `k1 = 0.08`, `k2 = 0.035` and `scale = 1` this is the
/// common textbook form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticCp {
    pub c: [f64; 6],
    pub k1: f64,
    pub k2: f64,
    #[serde(default)]
    pub cx: f64,
    #[serde(default = "one")]
    pub x: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl AnalyticCp {
    /// Textbook coefficients (0.5176, 116, 0.4, 5, 21, 0.0068).
    pub fn standard() -> Self {
        Self {
            c: [0.5176, 116.0, 0.4, 5.0, 21.0, 0.0068],
            k1: 0.08,
            k2: 0.035,
            cx: 0.0,
            x: 1.0,
            scale: 1.0,
        }
    }

    /// Coefficients fitted to a 5 MW, 63 m rotor with its optimum near λ = 9.24
    /// and a deloading branch that reaches 0.9·Cp_max at λ ≈ 12.9. Unscaled.
    pub fn fitted_5mw() -> Self {
        Self {
            c: [
                1.831_238_570_814_211_6,
                111.249_085_475_047_93,
                0.233_925_675_295_604_27,
                2.856_918_821_208_996_7,
                12.768_060_480_576_654,
                -0.000_788_713_051_391_777_4,
            ],
            k1: -0.149_519_683_644_605_6,
            k2: 0.004_172_098_632_924_836,
            cx: 0.002_621_416_641_713_438_6,
            x: 3.349_330_857_906_494_4,
            scale: 1.0,
        }
    }

    fn raw(&self, lambda: f64, beta: f64) -> f64 {
        let [c1, c2, c3, c4, c5, c6] = self.c;
        let shifted = lambda + self.k1 * beta;
        if shifted <= 0.0 {
            return c6 * lambda;
        }
        let inv = 1.0 / shifted - self.k2 / (beta.powi(3) + 1.0);
        let pitch_term = if self.cx != 0.0 { self.cx * beta.powf(self.x) } else { 0.0 };
        c1 * (c2 * inv - c3 * beta - pitch_term - c4) * (-c5 * inv).exp() + c6 * lambda
    }

    /// Rescale so that the maximum Cp delivers `rated_power` at `rated_wind`.
    pub fn calibrated(mut self, turbine: &TurbineParams) -> Result<Self> {
        let (_, raw_max) = maximize_on_grid(|l| Ok(self.raw(l, 0.0)), LAMBDA_MIN, LAMBDA_MAX)?;
        let target = turbine.rated_power / (turbine.swept_factor() * turbine.rated_wind.powi(3));
        if target > BETZ_LIMIT {
            return Err(invalid(format!(
                "rated point requires Cp = {target:.4}, above the Betz limit"
            )));
        }
        self.scale = target / raw_max;
        Ok(self)
    }
}

/// Tabulated Cp(λ, β) with bilinear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpTable {
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    /// Row-major with λ as the outer index: `values[i * beta.len() + j]`.
    pub values: Vec<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct CpRow {
    lambda: f64,
    beta_deg: f64,
    cp: f64,
}

fn strictly_increasing(axis: &[f64]) -> bool {
    axis.windows(2).all(|w| w[1] > w[0]) && axis.iter().all(|v| v.is_finite())
}

/// Index of the grid cell containing `x` and the fractional position within it.
pub(crate) fn locate(axis: &[f64], x: f64) -> Option<(usize, f64)> {
    let n = axis.len();
    if n == 0 || x < axis[0] || x > axis[n - 1] || !x.is_finite() {
        return None;
    }
    if n == 1 {
        return Some((0, 0.0));
    }
    let hi = axis.partition_point(|&a| a <= x).clamp(1, n - 1);
    let lo = hi - 1;
    Some((lo, (x - axis[lo]) / (axis[hi] - axis[lo])))
}

impl CpTable {
    pub fn new(lambda: Vec<f64>, beta: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if lambda.len() < 2 || beta.is_empty() {
            return Err(invalid("Cp table needs at least two lambda nodes and one beta node"));
        }
        if !strictly_increasing(&lambda) || !strictly_increasing(&beta) {
            return Err(invalid("Cp table axes must be strictly increasing"));
        }
        if values.len() != lambda.len() * beta.len() {
            return Err(invalid(format!(
                "Cp table has {} values, expected {}",
                values.len(),
                lambda.len() * beta.len()
            )));
        }
        if lambda[0] <= 0.0 {
            return Err(invalid("Cp table lambda axis must be positive"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("Cp table contains non-finite values"));
        }
        Ok(Self { lambda, beta, values })
    }

    /// Parse the `lambda,beta_deg,cp` CSV layout (λ outer, β inner).
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let rows: Vec<CpRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        if rows.is_empty() {
            return Err(invalid("Cp table CSV is empty"));
        }
        let mut beta = Vec::new();
        for row in &rows {
            if row.lambda != rows[0].lambda {
                break;
            }
            beta.push(row.beta_deg);
        }
        let nb = beta.len();
        if !rows.len().is_multiple_of(nb) {
            return Err(invalid("Cp table CSV is not a complete grid"));
        }
        let mut lambda = Vec::with_capacity(rows.len() / nb);
        for (k, chunk) in rows.chunks(nb).enumerate() {
            let l = chunk[0].lambda;
            for (j, row) in chunk.iter().enumerate() {
                if row.lambda != l || row.beta_deg != beta[j] {
                    return Err(invalid(format!(
                        "Cp table CSV row {} breaks the lambda-outer grid layout",
                        k * nb + j + 2
                    )));
                }
            }
            lambda.push(l);
        }
        let values = rows.iter().map(|r| r.cp).collect();
        Self::new(lambda, beta, values)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (i, &l) in self.lambda.iter().enumerate() {
            for (j, &b) in self.beta.iter().enumerate() {
                w.serialize(CpRow { lambda: l, beta_deg: b, cp: self.node(i, j) })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Sample a surface on the given grid.
    pub fn sample(surface: &CpSurface, lambda: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(lambda.len() * beta.len());
        for &l in &lambda {
            for &b in &beta {
                values.push(surface.cp(l, b)?);
            }
        }
        Self::new(lambda, beta, values)
    }

    fn node(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.beta.len() + j]
    }

    fn interpolate(&self, lambda: f64, beta: f64) -> Result<f64> {
        let (i, fl) = locate(&self.lambda, lambda).ok_or_else(|| {
            Error::Domain(format!(
                "lambda {lambda} outside table range [{}, {}]",
                self.lambda[0],
                self.lambda[self.lambda.len() - 1]
            ))
        })?;
        let (j, fb) = locate(&self.beta, beta).ok_or_else(|| {
            Error::Domain(format!(
                "beta {beta} deg outside table range [{}, {}]",
                self.beta[0],
                self.beta[self.beta.len() - 1]
            ))
        })?;
        let i1 = (i + 1).min(self.lambda.len() - 1);
        let j1 = (j + 1).min(self.beta.len() - 1);
        let a = self.node(i, j) * (1.0 - fb) + self.node(i, j1) * fb;
        let b = self.node(i1, j) * (1.0 - fb) + self.node(i1, j1) * fb;
        Ok(a * (1.0 - fl) + b * fl)
    }
}

/// Power coefficient surface Cp(λ, β).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CpSurface {
    Analytic(AnalyticCp),
    Tabulated(CpTable),
}

impl Default for CpSurface {
    fn default() -> Self {
        Self::calibrated_default()
    }
}

impl CpSurface {
    /// Fitted surface scaled to the default 5 MW turbine.
    pub fn calibrated_default() -> Self {
        static FITTED: OnceLock<AnalyticCp> = OnceLock::new();
        let fitted = FITTED.get_or_init(|| {
            AnalyticCp::fitted_5mw()
                .calibrated(&TurbineParams::default())
                .expect("default surface calibrates")
        });
        Self::Analytic(*fitted)
    }

    /// Evaluate Cp clamped to `[0, 16/27]`.
    pub fn cp(&self, lambda: f64, beta: f64) -> Result<f64> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Domain(format!("tip speed ratio must be positive, got {lambda}")));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::Domain(format!("pitch angle must be non-negative, got {beta}")));
        }
        let value = match self {
            Self::Analytic(a) => a.scale * a.raw(lambda, beta),
            Self::Tabulated(t) => t.interpolate(lambda, beta)?,
        };
        Ok(value.clamp(0.0, BETZ_LIMIT))
    }

    /// Tip-speed-ratio range searched by the solvers.
    pub fn lambda_range(&self) -> (f64, f64) {
        match self {
            Self::Analytic(_) => (LAMBDA_MIN, LAMBDA_MAX),
            Self::Tabulated(t) => (t.lambda[0], t.lambda[t.lambda.len() - 1]),
        }
    }

    /// Largest admissible pitch angle of the surface.
    pub fn beta_max(&self) -> f64 {
        match self {
            Self::Analytic(_) => 90.0,
            Self::Tabulated(t) => t.beta[t.beta.len() - 1],
        }
    }

    /// Tip-speed ratio maximising Cp at zero pitch and the maximum itself.
    pub fn find_mpp(&self) -> Result<(f64, f64)> {
        match self {
            Self::Tabulated(t) => {
                if locate(&t.beta, 0.0).is_none() {
                    return Err(Error::Domain("Cp table does not cover zero pitch".into()));
                }
                // piecewise linear in λ, so the maximum sits on a node
                let column: Vec<f64> =
                    t.lambda.iter().map(|&l| self.cp(l, 0.0)).collect::<Result<_>>()?;
                let (imax, &cmax) = column
                    .iter()
                    .enumerate()
                    .fold((0, &f64::NEG_INFINITY), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
                let cmin = column.iter().cloned().fold(f64::INFINITY, f64::min);
                if cmax - cmin < 1e-9 {
                    return Err(Error::FlatSurface);
                }
                Ok((t.lambda[imax], cmax))
            }
            Self::Analytic(_) => {
                let (lo, hi) = self.lambda_range();
                let (l, c) = maximize_on_grid(|l| self.cp(l, 0.0), lo, hi)?;
                Ok((l, c))
            }
        }
    }
}

/// Grid search at step 1e-3 followed by golden-section refinement.
fn maximize_on_grid(f: impl Fn(f64) -> Result<f64>, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let step = 1e-3;
    let n = ((hi - lo) / step).round() as usize;
    let mut best = (lo, f64::NEG_INFINITY);
    let mut worst = f64::INFINITY;
    for k in 0..=n {
        let l = lo + k as f64 * step;
        let c = f(l)?;
        if c > best.1 {
            best = (l, c);
        }
        worst = worst.min(c);
    }
    if best.1 - worst < 1e-9 {
        return Err(Error::FlatSurface);
    }
    let a = (best.0 - step).max(lo);
    let b = (best.0 + step).min(hi);
    let l = golden_max(|l| f(l).unwrap_or(f64::NEG_INFINITY), a, b, 1e-12);
    let c = f(l)?;
    Ok(if c >= best.1 { (l, c) } else { best })
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

/// λ = R·ω_r / v_w.
pub fn tip_speed_ratio(radius: f64, omega_r: f64, v_w: f64) -> Result<f64> {
    if !(v_w > 0.0) {
        return Err(Error::Domain(format!("wind speed must be positive, got {v_w}")));
    }
    Ok(radius * omega_r / v_w)
}

/// Mechanical power of the aggregated turbines (W); `omega_r` in rad/s.
pub fn wind_power(params: &TurbineParams, surface: &CpSurface, v_w: f64, omega_r: f64, beta: f64) -> Result<f64> {
    if !(omega_r > 0.0) {
        return Err(Error::Domain(format!("rotor speed must be positive, got {omega_r}")));
    }
    let lambda = tip_speed_ratio(params.radius, omega_r, v_w)?;
    let cp = surface.cp(lambda, beta)?;
    Ok(power_from_cp(params, cp, v_w))
}

/// ½ρπR²·Cp·v³·n_agg.
pub fn power_from_cp(params: &TurbineParams, cp: f64, v_w: f64) -> f64 {
    params.swept_factor() * cp * v_w.powi(3) * params.n_agg
}

/// Mechanical power in pu of the aggregated rating; `omega_pu` in pu of `omega_nom`.
pub fn wind_power_pu(params: &TurbineParams, surface: &CpSurface, v_w: f64, omega_pu: f64, beta: f64) -> Result<f64> {
    Ok(wind_power(params, surface, v_w, omega_pu * params.omega_nom, beta)? / params.power_base())
}

/// Maximum extractable power at zero pitch (W), before any rating clamp.
pub fn mpp_power(params: &TurbineParams, cp_max: f64, v_w: f64) -> f64 {
    power_from_cp(params, cp_max, v_w)
}

/// Sensitivities of per-unit mechanical power at an operating point:
/// `K_ωr = −∂P/∂ω_r` (pu/pu) and `K_β = −∂P/∂β` (pu/deg).
pub fn power_sensitivities(
    params: &TurbineParams,
    surface: &CpSurface,
    v_w: f64,
    omega_del: f64,
    beta_del: f64,
) -> Result<(f64, f64)> {
    let p = |w: f64, b: f64| wind_power_pu(params, surface, v_w, w, b);
    let hw = 1e-4;
    let mut k_omega = -(p(omega_del + hw, beta_del)? - p(omega_del - hw, beta_del)?) / (2.0 * hw);
    if k_omega.abs() < 1e-4 || (k_omega < 0.0 && k_omega > -1e-3) {
        k_omega = 0.0;
    }
    let hb = 1e-3;
    let k_beta = if beta_del >= hb {
        -(p(omega_del, beta_del + hb)? - p(omega_del, beta_del - hb)?) / (2.0 * hb)
    } else {
        -(p(omega_del, beta_del + hb)? - p(omega_del, beta_del)?) / hb
    };
    Ok((k_omega, k_beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn brute_mpp(s: &CpSurface, step: f64) -> (f64, f64) {
        let n = (13.0 / step) as usize;
        (0..=n)
            .map(|k| 2.0 + k as f64 * step)
            .map(|l| (l, s.cp(l, 0.0).unwrap()))
            .fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a })
    }

    #[test]
    fn standard_surface_mpp() {
        let s = CpSurface::Analytic(AnalyticCp::standard());
        let (l, c) = s.find_mpp().unwrap();
        let (lb, cb) = brute_mpp(&s, 1e-4);
        assert!((l - lb).abs() < 2e-4);
        assert!((c - cb).abs() < 1e-9);
        assert!((l - 8.1).abs() < 0.05);
        assert!((c - 0.48).abs() < 0.005);
    }

    #[test]
    fn calibrated_surface_mpp_and_rating() {
        let s = CpSurface::calibrated_default();
        let (l, c) = s.find_mpp().unwrap();
        let (lb, cb) = brute_mpp(&s, 1e-3);
        assert!((l - lb).abs() < 1e-3);
        assert!(c >= cb);
        assert!((9.0..=9.5).contains(&l));
        let t = TurbineParams::default();
        let p = mpp_power(&t, c, t.rated_wind);
        assert_relative_eq!(p, t.power_base(), max_relative = 1e-9);
        // first-order condition
        let h = 1e-4;
        let d = (s.cp(l + h, 0.0).unwrap() - s.cp(l - h, 0.0).unwrap()) / (2.0 * h);
        assert!(d.abs() < 1e-5);
    }

    #[test]
    fn pitching_reduces_capture() {
        let s = CpSurface::calibrated_default();
        let (l, c) = s.find_mpp().unwrap();
        assert!(s.cp(l, 25.0).unwrap() < c);
    }

    #[test]
    fn domain_errors() {
        let s = CpSurface::calibrated_default();
        assert!(matches!(s.cp(0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(s.cp(-1.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(s.cp(5.0, -1.0), Err(Error::Domain(_))));
        assert!(tip_speed_ratio(63.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn tip_speed_ratio_values() {
        assert!((tip_speed_ratio(63.0, 1.37, 11.23).unwrap() - 7.686).abs() < 1e-3);
        assert_eq!(tip_speed_ratio(63.0, 0.0, 11.23).unwrap(), 0.0);
        let a = tip_speed_ratio(63.0, 0.5, 9.0).unwrap();
        let b = tip_speed_ratio(63.0, 1.5, 9.0).unwrap();
        assert_relative_eq!(b, 3.0 * a, max_relative = 1e-14);
    }

    #[test]
    fn forced_cp_power() {
        let t = TurbineParams { n_agg: 1.0, ..Default::default() };
        // 0.5 * 1.225 * pi * 63^2 * 0.45 * 512
        let p = power_from_cp(&t, 0.45, 8.0);
        assert!((p / 1.7598e6 - 1.0).abs() < 1e-3);
        assert_eq!(power_from_cp(&t, 0.0, 8.0), 0.0);
        let t2 = TurbineParams { n_agg: 2.0, ..t };
        assert_relative_eq!(power_from_cp(&t2, 0.45, 8.0), 2.0 * p, max_relative = 1e-14);
    }

    #[test]
    fn table_node_identity_and_csv_round_trip() {
        let s = CpSurface::calibrated_default();
        let lam: Vec<f64> = (0..40).map(|k| 1.0 + 0.5 * k as f64).collect();
        let beta: Vec<f64> = (0..16).map(|k| 2.0 * k as f64).collect();
        let table = CpTable::sample(&s, lam.clone(), beta.clone()).unwrap();
        let ts = CpSurface::Tabulated(table.clone());
        assert_eq!(ts.cp(lam[7], beta[3]).unwrap(), s.cp(lam[7], beta[3]).unwrap());
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back = CpTable::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(back, table);
        assert!(matches!(ts.cp(25.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(ts.cp(5.0, 31.0), Err(Error::Domain(_))));
    }

    #[test]
    fn table_with_single_interior_peak() {
        let t = CpTable::new(vec![2.0, 4.0, 6.0, 8.0], vec![0.0, 10.0], vec![0.1, 0.0, 0.3, 0.1, 0.42, 0.2, 0.2, 0.1])
            .unwrap();
        let (l, c) = CpSurface::Tabulated(t).find_mpp().unwrap();
        assert_eq!((l, c), (6.0, 0.42));
    }

    #[test]
    fn flat_surface_rejected() {
        let t = CpTable::new(vec![2.0, 4.0], vec![0.0], vec![0.3, 0.3]).unwrap();
        assert!(matches!(CpSurface::Tabulated(t).find_mpp(), Err(Error::FlatSurface)));
    }

    #[test]
    fn malformed_tables_rejected() {
        assert!(CpTable::new(vec![2.0, 1.0], vec![0.0], vec![0.1, 0.1]).is_err());
        assert!(CpTable::new(vec![1.0, 2.0], vec![0.0], vec![0.1]).is_err());
        let csv = "lambda,beta_deg,cp\n1,0,0.1\n1,5,0.1\n2,0,0.2\n";
        assert!(CpTable::from_csv_reader(csv.as_bytes()).is_err());
    }

    #[test]
    fn sensitivities_at_mpp_and_deloaded_branch() {
        let t = TurbineParams::default();
        let s = CpSurface::calibrated_default();
        let (lm, _) = s.find_mpp().unwrap();
        let v = 8.0;
        let w_mpp = lm * v / (t.radius * t.omega_nom);
        let (kw, _) = power_sensitivities(&t, &s, v, w_mpp, 0.0).unwrap();
        assert!(kw.abs() < 1e-3);
        let (kw, _) = power_sensitivities(&t, &s, v, w_mpp * 1.2, 0.0).unwrap();
        assert!(kw > 0.0);
    }
}
