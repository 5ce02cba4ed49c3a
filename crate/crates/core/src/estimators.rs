//! Numerical TKE by three methods and the index-quality estimators built on
//! it. Everything here works on per-column values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::budget::{Denominator, MeanDissipation};
use crate::error::{Error, Result};
use crate::mesh::Topology;
use crate::stats::{resolved_tke, spanwise_average, RunningStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Emp,
    Ke,
    Tke,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Nu,
    Eta,
    K,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Emp, Method::Ke, Method::Tke];

    pub fn name(self) -> &'static str {
        match self {
            Method::Emp => "emp",
            Method::Ke => "ke",
            Method::Tke => "tke",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Nu, Family::Eta, Family::K];

    pub fn name(self) -> &'static str {
        match self {
            Family::Nu => "nu",
            Family::Eta => "eta",
            Family::K => "k",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

/// One of the nine estimators, written `iq_<family>_<method>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EstimatorId {
    pub family: Family,
    pub method: Method,
}

impl EstimatorId {
    pub fn all() -> impl Iterator<Item = EstimatorId> {
        Family::ALL
            .into_iter()
            .flat_map(|family| Method::ALL.into_iter().map(move |method| EstimatorId { family, method }))
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "iq_{}_{}", self.family.name(), self.method.name())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorId::all()
            .find(|id| id.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}

impl Serialize for EstimatorId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for EstimatorId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Tunable estimator constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConstants {
    pub alpha_nu: f64,
    pub n: f64,
    pub alpha_eta: f64,
    pub m: f64,
    pub c_nu: f64,
    pub c_n: f64,
    /// Weight of the molecular viscosity in the laminar correction.
    pub c_lam: f64,
    pub laminar_correction: bool,
    /// `k_num_tke` returns 0 below this resolved TKE.
    pub k_floor: f64,
}

impl Default for EstimatorConstants {
    fn default() -> Self {
        EstimatorConstants {
            alpha_nu: 0.05,
            n: 0.53,
            alpha_eta: 0.05,
            m: 0.5,
            c_nu: 0.094,
            c_n: 1.0,
            c_lam: 1.0,
            laminar_correction: false,
            k_floor: 1e-12,
        }
    }
}

impl EstimatorConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha_nu", self.alpha_nu),
            ("n", self.n),
            ("alpha_eta", self.alpha_eta),
            ("m", self.m),
            ("c_nu", self.c_nu),
            ("c_n", self.c_n),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("estimator constant {name} must be positive, got {v}")));
            }
        }
        if !(self.c_lam >= 0.0) || !(self.k_floor >= 0.0) {
            return Err(Error::Config("c_lam and k_floor must be non-negative".into()));
        }
        Ok(())
    }
}

#[inline]
fn signed_square(x: f64) -> f64 {
    x * x.abs()
}

/// Empirical numerical TKE, `C_n (h/Δ)^2 k_sgs`.
pub fn k_num_empirical(k_sgs: f64, h: f64, delta: f64, c_n: f64) -> f64 {
    let r = h / delta;
    c_n * r * r * k_sgs
}

/// Modelled TKE from the SGS eddy viscosity, `(ν_sgs / (C_ν Δ))^2`.
pub fn k_sgs_from_nu(nu_sgs: f64, delta: f64, c_nu: f64) -> f64 {
    let r = nu_sgs / (c_nu * delta);
    r * r
}

/// Eddy viscosity equivalent of a (signed) TKE, `sgn(k) C_ν Δ sqrt|k|`.
pub fn nu_from_k(k: f64, delta: f64, c_nu: f64) -> f64 {
    k.signum() * c_nu * delta * k.abs().sqrt()
}

/// Inverse of [`nu_from_k`], keeping the sign.
pub fn k_from_nu(nu: f64, delta: f64, c_nu: f64) -> f64 {
    signed_square(nu / (c_nu * delta))
}

/// Numerical viscosity from the mean KE dissipation over the mean strain
/// work. `None` when the denominator is below the floor.
pub fn nu_num_from_ke(eps_bar: f64, denominator: f64, floor: f64) -> Option<f64> {
    if !(denominator >= floor) || denominator <= 0.0 {
        return None;
    }
    Some(eps_bar / denominator)
}

pub fn k_num_ke(nu_num: f64, delta: f64, c_nu: f64) -> f64 {
    k_from_nu(nu_num, delta, c_nu)
}

/// Numerical TKE from the clipped mean TKE dissipation with
/// `l = V^(1/3)` and `u = sqrt(2/3 k_res)`.
pub fn k_num_tke(eps_bar_pos: f64, volume: f64, k_res: f64, k_floor: f64) -> f64 {
    if !(k_res >= k_floor) || k_res <= 0.0 || eps_bar_pos <= 0.0 {
        return 0.0;
    }
    eps_bar_pos * volume.cbrt() / (2.0 / 3.0 * k_res).sqrt()
}

#[inline]
fn clamp_unit(x: f64) -> f64 {
    if x.is_nan() {
        return 1.0;
    }
    x.clamp(0.0, 1.0)
}

/// `1 / (1 + α_ν (ν_eff/ν)^n)` with a signed power for negative ratios.
pub fn iq_nu(nu_eff: f64, nu: f64, alpha_nu: f64, n: f64) -> f64 {
    let r = nu_eff / nu;
    let p = r.signum() * r.abs().powf(n);
    let iq = 1.0 / (1.0 + alpha_nu * p);
    if !(iq > 0.0) || iq > 1.0 {
        // the signed power takes the denominator below 1 or through 0
        return if r < 0.0 { 1.0 } else { f64::MIN_POSITIVE };
    }
    iq
}

/// `1 / (1 + α_η (h/η_eff)^m)` with `η_eff = (ν^3/ε)^(1/4)`.
pub fn iq_eta(h: f64, nu: f64, eps_total: f64, alpha_eta: f64, m: f64) -> f64 {
    if !(eps_total > 0.0) {
        return 1.0;
    }
    let eta = (nu * nu * nu / eps_total).powf(0.25);
    1.0 / (1.0 + alpha_eta * (h / eta).powf(m))
}

/// Resolved fraction of the total TKE, with `k_eff = k_sgs + k_num` clamped
/// at zero.
pub fn iq_k(k_res: f64, k_sgs: f64, k_num: f64) -> f64 {
    let k_eff = (k_sgs + k_num).max(0.0);
    let total = k_res + k_eff;
    if total == 0.0 {
        return 1.0;
    }
    clamp_unit(k_res / total)
}

/// Damps the error part `1 - iq` by `ν_eff / (ν_eff + c_lam ν)`. Cells
/// without effective viscosity are declared resolved.
pub fn laminar_correction(iq: f64, nu_eff: f64, nu: f64, c_lam: f64) -> f64 {
    if !(nu_eff > 0.0) {
        return 1.0;
    }
    let c = nu_eff / (nu_eff + c_lam * nu);
    1.0 - (1.0 - iq) * c
}

/// Column inputs shared by all estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnInputs {
    /// Molecular kinematic viscosity.
    pub nu: f64,
    pub rho: f64,
    /// Column length scale `h = V^(1/3)`, volume weighted.
    pub h: Vec<f64>,
    pub delta: Vec<f64>,
    pub k_res: Vec<f64>,
    pub nu_sgs: Vec<f64>,
    /// Mean `tau_ij du_i/dx_j`, the squared strain rate `s^2`.
    pub strain: Vec<f64>,
}

impl ColumnInputs {
    pub fn from_stats(stats: &RunningStats, topo: &Topology, c_filter: f64, nu: f64, rho: f64) -> Result<Self> {
        if stats.len() != topo.n_leaves() {
            return Err(Error::Stats("statistics and mesh disagree on the leaf count".into()));
        }
        let hl: Vec<f64> = topo.volume.iter().map(|v| v.cbrt()).collect();
        let h = spanwise_average(&hl, topo);
        let delta = h.iter().map(|h| c_filter * h).collect();
        Ok(ColumnInputs {
            nu,
            rho,
            h,
            delta,
            k_res: spanwise_average(&resolved_tke(stats)?, topo),
            nu_sgs: spanwise_average(&stats.mean_nu_t, topo),
            strain: spanwise_average(&stats.mean_strain_work, topo),
        })
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericalTke {
    pub method: Method,
    pub k_num: Vec<f64>,
    pub nu_num: Vec<f64>,
    /// Columns whose value could not be formed and was set to 0.
    pub invalid: Vec<bool>,
    /// Columns where the mean dissipation was negative.
    pub negative: Vec<bool>,
}

impl NumericalTke {
    pub fn n_negative(&self) -> usize {
        self.negative.iter().filter(|x| **x).count()
    }

    pub fn n_invalid(&self) -> usize {
        self.invalid.iter().filter(|x| **x).count()
    }
}

pub fn numerical_tke_emp(cols: &ColumnInputs, k: &EstimatorConstants) -> NumericalTke {
    let n = cols.len();
    let mut out = NumericalTke {
        method: Method::Emp,
        k_num: vec![0.0; n],
        nu_num: vec![0.0; n],
        invalid: vec![false; n],
        negative: vec![false; n],
    };
    for c in 0..n {
        let k_sgs = k_sgs_from_nu(cols.nu_sgs[c], cols.delta[c], k.c_nu);
        let kn = k_num_empirical(k_sgs, cols.h[c], cols.delta[c], k.c_n);
        out.k_num[c] = kn;
        out.nu_num[c] = nu_from_k(kn, cols.delta[c], k.c_nu);
    }
    out
}

/// KE method. `mean` is the signed KE dissipation (per unit volume) and the
/// ratio is taken per unit mass.
pub fn numerical_tke_ke(
    cols: &ColumnInputs,
    mean: &MeanDissipation,
    den: &Denominator,
    k: &EstimatorConstants,
) -> Result<NumericalTke> {
    let n = cols.len();
    if mean.eps_bar.len() != n || den.value.len() != n {
        return Err(Error::Budget("KE dissipation and columns disagree in size".into()));
    }
    let mut out = NumericalTke {
        method: Method::Ke,
        k_num: vec![0.0; n],
        nu_num: vec![0.0; n],
        invalid: vec![false; n],
        negative: vec![false; n],
    };
    for c in 0..n {
        let eps = mean.eps_bar[c] / cols.rho;
        out.negative[c] = eps < 0.0;
        if den.flagged[c] {
            out.invalid[c] = true;
            continue;
        }
        match nu_num_from_ke(eps, den.value[c], 0.0) {
            Some(nu) => {
                out.nu_num[c] = nu;
                out.k_num[c] = k_num_ke(nu, cols.delta[c], k.c_nu);
            }
            None => out.invalid[c] = true,
        }
    }
    Ok(out)
}

/// TKE method from the clipped mean TKE dissipation.
pub fn numerical_tke_tke(cols: &ColumnInputs, mean: &MeanDissipation, k: &EstimatorConstants) -> Result<NumericalTke> {
    let n = cols.len();
    if mean.eps_bar.len() != n {
        return Err(Error::Budget("TKE dissipation and columns disagree in size".into()));
    }
    let mut out = NumericalTke {
        method: Method::Tke,
        k_num: vec![0.0; n],
        nu_num: vec![0.0; n],
        invalid: vec![false; n],
        negative: vec![false; n],
    };
    for c in 0..n {
        out.negative[c] = mean.eps_bar[c] < 0.0;
        out.invalid[c] = cols.k_res[c] < k.k_floor;
        let volume = cols.h[c] * cols.h[c] * cols.h[c];
        let kn = k_num_tke(mean.eps_bar_pos[c], volume, cols.k_res[c], k.k_floor);
        out.k_num[c] = kn;
        out.nu_num[c] = nu_from_k(kn, cols.delta[c], k.c_nu);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqField {
    pub id: EstimatorId,
    pub iq: Vec<f64>,
}

/// The three estimators of one numerical-TKE method.
pub fn iq_fields(cols: &ColumnInputs, num: &NumericalTke, k: &EstimatorConstants) -> [IqField; 3] {
    let n = cols.len();
    let mut f_nu = vec![0.0; n];
    let mut f_eta = vec![0.0; n];
    let mut f_k = vec![0.0; n];
    for c in 0..n {
        let nu_eff = num.nu_num[c] + cols.nu_sgs[c];
        let k_sgs = k_sgs_from_nu(cols.nu_sgs[c], cols.delta[c], k.c_nu);
        let eps_total = cols.strain[c] * (cols.nu + nu_eff);
        let mut v = [
            iq_nu(nu_eff, cols.nu, k.alpha_nu, k.n),
            iq_eta(cols.h[c], cols.nu, eps_total, k.alpha_eta, k.m),
            iq_k(cols.k_res[c], k_sgs, num.k_num[c]),
        ];
        if k.laminar_correction {
            for x in v.iter_mut() {
                *x = laminar_correction(*x, nu_eff, cols.nu, k.c_lam);
            }
        }
        f_nu[c] = v[0];
        f_eta[c] = v[1];
        f_k[c] = v[2];
    }
    let id = |family| EstimatorId { family, method: num.method };
    [
        IqField { id: id(Family::Nu), iq: f_nu },
        IqField { id: id(Family::Eta), iq: f_eta },
        IqField { id: id(Family::K), iq: f_k },
    ]
}

/// All estimators that the available budgets allow.
#[derive(Debug, Clone, PartialEq)]
pub struct IqReport {
    pub k_sgs: Vec<f64>,
    pub numerical: Vec<NumericalTke>,
    pub fields: Vec<IqField>,
}

impl IqReport {
    pub fn field(&self, id: EstimatorId) -> Option<&IqField> {
        self.fields.iter().find(|f| f.id == id)
    }

    pub fn numerical(&self, method: Method) -> Option<&NumericalTke> {
        self.numerical.iter().find(|n| n.method == method)
    }
}

/// Evaluate every estimator whose inputs are present. The empirical method
/// only needs the statistics.
pub fn estimate(
    cols: &ColumnInputs,
    ke: Option<(&MeanDissipation, &Denominator)>,
    tke: Option<&MeanDissipation>,
    k: &EstimatorConstants,
) -> Result<IqReport> {
    k.validate()?;
    if !(cols.nu > 0.0) {
        return Err(Error::Config(format!("viscosity must be positive, got {}", cols.nu)));
    }
    let mut numerical = vec![numerical_tke_emp(cols, k)];
    if let Some((m, d)) = ke {
        numerical.push(numerical_tke_ke(cols, m, d, k)?);
    }
    if let Some(m) = tke {
        numerical.push(numerical_tke_tke(cols, m, k)?);
    }
    let fields = numerical.iter().flat_map(|n| iq_fields(cols, n, k)).collect();
    let k_sgs = (0..cols.len())
        .map(|c| k_sgs_from_nu(cols.nu_sgs[c], cols.delta[c], k.c_nu))
        .collect();
    Ok(IqReport { k_sgs, numerical, fields })
}
