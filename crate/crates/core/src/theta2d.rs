//! First angular value of the 2×2 normal form `A(ρ, φ)`.
//!
//! The induced circle map on line angles is conjugate to a rigid rotation,
//! `F(θ) = Ψ_ρ(φ + Ψ_{1/ρ}(θ))`, which gives four regimes: small skewness,
//! irrational rotation (an integral over the region where `δ < 0`), resonance
//! `φ/π = 1/q`, and resonance `φ/π = p/q` with `p ≥ 2` (a finite maximization).

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{adaptive_simpson, golden_max, golden_min};

/// Lift of `θ ↦ arctan(ρ tan θ)` to a continuous increasing map of `R` with
/// `Ψ_ρ(x + π) = Ψ_ρ(x) + π`.
pub fn psi(rho: f64, x: f64) -> f64 {
    let n = (x / PI).round();
    let y = x - n * PI;
    let base = if y == FRAC_PI_2 {
        FRAC_PI_2
    } else if y == -FRAC_PI_2 {
        -FRAC_PI_2
    } else {
        (rho * y.tan()).atan()
    };
    base + n * PI
}

/// One step of the lifted angle map of `A(ρ, φ)`.
pub fn iterate_map(rho: f64, phi: f64, theta: f64) -> f64 {
    psi(rho, phi + psi(1.0 / rho, theta))
}

/// `θ_j = Ψ_ρ(jφ + Ψ_{1/ρ}(θ₀))`, the `j`-th iterate in closed form.
pub fn orbit_closed_form(rho: f64, phi: f64, theta0: f64, j: u64) -> f64 {
    psi(rho, j as f64 * phi + psi(1.0 / rho, theta0))
}

/// `δ(θ) = 2Ψ_ρ(θ) − 2Ψ_ρ(θ + φ) + π`.
pub fn delta(rho: f64, phi: f64, theta: f64) -> f64 {
    2.0 * psi(rho, theta) - 2.0 * psi(rho, theta + phi) + PI
}

/// Skewness of `A(ρ, φ)`: `½(ρ + 1/ρ)|sin φ|`.
pub fn normal_skew(rho: f64, phi: f64) -> f64 {
    0.5 * (rho + 1.0 / rho) * phi.sin().abs()
}

/// Angle above which `A(ρ, ·)` has skewness above one.
pub fn critical_phi(rho: f64) -> f64 {
    (2.0 / (rho + 1.0 / rho)).min(1.0).asin()
}

/// Endpoints `0 < θ₋ < θ₊ < π/2` of the interval on which `δ < 0`.
pub fn theta_pm(rho: f64, phi: f64) -> Result<(f64, f64)> {
    check_params(rho, phi)?;
    if phi > FRAC_PI_2 {
        return Err(Error::ParamRange(format!("theta_pm needs phi <= pi/2, got {phi}")));
    }
    let skew = normal_skew(rho, phi);
    let arg = 2.0 / (phi.tan() * (1.0 / rho - rho));
    if !(skew > 1.0) || !(arg < 1.0) {
        return Err(Error::NoNegativeRegion { skew });
    }
    let tm = 0.5 * arg.asin();
    let tp = FRAC_PI_2 - tm;
    Ok((psi(1.0 / rho, tm), psi(1.0 / rho, tp)))
}

/// `β = 2 / (tan φ (1/ρ − ρ))`; `+∞` at `ρ = 1`.
pub fn beta_tan(rho: f64, phi: f64) -> f64 {
    let a = 1.0 / rho - rho;
    if a == 0.0 {
        return f64::INFINITY;
    }
    2.0 / (phi.tan() * a)
}

/// `β` through the skewness, `√(1 + 4(1 − skew²)/(1/ρ − ρ)²) / skew`, valid for
/// every `φ` in `(0, π)` (it equals [`beta_tan`] on `(0, π/2)`).
pub fn beta(rho: f64, phi: f64) -> f64 {
    let a = 1.0 / rho - rho;
    if a == 0.0 {
        return f64::INFINITY;
    }
    let s = normal_skew(rho, phi);
    (1.0 + 4.0 * (1.0 - s * s) / (a * a)).max(0.0).sqrt() / s
}

/// The skewness expression without the `1/skew` factor. It agrees with [`beta`]
/// only at skewness one, but shares the property `≥ 1 ⇔ skew ≤ 1`.
pub fn beta_unnormalized(rho: f64, phi: f64) -> f64 {
    let a = 1.0 / rho - rho;
    if a == 0.0 {
        return f64::INFINITY;
    }
    let s = normal_skew(rho, phi);
    (1.0 + 4.0 * (1.0 - s * s) / (a * a)).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RationalApprox {
    pub p: u64,
    pub q: u64,
    /// `|φ/π − p/q|`.
    pub err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tag")]
pub enum ThetaCase {
    SkewBounded,
    Irrational,
    ResonantUnit { q: u64 },
    Resonant { p: u64, q: u64 },
}

impl ThetaCase {
    pub fn label(&self) -> String {
        match self {
            ThetaCase::SkewBounded => "skew-bounded".into(),
            ThetaCase::Irrational => "irrational".into(),
            ThetaCase::ResonantUnit { q } => format!("resonant(1/{q})"),
            ThetaCase::Resonant { p, q } => format!("resonant({p}/{q})"),
        }
    }
}

/// Continued-fraction convergents `p/q` of `x ≥ 0` with `q ≤ q_max`.
pub fn convergents(x: f64, q_max: u64) -> Vec<RationalApprox> {
    let mut out = Vec::new();
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut rem = x;
    for _ in 0..64 {
        let a = rem.floor();
        if a > 1e15 {
            break;
        }
        let a = a as u64;
        let h = a.saturating_mul(h1).saturating_add(h0);
        let k = a.saturating_mul(k1).saturating_add(k0);
        if k > q_max || k == 0 {
            break;
        }
        out.push(RationalApprox { p: h, q: k, err: (x - h as f64 / k as f64).abs() });
        let frac = rem - a as f64;
        if frac < 1e-15 {
            break;
        }
        rem = 1.0 / frac;
        h0 = h1;
        h1 = h;
        k0 = k1;
        k1 = k;
    }
    out
}

/// Resonance detection: the first convergent of `φ/π` with denominator at most
/// `q_max` lying within `tol`. Returns `Irrational` plus the best convergent
/// seen when none qualifies.
pub fn classify_phi(phi: f64, q_max: u64, tol: f64) -> (ThetaCase, Option<RationalApprox>) {
    let x = phi / PI;
    let conv = convergents(x, q_max);
    for c in &conv {
        if c.p > 0 && c.err <= tol {
            let case = if c.p == 1 { ThetaCase::ResonantUnit { q: c.q } } else { ThetaCase::Resonant { p: c.p, q: c.q } };
            return (case, Some(*c));
        }
    }
    (ThetaCase::Irrational, conv.into_iter().filter(|c| c.p > 0).last())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThetaOptions {
    pub q_max: u64,
    pub rational_tol: f64,
    pub quad_tol: f64,
}

impl Default for ThetaOptions {
    fn default() -> Self {
        ThetaOptions { q_max: 1000, rational_tol: 1e-9, quad_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Theta2DReport {
    pub rho: f64,
    pub phi: f64,
    pub skew: f64,
    pub case: ThetaCase,
    pub theta1: f64,
    /// Minimum of the resonant sum (resonant `p ≥ 2` only).
    pub theta1_min: Option<f64>,
    /// Maximizing initial angle (resonant `p ≥ 2` only).
    pub argmax_theta: Option<f64>,
    /// Quadrature error estimate (irrational case only).
    pub quad_error: Option<f64>,
    pub rational: Option<RationalApprox>,
    /// Value of the competing branch when `φ/π` is close to a rational:
    /// the irrational integral for resonant cases, the resonant value otherwise.
    pub alternative_theta1: Option<f64>,
    pub note: Option<String>,
}

fn check_params(rho: f64, phi: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::ParamRange(format!("rho = {rho} not in (0, 1]")));
    }
    if !(phi > 0.0 && phi < PI) {
        return Err(Error::ParamRange(format!("phi = {phi} not in (0, pi)")));
    }
    Ok(())
}

/// `φ + (1/π) ∫_{θ₋}^{θ₊} δ`; `(value, error estimate)`. Requires skew > 1, `φ ≤ π/2`.
pub fn irrational_value(rho: f64, phi: f64, quad_tol: f64) -> Result<(f64, f64)> {
    let (lo, hi) = theta_pm(rho, phi)?;
    let q = adaptive_simpson(|t| delta(rho, phi, t), lo, hi, quad_tol * PI);
    Ok((phi + q.value / PI, q.error / PI))
}

/// `Σ_{j=1}^{q} min(θ_j − θ_{j−1}, θ_{j−1} + π − θ_j)` along the orbit of `θ`.
pub fn resonant_sum(rho: f64, phi: f64, q: u64, theta: f64) -> f64 {
    let base = psi(1.0 / rho, theta);
    let mut prev = theta;
    let mut total = 0.0;
    for j in 1..=q {
        let next = psi(rho, j as f64 * phi + base);
        let step = next - prev;
        total += step.min(PI - step);
        prev = next;
    }
    total
}

/// Extrema of `(1/q)·resonant_sum` over `θ ∈ [0, π/2]`: `(max, argmax, min)`.
/// Grid of `20q` points, then golden-section refinement in the neighbouring
/// cells of the best grid point.
pub fn resonant_extrema(rho: f64, phi: f64, q: u64) -> (f64, f64, f64) {
    let n = (20 * q).max(40) as usize;
    let h = FRAC_PI_2 / n as f64;
    let vals: Vec<f64> = (0..=n).map(|i| resonant_sum(rho, phi, q, i as f64 * h)).collect();
    let imax = (0..=n).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    let imin = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    let bracket = |i: usize| (i.saturating_sub(1) as f64 * h, (i + 1).min(n) as f64 * h);
    let (a, b) = bracket(imax);
    let (mut xmax, mut vmax) = golden_max(|t| resonant_sum(rho, phi, q, t), a, b, 1e-10);
    if vals[imax] > vmax {
        xmax = imax as f64 * h;
        vmax = vals[imax];
    }
    let (a, b) = bracket(imin);
    let (_, mut vmin) = golden_min(|t| resonant_sum(rho, phi, q, t), a, b, 1e-10);
    vmin = vmin.min(vals[imin]);
    let qf = q as f64;
    (vmax / qf, xmax, vmin / qf)
}

/// `θ₁(A(ρ, φ))` by the four-case formula.
pub fn theta1_normal(rho: f64, phi: f64, opts: &ThetaOptions) -> Result<Theta2DReport> {
    check_params(rho, phi)?;
    let phi_eff = if phi > FRAC_PI_2 { PI - phi } else { phi };
    let skew = normal_skew(rho, phi);
    let mut report = Theta2DReport {
        rho,
        phi,
        skew,
        case: ThetaCase::SkewBounded,
        theta1: phi_eff,
        theta1_min: None,
        argmax_theta: None,
        quad_error: None,
        rational: None,
        alternative_theta1: None,
        note: None,
    };
    if skew <= 1.0 {
        return Ok(report);
    }
    let (case, approx) = classify_phi(phi_eff, opts.q_max, opts.rational_tol);
    report.case = case;
    report.rational = approx;
    let irr = || irrational_value(rho, phi_eff, opts.quad_tol);
    match case {
        ThetaCase::SkewBounded => unreachable!("classify_phi never reports skew-bounded"),
        ThetaCase::ResonantUnit { .. } => {
            report.theta1 = phi_eff;
            if let Ok((v, _)) = irr() {
                report.alternative_theta1 = Some(v);
            }
        }
        ThetaCase::Resonant { p, q } => {
            let phi_r = p as f64 * PI / q as f64;
            let (vmax, arg, vmin) = resonant_extrema(rho, phi_r, q);
            report.theta1 = vmax;
            report.theta1_min = Some(vmin);
            report.argmax_theta = Some(arg);
            if let Ok((v, _)) = irr() {
                report.alternative_theta1 = Some(v);
            }
        }
        ThetaCase::Irrational => {
            let (v, err) = irr()?;
            report.theta1 = v;
            report.quad_error = Some(err);
            if let Some(c) = approx {
                if c.err < 1e-6 {
                    let phi_r = c.p as f64 * PI / c.q as f64;
                    let alt = if c.p == 1 { phi_r } else { resonant_extrema(rho, phi_r, c.q).0 };
                    report.alternative_theta1 = Some(alt);
                }
            }
        }
    }
    if let Some(c) = approx {
        if c.err < 1e-6 && c.q <= opts.q_max {
            report.note = Some(format!(
                "phi/pi lies within {:.3e} of {}/{}; resonant and irrational branches differ, see alternative_theta1",
                c.err, c.p, c.q
            ));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn psi_examples() {
        assert_eq!(psi(0.3, 0.0), 0.0);
        assert_eq!(psi(0.3, FRAC_PI_2), FRAC_PI_2);
        assert_eq!(psi(0.3, -FRAC_PI_2), -FRAC_PI_2);
        assert!((psi(0.5, FRAC_PI_4) - 0.5f64.atan()).abs() < 1e-15);
        assert!((psi(0.5, FRAC_PI_4) - 0.463647609).abs() < 1e-9);
        assert_eq!(psi(1.0, 1.234), 1.234);
    }

    #[test]
    fn map_examples() {
        assert!((iterate_map(1.0, 0.4, 0.3) - 0.7).abs() < 1e-15);
        let (r, p) = (1.0 / 7.0, 1.4);
        assert!((iterate_map(r, p, 0.2 + PI) - iterate_map(r, p, 0.2) - PI).abs() < 1e-13);
        let mut t = 0.0;
        for _ in 0..3 {
            t = iterate_map(r, p, t);
        }
        assert!((t - psi(r, 3.0 * 1.4)).abs() < 1e-12);
    }

    #[test]
    fn delta_examples() {
        assert!((delta(1.0, 0.3, 0.7) - (PI - 0.6)).abs() < 1e-14);
        assert!(delta(0.2, FRAC_PI_2, 0.0).abs() < 1e-15);
    }

    #[test]
    fn theta_pm_requires_large_skew() {
        let rho = 0.5;
        let phi = critical_phi(rho);
        assert!(matches!(theta_pm(rho, phi * 0.99), Err(Error::NoNegativeRegion { .. })));
        let (lo, hi) = theta_pm(1.0 / 7.0, 1.4).unwrap();
        assert!(0.0 < lo && lo < hi && hi < FRAC_PI_2);
        assert!(delta(1.0 / 7.0, 1.4, 0.5 * (lo + hi)) < 0.0);
    }

    #[test]
    fn beta_forms() {
        assert_eq!(beta(1.0, 0.4), f64::INFINITY);
        let rho = 0.3;
        let pc = critical_phi(rho);
        assert!((beta(rho, pc) - 1.0).abs() < 1e-12);
        assert!((beta_unnormalized(rho, pc) - 1.0).abs() < 1e-12);
        assert!(beta(rho, 0.5 * pc) > 1.0);
        let b1 = beta(1.0 / 7.0, 1.4);
        assert!(b1 < 1.0);
        assert!((b1 - beta_tan(1.0 / 7.0, 1.4)).abs() < 1e-12);
    }

    #[test]
    fn classification() {
        assert_eq!(classify_phi(PI / 5.0, 1000, 1e-9).0, ThetaCase::ResonantUnit { q: 5 });
        assert_eq!(classify_phi(2.0 * PI / 5.0, 1000, 1e-9).0, ThetaCase::Resonant { p: 2, q: 5 });
        assert_eq!(classify_phi(1.0, 64, 1e-12).0, ThetaCase::Irrational);
    }

    #[test]
    fn case_values() {
        let o = ThetaOptions::default();
        let r = theta1_normal(1.0, 0.3, &o).unwrap();
        assert_eq!(r.case, ThetaCase::SkewBounded);
        assert_eq!(r.theta1, 0.3);
        let r = theta1_normal(1.0 / 7.0, PI / 5.0, &o).unwrap();
        assert_eq!(r.case, ThetaCase::ResonantUnit { q: 5 });
        assert_eq!(r.theta1, PI / 5.0);
        let r = theta1_normal(1.0 / 7.0, 1.0, &o).unwrap();
        assert_eq!(r.case, ThetaCase::Irrational);
        assert!(r.theta1 < 1.0);
        assert!(r.quad_error.unwrap() <= o.quad_tol);
        let r = theta1_normal(1.0 / 7.0, 2.0 * PI / 5.0, &o).unwrap();
        assert_eq!(r.case, ThetaCase::Resonant { p: 2, q: 5 });
        assert!(r.theta1_min.unwrap() <= r.theta1);
        assert!(r.argmax_theta.is_some());
        assert!(theta1_normal(1.2, 1.0, &o).is_err());
        assert!(theta1_normal(0.5, 0.0, &o).is_err());
    }

    #[test]
    fn obtuse_angles_reduce() {
        let o = ThetaOptions::default();
        let a = theta1_normal(0.2, 2.0, &o).unwrap().theta1;
        let b = theta1_normal(0.2, PI - 2.0, &o).unwrap().theta1;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn convergents_of_pi_fraction() {
        let c = convergents(1.0 / PI, 1000);
        let qs: Vec<u64> = c.iter().map(|r| r.q).collect();
        assert_eq!(qs, vec![1, 3, 22, 333, 355]);
    }
}
