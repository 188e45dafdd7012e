//! Admissible initial data, the Lagrangian forcing built from it, and the
//! quadratic bounds on `-g'` used by the certified constants.
//!
//! Every family is a closed form, so `theta0`, its first two derivatives and
//! the depletion `theta0(0) - theta0(y)` are exact up to rounding. The
//! depletion is evaluated without cancellation, which matters because the
//! singular profile is probed at `y` many decades below one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, ProfileViolation, Result};

/// Number of samples used when re-verifying profile invariants.
const VALIDATION_SAMPLES: usize = 10_000;

/// Number of samples of `z` in `(0, 1]` used to fit the K-bounds.
pub const K_FIT_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ProfileFamily {
    /// `(1 - (y/R)^2)^p` on `[0, R]`.
    PolyBump { radius: f64, power: f64 },
    /// `(1 - (y/R)^4)^p` on `[0, R]`; flat maximum, never admissible.
    FlatBump { radius: f64, power: f64 },
    /// `theta0 = 0`. The stationary datum: no forcing, no blowup.
    Zero { radius: f64 },
}

impl ProfileFamily {
    /// Parses a family name with its shape parameters (the support radius is
    /// given separately).
    pub fn from_name(name: &str, radius: f64, params: &[f64]) -> Result<Self> {
        let bad = |reason: &str| {
            Error::from(ProfileViolation::BadParams {
                family: name.to_string(),
                reason: reason.to_string(),
            })
        };
        if !(radius.is_finite() && radius > 0.0) {
            return Err(bad("support radius must be positive and finite"));
        }
        match name {
            "poly-bump" | "flat-bump" => {
                let power = match params {
                    [] => 3.0,
                    [p] => *p,
                    _ => return Err(bad("expected a single parameter (power)")),
                };
                if !(power.is_finite() && power > 0.0) {
                    return Err(bad("power must be positive"));
                }
                Ok(if name == "poly-bump" {
                    ProfileFamily::PolyBump { radius, power }
                } else {
                    ProfileFamily::FlatBump { radius, power }
                })
            }
            "zero" => {
                if !params.is_empty() {
                    return Err(bad("takes no parameters"));
                }
                Ok(ProfileFamily::Zero { radius })
            }
            other => Err(ProfileViolation::UnknownFamily(other.to_string()).into()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProfileFamily::PolyBump { .. } => "poly-bump",
            ProfileFamily::FlatBump { .. } => "flat-bump",
            ProfileFamily::Zero { .. } => "zero",
        }
    }

    pub fn radius(&self) -> f64 {
        match *self {
            ProfileFamily::PolyBump { radius, .. }
            | ProfileFamily::FlatBump { radius, .. }
            | ProfileFamily::Zero { radius } => radius,
        }
    }
}

/// An admissible initial datum `theta0`, supported on `[0, R]`.
///
/// Construct through [`build_profile`]; the invariants are checked there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialProfile {
    family: ProfileFamily,
}

impl InitialProfile {
    pub fn family(&self) -> ProfileFamily {
        self.family
    }

    pub fn support_radius(&self) -> f64 {
        self.family.radius()
    }

    /// `theta0(0)`.
    pub fn peak(&self) -> f64 {
        match self.family {
            ProfileFamily::Zero { .. } => 0.0,
            _ => 1.0,
        }
    }

    /// True for the stationary datum, which carries no forcing at all.
    pub fn is_degenerate(&self) -> bool {
        matches!(self.family, ProfileFamily::Zero { .. })
    }

    pub fn theta(&self, y: f64) -> f64 {
        self.peak() - self.drop(y)
    }

    /// `theta0(0) - theta0(y)`, free of cancellation for small `y`.
    pub fn drop(&self, y: f64) -> f64 {
        let y = y.abs();
        match self.family {
            ProfileFamily::Zero { .. } => 0.0,
            ProfileFamily::PolyBump { radius, power } => {
                bump_drop((y / radius).powi(2), power)
            }
            ProfileFamily::FlatBump { radius, power } => {
                bump_drop((y / radius).powi(4), power)
            }
        }
    }

    pub fn dtheta(&self, y: f64) -> f64 {
        match self.family {
            ProfileFamily::Zero { .. } => 0.0,
            ProfileFamily::PolyBump { radius, power } => {
                if y >= radius {
                    return 0.0;
                }
                let v = (y / radius).powi(2);
                -power * (1.0 - v).powf(power - 1.0) * 2.0 * y / (radius * radius)
            }
            ProfileFamily::FlatBump { radius, power } => {
                if y >= radius {
                    return 0.0;
                }
                let v = (y / radius).powi(4);
                -power * (1.0 - v).powf(power - 1.0) * 4.0 * y.powi(3) / radius.powi(4)
            }
        }
    }

    pub fn ddtheta(&self, y: f64) -> f64 {
        match self.family {
            ProfileFamily::Zero { .. } => 0.0,
            ProfileFamily::PolyBump { radius, power } => {
                if y > radius {
                    return 0.0;
                }
                let r2 = radius * radius;
                let one_minus = 1.0 - (y / radius).powi(2);
                let dv = 2.0 * y / r2;
                let mut out = -power * one_minus.powf(power - 1.0) * 2.0 / r2;
                if power != 1.0 {
                    out += power * (power - 1.0) * pow_or_zero(one_minus, power - 2.0) * dv * dv;
                }
                out
            }
            ProfileFamily::FlatBump { radius, power } => {
                if y > radius {
                    return 0.0;
                }
                let r4 = radius.powi(4);
                let one_minus = 1.0 - (y / radius).powi(4);
                let dv = 4.0 * y.powi(3) / r4;
                let mut out = -power * one_minus.powf(power - 1.0) * 12.0 * y * y / r4;
                if power != 1.0 {
                    out += power * (power - 1.0) * pow_or_zero(one_minus, power - 2.0) * dv * dv;
                }
                out
            }
        }
    }

    /// Rejects data without a strict nondegenerate maximum. The stationary
    /// datum passes [`build_profile`] but not this gate.
    pub fn require_strict_maximum(&self) -> Result<()> {
        let c = self.ddtheta(0.0);
        if c < 0.0 {
            Ok(())
        } else {
            Err(ProfileViolation::CurvatureAtOrigin(c).into())
        }
    }
}

/// `1 - (1 - v)^p` for `v` in `[0, 1]`, `1` beyond.
fn bump_drop(v: f64, power: f64) -> f64 {
    if v >= 1.0 {
        1.0
    } else {
        -(power * (-v).ln_1p()).exp_m1()
    }
}

/// `base^exp`, with the convention `0^e = 0` for `e > 0` and `0^0 = 1`.
fn pow_or_zero(base: f64, exp: f64) -> f64 {
    if base <= 0.0 {
        if exp == 0.0 {
            1.0
        } else if exp > 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        base.powf(exp)
    }
}

/// Builds a profile and re-verifies its invariants on a dense grid.
pub fn build_profile(family: ProfileFamily) -> Result<InitialProfile> {
    let profile = InitialProfile { family };
    if let ProfileFamily::FlatBump { .. } | ProfileFamily::PolyBump { .. } = family {
        validate(&profile)?;
    }
    Ok(profile)
}

fn validate(p: &InitialProfile) -> Result<()> {
    let r = p.support_radius();
    let scale = p.peak();
    for k in 0..=VALIDATION_SAMPLES {
        let y = r * k as f64 / VALIDATION_SAMPLES as f64;
        let th = p.theta(y);
        if th < 0.0 {
            return Err(ProfileViolation::Negative { y }.into());
        }
        let slope = p.dtheta(y);
        if slope > 0.0 {
            return Err(ProfileViolation::Increasing { y, slope }.into());
        }
    }
    let at_edge = p.theta(r);
    if at_edge != 0.0 {
        return Err(ProfileViolation::NonzeroAtSupportEdge(at_edge).into());
    }
    let d0 = p.dtheta(0.0);
    if d0 != 0.0 {
        return Err(ProfileViolation::SlopeAtOrigin(d0).into());
    }
    let c0 = p.ddtheta(0.0);
    if c0 >= 0.0 {
        return Err(ProfileViolation::CurvatureAtOrigin(c0).into());
    }
    let d1 = p.dtheta(r);
    let d2 = p.ddtheta(r);
    let tol = 1e-12 * scale / (r * r);
    if d1.abs() > tol * r || d2.abs() > tol {
        return Err(ProfileViolation::NotC2AtSupportEdge { d1, d2 }.into());
    }
    Ok(())
}

/// The Lagrangian forcing `g(z; eps0) = theta0(eps0 z)`, supported on
/// `[0, a]` with `a = R / eps0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Forcing {
    profile: InitialProfile,
    eps0: f64,
    a: f64,
}

impl Forcing {
    pub fn profile(&self) -> &InitialProfile {
        &self.profile
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    /// Right end of the support of `g`.
    pub fn support_end(&self) -> f64 {
        self.a
    }

    pub fn g(&self, z: f64) -> f64 {
        if z >= self.a {
            return 0.0;
        }
        self.profile.theta(self.eps0 * z)
    }

    pub fn dg(&self, z: f64) -> f64 {
        if z >= self.a {
            return 0.0;
        }
        self.eps0 * self.profile.dtheta(self.eps0 * z)
    }

    pub fn ddg(&self, z: f64) -> f64 {
        self.eps0 * self.eps0 * self.profile.ddtheta(self.eps0 * z)
    }

    /// `g(0) - g(z)` without cancellation.
    pub fn g_drop(&self, z: f64) -> f64 {
        if z >= self.a {
            return self.profile.peak();
        }
        self.profile.drop(self.eps0 * z)
    }
}

pub fn build_forcing(profile: &InitialProfile, eps0: f64) -> Result<Forcing> {
    if !(eps0 > 0.0 && eps0 <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "eps0 must lie in (0, 1], got {eps0}"
        )));
    }
    Ok(Forcing {
        profile: *profile,
        eps0,
        a: profile.support_radius() / eps0,
    })
}

/// Constants with `eps0^2 K0 z <= -g'(z) <= eps0^2 K1 z` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KBounds {
    pub k0: f64,
    pub k1: f64,
    /// The `eps0` of the forcing the bounds were sampled on. They remain valid
    /// for every smaller `eps0`, since the ratio is then sampled on a subset.
    pub eps0: f64,
    /// Sampling tolerance: the largest step between samples in `z`.
    pub sampling_step: f64,
}

impl KBounds {
    /// Shrinks `K0` and enlarges `K1` by the relative margin `m`.
    pub fn widened(&self, m: f64) -> Self {
        KBounds {
            k0: self.k0 * (1.0 - m),
            k1: self.k1 * (1.0 + m),
            ..*self
        }
    }

    /// Checks the defining inequality at `samples` uniform points of `[0, 1]`
    /// for a forcing with possibly smaller `eps0`. Returns the worst slack.
    pub fn worst_slack(&self, forcing: &Forcing, samples: usize) -> f64 {
        let e2 = forcing.eps0() * forcing.eps0();
        (0..=samples)
            .map(|k| {
                let z = k as f64 / samples as f64;
                let m = -forcing.dg(z);
                (m - e2 * self.k0 * z).min(e2 * self.k1 * z - m)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Samples the ratio `-g'(z) / (eps0^2 z)` on `(0, 1]` together with its
/// limit `-theta0''(0)` at `z -> 0`.
pub fn fit_k_bounds(forcing: &Forcing) -> Result<KBounds> {
    let e2 = forcing.eps0() * forcing.eps0();
    let limit = -forcing.ddg(0.0) / e2;
    let (mut k0, mut k1) = (limit, limit);
    for k in 1..=K_FIT_SAMPLES {
        let z = k as f64 / K_FIT_SAMPLES as f64;
        let ratio = -forcing.dg(z) / (e2 * z);
        k0 = k0.min(ratio);
        k1 = k1.max(ratio);
    }
    if k0 <= 0.0 {
        return Err(Error::KBoundsInfeasible {
            k0,
            eps0: forcing.eps0(),
        });
    }
    Ok(KBounds {
        k0,
        k1,
        eps0: forcing.eps0(),
        sampling_step: 1.0 / K_FIT_SAMPLES as f64,
    })
}
