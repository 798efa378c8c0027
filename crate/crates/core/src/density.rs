//! Base densities and the skewed pivot-blend construction.
//!
//! A pivot-blend distribution `SP(φ; σ, ν, m)` conditions a base density `φ`
//! on either side of the pivot `m`, stretches the left piece by `σ` and the
//! right piece by `ν` about `m`, and mixes the two with the unique weight that
//! keeps the result continuous at `m`:
//!
//! ```text
//! f(y) = [φ((y-m)/σ + m)·1{y≤m} + φ((y-m)/ν + m)·1{y>m}] / [σΦ(m) + ν(1-Φ(m))]
//! ```
//!
//! Ties at `y = m` always go to the left branch.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::numeric::{
    self, erf, integrate_pieces, invert_monotone, normal_cdf, normal_quantile, LN_SQRT_2PI,
};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const FRAC_2_SQRT_2PI: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Default Huber threshold (95% Gaussian efficiency).
pub const HUBER_DEFAULT_DELTA: f64 = 1.345;

/// Density used as the tail threshold when truncating infinite supports.
const TAIL_PDF: f64 = 1e-16;

/// The shape of a base density. Serialized as `{"kind": ..., "params": {...}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum BaseKind {
    Gaussian,
    Laplace,
    /// Standard (maximum) Gumbel.
    Gumbel,
    HalfNormal,
    MaxwellBoltzmann,
    DoubleRayleigh,
    /// Generalized double-Gamma `p/(2γ^d Γ(d/p)) |y|^(d-1) exp(-|y|^p/γ^p)`.
    /// `γ = d = p = 1` is the Laplace density.
    Gdg { gamma: f64, d: f64, p: f64 },
    Exponential,
    /// Normalized `exp(-huber_δ(y))`.
    HuberPseudo { delta: f64 },
}

impl Default for BaseKind {
    fn default() -> Self {
        BaseKind::Gaussian
    }
}

/// A validated base density with its normalizing constant computed once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BaseKind", into = "BaseKind")]
pub struct BaseDensity {
    kind: BaseKind,
    log_norm: f64,
}

impl TryFrom<BaseKind> for BaseDensity {
    type Error = Error;

    fn try_from(kind: BaseKind) -> Result<Self> {
        BaseDensity::new(kind)
    }
}

impl From<BaseDensity> for BaseKind {
    fn from(b: BaseDensity) -> Self {
        b.kind
    }
}

impl Default for BaseDensity {
    fn default() -> Self {
        BaseDensity::gaussian()
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl BaseDensity {
    pub fn new(kind: BaseKind) -> Result<Self> {
        let ln2 = std::f64::consts::LN_2;
        let log_norm = match kind {
            BaseKind::Gaussian => LN_SQRT_2PI,
            BaseKind::Laplace | BaseKind::DoubleRayleigh => ln2,
            BaseKind::Gumbel | BaseKind::Exponential => 0.0,
            BaseKind::HalfNormal | BaseKind::MaxwellBoltzmann => LN_SQRT_2PI - ln2,
            BaseKind::Gdg { gamma, d, p } => {
                positive("gdg gamma", gamma)?;
                positive("gdg d", d)?;
                positive("gdg p", p)?;
                ln2 + d * gamma.ln() + ln_gamma(d / p) - p.ln()
            }
            BaseKind::HuberPseudo { delta } => {
                positive("huber delta", delta)?;
                let mass = numeric::SQRT_2PI * (2.0 * normal_cdf(delta) - 1.0)
                    + 2.0 * (-0.5 * delta * delta).exp() / delta;
                mass.ln()
            }
        };
        Ok(BaseDensity { kind, log_norm })
    }

    pub fn gaussian() -> Self {
        BaseDensity {
            kind: BaseKind::Gaussian,
            log_norm: LN_SQRT_2PI,
        }
    }

    pub fn laplace() -> Self {
        BaseDensity::new(BaseKind::Laplace).expect("parameter-free")
    }

    pub fn huber(delta: f64) -> Result<Self> {
        BaseDensity::new(BaseKind::HuberPseudo { delta })
    }

    pub fn kind(&self) -> BaseKind {
        self.kind
    }

    /// Closed support `(lo, hi)`; infinite ends are `±∞`.
    pub fn support(&self) -> (f64, f64) {
        match self.kind {
            BaseKind::HalfNormal | BaseKind::MaxwellBoltzmann | BaseKind::Exponential => {
                (0.0, f64::INFINITY)
            }
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Points where the density is not smooth (kinks, singularities, edges).
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.kind {
            BaseKind::Laplace | BaseKind::DoubleRayleigh | BaseKind::Gdg { .. } => vec![0.0],
            BaseKind::HuberPseudo { delta } => vec![-delta, delta],
            _ => vec![],
        }
    }

    fn in_support(&self, y: f64) -> bool {
        let (lo, hi) = self.support();
        y >= lo && y <= hi
    }

    /// Negative log-density `ρ(y) = -log φ(y)`; `+∞` outside the support.
    pub fn loss(&self, y: f64) -> f64 {
        if !self.in_support(y) || y.is_nan() {
            return f64::INFINITY;
        }
        let raw = match self.kind {
            BaseKind::Gaussian | BaseKind::HalfNormal => 0.5 * y * y,
            BaseKind::Laplace => y.abs(),
            BaseKind::Gumbel => y + (-y).exp(),
            BaseKind::MaxwellBoltzmann => {
                if y == 0.0 {
                    return f64::INFINITY;
                }
                0.5 * y * y - 2.0 * y.ln()
            }
            BaseKind::DoubleRayleigh => {
                if y == 0.0 {
                    return f64::INFINITY;
                }
                0.5 * y * y - y.abs().ln()
            }
            BaseKind::Gdg { gamma, d, p } => {
                let a = y.abs();
                if a == 0.0 {
                    if d > 1.0 {
                        return f64::INFINITY;
                    } else if d < 1.0 {
                        return f64::NEG_INFINITY;
                    }
                    0.0
                } else {
                    (a / gamma).powf(p) - (d - 1.0) * a.ln()
                }
            }
            BaseKind::Exponential => y,
            BaseKind::HuberPseudo { delta } => huber_rho(y, delta),
        };
        raw + self.log_norm
    }

    /// Derivative `ρ'(y)`. At kinks the value `0` (Laplace at 0) or the
    /// one-sided limit is returned; outside the support the result is `0`.
    pub fn loss_deriv(&self, y: f64) -> f64 {
        if !self.in_support(y) {
            return 0.0;
        }
        match self.kind {
            BaseKind::Gaussian | BaseKind::HalfNormal => y,
            BaseKind::Laplace => {
                if y > 0.0 {
                    1.0
                } else if y < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            BaseKind::Gumbel => 1.0 - (-y).exp(),
            BaseKind::MaxwellBoltzmann => y - 2.0 / y,
            BaseKind::DoubleRayleigh => y - 1.0 / y,
            BaseKind::Gdg { gamma, d, p } => {
                if y == 0.0 {
                    return 0.0;
                }
                let a = y.abs();
                y.signum() * p * a.powf(p - 1.0) / gamma.powf(p) - (d - 1.0) / y
            }
            BaseKind::Exponential => 1.0,
            BaseKind::HuberPseudo { delta } => y.clamp(-delta, delta),
        }
    }

    /// True when `ρ` never decreases on the support, so the likelihood of a
    /// location family always pushes the smallest residual onto the lower edge.
    pub fn loss_nondecreasing(&self) -> bool {
        matches!(self.kind, BaseKind::HalfNormal | BaseKind::Exponential)
    }

    /// `sup |ρ'|` when it is finite.
    pub fn loss_deriv_bound(&self) -> Option<f64> {
        match self.kind {
            BaseKind::Laplace | BaseKind::Exponential => Some(1.0),
            BaseKind::HuberPseudo { delta } => Some(delta),
            BaseKind::Gdg { gamma, d, p } if d == 1.0 && p == 1.0 => Some(1.0 / gamma),
            _ => None,
        }
    }

    pub fn pdf(&self, y: f64) -> f64 {
        (-self.loss(y)).exp()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y.is_nan() {
            return f64::NAN;
        }
        let (lo, hi) = self.support();
        if y <= lo {
            return 0.0;
        }
        if y >= hi {
            return 1.0;
        }
        match self.kind {
            BaseKind::Gaussian => normal_cdf(y),
            BaseKind::Laplace => {
                if y < 0.0 {
                    0.5 * y.exp()
                } else {
                    1.0 - 0.5 * (-y).exp()
                }
            }
            BaseKind::Gumbel => (-(-y).exp()).exp(),
            BaseKind::HalfNormal => erf(y / std::f64::consts::SQRT_2),
            BaseKind::MaxwellBoltzmann => {
                (erf(y / std::f64::consts::SQRT_2) - FRAC_2_SQRT_2PI * y * (-0.5 * y * y).exp())
                    .max(0.0)
            }
            BaseKind::DoubleRayleigh => {
                let t = 0.5 * (-0.5 * y * y).exp();
                if y <= 0.0 {
                    t
                } else {
                    1.0 - t
                }
            }
            BaseKind::Gdg { gamma, d, p } => {
                let u = (y.abs() / gamma).powf(p);
                let a = d / p;
                if u == 0.0 {
                    0.5
                } else if y < 0.0 {
                    0.5 * gamma_ur(a, u)
                } else {
                    0.5 + 0.5 * gamma_lr(a, u)
                }
            }
            BaseKind::Exponential => -(-y).exp_m1(),
            BaseKind::HuberPseudo { delta } => {
                let mass = self.log_norm.exp();
                let left = |x: f64| -> f64 {
                    // mass of exp(-huber) on (-inf, x] for x <= 0
                    if x <= -delta {
                        (delta * x + 0.5 * delta * delta).exp() / delta
                    } else {
                        (-0.5 * delta * delta).exp() / delta
                            + numeric::SQRT_2PI * (normal_cdf(x) - normal_cdf(-delta))
                    }
                };
                if y <= 0.0 {
                    left(y) / mass
                } else {
                    1.0 - left(-y) / mass
                }
            }
        }
    }

    /// Quantile function. `u` is clamped to `[0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let (lo, hi) = self.support();
        if u <= 0.0 {
            return lo;
        }
        if u >= 1.0 {
            return hi;
        }
        match self.kind {
            BaseKind::Gaussian => normal_quantile(u),
            BaseKind::Laplace => {
                if u < 0.5 {
                    (2.0 * u).ln()
                } else {
                    -(2.0 * (1.0 - u)).ln()
                }
            }
            BaseKind::Gumbel => -(-u.ln()).ln(),
            BaseKind::HalfNormal => normal_quantile(0.5 + 0.5 * u),
            BaseKind::DoubleRayleigh => {
                if u <= 0.5 {
                    -(-2.0 * (2.0 * u).ln()).sqrt()
                } else {
                    (-2.0 * (2.0 * (1.0 - u)).ln()).sqrt()
                }
            }
            BaseKind::Exponential => -(-u).ln_1p(),
            BaseKind::HuberPseudo { delta } => {
                let mass = self.log_norm.exp();
                let lower = |t: f64| -> f64 {
                    // inverse of the left-half mass function, t <= mass / 2
                    let tail = (-0.5 * delta * delta).exp() / delta;
                    if t <= tail {
                        ((t * delta).ln() - 0.5 * delta * delta) / delta
                    } else {
                        normal_quantile(normal_cdf(-delta) + (t - tail) / numeric::SQRT_2PI)
                    }
                };
                if u <= 0.5 {
                    lower(u * mass)
                } else {
                    -lower((1.0 - u) * mass)
                }
            }
            _ => self.quantile_numeric(u),
        }
    }

    fn quantile_numeric(&self, u: f64) -> f64 {
        let (lo, hi) = self.support();
        let mut a = if lo.is_finite() { lo } else { -1.0 };
        let mut b = if hi.is_finite() { hi } else { 1.0 };
        while self.cdf(a) > u {
            a *= 2.0;
            if a < -1e300 {
                break;
            }
        }
        while self.cdf(b) < u {
            b *= 2.0;
            if b > 1e300 {
                break;
            }
        }
        invert_monotone(|x| self.cdf(x), |x| self.pdf(x), u, a, b, 1e-14)
    }

    pub fn mean(&self) -> f64 {
        match self.kind {
            BaseKind::Gumbel => EULER_GAMMA,
            BaseKind::HalfNormal => FRAC_2_SQRT_2PI,
            BaseKind::MaxwellBoltzmann => 2.0 * FRAC_2_SQRT_2PI,
            BaseKind::Exponential => 1.0,
            _ => 0.0,
        }
    }

    pub fn std_dev(&self) -> f64 {
        match self.kind {
            BaseKind::Gaussian => 1.0,
            BaseKind::Laplace | BaseKind::DoubleRayleigh => std::f64::consts::SQRT_2,
            BaseKind::Gumbel => std::f64::consts::PI / 6f64.sqrt(),
            BaseKind::HalfNormal => (1.0 - 2.0 / std::f64::consts::PI).sqrt(),
            BaseKind::MaxwellBoltzmann => (3.0 - 8.0 / std::f64::consts::PI).sqrt(),
            BaseKind::Gdg { gamma, d, p } => {
                gamma * (ln_gamma((d + 2.0) / p) - ln_gamma(d / p)).exp().sqrt()
            }
            BaseKind::Exponential => 1.0,
            BaseKind::HuberPseudo { delta } => {
                let second = integrate_pieces(
                    |x| x * x * self.pdf(x),
                    -60.0 / delta.min(1.0),
                    60.0 / delta.min(1.0),
                    &[-delta, delta],
                    1e-10,
                )
                .unwrap_or(1.0);
                second.sqrt()
            }
        }
    }

    /// Finite interval carrying all but a negligible amount of mass: the
    /// support clipped where the density falls below 1e-16.
    pub fn truncation(&self) -> (f64, f64) {
        let (lo, hi) = self.support();
        let walk = |dir: f64| -> f64 {
            let mut x = dir;
            let mut steps = 0;
            while (self.pdf(x) >= TAIL_PDF || x.abs() < 4.0) && steps < 1100 {
                x *= 2.0;
                steps += 1;
            }
            x
        };
        let a = if lo.is_finite() { lo } else { walk(-1.0) };
        let b = if hi.is_finite() { hi } else { walk(1.0) };
        (a, b)
    }

    /// Conditional means `E[Y | Y ≤ m]` and `E[Y | Y > m]` by quadrature.
    /// A side with no mass yields NaN.
    pub fn conditional_means(&self, m: f64) -> Result<(f64, f64)> {
        let (a, b) = self.truncation();
        let f = |x: f64| x * self.pdf(x);
        let breaks = self.breakpoints();
        let q = self.cdf(m);
        let cut = m.clamp(a, b);
        let below = integrate_pieces(f, a, cut, &breaks, 1e-12)?;
        let above = integrate_pieces(f, cut, b, &breaks, 1e-12)?;
        let lower = if q > 0.0 { below / q } else { f64::NAN };
        let upper = if q < 1.0 { above / (1.0 - q) } else { f64::NAN };
        Ok((lower, upper))
    }

    /// Median of the base density.
    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// Label used in CLI flags and reports.
    pub fn name(&self) -> String {
        self.to_string()
    }
}

fn huber_rho(y: f64, delta: f64) -> f64 {
    let a = y.abs();
    if a <= delta {
        0.5 * y * y
    } else {
        delta * a - 0.5 * delta * delta
    }
}

impl fmt::Display for BaseDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            BaseKind::Gaussian => write!(f, "gaussian"),
            BaseKind::Laplace => write!(f, "laplace"),
            BaseKind::Gumbel => write!(f, "gumbel"),
            BaseKind::HalfNormal => write!(f, "half-normal"),
            BaseKind::MaxwellBoltzmann => write!(f, "maxwell"),
            BaseKind::DoubleRayleigh => write!(f, "double-rayleigh"),
            BaseKind::Gdg { gamma, d, p } => write!(f, "gdg:{gamma},{d},{p}"),
            BaseKind::Exponential => write!(f, "exponential"),
            BaseKind::HuberPseudo { delta } => write!(f, "huber:{delta}"),
        }
    }
}

impl FromStr for BaseDensity {
    type Err = Error;

    /// Accepts `gaussian`, `laplace`, `gumbel`, `half-normal`, `maxwell`,
    /// `double-rayleigh`, `exponential`, `huber[:δ]`, `gdg[:γ,d,p]`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, args) = match lower.split_once(':') {
            Some((n, a)) => (n.to_string(), Some(a.to_string())),
            None => (lower.clone(), None),
        };
        let nums = |a: &Option<String>| -> Result<Vec<f64>> {
            match a {
                None => Ok(vec![]),
                Some(a) => a
                    .split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Config(format!("bad number '{x}' in base '{s}'")))
                    })
                    .collect(),
            }
        };
        let kind = match name.replace('_', "-").as_str() {
            "gaussian" | "normal" => BaseKind::Gaussian,
            "laplace" => BaseKind::Laplace,
            "gumbel" => BaseKind::Gumbel,
            "half-normal" | "halfnormal" => BaseKind::HalfNormal,
            "maxwell" | "maxwell-boltzmann" => BaseKind::MaxwellBoltzmann,
            "double-rayleigh" => BaseKind::DoubleRayleigh,
            "exponential" => BaseKind::Exponential,
            "huber" => {
                let v = nums(&args)?;
                BaseKind::HuberPseudo {
                    delta: v.first().copied().unwrap_or(HUBER_DEFAULT_DELTA),
                }
            }
            "gdg" => {
                let v = nums(&args)?;
                match v.as_slice() {
                    [] => BaseKind::Gdg {
                        gamma: 1.0,
                        d: 1.0,
                        p: 1.0,
                    },
                    [g, d, p] => BaseKind::Gdg {
                        gamma: *g,
                        d: *d,
                        p: *p,
                    },
                    _ => {
                        return Err(Error::Config(format!(
                            "gdg takes three parameters gamma,d,p, got '{s}'"
                        )))
                    }
                }
            }
            other => return Err(Error::Config(format!("unknown base density '{other}'"))),
        };
        BaseDensity::new(kind)
    }
}

/// Pivot and the two scales of a pivot-blend transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSkew")]
pub struct SkewSpec {
    pub m: f64,
    pub sigma: f64,
    pub nu: f64,
}

#[derive(Deserialize)]
struct RawSkew {
    m: f64,
    sigma: f64,
    nu: f64,
}

impl TryFrom<RawSkew> for SkewSpec {
    type Error = Error;

    fn try_from(r: RawSkew) -> Result<Self> {
        SkewSpec::new(r.m, r.sigma, r.nu)
    }
}

impl SkewSpec {
    pub fn new(m: f64, sigma: f64, nu: f64) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::InvalidParameter(format!("pivot must be finite, got {m}")));
        }
        positive("sigma", sigma)?;
        positive("nu", nu)?;
        Ok(SkewSpec { m, sigma, nu })
    }

    /// Mixing probability `Φ(m)σ / [Φ(m)σ + (1-Φ(m))ν]` of the left piece.
    pub fn mixing_prob(&self, base: &BaseDensity) -> f64 {
        let q = base.cdf(self.m);
        q * self.sigma / (q * self.sigma + (1.0 - q) * self.nu)
    }

    /// Maps a residual through the inverse pivot-blend affine pieces.
    #[inline]
    pub fn back_transform(&self, r: f64) -> f64 {
        if r <= self.m {
            (r - self.m) / self.sigma + self.m
        } else {
            (r - self.m) / self.nu + self.m
        }
    }
}

/// Serialized form of a pivot-blend distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub base: BaseDensity,
    pub skew: SkewSpec,
}

/// `SP(φ; σ, ν, m)` with cached `Φ(m)` and normalizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "DistributionSpec", into = "DistributionSpec")]
pub struct SpDistribution {
    base: BaseDensity,
    skew: SkewSpec,
    q: f64,
    z: f64,
}

impl From<DistributionSpec> for SpDistribution {
    fn from(s: DistributionSpec) -> Self {
        SpDistribution::new(s.base, s.skew)
    }
}

impl From<SpDistribution> for DistributionSpec {
    fn from(d: SpDistribution) -> Self {
        DistributionSpec {
            base: d.base,
            skew: d.skew,
        }
    }
}

impl SpDistribution {
    pub fn new(base: BaseDensity, skew: SkewSpec) -> Self {
        let q = base.cdf(skew.m);
        let z = q * skew.sigma + (1.0 - q) * skew.nu;
        SpDistribution { base, skew, q, z }
    }

    pub fn base(&self) -> &BaseDensity {
        &self.base
    }

    pub fn skew(&self) -> &SkewSpec {
        &self.skew
    }

    /// `Φ(m)`.
    pub fn base_cdf_at_pivot(&self) -> f64 {
        self.q
    }

    /// `Φ(m)σ + (1-Φ(m))ν`.
    pub fn normalizer(&self) -> f64 {
        self.z
    }

    pub fn mixing_prob(&self) -> f64 {
        self.q * self.skew.sigma / self.z
    }

    /// True when the pivot sits outside the base support, in which case the
    /// transform reduces to a plain location-scale map.
    pub fn pivot_outside_support(&self) -> bool {
        self.q <= 0.0 || self.q >= 1.0
    }

    pub fn pdf(&self, y: f64) -> f64 {
        let SkewSpec { m, sigma, nu } = self.skew;
        let x = if y <= m {
            (y - m) / sigma + m
        } else {
            (y - m) / nu + m
        };
        self.base.pdf(x) / self.z
    }

    pub fn log_pdf(&self, y: f64) -> f64 {
        -self.base.loss(self.skew.back_transform(y)) - self.z.ln()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let SkewSpec { m, sigma, nu } = self.skew;
        if y <= m {
            sigma * self.base.cdf((y - m) / sigma + m) / self.z
        } else {
            ((nu * self.base.cdf((y - m) / nu + m) + (sigma - nu) * self.q) / self.z).min(1.0)
        }
    }

    /// `F(m) = qσ / (qσ + (1-q)ν)`.
    pub fn cdf_at_pivot(&self) -> f64 {
        self.mixing_prob()
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("quantile level must be in (0,1), got {u}")));
        }
        let SkewSpec { m, sigma, nu } = self.skew;
        if u <= self.cdf_at_pivot() {
            let x = self.base.quantile((u * self.z / sigma).min(1.0));
            Ok(m + sigma * (x - m))
        } else {
            let target = ((u * self.z - (sigma - nu) * self.q) / nu).clamp(0.0, 1.0);
            let x = self.base.quantile(target);
            Ok(m + nu * (x - m))
        }
    }

    /// Draws `n` values by the forward construction, deterministically in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, n)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        let p = self.mixing_prob();
        let SkewSpec { m, sigma, nu } = self.skew;
        (0..n)
            .map(|_| {
                let left = rng.random::<f64>() < p;
                let u: f64 = rng.random();
                if left {
                    let y0 = self.base.quantile(u * self.q);
                    m + sigma * (y0 - m)
                } else {
                    let y0 = self.base.quantile(self.q + u * (1.0 - self.q));
                    m + nu * (y0 - m)
                }
            })
            .collect()
    }
}

/// Two different base densities pasted at a common pivot with continuity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PastedDistribution {
    left: BaseDensity,
    right: BaseDensity,
    skew: SkewSpec,
    phi_m: f64,
    psi_m: f64,
    cdf_left_m: f64,
    cdf_right_m: f64,
    denom: f64,
}

impl PastedDistribution {
    pub fn new(left: BaseDensity, right: BaseDensity, skew: SkewSpec) -> Result<Self> {
        let m = skew.m;
        let phi_m = left.pdf(m);
        let psi_m = right.pdf(m);
        if !(phi_m > 0.0 && psi_m > 0.0) {
            return Err(Error::DegeneratePivot(format!(
                "both densities must be positive at the pivot {m} (left {phi_m}, right {psi_m})"
            )));
        }
        let cdf_left_m = left.cdf(m);
        let cdf_right_m = right.cdf(m);
        let denom = phi_m * (1.0 - cdf_right_m) * skew.nu + psi_m * cdf_left_m * skew.sigma;
        Ok(PastedDistribution {
            left,
            right,
            skew,
            phi_m,
            psi_m,
            cdf_left_m,
            cdf_right_m,
            denom,
        })
    }

    /// Weight of the left piece, `ψ(m)Φ(m)σ / D`.
    pub fn mixing_prob(&self) -> f64 {
        self.psi_m * self.cdf_left_m * self.skew.sigma / self.denom
    }

    pub fn pdf(&self, y: f64) -> f64 {
        let SkewSpec { m, sigma, nu } = self.skew;
        if y <= m {
            self.psi_m * self.left.pdf((y - m) / sigma + m) / self.denom
        } else {
            self.phi_m * self.right.pdf((y - m) / nu + m) / self.denom
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let SkewSpec { m, sigma, nu } = self.skew;
        if y <= m {
            self.psi_m * sigma * self.left.cdf((y - m) / sigma + m) / self.denom
        } else {
            let right = self.right.cdf((y - m) / nu + m) - self.cdf_right_m;
            (self.mixing_prob() + self.phi_m * nu * right / self.denom).min(1.0)
        }
    }
}

/// `Φ(m)` computed by quadrature of `exp(-ρ)`, normalized by the total mass.
pub fn base_cdf_numeric(base: &BaseDensity, m: f64) -> Result<f64> {
    let (a, b) = base.truncation();
    if m <= a {
        return Ok(0.0);
    }
    if m >= b {
        return Ok(1.0);
    }
    let f = |x: f64| (-base.loss(x)).exp();
    let breaks = base.breakpoints();
    let below = integrate_pieces(f, a, m, &breaks, 1e-11)?;
    let above = integrate_pieces(f, m, b, &breaks, 1e-11)?;
    Ok(below / (below + above))
}
