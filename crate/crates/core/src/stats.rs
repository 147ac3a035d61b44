//! Scalar statistical kernels: the standard normal density, distribution
//! function and quantile, seeded sampling, and a bracketing root finder.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_677_94;

/// Standard normal density.
#[inline]
pub fn phi(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, via the complementary error
/// function so that both tails keep full relative precision.
#[inline]
pub fn big_phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// `ln Φ(x)`, with an asymptotic series once `Φ` itself underflows.
pub fn ln_big_phi(x: f64) -> f64 {
    if x > -30.0 {
        return big_phi(x).ln();
    }
    let x2 = x * x;
    -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
}

/// Standard normal quantile. `q` must lie strictly inside (0, 1).
pub fn big_phi_inv(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(q, "(0, 1)"));
    }
    Ok(quantile_open(q))
}

/// Quantile for `q` already known to be in (0, 1): Wichura's AS241 followed
/// by one Newton correction against `big_phi`.
pub(crate) fn quantile_open(q: f64) -> f64 {
    let x = as241(q);
    if !x.is_finite() {
        return x;
    }
    // Newton on the side with the smaller tail mass keeps relative accuracy.
    let d = phi(x);
    if d <= 0.0 {
        return x;
    }
    let resid = if q < 0.5 {
        big_phi(x) - q
    } else {
        (1.0 - q) - big_phi(-x)
    };
    x - resid / d
}

/// Quantile clamped to (eps, 1 - eps); used where the argument is a
/// probability that may sit on the closed boundary.
#[inline]
pub(crate) fn quantile_clamped(q: f64) -> f64 {
    const EPS: f64 = 1e-300;
    quantile_open(q.clamp(EPS, 1.0 - f64::EPSILON / 2.0))
}

#[allow(clippy::excessive_precision)]
fn as241(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                + 6.7265770927008700853e4)
                * r
                + 4.5921953931549871457e4)
                * r
                + 1.3731693765509461125e4)
                * r
                + 1.9715909503065514427e3)
                * r
                + 1.3314166789178437745e2)
                * r
                + 3.3871328727963666080e0)
            / (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                + 3.9307895800092710610e4)
                * r
                + 2.1213794301586595867e4)
                * r
                + 5.3941960214247511077e3)
                * r
                + 6.8718700749205790830e2)
                * r
                + 4.2313330701600911252e1)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
            + 2.41780725177450611770e-1)
            * r
            + 1.27045825245236838258e0)
            * r
            + 3.64784832476320460504e0)
            * r
            + 5.76949722146069140550e0)
            * r
            + 4.63033784615654529590e0)
            * r
            + 1.42343711074968357734e0)
            / (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                + 1.51986665636164571966e-2)
                * r
                + 1.48103976427480074590e-1)
                * r
                + 6.89767334985100004550e-1)
                * r
                + 1.67638483018380384940e0)
                * r
                + 2.05319162663775882187e0)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
            + 1.24266094738807843860e-3)
            * r
            + 2.65321895265761230930e-2)
            * r
            + 2.96560571828504891230e-1)
            * r
            + 1.78482653991729133580e0)
            * r
            + 5.46378491116411436990e0)
            * r
            + 6.65790464350110377720e0)
            / (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                + 1.84631831751005468180e-5)
                * r
                + 7.86869131145613259100e-4)
                * r
                + 1.48753612908506148525e-2)
                * r
                + 1.36929880922735805310e-1)
                * r
                + 5.99832206555887937690e-1)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// `φ(Φ⁻¹(p)) / p`, the worst-case standardized shift of a selected normal
/// sample with selection fraction `p`. Defined as 0 at `p = 1`.
pub fn mills_factor(p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(p, "(0, 1]"));
    }
    if p == 1.0 {
        return Ok(0.0);
    }
    Ok(phi(quantile_open(p)) / p)
}

/// Reproducible 64-bit seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

impl Seed {
    /// Generator for stream `stream` of this seed. Distinct streams are
    /// independent, so replication `i` can use stream `i` regardless of
    /// which thread runs it.
    pub fn rng(self, stream: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.0);
        rng.set_stream(stream);
        rng
    }

    /// A child seed, deterministic in `(self, index)`.
    pub fn derive(self, index: u64) -> Seed {
        // splitmix64 finalizer
        let mut z = self.0 ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Seed(z ^ (z >> 31))
    }
}

pub fn sample_normal(seed: Seed, n: usize) -> Vec<f64> {
    let mut rng = seed.rng(0);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn sample_lognormal(seed: Seed, mu_log: f64, sd_log: f64, n: usize) -> Result<Vec<f64>> {
    if !(sd_log > 0.0) {
        return Err(Error::Domain(sd_log, "sd_log > 0"));
    }
    Ok(sample_normal(seed, n)
        .into_iter()
        .map(|z| (z * sd_log + mu_log).exp())
        .collect())
}

/// Brent's method on a sign-changing bracket. Stops when `|f(x)| <= tol`
/// or the bracket is narrower than `tol`.
pub fn find_root<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::NoSignChange { lo, hi, flo: fa, fhi: fb });
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut bisected = true;
    for _ in 0..200 {
        if fb.abs() <= tol || (b - a).abs() <= tol {
            return Ok(b);
        }
        let mut s = if fa != fc && fb != fc {
            // inverse quadratic interpolation
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let m = (3.0 * a + b) / 4.0;
        let out_of_range = !((s > m.min(b)) && (s < m.max(b)));
        let slow = if bisected {
            (s - b).abs() >= (b - c).abs() / 2.0 || (b - c).abs() < tol
        } else {
            (s - b).abs() >= (c - d).abs() / 2.0 || (c - d).abs() < tol
        };
        if out_of_range || slow {
            s = (a + b) / 2.0;
            bisected = true;
        } else {
            bisected = false;
        }
        let fs = f(s);
        d = c;
        c = b;
        fc = fb;
        if fa.signum() != fs.signum() {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Ok(b)
}

/// [`find_root`] with the bracket `[lo, hi]` grown geometrically away from
/// `lo` (or toward both sides when `both` is set) until the sign changes.
pub fn find_root_expanding<F>(mut f: F, lo: f64, hi: f64, limit: f64, tol: f64, both: bool) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    loop {
        match find_root(&mut f, a, b, tol) {
            Err(Error::NoSignChange { .. }) if b.abs().max(a.abs()) < limit => {
                let width = b - a;
                b += width;
                if both {
                    a -= width;
                }
            }
            other => return other,
        }
    }
}
