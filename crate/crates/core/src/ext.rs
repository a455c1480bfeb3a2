//! Extended-range arithmetic.
//!
//! Oscillation factors `1 + X^M` with `M` in the hundreds of thousands leave the
//! `f64` exponent range long before anything interesting happens, so values are
//! carried as an `f64` mantissa with a separate binary exponent. Mantissas are
//! renormalized lazily, only when they drift outside `[2^-256, 2^256]`.

use std::cmp::Ordering;
use std::f64::consts::{LN_2, TAU};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

const RENORM_HI: f64 = 1.157_920_892_373_162e77; // 2^256
const RENORM_LO: f64 = 8.636_168_555_094_445e-78; // 2^-256

/// Multiplies `x` by `2^k` without intermediate overflow.
pub fn ldexp(mut x: f64, mut k: i64) -> f64 {
    while k > 1000 {
        x *= pow2(1000);
        k -= 1000;
        if x.is_infinite() {
            return x;
        }
    }
    while k < -1000 {
        x *= pow2(-1000);
        k += 1000;
        if x == 0.0 {
            return x;
        }
    }
    x * pow2(k)
}

#[inline]
fn pow2(k: i64) -> f64 {
    debug_assert!((-1022..=1023).contains(&k) || k.abs() <= 1000);
    if k >= -1022 {
        f64::from_bits(((k + 1023) as u64) << 52)
    } else {
        2f64.powi(k as i32)
    }
}

/// Binary exponent of a finite nonzero `a`, i.e. `floor(log2 |a|)` for normal numbers.
#[inline]
fn exponent_of(a: f64) -> i64 {
    let bits = a.abs().to_bits();
    let raw = ((bits >> 52) & 0x7ff) as i64;
    if raw == 0 {
        a.abs().log2().floor() as i64
    } else {
        raw - 1023
    }
}

/// Signed real number `m * 2^e`.
#[derive(Clone, Copy, Debug, Default)]
pub struct XReal {
    m: f64,
    e: i64,
}

impl XReal {
    pub const ZERO: XReal = XReal { m: 0.0, e: 0 };
    pub const ONE: XReal = XReal { m: 1.0, e: 0 };

    pub fn new(x: f64) -> Self {
        XReal { m: x, e: 0 }.normalized()
    }

    /// `exp(x)` without overflow.
    pub fn exp(x: f64) -> Self {
        let l2 = x / LN_2;
        let e = l2.floor();
        XReal {
            m: (l2 - e).exp2(),
            e: e as i64,
        }
    }

    /// Builds `2^l2` from a base-2 logarithm.
    pub fn exp2(l2: f64) -> Self {
        let e = l2.floor();
        XReal {
            m: (l2 - e).exp2(),
            e: e as i64,
        }
    }

    #[inline]
    fn normalized(self) -> Self {
        let a = self.m.abs();
        if a == 0.0 || !a.is_finite() {
            return XReal { m: self.m, e: if a == 0.0 { 0 } else { self.e } };
        }
        if (RENORM_LO..=RENORM_HI).contains(&a) {
            return self;
        }
        let k = exponent_of(a);
        XReal {
            m: ldexp(self.m, -k),
            e: self.e + k,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.m == 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.m.is_finite()
    }

    pub fn signum(&self) -> f64 {
        if self.m > 0.0 {
            1.0
        } else if self.m < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    /// Saturating conversion to `f64`.
    pub fn to_f64(self) -> f64 {
        ldexp(self.m, self.e)
    }

    /// Natural logarithm of `|self|`.
    pub fn ln_abs(&self) -> f64 {
        self.m.abs().ln() + self.e as f64 * LN_2
    }

    /// Base-2 logarithm of `|self|`.
    pub fn log2_abs(&self) -> f64 {
        self.m.abs().log2() + self.e as f64
    }

    pub fn abs(self) -> Self {
        XReal { m: self.m.abs(), e: self.e }
    }

    pub fn sqrt(self) -> Self {
        debug_assert!(self.m >= 0.0);
        if self.m == 0.0 {
            return self;
        }
        let (m, e) = if self.e % 2 == 0 {
            (self.m, self.e)
        } else {
            (self.m * 2.0, self.e - 1)
        };
        XReal { m: m.sqrt(), e: e / 2 }.normalized()
    }

    pub fn recip(self) -> Self {
        XReal { m: 1.0 / self.m, e: -self.e }.normalized()
    }

    pub fn div(self, rhs: XReal) -> Self {
        XReal {
            m: self.m / rhs.m,
            e: self.e - rhs.e,
        }
        .normalized()
    }

    pub fn scale(self, s: f64) -> Self {
        XReal { m: self.m * s, e: self.e }.normalized()
    }

    pub fn max(self, other: XReal) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: XReal) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    /// `self^p` for `self >= 0`.
    pub fn powf(self, p: f64) -> Self {
        if self.m == 0.0 {
            return if p == 0.0 { XReal::ONE } else { XReal::ZERO };
        }
        XReal::exp2(self.log2_abs() * p)
    }
}

/// Serialized as a plain JSON number when it fits in `f64`, otherwise as the
/// string `"<mantissa>p<binary exponent>"`.
impl Serialize for XReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.to_f64();
        if self.m == 0.0 || (v.is_finite() && v.abs() >= f64::MIN_POSITIVE) {
            s.serialize_f64(v)
        } else {
            s.serialize_str(&format!("{:?}p{}", self.m, self.e))
        }
    }
}

impl<'de> Deserialize<'de> for XReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(XReal::new(v)),
            Repr::Text(t) => {
                let (m, e) = t
                    .split_once('p')
                    .ok_or_else(|| de::Error::custom(format!("bad extended real '{t}'")))?;
                let m: f64 = m.parse().map_err(de::Error::custom)?;
                let e: i64 = e.parse().map_err(de::Error::custom)?;
                Ok(XReal { m, e }.normalized())
            }
        }
    }
}

impl From<f64> for XReal {
    fn from(x: f64) -> Self {
        XReal::new(x)
    }
}

impl Add for XReal {
    type Output = XReal;
    fn add(self, rhs: XReal) -> XReal {
        if rhs.m == 0.0 {
            return self;
        }
        if self.m == 0.0 {
            return rhs;
        }
        let (big, small) = if self.e >= rhs.e { (self, rhs) } else { (rhs, self) };
        let d = big.e - small.e;
        if d > 1200 {
            return big;
        }
        XReal {
            m: big.m + ldexp(small.m, -d),
            e: big.e,
        }
        .normalized()
    }
}

impl Neg for XReal {
    type Output = XReal;
    fn neg(self) -> XReal {
        XReal { m: -self.m, e: self.e }
    }
}

impl Sub for XReal {
    type Output = XReal;
    fn sub(self, rhs: XReal) -> XReal {
        self + (-rhs)
    }
}

impl Mul for XReal {
    type Output = XReal;
    fn mul(self, rhs: XReal) -> XReal {
        XReal {
            m: self.m * rhs.m,
            e: self.e + rhs.e,
        }
        .normalized()
    }
}

impl PartialEq for XReal {
    fn eq(&self, other: &Self) -> bool {
        self.partial_cmp(other) == Some(Ordering::Equal)
    }
}

impl PartialOrd for XReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        (*self - *other).m.partial_cmp(&0.0)
    }
}

impl fmt::Display for XReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_f64();
        if v.is_finite() && (v == 0.0 || v.abs() > 1e-300) {
            return write!(f, "{v:e}");
        }
        let l10 = self.log2_abs() * std::f64::consts::LOG10_2;
        let e10 = l10.floor();
        let mant = self.signum() * 10f64.powf(l10 - e10);
        write!(f, "{mant}e{}", e10 as i64)
    }
}

/// Complex number `m * 2^e`.
#[derive(Clone, Copy, Debug)]
pub struct Big {
    m: Complex64,
    e: i64,
}

impl Default for Big {
    fn default() -> Self {
        Big::ZERO
    }
}

impl Big {
    pub const ZERO: Big = Big {
        m: Complex64::new(0.0, 0.0),
        e: 0,
    };
    pub const ONE: Big = Big {
        m: Complex64::new(1.0, 0.0),
        e: 0,
    };

    pub fn new(z: Complex64) -> Self {
        Big { m: z, e: 0 }.normalized()
    }

    #[inline]
    fn normalized(self) -> Self {
        let a = self.m.re.abs().max(self.m.im.abs());
        if a == 0.0 {
            return Big::ZERO;
        }
        if !a.is_finite() || (RENORM_LO..=RENORM_HI).contains(&a) {
            return self;
        }
        let k = exponent_of(a);
        let s = ldexp(1.0, -k);
        Big {
            m: self.m * s,
            e: self.e + k,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.m.re == 0.0 && self.m.im == 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.m.re.is_finite() && self.m.im.is_finite()
    }

    /// Saturating conversion to `Complex64`.
    pub fn to_c64(self) -> Complex64 {
        Complex64::new(ldexp(self.m.re, self.e), ldexp(self.m.im, self.e))
    }

    /// Base-2 logarithm of the modulus.
    pub fn log2_abs(&self) -> f64 {
        self.m.norm().log2() + self.e as f64
    }

    pub fn abs(&self) -> XReal {
        XReal {
            m: self.m.norm(),
            e: self.e,
        }
        .normalized()
    }

    pub fn norm_sqr(&self) -> XReal {
        XReal {
            m: self.m.norm_sqr(),
            e: 2 * self.e,
        }
        .normalized()
    }

    pub fn scale(self, c: Complex64) -> Self {
        Big { m: self.m * c, e: self.e }.normalized()
    }

    pub fn scale_real(self, s: f64) -> Self {
        Big { m: self.m * s, e: self.e }.normalized()
    }

    pub fn div(self, rhs: Big) -> Self {
        Big {
            m: self.m / rhs.m,
            e: self.e - rhs.e,
        }
        .normalized()
    }

    /// Integer power through the polar form; exact modulus exponent bookkeeping.
    pub fn powu(self, n: u64) -> Self {
        match n {
            0 => return Big::ONE,
            1 => return self,
            2 => return self * self,
            _ => {}
        }
        if self.is_zero() {
            return Big::ZERO;
        }
        if n <= 64 {
            let mut base = self;
            let mut acc = Big::ONE;
            let mut k = n;
            while k > 0 {
                if k & 1 == 1 {
                    acc = acc * base;
                }
                base = base * base;
                k >>= 1;
            }
            return acc;
        }
        let nf = n as f64;
        // Modulus: |m|^n * 2^(e n), with the mantissa part split into integer
        // and fractional binary exponents so nothing overflows.
        let l2 = self.m.norm().log2() * nf;
        let li = l2.floor();
        let mag = (l2 - li).exp2();
        let e = self.e.saturating_mul(n as i64).saturating_add(li as i64);
        let theta = self.m.arg();
        let phase = if theta == 0.0 { 0.0 } else { (theta * nf) % TAU };
        Big {
            m: Complex64::from_polar(mag, phase),
            e,
        }
        .normalized()
    }
}

impl From<Complex64> for Big {
    fn from(z: Complex64) -> Self {
        Big::new(z)
    }
}

impl From<f64> for Big {
    fn from(x: f64) -> Self {
        Big::new(Complex64::new(x, 0.0))
    }
}

impl Add for Big {
    type Output = Big;
    #[inline]
    fn add(self, rhs: Big) -> Big {
        if rhs.is_zero() {
            return self;
        }
        if self.is_zero() {
            return rhs;
        }
        let (big, small) = if self.e >= rhs.e { (self, rhs) } else { (rhs, self) };
        let d = big.e - small.e;
        if d > 1200 {
            return big;
        }
        let s = ldexp(1.0, -d);
        Big {
            m: big.m + small.m * s,
            e: big.e,
        }
        .normalized()
    }
}

impl Neg for Big {
    type Output = Big;
    fn neg(self) -> Big {
        Big { m: -self.m, e: self.e }
    }
}

impl Sub for Big {
    type Output = Big;
    fn sub(self, rhs: Big) -> Big {
        self + (-rhs)
    }
}

impl Mul for Big {
    type Output = Big;
    #[inline]
    fn mul(self, rhs: Big) -> Big {
        Big {
            m: self.m * rhs.m,
            e: self.e + rhs.e,
        }
        .normalized()
    }
}
