//! Extended-precision reference arithmetic for the tests. Everything here is
//! written directly from the textbook definitions and shares no code with
//! the library.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Binary fixed point: `v / 2^bits`.
#[derive(Clone, Debug)]
pub struct Fx {
    pub v: BigInt,
    pub bits: u32,
}

impl Fx {
    pub fn one(bits: u32) -> Fx {
        Fx { v: BigInt::one() << bits, bits }
    }

    pub fn ratio(r: &BigRational, bits: u32) -> Fx {
        Fx { v: (r.numer() << bits) / r.denom(), bits }
    }

    pub fn f64(x: f64, bits: u32) -> Fx {
        Fx::ratio(&exact(x), bits)
    }

    pub fn int(n: i64, bits: u32) -> Fx {
        Fx { v: BigInt::from(n) << bits, bits }
    }

    pub fn to_f64(&self) -> f64 {
        BigRational::new(self.v.clone(), BigInt::one() << self.bits).to_f64().unwrap()
    }

    pub fn add(&self, o: &Fx) -> Fx {
        Fx { v: &self.v + &o.v, bits: self.bits }
    }

    pub fn sub(&self, o: &Fx) -> Fx {
        Fx { v: &self.v - &o.v, bits: self.bits }
    }

    pub fn mul(&self, o: &Fx) -> Fx {
        Fx { v: (&self.v * &o.v) >> self.bits, bits: self.bits }
    }

    pub fn div(&self, o: &Fx) -> Fx {
        Fx { v: (&self.v << self.bits) / &o.v, bits: self.bits }
    }

    pub fn div_int(&self, n: u64) -> Fx {
        Fx { v: &self.v / BigInt::from(n), bits: self.bits }
    }

    pub fn neg(&self) -> Fx {
        Fx { v: -&self.v, bits: self.bits }
    }

    pub fn is_tiny(&self) -> bool {
        self.v.abs() <= BigInt::one()
    }
}

/// The exact rational value of an f64.
pub fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

pub fn exp(x: &Fx) -> Fx {
    let bits = x.bits;
    let half = Fx::one(bits).div_int(2);
    let mut y = x.clone();
    let mut squarings = 0;
    while y.v.abs() > half.v {
        y = y.div_int(2);
        squarings += 1;
    }
    let mut term = Fx::one(bits);
    let mut sum = Fx::one(bits);
    for i in 1.. {
        term = term.mul(&y).div_int(i);
        if term.is_tiny() {
            break;
        }
        sum = sum.add(&term);
    }
    for _ in 0..squarings {
        sum = sum.mul(&sum);
    }
    sum
}

/// `2 atanh(z)` for |z| <= 1/3.
fn two_atanh(z: &Fx) -> Fx {
    let z2 = z.mul(z);
    let mut power = z.clone();
    let mut sum = z.clone();
    for i in 1u64.. {
        power = power.mul(&z2);
        let term = power.div_int(2 * i + 1);
        if term.is_tiny() {
            break;
        }
        sum = sum.add(&term);
    }
    sum.add(&sum)
}

pub fn ln2(bits: u32) -> Fx {
    two_atanh(&Fx::one(bits).div_int(3))
}

pub fn ln(x: &Fx) -> Fx {
    assert!(x.v.is_positive(), "ln of a nonpositive number");
    let bits = x.bits;
    // x = 2^m * y with y in [1, 2)
    let m = x.v.bits() as i64 - 1 - bits as i64;
    let y = if m >= 0 {
        Fx { v: &x.v >> m as u64, bits }
    } else {
        Fx { v: &x.v << (-m) as u64, bits }
    };
    let one = Fx::one(bits);
    let z = y.sub(&one).div(&y.add(&one));
    let base = ln2(bits);
    let scaled = Fx { v: &base.v * BigInt::from(m), bits };
    scaled.add(&two_atanh(&z))
}

pub fn sqrt(x: &Fx) -> Fx {
    Fx { v: (&x.v << x.bits).sqrt(), bits: x.bits }
}

pub fn e(bits: u32) -> Fx {
    exp(&Fx::one(bits))
}

fn poisson_bits(mu: f64) -> u32 {
    256 + (1.5 * mu) as u32
}

/// All Poisson probabilities `P{X = j}` for `j <= last`.
fn poisson_pmfs(mu: f64, last: u64, bits: u32) -> Vec<Fx> {
    let m = Fx::f64(mu, bits);
    let mut term = exp(&m.neg());
    let mut out = vec![term.clone()];
    for j in 1..=last {
        term = term.mul(&m).div_int(j);
        out.push(term.clone());
    }
    out
}

/// `P{X >= k}` for X ~ Poisson(mu), summed directly from the pmf.
pub fn poisson_sf(mu: f64, k: u64) -> f64 {
    let bits = poisson_bits(mu);
    let m = Fx::f64(mu, bits);
    let mut term = exp(&m.neg());
    for j in 1..=k {
        term = term.mul(&m).div_int(j);
    }
    let mut sum = term.clone();
    let mut j = k;
    loop {
        j += 1;
        term = term.mul(&m).div_int(j);
        sum = sum.add(&term);
        // past the mode terms shrink geometrically
        if j as f64 > mu && (term.is_tiny() || &term.v << 200u32 < sum.v) {
            break;
        }
    }
    sum.to_f64()
}

/// `P{X <= k}` for X ~ Poisson(mu).
pub fn poisson_cdf(mu: f64, k: u64) -> f64 {
    let bits = poisson_bits(mu);
    let pmfs = poisson_pmfs(mu, k, bits);
    pmfs.iter().fold(Fx { v: BigInt::zero(), bits }, |a, t| a.add(t)).to_f64()
}

pub fn binomial_coefficient(n: u64, k: u64) -> BigInt {
    let mut c = BigInt::one();
    for i in 0..k {
        c = c * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    c
}

/// Exact `P{X >= k}` for X ~ Binomial(n, p), with `p` taken as its exact
/// binary value.
pub fn binomial_sf(n: u64, p: f64, k: u64) -> BigRational {
    let p = exact(p);
    let q = BigRational::one() - &p;
    let mut sum = BigRational::zero();
    for j in k..=n {
        let c = BigRational::from_integer(binomial_coefficient(n, j));
        sum += c * num_traits::pow(p.clone(), j as usize) * num_traits::pow(q.clone(), (n - j) as usize);
    }
    sum
}

/// Exact chance that `n` draws without replacement from `v` items miss all
/// `f` marked ones.
pub fn miss_prob(v: u64, f: u64, n: u64) -> BigRational {
    let mut p = BigRational::one();
    for i in 0..n {
        if v - i < f {
            return BigRational::zero();
        }
        p *= BigRational::new(BigInt::from(v - f - i), BigInt::from(v - i));
    }
    p
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Lower-bound formula for minimax L1 estimation, evaluated in fixed point.
pub fn hjw(n: u64, s: u64, zeta: f64) -> f64 {
    let bits = 320;
    let (nn, ss, z) = (Fx::int(n as i64, bits), Fx::int(s as i64, bits), Fx::f64(zeta, bits));
    let one = Fx::one(bits);
    let x = one.add(&z).mul(&nn).div(&ss);
    let e = e(bits);
    let main = if x.v > e.div_int(16).v {
        sqrt(&e.div(&x)).div_int(8)
    } else {
        exp(&x.add(&x).neg())
    };
    let z2 = z.mul(&z);
    let second = exp(&z2.mul(&nn).div_int(24).neg());
    let l = ln(&ss);
    let third = exp(&z2.mul(&ss).div(&l.mul(&l)).div_int(32).neg());
    main.sub(&second).sub(&Fx { v: third.v * BigInt::from(12), bits }).to_f64()
}

/// Relative difference, treating two tiny values as equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
