//! Reference implementations used as test oracles. None of these call into
//! the library's numeric code.
#![allow(dead_code)]

use std::f64::consts::PI;

/// erf by its Maclaurin series (|x| <= 3) or erfc by the Laplace continued fraction.
pub fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let x2 = x * x;
    for n in 1..400 {
        term *= -x2 / n as f64;
        let add = term / (2 * n + 1) as f64;
        sum += add;
        if add.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    2.0 / PI.sqrt() * sum
}

/// erfc via Lentz's method on the continued fraction, good for x >= 2.
pub fn erfc_cf(x: f64) -> f64 {
    // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..500 {
        let a = n as f64 / 2.0;
        d = x + a * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = x + a / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / PI.sqrt() / f
}

pub fn erfc_oracle(x: f64) -> f64 {
    if x < 2.0 {
        1.0 - erf_series(x)
    } else {
        erfc_cf(x)
    }
}

pub fn phi_oracle(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 - 0.5 * erfc_oracle(x / 2f64.sqrt())
    } else {
        0.5 * erfc_oracle(-x / 2f64.sqrt())
    }
}

/// Inverse of `phi_oracle` by bisection.
pub fn quantile_oracle(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi_oracle(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Upper tail of chi-square with one degree of freedom.
pub fn chi2_1_sf_oracle(x: f64) -> f64 {
    erfc_oracle((x / 2.0).sqrt())
}

/// Exact two-sided McNemar p-value with integer arithmetic.
pub fn mcnemar_exact_oracle(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let k = b.min(c);
    // C(n, i) for n <= 30 fits easily in u128.
    let mut coef: u128 = 1;
    let mut tail: u128 = 0;
    for i in 0..=k {
        if i > 0 {
            coef = coef * (n - i + 1) as u128 / i as u128;
        }
        tail += coef;
    }
    let p = 2.0 * tail as f64 / (1u128 << n) as f64;
    p.min(1.0)
}

/// Conventional two-proportion one-sided sample size with allocation
/// `k = n_treat / n_control`: arms rounded up separately.
pub fn two_proportion_oracle(p_treat: f64, p_control: f64, alpha: f64, power: f64, k: f64) -> (u64, u64) {
    let z = quantile_oracle(1.0 - alpha) + quantile_oracle(power);
    let diff = p_treat - p_control;
    let n_control = z * z * (p_treat * (1.0 - p_treat) / k + p_control * (1.0 - p_control)) / (diff * diff);
    let ceil = |v: f64| (v - 1e-9 * v).ceil() as u64;
    (ceil(k * n_control), ceil(n_control))
}

/// `P(Y > z | X > z)` for a standard bivariate normal with correlation
/// `rho`, where `z` is the upper-`q` point; composite Simpson over `x`.
pub fn orthant_cr12_oracle(rho: f64, q: f64) -> f64 {
    let z = quantile_oracle(1.0 - q);
    let s = (1.0 - rho * rho).sqrt();
    let f = |x: f64| {
        let dens = (-x * x / 2.0).exp() / (2.0 * PI).sqrt();
        let cond = if s == 0.0 {
            if x > z {
                1.0
            } else {
                0.0
            }
        } else {
            1.0 - phi_oracle((z - rho * x) / s)
        };
        dens * cond
    };
    let (a, b, n) = (z, z + 12.0, 20_000);
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        sum += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0 / q
}

/// 50 deterministic design points spanning rates, allocation, alpha and power.
pub fn classical_grid() -> Vec<(f64, f64, f64, f64, f64)> {
    let controls: [f64; 5] = [0.02, 0.1, 0.3, 0.5, 0.8];
    let rel = [0.7, 1.25];
    let ks = [1.0, 0.25, 2.0, 0.5, 3.0];
    let alphas = [0.025, 0.05, 0.01];
    let powers = [0.8, 0.9];
    let mut grid = Vec::new();
    let mut i = 0usize;
    for &p0 in &controls {
        for &r in &rel {
            for &k in &ks {
                let p1 = (p0 * r).min(0.95);
                grid.push((p1, p0, alphas[i % 3], powers[i % 2], k));
                i += 1;
            }
        }
    }
    grid
}
