//! Closed-form block updates for the auxiliary amplitudes and the binaries.

/// Minimizer over v ≥ 0 of λ3(u − v²)² + λ4(ρ̄ − v)².
///
/// The stationarity condition is 4λ3v³ − (4λ3u − 2λ4)v − 2λ4ρ̄ = 0, solved in
/// monic depressed form v³ + pv + q = 0.
pub fn update_v(u: f64, rho_bar: f64, lambda3: f64, lambda4: f64) -> f64 {
    assert!(lambda3 > 0.0 && lambda4 > 0.0, "penalties must be positive");
    assert!(u >= 0.0 && rho_bar >= 0.0, "u and rho_bar must be non-negative");
    let p = -u + lambda4 / (2.0 * lambda3);
    let q = -lambda4 * rho_bar / (2.0 * lambda3);
    if q == 0.0 {
        return if p < 0.0 { (-p).sqrt() } else { 0.0 };
    }
    let mut v = largest_root(p, q);
    for _ in 0..4 {
        let f = cubic(v, p, q);
        let df = 3.0 * v * v + p;
        if df <= 0.0 {
            break;
        }
        let next = v - f / df;
        if !(next >= 0.0) || cubic(next, p, q).abs() >= f.abs() {
            break;
        }
        v = next;
    }
    if !(v >= 0.0) || relative_residual(v, p, q) > 1e-12 {
        v = bisect(p, q);
    }
    assert!(
        relative_residual(v, p, q) <= 1e-10,
        "no non-negative root found for p={p}, q={q}"
    );
    v
}

/// |v³ + pv + q| normalized by the magnitude of its terms.
pub fn relative_residual(v: f64, p: f64, q: f64) -> f64 {
    cubic(v, p, q).abs() / (v.powi(3).abs() + (p * v).abs() + q.abs()).max(1.0)
}

fn cubic(v: f64, p: f64, q: f64) -> f64 {
    (v * v + p) * v + q
}

fn largest_root(p: f64, q: f64) -> f64 {
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    if disc > 0.0 {
        let a = (q.abs() / 2.0 + disc.sqrt()).cbrt() * -q.signum();
        if a == 0.0 {
            0.0
        } else {
            a - p / (3.0 * a)
        }
    } else {
        let r = (-p / 3.0).sqrt();
        let arg = (-q / (2.0 * r * r * r)).clamp(-1.0, 1.0);
        2.0 * r * (arg.acos() / 3.0).cos()
    }
}

fn bisect(p: f64, q: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0 + p.abs() + q.abs());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if cubic(mid, p, q) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if cubic(lo, p, q).abs() < cubic(hi, p, q).abs() {
        lo
    } else {
        hi
    }
}

/// 1 when `coefficient` is strictly negative, else 0.
pub fn binary_from_coefficient(coefficient: f64) -> bool {
    coefficient < 0.0
}

/// Binary minimizer of c2·m + λ2(m − m̃)².
pub fn update_activation(c2: f64, lambda2: f64, m_relaxed: f64) -> bool {
    binary_from_coefficient(c2 + lambda2 * (1.0 - 2.0 * m_relaxed))
}

/// Binary minimizer of (c3 + c4·M̃)·r + λ1(r − r̃)².
pub fn update_service(c3: f64, c4: f64, antennas: f64, lambda1: f64, r_relaxed: f64) -> bool {
    binary_from_coefficient(c3 + c4 * antennas + lambda1 * (1.0 - 2.0 * r_relaxed))
}
