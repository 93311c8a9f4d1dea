use num_complex::Complex64;

const MAX_ITER: usize = 500;

fn horner(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    // coeffs are highest degree first
    let mut p = coeffs[0];
    let mut dp = Complex64::new(0.0, 0.0);
    for c in &coeffs[1..] {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// All roots of a polynomial given highest-degree-first coefficients,
/// by simultaneous Aberth-Ehrlich iteration.
///
/// Leading zeros are stripped; trailing zeros yield exact roots at 0.
pub fn poly_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return Vec::new();
    }
    let tiny = scale * 1e-14;
    let first = match coeffs.iter().position(|c| c.norm() > tiny) {
        Some(i) => i,
        None => return Vec::new(),
    };
    let mut c: Vec<Complex64> = coeffs[first..].to_vec();
    let mut roots = Vec::new();
    while c.len() > 1 && c.last().unwrap().norm() <= tiny {
        c.pop();
        roots.push(Complex64::new(0.0, 0.0));
    }
    let deg = c.len() - 1;
    if deg == 0 {
        return roots;
    }
    let lead = c[0];
    c.iter_mut().for_each(|v| *v /= lead);
    if deg == 1 {
        roots.push(-c[1]);
        return roots;
    }

    // initial guesses on a circle whose radius is the geometric mean of the
    // root moduli, rotated off the real axis to avoid symmetric stalls
    let radius = c[deg].norm().powf(1.0 / deg as f64).max(1e-3);
    let mut z: Vec<Complex64> = (0..deg)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / deg as f64 + 0.4;
            Complex64::from_polar(radius, a)
        })
        .collect();
    let mut done = vec![false; deg];
    for _ in 0..MAX_ITER {
        let mut all = true;
        for k in 0..deg {
            if done[k] {
                continue;
            }
            let (p, dp) = horner(&c, z[k]);
            if p.norm() == 0.0 {
                done[k] = true;
                continue;
            }
            let ratio = p / dp;
            let mut s = Complex64::new(0.0, 0.0);
            for (m, zm) in z.iter().enumerate() {
                if m != k {
                    let d = z[k] - zm;
                    if d.norm() > 0.0 {
                        s += 1.0 / d;
                    }
                }
            }
            let denom = 1.0 - ratio * s;
            let step = if denom.norm() > 0.0 { ratio / denom } else { ratio };
            z[k] -= step;
            if step.norm() <= 1e-15 * (1.0 + z[k].norm()) {
                done[k] = true;
            } else {
                all = false;
            }
        }
        if all {
            break;
        }
    }
    // Newton polish
    for zk in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = horner(&c, *zk);
            if dp.norm() == 0.0 {
                break;
            }
            let next = *zk - p / dp;
            if !(next.re.is_finite() && next.im.is_finite()) || horner(&c, next).0.norm() >= p.norm() {
                break;
            }
            *zk = next;
        }
    }
    roots.extend(z);
    roots
}
