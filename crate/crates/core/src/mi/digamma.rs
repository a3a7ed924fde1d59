//! Digamma via recurrence plus asymptotic series, accurate to ~1e-12.
//! No external special-function dependency.

/// psi(x) for x > 0. The recurrence psi(x) = psi(x+1) - 1/x shifts the
/// argument above 10, where the Bernoulli-number series through x^-8 leaves
/// an error below 1e-12.
pub fn digamma(x: f64) -> f64 {
    assert!(x > 0.0, "digamma needs x > 0, got {x}");
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // ln x - 1/(2x) - 1/(12x^2) + 1/(120x^4) - 1/(252x^6) + 1/(240x^8)
    acc + x.ln() - 0.5 * inv
        - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)))
}

/// Table of psi(1), psi(2), ..., psi(n) for repeated integer lookups.
pub fn digamma_table(n: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(n + 1);
    table.push(f64::NAN); // index 0 unused
    if n >= 1 {
        table.push(digamma(1.0));
    }
    // psi(k+1) = psi(k) + 1/k
    for k in 1..n {
        let prev = table[k];
        table.push(prev + 1.0 / k as f64);
    }
    table
}
