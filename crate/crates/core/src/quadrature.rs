//! Gauss rules used by the light-state and correction modules.

use gauss_quad::{hermite::GaussHermite, legendre::GaussLegendre};

use crate::{Error, Result};

/// Gauss-Legendre nodes and weights mapped to `[a, b]`, ascending.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<Vec<(f64, f64)>> {
    if n == 1 {
        return Ok(vec![(0.5 * (a + b), b - a)]);
    }
    let rule = GaussLegendre::new(n).map_err(|e| Error::invalid(e.to_string()))?;
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut out: Vec<(f64, f64)> = rule
        .iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .collect();
    out.sort_by(|p, q| p.0.total_cmp(&q.0));
    Ok(out)
}

/// Gauss-Hermite rule for the weight `exp(-x^2)`, with the weights
/// rescaled to sum to one (a normal density with variance 1/2).
///
/// Nodes are exactly antisymmetric (`x_{n-1-i} == -x_i`) so that a node set
/// built from them is closed under negation bit for bit.
pub fn gauss_hermite_normalized(n: usize) -> Result<Vec<(f64, f64)>> {
    let rule = GaussHermite::new(n).map_err(|e| Error::invalid(e.to_string()))?;
    let mut pairs: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let m = pairs.len();
    let mut sym = pairs.clone();
    for i in 0..m {
        let j = m - 1 - i;
        let x = 0.5 * (pairs[i].0 - pairs[j].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        sym[i] = (if i == j { 0.0 } else { x }, w);
    }
    let total: f64 = sym.iter().map(|p| p.1).sum();
    sym.iter_mut().for_each(|p| p.1 /= total);
    Ok(sym)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let r = gauss_legendre(5, 1.0, 3.0).unwrap();
        let s: f64 = r.iter().map(|(x, w)| w * x.powi(7)).sum();
        let exact = (3f64.powi(8) - 1.0) / 8.0;
        assert!((s - exact).abs() / exact < 1e-13);
        assert!(r.windows(2).all(|p| p[0].0 < p[1].0));
    }

    #[test]
    fn hermite_is_symmetric_and_normalized() {
        for n in 2..12 {
            let r = gauss_hermite_normalized(n).unwrap();
            let total: f64 = r.iter().map(|p| p.1).sum();
            assert!((total - 1.0).abs() < 1e-15);
            for i in 0..n {
                assert_eq!(r[i].0, -r[n - 1 - i].0);
                assert_eq!(r[i].1, r[n - 1 - i].1);
            }
            // second moment of exp(-x^2)/sqrt(pi) is 1/2
            let m2: f64 = r.iter().map(|(x, w)| w * x * x).sum();
            assert!((m2 - 0.5).abs() < 1e-13);
        }
        assert!(gauss_hermite_normalized(1).is_err());
    }
}
