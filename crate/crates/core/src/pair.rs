//! The period-two fractional-linear pairs (f_i, g_i) and the renormalization operator.

use crate::dd::DD;

use crate::error::{Error, Result};
use crate::mobius::Mobius;

/// Pair (f, g) with f on [−1,0] and g on [0,α].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobiusPair {
    pub f: Mobius,
    pub g: Mobius,
    pub alpha: DD,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FractionalLinearPair {
    pub c: f64,
    pub beta0: DD,
    /// α₁, α₂.
    pub alpha: [DD; 2],
    /// (f₁,g₁) with c₁ = c and (f₂,g₂) with c₂ = 1/c.
    pub pairs: [MobiusPair; 2],
}

fn quartic(beta: DD, c: DD) -> DD {
    let k = (c + 1.0) * (c + 1.0) / c;
    let b2 = beta * beta;
    b2 * b2 - b2 * beta - b2 * k - beta + 1.0
}

fn quartic_deriv(beta: DD, c: DD) -> DD {
    let k = (c + 1.0) * (c + 1.0) / c;
    let b2 = beta * beta;
    b2 * beta * 4.0 - b2 * 3.0 - beta * k * 2.0 - 1.0
}

/// Root in (0,1) of β⁴ − β³ − β²(c+1)²/c − β + 1, to double-double accuracy.
pub fn beta0(c: f64) -> Result<DD> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("c must be positive, got {c}")));
    }
    let ct = DD::from(c);
    let q = |b: f64| quartic(DD::from(b), ct).hi();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let (qlo, qhi) = (q(lo), q(hi));
    if qlo * qhi > 0.0 {
        return Err(Error::RootNotBracketed { c });
    }
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if (q(mid) > 0.0) == (qlo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut b = DD::from(0.5 * (lo + hi));
    for _ in 0..3 {
        b -= quartic(b, ct) / quartic_deriv(b, ct);
    }
    Ok(b)
}

fn make_f(alpha: DD, ci: DD, beta: DD) -> Mobius {
    // f(x) = (α + c_i x)β / (β + (β + α − c_i)x)
    Mobius::new(ci * beta, alpha * beta, beta + alpha - ci, beta)
}

fn make_g(alpha: DD, ci: DD, beta: DD) -> Mobius {
    // g(x) = αβ(x − c_i) / (αβc_i + (c_i − α − c_iβ)x)
    let ab = alpha * beta;
    Mobius::new(ab, -ab * ci, ci - alpha - ci * beta, ab * ci)
}

pub fn build_fractional_linear_pair(c: f64) -> Result<FractionalLinearPair> {
    if c == 1.0 {
        return Err(Error::InvalidParameter("c = 1 gives no break".into()));
    }
    let b = beta0(c)?;
    let ct = DD::from(c);
    let cinv = DD::from(1.0) / ct;
    let a1 = (ct - b * b) / (b + 1.0);
    let a2 = (cinv - b * b) / (b + 1.0);
    let p1 = MobiusPair {
        f: make_f(a1, ct, b),
        g: make_g(a1, ct, b),
        alpha: a1,
    };
    let p2 = MobiusPair {
        f: make_f(a2, cinv, b),
        g: make_g(a2, cinv, b),
        alpha: a2,
    };
    Ok(FractionalLinearPair {
        c,
        beta0: b,
        alpha: [a1, a2],
        pairs: [p1, p2],
    })
}

impl FractionalLinearPair {
    pub fn pair(&self, which: usize) -> &MobiusPair {
        &self.pairs[which - 1]
    }
}

impl MobiusPair {
    /// Largest violation of f(0)=α, g(0)=−1, f(−1)=g(α).
    pub fn domain_defect(&self) -> f64 {
        let a = self.alpha;
        let e1 = (self.f.eval(DD::from(0.0)) - a).hi().abs();
        let e2 = (self.g.eval(DD::from(0.0)) + 1.0).hi().abs();
        let e3 = (self.f.eval(DD::from(-1.0)) - self.g.eval(a)).hi().abs();
        e1.max(e2).max(e3)
    }

    /// Jump ratio at the break x = 0, √(Df(0−)/Dg(0+)).
    pub fn jump_at_zero(&self) -> f64 {
        let x = DD::from(0.0);
        (self.f.deriv(x) / self.g.deriv(x)).sqrt().hi()
    }

    /// Jump ratio at x = −1 ≡ α, √(Dg(α−)/Df(−1+)).
    pub fn jump_at_minus_one(&self) -> f64 {
        (self.g.deriv(self.alpha) / self.f.deriv(DD::from(-1.0)))
            .sqrt()
            .hi()
    }

    /// Sup-norm distance on `points`-point grids over [−1,0] (f) and [0,α] (g).
    pub fn sup_distance(&self, other: &MobiusPair, points: usize) -> f64 {
        let mut worst = (self.alpha - other.alpha).hi().abs();
        let alpha = other.alpha.hi();
        for i in 0..points {
            let t = i as f64 / (points - 1) as f64;
            let xf = DD::from(-1.0 + t);
            let xg = DD::from(alpha * t);
            worst = worst.max((self.f.eval(xf) - other.f.eval(xf)).hi().abs());
            worst = worst.max((self.g.eval(xg) - other.g.eval(xg)).hi().abs());
        }
        worst
    }
}

/// R_br(f,g) = (−α⁻¹ f∘g(−αx), −α⁻¹ f(−αx)), α′ = −α⁻¹ f(−1), by coefficient algebra.
pub fn renormalize_pair(pair: &MobiusPair) -> Result<MobiusPair> {
    let defect = pair.domain_defect();
    if !(defect < 1e-10) {
        return Err(Error::DomainViolation(format!(
            "f(0)=α, g(0)=−1, f(−1)=g(α) violated by {defect:e}"
        )));
    }
    let zero = DD::from(0.0);
    let one = DD::from(1.0);
    let a = pair.alpha;
    let s = Mobius::new(-a, zero, zero, one);
    let s_inv = Mobius::new(-one, zero, zero, a);
    let f_new = s_inv.compose(&pair.f).compose(&pair.g).compose(&s).normalized();
    let g_new = s_inv.compose(&pair.f).compose(&s).normalized();
    let alpha_new = -pair.f.eval(-one) / a;
    Ok(MobiusPair {
        f: f_new,
        g: g_new,
        alpha: alpha_new,
    })
}

/// Jump ratio at 0 after one renormalization step predicted from the input pair:
/// c̃(0) = c⁻¹ √(Df(−1⁺)).
pub fn predicted_renormalized_jump(pair: &MobiusPair) -> f64 {
    let df = pair.f.deriv(DD::from(-1.0)).hi();
    df.sqrt() / pair.jump_at_zero()
}

/// Closed form of c_{G₁}(0) = √(c (c+β)(c−β²)/((1+β)(1−β²))).
pub fn jump_ratio_closed_form(c: f64, beta: f64) -> f64 {
    (c * (c + beta) * (c - beta * beta) / ((1.0 + beta) * (1.0 - beta * beta))).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CS: [f64; 3] = [0.5, 2.0, 4.0];

    #[test]
    fn quartic_at_c_one_changes_sign() {
        let one = DD::from(1.0);
        assert_eq!(quartic(DD::from(0.0), one).hi(), 1.0);
        assert_eq!(quartic(one, one).hi(), -4.0);
        assert!(beta0(1.0).is_ok());
    }

    #[test]
    fn beta0_matches_bisection_oracle() {
        // independent plain-f64 bisection
        let c = 2.0_f64;
        let p = |b: f64| b.powi(4) - b.powi(3) - 4.5 * b * b - b + 1.0;
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if p(m) > 0.0 {
                lo = m
            } else {
                hi = m
            }
        }
        let b = beta0(c).unwrap();
        assert!((b.hi() - lo).abs() < 1e-14);
        assert!(quartic(b, DD::from(c)).hi().abs() < 1e-14);
        // at c = 2 the root is (√3 − 1)/2
        assert!((b.hi() - (3f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn identities_hold_for_all_c() {
        for &c in &CS {
            let p = build_fractional_linear_pair(c).unwrap();
            for which in 1..=2 {
                let q = p.pair(which);
                let zero = DD::from(0.0);
                let m1 = DD::from(-1.0);
                assert!((q.f.eval(zero) - q.alpha).hi().abs() < 1e-12);
                assert!((q.g.eval(zero) + 1.0).hi().abs() < 1e-12);
                assert!((q.f.eval(m1) + p.beta0).hi().abs() < 1e-12);
                assert!((q.g.eval(q.alpha) + p.beta0).hi().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_sided_derivatives_match_printed_formulas() {
        for &c in &CS {
            let p = build_fractional_linear_pair(c).unwrap();
            let (b, a) = (p.beta0.hi(), p.alpha[0].hi());
            let q = p.pair(1);
            let df0 = (c * (a + b) - a * (a + b)) / b;
            let dg0 = (1.0 - b) * (c - a) / (a * b * c);
            assert!((q.f.deriv(0.0_f64) - df0).abs() < 1e-12);
            assert!((q.g.deriv(0.0_f64) - dg0).abs() < 1e-12);
            let dfm1 = b * (a + b) / (c - a);
            let dga = c * b * (1.0 - b) / (a * (c - a));
            assert!((q.f.deriv(-1.0_f64) - dfm1).abs() < 1e-12);
            assert!((q.g.deriv(a) - dga).abs() < 1e-12);
        }
    }

    #[test]
    fn jump_ratios_true_values() {
        for &c in &CS {
            let p = build_fractional_linear_pair(c).unwrap();
            let b = p.beta0.hi();
            let q = p.pair(1);
            assert!((q.jump_at_zero() - jump_ratio_closed_form(c, b)).abs() < 1e-12);
            let printed_minus_one =
                ((1.0 + b) * (1.0 - b * b) * c / ((c + b) * (c - b * b))).sqrt();
            assert!((q.jump_at_minus_one() - printed_minus_one).abs() < 1e-12);
            // the product is c itself
            assert!((q.jump_at_zero() * q.jump_at_minus_one() - c).abs() < 1e-12);
        }
        // frozen reference values from a 40-digit evaluation
        let p = build_fractional_linear_pair(2.0).unwrap();
        assert!((p.pair(1).jump_at_zero() - 2.732050807568877).abs() < 1e-12);
    }

    #[test]
    fn renormalization_has_period_two() {
        for &c in &CS {
            let p = build_fractional_linear_pair(c).unwrap();
            let r1 = renormalize_pair(p.pair(1)).unwrap();
            assert!(r1.sup_distance(p.pair(2), 1000) < 1e-12, "c={c}");
            let r2 = renormalize_pair(&r1).unwrap();
            assert!(r2.sup_distance(p.pair(1), 1000) < 1e-12, "c={c}");
        }
    }

    #[test]
    fn renormalized_jump_transform() {
        for &c in &CS {
            let p = build_fractional_linear_pair(c).unwrap();
            let r = renormalize_pair(p.pair(1)).unwrap();
            assert!((r.jump_at_zero() - predicted_renormalized_jump(p.pair(1))).abs() < 1e-12);
            let expected_minus_one =
                1.0 / p.pair(1).g.deriv(p.pair(1).alpha).hi().sqrt();
            assert!((r.jump_at_minus_one() - expected_minus_one).abs() < 1e-12);
        }
    }

    #[test]
    fn renormalize_rejects_bad_pair() {
        let p = build_fractional_linear_pair(2.0).unwrap();
        let mut bad = *p.pair(1);
        bad.alpha = bad.alpha + 0.1;
        assert!(matches!(renormalize_pair(&bad), Err(Error::DomainViolation(_))));
    }

    #[test]
    fn c_one_rejected() {
        assert!(build_fractional_linear_pair(1.0).is_err());
        assert!(build_fractional_linear_pair(-1.0).is_err());
    }
}
