//! Generalized Forchheimer-Ward constitutive law.
//!
//! The momentum closure is a generalized polynomial
//!
//! ```text
//! F(x, t, z) = a_0(x,t) z^{alpha_0} + ... + a_N(x,t) z^{alpha_N},   alpha_0 = 0,
//! ```
//!
//! relating mass flux `m` and density gradient through `F(x,t,|m|) m = -grad rho`.
//! Inverting the scalar profile `z -> z F(z)` yields the flux law
//! `m = -K(x,t,|grad rho|) grad rho` with `K = 1/F(s)` and `s` the unique
//! non-negative root of `s F(s) = xi`.
//!
//! Besides evaluation and inversion, the module exposes the continuity and
//! monotonicity inequalities of the law as signed margins
//! ([`ForchheimerLaw::continuity_margin`], [`ForchheimerLaw::monotonicity_margin`])
//! so they can be swept by randomized tests.

use std::fmt;
use std::sync::Arc;

/// Spatial sample point (2D domain).
pub type Point = [f64; 2];

/// Coefficient sampler signature: `(position, time) -> value`.
pub type CoeffFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;

/// One coefficient `a_i` of the law: either a constant or a bounded sampler.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    Field(CoeffFn),
}

impl Coefficient {
    pub fn at(&self, x: Point, t: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Field(f) => f(x, t),
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Constant(_))
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Field(_) => write!(f, "Field(..)"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConstitutiveError {
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("domain error: argument z = {z} must be non-negative")]
    NegativeArgument { z: f64 },
    #[error("domain error: non-finite input")]
    NonFinite,
    #[error(
        "root solve for s F(s) = {xi} did not converge in {iters} iterations \
         (last bracket [{lo}, {hi}], residual {residual:e})"
    )]
    RootNonConvergence {
        xi: f64,
        iters: usize,
        lo: f64,
        hi: f64,
        residual: f64,
    },
}

/// Tolerances for the scalar root solve `s F(s) = xi`.
///
/// The returned root satisfies `|s F(s) - xi| <= tol * max(1, xi)`.
#[derive(Debug, Clone, Copy)]
pub struct RootOpts {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RootOpts {
    fn default() -> Self {
        // 1e-12 leaves double-precision headroom for the O(1e-8) checks
        // downstream solvers run against closed forms.
        RootOpts { tol: 1e-12, max_iter: 200 }
    }
}

/// Generalized Forchheimer-Ward law with exponents
/// `0 = alpha_0 < alpha_1 < ... < alpha_N` and non-negative coefficients.
///
/// `a_lower`/`a_upper` are the declared envelope bounds
/// `0 < a_lower < a_0, a_N <= a_upper` and `0 <= a_i <= a_upper`; they stand in
/// for pointwise values when a coefficient is a sampler. Permeability is
/// normalized to one by the density rescaling, so it carries no field here.
#[derive(Debug, Clone)]
pub struct ForchheimerLaw {
    exponents: Vec<f64>,
    coefficients: Vec<Coefficient>,
    a_lower: f64,
    a_upper: f64,
}

impl ForchheimerLaw {
    pub fn new(
        exponents: Vec<f64>,
        coefficients: Vec<Coefficient>,
        a_lower: f64,
        a_upper: f64,
    ) -> Result<Self, ConstitutiveError> {
        let err = |msg: String| Err(ConstitutiveError::InvalidLaw(msg));
        if exponents.is_empty() {
            return err("law needs at least one exponent".into());
        }
        if exponents.len() != coefficients.len() {
            return err(format!(
                "{} exponents but {} coefficients",
                exponents.len(),
                coefficients.len()
            ));
        }
        if exponents[0] != 0.0 {
            return err(format!("first exponent must be 0, got {}", exponents[0]));
        }
        if exponents.windows(2).any(|w| !(w[1] > w[0])) {
            return err("exponents not strictly increasing".into());
        }
        if exponents.iter().any(|a| !a.is_finite()) {
            return err("non-finite exponent".into());
        }
        if !(a_lower > 0.0) || !(a_upper >= a_lower) || !a_upper.is_finite() {
            return err(format!(
                "need 0 < a_lower <= a_upper, got a_lower = {a_lower}, a_upper = {a_upper}"
            ));
        }
        let n = exponents.len() - 1;
        for (i, c) in coefficients.iter().enumerate() {
            if let Coefficient::Constant(v) = c {
                if !v.is_finite() || *v < 0.0 {
                    return err(format!("coefficient a_{i} = {v} must be finite and >= 0"));
                }
                if *v > a_upper {
                    return err(format!("coefficient a_{i} = {v} exceeds a_upper = {a_upper}"));
                }
                if (i == 0 || i == n) && !(*v > a_lower) {
                    return err(format!(
                        "coefficient a_{i} = {v} must exceed a_lower = {a_lower}"
                    ));
                }
            }
        }
        Ok(ForchheimerLaw { exponents, coefficients, a_lower, a_upper })
    }

    /// Law with constant coefficients; envelope bounds derived from the values.
    pub fn from_constants(
        exponents: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self, ConstitutiveError> {
        if values.is_empty() {
            return Err(ConstitutiveError::InvalidLaw("no coefficients".into()));
        }
        let n = values.len() - 1;
        let lo = f64::min(values[0], values[n]);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let coeffs = values.into_iter().map(Coefficient::Constant).collect();
        Self::new(exponents, coeffs, 0.5 * lo, hi)
    }

    /// Ward form `F(z) = a0 + a1 z` (two-term, alpha = 1).
    pub fn ward(a0: f64, a1: f64) -> Self {
        Self::from_constants(vec![0.0, 1.0], vec![a0, a1]).expect("valid Ward law")
    }

    /// Darcy degenerate case `F(z) = a0`.
    pub fn darcy(a0: f64) -> Self {
        Self::from_constants(vec![0.0], vec![a0]).expect("valid Darcy law")
    }

    /// Polynomial degree index N (number of exponents minus one).
    pub fn degree(&self) -> usize {
        self.exponents.len() - 1
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    /// Largest exponent `alpha_N` (`deg(F)`).
    pub fn alpha_max(&self) -> f64 {
        *self.exponents.last().unwrap()
    }

    /// Flux integrability exponent `s = alpha_N + 2`.
    pub fn s(&self) -> f64 {
        self.alpha_max() + 2.0
    }

    /// Conjugate exponent `s* = s / (s - 1)`.
    pub fn s_star(&self) -> f64 {
        let s = self.s();
        s / (s - 1.0)
    }

    pub fn a_lower(&self) -> f64 {
        self.a_lower
    }

    pub fn a_upper(&self) -> f64 {
        self.a_upper
    }

    /// Snapshot of the N+1 coefficient values at a point; lets assembly loops
    /// sample once per face instead of per evaluation.
    pub fn at(&self, x: Point, t: f64) -> LawSample<'_> {
        let values: Vec<f64> =
            self.coefficients.iter().map(|c| c.at(x, t)).collect();
        debug_assert!(
            values.iter().all(|v| v.is_finite() && *v >= 0.0),
            "coefficient sampler broke the non-negativity bound"
        );
        LawSample { exponents: &self.exponents, values }
    }

    /// `F(x, t, z)` for `z >= 0`. Always at least `a_0(x,t) > 0`.
    pub fn eval_f(&self, x: Point, t: f64, z: f64) -> Result<f64, ConstitutiveError> {
        self.at(x, t).eval_f(z)
    }

    /// `F_z(x, t, z)` for `z > 0`.
    ///
    /// At `z = 0` this returns 0 when `alpha_1 >= 1` (or N = 0) and the
    /// `+inf` sentinel when `0 < alpha_1 < 1`, where the derivative is
    /// unbounded. Solvers never evaluate it there; the Picard weights use `F`.
    pub fn eval_fz(&self, x: Point, t: f64, z: f64) -> Result<f64, ConstitutiveError> {
        self.at(x, t).eval_fz(z)
    }

    /// Unique non-negative root of `s F(x,t,s) = xi`.
    pub fn solve_s(
        &self,
        x: Point,
        t: f64,
        xi: f64,
        opts: RootOpts,
    ) -> Result<f64, ConstitutiveError> {
        self.at(x, t).solve_s(xi, opts)
    }

    /// `K(x, t, xi) = 1 / F(x, t, s(xi))`; bounded by `1/a_0`, non-increasing.
    pub fn eval_k(
        &self,
        x: Point,
        t: f64,
        xi: f64,
        opts: RootOpts,
    ) -> Result<f64, ConstitutiveError> {
        self.at(x, t).eval_k(xi, opts)
    }

    /// Flux from density gradient: `m = -K(|g|) g`, so `|m| = s(|g|)` and the
    /// direction is exactly antiparallel to `g`.
    pub fn flux_from_gradient<const D: usize>(
        &self,
        x: Point,
        t: f64,
        g: [f64; D],
        opts: RootOpts,
    ) -> Result<[f64; D], ConstitutiveError> {
        let sample = self.at(x, t);
        let xi = vec_norm(&g);
        if !xi.is_finite() {
            return Err(ConstitutiveError::NonFinite);
        }
        if xi == 0.0 {
            return Ok([0.0; D]);
        }
        let s = sample.solve_s(xi, opts)?;
        // scaling by s/|g| pins |m| = s exactly rather than through 1/F(s)
        let scale = -s / xi;
        Ok(g.map(|gi| scale * gi))
    }

    /// Density gradient from flux: `g = -F(|m|) m`. Exact, no root solve.
    pub fn gradient_from_flux<const D: usize>(
        &self,
        x: Point,
        t: f64,
        m: [f64; D],
    ) -> Result<[f64; D], ConstitutiveError> {
        let mag = vec_norm(&m);
        if !mag.is_finite() {
            return Err(ConstitutiveError::NonFinite);
        }
        let f = self.at(x, t).eval_f(mag)?;
        Ok(m.map(|mi| -f * mi))
    }

    /// Margin of the continuity inequality: non-negative iff
    /// `|F(|y1|) y1 - F(|y2|) y2| <= C1 (1 + |y1|^aN + |y2|^aN) |y1 - y2|`.
    pub fn continuity_margin<const D: usize>(
        &self,
        x: Point,
        t: f64,
        y1: [f64; D],
        y2: [f64; D],
    ) -> Result<f64, ConstitutiveError> {
        let consts = LemmaConstants::for_law(self);
        let sample = self.at(x, t);
        let an = self.alpha_max();
        let n1 = vec_norm(&y1);
        let n2 = vec_norm(&y2);
        let f1 = sample.eval_f(n1)?;
        let f2 = sample.eval_f(n2)?;
        let mut diff2 = 0.0;
        let mut dy2 = 0.0;
        for i in 0..D {
            let d = f1 * y1[i] - f2 * y2[i];
            diff2 += d * d;
            let dy = y1[i] - y2[i];
            dy2 += dy * dy;
        }
        let lhs = diff2.sqrt();
        let bound = consts.c1 * (1.0 + n1.powf(an) + n2.powf(an)) * dy2.sqrt();
        Ok(bound - lhs)
    }

    /// Margin of the monotonicity inequality: non-negative iff
    /// `(F(|y1|) y1 - F(|y2|) y2) . (y1 - y2) >= C2 (|y1-y2|^2 + |y1-y2|^s)`
    /// (the `|.|^s` term drops in the Darcy case N = 0).
    pub fn monotonicity_margin<const D: usize>(
        &self,
        x: Point,
        t: f64,
        y1: [f64; D],
        y2: [f64; D],
    ) -> Result<f64, ConstitutiveError> {
        let consts = LemmaConstants::for_law(self);
        let sample = self.at(x, t);
        let n1 = vec_norm(&y1);
        let n2 = vec_norm(&y2);
        let f1 = sample.eval_f(n1)?;
        let f2 = sample.eval_f(n2)?;
        let mut lhs = 0.0;
        let mut dy2 = 0.0;
        for i in 0..D {
            let dy = y1[i] - y2[i];
            lhs += (f1 * y1[i] - f2 * y2[i]) * dy;
            dy2 += dy * dy;
        }
        let rhs = if self.degree() == 0 {
            consts.c2 * dy2
        } else {
            consts.c2 * (dy2 + dy2.sqrt().powf(self.s()))
        };
        Ok(lhs - rhs)
    }
}

/// Coefficient values of a law frozen at one `(x, t)`.
pub struct LawSample<'a> {
    exponents: &'a [f64],
    values: Vec<f64>,
}

impl LawSample<'_> {
    pub fn a0(&self) -> f64 {
        self.values[0]
    }

    pub fn eval_f(&self, z: f64) -> Result<f64, ConstitutiveError> {
        if z.is_nan() {
            return Err(ConstitutiveError::NonFinite);
        }
        if z < 0.0 {
            return Err(ConstitutiveError::NegativeArgument { z });
        }
        let mut acc = 0.0;
        for (a, alpha) in self.values.iter().zip(self.exponents) {
            acc += a * z.powf(*alpha);
        }
        Ok(acc)
    }

    pub fn eval_fz(&self, z: f64) -> Result<f64, ConstitutiveError> {
        if z.is_nan() {
            return Err(ConstitutiveError::NonFinite);
        }
        if z < 0.0 {
            return Err(ConstitutiveError::NegativeArgument { z });
        }
        if z == 0.0 {
            if self.exponents.len() == 1 {
                return Ok(0.0);
            }
            let alpha1 = self.exponents[1];
            return Ok(if alpha1 >= 1.0 { 0.0 } else { f64::INFINITY });
        }
        let mut acc = 0.0;
        for (a, alpha) in self.values.iter().zip(self.exponents) {
            if *alpha > 0.0 {
                acc += a * alpha * z.powf(alpha - 1.0);
            }
        }
        Ok(acc)
    }

    /// `z F_z(z)`; bounded for all z >= 0, used as part of the Newton slope.
    fn z_fz(&self, z: f64) -> f64 {
        let mut acc = 0.0;
        for (a, alpha) in self.values.iter().zip(self.exponents) {
            if *alpha > 0.0 {
                acc += a * alpha * z.powf(*alpha);
            }
        }
        acc
    }

    /// Safeguarded Newton within the bracket `[0, xi/a0 + 1]` for the root of
    /// `g(z) = z F(z) - xi`. `g` is increasing and convex, so Newton from the
    /// right edge stays in the bracket; any float excursion falls back to
    /// bisection on the maintained sign bracket.
    pub fn solve_s(&self, xi: f64, opts: RootOpts) -> Result<f64, ConstitutiveError> {
        if xi.is_nan() || xi.is_infinite() {
            return Err(ConstitutiveError::NonFinite);
        }
        if xi < 0.0 {
            return Err(ConstitutiveError::NegativeArgument { z: xi });
        }
        if xi == 0.0 {
            return Ok(0.0);
        }
        let a0 = self.a0();
        debug_assert!(a0 > 0.0, "a_0 must stay positive");
        let mut lo = 0.0_f64;
        let mut hi = xi / a0 + 1.0;
        let mut z = hi;
        let target = opts.tol * xi.max(1.0);
        let mut residual = f64::INFINITY;
        for _ in 0..opts.max_iter {
            let f = self.eval_f(z)?;
            let g = z * f - xi;
            residual = g.abs();
            if residual <= target {
                return Ok(z);
            }
            if g > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let slope = f + self.z_fz(z);
            let newton = z - g / slope;
            z = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Err(ConstitutiveError::RootNonConvergence {
            xi,
            iters: opts.max_iter,
            lo,
            hi,
            residual,
        })
    }

    pub fn eval_k(&self, xi: f64, opts: RootOpts) -> Result<f64, ConstitutiveError> {
        let s = self.solve_s(xi, opts)?;
        Ok(1.0 / self.eval_f(s)?)
    }
}

/// Constants of the continuity/monotonicity inequalities, read off the
/// closing displays of their proofs:
///
/// * `c1 = 2^{alpha_N} (1 + alpha_N) (N + 1) sup_i a_i`
/// * `c2 = (1 + alpha_1) min(a_0, a_N / (2^{alpha_N + 1} (alpha_N + 1)))`
///
/// For N = 0 the `|.|^s` term degenerates and `c2 = a_0` applies to the
/// quadratic term only. Constant coefficients use their actual values;
/// sampler coefficients fall back to the declared envelope bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaConstants {
    pub c1: f64,
    pub c2: f64,
}

impl LemmaConstants {
    pub fn for_law(law: &ForchheimerLaw) -> Self {
        let n = law.degree();
        let an = law.alpha_max();
        let sup = law
            .coefficients
            .iter()
            .map(|c| match c {
                Coefficient::Constant(v) => *v,
                Coefficient::Field(_) => law.a_upper,
            })
            .fold(0.0_f64, f64::max);
        let inf = |c: &Coefficient| match c {
            Coefficient::Constant(v) => *v,
            Coefficient::Field(_) => law.a_lower,
        };
        let a0_min = inf(&law.coefficients[0]);
        let c1 = an.exp2() * (1.0 + an) * (n as f64 + 1.0) * sup;
        let c2 = if n == 0 {
            a0_min
        } else {
            let alpha1 = law.exponents[1];
            let an_min = inf(&law.coefficients[n]);
            let seg = an_min / ((an + 1.0).exp2() * (an + 1.0));
            (1.0 + alpha1) * f64::min(a0_min, seg)
        };
        LemmaConstants { c1, c2 }
    }
}

/// Euclidean norm of a small fixed-size vector.
pub fn vec_norm<const D: usize>(v: &[f64; D]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// All constant coefficients? (Sampler-free laws have exact lemma constants.)
pub fn has_constant_coefficients(law: &ForchheimerLaw) -> bool {
    law.coefficients.iter().all(|c| c.is_constant())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const X0: Point = [0.0, 0.0];

    fn ward() -> ForchheimerLaw {
        ForchheimerLaw::ward(1.0, 1.0)
    }

    #[test]
    fn eval_f_matches_hand_values() {
        let law = ward();
        assert_eq!(law.eval_f(X0, 0.0, 0.0).unwrap(), 1.0);
        let two_term = ForchheimerLaw::from_constants(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(two_term.eval_f(X0, 0.0, 3.0).unwrap(), 7.0);
        let darcy = ForchheimerLaw::darcy(2.5);
        for z in [0.0, 1.0, 17.5] {
            assert_eq!(darcy.eval_f(X0, 0.0, z).unwrap(), 2.5);
        }
    }

    #[test]
    fn eval_f_rejects_negative_argument() {
        let law = ward();
        assert!(matches!(
            law.eval_f(X0, 0.0, -1.0),
            Err(ConstitutiveError::NegativeArgument { .. })
        ));
    }

    #[test]
    fn eval_fz_matches_hand_values() {
        let law = ward();
        assert_eq!(law.eval_fz(X0, 0.0, 5.0).unwrap(), 1.0);
        let darcy = ForchheimerLaw::darcy(2.0);
        assert_eq!(darcy.eval_fz(X0, 0.0, 3.0).unwrap(), 0.0);
        let three = ForchheimerLaw::from_constants(vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(three.eval_fz(X0, 0.0, 2.0).unwrap(), 5.0);
    }

    #[test]
    fn eval_fz_at_zero_uses_infinity_sentinel_for_fractional_alpha1() {
        let frac = ForchheimerLaw::from_constants(vec![0.0, 0.5], vec![1.0, 1.0]).unwrap();
        assert!(frac.eval_fz(X0, 0.0, 0.0).unwrap().is_infinite());
        let lin = ward();
        assert_eq!(lin.eval_fz(X0, 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn solve_s_reproduces_closed_forms() {
        let opts = RootOpts::default();
        let law = ward();
        assert_eq!(law.solve_s(X0, 0.0, 0.0, opts).unwrap(), 0.0);
        // s (1 + s) = 2 has positive root s = 1
        let s = law.solve_s(X0, 0.0, 2.0, opts).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "s = {s}");
        let darcy = ForchheimerLaw::darcy(2.0);
        let s = darcy.solve_s(X0, 0.0, 6.0, opts).unwrap();
        assert!((s - 3.0).abs() < 1e-12, "s = {s}");
    }

    #[test]
    fn eval_k_matches_hand_values() {
        let opts = RootOpts::default();
        let law = ward();
        assert_eq!(law.eval_k(X0, 0.0, 0.0, opts).unwrap(), 1.0);
        assert!((law.eval_k(X0, 0.0, 2.0, opts).unwrap() - 0.5).abs() < 1e-12);
        let darcy = ForchheimerLaw::darcy(2.0);
        for xi in [0.0, 0.7, 123.0] {
            assert!((darcy.eval_k(X0, 0.0, xi, opts).unwrap() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn flux_from_gradient_is_antiparallel_with_root_magnitude() {
        let opts = RootOpts::default();
        let law = ward();
        let m = law.flux_from_gradient(X0, 0.0, [2.0, 0.0], opts).unwrap();
        assert!((m[0] + 1.0).abs() < 1e-12 && m[1] == 0.0, "m = {m:?}");
        let zero = law.flux_from_gradient(X0, 0.0, [0.0, 0.0], opts).unwrap();
        assert_eq!(zero, [0.0, 0.0]);
        // odd symmetry
        let g = [0.3, -1.7];
        let plus = law.flux_from_gradient(X0, 0.0, g, opts).unwrap();
        let minus = law
            .flux_from_gradient(X0, 0.0, [-g[0], -g[1]], opts)
            .unwrap();
        assert_eq!(plus[0], -minus[0]);
        assert_eq!(plus[1], -minus[1]);
    }

    #[test]
    fn gradient_from_flux_matches_hand_values() {
        let law = ward();
        let g = law.gradient_from_flux(X0, 0.0, [-1.0, 0.0]).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-15 && g[1] == 0.0);
        assert_eq!(law.gradient_from_flux(X0, 0.0, [0.0, 0.0]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn continuity_margin_hand_case() {
        // |F(1)(1,0)| = 2, C1 = 2 * 2 * 2 = 8, bound = 8 * 2 * 1 = 16
        let law = ward();
        let margin = law
            .continuity_margin(X0, 0.0, [1.0, 0.0], [0.0, 0.0])
            .unwrap();
        assert!((margin - 14.0).abs() < 1e-12, "margin = {margin}");
        let zero = law.continuity_margin(X0, 0.0, [1.0, 2.0], [1.0, 2.0]).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn monotonicity_margin_darcy_is_round_off_zero() {
        let law = ForchheimerLaw::darcy(1.0);
        let m = law
            .monotonicity_margin(X0, 0.0, [0.4, -2.0], [1.3, 0.2])
            .unwrap();
        assert!(m.abs() < 1e-12, "margin = {m}");
    }

    #[test]
    fn lemma_constants_match_formulas() {
        let c = LemmaConstants::for_law(&ward());
        assert_eq!(c.c1, 8.0);
        assert_eq!(c.c2, 2.0 * (1.0f64 / 8.0));
        let darcy = ForchheimerLaw::darcy(2.0);
        let c = LemmaConstants::for_law(&darcy);
        assert_eq!(c.c1, 2.0);
        assert_eq!(c.c2, 2.0);
    }

    #[test]
    fn constructor_rejects_bad_exponents() {
        assert!(ForchheimerLaw::from_constants(vec![0.0, 1.0, 0.5], vec![1.0; 3]).is_err());
        assert!(ForchheimerLaw::from_constants(vec![0.5, 1.0], vec![1.0; 2]).is_err());
        assert!(ForchheimerLaw::from_constants(vec![0.0], vec![-1.0]).is_err());
    }

    #[test]
    fn law_is_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<ForchheimerLaw>();
    }

    #[test]
    fn sampler_coefficients_are_sampled_pointwise() {
        let a0: CoeffFn = Arc::new(|x: Point, _t| 1.0 + 0.5 * x[0]);
        let law = ForchheimerLaw::new(
            vec![0.0, 1.0],
            vec![Coefficient::Field(a0), Coefficient::Constant(1.0)],
            0.5,
            4.0,
        )
        .unwrap();
        let f = law.eval_f([2.0, 0.0], 0.0, 0.0).unwrap();
        assert_eq!(f, 2.0);
    }

    #[test]
    fn fz_bracketing_inequality_holds_on_samples() {
        // alpha_1 (F(z) - a0) <= z F_z(z) <= alpha_N F(z)
        let laws = [
            ward(),
            ForchheimerLaw::from_constants(vec![0.0, 0.5, 1.0, 2.0], vec![1.0; 4]).unwrap(),
            ForchheimerLaw::from_constants(vec![0.0, 1.5, 3.0], vec![2.0, 0.5, 1.0]).unwrap(),
        ];
        for law in &laws {
            let alpha1 = law.exponents()[1];
            let an = law.alpha_max();
            let sample = law.at(X0, 0.0);
            for k in 0..400 {
                let z = 1e-6 * 1.12f64.powi(k);
                let f = sample.eval_f(z).unwrap();
                let zfz = z * sample.eval_fz(z).unwrap();
                let slack = 1e-12 * (1.0 + f + zfz);
                assert!(alpha1 * (f - sample.a0()) <= zfz + slack, "lower bracket at z={z}");
                assert!(zfz <= an * f + slack, "upper bracket at z={z}");
            }
        }
    }

    proptest! {
        #[test]
        fn z_f_z_is_strictly_increasing(
            (z1, z2) in (0.0..50.0f64, 0.0..50.0f64).prop_filter("distinct", |(a, b)| a != b)
        ) {
            let law = ForchheimerLaw::from_constants(
                vec![0.0, 0.5, 2.0],
                vec![1.0, 0.3, 2.0],
            ).unwrap();
            let (lo, hi) = if z1 < z2 { (z1, z2) } else { (z2, z1) };
            let s = law.at(X0, 0.0);
            prop_assert!(lo * s.eval_f(lo).unwrap() < hi * s.eval_f(hi).unwrap());
        }

        #[test]
        fn solve_s_satisfies_residual_contract(xi in 0.0..1e6f64) {
            let law = ForchheimerLaw::from_constants(
                vec![0.0, 0.5, 1.0, 2.0],
                vec![1.0, 1.0, 1.0, 1.0],
            ).unwrap();
            let opts = RootOpts::default();
            let s = law.solve_s(X0, 0.0, xi, opts).unwrap();
            let f = law.eval_f(X0, 0.0, s).unwrap();
            prop_assert!((s * f - xi).abs() <= opts.tol * xi.max(1.0));
        }

        #[test]
        fn k_is_non_increasing(xi1 in 0.0..1e4f64, xi2 in 0.0..1e4f64) {
            let law = ForchheimerLaw::ward(1.0, 1.0);
            let opts = RootOpts::default();
            let (lo, hi) = if xi1 < xi2 { (xi1, xi2) } else { (xi2, xi1) };
            let k_lo = law.eval_k(X0, 0.0, lo, opts).unwrap();
            let k_hi = law.eval_k(X0, 0.0, hi, opts).unwrap();
            prop_assert!(k_hi <= k_lo + 1e-12);
        }

        #[test]
        fn round_trip_flux_gradient(
            gx in -1e6..1e6f64,
            gy in -1e6..1e6f64,
        ) {
            let law = ForchheimerLaw::ward(1.0, 1.0);
            let opts = RootOpts::default();
            let g = [gx, gy];
            let m = law.flux_from_gradient(X0, 0.0, g, opts).unwrap();
            let back = law.gradient_from_flux(X0, 0.0, m).unwrap();
            let err = ((back[0] - g[0]).powi(2) + (back[1] - g[1]).powi(2)).sqrt();
            let mag = vec_norm(&g);
            prop_assert!(err <= 10.0 * opts.tol * (1.0 + mag), "err = {err:e} at |g| = {mag}");
        }
    }
}
