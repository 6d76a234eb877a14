//! Seeded sampling of jet-space points and relative residual reports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{CompiledExpr, EvalPoint, Expr, ExprError};
use crate::util::ser_sig17;

/// Number of redraws allowed per sample after a domain error.
pub const MAX_RETRIES: usize = 10;

/// Sampling box for jet points. `u0` stays away from zero, where the
/// diffusion formulas are singular.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JetDomain {
    pub t: (f64, f64),
    pub x: (f64, f64),
    pub u0: (f64, f64),
    pub higher: (f64, f64),
}

impl Default for JetDomain {
    fn default() -> Self {
        JetDomain {
            t: (0.0, 1.0),
            x: (-1.0, 1.0),
            u0: (0.5, 2.0),
            higher: (-2.0, 2.0),
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

impl JetDomain {
    /// A degenerate domain: every draw returns the same point.
    pub fn point(t: f64, x: f64, u0: f64, higher: f64) -> Self {
        JetDomain {
            t: (t, t),
            x: (x, x),
            u0: (u0, u0),
            higher: (higher, higher),
        }
    }

    /// Draw `t`, `x`, `u0` … `u_max_jet`.
    pub fn sample(&self, rng: &mut ChaCha8Rng, max_jet: usize) -> EvalPoint {
        let mut p = EvalPoint::new()
            .with("t", draw(rng, self.t))
            .with("x", draw(rng, self.x))
            .with("u0", draw(rng, self.u0));
        for k in 1..=max_jet {
            p.set(&format!("u{k}"), draw(rng, self.higher));
        }
        p
    }
}

/// Sampling box in `t`, `x` and optionally `y` for closed-form checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t: [f64; 2],
    pub x: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<[f64; 2]>,
}

impl Default for Window {
    fn default() -> Self {
        Window {
            t: [0.0, 0.5],
            x: [-1.0, 1.0],
            y: None,
        }
    }
}

impl Window {
    pub fn with_y(mut self, y: [f64; 2]) -> Self {
        self.y = Some(y);
        self
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> EvalPoint {
        let mut p = EvalPoint::new()
            .with("t", draw(rng, (self.t[0], self.t[1])))
            .with("x", draw(rng, (self.x[0], self.x[1])));
        if let Some([lo, hi]) = self.y {
            p.set("y", draw(rng, (lo, hi)));
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleConfig {
    pub seed: u64,
    pub count: usize,
    pub tolerance: f64,
}

impl SampleConfig {
    pub fn new(seed: u64, count: usize, tolerance: f64) -> Self {
        SampleConfig {
            seed,
            count,
            tolerance,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig::new(0, 100, 1e-8)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SampleError {
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("no valid point after {MAX_RETRIES} retries (last error: {0})")]
    DomainExhausted(ExprError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Outcome of evaluating a residual at seeded sample points. Magnitudes are
/// relative: `|r| / (1 + max |additive term|)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub num_samples: usize,
    #[serde(serialize_with = "ser_sig17")]
    pub max_abs: f64,
    #[serde(serialize_with = "ser_sig17")]
    pub rms: f64,
    #[serde(serialize_with = "ser_sig17")]
    pub tolerance: f64,
    pub pass: bool,
    pub worst_point: Option<EvalPoint>,
    pub seed: u64,
    pub retries: usize,
}

impl ResidualReport {
    pub fn from_samples(
        values: &[(f64, EvalPoint)],
        tolerance: f64,
        seed: u64,
        retries: usize,
    ) -> Self {
        let mut max_abs = 0.0f64;
        let mut worst = None;
        let mut sq = 0.0;
        for (v, p) in values {
            sq += v * v;
            if *v > max_abs || worst.is_none() {
                max_abs = max_abs.max(*v);
                worst = Some(p.clone());
            }
        }
        let rms = if values.is_empty() {
            0.0
        } else {
            (sq / values.len() as f64).sqrt()
        };
        ResidualReport {
            num_samples: values.len(),
            max_abs,
            rms,
            tolerance,
            pass: max_abs <= tolerance,
            worst_point: worst,
            seed,
            retries,
        }
    }
}

/// A residual split into its top-level additive terms, compiled once.
#[derive(Debug, Clone)]
pub struct ScaledResidual {
    signs: Vec<f64>,
    guards: usize,
    tape: CompiledExpr,
}

impl ScaledResidual {
    pub fn new(residual: &Expr) -> Self {
        Self::from_terms(residual.additive_terms())
    }

    pub fn from_terms(terms: Vec<(f64, Expr)>) -> Self {
        Self::with_guards(terms, Vec::new())
    }

    /// Points where any guard is not positive count as domain errors.
    pub fn with_guards(terms: Vec<(f64, Expr)>, guards: Vec<Expr>) -> Self {
        let (signs, mut exprs): (Vec<f64>, Vec<Expr>) = terms.into_iter().unzip();
        let n = guards.len();
        exprs.extend(guards);
        if exprs.is_empty() {
            exprs.push(Expr::zero());
        }
        ScaledResidual {
            signs,
            guards: n,
            tape: CompiledExpr::new_multi(&exprs),
        }
    }

    /// `(relative, absolute)` residual at a point.
    pub fn eval(&self, p: &EvalPoint) -> Result<(f64, f64), ExprError> {
        let vals = self.tape.eval_many(p)?;
        let n = self.signs.len();
        if vals[n..n + self.guards].iter().any(|&g| g <= 0.0) {
            return Err(ExprError::Domain("positivity guard violated".into()));
        }
        let mut total = 0.0;
        let mut scale = 0.0f64;
        for (s, v) in self.signs.iter().zip(&vals) {
            total += s * v;
            scale = scale.max(v.abs());
        }
        Ok((total.abs() / (1.0 + scale), total.abs()))
    }
}

/// Draw points with `draw` and evaluate `residual`, redrawing after domain
/// errors. Unbound symbols are reported immediately.
pub fn measure(
    residual: &ScaledResidual,
    config: &SampleConfig,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> EvalPoint,
) -> Result<ResidualReport, SampleError> {
    if config.count == 0 {
        return Err(SampleError::NoSamples);
    }
    let mut rng = config.rng();
    let mut values = Vec::with_capacity(config.count);
    let mut retries = 0;
    for _ in 0..config.count {
        let mut attempt = 0;
        loop {
            let p = draw(&mut rng);
            match residual.eval(&p) {
                Ok((rel, _)) => {
                    values.push((rel, p));
                    break;
                }
                Err(e @ ExprError::Unbound(_)) => return Err(e.into()),
                Err(e) => {
                    if attempt == MAX_RETRIES {
                        return Err(SampleError::DomainExhausted(e));
                    }
                    attempt += 1;
                    retries += 1;
                }
            }
        }
    }
    Ok(ResidualReport::from_samples(
        &values,
        config.tolerance,
        config.seed,
        retries,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn domain_ranges_are_respected() {
        let d = JetDomain::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let p = d.sample(&mut rng, 3);
            assert!((0.5..2.0).contains(&p.get("u0").unwrap()));
            assert!((-2.0..2.0).contains(&p.get("u3").unwrap()));
            assert!((0.0..1.0).contains(&p.get("t").unwrap()));
        }
    }

    #[test]
    fn relative_scaling_uses_largest_term() {
        let r = ScaledResidual::new(&parse("a - b + 1").unwrap());
        let (rel, abs) = r
            .eval(&EvalPoint::from([("a", 10.0), ("b", 9.0)]))
            .unwrap();
        assert_eq!(abs, 2.0);
        assert_eq!(rel, 2.0 / 11.0);
    }

    #[test]
    fn same_seed_same_report() {
        let r = ScaledResidual::new(&parse("u0 - u1*x").unwrap());
        let cfg = SampleConfig::new(42, 20, 1e-8);
        let d = JetDomain::default();
        let a = measure(&r, &cfg, |rng| d.sample(rng, 1)).unwrap();
        let b = measure(&r, &cfg, |rng| d.sample(rng, 1)).unwrap();
        assert_eq!(a, b);
        assert!(a.max_abs >= a.rms && a.rms >= 0.0);
        assert_eq!(a.pass, a.max_abs <= a.tolerance);
    }

    #[test]
    fn retries_are_counted_and_bounded() {
        // ln(x) fails for roughly half the box
        let r = ScaledResidual::new(&parse("ln(x)").unwrap());
        let d = JetDomain::default();
        let rep = measure(&r, &SampleConfig::new(3, 50, 1.0), |rng| d.sample(rng, 0)).unwrap();
        assert!(rep.retries > 0);
        let never = JetDomain::point(0.0, -1.0, 1.0, 0.0);
        assert!(matches!(
            measure(&r, &SampleConfig::new(3, 5, 1.0), |rng| never.sample(rng, 0)),
            Err(SampleError::DomainExhausted(_))
        ));
    }
}
