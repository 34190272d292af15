//! Piecewise-polynomial densities on [0, 1] and the geometry they induce.
//!
//! A [`DensityField`] stores rho as one polynomial (degree at most 4, in the
//! global coordinate x) per breakpoint interval, together with the
//! cumulative mass at every breakpoint. All distances are mass differences
//! `F(b) - F(a)`, evaluated from the closed-form antiderivative, so nothing
//! downstream carries quadrature error.

use serde::{Deserialize, Serialize};

use crate::error::{CoverageError, Result};
use crate::rng::SplitMix64;

pub const MAX_DEGREE: usize = 4;

/// Bracket width at which bisection hands over to the final Newton step.
const BRACKET_TOL: f64 = 5e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Antiderivative vanishing at 0.
    pub fn integral(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + c / (k + 1) as f64)
            * x
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial::new(vec![0.0]);
        }
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn scaled(&self, factor: f64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|c| c * factor).collect())
    }

    fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Real roots in the open interval (lo, hi), found by splitting at the
    /// roots of the derivative and bisecting each monotone piece.
    pub fn roots_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        if self.is_zero() || self.degree() == 0 {
            return Vec::new();
        }
        if self.degree() == 1 {
            let r = -self.coeffs[0] / self.coeffs[1];
            return if r > lo && r < hi { vec![r] } else { Vec::new() };
        }
        let mut knots = vec![lo];
        knots.extend(self.derivative().roots_in(lo, hi));
        knots.push(hi);

        let mut roots = Vec::new();
        for w in knots.windows(2) {
            let (mut a, mut b) = (w[0], w[1]);
            let (fa, fb) = (self.eval(a), self.eval(b));
            if fa == 0.0 {
                if a > lo && roots.last() != Some(&a) {
                    roots.push(a);
                }
                continue;
            }
            if fa.signum() == fb.signum() {
                continue;
            }
            let rising = fb > fa;
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if (self.eval(mid) < 0.0) == rising {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let r = 0.5 * (a + b);
            if r > lo && r < hi {
                roots.push(r);
            }
        }
        roots
    }

    /// (min, max) of the polynomial over [lo, hi].
    pub fn range_on(&self, lo: f64, hi: f64) -> (f64, f64) {
        let mut min = self.eval(lo).min(self.eval(hi));
        let mut max = self.eval(lo).max(self.eval(hi));
        for x in self.derivative().roots_in(lo, hi) {
            let v = self.eval(x);
            min = min.min(v);
            max = max.max(v);
        }
        (min, max)
    }
}

/// JSON form of a piecewise density: `breakpoints` from 0 to 1 and one
/// ascending-power coefficient list per interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub breakpoints: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct DensityField {
    name: String,
    breakpoints: Vec<f64>,
    segments: Vec<Polynomial>,
    /// F at each breakpoint.
    cumulative: Vec<f64>,
    rho_min: f64,
    rho_max: f64,
}

impl DensityField {
    pub fn from_spec(spec: &DensitySpec) -> Result<Self> {
        Self::from_pieces("custom", spec.breakpoints.clone(), spec.coefficients.clone())
    }

    pub fn from_pieces(
        name: impl Into<String>,
        breakpoints: Vec<f64>,
        coefficients: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let invalid = |msg: String| Err(CoverageError::InvalidDensity(msg));

        if breakpoints.len() < 2 {
            return invalid("breakpoints: need at least two entries".into());
        }
        if let Some(i) = breakpoints.iter().position(|b| !b.is_finite()) {
            return invalid(format!("breakpoints[{i}]: not a finite number"));
        }
        if breakpoints[0] != 0.0 || breakpoints[breakpoints.len() - 1] != 1.0 {
            return invalid("breakpoints: must start at 0 and end at 1".into());
        }
        if let Some(i) = breakpoints.windows(2).position(|w| w[0] >= w[1]) {
            return invalid(format!("breakpoints[{}]: not strictly increasing", i + 1));
        }
        if coefficients.len() != breakpoints.len() - 1 {
            return invalid(format!(
                "coefficients: expected {} segments, got {}",
                breakpoints.len() - 1,
                coefficients.len()
            ));
        }

        let mut segments = Vec::with_capacity(coefficients.len());
        let mut rho_min = f64::INFINITY;
        let mut rho_max = 0.0f64;
        for (j, c) in coefficients.into_iter().enumerate() {
            if c.is_empty() || c.len() > MAX_DEGREE + 1 {
                return invalid(format!(
                    "coefficients[{j}]: need 1 to {} entries, got {}",
                    MAX_DEGREE + 1,
                    c.len()
                ));
            }
            if let Some(k) = c.iter().position(|v| !v.is_finite()) {
                return invalid(format!("coefficients[{j}][{k}]: not a finite number"));
            }
            let poly = Polynomial::new(c);
            let (lo, hi) = poly.range_on(breakpoints[j], breakpoints[j + 1]);
            if hi <= 0.0 {
                return invalid(format!("coefficients[{j}]: density is not positive on the segment"));
            }
            if lo < -1e-12 * hi {
                return invalid(format!(
                    "coefficients[{j}]: density takes the negative value {lo:e} on the segment"
                ));
            }
            rho_min = rho_min.min(lo.max(0.0));
            rho_max = rho_max.max(hi);
            segments.push(poly);
        }

        let mut cumulative = Vec::with_capacity(breakpoints.len());
        cumulative.push(0.0);
        for (j, p) in segments.iter().enumerate() {
            let piece = p.integral(breakpoints[j + 1]) - p.integral(breakpoints[j]);
            cumulative.push(cumulative[j] + piece);
        }

        Ok(Self {
            name: name.into(),
            breakpoints,
            segments,
            cumulative,
            rho_min,
            rho_max,
        })
    }

    /// rho = 1.
    pub fn uniform() -> Self {
        Self::from_pieces("uniform", vec![0.0, 1.0], vec![vec![1.0]]).expect("valid preset")
    }

    /// rho(x) = x^2.
    pub fn quadratic() -> Self {
        Self::from_pieces("quadratic", vec![0.0, 1.0], vec![vec![0.0, 0.0, 1.0]])
            .expect("valid preset")
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "uniform" => Some(Self::uniform()),
            "quadratic" => Some(Self::quadratic()),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 2] = ["uniform", "quadratic"];

    /// Parses the JSON density format. Syntax errors carry the line and
    /// column reported by the parser; structural errors name the field.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: DensitySpec = serde_json::from_str(text).map_err(|e| {
            CoverageError::Parse(format!("line {}, column {}: {}", e.line(), e.column(), e))
        })?;
        Self::from_spec(&spec)
    }

    pub fn to_spec(&self) -> DensitySpec {
        DensitySpec {
            breakpoints: self.breakpoints.clone(),
            coefficients: self.segments.iter().map(|p| p.coeffs().to_vec()).collect(),
        }
    }

    /// A random strictly positive piecewise density with `pieces` segments,
    /// polynomial degrees up to 4 and rho_min >= 0.1.
    pub fn random_piecewise(rng: &mut SplitMix64, pieces: usize) -> Self {
        let pieces = pieces.max(1);
        let mut interior: Vec<f64> = (0..pieces - 1).map(|_| 0.05 + 0.9 * rng.next_f64()).collect();
        interior.sort_by(f64::total_cmp);
        interior.dedup();
        let mut breakpoints = vec![0.0];
        breakpoints.extend(interior);
        breakpoints.push(1.0);

        let coefficients = breakpoints
            .windows(2)
            .map(|w| {
                let degree = (rng.next_u64() % (MAX_DEGREE as u64 + 1)) as usize;
                let mut c: Vec<f64> = (0..=degree).map(|_| 4.0 * rng.next_f64() - 2.0).collect();
                let (lo, _) = Polynomial::new(c.clone()).range_on(w[0], w[1]);
                let floor = 0.1 + 2.0 * rng.next_f64();
                c[0] += floor - lo;
                c
            })
            .collect();
        Self::from_pieces("random", breakpoints, coefficients).expect("shifted above zero")
    }

    /// The same field with every coefficient multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(CoverageError::Domain(format!("scale factor {factor} must be positive")));
        }
        Self::from_pieces(
            format!("{}*{factor}", self.name),
            self.breakpoints.clone(),
            self.segments.iter().map(|p| p.scaled(factor).coeffs().to_vec()).collect(),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn rho_min(&self) -> f64 {
        self.rho_min
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    /// F(1).
    pub fn total_mass(&self) -> f64 {
        self.cumulative[self.cumulative.len() - 1]
    }

    fn segment_of(&self, x: f64) -> usize {
        let j = self.breakpoints.partition_point(|&b| b <= x);
        j.saturating_sub(1).min(self.segments.len() - 1)
    }

    fn check_unit(x: f64, what: &str) -> Result<()> {
        if (0.0..=1.0).contains(&x) {
            Ok(())
        } else {
            Err(CoverageError::Domain(format!("{what} = {x} is outside [0, 1]")))
        }
    }

    pub fn rho(&self, x: f64) -> Result<f64> {
        Self::check_unit(x, "x")?;
        Ok(self.segments[self.segment_of(x)].eval(x))
    }

    /// F(x) for x already known to lie in [0, 1].
    pub(crate) fn cdf_unchecked(&self, x: f64) -> f64 {
        if x >= 1.0 {
            return self.total_mass();
        }
        if x <= 0.0 {
            return 0.0;
        }
        let j = self.segment_of(x);
        let p = &self.segments[j];
        self.cumulative[j] + (p.integral(x) - p.integral(self.breakpoints[j]))
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        Self::check_unit(x, "x")?;
        Ok(self.cdf_unchecked(x))
    }

    /// d_rho(a, b) = |F(b) - F(a)|.
    pub fn mass(&self, a: f64, b: f64) -> Result<f64> {
        Self::check_unit(a, "a")?;
        Self::check_unit(b, "b")?;
        if a == b {
            return Ok(0.0);
        }
        Ok((self.cdf_unchecked(b) - self.cdf_unchecked(a)).abs())
    }

    pub fn inverse_cdf(&self, m: f64) -> Result<f64> {
        let total = self.total_mass();
        if !(0.0..=total).contains(&m) {
            return Err(CoverageError::Domain(format!("mass {m} is outside [0, F(1) = {total}]")));
        }
        Ok(self.inverse_cdf_unchecked(m))
    }

    /// Inverse of F for m in [0, F(1)]; larger m clamps to 1.
    ///
    /// Monotone in m: bisection over a fixed bracket sends larger targets
    /// to the right at the first midpoint where the paths diverge, and the
    /// closing Newton step from a shared midpoint is increasing in the
    /// target.
    pub(crate) fn inverse_cdf_unchecked(&self, m: f64) -> f64 {
        if m <= 0.0 {
            return 0.0;
        }
        if m >= self.total_mass() {
            return 1.0;
        }
        let j = (self.cumulative.partition_point(|&c| c <= m) - 1).min(self.segments.len() - 1);
        let p = &self.segments[j];
        let (mut lo, mut hi) = (self.breakpoints[j], self.breakpoints[j + 1]);
        let base = p.integral(lo);
        let target = m - self.cumulative[j];
        let local = |x: f64| p.integral(x) - base;

        while hi - lo > BRACKET_TOL {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if local(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mid = 0.5 * (lo + hi);
        let slope = p.eval(mid);
        if slope > 0.0 {
            (mid - (local(mid) - target) / slope).clamp(lo, hi)
        } else {
            mid
        }
    }

    /// The point c in [a, b] with F(c) = (F(a) + alpha F(b)) / (1 + alpha).
    /// Returns `a` when the interval is degenerate (a >= b).
    pub fn alpha_median(&self, a: f64, b: f64, alpha: f64) -> Result<f64> {
        Self::check_unit(a, "a")?;
        Self::check_unit(b, "b")?;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(CoverageError::Domain(format!("alpha = {alpha} must be finite and >= 0")));
        }
        Ok(self.alpha_median_unchecked(a, b, alpha))
    }

    pub(crate) fn alpha_median_unchecked(&self, a: f64, b: f64, alpha: f64) -> f64 {
        if a >= b {
            return a;
        }
        let (fa, fb) = (self.cdf_unchecked(a), self.cdf_unchecked(b));
        let target = ((fa + alpha * fb) / (1.0 + alpha)).clamp(fa, fb);
        self.inverse_cdf_unchecked(target).clamp(a, b)
    }

    /// Worst-case rho-distance from a point of [0, 1] to its nearest agent.
    pub fn coverage(&self, config: &AgentConfiguration) -> f64 {
        let y: Vec<f64> = config.positions().iter().map(|&x| self.cdf_unchecked(x)).collect();
        let n = y.len();
        let inner = y.windows(2).map(|w| 0.5 * (w[1] - w[0])).fold(0.0, f64::max);
        y[0].max(inner).max(self.total_mass() - y[n - 1])
    }

    /// The unique optimum x_j = F^{-1}(F(1)(2j - 1)/(2n)) and its coverage F(1)/(2n).
    pub fn optimal_configuration(&self, n: usize) -> Result<(AgentConfiguration, f64)> {
        if n == 0 {
            return Err(CoverageError::Domain("optimal configuration needs n >= 1".into()));
        }
        let total = self.total_mass();
        let positions = (1..=n)
            .map(|j| self.inverse_cdf_unchecked(total * (2 * j - 1) as f64 / (2 * n) as f64))
            .collect();
        Ok((AgentConfiguration::from_sorted(positions), total / (2 * n) as f64))
    }
}

/// Agent positions in [0, 1], kept in nondecreasing order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct AgentConfiguration {
    positions: Vec<f64>,
}

impl AgentConfiguration {
    pub fn new(positions: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(CoverageError::Domain("configuration has no agents".into()));
        }
        if let Some((i, x)) = positions.iter().enumerate().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
            return Err(CoverageError::Domain(format!("position {i} = {x} is outside [0, 1]")));
        }
        if let Some(i) = positions.windows(2).position(|w| w[0] > w[1]) {
            return Err(CoverageError::Domain(format!(
                "positions are not sorted at index {}",
                i + 1
            )));
        }
        Ok(Self { positions })
    }

    /// Sorts the input first.
    pub fn from_unsorted(mut positions: Vec<f64>) -> Result<Self> {
        positions.sort_by(f64::total_cmp);
        Self::new(positions)
    }

    pub(crate) fn from_sorted(positions: Vec<f64>) -> Self {
        debug_assert!(positions.windows(2).all(|w| w[0] <= w[1]));
        Self { positions }
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub(crate) fn positions_mut(&mut self) -> &mut Vec<f64> {
        &mut self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_sorted(&self) -> bool {
        self.positions.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.positions
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn cfg(x: &[f64]) -> AgentConfiguration {
        AgentConfiguration::new(x.to_vec()).unwrap()
    }

    fn fields() -> Vec<DensityField> {
        let mut rng = SplitMix64::new(11);
        vec![
            DensityField::uniform(),
            DensityField::quadratic(),
            DensityField::random_piecewise(&mut rng, 3),
            DensityField::random_piecewise(&mut rng, 6),
        ]
    }

    #[test]
    fn mass_examples() {
        let u = DensityField::uniform();
        let q = DensityField::quadratic();
        close(u.mass(0.2, 0.7).unwrap(), 0.5, 1e-15);
        close(q.mass(0.0, 0.5).unwrap(), 1.0 / 24.0, 1e-16);
        assert_eq!(q.mass(0.3, 0.3).unwrap(), 0.0);
        assert!(matches!(u.mass(-0.1, 0.5), Err(CoverageError::Domain(_))));
        assert!(matches!(u.mass(0.1, 1.5), Err(CoverageError::Domain(_))));
    }

    #[test]
    fn inverse_cdf_examples() {
        let u = DensityField::uniform();
        let q = DensityField::quadratic();
        close(u.inverse_cdf(0.25).unwrap(), 0.25, 1e-13);
        close(q.inverse_cdf(1.0 / 6.0).unwrap(), 2f64.powf(-1.0 / 3.0), 1e-13);
        assert_eq!(q.inverse_cdf(0.0).unwrap(), 0.0);
        assert!(q.inverse_cdf(0.5).is_err());
        assert!(q.inverse_cdf(-1e-9).is_err());
    }

    #[test]
    fn alpha_median_examples() {
        let u = DensityField::uniform();
        let q = DensityField::quadratic();
        close(u.alpha_median(0.0, 1.0, 1.0).unwrap(), 0.5, 1e-13);
        close(q.alpha_median(0.0, 1.0, 1.0).unwrap(), 2f64.powf(-1.0 / 3.0), 1e-13);
        close(u.alpha_median(0.0, 0.6, 0.5).unwrap(), 0.2, 1e-13);
        assert_eq!(u.alpha_median(0.4, 0.4, 1.0).unwrap(), 0.4);
        assert_eq!(u.alpha_median(0.6, 0.4, 1.0).unwrap(), 0.6);
        assert!(u.alpha_median(0.1, 0.4, -1.0).is_err());
    }

    #[test]
    fn coverage_examples() {
        let u = DensityField::uniform();
        close(u.coverage(&cfg(&[0.5])), 0.5, 1e-15);
        close(u.coverage(&cfg(&[0.1, 0.3, 0.5, 0.7, 0.9])), 0.1, 1e-15);
        close(u.coverage(&cfg(&[0.2, 0.6])), 0.4, 1e-15);
        assert!(AgentConfiguration::new(vec![]).is_err());
    }

    #[test]
    fn optimal_examples() {
        let u = DensityField::uniform();
        let (c, phi) = u.optimal_configuration(5).unwrap();
        for (x, e) in c.positions().iter().zip([0.1, 0.3, 0.5, 0.7, 0.9]) {
            close(*x, e, 1e-13);
        }
        close(phi, 0.1, 1e-15);
        let (c, phi) = u.optimal_configuration(1).unwrap();
        close(c.positions()[0], 0.5, 1e-13);
        close(phi, 0.5, 1e-15);

        let q = DensityField::quadratic();
        let (c, phi) = q.optimal_configuration(2).unwrap();
        close(c.positions()[0], 0.25f64.cbrt(), 1e-13);
        close(c.positions()[1], 0.75f64.cbrt(), 1e-13);
        close(phi, 1.0 / 12.0, 1e-15);
        assert!(q.optimal_configuration(0).is_err());
    }

    #[test]
    fn optimum_satisfies_equal_gap_conditions() {
        for f in fields() {
            let total = f.total_mass();
            for n in [1, 2, 7, 30] {
                let (c, phi) = f.optimal_configuration(n).unwrap();
                let y: Vec<f64> = c.positions().iter().map(|&x| f.cdf(x).unwrap()).collect();
                let mut q = vec![2.0 * y[0]];
                q.extend(y.windows(2).map(|w| w[1] - w[0]));
                q.push(2.0 * (total - y[n - 1]));
                for v in &q {
                    close(*v, total / n as f64, 1e-10 * total);
                }
                close(f.coverage(&c), phi, 1e-10 * total);
            }
        }
    }

    #[test]
    fn construction_rejects_bad_densities() {
        let neg = DensityField::from_pieces("x", vec![0.0, 1.0], vec![vec![-0.1, 1.0]]);
        assert!(matches!(neg, Err(CoverageError::InvalidDensity(_))));
        let zero = DensityField::from_pieces("x", vec![0.0, 0.5, 1.0], vec![vec![1.0], vec![0.0]]);
        assert!(zero.is_err());
        let dip = DensityField::from_pieces("x", vec![0.0, 1.0], vec![vec![0.2, -1.0, 1.0]]);
        assert!(dip.is_err(), "min of 0.2 - x + x^2 is -0.05");
        let unsorted = DensityField::from_pieces("x", vec![0.0, 0.6, 0.4, 1.0], vec![vec![1.0]; 3]);
        assert!(unsorted.is_err());
        let deg5 = DensityField::from_pieces("x", vec![0.0, 1.0], vec![vec![1.0; 6]]);
        assert!(deg5.is_err());
        let count = DensityField::from_pieces("x", vec![0.0, 0.5, 1.0], vec![vec![1.0]]);
        assert!(count.is_err());
    }

    #[test]
    fn bounds_found_by_minimization() {
        // 1 - x + x^2 has its minimum 3/4 at x = 1/2.
        let f = DensityField::from_pieces("x", vec![0.0, 1.0], vec![vec![1.0, -1.0, 1.0]]).unwrap();
        close(f.rho_min(), 0.75, 1e-14);
        close(f.rho_max(), 1.0, 1e-15);
        let q = DensityField::quadratic();
        assert_eq!(q.rho_min(), 0.0);
        assert_eq!(q.rho_max(), 1.0);
    }

    #[test]
    fn json_roundtrip_and_diagnostics() {
        let f = DensityField::from_json(r#"{"breakpoints":[0,0.5,1],"coefficients":[[1],[0.5,1]]}"#).unwrap();
        close(f.total_mass(), 0.5 + 0.25 + 0.375, 1e-15);
        let back = DensityField::from_spec(&f.to_spec()).unwrap();
        assert_eq!(back.to_spec(), f.to_spec());

        let err = DensityField::from_json("{\n  \"breakpoints\": [0, 1],\n  \"coefficients\": [[1,]]\n}")
            .unwrap_err();
        match err {
            CoverageError::Parse(msg) => assert!(msg.starts_with("line 3"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        let err = DensityField::from_json(r#"{"breakpoints":[0,1],"coefficients":[[1,2,3,4,5,6]]}"#)
            .unwrap_err();
        assert!(err.to_string().contains("coefficients[0]"));
        assert!(DensityField::from_json(r#"{"breakpoints":[0,1]}"#).is_err());
    }

    #[test]
    fn roots_of_quartic() {
        // (x - 0.2)(x - 0.4)(x - 0.7)(x - 0.9)
        let p = Polynomial::new(vec![0.0504, -0.506, 1.67, -2.2, 1.0]);
        let roots = p.roots_in(0.0, 1.0);
        assert_eq!(roots.len(), 4, "{roots:?}");
        for (r, e) in roots.iter().zip([0.2, 0.4, 0.7, 0.9]) {
            close(*r, e, 1e-12);
        }
    }

    #[test]
    fn round_trip_every_density() {
        let mut rng = SplitMix64::new(3);
        for f in fields() {
            for _ in 0..1000 {
                let x = rng.next_f64();
                let back = f.inverse_cdf(f.cdf(x).unwrap()).unwrap();
                close(back, x, 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn metric_axioms(seed in any::<u64>(), a in 0.0..=1.0f64, b in 0.0..=1.0f64, c in 0.0..=1.0f64) {
            let f = DensityField::random_piecewise(&mut SplitMix64::new(seed), 4);
            let (ab, bc, ac) = (f.mass(a, b).unwrap(), f.mass(b, c).unwrap(), f.mass(a, c).unwrap());
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab == 0.0, a == b);
            prop_assert_eq!(ab, f.mass(b, a).unwrap());
            let scale = 1e-14 * f.total_mass();
            prop_assert!(ac <= ab + bc + scale);
            if (a <= b && b <= c) || (c <= b && b <= a) {
                prop_assert!((ac - ab - bc).abs() <= scale);
            }
        }

        #[test]
        fn median_identity(seed in any::<u64>(), a in 0.0..1.0f64, w in 0.0..1.0f64, alpha in 0.0..10.0f64) {
            let f = DensityField::random_piecewise(&mut SplitMix64::new(seed), 5);
            let b = a + (1.0 - a) * w;
            prop_assume!(a < b);
            let c = f.alpha_median(a, b, alpha).unwrap();
            let (fa, fb) = (f.cdf(a).unwrap(), f.cdf(b).unwrap());
            prop_assert!(a <= c && c <= b);
            prop_assert!((f.cdf(c).unwrap() - (fa + alpha * fb) / (1.0 + alpha)).abs() <= 1e-12 * f.total_mass());
        }

        #[test]
        fn density_within_bounds(seed in any::<u64>(), x in 0.0..=1.0f64) {
            let f = DensityField::random_piecewise(&mut SplitMix64::new(seed), 5);
            let r = f.rho(x).unwrap();
            prop_assert!(f.rho_min() > 0.0);
            prop_assert!(f.rho_min() <= r + 1e-12 && r <= f.rho_max() + 1e-12);
        }

        #[test]
        fn optimum_is_scale_equivariant(seed in any::<u64>(), lambda in 0.01..100.0f64, n in 1usize..40) {
            let f = DensityField::random_piecewise(&mut SplitMix64::new(seed), 3);
            let g = f.scaled(lambda).unwrap();
            let (c1, p1) = f.optimal_configuration(n).unwrap();
            let (c2, p2) = g.optimal_configuration(n).unwrap();
            for (x, y) in c1.positions().iter().zip(c2.positions()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
            prop_assert!((p2 - lambda * p1).abs() <= 1e-12 * p2.abs().max(1.0));
        }

        #[test]
        fn inverse_cdf_is_monotone(seed in any::<u64>(), m1 in 0.0..1.0f64, m2 in 0.0..1.0f64) {
            let f = DensityField::random_piecewise(&mut SplitMix64::new(seed), 4);
            let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
            let t = f.total_mass();
            prop_assert!(f.inverse_cdf(lo * t).unwrap() <= f.inverse_cdf(hi * t).unwrap());
            let next = f64::from_bits((hi * t).to_bits() + 1).min(t);
            prop_assert!(f.inverse_cdf(hi * t).unwrap() <= f.inverse_cdf(next).unwrap());
        }
    }
}
