//! The static median law and its gap-vector form.
//!
//! Each round every agent moves simultaneously: the leftmost to the
//! 1/2-median of (0, x_2), interior agents to the 1-median of their
//! neighbours, the rightmost to the 2-median of (x_{n-1}, 1). In mass
//! coordinates y = F(x) the update is linear, and the gap vector
//! d = (2y_1, y_2 - y_1, ..., y_n - y_{n-1}, 2(F(1) - y_n)) evolves as
//! d <- (I + U/6) d.

use crate::density::{AgentConfiguration, DensityField};
use crate::error::{CoverageError, Result};
use crate::harness::{ExperimentTrace, Law, StopRule, TraceMetadata, Tracer};

/// Mass gaps between consecutive agents, with the two boundary gaps doubled.
#[derive(Debug, Clone, PartialEq)]
pub struct GapVector(Vec<f64>);

impl GapVector {
    pub fn new(d: Vec<f64>) -> Self {
        Self(d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// d_0/2 + d_1 + ... + d_{n-1} + d_n/2, which equals F(1) for a gap
    /// vector built from a configuration.
    pub fn partition_mass(&self) -> f64 {
        let d = &self.0;
        let k = d.len();
        0.5 * (d[0] + d[k - 1]) + d[1..k - 1].iter().sum::<f64>()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn require_pair(n: usize) -> Result<()> {
    if n < 2 {
        return Err(CoverageError::TooFewAgents { what: "static law", n, min: 2 });
    }
    Ok(())
}

pub fn gap_vector(field: &DensityField, config: &AgentConfiguration) -> Result<GapVector> {
    let n = config.len();
    require_pair(n)?;
    let y: Vec<f64> = config.positions().iter().map(|&x| field.cdf_unchecked(x)).collect();
    let mut d = Vec::with_capacity(n + 1);
    d.push(2.0 * y[0]);
    d.extend(y.windows(2).map(|w| w[1] - w[0]));
    d.push(2.0 * (field.total_mass() - y[n - 1]));
    Ok(GapVector(d))
}

/// One simultaneous round of the static law. Every median is taken at the
/// old positions.
pub fn static_step(field: &DensityField, config: &AgentConfiguration) -> Result<AgentConfiguration> {
    let x = config.positions();
    let n = x.len();
    require_pair(n)?;
    let mut next = Vec::with_capacity(n);
    next.push(field.alpha_median_unchecked(0.0, x[1], 0.5));
    for i in 1..n - 1 {
        next.push(field.alpha_median_unchecked(x[i - 1], x[i + 1], 1.0));
    }
    next.push(field.alpha_median_unchecked(x[n - 2], 1.0, 2.0));
    Ok(AgentConfiguration::from_sorted(next))
}

/// Iterates the static law from `config0` until `stop` fires.
pub fn run_static(
    field: &DensityField,
    config0: &AgentConfiguration,
    stop: StopRule,
) -> Result<ExperimentTrace> {
    require_pair(config0.len())?;
    let meta = TraceMetadata::new(Law::Static, field, config0.len());
    let mut tracer = Tracer::new(field, stop, meta)?;
    let mut config = config0.clone();
    let mut t = 0;
    loop {
        if let Some(trace) = tracer.record(t, &config, None) {
            return Ok(trace);
        }
        config = static_step(field, &config)?;
        t += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::StopFired;
    use crate::rng::SplitMix64;
    use crate::spectral::build_system;
    use proptest::prelude::*;

    fn cfg(x: &[f64]) -> AgentConfiguration {
        AgentConfiguration::new(x.to_vec()).unwrap()
    }

    fn close_all(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= tol, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn step_examples() {
        let u = DensityField::uniform();
        let next = static_step(&u, &cfg(&[0.2, 0.6])).unwrap();
        close_all(next.positions(), &[0.2, 2.2 / 3.0], 1e-13);
        let next = static_step(&u, &cfg(&[0.25, 0.75])).unwrap();
        close_all(next.positions(), &[0.25, 0.75], 1e-13);
        let next = static_step(&u, &cfg(&[0.3, 0.3, 0.3])).unwrap();
        close_all(next.positions(), &[0.1, 0.3, 2.3 / 3.0], 1e-13);
    }

    #[test]
    fn single_agent_is_unsupported() {
        let u = DensityField::uniform();
        assert!(matches!(
            static_step(&u, &cfg(&[0.5])),
            Err(CoverageError::TooFewAgents { n: 1, min: 2, .. })
        ));
        assert!(gap_vector(&u, &cfg(&[0.5])).is_err());
    }

    #[test]
    fn gap_examples() {
        let u = DensityField::uniform();
        close_all(gap_vector(&u, &cfg(&[0.2, 0.6])).unwrap().as_slice(), &[0.4, 0.4, 0.8], 1e-15);
        let (opt, _) = u.optimal_configuration(5).unwrap();
        close_all(gap_vector(&u, &opt).unwrap().as_slice(), &[0.2; 6], 1e-13);
        let q = DensityField::quadratic();
        let (opt, _) = q.optimal_configuration(2).unwrap();
        close_all(gap_vector(&q, &opt).unwrap().as_slice(), &[1.0 / 6.0; 3], 1e-13);
    }

    #[test]
    fn converges_from_example_start() {
        let u = DensityField::uniform();
        let trace = run_static(&u, &cfg(&[0.2, 0.6]), StopRule::converged(1e-8, 10_000)).unwrap();
        assert_eq!(trace.metadata.stop_fired, Some(StopFired::Converged));
        close_all(trace.last().positions.as_slice(), &[0.25, 0.75], 1e-4);
    }

    #[test]
    fn starting_at_optimum_stops_immediately() {
        let q = DensityField::quadratic();
        let (opt, _) = q.optimal_configuration(6).unwrap();
        let trace = run_static(&q, &opt, StopRule::converged(1e-20, 100)).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].t, 0);
        assert!(trace.records[0].residual <= 1e-12 * q.total_mass());
    }

    #[test]
    fn robust_to_deletion_and_insertion() {
        let f = DensityField::random_piecewise(&mut SplitMix64::new(5), 4);
        let mut config = cfg(&[0.1, 0.15, 0.3, 0.5, 0.55, 0.9]);
        for _ in 0..20 {
            config = static_step(&f, &config).unwrap();
        }
        let mut x = config.into_inner();
        x.remove(2);
        let trace = run_static(&f, &cfg(&x), StopRule::converged(1e-14, 50_000)).unwrap();
        assert_eq!(trace.metadata.stop_fired, Some(StopFired::Converged));
        let (opt5, _) = f.optimal_configuration(5).unwrap();
        close_all(&trace.last().positions, opt5.positions(), 1e-6);

        let mut x = trace.last().positions.clone();
        x.insert(3, x[2]);
        let trace = run_static(&f, &cfg(&x), StopRule::converged(1e-14, 50_000)).unwrap();
        let (opt6, _) = f.optimal_configuration(6).unwrap();
        close_all(&trace.last().positions, opt6.positions(), 1e-6);
    }

    #[test]
    fn gaps_reach_common_value() {
        let f = DensityField::random_piecewise(&mut SplitMix64::new(9), 3);
        let trace = run_static(&f, &cfg(&[0.0, 0.0, 0.1, 1.0]), StopRule::converged(1e-16, 50_000)).unwrap();
        let last = cfg(&trace.last().positions);
        let d = gap_vector(&f, &last).unwrap();
        let target = f.total_mass() / 4.0;
        assert!(d.as_slice().iter().all(|v| (v - target).abs() <= 1e-7));
    }

    fn random_config(rng: &mut SplitMix64, n: usize) -> AgentConfiguration {
        AgentConfiguration::from_unsorted((0..n).map(|_| rng.next_f64()).collect()).unwrap()
    }

    proptest! {
        #[test]
        fn step_preserves_order_and_matches_linear_gap_dynamics(seed in any::<u64>(), n in 2usize..25) {
            let mut rng = SplitMix64::new(seed);
            let f = DensityField::random_piecewise(&mut rng, 1 + (seed % 5) as usize);
            let sys = build_system(n + 1).unwrap();
            let mut config = random_config(&mut rng, n);
            for _ in 0..10 {
                let d = gap_vector(&f, &config).unwrap();
                prop_assert!((d.partition_mass() - f.total_mass()).abs() <= 1e-12 * f.total_mass());
                prop_assert!(d.as_slice().iter().all(|&v| v >= 0.0));
                let next = static_step(&f, &config).unwrap();
                prop_assert!(next.is_sorted());
                let predicted = sys.apply(d.as_slice()).unwrap();
                let actual = gap_vector(&f, &next).unwrap();
                for (a, p) in actual.as_slice().iter().zip(&predicted) {
                    prop_assert!((a - p).abs() <= 1e-10 * f.total_mass());
                }
                config = next;
            }
        }

        #[test]
        fn step_is_invariant_under_density_scaling(seed in any::<u64>(), lambda in 0.01..100.0f64, n in 2usize..15) {
            let mut rng = SplitMix64::new(seed);
            let f = DensityField::random_piecewise(&mut rng, 3);
            let g = f.scaled(lambda).unwrap();
            let config = random_config(&mut rng, n);
            let a = static_step(&f, &config).unwrap();
            let b = static_step(&g, &config).unwrap();
            for (x, y) in a.positions().iter().zip(b.positions()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
