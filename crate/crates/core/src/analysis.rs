//! Error traces, theoretical convergence envelopes, the closed-form error
//! recursion, and output-distribution analysis for both engines.

use thiserror::Error;

use crate::linalg::{
    cholesky_psd, inf_norm_mat, inf_norm_vec, mat_inverse, solve_exact, JacobiSplit, LinalgError,
    Matrix, Vector,
};
use crate::sync_engine::RunTrace;
use crate::topology::WeightedGraph;

#[derive(Debug, Error)]
pub enum AnalysisError {
    /// `‖B‖∞ ≥ 1`: the contraction hypothesis fails and no envelope exists.
    #[error("not contractive: ‖B‖∞ = {0} >= 1")]
    NotContractive(f64),
    #[error("too few samples: need at least 2 rounds after burn-in")]
    TooFewSamples,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Which engine's envelope constants to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Sync,
    Async,
}

/// Constants of the envelope `ε(Δt) = δ·c₁ + c₂^Δt·z`.
#[derive(Debug, Clone, Copy)]
pub struct BoundParams {
    pub c1: f64,
    pub c2: f64,
    pub z: f64,
    pub delta: f64,
    pub variant: Variant,
}

impl BoundParams {
    /// Sync: `c₁ = ‖A‖∞/(1−‖B‖∞)`. Async: `c₁ = 1/(1−‖B‖∞)`.
    /// `c₂ = ‖B‖∞` in both.
    pub fn new(
        variant: Variant,
        split: &JacobiSplit,
        delta: f64,
        z: f64,
    ) -> Result<Self, AnalysisError> {
        if split.norm_b >= 1.0 {
            return Err(AnalysisError::NotContractive(split.norm_b));
        }
        let c1 = match variant {
            Variant::Sync => split.norm_a / (1.0 - split.norm_b),
            Variant::Async => 1.0 / (1.0 - split.norm_b),
        };
        Ok(BoundParams { c1, c2: split.norm_b, z, delta, variant })
    }

    /// ε(Δt) for Δt = 0..=horizon.
    pub fn envelope(&self, horizon: usize) -> Vec<f64> {
        let mut values = Vec::with_capacity(horizon + 1);
        let mut pow = 1.0;
        for _ in 0..=horizon {
            values.push(self.delta * self.c1 + pow * self.z);
            pow *= self.c2;
        }
        values
    }
}

/// Synchronous-round envelope values for Δt = 0..=horizon.
pub fn sync_envelope(
    split: &JacobiSplit,
    delta: f64,
    z: f64,
    horizon: usize,
) -> Result<Vec<f64>, AnalysisError> {
    Ok(BoundParams::new(Variant::Sync, split, delta, z)?.envelope(horizon))
}

/// Asynchronous-round envelope values; Δt counts detected rounds of a fair run.
pub fn async_envelope(
    split: &JacobiSplit,
    delta: f64,
    z: f64,
    rounds: usize,
) -> Result<Vec<f64>, AnalysisError> {
    Ok(BoundParams::new(Variant::Async, split, delta, z)?.envelope(rounds))
}

/// Deviations from the exact solution: `c(Δt) = O(r+Δt) − u`.
#[derive(Debug, Clone)]
pub struct ErrorTrace {
    /// `deviations[k]` is c(k); index 0 is the initial configuration.
    pub deviations: Vec<Vector>,
    /// `‖c(k)‖∞` per entry.
    pub norms: Vec<f64>,
}

pub fn error_trace(trace: &RunTrace, u: &Vector) -> ErrorTrace {
    let mut deviations = Vec::with_capacity(trace.len() + 1);
    deviations.push(trace.initial.outputs.sub(u));
    for c in &trace.configs {
        deviations.push(c.outputs.sub(u));
    }
    let norms = deviations.iter().map(inf_norm_vec).collect();
    ErrorTrace { deviations, norms }
}

/// Error trace over explicit output snapshots (used for async round
/// boundaries). Index 0 is the initial configuration.
pub fn error_trace_from_outputs(initial: &Vector, outputs: &[Vector], u: &Vector) -> ErrorTrace {
    let mut deviations = Vec::with_capacity(outputs.len() + 1);
    deviations.push(initial.sub(u));
    for o in outputs {
        deviations.push(o.sub(u));
    }
    let norms = deviations.iter().map(inf_norm_vec).collect();
    ErrorTrace { deviations, norms }
}

/// Evaluate the closed-form error recursion at a single Δt by direct
/// summation with repeated matrix-vector multiplication:
/// `c(Δt) = Σ_{j=0}^{Δt−1} Bʲ A D(Δt−j) + B^Δt c(0)`,
/// where `deviations[k]` holds D(k+1).
pub fn closed_form_error(
    split: &JacobiSplit,
    deviations: &[Vector],
    c0: &Vector,
    dt: usize,
) -> Vector {
    assert!(deviations.len() >= dt, "need at least {dt} deviation vectors");
    let mut acc = Vector::zeros(c0.len());
    // term j uses D(dt - j); apply B j times
    for j in 0..dt {
        let mut term = split.a.mul_vec(&deviations[dt - j - 1]);
        for _ in 0..j {
            term = split.b.mul_vec(&term);
        }
        acc = acc.add(&term);
    }
    let mut init_term = c0.clone();
    for _ in 0..dt {
        init_term = split.b.mul_vec(&init_term);
    }
    acc.add(&init_term)
}

/// All prefix values c(0)..c(horizon) of the closed form, computed
/// incrementally (input-accumulation and initial-state terms kept separate).
pub fn closed_form_error_trace(
    split: &JacobiSplit,
    deviations: &[Vector],
    c0: &Vector,
    horizon: usize,
) -> Vec<Vector> {
    assert!(deviations.len() >= horizon);
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(c0.clone());
    let mut drift = Vector::zeros(c0.len());
    let mut init_term = c0.clone();
    for d in deviations.iter().take(horizon) {
        drift = split.b.mul_vec(&drift).add(&split.a.mul_vec(d));
        init_term = split.b.mul_vec(&init_term);
        out.push(drift.add(&init_term));
    }
    out
}

/// A Gaussian law over node outputs or inputs.
#[derive(Debug, Clone)]
pub struct DistributionSpec {
    pub mean: Vector,
    pub covariance: Matrix,
}

impl DistributionSpec {
    /// Symmetry within 1e-10 and PSD via Cholesky.
    pub fn validate(&self) -> Result<(), AnalysisError> {
        cholesky_psd(&self.covariance)?;
        Ok(())
    }
}

/// The limit output law claimed for Gaussian inputs:
/// mean `u = W⁻¹v`, covariance `W⁻¹ Σᵥ W⁻ᵀ` (symmetrized).
pub fn theoretical_output_distribution(
    g: &WeightedGraph,
    input: &DistributionSpec,
) -> Result<DistributionSpec, AnalysisError> {
    let w = g.matrix();
    let mean = solve_exact(w, &input.mean)?;
    let w_inv = mat_inverse(w)?;
    let covariance = w_inv.mul_mat(&input.covariance).mul_mat(&w_inv.transpose()).symmetrized();
    Ok(DistributionSpec { mean, covariance })
}

/// One-round conditional output law: `N(A·v + B·prev, A Σᵥ Aᵀ)`.
pub fn per_round_distribution(
    split: &JacobiSplit,
    v: &Vector,
    sigma_v: &Matrix,
    prev_out: &Vector,
) -> DistributionSpec {
    let mean = split.a.mul_vec(v).add(&split.b.mul_vec(prev_out));
    let covariance = split.a.mul_mat(sigma_v).mul_mat(&split.a.transpose()).symmetrized();
    DistributionSpec { mean, covariance }
}

/// Stationary per-round output covariance of the iteration with i.i.d.
/// inputs: the fixed point of `S = A Σᵥ Aᵀ + B S Bᵀ`.
///
/// This is what a long simulated run actually converges to round by round;
/// it differs from the aggregated law of
/// [`theoretical_output_distribution`] whenever B is nonzero, because
/// successive rounds consume fresh independent samples.
pub fn stationary_output_covariance(
    split: &JacobiSplit,
    sigma_v: &Matrix,
) -> Result<Matrix, AnalysisError> {
    if split.norm_b >= 1.0 {
        return Err(AnalysisError::NotContractive(split.norm_b));
    }
    let base = split.a.mul_mat(sigma_v).mul_mat(&split.a.transpose());
    let bt = split.b.transpose();
    let mut s = base.clone();
    let scale = inf_norm_mat(&base).max(1.0);
    for _ in 0..10_000 {
        let next = base.add(&split.b.mul_mat(&s).mul_mat(&bt));
        let delta = inf_norm_mat(&next.sub(&s));
        s = next;
        if delta <= 1e-14 * scale {
            break;
        }
    }
    Ok(s.symmetrized())
}

/// Unbiased sample mean and covariance over a set of output vectors.
pub fn sample_moments(samples: &[Vector]) -> Result<DistributionSpec, AnalysisError> {
    let m = samples.len();
    if m < 2 {
        return Err(AnalysisError::TooFewSamples);
    }
    let n = samples[0].len();
    let mut mean = Vector::zeros(n);
    for s in samples {
        mean = mean.add(s);
    }
    mean = mean.scale(1.0 / m as f64);
    let mut cov = Matrix::zeros(n);
    for s in samples {
        let d = s.sub(&mean);
        for i in 0..n {
            for j in 0..n {
                cov.set(i, j, cov.get(i, j) + d[i] * d[j]);
            }
        }
    }
    let cov = cov.scale(1.0 / (m - 1) as f64);
    Ok(DistributionSpec { mean, covariance: cov })
}

/// Sample moments over the rounds of a trace after a burn-in prefix.
pub fn estimate_output_distribution(
    trace: &RunTrace,
    burn_in: usize,
) -> Result<DistributionSpec, AnalysisError> {
    if trace.len() < burn_in + 2 {
        return Err(AnalysisError::TooFewSamples);
    }
    let samples: Vec<Vector> = trace.configs[burn_in..].iter().map(|c| c.outputs.clone()).collect();
    sample_moments(&samples)
}

/// Rounds after which the `B^k` initial-state term drops below 1e-6.
pub fn default_burn_in(norm_b: f64) -> usize {
    if norm_b <= 0.0 {
        return 1;
    }
    assert!(norm_b < 1.0, "burn-in undefined for non-contractive B");
    ((1e-6f64).ln() / norm_b.ln()).ceil() as usize
}

/// `‖a − b‖F / ‖b‖F`.
pub fn rel_frobenius_error(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).frobenius_norm() / b.frobenius_norm()
}

/// Per-round comparison of observed errors against an envelope.
#[derive(Debug, Clone)]
pub struct BoundRow {
    pub dt: usize,
    pub observed: f64,
    pub envelope: f64,
    pub slack: f64,
    pub violated: bool,
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    pub violations: usize,
    /// Largest observed − envelope over violating rounds (0 when clean).
    pub max_violation: f64,
}

impl BoundReport {
    pub fn is_clean(&self) -> bool {
        self.violations == 0
    }

    /// First Δt at which the envelope drops below a target level.
    pub fn first_dt_below(&self, threshold: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.envelope < threshold).map(|r| r.dt)
    }
}

/// Flag every round where observed error exceeds envelope by more than the
/// fp slack `1e-9·max(1, z)`.
pub fn check_bound(errors: &ErrorTrace, envelope: &[f64], z: f64) -> BoundReport {
    let slack_abs = 1e-9 * z.max(1.0);
    let rows: Vec<BoundRow> = errors
        .norms
        .iter()
        .zip(envelope)
        .enumerate()
        .map(|(dt, (&observed, &env))| BoundRow {
            dt,
            observed,
            envelope: env,
            slack: env - observed,
            violated: observed > env + slack_abs,
        })
        .collect();
    let violations = rows.iter().filter(|r| r.violated).count();
    let max_violation = rows
        .iter()
        .filter(|r| r.violated)
        .map(|r| r.observed - r.envelope)
        .fold(0.0, f64::max);
    BoundReport { rows, violations, max_violation }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inputs::{gen_sequence, InputModel, InputSource};
    use crate::linalg::jacobi_split;
    use crate::sync_engine::{run_sync, Configuration};
    use crate::topology::{build_circle, node_weights, WeightedGraph};

    fn circle_split(n: usize) -> JacobiSplit {
        jacobi_split(build_circle(n, 3.0, -1.0).unwrap().matrix()).unwrap()
    }

    #[test]
    fn error_trace_examples() {
        let g = build_circle(4, 3.0, -1.0).unwrap();
        let nw = node_weights(&g).unwrap();
        let v = Vector::new(vec![1.0; 4]);
        let u = solve_exact(g.matrix(), &v).unwrap();
        let source = InputSource::new(InputModel::Constant { center: v }, 0).unwrap();
        let trace = run_sync(&g, &nw, &gen_sequence(&source, 5), Configuration::new(u.clone()));
        let et = error_trace(&trace, &u);
        assert!(et.norms.iter().all(|&x| x <= 1e-12));

        // δ=0 errors are nonincreasing
        let trace =
            run_sync(&g, &nw, &gen_sequence(&source, 30), Configuration::new(Vector::new(vec![3.0; 4])));
        let et = error_trace(&trace, &u);
        for w in et.norms.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn single_round_error_norm() {
        let u = Vector::new(vec![1.0, 1.0]);
        let off = Vector::new(vec![1.1, 0.8]);
        let g = WeightedGraph::from_matrix(Matrix::identity(2));
        let nw = node_weights(&g).unwrap();
        let source = InputSource::new(InputModel::Constant { center: off.clone() }, 0).unwrap();
        let trace = run_sync(&g, &nw, &gen_sequence(&source, 1), Configuration::new(u.clone()));
        let et = error_trace(&trace, &u);
        assert!((et.norms[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn sync_envelope_examples() {
        let split = circle_split(100);
        // c1 = (1/3)/(1 - 2/3) = 1, so the limit is δ itself
        let env = sync_envelope(&split, 0.25, 2.0, 400).unwrap();
        assert!((env.last().unwrap() - 0.25).abs() < 1e-10);

        // δ=0: pure geometric decay
        let env = sync_envelope(&split, 0.0, 2.0, 5).unwrap();
        for (k, e) in env.iter().enumerate() {
            assert!((e - split.norm_b.powi(k as i32) * 2.0).abs() < 1e-12);
        }

        // z=0: constant δ·c1
        let env = sync_envelope(&split, 0.5, 0.0, 5).unwrap();
        assert!(env.iter().all(|&e| (e - 0.5).abs() < 1e-12));
    }

    #[test]
    fn async_envelope_examples() {
        let split = circle_split(100);
        // c1 = 1/(1 - 2/3) = 3, limit = 0.1 * 3
        let env = async_envelope(&split, 0.1, 5.0, 500).unwrap();
        assert!((env.last().unwrap() - 0.3).abs() < 1e-9);

        let not_contractive =
            jacobi_split(&Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]])).unwrap();
        assert!(matches!(
            async_envelope(&not_contractive, 0.1, 1.0, 10),
            Err(AnalysisError::NotContractive(_))
        ));
    }

    #[test]
    fn closed_form_base_case_and_zero_input() {
        let split = circle_split(6);
        let c0 = Vector::new(vec![1.0, -1.0, 0.5, 0.0, 2.0, -0.5]);
        let d1 = Vector::new(vec![0.1; 6]);
        let got = closed_form_error(&split, &[d1.clone()], &c0, 1);
        let expect = split.a.mul_vec(&d1).add(&split.b.mul_vec(&c0));
        assert!(inf_norm_vec(&got.sub(&expect)) <= 1e-14);

        let zeros = vec![Vector::zeros(6); 4];
        let got = closed_form_error(&split, &zeros, &c0, 4);
        let mut expect = c0.clone();
        for _ in 0..4 {
            expect = split.b.mul_vec(&expect);
        }
        assert!(inf_norm_vec(&got.sub(&expect)) <= 1e-14);
    }

    #[test]
    fn closed_form_direct_and_incremental_agree() {
        let split = circle_split(5);
        let source = InputSource::new(
            InputModel::BoxBounded { center: Vector::zeros(5), delta: 0.7 },
            13,
        )
        .unwrap();
        let seq = gen_sequence(&source, 20);
        let c0 = Vector::new(vec![2.0, -3.0, 1.0, 0.0, 4.0]);
        let trace = closed_form_error_trace(&split, &seq.deviations, &c0, 20);
        for dt in [0, 1, 5, 20] {
            let direct = closed_form_error(&split, &seq.deviations, &c0, dt);
            assert!(inf_norm_vec(&direct.sub(&trace[dt])) <= 1e-12);
        }
    }

    #[test]
    fn closed_form_matches_engine() {
        let g = build_circle(8, 3.0, -1.0).unwrap();
        let nw = node_weights(&g).unwrap();
        let split = jacobi_split(g.matrix()).unwrap();
        let v = Vector::new(vec![0.5; 8]);
        let u = solve_exact(g.matrix(), &v).unwrap();
        let source =
            InputSource::new(InputModel::BoxBounded { center: v, delta: 0.4 }, 3).unwrap();
        let seq = gen_sequence(&source, 50);
        let initial = Configuration::new(Vector::new(vec![-2.0; 8]));
        let c0 = initial.outputs.sub(&u);
        let z = inf_norm_vec(&c0);
        let trace = run_sync(&g, &nw, &seq, initial);
        let et = error_trace(&trace, &u);
        let oracle = closed_form_error_trace(&split, &seq.deviations, &c0, 50);
        for (dt, (obs, exp)) in et.deviations.iter().zip(&oracle).enumerate() {
            assert!(
                inf_norm_vec(&obs.sub(exp)) <= 1e-10 * (1.0 + z),
                "mismatch at round {dt}"
            );
        }
    }

    #[test]
    fn theoretical_distribution_examples() {
        // W = I: output law equals input law
        let g = WeightedGraph::from_matrix(Matrix::identity(2));
        let input = DistributionSpec {
            mean: Vector::new(vec![1.0, 2.0]),
            covariance: Matrix::from_diag(&[0.5, 2.0]),
        };
        let out = theoretical_output_distribution(&g, &input).unwrap();
        assert!(inf_norm_vec(&out.mean.sub(&input.mean)) <= 1e-12);
        assert!(inf_norm_mat(&out.covariance.sub(&input.covariance)) <= 1e-12);

        // diagonal case
        let g = WeightedGraph::from_matrix(Matrix::from_diag(&[2.0, 2.0]));
        let input =
            DistributionSpec { mean: Vector::new(vec![2.0, 4.0]), covariance: Matrix::identity(2) };
        let out = theoretical_output_distribution(&g, &input).unwrap();
        assert!(inf_norm_vec(&out.mean.sub(&Vector::new(vec![1.0, 2.0]))) <= 1e-12);
        assert!(inf_norm_mat(&out.covariance.sub(&Matrix::identity(2).scale(0.25))) <= 1e-12);
        out.validate().unwrap();
    }

    #[test]
    fn circle_output_covariance_correlates_neighbors() {
        let g = build_circle(100, 3.0, -1.0).unwrap();
        let input = DistributionSpec {
            mean: Vector::zeros(100),
            covariance: Matrix::identity(100).scale(0.04),
        };
        let out = theoretical_output_distribution(&g, &input).unwrap();
        // uncorrelated inputs but positively correlated neighbor outputs
        for i in 0..100 {
            let j = (i + 1) % 100;
            assert!(out.covariance.get(i, j) > 0.0);
        }
    }

    #[test]
    fn per_round_distribution_examples() {
        let ident = jacobi_split(&Matrix::identity(2)).unwrap();
        let v = Vector::new(vec![1.0, -1.0]);
        let d = per_round_distribution(&ident, &v, &Matrix::identity(2), &Vector::zeros(2));
        assert_eq!(d.mean, v);
        assert!(inf_norm_mat(&d.covariance.sub(&Matrix::identity(2))) <= 1e-12);

        let w = Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let split = jacobi_split(&w).unwrap();
        let u = solve_exact(&w, &v).unwrap();
        let d = per_round_distribution(&split, &v, &Matrix::identity(2), &u);
        assert!(inf_norm_vec(&d.mean.sub(&u)) <= 1e-12, "fixed point mean");
        assert!(inf_norm_mat(&d.covariance.sub(&Matrix::identity(2).scale(0.25))) <= 1e-12);
    }

    #[test]
    fn moment_estimation_examples() {
        let g = WeightedGraph::from_matrix(Matrix::identity(2));
        let nw = node_weights(&g).unwrap();
        let v = Vector::new(vec![3.0, -1.0]);
        let source = InputSource::new(InputModel::Constant { center: v.clone() }, 0).unwrap();
        let trace = run_sync(&g, &nw, &gen_sequence(&source, 10), Configuration::new(Vector::zeros(2)));
        let est = estimate_output_distribution(&trace, 2).unwrap();
        assert!(inf_norm_vec(&est.mean.sub(&v)) <= 1e-12);
        assert!(inf_norm_mat(&est.covariance) <= 1e-12);

        assert!(matches!(
            estimate_output_distribution(&trace, 9),
            Err(AnalysisError::TooFewSamples)
        ));
    }

    #[test]
    fn w_inverse_identity_via_split() {
        let g = build_circle(30, 3.0, -1.0).unwrap();
        let split = jacobi_split(g.matrix()).unwrap();
        let b_hat = mat_inverse(&Matrix::identity(30).sub(&split.b)).unwrap();
        let w_inv = mat_inverse(g.matrix()).unwrap();
        let diff = b_hat.mul_mat(&split.a).sub(&w_inv);
        assert!(inf_norm_mat(&diff) <= 1e-8);
    }

    #[test]
    fn stationary_covariance_solves_lyapunov() {
        let w = Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let split = jacobi_split(&w).unwrap();
        let s = stationary_output_covariance(&split, &Matrix::identity(2)).unwrap();
        // fixed point: S = A A^T + B S B^T, here (1/3)·I
        assert!(inf_norm_mat(&s.sub(&Matrix::identity(2).scale(1.0 / 3.0))) <= 1e-12);
    }

    #[test]
    fn check_bound_examples() {
        let zeros = ErrorTrace { deviations: vec![], norms: vec![0.0; 5] };
        let env = vec![1.0; 5];
        assert!(check_bound(&zeros, &env, 1.0).is_clean());

        let equal = ErrorTrace { deviations: vec![], norms: vec![1.0; 5] };
        assert!(check_bound(&equal, &env, 1.0).is_clean());

        let over = ErrorTrace { deviations: vec![], norms: vec![2.0; 5] };
        let report = check_bound(&over, &env, 1.0);
        assert_eq!(report.violations, 5);
        assert!((report.max_violation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn burn_in_makes_initial_term_negligible() {
        let k = default_burn_in(2.0 / 3.0);
        assert!((2.0f64 / 3.0).powi(k as i32) < 1e-6);
        assert!((2.0f64 / 3.0).powi(k as i32 - 1) >= 1e-6);
    }
}
