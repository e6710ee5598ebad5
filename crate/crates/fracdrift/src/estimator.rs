//! Projection least-squares estimation of the drift-like function from an
//! ensemble of observed paths, with penalized dimension selection.
//!
//! For a basis `phi_1..phi_m` the estimator solves `Psi_m theta = z` where
//! `Psi_m` is the Gram matrix in `L2(d<M>)` and `z` collects the averaged
//! left-point projections of the path increments. The selected dimension
//! minimizes `gamma_N + pen` over a candidate set, with the penalty constant
//! either fixed or calibrated by the slope heuristic.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::basis::BasisFamily;
use crate::error::{Error, Result};
use crate::grid::{Ensemble, TimeGrid};
use crate::qv::QuadVarModel;
use crate::simulate::RngStream;

const GRAM_CONDITION_LIMIT: f64 = 1e12;
const GRAM_REL_TOL: f64 = 1e-10;

/// Gram matrix `[Psi_m]_jk = int_0^T phi_j phi_k d<M>` together with its
/// Cholesky factor and a spectral condition estimate.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    dim: usize,
    matrix: DMatrix<f64>,
    factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    condition: f64,
}

impl GramMatrix {
    /// Build `Psi_m` by quadrature and factor it. Fails with a
    /// singular-design error when the factorization breaks down or the
    /// condition estimate exceeds `1e12`; no regularization is applied.
    pub fn new(family: &BasisFamily, dim: usize, qv: &QuadVarModel) -> Result<Self> {
        if dim == 0 || dim > family.max_dim() {
            return Err(Error::Dimension(format!(
                "dimension {dim} outside 1..={}",
                family.max_dim()
            )));
        }
        let horizon = family.horizon();
        let mut matrix = DMatrix::<f64>::zeros(dim, dim);
        for j in 0..dim {
            for k in j..dim {
                let entry = qv.integrate_with_tol(
                    |s| family.eval(j + 1, s) * family.eval(k + 1, s),
                    0.0,
                    horizon,
                    GRAM_REL_TOL,
                )?;
                matrix[(j, k)] = entry;
                matrix[(k, j)] = entry;
            }
        }
        Self::from_matrix(matrix)
    }

    /// Wrap an explicitly assembled symmetric positive-definite matrix.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let dim = matrix.nrows();
        let eig = matrix.clone().symmetric_eigen();
        let max_ev = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let min_ev = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        let condition = if min_ev > 0.0 { max_ev / min_ev } else { f64::INFINITY };
        let factor = match matrix.clone().cholesky() {
            Some(f) if condition.is_finite() && condition <= GRAM_CONDITION_LIMIT => f,
            _ => return Err(Error::SingularDesign { dim, condition }),
        };
        Ok(Self { dim, matrix, factor, condition })
    }

    /// Leading `m x m` principal block, refactored.
    pub fn leading(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.dim {
            return Err(Error::Dimension(format!("dimension {m} outside 1..={}", self.dim)));
        }
        Self::from_matrix(self.matrix.view((0, 0), (m, m)).into_owned())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Solve `Psi theta = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(rhs.len(), self.dim);
        let b = DVector::from_column_slice(rhs);
        self.factor.solve(&b).as_slice().to_vec()
    }

    /// `v' Psi v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim);
        let x = DVector::from_column_slice(v);
        (&self.matrix * &x).dot(&x)
    }

    /// Lower Cholesky factor `L` with `Psi = L L'`.
    pub fn lower(&self) -> DMatrix<f64> {
        self.factor.l()
    }
}

/// Basis values tabulated at the left grid nodes, row-major by node.
/// Shared across paths and repetitions.
///
/// `first_step` encodes which increments are observed: 0 when the process
/// is recorded from `t_0 = 0` (its value there vanishes by definition), 1
/// when the record starts at `t_1 = T/n` and the initial increment is
/// unavailable, which also keeps singular drifts away from the origin.
#[derive(Debug, Clone)]
pub struct BasisTable {
    dim: usize,
    grid: TimeGrid,
    first_step: usize,
    values: Vec<f64>,
}

impl BasisTable {
    pub fn new(family: &BasisFamily, grid: TimeGrid, dim: usize) -> Result<Self> {
        Self::with_offset(family, grid, dim, 0)
    }

    pub fn with_offset(family: &BasisFamily, grid: TimeGrid, dim: usize, first_step: usize) -> Result<Self> {
        if dim == 0 || dim > family.max_dim() {
            return Err(Error::Dimension(format!(
                "dimension {dim} outside 1..={}",
                family.max_dim()
            )));
        }
        if first_step >= grid.steps() {
            return Err(Error::Dimension(format!(
                "observation offset {first_step} leaves no increments on a {}-step grid",
                grid.steps()
            )));
        }
        let n = grid.steps();
        let mut values = vec![0.0; n * dim];
        for l in 0..n {
            family.eval_into(dim, grid.node(l), &mut values[l * dim..(l + 1) * dim]);
        }
        Ok(Self { dim, grid, first_step, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn first_step(&self) -> usize {
        self.first_step
    }

    fn row(&self, l: usize) -> &[f64] {
        &self.values[l * self.dim..(l + 1) * self.dim]
    }

    /// `sum_l phi_j(t_l) (x_{l+1} - x_l)` over the observed increments of
    /// one path's values.
    pub fn project_path(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.grid.steps() + 1);
        let mut acc = vec![0.0; self.dim];
        for l in self.first_step..self.grid.steps() {
            let d = values[l + 1] - values[l];
            for (a, v) in acc.iter_mut().zip(self.row(l)) {
                *a += v * d;
            }
        }
        acc
    }
}

/// Deterministic pairwise-tree sum of `leaf(i)` over `lo..hi`: leaves are
/// combined in a fixed binary tree keyed only on the index range, so the
/// result is bit-identical regardless of the number of worker threads.
pub(crate) fn pairwise_map_sum<F>(lo: usize, hi: usize, leaf_size: usize, leaf: &F) -> Vec<f64>
where
    F: Fn(usize) -> Vec<f64> + Sync,
{
    debug_assert!(lo < hi);
    if hi - lo <= 4 {
        let mut acc = leaf(lo);
        for i in lo + 1..hi {
            for (a, b) in acc.iter_mut().zip(leaf(i)) {
                *a += b;
            }
        }
        acc
    } else {
        let mid = lo + (hi - lo) / 2;
        let (mut left, right) = rayon::join(
            || pairwise_map_sum(lo, mid, leaf_size, leaf),
            || pairwise_map_sum(mid, hi, leaf_size, leaf),
        );
        for (a, b) in left.iter_mut().zip(right) {
            *a += b;
        }
        left
    }
}

/// Discrete projection vector `z`: per copy the left-point sums
/// `sum_l phi_j(t_l)(Z_{t_{l+1}} - Z_{t_l})`, averaged over the `N` copies.
pub fn project_data(ensemble: &Ensemble, family: &BasisFamily, dim: usize) -> Result<Vec<f64>> {
    let table = BasisTable::new(family, ensemble.grid(), dim)?;
    project_data_with_table(ensemble, &table)
}

/// [`project_data`] against a precomputed basis table.
pub fn project_data_with_table(ensemble: &Ensemble, table: &BasisTable) -> Result<Vec<f64>> {
    if table.grid() != ensemble.grid() {
        return Err(Error::Dimension("basis table grid differs from ensemble grid".into()));
    }
    let n_copies = ensemble.n_copies();
    if table.dim() > n_copies {
        return Err(Error::Dimension(format!(
            "dimension {} exceeds the number of copies {}",
            table.dim(),
            n_copies
        )));
    }
    let mut z = pairwise_map_sum(0, n_copies, table.dim(), &|i| {
        table.project_path(ensemble.path(i).values())
    });
    let inv = 1.0 / n_copies as f64;
    for zj in z.iter_mut() {
        *zj *= inv;
    }
    Ok(z)
}

/// Projection vector of a pure-noise ensemble, simulated on the fly.
///
/// Copy `i` is drawn from `streams.stream(first_stream + i)` with the given
/// per-step standard deviations, projected, and reduced over copies by the
/// same pairwise tree as [`project_data`]; the result is bit-identical to
/// materializing the ensemble first, without storing any path.
pub fn project_simulated_noise(
    table: &BasisTable,
    step_stds: &[f64],
    n_copies: usize,
    streams: &RngStream,
    first_stream: u64,
) -> Result<Vec<f64>> {
    if step_stds.len() != table.grid().steps() {
        return Err(Error::Dimension("step standard deviations do not match the grid".into()));
    }
    if table.dim() > n_copies {
        return Err(Error::Dimension(format!(
            "dimension {} exceeds the number of copies {}",
            table.dim(),
            n_copies
        )));
    }
    let dim = table.dim();
    let n = table.grid().steps();
    let first = table.first_step();
    let mut z = pairwise_map_sum(0, n_copies, dim, &|i| {
        let mut rng = streams.stream(first_stream + i as u64);
        let mut acc = vec![0.0; dim];
        // mirror the rounding of a materialized path: accumulate the running
        // value and project its stored differences
        let mut prev = 0.0;
        for l in 0..n {
            let g: f64 = StandardNormal.sample(&mut rng);
            let cur = prev + step_stds[l] * g;
            let d = cur - prev;
            prev = cur;
            if l >= first {
                for (a, v) in acc.iter_mut().zip(table.row(l)) {
                    *a += v * d;
                }
            }
        }
        acc
    });
    let inv = 1.0 / n_copies as f64;
    for zj in z.iter_mut() {
        *zj *= inv;
    }
    Ok(z)
}

/// Projection vector of an ensemble simulated on the fly from shared drift
/// increments and per-step noise scales; copy `i` uses
/// `streams.stream(first_stream + i)`. Bit-identical to materializing the
/// ensemble with [`crate::simulate::simulate_z_with_drift`] and projecting.
pub fn project_simulated_paths(
    table: &BasisTable,
    drift_increments: &[f64],
    step_stds: &[f64],
    n_copies: usize,
    streams: &RngStream,
    first_stream: u64,
) -> Result<Vec<f64>> {
    let n = table.grid().steps();
    if step_stds.len() != n || drift_increments.len() != n {
        return Err(Error::Dimension("increment arrays do not match the grid".into()));
    }
    if table.dim() > n_copies {
        return Err(Error::Dimension(format!(
            "dimension {} exceeds the number of copies {}",
            table.dim(),
            n_copies
        )));
    }
    let dim = table.dim();
    let first = table.first_step();
    let mut z = pairwise_map_sum(0, n_copies, dim, &|i| {
        let mut rng = streams.stream(first_stream + i as u64);
        let mut acc = vec![0.0; dim];
        let mut prev = 0.0;
        for l in 0..n {
            let g: f64 = StandardNormal.sample(&mut rng);
            let cur = prev + (drift_increments[l] + step_stds[l] * g);
            let d = cur - prev;
            prev = cur;
            if l >= first {
                for (a, v) in acc.iter_mut().zip(table.row(l)) {
                    *a += v * d;
                }
            }
        }
        acc
    });
    let inv = 1.0 / n_copies as f64;
    for zj in z.iter_mut() {
        *zj *= inv;
    }
    Ok(z)
}

/// One exact draw of the continuous-time projection vector under pure noise:
/// `z ~ N(0, Psi / N)`, sampled through the Cholesky factor of `Psi`.
pub fn sample_exact_projections(gram: &GramMatrix, n_copies: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dim = gram.dim();
    let g = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
    let scaled = gram.lower() * g / (n_copies as f64).sqrt();
    scaled.as_slice().to_vec()
}

/// Per-dimension record kept by the model selection rule.
#[derive(Debug, Clone, Serialize)]
pub struct TraceEntry {
    pub dim: usize,
    pub objective: f64,
    pub penalty: f64,
    pub criterion: f64,
}

/// A fitted projection estimator: coefficients of `phi_1..phi_dim`, the
/// objective value, and (after selection) the per-dimension trace and the
/// penalty constant that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub dim: usize,
    pub coefficients: Vec<f64>,
    pub objective: f64,
    pub penalty_constant: Option<f64>,
    pub trace: Vec<TraceEntry>,
    pub selected: bool,
}

impl FitResult {
    pub fn eval(&self, family: &BasisFamily, t: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(j, c)| c * family.eval(j + 1, t))
            .sum()
    }
}

/// Solve the projection problem for a fixed dimension.
pub fn fit(ensemble: &Ensemble, family: &BasisFamily, dim: usize, qv: &QuadVarModel) -> Result<FitResult> {
    let gram = GramMatrix::new(family, dim, qv)?;
    let z = project_data(ensemble, family, dim)?;
    Ok(fit_from_parts(&gram, &z))
}

/// Coefficients and objective from precomputed parts: `theta = Psi^{-1} z`,
/// `gamma = -z' theta`.
pub fn fit_from_parts(gram: &GramMatrix, z: &[f64]) -> FitResult {
    let theta = gram.solve(z);
    let objective = -dot(z, &theta);
    FitResult {
        dim: gram.dim(),
        coefficients: theta,
        objective,
        penalty_constant: None,
        trace: Vec::new(),
        selected: false,
    }
}

/// `pen(m) = c_cal m / N`.
pub fn penalty(dim: usize, n_copies: usize, c_cal: f64) -> f64 {
    c_cal * dim as f64 / n_copies as f64
}

/// Penalty calibration: a fixed constant, or the slope heuristic fitted on
/// the over-fitting end of the candidate dimensions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PenaltyConfig {
    Fixed { c_cal: f64 },
    SlopeHeuristic { window_fraction: f64 },
}

impl PenaltyConfig {
    pub fn fixed(c_cal: f64) -> Result<Self> {
        if !(c_cal.is_finite() && c_cal > 0.0) {
            return Err(Error::Domain(format!("penalty constant must be positive, got {c_cal}")));
        }
        Ok(Self::Fixed { c_cal })
    }

    pub fn slope_heuristic() -> Self {
        Self::SlopeHeuristic { window_fraction: 0.5 }
    }
}

/// Slope-heuristic constant: regress `-gamma_N` on `m/N` over the upper
/// `window_fraction` of the candidate dimensions and return twice the fitted
/// slope, floored away from zero.
pub fn calibrate_slope(per_dim: &[(usize, f64)], n_copies: usize, window_fraction: f64) -> f64 {
    let len = per_dim.len();
    let take = ((len as f64 * window_fraction).ceil() as usize).clamp(2.min(len), len);
    let window = &per_dim[len - take..];
    let xs: Vec<f64> = window.iter().map(|(m, _)| *m as f64 / n_copies as f64).collect();
    let ys: Vec<f64> = window.iter().map(|(_, g)| -g).collect();
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        cov += (x - x_mean) * (y - y_mean);
        var += (x - x_mean) * (x - x_mean);
    }
    let slope = if var > 0.0 { cov / var } else { 0.0 };
    (2.0 * slope).max(1e-6)
}

/// Penalized model selection over the candidate dimensions (ascending).
/// Ties in the criterion break towards the smallest dimension.
pub fn select_model(
    ensemble: &Ensemble,
    family: &BasisFamily,
    dims: &[usize],
    qv: &QuadVarModel,
    penalty_cfg: &PenaltyConfig,
) -> Result<FitResult> {
    let dims = checked_dims(dims, ensemble.n_copies())?;
    let max_dim = *dims.last().unwrap();
    let gram_max = GramMatrix::new(family, max_dim, qv)?;
    let grams: Vec<GramMatrix> = dims.iter().map(|m| gram_max.leading(*m)).collect::<Result<_>>()?;
    let z_max = project_data(ensemble, family, max_dim)?;
    Ok(select_from_parts(&grams, &z_max, &dims, ensemble.n_copies(), penalty_cfg))
}

/// Selection from precomputed Gram factors (one per candidate dimension,
/// same order) and the projection vector at the largest dimension.
pub fn select_from_parts(
    grams: &[GramMatrix],
    z_max: &[f64],
    dims: &[usize],
    n_copies: usize,
    penalty_cfg: &PenaltyConfig,
) -> FitResult {
    debug_assert_eq!(grams.len(), dims.len());
    let fits: Vec<FitResult> = grams
        .iter()
        .zip(dims)
        .map(|(gram, m)| fit_from_parts(gram, &z_max[..*m]))
        .collect();
    let per_dim: Vec<(usize, f64)> = dims.iter().copied().zip(fits.iter().map(|f| f.objective)).collect();
    let c_cal = match penalty_cfg {
        PenaltyConfig::Fixed { c_cal } => *c_cal,
        PenaltyConfig::SlopeHeuristic { window_fraction } => {
            calibrate_slope(&per_dim, n_copies, *window_fraction)
        }
    };
    let trace: Vec<TraceEntry> = per_dim
        .iter()
        .map(|(m, gamma)| {
            let pen = penalty(*m, n_copies, c_cal);
            TraceEntry { dim: *m, objective: *gamma, penalty: pen, criterion: gamma + pen }
        })
        .collect();
    let mut best = 0;
    for (k, entry) in trace.iter().enumerate() {
        if entry.criterion < trace[best].criterion {
            best = k;
        }
    }
    let mut chosen = fits.into_iter().nth(best).unwrap();
    chosen.penalty_constant = Some(c_cal);
    chosen.trace = trace;
    chosen.selected = true;
    chosen
}

fn checked_dims(dims: &[usize], n_copies: usize) -> Result<Vec<usize>> {
    if dims.is_empty() {
        return Err(Error::Dimension("empty candidate dimension set".into()));
    }
    let mut sorted = dims.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted[0] == 0 || *sorted.last().unwrap() > n_copies {
        return Err(Error::Dimension(format!(
            "candidate dimensions must lie in 1..={n_copies}"
        )));
    }
    Ok(sorted)
}

/// Norm used by [`mise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MiseNorm {
    /// `L2(d<M>)`.
    QuadVar,
    /// `L2(dt)`.
    Lebesgue,
}

/// Integrated squared error `int_lower^upper (estimate - truth)^2 dnu` with
/// `nu = d<M>` or `nu = dt`.
pub fn mise(
    estimate: &dyn Fn(f64) -> f64,
    truth: &dyn Fn(f64) -> f64,
    qv: &QuadVarModel,
    norm: MiseNorm,
    lower: f64,
    upper: f64,
) -> Result<f64> {
    let sq = |t: f64| {
        let d = estimate(t) - truth(t);
        d * d
    };
    match norm {
        MiseNorm::QuadVar => qv.integrate(sq, lower, upper),
        MiseNorm::Lebesgue => QuadVarModel::Lebesgue.integrate(sq, lower, upper),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SamplePath;
    use crate::simulate;
    use approx::assert_relative_eq;

    fn trig(m: usize) -> BasisFamily {
        BasisFamily::trigonometric(1.0, m).unwrap()
    }

    #[test]
    fn gram_is_identity_for_trig_lebesgue() {
        let gram = GramMatrix::new(&trig(6), 6, &QuadVarModel::Lebesgue).unwrap();
        for j in 0..6 {
            for k in 0..6 {
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!((gram.matrix()[(j, k)] - expect).abs() < 1e-10);
            }
        }
        assert!(gram.condition() < 1.0 + 1e-8);
    }

    #[test]
    fn gram_constant_entry_is_one_for_any_hurst() {
        for h in [0.5, 0.6, 0.75, 0.9] {
            let qv = QuadVarModel::molchan(h).unwrap();
            let gram = GramMatrix::new(&trig(1), 1, &qv).unwrap();
            assert_relative_eq!(gram.matrix()[(0, 0)], 1.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn gram_weighted_basis_first_entry() {
        // phi_1 = sqrt(2H) t^((2H-1)/2): int phi_1^2 mu dt = 2H (2-2H) int t^0 dt...
        // for H = 0.6 the integrand is the constant 1.2 * 0.8 = 0.96
        let qv = QuadVarModel::molchan(0.6).unwrap();
        let fam = BasisFamily::mu_weighted(qv.clone(), 1.0, 1).unwrap();
        let gram = GramMatrix::new(&fam, 1, &qv).unwrap();
        assert_relative_eq!(gram.matrix()[(0, 0)], 0.96, max_relative = 1e-8);
    }

    #[test]
    fn gram_rejects_rank_deficiency() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            GramMatrix::from_matrix(m),
            Err(Error::SingularDesign { dim: 2, .. })
        ));
    }

    fn path_from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> SamplePath {
        let values = grid.nodes().map(f).collect();
        SamplePath::new(grid, values).unwrap()
    }

    #[test]
    fn projection_of_constant_paths_vanishes() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let ens = Ensemble::new(vec![path_from_fn(grid, |_| 3.7); 4]).unwrap();
        let z = project_data(&ens, &trig(3), 3).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn projection_telescopes_on_the_constant_function() {
        let grid = TimeGrid::new(1.0, 128).unwrap();
        let ens = Ensemble::new(vec![path_from_fn(grid, |t| t)]).unwrap();
        let z = project_data(&ens, &trig(1), 1).unwrap();
        assert_relative_eq!(z[0], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn projection_left_point_error_bound() {
        let grid = TimeGrid::new(1.0, 5000).unwrap();
        let ens = Ensemble::new(vec![path_from_fn(grid, |t| t); 2]).unwrap();
        let z = project_data(&ens, &trig(2), 2).unwrap();
        // int sqrt(2) cos(2 pi s) ds = 0; the left-point sum errs by at most
        // sup|phi'| T / n per the mean-value bound
        assert!(z[1].abs() <= 2f64.sqrt() * 2.0 * std::f64::consts::PI / 5000.0);
    }

    #[test]
    fn projection_requires_dim_at_most_copies() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let ens = Ensemble::new(vec![path_from_fn(grid, |t| t)]).unwrap();
        assert!(matches!(project_data(&ens, &trig(2), 2), Err(Error::Dimension(_))));
    }

    #[test]
    fn streamed_noise_projection_matches_materialized_ensemble() {
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let qv = QuadVarModel::molchan(0.7).unwrap();
        let stds = simulate::martingale_step_stds(grid, &qv).unwrap();
        let streams = RngStream::new(99);
        let n_copies = 13;
        let paths: Vec<SamplePath> = (0..n_copies)
            .map(|i| {
                let mut rng = streams.stream(500 + i as u64);
                simulate::simulate_z_with_drift(&vec![0.0; 200], &stds, grid, &mut rng).unwrap()
            })
            .collect();
        let ens = Ensemble::new(paths).unwrap();
        let table = BasisTable::new(&trig(5), grid, 5).unwrap();
        let a = project_data_with_table(&ens, &table).unwrap();
        let b = project_simulated_noise(&table, &stds, n_copies, &streams, 500).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn streamed_drift_projection_matches_materialized_ensemble() {
        let grid = TimeGrid::new(1.0, 150).unwrap();
        let qv = QuadVarModel::molchan(0.6).unwrap();
        let stds = simulate::martingale_step_stds(grid, &qv).unwrap();
        let drift = simulate::drift_increments(&|t| 10.0 * t * t, &qv, grid).unwrap();
        let streams = RngStream::new(123);
        let n_copies = 9;
        let paths: Vec<SamplePath> = (0..n_copies)
            .map(|i| {
                let mut rng = streams.stream(i as u64);
                simulate::simulate_z_with_drift(&drift, &stds, grid, &mut rng).unwrap()
            })
            .collect();
        let ens = Ensemble::new(paths).unwrap();
        let table = BasisTable::new(&trig(4), grid, 4).unwrap();
        let a = project_data_with_table(&ens, &table).unwrap();
        let b = project_simulated_paths(&table, &drift, &stds, n_copies, &streams, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn objective_equals_negative_quadratic_form() {
        let grid = TimeGrid::new(1.0, 500).unwrap();
        let qv = QuadVarModel::molchan(0.6).unwrap();
        let streams = RngStream::new(4);
        let drift = simulate::drift_increments(&|t| 10.0 * t * t, &qv, grid).unwrap();
        let stds = simulate::martingale_step_stds(grid, &qv).unwrap();
        let paths: Vec<SamplePath> = (0..20)
            .map(|i| {
                let mut rng = streams.stream(i);
                simulate::simulate_z_with_drift(&drift, &stds, grid, &mut rng).unwrap()
            })
            .collect();
        let ens = Ensemble::new(paths).unwrap();
        let fam = trig(4);
        let res = fit(&ens, &fam, 4, &qv).unwrap();
        let gram = GramMatrix::new(&fam, 4, &qv).unwrap();
        // gamma = theta' Psi theta - 2 z' theta = -theta' Psi theta at the optimum
        assert_relative_eq!(
            res.objective,
            -gram.quadratic_form(&res.coefficients),
            max_relative = 1e-10
        );
    }

    #[test]
    fn noiseless_fit_recovers_basis_function() {
        // drift exactly phi_2, no noise: theta ~ e_2 up to left-point error
        let n = 2000;
        let grid = TimeGrid::new(1.0, n).unwrap();
        let qv = QuadVarModel::Lebesgue;
        let drift = simulate::drift_increments(&|t| trig_eval_pub(2, t), &qv, grid).unwrap();
        let path = noiseless_path(grid, &drift);
        let ens = Ensemble::new(vec![path; 4]).unwrap();
        let res = fit(&ens, &trig(4), 4, &qv).unwrap();
        for (j, c) in res.coefficients.iter().enumerate() {
            let expect = if j == 1 { 1.0 } else { 0.0 };
            assert!(
                (c - expect).abs() <= 10.0 / n as f64,
                "theta[{j}] = {c}"
            );
        }
    }

    fn trig_eval_pub(j: usize, t: f64) -> f64 {
        crate::basis::trig_eval(j, t, 1.0)
    }

    fn noiseless_path(grid: TimeGrid, drift: &[f64]) -> SamplePath {
        let mut values = Vec::with_capacity(grid.steps() + 1);
        values.push(0.0);
        let mut acc = 0.0;
        for d in drift {
            acc += d;
            values.push(acc);
        }
        SamplePath::new(grid, values).unwrap()
    }

    #[test]
    fn pure_noise_norm_matches_dimension_over_copies() {
        // continuous-time projections: E ||J_hat||^2 = m/N exactly
        let qv = QuadVarModel::molchan(0.6).unwrap();
        let fam = trig(5);
        let gram = GramMatrix::new(&fam, 5, &qv).unwrap();
        let n_copies = 40;
        let reps = 400;
        let streams = RngStream::new(2024);
        let mut mean = 0.0;
        for r in 0..reps {
            let mut rng = streams.stream(r);
            let z = sample_exact_projections(&gram, n_copies, &mut rng);
            let theta = gram.solve(&z);
            mean += dot(&z, &theta);
        }
        mean /= reps as f64;
        let target = 5.0 / n_copies as f64;
        assert!(
            (mean - target).abs() / target < 0.15,
            "mean {mean} vs {target}"
        );
    }

    #[test]
    fn quadrupling_copies_halves_the_root_norm() {
        let qv = QuadVarModel::Lebesgue;
        let fam = trig(3);
        let gram = GramMatrix::new(&fam, 3, &qv).unwrap();
        let streams = RngStream::new(7);
        let mut means = [0.0, 0.0];
        for (slot, n_copies) in [(0usize, 50usize), (1, 200)] {
            for r in 0..200u64 {
                let mut rng = streams.stream(slot as u64 * 1000 + r);
                let z = sample_exact_projections(&gram, n_copies, &mut rng);
                let theta = gram.solve(&z);
                means[slot] += dot(&z, &theta);
            }
            means[slot] /= 200.0;
        }
        let ratio = (means[0] / means[1]).sqrt();
        assert!((ratio - 2.0).abs() / 2.0 < 0.15, "ratio {ratio}");
    }

    #[test]
    fn objective_is_monotone_in_dimension() {
        let grid = TimeGrid::new(1.0, 400).unwrap();
        let qv = QuadVarModel::molchan(0.6).unwrap();
        let streams = RngStream::new(11);
        let drift = simulate::drift_increments(&|t| 10.0 * t * t, &qv, grid).unwrap();
        let stds = simulate::martingale_step_stds(grid, &qv).unwrap();
        let paths: Vec<SamplePath> = (0..30)
            .map(|i| {
                let mut rng = streams.stream(i);
                simulate::simulate_z_with_drift(&drift, &stds, grid, &mut rng).unwrap()
            })
            .collect();
        let ens = Ensemble::new(paths).unwrap();
        let fam = trig(8);
        let mut last = f64::INFINITY;
        for m in 1..=8 {
            let res = fit(&ens, &fam, m, &qv).unwrap();
            assert!(res.objective <= last + 1e-12);
            last = res.objective;
        }
    }

    #[test]
    fn coefficient_shift_equivariance() {
        // adding phi_3 to the drift shifts theta_3 by one in expectation
        let grid = TimeGrid::new(1.0, 800).unwrap();
        let qv = QuadVarModel::Lebesgue;
        let fam = trig(4);
        let gram = GramMatrix::new(&fam, 4, &qv).unwrap();
        let table = BasisTable::new(&fam, grid, 4).unwrap();
        let stds = simulate::martingale_step_stds(grid, &qv).unwrap();
        let base = simulate::drift_increments(&|t| 2.0 * t, &qv, grid).unwrap();
        let shifted =
            simulate::drift_increments(&|t| 2.0 * t + trig_eval_pub(3, t), &qv, grid).unwrap();
        let streams = RngStream::new(31);
        let reps = 200;
        let n_copies = 25;
        let mut diff_sum = 0.0;
        let mut diff_sq = 0.0;
        for r in 0..reps {
            let make = |drift: &[f64], offset: u64| {
                let paths: Vec<SamplePath> = (0..n_copies)
                    .map(|i| {
                        let mut rng = streams.stream(offset + r as u64 * 1000 + i as u64);
                        simulate::simulate_z_with_drift(drift, &stds, grid, &mut rng).unwrap()
                    })
                    .collect();
                let ens = Ensemble::new(paths).unwrap();
                let z = project_data_with_table(&ens, &table).unwrap();
                fit_from_parts(&gram, &z).coefficients[2]
            };
            let d = make(&shifted, 500_000) - make(&base, 0);
            diff_sum += d;
            diff_sq += d * d;
        }
        let mean = diff_sum / reps as f64;
        let var = (diff_sq / reps as f64 - mean * mean).max(0.0);
        let se = (var / reps as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * se + 1e-3, "mean shift {mean}, se {se}");
    }

    #[test]
    fn penalty_values() {
        assert_relative_eq!(penalty(3, 100, 2.0), 0.06, max_relative = 1e-15);
        assert_eq!(penalty(0, 100, 2.0), 0.0);
    }

    #[test]
    fn singleton_candidate_set_is_selected() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let qv = QuadVarModel::Lebesgue;
        let streams = RngStream::new(5);
        let stds = simulate::martingale_step_stds(grid, &qv).unwrap();
        let paths: Vec<SamplePath> = (0..10)
            .map(|i| {
                let mut rng = streams.stream(i);
                simulate::simulate_z_with_drift(&vec![0.0; 100], &stds, grid, &mut rng).unwrap()
            })
            .collect();
        let ens = Ensemble::new(paths).unwrap();
        let res = select_model(&ens, &trig(4), &[3], &qv, &PenaltyConfig::fixed(2.0).unwrap()).unwrap();
        assert_eq!(res.dim, 3);
        assert!(res.selected);
        assert_eq!(res.trace.len(), 1);
    }

    #[test]
    fn selection_finds_the_true_subspace() {
        // strong signal on phi_2, many copies, little noise left after
        // averaging: the smallest dimension containing phi_2 wins
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let qv = QuadVarModel::Lebesgue;
        let streams = RngStream::new(1);
        let drift = simulate::drift_increments(&|t| 5.0 * trig_eval_pub(2, t), &qv, grid).unwrap();
        let stds = simulate::martingale_step_stds(grid, &qv).unwrap();
        let paths: Vec<SamplePath> = (0..500)
            .map(|i| {
                let mut rng = streams.stream(i);
                simulate::simulate_z_with_drift(&drift, &stds, grid, &mut rng).unwrap()
            })
            .collect();
        let ens = Ensemble::new(paths).unwrap();
        let res =
            select_model(&ens, &trig(6), &[1, 2, 3, 4, 5, 6], &qv, &PenaltyConfig::fixed(2.0).unwrap())
                .unwrap();
        assert_eq!(res.dim, 2);
    }

    #[test]
    fn selection_is_permutation_invariant() {
        let grid = TimeGrid::new(1.0, 300).unwrap();
        let qv = QuadVarModel::molchan(0.6).unwrap();
        let streams = RngStream::new(23);
        let drift = simulate::drift_increments(&|t| 10.0 * t * t, &qv, grid).unwrap();
        let stds = simulate::martingale_step_stds(grid, &qv).unwrap();
        let mut paths: Vec<SamplePath> = (0..40)
            .map(|i| {
                let mut rng = streams.stream(i);
                simulate::simulate_z_with_drift(&drift, &stds, grid, &mut rng).unwrap()
            })
            .collect();
        let cfg = PenaltyConfig::fixed(2.0).unwrap();
        let fam = trig(8);
        let dims: Vec<usize> = (2..=8).collect();
        let before = select_model(&Ensemble::new(paths.clone()).unwrap(), &fam, &dims, &qv, &cfg)
            .unwrap()
            .dim;
        paths.reverse();
        paths.swap(0, 7);
        let after = select_model(&Ensemble::new(paths).unwrap(), &fam, &dims, &qv, &cfg)
            .unwrap()
            .dim;
        assert_eq!(before, after);
    }

    #[test]
    fn slope_heuristic_recovers_planted_slope() {
        // objectives lying exactly on -gamma = a + kappa m/N give c_cal = 2 kappa
        let n_copies = 100;
        let per_dim: Vec<(usize, f64)> = (2..=12)
            .map(|m| (m, -(0.3 + 1.7 * m as f64 / n_copies as f64)))
            .collect();
        let c = calibrate_slope(&per_dim, n_copies, 0.5);
        assert_relative_eq!(c, 3.4, max_relative = 1e-10);
    }

    #[test]
    fn dims_are_validated() {
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let ens = Ensemble::new(vec![path_from_fn(grid, |t| t); 5]).unwrap();
        let cfg = PenaltyConfig::fixed(1.0).unwrap();
        assert!(select_model(&ens, &trig(8), &[], &QuadVarModel::Lebesgue, &cfg).is_err());
        assert!(select_model(&ens, &trig(8), &[0, 2], &QuadVarModel::Lebesgue, &cfg).is_err());
        assert!(select_model(&ens, &trig(8), &[2, 7], &QuadVarModel::Lebesgue, &cfg).is_err());
        assert!(PenaltyConfig::fixed(0.0).is_err());
    }

    #[test]
    fn mise_closed_forms() {
        let j0 = |t: f64| 10.0 * t * t;
        let qv = QuadVarModel::molchan(0.6).unwrap();
        let zero = mise(&j0, &j0, &qv, MiseNorm::QuadVar, 0.01, 1.0).unwrap();
        assert!(zero.abs() < 1e-14);
        let shifted = |t: f64| 10.0 * t * t + 1.0;
        let l2 = mise(&shifted, &j0, &QuadVarModel::Lebesgue, MiseNorm::Lebesgue, 0.0, 1.0).unwrap();
        assert_relative_eq!(l2, 1.0, max_relative = 1e-10);
        let qv_norm = mise(&shifted, &j0, &qv, MiseNorm::QuadVar, 0.01, 1.0).unwrap();
        assert_relative_eq!(qv_norm, 0.9748811356849042, max_relative = 1e-10);
    }
}
