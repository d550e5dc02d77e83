//! Parity-space residual generation and the signature machinery built on it:
//! per-mode analytical redundancy relations, on-line residual filtering,
//! mirror/mode signatures and the diagnosability partition.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{HybridModel, LinearDynamics};

#[derive(Debug, Error)]
pub enum ParityError {
    #[error("mode {mode}: no analytical redundancy at window length {window}")]
    NoRedundancy { mode: String, window: usize },
    #[error("residual window underfull: have {have} samples, need {need}")]
    WindowUnderfull { have: usize, need: usize },
    #[error("unknown mode {0}")]
    UnknownMode(String),
}

/// Boolean residual tuple. Fixed length once the bank is built.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BooleanSignature(pub Vec<bool>);

impl BooleanSignature {
    pub fn zeros(len: usize) -> Self {
        BooleanSignature(vec![false; len])
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|b| !b)
    }

    pub fn bits_string(&self) -> String {
        self.0.iter().map(|b| if *b { '1' } else { '0' }).collect()
    }
}

/// Parity-space residual generator of one mode.
///
/// `projection` spans the left null space of the stacked observability matrix
/// O_s = [C; CA; ...; CA^s]; `input_effect` is the block-Toeplitz matrix H_s
/// mapping the stacked input window onto the stacked output window.
#[derive(Debug, Clone)]
pub struct ResidualGenerator {
    pub mode: String,
    pub window: usize,
    pub projection: DMatrix<f64>,
    pub input_effect: DMatrix<f64>,
    n_y: usize,
    n_u: usize,
}

/// Stacked observability matrix O_s.
pub fn observability_matrix(dynamics: &LinearDynamics, s: usize) -> DMatrix<f64> {
    let ny = dynamics.n_y();
    let nx = dynamics.n_x();
    let mut out = DMatrix::zeros((s + 1) * ny, nx);
    let mut power = DMatrix::identity(nx, nx);
    for block in 0..=s {
        let rows = &dynamics.c * &power;
        out.view_mut((block * ny, 0), (ny, nx)).copy_from(&rows);
        power = &power * &dynamics.a;
    }
    out
}

/// Stacked input-effect matrix H_s (block lower-triangular Toeplitz).
pub fn input_effect_matrix(dynamics: &LinearDynamics, s: usize) -> DMatrix<f64> {
    let (ny, nu, nx) = (dynamics.n_y(), dynamics.n_u(), dynamics.n_x());
    let mut out = DMatrix::zeros((s + 1) * ny, (s + 1) * nu);
    // Markov parameters: block (i, j) = D if i == j, C A^{i-j-1} B if i > j.
    let mut markov = vec![dynamics.d.clone()];
    let mut power = DMatrix::identity(nx, nx);
    for _ in 0..s {
        markov.push(&dynamics.c * &power * &dynamics.b);
        power = &power * &dynamics.a;
    }
    for i in 0..=s {
        for j in 0..=i {
            out.view_mut((i * ny, j * nu), (ny, nu)).copy_from(&markov[i - j]);
        }
    }
    out
}

/// Orthonormal basis (as matrix rows) of the orthogonal complement of the
/// column space of `m`. Singular values below `1e-10 * sigma_max` count as
/// zero when determining the rank.
fn left_null_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let nrows = m.nrows();
    let svd = m.clone().svd(true, false);
    let u = svd.u.as_ref().expect("svd with u requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-10 * sigma_max.max(1.0e-300);
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();

    // Column-space basis, then complete it to a full basis of R^nrows by
    // modified Gram-Schmidt over the canonical vectors.
    let basis: Vec<DVector<f64>> = (0..rank).map(|i| u.column(i).into_owned()).collect();
    let mut complement: Vec<DVector<f64>> = Vec::new();
    for i in 0..nrows {
        if basis.len() + complement.len() == nrows {
            break;
        }
        let mut v = DVector::zeros(nrows);
        v[i] = 1.0;
        for _ in 0..2 {
            for b in basis.iter().chain(complement.iter()) {
                let proj = b.dot(&v);
                v -= b * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            complement.push(v / norm);
        }
    }
    let mut w = DMatrix::zeros(complement.len(), nrows);
    for (i, v) in complement.iter().enumerate() {
        w.row_mut(i).copy_from(&v.transpose());
    }
    w
}

/// Builds the residual generator of one mode at window length `s`.
pub fn build_generator(
    mode: &str,
    dynamics: &LinearDynamics,
    s: usize,
) -> Result<ResidualGenerator, ParityError> {
    let obs = observability_matrix(dynamics, s);
    let w = left_null_space(&obs);
    if w.nrows() == 0 {
        return Err(ParityError::NoRedundancy { mode: mode.to_string(), window: s });
    }
    Ok(ResidualGenerator {
        mode: mode.to_string(),
        window: s,
        projection: w,
        input_effect: input_effect_matrix(dynamics, s),
        n_y: dynamics.n_y(),
        n_u: dynamics.n_u(),
    })
}

impl ResidualGenerator {
    pub fn n_residuals(&self) -> usize {
        self.projection.nrows()
    }

    /// r = W (Y_s - H_s U_s) over the last s+1 samples, oldest first.
    pub fn eval(&self, ys: &[DVector<f64>], us: &[DVector<f64>]) -> Result<DVector<f64>, ParityError> {
        let need = self.window + 1;
        if ys.len() < need || us.len() < need {
            return Err(ParityError::WindowUnderfull { have: ys.len().min(us.len()), need });
        }
        let ys = &ys[ys.len() - need..];
        let us = &us[us.len() - need..];
        let mut y_stack = DVector::zeros(need * self.n_y);
        let mut u_stack = DVector::zeros(need * self.n_u);
        for (i, y) in ys.iter().enumerate() {
            y_stack.rows_mut(i * self.n_y, self.n_y).copy_from(y);
        }
        for (i, u) in us.iter().enumerate() {
            u_stack.rows_mut(i * self.n_u, self.n_u).copy_from(u);
        }
        Ok(&self.projection * (y_stack - &self.input_effect * u_stack))
    }
}

/// Residual filter configuration: magnitude threshold and debounce count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub threshold: f64,
    pub debounce: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { threshold: 1e-6, debounce: 1 }
    }
}

/// Debouncing residual filter: bit j goes high once |r_j| has exceeded the
/// threshold for `debounce` consecutive samples, and drops as soon as it does
/// not.
#[derive(Debug, Clone)]
pub struct ResidualFilter {
    cfg: FilterConfig,
    counts: Vec<usize>,
}

impl ResidualFilter {
    pub fn new(cfg: FilterConfig, width: usize) -> Self {
        ResidualFilter { cfg, counts: vec![0; width] }
    }

    pub fn push(&mut self, residuals: &[f64]) -> BooleanSignature {
        assert_eq!(residuals.len(), self.counts.len(), "residual width changed");
        let bits = residuals
            .iter()
            .zip(self.counts.iter_mut())
            .map(|(r, count)| {
                if r.abs() > self.cfg.threshold {
                    *count += 1;
                } else {
                    *count = 0;
                }
                *count >= self.cfg.debounce
            })
            .collect();
        BooleanSignature(bits)
    }
}

/// Replays a residual history through a fresh filter and returns the final
/// boolean signature.
pub fn filter_residuals(history: &[Vec<f64>], cfg: FilterConfig) -> BooleanSignature {
    let width = history.first().map_or(0, |r| r.len());
    let mut filter = ResidualFilter::new(cfg, width);
    let mut last = BooleanSignature::zeros(width);
    for sample in history {
        last = filter.push(sample);
    }
    last
}

/// Per-mode residual generators plus the signature table and the
/// diagnosability partition derived from it.
#[derive(Debug, Clone)]
pub struct ResidualBank {
    /// One generator per mode, in model declaration order.
    pub generators: Vec<ResidualGenerator>,
    /// Mode signature of every mode (concatenated mirror signatures).
    pub signatures: BTreeMap<String, BooleanSignature>,
    /// Modes grouped by identical signature; groups ordered by the model index
    /// of their first member, members in model order.
    pub partition: Vec<Vec<String>>,
    pub filter: FilterConfig,
    /// Seed of the PRBS stimulus used for offline signature computation.
    pub stimulus_seed: u64,
    pub fingerprint: String,
}

pub const DEFAULT_STIMULUS_SEED: u64 = 7;

/// Unit-amplitude per-channel PRBS input sequence.
pub fn prbs_inputs(n_u: usize, steps: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..steps)
        .map(|_| DVector::from_fn(n_u, |_, _| if rng.gen::<bool>() { 1.0 } else { -1.0 }))
        .collect()
}

/// Noise-free output trajectory of one mode under the given inputs.
pub fn simulate_outputs(
    dynamics: &LinearDynamics,
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    let mut x = x0.clone();
    inputs
        .iter()
        .map(|u| {
            let y = &dynamics.c * &x + &dynamics.d * u;
            x = &dynamics.a * &x + &dynamics.b * u;
            y
        })
        .collect()
}

impl ResidualBank {
    /// Builds generators, signatures and the diagnosability partition for a
    /// model. All modes share the model's window length.
    pub fn build(model: &HybridModel, filter: FilterConfig, stimulus_seed: u64) -> Result<Self, ParityError> {
        let s = model.window();
        let generators = model
            .modes
            .iter()
            .map(|m| build_generator(&m.id, &m.dynamics, s))
            .collect::<Result<Vec<_>, _>>()?;

        let mut bank = ResidualBank {
            generators,
            signatures: BTreeMap::new(),
            partition: Vec::new(),
            filter,
            stimulus_seed,
            fingerprint: model.fingerprint(),
        };

        for m in &model.modes {
            let sig = bank.mode_signature(model, &m.id)?;
            bank.signatures.insert(m.id.clone(), sig);
        }
        bank.partition = partition_by_signature(model, &bank.signatures);
        Ok(bank)
    }

    pub fn generator(&self, mode: &str) -> Option<&ResidualGenerator> {
        self.generators.iter().find(|g| g.mode == mode)
    }

    /// Total width of the concatenated residual tuple over all modes.
    pub fn tuple_width(&self) -> usize {
        self.generators.iter().map(|g| g.n_residuals()).sum()
    }

    /// Index of the partition group containing `mode`.
    pub fn group_of(&self, mode: &str) -> Option<usize> {
        self.partition.iter().position(|g| g.iter().any(|m| m == mode))
    }

    /// S_{j/k}: filtered residual tuple of mode `eval_mode`'s generator on the
    /// canonical noise-free trajectory of mode `observed_mode`.
    pub fn mirror_signature(
        &self,
        model: &HybridModel,
        observed_mode: &str,
        eval_mode: &str,
    ) -> Result<BooleanSignature, ParityError> {
        let observed = model
            .mode(observed_mode)
            .ok_or_else(|| ParityError::UnknownMode(observed_mode.to_string()))?;
        let gen = self
            .generator(eval_mode)
            .ok_or_else(|| ParityError::UnknownMode(eval_mode.to_string()))?;

        let steps = 10 * (gen.window + 1);
        let inputs = prbs_inputs(observed.dynamics.n_u(), steps, self.stimulus_seed);
        let outputs = simulate_outputs(&observed.dynamics, &model.initial_state, &inputs);

        let mut filter = ResidualFilter::new(self.filter, gen.n_residuals());
        let mut last = BooleanSignature::zeros(gen.n_residuals());
        for k in gen.window..steps {
            let r = gen.eval(&outputs[..=k], &inputs[..=k])?;
            last = filter.push(r.as_slice());
        }
        Ok(last)
    }

    /// Sig(q_j): concatenation of all mirror signatures of `mode` in model
    /// mode order.
    pub fn mode_signature(&self, model: &HybridModel, mode: &str) -> Result<BooleanSignature, ParityError> {
        let mut bits = Vec::with_capacity(self.tuple_width());
        for m in &model.modes {
            bits.extend(self.mirror_signature(model, mode, &m.id)?.0);
        }
        Ok(BooleanSignature(bits))
    }
}

fn partition_by_signature(
    model: &HybridModel,
    signatures: &BTreeMap<String, BooleanSignature>,
) -> Vec<Vec<String>> {
    let mut groups: Vec<(BooleanSignature, Vec<String>)> = Vec::new();
    for m in &model.modes {
        let sig = &signatures[&m.id];
        match groups.iter_mut().find(|(s, _)| s == sig) {
            Some((_, members)) => members.push(m.id.clone()),
            None => groups.push((sig.clone(), vec![m.id.clone()])),
        }
    }
    groups.into_iter().map(|(_, members)| members).collect()
}

/// Equivalence classes of modes under signature equality.
pub fn diagnosability_partition(bank: &ResidualBank) -> &[Vec<String>] {
    &bank.partition
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testmodels;
    use nalgebra::dvector;

    fn redundant_dynamics() -> LinearDynamics {
        // x_{k+1} = x_k, y = [x; x]
        LinearDynamics {
            a: DMatrix::from_element(1, 1, 1.0),
            b: DMatrix::zeros(1, 1),
            c: DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            d: DMatrix::zeros(2, 1),
        }
    }

    fn integrator_dynamics() -> LinearDynamics {
        // x_{k+1} = x_k + u_k, y = x
        LinearDynamics {
            a: DMatrix::from_element(1, 1, 1.0),
            b: DMatrix::from_element(1, 1, 1.0),
            c: DMatrix::from_element(1, 1, 1.0),
            d: DMatrix::zeros(1, 1),
        }
    }

    #[test]
    fn duplicated_sensor_window_zero() {
        let gen = build_generator("q", &redundant_dynamics(), 0).unwrap();
        assert_eq!(gen.n_residuals(), 1);
        // W proportional to [1, -1]
        let w = gen.projection.row(0);
        assert!((w[0] + w[1]).abs() < 1e-12, "W = {w:?}");

        let r = gen.eval(&[dvector![3.0, 3.0]], &[dvector![0.0]]).unwrap();
        assert!(r[0].abs() < 1e-12);
        let r = gen.eval(&[dvector![3.0, 2.5]], &[dvector![0.0]]).unwrap();
        assert!((r[0].abs() - 0.5 / 2.0_f64.sqrt()).abs() < 1e-12, "r = {r:?}");
    }

    #[test]
    fn integrator_single_arr() {
        // Oracle (by elimination of x): y_{k+1} - y_k - u_k = 0.
        let gen = build_generator("q", &integrator_dynamics(), 1).unwrap();
        assert_eq!(gen.n_residuals(), 1);
        // In-mode trajectory satisfies the relation.
        let inputs = prbs_inputs(1, 8, 3);
        let ys = simulate_outputs(&integrator_dynamics(), &dvector![2.0], &inputs);
        for k in 1..8 {
            let r = gen.eval(&ys[..=k], &inputs[..=k]).unwrap();
            assert!(r[0].abs() < 1e-12);
            let oracle = ys[k][0] - ys[k - 1][0] - inputs[k - 1][0];
            assert!(oracle.abs() < 1e-12);
        }
        // Perturbed sample violates it proportionally.
        let mut ys2 = ys.clone();
        ys2[5][0] += 1.0;
        let r = gen.eval(&ys2[..=5], &inputs[..=5]).unwrap();
        assert!(r[0].abs() > 0.1);
    }

    #[test]
    fn fully_observable_no_redundancy() {
        // n_x = 2, single sensor, s = 1: O_s is 2x2 full rank, no null space.
        let dynamics = LinearDynamics {
            a: DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.5]),
            b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            c: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            d: DMatrix::zeros(1, 1),
        };
        // Oracle: rank(O_1) = 2 = number of rows.
        let obs = observability_matrix(&dynamics, 1);
        assert_eq!(obs.rank(1e-10), 2);
        assert!(matches!(
            build_generator("q", &dynamics, 1),
            Err(ParityError::NoRedundancy { .. })
        ));
    }

    #[test]
    fn wrong_mode_residual_nonzero() {
        let gen = build_generator("q", &integrator_dynamics(), 1).unwrap();
        // Trajectory of x_{k+1} = 2 x_k + u_k, x0 = 1, u = 0.
        let other = LinearDynamics {
            a: DMatrix::from_element(1, 1, 2.0),
            b: DMatrix::from_element(1, 1, 1.0),
            c: DMatrix::from_element(1, 1, 1.0),
            d: DMatrix::zeros(1, 1),
        };
        let inputs = vec![dvector![0.0]; 4];
        let ys = simulate_outputs(&other, &dvector![1.0], &inputs);
        let r = gen.eval(&ys[..=1], &inputs[..=1]).unwrap();
        assert!(r[0].abs() > 0.1, "first full window must expose the mismatch");
    }

    #[test]
    fn window_underfull_error() {
        let gen = build_generator("q", &integrator_dynamics(), 1).unwrap();
        let err = gen.eval(&[dvector![0.0]], &[dvector![0.0]]).unwrap_err();
        assert!(matches!(err, ParityError::WindowUnderfull { have: 1, need: 2 }));
    }

    #[test]
    fn filter_debounce() {
        let cfg = FilterConfig { threshold: 0.5, debounce: 3 };
        // Below threshold everywhere -> zero signature.
        let history = vec![vec![0.1], vec![0.2], vec![0.3], vec![0.4]];
        assert!(filter_residuals(&history, cfg).is_zero());
        // Above for m consecutive -> set.
        let history = vec![vec![0.9], vec![0.9], vec![0.9]];
        assert_eq!(filter_residuals(&history, cfg).0, vec![true]);
        // Above for m-1 then below -> stays 0 (direct replay of the rule).
        let history = vec![vec![0.9], vec![0.9], vec![0.1]];
        assert!(filter_residuals(&history, cfg).is_zero());
    }

    #[test]
    fn mirror_signature_diagonal_zero() {
        let model = testmodels::fig3();
        let bank = ResidualBank::build(&model, FilterConfig::default(), DEFAULT_STIMULUS_SEED).unwrap();
        for m in &model.modes {
            let sig = bank.mirror_signature(&model, &m.id, &m.id).unwrap();
            assert!(sig.is_zero(), "S_{{{0}/{0}}} must be zero", m.id);
        }
    }

    #[test]
    fn fig3_signatures_pairwise_distinct() {
        let model = testmodels::fig3();
        let bank = ResidualBank::build(&model, FilterConfig::default(), DEFAULT_STIMULUS_SEED).unwrap();
        // Oracle: exhaustive pairwise comparison of mode signatures.
        for (i, a) in model.modes.iter().enumerate() {
            for b in model.modes.iter().skip(i + 1) {
                assert_ne!(
                    bank.signatures[&a.id], bank.signatures[&b.id],
                    "modes {} and {} must be discriminable",
                    a.id, b.id
                );
            }
        }
        assert_eq!(bank.partition.len(), model.modes.len());
        assert!(bank.partition.iter().all(|g| g.len() == 1));
    }

    #[test]
    fn cloned_mode_merges_into_one_group() {
        let mut model = testmodels::fig3();
        // Make qf2's dynamics identical to q02's: indistinguishable.
        let d = model.modes[1].dynamics.clone();
        model.modes[3].dynamics = d;
        let bank = ResidualBank::build(&model, FilterConfig::default(), DEFAULT_STIMULUS_SEED).unwrap();
        assert_eq!(bank.signatures["q02"], bank.signatures["qf2"]);
        let g1 = bank.group_of("q02").unwrap();
        let g2 = bank.group_of("qf2").unwrap();
        assert_eq!(g1, g2);
        assert_eq!(bank.partition.len(), model.modes.len() - 1);
    }

    #[test]
    fn null_space_property() {
        let model = testmodels::fig3();
        let bank = ResidualBank::build(&model, FilterConfig::default(), DEFAULT_STIMULUS_SEED).unwrap();
        for (gen, mode) in bank.generators.iter().zip(&model.modes) {
            let obs = observability_matrix(&mode.dynamics, gen.window);
            let prod = &gen.projection * obs;
            assert!(prod.amax() <= 1e-9, "W O_s != 0 for mode {}", mode.id);
        }
    }
}
