//! Domain types for families of linear time-invariant systems, trajectory
//! simulation, and generators for structurally similar system families.
//!
//! All randomness flows from explicit `u64` seeds through ChaCha streams, so
//! a seed fully determines every generated matrix and trajectory.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::SupportSet;
use crate::error::{dim_err, Error, Result};

/// Deterministic generator used throughout the crate.
pub type SeededRng = ChaCha8Rng;

/// Builds the generator for `seed` on stream `stream`.
pub fn seeded_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn standard_normal_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// One system `x(t+1) = A x(t) + B u(t) + w(t)` with `w(t) ~ N(0, noise_std^2 I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a_matrix: DMatrix<f64>,
    b_matrix: DMatrix<f64>,
    noise_std: f64,
}

impl LtiSystem {
    pub fn new(a_matrix: DMatrix<f64>, b_matrix: DMatrix<f64>, noise_std: f64) -> Result<Self> {
        if !a_matrix.is_square() {
            return Err(dim_err(format!(
                "state matrix must be square, got {}x{}",
                a_matrix.nrows(),
                a_matrix.ncols()
            )));
        }
        if b_matrix.nrows() != a_matrix.nrows() {
            return Err(dim_err(format!(
                "input matrix has {} rows, state dimension is {}",
                b_matrix.nrows(),
                a_matrix.nrows()
            )));
        }
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(Error::InvalidInput(format!(
                "noise standard deviation must be finite and nonnegative, got {noise_std}"
            )));
        }
        Ok(Self {
            a_matrix,
            b_matrix,
            noise_std,
        })
    }

    pub fn a_matrix(&self) -> &DMatrix<f64> {
        &self.a_matrix
    }

    pub fn b_matrix(&self) -> &DMatrix<f64> {
        &self.b_matrix
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn state_dim(&self) -> usize {
        self.a_matrix.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b_matrix.ncols()
    }
}

/// A recorded trajectory: `P + 1` states and `P` inputs, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: DMatrix<f64>,
    inputs: DMatrix<f64>,
}

impl Trajectory {
    /// `states` is `n x (P+1)` and `inputs` is `p x P`; column `t` is time `t + 1`.
    pub fn new(states: DMatrix<f64>, inputs: DMatrix<f64>) -> Result<Self> {
        if states.ncols() != inputs.ncols() + 1 {
            return Err(dim_err(format!(
                "trajectory has {} states but {} inputs; expected exactly one more state than inputs",
                states.ncols(),
                inputs.ncols()
            )));
        }
        if states.nrows() == 0 {
            return Err(dim_err("state dimension must be positive"));
        }
        Ok(Self { states, inputs })
    }

    pub fn from_columns(states: &[DVector<f64>], inputs: &[DVector<f64>]) -> Result<Self> {
        let n = states.first().map(|s| s.len()).unwrap_or(0);
        if let Some(bad) = states.iter().position(|s| s.len() != n) {
            return Err(dim_err(format!("state {bad} has dimension {}, expected {n}", states[bad].len())));
        }
        let p = inputs.first().map(|u| u.len()).unwrap_or(0);
        if let Some(bad) = inputs.iter().position(|u| u.len() != p) {
            return Err(dim_err(format!("input {bad} has dimension {}, expected {p}", inputs[bad].len())));
        }
        let states = DMatrix::from_fn(n, states.len(), |r, c| states[c][r]);
        let inputs = DMatrix::from_fn(p, inputs.len(), |r, c| inputs[c][r]);
        Self::new(states, inputs)
    }

    /// Number of transition pairs `P`.
    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.states.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    /// Sub-trajectory covering transition pairs `start..start + len`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::InvalidInput(format!(
                "window {start}..{} exceeds trajectory length {}",
                start + len,
                self.len()
            )));
        }
        Self::new(
            self.states.columns(start, len + 1).into_owned(),
            self.inputs.columns(start, len).into_owned(),
        )
    }
}

/// One system's trajectory together with its known input matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemRecord {
    pub trajectory: Trajectory,
    pub b_matrix: DMatrix<f64>,
}

/// The `N` recorded systems jointly identified by the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSystemDataset {
    entries: Vec<SystemRecord>,
    state_dim: usize,
    input_dim: usize,
}

impl MultiSystemDataset {
    pub fn new(entries: Vec<SystemRecord>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::InvalidInput("dataset needs at least one system".into()))?;
        let n = first.trajectory.state_dim();
        let p = first.trajectory.input_dim();
        for (i, e) in entries.iter().enumerate() {
            if e.trajectory.state_dim() != n || e.trajectory.input_dim() != p {
                return Err(dim_err(format!(
                    "system {i} has (n, p) = ({}, {}), expected ({n}, {p})",
                    e.trajectory.state_dim(),
                    e.trajectory.input_dim()
                )));
            }
            if e.b_matrix.shape() != (n, p) {
                return Err(dim_err(format!(
                    "system {i} input matrix is {:?}, expected ({n}, {p})",
                    e.b_matrix.shape()
                )));
            }
        }
        Ok(Self {
            entries,
            state_dim: n,
            input_dim: p,
        })
    }

    pub fn entries(&self) -> &[SystemRecord] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn pair_counts(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.trajectory.len()).collect()
    }

    /// The common trajectory length, if every system has the same `P`.
    pub fn uniform_length(&self) -> Option<usize> {
        let p = self.entries[0].trajectory.len();
        self.entries.iter().all(|e| e.trajectory.len() == p).then_some(p)
    }
}

/// An ordered collection of `N` square matrices of equal size.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixBundle {
    matrices: Vec<DMatrix<f64>>,
}

impl MatrixBundle {
    pub fn new(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::InvalidInput("bundle needs at least one matrix".into()))?;
        let n = first.nrows();
        if let Some(i) = matrices.iter().position(|m| m.shape() != (n, n)) {
            return Err(dim_err(format!(
                "matrix {i} is {:?}, expected ({n}, {n})",
                matrices[i].shape()
            )));
        }
        Ok(Self { matrices })
    }

    pub fn zeros(dim: usize, count: usize) -> Self {
        Self {
            matrices: vec![DMatrix::zeros(dim, dim); count],
        }
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn into_matrices(self) -> Vec<DMatrix<f64>> {
        self.matrices
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DMatrix<f64>> {
        self.matrices.iter()
    }

    /// The `n^2 x N` matrix `[vec(A_1), ..., vec(A_N)]` (column-major `vec`).
    pub fn stack(&self) -> DMatrix<f64> {
        let n2 = self.dim() * self.dim();
        let mut out = DMatrix::zeros(n2, self.len());
        for (i, m) in self.matrices.iter().enumerate() {
            out.column_mut(i).copy_from_slice(m.as_slice());
        }
        out
    }

    /// Inverse of [`MatrixBundle::stack`].
    pub fn from_stacked(stacked: &DMatrix<f64>, dim: usize) -> Result<Self> {
        if stacked.nrows() != dim * dim {
            return Err(dim_err(format!(
                "stacked matrix has {} rows, expected {}",
                stacked.nrows(),
                dim * dim
            )));
        }
        let matrices = stacked
            .column_iter()
            .map(|c| DMatrix::from_column_slice(dim, dim, c.as_slice()))
            .collect();
        Self::new(matrices)
    }

    /// The cross-system vector `[(A_1)_{jk}, ..., (A_N)_{jk}]`.
    pub fn group(&self, row: usize, col: usize) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.matrices.iter().map(|m| m[(row, col)]))
    }

    pub fn set_group(&mut self, row: usize, col: usize, values: &DVector<f64>) {
        for (m, v) in self.matrices.iter_mut().zip(values.iter()) {
            m[(row, col)] = *v;
        }
    }

    /// Square root of the summed squared entries over all matrices.
    pub fn frobenius_norm(&self) -> f64 {
        self.matrices.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.matrices
            .iter()
            .zip(&other.matrices)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() || self.dim() != other.dim() {
            return Err(dim_err(format!(
                "bundles differ in shape: {} x {}x{} vs {} x {}x{}",
                self.len(),
                self.dim(),
                self.dim(),
                other.len(),
                other.dim(),
                other.dim()
            )));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.matrices.iter().all(|m| m.iter().all(|v| *v == 0.0))
    }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Runs the recursion `x(t+1) = A x(t) + B u(t) + w(t)` from `x0` over the
/// input columns of `inputs` (`p x P`).
pub fn simulate(
    system: &LtiSystem,
    x0: &DVector<f64>,
    inputs: &DMatrix<f64>,
    seed: u64,
) -> Result<Trajectory> {
    let n = system.state_dim();
    if x0.len() != n {
        return Err(dim_err(format!("initial state has dimension {}, expected {n}", x0.len())));
    }
    if inputs.nrows() != system.input_dim() {
        return Err(dim_err(format!(
            "inputs have dimension {}, system expects {}",
            inputs.nrows(),
            system.input_dim()
        )));
    }
    let steps = inputs.ncols();
    if steps == 0 {
        return Err(Error::InvalidInput("input sequence is empty".into()));
    }
    let mut rng = seeded_rng(seed, 0);
    let sigma = system.noise_std;
    let mut states = DMatrix::zeros(n, steps + 1);
    states.set_column(0, x0);
    for t in 0..steps {
        let mut next = system.a_matrix() * states.column(t) + system.b_matrix() * inputs.column(t);
        if sigma > 0.0 {
            for v in next.iter_mut() {
                *v += sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        states.set_column(t + 1, &next);
    }
    Trajectory::new(states, inputs.clone())
}

/// Structural prior shared by a generated family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FamilyKind {
    /// One Bernoulli(`density`) mask shared by every matrix.
    CommonSparsity { density: f64 },
    /// Pairwise squared Frobenius distances bounded by `epsilon`.
    SmallHeterogeneity { epsilon: f64 },
    /// Every matrix is a combination of `basis_rank` basis matrices.
    LinearCombination { basis_rank: usize },
}

fn default_cap() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarFamilySpec {
    #[serde(flatten)]
    pub kind: FamilyKind,
    pub state_dim: usize,
    pub input_dim: usize,
    pub systems: usize,
    #[serde(default = "default_cap")]
    pub spectral_radius_cap: f64,
    #[serde(default)]
    pub noise_std: f64,
    pub seed: u64,
}

impl SimilarFamilySpec {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.systems == 0 {
            return Err(Error::InvalidInput(
                "state dimension and system count must be positive".into(),
            ));
        }
        if !(self.spectral_radius_cap > 0.0 && self.spectral_radius_cap < 1.0) {
            return Err(Error::InvalidInput(format!(
                "spectral radius cap must lie in (0, 1), got {}",
                self.spectral_radius_cap
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidInput("noise_std must be nonnegative".into()));
        }
        match self.kind {
            FamilyKind::CommonSparsity { density } if !(density > 0.0 && density <= 1.0) => Err(
                Error::InvalidInput(format!("density must lie in (0, 1], got {density}")),
            ),
            FamilyKind::SmallHeterogeneity { epsilon } if !(epsilon >= 0.0) => Err(
                Error::InvalidInput(format!("epsilon must be nonnegative, got {epsilon}")),
            ),
            FamilyKind::LinearCombination { basis_rank } if basis_rank == 0 || basis_rank > self.systems => {
                Err(Error::InvalidInput(format!(
                    "basis rank must lie in 1..={}, got {basis_rank}",
                    self.systems
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Output of [`generate_family`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedFamily {
    pub systems: Vec<LtiSystem>,
    /// Shared support (common-sparsity only).
    pub support: Option<SupportSet>,
    /// `N x q` coefficients with `A_i = sum_l mixing[(i, l)] * basis_l` (linear-combination only).
    pub mixing: Option<DMatrix<f64>>,
}

impl GeneratedFamily {
    pub fn truth(&self) -> MatrixBundle {
        MatrixBundle {
            matrices: self.systems.iter().map(|s| s.a_matrix.clone()).collect(),
        }
    }
}

/// Scales `a` so its spectral radius is `cap`. Nearly nilpotent draws (radius
/// below a tenth of the spectral norm) are scaled by the norm instead, which
/// still bounds the radius by `cap` without inflating transients.
fn rescale_to_radius(a: &mut DMatrix<f64>, cap: f64) -> f64 {
    let rho = spectral_radius(a);
    let norm = a.clone().svd(false, false).singular_values.max();
    let reference = rho.max(0.1 * norm);
    if reference > 0.0 {
        let s = cap / reference;
        *a *= s;
        s
    } else {
        1.0
    }
}

/// Draws a family of `N` systems sharing the structure named by `spec.kind`.
///
/// Input matrices are i.i.d. `N(0, 1/p)` per system. Stability comes from
/// rescaling to `spectral_radius_cap`.
pub fn generate_family(spec: &SimilarFamilySpec) -> Result<GeneratedFamily> {
    spec.validate()?;
    let n = spec.state_dim;
    let count = spec.systems;
    let cap = spec.spectral_radius_cap;
    let mut rng = seeded_rng(spec.seed, 1);

    let mut support = None;
    let mut mixing = None;
    let a_matrices: Vec<DMatrix<f64>> = match spec.kind {
        FamilyKind::CommonSparsity { density } => {
            let mask: Vec<bool> = (0..n * n).map(|_| rng.random::<f64>() < density).collect();
            if !mask.iter().any(|&m| m) {
                return Err(Error::InvalidInput(format!(
                    "density {density} produced an empty support for n = {n}; raise the density or change the seed"
                )));
            }
            let set = SupportSet::from_mask(n, mask.clone())?;
            let mats = (0..count)
                .map(|_| {
                    let mut a = DMatrix::from_fn(n, n, |r, c| {
                        let z: f64 = rng.sample(StandardNormal);
                        if mask[c * n + r] {
                            z
                        } else {
                            0.0
                        }
                    });
                    rescale_to_radius(&mut a, cap);
                    a
                })
                .collect();
            support = Some(set);
            mats
        }
        FamilyKind::SmallHeterogeneity { epsilon } => {
            let mut base = standard_normal_matrix(&mut rng, n, n);
            rescale_to_radius(&mut base, cap);
            let mut perturbations: Vec<DMatrix<f64>> = (0..count)
                .map(|_| standard_normal_matrix(&mut rng, n, n))
                .collect();
            let worst = max_pairwise_sq_distance(&perturbations);
            let scale = if worst > 0.0 { (epsilon / worst).sqrt() } else { 0.0 };
            for d in &mut perturbations {
                *d *= scale;
            }
            let build = |base: &DMatrix<f64>| -> Vec<DMatrix<f64>> {
                perturbations.iter().map(|d| base + d).collect()
            };
            let mut mats = build(&base);
            // Shrink the shared part until every member meets the cap; this keeps
            // the pairwise budget tight. Falls back to uniform scaling if the
            // perturbations alone are too large.
            let mut tries = 0;
            while mats.iter().any(|a| spectral_radius(a) > cap) && tries < 60 {
                base *= 0.9;
                mats = build(&base);
                tries += 1;
            }
            let worst_rho = mats.iter().map(spectral_radius).fold(0.0, f64::max);
            if worst_rho > cap {
                for a in &mut mats {
                    *a *= cap / worst_rho;
                }
            }
            mats
        }
        FamilyKind::LinearCombination { basis_rank } => {
            let basis: Vec<DMatrix<f64>> = (0..basis_rank)
                .map(|_| standard_normal_matrix(&mut rng, n, n))
                .collect();
            let mut coeffs = DMatrix::<f64>::zeros(count, basis_rank);
            for i in 0..count {
                for l in 0..basis_rank {
                    coeffs[(i, l)] = if i < basis_rank {
                        if i == l {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        rng.sample(StandardNormal)
                    };
                }
            }
            let mats = (0..count)
                .map(|i| {
                    let mut a = DMatrix::zeros(n, n);
                    for (l, b) in basis.iter().enumerate() {
                        a += b * coeffs[(i, l)];
                    }
                    let s = rescale_to_radius(&mut a, cap);
                    for l in 0..basis_rank {
                        coeffs[(i, l)] *= s;
                    }
                    a
                })
                .collect();
            mixing = Some(coeffs);
            mats
        }
    };

    let p = spec.input_dim;
    let b_scale = if p > 0 { 1.0 / (p as f64).sqrt() } else { 0.0 };
    let systems = a_matrices
        .into_iter()
        .map(|a| {
            let b = standard_normal_matrix(&mut rng, n, p) * b_scale;
            LtiSystem::new(a, b, spec.noise_std)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(GeneratedFamily {
        systems,
        support,
        mixing,
    })
}

fn max_pairwise_sq_distance(mats: &[DMatrix<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..mats.len() {
        for j in i + 1..mats.len() {
            worst = worst.max((&mats[i] - &mats[j]).norm_squared());
        }
    }
    worst
}

/// How inputs are produced when simulating a generated family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputSignal {
    /// `u(t)` is the all-ones vector at every step.
    #[default]
    Ones,
    /// `u(t)` i.i.d. standard normal.
    Gaussian,
}

/// Mixes a base seed with a stream tag and an index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED69));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates every system of `family` for `lengths[i]` steps from a standard
/// normal initial state and collects the dataset.
pub fn simulate_family(
    family: &GeneratedFamily,
    lengths: &[usize],
    signal: InputSignal,
    seed: u64,
) -> Result<MultiSystemDataset> {
    if lengths.len() != family.systems.len() {
        return Err(dim_err(format!(
            "{} lengths given for {} systems",
            lengths.len(),
            family.systems.len()
        )));
    }
    let entries = family
        .systems
        .iter()
        .zip(lengths)
        .enumerate()
        .map(|(i, (sys, &len))| {
            let mut rng = seeded_rng(derive_seed(seed, 2, i as u64), 0);
            let x0 = DVector::from_fn(sys.state_dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let inputs = match signal {
                InputSignal::Ones => DMatrix::from_element(sys.input_dim(), len, 1.0),
                InputSignal::Gaussian => standard_normal_matrix(&mut rng, sys.input_dim(), len),
            };
            let trajectory = simulate(sys, &x0, &inputs, derive_seed(seed, 3, i as u64))?;
            Ok(SystemRecord {
                trajectory,
                b_matrix: sys.b_matrix().clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MultiSystemDataset::new(entries)
}
