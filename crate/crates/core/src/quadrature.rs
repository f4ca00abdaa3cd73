//! Seeded Monte-Carlo integration over domain interiors.
//!
//! Samples are drawn uniformly in the bounding box and rejected outside the
//! domain. The draw count is split into a fixed number of blocks; each block
//! owns its random stream and its partial Gram sum, and partial sums are
//! combined in block order so results do not depend on scheduling.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bergman::{BergmanError, GramModel, GramSettings, Provenance};
use crate::domain::DomainSpec;
use crate::{rng, CMatrix, CVector};

/// Acceptance rates below this signal a bad bounding box.
pub const MIN_ACCEPTANCE_RATE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("acceptance rate {accepted}/{drawn} is below {MIN_ACCEPTANCE_RATE}")]
    LowAcceptance { accepted: u64, drawn: u64 },
    #[error("basis dimension {basis} does not match domain dimension {domain}")]
    DimensionMismatch { basis: usize, domain: usize },
    #[error("block count must be positive")]
    NoBlocks,
    #[error(transparent)]
    Model(#[from] BergmanError),
}

/// Multi-indices `α` with `|α| ≤ D`, in graded lexicographic order.
///
/// Within a degree, `z₁`-heavy exponents come first, so `{1, z₁, z₂, z₁², z₁z₂, z₂², …}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonomialBasis {
    dimension: usize,
    max_degree: u32,
    exponents: Vec<Vec<u32>>,
}

impl MonomialBasis {
    pub fn new(dimension: usize, max_degree: u32) -> Self {
        let mut exponents = Vec::new();
        for degree in 0..=max_degree {
            let mut current = vec![0; dimension];
            push_compositions(degree, 0, &mut current, &mut exponents);
        }
        Self { dimension, max_degree, exponents }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn size(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// `C(n + D, n)`.
    pub fn binomial_size(dimension: usize, max_degree: u32) -> usize {
        let (n, d) = (dimension as u128, u128::from(max_degree));
        let mut value: u128 = 1;
        for k in 1..=n {
            value = value * (d + k) / k;
        }
        value as usize
    }

    fn powers(&self, z: &CVector) -> Vec<Vec<Complex64>> {
        z.iter()
            .map(|&zi| {
                let mut row = Vec::with_capacity(self.max_degree as usize + 1);
                let mut acc = Complex64::new(1.0, 0.0);
                for _ in 0..=self.max_degree {
                    row.push(acc);
                    acc *= zi;
                }
                row
            })
            .collect()
    }

    /// Monomial values `z^α`, written into `out`.
    pub fn evaluate_into(&self, z: &CVector, out: &mut [Complex64]) {
        let powers = self.powers(z);
        for (slot, alpha) in out.iter_mut().zip(&self.exponents) {
            *slot = alpha.iter().enumerate().fold(Complex64::new(1.0, 0.0), |acc, (i, &a)| acc * powers[i][a as usize]);
        }
    }

    pub fn evaluate(&self, z: &CVector) -> CVector {
        let mut out = vec![Complex64::new(0.0, 0.0); self.size()];
        self.evaluate_into(z, &mut out);
        CVector::from_vec(out)
    }

    /// Values `z^α` and exact derivatives `∂z^α/∂z_i` (row `i`, column `α`).
    pub fn evaluate_with_derivatives(&self, z: &CVector) -> (CVector, CMatrix) {
        let powers = self.powers(z);
        let n = self.dimension;
        let values = self.evaluate(z);
        let derivatives = DMatrix::from_fn(n, self.size(), |i, col| {
            let alpha = &self.exponents[col];
            if alpha[i] == 0 {
                return Complex64::new(0.0, 0.0);
            }
            let mut acc = Complex64::new(f64::from(alpha[i]), 0.0) * powers[i][alpha[i] as usize - 1];
            for (j, &a) in alpha.iter().enumerate() {
                if j != i {
                    acc *= powers[j][a as usize];
                }
            }
            acc
        });
        (values, derivatives)
    }
}

fn push_compositions(remaining: u32, index: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if index + 1 == current.len() {
        current[index] = remaining;
        out.push(current.clone());
        return;
    }
    for first in (0..=remaining).rev() {
        current[index] = first;
        push_compositions(remaining - first, index + 1, current, out);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Independent uniform draws in the bounding box.
    #[default]
    MonteCarlo,
    /// Randomly shifted Kronecker lattice.
    ShiftedLattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    /// Number of bounding-box draws `N`.
    pub samples: u64,
    pub seed: u64,
    /// Number of blocks the draws are partitioned into.
    pub blocks: usize,
    pub mode: SamplingMode,
}

impl SamplePlan {
    pub fn new(samples: u64, seed: u64) -> Self {
        Self { samples, seed, blocks: 16, mode: SamplingMode::MonteCarlo }
    }

    pub fn with_blocks(mut self, blocks: usize) -> Self {
        self.blocks = blocks;
        self
    }

    pub fn with_mode(mut self, mode: SamplingMode) -> Self {
        self.mode = mode;
        self
    }

    /// Draw-index ranges of each block.
    pub fn block_ranges(&self) -> Vec<(u64, u64)> {
        let blocks = self.blocks as u64;
        let base = self.samples / blocks;
        let extra = self.samples % blocks;
        let mut start = 0;
        (0..blocks)
            .map(|b| {
                let len = base + u64::from(b < extra);
                let range = (start, start + len);
                start += len;
                range
            })
            .collect()
    }
}

/// Accepted sample points with the bookkeeping needed for volume estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub dimension: usize,
    pub box_volume: f64,
    pub blocks: Vec<SampleBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBlock {
    pub drawn: u64,
    pub points: Vec<CVector>,
}

impl SampleSet {
    pub fn drawn(&self) -> u64 {
        self.blocks.iter().map(|b| b.drawn).sum()
    }

    pub fn accepted(&self) -> u64 {
        self.blocks.iter().map(|b| b.points.len() as u64).sum()
    }

    pub fn acceptance_rate(&self) -> f64 {
        let drawn = self.drawn();
        if drawn == 0 {
            0.0
        } else {
            self.accepted() as f64 / drawn as f64
        }
    }

    /// `V̂ = box volume × acceptance rate`.
    pub fn volume(&self) -> f64 {
        self.box_volume * self.acceptance_rate()
    }

    /// Binomial standard error of [`volume`](Self::volume).
    pub fn volume_std_error(&self) -> f64 {
        let p = self.acceptance_rate();
        let drawn = self.drawn().max(1) as f64;
        self.box_volume * (p * (1.0 - p) / drawn).sqrt()
    }

    pub fn points(&self) -> impl Iterator<Item = &CVector> {
        self.blocks.iter().flat_map(|b| b.points.iter())
    }
}

/// Kronecker step `α_j = frac(φ_d^{-(j+1)})` with `φ_d` the positive root of
/// `x^{d+1} = x + 1`.
fn kronecker_step(dim: usize) -> Vec<f64> {
    let mut phi = 2.0_f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    (0..dim).map(|j| (1.0 / phi.powi(j as i32 + 1)).fract()).collect()
}

/// Uniform rejection sampling in the bounding box.
pub fn sample_domain(domain: &DomainSpec, plan: &SamplePlan) -> Result<SampleSet, QuadratureError> {
    if plan.blocks == 0 {
        return Err(QuadratureError::NoBlocks);
    }
    let n = domain.dimension();
    let bbox = domain.bounding_box().to_vec();
    let real_dim = 2 * n;
    let (shift, step) = match plan.mode {
        SamplingMode::MonteCarlo => (Vec::new(), Vec::new()),
        SamplingMode::ShiftedLattice => {
            let mut r = rng::stream(plan.seed, "lattice-shift", 0);
            ((0..real_dim).map(|_| r.gen::<f64>()).collect(), kronecker_step(real_dim))
        }
    };

    let blocks: Vec<SampleBlock> = plan
        .block_ranges()
        .into_par_iter()
        .enumerate()
        .map(|(b, (start, end))| {
            let mut r = rng::stream(plan.seed, "sample", b as u64);
            let mut unit = vec![0.0; real_dim];
            let mut points = Vec::new();
            for k in start..end {
                match plan.mode {
                    SamplingMode::MonteCarlo => unit.iter_mut().for_each(|u| *u = r.gen::<f64>()),
                    SamplingMode::ShiftedLattice => {
                        for (j, u) in unit.iter_mut().enumerate() {
                            *u = (shift[j] + (k + 1) as f64 * step[j]).fract();
                        }
                    }
                }
                let z = CVector::from_fn(n, |i, _| {
                    let (re_lo, re_hi) = bbox[2 * i];
                    let (im_lo, im_hi) = bbox[2 * i + 1];
                    Complex64::new(re_lo + (re_hi - re_lo) * unit[2 * i], im_lo + (im_hi - im_lo) * unit[2 * i + 1])
                });
                if domain.contains(&z) {
                    points.push(z);
                }
            }
            SampleBlock { drawn: end - start, points }
        })
        .collect();

    let set = SampleSet { dimension: n, box_volume: domain.box_volume(), blocks };
    if set.drawn() == 0 || set.acceptance_rate() < MIN_ACCEPTANCE_RATE {
        return Err(QuadratureError::LowAcceptance { accepted: set.accepted(), drawn: set.drawn() });
    }
    Ok(set)
}

/// Sum of `v vᴴ` over the block, `v` the monomial vector of each sample.
fn block_outer_sum(basis: &MonomialBasis, points: &[CVector]) -> CMatrix {
    let m = basis.size();
    let mut upper = vec![Complex64::new(0.0, 0.0); m * m];
    let mut v = vec![Complex64::new(0.0, 0.0); m];
    let mut v_conj = vec![Complex64::new(0.0, 0.0); m];
    for z in points {
        basis.evaluate_into(z, &mut v);
        for (c, x) in v_conj.iter_mut().zip(&v) {
            *c = x.conj();
        }
        for i in 0..m {
            let vi = v[i];
            let row = &mut upper[i * m..(i + 1) * m];
            for j in i..m {
                row[j] += vi * v_conj[j];
            }
        }
    }
    DMatrix::from_fn(m, m, |i, j| if i <= j { upper[i * m + j] } else { upper[j * m + i].conj() })
}

/// Gram matrix `G_{αβ} = V̂ · mean(z^α conj(z^β))` of a monomial basis from
/// accepted samples, Hermitian by construction.
pub fn gram_from_samples(
    domain: &DomainSpec,
    basis: &MonomialBasis,
    samples: &SampleSet,
    plan: &SamplePlan,
    settings: GramSettings,
) -> Result<GramModel, QuadratureError> {
    if basis.dimension() != domain.dimension() {
        return Err(QuadratureError::DimensionMismatch { basis: basis.dimension(), domain: domain.dimension() });
    }
    if samples.accepted() == 0 {
        return Err(QuadratureError::LowAcceptance { accepted: 0, drawn: samples.drawn() });
    }
    let sums: Vec<CMatrix> = samples.blocks.par_iter().map(|b| block_outer_sum(basis, &b.points)).collect();

    let m = basis.size();
    let mut total = CMatrix::zeros(m, m);
    for s in &sums {
        total += s;
    }
    let scale = |drawn: u64| Complex64::new(samples.box_volume / drawn as f64, 0.0);
    let gram = total * scale(samples.drawn());
    let block_grams = sums
        .into_iter()
        .zip(&samples.blocks)
        .filter(|(_, b)| !b.points.is_empty())
        .map(|(s, b)| s * scale(b.drawn))
        .collect();
    let provenance = Provenance {
        domain: domain.clone(),
        samples: plan.samples,
        seed: plan.seed,
        blocks: plan.blocks,
        mode: plan.mode,
        accepted: samples.accepted(),
        volume: samples.volume(),
        volume_std_error: samples.volume_std_error(),
    };
    Ok(GramModel::new(basis.clone(), gram, block_grams, settings, provenance)?)
}

/// Samples the domain and builds the Gram model of `basis`.
pub fn build_gram(
    domain: &DomainSpec,
    basis: &MonomialBasis,
    plan: &SamplePlan,
    settings: GramSettings,
) -> Result<GramModel, QuadratureError> {
    let samples = sample_domain(domain, plan)?;
    gram_from_samples(domain, basis, &samples, plan, settings)
}
