//! Multinomial-logit choice model.
//!
//! Item `i` in an offered set `S` is chosen with probability
//! `exp(x_i·θ) / (1 + Σ_{j∈S} exp(x_j·θ))`; the remaining mass goes to the
//! no-purchase option. All exponentials are evaluated after shifting by
//! `max(0, max z)` so utilities far beyond the `f64` exponent range are safe.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

/// Tolerance on `Σ p = 1` accepted by [`sample_choice`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Default cap on the number of subsets the exhaustive search may visit.
pub const DEFAULT_SUBSET_CAP: u64 = 200_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MnlError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("item index {index} out of range for {len} items")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("item index {0} appears twice in the assortment")]
    DuplicateIndex(usize),
    #[error("assortment must contain at least one item")]
    EmptyAssortment,
    #[error("assortment size {size} exceeds the cap {cap}")]
    TooLarge { size: usize, cap: usize },
    #[error("revenue {value} at item {index} is outside [-1, 1] or not finite")]
    InvalidRevenue { index: usize, value: f64 },
    #[error("non-finite feature value at item {index}")]
    NonFiniteFeature { index: usize },
    #[error("probabilities sum to {sum}, not 1")]
    NotNormalized { sum: f64 },
    #[error("invalid cardinality K={k} for N={n} items")]
    InvalidCardinality { k: usize, n: usize },
    #[error("instance needs {subsets} subsets, exceeding the exhaustive-search cap {cap}, and the uniform-revenue fast path does not apply")]
    UnsupportedInstance { subsets: u64, cap: u64 },
}

/// Utility parameter `θ`. The environment's true parameter is expected to lie
/// in the unit ball; estimates are unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameter(pub DVector<f64>);

impl ModelParameter {
    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self(DVector::from_column_slice(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// One user arrival: `N` item feature vectors (stored as the columns of a
/// `d × N` matrix) plus public per-item revenues.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundContext {
    features: DMatrix<f64>,
    revenues: Vec<f64>,
    round: usize,
}

impl RoundContext {
    pub fn new(features: DMatrix<f64>, revenues: Vec<f64>, round: usize) -> Result<Self, MnlError> {
        if revenues.len() != features.ncols() {
            return Err(MnlError::DimensionMismatch {
                expected: features.ncols(),
                found: revenues.len(),
            });
        }
        for (index, &value) in revenues.iter().enumerate() {
            if !value.is_finite() || value.abs() > 1.0 {
                return Err(MnlError::InvalidRevenue { index, value });
            }
        }
        for (index, column) in features.column_iter().enumerate() {
            if column.iter().any(|v| !v.is_finite()) {
                return Err(MnlError::NonFiniteFeature { index });
            }
        }
        Ok(Self {
            features,
            revenues,
            round,
        })
    }

    /// Builds a context from item vectors of equal length.
    pub fn from_items(items: &[Vec<f64>], revenues: Vec<f64>, round: usize) -> Result<Self, MnlError> {
        let dim = items.first().map_or(0, Vec::len);
        for item in items {
            if item.len() != dim {
                return Err(MnlError::DimensionMismatch {
                    expected: dim,
                    found: item.len(),
                });
            }
        }
        let flat: Vec<f64> = items.iter().flatten().copied().collect();
        Self::new(DMatrix::from_vec(dim, items.len(), flat), revenues, round)
    }

    /// Same items with every revenue set to one.
    pub fn with_uniform_revenue(features: DMatrix<f64>, round: usize) -> Self {
        let n = features.ncols();
        Self {
            features,
            revenues: alloc::vec![1.0; n],
            round,
        }
    }

    pub fn num_items(&self) -> usize {
        self.features.ncols()
    }

    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    /// Feature vector of item `i` as a contiguous slice.
    pub fn item(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.features.as_slice()[i * d..(i + 1) * d]
    }

    pub fn revenues(&self) -> &[f64] {
        &self.revenues
    }

    /// `x_i·θ` for every item.
    pub fn utilities(&self, theta: &ModelParameter) -> Result<Vec<f64>, MnlError> {
        self.check_dim(theta)?;
        Ok((0..self.num_items()).map(|i| dot(self.item(i), theta.as_slice())).collect())
    }

    fn check_dim(&self, theta: &ModelParameter) -> Result<(), MnlError> {
        if theta.dim() != self.dim() {
            return Err(MnlError::DimensionMismatch {
                expected: self.dim(),
                found: theta.dim(),
            });
        }
        Ok(())
    }
}

/// A set of distinct item indices, kept in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assortment(Vec<usize>);

impl Assortment {
    pub fn new(mut indices: Vec<usize>) -> Result<Self, MnlError> {
        if indices.is_empty() {
            return Err(MnlError::EmptyAssortment);
        }
        indices.sort_unstable();
        for pair in indices.windows(2) {
            if pair[0] == pair[1] {
                return Err(MnlError::DuplicateIndex(pair[0]));
            }
        }
        Ok(Self(indices))
    }

    /// Checks indices against a catalog of `num_items` and a size cap `k`.
    pub fn validate(&self, num_items: usize, k: usize) -> Result<(), MnlError> {
        if self.0.len() > k {
            return Err(MnlError::TooLarge {
                size: self.0.len(),
                cap: k,
            });
        }
        match self.0.last() {
            Some(&last) if last >= num_items => Err(MnlError::IndexOutOfRange {
                index: last,
                len: num_items,
            }),
            _ => Ok(()),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }
}

/// A user's decision. `position` indexes the layout `S ∪ {0}` with the
/// no-purchase option at 0 and the `k`-th offered item at `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChoiceOutcome {
    position: usize,
}

impl ChoiceOutcome {
    pub const NO_PURCHASE: Self = Self { position: 0 };

    pub fn from_position(position: usize) -> Self {
        Self { position }
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn is_purchase(&self) -> bool {
        self.position != 0
    }

    /// Catalog index of the purchased item, if any.
    pub fn chosen_item(&self, assortment: &Assortment) -> Option<usize> {
        self.position
            .checked_sub(1)
            .and_then(|k| assortment.indices().get(k).copied())
    }

    /// One-hot vector over `S ∪ {0}` for an assortment of `size` items.
    pub fn one_hot(&self, size: usize) -> Vec<f64> {
        let mut y = alloc::vec![0.0; size + 1];
        y[self.position] = 1.0;
        y
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Shifted exponentials: returns `(e_j = exp(z_j - m), exp(-m))` with
/// `m = max(0, max z)`.
fn shifted_exp(z: &[f64]) -> (Vec<f64>, f64) {
    let shift = z.iter().copied().fold(0.0_f64, f64::max);
    let weights = z.iter().map(|&v| libm::exp(v - shift)).collect();
    (weights, libm::exp(-shift))
}

/// Choice probabilities over `S ∪ {0}` given utilities of the offered items,
/// in the one-hot layout (no purchase first).
pub fn probabilities_from_utilities(z: &[f64]) -> Vec<f64> {
    let (weights, base) = shifted_exp(z);
    let denom = base + weights.iter().sum::<f64>();
    let mut probs = Vec::with_capacity(z.len() + 1);
    probs.push(base / denom);
    probs.extend(weights.iter().map(|w| w / denom));
    probs
}

/// MNL probabilities for `assortment` under `theta`, no-purchase first.
pub fn choice_probabilities(
    ctx: &RoundContext,
    assortment: &Assortment,
    theta: &ModelParameter,
) -> Result<Vec<f64>, MnlError> {
    ctx.check_dim(theta)?;
    assortment.validate(ctx.num_items(), usize::MAX)?;
    let z: Vec<f64> = assortment
        .indices()
        .iter()
        .map(|&i| dot(ctx.item(i), theta.as_slice()))
        .collect();
    Ok(probabilities_from_utilities(&z))
}

/// Draws one category from `probs` by inverting the cumulative sum against a
/// single uniform draw.
pub fn sample_choice<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<ChoiceOutcome, MnlError> {
    let sum: f64 = probs.iter().sum();
    if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > NORMALIZATION_TOLERANCE
    {
        return Err(MnlError::NotNormalized { sum });
    }
    let u: f64 = rng.random::<f64>() * sum;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (position, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = position;
            acc += p;
            if u < acc {
                return Ok(ChoiceOutcome::from_position(position));
            }
        }
    }
    Ok(ChoiceOutcome::from_position(last_positive))
}

/// `Σ_{i∈S} r_i p(i | S, θ)`.
pub fn expected_revenue(ctx: &RoundContext, assortment: &Assortment, theta: &ModelParameter) -> Result<f64, MnlError> {
    let probs = choice_probabilities(ctx, assortment, theta)?;
    Ok(assortment
        .indices()
        .iter()
        .zip(&probs[1..])
        .map(|(&i, p)| ctx.revenues()[i] * p)
        .sum())
}

/// `Σ r_i e^{z_i} / (1 + Σ e^{z_j})` over the offered items.
pub fn optimistic_revenue(z: &[f64], revenues: &[f64]) -> f64 {
    debug_assert_eq!(z.len(), revenues.len());
    let (weights, base) = shifted_exp(z);
    let numer: f64 = weights.iter().zip(revenues).map(|(w, r)| w * r).sum();
    let denom = base + weights.iter().sum::<f64>();
    numer / denom
}

/// How [`best_assortment`] searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssortmentSearch {
    /// Top-K when revenues are uniform and positive, exhaustive otherwise.
    Auto { subset_cap: u64 },
    /// Enumerate every subset of size `1..=K`.
    Exhaustive { subset_cap: u64 },
    /// Top-K by utility; only valid for uniform positive revenues.
    TopK,
}

impl Default for AssortmentSearch {
    fn default() -> Self {
        Self::Auto {
            subset_cap: DEFAULT_SUBSET_CAP,
        }
    }
}

/// Number of non-empty subsets of size at most `k` drawn from `n` items,
/// saturating at `u64::MAX`.
pub fn subsets_up_to(n: usize, k: usize) -> u64 {
    let mut total: u64 = 0;
    let mut binom: u128 = 1;
    for j in 1..=k.min(n) {
        binom = binom * (n - j + 1) as u128 / j as u128;
        total = total.saturating_add(u64::try_from(binom).unwrap_or(u64::MAX));
    }
    total
}

fn uniform_positive(revenues: &[f64]) -> bool {
    match revenues.first() {
        Some(&r0) => r0 > 0.0 && revenues.iter().all(|&r| r == r0),
        None => false,
    }
}

/// The `k` largest utilities, ties to the lower index, returned sorted.
pub fn top_k(z: &[f64], k: usize) -> Assortment {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    Assortment(order)
}

/// Revenue-maximizing set of at most `k` items under the optimistic revenue.
///
/// Ties go to the lexicographically smallest index set. With uniform positive
/// revenues the objective is increasing in `Σ e^{z}`, so the `k` largest
/// utilities are optimal.
pub fn best_assortment(z: &[f64], revenues: &[f64], k: usize, search: AssortmentSearch) -> Result<Assortment, MnlError> {
    let n = z.len();
    if revenues.len() != n {
        return Err(MnlError::DimensionMismatch {
            expected: n,
            found: revenues.len(),
        });
    }
    if k == 0 || k > n {
        return Err(MnlError::InvalidCardinality { k, n });
    }
    match search {
        AssortmentSearch::TopK => {
            if !uniform_positive(revenues) {
                return Err(MnlError::UnsupportedInstance {
                    subsets: subsets_up_to(n, k),
                    cap: 0,
                });
            }
            Ok(top_k(z, k))
        }
        AssortmentSearch::Auto { subset_cap } => {
            if uniform_positive(revenues) {
                Ok(top_k(z, k))
            } else {
                exhaustive(z, revenues, k, subset_cap)
            }
        }
        AssortmentSearch::Exhaustive { subset_cap } => exhaustive(z, revenues, k, subset_cap),
    }
}

fn exhaustive(z: &[f64], revenues: &[f64], k: usize, cap: u64) -> Result<Assortment, MnlError> {
    let n = z.len();
    let subsets = subsets_up_to(n, k);
    if subsets > cap {
        return Err(MnlError::UnsupportedInstance { subsets, cap });
    }
    // Depth-first enumeration visits index sets in lexicographic order, so
    // keeping only strict improvements yields the smallest maximizer.
    let weights: Vec<f64> = {
        let (w, _) = shifted_exp(z);
        w
    };
    let base = libm::exp(-z.iter().copied().fold(0.0_f64, f64::max));
    let mut search = Exhaustive {
        weights: &weights,
        revenues,
        base,
        k,
        current: Vec::with_capacity(k),
        best: Vec::new(),
        best_value: f64::NEG_INFINITY,
    };
    search.descend(0, 0.0, 0.0);
    Ok(Assortment(search.best))
}

struct Exhaustive<'a> {
    weights: &'a [f64],
    revenues: &'a [f64],
    base: f64,
    k: usize,
    current: Vec<usize>,
    best: Vec<usize>,
    best_value: f64,
}

impl Exhaustive<'_> {
    fn descend(&mut self, start: usize, numer: f64, weight_sum: f64) {
        for i in start..self.weights.len() {
            let numer_i = numer + self.weights[i] * self.revenues[i];
            let sum_i = weight_sum + self.weights[i];
            self.current.push(i);
            let value = numer_i / (self.base + sum_i);
            if value > self.best_value {
                self.best_value = value;
                self.best.clone_from(&self.current);
            }
            if self.current.len() < self.k {
                self.descend(i + 1, numer_i, sum_i);
            }
            self.current.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx_from_utilities(u: &[f64], revenues: Vec<f64>) -> (RoundContext, ModelParameter) {
        // One-dimensional features with θ = 1 reproduce the utilities exactly.
        let items: Vec<Vec<f64>> = u.iter().map(|&v| vec![v]).collect();
        (
            RoundContext::from_items(&items, revenues, 1).unwrap(),
            ModelParameter::from_slice(&[1.0]),
        )
    }

    fn all(n: usize) -> Assortment {
        Assortment::new((0..n).collect()).unwrap()
    }

    #[test]
    fn zero_parameter_is_uniform() {
        let items = vec![vec![0.3, -1.0]; 4];
        let ctx = RoundContext::from_items(&items, vec![1.0; 4], 1).unwrap();
        let p = choice_probabilities(&ctx, &all(4), &ModelParameter::zeros(2)).unwrap();
        assert_eq!(p.len(), 5);
        for v in p {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_probabilities() {
        let (ctx, theta) = ctx_from_utilities(&[libm::log(3.0)], vec![1.0]);
        let p = choice_probabilities(&ctx, &all(1), &theta).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);

        let (ctx, theta) = ctx_from_utilities(&[libm::log(2.0), libm::log(3.0)], vec![1.0, 1.0]);
        let p = choice_probabilities(&ctx, &all(2), &theta).unwrap();
        let expect = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn probability_errors() {
        let (ctx, _) = ctx_from_utilities(&[0.0, 1.0], vec![1.0, 1.0]);
        assert!(matches!(
            choice_probabilities(&ctx, &all(2), &ModelParameter::zeros(3)),
            Err(MnlError::DimensionMismatch { .. })
        ));
        let s = Assortment::new(vec![0, 5]).unwrap();
        assert!(matches!(
            choice_probabilities(&ctx, &s, &ModelParameter::zeros(1)),
            Err(MnlError::IndexOutOfRange { index: 5, len: 2 })
        ));
        assert_eq!(Assortment::new(vec![1, 1]), Err(MnlError::DuplicateIndex(1)));
    }

    #[test]
    fn degenerate_and_deterministic_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(sample_choice(&[0.0, 1.0, 0.0], &mut rng).unwrap().position(), 1);
        }
        let probs = [0.2, 0.3, 0.5];
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            assert_eq!(sample_choice(&probs, &mut a), sample_choice(&probs, &mut b));
        }
        assert!(matches!(sample_choice(&[0.5, 0.6], &mut a), Err(MnlError::NotNormalized { .. })));
    }

    #[test]
    fn sampling_passes_chi_square() {
        // Critical value of χ² with 2 degrees of freedom at level 0.001 is
        // -2 ln(0.001) = 13.8155.
        let probs = [0.5, 0.25, 0.25];
        let draws = 100_000;
        let mut counts = [0usize; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..draws {
            counts[sample_choice(&probs, &mut rng).unwrap().position()] += 1;
        }
        let stat: f64 = counts
            .iter()
            .zip(probs)
            .map(|(&c, p)| {
                let e = p * draws as f64;
                (c as f64 - e) * (c as f64 - e) / e
            })
            .sum();
        assert!(stat < -2.0 * libm::log(0.001), "chi2 = {stat}");
    }

    #[test]
    fn expected_revenue_cases() {
        let items = vec![vec![0.5]; 10];
        let ctx = RoundContext::from_items(&items, vec![1.0; 10], 1).unwrap();
        let r = expected_revenue(&ctx, &all(10), &ModelParameter::zeros(1)).unwrap();
        assert!((r - 10.0 / 11.0).abs() < 1e-15);

        let ctx0 = RoundContext::from_items(&items, vec![0.0; 10], 1).unwrap();
        assert_eq!(expected_revenue(&ctx0, &all(10), &ModelParameter::zeros(1)).unwrap(), 0.0);

        let ln2 = libm::log(2.0);
        let (ctx, theta) = ctx_from_utilities(&[ln2, ln2], vec![1.0, -1.0]);
        assert!(expected_revenue(&ctx, &all(2), &theta).unwrap().abs() < 1e-15);
    }

    #[test]
    fn optimistic_revenue_cases() {
        assert!((optimistic_revenue(&[0.0; 7], &[1.0; 7]) - 7.0 / 8.0).abs() < 1e-15);
        let r = optimistic_revenue(&[1000.0], &[1.0]);
        assert!(r.is_finite() && (r - 1.0).abs() < 1e-12);
        let z = [libm::log(2.0), libm::log(3.0)];
        assert!((optimistic_revenue(&z, &[1.0, 1.0]) - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn optimistic_matches_expected_revenue() {
        let items = vec![vec![0.4, -0.2], vec![1.5, 0.3], vec![-0.7, 2.0]];
        let revenues = vec![0.9, -0.4, 0.3];
        let ctx = RoundContext::from_items(&items, revenues.clone(), 1).unwrap();
        let theta = ModelParameter::from_slice(&[0.8, -1.1]);
        let z = ctx.utilities(&theta).unwrap();
        let direct = expected_revenue(&ctx, &all(3), &theta).unwrap();
        assert!((optimistic_revenue(&z, &revenues) - direct).abs() < 1e-15);
    }

    #[test]
    fn best_assortment_examples() {
        let z = [2.0, 1.0, 0.0, -1.0];
        let s = best_assortment(&z, &[1.0; 4], 2, AssortmentSearch::default()).unwrap();
        assert_eq!(s.indices(), &[0, 1]);
        let brute = best_assortment(&z, &[1.0; 4], 2, AssortmentSearch::Exhaustive { subset_cap: 100 }).unwrap();
        assert_eq!(brute, s);

        let full = best_assortment(&z, &[1.0; 4], 4, AssortmentSearch::default()).unwrap();
        assert_eq!(full.indices(), &[0, 1, 2, 3]);

        // Singletons: R({0}) = 1/2, R({1}) = 0.01 e^10 / (1 + e^10) ≈ 0.00999955.
        let r = [1.0, 0.01];
        let zs = [0.0, 10.0];
        let oracle0 = optimistic_revenue(&zs[..1], &r[..1]);
        let oracle1 = optimistic_revenue(&zs[1..], &r[1..]);
        assert!(oracle0 > oracle1);
        let s = best_assortment(&zs, &r, 1, AssortmentSearch::default()).unwrap();
        assert_eq!(s.indices(), &[0]);
    }

    #[test]
    fn ties_go_to_lowest_indices() {
        let s = best_assortment(&[1.0, 1.0, 1.0], &[1.0; 3], 2, AssortmentSearch::default()).unwrap();
        assert_eq!(s.indices(), &[0, 1]);
        let s = best_assortment(&[0.0, 0.0], &[0.5, 0.5], 1, AssortmentSearch::Exhaustive { subset_cap: 10 }).unwrap();
        assert_eq!(s.indices(), &[0]);
    }

    #[test]
    fn oversized_instances_are_rejected() {
        let z = vec![0.0; 60];
        let mut r = vec![1.0; 60];
        r[0] = 0.5;
        assert!(matches!(
            best_assortment(&z, &r, 10, AssortmentSearch::default()),
            Err(MnlError::UnsupportedInstance { .. })
        ));
        assert!(matches!(
            best_assortment(&z, &r, 61, AssortmentSearch::default()),
            Err(MnlError::InvalidCardinality { .. })
        ));
    }

    #[test]
    fn subset_counting() {
        assert_eq!(subsets_up_to(4, 2), 4 + 6);
        assert_eq!(subsets_up_to(5, 5), 31);
        assert_eq!(subsets_up_to(3, 7), 7);
    }

    #[test]
    fn one_hot_layout() {
        let s = Assortment::new(vec![7, 2, 4]).unwrap();
        let out = ChoiceOutcome::from_position(2);
        assert_eq!(out.chosen_item(&s), Some(4));
        assert_eq!(out.one_hot(3), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(ChoiceOutcome::NO_PURCHASE.chosen_item(&s), None);
    }
}
