//! Seeded blob samplers.
//!
//! All draws come from [`CounterStream`]s indexed by blob index, so results
//! depend only on `(scene, probabilities, budget, seed)` and never on thread
//! count or evaluation order.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::ObjectProbabilityField;
use crate::error::{Error, Result};
use crate::model::{GaussianBlob, GaussianScene};
use crate::rng::{streams, CounterStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Probability-weighted sampling driven by detection frustums.
    BoxFocused,
    Random,
    FarthestPoint,
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerKind::BoxFocused => "box_focused",
            SamplerKind::Random => "random",
            SamplerKind::FarthestPoint => "farthest_point",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Exactly `M` blobs: weighted sampling without replacement via the
    /// exponential race, keeping the `M` smallest keys `-ln(u_i) / p_i`.
    #[default]
    Budgeted,
    /// Keep each blob independently iff `u_i < p_i`; the count varies.
    Bernoulli,
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMode::Budgeted => "budgeted",
            SamplingMode::Bernoulli => "bernoulli",
        })
    }
}

/// A subset of a scene's blobs.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledScene {
    /// Strictly increasing indices into the source scene.
    pub indices: Vec<usize>,
    pub blobs: Vec<GaussianBlob>,
    pub sampler: SamplerKind,
    pub mode: SamplingMode,
    pub seed: u64,
    /// Upper bound on `indices.len()`. Bernoulli samples record `N`.
    pub budget: usize,
}

impl SampledScene {
    fn from_indices(
        scene: &GaussianScene,
        mut indices: Vec<usize>,
        sampler: SamplerKind,
        mode: SamplingMode,
        seed: u64,
        budget: usize,
    ) -> Self {
        indices.sort_unstable();
        let blobs = indices.iter().map(|&i| scene.blobs[i]).collect();
        Self {
            indices,
            blobs,
            sampler,
            mode,
            seed,
            budget,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn to_scene(&self, source: &str) -> GaussianScene {
        GaussianScene {
            blobs: self.blobs.clone(),
            source_path: source.to_string(),
        }
    }
}

fn check_budget(n: usize, budget: usize) -> Result<()> {
    if budget == 0 || budget > n {
        return Err(Error::validation(format!(
            "budget {budget} must satisfy 1 <= M <= N = {n}"
        )));
    }
    Ok(())
}

/// Indices of the `m` smallest keys, ties broken by index.
fn smallest_keys(keys: Vec<(f64, usize)>, m: usize) -> Vec<usize> {
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let mut keys = keys;
    if m < keys.len() {
        keys.select_nth_unstable_by(m, order);
        keys.truncate(m);
    }
    keys.into_iter().map(|k| k.1).collect()
}

/// Samples blobs in proportion to their aggregated object probability.
pub fn box_focused_sample(
    scene: &GaussianScene,
    field: &ObjectProbabilityField,
    budget: usize,
    seed: u64,
    mode: SamplingMode,
) -> Result<SampledScene> {
    let n = scene.len();
    if field.len() != n {
        return Err(Error::validation(format!(
            "probability field has {} entries for {n} blobs",
            field.len()
        )));
    }
    if let Some((i, p)) = field
        .values
        .iter()
        .enumerate()
        .find(|(_, p)| !(**p > 0.0 && **p <= 1.0))
    {
        return Err(Error::validation(format!("blob {i} has probability {p} outside (0, 1]")));
    }
    let stream = CounterStream::new(seed, streams::BOX_FOCUSED);
    match mode {
        SamplingMode::Budgeted => {
            check_budget(n, budget)?;
            let keys: Vec<(f64, usize)> = field
                .values
                .par_iter()
                .enumerate()
                .with_min_len(4096)
                .map(|(i, &p)| (-stream.open01_at(i as u64).ln() / p, i))
                .collect();
            Ok(SampledScene::from_indices(
                scene,
                smallest_keys(keys, budget),
                SamplerKind::BoxFocused,
                mode,
                seed,
                budget,
            ))
        }
        SamplingMode::Bernoulli => {
            let kept: Vec<usize> = field
                .values
                .par_iter()
                .enumerate()
                .with_min_len(4096)
                .filter(|(i, &p)| stream.open01_at(*i as u64) < p)
                .map(|(i, _)| i)
                .collect();
            Ok(SampledScene::from_indices(
                scene,
                kept,
                SamplerKind::BoxFocused,
                mode,
                seed,
                n,
            ))
        }
    }
}

/// Uniform `M`-subset without replacement.
pub fn random_sample(scene: &GaussianScene, budget: usize, seed: u64) -> Result<SampledScene> {
    let n = scene.len();
    check_budget(n, budget)?;
    let stream = CounterStream::new(seed, streams::RANDOM);
    let keys: Vec<(f64, usize)> = (0..n)
        .into_par_iter()
        .with_min_len(4096)
        .map(|i| (stream.open01_at(i as u64), i))
        .collect();
    Ok(SampledScene::from_indices(
        scene,
        smallest_keys(keys, budget),
        SamplerKind::Random,
        SamplingMode::Budgeted,
        seed,
        budget,
    ))
}

#[inline]
fn dist_sq(a: &nalgebra::Vector3<f64>, b: &nalgebra::Vector3<f64>) -> f64 {
    let d = a - b;
    d.x * d.x + d.y * d.y + d.z * d.z
}

/// Larger distance wins; on equal distance the lower index wins.
#[inline]
fn better(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    match a.0.total_cmp(&b.0) {
        Ordering::Greater => a,
        Ordering::Less => b,
        Ordering::Equal => {
            if a.1 <= b.1 {
                a
            } else {
                b
            }
        }
    }
}

const FPS_PARALLEL_THRESHOLD: usize = 1 << 14;

/// Greedy farthest-point order on blob centers, starting from a seeded index.
///
/// Each step picks the unselected blob maximizing the squared Euclidean
/// distance to the selected set; ties go to the lowest index.
pub fn farthest_point_order(scene: &GaussianScene, budget: usize, seed: u64) -> Result<Vec<usize>> {
    let n = scene.len();
    check_budget(n, budget)?;
    let start = CounterStream::new(seed, streams::FPS_START).below_at(0, n);
    Ok(farthest_point_order_from(scene, budget, start))
}

pub(crate) fn farthest_point_order_from(scene: &GaussianScene, budget: usize, start: usize) -> Vec<usize> {
    let n = scene.len();
    let pos: Vec<_> = scene.blobs.iter().map(|b| b.position).collect();
    let mut min_d: Vec<f64> = vec![f64::INFINITY; n];
    let mut selected = vec![false; n];
    let mut order = Vec::with_capacity(budget);
    let mut current = start;
    let none = (f64::NEG_INFINITY, usize::MAX);
    loop {
        order.push(current);
        selected[current] = true;
        if order.len() == budget {
            break;
        }
        let c = pos[current];
        let update = |(i, d): (usize, &mut f64)| -> (f64, usize) {
            if selected[i] {
                return none;
            }
            let nd = dist_sq(&pos[i], &c);
            if nd < *d {
                *d = nd;
            }
            (*d, i)
        };
        let best = if n >= FPS_PARALLEL_THRESHOLD {
            min_d
                .par_iter_mut()
                .enumerate()
                .with_min_len(4096)
                .map(update)
                .reduce(|| none, better)
        } else {
            min_d.iter_mut().enumerate().map(update).fold(none, better)
        };
        current = best.1;
    }
    order
}

pub fn farthest_point_sample(scene: &GaussianScene, budget: usize, seed: u64) -> Result<SampledScene> {
    let order = farthest_point_order(scene, budget, seed)?;
    Ok(SampledScene::from_indices(
        scene,
        order,
        SamplerKind::FarthestPoint,
        SamplingMode::Budgeted,
        seed,
        budget,
    ))
}
