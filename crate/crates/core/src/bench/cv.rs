//! Grid-search cross-validation over one hyperparameter.

use std::time::Instant;

use super::config::{validate_cv, CvParameter, CvScheme, CvSpec};
use crate::baselines::RidgePath;
use crate::classifiers::{fit, predictions, ClassifierKind, FitContext, FittedPipeline, KernelGram, ModelSpec};
use crate::data::{derive_seed, permutation, Dataset};
use crate::error::Result;
use crate::metrics::{balanced_accuracy_observed, confusion};
use crate::par::{try_map_indexed, ExecMode};

/// Validation index sets. K-fold is stratified: each class is shuffled with its own
/// seed and dealt round-robin, continuing where the previous class stopped.
pub fn fold_indices(labels: &[usize], k: usize, scheme: CvScheme, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let n = labels.len();
    if scheme == CvScheme::LeaveOneOut {
        return (0..n).map(|i| vec![i]).collect();
    }
    let folds = folds.clamp(1, n.max(1));
    let mut out = vec![Vec::new(); folds];
    let mut offset = 0;
    for class in 1..=k {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        let perm = permutation(members.len(), derive_seed(seed, class as u64));
        for (pos, &p) in perm.iter().enumerate() {
            out[(offset + pos) % folds].push(members[p]);
        }
        offset += members.len();
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

fn complement(n: usize, held_out: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in held_out {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

fn fold_ba(preds: &[usize], val: &Dataset) -> Result<f64> {
    Ok(balanced_accuracy_observed(&confusion(preds, val.labels(), val.class_count())?))
}

/// Validation BA of every grid value on one fold.
fn fold_scores(
    spec: &ModelSpec,
    cv: &CvSpec,
    train: &Dataset,
    held_out: &[usize],
    deadline: Option<Instant>,
) -> Result<Vec<f64>> {
    let fold_train = train.subset(&complement(train.n_samples(), held_out));
    let val = train.subset(held_out);
    let k = train.class_count();
    let shared = |e| FittedPipeline::fit(&spec.pipeline, e, fold_train.features());
    match (spec.kind, cv.parameter) {
        // One Gram eigendecomposition serves the whole threshold grid.
        (ClassifierKind::KPgmC, CvParameter::RelThreshold) => {
            let (pipe, x) = shared(spec.expansion())?;
            let z = pipe.transform(val.features())?;
            let gram = KernelGram::new(x, fold_train.labels().to_vec(), k, spec.pipeline.copies)?;
            cv.grid
                .iter()
                .map(|&t| fold_ba(&predictions(&gram.model(t)?.scores_batch(&z)?), &val))
                .collect()
        }
        (ClassifierKind::RidgeC, CvParameter::RidgeLambda) => {
            let (pipe, x) = shared(spec.expansion())?;
            let z = pipe.transform(val.features())?;
            let path = RidgePath::new(&x, fold_train.labels(), k)?;
            cv.grid
                .iter()
                .map(|&l| fold_ba(&predictions(&path.fit(l)?.scores_batch(&z)?), &val))
                .collect()
        }
        _ => {
            let ctx = FitContext {
                deadline,
                exec: ExecMode::Sequential,
            };
            cv.grid
                .iter()
                .map(|&v| {
                    let model = fit(&cv.parameter.apply(spec, v), &fold_train, &ctx)?;
                    fold_ba(&model.predict_batch(val.features(), ExecMode::Sequential)?, &val)
                })
                .collect()
        }
    }
}

/// Mean validation BA per grid value.
pub fn cv_mean_scores(
    spec: &ModelSpec,
    train: &Dataset,
    cv: &CvSpec,
    seed: u64,
    exec: ExecMode,
    deadline: Option<Instant>,
) -> Result<Vec<f64>> {
    validate_cv(cv, spec)?;
    let folds = fold_indices(train.labels(), train.class_count(), cv.scheme, cv.folds, seed);
    let per_fold = try_map_indexed(folds.len(), exec, |f| fold_scores(spec, cv, train, &folds[f], deadline))?;
    let mut mean = vec![0.0; cv.grid.len()];
    for scores in &per_fold {
        for (m, s) in mean.iter_mut().zip(scores) {
            *m += s;
        }
    }
    for m in &mut mean {
        *m /= per_fold.len() as f64;
    }
    Ok(mean)
}

/// Grid value with the best mean validation BA; ties go to the smallest value.
pub fn cv_select(
    spec: &ModelSpec,
    train: &Dataset,
    cv: &CvSpec,
    seed: u64,
    exec: ExecMode,
    deadline: Option<Instant>,
) -> Result<f64> {
    validate_cv(cv, spec)?;
    if cv.grid.len() == 1 {
        return Ok(cv.grid[0]);
    }
    let mean = cv_mean_scores(spec, train, cv, seed, exec, deadline)?;
    Ok(best_value(&cv.grid, &mean))
}

pub(crate) fn best_value(grid: &[f64], scores: &[f64]) -> f64 {
    let mut best = 0;
    for i in 1..grid.len() {
        if scores[i] > scores[best] || (scores[i] == scores[best] && grid[i] < grid[best]) {
            best = i;
        }
    }
    grid[best]
}
