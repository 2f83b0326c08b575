//! Cross-validation, train/test splits and accuracy reporting.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::svm::{Label, LabeledDataset, SvmModel, SvmParams};
use crate::{Error, Result};

/// Regression constants of the accuracy-versus-genre-count curve.
pub const GENRE_CURVE_A: f64 = 93.36;
pub const GENRE_CURVE_R: f64 = 0.9618;

/// Expected accuracy in percent, `a * r^n_genres`, for a genre classifier
/// over `n_genres` classes.
pub fn expected_accuracy(n_genres: u32, a: f64, r: f64) -> f64 {
    a * r.powi(n_genres as i32)
}

/// Fold index per dataset item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub folds: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len())
            .filter(|&i| self.folds[i] == fold)
            .collect()
    }

    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len())
            .filter(|&i| self.folds[i] != fold)
            .collect()
    }
}

fn class_indices(labels: &[Label], class: Label) -> Vec<usize> {
    (0..labels.len()).filter(|&i| labels[i] == class).collect()
}

/// Stratified k-fold assignment.
///
/// Needs at least `k` items and two per class; a class smaller than `k`
/// simply leaves some folds without it.
///
/// Each class is shuffled (Fisher-Yates, seeded) and dealt round-robin; the
/// second class continues where the first stopped, so both total and
/// per-class fold sizes differ by at most one.
pub fn kfold_split(labels: &[Label], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    if labels.len() < k {
        return Err(Error::TooFewItems(format!(
            "{} items, fewer than {k} folds",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut dealt = 0;
    for class in [Label::Fado, Label::Other] {
        let mut idx = class_indices(labels, class);
        // every training side must still contain this class
        if idx.len() < 2 {
            return Err(Error::TooFewItems(format!(
                "class {class} has {} items",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for i in idx {
            folds[i] = dealt % k;
            dealt += 1;
        }
    }
    Ok(FoldAssignment { folds, k, seed })
}

/// Stratified random split; each class contributes
/// `round(fraction * class_size)` items to the training side.
pub fn train_test_split(
    dataset: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [Label::Fado, Label::Other] {
        let mut idx = class_indices(dataset.labels(), class);
        idx.shuffle(&mut rng);
        let n_train = (idx.len() as f64 * train_fraction).round() as usize;
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::DegenerateSplit(format!(
            "{} train / {} test items",
            train.len(),
            test.len()
        )));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// 2x2 counts, rows = predicted class, columns = actual class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct ConfusionMatrix {
    pub pred_fado_actual_fado: usize,
    pub pred_fado_actual_other: usize,
    pub pred_other_actual_fado: usize,
    pub pred_other_actual_other: usize,
}

impl From<[usize; 4]> for ConfusionMatrix {
    fn from(v: [usize; 4]) -> Self {
        Self {
            pred_fado_actual_fado: v[0],
            pred_fado_actual_other: v[1],
            pred_other_actual_fado: v[2],
            pred_other_actual_other: v[3],
        }
    }
}

impl From<ConfusionMatrix> for [usize; 4] {
    fn from(m: ConfusionMatrix) -> Self {
        [
            m.pred_fado_actual_fado,
            m.pred_fado_actual_other,
            m.pred_other_actual_fado,
            m.pred_other_actual_other,
        ]
    }
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        <[usize; 4]>::from(*self).iter().sum()
    }

    pub fn correct(&self) -> usize {
        self.pred_fado_actual_fado + self.pred_other_actual_other
    }

    /// Percent of correct predictions; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => 100.0 * self.correct() as f64 / n as f64,
        }
    }

    pub fn add(&mut self, actual: Label, predicted: Label) {
        match (predicted, actual) {
            (Label::Fado, Label::Fado) => self.pred_fado_actual_fado += 1,
            (Label::Fado, Label::Other) => self.pred_fado_actual_other += 1,
            (Label::Other, Label::Fado) => self.pred_other_actual_fado += 1,
            (Label::Other, Label::Other) => self.pred_other_actual_other += 1,
        }
    }
}

pub fn confusion_matrix(actual: &[Label], predicted: &[Label]) -> Result<ConfusionMatrix> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    let mut m = ConfusionMatrix::default();
    for (&a, &p) in actual.iter().zip(predicted) {
        m.add(a, p);
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemPrediction {
    pub id: String,
    pub actual: Label,
    pub predicted: Label,
    pub decision_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Cv,
    Split,
}

/// Settings recorded in a report so a run can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub mode: EvalMode,
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: f64,
    pub k: Option<usize>,
    pub train_fraction: Option<f64>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub seed: u64,
    pub strategy: Option<String>,
}

/// Outcome of a cross-validation or train/test run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub params: EvalParams,
    pub items: Vec<ItemPrediction>,
}

impl EvalReport {
    pub fn new(items: Vec<ItemPrediction>, params: EvalParams) -> Self {
        let mut confusion = ConfusionMatrix::default();
        for it in &items {
            confusion.add(it.actual, it.predicted);
        }
        Self {
            accuracy: confusion.accuracy(),
            confusion,
            params,
            items,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("<report>", e.line(), e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }
}

/// Model for `fold`, trained on every other fold.
pub fn fold_model(
    dataset: &LabeledDataset,
    assignment: &FoldAssignment,
    fold: usize,
    params: &SvmParams,
) -> Result<SvmModel> {
    SvmModel::train(&dataset.subset(&assignment.complement(fold)), params)
}

/// Predictions on `test` from a model trained on `train`.
pub fn holdout_predictions(
    train: &LabeledDataset,
    test: &LabeledDataset,
    params: &SvmParams,
) -> Result<Vec<ItemPrediction>> {
    let model = SvmModel::train(train, params)?;
    predict_all(&model, test)
}

fn predict_all(model: &SvmModel, data: &LabeledDataset) -> Result<Vec<ItemPrediction>> {
    data.vectors()
        .iter()
        .zip(data.labels())
        .zip(data.ids())
        .map(|((x, &actual), id)| {
            let decision_value = model.decision_value(x)?;
            Ok(ItemPrediction {
                id: id.clone(),
                actual,
                predicted: Label::from_decision(decision_value),
                decision_value,
            })
        })
        .collect()
}

/// Held-out predictions for every item under a fixed fold assignment, in
/// dataset order. Each fold's scaler and model see only the other folds.
pub fn cross_validate_folds(
    dataset: &LabeledDataset,
    assignment: &FoldAssignment,
    params: &SvmParams,
) -> Result<Vec<ItemPrediction>> {
    if assignment.folds.len() != dataset.len() {
        return Err(Error::LengthMismatch {
            left: assignment.folds.len(),
            right: dataset.len(),
        });
    }
    let per_fold = (0..assignment.k)
        .into_par_iter()
        .map(|fold| {
            let held_out = assignment.members(fold);
            let model = fold_model(dataset, assignment, fold, params)?;
            let preds = predict_all(&model, &dataset.subset(&held_out))?;
            Ok(held_out.into_iter().zip(preds).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut slots: Vec<Option<ItemPrediction>> = vec![None; dataset.len()];
    for (i, p) in per_fold.into_iter().flatten() {
        slots[i] = Some(p);
    }
    Ok(slots
        .into_iter()
        .map(|p| p.expect("folds partition the dataset"))
        .collect())
}

/// Stratified `k`-fold cross-validation at fixed (C, gamma).
pub fn cross_validate(
    dataset: &LabeledDataset,
    params: &SvmParams,
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    let assignment = kfold_split(dataset.labels(), k, seed)?;
    let items = cross_validate_folds(dataset, &assignment, params)?;
    Ok(EvalReport::new(
        items,
        EvalParams {
            mode: EvalMode::Cv,
            c: params.c,
            gamma: params.gamma,
            k: Some(k),
            train_fraction: None,
            n_train: None,
            n_test: None,
            seed,
            strategy: None,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn labels(n_fado: usize, n_other: usize) -> Vec<Label> {
        let mut v = vec![Label::Fado; n_fado];
        v.extend(vec![Label::Other; n_other]);
        v
    }

    fn dataset_with_labels(ls: Vec<Label>, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = ls
            .iter()
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        LabeledDataset::from_rows(rows, ls).unwrap()
    }

    fn separable(n: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                vec![s * rng.gen_range(0.2..1.0), rng.gen_range(-1.0..1.0)]
            })
            .collect();
        let ls = rows
            .iter()
            .map(|r| {
                if r[0] > 0.0 {
                    Label::Fado
                } else {
                    Label::Other
                }
            })
            .collect();
        LabeledDataset::from_rows(rows, ls).unwrap()
    }

    #[test]
    fn ten_items_ten_folds() {
        let a = kfold_split(&labels(5, 5), 10, 1).unwrap();
        let mut sizes = [0; 10];
        a.folds.iter().for_each(|&f| sizes[f] += 1);
        assert!(sizes.iter().all(|&s| s == 1));
    }

    #[test]
    fn twenty_items_ten_folds() {
        let a = kfold_split(&labels(10, 10), 10, 1).unwrap();
        let mut sizes = [0; 10];
        a.folds.iter().for_each(|&f| sizes[f] += 1);
        assert!(sizes.iter().all(|&s| s == 2));
    }

    #[test]
    fn balanced_500_gives_25_per_class_per_fold() {
        let ls = labels(250, 250);
        let a = kfold_split(&ls, 10, 42).unwrap();
        for f in 0..10 {
            let m = a.members(f);
            assert_eq!(m.iter().filter(|&&i| ls[i] == Label::Fado).count(), 25);
            assert_eq!(m.iter().filter(|&&i| ls[i] == Label::Other).count(), 25);
        }
    }

    #[test]
    fn too_few_items() {
        assert!(matches!(
            kfold_split(&labels(1, 20), 5, 0),
            Err(Error::TooFewItems(_))
        ));
        assert!(matches!(
            kfold_split(&labels(2, 2), 5, 0),
            Err(Error::TooFewItems(_))
        ));
        assert!(kfold_split(&labels(2, 3), 5, 0).is_ok());
        assert!(kfold_split(&labels(3, 3), 1, 0).is_err());
    }

    #[test]
    fn split_sizes() {
        let ds = dataset_with_labels(labels(250, 250), 3);
        let (train, test) = train_test_split(&ds, 2.0 / 3.0, 7).unwrap();
        assert_eq!((train.len(), test.len()), (334, 166));

        let ds = dataset_with_labels(labels(2, 2), 3);
        let (train, test) = train_test_split(&ds, 0.5, 1).unwrap();
        assert_eq!(
            (train.count(Label::Fado), train.count(Label::Other)),
            (1, 1)
        );
        assert_eq!((test.count(Label::Fado), test.count(Label::Other)), (1, 1));

        let ds = dataset_with_labels(labels(1, 1), 3);
        assert!(matches!(
            train_test_split(&ds, 0.9, 1),
            Err(Error::DegenerateSplit(_))
        ));
        assert!(train_test_split(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn confusion_examples() {
        let a = labels(5, 5);
        let m = confusion_matrix(&a, &a).unwrap();
        assert_eq!(<[usize; 4]>::from(m), [5, 0, 0, 5]);
        assert_eq!(m.accuracy(), 100.0);
        assert!(confusion_matrix(&a, &a[1..]).is_err());

        let table = ConfusionMatrix::from([80, 3, 4, 79]);
        assert_eq!(table.total(), 166);
        assert!((table.accuracy() - 100.0 * 159.0 / 166.0).abs() < 1e-12);
    }

    #[test]
    fn confusion_matches_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pick = |r: &mut ChaCha8Rng| {
            if r.gen_bool(0.5) {
                Label::Fado
            } else {
                Label::Other
            }
        };
        let actual: Vec<Label> = (0..300).map(|_| pick(&mut rng)).collect();
        let predicted: Vec<Label> = (0..300).map(|_| pick(&mut rng)).collect();
        let m = confusion_matrix(&actual, &predicted).unwrap();
        let mut tally = [0usize; 4];
        for (a, p) in actual.iter().zip(&predicted) {
            let row = if *p == Label::Fado { 0 } else { 2 };
            let col = if *a == Label::Fado { 0 } else { 1 };
            tally[row + col] += 1;
        }
        assert_eq!(<[usize; 4]>::from(m), tally);
    }

    #[test]
    fn genre_curve() {
        assert_eq!(expected_accuracy(0, 71.0, 0.5), 71.0);
        let one = expected_accuracy(1, GENRE_CURVE_A, GENRE_CURVE_R);
        assert_eq!((one * 100.0).round() / 100.0, 89.79);
        let ten = expected_accuracy(10, GENRE_CURVE_A, GENRE_CURVE_R);
        let by_hand = (0..10).fold(93.36, |acc, _| acc * 0.9618);
        assert!((ten - by_hand).abs() < 1e-9, "{ten}");
        assert!((ten - 63.3).abs() < 0.1, "{ten}");
    }

    #[test]
    fn separable_cv_is_perfect() {
        let ds = separable(60, 4);
        for k in [2, 5, 10] {
            let r = cross_validate(&ds, &SvmParams::new(1.0, 0.5), k, 11).unwrap();
            assert_eq!(r.accuracy, 100.0);
            assert_eq!(r.items.len(), 60);
            assert_eq!(r.confusion.accuracy(), r.accuracy);
        }
    }

    #[test]
    fn shuffled_labels_score_near_chance() {
        let n = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ls = labels(n / 2, n / 2);
        ls.shuffle(&mut rng);
        let ds = dataset_with_labels(ls, 99);
        let r = cross_validate(&ds, &SvmParams::new(1.0, 1.0), 10, 5).unwrap();
        // 95% binomial interval around 50% for n = 200: 50 +/- 1.96 * sqrt(.25 / 200) * 100
        let half_width = 1.96 * (0.25f64 / n as f64).sqrt() * 100.0;
        assert!(
            (r.accuracy - 50.0).abs() <= half_width,
            "accuracy {}",
            r.accuracy
        );
    }

    #[test]
    fn fold_models_do_not_see_held_out_items() {
        let ds = separable(40, 12);
        let a = kfold_split(ds.labels(), 4, 3).unwrap();
        let params = SvmParams::new(2.0, 1.0);
        let before = fold_model(&ds, &a, 1, &params).unwrap();
        let mut perturbed = ds.clone();
        for i in a.members(1) {
            perturbed
                .vector_mut(i)
                .iter_mut()
                .for_each(|v| *v = *v * 7.0 + 3.0);
        }
        let after = fold_model(&perturbed, &a, 1, &params).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn report_json_round_trip() {
        let ds = separable(20, 1);
        let r = cross_validate(&ds, &SvmParams::new(1.0, 0.5), 4, 2).unwrap();
        let text = r.to_json();
        for key in [
            "\"accuracy\"",
            "\"confusion\"",
            "\"params\"",
            "\"items\"",
            "\"decision_value\"",
            "\"C\"",
        ] {
            assert!(text.contains(key), "missing {key}");
        }
        assert_eq!(EvalReport::from_json(&text).unwrap(), r);
        assert_eq!(
            cross_validate(&ds, &SvmParams::new(1.0, 0.5), 4, 2)
                .unwrap()
                .to_json(),
            text
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn folds_partition_and_stratify(n_f in 5usize..60, n_o in 5usize..60, k in 2usize..6, seed: u64) {
            let ls = labels(n_f, n_o);
            let a = kfold_split(&ls, k, seed).unwrap();
            let mut seen = vec![0; ls.len()];
            for f in 0..k {
                for i in a.members(f) {
                    seen[i] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes: Vec<usize> = (0..k).map(|f| a.members(f).len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for class in [Label::Fado, Label::Other] {
                let per: Vec<usize> = (0..k)
                    .map(|f| a.members(f).iter().filter(|&&i| ls[i] == class).count())
                    .collect();
                prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
            }
        }
    }
}
