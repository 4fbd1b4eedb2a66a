use super::{EvalError, PredictionDistribution};
use crate::classes::{SceneClass, NUM_CLASSES};

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self { counts: [[0; NUM_CLASSES]; NUM_CLASSES] }
    }
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_predictions<'a>(
        preds: impl IntoIterator<Item = (SceneClass, &'a PredictionDistribution)>,
    ) -> Self {
        let mut cm = Self::new();
        for (truth, p) in preds {
            cm.add(truth.index(), p.argmax());
        }
        cm
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn row_total(&self, truth: usize) -> u64 {
        self.counts[truth].iter().sum()
    }

    pub fn total(&self) -> u64 {
        (0..NUM_CLASSES).map(|r| self.row_total(r)).sum()
    }

    /// Fraction correct per true class; `None` for classes with no clips.
    pub fn class_accuracy(&self) -> [Option<f64>; NUM_CLASSES] {
        std::array::from_fn(|c| {
            let n = self.row_total(c);
            (n > 0).then(|| self.counts[c][c] as f64 / n as f64)
        })
    }

    /// Unweighted mean over the classes that have clips.
    pub fn macro_accuracy(&self) -> Result<f64, EvalError> {
        let acc = self.class_accuracy();
        let present: Vec<f64> = acc.iter().flatten().copied().collect();
        if present.is_empty() {
            return Err(EvalError::Argument("confusion matrix is empty".into()));
        }
        if present.len() < NUM_CLASSES {
            let missing: Vec<&str> = (0..NUM_CLASSES)
                .filter(|c| acc[*c].is_none())
                .map(|c| SceneClass::new(c).unwrap().label())
                .collect();
            log::warn!("macro accuracy excludes classes without clips: {}", missing.join(", "));
        }
        Ok(macro_accuracy_of(&present))
    }

    /// Plain-text 15x15 grid with abbreviated class headers.
    pub fn to_grid(&self) -> String {
        let abbrev = |c: usize| SceneClass::new(c).unwrap().label().chars().take(6).collect::<String>();
        let width = 6.max(self.counts.iter().flatten().max().map_or(1, |m| m.to_string().len()));
        let mut s = format!("{:<18}", "true \\ predicted");
        for c in 0..NUM_CLASSES {
            s.push_str(&format!(" {:>width$}", abbrev(c)));
        }
        s.push('\n');
        for r in 0..NUM_CLASSES {
            s.push_str(&format!("{:<18}", SceneClass::new(r).unwrap().label()));
            for c in 0..NUM_CLASSES {
                s.push_str(&format!(" {:>width$}", self.counts[r][c]));
            }
            s.push('\n');
        }
        s
    }

    /// Comma-separated grid with a header row of class labels.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true_label");
        for c in SceneClass::all() {
            s.push(',');
            s.push_str(c.label());
        }
        s.push('\n');
        for r in 0..NUM_CLASSES {
            s.push_str(SceneClass::new(r).unwrap().label());
            for c in 0..NUM_CLASSES {
                s.push_str(&format!(",{}", self.counts[r][c]));
            }
            s.push('\n');
        }
        s
    }
}

/// Arithmetic mean of per-class accuracies (any consistent unit).
pub fn macro_accuracy_of(class_accuracies: &[f64]) -> f64 {
    class_accuracies.iter().sum::<f64>() / class_accuracies.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn onehot(c: usize) -> PredictionDistribution {
        let mut v = vec![0.0; NUM_CLASSES];
        v[c] = 1.0;
        PredictionDistribution::new(v).unwrap()
    }

    #[test]
    fn all_correct_is_diagonal() {
        let preds: Vec<_> = (0..30).map(|i| (SceneClass::new(i % 15).unwrap(), onehot(i % 15))).collect();
        let cm = ConfusionMatrix::from_predictions(preds.iter().map(|(t, p)| (*t, p)));
        for r in 0..NUM_CLASSES {
            for c in 0..NUM_CLASSES {
                assert_eq!(cm.get(r, c), if r == c { 2 } else { 0 });
            }
        }
        assert!(cm.class_accuracy().iter().all(|a| *a == Some(1.0)));
        assert_eq!(cm.macro_accuracy().unwrap(), 1.0);
        assert_eq!(cm.total(), 30);
    }

    #[test]
    fn home_confused_with_library() {
        let home: SceneClass = "home".parse().unwrap();
        let library: SceneClass = "library".parse().unwrap();
        let p = onehot(library.index());
        let cm = ConfusionMatrix::from_predictions([(home, &p)]);
        assert_eq!(cm.get(home.index(), library.index()), 1);
        assert_eq!(cm.total(), 1);
        assert_eq!(cm.macro_accuracy().unwrap(), 0.0);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        assert!(matches!(ConfusionMatrix::new().macro_accuracy(), Err(EvalError::Argument(_))));
    }

    #[test]
    fn ensemble_development_column() {
        let col = [87.5, 90.1, 72.8, 98.4, 93.6, 91.7, 92.9, 74.8, 87.2, 86.5, 98.4, 66.3, 73.4, 75.3, 83.3];
        assert!((macro_accuracy_of(&col) - 84.8).abs() <= 0.05);
    }

    #[test]
    fn rows_sum_to_class_counts() {
        let mut cm = ConfusionMatrix::new();
        cm.add(3, 3);
        cm.add(3, 4);
        cm.add(3, 0);
        cm.add(7, 7);
        assert_eq!(cm.row_total(3), 3);
        assert_eq!(cm.row_total(7), 1);
        let acc = cm.class_accuracy();
        assert_eq!(acc[3], Some(1.0 / 3.0));
        assert_eq!(acc[0], None);
        assert!((cm.macro_accuracy().unwrap() - (1.0 / 3.0 + 1.0) / 2.0).abs() < 1e-15);
        assert_eq!(cm.to_grid().lines().count(), 16);
        assert_eq!(cm.to_csv().lines().count(), 16);
    }
}
