use super::{ConfusionMatrix, EvalError};
use crate::classes::{SceneClass, NUM_CLASSES};

/// Class-wise accuracy table over one or more evaluated models.
#[derive(Debug, Clone, Default)]
pub struct Report {
    columns: Vec<(String, ConfusionMatrix)>,
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |a| format!("{:.1}", a * 100.0))
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, cm: ConfusionMatrix) -> &mut Self {
        self.columns.push((name.into(), cm));
        self
    }

    pub fn columns(&self) -> &[(String, ConfusionMatrix)] {
        &self.columns
    }

    fn cells(&self) -> Result<Vec<Vec<String>>, EvalError> {
        if self.columns.is_empty() {
            return Err(EvalError::Argument("report needs at least one model".into()));
        }
        let mut rows = Vec::with_capacity(NUM_CLASSES + 2);
        let mut head = vec!["class".to_string()];
        head.extend(self.columns.iter().map(|(n, _)| n.clone()));
        rows.push(head);
        let accs: Vec<_> = self.columns.iter().map(|(_, cm)| cm.class_accuracy()).collect();
        for c in 0..NUM_CLASSES {
            let mut row = vec![SceneClass::new(c).unwrap().label().to_string()];
            row.extend(accs.iter().map(|a| pct(a[c])));
            rows.push(row);
        }
        let mut avg = vec!["average".to_string()];
        for (_, cm) in &self.columns {
            avg.push(pct(Some(cm.macro_accuracy()?)));
        }
        rows.push(avg);
        Ok(rows)
    }

    /// Percent accuracies with one decimal, class names left-aligned.
    pub fn to_text(&self) -> Result<String, EvalError> {
        let rows = self.cells()?;
        let widths: Vec<usize> =
            (0..rows[0].len()).map(|j| rows.iter().map(|r| r[j].len()).max().unwrap()).collect();
        let mut s = String::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if j == 0 {
                    s.push_str(&format!("{cell:<w$}", w = widths[0]));
                } else {
                    s.push_str(&format!("  {cell:>w$}", w = widths[j]));
                }
            }
            s.push('\n');
            if i == 0 || i == NUM_CLASSES {
                s.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                s.push('\n');
            }
        }
        Ok(s)
    }

    pub fn to_csv(&self) -> Result<String, EvalError> {
        Ok(self.cells()?.iter().map(|r| r.join(",") + "\n").collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(correct_every: usize) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::new();
        for c in 0..NUM_CLASSES {
            for i in 0..10 {
                cm.add(c, if i % correct_every == 0 { c } else { (c + 1) % NUM_CLASSES });
            }
        }
        cm
    }

    #[test]
    fn single_model_has_two_columns() {
        let mut r = Report::new();
        r.add("m", cm(1));
        let csv = r.to_csv().unwrap();
        assert!(csv.lines().all(|l| l.split(',').count() == 2));
        assert_eq!(csv.lines().count(), NUM_CLASSES + 2);
        assert!(csv.contains("beach,100.0"));
        assert!(csv.trim_end().ends_with("average,100.0"));
    }

    #[test]
    fn average_row_matches_macro() {
        let mut r = Report::new();
        r.add("half", cm(2)).add("third", cm(3));
        let text = r.to_text().unwrap();
        let last = text.lines().last().unwrap();
        assert!(last.starts_with("average"));
        assert!(last.contains("50.0") && last.contains("40.0"), "{last}");
        for line in text.lines().skip(2).take(NUM_CLASSES) {
            assert!(line.ends_with("40.0"));
        }
        assert!(Report::new().to_text().is_err());
    }
}
