//! Top-1 accuracy, row-normalized confusion matrices, and the room-to-type
//! prediction collapse.

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};

/// Fraction of exact matches.
pub fn top1_accuracy(predictions: &[u32], labels: &[u32]) -> Result<f64> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return Err(Error::Validation(format!(
            "prediction/label length mismatch: {} vs {}",
            predictions.len(),
            labels.len()
        )));
    }
    let hits = predictions.iter().zip(labels.iter()).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Row-normalized confusion matrix; rows without support stay zero and are
/// flagged through `support`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    /// Row-major `classes x classes`, each supported row summing to 1.
    pub rows: Vec<f64>,
    pub support: Vec<usize>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn at(&self, truth: usize, pred: usize) -> f64 {
        self.rows[truth * self.classes + pred]
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        (0..self.classes).all(|i| {
            (0..self.classes).all(|j| {
                let expect = if i == j { 1.0 } else { 0.0 };
                self.support[i] == 0 || (self.at(i, j) - expect).abs() <= tol
            })
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("truth\\pred");
        for name in &self.class_names {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for i in 0..self.classes {
            s.push_str(&self.class_names[i]);
            for j in 0..self.classes {
                s.push_str(&format!(",{:.6}", self.at(i, j)));
            }
            s.push('\n');
        }
        s
    }
}

pub fn confusion(predictions: &[u32], labels: &[u32], classes: usize, class_names: Vec<String>) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return Err(Error::Validation("prediction/label length mismatch".into()));
    }
    if class_names.len() != classes {
        return Err(Error::Validation("class name count mismatch".into()));
    }
    let mut counts = vec![0usize; classes * classes];
    let mut support = vec![0usize; classes];
    for (&p, &l) in predictions.iter().zip(labels.iter()) {
        if p as usize >= classes || l as usize >= classes {
            return Err(Error::Validation(format!(
                "id out of range: prediction {p}, label {l}, classes {classes}"
            )));
        }
        counts[l as usize * classes + p as usize] += 1;
        support[l as usize] += 1;
    }
    let mut rows = vec![0.0f64; classes * classes];
    for i in 0..classes {
        if support[i] > 0 {
            for j in 0..classes {
                rows[i * classes + j] = counts[i * classes + j] as f64 / support[i] as f64;
            }
        }
    }
    Ok(ConfusionMatrix { classes, rows, support, class_names })
}

/// Map room-class predictions onto the three room types via the catalog.
pub fn collapse_to_types(predictions: &[u32], catalog: &Catalog) -> Result<Vec<u32>> {
    predictions
        .iter()
        .map(|&p| catalog.room_type_of(p).map(|t| t.index() as u32))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{enumerate_rooms, TypeGrids};

    #[test]
    fn accuracy_extremes() {
        assert_eq!(top1_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(top1_accuracy(&[0, 0, 0], &[1, 2, 3]).unwrap(), 0.0);
        assert!(top1_accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn perfect_confusion_is_identity() {
        let labels = [0u32, 1, 2, 1, 0];
        let names = vec!["a".into(), "b".into(), "c".into()];
        let m = confusion(&labels, &labels, 3, names).unwrap();
        assert!(m.is_identity(0.0));
        for i in 0..3 {
            let sum: f64 = (0..3).map(|j| m.at(i, j)).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn single_class_input_populates_one_row() {
        let m = confusion(&[1, 1, 0], &[1, 1, 1], 3, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        assert_eq!(m.support, vec![0, 3, 0]);
        assert!((m.at(1, 1) - 2.0 / 3.0).abs() < 1e-9);
        assert!((m.at(1, 0) - 1.0 / 3.0).abs() < 1e-9);
        // unsupported rows are flagged, not normalized
        assert_eq!(m.at(0, 0), 0.0);
    }

    #[test]
    fn out_of_range_prediction_rejected() {
        assert!(confusion(&[5], &[0], 3, vec!["a".into(), "b".into(), "c".into()]).is_err());
    }

    #[test]
    fn collapse_maps_rooms_to_types() {
        let catalog = enumerate_rooms(&TypeGrids::reference()).unwrap();
        let m = catalog.len() as u32;
        let collapsed = collapse_to_types(&[0, m - 1], &catalog).unwrap();
        assert_eq!(collapsed, vec![0, 2]); // first room Small, last room Hall
        assert!(collapse_to_types(&[m], &catalog).is_err());
    }

    #[test]
    fn collapsed_accuracy_never_below_fine() {
        let catalog = enumerate_rooms(&TypeGrids::reference()).unwrap();
        let labels: Vec<u32> = (0..catalog.len() as u32).collect();
        let mut preds = labels.clone();
        preds[0] = 1; // wrong room, same type
        let fine = top1_accuracy(&preds, &labels).unwrap();
        let coarse = top1_accuracy(
            &collapse_to_types(&preds, &catalog).unwrap(),
            &collapse_to_types(&labels, &catalog).unwrap(),
        )
        .unwrap();
        assert!(coarse >= fine);
    }
}
