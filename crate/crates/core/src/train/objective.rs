use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::margin::empirical_risk;
use crate::weights::WeightMatrix;

fn mean_hinge(w: &WeightMatrix, data: &Dataset) -> Result<f64> {
    Ok(empirical_risk(w, data, 1.0, None)?.empirical_hinge)
}

/// `(λ/2)‖W‖²_F + mean hinge loss` with exact margins.
pub fn objective_l2(w: &WeightMatrix, data: &Dataset, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let sq: f64 = w.fresh_row_sq_norms().iter().sum::<f64>() * w.scale() * w.scale();
    Ok(0.5 * lambda * sq + mean_hinge(w, data)?)
}

/// `(λ/2)‖W‖₁ + mean hinge loss` with exact margins.
pub fn objective_l1(w: &WeightMatrix, data: &Dataset, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(0.5 * lambda * w.l1_norm() + mean_hinge(w, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Example;
    use crate::sparse::SparseVector;

    fn ex(label: usize, x: [f64; 2]) -> Example {
        Example {
            label,
            features: SparseVector::from_dense(&x),
        }
    }

    fn toy() -> Dataset {
        Dataset::new(
            vec![
                ex(0, [1.0, 0.0]),
                ex(1, [1.0, 0.0]),
                ex(1, [0.0, 1.0]),
                ex(2, [0.0, 1.0]),
            ],
            2,
            3,
        )
        .unwrap()
    }

    fn hand_w() -> WeightMatrix {
        WeightMatrix::from_rows(
            2,
            vec![
                SparseVector::from_dense(&[1.0, 0.0]),
                SparseVector::from_dense(&[0.0, 1.0]),
                SparseVector::from_dense(&[0.5, 0.5]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_model() {
        let z = WeightMatrix::zeros(3, 2);
        assert_eq!(objective_l2(&z, &toy(), 1.0).unwrap(), 1.0);
        assert_eq!(objective_l1(&z, &toy(), 1.0).unwrap(), 1.0);
        assert!(objective_l2(&z, &Dataset::new(vec![], 2, 3).unwrap(), 1.0).is_err());
    }

    #[test]
    fn hand_values() {
        // margins 0.5, -1, 0.5, -0.5 -> hinge mean 4.5/4; ‖W‖²_F = 2.5, ‖W‖₁ = 3
        let hinge = 4.5 / 4.0;
        let l2 = objective_l2(&hand_w(), &toy(), 0.1).unwrap();
        assert!((l2 - (0.05 * 2.5 + hinge)).abs() < 1e-15);
        let l1 = objective_l1(&hand_w(), &toy(), 0.1).unwrap();
        assert!((l1 - (0.05 * 3.0 + hinge)).abs() < 1e-15);
    }

    #[test]
    fn l1_single_row() {
        let w = WeightMatrix::from_rows(
            2,
            vec![
                SparseVector::from_dense(&[2.0, -3.0]),
                SparseVector::zeros(2),
            ],
        )
        .unwrap();
        let data = Dataset::new(vec![ex(0, [1.0, 0.0])], 2, 2).unwrap();
        // margin 2 -> zero hinge
        assert_eq!(objective_l1(&w, &data, 0.4).unwrap(), 0.2 * 5.0);
    }
}
