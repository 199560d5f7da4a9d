use crate::data::Dataset;

/// Per-dimension empirical CDFs fitted on training data.
///
/// Numerical dimensions map a value `v` to `#{x_n ≤ v} / N`; one-hot
/// dimensions pass `0` and `1` through unchanged.
#[derive(Clone, Debug)]
pub struct PercentileTable {
    columns: Vec<Option<Vec<f64>>>,
}

impl PercentileTable {
    pub fn fit(data: &Dataset) -> Self {
        let schema = data.schema();
        let columns = (0..data.dim())
            .map(|d| {
                if schema.is_categorical_dim(d) {
                    None
                } else {
                    let mut xs: Vec<f64> = data.column(d).collect();
                    xs.sort_by(f64::total_cmp);
                    Some(xs)
                }
            })
            .collect();
        PercentileTable { columns }
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn percentile(&self, d: usize, v: f64) -> f64 {
        match &self.columns[d] {
            None => v.clamp(0.0, 1.0),
            Some(xs) => xs.partition_point(|&x| x <= v) as f64 / xs.len() as f64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FeatureSchema;
    use proptest::prelude::*;

    fn table(xs: &[f64]) -> PercentileTable {
        let d = Dataset::new(
            FeatureSchema::numerical(1).unwrap(),
            xs.iter().map(|&x| vec![x]).collect(),
        )
        .unwrap();
        PercentileTable::fit(&d)
    }

    // rank/N reference computed by a plain count over the sample
    fn ecdf(xs: &[f64], v: f64) -> f64 {
        xs.iter().filter(|&&x| x <= v).count() as f64 / xs.len() as f64
    }

    #[test]
    fn midpoint_of_four() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ecdf(&xs, 2.5), 0.5);
        assert_eq!(table(&xs).percentile(0, 2.5), 0.5);
    }

    #[test]
    fn constant_column() {
        let t = table(&[5.0, 5.0, 5.0]);
        assert_eq!(t.percentile(0, 5.0), 1.0);
        assert_eq!(t.percentile(0, 4.0), 0.0);
    }

    proptest! {
        #[test]
        fn matches_counting_oracle(xs in prop::collection::vec(-100.0..100.0f64, 1..50), v in -120.0..120.0f64) {
            prop_assert_eq!(table(&xs).percentile(0, v), ecdf(&xs, v));
        }

        #[test]
        fn monotone(xs in prop::collection::vec(-10.0..10.0f64, 1..30), a in -12.0..12.0f64, b in -12.0..12.0f64) {
            let t = table(&xs);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(t.percentile(0, lo) <= t.percentile(0, hi));
        }

        #[test]
        fn extremes(mut xs in prop::collection::btree_set(-1000i32..1000, 1..40)) {
            let xs: Vec<f64> = std::mem::take(&mut xs).into_iter().map(f64::from).collect();
            let t = table(&xs);
            let n = xs.len() as f64;
            let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(t.percentile(0, min) <= 1.0 / n);
            prop_assert_eq!(t.percentile(0, max), 1.0);
        }
    }
}
