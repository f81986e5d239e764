use crate::dsl::OdeModel;
use crate::error::FitError;

/// Observations `Y_ij` of `d` states at `n` times.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    times: Vec<f64>,
    // row-major n x d
    obs: Vec<f64>,
    names: Vec<String>,
}

impl Dataset {
    /// Build from row-major observations. `obs.len()` must be `times.len() * names.len()`.
    pub fn new(times: Vec<f64>, obs: Vec<f64>, names: Vec<String>) -> Result<Self, FitError> {
        let n = times.len();
        let d = names.len();
        if d == 0 {
            return Err(FitError::InvalidInput("dataset has no observed columns".into()));
        }
        if obs.len() != n * d {
            return Err(FitError::Dimension(format!(
                "{} observations for {n} times and {d} columns",
                obs.len()
            )));
        }
        if n < 2 {
            return Err(FitError::InvalidInput(format!(
                "need at least 2 observation times, got {n}"
            )));
        }
        if times.iter().chain(&obs).any(|v| !v.is_finite()) {
            return Err(FitError::InvalidInput("dataset contains non-finite values".into()));
        }
        if times[0] < 0.0 {
            return Err(FitError::InvalidInput("observation times must be non-negative".into()));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] < w[0]) {
            return Err(FitError::InvalidInput(format!(
                "observation times must be ascending ({} follows {})",
                w[1], w[0]
            )));
        }
        Ok(Dataset { times, obs, names })
    }

    /// Build from one vector per column.
    pub fn from_columns(
        times: Vec<f64>,
        columns: Vec<Vec<f64>>,
        names: Vec<String>,
    ) -> Result<Self, FitError> {
        if columns.len() != names.len() {
            return Err(FitError::Dimension(format!(
                "{} columns but {} names",
                columns.len(),
                names.len()
            )));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != times.len()) {
            return Err(FitError::Dimension(format!(
                "column of length {} for {} times",
                c.len(),
                times.len()
            )));
        }
        let n = times.len();
        let mut obs = Vec::with_capacity(n * columns.len());
        for i in 0..n {
            for c in &columns {
                obs.push(c[i]);
            }
        }
        Dataset::new(times, obs, names)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.obs[i * self.names.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.names.len();
        &self.obs[i * d..(i + 1) * d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i, j)).collect()
    }

    /// Columns reordered to match `model`'s states, matched by name.
    pub fn for_model(&self, model: &OdeModel) -> Result<Dataset, FitError> {
        let mut idx = Vec::with_capacity(model.dim());
        for s in model.state_names() {
            match self.names.iter().position(|c| c == s) {
                Some(k) => idx.push(k),
                None => {
                    return Err(FitError::Dimension(format!(
                        "model `{}` has state `{s}` but the data columns are [{}]",
                        model.name(),
                        self.names.join(", ")
                    )))
                }
            }
        }
        let columns = idx.iter().map(|&k| self.column(k)).collect();
        Dataset::from_columns(self.times.clone(), columns, model.state_names().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_model;

    #[test]
    fn columns_are_matched_by_name() {
        let data = Dataset::from_columns(
            vec![0.0, 1.0],
            vec![vec![1.0, 2.0], vec![10.0, 20.0]],
            vec!["b".into(), "a".into()],
        )
        .unwrap();
        let m = parse_model("states: a, b\na' = 0\nb' = 0").unwrap();
        let d = data.for_model(&m).unwrap();
        assert_eq!(d.row(1), &[20.0, 2.0]);
        let m = parse_model("states: c\nc' = 0").unwrap();
        assert!(data.for_model(&m).is_err());
    }

    #[test]
    fn rejects_bad_data() {
        let names = vec!["x".to_string()];
        assert!(Dataset::new(vec![0.0], vec![1.0], names.clone()).is_err());
        assert!(Dataset::new(vec![1.0, 0.0], vec![1.0, 1.0], names.clone()).is_err());
        assert!(Dataset::new(vec![0.0, 1.0], vec![1.0, f64::NAN], names.clone()).is_err());
        assert!(Dataset::new(vec![0.0, 1.0], vec![1.0], names).is_err());
    }
}
