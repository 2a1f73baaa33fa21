//! Small numerical helpers.

/// Compensated (Neumaier) summation in iteration order.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = NeumaierSum::default();
    for v in values {
        acc.add(v);
    }
    acc.total()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancelled_terms() {
        assert_eq!(neumaier_sum([1.0, 1e100, 1.0, -1e100]), 2.0);
        assert_eq!(neumaier_sum(std::iter::repeat_n(0.1, 10)), 1.0);
        assert_eq!(neumaier_sum(Vec::<f64>::new()), 0.0);
    }
}
