/// Piecewise-constant learning rate: `base / factor^k` where `k` counts the
/// cut epochs that are `≤ epoch`.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub base: f64,
    pub cuts: Vec<usize>,
    pub factor: f64,
}

impl Schedule {
    pub fn constant(base: f64) -> Self {
        Schedule {
            base,
            cuts: vec![],
            factor: 1.0,
        }
    }

    pub fn rate(&self, epoch: usize) -> f64 {
        let k = self.cuts.iter().filter(|&&c| c <= epoch).count();
        self.base / self.factor.powi(k as i32)
    }
}
