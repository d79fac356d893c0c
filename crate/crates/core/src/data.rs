/// One logged interaction: context and arm features, binary reward and the
/// time interval it was observed in.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedSample {
    pub context: Vec<f64>,
    pub arm: Vec<f64>,
    pub reward: f64,
    pub interval: i64,
}

impl LoggedSample {
    pub fn new(context: Vec<f64>, arm: Vec<f64>, reward: f64, interval: i64) -> Self {
        Self {
            context,
            arm,
            reward,
            interval,
        }
    }

    /// Embedding-model input: context followed by arm features.
    pub fn input(&self) -> Vec<f64> {
        joint_input(&self.context, &self.arm)
    }
}

pub fn joint_input(context: &[f64], arm: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(context.len() + arm.len());
    v.extend_from_slice(context);
    v.extend_from_slice(arm);
    v
}
