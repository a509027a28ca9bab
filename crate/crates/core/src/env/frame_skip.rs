use super::{Environment, Step};
use crate::error::{MorlError, Result};

/// Repeats every action `k` times, summing rewards undiscounted and stopping
/// early when the episode ends.
#[derive(Clone, Debug)]
pub struct FrameSkip<E> {
    inner: E,
    skip: usize,
}

impl<E: Environment> FrameSkip<E> {
    pub fn new(inner: E, skip: usize) -> Result<Self> {
        if skip == 0 {
            return Err(MorlError::InvalidArgument("frame skip must be >= 1".into()));
        }
        Ok(FrameSkip { inner, skip })
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut E {
        &mut self.inner
    }

    pub fn skip(&self) -> usize {
        self.skip
    }
}

impl<E: Environment> Environment for FrameSkip<E> {
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn num_objectives(&self) -> usize {
        self.inner.num_objectives()
    }

    fn observation_len(&self) -> usize {
        self.inner.observation_len()
    }

    fn reset(&mut self) -> Vec<f64> {
        self.inner.reset()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        let mut total = vec![0.0; self.inner.num_objectives()];
        let mut last = None;
        for _ in 0..self.skip {
            let step = self.inner.step(action)?;
            for (t, r) in total.iter_mut().zip(&step.reward) {
                *t += r;
            }
            let done = step.done();
            last = Some(step);
            if done {
                break;
            }
        }
        let mut step = last.expect("skip >= 1");
        step.reward = total;
        Ok(step)
    }

    fn observation(&self) -> Vec<f64> {
        self.inner.observation()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{DeepSeaTreasure, DstMap, Minecart, MinecartAction, MinecartConfig, ObservationMode};

    #[test]
    fn zero_skip_is_an_error() {
        let env = DeepSeaTreasure::new(DstMap::small_map(), ObservationMode::OneHot, 10);
        assert!(FrameSkip::new(env, 0).is_err());
    }

    #[test]
    fn skip_one_is_identity() {
        let mut plain = Minecart::new(MinecartConfig::default(), 4).unwrap();
        let mut wrapped = FrameSkip::new(Minecart::new(MinecartConfig::default(), 4).unwrap(), 1).unwrap();
        for a in [0, 0, 2, 4, 5, 1, 3, 0, 0, 0] {
            assert_eq!(plain.step(a).unwrap(), wrapped.step(a).unwrap());
        }
    }

    #[test]
    fn four_idle_frames_cost_four_idle_costs() {
        let mut cfg = MinecartConfig::default();
        cfg.start_position = [0.5, 0.5];
        let mut env = FrameSkip::new(Minecart::new(cfg, 0).unwrap(), 4).unwrap();
        env.reset();
        let st = env.step(MinecartAction::DoNothing as usize).unwrap();
        assert!((st.reward[2] - -0.02).abs() < 1e-15);
        assert_eq!(env.inner().state().step_count, 4);
    }

    #[test]
    fn terminal_short_circuits() {
        // treasure two cells below the start: the second inner step ends it
        let map = DstMap::parse("S\n.\nT7\n").unwrap();
        let mut env = FrameSkip::new(DeepSeaTreasure::new(map, ObservationMode::OneHot, 50), 4).unwrap();
        env.reset();
        let st = env.step(3).unwrap();
        assert!(st.terminal);
        assert_eq!(st.reward, vec![7.0, -2.0]);
        assert_eq!(env.inner().state().step_count, 2);
    }
}
