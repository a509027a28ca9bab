//! Optional grayscale rasterization. Not used for training by default.

use super::config::PIXEL_SIZE;
use super::{Cell, DeepSeaTreasure, Environment, Minecart, Step};
use crate::error::Result;

/// Rasterizes the current state to a `size x size` grayscale frame in [0, 1],
/// row-major with row 0 at the top.
pub trait Render {
    fn render(&self, size: usize) -> Vec<f64>;
}

impl Render for Minecart {
    fn render(&self, size: usize) -> Vec<f64> {
        let cfg = self.config();
        let st = self.state();
        let mut frame = vec![0.0; size * size];
        let px = 1.0 / size as f64;
        for row in 0..size {
            for col in 0..size {
                // pixel centre; y grows downwards on screen, upwards in the world
                let x = (col as f64 + 0.5) * px;
                let y = 1.0 - (row as f64 + 0.5) * px;
                let mut v = 0.0;
                if x.hypot(y) <= cfg.base_radius {
                    v = 0.3;
                }
                for m in &cfg.mines {
                    if (x - m.position[0]).hypot(y - m.position[1]) <= cfg.mine_radius {
                        v = 0.6;
                    }
                }
                if (x - st.position[0]).hypot(y - st.position[1]) <= 0.04 {
                    v = 1.0;
                }
                frame[row * size + col] = v;
            }
        }
        // heading marker one cart-radius ahead
        let h = st.heading_deg.to_radians();
        let hx = st.position[0] + 0.06 * h.cos();
        let hy = st.position[1] + 0.06 * h.sin();
        if (0.0..1.0).contains(&hx) && (0.0..1.0).contains(&hy) {
            let col = (hx * size as f64) as usize;
            let row = ((1.0 - hy) * size as f64).min(size as f64 - 1.0) as usize;
            frame[row * size + col] = 0.9;
        }
        // one content bar per ore along the right edge, full height = capacity
        for (k, c) in st.content.iter().enumerate() {
            let col = size - 1 - k;
            let height = ((c / cfg.capacity) * size as f64).round() as usize;
            for row in size - height.min(size)..size {
                frame[row * size + col] = 0.8;
            }
        }
        frame
    }
}

impl Render for DeepSeaTreasure {
    fn render(&self, size: usize) -> Vec<f64> {
        let map = self.map();
        let max_treasure = map
            .treasures()
            .iter()
            .map(|(_, v)| v.abs())
            .fold(f64::MIN_POSITIVE, f64::max);
        let pos = self.state().position;
        let mut frame = vec![0.0; size * size];
        for row in 0..size {
            for col in 0..size {
                let r = row * map.rows() / size;
                let c = col * map.cols() / size;
                frame[row * size + col] = if (r, c) == pos {
                    1.0
                } else {
                    match map.cell((r, c)) {
                        Cell::Ocean => 0.2,
                        Cell::SeaBottom => 0.0,
                        Cell::Treasure(v) => 0.4 + 0.5 * v.abs() / max_treasure,
                    }
                };
            }
        }
        frame
    }
}

/// Replaces the inner observation with the previous and current 48x48 frames.
#[derive(Clone, Debug)]
pub struct PixelObservation<E> {
    inner: E,
    previous: Vec<f64>,
}

impl<E: Environment + Render> PixelObservation<E> {
    pub fn new(inner: E) -> Self {
        let previous = inner.render(PIXEL_SIZE);
        PixelObservation { inner, previous }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Environment + Render> Environment for PixelObservation<E> {
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn num_objectives(&self) -> usize {
        self.inner.num_objectives()
    }

    fn observation_len(&self) -> usize {
        2 * PIXEL_SIZE * PIXEL_SIZE
    }

    fn reset(&mut self) -> Vec<f64> {
        self.inner.reset();
        self.previous = self.inner.render(PIXEL_SIZE);
        self.observation()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        self.previous = self.inner.render(PIXEL_SIZE);
        let mut step = self.inner.step(action)?;
        step.observation = self.observation();
        Ok(step)
    }

    fn observation(&self) -> Vec<f64> {
        let mut obs = self.previous.clone();
        obs.extend(self.inner.render(PIXEL_SIZE));
        obs
    }
}
