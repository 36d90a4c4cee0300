#![allow(dead_code)]

use proptest::prelude::*;

use ppde_core::path::{SampledPath, TimedPath};

/// Scalar piecewise-linear paths on `[0, horizon]` with 2 to 8 knots and values in `[-2, 2]`.
pub fn path(horizon: f64) -> impl Strategy<Value = SampledPath> {
    (1usize..8)
        .prop_flat_map(|k| (prop::collection::vec(0.05f64..1.0, k), prop::collection::vec(-2.0f64..2.0, k + 1)))
        .prop_map(move |(steps, values)| {
            let total: f64 = steps.iter().sum();
            let mut grid = vec![0.0];
            let mut acc = 0.0;
            for s in &steps {
                acc += s;
                grid.push(horizon * acc / total);
            }
            *grid.last_mut().unwrap() = horizon;
            SampledPath::scalar(grid, values).unwrap()
        })
}

pub fn timed(horizon: f64) -> impl Strategy<Value = TimedPath> {
    (path(horizon), 0.0f64..=1.0).prop_map(move |(p, u)| TimedPath::new(u * horizon, p).unwrap())
}

pub fn start(x: f64) -> TimedPath {
    TimedPath::new(0.0, SampledPath::scalar(vec![0.0], vec![x]).unwrap()).unwrap()
}
