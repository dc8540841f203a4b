use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse plans for one axis length, applied along every axis of a
/// C-ordered `n^dim` array.
#[derive(Clone)]
pub(crate) struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Plans {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Plans({})", self.forward.len())
    }
}

impl Plans {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Plans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn transform(&self, data: &mut [Complex64], dim: usize, inverse: bool) {
        let plan = if inverse { &self.inverse } else { &self.forward };
        let n = plan.len();
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        // last axis is contiguous
        plan.process_with_scratch(data, &mut scratch);
        let mut line = vec![Complex64::default(); n];
        for axis in 0..dim - 1 {
            let stride = n.pow((dim - 1 - axis) as u32);
            let block = stride * n;
            for base in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    let start = base + offset;
                    for (k, v) in line.iter_mut().enumerate() {
                        *v = data[start + k * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (k, v) in line.iter().enumerate() {
                        data[start + k * stride] = *v;
                    }
                }
            }
        }
        if inverse {
            let scale = 1.0 / data.len() as f64;
            for v in data.iter_mut() {
                *v *= scale;
            }
        }
    }
}
