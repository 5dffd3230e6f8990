//! FFT plumbing for nodal trajectories: differentiation of the trigonometric
//! interpolant, the Riesz map of the discrete H¹ product, Fourier shifts.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::Vec3;

pub(crate) struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Arc<Spectral>>> = RefCell::new(HashMap::new());
}

pub(crate) fn plan(n: usize) -> Arc<Spectral> {
    PLANS.with(|plans| {
        plans
            .borrow_mut()
            .entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                Arc::new(Spectral {
                    n,
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                })
            })
            .clone()
    })
}

pub(crate) type Coefficients = [Vec<Complex64>; 3];

impl Spectral {
    /// Signed wavenumber of FFT bin `idx`; `None` for the Nyquist bin.
    pub fn wavenumber(&self, idx: usize) -> Option<f64> {
        let n = self.n;
        if n % 2 == 0 && idx == n / 2 {
            None
        } else if idx <= n / 2 {
            Some(idx as f64)
        } else {
            Some(idx as f64 - n as f64)
        }
    }

    /// `c_k = (1/N) Σ_j q_j e^{-i k t_j}` per component.
    pub fn forward(&self, nodes: &[Vec3]) -> Coefficients {
        let scale = 1.0 / self.n as f64;
        std::array::from_fn(|c| {
            let mut buf: Vec<Complex64> =
                nodes.iter().map(|p| Complex64::new(p[c] * scale, 0.0)).collect();
            self.forward.process(&mut buf);
            buf
        })
    }

    /// Inverse of [`Spectral::forward`]; imaginary parts are dropped.
    pub fn inverse(&self, mut coeffs: Coefficients) -> Vec<Vec3> {
        for buf in coeffs.iter_mut() {
            self.inverse.process(buf);
        }
        (0..self.n).map(|j| Vec3::new(coeffs[0][j].re, coeffs[1][j].re, coeffs[2][j].re)).collect()
    }

    fn map_modes(&self, nodes: &[Vec3], f: impl Fn(Option<f64>) -> Complex64) -> Vec<Vec3> {
        let mut coeffs = self.forward(nodes);
        for buf in coeffs.iter_mut() {
            for (idx, c) in buf.iter_mut().enumerate() {
                *c *= f(self.wavenumber(idx));
            }
        }
        self.inverse(coeffs)
    }

    /// Nodal derivative of the trigonometric interpolant. The Nyquist mode
    /// has no real derivative on the grid and maps to zero.
    pub fn derivative(&self, nodes: &[Vec3]) -> Vec<Vec3> {
        self.map_modes(nodes, |k| match k {
            Some(k) => Complex64::new(0.0, k),
            None => Complex64::new(0.0, 0.0),
        })
    }

    /// Solve `G x = g` for the Gram matrix of the discrete H¹ product
    /// `h Σ (x·y + Dx·Dy)`; the Nyquist component is discarded.
    pub fn riesz(&self, g: &[Vec3], h: f64) -> Vec<Vec3> {
        self.map_modes(g, |k| match k {
            Some(k) => Complex64::new(1.0 / (h * (1.0 + k * k)), 0.0),
            None => Complex64::new(0.0, 0.0),
        })
    }

    /// `q(t + theta)` of the trigonometric interpolant. The Nyquist term
    /// `cos(N t / 2)` is advanced as `cos(N (t + θ) / 2)` sampled on the grid,
    /// which keeps the result real.
    pub fn shift(&self, nodes: &[Vec3], theta: f64) -> Vec<Vec3> {
        let nyq = (0.5 * self.n as f64 * theta).cos();
        self.map_modes(nodes, |k| match k {
            Some(k) => Complex64::from_polar(1.0, k * theta),
            None => Complex64::new(nyq, 0.0),
        })
    }
}

/// Component of `nodes` along the Nyquist sawtooth `(-1)^j`; zero for odd `N`.
pub(crate) fn nyquist_component(nodes: &[Vec3]) -> Vec3 {
    if nodes.len() % 2 == 1 {
        return Vec3::zeros();
    }
    let sum = nodes
        .iter()
        .enumerate()
        .fold(Vec3::zeros(), |acc, (j, p)| if j % 2 == 0 { acc + p } else { acc - p });
    sum / nodes.len() as f64
}

pub(crate) fn remove_nyquist(nodes: &mut [Vec3]) {
    let c = nyquist_component(nodes);
    if c == Vec3::zeros() {
        return;
    }
    for (j, p) in nodes.iter_mut().enumerate() {
        if j % 2 == 0 {
            *p -= c;
        } else {
            *p += c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::PERIOD;

    fn sample(n: usize, f: impl Fn(f64) -> Vec3) -> Vec<Vec3> {
        (0..n).map(|j| f(PERIOD * j as f64 / n as f64)).collect()
    }

    #[test]
    fn derivative_of_trig_polynomial() {
        for n in [16usize, 17, 64] {
            let sp = plan(n);
            let q = sample(n, |t| Vec3::new((3.0 * t).sin(), t.cos() + 0.5, (2.0 * t).cos()));
            let dq = sp.derivative(&q);
            let exact = sample(n, |t| Vec3::new(3.0 * (3.0 * t).cos(), -t.sin(), -2.0 * (2.0 * t).sin()));
            for (a, b) in dq.iter().zip(&exact) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn riesz_inverts_gram() {
        let n = 32;
        let sp = plan(n);
        let h = PERIOD / n as f64;
        let mut g = sample(n, |t| Vec3::new(t.sin() + 0.2, (5.0 * t).cos(), 0.3 * (2.0 * t).sin()));
        remove_nyquist(&mut g);
        let x = sp.riesz(&g, h);
        let dx = sp.derivative(&x);
        let ddx = sp.derivative(&dx);
        // G x = h (x - x'')
        for j in 0..n {
            let gx = (x[j] - ddx[j]) * h;
            assert!((gx - g[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn grid_shift_is_rotation() {
        let n = 16;
        let sp = plan(n);
        let q: Vec<Vec3> = (0..n).map(|j| Vec3::new(j as f64, (j * j) as f64, 1.0)).collect();
        let h = PERIOD / n as f64;
        let s = sp.shift(&q, 3.0 * h);
        for j in 0..n {
            assert!((s[j] - q[(j + 3) % n]).norm() < 1e-10);
        }
    }

    #[test]
    fn nyquist_removal() {
        let mut q: Vec<Vec3> = (0..8).map(|j| Vec3::new(if j % 2 == 0 { 1.0 } else { -1.0 }, 2.0, 0.0)).collect();
        remove_nyquist(&mut q);
        for p in &q {
            assert!((p - Vec3::new(0.0, 2.0, 0.0)).norm() < 1e-15);
        }
    }
}
