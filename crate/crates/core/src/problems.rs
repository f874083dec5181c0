//! Benchmark flows with closed-form data.

use std::f64::consts::PI;

use nalgebra::Matrix2;

use crate::mesh::{Rect, Vec2};
use crate::solver::{Potential, Problem};

/// Kovasznay flow behind a periodic array of cylinders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kovasznay {
    pub nu: f64,
}

impl Default for Kovasznay {
    fn default() -> Self {
        Kovasznay { nu: 0.025 }
    }
}

impl Kovasznay {
    pub fn domain(&self) -> Rect {
        Rect::new(-0.5, 0.0, 1.5, 2.0)
    }

    /// Decay rate of the exponential factor.
    pub fn rate(&self) -> f64 {
        let re = 1.0 / self.nu;
        re / 2.0 - (re * re / 4.0 + 4.0 * PI * PI).sqrt()
    }

    pub fn velocity(&self, p: &Vec2) -> Vec2 {
        let l = self.rate();
        let e = (l * p.x).exp();
        let (s, c) = (2.0 * PI * p.y).sin_cos();
        Vec2::new(1.0 - e * c, l / (2.0 * PI) * e * s)
    }

    /// Velocity gradient, entry `(a, b)` is `d u_a / d x_b`.
    pub fn gradient(&self, p: &Vec2) -> Matrix2<f64> {
        let l = self.rate();
        let e = (l * p.x).exp();
        let (s, c) = (2.0 * PI * p.y).sin_cos();
        Matrix2::new(-l * e * c, 2.0 * PI * e * s, l * l / (2.0 * PI) * e * s, l * e * c)
    }

    /// Bernoulli pressure `p + |u|^2 / 2`, up to a constant.
    pub fn pressure(&self, p: &Vec2) -> f64 {
        -0.5 * (2.0 * self.rate() * p.x).exp() + 0.5 * self.velocity(p).norm_squared()
    }

    pub fn problem(&self) -> Problem {
        let me = *self;
        Problem::new(self.nu, |_| Vec2::zeros(), move |p| me.velocity(p))
    }
}

/// Rigid rotation driven by the irrotational force `lambda grad(x^3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    pub lambda: f64,
}

impl Rotation {
    pub const NU: f64 = 1.0;

    pub fn domain(&self) -> Rect {
        Rect::unit()
    }

    pub fn velocity(p: &Vec2) -> Vec2 {
        Vec2::new(-p.y, p.x)
    }

    /// Bernoulli pressure, up to a constant.
    pub fn pressure(&self, p: &Vec2) -> f64 {
        self.lambda * p.x.powi(3) + p.x * p.x + p.y * p.y
    }

    pub fn force(&self, p: &Vec2) -> Vec2 {
        self.lambda * Potential::CubeX.gradient(p)
    }

    pub fn problem(&self) -> Problem {
        let me = *self;
        Problem::new(Self::NU, move |p| me.force(p), Self::velocity)
    }
}

/// Lid-driven cavity on the unit square with optional force `lambda grad psi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cavity {
    pub reynolds: f64,
    pub lambda: f64,
    pub psi: Potential,
}

impl Cavity {
    pub fn new(reynolds: f64, lambda: f64) -> Self {
        Cavity { reynolds, lambda, psi: Potential::Cubic }
    }

    pub fn domain(&self) -> Rect {
        Rect::unit()
    }

    pub fn lid(p: &Vec2) -> Vec2 {
        if p.y > 1.0 - 1e-12 {
            Vec2::new(1.0, 0.0)
        } else {
            Vec2::zeros()
        }
    }

    pub fn problem(&self) -> Problem {
        let me = *self;
        Problem::new(1.0 / self.reynolds, move |p| me.lambda * me.psi.gradient(p), Self::lid)
    }
}
