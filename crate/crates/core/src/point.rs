use crate::Scalar;
use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// A point (or vector) of the plane. One-dimensional problems live on the `y = 0` line.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn on_line(x: T) -> Self {
        Self { x, y: T::zero() }
    }

    #[inline]
    pub fn zero() -> Self {
        Self { x: T::zero(), y: T::zero() }
    }

    #[inline]
    pub fn from_angle(theta: T) -> Self {
        Self { x: theta.cos(), y: theta.sin() }
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn dist(self, o: Self) -> T {
        (self - o).norm()
    }

    #[inline]
    pub fn angle(self) -> T {
        self.y.atan2(self.x)
    }

    /// Unit vector in the same direction, `None` for the zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() && n.is_finite() {
            Some(self * (T::one() / n))
        } else {
            None
        }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn coords(self, dim: usize) -> Vec<T> {
        if dim == 1 {
            vec![self.x]
        } else {
            vec![self.x, self.y]
        }
    }

    pub fn from_coords(c: &[T]) -> Self {
        match c {
            [x] => Self::on_line(*x),
            [x, y, ..] => Self::new(*x, *y),
            [] => Self::zero(),
        }
    }

    /// Lexicographic comparison, used for deterministic tie-breaking.
    pub fn lex_lt(self, o: Self) -> bool {
        self.x < o.x || (self.x == o.x && self.y < o.y)
    }

    pub fn cast<U: Scalar>(self) -> Point<U> {
        Point { x: U::lit(self.x.as_f64()), y: U::lit(self.y.as_f64()) }
    }
}

impl<T: Scalar> Add for Point<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self { x: self.x + o.x, y: self.y + o.y }
    }
}

impl<T: Scalar> AddAssign for Point<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.x = self.x + o.x;
        self.y = self.y + o.y;
    }
}

impl<T: Scalar> Sub for Point<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self { x: self.x - o.x, y: self.y - o.y }
    }
}

impl<T: Scalar> Mul<T> for Point<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self { x: self.x * s, y: self.y * s }
    }
}

impl<T: Scalar> Neg for Point<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self { x: -self.x, y: -self.y }
    }
}
