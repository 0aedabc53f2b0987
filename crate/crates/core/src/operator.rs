//! Linear operators on 2-D grids.
//!
//! The solver only needs `apply` and `adjoint`; the Radon-domain model
//! implements this trait, and the small operators here stand in for it
//! when a problem must be solvable by hand.

use ndarray::{Array2, ArrayView2};

use crate::scalar::Real;

pub trait LinearOperator<T: Real> {
    /// Shape of the operator's domain (rows, cols).
    fn input_dim(&self) -> (usize, usize);

    /// Shape of the operator's range (rows, cols).
    fn output_dim(&self) -> (usize, usize);

    /// `A x`. `x` must have shape [`Self::input_dim`].
    fn apply(&self, x: ArrayView2<T>) -> Array2<T>;

    /// `Aᵀ y`. `y` must have shape [`Self::output_dim`].
    fn adjoint(&self, y: ArrayView2<T>) -> Array2<T>;
}

/// `I` on a fixed grid shape.
#[derive(Debug, Clone, Copy)]
pub struct Identity {
    pub dim: (usize, usize),
}

impl<T: Real> LinearOperator<T> for Identity {
    fn input_dim(&self) -> (usize, usize) {
        self.dim
    }

    fn output_dim(&self) -> (usize, usize) {
        self.dim
    }

    fn apply(&self, x: ArrayView2<T>) -> Array2<T> {
        x.to_owned()
    }

    fn adjoint(&self, y: ArrayView2<T>) -> Array2<T> {
        y.to_owned()
    }
}

/// Elementwise scaling by a fixed weight grid.
#[derive(Debug, Clone)]
pub struct Diagonal<T> {
    pub weights: Array2<T>,
}

impl<T: Real> LinearOperator<T> for Diagonal<T> {
    fn input_dim(&self) -> (usize, usize) {
        self.weights.dim()
    }

    fn output_dim(&self) -> (usize, usize) {
        self.weights.dim()
    }

    fn apply(&self, x: ArrayView2<T>) -> Array2<T> {
        &x * &self.weights
    }

    fn adjoint(&self, y: ArrayView2<T>) -> Array2<T> {
        &y * &self.weights
    }
}

/// Dense matrix acting on row-major flattened grids.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    matrix: Array2<T>,
    input_dim: (usize, usize),
    output_dim: (usize, usize),
}

impl<T: Real> Dense<T> {
    /// Panics if `matrix` is not `(out.0 * out.1) x (inp.0 * inp.1)`.
    pub fn new(matrix: Array2<T>, input_dim: (usize, usize), output_dim: (usize, usize)) -> Self {
        assert_eq!(
            matrix.dim(),
            (output_dim.0 * output_dim.1, input_dim.0 * input_dim.1),
            "matrix shape does not match the grid shapes"
        );
        Dense {
            matrix,
            input_dim,
            output_dim,
        }
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.matrix
    }
}

impl<T: Real> LinearOperator<T> for Dense<T> {
    fn input_dim(&self) -> (usize, usize) {
        self.input_dim
    }

    fn output_dim(&self) -> (usize, usize) {
        self.output_dim
    }

    fn apply(&self, x: ArrayView2<T>) -> Array2<T> {
        let flat: Vec<T> = x.iter().copied().collect();
        let v = ndarray::Array1::from(flat);
        self.matrix
            .dot(&v)
            .into_shape_with_order(self.output_dim)
            .expect("output length matches")
    }

    fn adjoint(&self, y: ArrayView2<T>) -> Array2<T> {
        let flat: Vec<T> = y.iter().copied().collect();
        let v = ndarray::Array1::from(flat);
        self.matrix
            .t()
            .dot(&v)
            .into_shape_with_order(self.input_dim)
            .expect("input length matches")
    }
}

/// Frobenius inner product.
pub fn inner<T: Real>(a: ArrayView2<T>, b: ArrayView2<T>) -> T {
    a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
}

/// Frobenius norm.
pub fn norm<T: Real>(a: ArrayView2<T>) -> T {
    a.iter().map(|&x| x * x).sum::<T>().sqrt()
}
