use ndarray::{Array1, ArrayView2, ArrayViewMut2};
use rand::Rng;

use super::param::{leaf, leaf_mut, Param, Parameterized};
use crate::Scalar;

/// Fully connected layer `y = W x + b`, weight shape (out, in).
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_features: usize,
    out_features: usize,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng + ?Sized>(
        in_features: usize,
        out_features: usize,
        init_std: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: Param::normal(&[out_features, in_features], init_std, rng),
            bias: Param::zeros(&[out_features]),
            in_features,
            out_features,
        }
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    fn weight_view(&self) -> ArrayView2<'_, T> {
        ArrayView2::from_shape((self.out_features, self.in_features), &self.weight.data)
            .expect("weight shape")
    }

    pub fn forward(&self, x: &Array1<T>) -> Array1<T> {
        assert_eq!(x.len(), self.in_features, "linear input features");
        let mut y = self.weight_view().dot(x);
        for (v, b) in y.iter_mut().zip(&self.bias.data) {
            *v += *b;
        }
        y
    }

    /// `input` is the forward input; returns d/d(input).
    pub fn backward(&self, input: &Array1<T>, grad_out: &Array1<T>, grads: &mut Self) -> Array1<T> {
        {
            let mut dw = ArrayViewMut2::from_shape(
                (self.out_features, self.in_features),
                &mut grads.weight.data,
            )
            .expect("weight grad shape");
            for (mut row, g) in dw.rows_mut().into_iter().zip(grad_out.iter()) {
                row.scaled_add(*g, input);
            }
        }
        for (db, g) in grads.bias.data.iter_mut().zip(grad_out.iter()) {
            *db += *g;
        }
        self.weight_view().t().dot(grad_out)
    }
}

impl<T: Scalar> Parameterized<T> for Linear<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        leaf(prefix, "weight", &self.weight, out);
        leaf(prefix, "bias", &self.bias, out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        leaf_mut(prefix, "weight", &mut self.weight, out);
        leaf_mut(prefix, "bias", &mut self.bias, out);
    }
}
