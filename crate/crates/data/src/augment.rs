//! Random flips of `(H, W, C)` images.

use fut_core::{Scalar, Tensor};
use rand::Rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Flips {
    pub horizontal: bool,
    pub vertical: bool,
}

impl Flips {
    /// Each axis flipped independently with probability 1/2.
    pub fn draw(rng: &mut impl Rng) -> Self {
        Flips {
            horizontal: rng.gen_bool(0.5),
            vertical: rng.gen_bool(0.5),
        }
    }

    pub fn apply<T: Scalar>(self, image: &Tensor<T>) -> Tensor<T> {
        let mut out = image.clone();
        if self.horizontal {
            out = flip_horizontal(&out);
        }
        if self.vertical {
            out = flip_vertical(&out);
        }
        out
    }
}

fn dims<T: Scalar>(image: &Tensor<T>) -> (usize, usize, usize) {
    match *image.dims() {
        [h, w, c] => (h, w, c),
        _ => panic!("flips expect an (H, W, C) image, got {}", image.shape()),
    }
}

/// Mirrors the width axis.
pub fn flip_horizontal<T: Scalar>(image: &Tensor<T>) -> Tensor<T> {
    let (h, w, c) = dims(image);
    let src = image.data();
    let mut data = Vec::with_capacity(src.len());
    for r in 0..h {
        for col in (0..w).rev() {
            let at = (r * w + col) * c;
            data.extend_from_slice(&src[at..at + c]);
        }
    }
    Tensor::new([h, w, c], data).expect("same shape")
}

/// Mirrors the height axis.
pub fn flip_vertical<T: Scalar>(image: &Tensor<T>) -> Tensor<T> {
    let (h, w, c) = dims(image);
    let row = w * c;
    let data: Vec<T> = image.data().chunks(row).rev().flatten().copied().collect();
    Tensor::new([h, w, c], data).expect("same shape")
}

/// Random flips when training, identity otherwise.
pub fn augment<T: Scalar>(image: &Tensor<T>, rng: &mut impl Rng, training: bool) -> Tensor<T> {
    if training {
        Flips::draw(rng).apply(image)
    } else {
        image.clone()
    }
}
