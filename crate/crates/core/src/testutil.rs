use rand::Rng;

use crate::prob::{Encoder, JointXYZ};

pub(crate) fn random_joint(rng: &mut impl Rng, dims: (usize, usize, usize)) -> JointXYZ {
    let n = dims.0 * dims.1 * dims.2;
    JointXYZ::new(dims, (0..n).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

pub(crate) fn random_encoder(rng: &mut impl Rng, nx: usize, nu: usize) -> Encoder {
    let mut rows: Vec<f64> = (0..nx * nu).map(|_| rng.gen::<f64>()).collect();
    for x in 0..nx {
        let s: f64 = rows[x * nu..(x + 1) * nu].iter().sum();
        rows[x * nu..(x + 1) * nu].iter_mut().for_each(|v| *v /= s);
    }
    Encoder::new(nx, nu, rows).unwrap()
}
