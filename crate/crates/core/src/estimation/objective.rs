use crate::likelihood::conditional_loglik;
use crate::model::{Dataset, MlpParams};
use crate::transfer::TransferFunction;

/// `−loglik` and its gradient in flattened coordinates, by backpropagation.
pub fn negative_loglik_and_grad(flat: &[f64], k: usize, data: &Dataset) -> (f64, Vec<f64>) {
    let d = data.input_dim;
    let d1 = d + 1;
    let w0 = 1 + k;
    let phi = TransferFunction::Sigmoid;
    let mut grad = vec![0.0; flat.len()];
    let mut rss = 0.0;
    let mut act = vec![0.0; k];
    let mut deriv = vec![0.0; k];
    for (x, y) in data.rows() {
        let mut f = flat[0];
        for i in 0..k {
            let w = &flat[w0 + i * d1..w0 + (i + 1) * d1];
            let t = w[0] + w[1..].iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
            let [v, dv, _, _] = phi.derivatives(t);
            act[i] = v;
            deriv[i] = dv;
            f += flat[1 + i] * v;
        }
        let r = y - f;
        rss += r * r;
        // d(r²/2)/dF = −r
        grad[0] -= r;
        for i in 0..k {
            grad[1 + i] -= r * act[i];
            let s = r * flat[1 + i] * deriv[i];
            let g = &mut grad[w0 + i * d1..w0 + (i + 1) * d1];
            g[0] -= s;
            for (gl, xl) in g[1..].iter_mut().zip(x) {
                *gl -= s * xl;
            }
        }
    }
    let s2 = data.sigma2;
    let n = data.len() as f64;
    let value = 0.5 * n * (2.0 * std::f64::consts::PI * s2).ln() + rss / (2.0 * s2);
    grad.iter_mut().for_each(|g| *g /= s2);
    (value, grad)
}

/// `−loglik` through [`conditional_loglik`].
pub fn negative_loglik(flat: &[f64], k: usize, data: &Dataset) -> f64 {
    let theta = MlpParams::unflatten(flat, k, data.input_dim).expect("flat length checked by caller");
    -conditional_loglik(&theta, data).expect("sigma2 checked by caller")
}
