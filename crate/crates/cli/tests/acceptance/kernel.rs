//! GP kernel: positive semidefinite over the hyperparameter grid, exact diagonal.

use sulp_core::priors::{gp_kernel, gp_kernel_matrix};

use crate::common::{Checks, Verdict};

const HORIZONS: [usize; 4] = [1, 8, 17, 41];
const XI: [f64; 7] = [0.011, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0];
const VARSIGMA: [f64; 7] = [0.0, 0.5, 1.0, 2.0, 4.0, 7.0, 10.0];

pub fn run() -> Verdict {
    let mut c = Checks::default();
    let mut worst_eig = f64::INFINITY;
    for &h in &HORIZONS {
        for &xi in &XI {
            for &vs in &VARSIGMA {
                let k = gp_kernel_matrix(h, xi, vs);
                let sym = (0..h).all(|i| (0..h).all(|j| k[(i, j)] == k[(j, i)]));
                c.expect(sym, || format!("H={h} ξ={xi} ς={vs}: not symmetric"));
                let eig = k.clone().symmetric_eigen().eigenvalues;
                let top = eig.iter().copied().fold(0.0f64, f64::max);
                let low = eig.iter().copied().fold(f64::INFINITY, f64::min);
                worst_eig = worst_eig.min(low / top);
                c.expect(low >= -1e-12 * top, || format!("H={h} ξ={xi} ς={vs}: eigenvalue {low:.3e}"));
                c.expect(gp_kernel(h, xi, vs).is_ok(), || format!("H={h} ξ={xi} ς={vs}: no Cholesky factor"));
                let hf = h as f64;
                for i in 0..h {
                    let d = (hf - i as f64) / hf;
                    let want = if vs == 0.0 { 1.0 } else { d.powf(vs) };
                    c.expect(k[(i, i)] == want, || format!("H={h} ς={vs}: K[{i},{i}] = {} != {want}", k[(i, i)]));
                }
            }
        }
    }
    let mut v = c.verdict("kernel");
    v.detail.push_str(&format!("; smallest eigenvalue / largest = {worst_eig:.2e}"));
    v
}
