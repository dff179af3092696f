//! Plain-loop reference for similarity, pruning and propagation.

#![allow(dead_code)]

pub type Mat = Vec<Vec<f64>>;

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i][p] * b[p][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

fn l1_rows(m: &mut Mat, abs: bool) {
    for row in m.iter_mut() {
        let s: f64 = row.iter().map(|v| if abs { v.abs() } else { *v }).sum();
        if s > 0.0 {
            for v in row.iter_mut() {
                *v /= s;
            }
        }
    }
}

/// `mode` is one of "full", "wpsp", "asp".
pub fn prune(beta: &Mat, tau: f64, mode: &str) -> Mat {
    let mut m = beta.clone();
    if mode == "asp" {
        l1_rows(&mut m, true);
        return m;
    }
    for row in m.iter_mut() {
        for v in row.iter_mut() {
            *v = v.max(0.0);
        }
    }
    l1_rows(&mut m, false);
    if mode == "full" {
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                if *v < tau {
                    *v = 0.0;
                }
            }
        }
    }
    l1_rows(&mut m, false);
    m
}

pub struct Outputs {
    pub beta_va: Mat,
    pub gamma_va: Mat,
    pub gamma_av: Mat,
    pub v_psp: Mat,
    pub a_psp: Mat,
}

pub fn psp(v: &Mat, a: &Mat, w1v: &Mat, w1a: &Mat, w2v: &Mat, w2a: &Mat, tau: f64, mode: &str) -> Outputs {
    let d_l = v[0].len() as f64;
    let pv = matmul(v, w1v);
    let pa = matmul(a, w1a);
    let t = v.len();
    let mut beta_va = vec![vec![0.0; t]; t];
    for i in 0..t {
        for j in 0..t {
            let dot: f64 = pv[i].iter().zip(&pa[j]).map(|(x, y)| x * y).sum();
            beta_va[i][j] = dot / d_l.sqrt();
        }
    }
    let gamma_va = prune(&beta_va, tau, mode);
    let gamma_av = prune(&transpose(&beta_va), tau, mode);
    let add = |x: Mat, y: &Mat| -> Mat {
        x.into_iter()
            .zip(y)
            .map(|(r, s)| r.into_iter().zip(s).map(|(p, q)| p + q).collect())
            .collect()
    };
    let a_psp = add(matmul(&gamma_av, &matmul(v, w2v)), a);
    let v_psp = add(matmul(&gamma_va, &matmul(a, w2a)), v);
    Outputs {
        beta_va,
        gamma_va,
        gamma_av,
        v_psp,
        a_psp,
    }
}
