//! Proximal operators and projections.

use nalgebra::DMatrix;

use crate::linalg;

/// Nearest PSD matrix in Frobenius norm.
pub fn psd_project(s: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::sym_map(s, |lam| lam.max(0.0))
}

/// Prox of `t‖·‖_*`: shrink singular values by `t`.
pub fn svt(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    if t == 0.0 {
        return m.clone();
    }
    let mut svd = m.clone().svd(true, true);
    svd.singular_values.apply(|s| *s = (*s - t).max(0.0));
    svd.recompose().expect("both factors computed")
}

/// [`svt`] for symmetric input through the eigen-decomposition: singular
/// values are `|λ|`, so each eigenvalue moves toward zero by `t`.
pub fn svt_symmetric(s: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    linalg::sym_map(s, |lam| lam.signum() * (lam.abs() - t).max(0.0))
}

/// Euclidean projection onto `{x : ‖x‖_1 ≤ radius}`.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return v.to_vec();
    }
    if radius <= 0.0 {
        return vec![0.0; v.len()];
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - radius) / (i + 1) as f64;
        if m > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    v.iter()
        .map(|x| x.signum() * (x.abs() - theta).max(0.0))
        .collect()
}

/// Prox of `t‖·‖_∞` by Moreau decomposition: `v − t·Π_{B1}(v/t)`.
pub fn prox_group_linf(v: &[f64], t: f64) -> Vec<f64> {
    if t <= 0.0 {
        return v.to_vec();
    }
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= t {
        return vec![0.0; v.len()];
    }
    let proj = project_l1_ball(v, t);
    v.iter().zip(&proj).map(|(a, b)| a - b).collect()
}

/// Projection onto the Frobenius ball of radius `delta` around `center`.
pub fn frobenius_ball_project(m: &DMatrix<f64>, center: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    let diff = m - center;
    let dist = diff.norm();
    if dist <= delta {
        m.clone()
    } else {
        center + diff * (delta / dist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_of_indefinite_diagonal() {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        let p = psd_project(&s);
        assert!((p - DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0]))).norm() < 1e-14);
    }

    #[test]
    fn svt_diagonal() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0]));
        let out = svt(&m, 2.0);
        assert!((out - DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0]))).norm() < 1e-12);
        assert_eq!(svt(&m, 0.0), m);
    }

    #[test]
    fn linf_kill_zone() {
        assert_eq!(prox_group_linf(&[0.3, -0.2], 1.0), vec![0.0, 0.0]);
        assert_eq!(prox_group_linf(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
    }

    #[test]
    fn linf_prox_shrinks_peak() {
        // minimizer of ½‖x − (3,1)‖² + ‖x‖_∞ is (2,1)
        let x = prox_group_linf(&[3.0, 1.0], 1.0);
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ball_projection_cases() {
        let c = DMatrix::from_element(2, 2, 1.0);
        assert_eq!(frobenius_ball_project(&c, &c, 0.5), c);
        let m = DMatrix::from_element(2, 2, 3.0);
        assert_eq!(frobenius_ball_project(&m, &c, 0.0), c);
        let d = (&m - &c).norm();
        let p = frobenius_ball_project(&m, &c, d / 2.0);
        assert!(((&p - &c).norm() - d / 2.0).abs() < 1e-12);
        assert!((p - DMatrix::from_element(2, 2, 2.0)).norm() < 1e-12);
    }
}
