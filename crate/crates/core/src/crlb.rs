//! Fisher information and position CRLBs for the two measurement models.
//!
//! Parameters are `theta = [x; nu]` with `nu_i = delta_i` (attack model) or
//! `nu_i = rho_i` (dilation model). The position bound is the trace of the
//! inverse Schur complement `F_x = A - B C^-1 B'`.
//!
//! In the attack model only the attackers' `delta_i` are unknown; genuine
//! anchors have `delta_i = 0` known, so their columns of `B` are zero. With
//! every `delta_i` unknown the position is not identifiable (`F_x = 0`).

use nalgebra::{DMatrix, SymmetricEigen};

use crate::scenario::{dist, Point};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FisherModel {
    Attack,
    Dilation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherPartition {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub model: FisherModel,
}

impl FisherPartition {
    pub fn full(&self) -> DMatrix<f64> {
        let (q, n) = (self.a.nrows(), self.c.nrows());
        let mut f = DMatrix::zeros(q + n, q + n);
        f.view_mut((0, 0), (q, q)).copy_from(&self.a);
        f.view_mut((0, q), (q, n)).copy_from(&self.b);
        f.view_mut((q, 0), (n, q)).copy_from(&self.b.transpose());
        f.view_mut((q, q), (n, n)).copy_from(&self.c);
        f
    }

    /// `A - B C^-1 B'`.
    pub fn position_information(&self) -> Result<DMatrix<f64>> {
        let c_inv = self
            .c
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Domain("nuisance block C is singular".into()))?;
        Ok(&self.a - &self.b * c_inv * self.b.transpose())
    }
}

fn unit_vectors(x: &Point, anchors: &[Point], sigma: f64) -> Result<Vec<Vec<f64>>> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    anchors
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let r = dist(x.coords(), a.coords());
            if r == 0.0 {
                return Err(Error::Domain(format!("target coincides with anchor {i}")));
            }
            Ok(x.coords().iter().zip(a.coords()).map(|(xk, ak)| (xk - ak) / r).collect())
        })
        .collect()
}

/// Fisher information of the attack model; `attackers` lists the anchors
/// whose attack magnitude is an unknown parameter.
pub fn fim_attack_model(x: &Point, anchors: &[Point], sigma: f64, attackers: &[usize]) -> Result<FisherPartition> {
    let u = unit_vectors(x, anchors, sigma)?;
    let (q, n) = (x.dim(), anchors.len());
    let w = 1.0 / (sigma * sigma);
    let mut a = DMatrix::zeros(q, q);
    let mut b = DMatrix::zeros(q, n);
    for (i, ui) in u.iter().enumerate() {
        for k in 0..q {
            for l in 0..q {
                a[(k, l)] += w * ui[k] * ui[l];
            }
        }
        if attackers.contains(&i) {
            for k in 0..q {
                b[(k, i)] = w * ui[k];
            }
        }
    }
    Ok(FisherPartition {
        a,
        b,
        c: DMatrix::identity(n, n) * w,
        model: FisherModel::Attack,
    })
}

/// Fisher information of the dilation model with variances `rho_i sigma^2`.
pub fn fim_dilation_model(x: &Point, anchors: &[Point], sigma: f64, rho: &[f64]) -> Result<FisherPartition> {
    if rho.len() != anchors.len() || rho.iter().any(|r| !(*r >= 1.0)) {
        return Err(Error::Domain("need rho_i >= 1 for every anchor".into()));
    }
    let u = unit_vectors(x, anchors, sigma)?;
    let (q, n) = (x.dim(), anchors.len());
    let mut a = DMatrix::zeros(q, q);
    for (ui, ri) in u.iter().zip(rho) {
        let w = 1.0 / (sigma * sigma * ri);
        for k in 0..q {
            for l in 0..q {
                a[(k, l)] += w * ui[k] * ui[l];
            }
        }
    }
    Ok(FisherPartition {
        a,
        b: DMatrix::zeros(q, n),
        c: DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, rho.iter().map(|r| 0.5 / (r * r)))),
        model: FisherModel::Dilation,
    })
}

/// `trace(F_x^-1)` in m^2; `f64::INFINITY` when `F_x` is singular.
pub fn crlb_position(fp: &FisherPartition) -> Result<f64> {
    let fx = fp.position_information()?;
    let eig = SymmetricEigen::new(fx.clone()).eigenvalues;
    let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 || min <= 1e-12 * max {
        return Ok(f64::INFINITY);
    }
    match fx.try_inverse() {
        Some(inv) => Ok(inv.trace()),
        None => Ok(f64::INFINITY),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_deployment, stream_rng, ScenarioConfig};

    fn cross(sigma: f64) -> (Point, Vec<Point>, f64) {
        let x = Point::new(vec![5.0, 5.0]);
        let anchors = vec![
            Point::new(vec![6.0, 5.0]),
            Point::new(vec![4.0, 5.0]),
            Point::new(vec![5.0, 6.0]),
            Point::new(vec![5.0, 4.0]),
        ];
        (x, anchors, sigma)
    }

    #[test]
    fn cross_closed_form() {
        let (x, anchors, _) = cross(1.0);
        let f = fim_attack_model(&x, &anchors, 1.0, &[]).unwrap();
        assert!((&f.a - DMatrix::identity(2, 2) * 2.0).norm() < 1e-12);
        assert!((crlb_position(&f).unwrap() - 1.0).abs() < 1e-12);
        let f15 = fim_attack_model(&x, &anchors, 15.0, &[]).unwrap();
        assert!((crlb_position(&f15).unwrap() - 225.0).abs() < 1e-9);
        let f2 = fim_attack_model(&x, &anchors, 2.0, &[0, 2]).unwrap();
        let f1 = fim_attack_model(&x, &anchors, 1.0, &[0, 2]).unwrap();
        assert!((f2.full() * 4.0 - f1.full()).norm() < 1e-12);
    }

    #[test]
    fn all_attacked_is_unidentifiable() {
        let (x, anchors, _) = cross(1.0);
        let f = fim_attack_model(&x, &anchors, 1.0, &[0, 1, 2, 3]).unwrap();
        assert_eq!(crlb_position(&f).unwrap(), f64::INFINITY);
    }

    #[test]
    fn dilation_reduces_to_attack_model() {
        let (x, anchors, _) = cross(1.0);
        let fa = fim_attack_model(&x, &anchors, 3.0, &[]).unwrap();
        let fd = fim_dilation_model(&x, &anchors, 3.0, &[1.0; 4]).unwrap();
        assert!((&fa.a - &fd.a).norm() < 1e-15);
        assert_eq!(crlb_position(&fa).unwrap(), crlb_position(&fd).unwrap());
        let big = fim_dilation_model(&x, &anchors, 1.0, &[1e12, 1.0, 1.0, 1.0]).unwrap();
        let no_first = fim_dilation_model(&x, &anchors[1..], 1.0, &[1.0; 3]).unwrap();
        assert!((&big.a - &no_first.a).norm() < 1e-11);
    }

    #[test]
    fn errors() {
        let (_, anchors, _) = cross(1.0);
        assert!(fim_attack_model(&anchors[0], &anchors, 1.0, &[]).is_err());
        assert!(fim_dilation_model(&Point::new(vec![0.0, 0.0]), &anchors, 1.0, &[0.5; 4]).is_err());
        let collinear = vec![
            Point::new(vec![0.0, 0.0]),
            Point::new(vec![1.0, 0.0]),
            Point::new(vec![2.0, 0.0]),
        ];
        let f = fim_attack_model(&Point::new(vec![5.0, 0.0]), &collinear, 1.0, &[]).unwrap();
        assert_eq!(crlb_position(&f).unwrap(), f64::INFINITY);
    }

    #[test]
    fn information_monotonicity_and_ordering() {
        let mut rng = stream_rng(31, 0);
        for _ in 0..50 {
            let s = generate_deployment(&ScenarioConfig::default(), &mut rng).unwrap();
            let full = crlb_position(&fim_attack_model(&s.target, &s.anchors, 2.0, &[]).unwrap()).unwrap();
            let fewer = crlb_position(&fim_attack_model(&s.target, &s.anchors[..9], 2.0, &[]).unwrap()).unwrap();
            assert!(full <= fewer * (1.0 + 1e-12));

            let fx = fim_attack_model(&s.target, &s.anchors, 2.0, &[]).unwrap().position_information().unwrap();
            assert!(SymmetricEigen::new(fx.clone()).eigenvalues.min() > 0.0);
            assert!((&fx - fx.transpose()).norm() < 1e-12);

            let mut rho = vec![1.0; 10];
            rho[2] = 4.0;
            rho[7] = 30.0;
            let dil = crlb_position(&fim_dilation_model(&s.target, &s.anchors, 2.0, &rho).unwrap()).unwrap();
            let nuisance =
                crlb_position(&fim_attack_model(&s.target, &s.anchors, 2.0, &[2, 7]).unwrap()).unwrap();
            assert!(full <= dil * (1.0 + 1e-12));
            assert!(dil <= nuisance * (1.0 + 1e-12));
        }
    }
}
