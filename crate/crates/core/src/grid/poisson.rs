use super::{neumaier, Field};
use crate::error::{ensure, Error, Result};

/// Mean-zero solution of `L u = rhs` on a pure-Neumann domain (conjugate gradients).
pub fn poisson_neumann(rhs: &Field) -> Result<Field> {
    let dom = rhs.domain();
    ensure!(
        !dom.has_dirichlet(),
        Precondition,
        "poisson_neumann needs a pure-Neumann mask"
    );
    let scale = rhs.sup_abs();
    let mean = rhs.mean();
    ensure!(
        mean.abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE),
        Precondition,
        "right-hand side has mean {mean:e} (scale {scale:e}); solvability needs mean zero"
    );
    let n = dom.len();
    if scale == 0.0 {
        return Ok(Field::zeros(dom));
    }
    // Solve (-L) u = -(rhs - mean) on the mean-zero subspace.
    let b: Vec<f64> = rhs.values().iter().map(|v| -(v - mean)).collect();
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let dot = |a: &[f64], b: &[f64]| neumaier(a.iter().zip(b).map(|(x, y)| x * y));
    let b_norm = dot(&b, &b).sqrt();
    let mut rr = dot(&r, &r);
    let tol = 1e-12 * b_norm;
    let max_iter = 20 * n + 100;
    let mut it = 0;
    while rr.sqrt() > tol {
        ensure!(
            it < max_iter,
            Solver,
            "conjugate gradients stalled at residual {:e}",
            rr.sqrt() / b_norm
        );
        dom.apply_laplacian(&p, &mut ap);
        ap.iter_mut().for_each(|v| *v = -*v);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Solver(format!("operator lost definiteness (pᵀAp = {pap:e})")));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
        it += 1;
    }
    let m = neumaier(x.iter().copied()) / n as f64;
    x.iter_mut().for_each(|v| *v -= m);
    Field::new(dom.clone(), x)
}

#[cfg(test)]
mod tests {
    use super::super::{Domain, GridSpec};
    use super::*;

    #[test]
    fn recovers_cosine_mode() {
        let dom = Domain::neumann_box(GridSpec::cube(2, 0.0, 1.0, 32).unwrap()).unwrap();
        let u = Field::from_fn(&dom, |x| {
            (std::f64::consts::PI * x[0]).cos() * (2.0 * std::f64::consts::PI * x[1]).cos()
        })
        .unwrap();
        let rhs = u.laplacian();
        let sol = poisson_neumann(&rhs).unwrap();
        let err = sol
            .values()
            .iter()
            .zip(u.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-9, "{err}");
        let res = sol.laplacian();
        let r = res
            .values()
            .iter()
            .zip(rhs.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(r <= 1e-10 * rhs.sup_abs());
    }

    #[test]
    fn nonzero_mean_rejected() {
        let dom = Domain::neumann_box(GridSpec::cube(1, 0.0, 1.0, 8).unwrap()).unwrap();
        let rhs = Field::constant(&dom, 1.0);
        assert!(matches!(poisson_neumann(&rhs), Err(Error::Precondition(_))));
    }
}
