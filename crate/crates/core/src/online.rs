//! Streaming RPCA: project each incoming sample onto the current dictionary,
//! then refit the dictionary in closed form from discounted running sums.
//!
//! With `A_t = Σⱼ β^{t−j} sⱼsⱼᵀ` and `B_t = Σⱼ β^{t−j} (xⱼ − oⱼ)sⱼᵀ` the
//! dictionary solves `U_t (A_t + λ*I) = B_t`. Discounting is applied by
//! scaling both sums by `β` before adding the new sample, so the state is
//! O(mq) regardless of stream length.

use crate::error::{Result, RpcaError};
use crate::linalg::{solve_right_spd, sub_vec, DenseMatrix};
use crate::model::{Projection, RegParams};
use crate::solvers::{robust_project, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineState {
    u: DenseMatrix,
    gram_acc: DenseMatrix,
    cross_acc: DenseMatrix,
    t: usize,
    beta: f64,
}

impl OnlineState {
    /// Fresh state around an initial dictionary; accumulators start at zero.
    pub fn new(u0: DenseMatrix, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(RpcaError::InvalidParameter(format!(
                "forgetting factor must lie in (0, 1], got {beta}"
            )));
        }
        let (m, q) = u0.shape();
        Ok(Self {
            u: u0,
            gram_acc: DenseMatrix::zeros(q, q),
            cross_acc: DenseMatrix::zeros(m, q),
            t: 0,
            beta,
        })
    }

    pub fn dictionary(&self) -> &DenseMatrix {
        &self.u
    }

    pub fn gram_acc(&self) -> &DenseMatrix {
        &self.gram_acc
    }

    pub fn cross_acc(&self) -> &DenseMatrix {
        &self.cross_acc
    }

    /// Number of samples absorbed so far.
    pub fn samples_seen(&self) -> usize {
        self.t
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Discounts the sums by β and adds `s sᵀ` and `(x − o) sᵀ`, without
    /// refitting the dictionary.
    pub fn accumulate(&mut self, s: &[f64], x_minus_o: &[f64]) -> Result<()> {
        let (m, q) = self.u.shape();
        if s.len() != q || x_minus_o.len() != m {
            return Err(RpcaError::Dimension(format!(
                "accumulate: s of length {}, x − o of length {} for a {m}x{q} dictionary",
                s.len(),
                x_minus_o.len()
            )));
        }
        if self.beta != 1.0 {
            self.gram_acc.scale_in_place(self.beta);
            self.cross_acc.scale_in_place(self.beta);
        }
        self.gram_acc.rank_one_update(1.0, s, s);
        self.cross_acc.rank_one_update(1.0, x_minus_o, s);
        self.t += 1;
        Ok(())
    }

    /// Solves `U (A + λ*I) = B` for the dictionary.
    pub fn refit(&mut self, lambda_star: f64) -> Result<()> {
        let mut lhs = self.gram_acc.clone();
        lhs.add_diagonal(lambda_star);
        self.u = solve_right_spd(&self.cross_acc, &lhs)?;
        Ok(())
    }

    /// `‖U(A + λ*I) − B‖_F / (1 + ‖B‖_F)`.
    pub fn linear_system_residual(&self, lambda_star: f64) -> f64 {
        let mut lhs = self.gram_acc.clone();
        lhs.add_diagonal(lambda_star);
        let prod = self.u.matmul(&lhs).expect("accumulator shapes match the dictionary");
        prod.sub(&self.cross_acc).expect("same shape").frobenius_norm() / (1.0 + self.cross_acc.frobenius_norm())
    }

    /// Projects `x_t` onto the current dictionary, folds the result into the
    /// accumulators and refits the dictionary.
    pub fn step(&mut self, x_t: &[f64], p: &RegParams, cfg: &SolverConfig) -> Result<Projection> {
        let proj = robust_project(x_t, &self.u, p, cfg)?;
        self.accumulate(&proj.s, &sub_vec(x_t, &proj.o))?;
        self.refit(p.lambda_star())?;
        Ok(proj)
    }

    /// Runs [`OnlineState::step`] over the columns of `x` in index order.
    pub fn pass(&mut self, x: &DenseMatrix, p: &RegParams, cfg: &SolverConfig) -> Result<Vec<Projection>> {
        (0..x.cols()).map(|j| self.step(x.column(j), p, cfg)).collect()
    }
}

/// Convenience constructor mirroring [`OnlineState::new`].
pub fn online_init(u0: DenseMatrix, beta: f64) -> Result<OnlineState> {
    OnlineState::new(u0, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Cholesky;

    fn dictionary() -> DenseMatrix {
        DenseMatrix::from_fn(5, 2, |i, j| ((i + 1) as f64 * 0.37 + j as f64 * 1.3).sin())
    }

    #[test]
    fn beta_range_is_enforced() {
        assert!(OnlineState::new(dictionary(), 0.0).is_err());
        assert!(OnlineState::new(dictionary(), 1.5).is_err());
        assert!(OnlineState::new(dictionary(), 1.0).is_ok());
    }

    #[test]
    fn first_step_matches_single_term_solution() {
        let p = RegParams::uniform(0.1, 0.2, 5, 2).unwrap();
        let mut st = OnlineState::new(dictionary(), 1.0).unwrap();
        let x = [1.0, -0.5, 3.0, 0.2, 0.0];
        let proj = st.step(&x, &p, &SolverConfig::default()).unwrap();
        let r: Vec<f64> = x.iter().zip(&proj.o).map(|(a, b)| a - b).collect();
        let mut lhs = DenseMatrix::zeros(2, 2);
        lhs.rank_one_update(1.0, &proj.s, &proj.s);
        lhs.add_diagonal(0.1);
        let mut rhs = DenseMatrix::zeros(5, 2);
        rhs.rank_one_update(1.0, &r, &proj.s);
        let inv = Cholesky::new(&lhs).unwrap().inverse();
        let expect = rhs.matmul(&inv).unwrap();
        assert!(st.dictionary().max_abs_diff(&expect) < 1e-12);
        assert_eq!(st.samples_seen(), 1);
    }

    #[test]
    fn zero_sample_only_discounts() {
        let p = RegParams::uniform(0.1, 0.2, 5, 2).unwrap();
        let mut st = OnlineState::new(dictionary(), 0.5).unwrap();
        st.step(&[1.0, 2.0, 0.0, -1.0, 0.5], &p, &SolverConfig::default())
            .unwrap();
        let (a, b) = (st.gram_acc().clone(), st.cross_acc().clone());
        let proj = st.step(&[0.0; 5], &p, &SolverConfig::default()).unwrap();
        assert!(proj.s.iter().chain(&proj.o).all(|v| *v == 0.0));
        assert!(st.gram_acc().max_abs_diff(&a.scale(0.5)) < 1e-15);
        assert!(st.cross_acc().max_abs_diff(&b.scale(0.5)) < 1e-15);
        assert!(st.linear_system_residual(0.1) < 1e-12);
    }

    #[test]
    fn single_column_pass_equals_step() {
        let p = RegParams::uniform(0.1, 0.2, 5, 2).unwrap();
        let x = DenseMatrix::new(5, 1, vec![0.3, 1.0, -2.0, 0.1, 4.0]).unwrap();
        let mut a = OnlineState::new(dictionary(), 0.9).unwrap();
        let mut b = a.clone();
        let pa = a.pass(&x, &p, &SolverConfig::default()).unwrap();
        let pb = b.step(x.column(0), &p, &SolverConfig::default()).unwrap();
        assert_eq!(pa[0], pb);
        assert_eq!(a, b);
    }
}
