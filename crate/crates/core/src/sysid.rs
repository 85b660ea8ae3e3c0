//! Trajectory records, persistent-excitation check, least-squares
//! identification and empirical state-input moments.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mat_to_rows, Mat, SymMat, Vector};

/// Relative singular-value cutoff for numerical rank.
pub const RANK_TOL: f64 = 1e-8;

/// Largest accepted condition number for the joint data covariance.
pub const MAX_DATA_CONDITION: f64 = 1e12;

/// State and input samples `x_0..x_N`, `u_0..u_N` stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryData {
    states: Mat,
    inputs: Mat,
    diverged: bool,
}

impl TrajectoryData {
    pub fn new(states: Mat, inputs: Mat) -> Result<Self> {
        if states.ncols() != inputs.ncols() {
            return Err(Error::Dimension(format!(
                "state and input sample counts differ ({} vs {})",
                states.ncols(),
                inputs.ncols()
            )));
        }
        if states.nrows() == 0 || inputs.nrows() == 0 {
            return Err(Error::Dimension("state and input dimensions must be >= 1".into()));
        }
        if states.ncols() < 2 {
            return Err(Error::InsufficientSamples {
                n: states.ncols().saturating_sub(1),
                required: 1,
            });
        }
        Ok(Self {
            states,
            inputs,
            diverged: false,
        })
    }

    /// Simulator output: allows truncated trajectories flagged as diverged.
    pub(crate) fn from_simulation(states: Mat, inputs: Mat, diverged: bool) -> Self {
        Self {
            states,
            inputs,
            diverged,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.states.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    /// Sample horizon `N` (there are `N + 1` columns).
    pub fn horizon(&self) -> usize {
        self.states.ncols().saturating_sub(1)
    }

    pub fn states(&self) -> &Mat {
        &self.states
    }

    pub fn inputs(&self) -> &Mat {
        &self.inputs
    }

    /// `true` when the simulator stopped early on an exploding state.
    pub fn diverged(&self) -> bool {
        self.diverged
    }

    /// Minimum horizon for identifiability, `(r_u + 1) r_x + r_u`.
    pub fn min_horizon(&self) -> usize {
        (self.input_dim() + 1) * self.state_dim() + self.input_dim()
    }

    /// Stacked data matrix `D = [X; U]`.
    pub fn data_matrix(&self) -> Mat {
        let (rx, ru, cols) = (self.state_dim(), self.input_dim(), self.states.ncols());
        let mut d = Mat::zeros(rx + ru, cols);
        d.view_mut((0, 0), (rx, cols)).copy_from(&self.states);
        d.view_mut((rx, 0), (ru, cols)).copy_from(&self.inputs);
        d
    }

    /// `X_0 = [x_0 .. x_{N-1}]`.
    pub fn x0(&self) -> Mat {
        self.states.columns(0, self.horizon()).into_owned()
    }

    /// `U_0 = [u_0 .. u_{N-1}]`.
    pub fn u0(&self) -> Mat {
        self.inputs.columns(0, self.horizon()).into_owned()
    }

    /// `X_1 = [x_1 .. x_N]`.
    pub fn x1(&self) -> Mat {
        self.states.columns(1, self.horizon()).into_owned()
    }

    /// Reads `k,x1..,u1..` CSV. The number of `x` and `u` columns is taken from the header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        let names: Vec<&str> = header.iter().map(str::trim).collect();
        if names.first() != Some(&"k") {
            return Err(Error::Parse("first CSV column must be `k`".into()));
        }
        let rx = names.iter().filter(|n| n.starts_with('x')).count();
        let ru = names.iter().filter(|n| n.starts_with('u')).count();
        let expected: Vec<String> = std::iter::once("k".to_string())
            .chain((1..=rx).map(|i| format!("x{i}")))
            .chain((1..=ru).map(|i| format!("u{i}")))
            .collect();
        if names.len() != expected.len() || names.iter().zip(&expected).any(|(a, b)| a != b) {
            return Err(Error::Parse(format!(
                "unexpected CSV header {:?}, expected {:?}",
                names, expected
            )));
        }
        if rx == 0 || ru == 0 {
            return Err(Error::Parse("CSV needs at least one state and one input column".into()));
        }
        let mut xs: Vec<f64> = Vec::new();
        let mut us: Vec<f64> = Vec::new();
        let mut rows = 0usize;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            if rec.len() != expected.len() {
                return Err(Error::Parse(format!("row {} has {} fields", line + 1, rec.len())));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: {e}", line + 1)))
            };
            let k = parse(&rec[0])?;
            if k != rows as f64 {
                return Err(Error::Parse(format!("row {} has k = {k}, expected {rows}", line + 1)));
            }
            for i in 0..rx {
                xs.push(parse(&rec[1 + i])?);
            }
            for i in 0..ru {
                us.push(parse(&rec[1 + rx + i])?);
            }
            rows += 1;
        }
        let states = Mat::from_column_slice(rx, rows, &xs);
        let inputs = Mat::from_column_slice(ru, rows, &us);
        Self::new(states, inputs).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().from_writer(writer);
        let mut header = vec!["k".to_string()];
        header.extend((1..=self.state_dim()).map(|i| format!("x{i}")));
        header.extend((1..=self.input_dim()).map(|i| format!("u{i}")));
        w.write_record(&header).map_err(csv_io)?;
        for k in 0..self.states.ncols() {
            let mut row = vec![k.to_string()];
            row.extend(self.states.column(k).iter().map(|v| v.to_string()));
            row.extend(self.inputs.column(k).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Linear model `x+ = A x + B u + w`, `w ~ (0, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: Mat,
    pub b: Mat,
    pub w: SymMat,
}

impl LinearModel {
    pub fn new(a: Mat, b: Mat, w: SymMat) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || w.dim() != n || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "model dimensions inconsistent: A {}x{}, B {}x{}, W {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                w.dim(),
                w.dim()
            )));
        }
        if !crate::linalg::is_psd(&w, crate::linalg::PSD_TOL)? {
            return Err(Error::NotPsd {
                min_eig: w.min_eigenvalue()?,
            });
        }
        Ok(Self { a, b, w })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Closed-loop matrix `A + B K`.
    pub fn closed_loop(&self, k: &Mat) -> Mat {
        &self.a + &self.b * k
    }
}

/// First and second moments of the joint state-input data.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMoments {
    pub sigma_data: SymMat,
    pub h_data: Mat,
    pub m_data: SymMat,
    pub gamma_data: SymMat,
    pub mu_data: Vector,
}

impl EmpiricalMoments {
    /// Assemble moments from blocks; `gamma_data` is formed from them.
    pub fn from_blocks(sigma_data: SymMat, h_data: Mat, m_data: SymMat, mu_data: Vector) -> Result<Self> {
        let gamma_data = SymMat::block2(&sigma_data, &h_data, &m_data)?;
        if mu_data.len() != gamma_data.dim() {
            return Err(Error::Dimension("mean length does not match covariance".into()));
        }
        check_data_covariance(&gamma_data)?;
        Ok(Self {
            sigma_data,
            h_data,
            m_data,
            gamma_data,
            mu_data,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.sigma_data.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.m_data.dim()
    }
}

/// Result of the persistent-excitation rank test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeCheck {
    pub satisfied: bool,
    pub rank: usize,
}

fn numerical_rank(m: &Mat) -> usize {
    // thin SVD of the tall transpose
    let sv = m.transpose().svd(false, false).singular_values;
    let smax = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Full row rank of `D = [X; U]`.
pub fn check_pe(data: &TrajectoryData) -> PeCheck {
    let rank = numerical_rank(&data.data_matrix());
    PeCheck {
        satisfied: rank == data.state_dim() + data.input_dim(),
        rank,
    }
}

/// Least-squares `[A, B]` with residual covariance `W = X_err X_err^T / N`.
pub fn least_squares_id(data: &TrajectoryData) -> Result<LinearModel> {
    let (rx, ru, n) = (data.state_dim(), data.input_dim(), data.horizon());
    if n < data.min_horizon() {
        return Err(Error::InsufficientSamples {
            n,
            required: data.min_horizon(),
        });
    }
    let pe = check_pe(data);
    if !pe.satisfied {
        return Err(Error::PeViolation {
            rank: pe.rank,
            required: rx + ru,
        });
    }
    least_squares_fit(&data.x0(), &data.u0(), &data.x1())
}

/// Least-squares fit on explicit regressor/target columns `x1 ~ [A, B] [x0; u0]`.
pub fn least_squares_fit(x0: &Mat, u0: &Mat, x1: &Mat) -> Result<LinearModel> {
    let (rx, ru, n) = (x0.nrows(), u0.nrows(), x0.ncols());
    if u0.ncols() != n || x1.ncols() != n || x1.nrows() != rx {
        return Err(Error::Dimension("regressor and target columns do not match".into()));
    }
    let p = rx + ru;
    // regressors Phi = [X0; U0]^T (N x p), targets X1^T (N x rx)
    let mut phi = Mat::zeros(n, p);
    phi.view_mut((0, 0), (n, rx)).copy_from(&x0.transpose());
    phi.view_mut((0, rx), (n, ru)).copy_from(&u0.transpose());
    let rank = numerical_rank(&phi.transpose());
    if n < p || rank < p {
        return Err(Error::PeViolation { rank, required: p });
    }
    let qr = phi.clone().qr();
    let mut qty = x1.transpose();
    qr.q_tr_mul(&mut qty);
    let r = qr.r();
    let rhs = qty.rows(0, p).into_owned();
    let theta_t = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Numerical("singular triangular factor in least squares".into()))?;
    let theta = theta_t.transpose(); // rx x p = [A, B]
    let a = theta.columns(0, rx).into_owned();
    let b = theta.columns(rx, ru).into_owned();
    let err = x1 - &theta * phi.transpose();
    let w = SymMat::symmetrize(&err * err.transpose() / n as f64);
    LinearModel::new(a, b, w)
}

fn check_data_covariance(gamma: &SymMat) -> Result<()> {
    let (vals, _) = crate::linalg::sym_eig(gamma)?;
    let lo = vals[0];
    let hi = vals[vals.len() - 1];
    if hi <= 0.0 || lo <= hi / MAX_DATA_CONDITION {
        return Err(Error::DegenerateData(format!(
            "joint data covariance is not positive definite (eigenvalues in [{lo:.3e}, {hi:.3e}])"
        )));
    }
    Ok(())
}

/// Reference point of the second moments of `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Covariance about the sample mean.
    #[default]
    SampleMean,
    /// Raw second moments about the origin, `D D^T / (N+1)`.
    Origin,
}

/// Sample mean and `1/(N+1)`-normalized centered covariance of `D`.
pub fn empirical_moments(data: &TrajectoryData) -> Result<EmpiricalMoments> {
    moments_about(data, Centering::SampleMean)
}

/// Like [`empirical_moments`] with a chosen reference point; `mu_data` is
/// always the sample mean.
pub fn moments_about(data: &TrajectoryData, centering: Centering) -> Result<EmpiricalMoments> {
    let d = data.data_matrix();
    let cols = d.ncols();
    let (rx, ru) = (data.state_dim(), data.input_dim());
    let mu: Vector = d.column_mean();
    let mut centered = d.clone();
    if centering == Centering::SampleMean {
        for mut c in centered.column_iter_mut() {
            c -= &mu;
        }
    }
    let gamma = SymMat::symmetrize(&centered * centered.transpose() / cols as f64);
    let sigma_data = gamma.sub_block(0, rx);
    let m_data = gamma.sub_block(rx, ru);
    let h_data = gamma.as_mat().view((0, rx), (rx, ru)).into_owned();
    check_data_covariance(&gamma)?;
    Ok(EmpiricalMoments {
        sigma_data,
        h_data,
        m_data,
        gamma_data: gamma,
        mu_data: mu,
    })
}

/// JSON view of an identified model and its moments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentificationReport {
    #[serde(rename = "A_hat")]
    pub a_hat: Vec<Vec<f64>>,
    #[serde(rename = "B_hat")]
    pub b_hat: Vec<Vec<f64>>,
    #[serde(rename = "W_hat")]
    pub w_hat: Vec<Vec<f64>>,
    pub pe_rank: usize,
    pub moments: MomentsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentsReport {
    pub sigma_data: Vec<Vec<f64>>,
    pub h_data: Vec<Vec<f64>>,
    pub m_data: Vec<Vec<f64>>,
    pub gamma_data: Vec<Vec<f64>>,
    pub mu_data: Vec<f64>,
}

impl IdentificationReport {
    pub fn new(model: &LinearModel, pe: PeCheck, moments: &EmpiricalMoments) -> Self {
        Self {
            a_hat: mat_to_rows(&model.a),
            b_hat: mat_to_rows(&model.b),
            w_hat: mat_to_rows(model.w.as_mat()),
            pe_rank: pe.rank,
            moments: MomentsReport {
                sigma_data: mat_to_rows(moments.sigma_data.as_mat()),
                h_data: mat_to_rows(&moments.h_data),
                m_data: mat_to_rows(moments.m_data.as_mat()),
                gamma_data: mat_to_rows(moments.gamma_data.as_mat()),
                mu_data: moments.mu_data.iter().copied().collect(),
            },
        }
    }
}
