use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::activation::sigmoid;
use super::glorot_uniform;
use crate::error::{ensure_dim, Error, Result};
use crate::io::{read_matrix, read_vector, write_matrix, write_vector, Manifest};

/// LSTM cell whose four gates each act on the concatenation
/// `[h_{t-1}, x_t]` through a single weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_f: DMatrix<f64>,
    pub w_i: DMatrix<f64>,
    pub w_c: DMatrix<f64>,
    pub w_o: DMatrix<f64>,
    pub b_f: DVector<f64>,
    pub b_i: DVector<f64>,
    pub b_c: DVector<f64>,
    pub b_o: DVector<f64>,
}

/// Everything one batched step needs for BPTT.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    concat: DMatrix<f64>,
    f: DMatrix<f64>,
    i: DMatrix<f64>,
    g: DMatrix<f64>,
    o: DMatrix<f64>,
    c_prev: DMatrix<f64>,
    tanh_c: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGradient {
    pub w_f: DMatrix<f64>,
    pub w_i: DMatrix<f64>,
    pub w_c: DMatrix<f64>,
    pub w_o: DMatrix<f64>,
    pub b_f: DVector<f64>,
    pub b_i: DVector<f64>,
    pub b_c: DVector<f64>,
    pub b_o: DVector<f64>,
}

impl LstmGradient {
    pub fn zeros_like(cell: &LstmCell) -> Self {
        let (r, c) = cell.w_f.shape();
        Self {
            w_f: DMatrix::zeros(r, c),
            w_i: DMatrix::zeros(r, c),
            w_c: DMatrix::zeros(r, c),
            w_o: DMatrix::zeros(r, c),
            b_f: DVector::zeros(r),
            b_i: DVector::zeros(r),
            b_c: DVector::zeros(r),
            b_o: DVector::zeros(r),
        }
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for (w, b) in [
            (&self.w_f, &self.b_f),
            (&self.w_i, &self.b_i),
            (&self.w_c, &self.b_c),
            (&self.w_o, &self.b_o),
        ] {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
    }
}

fn add_bias(mut z: DMatrix<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    for mut col in z.column_iter_mut() {
        col += b;
    }
    z
}

impl LstmCell {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        w_f: DMatrix<f64>,
        w_i: DMatrix<f64>,
        w_c: DMatrix<f64>,
        w_o: DMatrix<f64>,
        b_f: DVector<f64>,
        b_i: DVector<f64>,
        b_c: DVector<f64>,
        b_o: DVector<f64>,
    ) -> Result<Self> {
        let cell = Self {
            w_f,
            w_i,
            w_c,
            w_o,
            b_f,
            b_i,
            b_c,
            b_o,
        };
        cell.validate()?;
        Ok(cell)
    }

    fn validate(&self) -> Result<()> {
        let (h, width) = self.w_f.shape();
        if width <= h {
            return Err(Error::invalid(format!(
                "gate width {width} must exceed the hidden size {h}"
            )));
        }
        for w in [&self.w_i, &self.w_c, &self.w_o] {
            ensure_dim("lstm gate rows", h, w.nrows())?;
            ensure_dim("lstm gate columns", width, w.ncols())?;
        }
        for b in [&self.b_f, &self.b_i, &self.b_c, &self.b_o] {
            ensure_dim("lstm gate bias", h, b.len())?;
        }
        Ok(())
    }

    /// Glorot weights, zero biases except the forget gate which starts at 1.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let width = hidden_dim + input_dim;
        let mut gate = || glorot_uniform(hidden_dim, width, rng);
        let (w_f, w_i, w_c, w_o) = (gate(), gate(), gate(), gate());
        Self {
            w_f,
            w_i,
            w_c,
            w_o,
            b_f: DVector::from_element(hidden_dim, 1.0),
            b_i: DVector::zeros(hidden_dim),
            b_c: DVector::zeros(hidden_dim),
            b_o: DVector::zeros(hidden_dim),
        }
    }

    /// All-zero cell; every gate sits at `sigmoid(0) = 0.5`.
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let z = || DMatrix::zeros(hidden_dim, hidden_dim + input_dim);
        Self {
            w_f: z(),
            w_i: z(),
            w_c: z(),
            w_o: z(),
            b_f: DVector::zeros(hidden_dim),
            b_i: DVector::zeros(hidden_dim),
            b_c: DVector::zeros(hidden_dim),
            b_o: DVector::zeros(hidden_dim),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_f.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_f.ncols() - self.w_f.nrows()
    }

    pub fn param_count(&self) -> usize {
        4 * (self.w_f.len() + self.b_f.len())
    }

    pub fn step(
        &self,
        h_prev: &DVector<f64>,
        c_prev: &DVector<f64>,
        x: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let as_col = |v: &DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        let cache = self.step_batch(&as_col(h_prev), &as_col(c_prev), &as_col(x))?;
        Ok((cache.h.column(0).into_owned(), cache.c.column(0).into_owned()))
    }

    /// One step for a batch of sequences (one per column).
    pub fn step_batch(&self, h_prev: &DMatrix<f64>, c_prev: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<LstmStepCache> {
        let hd = self.hidden_dim();
        ensure_dim("lstm hidden state", hd, h_prev.nrows())?;
        ensure_dim("lstm cell state", hd, c_prev.nrows())?;
        ensure_dim("lstm input", self.input_dim(), x.nrows())?;
        ensure_dim("lstm batch", h_prev.ncols(), x.ncols())?;
        ensure_dim("lstm batch", h_prev.ncols(), c_prev.ncols())?;
        let batch = x.ncols();
        let mut concat = DMatrix::zeros(hd + x.nrows(), batch);
        concat.rows_mut(0, hd).copy_from(h_prev);
        concat.rows_mut(hd, x.nrows()).copy_from(x);

        let f = add_bias(&self.w_f * &concat, &self.b_f).map(sigmoid);
        let i = add_bias(&self.w_i * &concat, &self.b_i).map(sigmoid);
        let g = add_bias(&self.w_c * &concat, &self.b_c).map(f64::tanh);
        let o = add_bias(&self.w_o * &concat, &self.b_o).map(sigmoid);
        let c = f.component_mul(c_prev) + i.component_mul(&g);
        let tanh_c = c.map(f64::tanh);
        let h = o.component_mul(&tanh_c);
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation {
                context: "lstm cell state",
                layer: 0,
            });
        }
        Ok(LstmStepCache {
            concat,
            f,
            i,
            g,
            o,
            c_prev: c_prev.clone(),
            tanh_c,
            h,
            c,
        })
    }

    /// Backward through one step. `dh` and `dc` are the loss gradients with
    /// respect to this step's outputs; parameter gradients are accumulated
    /// into `grad`. Returns `(dh_prev, dc_prev, dx)`.
    pub fn backward_step(
        &self,
        cache: &LstmStepCache,
        dh: &DMatrix<f64>,
        dc: &DMatrix<f64>,
        grad: &mut LstmGradient,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let hd = self.hidden_dim();
        let d_o = dh.component_mul(&cache.tanh_c);
        let mut dct = dh.component_mul(&cache.o);
        dct.zip_apply(&cache.tanh_c, |d, t| *d *= 1.0 - t * t);
        dct += dc;

        let mut da_f = dct.component_mul(&cache.c_prev);
        da_f.zip_apply(&cache.f, |d, f| *d *= f * (1.0 - f));
        let mut da_i = dct.component_mul(&cache.g);
        da_i.zip_apply(&cache.i, |d, i| *d *= i * (1.0 - i));
        let mut da_g = dct.component_mul(&cache.i);
        da_g.zip_apply(&cache.g, |d, g| *d *= 1.0 - g * g);
        let mut da_o = d_o;
        da_o.zip_apply(&cache.o, |d, o| *d *= o * (1.0 - o));
        let dc_prev = dct.component_mul(&cache.f);

        let concat_t = cache.concat.transpose();
        grad.w_f.gemm(1.0, &da_f, &concat_t, 1.0);
        grad.w_i.gemm(1.0, &da_i, &concat_t, 1.0);
        grad.w_c.gemm(1.0, &da_g, &concat_t, 1.0);
        grad.w_o.gemm(1.0, &da_o, &concat_t, 1.0);
        grad.b_f += da_f.column_sum();
        grad.b_i += da_i.column_sum();
        grad.b_c += da_g.column_sum();
        grad.b_o += da_o.column_sum();

        let mut d_concat = self.w_f.tr_mul(&da_f);
        d_concat.gemm_tr(1.0, &self.w_i, &da_i, 1.0);
        d_concat.gemm_tr(1.0, &self.w_c, &da_g, 1.0);
        d_concat.gemm_tr(1.0, &self.w_o, &da_o, 1.0);
        let dh_prev = d_concat.rows(0, hd).into_owned();
        let dx = d_concat.rows(hd, d_concat.nrows() - hd).into_owned();
        (dh_prev, dc_prev, dx)
    }

    pub fn parameters_into(&self, out: &mut Vec<f64>) {
        for (w, b) in [
            (&self.w_f, &self.b_f),
            (&self.w_i, &self.b_i),
            (&self.w_c, &self.b_c),
            (&self.w_o, &self.b_o),
        ] {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
    }

    pub fn set_parameters_from(&mut self, p: &[f64]) -> usize {
        let mut off = 0;
        for (w, b) in [
            (&mut self.w_f, &mut self.b_f),
            (&mut self.w_i, &mut self.b_i),
            (&mut self.w_c, &mut self.b_c),
            (&mut self.w_o, &mut self.b_o),
        ] {
            let nw = w.len();
            w.as_mut_slice().copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = b.len();
            b.as_mut_slice().copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
        off
    }

    pub fn save(&self, dir: &Path, prefix: &str, manifest: &mut Manifest) -> Result<()> {
        manifest.set(
            &format!("{prefix}.dims"),
            format!("{} {}", self.input_dim(), self.hidden_dim()),
        );
        for (name, w, b) in [
            ("f", &self.w_f, &self.b_f),
            ("i", &self.w_i, &self.b_i),
            ("c", &self.w_c, &self.b_c),
            ("o", &self.w_o, &self.b_o),
        ] {
            write_matrix(dir.join(format!("{prefix}_w_{name}.txt")), w)?;
            write_vector(dir.join(format!("{prefix}_b_{name}.txt")), b)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, prefix: &str, manifest: &Manifest) -> Result<Self> {
        let dims: Vec<usize> = manifest.get_list(&format!("{prefix}.dims"))?;
        let rd = |kind: &str, name: &str| -> Result<DMatrix<f64>> {
            read_matrix(dir.join(format!("{prefix}_{kind}_{name}.txt")))
        };
        let rb = |name: &str| read_vector(dir.join(format!("{prefix}_b_{name}.txt")));
        let cell = Self::new(
            rd("w", "f")?,
            rd("w", "i")?,
            rd("w", "c")?,
            rd("w", "o")?,
            rb("f")?,
            rb("i")?,
            rb("c")?,
            rb("o")?,
        )?;
        if dims != [cell.input_dim(), cell.hidden_dim()] {
            return Err(Error::Parse {
                path: dir.to_path_buf(),
                msg: format!("{prefix} dims do not match its weight files"),
            });
        }
        Ok(cell)
    }
}
