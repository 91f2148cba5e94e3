//! Three-layer perceptron: tansig hidden layer, linear output layer, and the
//! analytic Jacobian of the per-sample, per-output residuals.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Hidden activation `f(x) = 2 / (1 + e^{-2x}) - 1`, i.e. `tanh(x)`.
pub fn activation_hidden(x: f64) -> f64 {
    2.0 / (1.0 + (-2.0 * x).exp()) - 1.0
}

/// Derivative expressed through the activation value `y = f(x)`.
pub fn activation_hidden_deriv(y: f64) -> f64 {
    1.0 - y * y
}

/// Hidden-layer nonlinearity. `Identity` exists so that tests can reduce the
/// network to an affine model with a closed-form solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HiddenActivation {
    #[default]
    Tansig,
    Identity,
}

impl HiddenActivation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            HiddenActivation::Tansig => activation_hidden(x),
            HiddenActivation::Identity => x,
        }
    }

    #[inline]
    fn deriv_from_value(self, y: f64) -> f64 {
        match self {
            HiddenActivation::Tansig => activation_hidden_deriv(y),
            HiddenActivation::Identity => 1.0,
        }
    }

    fn name(self) -> &'static str {
        match self {
            HiddenActivation::Tansig => "tansig",
            HiddenActivation::Identity => "identity",
        }
    }
}

/// Layer sizes `input-hidden-output`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Dims {
    pub fn new(input: usize, hidden: usize, output: usize) -> Result<Self> {
        if input == 0 || hidden == 0 || output == 0 {
            return Err(Error::invalid(format!(
                "layer sizes must be positive, got {input}-{hidden}-{output}"
            )));
        }
        Ok(Dims {
            input,
            hidden,
            output,
        })
    }

    /// Total parameter count `P`.
    pub fn num_params(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    /// Offset of the first output-layer parameter (`w2[0][0]`) in the flat vector.
    pub fn output_layer_offset(&self) -> usize {
        self.hidden * self.input + self.hidden
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}-{}", self.input, self.hidden, self.output)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Matrix,
    pub b1: Vector,
    pub w2: Matrix,
    pub b2: Vector,
    pub activation: HiddenActivation,
}

impl MlpParams {
    pub fn new(w1: Matrix, b1: Vector, w2: Matrix, b2: Vector) -> Result<Self> {
        let p = MlpParams {
            w1,
            b1,
            w2,
            b2,
            activation: HiddenActivation::Tansig,
        };
        p.check()?;
        Ok(p)
    }

    pub fn zeros(dims: Dims) -> Self {
        MlpParams {
            w1: Matrix::zeros(dims.hidden, dims.input),
            b1: Vector::zeros(dims.hidden),
            w2: Matrix::zeros(dims.output, dims.hidden),
            b2: Vector::zeros(dims.output),
            activation: HiddenActivation::Tansig,
        }
    }

    pub fn with_activation(mut self, activation: HiddenActivation) -> Self {
        self.activation = activation;
        self
    }

    fn check(&self) -> Result<()> {
        let h = self.w1.rows();
        let mismatch = |op, expected, found| Error::DimensionMismatch {
            op,
            expected,
            found,
        };
        if self.b1.len() != h {
            return Err(mismatch("MlpParams b1", h, self.b1.len()));
        }
        if self.w2.cols() != h {
            return Err(mismatch("MlpParams w2 cols", h, self.w2.cols()));
        }
        if self.b2.len() != self.w2.rows() {
            return Err(mismatch("MlpParams b2", self.w2.rows(), self.b2.len()));
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        Dims {
            input: self.w1.cols(),
            hidden: self.w1.rows(),
            output: self.w2.rows(),
        }
    }

    /// Serialises as `w1` row-major, `b1`, `w2` row-major, `b2`.
    pub fn flatten(&self) -> Vector {
        let mut out = Vec::with_capacity(self.dims().num_params());
        out.extend_from_slice(self.w1.as_slice());
        out.extend_from_slice(self.b1.as_slice());
        out.extend_from_slice(self.w2.as_slice());
        out.extend_from_slice(self.b2.as_slice());
        Vector::new(out).expect("parameters are finite by construction")
    }

    pub fn unflatten(dims: Dims, x: &Vector) -> Result<Self> {
        if x.len() != dims.num_params() {
            return Err(Error::DimensionMismatch {
                op: "unflatten",
                expected: dims.num_params(),
                found: x.len(),
            });
        }
        let s = x.as_slice();
        let (w1, rest) = s.split_at(dims.hidden * dims.input);
        let (b1, rest) = rest.split_at(dims.hidden);
        let (w2, b2) = rest.split_at(dims.output * dims.hidden);
        MlpParams::new(
            Matrix::new(dims.hidden, dims.input, w1.to_vec())?,
            Vector::new(b1.to_vec())?,
            Matrix::new(dims.output, dims.hidden, w2.to_vec())?,
            Vector::new(b2.to_vec())?,
        )
    }

    /// Same as [`unflatten`](Self::unflatten) but keeps this network's activation.
    pub fn with_flat(&self, x: &Vector) -> Result<Self> {
        Ok(Self::unflatten(self.dims(), x)?.with_activation(self.activation))
    }

    fn hidden_into(&self, input: &[f64], hidden: &mut [f64]) {
        for (q, h) in hidden.iter_mut().enumerate() {
            let z: f64 = self.w1.row(q).iter().zip(input).map(|(w, u)| w * u).sum::<f64>()
                + self.b1[q];
            *h = self.activation.apply(z);
        }
    }

    fn output_into(&self, hidden: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.w2.row(j).iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>() + self.b2[j];
        }
    }

    /// Returns `(output, hidden activations)` for one input window.
    pub fn forward(&self, input: &Vector) -> Result<(Vector, Vector)> {
        let dims = self.dims();
        if input.len() != dims.input {
            return Err(Error::DimensionMismatch {
                op: "forward",
                expected: dims.input,
                found: input.len(),
            });
        }
        let mut hidden = vec![0.0; dims.hidden];
        self.hidden_into(input.as_slice(), &mut hidden);
        let mut out = vec![0.0; dims.output];
        self.output_into(&hidden, &mut out);
        Ok((Vector::new(out)?, Vector::new(hidden)?))
    }

    /// Outputs for every input row, as an `N × k` matrix.
    pub fn predict(&self, inputs: &Matrix) -> Result<Matrix> {
        let dims = self.dims();
        if inputs.cols() != dims.input {
            return Err(Error::DimensionMismatch {
                op: "predict",
                expected: dims.input,
                found: inputs.cols(),
            });
        }
        let mut hidden = vec![0.0; dims.hidden];
        let mut out = Vec::with_capacity(inputs.rows() * dims.output);
        let mut buf = vec![0.0; dims.output];
        for i in 0..inputs.rows() {
            self.hidden_into(inputs.row(i), &mut hidden);
            self.output_into(&hidden, &mut buf);
            out.extend_from_slice(&buf);
        }
        Matrix::new(inputs.rows(), dims.output, out)
    }

    fn check_data(&self, data: &WindowedDataset, op: &'static str) -> Result<()> {
        let dims = self.dims();
        if data.input_dim() != dims.input {
            return Err(Error::DimensionMismatch {
                op,
                expected: dims.input,
                found: data.input_dim(),
            });
        }
        if data.output_dim() != dims.output {
            return Err(Error::DimensionMismatch {
                op,
                expected: dims.output,
                found: data.output_dim(),
            });
        }
        Ok(())
    }

    /// Residuals `prediction - target`, sample-major then output index.
    pub fn error_vector(&self, data: &WindowedDataset) -> Result<Vector> {
        self.check_data(data, "error_vector")?;
        let pred = self.predict(data.inputs())?;
        Vector::new(
            pred.as_slice()
                .iter()
                .zip(data.targets().as_slice())
                .map(|(y, t)| y - t)
                .collect(),
        )
    }

    /// `(N·k) × P` Jacobian of [`error_vector`](Self::error_vector) with
    /// respect to the flattened parameters.
    pub fn jacobian(&self, data: &WindowedDataset) -> Result<Matrix> {
        self.check_data(data, "jacobian")?;
        let dims = self.dims();
        let (m, h, k) = (dims.input, dims.hidden, dims.output);
        let p = dims.num_params();
        let b1_off = h * m;
        let w2_off = dims.output_layer_offset();
        let b2_off = w2_off + k * h;

        let rows = data.len() * k;
        let mut jac = Matrix::zeros(rows, p);
        let mut hidden = vec![0.0; h];
        let mut slope = vec![0.0; h];
        for i in 0..data.len() {
            let u = data.inputs().row(i);
            self.hidden_into(u, &mut hidden);
            for (s, &y) in slope.iter_mut().zip(&hidden) {
                *s = self.activation.deriv_from_value(y);
            }
            for j in 0..k {
                let row = jac.row_mut(i * k + j);
                let w2j = self.w2.row(j);
                for q in 0..h {
                    let g = w2j[q] * slope[q];
                    let w1_row = &mut row[q * m..(q + 1) * m];
                    for (c, &ul) in w1_row.iter_mut().zip(u) {
                        *c = g * ul;
                    }
                    row[b1_off + q] = g;
                }
                row[w2_off + j * h..w2_off + (j + 1) * h].copy_from_slice(&hidden);
                row[b2_off + j] = 1.0;
            }
        }
        if jac.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow("non-finite Jacobian entry".into()));
        }
        Ok(jac)
    }

    /// Plain-text model: a `dims` line, an `activation` line, then one line
    /// per parameter block with 17 significant digits per value.
    pub fn to_text(&self) -> String {
        let d = self.dims();
        let mut s = format!("dims {} {} {}\n", d.input, d.hidden, d.output);
        let _ = writeln!(s, "activation {}", self.activation.name());
        for (name, vals) in [
            ("w1", self.w1.as_slice()),
            ("b1", self.b1.as_slice()),
            ("w2", self.w2.as_slice()),
            ("b2", self.b2.as_slice()),
        ] {
            s.push_str(name);
            for v in vals {
                let _ = write!(s, " {v:.16e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut dims = None;
        let mut activation = HiddenActivation::Tansig;
        let mut blocks: [Option<Vec<f64>>; 4] = [None, None, None, None];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let mut parts = raw.split_whitespace();
            let key = parts.next().unwrap_or_default();
            match key {
                "dims" => {
                    let v: Vec<usize> = parts
                        .map(|t| t.parse().map_err(|_| Error::parse(line, format!("bad size `{t}`"))))
                        .collect::<Result<_>>()?;
                    if v.len() != 3 {
                        return Err(Error::parse(line, "dims needs three sizes"));
                    }
                    dims = Some(Dims::new(v[0], v[1], v[2]).map_err(|e| Error::parse(line, e.to_string()))?);
                }
                "activation" => {
                    activation = match parts.next() {
                        Some("tansig") => HiddenActivation::Tansig,
                        Some("identity") => HiddenActivation::Identity,
                        other => {
                            return Err(Error::parse(line, format!("unknown activation {other:?}")))
                        }
                    }
                }
                "w1" | "b1" | "w2" | "b2" => {
                    let slot = ["w1", "b1", "w2", "b2"].iter().position(|k| *k == key).unwrap();
                    let v: Vec<f64> = parts
                        .map(|t| t.parse().map_err(|_| Error::parse(line, format!("bad number `{t}`"))))
                        .collect::<Result<_>>()?;
                    blocks[slot] = Some(v);
                }
                other => return Err(Error::parse(line, format!("unknown key `{other}`"))),
            }
        }
        let dims = dims.ok_or_else(|| Error::parse(0, "missing dims line"))?;
        let mut flat = Vec::with_capacity(dims.num_params());
        for (name, block) in ["w1", "b1", "w2", "b2"].iter().zip(blocks) {
            flat.extend(block.ok_or_else(|| Error::parse(0, format!("missing block {name}")))?);
        }
        Ok(MlpParams::unflatten(dims, &Vector::new(flat)?)?.with_activation(activation))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
