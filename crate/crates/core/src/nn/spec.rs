//! Layer specifications and their canonical one-line text form.

use std::fmt;
use std::str::FromStr;

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    /// `filters` kernels of `kh x kw`, stride 1, "same" zero padding.
    Conv2d { filters: usize, kh: usize, kw: usize },
    /// Convolution along the first (time) axis only; the last axis is channels.
    Conv1d { filters: usize, k: usize },
    BatchNorm,
    Relu,
    MaxPool2d { ph: usize, pw: usize },
    MaxPool1d { p: usize },
    GlobalAvgPool,
    Flatten,
    Dense { units: usize },
    Dropout { rate: f64 },
    Softmax,
    /// Squeeze 1x1 conv, then parallel 1x1 and 3x3 expand convs whose
    /// outputs are concatenated along channels (`2 * expand` channels).
    Fire { squeeze: usize, expand: usize },
}

impl LayerSpec {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |what: &str| Err(NnError::Spec(format!("{what} in `{self}`")));
        match *self {
            LayerSpec::Conv2d { filters, kh, kw } => {
                if filters == 0 || kh == 0 || kw == 0 {
                    return bad("zero-sized convolution");
                }
                if kh % 2 == 0 || kw % 2 == 0 {
                    return bad("even kernel size");
                }
            }
            LayerSpec::Conv1d { filters, k } => {
                if filters == 0 || k == 0 {
                    return bad("zero-sized convolution");
                }
                if k % 2 == 0 {
                    return bad("even kernel size");
                }
            }
            LayerSpec::MaxPool2d { ph, pw } if ph == 0 || pw == 0 => return bad("zero pool window"),
            LayerSpec::MaxPool1d { p: 0 } => return bad("zero pool window"),
            LayerSpec::Dense { units: 0 } => return bad("zero units"),
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                return bad("dropout rate outside [0, 1)")
            }
            LayerSpec::Fire { squeeze, expand } => {
                if squeeze == 0 || expand == 0 {
                    return bad("zero-sized fire module");
                }
                if squeeze >= 2 * expand {
                    return bad("squeeze width not below expand output");
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        self.validate()?;
        let rank_err = |want: usize| {
            Err(NnError::Shape(format!(
                "`{self}` expects a rank-{want} input, got {input:?}"
            )))
        };
        Ok(match *self {
            LayerSpec::Conv2d { filters, .. } => {
                if input.len() != 3 {
                    return rank_err(3);
                }
                vec![input[0], input[1], filters]
            }
            LayerSpec::Conv1d { filters, .. } => {
                if input.len() != 2 {
                    return rank_err(2);
                }
                vec![input[0], filters]
            }
            LayerSpec::BatchNorm | LayerSpec::Relu | LayerSpec::Dropout { .. } => {
                if input.is_empty() {
                    return rank_err(1);
                }
                input.to_vec()
            }
            LayerSpec::MaxPool2d { ph, pw } => {
                if input.len() != 3 {
                    return rank_err(3);
                }
                if ph > input[0] || pw > input[1] {
                    return Err(NnError::Shape(format!("`{self}` window larger than {input:?}")));
                }
                vec![input[0] / ph, input[1] / pw, input[2]]
            }
            LayerSpec::MaxPool1d { p } => {
                if input.len() != 2 {
                    return rank_err(2);
                }
                if p > input[0] {
                    return Err(NnError::Shape(format!("`{self}` window larger than {input:?}")));
                }
                vec![input[0] / p, input[1]]
            }
            LayerSpec::GlobalAvgPool => {
                if input.len() < 2 {
                    return rank_err(3);
                }
                vec![*input.last().unwrap()]
            }
            LayerSpec::Flatten => vec![input.iter().product()],
            LayerSpec::Dense { units } => {
                if input.len() != 1 {
                    return rank_err(1);
                }
                vec![units]
            }
            LayerSpec::Softmax => {
                if input.len() != 1 {
                    return rank_err(1);
                }
                input.to_vec()
            }
            LayerSpec::Fire { expand, .. } => {
                if input.len() != 3 {
                    return rank_err(3);
                }
                vec![input[0], input[1], 2 * expand]
            }
        })
    }

    /// Trainable parameter count for a per-sample input shape.
    pub fn param_count(&self, input: &[usize]) -> Result<usize, NnError> {
        let out = self.output_shape(input)?;
        let c_in = input.last().copied().unwrap_or(0);
        Ok(match *self {
            LayerSpec::Conv2d { filters, kh, kw } => filters * kh * kw * c_in + filters,
            LayerSpec::Conv1d { filters, k } => filters * k * c_in + filters,
            LayerSpec::BatchNorm => 2 * c_in,
            LayerSpec::Dense { units } => units * input[0] + units,
            LayerSpec::Fire { squeeze, expand } => {
                (squeeze * c_in + squeeze) + (expand * squeeze + expand) + (expand * 9 * squeeze + expand)
            }
            _ => {
                let _ = out;
                0
            }
        })
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Conv2d { filters, kh, kw } => write!(f, "conv2d {filters} {kh} {kw} same"),
            LayerSpec::Conv1d { filters, k } => write!(f, "conv1d {filters} {k} same"),
            LayerSpec::BatchNorm => f.write_str("bn"),
            LayerSpec::Relu => f.write_str("relu"),
            LayerSpec::MaxPool2d { ph, pw } => write!(f, "maxpool2d {ph} {pw}"),
            LayerSpec::MaxPool1d { p } => write!(f, "maxpool1d {p}"),
            LayerSpec::GlobalAvgPool => f.write_str("gap"),
            LayerSpec::Flatten => f.write_str("flatten"),
            LayerSpec::Dense { units } => write!(f, "dense {units}"),
            LayerSpec::Dropout { rate } => write!(f, "dropout {rate}"),
            LayerSpec::Softmax => f.write_str("softmax"),
            LayerSpec::Fire { squeeze, expand } => write!(f, "fire {squeeze} {expand}"),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tokens: Vec<&str> = s.split_whitespace().collect();
        let err = || NnError::Spec(format!("cannot parse layer `{}`", s.trim()));
        let num = |i: usize| -> Result<usize, NnError> {
            tokens.get(i).and_then(|t| t.parse().ok()).ok_or_else(err)
        };
        let arity = |n: usize| if tokens.len() == n { Ok(()) } else { Err(err()) };
        let (&head, _) = tokens.split_first().ok_or_else(err)?;
        let spec = match head {
            "conv2d" => {
                if tokens.len() == 5 && tokens[4] != "same" {
                    return Err(err());
                }
                if tokens.len() != 4 && tokens.len() != 5 {
                    return Err(err());
                }
                LayerSpec::Conv2d { filters: num(1)?, kh: num(2)?, kw: num(3)? }
            }
            "conv1d" => {
                if tokens.len() == 4 && tokens[3] != "same" {
                    return Err(err());
                }
                if tokens.len() != 3 && tokens.len() != 4 {
                    return Err(err());
                }
                LayerSpec::Conv1d { filters: num(1)?, k: num(2)? }
            }
            "bn" => arity(1).map(|_| LayerSpec::BatchNorm)?,
            "relu" => arity(1).map(|_| LayerSpec::Relu)?,
            "maxpool2d" => {
                arity(3)?;
                LayerSpec::MaxPool2d { ph: num(1)?, pw: num(2)? }
            }
            "maxpool1d" => {
                arity(2)?;
                LayerSpec::MaxPool1d { p: num(1)? }
            }
            "gap" => arity(1).map(|_| LayerSpec::GlobalAvgPool)?,
            "flatten" => arity(1).map(|_| LayerSpec::Flatten)?,
            "dense" => {
                arity(2)?;
                LayerSpec::Dense { units: num(1)? }
            }
            "dropout" => {
                arity(2)?;
                LayerSpec::Dropout { rate: tokens[1].parse().map_err(|_| err())? }
            }
            "softmax" => arity(1).map(|_| LayerSpec::Softmax)?,
            "fire" => {
                arity(3)?;
                LayerSpec::Fire { squeeze: num(1)?, expand: num(2)? }
            }
            _ => return Err(err()),
        };
        spec.validate()?;
        Ok(spec)
    }
}
