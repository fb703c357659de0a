//! Synthetic scenarios: coefficient `c(x)`, nonlinearity `q(s)`, and the
//! true initial condition built from labeled inclusions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;

/// Scalar nonlinearity `q(s)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    Zero,
    /// `s(1 - s)`
    Fisher,
    /// `-s(1 - sqrt|s|)`
    NegRoot,
    /// `s^2`
    Square,
    /// `-s^2`
    NegSquare,
    Custom(Expr),
}

impl Nonlinearity {
    /// Known labels map to the built-in forms; anything else is parsed as an
    /// expression in `s`.
    pub fn parse(label: &str) -> Result<Self> {
        Ok(match label.trim() {
            "zero" => Nonlinearity::Zero,
            "fisher" => Nonlinearity::Fisher,
            "neg_root" => Nonlinearity::NegRoot,
            "square" => Nonlinearity::Square,
            "neg_square" => Nonlinearity::NegSquare,
            other => Nonlinearity::Custom(Expr::parse(other)?),
        })
    }

    pub fn label(&self) -> String {
        match self {
            Nonlinearity::Zero => "zero".into(),
            Nonlinearity::Fisher => "fisher".into(),
            Nonlinearity::NegRoot => "neg_root".into(),
            Nonlinearity::Square => "square".into(),
            Nonlinearity::NegSquare => "neg_square".into(),
            Nonlinearity::Custom(e) => e.to_string(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Zero)
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Fisher => s * (1.0 - s),
            Nonlinearity::NegRoot => -s * (1.0 - s.abs().sqrt()),
            Nonlinearity::Square => s * s,
            Nonlinearity::NegSquare => -s * s,
            Nonlinearity::Custom(e) => e.eval(s),
        }
    }
}

impl Serialize for Nonlinearity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for Nonlinearity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Nonlinearity::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// `c(x)` on the whole forward box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coefficient {
    /// Smooth field with range about `[0.8, 1.25]` on `[-1, 1]^2`, tending to
    /// 1 away from the origin.
    #[serde(rename = "paper")]
    Peaks,
    Constant { value: f64 },
}

impl Coefficient {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            Coefficient::Constant { value } => value,
            Coefficient::Peaks => {
                1.0 + (3.0 * (1.0 - 3.0 * x).powi(2) * (-9.0 * x * x - (3.0 * y + 1.0).powi(2)).exp()
                    - 10.0 * (3.0 * x / 5.0 - 27.0 * x.powi(3) - 243.0 * y.powi(5)) * (-9.0 * x * x - 9.0 * y * y).exp()
                    - (-(3.0 * x + 1.0).powi(2) - 9.0 * y * y).exp() / 3.0)
                    / 30.0
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Disk { cx: f64, cy: f64, r: f64 },
    Ring { cx: f64, cy: f64, r_in: f64, r_out: f64 },
    /// Axis-aligned open rectangle with half-sizes `hx`, `hy`.
    Rect { cx: f64, cy: f64, hx: f64, hy: f64 },
    /// `(1 - rho^2 / r^2)^3` inside the disk, zero outside. C^2 and smooth
    /// enough for linear sanity runs.
    Bump { cx: f64, cy: f64, r: f64 },
}

impl Shape {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disk { cx, cy, r } | Shape::Bump { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) < r * r,
            Shape::Ring { cx, cy, r_in, r_out } => {
                let d = (x - cx).powi(2) + (y - cy).powi(2);
                r_in * r_in < d && d < r_out * r_out
            }
            Shape::Rect { cx, cy, hx, hy } => (x - cx).abs() < hx && (y - cy).abs() < hy,
        }
    }

    /// Profile in `[0, 1]`; 1 on the support for the piecewise-constant shapes.
    pub fn profile(&self, x: f64, y: f64) -> f64 {
        match *self {
            Shape::Bump { cx, cy, r } => {
                let t = ((x - cx).powi(2) + (y - cy).powi(2)) / (r * r);
                if t < 1.0 {
                    (1.0 - t).powi(3)
                } else {
                    0.0
                }
            }
            _ => {
                if self.contains(x, y) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Axis-aligned bounding box `(xmin, xmax, ymin, ymax)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            Shape::Disk { cx, cy, r } | Shape::Bump { cx, cy, r } | Shape::Ring { cx, cy, r_out: r, .. } => {
                (cx - r, cx + r, cy - r, cy + r)
            }
            Shape::Rect { cx, cy, hx, hy } => (cx - hx, cx + hx, cy - hy, cy + hy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    pub label: String,
    pub value: f64,
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub coefficient: Coefficient,
    pub q: Nonlinearity,
    pub inclusions: Vec<Inclusion>,
}

impl Scenario {
    /// True initial condition. Overlapping inclusions add.
    pub fn initial(&self, x: f64, y: f64) -> f64 {
        self.inclusions.iter().map(|inc| inc.value * inc.shape.profile(x, y)).sum()
    }

    /// Checks that every inclusion sits strictly inside `(-r, r)^2` and that
    /// `c` stays positive.
    pub fn validate(&self, half_width: f64) -> Result<()> {
        for (k, inc) in self.inclusions.iter().enumerate() {
            let (x0, x1, y0, y1) = inc.shape.bounds();
            if !(x0 > -half_width && x1 < half_width && y0 > -half_width && y1 < half_width) {
                return Err(Error::Config {
                    field: format!("scenario.inclusions[{k}]"),
                    msg: format!("`{}` is not strictly inside (-{half_width}, {half_width})^2", inc.label),
                });
            }
            if !inc.value.is_finite() {
                return Err(Error::Config { field: format!("scenario.inclusions[{k}].value"), msg: "not finite".into() });
            }
        }
        if let Coefficient::Constant { value } = self.coefficient {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config { field: "scenario.coefficient.value".into(), msg: format!("must be positive, got {value}") });
            }
        }
        Ok(())
    }

    pub fn builtin(name: &str) -> Option<Scenario> {
        let disk = |label: &str, value: f64, cx: f64, cy: f64, r: f64| Inclusion {
            label: label.into(),
            value,
            shape: Shape::Disk { cx, cy, r },
        };
        let s = match name {
            "test1" => Scenario {
                name: name.into(),
                coefficient: Coefficient::Peaks,
                q: Nonlinearity::Fisher,
                inclusions: vec![disk("disk", 8.0, 0.0, 0.3, 0.45)],
            },
            "test2" => Scenario {
                name: name.into(),
                coefficient: Coefficient::Peaks,
                q: Nonlinearity::NegRoot,
                inclusions: vec![
                    disk("upper_left", 9.0, -0.5, 0.5, 0.35),
                    disk("upper_right", 12.0, 0.5, 0.5, 0.35),
                    disk("lower_left", 10.0, -0.5, -0.5, 0.35),
                    disk("lower_right", 14.0, 0.5, -0.5, 0.35),
                ],
            },
            "test3" => Scenario {
                name: name.into(),
                coefficient: Coefficient::Peaks,
                q: Nonlinearity::Square,
                inclusions: vec![Inclusion {
                    label: "ring".into(),
                    value: 1.0,
                    shape: Shape::Ring { cx: 0.0, cy: 0.0, r_in: 0.2, r_out: 0.8 },
                }],
            },
            // max{|x|/4, 4|y -+ 0.6|} < 0.9 together with |x| < 0.8
            "test4" => Scenario {
                name: name.into(),
                coefficient: Coefficient::Peaks,
                q: Nonlinearity::NegSquare,
                inclusions: vec![
                    Inclusion { label: "upper_line".into(), value: 10.0, shape: Shape::Rect { cx: 0.0, cy: 0.6, hx: 0.8, hy: 0.225 } },
                    Inclusion { label: "lower_line".into(), value: 8.0, shape: Shape::Rect { cx: 0.0, cy: -0.6, hx: 0.8, hy: 0.225 } },
                ],
            },
            "zero-smoke" => Scenario { name: name.into(), coefficient: Coefficient::Peaks, q: Nonlinearity::Zero, inclusions: vec![] },
            "linear-smooth" => Scenario {
                name: name.into(),
                coefficient: Coefficient::Constant { value: 1.0 },
                q: Nonlinearity::Zero,
                inclusions: vec![Inclusion { label: "bump".into(), value: 1.0, shape: Shape::Bump { cx: 0.0, cy: 0.1, r: 0.6 } }],
            },
            _ => return None,
        };
        Some(s)
    }

    pub const BUILTINS: [&'static str; 6] = ["test1", "test2", "test3", "test4", "zero-smoke", "linear-smooth"];
}
