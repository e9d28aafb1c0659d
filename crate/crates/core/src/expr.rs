//! Text expressions in `x` and `y` (world millimetres) for map generation.

use evalexpr::{
    build_operator_tree, error::EvalexprResultValue, Context, DefaultNumericTypes, EvalexprError, EvalexprResult, Node,
    Value,
};

use crate::error::{Error, Result};
use crate::map::{ImplicitCurveSpec, RegionInequalitySpec};

/// A compiled scalar expression `f(x, y)`.
#[derive(Debug, Clone)]
pub struct Expression {
    source: String,
    tree: Node<DefaultNumericTypes>,
}

struct XyContext {
    x: Value<DefaultNumericTypes>,
    y: Value<DefaultNumericTypes>,
}

impl Context for XyContext {
    type NumericTypes = DefaultNumericTypes;

    fn get_value(&self, identifier: &str) -> Option<&Value<DefaultNumericTypes>> {
        match identifier {
            "x" => Some(&self.x),
            "y" => Some(&self.y),
            _ => None,
        }
    }

    /// Short aliases for the common `math::` builtins.
    fn call_function(
        &self,
        identifier: &str,
        argument: &Value<DefaultNumericTypes>,
    ) -> EvalexprResultValue<DefaultNumericTypes> {
        let unary: Option<fn(f64) -> f64> = match identifier {
            "sqrt" => Some(f64::sqrt),
            "abs" => Some(f64::abs),
            "sin" => Some(f64::sin),
            "cos" => Some(f64::cos),
            "tan" => Some(f64::tan),
            "exp" => Some(f64::exp),
            "ln" => Some(f64::ln),
            _ => None,
        };
        if let Some(f) = unary {
            return Ok(Value::Float(f(argument.as_number()?)));
        }
        let binary: Option<fn(f64, f64) -> f64> = match identifier {
            "atan2" => Some(f64::atan2),
            "hypot" => Some(f64::hypot),
            "min" => Some(f64::min),
            "max" => Some(f64::max),
            _ => None,
        };
        match binary {
            Some(f) => {
                let args = argument.as_fixed_len_tuple(2)?;
                Ok(Value::Float(f(args[0].as_number()?, args[1].as_number()?)))
            }
            None => Err(EvalexprError::FunctionIdentifierNotFound(identifier.to_string())),
        }
    }

    fn are_builtin_functions_disabled(&self) -> bool {
        false
    }

    fn set_builtin_functions_disabled(&mut self, _disabled: bool) -> EvalexprResult<(), DefaultNumericTypes> {
        Err(EvalexprError::BuiltinFunctionsCannotBeDisabled)
    }
}

impl Expression {
    pub fn parse(source: &str) -> Result<Self> {
        let tree = build_operator_tree::<DefaultNumericTypes>(source)
            .map_err(|e| Error::Expression(format!("{source:?}: {e}")))?;
        let expr = Self {
            source: source.to_string(),
            tree,
        };
        // Surface unknown identifiers and type errors at parse time.
        expr.try_eval(0.5, 0.5)?;
        Ok(expr)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn try_eval(&self, x: f64, y: f64) -> Result<f64> {
        let ctx = XyContext {
            x: Value::Float(x),
            y: Value::Float(y),
        };
        self.tree
            .eval_number_with_context(&ctx)
            .map_err(|e| Error::Expression(format!("{:?}: {e}", self.source)))
    }

    /// Evaluates, mapping evaluation errors to NaN so generators report the
    /// offending cell.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.try_eval(x, y).unwrap_or(f64::NAN)
    }
}

impl ImplicitCurveSpec {
    /// Trajectory restriction from a text expression, e.g. `x^2 + y^2 - 250^2`.
    pub fn from_expression(source: &str, trajectory_width: f64) -> Result<Self> {
        let e = Expression::parse(source)?;
        ImplicitCurveSpec::new(move |x, y| e.eval(x, y), trajectory_width)
    }
}

impl RegionInequalitySpec {
    /// Area restriction from one expression per component.
    pub fn from_expressions<S: AsRef<str>>(sources: &[S]) -> Result<Self> {
        let mut spec = RegionInequalitySpec::new();
        for s in sources {
            let e = Expression::parse(s.as_ref())?;
            spec.push_boxed(Box::new(move |x, y| e.eval(x, y)));
        }
        Ok(spec)
    }
}
