//! Expression tree shared by the parser, evaluator, and differentiator.


/// Binary operators, ordered here by increasing precedence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub(crate) fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    /// Binding strength used by both the parser and the printer.
    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

/// Intrinsic functions callable from expression source.
///
/// `pow(x, y)` is accepted by the parser but normalized to [`BinOp::Pow`],
/// so it never appears here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Sign,
    Min,
    Max,
}

impl Func {
    pub(crate) fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub(crate) fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }
}

/// Expression node. Variables are indices into the owning expression's
/// declared-variable list.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    /// Print precedence. Negative literals print like a negation, so they
    /// carry the unary-minus precedence.
    fn print_prec(&self) -> u8 {
        match self {
            Node::Num(v) if *v < 0.0 || v.is_sign_negative() => 3,
            Node::Num(_) | Node::Var(_) | Node::Call(..) => 5,
            Node::Neg(_) => 3,
            Node::Bin(op, ..) => op.precedence(),
        }
    }

    pub(crate) fn fmt_with(&self, vars: &[String], out: &mut String) {
        match self {
            Node::Num(v) => out.push_str(&format!("{v:?}")),
            Node::Var(i) => out.push_str(&vars[*i]),
            Node::Neg(inner) => {
                out.push('-');
                // A literal directly after unary minus would re-lex as a
                // negative literal; parenthesize to preserve the tree shape.
                let needs_parens = matches!(**inner, Node::Num(_)) || inner.print_prec() < 3;
                if needs_parens {
                    out.push('(');
                    inner.fmt_with(vars, out);
                    out.push(')');
                } else {
                    inner.fmt_with(vars, out);
                }
            }
            Node::Bin(op, lhs, rhs) => {
                let prec = op.precedence();
                // `^` is right-associative; the other operators associate
                // left, so an equal-precedence right child needs parens to
                // re-parse with the same shape.
                let (lhs_min, rhs_min) = match op {
                    BinOp::Pow => (prec + 1, prec),
                    _ => (prec, prec + 1),
                };
                Self::fmt_child(lhs, vars, lhs_min, out);
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                Self::fmt_child(rhs, vars, rhs_min, out);
            }
            Node::Call(func, args) => {
                out.push_str(func.name());
                out.push('(');
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    arg.fmt_with(vars, out);
                }
                out.push(')');
            }
        }
    }

    fn fmt_child(child: &Node, vars: &[String], min_prec: u8, out: &mut String) {
        if child.print_prec() < min_prec {
            out.push('(');
            child.fmt_with(vars, out);
            out.push(')');
        } else {
            child.fmt_with(vars, out);
        }
    }
}
