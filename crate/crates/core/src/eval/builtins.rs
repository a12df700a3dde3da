//! Library functions callable from expressions.

use crate::special;
use crate::value::Value;

use super::ErrorKind;

/// Cotangent, secant and cosecant are undefined this close to a pole.
const POLE_EPS: f64 = 1e-12;

pub fn is_builtin(name: &str) -> bool {
    arity(name).is_some()
}

/// Accepted argument counts as `(min, max)`; `None` max means variadic.
pub fn arity(name: &str) -> Option<(usize, Option<usize>)> {
    Some(match name {
        "sin" | "cos" | "tan" | "cot" | "sec" | "csc" | "round" | "floor" | "ceil" | "abs" | "sign" | "sqrt"
        | "exp" | "erf" | "gamma" => (1, Some(1)),
        "div" | "fld" | "rem" | "mod" | "root" | "hypot" | "pow" => (2, Some(2)),
        "log" => (1, Some(2)),
        "gcd" | "lcm" | "max" | "min" => (1, None),
        _ => return None,
    })
}

fn domain(f: &str, arg: &Value) -> ErrorKind {
    ErrorKind::DomainError { function: f.to_string(), argument: arg.to_string() }
}

fn real(f: &str, v: &Value) -> Result<f64, ErrorKind> {
    match v {
        Value::Null => Err(ErrorKind::NullOperand),
        Value::Inf | Value::NegInf => Err(ErrorKind::InfArithmetic),
        _ => v.as_f64().ok_or_else(|| domain(f, v)),
    }
}

fn integer(f: &str, v: &Value) -> Result<i64, ErrorKind> {
    match v {
        Value::Integer(i) => Ok(*i),
        Value::Real(x) if x.fract() == 0.0 && x.abs() < 9.0e15 => Ok(*x as i64),
        _ => {
            real(f, v)?;
            Err(domain(f, v))
        }
    }
}

fn to_integer(f: &str, x: f64) -> Result<Value, ErrorKind> {
    if x.is_finite() && x.abs() < 9.2e18 {
        Ok(Value::Integer(x as i64))
    } else {
        Err(domain(f, &Value::Real(x)))
    }
}

fn checked(f: &str, arg: &Value, x: f64) -> Result<Value, ErrorKind> {
    if x.is_nan() {
        Err(domain(f, arg))
    } else if x.is_infinite() {
        Err(ErrorKind::NumericOverflow)
    } else {
        Ok(Value::Real(x))
    }
}

fn gcd2(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.unsigned_abs(), b.unsigned_abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a as i64
}

pub fn call(name: &str, args: &[Value]) -> Result<Value, ErrorKind> {
    let a0 = args.first().cloned().unwrap_or(Value::Null);
    match name {
        "sin" => checked(name, &a0, real(name, &a0)?.sin()),
        "cos" => checked(name, &a0, real(name, &a0)?.cos()),
        "tan" => checked(name, &a0, real(name, &a0)?.tan()),
        "cot" | "csc" => {
            let x = real(name, &a0)?;
            if x.sin().abs() < POLE_EPS {
                return Err(domain(name, &a0));
            }
            let r = if name == "cot" { x.cos() / x.sin() } else { 1.0 / x.sin() };
            checked(name, &a0, r)
        }
        "sec" => {
            let x = real(name, &a0)?;
            if x.cos().abs() < POLE_EPS {
                return Err(domain(name, &a0));
            }
            checked(name, &a0, 1.0 / x.cos())
        }
        "round" => match a0 {
            Value::Integer(_) => Ok(a0),
            _ => to_integer(name, real(name, &a0)?.round()),
        },
        "floor" => match a0 {
            Value::Integer(_) => Ok(a0),
            _ => to_integer(name, real(name, &a0)?.floor()),
        },
        "ceil" => match a0 {
            Value::Integer(_) => Ok(a0),
            _ => to_integer(name, real(name, &a0)?.ceil()),
        },
        "div" | "fld" | "rem" | "mod" => {
            let x = integer(name, &args[0])?;
            let y = integer(name, &args[1])?;
            if y == 0 {
                return Err(ErrorKind::DivisionByZero);
            }
            let q = x.checked_div(y).ok_or(ErrorKind::NumericOverflow)?;
            let r = x - q * y;
            let (fq, fr) = if r != 0 && (r < 0) != (y < 0) { (q - 1, r + y) } else { (q, r) };
            Ok(Value::Integer(match name {
                "div" => q,
                "rem" => r,
                "fld" => fq,
                _ => fr,
            }))
        }
        "gcd" | "lcm" => {
            let xs = args.iter().map(|v| integer(name, v)).collect::<Result<Vec<_>, _>>()?;
            let mut acc = xs[0].abs();
            for &x in &xs[1..] {
                acc = if name == "gcd" {
                    gcd2(acc, x)
                } else if acc == 0 || x == 0 {
                    0
                } else {
                    (acc / gcd2(acc, x)).checked_mul(x.abs()).ok_or(ErrorKind::NumericOverflow)?
                };
            }
            Ok(Value::Integer(if xs[0] < 0 { -acc } else { acc }))
        }
        "abs" => match a0 {
            Value::Integer(i) => i.checked_abs().map(Value::Integer).ok_or(ErrorKind::NumericOverflow),
            Value::Inf | Value::NegInf => Ok(Value::Inf),
            _ => Ok(Value::Real(real(name, &a0)?.abs())),
        },
        "sign" => match a0 {
            Value::Inf => Ok(Value::Integer(1)),
            Value::NegInf => Ok(Value::Integer(-1)),
            _ => {
                let x = real(name, &a0)?;
                Ok(Value::Integer(if x > 0.0 {
                    1
                } else if x < 0.0 {
                    -1
                } else {
                    0
                }))
            }
        },
        "sqrt" => {
            let x = real(name, &a0)?;
            if x < 0.0 {
                return Err(domain(name, &a0));
            }
            Ok(Value::Real(x.sqrt()))
        }
        "root" => {
            let x = real(name, &args[0])?;
            let b = real(name, &args[1])?;
            if b == 0.0 {
                return Err(domain(name, &args[1]));
            }
            if x < 0.0 {
                let odd = b.fract() == 0.0 && (b as i64) % 2 != 0;
                if !odd {
                    return Err(domain(name, &args[0]));
                }
                return checked(name, &args[0], -(-x).powf(1.0 / b));
            }
            checked(name, &args[0], x.powf(1.0 / b))
        }
        "hypot" => checked(name, &a0, real(name, &args[0])?.hypot(real(name, &args[1])?)),
        "pow" => {
            if let (Value::Integer(x), Value::Integer(y)) = (&args[0], &args[1]) {
                if *y >= 0 {
                    let e = u32::try_from(*y).map_err(|_| ErrorKind::NumericOverflow)?;
                    return x.checked_pow(e).map(Value::Integer).ok_or(ErrorKind::NumericOverflow);
                }
            }
            let x = real(name, &args[0])?;
            let y = real(name, &args[1])?;
            if x == 0.0 && y < 0.0 {
                return Err(ErrorKind::DivisionByZero);
            }
            checked(name, &args[0], x.powf(y))
        }
        "exp" => checked(name, &a0, real(name, &a0)?.exp()),
        "log" => {
            let (base, x) = if args.len() == 2 { (Some(&args[0]), &args[1]) } else { (None, &args[0]) };
            let xv = real(name, x)?;
            if xv <= 0.0 {
                return Err(domain(name, x));
            }
            match base {
                None => Ok(Value::Real(xv.ln())),
                Some(b) => {
                    let bv = real(name, b)?;
                    if bv <= 0.0 || bv == 1.0 {
                        return Err(domain(name, b));
                    }
                    Ok(Value::Real(xv.ln() / bv.ln()))
                }
            }
        }
        "erf" => Ok(Value::Real(special::erf(real(name, &a0)?))),
        "gamma" => special::gamma(real(name, &a0)?)
            .map(|g| checked(name, &a0, g))
            .unwrap_or_else(|| Err(domain(name, &a0))),
        "max" | "min" => {
            let mut best = args[0].clone();
            for v in args {
                if v.is_null() {
                    return Err(ErrorKind::NullOperand);
                }
                let ord = v.compare_numbers(&best).ok_or_else(|| domain(name, v))?;
                let better = if name == "max" { ord.is_gt() } else { ord.is_lt() };
                if better {
                    best = v.clone();
                }
            }
            if best.is_null() {
                return Err(ErrorKind::NullOperand);
            }
            if !best.is_number() {
                return Err(domain(name, &best));
            }
            Ok(best)
        }
        _ => Err(ErrorKind::UnknownFunction(name.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn int(name: &str, args: &[i64]) -> i64 {
        let args: Vec<Value> = args.iter().map(|&a| Value::Integer(a)).collect();
        match call(name, &args).unwrap() {
            Value::Integer(i) => i,
            v => panic!("{v:?}"),
        }
    }

    fn r(name: &str, x: f64) -> Value {
        call(name, &[Value::Real(x)]).unwrap()
    }

    #[test]
    fn rounding_examples() {
        assert_eq!(r("round", 2.5), Value::Integer(3));
        assert_eq!(r("round", 0.4), Value::Integer(0));
        assert_eq!(r("round", -2.5), Value::Integer(-3));
        assert_eq!(r("floor", 2.5), Value::Integer(2));
        assert_eq!(r("ceil", 2.5), Value::Integer(3));
        assert_eq!(r("floor", -2.5), Value::Integer(-3));
    }

    #[test]
    fn division_family_examples() {
        assert_eq!(int("rem", &[7, -2]), 1);
        assert_eq!(int("div", &[7, -2]), -3);
        assert_eq!(int("fld", &[7, -2]), -4);
        assert_eq!(int("mod", &[7, -2]), -1);
        assert_eq!(call("div", &[Value::Integer(1), Value::Integer(0)]), Err(ErrorKind::DivisionByZero));
        assert!(matches!(call("div", &[Value::Real(1.5), Value::Integer(1)]), Err(ErrorKind::DomainError { .. })));
    }

    #[test]
    fn division_identities_on_grid() {
        for x in -9..=9 {
            for y in (-9..=9).filter(|&y| y != 0) {
                let (d, r) = (int("div", &[x, y]), int("rem", &[x, y]));
                let (f, m) = (int("fld", &[x, y]), int("mod", &[x, y]));
                assert_eq!(d * y + r, x);
                assert_eq!(f * y + m, x);
                assert!(r == 0 || r.signum() == x.signum());
                assert!(m == 0 || m.signum() == y.signum());
                // brute force: rem is the unique remainder with |r| < |y| and sign of x
                let brute = (-9..=9).find(|q| {
                    let rr = x - q * y;
                    rr.abs() < y.abs() && (rr == 0 || rr.signum() == x.signum())
                });
                assert_eq!(Some(d), brute);
            }
        }
    }

    #[test]
    fn gcd_lcm() {
        assert_eq!(int("gcd", &[12, 18]), 6);
        assert_eq!(int("gcd", &[-12, 18]), -6);
        assert_eq!(int("lcm", &[4, 6]), 12);
        assert_eq!(int("lcm", &[-4, 6]), -12);
        assert_eq!(int("gcd", &[12, 18, 8]), 2);
        for a in 1..=30 {
            for b in 1..=30 {
                assert_eq!(int("gcd", &[a, b]) * int("lcm", &[a, b]), a * b);
            }
        }
    }

    #[test]
    fn misc() {
        assert_eq!(call("hypot", &[Value::Integer(3), Value::Integer(4)]).unwrap(), Value::Real(5.0));
        let big = call("hypot", &[Value::Real(3e200), Value::Real(4e200)]).unwrap().as_f64().unwrap();
        assert!((big / 5e200 - 1.0).abs() < 1e-15);
        assert_eq!(r("sign", -0.3), Value::Integer(-1));
        assert!(matches!(call("sqrt", &[Value::Integer(-1)]), Err(ErrorKind::DomainError { .. })));
        assert!(matches!(call("log", &[Value::Integer(0)]), Err(ErrorKind::DomainError { .. })));
        assert_eq!(call("log", &[Value::Integer(2), Value::Integer(8)]).unwrap(), Value::Real(3.0));
        assert!(matches!(call("gamma", &[Value::Integer(-2)]), Err(ErrorKind::DomainError { .. })));
        assert!(matches!(call("cot", &[Value::Real(0.0)]), Err(ErrorKind::DomainError { .. })));
        assert!(matches!(call("sec", &[Value::Real(std::f64::consts::FRAC_PI_2)]), Err(ErrorKind::DomainError { .. })));
        assert_eq!(call("root", &[Value::Integer(-8), Value::Integer(3)]).unwrap(), Value::Real(-2.0));
        assert!(matches!(call("root", &[Value::Integer(-8), Value::Integer(2)]), Err(ErrorKind::DomainError { .. })));
        assert_eq!(call("max", &[Value::Integer(1), Value::Inf, Value::Real(2.0)]).unwrap(), Value::Inf);
        assert_eq!(call("min", &[Value::Integer(1), Value::NegInf]).unwrap(), Value::NegInf);
        assert_eq!(call("pow", &[Value::Integer(2), Value::Integer(10)]).unwrap(), Value::Integer(1024));
        let Value::Real(e3) = r("erf", 3.0) else { panic!() };
        assert!((e3 - 0.9999779095).abs() < 1e-6);
    }

    #[test]
    fn gamma_factorials() {
        let mut fact = 1.0;
        for n in 1..=10 {
            if n > 1 {
                fact *= (n - 1) as f64;
            }
            let Value::Real(g) = call("gamma", &[Value::Integer(n)]).unwrap() else { panic!() };
            assert!(((g - fact) / fact).abs() < 1e-9, "gamma({n}) = {g}");
        }
    }

    proptest! {
        #[test]
        fn sign_of_gcd_follows_first_argument(a in -1000i64..1000, b in -1000i64..1000) {
            let g = int("gcd", &[a, b]);
            let l = int("lcm", &[a, b]);
            prop_assert!(a == 0 || g.signum() == a.signum());
            prop_assert!(l == 0 || l.signum() == a.signum());
            prop_assert_eq!((g * l).abs(), (a * b).abs());
        }
    }
}
