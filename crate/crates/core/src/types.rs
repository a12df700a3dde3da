//! Semantic types and the subtype relation.

use std::fmt;

use crate::ast::{BuiltinInterface, PrimKind, TypeExpr};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SemType {
    Primitive(PrimKind),
    Mathematic(PrimKind),
    Class(String),
    Interface(String),
    Array(Box<SemType>),
}

impl SemType {
    pub const REAL: SemType = SemType::Mathematic(PrimKind::Real);
    pub const INTEGER: SemType = SemType::Mathematic(PrimKind::Integer);
    pub const BOOLEAN: SemType = SemType::Mathematic(PrimKind::Boolean);

    pub fn interface(i: BuiltinInterface) -> SemType {
        SemType::Interface(i.name().to_string())
    }

    /// Converts a written type; `is_interface` decides whether a user name
    /// denotes an interface or a class.
    pub fn from_type_expr(t: &TypeExpr, is_interface: &dyn Fn(&str) -> bool) -> SemType {
        match t {
            TypeExpr::Primitive(p) => SemType::Primitive(*p),
            TypeExpr::Mathematic(p) => SemType::Mathematic(*p),
            TypeExpr::Interface(i) => SemType::interface(*i),
            TypeExpr::Named(n) if is_interface(n) => SemType::Interface(n.clone()),
            TypeExpr::Named(n) => SemType::Class(n.clone()),
            TypeExpr::Array(e) => SemType::Array(Box::new(SemType::from_type_expr(e, is_interface))),
        }
    }

    /// Scalar kind of primitive and mathematic types.
    pub fn prim(&self) -> Option<PrimKind> {
        match self {
            SemType::Primitive(p) | SemType::Mathematic(p) => Some(*p),
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.prim(), Some(PrimKind::Integer | PrimKind::Real))
    }

    pub fn is_boolean(&self) -> bool {
        self.prim() == Some(PrimKind::Boolean)
    }

    /// Primitive (lowercase) types are passed by value.
    pub fn is_primitive(&self) -> bool {
        matches!(self, SemType::Primitive(_))
    }

    pub fn is_reference(&self) -> bool {
        matches!(self, SemType::Class(_) | SemType::Interface(_) | SemType::Array(_))
    }
}

impl fmt::Display for SemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prim = |p: &PrimKind, upper: bool| match (p, upper) {
            (PrimKind::Integer, true) => "Integer",
            (PrimKind::Real, true) => "Real",
            (PrimKind::Boolean, true) => "Boolean",
            (PrimKind::Integer, false) => "integer",
            (PrimKind::Real, false) => "real",
            (PrimKind::Boolean, false) => "boolean",
        };
        match self {
            SemType::Primitive(p) => f.write_str(prim(p, false)),
            SemType::Mathematic(p) => f.write_str(prim(p, true)),
            SemType::Class(n) | SemType::Interface(n) => f.write_str(n),
            SemType::Array(e) => write!(f, "{e}[]"),
        }
    }
}

/// Supplies the nominal hierarchy needed by [`is_subtype`].
pub trait Hierarchy {
    /// Direct supertypes of a class or interface name: superclass, implemented
    /// interfaces, or super-interfaces.
    fn parents(&self, name: &str) -> Vec<String>;
}

/// Built-in interface inheritance only.
pub struct BuiltinHierarchy;

impl Hierarchy for BuiltinHierarchy {
    fn parents(&self, name: &str) -> Vec<String> {
        builtin_parents(name)
    }
}

pub(crate) fn builtin_parents(name: &str) -> Vec<String> {
    match name {
        "ParallelAssignment" | "SequentialAssignment" => vec!["Assignment".to_string()],
        _ => Vec::new(),
    }
}

fn named_subtype(sub: &str, sup: &str, h: &dyn Hierarchy, depth: usize) -> bool {
    if sub == sup {
        return true;
    }
    if depth > 64 {
        return false;
    }
    h.parents(sub).iter().any(|p| named_subtype(p, sup, h, depth + 1))
}

/// Reflexive, transitive subtype relation. Mathematic and primitive types of the
/// same kind are interchangeable; Integer is a subtype of Real.
pub fn is_subtype(sub: &SemType, sup: &SemType, h: &dyn Hierarchy) -> bool {
    match (sub, sup) {
        (a, b) if a.prim().is_some() && b.prim().is_some() => {
            let (a, b) = (a.prim().unwrap(), b.prim().unwrap());
            a == b || (a == PrimKind::Integer && b == PrimKind::Real)
        }
        (SemType::Class(a) | SemType::Interface(a), SemType::Class(b) | SemType::Interface(b)) => {
            named_subtype(a, b, h, 0)
        }
        (SemType::Array(a), SemType::Array(b)) => is_subtype(a, b, h),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Ball;
    impl Hierarchy for Ball {
        fn parents(&self, name: &str) -> Vec<String> {
            match name {
                "Jump" => vec!["ParallelAssignment".into()],
                "Moving" => vec!["Dynamic".into()],
                "FastMoving" => vec!["Moving".into()],
                n => builtin_parents(n),
            }
        }
    }

    #[test]
    fn assignment_subinterfaces() {
        let h = BuiltinHierarchy;
        let seq = SemType::interface(BuiltinInterface::SequentialAssignment);
        let par = SemType::interface(BuiltinInterface::ParallelAssignment);
        let asg = SemType::interface(BuiltinInterface::Assignment);
        assert!(is_subtype(&seq, &asg, &h));
        assert!(is_subtype(&par, &asg, &h));
        assert!(!is_subtype(&asg, &par, &h));
    }

    #[test]
    fn class_hierarchy() {
        let h = Ball;
        let jump = SemType::Class("Jump".into());
        assert!(is_subtype(&jump, &SemType::interface(BuiltinInterface::Assignment), &h));
        let fast = SemType::Class("FastMoving".into());
        assert!(is_subtype(&fast, &SemType::interface(BuiltinInterface::Dynamic), &h));
        assert!(!is_subtype(&jump, &SemType::interface(BuiltinInterface::Dynamic), &h));
    }

    #[test]
    fn numeric_promotion() {
        let h = BuiltinHierarchy;
        assert!(is_subtype(&SemType::INTEGER, &SemType::REAL, &h));
        assert!(!is_subtype(&SemType::REAL, &SemType::INTEGER, &h));
        assert!(!is_subtype(&SemType::REAL, &SemType::BOOLEAN, &h));
        assert!(is_subtype(&SemType::Primitive(PrimKind::Real), &SemType::REAL, &h));
    }
}
