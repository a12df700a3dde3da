//! Two-level environment: names map to locations, locations hold typed values.
//!
//! Aliasing is location sharing. Constructor wiring may merge two locations after
//! the fact ([`Store::unify`]); the absorbed cell becomes a forwarding cell so every
//! name bound to either location observes the same value from then on.

use std::collections::HashMap;

use indexmap::IndexMap;
use thiserror::Error;

use crate::types::SemType;
use crate::value::{Loc, ObjId, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("write to constant location {0}")]
    ConstantWrite(Loc),
}

#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Slot { value: Value, ty: SemType, constant: bool },
    Forward(Loc),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Object {
    pub class: String,
    pub fields: IndexMap<String, Loc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    /// Method or constructor activation; name lookup stops here.
    Method,
    /// Nested block inside a method.
    Block,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: FrameKind,
    pub bindings: IndexMap<String, Loc>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Store {
    heap: Vec<Cell>,
    objects: Vec<Object>,
    frames: Vec<Frame>,
    derivatives: HashMap<(Loc, u32), Loc>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of allocated cells, including forwarding cells.
    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Allocates a cell holding `Null`.
    pub fn fresh_location(&mut self, ty: SemType) -> Loc {
        self.fresh_with(Value::Null, ty)
    }

    pub fn fresh_with(&mut self, value: Value, ty: SemType) -> Loc {
        self.heap.push(Cell::Slot { value, ty, constant: false });
        Loc(self.heap.len() - 1)
    }

    /// Follows forwarding cells to the canonical location.
    pub fn resolve(&self, mut loc: Loc) -> Loc {
        while let Cell::Forward(next) = &self.heap[loc.0] {
            loc = *next;
        }
        loc
    }

    fn slot(&self, loc: Loc) -> (&Value, &SemType, bool) {
        match &self.heap[self.resolve(loc).0] {
            Cell::Slot { value, ty, constant } => (value, ty, *constant),
            Cell::Forward(_) => unreachable!("resolve returns a slot"),
        }
    }

    pub fn read(&self, loc: Loc) -> &Value {
        self.slot(loc).0
    }

    pub fn type_of(&self, loc: Loc) -> &SemType {
        self.slot(loc).1
    }

    pub fn is_constant(&self, loc: Loc) -> bool {
        self.slot(loc).2
    }

    pub fn set_constant(&mut self, loc: Loc) {
        let l = self.resolve(loc);
        if let Cell::Slot { constant, .. } = &mut self.heap[l.0] {
            *constant = true;
        }
    }

    pub fn set_type(&mut self, loc: Loc, new_ty: SemType) {
        let l = self.resolve(loc);
        if let Cell::Slot { ty, .. } = &mut self.heap[l.0] {
            *ty = new_ty;
        }
    }

    /// Writes a value and returns the previous one. Constant cells reject writes.
    pub fn write(&mut self, loc: Loc, v: Value) -> Result<Value, StoreError> {
        let l = self.resolve(loc);
        match &mut self.heap[l.0] {
            Cell::Slot { constant: true, .. } => Err(StoreError::ConstantWrite(l)),
            Cell::Slot { value, .. } => Ok(std::mem::replace(value, v)),
            Cell::Forward(_) => unreachable!(),
        }
    }

    /// Writes ignoring constness; used for declaration initializers.
    pub fn init(&mut self, loc: Loc, v: Value) {
        let l = self.resolve(loc);
        if let Cell::Slot { value, .. } = &mut self.heap[l.0] {
            *value = v;
        }
    }

    /// Merges `from` into `into`: afterwards both resolve to `into`'s cell.
    /// Constness of either side is kept.
    pub fn unify(&mut self, from: Loc, into: Loc) {
        let (a, b) = (self.resolve(from), self.resolve(into));
        if a == b {
            return;
        }
        if self.is_constant(a) {
            self.set_constant(b);
        }
        self.heap[a.0] = Cell::Forward(b);
        // derivative chains registered on the absorbed cell follow it
        let moved: Vec<_> = self.derivatives.iter().filter(|((l, _), _)| *l == a).map(|(k, v)| (*k, *v)).collect();
        for ((_, n), d) in moved {
            self.derivatives.remove(&(a, n));
            self.derivatives.entry((b, n)).or_insert(d);
        }
    }

    // --- frames -------------------------------------------------------------

    pub fn push_frame(&mut self, kind: FrameKind) {
        self.frames.push(Frame { kind, bindings: IndexMap::new() });
    }

    pub fn pop_frame(&mut self) -> Option<Frame> {
        self.frames.pop()
    }

    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    /// Binds `name` to `loc` in the innermost frame, replacing an existing binding.
    pub fn bind_alias(&mut self, name: &str, loc: Loc) {
        if self.frames.is_empty() {
            self.push_frame(FrameKind::Method);
        }
        self.frames.last_mut().unwrap().bindings.insert(name.to_string(), loc);
    }

    pub fn is_bound_in_current_frame(&self, name: &str) -> bool {
        self.frames.last().is_some_and(|f| f.bindings.contains_key(name))
    }

    /// Looks `name` up through block frames down to the nearest method frame.
    pub fn lookup(&self, name: &str) -> Option<Loc> {
        for f in self.frames.iter().rev() {
            if let Some(l) = f.bindings.get(name) {
                return Some(*l);
            }
            if f.kind == FrameKind::Method {
                break;
            }
        }
        None
    }

    /// Names visible from the innermost frame.
    pub fn visible_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for f in self.frames.iter().rev() {
            out.extend(f.bindings.keys().cloned());
            if f.kind == FrameKind::Method {
                break;
            }
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn read_name(&self, name: &str) -> Result<&Value, StoreError> {
        self.lookup(name).map(|l| self.read(l)).ok_or_else(|| StoreError::UnknownName(name.into()))
    }

    pub fn write_name(&mut self, name: &str, v: Value) -> Result<Value, StoreError> {
        let l = self.lookup(name).ok_or_else(|| StoreError::UnknownName(name.into()))?;
        self.write(l, v)
    }

    // --- objects ------------------------------------------------------------

    pub fn new_object(&mut self, class: impl Into<String>) -> ObjId {
        self.objects.push(Object { class: class.into(), fields: IndexMap::new() });
        ObjId(self.objects.len() - 1)
    }

    pub fn object(&self, id: ObjId) -> &Object {
        &self.objects[id.0]
    }

    pub fn objects(&self) -> impl Iterator<Item = (ObjId, &Object)> {
        self.objects.iter().enumerate().map(|(i, o)| (ObjId(i), o))
    }

    pub fn add_field(&mut self, obj: ObjId, name: &str, loc: Loc) {
        self.objects[obj.0].fields.insert(name.to_string(), loc);
    }

    pub fn field(&self, obj: ObjId, name: &str) -> Option<Loc> {
        self.objects[obj.0].fields.get(name).copied()
    }

    /// Location holding the `order`-th derivative of `loc`, created on first use
    /// with value `Null` and the variable's type.
    pub fn derivative_location(&mut self, loc: Loc, order: u32) -> (Loc, bool) {
        let base = self.resolve(loc);
        if let Some(d) = self.derivatives.get(&(base, order)) {
            return (*d, false);
        }
        let ty = self.type_of(base).clone();
        let d = self.fresh_location(ty);
        self.derivatives.insert((base, order), d);
        (d, true)
    }

    pub fn existing_derivative(&self, loc: Loc, order: u32) -> Option<Loc> {
        self.derivatives.get(&(self.resolve(loc), order)).copied()
    }
}
