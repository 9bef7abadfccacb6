use std::ops::Range;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupShape {
    Matrix { rows: usize, cols: usize },
    Vector { len: usize },
}

impl GroupShape {
    pub fn len(&self) -> usize {
        match *self {
            GroupShape::Matrix { rows, cols } => rows * cols,
            GroupShape::Vector { len } => len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: String,
    pub shape: GroupShape,
    pub offset: usize,
}

impl ParamGroup {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.shape.len()
    }
}

/// Partition of a flat parameter vector into named matrix and vector groups,
/// in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLayout {
    groups: Vec<ParamGroup>,
}

#[derive(Debug, Default)]
pub struct GroupLayoutBuilder {
    groups: Vec<ParamGroup>,
    offset: usize,
}

impl GroupLayoutBuilder {
    fn push(mut self, name: &str, shape: GroupShape) -> Self {
        self.groups.push(ParamGroup { name: name.to_owned(), shape, offset: self.offset });
        self.offset += shape.len();
        self
    }

    pub fn matrix(self, name: &str, rows: usize, cols: usize) -> Self {
        self.push(name, GroupShape::Matrix { rows, cols })
    }

    pub fn vector(self, name: &str, len: usize) -> Self {
        self.push(name, GroupShape::Vector { len })
    }

    pub fn build(self) -> GroupLayout {
        GroupLayout { groups: self.groups }
    }
}

impl GroupLayout {
    pub fn builder() -> GroupLayoutBuilder {
        GroupLayoutBuilder::default()
    }

    /// One vector group spanning all `d` coordinates.
    pub fn flat(d: usize) -> Self {
        Self::builder().vector("params", d).build()
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn total_len(&self) -> usize {
        self.groups.iter().map(|g| g.shape.len()).sum()
    }

    /// Groups are contiguous by construction; this checks that they cover `d`
    /// coordinates and that none is empty.
    pub fn check(&self, d: usize) -> Result<()> {
        if self.groups.iter().any(|g| g.shape.is_empty()) {
            return Err(Error::InvalidParameter("layout contains an empty group".into()));
        }
        if self.total_len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: self.total_len() });
        }
        Ok(())
    }
}
