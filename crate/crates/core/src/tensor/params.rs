use std::collections::BTreeMap;

use super::{Result, Tensor, TensorError};

/// Batch-norm running statistics are stored alongside weights but never trained.
pub fn is_buffer_name(name: &str) -> bool {
    name.ends_with(".running_mean") || name.ends_with(".running_var")
}

/// Named tensors of a model. Shapes are fixed once inserted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    entries: BTreeMap<String, Tensor>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(TensorError::Dimension(format!(
                "parameter `{name}` already exists"
            )));
        }
        self.entries.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Replaces the values of an existing entry; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .entries
            .get_mut(name)
            .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))?;
        slot.check_same_shape(&value, name)?;
        *slot = value;
        Ok(())
    }

    pub(crate) fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Names of trainable entries starting with `prefix`.
    pub fn trainable_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.entries
            .keys()
            .filter(|k| k.starts_with(prefix) && !is_buffer_name(k))
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalars across all entries.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }
}
