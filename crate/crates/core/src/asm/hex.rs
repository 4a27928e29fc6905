//! Hex memory image files: one 64-bit block per line as 16 hex digits,
//! `#` comments, and `@addr` (hex byte address, 8-aligned) directives that
//! move the placement cursor.

use std::fmt::Write as _;

use super::AsmError;

/// Blocks with their byte addresses, in file order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MemoryImage {
    entries: Vec<(u32, u64)>,
}

impl MemoryImage {
    pub fn from_entries(entries: Vec<(u32, u64)>) -> Self {
        MemoryImage { entries }
    }

    /// Dense placement starting at address 0.
    pub fn from_blocks(blocks: &[u64]) -> Self {
        MemoryImage { entries: blocks.iter().enumerate().map(|(i, &b)| (8 * i as u32, b)).collect() }
    }

    pub fn entries(&self) -> &[(u32, u64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, addr: u32, block: u64) {
        self.entries.push((addr, block));
    }
}

pub fn read_hex(text: &str) -> Result<MemoryImage, AsmError> {
    let mut image = MemoryImage::default();
    let mut cursor: u32 = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(addr) = body.strip_prefix('@') {
            let addr = u32::from_str_radix(addr.trim(), 16).map_err(|_| AsmError::BadHexLine { line })?;
            if addr % 8 != 0 {
                return Err(AsmError::UnalignedAddressDirective { line, addr });
            }
            cursor = addr;
            continue;
        }
        if body.len() != 16 || !body.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(AsmError::BadHexLine { line });
        }
        let block = u64::from_str_radix(body, 16).map_err(|_| AsmError::BadHexLine { line })?;
        image.push(cursor, block);
        cursor = cursor.wrapping_add(8);
    }
    Ok(image)
}

/// Canonical text: lowercase, `@addr` only where placement is not contiguous.
pub fn write_hex(image: &MemoryImage) -> String {
    let mut out = String::new();
    let mut cursor: u32 = 0;
    for &(addr, block) in image.entries() {
        if addr != cursor {
            let _ = writeln!(out, "@{addr:x}");
        }
        let _ = writeln!(out, "{block:016x}");
        cursor = addr.wrapping_add(8);
    }
    out
}
