//! Architectural state: register file, DES key register and block memories.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::asm::MemoryImage;
use crate::isa::Reg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MachineError {
    #[error("unaligned block access at 0x{0:08x}")]
    UnalignedAccess(u32),
    #[error("key register not fully loaded")]
    KeyNotLoaded,
}

/// 32 general-purpose registers; `$r0` is hardwired to zero.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RegisterFile {
    regs: [u32; 32],
}

impl RegisterFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn read(&self, r: Reg) -> u32 {
        self.regs[r.index()]
    }

    pub fn write(&mut self, r: Reg, value: u32) {
        if !r.is_zero() {
            self.regs[r.index()] = value;
        }
    }

    pub fn values(&self) -> &[u32; 32] {
        &self.regs
    }
}

/// The 64-bit key register, loaded one 32-bit half at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KeyRegister {
    pub lower: u32,
    pub upper: u32,
    pub lower_loaded: bool,
    pub upper_loaded: bool,
}

impl KeyRegister {
    pub fn set_lower(&mut self, v: u32) {
        self.lower = v;
        self.lower_loaded = true;
    }

    pub fn set_upper(&mut self, v: u32) {
        self.upper = v;
        self.upper_loaded = true;
    }

    pub fn is_loaded(&self) -> bool {
        self.lower_loaded && self.upper_loaded
    }

    pub fn key_value(&self) -> Result<u64, MachineError> {
        if self.is_loaded() {
            Ok((u64::from(self.upper) << 32) | u64::from(self.lower))
        } else {
            Err(MachineError::KeyNotLoaded)
        }
    }
}

/// Sparse memory of 8-byte blocks keyed by aligned byte address.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Memory {
    blocks: BTreeMap<u32, u64>,
    extent: u32,
}

fn check_aligned(addr: u32) -> Result<(), MachineError> {
    if addr.is_multiple_of(8) {
        Ok(())
    } else {
        Err(MachineError::UnalignedAccess(addr))
    }
}

impl Memory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_image(image: &MemoryImage) -> Self {
        let mut m = Self::new();
        m.load_image(image);
        m
    }

    pub fn read_block(&self, addr: u32) -> Result<u64, MachineError> {
        check_aligned(addr)?;
        Ok(self.blocks.get(&addr).copied().unwrap_or(0))
    }

    pub fn write_block(&mut self, addr: u32, block: u64) -> Result<(), MachineError> {
        check_aligned(addr)?;
        self.blocks.insert(addr, block);
        self.extent = self.extent.max(addr.saturating_add(8));
        Ok(())
    }

    /// Byte view: the byte at `addr` is bits 7..0 of its block when `addr` is
    /// the block's base address, up to bits 63..56 at `base + 7`.
    pub fn read_byte(&self, addr: u32) -> u8 {
        let base = addr & !7;
        let block = self.blocks.get(&base).copied().unwrap_or(0);
        (block >> (8 * (addr - base))) as u8
    }

    /// One past the highest loaded byte address.
    pub fn extent(&self) -> u32 {
        self.extent
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Places every block of the image; later blocks win on overlap.
    pub fn load_image(&mut self, image: &MemoryImage) {
        for &(addr, block) in image.entries() {
            self.blocks.insert(addr, block);
            self.extent = self.extent.max(addr.saturating_add(8));
        }
    }

    /// Written blocks in address order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.blocks.iter().map(|(&a, &b)| (a, b))
    }

    /// Blocks overlapping the inclusive byte range `first..=last`, including unwritten ones.
    pub fn range(&self, first: u32, last: u32) -> Vec<(u32, u64)> {
        let mut out = Vec::new();
        let mut a = first & !7;
        while a <= last {
            out.push((a, self.blocks.get(&a).copied().unwrap_or(0)));
            match a.checked_add(8) {
                Some(n) => a = n,
                None => break,
            }
        }
        out
    }
}

pub fn format_registers(rf: &RegisterFile, which: &[Reg]) -> String {
    let mut s = String::new();
    for r in which {
        let _ = writeln!(s, "r{} = {:08x}", r.index(), rf.read(*r));
    }
    s
}

pub fn format_memory(mem: &Memory, first: u32, last: u32) -> String {
    let mut s = String::new();
    for (a, b) in mem.range(first, last) {
        let _ = writeln!(s, "{a:08x}: {b:016x}");
    }
    s
}
