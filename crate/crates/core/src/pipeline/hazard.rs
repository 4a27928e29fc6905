//! Forwarding unit, hazard detection unit and branch resolution in decode.

use crate::isa::{IOp, Instruction, JOp, Reg};

use super::latch::{ExMem, IdEx, MemOp, MemWb};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardSource {
    RegFile,
    ExMem,
    MemWb,
}

/// Picks where an EX-stage operand comes from. The nearer producer wins.
pub fn forward_select(src: Reg, exmem: Option<&ExMem>, memwb: Option<&MemWb>) -> ForwardSource {
    if src.is_zero() {
        return ForwardSource::RegFile;
    }
    if exmem.is_some_and(|e| e.ctl.writes(src)) {
        return ForwardSource::ExMem;
    }
    if memwb.is_some_and(|w| w.reg_write && w.dest == src) {
        return ForwardSource::MemWb;
    }
    ForwardSource::RegFile
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HazardSignals {
    pub stall: bool,
    /// Load-use interlock on an EX-stage operand.
    pub load_use: bool,
    /// A branch in decode waits for an operand that is not yet forwardable.
    pub branch_operand: bool,
}

fn reads(instr: &Instruction, r: Reg) -> bool {
    !r.is_zero() && instr.sources().contains(&r)
}

/// Stall decision for the instruction in decode, given the instructions
/// currently in EX (`idex`) and MEM (`exmem`).
pub fn detect_hazards(decoding: &Instruction, idex: Option<&IdEx>, exmem: Option<&ExMem>) -> HazardSignals {
    let mut s = HazardSignals::default();
    if let Some(ex) = idex {
        if ex.ctl.mem == MemOp::Load && ex.ctl.reg_write && reads(decoding, ex.ctl.dest) {
            s.load_use = true;
        }
    }
    if is_conditional_branch(decoding) {
        let in_ex = idex.is_some_and(|ex| ex.ctl.reg_write && reads(decoding, ex.ctl.dest));
        let load_in_mem =
            exmem.is_some_and(|m| m.ctl.mem == MemOp::Load && m.ctl.reg_write && reads(decoding, m.ctl.dest));
        s.branch_operand = in_ex || load_in_mem;
    }
    s.stall = s.load_use || s.branch_operand;
    s
}

pub fn is_conditional_branch(instr: &Instruction) -> bool {
    matches!(instr, Instruction::I { op: IOp::Beq | IOp::Bne, .. })
}

/// Value of a branch operand in decode: the register file (already updated
/// by this cycle's write-back), or the ALU result sitting in EX/MEM.
pub fn decode_operand(src: Reg, regfile_value: u32, exmem: Option<&ExMem>) -> u32 {
    match exmem {
        Some(e) if e.ctl.writes(src) && e.ctl.mem != MemOp::Load => e.alu_result,
        _ => regfile_value,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchOutcome {
    pub taken: bool,
    pub target: u32,
}

/// Resolves `j`, `beq` and `bne` at `pc`. Returns `None` for anything else.
pub fn resolve_branch(instr: &Instruction, pc: u32, rs_val: u32, rt_val: u32) -> Option<BranchOutcome> {
    match *instr {
        Instruction::J { op: JOp::J, target } => Some(BranchOutcome { taken: true, target: target.wrapping_mul(8) }),
        Instruction::I { op: op @ (IOp::Beq | IOp::Bne), imm, .. } => {
            let equal = rs_val == rt_val;
            let taken = if op == IOp::Beq { equal } else { !equal };
            let disp = (imm as i16 as i32).wrapping_mul(8);
            Some(BranchOutcome { taken, target: pc.wrapping_add(8).wrapping_add(disp as u32) })
        }
        _ => None,
    }
}
