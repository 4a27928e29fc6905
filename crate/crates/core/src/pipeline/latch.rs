//! Pipeline latches and the control word produced by the decoder.
//!
//! A latch slot is `Option<T>`; `None` is a bubble and carries no side effects.

use crate::isa::{IOp, Instruction, JOp, RFunct, Reg};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AluOp {
    Add,
    Sub,
    And,
    Or,
    Slt,
    Sll,
    /// Control-flow and mode instructions: nothing to compute.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemOp {
    None,
    Load,
    Store,
    KeyLower,
    KeyUpper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Control {
    pub alu: AluOp,
    /// Second ALU input is the sign-extended immediate.
    pub alu_imm: bool,
    pub mem: MemOp,
    pub reg_write: bool,
    pub dest: Reg,
    /// Crypt mode as seen when the instruction passed decode.
    pub crypt: bool,
}

impl Control {
    pub fn decode(instr: &Instruction, crypt: bool) -> Self {
        let mut c =
            Control { alu: AluOp::None, alu_imm: false, mem: MemOp::None, reg_write: false, dest: Reg::ZERO, crypt };
        match *instr {
            Instruction::R { funct, rd, .. } => {
                c.alu = match funct {
                    RFunct::Add => AluOp::Add,
                    RFunct::Sub => AluOp::Sub,
                    RFunct::And => AluOp::And,
                    RFunct::Or => AluOp::Or,
                    RFunct::Slt => AluOp::Slt,
                    RFunct::Sll => AluOp::Sll,
                };
                c.reg_write = true;
                c.dest = rd;
            }
            Instruction::I { op, rt, .. } => {
                c.alu_imm = true;
                match op {
                    IOp::Addi => {
                        c.alu = AluOp::Add;
                        c.reg_write = true;
                        c.dest = rt;
                    }
                    IOp::Lw => {
                        c.alu = AluOp::Add;
                        c.mem = MemOp::Load;
                        c.reg_write = true;
                        c.dest = rt;
                    }
                    IOp::Sw => {
                        c.alu = AluOp::Add;
                        c.mem = MemOp::Store;
                    }
                    IOp::Lklw => {
                        c.alu = AluOp::Add;
                        c.mem = MemOp::KeyLower;
                    }
                    IOp::Lkuw => {
                        c.alu = AluOp::Add;
                        c.mem = MemOp::KeyUpper;
                    }
                    IOp::Beq | IOp::Bne => c.alu_imm = false,
                }
            }
            Instruction::J { op: JOp::J | JOp::Crypt, .. } => {}
        }
        if c.dest.is_zero() {
            c.reg_write = false;
        }
        c
    }

    /// True when this instruction will write `r` back to the register file.
    pub fn writes(&self, r: Reg) -> bool {
        self.reg_write && !r.is_zero() && self.dest == r
    }
}

/// Identity of an in-flight instruction, kept for tracing and retirement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub pc: u32,
    pub word: u32,
    pub instr: Instruction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IfId {
    pub pc: u32,
    pub word: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdEx {
    pub slot: Slot,
    pub ctl: Control,
    pub rs: Reg,
    pub rt: Reg,
    /// Register-file values read in decode.
    pub rs_val: u32,
    pub rt_val: u32,
    pub imm: i32,
    pub shamt: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExMem {
    pub slot: Slot,
    pub ctl: Control,
    pub alu_result: u32,
    pub store_data: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemWb {
    pub slot: Slot,
    pub value: u32,
    pub dest: Reg,
    pub reg_write: bool,
}
