//! Single-cycle reference interpreter: one instruction at a time, no latches.
//! Used as the architectural oracle for the pipelined model.

use crate::des::{self, DesKey, KeySchedule};
use crate::isa::{self, IOp, Instruction, JOp, RFunct};
use crate::machine::{KeyRegister, Memory, RegisterFile};

use super::{Fault, RunError, SimConfig};

/// Final architectural state of an interpreted run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchState {
    pub regs: RegisterFile,
    pub dmem: Memory,
    pub key: KeyRegister,
    pub crypt_mode: bool,
    pub pc: u32,
    /// `(pc, word)` of every executed instruction, in order.
    pub retired: Vec<(u32, u32)>,
}

fn schedule(key: &KeyRegister) -> Option<KeySchedule> {
    key.key_value().ok().map(|k| KeySchedule::new(DesKey(k)))
}

/// Executes `imem` from address 0 until the PC leaves instruction memory.
/// `max_steps` bounds the number of executed instructions.
pub fn reference_interpret(
    imem: &Memory,
    dmem: Memory,
    config: SimConfig,
    max_steps: u64,
) -> Result<ArchState, RunError> {
    let mut st = ArchState {
        regs: RegisterFile::new(),
        dmem,
        key: KeyRegister::default(),
        crypt_mode: false,
        pc: 0,
        retired: Vec::new(),
    };
    let mut steps = 0u64;
    while st.pc < imem.extent() {
        if steps >= max_steps {
            return Err(RunError::CycleLimitExceeded { cycles: steps });
        }
        steps += 1;
        let pc = st.pc;
        let mut block = imem.read_block(pc).map_err(|_| Fault::UnalignedAccess { pc, addr: pc })?;
        if st.crypt_mode && config.decrypt_fetch {
            let s = schedule(&st.key).ok_or(Fault::KeyNotLoadedFetch { pc })?;
            block = des::decrypt_block(block, &s);
        }
        let word = des::payload(block);
        let instr = isa::decode(word).map_err(|_| Fault::UnknownInstruction { pc, word })?;
        st.retired.push((pc, word));
        let mut next = pc.wrapping_add(8);

        match instr {
            Instruction::R { funct, rs, rt, rd, shamt } => {
                let a = st.regs.read(rs);
                let b = st.regs.read(rt);
                let v = match funct {
                    RFunct::Add => a.wrapping_add(b),
                    RFunct::Sub => a.wrapping_sub(b),
                    RFunct::And => a & b,
                    RFunct::Or => a | b,
                    RFunct::Slt => ((a as i32) < (b as i32)) as u32,
                    RFunct::Sll => b << shamt,
                };
                st.regs.write(rd, v);
            }
            Instruction::I { op, rs, rt, imm } => {
                let base = st.regs.read(rs);
                let ext = imm as i16 as i32 as u32;
                let addr = base.wrapping_add(ext);
                let unaligned = |_| Fault::UnalignedAccess { pc, addr };
                match op {
                    IOp::Addi => st.regs.write(rt, addr),
                    IOp::Lw => {
                        let mut b = st.dmem.read_block(addr).map_err(unaligned)?;
                        if st.crypt_mode && config.decrypt_loads {
                            let s = schedule(&st.key).ok_or(Fault::KeyNotLoadedLoad { pc })?;
                            b = des::decrypt_block(b, &s);
                        }
                        st.regs.write(rt, des::payload(b));
                    }
                    IOp::Sw => {
                        let data = st.regs.read(rt);
                        let block = if st.crypt_mode {
                            let s = schedule(&st.key).ok_or(Fault::KeyNotLoadedStore { pc })?;
                            des::encrypt_block(des::pad(data), &s)
                        } else {
                            des::pad(data)
                        };
                        st.dmem.write_block(addr, block).map_err(unaligned)?;
                    }
                    IOp::Lklw => st.key.set_lower(des::payload(st.dmem.read_block(addr).map_err(unaligned)?)),
                    IOp::Lkuw => st.key.set_upper(des::payload(st.dmem.read_block(addr).map_err(unaligned)?)),
                    IOp::Beq | IOp::Bne => {
                        let equal = base == st.regs.read(rt);
                        if equal == (op == IOp::Beq) {
                            next = pc.wrapping_add(8).wrapping_add(ext.wrapping_mul(8));
                        }
                    }
                }
            }
            Instruction::J { op: JOp::J, target } => next = target.wrapping_mul(8),
            Instruction::J { op: JOp::Crypt, target } => st.crypt_mode = target != 0,
        }
        st.pc = next;
    }
    Ok(st)
}
