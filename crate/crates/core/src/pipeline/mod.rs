//! Cycle-accurate five-stage pipeline (IF, ID, EX, MEM, WB) with DES
//! decryption on instruction fetch and encryption on store.
//!
//! Each [`CpuState::step`] is one clock. Stages are evaluated back to front
//! against the latch contents from the start of the cycle, so every stage
//! sees what the hardware would see on that edge:
//!
//! * WB writes the register file first (write-before-read for decode).
//! * MEM performs the data access; key-register halves written by
//!   `lklw`/`lkuw` become visible to fetch on the next cycle.
//! * EX takes operands through the forwarding unit.
//! * ID decodes, runs the hazard unit, resolves `j`/`beq`/`bne` and `crypt`.
//!   A taken branch or a fetch-mode change squashes the slot fetched in the
//!   same cycle.
//! * IF fetches with the crypt mode and key from the start of the cycle.

mod hazard;
mod latch;
mod reference;
mod trace;

use thiserror::Error;

use crate::des::{self, DesKey, KeySchedule};
use crate::isa::{self, Instruction, JOp, Reg};
use crate::machine::{KeyRegister, MachineError, Memory, RegisterFile};

pub use hazard::{
    decode_operand, detect_hazards, forward_select, is_conditional_branch, resolve_branch, BranchOutcome,
    ForwardSource, HazardSignals,
};
pub use latch::{AluOp, Control, ExMem, IdEx, IfId, MemOp, MemWb, Slot};
pub use reference::{reference_interpret, ArchState};
pub use trace::{format_stats, format_trace_line};

/// Cycles needed to drain a full pipeline after the last fetch.
pub const DRAIN_CYCLES: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Fault {
    #[error("unknown instruction 0x{word:08x} at pc 0x{pc:08x}")]
    UnknownInstruction { pc: u32, word: u32 },
    #[error("unaligned access to 0x{addr:08x} by instruction at pc 0x{pc:08x}")]
    UnalignedAccess { pc: u32, addr: u32 },
    #[error("encrypted fetch at pc 0x{pc:08x} before the key register was loaded")]
    KeyNotLoadedFetch { pc: u32 },
    #[error("encrypted store by instruction at pc 0x{pc:08x} before the key register was loaded")]
    KeyNotLoadedStore { pc: u32 },
    #[error("decrypting load by instruction at pc 0x{pc:08x} before the key register was loaded")]
    KeyNotLoadedLoad { pc: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("fault: {0}")]
    Fault(#[from] Fault),
    #[error("cycle limit exceeded after {cycles} cycles")]
    CycleLimitExceeded { cycles: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    /// Decrypt fetched blocks while crypt mode is on. Turning this off runs a
    /// plaintext image with the same store semantics.
    pub decrypt_fetch: bool,
    /// Route `lw` data through the MEM-stage decryptor while crypt mode is on.
    pub decrypt_loads: bool,
    /// Keep the `(pc, word)` sequence of retired instructions.
    pub record_retired: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { decrypt_fetch: true, decrypt_loads: false, record_retired: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Stats {
    pub cycles: u64,
    pub retired: u64,
    pub stalls: u64,
    pub flushes: u64,
    pub decrypted_fetches: u64,
    pub encrypted_stores: u64,
}

impl Stats {
    pub fn cpi(&self) -> Option<f64> {
        (self.retired > 0).then(|| self.cycles as f64 / self.retired as f64)
    }
}

/// What one stage held during a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageView {
    pub pc: u32,
    pub word: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CycleEvents {
    pub cycle: u64,
    /// PC at the start of the cycle.
    pub pc: u32,
    /// IF, ID, EX, MEM, WB.
    pub stages: [Option<StageView>; 5],
    pub stall: bool,
    pub flush: bool,
    /// New crypt mode when a `crypt` in decode changed it.
    pub crypt_change: Option<bool>,
    pub decrypted_fetch: bool,
    pub encrypted_store: bool,
}

/// Memoizes the subkeys of the current key-register value.
#[derive(Debug, Clone, Default)]
struct KeyCache(Option<(u64, KeySchedule)>);

impl KeyCache {
    fn get(&mut self, key: u64) -> &KeySchedule {
        if self.0.map(|(k, _)| k) != Some(key) {
            self.0 = Some((key, KeySchedule::new(DesKey(key))));
        }
        &self.0.as_ref().expect("just filled").1
    }
}

/// Reads the block at `pc` and extracts the instruction word, decrypting it
/// first when `cipher` is given. `None` past the end of instruction memory.
pub fn fetch(imem: &Memory, pc: u32, cipher: Option<&KeySchedule>) -> Result<Option<u32>, MachineError> {
    if pc >= imem.extent() {
        return Ok(None);
    }
    let block = imem.read_block(pc)?;
    let block = match cipher {
        Some(s) => des::decrypt_block(block, s),
        None => block,
    };
    Ok(Some(des::payload(block)))
}

pub fn alu(op: AluOp, a: u32, b: u32, shamt: u32) -> u32 {
    match op {
        AluOp::Add => a.wrapping_add(b),
        AluOp::Sub => a.wrapping_sub(b),
        AluOp::And => a & b,
        AluOp::Or => a | b,
        AluOp::Slt => u32::from((a as i32) < (b as i32)),
        AluOp::Sll => b << (shamt & 31),
        AluOp::None => 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyHalf {
    Lower,
    Upper,
}

/// Result of the MEM stage for one instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemOutcome {
    /// Value carried to write-back.
    pub value: u32,
    /// Key half to commit at the end of the cycle.
    pub key_write: Option<(KeyHalf, u32)>,
    pub encrypted_store: bool,
}

/// Data-memory access for one instruction. `key` is the key register at the
/// start of the cycle.
pub fn mem_stage(
    slot_pc: u32,
    ctl: &Control,
    addr: u32,
    store_data: u32,
    key: &KeyRegister,
    dmem: &mut Memory,
    decrypt_loads: bool,
) -> Result<MemOutcome, Fault> {
    mem_stage_cached(slot_pc, ctl, addr, store_data, key, dmem, decrypt_loads, &mut KeyCache::default())
}

#[allow(clippy::too_many_arguments)]
fn mem_stage_cached(
    pc: u32,
    ctl: &Control,
    addr: u32,
    store_data: u32,
    key: &KeyRegister,
    dmem: &mut Memory,
    decrypt_loads: bool,
    cache: &mut KeyCache,
) -> Result<MemOutcome, Fault> {
    let unaligned = |_| Fault::UnalignedAccess { pc, addr };
    let mut out = MemOutcome { value: addr, key_write: None, encrypted_store: false };
    match ctl.mem {
        MemOp::None => {}
        MemOp::Load => {
            let block = dmem.read_block(addr).map_err(unaligned)?;
            out.value = if ctl.crypt && decrypt_loads {
                let k = key.key_value().map_err(|_| Fault::KeyNotLoadedLoad { pc })?;
                des::payload(des::decrypt_block(block, cache.get(k)))
            } else {
                des::payload(block)
            };
        }
        MemOp::Store => {
            if !addr.is_multiple_of(8) {
                return Err(Fault::UnalignedAccess { pc, addr });
            }
            let block = if ctl.crypt {
                let k = key.key_value().map_err(|_| Fault::KeyNotLoadedStore { pc })?;
                out.encrypted_store = true;
                des::encrypt_block(des::pad(store_data), cache.get(k))
            } else {
                des::pad(store_data)
            };
            dmem.write_block(addr, block).map_err(unaligned)?;
        }
        MemOp::KeyLower | MemOp::KeyUpper => {
            let half = des::payload(dmem.read_block(addr).map_err(unaligned)?);
            let which = if ctl.mem == MemOp::KeyLower { KeyHalf::Lower } else { KeyHalf::Upper };
            out.key_write = Some((which, half));
        }
    }
    Ok(out)
}

/// Complete machine state: architectural registers, memories, latches and counters.
#[derive(Debug, Clone)]
pub struct CpuState {
    pub pc: u32,
    pub crypt_mode: bool,
    pub regs: RegisterFile,
    pub key: KeyRegister,
    pub imem: Memory,
    pub dmem: Memory,
    pub ifid: Option<IfId>,
    pub idex: Option<IdEx>,
    pub exmem: Option<ExMem>,
    pub memwb: Option<MemWb>,
    pub stats: Stats,
    pub config: SimConfig,
    pub retired_log: Vec<(u32, u32)>,
    drain: u64,
    keys: KeyCache,
}

impl CpuState {
    pub fn new(imem: Memory, dmem: Memory, config: SimConfig) -> Self {
        CpuState {
            pc: 0,
            crypt_mode: false,
            regs: RegisterFile::new(),
            key: KeyRegister::default(),
            imem,
            dmem,
            ifid: None,
            idex: None,
            exmem: None,
            memwb: None,
            stats: Stats::default(),
            config,
            retired_log: Vec::new(),
            drain: 0,
            keys: KeyCache::default(),
        }
    }

    pub fn pipeline_empty(&self) -> bool {
        self.ifid.is_none() && self.idex.is_none() && self.exmem.is_none() && self.memwb.is_none()
    }

    /// Clean halt: nothing left to fetch and the pipeline has drained.
    pub fn halted(&self) -> bool {
        self.drain >= DRAIN_CYCLES && self.pipeline_empty() && self.pc >= self.imem.extent()
    }

    /// Advances one clock cycle.
    pub fn step(&mut self) -> Result<CycleEvents, Fault> {
        let old_ifid = self.ifid;
        let old_idex = self.idex;
        let old_exmem = self.exmem;
        let old_memwb = self.memwb;
        let key_at_start = self.key;
        let fetch_decrypts = self.crypt_mode && self.config.decrypt_fetch;

        let mut ev = CycleEvents { cycle: self.stats.cycles + 1, pc: self.pc, ..Default::default() };
        let view = |s: &Slot| Some(StageView { pc: s.pc, word: s.word });

        // WB
        if let Some(wb) = old_memwb {
            ev.stages[4] = view(&wb.slot);
            if wb.reg_write {
                self.regs.write(wb.dest, wb.value);
            }
            self.stats.retired += 1;
            if self.config.record_retired {
                self.retired_log.push((wb.slot.pc, wb.slot.word));
            }
        }

        // MEM
        let mut key_write = None;
        let new_memwb = match old_exmem {
            Some(m) => {
                ev.stages[3] = view(&m.slot);
                let out = mem_stage_cached(
                    m.slot.pc,
                    &m.ctl,
                    m.alu_result,
                    m.store_data,
                    &key_at_start,
                    &mut self.dmem,
                    self.config.decrypt_loads,
                    &mut self.keys,
                )?;
                if out.encrypted_store {
                    ev.encrypted_store = true;
                    self.stats.encrypted_stores += 1;
                }
                key_write = out.key_write;
                Some(MemWb { slot: m.slot, value: out.value, dest: m.ctl.dest, reg_write: m.ctl.reg_write })
            }
            None => None,
        };

        // EX
        let new_exmem = old_idex.map(|x| {
            let operand = |src: Reg, read: u32| match forward_select(src, old_exmem.as_ref(), old_memwb.as_ref()) {
                ForwardSource::ExMem => old_exmem.expect("selected").alu_result,
                ForwardSource::MemWb => old_memwb.expect("selected").value,
                ForwardSource::RegFile => read,
            };
            let a = operand(x.rs, x.rs_val);
            let b = operand(x.rt, x.rt_val);
            let rhs = if x.ctl.alu_imm { x.imm as u32 } else { b };
            ExMem { slot: x.slot, ctl: x.ctl, alu_result: alu(x.ctl.alu, a, rhs, x.shamt), store_data: b }
        });
        if let Some(x) = &old_idex {
            ev.stages[2] = view(&x.slot);
        }

        // ID
        let mut stall = false;
        let mut redirect: Option<u32> = None;
        let mut new_idex = None;
        if let Some(f) = old_ifid {
            ev.stages[1] = Some(StageView { pc: f.pc, word: f.word });
            let instr = isa::decode(f.word).map_err(|_| Fault::UnknownInstruction { pc: f.pc, word: f.word })?;
            if detect_hazards(&instr, old_idex.as_ref(), old_exmem.as_ref()).stall {
                stall = true;
            } else {
                let (rs, rt) = operand_regs(&instr);
                let rs_val = self.regs.read(rs);
                let rt_val = self.regs.read(rt);
                if let Some(b) = resolve_branch(
                    &instr,
                    f.pc,
                    decode_operand(rs, rs_val, old_exmem.as_ref()),
                    decode_operand(rt, rt_val, old_exmem.as_ref()),
                ) {
                    if b.taken {
                        redirect = Some(b.target);
                    }
                }
                if let Instruction::J { op: JOp::Crypt, target } = instr {
                    let on = target != 0;
                    if on != self.crypt_mode {
                        self.crypt_mode = on;
                        ev.crypt_change = Some(on);
                        if self.config.decrypt_fetch {
                            // refetch the next slot through the other path
                            redirect = Some(f.pc.wrapping_add(8));
                        }
                    }
                }
                let (imm, shamt) = match instr {
                    Instruction::R { shamt, .. } => (0, u32::from(shamt)),
                    _ => (instr.simm().unwrap_or(0), 0),
                };
                new_idex = Some(IdEx {
                    slot: Slot { pc: f.pc, word: f.word, instr },
                    ctl: Control::decode(&instr, self.crypt_mode),
                    rs,
                    rt,
                    rs_val,
                    rt_val,
                    imm,
                    shamt,
                });
            }
        }

        // IF
        let new_ifid;
        if stall {
            ev.stall = true;
            self.stats.stalls += 1;
            new_ifid = old_ifid;
        } else if let Some(target) = redirect {
            ev.flush = true;
            self.stats.flushes += 1;
            // Show what the squashed slot would have fetched, without faulting on it.
            let cipher = match fetch_decrypts {
                true => key_at_start.key_value().ok().map(|k| *self.keys.get(k)),
                false => None,
            };
            if !(fetch_decrypts && cipher.is_none()) {
                if let Ok(Some(word)) = fetch(&self.imem, self.pc, cipher.as_ref()) {
                    ev.stages[0] = Some(StageView { pc: self.pc, word });
                }
            }
            new_ifid = None;
            self.pc = target;
            self.drain = 0;
        } else if self.pc >= self.imem.extent() {
            new_ifid = None;
            self.drain += 1;
        } else {
            let pc = self.pc;
            let cipher = if fetch_decrypts {
                let k = key_at_start.key_value().map_err(|_| Fault::KeyNotLoadedFetch { pc })?;
                Some(*self.keys.get(k))
            } else {
                None
            };
            let word = fetch(&self.imem, pc, cipher.as_ref())
                .map_err(|_| Fault::UnalignedAccess { pc, addr: pc })?
                .expect("pc below extent");
            if fetch_decrypts {
                ev.decrypted_fetch = true;
                self.stats.decrypted_fetches += 1;
            }
            ev.stages[0] = Some(StageView { pc, word });
            new_ifid = Some(IfId { pc, word });
            self.pc = pc.wrapping_add(8);
        }

        if let Some((half, v)) = key_write {
            match half {
                KeyHalf::Lower => self.key.set_lower(v),
                KeyHalf::Upper => self.key.set_upper(v),
            }
        }

        self.memwb = new_memwb;
        self.exmem = new_exmem;
        self.idex = if stall { None } else { new_idex };
        self.ifid = new_ifid;
        self.stats.cycles += 1;
        Ok(ev)
    }

    /// Steps until a clean halt, a fault, or `max_cycles`.
    pub fn run(&mut self, max_cycles: u64) -> Result<Stats, RunError> {
        self.run_with(max_cycles, |_| {})
    }

    /// Like [`CpuState::run`], handing every cycle's events to `observe`.
    pub fn run_with(&mut self, max_cycles: u64, mut observe: impl FnMut(&CycleEvents)) -> Result<Stats, RunError> {
        loop {
            if self.halted() {
                return Ok(self.stats);
            }
            if self.stats.cycles >= max_cycles {
                return Err(RunError::CycleLimitExceeded { cycles: self.stats.cycles });
            }
            let ev = self.step()?;
            observe(&ev);
        }
    }
}

/// The register fields read in decode, with unused ones mapped to `$r0`.
fn operand_regs(instr: &Instruction) -> (Reg, Reg) {
    let srcs = instr.sources();
    match *instr {
        Instruction::R { rs, rt, .. } => (if srcs.contains(&rs) { rs } else { Reg::ZERO }, rt),
        Instruction::I { rs, rt, .. } => (rs, if srcs.contains(&rt) { rt } else { Reg::ZERO }),
        Instruction::J { .. } => (Reg::ZERO, Reg::ZERO),
    }
}

/// Convenience: build a machine from plain memories and run it.
pub fn run(imem: Memory, dmem: Memory, config: SimConfig, max_cycles: u64) -> (CpuState, Result<Stats, RunError>) {
    let mut cpu = CpuState::new(imem, dmem, config);
    let result = cpu.run(max_cycles);
    (cpu, result)
}
