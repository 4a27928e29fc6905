//! Seeded random program generator and the pipeline-vs-reference comparison
//! used for differential testing and benchmarking.
//!
//! Generated programs always terminate: branches and jumps only go forward,
//! except the back edge of counted loops. The loop counter (`$r8`) is never
//! written by loop bodies and the back edge is taken only while it is
//! positive, so entering a body from a forward branch still exits.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::asm::{self, AsmOptions, MemoryImage, ProgramImage};
use crate::des::DesKey;
use crate::machine::Memory;
use crate::pipeline::{reference_interpret, ArchState, CpuState, RunError, SimConfig, Stats};

/// Byte address of the key's lower half in generated data images; the upper
/// half follows at `KEY_ADDR + 8`.
pub const KEY_ADDR: u32 = 104;
/// Data slots touched by generated loads and stores (addresses `0..8*DATA_SLOTS`).
pub const DATA_SLOTS: u32 = 12;
const LOOP_COUNTER: &str = "$r8";
const LOOP_FLAG: &str = "$r9";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenOptions {
    /// Upper bound on instruction count, including any key/crypt prologue.
    pub max_len: usize,
    /// Emit the key-load prologue and `crypt 1` with this key.
    pub crypt_key: Option<u64>,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions { max_len: 40, crypt_key: None }
    }
}

/// A generated program with its initial data memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub seed: u64,
    pub source: String,
    pub image: ProgramImage,
    pub data: MemoryImage,
    pub key: Option<u64>,
}

impl Workload {
    /// The image as it would be loaded into instruction memory: encrypted
    /// after `crypt` when the workload has a key.
    pub fn imem(&self) -> Memory {
        match self.key {
            Some(k) => {
                let enc = asm::encrypt_image(&self.image, DesKey(k), None).expect("generated crypt prologue");
                Memory::from_image(&enc.to_memory_image())
            }
            None => Memory::from_image(&self.image.to_memory_image()),
        }
    }

    pub fn plain_imem(&self) -> Memory {
        Memory::from_image(&self.image.to_memory_image())
    }

    pub fn dmem(&self) -> Memory {
        Memory::from_image(&self.data)
    }
}

fn reg(rng: &mut ChaCha8Rng) -> String {
    // r0..r7, biased toward a few registers to create dependencies
    let pool = [0u32, 1, 2, 3, 3, 4, 5, 5, 6, 7];
    format!("$r{}", pool.choose(rng).unwrap())
}

fn dest(rng: &mut ChaCha8Rng) -> String {
    format!("$r{}", rng.gen_range(1..8))
}

fn simple_instr(rng: &mut ChaCha8Rng, out: &mut Vec<String>) {
    let line = match rng.gen_range(0..10) {
        0..=3 => {
            let op = ["add", "sub", "and", "or", "slt"].choose(rng).unwrap();
            format!("{op} {}, {}, {}", dest(rng), reg(rng), reg(rng))
        }
        4 => format!("sll {}, {}, {}", dest(rng), reg(rng), rng.gen_range(0..32)),
        5 | 6 => {
            let imm: i32 = if rng.gen_bool(0.7) { rng.gen_range(-64..64) } else { rng.gen_range(-32768..32768) };
            format!("addi {}, {}, {imm}", dest(rng), reg(rng))
        }
        7 | 8 => {
            let d = dest(rng);
            let l = format!("lw {d}, {}($r0)", 8 * rng.gen_range(0..DATA_SLOTS));
            if rng.gen_bool(0.5) {
                // immediate consumer: load-use interlock
                out.push(l);
                format!("add {}, {d}, {}", dest(rng), reg(rng))
            } else {
                l
            }
        }
        _ => format!("sw {}, {}($r0)", reg(rng), 8 * rng.gen_range(0..DATA_SLOTS)),
    };
    out.push(line);
}

fn gen_body(rng: &mut ChaCha8Rng, budget: usize, first_slot: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut loops = 0;
    while out.len() < budget {
        let left = budget - out.len();
        let slot = first_slot + out.len();
        match rng.gen_range(0..12) {
            0 | 1 if left >= 3 => {
                // forward conditional branch over the next `skip` instructions
                let skip = rng.gen_range(0..3);
                let op = ["beq", "bne"].choose(rng).unwrap();
                out.push(format!("{op} {}, {}, {skip}", reg(rng), reg(rng)));
            }
            2 if left >= 3 => {
                let skip = rng.gen_range(0..3usize);
                out.push(format!("j {}", slot + 1 + skip));
            }
            3 if left >= 7 && loops < 2 => {
                loops += 1;
                let label = format!("L{slot}");
                let body_len = rng.gen_range(1..=(left - 4).min(5));
                out.push(format!("addi {LOOP_COUNTER}, $r0, {}", rng.gen_range(1..5)));
                let mut body = Vec::new();
                while body.len() < body_len {
                    simple_instr(rng, &mut body);
                }
                body.truncate(body_len);
                body[0] = format!("{label}: {}", body[0]);
                out.extend(body);
                out.push(format!("addi {LOOP_COUNTER}, {LOOP_COUNTER}, -1"));
                out.push(format!("slt {LOOP_FLAG}, $r0, {LOOP_COUNTER}"));
                out.push(format!("bne {LOOP_FLAG}, $r0, {label}"));
            }
            _ => simple_instr(rng, &mut out),
        }
    }
    // a cut-off loop group only loses its back edge
    out.truncate(budget);
    out
}

/// Generates one program from `seed`.
pub fn random_program(seed: u64, opts: GenOptions) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = Vec::new();
    if opts.crypt_key.is_some() {
        lines.extend([
            format!("addi $r1, $r0, {KEY_ADDR}"),
            "lklw 0($r1)".into(),
            "addi $r1, $r1, 8".into(),
            "lkuw 0($r1)".into(),
            "nop".into(),
            "nop".into(),
            "crypt 1".into(),
        ]);
    }
    let prologue = lines.len();
    let room = opts.max_len.saturating_sub(prologue).max(1);
    let len = rng.gen_range(1..=room);
    lines.extend(gen_body(&mut rng, len, prologue));

    let mut source = String::new();
    for l in &lines {
        let _ = writeln!(source, "{l}");
    }
    let image = asm::assemble_source(&source, AsmOptions::default())
        .unwrap_or_else(|e| panic!("generated program failed to assemble ({e}):\n{source}"));

    let mut data = MemoryImage::default();
    for slot in 0..DATA_SLOTS {
        data.push(8 * slot, u64::from(rng.gen::<u32>()));
    }
    if let Some(k) = opts.crypt_key {
        data.push(KEY_ADDR, k & 0xFFFF_FFFF);
        data.push(KEY_ADDR + 8, k >> 32);
    }
    Workload { seed, source, image, data, key: opts.crypt_key }
}

/// Architectural mismatch between two runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch(pub String);

/// Outcome of running one workload on both models.
#[derive(Debug, Clone)]
pub struct DiffOutcome {
    pub stats: Stats,
    pub retired: usize,
}

/// Runs the workload on the pipeline and the reference interpreter and
/// compares registers, data memory, key register and crypt mode.
pub fn check_equivalence(w: &Workload, max_cycles: u64) -> Result<DiffOutcome, Mismatch> {
    let config = SimConfig { record_retired: true, ..SimConfig::default() };
    let mut cpu = CpuState::new(w.imem(), w.dmem(), config);
    let stats = cpu.run(max_cycles).map_err(|e| Mismatch(format!("seed {}: pipeline: {e}", w.seed)))?;
    let arch = reference_interpret(&w.imem(), w.dmem(), config, max_cycles)
        .map_err(|e| Mismatch(format!("seed {}: reference: {e}", w.seed)))?;
    compare_states(&cpu, &arch).map_err(|m| Mismatch(format!("seed {}: {}\n{}", w.seed, m.0, w.source)))?;
    if cpu.retired_log != arch.retired {
        return Err(Mismatch(format!("seed {}: retired sequences differ", w.seed)));
    }
    Ok(DiffOutcome { stats, retired: arch.retired.len() })
}

pub fn compare_states(cpu: &CpuState, arch: &ArchState) -> Result<(), Mismatch> {
    if cpu.regs != arch.regs {
        return Err(Mismatch(format!(
            "registers differ: pipeline {:x?} reference {:x?}",
            cpu.regs.values(),
            arch.regs.values()
        )));
    }
    let a: Vec<_> = cpu.dmem.iter().collect();
    let b: Vec<_> = arch.dmem.iter().collect();
    if a != b {
        return Err(Mismatch(format!("data memory differs: pipeline {a:x?} reference {b:x?}")));
    }
    if cpu.key != arch.key {
        return Err(Mismatch("key register differs".into()));
    }
    if cpu.crypt_mode != arch.crypt_mode {
        return Err(Mismatch("crypt mode differs".into()));
    }
    Ok(())
}

/// Runs a workload's encrypted image and its plaintext image with fetch
/// decryption forced off; returns both machines.
pub fn run_transparency_pair(w: &Workload, max_cycles: u64) -> Result<(CpuState, CpuState), RunError> {
    let enc_cfg = SimConfig { record_retired: true, ..SimConfig::default() };
    let plain_cfg = SimConfig { decrypt_fetch: false, ..enc_cfg };
    let mut enc = CpuState::new(w.imem(), w.dmem(), enc_cfg);
    enc.run(max_cycles)?;
    let mut plain = CpuState::new(w.plain_imem(), w.dmem(), plain_cfg);
    plain.run(max_cycles)?;
    Ok((enc, plain))
}
