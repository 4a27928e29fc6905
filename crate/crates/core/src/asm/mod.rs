//! Two-pass assembler, block packer and image encryptor.
//!
//! Every instruction occupies its own zero-padded 64-bit block, so slot `i`
//! lives at byte address `8 * i`. Branch displacements and jump targets are
//! counted in slots.

mod hex;
mod parser;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::batch;
use crate::des::{self, DesKey, KeySchedule};
use crate::isa::{self, IOp, Instruction, JOp, Mnemonic, RFunct, Reg};

pub use hex::{read_hex, write_hex, MemoryImage};
pub use parser::{parse, parse_line, AsmInstr, Operand, Statement};

/// Bytes per instruction slot.
pub const SLOT_BYTES: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmError {
    #[error("line {line}: syntax error: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: unknown mnemonic `{name}`")]
    UnknownMnemonic { line: usize, name: String },
    #[error("line {line}: {reason}")]
    BadOperand { line: usize, reason: String },
    #[error("line {line}: undefined label `{label}`")]
    UndefinedLabel { line: usize, label: String },
    #[error("line {line}: duplicate label `{label}`")]
    DuplicateLabel { line: usize, label: String },
    #[error("line {line}: branch or jump target out of range")]
    BranchOutOfRange { line: usize },
    #[error("image has no crypt instruction")]
    NoCryptInstruction,
    #[error("image has {0} crypt instructions; pass an explicit boundary")]
    MultipleCryptInstructions(usize),
    #[error("boundary {boundary} does not follow the crypt instruction at block {crypt}")]
    BoundaryBeforeCrypt { boundary: usize, crypt: usize },
    #[error("boundary {0} is past the end of the image")]
    BoundaryOutOfRange(usize),
    #[error("image is already encrypted")]
    AlreadyEncrypted,
    #[error("hex line {line}: expected 16 hex digits or an @address directive")]
    BadHexLine { line: usize },
    #[error("hex line {line}: address 0x{addr:x} is not 8-byte aligned")]
    UnalignedAddressDirective { line: usize, addr: u32 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AsmOptions {
    /// Insert NOPs so at least two instructions separate a key load from `crypt`.
    pub auto_nop: bool,
}

/// Output of [`assemble`]: one word per slot plus label addresses.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assembly {
    pub words: Vec<u32>,
    pub symbols: BTreeMap<String, u32>,
    /// Source line of each word.
    pub lines: Vec<usize>,
}

/// An assembled program as memory blocks.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProgramImage {
    pub blocks: Vec<u64>,
    pub symbols: BTreeMap<String, u32>,
    /// Index of the first encrypted block, once encrypted.
    pub crypt_boundary: Option<usize>,
}

impl ProgramImage {
    pub fn from_words(words: &[u32]) -> Self {
        ProgramImage { blocks: pack(words), ..Default::default() }
    }

    pub fn from_assembly(asm: &Assembly) -> Self {
        ProgramImage { blocks: pack(&asm.words), symbols: asm.symbols.clone(), crypt_boundary: None }
    }

    pub fn to_memory_image(&self) -> MemoryImage {
        MemoryImage::from_blocks(&self.blocks)
    }

    /// Block indices holding a `crypt` instruction (plaintext payloads only).
    pub fn crypt_indices(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, &b)| matches!(isa::decode(des::payload(b)), Ok(Instruction::J { op: JOp::Crypt, .. })))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Zero-pads each word into its own block.
pub fn pack(words: &[u32]) -> Vec<u64> {
    words.iter().map(|&w| des::pad(w)).collect()
}

fn is_key_load(s: &Statement) -> bool {
    matches!(s.instr.as_ref().map(|i| i.mnemonic), Some(Mnemonic::Lklw | Mnemonic::Lkuw))
}

/// Ensures two instructions sit between the nearest preceding key load and each `crypt`.
pub fn insert_key_nops(statements: &[Statement]) -> Vec<Statement> {
    let mut out: Vec<Statement> = Vec::with_capacity(statements.len());
    for st in statements {
        let is_crypt = matches!(st.instr.as_ref().map(|i| i.mnemonic), Some(Mnemonic::Crypt));
        if is_crypt {
            let recent: Vec<&Statement> = out.iter().rev().filter(|s| s.instr.is_some()).take(2).collect();
            if let Some(gap) = recent.iter().position(|s| is_key_load(s)) {
                let mut label = st.label.clone();
                for _ in gap..2 {
                    out.push(Statement {
                        line: st.line,
                        label: label.take(),
                        instr: Some(AsmInstr { mnemonic: Mnemonic::Nop, operands: vec![] }),
                    });
                }
                out.push(Statement { label: None, ..st.clone() });
                continue;
            }
        }
        out.push(st.clone());
    }
    out
}

fn fits_imm16(v: i64) -> bool {
    (-32768..=65535).contains(&v)
}

fn operand_reg(op: &Operand) -> Reg {
    match op {
        Operand::Reg(r) => *r,
        _ => unreachable!("operand kinds are checked by the parser"),
    }
}

fn encode_statement(
    ins: &AsmInstr,
    line: usize,
    slot: usize,
    symbols: &BTreeMap<String, u32>,
) -> Result<u32, AsmError> {
    let ops = &ins.operands;
    let bad = |reason: &str| AsmError::BadOperand { line, reason: reason.to_string() };
    let target_slot = |op: &Operand| -> Result<i64, AsmError> {
        match op {
            Operand::Label(l) => symbols
                .get(l)
                .map(|&a| i64::from(a / SLOT_BYTES))
                .ok_or_else(|| AsmError::UndefinedLabel { line, label: l.clone() }),
            Operand::Imm(v) => Ok(*v),
            _ => unreachable!(),
        }
    };
    let mem = |op: &Operand| -> Result<(i64, Reg), AsmError> {
        match op {
            Operand::Mem { offset, base } if fits_imm16(*offset) => Ok((*offset, *base)),
            Operand::Mem { .. } => Err(bad("offset does not fit 16 bits")),
            _ => unreachable!(),
        }
    };
    let rfunct = |f: RFunct| Instruction::r(f, operand_reg(&ops[0]), operand_reg(&ops[1]), operand_reg(&ops[2]));
    let itype = |op: IOp, rt: Reg, rs: Reg, imm: i64| Instruction::I { op, rs, rt, imm: imm as u16 };

    let instr = match ins.mnemonic {
        Mnemonic::Nop => Instruction::NOP,
        Mnemonic::Add => rfunct(RFunct::Add),
        Mnemonic::Sub => rfunct(RFunct::Sub),
        Mnemonic::And => rfunct(RFunct::And),
        Mnemonic::Or => rfunct(RFunct::Or),
        Mnemonic::Slt => rfunct(RFunct::Slt),
        Mnemonic::Sll => match ops[2] {
            Operand::Imm(s) if (0..32).contains(&s) => {
                Instruction::sll(operand_reg(&ops[0]), operand_reg(&ops[1]), s as u8)
            }
            _ => return Err(bad("shift amount must be 0..=31")),
        },
        Mnemonic::Addi => match ops[2] {
            Operand::Imm(v) if fits_imm16(v) => itype(IOp::Addi, operand_reg(&ops[0]), operand_reg(&ops[1]), v),
            _ => return Err(bad("immediate does not fit 16 bits")),
        },
        Mnemonic::Lw | Mnemonic::Sw => {
            let (off, base) = mem(&ops[1])?;
            let op = if ins.mnemonic == Mnemonic::Lw { IOp::Lw } else { IOp::Sw };
            itype(op, operand_reg(&ops[0]), base, off)
        }
        Mnemonic::Lklw | Mnemonic::Lkuw => {
            let (off, base) = mem(&ops[0])?;
            let op = if ins.mnemonic == Mnemonic::Lklw { IOp::Lklw } else { IOp::Lkuw };
            itype(op, Reg::ZERO, base, off)
        }
        Mnemonic::Beq | Mnemonic::Bne => {
            let disp = match &ops[2] {
                Operand::Label(_) => target_slot(&ops[2])? - (slot as i64 + 1),
                Operand::Imm(v) => *v,
                _ => unreachable!(),
            };
            if !(i64::from(i16::MIN)..=i64::from(i16::MAX)).contains(&disp) {
                return Err(AsmError::BranchOutOfRange { line });
            }
            let op = if ins.mnemonic == Mnemonic::Beq { IOp::Beq } else { IOp::Bne };
            Instruction::I { op, rs: operand_reg(&ops[0]), rt: operand_reg(&ops[1]), imm: disp as i16 as u16 }
        }
        Mnemonic::J => {
            let t = target_slot(&ops[0])?;
            if !(0..=i64::from(isa::TARGET_MASK)).contains(&t) {
                return Err(AsmError::BranchOutOfRange { line });
            }
            Instruction::j(JOp::J, t as u32)
        }
        Mnemonic::Crypt => match ops[0] {
            Operand::Imm(v) if (0..=i64::from(isa::TARGET_MASK)).contains(&v) => Instruction::j(JOp::Crypt, v as u32),
            _ => return Err(bad("crypt flag must fit 26 bits")),
        },
    };
    isa::encode(&instr).map_err(|e| bad(&e.to_string()))
}

/// Pass one assigns slot addresses to labels, pass two encodes.
pub fn assemble(statements: &[Statement]) -> Result<Assembly, AsmError> {
    let mut symbols = BTreeMap::new();
    let mut slot = 0u32;
    for st in statements {
        if let Some(label) = &st.label {
            if symbols.insert(label.clone(), slot * SLOT_BYTES).is_some() {
                return Err(AsmError::DuplicateLabel { line: st.line, label: label.clone() });
            }
        }
        if st.instr.is_some() {
            slot += 1;
        }
    }

    let mut asm = Assembly { symbols, ..Default::default() };
    for st in statements {
        if let Some(ins) = &st.instr {
            let word = encode_statement(ins, st.line, asm.words.len(), &asm.symbols)?;
            asm.words.push(word);
            asm.lines.push(st.line);
        }
    }
    Ok(asm)
}

/// Parse, optionally insert key NOPs, assemble and pack.
pub fn assemble_source(source: &str, opts: AsmOptions) -> Result<ProgramImage, AsmError> {
    let mut statements = parse(source)?;
    if opts.auto_nop {
        statements = insert_key_nops(&statements);
    }
    Ok(ProgramImage::from_assembly(&assemble(&statements)?))
}

/// Encrypts every block after the `crypt` instruction (or from `boundary`
/// when given) with DES under `key`.
pub fn encrypt_image(image: &ProgramImage, key: DesKey, boundary: Option<usize>) -> Result<ProgramImage, AsmError> {
    if image.crypt_boundary.is_some() {
        return Err(AsmError::AlreadyEncrypted);
    }
    let crypts = image.crypt_indices();
    let boundary = match boundary {
        Some(b) => {
            if b > image.blocks.len() {
                return Err(AsmError::BoundaryOutOfRange(b));
            }
            if let Some(&c) = crypts.first().filter(|&&c| b <= c) {
                return Err(AsmError::BoundaryBeforeCrypt { boundary: b, crypt: c });
            }
            b
        }
        None => match crypts.as_slice() {
            [] => return Err(AsmError::NoCryptInstruction),
            [c] => c + 1,
            many => return Err(AsmError::MultipleCryptInstructions(many.len())),
        },
    };
    let sched = KeySchedule::new(key);
    let mut blocks = image.blocks[..boundary].to_vec();
    blocks.extend(batch::map(&image.blocks[boundary..], |&b| des::encrypt_block(b, &sched)));
    Ok(ProgramImage { blocks, symbols: image.symbols.clone(), crypt_boundary: Some(boundary) })
}

/// Decrypts the region after the boundary; inverse of [`encrypt_image`].
pub fn decrypt_image(image: &ProgramImage, key: DesKey) -> ProgramImage {
    let Some(boundary) = image.crypt_boundary else {
        return image.clone();
    };
    let sched = KeySchedule::new(key);
    let mut blocks = image.blocks[..boundary].to_vec();
    blocks.extend(batch::map(&image.blocks[boundary..], |&b| des::decrypt_block(b, &sched)));
    ProgramImage { blocks, symbols: image.symbols.clone(), crypt_boundary: None }
}

/// Renders words as a source listing, one canonical instruction per line.
pub fn disassemble_listing(words: &[u32]) -> Result<String, isa::IsaError> {
    let mut s = String::new();
    for &w in words {
        s.push_str(&isa::disassemble(&isa::decode(w)?));
        s.push('\n');
    }
    Ok(s)
}

/// Address to label lookup, for listings and traces.
pub fn labels_by_address(symbols: &BTreeMap<String, u32>) -> HashMap<u32, Vec<&str>> {
    let mut m: HashMap<u32, Vec<&str>> = HashMap::new();
    for (name, &addr) in symbols {
        m.entry(addr).or_default().push(name);
    }
    m
}
