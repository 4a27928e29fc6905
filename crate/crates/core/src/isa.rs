//! Instruction formats, opcode table and the word <-> instruction codec.
//!
//! Field layout (bit positions inside the 32-bit word):
//!
//! ```text
//! R: op[31:26] rs[25:21] rt[20:16] rd[15:11] shamt[10:6] funct[5:0]
//! I: op[31:26] rs[25:21] rt[20:16] imm[15:0]
//! J: op[31:26] target[25:0]
//! ```

use std::fmt;

use thiserror::Error;

pub const OPCODE_SHIFT: u32 = 26;
pub const RS_SHIFT: u32 = 21;
pub const RT_SHIFT: u32 = 16;
pub const RD_SHIFT: u32 = 11;
pub const SHAMT_SHIFT: u32 = 6;

pub const OPCODE_MASK: u32 = 0x3F << OPCODE_SHIFT;
pub const RS_MASK: u32 = 0x1F << RS_SHIFT;
pub const RT_MASK: u32 = 0x1F << RT_SHIFT;
pub const RD_MASK: u32 = 0x1F << RD_SHIFT;
pub const SHAMT_MASK: u32 = 0x1F << SHAMT_SHIFT;
pub const FUNCT_MASK: u32 = 0x3F;
pub const IMM_MASK: u32 = 0xFFFF;
pub const TARGET_MASK: u32 = 0x03FF_FFFF;

/// The all-zero word, `sll $r0, $r0, 0`.
pub const NOP: u32 = 0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsaError {
    #[error("unknown instruction 0x{0:08x}")]
    UnknownInstruction(u32),
    #[error("field `{0}` exceeds its width")]
    FieldOverflow(&'static str),
    #[error("register index {0} out of range")]
    BadRegister(u32),
}

/// A general-purpose register index, always in `0..=31`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Reg(u8);

impl Reg {
    pub const ZERO: Reg = Reg(0);

    pub fn new(index: u32) -> Result<Self, IsaError> {
        if index < 32 {
            Ok(Reg(index as u8))
        } else {
            Err(IsaError::BadRegister(index))
        }
    }

    /// Takes the low five bits.
    pub const fn from_field(bits: u32) -> Self {
        Reg((bits & 0x1F) as u8)
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "$r{}", self.0)
    }
}

/// R-type operations, selected by the funct field under opcode 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RFunct {
    Sll,
    Add,
    Sub,
    And,
    Or,
    Slt,
}

impl RFunct {
    pub const ALL: [RFunct; 6] = [Self::Sll, Self::Add, Self::Sub, Self::And, Self::Or, Self::Slt];

    pub const fn code(self) -> u32 {
        match self {
            Self::Sll => 0x00,
            Self::Add => 0x20,
            Self::Sub => 0x22,
            Self::And => 0x24,
            Self::Or => 0x25,
            Self::Slt => 0x2A,
        }
    }

    pub fn from_code(funct: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.code() == funct)
    }
}

/// I-type operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IOp {
    Addi,
    Lw,
    Sw,
    Beq,
    Bne,
    Lklw,
    Lkuw,
}

impl IOp {
    pub const ALL: [IOp; 7] = [Self::Addi, Self::Lw, Self::Sw, Self::Beq, Self::Bne, Self::Lklw, Self::Lkuw];

    pub const fn code(self) -> u32 {
        match self {
            Self::Addi => 0x08,
            Self::Lw => 0x23,
            Self::Sw => 0x2B,
            Self::Beq => 0x04,
            Self::Bne => 0x05,
            Self::Lklw => 0x1A,
            Self::Lkuw => 0x1B,
        }
    }

    pub fn from_code(op: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.code() == op)
    }
}

/// J-type operations. `crypt` reuses the target field as its flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JOp {
    J,
    Crypt,
}

impl JOp {
    pub const ALL: [JOp; 2] = [Self::J, Self::Crypt];

    pub const fn code(self) -> u32 {
        match self {
            Self::J => 0x02,
            Self::Crypt => 0x1C,
        }
    }

    pub fn from_code(op: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.code() == op)
    }
}

/// Assembly mnemonics. `Nop` is the pseudo-instruction `sll $r0, $r0, 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mnemonic {
    Add,
    Sub,
    And,
    Or,
    Slt,
    Sll,
    Addi,
    Lw,
    Sw,
    Beq,
    Bne,
    J,
    Lklw,
    Lkuw,
    Crypt,
    Nop,
}

impl Mnemonic {
    pub const ALL: [Mnemonic; 16] = [
        Self::Add,
        Self::Sub,
        Self::And,
        Self::Or,
        Self::Slt,
        Self::Sll,
        Self::Addi,
        Self::Lw,
        Self::Sw,
        Self::Beq,
        Self::Bne,
        Self::J,
        Self::Lklw,
        Self::Lkuw,
        Self::Crypt,
        Self::Nop,
    ];

    /// Case-insensitive lookup; `lkw` is accepted as an alias of `lklw`.
    pub fn parse(name: &str) -> Option<Self> {
        let lower = name.to_ascii_lowercase();
        if lower == "lkw" {
            return Some(Self::Lklw);
        }
        Self::ALL.into_iter().find(|m| m.name() == lower)
    }

    pub const fn name(self) -> &'static str {
        match self {
            Self::Add => "add",
            Self::Sub => "sub",
            Self::And => "and",
            Self::Or => "or",
            Self::Slt => "slt",
            Self::Sll => "sll",
            Self::Addi => "addi",
            Self::Lw => "lw",
            Self::Sw => "sw",
            Self::Beq => "beq",
            Self::Bne => "bne",
            Self::J => "j",
            Self::Lklw => "lklw",
            Self::Lkuw => "lkuw",
            Self::Crypt => "crypt",
            Self::Nop => "nop",
        }
    }

    /// The `(opcode, funct)` pair; funct is `None` outside R-type.
    pub const fn encoding(self) -> (u32, Option<u32>) {
        match self {
            Self::Add => (0, Some(RFunct::Add.code())),
            Self::Sub => (0, Some(RFunct::Sub.code())),
            Self::And => (0, Some(RFunct::And.code())),
            Self::Or => (0, Some(RFunct::Or.code())),
            Self::Slt => (0, Some(RFunct::Slt.code())),
            Self::Sll | Self::Nop => (0, Some(RFunct::Sll.code())),
            Self::Addi => (IOp::Addi.code(), None),
            Self::Lw => (IOp::Lw.code(), None),
            Self::Sw => (IOp::Sw.code(), None),
            Self::Beq => (IOp::Beq.code(), None),
            Self::Bne => (IOp::Bne.code(), None),
            Self::Lklw => (IOp::Lklw.code(), None),
            Self::Lkuw => (IOp::Lkuw.code(), None),
            Self::J => (JOp::J.code(), None),
            Self::Crypt => (JOp::Crypt.code(), None),
        }
    }
}

impl fmt::Display for Mnemonic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A decoded instruction. Every field is kept verbatim so that
/// `encode(decode(w)) == w` for any recognized word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instruction {
    R { funct: RFunct, rs: Reg, rt: Reg, rd: Reg, shamt: u8 },
    I { op: IOp, rs: Reg, rt: Reg, imm: u16 },
    J { op: JOp, target: u32 },
}

impl Instruction {
    pub const NOP: Instruction =
        Instruction::R { funct: RFunct::Sll, rs: Reg::ZERO, rt: Reg::ZERO, rd: Reg::ZERO, shamt: 0 };

    pub fn r(funct: RFunct, rd: Reg, rs: Reg, rt: Reg) -> Self {
        Instruction::R { funct, rs, rt, rd, shamt: 0 }
    }

    pub fn sll(rd: Reg, rt: Reg, shamt: u8) -> Self {
        Instruction::R { funct: RFunct::Sll, rs: Reg::ZERO, rt, rd, shamt }
    }

    pub fn i(op: IOp, rt: Reg, rs: Reg, imm: i16) -> Self {
        Instruction::I { op, rs, rt, imm: imm as u16 }
    }

    pub fn j(op: JOp, target: u32) -> Self {
        Instruction::J { op, target }
    }

    pub fn mnemonic(&self) -> Mnemonic {
        match *self {
            Instruction::R { funct, .. } => match funct {
                RFunct::Sll => Mnemonic::Sll,
                RFunct::Add => Mnemonic::Add,
                RFunct::Sub => Mnemonic::Sub,
                RFunct::And => Mnemonic::And,
                RFunct::Or => Mnemonic::Or,
                RFunct::Slt => Mnemonic::Slt,
            },
            Instruction::I { op, .. } => match op {
                IOp::Addi => Mnemonic::Addi,
                IOp::Lw => Mnemonic::Lw,
                IOp::Sw => Mnemonic::Sw,
                IOp::Beq => Mnemonic::Beq,
                IOp::Bne => Mnemonic::Bne,
                IOp::Lklw => Mnemonic::Lklw,
                IOp::Lkuw => Mnemonic::Lkuw,
            },
            Instruction::J { op: JOp::J, .. } => Mnemonic::J,
            Instruction::J { op: JOp::Crypt, .. } => Mnemonic::Crypt,
        }
    }

    pub fn is_nop(&self) -> bool {
        *self == Self::NOP
    }

    /// Sign-extended immediate of an I-type instruction.
    pub fn simm(&self) -> Option<i32> {
        match *self {
            Instruction::I { imm, .. } => Some(imm as i16 as i32),
            _ => None,
        }
    }

    /// Registers this instruction reads.
    pub fn sources(&self) -> Vec<Reg> {
        match *self {
            Instruction::R { funct: RFunct::Sll, rt, .. } => vec![rt],
            Instruction::R { rs, rt, .. } => vec![rs, rt],
            Instruction::I { op, rs, rt, .. } => match op {
                IOp::Sw | IOp::Beq | IOp::Bne => vec![rs, rt],
                IOp::Addi | IOp::Lw | IOp::Lklw | IOp::Lkuw => vec![rs],
            },
            Instruction::J { .. } => Vec::new(),
        }
    }

    /// The general-purpose register written by this instruction, if any.
    /// `$r0` destinations are reported as `None`.
    pub fn dest(&self) -> Option<Reg> {
        let d = match *self {
            Instruction::R { rd, .. } => rd,
            Instruction::I { op: IOp::Addi | IOp::Lw, rt, .. } => rt,
            _ => return None,
        };
        (!d.is_zero()).then_some(d)
    }
}

/// Splits a word into fields and classifies it against the opcode table.
pub fn decode(word: u32) -> Result<Instruction, IsaError> {
    let opcode = (word & OPCODE_MASK) >> OPCODE_SHIFT;
    let rs = Reg::from_field(word >> RS_SHIFT);
    let rt = Reg::from_field(word >> RT_SHIFT);
    if opcode == 0 {
        let funct = RFunct::from_code(word & FUNCT_MASK).ok_or(IsaError::UnknownInstruction(word))?;
        return Ok(Instruction::R {
            funct,
            rs,
            rt,
            rd: Reg::from_field(word >> RD_SHIFT),
            shamt: ((word & SHAMT_MASK) >> SHAMT_SHIFT) as u8,
        });
    }
    if let Some(op) = IOp::from_code(opcode) {
        return Ok(Instruction::I { op, rs, rt, imm: (word & IMM_MASK) as u16 });
    }
    if let Some(op) = JOp::from_code(opcode) {
        return Ok(Instruction::J { op, target: word & TARGET_MASK });
    }
    Err(IsaError::UnknownInstruction(word))
}

pub fn encode(instr: &Instruction) -> Result<u32, IsaError> {
    match *instr {
        Instruction::R { funct, rs, rt, rd, shamt } => {
            if u32::from(shamt) > 0x1F {
                return Err(IsaError::FieldOverflow("shamt"));
            }
            Ok((rs.0 as u32) << RS_SHIFT
                | (rt.0 as u32) << RT_SHIFT
                | (rd.0 as u32) << RD_SHIFT
                | u32::from(shamt) << SHAMT_SHIFT
                | funct.code())
        }
        Instruction::I { op, rs, rt, imm } => {
            Ok(op.code() << OPCODE_SHIFT | (rs.0 as u32) << RS_SHIFT | (rt.0 as u32) << RT_SHIFT | u32::from(imm))
        }
        Instruction::J { op, target } => {
            if target > TARGET_MASK {
                return Err(IsaError::FieldOverflow("target"));
            }
            Ok(op.code() << OPCODE_SHIFT | target)
        }
    }
}

/// Canonical assembly text, accepted back by the assembler. Branch and jump
/// targets are printed numerically (slot displacement / slot index).
pub fn disassemble(instr: &Instruction) -> String {
    let m = instr.mnemonic();
    match *instr {
        _ if instr.is_nop() => "nop".to_string(),
        Instruction::R { funct: RFunct::Sll, rt, rd, shamt, .. } => {
            format!("{m} {rd}, {rt}, {shamt}")
        }
        Instruction::R { rs, rt, rd, .. } => format!("{m} {rd}, {rs}, {rt}"),
        Instruction::I { op, rs, rt, imm } => {
            let simm = imm as i16;
            match op {
                IOp::Addi => format!("{m} {rt}, {rs}, {simm}"),
                IOp::Lw | IOp::Sw => format!("{m} {rt}, {simm}({rs})"),
                IOp::Beq | IOp::Bne => format!("{m} {rs}, {rt}, {simm}"),
                IOp::Lklw | IOp::Lkuw => format!("{m} {simm}({rs})"),
            }
        }
        Instruction::J { target, .. } => format!("{m} {target}"),
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&disassemble(self))
    }
}

/// Disassembles a raw word, falling back to a `.word` marker for unknown encodings.
pub fn disassemble_word(word: u32) -> String {
    match decode(word) {
        Ok(i) => disassemble(&i),
        Err(_) => format!(".word 0x{word:08x}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(i: u32) -> Reg {
        Reg::new(i).unwrap()
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode(0x0000_0000).unwrap(), Instruction::NOP);
        assert_eq!(decode(0x2001_0068).unwrap(), Instruction::i(IOp::Addi, r(1), r(0), 104));
        assert_eq!(decode(0x7000_0001).unwrap(), Instruction::j(JOp::Crypt, 1));
    }

    #[test]
    fn encode_examples() {
        assert_eq!(encode(&Instruction::NOP).unwrap(), 0);
        assert_eq!(encode(&Instruction::i(IOp::Lw, r(6), r(5), 0)).unwrap(), 0x8CA6_0000);
        assert_eq!(encode(&Instruction::r(RFunct::Slt, r(7), r(2), r(1))).unwrap(), 0x0041_382A);
    }

    #[test]
    fn disassemble_examples() {
        assert_eq!(disassemble(&decode(0x2001_0068).unwrap()), "addi $r1, $r0, 104");
        assert_eq!(disassemble(&decode(0).unwrap()), "nop");
        assert_eq!(disassemble(&decode(0xAC04_0038).unwrap()), "sw $r4, 56($r0)");
    }

    #[test]
    fn unknown_opcode_and_funct() {
        assert_eq!(decode(0xFC00_0000), Err(IsaError::UnknownInstruction(0xFC00_0000)));
        // opcode 0 with funct 0x01
        assert_eq!(decode(0x0000_0001), Err(IsaError::UnknownInstruction(1)));
    }

    #[test]
    fn field_overflow() {
        let bad = Instruction::R { funct: RFunct::Sll, rs: Reg::ZERO, rt: Reg::ZERO, rd: Reg::ZERO, shamt: 32 };
        assert_eq!(encode(&bad), Err(IsaError::FieldOverflow("shamt")));
        assert_eq!(encode(&Instruction::j(JOp::J, 1 << 26)), Err(IsaError::FieldOverflow("target")));
        assert_eq!(Reg::new(32), Err(IsaError::BadRegister(32)));
    }

    #[test]
    fn masks_partition_word() {
        let r_masks = [OPCODE_MASK, RS_MASK, RT_MASK, RD_MASK, SHAMT_MASK, FUNCT_MASK];
        let i_masks = [OPCODE_MASK, RS_MASK, RT_MASK, IMM_MASK];
        let j_masks = [OPCODE_MASK, TARGET_MASK];
        for masks in [&r_masks[..], &i_masks[..], &j_masks[..]] {
            let mut acc = 0u32;
            for m in masks {
                assert_eq!(acc & m, 0, "overlap");
                acc |= m;
            }
            assert_eq!(acc, u32::MAX, "gap");
        }
    }

    #[test]
    fn every_mnemonic_has_one_encoding() {
        for m in Mnemonic::ALL {
            let (op, funct) = m.encoding();
            assert!(op < 64);
            assert_eq!(funct.is_some(), op == 0, "{m}");
        }
        assert_eq!(Mnemonic::parse("LKW"), Some(Mnemonic::Lklw));
        assert_eq!(Mnemonic::parse("bogus"), None);
    }

    #[test]
    fn dest_and_sources() {
        let lw = Instruction::i(IOp::Lw, r(6), r(5), 0);
        assert_eq!(lw.dest(), Some(r(6)));
        assert_eq!(lw.sources(), vec![r(5)]);
        assert_eq!(Instruction::i(IOp::Sw, r(4), r(0), 56).dest(), None);
        assert_eq!(Instruction::i(IOp::Addi, r(0), r(1), 3).dest(), None);
        assert!(Instruction::j(JOp::Crypt, 1).sources().is_empty());
    }

    proptest! {
        #[test]
        fn recognized_words_round_trip(w in any::<u32>()) {
            if let Ok(i) = decode(w) {
                prop_assert_eq!(encode(&i).unwrap(), w);
                prop_assert_eq!(decode(encode(&i).unwrap()).unwrap(), i);
            }
        }

        #[test]
        fn recognized_opcode_space_round_trips(op in prop::sample::select(vec![0x08u32, 0x23, 0x2B, 0x04, 0x05, 0x1A, 0x1B, 0x02, 0x1C]), rest in 0u32..(1 << 26)) {
            let w = op << 26 | rest;
            prop_assert_eq!(encode(&decode(w).unwrap()).unwrap(), w);
        }
    }
}
