//! Line-oriented parser for the assembly dialect.
//!
//! ```text
//! Loop:  add $r5, $r2, $r2     # comment
//!        lw  $r6, 0($r5)       ; also a comment
//!        lkw 0($r1)
//!        crypt 1
//! ```

use crate::isa::{Mnemonic, Reg};

use super::AsmError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Reg(Reg),
    Imm(i64),
    Mem { offset: i64, base: Reg },
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsmInstr {
    pub mnemonic: Mnemonic,
    pub operands: Vec<Operand>,
}

/// One non-empty source line. A label-only line has `instr == None` and
/// binds its label to the next instruction slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub line: usize,
    pub label: Option<String>,
    pub instr: Option<AsmInstr>,
}

impl Statement {
    pub fn instruction(line: usize, mnemonic: Mnemonic, operands: Vec<Operand>) -> Self {
        Statement { line, label: None, instr: Some(AsmInstr { mnemonic, operands }) }
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_reg(tok: &str) -> Option<Reg> {
    let rest = tok.strip_prefix('$')?;
    let digits = rest.strip_prefix('r').or_else(|| rest.strip_prefix('R')).unwrap_or(rest);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Reg::new(digits.parse().ok()?).ok()
}

fn parse_int(tok: &str) -> Option<i64> {
    let (neg, body) = match tok.as_bytes().first()? {
        b'-' => (true, &tok[1..]),
        b'+' => (false, &tok[1..]),
        _ => (false, tok),
    };
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()?
    } else if !body.is_empty() && body.bytes().all(|b| b.is_ascii_digit()) {
        body.parse().ok()?
    } else {
        return None;
    };
    Some(if neg { -v } else { v })
}

fn parse_operand(tok: &str, line: usize) -> Result<Operand, AsmError> {
    let bad = |reason: String| AsmError::BadOperand { line, reason };
    if tok.starts_with('$') {
        return parse_reg(tok).map(Operand::Reg).ok_or_else(|| bad(format!("bad register `{tok}`")));
    }
    if let Some(open) = tok.find('(') {
        let close = tok.strip_suffix(')').ok_or_else(|| bad(format!("unterminated memory operand `{tok}`")))?;
        let offset_text = tok[..open].trim();
        let offset = if offset_text.is_empty() {
            0
        } else {
            parse_int(offset_text).ok_or_else(|| bad(format!("bad offset `{offset_text}`")))?
        };
        let base_text = close[open + 1..].trim();
        let base = parse_reg(base_text).ok_or_else(|| bad(format!("bad base register `{base_text}`")))?;
        return Ok(Operand::Mem { offset, base });
    }
    if let Some(v) = parse_int(tok) {
        return Ok(Operand::Imm(v));
    }
    if is_ident(tok) {
        return Ok(Operand::Label(tok.to_string()));
    }
    Err(bad(format!("malformed operand `{tok}`")))
}

#[derive(Clone, Copy)]
enum Kind {
    Reg,
    Imm,
    Mem,
    Target,
}

fn shape(m: Mnemonic) -> &'static [Kind] {
    use Kind::*;
    match m {
        Mnemonic::Add | Mnemonic::Sub | Mnemonic::And | Mnemonic::Or | Mnemonic::Slt => &[Reg, Reg, Reg],
        Mnemonic::Sll | Mnemonic::Addi => &[Reg, Reg, Imm],
        Mnemonic::Lw | Mnemonic::Sw => &[Reg, Mem],
        Mnemonic::Beq | Mnemonic::Bne => &[Reg, Reg, Target],
        Mnemonic::J => &[Target],
        Mnemonic::Lklw | Mnemonic::Lkuw => &[Mem],
        Mnemonic::Crypt => &[Imm],
        Mnemonic::Nop => &[],
    }
}

fn check_shape(m: Mnemonic, ops: &[Operand], line: usize) -> Result<(), AsmError> {
    let want = shape(m);
    if ops.len() != want.len() {
        return Err(AsmError::BadOperand {
            line,
            reason: format!("`{m}` takes {} operand(s), got {}", want.len(), ops.len()),
        });
    }
    for (i, (kind, op)) in want.iter().zip(ops).enumerate() {
        let ok = matches!(
            (kind, op),
            (Kind::Reg, Operand::Reg(_))
                | (Kind::Imm, Operand::Imm(_))
                | (Kind::Mem, Operand::Mem { .. })
                | (Kind::Target, Operand::Label(_) | Operand::Imm(_))
        );
        if !ok {
            return Err(AsmError::BadOperand {
                line,
                reason: format!("operand {} of `{m}` has the wrong kind", i + 1),
            });
        }
    }
    Ok(())
}

pub fn parse_line(text: &str, line: usize) -> Result<Option<Statement>, AsmError> {
    let code = text.split(['#', ';']).next().unwrap_or("").trim();
    if code.is_empty() {
        return Ok(None);
    }
    let (label, rest) = match code.split_once(':') {
        Some((head, tail)) if is_ident(head.trim()) => (Some(head.trim().to_string()), tail.trim()),
        Some(_) => {
            return Err(AsmError::Syntax { line, reason: "bad label".into() });
        }
        None => (None, code),
    };
    if rest.is_empty() {
        return Ok(Some(Statement { line, label, instr: None }));
    }
    let (name, args) = match rest.split_once(char::is_whitespace) {
        Some((n, a)) => (n, a.trim()),
        None => (rest, ""),
    };
    let mnemonic = Mnemonic::parse(name).ok_or_else(|| AsmError::UnknownMnemonic { line, name: name.to_string() })?;
    let operands = if args.is_empty() {
        Vec::new()
    } else {
        args.split(',')
            .map(|t| {
                let t = t.trim();
                if t.is_empty() {
                    Err(AsmError::Syntax { line, reason: "empty operand".into() })
                } else {
                    parse_operand(t, line)
                }
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    check_shape(mnemonic, &operands, line)?;
    Ok(Some(Statement { line, label, instr: Some(AsmInstr { mnemonic, operands }) }))
}

/// Parses a whole source file; line numbers are 1-based.
pub fn parse(source: &str) -> Result<Vec<Statement>, AsmError> {
    source.lines().enumerate().filter_map(|(i, l)| parse_line(l, i + 1).transpose()).collect()
}
