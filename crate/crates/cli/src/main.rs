use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use encmips_core::asm::{self, AsmOptions, MemoryImage, ProgramImage};
use encmips_core::des::{self, DesKey, KeySchedule};
use encmips_core::isa::{self, Reg};
use encmips_core::machine::{self, Memory};
use encmips_core::pipeline::{self, CpuState, RunError, SimConfig};

#[derive(Parser, Debug)]
#[command(
    name = "encmips",
    version,
    about = "Assembler and cycle-accurate simulator for a MIPS pipeline with DES-encrypted instruction fetch"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Assemble a source file into a hex image
    Asm(AsmArgs),
    /// Run an instruction image on the pipeline
    Run(RunArgs),
    /// Encrypt or decrypt a single 64-bit block
    Des(DesArgs),
    /// Print a hex image, optionally decrypted and disassembled
    Dump(DumpArgs),
}

#[derive(Args, Debug)]
struct AsmArgs {
    source: PathBuf,
    /// Output image (default: SOURCE with a .hex extension)
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Encrypt every block after the crypt instruction
    #[arg(long, requires = "key")]
    encrypt: bool,
    /// DES key, 16 hex digits
    #[arg(long, value_parser = parse_block)]
    key: Option<u64>,
    /// Pad key loads with nops so the key is ready before crypt
    #[arg(long)]
    auto_nop: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Instruction memory image
    #[arg(long)]
    imem: PathBuf,
    /// Data memory image
    #[arg(long)]
    dmem: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    max_cycles: u64,
    /// Print one line per cycle to stderr
    #[arg(long)]
    trace: bool,
    /// Decrypt loaded data while crypt mode is on
    #[arg(long)]
    decrypt_loads: bool,
    /// Registers to dump: `all` or a list such as `4,7` or `$r4,$r7`
    #[arg(long)]
    regs: Option<String>,
    /// Inclusive byte range of data memory to dump, e.g. `56..63` or `0x0..0x77`
    #[arg(long = "mem", value_parser = parse_range)]
    mem: Vec<(u32, u32)>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DesOp {
    Encrypt,
    Decrypt,
}

#[derive(Args, Debug)]
struct DesArgs {
    op: DesOp,
    #[arg(long, value_parser = parse_block)]
    key: u64,
    #[arg(long, value_parser = parse_block)]
    block: u64,
}

#[derive(Args, Debug)]
struct DumpArgs {
    image: PathBuf,
    /// Disassemble each block's payload
    #[arg(long)]
    disasm: bool,
    /// Decrypt blocks after the boundary with this key
    #[arg(long, value_parser = parse_block)]
    key: Option<u64>,
    /// Index of the first encrypted block (default: after the first crypt)
    #[arg(long, requires = "key")]
    boundary: Option<usize>,
}

fn parse_block(s: &str) -> Result<u64, String> {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    if digits.len() != 16 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(format!("expected 16 hex digits, got `{s}`"));
    }
    u64::from_str_radix(digits, 16).map_err(|e| e.to_string())
}

fn parse_addr(s: &str) -> Result<u32, String> {
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u32::from_str_radix(h, 16),
        None => s.parse(),
    };
    r.map_err(|_| format!("bad address `{s}`"))
}

fn parse_range(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected START..END, got `{s}`"))?;
    let (a, b) = (parse_addr(a)?, parse_addr(b)?);
    if a > b {
        return Err(format!("empty range `{s}`"));
    }
    Ok((a, b))
}

fn parse_regs(spec: &str) -> Result<Vec<Reg>> {
    if spec == "all" {
        return Ok((0..32).map(|i| Reg::new(i).unwrap()).collect());
    }
    spec.split(',')
        .map(|t| {
            let t = t.trim();
            let n = t.trim_start_matches('$').trim_start_matches('r');
            n.parse::<u32>().ok().and_then(|i| Reg::new(i).ok()).ok_or_else(|| anyhow!("bad register `{t}`"))
        })
        .collect()
}

fn read_image(path: &Path) -> Result<MemoryImage> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    asm::read_hex(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_asm(a: AsmArgs) -> Result<ExitCode> {
    let src = fs::read_to_string(&a.source).with_context(|| format!("reading {}", a.source.display()))?;
    let mut img = asm::assemble_source(&src, AsmOptions { auto_nop: a.auto_nop })
        .with_context(|| format!("assembling {}", a.source.display()))?;
    if a.encrypt {
        img = asm::encrypt_image(&img, DesKey(a.key.expect("clap enforces --key")), None)?;
    }
    let out = a.output.unwrap_or_else(|| a.source.with_extension("hex"));
    fs::write(&out, asm::write_hex(&img.to_memory_image())).with_context(|| format!("writing {}", out.display()))?;

    let mut s = format!("blocks: {}\n", img.blocks.len());
    match img.crypt_boundary {
        Some(b) => writeln!(s, "crypt boundary: {b}")?,
        None => writeln!(s, "crypt boundary: none")?,
    }
    let mut symbols: Vec<_> = img.symbols.iter().map(|(n, &a)| (a, n)).collect();
    symbols.sort();
    for (addr, name) in symbols {
        writeln!(s, "{addr:08x} {name}")?;
    }
    print!("{s}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let regs = a.regs.as_deref().map(parse_regs).transpose()?.unwrap_or_default();
    let imem = Memory::from_image(&read_image(&a.imem)?);
    let dmem = match &a.dmem {
        Some(p) => Memory::from_image(&read_image(p)?),
        None => Memory::new(),
    };
    let config = SimConfig { decrypt_loads: a.decrypt_loads, ..SimConfig::default() };
    let mut cpu = CpuState::new(imem, dmem, config);
    let stderr = std::io::stderr();
    let mut err = stderr.lock();
    let result = cpu.run_with(a.max_cycles, |ev| {
        if a.trace {
            let _ = writeln!(err, "{}", pipeline::format_trace_line(ev));
        }
    });
    drop(err);

    let (status, code) = match &result {
        Ok(_) => ("halted".to_string(), ExitCode::SUCCESS),
        Err(e @ RunError::Fault(_)) => (e.to_string(), ExitCode::from(2)),
        Err(e @ RunError::CycleLimitExceeded { .. }) => (e.to_string(), ExitCode::from(3)),
    };
    let mut s = format!("status: {status}\n");
    s.push_str(&pipeline::format_stats(&cpu.stats));
    if !regs.is_empty() {
        s.push_str(&machine::format_registers(&cpu.regs, &regs));
    }
    for &(first, last) in &a.mem {
        s.push_str(&machine::format_memory(&cpu.dmem, first, last));
    }
    print!("{s}");
    Ok(code)
}

fn cmd_des(a: DesArgs) -> Result<ExitCode> {
    let sched = KeySchedule::new(DesKey(a.key));
    let out = match a.op {
        DesOp::Encrypt => des::encrypt_block(a.block, &sched),
        DesOp::Decrypt => des::decrypt_block(a.block, &sched),
    };
    println!("{out:016x}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_dump(a: DumpArgs) -> Result<ExitCode> {
    let image = read_image(&a.image)?;
    let mut entries = image.entries().to_vec();
    if let Some(key) = a.key {
        let blocks: Vec<u64> = entries.iter().map(|&(_, b)| b).collect();
        let boundary = match a.boundary {
            Some(b) => b,
            None => {
                let crypt = ProgramImage { blocks: blocks.clone(), ..Default::default() }.crypt_indices();
                match crypt.first() {
                    Some(c) => c + 1,
                    None => bail!("no crypt instruction found; pass --boundary"),
                }
            }
        };
        if boundary > blocks.len() {
            bail!("boundary {boundary} is past the end of the image");
        }
        let enc = ProgramImage { blocks, symbols: Default::default(), crypt_boundary: Some(boundary) };
        let plain = asm::decrypt_image(&enc, DesKey(key));
        for (e, b) in entries.iter_mut().zip(plain.blocks) {
            e.1 = b;
        }
    }
    let mut s = String::new();
    for (addr, block) in entries {
        write!(s, "{addr:08x}: {block:016x}")?;
        if a.disasm {
            if block >> 32 != 0 {
                s.push_str("  <encrypted>");
            } else {
                write!(s, "  {}", isa::disassemble_word(des::payload(block)))?;
            }
        }
        s.push('\n');
    }
    print!("{s}");
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Asm(a) => cmd_asm(a),
        Command::Run(a) => cmd_run(a),
        Command::Des(a) => cmd_des(a),
        Command::Dump(a) => cmd_dump(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
