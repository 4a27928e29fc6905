//! Toolchain and cycle-accurate simulator for a 32-bit MIPS pipeline that
//! executes DES-encrypted instruction streams.
//!
//! * [`isa`]: instruction formats and the word codec
//! * [`des`]: the block cipher used on fetch, store and by the image encryptor
//! * [`asm`]: assembler, block packer, image encryption, hex image files
//! * [`machine`]: register file, key register, block memories
//! * [`pipeline`]: five-stage pipeline and the single-cycle reference model
//! * [`batch`], [`workload`]: parallel batch runs over generated programs

pub mod asm;
pub mod batch;
pub mod des;
pub mod isa;
pub mod machine;
pub mod pipeline;
pub mod workload;

pub use asm::{AsmError, AsmOptions, MemoryImage, ProgramImage};
pub use des::{DesKey, KeySchedule};
pub use isa::{Instruction, Reg};
pub use machine::{KeyRegister, Memory, RegisterFile};
pub use pipeline::{CpuState, Fault, RunError, SimConfig, Stats};
