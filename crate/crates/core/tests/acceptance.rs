//! Acceptance suite. Each test prints one `PASS`/`FAIL` line; run with
//! `cargo test -p encmips-core --test acceptance -- --nocapture`.

use std::time::{Duration, Instant};

use encmips_core::asm::{self, AsmOptions};
use encmips_core::batch;
use encmips_core::des::{self, decrypt_block, encrypt_block, pad, DesKey, KeySchedule};
use encmips_core::isa::Reg;
use encmips_core::machine::Memory;
use encmips_core::pipeline::{reference_interpret, CpuState, SimConfig, Stats, DRAIN_CYCLES};
use encmips_core::workload::{self, GenOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KEY: u64 = 0x4B49_5241_5450_414C;
const STORED_CIPHERTEXT: u64 = 0x1053_9160_018D_5FF7;
const SUM: u32 = 0xCBA7_67EE;
const SUM_ARRAY: &str = include_str!("../../../programs/sum_array.s");
const SUM_DATA: &str = include_str!("../../../programs/sum_array_data.hex");
const SUM_DATA_ALT: &str = include_str!("../../../programs/sum_array_data_cb97f7ee.hex");

fn report(name: &str, limit: Option<Duration>, check: impl FnOnce() -> Result<String, String>) {
    let start = Instant::now();
    let mut result = check();
    let elapsed = start.elapsed();
    if let (Ok(detail), Some(limit)) = (&result, limit) {
        if elapsed > limit {
            result = Err(format!("{detail}; took {elapsed:?}, limit {limit:?}"));
        }
    }
    match &result {
        Ok(detail) => println!("PASS {name}: {detail} [{elapsed:.2?}]"),
        Err(why) => println!("FAIL {name}: {why} [{elapsed:.2?}]"),
    }
    assert!(result.is_ok(), "{name} failed");
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn enc(key: u64, pt: u64) -> u64 {
    encrypt_block(pt, &KeySchedule::new(DesKey(key)))
}

#[test]
fn des_correctness() {
    report("des_correctness", Some(Duration::from_secs(5)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xDE5);
        for _ in 0..10_000 {
            let (k, p): (u64, u64) = rng.gen();
            let s = KeySchedule::new(DesKey(k));
            ensure(decrypt_block(encrypt_block(p, &s), &s) == p, || format!("round trip key {k:016x} block {p:016x}"))?;
        }
        for _ in 0..1_000 {
            let (k, p): (u64, u64) = rng.gen();
            ensure(enc(!k, !p) == !enc(k, p), || format!("complementation key {k:016x}"))?;
        }
        for _ in 0..1_000 {
            let (k, p, parity): (u64, u64, u64) = rng.gen();
            let flipped = k ^ (parity & 0x0101_0101_0101_0101);
            ensure(enc(flipped, p) == enc(k, p), || format!("parity bits changed output for key {k:016x}"))?;
        }
        let ct = enc(0x1334_5779_9BBC_DFF1, 0x0123_4567_89AB_CDEF);
        ensure(ct == 0x85E8_1354_0F0A_B405, || format!("walkthrough vector gave {ct:016x}"))?;
        Ok("10000 round trips, 1000 complementation, 1000 parity, walkthrough vector".into())
    });
}

#[test]
fn stored_ciphertext_reproduction() {
    report("stored_ciphertext_reproduction", None, || {
        let mut matches = Vec::new();
        for value in [SUM, 0xCB97_F7EE] {
            for (placement, block) in [("low", pad(value)), ("high", u64::from(value) << 32)] {
                if enc(KEY, block) == STORED_CIPHERTEXT {
                    matches.push(format!("{value:08x} padded {placement}"));
                }
            }
        }
        ensure(matches == ["cb97f7ee padded low"], || format!("matching variants: {matches:?}"))?;
        Ok(format!("{STORED_CIPHERTEXT:016x} == E(pad_low(cb97f7ee)); no variant of {SUM:08x} matches"))
    });
}

#[test]
fn worked_example_end_to_end() {
    report("worked_example_end_to_end", Some(Duration::from_secs(1)), || {
        let img = asm::assemble_source(SUM_ARRAY, AsmOptions::default()).map_err(|e| e.to_string())?;
        let img = asm::encrypt_image(&img, DesKey(KEY), None).map_err(|e| e.to_string())?;
        let data = asm::read_hex(SUM_DATA).map_err(|e| e.to_string())?;
        let mut cpu =
            CpuState::new(Memory::from_image(&img.to_memory_image()), Memory::from_image(&data), SimConfig::default());
        let st = cpu.run(10_000).map_err(|e| e.to_string())?;
        let r4 = cpu.regs.read(Reg::new(4).unwrap());
        ensure(r4 == SUM, || format!("$r4 = {r4:08x}"))?;
        let want = enc(KEY, pad(SUM));
        let got = cpu.dmem.read_block(56).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("dmem[56] = {got:016x}, want {want:016x}"))?;

        // the same program over data summing to the value behind the stored ciphertext
        let alt = asm::read_hex(SUM_DATA_ALT).map_err(|e| e.to_string())?;
        let mut cpu =
            CpuState::new(Memory::from_image(&img.to_memory_image()), Memory::from_image(&alt), SimConfig::default());
        cpu.run(10_000).map_err(|e| e.to_string())?;
        let alt_block = cpu.dmem.read_block(56).map_err(|e| e.to_string())?;
        ensure(alt_block == STORED_CIPHERTEXT, || format!("alternate data: dmem[56] = {alt_block:016x}"))?;
        Ok(format!(
            "$r4 = {r4:08x}, dmem[56] = {got:016x}, {} cycles; alternate data stores {alt_block:016x}",
            st.cycles
        ))
    });
}

#[test]
fn oracle_equivalence() {
    report("oracle_equivalence", Some(Duration::from_secs(30)), || {
        let seeds: Vec<u64> = (0..1000).collect();
        let outcomes = batch::map(&seeds, |&s| {
            workload::check_equivalence(&workload::random_program(s, GenOptions::default()), 100_000)
        });
        let mut cycles = 0;
        let mut retired = 0;
        for o in outcomes {
            let o = o.map_err(|m| m.0)?;
            cycles += o.stats.cycles;
            retired += o.stats.retired;
        }
        Ok(format!("1000 programs, {retired} instructions, {cycles} cycles"))
    });
}

fn run_checked(src: &str, key: Option<u64>) -> Result<Stats, String> {
    let img = asm::assemble_source(src, AsmOptions::default()).map_err(|e| format!("{e}\n{src}"))?;
    let (img, data) = match key {
        Some(k) => {
            let enc = asm::encrypt_image(&img, DesKey(k), None).map_err(|e| e.to_string())?;
            let mut data = Memory::new();
            data.write_block(workload::KEY_ADDR, k & 0xFFFF_FFFF).unwrap();
            data.write_block(workload::KEY_ADDR + 8, k >> 32).unwrap();
            (enc, data)
        }
        None => (img, Memory::new()),
    };
    let imem = Memory::from_image(&img.to_memory_image());
    let arch = reference_interpret(&imem, data.clone(), SimConfig::default(), 10_000).map_err(|e| e.to_string())?;
    let mut cpu = CpuState::new(imem, data, SimConfig::default());
    let st = cpu.run(10_000).map_err(|e| e.to_string())?;
    ensure(st.retired == arch.retired.len() as u64, || {
        format!("retired {} vs reference {}\n{src}", st.retired, arch.retired.len())
    })?;
    ensure(st.cycles == st.retired + st.stalls + st.flushes + DRAIN_CYCLES, || format!("accounting {st:?}\n{src}"))?;
    Ok(st)
}

fn fillers(n: usize) -> String {
    (0..n).map(|i| format!("addi $r{}, $r0, {i}\n", 10 + i % 4)).collect()
}

#[test]
fn cycle_accounting() {
    report("cycle_accounting", None, || {
        let prologue = "addi $r1, $r0, 104\nlklw 0($r1)\naddi $r1, $r1, 8\nlkuw 0($r1)\nnop\nnop\n";
        let mut cases = 0;
        for before in 0..6 {
            for after in 0..6 {
                let (pre, post) = (fillers(before), fillers(after));
                // (source, key, expected stalls, expected flushes)
                let suite: Vec<(String, Option<u64>, u64, u64)> = vec![
                    (format!("{pre}lw $r1, 0($r0)\nadd $r2, $r1, $r1\n{post}"), None, 1, 0),
                    (format!("{pre}lw $r1, 0($r0)\nsw $r1, 8($r0)\n{post}"), None, 1, 0),
                    (format!("{pre}lw $r1, 0($r0)\nnop\nadd $r2, $r1, $r1\n{post}"), None, 0, 0),
                    (format!("{pre}beq $r0, $r0, {after}\n{post}nop\n"), None, 0, 1),
                    (format!("{pre}addi $r1, $r0, 1\nnop\nnop\nbne $r1, $r0, {after}\n{post}nop\n"), None, 0, 1),
                    (format!("{pre}bne $r0, $r0, {after}\n{post}nop\n"), None, 0, 0),
                    (format!("{pre}j {}\n{post}nop\n", before + 1 + after), None, 0, 1),
                    (format!("{prologue}{pre}crypt 1\n{post}nop\n"), Some(KEY), 0, 1),
                    (format!("{pre}{post}"), None, 0, 0),
                ];
                for (src, key, stalls, flushes) in suite {
                    let st = run_checked(&src, key)?;
                    ensure(st.stalls == stalls && st.flushes == flushes, || {
                        format!("want {stalls} stalls/{flushes} flushes, got {st:?}\n{src}")
                    })?;
                    cases += 1;
                }
            }
        }
        let seeds: Vec<u64> = (0..500).collect();
        for r in batch::map(&seeds, |&s| {
            let key = (s % 2 == 1).then_some(s.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let w = workload::random_program(s, GenOptions { crypt_key: key, ..Default::default() });
            let mut cpu = CpuState::new(w.imem(), w.dmem(), SimConfig::default());
            let st = cpu.run(100_000).map_err(|e| format!("seed {s}: {e}"))?;
            ensure(st.cycles == st.retired + st.stalls + st.flushes + DRAIN_CYCLES, || format!("seed {s}: {st:?}"))
        }) {
            r?;
        }
        Ok(format!("{cases} micro-benchmarks exact, identity holds on 500 random programs"))
    });
}

#[test]
fn encryption_transparency() {
    report("encryption_transparency", None, || {
        let seeds: Vec<u64> = (0..100).collect();
        let results = batch::map(&seeds, |&s| -> Result<(), String> {
            let key = s.wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ 0x0123_4567_89AB_CDEF;
            let w = workload::random_program(s, GenOptions { crypt_key: Some(key), ..Default::default() });
            let (e, p) = workload::run_transparency_pair(&w, 100_000).map_err(|err| format!("seed {s}: {err}"))?;
            ensure(e.retired_log == p.retired_log, || format!("seed {s}: retired sequences differ"))?;
            ensure(e.regs == p.regs && e.key == p.key && e.crypt_mode == p.crypt_mode, || {
                format!("seed {s}: state differs")
            })?;
            ensure(e.dmem.iter().eq(p.dmem.iter()), || format!("seed {s}: data memory differs"))?;
            let (es, ps) = (e.stats, p.stats);
            ensure(es.flushes == ps.flushes + 1 && es.cycles == ps.cycles + 1 && es.stalls == ps.stalls, || {
                format!("seed {s}: encrypted {es:?} plaintext {ps:?}")
            })?;
            ensure(es.decrypted_fetches > 0 && ps.decrypted_fetches == 0, || {
                format!("seed {s}: fetch decryption counts")
            })
        });
        for r in results {
            r?;
        }
        Ok("100 programs: identical retirement and final state, one extra flush each".into())
    });
}

#[test]
fn hardware_synthesis_figures() {
    println!(
        "SKIP hardware_synthesis_figures: clock rates, slice/LUT counts and throughput come from FPGA synthesis and are not \
         reproducible in software; covered instead by oracle_equivalence, cycle_accounting, encryption_transparency and run stats"
    );
}

#[test]
fn stored_ciphertext_decrypts_to_padded_word() {
    let pt = decrypt_block(STORED_CIPHERTEXT, &KeySchedule::new(DesKey(KEY)));
    assert_eq!(pt >> 32, 0);
    assert_eq!(des::payload(pt), 0xCB97_F7EE);
}
