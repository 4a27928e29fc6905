use encmips_core::asm::{self, AsmError, AsmOptions, MemoryImage, ProgramImage};
use encmips_core::des::{self, DesKey, KeySchedule};
use encmips_core::isa::{self, IOp, Instruction, JOp, RFunct, Reg};
use encmips_core::workload::{self, GenOptions};
use proptest::prelude::*;

const SUM_ARRAY: &str = include_str!("../../../programs/sum_array.s");
const KEY: u64 = 0x4B49_5241_5450_414C;

fn arb_instr() -> impl Strategy<Value = Instruction> {
    let reg = (0u32..32).prop_map(|i| Reg::new(i).unwrap());
    prop_oneof![
        (prop::sample::select(RFunct::ALL.to_vec()), reg.clone(), reg.clone(), reg.clone())
            .prop_filter("sll is built separately", |(f, ..)| *f != RFunct::Sll)
            .prop_map(|(f, d, s, t)| Instruction::r(f, d, s, t)),
        (reg.clone(), reg.clone(), 0u8..32).prop_map(|(d, t, sh)| Instruction::sll(d, t, sh)),
        (prop::sample::select(IOp::ALL.to_vec()), reg.clone(), reg, any::<i16>()).prop_map(|(op, t, s, imm)| {
            match op {
                IOp::Lklw | IOp::Lkuw => Instruction::i(op, Reg::ZERO, s, imm),
                _ => Instruction::i(op, t, s, imm),
            }
        }),
        (0u32..1 << 26).prop_map(|t| Instruction::j(JOp::J, t)),
        (0u32..1 << 26).prop_map(|t| Instruction::j(JOp::Crypt, t)),
    ]
}

proptest! {
    #[test]
    fn listing_reassembles_to_same_words(instrs in prop::collection::vec(arb_instr(), 1..60)) {
        let words: Vec<u32> = instrs.iter().map(|i| isa::encode(i).unwrap()).collect();
        let listing = asm::disassemble_listing(&words).unwrap();
        let st = asm::parse(&listing).unwrap();
        prop_assert_eq!(asm::assemble(&st).unwrap().words, words);
    }

    #[test]
    fn generated_programs_round_trip_through_text(seed in any::<u64>()) {
        let w = workload::random_program(seed, GenOptions::default());
        let words: Vec<u32> = w.image.blocks.iter().map(|b| des::payload(*b)).collect();
        let again = asm::assemble_source(&asm::disassemble_listing(&words).unwrap(), AsmOptions::default()).unwrap();
        prop_assert_eq!(again.blocks, w.image.blocks);
    }

    #[test]
    fn encrypted_image_survives_hex_and_decrypts(seed in any::<u64>(), key in any::<u64>()) {
        let w = workload::random_program(seed, GenOptions { crypt_key: Some(key), ..Default::default() });
        let enc = asm::encrypt_image(&w.image, DesKey(key), None).unwrap();
        let text = asm::write_hex(&enc.to_memory_image());
        let back = asm::read_hex(&text).unwrap();
        prop_assert_eq!(&back, &enc.to_memory_image());
        let blocks = back.entries().iter().map(|&(_, b)| b).collect();
        let loaded = ProgramImage { blocks, symbols: Default::default(), crypt_boundary: enc.crypt_boundary };
        let plain = asm::decrypt_image(&loaded, DesKey(key));
        prop_assert_eq!(plain.blocks, w.image.blocks);
    }
}

#[test]
fn worked_program_encrypts_after_boundary() {
    let img = asm::assemble_source(SUM_ARRAY, AsmOptions::default()).unwrap();
    assert_eq!(img.crypt_indices(), vec![6]);
    assert_eq!(img.symbols["Loop"], 88);
    assert_eq!(img.symbols["Exit"], 160);
    let enc = asm::encrypt_image(&img, DesKey(KEY), None).unwrap();
    assert_eq!(enc.crypt_boundary, Some(7));
    let s = KeySchedule::new(DesKey(KEY));
    for (i, (p, c)) in img.blocks.iter().zip(&enc.blocks).enumerate() {
        if i < 7 {
            assert_eq!(p, c);
        } else {
            assert_eq!(des::encrypt_block(*p, &s), *c);
        }
    }
    assert_eq!(asm::encrypt_image(&enc, DesKey(KEY), None), Err(AsmError::AlreadyEncrypted));
}

#[test]
fn hex_image_files_parse() {
    let data = asm::read_hex(include_str!("../../../programs/sum_array_data.hex")).unwrap();
    let sum = data.entries().iter().filter(|(a, _)| *a < 56).fold(0u32, |s, (_, b)| s.wrapping_add(des::payload(*b)));
    assert_eq!(sum, 0xCBA7_67EE);
    assert!(data.entries().contains(&(104, 0x5450_414C)));
    assert!(data.entries().contains(&(112, 0x4B49_5241)));
    let alt = asm::read_hex(include_str!("../../../programs/sum_array_data_cb97f7ee.hex")).unwrap();
    let sum = alt.entries().iter().filter(|(a, _)| *a < 56).fold(0u32, |s, (_, b)| s.wrapping_add(des::payload(*b)));
    assert_eq!(sum, 0xCB97_F7EE);
    assert_eq!(MemoryImage::default(), asm::read_hex("# nothing\n\n").unwrap());
}
