use std::fmt::Write as _;

use crate::isa;

use super::{CycleEvents, Stats};

const STAGE_NAMES: [&str; 5] = ["IF", "ID", "EX", "MEM", "WB"];

/// `cycle | PC | IF:<..> ID:<..> EX:<..> MEM:<..> WB:<..> | events: ...`
pub fn format_trace_line(ev: &CycleEvents) -> String {
    let mut s = format!("{} | {:08x} |", ev.cycle, ev.pc);
    for (name, stage) in STAGE_NAMES.iter().zip(ev.stages.iter()) {
        let text = match stage {
            Some(v) => isa::disassemble_word(v.word),
            None => "bubble".to_string(),
        };
        let _ = write!(s, " {name}:<{text}>");
    }
    let mut events = Vec::new();
    if ev.stall {
        events.push("STALL");
    }
    if ev.flush {
        events.push("FLUSH");
    }
    match ev.crypt_change {
        Some(true) => events.push("CRYPT_ON"),
        Some(false) => events.push("CRYPT_OFF"),
        None => {}
    }
    if ev.decrypted_fetch {
        events.push("DEC_FETCH");
    }
    if ev.encrypted_store {
        events.push("ENC_STORE");
    }
    let _ = write!(s, " | events: {}", if events.is_empty() { "-".to_string() } else { events.join(" ") });
    s
}

pub fn format_stats(st: &Stats) -> String {
    let cpi = match st.cpi() {
        Some(c) => format!("{c:.4}"),
        None => "-".to_string(),
    };
    format!(
        "cycles: {}\nretired: {}\nstalls: {}\nflushes: {}\ndecrypted_fetches: {}\nencrypted_stores: {}\ncpi: {}\n",
        st.cycles, st.retired, st.stalls, st.flushes, st.decrypted_fetches, st.encrypted_stores, cpi
    )
}
