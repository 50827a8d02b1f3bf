//! The inline handshake on its own: the probe side registers and waits,
//! the engine side settles; an unanswered slot falls to the fail policy.

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use patrol::enforcer::{FailPolicy, Verdict, VerdictTable, EACCES};

fn main() {
    let table = Arc::new(VerdictTable::new(Duration::from_millis(20), FailPolicy::Closed));

    table.register(1, true).unwrap();
    let engine = {
        let table = Arc::clone(&table);
        thread::spawn(move || table.settle(Verdict::errno(1, EACCES, Some("block-reverse-shell".into()))))
    };
    println!("seq 1 -> {:?}", table.await_verdict(1));
    engine.join().unwrap().unwrap();

    // Nobody settles seq 2; the watchdog fails it closed.
    table.register(2, true).unwrap();
    println!("seq 2 -> {:?}", table.await_verdict(2));
    table.settle(Verdict::allow(2)).unwrap();
    println!(
        "settled {}, timeouts {}, late settles {}",
        table.settled_count(),
        table.timeouts(),
        table.late_settles()
    );
    println!("settling seq 1 again: {:?}", table.settle(Verdict::allow(1)));
}
