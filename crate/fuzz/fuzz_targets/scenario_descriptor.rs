#![no_main]

use libfuzzer_sys::fuzz_target;
use twolocal::twolocal::ScenarioDescriptor;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(d) = ScenarioDescriptor::parse(text) {
        if d.shape.algebra_dimension() <= 64 {
            let _ = d.build();
        }
    }
});
