#![no_main]

use libfuzzer_sys::fuzz_target;
use twolocal::scenario::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(config) = ScenarioConfig::parse(text) else { return };
    let json = serde_json::to_string(&config).expect("configs serialize");
    assert_eq!(ScenarioConfig::parse(&json).expect("serialized configs parse"), config);
});
