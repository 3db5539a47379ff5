use super::{load_mechanism, MechanismError, MechanismModel};

pub const FIXTURE_IDS: [&str; 5] = ["lock1", "lock2", "lock3", "drawer_a", "drawer_b"];

pub fn fixture_document(id: &str) -> Option<&'static str> {
    Some(match id {
        "lock1" => include_str!("../../fixtures/lock1.json"),
        "lock2" => include_str!("../../fixtures/lock2.json"),
        "lock3" => include_str!("../../fixtures/lock3.json"),
        "drawer_a" => include_str!("../../fixtures/drawer_a.json"),
        "drawer_b" => include_str!("../../fixtures/drawer_b.json"),
        _ => return None,
    })
}

pub fn load_fixture(id: &str) -> Result<MechanismModel, MechanismError> {
    let doc = fixture_document(id).ok_or_else(|| MechanismError::UnknownFixture(id.to_string()))?;
    load_mechanism(doc)
}
