use factsteer_demo::{explore_conflict, Session};

use factsteer::decoding::DecodeMode;

#[test]
fn every_subject_and_relation_can_be_edited_and_asked() {
    let mut session = Session::new();
    let catalog = session.catalog();
    for subject in &catalog.subjects {
        for relation in &catalog.relations {
            let target = relation.objects.last().unwrap();
            session.edit(subject, &relation.name, target).unwrap();
            let query = relation.template.replace("{s}", subject);
            let view = session.ask(&query, 0.2, 5).unwrap();
            assert_eq!(&view.answer, target, "{query}");
        }
    }
    assert_eq!(session.facts().len(), catalog.subjects.len() * catalog.relations.len());
}

#[test]
fn zero_k_bypasses_memory() {
    let mut session = Session::new();
    session.edit("Lena Sorel", "instrument", "guitar").unwrap();
    let view = session.ask("Lena Sorel plays the", 0.2, 0).unwrap();
    assert!(view.fallback_used);
    assert_eq!(view.answer, view.unedited);
}

#[test]
fn target_suppress_mode_is_accepted() {
    let view = explore_conflict(0.9, 0.05, 0.6, 0.2, DecodeMode::TargetSuppress).unwrap();
    assert_eq!(view.chosen, "German");
}
