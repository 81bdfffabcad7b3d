mod common;

use std::sync::Arc;

use common::*;
use lostwage_connector::{ConnectorSim, Delivery, RecordingSink};
use lostwage_core::Platform;
use lostwage_service::*;
use proptest::prelude::*;

fn recorded_deliveries() -> Vec<Delivery> {
    let mut sim = ConnectorSim::new(SECRET, now()).with_batch_size(40);
    for a in default_accounts() {
        sim.add_account(a).unwrap();
    }
    let sink = RecordingSink::default();
    for login in ["+12065550101", "+12065550102", "+12065550103", "+12065550104"] {
        let platform = if login.ends_with("02") || login.ends_with("04") { Platform::Lyft } else { Platform::Uber };
        let id = sim.find_login(platform, login).unwrap();
        sim.link_account(&id, &sink).unwrap();
    }
    sink.deliveries()
}

fn fresh_ingestor() -> Ingestor {
    let store = Arc::new(Store::open_in_memory().unwrap());
    Ingestor::new(store, SECRET, Arc::new(FixedClock::new(now())))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Replaying any subset of deliveries a second time, in any order,
    /// leaves the store exactly as a single clean pass does.
    #[test]
    fn redelivery_is_idempotent(replays in proptest::collection::vec(any::<prop::sample::Index>(), 0..30)) {
        let deliveries = recorded_deliveries();
        let clean = fresh_ingestor();
        for d in &deliveries {
            prop_assert!(clean.handle_webhook(&d.body, &d.signature).unwrap().is_acknowledged());
        }
        let noisy = fresh_ingestor();
        for d in &deliveries {
            noisy.handle_webhook(&d.body, &d.signature).unwrap();
        }
        for ix in replays {
            let d = ix.get(&deliveries);
            let r = noisy.handle_webhook(&d.body, &d.signature).unwrap();
            prop_assert!(
                matches!(r, IngestResult::Duplicate { .. }),
                "replay gave {:?}",
                r
            );
        }
        prop_assert_eq!(clean.store().content_hash().unwrap(), noisy.store().content_hash().unwrap());
    }

    /// After any sequence of share grants and revocations, the legal team
    /// can read a driver's data exactly when a share consent is active.
    #[test]
    fn share_consent_gates_legal_access(ops in proptest::collection::vec(any::<bool>(), 1..8)) {
        let h = harness();
        let d = h.onboard("+12065550500", false, &[(Platform::Uber, "+12065550101")]);
        let mut active: Option<String> = None;
        for grant in ops {
            if grant {
                let c = h.service.grant_consent(&field_rep(), &d, ConsentScope::ShareWithOrg).unwrap();
                active = Some(c.consent_id);
            } else if let Some(id) = active.take() {
                h.service.revoke_consent(&field_rep(), &id).unwrap();
            }
        }
        for actor in [attorney(), paralegal(), admin()] {
            let r = h.service.driver_trips(&actor, &d, None);
            match &active {
                Some(_) => prop_assert!(r.is_ok()),
                None => prop_assert_eq!(r.unwrap_err().code(), ErrorCode::ConsentRequired),
            }
        }
        prop_assert_eq!(
            h.service.driver_trips(&field_rep(), &d, None).unwrap_err().code(),
            ErrorCode::Forbidden
        );
        let me = Actor::new(d.clone(), Role::Driver);
        prop_assert!(h.service.driver_trips(&me, &d, None).is_ok());
    }
}
