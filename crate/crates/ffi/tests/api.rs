use std::ffi::{CStr, CString};
use std::ptr;

use ssp_po_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ssp_last_error()) }.to_string_lossy().into_owned()
}

const CONFIG: &str = r#"
setting = "stochastic-costs"
episodes = 30
seeds = [0, 1]

[env]
generator = { kind = "random-ssp", num_states = 3, num_actions = 2, p_goal = 0.2 }
costs = { kind = "stochastic", noise = "bernoulli" }
seed = 4

[overrides]
eta = 0.3
"#;

#[test]
fn random_instance_round_trips_through_json() {
    unsafe {
        let mut inst = ptr::null_mut();
        assert_eq!(ssp_instance_random(4, 2, 0.1, 0.0, 9, &mut inst), SspStatus::Ok);
        assert_eq!(ssp_instance_num_states(inst), 4);
        assert_eq!(ssp_instance_num_actions(inst), 2);

        let mut kp = SspKeyParams::default();
        assert_eq!(ssp_instance_key_params(inst, &mut kp), SspStatus::Ok);
        assert!(kp.b_star >= 1.0 && kp.t_max >= kp.t_star && kp.diameter >= 1.0);

        let mut json = ptr::null_mut();
        assert_eq!(ssp_instance_to_json(inst, &mut json), SspStatus::Ok);
        let mut copy = ptr::null_mut();
        assert_eq!(ssp_instance_from_json(json, &mut copy), SspStatus::Ok);
        ssp_string_free(json);

        let mut a = [0.0; 4];
        let mut b = [0.0; 4];
        let mut n = 0;
        assert_eq!(ssp_instance_optimal_values(inst, a.as_mut_ptr(), 4, &mut n), SspStatus::Ok);
        assert_eq!(n, 4);
        assert_eq!(ssp_instance_optimal_values(copy, b.as_mut_ptr(), 4, &mut n), SspStatus::Ok);
        assert_eq!(a, b);
        assert_eq!(a.iter().copied().fold(f64::MIN, f64::max), kp.b_star);

        ssp_instance_free(inst);
        ssp_instance_free(copy);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let mut inst = ptr::null_mut();
        let bad = CString::new("{\"num_states\": 1}").unwrap();
        assert_eq!(ssp_instance_from_json(bad.as_ptr(), &mut inst), SspStatus::Parse);
        assert!(!last_error().is_empty());
        assert!(inst.is_null());

        assert_eq!(ssp_instance_from_json(ptr::null(), &mut inst), SspStatus::NullPointer);
        assert_eq!(ssp_instance_random(0, 2, 0.1, 0.0, 0, &mut inst), SspStatus::InvalidArgument);
        assert_eq!(ssp_instance_key_params(ptr::null(), ptr::null_mut()), SspStatus::NullPointer);

        assert_eq!(ssp_instance_random(2, 1, 0.5, 0.0, 0, &mut inst), SspStatus::Ok);
        assert!(last_error().is_empty());
        let mut n = 0;
        let mut one = [0.0; 1];
        assert_eq!(ssp_instance_optimal_values(inst, one.as_mut_ptr(), 1, &mut n), SspStatus::BufferTooSmall);
        assert_eq!(n, 2);
        ssp_instance_free(inst);
        ssp_instance_free(ptr::null_mut());
    }
}

#[test]
fn experiment_runs_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let text = CString::new(CONFIG).unwrap();
        let mut exp = ptr::null_mut();
        assert_eq!(ssp_experiment_from_toml(text.as_ptr(), &mut exp), SspStatus::Ok);

        let mut out = [0.0; 64];
        let mut n = 0;
        assert_eq!(ssp_experiment_mean_regret(exp, out.as_mut_ptr(), 64, &mut n), SspStatus::NotReady);

        let bad = CString::new("no_such_key=1").unwrap();
        assert_eq!(ssp_experiment_set_override(exp, bad.as_ptr()), SspStatus::Config);
        let seeds = [3u64];
        assert_eq!(ssp_experiment_set_seeds(exp, seeds.as_ptr(), 1), SspStatus::Ok);

        assert_eq!(ssp_experiment_run(exp), SspStatus::Ok);
        assert_eq!(ssp_experiment_mean_regret(exp, out.as_mut_ptr(), 64, &mut n), SspStatus::Ok);
        assert_eq!(n, 30);
        assert!(out[..n].iter().all(|x| x.is_finite()));

        let path = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(ssp_experiment_write(exp, path.as_ptr()), SspStatus::Ok);
        let csv = std::fs::read_to_string(dir.path().join("episodes.csv")).unwrap();
        assert_eq!(csv.lines().count(), 31);

        let mut hash = ptr::null_mut();
        assert_eq!(ssp_experiment_config_hash(exp, &mut hash), SspStatus::Ok);
        let hash_str = CStr::from_ptr(hash).to_str().unwrap().to_owned();
        ssp_string_free(hash);
        assert_eq!(hash_str.len(), 16);
        assert!(csv.lines().nth(1).unwrap().starts_with(&hash_str));
        ssp_experiment_free(exp);
    }
}

#[test]
fn invalid_config_is_a_config_error() {
    unsafe {
        let text = CString::new("setting = \"adv-full\"\nepisodes = 0\n[env]\ngenerator = { kind = \"line\", length = 2 }\n").unwrap();
        let mut exp = ptr::null_mut();
        assert_eq!(ssp_experiment_from_toml(text.as_ptr(), &mut exp), SspStatus::Config);
        assert!(last_error().contains("episodes"));
    }
}

#[test]
fn version_is_the_package_version() {
    let v = unsafe { CStr::from_ptr(ssp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
