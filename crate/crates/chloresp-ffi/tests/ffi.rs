//! Exercises the C ABI exactly as a foreign caller would: raw pointers,
//! status codes, and the last-error channel.

use std::ffi::{CStr, CString};

use chloresp_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0i8; 256];
    let n = unsafe { chloresp_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(buf.len() - 1)].iter().map(|&b| b as u8).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

#[test]
fn version_is_a_static_c_string() {
    let v = unsafe { CStr::from_ptr(chloresp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn timestep_reward_matches_the_library() {
    let c = [0.5, 0.1];
    let a = [2.0];
    let mut out = ChlorespReward {
        penalty: 0.0,
        bonus: 0.0,
        cost: 0.0,
        total: 0.0,
    };
    let status =
        unsafe { chloresp_timestep_reward(c.as_ptr(), c.len(), a.as_ptr(), a.len(), &mut out) };
    assert_eq!(status, ChlorespStatus::Ok);
    assert!((out.penalty - -3.0).abs() < 1e-12);
    assert_eq!(out.bonus, 0.0);
    assert!((out.cost - -0.2).abs() < 1e-12);
    assert!((out.total - -3.2).abs() < 1e-12);
}

#[test]
fn null_pointers_are_invalid_arguments() {
    let mut out = ChlorespReward {
        penalty: 0.0,
        bonus: 0.0,
        cost: 0.0,
        total: 0.0,
    };
    let status =
        unsafe { chloresp_timestep_reward(std::ptr::null(), 1, std::ptr::null(), 1, &mut out) };
    assert_eq!(status, ChlorespStatus::InvalidArgument);
    assert!(!last_error().is_empty());
}

#[test]
fn empty_concentrations_are_a_runtime_error() {
    let c: [f64; 0] = [];
    let a = [0.0];
    let mut out = ChlorespReward {
        penalty: 0.0,
        bonus: 0.0,
        cost: 0.0,
        total: 0.0,
    };
    // Non-null but zero-length concentration array.
    let status = unsafe {
        chloresp_timestep_reward(c.as_ptr(), 0, a.as_ptr(), a.len(), &mut out)
    };
    assert_eq!(status, ChlorespStatus::RuntimeError);
    assert!(last_error().contains("empty"), "got: {}", last_error());
}

#[test]
fn config_scenario_genome_rollout_round_trip() {
    // The same computation through the C surface and the Rust library must
    // agree exactly.
    let config = chloresp_config_default();
    assert!(!config.is_null());
    let scenario = unsafe { chloresp_scenario_new(config, 11) };
    assert!(!scenario.is_null());

    // Build a genome in-process and pass it through JSON like a C caller.
    use chloresp::neat::{initial_genome, InnovationRegistry};
    use rand_chacha::rand_core::SeedableRng;
    let mut registry = InnovationRegistry::new(5, 2);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let genome = initial_genome(&mut rng, 5, 2, &mut registry);
    let json = CString::new(serde_json::to_string(&genome).unwrap()).unwrap();
    let handle = unsafe { chloresp_genome_from_json(json.as_ptr()) };
    assert!(!handle.is_null());
    assert_eq!(unsafe { chloresp_genome_num_inputs(handle) }, 5);
    assert_eq!(unsafe { chloresp_genome_num_outputs(handle) }, 2);

    let (mut violation, mut cost, mut reward) = (0.0, 0.0, 0.0);
    let status = unsafe {
        chloresp_rollout_objectives(scenario, handle, &mut violation, &mut cost, &mut reward)
    };
    assert_eq!(status, ChlorespStatus::Ok);

    let expected_scenario =
        chloresp::env::make_scenario(11, &chloresp::config::RunConfig::default().env).unwrap();
    let traj = chloresp::env::rollout(&expected_scenario, &genome).unwrap();
    let expected = chloresp::reward::episode_objectives(&traj).unwrap();
    assert_eq!(violation, expected.violation);
    assert_eq!(cost, expected.cost);
    assert_eq!(reward, traj.total_reward());

    unsafe {
        chloresp_genome_free(handle);
        chloresp_scenario_free(scenario);
        chloresp_config_free(config);
    }
}

#[test]
fn activation_through_the_c_surface() {
    use chloresp::neat::{initial_genome, InnovationRegistry};
    use rand_chacha::rand_core::SeedableRng;
    let mut registry = InnovationRegistry::new(3, 2);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let genome = initial_genome(&mut rng, 3, 2, &mut registry);
    let json = CString::new(serde_json::to_string(&genome).unwrap()).unwrap();
    let handle = unsafe { chloresp_genome_from_json(json.as_ptr()) };

    let obs = [0.1, 0.4, 0.2];
    let mut out = [0.0f64; 2];
    let status = unsafe {
        chloresp_genome_activate(handle, obs.as_ptr(), obs.len(), out.as_mut_ptr(), out.len())
    };
    assert_eq!(status, ChlorespStatus::Ok);
    let expected = chloresp::neat::activate(&genome, &obs).unwrap();
    assert_eq!(out.to_vec(), expected);

    // Arity mismatch comes back as a runtime error with a message.
    let status = unsafe {
        chloresp_genome_activate(handle, obs.as_ptr(), 2, out.as_mut_ptr(), out.len())
    };
    assert_eq!(status, ChlorespStatus::RuntimeError);
    assert!(last_error().contains("inputs"));

    unsafe { chloresp_genome_free(handle) };
}

#[test]
fn bad_genome_json_yields_null_and_a_message() {
    let json = CString::new("{ not json").unwrap();
    let handle = unsafe { chloresp_genome_from_json(json.as_ptr()) };
    assert!(handle.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn missing_config_file_yields_null() {
    let path = CString::new("/nonexistent/chloresp.ini").unwrap();
    let handle = unsafe { chloresp_config_load(path.as_ptr()) };
    assert!(handle.is_null());
    assert!(last_error().contains("nonexistent"));
}

#[test]
fn generated_header_covers_the_exported_surface() {
    let header = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/include/chloresp.h"));
    for symbol in [
        "chloresp_version",
        "chloresp_last_error_message",
        "chloresp_config_default",
        "chloresp_config_load",
        "chloresp_config_free",
        "chloresp_scenario_new",
        "chloresp_scenario_free",
        "chloresp_genome_from_json",
        "chloresp_genome_load",
        "chloresp_genome_free",
        "chloresp_genome_num_inputs",
        "chloresp_genome_num_outputs",
        "chloresp_genome_activate",
        "chloresp_timestep_reward",
        "chloresp_rollout_objectives",
        "chloresp_run",
        "CHLORESP_STATUS_OK",
        "chloresp_config_t",
        "chloresp_scenario_t",
        "chloresp_genome_t",
    ] {
        assert!(header.contains(symbol), "header is missing {symbol}");
    }
}
