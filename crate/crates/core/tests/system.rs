use cfgrid::network::NetworkModel;
use cfgrid::sim::{simulate, Event, EventAction, PowerSystem, SystemSpec, EQUILIBRIUM_TOL};

fn trip(bus: usize) -> [Event; 1] {
    [Event { time: 1.0, action: EventAction::DisconnectLoad, bus, value: 0.0 }]
}

#[test]
fn machines_only_flat_start_stays_flat() {
    let spec = SystemSpec::new(NetworkModel::wscc9());
    let (mut sys, x0, y0) = PowerSystem::build(&spec).unwrap();
    sys.verify_equilibrium(&x0, &y0, EQUILIBRIUM_TOL).unwrap();
    let ts = simulate(&mut sys, x0, y0, 2.0, 1e-3, &[]).unwrap();
    for g in ["gen1", "gen2", "gen3"] {
        assert!(ts.channel(&format!("{g}.omega")).unwrap().iter().all(|v| (v - 1.0).abs() < 1e-9), "{g}");
    }
}

#[test]
fn load_trip_speeds_machines_up() {
    let spec = SystemSpec::new(NetworkModel::wscc9());
    let (mut sys, x0, y0) = PowerSystem::build(&spec).unwrap();
    let ts = simulate(&mut sys, x0, y0, 5.0, 1e-3, &trip(5)).unwrap();
    let connected = ts.channel("load5.connected").unwrap();
    let k_event = 1000;
    assert_eq!(ts.time[k_event], 1.0);
    assert!(connected[..k_event].iter().all(|&c| c == 1.0));
    assert!(connected[k_event..].iter().all(|&c| c == 0.0));
    let w = ts.channel("gen2.omega").unwrap();
    assert!(w[..k_event].iter().all(|v| (v - 1.0).abs() < 1e-9));
    // shedding load leaves surplus generation: speeds settle above nominal
    assert!(*w.last().unwrap() > 1.0 + 1e-3);
    let p5 = ts.channel("load5.p").unwrap();
    assert!(p5[k_event..].iter().all(|p| p.abs() < 1e-12));
}

#[test]
fn unknown_event_target_is_rejected() {
    let spec = SystemSpec::new(NetworkModel::wscc9());
    let (mut sys, x0, y0) = PowerSystem::build(&spec).unwrap();
    assert!(simulate(&mut sys, x0, y0, 1.0, 1e-3, &trip(4)).is_err());
}
