//! Step response and drift rejection of the quadrature lock.

use qrng_core::stabilization::{rms_phase_error, run_loop, Disturbance, PidConfig, PlantState};

fn main() -> qrng_core::Result<()> {
    let pid = PidConfig::default();

    let step = [Disturbance { step: 10, delta: 0.3 }];
    let trace = run_loop(&pid, PlantState::default(), 200, &step, 0)?;
    for row in trace.iter().skip(8).take(20) {
        println!(
            "{:>4} power {:.4} command {:+.4} error {:+.5}",
            row.step, row.measurement, row.command, row.phase_error
        );
    }
    let settled = trace
        .iter()
        .rposition(|r| r.phase_error.abs() >= 0.01)
        .map_or(0, |i| i + 1);
    println!("settled below 0.01 rad after step {settled}");

    let plant = PlantState::with_step_drift(1e-3, pid.loop_period);
    let drift = run_loop(&pid, plant, 10_000, &[], 7)?;
    let free: f64 = {
        let open = PidConfig { kp: 0.0, ki: 0.0, kd: 0.0, ..pid };
        rms_phase_error(&run_loop(&open, plant, 10_000, &[], 7)?)
    };
    println!("drift rms: locked {:.5} rad, open loop {:.5} rad", rms_phase_error(&drift), free);
    Ok(())
}
