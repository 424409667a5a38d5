//! Headless acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, UdpSocket};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Child, Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use theater_core::command::{Action, Address, AddressedCommand, LedMode, RobotId};
use theater_core::cue::{builtin_lightning, builtin_old_macdonald, dance_demo, DEFAULT_BEAT};
use theater_core::engine::{command_log, Engine, Input, Record};
use theater_core::gesture::{recognize_all, Direction, GestureConfig, GestureEvent, GestureKind};
use theater_core::hand::{write_trace, Finger, HandFrame};
use theater_core::link::{decode, encode, Body, Packet, Telemetry};
use theater_core::roles::{FingerMap, Role, RoleController, RoleParams};
use theater_core::stage::{Pose, RobotSpawn, Stage, StageConfig};
use theater_core::synth::{synthesize_gesture_trace, SyntheticGestureKind};
use theater_core::EngineConfig;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Option<f64>); 7] = [
        ("1 gesture oracle", gesture_oracle, Some(30.0)),
        ("2 role mapping table", role_table, None),
        ("3 kinematics", kinematics, Some(5.0)),
        ("4 protocol", protocol, None),
        ("5 distributed conformance", distributed, None),
        ("6 scenarios", scenarios, Some(60.0)),
        ("7 record/replay closure", replay_closure, None),
    ];
    let mut failed = 0;
    let mut out = std::io::stdout();
    for (name, f, budget) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let result = match (result, budget) {
            (Ok(_), Some(b)) if secs >= b => Err(format!("took {secs:.1} s, budget {b} s")),
            (r, _) => r,
        };
        let (tag, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        writeln!(out, "{tag} criterion {name}: {detail} [{secs:.2} s]").unwrap();
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn id(n: u8) -> RobotId {
    RobotId::new(n).unwrap()
}

// 1

fn gesture_oracle() -> Outcome {
    let cfg = GestureConfig::default();
    let emitted = |kind, noise, seed| -> Vec<GestureKind> {
        let trace = synthesize_gesture_trace(kind, noise, seed).unwrap();
        recognize_all(&trace, &cfg)
            .unwrap()
            .into_iter()
            .map(|e| e.kind)
            .collect()
    };
    let kinds = SyntheticGestureKind::all();
    for &k in &kinds {
        let want: Vec<_> = k.intended().into_iter().collect();
        let got = emitted(k, 0.0, 0);
        ensure!(got == want, "{k:?} at zero noise: {got:?}, wanted {want:?}");
    }
    const SEEDS: u64 = 50;
    let mut worst = (SEEDS, kinds[0]);
    let mut wrong = 0;
    for &k in &kinds {
        let want: Vec<_> = k.intended().into_iter().collect();
        let mut exact = 0;
        for seed in 0..SEEDS {
            let got = emitted(k, 0.005, seed);
            wrong += got.iter().filter(|g| !want.contains(g)).count();
            exact += u64::from(got == want);
        }
        if exact < worst.0 {
            worst = (exact, k);
        }
    }
    ensure!(wrong == 0, "{wrong} wrong-kind emissions at noise 0.005");
    ensure!(
        worst.0 * 10 >= SEEDS * 9,
        "{:?}: {}/{SEEDS} exact",
        worst.1,
        worst.0
    );
    Ok(format!(
        "{n}/{n} variants exact at zero noise; noise 0.005: worst {}/{SEEDS} exact ({:?}), 0 wrong",
        worst.0,
        worst.1,
        n = kinds.len()
    ))
}

// 2

/// The mapping table written out independently of the interpreter.
fn table(role: Role, kind: GestureKind, p: &RoleParams, map: &FingerMap) -> Vec<(Address, Action)> {
    let drive = |v, omega, duration| Action::Drive { v, omega, duration };
    let sign = |d: Direction| if d == Direction::Right { -1.0 } else { 1.0 };
    let toggle = Action::Led {
        mode: LedMode::Toggle,
        rgb: p.led_rgb,
        period: 0.0,
    };
    let mapped = Address::Group("mapped".into());
    let flick = |f| {
        map.get(f)
            .map(|r| {
                (
                    Address::Robot(r),
                    drive(p.puppeteer_v, 0.0, p.puppeteer_dur),
                )
            })
            .into_iter()
            .collect()
    };
    use GestureKind as G;
    match (role, kind) {
        (Role::Director, G::PalmPush) => vec![(
            Address::Broadcast,
            drive(p.director_v, 0.0, p.director_drive_dur),
        )],
        (Role::Director, G::FistPull) => vec![(
            Address::Broadcast,
            drive(-p.director_v, 0.0, p.director_drive_dur),
        )],
        (Role::Director, G::GraspRotate { direction }) => vec![(
            Address::Broadcast,
            drive(0.0, sign(direction) * p.director_omega, p.director_turn_dur),
        )],
        (Role::Puppeteer, G::FingerFlick { finger }) => flick(finger),
        (Role::Puppeteer, G::FistRotate { direction }) => map
            .robots()
            .map(|r| {
                (
                    Address::Robot(r),
                    drive(0.0, sign(direction) * p.director_omega, p.director_turn_dur),
                )
            })
            .collect(),
        (Role::Wizard, G::WandVerticalFlick) => vec![(Address::Broadcast, toggle)],
        (Role::Wizard, G::WandHorizontalSwish { direction }) => vec![(
            Address::Broadcast,
            drive(p.wizard_v, sign(direction) * p.wizard_omega, p.wizard_dur),
        )],
        (Role::Hybrid, G::FingerFlick { finger }) => flick(finger),
        (Role::Hybrid, G::WandVerticalFlick) => vec![(mapped, toggle)],
        (Role::Hybrid, G::WandHorizontalSwish { direction }) => vec![(
            mapped,
            drive(p.wizard_v, sign(direction) * p.wizard_omega, p.wizard_dur),
        )],
        _ => vec![],
    }
}

fn role_table() -> Outcome {
    let params = RoleParams::default();
    let limits = StageConfig::default().limits();
    let map = FingerMap::from_pairs(&[(Finger::Index, 1), (Finger::Middle, 2)]).unwrap();
    let mut cells = 0;
    let mut empty = 0;
    for role in Role::ALL {
        let mut rc = RoleController::new(params.clone(), &limits).unwrap();
        rc.set_finger_map(map.clone());
        rc.set_role(role, 0.0).unwrap();
        for kind in GestureKind::all() {
            let ev = GestureEvent {
                kind,
                t: 1.25,
                strength: 1.0,
            };
            let got: Vec<_> = rc.interpret(&ev);
            ensure!(
                got.iter().all(|c| c.issued_at == 1.25),
                "({role}, {kind:?}) issued_at"
            );
            let got: Vec<_> = got.into_iter().map(|c| (c.address, c.action)).collect();
            let want = table(role, kind, &params, &map);
            ensure!(got == want, "({role}, {kind:?}): {got:?}, wanted {want:?}");
            cells += 1;
            empty += usize::from(want.is_empty());
        }
    }

    // end to end: only the mapped robot moves, the rest stay bit-identical
    let mut cfg = EngineConfig::default();
    cfg.roles.initial = Role::Puppeteer;
    cfg.roles.finger_map = Some(FingerMap::from_pairs(&[(Finger::Ring, 2)]).unwrap());
    let mut e = Engine::new(&cfg).unwrap();
    let before = e.snapshot();
    for finger in Finger::ALL {
        e.submit(Input::Gesture(GestureKind::FingerFlick { finger }))
            .unwrap();
        e.run_for(0.5);
    }
    let after = e.snapshot();
    for (a, b) in before.robots.iter().zip(&after.robots) {
        let same = [a.x, a.y, a.theta].map(f64::to_bits) == [b.x, b.y, b.theta].map(f64::to_bits);
        if a.id == id(2) {
            ensure!(!same, "mapped robot 2 did not move");
        } else {
            ensure!(same, "unmapped robot {} moved", a.id);
        }
    }
    Ok(format!(
        "{cells} cells ({empty} empty) match; puppeteer isolation holds"
    ))
}

// 3

fn solo(theta: f64) -> Stage {
    Stage::new(StageConfig {
        robots: vec![RobotSpawn {
            id: id(1),
            x: 0.0,
            y: 0.0,
            theta,
        }],
        ..StageConfig::default()
    })
    .unwrap()
}

fn drive_solo(v: f64, omega: f64, duration: f64) -> Pose {
    let mut s = solo(0.0);
    s.apply_command(&AddressedCommand::drive(
        Address::Robot(id(1)),
        v,
        omega,
        duration,
        0.0,
    ))
    .unwrap();
    s.advance((duration / s.config().dt).ceil() as u64 + 10);
    s.robot(id(1)).unwrap().pose
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

fn kinematics() -> Outcome {
    let line = drive_solo(0.1, 0.0, 1.0);
    let e_line = (line.x - 0.1).abs().max(line.y.abs()).max(line.theta.abs());
    ensure!(e_line <= 1e-9, "straight line off by {e_line:e}: {line:?}");

    let spin = drive_solo(0.0, 1.0, 1.5);
    let e_spin = spin
        .x
        .abs()
        .max(spin.y.abs())
        .max(angle_diff(spin.theta, 1.5));
    ensure!(e_spin <= 1e-9, "rotation off by {e_spin:e}: {spin:?}");

    let arc = drive_solo(0.1, 1.0, std::f64::consts::PI);
    let e_arc = arc.x.hypot(arc.y - 0.2);
    ensure!(e_arc <= 1e-3, "arc ends {e_arc:e} m from (0, 0.2): {arc:?}");
    let e_arc_theta = angle_diff(arc.theta, std::f64::consts::PI);
    ensure!(e_arc_theta <= 1e-2, "arc heading off by {e_arc_theta:e}");
    Ok(format!(
        "line {e_line:.1e}, rotation {e_spin:.1e}, arc {e_arc:.1e} m"
    ))
}

// 4

fn random_command(rng: &mut ChaCha8Rng) -> AddressedCommand {
    let address = if rng.random_bool(0.1) {
        Address::Broadcast
    } else {
        Address::Robot(id(rng.random_range(0..=254)))
    };
    let modes = [
        LedMode::Off,
        LedMode::Solid,
        LedMode::Toggle,
        LedMode::Strobe,
    ];
    let action = match rng.random_range(0..3) {
        0 => Action::Drive {
            v: rng.random_range(-300i32..=300) as f64 / 1000.0,
            omega: rng.random_range(-2000i32..=2000) as f64 / 1000.0,
            duration: rng.random_range(1u32..=5000) as f64 / 1000.0,
        },
        1 => Action::Led {
            mode: modes[rng.random_range(0..4)],
            rgb: rng.random(),
            period: rng.random_range(0u32..=65535) as f64 / 1000.0,
        },
        _ => Action::Stop,
    };
    AddressedCommand::new(address, action, 0.0)
}

fn hex(bytes: &[u8]) -> String {
    bytes
        .iter()
        .map(|b| format!("{b:02X}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn protocol() -> Outcome {
    const N: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0x7ea7);
    let mut valid = Vec::new();
    for i in 0..N {
        let cmd = random_command(&mut rng);
        let bytes = encode(&cmd).map_err(|e| format!("{cmd:?}: {e}"))?;
        let back = decode(&bytes).map_err(|e| format!("{}: {e}", hex(&bytes)))?;
        ensure!(
            back.to_command(0.0).as_ref() == Some(&cmd),
            "round trip changed {cmd:?}"
        );
        if i % 1000 == 0 {
            valid.push(bytes);
        }
    }

    let drive = AddressedCommand::drive(Address::Broadcast, 0.15, 0.0, 0.6, 0.0);
    let got = hex(&encode(&drive).unwrap());
    ensure!(
        got == "A5 01 FF 01 00 96 00 00 02 58 96",
        "drive vector {got}"
    );
    let stop = AddressedCommand::new(Address::Robot(id(3)), Action::Stop, 0.0);
    let got = hex(&encode(&stop).unwrap());
    ensure!(got == "A5 01 03 03 A4", "stop vector {got}");

    valid.push(Packet::new(7, Body::Ping).encode());
    valid.push(
        Telemetry {
            robot_id: 2,
            x: 0.25,
            y: -0.5,
            theta: 1.5,
            led_mode: 1,
        }
        .to_packet()
        .unwrap()
        .encode(),
    );
    let mut corrupted = 0;
    for packet in &valid {
        for pos in 0..packet.len() {
            for delta in 1..=255u8 {
                let mut bad = packet.clone();
                bad[pos] ^= delta;
                ensure!(
                    decode(&bad).is_err(),
                    "accepted {} (from {})",
                    hex(&bad),
                    hex(packet)
                );
                corrupted += 1;
            }
        }
    }
    Ok(format!(
        "{N} round trips, both vectors exact, {corrupted} corruptions rejected"
    ))
}

// 5

struct Agent(Child);

impl Drop for Agent {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn spawn_agent(robot: u8, start: Pose) -> Result<(Agent, SocketAddr), String> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_robot-agent"))
        .args(["--id", &robot.to_string(), "--port", "0"])
        .args(["--x", &start.x.to_string(), "--y", &start.y.to_string()])
        .args(["--theta", &start.theta.to_string()])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| format!("spawn robot-agent: {e}"))?;
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .map_err(|e| e.to_string())?;
    let addr = line
        .trim()
        .rsplit(' ')
        .next()
        .and_then(|a| a.parse().ok())
        .ok_or_else(|| format!("unexpected agent banner {line:?}"))?;
    Ok((Agent(child), addr))
}

fn ping(sock: &UdpSocket, to: SocketAddr, robot: u8) -> Result<Telemetry, String> {
    let mut buf = [0u8; 64];
    sock.set_nonblocking(true).unwrap();
    while sock.recv_from(&mut buf).is_ok() {}
    sock.set_nonblocking(false).unwrap();
    sock.send_to(&Packet::new(robot, Body::Ping).encode(), to)
        .unwrap();
    loop {
        let (n, _) = sock
            .recv_from(&mut buf)
            .map_err(|e| format!("no STATE reply: {e}"))?;
        if let Some(t) = decode(&buf[..n])
            .ok()
            .as_ref()
            .and_then(Telemetry::from_packet)
        {
            return Ok(t);
        }
    }
}

fn script(robot: RobotId) -> Vec<AddressedCommand> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    (0..20)
        .map(|i| {
            let address = if i % 5 == 4 {
                Address::Broadcast
            } else {
                Address::Robot(robot)
            };
            let action = match i % 7 {
                3 => Action::Led {
                    mode: LedMode::Toggle,
                    rgb: [255, 128, 0],
                    period: 0.0,
                },
                6 => Action::Stop,
                _ => Action::Drive {
                    v: rng.random_range(-100i32..=100) as f64 / 1000.0,
                    omega: rng.random_range(-1500i32..=1500) as f64 / 1000.0,
                    duration: rng.random_range(50u32..=300) as f64 / 1000.0,
                },
            };
            AddressedCommand::new(address, action, 0.0)
        })
        .collect()
}

fn distributed() -> Outcome {
    let start = Pose::new(0.0, 0.0, 0.0);
    let robot = id(4);
    let (_agent, addr) = spawn_agent(robot.get(), start)?;
    let sock = UdpSocket::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    sock.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
    ping(&sock, addr, robot.get())?;

    let mut sim = Stage::new(StageConfig {
        robots: vec![RobotSpawn {
            id: robot,
            x: start.x,
            y: start.y,
            theta: start.theta,
        }],
        ..StageConfig::default()
    })
    .unwrap();
    let cmds = script(robot);
    for cmd in &cmds {
        let wait = match cmd.action {
            Action::Drive { duration, .. } => duration,
            _ => 0.0,
        };
        sock.send_to(&encode(cmd).unwrap(), addr).unwrap();
        // the packet is what the agent sees, so the simulator gets the same
        let wire = decode(&encode(cmd).unwrap())
            .unwrap()
            .to_command(0.0)
            .unwrap();
        sim.apply_command(&wire).unwrap();
        sim.advance(((wait + 0.06) / sim.config().dt).round() as u64);
        std::thread::sleep(Duration::from_secs_f64(wait + 0.06));
    }
    let remote = ping(&sock, addr, robot.get())?;
    let local = sim.robot(robot).unwrap();
    let dx = (remote.x - local.pose.x).hypot(remote.y - local.pose.y);
    let dth = angle_diff(remote.theta, local.pose.theta);
    ensure!(dx <= 2e-3, "position differs by {:.2} mm", dx * 1e3);
    ensure!(dth <= 2e-3, "heading differs by {:.2} mrad", dth * 1e3);
    let led = if local.led.on { 1 } else { 0 };
    ensure!(
        (remote.led_mode != 0) == (led == 1),
        "led differs: agent mode {}, sim on {}",
        remote.led_mode,
        local.led.on
    );
    Ok(format!(
        "{} commands; agreement {:.2} mm / {:.2} mrad",
        cmds.len(),
        dx * 1e3,
        dth * 1e3
    ))
}

// 6

fn scenarios() -> Outcome {
    let stage = StageConfig::default();
    let start: BTreeMap<RobotId, Pose> = stage
        .robots
        .iter()
        .map(|r| (r.id, Pose::new(r.x, r.y, r.theta)))
        .collect();
    let layouts = [
        vec![
            (id(1), (-0.25, 0.2)),
            (id(2), (0.0, 0.2)),
            (id(3), (0.25, 0.2)),
        ],
        vec![
            (id(1), (-0.6, 0.6)),
            (id(2), (0.1, -0.2)),
            (id(3), (0.7, 0.4)),
        ],
    ];
    let mut worst: f64 = 0.0;
    for marks in &layouts {
        let seq =
            builtin_old_macdonald(marks, &start, &RoleParams::default(), &stage, DEFAULT_BEAT)
                .unwrap();
        let run = || {
            let mut e = Engine::new(&EngineConfig::default()).unwrap();
            e.run_sequence(&seq);
            e.run_sequences_to_end(1.0);
            e.snapshot()
        };
        let snap = run();
        ensure!(snap == run(), "old_macdonald is not deterministic");
        for (rid, (x, y)) in marks {
            let r = snap.robot(*rid).unwrap();
            let err = (r.x - x).hypot(r.y - y);
            worst = worst.max(err);
            ensure!(err <= 0.05, "robot {rid} ended {err:.3} m from its mark");
        }
    }

    for n in 1..=6u32 {
        let mut e = Engine::new(&EngineConfig::default()).unwrap();
        let before = e.snapshot();
        e.run_sequence(&builtin_lightning(n, 0.4).unwrap());
        e.run_sequences_to_end(1.0);
        let after = e.snapshot();
        for (a, b) in before.robots.iter().zip(&after.robots) {
            let changed = a.led.on != b.led.on;
            ensure!(
                changed == (n % 2 == 1),
                "lightning({n}): robot {} led changed = {changed}",
                a.id
            );
        }
    }

    let dance = || {
        let mut e = Engine::new(&EngineConfig::default()).unwrap();
        e.run_sequence(&dance_demo());
        e.run_sequences_to_end(1.0);
        e.drain()
            .into_iter()
            .filter(|r| matches!(r, Record::Snapshot(_)))
            .map(|r| r.to_json_line())
            .collect::<Vec<_>>()
    };
    let a = dance();
    ensure!(a == dance(), "dance_demo snapshot traces differ");
    Ok(format!(
        "old_macdonald worst {:.1} mm, lightning parity n=1..6, dance_demo {} identical snapshots",
        worst * 1e3,
        a.len()
    ))
}

// 7

fn medley() -> Vec<HandFrame> {
    use SyntheticGestureKind as K;
    let parts = [
        K::PalmPush,
        K::GraspThenRotate {
            direction: Direction::Right,
        },
        K::FistPull,
        K::GraspThenRotate {
            direction: Direction::Left,
        },
        K::PalmPush,
    ];
    let mut out: Vec<HandFrame> = Vec::new();
    let mut offset = 0.0;
    for (seed, kind) in parts.into_iter().enumerate() {
        let trace = synthesize_gesture_trace(kind, 0.003, seed as u64).unwrap();
        let end = trace.last().unwrap().t();
        out.extend(trace.iter().map(|f| f.with_time(f.t() + offset).unwrap()));
        offset += end + 0.5;
    }
    out
}

fn conductor(args: &[&std::ffi::OsStr]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_conductor"))
        .args(args)
        .stderr(Stdio::piped())
        .stdout(Stdio::null())
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "conductor {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

fn replay_closure() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let trace = dir.path().join("medley.jsonl");
    let first = dir.path().join("first.jsonl");
    let second = dir.path().join("second.jsonl");
    write_trace(std::fs::File::create(&trace).unwrap(), &medley()).unwrap();
    conductor(&[
        "replay".as_ref(),
        "--trace".as_ref(),
        trace.as_os_str(),
        "--record".as_ref(),
        first.as_os_str(),
    ])?;
    conductor(&[
        "replay".as_ref(),
        "--log".as_ref(),
        first.as_os_str(),
        "--record".as_ref(),
        second.as_os_str(),
    ])?;

    let commands = |p: &std::path::Path| -> Vec<String> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| l.contains("\"type\":\"command\""))
            .map(str::to_owned)
            .collect()
    };
    let (a, b) = (commands(&first), commands(&second));
    ensure!(a.len() >= 5, "only {} commands recorded", a.len());
    ensure!(a == b, "command logs differ");
    let whole = std::fs::read(&first).unwrap() == std::fs::read(&second).unwrap();

    // in-process replay agrees with the binary
    let records: Vec<Record> = {
        let inputs =
            theater_core::engine::read_inputs(BufReader::new(std::fs::File::open(&first).unwrap()))
                .unwrap();
        theater_core::engine::replay_inputs(&EngineConfig::default(), &inputs).unwrap()
    };
    ensure!(
        command_log(&records) == a,
        "library replay disagrees with the recorded command log"
    );
    Ok(format!(
        "{} command lines byte-identical; full log identical: {whole}",
        a.len()
    ))
}
