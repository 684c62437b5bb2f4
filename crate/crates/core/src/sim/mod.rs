//! Synthetic crowd sessions with planted ground truth.
//!
//! Agents wander a rectangular interaction area, occasionally standing
//! still alone or gathering into stationary formations (1:1 or small
//! groups) arranged on a circle and facing its centroid. From the
//! per-second positions and headings the simulator derives 100 Hz motion
//! magnitudes and per-second beacon sightings through a log-distance
//! channel with body-orientation attenuation, Gaussian noise, a receiver
//! sensitivity floor and random packet loss. The emitted files are exactly
//! the session-directory format ingestion reads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    build_label_grid, BeaconSighting, BeaconSource, GroupInterval, LabelGrid, ParticipantMeta,
    Pocket, RawMotion, SessionDataset, MIN_GROUP_DURATION_S,
};
use crate::proximity::PlmParams;

/// Extra path loss for one relative body orientation, or a blocked link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Atten {
    Db(f64),
    Blocked,
}

/// 8x8 grid (45 degree bins) of extra loss keyed by the transmitter's and
/// receiver's body rotation away from the line between them.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationAttenuation {
    pub grid: [[Atten; 8]; 8],
}

impl OrientationAttenuation {
    /// Grid from a per-side loss profile (indexed by 45 degree bin, bin 0 =
    /// facing); links where both sides turn at least `block_from_deg` away
    /// are blocked.
    pub fn from_side_profile(side_db: [f64; 8], block_from_deg: f64) -> Self {
        let mut grid = [[Atten::Db(0.0); 8]; 8];
        let away = |bin: usize| {
            let deg = bin as f64 * 45.0;
            deg.min(360.0 - deg)
        };
        for (i, row) in grid.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = if away(i) >= block_from_deg && away(j) >= block_from_deg {
                    Atten::Blocked
                } else {
                    Atten::Db(side_db[i] + side_db[j])
                };
            }
        }
        OrientationAttenuation { grid }
    }

    /// Facing costs nothing, quarter turns cost a few dB each, and links
    /// with both bodies turned past 135 degrees are blocked.
    pub fn default_profile() -> Self {
        Self::from_side_profile([0.0, 2.0, 7.0, 14.0, 20.0, 14.0, 7.0, 2.0], 135.0)
    }

    pub fn lookup(&self, tx_angle_rad: f64, rx_angle_rad: f64) -> Atten {
        self.grid[angle_bin(tx_angle_rad)][angle_bin(rx_angle_rad)]
    }
}

fn angle_bin(angle_rad: f64) -> usize {
    let tau = std::f64::consts::TAU;
    let a = angle_rad.rem_euclid(tau);
    ((a / (tau / 8.0)).round() as usize) % 8
}

/// Random packet loss on top of the channel physics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutModel {
    pub p_drop: f64,
}

/// Scenario geometry, interaction statistics and channel parameters.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub n_participants: usize,
    pub duration_s: usize,
    pub room_width: f64,
    pub room_depth: f64,
    /// Camera-covered interaction area, centered in the room.
    pub area_width: f64,
    pub area_depth: f64,
    pub ceiling_height: f64,
    pub n_ceiling: usize,
    pub mean_one_to_one_s: f64,
    pub sd_one_to_one_s: f64,
    pub mean_group_s: f64,
    pub sd_group_s: f64,
    /// Target mix of 1:1 vs larger formations (observed counts 99 : 22).
    pub one_to_one_weight: f64,
    pub group_weight: f64,
    /// Per-second probability of trying to start a new formation.
    pub spawn_rate: f64,
    /// Per-second probability that a stationary agent shifts its weight
    /// hard enough to trip the movement threshold.
    pub fidget_rate: f64,
    pub walk_speed_mps: f64,
    /// Coin-beacon RSSI noise, dBm.
    pub rssi_noise_sigma: f64,
    pub ceiling_noise_sigma: f64,
    pub dropout: DropoutModel,
    /// Readings below this dBm never reach the receiver.
    pub sensitivity_floor: f64,
    pub coin_plm: PlmParams<f64>,
    pub ceiling_plm: PlmParams<f64>,
    pub attenuation: OrientationAttenuation,
    /// Round RSSI to whole dBm as the radio firmware does.
    pub quantize_rssi: bool,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_participants: 22,
            duration_s: 2700,
            room_width: 10.60,
            room_depth: 8.16,
            area_width: 6.57,
            area_depth: 5.36,
            ceiling_height: 3.27,
            n_ceiling: 5,
            mean_one_to_one_s: 254.9,
            sd_one_to_one_s: 161.7,
            mean_group_s: 117.2,
            sd_group_s: 139.4,
            one_to_one_weight: 99.0,
            group_weight: 22.0,
            spawn_rate: 0.2,
            fidget_rate: 0.12,
            walk_speed_mps: 1.0,
            rssi_noise_sigma: 6.0,
            ceiling_noise_sigma: 3.0,
            dropout: DropoutModel { p_drop: 0.02 },
            sensitivity_floor: -95.0,
            // True propagation at short range with bodies in the way is
            // far steeper than the n = 1.5 the analysis assumes.
            coin_plm: PlmParams::new(-75.0, 3.2, 0.0),
            ceiling_plm: PlmParams::new(-62.0, 2.0, 0.0),
            attenuation: OrientationAttenuation::default_profile(),
            quantize_rssi: true,
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        // Each standing agent needs roughly 0.5 m x 0.5 m to itself.
        let capacity = (self.area_width * self.area_depth) / 0.25;
        if (self.n_participants as f64) > capacity {
            return Err(Error::InfeasibleDensity {
                agents: self.n_participants,
                width: self.area_width,
                depth: self.area_depth,
            });
        }
        if self.n_participants < 2 || self.duration_s == 0 {
            return Err(Error::ConfigInvalid(
                "need at least two participants and a positive duration".into(),
            ));
        }
        if self.mean_one_to_one_s <= 0.0 || self.mean_group_s <= 0.0 {
            return Err(Error::ConfigInvalid("durations must be positive".into()));
        }
        Ok(())
    }

    /// Interaction-area bounds in room coordinates.
    fn area(&self) -> (f64, f64, f64, f64) {
        let x0 = (self.room_width - self.area_width) / 2.0;
        let y0 = (self.room_depth - self.area_depth) / 2.0;
        (x0, y0, x0 + self.area_width, y0 + self.area_depth)
    }

    /// Ceiling beacon positions: a quincunx over the interaction area for
    /// five beacons, otherwise evenly spaced on an inset ellipse.
    pub fn ceiling_positions(&self) -> Vec<(f64, f64)> {
        let (x0, y0, x1, y1) = self.area();
        let (w, h) = (x1 - x0, y1 - y0);
        if self.n_ceiling == 5 {
            vec![
                (x0 + 0.2 * w, y0 + 0.2 * h),
                (x0 + 0.8 * w, y0 + 0.2 * h),
                (x0 + 0.5 * w, y0 + 0.5 * h),
                (x0 + 0.2 * w, y0 + 0.8 * h),
                (x0 + 0.8 * w, y0 + 0.8 * h),
            ]
        } else {
            (0..self.n_ceiling)
                .map(|k| {
                    let a = std::f64::consts::TAU * k as f64 / self.n_ceiling.max(1) as f64;
                    (
                        x0 + w * (0.5 + 0.35 * a.cos()),
                        y0 + h * (0.5 + 0.35 * a.sin()),
                    )
                })
                .collect()
        }
    }
}

/// Per-second agent state plus the planted label grid.
#[derive(Debug, Clone)]
pub struct GroundTruthTrace {
    pub n: usize,
    pub duration_s: usize,
    /// `[agent * duration_s + second]`.
    pub pos: Vec<(f64, f64)>,
    /// Radians, same layout.
    pub heading: Vec<f64>,
    /// Whether the agent walked during the second, same layout.
    pub moving: Vec<bool>,
    pub groups: Vec<GroupInterval>,
    pub grid: LabelGrid,
}

impl GroundTruthTrace {
    pub fn position(&self, agent: usize, s: usize) -> (f64, f64) {
        self.pos[agent * self.duration_s + s]
    }

    pub fn heading_of(&self, agent: usize, s: usize) -> f64 {
        self.heading[agent * self.duration_s + s]
    }
}

#[derive(Debug, Clone)]
enum AgentState {
    Wander { waypoint: (f64, f64) },
    StandSolo { until: usize },
    /// Recruited into a formation but not yet heading there.
    Summoned { formation: usize, depart_at: usize },
    Transit { formation: usize },
    InFormation { formation: usize },
}

#[derive(Debug, Clone)]
struct Formation {
    members: Vec<u32>,
    slots: Vec<(f64, f64)>,
    center: (f64, f64),
    /// Set once every member reached its slot.
    label_start: Option<usize>,
    /// Chosen interaction duration once standing.
    duration: usize,
    /// Set once label_start is known.
    end_s: Option<usize>,
}

fn truncated_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64, min: f64) -> f64 {
    let dist = Normal::new(mean, sd).expect("valid normal");
    for _ in 0..100 {
        let v = dist.sample(rng);
        if v >= min {
            return v;
        }
    }
    min
}

/// Simulate the movement and formation schedule.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<GroundTruthTrace> {
    cfg.validate()?;
    let n = cfg.n_participants;
    let t_end = cfg.duration_s;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let (x0, y0, x1, y1) = cfg.area();
    let margin = 0.3;
    let point_in_area = |rng: &mut ChaCha8Rng| {
        (
            rng.random_range(x0 + margin..x1 - margin),
            rng.random_range(y0 + margin..y1 - margin),
        )
    };

    // Spread the agents out initially.
    let mut pos_now: Vec<(f64, f64)> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut p = point_in_area(&mut rng);
        for _try in 0..50 {
            if pos_now
                .iter()
                .all(|q| dist(p, *q) > 1.0)
            {
                break;
            }
            p = point_in_area(&mut rng);
        }
        pos_now.push(p);
    }
    let mut heading_now: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    let mut state: Vec<AgentState> = (0..n)
        .map(|_| AgentState::Wander {
            waypoint: point_in_area(&mut rng),
        })
        .collect();

    let mut formations: Vec<Formation> = Vec::new();
    let mut pos = vec![(0.0, 0.0); n * t_end];
    let mut heading = vec![0.0; n * t_end];
    let mut moving = vec![false; n * t_end];

    for s in 0..t_end {
        // Formations whose time is up release their members.
        for f in 0..formations.len() {
            if formations[f].end_s == Some(s) {
                let members = formations[f].members.clone();
                for m in members {
                    state[m as usize] = AgentState::Wander {
                        waypoint: point_in_area(&mut rng),
                    };
                }
            }
        }

        // Maybe start a new formation among free agents.
        if rng.random_range(0.0..1.0) < cfg.spawn_rate {
            let free: Vec<u32> = (0..n as u32)
                .filter(|&a| {
                    matches!(
                        state[a as usize],
                        AgentState::Wander { .. } | AgentState::StandSolo { .. }
                    )
                })
                .collect();
            let p_pair = cfg.one_to_one_weight / (cfg.one_to_one_weight + cfg.group_weight);
            let size = if rng.random_range(0.0..1.0) < p_pair {
                2
            } else {
                let u = rng.random_range(0.0..1.0);
                if u < 0.6 {
                    3
                } else if u < 0.85 {
                    4
                } else {
                    5
                }
            };
            if free.len() >= size {
                // Sample members and a spot with clearance from the other
                // active formations.
                let mut members = free.clone();
                for i in 0..size {
                    let j = i + rng.random_range(0..members.len() - i);
                    members.swap(i, j);
                }
                members.truncate(size);
                members.sort_unstable();
                let mut center = None;
                for _try in 0..20 {
                    let c = point_in_area(&mut rng);
                    let far_enough = formations
                        .iter()
                        .filter(|f| f.end_s.map_or(true, |e| e > s))
                        .all(|f| dist(c, f.center) > 2.2);
                    if far_enough {
                        center = Some(c);
                        break;
                    }
                }
                if let Some(center) = center {
                    let radius = rng.random_range(0.5..0.75);
                    let rotate = rng.random_range(0.0..std::f64::consts::TAU);
                    let slots: Vec<(f64, f64)> = (0..size)
                        .map(|i| {
                            let a = rotate + std::f64::consts::TAU * i as f64 / size as f64;
                            (center.0 + radius * a.cos(), center.1 + radius * a.sin())
                        })
                        .collect();
                    let (mean, sd) = if size == 2 {
                        (cfg.mean_one_to_one_s, cfg.sd_one_to_one_s)
                    } else {
                        (cfg.mean_group_s, cfg.sd_group_s)
                    };
                    let duration =
                        truncated_normal(&mut rng, mean, sd, MIN_GROUP_DURATION_S as f64).round()
                            as usize;
                    let id = formations.len();
                    // Members drift in over a stretch rather than
                    // converging in lockstep.
                    for &m in &members {
                        let depart_at = s + rng.random_range(0..35) as usize;
                        state[m as usize] = AgentState::Summoned {
                            formation: id,
                            depart_at,
                        };
                    }
                    formations.push(Formation {
                        members,
                        slots,
                        center,
                        label_start: None,
                        duration,
                        end_s: None,
                    });
                }
            }
        }

        // Move every agent one second forward.
        let prev_pos = pos_now.clone();
        for a in 0..n {
            match state[a].clone() {
                AgentState::Wander { waypoint } => {
                    let arrived = step_towards(
                        &mut pos_now[a],
                        waypoint,
                        cfg.walk_speed_mps,
                        a,
                        &prev_pos,
                    );
                    let walked = dist(pos_now[a], prev_pos[a]) > 0.05;
                    if walked {
                        heading_now[a] = bearing(prev_pos[a], pos_now[a]);
                    }
                    moving[a * t_end + s] = walked;
                    if arrived {
                        // People at a standing event dwell far longer than
                        // they walk.
                        let dwell = rng.random_range(60..300) as usize;
                        state[a] = AgentState::StandSolo { until: s + dwell };
                    }
                }
                AgentState::StandSolo { until } => {
                    // Drift away rather than hover inside a conversation.
                    let too_close = formations
                        .iter()
                        .filter(|f| f.end_s.map_or(true, |e| e > s))
                        .any(|f| {
                            !f.members.contains(&(a as u32)) && dist(pos_now[a], f.center) < 1.8
                        });
                    if too_close || s >= until {
                        state[a] = AgentState::Wander {
                            waypoint: point_in_area(&mut rng),
                        };
                    }
                }
                AgentState::Summoned {
                    formation,
                    depart_at,
                } => {
                    if s >= depart_at {
                        state[a] = AgentState::Transit { formation };
                    }
                }
                AgentState::Transit { formation } => {
                    let slot_idx = formations[formation]
                        .members
                        .iter()
                        .position(|&m| m == a as u32)
                        .unwrap();
                    let slot = formations[formation].slots[slot_idx];
                    let arrived =
                        step_towards(&mut pos_now[a], slot, cfg.walk_speed_mps, a, &prev_pos);
                    let walked = dist(pos_now[a], prev_pos[a]) > 0.05;
                    if walked {
                        heading_now[a] = bearing(prev_pos[a], pos_now[a]);
                    }
                    moving[a * t_end + s] = walked;
                    if arrived {
                        pos_now[a] = slot;
                        heading_now[a] = bearing(slot, formations[formation].center);
                        state[a] = AgentState::InFormation { formation };
                        let f = &mut formations[formation];
                        let all_arrived = f.members.iter().all(|&m| {
                            matches!(
                                state[m as usize],
                                AgentState::InFormation { formation: g } if g == formation
                            )
                        });
                        if all_arrived {
                            let start = s + 1;
                            f.label_start = Some(start);
                            f.end_s = Some((start + f.duration).min(t_end));
                        }
                    }
                }
                AgentState::InFormation { formation } => {
                    heading_now[a] = bearing(pos_now[a], formations[formation].center);
                }
            }
            // Stationary agents occasionally shift their weight; the
            // micro-movement trips the motion threshold without changing
            // position.
            if !moving[a * t_end + s] && rng.random_range(0.0..1.0) < cfg.fidget_rate {
                moving[a * t_end + s] = true;
            }
            pos[a * t_end + s] = pos_now[a];
            heading[a * t_end + s] = heading_now[a];
        }
    }

    let mut groups = Vec::new();
    for (id, f) in formations.iter().enumerate() {
        if let (Some(start), Some(end)) = (f.label_start, f.end_s) {
            // A session-end clamp can leave an interval below the counting
            // threshold; it carries no labels, so drop it here too.
            if end.saturating_sub(start) >= MIN_GROUP_DURATION_S as usize {
                groups.push(GroupInterval {
                    group_id: id as u32 + 1,
                    members: f.members.clone(),
                    start_s: start as u64,
                    end_s: end as u64,
                });
            }
        }
    }
    let grid = build_label_grid(n, t_end, &groups, MIN_GROUP_DURATION_S)?;
    Ok(GroundTruthTrace {
        n,
        duration_s: t_end,
        pos,
        heading,
        moving,
        groups,
        grid,
    })
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn bearing(from: (f64, f64), to: (f64, f64)) -> f64 {
    (to.1 - from.1).atan2(to.0 - from.0)
}

/// Advance one agent toward a target at `speed` m/s, deflecting away from
/// other agents closer than 1.2 m. Returns true on arrival.
fn step_towards(
    p: &mut (f64, f64),
    target: (f64, f64),
    speed: f64,
    own_idx: usize,
    others: &[(f64, f64)],
) -> bool {
    let d = dist(*p, target);
    if d <= speed {
        *p = target;
        return true;
    }
    let mut dir = ((target.0 - p.0) / d, (target.1 - p.1) / d);
    for (i, q) in others.iter().enumerate() {
        if i == own_idx {
            continue;
        }
        let dq = dist(*p, *q);
        if dq < 1.2 && dq > 1e-9 {
            let push = 1.5 * (1.2 - dq) / 1.2;
            dir.0 += (p.0 - q.0) / dq * push;
            dir.1 += (p.1 - q.1) / dq * push;
        }
    }
    let norm = (dir.0 * dir.0 + dir.1 * dir.1).sqrt().max(1e-9);
    p.0 += dir.0 / norm * speed;
    p.1 += dir.1 / norm * speed;
    false
}

fn agent_rng(seed: u64, stream: u64, agent: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed ^ stream.wrapping_mul(0x9E3779B97F4A7C15) ^ agent.wrapping_mul(0xD1B54A32D192ED03),
    )
}

/// 100 Hz motion magnitudes per agent: a gait oscillation well above the
/// movement threshold while walking, low-amplitude noise while standing,
/// gravity near 1 g and rotation rate following heading changes.
pub fn synth_motion(trace: &GroundTruthTrace, seed: u64) -> Vec<RawMotion> {
    use std::f64::consts::TAU;
    let rate = 100usize;
    (0..trace.n)
        .map(|a| {
            let mut rng = agent_rng(seed, 1, a as u64);
            let phase: f64 = rng.random_range(0.0..TAU);
            let gait_hz: f64 = rng.random_range(1.6..2.0);
            let jitter: Normal<f64> = Normal::new(0.0, 0.0008).unwrap();
            let acc_noise: Normal<f64> = Normal::new(0.0, 0.03).unwrap();
            let grav_noise: Normal<f64> = Normal::new(0.0, 0.004).unwrap();
            let rot_noise: Normal<f64> = Normal::new(0.0, 0.015).unwrap();
            let n_samples = trace.duration_s * rate;
            let mut m = RawMotion {
                t: Vec::with_capacity(n_samples),
                lin_acc_mag: Vec::with_capacity(n_samples),
                gravity_mag: Vec::with_capacity(n_samples),
                rotation_rate_mag: Vec::with_capacity(n_samples),
            };
            for s in 0..trace.duration_s {
                let walking = trace.moving[a * trace.duration_s + s];
                let turn = if s > 0 {
                    let h0 = trace.heading_of(a, s - 1);
                    let h1 = trace.heading_of(a, s);
                    let mut d = (h1 - h0).rem_euclid(TAU);
                    if d > std::f64::consts::PI {
                        d = TAU - d;
                    }
                    d
                } else {
                    0.0
                };
                for k in 0..rate {
                    let t = s as f64 + k as f64 / rate as f64 + jitter.sample(&mut rng);
                    let acc = if walking {
                        (0.45 + 0.35 * (TAU * gait_hz * t + phase).sin() + acc_noise.sample(&mut rng))
                            .max(0.0)
                    } else {
                        (0.04 + acc_noise.sample(&mut rng)).clamp(0.0, 0.12)
                    };
                    let grav = 1.0
                        + grav_noise.sample(&mut rng)
                        + if walking {
                            0.02 * (TAU * gait_hz * t + phase).sin()
                        } else {
                            0.0
                        };
                    let rot = (turn
                        + rot_noise.sample(&mut rng).abs()
                        + if walking {
                            0.25 * (TAU * 0.9 * t + phase).sin().abs()
                        } else {
                            0.0
                        })
                    .max(0.0);
                    m.t.push(t);
                    m.lin_acc_mag.push(acc);
                    m.gravity_mag.push(grav.max(0.0));
                    m.rotation_rate_mag.push(rot);
                }
            }
            // Timestamp jitter must never break monotonicity.
            for i in 1..m.t.len() {
                if m.t[i] <= m.t[i - 1] {
                    m.t[i] = m.t[i - 1] + 1e-4;
                }
            }
            m
        })
        .collect()
}

/// Per-second beacon sightings for every (receiver, source) combination.
///
/// Coin links: log-distance RSSI minus orientation attenuation plus
/// Gaussian noise; the packet is dropped when the link is blocked, below
/// the sensitivity floor, or lost at random. Ceiling links use 3-D distance
/// and carry their measured power; no orientation term. The first coin
/// contact of each (receiver, source) stream reports Unknown, like a
/// ranging warm-up.
pub fn synth_rssi(
    trace: &GroundTruthTrace,
    cfg: &ScenarioConfig,
    meta: &[ParticipantMeta],
    seed: u64,
) -> Vec<BeaconSighting> {
    let n = trace.n;
    let t_end = trace.duration_s;
    let ceiling = cfg.ceiling_positions();
    let mut sightings = Vec::new();
    let mut first_contact = vec![true; n * n];

    for rx in 0..n {
        let mut rng = agent_rng(seed, 2, rx as u64);
        let offset: f64 = rng.random_range(0.2..0.8);
        let noise: Normal<f64> = Normal::new(0.0, cfg.rssi_noise_sigma.max(1e-12)).unwrap();
        let ceil_noise: Normal<f64> = Normal::new(0.0, cfg.ceiling_noise_sigma.max(1e-12)).unwrap();
        for s in 0..t_end {
            let p_rx = trace.position(rx, s);
            let h_rx = trace.heading_of(rx, s);
            for tx in 0..n {
                if tx == rx {
                    continue;
                }
                // Draw every random number regardless of emission so the
                // stream stays aligned.
                let noise_db = if cfg.rssi_noise_sigma > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                let drop_roll: f64 = rng.random_range(0.0..1.0);
                let jit: f64 = rng.random_range(-0.05..0.05);

                let p_tx = trace.position(tx, s);
                let d = dist(p_rx, p_tx).max(0.05);
                // Rotation of each body away from the line of sight; the
                // worn pocket shifts the radio off the body axis.
                let tx_angle = trace.heading_of(tx, s) - bearing(p_tx, p_rx)
                    + pocket_offset(meta[tx].beacon_pocket);
                let rx_angle = h_rx - bearing(p_rx, p_tx) + pocket_offset(meta[rx].device_pocket);
                let atten = match cfg.attenuation.lookup(tx_angle, rx_angle) {
                    Atten::Blocked => continue,
                    Atten::Db(db) => db,
                };
                let mut rssi = cfg.coin_plm.rssi(d) - atten + noise_db;
                if cfg.quantize_rssi {
                    rssi = rssi.round();
                }
                if rssi < cfg.sensitivity_floor || drop_roll < cfg.dropout.p_drop {
                    continue;
                }
                let rssi = rssi.clamp(-120.0, 0.0);
                let value = if first_contact[rx * n + tx] {
                    first_contact[rx * n + tx] = false;
                    None
                } else {
                    Some(rssi)
                };
                sightings.push(BeaconSighting {
                    t: s as f64 + offset + jit,
                    receiver: rx as u32,
                    source: BeaconSource::Coin {
                        minor: meta[tx].beacon_minor,
                    },
                    rssi: value,
                    measured_power: None,
                });
            }
            for (k, b) in ceiling.iter().enumerate() {
                let noise_db = if cfg.ceiling_noise_sigma > 0.0 {
                    ceil_noise.sample(&mut rng)
                } else {
                    0.0
                };
                let drop_roll: f64 = rng.random_range(0.0..1.0);
                let jit: f64 = rng.random_range(-0.05..0.05);
                // Phone rides at pocket height.
                let dz = cfg.ceiling_height - 1.0;
                let d3 = (dist(p_rx, *b).powi(2) + dz * dz).sqrt();
                let mut rssi = cfg.ceiling_plm.rssi(d3) + noise_db;
                if cfg.quantize_rssi {
                    rssi = rssi.round();
                }
                if rssi < cfg.sensitivity_floor || drop_roll < cfg.dropout.p_drop {
                    continue;
                }
                sightings.push(BeaconSighting {
                    t: s as f64 + offset + jit,
                    receiver: rx as u32,
                    source: BeaconSource::Ceiling { index: k + 1 },
                    rssi: Some(rssi.clamp(-120.0, 0.0)),
                    measured_power: Some(cfg.ceiling_plm.measured_power),
                });
            }
        }
    }
    sightings
}

fn pocket_offset(pocket: Pocket) -> f64 {
    // A device in the left pocket sits about 22.5 degrees off the body
    // axis, mirrored for the right pocket.
    match pocket {
        Pocket::Left => std::f64::consts::FRAC_PI_8,
        Pocket::Right => -std::f64::consts::FRAC_PI_8,
    }
}

/// Participant roster: ids p01.., alternating beacon pockets, phone always
/// opposite.
pub fn roster(n: usize) -> Vec<ParticipantMeta> {
    let width = n.to_string().len().max(2);
    (0..n)
        .map(|i| {
            let beacon_pocket = if i % 2 == 0 { Pocket::Left } else { Pocket::Right };
            ParticipantMeta {
                participant_id: format!("p{:0width$}", i + 1),
                device_pocket: match beacon_pocket {
                    Pocket::Left => Pocket::Right,
                    Pocket::Right => Pocket::Left,
                },
                beacon_pocket,
                beacon_minor: (i + 1) as u16,
            }
        })
        .collect()
}

/// Full synthetic session in memory.
pub fn simulate(cfg: &ScenarioConfig) -> Result<SessionDataset> {
    let trace = generate_scenario(cfg)?;
    let meta = roster(cfg.n_participants);
    let motion = synth_motion(&trace, cfg.rng_seed);
    let sightings = synth_rssi(&trace, cfg, &meta, cfg.rng_seed);
    let dataset = SessionDataset {
        participants: meta,
        sightings,
        motion,
        groups: trace.groups.clone(),
        labels: Some(trace.grid.clone()),
        duration_s: cfg.duration_s,
    };
    dataset.validate()?;
    Ok(dataset)
}
