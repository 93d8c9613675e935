//! Shoebox room impulse responses via the image-source method.
//!
//! Each mirrored source contributes an arrival attenuated by the product of
//! facet reflection coefficients and 1/(4·pi·d) spherical spreading. Arrival
//! times land between samples, so every arrival is spread with an 81-tap
//! Hann-windowed sinc fractional-delay kernel. Samples before the direct
//! path's floor index are zeroed: a point source is causal, and pre-ringing
//! from the interpolation kernel ahead of the first arrival is an artifact.

use crate::catalog::{Catalog, RoomSpec};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Rng};
use rand::Rng as _;
use std::f64::consts::PI;
use std::io::{Read, Write};

/// Half-width of the fractional-delay kernel; 2*HALF+1 = 81 taps.
const KERNEL_HALF: i64 = 40;
const KERNEL_TAPS: i64 = 2 * KERNEL_HALF + 1;

const PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ImageOrder {
    /// Grow the image set until arrivals fall past the end of the buffer.
    Auto,
    /// Include images with at most this many wall reflections.
    Max(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcousticConfig {
    pub speed_of_sound: f64,
    pub sample_rate: u32,
    /// One reflection coefficient per RIR is drawn uniformly from this range
    /// and applied to all six facets.
    pub beta_range: (f64, f64),
    pub rir_length: usize,
    pub min_wall_distance: f64,
    pub min_src_mic_distance: f64,
    pub max_image_order: ImageOrder,
}

impl Default for AcousticConfig {
    fn default() -> Self {
        Self {
            speed_of_sound: 343.0,
            sample_rate: 8000,
            beta_range: (0.88, 0.9),
            rir_length: 4096,
            min_wall_distance: 0.5,
            min_src_mic_distance: 0.5,
            max_image_order: ImageOrder::Auto,
        }
    }
}

impl AcousticConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.beta_range;
        if !(0.0..1.0).contains(&lo) || !(0.0..1.0).contains(&hi) || lo > hi {
            return Err(Error::Validation(format!("beta range [{lo}, {hi}] outside [0, 1)")));
        }
        if self.rir_length == 0 {
            return Err(Error::Validation("rir_length must be > 0".into()));
        }
        if self.sample_rate == 0 {
            return Err(Error::Validation("sample_rate must be > 0".into()));
        }
        if self.speed_of_sound <= 0.0 {
            return Err(Error::Validation("speed of sound must be > 0".into()));
        }
        if self.min_wall_distance < 0.0 || self.min_src_mic_distance < 0.0 {
            return Err(Error::Validation("distances must be >= 0".into()));
        }
        Ok(())
    }
}

/// Source and microphone positions, metres from the room corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub source: [f64; 3],
    pub microphone: [f64; 3],
}

impl Placement {
    pub fn separation(&self) -> f64 {
        dist3(&self.source, &self.microphone)
    }

    pub fn validate(&self, room: &RoomSpec, config: &AcousticConfig) -> Result<()> {
        let dims = room.dims_m();
        let margin = config.min_wall_distance;
        for (name, p) in [("source", &self.source), ("microphone", &self.microphone)] {
            for axis in 0..3 {
                if p[axis] <= 0.0 || p[axis] >= dims[axis] {
                    return Err(Error::Geometry(format!(
                        "{name} outside room on axis {axis} ({} vs {})",
                        p[axis], dims[axis]
                    )));
                }
                if p[axis] < margin || dims[axis] - p[axis] < margin {
                    return Err(Error::Geometry(format!(
                        "{name} within {margin} m of a facet on axis {axis}"
                    )));
                }
            }
        }
        if self.separation() < config.min_src_mic_distance {
            return Err(Error::Geometry(format!(
                "source-microphone separation {:.3} below minimum {:.3}",
                self.separation(),
                config.min_src_mic_distance
            )));
        }
        Ok(())
    }
}

fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Sampled impulse response plus its generation metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub class_id: u32,
    pub placement: Placement,
    /// Shared reflection coefficient of all six facets.
    pub beta: f64,
}

impl Rir {
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn signal(&self) -> crate::dsp::Signal<f64> {
        crate::dsp::Signal::new(self.samples.clone(), self.sample_rate)
    }
}

/// Uniform placement over the feasible region by rejection sampling.
pub fn sample_placement(room: &RoomSpec, rng: &mut Rng, config: &AcousticConfig) -> Result<Placement> {
    config.validate()?;
    let dims = room.dims_m();
    let m = config.min_wall_distance;
    let mut span = [0.0f64; 3];
    for axis in 0..3 {
        span[axis] = dims[axis] - 2.0 * m;
        if span[axis] <= 0.0 {
            return Err(Error::Geometry(format!(
                "room class {}: wall margin {m} m leaves no interior on axis {axis}",
                room.class_id
            )));
        }
    }
    let max_sep = (span[0] * span[0] + span[1] * span[1] + span[2] * span[2]).sqrt();
    if max_sep < config.min_src_mic_distance {
        return Err(Error::Geometry(format!(
            "room class {}: feasible box diagonal {max_sep:.3} below minimum separation",
            room.class_id
        )));
    }
    for _ in 0..PLACEMENT_ATTEMPTS {
        let mut draw = || -> [f64; 3] {
            let mut p = [0.0f64; 3];
            for axis in 0..3 {
                p[axis] = m + rng.gen::<f64>() * span[axis];
            }
            p
        };
        let source = draw();
        let microphone = draw();
        let placement = Placement { source, microphone };
        if placement.separation() >= config.min_src_mic_distance {
            return Ok(placement);
        }
    }
    Err(Error::Sampling(format!(
        "room class {}: no valid placement in {PLACEMENT_ATTEMPTS} attempts",
        room.class_id
    )))
}

/// Per-axis mirror positions with their wall-reflection exponents.
struct AxisImages {
    /// (relative coordinate, reflection factor, reflection count)
    entries: Vec<(f64, f64, u32)>,
}

fn axis_images(
    len: f64,
    src: f64,
    mic: f64,
    beta_lo: f64,
    beta_hi: f64,
    d_max: f64,
    order_cap: Option<u32>,
) -> AxisImages {
    let n_max = ((d_max + len) / (2.0 * len)).ceil() as i64 + 1;
    let mut entries = Vec::new();
    for n in -n_max..=n_max {
        for q in 0..2i64 {
            let order = (2 * n - q).unsigned_abs() as u32;
            if let Some(cap) = order_cap {
                if order > cap {
                    continue;
                }
            }
            let pos = (1 - 2 * q) as f64 * src - mic + 2.0 * n as f64 * len;
            if pos.abs() > d_max {
                continue;
            }
            let refl = beta_lo.powi((n - q).unsigned_abs() as i32) * beta_hi.powi(n.unsigned_abs() as i32);
            entries.push((pos, refl, order));
        }
    }
    AxisImages { entries }
}

/// Image-source summation for a shoebox room. `betas` are the six facet
/// coefficients ordered `[x0, x1, y0, y1, z0, z1]` (wall at the origin, then
/// the far wall, per axis).
pub fn image_source_rir(
    dims: [f64; 3],
    source: [f64; 3],
    microphone: [f64; 3],
    betas: [f64; 6],
    config: &AcousticConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let fs = config.sample_rate as f64;
    let cts = config.speed_of_sound / fs; // metres per sample
    let len = config.rir_length;

    let direct = dist3(&source, &microphone);
    let direct_pos = direct / cts;
    let gate = direct_pos.floor() as i64;
    if gate >= len as i64 {
        return Err(Error::Validation(format!(
            "rir_length {len} cannot contain the direct path (arrival at sample {gate})"
        )));
    }

    let d_max = (len as i64 + KERNEL_HALF + 1) as f64 * cts;
    let order_cap = match config.max_image_order {
        ImageOrder::Auto => None,
        ImageOrder::Max(k) => Some(k),
    };
    let xs = axis_images(dims[0], source[0], microphone[0], betas[0], betas[1], d_max, order_cap);
    let ys = axis_images(dims[1], source[1], microphone[1], betas[2], betas[3], d_max, order_cap);
    let zs = axis_images(dims[2], source[2], microphone[2], betas[4], betas[5], d_max, order_cap);

    let mut h = vec![0.0f64; len];
    let spread = 1.0 / (4.0 * PI);
    // window phase step for the 81-tap Hann
    let dw = 2.0 * PI / KERNEL_TAPS as f64;
    let (sin_dw, cos_dw) = dw.sin_cos();

    for &(x, rx, ox) in &xs.entries {
        let xx = x * x;
        for &(y, ry, oy) in &ys.entries {
            let xy = xx + y * y;
            if xy > d_max * d_max {
                continue;
            }
            let rxy = rx * ry;
            let oxy = ox + oy;
            for &(z, rz, oz) in &zs.entries {
                if let Some(cap) = order_cap {
                    if oxy + oz > cap {
                        continue;
                    }
                }
                let d2 = xy + z * z;
                if d2 > d_max * d_max {
                    continue;
                }
                let d = d2.sqrt();
                let p = d / cts;
                let k0 = p.floor() as i64;
                if k0 - KERNEL_HALF >= len as i64 {
                    continue;
                }
                let amp = rxy * rz * spread / d;

                // sin(pi*(k - p)) = -(-1)^k sin(pi*p): one sine for all taps
                let sin_pp = (PI * p).sin();
                let t0 = (k0 - KERNEL_HALF) as f64 - p;
                // Hann window 0.5*(1 + cos(2*pi*t/81)) advanced by rotation
                let w0 = dw * t0;
                let (mut w_sin, mut w_cos) = w0.sin_cos();
                let base_parity = if (k0 - KERNEL_HALF).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let mut parity = base_parity;
                for j in 0..KERNEL_TAPS {
                    let k = k0 - KERNEL_HALF + j;
                    if k >= 0 && (k as usize) < len {
                        let t = t0 + j as f64;
                        let sinc = if t.abs() < 1e-9 {
                            1.0
                        } else {
                            -parity * sin_pp / (PI * t)
                        };
                        let window = 0.5 * (1.0 + w_cos);
                        h[k as usize] += amp * window * sinc;
                    }
                    parity = -parity;
                    let c = w_cos * cos_dw - w_sin * sin_dw;
                    w_sin = w_sin * cos_dw + w_cos * sin_dw;
                    w_cos = c;
                }
            }
        }
    }

    // causality gate: nothing arrives before the direct path
    for v in h.iter_mut().take(gate.max(0) as usize) {
        *v = 0.0;
    }
    Ok(h)
}

/// Generate one RIR for a placement inside `room` with a shared facet
/// reflection coefficient `beta`.
pub fn generate_rir(
    room: &RoomSpec,
    placement: &Placement,
    beta: f64,
    config: &AcousticConfig,
) -> Result<Rir> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Validation(format!("beta {beta} outside [0, 1)")));
    }
    placement.validate(room, config)?;
    let samples = image_source_rir(
        room.dims_m(),
        placement.source,
        placement.microphone,
        [beta; 6],
        config,
    )?;
    Ok(Rir {
        samples,
        sample_rate: config.sample_rate,
        class_id: room.class_id,
        placement: *placement,
        beta,
    })
}

fn bank_item(catalog: &Catalog, seed: u64, config: &AcousticConfig, class: u32, index: u64) -> Result<Rir> {
    let room = catalog.room(class)?;
    let mut rng = stream_rng(seed, &[1, class as u64, index]);
    let placement = sample_placement(room, &mut rng, config).map_err(|e| {
        Error::Geometry(format!("class {class} item {index}: {e}"))
    })?;
    let (lo, hi) = config.beta_range;
    let beta = if hi > lo { lo + rng.gen::<f64>() * (hi - lo) } else { lo };
    generate_rir(room, &placement, beta, config)
        .map_err(|e| Error::Validation(format!("class {class} item {index}: {e}")))
}

/// `per_class_count` RIRs for every class, each with a fresh placement and a
/// fresh beta draw. Per-item seeds are derived from `(class, index)`, so the
/// bank is identical whether generated serially or with `jobs > 1`.
pub fn generate_rir_bank(
    catalog: &Catalog,
    per_class_count: usize,
    seed: u64,
    config: &AcousticConfig,
    jobs: usize,
) -> Result<Vec<Rir>> {
    if per_class_count == 0 {
        return Err(Error::Validation("per_class_count must be >= 1".into()));
    }
    config.validate()?;
    let total = catalog.len() * per_class_count;
    let tasks: Vec<(u32, u64)> = (0..catalog.len() as u32)
        .flat_map(|c| (0..per_class_count as u64).map(move |i| (c, i)))
        .collect();

    if jobs <= 1 {
        let mut bank = Vec::with_capacity(total);
        for &(c, i) in &tasks {
            bank.push(bank_item(catalog, seed, config, c, i)?);
        }
        return Ok(bank);
    }

    // round-robin task assignment: per-class generation costs differ widely
    let worker_outputs: Vec<Vec<(usize, Result<Rir>)>> = std::thread::scope(|scope| {
        let tasks = &tasks;
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                scope.spawn(move || {
                    let mut out = Vec::new();
                    let mut idx = w;
                    while idx < tasks.len() {
                        let (c, i) = tasks[idx];
                        out.push((idx, bank_item(catalog, seed, config, c, i)));
                        idx += jobs;
                    }
                    out
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut slots: Vec<Option<Result<Rir>>> = (0..total).map(|_| None).collect();
    for batch in worker_outputs {
        for (idx, r) in batch {
            slots[idx] = Some(r);
        }
    }
    let mut bank = Vec::with_capacity(total);
    for slot in slots {
        bank.push(slot.expect("all slots filled")?);
    }
    Ok(bank)
}

pub const BANK_MAGIC: &[u8; 4] = b"RVRB";
pub const BANK_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankHeader {
    pub version: u32,
    pub sample_rate: u32,
    pub rir_length: u32,
    pub count: u32,
    pub config_hash: u64,
}

/// Write the bank container: header, then fixed-size little-endian records
/// (class_id u32, placement 6xf64, beta f64, samples rir_length x f32).
pub fn write_bank<W: Write>(w: &mut W, bank: &[Rir], config_hash: u64) -> Result<()> {
    let first = bank
        .first()
        .ok_or_else(|| Error::Validation("cannot write an empty bank".into()))?;
    let rir_length = first.samples.len();
    for (i, r) in bank.iter().enumerate() {
        if r.samples.len() != rir_length || r.sample_rate != first.sample_rate {
            return Err(Error::Validation(format!("bank record {i}: inconsistent shape or rate")));
        }
    }
    w.write_all(BANK_MAGIC)?;
    w.write_all(&BANK_VERSION.to_le_bytes())?;
    w.write_all(&first.sample_rate.to_le_bytes())?;
    w.write_all(&(rir_length as u32).to_le_bytes())?;
    w.write_all(&(bank.len() as u32).to_le_bytes())?;
    w.write_all(&config_hash.to_le_bytes())?;
    for r in bank {
        w.write_all(&r.class_id.to_le_bytes())?;
        for v in r.placement.source.iter().chain(r.placement.microphone.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&r.beta.to_le_bytes())?;
        for &s in &r.samples {
            w.write_all(&(s as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_bank<R: Read>(r: &mut R) -> Result<(Vec<Rir>, BankHeader)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BANK_MAGIC {
        return Err(Error::Format("not a RIR bank (bad magic)".into()));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let version = read_u32(r)?;
    if version != BANK_VERSION {
        return Err(Error::Format(format!("unsupported bank version {version}")));
    }
    let sample_rate = read_u32(r)?;
    let rir_length = read_u32(r)?;
    let count = read_u32(r)?;
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let config_hash = u64::from_le_bytes(u64buf);
    let header = BankHeader { version, sample_rate, rir_length, count, config_hash };

    let mut bank = Vec::with_capacity(count as usize);
    let mut f64buf = [0u8; 8];
    let mut f32buf = [0u8; 4];
    for _ in 0..count {
        let mut u32b = [0u8; 4];
        r.read_exact(&mut u32b)?;
        let class_id = u32::from_le_bytes(u32b);
        let mut pts = [0.0f64; 6];
        for p in pts.iter_mut() {
            r.read_exact(&mut f64buf)?;
            *p = f64::from_le_bytes(f64buf);
        }
        r.read_exact(&mut f64buf)?;
        let beta = f64::from_le_bytes(f64buf);
        let mut samples = Vec::with_capacity(rir_length as usize);
        for _ in 0..rir_length {
            r.read_exact(&mut f32buf)?;
            samples.push(f32::from_le_bytes(f32buf) as f64);
        }
        bank.push(Rir {
            samples,
            sample_rate,
            class_id,
            placement: Placement {
                source: [pts[0], pts[1], pts[2]],
                microphone: [pts[3], pts[4], pts[5]],
            },
            beta,
        });
    }
    Ok((bank, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{enumerate_rooms, DimensionRange, TypeGrid, TypeGrids};
    use crate::rng::rng_from_seed;

    fn test_room(w: f64, d: f64, h: f64) -> RoomSpec {
        RoomSpec {
            class_id: 0,
            room_type: crate::catalog::RoomType::Small,
            width_mm: (w * 1000.0).round() as i64,
            depth_mm: (d * 1000.0).round() as i64,
            height_mm: (h * 1000.0).round() as i64,
        }
    }

    fn tiny_catalog() -> Catalog {
        let g = |v: f64, d: f64| TypeGrid {
            width: DimensionRange::new(v, v, 1.0).unwrap(),
            depth: DimensionRange::new(d, d, 1.0).unwrap(),
            height: DimensionRange::new(3.0, 3.0, 1.0).unwrap(),
        };
        enumerate_rooms(&TypeGrids { grids: [g(3.5, 4.5), g(9.0, 10.0), g(2.0, 10.0)] }).unwrap()
    }

    /// Independent brute-force image enumeration with naive per-tap math.
    fn brute_force_rir(
        dims: [f64; 3],
        src: [f64; 3],
        mic: [f64; 3],
        betas: [f64; 6],
        order: u32,
        config: &AcousticConfig,
    ) -> Vec<f64> {
        let fs = config.sample_rate as f64;
        let cts = config.speed_of_sound / fs;
        let len = config.rir_length;
        let mut h = vec![0.0f64; len];
        let n_bound = order as i64 + 1;
        for nx in -n_bound..=n_bound {
            for qx in 0..2i64 {
                for ny in -n_bound..=n_bound {
                    for qy in 0..2i64 {
                        for nz in -n_bound..=n_bound {
                            for qz in 0..2i64 {
                                let total = (2 * nx - qx).unsigned_abs()
                                    + (2 * ny - qy).unsigned_abs()
                                    + (2 * nz - qz).unsigned_abs();
                                if total > order as u64 {
                                    continue;
                                }
                                let rel = [
                                    (1 - 2 * qx) as f64 * src[0] - mic[0] + 2.0 * nx as f64 * dims[0],
                                    (1 - 2 * qy) as f64 * src[1] - mic[1] + 2.0 * ny as f64 * dims[1],
                                    (1 - 2 * qz) as f64 * src[2] - mic[2] + 2.0 * nz as f64 * dims[2],
                                ];
                                let refl = betas[0].powi((nx - qx).unsigned_abs() as i32)
                                    * betas[1].powi(nx.unsigned_abs() as i32)
                                    * betas[2].powi((ny - qy).unsigned_abs() as i32)
                                    * betas[3].powi(ny.unsigned_abs() as i32)
                                    * betas[4].powi((nz - qz).unsigned_abs() as i32)
                                    * betas[5].powi(nz.unsigned_abs() as i32);
                                let d = (rel[0] * rel[0] + rel[1] * rel[1] + rel[2] * rel[2]).sqrt();
                                let amp = refl / (4.0 * PI * d);
                                let p = d / cts;
                                for k in 0..len as i64 {
                                    let t = k as f64 - p;
                                    if t.abs() > KERNEL_HALF as f64 + 1.0 {
                                        continue;
                                    }
                                    // only taps of the 81-tap window centred at floor(p)
                                    if k < p.floor() as i64 - KERNEL_HALF
                                        || k > p.floor() as i64 + KERNEL_HALF
                                    {
                                        continue;
                                    }
                                    let sinc = if t.abs() < 1e-9 {
                                        1.0
                                    } else {
                                        (PI * t).sin() / (PI * t)
                                    };
                                    let w = 0.5 * (1.0 + (2.0 * PI * t / KERNEL_TAPS as f64).cos());
                                    h[k as usize] += amp * w * sinc;
                                }
                            }
                        }
                    }
                }
            }
        }
        let direct = ((src[0] - mic[0]).powi(2) + (src[1] - mic[1]).powi(2) + (src[2] - mic[2]).powi(2))
            .sqrt();
        let gate = (direct / cts).floor() as usize;
        for v in h.iter_mut().take(gate) {
            *v = 0.0;
        }
        h
    }

    #[test]
    fn free_field_single_arrival() {
        // distance 1.715 m at 8 kHz lands exactly on sample 40
        let room = test_room(3.5, 4.5, 3.0);
        let placement = Placement {
            source: [0.8, 1.0, 1.2],
            microphone: [2.515, 1.0, 1.2],
        };
        let config = AcousticConfig::default();
        let rir = generate_rir(&room, &placement, 0.0, &config).unwrap();
        let expected = 1.0 / (4.0 * PI * 1.715);
        assert!((rir.samples[40] - expected).abs() / expected < 0.02);
        for (k, &v) in rir.samples.iter().enumerate() {
            if k != 40 {
                assert!(v.abs() < 1e-9, "sample {k} = {v}");
            }
        }
    }

    #[test]
    fn matches_brute_force_oracle_at_order_two() {
        let dims = [3.5, 4.5, 3.0];
        let src = [1.0, 1.2, 1.1];
        let mic = [2.3, 3.1, 1.9];
        let betas = [0.9, 0.85, 0.9, 0.88, 0.8, 0.9];
        let config = AcousticConfig {
            max_image_order: ImageOrder::Max(2),
            ..AcousticConfig::default()
        };
        let fast = image_source_rir(dims, src, mic, betas, &config).unwrap();
        let slow = brute_force_rir(dims, src, mic, betas, 2, &config);
        let max_err = fast
            .iter()
            .zip(slow.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-6, "max per-sample error {max_err}");
    }

    #[test]
    fn energy_grows_with_beta() {
        let room = test_room(3.5, 4.5, 3.0);
        let placement = Placement {
            source: [1.0, 1.2, 1.1],
            microphone: [2.3, 3.1, 1.9],
        };
        let config = AcousticConfig {
            max_image_order: ImageOrder::Max(3),
            ..AcousticConfig::default()
        };
        let strong = generate_rir(&room, &placement, 0.9, &config).unwrap().energy();
        let weak = generate_rir(&room, &placement, 0.5, &config).unwrap().energy();
        assert!(strong > weak);

        let full = AcousticConfig::default();
        let a = generate_rir(&room, &placement, 0.9, &full).unwrap().energy();
        let b = generate_rir(&room, &placement, 0.88, &full).unwrap().energy();
        assert!(a > b);
    }

    #[test]
    fn reciprocity() {
        let room = test_room(3.5, 4.5, 3.0);
        let config = AcousticConfig::default();
        let fwd = generate_rir(
            &room,
            &Placement { source: [1.0, 1.2, 1.1], microphone: [2.3, 3.1, 1.9] },
            0.9,
            &config,
        )
        .unwrap();
        let rev = generate_rir(
            &room,
            &Placement { source: [2.3, 3.1, 1.9], microphone: [1.0, 1.2, 1.1] },
            0.9,
            &config,
        )
        .unwrap();
        for (a, b) in fwd.samples.iter().zip(rev.samples.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn direct_path_arrival_index() {
        let room = test_room(3.5, 4.5, 3.0);
        let placement = Placement {
            source: [0.9, 1.3, 1.0],
            microphone: [2.4, 3.2, 2.1],
        };
        let config = AcousticConfig::default();
        let rir = generate_rir(&room, &placement, 0.9, &config).unwrap();
        let d = placement.separation();
        let expected = (config.sample_rate as f64 * d / config.speed_of_sound).round() as i64;
        let first = rir
            .samples
            .iter()
            .position(|v| v.abs() > 1e-9)
            .expect("rir must be non-silent") as i64;
        assert!((first - expected).abs() <= 2, "first {first} vs expected {expected}");
    }

    #[test]
    fn placement_respects_margins_and_seed() {
        let room = test_room(3.5, 4.5, 3.0);
        let config = AcousticConfig::default();
        let mut rng = rng_from_seed(42);
        let p1 = sample_placement(&room, &mut rng, &config).unwrap();
        p1.validate(&room, &config).unwrap();
        for axis in 0..3 {
            assert!(p1.source[axis] >= 0.5 && p1.source[axis] <= room.dims_m()[axis] - 0.5);
        }
        let mut rng2 = rng_from_seed(42);
        let p2 = sample_placement(&room, &mut rng2, &config).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn infeasible_room_is_rejected() {
        let room = test_room(1.0, 1.0, 1.0);
        let config = AcousticConfig::default();
        let mut rng = rng_from_seed(1);
        match sample_placement(&room, &mut rng, &config) {
            Err(Error::Geometry(_)) => {}
            other => panic!("expected geometry error, got {other:?}"),
        }
    }

    #[test]
    fn short_buffer_rejected() {
        let room = test_room(3.5, 4.5, 3.0);
        let placement = Placement {
            source: [0.8, 1.0, 1.2],
            microphone: [2.515, 1.0, 1.2],
        };
        let config = AcousticConfig { rir_length: 16, ..AcousticConfig::default() };
        assert!(matches!(
            generate_rir(&room, &placement, 0.5, &config),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn bank_is_balanced_and_deterministic() {
        let catalog = tiny_catalog();
        let config = AcousticConfig {
            rir_length: 512,
            max_image_order: ImageOrder::Max(2),
            ..AcousticConfig::default()
        };
        let bank1 = generate_rir_bank(&catalog, 1, 7, &config, 1).unwrap();
        assert_eq!(bank1.len(), 3);
        for (i, r) in bank1.iter().enumerate() {
            assert_eq!(r.class_id, i as u32);
            assert!((0.88..=0.9).contains(&r.beta));
        }
        let bank2 = generate_rir_bank(&catalog, 1, 7, &config, 1).unwrap();
        assert_eq!(bank1, bank2);
    }

    #[test]
    fn parallel_bank_equals_serial() {
        let catalog = tiny_catalog();
        let config = AcousticConfig {
            rir_length: 1024,
            max_image_order: ImageOrder::Max(1),
            ..AcousticConfig::default()
        };
        let serial = generate_rir_bank(&catalog, 4, 11, &config, 1).unwrap();
        let parallel = generate_rir_bank(&catalog, 4, 11, &config, 3).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn bank_file_round_trip() {
        let catalog = tiny_catalog();
        let config = AcousticConfig {
            rir_length: 1024,
            max_image_order: ImageOrder::Max(1),
            ..AcousticConfig::default()
        };
        let bank = generate_rir_bank(&catalog, 2, 3, &config, 1).unwrap();
        let mut buf = Vec::new();
        write_bank(&mut buf, &bank, 0xabcd).unwrap();
        let (back, header) = read_bank(&mut buf.as_slice()).unwrap();
        assert_eq!(header.count, 6);
        assert_eq!(header.rir_length, 1024);
        assert_eq!(header.config_hash, 0xabcd);
        for (a, b) in bank.iter().zip(back.iter()) {
            assert_eq!(a.class_id, b.class_id);
            assert_eq!(a.placement, b.placement);
            assert_eq!(a.beta, b.beta);
            for (x, y) in a.samples.iter().zip(b.samples.iter()) {
                assert!((x - y).abs() <= (x.abs() * 1e-6).max(1e-9)); // f32 storage
            }
        }
    }
}
