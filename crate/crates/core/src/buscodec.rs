//! Byte-level communication between the emulated sensors and the controller.
//!
//! # Register maps
//!
//! Every chip is a 256-byte register file reached through [`spi_transaction`].
//! The first MOSI byte is the 7-bit register address with bit 7 set for a read,
//! so only 0x00..=0x7F is addressable from the bus. Reads return one byte per
//! clocked byte after the address, auto-incrementing and wrapping from 0x7F to
//! 0x00; the response to the address byte is 0x00. Writes store the following
//! bytes into consecutive registers; writes to read-only or unknown registers
//! are dropped and counted in [`RegisterMap::rejected_writes`].
//! Unknown registers read as 0x00. All multi-byte values are big-endian.
//!
//! IMU ([`ChipLayout::IMU`]):
//!
//! | reg         | content                                          |
//! |-------------|--------------------------------------------------|
//! | 0x3B..=0x40 | accel x, y, z: i16, 1/4096 g per LSB (±8 g)      |
//! | 0x41..=0x42 | temperature: i16, degC = raw / 340 + 36.53       |
//! | 0x43..=0x48 | gyro x, y, z: i16, 1/65.5 deg/s per LSB (±500)   |
//! | 0x75        | WHO_AM_I = 0x68 (read-only)                      |
//! | 0x19 0x1A 0x1B 0x1C 0x38 0x6A 0x6B 0x6C | configuration, writable |
//!
//! Magnetometer ([`ChipLayout::MAG`]):
//!
//! | reg         | content                                   |
//! |-------------|-------------------------------------------|
//! | 0x00        | WHO_AM_I = 0x48                           |
//! | 0x03..=0x08 | field x, y, z: i16, 0.15 uT per LSB       |
//! | 0x0A 0x0B   | configuration, writable                   |
//!
//! Barometer ([`ChipLayout::BARO`]):
//!
//! | reg         | content                                      |
//! |-------------|----------------------------------------------|
//! | 0x50        | WHO_AM_I = 0x58                              |
//! | 0x77..=0x79 | pressure: u24, 1/16 Pa per LSB               |
//! | 0x7A..=0x7B | temperature: i16, 0.01 degC per LSB          |
//! | 0x74 0x75   | configuration, writable                      |
//!
//! # GPS frame
//!
//! ```text
//! 0xB5 0x62 | class 0x01 | id 0x30 | len u16 LE = 24 | payload | ck_a ck_b
//! payload (all i32 LE): lat 1e-7 deg, lon 1e-7 deg, height mm,
//!                       vel north, east, down cm/s
//! ```
//!
//! The checksum is the 8-bit Fletcher sum over class, id, length and payload.
//!
//! # PWM
//!
//! Pulse widths in microseconds map linearly 1000 -> 0.0, 2000 -> 1.0, clamped.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex, MutexGuard};

use thiserror::Error;

use crate::environment::G0;
use crate::frames::{GeoPosition, Vec3};
use crate::sensors::GpsFix;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum BusError {
    #[error("empty SPI transaction")]
    EmptyTransaction,
}

/// Static description of a chip's register file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChipLayout {
    pub name: &'static str,
    pub who_am_i_addr: u8,
    pub who_am_i: u8,
    /// First data register and block length.
    pub data_start: u8,
    pub data_len: u8,
    pub config: &'static [u8],
}

impl ChipLayout {
    pub const IMU: ChipLayout = ChipLayout {
        name: "imu",
        who_am_i_addr: 0x75,
        who_am_i: 0x68,
        data_start: 0x3B,
        data_len: 14,
        config: &[0x19, 0x1A, 0x1B, 0x1C, 0x38, 0x6A, 0x6B, 0x6C],
    };
    pub const MAG: ChipLayout = ChipLayout {
        name: "mag",
        who_am_i_addr: 0x00,
        who_am_i: 0x48,
        data_start: 0x03,
        data_len: 6,
        config: &[0x0A, 0x0B],
    };
    pub const BARO: ChipLayout = ChipLayout {
        name: "baro",
        who_am_i_addr: 0x50,
        who_am_i: 0x58,
        data_start: 0x77,
        data_len: 5,
        config: &[0x74, 0x75],
    };

    fn is_data(&self, reg: u8) -> bool {
        (self.data_start as u16..self.data_start as u16 + self.data_len as u16).contains(&(reg as u16))
    }

    pub fn is_writable(&self, reg: u8) -> bool {
        self.config.contains(&reg)
    }

    pub fn is_known(&self, reg: u8) -> bool {
        reg == self.who_am_i_addr || self.is_data(reg) || self.is_writable(reg)
    }
}

/// Register file of one emulated chip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterMap {
    layout: ChipLayout,
    regs: [u8; 256],
    rejected_writes: u64,
}

impl RegisterMap {
    pub fn new(layout: ChipLayout) -> Self {
        let mut regs = [0u8; 256];
        regs[layout.who_am_i_addr as usize] = layout.who_am_i;
        Self {
            layout,
            regs,
            rejected_writes: 0,
        }
    }

    pub fn imu() -> Self {
        Self::new(ChipLayout::IMU)
    }

    pub fn mag() -> Self {
        Self::new(ChipLayout::MAG)
    }

    pub fn baro() -> Self {
        Self::new(ChipLayout::BARO)
    }

    pub fn layout(&self) -> &ChipLayout {
        &self.layout
    }

    /// Writes dropped because the target register was read-only or unknown.
    pub fn rejected_writes(&self) -> u64 {
        self.rejected_writes
    }

    /// Register value as seen on the bus.
    pub fn peek(&self, reg: u8) -> u8 {
        if self.layout.is_known(reg) {
            self.regs[reg as usize]
        } else {
            0
        }
    }

    /// Replaces the whole data block in one step.
    pub fn update_data(&mut self, block: &[u8]) {
        assert_eq!(block.len(), self.layout.data_len as usize, "data block length");
        let start = self.layout.data_start as usize;
        self.regs[start..start + block.len()].copy_from_slice(block);
    }

    pub fn data(&self) -> &[u8] {
        let start = self.layout.data_start as usize;
        &self.regs[start..start + self.layout.data_len as usize]
    }

    fn write(&mut self, reg: u8, value: u8) {
        if self.layout.is_writable(reg) {
            self.regs[reg as usize] = value;
        } else {
            self.rejected_writes += 1;
        }
    }
}

/// One chip-select-framed SPI exchange; returns the MISO bytes.
pub fn spi_transaction(chip: &mut RegisterMap, mosi: &[u8]) -> Result<Vec<u8>, BusError> {
    let (&first, rest) = mosi.split_first().ok_or(BusError::EmptyTransaction)?;
    let read = first & 0x80 != 0;
    let mut reg = first & 0x7F;
    let mut miso = Vec::with_capacity(mosi.len());
    miso.push(0x00);
    for &byte in rest {
        if read {
            miso.push(chip.peek(reg));
        } else {
            chip.write(reg, byte);
            miso.push(0x00);
        }
        reg = (reg + 1) & 0x7F;
    }
    Ok(miso)
}

/// Burst read of `len` bytes starting at `reg`.
pub fn spi_read(chip: &mut RegisterMap, reg: u8, len: usize) -> Vec<u8> {
    let mut mosi = vec![0u8; len + 1];
    mosi[0] = reg | 0x80;
    let mut miso = spi_transaction(chip, &mosi).expect("non-empty");
    miso.remove(0);
    miso
}

/// Register map shared between a producer and a bus master on different
/// threads. Every update and transaction holds the lock for its whole
/// duration, so no transaction observes a partially written block.
#[derive(Debug, Clone)]
pub struct SharedChip(Arc<Mutex<RegisterMap>>);

impl SharedChip {
    pub fn new(map: RegisterMap) -> Self {
        Self(Arc::new(Mutex::new(map)))
    }

    fn lock(&self) -> MutexGuard<'_, RegisterMap> {
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn transaction(&self, mosi: &[u8]) -> Result<Vec<u8>, BusError> {
        spi_transaction(&mut self.lock(), mosi)
    }

    pub fn update(&self, f: impl FnOnce(&mut RegisterMap)) {
        f(&mut self.lock())
    }
}

pub const ACCEL_LSB: f64 = G0 / 4096.0;
pub const GYRO_LSB: f64 = std::f64::consts::PI / 180.0 / 65.5;
pub const MAG_LSB: f64 = 0.15;
pub const BARO_PRESSURE_LSB: f64 = 1.0 / 16.0;
pub const BARO_TEMP_LSB: f64 = 0.01;
const IMU_TEMP_OFFSET: f64 = 36.53;
const IMU_TEMP_SCALE: f64 = 340.0;
const KELVIN: f64 = 273.15;

/// Rounds to the nearest count and saturates to i16.
pub fn quantize_i16(value: f64, lsb: f64) -> i16 {
    let q = (value / lsb).round();
    if q.is_nan() {
        0
    } else {
        q.clamp(i16::MIN as f64, i16::MAX as f64) as i16
    }
}

fn put_vec(out: &mut Vec<u8>, v: &Vec3, lsb: f64) {
    for x in v.iter() {
        out.extend_from_slice(&quantize_i16(*x, lsb).to_be_bytes());
    }
}

fn get_i16(b: &[u8], at: usize) -> i16 {
    i16::from_be_bytes([b[at], b[at + 1]])
}

fn get_vec(b: &[u8], at: usize, lsb: f64) -> Vec3 {
    Vec3::new(
        get_i16(b, at) as f64 * lsb,
        get_i16(b, at + 2) as f64 * lsb,
        get_i16(b, at + 4) as f64 * lsb,
    )
}

/// Decoded IMU data block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// m/s^2
    pub accel: Vec3,
    /// K
    pub temperature: f64,
    /// rad/s
    pub gyro: Vec3,
}

/// Raw 14-byte IMU data block for the given physical values.
pub fn imu_block(accel: &Vec3, gyro: &Vec3, temperature: f64) -> [u8; 14] {
    let mut out = Vec::with_capacity(14);
    put_vec(&mut out, accel, ACCEL_LSB);
    let t = quantize_i16((temperature - KELVIN - IMU_TEMP_OFFSET) * IMU_TEMP_SCALE, 1.0);
    out.extend_from_slice(&t.to_be_bytes());
    put_vec(&mut out, gyro, GYRO_LSB);
    out.try_into().expect("14 bytes")
}

/// Encodes accelerometer (m/s^2), gyro (rad/s) and temperature (K) into the
/// IMU data registers in one update. Out-of-range values saturate.
pub fn encode_imu(accel: &Vec3, gyro: &Vec3, temperature: f64, map: &mut RegisterMap) {
    map.update_data(&imu_block(accel, gyro, temperature));
}

/// Decodes a 14-byte burst read from 0x3B.
pub fn decode_imu(block: &[u8; 14]) -> ImuSample {
    ImuSample {
        accel: get_vec(block, 0, ACCEL_LSB),
        temperature: get_i16(block, 6) as f64 / IMU_TEMP_SCALE + IMU_TEMP_OFFSET + KELVIN,
        gyro: get_vec(block, 8, GYRO_LSB),
    }
}

/// Encodes the magnetic field (uT, body frame).
pub fn encode_mag(field: &Vec3, map: &mut RegisterMap) {
    let mut out = Vec::with_capacity(6);
    put_vec(&mut out, field, MAG_LSB);
    map.update_data(&out);
}

pub fn decode_mag(block: &[u8; 6]) -> Vec3 {
    get_vec(block, 0, MAG_LSB)
}

/// Encodes static pressure (Pa) and temperature (K).
pub fn encode_baro(pressure: f64, temperature: f64, map: &mut RegisterMap) {
    let p = (pressure / BARO_PRESSURE_LSB).round();
    let p = if p.is_nan() {
        0
    } else {
        p.clamp(0.0, 16_777_215.0) as u32
    };
    let t = quantize_i16(temperature - KELVIN, BARO_TEMP_LSB);
    let pb = p.to_be_bytes();
    let tb = t.to_be_bytes();
    map.update_data(&[pb[1], pb[2], pb[3], tb[0], tb[1]]);
}

/// Returns (pressure Pa, temperature K).
pub fn decode_baro(block: &[u8; 5]) -> (f64, f64) {
    let p = u32::from_be_bytes([0, block[0], block[1], block[2]]) as f64 * BARO_PRESSURE_LSB;
    let t = get_i16(block, 3) as f64 * BARO_TEMP_LSB + KELVIN;
    (p, t)
}

pub const GPS_SYNC: [u8; 2] = [0xB5, 0x62];
pub const GPS_CLASS: u8 = 0x01;
pub const GPS_ID: u8 = 0x30;
pub const GPS_PAYLOAD_LEN: usize = 24;
pub const GPS_FRAME_LEN: usize = 2 + 4 + GPS_PAYLOAD_LEN + 2;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum GpsDecodeError {
    #[error("frame truncated: {got} of {need} bytes")]
    Truncated { got: usize, need: usize },
    #[error("bad sync bytes {0:#04x} {1:#04x}")]
    BadSync(u8, u8),
    #[error("checksum mismatch")]
    BadChecksum,
    #[error("length field {declared} does not match frame ({actual} payload bytes)")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("unknown message class {class:#04x} id {id:#04x}")]
    UnknownMessage { class: u8, id: u8 },
    #[error("decoded fix out of range")]
    InvalidFix,
}

/// 8-bit Fletcher checksum as used by UBX.
pub fn fletcher8(bytes: &[u8]) -> [u8; 2] {
    let (mut a, mut b) = (0u8, 0u8);
    for &x in bytes {
        a = a.wrapping_add(x);
        b = b.wrapping_add(a);
    }
    [a, b]
}

fn scaled_i32(value: f64, scale: f64) -> i32 {
    let q = (value * scale).round();
    if q.is_nan() {
        0
    } else {
        q.clamp(i32::MIN as f64, i32::MAX as f64) as i32
    }
}

/// Encodes a fix as one frame.
pub fn encode_gps(fix: &GpsFix) -> [u8; GPS_FRAME_LEN] {
    let mut f = [0u8; GPS_FRAME_LEN];
    f[..2].copy_from_slice(&GPS_SYNC);
    f[2] = GPS_CLASS;
    f[3] = GPS_ID;
    f[4..6].copy_from_slice(&(GPS_PAYLOAD_LEN as u16).to_le_bytes());
    let fields = [
        scaled_i32(fix.position.latitude, 1e7),
        scaled_i32(fix.position.longitude, 1e7),
        scaled_i32(fix.position.altitude, 1e3),
        scaled_i32(fix.velocity_ned.x, 100.0),
        scaled_i32(fix.velocity_ned.y, 100.0),
        scaled_i32(fix.velocity_ned.z, 100.0),
    ];
    for (k, v) in fields.iter().enumerate() {
        f[6 + 4 * k..10 + 4 * k].copy_from_slice(&v.to_le_bytes());
    }
    let ck = fletcher8(&f[2..6 + GPS_PAYLOAD_LEN]);
    f[6 + GPS_PAYLOAD_LEN..].copy_from_slice(&ck);
    f
}

/// Decodes exactly one frame.
pub fn decode_gps(bytes: &[u8]) -> Result<GpsFix, GpsDecodeError> {
    const HEADER: usize = 6;
    if bytes.len() < HEADER {
        return Err(GpsDecodeError::Truncated {
            got: bytes.len(),
            need: HEADER,
        });
    }
    if bytes[..2] != GPS_SYNC {
        return Err(GpsDecodeError::BadSync(bytes[0], bytes[1]));
    }
    let declared = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
    let need = HEADER + declared + 2;
    if bytes.len() < need {
        return Err(GpsDecodeError::Truncated { got: bytes.len(), need });
    }
    if bytes.len() > need {
        return Err(GpsDecodeError::LengthMismatch {
            declared,
            actual: bytes.len() - HEADER - 2,
        });
    }
    if fletcher8(&bytes[2..HEADER + declared]) != [bytes[need - 2], bytes[need - 1]] {
        return Err(GpsDecodeError::BadChecksum);
    }
    if (bytes[2], bytes[3]) != (GPS_CLASS, GPS_ID) {
        return Err(GpsDecodeError::UnknownMessage {
            class: bytes[2],
            id: bytes[3],
        });
    }
    if declared != GPS_PAYLOAD_LEN {
        return Err(GpsDecodeError::LengthMismatch {
            declared,
            actual: GPS_PAYLOAD_LEN,
        });
    }
    let field = |k: usize| {
        let at = HEADER + 4 * k;
        i32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]) as f64
    };
    let position =
        GeoPosition::new(field(0) * 1e-7, field(1) * 1e-7, field(2) * 1e-3).map_err(|_| GpsDecodeError::InvalidFix)?;
    Ok(GpsFix {
        position,
        velocity_ned: Vec3::new(field(3), field(4), field(5)) / 100.0,
    })
}

pub const PWM_MIN: f64 = 1000.0;
pub const PWM_MAX: f64 = 2000.0;

/// Pulse widths (us) to throttle in [0, 1]. NaN pulses read as 0.
pub fn decode_pwm(pulses: &[f64]) -> Vec<f64> {
    pulses.iter().map(|&p| pwm_to_throttle(p)).collect()
}

pub fn pwm_to_throttle(pulse: f64) -> f64 {
    if pulse.is_nan() {
        return 0.0;
    }
    ((pulse - PWM_MIN) / (PWM_MAX - PWM_MIN)).clamp(0.0, 1.0)
}

/// Throttle in [0, 1] to a pulse width, clamped to [1000, 2000] us.
pub fn throttle_to_pwm(throttle: f64) -> f64 {
    if throttle.is_nan() {
        return PWM_MIN;
    }
    (PWM_MIN + (PWM_MAX - PWM_MIN) * throttle).clamp(PWM_MIN, PWM_MAX)
}

/// Everything the flight controller is wired to: three SPI chips and a UART
/// carrying GPS frames.
#[derive(Debug, Clone)]
pub struct SensorBus {
    pub imu: RegisterMap,
    pub mag: RegisterMap,
    pub baro: RegisterMap,
    uart: VecDeque<Vec<u8>>,
}

impl Default for SensorBus {
    fn default() -> Self {
        Self::new()
    }
}

impl SensorBus {
    pub fn new() -> Self {
        Self {
            imu: RegisterMap::imu(),
            mag: RegisterMap::mag(),
            baro: RegisterMap::baro(),
            uart: VecDeque::new(),
        }
    }

    pub fn send_uart(&mut self, frame: Vec<u8>) {
        self.uart.push_back(frame);
    }

    /// Frames received since the last call, oldest first.
    pub fn drain_uart(&mut self) -> Vec<Vec<u8>> {
        self.uart.drain(..).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn who_am_i() {
        let mut imu = RegisterMap::imu();
        assert_eq!(spi_transaction(&mut imu, &[0xF5, 0x00]).unwrap(), vec![0x00, 0x68]);
        assert_eq!(spi_read(&mut RegisterMap::mag(), 0x00, 1), vec![0x48]);
        assert_eq!(spi_read(&mut RegisterMap::baro(), 0x50, 1), vec![0x58]);
    }

    #[test]
    fn empty_transaction_is_an_error() {
        assert_eq!(
            spi_transaction(&mut RegisterMap::imu(), &[]),
            Err(BusError::EmptyTransaction)
        );
    }

    #[test]
    fn config_write_round_trips() {
        let mut imu = RegisterMap::imu();
        assert_eq!(spi_transaction(&mut imu, &[0x1B, 0x08, 0x10]).unwrap(), vec![0, 0, 0]);
        assert_eq!(spi_read(&mut imu, 0x1B, 2), vec![0x08, 0x10]);
        assert_eq!(imu.rejected_writes(), 0);
    }

    #[test]
    fn read_only_writes_are_dropped_and_counted() {
        let mut imu = RegisterMap::imu();
        spi_transaction(&mut imu, &[0x75, 0x00]).unwrap();
        spi_transaction(&mut imu, &[0x3B, 0x01, 0x02]).unwrap();
        spi_transaction(&mut imu, &[0x10, 0xFF]).unwrap();
        assert_eq!(imu.rejected_writes(), 4);
        assert_eq!(spi_read(&mut imu, 0x75, 1), vec![0x68]);
        assert_eq!(spi_read(&mut imu, 0x3B, 2), vec![0, 0]);
        assert_eq!(spi_read(&mut imu, 0x10, 1), vec![0]);
    }

    #[test]
    fn address_auto_increment_wraps() {
        let mut baro = RegisterMap::baro();
        encode_baro(101_325.0, 288.15, &mut baro);
        let r = spi_read(&mut baro, 0x7B, 6);
        assert_eq!(r.len(), 6);
        assert_eq!(r[0], baro.data()[4]);
        assert_eq!(&r[1..], &[0, 0, 0, 0, 0]);
    }

    #[test]
    fn one_g_down_encodes_minus_4096() {
        let mut imu = RegisterMap::imu();
        encode_imu(&Vec3::new(0.0, 0.0, -9.81), &Vec3::zeros(), 300.0, &mut imu);
        let z = i16::from_be_bytes([imu.peek(0x3F), imu.peek(0x40)]);
        // 9.81 / 9.80665 * 4096 = 4097.4
        assert!((z as i32 + 4096).abs() <= 2, "{z}");
        assert_eq!(z, -((9.81 / 9.80665 * 4096.0_f64).round() as i16));
        assert!(spi_read(&mut imu, 0x43, 6).iter().all(|b| *b == 0));
    }

    #[test]
    fn full_scale_saturates() {
        let mut imu = RegisterMap::imu();
        let g8 = 8.0 * G0;
        encode_imu(
            &Vec3::new(g8, -g8 * 2.0, 0.0),
            &Vec3::new(20.0, 0.0, 0.0),
            300.0,
            &mut imu,
        );
        let s = decode_imu(&spi_read(&mut imu, 0x3B, 14).try_into().unwrap());
        assert_eq!(i16::from_be_bytes([imu.peek(0x3B), imu.peek(0x3C)]), 32767);
        assert_eq!(i16::from_be_bytes([imu.peek(0x3D), imu.peek(0x3E)]), -32768);
        assert!((s.gyro.x.to_degrees() - 32767.0 / 65.5).abs() < 1e-9);
    }

    #[test]
    fn imu_temperature_round_trip() {
        let block = imu_block(&Vec3::zeros(), &Vec3::zeros(), 298.15);
        let t = decode_imu(&block).temperature;
        assert!((t - 298.15).abs() <= 0.5 / 340.0 + 1e-12);
        // 25 degC -> raw = (25 - 36.53) * 340 = -3920.2
        assert_eq!(get_i16(&block, 6), -3920);
    }

    #[test]
    fn baro_round_trip() {
        let mut baro = RegisterMap::baro();
        encode_baro(95_461.3, 281.65, &mut baro);
        let (p, t) = decode_baro(baro.data().try_into().unwrap());
        assert!((p - 95_461.3).abs() <= BARO_PRESSURE_LSB / 2.0);
        assert!((t - 281.65).abs() <= BARO_TEMP_LSB / 2.0 + 1e-9);
    }

    #[test]
    fn fletcher_reference() {
        // a = 1+2+3 = 6, b = 1+3+6 = 10
        assert_eq!(fletcher8(&[1, 2, 3]), [6, 10]);
    }

    #[test]
    fn gps_frame_layout() {
        let fix = GpsFix {
            position: GeoPosition::new(47.3977419, 8.5455938, 488.123).unwrap(),
            velocity_ned: Vec3::new(1.25, -0.5, 0.01),
        };
        let f = encode_gps(&fix);
        assert_eq!(&f[..6], &[0xB5, 0x62, 0x01, 0x30, 24, 0]);
        assert_eq!(i32::from_le_bytes(f[6..10].try_into().unwrap()), 473_977_419);
        assert_eq!(i32::from_le_bytes(f[14..18].try_into().unwrap()), 488_123);
        assert_eq!(i32::from_le_bytes(f[18..22].try_into().unwrap()), 125);
        let back = decode_gps(&f).unwrap();
        assert!((back.position.latitude - 47.3977419).abs() < 1e-9);
        assert_eq!(back.velocity_ned, Vec3::new(1.25, -0.5, 0.01));
    }

    #[test]
    fn gps_decoder_errors_are_distinct() {
        let fix = GpsFix {
            position: GeoPosition::new(1.0, 2.0, 3.0).unwrap(),
            velocity_ned: Vec3::zeros(),
        };
        let f = encode_gps(&fix);
        assert!(matches!(decode_gps(&[]), Err(GpsDecodeError::Truncated { .. })));
        assert!(matches!(decode_gps(&f[..20]), Err(GpsDecodeError::Truncated { .. })));
        let mut bad = f;
        bad[0] = 0xB6;
        assert_eq!(decode_gps(&bad), Err(GpsDecodeError::BadSync(0xB6, 0x62)));
        let mut bad = f;
        bad[10] ^= 0x01;
        assert_eq!(decode_gps(&bad), Err(GpsDecodeError::BadChecksum));
        let mut long = f.to_vec();
        long.push(0);
        assert!(matches!(decode_gps(&long), Err(GpsDecodeError::LengthMismatch { .. })));
        let mut other = f;
        other[3] = 0x07;
        let ck = fletcher8(&other[2..30]);
        other[30..].copy_from_slice(&ck);
        assert_eq!(
            decode_gps(&other),
            Err(GpsDecodeError::UnknownMessage { class: 1, id: 7 })
        );
        let mut lat = f;
        lat[6..10].copy_from_slice(&1_000_000_000i32.to_le_bytes());
        let ck = fletcher8(&lat[2..30]);
        lat[30..].copy_from_slice(&ck);
        assert_eq!(decode_gps(&lat), Err(GpsDecodeError::InvalidFix));
    }

    #[test]
    fn pwm_mapping() {
        assert_eq!(
            decode_pwm(&[1000.0, 2000.0, 1500.0, 900.0, 2100.0, f64::NAN]),
            vec![0.0, 1.0, 0.5, 0.0, 1.0, 0.0]
        );
        assert_eq!(throttle_to_pwm(0.25), 1250.0);
        assert_eq!(throttle_to_pwm(-1.0), 1000.0);
    }
}
