//! Talks to the emulated IMU over raw SPI transactions, like a flight-stack driver.

use uavsim::buscodec::{decode_imu, encode_imu, spi_transaction, RegisterMap};
use uavsim::frames::Vec3;

fn main() {
    let mut imu = RegisterMap::imu();
    let layout = *imu.layout();

    // WHO_AM_I: address byte with the read bit, one dummy byte clocked out
    let miso = spi_transaction(&mut imu, &[layout.who_am_i_addr | 0x80, 0x00]).expect("non-empty");
    println!("WHO_AM_I -> 0x{:02X}", miso[1]);

    // configure: writes to config registers stick, writes to data registers are dropped
    spi_transaction(&mut imu, &[0x1B, 0x08]).expect("non-empty");
    spi_transaction(&mut imu, &[layout.data_start, 0xFF]).expect("non-empty");
    println!(
        "GYRO_CONFIG = 0x{:02X}, rejected writes = {}",
        imu.peek(0x1B),
        imu.rejected_writes()
    );

    // burst read of accel, temperature and gyro
    encode_imu(
        &Vec3::new(0.3, -0.1, -9.81),
        &Vec3::new(0.01, 0.02, -0.5),
        298.15,
        &mut imu,
    );
    let mut mosi = vec![0u8; 1 + layout.data_len as usize];
    mosi[0] = layout.data_start | 0x80;
    let miso = spi_transaction(&mut imu, &mosi).expect("non-empty");
    let block: [u8; 14] = miso[1..].try_into().expect("14-byte block");
    println!("raw {:02X?}", block);
    let s = decode_imu(&block);
    println!(
        "accel {:.4} {:.4} {:.4} m/s^2, gyro {:.4} {:.4} {:.4} rad/s, temperature {:.2} K",
        s.accel.x, s.accel.y, s.accel.z, s.gyro.x, s.gyro.y, s.gyro.z, s.temperature
    );
}
