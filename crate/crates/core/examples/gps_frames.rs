//! Encodes a GPS fix into a binary frame, decodes it and shows the error cases.

use uavsim::buscodec::{decode_gps, encode_gps};
use uavsim::frames::{GeoPosition, Vec3};
use uavsim::sensors::GpsFix;

fn main() {
    let fix = GpsFix {
        position: GeoPosition::new(40.000_123_4, 116.300_987_6, 61.234).expect("valid position"),
        velocity_ned: Vec3::new(1.23, -0.45, 0.06),
    };
    let frame = encode_gps(&fix);
    println!("frame {:02X?}", frame);
    let back = decode_gps(&frame).expect("valid frame");
    println!(
        "decoded lat {:.7} lon {:.7} alt {:.3} v {:.2} {:.2} {:.2}",
        back.position.latitude,
        back.position.longitude,
        back.position.altitude,
        back.velocity_ned.x,
        back.velocity_ned.y,
        back.velocity_ned.z
    );

    let mut corrupted = frame;
    corrupted[10] ^= 0x04;
    println!("bit flip in payload -> {:?}", decode_gps(&corrupted));
    println!("truncated -> {:?}", decode_gps(&frame[..20]));
    let mut resync = frame;
    resync[0] = 0x00;
    println!("bad sync -> {:?}", decode_gps(&resync));
}
