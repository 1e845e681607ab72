use sha2::{Digest, Sha256};

use crate::raster::{GrayMap, Image};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn image_digest(image: &Image) -> String {
    let mut h = Sha256::new();
    h.update((image.width() as u64).to_le_bytes());
    h.update((image.height() as u64).to_le_bytes());
    h.update(image.as_bytes());
    hex::encode(h.finalize())
}

pub fn gray_map_digest(map: &GrayMap) -> String {
    let mut h = Sha256::new();
    h.update((map.width() as u64).to_le_bytes());
    h.update((map.height() as u64).to_le_bytes());
    for v in map.values() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}
