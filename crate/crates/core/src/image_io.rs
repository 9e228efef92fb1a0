//! Writing rendered FCGR images to disk.

use std::io::Write;
use std::path::Path;

use crate::cgr::GrayImage;
use crate::error::{Error, Result};

/// Binary PGM (`P5`), 8-bit, dark pixels for frequent k-mers.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let side = img.side();
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    out.extend(img.to_gray8());
    out
}

pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let side = img.side() as u32;
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, side, side);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::Data(format!("png header: {e}")))?;
        writer
            .write_image_data(&img.to_gray8())
            .map_err(|e| Error::Data(format!("png data: {e}")))?;
    }
    Ok(out)
}

/// Writes PNG when the extension is `.png`, PGM otherwise.
pub fn write_image(img: &GrayImage, path: &Path) -> Result<()> {
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png {
        encode_png(img)?
    } else {
        encode_pgm(img)
    };
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// `<docid>_<chunkindex>_k<k>.pgm`
pub fn chunk_image_name(doc_id: &str, chunk_index: usize, k: usize) -> String {
    let safe: String = doc_id
        .chars()
        .map(|c| if c == '/' || c == '\\' { '_' } else { c })
        .collect();
    format!("{safe}_{chunk_index}_k{k}.pgm")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_layout() {
        let img = GrayImage::new(2, vec![1.0, 0.5, 0.0, 0.0]).unwrap();
        let bytes = encode_pgm(&img);
        assert_eq!(&bytes[..11], b"P5\n2 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 128, 255, 255]);
    }

    #[test]
    fn png_decodes_back() {
        let img = GrayImage::new(4, (0..16).map(|i| i as f64 / 15.0).collect()).unwrap();
        let bytes = encode_png(&img).unwrap();
        let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (4, 4));
        assert_eq!(&buf[..16], img.to_gray8().as_slice());
    }

    #[test]
    fn names() {
        assert_eq!(chunk_image_name("hamilton/fed01", 3, 7), "hamilton_fed01_3_k7.pgm");
    }
}
