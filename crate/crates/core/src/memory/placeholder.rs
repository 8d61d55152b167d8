use super::{image_file_name, ActionKind, Emotion};
use crate::text::fnv1a;

const WIDTH: u32 = 64;
const HEIGHT: u32 = 48;

/// Generates a stand-in camera frame for events recorded without a camera.
///
/// The bitmap is a flat color derived from the action and emotion with the
/// event number drawn as a row of bars; the same metadata is stamped into
/// PNG text chunks. Output depends only on the arguments.
pub fn placeholder_image(
    event_number: u32,
    action: ActionKind,
    emotion: &Emotion,
    note: &str,
) -> Vec<u8> {
    let seed = fnv1a(format!("{}:{}", action.code(), emotion).as_bytes());
    let base = [
        96 + (seed & 0x7f) as u8,
        96 + ((seed >> 8) & 0x7f) as u8,
        96 + ((seed >> 16) & 0x7f) as u8,
    ];
    let mut pixels = Vec::with_capacity((WIDTH * HEIGHT * 3) as usize);
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            // 16 bars of 4px, one per bit of the event number
            let bit = 15 - (x / 4);
            let lit = y >= HEIGHT - 8 && (event_number >> bit) & 1 == 1;
            if lit {
                pixels.extend_from_slice(&[16, 16, 16]);
            } else {
                pixels.extend_from_slice(&base);
            }
        }
    }

    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, WIDTH, HEIGHT);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let stamp = [
            ("event_number", event_number.to_string()),
            ("action_number", action.code().to_string()),
            ("emotion", emotion.to_string()),
            ("image_file", image_file_name(event_number, action, emotion)),
        ];
        for (key, value) in stamp {
            encoder
                .add_text_chunk(key.to_string(), value)
                .expect("latin-1 keyword");
        }
        if !note.is_empty() {
            encoder
                .add_itxt_chunk("note".to_string(), note.to_string())
                .expect("utf-8 text chunk");
        }
        let mut writer = encoder.write_header().expect("in-memory PNG header");
        writer
            .write_image_data(&pixels)
            .expect("pixel buffer matches dimensions");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholder_is_deterministic_png() {
        let happy = Emotion::new("happy");
        let a = placeholder_image(3, ActionKind::Chat, &happy, "Hello!");
        let b = placeholder_image(3, ActionKind::Chat, &happy, "Hello!");
        assert_eq!(a, b);
        assert_eq!(&a[..8], b"\x89PNG\r\n\x1a\n");
        assert_ne!(a, placeholder_image(4, ActionKind::Chat, &happy, "Hello!"));
    }

    #[test]
    fn placeholder_decodes_with_stamp() {
        let bytes = placeholder_image(12, ActionKind::Feed, &Emotion::new("curious"), "");
        let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        let reader = decoder.read_info().unwrap();
        let info = reader.info();
        assert_eq!((info.width, info.height), (WIDTH, HEIGHT));
        let stamped: Vec<(&str, &str)> = info
            .uncompressed_latin1_text
            .iter()
            .map(|t| (t.keyword.as_str(), t.text.as_str()))
            .collect();
        assert!(stamped.contains(&("image_file", "012_2_curious_feed.png")));
    }
}
