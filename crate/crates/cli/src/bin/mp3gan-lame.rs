//! A small subset of the `lame` command line, linked against libmp3lame 3.100.
//!
//! ```text
//! mp3gan-lame [-b <kbps>] [-m m] <in.wav> <out.mp3>
//! mp3gan-lame --decode <in.mp3> <out.wav>
//! ```

use std::path::Path;
use std::ptr;

use anyhow::{bail, Context, Result};
use mp3lame_sys as lame;

/// Samples of delay added by the mpglib decoder, removed along with the
/// encoder delay and padding recorded in the LAME tag.
const DECODER_DELAY: usize = 529;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let Err(e) = run(&args) {
        eprintln!("mp3gan-lame: {e:#}");
        std::process::exit(1);
    }
}

fn run(args: &[String]) -> Result<()> {
    let mut kbps = 128;
    let mut decode = false;
    let mut files = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        match a.as_str() {
            "--decode" => decode = true,
            "-b" => {
                kbps = it
                    .next()
                    .context("-b needs a value")?
                    .parse()
                    .context("bad bitrate")?
            }
            "-m" => {
                let mode = it.next().context("-m needs a value")?;
                if mode != "m" {
                    bail!("only mono mode (-m m) is supported");
                }
            }
            "--quiet" | "--silent" | "-S" => {}
            s if s.starts_with('-') && s.len() > 1 => bail!("unsupported option {s}"),
            _ => files.push(a.clone()),
        }
    }
    let [input, output] = files.as_slice() else {
        bail!("usage: mp3gan-lame [-b kbps] [-m m] in.wav out.mp3 | --decode in.mp3 out.wav");
    };
    if decode {
        decode_file(Path::new(input), Path::new(output))
    } else {
        encode_file(Path::new(input), Path::new(output), kbps)
    }
}

fn read_mono(path: &Path) -> Result<(Vec<f64>, u32)> {
    let mut reader = hound::WavReader::open(path).with_context(|| path.display().to_string())?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()?
        }
    };
    let mono = interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok((mono, spec.sample_rate))
}

fn encode_file(input: &Path, output: &Path, kbps: i32) -> Result<()> {
    let (samples, rate) = read_mono(input)?;
    let mut mp3 = Vec::new();
    // SAFETY: the encoder handle is created, used and closed in this block;
    // every buffer passed to libmp3lame outlives the call it is passed to and
    // its length is passed alongside.
    unsafe {
        let gf = lame::lame_init();
        if gf.is_null() {
            bail!("lame_init failed");
        }
        lame::lame_set_in_samplerate(gf, rate as i32);
        lame::lame_set_num_channels(gf, 1);
        lame::lame_set_mode(gf, lame::MPEG_mode::MONO);
        lame::lame_set_brate(gf, kbps);
        lame::lame_set_VBR(gf, lame::vbr_mode::vbr_off);
        lame::lame_set_bWriteVbrTag(gf, 1);
        if lame::lame_init_params(gf) < 0 {
            lame::lame_close(gf);
            bail!("libmp3lame rejected {kbps} kbit/s at {rate} Hz");
        }
        let mut buf = vec![0u8; 8192 + 2 * 4096];
        for chunk in samples.chunks(4096) {
            let n = lame::lame_encode_buffer_ieee_double(
                gf,
                chunk.as_ptr(),
                chunk.as_ptr(),
                chunk.len() as i32,
                buf.as_mut_ptr(),
                buf.len() as i32,
            );
            if n < 0 {
                lame::lame_close(gf);
                bail!("encoding failed with code {n}");
            }
            mp3.extend_from_slice(&buf[..n as usize]);
        }
        let n = lame::lame_encode_flush(gf, buf.as_mut_ptr(), buf.len() as i32);
        if n < 0 {
            lame::lame_close(gf);
            bail!("flush failed with code {n}");
        }
        mp3.extend_from_slice(&buf[..n as usize]);
        let tag = lame::lame_get_lametag_frame(gf, buf.as_mut_ptr(), buf.len());
        if tag > 0 && tag <= mp3.len() {
            mp3[..tag].copy_from_slice(&buf[..tag]);
        }
        let gapless = (lame::lame_get_encoder_delay(gf), lame::lame_get_encoder_padding(gf));
        lame::lame_close(gf);
        mp3.splice(0..0, gapless_tag(gapless.0, gapless.1));
    }
    std::fs::write(output, mp3).with_context(|| output.display().to_string())
}

const GAPLESS_DESC: &[u8] = b"mp3gan gapless";

/// ID3v2.3 tag with one TXXX frame holding "<delay> <padding>". Low bitrates
/// leave no room for the LAME tag, so the values travel here instead.
fn gapless_tag(delay: i32, padding: i32) -> Vec<u8> {
    let mut body = vec![0u8];
    body.extend_from_slice(GAPLESS_DESC);
    body.push(0);
    body.extend_from_slice(format!("{delay} {padding}").as_bytes());
    let mut frame = b"TXXX".to_vec();
    frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
    frame.extend_from_slice(&[0, 0]);
    frame.extend_from_slice(&body);
    let n = frame.len();
    let mut tag = b"ID3\x03\x00\x00".to_vec();
    tag.extend((0..4).rev().map(|k| ((n >> (7 * k)) & 0x7f) as u8));
    tag.extend_from_slice(&frame);
    tag
}

/// Split off a leading ID3v2 tag, returning the gapless values if present.
fn strip_id3(data: &[u8]) -> (Option<(i32, i32)>, &[u8]) {
    if data.len() < 10 || &data[..3] != b"ID3" {
        return (None, data);
    }
    let size = data[6..10].iter().fold(0usize, |a, &b| (a << 7) | (b & 0x7f) as usize);
    let end = (10 + size).min(data.len());
    let mut gapless = None;
    let mut pos = 10;
    while pos + 10 <= end {
        let len = u32::from_be_bytes(data[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = &data[(pos + 10).min(end)..(pos + 10 + len).min(end)];
        if &data[pos..pos + 4] == b"TXXX" && body.len() > 1 {
            let mut parts = body[1..].splitn(2, |&b| b == 0);
            if parts.next() == Some(GAPLESS_DESC) {
                let text = String::from_utf8_lossy(parts.next().unwrap_or_default());
                let v: Vec<i32> = text.split_whitespace().filter_map(|t| t.parse().ok()).collect();
                if let [d, p] = v[..] {
                    gapless = Some((d, p));
                }
            }
        }
        if len == 0 {
            break;
        }
        pos += 10 + len;
    }
    (gapless, &data[end..])
}

fn decode_file(input: &Path, output: &Path) -> Result<()> {
    let file = std::fs::read(input).with_context(|| input.display().to_string())?;
    let (gapless, stream) = strip_id3(&file);
    let mut mp3 = stream.to_vec();
    let mut pcm = Vec::new();
    let mut rate = 0;
    let mut left = vec![0i16; 8192];
    let mut right = vec![0i16; 8192];
    // SAFETY: the decoder handle is created, used and closed in this block;
    // the PCM buffers exceed the 1152 samples one frame can produce, and the
    // input slice pointer and length come from the same live vector.
    unsafe {
        let hip = lame::hip_decode_init();
        if hip.is_null() {
            bail!("hip_decode_init failed");
        }
        let mut info: lame::mp3data_struct = std::mem::zeroed();
        let (mut enc_delay, mut enc_padding) = (-1, -1);
        // A zero return means either "need more input" or a frame that
        // yielded no samples, so keep asking until several calls in a row
        // come back empty.
        for chunk in mp3.chunks_mut(1024) {
            let mut ptr = chunk.as_mut_ptr();
            let mut len = chunk.len();
            let mut empty = 0;
            while empty < 4 {
                let n = lame::hip_decode1_headersB(
                    hip,
                    ptr,
                    len,
                    left.as_mut_ptr(),
                    right.as_mut_ptr(),
                    &mut info,
                    &mut enc_delay,
                    &mut enc_padding,
                );
                if n < 0 {
                    lame::hip_decode_exit(hip);
                    bail!("{}: corrupt MP3 stream", input.display());
                }
                if info.header_parsed == 1 {
                    rate = info.samplerate as u32;
                }
                pcm.extend_from_slice(&left[..n as usize]);
                ptr = ptr::null_mut();
                len = 0;
                empty = if n == 0 { empty + 1 } else { 0 };
            }
        }
        lame::hip_decode_exit(hip);
        if let Some((d, p)) = gapless {
            (enc_delay, enc_padding) = (d, p);
        }
        if enc_delay >= 0 {
            let start = (enc_delay as usize + DECODER_DELAY).min(pcm.len());
            let end = pcm.len().saturating_sub((enc_padding as usize).saturating_sub(DECODER_DELAY));
            pcm = pcm[start..end.max(start)].to_vec();
        }
    }
    if rate == 0 {
        bail!("{}: no MP3 frames found", input.display());
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(output, spec)?;
    for s in pcm {
        writer.write_sample(s)?;
    }
    writer.finalize()?;
    Ok(())
}
