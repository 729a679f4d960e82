//! `%.17g`-style formatting: 17 significant digits, trailing zeros dropped,
//! fixed notation for decimal exponents in [-4, 17), scientific otherwise.
//! Every finite double survives a format/parse round trip bit for bit.

use std::fmt::Write;

struct StackBuf {
    buf: [u8; 40],
    len: usize,
}

impl Write for StackBuf {
    fn write_str(&mut self, s: &str) -> std::fmt::Result {
        let end = self.len + s.len();
        if end > self.buf.len() {
            return Err(std::fmt::Error);
        }
        self.buf[self.len..end].copy_from_slice(s.as_bytes());
        self.len = end;
        Ok(())
    }
}

/// Appends the formatted value to `out`.
pub fn write_g17(out: &mut String, v: f64) {
    if v == 0.0 {
        out.push_str(if v.is_sign_negative() { "-0" } else { "0" });
        return;
    }
    if v.is_nan() {
        out.push_str("nan");
        return;
    }
    if v.is_infinite() {
        out.push_str(if v > 0.0 { "inf" } else { "-inf" });
        return;
    }
    let mut sb = StackBuf { buf: [0; 40], len: 0 };
    write!(sb, "{:.16e}", v.abs()).expect("17-digit scientific fits the buffer");
    let s = &sb.buf[..sb.len];
    let e_pos = s.iter().position(|&c| c == b'e').expect("scientific output has an exponent");
    let exp: i32 = std::str::from_utf8(&s[e_pos + 1..])
        .ok()
        .and_then(|e| e.parse().ok())
        .expect("exponent is an integer");
    let mut digits = [0u8; 17];
    let mut nd = 0;
    for &c in &s[..e_pos] {
        if c != b'.' {
            digits[nd] = c;
            nd += 1;
        }
    }
    while nd > 1 && digits[nd - 1] == b'0' {
        nd -= 1;
    }
    let digits = std::str::from_utf8(&digits[..nd]).expect("ascii digits");

    if v < 0.0 {
        out.push('-');
    }
    if (-4..17).contains(&exp) {
        if exp >= 0 {
            let int_len = exp as usize + 1;
            if nd <= int_len {
                out.push_str(digits);
                out.extend(std::iter::repeat_n('0', int_len - nd));
            } else {
                out.push_str(&digits[..int_len]);
                out.push('.');
                out.push_str(&digits[int_len..]);
            }
        } else {
            out.push_str("0.");
            out.extend(std::iter::repeat_n('0', (-exp - 1) as usize));
            out.push_str(digits);
        }
    } else {
        out.push_str(&digits[..1]);
        if nd > 1 {
            out.push('.');
            out.push_str(&digits[1..]);
        }
        out.push('e');
        out.push(if exp < 0 { '-' } else { '+' });
        let _ = write!(out, "{:02}", exp.abs());
    }
}

pub fn g17(v: f64) -> String {
    let mut s = String::with_capacity(24);
    write_g17(&mut s, v);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_layout() {
        let cases = [
            (1.0, "1"),
            (-2.5, "-2.5"),
            (0.1, "0.10000000000000001"),
            (100.0, "100"),
            (1e-5, "1.0000000000000001e-05"),
            (1e-4, "0.0001"),
            (123456789.0, "123456789"),
            (1e16, "10000000000000000"),
            (1e17, "1e+17"),
            (1e300, "1.0000000000000001e+300"),
            (6.466, "6.4660000000000002"),
            (0.0, "0"),
            (-0.0, "-0"),
            (5e-324, "4.9406564584124654e-324"),
            (1e6, "1000000"),
        ];
        for (v, want) in cases {
            assert_eq!(g17(v), want, "formatting {v:e}");
        }
    }

    #[test]
    fn round_trips() {
        let mut x = 0.123_456_789_f64;
        for _ in 0..2000 {
            x = (x * 7.31 + 0.17).fract() * 10f64.powi((x * 600.0) as i32 - 300);
            for v in [x, -x, 1.0 / x] {
                let back: f64 = g17(v).parse().unwrap();
                assert_eq!(back.to_bits(), v.to_bits(), "{v:e}");
            }
            x = x.abs().fract() + 0.01;
        }
    }
}
