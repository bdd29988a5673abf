/// Index of the largest element; ties go to the lowest index. `None` for an
/// empty slice. NaN entries never win.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in values.iter().enumerate() {
        match best {
            Some((_, b)) if !(x > b) => {}
            _ if x.is_nan() => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}

/// Float formatted with 17 significant digits, which round-trips every f64.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "null".to_string()
    } else if x > 0.0 {
        "1e999".to_string()
    } else {
        "-1e999".to_string()
    }
}

pub(crate) fn fmt17_array(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|&x| fmt17(x)).collect();
    format!("[{}]", parts.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[]), None);
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), Some(0));
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[f64::NAN, -1.0]), Some(1));
    }

    #[test]
    fn fmt17_round_trips() {
        for &x in &[0.1, -2.0 / 3.0, 1e-300, 123456.789, f64::MIN_POSITIVE] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            assert_eq!(serde_json::from_str::<f64>(&s).unwrap(), x);
        }
    }
}
