//! Tabular dump of the adaptation a layer applies to each input.

use std::fmt::Write as _;

use crate::autodiff::{Graph, ParamStore};
use crate::error::{Error, Result};
use crate::layers::adaptive::{AdaptiveKind, AdaptiveLinear};
use crate::tensor::Tensor;

/// Formats a real with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// One CSV row per input row of `inputs`.
///
/// - input/output: the diagonals `d0_*`, `d1_*`
/// - io: `d0_*`, `d1_*`, `d2_*` and the effective matrix `eff_i_j` of
///   `D² W D¹`
/// - sva: the adapted singular values `sv_*`
pub fn emit_adaptation_heatmap(layer: &AdaptiveLinear, store: &ParamStore, inputs: &Tensor) -> Result<String> {
    if matches!(layer.kind, AdaptiveKind::General { .. }) {
        return Err(Error::UnsupportedKind {
            op: "emit_adaptation_heatmap",
            kind: layer.kind.name().into(),
        });
    }
    let batch = inputs.rows();
    let inputs = inputs.clone().reshape(&[batch, inputs.cols()])?;
    let mut g = Graph::new(store);
    let x = g.input(inputs);
    let (_, diags) = layer.forward_traced(&mut g, x)?;
    // Fixed diagonals are vectors shared by all rows.
    let diag_row = |j: usize, r: usize| -> Vec<f64> {
        let v = g.value(diags[j]);
        if v.shape().len() == 1 {
            v.data().to_vec()
        } else {
            v.row(r).to_vec()
        }
    };

    let mut header = vec!["sample".to_string()];
    let sva = matches!(layer.kind, AdaptiveKind::Sva { .. });
    if sva {
        header.extend((0..layer.block_extents()[1]).map(|i| format!("sv_{i}")));
    } else {
        for (j, &ext) in layer.block_extents().iter().enumerate() {
            header.extend((0..ext).map(|i| format!("d{j}_{i}")));
        }
        if layer.kind == AdaptiveKind::Io {
            for i in 0..layer.output {
                header.extend((0..layer.input).map(|k| format!("eff_{i}_{k}")));
            }
        }
    }
    let mut out = header.join(",");
    out.push('\n');

    let w = store.value(layer.weights[0]);
    for r in 0..batch {
        let mut cells = vec![r.to_string()];
        if sva {
            cells.extend(diag_row(1, r).into_iter().map(fmt_real));
        } else {
            for j in 0..layer.block_extents().len() {
                cells.extend(diag_row(j, r).into_iter().map(fmt_real));
            }
            if layer.kind == AdaptiveKind::Io {
                let (d1, d2) = (diag_row(1, r), diag_row(2, r));
                for (i, &a) in d2.iter().enumerate().take(layer.output) {
                    for (k, &b) in d1.iter().enumerate().take(layer.input) {
                        cells.push(fmt_real(a * w.get(i, k) * b));
                    }
                }
            }
        }
        writeln!(out, "{}", cells.join(",")).expect("writing to a String");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::adaptive::AdaptiveConfig;
    use crate::rng;

    #[test]
    fn identity_policy_effective_matrix_is_w() {
        let mut rng = rng::seeded(4);
        let mut store = ParamStore::new();
        let mut layer =
            AdaptiveLinear::new(&mut store, "io", &AdaptiveConfig::new(AdaptiveKind::Io, 3, 2), &mut rng).unwrap();
        layer.set_identity_policy();
        let inputs = Tensor::randn(&[5, 3], &mut rng);
        let csv = emit_adaptation_heatmap(&layer, &store, &inputs).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 5);
        let header: Vec<&str> = lines[0].split(',').collect();
        let w = store.value(layer.weights[0]);
        for line in &lines[1..] {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells.len(), header.len());
            for i in 0..2 {
                for k in 0..3 {
                    let col = header.iter().position(|h| *h == format!("eff_{i}_{k}")).unwrap();
                    let v: f64 = cells[col].parse().unwrap();
                    assert_eq!(v, w.get(i, k));
                }
            }
        }
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_real(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_real(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
