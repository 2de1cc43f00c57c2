//! Line-oriented checkpoint format. Floats are stored as hexadecimal bit patterns so a
//! save/load round trip is exact.
//!
//! ```text
//! macrohrl-checkpoint 1
//! spec <toml-free key=value list>
//! init <tag>
//! params <n>
//! <hex> <hex> ...            (16 per line)
//! adam <step> <beta1> <beta2> <eps>   (optional, followed by m/v blocks)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{AdamState, ApproxError, Head, NetSpec, Network, Params};

pub const CHECKPOINT_MAGIC: &str = "macrohrl-checkpoint 1";
const PER_LINE: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub adam: Option<AdamState>,
}

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn push_block(out: &mut String, name: &str, values: &[f64]) {
    let _ = writeln!(out, "{name} {}", values.len());
    for chunk in values.chunks(PER_LINE) {
        let line: Vec<String> = chunk.iter().map(|v| hex(*v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

fn spec_line(spec: &NetSpec) -> String {
    let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let (head, factors) = match &spec.head {
        Head::Policy { factors } => ("policy", list(factors)),
        Head::Value => ("value", String::new()),
        Head::PolicyValue { factors } => ("policy-value", list(factors)),
    };
    format!(
        "spec input={} hidden={} head={} factors={} shared={}",
        spec.input_dim,
        list(&spec.hidden),
        head,
        factors,
        spec.shared_trunk as u8
    )
}

pub fn write_checkpoint(net: &Network, adam: Option<&AdamState>) -> String {
    let mut out = String::new();
    out.push_str(CHECKPOINT_MAGIC);
    out.push('\n');
    out.push_str(&spec_line(&net.spec));
    out.push('\n');
    let _ = writeln!(out, "init {}", net.params.init);
    push_block(&mut out, "params", &net.params.values);
    if let Some(a) = adam {
        let _ = writeln!(out, "adam {} {} {} {}", a.step, hex(a.beta1), hex(a.beta2), hex(a.eps));
        push_block(&mut out, "m", &a.m);
        push_block(&mut out, "v", &a.v);
    }
    out
}

pub fn save_checkpoint(path: &Path, net: &Network, adam: Option<&AdamState>) -> Result<(), ApproxError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, write_checkpoint(net, adam))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ApproxError> {
    parse_checkpoint(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ApproxError> {
        Err(ApproxError::Checkpoint {
            line: self.line,
            msg: msg.into(),
        })
    }

    fn next(&mut self) -> Option<&'a str> {
        let (i, l) = self.iter.next()?;
        self.line = i + 1;
        Some(l)
    }

    fn expect(&mut self, what: &str) -> Result<&'a str, ApproxError> {
        match self.next() {
            Some(l) => Ok(l),
            None => self.err(format!("unexpected end of file, expected {what}")),
        }
    }

    fn header(&mut self, name: &str) -> Result<Vec<&'a str>, ApproxError> {
        let l = self.expect(name)?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(name) {
            return self.err(format!("expected `{name}` line"));
        }
        Ok(parts.collect())
    }

    fn block(&mut self, name: &str) -> Result<Vec<f64>, ApproxError> {
        let head = self.header(name)?;
        let n: usize = match head.first().and_then(|s| s.parse().ok()) {
            Some(n) => n,
            None => return self.err(format!("`{name}` needs a count")),
        };
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let l = self.expect("values")?;
            for tok in l.split_whitespace() {
                out.push(self.float(tok)?);
            }
        }
        if out.len() != n {
            return self.err(format!("`{name}` has {} values, expected {n}", out.len()));
        }
        Ok(out)
    }

    fn float(&self, tok: &str) -> Result<f64, ApproxError> {
        match u64::from_str_radix(tok, 16) {
            Ok(bits) if tok.len() == 16 => Ok(f64::from_bits(bits)),
            _ => self.err(format!("bad float `{tok}`")),
        }
    }
}

fn parse_list(s: &str) -> Option<Vec<usize>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(|x| x.parse().ok()).collect()
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint, ApproxError> {
    let mut lines = Lines {
        iter: text.lines().enumerate(),
        line: 0,
    };
    if lines.expect("magic")?.trim() != CHECKPOINT_MAGIC {
        return lines.err(format!("missing `{CHECKPOINT_MAGIC}` header"));
    }
    let fields = lines.header("spec")?;
    let get = |k: &str| fields.iter().find_map(|f| f.strip_prefix(k).and_then(|r| r.strip_prefix('=')));
    let (Some(input), Some(hidden), Some(head), Some(factors), Some(shared)) =
        (get("input"), get("hidden"), get("head"), get("factors"), get("shared"))
    else {
        return lines.err("incomplete spec line");
    };
    let (Ok(input_dim), Some(hidden), Some(factors)) = (input.parse(), parse_list(hidden), parse_list(factors)) else {
        return lines.err("malformed spec values");
    };
    let head = match head {
        "policy" => Head::Policy { factors },
        "value" => Head::Value,
        "policy-value" => Head::PolicyValue { factors },
        other => return lines.err(format!("unknown head `{other}`")),
    };
    let spec = NetSpec {
        input_dim,
        hidden,
        head,
        shared_trunk: shared == "1",
    };
    let init = lines.header("init")?.join(" ");
    let values = lines.block("params")?;
    let params = Params { values, init };
    let line = lines.line;
    let network = Network::from_params(spec, params).map_err(|e| ApproxError::Checkpoint {
        line,
        msg: e.to_string(),
    })?;
    let adam = match lines.next() {
        None => None,
        Some(l) if l.trim().is_empty() => None,
        Some(l) => {
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() != 5 || parts[0] != "adam" {
                return lines.err("expected `adam step beta1 beta2 eps`");
            }
            let Ok(step) = parts[1].parse() else {
                return lines.err("bad adam step");
            };
            let (beta1, beta2, eps) = (lines.float(parts[2])?, lines.float(parts[3])?, lines.float(parts[4])?);
            let m = lines.block("m")?;
            let v = lines.block("v")?;
            let n = network.param_count();
            if m.len() != n || v.len() != n {
                return lines.err("adam moments do not match parameter count");
            }
            Some(AdamState {
                m,
                v,
                step,
                beta1,
                beta2,
                eps,
            })
        }
    };
    Ok(Checkpoint { network, adam })
}
