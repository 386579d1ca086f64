use std::fmt;

/// A symbol of the analysis. The derived ordering is the variable order used by the
/// graded-lexicographic monomial order: states first, then input derivatives, then
/// output derivatives, then time. Earlier symbols are more significant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sym {
    /// State coordinate `x_{i+1}` (zero-based index).
    State(u32),
    /// `order`-th time derivative of input channel `channel` (zero-based), i.e. the
    /// `u_order` argument of the output-derivative maps.
    Input { order: u32, channel: u32 },
    /// `order`-th time derivative of output channel `channel` (zero-based).
    Output { order: u32, channel: u32 },
    /// Time.
    Time,
}

impl Sym {
    pub fn state(i: usize) -> Sym {
        Sym::State(i as u32)
    }

    pub fn input(order: usize, channel: usize) -> Sym {
        Sym::Input {
            order: order as u32,
            channel: channel as u32,
        }
    }

    pub fn output(order: usize, channel: usize) -> Sym {
        Sym::Output {
            order: order as u32,
            channel: channel as u32,
        }
    }

    pub fn is_state(&self) -> bool {
        matches!(self, Sym::State(_))
    }

    pub fn is_output(&self) -> bool {
        matches!(self, Sym::Output { .. })
    }

    pub fn is_input(&self) -> bool {
        matches!(self, Sym::Input { .. })
    }
}

fn primes(n: u32) -> String {
    "'".repeat(n as usize)
}

/// Printable names for symbols. States carry user-declared names; the other
/// families use `u<i>`, `y<i>` with one prime per derivative order, and `t`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SymbolNames {
    states: Vec<String>,
}

impl SymbolNames {
    pub fn new(states: Vec<String>) -> Self {
        SymbolNames { states }
    }

    /// Default names `x1..xn`.
    pub fn default_states(n: usize) -> Self {
        SymbolNames {
            states: (1..=n).map(|i| format!("x{i}")).collect(),
        }
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn name(&self, s: Sym) -> String {
        match s {
            Sym::State(i) => self
                .states
                .get(i as usize)
                .cloned()
                .unwrap_or_else(|| format!("x{}", i + 1)),
            Sym::Input { order, channel } => format!("u{}{}", channel + 1, primes(order)),
            Sym::Output { order, channel } => format!("y{}{}", channel + 1, primes(order)),
            Sym::Time => "t".to_string(),
        }
    }

    /// Inverse of [`SymbolNames::name`]. State names take precedence.
    pub fn resolve(&self, name: &str) -> Option<Sym> {
        if let Some(i) = self.states.iter().position(|s| s == name) {
            return Some(Sym::state(i));
        }
        resolve_reserved(name)
    }
}

/// Parses `u<i>'..`, `y<i>'..` and `t`.
pub fn resolve_reserved(name: &str) -> Option<Sym> {
    if name == "t" {
        return Some(Sym::Time);
    }
    let base = name.trim_end_matches('\'');
    let order = (name.len() - base.len()) as u32;
    let (head, digits) = base.split_at(base.len().min(1));
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    let channel: u32 = digits.parse().ok()?;
    match head {
        "u" => Some(Sym::Input {
            order,
            channel: channel - 1,
        }),
        "y" => Some(Sym::Output {
            order,
            channel: channel - 1,
        }),
        _ => None,
    }
}

/// Whether a state name collides with a reserved symbol family.
pub fn is_reserved_name(name: &str) -> bool {
    resolve_reserved(name).is_some() || name == "t"
}

impl fmt::Display for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&SymbolNames::default().name(*self))
    }
}
