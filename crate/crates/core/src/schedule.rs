use std::thread;

/// Execution order of local estimators within one phase.
///
/// All variants read the same frozen snapshot, so results never depend on the choice.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Schedule {
    #[default]
    Sequential,
    /// Visit agents in the given permutation.
    Order(Vec<usize>),
    /// One scoped thread per agent.
    Parallel,
}

impl Schedule {
    pub fn run<R: Send>(&self, n: usize, f: impl Fn(usize) -> R + Sync) -> Vec<R> {
        match self {
            Schedule::Sequential => (0..n).map(f).collect(),
            Schedule::Order(order) => {
                assert!(is_permutation(order, n), "schedule order must be a permutation of 0..{n}");
                let mut out: Vec<Option<R>> = (0..n).map(|_| None).collect();
                for &i in order {
                    out[i] = Some(f(i));
                }
                out.into_iter().map(|r| r.expect("every agent visited")).collect()
            }
            Schedule::Parallel => thread::scope(|s| {
                let f = &f;
                let handles: Vec<_> = (0..n).map(|i| s.spawn(move || f(i))).collect();
                handles.into_iter().map(|h| h.join().expect("agent thread panicked")).collect()
            }),
        }
    }
}

fn is_permutation(order: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    order.len() == n && order.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
}
