//! Reference decision procedure for the communication filter: sort the rules
//! by priority and take the first one that applies.

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ORule {
    pub comm_type: String,
    pub context: String,
    pub block: bool,
    pub priority: i64,
}

/// Index of the deciding rule, if any.
pub fn decide(rules: &[ORule], contexts: &[String], comm_type: &str) -> Option<usize> {
    let mut order: Vec<usize> = (0..rules.len()).collect();
    order.sort_by_key(|&i| rules[i].priority);
    order.into_iter().find(|&i| {
        let r = &rules[i];
        (r.comm_type == comm_type || r.comm_type == "any") && contexts.contains(&r.context)
    })
}
