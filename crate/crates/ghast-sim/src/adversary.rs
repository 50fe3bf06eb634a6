//! Shipped adversaries: null, withholding, balance attack and a scripted
//! one. All of them respect the delivery deadline; the world rejects any
//! delivery scheduled past it.

use std::collections::BTreeMap;
use std::path::Path;

use ghast_core::{Creator, Ix, View};

use crate::config::{AdversaryKind, ConfigError};
use crate::world::{Adversary, Delivery, MinePlan, PastSpec, Target, World};
use crate::SimError;

pub fn build(kind: &AdversaryKind) -> Result<Box<dyn Adversary>, SimError> {
    Ok(match kind {
        AdversaryKind::Null => Box::new(NullAdversary),
        AdversaryKind::Withhold { release_lead } => Box::new(WithholdAdversary::new(*release_lead)),
        AdversaryKind::Balance => Box::new(BalanceAdversary::default()),
        AdversaryKind::Script(path) => Box::new(ScriptAdversary::load(path)?),
    })
}

/// Blocks exposed in the previous round (honest blocks mined then, and
/// malicious blocks released then).
fn exposed_last_round(w: &World) -> Vec<Ix> {
    let Some(prev) = w.round().checked_sub(1) else { return Vec::new() };
    let arrival = prev + w.cfg().arrival_delay();
    w.pending_arrivals().get(&arrival).cloned().unwrap_or_default()
}

/// Delivers every block to everyone one round after exposure, releases its
/// own blocks immediately and mines on the pivot tip of the full graph.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullAdversary;

impl Adversary for NullAdversary {
    fn name(&self) -> &'static str {
        "null"
    }

    fn deliver(&mut self, w: &World) -> Result<Vec<Delivery>, SimError> {
        let r = w.round();
        let mut out: Vec<Delivery> =
            exposed_last_round(w).into_iter().map(|block| Delivery { block, to: Target::All, round: r }).collect();
        out.extend(w.withheld().iter().map(|&block| Delivery { block, to: Target::All, round: r }));
        Ok(out)
    }

    fn mine(&mut self, w: &World) -> MinePlan {
        MinePlan { parent: w.all().pivot_tip().expect("genesis"), past: PastSpec::All }
    }
}

/// Mines a private branch and keeps it hidden. With `release_lead > 0`
/// the branch is published once it outweighs the honest branch at the
/// fork point by that much.
#[derive(Clone, Debug)]
pub struct WithholdAdversary {
    release_lead: u64,
    fork: Option<(Ix, Ix)>,
    tip: Option<Ix>,
}

impl WithholdAdversary {
    pub fn new(release_lead: u64) -> WithholdAdversary {
        WithholdAdversary { release_lead, fork: None, tip: None }
    }
}

impl Adversary for WithholdAdversary {
    fn name(&self) -> &'static str {
        "withhold"
    }

    fn deliver(&mut self, w: &World) -> Result<Vec<Delivery>, SimError> {
        let Some((base, root)) = self.fork else { return Ok(Vec::new()) };
        if self.release_lead == 0 {
            return Ok(Vec::new());
        }
        let all = w.all();
        let honest = all
            .chldn(w.store(), base)
            .filter(|&c| c != root && w.store().creator(c) == Creator::Honest)
            .map(|c| all.subtree_weight(c))
            .max()
            .unwrap_or(0);
        if all.subtree_weight(root) < honest + self.release_lead {
            return Ok(Vec::new());
        }
        self.fork = None;
        self.tip = None;
        let r = w.round();
        Ok(w.withheld().iter().map(|&block| Delivery { block, to: Target::All, round: r }).collect())
    }

    fn mine(&mut self, w: &World) -> MinePlan {
        let parent = match self.tip {
            Some(t) => t,
            None => w.nodes()[0].pivot_tip().expect("genesis"),
        };
        MinePlan { parent, past: PastSpec::All }
    }

    fn on_mined(&mut self, w: &World, ix: Ix) {
        if self.fork.is_none() {
            self.fork = Some((w.store().parent(ix), ix));
        }
        self.tip = Some(ix);
    }
}

/// Balance attack on two honest groups. Honest blocks reach the miner's
/// own group one round after exposure and the other group only at the
/// deadline. While the groups disagree, their top-level choices become
/// the targets. The adversary keeps group `g` on `targets[g]` by
/// releasing withheld blocks of that subtree to `g` whenever `g` would
/// switch, and mines on whichever target is lighter in the full graph.
#[derive(Clone, Debug, Default)]
pub struct BalanceAdversary {
    targets: Option<[Ix; 2]>,
}

impl BalanceAdversary {
    pub fn targets(&self) -> Option<[Ix; 2]> {
        self.targets
    }

    fn rep(w: &World, g: usize) -> usize {
        w.groups().iter().position(|&x| x == g).expect("both groups are non-empty")
    }

    fn top(w: &World, ix: Ix) -> Ix {
        w.store().ancestor_at(ix, 1)
    }

    fn pick_targets(w: &World) -> Option<[Ix; 2]> {
        let store = w.store();
        let pref = |g: usize| w.nodes()[Self::rep(w, g)].pivot().get(1).copied();
        let mut tops: Vec<Ix> = w.all().chldn(store, 0).collect();
        if tops.len() < 2 {
            return None;
        }
        tops.sort_by_key(|&c| (std::cmp::Reverse(w.all().subtree_weight(c)), store.id(c)));
        let a = pref(0).unwrap_or(tops[0]);
        let b = match pref(1) {
            Some(b) if b != a => b,
            _ => *tops.iter().find(|&&c| c != a).expect("two top-level blocks"),
        };
        Some([a, b])
    }

    /// Tip of the heaviest chain below `root` inside `view`.
    fn chain_tip(w: &World, view: &View, root: Ix) -> Ix {
        let mut cur = root;
        while let Some(n) = view.best_child(w.store(), cur) {
            cur = n;
        }
        cur
    }
}

impl Adversary for BalanceAdversary {
    fn name(&self) -> &'static str {
        "balance"
    }

    fn deliver(&mut self, w: &World) -> Result<Vec<Delivery>, SimError> {
        let r = w.round();
        let store = w.store();
        let mut out = Vec::new();
        let mut incoming: [Vec<Ix>; 2] = [Vec::new(), Vec::new()];
        for x in exposed_last_round(w) {
            if let Some(n) = w.miner(x) {
                let g = w.groups()[n];
                out.push(Delivery { block: x, to: Target::Group(g), round: r });
                incoming[g].push(x);
            }
        }
        if let Some(due) = w.pending_arrivals().get(&r) {
            for g in 0..2 {
                incoming[g].extend(due.iter().copied());
            }
        }
        let pref = |g: usize| w.nodes()[Self::rep(w, g)].pivot().get(1).copied();
        match (pref(0), pref(1)) {
            (Some(a), Some(b)) if a != b => self.targets = Some([a, b]),
            _ if self.targets.is_none() => self.targets = Self::pick_targets(w),
            _ => {}
        }
        let Some(targets) = self.targets else { return Ok(out) };
        for g in 0..2 {
            let view = &w.nodes()[Self::rep(w, g)];
            let mut weights: BTreeMap<Ix, u64> = view.chldn(store, 0).map(|c| (c, view.subtree_weight(c))).collect();
            let mut seen: Vec<Ix> = Vec::new();
            for &x in &incoming[g] {
                if !view.contains(x) && !seen.contains(&x) {
                    seen.push(x);
                    *weights.entry(Self::top(w, x)).or_default() += store.weight(x);
                }
            }
            let t = targets[g];
            let prefers = |weights: &BTreeMap<Ix, u64>| {
                let wt = weights.get(&t).copied().unwrap_or(0);
                weights.iter().all(|(&c, &wc)| c == t || wt > wc || (wt == wc && store.id(t) < store.id(c)))
            };
            if prefers(&weights) {
                continue;
            }
            for &x in w.withheld() {
                if store.weight(x) == 0 || Self::top(w, x) != t || !store.deps(x).all(|d| view.contains(d)) {
                    continue;
                }
                out.push(Delivery { block: x, to: Target::Group(g), round: r });
                *weights.entry(t).or_default() += store.weight(x);
                if prefers(&weights) {
                    break;
                }
            }
        }
        Ok(out)
    }

    fn mine(&mut self, w: &World) -> MinePlan {
        match self.targets {
            None => {
                let n = Self::rep(w, 1);
                MinePlan { parent: 0, past: PastSpec::NodeView(n) }
            }
            Some(t) => {
                let all = w.all();
                let g = usize::from(all.subtree_weight(t[1]) < all.subtree_weight(t[0]));
                let n = Self::rep(w, g);
                let view = &w.nodes()[n];
                let parent = if view.contains(t[g]) { Self::chain_tip(w, view, t[g]) } else { 0 };
                MinePlan { parent, past: PastSpec::NodeView(n) }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScriptCommand {
    /// Honest blocks reach everyone `k` rounds after exposure.
    Delay(u64),
    /// Keep own blocks private.
    Withhold,
    /// Release own blocks one round after mining.
    Publish,
    /// Release every withheld block now.
    Release,
    /// Mine on the pivot tip of the full graph.
    MineTip,
    /// Start a private chain `k` blocks below the observer's pivot tip.
    MineFork(u64),
}

/// Adversary driven by a text script, one `round command [arg]` per line:
///
/// ```text
/// 0 delay 2
/// 0 withhold
/// 10 mine fork 3
/// 40 release
/// 41 publish
/// 41 mine tip
/// ```
#[derive(Clone, Debug)]
pub struct ScriptAdversary {
    commands: BTreeMap<u64, Vec<ScriptCommand>>,
    delay: u64,
    publish: bool,
    fork: Option<u64>,
    own_tip: Option<Ix>,
    release_now: bool,
}

impl ScriptAdversary {
    pub fn load(path: &Path) -> Result<ScriptAdversary, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Ok(ScriptAdversary::parse(&text)?)
    }

    pub fn parse(text: &str) -> Result<ScriptAdversary, ConfigError> {
        let mut commands: BTreeMap<u64, Vec<ScriptCommand>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| ConfigError { line: i + 1, msg: format!("script: {msg}") };
            let f: Vec<&str> = line.split_whitespace().collect();
            let round: u64 = f[0].parse().map_err(|_| bad("expected a round number"))?;
            let num = |s: Option<&&str>| s.and_then(|v| v.parse::<u64>().ok()).ok_or_else(|| bad("expected a number"));
            let (cmd, arity) = match f.get(1).copied() {
                Some("delay") => (ScriptCommand::Delay(num(f.get(2))?), 3),
                Some("withhold") => (ScriptCommand::Withhold, 2),
                Some("publish") => (ScriptCommand::Publish, 2),
                Some("release") => (ScriptCommand::Release, 2),
                Some("mine") => match f.get(2).copied() {
                    Some("tip") => (ScriptCommand::MineTip, 3),
                    Some("fork") => (ScriptCommand::MineFork(num(f.get(3))?), 4),
                    _ => return Err(bad("expected `mine tip` or `mine fork <k>`")),
                },
                _ => return Err(bad("unknown command")),
            };
            if f.len() != arity {
                return Err(bad("wrong number of fields"));
            }
            commands.entry(round).or_default().push(cmd);
        }
        Ok(ScriptAdversary { commands, delay: 1, publish: true, fork: None, own_tip: None, release_now: false })
    }
}

impl Adversary for ScriptAdversary {
    fn name(&self) -> &'static str {
        "script"
    }

    fn deliver(&mut self, w: &World) -> Result<Vec<Delivery>, SimError> {
        let r = w.round();
        for c in self.commands.get(&r).cloned().unwrap_or_default() {
            match c {
                ScriptCommand::Delay(k) => self.delay = k,
                ScriptCommand::Withhold => self.publish = false,
                ScriptCommand::Publish => self.publish = true,
                ScriptCommand::Release => self.release_now = true,
                ScriptCommand::MineTip => {
                    self.fork = None;
                    self.own_tip = None;
                }
                ScriptCommand::MineFork(k) => {
                    self.fork = Some(k);
                    self.own_tip = None;
                }
            }
        }
        let mut out = Vec::new();
        if let Some(prev) = r.checked_sub(1) {
            for x in exposed_last_round(w) {
                out.push(Delivery { block: x, to: Target::All, round: r.max(prev + self.delay) });
            }
        }
        if self.publish || std::mem::take(&mut self.release_now) {
            out.extend(w.withheld().iter().map(|&block| Delivery { block, to: Target::All, round: r }));
        }
        Ok(out)
    }

    fn mine(&mut self, w: &World) -> MinePlan {
        match (self.fork, self.own_tip) {
            (None, _) => MinePlan { parent: w.all().pivot_tip().expect("genesis"), past: PastSpec::All },
            (Some(_), Some(t)) => MinePlan { parent: t, past: PastSpec::ParentOnly },
            (Some(k), None) => {
                let tip = w.nodes()[0].pivot_tip().expect("genesis");
                let h = w.store().height(tip).saturating_sub(k.min(u32::MAX as u64) as u32);
                MinePlan { parent: w.store().ancestor_at(tip, h), past: PastSpec::ParentOnly }
            }
        }
    }

    fn on_mined(&mut self, _w: &World, ix: Ix) {
        if self.fork.is_some() {
            self.own_tip = Some(ix);
        }
    }
}
