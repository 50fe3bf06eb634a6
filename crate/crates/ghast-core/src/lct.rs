//! Link-cut forest specialised to the two operations subtree weights need:
//! add a constant on a root path and read a single node. Nodes are only
//! ever linked as new leaves, so there is no cut or re-rooting.

use alloc::vec::Vec;

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug, Default)]
pub struct LinkCut {
    ch: Vec<[u32; 2]>,
    fa: Vec<u32>,
    val: Vec<i64>,
    lazy: Vec<i64>,
    stack: Vec<u32>,
}

impl LinkCut {
    pub fn new() -> LinkCut {
        LinkCut::default()
    }

    pub fn len(&self) -> usize {
        self.fa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fa.is_empty()
    }

    /// Makes sure node `x` exists as an isolated root with value 0.
    pub fn reserve_node(&mut self, x: u32) {
        let need = x as usize + 1;
        if self.fa.len() < need {
            self.ch.resize(need, [NONE; 2]);
            self.fa.resize(need, NONE);
            self.val.resize(need, 0);
            self.lazy.resize(need, 0);
        }
    }

    /// Hangs the isolated root `x` below `parent`.
    pub fn link(&mut self, x: u32, parent: u32) {
        self.reserve_node(x.max(parent));
        debug_assert!(self.fa[x as usize] == NONE && self.ch[x as usize] == [NONE; 2]);
        self.fa[x as usize] = parent;
    }

    /// Adds `delta` to every node on the path from `x` to its root.
    pub fn path_add(&mut self, x: u32, delta: i64) {
        self.access(x);
        self.apply(x, delta);
    }

    /// Current value of node `x`.
    pub fn get(&mut self, x: u32) -> i64 {
        if x as usize >= self.fa.len() {
            return 0;
        }
        self.access(x);
        self.val[x as usize]
    }

    fn is_root(&self, x: u32) -> bool {
        let f = self.fa[x as usize];
        f == NONE || (self.ch[f as usize][0] != x && self.ch[f as usize][1] != x)
    }

    fn apply(&mut self, x: u32, d: i64) {
        self.val[x as usize] += d;
        self.lazy[x as usize] += d;
    }

    fn push(&mut self, x: u32) {
        let d = self.lazy[x as usize];
        if d != 0 {
            for c in self.ch[x as usize] {
                if c != NONE {
                    self.apply(c, d);
                }
            }
            self.lazy[x as usize] = 0;
        }
    }

    fn rotate(&mut self, x: u32) {
        let y = self.fa[x as usize];
        let z = self.fa[y as usize];
        let dx = (self.ch[y as usize][1] == x) as usize;
        if !self.is_root(y) {
            let dy = (self.ch[z as usize][1] == y) as usize;
            self.ch[z as usize][dy] = x;
        }
        self.fa[x as usize] = z;
        let b = self.ch[x as usize][dx ^ 1];
        self.ch[y as usize][dx] = b;
        if b != NONE {
            self.fa[b as usize] = y;
        }
        self.ch[x as usize][dx ^ 1] = y;
        self.fa[y as usize] = x;
    }

    fn splay(&mut self, x: u32) {
        let mut stack = core::mem::take(&mut self.stack);
        stack.clear();
        let mut y = x;
        stack.push(y);
        while !self.is_root(y) {
            y = self.fa[y as usize];
            stack.push(y);
        }
        while let Some(n) = stack.pop() {
            self.push(n);
        }
        self.stack = stack;
        while !self.is_root(x) {
            let y = self.fa[x as usize];
            if !self.is_root(y) {
                let z = self.fa[y as usize];
                let same = (self.ch[y as usize][1] == x) == (self.ch[z as usize][1] == y);
                self.rotate(if same { y } else { x });
            }
            self.rotate(x);
        }
    }

    fn access(&mut self, x: u32) {
        let mut last = NONE;
        let mut y = x;
        while y != NONE {
            self.splay(y);
            self.ch[y as usize][1] = last;
            last = y;
            y = self.fa[y as usize];
        }
        self.splay(x);
    }
}
