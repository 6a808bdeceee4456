//! Maximum-weight matching in general graphs (Edmonds' blossom method,
//! primal-dual, O(n^3)). Weights are integers; callers that start from
//! floating-point distances scale and round first, which keeps every dual
//! variable and slack integral and makes termination exact.
//!
//! `mate[v]` in the result is the vertex matched to `v`, or `NONE`.

pub(crate) const NONE: usize = usize::MAX;

const LBL_FREE: u8 = 0;
const LBL_S: u8 = 1;
const LBL_T: u8 = 2;
const LBL_CRUMB: u8 = 5; // breadcrumb marker used while scanning

/// Computes a maximum-weight matching of the given edge list.
/// With `max_cardinality` the matching is maximum-cardinality first and
/// maximum-weight among those.
pub(crate) fn max_weight_matching(
    n_vertices: usize,
    edges: &[(usize, usize, i64)],
    max_cardinality: bool,
) -> Vec<usize> {
    if n_vertices == 0 || edges.is_empty() {
        return vec![NONE; n_vertices];
    }
    let mut solver = Solver::new(n_vertices, edges, max_cardinality);
    solver.run();
    if cfg!(debug_assertions) {
        solver.verify_optimum();
    }
    solver
        .mate
        .iter()
        .map(|&p| if p == NONE { NONE } else { solver.endpoint[p] })
        .collect()
}

struct Solver {
    nvertex: usize,
    nedge: usize,
    maxcardinality: bool,
    // Edge k connects edges[k].0 and edges[k].1 with doubled weight edges[k].2.
    edges: Vec<(usize, usize, i64)>,
    // endpoint[p]: vertex attached to edge endpoint p; endpoints 2k and 2k+1
    // belong to edge k.
    endpoint: Vec<usize>,
    // neighbend[v]: remote endpoints of edges incident to v.
    neighbend: Vec<Vec<usize>>,
    // mate[v]: remote endpoint of v's matched edge, or NONE.
    mate: Vec<usize>,
    // Per top-level blossom: FREE / S / T.
    label: Vec<u8>,
    // labelend[b]: remote endpoint through which b got its label.
    labelend: Vec<usize>,
    // inblossom[v]: top-level blossom containing vertex v.
    inblossom: Vec<usize>,
    blossomparent: Vec<usize>,
    blossomchilds: Vec<Vec<usize>>,
    blossombase: Vec<usize>,
    blossomendps: Vec<Vec<usize>>,
    // Least-slack edge bookkeeping for delta2/delta3.
    bestedge: Vec<usize>,
    blossombestedges: Vec<Vec<usize>>,
    unusedblossoms: Vec<usize>,
    // dualvar[v] for a vertex holds 2*u(v); dualvar[b] for a blossom holds
    // its z variable in the same doubled units.
    dualvar: Vec<i64>,
    allowedge: Vec<bool>,
    queue: Vec<usize>,
}

impl Solver {
    fn new(nvertex: usize, input: &[(usize, usize, i64)], maxcardinality: bool) -> Self {
        // Double the weights so that slacks stay even and delta3 = slack/2
        // is always integral.
        let edges: Vec<(usize, usize, i64)> = input
            .iter()
            .map(|&(i, j, w)| {
                assert!(i != j && i < nvertex && j < nvertex);
                (i, j, 2 * w)
            })
            .collect();
        let nedge = edges.len();
        let maxweight = edges.iter().map(|e| e.2).max().unwrap().max(0);

        let endpoint: Vec<usize> = (0..2 * nedge)
            .map(|p| {
                if p % 2 == 0 {
                    edges[p / 2].0
                } else {
                    edges[p / 2].1
                }
            })
            .collect();
        let mut neighbend = vec![Vec::new(); nvertex];
        for (k, &(i, j, _)) in edges.iter().enumerate() {
            neighbend[i].push(2 * k + 1);
            neighbend[j].push(2 * k);
        }

        let mut dualvar = vec![maxweight; nvertex];
        dualvar.extend(std::iter::repeat_n(0, nvertex));
        let mut blossombase: Vec<usize> = (0..nvertex).collect();
        blossombase.extend(std::iter::repeat_n(NONE, nvertex));

        Solver {
            nvertex,
            nedge,
            maxcardinality,
            edges,
            endpoint,
            neighbend,
            mate: vec![NONE; nvertex],
            label: vec![LBL_FREE; 2 * nvertex],
            labelend: vec![NONE; 2 * nvertex],
            inblossom: (0..nvertex).collect(),
            blossomparent: vec![NONE; 2 * nvertex],
            blossomchilds: vec![Vec::new(); 2 * nvertex],
            blossombase,
            blossomendps: vec![Vec::new(); 2 * nvertex],
            bestedge: vec![NONE; 2 * nvertex],
            blossombestedges: vec![Vec::new(); 2 * nvertex],
            unusedblossoms: (nvertex..2 * nvertex).collect(),
            dualvar,
            allowedge: vec![false; nedge],
            queue: Vec::new(),
        }
    }

    // 2 * slack of edge k; not meaningful for edges inside a blossom.
    #[inline]
    fn slack(&self, k: usize) -> i64 {
        let (i, j, w) = self.edges[k];
        self.dualvar[i] + self.dualvar[j] - w
    }

    fn blossom_leaves(&self, b: usize, out: &mut Vec<usize>) {
        if b < self.nvertex {
            out.push(b);
            return;
        }
        let mut stack = vec![b];
        while let Some(t) = stack.pop() {
            if t < self.nvertex {
                out.push(t);
            } else {
                stack.extend(self.blossomchilds[t].iter().copied());
            }
        }
    }

    fn leaves(&self, b: usize) -> Vec<usize> {
        let mut out = Vec::new();
        self.blossom_leaves(b, &mut out);
        out
    }

    // Label the top-level blossom containing w, reached through remote
    // endpoint p.
    fn assign_label(&mut self, w: usize, t: u8, p: usize) {
        let mut w = w;
        let mut t = t;
        let mut p = p;
        loop {
            let b = self.inblossom[w];
            debug_assert!(self.label[w] == LBL_FREE && self.label[b] == LBL_FREE);
            self.label[w] = t;
            self.label[b] = t;
            self.labelend[w] = p;
            self.labelend[b] = p;
            self.bestedge[w] = NONE;
            self.bestedge[b] = NONE;
            if t == LBL_S {
                let leaves = self.leaves(b);
                self.queue.extend(leaves);
                return;
            }
            // T-blossom: its base's mate becomes an S-vertex.
            let base = self.blossombase[b];
            debug_assert!(self.mate[base] != NONE);
            let mbase = self.mate[base];
            w = self.endpoint[mbase];
            t = LBL_S;
            p = mbase ^ 1;
        }
    }

    // Trace back from v and w; returns the base of a new blossom, or NONE if
    // an augmenting path was found instead.
    fn scan_blossom(&mut self, v: usize, w: usize) -> usize {
        let mut path = Vec::new();
        let mut base = NONE;
        let mut v = v;
        let mut w = w;
        while v != NONE || w != NONE {
            let mut b = self.inblossom[v];
            if self.label[b] & 4 != 0 {
                base = self.blossombase[b];
                break;
            }
            debug_assert_eq!(self.label[b], LBL_S);
            path.push(b);
            self.label[b] = LBL_CRUMB;
            debug_assert_eq!(self.labelend[b], self.mate[self.blossombase[b]]);
            if self.labelend[b] == NONE {
                v = NONE;
            } else {
                v = self.endpoint[self.labelend[b]];
                b = self.inblossom[v];
                debug_assert_eq!(self.label[b], LBL_T);
                debug_assert!(self.labelend[b] != NONE);
                v = self.endpoint[self.labelend[b]];
            }
            if w != NONE {
                std::mem::swap(&mut v, &mut w);
            }
        }
        for b in path {
            self.label[b] = LBL_S;
        }
        base
    }

    // Build a new blossom with the given base around edge k (joining two
    // S-blossoms), relabel it S and refresh least-slack bookkeeping.
    fn add_blossom(&mut self, base: usize, k: usize) {
        let (mut v, mut w, _) = self.edges[k];
        let bb = self.inblossom[base];
        let mut bv = self.inblossom[v];
        let mut bw = self.inblossom[w];

        let b = self.unusedblossoms.pop().expect("blossom pool exhausted");
        self.blossombase[b] = base;
        self.blossomparent[b] = NONE;
        self.blossomparent[bb] = b;

        let mut childs = Vec::new();
        let mut endps = Vec::new();
        while bv != bb {
            self.blossomparent[bv] = b;
            childs.push(bv);
            endps.push(self.labelend[bv]);
            debug_assert!(
                self.label[bv] == LBL_T
                    || (self.label[bv] == LBL_S
                        && self.labelend[bv] == self.mate[self.blossombase[bv]])
            );
            debug_assert!(self.labelend[bv] != NONE);
            v = self.endpoint[self.labelend[bv]];
            bv = self.inblossom[v];
        }
        childs.push(bb);
        childs.reverse();
        endps.reverse();
        endps.push(2 * k);
        while bw != bb {
            self.blossomparent[bw] = b;
            childs.push(bw);
            endps.push(self.labelend[bw] ^ 1);
            debug_assert!(
                self.label[bw] == LBL_T
                    || (self.label[bw] == LBL_S
                        && self.labelend[bw] == self.mate[self.blossombase[bw]])
            );
            debug_assert!(self.labelend[bw] != NONE);
            w = self.endpoint[self.labelend[bw]];
            bw = self.inblossom[w];
        }
        self.blossomchilds[b] = childs;
        self.blossomendps[b] = endps;

        debug_assert_eq!(self.label[bb], LBL_S);
        self.label[b] = LBL_S;
        self.labelend[b] = self.labelend[bb];
        self.dualvar[b] = 0;

        for v in self.leaves(b) {
            if self.label[self.inblossom[v]] == LBL_T {
                // Former T-vertex becomes an S-vertex inside the new blossom.
                self.queue.push(v);
            }
            self.inblossom[v] = b;
        }

        // Merge least-slack edge lists of the children.
        let mut bestedgeto = vec![NONE; 2 * self.nvertex];
        for bv in self.blossomchilds[b].clone() {
            let lists: Vec<Vec<usize>> = if self.blossombestedges[bv].is_empty() {
                self.leaves(bv)
                    .into_iter()
                    .map(|v| self.neighbend[v].iter().map(|p| p / 2).collect())
                    .collect()
            } else {
                vec![self.blossombestedges[bv].clone()]
            };
            for list in lists {
                for k in list {
                    let (mut i, mut j, _) = self.edges[k];
                    if self.inblossom[j] == b {
                        std::mem::swap(&mut i, &mut j);
                    }
                    let _ = i;
                    let bj = self.inblossom[j];
                    if bj != b
                        && self.label[bj] == LBL_S
                        && (bestedgeto[bj] == NONE || self.slack(k) < self.slack(bestedgeto[bj]))
                    {
                        bestedgeto[bj] = k;
                    }
                }
            }
            self.blossombestedges[bv] = Vec::new();
            self.bestedge[bv] = NONE;
        }
        self.blossombestedges[b] = bestedgeto.into_iter().filter(|&k| k != NONE).collect();
        self.bestedge[b] = NONE;
        for k in self.blossombestedges[b].clone() {
            if self.bestedge[b] == NONE || self.slack(k) < self.slack(self.bestedge[b]) {
                self.bestedge[b] = k;
            }
        }
    }

    // Expand the given top-level blossom: restore its children as top-level
    // blossoms. During a stage (endstage = false) a T-blossom's children must
    // be relabeled.
    fn expand_blossom(&mut self, b: usize, endstage: bool) {
        for s in self.blossomchilds[b].clone() {
            self.blossomparent[s] = NONE;
            if s < self.nvertex {
                self.inblossom[s] = s;
            } else if endstage && self.dualvar[s] == 0 {
                self.expand_blossom(s, endstage);
            } else {
                for v in self.leaves(s) {
                    self.inblossom[v] = s;
                }
            }
        }
        if !endstage && self.label[b] == LBL_T {
            debug_assert!(self.labelend[b] != NONE);
            let entrychild = self.inblossom[self.endpoint[self.labelend[b] ^ 1]];
            let len = self.blossomchilds[b].len() as i64;
            let mut j = self.blossomchilds[b]
                .iter()
                .position(|&c| c == entrychild)
                .unwrap() as i64;
            let (jstep, endptrick): (i64, usize) = if j & 1 != 0 {
                j -= len;
                (1, 0)
            } else {
                (-1, 1)
            };
            // Relabel along the blossom from the entry child to the base.
            let mut p = self.labelend[b];
            while j != 0 {
                self.label[self.endpoint[p ^ 1]] = LBL_FREE;
                let ep = self.endps_at(b, j - endptrick as i64) ^ endptrick;
                self.label[self.endpoint[ep ^ 1]] = LBL_FREE;
                let enter = self.endpoint[p ^ 1];
                self.assign_label(enter, LBL_T, p);
                let allow = self.endps_at(b, j - endptrick as i64) / 2;
                self.allowedge[allow] = true;
                j += jstep;
                p = self.endps_at(b, j - endptrick as i64) ^ endptrick;
                self.allowedge[p / 2] = true;
                j += jstep;
            }
            // Relabel the base sub-blossom without following to its mate.
            let bv = self.childs_at(b, j);
            self.label[self.endpoint[p ^ 1]] = LBL_T;
            self.label[bv] = LBL_T;
            self.labelend[self.endpoint[p ^ 1]] = p;
            self.labelend[bv] = p;
            self.bestedge[bv] = NONE;
            // The remaining sub-blossoms keep label FREE unless reachable.
            j += jstep;
            while self.childs_at(b, j) != entrychild {
                let bv = self.childs_at(b, j);
                if self.label[bv] == LBL_S {
                    j += jstep;
                    continue;
                }
                let mut reached = NONE;
                for v in self.leaves(bv) {
                    if self.label[v] != LBL_FREE {
                        reached = v;
                        break;
                    }
                }
                if reached != NONE {
                    let v = reached;
                    debug_assert_eq!(self.label[v], LBL_T);
                    debug_assert_eq!(self.inblossom[v], bv);
                    self.label[v] = LBL_FREE;
                    self.label[self.endpoint[self.mate[self.blossombase[bv]]]] = LBL_FREE;
                    let le = self.labelend[v];
                    self.assign_label(v, LBL_T, le);
                }
                j += jstep;
            }
        }
        self.label[b] = LBL_FREE;
        self.labelend[b] = NONE;
        self.blossombase[b] = NONE;
        self.bestedge[b] = NONE;
        self.blossomchilds[b] = Vec::new();
        self.blossomendps[b] = Vec::new();
        self.blossombestedges[b] = Vec::new();
        self.unusedblossoms.push(b);
    }

    #[inline]
    fn childs_at(&self, b: usize, j: i64) -> usize {
        let v = &self.blossomchilds[b];
        let idx = if j >= 0 {
            j as usize
        } else {
            (v.len() as i64 + j) as usize
        };
        v[idx]
    }

    #[inline]
    fn endps_at(&self, b: usize, j: i64) -> usize {
        let v = &self.blossomendps[b];
        let idx = if j >= 0 {
            j as usize
        } else {
            (v.len() as i64 + j) as usize
        };
        v[idx]
    }

    // Swap matched and unmatched edges along the alternating path inside
    // blossom b from vertex v to the base.
    fn augment_blossom(&mut self, b: usize, v: usize) {
        let mut t = v;
        while self.blossomparent[t] != b {
            t = self.blossomparent[t];
        }
        if t >= self.nvertex {
            self.augment_blossom(t, v);
        }
        let i = self.blossomchilds[b].iter().position(|&c| c == t).unwrap();
        let len = self.blossomchilds[b].len() as i64;
        let mut j = i as i64;
        let (jstep, endptrick): (i64, usize) = if i & 1 != 0 {
            j -= len;
            (1, 0)
        } else {
            (-1, 1)
        };
        while j != 0 {
            j += jstep;
            let t = self.childs_at(b, j);
            let p = self.endps_at(b, j - endptrick as i64) ^ endptrick;
            if t >= self.nvertex {
                let ep = self.endpoint[p];
                self.augment_blossom(t, ep);
            }
            j += jstep;
            let t = self.childs_at(b, j);
            if t >= self.nvertex {
                let ep = self.endpoint[p ^ 1];
                self.augment_blossom(t, ep);
            }
            self.mate[self.endpoint[p]] = p ^ 1;
            self.mate[self.endpoint[p ^ 1]] = p;
        }
        self.blossomchilds[b].rotate_left(i);
        self.blossomendps[b].rotate_left(i);
        self.blossombase[b] = self.blossombase[self.blossomchilds[b][0]];
        debug_assert_eq!(self.blossombase[b], v);
    }

    // Swap matched and unmatched edges along the augmenting path through
    // edge k between two single vertices.
    fn augment_matching(&mut self, k: usize) {
        let (v, w, _) = self.edges[k];
        for (mut s, mut p) in [(v, 2 * k + 1), (w, 2 * k)] {
            loop {
                let bs = self.inblossom[s];
                debug_assert_eq!(self.label[bs], LBL_S);
                debug_assert_eq!(self.labelend[bs], self.mate[self.blossombase[bs]]);
                if bs >= self.nvertex {
                    self.augment_blossom(bs, s);
                }
                self.mate[s] = p;
                if self.labelend[bs] == NONE {
                    break; // reached a single vertex
                }
                let t = self.endpoint[self.labelend[bs]];
                let bt = self.inblossom[t];
                debug_assert_eq!(self.label[bt], LBL_T);
                debug_assert!(self.labelend[bt] != NONE);
                s = self.endpoint[self.labelend[bt]];
                let j = self.endpoint[self.labelend[bt] ^ 1];
                debug_assert_eq!(self.blossombase[bt], t);
                if bt >= self.nvertex {
                    self.augment_blossom(bt, j);
                }
                self.mate[j] = self.labelend[bt];
                p = self.labelend[bt] ^ 1;
            }
        }
    }

    fn run(&mut self) {
        for _stage in 0..self.nvertex {
            self.label.iter_mut().for_each(|l| *l = LBL_FREE);
            self.bestedge.iter_mut().for_each(|e| *e = NONE);
            for list in &mut self.blossombestedges[self.nvertex..] {
                list.clear();
            }
            self.allowedge.iter_mut().for_each(|a| *a = false);
            self.queue.clear();

            for v in 0..self.nvertex {
                if self.mate[v] == NONE && self.label[self.inblossom[v]] == LBL_FREE {
                    self.assign_label(v, LBL_S, NONE);
                }
            }

            let mut augmented = false;
            loop {
                'queue: while let Some(v) = self.queue.pop() {
                    debug_assert_eq!(self.label[self.inblossom[v]], LBL_S);
                    for p in self.neighbend[v].clone() {
                        let k = p / 2;
                        let w = self.endpoint[p];
                        if self.inblossom[v] == self.inblossom[w] {
                            continue; // edge internal to a blossom
                        }
                        let mut kslack = 0;
                        if !self.allowedge[k] {
                            kslack = self.slack(k);
                            if kslack <= 0 {
                                self.allowedge[k] = true;
                            }
                        }
                        if self.allowedge[k] {
                            let bw = self.inblossom[w];
                            if self.label[bw] == LBL_FREE {
                                self.assign_label(w, LBL_T, p ^ 1);
                            } else if self.label[bw] == LBL_S {
                                let base = self.scan_blossom(v, w);
                                if base != NONE {
                                    self.add_blossom(base, k);
                                } else {
                                    self.augment_matching(k);
                                    augmented = true;
                                    break 'queue;
                                }
                            } else if self.label[w] == LBL_FREE {
                                debug_assert_eq!(self.label[bw], LBL_T);
                                self.label[w] = LBL_T;
                                self.labelend[w] = p ^ 1;
                            }
                        } else if self.label[self.inblossom[w]] == LBL_S {
                            let b = self.inblossom[v];
                            if self.bestedge[b] == NONE || kslack < self.slack(self.bestedge[b]) {
                                self.bestedge[b] = k;
                            }
                        } else if self.label[w] == LBL_FREE
                            && (self.bestedge[w] == NONE || kslack < self.slack(self.bestedge[w]))
                        {
                            self.bestedge[w] = k;
                        }
                    }
                }
                if augmented {
                    break;
                }

                // No augmenting path: adjust duals.
                let mut deltatype = -1;
                let mut delta = 0i64;
                let mut deltaedge = NONE;
                let mut deltablossom = NONE;

                if !self.maxcardinality {
                    deltatype = 1;
                    delta = *self.dualvar[..self.nvertex].iter().min().unwrap();
                }
                for v in 0..self.nvertex {
                    if self.label[self.inblossom[v]] == LBL_FREE && self.bestedge[v] != NONE {
                        let d = self.slack(self.bestedge[v]);
                        if deltatype == -1 || d < delta {
                            delta = d;
                            deltatype = 2;
                            deltaedge = self.bestedge[v];
                        }
                    }
                }
                for b in 0..2 * self.nvertex {
                    if self.blossomparent[b] == NONE
                        && self.label[b] == LBL_S
                        && self.bestedge[b] != NONE
                    {
                        let d = self.slack(self.bestedge[b]) / 2;
                        if deltatype == -1 || d < delta {
                            delta = d;
                            deltatype = 3;
                            deltaedge = self.bestedge[b];
                        }
                    }
                }
                for b in self.nvertex..2 * self.nvertex {
                    if self.blossombase[b] != NONE
                        && self.blossomparent[b] == NONE
                        && self.label[b] == LBL_T
                        && (deltatype == -1 || self.dualvar[b] < delta)
                    {
                        delta = self.dualvar[b];
                        deltatype = 4;
                        deltablossom = b;
                    }
                }
                if deltatype == -1 {
                    // Max-cardinality optimum reached; final adjustment keeps
                    // the duals verifiable.
                    debug_assert!(self.maxcardinality);
                    deltatype = 1;
                    delta = (*self.dualvar[..self.nvertex].iter().min().unwrap()).max(0);
                }

                for v in 0..self.nvertex {
                    match self.label[self.inblossom[v]] {
                        LBL_FREE => {}
                        LBL_S => self.dualvar[v] -= delta,
                        LBL_T => self.dualvar[v] += delta,
                        _ => unreachable!(),
                    }
                }
                for b in self.nvertex..2 * self.nvertex {
                    if self.blossombase[b] != NONE && self.blossomparent[b] == NONE {
                        match self.label[b] {
                            LBL_FREE => {}
                            LBL_S => self.dualvar[b] += delta,
                            LBL_T => self.dualvar[b] -= delta,
                            _ => unreachable!(),
                        }
                    }
                }

                match deltatype {
                    1 => break, // optimum reached
                    2 => {
                        self.allowedge[deltaedge] = true;
                        let (mut i, j, _) = self.edges[deltaedge];
                        if self.label[self.inblossom[i]] == LBL_FREE {
                            i = j;
                        }
                        debug_assert_eq!(self.label[self.inblossom[i]], LBL_S);
                        self.queue.push(i);
                    }
                    3 => {
                        self.allowedge[deltaedge] = true;
                        let (i, _, _) = self.edges[deltaedge];
                        debug_assert_eq!(self.label[self.inblossom[i]], LBL_S);
                        self.queue.push(i);
                    }
                    4 => self.expand_blossom(deltablossom, false),
                    _ => unreachable!(),
                }
            }

            if !augmented {
                break;
            }
            // End of stage: expand S-blossoms whose dual dropped to zero.
            for b in self.nvertex..2 * self.nvertex {
                if self.blossomparent[b] == NONE
                    && self.blossombase[b] != NONE
                    && self.label[b] == LBL_S
                    && self.dualvar[b] == 0
                {
                    self.expand_blossom(b, true);
                }
            }
        }
    }

    // Complementary-slackness check of the final matching and duals.
    fn verify_optimum(&self) {
        let vdualoffset = if self.maxcardinality {
            (-self.dualvar[..self.nvertex].iter().min().unwrap()).max(0)
        } else {
            0
        };
        assert!(self.dualvar[..self.nvertex].iter().min().unwrap() + vdualoffset >= 0);
        assert!(*self.dualvar[self.nvertex..].iter().min().unwrap() >= 0);
        for k in 0..self.nedge {
            let (i, j, w) = self.edges[k];
            let mut s = self.dualvar[i] + self.dualvar[j] - w;
            let chain = |mut v: usize| {
                let mut out = vec![v];
                while self.blossomparent[v] != NONE {
                    v = self.blossomparent[v];
                    out.push(v);
                }
                out.reverse();
                out
            };
            for (bi, bj) in chain(i).into_iter().zip(chain(j)) {
                if bi != bj {
                    break;
                }
                s += 2 * self.dualvar[bi];
            }
            assert!(s >= 0, "edge {k} has negative slack");
            if self.mate[i] / 2 == k || self.mate[j] / 2 == k {
                assert_eq!(self.mate[i] / 2, k);
                assert_eq!(self.mate[j] / 2, k);
                assert_eq!(s, 0, "matched edge {k} has nonzero slack");
            }
        }
        for v in 0..self.nvertex {
            assert!(self.mate[v] != NONE || self.dualvar[v] + vdualoffset == 0);
        }
        for b in self.nvertex..2 * self.nvertex {
            if self.blossombase[b] != NONE && self.dualvar[b] > 0 {
                assert_eq!(self.blossomendps[b].len() % 2, 1);
                for (ix, &p) in self.blossomendps[b].iter().enumerate() {
                    if ix % 2 == 1 {
                        assert_eq!(self.mate[self.endpoint[p]], p ^ 1);
                        assert_eq!(self.mate[self.endpoint[p ^ 1]], p);
                    }
                }
            }
        }
    }
}
