//! The smart kinetic walk: a growing self-avoiding path that never steps onto
//! a site from which the domain exterior is unreachable.
//!
//! A site is trapping when no 4-connected path of unvisited in-domain sites
//! leads from it to a site outside the domain. Sites outside the domain are
//! never blocks: stepping onto one ends the walk and is the exit event.
//!
//! Trap checks are lazy. A freshly occupied head can only have sealed a
//! region if its 8-neighborhood touches the wall it sealed against, so a
//! connectivity search runs only when the head is 8-adjacent to a
//! non-predecessor path site or to the exterior, and only for candidates
//! whose local free arcs around the head are actually separated. Searches for
//! separated arcs run in lockstep and stop at the first exterior contact,
//! on exhaustion (sealed), on collision with a sibling search (merge), or
//! when every sibling arc proved sealed and no exit candidate exists, in
//! which case the last arc is free because the walk itself cannot be sealed:
//! the site it stands on was reachable from the exterior one step ago.
//! Exhausted regions are remembered for the rest of the walk; a region sealed
//! once stays sealed because occupancy only grows.

use crate::geometry::{
    project, Domain, ExitRecord, GeometryError, LatticeEmbedding, Point, Site,
};
use crate::transition::{
    classify_step, sample_step, RelativeDirection, StepCase, TableError, TransitionTable,
};
use rand::Rng;
use rustc_hash::{FxHashMap, FxHashSet};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use thiserror::Error;

pub type SiteSet = FxHashSet<Site>;

/// Classification of a candidate site from the walker's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteStatus {
    /// Already part of the walk.
    Occupied,
    /// Unvisited interior site with no escape route: stepping there would
    /// strand the walk.
    Trapping,
    /// Steppable: an unvisited interior site with an escape route, or any
    /// site outside the domain (an exit).
    Allowable,
}

/// Axis direction of the current heading on the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heading {
    East,
    North,
    West,
    South,
}

const HEADINGS: [Heading; 4] = [Heading::East, Heading::North, Heading::West, Heading::South];
const OFFSETS: [(i32, i32); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

impl Heading {
    #[inline]
    fn idx(self) -> usize {
        match self {
            Heading::East => 0,
            Heading::North => 1,
            Heading::West => 2,
            Heading::South => 3,
        }
    }

    #[inline]
    pub fn offset(self) -> (i32, i32) {
        OFFSETS[self.idx()]
    }

    /// Quarter turn counterclockwise.
    #[inline]
    pub fn left(self) -> Heading {
        HEADINGS[(self.idx() + 1) % 4]
    }

    /// Quarter turn clockwise.
    #[inline]
    pub fn right(self) -> Heading {
        HEADINGS[(self.idx() + 3) % 4]
    }

    #[inline]
    pub fn turned(self, rel: RelativeDirection) -> Heading {
        match rel {
            RelativeDirection::Front => self,
            RelativeDirection::Left => self.left(),
            RelativeDirection::Right => self.right(),
        }
    }
}

/// A domain seen through a lattice embedding. Site containment delegates to
/// the continuum test on the embedded point, so the walker and the exit
/// projection can never disagree about what is outside.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub domain: Domain,
    pub embedding: LatticeEmbedding,
}

impl Frame {
    pub fn new(domain: Domain, embedding: LatticeEmbedding) -> Self {
        Frame { domain, embedding }
    }

    #[inline]
    pub fn to_plane(&self, site: Site) -> Point {
        self.embedding.lattice_to_plane(site)
    }

    #[inline]
    pub fn contains_site(&self, site: Site) -> bool {
        self.domain.contains(self.to_plane(site))
    }

    /// The full 3x3 block around the origin must embed inside the domain for
    /// every rotation; this also guarantees the first step cannot leave.
    pub fn admissible(&self) -> bool {
        self.domain.interior_depth(Point::new(0.0, 0.0))
            > std::f64::consts::SQRT_2 * self.embedding.delta
    }

    /// Interior depth in eighth-lattice-spacings, clamped to zero outside.
    /// Used as the search priority: low depth is expanded first, so an open
    /// region reaches the exterior without flooding its bulk.
    #[inline]
    fn depth_q(&self, site: Site) -> u32 {
        let d = self.domain.interior_depth(self.to_plane(site)) / self.embedding.delta;
        (d * 8.0).clamp(0.0, u32::MAX as f64 / 4.0) as u32
    }
}

/// Walk trajectory and occupancy. `current` is the head; `heading` is unset
/// until the first step has been taken.
#[derive(Debug, Clone, Default)]
pub struct WalkState {
    pub occupancy: SiteSet,
    pub path: Vec<Site>,
    pub current: Site,
    pub heading: Option<Heading>,
}

impl WalkState {
    fn reset(&mut self) {
        self.occupancy.clear();
        self.occupancy.insert(Site::ORIGIN);
        self.path.clear();
        self.path.push(Site::ORIGIN);
        self.current = Site::ORIGIN;
        self.heading = None;
    }
}

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("domain too small for spacing {delta}: an origin neighbor is outside")]
    DomainTooSmall { delta: f64 },
    #[error("step taken before first_step")]
    NoHeading,
    #[error("dead end at ({0}, {1}): every candidate blocked")]
    DeadEnd(i32, i32),
    #[error("walk revisited ({0}, {1})")]
    SelfIntersection(i32, i32),
    #[error("fast status for ({0}, {1}) is {2:?} but reference search says {3:?}")]
    StatusMismatch(i32, i32, SiteStatus, SiteStatus),
    #[error("exit projection failed: {0}")]
    Projection(#[from] GeometryError),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Status of a site relative to a walk state, by direct search.
///
/// This is the reference classifier: a plain breadth-first flood over
/// unvisited in-domain sites that succeeds on first exterior contact. The
/// walker's incremental machinery must agree with it everywhere; it is also
/// what `validate` mode compares against.
pub fn site_status(site: Site, state: &WalkState, frame: &Frame) -> SiteStatus {
    if state.occupancy.contains(&site) {
        return SiteStatus::Occupied;
    }
    if !frame.contains_site(site) {
        return SiteStatus::Allowable;
    }
    let mut seen: SiteSet = SiteSet::default();
    seen.insert(site);
    let mut queue = VecDeque::new();
    queue.push_back(site);
    while let Some(s) = queue.pop_front() {
        for (di, dj) in OFFSETS {
            let t = s.offset(di, dj);
            if state.occupancy.contains(&t) {
                continue;
            }
            if !frame.contains_site(t) {
                return SiteStatus::Allowable;
            }
            if seen.insert(t) {
                queue.push_back(t);
            }
        }
    }
    SiteStatus::Trapping
}

#[derive(Clone, Copy)]
struct Stamp {
    check: u32,
    group: u8,
}

/// Reusable containers for the incremental trap searches of one walk.
#[derive(Default)]
struct SearchScratch {
    /// Sites proven sealed earlier in this walk. Occupancy only grows, so
    /// membership stays valid for the walk's lifetime.
    known_trapped: SiteSet,
    stamp: FxHashMap<Site, Stamp>,
    heaps: [BinaryHeap<Reverse<(u32, i32, i32)>>; 3],
    trails: [Vec<Site>; 3],
    check: u32,
}

/// All per-walk storage, reusable across walks to avoid reallocation.
#[derive(Default)]
pub struct WalkerScratch {
    pub state: WalkState,
    search: SearchScratch,
}

pub enum StepOutcome {
    Continue,
    Exit(ExitRecord),
}

pub struct Walker<'a> {
    pub frame: &'a Frame,
    pub table: &'a TransitionTable,
    scratch: &'a mut WalkerScratch,
    /// Compare every fast candidate status against `site_status`. Slow;
    /// meant for correctness harnesses, not production ensembles.
    pub validate: bool,
}

impl<'a> Walker<'a> {
    pub fn new(
        frame: &'a Frame,
        table: &'a TransitionTable,
        scratch: &'a mut WalkerScratch,
    ) -> Self {
        Walker {
            frame,
            table,
            scratch,
            validate: false,
        }
    }

    pub fn state(&self) -> &WalkState {
        &self.scratch.state
    }

    /// Test and diagnostic hook; production walks only mutate state by stepping.
    pub fn state_mut(&mut self) -> &mut WalkState {
        &mut self.scratch.state
    }

    /// Reset to a fresh walk at the origin.
    pub fn begin(&mut self) {
        self.scratch.state.reset();
        let s = &mut self.scratch.search;
        s.known_trapped.clear();
        s.stamp.clear();
        for h in &mut s.heaps {
            h.clear();
        }
        for t in &mut s.trails {
            t.clear();
        }
        s.check = 0;
    }

    /// First move: uniform over the four lattice neighbors of the origin.
    /// All four must be inside the domain, otherwise the spacing does not
    /// resolve the domain and the run is misconfigured.
    pub fn first_step(&mut self, rng: &mut impl Rng) -> Result<(), WalkError> {
        let sites = OFFSETS.map(|(di, dj)| Site::ORIGIN.offset(di, dj));
        if sites.iter().any(|s| !self.frame.contains_site(*s)) {
            return Err(WalkError::DomainTooSmall {
                delta: self.frame.embedding.delta,
            });
        }
        let k = ((rng.gen::<f64>() * 4.0) as usize).min(3);
        let state = &mut self.scratch.state;
        state.occupancy.insert(sites[k]);
        state.path.push(sites[k]);
        state.current = sites[k];
        state.heading = Some(HEADINGS[k]);
        Ok(())
    }

    /// One step of the walk: classify front/left/right, draw one uniform
    /// deviate, move. Stepping outside the domain produces the exit record.
    pub fn step(&mut self, rng: &mut impl Rng) -> Result<StepOutcome, WalkError> {
        let heading = self.scratch.state.heading.ok_or(WalkError::NoHeading)?;
        let statuses = self.classify_candidates(heading)?;

        if self.validate {
            let dirs = [heading, heading.left(), heading.right()];
            for (k, dir) in dirs.iter().enumerate() {
                let (di, dj) = dir.offset();
                let site = self.scratch.state.current.offset(di, dj);
                let reference = site_status(site, &self.scratch.state, self.frame);
                if statuses[k] != reference {
                    return Err(WalkError::StatusMismatch(
                        site.i, site.j, statuses[k], reference,
                    ));
                }
            }
        }

        let blocked = |s: SiteStatus| s != SiteStatus::Allowable;
        let case = classify_step(blocked(statuses[0]), blocked(statuses[1]), blocked(statuses[2]));
        if case == StepCase::DeadEnd {
            let c = self.scratch.state.current;
            return Err(WalkError::DeadEnd(c.i, c.j));
        }
        let dir = sample_step(self.table, case, rng.gen::<f64>())?;
        let new_heading = heading.turned(dir);
        let (di, dj) = new_heading.offset();
        let target = self.scratch.state.current.offset(di, dj);

        let state = &mut self.scratch.state;
        state.path.push(target);
        if !self.frame.contains_site(target) {
            let outside_point = self.frame.to_plane(target);
            let (boundary_point, theta) = project(&self.frame.domain, outside_point)?;
            return Ok(StepOutcome::Exit(ExitRecord {
                outside_point,
                boundary_point,
                theta,
            }));
        }
        if !state.occupancy.insert(target) {
            return Err(WalkError::SelfIntersection(target.i, target.j));
        }
        state.current = target;
        state.heading = Some(new_heading);
        Ok(StepOutcome::Continue)
    }

    /// Fresh walk to completion: first step, then steps until exit.
    pub fn run(&mut self, rng: &mut impl Rng) -> Result<ExitRecord, WalkError> {
        self.begin();
        self.first_step(rng)?;
        loop {
            if let StepOutcome::Exit(rec) = self.step(rng)? {
                return Ok(rec);
            }
        }
    }

    /// Statuses of the front/left/right candidates, in that order.
    fn classify_candidates(&mut self, heading: Heading) -> Result<[SiteStatus; 3], WalkError> {
        let cur = self.scratch.state.current;
        let (fi, fj) = heading.offset();
        let (li, lj) = heading.left().offset();

        // The 8-ring around the head in cyclic order, alternating orthogonal
        // and diagonal neighbors. Consecutive ring sites are 4-adjacent, so a
        // run of free ring sites is one connected arc. Index 4 is the
        // predecessor, always occupied.
        let ring = [
            cur.offset(fi, fj),
            cur.offset(fi + li, fj + lj),
            cur.offset(li, lj),
            cur.offset(li - fi, lj - fj),
            cur.offset(-fi, -fj),
            cur.offset(-fi - li, -fj - lj),
            cur.offset(-li, -lj),
            cur.offset(fi - li, fj - lj),
        ];
        const CAND_IDX: [usize; 3] = [0, 2, 6]; // front, left, right

        let state = &self.scratch.state;
        let mut free = [false; 8];
        let mut trigger = false;
        for (k, site) in ring.iter().enumerate() {
            if k == 4 {
                continue; // predecessor: occupied by construction
            }
            let f = !state.occupancy.contains(site) && self.frame.contains_site(*site);
            free[k] = f;
            trigger |= !f;
        }

        #[derive(Clone, Copy, PartialEq)]
        enum Cand {
            Blocked,
            Exit,
            Trapped,
            Pending,
        }
        let mut cand = [Cand::Pending; 3];
        let mut pending = 0u32;
        let mut exits_present = false;
        for (slot, &k) in CAND_IDX.iter().enumerate() {
            cand[slot] = if free[k] {
                pending += 1;
                Cand::Pending
            } else if state.occupancy.contains(&ring[k]) {
                Cand::Blocked
            } else {
                exits_present = true;
                Cand::Exit
            };
        }

        if pending > 0 && trigger {
            // Memoized seals first: a candidate inside a region proven sealed
            // earlier is trapping without any search.
            for (slot, &k) in CAND_IDX.iter().enumerate() {
                if cand[slot] == Cand::Pending
                    && self.scratch.search.known_trapped.contains(&ring[k])
                {
                    cand[slot] = Cand::Trapped;
                    pending -= 1;
                }
            }
        }

        if pending > 0 && trigger {
            // Label maximal free arcs of the ring, walking it from the
            // predecessor (a guaranteed break) once around.
            let mut arc = [0u8; 8];
            let mut label = 0u8;
            let mut prev_free = false;
            for step in 1..8 {
                let k = (4 + step) % 8;
                if free[k] {
                    if !prev_free {
                        label += 1;
                    }
                    arc[k] = label;
                    prev_free = true;
                } else {
                    prev_free = false;
                }
            }

            // Distinct arcs among pending candidates become search groups.
            let mut group_of_arc = [u8::MAX; 4];
            let mut slot_group = [u8::MAX; 3];
            let mut n_groups = 0u8;
            let mut seeds: [(Site, u8); 3] = [(Site::ORIGIN, 0); 3];
            let mut n_seeds = 0;
            for (slot, &k) in CAND_IDX.iter().enumerate() {
                if cand[slot] != Cand::Pending {
                    continue;
                }
                let a = arc[k] as usize;
                if group_of_arc[a] == u8::MAX {
                    group_of_arc[a] = n_groups;
                    n_groups += 1;
                }
                slot_group[slot] = group_of_arc[a];
                seeds[n_seeds] = (ring[k], group_of_arc[a]);
                n_seeds += 1;
            }

            if n_groups == 1 && !exits_present {
                // A single arc holds every steppable candidate. Some candidate
                // must be allowable (the head's site had an escape route when
                // it was stepped on, and that route starts at a candidate),
                // so the whole arc is free of seals.
            } else {
                let verdict_free = resolve_groups(
                    self.frame,
                    &self.scratch.state.occupancy,
                    &mut self.scratch.search,
                    &seeds[..n_seeds],
                    n_groups,
                    exits_present,
                );
                for slot in 0..3 {
                    if cand[slot] == Cand::Pending && !verdict_free[slot_group[slot] as usize] {
                        cand[slot] = Cand::Trapped;
                    }
                }
            }
        }

        Ok(cand.map(|c| match c {
            Cand::Blocked => SiteStatus::Occupied,
            Cand::Trapped => SiteStatus::Trapping,
            Cand::Exit | Cand::Pending => SiteStatus::Allowable,
        }))
    }
}

/// Resolve up to three candidate groups to free/sealed by lockstep searches.
///
/// Each group owns a best-first frontier ordered by interior depth, so open
/// regions head straight for the boundary instead of flooding. Verdicts:
/// exterior contact or contact with an already-free sibling frees a group;
/// exhaustion, contact with a memoized seal, or contact with an exhausted
/// sibling seals it; two undecided groups that touch merge and share fate.
/// With no exit candidate present, when all groups but one have sealed, the
/// survivor is free by the walk's own reachability invariant and its search
/// is cut short.
fn resolve_groups(
    frame: &Frame,
    occupancy: &SiteSet,
    search: &mut SearchScratch,
    seeds: &[(Site, u8)],
    n_groups: u8,
    exits_present: bool,
) -> [bool; 3] {
    let n = n_groups as usize;
    search.check = search.check.wrapping_add(1);
    let check = search.check;
    for g in 0..n {
        search.heaps[g].clear();
        search.trails[g].clear();
    }
    let mut parent: [u8; 3] = [0, 1, 2];
    let mut verdict: [Option<bool>; 3] = [None; 3];

    fn find(parent: &[u8; 3], mut g: u8) -> u8 {
        while parent[g as usize] != g {
            g = parent[g as usize];
        }
        g
    }

    for &(site, g) in seeds {
        // Two candidates of one group share a stamp harmlessly.
        search.stamp.insert(site, Stamp { check, group: g });
        if !search.trails[g as usize].iter().any(|&s| s == site) {
            search.trails[g as usize].push(site);
            search.heaps[g as usize].push(Reverse((frame.depth_q(site), site.i, site.j)));
        }
    }

    loop {
        let mut unresolved: [u8; 3] = [u8::MAX; 3];
        let mut n_unresolved = 0;
        let mut n_trapped = 0;
        for g in 0..n as u8 {
            if parent[g as usize] != g {
                continue;
            }
            match verdict[g as usize] {
                None => {
                    unresolved[n_unresolved] = g;
                    n_unresolved += 1;
                }
                Some(false) => n_trapped += 1,
                Some(true) => {}
            }
        }
        if n_unresolved == 0 {
            break;
        }
        // Reachability shortcut: the head was allowable one step ago, so not
        // every candidate can be sealed. Valid only when no exit candidate
        // already accounts for that.
        if n_unresolved == 1 && !exits_present && n_trapped == n_unresolved_siblings(n, &parent, unresolved[0]) {
            verdict[unresolved[0] as usize] = Some(true);
            break;
        }
        for slot in 0..n_unresolved {
            let root = unresolved[slot];
            if parent[root as usize] != root || verdict[root as usize].is_some() {
                continue; // merged or resolved by an earlier sibling this round
            }
            expand_one(
                frame,
                occupancy,
                search,
                check,
                &mut parent,
                &mut verdict,
                n,
                root,
            );
        }
    }

    let mut out = [false; 3];
    for g in 0..n {
        out[g] = verdict[find(&parent, g as u8) as usize].unwrap_or(false);
    }
    out
}

/// Number of sibling roots of `root` (all roots except it).
fn n_unresolved_siblings(n: usize, parent: &[u8; 3], root: u8) -> usize {
    (0..n as u8)
        .filter(|&g| parent[g as usize] == g && g != root)
        .count()
}

#[allow(clippy::too_many_arguments)]
fn expand_one(
    frame: &Frame,
    occupancy: &SiteSet,
    search: &mut SearchScratch,
    check: u32,
    parent: &mut [u8; 3],
    verdict: &mut [Option<bool>; 3],
    n: usize,
    root: u8,
) {
    fn find(parent: &[u8; 3], mut g: u8) -> u8 {
        while parent[g as usize] != g {
            g = parent[g as usize];
        }
        g
    }
    fn seal(search: &mut SearchScratch, parent: &[u8; 3], verdict: &mut [Option<bool>; 3], n: usize, root: u8) {
        verdict[root as usize] = Some(false);
        for m in 0..n as u8 {
            if find(parent, m) == root {
                let trail = std::mem::take(&mut search.trails[m as usize]);
                search.known_trapped.extend(trail.iter().copied());
                search.trails[m as usize] = trail;
            }
        }
    }

    // Pop the shallowest frontier site across the root's member heaps.
    let mut best: Option<(u32, i32, i32, u8)> = None;
    for m in 0..n as u8 {
        if find(parent, m) != root {
            continue;
        }
        if let Some(&Reverse((d, i, j))) = search.heaps[m as usize].peek() {
            if best.map_or(true, |(bd, bi, bj, _)| (d, i, j) < (bd, bi, bj)) {
                best = Some((d, i, j, m));
            }
        }
    }
    let Some((_, i, j, m)) = best else {
        // Frontier exhausted without exterior contact: the region is sealed.
        seal(search, parent, verdict, n, root);
        return;
    };
    search.heaps[m as usize].pop();
    let s = Site::new(i, j);

    for (di, dj) in OFFSETS {
        let t = s.offset(di, dj);
        if occupancy.contains(&t) {
            continue;
        }
        if !frame.contains_site(t) {
            verdict[root as usize] = Some(true);
            return;
        }
        if search.known_trapped.contains(&t) {
            // Connected to a region already proven sealed: sealed too.
            seal(search, parent, verdict, n, root);
            return;
        }
        if let Some(st) = search.stamp.get(&t) {
            if st.check == check {
                let other = find(parent, st.group);
                if other != root {
                    match verdict[other as usize] {
                        Some(v) => {
                            // Same component as a resolved sibling.
                            verdict[root as usize] = Some(v);
                            if !v {
                                seal(search, parent, verdict, n, root);
                            }
                            return;
                        }
                        None => {
                            parent[other as usize] = root;
                        }
                    }
                }
                continue;
            }
        }
        search.stamp.insert(t, Stamp { check, group: root });
        search.trails[root as usize].push(t);
        search.heaps[root as usize].push(Reverse((frame.depth_q(t), t.i, t.j)));
    }
}

/// One complete walk: samples the per-walk rotation, embeds the lattice, and
/// runs first_step then step until the exit.
pub fn run_walk(
    domain: &Domain,
    table: &TransitionTable,
    delta: f64,
    rng: &mut impl Rng,
) -> Result<ExitRecord, WalkError> {
    let mut scratch = WalkerScratch::default();
    run_walk_with(&mut scratch, domain, table, delta, rng, false)
}

/// `run_walk` against caller-owned scratch storage, for tight ensemble loops.
pub fn run_walk_with(
    scratch: &mut WalkerScratch,
    domain: &Domain,
    table: &TransitionTable,
    delta: f64,
    rng: &mut impl Rng,
    validate: bool,
) -> Result<ExitRecord, WalkError> {
    let alpha = crate::geometry::sample_rotation(rng.gen::<f64>());
    let embedding = LatticeEmbedding::new(delta, alpha)?;
    let frame = Frame::new(*domain, embedding);
    let mut walker = Walker::new(&frame, table, scratch);
    walker.validate = validate;
    walker.run(rng)
}
