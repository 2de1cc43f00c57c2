//! Building placement: occupancy masks, binary dilation and random location sampling.
//!
//! The buildable area for a structure of footprint radius `r` is the complement of
//! the occupancy mask dilated by `r` (square structuring element), optionally
//! intersected with the player's power aura. A location is then drawn uniformly
//! from the remaining cells.

use rand::Rng;

use crate::engine::{EngineConfig, EntityKind, GameState, PlayerId, Pos};

/// A rectangular region of the map (the local "screen").
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub x0: i32,
    pub y0: i32,
    pub width: i32,
    pub height: i32,
}

impl Window {
    /// Square window of side `side` centred on `centre`, shifted to lie inside the map.
    pub fn centered(config: &EngineConfig, centre: Pos, side: i32) -> Window {
        let w = side.min(config.width);
        let h = side.min(config.height);
        let x0 = (centre.x - w / 2).clamp(0, config.width - w);
        let y0 = (centre.y - h / 2).clamp(0, config.height - h);
        Window {
            x0,
            y0,
            width: w,
            height: h,
        }
    }

    pub fn full(config: &EngineConfig) -> Window {
        Window {
            x0: 0,
            y0: 0,
            width: config.width,
            height: config.height,
        }
    }

    pub fn contains(&self, p: Pos) -> bool {
        p.x >= self.x0 && p.y >= self.y0 && p.x < self.x0 + self.width && p.y < self.y0 + self.height
    }

    pub fn centre(&self) -> Pos {
        Pos::new(self.x0 + self.width / 2, self.y0 + self.height / 2)
    }

    fn padded(&self, r: i32) -> Window {
        Window {
            x0: self.x0 - r,
            y0: self.y0 - r,
            width: self.width + 2 * r,
            height: self.height + 2 * r,
        }
    }
}

/// Row-major binary mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            cells: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.cells[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.cells[y * self.width + x] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> BinaryMask {
        let mut out = BinaryMask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                out.set(x, y, self.get(x + x0, y + y0));
            }
        }
        out
    }
}

/// 1 at every cell of `window` covered by an entity footprint; cells outside the map count as occupied.
pub fn occupancy_mask(state: &GameState, window: Window) -> BinaryMask {
    let mut mask = BinaryMask::new(window.width as usize, window.height as usize);
    for y in 0..window.height {
        for x in 0..window.width {
            let p = Pos::new(window.x0 + x, window.y0 + y);
            if !state.config.in_bounds(p) {
                mask.set(x as usize, y as usize, true);
            }
        }
    }
    for e in &state.entities {
        for c in e.footprint() {
            if window.contains(c) {
                mask.set((c.x - window.x0) as usize, (c.y - window.y0) as usize, true);
            }
        }
    }
    mask
}

/// Binary dilation with a square (Chebyshev) structuring element of the given radius.
///
/// Separable: a 1-D running maximum along rows, then along columns.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width, mask.height);
    let mut rows = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            rows.set(x, y, (lo..=hi).any(|xx| mask.get(xx, y)));
        }
    }
    let mut out = BinaryMask::new(w, h);
    for y in 0..h {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        for x in 0..w {
            out.set(x, y, (lo..=hi).any(|yy| rows.get(x, yy)));
        }
    }
    out
}

/// Cells of `window` inside `player`'s power aura.
pub fn power_mask(state: &GameState, player: PlayerId, window: Window) -> BinaryMask {
    let mut mask = BinaryMask::new(window.width as usize, window.height as usize);
    for y in 0..window.height {
        for x in 0..window.width {
            let p = Pos::new(window.x0 + x, window.y0 + y);
            mask.set(x as usize, y as usize, state.powered(player, p));
        }
    }
    mask
}

/// Buildable cells of `window` for a structure of `kind`.
pub fn buildable_mask(state: &GameState, player: PlayerId, kind: EntityKind, window: Window) -> BinaryMask {
    let r = kind.stats().footprint;
    // Pad so footprints straddling the window edge are checked against real occupancy.
    let padded = window.padded(r);
    let occupied = dilate(&occupancy_mask(state, padded), r as usize);
    let mut buildable = occupied.crop(r as usize, r as usize, window.width as usize, window.height as usize);
    for c in buildable.cells.iter_mut() {
        *c = !*c;
    }
    if kind.requires_power() {
        let power = power_mask(state, player, window);
        for (b, p) in buildable.cells.iter_mut().zip(&power.cells) {
            *b &= *p;
        }
    }
    buildable
}

/// Uniformly random buildable location for `kind` inside `window`, or `None` when nothing fits.
pub fn sample_build_location<R: Rng>(
    state: &GameState,
    player: PlayerId,
    kind: EntityKind,
    window: Window,
    rng: &mut R,
) -> Option<Pos> {
    if !kind.is_structure() {
        return None;
    }
    let mask = buildable_mask(state, player, kind, window);
    let n = mask.count_ones();
    if n == 0 {
        return None;
    }
    let pick = rng.gen_range(0..n);
    let idx = mask.cells.iter().enumerate().filter(|(_, &c)| c).nth(pick).map(|(i, _)| i)?;
    Some(Pos::new(
        window.x0 + (idx % mask.width) as i32,
        window.y0 + (idx / mask.width) as i32,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{new_game, DifficultyConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// For each 1-cell, stamp its full neighbourhood.
    fn stamp(mask: &BinaryMask, radius: usize) -> BinaryMask {
        let mut out = BinaryMask::new(mask.width, mask.height);
        let r = radius as i64;
        for y in 0..mask.height {
            for x in 0..mask.width {
                if !mask.get(x, y) {
                    continue;
                }
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx >= 0 && ny >= 0 && (nx as usize) < mask.width && (ny as usize) < mask.height {
                            out.set(nx as usize, ny as usize, true);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn radius_zero_is_identity() {
        let mut m = BinaryMask::new(6, 4);
        m.set(2, 1, true);
        m.set(5, 3, true);
        assert_eq!(dilate(&m, 0), m);
    }

    #[test]
    fn single_centre_cell_becomes_block() {
        let mut m = BinaryMask::new(5, 5);
        m.set(2, 2, true);
        let d = dilate(&m, 1);
        for y in 0..5 {
            for x in 0..5 {
                let inside = (1..=3).contains(&x) && (1..=3).contains(&y);
                assert_eq!(d.get(x, y), inside, "cell ({x},{y})");
            }
        }
        assert_eq!(d.count_ones(), 9);
    }

    #[test]
    fn matches_stamping_oracle_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut m = BinaryMask::new(8, 8);
            for c in m.cells.iter_mut() {
                *c = rng.gen_bool(0.15);
            }
            for r in 1..=2 {
                assert_eq!(dilate(&m, r), stamp(&m, r));
            }
        }
    }

    #[test]
    fn empty_window_mask_is_zero() {
        let g = new_game(1, &DifficultyConfig::level(1).unwrap(), 100).unwrap();
        // Map centre is far from both spawns and all mineral sites.
        let w = Window {
            x0: 13,
            y0: 13,
            width: 6,
            height: 6,
        };
        assert_eq!(occupancy_mask(&g, w).count_ones(), 0);
    }

    #[test]
    fn single_structure_marks_one_cell() {
        let mut g = new_game(1, &DifficultyConfig::level(1).unwrap(), 100).unwrap();
        g.players[0].minerals = 1000;
        g.apply_action(0, crate::engine::PrimitiveAction::Select(crate::engine::SelectTarget::Kind(EntityKind::Worker)));
        // Supply structures have a 1-cell footprint and need no power.
        let p = Pos::new(16, 16);
        assert!(g.apply_action(
            0,
            crate::engine::PrimitiveAction::Command(crate::engine::Command::BuildStructure(EntityKind::Supply, p))
        ));
        let w = Window {
            x0: 13,
            y0: 13,
            width: 6,
            height: 6,
        };
        let m = occupancy_mask(&g, w);
        assert_eq!(m.count_ones(), 1);
        assert!(m.get(3, 3));
    }

    #[test]
    fn occupancy_matches_entity_scan() {
        let g = new_game(5, &DifficultyConfig::level(3).unwrap(), 100).unwrap();
        let w = Window::full(&g.config);
        let m = occupancy_mask(&g, w);
        for y in 0..g.config.height {
            for x in 0..g.config.width {
                let p = Pos::new(x, y);
                let covered = g.entities.iter().any(|e| e.distance_to(p) == 0);
                assert_eq!(m.get(x as usize, y as usize), covered, "{p}");
            }
        }
    }

    #[test]
    fn fully_occupied_window_has_no_location() {
        let g = new_game(1, &DifficultyConfig::level(1).unwrap(), 100).unwrap();
        let mineral = g.entities.iter().find(|e| e.kind == EntityKind::Mineral).unwrap().pos;
        let w = Window {
            x0: mineral.x,
            y0: mineral.y,
            width: 1,
            height: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_build_location(&g, 0, EntityKind::Supply, w, &mut rng), None);
    }

    #[test]
    fn powered_structure_needs_aura() {
        let mut g = new_game(1, &DifficultyConfig::level(1).unwrap(), 100).unwrap();
        // Remove every aura source of player 0.
        g.entities.retain(|e| !(e.owner == Some(0) && e.kind.projects_power()));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = Window::full(&g.config);
        assert_eq!(sample_build_location(&g, 0, EntityKind::Production, w, &mut rng), None);
        assert!(sample_build_location(&g, 0, EntityKind::Supply, w, &mut rng).is_some());
    }

    #[test]
    fn samples_satisfy_buildable_predicate() {
        let g = new_game(9, &DifficultyConfig::level(2).unwrap(), 100).unwrap();
        let w = Window::centered(&g.config, g.home(0), 16);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in [EntityKind::Supply, EntityKind::Production] {
            for _ in 0..500 {
                let p = sample_build_location(&g, 0, kind, w, &mut rng).unwrap();
                assert!(w.contains(p));
                assert!(g.can_place(0, kind, p), "{kind} at {p}");
            }
        }
    }
}
