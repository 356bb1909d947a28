//! im2col lowering for stride-1, same-padded convolutions.

use super::Real;

pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeom {
    pub fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn cols(&self) -> usize {
        self.h * self.w
    }

    pub fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1
    }
}

/// Fills `col` (`C·kh·kw` × `H·W`) from one `C×H×W` image.
pub(crate) fn im2col<T: Real>(g: &ConvGeom, x: &[T], col: &mut [T]) {
    let (ph, pw) = ((g.kh / 2) as isize, (g.kw / 2) as isize);
    let hw = g.cols();
    for ch in 0..g.c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = &mut col[((ch * g.kh + i) * g.kw + j) * hw..][..hw];
                let dy = i as isize - ph;
                let dx = j as isize - pw;
                for y in 0..g.h {
                    let sy = y as isize + dy;
                    let dst = &mut row[y * g.w..(y + 1) * g.w];
                    if sy < 0 || sy >= g.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * g.w..(sy as usize + 1) * g.w];
                    for (x, d) in dst.iter_mut().enumerate() {
                        let sx = x as isize + dx;
                        *d = if sx < 0 || sx >= g.w as isize { T::zero() } else { src[sx as usize] };
                    }
                }
            }
        }
    }
}

/// Adds the columns back into one `C×H×W` image gradient.
pub(crate) fn col2im<T: Real>(g: &ConvGeom, col: &[T], dx: &mut [T]) {
    let (ph, pw) = ((g.kh / 2) as isize, (g.kw / 2) as isize);
    let hw = g.cols();
    for ch in 0..g.c {
        let plane = &mut dx[ch * hw..(ch + 1) * hw];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = &col[((ch * g.kh + i) * g.kw + j) * hw..][..hw];
                let dy = i as isize - ph;
                let dxo = j as isize - pw;
                for y in 0..g.h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * g.w..(sy as usize + 1) * g.w];
                    for x in 0..g.w {
                        let sx = x as isize + dxo;
                        if sx >= 0 && sx < g.w as isize {
                            dst[sx as usize] = dst[sx as usize] + row[y * g.w + x];
                        }
                    }
                }
            }
        }
    }
}
