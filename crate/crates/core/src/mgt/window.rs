use crate::error::{ensure, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// How a feature map is cut into dilated `P × P` windows.
///
/// Pixels with equal `(y mod d, x mod d)` form one of `d²` sub-lattices; each
/// sub-lattice is tiled with `P × P` windows of lattice tokens. A shifted
/// layout first rolls every sub-lattice by `⌊P/2⌋` lattice steps (cyclic).
///
/// Window order: batch item, sub-lattice `(y mod d, x mod d)` row-major,
/// window row, window column. Tokens inside a window are row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowLayout {
    pub shape: Shape,
    pub window: usize,
    pub dilation: usize,
    /// Cyclic shift in lattice steps.
    pub shift: usize,
}

impl WindowLayout {
    pub fn new(shape: Shape, window: usize, dilation: usize, shifted: bool) -> Result<Self> {
        ensure!(window >= 1 && dilation >= 1, "window and dilation must be >= 1");
        let [_, _, h, w] = shape;
        let span = window * dilation;
        ensure!(
            h % span == 0 && w % span == 0,
            "window partition: {}x{} not divisible by window*dilation = {}",
            h,
            w,
            span
        );
        Ok(Self {
            shape,
            window,
            dilation,
            shift: if shifted { window / 2 } else { 0 },
        })
    }

    /// Equal partition of the same spatial extent; channel counts may differ.
    pub fn same_tokens(&self, other: &WindowLayout) -> bool {
        self.shape[0] == other.shape[0]
            && self.shape[2..] == other.shape[2..]
            && (self.window, self.dilation, self.shift) == (other.window, other.dilation, other.shift)
    }

    fn grid(&self) -> (usize, usize) {
        let span = self.window * self.dilation;
        (self.shape[2] / span, self.shape[3] / span)
    }

    pub fn windows_per_item(&self) -> usize {
        let (gh, gw) = self.grid();
        self.dilation * self.dilation * gh * gw
    }

    pub fn num_windows(&self) -> usize {
        self.shape[0] * self.windows_per_item()
    }

    pub fn tokens_per_window(&self) -> usize {
        self.window * self.window
    }

    /// Source pixel `(n, y, x)` of `token` in `window`.
    #[inline]
    pub fn pixel(&self, window: usize, token: usize) -> (usize, usize, usize) {
        let (gh, gw) = self.grid();
        let d = self.dilation;
        let p = self.window;
        let per_item = d * d * gh * gw;
        let n = window / per_item;
        let r = window % per_item;
        let (sub, cell) = (r / (gh * gw), r % (gh * gw));
        let (a, b) = (sub / d, sub % d);
        let (wy, wx) = (cell / gw, cell % gw);
        let (ty, tx) = (token / p, token % p);
        let (lh, lw) = (gh * p, gw * p);
        let ly = (wy * p + ty + self.shift) % lh;
        let lx = (wx * p + tx + self.shift) % lw;
        (n, ly * d + a, lx * d + b)
    }
}

/// Gathered windows: `num_windows × P² × channels`, channels fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowBatch<T> {
    pub layout: WindowLayout,
    pub channels: usize,
    pub tokens: Vec<T>,
}

impl<T: Scalar> WindowBatch<T> {
    pub fn window(&self, i: usize) -> &[T] {
        let len = self.layout.tokens_per_window() * self.channels;
        &self.tokens[i * len..(i + 1) * len]
    }
}

pub fn dilated_window_gather<T: Scalar>(input: &Tensor<T>, window: usize, dilation: usize, shifted: bool) -> Result<WindowBatch<T>> {
    let layout = WindowLayout::new(input.shape(), window, dilation, shifted)?;
    let c = input.channels();
    let tpw = layout.tokens_per_window();
    let mut tokens = Vec::with_capacity(input.len());
    for wi in 0..layout.num_windows() {
        for t in 0..tpw {
            let (n, y, x) = layout.pixel(wi, t);
            tokens.extend((0..c).map(|ci| input.get(n, ci, y, x)));
        }
    }
    Ok(WindowBatch {
        layout,
        channels: c,
        tokens,
    })
}

/// Inverse of [`dilated_window_gather`]; `channels` may differ from the
/// gathered input (attention outputs are scattered on the same layout).
pub fn dilated_window_scatter<T: Scalar>(batch: &WindowBatch<T>) -> Result<Tensor<T>> {
    let layout = batch.layout;
    let c = batch.channels;
    let tpw = layout.tokens_per_window();
    ensure!(
        batch.tokens.len() == layout.num_windows() * tpw * c,
        "window batch holds {} values, layout needs {}",
        batch.tokens.len(),
        layout.num_windows() * tpw * c
    );
    let [n, _, h, w] = layout.shape;
    let mut out = Tensor::zeros([n, c, h, w]);
    let mut src = batch.tokens.chunks_exact(c);
    for wi in 0..layout.num_windows() {
        for t in 0..tpw {
            let (ni, y, x) = layout.pixel(wi, t);
            let vals = src.next().expect("length checked above");
            for (ci, &v) in vals.iter().enumerate() {
                out.set(ni, ci, y, x, v);
            }
        }
    }
    Ok(out)
}
