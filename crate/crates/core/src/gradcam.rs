//! Gradient-weighted class activation maps.
//!
//! Channel weights are the spatial means of the target-score gradients; the map
//! is the rectified weighted sum of feature maps. Display helpers upsample the
//! coarse map, colour it with a fixed jet-style ramp and blend it over a
//! grayscale image.

use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor_io::Tensor;

/// Feature maps `A^k` and gradients of the target score with respect to them,
/// both `[K, H, W]`.
#[derive(Debug, Clone)]
pub struct CamInput<T = f32> {
    activations: Tensor<T>,
    gradients: Tensor<T>,
    pub class_name: String,
}

impl<T: Scalar> CamInput<T> {
    pub fn new(activations: Tensor<T>, gradients: Tensor<T>, class_name: impl Into<String>) -> Result<Self> {
        if activations.ndim() != 3 {
            return Err(Error::Shape(format!(
                "activations must be [K, H, W], got {:?}",
                activations.dims()
            )));
        }
        if activations.dims() != gradients.dims() {
            return Err(Error::Shape(format!(
                "activation dims {:?} differ from gradient dims {:?}",
                activations.dims(),
                gradients.dims()
            )));
        }
        Ok(Self {
            activations,
            gradients,
            class_name: class_name.into(),
        })
    }

    pub fn activations(&self) -> &Tensor<T> {
        &self.activations
    }

    pub fn gradients(&self) -> &Tensor<T> {
        &self.gradients
    }

    /// `(K, H, W)`
    pub fn shape(&self) -> (usize, usize, usize) {
        let d = self.activations.dims();
        (d[0], d[1], d[2])
    }
}

/// Nonnegative localization map, `[H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cam<T = f32> {
    map: Tensor<T>,
}

impl<T: Scalar> Cam<T> {
    pub fn new(map: Tensor<T>) -> Result<Self> {
        if map.ndim() != 2 {
            return Err(Error::Shape(format!("cam must be [H, W], got {:?}", map.dims())));
        }
        if map.data().iter().any(|&v| v < T::zero()) {
            return Err(Error::Data("cam entries must be nonnegative".into()));
        }
        Ok(Self { map })
    }

    pub fn map(&self) -> &Tensor<T> {
        &self.map
    }

    pub fn height(&self) -> usize {
        self.map.dims()[0]
    }

    pub fn width(&self) -> usize {
        self.map.dims()[1]
    }

    /// Divided by its maximum; an all-zero map stays zero.
    pub fn normalized(&self) -> Cam<T> {
        let max = self.map.max();
        if max <= T::zero() {
            return self.clone();
        }
        let mut map = self.map.clone();
        map.data_mut().iter_mut().for_each(|v| *v = (*v / max).min(T::one()));
        Cam { map }
    }
}

/// `alpha_k = (1 / (H W)) * sum_ij dScore/dA^k_ij`
pub fn channel_weights<T: Scalar>(input: &CamInput<T>) -> Vec<T> {
    let (k, h, w) = input.shape();
    let z = (h * w) as f64;
    input
        .gradients
        .data()
        .chunks_exact(h * w)
        .take(k)
        .map(|plane| T::of(plane.iter().map(|g| g.f64()).sum::<f64>() / z))
        .collect()
}

pub fn compute_cam<T: Scalar>(input: &CamInput<T>) -> Cam<T> {
    let (_, h, w) = input.shape();
    let weights = channel_weights(input);
    let mut acc = vec![0.0f64; h * w];
    for (plane, alpha) in input.activations.data().chunks_exact(h * w).zip(&weights) {
        let alpha = alpha.f64();
        for (a, &v) in acc.iter_mut().zip(plane) {
            *a += alpha * v.f64();
        }
    }
    let map = Tensor::new(vec![h, w], acc.into_iter().map(|v| T::of(v.max(0.0))).collect())
        .expect("cam dims are valid");
    Cam { map }
}

#[inline]
fn lerp<T: Scalar>(a: T, b: T, t: T) -> T {
    a + t * (b - a)
}

/// Align-corners bilinear resize.
pub fn upsample_bilinear<T: Scalar>(c: &Cam<T>, out_h: usize, out_w: usize) -> Result<Cam<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape(format!("target size {out_h}x{out_w} has a zero axis")));
    }
    let (h, w) = (c.height(), c.width());
    let src = c.map.data();
    let coord = |i: usize, out: usize, input: usize| -> (usize, usize, T) {
        if out == 1 || input == 1 {
            return (0, 0, T::zero());
        }
        let pos = (i * (input - 1)) as f64 / (out - 1) as f64;
        let i0 = (pos.floor() as usize).min(input - 1);
        let i1 = (i0 + 1).min(input - 1);
        (i0, i1, T::of(pos - i0 as f64))
    };
    let mut data = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, ty) = coord(y, out_h, h);
        for x in 0..out_w {
            let (x0, x1, tx) = coord(x, out_w, w);
            let corners = [src[y0 * w + x0], src[y0 * w + x1], src[y1 * w + x0], src[y1 * w + x1]];
            let top = lerp(corners[0], corners[1], tx);
            let bottom = lerp(corners[2], corners[3], tx);
            let lo = corners.iter().copied().fold(T::infinity(), T::min);
            let hi = corners.iter().copied().fold(T::neg_infinity(), T::max);
            data.push(lerp(top, bottom, ty).max(lo).min(hi));
        }
    }
    Cam::new(Tensor::new(vec![out_h, out_w], data)?)
}

/// Stops of the jet-style ramp: position, then RGB in `[0, 1]`.
pub const COLORMAP_STOPS: [(f64, [f64; 3]); 5] = [
    (0.00, [0.0, 0.0, 0.5]),
    (0.25, [0.0, 0.5, 1.0]),
    (0.50, [0.0, 1.0, 0.0]),
    (0.75, [1.0, 1.0, 0.0]),
    (1.00, [1.0, 0.0, 0.0]),
];

/// Piecewise-linear colour for `v`, clamped to `[0, 1]`.
pub fn colormap<T: Scalar>(v: T) -> [T; 3] {
    let v = v.f64().clamp(0.0, 1.0);
    let seg = COLORMAP_STOPS
        .windows(2)
        .position(|w| v <= w[1].0)
        .unwrap_or(COLORMAP_STOPS.len() - 2);
    let (p0, c0) = COLORMAP_STOPS[seg];
    let (p1, c1) = COLORMAP_STOPS[seg + 1];
    let t = (v - p0) / (p1 - p0);
    std::array::from_fn(|ch| T::of(c0[ch] + t * (c1[ch] - c0[ch])))
}

/// Blends the colour-mapped, max-normalized cam over a grayscale `[H, W]` image:
/// `(1 - alpha) * gray + alpha * colormap(cam)`. Output is `[3, H, W]`.
pub fn overlay<T: Scalar>(base_gray: &Tensor<T>, c: &Cam<T>, alpha: T) -> Result<Tensor<T>> {
    if base_gray.ndim() != 2 || base_gray.dims() != c.map.dims() {
        return Err(Error::Shape(format!(
            "image dims {:?} do not match cam dims {:?}",
            base_gray.dims(),
            c.map.dims()
        )));
    }
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(Error::Data(format!("alpha {alpha} outside [0, 1]")));
    }
    if base_gray.data().iter().any(|&g| g < T::zero() || g > T::one()) {
        return Err(Error::Data("grayscale image must lie in [0, 1]".into()));
    }
    let norm = c.normalized();
    let plane = base_gray.len();
    let mut out = vec![T::zero(); 3 * plane];
    for (p, (&g, &v)) in base_gray.data().iter().zip(norm.map.data()).enumerate() {
        let rgb = colormap(v);
        for ch in 0..3 {
            let blended = (T::one() - alpha) * g + alpha * rgb[ch];
            out[ch * plane + p] = blended.max(T::zero()).min(T::one());
        }
    }
    let (h, w) = (c.height(), c.width());
    Tensor::new(vec![3, h, w], out)
}

/// Binary PPM (`P6`, maxval 255); each channel value `v` becomes `round(255 v)`.
pub fn write_ppm<T: Scalar>(rgb: &Tensor<T>, mut sink: impl Write) -> Result<()> {
    if rgb.ndim() != 3 || rgb.dims()[0] != 3 {
        return Err(Error::Shape(format!("ppm needs [3, H, W], got {:?}", rgb.dims())));
    }
    let (h, w) = (rgb.dims()[1], rgb.dims()[2]);
    let plane = h * w;
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    bytes.reserve(3 * plane);
    for p in 0..plane {
        for ch in 0..3 {
            let v = rgb.data()[ch * plane + p].f64().clamp(0.0, 1.0);
            bytes.push((255.0 * v).round() as u8);
        }
    }
    sink.write_all(&bytes).map_err(Error::io)
}
