#include "trapkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

namespace trapkit {

namespace {

std::size_t shape_product(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 4) throw ShapeError("tensor rank must be 1..4");
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 1) throw ShapeError("tensor dimensions must be >= 1");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Output columns [first, last) whose input column ox*s + kx - p lies inside [0, w).
std::pair<int, int> valid_columns(int w, int ow, int kx, int s, int p) {
  const int first = std::max(0, -floor_div(kx - p, s));
  const int last = std::min(ow, floor_div(w - 1 + p - kx, s) + 1);
  return {first, std::max(first, last)};
}

template <typename T>
void require_chw(const BasicTensor<T>& t, const char* what) {
  if (t.rank() != 3) throw ShapeError(std::string(what) + ": expected a [C,H,W] tensor");
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(std::vector<int> shape, T fill) : shape_(std::move(shape)) {
  data_.assign(shape_product(shape_), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(std::vector<int> shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_product(shape_)) throw ShapeError("tensor value count does not match shape");
}

template <typename T>
void BasicTensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
BasicConvLayer<T>::BasicConvLayer(int in_ch, int out_ch, int kernel, int stride_)
    : weights({out_ch, in_ch, kernel, kernel}), bias({out_ch}), stride(stride_), padding((kernel - 1) / 2) {
  validate();
}

template <typename T>
void BasicConvLayer<T>::validate() const {
  if (weights.rank() != 4) throw ShapeError("conv: weights must be [out,in,kh,kw]");
  if (bias.rank() != 1 || bias.dim(0) != weights.dim(0)) throw ShapeError("conv: bias must be [out]");
  if (weights.dim(2) % 2 == 0 || weights.dim(3) % 2 == 0) throw ShapeError("conv: kernel sizes must be odd");
  if (stride < 1) throw ShapeError("conv: stride must be >= 1");
  if (padding != (weights.dim(2) - 1) / 2 || weights.dim(2) != weights.dim(3))
    throw ShapeError("conv: padding must be (k-1)/2 for square kernels");
}

int conv_output_size(int in, int kernel, int stride, int padding) { return (in + 2 * padding - kernel) / stride + 1; }

namespace {

// Unfolds the input into rows indexed by (ic, ky, kx), each holding oh*ow samples (zero outside).
template <typename T>
std::vector<T> im2col(const BasicTensor<T>& input, int k, int s, int p, int oh, int ow) {
  const int in_ch = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t n = static_cast<std::size_t>(oh) * ow;
  std::vector<T> cols(static_cast<std::size_t>(in_ch) * k * k * n, T{0});
  T* dst = cols.data();
  for (int ic = 0; ic < in_ch; ++ic) {
    const T* in = &input.at(ic, 0, 0);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, dst += n) {
        const auto [ox0, ox1] = valid_columns(w, ow, kx, s, p);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s + ky - p;
          if (iy < 0 || iy >= h) continue;
          const T* row = in + static_cast<std::size_t>(iy) * w + (kx - p);
          T* drow = dst + static_cast<std::size_t>(oy) * ow;
          for (int ox = ox0; ox < ox1; ++ox) drow[ox] = row[ox * s];
        }
      }
    }
  }
  return cols;
}

template <typename T>
void col2im_add(const std::vector<T>& cols, BasicTensor<T>& grad_input, int k, int s, int p, int oh, int ow) {
  const int in_ch = grad_input.dim(0), h = grad_input.dim(1), w = grad_input.dim(2);
  const std::size_t n = static_cast<std::size_t>(oh) * ow;
  const T* src = cols.data();
  for (int ic = 0; ic < in_ch; ++ic) {
    T* gin = &grad_input.at(ic, 0, 0);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, src += n) {
        const auto [ox0, ox1] = valid_columns(w, ow, kx, s, p);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s + ky - p;
          if (iy < 0 || iy >= h) continue;
          T* row = gin + static_cast<std::size_t>(iy) * w + (kx - p);
          const T* srow = src + static_cast<std::size_t>(oy) * ow;
          for (int ox = ox0; ox < ox1; ++ox) row[ox * s] += srow[ox];
        }
      }
    }
  }
}

// Fixed-order blocked dot product; the lane split lets the compiler vectorise deterministically.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t kLanes = 8;
  T acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) acc[j] += a[i + j] * b[i + j];
  }
  T sum = 0;
  for (; i < n; ++i) sum += a[i] * b[i];
  for (std::size_t j = 0; j < kLanes; ++j) sum += acc[j];
  return sum;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicConvLayer<T>& layer) {
  require_chw(input, "conv2d");
  layer.validate();
  const int in_ch = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (in_ch != layer.in_channels()) throw ShapeError("conv2d: input channels do not match layer");
  const int out_ch = layer.out_channels();
  const int k = layer.kernel_h();
  const int s = layer.stride;
  const int p = layer.padding;
  const int oh = conv_output_size(h, k, s, p);
  const int ow = conv_output_size(w, k, s, p);
  const std::size_t n = static_cast<std::size_t>(oh) * ow;
  const std::size_t rows = static_cast<std::size_t>(in_ch) * k * k;
  const std::vector<T> cols = im2col(input, k, s, p, oh, ow);
  BasicTensor<T> out({out_ch, oh, ow});
  for (int oc = 0; oc < out_ch; ++oc) {
    T* o = &out.at(oc, 0, 0);
    std::fill(o, o + n, layer.bias[static_cast<std::size_t>(oc)]);
    const T* wrow = layer.weights.data() + static_cast<std::size_t>(oc) * rows;
    for (std::size_t r = 0; r < rows; ++r) axpy(wrow[r], cols.data() + r * n, o, n);
  }
  return out;
}

template <typename T>
void conv2d_backward(const BasicTensor<T>& input, const BasicConvLayer<T>& layer, const BasicTensor<T>& grad_output,
                     BasicTensor<T>* grad_input, BasicConvLayer<T>& grad_layer) {
  require_chw(input, "conv2d_backward");
  const int in_ch = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int out_ch = layer.out_channels();
  const int k = layer.kernel_h();
  const int s = layer.stride;
  const int p = layer.padding;
  const int oh = conv_output_size(h, k, s, p);
  const int ow = conv_output_size(w, k, s, p);
  if (in_ch != layer.in_channels()) throw ShapeError("conv2d_backward: input channels do not match layer");
  if (grad_output.rank() != 3 || grad_output.dim(0) != out_ch || grad_output.dim(1) != oh || grad_output.dim(2) != ow)
    throw ShapeError("conv2d_backward: gradient shape mismatch");
  if (grad_layer.weights.shape() != layer.weights.shape() || grad_layer.bias.shape() != layer.bias.shape())
    throw ShapeError("conv2d_backward: gradient layer shape mismatch");
  if (grad_input && grad_input->shape() != input.shape()) *grad_input = BasicTensor<T>(input.shape());

  const std::size_t n = static_cast<std::size_t>(oh) * ow;
  const std::size_t rows = static_cast<std::size_t>(in_ch) * k * k;
  const std::vector<T> cols = im2col(input, k, s, p, oh, ow);
  std::vector<T> gcols;
  if (grad_input) gcols.assign(rows * n, T{0});
  for (int oc = 0; oc < out_ch; ++oc) {
    const T* g = &grad_output.at(oc, 0, 0);
    T bsum = 0;
    for (std::size_t i = 0; i < n; ++i) bsum += g[i];
    grad_layer.bias[static_cast<std::size_t>(oc)] += bsum;
    const T* wrow = layer.weights.data() + static_cast<std::size_t>(oc) * rows;
    T* gwrow = grad_layer.weights.data() + static_cast<std::size_t>(oc) * rows;
    for (std::size_t r = 0; r < rows; ++r) {
      gwrow[r] += dot(g, cols.data() + r * n, n);
      if (grad_input) axpy(wrow[r], g, gcols.data() + r * n, n);
    }
  }
  if (grad_input) col2im_add(gcols, *grad_input, k, s, p, oh, ow);
}

template <typename T>
void relu_inplace(BasicTensor<T>& t) {
  for (auto& v : t.values()) v = v > T{0} ? v : T{0};
}

template <typename T>
void relu_backward_inplace(const BasicTensor<T>& activation, BasicTensor<T>& grad) {
  if (activation.shape() != grad.shape()) throw ShapeError("relu_backward: shape mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(activation[i] > T{0})) grad[i] = T{0};
  }
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_chw(a, "concat_channels");
  require_chw(b, "concat_channels");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) throw ShapeError("concat_channels: spatial dimensions differ");
  BasicTensor<T> out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  return out;
}

template <typename T>
void split_channels(const BasicTensor<T>& t, int first, BasicTensor<T>& a, BasicTensor<T>& b) {
  require_chw(t, "split_channels");
  if (first < 1 || first >= t.dim(0)) throw ShapeError("split_channels: bad split point");
  a = BasicTensor<T>({first, t.dim(1), t.dim(2)});
  b = BasicTensor<T>({t.dim(0) - first, t.dim(1), t.dim(2)});
  std::copy(t.data(), t.data() + a.size(), a.data());
  std::copy(t.data() + a.size(), t.data() + t.size(), b.data());
}

template <typename T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& t, int factor, int out_h, int out_w) {
  require_chw(t, "upsample_nearest");
  if (factor < 1 || out_h > t.dim(1) * factor || out_w > t.dim(2) * factor) throw ShapeError("upsample_nearest: bad output size");
  BasicTensor<T> out({t.dim(0), out_h, out_w});
  for (int c = 0; c < t.dim(0); ++c)
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x) out.at(c, y, x) = t.at(c, y / factor, x / factor);
  return out;
}

template <typename T>
BasicTensor<T> upsample_nearest_backward(const BasicTensor<T>& grad, int factor, int in_h, int in_w) {
  require_chw(grad, "upsample_nearest_backward");
  BasicTensor<T> out({grad.dim(0), in_h, in_w});
  for (int c = 0; c < grad.dim(0); ++c)
    for (int y = 0; y < grad.dim(1); ++y)
      for (int x = 0; x < grad.dim(2); ++x) out.at(c, y / factor, x / factor) += grad.at(c, y, x);
  return out;
}

template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& logits) {
  require_chw(logits, "softmax_channels");
  const int c = logits.dim(0);
  const std::size_t plane = static_cast<std::size_t>(logits.dim(1)) * logits.dim(2);
  BasicTensor<T> out(logits.shape());
  for (std::size_t i = 0; i < plane; ++i) {
    T mx = logits[i];
    for (int k = 1; k < c; ++k) mx = std::max(mx, logits[k * plane + i]);
    T sum = 0;
    for (int k = 0; k < c; ++k) {
      const T e = std::exp(logits[k * plane + i] - mx);
      out[k * plane + i] = e;
      sum += e;
    }
    for (int k = 0; k < c; ++k) out[k * plane + i] /= sum;
  }
  return out;
}

template <typename T>
T weighted_cross_entropy(const BasicTensor<T>& logits, std::span<const std::uint8_t> targets,
                         std::span<const double> class_weights, BasicTensor<T>* grad) {
  require_chw(logits, "weighted_cross_entropy");
  const int c = logits.dim(0);
  const std::size_t plane = static_cast<std::size_t>(logits.dim(1)) * logits.dim(2);
  if (targets.size() != plane) throw ShapeError("weighted_cross_entropy: target count mismatch");
  if (class_weights.size() != static_cast<std::size_t>(c)) throw ShapeError("weighted_cross_entropy: weight count mismatch");
  const BasicTensor<T> prob = softmax_channels(logits);
  if (grad) *grad = BasicTensor<T>(logits.shape());
  const T inv_n = T{1} / static_cast<T>(plane);
  T loss = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    const int y = targets[i];
    if (y >= c) throw ShapeError("weighted_cross_entropy: target class out of range");
    const T wy = static_cast<T>(class_weights[static_cast<std::size_t>(y)]);
    const T py = std::max(prob[y * plane + i], std::numeric_limits<T>::min());
    loss -= wy * std::log(py);
    if (grad) {
      for (int k = 0; k < c; ++k) (*grad)[k * plane + i] = wy * inv_n * (prob[k * plane + i] - (k == y ? T{1} : T{0}));
    }
  }
  return loss * inv_n;
}

#define TRAPKIT_INSTANTIATE(T)                                                                                      \
  template class BasicTensor<T>;                                                                                    \
  template struct BasicConvLayer<T>;                                                                                \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicConvLayer<T>&);                                  \
  template void conv2d_backward(const BasicTensor<T>&, const BasicConvLayer<T>&, const BasicTensor<T>&,             \
                                BasicTensor<T>*, BasicConvLayer<T>&);                                               \
  template void relu_inplace(BasicTensor<T>&);                                                                      \
  template void relu_backward_inplace(const BasicTensor<T>&, BasicTensor<T>&);                                      \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template void split_channels(const BasicTensor<T>&, int, BasicTensor<T>&, BasicTensor<T>&);                       \
  template BasicTensor<T> upsample_nearest(const BasicTensor<T>&, int, int, int);                                   \
  template BasicTensor<T> upsample_nearest_backward(const BasicTensor<T>&, int, int, int);                          \
  template BasicTensor<T> softmax_channels(const BasicTensor<T>&);                                                  \
  template T weighted_cross_entropy(const BasicTensor<T>&, std::span<const std::uint8_t>, std::span<const double>, \
                                    BasicTensor<T>*);

TRAPKIT_INSTANTIATE(float)
TRAPKIT_INSTANTIATE(double)

#undef TRAPKIT_INSTANTIATE

}  // namespace trapkit
