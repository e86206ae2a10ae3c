#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

namespace trapkit {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major array of rank 1..4. Feature maps are [C, H, W]; conv weights [O, I, KH, KW].
template <typename T>
class BasicTensor {
 public:
  BasicTensor() = default;
  explicit BasicTensor(std::vector<int> shape, T fill = T{0});
  BasicTensor(std::vector<int> shape, std::vector<T> values);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // [C, H, W] access.
  T& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x]; }
  const T& at(int c, int y, int x) const { return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x]; }

  void fill(T v);
  bool all_finite() const;

  template <typename U>
  BasicTensor<U> cast() const {
    if (shape_.empty()) return {};
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

/// Zero-padded cross-correlation with odd square kernels and padding (k-1)/2.
template <typename T>
struct BasicConvLayer {
  BasicTensor<T> weights;  // [out, in, kh, kw]
  BasicTensor<T> bias;     // [out]
  int stride = 1;
  int padding = 1;

  BasicConvLayer() = default;
  BasicConvLayer(int in_ch, int out_ch, int kernel, int stride);

  int in_channels() const { return weights.dim(1); }
  int out_channels() const { return weights.dim(0); }
  int kernel_h() const { return weights.dim(2); }
  int kernel_w() const { return weights.dim(3); }
  void validate() const;

  template <typename U>
  BasicConvLayer<U> cast() const {
    BasicConvLayer<U> out;
    out.weights = weights.template cast<U>();
    out.bias = bias.template cast<U>();
    out.stride = stride;
    out.padding = padding;
    return out;
  }
  friend bool operator==(const BasicConvLayer&, const BasicConvLayer&) = default;
};

using ConvLayer = BasicConvLayer<float>;

int conv_output_size(int in, int kernel, int stride, int padding);

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicConvLayer<T>& layer);

/// Accumulates gradients of a conv layer. `grad_input` may be null when not needed.
template <typename T>
void conv2d_backward(const BasicTensor<T>& input, const BasicConvLayer<T>& layer, const BasicTensor<T>& grad_output,
                     BasicTensor<T>* grad_input, BasicConvLayer<T>& grad_layer);

template <typename T>
void relu_inplace(BasicTensor<T>& t);

/// Zeroes `grad` where the forward activation was not positive.
template <typename T>
void relu_backward_inplace(const BasicTensor<T>& activation, BasicTensor<T>& grad);

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
void split_channels(const BasicTensor<T>& t, int first, BasicTensor<T>& a, BasicTensor<T>& b);

/// Nearest-neighbour upsampling by `factor`, cropped to out_h x out_w.
template <typename T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& t, int factor, int out_h, int out_w);

template <typename T>
BasicTensor<T> upsample_nearest_backward(const BasicTensor<T>& grad, int factor, int in_h, int in_w);

/// Per-pixel softmax over channels of a [C, H, W] tensor.
template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& logits);

/// Mean over pixels of class_weight[target] * cross-entropy. Writes dLoss/dLogits to `grad` when non-null.
template <typename T>
T weighted_cross_entropy(const BasicTensor<T>& logits, std::span<const std::uint8_t> targets,
                         std::span<const double> class_weights, BasicTensor<T>* grad);

}  // namespace trapkit
