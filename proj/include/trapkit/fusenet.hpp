#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "trapkit/imaging.hpp"
#include "trapkit/tensor.hpp"

namespace trapkit {

/// conv(in->8, s1) -> relu -> conv(8->16, s2) -> relu [level 1] -> conv(16->F, s2) -> relu [level 2]
template <typename T>
struct BasicBackbone {
  BasicConvLayer<T> conv1;
  BasicConvLayer<T> conv2;
  BasicConvLayer<T> conv3;

  static constexpr int kLevel1Depth = 16;

  BasicBackbone() = default;
  BasicBackbone(int in_channels, int feature_depth);

  int in_channels() const { return conv1.in_channels(); }
  int feature_depth() const { return conv3.out_channels(); }

  template <typename U>
  BasicBackbone<U> cast() const {
    BasicBackbone<U> out;
    out.conv1 = conv1.template cast<U>();
    out.conv2 = conv2.template cast<U>();
    out.conv3 = conv3.template cast<U>();
    return out;
  }
  friend bool operator==(const BasicBackbone&, const BasicBackbone&) = default;
};

/// Per pyramid level, a 3x3 conv that maps 2F concatenated channels back to F. No activation.
template <typename T>
struct BasicFusionLayer {
  BasicConvLayer<T> level1;
  BasicConvLayer<T> level2;

  BasicFusionLayer() = default;
  BasicFusionLayer(int level1_depth, int level2_depth);

  template <typename U>
  BasicFusionLayer<U> cast() const {
    BasicFusionLayer<U> out;
    out.level1 = level1.template cast<U>();
    out.level2 = level2.template cast<U>();
    return out;
  }
  friend bool operator==(const BasicFusionLayer&, const BasicFusionLayer&) = default;
};

using Backbone = BasicBackbone<float>;
using FusionLayer = BasicFusionLayer<float>;

/// Per-class loss weight as a function of the class's pixel frequency.
enum class ClassWeighting : std::uint32_t {
  InverseFrequency = 0,      // total / (classes * count)
  SqrtInverseFrequency = 1,  // square root of the above
  Uniform = 2,
};

const char* to_string(ClassWeighting w);
ClassWeighting class_weighting_from_string(const std::string& s);

struct ModelConfig {
  int num_classes = 4;  // foreground classes; the head emits num_classes + 1 channels
  int feature_depth = 16;
  double learning_rate = 0.1;
  int epochs = 40;
  int batch_size = 4;
  std::uint64_t seed = 1;
  bool depth_enabled = true;
  double max_depth_mm = 20000.0;
  ClassWeighting weighting = ClassWeighting::SqrtInverseFrequency;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Copies the image backbone, replacing the first-layer weights with their mean over the
/// input-channel dimension so the copy accepts a single depth channel.
template <typename T>
BasicBackbone<T> init_depth_backbone(const BasicBackbone<T>& image_backbone);

/// Concatenates [img | depth] along channels and applies the level's fusion conv.
template <typename T>
BasicTensor<T> fuse_features(const BasicTensor<T>& img_feats, const BasicTensor<T>& depth_feats,
                             const BasicConvLayer<T>& fusion);

/// Network input for one frame: [1,H,W] intensity in [0,1], optional [1,H,W] depth in [0,1].
template <typename T>
struct BasicNetInput {
  BasicTensor<T> intensity;
  std::optional<BasicTensor<T>> depth;
};

using NetInput = BasicNetInput<float>;

NetInput make_input(const IntensityImage& intensity, const DepthMap* depth, const ModelConfig& cfg);

/// Twin-backbone dense segmentation network. With depth disabled the image level-2 features
/// feed the head directly.
template <typename T>
class BasicFuseNet {
 public:
  struct Activations {
    BasicTensor<T> img_a1, img_l1, img_l2;
    BasicTensor<T> dep_a1, dep_l1, dep_l2;
    BasicTensor<T> cat_l2;
    BasicTensor<T> fused_l1, fused_l2;
    BasicTensor<T> head_in;
    BasicTensor<T> head_out;  // [C+1, ceil(H/4), ceil(W/4)]
    BasicTensor<T> logits;    // [C+1, H, W]
  };

  BasicFuseNet() = default;
  explicit BasicFuseNet(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& config() { return cfg_; }
  int output_channels() const { return cfg_.num_classes + 1; }

  BasicBackbone<T>& image_backbone() { return image_; }
  const BasicBackbone<T>& image_backbone() const { return image_; }
  BasicBackbone<T>& depth_backbone() { return depth_; }
  const BasicBackbone<T>& depth_backbone() const { return depth_; }
  BasicFusionLayer<T>& fusion() { return fusion_; }
  const BasicFusionLayer<T>& fusion() const { return fusion_; }
  BasicConvLayer<T>& head() { return head_; }
  const BasicConvLayer<T>& head() const { return head_; }

  /// Trainable layers in declaration order (depth backbone and fusion only when depth is enabled).
  std::vector<BasicConvLayer<T>*> layers();
  std::vector<const BasicConvLayer<T>*> layers() const;

  /// Full forward pass. `all_levels` also computes the level-1 fusion, which the head does not consume.
  Activations forward_all(const BasicNetInput<T>& in, bool all_levels = true) const;
  BasicTensor<T> forward(const BasicNetInput<T>& in) const { return forward_all(in, true).logits; }

  /// Backpropagates dLoss/dLogits, accumulating into `grads` (same architecture, zero-initialised by caller).
  void backward(const BasicNetInput<T>& in, const Activations& act, const BasicTensor<T>& grad_logits,
                BasicFuseNet& grads) const;

  BasicFuseNet zeros_like() const;

  template <typename U>
  BasicFuseNet<U> cast() const {
    BasicFuseNet<U> out;
    out.config() = cfg_;
    out.image_backbone() = image_.template cast<U>();
    out.depth_backbone() = depth_.template cast<U>();
    out.fusion() = fusion_.template cast<U>();
    out.head() = head_.template cast<U>();
    return out;
  }

  friend bool operator==(const BasicFuseNet&, const BasicFuseNet&) = default;

 private:
  ModelConfig cfg_;
  BasicBackbone<T> image_;
  BasicBackbone<T> depth_;
  BasicFusionLayer<T> fusion_;
  BasicConvLayer<T> head_;
};

using FuseNet = BasicFuseNet<float>;

/// Seeded uniform init in +-sqrt(6 / (in_ch * kh * kw)), zero bias.
void init_layer(ConvLayer& layer, std::uint64_t& state);

struct TrainingSample {
  NetInput input;
  std::vector<std::uint8_t> targets;  // per-pixel class, 0 = background
};

/// Dense targets from instance masks (later instances overwrite earlier ones).
TrainingSample make_sample(const IntensityImage& intensity, const DepthMap* depth,
                           const std::vector<LabeledInstance>& instances, const ModelConfig& cfg);

struct TrainResult {
  std::vector<double> epoch_losses;
  std::vector<double> class_weights;
};

/// Class frequencies are counted over all target pixels; absent classes get weight 0.
std::vector<double> class_weights(const std::vector<TrainingSample>& data, int channels, ClassWeighting scheme);

/// Plain minibatch SGD on pixel-weighted cross-entropy. Deterministic for a fixed seed.
TrainResult train(FuseNet& model, const std::vector<TrainingSample>& data,
                  const std::function<void(int epoch, double loss)>& on_epoch = {});

/// Argmax class map -> per-class 8-connected components (>= min_area px). Score is the mean
/// class probability over the component.
std::vector<LabeledInstance> instances_from_logits(const Tensor& logits, int min_area = 20);

std::vector<LabeledInstance> predict_instances(const FuseNet& model, const IntensityImage& intensity,
                                               const DepthMap* depth, int min_area = 20);

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_abs_analytic = 0.0;
  double max_abs_numeric = 0.0;
  int checked = 0;
  int skipped_at_kinks = 0;
};

/// Central finite differences in double precision against the analytic backward pass of the
/// full model. Parameters are sampled round-robin over every trainable tensor; samples whose
/// perturbation flips any ReLU are redrawn.
GradCheckResult grad_check(const FuseNet& model, const TrainingSample& sample, const std::vector<double>& class_weights,
                           double epsilon = 1e-3, int num_params = 200, std::uint64_t seed = 7);

/// Same check for a single linear conv layer under the loss sum(r * conv(x)).
GradCheckResult grad_check_conv(const ConvLayer& layer, const Tensor& input, double epsilon = 1e-3,
                                int num_params = 200, std::uint64_t seed = 7);

/// Relative error convention used by the checks.
double relative_error(double analytic, double numeric);

void save_model(const FuseNet& model, const std::filesystem::path& path);
FuseNet load_model(const std::filesystem::path& path);

}  // namespace trapkit
