#include "trapkit/fusenet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace trapkit {

namespace {

constexpr int kUpsample = 4;

std::uint64_t next_random(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double next_unit(std::uint64_t& state) { return static_cast<double>(next_random(state) >> 11) * 0x1.0p-53; }

std::size_t next_index(std::uint64_t& state, std::size_t n) {
  return static_cast<std::size_t>(next_unit(state) * static_cast<double>(n)) % n;
}

template <typename T>
struct BackboneOut {
  BasicTensor<T> a1, l1, l2;
};

template <typename T>
BackboneOut<T> run_backbone(const BasicBackbone<T>& bb, const BasicTensor<T>& x) {
  BackboneOut<T> o;
  o.a1 = conv2d(x, bb.conv1);
  relu_inplace(o.a1);
  o.l1 = conv2d(o.a1, bb.conv2);
  relu_inplace(o.l1);
  o.l2 = conv2d(o.l1, bb.conv3);
  relu_inplace(o.l2);
  return o;
}

template <typename T>
void backbone_backward(const BasicBackbone<T>& bb, const BasicTensor<T>& x, const BasicTensor<T>& a1,
                       const BasicTensor<T>& l1, const BasicTensor<T>& l2, BasicTensor<T> g, BasicBackbone<T>& grads) {
  relu_backward_inplace(l2, g);
  BasicTensor<T> g_l1;
  conv2d_backward(l1, bb.conv3, g, &g_l1, grads.conv3);
  relu_backward_inplace(l1, g_l1);
  BasicTensor<T> g_a1;
  conv2d_backward(a1, bb.conv2, g_l1, &g_a1, grads.conv2);
  relu_backward_inplace(a1, g_a1);
  conv2d_backward<T>(x, bb.conv1, g_a1, nullptr, grads.conv1);
}

template <typename T>
BasicConvLayer<T> zero_layer(const BasicConvLayer<T>& l) {
  BasicConvLayer<T> z;
  if (l.weights.rank() == 0) return z;
  z.weights = BasicTensor<T>(l.weights.shape());
  z.bias = BasicTensor<T>(l.bias.shape());
  z.stride = l.stride;
  z.padding = l.padding;
  return z;
}

}  // namespace

void ModelConfig::validate() const {
  if (num_classes < 1 || num_classes > 254) throw std::invalid_argument("model: num_classes out of range");
  if (feature_depth < 1) throw std::invalid_argument("model: feature_depth must be positive");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("model: learning_rate must be >= 0");
  if (epochs < 0) throw std::invalid_argument("model: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("model: batch_size must be positive");
  if (!(max_depth_mm > 0.0)) throw std::invalid_argument("model: max_depth_mm must be positive");
  if (static_cast<std::uint32_t>(weighting) > 2) throw std::invalid_argument("model: unknown class weighting");
}

template <typename T>
BasicBackbone<T>::BasicBackbone(int in_channels, int feature_depth)
    : conv1(in_channels, 8, 3, 1), conv2(8, kLevel1Depth, 3, 2), conv3(kLevel1Depth, feature_depth, 3, 2) {}

template <typename T>
BasicFusionLayer<T>::BasicFusionLayer(int level1_depth, int level2_depth)
    : level1(2 * level1_depth, level1_depth, 3, 1), level2(2 * level2_depth, level2_depth, 3, 1) {}

template <typename T>
BasicBackbone<T> init_depth_backbone(const BasicBackbone<T>& image_backbone) {
  BasicBackbone<T> out = image_backbone;  // deep copy: tensors own their storage
  const auto& src = image_backbone.conv1.weights;
  const int oc = src.dim(0), ic = src.dim(1), kh = src.dim(2), kw = src.dim(3);
  BasicTensor<T> w({oc, 1, kh, kw});
  for (int o = 0; o < oc; ++o) {
    for (int y = 0; y < kh; ++y) {
      for (int x = 0; x < kw; ++x) {
        T sum = 0;
        for (int i = 0; i < ic; ++i) sum += src[((static_cast<std::size_t>(o) * ic + i) * kh + y) * kw + x];
        w[(static_cast<std::size_t>(o) * kh + y) * kw + x] = sum / static_cast<T>(ic);
      }
    }
  }
  out.conv1.weights = std::move(w);
  return out;
}

template <typename T>
BasicTensor<T> fuse_features(const BasicTensor<T>& img_feats, const BasicTensor<T>& depth_feats,
                             const BasicConvLayer<T>& fusion) {
  if (img_feats.shape() != depth_feats.shape()) throw ShapeError("fuse_features: image and depth features differ in shape");
  if (fusion.in_channels() != 2 * fusion.out_channels()) throw ShapeError("fuse_features: fusion must map 2F -> F");
  if (img_feats.dim(0) != fusion.out_channels()) throw ShapeError("fuse_features: feature depth does not match fusion layer");
  return conv2d(concat_channels(img_feats, depth_feats), fusion);
}

NetInput make_input(const IntensityImage& intensity, const DepthMap* depth, const ModelConfig& cfg) {
  NetInput in;
  in.intensity = Tensor({1, intensity.height(), intensity.width()});
  for (std::size_t i = 0; i < intensity.size(); ++i) in.intensity[i] = static_cast<float>(intensity[i] / 65535.0);
  if (depth) {
    if (!depth->same_shape(intensity)) throw ShapeError("make_input: depth and intensity dimensions differ");
    Tensor d({1, depth->height(), depth->width()});
    for (std::size_t i = 0; i < depth->size(); ++i) {
      const double mm = (*depth)[i];
      d[i] = mm == 0 ? 0.0f : static_cast<float>(std::min(mm, cfg.max_depth_mm) / cfg.max_depth_mm);
    }
    in.depth = std::move(d);
  }
  return in;
}

TrainingSample make_sample(const IntensityImage& intensity, const DepthMap* depth,
                           const std::vector<LabeledInstance>& instances, const ModelConfig& cfg) {
  TrainingSample s;
  s.input = make_input(intensity, cfg.depth_enabled ? depth : nullptr, cfg);
  s.targets.assign(intensity.size(), 0);
  for (const auto& inst : instances) {
    if (!inst.mask.same_shape(intensity)) throw ShapeError("make_sample: mask and image dimensions differ");
    for (std::size_t i = 0; i < inst.mask.size(); ++i) {
      if (inst.mask[i]) s.targets[i] = static_cast<std::uint8_t>(inst.class_id + 1);
    }
  }
  return s;
}

void init_layer(ConvLayer& layer, std::uint64_t& state) {
  const int fan_in = layer.in_channels() * layer.kernel_h() * layer.kernel_w();
  const double bound = std::sqrt(6.0 / fan_in);
  for (auto& v : layer.weights.values()) v = static_cast<float>((2.0 * next_unit(state) - 1.0) * bound);
  layer.bias.fill(0.0f);
}

template <typename T>
BasicFuseNet<T>::BasicFuseNet(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  image_ = BasicBackbone<T>(1, cfg_.feature_depth);
  head_ = BasicConvLayer<T>(cfg_.feature_depth, cfg_.num_classes + 1, 3, 1);
  if (cfg_.depth_enabled) fusion_ = BasicFusionLayer<T>(BasicBackbone<T>::kLevel1Depth, cfg_.feature_depth);
  if constexpr (std::is_same_v<T, float>) {
    // Image backbone and head are drawn first so depth-on and depth-off models share them.
    std::uint64_t state = cfg_.seed;
    init_layer(image_.conv1, state);
    init_layer(image_.conv2, state);
    init_layer(image_.conv3, state);
    init_layer(head_, state);
    if (cfg_.depth_enabled) {
      depth_ = init_depth_backbone(image_);
      init_layer(fusion_.level1, state);
      init_layer(fusion_.level2, state);
    }
  } else if (cfg_.depth_enabled) {
    depth_ = init_depth_backbone(image_);
  }
}

template <typename T>
std::vector<BasicConvLayer<T>*> BasicFuseNet<T>::layers() {
  std::vector<BasicConvLayer<T>*> out{&image_.conv1, &image_.conv2, &image_.conv3};
  if (cfg_.depth_enabled) {
    out.insert(out.end(), {&depth_.conv1, &depth_.conv2, &depth_.conv3, &fusion_.level1, &fusion_.level2});
  }
  out.push_back(&head_);
  return out;
}

template <typename T>
std::vector<const BasicConvLayer<T>*> BasicFuseNet<T>::layers() const {
  auto mut = const_cast<BasicFuseNet*>(this)->layers();
  return {mut.begin(), mut.end()};
}

template <typename T>
typename BasicFuseNet<T>::Activations BasicFuseNet<T>::forward_all(const BasicNetInput<T>& in, bool all_levels) const {
  if (in.intensity.rank() != 3 || in.intensity.dim(0) != 1) throw ShapeError("forward: intensity must be [1,H,W]");
  const int h = in.intensity.dim(1);
  const int w = in.intensity.dim(2);
  Activations act;
  auto img = run_backbone(image_, in.intensity);
  act.img_a1 = std::move(img.a1);
  act.img_l1 = std::move(img.l1);
  act.img_l2 = std::move(img.l2);
  if (cfg_.depth_enabled) {
    if (!in.depth) throw std::invalid_argument("forward: depth input required when depth is enabled");
    if (in.depth->shape() != in.intensity.shape()) throw ShapeError("forward: depth and intensity shapes differ");
    auto dep = run_backbone(depth_, *in.depth);
    act.dep_a1 = std::move(dep.a1);
    act.dep_l1 = std::move(dep.l1);
    act.dep_l2 = std::move(dep.l2);
    act.cat_l2 = concat_channels(act.img_l2, act.dep_l2);
    act.fused_l2 = conv2d(act.cat_l2, fusion_.level2);
    if (all_levels) act.fused_l1 = fuse_features(act.img_l1, act.dep_l1, fusion_.level1);
    act.head_in = act.fused_l2;
  } else {
    act.head_in = act.img_l2;
  }
  act.head_out = conv2d(act.head_in, head_);
  act.logits = upsample_nearest(act.head_out, kUpsample, h, w);
  return act;
}

template <typename T>
void BasicFuseNet<T>::backward(const BasicNetInput<T>& in, const Activations& act, const BasicTensor<T>& grad_logits,
                               BasicFuseNet& grads) const {
  const BasicTensor<T> g_head_out =
      upsample_nearest_backward(grad_logits, kUpsample, act.head_out.dim(1), act.head_out.dim(2));
  BasicTensor<T> g_head_in;
  conv2d_backward(act.head_in, head_, g_head_out, &g_head_in, grads.head_);
  if (cfg_.depth_enabled) {
    BasicTensor<T> g_cat;
    conv2d_backward(act.cat_l2, fusion_.level2, g_head_in, &g_cat, grads.fusion_.level2);
    BasicTensor<T> g_img, g_dep;
    split_channels(g_cat, act.img_l2.dim(0), g_img, g_dep);
    backbone_backward(image_, in.intensity, act.img_a1, act.img_l1, act.img_l2, std::move(g_img), grads.image_);
    backbone_backward(depth_, *in.depth, act.dep_a1, act.dep_l1, act.dep_l2, std::move(g_dep), grads.depth_);
  } else {
    backbone_backward(image_, in.intensity, act.img_a1, act.img_l1, act.img_l2, std::move(g_head_in), grads.image_);
  }
}

template <typename T>
BasicFuseNet<T> BasicFuseNet<T>::zeros_like() const {
  BasicFuseNet z;
  z.cfg_ = cfg_;
  z.image_.conv1 = zero_layer(image_.conv1);
  z.image_.conv2 = zero_layer(image_.conv2);
  z.image_.conv3 = zero_layer(image_.conv3);
  z.depth_.conv1 = zero_layer(depth_.conv1);
  z.depth_.conv2 = zero_layer(depth_.conv2);
  z.depth_.conv3 = zero_layer(depth_.conv3);
  z.fusion_.level1 = zero_layer(fusion_.level1);
  z.fusion_.level2 = zero_layer(fusion_.level2);
  z.head_ = zero_layer(head_);
  return z;
}

template struct BasicBackbone<float>;
template struct BasicBackbone<double>;
template struct BasicFusionLayer<float>;
template struct BasicFusionLayer<double>;
template class BasicFuseNet<float>;
template class BasicFuseNet<double>;
template BasicBackbone<float> init_depth_backbone(const BasicBackbone<float>&);
template BasicBackbone<double> init_depth_backbone(const BasicBackbone<double>&);
template BasicTensor<float> fuse_features(const BasicTensor<float>&, const BasicTensor<float>&, const BasicConvLayer<float>&);
template BasicTensor<double> fuse_features(const BasicTensor<double>&, const BasicTensor<double>&, const BasicConvLayer<double>&);

const char* to_string(ClassWeighting w) {
  switch (w) {
    case ClassWeighting::InverseFrequency: return "inverse";
    case ClassWeighting::SqrtInverseFrequency: return "sqrt-inverse";
    case ClassWeighting::Uniform: return "uniform";
  }
  return "?";
}

ClassWeighting class_weighting_from_string(const std::string& s) {
  if (s == "inverse") return ClassWeighting::InverseFrequency;
  if (s == "sqrt-inverse") return ClassWeighting::SqrtInverseFrequency;
  if (s == "uniform") return ClassWeighting::Uniform;
  throw std::invalid_argument("unknown class weighting: " + s);
}

std::vector<double> class_weights(const std::vector<TrainingSample>& data, int channels, ClassWeighting scheme) {
  std::vector<double> counts(static_cast<std::size_t>(channels), 0.0);
  double total = 0.0;
  for (const auto& s : data) {
    for (auto t : s.targets) {
      if (t >= channels) throw std::invalid_argument("training target class out of range");
      counts[t] += 1.0;
      total += 1.0;
    }
  }
  std::vector<double> w(static_cast<std::size_t>(channels), 0.0);
  for (std::size_t c = 0; c < w.size(); ++c) {
    if (counts[c] == 0) continue;
    const double inv = total / (channels * counts[c]);
    switch (scheme) {
      case ClassWeighting::InverseFrequency: w[c] = inv; break;
      case ClassWeighting::SqrtInverseFrequency: w[c] = std::sqrt(inv); break;
      case ClassWeighting::Uniform: w[c] = 1.0; break;
    }
  }
  return w;
}

TrainResult train(FuseNet& model, const std::vector<TrainingSample>& data,
                  const std::function<void(int, double)>& on_epoch) {
  const ModelConfig& cfg = model.config();
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  TrainResult result;
  result.class_weights = class_weights(data, model.output_channels(), cfg.weighting);

  std::uint64_t shuffle_state = cfg.seed ^ 0x6a09e667f3bcc909ULL;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const float lr = static_cast<float>(cfg.learning_rate);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[next_index(shuffle_state, i)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      FuseNet grads = model.zeros_like();
      const float inv_batch = 1.0f / static_cast<float>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const TrainingSample& s = data[order[k]];
        const auto act = model.forward_all(s.input, false);
        Tensor g;
        epoch_loss += weighted_cross_entropy<float>(act.logits, s.targets, result.class_weights, &g);
        for (auto& v : g.values()) v *= inv_batch;
        model.backward(s.input, act, g, grads);
      }
      auto params = model.layers();
      auto gl = grads.layers();
      for (std::size_t l = 0; l < params.size(); ++l) {
        auto& pw = params[l]->weights;
        auto& pb = params[l]->bias;
        for (std::size_t i = 0; i < pw.size(); ++i) pw[i] -= lr * gl[l]->weights[i];
        for (std::size_t i = 0; i < pb.size(); ++i) pb[i] -= lr * gl[l]->bias[i];
      }
    }
    const double mean_loss = epoch_loss / static_cast<double>(data.size());
    result.epoch_losses.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  return result;
}

std::vector<LabeledInstance> instances_from_logits(const Tensor& logits, int min_area) {
  if (logits.rank() != 3) throw ShapeError("instances_from_logits: expected [C,H,W]");
  const int c = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  const Tensor prob = softmax_channels(logits);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<int> label(plane, 0);
  for (std::size_t i = 0; i < plane; ++i) {
    int best = 0;
    for (int k = 1; k < c; ++k) {
      if (prob[k * plane + i] > prob[static_cast<std::size_t>(best) * plane + i]) best = k;
    }
    label[i] = best;
  }
  std::vector<LabeledInstance> out;
  for (int k = 1; k < c; ++k) {
    BinaryMask m(w, h);
    bool any = false;
    for (std::size_t i = 0; i < plane; ++i) {
      if (label[i] == k) {
        m[i] = 1;
        any = true;
      }
    }
    if (!any) continue;
    for (auto& comp : connected_components(m)) {
      std::size_t area = 0;
      double psum = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        if (!comp[i]) continue;
        ++area;
        psum += prob[k * plane + i];
      }
      if (area < static_cast<std::size_t>(min_area)) continue;
      LabeledInstance inst;
      inst.class_id = k - 1;
      inst.bbox = bbox_from_mask(comp);
      inst.mask = std::move(comp);
      inst.score = std::clamp(psum / static_cast<double>(area), 0.0, 1.0);
      out.push_back(std::move(inst));
    }
  }
  return out;
}

std::vector<LabeledInstance> predict_instances(const FuseNet& model, const IntensityImage& intensity,
                                               const DepthMap* depth, int min_area) {
  const NetInput in = make_input(intensity, model.config().depth_enabled ? depth : nullptr, model.config());
  return instances_from_logits(model.forward_all(in, false).logits, min_area);
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
  return std::abs(analytic - numeric) / denom;
}

namespace {

using DNet = BasicFuseNet<double>;

std::vector<std::uint8_t> relu_pattern(const DNet::Activations& a) {
  std::vector<std::uint8_t> bits;
  for (const auto* t : {&a.img_a1, &a.img_l1, &a.img_l2, &a.dep_a1, &a.dep_l1, &a.dep_l2}) {
    for (double v : t->values()) bits.push_back(v > 0.0 ? 1 : 0);
  }
  return bits;
}

struct ParamRef {
  BasicTensor<double>* value;
  const BasicTensor<double>* grad;
};

}  // namespace

GradCheckResult grad_check(const FuseNet& model, const TrainingSample& sample, const std::vector<double>& class_weights,
                           double epsilon, int num_params, std::uint64_t seed) {
  DNet net = model.cast<double>();
  BasicNetInput<double> in;
  in.intensity = sample.input.intensity.cast<double>();
  if (sample.input.depth) in.depth = sample.input.depth->cast<double>();

  const auto base = net.forward_all(in, false);
  BasicTensor<double> g_logits;
  weighted_cross_entropy<double>(base.logits, sample.targets, class_weights, &g_logits);
  DNet grads = net.zeros_like();
  net.backward(in, base, g_logits, grads);
  const auto base_pattern = relu_pattern(base);

  std::vector<ParamRef> params;
  auto layers = net.layers();
  auto glayers = grads.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    params.push_back({&layers[l]->weights, &glayers[l]->weights});
    params.push_back({&layers[l]->bias, &glayers[l]->bias});
  }

  auto loss_at = [&](std::vector<std::uint8_t>& pattern) {
    const auto act = net.forward_all(in, false);
    pattern = relu_pattern(act);
    return weighted_cross_entropy<double>(act.logits, sample.targets, class_weights, nullptr);
  };

  GradCheckResult r;
  std::uint64_t state = seed;
  for (int i = 0; i < num_params; ++i) {
    const ParamRef& p = params[static_cast<std::size_t>(i) % params.size()];
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const std::size_t idx = next_index(state, p.value->size());
      double& v = (*p.value)[idx];
      const double saved = v;
      std::vector<std::uint8_t> pat_plus, pat_minus;
      v = saved + epsilon;
      const double lp = loss_at(pat_plus);
      v = saved - epsilon;
      const double lm = loss_at(pat_minus);
      v = saved;
      if (pat_plus != base_pattern || pat_minus != base_pattern) {
        ++r.skipped_at_kinks;
        continue;
      }
      const double numeric = (lp - lm) / (2.0 * epsilon);
      const double analytic = (*p.grad)[idx];
      r.max_relative_error = std::max(r.max_relative_error, relative_error(analytic, numeric));
      r.max_abs_analytic = std::max(r.max_abs_analytic, std::abs(analytic));
      r.max_abs_numeric = std::max(r.max_abs_numeric, std::abs(numeric));
      ++r.checked;
      break;
    }
  }
  return r;
}

GradCheckResult grad_check_conv(const ConvLayer& layer, const Tensor& input, double epsilon, int num_params,
                                std::uint64_t seed) {
  BasicConvLayer<double> l = layer.cast<double>();
  const BasicTensor<double> x = input.cast<double>();
  BasicTensor<double> out = conv2d(x, l);
  std::uint64_t state = seed ^ 0xa5a5a5a5ULL;
  BasicTensor<double> r(out.shape());
  for (auto& v : r.values()) v = 2.0 * next_unit(state) - 1.0;
  auto loss = [&] {
    const auto o = conv2d(x, l);
    double s = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) s += r[i] * o[i];
    return s;
  };
  BasicConvLayer<double> g = l;
  g.weights.fill(0.0);
  g.bias.fill(0.0);
  conv2d_backward<double>(x, l, r, nullptr, g);

  GradCheckResult res;
  for (int i = 0; i < num_params; ++i) {
    const bool bias = i % 2 == 1;
    BasicTensor<double>& p = bias ? l.bias : l.weights;
    const BasicTensor<double>& gp = bias ? g.bias : g.weights;
    const std::size_t idx = next_index(state, p.size());
    const double saved = p[idx];
    p[idx] = saved + epsilon;
    const double lp = loss();
    p[idx] = saved - epsilon;
    const double lm = loss();
    p[idx] = saved;
    const double numeric = (lp - lm) / (2.0 * epsilon);
    res.max_relative_error = std::max(res.max_relative_error, relative_error(gp[idx], numeric));
    res.max_abs_analytic = std::max(res.max_abs_analytic, std::abs(gp[idx]));
    res.max_abs_numeric = std::max(res.max_abs_numeric, std::abs(numeric));
    ++res.checked;
  }
  return res;
}

namespace {

constexpr char kMagic[4] = {'T', 'K', 'F', 'N'};
constexpr std::uint32_t kModelVersion = 1;

void put_u32(std::ostream& o, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) o.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::ostream& o, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) o.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::ostream& o, double v) { put_u64(o, std::bit_cast<std::uint64_t>(v)); }
void put_f32(std::ostream& o, float v) { put_u32(o, std::bit_cast<std::uint32_t>(v)); }

std::uint64_t get_le(std::istream& in, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == EOF) throw std::runtime_error("model file truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}
std::uint32_t get_u32(std::istream& in) { return static_cast<std::uint32_t>(get_le(in, 4)); }
std::uint64_t get_u64(std::istream& in) { return get_le(in, 8); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }
float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }

void put_tensor(std::ostream& o, const Tensor& t) {
  put_u32(o, static_cast<std::uint32_t>(t.rank()));
  for (int d : t.shape()) put_u32(o, static_cast<std::uint32_t>(d));
  for (float v : t.values()) put_f32(o, v);
}

Tensor get_tensor(std::istream& in) {
  const std::uint32_t rank = get_u32(in);
  if (rank < 1 || rank > 4) throw std::runtime_error("model file: bad tensor rank");
  std::vector<int> shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = static_cast<int>(get_u32(in));
    if (d < 1 || d > (1 << 20)) throw std::runtime_error("model file: bad tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  std::vector<float> values(n);
  for (auto& v : values) v = get_f32(in);
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace

void save_model(const FuseNet& model, const std::filesystem::path& path) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw std::runtime_error("cannot open for writing: " + path.string());
  const ModelConfig& c = model.config();
  o.write(kMagic, 4);
  put_u32(o, kModelVersion);
  put_u32(o, static_cast<std::uint32_t>(c.num_classes));
  put_u32(o, static_cast<std::uint32_t>(c.feature_depth));
  put_f64(o, c.learning_rate);
  put_u32(o, static_cast<std::uint32_t>(c.epochs));
  put_u32(o, static_cast<std::uint32_t>(c.batch_size));
  put_u64(o, c.seed);
  put_u32(o, c.depth_enabled ? 1u : 0u);
  put_f64(o, c.max_depth_mm);
  put_u32(o, static_cast<std::uint32_t>(c.weighting));
  const auto layers = model.layers();
  put_u32(o, static_cast<std::uint32_t>(layers.size()));
  for (const auto* l : layers) {
    put_u32(o, static_cast<std::uint32_t>(l->stride));
    put_tensor(o, l->weights);
    put_tensor(o, l->bias);
  }
  if (!o) throw std::runtime_error("write failed: " + path.string());
}

FuseNet load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not a trapkit model file: " + path.string());
  const std::uint32_t version = get_u32(in);
  if (version != kModelVersion) throw std::runtime_error("unsupported model version " + std::to_string(version));
  ModelConfig c;
  c.num_classes = static_cast<int>(get_u32(in));
  c.feature_depth = static_cast<int>(get_u32(in));
  c.learning_rate = get_f64(in);
  c.epochs = static_cast<int>(get_u32(in));
  c.batch_size = static_cast<int>(get_u32(in));
  c.seed = get_u64(in);
  c.depth_enabled = get_u32(in) != 0;
  c.max_depth_mm = get_f64(in);
  c.weighting = static_cast<ClassWeighting>(get_u32(in));
  FuseNet model(c);
  auto layers = model.layers();
  if (get_u32(in) != layers.size()) throw std::runtime_error("model file: layer count mismatch");
  for (auto* l : layers) {
    const int stride = static_cast<int>(get_u32(in));
    Tensor w = get_tensor(in);
    Tensor b = get_tensor(in);
    if (stride != l->stride || w.shape() != l->weights.shape() || b.shape() != l->bias.shape())
      throw std::runtime_error("model file: layer shape mismatch");
    l->weights = std::move(w);
    l->bias = std::move(b);
  }
  return model;
}

}  // namespace trapkit
