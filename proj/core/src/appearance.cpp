#include "hart/appearance.hpp"

#include <cmath>
#include <stdexcept>

namespace hart {

V1Preset v1_preset_from_string(const std::string& s) {
  if (s == "small") return V1Preset::kSmall;
  if (s == "kitti_like") return V1Preset::kKittiLike;
  throw std::invalid_argument("unknown v1_preset '" + s + "' (expected small or kitti_like)");
}

std::string to_string(V1Preset p) {
  return p == V1Preset::kSmall ? "small" : "kitti_like";
}

V1Config V1Config::make(V1Preset preset, std::size_t glimpse_h, std::size_t glimpse_w,
                        std::size_t channels, double dropout) {
  V1Config cfg;
  cfg.preset = preset;
  cfg.input_h = glimpse_h;
  cfg.input_w = glimpse_w;
  cfg.input_c = channels;
  cfg.dropout = dropout;
  if (preset == V1Preset::kSmall) {
    if (glimpse_h % 4 != 0 || glimpse_w % 4 != 0) {
      throw std::invalid_argument("V1 small preset needs glimpse dims divisible by 4, got " +
                                  std::to_string(glimpse_h) + "x" + std::to_string(glimpse_w));
    }
    cfg.out_h = glimpse_h / 4;
    cfg.out_w = glimpse_w / 4;
    cfg.out_c = 32;
  } else {
    if (glimpse_h % 4 != 0 || glimpse_w % 4 != 0) {
      throw std::invalid_argument("V1 kitti_like preset needs glimpse dims divisible by 4, got " +
                                  std::to_string(glimpse_h) + "x" + std::to_string(glimpse_w));
    }
    cfg.out_h = glimpse_h / 4;
    cfg.out_w = glimpse_w / 4;
    cfg.out_c = 384;
  }
  return cfg;
}

namespace {

Tensor conv_param(Shape shape, Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  init_glorot(t, rng, fan_in, fan_out);
  return t;
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }

}  // namespace

AppearanceAttention::AppearanceAttention(AppearanceConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  const V1Config& v1 = cfg_.v1;
  if (v1.preset == V1Preset::kSmall) {
    v1_layers_.push_back({conv_param({5, 5, v1.input_c, 16}, rng, 5 * 5 * v1.input_c, 16),
                          zeros_param({16}), true});
    v1_layers_.push_back({conv_param({3, 3, 16, 32}, rng, 3 * 3 * 16, 32), zeros_param({32}), true});
  } else {
    v1_layers_.push_back({conv_param({11, 11, v1.input_c, 96}, rng, 11 * 11 * v1.input_c, 96),
                          zeros_param({96}), true});
    v1_layers_.push_back(
        {conv_param({5, 5, 96, 256}, rng, 5 * 5 * 96, 256), zeros_param({256}), true});
    v1_layers_.push_back(
        {conv_param({3, 3, 256, 384}, rng, 3 * 3 * 256, 384), zeros_param({384}), false});
  }

  const std::size_t cv = v1.out_c;
  const std::size_t cn = cfg_.ventral_maps;
  ventral_kernel_ = conv_param({1, 1, cv, cn}, rng, cv, cn);
  ventral_bias_ = zeros_param({cn});

  // dynamic filter generator: app -> tanh hidden -> [k1 | b1 | k2 | b2]
  const std::size_t bank_dim = 1 * 1 * cv * cn + cn + 3 * 3 * cn * cn + cn;
  gen_w1_ = conv_param({cfg_.gen_hidden, cfg_.app_dim}, rng, cfg_.app_dim, cfg_.gen_hidden);
  gen_b1_ = zeros_param({cfg_.gen_hidden});
  gen_w2_ = conv_param({bank_dim, cfg_.gen_hidden}, rng, cfg_.gen_hidden, bank_dim);
  // small filters early in training
  for (double& v : gen_w2_.values()) v *= 0.1;
  gen_b2_ = zeros_param({bank_dim});

  head_kernel_ = conv_param({1, 1, cn, 1}, rng, cn, 1);
  head_bias_ = zeros_param({1});

  const std::size_t fuse_in = v1.out_h * v1.out_w * cn;
  fuse_w1_ = conv_param({cfg_.fuse_hidden, fuse_in}, rng, fuse_in, cfg_.fuse_hidden);
  fuse_b1_ = zeros_param({cfg_.fuse_hidden});
  fuse_w2_ = conv_param({cfg_.feature_dim, cfg_.fuse_hidden}, rng, cfg_.fuse_hidden, cfg_.feature_dim);
  fuse_b2_ = zeros_param({cfg_.feature_dim});
}

Tensor AppearanceAttention::v1_forward(const Tensor& glimpse, bool training, Rng* rng) const {
  const V1Config& v1 = cfg_.v1;
  if (glimpse.rank() != 3 || glimpse.dim(0) != v1.input_h || glimpse.dim(1) != v1.input_w ||
      glimpse.dim(2) != v1.input_c) {
    throw std::invalid_argument("v1_forward: glimpse " + shape_str(glimpse.shape()) +
                                " does not match configured input " + std::to_string(v1.input_h) +
                                "x" + std::to_string(v1.input_w) + "x" + std::to_string(v1.input_c));
  }
  Tensor x = glimpse;
  for (const ConvLayer& layer : v1_layers_) {
    x = relu(add(conv2d(x, layer.kernel, 1, Pad::kSame), layer.bias));
    if (layer.pool_after) x = max_pool2d(x, 2);
  }
  if (training && v1.dropout > 0.0) {
    if (!rng) throw std::invalid_argument("v1_forward: training mode needs an RNG");
    x = dropout(x, v1.dropout, true, *rng);
  }
  return x;
}

Tensor AppearanceAttention::ventral_forward(const Tensor& v1_features) const {
  return add(conv2d(v1_features, ventral_kernel_, 1, Pad::kSame), ventral_bias_);
}

FilterBank AppearanceAttention::dorsal_filters(const Tensor& app) const {
  if (app.size() != cfg_.app_dim) {
    throw std::invalid_argument("dorsal_filters: appearance vector " + shape_str(app.shape()) +
                                " does not match app_dim " + std::to_string(cfg_.app_dim));
  }
  Tensor hidden = tanh_op(add(matmul(gen_w1_, app), gen_b1_));
  Tensor flat = add(matmul(gen_w2_, hidden), gen_b2_);

  const std::size_t cv = cfg_.v1.out_c;
  const std::size_t cn = cfg_.ventral_maps;
  const std::size_t n_k1 = cv * cn;
  const std::size_t n_k2 = 3 * 3 * cn * cn;
  FilterBank bank;
  std::size_t off = 0;
  bank.k1 = reshape(slice(flat, {off}, {off + n_k1}), {1, 1, cv, cn});
  off += n_k1;
  bank.b1 = slice(flat, {off}, {off + cn});
  off += cn;
  bank.k2 = reshape(slice(flat, {off}, {off + n_k2}), {3, 3, cn, cn});
  off += n_k2;
  bank.b2 = slice(flat, {off}, {off + cn});
  bank.flat = flat;
  return bank;
}

Tensor AppearanceAttention::dorsal_forward(const Tensor& v1_features, const FilterBank& bank) const {
  const V1Config& v1 = cfg_.v1;
  if (v1_features.rank() != 3 || v1_features.dim(2) != v1.out_c) {
    throw std::invalid_argument("dorsal_forward: features " + shape_str(v1_features.shape()) +
                                " do not match V1 output channels " + std::to_string(v1.out_c));
  }
  Tensor x = relu(add(conv2d(v1_features, bank.k1, 1, Pad::kSame), bank.b1));
  x = relu(add(conv2d(x, bank.k2, 1, Pad::kSame), bank.b2));
  Tensor logits = add(conv2d(x, head_kernel_, 1, Pad::kSame), head_bias_);
  Tensor s = sigmoid(logits);
  return reshape(s, {v1_features.dim(0), v1_features.dim(1)});
}

Tensor AppearanceAttention::fuse(const Tensor& ventral, const Tensor& location_map) const {
  if (ventral.rank() != 3 || location_map.rank() != 2 || ventral.dim(0) != location_map.dim(0) ||
      ventral.dim(1) != location_map.dim(1)) {
    throw std::invalid_argument("fuse: spatial dims of ventral " + shape_str(ventral.shape()) +
                                " and location map " + shape_str(location_map.shape()) +
                                " do not match");
  }
  Tensor mask = reshape(location_map, {location_map.dim(0), location_map.dim(1), 1});
  Tensor masked = mul(ventral, mask);
  Tensor flat = reshape(masked, {masked.size()});
  Tensor hidden = tanh_op(add(matmul(fuse_w1_, flat), fuse_b1_));
  return add(matmul(fuse_w2_, hidden), fuse_b2_);
}

void AppearanceAttention::collect(ParamList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < v1_layers_.size(); ++i) {
    out.push_back({prefix + "v1/conv" + std::to_string(i) + "/kernel", v1_layers_[i].kernel});
    out.push_back({prefix + "v1/conv" + std::to_string(i) + "/bias", v1_layers_[i].bias});
  }
  out.push_back({prefix + "ventral/kernel", ventral_kernel_});
  out.push_back({prefix + "ventral/bias", ventral_bias_});
  out.push_back({prefix + "dorsal/gen_w1", gen_w1_});
  out.push_back({prefix + "dorsal/gen_b1", gen_b1_});
  out.push_back({prefix + "dorsal/gen_w2", gen_w2_});
  out.push_back({prefix + "dorsal/gen_b2", gen_b2_});
  out.push_back({prefix + "dorsal/head_kernel", head_kernel_});
  out.push_back({prefix + "dorsal/head_bias", head_bias_});
  out.push_back({prefix + "fuse/w1", fuse_w1_});
  out.push_back({prefix + "fuse/b1", fuse_b1_});
  out.push_back({prefix + "fuse/w2", fuse_w2_});
  out.push_back({prefix + "fuse/b2", fuse_b2_});
}

bool AppearanceAttention::is_dorsal_param(const std::string& name) {
  return name.find("dorsal/") != std::string::npos;
}

}  // namespace hart
