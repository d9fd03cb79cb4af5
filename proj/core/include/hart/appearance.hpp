#pragma once


#include "hart/ops.hpp"
#include "hart/params.hpp"
#include "hart/tensor.hpp"

namespace hart {

enum class V1Preset { kSmall, kKittiLike };

V1Preset v1_preset_from_string(const std::string& s);
std::string to_string(V1Preset p);

// Shared convolutional trunk. Two presets:
//   small:      28x28xC -> conv5x5/16 + pool -> conv3x3/32 + pool -> 7x7x32
//   kitti_like: 56x56xC -> conv11x11/96 + pool -> conv5x5/256 + pool
//               -> conv3x3/384 -> 14x14x384
struct V1Config {
  V1Preset preset = V1Preset::kSmall;
  std::size_t input_h = 28;
  std::size_t input_w = 28;
  std::size_t input_c = 3;
  std::size_t out_h = 7;
  std::size_t out_w = 7;
  std::size_t out_c = 32;
  double dropout = 0.25;

  static V1Config make(V1Preset preset, std::size_t glimpse_h, std::size_t glimpse_w,
                       std::size_t channels, double dropout);
};

struct AppearanceConfig {
  V1Config v1;
  std::size_t ventral_maps = 5;   // c_nu
  std::size_t app_dim = 64;
  std::size_t gen_hidden = 64;    // dynamic filter generator hidden width
  std::size_t fuse_hidden = 256;
  std::size_t feature_dim = 256;  // dim of v_t
};

// Runtime-generated dorsal kernels: a 1x1xc_vx5 layer and a 3x3x5x5 layer,
// each with a bias vector.
struct FilterBank {
  Tensor k1, b1;
  Tensor k2, b2;
  Tensor flat;  // all values as one vector, for the E[Psi] regularizer
};

// V1 trunk + ventral CNN + dorsal DFN + Hadamard fusion. Pure functions of
// (inputs, parameters); training-mode dropout draws from the caller's RNG.
class AppearanceAttention {
 public:
  AppearanceAttention(AppearanceConfig cfg, Rng& rng);

  const AppearanceConfig& config() const { return cfg_; }

  Tensor v1_forward(const Tensor& glimpse, bool training, Rng* rng) const;
  Tensor ventral_forward(const Tensor& v1_features) const;
  FilterBank dorsal_filters(const Tensor& app) const;
  // K dynamic conv layers (ReLU after each) + static 1x1 sigmoid head -> [h_v, w_v]
  Tensor dorsal_forward(const Tensor& v1_features, const FilterBank& bank) const;
  // v_t = MLP(vec(ventral . location_map)), map broadcast over channels
  Tensor fuse(const Tensor& ventral, const Tensor& location_map) const;

  void collect(ParamList& out, const std::string& prefix) const;
  // Parameter names of the dorsal stream (generator + head); used by the
  // ablation that must not train it.
  static bool is_dorsal_param(const std::string& name);

 private:
  AppearanceConfig cfg_;
  struct ConvLayer {
    Tensor kernel, bias;
    bool pool_after = false;
  };
  std::vector<ConvLayer> v1_layers_;
  Tensor ventral_kernel_, ventral_bias_;
  Tensor gen_w1_, gen_b1_, gen_w2_, gen_b2_;
  Tensor head_kernel_, head_bias_;
  Tensor fuse_w1_, fuse_b1_, fuse_w2_, fuse_b2_;
};

}  // namespace hart
