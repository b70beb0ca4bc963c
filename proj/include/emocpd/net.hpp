#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "emocpd/config.hpp"
#include "emocpd/nn_ops.hpp"
#include "emocpd/rng.hpp"

namespace emocpd::nn {

enum class NormKind { none, batch, layer };

struct CnaConfig {
  int64_t in_channels = 0;
  int64_t filters = 0;
  int kernel = 3;  // 1 or 3
  NormKind norm = NormKind::batch;
  Act act = Act::relu;
  int stride = 1;
};

// Conv -> norm -> activation, the building block every module reuses.
class Cna {
public:
  Cna() = default;
  Cna(const CnaConfig& config, Rng& rng);

  Tensor forward(const Tensor& x, bool training);
  void collect(const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& params,
               std::vector<std::pair<std::string, std::vector<double>*>>& buffers);

  const CnaConfig& config() const { return config_; }

private:
  CnaConfig config_;
  Tensor w_, b_;
  Tensor norm_gamma_, norm_beta_;
  BatchNormBuffers bn_buffers_;
};

// Squeeze-and-excitation gate: global max pool, two 1x1x1 CNAs (relu then
// sigmoid), output in (0,1) with shape [B,C,1,1,1].
class SeModule {
public:
  SeModule() = default;
  SeModule(int64_t channels, Rng& rng);

  Tensor forward(const Tensor& x, bool training);
  void collect(const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& params,
               std::vector<std::pair<std::string, std::vector<double>*>>& buffers);

private:
  Cna reduce_, gate_;
};

// Stem: y = skip(x) + conv1(B + SE(B)*B) with B = CNA(bn(x)); the skip is a
// 1x1x1 projection whenever the output width differs from the input.
class StemModule {
public:
  StemModule() = default;
  StemModule(int64_t in_channels, int64_t f1, int64_t f2, Rng& rng);

  Tensor forward(const Tensor& x, bool training);
  void collect(const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& params,
               std::vector<std::pair<std::string, std::vector<double>*>>& buffers);

private:
  int64_t in_channels_ = 0, f2_ = 0;
  Tensor bn_gamma_, bn_beta_;
  BatchNormBuffers bn_buffers_;
  Cna cna_;
  SeModule se_;
  Tensor proj_w_, proj_b_;
  Tensor skip_w_, skip_b_;  // only when f2 != in_channels
};

// Inverted residual block, channel-preserving:
// y = x + conv1(CNA2(B) + B), B = CNA1(bn(x)).
class IrmbModule {
public:
  IrmbModule() = default;
  IrmbModule(int64_t channels, Rng& rng);

  Tensor forward(const Tensor& x, bool training);
  void collect(const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& params,
               std::vector<std::pair<std::string, std::vector<double>*>>& buffers);

private:
  Tensor bn_gamma_, bn_beta_;
  BatchNormBuffers bn_buffers_;
  Cna cna1_, cna2_;
  Tensor proj_w_, proj_b_;
};

// bn -> CNA(relu,1) -> CNA(silu,3) -> conv1 stride 2; halves each spatial dim
// (ceil for odd sizes: 20->10->5->3).
class DownsampleModule {
public:
  DownsampleModule() = default;
  DownsampleModule(int64_t in_channels, int64_t f1, int64_t f2, Rng& rng);

  Tensor forward(const Tensor& x, bool training);
  void collect(const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& params,
               std::vector<std::pair<std::string, std::vector<double>*>>& buffers);

private:
  Tensor bn_gamma_, bn_beta_;
  BatchNormBuffers bn_buffers_;
  Cna cna1_, cna2_;
  Tensor proj_w_, proj_b_;
};

// Multi-head self-attention over spatial tokens. Expects the layer-normed
// input (the enclosing block owns the norm, which it also feeds the residual
// per the block equation). Q/K/V are 1x1x1 conv projections; per head
// softmax(Q K^T / sqrt(d)) V; heads concatenated then projected by W_o.
class MhsaAttention {
public:
  MhsaAttention() = default;
  MhsaAttention(int64_t channels, int64_t heads, Rng& rng);

  struct Detail {
    Tensor attention;  // [B, h, T, T], rows sum to 1
    Tensor pre_wo;     // [B, C, D, H, W] concatenated heads before W_o
  };

  Tensor forward(const Tensor& normed, bool training, Detail* detail = nullptr);
  void collect(const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& params,
               std::vector<std::pair<std::string, std::vector<double>*>>& buffers);

  int64_t heads() const { return heads_; }
  int64_t head_dim() const { return head_dim_; }

private:
  int64_t channels_ = 0, heads_ = 0, head_dim_ = 0;
  Tensor q_w_, q_b_, k_w_, k_b_, v_w_, v_b_, o_w_, o_b_;
};

// y = ln(x) + conv1(CNA(Att) + Att), Att = MHSA(ln(x)); residual taken from
// the layer-normed input, exactly as the block equation writes it.
class MhsaIrmbModule {
public:
  MhsaIrmbModule() = default;
  MhsaIrmbModule(int64_t in_channels, int64_t out_channels, int64_t heads, Rng& rng);

  Tensor forward(const Tensor& x, bool training, MhsaAttention::Detail* detail = nullptr);
  void collect(const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& params,
               std::vector<std::pair<std::string, std::vector<double>*>>& buffers);

private:
  int64_t in_channels_ = 0, out_channels_ = 0;
  Tensor ln_gamma_, ln_beta_;
  MhsaAttention attn_;
  Cna cna2_;
  Tensor proj_w_, proj_b_;
  Tensor skip_w_, skip_b_;  // only when out != in
};

// Global max pool -> flatten -> linear -> relu -> linear.
class MlpHead {
public:
  MlpHead() = default;
  MlpHead(int64_t in_channels, int64_t hidden, int64_t classes, Rng& rng);

  Tensor forward(const Tensor& x, bool training);
  void collect(const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& params,
               std::vector<std::pair<std::string, std::vector<double>*>>& buffers);

private:
  Tensor fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

// Widths of the fixed stage layout:
// Stem -> iRMB x n1 -> Down -> iRMB x n2 -> Down -> MHSA-iRMB x n3 -> Down ->
// MHSA-iRMB x n4 -> MLP head. Attention runs late, where token counts are
// small (5^3 and 3^3 for 20 A grids).
struct ModelConfig {
  int64_t in_channels = 7;
  int64_t stem_f1 = 16, stem_f2 = 16;
  int64_t stage1_f = 16, stage1_blocks = 2;
  int64_t down1_f1 = 16, down1_f2 = 32;
  int64_t stage2_f = 32, stage2_blocks = 2;
  int64_t down2_f1 = 32, down2_f2 = 64;
  int64_t stage3_f = 64, stage3_blocks = 2, stage3_heads = 4;
  int64_t down3_f1 = 64, down3_f2 = 64;
  int64_t stage4_f = 64, stage4_blocks = 2, stage4_heads = 4;
  int64_t mlp_hidden = 720;
  int64_t classes = 20;
  uint64_t init_seed = 0;

  void validate() const;
  std::string to_text() const;  // "model.*" key=value block
  static ModelConfig from_key_values(const KeyValues& kv);
};

class EmoModel {
public:
  EmoModel() = default;
  explicit EmoModel(const ModelConfig& config);

  // x: [B, in_channels, D, H, W] -> logits [B, classes]. When `trace` is
  // given, the shape after the stem and after each stage is appended.
  Tensor forward(const Tensor& x, bool training, std::vector<Shape>* trace = nullptr);

  const ModelConfig& config() const { return config_; }

  std::vector<std::pair<std::string, Tensor>> named_parameters();
  std::vector<std::pair<std::string, std::vector<double>*>> named_buffers();
  std::vector<Tensor> parameters();
  int64_t parameter_count();

  // For tests that need attention internals of a specific block.
  MhsaIrmbModule& stage3_block(size_t i) { return stage3_[i]; }

private:
  ModelConfig config_;
  StemModule stem_;
  std::vector<IrmbModule> stage1_, stage2_;
  DownsampleModule down1_, down2_, down3_;
  std::vector<MhsaIrmbModule> stage3_, stage4_;
  MlpHead head_;
};

// Closed-form parameter count for a config; kept in sync with the module
// definitions and checked against EmoModel::parameter_count() in tests.
// The term-by-term derivation is written out in README.md.
int64_t expected_parameter_count(const ModelConfig& config);

// Checkpoint container ("EMOC"): magic, u16 version, length-prefixed
// structured-text config block, u32 tensor count, then per tensor a
// length-prefixed name, u8 dtype tag (1 = f64, 2 = f32), u32 rank, u32 dims
// and raw little-endian data. Parameters and running statistics both ride in
// the tensor list; metadata (seeds, provenance) rides in the config block.
inline constexpr uint16_t kCheckpointVersion = 1;

void save_checkpoint(EmoModel& model, const std::string& path,
                     const std::map<std::string, std::string>& metadata = {});

struct LoadedCheckpoint {
  EmoModel model;
  std::map<std::string, std::string> metadata;  // every config-block entry
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace emocpd::nn
