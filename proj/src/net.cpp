#include "emocpd/net.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "binio.hpp"

namespace emocpd::nn {

namespace {

Tensor init_conv_weight(int64_t cout, int64_t cin, int kernel, Rng& rng, double sigma = 0.02) {
  int64_t n = cout * cin * kernel * kernel * kernel;
  std::vector<double> data(static_cast<size_t>(n));
  for (double& v : data) v = rng.truncated_normal(sigma);
  return Tensor::param({cout, cin, kernel, kernel, kernel}, std::move(data));
}

Tensor init_linear_weight(int64_t out, int64_t in, Rng& rng, double sigma = 0.02) {
  std::vector<double> data(static_cast<size_t>(out * in));
  for (double& v : data) v = rng.truncated_normal(sigma);
  return Tensor::param({out, in}, std::move(data));
}

Tensor init_zeros(int64_t n) {
  return Tensor::param({n}, std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor init_ones(int64_t n) {
  return Tensor::param({n}, std::vector<double>(static_cast<size_t>(n), 1.0));
}

void push(std::vector<std::pair<std::string, Tensor>>& params, const std::string& name,
          const Tensor& t) {
  params.emplace_back(name, t);
}

}  // namespace

// ---------------------------------------------------------------------------
// CNA
// ---------------------------------------------------------------------------

Cna::Cna(const CnaConfig& config, Rng& rng) : config_(config) {
  if (config.kernel != 1 && config.kernel != 3) throw ConfigError("CNA kernel must be 1 or 3");
  w_ = init_conv_weight(config.filters, config.in_channels, config.kernel, rng);
  b_ = init_zeros(config.filters);
  if (config.norm != NormKind::none) {
    norm_gamma_ = init_ones(config.filters);
    norm_beta_ = init_zeros(config.filters);
    if (config.norm == NormKind::batch) bn_buffers_ = BatchNormBuffers(config.filters);
  }
}

Tensor Cna::forward(const Tensor& x, bool training) {
  int padding = config_.kernel == 3 ? 1 : 0;
  Tensor y = conv3d(x, w_, b_, config_.stride, padding);
  if (config_.norm == NormKind::batch)
    y = batch_norm(y, norm_gamma_, norm_beta_, bn_buffers_, training);
  else if (config_.norm == NormKind::layer)
    y = layer_norm(y, norm_gamma_, norm_beta_);
  return activation(y, config_.act);
}

void Cna::collect(const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& params,
                  std::vector<std::pair<std::string, std::vector<double>*>>& buffers) {
  push(params, prefix + ".conv.w", w_);
  push(params, prefix + ".conv.b", b_);
  if (config_.norm != NormKind::none) {
    push(params, prefix + ".norm.gamma", norm_gamma_);
    push(params, prefix + ".norm.beta", norm_beta_);
    if (config_.norm == NormKind::batch) {
      buffers.emplace_back(prefix + ".norm.running_mean", &bn_buffers_.running_mean);
      buffers.emplace_back(prefix + ".norm.running_var", &bn_buffers_.running_var);
    }
  }
}

// ---------------------------------------------------------------------------
// SE
// ---------------------------------------------------------------------------

SeModule::SeModule(int64_t channels, Rng& rng)
    : reduce_({channels, channels, 1, NormKind::none, Act::relu, 1}, rng),
      gate_({channels, channels, 1, NormKind::none, Act::sigmoid, 1}, rng) {}

Tensor SeModule::forward(const Tensor& x, bool training) {
  Tensor pooled = global_max_pool(x);
  return gate_.forward(reduce_.forward(pooled, training), training);
}

void SeModule::collect(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor>>& params,
                       std::vector<std::pair<std::string, std::vector<double>*>>& buffers) {
  reduce_.collect(prefix + ".reduce", params, buffers);
  gate_.collect(prefix + ".gate", params, buffers);
}

// ---------------------------------------------------------------------------
// Stem
// ---------------------------------------------------------------------------

StemModule::StemModule(int64_t in_channels, int64_t f1, int64_t f2, Rng& rng)
    : in_channels_(in_channels),
      f2_(f2),
      bn_gamma_(init_ones(in_channels)),
      bn_beta_(init_zeros(in_channels)),
      bn_buffers_(in_channels),
      cna_({in_channels, f1, 3, NormKind::batch, Act::silu, 1}, rng),
      se_(f1, rng) {
  proj_w_ = init_conv_weight(f2, f1, 1, rng);
  proj_b_ = init_zeros(f2);
  if (f2 != in_channels) {
    skip_w_ = init_conv_weight(f2, in_channels, 1, rng);
    skip_b_ = init_zeros(f2);
  }
}

Tensor StemModule::forward(const Tensor& x, bool training) {
  Tensor normed = batch_norm(x, bn_gamma_, bn_beta_, bn_buffers_, training);
  Tensor b = cna_.forward(normed, training);
  Tensor gate = se_.forward(b, training);
  Tensor gated = add(b, mul_gate(b, gate));
  Tensor projected = conv3d(gated, proj_w_, proj_b_, 1, 0);
  Tensor skip = f2_ == in_channels_ ? x : conv3d(x, skip_w_, skip_b_, 1, 0);
  return add(skip, projected);
}

void StemModule::collect(const std::string& prefix,
                         std::vector<std::pair<std::string, Tensor>>& params,
                         std::vector<std::pair<std::string, std::vector<double>*>>& buffers) {
  push(params, prefix + ".bn0.gamma", bn_gamma_);
  push(params, prefix + ".bn0.beta", bn_beta_);
  buffers.emplace_back(prefix + ".bn0.running_mean", &bn_buffers_.running_mean);
  buffers.emplace_back(prefix + ".bn0.running_var", &bn_buffers_.running_var);
  cna_.collect(prefix + ".cna", params, buffers);
  se_.collect(prefix + ".se", params, buffers);
  push(params, prefix + ".proj.w", proj_w_);
  push(params, prefix + ".proj.b", proj_b_);
  if (skip_w_.defined()) {
    push(params, prefix + ".skip.w", skip_w_);
    push(params, prefix + ".skip.b", skip_b_);
  }
}

// ---------------------------------------------------------------------------
// iRMB
// ---------------------------------------------------------------------------

IrmbModule::IrmbModule(int64_t channels, Rng& rng)
    : bn_gamma_(init_ones(channels)),
      bn_beta_(init_zeros(channels)),
      bn_buffers_(channels),
      cna1_({channels, channels, 1, NormKind::none, Act::relu, 1}, rng),
      cna2_({channels, channels, 3, NormKind::batch, Act::silu, 1}, rng) {
  proj_w_ = init_conv_weight(channels, channels, 1, rng);
  proj_b_ = init_zeros(channels);
}

Tensor IrmbModule::forward(const Tensor& x, bool training) {
  Tensor normed = batch_norm(x, bn_gamma_, bn_beta_, bn_buffers_, training);
  Tensor b = cna1_.forward(normed, training);
  Tensor inner = add(cna2_.forward(b, training), b);
  return add(x, conv3d(inner, proj_w_, proj_b_, 1, 0));
}

void IrmbModule::collect(const std::string& prefix,
                         std::vector<std::pair<std::string, Tensor>>& params,
                         std::vector<std::pair<std::string, std::vector<double>*>>& buffers) {
  push(params, prefix + ".bn0.gamma", bn_gamma_);
  push(params, prefix + ".bn0.beta", bn_beta_);
  buffers.emplace_back(prefix + ".bn0.running_mean", &bn_buffers_.running_mean);
  buffers.emplace_back(prefix + ".bn0.running_var", &bn_buffers_.running_var);
  cna1_.collect(prefix + ".cna1", params, buffers);
  cna2_.collect(prefix + ".cna2", params, buffers);
  push(params, prefix + ".proj.w", proj_w_);
  push(params, prefix + ".proj.b", proj_b_);
}

// ---------------------------------------------------------------------------
// DownSample
// ---------------------------------------------------------------------------

DownsampleModule::DownsampleModule(int64_t in_channels, int64_t f1, int64_t f2, Rng& rng)
    : bn_gamma_(init_ones(in_channels)),
      bn_beta_(init_zeros(in_channels)),
      bn_buffers_(in_channels),
      cna1_({in_channels, f1, 1, NormKind::none, Act::relu, 1}, rng),
      cna2_({f1, f1, 3, NormKind::batch, Act::silu, 1}, rng) {
  proj_w_ = init_conv_weight(f2, f1, 1, rng);
  proj_b_ = init_zeros(f2);
}

Tensor DownsampleModule::forward(const Tensor& x, bool training) {
  Tensor normed = batch_norm(x, bn_gamma_, bn_beta_, bn_buffers_, training);
  Tensor a = cna1_.forward(normed, training);
  Tensor b = cna2_.forward(a, training);
  return conv3d(b, proj_w_, proj_b_, 2, 0);
}

void DownsampleModule::collect(const std::string& prefix,
                               std::vector<std::pair<std::string, Tensor>>& params,
                               std::vector<std::pair<std::string, std::vector<double>*>>& buffers) {
  push(params, prefix + ".bn0.gamma", bn_gamma_);
  push(params, prefix + ".bn0.beta", bn_beta_);
  buffers.emplace_back(prefix + ".bn0.running_mean", &bn_buffers_.running_mean);
  buffers.emplace_back(prefix + ".bn0.running_var", &bn_buffers_.running_var);
  cna1_.collect(prefix + ".cna1", params, buffers);
  cna2_.collect(prefix + ".cna2", params, buffers);
  push(params, prefix + ".proj.w", proj_w_);
  push(params, prefix + ".proj.b", proj_b_);
}

// ---------------------------------------------------------------------------
// MHSA
// ---------------------------------------------------------------------------

MhsaAttention::MhsaAttention(int64_t channels, int64_t heads, Rng& rng)
    : channels_(channels), heads_(heads) {
  if (heads <= 0 || channels % heads != 0)
    throw ConfigError("attention width " + std::to_string(channels) +
                      " is not divisible into " + std::to_string(heads) + " heads");
  head_dim_ = channels / heads;
  q_w_ = init_conv_weight(channels, channels, 1, rng);
  q_b_ = init_zeros(channels);
  k_w_ = init_conv_weight(channels, channels, 1, rng);
  k_b_ = init_zeros(channels);
  v_w_ = init_conv_weight(channels, channels, 1, rng);
  v_b_ = init_zeros(channels);
  o_w_ = init_conv_weight(channels, channels, 1, rng);
  o_b_ = init_zeros(channels);
}

Tensor MhsaAttention::forward(const Tensor& normed, bool training, Detail* detail) {
  (void)training;  // pure projections, no mode-dependent pieces
  const auto& s = normed.shape();
  if (s.size() != 5 || s[1] != channels_)
    throw ShapeError("attention input must be [B," + std::to_string(channels_) + ",D,H,W], got " +
                     shape_str(s));
  const int64_t batch = s[0], d = s[2], h = s[3], w = s[4];
  const int64_t tokens = d * h * w;

  Tensor q = conv3d(normed, q_w_, q_b_, 1, 0);
  Tensor k = conv3d(normed, k_w_, k_b_, 1, 0);
  Tensor v = conv3d(normed, v_w_, v_b_, 1, 0);

  // [B, h*dk, T] -> [B, h, dk, T]; channel layout is head-major so the
  // reshape is a pure view.
  Shape split = {batch, heads_, head_dim_, tokens};
  Tensor q_heads = transpose_last2(reshape(q, split));  // [B, h, T, dk]
  Tensor k_heads = reshape(k, split);                   // [B, h, dk, T]
  Tensor v_heads = transpose_last2(reshape(v, split));  // [B, h, T, dk]

  Tensor scores = scale(bmm(q_heads, k_heads), 1.0 / std::sqrt(static_cast<double>(head_dim_)));
  Tensor attention = softmax(scores, -1);  // [B, h, T, T]

  Tensor mixed = bmm(attention, v_heads);              // [B, h, T, dk]
  Tensor merged = transpose_last2(mixed);              // [B, h, dk, T]
  Tensor pre_wo = reshape(merged, {batch, channels_, d, h, w});
  Tensor out = conv3d(pre_wo, o_w_, o_b_, 1, 0);

  if (detail) {
    detail->attention = attention;
    detail->pre_wo = pre_wo;
  }
  return out;
}

void MhsaAttention::collect(const std::string& prefix,
                            std::vector<std::pair<std::string, Tensor>>& params,
                            std::vector<std::pair<std::string, std::vector<double>*>>& buffers) {
  (void)buffers;
  push(params, prefix + ".q.w", q_w_);
  push(params, prefix + ".q.b", q_b_);
  push(params, prefix + ".k.w", k_w_);
  push(params, prefix + ".k.b", k_b_);
  push(params, prefix + ".v.w", v_w_);
  push(params, prefix + ".v.b", v_b_);
  push(params, prefix + ".wo.w", o_w_);
  push(params, prefix + ".wo.b", o_b_);
}

// ---------------------------------------------------------------------------
// MHSA-iRMB
// ---------------------------------------------------------------------------

MhsaIrmbModule::MhsaIrmbModule(int64_t in_channels, int64_t out_channels, int64_t heads, Rng& rng)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      ln_gamma_(init_ones(in_channels)),
      ln_beta_(init_zeros(in_channels)),
      attn_(in_channels, heads, rng),
      cna2_({in_channels, in_channels, 3, NormKind::batch, Act::silu, 1}, rng) {
  proj_w_ = init_conv_weight(out_channels, in_channels, 1, rng);
  proj_b_ = init_zeros(out_channels);
  if (out_channels != in_channels) {
    skip_w_ = init_conv_weight(out_channels, in_channels, 1, rng);
    skip_b_ = init_zeros(out_channels);
  }
}

Tensor MhsaIrmbModule::forward(const Tensor& x, bool training, MhsaAttention::Detail* detail) {
  Tensor normed = layer_norm(x, ln_gamma_, ln_beta_);
  Tensor att = attn_.forward(normed, training, detail);
  Tensor inner = add(cna2_.forward(att, training), att);
  Tensor projected = conv3d(inner, proj_w_, proj_b_, 1, 0);
  Tensor skip = out_channels_ == in_channels_ ? normed
                                              : conv3d(normed, skip_w_, skip_b_, 1, 0);
  return add(skip, projected);
}

void MhsaIrmbModule::collect(const std::string& prefix,
                             std::vector<std::pair<std::string, Tensor>>& params,
                             std::vector<std::pair<std::string, std::vector<double>*>>& buffers) {
  push(params, prefix + ".ln.gamma", ln_gamma_);
  push(params, prefix + ".ln.beta", ln_beta_);
  attn_.collect(prefix + ".attn", params, buffers);
  cna2_.collect(prefix + ".cna2", params, buffers);
  push(params, prefix + ".proj.w", proj_w_);
  push(params, prefix + ".proj.b", proj_b_);
  if (skip_w_.defined()) {
    push(params, prefix + ".skip.w", skip_w_);
    push(params, prefix + ".skip.b", skip_b_);
  }
}

// ---------------------------------------------------------------------------
// MLP head
// ---------------------------------------------------------------------------

MlpHead::MlpHead(int64_t in_channels, int64_t hidden, int64_t classes, Rng& rng) {
  fc1_w_ = init_linear_weight(hidden, in_channels, rng);
  fc1_b_ = init_zeros(hidden);
  fc2_w_ = init_linear_weight(classes, hidden, rng);
  fc2_b_ = init_zeros(classes);
}

Tensor MlpHead::forward(const Tensor& x, bool training) {
  (void)training;
  Tensor pooled = global_max_pool(x);
  Tensor flat = reshape(pooled, {x.shape()[0], x.shape()[1]});
  Tensor hidden = relu(linear(flat, fc1_w_, fc1_b_));
  return linear(hidden, fc2_w_, fc2_b_);
}

void MlpHead::collect(const std::string& prefix,
                      std::vector<std::pair<std::string, Tensor>>& params,
                      std::vector<std::pair<std::string, std::vector<double>*>>& buffers) {
  (void)buffers;
  push(params, prefix + ".fc1.w", fc1_w_);
  push(params, prefix + ".fc1.b", fc1_b_);
  push(params, prefix + ".fc2.w", fc2_w_);
  push(params, prefix + ".fc2.b", fc2_b_);
}

// ---------------------------------------------------------------------------
// Model config
// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  auto positive = [](int64_t v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("model config: ") + name + " must be positive");
  };
  positive(in_channels, "in_channels");
  positive(stem_f1, "stem_f1");
  positive(stem_f2, "stem_f2");
  positive(stage1_f, "stage1_f");
  positive(stage2_f, "stage2_f");
  positive(stage3_f, "stage3_f");
  positive(stage4_f, "stage4_f");
  positive(mlp_hidden, "mlp_hidden");
  positive(stage1_blocks, "stage1_blocks");
  positive(stage2_blocks, "stage2_blocks");
  positive(stage3_blocks, "stage3_blocks");
  positive(stage4_blocks, "stage4_blocks");
  if (classes != 20) throw ConfigError("model config: classes must be 20");
  // Residual blocks are channel-preserving, so adjacent widths must agree.
  if (stage1_f != stem_f2) throw ConfigError("model config: stage1_f must equal stem_f2");
  if (stage2_f != down1_f2) throw ConfigError("model config: stage2_f must equal down1_f2");
  if (stage3_f != down2_f2) throw ConfigError("model config: stage3_f must equal down2_f2");
  if (stage4_f != down3_f2) throw ConfigError("model config: stage4_f must equal down3_f2");
  if (stage3_heads <= 0 || stage3_f % stage3_heads != 0)
    throw ConfigError("model config: stage3 heads*d_k must equal stage3_f");
  if (stage4_heads <= 0 || stage4_f % stage4_heads != 0)
    throw ConfigError("model config: stage4 heads*d_k must equal stage4_f");
}

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out << "model.in_channels = " << in_channels << "\n";
  out << "model.stem_f1 = " << stem_f1 << "\n";
  out << "model.stem_f2 = " << stem_f2 << "\n";
  out << "model.stage1_f = " << stage1_f << "\n";
  out << "model.stage1_blocks = " << stage1_blocks << "\n";
  out << "model.down1_f1 = " << down1_f1 << "\n";
  out << "model.down1_f2 = " << down1_f2 << "\n";
  out << "model.stage2_f = " << stage2_f << "\n";
  out << "model.stage2_blocks = " << stage2_blocks << "\n";
  out << "model.down2_f1 = " << down2_f1 << "\n";
  out << "model.down2_f2 = " << down2_f2 << "\n";
  out << "model.stage3_f = " << stage3_f << "\n";
  out << "model.stage3_blocks = " << stage3_blocks << "\n";
  out << "model.stage3_heads = " << stage3_heads << "\n";
  out << "model.down3_f1 = " << down3_f1 << "\n";
  out << "model.down3_f2 = " << down3_f2 << "\n";
  out << "model.stage4_f = " << stage4_f << "\n";
  out << "model.stage4_blocks = " << stage4_blocks << "\n";
  out << "model.stage4_heads = " << stage4_heads << "\n";
  out << "model.mlp_hidden = " << mlp_hidden << "\n";
  out << "model.classes = " << classes << "\n";
  out << "model.init_seed = " << init_seed << "\n";
  return out.str();
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
  ModelConfig c;
  c.in_channels = get_int(kv, "model.in_channels", c.in_channels);
  c.stem_f1 = get_int(kv, "model.stem_f1", c.stem_f1);
  c.stem_f2 = get_int(kv, "model.stem_f2", c.stem_f2);
  c.stage1_f = get_int(kv, "model.stage1_f", c.stage1_f);
  c.stage1_blocks = get_int(kv, "model.stage1_blocks", c.stage1_blocks);
  c.down1_f1 = get_int(kv, "model.down1_f1", c.down1_f1);
  c.down1_f2 = get_int(kv, "model.down1_f2", c.down1_f2);
  c.stage2_f = get_int(kv, "model.stage2_f", c.stage2_f);
  c.stage2_blocks = get_int(kv, "model.stage2_blocks", c.stage2_blocks);
  c.down2_f1 = get_int(kv, "model.down2_f1", c.down2_f1);
  c.down2_f2 = get_int(kv, "model.down2_f2", c.down2_f2);
  c.stage3_f = get_int(kv, "model.stage3_f", c.stage3_f);
  c.stage3_blocks = get_int(kv, "model.stage3_blocks", c.stage3_blocks);
  c.stage3_heads = get_int(kv, "model.stage3_heads", c.stage3_heads);
  c.down3_f1 = get_int(kv, "model.down3_f1", c.down3_f1);
  c.down3_f2 = get_int(kv, "model.down3_f2", c.down3_f2);
  c.stage4_f = get_int(kv, "model.stage4_f", c.stage4_f);
  c.stage4_blocks = get_int(kv, "model.stage4_blocks", c.stage4_blocks);
  c.stage4_heads = get_int(kv, "model.stage4_heads", c.stage4_heads);
  c.mlp_hidden = get_int(kv, "model.mlp_hidden", c.mlp_hidden);
  c.classes = get_int(kv, "model.classes", c.classes);
  c.init_seed = get_u64(kv, "model.init_seed", c.init_seed);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

EmoModel::EmoModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.init_seed);
  stem_ = StemModule(config_.in_channels, config_.stem_f1, config_.stem_f2, rng);
  for (int64_t i = 0; i < config_.stage1_blocks; ++i) stage1_.emplace_back(config_.stage1_f, rng);
  down1_ = DownsampleModule(config_.stage1_f, config_.down1_f1, config_.down1_f2, rng);
  for (int64_t i = 0; i < config_.stage2_blocks; ++i) stage2_.emplace_back(config_.stage2_f, rng);
  down2_ = DownsampleModule(config_.stage2_f, config_.down2_f1, config_.down2_f2, rng);
  for (int64_t i = 0; i < config_.stage3_blocks; ++i)
    stage3_.emplace_back(config_.stage3_f, config_.stage3_f, config_.stage3_heads, rng);
  down3_ = DownsampleModule(config_.stage3_f, config_.down3_f1, config_.down3_f2, rng);
  for (int64_t i = 0; i < config_.stage4_blocks; ++i)
    stage4_.emplace_back(config_.stage4_f, config_.stage4_f, config_.stage4_heads, rng);
  head_ = MlpHead(config_.stage4_f, config_.mlp_hidden, config_.classes, rng);
}

Tensor EmoModel::forward(const Tensor& x, bool training, std::vector<Shape>* trace) {
  if (x.shape().size() != 5 || x.shape()[1] != config_.in_channels)
    throw ShapeError("model input must be [B," + std::to_string(config_.in_channels) +
                     ",D,H,W], got " + shape_str(x.shape()));
  Tensor h = stem_.forward(x, training);
  if (trace) trace->push_back(h.shape());
  for (auto& block : stage1_) h = block.forward(h, training);
  h = down1_.forward(h, training);
  if (trace) trace->push_back(h.shape());
  for (auto& block : stage2_) h = block.forward(h, training);
  h = down2_.forward(h, training);
  if (trace) trace->push_back(h.shape());
  for (auto& block : stage3_) h = block.forward(h, training);
  h = down3_.forward(h, training);
  if (trace) trace->push_back(h.shape());
  for (auto& block : stage4_) h = block.forward(h, training);
  Tensor logits = head_.forward(h, training);
  if (trace) trace->push_back(logits.shape());
  return logits;
}

std::vector<std::pair<std::string, Tensor>> EmoModel::named_parameters() {
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::pair<std::string, std::vector<double>*>> buffers;
  stem_.collect("stem", params, buffers);
  for (size_t i = 0; i < stage1_.size(); ++i)
    stage1_[i].collect("stage1." + std::to_string(i), params, buffers);
  down1_.collect("down1", params, buffers);
  for (size_t i = 0; i < stage2_.size(); ++i)
    stage2_[i].collect("stage2." + std::to_string(i), params, buffers);
  down2_.collect("down2", params, buffers);
  for (size_t i = 0; i < stage3_.size(); ++i)
    stage3_[i].collect("stage3." + std::to_string(i), params, buffers);
  down3_.collect("down3", params, buffers);
  for (size_t i = 0; i < stage4_.size(); ++i)
    stage4_[i].collect("stage4." + std::to_string(i), params, buffers);
  head_.collect("head", params, buffers);
  return params;
}

std::vector<std::pair<std::string, std::vector<double>*>> EmoModel::named_buffers() {
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::pair<std::string, std::vector<double>*>> buffers;
  stem_.collect("stem", params, buffers);
  for (size_t i = 0; i < stage1_.size(); ++i)
    stage1_[i].collect("stage1." + std::to_string(i), params, buffers);
  down1_.collect("down1", params, buffers);
  for (size_t i = 0; i < stage2_.size(); ++i)
    stage2_[i].collect("stage2." + std::to_string(i), params, buffers);
  down2_.collect("down2", params, buffers);
  for (size_t i = 0; i < stage3_.size(); ++i)
    stage3_[i].collect("stage3." + std::to_string(i), params, buffers);
  down3_.collect("down3", params, buffers);
  for (size_t i = 0; i < stage4_.size(); ++i)
    stage4_[i].collect("stage4." + std::to_string(i), params, buffers);
  head_.collect("head", params, buffers);
  return buffers;
}

std::vector<Tensor> EmoModel::parameters() {
  std::vector<Tensor> out;
  for (auto& [name, tensor] : named_parameters()) out.push_back(tensor);
  return out;
}

int64_t EmoModel::parameter_count() {
  int64_t n = 0;
  for (auto& [name, tensor] : named_parameters()) n += tensor.numel();
  return n;
}

int64_t expected_parameter_count(const ModelConfig& c) {
  auto cna = [](int64_t cin, int64_t cout, int64_t k, bool norm) {
    return cout * cin * k * k * k + cout + (norm ? 2 * cout : 0);
  };
  auto conv1 = [](int64_t cin, int64_t cout) { return cout * cin + cout; };

  int64_t total = 0;
  // Stem: input bn, CNA(3,bn), SE (two 1x1x1 CNAs), projection, skip.
  total += 2 * c.in_channels;
  total += cna(c.in_channels, c.stem_f1, 3, true);
  total += 2 * cna(c.stem_f1, c.stem_f1, 1, false);
  total += conv1(c.stem_f1, c.stem_f2);
  if (c.stem_f2 != c.in_channels) total += conv1(c.in_channels, c.stem_f2);

  auto irmb = [&](int64_t f) {
    return 2 * f + cna(f, f, 1, false) + cna(f, f, 3, true) + conv1(f, f);
  };
  auto down = [&](int64_t cin, int64_t f1, int64_t f2) {
    return 2 * cin + cna(cin, f1, 1, false) + cna(f1, f1, 3, true) + conv1(f1, f2);
  };
  auto mhsa_irmb = [&](int64_t f, int64_t f2) {
    int64_t n = 2 * f;                      // layer norm
    n += 4 * conv1(f, f);                   // q, k, v, wo
    n += cna(f, f, 3, true) + conv1(f, f2); // inner CNA + projection
    if (f2 != f) n += conv1(f, f2);         // skip projection
    return n;
  };

  total += c.stage1_blocks * irmb(c.stage1_f);
  total += down(c.stage1_f, c.down1_f1, c.down1_f2);
  total += c.stage2_blocks * irmb(c.stage2_f);
  total += down(c.stage2_f, c.down2_f1, c.down2_f2);
  total += c.stage3_blocks * mhsa_irmb(c.stage3_f, c.stage3_f);
  total += down(c.stage3_f, c.down3_f1, c.down3_f2);
  total += c.stage4_blocks * mhsa_irmb(c.stage4_f, c.stage4_f);
  total += c.mlp_hidden * c.stage4_f + c.mlp_hidden;  // fc1
  total += c.classes * c.mlp_hidden + c.classes;      // fc2
  return total;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr uint8_t kDtypeF64 = 1;
constexpr uint8_t kDtypeF32 = 2;

void write_tensor_record(std::ostream& out, const std::string& name, const Shape& shape,
                         const std::vector<double>& data) {
  binio::put_string(out, name);
  out.put(static_cast<char>(kDtypeF64));
  binio::put_u32(out, static_cast<uint32_t>(shape.size()));
  for (int64_t d : shape) binio::put_u32(out, static_cast<uint32_t>(d));
  for (double v : data) binio::put_f64(out, v);
}

struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

TensorRecord read_tensor_record(std::istream& in) {
  TensorRecord rec;
  rec.name = binio::get_string(in);
  int dtype = in.get();
  if (dtype != kDtypeF64 && dtype != kDtypeF32)
    throw FormatError("unknown dtype tag in checkpoint");
  uint32_t rank = binio::get_u32(in);
  if (rank > 8) throw FormatError("implausible tensor rank in checkpoint");
  int64_t numel = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    uint32_t d = binio::get_u32(in);
    rec.shape.push_back(d);
    numel *= d;
  }
  rec.data.resize(static_cast<size_t>(numel));
  for (double& v : rec.data)
    v = dtype == kDtypeF64 ? binio::get_f64(in) : static_cast<double>(binio::get_f32(in));
  return rec;
}

}  // namespace

void save_checkpoint(EmoModel& model, const std::string& path,
                     const std::map<std::string, std::string>& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");

  out.write("EMOC", 4);
  binio::put_u16(out, kCheckpointVersion);

  std::ostringstream config_block;
  config_block << model.config().to_text();
  for (const auto& [k, v] : metadata) config_block << k << " = " << v << "\n";
  binio::put_string(out, config_block.str());

  auto params = model.named_parameters();
  auto buffers = model.named_buffers();
  binio::put_u32(out, static_cast<uint32_t>(params.size() + buffers.size()));
  for (auto& [name, tensor] : params) write_tensor_record(out, name, tensor.shape(), tensor.data());
  for (auto& [name, buffer] : buffers)
    write_tensor_record(out, name, {static_cast<int64_t>(buffer->size())}, *buffer);
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");

  char magic[4];
  if (!binio::get_bytes(in, magic, 4) || std::memcmp(magic, "EMOC", 4) != 0)
    throw FormatError("not a checkpoint file (bad magic)");
  uint16_t version = binio::get_u16(in);
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));

  std::string config_text = binio::get_string(in, 1u << 24);
  KeyValues kv = parse_key_values_text(config_text);

  LoadedCheckpoint loaded;
  for (const auto& [k, v] : kv) loaded.metadata[k] = v;
  loaded.model = EmoModel(ModelConfig::from_key_values(kv));

  std::map<std::string, TensorRecord> records;
  uint32_t count = binio::get_u32(in);
  for (uint32_t i = 0; i < count; ++i) {
    TensorRecord rec = read_tensor_record(in);
    records.emplace(rec.name, std::move(rec));
  }

  for (auto& [name, tensor] : loaded.model.named_parameters()) {
    auto it = records.find(name);
    if (it == records.end()) throw FormatError("checkpoint missing tensor '" + name + "'");
    if (it->second.shape != tensor.shape())
      throw FormatError("checkpoint tensor '" + name + "' has shape " +
                        shape_str(it->second.shape) + ", expected " + shape_str(tensor.shape()));
    tensor.mutable_data() = it->second.data;
    records.erase(it);
  }
  for (auto& [name, buffer] : loaded.model.named_buffers()) {
    auto it = records.find(name);
    if (it == records.end()) throw FormatError("checkpoint missing buffer '" + name + "'");
    if (it->second.data.size() != buffer->size())
      throw FormatError("checkpoint buffer '" + name + "' has wrong length");
    *buffer = it->second.data;
    records.erase(it);
  }
  if (!records.empty())
    throw FormatError("checkpoint has unexpected tensor '" + records.begin()->first + "'");
  return loaded;
}

}  // namespace emocpd::nn
