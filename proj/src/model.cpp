#include "pptp/model.hpp"

#include "pptp/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pptp::model {

using namespace pptp::ad;

void ModelConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
    throw ConfigError("d_model must be a positive multiple of n_heads");
  if (patch_len == 0 || kSignalLength % patch_len != 0)
    throw ConfigError("patch_len " + std::to_string(patch_len) + " does not divide 375");
  if (groups == 0) throw ConfigError("groups must be positive");
  if (ffn_mult == 0 || emg_hidden == 0) throw ConfigError("ffn_mult and emg_hidden must be positive");
  if (n_classes < 2) throw ConfigError("n_classes must be at least 2");
  if (max_emg_windows == 0) throw ConfigError("max_emg_windows must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"d_model", c.d_model},
       {"n_heads", c.n_heads},
       {"ffn_mult", c.ffn_mult},
       {"patch_len", c.patch_len},
       {"plain_per_group", c.plain_per_group},
       {"groups", c.groups},
       {"rel_pos_max_dist", c.rel_pos_max_dist},
       {"n_classes", c.n_classes},
       {"cp_guidance", c.cp_guidance},
       {"concat_baseline", c.concat_baseline},
       {"dropout", c.dropout},
       {"emg_hidden", c.emg_hidden},
       {"max_emg_windows", c.max_emg_windows},
       {"revin_stats", c.revin_stats}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const char* known[] = {"d_model",   "n_heads",         "ffn_mult",   "patch_len",
                                "plain_per_group", "groups",    "rel_pos_max_dist",
                                "n_classes", "cp_guidance",     "concat_baseline", "dropout",
                                "emg_hidden", "max_emg_windows", "revin_stats"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return it.key() == k; }) ==
        std::end(known))
      throw ConfigError("unknown model option '" + it.key() + "'");
  }
  try {
    c.d_model = j.value("d_model", c.d_model);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
    c.patch_len = j.value("patch_len", c.patch_len);
    c.plain_per_group = j.value("plain_per_group", c.plain_per_group);
    c.groups = j.value("groups", c.groups);
    c.rel_pos_max_dist = j.value("rel_pos_max_dist", c.rel_pos_max_dist);
    c.n_classes = j.value("n_classes", c.n_classes);
    c.cp_guidance = j.value("cp_guidance", c.cp_guidance);
    c.concat_baseline = j.value("concat_baseline", c.concat_baseline);
    c.dropout = j.value("dropout", c.dropout);
    c.emg_hidden = j.value("emg_hidden", c.emg_hidden);
    c.max_emg_windows = j.value("max_emg_windows", c.max_emg_windows);
    c.revin_stats = j.value("revin_stats", c.revin_stats);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

// ---- RevIN -----------------------------------------------------------------

std::vector<double> revin_normalize(std::span<const double> x, RevinState& state) {
  if (x.empty()) throw ShapeError("revin_normalize: empty window");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  state.mean = mean;
  state.std = std::sqrt(var + kRevinEps);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / state.std * state.gain + state.shift;
  return out;
}

std::vector<double> revin_denormalize(const RevinState& state, std::span<const double> y) {
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = (y[i] - state.shift) / state.gain * state.std + state.mean;
  return out;
}

// ---- inputs ------------------------------------------------------------------

std::vector<double> emg_length_match(const std::vector<std::vector<double>>& windows, std::size_t max_windows) {
  if (windows.size() > max_windows) {
    throw ShapeError("emg_length_match: " + std::to_string(windows.size()) + " windows exceed " +
                     std::to_string(max_windows));
  }
  std::vector<double> flat(max_windows * kEmgWindow, 0.0);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    if (windows[w].size() != kEmgWindow)
      throw ShapeError("emg_length_match: window of " + std::to_string(windows[w].size()) + " samples");
    std::copy(windows[w].begin(), windows[w].end(), flat.begin() + static_cast<std::ptrdiff_t>(w * kEmgWindow));
  }
  return flat;
}

std::string SignalMask::str() const {
  std::string s;
  auto put = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += '+';
    s += name;
  };
  put(ecg, "ecg");
  put(gsr, "gsr");
  put(emg, "emg");
  put(cp, "cp");
  return s.empty() ? "none" : s;
}

SignalMask parse_signal_mask(const std::string& text) {
  SignalMask m{false, false, false, false};
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, '+')) {
    if (part == "ecg") m.ecg = true;
    else if (part == "gsr") m.gsr = true;
    else if (part == "emg") m.emg = true;
    else if (part == "cp") m.cp = true;
    else if (part == "all") m = {};
    else throw ConfigError("unknown signal '" + part + "' in mask '" + text + "'");
  }
  if (!m.any_signal() && !m.cp) throw ConfigError("signal mask '" + text + "' selects nothing");
  return m;
}

ModelInput make_input(const AnalysisFrame& frame, const ModelConfig& cfg, const SignalMask& mask) {
  if (frame.ecg.size() != kSignalLength || frame.gsr.size() != kSignalLength)
    throw ShapeError("make_input: ECG/GSR windows must hold 375 samples");
  ModelInput in;
  in.ecg = mask.ecg ? frame.ecg : std::vector<double>(kSignalLength, 0.0);
  in.gsr = mask.gsr ? frame.gsr : std::vector<double>(kSignalLength, 0.0);
  in.emg_left = emg_length_match(frame.emg_left, cfg.max_emg_windows);
  in.emg_right = emg_length_match(frame.emg_right, cfg.max_emg_windows);
  if (!mask.emg) {
    std::fill(in.emg_left.begin(), in.emg_left.end(), 0.0);
    std::fill(in.emg_right.begin(), in.emg_right.end(), 0.0);
  }
  if (mask.cp) {
    std::copy(frame.cp.f.begin(), frame.cp.f.end(), in.cp.begin());
  } else {
    in.cp.fill(kUnstacked);
  }
  return in;
}

// ---- network -----------------------------------------------------------------

namespace {

std::string block_prefix(std::size_t i) { return "block" + std::to_string(i) + "."; }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add(matmul(x, w), b); }

bool is_embedding(const std::string& name) {
  return name == "channel_emb" || name == "cp.pos" || name.ends_with(".rel");
}

bool is_gain(const std::string& name) {
  return name.ends_with(".ln1") || name.ends_with(".ln2") || name.ends_with(".ln_x") ||
         name.ends_with(".gain");
}

}  // namespace

PptpModel::PptpModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.d_model;
  const std::size_t flat = cfg_.max_emg_windows * kEmgWindow;
  for (const char* side : {"emg_left", "emg_right"}) {
    add_param(std::string(side) + ".w1", {flat, cfg_.emg_hidden});
    add_param(std::string(side) + ".w2", {cfg_.emg_hidden, kSignalLength});
  }
  for (std::size_t c = 0; c < kChannels; ++c) {
    add_param("revin" + std::to_string(c) + ".gain", {1});
    add_param("revin" + std::to_string(c) + ".shift", {1});
    if (cfg_.revin_stats) {
      const std::string pre = "revin" + std::to_string(c) + ".stats.";
      add_param(pre + "w1", {2, d});
      add_param(pre + "b1", {1, d});
      add_param(pre + "w2", {d, d});
    }
  }
  add_param("patch.w", {cfg_.patch_len, d});
  add_param("patch.b", {1, d});
  add_param("channel_emb", {kChannels, d});
  add_param("cp.w", {1, d});
  add_param("cp.b", {1, d});
  add_param("cp.pos", {kMaxBlocks, d});

  const std::size_t rel = 2 * cfg_.rel_pos_max_dist + 1;
  // No key bias: it shifts every logit of a row equally and has zero gradient.
  auto add_attention = [&](const std::string& pre) {
    for (const char* w : {"q", "k", "v", "o"}) {
      add_param(pre + "w" + w, {d, d});
      if (std::string_view(w) != "k") add_param(pre + "b" + w, {1, d});
    }
  };
  std::size_t index = 0;
  for (std::size_t g = 0; g < cfg_.groups; ++g) {
    for (std::size_t l = 0; l <= cfg_.plain_per_group; ++l) {
      const bool fusion = (l == cfg_.plain_per_group) && !cfg_.concat_baseline;
      const std::string pre = block_prefix(index);
      add_param(pre + "ln1", {1, d});
      add_attention(pre + "attn.");
      add_param(pre + "attn.rel", {rel, cfg_.n_heads});
      if (fusion) {
        add_param(pre + "ln_x", {1, d});
        add_attention(pre + "xattn.");
      }
      add_param(pre + "ln2", {1, d});
      add_param(pre + "ffn.w1", {d, d * cfg_.ffn_mult});
      add_param(pre + "ffn.b1", {1, d * cfg_.ffn_mult});
      add_param(pre + "ffn.w2", {d * cfg_.ffn_mult, d});
      add_param(pre + "ffn.b2", {1, d});
      blocks_.push_back({fusion, index});
      ++index;
    }
  }
  add_param("head.w", {d, cfg_.n_classes});
  add_param("head.b", {1, cfg_.n_classes});
  init_params(seed);
  bind_blocks();
}

// Tensors share storage with params_, so handles stay valid after loads.
void PptpModel::bind_blocks() {
  auto attn = [&](const std::string& pre) {
    return Attention{p(pre + "wq"), p(pre + "bq"), p(pre + "wk"), p(pre + "wv"),
                     p(pre + "bv"), p(pre + "wo"), p(pre + "bo")};
  };
  for (auto& b : blocks_) {
    const std::string pre = block_prefix(b.index);
    b.ln1 = p(pre + "ln1");
    b.ln2 = p(pre + "ln2");
    b.rel = p(pre + "attn.rel");
    b.attn = attn(pre + "attn.");
    if (b.fusion) {
      b.ln_x = p(pre + "ln_x");
      b.xattn = attn(pre + "xattn.");
    }
    b.ffn_w1 = p(pre + "ffn.w1");
    b.ffn_b1 = p(pre + "ffn.b1");
    b.ffn_w2 = p(pre + "ffn.w2");
    b.ffn_b2 = p(pre + "ffn.b2");
  }
}

Tensor& PptpModel::add_param(const std::string& name, ad::Shape shape) {
  index_[name] = params_.size();
  params_.push_back({name, Tensor::zeros(std::move(shape), true)});
  return params_.back().tensor;
}

void PptpModel::init_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> emb(0.0, 0.02);
  // Biases share the fan-in of the weight they follow.
  std::size_t fan_in = 1;
  for (auto& [name, t] : params_) {
    auto data = t.mutable_data();
    if (name.ends_with(".shift")) {
      std::fill(data.begin(), data.end(), 0.0);
    } else if (is_gain(name)) {
      std::fill(data.begin(), data.end(), 1.0);
    } else if (is_embedding(name)) {
      for (double& v : data) v = emb(rng);
    } else {
      const bool bias = t.dim(0) == 1 && name.find(".b") != std::string::npos;
      if (!bias) fan_in = t.dim(0);
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& v : data) v = u(rng);
    }
  }
}

Tensor& PptpModel::param(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("no parameter named '" + name + "'");
  return params_[it->second].tensor;
}

const Tensor& PptpModel::p(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("no parameter named '" + name + "'");
  return params_[it->second].tensor;
}

std::size_t PptpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& np : params_) n += np.tensor.size();
  return n;
}

Tensor PptpModel::emg_ffn(const Tensor& flat, int side) const {
  const std::string pre = side == 0 ? "emg_left" : "emg_right";
  if (flat.rank() != 2 || flat.dim(0) != 1 || flat.dim(1) != cfg_.max_emg_windows * kEmgWindow)
    throw ShapeError("emg_ffn: expected [1," + std::to_string(cfg_.max_emg_windows * kEmgWindow) + "], got " +
                     shape_str(flat.shape()));
  return matmul(gelu(matmul(flat, p(pre + ".w1"))), p(pre + ".w2"));
}

Tensor PptpModel::revin(const Tensor& x, std::size_t channel) const {
  const std::string pre = "revin" + std::to_string(channel);
  const Tensor ones = Tensor::full({1, x.dim(1)}, 1.0);
  return add(mul(layernorm_nobias(x, ones), p(pre + ".gain")), p(pre + ".shift"));
}

Tensor PptpModel::revin_stats(const Tensor& x, std::size_t channel) const {
  const Tensor mean = mean_pool(x, 1);
  const Tensor centred = sub(x, mean);
  const Tensor var = mean_pool(mul(centred, centred), 1);
  const Tensor log_std = scale(ad::log(add(var, Tensor::scalar(kRevinEps))), 0.5);
  // Nonlinear so the following LayerNorm cannot cancel the magnitude.
  const std::string pre = "revin" + std::to_string(channel) + ".stats.";
  return matmul(gelu(linear(concat({mean, log_std}, 1), p(pre + "w1"), p(pre + "b1"))), p(pre + "w2"));
}

Tensor PptpModel::patch_embed(const std::array<Tensor, kChannels>& channels,
                              const std::array<Tensor, kChannels>* stats) const {
  const std::size_t np = cfg_.patches_per_channel();
  std::vector<Tensor> parts;
  for (std::size_t c = 0; c < kChannels; ++c) {
    if (channels[c].size() != kSignalLength)
      throw ShapeError("patch_embed: channel " + std::to_string(c) + " has " + std::to_string(channels[c].size()) +
                       " samples");
    const Tensor patches = reshape(channels[c], {np, cfg_.patch_len});
    const std::size_t idx[] = {c};
    const Tensor chan = embedding_lookup(p("channel_emb"), idx);
    Tensor tokens = add(add(matmul(patches, p("patch.w")), p("patch.b")), chan);
    if (stats) tokens = add(tokens, (*stats)[c]);
    parts.push_back(tokens);
  }
  return concat(parts, 0);
}

Tensor PptpModel::cp_embed(std::span<const double> f) const {
  if (f.size() != kMaxBlocks) throw ShapeError("cp_embed: expected 10 values");
  const Tensor values = Tensor::from({kMaxBlocks, 1}, std::vector<double>(f.begin(), f.end()));
  return add(add(matmul(values, p("cp.w")), p("cp.b")), p("cp.pos"));
}

Tensor PptpModel::rel_bias(const Block& b, std::size_t tokens) const {
  thread_local std::vector<std::size_t> idx;
  thread_local std::size_t cached_tokens = 0, cached_dist = 0;
  if (cached_tokens != tokens || cached_dist != cfg_.rel_pos_max_dist) {
    const auto r = static_cast<std::ptrdiff_t>(cfg_.rel_pos_max_dist);
    idx.resize(tokens * tokens);
    for (std::size_t i = 0; i < tokens; ++i) {
      for (std::size_t j = 0; j < tokens; ++j) {
        const auto delta = std::clamp(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(j), -r, r);
        idx[i * tokens + j] = static_cast<std::size_t>(delta + r);
      }
    }
    cached_tokens = tokens;
    cached_dist = cfg_.rel_pos_max_dist;
  }
  // [heads, tokens * tokens]; row h reshapes to the bias matrix of head h.
  return transpose(embedding_lookup(b.rel, idx));
}

namespace {

Tensor maybe_dropout(const Tensor& x, double p, std::mt19937_64* rng) {
  return (rng && p > 0.0) ? dropout(x, p, *rng) : x;
}

}  // namespace

Tensor PptpModel::attention_probs(const Tensor& tokens, std::size_t block, std::size_t head) const {
  const Block& b = blocks_.at(block);
  const std::size_t dh = cfg_.d_model / cfg_.n_heads;
  const Tensor xn = layernorm_nobias(tokens, b.ln1);
  const Tensor q = slice(linear(xn, b.attn.wq, b.attn.bq), 1, head * dh, dh);
  const Tensor k = slice(matmul(xn, b.attn.wk), 1, head * dh, dh);
  const std::size_t t = tokens.dim(0);
  const Tensor bias = reshape(slice(rel_bias(b, t), 0, head, 1), {t, t});
  const Tensor logits = add(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dh))), bias);
  return softmax(logits, 1);
}

Tensor PptpModel::self_attention(const Tensor& x, const Block& b, std::mt19937_64* rng) const {
  const std::size_t dh = cfg_.d_model / cfg_.n_heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor xn = layernorm_nobias(x, b.ln1);
  const Tensor q = linear(xn, b.attn.wq, b.attn.bq);
  const Tensor k = matmul(xn, b.attn.wk);
  const Tensor v = linear(xn, b.attn.wv, b.attn.bv);
  const std::size_t t = x.dim(0);
  const Tensor bias = rel_bias(b, t);
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
    const Tensor qh = slice(q, 1, h * dh, dh);
    const Tensor kh = slice(k, 1, h * dh, dh);
    const Tensor vh = slice(v, 1, h * dh, dh);
    const Tensor logits = add(scale(matmul(qh, transpose(kh)), inv), reshape(slice(bias, 0, h, 1), {t, t}));
    heads.push_back(matmul(maybe_dropout(softmax(logits, 1), cfg_.dropout, rng), vh));
  }
  const Tensor merged = heads.size() == 1 ? heads[0] : concat(heads, 1);
  return maybe_dropout(linear(merged, b.attn.wo, b.attn.bo), cfg_.dropout, rng);
}

Tensor PptpModel::cross_attention(const Tensor& x, const Tensor& cp, const Block& b, std::mt19937_64* rng) const {
  const std::size_t dh = cfg_.d_model / cfg_.n_heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor xn = layernorm_nobias(x, b.ln_x);
  const Tensor q = linear(xn, b.xattn.wq, b.xattn.bq);
  const Tensor k = matmul(cp, b.xattn.wk);
  const Tensor v = linear(cp, b.xattn.wv, b.xattn.bv);
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
    const Tensor logits = scale(matmul(slice(q, 1, h * dh, dh), transpose(slice(k, 1, h * dh, dh))), inv);
    heads.push_back(matmul(maybe_dropout(softmax(logits, 1), cfg_.dropout, rng), slice(v, 1, h * dh, dh)));
  }
  const Tensor merged = heads.size() == 1 ? heads[0] : concat(heads, 1);
  return maybe_dropout(linear(merged, b.xattn.wo, b.xattn.bo), cfg_.dropout, rng);
}

Tensor PptpModel::feed_forward(const Tensor& x, const Block& b, std::mt19937_64* rng) const {
  const Tensor xn = layernorm_nobias(x, b.ln2);
  const Tensor hidden = gelu(linear(xn, b.ffn_w1, b.ffn_b1));
  return maybe_dropout(linear(hidden, b.ffn_w2, b.ffn_b2), cfg_.dropout, rng);
}

Tensor PptpModel::run_blocks(Tensor x, const Tensor* cp, bool allow_fusion, std::mt19937_64* rng) const {
  for (const auto& b : blocks_) {
    x = add(x, self_attention(x, b, rng));
    if (b.fusion && allow_fusion && cp) x = add(x, cross_attention(x, *cp, b, rng));
    x = add(x, feed_forward(x, b, rng));
  }
  return x;
}

Tensor PptpModel::encoder_forward(const Tensor& physio, const Tensor& cp, std::mt19937_64* rng) const {
  if (physio.rank() != 2 || physio.dim(1) != cfg_.d_model)
    throw ShapeError("encoder_forward: physio tokens " + shape_str(physio.shape()));
  if (cp.rank() != 2 || cp.dim(1) != cfg_.d_model)
    throw ShapeError("encoder_forward: cp tokens " + shape_str(cp.shape()));
  return mean_pool(run_blocks(physio, &cp, cfg_.cp_guidance, rng), 0);
}

Tensor PptpModel::concat_baseline_forward(const Tensor& physio, const Tensor& cp, std::mt19937_64* rng) const {
  if (physio.rank() != 2 || cp.rank() != 2 || physio.dim(1) != cfg_.d_model || cp.dim(1) != cfg_.d_model)
    throw ShapeError("concat_baseline_forward: token widths differ from d_model");
  return mean_pool(run_blocks(concat({physio, cp}, 0), nullptr, false, rng), 0);
}

Tensor PptpModel::classify(const Tensor& pooled) const {
  if (pooled.rank() != 2 || pooled.dim(0) != 1 || pooled.dim(1) != cfg_.d_model)
    throw ShapeError("classify: expected [1," + std::to_string(cfg_.d_model) + "], got " + shape_str(pooled.shape()));
  return linear(pooled, p("head.w"), p("head.b"));
}

Tensor PptpModel::physio_tokens(const ModelInput& in) const {
  auto row = [](const std::vector<double>& v) { return Tensor::from({1, v.size()}, v); };
  std::array<Tensor, kChannels> ch = {row(in.ecg), row(in.gsr), emg_ffn(row(in.emg_left), 0),
                                      emg_ffn(row(in.emg_right), 1)};
  if (!cfg_.revin_stats) {
    for (std::size_t c = 0; c < kChannels; ++c) ch[c] = revin(ch[c], c);
    return patch_embed(ch);
  }
  // EMG levels come from the raw windows, ahead of the learned projection.
  const std::array<Tensor, kChannels> raw = {ch[0], ch[1], row(in.emg_left), row(in.emg_right)};
  std::array<Tensor, kChannels> stats;
  for (std::size_t c = 0; c < kChannels; ++c) {
    stats[c] = revin_stats(raw[c], c);
    ch[c] = revin(ch[c], c);
  }
  return patch_embed(ch, &stats);
}

Tensor PptpModel::forward(const ModelInput& in, std::mt19937_64* rng) const {
  const Tensor physio = physio_tokens(in);
  const Tensor cp = cp_embed(in.cp);
  const Tensor pooled =
      cfg_.concat_baseline ? concat_baseline_forward(physio, cp, rng) : encoder_forward(physio, cp, rng);
  return classify(pooled);
}

std::size_t predict(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("predict: empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

// ---- checkpoints -------------------------------------------------------------

void PptpModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  nlohmann::json cfg = cfg_;
  out << kCheckpointTag << '\n' << "config " << cfg.dump() << '\n' << "params " << params_.size() << '\n';
  for (const auto& [name, t] : params_) {
    out << name;
    for (std::size_t d : t.shape()) out << ' ' << d;
    out << '\n';
  }
  out << "end\n";
  for (const auto& np : params_) {
    for (double v : np.tensor.data()) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  }
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

PptpModel PptpModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointTag) throw FormatError("not a checkpoint: " + path.string());
  if (!std::getline(in, line) || !line.starts_with("config "))
    throw FormatError("checkpoint: missing config line");
  ModelConfig cfg;
  try {
    cfg = nlohmann::json::parse(line.substr(7)).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  PptpModel model(cfg, 0);
  std::size_t count = 0;
  if (!std::getline(in, line) || std::sscanf(line.c_str(), "params %zu", &count) != 1)
    throw FormatError("checkpoint: missing parameter count");
  if (count != model.params_.size())
    throw FormatError("checkpoint: " + std::to_string(count) + " arrays, model expects " +
                      std::to_string(model.params_.size()));
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw FormatError("checkpoint: truncated manifest");
    std::istringstream ls(line);
    std::string name;
    ls >> name;
    ad::Shape shape;
    std::size_t d;
    while (ls >> d) shape.push_back(d);
    const auto& expect = model.params_[i];
    if (name != expect.name || shape != expect.tensor.shape())
      throw FormatError("checkpoint: manifest entry '" + line + "' does not match " + expect.name + ' ' +
                        shape_str(expect.tensor.shape()));
  }
  if (!std::getline(in, line) || line != "end") throw FormatError("checkpoint: missing manifest end");
  for (auto& np : model.params_) {
    for (double& v : np.tensor.mutable_data()) {
      std::uint32_t bits = 0;
      if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits)) throw FormatError("checkpoint: truncated data");
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      v = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return model;
}

}  // namespace pptp::model
