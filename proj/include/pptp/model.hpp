#pragma once

// PPTP classifier: per-channel RevIN and patch projection, EMG length
// matching, CP tokens, and a pre-norm transformer whose fusion blocks
// cross-attend to the CP tokens.

#include "pptp/autodiff.hpp"
#include "pptp/cp_eval.hpp"
#include "pptp/windowing.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace pptp::model {

using ad::Tensor;

inline constexpr std::size_t kSignalLength = 375;  // ECG/GSR window samples
inline constexpr std::size_t kEmgWindow = 272;
inline constexpr std::size_t kChannels = 4;         // ecg, gsr, emg_left, emg_right

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t patch_len = 25;
  std::size_t plain_per_group = 3;  // L
  std::size_t groups = 2;           // G
  std::size_t rel_pos_max_dist = 16;
  std::size_t n_classes = 3;
  bool cp_guidance = true;
  bool concat_baseline = false;  // CP tokens appended, plain blocks only
  double dropout = 0.0;
  std::size_t emg_hidden = 64;
  std::size_t max_emg_windows = 28;
  // Add each channel's raw mean and log-std, embedded by a small MLP, to its
  // tokens so the classifier still sees the level and amplitude RevIN removes.
  bool revin_stats = true;

  void validate() const;  // throws ConfigError
  std::size_t patches_per_channel() const { return kSignalLength / patch_len; }
  std::size_t physio_tokens() const { return kChannels * patches_per_channel(); }
  std::size_t depth() const { return (plain_per_group + 1) * groups; }
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// ---- RevIN -----------------------------------------------------------------

struct RevinState {
  double mean = 0.0;
  double std = 1.0;  // sqrt(var + eps)
  double gain = 1.0;
  double shift = 0.0;
};

inline constexpr double kRevinEps = 1e-5;

std::vector<double> revin_normalize(std::span<const double> x, RevinState& state);
std::vector<double> revin_denormalize(const RevinState& state, std::span<const double> y);

// ---- inputs ------------------------------------------------------------------

// Flattens the frame's EMG windows (oldest first) into max_windows rows of
// 272 samples; rows past the last window are zero. Throws ShapeError when
// there are too many windows or a window has the wrong length.
std::vector<double> emg_length_match(const std::vector<std::vector<double>>& windows, std::size_t max_windows);

struct SignalMask {
  bool ecg = true;
  bool gsr = true;
  bool emg = true;
  bool cp = true;

  bool any_signal() const { return ecg || gsr || emg; }
  std::string str() const;
};

SignalMask parse_signal_mask(const std::string& text);  // e.g. "ecg+gsr+emg+cp"

struct ModelInput {
  std::vector<double> ecg;
  std::vector<double> gsr;
  std::vector<double> emg_left;   // max_emg_windows * 272, zero padded
  std::vector<double> emg_right;
  std::array<double, kMaxBlocks> cp{};
};

// Masked signals become zero windows; a masked CP vector becomes all
// unstacked. Shapes never change.
ModelInput make_input(const AnalysisFrame& frame, const ModelConfig& cfg, const SignalMask& mask = {});

// ---- network -----------------------------------------------------------------

struct NamedParam {
  std::string name;
  Tensor tensor;
};

class PptpModel {
 public:
  explicit PptpModel(const ModelConfig& cfg, std::uint64_t seed = 1);

  const ModelConfig& config() const { return cfg_; }
  std::vector<NamedParam>& parameters() { return params_; }
  const std::vector<NamedParam>& parameters() const { return params_; }
  Tensor& param(const std::string& name);
  std::size_t parameter_count() const;

  // Stages, exposed for testing. Rank-2 tensors throughout.
  Tensor emg_ffn(const Tensor& flat, int side) const;           // [1, K0*272] -> [1, 375]
  Tensor revin(const Tensor& x, std::size_t channel) const;     // [1, 375] -> [1, 375]
  Tensor revin_stats(const Tensor& x, std::size_t channel) const;  // [1, n] -> [1, d]
  // -> [4*P, d]; `stats` rows, when given, are added to their channel's tokens.
  Tensor patch_embed(const std::array<Tensor, kChannels>& channels,
                     const std::array<Tensor, kChannels>* stats = nullptr) const;
  Tensor cp_embed(std::span<const double> f) const;             // -> [10, d]
  Tensor encoder_forward(const Tensor& physio, const Tensor& cp, std::mt19937_64* rng = nullptr) const;
  Tensor concat_baseline_forward(const Tensor& physio, const Tensor& cp, std::mt19937_64* rng = nullptr) const;
  Tensor classify(const Tensor& pooled) const;                  // [1, d] -> [1, C]

  // Full pipeline. `rng` enables dropout (training mode).
  Tensor forward(const ModelInput& input, std::mt19937_64* rng = nullptr) const;
  Tensor physio_tokens(const ModelInput& input) const;

  // Attention probabilities of the first self-attention layer, head `head`.
  Tensor attention_probs(const Tensor& tokens, std::size_t block, std::size_t head) const;

  void save(const std::filesystem::path& path) const;
  static PptpModel load(const std::filesystem::path& path);

 private:
  struct Attention {
    Tensor wq, bq, wk, wv, bv, wo, bo;
  };
  struct Block {
    bool fusion = false;
    std::size_t index = 0;
    Tensor ln1, ln2, ln_x, rel;
    Attention attn, xattn;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  };

  Tensor& add_param(const std::string& name, ad::Shape shape);
  void init_params(std::uint64_t seed);
  const Tensor& p(const std::string& name) const;
  void bind_blocks();
  Tensor self_attention(const Tensor& x, const Block& b, std::mt19937_64* rng) const;
  Tensor cross_attention(const Tensor& x, const Tensor& cp, const Block& b, std::mt19937_64* rng) const;
  Tensor feed_forward(const Tensor& x, const Block& b, std::mt19937_64* rng) const;
  Tensor rel_bias(const Block& b, std::size_t tokens) const;
  Tensor run_blocks(Tensor x, const Tensor* cp, bool allow_fusion, std::mt19937_64* rng) const;

  ModelConfig cfg_;
  std::vector<NamedParam> params_;
  std::vector<Block> blocks_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Argmax with ties broken toward the lower class id.
std::size_t predict(std::span<const double> logits);

inline constexpr const char* kCheckpointTag = "pptp-checkpoint v1";

}  // namespace pptp::model
