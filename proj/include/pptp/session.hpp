#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pptp {

enum class ChannelKind { Ecg = 0, Gsr = 1, EmgLeft = 2, EmgRight = 3 };
inline constexpr std::array<ChannelKind, 4> kAllChannels = {ChannelKind::Ecg, ChannelKind::Gsr,
                                                            ChannelKind::EmgLeft, ChannelKind::EmgRight};

std::string_view channel_name(ChannelKind kind);  // "ecg", "gsr", "emg_left", "emg_right"

enum class Difficulty { LD = 0, MD = 1, HD = 2 };
std::string_view difficulty_name(Difficulty d);
Difficulty parse_difficulty(std::string_view s);  // throws FormatError

inline constexpr double kNominalEcgGsrRateHz = 125.0;
inline constexpr double kNominalEmgRateHz = 1260.0;

struct SignalChannel {
  ChannelKind kind = ChannelKind::Ecg;
  double sample_rate_hz = 0.0;
  std::vector<double> samples;
  std::int64_t t0_ms = 0;

  // Time just past the last sample.
  double end_ms() const {
    return static_cast<double>(t0_ms) + static_cast<double>(samples.size()) * 1000.0 / sample_rate_hz;
  }
};

// Block coordinates are in block widths.
struct BlockPlacement {
  int step_index = 1;
  int layer = 1;
  double x_center = 0.0;
  std::vector<double> support_centers;
  std::int64_t timestamp_ms = 0;
  bool collapsed_after = false;

  bool operator==(const BlockPlacement&) const = default;
};

struct LabelEntry {
  int step_index = 1;
  std::int64_t timestamp_ms = 0;
  double muir_mean = 4.0;
  std::optional<double> nasa_tlx_mean;

  bool operator==(const LabelEntry&) const = default;
};

struct LabelTrack {
  std::vector<LabelEntry> entries;
};

struct Session {
  std::string subject_id;
  Difficulty difficulty = Difficulty::LD;
  std::int64_t t0_ms = 0;
  std::array<SignalChannel, 4> channels;  // indexed by ChannelKind
  std::vector<BlockPlacement> placements;
  LabelTrack labels;

  const SignalChannel& channel(ChannelKind k) const { return channels[static_cast<int>(k)]; }
  SignalChannel& channel(ChannelKind k) { return channels[static_cast<int>(k)]; }
};

// Throws ValidationError describing the first violated invariant.
void validate_session(const Session& s);
void validate_placements(const std::vector<BlockPlacement>& placements);
void validate_labels(const LabelTrack& track, const std::vector<BlockPlacement>& placements);

// Directory layout:
//   meta.json            subject_id, difficulty, t0_ms, rates{ecg,gsr,emg_left,emg_right}
//   <channel>.csv        "# rate_hz=<r> t0_ms=<t>" then one sample per line
//   placements.jsonl     one BlockPlacement per line
//   labels.jsonl         one LabelEntry per line
Session load_session(const std::filesystem::path& dir);
void save_session(const Session& s, const std::filesystem::path& dir);

}  // namespace pptp
