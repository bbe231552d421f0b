#include "pptp/windowing.hpp"

#include "pptp/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pptp {

void WindowingConfig::validate() const {
  if (hop_ms <= 0) throw ConfigError("hop_ms must be positive");
  if (emg_window_ms <= 0 || ecg_gsr_window_ms <= 0) throw ConfigError("window lengths must be positive");
  if (emg_window_ms > ecg_gsr_window_ms) throw ConfigError("emg_window_ms exceeds ecg_gsr_window_ms");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0,1)");
}

std::size_t WindowingConfig::max_emg_windows() const {
  return static_cast<std::size_t>((ecg_gsr_window_ms + hop_ms - 1) / hop_ms);
}

std::string_view trust3_name(Trust3 t) {
  switch (t) {
    case Trust3::Low:
      return "LOW";
    case Trust3::Medium:
      return "MEDIUM";
    case Trust3::High:
      return "HIGH";
  }
  return "?";
}

TrustLabels label_from_muir(double muir_mean) {
  if (!(muir_mean >= 1.0 && muir_mean <= 7.0)) {
    throw ValidationError("muir_mean " + std::to_string(muir_mean) + " outside [1,7]");
  }
  TrustLabels out;
  out.label7 = std::clamp(static_cast<int>(std::floor(muir_mean + 0.5)), 1, 7);
  out.label3 = muir_mean < 3.0 ? Trust3::Low : (muir_mean < 5.0 ? Trust3::Medium : Trust3::High);
  return out;
}

std::size_t window_length(double rate_hz, std::int64_t window_ms) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(window_ms) * rate_hz / 1000.0));
}

namespace {

// Exclusive end index of the window ending at end_ms.
std::int64_t end_index(const SignalChannel& c, std::int64_t end_ms) {
  const double idx = static_cast<double>(end_ms - c.t0_ms) * c.sample_rate_hz / 1000.0;
  return static_cast<std::int64_t>(std::floor(idx + 1e-9));
}

bool window_fits(const SignalChannel& c, std::int64_t end_ms, std::size_t w) {
  const std::int64_t idx = end_index(c, end_ms);
  return idx >= static_cast<std::int64_t>(w) && idx <= static_cast<std::int64_t>(c.samples.size());
}

}  // namespace

std::vector<double> window_slice(const SignalChannel& channel, std::int64_t end_ms, std::int64_t window_ms) {
  const std::size_t w = window_length(channel.sample_rate_hz, window_ms);
  const std::int64_t idx = end_index(channel, end_ms);
  if (idx < static_cast<std::int64_t>(w)) {
    throw NotEnoughSamples(std::string(channel_name(channel.kind)) + ": window of " +
                           std::to_string(w) + " samples ending at " + std::to_string(end_ms) +
                           " ms reaches before the first sample");
  }
  if (idx > static_cast<std::int64_t>(channel.samples.size())) {
    throw NotEnoughSamples(std::string(channel_name(channel.kind)) + ": window ending at " +
                           std::to_string(end_ms) + " ms runs past the recording");
  }
  const auto first = channel.samples.begin() + (idx - static_cast<std::int64_t>(w));
  return std::vector<double>(first, first + static_cast<std::ptrdiff_t>(w));
}

std::vector<std::int64_t> frame_end_times(const Session& session, const WindowingConfig& cfg) {
  cfg.validate();
  double span_end = session.channel(ChannelKind::Ecg).end_ms();
  for (ChannelKind k : kAllChannels) span_end = std::min(span_end, session.channel(k).end_ms());

  std::vector<std::int64_t> ends;
  for (std::int64_t end = session.t0_ms + cfg.ecg_gsr_window_ms; static_cast<double>(end) <= span_end + 1e-9;
       end += cfg.hop_ms) {
    ends.push_back(end);
  }
  return ends;
}

AnalysisFrame make_frame(const Session& session, std::int64_t end_ms, const WindowingConfig& cfg) {
  AnalysisFrame frame;
  frame.end_ms = end_ms;
  frame.ecg = window_slice(session.channel(ChannelKind::Ecg), end_ms, cfg.ecg_gsr_window_ms);
  frame.gsr = window_slice(session.channel(ChannelKind::Gsr), end_ms, cfg.ecg_gsr_window_ms);

  const auto& left = session.channel(ChannelKind::EmgLeft);
  const auto& right = session.channel(ChannelKind::EmgRight);
  const std::size_t wl = window_length(left.sample_rate_hz, cfg.emg_window_ms);
  const std::size_t wr = window_length(right.sample_rate_hz, cfg.emg_window_ms);
  std::vector<std::int64_t> emg_ends;
  for (std::int64_t e = end_ms; e > end_ms - cfg.ecg_gsr_window_ms; e -= cfg.hop_ms) {
    if (window_fits(left, e, wl) && window_fits(right, e, wr)) emg_ends.push_back(e);
  }
  std::reverse(emg_ends.begin(), emg_ends.end());
  for (std::int64_t e : emg_ends) {
    frame.emg_left.push_back(window_slice(left, e, cfg.emg_window_ms));
    frame.emg_right.push_back(window_slice(right, e, cfg.emg_window_ms));
  }
  frame.emg_end_ms = std::move(emg_ends);

  frame.cp = failure_risk_vector(session.placements, end_ms, cfg.gamma);
  if (!session.labels.entries.empty()) attach_labels(frame, session.labels);
  return frame;
}

std::vector<AnalysisFrame> frame_stream(const Session& session, const WindowingConfig& cfg) {
  std::vector<AnalysisFrame> frames;
  for (std::int64_t end : frame_end_times(session, cfg)) frames.push_back(make_frame(session, end, cfg));
  return frames;
}

void attach_labels(AnalysisFrame& frame, const LabelTrack& track) {
  if (track.entries.empty()) throw ValidationError("attach_labels: empty label track");
  const LabelEntry* chosen = &track.entries.front();
  for (const auto& e : track.entries) {
    if (e.timestamp_ms <= frame.end_ms) chosen = &e;
    else break;
  }
  const TrustLabels labels = label_from_muir(chosen->muir_mean);
  frame.labeled = true;
  frame.label7 = labels.label7;
  frame.label3 = labels.label3;
  frame.muir_mean = chosen->muir_mean;
  frame.step_index = chosen->step_index;
}

void attach_labels(std::vector<AnalysisFrame>& frames, const LabelTrack& track) {
  if (track.entries.empty()) throw ValidationError("attach_labels: empty label track");
  for (auto& f : frames) attach_labels(f, track);
}

}  // namespace pptp
