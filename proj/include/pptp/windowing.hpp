#pragma once

// Differential windowing of a session into end-aligned analysis frames.
//
// Frame end times sit on a uniform hop grid starting one ECG/GSR window after
// t0. Every frame carries the ECG and GSR window ending at the frame end, all
// EMG windows whose end times lie on the same hop grid inside
// (end - ecg_gsr_window, end], the failure-risk vector as of the frame end,
// and the trust labels in force at that time.

#include "pptp/cp_eval.hpp"
#include "pptp/session.hpp"

#include <cstdint>
#include <vector>

namespace pptp {

struct WindowingConfig {
  std::int64_t ecg_gsr_window_ms = 3000;
  std::int64_t emg_window_ms = 216;
  std::int64_t hop_ms = 108;
  double gamma = kDefaultGamma;

  void validate() const;  // throws ConfigError
  // Upper bound on EMG windows in one frame: ceil(ecg_gsr_window / hop).
  std::size_t max_emg_windows() const;
};

enum class Trust3 { Low = 0, Medium = 1, High = 2 };
std::string_view trust3_name(Trust3 t);

struct TrustLabels {
  int label7 = 4;
  Trust3 label3 = Trust3::Medium;
};

// label7 = round-half-up of the mean, label3 bins the raw mean at 3 and 5.
TrustLabels label_from_muir(double muir_mean);

struct AnalysisFrame {
  std::int64_t end_ms = 0;
  std::vector<double> ecg;
  std::vector<double> gsr;
  std::vector<std::vector<double>> emg_left;   // oldest window first
  std::vector<std::vector<double>> emg_right;
  FailureRiskVector cp;

  bool labeled = false;
  int label7 = 0;
  Trust3 label3 = Trust3::Medium;
  double muir_mean = 0.0;
  int step_index = 0;  // label entry the frame belongs to

  std::vector<std::int64_t> emg_end_ms;  // end time of each EMG window
};

// Last round(window_ms * rate / 1000) samples before sample index
// floor((end_ms - t0) * rate / 1000). Throws NotEnoughSamples when the
// window reaches before the first sample or past the last one.
std::vector<double> window_slice(const SignalChannel& channel, std::int64_t end_ms, std::int64_t window_ms);
std::size_t window_length(double rate_hz, std::int64_t window_ms);

// All frame end times of the session (pure function of span, hop, window).
std::vector<std::int64_t> frame_end_times(const Session& session, const WindowingConfig& cfg);

// Builds one frame. Labels are attached when the session has a label track.
AnalysisFrame make_frame(const Session& session, std::int64_t end_ms, const WindowingConfig& cfg);

std::vector<AnalysisFrame> frame_stream(const Session& session, const WindowingConfig& cfg = {});

// Each frame takes the most recent entry with timestamp <= end_ms; frames
// before the first entry take the first entry. Throws ValidationError on an
// empty track.
void attach_labels(std::vector<AnalysisFrame>& frames, const LabelTrack& track);
void attach_labels(AnalysisFrame& frame, const LabelTrack& track);

}  // namespace pptp
