#pragma once

// Seeded synthetic subjects and block-stacking sessions with a known latent
// trust trajectory.
//
// Generative model
// ----------------
// Trust is updated at every placement step n:
//   trust_n = inertia * trust_{n-1}
//           + (1 - inertia) * (base(difficulty) - alpha * max(F_n, 0) - beta * [collapse at n])
// clamped to [1,7], starting from base(difficulty). A small sinusoidal drift is
// added between events. Signals follow the latent trust t:
//   ECG  unit pulses every 60000 / (base_hr + hr_trust_gain * (4 - t)) ms, plus noise
//   GSR  tonic + slow non-negative drift + skin-conductance bumps arriving as a
//        Poisson process with rate scr_rate_gain * (8 - t) per minute, plus noise
//   EMG  zero-mean Gaussian with sd emg_amp * (1 + 0.2 * (7 - t)), plus noise
// Questionnaire labels are the latent trust sampled at each placement time.

#include "pptp/cp_eval.hpp"
#include "pptp/session.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pptp::synth {

struct SubjectParams {
  std::uint64_t seed = 0;
  std::string subject_id;
  double base_hr_bpm = 70.0;    // U(55, 80)
  double hr_trust_gain = 7.0;   // U(5, 9) bpm per trust unit
  double gsr_tonic = 4.0;       // U(2, 6)
  double gsr_drift = 0.3;       // U(0.1, 0.5)
  double scr_rate_gain = 2.0;   // U(1.5, 3) events/min per trust unit
  double scr_amp = 0.5;         // U(0.3, 0.8)
  double emg_amp = 0.1;         // U(0.05, 0.15)
  std::array<double, 4> noise_sd = {0.05, 0.02, 0.008, 0.008};  // by ChannelKind
  double trust_inertia = 0.45;  // U(0.3, 0.6)
  double drift_phase = 0.0;     // U(0, 2*pi)
};

SubjectParams sample_subject(std::uint64_t seed);

struct TrustModel {
  double alpha = 2.0;
  double beta = 3.0;
  std::array<double, 3> base = {2.0, 4.0, 6.5};  // LD, MD, HD
  double drift_amp = 0.15;
  double drift_period_ms = 40000.0;
  double grid_ms = 250.0;

  double base_for(Difficulty d) const { return base[static_cast<int>(d)]; }
};

struct TrustSample {
  std::int64_t timestamp_ms = 0;
  double trust = 4.0;
};

struct LatentTrustTrajectory {
  std::vector<TrustSample> samples;  // strictly increasing timestamps
  std::vector<double> step_trust;    // drift-free value after each step

  // Value of the last sample at or before t (first sample before the start).
  double at(std::int64_t t) const;
};

LatentTrustTrajectory trust_dynamics(std::span<const RiskStep> cp_history, Difficulty difficulty,
                                     const SubjectParams& params, std::int64_t t0_ms, std::int64_t end_ms,
                                     const TrustModel& model = {});

std::array<SignalChannel, 4> synth_signals(const LatentTrustTrajectory& trajectory, const SubjectParams& params,
                                           std::int64_t t0_ms, std::int64_t duration_ms, std::uint64_t seed);

struct TaskConfig {
  double gamma = kDefaultGamma;
  double collapse_threshold = 1.5;
  std::array<double, 3> skew_sd = {0.02, 0.04, 0.05};  // block widths, by difficulty
  std::int64_t first_step_min_ms = 4000;
  std::int64_t first_step_max_ms = 7000;
  std::int64_t step_min_ms = 6000;
  std::int64_t step_max_ms = 9000;
  std::int64_t post_task_ms = 60000;
  std::int64_t t0_ms = 0;
  TrustModel trust;
};

// Placement records of one task; stops early on collapse.
std::vector<BlockPlacement> simulate_placements(Difficulty difficulty, std::uint64_t seed,
                                                const TaskConfig& cfg = {});

Session simulate_task(const SubjectParams& params, Difficulty difficulty, std::uint64_t seed,
                      const TaskConfig& cfg = {});

// Generates the session and writes it under `dir`. Throws SessionWriteError.
Session simulate_task_to_dir(const SubjectParams& params, Difficulty difficulty, std::uint64_t seed,
                             const std::filesystem::path& dir, const TaskConfig& cfg = {});

// Seeds used by the CLI and the acceptance suite.
std::uint64_t subject_seed(std::uint64_t base_seed, int subject);
std::uint64_t task_seed(std::uint64_t subject_seed, Difficulty d, int repeat = 0);

}  // namespace pptp::synth
