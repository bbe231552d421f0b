#include "pptp/synth.hpp"

#include "pptp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace pptp::synth {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct TemplateBlock {
  int layer;
  double x_nominal;
  std::vector<int> supports;  // indices of earlier blocks
};

// Target constructions, ten blocks each, in placement order.
std::vector<TemplateBlock> construction_template(Difficulty d) {
  switch (d) {
    case Difficulty::LD:  // 4-3-2-1 pyramid
      return {{1, 0.0, {}},      {1, 1.0, {}},      {1, 2.0, {}},      {1, 3.0, {}},
              {2, 0.5, {0, 1}},  {2, 1.5, {1, 2}},  {2, 2.5, {2, 3}},  {3, 1.0, {4, 5}},
              {3, 2.0, {5, 6}},  {4, 1.5, {7, 8}}};
    case Difficulty::MD:  // 3-2-2-1-1-1
      return {{1, 0.0, {}},     {1, 1.0, {}},     {1, 2.0, {}},   {2, 0.5, {0, 1}}, {2, 1.5, {1, 2}},
              {3, 0.5, {3}},    {3, 1.5, {4}},    {4, 1.0, {5, 6}}, {5, 1.0, {7}},  {6, 1.0, {8}}};
    case Difficulty::HD:  // 2-1-1-... tower
    default: {
      std::vector<TemplateBlock> t = {{1, 0.0, {}}, {1, 1.0, {}}, {2, 0.5, {0, 1}}};
      for (int layer = 3; layer <= 9; ++layer) t.push_back({layer, 0.5, {static_cast<int>(t.size()) - 1}});
      return t;
    }
  }
}

// Forward-only cursor over a trajectory for monotone time queries.
class TrustCursor {
 public:
  explicit TrustCursor(const LatentTrustTrajectory& traj) : traj_(traj) {}
  double at(double t_ms) {
    const auto& s = traj_.samples;
    while (pos_ + 1 < s.size() && static_cast<double>(s[pos_ + 1].timestamp_ms) <= t_ms) ++pos_;
    return s[pos_].trust;
  }

 private:
  const LatentTrustTrajectory& traj_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t subject_seed(std::uint64_t base_seed, int subject) {
  return mix(base_seed * 1000003ULL + static_cast<std::uint64_t>(subject));
}

std::uint64_t task_seed(std::uint64_t subject_seed, Difficulty d, int repeat) {
  return mix(subject_seed ^ (0x1000ULL * (static_cast<std::uint64_t>(d) + 1) + static_cast<std::uint64_t>(repeat)));
}

SubjectParams sample_subject(std::uint64_t seed) {
  std::mt19937_64 rng(mix(seed));
  SubjectParams p;
  p.seed = seed;
  p.subject_id = "S" + std::to_string(seed);
  p.base_hr_bpm = uniform(rng, 55.0, 80.0);
  p.hr_trust_gain = uniform(rng, 5.0, 9.0);
  p.gsr_tonic = uniform(rng, 2.0, 6.0);
  p.gsr_drift = uniform(rng, 0.1, 0.5);
  p.scr_rate_gain = uniform(rng, 1.5, 3.0);
  p.scr_amp = uniform(rng, 0.3, 0.8);
  p.emg_amp = uniform(rng, 0.05, 0.15);
  p.noise_sd[static_cast<int>(ChannelKind::Ecg)] = uniform(rng, 0.02, 0.08);
  p.noise_sd[static_cast<int>(ChannelKind::Gsr)] = uniform(rng, 0.01, 0.03);
  p.noise_sd[static_cast<int>(ChannelKind::EmgLeft)] = uniform(rng, 0.005, 0.01);
  p.noise_sd[static_cast<int>(ChannelKind::EmgRight)] = uniform(rng, 0.005, 0.01);
  p.trust_inertia = uniform(rng, 0.3, 0.6);
  p.drift_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return p;
}

double LatentTrustTrajectory::at(std::int64_t t) const {
  if (samples.empty()) throw ValidationError("empty trust trajectory");
  auto it = std::upper_bound(samples.begin(), samples.end(), t,
                             [](std::int64_t v, const TrustSample& s) { return v < s.timestamp_ms; });
  if (it == samples.begin()) return samples.front().trust;
  return std::prev(it)->trust;
}

LatentTrustTrajectory trust_dynamics(std::span<const RiskStep> cp_history, Difficulty difficulty,
                                     const SubjectParams& params, std::int64_t t0_ms, std::int64_t end_ms,
                                     const TrustModel& model) {
  const double base = model.base_for(difficulty);
  const double inertia = params.trust_inertia;

  LatentTrustTrajectory traj;
  std::vector<std::int64_t> event_times;
  double trust = std::clamp(base, 1.0, 7.0);
  for (const auto& step : cp_history) {
    const double target = base - model.alpha * std::max(step.risk, 0.0) - (step.collapsed ? model.beta : 0.0);
    trust = std::clamp(inertia * trust + (1.0 - inertia) * target, 1.0, 7.0);
    traj.step_trust.push_back(trust);
    event_times.push_back(step.timestamp_ms);
  }

  auto step_value = [&](std::int64_t t) {
    double v = std::clamp(base, 1.0, 7.0);
    for (std::size_t i = 0; i < event_times.size() && event_times[i] <= t; ++i) v = traj.step_trust[i];
    return v;
  };
  auto drift = [&](std::int64_t t) {
    if (model.drift_amp == 0.0) return 0.0;
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(t - t0_ms) / model.drift_period_ms;
    return model.drift_amp * std::sin(phase + params.drift_phase);
  };

  std::vector<std::int64_t> times = event_times;
  const auto grid = static_cast<std::int64_t>(model.grid_ms);
  for (std::int64_t t = t0_ms; t <= end_ms; t += grid) times.push_back(t);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  for (std::int64_t t : times) traj.samples.push_back({t, std::clamp(step_value(t) + drift(t), 1.0, 7.0)});
  return traj;
}

std::array<SignalChannel, 4> synth_signals(const LatentTrustTrajectory& trajectory, const SubjectParams& params,
                                           std::int64_t t0_ms, std::int64_t duration_ms, std::uint64_t seed) {
  std::mt19937_64 rng(mix(seed ^ 0x5167a15ULL));
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::array<SignalChannel, 4> ch;
  for (ChannelKind k : kAllChannels) {
    auto& c = ch[static_cast<int>(k)];
    c.kind = k;
    c.t0_ms = t0_ms;
    const bool emg = k == ChannelKind::EmgLeft || k == ChannelKind::EmgRight;
    c.sample_rate_hz = emg ? kNominalEmgRateHz : kNominalEcgGsrRateHz;
    const auto n = static_cast<std::size_t>(std::ceil(static_cast<double>(duration_ms) * c.sample_rate_hz / 1000.0));
    c.samples.assign(n, 0.0);
  }
  auto sample_time = [&](const SignalChannel& c, std::size_t i) {
    return static_cast<double>(t0_ms) + static_cast<double>(i) * 1000.0 / c.sample_rate_hz;
  };

  // ECG: unit pulses at the current RR interval.
  {
    auto& c = ch[static_cast<int>(ChannelKind::Ecg)];
    const double sd = params.noise_sd[static_cast<int>(ChannelKind::Ecg)];
    if (sd > 0.0)
      for (double& v : c.samples) v = sd * std_normal(rng);
    TrustCursor cur(trajectory);
    auto rr_ms = [&](double t) {
      const double hr = std::clamp(params.base_hr_bpm + params.hr_trust_gain * (4.0 - cur.at(t)), 35.0, 180.0);
      return 60000.0 / hr;
    };
    double beat = static_cast<double>(t0_ms) + uniform(rng, 0.0, rr_ms(static_cast<double>(t0_ms)));
    const double end = static_cast<double>(t0_ms + duration_ms);
    while (beat < end) {
      const auto idx = static_cast<std::size_t>(std::llround((beat - static_cast<double>(t0_ms)) * c.sample_rate_hz / 1000.0));
      if (idx < c.samples.size()) c.samples[idx] += 1.0;
      beat += rr_ms(beat);
    }
  }

  // GSR: tonic + slow drift + phasic bumps.
  {
    auto& c = ch[static_cast<int>(ChannelKind::Gsr)];
    const double sd = params.noise_sd[static_cast<int>(ChannelKind::Gsr)];
    const double dt_s = 1.0 / c.sample_rate_hz;
    constexpr double kRiseS = 0.4, kDecayS = 2.0, kBumpLenS = 10.0;
    // Peak of exp(-t/decay) - exp(-t/rise), used to normalize bump height.
    const double t_peak = std::log(kDecayS / kRiseS) * kRiseS * kDecayS / (kDecayS - kRiseS);
    const double peak = std::exp(-t_peak / kDecayS) - std::exp(-t_peak / kRiseS);
    const auto bump_len = static_cast<std::size_t>(kBumpLenS * c.sample_rate_hz);
    TrustCursor cur(trajectory);
    for (std::size_t i = 0; i < c.samples.size(); ++i) {
      const double t = sample_time(c, i);
      const double slow = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * (t - static_cast<double>(t0_ms)) / 90000.0));
      c.samples[i] += params.gsr_tonic + params.gsr_drift * slow + (sd > 0.0 ? sd * std_normal(rng) : 0.0);
      const double rate_per_s = std::max(0.0, params.scr_rate_gain * (8.0 - cur.at(t))) / 60.0;
      if (std::bernoulli_distribution(std::min(1.0, rate_per_s * dt_s))(rng)) {
        const double amp = params.scr_amp * uniform(rng, 0.6, 1.4) / peak;
        for (std::size_t j = 0; j < bump_len && i + j < c.samples.size(); ++j) {
          const double tau = static_cast<double>(j) * dt_s;
          c.samples[i + j] += amp * (std::exp(-tau / kDecayS) - std::exp(-tau / kRiseS));
        }
      }
    }
  }

  // EMG: trust-scaled Gaussian activity plus sensor noise.
  for (ChannelKind k : {ChannelKind::EmgLeft, ChannelKind::EmgRight}) {
    auto& c = ch[static_cast<int>(k)];
    const double sd = params.noise_sd[static_cast<int>(k)];
    TrustCursor cur(trajectory);
    for (std::size_t i = 0; i < c.samples.size(); ++i) {
      const double activity = params.emg_amp * (1.0 + 0.2 * (7.0 - cur.at(sample_time(c, i))));
      double v = activity * std_normal(rng);
      if (sd > 0.0) v += sd * std_normal(rng);
      c.samples[i] = v;
    }
  }
  return ch;
}

std::vector<BlockPlacement> simulate_placements(Difficulty difficulty, std::uint64_t seed, const TaskConfig& cfg) {
  std::mt19937_64 rng(mix(seed ^ 0xb10cULL));
  std::normal_distribution<double> offset(0.0, cfg.skew_sd[static_cast<int>(difficulty)]);
  const auto tmpl = construction_template(difficulty);

  std::vector<BlockPlacement> placements;
  std::vector<double> actual_x;
  std::int64_t t = cfg.t0_ms + std::uniform_int_distribution<std::int64_t>(cfg.first_step_min_ms, cfg.first_step_max_ms)(rng);
  double risk = 0.0;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    const auto& b = tmpl[i];
    BlockPlacement p;
    p.step_index = static_cast<int>(i) + 1;
    p.layer = b.layer;
    p.timestamp_ms = t;
    for (int s : b.supports) p.support_centers.push_back(actual_x[static_cast<std::size_t>(s)]);
    if (b.layer == 1) {
      p.x_center = b.x_nominal + offset(rng);
    } else {
      // Aim at the nominal offset from the real support centre.
      double nominal_support = 0.0;
      for (int s : b.supports) nominal_support += tmpl[static_cast<std::size_t>(s)].x_nominal;
      nominal_support /= static_cast<double>(b.supports.size());
      p.x_center = support_center(p.support_centers) + (b.x_nominal - nominal_support) + offset(rng);
    }
    actual_x.push_back(p.x_center);
    risk = failure_risk_step(risk, block_skew(p), cfg.gamma);
    p.collapsed_after = risk > cfg.collapse_threshold;
    placements.push_back(p);
    if (p.collapsed_after) break;
    t += std::uniform_int_distribution<std::int64_t>(cfg.step_min_ms, cfg.step_max_ms)(rng);
  }
  return placements;
}

Session simulate_task(const SubjectParams& params, Difficulty difficulty, std::uint64_t seed, const TaskConfig& cfg) {
  Session s;
  s.subject_id = params.subject_id.empty() ? "S" + std::to_string(params.seed) : params.subject_id;
  s.difficulty = difficulty;
  s.t0_ms = cfg.t0_ms;
  s.placements = simulate_placements(difficulty, seed, cfg);

  const std::int64_t end_ms = s.placements.back().timestamp_ms + cfg.post_task_ms;
  const auto history = risk_trace(s.placements, end_ms, cfg.gamma);
  const auto traj = trust_dynamics(history, difficulty, params, cfg.t0_ms, end_ms, cfg.trust);
  s.channels = synth_signals(traj, params, cfg.t0_ms, end_ms - cfg.t0_ms, seed);

  for (const auto& p : s.placements) {
    LabelEntry e;
    e.step_index = p.step_index;
    e.timestamp_ms = p.timestamp_ms;
    e.muir_mean = traj.at(p.timestamp_ms);
    // Workload rises as trust falls; recorded as metadata only.
    e.nasa_tlx_mean = std::clamp(1.0 + 0.5 * static_cast<double>(difficulty) + 0.6 * (7.0 - e.muir_mean), 1.0, 7.0);
    s.labels.entries.push_back(e);
  }
  validate_session(s);
  return s;
}

Session simulate_task_to_dir(const SubjectParams& params, Difficulty difficulty, std::uint64_t seed,
                             const std::filesystem::path& dir, const TaskConfig& cfg) {
  Session s = simulate_task(params, difficulty, seed, cfg);
  save_session(s, dir);
  return s;
}

}  // namespace pptp::synth
