// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// writes acceptance_report.json to the working directory. Exit code 0 only
// when every criterion passes.

#include "pptp/app.hpp"
#include "pptp/cp_eval.hpp"
#include "pptp/errors.hpp"
#include "pptp/model.hpp"
#include "pptp/synth.hpp"
#include "pptp/train_eval.hpp"
#include "pptp/windowing.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <tuple>

namespace fs = std::filesystem;
using namespace pptp;
using namespace pptp::train_eval;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
  nlohmann::json data = nlohmann::json::object();
};

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
  double budget_s = 0.0;  // 0 = no runtime limit
};

// ---- 1. CP correctness ---------------------------------------------------------------

std::vector<BlockPlacement> placements_with_skews(const std::vector<double>& skews) {
  std::vector<BlockPlacement> out;
  for (std::size_t i = 0; i < skews.size(); ++i) {
    BlockPlacement p;
    p.step_index = static_cast<int>(i) + 1;
    p.timestamp_ms = 1000 * static_cast<std::int64_t>(i + 1);
    p.layer = skews[i] == 0.0 ? 1 : 2;
    if (p.layer == 2) {
      p.support_centers = {0.0};
      p.x_center = skews[i] / 2.0;
    }
    out.push_back(p);
  }
  return out;
}

Outcome cp_correctness() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 10);
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const double gamma = trial % 2 ? kDefaultGamma : std::uniform_real_distribution<double>(0.01, 0.99)(rng);
    std::vector<double> s(static_cast<std::size_t>(len(rng)));
    for (double& x : s) x = u(rng);
    double prev = 0.0;
    for (std::size_t n = 1; n <= s.size(); ++n) {
      prev = failure_risk_step(prev, s[n - 1], gamma);
      double closed = 0.0;
      for (std::size_t k = 1; k <= n; ++k) closed += std::pow(gamma, static_cast<double>(n - k)) * s[k - 1];
      worst = std::max(worst, std::abs(prev - closed));
    }
  }

  // Worked examples: S = [0, 0.1, 0.3].
  auto pl = placements_with_skews({0.0, 0.1, 0.3});
  const auto open = failure_risk_vector(pl, 100000);
  const std::array<double, 10> want_open = {0.0, 0.1, 0.3 + 0.8 * 0.1, -1, -1, -1, -1, -1, -1, -1};
  pl.back().collapsed_after = true;
  const auto fell = failure_risk_vector(pl, 100000);
  const std::array<double, 10> want_fell = {0.0, 0.1, -2, -2, -2, -2, -2, -2, -2, -2};
  const auto none = failure_risk_vector(pl, 500);
  bool examples = open.f == want_open && fell.f == want_fell && fell.collapsed && none.n_stacked == 0;
  for (double v : none.f) examples = examples && v == kUnstacked;

  Outcome o;
  o.pass = worst <= 1e-12 && examples;
  o.detail = "max |recursion - closed form| " + fmt("%.2e", worst) + " over 10000 sequences; worked examples " +
             (examples ? "exact" : "MISMATCH");
  o.data = {{"max_abs_error", worst}, {"examples_exact", examples}};
  return o;
}

// ---- 2. windowing -------------------------------------------------------------------------

Outcome windowing_frames() {
  auto params = synth::sample_subject(7);
  params.subject_id = "w";
  Session s;
  s.subject_id = "w";
  s.difficulty = Difficulty::MD;
  s.t0_ms = 0;
  const auto traj = synth::trust_dynamics({}, Difficulty::MD, params, 0, 60000);
  s.channels = synth::synth_signals(traj, params, 0, 60000, 7);

  const WindowingConfig cfg;
  std::size_t expected = 0;  // enumeration oracle over every millisecond
  for (std::int64_t ms = 0; ms <= 60000; ++ms)
    if (ms >= cfg.ecg_gsr_window_ms && (ms - cfg.ecg_gsr_window_ms) % cfg.hop_ms == 0) ++expected;
  const auto frames = frame_stream(s, cfg);

  std::size_t bad = 0;
  for (const auto& f : frames) {
    bool ok = (f.end_ms - cfg.ecg_gsr_window_ms) % cfg.hop_ms == 0 && f.ecg.size() == 375 && f.gsr.size() == 375;
    ok = ok && f.emg_left.size() == f.emg_right.size() && f.emg_left.size() == f.emg_end_ms.size();
    ok = ok && f.emg_left.size() >= 1 && f.emg_left.size() <= cfg.max_emg_windows();
    for (std::size_t i = 0; i < f.emg_left.size(); ++i) {
      const auto e = f.emg_end_ms[i];
      ok = ok && f.emg_left[i].size() == 272 && f.emg_right[i].size() == 272;
      ok = ok && e <= f.end_ms && e > f.end_ms - cfg.ecg_gsr_window_ms && (f.end_ms - e) % cfg.hop_ms == 0;
      if (i) ok = ok && f.emg_end_ms[i] > f.emg_end_ms[i - 1];
    }
    if (!ok) ++bad;
  }
  Outcome o;
  o.pass = expected == 528 && frames.size() == expected && bad == 0;
  o.detail = std::to_string(frames.size()) + " frames (oracle " + std::to_string(expected) + "), " +
             std::to_string(bad) + " frames violating alignment or shape";
  o.data = {{"frames", frames.size()}, {"oracle", expected}, {"bad_frames", bad}};
  return o;
}

// ---- 3. RevIN -------------------------------------------------------------------------------

Outcome revin_round_trip() {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> scale(1e-3, 1e3), shift(-1e3, 1e3);
  double worst = 0.0;
  for (int w = 0; w < 1000; ++w) {
    std::vector<double> x(375);
    const double a = scale(rng), b = shift(rng);
    for (double& v : x) v = b + a * n(rng);
    model::RevinState st;
    st.gain = 0.5 + 0.001 * w;
    st.shift = 0.01 * (w % 7);
    const auto y = model::revin_normalize(x, st);
    const auto back = model::revin_denormalize(st, y);
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(back[i] - x[i]));
  }
  Outcome o;
  o.pass = worst < 1e-6;
  o.detail = "max round-trip error " + fmt("%.2e", worst) + " over 1000 windows";
  o.data = {{"max_abs_error", worst}};
  return o;
}

// ---- 4. gradient check ----------------------------------------------------------------------

Outcome gradient_check(const app::GradCheckConfig& g) {
  double prim = 0.0;
  std::string prim_worst;
  for (const auto& c : app::check_primitives(g.options)) {
    if (c.result.max_rel_error >= prim) {
      prim = c.result.max_rel_error;
      prim_worst = c.name;
    }
  }
  const auto m = app::check_model(g);
  Outcome o;
  o.pass = prim <= g.primitive_tol && m.result.max_rel_error <= g.model_tol;
  o.detail = "primitives max " + fmt("%.2e", prim) + " (" + prim_worst + "), desk model max " +
             fmt("%.2e", m.result.max_rel_error) + " at " + m.name + " over " +
             std::to_string(m.result.coords_checked) + " coordinates";
  o.data = {{"primitive_max", prim},
            {"model_max", m.result.max_rel_error},
            {"model_worst", m.name},
            {"worst_analytic", m.result.worst_analytic},
            {"worst_numeric", m.result.worst_numeric}};
  return o;
}

// ---- 5-8. training runs ------------------------------------------------------------------------

class Runs {
 public:
  Runs(app::RunConfig cfg, std::vector<Session> sessions) : cfg_(std::move(cfg)), sessions_(std::move(sessions)) {
    for (const auto& s : sessions_)
      if (std::find(subjects_.begin(), subjects_.end(), s.subject_id) == subjects_.end())
        subjects_.push_back(s.subject_id);
  }

  const std::vector<std::string>& subjects() const { return subjects_; }

  // Test accuracy of one subject for one configuration; cached.
  double accuracy(const std::string& subject, std::uint64_t seed, bool cp, std::size_t classes, bool shuffle) {
    const auto key = std::make_tuple(subject, seed, cp, classes, shuffle);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    TrainConfig tc = cfg_.train;
    tc.seed = seed;
    tc.cp_guidance = cp;
    tc.n_classes = classes;
    tc.shuffle_labels = shuffle;
    std::vector<Session> mine;
    for (const auto& s : sessions_)
      if (s.subject_id == subject) mine.push_back(s);
    const auto r = train_and_evaluate(mine, cfg_.model, tc, cfg_.windowing);
    r.check_invariants();
    cache_[key] = r.accuracy;
    return r.accuracy;
  }

  // Mean over subjects of per-subject test accuracy.
  double mean_accuracy(std::uint64_t seed, bool cp, std::size_t classes, bool shuffle, nlohmann::json* per = nullptr) {
    std::vector<double> acc;
    for (const auto& s : subjects_) {
      acc.push_back(accuracy(s, seed, cp, classes, shuffle));
      if (per) (*per)[s] = acc.back();
    }
    return mean_of(acc);
  }

 private:
  app::RunConfig cfg_;
  std::vector<Session> sessions_;
  std::vector<std::string> subjects_;
  std::map<std::tuple<std::string, std::uint64_t, bool, std::size_t, bool>, double> cache_;
};

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

Outcome learnability(Runs& runs) {
  nlohmann::json per;
  const double mean = runs.mean_accuracy(kSeeds[0], true, 3, false, &per);
  const double chance = 1.0 / 3.0;
  Outcome o;
  o.pass = mean >= 0.70 && mean >= chance + 0.25;
  std::ostringstream d;
  d << "mean per-subject 3-level test accuracy " << fmt("%.3f", mean) << " (need >= 0.700 and >= chance + 0.25 = "
    << fmt("%.3f", chance + 0.25) << "); per subject";
  for (auto it = per.begin(); it != per.end(); ++it) d << ' ' << it.key() << '=' << fmt("%.3f", it.value().get<double>());
  o.detail = d.str();
  o.data = {{"mean_accuracy", mean}, {"per_subject", per}};
  return o;
}

Outcome cp_guidance_trend(Runs& runs) {
  std::vector<double> with, without;
  nlohmann::json seeds = nlohmann::json::array();
  for (auto seed : kSeeds) {
    with.push_back(runs.mean_accuracy(seed, true, 3, false));
    without.push_back(runs.mean_accuracy(seed, false, 3, false));
    seeds.push_back({{"seed", seed}, {"cp", with.back()}, {"no_cp", without.back()}});
  }
  const double a = mean_of(with), b = mean_of(without);
  Outcome o;
  o.pass = a >= b;
  o.detail = "full-signal 3-level accuracy with CP " + fmt("%.3f", a) + " vs without " + fmt("%.3f", b) + ", gap " +
             fmt("%+.3f", a - b) + " over 5 seeds";
  o.data = {{"with_cp", a}, {"without_cp", b}, {"gap", a - b}, {"seeds", seeds}};
  return o;
}

Outcome resolution_trend(Runs& runs) {
  std::vector<double> three, seven;
  nlohmann::json seeds = nlohmann::json::array();
  for (auto seed : kSeeds) {
    three.push_back(runs.mean_accuracy(seed, true, 3, false));
    seven.push_back(runs.mean_accuracy(seed, true, 7, false));
    seeds.push_back({{"seed", seed}, {"three", three.back()}, {"seven", seven.back()}});
  }
  const double a = mean_of(three), b = mean_of(seven);
  Outcome o;
  o.pass = a >= b;
  o.detail = "3-level accuracy " + fmt("%.3f", a) + " vs 7-level " + fmt("%.3f", b) + " over 5 seeds";
  o.data = {{"three_level", a}, {"seven_level", b}, {"seeds", seeds}};
  return o;
}

Outcome null_control(Runs& runs) {
  std::vector<double> acc;
  for (auto seed : kSeeds) acc.push_back(runs.mean_accuracy(seed, true, 3, true));
  const double mean = mean_of(acc);
  const double chance = 1.0 / 3.0;
  Outcome o;
  o.pass = std::abs(mean - chance) <= 0.12;
  o.detail = "label-shuffled accuracy " + fmt("%.3f", mean) + " vs chance " + fmt("%.3f", chance) + " (|diff| " +
             fmt("%.3f", std::abs(mean - chance)) + ", limit 0.12) over 5 seeds";
  o.data = {{"mean_accuracy", mean}, {"per_seed", acc}};
  return o;
}

// ---- 9. ANOVA -----------------------------------------------------------------------------------

Outcome anova_checks(std::uint64_t base_seed) {
  const auto hand = one_way_anova({{1, 2, 3}, {2, 3, 4}, {3, 4, 5}});
  app::SynthRequest req;
  req.subjects = 10;
  req.seed = base_seed;
  const auto syn = app::difficulty_anova(app::synth_corpus(req));
  Outcome o;
  o.pass = std::abs(hand.f_stat - 3.0) <= 1e-9 && syn.p_value < 0.05;
  o.detail = "hand example F = " + fmt("%.12f", hand.f_stat) + "; synthetic difficulty groups (K=10) F = " +
             fmt("%.2f", syn.f_stat) + ", p = " + fmt("%.3g", syn.p_value);
  o.data = {{"hand_f", hand.f_stat}, {"synthetic_f", syn.f_stat}, {"synthetic_p", syn.p_value}};
  return o;
}

// ---- 10. determinism ------------------------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PPTP_CLI) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError("missing " + p.string());
  return nlohmann::json::parse(in);
}

// Largest absolute difference between numeric leaves; infinity on a structural mismatch.
double json_diff(const nlohmann::json& a, const nlohmann::json& b) {
  if (a.type() != b.type() && !(a.is_number() && b.is_number())) return INFINITY;
  if (a.is_number()) return std::abs(a.get<double>() - b.get<double>());
  if (a.is_object() || a.is_array()) {
    if (a.size() != b.size()) return INFINITY;
    double worst = 0.0;
    if (a.is_object()) {
      for (auto it = a.begin(); it != a.end(); ++it) {
        if (!b.contains(it.key())) return INFINITY;
        worst = std::max(worst, json_diff(it.value(), b.at(it.key())));
      }
    } else {
      for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, json_diff(a[i], b[i]));
    }
    return worst;
  }
  return a == b ? 0.0 : INFINITY;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const fs::path& work, const std::string& config) {
  fs::remove_all(work);
  const std::string data_a = (work / "data_a").string(), data_b = (work / "data_b").string();
  int rc = run_cli("synth --subjects 1 --tasks-per-subject 3 --seed 42 --out " + data_a);
  rc |= run_cli("synth --subjects 1 --tasks-per-subject 3 --seed 42 --out " + data_b);
  bool synth_same = rc == 0;
  for (const auto& d : app::find_session_dirs(data_a))
    for (const auto& f : fs::directory_iterator(d))
      synth_same = synth_same && read_file(f.path()) == read_file(fs::path(data_b) / d.filename() / f.path().filename());

  const std::string base = "train --config " + config + " --data " + data_a + " --out ";
  rc |= run_cli(base + (work / "run_a").string());
  rc |= run_cli(base + (work / "run_b").string());
  const double train_diff =
      rc == 0 ? json_diff(read_json(work / "run_a" / "metrics.json"), read_json(work / "run_b" / "metrics.json"))
              : INFINITY;

  const std::string ev = "eval --config " + config + " --data " + data_a + " --frames test --checkpoint " +
                         (work / "run_a" / "model.ckpt").string() + " --out ";
  rc |= run_cli(ev + (work / "eval_a").string());
  rc |= run_cli(ev + (work / "eval_b").string());
  double eval_diff = INFINITY, ckpt_diff = INFINITY;
  if (rc == 0) {
    const auto ea = read_json(work / "eval_a" / "metrics.json");
    eval_diff = json_diff(ea, read_json(work / "eval_b" / "metrics.json"));
    // The reloaded checkpoint must reproduce the test metrics of training.
    auto ta = read_json(work / "run_a" / "metrics.json");
    ta.erase("history");
    ta.erase("config");
    auto e2 = ea;
    e2.erase("frames");
    ckpt_diff = json_diff(ta, e2);
  }
  Outcome o;
  o.pass = rc == 0 && synth_same && train_diff <= 1e-6 && eval_diff <= 1e-6 && ckpt_diff <= 1e-6;
  o.detail = std::string("synth reruns ") + (synth_same ? "byte-identical" : "DIFFER") + "; train rerun max diff " +
             fmt("%.1e", train_diff) + "; eval rerun max diff " + fmt("%.1e", eval_diff) +
             "; checkpoint reload vs training metrics " + fmt("%.1e", ckpt_diff) +
             (rc == 0 ? "" : "; a CLI command exited nonzero");
  o.data = {{"synth_identical", synth_same},
            {"train_diff", train_diff},
            {"eval_diff", eval_diff},
            {"checkpoint_diff", ckpt_diff},
            {"cli_ok", rc == 0}};
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string config = argc > 1 ? argv[1] : std::string(PPTP_SOURCE_DIR) + "/configs/desk.json";
  const fs::path work = fs::temp_directory_path() / "pptp_acceptance";
  try {
    const app::RunConfig cfg = app::load_run_config(config);
    app::SynthRequest corpus;
    corpus.subjects = 5;
    corpus.seed = 42;
    Runs runs(cfg, app::synth_corpus(corpus));

    std::vector<Criterion> all = {
        {1, "CP correctness", cp_correctness, 5.0},
        {2, "windowing", windowing_frames, 5.0},
        {3, "RevIN round trip", revin_round_trip},
        {4, "gradient check", [&] { return gradient_check(cfg.gradcheck); }, 120.0},
        {5, "learnability", [&] { return learnability(runs); }, 900.0},
        {6, "CP-guidance trend", [&] { return cp_guidance_trend(runs); }},
        {7, "resolution trend", [&] { return resolution_trend(runs); }},
        {8, "label-shuffle control", [&] { return null_control(runs); }},
        {9, "ANOVA", [&] { return anova_checks(corpus.seed); }},
        {10, "determinism", [&] { return determinism(work, config); }},
    };

    nlohmann::json report = {{"config", cfg}, {"criteria", nlohmann::json::array()}};
    bool all_pass = true;
    for (const auto& c : all) {
      const auto t0 = Clock::now();
      Outcome o;
      try {
        o = c.run();
      } catch (const std::exception& e) {
        o.pass = false;
        o.detail = std::string("error: ") + e.what();
      }
      const double secs = seconds_since(t0);
      const bool in_time = c.budget_s == 0.0 || secs < c.budget_s;
      const bool pass = o.pass && in_time;
      all_pass = all_pass && pass;
      std::string timing = fmt("%.1f s", secs);
      if (c.budget_s > 0.0) timing += fmt(" (limit %.0f s)", c.budget_s);
      std::cout << "criterion " << c.id << " " << (pass ? "PASS" : "FAIL") << " " << c.name << ": " << o.detail
                << "; " << timing << std::endl;
      report["criteria"].push_back({{"id", c.id},
                                    {"name", c.name},
                                    {"pass", pass},
                                    {"seconds", secs},
                                    {"within_time", in_time},
                                    {"detail", o.detail},
                                    {"data", o.data}});
    }
    report["all_pass"] = all_pass;
    std::ofstream("acceptance_report.json") << report.dump(2) << '\n';
    return all_pass ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "acceptance suite aborted: " << e.what() << '\n';
    return 2;
  }
}
