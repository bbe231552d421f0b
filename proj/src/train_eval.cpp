#include "pptp/train_eval.hpp"

#include "pptp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace pptp::train_eval {

using ad::Tensor;

// ---- config ----------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (epochs == 0) throw ConfigError("train: epochs must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train: train_fraction must lie in (0, 1)");
  if (n_classes != 3 && n_classes != 7) throw ConfigError("train: n_classes must be 3 or 7");
  if (frame_stride == 0) throw ConfigError("train: frame_stride must be positive");
  const auto m = mask();
  if (!m.any_signal() && !cp_guidance) throw ConfigError("train: no physiological signal and no CP guidance");
}

model::SignalMask TrainConfig::mask() const {
  model::SignalMask m{false, false, false, false};
  if (signal_mask != "none") m = model::parse_signal_mask(signal_mask);
  m.cp = cp_guidance;
  return m;
}

ModelConfig TrainConfig::apply(ModelConfig cfg) const {
  cfg.n_classes = n_classes;
  cfg.cp_guidance = cp_guidance;
  return cfg;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"adam_eps", c.adam_eps},
       {"seed", c.seed},
       {"train_fraction", c.train_fraction},
       {"signal_mask", c.signal_mask},
       {"cp_guidance", c.cp_guidance},
       {"n_classes", c.n_classes},
       {"frame_stride", c.frame_stride},
       {"shuffle_labels", c.shuffle_labels},
       {"fan_in_lr_scaling", c.fan_in_lr_scaling}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const char* known[] = {"lr",          "batch_size",     "epochs",      "beta1",
                                "beta2",       "adam_eps",       "seed",        "train_fraction",
                                "signal_mask", "cp_guidance",    "n_classes",   "frame_stride",
                                "shuffle_labels", "fan_in_lr_scaling"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return it.key() == k; }) ==
        std::end(known))
      throw ConfigError("unknown train option '" + it.key() + "'");
  }
  try {
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.seed = j.value("seed", c.seed);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.signal_mask = j.value("signal_mask", c.signal_mask);
    c.cp_guidance = j.value("cp_guidance", c.cp_guidance);
    c.n_classes = j.value("n_classes", c.n_classes);
    c.frame_stride = j.value("frame_stride", c.frame_stride);
    c.shuffle_labels = j.value("shuffle_labels", c.shuffle_labels);
    c.fan_in_lr_scaling = j.value("fan_in_lr_scaling", c.fan_in_lr_scaling);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
}

// ---- datasets -----------------------------------------------------------------

std::size_t class_of(const AnalysisFrame& frame, std::size_t n_classes) {
  if (!frame.labeled) throw ValidationError("frame at " + std::to_string(frame.end_ms) + " ms has no label");
  if (n_classes == 3) return static_cast<std::size_t>(frame.label3);
  if (n_classes == 7) return static_cast<std::size_t>(frame.label7 - 1);
  throw ConfigError("n_classes must be 3 or 7");
}

Dataset build_dataset(const std::vector<Session>& sessions, const ModelConfig& model_cfg, const TrainConfig& cfg,
                      const WindowingConfig& windowing) {
  cfg.validate();
  windowing.validate();
  const auto mask = cfg.mask();
  Dataset data;
  data.n_classes = cfg.n_classes;
  for (std::size_t s = 0; s < sessions.size(); ++s) {
    const auto ends = frame_end_times(sessions[s], windowing);
    for (std::size_t i = 0; i < ends.size(); i += cfg.frame_stride) {
      const AnalysisFrame frame = make_frame(sessions[s], ends[i], windowing);
      Sample smp;
      smp.label = class_of(frame, cfg.n_classes);
      smp.input = model::make_input(frame, model_cfg, mask);
      smp.session = s;
      smp.subject = sessions[s].subject_id;
      smp.step_index = frame.step_index;
      smp.end_ms = frame.end_ms;
      data.samples.push_back(std::move(smp));
    }
  }
  return data;
}

// ---- splitting -----------------------------------------------------------------

SplitIndices split_by_step(std::span<const FrameKey> frames, double train_fraction, std::uint64_t seed,
                           std::int64_t span_ms) {
  std::map<std::pair<std::size_t, int>, std::size_t> interval;
  for (const auto& f : frames) interval.emplace(std::make_pair(f.session, f.step_index), 0);
  const std::size_t n = interval.size();
  if (n < 2) throw SplitError("split needs at least two step intervals, got " + std::to_string(n));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction)), 1, n - 1);
  std::vector<bool> is_test(n, false);
  for (std::size_t i = n_train; i < n; ++i) is_test[order[i]] = true;
  std::size_t id = 0;
  for (auto& [key, v] : interval) v = id++;

  std::map<std::size_t, std::vector<std::int64_t>> test_ends;
  for (const auto& f : frames) {
    if (is_test[interval.at({f.session, f.step_index})]) test_ends[f.session].push_back(f.end_ms);
  }
  for (auto& [s, v] : test_ends) std::sort(v.begin(), v.end());

  SplitIndices out;
  out.train_intervals = n_train;
  out.test_intervals = n - n_train;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (is_test[interval.at({f.session, f.step_index})]) {
      out.test.push_back(i);
      continue;
    }
    bool overlaps = false;
    if (auto it = test_ends.find(f.session); it != test_ends.end()) {
      // Spans (e - span, e] intersect iff the end times differ by less than span.
      const auto& v = it->second;
      const auto lo = std::upper_bound(v.begin(), v.end(), f.end_ms - span_ms);
      overlaps = lo != v.end() && *lo < f.end_ms + span_ms;
    }
    (overlaps ? out.dropped : out.train).push_back(i);
  }
  return out;
}

DatasetSplit split_dataset(Dataset data, double train_fraction, std::uint64_t seed, std::int64_t span_ms) {
  std::vector<FrameKey> keys;
  keys.reserve(data.size());
  for (const auto& s : data.samples) keys.push_back({s.session, s.step_index, s.end_ms});
  const auto idx = split_by_step(keys, train_fraction, seed, span_ms);
  DatasetSplit out;
  out.train.n_classes = out.test.n_classes = data.n_classes;
  for (std::size_t i : idx.train) out.train.samples.push_back(std::move(data.samples[i]));
  for (std::size_t i : idx.test) out.test.samples.push_back(std::move(data.samples[i]));
  out.dropped = idx.dropped.size();
  return out;
}

// ---- metrics -------------------------------------------------------------------

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

void MetricsReport::check_invariants() const {
  std::size_t sum = 0, trace = 0;
  if (confusion.size() != n_classes) throw ValidationError("confusion matrix has the wrong size");
  for (std::size_t p = 0; p < n_classes; ++p) {
    if (confusion[p].size() != n_classes) throw ValidationError("confusion matrix has the wrong size");
    for (std::size_t t = 0; t < n_classes; ++t) sum += confusion[p][t];
    trace += confusion[p][p];
  }
  if (sum != total) throw ValidationError("confusion total differs from the sample count");
  if (total > 0 && accuracy != static_cast<double>(trace) / static_cast<double>(total))
    throw ValidationError("accuracy differs from trace / total");
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  nlohmann::json subjects = nlohmann::json::array();
  for (const auto& s : r.per_subject)
    subjects.push_back({{"subject", s.subject}, {"n", s.n}, {"accuracy", s.accuracy}, {"macro_f1", s.macro_f1}});
  j = {{"n_classes", r.n_classes},       {"total", r.total},
       {"accuracy", r.accuracy},         {"macro_f1", r.macro_f1},
       {"confusion", r.confusion},       {"per_subject", subjects},
       {"mean_accuracy", r.mean_accuracy}, {"std_accuracy", r.std_accuracy},
       {"mean_f1", r.mean_f1},           {"std_f1", r.std_f1}};
}

MetricsReport compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> pred,
                              std::size_t n_classes) {
  if (truth.size() != pred.size()) throw ValidationError("truth and prediction lengths differ");
  MetricsReport r;
  r.n_classes = n_classes;
  r.total = truth.size();
  r.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= n_classes || pred[i] >= n_classes) throw ValidationError("class id out of range");
    ++r.confusion[pred[i]][truth[i]];
    if (pred[i] == truth[i]) ++correct;
  }
  r.accuracy = r.total ? static_cast<double>(correct) / static_cast<double>(r.total) : 0.0;
  double f1_sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t predicted = 0, actual = 0;
    for (std::size_t k = 0; k < n_classes; ++k) {
      predicted += r.confusion[c][k];
      actual += r.confusion[k][c];
    }
    if (predicted + actual == 0) continue;
    f1_sum += 2.0 * static_cast<double>(r.confusion[c][c]) / static_cast<double>(predicted + actual);
    ++counted;
  }
  r.macro_f1 = counted ? f1_sum / static_cast<double>(counted) : 0.0;
  r.mean_accuracy = r.accuracy;
  r.mean_f1 = r.macro_f1;
  return r;
}

MetricsReport evaluate(const PptpModel& model, const Dataset& data) {
  if (data.empty()) throw ValidationError("cannot evaluate an empty dataset");
  if (model.config().n_classes != data.n_classes)
    throw ValidationError("model head has " + std::to_string(model.config().n_classes) + " classes, data has " +
                          std::to_string(data.n_classes));
  std::vector<std::size_t> truth, pred;
  truth.reserve(data.size());
  pred.reserve(data.size());
  {
    ad::NoGradScope no_grad;
    for (const auto& s : data.samples) {
      truth.push_back(s.label);
      pred.push_back(model::predict(model.forward(s.input).data()));
    }
  }
  MetricsReport r = compute_metrics(truth, pred, data.n_classes);

  std::vector<std::string> subjects;
  for (const auto& s : data.samples)
    if (std::find(subjects.begin(), subjects.end(), s.subject) == subjects.end()) subjects.push_back(s.subject);
  std::vector<double> accs, f1s;
  for (const auto& subj : subjects) {
    std::vector<std::size_t> t, p;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.samples[i].subject != subj) continue;
      t.push_back(truth[i]);
      p.push_back(pred[i]);
    }
    const auto m = compute_metrics(t, p, data.n_classes);
    r.per_subject.push_back({subj, t.size(), m.accuracy, m.macro_f1});
    accs.push_back(m.accuracy);
    f1s.push_back(m.macro_f1);
  }
  r.mean_accuracy = mean_of(accs);
  r.std_accuracy = std_of(accs);
  r.mean_f1 = mean_of(f1s);
  r.std_f1 = std_of(f1s);
  r.check_invariants();
  return r;
}

// ---- training ------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, const TrainConfig& cfg, std::vector<double> lr_scale)
    : params_(std::move(params)),
      lr_scale_(std::move(lr_scale)),
      lr_(cfg.lr),
      b1_(cfg.beta1),
      b2_(cfg.beta2),
      eps_(cfg.adam_eps) {
  if (lr_scale_.empty()) lr_scale_.assign(params_.size(), 1.0);
  if (lr_scale_.size() != params_.size()) throw ValidationError("Adam: one lr scale per parameter required");
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    const auto g = p.grad();
    if (g.empty()) continue;  // no path to the loss
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    const double lr = lr_ * lr_scale_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1_ * m[k] + (1.0 - b1_) * g[k];
      v[k] = b2_ * v[k] + (1.0 - b2_) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
    p.zero_grad();
  }
}

namespace {

bool all_finite(const PptpModel& model) {
  for (const auto& p : model.parameters())
    for (double v : p.tensor.data())
      if (!std::isfinite(v)) return false;
  return true;
}

double accuracy_of(const PptpModel& model, const Dataset& data) {
  ad::NoGradScope no_grad;
  std::size_t correct = 0;
  for (const auto& s : data.samples)
    if (model::predict(model.forward(s.input).data()) == s.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace

TrainResult train(const Dataset& train_set, const Dataset* test_set, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ValidationError("training set is empty");
  if (train_set.n_classes != cfg.n_classes) throw ValidationError("training set class count differs from config");
  std::vector<std::size_t> labels;
  for (const auto& s : train_set.samples) labels.push_back(s.label);
  {
    auto distinct = labels;
    std::sort(distinct.begin(), distinct.end());
    if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() < 2)
      throw ValidationError("training set needs at least two classes");
  }
  const ModelConfig mc = cfg.apply(model_cfg);
  mc.validate();

  std::mt19937_64 order_rng(cfg.seed ^ 0x5eedULL);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0xd40dULL);
  if (cfg.shuffle_labels) {
    std::mt19937_64 label_rng(cfg.seed ^ 0x1abe1ULL);
    std::shuffle(labels.begin(), labels.end(), label_rng);
  }

  TrainResult result{PptpModel(mc, cfg.seed), {}};
  PptpModel& model = result.model;
  std::vector<Tensor> params;
  for (const auto& p : model.parameters()) params.push_back(p.tensor);
  std::vector<double> lr_scale;
  for (const auto& p : params) {
    const bool matrix = p.rank() == 2 && p.dim(0) > 1;
    lr_scale.push_back(cfg.fan_in_lr_scaling && matrix
                           ? std::min(1.0, static_cast<double>(mc.d_model) / static_cast<double>(p.dim(0)))
                           : 1.0);
  }
  Adam opt(params, cfg, lr_scale);
  std::mt19937_64* drop = mc.dropout > 0.0 ? &dropout_rng : nullptr;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        ad::Tape tape;
        ad::TapeScope scope(tape);
        const Tensor ce = ad::cross_entropy(model.forward(train_set.samples[i].input, drop), labels[i]);
        const double value = ce.item();
        if (!std::isfinite(value))
          throw TrainingError("loss is not finite in epoch " + std::to_string(epoch), static_cast<int>(epoch));
        loss_sum += value;
        tape.backward(ad::scale(ce, inv));
      }
      opt.step();
    }
    if (!all_finite(model))
      throw TrainingError("parameters stopped being finite in epoch " + std::to_string(epoch),
                          static_cast<int>(epoch));
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    if (test_set && !test_set->empty()) rec.test_accuracy = accuracy_of(model, *test_set);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

// ---- ablation ------------------------------------------------------------------

std::string GridCell::name() const {
  std::ostringstream ss;
  ss << signal_mask << (cp_guidance ? "+cp" : "") << "/" << n_classes;
  return ss.str();
}

void to_json(nlohmann::json& j, const CellResult& r) {
  nlohmann::json subjects = nlohmann::json::array();
  for (const auto& s : r.per_subject)
    subjects.push_back({{"subject", s.subject}, {"n", s.n}, {"accuracy", s.accuracy}, {"macro_f1", s.macro_f1}});
  j = {{"cell", r.cell.name()},
       {"signal_mask", r.cell.signal_mask},
       {"cp_guidance", r.cell.cp_guidance},
       {"n_classes", r.cell.n_classes},
       {"per_subject", subjects},
       {"mean_accuracy", r.mean_accuracy},
       {"std_accuracy", r.std_accuracy},
       {"mean_f1", r.mean_f1},
       {"std_f1", r.std_f1}};
}

MetricsReport train_and_evaluate(const std::vector<Session>& sessions, const ModelConfig& model_cfg,
                                 const TrainConfig& cfg, const WindowingConfig& windowing) {
  auto split = split_dataset(build_dataset(sessions, model_cfg, cfg, windowing), cfg.train_fraction, cfg.seed,
                             windowing.ecg_gsr_window_ms);
  const auto result = train(split.train, &split.test, model_cfg, cfg);
  return evaluate(result.model, split.test);
}

std::vector<CellResult> ablate(const std::vector<Session>& sessions, const std::vector<GridCell>& grid,
                               const ModelConfig& model_cfg, const TrainConfig& base, const AblateOptions& opts) {
  std::vector<std::string> subjects;
  for (const auto& s : sessions)
    if (std::find(subjects.begin(), subjects.end(), s.subject_id) == subjects.end())
      subjects.push_back(s.subject_id);
  if (subjects.size() < 2) throw ValidationError("ablation needs sessions from at least two subjects");

  std::vector<CellResult> out;
  for (const auto& cell : grid) {
    TrainConfig cfg = base;
    cfg.signal_mask = cell.signal_mask;
    cfg.cp_guidance = cell.cp_guidance;
    cfg.n_classes = cell.n_classes;
    CellResult res;
    res.cell = cell;
    if (opts.pooled) {
      const auto m = train_and_evaluate(sessions, model_cfg, cfg, opts.windowing);
      res.per_subject = m.per_subject;
    } else {
      for (const auto& subj : subjects) {
        std::vector<Session> mine;
        for (const auto& s : sessions)
          if (s.subject_id == subj) mine.push_back(s);
        const auto m = train_and_evaluate(mine, model_cfg, cfg, opts.windowing);
        res.per_subject.push_back({subj, m.total, m.accuracy, m.macro_f1});
      }
    }
    std::vector<double> accs, f1s;
    for (const auto& s : res.per_subject) {
      accs.push_back(s.accuracy);
      f1s.push_back(s.macro_f1);
    }
    res.mean_accuracy = mean_of(accs);
    res.std_accuracy = std_of(accs);
    res.mean_f1 = mean_of(f1s);
    res.std_f1 = std_of(f1s);
    out.push_back(std::move(res));
  }
  return out;
}

// ---- statistics ----------------------------------------------------------------

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw ValidationError("incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("incomplete beta needs positive shape parameters");
  if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("incomplete beta argument outside [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double f_survival(double f, double d1, double d2) {
  if (f <= 0.0) return 1.0;
  return incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw ValidationError("ANOVA needs at least two groups");
  std::size_t n = 0;
  double grand = 0.0;
  for (const auto& g : groups) {
    if (g.size() < 2) throw ValidationError("every ANOVA group needs at least two values");
    for (double v : g) {
      if (!std::isfinite(v)) throw ValidationError("ANOVA values must be finite");
      grand += v;
    }
    n += g.size();
  }
  grand /= static_cast<double>(n);
  double ssb = 0.0, ssw = 0.0;
  for (const auto& g : groups) {
    const double m = mean_of(g);
    ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double v : g) ssw += (v - m) * (v - m);
  }
  if (ssw == 0.0) throw ValidationError("ANOVA groups have zero within-group variance");
  AnovaResult r;
  r.df_between = static_cast<double>(groups.size() - 1);
  r.df_within = static_cast<double>(n - groups.size());
  r.f_stat = (ssb / r.df_between) / (ssw / r.df_within);
  r.p_value = f_survival(r.f_stat, r.df_between, r.df_within);
  return r;
}

}  // namespace pptp::train_eval
