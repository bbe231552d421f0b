#include "pptp/app.hpp"

#include "pptp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace pptp {

namespace {

void require_known(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + " config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return it.key() == k; }) == known.end())
      throw ConfigError("unknown " + section + " option '" + it.key() + "'");
  }
}

}  // namespace

void to_json(nlohmann::json& j, const WindowingConfig& c) {
  j = {{"ecg_gsr_window_ms", c.ecg_gsr_window_ms},
       {"emg_window_ms", c.emg_window_ms},
       {"hop_ms", c.hop_ms},
       {"gamma", c.gamma}};
}

void from_json(const nlohmann::json& j, WindowingConfig& c) {
  require_known(j, {"ecg_gsr_window_ms", "emg_window_ms", "hop_ms", "gamma"}, "windowing");
  try {
    c.ecg_gsr_window_ms = j.value("ecg_gsr_window_ms", c.ecg_gsr_window_ms);
    c.emg_window_ms = j.value("emg_window_ms", c.emg_window_ms);
    c.hop_ms = j.value("hop_ms", c.hop_ms);
    c.gamma = j.value("gamma", c.gamma);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("windowing config: ") + e.what());
  }
  c.validate();
}

}  // namespace pptp

namespace pptp::app {

using train_eval::CellResult;
using train_eval::MetricsReport;

namespace {

using pptp::require_known;

bool numeric_cell(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+' || c == 'e';
  });
}

}  // namespace

// ---- configuration ----------------------------------------------------------------

GradCheckConfig::GradCheckConfig() {
  model.groups = 2;
  model.plain_per_group = 1;
  model.d_model = 64;
  // 48 sampled coordinates per array keeps the full model check near 90 s.
  options.max_coords_per_array = 48;
}

void to_json(nlohmann::json& j, const GradCheckConfig& c) {
  j = {{"primitive_tol", c.primitive_tol},
       {"model_tol", c.model_tol},
       {"batch", c.batch},
       {"input_seed", c.input_seed},
       {"model_seed", c.model_seed},
       {"order", c.options.order},
       {"eps", c.options.eps},
       {"max_coords_per_array", c.options.max_coords_per_array},
       {"coord_seed", c.options.seed},
       {"model", c.model}};
}

void from_json(const nlohmann::json& j, GradCheckConfig& c) {
  require_known(j,
                {"primitive_tol", "model_tol", "batch", "input_seed", "model_seed", "order", "eps", "max_coords_per_array",
                 "coord_seed", "model"},
                "gradcheck");
  try {
    c.primitive_tol = j.value("primitive_tol", c.primitive_tol);
    c.model_tol = j.value("model_tol", c.model_tol);
    c.batch = j.value("batch", c.batch);
    c.input_seed = j.value("input_seed", c.input_seed);
    c.model_seed = j.value("model_seed", c.model_seed);
    c.options.order = j.value("order", c.options.order);
    c.options.eps = j.value("eps", c.options.eps);
    c.options.max_coords_per_array = j.value("max_coords_per_array", c.options.max_coords_per_array);
    c.options.seed = j.value("coord_seed", c.options.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("gradcheck config: ") + e.what());
  }
  if (j.contains("model")) model::from_json(j.at("model"), c.model);
  if (c.batch == 0) throw ConfigError("gradcheck: batch must be positive");
  if (!(c.options.eps > 0.0)) throw ConfigError("gradcheck: eps must be positive");
  if (c.options.order != 2 && c.options.order != 4) throw ConfigError("gradcheck: order must be 2 or 4");
  c.model.validate();
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"model", c.model}, {"train", c.train}, {"windowing", c.windowing}, {"gradcheck", c.gradcheck}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  require_known(j, {"model", "train", "windowing", "gradcheck"}, "top-level");
  if (j.contains("model")) model::from_json(j.at("model"), c.model);
  if (j.contains("train")) train_eval::from_json(j.at("train"), c.train);
  if (j.contains("windowing")) pptp::from_json(j.at("windowing"), c.windowing);
  if (j.contains("gradcheck")) from_json(j.at("gradcheck"), c.gradcheck);
  c.model.validate();
  c.train.validate();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig c;
  if (path.empty()) return c;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  from_json(j, c);
  return c;
}

std::vector<std::filesystem::path> find_session_dirs(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw FormatError("not a directory: " + root.string());
  if (fs::exists(root / "meta.json")) return {root};
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "meta.json")) dirs.push_back(e.path());
  if (dirs.empty()) throw FormatError("no session directories under " + root.string());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

std::vector<Session> load_sessions(const std::filesystem::path& root) {
  std::vector<Session> out;
  for (const auto& d : find_session_dirs(root)) out.push_back(load_session(d));
  return out;
}

// ---- reports ------------------------------------------------------------------------

std::string format_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  auto widen = [&](const std::vector<std::string>& r) {
    if (r.size() != header.size()) throw ValidationError("table row has the wrong number of cells");
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  };
  widen(header);
  for (const auto& r : rows) widen(r);
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      const std::string pad(width[i] - r[i].size(), ' ');
      if (i) out << "  ";
      out << (numeric_cell(r[i]) ? pad + r[i] : r[i] + (i + 1 < r.size() ? pad : ""));
    }
    out << '\n';
  };
  emit(header);
  std::size_t total = 0;
  for (std::size_t w : width) total += w;
  out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& r : rows) emit(r);
  return out.str();
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<std::string> class_names(std::size_t n_classes) {
  if (n_classes == 3) return {"Low", "Medium", "High"};
  std::vector<std::string> out;
  for (std::size_t i = 1; i <= n_classes; ++i) out.push_back(std::to_string(i));
  return out;
}

std::string confusion_csv(const MetricsReport& r) {
  const auto names = class_names(r.n_classes);
  std::ostringstream out;
  out << "predicted\\truth";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (std::size_t p = 0; p < r.n_classes; ++p) {
    out << names[p];
    for (std::size_t t = 0; t < r.n_classes; ++t) out << ',' << r.confusion[p][t];
    out << '\n';
  }
  return out.str();
}

std::string metrics_table(const MetricsReport& r) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : r.per_subject)
    rows.push_back({s.subject, std::to_string(s.n), fixed(s.accuracy), fixed(s.macro_f1)});
  rows.push_back({"all", std::to_string(r.total), fixed(r.accuracy), fixed(r.macro_f1)});
  std::string out = format_table({"subject", "frames", "accuracy", "macro_f1"}, rows);
  out += "subject mean accuracy " + fixed(r.mean_accuracy) + " +- " + fixed(r.std_accuracy) + ", macro_f1 " +
         fixed(r.mean_f1) + " +- " + fixed(r.std_f1) + "\n";
  return out;
}

std::string ablation_table(const std::vector<CellResult>& cells) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : cells)
    rows.push_back({c.cell.signal_mask, c.cell.cp_guidance ? "yes" : "no", std::to_string(c.cell.n_classes),
                    fixed(c.mean_accuracy), fixed(c.std_accuracy), fixed(c.mean_f1), fixed(c.std_f1)});
  return format_table({"signals", "cp", "classes", "acc_mean", "acc_std", "f1_mean", "f1_std"}, rows);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path);
  if (!out) throw SessionWriteError("cannot write " + path.string());
  out << text;
  if (!out) throw SessionWriteError("write failed for " + path.string());
}

// ---- gradient checks ---------------------------------------------------------------------

namespace {

ad::Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ad::shape_size(shape));
  for (double& x : v) x = u(rng);
  return ad::Tensor::from(std::move(shape), std::move(v), true);
}

// Fixed random weighting so every output coordinate reaches the loss.
ad::Tensor probe(const ad::Tensor& t) {
  std::mt19937_64 rng(99);
  ad::Tensor w = random_tensor(t.shape(), rng);
  w.set_requires_grad(false);
  return ad::sum(ad::mul(t, w));
}

}  // namespace

std::vector<NamedCheck> check_primitives(const ad::GradCheckOptions& opts, std::uint64_t seed) {
  using namespace pptp::ad;
  std::mt19937_64 rng(seed);
  Tensor a = random_tensor({3, 5}, rng);
  Tensor b = random_tensor({5, 4}, rng);
  Tensor c = random_tensor({3, 5}, rng);
  Tensor row = random_tensor({5}, rng);
  Tensor gain = random_tensor({5}, rng, 0.5, 1.5);
  Tensor pos = random_tensor({3, 5}, rng, 0.5, 2.0);
  Tensor table = random_tensor({6, 3}, rng);
  Tensor logits = random_tensor({1, 4}, rng, -2.0, 2.0);
  const std::vector<std::size_t> idx = {4, 0, 4, 2};

  std::vector<NamedCheck> out;
  auto run = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> params) {
    out.push_back({name, grad_check(f, std::move(params), opts)});
  };
  run("matmul", [&] { return probe(matmul(a, b)); }, {a, b});
  run("add", [&] { return probe(add(a, c)); }, {a, c});
  run("add_broadcast", [&] { return probe(add(a, row)); }, {a, row});
  run("sub", [&] { return probe(sub(a, c)); }, {a, c});
  run("mul", [&] { return probe(mul(a, c)); }, {a, c});
  run("mul_broadcast", [&] { return probe(mul(a, row)); }, {a, row});
  run("scale", [&] { return probe(scale(a, -1.7)); }, {a});
  run("concat", [&] { return probe(concat({a, c}, 1)); }, {a, c});
  run("slice", [&] { return probe(slice(a, 1, 2, 3)); }, {a});
  run("transpose", [&] { return probe(transpose(a)); }, {a});
  run("reshape", [&] { return probe(reshape(a, {5, 3})); }, {a});
  run("gelu", [&] { return probe(gelu(a)); }, {a});
  run("log", [&] { return probe(log(pos)); }, {pos});
  run("softmax", [&] { return probe(softmax(a, 1)); }, {a});
  run("layernorm_nobias", [&] { return probe(layernorm_nobias(a, gain)); }, {a, gain});
  run("embedding_lookup", [&] { return probe(embedding_lookup(table, idx)); }, {table});
  run("mean_pool", [&] { return probe(mean_pool(a, 0)); }, {a});
  run("cross_entropy", [&] { return cross_entropy(logits, 2); }, {logits});
  return out;
}

NamedCheck check_model(const GradCheckConfig& cfg) {
  model::ModelConfig mc = cfg.model;
  mc.dropout = 0.0;
  mc.validate();
  auto params = synth::sample_subject(cfg.input_seed);
  params.subject_id = "gradcheck";
  const Session s = synth::simulate_task(params, Difficulty::MD, cfg.input_seed);
  WindowingConfig wc;
  const auto ends = frame_end_times(s, wc);
  if (ends.size() < cfg.batch) throw ValidationError("gradcheck session has too few frames");

  std::vector<model::ModelInput> inputs;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < cfg.batch; ++i) {
    const AnalysisFrame f = make_frame(s, ends[(i + 1) * ends.size() / (cfg.batch + 1)], wc);
    inputs.push_back(model::make_input(f, mc));
    labels.push_back(train_eval::class_of(f, mc.n_classes) % mc.n_classes);
  }
  model::PptpModel m(mc, cfg.model_seed);
  auto loss = [&] {
    ad::Tensor total = ad::cross_entropy(m.forward(inputs[0]), labels[0]);
    for (std::size_t i = 1; i < inputs.size(); ++i) total = ad::add(total, ad::cross_entropy(m.forward(inputs[i]), labels[i]));
    return ad::scale(total, 1.0 / static_cast<double>(inputs.size()));
  };
  std::vector<ad::Tensor> tensors;
  for (const auto& p : m.parameters()) tensors.push_back(p.tensor);
  NamedCheck out{"model", ad::grad_check(loss, tensors, cfg.options)};
  out.name = "model:" + m.parameters()[out.result.worst_array].name;
  return out;
}

// ---- synthetic corpus ----------------------------------------------------------------------

std::vector<SynthEntry> synth_plan(const SynthRequest& req) {
  if (req.subjects < 1) throw ConfigError("synth: need at least one subject");
  if (req.tasks_per_subject < 1) throw ConfigError("synth: need at least one task per subject");
  std::vector<SynthEntry> out;
  for (int k = 0; k < req.subjects; ++k) {
    char id[16];
    std::snprintf(id, sizeof id, "s%02d", k);
    for (int t = 0; t < req.tasks_per_subject; ++t) {
      SynthEntry e;
      e.subject = id;
      e.difficulty = static_cast<Difficulty>(t % 3);
      e.repeat = t / 3;
      e.dir_name = e.subject + "_" + std::string(difficulty_name(e.difficulty));
      if (e.repeat > 0) e.dir_name += "_r" + std::to_string(e.repeat);
      out.push_back(e);
    }
  }
  return out;
}

Session synth_session(const SynthRequest& req, const SynthEntry& entry) {
  const int k = std::stoi(entry.subject.substr(1));
  const auto ss = synth::subject_seed(req.seed, k);
  auto params = synth::sample_subject(ss);
  params.subject_id = entry.subject;
  return synth::simulate_task(params, entry.difficulty, synth::task_seed(ss, entry.difficulty, entry.repeat));
}

std::vector<Session> synth_corpus(const SynthRequest& req) {
  std::vector<Session> out;
  for (const auto& e : synth_plan(req)) out.push_back(synth_session(req, e));
  return out;
}

train_eval::AnovaResult difficulty_anova(const std::vector<Session>& sessions) {
  std::map<int, std::vector<double>> groups;
  for (const auto& s : sessions) {
    if (s.labels.entries.empty()) throw ValidationError("session of " + s.subject_id + " has no labels");
    double sum = 0.0;
    for (const auto& e : s.labels.entries) sum += e.muir_mean;
    groups[static_cast<int>(s.difficulty)].push_back(sum / static_cast<double>(s.labels.entries.size()));
  }
  std::vector<std::vector<double>> g;
  for (auto& [d, v] : groups) g.push_back(std::move(v));
  return train_eval::one_way_anova(g);
}

}  // namespace pptp::app
