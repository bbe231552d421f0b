// pptp command-line tool. Exit codes: 0 success, 1 a threshold or invariant
// check failed, 2 bad input or runtime error.

#include "pptp/app.hpp"
#include "pptp/cp_eval.hpp"
#include "pptp/errors.hpp"
#include "pptp/model.hpp"
#include "pptp/train_eval.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <limits>
#include <sstream>

namespace fs = std::filesystem;
using namespace pptp;
using namespace pptp::train_eval;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kError = 2;

struct Common {
  std::string config;
  std::string out;
  bool json = false;
};

void add_common(CLI::App* cmd, Common& c, bool with_out = true) {
  cmd->add_option("--config", c.config, "JSON config file");
  if (with_out) cmd->add_option("--out", c.out, "directory for JSON, CSV and checkpoint outputs");
  cmd->add_flag("--json", c.json, "print JSON instead of text tables");
}

void emit(const Common& c, const nlohmann::json& j, const std::string& text) {
  if (c.json)
    std::cout << j.dump(2) << '\n';
  else
    std::cout << text;
}

std::vector<Session> select_subject(std::vector<Session> sessions, const std::string& subject) {
  if (subject.empty()) return sessions;
  std::vector<Session> out;
  for (auto& s : sessions)
    if (s.subject_id == subject) out.push_back(std::move(s));
  if (out.empty()) throw ValidationError("no sessions for subject '" + subject + "'");
  return out;
}

std::string history_table(const std::vector<EpochRecord>& h) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : h)
    rows.push_back({std::to_string(e.epoch + 1), app::fixed(e.train_loss, 6),
                    e.test_accuracy < 0 ? "-" : app::fixed(e.test_accuracy)});
  return app::format_table({"epoch", "train_loss", "test_accuracy"}, rows);
}

std::string history_csv(const std::vector<EpochRecord>& h) {
  std::ostringstream out;
  out << "epoch,train_loss,test_accuracy\n";
  out.precision(17);
  for (const auto& e : h) out << e.epoch + 1 << ',' << e.train_loss << ',' << e.test_accuracy << '\n';
  return out.str();
}

void write_metrics(const fs::path& dir, const MetricsReport& r, const nlohmann::json& extra = {}) {
  nlohmann::json j = r;
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  app::write_text(dir / "metrics.json", j.dump(2) + "\n");
  app::write_text(dir / "metrics.txt", app::metrics_table(r));
  app::write_text(dir / "confusion.csv", app::confusion_csv(r));
}

// ---- subcommands ----------------------------------------------------------------

int run_synth(const Common& c, const app::SynthRequest& req) {
  app::load_run_config(c.config);
  if (c.out.empty()) throw ConfigError("synth needs --out");
  std::vector<std::vector<std::string>> rows;
  nlohmann::json manifest = {{"subjects", req.subjects}, {"tasks_per_subject", req.tasks_per_subject},
                             {"seed", req.seed}, {"sessions", nlohmann::json::array()}};
  for (const auto& e : app::synth_plan(req)) {
    const Session s = app::synth_session(req, e);
    validate_session(s);
    save_session(s, fs::path(c.out) / e.dir_name);
    const bool collapsed = !s.placements.empty() && s.placements.back().collapsed_after;
    rows.push_back({e.dir_name, e.subject, std::string(difficulty_name(e.difficulty)),
                    std::to_string(s.placements.size()), collapsed ? "yes" : "no"});
    manifest["sessions"].push_back({{"dir", e.dir_name},
                                    {"subject", e.subject},
                                    {"difficulty", difficulty_name(e.difficulty)},
                                    {"steps", s.placements.size()},
                                    {"collapsed", collapsed}});
  }
  app::write_text(fs::path(c.out) / "manifest.json", manifest.dump(2) + "\n");
  emit(c, manifest, app::format_table({"session", "subject", "difficulty", "steps", "collapsed"}, rows));
  return kOk;
}

int run_cp_eval(const Common& c, const std::string& dir, std::optional<std::int64_t> at_ms, bool trace) {
  const auto cfg = app::load_run_config(c.config);
  const Session s = load_session(dir);
  const std::int64_t upto = at_ms.value_or(std::numeric_limits<std::int64_t>::max());
  const auto f = failure_risk_vector(s.placements, upto, cfg.windowing.gamma);
  for (double v : f.f)
    if (!(v >= 0.0 || v == kUnstacked || v == kCollapsed))
      throw ValidationError("risk vector holds a value outside the sentinel partition");
  nlohmann::json j = {{"f", f.f}, {"n_stacked", f.n_stacked}, {"collapsed", f.collapsed}, {"gamma", f.gamma}};
  std::ostringstream text;
  for (std::size_t k = 0; k < f.f.size(); ++k) text << (k ? " " : "") << app::fixed(f.f[k], 6);
  text << '\n';
  if (trace) {
    std::vector<std::vector<std::string>> rows;
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& r : risk_trace(s.placements, upto, cfg.windowing.gamma)) {
      rows.push_back({std::to_string(r.step_index), std::to_string(r.timestamp_ms), app::fixed(r.skew, 6),
                      app::fixed(r.risk, 6), r.collapsed ? "yes" : "no"});
      steps.push_back({{"step", r.step_index}, {"timestamp_ms", r.timestamp_ms}, {"S", r.skew}, {"F", r.risk},
                       {"collapsed", r.collapsed}});
    }
    j["trace"] = steps;
    text << app::format_table({"step", "timestamp_ms", "S", "F", "collapsed"}, rows);
  }
  emit(c, j, text.str());
  return kOk;
}

int run_train(const Common& c, const std::string& data, const std::string& subject) {
  const auto cfg = app::load_run_config(c.config);
  const auto sessions = select_subject(app::load_sessions(data), subject);
  const ModelConfig mc = cfg.train.apply(cfg.model);
  auto split = split_dataset(build_dataset(sessions, mc, cfg.train, cfg.windowing), cfg.train.train_fraction,
                             cfg.train.seed);
  if (!c.json)
    std::cout << "train frames " << split.train.size() << ", test frames " << split.test.size() << ", dropped "
              << split.dropped << "\n";
  auto result = train(split.train, &split.test, mc, cfg.train, [&](const EpochRecord& e) {
    if (!c.json)
      std::cout << "epoch " << e.epoch + 1 << " loss " << app::fixed(e.train_loss, 6) << " test_accuracy "
                << app::fixed(e.test_accuracy) << std::endl;
  });
  const auto report = evaluate(result.model, split.test);
  report.check_invariants();
  nlohmann::json j = report;
  j["history"] = nlohmann::json::array();
  for (const auto& e : result.history)
    j["history"].push_back({{"epoch", e.epoch + 1}, {"train_loss", e.train_loss}, {"test_accuracy", e.test_accuracy}});
  j["config"] = cfg;
  if (!c.out.empty()) {
    const fs::path out(c.out);
    fs::create_directories(out);
    result.model.save(out / "model.ckpt");
    write_metrics(out, report, {{"history", j["history"]}, {"config", cfg}});
    app::write_text(out / "history.csv", history_csv(result.history));
    app::write_text(out / "config.json", nlohmann::json(cfg).dump(2) + "\n");
  }
  emit(c, j, history_table(result.history) + "\n" + app::metrics_table(report) + "\n" + app::confusion_csv(report));
  return kOk;
}

int run_eval(const Common& c, const std::string& data, const std::string& ckpt, const std::string& subject,
             const std::string& which) {
  auto cfg = app::load_run_config(c.config);
  const auto model = model::PptpModel::load(ckpt);
  cfg.train.n_classes = model.config().n_classes;
  cfg.train.cp_guidance = model.config().cp_guidance;
  const auto sessions = select_subject(app::load_sessions(data), subject);
  Dataset ds = build_dataset(sessions, model.config(), cfg.train, cfg.windowing);
  if (which == "test")
    ds = split_dataset(std::move(ds), cfg.train.train_fraction, cfg.train.seed).test;
  else if (which == "train")
    ds = split_dataset(std::move(ds), cfg.train.train_fraction, cfg.train.seed).train;
  const auto report = evaluate(model, ds);
  report.check_invariants();
  if (!c.out.empty()) write_metrics(c.out, report, {{"frames", which}});
  emit(c, report, app::metrics_table(report) + "\n" + app::confusion_csv(report));
  return kOk;
}

GridCell parse_cell(const std::string& text) {
  // mask[:cp|:nocp][:3|:7]
  GridCell cell;
  std::stringstream ss(text);
  std::string part;
  std::getline(ss, cell.signal_mask, ':');
  while (std::getline(ss, part, ':')) {
    if (part == "cp")
      cell.cp_guidance = true;
    else if (part == "nocp")
      cell.cp_guidance = false;
    else if (part == "3" || part == "7")
      cell.n_classes = static_cast<std::size_t>(std::stoi(part));
    else
      throw ConfigError("bad grid cell '" + text + "'");
  }
  return cell;
}

std::vector<GridCell> default_grid() {
  return {{"ecg", false, 3},         {"gsr", false, 3},         {"emg", false, 3},
          {"none", true, 3},         {"ecg+gsr+emg", false, 3}, {"ecg+gsr+emg", true, 3},
          {"ecg+gsr+emg", true, 7}};
}

int run_ablate(const Common& c, const std::string& data, const std::vector<std::string>& cells, bool pooled) {
  const auto cfg = app::load_run_config(c.config);
  const auto sessions = app::load_sessions(data);
  std::vector<GridCell> grid;
  for (const auto& t : cells) grid.push_back(parse_cell(t));
  if (grid.empty()) grid = default_grid();
  for (const auto& cell : grid) {  // reject bad cells before any training starts
    auto t = cfg.train;
    t.signal_mask = cell.signal_mask;
    t.cp_guidance = cell.cp_guidance;
    t.n_classes = cell.n_classes;
    t.validate();
  }
  AblateOptions opts;
  opts.pooled = pooled;
  opts.windowing = cfg.windowing;
  const auto results = ablate(sessions, grid, cfg.model, cfg.train, opts);
  nlohmann::json j = {{"cells", results}, {"config", cfg}, {"pooled", pooled}};
  if (!c.out.empty()) {
    app::write_text(fs::path(c.out) / "ablation.json", j.dump(2) + "\n");
    app::write_text(fs::path(c.out) / "ablation.txt", app::ablation_table(results));
  }
  emit(c, j, app::ablation_table(results));
  return kOk;
}

int run_gradcheck(const Common& c, bool primitives_only) {
  const auto cfg = app::load_run_config(c.config);
  const auto& g = cfg.gradcheck;
  std::vector<std::vector<std::string>> rows;
  nlohmann::json j = {{"checks", nlohmann::json::array()}};
  bool ok = true;
  auto record = [&](const app::NamedCheck& chk, double tol) {
    const bool pass = chk.result.max_rel_error <= tol;
    ok = ok && pass;
    char err[32];
    std::snprintf(err, sizeof err, "%.3e", chk.result.max_rel_error);
    rows.push_back({chk.name, std::to_string(chk.result.coords_checked), err, pass ? "pass" : "FAIL"});
    j["checks"].push_back({{"name", chk.name},
                           {"coords", chk.result.coords_checked},
                           {"max_rel_error", chk.result.max_rel_error},
                           {"tolerance", tol},
                           {"worst_analytic", chk.result.worst_analytic},
                           {"worst_numeric", chk.result.worst_numeric},
                           {"pass", pass}});
  };
  for (const auto& chk : app::check_primitives(g.options)) record(chk, g.primitive_tol);
  if (!primitives_only) record(app::check_model(g), g.model_tol);
  j["pass"] = ok;
  if (!c.out.empty()) app::write_text(fs::path(c.out) / "gradcheck.json", j.dump(2) + "\n");
  emit(c, j, app::format_table({"check", "coords", "max_rel_error", "result"}, rows));
  return ok ? kOk : kCheckFailed;
}

std::vector<std::vector<double>> parse_groups(const std::string& text) {
  std::vector<std::vector<double>> groups;
  std::stringstream gs(text);
  std::string group;
  while (std::getline(gs, group, ';')) {
    std::vector<double> values;
    std::stringstream vs(group);
    std::string v;
    while (std::getline(vs, v, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(v, &used));
        if (used != v.size()) throw std::invalid_argument(v);
      } catch (const std::exception&) {
        throw ConfigError("bad number '" + v + "' in --groups");
      }
    }
    groups.push_back(std::move(values));
  }
  return groups;
}

int run_anova(const Common& c, const std::string& groups_text, const std::string& data, int subjects,
              std::uint64_t seed) {
  app::load_run_config(c.config);
  AnovaResult r;
  std::string source;
  if (!groups_text.empty()) {
    r = one_way_anova(parse_groups(groups_text));
    source = "groups";
  } else if (!data.empty()) {
    r = app::difficulty_anova(app::load_sessions(data));
    source = "sessions by difficulty";
  } else {
    app::SynthRequest req;
    req.subjects = subjects;
    req.seed = seed;
    r = app::difficulty_anova(app::synth_corpus(req));
    source = "synthetic sessions by difficulty";
  }
  nlohmann::json j = {{"source", source},     {"f_stat", r.f_stat},         {"p_value", r.p_value},
                      {"df_between", r.df_between}, {"df_within", r.df_within}};
  if (!c.out.empty()) app::write_text(fs::path(c.out) / "anova.json", j.dump(2) + "\n");
  char p[32];
  std::snprintf(p, sizeof p, "%.6g", r.p_value);
  emit(c, j,
       app::format_table({"source", "F", "p", "df_between", "df_within"},
                         {{source, app::fixed(r.f_stat, 6), p, app::fixed(r.df_between, 0), app::fixed(r.df_within, 0)}}));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"PPTP trust prediction from physiological signals and collaboration performance"};
  cli.require_subcommand(1);

  Common synth_c, cp_c, train_c, eval_c, ablate_c, grad_c, anova_c;
  app::SynthRequest synth_req;
  auto* synth = cli.add_subcommand("synth", "generate synthetic sessions");
  add_common(synth, synth_c);
  synth->add_option("--subjects", synth_req.subjects, "number of subjects")->check(CLI::PositiveNumber);
  synth->add_option("--tasks-per-subject", synth_req.tasks_per_subject, "tasks per subject (cycles LD, MD, HD)")
      ->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_req.seed, "base seed");

  std::string session_dir;
  std::optional<std::int64_t> at_ms;
  bool trace = false;
  auto* cp = cli.add_subcommand("cp-eval", "failure-risk vector of a session");
  add_common(cp, cp_c, false);
  cp->add_option("--session", session_dir, "session directory")->required();
  cp->add_option("--at-ms", at_ms, "evaluate as of this time");
  cp->add_flag("--trace", trace, "print per-step skew and risk");

  std::string data, subject, ckpt, which = "all";
  auto* tr = cli.add_subcommand("train", "train one model and report test metrics");
  add_common(tr, train_c);
  tr->add_option("--data", data, "session directory or a directory of sessions")->required();
  tr->add_option("--subject", subject, "restrict to one subject");

  auto* ev = cli.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev, eval_c);
  ev->add_option("--data", data, "session directory or a directory of sessions")->required();
  ev->add_option("--checkpoint", ckpt, "checkpoint written by train")->required();
  ev->add_option("--subject", subject, "restrict to one subject");
  ev->add_option("--frames", which, "all, train or test frames of the configured split")
      ->check(CLI::IsMember({"all", "train", "test"}));

  std::vector<std::string> cells;
  bool pooled = false;
  auto* ab = cli.add_subcommand("ablate", "train the signal/CP/resolution grid");
  add_common(ab, ablate_c);
  ab->add_option("--data", data, "directory of sessions")->required();
  ab->add_option("--cell", cells, "grid cell mask[:cp|:nocp][:3|:7], repeatable");
  ab->add_flag("--pooled", pooled, "one model over all subjects");

  bool primitives_only = false;
  auto* gc = cli.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(gc, grad_c);
  gc->add_flag("--primitives-only", primitives_only, "skip the whole-model check");

  std::string groups_text;
  int anova_subjects = 10;
  std::uint64_t anova_seed = 42;
  auto* an = cli.add_subcommand("anova", "one-way ANOVA");
  add_common(an, anova_c);
  an->add_option("--groups", groups_text, "groups as '1,2,3;2,3,4'");
  an->add_option("--data", data, "sessions grouped by difficulty");
  an->add_option("--subjects", anova_subjects, "synthetic subjects when no data is given")->check(CLI::PositiveNumber);
  an->add_option("--seed", anova_seed, "synthetic base seed");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return cli.exit(e) == 0 ? kOk : kError;
  }

  try {
    if (*synth) return run_synth(synth_c, synth_req);
    if (*cp) return run_cp_eval(cp_c, session_dir, at_ms, trace);
    if (*tr) return run_train(train_c, data, subject);
    if (*ev) return run_eval(eval_c, data, ckpt, subject, which);
    if (*ab) return run_ablate(ablate_c, data, cells, pooled);
    if (*gc) return run_gradcheck(grad_c, primitives_only);
    if (*an) return run_anova(anova_c, groups_text, data, anova_subjects, anova_seed);
  } catch (const TrainingError& e) {
    std::cerr << "training failed in epoch " << e.epoch() << ": " << e.what() << '\n';
    return kError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kError;
  }
  return kError;
}
