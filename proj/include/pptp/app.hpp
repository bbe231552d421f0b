#pragma once

// Glue shared by the command-line tool and the acceptance suite: run
// configuration, session discovery, text and CSV reports, gradient-check
// suites and synthetic corpus generation.

#include "pptp/gradcheck.hpp"
#include "pptp/model.hpp"
#include "pptp/session.hpp"
#include "pptp/synth.hpp"
#include "pptp/train_eval.hpp"
#include "pptp/windowing.hpp"

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace pptp {

void to_json(nlohmann::json& j, const WindowingConfig& c);
void from_json(const nlohmann::json& j, WindowingConfig& c);

}  // namespace pptp

namespace pptp::app {

struct GradCheckConfig {
  double primitive_tol = 1e-6;
  double model_tol = 1e-4;
  std::size_t batch = 2;
  std::uint64_t input_seed = 11;
  std::uint64_t model_seed = 1;
  ad::GradCheckOptions options;
  model::ModelConfig model;  // defaults to the desk model: G=2, L=1, d=64

  GradCheckConfig();
};

void to_json(nlohmann::json& j, const GradCheckConfig& c);
void from_json(const nlohmann::json& j, GradCheckConfig& c);

// Contents of a --config file. Every section is optional:
//   {"model": {...}, "train": {...}, "windowing": {...}, "gradcheck": {...}}
struct RunConfig {
  model::ModelConfig model;
  train_eval::TrainConfig train;
  WindowingConfig windowing;
  GradCheckConfig gradcheck;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Reads a JSON config file; an empty path gives the defaults. Throws
// ConfigError on unreadable files, malformed JSON or unknown keys.
RunConfig load_run_config(const std::filesystem::path& path);

// A session directory itself, or its immediate subdirectories holding a
// meta.json, sorted by name. Throws FormatError when none is found.
std::vector<std::filesystem::path> find_session_dirs(const std::filesystem::path& root);
std::vector<Session> load_sessions(const std::filesystem::path& root);

// ---- reports ---------------------------------------------------------------------

// Columns padded to their widest cell; numeric-looking cells right-aligned.
std::string format_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);
std::string fixed(double v, int digits = 4);

std::vector<std::string> class_names(std::size_t n_classes);
// Rows are predicted classes, columns true classes.
std::string confusion_csv(const train_eval::MetricsReport& r);
std::string metrics_table(const train_eval::MetricsReport& r);
std::string ablation_table(const std::vector<train_eval::CellResult>& cells);

void write_text(const std::filesystem::path& path, const std::string& text);  // throws SessionWriteError

// ---- gradient checks ---------------------------------------------------------------

struct NamedCheck {
  std::string name;
  ad::GradCheckResult result;
};

std::vector<NamedCheck> check_primitives(const ad::GradCheckOptions& opts, std::uint64_t seed = 17);

// Mean cross-entropy of `batch` frames from a synthetic session, checked
// against every parameter of a freshly initialised model.
NamedCheck check_model(const GradCheckConfig& cfg);

// ---- synthetic corpus and statistics ---------------------------------------------------

struct SynthRequest {
  int subjects = 5;
  int tasks_per_subject = 3;  // difficulties cycle LD, MD, HD
  std::uint64_t seed = 42;
};

// Subject ids are "s00", "s01", ...; directories "<subject>_<difficulty>[_r<k>]".
struct SynthEntry {
  std::string subject;
  Difficulty difficulty = Difficulty::LD;
  int repeat = 0;
  std::string dir_name;
};

std::vector<SynthEntry> synth_plan(const SynthRequest& req);
Session synth_session(const SynthRequest& req, const SynthEntry& entry);
std::vector<Session> synth_corpus(const SynthRequest& req);

// Groups the mean questionnaire score of every session by difficulty.
train_eval::AnovaResult difficulty_anova(const std::vector<Session>& sessions);

}  // namespace pptp::app
