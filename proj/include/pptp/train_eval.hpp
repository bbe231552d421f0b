#pragma once

// Datasets, step-interval splitting, Adam training, metrics, the ablation
// grid and a one-way ANOVA.

#include "pptp/model.hpp"
#include "pptp/session.hpp"
#include "pptp/windowing.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace pptp::train_eval {

using model::ModelConfig;
using model::PptpModel;

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  double train_fraction = 0.8;
  std::string signal_mask = "ecg+gsr+emg";  // physiological channels kept
  bool cp_guidance = true;
  std::size_t n_classes = 3;
  std::size_t frame_stride = 1;  // keep every k-th frame of the hop grid
  bool shuffle_labels = false;   // null control: permute training labels
  // Scale each matrix's step by min(1, d_model / fan_in) so wide input
  // layers move their outputs no faster than the d_model-wide ones.
  bool fan_in_lr_scaling = true;

  void validate() const;  // throws ConfigError
  model::SignalMask mask() const;
  // Copy of `cfg` with the head size and CP guidance taken from this config.
  ModelConfig apply(ModelConfig cfg) const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// ---- datasets -----------------------------------------------------------------

struct Sample {
  model::ModelInput input;
  std::size_t label = 0;  // 0-based class id
  std::size_t session = 0;
  std::string subject;
  int step_index = 0;
  std::int64_t end_ms = 0;
};

struct Dataset {
  std::size_t n_classes = 3;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

// 3 classes: Low/Medium/High. 7 classes: Muir label - 1.
std::size_t class_of(const AnalysisFrame& frame, std::size_t n_classes);

// Frames of every session on the hop grid, keeping every frame_stride-th one.
// Sessions are numbered in the order given.
Dataset build_dataset(const std::vector<Session>& sessions, const ModelConfig& model_cfg, const TrainConfig& cfg,
                      const WindowingConfig& windowing = {});

// ---- splitting -----------------------------------------------------------------

struct FrameKey {
  std::size_t session = 0;
  int step_index = 0;
  std::int64_t end_ms = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::size_t> dropped;  // train frames whose span touched a test frame
  std::size_t train_intervals = 0;
  std::size_t test_intervals = 0;
};

// Whole (session, step) intervals go to train or test, round(n * fraction)
// of them to train (at least one on each side). Frames span
// (end - span_ms, end]; train frames overlapping a test frame are dropped.
// Throws SplitError with fewer than two intervals.
SplitIndices split_by_step(std::span<const FrameKey> frames, double train_fraction, std::uint64_t seed,
                           std::int64_t span_ms = 3000);

struct DatasetSplit {
  Dataset train;
  Dataset test;
  std::size_t dropped = 0;
};

DatasetSplit split_dataset(Dataset data, double train_fraction, std::uint64_t seed, std::int64_t span_ms = 3000);

// ---- metrics -------------------------------------------------------------------

struct SubjectMetrics {
  std::string subject;
  std::size_t n = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

struct MetricsReport {
  std::size_t n_classes = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [predicted][truth]
  std::vector<SubjectMetrics> per_subject;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;

  // Throws ValidationError if the confusion totals disagree with the counts.
  void check_invariants() const;
};

void to_json(nlohmann::json& j, const MetricsReport& r);

// Accuracy, macro-F1 and confusion of one prediction list. Macro-F1 skips
// classes absent from both truth and prediction.
MetricsReport compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> pred,
                              std::size_t n_classes);

// Sample standard deviation (n - 1); zero for fewer than two values.
double mean_of(std::span<const double> v);
double std_of(std::span<const double> v);

// Pooled metrics plus a per-subject breakdown. Throws ValidationError on an
// empty dataset or a head size that differs from the dataset classes.
MetricsReport evaluate(const PptpModel& model, const Dataset& data);

// ---- training ------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_accuracy = -1.0;  // -1 without a test set
};

struct TrainResult {
  PptpModel model;
  std::vector<EpochRecord> history;
};

class Adam {
 public:
  // `lr_scale` multiplies the step of each parameter (all 1 when empty).
  Adam(std::vector<ad::Tensor> params, const TrainConfig& cfg, std::vector<double> lr_scale = {});
  void step();  // uses and then clears the parameter gradients
  std::size_t steps() const { return t_; }

 private:
  std::vector<ad::Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  std::vector<double> lr_scale_;
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

// Mini-batch Adam on mean cross-entropy. Throws ValidationError on an empty
// dataset or fewer than two classes present, TrainingError when the loss or
// a parameter stops being finite.
TrainResult train(const Dataset& train_set, const Dataset* test_set, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {});

// ---- ablation ------------------------------------------------------------------

struct GridCell {
  std::string signal_mask = "ecg+gsr+emg";
  bool cp_guidance = true;
  std::size_t n_classes = 3;

  std::string name() const;
};

struct CellResult {
  GridCell cell;
  std::vector<SubjectMetrics> per_subject;  // one entry per subject (or "pooled")
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;
};

void to_json(nlohmann::json& j, const CellResult& r);

struct AblateOptions {
  bool pooled = false;  // one model over all subjects instead of one per subject
  WindowingConfig windowing;
};

// Trains and evaluates one model per subject per cell. Sessions are grouped
// by subject_id in first-seen order. Throws ValidationError with fewer than
// two subjects.
std::vector<CellResult> ablate(const std::vector<Session>& sessions, const std::vector<GridCell>& grid,
                               const ModelConfig& model_cfg, const TrainConfig& base,
                               const AblateOptions& opts = {});

// Train and test metrics of one subject (or any session set) for one config.
MetricsReport train_and_evaluate(const std::vector<Session>& sessions, const ModelConfig& model_cfg,
                                 const TrainConfig& cfg, const WindowingConfig& windowing = {});

// ---- statistics ----------------------------------------------------------------

struct AnovaResult {
  double f_stat = 0.0;
  double p_value = 1.0;
  double df_between = 0.0;
  double df_within = 0.0;
};

// Classic one-way ANOVA. Throws ValidationError with fewer than two groups,
// a group of fewer than two values, or zero within-group variance alongside
// nonzero between-group variance.
AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
// P(F > f) for an F(d1, d2) variable.
double f_survival(double f, double d1, double d2);

}  // namespace pptp::train_eval
