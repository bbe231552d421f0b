#include "doctest.h"

#include "pptp/errors.hpp"
#include "pptp/synth.hpp"
#include "pptp/train_eval.hpp"

#include <algorithm>
#include <set>

#include <boost/math/distributions/fisher_f.hpp>

using namespace pptp;
using namespace pptp::train_eval;

namespace {

model::ModelConfig tiny_model() {
  model::ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.ffn_mult = 2;
  c.plain_per_group = 1;
  c.groups = 1;
  c.emg_hidden = 4;
  c.rel_pos_max_dist = 4;
  return c;
}

// Physiological channels are zero; only the CP vector tells classes apart.
Sample cp_sample(std::size_t label, std::size_t i) {
  Sample s;
  s.input.ecg.assign(model::kSignalLength, 0.0);
  s.input.gsr.assign(model::kSignalLength, 0.0);
  s.input.emg_left.assign(28 * model::kEmgWindow, 0.0);
  s.input.emg_right.assign(28 * model::kEmgWindow, 0.0);
  s.input.cp.fill(-1.0);
  for (std::size_t k = 0; k < label * 3; ++k) s.input.cp[k] = 0.1 * static_cast<double>(k % 3);
  s.label = label;
  s.session = i;
  s.step_index = static_cast<int>(i);
  s.end_ms = 1000;
  s.subject = i % 2 ? "a" : "b";
  return s;
}

Dataset cp_dataset(std::size_t n) {
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) d.samples.push_back(cp_sample(i % 3, i));
  return d;
}

TrainConfig cp_only(std::size_t epochs) {
  TrainConfig c;
  c.signal_mask = "none";
  c.cp_guidance = true;
  c.epochs = epochs;
  c.batch_size = 4;
  c.lr = 3e-3;
  return c;
}

double train_accuracy(const TrainResult& r, const Dataset& d) { return evaluate(r.model, d).accuracy; }

}  // namespace

TEST_CASE("config json round trip and unknown keys") {
  TrainConfig c;
  c.lr = 5e-4;
  c.signal_mask = "ecg+gsr";
  c.n_classes = 7;
  nlohmann::json j = c;
  const TrainConfig back = j.get<TrainConfig>();
  CHECK(back.lr == 5e-4);
  CHECK(back.signal_mask == "ecg+gsr");
  CHECK(back.n_classes == 7);
  j["learning_rate"] = 1.0;
  CHECK_THROWS_AS(j.get<TrainConfig>(), ConfigError);
  TrainConfig bad;
  bad.n_classes = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.signal_mask = "none";
  bad.cp_guidance = false;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("step split keeps whole intervals apart") {
  std::vector<FrameKey> frames;
  for (int step = 0; step < 10; ++step)
    for (int k = 0; k < 5; ++k) frames.push_back({0, step, step * 100000 + k * 108});
  const auto a = split_by_step(frames, 0.8, 3);
  CHECK(a.train_intervals == 8);
  CHECK(a.test_intervals == 2);
  std::set<int> train_steps, test_steps;
  for (auto i : a.train) train_steps.insert(frames[i].step_index);
  for (auto i : a.test) test_steps.insert(frames[i].step_index);
  for (int s : test_steps) CHECK(train_steps.count(s) == 0);
  CHECK(test_steps.size() == 2);
  CHECK(a.dropped.empty());
  CHECK(a.train.size() + a.test.size() == frames.size());

  const auto b = split_by_step(frames, 0.8, 3);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
}

TEST_CASE("train frames overlapping a test frame are dropped") {
  // Two adjacent steps in one session, frames 1 s apart with 3 s spans.
  std::vector<FrameKey> frames;
  for (int k = 0; k < 10; ++k) frames.push_back({0, k < 5 ? 1 : 2, 1000 * (k + 1)});
  const auto r = split_by_step(frames, 0.5, 1);
  REQUIRE(r.test.size() == 5);
  CHECK(r.dropped.size() == 2);
  for (auto i : r.train)
    for (auto j : r.test) CHECK(std::abs(frames[i].end_ms - frames[j].end_ms) >= 3000);
}

TEST_CASE("split needs two intervals") {
  std::vector<FrameKey> frames = {{0, 1, 1000}, {0, 1, 2000}};
  CHECK_THROWS_AS(split_by_step(frames, 0.8, 1), SplitError);
  CHECK_THROWS_AS(split_by_step({}, 0.8, 1), SplitError);
}

TEST_CASE("metrics on hand-computed cases") {
  const std::vector<std::size_t> truth = {0, 0, 1, 1};
  const std::vector<std::size_t> pred = {0, 1, 0, 1};
  const auto r = compute_metrics(truth, pred, 3);
  CHECK(r.accuracy == doctest::Approx(0.5));
  CHECK(r.macro_f1 == doctest::Approx(0.5));
  CHECK(r.confusion[0][0] == 1);
  CHECK(r.confusion[1][0] == 1);
  CHECK(r.confusion[0][1] == 1);
  CHECK_NOTHROW(r.check_invariants());

  const auto perfect = compute_metrics(truth, truth, 3);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.macro_f1 == 1.0);

  // Always predicting class 0 over three balanced classes.
  const std::vector<std::size_t> t3 = {0, 1, 2};
  const std::vector<std::size_t> zeros = {0, 0, 0};
  const auto one = compute_metrics(t3, zeros, 3);
  CHECK(one.accuracy == doctest::Approx(1.0 / 3.0));
  CHECK(one.macro_f1 == doctest::Approx((2.0 / 4.0) / 3.0));

  CHECK_THROWS_AS(compute_metrics(truth, zeros, 3), ValidationError);
  const std::vector<std::size_t> out_of_range = {0, 0, 0, 5};
  CHECK_THROWS_AS(compute_metrics(truth, out_of_range, 3), ValidationError);

  auto broken = r;
  broken.total = 5;
  CHECK_THROWS_AS(broken.check_invariants(), ValidationError);
}

TEST_CASE("mean and sample standard deviation") {
  const std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
  CHECK(mean_of(v) == doctest::Approx(2.5));
  CHECK(std_of(v) == doctest::Approx(std::sqrt(5.0 / 3.0)));
  const std::vector<double> one = {7.0};
  CHECK(std_of(one) == 0.0);
}

TEST_CASE("evaluate rejects empty data and head mismatch") {
  model::PptpModel m(tiny_model(), 1);
  Dataset empty;
  CHECK_THROWS_AS(evaluate(m, empty), ValidationError);
  Dataset seven = cp_dataset(3);
  seven.n_classes = 7;
  CHECK_THROWS_AS(evaluate(m, seven), ValidationError);
  const auto r = evaluate(m, cp_dataset(6));
  CHECK(r.per_subject.size() == 2);
  CHECK(r.total == 6);
}

TEST_CASE("CP-only toy task is learned") {
  const Dataset d = cp_dataset(24);
  const auto r = train(d, nullptr, tiny_model(), cp_only(40));
  CHECK(train_accuracy(r, d) == 1.0);
  CHECK(r.history.back().train_loss < r.history.front().train_loss);
}

TEST_CASE("training is deterministic for a seed") {
  const Dataset d = cp_dataset(12);
  const auto a = train(d, nullptr, tiny_model(), cp_only(3));
  const auto b = train(d, nullptr, tiny_model(), cp_only(3));
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].train_loss == b.history[i].train_loss);
  for (std::size_t p = 0; p < a.model.parameters().size(); ++p) {
    const auto x = a.model.parameters()[p].tensor.data();
    const auto y = b.model.parameters()[p].tensor.data();
    CHECK(std::equal(x.begin(), x.end(), y.begin()));
  }
}

TEST_CASE("diverging training raises TrainingError") {
  TrainConfig c = cp_only(5);
  c.lr = 1e308;
  try {
    train(cp_dataset(12), nullptr, tiny_model(), c);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(e.epoch() >= 0);
  }
}

TEST_CASE("training input validation") {
  CHECK_THROWS_AS(train(Dataset{}, nullptr, tiny_model(), cp_only(1)), ValidationError);
  Dataset single;
  single.samples = {cp_sample(1, 0), cp_sample(1, 1)};
  CHECK_THROWS_AS(train(single, nullptr, tiny_model(), cp_only(1)), ValidationError);
}

TEST_CASE("shuffled labels keep the label multiset and change the fit") {
  const Dataset d = cp_dataset(24);
  TrainConfig c = cp_only(40);
  c.shuffle_labels = true;
  const auto r = train(d, nullptr, tiny_model(), c);
  CHECK(train_accuracy(r, d) < 1.0);
}

TEST_CASE("dataset from a synthetic subject") {
  const auto seed = synth::subject_seed(42, 0);
  auto params = synth::sample_subject(seed);
  params.subject_id = "s0";
  std::vector<Session> sessions = {synth::simulate_task(params, Difficulty::LD, synth::task_seed(seed, Difficulty::LD))};
  TrainConfig c;
  c.frame_stride = 16;
  const Dataset d = build_dataset(sessions, tiny_model(), c);
  REQUIRE(!d.empty());
  for (const auto& s : d.samples) {
    CHECK(s.label < 3);
    CHECK(s.subject == "s0");
    CHECK(s.input.ecg.size() == model::kSignalLength);
  }
  const auto split = split_dataset(d, 0.8, 1);
  CHECK(!split.train.empty());
  CHECK(!split.test.empty());
  CHECK(split.train.size() + split.test.size() + split.dropped == d.size());
}

TEST_CASE("one-way ANOVA against hand values and an F-distribution oracle") {
  const std::vector<std::vector<double>> g = {{1, 2, 3}, {2, 3, 4}, {3, 4, 5}};
  const auto r = one_way_anova(g);
  CHECK(std::abs(r.f_stat - 3.0) < 1e-9);
  CHECK(r.df_between == 2.0);
  CHECK(r.df_within == 6.0);
  const boost::math::fisher_f_distribution<double> dist(2.0, 6.0);
  CHECK(std::abs(r.p_value - boost::math::cdf(boost::math::complement(dist, 3.0))) < 1e-12);

  for (double d1 : {1.0, 3.0, 7.0})
    for (double d2 : {4.0, 12.0, 47.0})
      for (double f : {0.1, 1.0, 2.5, 9.0, 40.0}) {
        const boost::math::fisher_f_distribution<double> ref(d1, d2);
        CHECK(std::abs(f_survival(f, d1, d2) - boost::math::cdf(boost::math::complement(ref, f))) < 1e-10);
      }

  const auto same = one_way_anova({{1, 2, 3}, {1, 2, 3}});
  CHECK(same.f_stat == 0.0);
  CHECK(same.p_value == 1.0);
}

TEST_CASE("ANOVA rejects degenerate input") {
  CHECK_THROWS_AS(one_way_anova({{1, 2, 3}}), ValidationError);
  CHECK_THROWS_AS(one_way_anova({{1, 2}, {3}}), ValidationError);
  CHECK_THROWS_AS(one_way_anova({{1, 1}, {2, 2}}), ValidationError);
  CHECK_THROWS_AS(one_way_anova({{1, std::nan("")}, {2, 3}}), ValidationError);
}
