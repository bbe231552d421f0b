#include "doctest.h"

#include "pptp/errors.hpp"
#include "pptp/session.hpp"
#include "pptp/windowing.hpp"
#include "test_support.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace pptp;
using pptp::testing::make_session;
using pptp::testing::TempDir;

namespace fs = std::filesystem;

TEST_CASE("window lengths") {
  const Session s = make_session(10000);
  CHECK(window_slice(s.channel(ChannelKind::Ecg), 3000, 3000).size() == 375);
  CHECK(window_slice(s.channel(ChannelKind::Gsr), 5000, 3000).size() == 375);
  CHECK(window_slice(s.channel(ChannelKind::EmgLeft), 3000, 216).size() == 272);
  CHECK(window_length(1259.26, 216) == 272);
}

TEST_CASE("window slice ends at the floored sample index") {
  const Session s = make_session(10000);
  const auto w = window_slice(s.channel(ChannelKind::Ecg), 5003, 3000);
  // floor(5003 * 0.125) = 625 (exclusive) -> samples 250..624
  CHECK(w.front() == 250.0);
  CHECK(w.back() == 624.0);
  const auto e = window_slice(s.channel(ChannelKind::EmgLeft), 1000, 216);
  // floor(1000 * 1.26) = 1260 -> samples 988..1259
  CHECK(e.front() == 988.0);
  CHECK(e.back() == 1259.0);
}

TEST_CASE("window slice needs enough history and recording") {
  const Session s = make_session(10000);
  CHECK_THROWS_AS(window_slice(s.channel(ChannelKind::Ecg), 2999, 3000), NotEnoughSamples);
  CHECK_THROWS_AS(window_slice(s.channel(ChannelKind::Ecg), 10100, 3000), NotEnoughSamples);
  CHECK_NOTHROW(window_slice(s.channel(ChannelKind::Ecg), 10000, 3000));
}

TEST_CASE("frame count on a 60 s session matches enumeration") {
  for (std::int64_t t0 : {0LL, 1700000000123LL}) {
    const Session s = make_session(60000, t0);
    // Enumeration oracle: every millisecond end time on the hop grid whose
    // 3 s window fits in the recording.
    std::size_t expected = 0;
    for (std::int64_t ms = 0; ms <= 60000; ++ms) {
      if (ms >= 3000 && (ms - 3000) % 108 == 0) ++expected;
    }
    CHECK(expected == 528);
    const auto ends = frame_end_times(s, {});
    CHECK(ends.size() == expected);
    CHECK(ends.front() == t0 + 3000);
    CHECK(ends[1] == t0 + 3108);
  }
}

TEST_CASE("short session yields no frames") {
  const Session s = make_session(2000);
  CHECK(frame_stream(s).empty());
}

TEST_CASE("frames are end-aligned") {
  const Session s = make_session(20000, 500);
  const WindowingConfig cfg;
  const auto frames = frame_stream(s, cfg);
  REQUIRE(!frames.empty());
  for (const auto& f : frames) {
    CHECK(f.ecg.size() == 375);
    CHECK(f.gsr.size() == 375);
    // Ramp samples encode their own index: last ECG sample is index floor(.)-1.
    const auto ecg_end = static_cast<std::int64_t>(std::floor((f.end_ms - s.t0_ms) * 0.125));
    CHECK(f.ecg.back() == static_cast<double>(ecg_end - 1));

    // Oracle: hop-grid end times in (end - 3000, end] with full EMG history.
    std::vector<std::int64_t> expected;
    for (std::int64_t e = f.end_ms - 2999; e <= f.end_ms; ++e) {
      if ((f.end_ms - e) % 108 != 0) continue;
      if (std::floor((e - s.t0_ms) * 1.26) < 272) continue;
      expected.push_back(e);
    }
    CHECK(f.emg_end_ms == expected);
    CHECK(f.emg_left.size() == expected.size());
    CHECK(f.emg_left.size() >= 26);
    CHECK(f.emg_left.size() <= 28);
    for (std::size_t i = 0; i < f.emg_left.size(); ++i) {
      CHECK(f.emg_left[i].size() == 272);
      CHECK(f.emg_right[i].size() == 272);
      const double last_idx = f.emg_left[i].back();
      const double t_last = s.t0_ms + last_idx * 1000.0 / 1260.0;
      CHECK(t_last <= f.end_ms);
      CHECK(t_last > f.end_ms - 3000);
    }
  }
  CHECK(frames.front().emg_left.size() == 26);  // earliest windows lack history
  CHECK(frames.back().emg_left.size() == 28);
}

TEST_CASE("label mapping") {
  auto l = label_from_muir(4.2);
  CHECK(l.label7 == 4);
  CHECK(l.label3 == Trust3::Medium);
  l = label_from_muir(1.0);
  CHECK(l.label7 == 1);
  CHECK(l.label3 == Trust3::Low);
  l = label_from_muir(4.99);
  CHECK(l.label7 == 5);
  CHECK(l.label3 == Trust3::Medium);
  CHECK(label_from_muir(2.5).label7 == 3);
  CHECK(label_from_muir(5.0).label3 == Trust3::High);
  CHECK(label_from_muir(7.0).label7 == 7);
  CHECK_THROWS_AS(label_from_muir(0.5), ValidationError);
  CHECK_THROWS_AS(label_from_muir(7.01), ValidationError);
  CHECK_THROWS_AS(label_from_muir(std::nan("")), ValidationError);
}

TEST_CASE("label attachment is a step function") {
  LabelTrack track;
  track.entries = {{1, 10000, 3.0, std::nullopt}, {2, 20000, 6.0, std::nullopt}};
  std::vector<AnalysisFrame> frames(4);
  frames[0].end_ms = 15000;
  frames[1].end_ms = 5000;
  frames[2].end_ms = 20000;
  frames[3].end_ms = 19999;
  attach_labels(frames, track);
  CHECK(frames[0].muir_mean == 3.0);
  CHECK(frames[1].muir_mean == 3.0);
  CHECK(frames[1].step_index == 1);
  CHECK(frames[2].muir_mean == 6.0);
  CHECK(frames[2].label3 == Trust3::High);
  CHECK(frames[3].muir_mean == 3.0);
  CHECK_THROWS_AS(attach_labels(frames, LabelTrack{}), ValidationError);
}

TEST_CASE("every frame label is consistent with its mean") {
  const Session s = make_session(40000);
  for (const auto& f : frame_stream(s)) {
    REQUIRE(f.labeled);
    const auto expected = label_from_muir(f.muir_mean);
    CHECK(f.label7 == expected.label7);
    CHECK(f.label3 == expected.label3);
  }
}

TEST_CASE("frame CP vector follows the placements") {
  const Session s = make_session(40000);
  const WindowingConfig cfg;
  const auto f = make_frame(s, 25000, cfg);
  CHECK(f.cp.n_stacked == 2);
  const auto g = make_frame(s, 35000, cfg);
  CHECK(g.cp.n_stacked == 3);
  CHECK(g.cp.f[2] == doctest::Approx(0.2));  // |0.6 - 0.5| * 2 + 0.8 * 0
}

TEST_CASE("save and load round trip") {
  TempDir tmp("session");
  Session s = make_session(5000, 42);
  s.channel(ChannelKind::Ecg).samples[3] = 0.1 + 0.2;  // not exactly representable in short form
  s.channel(ChannelKind::Gsr).samples[7] = -1.234567890123456789e-7;
  save_session(s, tmp.path());
  const Session r = load_session(tmp.path());
  CHECK(r.subject_id == s.subject_id);
  CHECK(r.difficulty == s.difficulty);
  CHECK(r.t0_ms == s.t0_ms);
  for (ChannelKind k : kAllChannels) {
    const auto& a = s.channel(k);
    const auto& b = r.channel(k);
    CHECK(a.sample_rate_hz == b.sample_rate_hz);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(std::abs(a.samples[i] - b.samples[i]) <= 1e-9);
  }
  CHECK(r.placements == s.placements);
  CHECK(r.labels.entries == s.labels.entries);
}

TEST_CASE("load errors") {
  TempDir tmp("session_err");
  const Session s = make_session(5000);

  SUBCASE("missing channel") {
    save_session(s, tmp.path());
    fs::remove(tmp.path() / "gsr.csv");
    try {
      load_session(tmp.path());
      FAIL("expected MissingChannel");
    } catch (const MissingChannel& e) {
      CHECK(std::string(e.what()).find("gsr") != std::string::npos);
    }
  }
  SUBCASE("rate mismatch") {
    save_session(s, tmp.path());
    std::ofstream(tmp.path() / "ecg.csv") << "# rate_hz=250 t0_ms=0\n1\n2\n";
    CHECK_THROWS_AS(load_session(tmp.path()), FormatError);
  }
  SUBCASE("step gap") {
    Session bad = s;
    bad.placements[1].step_index = 3;
    save_session(bad, tmp.path());
    CHECK_THROWS_AS(load_session(tmp.path()), ValidationError);
  }
  SUBCASE("non-monotone timestamps") {
    Session bad = s;
    bad.placements[2].timestamp_ms = 1;
    save_session(bad, tmp.path());
    CHECK_THROWS_AS(load_session(tmp.path()), ValidationError);
  }
  SUBCASE("collapse before the last step") {
    Session bad = s;
    bad.placements[0].collapsed_after = true;
    save_session(bad, tmp.path());
    CHECK_THROWS_AS(load_session(tmp.path()), ValidationError);
  }
  SUBCASE("label out of scale") {
    Session bad = s;
    bad.labels.entries[0].muir_mean = 8.0;
    save_session(bad, tmp.path());
    CHECK_THROWS_AS(load_session(tmp.path()), ValidationError);
  }
}

TEST_CASE("windowing config validation") {
  WindowingConfig cfg;
  CHECK(cfg.max_emg_windows() == 28);
  cfg.hop_ms = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.emg_window_ms = 4000;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
