#include "pptp/session.hpp"

#include "pptp/errors.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace pptp {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view channel_name(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::Ecg:
      return "ecg";
    case ChannelKind::Gsr:
      return "gsr";
    case ChannelKind::EmgLeft:
      return "emg_left";
    case ChannelKind::EmgRight:
      return "emg_right";
  }
  return "?";
}

std::string_view difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::LD:
      return "LD";
    case Difficulty::MD:
      return "MD";
    case Difficulty::HD:
      return "HD";
  }
  return "?";
}

Difficulty parse_difficulty(std::string_view s) {
  if (s == "LD") return Difficulty::LD;
  if (s == "MD") return Difficulty::MD;
  if (s == "HD") return Difficulty::HD;
  throw FormatError("unknown difficulty '" + std::string(s) + "'");
}

// ---- validation ------------------------------------------------------------

void validate_placements(const std::vector<BlockPlacement>& placements) {
  if (placements.size() > 10) {
    throw ValidationError("at most 10 placements per task, got " + std::to_string(placements.size()));
  }
  for (std::size_t i = 0; i < placements.size(); ++i) {
    const auto& p = placements[i];
    const std::string where = "placement " + std::to_string(i + 1) + ": ";
    if (p.step_index != static_cast<int>(i) + 1) {
      throw ValidationError(where + "step_index " + std::to_string(p.step_index) + ", expected " +
                            std::to_string(i + 1));
    }
    if (p.layer < 1) throw ValidationError(where + "layer must be >= 1");
    if (p.support_centers.size() > 2) throw ValidationError(where + "more than two supports");
    if (p.layer > 1 && p.support_centers.empty()) {
      throw ValidationError(where + "layer > 1 without supports");
    }
    if (i > 0 && p.timestamp_ms < placements[i - 1].timestamp_ms) {
      throw ValidationError(where + "timestamp goes backwards");
    }
    if (p.collapsed_after && i + 1 != placements.size()) {
      throw ValidationError(where + "only the last placement may collapse");
    }
  }
}

void validate_labels(const LabelTrack& track, const std::vector<BlockPlacement>& placements) {
  if (track.entries.size() != placements.size()) {
    throw ValidationError("expected one label entry per placement (" +
                          std::to_string(placements.size()) + "), got " +
                          std::to_string(track.entries.size()));
  }
  for (std::size_t i = 0; i < track.entries.size(); ++i) {
    const auto& e = track.entries[i];
    const std::string where = "label " + std::to_string(i + 1) + ": ";
    if (e.step_index != placements[i].step_index) throw ValidationError(where + "step_index mismatch");
    if (i > 0 && e.timestamp_ms < track.entries[i - 1].timestamp_ms) {
      throw ValidationError(where + "timestamp goes backwards");
    }
    if (!(e.muir_mean >= 1.0 && e.muir_mean <= 7.0)) {
      throw ValidationError(where + "muir_mean outside [1,7]");
    }
  }
}

void validate_session(const Session& s) {
  for (ChannelKind k : kAllChannels) {
    const auto& c = s.channel(k);
    if (c.kind != k) throw ValidationError("channel slot holds the wrong kind");
    if (!(c.sample_rate_hz > 0.0)) {
      throw ValidationError(std::string(channel_name(k)) + ": sample rate must be positive");
    }
    if (c.samples.empty()) throw ValidationError(std::string(channel_name(k)) + ": no samples");
  }
  validate_placements(s.placements);
  validate_labels(s.labels, s.placements);
}

// ---- text I/O ----------------------------------------------------------------

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct CsvChannel {
  double rate_hz = 0.0;
  std::int64_t t0_ms = 0;
  std::vector<double> samples;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view s, const fs::path& file) {
  T v{};
  s = trim(s);
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(file.string() + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

CsvChannel read_channel_csv(const fs::path& file) {
  const std::string text = read_file(file);
  CsvChannel out;
  std::string_view rest(text);
  bool header_seen = false;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    std::string_view line = trim(rest.substr(0, nl));
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (header_seen) continue;
      header_seen = true;
      std::istringstream hs{std::string(line.substr(1))};
      std::string tok;
      bool have_rate = false, have_t0 = false;
      while (hs >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq);
        const std::string_view val = std::string_view(tok).substr(eq + 1);
        if (key == "rate_hz") {
          out.rate_hz = parse_number<double>(val, file);
          have_rate = true;
        } else if (key == "t0_ms") {
          out.t0_ms = parse_number<std::int64_t>(val, file);
          have_t0 = true;
        }
      }
      if (!have_rate || !have_t0) throw FormatError(file.string() + ": header needs rate_hz and t0_ms");
      continue;
    }
    if (!header_seen) throw FormatError(file.string() + ": missing '# rate_hz=... t0_ms=...' header");
    out.samples.push_back(parse_number<double>(line, file));
  }
  if (!header_seen) throw FormatError(file.string() + ": empty channel file");
  return out;
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw SessionWriteError("cannot write " + file.string());
  out << text;
  if (!out) throw SessionWriteError("write failed for " + file.string());
}

std::vector<json> read_jsonl(const fs::path& file) {
  const std::string text = read_file(file);
  std::vector<json> rows;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

BlockPlacement placement_from_json(const json& j) {
  BlockPlacement p;
  p.step_index = j.at("step_index").get<int>();
  p.layer = j.at("layer").get<int>();
  p.x_center = j.at("x_center").get<double>();
  p.support_centers = j.value("support_centers", std::vector<double>{});
  p.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
  p.collapsed_after = j.value("collapsed_after", false);
  return p;
}

json placement_to_json(const BlockPlacement& p) {
  return json{{"step_index", p.step_index},       {"layer", p.layer},
              {"x_center", p.x_center},           {"support_centers", p.support_centers},
              {"timestamp_ms", p.timestamp_ms},   {"collapsed_after", p.collapsed_after}};
}

LabelEntry label_from_json(const json& j) {
  LabelEntry e;
  e.step_index = j.at("step_index").get<int>();
  e.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
  e.muir_mean = j.at("muir_mean").get<double>();
  if (j.contains("nasa_tlx_mean") && !j["nasa_tlx_mean"].is_null()) {
    e.nasa_tlx_mean = j["nasa_tlx_mean"].get<double>();
  }
  return e;
}

json label_to_json(const LabelEntry& e) {
  json j{{"step_index", e.step_index}, {"timestamp_ms", e.timestamp_ms}, {"muir_mean", e.muir_mean}};
  j["nasa_tlx_mean"] = e.nasa_tlx_mean ? json(*e.nasa_tlx_mean) : json(nullptr);
  return j;
}

}  // namespace

Session load_session(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  if (!fs::exists(meta_path)) throw FormatError("missing " + meta_path.string());
  json meta;
  try {
    meta = json::parse(read_file(meta_path));
  } catch (const json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }

  Session s;
  try {
    s.subject_id = meta.at("subject_id").get<std::string>();
    s.difficulty = parse_difficulty(meta.at("difficulty").get<std::string>());
    s.t0_ms = meta.at("t0_ms").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }
  const json rates = meta.value("rates", json::object());

  for (ChannelKind k : kAllChannels) {
    const std::string name(channel_name(k));
    const fs::path file = dir / (name + ".csv");
    if (!fs::exists(file)) throw MissingChannel("missing channel " + name + " (" + file.string() + ")");
    CsvChannel csv = read_channel_csv(file);
    if (!rates.contains(name)) throw FormatError(meta_path.string() + ": no rate for " + name);
    const double meta_rate = rates.at(name).get<double>();
    if (std::abs(meta_rate - csv.rate_hz) > 1e-9 * std::max(1.0, meta_rate)) {
      throw FormatError(name + ": rate " + format_double(csv.rate_hz) + " Hz disagrees with meta " +
                        format_double(meta_rate) + " Hz");
    }
    if (csv.t0_ms != s.t0_ms) throw FormatError(name + ": t0_ms disagrees with meta");
    auto& ch = s.channel(k);
    ch.kind = k;
    ch.sample_rate_hz = csv.rate_hz;
    ch.t0_ms = csv.t0_ms;
    ch.samples = std::move(csv.samples);
  }

  const fs::path placements_path = dir / "placements.jsonl";
  const fs::path labels_path = dir / "labels.jsonl";
  if (!fs::exists(placements_path)) throw FormatError("missing " + placements_path.string());
  if (!fs::exists(labels_path)) throw FormatError("missing " + labels_path.string());
  try {
    for (const auto& row : read_jsonl(placements_path)) s.placements.push_back(placement_from_json(row));
    for (const auto& row : read_jsonl(labels_path)) s.labels.entries.push_back(label_from_json(row));
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad placement/label record: ") + e.what());
  }

  validate_session(s);
  return s;
}

void save_session(const Session& s, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw SessionWriteError("cannot create " + dir.string() + ": " + ec.message());

  json rates = json::object();
  for (ChannelKind k : kAllChannels) rates[std::string(channel_name(k))] = s.channel(k).sample_rate_hz;
  const json meta{{"subject_id", s.subject_id},
                  {"difficulty", std::string(difficulty_name(s.difficulty))},
                  {"t0_ms", s.t0_ms},
                  {"rates", rates}};
  write_text(dir / "meta.json", meta.dump(2) + "\n");

  for (ChannelKind k : kAllChannels) {
    const auto& c = s.channel(k);
    std::string text = "# rate_hz=" + format_double(c.sample_rate_hz) + " t0_ms=" + std::to_string(c.t0_ms) + "\n";
    text.reserve(text.size() + c.samples.size() * 24);
    char buf[64];
    for (double v : c.samples) {
      auto res = std::to_chars(buf, buf + sizeof(buf), v);
      text.append(buf, res.ptr);
      text.push_back('\n');
    }
    write_text(dir / (std::string(channel_name(k)) + ".csv"), text);
  }

  std::string placements;
  for (const auto& p : s.placements) placements += placement_to_json(p).dump() + "\n";
  write_text(dir / "placements.jsonl", placements);

  std::string labels;
  for (const auto& e : s.labels.entries) labels += label_to_json(e).dump() + "\n";
  write_text(dir / "labels.jsonl", labels);
}

}  // namespace pptp
