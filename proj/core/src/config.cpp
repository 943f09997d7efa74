// SPDX-License-Identifier: Apache-2.0
#include "tcmgc/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "tcmgc/error.hpp"

namespace tcmgc {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  const char* key;
  // Parses and stores the value; returns an error message or an empty string.
  std::function<std::string(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

bool parse_unsigned(const std::string& text, std::uint64_t& out) {
  if (text.empty() || text[0] == '-' || text[0] == '+') return false;
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
  if (errno != 0 || end != text.c_str() + text.size()) return false;
  out = v;
  return true;
}

bool parse_real(const std::string& text, double& out) {
  if (text.empty()) return false;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (errno != 0 || end != text.c_str() + text.size()) return false;
  out = v;
  return true;
}

Field size_field(const char* key, std::size_t RunConfig::*member, std::size_t lo, std::size_t hi) {
  return {key,
          [=](RunConfig& c, const std::string& text) -> std::string {
            std::uint64_t v = 0;
            if (!parse_unsigned(text, v)) return "expected a non-negative integer, got '" + text + "'";
            if (v < lo || v > hi) {
              return "value " + text + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]";
            }
            c.*member = static_cast<std::size_t>(v);
            return {};
          },
          [=](const RunConfig& c) { return std::to_string(c.*member); }};
}

// Real in the interval (lo, hi] or [lo, hi] depending on `open_lo`.
Field real_field(const char* key, double RunConfig::*member, double lo, bool open_lo, double hi) {
  return {key,
          [=](RunConfig& c, const std::string& text) -> std::string {
            double v = 0;
            if (!parse_real(text, v)) return "expected a number, got '" + text + "'";
            const bool low_ok = open_lo ? v > lo : v >= lo;
            if (!low_ok || !(v <= hi)) {
              std::string bounds = (open_lo ? "(" : "[") + format_double(lo) + ", ";
              bounds += std::isinf(hi) ? std::string("inf)") : format_double(hi) + "]";
              return "value " + text + " outside " + bounds;
            }
            c.*member = v;
            return {};
          },
          [=](const RunConfig& c) { return format_double(c.*member); }};
}

template <typename Enum>
Field enum_field(const char* key, Enum RunConfig::*member, Enum (*parse)(const std::string&),
                 const char* (*show)(Enum)) {
  return {key,
          [=](RunConfig& c, const std::string& text) -> std::string {
            try {
              c.*member = parse(text);
            } catch (const ConfigError& e) {
              return e.what();
            }
            return {};
          },
          [=](const RunConfig& c) { return std::string(show(c.*member)); }};
}

const std::vector<Field>& fields() {
  constexpr std::size_t kBig = 1u << 24;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  static const std::vector<Field> table = {
      size_field("d", &RunConfig::d, 1, kBig),
      size_field("d_p", &RunConfig::d_p, 0, kBig),
      size_field("m_max", &RunConfig::m_max, 1, kBig),
      size_field("n_max", &RunConfig::n_max, 1, kBig),
      real_field("keep_rate", &RunConfig::keep_rate, 0.0, true, 1.0),
      real_field("alpha", &RunConfig::alpha, 0.0, false, kInf),
      real_field("lambda", &RunConfig::lambda, 0.0, true, kInf),
      {"normalize",
       [](RunConfig& c, const std::string& text) -> std::string {
         if (text == "true" || text == "1") {
           c.normalize = true;
         } else if (text == "false" || text == "0") {
           c.normalize = false;
         } else {
           return "expected true or false, got '" + text + "'";
         }
         return {};
       },
       [](const RunConfig& c) { return std::string(c.normalize ? "true" : "false"); }},
      size_field("temporal_layers", &RunConfig::temporal_layers, 0, 64),
      size_field("temporal_heads", &RunConfig::temporal_heads, 1, kBig),
      size_field("lva_heads", &RunConfig::lva_heads, 1, kBig),
      real_field("lr", &RunConfig::lr, 0.0, true, kInf),
      size_field("batch", &RunConfig::batch, 0, kBig),
      size_field("epochs", &RunConfig::epochs, 1, kBig),
      size_field("steps", &RunConfig::steps, 0, kBig),
      {"seed",
       [](RunConfig& c, const std::string& text) -> std::string {
         std::uint64_t v = 0;
         if (!parse_unsigned(text, v)) return "expected a non-negative integer, got '" + text + "'";
         c.seed = v;
         return {};
       },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      size_field("chunk_size", &RunConfig::chunk_size, 0, kBig),
      size_field("workers", &RunConfig::workers, 1, 256),
      enum_field("sdr_data", &RunConfig::sdr_data, parse_sdr_data, to_string),
      enum_field("reorg_video_word", &RunConfig::reorg_video_word, parse_reorg_mode, to_string),
      enum_field("reorg_sentence_frame", &RunConfig::reorg_sentence_frame, parse_reorg_mode, to_string),
      enum_field("reorg_frame_word_words", &RunConfig::reorg_frame_word_words, parse_reorg_mode, to_string),
      enum_field("reorg_frame_word_frames", &RunConfig::reorg_frame_word_frames, parse_reorg_mode, to_string),
      enum_field("aggregation", &RunConfig::aggregation, parse_aggregation, to_string),
      {"freeze",
       [](RunConfig& c, const std::string& text) -> std::string {
         c.freeze.clear();
         std::stringstream in(text);
         std::string item;
         while (std::getline(in, item, ',')) {
           item = trim(item);
           if (!item.empty()) c.freeze.push_back(item);
         }
         return {};
       },
       [](const RunConfig& c) {
         std::string out;
         for (const auto& p : c.freeze) out += (out.empty() ? "" : ",") + p;
         return out;
       }},
  };
  return table;
}

}  // namespace

ReorgConfig RunConfig::reorg() const {
  return {keep_rate, reorg_video_word, reorg_sentence_frame, reorg_frame_word_words, reorg_frame_word_frames};
}

LossConfig RunConfig::loss() const { return {lambda, alpha, sdr_data}; }

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!config.explicit_keys.insert(key).second) throw ConfigError(where + "key '" + key + "' given twice");
    const std::string error = it->set(config, value);
    if (!error.empty()) throw ConfigError(where + key + ": " + error);
  }
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path);
}

void validate(const RunConfig& c) {
  if (c.d % c.temporal_heads != 0) {
    throw ConfigError("temporal_heads = " + std::to_string(c.temporal_heads) + " must divide d = " +
                      std::to_string(c.d));
  }
  if (c.projection_dim() % c.lva_heads != 0) {
    throw ConfigError("lva_heads = " + std::to_string(c.lva_heads) + " must divide d_p = " +
                      std::to_string(c.projection_dim()));
  }
  const std::size_t k = keep_count(c.m_max, c.keep_rate);
  const ReorgMode modes[] = {c.reorg_video_word, c.reorg_sentence_frame, c.reorg_frame_word_words,
                             c.reorg_frame_word_frames};
  for (auto mode : modes) {
    if (mode == ReorgMode::kFusion && k >= c.m_max) {
      throw ConfigError("fusion keeps k = " + std::to_string(k) + " of m_max = " + std::to_string(c.m_max) +
                        " similarities, leaving nothing to fuse");
    }
  }
}

}  // namespace tcmgc
