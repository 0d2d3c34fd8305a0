#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "symmeb/errors.hpp"

namespace symmeb::io {

// Shortest round-trip decimal representation; locale-free.
inline std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + tmp);
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

struct Csv {
  std::vector<std::string> header;  // empty when the file has none
  Eigen::MatrixXd values;
};

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline Csv read_csv(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  Csv csv;
  std::string line;
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto cells = split_line(line);
    if (first && has_header) {
      csv.header = cells;
      width = cells.size();
      first = false;
      continue;
    }
    first = false;
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      try {
        row[c] = std::stod(cells[c]);
      } catch (const std::exception&) {
        throw DataError("non-numeric cell '" + cells[c] + "' in " + path.string());
      }
    }
    if (width == 0) width = row.size();
    if (row.size() != width) throw DataError("ragged csv: " + path.string());
    rows.push_back(std::move(row));
  }
  csv.values.resize(rows.size(), width);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < width; ++c) csv.values(r, c) = rows[r][c];
  return csv;
}

inline std::string csv_string(const Eigen::MatrixXd& m,
                              const std::vector<std::string>& header = {}) {
  std::string out;
  if (!header.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c) out += ',';
      out += header[c];
    }
    out += '\n';
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += fmt(m(r, c));
    }
    out += '\n';
  }
  return out;
}

inline void write_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header = {}) {
  atomic_write(path, csv_string(m, header));
}

// Flat key/value run configuration: a JSON object of scalars, plus
// command-line overrides of the form key=value. Commands declare their
// allowed keys; anything else is rejected.
class Config {
 public:
  Config() : doc_(nlohmann::json::object()) {}
  explicit Config(nlohmann::json doc) : doc_(std::move(doc)) {
    if (!doc_.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [k, v] : doc_.items()) {
      if (v.is_object() || v.is_array())
        throw ConfigError("config key '" + k + "' must be a scalar (flat document)");
    }
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
    return Config(std::move(j));
  }

  void set_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    nlohmann::json parsed = nlohmann::json::parse(val, nullptr, false);
    if (parsed.is_discarded() || parsed.is_object() || parsed.is_array())
      parsed = val;  // plain string
    doc_[key] = parsed;
  }

  bool has(const std::string& key) const { return doc_.contains(key); }

  std::string get_string(const std::string& key) const {
    require(key);
    return as_string(doc_.at(key));
  }
  std::string get_string(const std::string& key, const std::string& dflt) const {
    return has(key) ? as_string(doc_.at(key)) : dflt;
  }
  double get_double(const std::string& key) const {
    require(key);
    return as_double(key, doc_.at(key));
  }
  double get_double(const std::string& key, double dflt) const {
    return has(key) ? as_double(key, doc_.at(key)) : dflt;
  }
  long get_int(const std::string& key) const {
    require(key);
    return as_int(key, doc_.at(key));
  }
  long get_int(const std::string& key, long dflt) const {
    return has(key) ? as_int(key, doc_.at(key)) : dflt;
  }
  bool get_bool(const std::string& key, bool dflt) const {
    if (!has(key)) return dflt;
    const auto& v = doc_.at(key);
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_number()) return v.get<double>() != 0.0;
    const std::string s = v.get<std::string>();
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("config key '" + key + "' is not a boolean");
  }

  // Comma-separated list values.
  std::vector<std::string> get_list(const std::string& key) const {
    require(key);
    std::vector<std::string> out;
    for (auto& cell : split_line(as_string(doc_.at(key)))) out.push_back(cell);
    return out;
  }
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& dflt) const {
    return has(key) ? get_list(key) : dflt;
  }

  void check_keys(const std::set<std::string>& required,
                  const std::set<std::string>& optional) const {
    for (const auto& k : required)
      if (!doc_.contains(k)) throw ConfigError("missing required config key '" + k + "'");
    for (const auto& [k, v] : doc_.items())
      if (!required.count(k) && !optional.count(k))
        throw ConfigError("unknown config key '" + k + "'");
  }

  const nlohmann::json& json() const { return doc_; }

 private:
  void require(const std::string& key) const {
    if (!doc_.contains(key)) throw ConfigError("missing required config key '" + key + "'");
  }
  static std::string as_string(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
  }
  static double as_double(const std::string& key, const nlohmann::json& v) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      try {
        return std::stod(v.get<std::string>());
      } catch (const std::exception&) {
      }
    }
    throw ConfigError("config key '" + key + "' is not numeric");
  }
  static long as_int(const std::string& key, const nlohmann::json& v) {
    const double d = as_double(key, v);
    const long i = static_cast<long>(d);
    if (static_cast<double>(i) != d) throw ConfigError("config key '" + key + "' is not integer");
    return i;
  }

  nlohmann::json doc_;
};

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  atomic_write(path, j.dump(2) + "\n");
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("invalid JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

}  // namespace symmeb::io
