#pragma once

// Persistence: RFC-4180 CSV tables (CRLF rows, mandatory header, 17
// significant digits for floats), JSON parameter files, training data
// loading, and the FNV-1a hash used to fingerprint configs.

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "deeplimit/continuum.hpp"
#include "deeplimit/model.hpp"
#include "deeplimit/optimize.hpp"
#include "deeplimit/spaces.hpp"

namespace deeplimit {

using Json = nlohmann::json;

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
    if (header_.empty()) throw std::invalid_argument("csv: empty header");
  }

  void addRow(std::vector<std::string> cells) {
    if (cells.size() != header_.size())
      throw std::invalid_argument("csv: row width does not match header");
    rows_.push_back(std::move(cells));
  }

  std::string serialize() const {
    std::string out;
    auto emit = [&out](const std::vector<std::string>& cells) {
      for (size_t k = 0; k < cells.size(); ++k) {
        if (k) out += ',';
        out += csv_field(cells[k]);
      }
      out += "\r\n";
    };
    emit(header_);
    for (const auto& row : rows_) emit(row);
    return out;
  }

  int rowCount() const { return static_cast<int>(rows_.size()); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_text_file(const std::string& path, const std::string& content) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Training data CSV: header x0..x{d-1},y0..y{m-1}; numeric cells only.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("bad numeric cell '" + s + "' in " + where);
  }
}

}  // namespace detail

inline TrainingSet parse_training_csv(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty data file: " + name);
  const auto header = detail::split_csv_line(line);
  int d = 0, m = 0;
  for (const auto& col : header) {
    if (col.rfind('x', 0) == 0 && m == 0) ++d;
    else if (col.rfind('y', 0) == 0) ++m;
    else throw std::runtime_error("data header must list x columns then y columns, got '" +
                                  col + "' in " + name);
  }
  if (d == 0 || m == 0)
    throw std::runtime_error("data header needs x and y columns: " + name);

  TrainingSet data;
  int lineNo = 1;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (static_cast<int>(cells.size()) != d + m)
      throw std::runtime_error("row " + std::to_string(lineNo) + " of " + name + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(d + m));
    Vector x(d), y(m);
    const std::string where = name + ":" + std::to_string(lineNo);
    for (int k = 0; k < d; ++k) x(k) = detail::parse_double(cells[k], where);
    for (int k = 0; k < m; ++k) y(k) = detail::parse_double(cells[d + k], where);
    data.add(x, y);
  }
  if (data.size() == 0) throw std::runtime_error("no data rows in " + name);
  return data;
}

inline TrainingSet load_training_csv(const std::string& path) {
  return parse_training_csv(read_text_file(path), path);
}

// ---------------------------------------------------------------------------
// Tabular exports

inline CsvTable trajectory_table(const ContinuumTrajectory& tr) {
  const int d = static_cast<int>(tr.states.front().size());
  std::vector<std::string> header{"t"};
  for (int k = 0; k < d; ++k) header.push_back("x" + std::to_string(k));
  CsvTable table(header);
  for (int j = 0; j <= tr.steps(); ++j) {
    std::vector<std::string> row{format_double(tr.time(j))};
    for (int k = 0; k < d; ++k) row.push_back(format_double(tr.states[j](k)));
    table.addRow(row);
  }
  return table;
}

inline CsvTable trace_table(const OptimizeResult& res) {
  CsvTable table({"iter", "objective", "gradNorm", "step"});
  for (size_t k = 0; k < res.objectiveHistory.size(); ++k) {
    table.addRow({std::to_string(k), format_double(res.objectiveHistory[k]),
                  format_double(res.gradNormHistory[k]),
                  k < res.stepHistory.size() ? format_double(res.stepHistory[k]) : ""});
  }
  return table;
}

// ---------------------------------------------------------------------------
// Parameter JSON: row-major blocks, explicit shape tags.

namespace detail {

inline Json matrix_to_json(const Matrix& M) {
  Json rows = Json::array();
  for (int r = 0; r < M.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw std::runtime_error("params: " + where + " must be an array of rows");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Matrix M(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[r].size()) != cols)
      throw std::runtime_error("params: ragged rows in " + where);
    for (int c = 0; c < cols; ++c) M(r, c) = j[r][c].get<double>();
  }
  return M;
}

template <class Params>
Json params_to_json_impl(const Params& p, const char* flavor, int blocks) {
  Json out;
  out["flavor"] = flavor;
  out["blocks"] = blocks;
  out["d"] = p.d();
  out["m"] = p.m();
  Json K = Json::array(), b = Json::array();
  for (int i = 0; i < blocks; ++i) {
    K.push_back(matrix_to_json(p.K.values[i]));
    b.push_back(matrix_to_json(p.b.values[i]));
  }
  out["K"] = std::move(K);
  out["b"] = std::move(b);
  out["W"] = matrix_to_json(p.W);
  Json c = Json::array();
  for (int r = 0; r < p.c.size(); ++r) c.push_back(p.c(r));
  out["c"] = std::move(c);
  return out;
}

}  // namespace detail

inline Json params_to_json(const DiscreteParams& p) {
  return detail::params_to_json_impl(p, "discrete", p.n());
}

inline Json params_to_json(const ContinuumParams& p) {
  return detail::params_to_json_impl(p, "continuum", p.nodeCount());
}

inline DiscreteParams discrete_params_from_json(const Json& j) {
  if (j.value("flavor", "") != std::string("discrete"))
    throw std::runtime_error("params: expected flavor 'discrete'");
  const int blocks = j.at("blocks").get<int>();
  const int d = j.at("d").get<int>();
  const int m = j.at("m").get<int>();
  DiscreteParams p = DiscreteParams::zeros(blocks, d, m);
  for (int i = 0; i < blocks; ++i) {
    p.K.values[i] = detail::matrix_from_json(j.at("K").at(i), "K");
    p.b.values[i] = detail::matrix_from_json(j.at("b").at(i), "b");
  }
  p.W = detail::matrix_from_json(j.at("W"), "W");
  const auto& c = j.at("c");
  for (int r = 0; r < m; ++r) p.c(r) = c.at(r).get<double>();
  p.validate();
  return p;
}

inline ContinuumParams continuum_params_from_json(const Json& j) {
  if (j.value("flavor", "") != std::string("continuum"))
    throw std::runtime_error("params: expected flavor 'continuum'");
  const int blocks = j.at("blocks").get<int>();
  const int d = j.at("d").get<int>();
  const int m = j.at("m").get<int>();
  ContinuumParams p = ContinuumParams::zeros(blocks, d, m);
  for (int i = 0; i < blocks; ++i) {
    p.K.values[i] = detail::matrix_from_json(j.at("K").at(i), "K");
    p.b.values[i] = detail::matrix_from_json(j.at("b").at(i), "b");
  }
  p.W = detail::matrix_from_json(j.at("W"), "W");
  const auto& c = j.at("c");
  for (int r = 0; r < m; ++r) p.c(r) = c.at(r).get<double>();
  p.validate();
  return p;
}

}  // namespace deeplimit
