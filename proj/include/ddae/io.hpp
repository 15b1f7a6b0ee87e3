#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "ddae/optimize.hpp"
#include "ddae/stability.hpp"

// System definition files are JSON documents with keys
//   "plant"      - IoSystem fields n, E/hE, A/hA, B1/hB1, C1/hC1, D11/hD11
//   "controller" - same layout (optional)
//   "system"     - a bare DDAE: E, A, hA (optional, instead of plant)
//   "structure"  - controller structure for synthesis: fixed_mask, fixed_values
//   "report"     - strong stability record (written by synthesis)
// Matrices are row-major arrays of rows. See data/system.schema.json.

namespace ddae::io {

using nlohmann::json;

/// Malformed system file. line/column are 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")" : what),
        line_(line),
        column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_, column_;
};

struct SystemFile {
  std::optional<PlantIo> plant;
  std::optional<ControllerIo> controller;
  std::optional<DdaeSystem> system;
  std::optional<Matrix> fixed_mask;
  std::optional<Matrix> fixed_values;

  /// The system to analyze: the closed loop when a controller is present,
  /// the bare system when given, the open-loop plant dynamics otherwise.
  DdaeSystem analysis_system() const {
    if (system) return *system;
    if (!plant) throw ParseError("file defines neither \"plant\" nor \"system\"");
    if (controller) return interconnect(*plant, *controller);
    return plant_dynamics(*plant);
  }
};

inline Matrix matrix_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": matrix must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Matrix(0, 0);
  if (!j[0].is_array()) throw ParseError(where + ": matrix must be an array of rows");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParseError(where + ": ragged matrix rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw ParseError(where + ": matrix entries must be numbers");
      m(r, c) = v.get<double>();
    }
  }
  return m;
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace detail {

inline bool is_single_matrix(const json& j) {
  return j.is_array() && !j.empty() && j[0].is_array() && (j[0].empty() || j[0][0].is_number());
}

inline TermList terms_from_json(const json& obj, const std::string& key, const std::string& delay_key,
                                const std::string& where) {
  TermList t;
  if (!obj.contains(key)) return t;
  const json& mats = obj.at(key);
  if (is_single_matrix(mats)) {
    t.matrices.push_back(matrix_from_json(mats, where + "." + key));
  } else {
    if (!mats.is_array()) throw ParseError(where + "." + key + ": expected a list of matrices");
    for (std::size_t i = 0; i < mats.size(); ++i) {
      t.matrices.push_back(matrix_from_json(mats[i], where + "." + key + "[" + std::to_string(i) + "]"));
    }
  }
  if (obj.contains(delay_key)) {
    const json& d = obj.at(delay_key);
    if (d.is_number()) {
      t.delays.push_back(d.get<double>());
    } else if (d.is_array()) {
      for (const auto& v : d) {
        if (!v.is_number()) throw ParseError(where + "." + delay_key + ": delays must be numbers");
        t.delays.push_back(v.get<double>());
      }
    } else {
      throw ParseError(where + "." + delay_key + ": delays must be a number or an array");
    }
  } else {
    t.delays.assign(t.matrices.size(), 0.0);
  }
  if (t.delays.size() != t.matrices.size()) {
    throw ParseError(where + ": " + key + " has " + std::to_string(t.matrices.size()) + " matrices but " +
                     delay_key + " has " + std::to_string(t.delays.size()) + " delays");
  }
  return t;
}

inline json terms_to_json(const TermList& t) {
  json m = json::array();
  for (const auto& x : t.matrices) m.push_back(matrix_to_json(x));
  return m;
}

inline json number_or_string(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

inline double number_from(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ParseError("expected a number");
}

inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace detail

inline IoSystem io_system_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  if (!j.contains("n") || !j.at("n").is_number_integer()) throw ParseError(where + ": missing integer field \"n\"");
  const auto n = j.at("n").get<Eigen::Index>();
  if (n < 0) throw ParseError(where + ": \"n\" must be nonnegative");

  const TermList E = detail::terms_from_json(j, "E", "hE", where);
  Matrix e = Matrix::Identity(n, n);
  if (!E.empty()) {
    e.setZero(n, n);
    for (std::size_t i = 0; i < E.size(); ++i) {
      if (E.delays[i] != 0.0) throw ParseError(where + ": delayed E terms are not supported");
      if (E.matrices[i].rows() != n || E.matrices[i].cols() != n) throw ParseError(where + ": E must be n x n");
      e += E.matrices[i];
    }
  }
  IoSystem s;
  s.n_state = n;
  s.E = e;
  s.A = detail::terms_from_json(j, "A", "hA", where);
  s.B1 = detail::terms_from_json(j, "B1", "hB1", where);
  s.C1 = detail::terms_from_json(j, "C1", "hC1", where);
  s.D11 = detail::terms_from_json(j, "D11", "hD11", where);
  if (!s.B1.empty()) s.n_in = s.B1.matrices[0].cols();
  else if (!s.D11.empty()) s.n_in = s.D11.matrices[0].cols();
  if (!s.C1.empty()) s.n_out = s.C1.matrices[0].rows();
  else if (!s.D11.empty()) s.n_out = s.D11.matrices[0].rows();
  if (j.contains("n_u")) s.n_in = j.at("n_u").get<Eigen::Index>();
  if (j.contains("n_y")) s.n_out = j.at("n_y").get<Eigen::Index>();
  // Drop empty placeholder matrices (e.g. "A": [[]] for a static controller).
  for (TermList* t : {&s.A, &s.B1, &s.C1, &s.D11}) {
    TermList kept;
    for (std::size_t i = 0; i < t->size(); ++i) {
      if (t->matrices[i].size() == 0) continue;
      kept.matrices.push_back(t->matrices[i]);
      kept.delays.push_back(t->delays[i]);
    }
    *t = std::move(kept);
  }
  try {
    validate(s);
  } catch (const Error& e) {
    throw ParseError(where + ": " + e.what());
  }
  return s;
}

inline json io_system_to_json(const IoSystem& s) {
  json j;
  j["n"] = s.n_state;
  if (s.n_state > 0) {
    j["E"] = json::array({matrix_to_json(s.E)});
    j["hE"] = json::array({0.0});
  }
  auto put = [&](const char* key, const char* hkey, const TermList& t) {
    if (t.empty()) return;
    j[key] = detail::terms_to_json(t);
    j[hkey] = t.delays;
  };
  put("A", "hA", s.A);
  put("B1", "hB1", s.B1);
  put("C1", "hC1", s.C1);
  put("D11", "hD11", s.D11);
  if (s.B1.empty() && s.D11.empty()) j["n_u"] = s.n_in;
  if (s.C1.empty() && s.D11.empty()) j["n_y"] = s.n_out;
  return j;
}

inline SystemFile parse_system(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = detail::line_column(text, e.byte);
    throw ParseError(std::string("syntax error: ") + e.what(), line, col);
  }
  if (!doc.is_object()) throw ParseError("top level must be an object", 1, 1);
  SystemFile f;
  try {
    if (doc.contains("plant")) f.plant = io_system_from_json(doc.at("plant"), "plant");
    if (doc.contains("controller")) f.controller = io_system_from_json(doc.at("controller"), "controller");
    if (doc.contains("system")) {
      const json& s = doc.at("system");
      const Matrix E = matrix_from_json(s.at("E"), "system.E");
      const TermList A = detail::terms_from_json(s, "A", "hA", "system");
      std::vector<DelayTerm> terms;
      for (std::size_t i = 0; i < A.size(); ++i) terms.push_back({A.matrices[i], A.delays[i]});
      f.system = DdaeSystem(E, std::move(terms));
    }
    if (doc.contains("structure")) {
      const json& s = doc.at("structure");
      if (s.contains("fixed_mask")) f.fixed_mask = matrix_from_json(s.at("fixed_mask"), "structure.fixed_mask");
      if (s.contains("fixed_values")) f.fixed_values = matrix_from_json(s.at("fixed_values"), "structure.fixed_values");
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid document: ") + e.what());
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(e.what());
  }
  if (!f.plant && !f.system) throw ParseError("file defines neither \"plant\" nor \"system\"");
  return f;
}

inline SystemFile read_system_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_system(ss.str());
}

inline json report_to_json(const StrongStabilityReport& r) {
  return json{{"c", detail::number_or_string(r.c)},
              {"C_D", detail::number_or_string(r.C_D)},
              {"C", detail::number_or_string(r.C)},
              {"gamma0", detail::number_or_string(r.gamma0)},
              {"strongly_stable", r.strongly_stable},
              {"Xi", r.Xi}};
}

inline StrongStabilityReport report_from_json(const json& j) {
  StrongStabilityReport r;
  r.c = detail::number_from(j.at("c"));
  r.C_D = detail::number_from(j.at("C_D"));
  r.C = detail::number_from(j.at("C"));
  r.gamma0 = detail::number_from(j.at("gamma0"));
  r.strongly_stable = j.at("strongly_stable").get<bool>();
  r.Xi = j.at("Xi").get<int>();
  return r;
}

/// Synthesis output: plant, controller and report in one self-contained file.
inline json synthesis_to_json(const PlantIo& plant, const SynthesisResult& res) {
  return json{{"plant", io_system_to_json(plant)},
              {"controller", io_system_to_json(res.controller)},
              {"report", report_to_json(res.report)}};
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v == 0.0 ? 0.0 : v);
  return buf;
}

/// CSV with header re,im,residual,corrected. Corrected roots first; raw
/// discretization approximations (corrected = 0, residual NaN) on request.
inline void write_roots_csv(std::ostream& os, const RootSet& rs, bool with_raw = false) {
  os << "re,im,residual,corrected\n";
  for (std::size_t i = 0; i < rs.corrected.size(); ++i) {
    os << format_double(rs.corrected[i].real()) << ',' << format_double(rs.corrected[i].imag()) << ','
       << format_double(rs.residuals[i]) << ",1\n";
  }
  if (!with_raw) return;
  for (Complex z : rs.raw) os << format_double(z.real()) << ',' << format_double(z.imag()) << ",nan,0\n";
}

inline void write_trace_csv(std::ostream& os, const std::vector<double>& trace) {
  os << "iter,objective\n";
  for (std::size_t i = 0; i < trace.size(); ++i) os << i << ',' << format_double(trace[i]) << '\n';
}

}  // namespace ddae::io
