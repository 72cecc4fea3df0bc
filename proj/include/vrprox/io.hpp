#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vrprox/dataset.hpp"
#include "vrprox/trace.hpp"
#include "vrprox/types.hpp"

namespace vrprox {

// 17 significant digits: lossless decimal round trip for doubles.
inline std::string format_g17(Scalar v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// libsvm text format
// ---------------------------------------------------------------------------

struct LibsvmOptions {
  bool remap_binary_labels = true;  // 0/1 -> -1/+1; +-1 kept; other labels untouched
  Index dimension_hint = 0;         // fixes p when the file may not touch the last column
};

/// Parses "label idx:val idx:val ..." lines with 1-based indices into a
/// sparse dataset. Unsorted indices within a line are sorted (warning
/// collected when a sink is given); duplicates and malformed tokens are
/// errors that name the line.
inline Dataset read_libsvm(const std::string& path, const LibsvmOptions& options = {},
                           std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_libsvm: cannot open " + path);

  std::vector<std::vector<std::pair<Index, Scalar>>> rows;
  std::vector<Scalar> labels;
  Index max_index = -1;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream tokens(line);
    std::string tok;
    if (!(tokens >> tok))
      continue;
    Scalar label;
    try {
      std::size_t used = 0;
      label = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw std::runtime_error("read_libsvm: bad label at line " + std::to_string(line_no));
    }
    if (options.remap_binary_labels && label == 0.0) label = -1.0;

    std::vector<std::pair<Index, Scalar>> entries;
    bool monotone = true;
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 >= tok.size())
        throw std::runtime_error("read_libsvm: malformed entry '" + tok + "' at line " +
                                 std::to_string(line_no));
      Index idx;
      Scalar val;
      try {
        idx = static_cast<Index>(std::stoll(tok.substr(0, colon)));
        val = std::stod(tok.substr(colon + 1));
      } catch (const std::exception&) {
        throw std::runtime_error("read_libsvm: malformed entry '" + tok + "' at line " +
                                 std::to_string(line_no));
      }
      if (idx < 1)
        throw std::runtime_error("read_libsvm: index must be >= 1 at line " +
                                 std::to_string(line_no));
      if (!entries.empty() && entries.back().first >= idx - 1) monotone = false;
      entries.emplace_back(idx - 1, val);  // shift to 0-based
      max_index = std::max(max_index, idx - 1);
    }
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t k = 1; k < entries.size(); ++k)
      if (entries[k].first == entries[k - 1].first)
        throw std::runtime_error("read_libsvm: duplicate index at line " + std::to_string(line_no));
    if (!monotone && warnings != nullptr)
      warnings->push_back("line " + std::to_string(line_no) + ": indices sorted");
    rows.push_back(std::move(entries));
    labels.push_back(label);
  }
  if (rows.empty()) throw std::runtime_error("read_libsvm: empty file " + path);

  const Index p = std::max(options.dimension_hint, max_index + 1);
  if (p < 1) throw std::runtime_error("read_libsvm: no features found in " + path);
  Vector y = Eigen::Map<const Vector>(labels.data(), static_cast<Index>(labels.size()));
  return make_sparse_dataset(p, rows, std::move(y));
}

/// Writes nonzero entries in libsvm text (1-based indices, 17-digit values);
/// deterministic byte-for-byte for a given dataset.
inline void write_libsvm(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_libsvm: cannot open " + path);
  for (Index i = 0; i < data.n(); ++i) {
    out << format_g17(data.response(i));
    if (data.is_dense()) {
      for (Index j = 0; j < data.p(); ++j) {
        const Scalar v = data.dense()(i, j);
        if (v != 0.0) out << ' ' << (j + 1) << ':' << format_g17(v);
      }
    } else {
      for (SparseRowMatrix::InnerIterator it(data.sparse(), i); it; ++it)
        if (it.value() != 0.0) out << ' ' << (it.col() + 1) << ':' << format_g17(it.value());
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write_libsvm: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Trace serialization. CSV columns exactly:
//   epoch,passes,objective,gap,grad_evals,wallclock_ms
// gap stays empty when the run had no reference. JSON mirrors the fields.
// ---------------------------------------------------------------------------

inline void write_trace_csv(const RunTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
  out << "epoch,passes,objective,gap,grad_evals,wallclock_ms\n";
  for (const auto& rec : trace.records) {
    out << rec.epoch << ',' << format_g17(rec.passes) << ',' << format_g17(rec.objective) << ',';
    if (rec.gap) out << format_g17(*rec.gap);
    out << ',' << rec.grad_evals << ',' << format_g17(rec.wallclock_ms) << '\n';
  }
  if (!out) throw std::runtime_error("write_trace_csv: write failed for " + path);
}

inline void write_trace_json(const RunTrace& trace, const std::string& path) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& rec : trace.records) {
    nlohmann::json row;
    row["epoch"] = rec.epoch;
    row["passes"] = rec.passes;
    row["objective"] = rec.objective;
    if (rec.gap) row["gap"] = *rec.gap;
    else row["gap"] = nullptr;
    row["grad_evals"] = rec.grad_evals;
    row["wallclock_ms"] = rec.wallclock_ms;
    records.push_back(std::move(row));
  }
  nlohmann::json doc;
  doc["records"] = std::move(records);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trace_json: cannot open " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("write_trace_json: write failed for " + path);
}

enum class TraceFormat { kCsv, kJson };

inline void write_trace(const RunTrace& trace, const std::string& path, TraceFormat format) {
  if (format == TraceFormat::kCsv) write_trace_csv(trace, path);
  else write_trace_json(trace, path);
}

inline RunTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_trace_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,passes,objective,gap,grad_evals,wallclock_ms")
    throw std::runtime_error("read_trace_csv: bad header in " + path);
  RunTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t k = 0; k <= line.size(); ++k) {
      if (k == line.size() || line[k] == ',') {
        cells.push_back(line.substr(start, k - start));
        start = k + 1;
      }
    }
    if (cells.size() != 6) throw std::runtime_error("read_trace_csv: bad row in " + path);
    TraceRecord rec;
    rec.epoch = std::stoi(cells[0]);
    rec.passes = std::stod(cells[1]);
    rec.objective = std::stod(cells[2]);
    if (!cells[3].empty()) rec.gap = std::stod(cells[3]);
    rec.grad_evals = std::stoll(cells[4]);
    rec.wallclock_ms = std::stod(cells[5]);
    trace.records.push_back(rec);
  }
  return trace;
}

inline RunTrace read_trace_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_trace_json: cannot open " + path);
  nlohmann::json doc = nlohmann::json::parse(in);
  RunTrace trace;
  for (const auto& row : doc.at("records")) {
    TraceRecord rec;
    rec.epoch = row.at("epoch").get<int>();
    rec.passes = row.at("passes").get<Scalar>();
    rec.objective = row.at("objective").get<Scalar>();
    if (!row.at("gap").is_null()) rec.gap = row.at("gap").get<Scalar>();
    rec.grad_evals = row.at("grad_evals").get<std::int64_t>();
    rec.wallclock_ms = row.at("wallclock_ms").get<Scalar>();
    trace.records.push_back(rec);
  }
  return trace;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_text_file: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace vrprox
