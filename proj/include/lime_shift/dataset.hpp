#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lime_shift/numkit.hpp"

namespace lime_shift {

struct Dataset {
  std::vector<SparseVector> rows;
  std::vector<int> labels;
  std::size_t dim = 0;
  // True when the dimensionality came from a `#dim N` pragma.
  bool dim_pragma = false;

  std::size_t size() const noexcept { return rows.size(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Token {
  std::string_view text;
  std::size_t column;  // 1-based
};

inline std::vector<Token> split_ws(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back({line.substr(start, i - start), start + 1});
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace detail

// Parses svmlight text: `label idx:val ...` with 1-based indices on disk,
// `#` comments, blank lines skipped, optional `#dim N` pragma.
inline Dataset parse_svmlight(std::istream& in) {
  struct RawRow {
    int label;
    std::vector<std::pair<std::uint32_t, double>> pairs;
  };
  std::vector<RawRow> raw;
  std::optional<std::size_t> pragma_dim;
  std::size_t max_index = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    const auto hash = view.find('#');
    if (hash != std::string_view::npos) {
      const auto comment = view.substr(hash + 1);
      if (detail::trim(view.substr(0, hash)).empty() && comment.rfind("dim", 0) == 0 &&
          comment.size() > 3 && (comment[3] == ' ' || comment[3] == '\t')) {
        std::size_t d = 0;
        if (!detail::parse_number(detail::trim(comment.substr(3)), d) || d == 0) {
          throw ParseError("invalid #dim pragma", lineno, hash + 1);
        }
        pragma_dim = d;
        continue;
      }
      view = view.substr(0, hash);
    }
    const auto tokens = detail::split_ws(view);
    if (tokens.empty()) continue;
    RawRow row;
    if (!detail::parse_number(tokens[0].text, row.label)) {
      throw ParseError("unparsable label '" + std::string(tokens[0].text) + "'", lineno,
                       tokens[0].column);
    }
    std::uint32_t prev = 0;
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      const auto& tok = tokens[t];
      const auto colon = tok.text.find(':');
      if (colon == std::string_view::npos) {
        throw ParseError("unparsable token '" + std::string(tok.text) + "'", lineno, tok.column);
      }
      std::uint32_t idx = 0;
      double val = 0.0;
      if (!detail::parse_number(tok.text.substr(0, colon), idx)) {
        throw ParseError("unparsable index '" + std::string(tok.text) + "'", lineno, tok.column);
      }
      if (idx == 0) throw ParseError("index 0 (indices are 1-based)", lineno, tok.column);
      if (idx <= prev) throw ParseError("indices not ascending", lineno, tok.column);
      if (!detail::parse_number(tok.text.substr(colon + 1), val)) {
        throw ParseError("unparsable value '" + std::string(tok.text) + "'", lineno,
                         tok.column + colon + 1);
      }
      if (!std::isfinite(val)) {
        throw ParseError("non-finite value", lineno, tok.column + colon + 1);
      }
      if (pragma_dim && idx > *pragma_dim) {
        throw ParseError("index " + std::to_string(idx) + " exceeds #dim " +
                             std::to_string(*pragma_dim),
                         lineno, tok.column);
      }
      prev = idx;
      max_index = std::max<std::size_t>(max_index, idx);
      row.pairs.emplace_back(idx - 1, val);
    }
    raw.push_back(std::move(row));
  }
  Dataset ds;
  ds.dim_pragma = pragma_dim.has_value();
  ds.dim = pragma_dim.value_or(max_index);
  if (ds.dim < max_index) {
    throw ParseError("#dim pragma smaller than largest index", 1, 1);
  }
  ds.rows.reserve(raw.size());
  ds.labels.reserve(raw.size());
  for (auto& r : raw) {
    ds.labels.push_back(r.label);
    ds.rows.push_back(SparseVector::from_pairs(ds.dim, std::move(r.pairs)));
  }
  return ds;
}

inline Dataset parse_svmlight(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_svmlight(in);
}

inline Dataset load_svmlight(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset '" + path + "'");
  return parse_svmlight(in);
}

inline std::string format_sparse(const SparseVector& v) {
  std::string out;
  const auto idx = v.indices();
  const auto val = v.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i > 0) out += ' ';
    out += std::to_string(idx[i] + 1);
    out += ':';
    out += detail::format_double(val[i]);
  }
  return out;
}

inline std::string format_svmlight(const Dataset& ds) {
  std::string out;
  if (ds.dim_pragma) out += "#dim " + std::to_string(ds.dim) + "\n";
  for (std::size_t i = 0; i < ds.rows.size(); ++i) {
    out += std::to_string(ds.labels[i]);
    if (!ds.rows[i].empty()) {
      out += ' ';
      out += format_sparse(ds.rows[i]);
    }
    out += '\n';
  }
  return out;
}

inline void write_svmlight(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write dataset '" + path + "'");
  out << format_svmlight(ds);
}

}  // namespace lime_shift
