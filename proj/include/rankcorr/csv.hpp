#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "rankcorr/dataset.hpp"
#include "rankcorr/errors.hpp"

namespace rankcorr {

struct CsvSchema {
  std::string cluster_col;
  std::string x_col;
  std::string y_col;
  VariableSpec x_spec;
  VariableSpec y_spec;
};

namespace detail {

inline std::string trim(std::string s) {
  auto issp = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\r'; };
  while (!s.empty() && issp(s.front())) s.erase(s.begin());
  while (!s.empty() && issp(s.back())) s.pop_back();
  return s;
}

// Splits one CSV line; supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(trim(field));
  return out;
}

inline double parse_value(const std::string& raw, const VariableSpec& spec,
                          const std::string& col, std::size_t row) {
  const std::string where =
      " (column '" + col + "', data row " + std::to_string(row) + ")";
  if (raw.empty()) throw data_error("empty value" + where);
  if (spec.ordinal()) {
    auto it = std::find(spec.levels.begin(), spec.levels.end(), raw);
    if (it == spec.levels.end())
      throw data_error("ordinal value '" + raw + "' not in declared levels" + where);
    return static_cast<double>(it - spec.levels.begin());
  }
  double v = 0.0;
  const char* b = raw.data();
  const char* e = b + raw.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e)
    throw data_error("unparseable numeric value '" + raw + "'" + where);
  if (!std::isfinite(v)) throw data_error("non-finite numeric value" + where);
  return v;
}

inline std::string format_value(double v, const VariableSpec& spec) {
  if (spec.ordinal()) return spec.levels[static_cast<std::size_t>(v)];
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

// Reads a header CSV and groups rows into a ClusteredDataset. Error messages
// name the offending column and 1-based data row.
inline ClusteredDataset load_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw data_error("empty CSV input");
  const auto header = detail::split_csv_line(line);
  auto col_of = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw data_error("missing column '" + name + "' in CSV header");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ci = col_of(schema.cluster_col);
  const std::size_t xi = col_of(schema.x_col);
  const std::size_t yi = col_of(schema.y_col);

  DatasetBuilder builder(schema.x_spec, schema.y_spec);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() <= std::max({ci, xi, yi}))
      throw data_error("too few fields on data row " + std::to_string(row));
    if (fields[ci].empty())
      throw data_error("empty cluster id on data row " + std::to_string(row));
    const double x = detail::parse_value(fields[xi], schema.x_spec, schema.x_col, row);
    const double y = detail::parse_value(fields[yi], schema.y_spec, schema.y_col, row);
    builder.add(fields[ci], x, y);
  }
  if (row == 0) throw data_error("CSV has a header but no data rows");
  return builder.build();
}

// Inverse of load_csv for the same schema; numeric values round-trip exactly.
inline void save_csv(std::ostream& out, const ClusteredDataset& ds,
                     const CsvSchema& schema) {
  out << schema.cluster_col << ',' << schema.x_col << ',' << schema.y_col << '\n';
  for (std::size_t i = 0; i < ds.n_clusters(); ++i) {
    const auto xs = ds.x_in(i);
    const auto ys = ds.y_in(i);
    for (std::size_t j = 0; j < xs.size(); ++j) {
      out << detail::quote_if_needed(ds.cluster_ids()[i]) << ','
          << detail::format_value(xs[j], ds.x_spec()) << ','
          << detail::format_value(ys[j], ds.y_spec()) << '\n';
    }
  }
}

}  // namespace rankcorr
