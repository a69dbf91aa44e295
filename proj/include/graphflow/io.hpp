#pragma once

// Text serialization: 17-significant-digit floats, snapshot CSV, and a JSON
// writer that keeps the float format stable.

#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphflow/grid.hpp"

namespace graphflow::io {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Header "i1,...,in,x1,...,xn,u1,...,um", one row per active node in node order.
inline void write_snapshot(std::ostream& os, const GraphField& field) {
  const DomainGrid& grid = field.grid();
  const int n = grid.dim();
  const int m = field.codim();
  std::string line;
  for (int i = 0; i < n; ++i) line += "i" + std::to_string(i + 1) + ",";
  for (int i = 0; i < n; ++i) line += "x" + std::to_string(i + 1) + ",";
  for (int a = 0; a < m; ++a) line += "u" + std::to_string(a + 1) + (a + 1 < m ? "," : "\n");
  os << line;
  for (NodeId node = 0; node < grid.size(); ++node) {
    line.clear();
    const Index idx = grid.index(node);
    for (int i = 0; i < n; ++i) line += std::to_string(idx[i]) + ",";
    for (int i = 0; i < n; ++i) line += format_double(grid.coord(node, i)) + ",";
    for (int a = 0; a < m; ++a) line += format_double(field(node, a)) + (a + 1 < m ? "," : "\n");
    os << line;
  }
}

/// Reads a snapshot onto `grid`; every active node must appear exactly once.
inline GraphField read_snapshot(std::istream& is, const GridPtr& grid) {
  const int n = grid->dim();
  std::string header;
  if (!std::getline(is, header)) throw std::runtime_error("read_snapshot: empty input");
  int columns = 1;
  for (char c : header) columns += (c == ',');
  const int m = columns - 2 * n;
  if (m < 1) throw std::runtime_error("read_snapshot: header has too few columns");
  std::vector<double> values(grid->size() * m, 0.0);
  std::vector<char> seen(grid->size(), 0);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) != columns)
      throw std::runtime_error("read_snapshot: wrong column count in row " + std::to_string(rows + 1));
    Index idx{};
    for (int i = 0; i < n; ++i) idx[i] = std::stoi(cells[i]);
    const NodeId node = grid->node_at(idx);
    if (node == kNoNode || seen[node]) throw std::runtime_error("read_snapshot: row does not match an active node");
    seen[node] = 1;
    for (int a = 0; a < m; ++a) values[node * m + a] = std::stod(cells[2 * n + a]);
    ++rows;
  }
  if (rows != grid->size()) throw std::runtime_error("read_snapshot: missing nodes");
  return GraphField(grid, m, std::move(values));
}

namespace detail {
inline void dump_json(std::string& out, const nlohmann::json& j, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case nlohmann::json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    case nlohmann::json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad + nlohmann::json(it.key()).dump() + ": ";
        dump_json(out, it.value(), indent, depth + 1);
      }
      out += "\n" + close_pad + "}";
      return;
    }
    case nlohmann::json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // Arrays of scalars, or of scalar arrays, stay on one line.
      auto scalar_array = [](const nlohmann::json& a) {
        return std::all_of(a.begin(), a.end(), [](const auto& e) { return !e.is_structured(); });
      };
      const bool inline_form = std::all_of(j.begin(), j.end(), [&](const auto& e) {
        return !e.is_structured() || (e.is_array() && scalar_array(e));
      });
      out += "[";
      bool first = true;
      for (const auto& e : j) {
        if (!first) out += inline_form ? ", " : ",";
        first = false;
        if (!inline_form) out += "\n" + pad;
        if (inline_form && e.is_array()) {
          out += "[";
          for (std::size_t k = 0; k < e.size(); ++k) {
            if (k) out += ", ";
            dump_json(out, e[k], indent, depth + 1);
          }
          out += "]";
        } else {
          dump_json(out, e, indent, depth + 1);
        }
      }
      if (!inline_form) out += "\n" + close_pad;
      out += "]";
      return;
    }
    default:
      out += j.dump();
  }
}
}  // namespace detail

/// JSON text with floats in 17-digit form; object keys keep nlohmann's sorted order.
inline std::string dump_json(const nlohmann::json& j) {
  std::string out;
  detail::dump_json(out, j, 2, 0);
  out += "\n";
  return out;
}

}  // namespace graphflow::io
