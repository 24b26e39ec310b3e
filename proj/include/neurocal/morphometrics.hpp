#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "neurocal/errors.hpp"
#include "neurocal/growth.hpp"
#include "neurocal/text.hpp"

namespace neurocal {

enum class Morphometric {
  section_count = 1,   ///< M1
  mean_section_length, ///< M2, um
  section_length_std,  ///< M3, um, population convention
  total_length,        ///< M4, um
};

inline std::string morphometric_id(Morphometric m) { return "M" + std::to_string(static_cast<int>(m)); }

inline Morphometric parse_morphometric(const std::string& id) {
  for (int i = 1; i <= 4; ++i)
    if (id == "M" + std::to_string(i)) return static_cast<Morphometric>(i);
  throw ConfigurationError("unknown morphometric '" + id + "' (expected M1..M4)");
}

inline const std::vector<Morphometric>& all_morphometrics() {
  static const std::vector<Morphometric> all{Morphometric::section_count, Morphometric::mean_section_length,
                                             Morphometric::section_length_std, Morphometric::total_length};
  return all;
}

/// Maximal unbranched path between the soma, branch points and tips.
struct Section {
  std::vector<Vec3> points;
  std::vector<AgentId> agents;
  double length = 0.0;
};

namespace detail {

/// Walks every section, calling fn(first agent, agents in the section).
template <class Fn>
void for_each_section(const NeuronTree& tree, Fn&& fn) {
  std::vector<AgentId> starts(tree.roots.rbegin(), tree.roots.rend());
  std::vector<AgentId> chain;
  while (!starts.empty()) {
    AgentId id = starts.back();
    starts.pop_back();
    chain.clear();
    for (;;) {
      chain.push_back(id);
      const Agent& a = tree.agents[static_cast<std::size_t>(id)];
      if (a.daughters.size() == 1) {
        id = a.daughters.front();
        continue;
      }
      for (auto d = a.daughters.rbegin(); d != a.daughters.rend(); ++d) starts.push_back(*d);
      break;
    }
    fn(std::span<const AgentId>(chain));
  }
}

} // namespace detail

inline std::vector<Section> sections(const NeuronTree& tree) {
  std::vector<Section> out;
  detail::for_each_section(tree, [&](std::span<const AgentId> chain) {
    Section s;
    s.points.push_back(tree.agents[static_cast<std::size_t>(chain.front())].start);
    for (AgentId id : chain) {
      const Agent& a = tree.agents[static_cast<std::size_t>(id)];
      s.points.push_back(a.end);
      s.agents.push_back(id);
      s.length += a.length();
    }
    out.push_back(std::move(s));
  });
  return out;
}

inline std::vector<double> section_lengths(const NeuronTree& tree) {
  std::vector<double> out;
  detail::for_each_section(tree, [&](std::span<const AgentId> chain) {
    double len = 0.0;
    for (AgentId id : chain) len += tree.agents[static_cast<std::size_t>(id)].length();
    out.push_back(len);
  });
  return out;
}

struct QoIVector {
  std::vector<Morphometric> selection;
  std::vector<double> values;
};

inline QoIVector extract(const NeuronTree& tree, std::span<const Morphometric> selection) {
  if (tree.empty()) throw ConfigurationError("cannot extract morphometrics from an empty tree");
  const auto lengths = section_lengths(tree);
  const double n = static_cast<double>(lengths.size());
  double total = 0.0;
  for (double l : lengths) total += l;
  const double mean = total / n;
  double ss = 0.0;
  for (double l : lengths) ss += (l - mean) * (l - mean);
  QoIVector q;
  q.selection.assign(selection.begin(), selection.end());
  for (auto m : selection) {
    switch (m) {
    case Morphometric::section_count: q.values.push_back(n); break;
    case Morphometric::mean_section_length: q.values.push_back(mean); break;
    case Morphometric::section_length_std: q.values.push_back(std::sqrt(ss / n)); break;
    case Morphometric::total_length: q.values.push_back(total); break;
    }
  }
  return q;
}

/// Rows are neurons, columns labelled QoIs.
struct QoIMatrix {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;

  QoIMatrix() = default;
  QoIMatrix(std::vector<std::string> cols, Eigen::MatrixXd vals) : columns(std::move(cols)), values(std::move(vals)) {
    if (static_cast<Eigen::Index>(columns.size()) != values.cols())
      throw ConfigurationError("column labels do not match the matrix width");
  }

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

inline std::vector<std::string> column_labels(std::span<const Morphometric> selection) {
  std::vector<std::string> out;
  for (auto m : selection) out.push_back(morphometric_id(m));
  return out;
}

inline QoIMatrix assemble(std::span<const NeuronTree> trees, std::span<const Morphometric> selection) {
  if (trees.empty()) throw ConfigurationError("assemble needs at least one morphology");
  Eigen::MatrixXd values(static_cast<Eigen::Index>(trees.size()), static_cast<Eigen::Index>(selection.size()));
  for (std::size_t i = 0; i < trees.size(); ++i) {
    QoIVector q;
    try {
      q = extract(trees[i], selection);
    } catch (const std::exception& e) {
      throw ConfigurationError("morphology " + std::to_string(i) + ": " + e.what());
    }
    for (std::size_t j = 0; j < selection.size(); ++j)
      values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = q.values[j];
  }
  return {column_labels(selection), std::move(values)};
}

inline std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return {buf, static_cast<std::size_t>(n)};
}

inline void write_csv(std::ostream& out, const QoIMatrix& m) {
  for (std::size_t j = 0; j < m.columns.size(); ++j) out << (j ? "," : "") << m.columns[j];
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m.values(i, j));
    out << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  out.push_back(std::move(cell));
  return out;
}

} // namespace detail

inline QoIMatrix read_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line != "\r") header = detail::split_csv_line(line);
  }
  if (header.empty()) throw FormatError("empty QoI table");
  std::vector<double> data;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw FormatError("expected " + std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()),
                        line_no);
    for (const auto& c : cells) {
      double v = 0.0;
      if (!detail::parse_number(std::string_view(c), v) || !std::isfinite(v))
        throw FormatError("non-numeric or non-finite cell '" + c + "'", line_no);
      data.push_back(v);
    }
    ++rows;
  }
  Eigen::MatrixXd values(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(header.size()));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < header.size(); ++j)
      values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data[i * header.size() + j];
  return {std::move(header), std::move(values)};
}

} // namespace neurocal
