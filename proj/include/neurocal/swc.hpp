#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "neurocal/errors.hpp"
#include "neurocal/growth.hpp"
#include "neurocal/text.hpp"

namespace neurocal {

struct SwcRecord {
  std::int64_t id = 0;
  int type_code = 0;
  double x = 0.0, y = 0.0, z = 0.0;
  double radius = 0.0;
  std::int64_t parent = -1;
  std::size_t line = 0;

  Vec3 position() const { return {x, y, z}; }
};

struct SwcViolation {
  std::size_t line = 0; ///< 0 when not tied to a line
  std::string kind;
  std::string message;
};

struct MorphologyReport {
  std::map<int, std::size_t> type_counts;
  std::size_t records = 0;
  std::size_t trees = 0;
  std::vector<SwcViolation> violations;

  bool accepted() const { return violations.empty(); }

  std::string summary() const {
    std::ostringstream out;
    for (const auto& v : violations) {
      if (v.line > 0) out << "line " << v.line << ": ";
      out << v.kind;
      if (!v.message.empty()) out << " (" << v.message << ")";
      out << '\n';
    }
    return out.str();
  }
};

struct SwcParseResult {
  std::vector<NeuronTree> trees;
  MorphologyReport report;
};

/// Soma-attached points further than this beyond the soma surface get a
/// bridging agent from the surface.
inline constexpr double kSomaSurfaceTolerance = 1e-3;

/// Parses SWC text. Any violation rejects the whole file: the result then
/// carries no trees and the report lists every problem found.
inline SwcParseResult parse_swc(std::istream& in) {
  SwcParseResult result;
  auto& report = result.report;
  std::vector<SwcRecord> records;
  std::unordered_map<std::int64_t, std::size_t> index_of;
  std::unordered_map<std::int64_t, std::size_t> pending_parent; // record id -> line

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = detail::split_ws(line);
    if (fields.empty() || fields.front().front() == '#') continue;
    auto violate = [&](std::string kind, std::string msg = {}) {
      report.violations.push_back({line_no, std::move(kind), std::move(msg)});
    };
    if (fields.size() != 7) {
      violate("malformed column count", "expected 7 columns, found " + std::to_string(fields.size()));
      continue;
    }
    SwcRecord r;
    r.line = line_no;
    std::int64_t type = 0;
    if (!detail::parse_integer(fields[0], r.id) || !detail::parse_integer(fields[1], type) ||
        !detail::parse_number(fields[2], r.x) || !detail::parse_number(fields[3], r.y) ||
        !detail::parse_number(fields[4], r.z) || !detail::parse_number(fields[5], r.radius) ||
        !detail::parse_integer(fields[6], r.parent)) {
      violate("non-numeric field");
      continue;
    }
    if (type < INT32_MIN || type > INT32_MAX) {
      violate("non-numeric field", "type code out of range");
      continue;
    }
    r.type_code = static_cast<int>(type);
    ++report.records;
    if (r.id <= 0) {
      violate("invalid id", "ids must be positive");
      continue;
    }
    if (!std::isfinite(r.x) || !std::isfinite(r.y) || !std::isfinite(r.z) || !std::isfinite(r.radius)) {
      violate("non-finite coordinate");
      continue;
    }
    if (r.radius < 0.0) {
      violate("negative radius");
      continue;
    }
    if (index_of.contains(r.id)) {
      violate("duplicate id", "id " + std::to_string(r.id));
      continue;
    }
    if (r.parent == r.id) {
      violate("cycle", "record is its own parent");
      continue;
    }
    if (r.parent != -1 && !index_of.contains(r.parent)) pending_parent.emplace(r.id, line_no);
    ++report.type_counts[r.type_code];
    index_of.emplace(r.id, records.size());
    records.push_back(r);
  }

  // Parents never seen before their child: declared later or not at all.
  for (const auto& r : records) {
    if (!pending_parent.contains(r.id)) continue;
    if (index_of.contains(r.parent))
      report.violations.push_back({r.line, "forward reference", "parent " + std::to_string(r.parent)});
    else
      report.violations.push_back({r.line, "dangling parent", "parent " + std::to_string(r.parent)});
  }
  if (report.records == 0 && report.violations.empty()) report.violations.push_back({0, "no records", {}});
  std::sort(report.violations.begin(), report.violations.end(),
            [](const SwcViolation& a, const SwcViolation& b) { return a.line < b.line; });
  if (!report.accepted()) return result;

  // Parents always precede children, so a single forward pass resolves
  // component roots.
  std::vector<std::size_t> component(records.size());
  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].parent == -1) {
      component[i] = roots.size();
      roots.push_back(i);
    } else {
      component[i] = component[index_of.at(records[i].parent)];
    }
  }
  result.trees.resize(roots.size());

  std::vector<Vec3> soma_sum(roots.size(), Vec3::Zero());
  std::vector<std::size_t> soma_n(roots.size(), 0);
  std::vector<double> soma_radius(roots.size(), 0.0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].type_code != 1) continue;
    soma_sum[component[i]] += records[i].position();
    ++soma_n[component[i]];
    soma_radius[component[i]] = std::max(soma_radius[component[i]], records[i].radius);
  }
  for (std::size_t c = 0; c < roots.size(); ++c) {
    auto& soma = result.trees[c].soma;
    if (soma_n[c] > 0) {
      soma.position = soma_sum[c] / static_cast<double>(soma_n[c]);
      soma.radius = soma_radius[c];
    } else {
      // No soma records: the root point stands in for the soma.
      soma.position = records[roots[c]].position();
      soma.radius = records[roots[c]].radius;
    }
  }

  // Agent ending at each record; kSoma marks points that are neurite start
  // points on the soma (or the soma itself).
  std::vector<AgentId> agent_at(records.size(), kSoma);
  auto add = [](NeuronTree& tree, AgentId parent, const Vec3& start, const Vec3& end, const SwcRecord& r) {
    Agent a;
    a.parent = parent;
    a.start = start;
    a.end = end;
    a.diameter = 2.0 * r.radius;
    a.type_code = r.type_code;
    const AgentId id = tree.add_agent(std::move(a));
    if (parent == kSoma)
      tree.roots.push_back(id);
    else
      tree.agents[static_cast<std::size_t>(parent)].daughters.push_back(id);
    return id;
  };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.type_code == 1) continue;
    NeuronTree& tree = result.trees[component[i]];
    const bool parent_is_soma =
        r.parent == -1 || records[index_of.at(r.parent)].type_code == 1;
    if (parent_is_soma) {
      const Vec3 p = r.position();
      const Vec3 offset = p - tree.soma.position;
      const double dist = offset.norm();
      if (dist > tree.soma.radius + kSomaSurfaceTolerance) {
        const Vec3 surface = tree.soma.position + tree.soma.radius * offset / dist;
        agent_at[i] = add(tree, kSoma, surface, p, r);
      }
      continue;
    }
    const std::size_t pi = index_of.at(r.parent);
    agent_at[i] = add(tree, agent_at[pi], records[pi].position(), r.position(), r);
  }
  report.trees = result.trees.size();
  return result;
}

inline SwcParseResult parse_swc(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_swc(in);
}

/// Serializes a tree: soma as record 1, then every root in depth-first
/// pre-order. Root agents emit their start and end points. A nonzero
/// type_override replaces the stored type codes.
inline std::string write_swc(const NeuronTree& tree, int type_override = 0) {
  std::string out = "# id type x y z radius parent\n";
  char buf[256];
  std::int64_t next = 1;
  auto emit = [&](int type, const Vec3& p, double radius, std::int64_t parent) {
    const int n = std::snprintf(buf, sizeof buf, "%lld %d %.4f %.4f %.4f %.4f %lld\n", static_cast<long long>(next),
                                type, p.x(), p.y(), p.z(), radius, static_cast<long long>(parent));
    out.append(buf, static_cast<std::size_t>(n));
    return next++;
  };
  emit(1, tree.soma.position, tree.soma.radius, -1);
  std::vector<std::pair<AgentId, std::int64_t>> stack; // agent, record id of its start point
  for (auto it = tree.roots.rbegin(); it != tree.roots.rend(); ++it) stack.emplace_back(*it, 0);
  while (!stack.empty()) {
    auto [id, start_record] = stack.back();
    stack.pop_back();
    const Agent& a = tree.agents[static_cast<std::size_t>(id)];
    const int type = type_override != 0 ? type_override : a.type_code;
    if (start_record == 0) start_record = emit(type, a.start, 0.5 * a.diameter, 1);
    const std::int64_t end_record = emit(type, a.end, 0.5 * a.diameter, start_record);
    for (auto d = a.daughters.rbegin(); d != a.daughters.rend(); ++d) stack.emplace_back(*d, end_record);
  }
  return out;
}

/// Restricts a tree to agents with the given type codes. Kept agents whose
/// parent is dropped become roots on the soma.
inline NeuronTree select_subtree(const NeuronTree& tree, const std::set<int>& type_codes) {
  NeuronTree out;
  out.soma = tree.soma;
  out.truncated = tree.truncated;
  std::vector<AgentId> remap(tree.agents.size(), kSoma);
  bool any = false;
  for (const auto& a : tree.agents) any = any || type_codes.contains(a.type_code);
  if (!any) throw ConfigurationError("no matching structures");

  // Pre-order so parents are mapped before their daughters.
  std::vector<AgentId> stack(tree.roots.rbegin(), tree.roots.rend());
  while (!stack.empty()) {
    const AgentId id = stack.back();
    stack.pop_back();
    const Agent& a = tree.agents[static_cast<std::size_t>(id)];
    if (type_codes.contains(a.type_code)) {
      Agent copy = a;
      copy.daughters.clear();
      copy.parent = a.parent == kSoma ? kSoma : remap[static_cast<std::size_t>(a.parent)];
      const AgentId nid = out.add_agent(std::move(copy));
      remap[static_cast<std::size_t>(id)] = nid;
      if (out.agents[static_cast<std::size_t>(nid)].parent == kSoma)
        out.roots.push_back(nid);
      else
        out.agents[static_cast<std::size_t>(out.agents[static_cast<std::size_t>(nid)].parent)].daughters.push_back(nid);
    }
    for (auto d = a.daughters.rbegin(); d != a.daughters.rend(); ++d) stack.push_back(*d);
  }
  return out;
}

} // namespace neurocal
