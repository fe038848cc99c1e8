#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "coopsim/errors.hpp"
#include "coopsim/geom.hpp"
#include "coopsim/rng.hpp"

namespace coopsim {

// Who can hear whom. Connectivity is symmetric and purely geometric: two
// nodes are linked iff their horizontal (x-y) distance is within the
// broadcast range, boundary included.
struct CommGraph {
  std::vector<int> node_ids;                  // sorted
  std::map<int, Pose> poses;
  std::vector<std::pair<int, int>> edges;     // (a, b) with a < b, sorted
  double broadcast_range_m = 70.0;

  bool has_node(int id) const { return poses.count(id) != 0; }

  bool connected(int a, int b) const {
    if (a == b) return has_node(a);
    if (a > b) std::swap(a, b);
    return std::binary_search(edges.begin(), edges.end(), std::make_pair(a, b));
  }

  std::vector<int> neighbors(int id) const {
    std::vector<int> out;
    for (const auto& [a, b] : edges) {
      if (a == id) out.push_back(b);
      if (b == id) out.push_back(a);
    }
    std::sort(out.begin(), out.end());
    return out;
  }
};

inline CommGraph build_comm_graph(const std::map<int, Pose>& poses,
                                  double broadcast_range_m = 70.0) {
  if (!(broadcast_range_m > 0.0))
    throw UsageError("comm graph: broadcast range must be > 0");
  CommGraph g;
  g.broadcast_range_m = broadcast_range_m;
  g.poses = poses;
  g.node_ids.reserve(poses.size());
  for (const auto& [id, _] : poses) g.node_ids.push_back(id);
  for (std::size_t i = 0; i < g.node_ids.size(); ++i) {
    for (std::size_t j = i + 1; j < g.node_ids.size(); ++j) {
      const int a = g.node_ids[i], b = g.node_ids[j];
      const double d =
          (poses.at(a).translation.xy() - poses.at(b).translation.xy()).norm();
      if (d <= broadcast_range_m) g.edges.emplace_back(a, b);
    }
  }
  return g;
}

enum class EgoMode { kFixed, kRandom };

// Picks the ego node. Fixed mode validates the requested id; random mode is
// a seeded draw over the sorted node list, so a given (graph, seed) pair
// always elects the same node.
inline int select_ego(const CommGraph& g, EgoMode mode, int fixed_id = -1,
                      std::uint64_t seed = 0) {
  if (g.node_ids.empty()) throw UsageError("select_ego: empty graph");
  if (mode == EgoMode::kFixed) {
    if (!g.has_node(fixed_id))
      throw UsageError("select_ego: node " + std::to_string(fixed_id) +
                       " is not in the graph");
    return fixed_id;
  }
  SplitRng rng(derive_seed(seed, kStreamEgoSelect));
  const auto idx = static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(g.node_ids.size()) - 1));
  return g.node_ids[idx];
}

// Shared-medium link at a fixed application-layer throughput.
struct LinkModel {
  double throughput_mbps = 27.0;
  double overhead_bytes = 0.0;
};

inline double transmit_time_s(double bytes, const LinkModel& link = {}) {
  if (bytes < 0.0) throw UsageError("transmit_time: negative size");
  if (!(link.throughput_mbps > 0.0))
    throw UsageError("transmit_time: throughput must be > 0");
  return (bytes + link.overhead_bytes) * 8.0 / (link.throughput_mbps * 1e6);
}

}  // namespace coopsim
