// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "alc/data_model.hpp"
#include "alc/geometry.hpp"
#include "alc/json_io.hpp"

// Label Selection Module: cross-source matching of crowd labels with the
// predictions of the expert-trained model (ModelP) and the consensus-trained
// model (ModelA), the gray/pink/red/green partition, and the instance and
// image inconsistency scores used for selection.

namespace alc {

/// Slot a label occupies in the three-way comparison.
enum class Slot : int { Crowd = 0, ModelP = 1, ModelA = 2 };

struct PairIou {
  Slot a;
  Slot b;
  double iou;
};

/// Labels from different sources that agree on one object; at most one per slot.
struct MatchCluster {
  std::array<std::optional<Label>, 3> members;
  std::vector<PairIou> pairwise;

  const std::optional<Label>& crowd() const { return members[0]; }
  const std::optional<Label>& model_p() const { return members[1]; }
  const std::optional<Label>& model_a() const { return members[2]; }

  std::size_t size() const {
    return std::count_if(members.begin(), members.end(), [](const auto& m) { return m.has_value(); });
  }
};

struct MatchResult {
  std::vector<MatchCluster> clusters;  // two or more members each
  std::vector<Label> crowd_only;
  std::vector<Label> model_p_only;
  std::vector<Label> model_a_only;
};

struct ScoredLabel {
  Label label;
  double score;
};

struct RegionPartition {
  std::vector<MatchCluster> gray;
  std::vector<Label> pink;         // ModelP only
  std::vector<ScoredLabel> red;    // ModelA only
  std::vector<ScoredLabel> green;  // crowd only
};

enum class Region { Gray, Pink, Red, Green };

inline std::string_view to_string(Region r) {
  switch (r) {
    case Region::Gray: return "gray";
    case Region::Pink: return "pink";
    case Region::Red: return "red";
    case Region::Green: return "green";
  }
  return "?";
}

/// Greedy cross-source matching.
///
/// Every pair of labels from different slots with IoU above the threshold is
/// an edge. Edges are visited by descending IoU (ties: higher combined
/// confidence, then lower label ids) and merge their two groups only when the
/// groups share no slot, so each group holds at most one label per source and
/// each source pair is matched one-to-one.
inline MatchResult match_cross_source(std::span<const Label> crowd, std::span<const Label> model_p,
                                      std::span<const Label> model_a, double iou_threshold = 0.5) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
    throw std::invalid_argument("iou threshold must lie in (0,1)");

  struct Node {
    const Label* label;
    int slot;
  };
  std::vector<Node> nodes;
  nodes.reserve(crowd.size() + model_p.size() + model_a.size());
  for (const auto& l : crowd) nodes.push_back({&l, 0});
  for (const auto& l : model_p) nodes.push_back({&l, 1});
  for (const auto& l : model_a) nodes.push_back({&l, 2});

  struct Edge {
    std::size_t u, v;
    double iou;
  };
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      if (nodes[i].slot == nodes[j].slot) continue;
      const double o = iou(nodes[i].label->box, nodes[j].label->box);
      if (o > iou_threshold) edges.push_back({i, j, o});
    }
  std::sort(edges.begin(), edges.end(), [&](const Edge& a, const Edge& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    const double ca = nodes[a.u].label->confidence + nodes[a.v].label->confidence;
    const double cb = nodes[b.u].label->confidence + nodes[b.v].label->confidence;
    if (ca != cb) return ca > cb;
    const auto ka = std::make_pair(nodes[a.u].label->label_id, nodes[a.v].label->label_id);
    const auto kb = std::make_pair(nodes[b.u].label->label_id, nodes[b.v].label->label_id);
    if (ka != kb) return ka < kb;
    return std::make_pair(a.u, a.v) < std::make_pair(b.u, b.v);
  });

  std::vector<std::size_t> parent(nodes.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  std::vector<unsigned> mask(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) mask[i] = 1u << nodes[i].slot;
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : edges) {
    const auto ru = find(e.u), rv = find(e.v);
    if (ru == rv || (mask[ru] & mask[rv]) != 0) continue;
    parent[rv] = ru;
    mask[ru] |= mask[rv];
  }

  MatchResult out;
  std::vector<long> cluster_of(nodes.size(), -1);
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto r = find(i);
    if (cluster_of[r] < 0) {
      cluster_of[r] = static_cast<long>(groups.size());
      groups.emplace_back();
    }
    groups[cluster_of[r]].push_back(i);
  }
  for (const auto& g : groups) {
    if (g.size() == 1) {
      const auto& n = nodes[g.front()];
      auto& bucket = n.slot == 0 ? out.crowd_only : n.slot == 1 ? out.model_p_only : out.model_a_only;
      bucket.push_back(*n.label);
      continue;
    }
    MatchCluster c;
    for (auto i : g) c.members[nodes[i].slot] = *nodes[i].label;
    for (std::size_t a = 0; a < g.size(); ++a)
      for (std::size_t b = a + 1; b < g.size(); ++b) {
        const double o = iou(nodes[g[a]].label->box, nodes[g[b]].label->box);
        if (o > iou_threshold)
          c.pairwise.push_back({Slot(nodes[g[a]].slot), Slot(nodes[g[b]].slot), o});
      }
    out.clusters.push_back(std::move(c));
  }
  return out;
}

/// Instance score of a red label: the ModelA confidence.
inline double score_red(const Label& label) {
  if (label.source != Source::ModelA) throw std::invalid_argument("score_red expects a ModelA label");
  return label.confidence;
}

/// Instance score of a green label: confidence of the ModelP prediction with
/// the highest IoU to it, whether or not that IoU clears the match threshold.
/// 0 when there are no ModelP predictions.
inline double score_green(const Label& label, std::span<const Label> model_p) {
  const Label* best = nullptr;
  double best_iou = -1.0;
  for (const auto& p : model_p) {
    const double o = iou(label.box, p.box);
    const bool better = o > best_iou ||
                        (o == best_iou && (p.confidence > best->confidence ||
                                           (p.confidence == best->confidence &&
                                            p.label_id < best->label_id)));
    if (better) {
      best = &p;
      best_iou = o;
    }
  }
  return best ? best->confidence : 0.0;
}

/// Four-region partition of a match result. Green scores are taken against
/// every ModelP label present in the match (clustered or not).
inline RegionPartition classify_regions(const MatchResult& match) {
  std::vector<Label> all_p = match.model_p_only;
  for (const auto& c : match.clusters)
    if (c.model_p()) all_p.push_back(*c.model_p());

  RegionPartition part;
  part.gray = match.clusters;
  part.pink = match.model_p_only;
  for (const auto& l : match.model_a_only) part.red.push_back({l, l.confidence});
  for (const auto& l : match.crowd_only) part.green.push_back({l, score_green(l, all_p)});
  return part;
}

inline RegionPartition lsm_partition(std::span<const Label> crowd, std::span<const Label> model_p,
                                     std::span<const Label> model_a, double iou_threshold = 0.5) {
  return classify_regions(match_cross_source(crowd, model_p, model_a, iou_threshold));
}

/// LSM without the consensus model: red is always empty.
inline RegionPartition classify_single_model(std::span<const Label> crowd,
                                             std::span<const Label> model_p,
                                             double iou_threshold = 0.5) {
  return lsm_partition(crowd, model_p, {}, iou_threshold);
}

/// Image inconsistency score: sum of red and green instance scores.
inline double image_score(const RegionPartition& part) {
  double s = 0.0;
  for (const auto& r : part.red) s += r.score;
  for (const auto& g : part.green) s += g.score;
  return s;
}

/// Debug/audit dump of one image's partition.
inline json partition_to_json(const RegionPartition& part) {
  json gray = json::array();
  for (const auto& c : part.gray) {
    json members = json::object();
    for (int s = 0; s < 3; ++s)
      if (c.members[s]) members[s == 0 ? "crowd" : s == 1 ? "model_p" : "model_a"] = c.members[s]->label_id;
    gray.push_back(members);
  }
  json pink = json::array(), red = json::array(), green = json::array();
  for (const auto& l : part.pink) pink.push_back(l.label_id);
  for (const auto& r : part.red) red.push_back({{"label_id", r.label.label_id}, {"score", r.score}});
  for (const auto& g : part.green) green.push_back({{"label_id", g.label.label_id}, {"score", g.score}});
  return {{"gray", gray}, {"pink", pink}, {"red", red}, {"green", green},
          {"image_score", image_score(part)}};
}

}  // namespace alc
