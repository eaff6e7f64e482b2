#pragma once

// Rule similarity graph and seeded Louvain community detection with a
// resolution parameter.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "stmine/core.hpp"
#include "stmine/dedup.hpp"
#include "stmine/error.hpp"

namespace stmine {

/// Shared antecedent items plus shared consequent items, over the sizes of
/// the two side unions. Items match on (attribute, value).
inline double rule_similarity(const Rule& a, const Rule& b) {
  auto ante = a.antecedent().intersection_size(b.antecedent());
  auto cons = a.consequent().intersection_size(b.consequent());
  auto anteUnion = a.antecedent().size() + b.antecedent().size() - ante;
  auto consUnion = a.consequent().size() + b.consequent().size() - cons;
  return double(ante + cons) / double(anteUnion + consUnion);
}

/// Undirected weighted graph without self-loops. Zero-weight pairs are not
/// stored; they contribute nothing to modularity.
class SimilarityGraph {
 public:
  using Edge = std::pair<std::uint32_t, double>;

  SimilarityGraph() = default;
  explicit SimilarityGraph(std::size_t n) : adj_(n) {}

  std::size_t size() const { return adj_.size(); }

  void add_edge(std::uint32_t i, std::uint32_t j, double w) {
    if (i == j || w == 0.0) return;
    adj_[i].emplace_back(j, w);
    adj_[j].emplace_back(i, w);
  }

  /// Sorts adjacency lists by neighbour id.
  void finalize() {
    for (auto& row : adj_) std::sort(row.begin(), row.end());
  }

  const std::vector<Edge>& neighbours(std::size_t i) const { return adj_[i]; }

  double weight(std::size_t i, std::size_t j) const {
    const auto& row = adj_[i];
    auto it = std::lower_bound(row.begin(), row.end(), Edge{std::uint32_t(j), -std::numeric_limits<double>::infinity()});
    return it != row.end() && it->first == j ? it->second : 0.0;
  }

  double degree(std::size_t i) const {
    double k = 0;
    for (const auto& [j, w] : adj_[i]) k += w;
    return k;
  }

 private:
  std::vector<std::vector<Edge>> adj_;
};

inline SimilarityGraph build_similarity_graph(std::span<const CanonicalRule> rules) {
  SimilarityGraph g(rules.size());
  for (std::size_t i = 0; i < rules.size(); ++i)
    for (std::size_t j = i + 1; j < rules.size(); ++j)
      g.add_edge(std::uint32_t(i), std::uint32_t(j), rule_similarity(rules[i].rule, rules[j].rule));
  g.finalize();
  return g;
}

struct Partition {
  std::vector<int> assignment;  // node -> cluster, ids dense in 0..clusterCount-1
  int clusterCount = 0;
  double resolution = 1.0;
  std::uint64_t seed = 0;
  double modularity = 0;

  std::vector<std::vector<std::size_t>> members() const {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(clusterCount));
    for (std::size_t i = 0; i < assignment.size(); ++i) out[std::size_t(assignment[i])].push_back(i);
    return out;
  }
};

inline constexpr int kLouvainRestarts = 10;

/// Modularity of each local-move pass and of each completed level.
struct LouvainTrace {
  std::vector<double> passModularity;
  std::vector<double> levelModularity;
};

namespace detail {

// Working graph for one Louvain level; aggregated levels carry self-loops.
struct LevelGraph {
  std::vector<std::vector<std::pair<std::uint32_t, double>>> adj;  // i != j, both directions
  std::vector<double> self;  // A_ii, counting internal pairs in both orders
  std::vector<double> degree;
  double total = 0;  // sum of degrees (2m)

  void compute_degrees() {
    degree.assign(adj.size(), 0.0);
    total = 0;
    for (std::size_t i = 0; i < adj.size(); ++i) {
      double k = self[i];
      for (const auto& [j, w] : adj[i]) k += w;
      degree[i] = k;
      total += k;
    }
  }
};

inline double level_modularity(const LevelGraph& g, const std::vector<int>& community, double gamma) {
  if (g.total == 0.0) return 0.0;
  std::vector<double> inside(g.adj.size(), 0.0), tot(g.adj.size(), 0.0);
  for (std::size_t i = 0; i < g.adj.size(); ++i) {
    auto c = std::size_t(community[i]);
    inside[c] += g.self[i];
    tot[c] += g.degree[i];
    for (const auto& [j, w] : g.adj[i])
      if (community[j] == community[i]) inside[c] += w;
  }
  double q = 0;
  for (std::size_t c = 0; c < inside.size(); ++c) q += inside[c] - gamma * tot[c] * tot[c] / g.total;
  return q / g.total;
}

// Unbiased draw in [0, bound) from raw 64-bit output, identical on every platform.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do x = rng(); while (x >= limit);
  return x % bound;
}

inline void seeded_shuffle(std::vector<std::uint32_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[bounded(rng, i)]);
}

// Greedy local moves until a full pass moves nothing. Each node may join a
// neighbouring community or leave for an empty one. Returns whether any node
// moved.
inline bool local_moves(const LevelGraph& g, std::vector<int>& community, double gamma, std::mt19937_64& rng,
                        LouvainTrace* trace) {
  const std::size_t n = g.adj.size();
  std::vector<double> tot(n, 0.0);
  std::vector<std::size_t> size(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    tot[std::size_t(community[i])] += g.degree[i];
    ++size[std::size_t(community[i])];
  }
  std::vector<int> empty;
  for (std::size_t c = n; c-- > 0;)
    if (size[c] == 0) empty.push_back(int(c));

  std::vector<std::uint32_t> order(n);
  for (std::uint32_t i = 0; i < n; ++i) order[i] = i;
  seeded_shuffle(order, rng);

  std::vector<double> linkTo(n, 0.0);
  std::vector<int> touched;
  bool movedAny = false;
  constexpr double kMinGain = 1e-12;
  constexpr int kMaxPasses = 1000;

  for (int pass = 0; pass < kMaxPasses; ++pass) {
    bool moved = false;
    for (std::uint32_t i : order) {
      const int from = community[i];
      const double k = g.degree[i];
      touched.clear();
      for (const auto& [j, w] : g.adj[i]) {
        int c = community[j];
        if (linkTo[std::size_t(c)] == 0.0) touched.push_back(c);
        linkTo[std::size_t(c)] += w;
      }
      tot[std::size_t(from)] -= k;
      --size[std::size_t(from)];
      // Gain of joining c, up to the common factor 1/m: k_i,c - gamma k_i tot_c / 2m.
      // An empty community scores zero.
      int best = from;
      double bestGain = linkTo[std::size_t(from)] - gamma * k * tot[std::size_t(from)] / g.total;
      for (int c : touched) {
        double gain = linkTo[std::size_t(c)] - gamma * k * tot[std::size_t(c)] / g.total;
        if (gain > bestGain + kMinGain) {
          best = c;
          bestGain = gain;
        }
      }
      if (size[std::size_t(from)] > 0 && 0.0 > bestGain + kMinGain && !empty.empty()) {
        best = empty.back();
        bestGain = 0.0;
      }
      if (best != from && size[std::size_t(best)] == 0) empty.pop_back();
      if (best != from && size[std::size_t(from)] == 0) empty.push_back(from);
      tot[std::size_t(best)] += k;
      ++size[std::size_t(best)];
      for (int c : touched) linkTo[std::size_t(c)] = 0.0;
      linkTo[std::size_t(from)] = 0.0;
      if (best != from) {
        community[i] = best;
        moved = true;
      }
    }
    if (trace) trace->passModularity.push_back(level_modularity(g, community, gamma));
    if (!moved) break;
    movedAny = true;
  }
  return movedAny;
}

inline constexpr int kSweepPatience = 64;

// Kernighan-Lin sweeps. Each step makes the single best move among unlocked
// nodes, even a losing one, then locks that node; the sweep is cut back to its
// best prefix. A sweep ends after kSweepPatience steps without a new best.
// Sweeps repeat while they raise modularity. Returns whether anything changed.
inline bool kl_sweeps(const LevelGraph& g, std::vector<int>& community, double gamma) {
  const std::size_t n = g.adj.size();
  if (n < 2 || g.total == 0.0) return false;
  constexpr double kMinGain = 1e-12;
  std::vector<double> linkTo(n, 0.0);
  std::vector<int> touched;
  bool changed = false;

  while (true) {
    std::vector<double> tot(n, 0.0);
    std::vector<std::size_t> size(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      tot[std::size_t(community[i])] += g.degree[i];
      ++size[std::size_t(community[i])];
    }
    std::vector<char> locked(n, 0);
    std::vector<std::pair<std::uint32_t, int>> moves;  // node, previous community
    double running = 0, best = 0;
    std::size_t bestLength = 0;

    for (std::size_t step = 0; step < n && moves.size() - bestLength < std::size_t(kSweepPatience); ++step) {
      int emptyId = -1;
      for (std::size_t c = 0; c < n && emptyId < 0; ++c)
        if (size[c] == 0) emptyId = int(c);

      std::uint32_t pickNode = 0;
      int pickTarget = -1;
      double pickDelta = -std::numeric_limits<double>::infinity();
      for (std::uint32_t i = 0; i < n; ++i) {
        if (locked[i]) continue;
        const int from = community[i];
        const double k = g.degree[i];
        touched.clear();
        for (const auto& [j, w] : g.adj[i]) {
          int c = community[j];
          if (linkTo[std::size_t(c)] == 0.0) touched.push_back(c);
          linkTo[std::size_t(c)] += w;
        }
        const double stay = linkTo[std::size_t(from)] - gamma * k * (tot[std::size_t(from)] - k) / g.total;
        std::sort(touched.begin(), touched.end());
        for (int c : touched) {
          if (c == from) continue;
          double delta = linkTo[std::size_t(c)] - gamma * k * tot[std::size_t(c)] / g.total - stay;
          if (delta > pickDelta + kMinGain) {
            pickDelta = delta;
            pickNode = i;
            pickTarget = c;
          }
        }
        if (size[std::size_t(from)] > 1 && emptyId >= 0 && -stay > pickDelta + kMinGain) {
          pickDelta = -stay;
          pickNode = i;
          pickTarget = emptyId;
        }
        for (int c : touched) linkTo[std::size_t(c)] = 0.0;
      }
      if (pickTarget < 0) break;

      const int from = community[pickNode];
      tot[std::size_t(from)] -= g.degree[pickNode];
      --size[std::size_t(from)];
      tot[std::size_t(pickTarget)] += g.degree[pickNode];
      ++size[std::size_t(pickTarget)];
      community[pickNode] = pickTarget;
      locked[pickNode] = 1;
      moves.emplace_back(pickNode, from);
      running += pickDelta;
      if (running > best + kMinGain) {
        best = running;
        bestLength = moves.size();
      }
    }

    while (moves.size() > bestLength) {
      community[moves.back().first] = moves.back().second;
      moves.pop_back();
    }
    if (bestLength == 0) return changed;
    changed = true;
  }
}

// Renumbers communities densely in order of first appearance; returns the count.
inline int renumber(std::vector<int>& community) {
  std::vector<int> remap(community.size(), -1);
  int next = 0;
  for (int& c : community) {
    if (remap[std::size_t(c)] < 0) remap[std::size_t(c)] = next++;
    c = remap[std::size_t(c)];
  }
  return next;
}

inline LevelGraph aggregate(const LevelGraph& g, const std::vector<int>& community, int count) {
  LevelGraph out;
  out.adj.resize(std::size_t(count));
  out.self.assign(std::size_t(count), 0.0);
  std::vector<std::vector<std::uint32_t>> members(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < g.adj.size(); ++i) members[std::size_t(community[i])].push_back(std::uint32_t(i));

  std::vector<double> row(std::size_t(count), 0.0);
  std::vector<std::uint32_t> touched;
  for (std::size_t c = 0; c < std::size_t(count); ++c) {
    touched.clear();
    for (auto i : members[c]) {
      out.self[c] += g.self[i];
      for (const auto& [j, w] : g.adj[i]) {
        auto d = std::uint32_t(community[j]);
        if (d == c) {
          out.self[c] += w;
        } else {
          if (row[d] == 0.0) touched.push_back(d);
          row[d] += w;
        }
      }
    }
    std::sort(touched.begin(), touched.end());
    for (auto d : touched) {
      out.adj[c].emplace_back(d, row[d]);
      row[d] = 0.0;
    }
  }
  out.compute_degrees();
  return out;
}

inline LevelGraph level_graph(const SimilarityGraph& graph) {
  LevelGraph g;
  g.adj.resize(graph.size());
  g.self.assign(graph.size(), 0.0);
  for (std::size_t i = 0; i < graph.size(); ++i) g.adj[i] = graph.neighbours(i);
  g.compute_degrees();
  return g;
}

}  // namespace detail

/// Weighted modularity with resolution gamma:
/// Q = (1/2m) sum_ij [w_ij - gamma k_i k_j / 2m] delta(c_i, c_j). Zero when the graph has no weight.
inline double modularity(const SimilarityGraph& graph, const std::vector<int>& assignment, double resolution) {
  if (assignment.size() != graph.size()) fail("InvalidPartition", "assignment does not cover the graph");
  for (int c : assignment)
    if (c < 0 || std::size_t(c) >= assignment.size()) fail("InvalidPartition", "cluster id out of range");
  std::vector<int> community(assignment);
  detail::renumber(community);
  return detail::level_modularity(detail::level_graph(graph), community, resolution);
}

namespace detail {

// One Louvain run: local moves and aggregation until a level moves no node,
// then the coarsest partition is projected back through every level and
// refined by further local moves.
inline std::vector<int> louvain_once(const SimilarityGraph& graph, double resolution, std::mt19937_64& rng,
                                     LouvainTrace* trace) {
  std::vector<LevelGraph> levels{level_graph(graph)};
  std::vector<std::vector<int>> up;  // up[l][v]: node of level l+1 holding node v of level l

  auto identity = [](std::size_t n) {
    std::vector<int> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = int(i);
    return c;
  };
  if (trace) trace->levelModularity.push_back(level_modularity(levels[0], identity(graph.size()), resolution));

  if (levels[0].total > 0.0) {
    while (true) {
      const auto& level = levels.back();
      auto community = identity(level.adj.size());
      if (!local_moves(level, community, resolution, rng, trace)) break;
      int count = renumber(community);
      auto next = aggregate(level, community, count);
      up.push_back(std::move(community));
      levels.push_back(std::move(next));
      if (trace) trace->levelModularity.push_back(
          level_modularity(levels.back(), identity(levels.back().adj.size()), resolution));
      if (count == 1) break;
    }
  }

  // Project the coarsest partition down, refining at every finer level.
  auto community = identity(levels.back().adj.size());
  for (std::size_t l = up.size(); l-- > 0;) {
    std::vector<int> finer(levels[l].adj.size());
    for (std::size_t v = 0; v < finer.size(); ++v) finer[v] = community[std::size_t(up[l][v])];
    community = std::move(finer);
    local_moves(levels[l], community, resolution, rng, trace);
    if (trace) trace->levelModularity.push_back(level_modularity(levels[l], community, resolution));
  }

  return community;
}

}  // namespace detail

/// Louvain community detection with multilevel refinement, restarted
/// `restarts` times on one seeded random stream; the partition with the
/// highest modularity wins, the earliest on ties, and is then polished by
/// Kernighan-Lin sweeps over single-node moves. Deterministic for a fixed
/// (graph, resolution, seed, restarts).
inline Partition louvain(const SimilarityGraph& graph, double resolution, std::uint64_t seed = 0,
                         LouvainTrace* trace = nullptr, int restarts = kLouvainRestarts) {
  if (graph.size() == 0) fail("EmptyGraph", "cannot cluster an empty graph");
  if (!(resolution > 0.0)) fail("InvalidConfig", "resolution must be positive");
  if (restarts < 1) fail("InvalidConfig", "restarts must be at least 1");

  std::mt19937_64 rng(seed);
  Partition best;
  for (int r = 0; r < restarts; ++r) {
    LouvainTrace runTrace;
    Partition p;
    p.assignment = detail::louvain_once(graph, resolution, rng, trace ? &runTrace : nullptr);
    p.clusterCount = detail::renumber(p.assignment);
    p.resolution = resolution;
    p.seed = seed;
    p.modularity = modularity(graph, p.assignment, resolution);
    if (r == 0 || p.modularity > best.modularity) {
      best = std::move(p);
      if (trace) *trace = std::move(runTrace);
    }
  }
  auto base = detail::level_graph(graph);
  if (detail::kl_sweeps(base, best.assignment, resolution)) {
    best.clusterCount = detail::renumber(best.assignment);
    best.modularity = modularity(graph, best.assignment, resolution);
    if (trace) trace->levelModularity.push_back(best.modularity);
  }
  return best;
}

}  // namespace stmine
