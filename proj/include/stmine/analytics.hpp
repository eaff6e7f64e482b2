#pragma once

// Occurrence profiles, cluster summaries, seriation and attribute matrices
// backing the coordinated views.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stmine/clustering.hpp"
#include "stmine/core.hpp"
#include "stmine/dedup.hpp"
#include "stmine/error.hpp"
#include "stmine/mining.hpp"

namespace stmine {

// ---------------------------------------------------------------------------
// Occurrence index

/// Inverted index from items to the in-range events holding them. An event
/// "matches" an itemset when its attributes contain every item.
class OccurrenceIndex {
 public:
  OccurrenceIndex(const std::vector<Event>& events, std::vector<TimeSlice> slices)
      : slices_(std::move(slices)) {
    for (const auto& e : events) places_.push_back(e.place);
    std::sort(places_.begin(), places_.end());
    places_.erase(std::unique(places_.begin(), places_.end()), places_.end());

    for (std::size_t i = 0; i < events.size(); ++i) {
      int s = slice_index_of(slices_, events[i].date);
      if (s < 0) continue;
      auto id = std::uint32_t(events_.size());
      events_.push_back({s,
                         std::uint32_t(std::lower_bound(places_.begin(), places_.end(), events[i].place) -
                                       places_.begin()),
                         events[i].date});
      all_.push_back(id);
      for (const auto& item : events[i].attribs) postings_[item].push_back(id);
    }
  }

  const std::vector<TimeSlice>& slices() const { return slices_; }
  const std::vector<std::string>& places() const { return places_; }
  int slice_of(std::uint32_t e) const { return events_[e].slice; }
  const std::string& place_of(std::uint32_t e) const { return places_[events_[e].place]; }
  Date date_of(std::uint32_t e) const { return events_[e].date; }

  /// Sorted ids of in-range events containing `items`.
  std::vector<std::uint32_t> matching(const ItemSet& items) const {
    if (items.empty()) return all_;
    std::vector<const std::vector<std::uint32_t>*> lists;
    for (const auto& item : items) {
      auto it = postings_.find(item);
      if (it == postings_.end()) return {};
      lists.push_back(&it->second);
    }
    std::sort(lists.begin(), lists.end(), [](auto* a, auto* b) { return a->size() < b->size(); });
    std::vector<std::uint32_t> out = *lists.front();
    std::vector<std::uint32_t> tmp;
    for (std::size_t k = 1; k < lists.size() && !out.empty(); ++k) {
      tmp.clear();
      std::set_intersection(out.begin(), out.end(), lists[k]->begin(), lists[k]->end(), std::back_inserter(tmp));
      out.swap(tmp);
    }
    return out;
  }

 private:
  struct Entry {
    int slice;
    std::uint32_t place;
    Date date;
  };
  std::vector<TimeSlice> slices_;
  std::vector<std::string> places_;
  std::vector<Entry> events_;
  std::vector<std::uint32_t> all_;
  std::map<Item, std::vector<std::uint32_t>> postings_;
};

// ---------------------------------------------------------------------------
// Profiles

struct RuleProfile {
  std::string ruleKey;
  std::map<std::pair<int, std::string>, std::uint64_t> counts;  // non-zero cells only
  std::vector<std::uint64_t> sliceTotals;                        // indexed by slice
  std::map<std::string, std::uint64_t> placeTotals;              // non-zero places only
  std::uint64_t grandTotal = 0;

  std::uint64_t count(int slice, const std::string& place) const {
    auto it = counts.find({slice, place});
    return it == counts.end() ? 0 : it->second;
  }
};

inline RuleProfile profile_from_events(const OccurrenceIndex& index, std::span<const std::uint32_t> eventIds,
                                       std::string key) {
  RuleProfile p;
  p.ruleKey = std::move(key);
  p.sliceTotals.assign(index.slices().size(), 0);
  for (auto e : eventIds) {
    int s = index.slice_of(e);
    const auto& place = index.place_of(e);
    ++p.counts[{s, place}];
    ++p.sliceTotals[std::size_t(s)];
    ++p.placeTotals[place];
    ++p.grandTotal;
  }
  return p;
}

/// Counts events containing the rule's full union itemset in every
/// (slice, place) cell, whether or not the rule was generated in that slice.
inline RuleProfile rule_profile(const CanonicalRule& rule, const OccurrenceIndex& index) {
  return profile_from_events(index, index.matching(rule_union_itemset(rule.rule)), rule.key);
}

inline RuleProfile rule_profile(const CanonicalRule& rule, const std::vector<Event>& events,
                                const std::vector<TimeSlice>& slices) {
  return rule_profile(rule, OccurrenceIndex(events, slices));
}

/// Events matching at least one member rule, each counted once.
inline std::vector<std::uint32_t> cluster_events(std::span<const CanonicalRule* const> members,
                                                 const OccurrenceIndex& index) {
  std::vector<std::uint32_t> acc, tmp;
  for (const auto* r : members) {
    auto m = index.matching(rule_union_itemset(r->rule));
    tmp.clear();
    std::set_union(acc.begin(), acc.end(), m.begin(), m.end(), std::back_inserter(tmp));
    acc.swap(tmp);
  }
  return acc;
}

inline RuleProfile cluster_profile(std::span<const CanonicalRule* const> members, const OccurrenceIndex& index,
                                   std::string key) {
  if (members.empty()) fail("EmptyCluster", "cluster has no rules");
  return profile_from_events(index, cluster_events(members, index), std::move(key));
}

// ---------------------------------------------------------------------------
// Cluster summaries

struct ClusterSummary {
  int clusterId = 0;
  std::size_t ruleCount = 0;
  double meanLift = 0;
  double meanSupport = 0;
  double meanConfidence = 0;
  double meanOccurrences = 0;
};

/// Unweighted means over member rules of their per-rule mean slice metrics
/// and of their occurrence totals.
inline ClusterSummary cluster_summary(int clusterId, std::span<const CanonicalRule* const> members,
                                      std::span<const RuleProfile* const> profiles) {
  if (members.empty()) fail("EmptyCluster", "cluster has no rules");
  if (members.size() != profiles.size()) fail("InvalidArgument", "one profile per member rule is required");
  ClusterSummary s;
  s.clusterId = clusterId;
  s.ruleCount = members.size();
  for (std::size_t i = 0; i < members.size(); ++i) {
    s.meanLift += members[i]->mean_lift();
    s.meanSupport += members[i]->mean_support();
    s.meanConfidence += members[i]->mean_confidence();
    s.meanOccurrences += double(profiles[i]->grandTotal);
  }
  const double n = double(members.size());
  s.meanLift /= n;
  s.meanSupport /= n;
  s.meanConfidence /= n;
  s.meanOccurrences /= n;
  return s;
}

// ---------------------------------------------------------------------------
// Seriation

/// Orders rows so that rows with similar temporal shape sit together.
///
/// Rows are L2-normalised (all-zero rows stay zero) and merged bottom-up with
/// average linkage on Euclidean distance. Each merge concatenates the two
/// leaf sequences in whichever of the four orientations puts the closest
/// pair of endpoints next to each other. Ties resolve toward smaller ids:
/// the pair whose smallest member id is lowest merges first, and unreversed
/// orientations win.
template <class Id>
std::vector<Id> seriation_order(std::vector<std::pair<Id, std::vector<double>>> rows) {
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  const std::size_t n = rows.size();
  if (n == 0) return {};
  const std::size_t dim = rows.front().second.size();
  for (const auto& r : rows)
    if (r.second.size() != dim) fail("InvalidArgument", "seriation rows differ in length");

  std::vector<std::vector<double>> unit(n);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0;
    for (double v : rows[i].second) norm += v * v;
    norm = std::sqrt(norm);
    unit[i] = rows[i].second;
    if (norm > 0)
      for (double& v : unit[i]) v /= norm;
  }
  std::vector<double> leafDist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double d = 0;
      for (std::size_t k = 0; k < dim; ++k) d += (unit[i][k] - unit[j][k]) * (unit[i][k] - unit[j][k]);
      leafDist[i * n + j] = leafDist[j * n + i] = std::sqrt(d);
    }
  auto leaf = [&](std::size_t a, std::size_t b) { return leafDist[a * n + b]; };

  struct Cluster {
    std::vector<std::size_t> leaves;  // current order
    std::size_t minId;
    bool alive = true;
  };
  std::vector<Cluster> clusters;
  for (std::size_t i = 0; i < n; ++i) clusters.push_back({{i}, i, true});
  std::vector<double> link(leafDist);  // cluster-to-cluster average linkage, by slot

  for (std::size_t step = 1; step < n; ++step) {
    std::size_t a = n, b = n;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (!clusters[i].alive) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!clusters[j].alive) continue;
        double d = link[i * n + j];
        auto lo = std::min(clusters[i].minId, clusters[j].minId);
        auto hi = std::max(clusters[i].minId, clusters[j].minId);
        bool take = a == n || d < best;
        if (!take && d == best) {
          auto blo = std::min(clusters[a].minId, clusters[b].minId);
          auto bhi = std::max(clusters[a].minId, clusters[b].minId);
          take = std::pair(lo, hi) < std::pair(blo, bhi);
        }
        if (take) {
          best = d;
          a = i;
          b = j;
        }
      }
    }
    if (clusters[b].minId < clusters[a].minId) std::swap(a, b);

    auto& left = clusters[a].leaves;
    auto& right = clusters[b].leaves;
    const double options[4] = {leaf(left.back(), right.front()), leaf(left.back(), right.back()),
                               leaf(left.front(), right.front()), leaf(left.front(), right.back())};
    int pick = 0;
    for (int o = 1; o < 4; ++o)
      if (options[o] < options[pick]) pick = o;
    if (pick == 2 || pick == 3) std::reverse(left.begin(), left.end());
    if (pick == 1 || pick == 3) std::reverse(right.begin(), right.end());

    const double sa = double(left.size()), sb = double(right.size());
    for (std::size_t k = 0; k < n; ++k) {
      if (!clusters[k].alive || k == a || k == b) continue;
      double d = (sa * link[a * n + k] + sb * link[b * n + k]) / (sa + sb);
      link[a * n + k] = link[k * n + a] = d;
    }
    left.insert(left.end(), right.begin(), right.end());
    clusters[a].minId = std::min(clusters[a].minId, clusters[b].minId);
    clusters[b].alive = false;
    right.clear();
  }

  std::vector<Id> out;
  out.reserve(n);
  for (const auto& c : clusters)
    if (c.alive)
      for (auto i : c.leaves) out.push_back(rows[i].first);
  return out;
}

inline std::vector<double> as_series(const RuleProfile& p) {
  return std::vector<double>(p.sliceTotals.begin(), p.sliceTotals.end());
}

// ---------------------------------------------------------------------------
// Attribute matrix

enum class Role { Antecedent, Consequent, Mixed };

inline std::string to_string(Role r) {
  switch (r) {
    case Role::Antecedent: return "antecedent";
    case Role::Consequent: return "consequent";
    case Role::Mixed: return "mixed";
  }
  return "mixed";
}

struct MatrixCell {
  std::size_t row = 0;
  std::size_t column = 0;
  double frequency = 0;
  Role role = Role::Antecedent;
};

struct AttributeMatrix {
  std::string level;              // "cluster" or "rule"
  std::vector<std::string> rows;  // cluster ids or rule keys, in display order
  std::vector<Item> columns;      // canonical order
  std::vector<MatrixCell> cells;  // row-major
};

/// Every item that appears in at least one rule, in canonical order.
inline std::vector<Item> matrix_columns(std::span<const CanonicalRule> rules) {
  std::vector<Item> cols;
  for (const auto& r : rules) {
    cols.insert(cols.end(), r.rule.antecedent().begin(), r.rule.antecedent().end());
    cols.insert(cols.end(), r.rule.consequent().begin(), r.rule.consequent().end());
  }
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  return cols;
}

/// One row per cluster in `clusterOrder`. Frequency is the fraction of the
/// cluster's rules holding the item on either side; the role is mixed when
/// the item appears on both sides across the cluster.
inline AttributeMatrix attribute_matrix_clusters(std::span<const CanonicalRule> rules, const Partition& partition,
                                                 const std::vector<int>& clusterOrder) {
  AttributeMatrix m;
  m.level = "cluster";
  m.columns = matrix_columns(rules);
  auto members = partition.members();
  for (std::size_t row = 0; row < clusterOrder.size(); ++row) {
    int c = clusterOrder[row];
    if (c < 0 || c >= partition.clusterCount) fail("UnknownCluster", "no cluster " + std::to_string(c));
    m.rows.push_back(std::to_string(c));
    const auto& ids = members[std::size_t(c)];
    std::map<Item, std::pair<std::size_t, std::size_t>> sides;  // item -> (antecedent uses, consequent uses)
    for (auto i : ids) {
      for (const auto& it : rules[i].rule.antecedent()) ++sides[it].first;
      for (const auto& it : rules[i].rule.consequent()) ++sides[it].second;
    }
    for (const auto& [item, uses] : sides) {
      auto col = std::size_t(std::lower_bound(m.columns.begin(), m.columns.end(), item) - m.columns.begin());
      Role role = uses.second == 0 ? Role::Antecedent : uses.first == 0 ? Role::Consequent : Role::Mixed;
      m.cells.push_back({row, col, double(uses.first + uses.second) / double(ids.size()), role});
    }
  }
  return m;
}

/// Rules of one cluster, in `ruleOrder` (canonical keys); columns match the cluster-level layout.
inline AttributeMatrix attribute_matrix_rules(std::span<const CanonicalRule> rules, const Partition& partition,
                                              int clusterId, const std::vector<std::string>& ruleOrder) {
  if (clusterId < 0 || clusterId >= partition.clusterCount)
    fail("UnknownCluster", "no cluster " + std::to_string(clusterId));
  AttributeMatrix m;
  m.level = "rule";
  m.columns = matrix_columns(rules);
  std::map<std::string, std::size_t> byKey;
  for (std::size_t i = 0; i < rules.size(); ++i)
    if (partition.assignment[i] == clusterId) byKey.emplace(rules[i].key, i);
  for (std::size_t row = 0; row < ruleOrder.size(); ++row) {
    auto found = byKey.find(ruleOrder[row]);
    if (found == byKey.end()) fail("UnknownRule", "rule " + ruleOrder[row] + " is not in cluster " + std::to_string(clusterId));
    const auto& rule = rules[found->second].rule;
    m.rows.push_back(found->first);
    std::vector<MatrixCell> cells;
    auto add = [&](const ItemSet& side, Role role) {
      for (const auto& item : side) {
        auto col = std::size_t(std::lower_bound(m.columns.begin(), m.columns.end(), item) - m.columns.begin());
        cells.push_back({row, col, 1.0, role});
      }
    };
    add(rule.antecedent(), Role::Antecedent);
    add(rule.consequent(), Role::Consequent);
    std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) { return a.column < b.column; });
    m.cells.insert(m.cells.end(), cells.begin(), cells.end());
  }
  return m;
}

}  // namespace stmine
