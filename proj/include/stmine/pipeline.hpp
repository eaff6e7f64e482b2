#pragma once

// End-to-end run: ingest -> slice -> mine -> merge -> collapse -> graph ->
// louvain -> profiles -> summaries -> orders, plus the JSON payloads built
// from a finished run.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stmine/analytics.hpp"
#include "stmine/clustering.hpp"
#include "stmine/core.hpp"
#include "stmine/dedup.hpp"
#include "stmine/error.hpp"
#include "stmine/ingest.hpp"
#include "stmine/mining.hpp"

namespace stmine {

inline constexpr int kSchemaVersion = 1;

struct RunConfig {
  std::vector<std::string> attributeColumns;  // empty: every column except DATE and PLACE
  std::optional<Date> startDate;              // empty: earliest kept event
  std::optional<Date> endDate;                // empty: latest kept event
  Granularity granularity = Granularity::Month;
  double minSupport = 0.05;
  double minLift = 1.05;
  double resolution = 1.0;
  std::uint64_t seed = 0;
  std::string regionIdProperty = "name";
  std::size_t maxRuleLen = 5;
  std::string datasetNoun = "dataset";

  void validate() const {
    if (startDate && endDate && *endDate < *startDate)
      fail("InvalidConfig", "endDate " + endDate->str() + " precedes startDate " + startDate->str());
    if (!(minSupport > 0.0 && minSupport <= 1.0)) fail("InvalidConfig", "minSupport must lie in (0, 1]");
    if (!(minLift >= 0.0)) fail("InvalidConfig", "minLift must be non-negative");
    if (!(resolution > 0.0)) fail("InvalidConfig", "resolution must be positive");
    if (maxRuleLen < 2) fail("InvalidConfig", "maxRuleLen must be at least 2");
  }

  MiningConfig mining() const { return MiningConfig{minSupport, minLift, maxRuleLen}; }
};

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j{{"attributeColumns", c.attributeColumns},
                   {"granularity", to_string(c.granularity)},
                   {"minSupport", c.minSupport},
                   {"minLift", c.minLift},
                   {"resolution", c.resolution},
                   {"seed", c.seed},
                   {"regionIdProperty", c.regionIdProperty},
                   {"maxRuleLen", c.maxRuleLen},
                   {"datasetNoun", c.datasetNoun}};
  j["startDate"] = c.startDate ? nlohmann::json(c.startDate->str()) : nlohmann::json();
  j["endDate"] = c.endDate ? nlohmann::json(c.endDate->str()) : nlohmann::json();
  return j;
}

/// Reads a config object; absent fields keep their defaults.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail("InvalidConfig", "config must be a JSON object");
  RunConfig c;
  try {
    if (j.contains("attributeColumns")) c.attributeColumns = j["attributeColumns"].get<std::vector<std::string>>();
    if (j.contains("startDate") && !j["startDate"].is_null())
      c.startDate = Date::parse_or_throw(j["startDate"].get<std::string>(), "InvalidConfig");
    if (j.contains("endDate") && !j["endDate"].is_null())
      c.endDate = Date::parse_or_throw(j["endDate"].get<std::string>(), "InvalidConfig");
    if (j.contains("granularity")) c.granularity = parse_granularity(j["granularity"].get<std::string>());
    if (j.contains("minSupport")) c.minSupport = j["minSupport"].get<double>();
    if (j.contains("minLift")) c.minLift = j["minLift"].get<double>();
    if (j.contains("resolution")) c.resolution = j["resolution"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("regionIdProperty")) c.regionIdProperty = j["regionIdProperty"].get<std::string>();
    if (j.contains("maxRuleLen")) c.maxRuleLen = j["maxRuleLen"].get<std::size_t>();
    if (j.contains("datasetNoun")) c.datasetNoun = j["datasetNoun"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail("InvalidConfig", std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

enum class Stage { Mining, Clustering };

struct RunResult {
  RunConfig config;  // with the date range resolved
  DatasetDescriptor descriptor;
  IngestReport report;
  std::vector<Event> events;
  std::vector<Region> regions;
  std::vector<TimeSlice> slices;
  std::vector<std::size_t> sliceEventCounts;
  std::vector<CanonicalRule> rules;  // collapsed, sorted by key
  Partition partition;
  std::vector<RuleProfile> ruleProfiles;     // parallel to rules
  std::vector<RuleProfile> clusterProfiles;  // by cluster id
  std::vector<ClusterSummary> summaries;     // by cluster id
  std::vector<int> clusterOrder;
  std::vector<std::vector<std::string>> ruleOrders;  // by cluster id
  std::shared_ptr<const OccurrenceIndex> index;

  std::vector<const CanonicalRule*> cluster_rules(int c) const {
    std::vector<const CanonicalRule*> out;
    for (std::size_t i = 0; i < rules.size(); ++i)
      if (partition.assignment[i] == c) out.push_back(&rules[i]);
    return out;
  }

  const CanonicalRule* find_rule(const std::string& key) const {
    auto it = std::lower_bound(rules.begin(), rules.end(), key,
                               [](const CanonicalRule& r, const std::string& k) { return r.key < k; });
    return it != rules.end() && it->key == key ? &*it : nullptr;
  }

  std::size_t rule_position(const CanonicalRule* r) const { return std::size_t(r - rules.data()); }

  void require_cluster(int c) const {
    if (c < 0 || c >= partition.clusterCount) fail("UnknownCluster", "no cluster " + std::to_string(c));
  }
};

/// Runs the whole pipeline on already-uploaded bytes. `geojson` may be empty.
inline RunResult run_pipeline(std::string_view csv, std::string_view geojson, RunConfig config,
                              const std::function<void(Stage)>& progress = {}) {
  config.validate();
  RunResult out;

  if (config.attributeColumns.empty()) {
    auto header = parse_csv(csv).front();
    for (const auto& col : header)
      if (col != kDateColumn && col != kPlaceColumn) config.attributeColumns.push_back(col);
  }
  auto ingest = parse_events_csv(csv, config.attributeColumns);
  out.descriptor = std::move(ingest.descriptor);
  out.report = std::move(ingest.report);
  out.events = std::move(ingest.events);
  if (!geojson.empty()) {
    out.regions = parse_regions_geojson(geojson, config.regionIdProperty);
    out.report.unmatchedPlaces = validate_region_coverage(out.events, out.regions);
  }

  if (!config.startDate || !config.endDate) {
    auto [lo, hi] = std::minmax_element(out.events.begin(), out.events.end(),
                                        [](const Event& a, const Event& b) { return a.date < b.date; });
    if (!config.startDate) config.startDate = lo->date;
    if (!config.endDate) config.endDate = hi->date;
  }
  config.validate();
  out.config = config;

  if (progress) progress(Stage::Mining);
  auto sliced = slice_partition(out.events, *config.startDate, *config.endDate, config.granularity);
  out.slices = sliced.slices;
  out.sliceEventCounts = sliced.sliceEventCounts;
  auto perSlice = mine_slices(sliced, config.mining());
  out.rules = collapse_superfluous(merge_across_slices(perSlice));

  if (progress) progress(Stage::Clustering);
  auto index = std::make_shared<OccurrenceIndex>(out.events, out.slices);
  out.index = index;
  if (!out.rules.empty()) {
    auto graph = build_similarity_graph(out.rules);
    out.partition = louvain(graph, config.resolution, config.seed);
  } else {
    out.partition.resolution = config.resolution;
    out.partition.seed = config.seed;
  }

  out.ruleProfiles.reserve(out.rules.size());
  for (const auto& r : out.rules) out.ruleProfiles.push_back(rule_profile(r, *index));

  std::vector<std::pair<int, std::vector<double>>> clusterSeries;
  for (int c = 0; c < out.partition.clusterCount; ++c) {
    auto members = out.cluster_rules(c);
    std::vector<const RuleProfile*> profiles;
    std::vector<std::pair<std::string, std::vector<double>>> ruleSeries;
    for (const auto* r : members) {
      const auto& p = out.ruleProfiles[out.rule_position(r)];
      profiles.push_back(&p);
      ruleSeries.emplace_back(r->key, as_series(p));
    }
    out.clusterProfiles.push_back(cluster_profile(members, *index, "cluster:" + std::to_string(c)));
    out.summaries.push_back(cluster_summary(c, members, profiles));
    clusterSeries.emplace_back(c, as_series(out.clusterProfiles.back()));
    out.ruleOrders.push_back(seriation_order(std::move(ruleSeries)));
  }
  out.clusterOrder = seriation_order(std::move(clusterSeries));
  return out;
}

// ---------------------------------------------------------------------------
// JSON payloads

inline nlohmann::json to_json(const Item& item) { return item.str(); }

inline nlohmann::json to_json(const ItemSet& s) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& item : s) arr.push_back(item.str());
  return arr;
}

inline nlohmann::json to_json(const RuleProfile& p, const std::vector<TimeSlice>& slices) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [cell, n] : p.counts)
    cells.push_back({{"slice", slices[std::size_t(cell.first)].label}, {"place", cell.second}, {"count", n}});
  return {{"grandTotal", p.grandTotal}, {"sliceTotals", p.sliceTotals}, {"placeTotals", p.placeTotals},
          {"cells", cells}};
}

inline nlohmann::json to_json(const ClusterSummary& s) {
  return {{"clusterId", s.clusterId},       {"ruleCount", s.ruleCount},           {"meanLift", s.meanLift},
          {"meanSupport", s.meanSupport}, {"meanConfidence", s.meanConfidence}, {"meanOccurrences", s.meanOccurrences}};
}

inline nlohmann::json rule_json(const RunResult& r, std::size_t i) {
  const auto& c = r.rules[i];
  nlohmann::json metrics = nlohmann::json::array();
  for (const auto& [s, m] : c.rule.slice_metrics())
    metrics.push_back({{"slice", r.slices[std::size_t(s)].label},
                       {"support", m.support},
                       {"confidence", m.confidence},
                       {"lift", m.lift},
                       {"count", m.unionCount},
                       {"transactions", m.transactions}});
  return {{"key", c.key},
          {"antecedent", to_json(c.rule.antecedent())},
          {"consequent", to_json(c.rule.consequent())},
          {"cluster", r.partition.assignment[i]},
          {"meanLift", c.mean_lift()},
          {"meanSupport", c.mean_support()},
          {"meanConfidence", c.mean_confidence()},
          {"metrics", metrics},
          {"profile", to_json(r.ruleProfiles[i], r.slices)}};
}

/// The full run export, versioned by "schemaVersion".
inline nlohmann::json artifact_json(const RunResult& r) {
  nlohmann::json slices = nlohmann::json::array();
  for (const auto& s : r.slices)
    slices.push_back({{"index", s.index},
                      {"label", s.label},
                      {"start", s.start.str()},
                      {"end", s.end.str()},
                      {"eventCount", r.sliceEventCounts[std::size_t(s.index)]}});
  nlohmann::json rules = nlohmann::json::array();
  for (std::size_t i = 0; i < r.rules.size(); ++i) rules.push_back(rule_json(r, i));
  nlohmann::json clusters = nlohmann::json::array();
  for (int c = 0; c < r.partition.clusterCount; ++c) {
    nlohmann::json keys = nlohmann::json::array();
    for (const auto* rule : r.cluster_rules(c)) keys.push_back(rule->key);
    clusters.push_back({{"id", c},
                        {"rules", keys},
                        {"summary", to_json(r.summaries[std::size_t(c)])},
                        {"profile", to_json(r.clusterProfiles[std::size_t(c)], r.slices)}});
  }
  nlohmann::json ruleOrders = nlohmann::json::object();
  for (int c = 0; c < r.partition.clusterCount; ++c) ruleOrders[std::to_string(c)] = r.ruleOrders[std::size_t(c)];
  return {{"schemaVersion", kSchemaVersion},
          {"config", to_json(r.config)},
          {"ingest", to_json(r.report)},
          {"slices", slices},
          {"rules", rules},
          {"clusters", clusters},
          {"partition",
           {{"resolution", r.partition.resolution},
            {"seed", r.partition.seed},
            {"modularity", r.partition.modularity},
            {"clusterCount", r.partition.clusterCount}}},
          {"orders", {{"clusters", r.clusterOrder}, {"rules", ruleOrders}}}};
}

inline nlohmann::json to_json(const AttributeMatrix& m) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : m.columns) cols.push_back({{"attribute", c.attribute()}, {"value", c.value()}, {"label", c.str()}});
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : m.cells)
    cells.push_back({{"row", c.row}, {"column", c.column}, {"frequency", c.frequency}, {"role", to_string(c.role)}});
  return {{"level", m.level}, {"rows", m.rows}, {"columns", cols}, {"cells", cells}};
}

inline AttributeMatrix attribute_matrix(const RunResult& r, const std::string& level, std::optional<int> cluster) {
  if (level == "cluster") return attribute_matrix_clusters(r.rules, r.partition, r.clusterOrder);
  if (level != "rule") fail("InvalidLevel", "level must be 'cluster' or 'rule'");
  if (!cluster) fail("UnknownCluster", "rule level needs a selected cluster");
  r.require_cluster(*cluster);
  return attribute_matrix_rules(r.rules, r.partition, *cluster, r.ruleOrders[std::size_t(*cluster)]);
}

/// Heatmap rows in the same order as the attribute matrix of the same level.
inline nlohmann::json heatmap_json(const RunResult& r, const std::string& level, std::optional<int> cluster) {
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& s : r.slices) labels.push_back(s.label);
  nlohmann::json rows = nlohmann::json::array();
  if (level == "cluster") {
    for (int c : r.clusterOrder)
      rows.push_back({{"id", std::to_string(c)}, {"counts", r.clusterProfiles[std::size_t(c)].sliceTotals}});
  } else if (level == "rule") {
    if (!cluster) fail("UnknownCluster", "rule level needs a selected cluster");
    r.require_cluster(*cluster);
    for (const auto& key : r.ruleOrders[std::size_t(*cluster)])
      rows.push_back({{"id", key}, {"counts", r.ruleProfiles[r.rule_position(r.find_rule(key))].sliceTotals}});
  } else {
    fail("InvalidLevel", "level must be 'cluster' or 'rule'");
  }
  nlohmann::json order = nlohmann::json::array();
  for (const auto& row : rows) order.push_back(row["id"]);
  return {{"level", level}, {"slices", labels}, {"rows", rows}, {"order", order}};
}

struct MapSelection {
  std::optional<int> cluster;
  std::optional<std::string> ruleKey;
  std::vector<std::string> sliceLabels;  // empty: every slice
};

/// Occurrences per place for the selection (a rule, a cluster, or every
/// cluster when nothing is selected), optionally restricted to some slices.
/// Every region and event place is listed, zero counts included.
inline nlohmann::json map_json(const RunResult& r, const MapSelection& sel) {
  std::vector<std::uint32_t> events;
  if (sel.ruleKey) {
    const auto* rule = r.find_rule(*sel.ruleKey);
    if (!rule) fail("UnknownRule", "no rule " + *sel.ruleKey);
    if (sel.cluster && r.partition.assignment[r.rule_position(rule)] != *sel.cluster)
      fail("UnknownRule", "rule " + *sel.ruleKey + " is not in cluster " + std::to_string(*sel.cluster));
    events = r.index->matching(rule_union_itemset(rule->rule));
  } else if (sel.cluster) {
    r.require_cluster(*sel.cluster);
    events = cluster_events(r.cluster_rules(*sel.cluster), *r.index);
  } else {
    std::vector<const CanonicalRule*> all;
    for (const auto& rule : r.rules) all.push_back(&rule);
    events = cluster_events(all, *r.index);
  }

  std::set<int> slices;
  for (const auto& label : sel.sliceLabels) {
    auto it = std::find_if(r.slices.begin(), r.slices.end(), [&](const TimeSlice& s) { return s.label == label; });
    if (it == r.slices.end()) fail("UnknownSlice", "no slice labelled " + label);
    slices.insert(it->index);
  }

  std::map<std::string, std::uint64_t> counts;
  for (const auto& region : r.regions) counts[region.id] = 0;
  for (const auto& place : r.index->places()) counts[place] = 0;
  std::uint64_t total = 0;
  for (auto e : events) {
    if (!slices.empty() && !slices.contains(r.index->slice_of(e))) continue;
    ++counts[r.index->place_of(e)];
    ++total;
  }
  nlohmann::json selection = nlohmann::json::object();
  if (sel.cluster) selection["cluster"] = *sel.cluster;
  if (sel.ruleKey) selection["rule"] = *sel.ruleKey;
  selection["slices"] = sel.sliceLabels;
  return {{"selection", selection}, {"places", counts}, {"total", total}};
}

inline double summary_metric(const ClusterSummary& s, const std::string& name) {
  if (name == "ruleCount") return double(s.ruleCount);
  if (name == "meanLift") return s.meanLift;
  if (name == "meanSupport") return s.meanSupport;
  if (name == "meanConfidence") return s.meanConfidence;
  if (name == "meanOccurrences") return s.meanOccurrences;
  fail("InvalidMetric", "unknown metric '" + name + "'");
}

inline nlohmann::json scatter_json(const RunResult& r, const std::string& x, const std::string& y) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& s : r.summaries)
    points.push_back({{"clusterId", s.clusterId}, {"x", summary_metric(s, x)}, {"y", summary_metric(s, y)}});
  return {{"x", x},
          {"y", y},
          {"metrics", {"ruleCount", "meanLift", "meanSupport", "meanConfidence", "meanOccurrences"}},
          {"points", points}};
}

}  // namespace stmine
