#pragma once

// Cross-slice rule merging and superfluous-rule reduction.

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "stmine/core.hpp"
#include "stmine/error.hpp"

namespace stmine {

/// A rule merged across slices; metrics exist for the slices it was generated in.
struct CanonicalRule {
  Rule rule;
  std::string key;
  double meanLift = 0;

  std::vector<int> present_slices() const {
    std::vector<int> out;
    for (const auto& [s, m] : rule.slice_metrics()) out.push_back(s);
    return out;
  }

  template <class Field>
  double mean_of(Field field) const {
    const auto& metrics = rule.slice_metrics();
    if (metrics.empty()) return 0;
    double sum = 0;
    for (const auto& [s, m] : metrics) sum += m.*field;
    return sum / double(metrics.size());
  }

  double mean_support() const { return mean_of(&SliceMetrics::support); }
  double mean_confidence() const { return mean_of(&SliceMetrics::confidence); }
  double mean_lift() const { return mean_of(&SliceMetrics::lift); }

  static CanonicalRule from(Rule rule) {
    CanonicalRule c{std::move(rule), {}, 0};
    c.key = canonical_rule_key(c.rule);
    c.meanLift = c.mean_lift();
    return c;
  }
};

/// One entry per canonical key, sorted by key; each carries the union of its
/// per-slice metrics.
inline std::vector<CanonicalRule> merge_across_slices(const std::map<int, std::vector<Rule>>& perSlice) {
  std::map<std::string, Rule> merged;
  for (const auto& [slice, rules] : perSlice) {
    for (const auto& rule : rules) {
      auto key = canonical_rule_key(rule);
      auto [it, inserted] = merged.try_emplace(key, rule.antecedent(), rule.consequent());
      auto& target = it->second.slice_metrics();
      for (const auto& [s, m] : rule.slice_metrics()) {
        auto [slot, fresh] = target.emplace(s, m);
        if (!fresh && !(slot->second == m))
          fail("ConflictingMetrics", "rule " + key + " has two different metric sets for slice " +
                                         std::to_string(s));
      }
    }
  }
  std::vector<CanonicalRule> out;
  out.reserve(merged.size());
  for (auto& [key, rule] : merged) out.push_back(CanonicalRule::from(std::move(rule)));
  return out;
}

/// Keeps one rule per union itemset: highest mean lift, then larger
/// antecedent, then smallest canonical key. Output sorted by key.
inline std::vector<CanonicalRule> collapse_superfluous(const std::vector<CanonicalRule>& canon) {
  auto better = [](const CanonicalRule& a, const CanonicalRule& b) {
    if (a.meanLift != b.meanLift) return a.meanLift > b.meanLift;
    if (a.rule.antecedent().size() != b.rule.antecedent().size())
      return a.rule.antecedent().size() > b.rule.antecedent().size();
    return a.key < b.key;
  };
  std::map<ItemSet, const CanonicalRule*> best;
  for (const auto& c : canon) {
    auto [it, inserted] = best.try_emplace(rule_union_itemset(c.rule), &c);
    if (!inserted && better(c, *it->second)) it->second = &c;
  }
  std::vector<CanonicalRule> out;
  out.reserve(best.size());
  for (const auto& [u, c] : best) out.push_back(*c);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
  return out;
}

/// Inverse of merge_across_slices: per-slice rule lists carrying one slice each.
inline std::map<int, std::vector<Rule>> split_by_slice(const std::vector<CanonicalRule>& canon) {
  std::map<int, std::vector<Rule>> out;
  for (const auto& c : canon)
    for (const auto& [s, m] : c.rule.slice_metrics())
      out[s].emplace_back(c.rule.antecedent(), c.rule.consequent(), std::map<int, SliceMetrics>{{s, m}});
  return out;
}

}  // namespace stmine
