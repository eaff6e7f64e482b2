#pragma once

// Shared vocabulary: items, itemsets, rules, time slices and regions.

#include <algorithm>
#include <cctype>
#include <compare>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stmine/date.hpp"
#include "stmine/error.hpp"

namespace stmine {

namespace detail {

inline std::string_view trim(std::string_view s) {
  auto ws = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

// Backslash-escape the characters that delimit canonical keys.
inline void append_escaped(std::string& out, std::string_view s) {
  for (char c : s) {
    if (c == '\\' || c == ',' || c == '=' || c == '>') out.push_back('\\');
    out.push_back(c);
  }
}

}  // namespace detail

/// One attribute-value pair, rendered "attribute:value".
class Item {
 public:
  Item() = default;
  Item(std::string attribute, std::string value)
      : attribute_(std::move(attribute)), value_(std::move(value)) {
    if (detail::trim(attribute_).empty() || detail::trim(value_).empty())
      fail("InvalidItem", "item attribute and value must be non-empty");
    if (attribute_.find(':') != std::string::npos)
      fail("InvalidItem", "attribute name '" + attribute_ + "' must not contain ':'");
  }

  /// Splits at the first ':'.
  static Item parse(std::string_view text) {
    auto pos = text.find(':');
    if (pos == std::string_view::npos) fail("InvalidItem", "missing ':' in '" + std::string(text) + "'");
    return Item(std::string(text.substr(0, pos)), std::string(text.substr(pos + 1)));
  }

  const std::string& attribute() const { return attribute_; }
  const std::string& value() const { return value_; }
  std::string str() const { return attribute_ + ":" + value_; }

  auto operator<=>(const Item&) const = default;

 private:
  std::string attribute_;
  std::string value_;
};

/// Sorted, duplicate-free set of items holding at most one value per attribute.
class ItemSet {
 public:
  using const_iterator = std::vector<Item>::const_iterator;

  ItemSet() = default;
  ItemSet(std::initializer_list<Item> items) : ItemSet(std::vector<Item>(items)) {}
  explicit ItemSet(std::vector<Item> items) : items_(std::move(items)) {
    std::sort(items_.begin(), items_.end());
    items_.erase(std::unique(items_.begin(), items_.end()), items_.end());
    for (std::size_t i = 1; i < items_.size(); ++i)
      if (items_[i - 1].attribute() == items_[i].attribute())
        fail("DuplicateAttribute", "itemset holds two values for attribute '" +
                                       items_[i].attribute() + "'");
  }

  /// Parses "{A:1, B:2}" or "A:1,B:2" style lists of items.
  static ItemSet parse(std::string_view text) {
    text = detail::trim(text);
    if (!text.empty() && text.front() == '{' && text.back() == '}')
      text = text.substr(1, text.size() - 2);
    std::vector<Item> items;
    while (!detail::trim(text).empty()) {
      auto comma = text.find(',');
      items.push_back(Item::parse(detail::trim(text.substr(0, comma))));
      if (comma == std::string_view::npos) break;
      text.remove_prefix(comma + 1);
    }
    return ItemSet(std::move(items));
  }

  const std::vector<Item>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const_iterator begin() const { return items_.begin(); }
  const_iterator end() const { return items_.end(); }

  bool contains(const Item& item) const {
    return std::binary_search(items_.begin(), items_.end(), item);
  }
  bool contains(const ItemSet& sub) const {
    return std::includes(items_.begin(), items_.end(), sub.begin(), sub.end());
  }
  bool shares_attribute(const ItemSet& other) const {
    for (const auto& a : items_)
      for (const auto& b : other.items_)
        if (a.attribute() == b.attribute()) return true;
    return false;
  }

  std::size_t intersection_size(const ItemSet& other) const {
    std::size_t n = 0;
    auto a = items_.begin();
    auto b = other.items_.begin();
    while (a != items_.end() && b != other.items_.end()) {
      if (*a < *b) ++a;
      else if (*b < *a) ++b;
      else { ++n; ++a; ++b; }
    }
    return n;
  }

  ItemSet united(const ItemSet& other) const {
    std::vector<Item> all(items_);
    all.insert(all.end(), other.items_.begin(), other.items_.end());
    return ItemSet(std::move(all));
  }

  /// "{A:1, B:2}"
  std::string str() const {
    std::string out = "{";
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (i) out += ", ";
      out += items_[i].str();
    }
    return out + "}";
  }

  auto operator<=>(const ItemSet&) const = default;

 private:
  std::vector<Item> items_;
};

struct TimeSlice {
  int index = 0;
  std::string label;
  Date start;
  Date end;  // inclusive

  bool contains(Date d) const { return start <= d && d <= end; }
};

struct Event {
  Date date;
  std::string place;
  ItemSet attribs;
};

struct Region {
  std::string id;
  nlohmann::json geometry;
  std::string displayName;
};

/// Metrics of one rule within one time slice, with the integer counts they came from.
struct SliceMetrics {
  double support = 0;
  double confidence = 0;
  double lift = 0;
  std::uint64_t unionCount = 0;
  std::uint64_t antecedentCount = 0;
  std::uint64_t consequentCount = 0;
  std::uint64_t transactions = 0;

  bool operator==(const SliceMetrics&) const = default;
};

class Rule {
 public:
  Rule() = default;
  Rule(ItemSet antecedent, ItemSet consequent, std::map<int, SliceMetrics> metrics = {})
      : antecedent_(std::move(antecedent)),
        consequent_(std::move(consequent)),
        sliceMetrics_(std::move(metrics)) {
    if (antecedent_.empty() || consequent_.empty())
      fail("InvalidRule", "rule sides must be non-empty");
    if (antecedent_.shares_attribute(consequent_))
      fail("InvalidRule", "antecedent and consequent share an attribute: " + antecedent_.str() +
                              " => " + consequent_.str());
  }

  const ItemSet& antecedent() const { return antecedent_; }
  const ItemSet& consequent() const { return consequent_; }
  const std::map<int, SliceMetrics>& slice_metrics() const { return sliceMetrics_; }
  std::map<int, SliceMetrics>& slice_metrics() { return sliceMetrics_; }

  std::string str() const { return antecedent_.str() + " => " + consequent_.str(); }

 private:
  ItemSet antecedent_;
  ItemSet consequent_;
  std::map<int, SliceMetrics> sliceMetrics_;
};

/// Canonical identity "A:1,B:2=>C:3"; delimiter characters inside items are backslash-escaped.
inline std::string canonical_rule_key(const Rule& rule) {
  std::string key;
  auto side = [&key](const ItemSet& s) {
    bool first = true;
    for (const auto& item : s) {
      if (!first) key.push_back(',');
      first = false;
      detail::append_escaped(key, item.attribute());
      key.push_back(':');
      detail::append_escaped(key, item.value());
    }
  };
  side(rule.antecedent());
  key += "=>";
  side(rule.consequent());
  return key;
}

inline ItemSet rule_union_itemset(const Rule& rule) {
  return rule.antecedent().united(rule.consequent());
}

}  // namespace stmine
