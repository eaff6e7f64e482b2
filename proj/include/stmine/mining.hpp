#pragma once

// Time slicing, FP-Growth frequent itemset mining and rule generation.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "stmine/core.hpp"
#include "stmine/date.hpp"
#include "stmine/error.hpp"

namespace stmine {

// ---------------------------------------------------------------------------
// Time slicing

enum class Granularity { Month, Week, Year };

inline Granularity parse_granularity(std::string_view s) {
  if (s == "month") return Granularity::Month;
  if (s == "week") return Granularity::Week;
  if (s == "year") return Granularity::Year;
  fail("InvalidConfig", "unknown granularity '" + std::string(s) + "'");
}

inline std::string to_string(Granularity g) {
  switch (g) {
    case Granularity::Month: return "month";
    case Granularity::Week: return "week";
    case Granularity::Year: return "year";
  }
  return "month";
}

namespace detail {

inline Date period_start(Date d, Granularity g) {
  switch (g) {
    case Granularity::Month: return Date(d.year(), d.month(), 1);
    case Granularity::Year: return Date(d.year(), 1, 1);
    case Granularity::Week: {
      unsigned iso = std::chrono::weekday{d.days()}.iso_encoding();  // Monday = 1
      return d - int(iso - 1);
    }
  }
  return d;
}

inline Date next_period_start(Date start, Granularity g) {
  switch (g) {
    case Granularity::Month:
      return start.month() == 12 ? Date(start.year() + 1, 1, 1) : Date(start.year(), start.month() + 1, 1);
    case Granularity::Year: return Date(start.year() + 1, 1, 1);
    case Granularity::Week: return start + 7;
  }
  return start;
}

inline std::string period_label(Date start, Granularity g) {
  char buf[16];
  switch (g) {
    case Granularity::Month: return start.month_label();
    case Granularity::Year:
      std::snprintf(buf, sizeof buf, "%04d", start.year());
      return buf;
    case Granularity::Week: {
      // ISO week: the week belongs to the year holding its Thursday.
      Date thursday = start + 3;
      Date jan1(thursday.year(), 1, 1);
      int week = int((thursday.days() - jan1.days()).count() / 7 + 1);
      std::snprintf(buf, sizeof buf, "%04d-W%02d", thursday.year(), week);
      return buf;
    }
  }
  return {};
}

}  // namespace detail

/// Calendar-aligned slices covering [start, end]; the first and last slice are
/// clipped to the range.
inline std::vector<TimeSlice> make_slices(Date start, Date end, Granularity g) {
  if (end < start) fail("InvalidRange", "start date " + start.str() + " is after end date " + end.str());
  std::vector<TimeSlice> slices;
  for (Date cur = detail::period_start(start, g); cur <= end;) {
    Date next = detail::next_period_start(cur, g);
    slices.push_back(TimeSlice{int(slices.size()), detail::period_label(cur, g), std::max(cur, start),
                               std::min(next - 1, end)});
    cur = next;
  }
  return slices;
}

/// Index of the slice holding `d`, or -1 when `d` falls outside every slice.
inline int slice_index_of(const std::vector<TimeSlice>& slices, Date d) {
  auto it = std::upper_bound(slices.begin(), slices.end(), d,
                             [](Date v, const TimeSlice& s) { return v < s.start; });
  if (it == slices.begin()) return -1;
  --it;
  return it->contains(d) ? it->index : -1;
}

struct SlicedDataset {
  std::vector<TimeSlice> slices;
  std::vector<std::vector<ItemSet>> transactions;     // by slice index
  std::vector<std::vector<std::size_t>> eventIndices;  // positions in the input event list
  std::vector<std::size_t> sliceEventCounts;
};

inline SlicedDataset slice_partition(const std::vector<Event>& events, Date start, Date end,
                                     Granularity g) {
  SlicedDataset out;
  out.slices = make_slices(start, end, g);
  out.transactions.resize(out.slices.size());
  out.eventIndices.resize(out.slices.size());
  out.sliceEventCounts.assign(out.slices.size(), 0);
  for (std::size_t i = 0; i < events.size(); ++i) {
    int s = slice_index_of(out.slices, events[i].date);
    if (s < 0) continue;
    out.transactions[s].push_back(events[i].attribs);
    out.eventIndices[s].push_back(i);
    ++out.sliceEventCounts[s];
  }
  return out;
}

// ---------------------------------------------------------------------------
// FP-Growth over integer-encoded transactions

using ItemId = std::uint32_t;
using Transaction = std::vector<ItemId>;  // sorted, unique

struct CountedItemset {
  std::vector<ItemId> items;  // sorted
  std::uint64_t count = 0;
};

namespace detail {

struct WeightedTransaction {
  std::vector<ItemId> items;
  std::uint64_t weight = 1;
};

class FpTree {
 public:
  struct Node {
    std::uint32_t rank;
    std::uint64_t count;
    std::int32_t parent;
    std::int32_t next;  // next node holding the same rank
    std::vector<std::int32_t> children;
  };

  FpTree(std::span<const WeightedTransaction> db, std::uint64_t minCount) {
    std::unordered_map<ItemId, std::uint64_t> freq;
    for (const auto& t : db)
      for (ItemId it : t.items) freq[it] += t.weight;
    for (const auto& [it, c] : freq)
      if (c >= minCount) items_.push_back(it);
    // Most frequent first; ties by item id.
    std::sort(items_.begin(), items_.end(), [&](ItemId a, ItemId b) {
      return freq[a] != freq[b] ? freq[a] > freq[b] : a < b;
    });
    std::unordered_map<ItemId, std::uint32_t> rank;
    for (std::uint32_t r = 0; r < items_.size(); ++r) rank[items_[r]] = r;
    counts_.resize(items_.size());
    for (std::uint32_t r = 0; r < items_.size(); ++r) counts_[r] = freq[items_[r]];
    head_.assign(items_.size(), -1);

    nodes_.push_back(Node{0, 0, -1, -1, {}});
    std::vector<std::uint32_t> path;
    for (const auto& t : db) {
      path.clear();
      for (ItemId it : t.items)
        if (auto f = rank.find(it); f != rank.end()) path.push_back(f->second);
      std::sort(path.begin(), path.end());
      insert(path, t.weight);
    }
  }

  std::size_t item_count() const { return items_.size(); }
  ItemId item(std::uint32_t r) const { return items_[r]; }
  std::uint64_t support(std::uint32_t r) const { return counts_[r]; }

  /// Prefix paths of every node holding `r`, weighted by that node's count.
  std::vector<WeightedTransaction> conditional_base(std::uint32_t r) const {
    std::vector<WeightedTransaction> base;
    for (std::int32_t n = head_[r]; n >= 0; n = nodes_[n].next) {
      WeightedTransaction t{{}, nodes_[n].count};
      for (std::int32_t p = nodes_[n].parent; p > 0; p = nodes_[p].parent)
        t.items.push_back(items_[nodes_[p].rank]);
      if (!t.items.empty()) base.push_back(std::move(t));
    }
    return base;
  }

 private:
  void insert(const std::vector<std::uint32_t>& path, std::uint64_t weight) {
    std::int32_t cur = 0;
    for (std::uint32_t r : path) {
      std::int32_t child = -1;
      for (std::int32_t c : nodes_[cur].children)
        if (nodes_[c].rank == r) {
          child = c;
          break;
        }
      if (child < 0) {
        child = std::int32_t(nodes_.size());
        nodes_.push_back(Node{r, 0, cur, head_[r], {}});
        head_[r] = child;
        nodes_[cur].children.push_back(child);
      }
      nodes_[child].count += weight;
      cur = child;
    }
  }

  std::vector<ItemId> items_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::int32_t> head_;
  std::vector<Node> nodes_;
};

inline void fp_mine(const FpTree& tree, std::vector<ItemId>& prefix, std::uint64_t minCount,
                    std::size_t maxLen, std::vector<CountedItemset>& out) {
  for (std::uint32_t r = std::uint32_t(tree.item_count()); r-- > 0;) {
    prefix.push_back(tree.item(r));
    CountedItemset found{prefix, tree.support(r)};
    std::sort(found.items.begin(), found.items.end());
    out.push_back(std::move(found));
    if (prefix.size() < maxLen) {
      auto base = tree.conditional_base(r);
      if (!base.empty()) {
        FpTree sub(base, minCount);
        if (sub.item_count() > 0) fp_mine(sub, prefix, minCount, maxLen, out);
      }
    }
    prefix.pop_back();
  }
}

}  // namespace detail

/// Smallest count c with c / n >= minSupport, evaluated in double precision
/// exactly as the support comparison itself.
inline std::uint64_t min_support_count(double minSupport, std::uint64_t n) {
  auto c = static_cast<std::uint64_t>(std::ceil(minSupport * double(n)));
  while (c > 0 && double(c - 1) / double(n) >= minSupport) --c;
  while (c <= n && double(c) / double(n) < minSupport) ++c;
  return std::max<std::uint64_t>(c, 1);
}

/// Every itemset (1 <= size <= maxLen) contained in at least `minCount`
/// transactions, with its exact count. Order is unspecified.
inline std::vector<CountedItemset> fp_growth_counts(std::span<const Transaction> transactions,
                                                    std::uint64_t minCount,
                                                    std::size_t maxLen = std::numeric_limits<std::size_t>::max()) {
  std::vector<detail::WeightedTransaction> db;
  db.reserve(transactions.size());
  for (const auto& t : transactions) db.push_back({t, 1});
  std::vector<CountedItemset> out;
  if (maxLen == 0) return out;
  detail::FpTree tree(db, minCount);
  std::vector<ItemId> prefix;
  detail::fp_mine(tree, prefix, minCount, maxLen, out);
  return out;
}

// ---------------------------------------------------------------------------
// Item-level API

struct FrequentItemset {
  ItemSet items;
  double support = 0;
  std::uint64_t count = 0;
};

struct MiningConfig {
  double minSupport = 0.05;
  double minLift = 0.0;
  std::size_t maxRuleLen = 5;

  void validate() const {
    if (!(minSupport > 0.0 && minSupport <= 1.0))
      fail("InvalidConfig", "minSupport must lie in (0, 1]");
    if (!(minLift >= 0.0)) fail("InvalidConfig", "minLift must be non-negative");
    if (maxRuleLen < 2) fail("InvalidConfig", "maxRuleLen must be at least 2");
  }
};

/// Dense ids for a set of items; id order equals canonical item order.
class ItemDictionary {
 public:
  ItemDictionary() = default;
  explicit ItemDictionary(std::vector<Item> items) : items_(std::move(items)) {
    std::sort(items_.begin(), items_.end());
    items_.erase(std::unique(items_.begin(), items_.end()), items_.end());
  }

  static ItemDictionary from(std::span<const ItemSet> sets) {
    std::vector<Item> all;
    for (const auto& s : sets) all.insert(all.end(), s.begin(), s.end());
    return ItemDictionary(std::move(all));
  }

  std::size_t size() const { return items_.size(); }
  const Item& item(ItemId id) const { return items_[id]; }

  /// -1 when unknown.
  std::int64_t find(const Item& item) const {
    auto it = std::lower_bound(items_.begin(), items_.end(), item);
    return it != items_.end() && *it == item ? std::int64_t(it - items_.begin()) : -1;
  }

  Transaction encode(const ItemSet& s) const {
    Transaction t;
    t.reserve(s.size());
    for (const auto& item : s) t.push_back(ItemId(find(item)));
    return t;  // already sorted because ItemSet is
  }

  ItemSet decode(std::span<const ItemId> ids) const {
    std::vector<Item> items;
    items.reserve(ids.size());
    for (ItemId id : ids) items.push_back(items_[id]);
    return ItemSet(std::move(items));
  }

 private:
  std::vector<Item> items_;
};

/// Frequent itemsets in canonical order: by size, then lexicographically.
inline std::vector<FrequentItemset> fp_growth(const std::vector<ItemSet>& transactions, double minSupport,
                                              std::size_t maxLen = std::numeric_limits<std::size_t>::max()) {
  if (transactions.empty()) fail("NoTransactions", "cannot mine an empty transaction list");
  if (!(minSupport > 0.0 && minSupport <= 1.0)) fail("InvalidConfig", "minSupport must lie in (0, 1]");
  auto dict = ItemDictionary::from(transactions);
  std::vector<Transaction> encoded;
  encoded.reserve(transactions.size());
  for (const auto& t : transactions) encoded.push_back(dict.encode(t));

  const std::uint64_t n = transactions.size();
  auto found = fp_growth_counts(encoded, min_support_count(minSupport, n), maxLen);
  std::sort(found.begin(), found.end(), [](const CountedItemset& a, const CountedItemset& b) {
    return a.items.size() != b.items.size() ? a.items.size() < b.items.size() : a.items < b.items;
  });
  std::vector<FrequentItemset> out;
  out.reserve(found.size());
  for (auto& f : found)
    out.push_back(FrequentItemset{dict.decode(f.items), double(f.count) / double(n), f.count});
  return out;
}

/// Metrics from integer counts, one division each.
inline SliceMetrics metrics_from_counts(std::uint64_t unionCount, std::uint64_t antecedentCount,
                                        std::uint64_t consequentCount, std::uint64_t n) {
  SliceMetrics m;
  m.unionCount = unionCount;
  m.antecedentCount = antecedentCount;
  m.consequentCount = consequentCount;
  m.transactions = n;
  m.support = double(unionCount) / double(n);
  m.confidence = double(unionCount) / double(antecedentCount);
  m.lift = double(unionCount * n) / double(antecedentCount * consequentCount);
  return m;
}

/// Splits every frequent itemset of size 2..maxRuleLen into all antecedent /
/// consequent pairs, keeping rules with lift >= minLift. Metrics are stored
/// under `sliceIndex`.
inline std::vector<Rule> generate_rules(const std::vector<FrequentItemset>& frequents, std::uint64_t n,
                                        const MiningConfig& config, int sliceIndex = 0) {
  config.validate();
  std::map<ItemSet, std::uint64_t> counts;
  for (const auto& f : frequents) counts.emplace(f.items, f.count);
  auto count_of = [&](const ItemSet& s) {
    auto it = counts.find(s);
    if (it == counts.end()) fail("MissingSubset", "subset " + s.str() + " of a frequent itemset is missing");
    return it->second;
  };

  std::vector<Rule> rules;
  for (const auto& z : frequents) {
    const std::size_t k = z.items.size();
    if (k < 2 || k > config.maxRuleLen || k >= 32) continue;
    const auto& items = z.items.items();
    for (std::uint32_t mask = 1; mask + 1 < (1u << k); ++mask) {
      std::vector<Item> lhs, rhs;
      for (std::size_t i = 0; i < k; ++i) ((mask >> i) & 1u ? lhs : rhs).push_back(items[i]);
      ItemSet x(std::move(lhs)), y(std::move(rhs));
      auto m = metrics_from_counts(z.count, count_of(x), count_of(y), n);
      if (m.lift < config.minLift) continue;
      rules.emplace_back(std::move(x), std::move(y), std::map<int, SliceMetrics>{{sliceIndex, m}});
    }
  }
  return rules;
}

// ---------------------------------------------------------------------------
// Direct metric evaluation over a transaction list

inline std::uint64_t count_containing(const ItemSet& itemset, const std::vector<ItemSet>& transactions) {
  return std::uint64_t(std::count_if(transactions.begin(), transactions.end(),
                                     [&](const ItemSet& t) { return t.contains(itemset); }));
}

inline double support(const ItemSet& itemset, const std::vector<ItemSet>& transactions) {
  if (transactions.empty()) fail("NoTransactions", "support over an empty transaction list");
  return double(count_containing(itemset, transactions)) / double(transactions.size());
}

inline double confidence(const Rule& rule, const std::vector<ItemSet>& transactions) {
  if (transactions.empty()) fail("NoTransactions", "confidence over an empty transaction list");
  auto cx = count_containing(rule.antecedent(), transactions);
  if (cx == 0) fail("ZeroAntecedentSupport", "antecedent " + rule.antecedent().str() + " never occurs");
  return double(count_containing(rule_union_itemset(rule), transactions)) / double(cx);
}

inline double lift(const Rule& rule, const std::vector<ItemSet>& transactions) {
  if (transactions.empty()) fail("NoTransactions", "lift over an empty transaction list");
  auto cx = count_containing(rule.antecedent(), transactions);
  auto cy = count_containing(rule.consequent(), transactions);
  if (cx == 0 || cy == 0) fail("ZeroSupport", "rule side never occurs: " + rule.str());
  auto cz = count_containing(rule_union_itemset(rule), transactions);
  return double(cz * transactions.size()) / double(cx * cy);
}

// ---------------------------------------------------------------------------
// Per-slice mining

/// Mines each slice independently (in parallel when `threads` > 1). Empty
/// slices yield empty rule lists.
inline std::map<int, std::vector<Rule>> mine_slices(const SlicedDataset& data, const MiningConfig& config,
                                                    unsigned threads = std::thread::hardware_concurrency()) {
  config.validate();
  const std::size_t count = data.slices.size();
  std::vector<std::vector<Rule>> results(count);
  auto work = [&](std::size_t s) {
    if (data.transactions[s].empty()) return;
    auto frequents = fp_growth(data.transactions[s], config.minSupport, config.maxRuleLen);
    results[s] = generate_rules(frequents, data.transactions[s].size(), config, data.slices[s].index);
  };

  threads = std::max(1u, std::min<unsigned>(threads, unsigned(count)));
  if (threads <= 1) {
    for (std::size_t s = 0; s < count; ++s) work(s);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex errorMutex;
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t s; (s = next++) < count;) {
          try {
            work(s);
          } catch (...) {
            std::lock_guard lock(errorMutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    pool.clear();
    if (error) std::rethrow_exception(error);
  }

  std::map<int, std::vector<Rule>> out;
  for (std::size_t s = 0; s < count; ++s) out.emplace(data.slices[s].index, std::move(results[s]));
  return out;
}

}  // namespace stmine
