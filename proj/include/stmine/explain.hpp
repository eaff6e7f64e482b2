#pragma once

// LLM explanation requests: context selection, prompt rendering, and parsing
// of the JSON hypothesis list returned by a text-completion provider.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stmine/analytics.hpp"
#include "stmine/core.hpp"
#include "stmine/dedup.hpp"
#include "stmine/error.hpp"

namespace stmine {

struct ExplainRequest {
  Rule rule;
  std::vector<std::string> locations;
  // place -> ordered (YYYY-mm, count)
  std::map<std::string, std::vector<std::pair<std::string, std::uint64_t>>> series;
  std::string datasetNoun = "dataset";
};

struct Source {
  std::string title;
  std::string url;
  bool operator==(const Source&) const = default;
};

struct Hypothesis {
  std::string hypothesis;
  std::string description;
  std::vector<Source> sources;
  bool operator==(const Hypothesis&) const = default;
};

struct Explanation {
  std::vector<Hypothesis> hypotheses;
  bool operator==(const Explanation&) const = default;
};

struct ContextOptions {
  std::string datasetNoun = "dataset";
  std::vector<std::string> places;  // empty: top three places by occurrences
  std::optional<Date> start;        // defaults to the run's first slice
  std::optional<Date> end;          // defaults to the run's last slice
  std::size_t defaultPlaceCount = 3;
};

/// Places with the most occurrences, ties by place id; zero-count places never qualify.
inline std::vector<std::string> top_places(const RuleProfile& profile, std::size_t count) {
  std::vector<std::pair<std::string, std::uint64_t>> ranked(profile.placeTotals.begin(), profile.placeTotals.end());
  std::erase_if(ranked, [](const auto& p) { return p.second == 0; });
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > count) ranked.resize(count);
  std::vector<std::string> out;
  for (auto& [place, n] : ranked) out.push_back(place);
  return out;
}

/// Builds the explanation context for one rule: the user's places and
/// period when given, otherwise the top places over the full range. The
/// series holds monthly counts of events containing the rule's union itemset.
inline ExplainRequest select_default_context(const CanonicalRule& rule, const RuleProfile& profile,
                                             const OccurrenceIndex& index, const ContextOptions& options = {}) {
  if (index.slices().empty()) fail("EmptyContext", "run has no time slices");
  ExplainRequest req;
  req.rule = rule.rule;
  req.datasetNoun = options.datasetNoun;
  req.locations = options.places.empty() ? top_places(profile, options.defaultPlaceCount) : options.places;

  Date start = options.start.value_or(index.slices().front().start);
  Date end = options.end.value_or(index.slices().back().end);
  if (end < start) fail("InvalidRange", "explanation period ends before it starts");

  std::vector<std::string> months;
  for (Date m(start.year(), start.month(), 1); m <= end;
       m = m.month() == 12 ? Date(m.year() + 1, 1, 1) : Date(m.year(), m.month() + 1, 1))
    months.push_back(m.month_label());

  std::map<std::string, std::map<std::string, std::uint64_t>> counts;
  for (const auto& place : req.locations) counts[place];
  for (auto e : index.matching(rule_union_itemset(rule.rule))) {
    Date d = index.date_of(e);
    if (d < start || end < d) continue;
    auto it = counts.find(index.place_of(e));
    if (it != counts.end()) ++it->second[d.month_label()];
  }
  for (const auto& place : req.locations) {
    auto& s = req.series[place];
    for (const auto& label : months) {
      auto found = counts[place].find(label);
      s.emplace_back(label, found == counts[place].end() ? 0 : found->second);
    }
  }
  return req;
}

/// Renders the explanation prompt. Pure: equal requests give identical bytes.
inline std::string build_prompt(const ExplainRequest& req) {
  if (req.locations.empty()) fail("EmptyContext", "explanation needs at least one location");
  auto side = [](const ItemSet& s) {
    std::string out = "{";
    bool first = true;
    for (const auto& item : s) {
      if (!first) out += ", ";
      first = false;
      out += item.str();
    }
    return out + "}";
  };

  std::string p;
  p += "Here we have an association rule, describing a pattern found in a " + req.datasetNoun +
       ". Each element in the antecedent or consequent is an attribute–value pair.\n\n";
  p += "Antecedent: " + side(req.rule.antecedent()) + "\n";
  p += "Consequent: " + side(req.rule.consequent()) + "\n\n";
  for (const auto& place : req.locations) {
    p += "Location:" + place + "\n";
    if (auto it = req.series.find(place); it != req.series.end())
      for (const auto& [label, count] : it->second) p += label + ": " + std::to_string(count) + "\n";
    p += "\n";
  }
  p +=
      "Tasks:\n"
      "1. Identify trends both in time and space.\n"
      "2. Formulate a couple specific hypotheses explaining the identified behavior.\n"
      "3. Search the internet for information sources to validate your hypothesis.\n"
      "3. Use the Google Search tool to find specific news articles, reports, and studies\n"
      "4. Provide actual working URLs, not placeholder URLs.\n"
      "\n"
      "If no information was found, just return the hypothesis and description.\n"
      "\n"
      "Output the findings as a JSON list of dictionaries with the following format (strictly valid JSON only):\n"
      "{\n"
      "    \"hypothesis\": \"\",\n"
      "    \"description\": \"\",\n"
      "    \"sources\": []\n"
      "}\n"
      "Output each source as a JSON dictionary with title and URL:\n"
      "{\n"
      "    \"title\": \"\",\n"
      "    \"url\": \"\"\n"
      "}\n";
  return p;
}

inline bool is_absolute_url(const std::string& url) {
  static const std::regex pattern(R"(^[A-Za-z][A-Za-z0-9+.\-]*://[^\s/?#]+[^\s]*$)");
  return std::regex_match(url, pattern);
}

/// Parses the provider's completion. A surrounding ``` / ```json fence is
/// stripped; anything else around the JSON is rejected. Sources whose url is
/// not absolute are dropped.
inline Explanation parse_explanation(std::string_view raw) {
  std::string_view text = detail::trim(raw);
  if (text.starts_with("```")) {
    auto eol = text.find('\n');
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    text = detail::trim(text);
    if (text.ends_with("```")) text.remove_suffix(3);
  }
  auto doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded()) fail("NotJson", "explanation response is not valid JSON");
  if (!doc.is_array()) fail("WrongShape", "explanation response must be a JSON array");

  Explanation out;
  for (const auto& entry : doc) {
    if (!entry.is_object() || !entry.contains("hypothesis") || !entry["hypothesis"].is_string() ||
        !entry.contains("description") || !entry["description"].is_string())
      fail("WrongShape", "each finding needs string 'hypothesis' and 'description' fields");
    Hypothesis h{entry["hypothesis"].get<std::string>(), entry["description"].get<std::string>(), {}};
    if (entry.contains("sources")) {
      if (!entry["sources"].is_array()) fail("WrongShape", "'sources' must be an array");
      for (const auto& s : entry["sources"]) {
        if (!s.is_object() || !s.contains("url") || !s["url"].is_string()) fail("WrongShape", "source needs a 'url'");
        Source src{s.contains("title") && s["title"].is_string() ? s["title"].get<std::string>() : std::string(),
                   s["url"].get<std::string>()};
        if (is_absolute_url(src.url)) h.sources.push_back(std::move(src));
      }
    }
    out.hypotheses.push_back(std::move(h));
  }
  return out;
}

inline nlohmann::json to_json(const Explanation& e) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& h : e.hypotheses) {
    nlohmann::json sources = nlohmann::json::array();
    for (const auto& s : h.sources) sources.push_back({{"title", s.title}, {"url", s.url}});
    arr.push_back({{"hypothesis", h.hypothesis}, {"description", h.description}, {"sources", sources}});
  }
  return arr;
}

/// Prompt text in, completion text out. Implementations throw
/// Error("ProviderUnavailable") when the backend cannot be reached.
class TextProvider {
 public:
  virtual ~TextProvider() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

inline Explanation explain(const ExplainRequest& req, TextProvider& provider) {
  return parse_explanation(provider.complete(build_prompt(req)));
}

}  // namespace stmine
