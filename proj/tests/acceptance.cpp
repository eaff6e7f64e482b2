// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "stmine/clustering.hpp"
#include "stmine/dedup.hpp"
#include "stmine/explain.hpp"
#include "stmine/mining.hpp"
#include "stmine/service.hpp"
#include "support/letters.hpp"
#include "support/oracles.hpp"
#include "support/planted.hpp"

using namespace stmine;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Checker {
 public:
  explicit Checker(Outcome& o) : out_(o) {}
  void expect(bool ok, const std::string& what) {
    if (!ok && out_.pass) {
      out_.pass = false;
      out_.detail = what;
    }
  }

 private:
  Outcome& out_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::set<std::string> union_of(const nlohmann::json& rule) {
  std::set<std::string> u;
  for (const auto& i : rule["antecedent"]) u.insert(i.get<std::string>());
  for (const auto& i : rule["consequent"]) u.insert(i.get<std::string>());
  return u;
}

// ---------------------------------------------------------------------------

Outcome mining_oracle_equivalence() {
  Outcome o;
  Checker c(o);
  auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240601);
  const double supports[] = {0.05, 0.1, 0.3};
  for (int d = 0; d < 100; ++d) {
    const int universe = 1 + int(rng() % 12);
    const std::size_t n = 1 + rng() % 500;
    std::bernoulli_distribution take(0.1 + 0.7 * double(rng() % 1000) / 1000.0);
    std::vector<oracle::Items> raw;
    std::vector<ItemSet> txs;
    for (std::size_t t = 0; t < n; ++t) {
      oracle::Items row;
      std::vector<Item> items;
      for (int i = 0; i < universe; ++i)
        if (take(rng)) {
          row.push_back(i);
          items.emplace_back("i" + std::to_string(10 + i), "v");
        }
      raw.push_back(row);
      txs.emplace_back(std::move(items));
    }
    const double minSupport = supports[d % 3];
    std::map<ItemSet, std::uint64_t> want, got;
    for (const auto& [items, count] : oracle::brute_force_frequent(raw, universe, minSupport)) {
      std::vector<Item> v;
      for (int i : items) v.emplace_back("i" + std::to_string(10 + i), "v");
      want.emplace(ItemSet(std::move(v)), count);
    }
    for (const auto& f : fp_growth(txs, minSupport)) got.emplace(f.items, f.count);
    c.expect(got == want, "dataset " + std::to_string(d) + " differs from enumeration");
  }
  double secs = seconds_since(t0);
  c.expect(secs < 30.0, "took " + std::to_string(secs) + " s");
  if (o.pass) o.detail = "100 datasets, " + std::to_string(secs) + " s";
  return o;
}

Outcome metric_exactness() {
  Outcome o;
  Checker c(o);
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
  auto rule_in = [](const std::vector<Rule>& rules, const std::string& l, const std::string& r) -> const Rule* {
    for (const auto& x : rules)
      if (x.antecedent() == letters::set(l) && x.consequent() == letters::set(r)) return &x;
    return nullptr;
  };
  MiningConfig loose{0.2, 0.0, 5};

  auto worked = letters::worked();
  auto wr = generate_rules(fp_growth(worked, loose.minSupport), worked.size(), loose);
  const Rule* ab = rule_in(wr, "a", "b");
  c.expect(ab != nullptr, "{a}=>{b} missing");
  if (ab) {
    const auto& m = ab->slice_metrics().at(0);
    c.expect(near(m.support, 0.6) && near(m.confidence, 0.75) && near(m.lift, 0.9375), "{a}=>{b} metrics");
  }
  c.expect(near(support(letters::set("ab"), worked), 0.6), "direct support");
  c.expect(near(confidence(letters::rule("a", "b"), worked), 0.75), "direct confidence");
  c.expect(near(lift(letters::rule("a", "b"), worked), 0.9375), "direct lift");
  const Rule* abc = rule_in(wr, "ab", "c");
  c.expect(abc && near(abc->slice_metrics().at(0).confidence, 2.0 / 3.0), "{a,b}=>{c} confidence");
  auto strict = generate_rules(fp_growth(worked, 0.6), worked.size(), MiningConfig{0.6, 1.05, 5});
  c.expect(rule_in(strict, "a", "b") == nullptr, "{a}=>{b} survives minLift 1.05");

  auto asym = letters::asymmetric();
  auto ar = generate_rules(fp_growth(asym, loose.minSupport), asym.size(), loose);
  const Rule* abToC = rule_in(ar, "ab", "c");
  const Rule* aToBc = rule_in(ar, "a", "bc");
  c.expect(abToC && near(abToC->slice_metrics().at(0).lift, 0.4 / (0.6 * 0.6)), "{a,b}=>{c} lift");
  c.expect(aToBc && near(aToBc->slice_metrics().at(0).lift, 0.4 / (1.0 * 0.4)), "{a}=>{b,c} lift");

  // lift symmetry across fixtures and random data
  std::size_t checked = 0;
  auto symmetric = [&](const std::vector<Rule>& rules) {
    std::map<std::pair<ItemSet, ItemSet>, double> lifts;
    for (const auto& r : rules) lifts[{r.antecedent(), r.consequent()}] = r.slice_metrics().begin()->second.lift;
    for (const auto& [k, l] : lifts) {
      auto it = lifts.find({k.second, k.first});
      c.expect(it != lifts.end() && it->second == l, "lift asymmetry on " + k.first.str());
      ++checked;
    }
  };
  symmetric(wr);
  symmetric(ar);
  std::mt19937_64 rng(99);
  for (int d = 0; d < 20; ++d) {
    std::vector<ItemSet> txs;
    for (int t = 0; t < 300; ++t) {
      std::vector<Item> items;
      for (int k = 0; k < 7; ++k)
        if (rng() % 3) items.emplace_back("k" + std::to_string(k), std::to_string(rng() % 2));
      txs.emplace_back(std::move(items));
    }
    symmetric(generate_rules(fp_growth(txs, 0.05), txs.size(), MiningConfig{0.05, 0.0, 5}));
  }
  if (o.pass) o.detail = "fixtures exact, " + std::to_string(checked) + " rules symmetric";
  return o;
}

Outcome dedup_contract() {
  Outcome o;
  Checker c(o);
  auto txs = letters::asymmetric();
  MiningConfig config{0.2, 0.0, 5};
  auto perSlice = std::map<int, std::vector<Rule>>{
      {0, generate_rules(fp_growth(txs, config.minSupport), txs.size(), config, 0)}};
  auto merged = merge_across_slices(perSlice);
  auto collapsed = collapse_superfluous(merged);

  std::set<ItemSet> unionsIn, unionsOut;
  for (const auto& m : merged) unionsIn.insert(rule_union_itemset(m.rule));
  for (const auto& k : collapsed) {
    auto u = rule_union_itemset(k.rule);
    c.expect(unionsOut.insert(u).second, "union " + u.str() + " appears twice");
    for (const auto& m : merged)
      if (rule_union_itemset(m.rule) == u) c.expect(k.meanLift >= m.meanLift, "non-maximal representative for " + u.str());
  }
  c.expect(unionsIn == unionsOut, "union itemsets lost or invented");

  const CanonicalRule* kept = nullptr;
  for (const auto& k : collapsed)
    if (rule_union_itemset(k.rule) == letters::set("abc")) kept = &k;
  c.expect(kept != nullptr, "no representative for {a,b,c}");
  if (kept) {
    c.expect(std::abs(kept->meanLift - 0.4 / 0.36) <= 1e-12, "representative lift " + std::to_string(kept->meanLift));
    c.expect(kept->rule.antecedent() == letters::set("ab") && kept->rule.consequent() == letters::set("c"),
             "representative is " + kept->key);
  }

  auto again = collapse_superfluous(merge_across_slices(split_by_slice(collapsed)));
  bool same = again.size() == collapsed.size();
  for (std::size_t i = 0; same && i < again.size(); ++i)
    same = again[i].key == collapsed[i].key && again[i].rule.slice_metrics() == collapsed[i].rule.slice_metrics();
  c.expect(same, "merge+collapse not idempotent");
  if (o.pass) o.detail = std::to_string(merged.size()) + " rules -> " + std::to_string(collapsed.size()) + " unions";
  return o;
}

Outcome similarity_properties() {
  Outcome o;
  Checker c(o);
  Rule abc{ItemSet{Item("A", "1"), Item("B", "1")}, ItemSet{Item("C", "1")}};
  Rule ac{ItemSet{Item("A", "1")}, ItemSet{Item("C", "1")}};
  c.expect(rule_similarity(abc, ac) == 2.0 / 3.0, "{A,B}=>{C} vs {A}=>{C} is not 2/3");

  std::mt19937_64 rng(31337);
  auto random_rule = [&] {
    std::vector<int> attrs{0, 1, 2, 3, 4, 5};
    std::shuffle(attrs.begin(), attrs.end(), rng);
    std::size_t nl = 1 + rng() % 3, nr = 1 + rng() % 3;
    std::vector<Item> l, r;
    for (std::size_t i = 0; i < nl; ++i) l.emplace_back("f" + std::to_string(attrs[i]), std::to_string(rng() % 2));
    for (std::size_t i = 0; i < nr; ++i) r.emplace_back("f" + std::to_string(attrs[nl + i]), std::to_string(rng() % 2));
    return Rule{ItemSet(l), ItemSet(r)};
  };
  for (int i = 0; i < 10000; ++i) {
    Rule a = random_rule();
    Rule b = rng() % 4 ? random_rule() : a;
    double s = rule_similarity(a, b);
    bool identical = a.antecedent() == b.antecedent() && a.consequent() == b.consequent();
    c.expect(s == rule_similarity(b, a), "asymmetric pair");
    c.expect(s >= 0.0 && s <= 1.0, "out of range");
    c.expect((s == 1.0) == identical, "identity <=> 1 violated");
  }
  if (o.pass) o.detail = "10000 pairs";
  return o;
}

Outcome louvain_contract() {
  Outcome o;
  Checker c(o);
  using Dense = std::vector<std::vector<double>>;
  auto graph = [](const Dense& w) {
    SimilarityGraph g(w.size());
    for (std::size_t i = 0; i < w.size(); ++i)
      for (std::size_t j = i + 1; j < w.size(); ++j) g.add_edge(std::uint32_t(i), std::uint32_t(j), w[i][j]);
    g.finalize();
    return g;
  };

  Dense tri(6, std::vector<double>(6, 0.0));
  auto link = [&](int a, int b, double x) { tri[a][b] = tri[b][a] = x; };
  link(0, 1, 1), link(1, 2, 1), link(0, 2, 1), link(3, 4, 1), link(4, 5, 1), link(3, 5, 1), link(2, 3, 0.01);
  auto p = louvain(graph(tri), 1.0, 0);
  c.expect(p.assignment == std::vector<int>({0, 0, 0, 1, 1, 1}), "triangles not separated");
  c.expect(std::abs(p.modularity - oracle::modularity(tri, p.assignment, 1.0)) <= 1e-12, "modularity mismatch");

  std::mt19937_64 rng(8);
  double worstRatio = 1.0;
  for (int g = 0; g < 50; ++g) {
    std::size_t n = 2 + rng() % 7;
    Dense w(n, std::vector<double>(n, 0.0));
    std::uniform_real_distribution<double> weight(0.05, 1.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng() % 2) w[i][j] = w[j][i] = weight(rng);
    auto best = oracle::best_partition(w, 1.0).first;
    auto got = louvain(graph(w), 1.0, 0);
    c.expect(std::abs(got.modularity - oracle::modularity(w, got.assignment, 1.0)) <= 1e-12, "modularity mismatch");
    if (best > 1e-9) worstRatio = std::min(worstRatio, got.modularity / best);
    c.expect(got.modularity >= 0.95 * best - 1e-12, "graph " + std::to_string(g) + " below 0.95 of optimum");
  }

  Dense big(60, std::vector<double>(60, 0.0));
  for (std::size_t i = 0; i < 60; ++i)
    for (std::size_t j = i + 1; j < 60; ++j)
      if (rng() % 5 == 0) big[i][j] = big[j][i] = double(1 + rng() % 9) / 10.0;
  auto g = graph(big);
  auto first = louvain(g, 1.0, 0);
  for (int k = 0; k < 5; ++k) c.expect(louvain(g, 1.0, 0).assignment == first.assignment, "rerun differs");
  if (o.pass) o.detail = "worst ratio to optimum " + std::to_string(worstRatio);
  return o;
}

Outcome end_to_end_planted() {
  Outcome o;
  Checker c(o);
  auto t0 = std::chrono::steady_clock::now();
  auto dir = fs::temp_directory_path() / ("stmine-acceptance-" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  auto data = planted::make();
  std::ofstream(dir / "events.csv", std::ios::binary) << data.csv;
  std::ofstream(dir / "regions.geojson", std::ios::binary) << data.geojson;
  std::string cmd = std::string("'") + STMINE_CLI + "' run --events '" + (dir / "events.csv").string() +
                    "' --regions '" + (dir / "regions.geojson").string() + "' --seed 0 --out '" +
                    (dir / "artifact.json").string() + "' 2>/dev/null";
  int status = std::system(cmd.c_str());
  c.expect(WIFEXITED(status) && WEXITSTATUS(status) == 0, "cli run failed");
  auto artifact = nlohmann::json::parse(slurp(dir / "artifact.json"), nullptr, false);
  fs::remove_all(dir);
  c.expect(!artifact.is_discarded(), "artifact is not JSON");
  if (!o.pass) return o;

  const nlohmann::json* planted = nullptr;
  for (const auto& r : artifact["rules"])
    if (union_of(r) == std::set<std::string>{"A:x", "B:y", "C:z"}) planted = &r;
  c.expect(planted != nullptr, "no rule with union {A:x,B:y,C:z}");
  if (planted) {
    const auto& totals = (*planted)["profile"]["sliceTotals"];
    const auto& slices = artifact["slices"];
    for (std::size_t s = 0; s < slices.size(); ++s) {
      bool plantedMonth = data.plantedMonths.count(slices[s]["label"].get<std::string>()) > 0;
      c.expect(totals[s].get<int>() == (plantedMonth ? data.plantedPerMonth : 0),
               "slice " + slices[s]["label"].get<std::string>() + " count " + totals[s].dump());
    }
    c.expect((*planted)["profile"]["placeTotals"] == nlohmann::json{{"R1", 6 * data.plantedPerMonth}},
             "planted counts outside R1");
  }
  auto conserved = [&](const nlohmann::json& p, const std::string& what) {
    std::uint64_t bySlice = 0, byPlace = 0;
    for (const auto& v : p["sliceTotals"]) bySlice += v.get<std::uint64_t>();
    for (const auto& [k, v] : p["placeTotals"].items()) byPlace += v.get<std::uint64_t>();
    auto total = p["grandTotal"].get<std::uint64_t>();
    c.expect(bySlice == total && byPlace == total, "marginals not conserved for " + what);
  };
  for (const auto& r : artifact["rules"]) conserved(r["profile"], r["key"]);
  for (const auto& cl : artifact["clusters"]) conserved(cl["profile"], "cluster " + cl["id"].dump());
  double secs = seconds_since(t0);
  c.expect(secs < 60.0, "took " + std::to_string(secs) + " s");
  if (o.pass)
    o.detail = std::to_string(artifact["rules"].size()) + " rules, " + std::to_string(secs) + " s";
  return o;
}

Outcome seriation_contract() {
  Outcome o;
  Checker c(o);
  auto season = [](bool summer, double scale) {
    std::vector<double> v(12, scale);
    for (int m : summer ? std::vector<int>{5, 6, 7} : std::vector<int>{11, 0, 1}) v[std::size_t(m)] = 10 * scale;
    return v;
  };
  std::vector<std::pair<std::size_t, std::vector<double>>> rows{
      {0, season(true, 1)}, {1, season(false, 2)}, {2, season(true, 3)}, {3, season(false, 1)}};
  auto order = seriation_order(rows);
  auto isSummer = [](std::size_t id) { return id % 2 == 0; };
  c.expect(isSummer(order[0]) == isSummer(order[1]) && isSummer(order[2]) == isSummer(order[3]),
           "same-season rows not adjacent");

  std::vector<std::vector<double>> raw;
  for (const auto& r : rows) raw.push_back(r.second);
  auto cost = [&](const std::vector<std::size_t>& ord) {
    double total = 0;
    for (std::size_t k = 1; k < ord.size(); ++k) {
      auto unit = [&](std::size_t i) {
        double s = 0;
        for (double v : raw[i]) s += v * v;
        auto u = raw[i];
        for (double& v : u) v /= std::sqrt(s);
        return u;
      };
      auto a = unit(ord[k - 1]), b = unit(ord[k]);
      double d = 0;
      for (std::size_t j = 0; j < a.size(); ++j) d += (a[j] - b[j]) * (a[j] - b[j]);
      total += std::sqrt(d);
    }
    return total;
  };
  c.expect(std::abs(cost(order) - cost(oracle::best_linear_order(raw))) <= 1e-12, "not a minimum-distance order");

  Service service(ServiceOptions{});
  auto data = planted::make();
  auto ds = service.create_dataset(data.csv, data.geojson).body["datasetId"];
  std::string runId = service.create_run({{"datasetId", ds}}).body["runId"];
  service.wait_run(runId);
  auto orders_match = [&](const std::string& level, std::optional<int> cluster) {
    auto rows = service.attribute_matrix(runId, level, cluster).body["rows"].dump();
    auto heat = service.heatmap(runId, level, cluster).body["order"].dump();
    c.expect(rows == heat, level + " orders differ");
  };
  orders_match("cluster", std::nullopt);
  auto clusters = service.artifact(runId).body["clusters"].size();
  for (std::size_t k = 0; k < clusters; ++k) orders_match("rule", int(k));
  if (o.pass) o.detail = "fixture optimal; " + std::to_string(clusters + 1) + " shared orders";
  return o;
}

Outcome explain_golden() {
  Outcome o;
  Checker c(o);
  ExplainRequest req;
  req.rule = Rule{ItemSet{Item("LitCond", "Daylight"), Item("Weather", "Clear")}, ItemSet{Item("Drunk", "No")}};
  req.datasetNoun = "vehicular accidents dataset";
  req.locations = {"Florida", "Texas"};
  req.series["Florida"] = {{"2016-01", 27}, {"2016-02", 44}};
  req.series["Texas"] = {{"2016-01", 61}, {"2016-02", 52}};
  auto golden = slurp(fs::path(STMINE_FIXTURES) / "prompt_fars.txt");
  c.expect(!golden.empty(), "golden file missing");
  c.expect(build_prompt(req) == golden, "prompt differs from golden file");

  const std::string reply =
      R"([{"hypothesis":"h1","description":"d1","sources":[{"title":"t","url":"https://example.org/a"}]},)"
      R"({"hypothesis":"h2","description":"d2"}])";
  auto parsed = parse_explanation(reply);
  c.expect(parsed.hypotheses.size() == 2 && parsed.hypotheses[1].sources.empty(), "parse shape");
  c.expect(parse_explanation(to_json(parsed).dump()) == parsed, "round trip");
  c.expect(parse_explanation("```json\n" + reply + "\n```") == parsed, "fenced parse");
  try {
    parse_explanation(R"({"hypothesis": "h"})");
    c.expect(false, "object accepted");
  } catch (const Error& e) {
    c.expect(e.code() == "WrongShape", "object rejected with " + e.code());
  }

  struct Canned : TextProvider {
    std::string reply, prompt;
    std::string complete(const std::string& p) override {
      prompt = p;
      return reply;
    }
  } provider;
  provider.reply = reply;
  c.expect(explain(req, provider) == parsed && provider.prompt == golden, "explain with canned provider");
  if (o.pass) o.detail = std::to_string(golden.size()) + " byte golden prompt";
  return o;
}

Outcome service_determinism() {
  Outcome o;
  Checker c(o);
  auto data = planted::make();
  nlohmann::json config{{"seed", 0}, {"minSupport", 0.05}, {"minLift", 1.05}, {"resolution", 1.0}};
  auto run_in = [&](Service& s) {
    auto ds = s.create_dataset(data.csv, data.geojson).body["datasetId"];
    std::string id = s.create_run({{"datasetId", ds}, {"config", config}}).body["runId"];
    s.wait_run(id);
    return id;
  };
  Service a(ServiceOptions{}), b(ServiceOptions{});
  auto ia = run_in(a), ib = run_in(b);
  c.expect(a.artifact(ia).body.dump() == b.artifact(ib).body.dump(), "artifacts differ between runs");

  auto twice = [&](const std::string& what, const std::function<Response()>& f) {
    auto r1 = f(), r2 = f();
    c.expect(r1.status == 200, what + " returned " + std::to_string(r1.status));
    c.expect(r1.status == r2.status && r1.body.dump() == r2.body.dump(), what + " not idempotent");
  };
  twice("run", [&] { return a.get_run(ia); });
  twice("artifact", [&] { return a.artifact(ia); });
  twice("attributes", [&] { return a.attribute_matrix(ia, "cluster", std::nullopt); });
  twice("attributes(rule)", [&] { return a.attribute_matrix(ia, "rule", 0); });
  twice("heatmap", [&] { return a.heatmap(ia, "cluster", std::nullopt); });
  twice("heatmap(rule)", [&] { return a.heatmap(ia, "rule", 0); });
  twice("map", [&] { return a.map(ia, {}); });
  twice("map(cluster)", [&] { return a.map(ia, {0, std::nullopt, {"2016-07"}}); });
  twice("scatter", [&] { return a.scatter(ia, "meanLift", "meanOccurrences"); });
  auto ds = a.create_dataset(data.csv, data.geojson).body["datasetId"].get<std::string>();
  twice("dataset", [&] { return a.get_dataset(ds); });
  twice("regions", [&] { return a.regions(ds); });
  if (o.pass) o.detail = "artifacts byte-identical, 11 reads idempotent";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"mining oracle equivalence", mining_oracle_equivalence},
      {"metric exactness", metric_exactness},
      {"dedup contract", dedup_contract},
      {"similarity properties", similarity_properties},
      {"louvain", louvain_contract},
      {"end-to-end planted pattern", end_to_end_planted},
      {"seriation", seriation_contract},
      {"explain golden files", explain_golden},
      {"service determinism", service_determinism},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %s  (%s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
