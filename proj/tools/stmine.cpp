// Command-line driver: batch runs with JSON artifact export, dataset
// validation, and the HTTP service.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stmine/pipeline.hpp"
#include "stmine/provider.hpp"
#include "stmine/service.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) stmine::fail("FileNotFound", "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ',');)
    if (!part.empty()) out.push_back(part);
  return out;
}

struct RunFlags {
  std::string events;
  std::string regions;
  std::string attributes;
  std::string start;
  std::string end;
  std::string granularity = "month";
  double minSupport = 0.05;
  double minLift = 1.05;
  double resolution = 1.0;
  std::uint64_t seed = 0;
  std::size_t maxRuleLen = 5;
  std::string regionIdProperty = "name";
  std::string datasetNoun = "dataset";
  std::string out;
};

stmine::RunConfig to_config(const RunFlags& f) {
  stmine::RunConfig c;
  c.attributeColumns = split_list(f.attributes);
  if (!f.start.empty()) c.startDate = stmine::Date::parse_or_throw(f.start, "InvalidConfig");
  if (!f.end.empty()) c.endDate = stmine::Date::parse_or_throw(f.end, "InvalidConfig");
  c.granularity = stmine::parse_granularity(f.granularity);
  c.minSupport = f.minSupport;
  c.minLift = f.minLift;
  c.resolution = f.resolution;
  c.seed = f.seed;
  c.maxRuleLen = f.maxRuleLen;
  c.regionIdProperty = f.regionIdProperty;
  c.datasetNoun = f.datasetNoun;
  c.validate();
  return c;
}

int cmd_run(const RunFlags& f) {
  auto csv = slurp(f.events);
  auto geojson = f.regions.empty() ? std::string() : slurp(f.regions);
  auto result = stmine::run_pipeline(csv, geojson, to_config(f));
  for (const auto& p : result.report.unmatchedPlaces) std::cerr << "warning: place '" << p << "' has no region\n";
  std::cerr << "slices: " << result.slices.size() << ", rules: " << result.rules.size()
            << ", clusters: " << result.partition.clusterCount << "\n";
  auto text = stmine::artifact_json(result).dump(2) + "\n";
  if (f.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(f.out, std::ios::binary);
    out << text;
    if (!out) stmine::fail("WriteFailed", "cannot write " + f.out);
  }
  return 0;
}

int cmd_validate(const RunFlags& f) {
  auto ingest = stmine::parse_events_csv(slurp(f.events), split_list(f.attributes));
  if (!f.regions.empty()) {
    auto regions = stmine::parse_regions_geojson(slurp(f.regions), f.regionIdProperty);
    ingest.report.unmatchedPlaces = stmine::validate_region_coverage(ingest.events, regions);
  }
  for (const auto& p : ingest.report.unmatchedPlaces) std::cerr << "warning: place '" << p << "' has no region\n";
  nlohmann::json j{{"descriptor", stmine::to_json(ingest.descriptor)}, {"report", stmine::to_json(ingest.report)}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

httplib::Server* g_server = nullptr;

int cmd_serve(int port, const std::string& host, const std::string& dataDir) {
  stmine::ServiceOptions options;
  options.dataDir = dataDir;
  options.providerFactory = [] {
    return std::make_unique<stmine::GeminiProvider>(stmine::GeminiConfig::from_env());
  };
  stmine::Service service(options);
  httplib::Server server;
  stmine::mount(server, service);
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  std::cerr << "listening on http://" << host << ":" << port << "/api/v1\n";
  if (!server.listen(host, port)) {
    std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatiotemporal association rule mining and clustering"};
  app.require_subcommand(1);

  RunFlags flags;
  auto add_input = [&](CLI::App* cmd) {
    cmd->add_option("--events", flags.events, "Event CSV with DATE and PLACE columns")->required();
    cmd->add_option("--regions", flags.regions, "GeoJSON FeatureCollection of regions");
    cmd->add_option("--attributes", flags.attributes, "Comma-separated mining attributes (default: all)");
    cmd->add_option("--region-id-property", flags.regionIdProperty, "Feature property holding the region id");
  };

  auto* run = app.add_subcommand("run", "Mine, deduplicate and cluster rules; write the artifact JSON");
  add_input(run);
  run->add_option("--start", flags.start, "First date, YYYY-mm-dd");
  run->add_option("--end", flags.end, "Last date, YYYY-mm-dd");
  run->add_option("--granularity", flags.granularity, "month, week or year")
      ->check(CLI::IsMember({"month", "week", "year"}));
  run->add_option("--min-support", flags.minSupport, "Minimum per-slice support");
  run->add_option("--min-lift", flags.minLift, "Minimum lift");
  run->add_option("--resolution", flags.resolution, "Louvain resolution");
  run->add_option("--seed", flags.seed, "Louvain seed");
  run->add_option("--max-rule-len", flags.maxRuleLen, "Largest itemset turned into rules");
  run->add_option("--dataset-noun", flags.datasetNoun, "Dataset description used in explanation prompts");
  run->add_option("--out", flags.out, "Artifact path (default: stdout)");

  auto* validate = app.add_subcommand("validate", "Check the event CSV and region GeoJSON");
  add_input(validate);

  int port = 8080;
  std::string host = "127.0.0.1";
  std::string dataDir = "stmine-data";
  auto* serve = app.add_subcommand("serve", "Host the HTTP API");
  serve->add_option("--port", port, "Port to listen on");
  serve->add_option("--host", host, "Address to bind");
  serve->add_option("--data-dir", dataDir, "Directory for datasets and run artifacts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run) return cmd_run(flags);
    if (*validate) return cmd_validate(flags);
    if (*serve) return cmd_serve(port, host, dataDir);
  } catch (const stmine::Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
