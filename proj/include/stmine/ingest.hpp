#pragma once

// CSV event and GeoJSON region ingestion with the cleaning rules applied
// before mining: rows with null markers in the selected columns or an
// unparseable DATE are dropped and counted.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "stmine/core.hpp"
#include "stmine/date.hpp"
#include "stmine/error.hpp"

namespace stmine {

inline constexpr std::string_view kDateColumn = "DATE";
inline constexpr std::string_view kPlaceColumn = "PLACE";

// ---------------------------------------------------------------------------
// CSV

using CsvRow = std::vector<std::string>;

/// RFC 4180 reader: comma-delimited, double-quote escaping, LF or CRLF line
/// ends, quoted fields may span lines. A leading UTF-8 BOM is skipped.
/// Every record must have as many fields as the header.
inline std::vector<CsvRow> parse_csv(std::string_view text) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool inQuotes = false;
  bool fieldWasQuoted = false;
  bool rowHasContent = false;
  std::size_t line = 1;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    fieldWasQuoted = false;
  };
  auto end_row = [&] {
    end_field();
    // Blank lines are skipped.
    if (!(row.size() == 1 && row[0].empty() && !rowHasContent)) {
      if (!rows.empty() && row.size() != rows.front().size())
        fail("MalformedCsv", "line " + std::to_string(line) + ": expected " +
                                 std::to_string(rows.front().size()) + " fields, found " +
                                 std::to_string(row.size()));
      rows.push_back(std::move(row));
    }
    row.clear();
    rowHasContent = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (inQuotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          inQuotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || fieldWasQuoted)
          fail("MalformedCsv", "line " + std::to_string(line) + ": stray quote inside field");
        inQuotes = true;
        fieldWasQuoted = true;
        rowHasContent = true;
        break;
      case ',':
        end_field();
        rowHasContent = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        end_row();
        ++line;
        break;
      case '\n':
        end_row();
        ++line;
        break;
      default:
        if (fieldWasQuoted)
          fail("MalformedCsv", "line " + std::to_string(line) + ": text after closing quote");
        field.push_back(c);
        rowHasContent = true;
    }
  }
  if (inQuotes) fail("MalformedCsv", "unterminated quoted field");
  if (rowHasContent || !field.empty()) end_row();
  if (rows.empty()) fail("MalformedCsv", "missing header row");
  return rows;
}

// ---------------------------------------------------------------------------
// Events

struct NullMarkers {
  std::vector<std::string> exact{"Unknown"};
  std::vector<std::string> caseInsensitive{"NA", "N/A", "NULL"};

  bool is_null(std::string_view raw) const {
    auto v = detail::trim(raw);
    if (v.empty()) return true;
    for (const auto& m : exact)
      if (v == m) return true;
    for (const auto& m : caseInsensitive)
      if (m.size() == v.size() &&
          std::equal(m.begin(), m.end(), v.begin(), [](char a, char b) {
            return std::tolower(static_cast<unsigned char>(a)) ==
                   std::tolower(static_cast<unsigned char>(b));
          }))
        return true;
    return false;
  }
};

struct DatasetDescriptor {
  std::vector<std::string> columns;
  // Selected mining attributes other than DATE and PLACE.
  std::vector<std::string> attributeColumns;
  // PLACE was selected as a mining attribute as well.
  bool placeAsAttribute = false;
  std::size_t rowCount = 0;
  std::string dateColumn{kDateColumn};
  std::string placeColumn{kPlaceColumn};
};

struct IngestReport {
  std::size_t totalRows = 0;
  std::size_t keptRows = 0;
  std::size_t droppedNullRows = 0;
  std::size_t droppedUnparseableDateRows = 0;
  std::set<std::string> unmatchedPlaces;
};

struct IngestResult {
  std::vector<Event> events;
  DatasetDescriptor descriptor;
  IngestReport report;
};

/// Parses the event table. `selected` names the attribute columns used for
/// mining; it may include PLACE, never DATE.
inline IngestResult parse_events_csv(std::string_view bytes,
                                     const std::vector<std::string>& selected,
                                     const NullMarkers& markers = {}) {
  auto rows = parse_csv(bytes);
  const CsvRow& header = rows.front();

  IngestResult out;
  out.descriptor.columns = header;
  out.descriptor.rowCount = rows.size() - 1;

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) index.emplace(header[i], i);
  auto column = [&](std::string_view name) {
    auto it = index.find(std::string(name));
    if (it == index.end()) fail("MissingColumn", "column '" + std::string(name) + "' is absent");
    return it->second;
  };
  const std::size_t dateCol = column(kDateColumn);
  const std::size_t placeCol = column(kPlaceColumn);

  std::vector<std::pair<std::string, std::size_t>> attrCols;
  std::unordered_set<std::string> seen;
  for (const auto& name : selected) {
    if (name == kDateColumn) fail("InvalidAttribute", "DATE cannot be a mining attribute");
    if (!seen.insert(name).second) continue;
    attrCols.emplace_back(name, column(name));
    if (name == kPlaceColumn) out.descriptor.placeAsAttribute = true;
    else out.descriptor.attributeColumns.push_back(name);
  }

  IngestReport& report = out.report;
  report.totalRows = rows.size() - 1;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const CsvRow& row = rows[r];
    bool null = markers.is_null(row[placeCol]);
    for (const auto& [name, col] : attrCols) null = null || markers.is_null(row[col]);
    if (null) {
      ++report.droppedNullRows;
      continue;
    }
    auto date = Date::parse(detail::trim(row[dateCol]));
    if (!date) {
      ++report.droppedUnparseableDateRows;
      continue;
    }
    std::vector<Item> items;
    items.reserve(attrCols.size());
    for (const auto& [name, col] : attrCols) items.emplace_back(name, row[col]);
    out.events.push_back(Event{*date, row[placeCol], ItemSet(std::move(items))});
  }
  report.keptRows = out.events.size();
  if (out.events.empty()) fail("EmptyDataset", "no rows left after cleaning");
  return out;
}

// ---------------------------------------------------------------------------
// Regions

/// Reads an RFC 7946 FeatureCollection; region ids come verbatim from the
/// `idProperty` feature property.
inline std::vector<Region> parse_regions_geojson(std::string_view bytes,
                                                 const std::string& idProperty = "name") {
  nlohmann::json doc = nlohmann::json::parse(bytes, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array())
    fail("NotFeatureCollection", "GeoJSON document is not a FeatureCollection");

  std::vector<Region> regions;
  std::unordered_set<std::string> ids;
  const auto& features = doc["features"];
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    const nlohmann::json* props = nullptr;
    if (f.is_object() && f.contains("properties") && f["properties"].is_object())
      props = &f["properties"];
    if (!props || !props->contains(idProperty) || !(*props)[idProperty].is_string())
      fail("MissingIdProperty", "feature " + std::to_string(i) + " has no string property '" +
                                    idProperty + "'");
    Region region;
    region.id = (*props)[idProperty].get<std::string>();
    region.displayName = props->contains("name") && (*props)["name"].is_string()
                             ? (*props)["name"].get<std::string>()
                             : region.id;
    region.geometry = f.value("geometry", nlohmann::json());
    if (!ids.insert(region.id).second) fail("DuplicateRegionId", "duplicate region id '" + region.id + "'");
    regions.push_back(std::move(region));
  }
  return regions;
}

/// Distinct event places with no region of the same id (exact, case-sensitive).
inline std::set<std::string> validate_region_coverage(const std::vector<Event>& events,
                                                      const std::vector<Region>& regions) {
  std::unordered_set<std::string> known;
  for (const auto& r : regions) known.insert(r.id);
  std::set<std::string> unmatched;
  for (const auto& e : events)
    if (!known.contains(e.place)) unmatched.insert(e.place);
  return unmatched;
}

inline nlohmann::json to_json(const IngestReport& r) {
  return {{"totalRows", r.totalRows},
          {"keptRows", r.keptRows},
          {"droppedNullRows", r.droppedNullRows},
          {"droppedUnparseableDateRows", r.droppedUnparseableDateRows},
          {"unmatchedPlaces", r.unmatchedPlaces}};
}

inline nlohmann::json to_json(const DatasetDescriptor& d) {
  return {{"columns", d.columns},
          {"attributeColumns", d.attributeColumns},
          {"placeAsAttribute", d.placeAsAttribute},
          {"rowCount", d.rowCount},
          {"dateColumn", d.dateColumn},
          {"placeColumn", d.placeColumn}};
}

}  // namespace stmine
