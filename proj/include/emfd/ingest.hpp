#pragma once

// Canonical per-segment observation records: parsing, validation, time binning.

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "emfd/csv.hpp"
#include "emfd/error.hpp"
#include "emfd/timeutil.hpp"

namespace emfd {

enum class RoadType : std::uint8_t { freeway, arterial, local, ramp };

inline constexpr std::array<RoadType, 4> kAllRoadTypes = {RoadType::freeway, RoadType::arterial,
                                                          RoadType::local, RoadType::ramp};

inline std::string_view to_string(RoadType r) {
  switch (r) {
    case RoadType::freeway: return "freeway";
    case RoadType::arterial: return "arterial";
    case RoadType::local: return "local";
    case RoadType::ramp: return "ramp";
  }
  return "?";
}

inline std::optional<RoadType> parse_road_type(std::string_view s) {
  for (RoadType r : kAllRoadTypes) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

/// One road segment observed over one 15-minute bin.
struct SegmentRecord {
  std::string segment_id;
  std::string tract_id;
  Timestamp bin_start;
  RoadType road_type = RoadType::arterial;
  double length_mi = 0.0;
  int lanes = 1;
  std::int64_t probe_count = 0;
  double mean_speed_mph = 0.0;
  double volume_veh = 0.0;
  /// Explicit "no flow observed" marker; allows volume 0 alongside probes.
  bool zero_flow = false;

  friend bool operator==(const SegmentRecord&, const SegmentRecord&) = default;
};

inline constexpr double kMaxSegmentLengthMi = 50.0;
inline constexpr double kMaxSpeedMph = 120.0;

/// Stable reject reason codes written to the side-channel report.
namespace reject_reason {
inline constexpr std::string_view column_count = "column count";
inline constexpr std::string_view missing_value = "missing value";
inline constexpr std::string_view non_numeric = "non-numeric value";
inline constexpr std::string_view non_finite = "non-finite value";
inline constexpr std::string_view bad_timestamp = "bad timestamp";
inline constexpr std::string_view unknown_road_type = "unknown road type";
inline constexpr std::string_view nonpositive_length = "nonpositive length";
inline constexpr std::string_view length_too_long = "length>50";
inline constexpr std::string_view lanes_below_one = "lanes<1";
inline constexpr std::string_view negative_probes = "negative probe_count";
inline constexpr std::string_view nonpositive_speed = "nonpositive speed";
inline constexpr std::string_view speed_too_high = "speed>120";
inline constexpr std::string_view negative_volume = "negative volume";
inline constexpr std::string_view zero_volume_with_probes = "zero volume with probes";
inline constexpr std::string_view bad_zero_flow_flag = "bad zero_flow flag";
}  // namespace reject_reason

struct Reject {
  std::size_t line = 0;
  std::string reason;

  friend bool operator==(const Reject&, const Reject&) = default;
};

struct ValidationReport {
  std::size_t rows_read = 0;
  std::size_t rows_accepted = 0;
  std::vector<Reject> rejects;

  friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

/// Raw text values of one candidate row, before validation.
struct RawSegmentRow {
  std::string segment_id;
  std::string tract_id;
  std::string bin_start;
  std::string road_type;
  std::string length_mi;
  std::string lanes;
  std::string probe_count;
  std::string mean_speed_mph;
  std::string volume_veh;
  std::string zero_flow;  // optional column; empty means false
};

struct RecordCheck {
  std::optional<SegmentRecord> record;
  std::string reason;

  bool accepted() const { return record.has_value(); }

  static RecordCheck accept(SegmentRecord r) { return {std::move(r), {}}; }
  static RecordCheck reject(std::string_view why) { return {std::nullopt, std::string(why)}; }
};

/// Validates one candidate. The first failing rule determines the reason.
/// Timestamps are floored to their 15-minute bin.
inline RecordCheck check_record(const RawSegmentRow& raw) {
  namespace rr = reject_reason;
  if (raw.segment_id.empty() || raw.tract_id.empty() || raw.bin_start.empty() ||
      raw.road_type.empty() || raw.length_mi.empty() || raw.lanes.empty() ||
      raw.probe_count.empty() || raw.mean_speed_mph.empty() || raw.volume_veh.empty()) {
    return RecordCheck::reject(rr::missing_value);
  }
  SegmentRecord rec;
  rec.segment_id = raw.segment_id;
  rec.tract_id = raw.tract_id;

  auto ts = parse_rfc3339(raw.bin_start);
  if (!ts) return RecordCheck::reject(rr::bad_timestamp);
  rec.bin_start = align_bin(*ts);

  auto road = parse_road_type(raw.road_type);
  if (!road) return RecordCheck::reject(rr::unknown_road_type);
  rec.road_type = *road;

  auto length = csv::parse_double(raw.length_mi);
  auto lanes = csv::parse_int(raw.lanes);
  auto probes = csv::parse_int(raw.probe_count);
  auto speed = csv::parse_double(raw.mean_speed_mph);
  auto volume = csv::parse_double(raw.volume_veh);
  if (!length || !lanes || !probes || !speed || !volume) return RecordCheck::reject(rr::non_numeric);
  if (!std::isfinite(*length) || !std::isfinite(*speed) || !std::isfinite(*volume)) {
    return RecordCheck::reject(rr::non_finite);
  }

  if (raw.zero_flow.empty() || raw.zero_flow == "0" || raw.zero_flow == "false") {
    rec.zero_flow = false;
  } else if (raw.zero_flow == "1" || raw.zero_flow == "true") {
    rec.zero_flow = true;
  } else {
    return RecordCheck::reject(rr::bad_zero_flow_flag);
  }

  if (*length <= 0.0) return RecordCheck::reject(rr::nonpositive_length);
  if (*length > kMaxSegmentLengthMi) return RecordCheck::reject(rr::length_too_long);
  if (*lanes < 1) return RecordCheck::reject(rr::lanes_below_one);
  if (*probes < 0) return RecordCheck::reject(rr::negative_probes);
  if (*speed <= 0.0) return RecordCheck::reject(rr::nonpositive_speed);
  if (*speed > kMaxSpeedMph) return RecordCheck::reject(rr::speed_too_high);
  if (*volume < 0.0) return RecordCheck::reject(rr::negative_volume);
  // Probes are a subsample, so positive volume with zero probes is fine; the
  // reverse needs the explicit zero-flow marker.
  if (*volume == 0.0 && *probes > 0 && !rec.zero_flow) {
    return RecordCheck::reject(rr::zero_volume_with_probes);
  }
  if (*lanes > std::numeric_limits<int>::max()) return RecordCheck::reject(rr::non_numeric);

  rec.length_mi = *length;
  rec.lanes = static_cast<int>(*lanes);
  rec.probe_count = *probes;
  rec.mean_speed_mph = *speed;
  rec.volume_veh = *volume;
  return RecordCheck::accept(std::move(rec));
}

/// Maps canonical field names onto the header names present in a file.
struct SegmentSchema {
  std::string segment_id = "segment_id";
  std::string tract_id = "tract_id";
  std::string bin_start = "bin_start";
  std::string road_type = "road_type";
  std::string length_mi = "length_mi";
  std::string lanes = "lanes";
  std::string probe_count = "probe_count";
  std::string mean_speed_mph = "mean_speed_mph";
  std::string volume_veh = "volume_veh";
  /// Optional column; absent means no record carries the flag.
  std::string zero_flow = "zero_flow";
};

inline constexpr std::string_view kSegmentHeader =
    "segment_id,tract_id,bin_start,road_type,length_mi,lanes,probe_count,mean_speed_mph,volume_veh";

struct ParsedSegments {
  std::vector<SegmentRecord> records;
  ValidationReport report;
};

/// Parses a canonical segment stream. Row-level problems become rejects; a
/// missing required column or an unreadable stream throws InputError.
inline ParsedSegments parse_segment_records(std::istream& in, const SegmentSchema& schema = {}) {
  if (!in) throw InputError("segment stream is not readable");
  csv::Reader reader(in);
  csv::Header header(reader.read_header());

  const std::size_t c_seg = header.require(schema.segment_id);
  const std::size_t c_tract = header.require(schema.tract_id);
  const std::size_t c_bin = header.require(schema.bin_start);
  const std::size_t c_road = header.require(schema.road_type);
  const std::size_t c_len = header.require(schema.length_mi);
  const std::size_t c_lanes = header.require(schema.lanes);
  const std::size_t c_probes = header.require(schema.probe_count);
  const std::size_t c_speed = header.require(schema.mean_speed_mph);
  const std::size_t c_vol = header.require(schema.volume_veh);
  const std::optional<std::size_t> c_zero = header.find(schema.zero_flow);

  ParsedSegments out;
  csv::Row row;
  while (reader.next(row)) {
    if (csv::is_blank(row)) continue;
    ++out.report.rows_read;
    if (row.size() != header.size()) {
      out.report.rejects.push_back({reader.record_line(), std::string(reject_reason::column_count)});
      continue;
    }
    RawSegmentRow raw{row[c_seg],    row[c_tract],  row[c_bin],   row[c_road],
                      row[c_len],    row[c_lanes],  row[c_probes], row[c_speed],
                      row[c_vol],    c_zero ? row[*c_zero] : std::string()};
    RecordCheck check = check_record(raw);
    if (check.accepted()) {
      out.records.push_back(std::move(*check.record));
      ++out.report.rows_accepted;
    } else {
      out.report.rejects.push_back({reader.record_line(), std::move(check.reason)});
    }
  }
  if (reader.stream_failed()) throw InputError("I/O error while reading segment stream");
  return out;
}

/// Writes records in the canonical format. A trailing `zero_flow` column is
/// added only when some record carries the flag.
inline void write_segment_records(std::ostream& out, const std::vector<SegmentRecord>& records) {
  bool any_flag = false;
  for (const auto& r : records) any_flag = any_flag || r.zero_flow;
  out << kSegmentHeader << (any_flag ? ",zero_flow\n" : "\n");
  for (const auto& r : records) {
    std::vector<std::string> fields{r.segment_id,
                                    r.tract_id,
                                    format_rfc3339(r.bin_start),
                                    std::string(to_string(r.road_type)),
                                    csv::format_double(r.length_mi),
                                    std::to_string(r.lanes),
                                    std::to_string(r.probe_count),
                                    csv::format_double(r.mean_speed_mph),
                                    csv::format_double(r.volume_veh)};
    if (any_flag) fields.emplace_back(r.zero_flow ? "1" : "0");
    csv::write_row(out, fields);
  }
}

/// JSON lines, one `{"line":N,"reason":"..."}` object per reject.
inline void write_reject_report(std::ostream& out, const ValidationReport& report) {
  for (const auto& rej : report.rejects) {
    nlohmann::ordered_json j;
    j["line"] = rej.line;
    j["reason"] = rej.reason;
    out << j.dump() << '\n';
  }
}

}  // namespace emfd
