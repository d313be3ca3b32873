#include <gtest/gtest.h>

#include <sstream>

#include "emfd/ingest.hpp"
#include "emfd/synth.hpp"

using namespace emfd;
using namespace std::chrono;

namespace {

Timestamp at(int h, int m, int s) { return sys_days{year{2019} / 9 / 3} + hours{h} + minutes{m} + seconds{s}; }

RawSegmentRow good_row() {
  return {"A", "T1", "2019-09-03T17:00:00Z", "arterial", "0.5", "2", "12", "30", "100", ""};
}

const char* kFixture =
    "segment_id,tract_id,bin_start,road_type,length_mi,lanes,probe_count,mean_speed_mph,volume_veh\n"
    "A,T1,2019-09-03T17:00:00Z,arterial,0.5,2,12,30,100\n"
    "B,T1,2019-09-03T17:00:00Z,freeway,1.2,3,40,55,900\n"
    "C,T1,2019-09-03T17:15:00Z,local,0.3,1,0,20,15\n"
    "D,T2,2019-09-03T17:15:00Z,ramp,0.2,1,3,25,\n"
    "E,T2,2019-09-03T17:30:00Z,arterial,0.7,2,5,-5,80\n"
    "F,T2,2019-09-03T17:30:00Z,arterial,0.7,2,5,33,80\n"
    "G,T2,2019-09-03T17:45:00Z,arterial,0.7,2,0,33,0\n"
    "H,T3,2019-09-03T18:00:00Z,\"local\",0.4,2,2,28,60\n"
    "I,T3,2019-09-03T18:07:30Z,freeway,2.0,4,50,61.5,1200\n"
    "J,T3,2019-09-03T18:15:00Z,freeway,2.0,4,50,64,1300\n";

}  // namespace

TEST(AlignBin, Examples) {
  EXPECT_EQ(align_bin(at(17, 0, 0)), at(17, 0, 0));
  EXPECT_EQ(align_bin(at(17, 14, 59)), at(17, 0, 0));
  EXPECT_EQ(align_bin(at(17, 15, 0)), at(17, 15, 0));
}

TEST(AlignBin, IdempotentAndFloors) {
  for (int s = -7200; s < 7200; s += 37) {
    const Timestamp t = at(0, 0, 0) + seconds{s};
    const Timestamp a = align_bin(t);
    EXPECT_EQ(align_bin(a), a);
    EXPECT_LE(a, t);
    EXPECT_LT(t - a, seconds{900});
    EXPECT_TRUE(is_bin_aligned(a));
  }
}

TEST(Rfc3339, ParsesOffsetsAndFractions) {
  EXPECT_EQ(parse_rfc3339("2019-09-03T17:00:00Z"), at(17, 0, 0));
  EXPECT_EQ(parse_rfc3339("2019-09-03T13:00:00-04:00"), at(17, 0, 0));
  EXPECT_EQ(parse_rfc3339("2019-09-03T17:00:05.75Z"), at(17, 0, 5));
  EXPECT_FALSE(parse_rfc3339("2019-09-03 17:00"));
  EXPECT_FALSE(parse_rfc3339("2019-13-03T17:00:00Z"));
  EXPECT_EQ(format_rfc3339(at(17, 15, 0)), "2019-09-03T17:15:00Z");
}

TEST(CheckRecord, AcceptsWellFormedRow) {
  auto c = check_record(good_row());
  ASSERT_TRUE(c.accepted());
  EXPECT_EQ(c.record->segment_id, "A");
  EXPECT_EQ(c.record->bin_start, at(17, 0, 0));
  EXPECT_EQ(c.record->road_type, RoadType::arterial);
  EXPECT_EQ(c.record->lanes, 2);
  EXPECT_DOUBLE_EQ(c.record->volume_veh, 100.0);
}

TEST(CheckRecord, ReasonCodes) {
  auto with = [](auto edit) {
    RawSegmentRow r = good_row();
    edit(r);
    return check_record(r).reason;
  };
  EXPECT_EQ(with([](auto& r) { r.mean_speed_mph = "-5"; }), "nonpositive speed");
  EXPECT_EQ(with([](auto& r) { r.lanes = "0"; }), "lanes<1");
  EXPECT_EQ(with([](auto& r) { r.length_mi = "0"; }), "nonpositive length");
  EXPECT_EQ(with([](auto& r) { r.length_mi = "50.5"; }), "length>50");
  EXPECT_EQ(with([](auto& r) { r.mean_speed_mph = "121"; }), "speed>120");
  EXPECT_EQ(with([](auto& r) { r.volume_veh = "-1"; }), "negative volume");
  EXPECT_EQ(with([](auto& r) { r.probe_count = "-1"; }), "negative probe_count");
  EXPECT_EQ(with([](auto& r) { r.volume_veh = "0"; }), "zero volume with probes");
  EXPECT_EQ(with([](auto& r) { r.road_type = "alley"; }), "unknown road type");
  EXPECT_EQ(with([](auto& r) { r.bin_start = "yesterday"; }), "bad timestamp");
  EXPECT_EQ(with([](auto& r) { r.lanes = "two"; }), "non-numeric value");
  EXPECT_EQ(with([](auto& r) { r.volume_veh = "nan"; }), "non-finite value");
  EXPECT_EQ(with([](auto& r) { r.tract_id = ""; }), "missing value");
  EXPECT_EQ(with([](auto& r) { r.zero_flow = "maybe"; }), "bad zero_flow flag");
}

TEST(CheckRecord, ZeroVolumeDecisionTable) {
  RawSegmentRow r = good_row();
  r.volume_veh = "50";
  r.probe_count = "0";
  EXPECT_TRUE(check_record(r).accepted());
  r.volume_veh = "0";
  EXPECT_TRUE(check_record(r).accepted());
  r.probe_count = "4";
  EXPECT_FALSE(check_record(r).accepted());
  r.zero_flow = "1";
  auto c = check_record(r);
  ASSERT_TRUE(c.accepted());
  EXPECT_TRUE(c.record->zero_flow);
}

TEST(CheckRecord, BoundsAreInclusive) {
  RawSegmentRow r = good_row();
  r.length_mi = "50";
  r.mean_speed_mph = "120";
  EXPECT_TRUE(check_record(r).accepted());
}

TEST(ParseSegments, TenRowFixtureWithTwoBadRows) {
  std::istringstream in(kFixture);
  auto parsed = parse_segment_records(in);
  EXPECT_EQ(parsed.report.rows_read, 10u);
  EXPECT_EQ(parsed.report.rows_accepted, 8u);
  ASSERT_EQ(parsed.report.rejects.size(), 2u);
  EXPECT_EQ(parsed.report.rejects[0], (Reject{5, "missing value"}));
  EXPECT_EQ(parsed.report.rejects[1], (Reject{6, "nonpositive speed"}));
  EXPECT_EQ(parsed.records.size(), 8u);
  const char* order[] = {"A", "B", "C", "F", "G", "H", "I", "J"};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(parsed.records[i].segment_id, order[i]);
  EXPECT_EQ(parsed.records[6].bin_start, at(18, 0, 0));
}

TEST(ParseSegments, ReportCountsAddUp) {
  std::istringstream in(kFixture);
  auto p = parse_segment_records(in);
  EXPECT_EQ(p.report.rows_read, p.report.rows_accepted + p.report.rejects.size());
}

TEST(ParseSegments, ColumnCountMismatchIsRejected) {
  std::istringstream in(std::string(kSegmentHeader) + "\nA,T1,2019-09-03T17:00:00Z,arterial,0.5,2\n");
  auto p = parse_segment_records(in);
  ASSERT_EQ(p.report.rejects.size(), 1u);
  EXPECT_EQ(p.report.rejects[0].reason, "column count");
  EXPECT_EQ(p.report.rejects[0].line, 2u);
}

TEST(ParseSegments, MissingColumnIsFatal) {
  std::istringstream in("segment_id,tract_id,bin_start\nA,T1,2019-09-03T17:00:00Z\n");
  EXPECT_THROW(parse_segment_records(in), InputError);
  std::istringstream empty("");
  EXPECT_THROW(parse_segment_records(empty), InputError);
}

TEST(ParseSegments, CustomSchemaAndColumnOrder) {
  SegmentSchema schema;
  schema.volume_veh = "vol";
  std::istringstream in(
      "vol,segment_id,tract_id,bin_start,road_type,length_mi,lanes,probe_count,mean_speed_mph\n"
      "100,A,T1,2019-09-03T17:03:00Z,arterial,0.5,2,12,30\n");
  auto p = parse_segment_records(in, schema);
  ASSERT_EQ(p.records.size(), 1u);
  EXPECT_DOUBLE_EQ(p.records[0].volume_veh, 100.0);
  EXPECT_EQ(p.records[0].bin_start, at(17, 0, 0));
}

TEST(ParseSegments, QuotedFieldsWithCommas) {
  std::istringstream in(std::string(kSegmentHeader) + "\n\"A,1\",\"T \"\"x\"\"\",2019-09-03T17:00:00Z,arterial,0.5,2,1,30,10\n");
  auto p = parse_segment_records(in);
  ASSERT_EQ(p.records.size(), 1u);
  EXPECT_EQ(p.records[0].segment_id, "A,1");
  EXPECT_EQ(p.records[0].tract_id, "T \"x\"");
}

TEST(ParseSegments, Deterministic) {
  std::istringstream a(kFixture), b(kFixture);
  auto pa = parse_segment_records(a);
  auto pb = parse_segment_records(b);
  EXPECT_EQ(pa.records, pb.records);
  EXPECT_EQ(pa.report, pb.report);
}

TEST(ParseSegments, RoundTrip) {
  std::istringstream in(kFixture);
  auto first = parse_segment_records(in);
  first.records[4].zero_flow = true;
  std::ostringstream out;
  write_segment_records(out, first.records);
  std::istringstream again(out.str());
  auto second = parse_segment_records(again);
  EXPECT_EQ(second.records, first.records);
  EXPECT_TRUE(second.report.rejects.empty());
}

TEST(ParseSegments, RoundTripOnSyntheticRecords) {
  auto cfg = synth::basic_scenario(2, 3, 5);
  cfg.speed_noise = 0.05;
  cfg.volume_noise = 0.05;
  const auto sc = synth::generate_scenario(cfg);
  std::ostringstream out;
  write_segment_records(out, sc.records);
  std::istringstream in(out.str());
  EXPECT_EQ(parse_segment_records(in).records, sc.records);
}

TEST(RejectReport, JsonLines) {
  ValidationReport r;
  r.rejects = {{3, "lanes<1"}, {9, "bad timestamp"}};
  std::ostringstream out;
  write_reject_report(out, r);
  EXPECT_EQ(out.str(), "{\"line\":3,\"reason\":\"lanes<1\"}\n{\"line\":9,\"reason\":\"bad timestamp\"}\n");
}
