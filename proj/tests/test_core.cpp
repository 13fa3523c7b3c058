#include <gtest/gtest.h>

#include "mhfa/core/dates.hpp"
#include "mhfa/core/errors.hpp"
#include "mhfa/core/files.hpp"
#include "mhfa/core/hashing.hpp"
#include "mhfa/core/parallel.hpp"
#include "mhfa/core/templates.hpp"
#include "mhfa/core/text.hpp"
#include "support.hpp"

using namespace mhfa;
using namespace std::chrono;

TEST(Dates, ParseAndFormatRoundTrip) {
    const auto d = parse_date("2024-02-29");
    ASSERT_TRUE(d);
    EXPECT_EQ(format_date(*d), "2024-02-29");
    EXPECT_FALSE(parse_date("2023-02-29"));
    EXPECT_FALSE(parse_date("2024-13-01"));
    EXPECT_FALSE(parse_date("2024-1-01"));
    EXPECT_FALSE(parse_date(""));
}

TEST(Dates, WeekStartHonorsAnchor) {
    // 2024-01-03 is a Wednesday.
    const Date wed = test::day(2024, 1, 3);
    EXPECT_EQ(format_date(week_start(wed, Monday)), "2024-01-01");
    EXPECT_EQ(format_date(week_start(wed, Sunday)), "2023-12-31");
    EXPECT_EQ(format_date(week_start(wed, Wednesday)), "2024-01-03");
}

TEST(Dates, Rfc3339RoundTripsMilliseconds) {
    const auto tp = sys_days{year{2024} / 3 / 5} + hours(7) + minutes(8) + seconds(9) + milliseconds(123);
    const auto s = format_rfc3339(tp);
    EXPECT_EQ(s, "2024-03-05T07:08:09.123Z");
    const auto back = parse_rfc3339(s);
    ASSERT_TRUE(back);
    EXPECT_EQ(*back, tp);
    EXPECT_FALSE(parse_rfc3339("yesterday"));
}

TEST(Text, FillTemplateSubstitutesAndRejectsMissing) {
    EXPECT_EQ(fill_template("a {{x}} b {{ y }}", {{"x", "1"}, {"y", "2"}}), "a 1 b 2");
    EXPECT_THROW(fill_template("{{missing}}", {}), ValidationError);
}

TEST(Text, CsvLineHandlesQuotes) {
    const auto cells = parse_csv_line(R"(a,"b,c","d ""q""",)");
    ASSERT_EQ(cells.size(), 4u);
    EXPECT_EQ(cells[1], "b,c");
    EXPECT_EQ(cells[2], "d \"q\"");
    EXPECT_EQ(cells[3], "");
    EXPECT_EQ(parse_csv_line(csv_escape("x,\"y\""))[0], "x,\"y\"");
}

TEST(Text, FormatRoundedTrimsZeros) {
    EXPECT_EQ(format_rounded(1000.0, 2), "1000");
    EXPECT_EQ(format_rounded(2.345, 2), "2.35");
    EXPECT_EQ(format_rounded(-0.001, 2), "0");
    EXPECT_EQ(format_number(0.5), "0.5");
}

TEST(Hashing, Sha256KnownVector) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Templates, EmbeddedAndOverride) {
    EXPECT_FALSE(templates::get("analysis_five_phase.txt").empty());
    EXPECT_THROW(templates::get("no_such_template.txt"), Error);
    test::TempDir dir;
    write_file(dir / "tone_neutral.txt", "overridden");
    templates::set_override_dir(dir.path());
    EXPECT_EQ(templates::get("tone_neutral.txt"), "overridden");
    templates::set_override_dir({});
    EXPECT_NE(templates::get("tone_neutral.txt"), "overridden");
}

TEST(Files, JsonlReportsLineOfBadJson) {
    test::TempDir dir;
    write_file(dir / "x.jsonl", "{\"a\":1}\n\n{oops\n");
    try {
        read_jsonl(dir / "x.jsonl");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
    }
}

TEST(Parallel, RunsEveryIndexOnceAndRethrows) {
    std::vector<std::atomic<int>> hits(257);
    parallel_for(hits.size(), 8, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) EXPECT_EQ(h.load(), 1);
    EXPECT_THROW(parallel_for(10, 4, [](std::size_t i) {
                     if (i == 5) throw std::runtime_error("boom");
                 }),
                 std::runtime_error);
}
