#include <sevnet/dataset.hpp>

#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

using namespace sevnet;

namespace {

SchemaSpec weather_schema() {
    SchemaSpec s;
    s.columns = {{"Temperature", ColumnKind::Numeric},
                 {"City", ColumnKind::Categorical},
                 {"Traffic_Signal", ColumnKind::Boolean},
                 {"Severity", ColumnKind::Target}};
    s.target_cardinality = 4;
    return s;
}

Table parse(const std::string& text, const SchemaSpec& schema = weather_schema()) {
    std::istringstream in(text);
    return ingest_csv(in, schema);
}

} // namespace

TEST(Schema, RejectsDuplicateNamesAndMissingTarget) {
    SchemaSpec dup = weather_schema();
    dup.columns.push_back({"City", ColumnKind::Categorical});
    EXPECT_THROW(dup.validate(), Error);

    SchemaSpec no_target = weather_schema();
    no_target.columns.pop_back();
    EXPECT_THROW(no_target.validate(), Error);
}

TEST(Schema, JsonRoundTrip) {
    const auto j = nlohmann::json::parse(
        R"({"columns":[{"name":"a","kind":"numeric"},{"name":"b","kind":"boolean"},{"name":"y","kind":"target"}],"target_cardinality":3})");
    const auto s = j.get<SchemaSpec>();
    EXPECT_EQ(s.columns.size(), 3u);
    EXPECT_EQ(s.columns[1].kind, ColumnKind::Boolean);
    EXPECT_EQ(nlohmann::json(s), j);
}

TEST(Ingest, ParsesThreeRows) {
    const auto t = parse("Temperature,City,Traffic_Signal,Severity\n70,Houston,True,2\n71,Austin,False,2\n55,Dallas,True,3\n");
    EXPECT_EQ(t.n_rows, 3u);
    EXPECT_EQ(t.target(), (std::vector<int>{2, 2, 3}));
    EXPECT_EQ(t.column("City").text[1], "Austin");
    EXPECT_EQ(t.dropped_rows, 0u);
}

TEST(Ingest, DropsRowsWithBlankTarget) {
    const auto t = parse("Temperature,City,Traffic_Signal,Severity\n70,Houston,True,2\n71,Austin,False,\n55,Dallas,True,3\n");
    EXPECT_EQ(t.n_rows, 2u);
    EXPECT_EQ(t.dropped_rows, 1u);
    EXPECT_EQ(t.target(), (std::vector<int>{2, 3}));
}

TEST(Ingest, UnparseableNumericBecomesMissing) {
    const auto t = parse("Temperature,City,Traffic_Signal,Severity\nabc,Houston,True,2\n");
    EXPECT_EQ(t.n_rows, 1u);
    EXPECT_EQ(t.column("Temperature").missing[0], 1);
}

TEST(Ingest, TrimsAndHandlesQuotedFields) {
    const auto t = parse("Severity,City,Temperature,Traffic_Signal\r\n1,\"  San Antonio, TX \",\" 3.5\",  True \r\n");
    EXPECT_EQ(t.column("City").text[0], "San Antonio, TX");
    EXPECT_DOUBLE_EQ(t.column("Temperature").numbers[0], 3.5);
    EXPECT_EQ(t.column("Traffic_Signal").text[0], "True");
}

TEST(Ingest, Errors) {
    try {
        parse("Temperature,City,Severity\n1,a,2\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), "MissingColumn");
    }
    try {
        parse("");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), "EmptyFile");
    }
    try {
        parse("Temperature,City,Traffic_Signal,Severity\n1,a,True,5\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), "TargetOutOfRange");
    }
}

TEST(Ingest, PredictionInputMayLackTarget) {
    std::istringstream in("Temperature,City,Traffic_Signal\n1,a,True\n");
    const auto t = ingest_csv(in, weather_schema(), IngestOptions{.require_target = false});
    EXPECT_EQ(t.n_rows, 1u);
    EXPECT_FALSE(t.has_target());
}

TEST(Impute, NumericMedianAndUnknownCategory) {
    const auto t = parse("Temperature,City,Traffic_Signal,Severity\n1,A,True,1\n,,False,2\n3,B,,2\n");
    const auto imputed = impute(t);
    EXPECT_EQ(imputed.column("Temperature").numbers, (std::vector<double>{1, 2, 3}));
    EXPECT_EQ(imputed.column("City").text[1], "Unknown");
    EXPECT_EQ(imputed.column("Traffic_Signal").text[2], "Unknown");
    EXPECT_EQ(imputed.missing_count(), 0u);
}

TEST(Impute, FullyObservedTableUnchanged) {
    const auto t = parse("Temperature,City,Traffic_Signal,Severity\n1,A,True,1\n2,B,False,2\n");
    const auto imputed = impute(t);
    EXPECT_EQ(imputed.column("Temperature").numbers, t.column("Temperature").numbers);
    EXPECT_EQ(imputed.column("City").text, t.column("City").text);
}

TEST(Impute, AllMissingNumericColumnFails) {
    const auto t = parse("Temperature,City,Traffic_Signal,Severity\n,A,True,1\nx,B,False,2\n");
    try {
        impute(t);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), "AllMissingColumn");
    }
}

TEST(ClassDistribution, Counting) {
    EXPECT_EQ(class_distribution(std::vector<int>{1, 2, 2, 2}, 4), (std::vector<double>{0.25, 0.75, 0, 0}));
    EXPECT_EQ(class_distribution(std::vector<int>{3, 3, 3}, 4), (std::vector<double>{0, 0, 1, 0}));
}

TEST(ClassDistribution, SumsToOneProperty) {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<int> labels(1 + rng.below(500));
        for (auto& y : labels) y = 1 + static_cast<int>(rng.below(4));
        const auto p = class_distribution(labels, 4);
        EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    }
}

TEST(Synthetic, LargestRemainderClassCounts) {
    SyntheticSpec spec;
    spec.n_rows = 1000;
    spec.class_proportions = {0.003, 0.71, 0.272, 0.015};
    spec.seed = 7;
    const auto t = generate_synthetic(spec);
    std::vector<int> counts(4, 0);
    for (int y : t.target()) ++counts[static_cast<std::size_t>(y - 1)];
    EXPECT_EQ(counts, (std::vector<int>{3, 710, 272, 15}));
}

TEST(Synthetic, DeterministicPerSeed) {
    SyntheticSpec spec;
    spec.seed = 7;
    std::ostringstream a;
    std::ostringstream b;
    write_csv(a, generate_synthetic(spec));
    write_csv(b, generate_synthetic(spec));
    EXPECT_EQ(a.str(), b.str());

    spec.seed = 8;
    std::ostringstream c;
    write_csv(c, generate_synthetic(spec));
    EXPECT_NE(a.str(), c.str());
}

TEST(Synthetic, InvalidProportions) {
    SyntheticSpec spec;
    spec.class_proportions = {0.5, 0.6};
    EXPECT_THROW(generate_synthetic(spec), Error);
    spec.class_proportions = {1.0, 0.0};
    EXPECT_THROW(generate_synthetic(spec), Error);
}

TEST(Synthetic, CsvRoundTripThroughIngest) {
    SyntheticSpec spec;
    spec.n_rows = 50;
    spec.seed = 3;
    const auto t = generate_synthetic(spec);
    std::stringstream csv;
    write_csv(csv, t);
    const auto back = ingest_csv(csv, t.schema);
    EXPECT_EQ(back.n_rows, t.n_rows);
    EXPECT_EQ(back.target(), t.target());
    EXPECT_EQ(back.column("num0").numbers, t.column("num0").numbers);
    EXPECT_EQ(back.column("cat1").text, t.column("cat1").text);
}

TEST(Summary, ReportsKindsAndTopCounts) {
    const auto t = parse("Temperature,City,Traffic_Signal,Severity\n1,A,True,1\n,A,False,2\n3,B,True,2\n");
    const auto s = summarize(t);
    EXPECT_EQ(s["n_rows"], 3);
    const auto& temp = s["columns"][0];
    EXPECT_EQ(temp["kind"], "numeric");
    EXPECT_NEAR(temp["missing_rate"].get<double>(), 1.0 / 3.0, 1e-12);
    EXPECT_EQ(temp["median"], 2.0);
    const auto& city = s["columns"][1];
    EXPECT_EQ(city["top"][0]["value"], "A");
    EXPECT_EQ(city["top"][0]["count"], 2);
}
