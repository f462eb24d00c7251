#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "tempheno/cohort.hpp"
#include "tempheno/io.hpp"

using namespace tempheno;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << content;
    return path.string();
}

IngestSchema small_schema(std::size_t hours = 3) {
    IngestSchema schema;
    schema.feature_names = {"hr"};
    schema.n_hours = hours;
    return schema;
}

}  // namespace

TEST_CASE("ingest places records and leaves holes unobserved") {
    const auto path = write_temp("ingest_basic.csv",
                                 "subject_id,feature,hour,value\n"
                                 "a,hr,0,5\n"
                                 "a,hr,1,6\n");
    const auto res = ingest_long_csv(path, small_schema());
    REQUIRE(res.tensor.n_subjects == 1);
    REQUIRE(res.tensor.n_features == 1);
    REQUIRE(res.tensor.n_hours == 3);
    CHECK(res.tensor.at(0, 0, 0) == 5.0);
    CHECK(res.tensor.at(0, 0, 1) == 6.0);
    CHECK(res.tensor.observed(0, 0, 0));
    CHECK(res.tensor.observed(0, 0, 1));
    CHECK_FALSE(res.tensor.observed(0, 0, 2));
    CHECK(res.duplicate_count == 0);
}

TEST_CASE("ingest rejects an empty file") {
    const auto path = write_temp("ingest_empty.csv", "subject_id,feature,hour,value\n");
    CHECK_THROWS_WITH(ingest_long_csv(path, small_schema()),
                      Catch::Matchers::ContainsSubstring("no records"));
    const auto headerless = write_temp("ingest_headerless.csv", "");
    CHECK_THROWS_WITH(ingest_long_csv(headerless, small_schema()),
                      Catch::Matchers::ContainsSubstring("no records"));
}

TEST_CASE("ingest resolves duplicates last-write-wins and counts them") {
    const auto path = write_temp("ingest_dup.csv",
                                 "subject_id,feature,hour,value\n"
                                 "a,hr,0,1\n"
                                 "a,hr,0,2\n");
    const auto res = ingest_long_csv(path, small_schema());
    CHECK(res.tensor.at(0, 0, 0) == 2.0);
    CHECK(res.duplicate_count == 1);
}

TEST_CASE("ingest rejects unknown features and non-numeric values with the row number") {
    const auto bad_feature = write_temp("ingest_badfeat.csv",
                                        "subject_id,feature,hour,value\n"
                                        "a,hr,0,1\n"
                                        "a,bp,0,1\n");
    CHECK_THROWS_WITH(ingest_long_csv(bad_feature, small_schema()),
                      Catch::Matchers::ContainsSubstring("row 3") &&
                          Catch::Matchers::ContainsSubstring("bp"));
    const auto bad_value = write_temp("ingest_badval.csv",
                                      "subject_id,feature,hour,value\n"
                                      "a,hr,0,oops\n");
    CHECK_THROWS_WITH(ingest_long_csv(bad_value, small_schema()),
                      Catch::Matchers::ContainsSubstring("row 2"));
}

TEST_CASE("ingest drops out-of-range hours with a counter") {
    const auto path = write_temp("ingest_range.csv",
                                 "subject_id,feature,hour,value\n"
                                 "a,hr,0,1\n"
                                 "a,hr,7,9\n");
    const auto res = ingest_long_csv(path, small_schema());
    CHECK(res.dropped_out_of_range == 1);
    CHECK(res.tensor.observed(0, 0, 0));
}

TEST_CASE("ingest mask is true exactly at the distinct keys present") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> subj(0, 3), feat(0, 1), hour(0, 4);
    std::ostringstream csv;
    csv << "subject_id,feature,hour,value\n";
    std::set<std::tuple<int, int, int>> keys;
    for (int r = 0; r < 40; ++r) {
        const int s = subj(rng), f = feat(rng), h = hour(rng);
        keys.insert({s, f, h});
        csv << "s" << s << "," << (f == 0 ? "hr" : "bp") << "," << h << "," << r << "\n";
    }
    IngestSchema schema;
    schema.feature_names = {"hr", "bp"};
    schema.n_hours = 5;
    const auto path = write_temp("ingest_keys.csv", csv.str());
    const auto res = ingest_long_csv(path, schema);
    std::size_t observed = 0;
    for (std::size_t n = 0; n < res.tensor.n_subjects; ++n)
        for (std::size_t p = 0; p < 2; ++p)
            for (std::size_t t = 0; t < 5; ++t)
                if (res.tensor.observed(n, p, t)) ++observed;
    CHECK(observed == keys.size());
}

TEST_CASE("icd9 mapping covers the organ ranges") {
    const auto path = write_temp("labels.csv",
                                 "subject_id,icd9_code\n"
                                 "a,573.9\n"
                                 "a,584.9\n"
                                 "b,512.0\n"
                                 "c,428.0\n");
    const auto labels = map_icd9_labels(path);
    REQUIRE(labels.subject_ids == std::vector<std::string>{"a", "b", "c"});
    CHECK(labels.labels[0] == std::vector<int>{1, 1, 0});
    CHECK(labels.labels[1] == std::vector<int>{0, 0, 1});
    CHECK(labels.labels[2] == std::vector<int>{0, 0, 0});  // outside all ranges
    CHECK(labels.malformed_count == 0);
}

TEST_CASE("icd9 mapping aligns missing subjects to the zero vector") {
    const auto path = write_temp("labels_align.csv",
                                 "subject_id,icd9_code\n"
                                 "a,570.1\n");
    const auto aligned = map_icd9_labels(path).aligned_to({"nope", "a"});
    CHECK(aligned.labels[0] == std::vector<int>{0, 0, 0});
    CHECK(aligned.labels[1] == std::vector<int>{1, 0, 0});
}

TEST_CASE("icd9 mapping skips malformed codes with a counter") {
    const auto path = write_temp("labels_bad.csv",
                                 "subject_id,icd9_code\n"
                                 "a,V30.1\n"
                                 "a,584.9\n");
    const auto labels = map_icd9_labels(path);
    CHECK(labels.malformed_count == 1);
    CHECK(labels.labels[0] == std::vector<int>{0, 1, 0});
}

TEST_CASE("icd9 mapping is row-order insensitive") {
    const auto fwd = write_temp("labels_fwd.csv",
                                "subject_id,icd9_code\n"
                                "b,511.0\na,584.9\na,571.2\n");
    const auto rev = write_temp("labels_rev.csv",
                                "subject_id,icd9_code\n"
                                "a,571.2\na,584.9\nb,511.0\n");
    const auto l1 = map_icd9_labels(fwd);
    const auto l2 = map_icd9_labels(rev);
    CHECK(l1.subject_ids == l2.subject_ids);
    CHECK(l1.labels == l2.labels);
}

TEST_CASE("normalize z-scores observed entries with population std") {
    auto tensor = CohortTensor::empty(2, 1, 1);
    tensor.feature_names = {"hr"};
    tensor.subject_ids = {"a", "b"};
    tensor.set(0, 0, 0, 0.0);
    tensor.set(1, 0, 0, 2.0);
    const auto [normed, norm] = normalize(tensor);
    CHECK_THAT(normed.at(0, 0, 0), Catch::Matchers::WithinAbs(-1.0, 1e-12));
    CHECK_THAT(normed.at(1, 0, 0), Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK(norm.mean[0] == 1.0);
    CHECK(norm.stddev[0] == 1.0);
}

TEST_CASE("normalize zero-centers constant features and records std 1") {
    auto tensor = CohortTensor::empty(1, 1, 3);
    tensor.feature_names = {"hr"};
    tensor.subject_ids = {"a"};
    for (std::size_t t = 0; t < 3; ++t) tensor.set(0, 0, t, 5.0);
    const auto [normed, norm] = normalize(tensor);
    for (std::size_t t = 0; t < 3; ++t) CHECK(normed.at(0, 0, t) == 0.0);
    CHECK(norm.stddev[0] == 1.0);
    REQUIRE(norm.constant_features.size() == 1);
    CHECK(norm.constant_features[0] == "hr");
}

TEST_CASE("normalize leaves standardized data unchanged") {
    auto tensor = CohortTensor::empty(2, 1, 1);
    tensor.feature_names = {"hr"};
    tensor.subject_ids = {"a", "b"};
    tensor.set(0, 0, 0, -1.0);
    tensor.set(1, 0, 0, 1.0);
    const auto [normed, norm] = normalize(tensor);
    CHECK_THAT(normed.at(0, 0, 0), Catch::Matchers::WithinAbs(-1.0, 1e-12));
    CHECK_THAT(normed.at(1, 0, 0), Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("normalize rejects features with no observed entries") {
    auto tensor = CohortTensor::empty(1, 2, 2);
    tensor.feature_names = {"hr", "bp"};
    tensor.subject_ids = {"a"};
    tensor.set(0, 0, 0, 1.0);
    tensor.set(0, 0, 1, 2.0);
    CHECK_THROWS_WITH(normalize(tensor), Catch::Matchers::ContainsSubstring("bp"));
}

TEST_CASE("normalize then denormalize is the identity on observed entries") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss(3.0, 7.0);
    std::bernoulli_distribution keep(0.7);
    auto tensor = CohortTensor::empty(5, 3, 8);
    tensor.feature_names = {"hr", "bp", "rr"};
    for (std::size_t n = 0; n < 5; ++n) tensor.subject_ids[n] = "s" + std::to_string(n);
    for (std::size_t n = 0; n < 5; ++n)
        for (std::size_t p = 0; p < 3; ++p)
            for (std::size_t t = 0; t < 8; ++t)
                if (keep(rng) || t == 0) tensor.set(n, p, t, gauss(rng));
    const auto [normed, norm] = normalize(tensor);
    const auto back = denormalize(normed, norm);
    for (std::size_t i = 0; i < tensor.values.size(); ++i)
        if (tensor.mask[i])
            CHECK_THAT(back.values[i], Catch::Matchers::WithinAbs(tensor.values[i], 1e-10));
}

TEST_CASE("tensor persistence round-trips values, mask and names") {
    auto tensor = CohortTensor::empty(2, 2, 3);
    tensor.feature_names = {"hr", "bp"};
    tensor.subject_ids = {"a", "b"};
    tensor.set(0, 0, 0, 1.5);
    tensor.set(1, 1, 2, -2.25);
    const auto dir = (std::filesystem::temp_directory_path() / "tempheno_tensor_rt").string();
    save_tensor(dir, tensor);
    const auto loaded = load_tensor(dir);
    CHECK(loaded.tensor.subject_ids == tensor.subject_ids);
    CHECK(loaded.tensor.feature_names == tensor.feature_names);
    CHECK(loaded.tensor.mask == tensor.mask);
    CHECK(loaded.tensor.at(0, 0, 0) == 1.5);
    CHECK(loaded.tensor.at(1, 1, 2) == -2.25);
    CHECK_FALSE(loaded.normalization.has_value());
}
