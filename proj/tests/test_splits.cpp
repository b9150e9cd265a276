#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "handbio/error.hpp"
#include "handbio/splits.hpp"

using namespace handbio;
using namespace handbio::data;
using namespace handbio::eval;

namespace {

Dataset synth_meta(int n_subjects, int images_per_subject, double accessory_fraction,
                   uint64_t seed, bool palmar = false) {
    SynthParams p;
    p.n_subjects = n_subjects;
    p.images_per_subject = images_per_subject;
    p.image_size = 16;
    p.accessory_fraction = accessory_fraction;
    p.palmar = palmar;
    p.seed = seed;
    return synth_dataset(p).dataset;
}

template <typename T>
bool sorted_unique(const std::vector<T>& v) {
    for (size_t i = 1; i < v.size(); ++i) {
        if (!(v[i - 1] < v[i])) return false;
    }
    return true;
}

std::set<int> subjects_of(const Dataset& ds, const std::vector<size_t>& idx) {
    std::set<int> s;
    for (size_t i : idx) s.insert(ds.records[i].subject_id);
    return s;
}

}  // namespace

TEST_CASE("gender split protocol holds across 100 seeds") {
    const Dataset ds = synth_meta(30, 12, 0.25, 41);
    GenderSplitSpec spec;
    spec.train_per_gender = 60;
    spec.test_per_gender = 30;

    size_t accessory_in_test_total = 0;
    std::set<std::vector<size_t>> distinct_trains;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        const GenderSplit s = make_gender_split(ds, Side::Dorsal, seed, spec);
        CHECK(s.side == Side::Dorsal);
        CHECK(s.seed == seed);
        REQUIRE(s.train.size() == 120);
        REQUIRE(s.test.size() == 60);
        CHECK(sorted_unique(s.train));
        CHECK(sorted_unique(s.test));

        int train_male = 0, test_male = 0;
        bool all_dorsal = true, accessory_in_train = false;
        for (size_t i : s.train) {
            const HandRecord& r = ds.records[i];
            train_male += r.gender == Gender::Male;
            all_dorsal = all_dorsal && r.side == Side::Dorsal;
            accessory_in_train = accessory_in_train || r.accessories;
        }
        for (size_t i : s.test) {
            const HandRecord& r = ds.records[i];
            test_male += r.gender == Gender::Male;
            all_dorsal = all_dorsal && r.side == Side::Dorsal;
            accessory_in_test_total += r.accessories;
        }
        CHECK(train_male == 60);
        CHECK(test_male == 30);
        CHECK(all_dorsal);
        CHECK_FALSE(accessory_in_train);

        const auto train_subj = subjects_of(ds, s.train);
        const auto test_subj = subjects_of(ds, s.test);
        bool disjoint = true;
        for (int id : test_subj) disjoint = disjoint && !train_subj.count(id);
        CHECK(disjoint);

        distinct_trains.insert(s.train);
    }
    // Accessory images are excluded from training only; over 100 seeds they
    // show up on the test side.
    CHECK(accessory_in_test_total > 0);
    CHECK(distinct_trains.size() >= 90);
}

TEST_CASE("gender split determinism") {
    const Dataset ds = synth_meta(20, 10, 0.1, 7);
    GenderSplitSpec spec;
    spec.train_per_gender = 40;
    spec.test_per_gender = 15;
    const GenderSplit a = make_gender_split(ds, Side::Dorsal, 12345, spec);
    const GenderSplit b = make_gender_split(ds, Side::Dorsal, 12345, spec);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    const GenderSplit c = make_gender_split(ds, Side::Dorsal, 12346, spec);
    CHECK(a.train != c.train);
}

TEST_CASE("gender split capacity and parameter errors") {
    SUBCASE("train pool too small") {
        const Dataset ds = synth_meta(4, 3, 0.0, 1);
        CHECK_THROWS_WITH_AS(make_gender_split(ds, Side::Dorsal, 0, {}),
                             doctest::Contains("train pool has"), CapacityError);
    }
    SUBCASE("every subject consumed by train leaves no test pool") {
        const Dataset ds = synth_meta(2, 30, 0.0, 2);  // one subject per gender
        GenderSplitSpec spec;
        spec.train_per_gender = 20;
        spec.test_per_gender = 5;
        CHECK_THROWS_WITH_AS(make_gender_split(ds, Side::Dorsal, 0, spec),
                             doctest::Contains("test pool has 0 images, need 5"), CapacityError);
    }
    SUBCASE("side with no records") {
        const Dataset ds = synth_meta(10, 10, 0.0, 3);
        GenderSplitSpec spec;
        spec.train_per_gender = 10;
        spec.test_per_gender = 5;
        CHECK_THROWS_AS(make_gender_split(ds, Side::Palmar, 0, spec), CapacityError);
    }
    SUBCASE("counts must be positive") {
        const Dataset ds = synth_meta(4, 3, 0.0, 4);
        GenderSplitSpec spec;
        spec.train_per_gender = 0;
        CHECK_THROWS_AS(make_gender_split(ds, Side::Dorsal, 0, spec), ParamError);
        spec.train_per_gender = 10;
        spec.test_per_gender = -1;
        CHECK_THROWS_AS(make_gender_split(ds, Side::Dorsal, 0, spec), ParamError);
    }
}

TEST_CASE("id split protocol holds across 100 seeds at a standard size") {
    const Dataset ds = synth_meta(90, 16, 0.05, 11);

    // Fixed corpus: confirm enough subjects clear the 10+4 accessory-free bar.
    const IdSplitSpec spec;
    size_t eligible = 0;
    for (int id : ds.subject_ids()) {
        size_t free_count = 0;
        for (size_t i : ds.subject_indices(id, Side::Dorsal))
            free_count += !ds.records[i].accessories;
        eligible += free_count >= 14;
    }
    REQUIRE(eligible >= 80);

    std::set<std::vector<int>> distinct_rosters;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        const IdSplit s = make_id_split(ds, Side::Dorsal, 80, seed, spec);
        CHECK(s.n_subjects == 80);
        REQUIRE(s.subjects.size() == 80);
        CHECK(sorted_unique(s.subjects));
        REQUIRE(s.train.size() == 800);
        REQUIRE(s.test.size() == 320);
        CHECK(sorted_unique(s.train));
        CHECK(sorted_unique(s.test));

        std::map<int, int> train_per, test_per;
        bool clean = true, dorsal = true;
        for (size_t i : s.train) {
            const HandRecord& r = ds.records[i];
            ++train_per[r.subject_id];
            clean = clean && !r.accessories;
            dorsal = dorsal && r.side == Side::Dorsal;
        }
        for (size_t i : s.test) {
            const HandRecord& r = ds.records[i];
            ++test_per[r.subject_id];
            clean = clean && !r.accessories;
            dorsal = dorsal && r.side == Side::Dorsal;
        }
        CHECK(clean);
        CHECK(dorsal);

        bool counts_ok = train_per.size() == 80 && test_per.size() == 80;
        for (int id : s.subjects) {
            counts_ok = counts_ok && train_per[id] == 10 && test_per[id] == 4;
        }
        CHECK(counts_ok);

        std::vector<size_t> overlap;
        std::set_intersection(s.train.begin(), s.train.end(), s.test.begin(), s.test.end(),
                              std::back_inserter(overlap));
        CHECK(overlap.empty());

        distinct_rosters.insert(s.subjects);
    }
    CHECK(distinct_rosters.size() >= 90);

    SUBCASE("same seed reproduces the split") {
        const IdSplit a = make_id_split(ds, Side::Dorsal, 80, 77, spec);
        const IdSplit b = make_id_split(ds, Side::Dorsal, 80, 77, spec);
        CHECK(a.subjects == b.subjects);
        CHECK(a.train == b.train);
        CHECK(a.test == b.test);
    }
}

TEST_CASE("id split eligibility boundary") {
    // Hand-built corpus: free dorsal counts of exactly 8, 7 and 6.
    std::vector<HandRecord> rows;
    auto add = [&](int id, int n_free, int n_acc) {
        for (int i = 0; i < n_free + n_acc; ++i) {
            HandRecord r;
            r.image_path = "s" + std::to_string(id) + "_" + std::to_string(i) + ".png";
            r.subject_id = id;
            r.side = Side::Dorsal;
            r.accessories = i >= n_free;
            rows.push_back(r);
        }
    };
    add(1, 8, 0);
    add(2, 7, 1);
    add(3, 6, 2);
    const Dataset ds = make_dataset(rows);

    IdSplitSpec spec;
    spec.train_per_subject = 6;
    spec.test_per_subject = 2;
    spec.allow_nonstandard_counts = true;

    const IdSplit s = make_id_split(ds, Side::Dorsal, 1, 0, spec);
    CHECK(s.subjects == std::vector<int>{1});
    CHECK(s.train.size() == 6);
    CHECK(s.test.size() == 2);
    for (size_t i : s.train) CHECK_FALSE(ds.records[i].accessories);
    for (size_t i : s.test) CHECK_FALSE(ds.records[i].accessories);

    CHECK_THROWS_WITH_AS(make_id_split(ds, Side::Dorsal, 2, 0, spec),
                         doctest::Contains("only 1 subjects have >= 8 accessory-free dorsal"),
                         CapacityError);
}

TEST_CASE("id split validation") {
    const Dataset ds = synth_meta(20, 16, 0.0, 13);
    SUBCASE("nonstandard subject counts need the override") {
        CHECK_THROWS_WITH_AS(make_id_split(ds, Side::Dorsal, 12, 0, {}),
                             doctest::Contains("not one of the standard sizes (80, 100, 120)"),
                             ParamError);
        IdSplitSpec spec;
        spec.allow_nonstandard_counts = true;
        const IdSplit s = make_id_split(ds, Side::Dorsal, 12, 0, spec);
        CHECK(s.subjects.size() == 12);
        CHECK(s.train.size() == 120);
        CHECK(s.test.size() == 48);
    }
    SUBCASE("standard sizes beyond capacity raise a capacity error") {
        CHECK_THROWS_AS(make_id_split(ds, Side::Dorsal, 80, 0, {}), CapacityError);
    }
    SUBCASE("counts and subject totals must be positive") {
        IdSplitSpec spec;
        spec.allow_nonstandard_counts = true;
        CHECK_THROWS_AS(make_id_split(ds, Side::Dorsal, 0, 0, spec), ParamError);
        spec.train_per_subject = 0;
        CHECK_THROWS_AS(make_id_split(ds, Side::Dorsal, 10, 0, spec), ParamError);
        spec.train_per_subject = 10;
        spec.test_per_subject = 0;
        CHECK_THROWS_AS(make_id_split(ds, Side::Dorsal, 10, 0, spec), ParamError);
    }
    SUBCASE("different seeds pick different rosters") {
        IdSplitSpec spec;
        spec.allow_nonstandard_counts = true;
        spec.train_per_subject = 8;
        spec.test_per_subject = 4;
        const IdSplit a = make_id_split(ds, Side::Dorsal, 10, 1, spec);
        const IdSplit b = make_id_split(ds, Side::Dorsal, 10, 2, spec);
        CHECK((a.subjects != b.subjects || a.train != b.train));
    }
}
