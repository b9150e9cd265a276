#include "handbio/splits.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "handbio/error.hpp"
#include "handbio/rng.hpp"

namespace handbio::eval {

namespace {

using data::Dataset;
using data::Gender;
using data::Side;

std::vector<int> subjects_with(const Dataset& ds, Side side, Gender gender) {
    std::set<int> ids;
    for (const auto& r : ds.records) {
        if (r.side == side && r.gender == gender) ids.insert(r.subject_id);
    }
    return {ids.begin(), ids.end()};
}

std::vector<size_t> pool_images(const Dataset& ds, const std::set<int>& subjects, Side side,
                                bool accessory_free_only) {
    std::vector<size_t> out;
    for (size_t i = 0; i < ds.records.size(); ++i) {
        const auto& r = ds.records[i];
        if (r.side != side || !subjects.count(r.subject_id)) continue;
        if (accessory_free_only && r.accessories) continue;
        out.push_back(i);
    }
    return out;
}

std::vector<size_t> take_exact(std::vector<size_t> pool, size_t n, Rng& rng) {
    rng.shuffle(pool);
    pool.resize(n);
    std::sort(pool.begin(), pool.end());
    return pool;
}

const char* gender_name(Gender g) { return g == Gender::Male ? "male" : "female"; }

// Splits one gender: subjects are randomly ordered, assigned to the train
// side until it can cover the requested count, and the rest go to test.
void split_gender(const Dataset& ds, Side side, Gender gender, const GenderSplitSpec& spec,
                  Rng& rng, GenderSplit& out) {
    std::vector<int> subjects = subjects_with(ds, side, gender);
    rng.shuffle(subjects);

    auto count_free = [&](int id) {
        size_t n = 0;
        for (size_t i : ds.subject_indices(id, side)) {
            if (!ds.records[i].accessories) ++n;
        }
        return n;
    };

    std::set<int> train_subjects, test_subjects;
    size_t covered = 0;
    for (int id : subjects) {
        if (covered < static_cast<size_t>(spec.train_per_gender)) {
            train_subjects.insert(id);
            covered += count_free(id);
        } else {
            test_subjects.insert(id);
        }
    }

    std::vector<size_t> train_pool = pool_images(ds, train_subjects, side, true);
    std::vector<size_t> test_pool = pool_images(ds, test_subjects, side, false);
    if (train_pool.size() < static_cast<size_t>(spec.train_per_gender)) {
        throw CapacityError("gender split (" + std::string(gender_name(gender)) +
                            "): train pool has " + std::to_string(train_pool.size()) +
                            " accessory-free images, need " +
                            std::to_string(spec.train_per_gender));
    }
    if (test_pool.size() < static_cast<size_t>(spec.test_per_gender)) {
        throw CapacityError("gender split (" + std::string(gender_name(gender)) +
                            "): test pool has " + std::to_string(test_pool.size()) +
                            " images, need " + std::to_string(spec.test_per_gender));
    }

    auto train = take_exact(std::move(train_pool), spec.train_per_gender, rng);
    auto test = take_exact(std::move(test_pool), spec.test_per_gender, rng);
    out.train.insert(out.train.end(), train.begin(), train.end());
    out.test.insert(out.test.end(), test.begin(), test.end());
}

}  // namespace

GenderSplit make_gender_split(const Dataset& ds, Side side, uint64_t seed,
                              const GenderSplitSpec& spec) {
    if (spec.train_per_gender <= 0 || spec.test_per_gender <= 0) {
        throw ParamError("gender split counts must be positive");
    }
    GenderSplit out;
    out.side = side;
    out.seed = seed;
    Rng rng(seed);
    split_gender(ds, side, Gender::Male, spec, rng, out);
    split_gender(ds, side, Gender::Female, spec, rng, out);
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

IdSplit make_id_split(const Dataset& ds, Side side, int n_subjects, uint64_t seed,
                      const IdSplitSpec& spec) {
    if (spec.train_per_subject <= 0 || spec.test_per_subject <= 0) {
        throw ParamError("id split counts must be positive");
    }
    if (n_subjects <= 0) throw ParamError("id split needs at least one subject");
    if (n_subjects != 80 && n_subjects != 100 && n_subjects != 120 &&
        !spec.allow_nonstandard_counts) {
        throw ParamError("subject count " + std::to_string(n_subjects) +
                         " is not one of the standard sizes (80, 100, 120); "
                         "set allow_nonstandard_counts to override");
    }

    const size_t need = static_cast<size_t>(spec.train_per_subject + spec.test_per_subject);
    std::vector<int> eligible;
    for (int id : ds.subject_ids()) {
        size_t free_count = 0;
        for (size_t i : ds.subject_indices(id, side)) {
            if (!ds.records[i].accessories) ++free_count;
        }
        if (free_count >= need) eligible.push_back(id);
    }
    if (eligible.size() < static_cast<size_t>(n_subjects)) {
        throw CapacityError("only " + std::to_string(eligible.size()) + " subjects have >= " +
                            std::to_string(need) + " accessory-free " +
                            std::string(data::to_string(side)) + " images, need " +
                            std::to_string(n_subjects));
    }

    Rng rng(seed);
    rng.shuffle(eligible);
    eligible.resize(n_subjects);
    std::sort(eligible.begin(), eligible.end());

    IdSplit out;
    out.side = side;
    out.seed = seed;
    out.n_subjects = n_subjects;
    out.subjects = eligible;
    for (int id : eligible) {
        std::vector<size_t> pool;
        for (size_t i : ds.subject_indices(id, side)) {
            if (!ds.records[i].accessories) pool.push_back(i);
        }
        rng.shuffle(pool);
        for (int k = 0; k < spec.train_per_subject; ++k) out.train.push_back(pool[k]);
        for (int k = 0; k < spec.test_per_subject; ++k) {
            out.test.push_back(pool[spec.train_per_subject + k]);
        }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

}  // namespace handbio::eval
