#pragma once

#include <cstdint>
#include <vector>

#include "handbio/dataset.hpp"

namespace handbio::eval {

// Subject-disjoint gender split: random subject partition per gender first,
// then exact image subsampling. Accessory images never enter training.
struct GenderSplit {
    data::Side side = data::Side::Dorsal;
    uint64_t seed = 0;
    int repeat_index = 0;
    std::vector<size_t> train, test;  // indices into Dataset::records
};

struct GenderSplitSpec {
    int train_per_gender = 1000;
    int test_per_gender = 500;
};

GenderSplit make_gender_split(const data::Dataset& dataset, data::Side side, uint64_t seed,
                              const GenderSplitSpec& spec = {});

// Identification split: n subjects, a fixed number of accessory-free images
// per subject split into train/test.
struct IdSplit {
    data::Side side = data::Side::Dorsal;
    uint64_t seed = 0;
    int repeat_index = 0;
    int n_subjects = 0;
    std::vector<int> subjects;        // ascending
    std::vector<size_t> train, test;  // indices into Dataset::records
};

struct IdSplitSpec {
    int train_per_subject = 10;
    int test_per_subject = 4;
    // The reference protocol sizes are 80/100/120 subjects; anything else
    // needs this override (the CLI exposes it as --force).
    bool allow_nonstandard_counts = false;
};

IdSplit make_id_split(const data::Dataset& dataset, data::Side side, int n_subjects,
                      uint64_t seed, const IdSplitSpec& spec = {});

}  // namespace handbio::eval
