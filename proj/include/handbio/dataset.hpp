#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "handbio/image.hpp"

namespace handbio::data {

enum class Gender { Male, Female };
enum class Hand { Left, Right };
enum class Side { Dorsal, Palmar };

std::string to_string(Gender g);
std::string to_string(Hand h);
std::string to_string(Side s);
Side side_from_string(const std::string& s);

struct HandRecord {
    std::string image_path;
    int subject_id = 0;
    Gender gender = Gender::Male;
    int age = 0;
    std::string skin_color;
    Hand hand = Hand::Left;
    Side side = Side::Dorsal;
    bool accessories = false;
    bool nail_polish = false;
    bool irregularities = false;
};

// Records are kept sorted by image path (unique), so all seeded sampling
// downstream is independent of file-listing order.
struct Dataset {
    std::vector<HandRecord> records;

    std::vector<int> subject_ids() const;  // ascending, unique
    std::vector<size_t> indices_of(Side side) const;
    std::vector<size_t> indices_of(Side side, Gender gender) const;
    std::vector<size_t> subject_indices(int subject_id, Side side) const;
};

// Validates, sorts by path and checks uniqueness.
Dataset make_dataset(std::vector<HandRecord> records);

// Maps CSV header names to record fields; defaults follow the public
// metadata conventions of the hand corpus this pipeline targets.
struct ColumnMap {
    std::string id = "id";
    std::string age = "age";
    std::string gender = "gender";
    std::string skin_color = "skinColor";
    std::string accessories = "accessories";
    std::string nail_polish = "nailPolish";
    std::string aspect = "aspectOfHand";  // compound "side hand" value
    std::string image = "imageName";
    std::string irregularities = "irregularities";
};

Dataset load_metadata(const std::string& csv_path, const std::string& image_root,
                      const ColumnMap& columns = {});

// Copy without accessory-flagged records.
Dataset exclude_accessories(const Dataset& dataset);

struct SynthParams {
    int n_subjects = 20;
    int images_per_subject = 20;  // per generated side
    double gender_signal = 0.8;   // 0 = shape carries no gender information
    double subject_signal = 0.8;  // 0 = no per-subject texture
    int image_size = 64;
    double accessory_fraction = 0.0;
    bool dorsal = true;
    bool palmar = false;
    uint64_t seed = 0;

    void validate() const;
};

// Procedural corpus: records aligned one-to-one with rendered images.
struct SynthCorpus {
    Dataset dataset;
    std::vector<Image> images;
};

SynthCorpus synth_dataset(const SynthParams& params);

// Writes PNGs plus metadata.csv; record image paths point into `dir`.
void write_synth_corpus(const SynthCorpus& corpus, const std::string& dir);

}  // namespace handbio::data
