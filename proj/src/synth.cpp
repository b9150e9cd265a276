#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "handbio/dataset.hpp"
#include "handbio/error.hpp"
#include "handbio/image_io.hpp"
#include "handbio/rng.hpp"

namespace handbio::data {

void SynthParams::validate() const {
    if (n_subjects < 1 || images_per_subject < 1)
        throw ParamError("synth: subject and image counts must be >= 1");
    if (!(gender_signal >= 0.0 && gender_signal <= 1.0))
        throw ParamError("synth: gender_signal must be in [0,1]");
    if (!(subject_signal >= 0.0 && subject_signal <= 1.0))
        throw ParamError("synth: subject_signal must be in [0,1]");
    if (image_size < 16) throw ParamError("synth: image_size must be >= 16");
    if (!(accessory_fraction >= 0.0 && accessory_fraction <= 1.0))
        throw ParamError("synth: accessory_fraction must be in [0,1]");
    if (!dorsal && !palmar) throw ParamError("synth: enable at least one side");
}

namespace {

struct Grating {
    double fx = 0.0, fy = 0.0, phase = 0.0, weight = 1.0;
};

struct SubjectLook {
    double tone[3] = {0.76, 0.57, 0.42};
    double aspect_jitter = 0.0;
    std::vector<Grating> gratings;  // per side: [side*3 .. side*3+3)
    std::string skin_color;
    int age = 30;
};

double smoothstep(double a) {
    a = std::clamp(a, 0.0, 1.0);
    return a * a * (3.0 - 2.0 * a);
}

}  // namespace

SynthCorpus synth_dataset(const SynthParams& params) {
    params.validate();
    const int size = params.image_size;
    std::vector<HandRecord> records;
    std::vector<Image> images;
    int counter = 0;

    std::vector<Side> sides;
    if (params.dorsal) sides.push_back(Side::Dorsal);
    if (params.palmar) sides.push_back(Side::Palmar);

    for (int s = 0; s < params.n_subjects; ++s) {
        const Rng sbase = Rng(params.seed).fork(static_cast<uint64_t>(s));
        Rng sr = sbase.fork(1);
        const Gender gender = s % 2 == 0 ? Gender::Male : Gender::Female;

        SubjectLook look;
        for (double& t : look.tone) t = std::clamp(t + sr.uniform(-0.05, 0.05), 0.05, 0.95);
        look.aspect_jitter = sr.normal() * 0.08;
        look.age = 18 + static_cast<int>(sr.uniform_int(42));
        const double bright = (look.tone[0] + look.tone[1] + look.tone[2]) / 3.0;
        look.skin_color = bright > 0.62 ? "very fair" : bright > 0.58 ? "fair"
                          : bright > 0.54 ? "medium" : "dark";
        const bool polish = gender == Gender::Female && sr.uniform() < 0.3;
        for (int sd = 0; sd < 2; ++sd) {
            Rng tr = sbase.fork(2 + sd);
            for (int k = 0; k < 3; ++k) {
                Grating g;
                const double freq = tr.uniform(4.0, 11.0);
                const double theta = tr.uniform(0.0, M_PI);
                g.fx = 2.0 * M_PI * freq * std::cos(theta) / size;
                g.fy = 2.0 * M_PI * freq * std::sin(theta) / size;
                g.phase = tr.uniform(0.0, 2.0 * M_PI);
                g.weight = tr.uniform(0.6, 1.0);
                look.gratings.push_back(g);
            }
        }

        for (Side side : sides) {
            const int side_idx = side == Side::Dorsal ? 0 : 1;
            for (int i = 0; i < params.images_per_subject; ++i) {
                Rng ir = sbase.fork(100 + static_cast<uint64_t>(side_idx) * 100000 +
                                    static_cast<uint64_t>(i));
                const bool accessory = ir.uniform() < params.accessory_fraction;

                const double cx = 0.5 + ir.uniform(-0.03, 0.03);
                const double cy = 0.5 + ir.uniform(-0.03, 0.03);
                const double theta = ir.uniform(-0.15, 0.15);
                const double gterm =
                    params.gender_signal * 0.30 * (gender == Gender::Male ? 1.0 : -1.0);
                const double log_aspect = gterm + look.aspect_jitter + ir.normal() * 0.03;
                const double area = std::exp(ir.normal() * 0.05);
                const double ax = 0.30 * std::sqrt(area) * std::exp(0.5 * log_aspect);
                const double ay = 0.30 * std::sqrt(area) * std::exp(-0.5 * log_aspect);
                const double pexp = 2.4 + ir.uniform(-0.2, 0.2);
                const double amp = params.subject_signal * 0.18;
                const double side_tone = side == Side::Palmar ? 1.06 : 1.0;
                const double ct = std::cos(theta), st = std::sin(theta);

                Image img(size, size, 3);
                for (int y = 0; y < size; ++y) {
                    for (int x = 0; x < size; ++x) {
                        const double u = (x + 0.5) / size - cx;
                        const double v = (y + 0.5) / size - cy;
                        const double ur = u * ct + v * st;
                        const double vr = -u * st + v * ct;
                        const double d = std::pow(std::abs(ur) / ax, pexp) +
                                         std::pow(std::abs(vr) / ay, pexp);
                        const double alpha = smoothstep((1.0 - d) / 0.08);
                        double tex = 0.0, wsum = 0.0;
                        for (int k = 0; k < 3; ++k) {
                            const Grating& g = look.gratings[side_idx * 3 + k];
                            tex += g.weight * std::cos(g.fx * x + g.fy * y + g.phase);
                            wsum += g.weight;
                        }
                        tex = amp * tex / wsum;
                        const double shade = 1.0 + tex + 0.05 * vr / ay;
                        const bool band =
                            accessory && std::abs(vr - 0.65 * ay) < 0.07 * ay && d < 1.0;
                        for (int c = 0; c < 3; ++c) {
                            double hand_v = std::clamp(look.tone[c] * side_tone * shade, 0.0, 1.0);
                            if (band) hand_v = c == 2 ? 0.28 : 0.20;
                            const double bg = 0.92;
                            double pix = alpha * hand_v + (1.0 - alpha) * bg;
                            pix += ir.normal() * 0.02;
                            img.at(y, x, c) = std::clamp(pix, 0.0, 1.0);
                        }
                    }
                }

                HandRecord r;
                char name[32];
                std::snprintf(name, sizeof name, "hand_%06d.png", counter++);
                r.image_path = name;
                r.subject_id = 101 + s;
                r.gender = gender;
                r.age = look.age;
                r.skin_color = look.skin_color;
                r.hand = i % 2 == 0 ? Hand::Right : Hand::Left;
                r.side = side;
                r.accessories = accessory;
                r.nail_polish = polish;
                r.irregularities = false;
                records.push_back(std::move(r));
                images.push_back(std::move(img));
            }
        }
    }

    // generation order is already path-sorted, so records stay aligned with
    // their images after validation
    SynthCorpus corpus;
    corpus.dataset = make_dataset(std::move(records));
    corpus.images = std::move(images);
    return corpus;
}

void write_synth_corpus(const SynthCorpus& corpus, const std::string& dir) {
    if (corpus.dataset.records.size() != corpus.images.size())
        throw StateError("synth corpus: records and images out of step");
    std::filesystem::create_directories(dir);
    ColumnMap cols;
    std::ofstream csv(dir + "/metadata.csv", std::ios::binary);
    if (!csv) throw IoError("cannot write " + dir + "/metadata.csv");
    csv << cols.id << ',' << cols.age << ',' << cols.gender << ',' << cols.skin_color << ','
        << cols.accessories << ',' << cols.nail_polish << ',' << cols.aspect << ',' << cols.image
        << ',' << cols.irregularities << '\n';
    for (size_t i = 0; i < corpus.dataset.records.size(); ++i) {
        const HandRecord& r = corpus.dataset.records[i];
        io::write_png(dir + "/" + r.image_path, corpus.images[i]);
        csv << r.subject_id << ',' << r.age << ',' << to_string(r.gender) << ',' << r.skin_color
            << ',' << (r.accessories ? 1 : 0) << ',' << (r.nail_polish ? 1 : 0) << ','
            << to_string(r.side) << ' ' << to_string(r.hand) << ',' << r.image_path << ','
            << (r.irregularities ? 1 : 0) << '\n';
    }
    if (!csv.flush()) throw IoError("failed writing " + dir + "/metadata.csv");
}

}  // namespace handbio::data
