#include "handbio/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "handbio/error.hpp"

namespace handbio::data {

std::string to_string(Gender g) { return g == Gender::Male ? "male" : "female"; }
std::string to_string(Hand h) { return h == Hand::Left ? "left" : "right"; }
std::string to_string(Side s) { return s == Side::Dorsal ? "dorsal" : "palmar"; }

namespace {

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace

Side side_from_string(const std::string& s) {
    const std::string v = lower(trim(s));
    if (v == "dorsal") return Side::Dorsal;
    if (v == "palmar") return Side::Palmar;
    throw ParamError("unknown side '" + s + "' (expected dorsal or palmar)");
}

std::vector<int> Dataset::subject_ids() const {
    std::set<int> ids;
    for (const auto& r : records) ids.insert(r.subject_id);
    return {ids.begin(), ids.end()};
}

std::vector<size_t> Dataset::indices_of(Side side) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < records.size(); ++i) {
        if (records[i].side == side) out.push_back(i);
    }
    return out;
}

std::vector<size_t> Dataset::indices_of(Side side, Gender gender) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < records.size(); ++i) {
        if (records[i].side == side && records[i].gender == gender) out.push_back(i);
    }
    return out;
}

std::vector<size_t> Dataset::subject_indices(int subject_id, Side side) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < records.size(); ++i) {
        if (records[i].subject_id == subject_id && records[i].side == side) out.push_back(i);
    }
    return out;
}

Dataset make_dataset(std::vector<HandRecord> records) {
    std::sort(records.begin(), records.end(),
              [](const HandRecord& a, const HandRecord& b) { return a.image_path < b.image_path; });
    for (size_t i = 1; i < records.size(); ++i) {
        if (records[i].image_path == records[i - 1].image_path)
            throw DataError("duplicate image path: " + records[i].image_path);
    }
    Dataset d;
    d.records = std::move(records);
    return d;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

int find_column(const std::vector<std::string>& header, const std::string& name,
                const std::string& path) {
    for (size_t i = 0; i < header.size(); ++i) {
        if (trim(header[i]) == name) return static_cast<int>(i);
    }
    throw ConfigError("metadata " + path + " lacks column '" + name + "'");
}

bool parse_flag(const std::string& raw, int line_no, const std::string& field) {
    const std::string v = lower(trim(raw));
    if (v == "0" || v == "false" || v == "no") return false;
    if (v == "1" || v == "true" || v == "yes") return true;
    throw DataError("line " + std::to_string(line_no) + ": bad " + field + " flag '" + raw + "'");
}

int parse_int(const std::string& raw, int line_no, const std::string& field) {
    const std::string v = trim(raw);
    size_t pos = 0;
    int value = 0;
    try {
        value = std::stoi(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size())
        throw DataError("line " + std::to_string(line_no) + ": bad " + field + " value '" + raw +
                        "'");
    return value;
}

}  // namespace

Dataset load_metadata(const std::string& csv_path, const std::string& image_root,
                      const ColumnMap& columns) {
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw IoError("cannot open metadata file: " + csv_path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("metadata file is empty: " + csv_path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    const int ci_id = find_column(header, columns.id, csv_path);
    const int ci_age = find_column(header, columns.age, csv_path);
    const int ci_gender = find_column(header, columns.gender, csv_path);
    const int ci_skin = find_column(header, columns.skin_color, csv_path);
    const int ci_acc = find_column(header, columns.accessories, csv_path);
    const int ci_nail = find_column(header, columns.nail_polish, csv_path);
    const int ci_aspect = find_column(header, columns.aspect, csv_path);
    const int ci_image = find_column(header, columns.image, csv_path);
    const int ci_irr = find_column(header, columns.irregularities, csv_path);

    std::vector<HandRecord> records;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != header.size())
            throw DataError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(f.size()));
        HandRecord r;
        r.subject_id = parse_int(f[ci_id], line_no, "id");
        r.age = parse_int(f[ci_age], line_no, "age");
        const std::string g = lower(trim(f[ci_gender]));
        if (g == "male") r.gender = Gender::Male;
        else if (g == "female") r.gender = Gender::Female;
        else throw DataError("line " + std::to_string(line_no) + ": unknown gender '" +
                             f[ci_gender] + "'");
        r.skin_color = trim(f[ci_skin]);
        r.accessories = parse_flag(f[ci_acc], line_no, "accessories");
        r.nail_polish = parse_flag(f[ci_nail], line_no, "nailPolish");
        r.irregularities = parse_flag(f[ci_irr], line_no, "irregularities");

        // compound "side hand" value, e.g. "dorsal right" or "Palmar left"
        std::istringstream aspect(lower(trim(f[ci_aspect])));
        std::string side_word, hand_word, extra;
        aspect >> side_word >> hand_word;
        if (aspect >> extra || side_word.empty() || hand_word.empty())
            throw DataError("line " + std::to_string(line_no) + ": bad aspect '" + f[ci_aspect] +
                            "' (expected '<side> <hand>')");
        if (side_word == "dorsal") r.side = Side::Dorsal;
        else if (side_word == "palmar") r.side = Side::Palmar;
        else throw DataError("line " + std::to_string(line_no) + ": unknown side '" + side_word +
                             "'");
        if (hand_word == "left") r.hand = Hand::Left;
        else if (hand_word == "right") r.hand = Hand::Right;
        else throw DataError("line " + std::to_string(line_no) + ": unknown hand '" + hand_word +
                             "'");

        const std::string name = trim(f[ci_image]);
        if (name.empty())
            throw DataError("line " + std::to_string(line_no) + ": empty image name");
        r.image_path = image_root.empty() || name.front() == '/' ? name : image_root + "/" + name;
        records.push_back(std::move(r));
    }
    return make_dataset(std::move(records));
}

Dataset exclude_accessories(const Dataset& dataset) {
    Dataset out;
    for (const auto& r : dataset.records) {
        if (!r.accessories) out.records.push_back(r);
    }
    return out;
}

}  // namespace handbio::data
