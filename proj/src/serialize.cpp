#include "handbio/serialize.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "handbio/error.hpp"

namespace handbio::io {

namespace {

using nlohmann::json;

void put_u16(std::ostream& out, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<char*>(b), 2);
}

void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
}

void put_u8(std::ostream& out, uint8_t v) { out.put(static_cast<char>(v)); }

void put_f64(std::ostream& out, double v) {
    static_assert(sizeof(double) == 8);
    out.write(reinterpret_cast<const char*>(&v), 8);
}

struct Reader {
    std::ifstream in;
    std::string path;

    Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) throw IoError("cannot open " + p);
    }
    void raw(void* dst, size_t n) {
        if (!in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n)))
            throw IoError("truncated file: " + path);
    }
    uint8_t u8() {
        uint8_t v;
        raw(&v, 1);
        return v;
    }
    uint16_t u16() {
        unsigned char b[2];
        raw(b, 2);
        return static_cast<uint16_t>(b[0] | (b[1] << 8));
    }
    uint32_t u32() {
        unsigned char b[4];
        raw(b, 4);
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }
    double f64() {
        double v;
        raw(&v, 8);
        return v;
    }
};

constexpr char kWeightsMagic[4] = {'H', 'B', 'W', 'T'};
constexpr char kBankMagic[4] = {'H', 'B', 'S', 'V'};
constexpr char kCalibMagic[4] = {'H', 'B', 'C', 'S'};
constexpr uint32_t kVersion = 1;

void expect_magic(Reader& r, const char* magic, const std::string& what) {
    char buf[4];
    r.raw(buf, 4);
    if (std::memcmp(buf, magic, 4) != 0) throw IoError("not a " + what + " file: " + r.path);
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw IoError("unsupported " + what + " version " + std::to_string(version) + ": " +
                      r.path);
}

}  // namespace

void write_weights(const std::string& path, const std::vector<NamedTensor>& entries,
                   bool as_f32) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(kWeightsMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<uint32_t>(entries.size()));
    for (const NamedTensor& e : entries) {
        if (e.name.size() > 0xffff) throw ParamError("weights entry name too long: " + e.name);
        put_u16(out, static_cast<uint16_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        if (e.is_bytes) {
            put_u8(out, 2);
            put_u8(out, 1);
            put_u32(out, static_cast<uint32_t>(e.bytes.size()));
            out.write(e.bytes.data(), static_cast<std::streamsize>(e.bytes.size()));
            continue;
        }
        put_u8(out, as_f32 ? 0 : 1);
        put_u8(out, static_cast<uint8_t>(e.tensor.rank()));
        for (int d : e.tensor.shape) put_u32(out, static_cast<uint32_t>(d));
        if (as_f32) {
            std::vector<float> f(e.tensor.data.begin(), e.tensor.data.end());
            out.write(reinterpret_cast<const char*>(f.data()),
                      static_cast<std::streamsize>(f.size() * sizeof(float)));
        } else {
            out.write(reinterpret_cast<const char*>(e.tensor.data.data()),
                      static_cast<std::streamsize>(e.tensor.data.size() * sizeof(double)));
        }
    }
    if (!out.flush()) throw IoError("failed writing " + path);
}

std::vector<NamedTensor> read_weights(const std::string& path) {
    Reader r(path);
    expect_magic(r, kWeightsMagic, "weights");
    const uint32_t count = r.u32();
    std::vector<NamedTensor> entries;
    entries.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        NamedTensor e;
        const uint16_t len = r.u16();
        e.name.resize(len);
        r.raw(e.name.data(), len);
        const uint8_t dtype = r.u8();
        const uint8_t rank = r.u8();
        std::vector<int> shape(rank);
        size_t numel = 1;
        for (auto& d : shape) {
            d = static_cast<int>(r.u32());
            if (d < 0 || d > (1 << 28)) throw IoError("implausible tensor shape in " + path);
            numel *= static_cast<size_t>(d);
        }
        if (dtype == 2) {
            e.is_bytes = true;
            e.bytes.resize(numel);
            r.raw(e.bytes.data(), numel);
        } else if (dtype == 0) {
            std::vector<float> f(numel);
            r.raw(f.data(), numel * sizeof(float));
            e.tensor = Tensor(shape);
            for (size_t k = 0; k < numel; ++k) e.tensor.data[k] = f[k];
        } else if (dtype == 1) {
            e.tensor = Tensor(shape);
            r.raw(e.tensor.data.data(), numel * sizeof(double));
        } else {
            throw IoError("unknown dtype tag in " + path);
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

std::string config_to_json(const nn::TwoStreamConfig& c) {
    json j;
    j["preset"] = c.preset;
    j["input_size"] = c.input_size;
    auto convs = [](const std::vector<nn::ConvSpec>& v) {
        json arr = json::array();
        for (const auto& s : v)
            arr.push_back({{"out_channels", s.out_channels},
                           {"kernel", s.kernel},
                           {"stride", s.stride},
                           {"pad", s.pad},
                           {"pool_kernel", s.pool_kernel},
                           {"pool_stride", s.pool_stride}});
        return arr;
    };
    j["stream1_convs"] = convs(c.stream1_convs);
    j["stream2_convs"] = convs(c.stream2_convs);
    j["trunk_fc"] = c.trunk_fc;
    j["stream1_new_fc"] = c.stream1_new_fc;
    j["stream2_new_fc"] = c.stream2_new_fc;
    j["fusion_fc_out"] = c.fusion_fc_out;
    j["avgpool_kernel"] = c.avgpool_kernel;
    j["avgpool_stride"] = c.avgpool_stride;
    j["dropout_rate"] = c.dropout_rate;
    return j.dump();
}

nn::TwoStreamConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string("bad model config JSON: ") + e.what());
    }
    nn::TwoStreamConfig c;
    try {
        c.preset = j.at("preset").get<std::string>();
        c.input_size = j.at("input_size").get<int>();
        auto convs = [](const json& arr) {
            std::vector<nn::ConvSpec> v;
            for (const auto& s : arr) {
                nn::ConvSpec cs;
                cs.out_channels = s.at("out_channels").get<int>();
                cs.kernel = s.at("kernel").get<int>();
                cs.stride = s.at("stride").get<int>();
                cs.pad = s.at("pad").get<int>();
                cs.pool_kernel = s.at("pool_kernel").get<int>();
                cs.pool_stride = s.at("pool_stride").get<int>();
                v.push_back(cs);
            }
            return v;
        };
        c.stream1_convs = convs(j.at("stream1_convs"));
        c.stream2_convs = convs(j.at("stream2_convs"));
        c.trunk_fc = j.at("trunk_fc").get<std::vector<int>>();
        c.stream1_new_fc = j.at("stream1_new_fc").get<std::vector<int>>();
        c.stream2_new_fc = j.at("stream2_new_fc").get<std::vector<int>>();
        c.fusion_fc_out = j.at("fusion_fc_out").get<int>();
        c.avgpool_kernel = j.at("avgpool_kernel").get<int>();
        c.avgpool_stride = j.at("avgpool_stride").get<int>();
        c.dropout_rate = j.at("dropout_rate").get<double>();
    } catch (const json::exception& e) {
        throw IoError(std::string("bad model config JSON: ") + e.what());
    }
    return c;
}

void save_model(const std::string& path, const nn::TwoStreamModel& m) {
    if (!m.initialized) throw StateError("save_model: model not initialized");
    std::vector<NamedTensor> entries;
    NamedTensor cfg;
    cfg.name = "__config__";
    cfg.is_bytes = true;
    cfg.bytes = config_to_json(m.config);
    entries.push_back(std::move(cfg));
    for (const auto& [name, layer] : nn::param_layers(m)) {
        entries.push_back({name + ".w", layer->w, "", false});
        entries.push_back({name + ".b", layer->b, "", false});
    }
    write_weights(path, entries);
}

nn::TwoStreamModel load_model(const std::string& path) {
    auto entries = read_weights(path);
    const NamedTensor* cfg = nullptr;
    for (const auto& e : entries) {
        if (e.name == "__config__" && e.is_bytes) cfg = &e;
    }
    if (cfg == nullptr) throw IoError("model file lacks a __config__ entry: " + path);
    nn::TwoStreamModel m = nn::build_two_stream(config_from_json(cfg->bytes), 0);
    for (auto& [name, layer] : nn::param_layers(m)) {
        bool got_w = false, got_b = false;
        for (const auto& e : entries) {
            if (e.is_bytes) continue;
            if (e.name == name + ".w") {
                if (!e.tensor.same_shape(layer->w))
                    throw IoError("model load: layer " + name + " expects weights " +
                                  layer->w.shape_str() + ", file has " + e.tensor.shape_str());
                layer->w = e.tensor;
                got_w = true;
            } else if (e.name == name + ".b") {
                if (!e.tensor.same_shape(layer->b))
                    throw IoError("model load: layer " + name + " expects bias " +
                                  layer->b.shape_str() + ", file has " + e.tensor.shape_str());
                layer->b = e.tensor;
                got_b = true;
            }
        }
        if (!got_w || !got_b) throw IoError("model load: missing tensors for layer " + name);
    }
    return m;
}

namespace {

void write_scaler(std::ostream& out, const svm::Scaler& s) {
    put_u32(out, static_cast<uint32_t>(s.mean.size()));
    for (double v : s.mean) put_f64(out, v);
    for (double v : s.scale) put_f64(out, v);
}

svm::Scaler read_scaler(Reader& r) {
    const uint32_t dim = r.u32();
    if (dim > (1u << 24)) throw IoError("implausible scaler size in " + r.path);
    svm::Scaler s;
    s.mean.resize(dim);
    s.scale.resize(dim);
    for (auto& v : s.mean) v = r.f64();
    for (auto& v : s.scale) v = r.f64();
    return s;
}

void write_kernel(std::ostream& out, const svm::Kernel& k) {
    put_u8(out, k.kind == svm::Kernel::Kind::Linear ? 0 : 1);
    put_u32(out, static_cast<uint32_t>(k.degree));
    put_f64(out, k.scale);
    put_f64(out, k.offset);
}

svm::Kernel read_kernel(Reader& r) {
    svm::Kernel k;
    const uint8_t kind = r.u8();
    if (kind > 1) throw IoError("unknown kernel kind in " + r.path);
    k.kind = kind == 0 ? svm::Kernel::Kind::Linear : svm::Kernel::Kind::Polynomial;
    k.degree = static_cast<int>(r.u32());
    k.scale = r.f64();
    k.offset = r.f64();
    return k;
}

void write_svm_block(std::ostream& out, const svm::SvmModel& m) {
    write_kernel(out, m.kernel);
    put_f64(out, m.c_box);
    put_f64(out, m.bias);
    put_f64(out, m.platt_a);
    put_f64(out, m.platt_b);
    put_u8(out, m.platt_fitted ? 1 : 0);
    put_u32(out, static_cast<uint32_t>(m.support_vectors.rows));
    put_u32(out, static_cast<uint32_t>(m.support_vectors.cols));
    for (double v : m.coeffs) put_f64(out, v);
    for (double v : m.support_vectors.data) put_f64(out, v);
}

svm::SvmModel read_svm_block(Reader& r) {
    svm::SvmModel m;
    m.kernel = read_kernel(r);
    m.c_box = r.f64();
    m.bias = r.f64();
    m.platt_a = r.f64();
    m.platt_b = r.f64();
    m.platt_fitted = r.u8() != 0;
    const uint32_t rows = r.u32(), cols = r.u32();
    if (rows > (1u << 24) || cols > (1u << 24)) throw IoError("implausible SVM size in " + r.path);
    m.support_vectors = svm::DataMatrix(static_cast<int>(rows), static_cast<int>(cols));
    m.coeffs.resize(rows);
    for (auto& v : m.coeffs) v = r.f64();
    for (auto& v : m.support_vectors.data) v = r.f64();
    return m;
}

}  // namespace

void save_bank(const std::string& path, const svm::SvmBank& bank) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(kBankMagic, 4);
    put_u32(out, kVersion);
    write_kernel(out, bank.kernel);
    put_f64(out, bank.c_box);
    write_scaler(out, bank.scaler);
    put_u32(out, static_cast<uint32_t>(bank.classes.size()));
    for (int c : bank.classes) put_u32(out, static_cast<uint32_t>(c));
    for (const auto& m : bank.models) write_svm_block(out, m);
    if (!out.flush()) throw IoError("failed writing " + path);
}

svm::SvmBank load_bank(const std::string& path) {
    Reader r(path);
    expect_magic(r, kBankMagic, "svm bank");
    svm::SvmBank bank;
    bank.kernel = read_kernel(r);
    bank.c_box = r.f64();
    bank.scaler = read_scaler(r);
    const uint32_t nc = r.u32();
    if (nc > (1u << 20)) throw IoError("implausible class count in " + path);
    bank.classes.resize(nc);
    for (auto& c : bank.classes) c = static_cast<int>(r.u32());
    bank.models.resize(nc);
    for (auto& m : bank.models) m = read_svm_block(r);
    return bank;
}

void save_calibrated(const std::string& path, const svm::CalibratedSvm& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(kCalibMagic, 4);
    put_u32(out, kVersion);
    write_scaler(out, model.scaler);
    write_svm_block(out, model.model);
    if (!out.flush()) throw IoError("failed writing " + path);
}

svm::CalibratedSvm load_calibrated(const std::string& path) {
    Reader r(path);
    expect_magic(r, kCalibMagic, "calibrated svm");
    svm::CalibratedSvm m;
    m.scaler = read_scaler(r);
    m.model = read_svm_block(r);
    return m;
}

}  // namespace handbio::io
