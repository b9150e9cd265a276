#include "handbio/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "handbio/error.hpp"

namespace handbio::io {

namespace {

Image from_bytes(const std::vector<unsigned char>& buf, int h, int w, int c) {
    Image img(h, w, c);
    for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = buf[i] / 255.0;
    return img;
}

Image read_png_file(const std::string& path) {
    png_image pi;
    std::memset(&pi, 0, sizeof pi);
    pi.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&pi, path.c_str()))
        throw IoError("png read failed: " + path + ": " + pi.message);
    const bool color = (pi.format & PNG_FORMAT_FLAG_COLOR) != 0;
    pi.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(pi));
    if (!png_image_finish_read(&pi, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&pi);
        throw IoError("png decode failed: " + path + ": " + pi.message);
    }
    return from_bytes(buf, static_cast<int>(pi.height), static_cast<int>(pi.width),
                      color ? 3 : 1);
}

struct JpegErr {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX] = {0};
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

Image read_jpeg_file(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open " + path);
    jpeg_decompress_struct cinfo;
    JpegErr err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        std::fclose(fp);
        throw IoError("jpeg decode failed: " + path + ": " + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    const int w = static_cast<int>(cinfo.output_width);
    const int h = static_cast<int>(cinfo.output_height);
    const int c = cinfo.output_components;
    std::vector<unsigned char> buf(static_cast<size_t>(h) * w * c);
    while (cinfo.output_scanline < cinfo.output_height) {
        unsigned char* row = buf.data() + static_cast<size_t>(cinfo.output_scanline) * w * c;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    std::fclose(fp);
    return from_bytes(buf, h, w, c);
}

}  // namespace

Image read_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    unsigned char sig[4] = {0};
    in.read(reinterpret_cast<char*>(sig), 4);
    in.close();
    if (sig[0] == 0x89 && sig[1] == 'P') return read_png_file(path);
    if (sig[0] == 0xff && sig[1] == 0xd8) return read_jpeg_file(path);
    throw IoError("unsupported image format (not PNG or JPEG): " + path);
}

void write_png(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw ShapeError("write_png: image must have 1 or 3 channels");
    png_image pi;
    std::memset(&pi, 0, sizeof pi);
    pi.version = PNG_IMAGE_VERSION;
    pi.width = static_cast<png_uint_32>(img.width);
    pi.height = static_cast<png_uint_32>(img.height);
    pi.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<unsigned char> buf(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i) {
        const double v = std::min(1.0, std::max(0.0, img.data[i]));
        buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    if (!png_image_write_to_file(&pi, path.c_str(), 0, buf.data(), 0, nullptr))
        throw IoError("png write failed: " + path + ": " + pi.message);
}

namespace {

constexpr char kPlaneMagic[4] = {'H', 'B', 'P', 'F'};
constexpr uint32_t kPlaneVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
}

uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated plane file: " + path);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_planes(const std::string& path, const std::vector<Image>& planes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(kPlaneMagic, 4);
    put_u32(out, kPlaneVersion);
    put_u32(out, static_cast<uint32_t>(planes.size()));
    for (const Image& p : planes) {
        put_u32(out, static_cast<uint32_t>(p.height));
        put_u32(out, static_cast<uint32_t>(p.width));
        put_u32(out, static_cast<uint32_t>(p.channels));
        std::vector<float> f(p.data.begin(), p.data.end());
        out.write(reinterpret_cast<const char*>(f.data()),
                  static_cast<std::streamsize>(f.size() * sizeof(float)));
    }
    if (!out.flush()) throw IoError("failed writing " + path);
}

std::vector<Image> read_planes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kPlaneMagic, 4) != 0)
        throw IoError("not a plane container: " + path);
    const uint32_t version = get_u32(in, path);
    if (version != kPlaneVersion)
        throw IoError("unsupported plane container version " + std::to_string(version) + ": " +
                      path);
    const uint32_t count = get_u32(in, path);
    std::vector<Image> planes;
    planes.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t h = get_u32(in, path), w = get_u32(in, path), c = get_u32(in, path);
        if (h == 0 || w == 0 || c == 0 || h > (1u << 20) || w > (1u << 20) || c > 16)
            throw IoError("implausible plane dimensions in " + path);
        Image img(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
        std::vector<float> f(img.data.size());
        if (!in.read(reinterpret_cast<char*>(f.data()),
                     static_cast<std::streamsize>(f.size() * sizeof(float))))
            throw IoError("truncated plane file: " + path);
        for (size_t k = 0; k < f.size(); ++k) img.data[k] = f[k];
        planes.push_back(std::move(img));
    }
    return planes;
}

}  // namespace handbio::io
