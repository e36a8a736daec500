#pragma once
// File formats: PNG rasters, 16-bit normal maps, masks, UVF1 fields,
// JSON manifests and solve reports.
//
// UVF1 layout: "UVF1", u32 width, u32 height (little endian), then
// width*height (u, v) pairs of little-endian f32 in row-major order.
// Background pixels hold quiet NaN in both components.

#include <png.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <csetjmp>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pelage/field.hpp"
#include "pelage/uv_solver.hpp"

namespace pelage::io {

namespace fs = std::filesystem;

/// Decoded PNG samples, one uint16 per channel whatever the bit depth.
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 0;   // 1 gray, 2 gray+alpha, 3 rgb, 4 rgba
    int bit_depth = 0;  // 8 or 16 after expansion
    std::vector<std::uint16_t> samples;

    [[nodiscard]] std::uint16_t at(int x, int y, int c) const {
        return samples[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

namespace detail {

struct PngFile {
    std::FILE* fp = nullptr;
    explicit PngFile(const std::string& path, const char* mode) : fp(std::fopen(path.c_str(), mode)) {}
    ~PngFile() {
        if (fp) std::fclose(fp);
    }
    PngFile(const PngFile&) = delete;
    PngFile& operator=(const PngFile&) = delete;
};

struct ErrorState {
    std::jmp_buf jump;
    char message[256] = {};
};

inline void on_png_error(png_structp png, png_const_charp msg) {
    auto* st = static_cast<ErrorState*>(png_get_error_ptr(png));
    std::snprintf(st->message, sizeof st->message, "%s", msg);
    std::longjmp(st->jump, 1);
}

inline void on_png_warning(png_structp, png_const_charp) {}

}  // namespace detail

[[nodiscard]] inline Raster read_png(const std::string& path) {
    detail::PngFile file(path, "rb");
    if (!file.fp) throw Error("cannot open image: " + path);
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file.fp) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw Error("not a PNG file: " + path);

    detail::ErrorState err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::on_png_error, detail::on_png_warning);
    if (!png) throw Error("libpng initialisation failed");
    png_infop info = png_create_info_struct(png);
    Raster out;
    std::vector<png_bytep> rows;
    std::vector<unsigned char> data;
    if (setjmp(err.jump)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("unreadable PNG " + path + ": " + err.message);
    }
    png_init_io(png, file.fp);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_read_update_info(png, info);

    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    data.resize(stride * static_cast<std::size_t>(out.height));
    rows.resize(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) rows[static_cast<std::size_t>(y)] = data.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.samples[i] = out.bit_depth == 16
                             ? static_cast<std::uint16_t>((data[2 * i] << 8) | data[2 * i + 1])
                             : data[i];
    return out;
}

/// Writes interleaved samples; bit_depth 8 or 16, channels 1, 3 or 4.
inline void write_png(const std::string& path, int width, int height, int channels, int bit_depth,
                      const std::vector<std::uint16_t>& samples) {
    if (samples.size() != static_cast<std::size_t>(width) * height * channels)
        throw Error("write_png: sample count does not match the image size");
    const int color = channels == 1 ? PNG_COLOR_TYPE_GRAY
                      : channels == 3 ? PNG_COLOR_TYPE_RGB
                                      : PNG_COLOR_TYPE_RGB_ALPHA;
    const std::size_t stride = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
    std::vector<unsigned char> data(stride * height);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (bit_depth == 16) {
            data[2 * i] = static_cast<unsigned char>(samples[i] >> 8);
            data[2 * i + 1] = static_cast<unsigned char>(samples[i] & 0xff);
        } else {
            data[i] = static_cast<unsigned char>(samples[i]);
        }
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = data.data() + stride * y;

    detail::PngFile file(path, "wb");
    if (!file.fp) throw Error("cannot write image: " + path);
    detail::ErrorState err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::on_png_error, detail::on_png_warning);
    if (!png) throw Error("libpng initialisation failed");
    png_infop info = png_create_info_struct(png);
    if (setjmp(err.jump)) {
        png_destroy_write_struct(&png, &info);
        throw Error("failed writing PNG " + path + ": " + err.message);
    }
    png_init_io(png, file.fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline void write_rgb(const std::string& path, const RgbImage& img) {
    std::vector<std::uint16_t> s;
    s.reserve(img.pixels.size() * 3);
    for (const auto& p : img.pixels) s.insert(s.end(), {p.r, p.g, p.b});
    write_png(path, img.width, img.height, 3, 8, s);
}

inline void write_rgba(const std::string& path, const RgbaImage& img) {
    std::vector<std::uint16_t> s;
    s.reserve(img.pixels.size() * 4);
    for (const auto& p : img.pixels) s.insert(s.end(), {p.r, p.g, p.b, p.a});
    write_png(path, img.width, img.height, 4, 8, s);
}

/// 8-bit RGB (alpha dropped) or gray (replicated).
[[nodiscard]] inline RgbImage read_rgb(const std::string& path) {
    const Raster r = read_png(path);
    if (r.bit_depth != 8) throw Error("expected an 8-bit image: " + path);
    RgbImage img(r.width, r.height);
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x) {
            const bool gray = r.channels < 3;
            img.at(x, y) = {static_cast<unsigned char>(r.at(x, y, 0)),
                            static_cast<unsigned char>(r.at(x, y, gray ? 0 : 1)),
                            static_cast<unsigned char>(r.at(x, y, gray ? 0 : 2))};
        }
    return img;
}

/// 8-bit image with alpha; images without alpha read as fully opaque.
[[nodiscard]] inline RgbaImage read_rgba(const std::string& path) {
    const Raster r = read_png(path);
    if (r.bit_depth != 8) throw Error("expected an 8-bit image: " + path);
    RgbaImage img(r.width, r.height);
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x) {
            const bool gray = r.channels < 3;
            const bool alpha = r.channels == 2 || r.channels == 4;
            img.at(x, y) = {static_cast<unsigned char>(r.at(x, y, 0)),
                            static_cast<unsigned char>(r.at(x, y, gray ? 0 : 1)),
                            static_cast<unsigned char>(r.at(x, y, gray ? 0 : 2)),
                            static_cast<unsigned char>(alpha ? r.at(x, y, r.channels - 1) : 255)};
        }
    return img;
}

/// Foreground where the 8-bit gray value exceeds 127.
[[nodiscard]] inline MaskField read_mask(const std::string& path) {
    const Raster r = read_png(path);
    if (r.bit_depth != 8 || r.channels != 1) throw Error("mask must be 8-bit grayscale: " + path);
    MaskField m(r.width, r.height);
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x)
            if (r.at(x, y, 0) > 127) {
                m.at(x, y) = 1;
                m.valid[m.index(x, y)] = 1;
            }
    return m;
}

inline void write_mask(const std::string& path, const MaskField& mask) {
    std::vector<std::uint16_t> s(mask.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = mask.valid[i] ? 255 : 0;
    write_png(path, mask.width, mask.height, 1, 8, s);
}

[[nodiscard]] inline std::uint16_t encode_normal_component(double n) {
    return static_cast<std::uint16_t>(std::lround(std::clamp((n + 1.0) * 0.5, 0.0, 1.0) * 65535.0));
}

[[nodiscard]] inline Vec3 decode_normal(std::uint16_t r, std::uint16_t g, std::uint16_t b, bool& valid) {
    const Vec3 raw{2.0 * (r / 65535.0) - 1.0, 2.0 * (g / 65535.0) - 1.0, 2.0 * (b / 65535.0) - 1.0};
    const double len = std::sqrt(raw.x * raw.x + raw.y * raw.y + raw.z * raw.z);
    valid = len >= 0.1 && raw.z > 0.0;
    if (len == 0.0) return raw;
    return {raw.x / len, raw.y / len, raw.z / len};
}

/// 16-bit RGB; invalid pixels are written as (0, 0, 0).
inline void write_normal_map(const std::string& path, const NormalField& normals) {
    std::vector<std::uint16_t> s(normals.size() * 3, 0);
    for (std::size_t i = 0; i < normals.size(); ++i) {
        if (!normals.valid[i]) continue;
        const Vec3& n = normals.values[i];
        s[3 * i] = encode_normal_component(n.x);
        s[3 * i + 1] = encode_normal_component(n.y);
        s[3 * i + 2] = encode_normal_component(n.z);
    }
    write_png(path, normals.width, normals.height, 3, 16, s);
}

[[nodiscard]] inline NormalField read_normal_map(const std::string& path) {
    const Raster r = read_png(path);
    if (r.bit_depth != 16 || r.channels != 3)
        throw Error("normal map must be 16-bit RGB (got " + std::to_string(r.bit_depth) + "-bit, " +
                    std::to_string(r.channels) + " channels): " + path);
    NormalField nf(r.width, r.height);
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x) {
            bool valid = false;
            const Vec3 n = decode_normal(r.at(x, y, 0), r.at(x, y, 1), r.at(x, y, 2), valid);
            nf.at(x, y) = n;
            nf.valid[nf.index(x, y)] = valid ? 1 : 0;
        }
    return nf;
}

/// Width and height from the PNG header alone.
[[nodiscard]] inline std::array<int, 2> png_size(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open image: " + path);
    unsigned char head[24];
    if (!in.read(reinterpret_cast<char*>(head), 24) || png_sig_cmp(head, 0, 8) != 0)
        throw Error("not a PNG file: " + path);
    auto be32 = [&](int o) {
        return int((std::uint32_t(head[o]) << 24) | (std::uint32_t(head[o + 1]) << 16) |
                   (std::uint32_t(head[o + 2]) << 8) | std::uint32_t(head[o + 3]));
    };
    return {be32(16), be32(20)};
}

// ---- UVF1 ----

namespace detail {

inline void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}
inline void put_f32(std::vector<unsigned char>& b, float f) { put_u32(b, std::bit_cast<std::uint32_t>(f)); }
inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

}  // namespace detail

[[nodiscard]] inline std::vector<unsigned char> encode_uv_field(const UVField& uv) {
    std::vector<unsigned char> b;
    b.reserve(12 + 8 * uv.size());
    for (char c : {'U', 'V', 'F', '1'}) b.push_back(static_cast<unsigned char>(c));
    detail::put_u32(b, static_cast<std::uint32_t>(uv.width));
    detail::put_u32(b, static_cast<std::uint32_t>(uv.height));
    const float nan = std::numeric_limits<float>::quiet_NaN();
    for (std::size_t i = 0; i < uv.size(); ++i) {
        const bool valid = uv.valid[i];
        detail::put_f32(b, valid ? static_cast<float>(uv.values[i].x) : nan);
        detail::put_f32(b, valid ? static_cast<float>(uv.values[i].y) : nan);
    }
    return b;
}

[[nodiscard]] inline UVField decode_uv_field(const std::vector<unsigned char>& b) {
    if (b.size() < 12) throw Error("truncated UV field header: expected 12 bytes, got " + std::to_string(b.size()));
    if (std::memcmp(b.data(), "UVF", 3) != 0) throw Error("bad magic: not a UV field file");
    if (b[3] != '1') throw Error("unsupported version");
    const std::uint32_t w = detail::get_u32(b.data() + 4), h = detail::get_u32(b.data() + 8);
    const std::uint64_t expected = 12 + 8ull * w * h;
    if (b.size() != expected)
        throw Error((b.size() < expected ? "truncated UV field payload: expected " : "oversized UV field: expected ") +
                    std::to_string(expected) + " bytes, got " + std::to_string(b.size()));
    UVField uv(static_cast<int>(w), static_cast<int>(h));
    for (std::size_t i = 0; i < uv.size(); ++i) {
        const float u = detail::get_f32(b.data() + 12 + 8 * i), v = detail::get_f32(b.data() + 16 + 8 * i);
        if (std::isnan(u) || std::isnan(v)) continue;
        uv.values[i] = {u, v};
        uv.valid[i] = 1;
    }
    return uv;
}

inline void write_uv_field(const std::string& path, const UVField& uv) {
    const auto bytes = encode_uv_field(uv);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write UV field: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing UV field: " + path);
}

[[nodiscard]] inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

[[nodiscard]] inline UVField read_uv_field(const std::string& path) {
    try {
        return decode_uv_field(read_file(path));
    } catch (const Error& e) {
        throw Error(path + ": " + e.what());
    }
}

// ---- manifest ----

struct ManifestEntry {
    std::string id;
    std::string identity;
    fs::path image;
    fs::path normals;
    fs::path mask;
    std::optional<fs::path> unwrapped;
};

struct Manifest {
    int version = 1;
    std::vector<ManifestEntry> entries;
    fs::path base;  // directory the relative paths resolve against
};

/// Parses and validates a manifest. With check_files, every referenced file
/// must exist and image, normals and mask must agree in size.
[[nodiscard]] inline Manifest parse_manifest(const std::string& text, const fs::path& base, bool check_files) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string("manifest is not valid JSON: ") + e.what());
    }
    Manifest m;
    m.base = base;
    if (!j.is_object() || !j.contains("version") || !j["version"].is_number_integer())
        throw Error("manifest: missing integer 'version'");
    m.version = j["version"].get<int>();
    if (m.version != 1) throw Error("manifest: unsupported version " + std::to_string(m.version));
    if (!j.contains("entries") || !j["entries"].is_array()) throw Error("manifest: missing 'entries' array");
    std::set<std::string> ids;
    for (const auto& e : j["entries"]) {
        auto str = [&](const char* key) {
            if (!e.contains(key) || !e[key].is_string())
                throw Error(std::string("manifest entry lacks string field '") + key + "'");
            return e[key].get<std::string>();
        };
        ManifestEntry entry{str("id"), str("identity"), str("image"), str("normals"), str("mask"), std::nullopt};
        if (e.contains("unwrapped") && !e["unwrapped"].is_null()) entry.unwrapped = fs::path(str("unwrapped"));
        if (entry.id.empty()) throw Error("manifest: empty id");
        if (!ids.insert(entry.id).second) throw Error("manifest: duplicate id '" + entry.id + "'");
        m.entries.push_back(std::move(entry));
    }
    if (m.entries.empty()) throw Error("manifest has no entries");
    if (check_files) {
        for (const auto& e : m.entries) {
            auto need = [&](const fs::path& p, const char* what) {
                if (!fs::exists(base / p))
                    throw Error("manifest entry '" + e.id + "': missing " + what + " file " + (base / p).string());
            };
            need(e.image, "image");
            need(e.normals, "normals");
            need(e.mask, "mask");
            if (e.unwrapped) need(*e.unwrapped, "unwrapped");
            const auto si = png_size((base / e.image).string());
            const auto sn = png_size((base / e.normals).string());
            const auto sm = png_size((base / e.mask).string());
            if (si != sn || si != sm)
                throw Error("manifest entry '" + e.id + "': image, normals and mask sizes differ");
        }
    }
    return m;
}

[[nodiscard]] inline Manifest load_manifest(const std::string& path, bool check_files = true) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open manifest: " + path);
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return parse_manifest(text, fs::path(path).parent_path(), check_files);
}

[[nodiscard]] inline std::string manifest_to_string(const Manifest& m) {
    nlohmann::ordered_json j;
    j["version"] = m.version;
    j["entries"] = nlohmann::ordered_json::array();
    for (const auto& e : m.entries) {
        nlohmann::ordered_json o;
        o["id"] = e.id;
        o["identity"] = e.identity;
        o["image"] = e.image.generic_string();
        o["normals"] = e.normals.generic_string();
        o["mask"] = e.mask.generic_string();
        if (e.unwrapped) o["unwrapped"] = e.unwrapped->generic_string();
        j["entries"].push_back(o);
    }
    return j.dump(2) + "\n";
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path);
    out << text;
    if (!out) throw Error("failed writing file: " + path);
}

[[nodiscard]] inline std::string solve_report_to_json(const std::string& id, const std::string& solver,
                                                      const uv::SolveReport& r) {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["solver"] = solver;
    j["pretrain_epochs_run"] = r.pretrain_epochs_run;
    j["train_epochs_run"] = r.train_epochs_run;
    j["final_residual"] = r.final_residual;
    j["pretrain_loss"] = r.pretrain_loss;
    j["train_loss"] = r.train_loss;
    return j.dump(2) + "\n";
}

}  // namespace pelage::io
