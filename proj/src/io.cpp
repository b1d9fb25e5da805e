#include "gs/io.hpp"

#include <nlohmann/json.hpp>
#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace gs::io {

namespace {

// ---------------------------------------------------------------------------
// PLY
// ---------------------------------------------------------------------------

enum class PlyType { kChar, kUChar, kShort, kUShort, kInt, kUInt, kFloat, kDouble };

size_t ply_type_size(PlyType t) {
    switch (t) {
    case PlyType::kChar:
    case PlyType::kUChar:
        return 1;
    case PlyType::kShort:
    case PlyType::kUShort:
        return 2;
    case PlyType::kInt:
    case PlyType::kUInt:
    case PlyType::kFloat:
        return 4;
    case PlyType::kDouble:
        return 8;
    }
    return 0;
}

PlyType parse_ply_type(const std::string& token) {
    if (token == "char" || token == "int8")
        return PlyType::kChar;
    if (token == "uchar" || token == "uint8")
        return PlyType::kUChar;
    if (token == "short" || token == "int16")
        return PlyType::kShort;
    if (token == "ushort" || token == "uint16")
        return PlyType::kUShort;
    if (token == "int" || token == "int32")
        return PlyType::kInt;
    if (token == "uint" || token == "uint32")
        return PlyType::kUInt;
    if (token == "float" || token == "float32")
        return PlyType::kFloat;
    if (token == "double" || token == "float64")
        return PlyType::kDouble;
    throw IoError("ply: unknown property type '" + token + "'");
}

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::kFloat;
};

double read_binary_value(std::istream& in, PlyType t) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(ply_type_size(t)));
    if (!in)
        throw IoError("ply: truncated body");
    switch (t) {
    case PlyType::kChar:
        return static_cast<double>(static_cast<int8_t>(buf[0]));
    case PlyType::kUChar:
        return static_cast<double>(buf[0]);
    case PlyType::kShort: {
        int16_t v;
        std::memcpy(&v, buf, 2);
        return v;
    }
    case PlyType::kUShort: {
        uint16_t v;
        std::memcpy(&v, buf, 2);
        return v;
    }
    case PlyType::kInt: {
        int32_t v;
        std::memcpy(&v, buf, 4);
        return v;
    }
    case PlyType::kUInt: {
        uint32_t v;
        std::memcpy(&v, buf, 4);
        return v;
    }
    case PlyType::kFloat: {
        float v;
        std::memcpy(&v, buf, 4);
        return v;
    }
    case PlyType::kDouble: {
        double v;
        std::memcpy(&v, buf, 8);
        return v;
    }
    }
    return 0.0;
}

} // namespace

PointCloud load_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("ply: cannot open " + path);

    std::string line;
    if (!std::getline(in, line) || (line != "ply" && line != "ply\r"))
        throw IoError("ply: missing magic line");

    bool binary = false;
    bool in_vertex_element = false;
    bool seen_format = false;
    size_t vertex_count = 0;
    std::vector<PlyProperty> props;
    bool header_done = false;

    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "comment" || tok.empty())
            continue;
        if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii")
                binary = false;
            else if (fmt == "binary_little_endian")
                binary = true;
            else
                throw IoError("ply: unsupported format '" + fmt + "'");
            seen_format = true;
        } else if (tok == "element") {
            std::string name;
            size_t count;
            ls >> name >> count;
            if (name == "vertex") {
                in_vertex_element = true;
                vertex_count = count;
            } else {
                in_vertex_element = false;
            }
        } else if (tok == "property") {
            if (!in_vertex_element)
                continue;
            std::string type_tok;
            ls >> type_tok;
            if (type_tok == "list")
                throw IoError("ply: list properties on vertices are unsupported");
            PlyProperty p;
            p.type = parse_ply_type(type_tok);
            ls >> p.name;
            props.push_back(p);
        } else if (tok == "end_header") {
            header_done = true;
            break;
        } else {
            throw IoError("ply: malformed header line '" + line + "'");
        }
    }
    if (!header_done || !seen_format)
        throw IoError("ply: malformed header");

    int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
    for (size_t i = 0; i < props.size(); ++i) {
        const auto& p = props[i];
        if (p.name == "x")
            ix = static_cast<int>(i);
        else if (p.name == "y")
            iy = static_cast<int>(i);
        else if (p.name == "z")
            iz = static_cast<int>(i);
        else if (p.name == "red")
            ir = static_cast<int>(i);
        else if (p.name == "green")
            ig = static_cast<int>(i);
        else if (p.name == "blue")
            ib = static_cast<int>(i);
    }
    if (ix < 0 || iy < 0 || iz < 0)
        throw IoError("ply: missing x/y/z properties");
    if (ir < 0 || ig < 0 || ib < 0)
        throw IoError("ply: missing red/green/blue properties");
    for (int idx : {ir, ig, ib})
        if (props[idx].type != PlyType::kUChar)
            throw IoError("ply: color properties must be 8-bit");

    PointCloud cloud;
    cloud.positions.reserve(vertex_count);
    cloud.colors.reserve(vertex_count);
    std::vector<double> row(props.size());

    for (size_t v = 0; v < vertex_count; ++v) {
        if (binary) {
            for (size_t p = 0; p < props.size(); ++p)
                row[p] = read_binary_value(in, props[p].type);
        } else {
            if (!std::getline(in, line))
                throw IoError("ply: truncated body");
            std::istringstream ls(line);
            for (size_t p = 0; p < props.size(); ++p)
                if (!(ls >> row[p]))
                    throw IoError("ply: truncated vertex line");
        }
        cloud.positions.emplace_back(row[ix], row[iy], row[iz]);
        cloud.colors.emplace_back(row[ir] / 255.0, row[ig] / 255.0, row[ib] / 255.0);
    }
    cloud.validate();
    return cloud;
}

void save_ply(const PointCloud& cloud, const std::string& path, bool binary) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("ply: cannot open for writing: " + path);
    out << "ply\n"
        << "format " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
        << "element vertex " << cloud.count() << "\n"
        << "property float x\nproperty float y\nproperty float z\n"
        << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        << "end_header\n";
    for (size_t i = 0; i < cloud.count(); ++i) {
        const auto& p = cloud.positions[i];
        const auto& c = cloud.colors[i];
        const auto to_byte = [](double v) {
            return static_cast<unsigned>(
                std::clamp(std::floor(v * 255.0 + 0.5), 0.0, 255.0));
        };
        const float xyz[3] = {static_cast<float>(p.x()), static_cast<float>(p.y()),
                              static_cast<float>(p.z())};
        if (binary) {
            const unsigned char rgb[3] = {static_cast<unsigned char>(to_byte(c[0])),
                                          static_cast<unsigned char>(to_byte(c[1])),
                                          static_cast<unsigned char>(to_byte(c[2]))};
            out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
            out.write(reinterpret_cast<const char*>(rgb), sizeof(rgb));
        } else {
            // Print the float-quantized coordinates with enough digits that
            // ASCII and binary encodings load identically.
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %u %u %u\n",
                          static_cast<double>(xyz[0]), static_cast<double>(xyz[1]),
                          static_cast<double>(xyz[2]), to_byte(c[0]), to_byte(c[1]),
                          to_byte(c[2]));
            out << buf;
        }
    }
    if (!out)
        throw IoError("ply: write failed: " + path);
}

// ---------------------------------------------------------------------------
// Cameras
// ---------------------------------------------------------------------------

std::vector<CameraEntry> load_cameras(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cameras: cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("cameras: invalid JSON: ") + e.what());
    }
    if (!doc.is_array())
        throw IoError("cameras: expected a JSON array");

    const auto dir = std::filesystem::path(path).parent_path();
    std::vector<CameraEntry> entries;
    for (const auto& item : doc) {
        for (const char* key :
             {"id", "width", "height", "fx", "fy", "cx", "cy", "R", "t", "image"})
            if (!item.contains(key))
                throw IoError(std::string("cameras: missing field '") + key + "'");
        CameraEntry e;
        e.id = item["id"].get<int>();
        e.camera.width = item["width"].get<int>();
        e.camera.height = item["height"].get<int>();
        e.camera.fx = item["fx"].get<double>();
        e.camera.fy = item["fy"].get<double>();
        e.camera.cx = item["cx"].get<double>();
        e.camera.cy = item["cy"].get<double>();
        const auto r = item["R"].get<std::vector<double>>();
        const auto t = item["t"].get<std::vector<double>>();
        if (r.size() != 9 || t.size() != 3)
            throw IoError("cameras: R must have 9 entries and t 3");
        for (int row = 0; row < 3; ++row)
            for (int col = 0; col < 3; ++col)
                e.camera.R(row, col) = r[row * 3 + col];
        e.camera.t = Eigen::Vector3d(t[0], t[1], t[2]);
        if (item.contains("near"))
            e.camera.near = item["near"].get<double>();
        try {
            e.camera.validate(1e-4);
        } catch (const InvalidParameterError& err) {
            throw IoError(std::string("cameras: id ") + std::to_string(e.id) + ": " +
                          err.what());
        }
        const std::string image = item["image"].get<std::string>();
        std::filesystem::path img_path(image);
        e.image_path = img_path.is_absolute() ? img_path.string() : (dir / img_path).string();
        entries.push_back(std::move(e));
    }
    return entries;
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

ImageF load_image(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp)
        throw IoError("png: cannot open " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        std::fclose(fp);
        throw IoError("png: not a PNG file: " + path);
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("png: out of memory");
    }

    std::vector<png_bytep> rows;
    std::vector<png_byte> pixels;
    int width = 0, height = 0, channels = 0;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("png: decode failed: " + path);
    }

    png_init_io(png, fp);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_byte bit_depth = png_get_bit_depth(png, info);
    if (bit_depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("png: 16-bit depth is unsupported: " + path);
    }

    const png_byte color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    channels = static_cast<int>(png_get_channels(png, info));
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("png: unsupported channel count");
    }

    pixels.resize(static_cast<size_t>(width) * height * channels);
    rows.resize(height);
    for (int y = 0; y < height; ++y)
        rows[y] = pixels.data() + static_cast<size_t>(y) * width * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);

    ImageF img(height, width, channels);
    for (size_t i = 0; i < pixels.size(); ++i)
        img.data[i] = pixels[i] / 255.0;
    return img;
}

void save_image(const ImageF& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw InvalidParameterError("png: only 1- or 3-channel images can be saved");
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp)
        throw IoError("png: cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("png: out of memory");
    }

    std::vector<png_byte> pixels(img.data.size());
    std::vector<png_bytep> rows(img.height);

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("png: encode failed: " + path);
    }

    png_init_io(png, fp);
    png_set_IHDR(png, info, img.width, img.height, 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);

    for (size_t i = 0; i < img.data.size(); ++i) {
        const double v = std::clamp(img.data[i], 0.0, 1.0);
        pixels[i] = static_cast<png_byte>(std::floor(v * 255.0 + 0.5)); // half-up
    }
    for (int y = 0; y < img.height; ++y)
        rows[y] = pixels.data() + static_cast<size_t>(y) * img.width * img.channels;

    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kCkptMagic[4] = {'S', 'G', 'S', '1'};
constexpr uint32_t kCkptVersion = 1;

struct Writer {
    std::vector<uint8_t> bytes;

    void u8(uint8_t v) { bytes.push_back(v); }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i)
            bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i)
            bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void f32(double v) {
        const float f = static_cast<float>(v);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        u32(bits);
    }
};

struct Reader {
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > bytes.size())
            throw IoError("checkpoint: truncated file");
    }
    uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f32() {
        const uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return static_cast<double>(f);
    }
};

void write_sh_group(Writer& w, const std::vector<Rgb>& rows) {
    for (const auto& row : rows)
        for (int ch = 0; ch < 3; ++ch)
            w.f32(row[ch]);
}

void read_sh_group(Reader& r, std::vector<Rgb>& rows) {
    for (auto& row : rows)
        for (int ch = 0; ch < 3; ++ch)
            row[ch] = r.f32();
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const auto& set = ckpt.set;
    if (ckpt.optimizer && ckpt.optimizer->gaussians.size() != set.size())
        throw InvalidParameterError("checkpoint: optimizer state shape mismatch");

    Writer w;
    w.bytes.insert(w.bytes.end(), kCkptMagic, kCkptMagic + 4);
    w.u32(kCkptVersion);
    w.u64(static_cast<uint64_t>(ckpt.iteration));
    w.u32(static_cast<uint32_t>(set.size()));
    w.u32(static_cast<uint32_t>(set.max_degree));

    for (const auto& g : set.gaussians)
        w.u32(static_cast<uint32_t>(g.sh.degree));
    for (const auto& g : set.gaussians)
        for (int k = 0; k < 3; ++k)
            w.f32(g.position[k]);
    for (const auto& g : set.gaussians)
        for (int k = 0; k < 3; ++k)
            w.f32(g.log_scale[k]);
    for (const auto& g : set.gaussians)
        for (int k = 0; k < 4; ++k)
            w.f32(g.rotation[k]);
    for (const auto& g : set.gaussians)
        w.f32(g.opacity_logit);
    for (const auto& g : set.gaussians)
        write_sh_group(w, g.sh.coeffs);

    w.u8(ckpt.optimizer ? 1 : 0);
    if (ckpt.optimizer) {
        const auto& opt = *ckpt.optimizer;
        w.u64(static_cast<uint64_t>(opt.step));
        for (const auto& s : opt.gaussians) {
            for (int k = 0; k < 3; ++k)
                w.f32(s.m_position[k]);
            for (int k = 0; k < 3; ++k)
                w.f32(s.m_log_scale[k]);
            for (int k = 0; k < 4; ++k)
                w.f32(s.m_rotation[k]);
            w.f32(s.m_opacity);
            write_sh_group(w, s.m_sh);
        }
        for (const auto& s : opt.gaussians) {
            for (int k = 0; k < 3; ++k)
                w.f32(s.v_position[k]);
            for (int k = 0; k < 3; ++k)
                w.f32(s.v_log_scale[k]);
            for (int k = 0; k < 4; ++k)
                w.f32(s.v_rotation[k]);
            w.f32(s.v_opacity);
            write_sh_group(w, s.v_sh);
        }
    }

    w.u32(static_cast<uint32_t>(ckpt.config_json.size()));
    w.bytes.insert(w.bytes.end(), ckpt.config_json.begin(), ckpt.config_json.end());

    const uint32_t crc = static_cast<uint32_t>(
        ::crc32(0L, w.bytes.data(), static_cast<uInt>(w.bytes.size())));
    w.u32(crc);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("checkpoint: cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(w.bytes.data()),
              static_cast<std::streamsize>(w.bytes.size()));
    if (!out)
        throw IoError("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("checkpoint: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 4 + 4 + 8 + 4 + 4 + 1 + 4 + 4)
        throw IoError("checkpoint: truncated file");
    if (std::memcmp(bytes.data(), kCkptMagic, 4) != 0)
        throw IoError("checkpoint: magic mismatch");

    const size_t body_len = bytes.size() - 4;
    uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i)
        stored_crc |= static_cast<uint32_t>(bytes[body_len + i]) << (8 * i);
    const uint32_t actual_crc =
        static_cast<uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(body_len)));
    if (stored_crc != actual_crc)
        throw IoError("checkpoint: CRC mismatch");

    Reader r{bytes};
    r.pos = 4;
    Checkpoint ckpt;
    ckpt.version = r.u32();
    if (ckpt.version != kCkptVersion)
        throw IoError("checkpoint: unsupported version");
    ckpt.iteration = static_cast<int64_t>(r.u64());
    const uint32_t count = r.u32();
    ckpt.set.max_degree = static_cast<int>(r.u32());
    if (count > 100000000u)
        throw IoError("checkpoint: implausible Gaussian count");

    ckpt.set.gaussians.resize(count);
    for (auto& g : ckpt.set.gaussians) {
        const uint32_t degree = r.u32();
        if (degree > static_cast<uint32_t>(ckpt.set.max_degree))
            throw IoError("checkpoint: SH degree exceeds max degree");
        g.sh = SHBank::zeros(static_cast<int>(degree));
    }
    for (auto& g : ckpt.set.gaussians)
        for (int k = 0; k < 3; ++k)
            g.position[k] = r.f32();
    for (auto& g : ckpt.set.gaussians)
        for (int k = 0; k < 3; ++k)
            g.log_scale[k] = r.f32();
    for (auto& g : ckpt.set.gaussians)
        for (int k = 0; k < 4; ++k)
            g.rotation[k] = r.f32();
    for (auto& g : ckpt.set.gaussians)
        g.opacity_logit = r.f32();
    for (auto& g : ckpt.set.gaussians)
        read_sh_group(r, g.sh.coeffs);

    const uint8_t has_optimizer = r.u8();
    if (has_optimizer) {
        OptimizerState opt = OptimizerState::zeros_like(ckpt.set);
        opt.step = static_cast<int64_t>(r.u64());
        for (auto& s : opt.gaussians) {
            for (int k = 0; k < 3; ++k)
                s.m_position[k] = r.f32();
            for (int k = 0; k < 3; ++k)
                s.m_log_scale[k] = r.f32();
            for (int k = 0; k < 4; ++k)
                s.m_rotation[k] = r.f32();
            s.m_opacity = r.f32();
            read_sh_group(r, s.m_sh);
        }
        for (auto& s : opt.gaussians) {
            for (int k = 0; k < 3; ++k)
                s.v_position[k] = r.f32();
            for (int k = 0; k < 3; ++k)
                s.v_log_scale[k] = r.f32();
            for (int k = 0; k < 4; ++k)
                s.v_rotation[k] = r.f32();
            s.v_opacity = r.f32();
            read_sh_group(r, s.v_sh);
        }
        ckpt.optimizer = std::move(opt);
    }

    const uint32_t config_len = r.u32();
    r.need(config_len);
    ckpt.config_json.assign(reinterpret_cast<const char*>(bytes.data() + r.pos), config_len);
    r.pos += config_len;
    if (r.pos != body_len)
        throw IoError("checkpoint: trailing bytes");
    return ckpt;
}

} // namespace gs::io
